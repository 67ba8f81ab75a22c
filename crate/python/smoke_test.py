"""Smoke test for the ttcomp Python module.

Build and install first:

    pip install --no-build-isolation ./crates/python
    python python/smoke_test.py
"""

import json
import math
import os
import tempfile

import ttcomp


def check(cond, msg):
    if not cond:
        raise SystemExit(f"FAIL: {msg}")
    print(f"ok   {msg}")


def main():
    shape, ranks = [6, 6, 6], [2, 2]
    a = ttcomp.TensorTrain.gaussian(shape, ranks, seed=1)
    check(a.shape == shape and a.ranks == ranks, "gaussian train has requested shape and ranks")

    dense = a.to_dense()
    check(len(dense) == 216, "to_dense returns all entries")
    check(abs(a[[1, 2, 3]] - dense[1 + 6 * (2 + 6 * 3)]) < 1e-12, "indexing is first-index-fastest")

    b = ttcomp.TensorTrain.from_dense(shape, dense, ranks)
    check((a - b).norm() <= 1e-10 * a.norm(), "TT-SVD recovers an exact low-rank tensor")

    idx = ttcomp.sample(shape, 500, seed=2)
    vals = [a[w] for w in idx]
    tidx = ttcomp.sample(shape, 200, seed=3)
    tvals = [a[w] for w in tidx]
    x, info = ttcomp.complete(shape, idx, vals, ranks, seed=4, test_indices=tidx, test_values=tvals)
    check(info["success"], f"completion succeeds (test error {info['test_error']:.2e})")
    check((x - a).norm() < 1e-6 * a.norm(), "completed tensor matches the truth")

    rep = ttcomp.coherence(a)
    check(rep["projection_coherence"] <= rep["c1"] + 1e-12, "projection coherence within C1")

    rip = ttcomp.rip(a, ttcomp.sample(shape, 2000, seed=5))
    check(0.0 <= rip["eps"] < 1.0, f"RIP constant at rho~9 is below one ({rip['eps']:.3f})")

    rows = ttcomp.chi_median(5, 2, samples=200_000, seed=6)
    check(abs(rows[0]["median"] - 4.3515) < 0.05, "median of chi2(5)")

    cfg = {"n": [6], "d": [3], "rank": 2, "samples": {"absolute": [20, 400]}, "trials": 2}
    csv = ttcomp.phase_plot(json.dumps(cfg))
    lines = csv.strip().splitlines()
    check(len(lines) == 3 and lines[0].startswith("d,n,m,samples"), "phase plot CSV")
    freq = [float(l.split(",")[6]) for l in lines[1:]]
    check(freq == [0.0, 1.0], f"phase plot frequencies {freq}")

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "a.tt")
        a.save(path)
        c = ttcomp.TensorTrain.load(path)
        check(c.to_dense() == dense, "save/load round-trip is bit-exact")

    try:
        ttcomp.TensorTrain.gaussian([4, 4], [9])
    except ValueError as e:
        check("rank" in str(e), "invalid rank raises ValueError")
    else:
        raise SystemExit("FAIL: invalid rank accepted")

    print(f"ttcomp {ttcomp.__version__}: all smoke checks passed")


if __name__ == "__main__":
    main()
