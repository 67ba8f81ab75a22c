//! File formats.
//!
//! All binary formats are little-endian and start with a 4-byte magic and
//! a `u32` format version (currently 1).
//!
//! Dense tensor (`TTCD`):
//!
//! ```text
//! magic "TTCD" | u32 version | u32 d | u64 n_1 … n_d | f64 × ∏n_k
//! ```
//!
//! Data is first-index-fastest: entry `(i_1,…,i_d)` (0-based) sits at
//! `i_1 + n_1 (i_2 + n_2 (i_3 + …))`.
//!
//! Tensor train (`TTCT`):
//!
//! ```text
//! magic "TTCT" | u32 version | u32 d | u64 n_1 … n_d | u64 r_0 … r_d | cores
//! ```
//!
//! with `r_0 = r_d = 1`, followed by core k as `r_{k−1} n_k r_k` doubles,
//! element `(a, i, b)` at `a + r_{k−1}(i + n_k b)`.
//!
//! Side information (`TTCQ`):
//!
//! ```text
//! magic "TTCQ" | u32 version | u32 d | d × (u64 n_k | u64 m_k | f64 × n_k m_k)
//! ```
//!
//! each `Q_k` stored column-major.
//!
//! Observations are CSV with header `i1,…,id,value` and 1-based indices,
//! or JSON `{"shape": [...], "indices": [[...], ...], "values": [...]}`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TtError};
use crate::sampling::{Observations, SampleSet};
use crate::sideinfo::SideInfo;
use crate::tensor::{DenseTensor, MultiIndex, Shape};
use crate::tt::{TensorTrain, TtCore};

pub const FORMAT_VERSION: u32 = 1;

const DENSE_MAGIC: &[u8; 4] = b"TTCD";
const TT_MAGIC: &[u8; 4] = b"TTCT";
const SIDE_MAGIC: &[u8; 4] = b"TTCQ";

/// Guard against absurd headers before allocating.
const MAX_ELEMENTS: u64 = 1 << 31;

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner.read_exact(&mut b)?;
        Ok(b)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn size(&mut self) -> Result<usize> {
        let v = self.u64()?;
        if v > MAX_ELEMENTS {
            return Err(TtError::Format(format!("size field {v} too large")));
        }
        Ok(v as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let mut buf = vec![0u8; n * 8];
        self.inner.read_exact(&mut buf)?;
        Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<usize> {
        let m: [u8; 4] = self.bytes()?;
        if &m != magic {
            return Err(TtError::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&m),
                String::from_utf8_lossy(magic)
            )));
        }
        let v = self.u32()?;
        if v != FORMAT_VERSION {
            return Err(TtError::Format(format!("unsupported format version {v}")));
        }
        let d = self.u32()? as usize;
        if !(2..=64).contains(&d) {
            return Err(TtError::Format(format!("order {d} out of range")));
        }
        Ok(d)
    }

    fn finish(&mut self) -> Result<()> {
        let mut extra = [0u8; 1];
        if self.inner.read(&mut extra)? != 0 {
            return Err(TtError::Format("trailing bytes after payload".into()));
        }
        Ok(())
    }
}

fn put_header<W: Write>(w: &mut W, magic: &[u8; 4], d: usize) -> Result<()> {
    w.write_all(magic)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(d as u32).to_le_bytes())?;
    Ok(())
}

fn put_u64s<W: Write>(w: &mut W, v: impl IntoIterator<Item = usize>) -> Result<()> {
    for x in v {
        w.write_all(&(x as u64).to_le_bytes())?;
    }
    Ok(())
}

fn put_f64s<W: Write>(w: &mut W, v: &[f64]) -> Result<()> {
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_dense<W: Write>(mut w: W, x: &DenseTensor) -> Result<()> {
    put_header(&mut w, DENSE_MAGIC, x.shape().order())?;
    put_u64s(&mut w, x.shape().dims().iter().copied())?;
    put_f64s(&mut w, x.data())?;
    w.flush()?;
    Ok(())
}

pub fn read_dense<R: Read>(r: R) -> Result<DenseTensor> {
    let mut r = Reader { inner: r };
    let d = r.header(DENSE_MAGIC)?;
    let dims = (0..d).map(|_| r.size()).collect::<Result<Vec<_>>>()?;
    let shape = Shape::new(dims)?;
    let n = shape
        .checked_numel()
        .filter(|&n| n as u64 <= MAX_ELEMENTS)
        .ok_or_else(|| TtError::Format("tensor too large".into()))?;
    let data = r.f64s(n)?;
    r.finish()?;
    DenseTensor::new(shape, data)
}

pub fn write_tt<W: Write>(mut w: W, x: &TensorTrain) -> Result<()> {
    put_header(&mut w, TT_MAGIC, x.order())?;
    put_u64s(&mut w, x.shape().dims().iter().copied())?;
    put_u64s(&mut w, x.ranks().with_boundary())?;
    for c in x.cores() {
        put_f64s(&mut w, c.data())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tt<R: Read>(r: R) -> Result<TensorTrain> {
    let mut r = Reader { inner: r };
    let d = r.header(TT_MAGIC)?;
    let dims = (0..d).map(|_| r.size()).collect::<Result<Vec<_>>>()?;
    let ranks = (0..=d).map(|_| r.size()).collect::<Result<Vec<_>>>()?;
    let mut cores = Vec::with_capacity(d);
    for k in 0..d {
        let len = ranks[k]
            .checked_mul(dims[k])
            .and_then(|v| v.checked_mul(ranks[k + 1]))
            .filter(|&v| v as u64 <= MAX_ELEMENTS)
            .ok_or_else(|| TtError::Format(format!("core {} too large", k + 1)))?;
        cores.push(TtCore::new(ranks[k], dims[k], ranks[k + 1], r.f64s(len)?)?);
    }
    r.finish()?;
    TensorTrain::new(cores)
}

pub fn write_side<W: Write>(mut w: W, q: &SideInfo) -> Result<()> {
    put_header(&mut w, SIDE_MAGIC, q.factors().len())?;
    for f in q.factors() {
        put_u64s(&mut w, [f.nrows(), f.ncols()])?;
        put_f64s(&mut w, f.as_slice())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_side<R: Read>(r: R) -> Result<SideInfo> {
    let mut r = Reader { inner: r };
    let d = r.header(SIDE_MAGIC)?;
    let mut factors = Vec::with_capacity(d);
    for _ in 0..d {
        let n = r.size()?;
        let m = r.size()?;
        let len = n
            .checked_mul(m)
            .filter(|&v| v as u64 <= MAX_ELEMENTS)
            .ok_or_else(|| TtError::Format("factor too large".into()))?;
        factors.push(DMatrix::from_vec(n, m, r.f64s(len)?));
    }
    r.finish()?;
    SideInfo::new(factors)
}

/// Which of the three binary formats a file holds, from its magic.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryKind {
    Dense,
    Tt,
    Side,
}

pub fn sniff(path: &Path) -> Result<BinaryKind> {
    let mut m = [0u8; 4];
    File::open(path)?.read_exact(&mut m)?;
    match &m {
        DENSE_MAGIC => Ok(BinaryKind::Dense),
        TT_MAGIC => Ok(BinaryKind::Tt),
        SIDE_MAGIC => Ok(BinaryKind::Side),
        _ => Err(TtError::Format(format!("{}: unknown file type", path.display()))),
    }
}

pub fn save_dense(path: &Path, x: &DenseTensor) -> Result<()> {
    write_dense(BufWriter::new(File::create(path)?), x)
}

pub fn load_dense(path: &Path) -> Result<DenseTensor> {
    read_dense(BufReader::new(File::open(path)?))
}

pub fn save_tt(path: &Path, x: &TensorTrain) -> Result<()> {
    write_tt(BufWriter::new(File::create(path)?), x)
}

pub fn load_tt(path: &Path) -> Result<TensorTrain> {
    read_tt(BufReader::new(File::open(path)?))
}

pub fn save_side(path: &Path, q: &SideInfo) -> Result<()> {
    write_side(BufWriter::new(File::create(path)?), q)
}

pub fn load_side(path: &Path) -> Result<SideInfo> {
    read_side(BufReader::new(File::open(path)?))
}

pub fn write_observations_csv<W: Write>(mut w: W, obs: &Observations) -> Result<()> {
    let d = obs.shape().order();
    let head: Vec<String> = (1..=d).map(|k| format!("i{k}")).chain(["value".into()]).collect();
    writeln!(w, "{}", head.join(","))?;
    for (j, v) in obs.values().iter().enumerate() {
        for i in obs.sample().entry(j) {
            write!(w, "{},", i + 1)?;
        }
        writeln!(w, "{v:e}")?;
    }
    w.flush()?;
    Ok(())
}

/// CSV observations carry no shape; it is supplied by the caller.
pub fn read_observations_csv<R: BufRead>(r: R, shape: &Shape) -> Result<Observations> {
    let d = shape.order();
    let mut lines = r.lines();
    let head = lines.next().ok_or_else(|| TtError::Format("empty observation file".into()))??;
    let cols: Vec<&str> = head.split(',').map(str::trim).collect();
    let expect: Vec<String> = (1..=d).map(|k| format!("i{k}")).chain(["value".into()]).collect();
    if cols != expect {
        return Err(TtError::Format(format!("header {head:?}, expected {:?}", expect.join(","))));
    }
    let mut idx = Vec::new();
    let mut vals = Vec::new();
    for (ln, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != d + 1 {
            return Err(TtError::Format(format!("line {}: {} fields, expected {}", ln + 2, f.len(), d + 1)));
        }
        let bad = |e: String| TtError::Format(format!("line {}: {e}", ln + 2));
        let mi = f[..d]
            .iter()
            .map(|s| s.parse::<usize>().map_err(|e| bad(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        idx.push(MultiIndex::new(mi));
        vals.push(f[d].parse::<f64>().map_err(|e| bad(e.to_string()))?);
    }
    Observations::new(SampleSet::from_indices(shape.clone(), &idx)?, vals)
}

#[derive(Serialize, Deserialize)]
struct ObservationsJson {
    shape: Vec<usize>,
    indices: Vec<Vec<usize>>,
    values: Vec<f64>,
}

pub fn write_observations_json<W: Write>(w: W, obs: &Observations) -> Result<()> {
    let doc = ObservationsJson {
        shape: obs.shape().dims().to_vec(),
        indices: (0..obs.values().len())
            .map(|j| obs.sample().entry(j).iter().map(|i| i + 1).collect())
            .collect(),
        values: obs.values().to_vec(),
    };
    serde_json::to_writer(w, &doc)?;
    Ok(())
}

pub fn read_observations_json<R: Read>(r: R) -> Result<Observations> {
    let doc: ObservationsJson = serde_json::from_reader(r)?;
    let shape = Shape::new(doc.shape)?;
    let idx: Vec<MultiIndex> = doc.indices.into_iter().map(MultiIndex::new).collect();
    Observations::new(SampleSet::from_indices(shape, &idx)?, doc.values)
}

/// Load observations by extension: `.json` carries its own shape, CSV
/// needs `shape`.
pub fn load_observations(path: &Path, shape: Option<&Shape>) -> Result<Observations> {
    let f = BufReader::new(File::open(path)?);
    if path.extension().is_some_and(|e| e == "json") {
        return read_observations_json(f);
    }
    let shape = shape.ok_or_else(|| {
        TtError::InvalidArgument(format!("{}: CSV observations need a shape", path.display()))
    })?;
    read_observations_csv(f, shape)
}

pub fn save_observations(path: &Path, obs: &Observations) -> Result<()> {
    let f = BufWriter::new(File::create(path)?);
    if path.extension().is_some_and(|e| e == "json") {
        write_observations_json(f, obs)
    } else {
        write_observations_csv(f, obs)
    }
}
