pub mod coherence;
pub mod error;
pub mod harness;
pub mod io;
mod kernel;
pub mod linalg;
pub mod oracle;
pub mod rgd;
pub mod rng;
pub mod sampling;
pub mod sideinfo;
pub mod tangent;
pub mod tensor;
pub mod tt;

pub use error::{Result, TtError};
pub use tangent::{ProjectorHandle, TangentVector};
pub use tensor::{DenseTensor, MultiIndex, Shape, SparseTensor};
pub use tt::{RankTuple, TensorTrain, TtCore};
