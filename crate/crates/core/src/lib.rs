//! Quantum channel engineering: representations, named noise, dilations,
//! circuit simulation, noise tailoring and event-driven network runs.

pub mod channel;
pub mod circuit;
pub mod dilation;
pub mod error;
pub mod figures;
pub mod linalg;
pub mod netsim;
pub mod noise;
pub mod optim;
pub mod random;
pub mod serde_util;
pub mod tailor;

pub use channel::{Channel, DensityMatrix, KrausSet, Superoperator};
pub use error::{Error, Result};
pub use linalg::CMatrix;
