pub mod arrangement;
pub mod certificate;
pub mod conv;
pub mod dense;
pub mod dss;
pub mod error;
pub mod gaussian;
pub mod network;
pub mod numeric;
pub mod stability;

pub use certificate::{Collision, InjectivityCertificate, Method, Verdict};
pub use error::{Error, Result};
pub use numeric::{IndexSet, Matrix, Prng};
