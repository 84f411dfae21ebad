pub mod beable;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod fpe;
pub mod grid;
pub mod sde;
pub mod tridiag;
pub mod wavefunction;

pub use error::{Error, Result};
pub use grid::{Domain1D, DomainKind};
pub use wavefunction::{PhysParams, RealField, Wavefunction};
