//! Poisson's equation for Markov chains: certified bounds, exact solutions
//! on finite chains via split-chain regeneration, and regenerative Monte
//! Carlo.

pub mod bounds;
pub mod chain;
pub mod drift;
pub mod error;
pub mod gig1;
pub mod linalg;
pub mod potential;
pub mod split_exact;
pub mod split_mc;

pub use chain::{Distribution, FiniteChain, StateFunction, StateSet};
pub use drift::{CertificateBundle, PotentialCertificate, SmallSetCertificate};
pub use error::{Error, Result};
