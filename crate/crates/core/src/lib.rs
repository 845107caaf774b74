//! Symmetric Markov chains on finite state spaces, their local and non-local Feynman-Kac
//! perturbations, Girsanov transforms, and the spectral bounds `lambda_p` of the perturbed
//! semigroups. Everything here is `no_std` with `alloc`; file formats and the command line
//! live in the companion `fkchain` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod chain;
pub mod error;
pub mod feynman_kac;
pub mod girsanov;
pub mod linalg;
pub mod model;
pub mod pathsim;
pub mod revuz;
pub mod spectral;

pub use chain::{GeneratorMatrix, GreenOperator, SymmetricChain};
pub use error::{Error, Result};
pub use feynman_kac::{Gauge, GaugeStatus, JumpPerturbation, SchrodingerOperator, SmoothMeasure};
pub use model::{Boundary, ModelSpec};

#[cfg(test)]
pub(crate) mod test_support {
    use crate::linalg::CsrMatrix;
    use crate::SymmetricChain;
    use alloc::vec;

    /// `m = (1, 1)`, `q01 = q10 = 1`, `k = (1, 1)`.
    pub fn two_state() -> SymmetricChain {
        SymmetricChain::new(
            vec![1.0, 1.0],
            CsrMatrix::from_triplets(2, [(0, 1, 1.0), (1, 0, 1.0)]),
            vec![1.0, 1.0],
            false,
        )
        .unwrap()
    }
}
