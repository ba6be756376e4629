//! Ghost Gutzwiller embedding for single-impurity models.
//!
//! The crate implements the self-consistent ghost Gutzwiller (gGut) loop for
//! the half-filled Hubbard model on the Bethe lattice, together with a family
//! of impurity solvers of increasing realism:
//!
//! - [`fock`]: full configuration interaction (sparse Hamiltonian + Lanczos),
//! - [`sci`]: selected CI in a truncated, weight-ranked determinant subspace,
//! - [`qsci`]: sampled CI, where the determinant subspace is harvested from
//!   computational-basis samples of a simulated LUCJ trial state ([`qsim`]),
//!   optionally prepared through Pauli wire cutting ([`cutting`]).
//!
//! Converged quasi-particle parameters yield the local Green's function and
//! density of states ([`spectral`]). Single-particle basis rotations of the
//! embedding model (chain, star, partial) live in [`basisrot`]; experiment
//! orchestration and file formats in [`cli`].

pub mod basisrot;
pub mod cli;
pub mod cutting;
pub mod error;
pub mod fock;
pub mod linalg;
pub mod model;
pub mod qsci;
pub mod qsim;
pub mod sci;
pub mod scloop;
pub mod spectral;

pub use error::{GgutError, Result};
