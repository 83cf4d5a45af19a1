//! Exact diagonalization and quench dynamics for spin-1/2 chains, built to
//! study how few eigenstates a simple initial state actually touches.
//!
//! The pieces, bottom up:
//!
//! * [`hilbert`]: basis conventions, product states, charge/parity sectors.
//! * [`hamiltonian`]: Pauli-string operators and the three model families.
//! * [`spectra`]: block-wise dense eigensolver, overlap profiles and the
//!   `N` statistic.
//! * [`dynamics`]: spectral time evolution, sector populations, entropy.
//! * [`ensemble`]: seeded disorder averages over a worker pool.
//! * [`circuit`]: a layered rotation/ZZ ansatz trained toward a subspace.
//! * [`bounds`]: leakage decomposition and observable bounds.
//!
//! Conventions: site 0 is the least significant bit of a basis index, bit
//! value 0 is spin up (`σ^z = +1`), charge is `Q = Σ_j σ^z_j`, entropies are
//! in nats and `ħ = 1`.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the precision.

pub mod bounds;
pub mod circuit;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod hamiltonian;
pub mod hilbert;
pub mod scalar;
pub mod spectra;

pub use error::{Error, Result};
pub use hamiltonian::{HermitianSource, ModelFamily, ModelSpec, Pauli, PauliString, PauliSum};
pub use hilbert::{HilbertSpace, ProductState, SectorKind, SectorMap};
pub use scalar::{KahanSum, Real};

pub type StateVectorF64 = hilbert::StateVector<f64>;
pub type StateVectorF32 = hilbert::StateVector<f32>;
pub type HermitianOperatorF64 = hamiltonian::HermitianOperator<f64>;
pub type HermitianOperatorF32 = hamiltonian::HermitianOperator<f32>;
pub type SpectralDataF64 = spectra::SpectralData<f64>;
pub type SpectralDataF32 = spectra::SpectralData<f32>;
pub type OverlapProfileF64 = spectra::OverlapProfile<f64>;
pub type OverlapProfileF32 = spectra::OverlapProfile<f32>;
pub type TimeGridF64 = dynamics::TimeGrid<f64>;
pub type TimeGridF32 = dynamics::TimeGrid<f32>;
pub type QuenchSeriesF64 = dynamics::QuenchSeries<f64>;
pub type QuenchSeriesF32 = dynamics::QuenchSeries<f32>;
pub type TargetSubspaceF64 = circuit::TargetSubspace<f64>;
pub type TargetSubspaceF32 = circuit::TargetSubspace<f32>;
pub type HsiDecompositionF64 = bounds::HsiDecomposition<f64>;
pub type HsiDecompositionF32 = bounds::HsiDecomposition<f32>;
