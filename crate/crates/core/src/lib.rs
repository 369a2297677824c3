//! Implicit finite volume solver for the compressible Navier–Stokes–Fourier
//! system on the periodic torus `[-1, 1]^d`, with Monte Carlo sampling of
//! random data, ensemble estimators and convergence-study drivers.

pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod field;
pub mod flux;
pub mod grid;
pub mod io;
pub mod sampling;
pub mod scalar;
pub mod scheme;
pub mod stats;
pub mod thermo;

pub use error::{NsfError, Result};
pub use field::{ScalarField, TensorField, VectorField};
pub use grid::{Face, FaceTrace, Grid};
pub use scheme::{JacobianMode, MarchOptions, SolverConfig, Trajectory};
pub use thermo::{ConservedTriple, ModelParams, State};
