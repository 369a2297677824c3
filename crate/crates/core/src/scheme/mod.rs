//! Implicit finite volume time stepping.

mod krylov;
mod march;
mod newton;
mod residual;

pub use krylov::{gmres, BlockJacobi, GmresOutcome};
pub use march::{
    advance_step, march, time_step, BoundMonitor, MarchOptions, StepStats, Trajectory,
};
pub use newton::{residual_norm, JacobianMode, NewtonSolver, NewtonStats, SolverConfig};
pub use residual::{StepSystem, Workspace};
