use std::io::Write;

use serde::{Deserialize, Serialize};

use super::newton::{NewtonSolver, NewtonStats, SolverConfig};
use super::residual::StepSystem;
use crate::error::{NsfError, Result};
use crate::grid::Grid;
use crate::thermo::{ModelParams, State};

/// Components of the boundedness monitor at one time level.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundMonitor {
    pub rho_max: f64,
    pub rho_inv_max: f64,
    pub theta_max: f64,
    pub theta_inv_max: f64,
}

impl BoundMonitor {
    pub fn of(state: &State) -> Self {
        BoundMonitor {
            rho_max: state.rho.max(),
            rho_inv_max: 1.0 / state.rho.min(),
            theta_max: state.theta.max(),
            theta_inv_max: 1.0 / state.theta.min(),
        }
    }

    pub fn value(&self) -> f64 {
        self.rho_max
            .max(self.rho_inv_max)
            .max(self.theta_max)
            .max(self.theta_inv_max)
    }

    pub fn merge(&self, other: &BoundMonitor) -> BoundMonitor {
        BoundMonitor {
            rho_max: self.rho_max.max(other.rho_max),
            rho_inv_max: self.rho_inv_max.max(other.rho_inv_max),
            theta_max: self.theta_max.max(other.theta_max),
            theta_inv_max: self.theta_inv_max.max(other.theta_inv_max),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub step: usize,
    pub time: f64,
    pub dt: f64,
    pub newton_iters: usize,
    pub linear_iters: usize,
    pub residual: f64,
    pub monitor: BoundMonitor,
}

#[derive(Clone, Debug, Default)]
pub struct MarchOptions {
    /// Keep every `k`-th time level (the initial and final levels are always kept).
    pub record_every: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub dt: f64,
    pub snapshots: Vec<(f64, State)>,
    pub steps: Vec<StepStats>,
    /// `Λ_h`: running maximum of the monitor over all time levels.
    pub monitor: BoundMonitor,
}

impl Trajectory {
    pub fn final_time(&self) -> f64 {
        self.snapshots.last().map_or(0.0, |(t, _)| *t)
    }

    pub fn final_state(&self) -> &State {
        &self.snapshots.last().expect("trajectory always holds the initial state").1
    }

    pub fn lambda(&self) -> f64 {
        self.monitor.value()
    }

    pub const STATS_HEADER: &'static str = "step,time,newton_iters,residual,lambda_rho_max,lambda_rho_inv_max,lambda_theta_max,lambda_theta_inv_max,dt,linear_iters";

    pub fn write_stats_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", Self::STATS_HEADER)?;
        for s in &self.steps {
            writeln!(
                w,
                "{},{:?},{},{:e},{:?},{:?},{:?},{:?},{:?},{}",
                s.step,
                s.time,
                s.newton_iters,
                s.residual,
                s.monitor.rho_max,
                s.monitor.rho_inv_max,
                s.monitor.theta_max,
                s.monitor.theta_inv_max,
                s.dt,
                s.linear_iters
            )?;
        }
        Ok(())
    }
}

/// `Δt = c_dt · h`.
pub fn time_step(grid: &Grid, params: &ModelParams) -> f64 {
    params.dt_coupling * grid.h()
}

/// Solves one implicit step from `prev`; the Newton guess is `prev` itself.
pub fn advance_step(
    grid: &Grid,
    prev: &State,
    dt: f64,
    params: &ModelParams,
    config: &SolverConfig,
) -> Result<(State, NewtonStats)> {
    if !(dt > 0.0) {
        return Err(NsfError::Config(format!("time step must be positive, got {dt}")));
    }
    prev.check_positive()?;
    let system = StepSystem::new(grid, params, prev, dt);
    let mut solver = NewtonSolver::new(&system, config);
    let mut x = prev.pack();
    let stats = solver.solve(&mut x)?;
    let next = State::unpack(grid.dim(), &x);
    next.check_positive()?;
    Ok((next, stats))
}

/// Marches `initial` to time `t_final` with uniform steps `Δt = c_dt·h`, the
/// last one shortened to land on `t_final`.
pub fn march(
    grid: &Grid,
    initial: &State,
    t_final: f64,
    params: &ModelParams,
    config: &SolverConfig,
    options: &MarchOptions,
) -> Result<Trajectory> {
    params.validate_for(grid)?;
    config.validate()?;
    initial.check_grid(grid)?;
    if !(t_final >= 0.0) {
        return Err(NsfError::Config(format!("final time must be >= 0, got {t_final}")));
    }
    initial.check_positive()?;
    let dt = time_step(grid, params);
    let mut traj = Trajectory {
        dt,
        snapshots: vec![(0.0, initial.clone())],
        steps: Vec::new(),
        monitor: BoundMonitor::of(initial),
    };
    let mut state = initial.clone();
    let mut t = 0.0;
    let mut step = 0;
    // steps whose remaining length is below this are absorbed by rounding
    let slack = 1e-9 * dt;
    while t_final - t > slack {
        let this_dt = if t_final - t < dt + slack { t_final - t } else { dt };
        let (next, stats) = advance_step(grid, &state, this_dt, params, config)
            .map_err(|e| NsfError::StepFailed { time: t, source: Box::new(e) })?;
        step += 1;
        t = if t_final - t < dt + slack { t_final } else { t + dt };
        let monitor = BoundMonitor::of(&next);
        traj.monitor = traj.monitor.merge(&monitor);
        traj.steps.push(StepStats {
            step,
            time: t,
            dt: this_dt,
            newton_iters: stats.newton_iters,
            linear_iters: stats.linear_iters,
            residual: stats.residual,
            monitor,
        });
        state = next;
        let last = t >= t_final;
        if !last && options.record_every.is_some_and(|k| k > 0 && step % k == 0) {
            traj.snapshots.push((t, state.clone()));
        }
    }
    if step > 0 {
        traj.snapshots.push((t, state));
    }
    Ok(traj)
}
