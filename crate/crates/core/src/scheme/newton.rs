//! Damped inexact Newton–Krylov solver for one implicit step.

use serde::{Deserialize, Serialize};

use super::krylov::{gmres, BlockJacobi};
use super::residual::{StepSystem, Workspace};
use crate::error::{NsfError, Result};
use crate::scalar::Dual;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode {
    /// Exact Jacobian action through forward-mode dual numbers.
    Analytic,
    /// One-sided finite differences of the residual.
    FiniteDifference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Tolerance on the RMS of the scaled residual.
    pub tol_nl: f64,
    pub max_newton: usize,
    pub jacobian_mode: JacobianMode,
    /// Relative tolerance of each linear solve.
    pub linear_tol: f64,
    pub linear_max_iter: usize,
    pub gmres_restart: usize,
    /// Step reduction factor of the backtracking line search.
    pub damping: f64,
    pub max_halvings: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol_nl: 1e-10,
            max_newton: 50,
            jacobian_mode: JacobianMode::Analytic,
            linear_tol: 1e-4,
            linear_max_iter: 300,
            gmres_restart: 30,
            damping: 0.5,
            max_halvings: 20,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_nl > 0.0) {
            return Err(NsfError::Config(format!("tol_nl must be > 0, got {}", self.tol_nl)));
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(NsfError::Config(format!("damping must lie in (0, 1), got {}", self.damping)));
        }
        if !(self.linear_tol > 0.0 && self.linear_tol < 1.0) {
            return Err(NsfError::Config(format!("linear_tol must lie in (0, 1), got {}", self.linear_tol)));
        }
        if self.max_newton == 0 || self.linear_max_iter == 0 || self.gmres_restart == 0 {
            return Err(NsfError::Config("iteration limits must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NewtonStats {
    pub newton_iters: usize,
    pub linear_iters: usize,
    pub residual: f64,
}

/// RMS of a scaled residual vector.
pub fn residual_norm(r: &[f64]) -> f64 {
    (r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64).sqrt()
}

/// Nonlinear solver state bound to one step system.
pub struct NewtonSolver<'s, 'a> {
    system: &'s StepSystem<'a>,
    config: &'s SolverConfig,
    ws: Workspace<f64>,
    ws_dual: Workspace<Dual>,
    xd: Vec<Dual>,
    rd: Vec<Dual>,
    scratch: Vec<f64>,
}

impl<'s, 'a> NewtonSolver<'s, 'a> {
    pub fn new(system: &'s StepSystem<'a>, config: &'s SolverConfig) -> Self {
        let n = system.num_unknowns();
        NewtonSolver {
            system,
            config,
            ws: Workspace::new(system.grid()),
            ws_dual: Workspace::new(system.grid()),
            xd: vec![Dual::default(); n],
            rd: vec![Dual::default(); n],
            scratch: vec![0.0; n],
        }
    }

    pub fn residual(&mut self, x: &[f64], out: &mut [f64]) {
        self.system.residual(x, out, &mut self.ws);
    }

    /// `J v` at `x`, with `r0 = F(x)` used by the finite-difference mode.
    pub fn jacobian_action(&mut self, x: &[f64], r0: &[f64], v: &[f64], out: &mut [f64]) {
        match self.config.jacobian_mode {
            JacobianMode::Analytic => {
                for ((d, &xv), &vv) in self.xd.iter_mut().zip(x).zip(v) {
                    *d = Dual::new(xv, vv);
                }
                self.system.residual(&self.xd, &mut self.rd, &mut self.ws_dual);
                for (o, r) in out.iter_mut().zip(&self.rd) {
                    *o = r.d;
                }
            }
            JacobianMode::FiniteDifference => {
                let vmax = v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
                if vmax == 0.0 {
                    out.iter_mut().for_each(|o| *o = 0.0);
                    return;
                }
                let xmax = x.iter().fold(0.0f64, |m, a| m.max(a.abs()));
                let step = 1e-7f64.max(1e-7 * xmax) / vmax;
                let shifted: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + step * b).collect();
                let mut tmp = std::mem::take(&mut self.scratch);
                self.system.residual(&shifted, &mut tmp, &mut self.ws);
                for k in 0..out.len() {
                    out[k] = (tmp[k] - r0[k]) / step;
                }
                self.scratch = tmp;
            }
        }
    }

    /// One damped Newton update of `x`; `r` holds `F(x)` on entry and `F(x_new)` on exit.
    pub fn step(&mut self, x: &mut [f64], r: &mut Vec<f64>) -> Result<NewtonStats> {
        let norm0 = residual_norm(r);
        let n = x.len();
        let pre = BlockJacobi::new(&self.system.block_diagonal(x), self.system.grid().dim() + 2)?;
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let b_norm = norm0 * (n as f64).sqrt();
        let target = (self.config.linear_tol * b_norm).max(0.1 * self.config.tol_nl * (n as f64).sqrt());
        let (restart, max_iter) = (self.config.gmres_restart, self.config.linear_max_iter);
        let mut delta = vec![0.0; n];
        let x_now = x.to_vec();
        let r_now = r.clone();
        let outcome = gmres(
            |v, out| self.jacobian_action(&x_now, &r_now, v, out),
            |v, out| pre.apply(v, out),
            &rhs,
            &mut delta,
            target,
            restart,
            max_iter,
        );
        if !outcome.converged {
            return Err(NsfError::LinearSolveFailure {
                iterations: outcome.iterations,
                relative_residual: outcome.residual_norm / b_norm.max(f64::MIN_POSITIVE),
            });
        }

        let mut alpha = 1.0;
        let mut trial = vec![0.0; n];
        let mut r_trial = vec![0.0; n];
        for _ in 0..=self.config.max_halvings {
            for k in 0..n {
                trial[k] = x[k] + alpha * delta[k];
            }
            self.residual(&trial, &mut r_trial);
            let nt = residual_norm(&r_trial);
            if nt < norm0 || (nt == 0.0 && norm0 == 0.0) {
                x.copy_from_slice(&trial);
                *r = r_trial;
                return Ok(NewtonStats {
                    newton_iters: 1,
                    linear_iters: outcome.iterations,
                    residual: nt,
                });
            }
            alpha *= self.config.damping;
        }
        Err(NsfError::LineSearchStalled { residual: norm0 })
    }

    /// Newton iteration from `x` until the residual drops below `tol_nl`.
    pub fn solve(&mut self, x: &mut [f64]) -> Result<NewtonStats> {
        let mut r = vec![0.0; x.len()];
        self.residual(x, &mut r);
        let mut stats = NewtonStats {
            residual: residual_norm(&r),
            ..Default::default()
        };
        while stats.residual > self.config.tol_nl {
            if !stats.residual.is_finite() || stats.newton_iters >= self.config.max_newton {
                return Err(NsfError::NonConvergence {
                    iterations: stats.newton_iters,
                    residual: stats.residual,
                });
            }
            let s = self.step(x, &mut r)?;
            stats.newton_iters += 1;
            stats.linear_iters += s.linear_iters;
            stats.residual = s.residual;
        }
        Ok(stats)
    }

    /// Dense Jacobian of the scaled residual, column by column (small grids only).
    pub fn dense_jacobian(&mut self, x: &[f64]) -> Vec<Vec<f64>> {
        let n = x.len();
        let mut r0 = vec![0.0; n];
        self.residual(x, &mut r0);
        let mut cols = vec![vec![0.0; n]; n];
        let mut e = vec![0.0; n];
        for j in 0..n {
            match self.config.jacobian_mode {
                JacobianMode::Analytic => {
                    e[j] = 1.0;
                    let mut col = vec![0.0; n];
                    self.jacobian_action(x, &r0, &e, &mut col);
                    cols[j] = col;
                    e[j] = 0.0;
                }
                JacobianMode::FiniteDifference => {
                    let step = 1e-7f64.max(1e-7 * x[j].abs());
                    let mut xs = x.to_vec();
                    xs[j] += step;
                    let mut rs = vec![0.0; n];
                    self.residual(&xs, &mut rs);
                    cols[j] = rs.iter().zip(&r0).map(|(a, b)| (a - b) / step).collect();
                }
            }
        }
        // transpose to row-major
        (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
    }
}
