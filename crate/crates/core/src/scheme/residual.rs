//! Residual of the implicit finite volume step, tested against cell indicators.
//!
//! Unknowns are interleaved per cell as `[ρ, u_1, .., u_d, θ]`. For cell `K`
//! the raw residual rows are
//!
//! ```text
//! mass:        |K| D_t ρ        + Σ_{σ∈∂K} |σ| F(ρ, u)
//! momentum_i:  |K| D_t (ρ u_i)  + Σ_{σ∈∂K} |σ| F(ρ u_i, u) - |K| div_h(𝕊_h - p 𝕀)_i - |K| ρ g_i
//! heat:        c_v |K| D_t (ρθ) + c_v Σ_{σ∈∂K} |σ| F(ρθ, u) - Σ_{σ∈∂K} |σ| (κ/h)(θ_L - θ_K)
//!                               - |K| (𝕊_h - p 𝕀) : ∇_h u
//! ```
//!
//! where every `F` uses the outward normal of `K`. The returned residual is
//! scaled row-wise by `Δt / |K|` (and `1/c_v` for the heat row), which makes
//! it an increment of the conserved variables.

use crate::flux::{heat_face_term, regularized_flux_scaled};
use crate::grid::Grid;
use crate::scalar::Scalar;
use crate::thermo::{pressure, ModelParams, State};

/// One backward-Euler step `prev → trial` as a nonlinear system.
pub struct StepSystem<'a> {
    grid: &'a Grid,
    params: &'a ModelParams,
    dt: f64,
    cv: f64,
    h_eps: f64,
    prev_rho: Vec<f64>,
    prev_mom: Vec<Vec<f64>>,
    prev_heat: Vec<f64>,
}

/// Scratch buffers reused across residual evaluations.
pub struct Workspace<T> {
    rho: Vec<T>,
    theta: Vec<T>,
    p: Vec<T>,
    heat: Vec<T>,
    prod: Vec<T>,
    u: Vec<Vec<T>>,
    mom: Vec<Vec<T>>,
    grad: Vec<Vec<T>>,
    stress: Vec<Vec<T>>,
}

impl<T: Scalar> Workspace<T> {
    pub fn new(grid: &Grid) -> Self {
        let (d, n) = (grid.dim(), grid.num_cells());
        let z = T::zero();
        Workspace {
            rho: vec![z; n],
            theta: vec![z; n],
            p: vec![z; n],
            heat: vec![z; n],
            prod: vec![z; n],
            u: vec![vec![z; n]; d],
            mom: vec![vec![z; n]; d],
            grad: vec![vec![z; n]; d * d],
            stress: vec![vec![z; n]; d * d],
        }
    }
}

impl<'a> StepSystem<'a> {
    pub fn new(grid: &'a Grid, params: &'a ModelParams, prev: &State, dt: f64) -> Self {
        let d = grid.dim();
        let prev_mom = (0..d)
            .map(|i| {
                prev.rho
                    .iter()
                    .zip(prev.u[i].iter())
                    .map(|(r, u)| r * u)
                    .collect()
            })
            .collect();
        let prev_heat = prev
            .rho
            .iter()
            .zip(prev.theta.iter())
            .map(|(r, t)| r * t)
            .collect();
        StepSystem {
            grid,
            params,
            dt,
            cv: params.cv(),
            h_eps: grid.h().powf(params.epsilon),
            prev_rho: prev.rho.to_vec(),
            prev_mom,
            prev_heat,
        }
    }

    pub fn grid(&self) -> &Grid {
        self.grid
    }

    pub fn params(&self) -> &ModelParams {
        self.params
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn num_unknowns(&self) -> usize {
        (self.grid.dim() + 2) * self.grid.num_cells()
    }

    /// Row scaling applied to the raw residual, per variable slot.
    pub fn row_scale(&self) -> Vec<f64> {
        let d = self.grid.dim();
        let base = self.dt / self.grid.cell_measure();
        let mut s = vec![base; d + 2];
        s[d + 1] = base / self.cv;
        s
    }

    /// Raw (unscaled) residual: each row is the weak form tested with a cell indicator.
    pub fn raw_residual<T: Scalar>(&self, x: &[T], out: &mut [T], ws: &mut Workspace<T>) {
        let g = self.grid;
        let d = g.dim();
        let nv = d + 2;
        let n = g.num_cells();
        debug_assert_eq!(x.len(), nv * n);
        debug_assert_eq!(out.len(), nv * n);
        let vol = g.cell_measure();
        let area = g.face_measure();
        let h = g.h();
        let inv2h = 0.5 / h;
        let (mu, lambda, kappa) = (self.params.mu, self.params.lambda, self.params.kappa);
        let cv = self.cv;
        let h_eps = self.h_eps;
        let vol_dt = vol / self.dt;

        for c in 0..n {
            let r = x[c * nv];
            let t = x[c * nv + d + 1];
            ws.rho[c] = r;
            ws.theta[c] = t;
            ws.p[c] = pressure(r, t);
            ws.heat[c] = r * t;
            for i in 0..d {
                let ui = x[c * nv + 1 + i];
                ws.u[i][c] = ui;
                ws.mom[i][c] = r * ui;
            }
        }

        // grad[i*d + j] = ∂_j u_i
        for i in 0..d {
            for j in 0..d {
                let (pl, mi) = (g.plus_table(j), g.minus_table(j));
                let ui = &ws.u[i];
                let gij = &mut ws.grad[i * d + j];
                for c in 0..n {
                    gij[c] = (ui[pl[c]] - ui[mi[c]]) * inv2h;
                }
            }
        }

        // stress = 𝕊_h - p𝕀 and the production term (𝕊_h - p𝕀) : ∇_h u
        for c in 0..n {
            let mut div = T::zero();
            for i in 0..d {
                div += ws.grad[i * d + i][c];
            }
            let mut prod = T::zero();
            for i in 0..d {
                for j in 0..d {
                    let mut s = (ws.grad[i * d + j][c] + ws.grad[j * d + i][c]) * mu;
                    if i == j {
                        s += div * lambda - ws.p[c];
                    }
                    prod += s * ws.grad[i * d + j][c];
                    ws.stress[i * d + j][c] = s;
                }
            }
            ws.prod[c] = prod;
        }

        // cell terms
        for c in 0..n {
            out[c * nv] = (ws.rho[c] - self.prev_rho[c]) * vol_dt;
            for i in 0..d {
                let mut div_stress = T::zero();
                for j in 0..d {
                    let sij = &ws.stress[i * d + j];
                    div_stress += sij[g.neighbor_plus(j, c)] - sij[g.neighbor_minus(j, c)];
                }
                let mut row = (ws.mom[i][c] - self.prev_mom[i][c]) * vol_dt - div_stress * (inv2h * vol);
                if let Some(force) = &self.params.force {
                    row -= ws.rho[c] * (force[i][c] * vol);
                }
                out[c * nv + 1 + i] = row;
            }
            out[c * nv + d + 1] =
                (ws.heat[c] - self.prev_heat[c]) * (cv * vol_dt) - ws.prod[c] * vol;
        }

        // face fluxes; each face adds to its inner cell and subtracts from its outer cell
        for j in 0..d {
            let pl = g.plus_table(j);
            for c in 0..n {
                let o = pl[c];
                let un = (ws.u[j][c] + ws.u[j][o]) * 0.5;

                let f = regularized_flux_scaled(ws.rho[c], ws.rho[o], un, h_eps) * area;
                out[c * nv] += f;
                out[o * nv] -= f;

                for i in 0..d {
                    let m = &ws.mom[i];
                    let f = regularized_flux_scaled(m[c], m[o], un, h_eps) * area;
                    out[c * nv + 1 + i] += f;
                    out[o * nv + 1 + i] -= f;
                }

                let f = regularized_flux_scaled(ws.heat[c], ws.heat[o], un, h_eps) * (cv * area)
                    - heat_face_term(ws.theta[c], ws.theta[o], kappa, h) * area;
                out[c * nv + d + 1] += f;
                out[o * nv + d + 1] -= f;
            }
        }
    }

    /// Scaled residual `Δt/|K| · R` (heat row additionally divided by `c_v`).
    pub fn residual<T: Scalar>(&self, x: &[T], out: &mut [T], ws: &mut Workspace<T>) {
        self.raw_residual(x, out, ws);
        let scale = self.row_scale();
        for row in out.chunks_exact_mut(scale.len()) {
            for (v, &s) in row.iter_mut().zip(&scale) {
                *v *= T::cst(s);
            }
        }
    }

    /// Block-diagonal approximation of the scaled Jacobian: time derivative,
    /// upwind self-coupling, artificial diffusion and heat conduction.
    pub fn block_diagonal(&self, x: &[f64]) -> Vec<f64> {
        let g = self.grid;
        let d = g.dim();
        let nv = d + 2;
        let n = g.num_cells();
        let area = g.face_measure();
        let vol_dt = g.cell_measure() / self.dt;
        let heat_diag = 2.0 * d as f64 * self.params.kappa / g.h() * area;
        let scale = self.row_scale();
        let mut blocks = vec![0.0; n * nv * nv];
        for c in 0..n {
            let mut outflow = 0.0;
            for j in 0..d {
                let (p, m) = (g.neighbor_plus(j, c), g.neighbor_minus(j, c));
                let uc = x[c * nv + 1 + j];
                let up = 0.5 * (uc + x[p * nv + 1 + j]);
                let um = 0.5 * (uc + x[m * nv + 1 + j]);
                outflow += up.max(0.0) + (-um).max(0.0) + 2.0 * self.h_eps;
            }
            let a = vol_dt + area * outflow;
            let (r, t) = (x[c * nv], x[c * nv + d + 1]);
            let b = &mut blocks[c * nv * nv..(c + 1) * nv * nv];
            b[0] = a * scale[0];
            for i in 0..d {
                let row = 1 + i;
                b[row * nv] = a * x[c * nv + 1 + i] * scale[row];
                b[row * nv + row] = a * r * scale[row];
            }
            let row = d + 1;
            b[row * nv] = self.cv * a * t * scale[row];
            b[row * nv + row] = (self.cv * a * r + heat_diag) * scale[row];
        }
        blocks
    }
}
