//! Brute-force reference implementations shared by integration tests.
#![allow(dead_code)]

use nsfmc::field::{ScalarField, VectorField};
use nsfmc::sampling::{stream_split, uniform_symmetric};
use nsfmc::{Grid, ModelParams, State};
use rand_chacha::ChaCha8Rng;

pub struct TestRng(ChaCha8Rng);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        TestRng(stream_split(seed, 0, 0))
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * 0.5 * (uniform_symmetric(&mut self.0) + 1.0)
    }

    pub fn field(&mut self, n: usize, lo: f64, hi: f64) -> ScalarField {
        ScalarField((0..n).map(|_| self.uniform(lo, hi)).collect())
    }

    pub fn vector_field(&mut self, d: usize, n: usize, lo: f64, hi: f64) -> VectorField {
        VectorField((0..d).map(|_| self.field(n, lo, hi)).collect())
    }

    pub fn state(&mut self, g: &Grid) -> State {
        let n = g.num_cells();
        State {
            rho: self.field(n, 0.5, 1.5),
            u: self.vector_field(g.dim(), n, -1.0, 1.0),
            theta: self.field(n, 0.5, 2.5),
        }
    }
}

/// Cell shifted by `offset` along `axis`, located through multi-indices.
pub fn shifted(g: &Grid, cell: usize, axis: usize, offset: isize) -> usize {
    let mut idx: Vec<isize> = g.multi_index(cell).into_iter().map(|v| v as isize).collect();
    idx[axis] += offset;
    g.cell_index(&idx)
}

/// `(∇_h r)_K = Σ_{σ∈∂K} |σ|/|K| ⟨r⟩ n`, summed face by face.
pub fn gradient(g: &Grid, r: &[f64]) -> Vec<Vec<f64>> {
    let d = g.dim();
    let ratio = g.face_measure() / g.cell_measure();
    let mut out = vec![vec![0.0; g.num_cells()]; d];
    for c in 0..g.num_cells() {
        for axis in 0..d {
            for side in [-1isize, 1] {
                let nb = shifted(g, c, axis, side);
                out[axis][c] += ratio * 0.5 * (r[c] + r[nb]) * side as f64;
            }
        }
    }
    out
}

/// `(div_h v)_K = Σ_{σ∈∂K} |σ|/|K| ⟨v⟩·n`.
pub fn divergence(g: &Grid, v: &[Vec<f64>]) -> Vec<f64> {
    let ratio = g.face_measure() / g.cell_measure();
    let mut out = vec![0.0; g.num_cells()];
    for c in 0..g.num_cells() {
        for axis in 0..g.dim() {
            for side in [-1isize, 1] {
                let nb = shifted(g, c, axis, side);
                out[c] += ratio * 0.5 * (v[axis][c] + v[axis][nb]) * side as f64;
            }
        }
    }
    out
}

/// `stress[i][j][K] = μ(∂_j u_i + ∂_i u_j) + λ div u δ_ij`.
pub fn stress(g: &Grid, u: &[Vec<f64>], mu: f64, lambda: f64) -> Vec<Vec<Vec<f64>>> {
    let d = g.dim();
    let grads: Vec<Vec<Vec<f64>>> = u.iter().map(|ui| gradient(g, ui)).collect();
    let div = divergence(g, u);
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    (0..g.num_cells())
                        .map(|c| {
                            mu * (grads[i][j][c] + grads[j][i][c]) + if i == j { lambda * div[c] } else { 0.0 }
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn p(rho: f64, theta: f64) -> f64 {
    if theta > 0.0 {
        rho * theta
    } else {
        0.0
    }
}

/// Left-hand side minus right-hand side of the discrete weak formulation,
/// tested against `phi` (interleaved like the packed state).
pub fn weak_form(g: &Grid, params: &ModelParams, prev: &State, trial: &State, dt: f64, phi: &[f64]) -> f64 {
    let d = g.dim();
    let nv = d + 2;
    let n = g.num_cells();
    let vol = g.cell_measure();
    let area = g.face_measure();
    let h = g.h();
    let cv = params.cv();
    let h_eps = h.powf(params.epsilon);
    let u: Vec<Vec<f64>> = (0..d).map(|i| trial.u[i].to_vec()).collect();
    let s = stress(g, &u, params.mu, params.lambda);
    let grad_u: Vec<Vec<Vec<f64>>> = u.iter().map(|ui| gradient(g, ui)).collect();
    let phi_of = |slot: usize| -> Vec<f64> { (0..n).map(|c| phi[c * nv + slot]).collect() };
    let grad_phi: Vec<Vec<Vec<f64>>> = (0..d).map(|i| gradient(g, &phi_of(1 + i))).collect();

    let mut total = 0.0;
    for c in 0..n {
        let (r, rp) = (trial.rho[c], prev.rho[c]);
        total += vol * (r - rp) / dt * phi[c * nv];
        for i in 0..d {
            total += vol * (r * trial.u[i][c] - rp * prev.u[i][c]) / dt * phi[c * nv + 1 + i];
        }
        total += vol * cv * (r * trial.theta[c] - rp * prev.theta[c]) / dt * phi[c * nv + d + 1];

        let pc = p(r, trial.theta[c]);
        let mut production = 0.0;
        for i in 0..d {
            for j in 0..d {
                let a = s[i][j][c] - if i == j { pc } else { 0.0 };
                total += vol * a * grad_phi[i][j][c];
                production += a * grad_u[i][j][c];
            }
        }
        total -= vol * production * phi[c * nv + d + 1];
        if let Some(force) = &params.force {
            for i in 0..d {
                total -= vol * r * force[i][c] * phi[c * nv + 1 + i];
            }
        }
    }

    for face in g.faces() {
        let (a, b) = (face.inner, face.outer);
        let un = 0.5 * (trial.u[face.axis][a] + trial.u[face.axis][b]);
        let flux = |ra: f64, rb: f64| 0.5 * (ra + rb) * un - 0.5 * un.abs() * (rb - ra) - h_eps * (rb - ra);
        let jump_phi = |slot: usize| phi[b * nv + slot] - phi[a * nv + slot];
        total -= area * flux(trial.rho[a], trial.rho[b]) * jump_phi(0);
        for i in 0..d {
            let (ma, mb) = (trial.rho[a] * trial.u[i][a], trial.rho[b] * trial.u[i][b]);
            total -= area * flux(ma, mb) * jump_phi(1 + i);
        }
        let (ea, eb) = (trial.rho[a] * trial.theta[a], trial.rho[b] * trial.theta[b]);
        total -= area * cv * flux(ea, eb) * jump_phi(d + 1);
        total += area * params.kappa / h * (trial.theta[b] - trial.theta[a]) * jump_phi(d + 1);
    }
    total
}

/// Raw residual, one row per cell indicator and equation.
pub fn residual(g: &Grid, params: &ModelParams, prev: &State, trial: &State, dt: f64) -> Vec<f64> {
    let len = (g.dim() + 2) * g.num_cells();
    let mut phi = vec![0.0; len];
    (0..len)
        .map(|k| {
            phi[k] = 1.0;
            let v = weak_form(g, params, prev, trial, dt, &phi);
            phi[k] = 0.0;
            v
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
