//! Face fluxes: upwinding with `h^ε` artificial diffusion, the diffusive heat
//! term, and the discrete viscous stress.

use crate::field::{TensorField, VectorField};
use crate::grid::Grid;
use crate::scalar::Scalar;

/// `Up[r, u] = ⟨r⟩ ⟨u⟩·n - ½ |⟨u⟩·n| ⟦r⟧`.
#[inline(always)]
pub fn upwind<T: Scalar>(r_in: T, r_out: T, un_avg: T) -> T {
    (r_in + r_out) * un_avg * 0.5 - un_avg.abs() * (r_out - r_in) * 0.5
}

/// `F_h^ε(r, u) = Up[r, u] - h^ε ⟦r⟧`; `h_eps` is the precomputed `h^ε`.
#[inline(always)]
pub fn regularized_flux_scaled<T: Scalar>(r_in: T, r_out: T, un_avg: T, h_eps: f64) -> T {
    upwind(r_in, r_out, un_avg) - (r_out - r_in) * h_eps
}

pub fn regularized_flux(r_in: f64, r_out: f64, un_avg: f64, h: f64, epsilon: f64) -> f64 {
    regularized_flux_scaled(r_in, r_out, un_avg, h.powf(epsilon))
}

/// `(κ/h) ⟦θ⟧`, paired with `⟦φ⟧` during assembly.
#[inline(always)]
pub fn heat_face_term<T: Scalar>(theta_in: T, theta_out: T, kappa: f64, h: f64) -> T {
    (theta_out - theta_in) * (kappa / h)
}

/// `𝕊_h = 2μ 𝔻_h u + λ div_h u 𝕀`, with `𝔻_h u = (∇_h u + ∇_h^T u)/2`.
pub fn viscous_stress(grid: &Grid, u: &VectorField, mu: f64, lambda: f64) -> TensorField {
    let d = grid.dim();
    let n = grid.num_cells();
    // grad[i][j] = ∂_j u_i
    let grad: Vec<VectorField> = (0..d).map(|i| grid.gradient(&u[i])).collect();
    let mut out = TensorField::zeros(d, n);
    for c in 0..n {
        let div: f64 = (0..d).map(|i| grad[i][i][c]).sum();
        for i in 0..d {
            for j in 0..d {
                let mut v = mu * (grad[i][j][c] + grad[j][i][c]);
                if i == j {
                    v += lambda * div;
                }
                out.get_mut(i, j)[c] = v;
            }
        }
    }
    out
}
