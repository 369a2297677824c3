//! Perfect-gas thermodynamics: pressure, entropy, energies, the relative
//! energy functional and the conserved triple `(ρ, m, S)`.

use serde::{Deserialize, Serialize};

use crate::error::{NsfError, Result};
use crate::field::{ScalarField, VectorField};
use crate::grid::Grid;
use crate::scalar::Scalar;

/// Physical and numerical parameters of one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    /// Shear viscosity `μ > 0`.
    pub mu: f64,
    /// Bulk coefficient `λ ≥ 0`.
    pub lambda: f64,
    /// Heat conductivity `κ > 0`.
    pub kappa: f64,
    /// Adiabatic exponent `γ > 1`.
    pub gamma: f64,
    /// Artificial-diffusion exponent `ε ∈ (-1, 1)` of the `h^ε` flux term.
    pub epsilon: f64,
    /// `Δt = dt_coupling · h`.
    pub dt_coupling: f64,
    /// Cell-projected body force `g`; `None` means `g ≡ 0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force: Option<VectorField>,
    /// Declared bound `ḡ` with `max |g| ≤ ḡ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force_bound: Option<f64>,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            mu: 1e-3,
            lambda: 1e-3,
            kappa: 1e-3,
            gamma: 1.4,
            epsilon: 0.6,
            dt_coupling: 0.1,
            force: None,
            force_bound: None,
        }
    }
}

impl ModelParams {
    /// `c_v = 1 / (γ - 1)`.
    pub fn cv(&self) -> f64 {
        1.0 / (self.gamma - 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(NsfError::Config(msg));
        if !(self.mu > 0.0) {
            return bad(format!("mu must be > 0, got {}", self.mu));
        }
        if !(self.lambda >= 0.0) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.kappa > 0.0) {
            return bad(format!("kappa must be > 0, got {}", self.kappa));
        }
        if !(self.gamma > 1.0) {
            return bad(format!("gamma must be > 1, got {}", self.gamma));
        }
        if !(self.epsilon > -1.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must lie in (-1, 1), got {}", self.epsilon));
        }
        if !(self.dt_coupling > 0.0 && self.dt_coupling.is_finite()) {
            return bad(format!("dt_coupling must be > 0, got {}", self.dt_coupling));
        }
        if let Some(g) = &self.force {
            if !g.is_finite() {
                return bad("force field has non-finite entries".into());
            }
            if let Some(bound) = self.force_bound {
                let gmax = g.magnitude().max();
                if gmax > bound {
                    return bad(format!("force magnitude {gmax} exceeds declared bound {bound}"));
                }
            }
        }
        Ok(())
    }

    pub fn validate_for(&self, grid: &Grid) -> Result<()> {
        self.validate()?;
        if let Some(g) = &self.force {
            if g.dim() != grid.dim() || g.num_cells() != grid.num_cells() {
                return Err(NsfError::GridMismatch("force field does not match grid".into()));
            }
        }
        Ok(())
    }

    pub fn has_force(&self) -> bool {
        self.force.is_some()
    }
}

/// Primitive state `(ρ, u, θ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub rho: ScalarField,
    pub u: VectorField,
    pub theta: ScalarField,
}

impl State {
    pub fn constant(grid: &Grid, rho: f64, u: &[f64], theta: f64) -> Self {
        let n = grid.num_cells();
        State {
            rho: ScalarField::constant(n, rho),
            u: VectorField(u.iter().map(|&c| ScalarField::constant(n, c)).collect()),
            theta: ScalarField::constant(n, theta),
        }
    }

    pub fn num_cells(&self) -> usize {
        self.rho.len()
    }

    pub fn dim(&self) -> usize {
        self.u.dim()
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        grid.check_scalar(&self.rho)?;
        grid.check_scalar(&self.theta)?;
        if self.u.dim() != grid.dim() {
            return Err(NsfError::GridMismatch(format!(
                "velocity has {} components on a {}-d grid",
                self.u.dim(),
                grid.dim()
            )));
        }
        for c in self.u.iter() {
            grid.check_scalar(c)?;
        }
        Ok(())
    }

    pub fn is_positive(&self) -> bool {
        self.rho.min() > 0.0 && self.theta.min() > 0.0
    }

    pub fn check_positive(&self) -> Result<()> {
        if self.is_positive() {
            Ok(())
        } else {
            Err(NsfError::PositivityLoss {
                min_rho: self.rho.min(),
                min_theta: self.theta.min(),
            })
        }
    }

    /// `max(‖ρ‖∞, ‖ρ⁻¹‖∞, ‖θ‖∞, ‖θ⁻¹‖∞)`.
    pub fn bound_monitor(&self) -> f64 {
        let (rmin, rmax) = (self.rho.min(), self.rho.max());
        let (tmin, tmax) = (self.theta.min(), self.theta.max());
        rmax.max(1.0 / rmin).max(tmax).max(1.0 / tmin)
    }

    /// Interleaved unknowns `[ρ, u_1..u_d, θ]` per cell.
    pub fn pack(&self) -> Vec<f64> {
        let d = self.dim();
        let nv = d + 2;
        let mut x = vec![0.0; nv * self.num_cells()];
        for c in 0..self.num_cells() {
            x[c * nv] = self.rho[c];
            for i in 0..d {
                x[c * nv + 1 + i] = self.u[i][c];
            }
            x[c * nv + d + 1] = self.theta[c];
        }
        x
    }

    pub fn unpack(dim: usize, x: &[f64]) -> Self {
        let nv = dim + 2;
        let n = x.len() / nv;
        let mut s = State {
            rho: ScalarField::zeros(n),
            u: VectorField::zeros(dim, n),
            theta: ScalarField::zeros(n),
        };
        for c in 0..n {
            s.rho[c] = x[c * nv];
            for i in 0..dim {
                s.u[i][c] = x[c * nv + 1 + i];
            }
            s.theta[c] = x[c * nv + dim + 1];
        }
        s
    }
}

/// `(ρ, m = ρu, S = ρ log(θ^{c_v}/ρ))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservedTriple {
    pub rho: ScalarField,
    pub m: VectorField,
    pub s: ScalarField,
}

impl ConservedTriple {
    pub fn zeros(dim: usize, n: usize) -> Self {
        ConservedTriple {
            rho: ScalarField::zeros(n),
            m: VectorField::zeros(dim, n),
            s: ScalarField::zeros(n),
        }
    }

    pub fn num_cells(&self) -> usize {
        self.rho.len()
    }

    pub fn dim(&self) -> usize {
        self.m.dim()
    }

    /// Components in the order `ρ, m_1..m_d, S`.
    pub fn components(&self) -> Vec<&ScalarField> {
        let mut v = vec![&self.rho];
        v.extend(self.m.iter());
        v.push(&self.s);
        v
    }

    pub fn components_mut(&mut self) -> Vec<&mut ScalarField> {
        let mut v = vec![&mut self.rho];
        v.extend(self.m.iter_mut());
        v.push(&mut self.s);
        v
    }

    /// Inverse map `u = m/ρ`, `θ = exp((S/ρ + log ρ) / c_v)`.
    pub fn to_state(&self, cv: f64) -> Result<State> {
        if self.rho.min() <= 0.0 {
            return Err(NsfError::Domain("density must be positive to recover the state".into()));
        }
        let u = VectorField(
            self.m
                .iter()
                .map(|mi| mi.zip_map(&self.rho, |m, r| m / r))
                .collect(),
        );
        let theta = self.s.zip_map(&self.rho, |s, r| ((s / r + r.ln()) / cv).exp());
        Ok(State {
            rho: self.rho.clone(),
            u,
            theta,
        })
    }
}

/// Perfect gas law with the scheme's clipping: `p = ρθ` for `θ > 0`, else `0`.
#[inline(always)]
pub fn pressure<T: Scalar>(rho: T, theta: T) -> T {
    if theta.value() > 0.0 {
        rho * theta
    } else {
        T::zero()
    }
}

/// `S = ρ (c_v log θ - log ρ)`.
pub fn entropy_density(rho: f64, theta: f64, cv: f64) -> Result<f64> {
    if !(rho > 0.0) || !(theta > 0.0) {
        return Err(NsfError::Domain(format!(
            "entropy needs rho > 0 and theta > 0, got rho = {rho}, theta = {theta}"
        )));
    }
    Ok(rho * (cv * theta.ln() - rho.ln()))
}

/// `E = ½ ρ |u|² + c_v ρ θ`.
pub fn total_energy_density(rho: f64, u: &[f64], theta: f64, cv: f64) -> f64 {
    let u2: f64 = u.iter().map(|x| x * x).sum();
    0.5 * rho * u2 + cv * rho * theta
}

/// `H_θ̃(ρ, θ) = ρ (c_v θ - θ̃ s(ρ, θ))`.
fn ballistic_free_energy(rho: f64, theta: f64, theta_ref: f64, cv: f64) -> f64 {
    rho * (cv * theta - theta_ref * (cv * theta.ln() - rho.ln()))
}

/// Pointwise relative energy `½ρ|u-ũ|² + E_H(ρ, θ | ρ̃, θ̃)`.
pub fn relative_energy_density(
    rho: f64,
    u: &[f64],
    theta: f64,
    rho_ref: f64,
    u_ref: &[f64],
    theta_ref: f64,
    cv: f64,
) -> Result<f64> {
    if !(rho > 0.0 && theta > 0.0 && rho_ref > 0.0 && theta_ref > 0.0) {
        return Err(NsfError::Domain(
            "relative energy needs positive densities and temperatures".into(),
        ));
    }
    let du2: f64 = u.iter().zip(u_ref).map(|(a, b)| (a - b) * (a - b)).sum();
    let s_ref = cv * theta_ref.ln() - rho_ref.ln();
    let dh_drho = cv * theta_ref - theta_ref * (s_ref - 1.0);
    let eh = ballistic_free_energy(rho, theta, theta_ref, cv)
        - dh_drho * (rho - rho_ref)
        - ballistic_free_energy(rho_ref, theta_ref, theta_ref, cv);
    Ok(0.5 * rho * du2 + eh)
}

/// `∫ R_E(state | reference)`, summed exactly over cells.
pub fn relative_energy(grid: &Grid, state: &State, reference: &State, cv: f64) -> Result<f64> {
    state.check_grid(grid)?;
    reference.check_grid(grid)?;
    let d = grid.dim();
    let mut total = 0.0;
    let (mut u, mut ur) = (vec![0.0; d], vec![0.0; d]);
    for c in 0..grid.num_cells() {
        for i in 0..d {
            u[i] = state.u[i][c];
            ur[i] = reference.u[i][c];
        }
        total += relative_energy_density(
            state.rho[c],
            &u,
            state.theta[c],
            reference.rho[c],
            &ur,
            reference.theta[c],
            cv,
        )?;
    }
    Ok(grid.cell_measure() * total)
}

/// Cellwise `(ρ, ρu, S)`.
pub fn conserved_triple(state: &State, cv: f64) -> Result<ConservedTriple> {
    let m = VectorField(
        state
            .u
            .iter()
            .map(|ui| ui.zip_map(&state.rho, |u, r| r * u))
            .collect(),
    );
    let s = state
        .rho
        .iter()
        .zip(state.theta.iter())
        .map(|(&r, &t)| entropy_density(r, t, cv))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConservedTriple {
        rho: state.rho.clone(),
        m,
        s: ScalarField(s),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceRecord {
    pub time: f64,
    pub mass: f64,
    pub energy: f64,
    pub entropy: f64,
}

/// Total mass, energy and entropy at each recorded time.
pub fn balance_diagnostics<'a, I>(grid: &Grid, history: I, cv: f64) -> Result<Vec<BalanceRecord>>
where
    I: IntoIterator<Item = (f64, &'a State)>,
{
    let d = grid.dim();
    let mut u = vec![0.0; d];
    history
        .into_iter()
        .map(|(time, s)| {
            let mut energy = 0.0;
            let mut entropy = 0.0;
            for c in 0..grid.num_cells() {
                for i in 0..d {
                    u[i] = s.u[i][c];
                }
                energy += total_energy_density(s.rho[c], &u, s.theta[c], cv);
                entropy += entropy_density(s.rho[c], s.theta[c], cv)?;
            }
            let vol = grid.cell_measure();
            Ok(BalanceRecord {
                time,
                mass: grid.integrate(&s.rho),
                energy: vol * energy,
                entropy: vol * entropy,
            })
        })
        .collect()
}
