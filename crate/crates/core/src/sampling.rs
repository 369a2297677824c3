//! Random data: an i.i.d. perturbed vortex with perturbed transport coefficients.
//!
//! Randomness comes from ChaCha8 keyed by the 64-bit master seed (little-endian
//! in the first 8 key bytes, remaining key bytes zero), with stream id
//! `sample_index · 2³² + realization_index`. Each uniform draw on `(-1, 1)`
//! consumes one `u64` word `w` and maps it to `2·((w >> 11) + ½)·2⁻⁵³ - 1`.
//! The seed triple alone therefore fixes a sample on every platform.

use std::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{NsfError, Result};
use crate::field::VectorField;
use crate::grid::Grid;
use crate::thermo::{ModelParams, State};

pub const NUM_RANDOM_VARIABLES: usize = 7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomDataSpec {
    /// Unperturbed coefficients and numerical parameters.
    pub base: ModelParams,
    pub amp_rho: f64,
    pub amp_u: f64,
    pub amp_theta: f64,
    /// Amplitude of the `μ, λ, κ` perturbations.
    pub amp_coef: f64,
    pub rho_mean: f64,
    pub theta_mean: f64,
    /// Cutoff radius of the vortex.
    pub vortex_radius: f64,
}

impl Default for RandomDataSpec {
    fn default() -> Self {
        RandomDataSpec {
            base: ModelParams::default(),
            amp_rho: 0.1,
            amp_u: 0.1,
            amp_theta: 0.2,
            amp_coef: 1e-4,
            rho_mean: 1.0,
            theta_mean: 2.0,
            vortex_radius: 0.5,
        }
    }
}

impl RandomDataSpec {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.rho_mean - self.amp_rho.abs() <= 0.0 {
            return Err(NsfError::Config("density perturbation can reach zero".into()));
        }
        if self.theta_mean - self.amp_theta.abs() <= 0.0 {
            return Err(NsfError::Config("temperature perturbation can reach zero".into()));
        }
        let c = self.amp_coef.abs();
        if self.base.mu - c <= 0.0 || self.base.kappa - c <= 0.0 || self.base.lambda - c < 0.0 {
            return Err(NsfError::Config("coefficient perturbation exceeds base value".into()));
        }
        if !(self.vortex_radius > 0.0) {
            return Err(NsfError::Config("vortex radius must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SampleSeed {
    pub master_seed: u64,
    pub sample_index: u64,
    pub realization_index: u64,
}

impl SampleSeed {
    pub fn new(master_seed: u64, sample_index: u64, realization_index: u64) -> Self {
        SampleSeed {
            master_seed,
            sample_index,
            realization_index,
        }
    }
}

/// Independent generator for `(master_seed, n, m)`; `n, m < 2³²`.
pub fn stream_split(master_seed: u64, sample_index: u64, realization_index: u64) -> ChaCha8Rng {
    assert!(
        sample_index < 1 << 32 && realization_index < 1 << 32,
        "sample and realization indices must fit in 32 bits"
    );
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream((sample_index << 32) | realization_index);
    rng
}

/// Uniform draw on the open interval `(-1, 1)`.
pub fn uniform_symmetric<R: RngCore>(rng: &mut R) -> f64 {
    let w = rng.next_u64() >> 11;
    2.0 * ((w as f64 + 0.5) / (1u64 << 53) as f64) - 1.0
}

pub fn draw_uniforms(seed: SampleSeed) -> [f64; NUM_RANDOM_VARIABLES] {
    let mut rng = stream_split(seed.master_seed, seed.sample_index, seed.realization_index);
    let mut ys = [0.0; NUM_RANDOM_VARIABLES];
    for y in ys.iter_mut() {
        *y = uniform_symmetric(&mut rng);
    }
    ys
}

/// Rotational vortex `(1 - cos(4π|x|)) (x₂, -x₁)/|x|` for `|x| < radius`, zero
/// outside and at the origin. Uses the first two coordinates.
pub fn vortex_velocity(x: &[f64], radius: f64) -> [f64; 2] {
    let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
    if r >= radius || r == 0.0 {
        return [0.0, 0.0];
    }
    let a = 1.0 - (4.0 * PI * r).cos();
    [a * x[1] / r, -a * x[0] / r]
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataSample {
    pub seed: SampleSeed,
    pub ys: [f64; NUM_RANDOM_VARIABLES],
    pub initial: State,
    pub params: ModelParams,
}

/// Coefficients `μ + a·Y₅`, `λ + a·Y₆`, `κ + a·Y₇`.
pub fn realize_params(spec: &RandomDataSpec, ys: &[f64; NUM_RANDOM_VARIABLES]) -> ModelParams {
    ModelParams {
        mu: spec.base.mu + spec.amp_coef * ys[4],
        lambda: spec.base.lambda + spec.amp_coef * ys[5],
        kappa: spec.base.kappa + spec.amp_coef * ys[6],
        ..spec.base.clone()
    }
}

/// Builds the initial state and coefficients for given `Y₁..Y₇`.
pub fn realize(spec: &RandomDataSpec, grid: &Grid, ys: &[f64; NUM_RANDOM_VARIABLES]) -> Result<(State, ModelParams)> {
    let d = grid.dim();
    let phase = |x: &[f64]| 2.0 * PI * (x[0] + x[1]);
    let rho = grid.project(|x| spec.rho_mean + spec.amp_rho * ys[0] * phase(x).cos());
    let theta = grid.project(|x| spec.theta_mean + spec.amp_theta * ys[3] * phase(x).sin());
    let mut u = VectorField::zeros(d, grid.num_cells());
    for i in 0..d {
        let shift = match i {
            0 => spec.amp_u * ys[1],
            1 => spec.amp_u * ys[2],
            _ => 0.0,
        };
        u[i] = grid.project(|x| {
            shift
                + if i < 2 {
                    vortex_velocity(x, spec.vortex_radius)[i]
                } else {
                    0.0
                }
        });
    }
    let params = realize_params(spec, ys);
    let state = State { rho, u, theta };
    if !state.is_positive() {
        return Err(NsfError::PositivityViolation(format!(
            "min rho {}, min theta {}",
            state.rho.min(),
            state.theta.min()
        )));
    }
    if !(params.mu > 0.0 && params.lambda >= 0.0 && params.kappa > 0.0) {
        return Err(NsfError::PositivityViolation("perturbed coefficients out of range".into()));
    }
    Ok((state, params))
}

pub fn draw_sample(spec: &RandomDataSpec, grid: &Grid, seed: SampleSeed) -> Result<DataSample> {
    let ys = draw_uniforms(seed);
    let (initial, params) = realize(spec, grid, &ys)?;
    Ok(DataSample {
        seed,
        ys,
        initial,
        params,
    })
}

pub const MANIFEST_HEADER: &str = "n,m,Y1,Y2,Y3,Y4,Y5,Y6,Y7,mu,lambda,kappa";

/// One manifest row: `n,m,Y1..Y7,mu,lambda,kappa`.
pub fn manifest_row(seed: SampleSeed, ys: &[f64; NUM_RANDOM_VARIABLES], params: &ModelParams) -> String {
    let mut row = format!("{},{}", seed.sample_index, seed.realization_index);
    for y in ys {
        row.push_str(&format!(",{y:?}"));
    }
    row.push_str(&format!(",{:?},{:?},{:?}", params.mu, params.lambda, params.kappa));
    row
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_perturbation_is_the_deterministic_vortex() {
        let g = Grid::new(2, 16).unwrap();
        let spec = RandomDataSpec::default();
        let (s, p) = realize(&spec, &g, &[0.0; 7]).unwrap();
        assert!(s.rho.iter().all(|&v| (v - 1.0).abs() < 1e-14));
        assert!(s.theta.iter().all(|&v| (v - 2.0).abs() < 1e-14));
        assert_eq!(p.mu, spec.base.mu);
        assert_eq!(p.kappa, spec.base.kappa);
    }

    #[test]
    fn density_at_origin_with_unit_y1() {
        let spec = RandomDataSpec::default();
        let rho0 = |x: &[f64]| spec.rho_mean + spec.amp_rho * 1.0 * (2.0 * PI * (x[0] + x[1])).cos();
        assert!((rho0(&[0.0, 0.0]) - 1.1).abs() < 1e-15);
    }

    #[test]
    fn vortex_speed_at_quarter_radius() {
        let x = [0.25 / 2f64.sqrt(), 0.25 / 2f64.sqrt()];
        let v = vortex_velocity(&x, 0.5);
        let speed = (v[0] * v[0] + v[1] * v[1]).sqrt();
        assert!((speed - 2.0).abs() < 1e-12);
        let r = 0.25;
        assert!((v[0] - 2.0 * x[1] / r).abs() < 1e-12);
        assert!((v[1] + 2.0 * x[0] / r).abs() < 1e-12);
        assert_eq!(vortex_velocity(&[0.0, 0.0], 0.5), [0.0, 0.0]);
    }

    #[test]
    fn vortex_is_continuous_at_cutoff() {
        for k in 0..16 {
            let a = k as f64 * PI / 8.0;
            let inside = vortex_velocity(&[(0.5 - 1e-13) * a.cos(), (0.5 - 1e-13) * a.sin()], 0.5);
            let outside = vortex_velocity(&[(0.5 + 1e-13) * a.cos(), (0.5 + 1e-13) * a.sin()], 0.5);
            assert!((inside[0] - outside[0]).abs() < 1e-12);
            assert!((inside[1] - outside[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_gives_identical_sample() {
        let g = Grid::new(2, 8).unwrap();
        let spec = RandomDataSpec::default();
        let seed = SampleSeed::new(42, 3, 1);
        let a = draw_sample(&spec, &g, seed).unwrap();
        let b = draw_sample(&spec, &g, seed).unwrap();
        assert_eq!(a, b);
        assert!(a.initial.rho.min() >= 1.0 - 0.1);
        assert!(a.initial.theta.min() >= 2.0 - 0.2);
    }

    #[test]
    fn streams_differ_across_indices() {
        let mut a = stream_split(7, 0, 0);
        let mut b = stream_split(7, 1, 0);
        let mut c = stream_split(7, 0, 1);
        let da: Vec<u64> = (0..1000).map(|_| a.next_u64()).collect();
        let db: Vec<u64> = (0..1000).map(|_| b.next_u64()).collect();
        let dc: Vec<u64> = (0..1000).map(|_| c.next_u64()).collect();
        assert!(da.iter().zip(&db).all(|(x, y)| x != y));
        assert!(da.iter().zip(&dc).all(|(x, y)| x != y));
        assert_eq!(stream_split(7, 5, 2).next_u64(), stream_split(7, 5, 2).next_u64());
    }

    #[test]
    fn uniform_mean_is_near_zero() {
        let mut rng = stream_split(1, 0, 0);
        let n = 100_000;
        let mean = (0..n).map(|_| uniform_symmetric(&mut rng)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02);
    }

    #[test]
    fn uniform_passes_kolmogorov_smirnov() {
        let mut rng = stream_split(2024, 0, 0);
        let n = 10_000;
        let mut v: Vec<f64> = (0..n).map(|_| uniform_symmetric(&mut rng)).collect();
        v.sort_by(f64::total_cmp);
        let mut dmax = 0.0f64;
        for (i, &y) in v.iter().enumerate() {
            assert!(y > -1.0 && y < 1.0);
            let cdf = (y + 1.0) / 2.0;
            dmax = dmax.max((cdf - i as f64 / n as f64).abs()).max(((i + 1) as f64 / n as f64 - cdf).abs());
        }
        // 1% critical value 1.628/√n
        assert!(dmax < 1.628 / (n as f64).sqrt(), "KS statistic {dmax}");
    }

    #[test]
    fn consecutive_samples_are_uncorrelated() {
        let n = 10_000u64;
        let y1: Vec<f64> = (0..n).map(|k| draw_uniforms(SampleSeed::new(9, k, 0))[0]).collect();
        let mean = y1.iter().sum::<f64>() / n as f64;
        let var = y1.iter().map(|y| (y - mean).powi(2)).sum::<f64>();
        let cov = y1.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>();
        assert!((cov / var).abs() < 0.05);
    }

    #[test]
    fn projection_preserves_mass() {
        let g = Grid::new(2, 32).unwrap();
        let spec = RandomDataSpec::default();
        let (s, _) = realize(&spec, &g, &[0.7, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        // ∫ρ₀ = 4 exactly since the cosine has zero mean on the torus
        assert!((g.integrate(&s.rho) - 4.0).abs() < 1e-10);
    }

    #[test]
    fn manifest_row_layout() {
        let ys = [0.5; 7];
        let row = manifest_row(SampleSeed::new(1, 4, 2), &ys, &ModelParams::default());
        assert!(row.starts_with("4,2,0.5,"));
        assert_eq!(row.split(',').count(), MANIFEST_HEADER.split(',').count());
    }
}
