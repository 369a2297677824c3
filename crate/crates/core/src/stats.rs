//! Norms on the discrete torus and Monte Carlo estimators.
//!
//! The `W^{-k,2}` norm of a cell field `v` on an `n^d` grid uses the
//! normalized DFT `v̂_z = n^{-d} Σ_j v_j exp(-2πi z·j/n)` with signed modes
//! `z_i ∈ (-n/2, n/2]`, wave vectors `ξ = πz`, and
//!
//! ```text
//! ‖v‖²_{W^{-k,2}} = 2^d Σ_z (1 + π²|z|²)^{-k} |v̂_z|²
//! ```
//!
//! so that `v̂_0` is the mean value and a constant `c` has norm `|c| 2^{d/2}`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{NsfError, Result};
use crate::field::{ScalarField, VectorField};
use crate::grid::Grid;
use crate::thermo::ConservedTriple;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormSpec {
    /// `(Σ|K| |v_K|^p)^{1/p}`, `p ≥ 1`.
    Lp(f64),
    LInf,
    /// `W^{-k,2}` with integer `k > d/2`.
    SobolevNeg(u32),
}

impl NormSpec {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match *self {
            NormSpec::Lp(p) if !(p >= 1.0 && p.is_finite()) => {
                Err(NsfError::Config(format!("L^p norm needs finite p >= 1, got {p}")))
            }
            NormSpec::SobolevNeg(k) if 2 * k as usize <= dim => Err(NsfError::Config(format!(
                "W^(-k,2) norm needs k > d/2, got k = {k} for d = {dim}"
            ))),
            _ => Ok(()),
        }
    }

    /// Exponent of the outer power mean in the E2/E4 metrics.
    pub fn exponent(&self) -> f64 {
        match *self {
            NormSpec::Lp(p) => p,
            NormSpec::LInf => f64::INFINITY,
            NormSpec::SobolevNeg(_) => 2.0,
        }
    }
}

impl fmt::Display for NormSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormSpec::Lp(p) => write!(f, "L{p}"),
            NormSpec::LInf => write!(f, "Linf"),
            NormSpec::SobolevNeg(k) => write!(f, "H-{k}"),
        }
    }
}

impl FromStr for NormSpec {
    type Err = NsfError;

    /// Accepts `L<p>`, `Linf` and `H-<k>` (the `W^{-k,2}` norm).
    fn from_str(s: &str) -> Result<Self> {
        let bad = || NsfError::Config(format!("unknown norm '{s}' (expected L<p>, Linf or H-<k>)"));
        if s.eq_ignore_ascii_case("linf") {
            return Ok(NormSpec::LInf);
        }
        if let Some(k) = s.strip_prefix("H-") {
            return k.parse().map(NormSpec::SobolevNeg).map_err(|_| bad());
        }
        if let Some(p) = s.strip_prefix('L') {
            let p: f64 = p.parse().map_err(|_| bad())?;
            let spec = NormSpec::Lp(p);
            spec.validate(0)?;
            return Ok(spec);
        }
        Err(bad())
    }
}

impl Serialize for NormSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NormSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Signed Fourier mode of DFT index `k` on `n` points.
pub fn signed_mode(k: usize, n: usize) -> i64 {
    if 2 * k <= n {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// `(1 + π²|z|²)^{-k}`.
pub fn sobolev_weight(z: &[i64], k: u32) -> f64 {
    let z2: i64 = z.iter().map(|v| v * v).sum();
    (1.0 + std::f64::consts::PI.powi(2) * z2 as f64).powi(-(k as i32))
}

/// Normalized DFT coefficients `v̂_z` in the grid's row-major index order.
pub fn dft_coefficients(grid: &Grid, values: &[f64]) -> Vec<Complex64> {
    let n = grid.cells_per_axis();
    let d = grid.dim();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    let total = buf.len();
    for axis in 0..d {
        let stride = n.pow((d - 1 - axis) as u32);
        let block = stride * n;
        for outer in (0..total).step_by(block) {
            for inner in 0..stride {
                let base = outer + inner;
                for (k, l) in line.iter_mut().enumerate() {
                    *l = buf[base + k * stride];
                }
                fft.process(&mut line);
                for (k, l) in line.iter().enumerate() {
                    buf[base + k * stride] = *l;
                }
            }
        }
    }
    let scale = 1.0 / total as f64;
    buf.iter_mut().for_each(|c| *c *= scale);
    buf
}

/// `W^{-k,2}` weights in the grid's index order.
pub fn sobolev_weights(grid: &Grid, k: u32) -> Vec<f64> {
    let n = grid.cells_per_axis();
    (0..grid.num_cells())
        .map(|c| {
            let z: Vec<i64> = grid.multi_index(c).into_iter().map(|i| signed_mode(i, n)).collect();
            sobolev_weight(&z, k)
        })
        .collect()
}

fn sobolev_sq(grid: &Grid, comps: &[&[f64]], k: u32) -> f64 {
    let w = sobolev_weights(grid, k);
    let scale = 2f64.powi(grid.dim() as i32);
    comps
        .iter()
        .map(|v| {
            dft_coefficients(grid, v)
                .iter()
                .zip(&w)
                .map(|(c, w)| w * c.norm_sqr())
                .sum::<f64>()
        })
        .sum::<f64>()
        * scale
}

/// Constant `C` with `‖v‖_{W^{-k,2}} ≤ C ‖v‖_{L¹}` for every field on `grid`,
/// from `|v̂_z| ≤ 2^{-d} ‖v‖_{L¹}`.
pub fn l1_domination_constant(grid: &Grid, k: u32) -> f64 {
    let sum: f64 = sobolev_weights(grid, k).iter().sum();
    (sum / 2f64.powi(grid.dim() as i32)).sqrt()
}

/// Norm of a (possibly vector-valued) field; components are combined in the
/// Euclidean sense inside the norm.
pub fn norm(grid: &Grid, comps: &[&[f64]], spec: NormSpec) -> Result<f64> {
    spec.validate(grid.dim())?;
    for c in comps {
        grid.check_scalar(c)?;
    }
    let n = grid.num_cells();
    let mag = |cell: usize| comps.iter().map(|v| v[cell] * v[cell]).sum::<f64>().sqrt();
    Ok(match spec {
        NormSpec::Lp(p) => {
            let sum = neumaier_sum((0..n).map(|c| mag(c).powf(p)));
            (grid.cell_measure() * sum).powf(1.0 / p)
        }
        NormSpec::LInf => (0..n).map(mag).fold(0.0, f64::max),
        NormSpec::SobolevNeg(k) => sobolev_sq(grid, comps, k).sqrt(),
    })
}

pub fn scalar_norm(grid: &Grid, field: &[f64], spec: NormSpec) -> Result<f64> {
    norm(grid, &[field], spec)
}

pub fn vector_norm(grid: &Grid, field: &VectorField, spec: NormSpec) -> Result<f64> {
    let comps: Vec<&[f64]> = field.0.iter().map(|c| c.as_slice()).collect();
    norm(grid, &comps, spec)
}

/// Compensated (Neumaier) summation.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Sum of the values in sorted order, so the result does not depend on the order of `buf`.
fn ordered_sum(buf: &mut [f64]) -> f64 {
    buf.sort_unstable_by(f64::total_cmp);
    neumaier_sum(buf.iter().copied())
}

/// Cellwise mean of equally sized member fields.
pub fn mc_mean(members: &[&[f64]]) -> ScalarField {
    assert!(!members.is_empty(), "mean of an empty ensemble");
    let n = members[0].len();
    let inv = 1.0 / members.len() as f64;
    let mut buf = vec![0.0; members.len()];
    ScalarField(
        (0..n)
            .map(|c| {
                for (b, m) in buf.iter_mut().zip(members) {
                    *b = m[c];
                }
                ordered_sum(&mut buf) * inv
            })
            .collect(),
    )
}

/// Cellwise mean absolute deviation `(1/N) Σ |U_n - mean|`.
pub fn mc_deviation(members: &[&[f64]], mean: &[f64]) -> ScalarField {
    assert!(!members.is_empty(), "deviation of an empty ensemble");
    let inv = 1.0 / members.len() as f64;
    let mut buf = vec![0.0; members.len()];
    ScalarField(
        mean.iter()
            .enumerate()
            .map(|(c, &mu)| {
                for (b, m) in buf.iter_mut().zip(members) {
                    *b = (m[c] - mu).abs();
                }
                ordered_sum(&mut buf) * inv
            })
            .collect(),
    )
}

/// Componentwise mean and deviation of a list of multi-component fields.
pub fn mean_and_deviation(members: &[Vec<&[f64]>]) -> (Vec<ScalarField>, Vec<ScalarField>) {
    let ncomp = members[0].len();
    (0..ncomp)
        .map(|k| {
            let comp: Vec<&[f64]> = members.iter().map(|m| m[k]).collect();
            let mean = mc_mean(&comp);
            let dev = mc_deviation(&comp, &mean);
            (mean, dev)
        })
        .unzip()
}

/// Members `(ρ, m, S)` at a common time on a common grid, with their monitors `Λ_h`.
#[derive(Clone, Debug)]
pub struct Ensemble {
    pub members: Vec<ConservedTriple>,
    pub monitors: Vec<f64>,
}

impl Ensemble {
    pub fn new(members: Vec<ConservedTriple>, monitors: Vec<f64>) -> Result<Self> {
        if members.is_empty() {
            return Err(NsfError::Config("ensemble needs at least one member".into()));
        }
        if monitors.len() != members.len() {
            return Err(NsfError::Config("one monitor value per member required".into()));
        }
        let (d, n) = (members[0].dim(), members[0].num_cells());
        if members.iter().any(|m| m.dim() != d || m.num_cells() != n) {
            return Err(NsfError::GridMismatch("ensemble members differ in shape".into()));
        }
        Ok(Ensemble { members, monitors })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    fn assemble(&self, fields: Vec<ScalarField>) -> ConservedTriple {
        let d = self.members[0].dim();
        let mut it = fields.into_iter();
        let rho = it.next().unwrap();
        let m = VectorField((0..d).map(|_| it.next().unwrap()).collect());
        let s = it.next().unwrap();
        ConservedTriple { rho, m, s }
    }

    fn component_lists(&self) -> Vec<Vec<&[f64]>> {
        self.members
            .iter()
            .map(|t| t.components().into_iter().map(|f| f.as_slice()).collect())
            .collect()
    }

    pub fn mean(&self) -> ConservedTriple {
        self.mean_and_deviation().0
    }

    pub fn deviation(&self) -> ConservedTriple {
        self.mean_and_deviation().1
    }

    pub fn mean_and_deviation(&self) -> (ConservedTriple, ConservedTriple) {
        let (mean, dev) = mean_and_deviation(&self.component_lists());
        (self.assemble(mean), self.assemble(dev))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceRow {
    pub h: f64,
    pub threshold: f64,
    pub count: usize,
    pub total: usize,
    pub fraction: f64,
}

pub const DEFAULT_THRESHOLDS: [f64; 8] = [2.0, 2.5, 3.0, 5.0, 10.0, 20.0, 50.0, 100.0];

/// Empirical `P(Λ_h > M)` for each threshold `M`.
pub fn boundedness_report(monitors: &[f64], thresholds: &[f64], h: f64) -> Vec<ExceedanceRow> {
    thresholds
        .iter()
        .map(|&m| {
            // a NaN monitor counts as an exceedance
            let count = monitors.iter().filter(|&&l| !(l <= m)).count();
            ExceedanceRow {
                h,
                threshold: m,
                count,
                total: monitors.len(),
                fraction: if monitors.is_empty() { 0.0 } else { count as f64 / monitors.len() as f64 },
            }
        })
        .collect()
}

pub const EXCEEDANCE_HEADER: &str = "h,M,count,N,exceedance";

pub fn write_exceedance_csv<W: Write>(mut w: W, rows: &[ExceedanceRow]) -> Result<()> {
    writeln!(w, "{EXCEEDANCE_HEADER}")?;
    for r in rows {
        writeln!(w, "{:?},{:?},{},{},{:?}", r.h, r.threshold, r.count, r.total, r.fraction)?;
    }
    Ok(())
}
