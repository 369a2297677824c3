//! Convergence studies: error metrics E1–E4 against a fine reference
//! ensemble, the statistical study (fixed mesh, growing N) and the total
//! study (coupled mesh and N), with least-squares rate fits.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::ensemble::{
    pde_field_groups, post_process, reference_statistics, EnsembleRunner, FailurePolicy, FieldGroup,
    ReferenceStatistics, RunSpec, SampleCache, SampleFailure,
};
use crate::error::{NsfError, Result};
use crate::field::ScalarField;
use crate::grid::Grid;
use crate::sampling::{stream_split, uniform_symmetric, RandomDataSpec, SampleSeed};
use crate::scheme::SolverConfig;
use crate::stats::{
    boundedness_report, mean_and_deviation, neumaier_sum, norm, ExceedanceRow, NormSpec, DEFAULT_THRESHOLDS,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyMode {
    /// Fixed mesh, growing number of samples.
    Statistical,
    /// Mesh size and `1/N` refined together.
    Total,
}

impl StudyMode {
    pub fn label(&self) -> &'static str {
        match self {
            StudyMode::Statistical => "stat",
            StudyMode::Total => "total",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Samples are solutions of the finite volume scheme.
    Pde,
    /// Samples are i.i.d. Gaussian fields with a known law (no solver).
    Synthetic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    /// `N_S`.
    pub samples: usize,
    /// Cells per axis of the reference mesh, `h_ref = 2 / cells`.
    pub cells: usize,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig { samples: 1000, cells: 512 }
    }
}

/// Law of the synthetic backend: `U = μ + bias·h·ψ + σ Z` cellwise, with
/// `μ = 1 + a sin(πx₁) cos(πx₂)`, `σ = s (1 + ½ cos(πx₁))`, `ψ = cos(πx₁)`
/// and independent standard normal `Z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub mean_amplitude: f64,
    pub sigma: f64,
    pub bias: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            mean_amplitude: 0.5,
            sigma: 0.1,
            bias: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub mode: StudyMode,
    pub backend: Backend,
    pub master_seed: u64,
    pub dim: usize,
    /// Final time `T`.
    pub t_final: f64,
    /// Outer repetitions `M`.
    pub repetitions: usize,
    /// Schedule of `N`.
    pub samples: Vec<usize>,
    /// Cells per axis for each level; defaults to the reference mesh
    /// (statistical) or `32·2ⁿ` (total).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cells: Option<Vec<usize>>,
    pub norms: Vec<NormSpec>,
    pub reference: ReferenceConfig,
    pub data: RandomDataSpec,
    pub solver: SolverConfig,
    /// Thresholds `M` of the boundedness report.
    pub thresholds: Vec<f64>,
    pub synthetic: SyntheticSpec,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            mode: StudyMode::Statistical,
            backend: Backend::Pde,
            master_seed: 0,
            dim: 2,
            t_final: 0.1,
            repetitions: 40,
            samples: vec![10, 20, 40, 80],
            cells: None,
            norms: vec![NormSpec::Lp(1.0), NormSpec::Lp(2.0), NormSpec::SobolevNeg(2)],
            reference: ReferenceConfig::default(),
            data: RandomDataSpec::default(),
            solver: SolverConfig::default(),
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            synthetic: SyntheticSpec::default(),
        }
    }
}

/// One point of a study schedule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Level {
    pub cells: usize,
    pub samples: usize,
}

impl StudyConfig {
    pub fn levels(&self) -> Vec<Level> {
        let cells = match &self.cells {
            Some(c) => c.clone(),
            None => match self.mode {
                StudyMode::Statistical => vec![self.reference.cells],
                StudyMode::Total => (0..self.samples.len()).map(|n| 32 << n).collect(),
            },
        };
        let cells = if cells.len() == 1 { vec![cells[0]; self.samples.len()] } else { cells };
        cells
            .into_iter()
            .zip(&self.samples)
            .map(|(cells, &samples)| Level { cells, samples })
            .collect()
    }

    pub fn run_spec(&self) -> RunSpec {
        RunSpec {
            data: self.data.clone(),
            solver: self.solver.clone(),
            t_final: self.t_final,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NsfError::Config(m));
        if self.dim != 2 && self.dim != 3 {
            return bad(format!("dimension must be 2 or 3, got {}", self.dim));
        }
        if self.samples.is_empty() || self.samples.contains(&0) {
            return bad("sample schedule must be nonempty with N >= 1".into());
        }
        if self.repetitions == 0 {
            return bad("repetitions M must be >= 1".into());
        }
        if self.reference.samples == 0 {
            return bad("reference ensemble needs N_S >= 1".into());
        }
        if self.norms.is_empty() {
            return bad("at least one norm is required".into());
        }
        for n in &self.norms {
            n.validate(self.dim)?;
        }
        if let Some(c) = &self.cells {
            if c.len() != 1 && c.len() != self.samples.len() {
                return bad(format!(
                    "cells schedule has {} entries, sample schedule has {}",
                    c.len(),
                    self.samples.len()
                ));
            }
        }
        let r = self.reference.cells;
        for level in self.levels() {
            if level.cells < 2 || r % level.cells != 0 {
                return bad(format!("{} cells per axis do not nest in the {r}-cell reference mesh", level.cells));
            }
            if self.mode == StudyMode::Total && level.cells >= r {
                return bad(format!("reference mesh ({r}) must be finer than every study mesh ({})", level.cells));
            }
        }
        if (self.samples.len() as u64) > 0 && self.reference.samples as u64 + *self.samples.iter().max().unwrap() as u64 >= 1 << 32 {
            return bad("sample indices exceed 32 bits".into());
        }
        if self.repetitions as u64 >= 1 << 32 {
            return bad("repetition count exceeds 32 bits".into());
        }
        if !(self.t_final >= 0.0) {
            return bad(format!("final time must be >= 0, got {}", self.t_final));
        }
        if self.backend == Backend::Pde {
            self.run_spec().validate()?;
        } else if !(self.synthetic.sigma > 0.0) {
            return bad("synthetic sigma must be > 0".into());
        }
        Ok(())
    }
}

/// Seeds of realization `m ≥ 1`: sample indices `N_S .. N_S + n_max`, disjoint
/// from the reference ensemble's `0 .. N_S` at realization 0.
pub fn study_seeds(master_seed: u64, reference_samples: usize, realization: usize, n_max: usize) -> Vec<SampleSeed> {
    (0..n_max as u64)
        .map(|n| SampleSeed::new(master_seed, reference_samples as u64 + n, realization as u64))
        .collect()
}

/// Conservative block average of a field on a nested finer mesh.
pub fn restrict_reference(fine: &Grid, field: &[f64], coarse: &Grid) -> Result<ScalarField> {
    fine.check_scalar(field)?;
    let (nf, nc) = (fine.cells_per_axis(), coarse.cells_per_axis());
    if fine.dim() != coarse.dim() || nf % nc != 0 {
        return Err(NsfError::GridMismatch(format!(
            "cannot restrict a {nf}-cell mesh to a {nc}-cell mesh"
        )));
    }
    let r = nf / nc;
    if r == 1 {
        return Ok(ScalarField(field.to_vec()));
    }
    let mut acc: Vec<Vec<f64>> = vec![Vec::with_capacity(r.pow(fine.dim() as u32)); coarse.num_cells()];
    for (c, &v) in field.iter().enumerate() {
        let idx: Vec<isize> = fine.multi_index(c).into_iter().map(|i| (i / r) as isize).collect();
        acc[coarse.cell_index(&idx)].push(v);
    }
    let inv = 1.0 / r.pow(fine.dim() as u32) as f64;
    Ok(ScalarField(acc.into_iter().map(|v| neumaier_sum(v) * inv).collect()))
}

/// `(E1, E2)` from the per-repetition error norms: outer mean and outer `p`-mean.
pub fn outer_means(errors: &[f64], p: f64) -> (f64, f64) {
    let m = errors.len() as f64;
    let e1 = neumaier_sum(errors.iter().copied()) / m;
    let e2 = if p.is_infinite() {
        errors.iter().copied().fold(0.0, f64::max)
    } else {
        (neumaier_sum(errors.iter().map(|e| e.powf(p))) / m).powf(1.0 / p)
    };
    (e1, e2)
}

fn group_norm(grid: &Grid, a: &[ScalarField], b: &[ScalarField], g: &FieldGroup, spec: NormSpec) -> Result<f64> {
    let diff: Vec<Vec<f64>> = (g.offset..g.offset + g.len)
        .map(|k| a[k].iter().zip(b[k].iter()).map(|(x, y)| x - y).collect())
        .collect();
    let comps: Vec<&[f64]> = diff.iter().map(|v| v.as_slice()).collect();
    norm(grid, &comps, spec)
}

/// `(E1, E2)` for estimators of the mean: `means[m]` is the sample mean of realization `m`.
pub fn error_mean_e1_e2(
    grid: &Grid,
    means: &[Vec<ScalarField>],
    reference: &[ScalarField],
    group: &FieldGroup,
    spec: NormSpec,
) -> Result<(f64, f64)> {
    let errors = means
        .iter()
        .map(|m| group_norm(grid, m, reference, group, spec))
        .collect::<Result<Vec<_>>>()?;
    Ok(outer_means(&errors, spec.exponent()))
}

/// `(E3, E4)`: the same metrics applied to deviation estimators.
pub fn error_dev_e3_e4(
    grid: &Grid,
    deviations: &[Vec<ScalarField>],
    reference: &[ScalarField],
    group: &FieldGroup,
    spec: NormSpec,
) -> Result<(f64, f64)> {
    error_mean_e1_e2(grid, deviations, reference, group, spec)
}

/// Least-squares slope of `log₂ y` against `log₂ x`; `NaN` with fewer than
/// three points or any nonpositive value.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    if x.len() < 3 || x.iter().chain(y).any(|&v| !(v > 0.0)) {
        return f64::NAN;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.log2()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.log2()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Orders `log₂(y_{i+1}/y_i) / log₂(x_{i+1}/x_i)` between consecutive points.
pub fn interval_orders(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xw, yw)| (yw[1] / yw[0]).log2() / (xw[1] / xw[0]).log2())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub study: String,
    pub field: String,
    pub metric: String,
    pub norm: NormSpec,
    pub p: f64,
    pub h: f64,
    pub cells: usize,
    pub samples: usize,
    pub repetitions: usize,
    pub value: f64,
    pub slope_fit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalOrder {
    pub field: String,
    pub metric: String,
    pub norm: NormSpec,
    pub x_lo: f64,
    pub x_hi: f64,
    pub order: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Accounting {
    pub reference_solver_runs: usize,
    pub study_solver_runs: usize,
    pub cache_hits: usize,
    pub reference_seconds: f64,
    pub study_seconds: f64,
    pub failures: Vec<SampleFailure>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub mode: StudyMode,
    pub rows: Vec<ReportRow>,
    pub intervals: Vec<IntervalOrder>,
    pub exceedance: Vec<ExceedanceRow>,
    pub accounting: Accounting,
}

pub const REPORT_HEADER: &str = "study,field,metric,norm,p,h,N,M,value,slope_fit";

impl ErrorReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{REPORT_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{:?},{:?},{},{},{:?},{:?}",
                r.study, r.field, r.metric, r.norm, r.p, r.h, r.samples, r.repetitions, r.value, r.slope_fit
            )?;
        }
        Ok(())
    }

    pub fn write_orders_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "study,field,metric,norm,x_lo,x_hi,order")?;
        for o in &self.intervals {
            writeln!(
                w,
                "{},{},{},{},{:?},{:?},{:?}",
                self.mode.label(),
                o.field,
                o.metric,
                o.norm,
                o.x_lo,
                o.x_hi,
                o.order
            )?;
        }
        Ok(())
    }

    /// Plot data for one norm: `x` is `N` (statistical) or `h` (total); the
    /// reference columns are power laws through each series' first point
    /// (`N^{-1/2}`, or `h^{1/2}` and `h`).
    pub fn write_plot_csv<W: Write>(&self, norm: NormSpec, mut w: W) -> Result<()> {
        writeln!(w, "field,metric,x,y,ref_a,ref_b")?;
        for ((field, metric), rows) in self.series(norm) {
            let x0 = self.abscissa(rows[0]);
            let y0 = rows[0].value;
            for r in rows {
                let x = self.abscissa(r);
                let (a, b) = match self.mode {
                    StudyMode::Statistical => (y0 * (x / x0).powf(-0.5), String::new()),
                    StudyMode::Total => (y0 * (x / x0).powf(0.5), format!("{:?}", y0 * (x / x0))),
                };
                writeln!(w, "{field},{metric},{x:?},{:?},{a:?},{b}", r.value)?;
            }
        }
        Ok(())
    }

    fn abscissa(&self, r: &ReportRow) -> f64 {
        match self.mode {
            StudyMode::Statistical => r.samples as f64,
            StudyMode::Total => r.h,
        }
    }

    /// Rows of one norm grouped by `(field, metric)`, in report order.
    pub fn series(&self, norm: NormSpec) -> Vec<((String, String), Vec<&ReportRow>)> {
        let mut order = Vec::new();
        let mut map: BTreeMap<(String, String), Vec<&ReportRow>> = BTreeMap::new();
        for r in self.rows.iter().filter(|r| r.norm == norm) {
            let key = (r.field.clone(), r.metric.clone());
            if !map.contains_key(&key) {
                order.push(key.clone());
            }
            map.entry(key).or_default().push(r);
        }
        order.into_iter().map(|k| { let v = map.remove(&k).unwrap(); (k, v) }).collect()
    }

    /// Fitted slope of one series.
    pub fn slope(&self, field: &str, metric: &str, norm: NormSpec) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.field == field && r.metric == metric && r.norm == norm)
            .map(|r| r.slope_fit)
    }

    pub fn write_exceedance_csv<W: Write>(&self, w: W) -> Result<()> {
        crate::stats::write_exceedance_csv(w, &self.exceedance)
    }
}

/// How samples are executed: cache, worker count, failure policy.
#[derive(Clone, Copy, Debug)]
pub struct Execution<'a> {
    pub cache: Option<&'a SampleCache>,
    pub workers: usize,
    pub policy: FailurePolicy,
}

/// Post-processed member fields of one level, grouped by realization.
struct LevelSamples {
    grid: Grid,
    /// `members[m]`: fields of the successful samples of realization `m + 1`, by sample index.
    members: Vec<Vec<Vec<ScalarField>>>,
}

struct SyntheticLaw {
    mean: Vec<ScalarField>,
    sigma: ScalarField,
    psi: ScalarField,
}

impl SyntheticLaw {
    fn new(spec: &SyntheticSpec, grid: &Grid) -> Self {
        use std::f64::consts::PI;
        let a = spec.mean_amplitude;
        SyntheticLaw {
            mean: vec![grid.project(|x| 1.0 + a * (PI * x[0]).sin() * (PI * x[1]).cos())],
            sigma: grid.project(|x| spec.sigma * (1.0 + 0.5 * (PI * x[0]).cos())),
            psi: grid.project(|x| (PI * x[0]).cos()),
        }
    }

    fn restrict(&self, fine: &Grid, coarse: &Grid) -> Result<Self> {
        Ok(SyntheticLaw {
            mean: vec![restrict_reference(fine, &self.mean[0], coarse)?],
            sigma: restrict_reference(fine, &self.sigma, coarse)?,
            psi: restrict_reference(fine, &self.psi, coarse)?,
        })
    }

    fn deviation(&self) -> Vec<ScalarField> {
        let c = (2.0 / std::f64::consts::PI).sqrt();
        vec![self.sigma.map(|s| s * c)]
    }

    /// One sample `μ + bias·h·ψ + σ Z` drawn from the seed's stream.
    fn draw(&self, grid: &Grid, bias: f64, seed: SampleSeed) -> Vec<ScalarField> {
        let mut rng = stream_split(seed.master_seed, seed.sample_index, seed.realization_index);
        let n = grid.num_cells();
        let mut z = Vec::with_capacity(n + 1);
        while z.len() < n {
            let u1 = 0.5 * (uniform_symmetric(&mut rng) + 1.0);
            let u2 = 0.5 * (uniform_symmetric(&mut rng) + 1.0);
            let r = (-2.0 * u1.ln()).sqrt();
            let t = 2.0 * std::f64::consts::PI * u2;
            z.push(r * t.cos());
            z.push(r * t.sin());
        }
        let h = grid.h();
        vec![ScalarField(
            (0..n)
                .map(|c| self.mean[0][c] + bias * h * self.psi[c] + self.sigma[c] * z[c])
                .collect(),
        )]
    }
}

fn synthetic_groups() -> Vec<FieldGroup> {
    vec![FieldGroup { name: "g", offset: 0, len: 1, primary: true }]
}

/// Runs the study described by `config`.
pub fn run_study(config: &StudyConfig, exec: Execution<'_>) -> Result<ErrorReport> {
    config.validate()?;
    let levels = config.levels();
    let ref_grid = Grid::new(config.dim, config.reference.cells)?;
    let mut accounting = Accounting::default();
    let mut exceedance = Vec::new();

    let t0 = Instant::now();
    let run = config.run_spec();
    let runner = EnsembleRunner::new(&run, exec.cache, exec.workers, exec.policy);
    let (reference, law, groups) = match config.backend {
        Backend::Pde => {
            let r = reference_statistics(&runner, &ref_grid, config.master_seed, config.reference.samples)?;
            accounting.reference_solver_runs = r.solver_runs;
            accounting.failures.extend(r.failures.iter().cloned());
            exceedance.extend(boundedness_report(&r.monitors, &config.thresholds, ref_grid.h()));
            (r, None, pde_field_groups(config.dim))
        }
        Backend::Synthetic => {
            let law = SyntheticLaw::new(&config.synthetic, &ref_grid);
            let r = ReferenceStatistics {
                grid: ref_grid.clone(),
                samples: 0,
                mean: law.mean.clone(),
                deviation: law.deviation(),
                monitors: Vec::new(),
                failures: Vec::new(),
                solver_runs: 0,
            };
            (r, Some(law), synthetic_groups())
        }
    };
    accounting.reference_seconds = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    // one batch of samples per distinct mesh, shared by all levels on that mesh
    let mut per_mesh: BTreeMap<usize, LevelSamples> = BTreeMap::new();
    for &cells in levels.iter().map(|l| &l.cells).collect::<std::collections::BTreeSet<_>>() {
        let n_max = levels.iter().filter(|l| l.cells == cells).map(|l| l.samples).max().unwrap();
        let grid = Grid::new(config.dim, cells)?;
        let seeds: Vec<SampleSeed> = (1..=config.repetitions)
            .flat_map(|m| study_seeds(config.master_seed, config.reference.samples, m, n_max))
            .collect();
        let mut members = vec![Vec::new(); config.repetitions];
        let mut monitors = Vec::new();
        match &law {
            None => {
                let cv = config.data.base.cv();
                let outcome = runner.run_with(&grid, &seeds, |r| Ok((post_process(r.final_state(), cv)?, r.lambda())))?;
                accounting.study_solver_runs += outcome.solver_runs;
                accounting.cache_hits += outcome.cache_hits;
                accounting.failures.extend(outcome.failures);
                for (seed, (fields, lambda)) in outcome.results {
                    members[seed.realization_index as usize - 1].push(fields);
                    monitors.push(lambda);
                }
            }
            Some(law) => {
                let local = law.restrict(&ref_grid, &grid)?;
                for seed in seeds {
                    members[seed.realization_index as usize - 1].push(local.draw(&grid, config.synthetic.bias, seed));
                }
            }
        }
        if !monitors.is_empty() {
            exceedance.extend(boundedness_report(&monitors, &config.thresholds, grid.h()));
        }
        per_mesh.insert(cells, LevelSamples { grid, members });
    }

    let study = config.mode.label();
    let mut rows = Vec::new();
    for level in &levels {
        let samples = &per_mesh[&level.cells];
        let grid = &samples.grid;
        let ref_mean = reference
            .mean
            .iter()
            .map(|f| restrict_reference(&ref_grid, f, grid))
            .collect::<Result<Vec<_>>>()?;
        let ref_dev = reference
            .deviation
            .iter()
            .map(|f| restrict_reference(&ref_grid, f, grid))
            .collect::<Result<Vec<_>>>()?;
        let mut means = Vec::with_capacity(config.repetitions);
        let mut devs = Vec::with_capacity(config.repetitions);
        for realization in &samples.members {
            let used = &realization[..level.samples.min(realization.len())];
            if used.is_empty() {
                return Err(NsfError::Config(format!(
                    "no successful samples left for N = {} on the {}-cell mesh",
                    level.samples, level.cells
                )));
            }
            let lists: Vec<Vec<&[f64]>> = used.iter().map(|f| f.iter().map(|c| c.as_slice()).collect()).collect();
            let (mean, dev) = mean_and_deviation(&lists);
            means.push(mean);
            devs.push(dev);
        }
        for group in &groups {
            for &spec in &config.norms {
                let (e1, e2) = error_mean_e1_e2(grid, &means, &ref_mean, group, spec)?;
                let (e3, e4) = error_dev_e3_e4(grid, &devs, &ref_dev, group, spec)?;
                for (metric, value) in [("E1", e1), ("E2", e2), ("E3", e3), ("E4", e4)] {
                    rows.push(ReportRow {
                        study: study.to_string(),
                        field: group.name.to_string(),
                        metric: metric.to_string(),
                        norm: spec,
                        p: spec.exponent(),
                        h: grid.h(),
                        cells: level.cells,
                        samples: level.samples,
                        repetitions: config.repetitions,
                        value,
                        slope_fit: f64::NAN,
                    });
                }
            }
        }
    }
    accounting.study_seconds = t1.elapsed().as_secs_f64();

    let mut report = ErrorReport {
        mode: config.mode,
        rows,
        intervals: Vec::new(),
        exceedance,
        accounting,
    };
    fill_slopes(&mut report, &config.norms);
    Ok(report)
}

fn fill_slopes(report: &mut ErrorReport, norms: &[NormSpec]) {
    let mut slopes = Vec::new();
    let mut intervals = Vec::new();
    for &spec in norms {
        for ((field, metric), rows) in report.series(spec) {
            let x: Vec<f64> = rows.iter().map(|r| report.abscissa(r)).collect();
            let y: Vec<f64> = rows.iter().map(|r| r.value).collect();
            if x.len() < 3 {
                log::warn!("slope of {field}/{metric} needs at least 3 points");
            }
            let orders = interval_orders(&x, &y);
            for (k, o) in orders.into_iter().enumerate() {
                intervals.push(IntervalOrder {
                    field: field.clone(),
                    metric: metric.clone(),
                    norm: spec,
                    x_lo: x[k],
                    x_hi: x[k + 1],
                    order: o,
                });
            }
            slopes.push((field, metric, spec, fit_slope(&x, &y)));
        }
    }
    report.intervals = intervals;
    for (field, metric, spec, s) in slopes {
        for r in report.rows.iter_mut().filter(|r| r.field == field && r.metric == metric && r.norm == spec) {
            r.slope_fit = s;
        }
    }
}

#[derive(Serialize)]
pub struct StudyManifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub generator: &'static str,
    pub cache_key: &'static str,
    pub config: &'a StudyConfig,
    pub levels: Vec<Level>,
    pub reference_seeds: String,
    pub study_seeds: String,
    pub accounting: &'a Accounting,
}

pub const GENERATOR_DESCRIPTION: &str =
    "ChaCha8 (rand_chacha 0.3), key = master_seed little-endian in bytes 0..8, stream = n * 2^32 + m, Y = 2 * ((w >> 11) + 0.5) / 2^53 - 1";

impl<'a> StudyManifest<'a> {
    pub fn new(config: &'a StudyConfig, report: &'a ErrorReport) -> Self {
        let n_max = config.samples.iter().max().copied().unwrap_or(0);
        StudyManifest {
            tool: "nsfmc",
            version: env!("CARGO_PKG_VERSION"),
            generator: GENERATOR_DESCRIPTION,
            cache_key: "first 128 bits of SHA-256 over JSON(seed, d, cells, run spec, sample parameters)",
            config,
            levels: config.levels(),
            reference_seeds: format!(
                "master_seed = {}, n in [0, {}), m = 0",
                config.master_seed, config.reference.samples
            ),
            study_seeds: format!(
                "master_seed = {}, n in [{}, {}), m in [1, {}]; level N uses the first N of each m",
                config.master_seed,
                config.reference.samples,
                config.reference.samples + n_max,
                config.repetitions
            ),
            accounting: &report.accounting,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn restriction_examples() {
        let fine = Grid::new(2, 4).unwrap();
        let coarse = Grid::new(2, 2).unwrap();
        let v: Vec<f64> = (0..16).map(|c| c as f64).collect();
        let r = restrict_reference(&fine, &v, &coarse).unwrap();
        // row-major, last axis fastest: block (0,0) holds cells 0,1,4,5
        assert_eq!(r.0, vec![2.5, 4.5, 10.5, 12.5]);
        assert_eq!(restrict_reference(&fine, &v, &fine).unwrap().0, v);
        let c = vec![3.25; 16];
        assert!(restrict_reference(&fine, &c, &coarse).unwrap().iter().all(|&x| x == 3.25));
        assert!(restrict_reference(&fine, &v, &Grid::new(2, 3).unwrap()).is_err());
        assert!((fine.integrate(&v) - coarse.integrate(&r)).abs() < 1e-13);
    }

    #[test]
    fn outer_means_examples() {
        assert_eq!(outer_means(&[0.0, 0.0], 2.0), (0.0, 0.0));
        let (e1, e2) = outer_means(&[0.7], 2.0);
        assert_eq!(e1, e2);
        let (e1, e2) = outer_means(&[1.0, 3.0], 1.0);
        assert_eq!(e1, e2);
        let (e1, e2) = outer_means(&[1.0, 3.0], 2.0);
        assert_eq!(e1, 2.0);
        assert!((e2 - 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_deviation_error() {
        // two members on a 2x2 grid, one component
        let g = Grid::new(2, 2).unwrap();
        let a = [1.0, 2.0, 0.0, 4.0];
        let b = [3.0, 2.0, 2.0, 0.0];
        let (mean, dev) = mean_and_deviation(&[vec![&a[..]], vec![&b[..]]]);
        assert_eq!(mean[0].0, vec![2.0, 2.0, 1.0, 2.0]);
        assert_eq!(dev[0].0, vec![1.0, 0.0, 1.0, 2.0]);
        let reference = vec![ScalarField(vec![0.5; 4])];
        let group = FieldGroup { name: "x", offset: 0, len: 1, primary: true };
        let (e3, e4) = error_dev_e3_e4(&g, &[dev], &reference, &group, NormSpec::Lp(1.0)).unwrap();
        // |K| = 1: 0.5 + 0.5 + 0.5 + 1.5
        assert!((e3 - 3.0).abs() < 1e-15);
        assert_eq!(e3, e4);
    }

    #[test]
    fn slope_fit_and_orders() {
        let x = [8.0, 16.0, 32.0, 64.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.5)).collect();
        assert!((fit_slope(&x, &y) + 0.5).abs() < 1e-12);
        assert!(interval_orders(&x, &y).iter().all(|o| (o + 0.5).abs() < 1e-12));
        assert!(fit_slope(&x[..2], &y[..2]).is_nan());
        assert!(fit_slope(&x, &[1.0, 0.0, 1.0, 1.0]).is_nan());
    }

    #[test]
    fn levels_follow_mode_defaults() {
        let mut c = StudyConfig::default();
        assert!(c.levels().iter().all(|l| l.cells == 512));
        c.mode = StudyMode::Total;
        assert_eq!(c.levels().iter().map(|l| l.cells).collect::<Vec<_>>(), vec![32, 64, 128, 256]);
        assert!(c.validate().is_ok());
        c.cells = Some(vec![32, 64, 128, 512]);
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let c = StudyConfig::default();
        let text = serde_json::to_string_pretty(&c).unwrap();
        let back: StudyConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<StudyConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn synthetic_study_reports_are_reproducible() {
        let config = StudyConfig {
            backend: Backend::Synthetic,
            repetitions: 6,
            samples: vec![4, 8, 16],
            reference: ReferenceConfig { samples: 1, cells: 8 },
            ..StudyConfig::default()
        };
        let exec = Execution { cache: None, workers: 1, policy: FailurePolicy::Abort };
        let a = run_study(&config, exec).unwrap();
        let b = run_study(&config, exec).unwrap();
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        a.write_csv(&mut ca).unwrap();
        b.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
        assert_eq!(a.rows.len(), 3 * 3 * 4);
        assert!(a.rows.iter().all(|r| r.value >= 0.0 && r.slope_fit.is_finite()));
        for r in a.rows.iter().filter(|r| r.p == 1.0) {
            let twin = if r.metric == "E1" { "E2" } else if r.metric == "E3" { "E4" } else { continue };
            let other = a
                .rows
                .iter()
                .find(|o| o.metric == twin && o.norm == r.norm && o.samples == r.samples)
                .unwrap();
            assert!((r.value - other.value).abs() <= 1e-14 * r.value);
        }
        for r in a.rows.iter().filter(|r| r.p > 1.0 && (r.metric == "E1" || r.metric == "E3")) {
            let twin = if r.metric == "E1" { "E2" } else { "E4" };
            let other = a
                .rows
                .iter()
                .find(|o| o.metric == twin && o.norm == r.norm && o.samples == r.samples)
                .unwrap();
            assert!(other.value >= r.value * (1.0 - 1e-14));
        }
    }
}
