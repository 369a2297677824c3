//! Monte Carlo sample execution: one trajectory per seed, a worker pool at
//! sample granularity, and an on-disk cache of final states.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{NsfError, Result};
use crate::field::ScalarField;
use crate::grid::Grid;
use crate::sampling::{draw_sample, RandomDataSpec, SampleSeed, NUM_RANDOM_VARIABLES};
use crate::scheme::{march, BoundMonitor, MarchOptions, SolverConfig};
use crate::stats::mean_and_deviation;
use crate::thermo::{conserved_triple, ModelParams, State};

/// Everything besides the seed and the grid that determines a sample's result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub data: RandomDataSpec,
    pub solver: SolverConfig,
    pub t_final: f64,
}

impl RunSpec {
    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.solver.validate()?;
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(NsfError::Config(format!("final time must be >= 0, got {}", self.t_final)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    /// Stop at the first failed sample.
    #[default]
    Abort,
    /// Drop failed samples and report them.
    Exclude,
}

impl FromStr for FailurePolicy {
    type Err = NsfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "abort" => Ok(FailurePolicy::Abort),
            "exclude" => Ok(FailurePolicy::Exclude),
            _ => Err(NsfError::Config(format!("unknown failure policy '{s}'"))),
        }
    }
}

/// Summary of one trajectory plus its final state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub seed: SampleSeed,
    pub cells: usize,
    pub ys: [f64; NUM_RANDOM_VARIABLES],
    pub params: ModelParams,
    pub time: f64,
    pub steps: usize,
    pub newton_iters: usize,
    pub linear_iters: usize,
    pub monitor: BoundMonitor,
    /// `Σ|K|ρ(T) - Σ|K|ρ(0)`.
    pub mass_drift: f64,
    #[serde(skip)]
    pub state: Option<State>,
}

impl SampleResult {
    pub fn lambda(&self) -> f64 {
        self.monitor.value()
    }

    pub fn final_state(&self) -> &State {
        self.state.as_ref().expect("sample result carries its final state")
    }
}

/// Runs one sample from its seed.
pub fn run_sample(grid: &Grid, run: &RunSpec, seed: SampleSeed) -> Result<SampleResult> {
    let sample = draw_sample(&run.data, grid, seed)?;
    let traj = march(grid, &sample.initial, run.t_final, &sample.params, &run.solver, &MarchOptions::default())?;
    let state = traj.final_state().clone();
    Ok(SampleResult {
        seed,
        cells: grid.cells_per_axis(),
        ys: sample.ys,
        time: traj.final_time(),
        steps: traj.steps.len(),
        newton_iters: traj.steps.iter().map(|s| s.newton_iters).sum(),
        linear_iters: traj.steps.iter().map(|s| s.linear_iters).sum(),
        monitor: traj.monitor,
        mass_drift: grid.integrate(&state.rho) - grid.integrate(&sample.initial.rho),
        params: sample.params,
        state: Some(state),
    })
}

const CACHE_MAGIC: &[u8; 8] = b"NSFSMP01";
const CACHE_FORMAT: u32 = 1;

/// Directory of cached sample results, one file per content key.
#[derive(Clone, Debug)]
pub struct SampleCache {
    dir: PathBuf,
}

#[derive(Serialize)]
struct KeyMaterial<'a> {
    format: u32,
    seed: SampleSeed,
    dim: usize,
    cells: usize,
    run: &'a RunSpec,
    params: &'a ModelParams,
}

impl SampleCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(SampleCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// 128-bit content key (hex) of seed triple, grid, run spec and the sample's parameters.
    pub fn key(grid: &Grid, run: &RunSpec, seed: SampleSeed) -> String {
        let params = crate::sampling::realize_params(&run.data, &crate::sampling::draw_uniforms(seed));
        let material = KeyMaterial {
            format: CACHE_FORMAT,
            seed,
            dim: grid.dim(),
            cells: grid.cells_per_axis(),
            run,
            params: &params,
        };
        let bytes = serde_json::to_vec(&material).expect("key material serializes");
        hex::encode(&Sha256::digest(&bytes)[..16])
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.sample"))
    }

    /// Cached result, or `None` when absent or unreadable.
    pub fn load(&self, key: &str, grid: &Grid) -> Option<SampleResult> {
        let mut bytes = Vec::new();
        fs::File::open(self.path(key)).ok()?.read_to_end(&mut bytes).ok()?;
        match decode(&bytes, grid) {
            Ok(r) => Some(r),
            Err(e) => {
                log::warn!("ignoring unreadable cache entry {key}: {e}");
                None
            }
        }
    }

    pub fn store(&self, key: &str, result: &SampleResult) -> Result<()> {
        let bytes = encode(result)?;
        let tmp = self.dir.join(format!("{key}.tmp{}", std::process::id()));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, self.path(key))?;
        Ok(())
    }
}

fn encode(result: &SampleResult) -> Result<Vec<u8>> {
    let meta = serde_json::to_vec(result)?;
    let values = result.final_state().pack();
    let mut out = Vec::with_capacity(24 + meta.len() + 8 * values.len());
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn decode(bytes: &[u8], grid: &Grid) -> Result<SampleResult> {
    let err = |m: &str| NsfError::Format(m.to_string());
    let take_u64 = |at: usize| -> Result<u64> {
        bytes
            .get(at..at + 8)
            .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
            .ok_or_else(|| err("truncated cache entry"))
    };
    if bytes.get(..8) != Some(CACHE_MAGIC.as_slice()) {
        return Err(err("bad cache magic"));
    }
    let meta_len = take_u64(8)? as usize;
    let meta = bytes.get(16..16 + meta_len).ok_or_else(|| err("truncated metadata"))?;
    let mut result: SampleResult = serde_json::from_slice(meta)?;
    let at = 16 + meta_len;
    let count = take_u64(at)? as usize;
    let expected = (grid.dim() + 2) * grid.num_cells();
    if count != expected || result.cells != grid.cells_per_axis() {
        return Err(err("cache entry does not match grid"));
    }
    let body = bytes.get(at + 8..at + 8 + 8 * count).ok_or_else(|| err("truncated values"))?;
    let values: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    result.state = Some(State::unpack(grid.dim(), &values));
    Ok(result)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleFailure {
    pub seed: SampleSeed,
    pub message: String,
}

#[derive(Debug)]
pub struct EnsembleOutcome<T> {
    /// Successful samples, in the order of the requested seeds.
    pub results: Vec<(SampleSeed, T)>,
    pub failures: Vec<SampleFailure>,
    pub solver_runs: usize,
    pub cache_hits: usize,
}

/// Executes samples on a pool of `workers` threads. Output order and values do
/// not depend on the worker count.
pub struct EnsembleRunner<'a> {
    run: &'a RunSpec,
    cache: Option<&'a SampleCache>,
    workers: usize,
    policy: FailurePolicy,
}

impl<'a> EnsembleRunner<'a> {
    pub fn new(run: &'a RunSpec, cache: Option<&'a SampleCache>, workers: usize, policy: FailurePolicy) -> Self {
        EnsembleRunner {
            run,
            cache,
            workers: workers.max(1),
            policy,
        }
    }

    fn obtain(&self, grid: &Grid, seed: SampleSeed, solver_runs: &AtomicUsize, hits: &AtomicUsize) -> Result<SampleResult> {
        let key = self.cache.map(|_| SampleCache::key(grid, self.run, seed));
        if let (Some(cache), Some(key)) = (self.cache, &key) {
            if let Some(hit) = cache.load(key, grid) {
                hits.fetch_add(1, Ordering::Relaxed);
                return Ok(hit);
            }
        }
        solver_runs.fetch_add(1, Ordering::Relaxed);
        let result = run_sample(grid, self.run, seed)?;
        if let (Some(cache), Some(key)) = (self.cache, &key) {
            cache.store(key, &result)?;
        }
        Ok(result)
    }

    /// Runs every seed and maps each result through `f` on the worker that produced it.
    pub fn run_with<T, F>(&self, grid: &Grid, seeds: &[SampleSeed], f: F) -> Result<EnsembleOutcome<T>>
    where
        T: Send,
        F: Fn(SampleResult) -> Result<T> + Sync,
    {
        self.run.validate()?;
        let solver_runs = AtomicUsize::new(0);
        let hits = AtomicUsize::new(0);
        let stop = AtomicBool::new(false);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| NsfError::Config(format!("cannot build worker pool: {e}")))?;
        let outputs: Vec<Option<Result<T>>> = pool.install(|| {
            seeds
                .par_iter()
                .map(|&seed| {
                    if stop.load(Ordering::Relaxed) {
                        return None;
                    }
                    let out = self.obtain(grid, seed, &solver_runs, &hits).and_then(&f);
                    if out.is_err() && self.policy == FailurePolicy::Abort {
                        stop.store(true, Ordering::Relaxed);
                    }
                    Some(out)
                })
                .collect()
        });
        let mut results = Vec::with_capacity(seeds.len());
        let mut failures = Vec::new();
        for (seed, out) in seeds.iter().zip(outputs) {
            match out {
                Some(Ok(v)) => results.push((*seed, v)),
                Some(Err(e)) => {
                    if self.policy == FailurePolicy::Abort || !e.is_solver_failure() {
                        return Err(NsfError::SampleFailed {
                            index: seed.sample_index,
                            realization: seed.realization_index,
                            source: Box::new(e),
                        });
                    }
                    log::warn!(
                        "excluding sample (n = {}, m = {}): {e}",
                        seed.sample_index,
                        seed.realization_index
                    );
                    failures.push(SampleFailure {
                        seed: *seed,
                        message: e.to_string(),
                    });
                }
                None => {}
            }
        }
        Ok(EnsembleOutcome {
            results,
            failures,
            solver_runs: solver_runs.into_inner(),
            cache_hits: hits.into_inner(),
        })
    }

    pub fn run(&self, grid: &Grid, seeds: &[SampleSeed]) -> Result<EnsembleOutcome<SampleResult>> {
        self.run_with(grid, seeds, Ok)
    }
}

/// A named group of consecutive components in a field list.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FieldGroup {
    pub name: &'static str,
    pub offset: usize,
    pub len: usize,
    /// Part of the conserved triple `(ρ, m, S)` rather than a diagnostic.
    pub primary: bool,
}

/// Layout `[ρ, m_1..m_d, S, u_1..u_d, θ]` used for post-processed samples.
pub fn pde_field_groups(dim: usize) -> Vec<FieldGroup> {
    vec![
        FieldGroup { name: "rho", offset: 0, len: 1, primary: true },
        FieldGroup { name: "m", offset: 1, len: dim, primary: true },
        FieldGroup { name: "S", offset: 1 + dim, len: 1, primary: true },
        FieldGroup { name: "u", offset: 2 + dim, len: dim, primary: false },
        FieldGroup { name: "theta", offset: 2 + 2 * dim, len: 1, primary: false },
    ]
}

/// `[ρ, m, S, u, θ]` components of a final state.
pub fn post_process(state: &State, cv: f64) -> Result<Vec<ScalarField>> {
    let t = conserved_triple(state, cv)?;
    let mut out = Vec::with_capacity(3 + 2 * state.dim());
    out.push(t.rho);
    out.extend(t.m.0);
    out.push(t.s);
    out.extend(state.u.0.iter().cloned());
    out.push(state.theta.clone());
    Ok(out)
}

/// Mean and deviation fields of a reference ensemble, in the post-processed layout.
#[derive(Clone, Debug)]
pub struct ReferenceStatistics {
    pub grid: Grid,
    pub samples: usize,
    pub mean: Vec<ScalarField>,
    pub deviation: Vec<ScalarField>,
    pub monitors: Vec<f64>,
    pub failures: Vec<SampleFailure>,
    pub solver_runs: usize,
}

/// Seeds `(master_seed, n, 0)`, `n < n_s`, run at `grid` to the final time.
pub fn reference_seeds(master_seed: u64, n_s: usize) -> Vec<SampleSeed> {
    (0..n_s as u64).map(|n| SampleSeed::new(master_seed, n, 0)).collect()
}

pub fn reference_statistics(
    runner: &EnsembleRunner<'_>,
    grid: &Grid,
    master_seed: u64,
    n_s: usize,
) -> Result<ReferenceStatistics> {
    if n_s == 0 {
        return Err(NsfError::Config("reference ensemble needs N_S >= 1".into()));
    }
    let cv = runner.run.data.base.cv();
    let outcome = runner.run_with(grid, &reference_seeds(master_seed, n_s), |r| {
        Ok((post_process(r.final_state(), cv)?, r.lambda()))
    })?;
    if outcome.results.is_empty() {
        return Err(NsfError::Config("every reference sample failed".into()));
    }
    let members: Vec<Vec<&[f64]>> = outcome
        .results
        .iter()
        .map(|(_, (f, _))| f.iter().map(|c| c.as_slice()).collect())
        .collect();
    let (mean, deviation) = mean_and_deviation(&members);
    Ok(ReferenceStatistics {
        grid: grid.clone(),
        samples: outcome.results.len(),
        mean,
        deviation,
        monitors: outcome.results.iter().map(|(_, (_, l))| *l).collect(),
        failures: outcome.failures,
        solver_runs: outcome.solver_runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_spec() -> RunSpec {
        RunSpec {
            data: RandomDataSpec::default(),
            solver: SolverConfig::default(),
            t_final: 0.05,
        }
    }

    #[test]
    fn cache_round_trip_and_warm_rerun() {
        let dir = tempfile::tempdir().unwrap();
        let cache = SampleCache::new(dir.path()).unwrap();
        let g = Grid::new(2, 8).unwrap();
        let run = run_spec();
        let seeds: Vec<_> = (0..3).map(|n| SampleSeed::new(5, n, 1)).collect();
        let runner = EnsembleRunner::new(&run, Some(&cache), 2, FailurePolicy::Abort);
        let cold = runner.run(&g, &seeds).unwrap();
        assert_eq!(cold.solver_runs, 3);
        let warm = runner.run(&g, &seeds).unwrap();
        assert_eq!(warm.solver_runs, 0);
        assert_eq!(warm.cache_hits, 3);
        for ((_, a), (_, b)) in cold.results.iter().zip(&warm.results) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn cache_key_depends_on_every_input() {
        let g = Grid::new(2, 8).unwrap();
        let run = run_spec();
        let seed = SampleSeed::new(1, 2, 3);
        let k = SampleCache::key(&g, &run, seed);
        assert_eq!(k.len(), 32);
        assert_eq!(k, SampleCache::key(&g, &run, seed));
        assert_ne!(k, SampleCache::key(&g, &run, SampleSeed::new(1, 2, 4)));
        assert_ne!(k, SampleCache::key(&Grid::new(2, 16).unwrap(), &run, seed));
        let mut other = run.clone();
        other.solver.tol_nl = 1e-9;
        assert_ne!(k, SampleCache::key(&g, &other, seed));
        other = run.clone();
        other.t_final = 0.1;
        assert_ne!(k, SampleCache::key(&g, &other, seed));
    }

    #[test]
    fn corrupt_cache_entry_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = SampleCache::new(dir.path()).unwrap();
        let g = Grid::new(2, 8).unwrap();
        fs::write(dir.path().join("abc.sample"), b"garbage").unwrap();
        assert!(cache.load("abc", &g).is_none());
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let g = Grid::new(2, 8).unwrap();
        let run = run_spec();
        let seeds: Vec<_> = (0..4).map(|n| SampleSeed::new(9, n, 2)).collect();
        let a = EnsembleRunner::new(&run, None, 1, FailurePolicy::Abort).run(&g, &seeds).unwrap();
        let b = EnsembleRunner::new(&run, None, 4, FailurePolicy::Abort).run(&g, &seeds).unwrap();
        assert_eq!(a.results, b.results);
    }

    #[test]
    fn failures_follow_policy() {
        let g = Grid::new(2, 8).unwrap();
        let mut run = run_spec();
        run.solver.max_newton = 1;
        let seeds = [SampleSeed::new(1, 0, 0), SampleSeed::new(1, 1, 0)];
        let abort = EnsembleRunner::new(&run, None, 1, FailurePolicy::Abort).run(&g, &seeds);
        assert!(matches!(abort, Err(NsfError::SampleFailed { index: 0, .. })));
        let excl = EnsembleRunner::new(&run, None, 1, FailurePolicy::Exclude).run(&g, &seeds).unwrap();
        assert!(excl.results.is_empty());
        assert_eq!(excl.failures.len(), 2);
    }

    #[test]
    fn single_member_reference_has_zero_deviation() {
        let g = Grid::new(2, 8).unwrap();
        let run = run_spec();
        let runner = EnsembleRunner::new(&run, None, 1, FailurePolicy::Abort);
        let stats = reference_statistics(&runner, &g, 3, 1).unwrap();
        let only = run_sample(&g, &run, SampleSeed::new(3, 0, 0)).unwrap();
        let fields = post_process(only.final_state(), run.data.base.cv()).unwrap();
        assert_eq!(stats.mean, fields);
        assert!(stats.deviation.iter().all(|f| f.iter().all(|&v| v == 0.0)));
    }
}
