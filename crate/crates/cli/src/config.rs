//! Run configuration files (JSON). Every field has a default; unknown keys are rejected.

use std::path::Path;

use nsfmc::sampling::{RandomDataSpec, NUM_RANDOM_VARIABLES};
use nsfmc::stats::DEFAULT_THRESHOLDS;
use nsfmc::{Grid, NsfError, Result, SolverConfig, State};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DumpFormat {
    #[default]
    Text,
    Binary,
}

/// Spatially constant initial data `(ρ, u, θ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantInitial {
    pub rho: f64,
    pub u: Vec<f64>,
    pub theta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub dim: usize,
    pub cells: usize,
    pub t_final: f64,
    pub master_seed: u64,
    pub sample_index: u64,
    pub realization: u64,
    /// Explicit `Y₁..Y₇`; overrides the seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ys: Option<[f64; NUM_RANDOM_VARIABLES]>,
    /// Constant initial data with the base coefficients; overrides `ys` and the seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<ConstantInitial>,
    pub data: RandomDataSpec,
    pub solver: SolverConfig,
    /// Dump every `k`-th time level.
    pub record_every: usize,
    pub dump_format: DumpFormat,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            dim: 2,
            cells: 32,
            t_final: 0.1,
            master_seed: 0,
            sample_index: 0,
            realization: 0,
            ys: None,
            initial: None,
            data: RandomDataSpec::default(),
            solver: SolverConfig::default(),
            record_every: 1,
            dump_format: DumpFormat::Text,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<Grid> {
        let grid = Grid::new(self.dim, self.cells)?;
        self.data.validate()?;
        self.solver.validate()?;
        check_time(self.t_final)?;
        if self.record_every == 0 {
            return Err(NsfError::Config("record_every must be >= 1".into()));
        }
        if let Some(ys) = &self.ys {
            if ys.iter().any(|y| !(y.abs() <= 1.0)) {
                return Err(NsfError::Config("every Y must lie in [-1, 1]".into()));
            }
        }
        if let Some(c) = &self.initial {
            if c.u.len() != self.dim {
                return Err(NsfError::Config(format!("initial velocity has {} components, d = {}", c.u.len(), self.dim)));
            }
            State::constant(&grid, c.rho, &c.u, c.theta).check_positive()?;
        }
        Ok(grid)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub dim: usize,
    pub cells: usize,
    pub t_final: f64,
    pub master_seed: u64,
    /// `N`.
    pub samples: usize,
    /// Realization index `m` shared by all samples.
    pub realization: u64,
    pub data: RandomDataSpec,
    pub solver: SolverConfig,
    pub thresholds: Vec<f64>,
    pub dump_format: DumpFormat,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            dim: 2,
            cells: 64,
            t_final: 0.1,
            master_seed: 0,
            samples: 10,
            realization: 0,
            data: RandomDataSpec::default(),
            solver: SolverConfig::default(),
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            dump_format: DumpFormat::Text,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<Grid> {
        let grid = Grid::new(self.dim, self.cells)?;
        self.data.validate()?;
        self.solver.validate()?;
        check_time(self.t_final)?;
        if self.samples == 0 {
            return Err(NsfError::Config("N must be >= 1".into()));
        }
        if self.samples as u64 >= 1 << 32 || self.realization >= 1 << 32 {
            return Err(NsfError::Config("sample indices exceed 32 bits".into()));
        }
        Ok(grid)
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(NsfError::Config(format!("final time must be >= 0, got {t}")));
    }
    Ok(())
}

/// Reads a config file, or the defaults when no path is given.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| NsfError::Config(format!("{}: {e}", p.display())))
        }
    }
}
