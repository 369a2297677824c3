use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use nsfmc::ensemble::{post_process, EnsembleRunner, RunSpec, SampleCache};
use nsfmc::experiment::{run_study, Execution, StudyConfig, StudyManifest, StudyMode, GENERATOR_DESCRIPTION};
use nsfmc::io::FieldDump;
use nsfmc::sampling::{draw_uniforms, manifest_row, realize, SampleSeed, MANIFEST_HEADER};
use nsfmc::scheme::march;
use nsfmc::stats::{boundedness_report, mean_and_deviation, norm, write_exceedance_csv, NormSpec};
use nsfmc::thermo::balance_diagnostics;
use nsfmc::{Grid, MarchOptions, NsfError, ScalarField, State};
use serde_json::json;

use crate::config::{self, DumpFormat, McConfig, SolveConfig};

/// Settings shared by every subcommand.
pub struct Common {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: usize,
    pub cache_dir: Option<PathBuf>,
    pub out: PathBuf,
    pub policy: nsfmc::ensemble::FailurePolicy,
}

impl Common {
    fn cache(&self) -> Result<Option<SampleCache>> {
        Ok(match &self.cache_dir {
            Some(dir) => Some(SampleCache::new(dir).with_context(|| format!("cache directory {}", dir.display()))?),
            None => None,
        })
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out).map_err(NsfError::from)?;
        Ok(&self.out)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(NsfError::from)?))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(NsfError::from)?;
    writeln!(w).map_err(NsfError::from)?;
    w.flush().map_err(NsfError::from)?;
    Ok(())
}

fn save_dump(dir: &Path, stem: &str, dump: &FieldDump, format: DumpFormat) -> Result<()> {
    match format {
        DumpFormat::Text => dump.save_text(&dir.join(format!("{stem}.txt")))?,
        DumpFormat::Binary => dump.save_binary(&dir.join(format!("{stem}.bin")))?,
    }
    Ok(())
}

fn state_fields(state: &State) -> Vec<(String, &ScalarField)> {
    let mut out = vec![("rho".to_string(), &state.rho)];
    for (i, c) in state.u.0.iter().enumerate() {
        out.push((format!("u{}", i + 1), c));
    }
    out.push(("theta".to_string(), &state.theta));
    out
}

fn post_processed_names(dim: usize) -> Vec<String> {
    let mut names = vec!["rho".to_string()];
    names.extend((1..=dim).map(|i| format!("m{i}")));
    names.push("S".into());
    names.extend((1..=dim).map(|i| format!("u{i}")));
    names.push("theta".into());
    names
}

pub fn solve(common: &Common) -> Result<()> {
    let mut cfg: SolveConfig = config::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    let grid = cfg.validate()?;
    let seed = SampleSeed::new(cfg.master_seed, cfg.sample_index, cfg.realization);
    let (ys, initial, params) = match (&cfg.initial, &cfg.ys) {
        (Some(c), _) => (None, State::constant(&grid, c.rho, &c.u, c.theta), cfg.data.base.clone()),
        (None, Some(ys)) => {
            let (s, p) = realize(&cfg.data, &grid, ys)?;
            (Some(*ys), s, p)
        }
        (None, None) => {
            let ys = draw_uniforms(seed);
            let (s, p) = realize(&cfg.data, &grid, &ys)?;
            (Some(ys), s, p)
        }
    };
    let out = common.out_dir()?;
    let opts = MarchOptions { record_every: Some(cfg.record_every) };
    let traj = march(&grid, &initial, cfg.t_final, &params, &cfg.solver, &opts)?;

    let dumps = out.join("dumps");
    fs::create_dir_all(&dumps).map_err(NsfError::from)?;
    for (k, (t, state)) in traj.snapshots.iter().enumerate() {
        for (name, field) in state_fields(state) {
            let dump = FieldDump::new(&grid, *t, name.clone(), field.clone());
            save_dump(&dumps, &format!("level{k:05}_{name}"), &dump, cfg.dump_format)?;
        }
    }
    let mut w = create(&out.join("stats.csv"))?;
    traj.write_stats_csv(&mut w)?;
    w.flush().map_err(NsfError::from)?;

    let balance = balance_diagnostics(&grid, traj.snapshots.iter().map(|(t, s)| (*t, s)), params.cv())?;
    let mut w = create(&out.join("balance.csv"))?;
    writeln!(w, "time,mass,energy,entropy").map_err(NsfError::from)?;
    for r in &balance {
        writeln!(w, "{:?},{:?},{:?},{:?}", r.time, r.mass, r.energy, r.entropy).map_err(NsfError::from)?;
    }
    w.flush().map_err(NsfError::from)?;

    let mass_drift = balance.last().unwrap().mass - balance[0].mass;
    write_json(
        &out.join("manifest.json"),
        &json!({
            "tool": "nsfmc",
            "version": env!("CARGO_PKG_VERSION"),
            "command": "solve",
            "generator": GENERATOR_DESCRIPTION,
            "config": cfg,
            "seed": seed,
            "ys": ys,
            "params": params,
            "dt": traj.dt,
            "steps": traj.steps.len(),
            "final_time": traj.final_time(),
            "lambda": traj.lambda(),
            "mass_drift": mass_drift,
        }),
    )?;
    println!(
        "solve: {} steps to t = {}, Lambda_h = {:.6}, mass drift = {:.3e}",
        traj.steps.len(),
        traj.final_time(),
        traj.lambda(),
        mass_drift
    );
    Ok(())
}

pub fn mc(common: &Common) -> Result<()> {
    let mut cfg: McConfig = config::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    let grid = cfg.validate()?;
    for &t in &cfg.thresholds {
        if !(t > 0.0) {
            return Err(NsfError::Config(format!("threshold {t} must be > 0")).into());
        }
    }
    let out = common.out_dir()?;
    let cache = common.cache()?;
    let run = RunSpec {
        data: cfg.data.clone(),
        solver: cfg.solver.clone(),
        t_final: cfg.t_final,
    };
    let runner = EnsembleRunner::new(&run, cache.as_ref(), common.workers, common.policy);
    let seeds: Vec<SampleSeed> = (0..cfg.samples as u64)
        .map(|n| SampleSeed::new(cfg.master_seed, n, cfg.realization))
        .collect();
    let outcome = runner.run(&grid, &seeds)?;
    if outcome.results.is_empty() {
        return Err(NsfError::Config("every sample failed".into()).into());
    }

    let mut w = create(&out.join("samples.csv"))?;
    writeln!(w, "{MANIFEST_HEADER},steps,newton_iters,linear_iters,lambda,mass_drift").map_err(NsfError::from)?;
    for (_, r) in &outcome.results {
        writeln!(
            w,
            "{},{},{},{},{:?},{:?}",
            manifest_row(r.seed, &r.ys, &r.params),
            r.steps,
            r.newton_iters,
            r.linear_iters,
            r.lambda(),
            r.mass_drift
        )
        .map_err(NsfError::from)?;
    }
    w.flush().map_err(NsfError::from)?;

    let cv = cfg.data.base.cv();
    let fields = outcome
        .results
        .iter()
        .map(|(_, r)| post_process(r.final_state(), cv))
        .collect::<nsfmc::Result<Vec<_>>>()?;
    let members: Vec<Vec<&[f64]>> = fields.iter().map(|f| f.iter().map(|c| c.as_slice()).collect()).collect();
    let (mean, deviation) = mean_and_deviation(&members);
    let time = outcome.results[0].1.time;
    for (k, name) in post_processed_names(grid.dim()).iter().enumerate() {
        save_dump(out, &format!("mean_{name}"), &FieldDump::new(&grid, time, format!("mean_{name}"), mean[k].clone()), cfg.dump_format)?;
        save_dump(
            out,
            &format!("deviation_{name}"),
            &FieldDump::new(&grid, time, format!("deviation_{name}"), deviation[k].clone()),
            cfg.dump_format,
        )?;
    }

    let monitors: Vec<f64> = outcome.results.iter().map(|(_, r)| r.lambda()).collect();
    let bip = boundedness_report(&monitors, &cfg.thresholds, grid.h());
    let mut w = create(&out.join("bip.csv"))?;
    write_exceedance_csv(&mut w, &bip)?;
    w.flush().map_err(NsfError::from)?;

    write_json(
        &out.join("manifest.json"),
        &json!({
            "tool": "nsfmc",
            "version": env!("CARGO_PKG_VERSION"),
            "command": "mc",
            "generator": GENERATOR_DESCRIPTION,
            "config": cfg,
            "seeds": format!("master_seed = {}, n in [0, {}), m = {}", cfg.master_seed, cfg.samples, cfg.realization),
            "workers": common.workers,
            "solver_runs": outcome.solver_runs,
            "cache_hits": outcome.cache_hits,
            "failures": outcome.failures,
        }),
    )?;
    println!(
        "mc: {} samples ({} solved, {} cached, {} failed), max Lambda_h = {:.6}",
        outcome.results.len(),
        outcome.solver_runs,
        outcome.cache_hits,
        outcome.failures.len(),
        monitors.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    );
    Ok(())
}

/// File-name form of a norm label.
fn norm_tag(spec: NormSpec) -> String {
    spec.to_string().replace('.', "p")
}

pub fn study(common: &Common, mode: StudyMode) -> Result<()> {
    let mut cfg: StudyConfig = config::load(common.config.as_deref())?;
    cfg.mode = mode;
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    cfg.validate()?;
    let out = common.out_dir()?;
    let cache = common.cache()?;
    let exec = Execution {
        cache: cache.as_ref(),
        workers: common.workers,
        policy: common.policy,
    };
    let report = run_study(&cfg, exec)?;

    let mut w = create(&out.join("report.csv"))?;
    report.write_csv(&mut w)?;
    w.flush().map_err(NsfError::from)?;
    let mut w = create(&out.join("orders.csv"))?;
    report.write_orders_csv(&mut w)?;
    w.flush().map_err(NsfError::from)?;
    for &spec in &cfg.norms {
        let mut w = create(&out.join(format!("plot_{}_{}.csv", mode.label(), norm_tag(spec))))?;
        report.write_plot_csv(spec, &mut w)?;
        w.flush().map_err(NsfError::from)?;
    }
    let mut w = create(&out.join("bip.csv"))?;
    report.write_exceedance_csv(&mut w)?;
    w.flush().map_err(NsfError::from)?;
    write_json(&out.join("manifest.json"), &StudyManifest::new(&cfg, &report))?;

    for &spec in &cfg.norms {
        for ((field, metric), rows) in report.series(spec) {
            if metric == "E1" || metric == "E3" {
                println!("{} {field:>5} {metric} {spec:>5}: slope {:.3}", mode.label(), rows[0].slope_fit);
            }
        }
    }
    println!(
        "study: {} reference runs, {} study runs, {} cache hits, {} failures",
        report.accounting.reference_solver_runs,
        report.accounting.study_solver_runs,
        report.accounting.cache_hits,
        report.accounting.failures.len()
    );
    Ok(())
}

pub fn norms(file: &Path, specs: &[NormSpec]) -> Result<()> {
    let dump = FieldDump::load(file)?;
    let grid: Grid = dump.grid()?;
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "field,norm,value").map_err(NsfError::from)?;
    for &spec in specs {
        spec.validate(grid.dim())?;
        let v = norm(&grid, &[dump.values.as_slice()], spec)?;
        writeln!(stdout, "{},{spec},{v:?}", dump.name).map_err(NsfError::from)?;
    }
    Ok(())
}
