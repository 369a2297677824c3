//! Times a short march of the deterministic vortex: `vortex_timing <n> <steps>`.

use std::time::Instant;

use nsfmc::sampling::{realize, RandomDataSpec};
use nsfmc::scheme::{march, time_step, MarchOptions};
use nsfmc::{Grid, SolverConfig};

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let n = args.first().copied().unwrap_or(32);
    let steps = args.get(1).copied().unwrap_or(4);
    let grid = Grid::new(2, n).unwrap();
    let spec = RandomDataSpec::default();
    let (state, params) = realize(&spec, &grid, &[0.5, 0.3, -0.2, 0.8, 0.1, -0.4, 0.9]).unwrap();
    let t_final = steps as f64 * time_step(&grid, &params);
    let start = Instant::now();
    let linear_tol = std::env::var("LTOL").ok().and_then(|v| v.parse().ok()).unwrap_or(1e-4);
    let cfg = SolverConfig { linear_tol, ..SolverConfig::default() };
    let traj = march(&grid, &state, t_final, &params, &cfg, &MarchOptions::default()).unwrap();
    let elapsed = start.elapsed();
    for s in &traj.steps {
        println!("step {} newton {} linear {} residual {:e}", s.step, s.newton_iters, s.linear_iters, s.residual);
    }
    println!("n={n} steps={steps} elapsed={elapsed:?} lambda={}", traj.lambda());
}
