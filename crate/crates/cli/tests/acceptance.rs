//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use maketake::market::side_gain;
use maketake::{
    brute_force_quantizer, estimate_mm_utility, hamiltonian, inventory_incentive, lloyd_best_of,
    lloyd_run, lloyd_step, solve_value_grid, spread_surface, value_monte_carlo, DemandDistribution,
    GridConfig, IncentiveSurface, LloydConfig, ModelParams, OptionSpec, SimConfig, Simulator,
    SpreadTable,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn december() -> DemandDistribution {
    let rows = [
        (20.0, 0.0),
        (30.0, 1.0),
        (40.0, 0.0),
        (50.0, 58.0),
        (60.0, 1933.0),
        (70.0, 1402.0),
        (80.0, 12814.0),
        (90.0, 113210.0),
        (100.0, 159075.0),
        (110.0, 5811.0),
        (120.0, 869.0),
        (130.0, 1.0),
        (140.0, 0.0),
        (150.0, 0.0),
        (160.0, 1720.0),
        (170.0, 1040.0),
    ];
    DemandDistribution::from_weights(&rows, 200.0).unwrap()
}

fn random_distributions(count: usize, seed: u64) -> Vec<DemandDistribution> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let k = rng.random_range(1..=6);
            let mut atoms: Vec<u32> = (0..k).map(|_| rng.random_range(1..200)).collect();
            atoms.sort();
            atoms.dedup();
            let pts: Vec<(f64, f64)> = atoms
                .iter()
                .map(|&a| (a as f64, rng.random_range(1..1000) as f64))
                .collect();
            DemandDistribution::from_weights(&pts, 200.0).unwrap()
        })
        .collect()
}

/// Atoms plus conditional means of contiguous atom runs: contains an optimal
/// p = 2 quantizer since optimal cells are contiguous.
fn segment_means(dist: &DemandDistribution) -> Vec<f64> {
    let (x, w) = (dist.atoms(), dist.probs());
    let mut out = x.to_vec();
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let m: f64 = w[i..=j].iter().sum();
            out.push((i..=j).map(|k| x[k] * w[k]).sum::<f64>() / m);
        }
    }
    out
}

fn within(elapsed: Duration, limit: u64) -> Result<(), String> {
    if elapsed.as_secs_f64() < limit as f64 {
        Ok(())
    } else {
        Err(format!(
            "took {:.1}s, limit {limit}s",
            elapsed.as_secs_f64()
        ))
    }
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let cfg = LloydConfig::default();
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for dist in random_distributions(50, 0) {
        for n in 1..=3.min(dist.len()) {
            let lloyd = lloyd_best_of(&dist, n, 2.0, &cfg, 0).map_err(|e| e.to_string())?;
            let brute = brute_force_quantizer(&dist, n, 2.0, &segment_means(&dist))
                .map_err(|e| e.to_string())?;
            worst = worst.max((lloyd.regret - brute.regret).abs() / brute.regret.max(1.0));
            cases += 1;
        }
    }
    within(start.elapsed(), 10)?;
    let detail = format!("{cases} cases, worst relative gap {worst:.2e}");
    if worst <= 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fixed_points() -> Outcome {
    let cfg = LloydConfig::default();
    let mut runs = Vec::new();
    for dist in random_distributions(50, 0) {
        for n in 1..=3.min(dist.len()) {
            runs.push((dist.clone(), n, 2.0));
        }
    }
    for p in [2.0, 3.0, 4.0, 6.0, 8.0] {
        runs.push((december(), 10, p));
    }
    let (mut checked, mut worst) = (0, 0.0f64);
    for (dist, n, p) in &runs {
        for seed in 0..cfg.seeds as u64 {
            let run = lloyd_run(dist, *n, *p, &cfg, seed).map_err(|e| e.to_string())?;
            if !run.converged {
                continue;
            }
            let next = lloyd_step(&run.strikes, dist, *p);
            let moved: f64 = next
                .iter()
                .zip(&run.strikes)
                .map(|(a, b)| (a - b).abs())
                .sum();
            worst = worst.max(moved);
            checked += 1;
        }
    }
    let detail = format!("{checked} converged runs, largest step {worst:.2e}");
    if worst < cfg.epsilon {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn p_spreading() -> Outcome {
    let start = Instant::now();
    let dist = december();
    let cfg = LloydConfig::default();
    let top = |p| -> Result<f64, String> {
        let s = lloyd_best_of(&dist, 10, p, &cfg, 0).map_err(|e| e.to_string())?;
        Ok(s.strikes.iter().copied().fold(f64::MIN, f64::max))
    };
    let (k2, k8) = (top(2.0)?, top(8.0)?);
    within(start.elapsed(), 30)?;
    let detail = format!("max strike p=2 {k2:.4}, p=8 {k8:.4}");
    if k8 >= k2 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fd_mc() -> Outcome {
    let start = Instant::now();
    let p = ModelParams::default();
    let specs = OptionSpec::reference_book();
    let grid = solve_value_grid(&p, &specs, &GridConfig::default()).map_err(|e| e.to_string())?;
    let half = p.q_bar_f64() / 2.0;
    let mut worst: f64 = 0.0;
    for t in [0.0, p.horizon / 4.0, p.horizon / 2.0] {
        for q in [-half, 0.0, half] {
            let fd = grid.value_at(t, q).map_err(|e| e.to_string())?;
            let mc = value_monte_carlo(&p, &specs, t, q, 100_000, 1).map_err(|e| e.to_string())?;
            worst = worst.max((fd - mc.mean).abs() / mc.stderr);
        }
    }
    within(start.elapsed(), 120)?;
    let detail = format!("9 probes, worst |z| {worst:.3}");
    if worst <= 3.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn hamiltonian_argmax() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let specs = OptionSpec::reference_book();
    let steps = 100_000;
    let mut worst = f64::MIN;
    for _ in 0..1000 {
        let p = ModelParams {
            gamma: rng.random_range(0.001..0.5),
            ..ModelParams::default()
        };
        let q = rng.random_range(-45.0..45.0);
        let z: Vec<[f64; 2]> = (0..specs.len())
            .map(|_| [rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)])
            .collect();
        let h = hamiltonian(&z, q, &p, &specs).value;
        // the objective separates by option and side
        let mut grid_best = 0.0;
        for (spec, zk) in specs.iter().zip(&z) {
            for side in maketake::Side::ALL {
                if !maketake::market::cap_open(side, q, p.q_bar_f64()) {
                    continue;
                }
                let zi = zk[side.index()];
                grid_best += (0..=steps)
                    .map(|i| {
                        let d = -p.delta_max + i as f64 * (2.0 * p.delta_max / steps as f64);
                        side_gain(d, zi, spec.fee, &p)
                    })
                    .fold(f64::MIN, f64::max);
            }
        }
        worst = worst.max(grid_best - h);
    }
    within(start.elapsed(), 30)?;
    let detail = format!("1000 draws, largest grid excess {worst:.2e}");
    if worst <= 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn indifference() -> Outcome {
    let start = Instant::now();
    let p = ModelParams::default();
    let specs = vec![OptionSpec::reference_book()[0].clone()];
    let grid = solve_value_grid(&p, &specs, &GridConfig::default()).map_err(|e| e.to_string())?;
    let surface = IncentiveSurface::new(grid, &p, &specs).map_err(|e| e.to_string())?;
    let target = -(-p.gamma * p.initial_contract_value()).exp();
    let run = |micro_dt: f64| -> Result<maketake::Estimate, String> {
        let cfg = SimConfig {
            micro_dt: Some(micro_dt),
            ..SimConfig::default()
        };
        let sim = Simulator::new(&surface, &cfg).map_err(|e| e.to_string())?;
        let paths = sim.run_batch(10_000, 2024).map_err(|e| e.to_string())?;
        Ok(estimate_mm_utility(&paths, &p))
    };
    let dt = p.horizon / 1e4;
    let (full, half) = (run(dt)?, run(dt / 2.0)?);
    within(start.elapsed(), 300)?;
    let z = (full.mean - target) / full.stderr;
    let shift = (full.mean - half.mean).abs() / full.stderr;
    let detail = format!(
        "utility {:.6} (se {:.2e}) vs {target}, z {z:.3}; halved micro_dt shift {shift:.3} se",
        full.mean, full.stderr
    );
    if z.abs() <= 3.0 && shift < 1.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn spread_statics() -> Outcome {
    let start = Instant::now();
    let specs = OptionSpec::reference_book();
    let table = |omega: f64, specs: &[OptionSpec]| -> Result<SpreadTable, String> {
        let p = ModelParams {
            omega,
            ..ModelParams::default()
        };
        let grid =
            solve_value_grid(&p, specs, &GridConfig::default()).map_err(|e| e.to_string())?;
        let s = IncentiveSurface::new(grid, &p, specs).map_err(|e| e.to_string())?;
        spread_surface(&s, 0.0).map_err(|e| e.to_string())
    };
    let by_omega = [
        table(0.0, &specs)?,
        table(0.1, &specs)?,
        table(0.2, &specs)?,
    ];
    let mut violations = 0;
    let mut margin = f64::MAX;
    for pair in by_omega.windows(2) {
        for (lo, hi) in pair[0].options.iter().zip(&pair[1].options) {
            for (l, h) in lo.ask.iter().zip(&hi.ask).chain(lo.bid.iter().zip(&hi.bid)) {
                if let (Some(l), Some(h)) = (l, h) {
                    margin = margin.min(l - h);
                    if h > l {
                        violations += 1;
                    }
                }
            }
        }
    }
    let zero = by_omega[0]
        .q
        .iter()
        .position(|&q| q == 0.0)
        .ok_or("no Q = 0 node")?;
    let mut drops = Vec::new();
    for k in 0..specs.len() {
        let mut valued = specs.clone();
        valued[k].weight = 0.1;
        let t = table(0.0, &valued)?;
        let before = by_omega[0].options[k]
            .total(zero)
            .ok_or("side shut at Q = 0")?;
        let after = t.options[k].total(zero).ok_or("side shut at Q = 0")?;
        drops.push(before - after);
    }
    within(start.elapsed(), 120)?;
    let detail = format!(
        "omega: {violations} violations, min margin {margin:.3}; c=0.1 spread drop at Q=0 {:?}",
        drops.iter().map(|d| format!("{d:.4}")).collect::<Vec<_>>()
    );
    if violations == 0 && drops.iter().all(|&d| d > 0.0) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn risk_share_slope() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = ModelParams {
            gamma: rng.random_range(1e-4..10.0),
            eta: rng.random_range(1e-4..10.0),
            ..ModelParams::default()
        };
        let slope = -p.gamma / (p.gamma + p.eta);
        for q in [1.0, 7.0, -13.5, 40.0] {
            let err = (inventory_incentive(q, &p) / q - slope).abs() / slope.abs();
            worst = worst.max(err);
        }
    }
    let detail = format!("100 draws, worst relative error {worst:.2e}");
    if worst <= 4.0 * f64::EPSILON {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn bound_audit() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for omega in [0.0, 0.1, 0.2] {
        let p = ModelParams {
            omega,
            ..ModelParams::default()
        };
        let specs = OptionSpec::reference_book();
        let grid =
            solve_value_grid(&p, &specs, &GridConfig::default()).map_err(|e| e.to_string())?;
        let audit = IncentiveSurface::new(grid, &p, &specs)
            .map_err(|e| e.to_string())?
            .bound_audit();
        ok &= audit < p.delta_max;
        parts.push(format!("omega={omega}: {audit:.3}"));
    }
    let detail = format!("{} (delta_max 50)", parts.join(", "));
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let path = e.unwrap().path();
            let bytes = std::fs::read(&path).unwrap();
            (path.file_name().unwrap().into(), bytes)
        })
        .collect()
}

fn determinism() -> Outcome {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    std::fs::copy(
        root.join("trades_dec_jan.csv"),
        dir.path().join("trades.csv"),
    )
    .map_err(|e| e.to_string())?;
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        "[paths]\ntrades = \"trades.csv\"\noutput_dir = \"out\"\n\n\
         [solver]\nn_paths = 2000\nseed = 3\n\n\
         [simulation]\nn_paths = 40\nseed = 4\nmicro_dt = 0.1\nexport_paths = 5\n",
    )
    .map_err(|e| e.to_string())?;
    let out = dir.path().join("out");
    let mut runs = Vec::new();
    for threads in ["1", "3"] {
        if out.exists() {
            std::fs::remove_dir_all(&out).map_err(|e| e.to_string())?;
        }
        for cmd in ["quantize", "solve", "spreads", "simulate"] {
            let status = Command::new(env!("CARGO_BIN_EXE_maketake"))
                .args([cmd, "--config"])
                .arg(&config)
                .env("RAYON_NUM_THREADS", threads)
                .status()
                .map_err(|e| e.to_string())?;
            if !status.success() {
                return Err(format!("{cmd} exited with {status}"));
            }
        }
        runs.push(snapshot(&out));
    }
    let names: Vec<String> = runs[0].keys().map(|p| p.display().to_string()).collect();
    if runs[0] == runs[1] {
        Ok(format!(
            "{} files identical across runs: {}",
            names.len(),
            names.join(" ")
        ))
    } else {
        let differ: Vec<String> = runs[0]
            .iter()
            .filter(|(k, v)| runs[1].get(*k) != Some(v))
            .map(|(k, _)| k.display().to_string())
            .collect();
        Err(format!("differing files: {}", differ.join(" ")))
    }
}

type Check = fn() -> Outcome;

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("quantizer oracle equivalence", oracle_equivalence),
        ("fixed-point characterization", fixed_points),
        ("p-spreading property", p_spreading),
        ("FD-MC equivalence", fd_mc),
        ("Hamiltonian argmax", hamiltonian_argmax),
        ("market maker indifference", indifference),
        ("spread comparative statics", spread_statics),
        ("incentive risk-share slope", risk_share_slope),
        ("bound-condition audit", bound_audit),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
