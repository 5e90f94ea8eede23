use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::Serialize;
use sha2::{Digest, Sha256};

use shiftrisk::estimator::{minimize_worst_risk, EstimatorConfig, EstimatorError, EstimatorReport};
use shiftrisk::io::{self, MomentSet, FORMAT_VERSION};
use shiftrisk::moments::estimate_moments;
use shiftrisk::oracle::{refined_minimize, sphere_max_risk, SearchTrace};
use shiftrisk::semgen::{population_all, sample_all, SemSpec};
use shiftrisk::{Exec, WorstRiskObjective};

use crate::error::{io_err, CliError};
use crate::{EstimateArgs, InputArgs, MomentsArgs, OracleArgs, SimulateArgs, SweepArgs, ValidateArgs};

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Serialize)]
struct FileHash {
    path: String,
    sha256: String,
}

fn hash_file(path: &Path) -> Result<FileHash> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(FileHash { path: path.display().to_string(), sha256: hex::encode(Sha256::digest(&bytes)) })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    io::write_json(path, value).map_err(CliError::from)
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(suffix);
    out.with_file_name(name)
}

/// Moments plus the hashes of the files they came from.
fn load(input: &InputArgs) -> Result<(MomentSet, Vec<FileHash>)> {
    if let Some(dir) = &input.data {
        let (obs, shifted) = io::read_sample_dir(dir)?;
        let mut hashes = vec![hash_file(&dir.join(io::sample_file_name(obs.env)))?];
        for s in &shifted {
            hashes.push(hash_file(&dir.join(io::sample_file_name(s.env)))?);
        }
        let o = estimate_moments(&obs)?;
        let a = shifted.iter().map(estimate_moments).collect::<std::result::Result<Vec<_>, _>>()?;
        return Ok((MomentSet::new(o, a), hashes));
    }
    if let Some(path) = &input.moments {
        return Ok((MomentSet::read(path)?, vec![hash_file(path)?]));
    }
    let path = input.spec.as_ref().expect("clap enforces one input");
    let spec = SemSpec::from_path(path)?;
    let (o, a) = population_all(&spec)?;
    Ok((MomentSet::new(o, a), vec![hash_file(path)?]))
}

fn objective(set: &MomentSet, gamma: f64) -> Result<WorstRiskObjective> {
    Ok(WorstRiskObjective::from_moments(&set.observational, &set.shifted, gamma)?)
}

pub fn simulate(args: &SimulateArgs, exec: Exec) -> Result<()> {
    #[derive(Serialize)]
    struct SampleFile {
        name: String,
        rows: usize,
        sha256: String,
    }
    #[derive(Serialize)]
    struct Manifest {
        format_version: u32,
        command: &'static str,
        seed: u64,
        n: usize,
        spec: FileHash,
        files: Vec<SampleFile>,
    }

    if args.n == 0 {
        return Err(CliError::Config("--n must be at least 1".into()));
    }
    let mut spec = SemSpec::from_path(&args.spec)?;
    if let Some(seed) = args.seed {
        spec = spec.with_seed(seed);
    }
    let spec_hash = hash_file(&args.spec)?;
    fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;
    let (obs, shifted) = sample_all(&spec, args.n, exec)?;
    let mut files = Vec::new();
    for s in std::iter::once(&obs).chain(&shifted) {
        let path = io::write_sample_file(&args.out, s)?;
        files.push(SampleFile {
            name: io::sample_file_name(s.env),
            rows: s.n(),
            sha256: hash_file(&path)?.sha256,
        });
    }
    let manifest = Manifest { format_version: FORMAT_VERSION, command: "simulate", seed: spec.seed, n: args.n, spec: spec_hash, files };
    write_json(&args.out.join("manifest.json"), &manifest)?;
    println!("wrote {} environments of {} rows to {}", shifted.len() + 1, args.n, args.out.display());
    Ok(())
}

pub fn moments(args: &MomentsArgs) -> Result<()> {
    let (set, _) = load(&args.input)?;
    set.write(&args.out)?;
    println!("wrote moments of {} environments to {}", set.shifted.len() + 1, args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct RunReport<'a> {
    format_version: u32,
    command: &'static str,
    inputs: &'a [FileHash],
    status: &'static str,
    report: &'a EstimatorReport,
}

fn write_candidates_csv(path: &Path, report: &EstimatorReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["kind".to_string(), "envs".into(), "lambda".into()];
    header.extend((1..=report.p).map(|i| format!("beta{i}")));
    header.extend(["objective", "active", "kept", "selected", "reason"].map(String::from));
    w.write_record(&header)?;
    for c in &report.candidates {
        let envs: Vec<String> = c.provenance.envs().iter().map(|e| format!("A{}", e + 1)).collect();
        let mut row = vec![
            c.provenance.kind().to_string(),
            envs.join(" "),
            c.provenance.lambda().map(|l| l.to_string()).unwrap_or_default(),
        ];
        row.extend(c.beta.iter().map(|b| b.to_string()));
        row.extend([
            c.objective.to_string(),
            c.active.join(" "),
            c.kept.to_string(),
            c.selected.to_string(),
            c.reason.clone(),
        ]);
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn estimate(args: &EstimateArgs, exec: Exec) -> Result<()> {
    let (set, inputs) = load(&args.input)?;
    let obj = objective(&set, args.gamma)?;
    let cfg = args.solver.config(args.gamma, exec);
    let (report, status, outcome) = match minimize_worst_risk(&obj, &cfg) {
        Ok(est) => {
            let beta: Vec<String> = est.beta.iter().map(|b| format!("{b:.10}")).collect();
            println!("beta = [{}]  f = {:.10}  from {}", beta.join(", "), est.objective, est.provenance);
            (est.report, "ok", Ok(()))
        }
        Err(EstimatorError::NoCandidate(report)) => {
            let msg = "no candidate survived the envelope filter; report written".to_string();
            (*report, "no-candidate", Err(CliError::Degenerate(msg)))
        }
        Err(e) => return Err(e.into()),
    };
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    write_json(&args.out, &RunReport { format_version: FORMAT_VERSION, command: "estimate", inputs: &inputs, status, report: &report })?;
    write_candidates_csv(&sidecar(&args.out, ".candidates.csv"), &report)?;
    outcome
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(CliError::Config("--gamma-grid is empty".into()));
    }
    if let Some(g) = grid.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
        return Err(CliError::Config(format!("--gamma-grid: gamma {g} must be finite and >= 0")));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Config("--gamma-grid must be strictly ascending".into()));
    }
    Ok(())
}

fn beta_columns(p: usize) -> impl Iterator<Item = String> {
    (1..=p).map(|i| format!("beta{i}"))
}

pub fn sweep(args: &SweepArgs, exec: Exec) -> Result<()> {
    check_grid(&args.gamma_grid)?;
    let (set, inputs) = load(&args.input)?;
    let p = set.observational.p();
    let mut w = csv::Writer::from_path(&args.out)?;
    let mut header: Vec<String> = vec!["gamma".into(), "tau".into(), "status".into()];
    header.extend(beta_columns(p));
    header.extend(["objective".into(), "active".into()]);
    w.write_record(&header)?;

    let mut values: Vec<(f64, f64)> = Vec::new();
    let mut failures = 0;
    for &gamma in &args.gamma_grid {
        let obj = objective(&set, gamma)?;
        let cfg = args.solver.config(gamma, exec);
        let mut row = vec![gamma.to_string(), obj.tau().to_string()];
        match minimize_worst_risk(&obj, &cfg) {
            Ok(est) => {
                row.push("ok".into());
                row.extend(est.beta.iter().map(|b| b.to_string()));
                row.push(est.objective.to_string());
                row.push(est.report.active_envs.join(" "));
                values.push((gamma, est.objective));
            }
            Err(e) => {
                failures += 1;
                let status = match e {
                    EstimatorError::NoCandidate(_) => "no-candidate".to_string(),
                    other => format!("error: {other}"),
                };
                row.push(status);
                row.extend(std::iter::repeat_n(String::new(), p + 2));
            }
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| io_err(&args.out, e))?;

    let monotone = values.windows(2).all(|v| v[1].1 >= v[0].1 - 1e-9 * (1.0 + v[0].1.abs()));
    println!(
        "{} gamma values, {failures} failed; objective nondecreasing in gamma: {monotone}",
        args.gamma_grid.len()
    );
    #[derive(Serialize)]
    struct Manifest<'a> {
        format_version: u32,
        command: &'static str,
        inputs: &'a [FileHash],
        gamma_grid: &'a [f64],
        failures: usize,
        objective_nondecreasing: bool,
    }
    write_json(
        &sidecar(&args.out, ".manifest.json"),
        &Manifest {
            format_version: FORMAT_VERSION,
            command: "sweep",
            inputs: &inputs,
            gamma_grid: &args.gamma_grid,
            failures,
            objective_nondecreasing: monotone,
        },
    )
}

pub fn validate(args: &ValidateArgs, exec: Exec) -> Result<()> {
    if args.ladder.is_empty() || args.ladder.contains(&0) {
        return Err(CliError::Config("--ladder needs positive sample sizes".into()));
    }
    if args.reps == 0 {
        return Err(CliError::Config("--reps must be at least 1".into()));
    }
    let spec = SemSpec::from_path(&args.spec)?;
    let seed = args.seed.unwrap_or(spec.seed);
    let cfg = args.solver.config(args.gamma, exec);
    let (po, pa) = population_all(&spec)?;
    let truth = minimize_worst_risk(&WorstRiskObjective::from_moments(&po, &pa, args.gamma)?, &cfg)?;

    let mut w = csv::Writer::from_path(&args.out)?;
    w.write_record(["n", "reps", "mean_distance", "max_distance", "status"])?;
    let mut means = Vec::new();
    for &n in &args.ladder {
        let mut dists = Vec::new();
        let mut status = "ok".to_string();
        for r in 0..args.reps {
            let (obs, shifted) = sample_all(&spec.clone().with_seed(seed.wrapping_add(r)), n, exec)?;
            let o = estimate_moments(&obs)?;
            let a = shifted.iter().map(estimate_moments).collect::<std::result::Result<Vec<_>, _>>()?;
            match minimize_worst_risk(&WorstRiskObjective::from_moments(&o, &a, args.gamma)?, &cfg) {
                Ok(est) => dists.push((&est.beta - &truth.beta).norm()),
                Err(EstimatorError::NoCandidate(_)) => status = "no-candidate".into(),
                Err(e) => status = format!("error: {e}"),
            }
        }
        let (mean, max) = if dists.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            (dists.iter().sum::<f64>() / dists.len() as f64, dists.iter().copied().fold(0.0, f64::max))
        };
        w.write_record([n.to_string(), args.reps.to_string(), mean.to_string(), max.to_string(), status])?;
        means.push(mean);
    }
    w.flush().map_err(|e| io_err(&args.out, e))?;

    let decreasing = (means.len() > 1).then(|| means.windows(2).all(|m| m[1] < m[0]));
    let beta: Vec<String> = truth.beta.iter().map(|b| format!("{b:.10}")).collect();
    println!("population beta = [{}]", beta.join(", "));
    match decreasing {
        Some(d) => println!("distance strictly decreasing along the ladder: {d}"),
        None => println!("single ladder step; no trend computed"),
    }
    #[derive(Serialize)]
    struct Manifest {
        format_version: u32,
        command: &'static str,
        spec: FileHash,
        seed: u64,
        reps: u64,
        gamma: f64,
        population_beta: Vec<f64>,
        ladder: Vec<usize>,
        mean_distance: Vec<f64>,
        strictly_decreasing: Option<bool>,
    }
    write_json(
        &sidecar(&args.out, ".manifest.json"),
        &Manifest {
            format_version: FORMAT_VERSION,
            command: "validate",
            spec: hash_file(&args.spec)?,
            seed,
            reps: args.reps,
            gamma: args.gamma,
            population_beta: truth.beta.iter().copied().collect(),
            ladder: args.ladder.clone(),
            mean_distance: means,
            strictly_decreasing: decreasing,
        },
    )
}

pub fn oracle_check(args: &OracleArgs, exec: Exec) -> Result<()> {
    #[derive(Serialize)]
    struct OracleReport<'a> {
        format_version: u32,
        command: &'static str,
        inputs: &'a [FileHash],
        gamma: f64,
        beta_hat: Vec<f64>,
        objective: f64,
        beta_grid: Vec<f64>,
        grid_objective: f64,
        distance_inf: f64,
        tolerance: f64,
        search: SearchTrace,
        sphere_max: f64,
        sphere_gap: f64,
        pass: bool,
    }

    if !(args.step > 0.0 && args.step.is_finite()) {
        return Err(CliError::Config(format!("--step must be positive, got {}", args.step)));
    }
    let (set, inputs) = load(&args.input)?;
    let obj = objective(&set, args.gamma)?;
    let cfg: EstimatorConfig = args.solver.config(args.gamma, exec);
    let est = minimize_worst_risk(&obj, &cfg)?;
    let (grid, search) = refined_minimize(&obj, args.step, exec)?;
    let distance_inf = est.beta.iter().zip(&grid.beta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let tolerance = 2.0 * args.step;
    let sphere_max = sphere_max_risk(&obj, &est.beta, args.n_dirs, args.seed);
    let worst = obj.worst_risk(&est.beta).value;
    let sphere_gap = (sphere_max - worst).abs() / (1.0 + worst.abs());
    let pass = distance_inf <= tolerance && sphere_gap <= 1e-9;
    let report = OracleReport {
        format_version: FORMAT_VERSION,
        command: "oracle-check",
        inputs: &inputs,
        gamma: args.gamma,
        beta_hat: est.beta.iter().copied().collect(),
        objective: est.objective,
        beta_grid: grid.beta.clone(),
        grid_objective: grid.value,
        distance_inf,
        tolerance,
        search,
        sphere_max,
        sphere_gap,
        pass,
    };
    write_json(&args.out, &report)?;
    println!(
        "estimator vs lattice: |diff|_inf = {distance_inf:.3e} (tolerance {tolerance:.1e}); sphere gap {sphere_gap:.3e}: {}",
        if pass { "PASS" } else { "FAIL" }
    );
    if pass {
        Ok(())
    } else {
        let grid_beta = DVector::from_vec(grid.beta);
        Err(CliError::Mismatch(format!(
            "oracle mismatch: f(beta_hat) = {}, f(beta_grid) = {}",
            est.objective,
            obj.value(&grid_beta)
        )))
    }
}
