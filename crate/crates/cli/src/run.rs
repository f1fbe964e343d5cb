//! `run`: executes an experiment and writes its artifacts plus a manifest.
//!
//! Computation may be parallel; all files are written afterwards, in a fixed
//! order, by this single thread.

use std::path::{Path, PathBuf};
use std::time::Instant;

use poc_core::measures::MeasureKind;
use poc_experiments::hev::{hev_audits, hev_experiment, DrivingCycle};
use poc_experiments::toy::toy_sweep;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::audit::{audit_tables, describe, write_summary_csv, write_violations_csv, AuditOutcome};
use crate::chart::{parse_spec, render_chart, ChartSpec, PanelSpec, SeriesStyle};
use crate::config::{load_config, relative_to, ExperimentConfig, ExperimentKind};
use crate::custom::{audit_entries, run_custom, write_results_csv};
use crate::error::CliError;

pub const TOY_CHART: &str = include_str!("../charts/toy_sweep.toml");
pub const HEV_CHART: &str = include_str!("../charts/hev_plot.toml");
pub const MANIFEST: &str = "manifest.json";
const DEFAULT_OUT: &str = "out";

/// Command-line overrides; `None` keeps the config's value.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

/// A file produced by a run, held in memory until the write phase.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
    /// Human-readable findings for the terminal.
    pub report: String,
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> poc_core::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

fn chart(spec: &ChartSpec, data: &[u8]) -> Result<Artifact, CliError> {
    // Built-in specs over our own CSVs: any failure is a bug, not bad input.
    let svg = render_chart(spec, data).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(Artifact {
        name: spec.output.clone(),
        bytes: svg.into_bytes(),
    })
}

fn audit_artifacts(prefix: &str, outcomes: &[AuditOutcome]) -> Result<Vec<Artifact>, CliError> {
    Ok(vec![
        Artifact {
            name: format!("{prefix}_audit.csv"),
            bytes: csv_bytes(|b| write_summary_csv(b, outcomes))?,
        },
        Artifact {
            name: format!("{prefix}_violations.csv"),
            bytes: csv_bytes(|b| write_violations_csv(b, outcomes))?,
        },
    ])
}

fn run_toy(config: &ExperimentConfig) -> Result<(Vec<Artifact>, String), CliError> {
    let sweep = toy_sweep(&config.toy_config())?;
    let results = csv_bytes(|b| sweep.write_csv(b))?;
    let d = &sweep.discrepancy;
    let discrepancy = format!(
        "quantity,max_abs_discrepancy\nu0,{:?}\ncost,{:?}\nmse,{:?}\nregret,{:?}\nloglik,{:?}\nmax,{:?}\n",
        d.u0,
        d.cost,
        d.mse,
        d.regret,
        d.loglik,
        d.max()
    );
    let tables = MeasureKind::ALL.iter().map(|k| (*k, sweep.audit_entries(*k))).collect();
    let outcomes = audit_tables("all", tables, config.audit_tolerance)?;
    let mut report = format!("max |pipeline - closed form| = {:e}\n", d.max());
    report.push_str(&describe(&outcomes));
    let mut artifacts = vec![
        Artifact {
            name: "toy_sweep.csv".into(),
            bytes: results.clone(),
        },
        Artifact {
            name: "toy_discrepancy.csv".into(),
            bytes: discrepancy.into_bytes(),
        },
    ];
    artifacts.extend(audit_artifacts("toy", &outcomes)?);
    artifacts.push(chart(&parse_spec(TOY_CHART)?, &results)?);
    Ok((artifacts, report))
}

fn run_hev(config: &ExperimentConfig, config_path: &Path) -> Result<(Vec<Artifact>, String), CliError> {
    let cycle = match &config.cycle {
        Some(p) => {
            let path = relative_to(config_path, p);
            let file = std::fs::File::open(&path)
                .map_err(|e| CliError::Config(format!("field `cycle`: cannot open {}: {e}", path.display())))?;
            DrivingCycle::read_csv(file).map_err(|e| CliError::Config(format!("field `cycle`: {e}")))?
        }
        None => DrivingCycle::bundled(),
    };
    let mut experiment = hev_experiment(&config.hev_config(), &cycle)?;
    experiment.audits = hev_audits(&experiment.runs, config.audit_tolerance)?;
    let results = csv_bytes(|b| experiment.write_results_csv(b))?;
    let audit = csv_bytes(|b| experiment.write_audit_csv(b))?;
    let mut report = format!(
        "{} predictors on a {} s cycle; posterior-optimal cost {:?}\n",
        experiment.runs.len(),
        cycle.len(),
        experiment.posterior_cost
    );
    for a in &experiment.audits {
        report.push_str(&format!(
            "{} {}: {} entries, {} violations, best-P-lowest-C {}\n",
            a.group,
            a.kind,
            a.ids.len(),
            a.report.violations.len(),
            if a.report.best_p_lowest_c() { "yes" } else { "no" }
        ));
    }
    let artifacts = vec![
        Artifact {
            name: "hev_results.csv".into(),
            bytes: results.clone(),
        },
        Artifact {
            name: "hev_audit.csv".into(),
            bytes: audit,
        },
        chart(&parse_spec(HEV_CHART)?, &results)?,
    ];
    Ok((artifacts, report))
}

fn run_custom_kind(config: &ExperimentConfig, digest: &str) -> Result<(Vec<Artifact>, String), CliError> {
    let custom = config.custom.as_ref().expect("validated config has a custom block");
    let kinds = custom.measure_kinds()?;
    let rows = run_custom(custom, config.seed, digest)?;
    let results = csv_bytes(|b| write_results_csv(b, &rows, digest))?;
    let tables = kinds.iter().map(|k| (*k, audit_entries(&rows, *k))).collect();
    let outcomes = if rows.len() >= 2 {
        audit_tables("all", tables, config.audit_tolerance)?
    } else {
        Vec::new()
    };
    let spec = ChartSpec {
        title: "Predictor measures against cost".into(),
        output: "custom_plot.svg".into(),
        columns: kinds.len(),
        panel_width: 400.0,
        panel_height: 300.0,
        panels: kinds
            .iter()
            .map(|k| PanelSpec {
                title: k.name().to_string(),
                x: k.name().to_string(),
                y: vec!["cost".into()],
                style: SeriesStyle::Scatter,
                labels: Vec::new(),
                group_by: Some("predictor_id".into()),
                x_label: None,
                y_label: Some("cost".into()),
            })
            .collect(),
    };
    let mut artifacts = vec![Artifact {
        name: "custom_results.csv".into(),
        bytes: results.clone(),
    }];
    artifacts.extend(audit_artifacts("custom", &outcomes)?);
    artifacts.push(chart(&spec, &results)?);
    let report = format!("{} predictors evaluated\n{}", rows.len(), describe(&outcomes));
    Ok((artifacts, report))
}

/// Computes the artifacts of a validated config.
pub fn compute(config: &ExperimentConfig, config_path: &Path) -> Result<(Vec<Artifact>, String), CliError> {
    match config.kind {
        ExperimentKind::Toy => run_toy(config),
        ExperimentKind::Hev => run_hev(config, config_path),
        ExperimentKind::Custom => run_custom_kind(config, &config.digest()),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Loads `config_path`, applies overrides, runs and writes everything.
pub fn run(config_path: &Path, options: &RunOptions) -> Result<RunSummary, CliError> {
    let started = Instant::now();
    let mut config = load_config(config_path)?;
    if let Some(seed) = options.seed {
        config.seed = seed;
    }
    let out_dir = match (&options.out, &config.out) {
        (Some(out), _) => out.clone(),
        (None, Some(out)) => relative_to(config_path, out),
        (None, None) => PathBuf::from(DEFAULT_OUT),
    };
    if options.threads == Some(0) {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = options.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Runtime(e.to_string()))?;
    let (artifacts, report) = pool.install(|| compute(&config, config_path))?;

    std::fs::create_dir_all(&out_dir)?;
    let mut files = Vec::with_capacity(artifacts.len());
    for a in &artifacts {
        std::fs::write(out_dir.join(&a.name), &a.bytes)?;
        files.push(json!({
            "path": a.name,
            "sha256": sha256_hex(&a.bytes),
            "bytes": a.bytes.len(),
        }));
    }
    let mut recorded = config.clone();
    recorded.out = None;
    let manifest = json!({
        "kind": config.kind.name(),
        "config_path": config_path.display().to_string(),
        "config_digest": config.digest(),
        "seed": config.seed,
        "threads": pool.current_num_threads(),
        "versions": {
            "poc-cli": env!("CARGO_PKG_VERSION"),
            "poc-core": poc_core::VERSION,
            "poc-experiments": poc_experiments::VERSION,
        },
        "wall_time_seconds": started.elapsed().as_secs_f64(),
        "config": recorded,
        "files": files,
    });
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(out_dir.join(MANIFEST), text + "\n")?;
    Ok(RunSummary {
        out_dir,
        files: artifacts.into_iter().map(|a| a.name).collect(),
        report,
    })
}
