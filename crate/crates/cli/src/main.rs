use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use poc_cli::audit::{audit_tables, describe, merge, read_results, write_summary_csv, write_violations_csv};
use poc_cli::chart::{load_spec, render_chart};
use poc_cli::config::DEFAULT_AUDIT_TOLERANCE;
use poc_cli::run::{run, RunOptions};
use poc_cli::CliError;
use poc_core::measures::MeasureKind;
use poc_core::PocError;

/// Predictive-optimal-control experiments: run, audit and chart.
#[derive(Parser)]
#[command(name = "poc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML (or .json) config.
    Run {
        config: PathBuf,
        /// Output directory [default: the config's `out`, else ./out].
        #[arg(long, env = "POC_OUT")]
        out: Option<PathBuf>,
        /// Master seed, overriding the config's `seed`.
        #[arg(long, env = "POC_SEED")]
        seed: Option<u64>,
        /// Worker threads [default: all cores].
        #[arg(long, env = "POC_THREADS")]
        threads: Option<usize>,
    },
    /// Monotonicity audit of one or more results CSVs (rows are pooled).
    Audit {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        /// Audit only this measure (mse, regret or loglik).
        #[arg(long)]
        measure: Option<String>,
        #[arg(long, default_value_t = DEFAULT_AUDIT_TOLERANCE)]
        tolerance: f64,
        /// Also write audit_summary.csv and audit_violations.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render an SVG chart from a CSV and a chart spec.
    Chart {
        csv: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        /// Output directory [default: the CSV's directory].
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn audit(csv: &[PathBuf], measure: Option<&str>, tolerance: f64, out: Option<&Path>) -> Result<(), CliError> {
    let mut tables = merge(csv.iter().map(|p| read_results(p)).collect::<Result<Vec<_>, _>>()?);
    if let Some(m) = measure {
        let kind: MeasureKind = m.parse().map_err(|e: PocError| CliError::Input(e.to_string()))?;
        tables.retain(|(k, _)| *k == kind);
        if tables.is_empty() {
            return Err(CliError::Input(format!("no '{kind}' column in the input")));
        }
    }
    let outcomes = audit_tables("all", tables, tolerance).map_err(|e| CliError::Input(e.to_string()))?;
    print!("{}", describe(&outcomes));
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let mut summary = Vec::new();
        write_summary_csv(&mut summary, &outcomes)?;
        std::fs::write(dir.join("audit_summary.csv"), summary)?;
        let mut violations = Vec::new();
        write_violations_csv(&mut violations, &outcomes)?;
        std::fs::write(dir.join("audit_violations.csv"), violations)?;
    }
    Ok(())
}

fn chart(csv: &Path, spec: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let spec = load_spec(spec)?;
    let data = std::fs::read(csv).map_err(|e| CliError::Input(format!("cannot read {}: {e}", csv.display())))?;
    let svg = render_chart(&spec, &data).map_err(|e| match e {
        CliError::Input(m) => CliError::Input(format!("{}: {m}", csv.display())),
        other => other,
    })?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| csv.parent().unwrap_or(Path::new(".")).to_path_buf());
    std::fs::create_dir_all(&dir)?;
    let path = dir.join(&spec.output);
    std::fs::write(&path, svg)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            seed,
            threads,
        } => run(&config, &RunOptions { out, seed, threads }).map(|s| {
            print!("{}", s.report);
            println!("wrote {} files and manifest.json to {}", s.files.len(), s.out_dir.display());
        }),
        Command::Audit {
            csv,
            measure,
            tolerance,
            out,
        } => audit(&csv, measure.as_deref(), tolerance, out.as_deref()),
        Command::Chart { csv, spec, out } => chart(&csv, &spec, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
