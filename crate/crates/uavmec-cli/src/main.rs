//! Command line front end: loads a scenario, runs one scheme or the whole
//! comparison set, optionally across a parameter sweep, and writes the CSV
//! and SVG artifacts into the output directory.
//!
//! Exit codes: 0 on success, 1 on bad input or I/O trouble, 2 when every
//! requested run finished but at least one stopped at its pass cap instead
//! of converging.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::Parser;
use rayon::prelude::*;

use uavmec::model::Scenario;
use uavmec::orchestrator::{
    solve, sweep_schemes, Scheme, SolveConfig, SweepCell, SweepParam, SweepRow,
};
use uavmec::report;
use uavmec::scenario_file::{load_document, ScenarioDocument, SweepSpec};

/// Overrides the worker pool size used for sweep parallelism.
const THREADS_ENV: &str = "UAVMEC_THREADS";

#[derive(Parser)]
#[command(
    name = "uavmec",
    version,
    about = "Minimum weighted-sum-energy operating plans for a UAV-assisted edge-computing cell"
)]
struct Args {
    /// Scenario file (TOML); omitted means the built-in reference mission
    #[arg(long, value_name = "PATH")]
    scenario: Option<PathBuf>,

    /// proposed, direct, offload-only, equal-bw, local, or all
    #[arg(long, default_value = "proposed", value_name = "SCHEME")]
    scheme: String,

    /// Sweep one knob: PARAM=lo..hi[:step] with PARAM in {I, T, O, w_U}
    #[arg(long, value_name = "SPEC")]
    sweep: Option<String>,

    /// Output directory
    #[arg(long, default_value = "out", value_name = "DIR")]
    out: PathBuf,

    /// Cap on outer alternating passes
    #[arg(long, value_name = "N")]
    max_outer: Option<u32>,

    /// Stopping tolerance on the outer objective, J
    #[arg(long, value_name = "X", allow_negative_numbers = true)]
    tol: Option<f64>,

    /// Print errors only
    #[arg(long)]
    quiet: bool,
}

enum Choice {
    One(Scheme),
    All,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let level = if args.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let outcome = init_threads().and_then(|()| run(&args));
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}

fn init_threads() -> Result<()> {
    let Ok(text) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = text
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("{THREADS_ENV} must be a positive integer, got `{text}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("the worker pool was already set up")?;
    Ok(())
}

/// Returns whether every run converged; failures to run at all are errors.
fn run(args: &Args) -> Result<bool> {
    let choice = match args.scheme.as_str() {
        "all" => Choice::All,
        s => Choice::One(Scheme::from_str(s).map_err(|e| anyhow!("--scheme: {e}"))?),
    };

    let doc = match &args.scenario {
        Some(path) => load_document(path)?,
        None => ScenarioDocument {
            scenario: Scenario::default(),
            sweep: None,
        },
    };

    let mut cfg = SolveConfig::default();
    if let Some(n) = args.max_outer {
        if n == 0 {
            bail!("--max-outer must be at least 1");
        }
        cfg.max_outer = n;
    }
    if let Some(t) = args.tol {
        if !(t > 0.0) || !t.is_finite() {
            bail!("--tol must be positive and finite, got {t}");
        }
        cfg.outer_tol = t;
    }

    // The flag wins over a sweep block embedded in the scenario file.
    let sweep_req = match &args.sweep {
        Some(text) => {
            let spec = SweepSpec::parse(text).map_err(|e| anyhow!("--sweep `{text}`: {e}"))?;
            Some((spec.param, spec.grid()))
        }
        None => doc.sweep.as_ref().map(|r| (r.param, r.grid.clone())),
    };

    let write_ctx = || format!("cannot write into {}", args.out.display());

    match (sweep_req, choice) {
        (Some((param, grid)), choice) => {
            let schemes: Vec<Scheme> = match choice {
                Choice::All => Scheme::ALL.to_vec(),
                Choice::One(s) => vec![s],
            };
            log::info!(
                "sweeping {} over {} grid point(s), {} scheme(s)",
                param.key(),
                grid.len(),
                schemes.len()
            );
            let rows = sweep_schemes(&doc.scenario, param, &grid, &schemes, &cfg);
            report::write_summary(&args.out, Some(param), &rows).with_context(write_ctx)?;
            Ok(report_rows(&rows, Some(param)))
        }
        (None, Choice::All) => {
            let cells: Vec<SweepCell> = Scheme::ALL
                .into_par_iter()
                .map(|scheme| {
                    let run = solve(&doc.scenario, &SolveConfig { scheme, ..cfg });
                    SweepCell {
                        scheme,
                        wsec: run.report.wsec,
                        outer_passes: run.outer_passes,
                        converged: run.converged,
                    }
                })
                .collect();
            let rows = vec![SweepRow {
                value: f64::NAN,
                cells,
            }];
            report::write_summary(&args.out, None, &rows).with_context(write_ctx)?;
            Ok(report_rows(&rows, None))
        }
        (None, Choice::One(scheme)) => {
            cfg.scheme = scheme;
            let result = solve(&doc.scenario, &cfg);
            report::write_run_directory(&args.out, &doc.scenario, &result)
                .with_context(write_ctx)?;
            log::info!(
                "{}: wsec {:.6} J after {} pass(es) in {:.1?}",
                scheme.name(),
                result.report.wsec,
                result.outer_passes,
                result.wall_time
            );
            for note in &result.notes {
                log::debug!("{note}");
            }
            if !result.converged {
                log::warn!("{} stopped at the pass cap without converging", scheme.name());
            }
            Ok(result.converged)
        }
    }
}

fn report_rows(rows: &[SweepRow], param: Option<SweepParam>) -> bool {
    let mut clean = true;
    for row in rows {
        for cell in &row.cells {
            let at = match param {
                Some(p) => format!("{}={} ", p.key(), row.value),
                None => String::new(),
            };
            log::info!(
                "{at}{}: wsec {:.6} J after {} pass(es)",
                cell.scheme.name(),
                cell.wsec,
                cell.outer_passes
            );
            if !cell.converged {
                clean = false;
                log::warn!("{at}{} stopped at the pass cap", cell.scheme.name());
            }
        }
    }
    clean
}
