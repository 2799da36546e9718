//! Command-line front end over the connector pipeline.
//!
//! Subcommands mirror the pipeline's stages: `check` validates a connector
//! file, `automaton` prints its composed behaviour, `ctmc` derives the
//! chain, `steady` solves it, `sweep` maps a metric over a rate grid, and
//! `simulate` runs the event oracle. Diagnostics go to the error stream;
//! data goes to the output stream or to files (written whole and renamed
//! into place). Exit codes: 0 success, 1 validation failure, 2 usage
//! error, 3 numerical failure.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::analysis::{
    export_prism, metric, simulate, steady_state, sweep, sweep_csv, AnalysisError, MetricSpec,
    VaryTarget,
};
use crate::ctmc::{build_ctmc, BuildOptions, Ctmc, CtmcError};
use crate::dsl::{self, ConnectorSpec};
use crate::guard::NodeName;
use crate::stoch::{validate_s, StochasticReoAutomaton};

const EXIT_OK: i32 = 0;
const EXIT_VALIDATION: i32 = 1;
const EXIT_USAGE: i32 = 2;
const EXIT_NUMERICAL: i32 = 3;

#[derive(Parser)]
#[command(
    name = "reoq",
    version,
    about = "Compose connectors, derive their Markov chains, and analyze them"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a connector file and validate the composed behaviour.
    Check { file: PathBuf },
    /// Print the composed automaton with its flow tuples.
    Automaton {
        file: PathBuf,
        /// Emit Graphviz instead of text.
        #[arg(long)]
        dot: bool,
    },
    /// Derive the chain. Merging of settled intermediate states is on;
    /// disable it with --no-merge.
    Ctmc {
        file: PathBuf,
        #[arg(long)]
        no_merge: bool,
        /// Emit Graphviz instead of text.
        #[arg(long, conflicts_with = "prism")]
        dot: bool,
        /// Write explicit-state files <PREFIX>.sta and <PREFIX>.tra.
        #[arg(long, value_name = "PREFIX")]
        prism: Option<PathBuf>,
    },
    /// Solve the stationary distribution and report metrics.
    Steady {
        file: PathBuf,
        #[arg(long)]
        no_merge: bool,
        /// Loss metric classes as <lossy>/<success>, comma-separated names.
        #[arg(long, value_name = "LOSSY/SUCCESS")]
        loss: Option<String>,
    },
    /// Evaluate a metric across a rate grid and write CSV.
    Sweep {
        file: PathBuf,
        /// Boundary node or flow rate name to vary.
        #[arg(long, value_name = "NAME")]
        vary: String,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        steps: usize,
        /// Output CSV path.
        #[arg(long, value_name = "PATH")]
        csv: PathBuf,
        /// Space the grid geometrically instead of linearly.
        #[arg(long)]
        log: bool,
        #[arg(long)]
        no_merge: bool,
        /// Loss metric classes as <lossy>/<success>, comma-separated names.
        #[arg(long, value_name = "LOSSY/SUCCESS")]
        loss: Option<String>,
    },
    /// Simulate the chain and report event counts and occupancy.
    Simulate {
        file: PathBuf,
        #[arg(long)]
        horizon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        no_merge: bool,
    },
}

/// Entry point for the binary: parses real process arguments and writes to
/// the real streams.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    cli_run(argv, &mut std::io::stdout(), &mut std::io::stderr())
}

/// As [`cli_main`], with the streams injectable for tests.
pub fn cli_run<I, T, O, E>(argv: I, out: &mut O, err: &mut E) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
    O: Write,
    E: Write,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = write!(out, "{e}");
            return EXIT_OK;
        }
        Err(e) => {
            let _ = write!(err, "{e}");
            return EXIT_USAGE;
        }
    };
    match dispatch(cli, out, err) {
        Ok(code) => code,
        Err((code, message)) => {
            let _ = writeln!(err, "error: {message}");
            code
        }
    }
}

type Failure = (i32, String);

fn dispatch<O: Write, E: Write>(cli: Cli, out: &mut O, err: &mut E) -> Result<i32, Failure> {
    match cli.command {
        Command::Check { file } => {
            let (spec, s) = load(&file)?;
            for w in &s.warnings {
                let _ = writeln!(err, "warning: {w}");
            }
            let report = validate_s(&s);
            if !report.is_clean() {
                for v in &report.violations {
                    let _ = writeln!(err, "violation: {v}");
                }
                return Ok(EXIT_VALIDATION);
            }
            let _ = writeln!(
                out,
                "ok: {} channel(s), {} join(s), {} state(s), {} transition(s)",
                spec.channel_decls.len(),
                spec.joins.len(),
                s.automaton.states.len(),
                s.automaton.transitions.len()
            );
            Ok(EXIT_OK)
        }
        Command::Automaton { file, dot } => {
            let (_, s) = load(&file)?;
            if dot {
                let _ = write!(out, "{}", crate::stoch::to_dot(&s));
            } else {
                let names: Vec<&str> =
                    s.automaton.alphabet.iter().map(NodeName::as_str).collect();
                let _ = writeln!(out, "alphabet: {}", names.join(" "));
                let _ = writeln!(out, "initial: {}", s.automaton.initial);
                for (t, tuples) in s.entries() {
                    let _ = writeln!(out, "{t}  {}", crate::stoch::render_tuple_set(tuples));
                }
            }
            Ok(EXIT_OK)
        }
        Command::Ctmc {
            file,
            no_merge,
            dot,
            prism,
        } => {
            let (_, s) = load(&file)?;
            let chain = derive(&s, no_merge, err)?;
            if let Some(prefix) = prism {
                let (sta, tra) = export_prism(&chain);
                let sta_path = prefix.with_extension("sta");
                let tra_path = prefix.with_extension("tra");
                write_atomic(&sta_path, &sta).map_err(io_failure)?;
                write_atomic(&tra_path, &tra).map_err(io_failure)?;
                let _ = writeln!(
                    err,
                    "wrote {} and {}: {} state(s), {} transition(s)",
                    sta_path.display(),
                    tra_path.display(),
                    chain.states.len(),
                    chain.transitions.len()
                );
            } else if dot {
                let _ = write!(out, "{}", chain.to_dot());
            } else {
                let _ = writeln!(out, "initial: {}", chain.initial);
                for state in &chain.states {
                    let _ = writeln!(out, "state {state}");
                }
                for t in &chain.transitions {
                    let _ = writeln!(
                        out,
                        "{} --{}={}--> {}",
                        t.source,
                        t.provenance.label(),
                        t.rate,
                        t.target
                    );
                }
            }
            Ok(EXIT_OK)
        }
        Command::Steady {
            file,
            no_merge,
            loss,
        } => {
            let (spec, s) = load(&file)?;
            let chain = derive(&s, no_merge, err)?;
            let pi = steady_state(&chain).map_err(analysis_failure)?;
            let _ = writeln!(err, "residual {}", pi.residual);
            let _ = writeln!(out, "state probability");
            for (state, p) in chain.states.iter().zip(&pi.probabilities) {
                let _ = writeln!(out, "{state} {p}");
            }
            if let Some(spec) = loss_metric(&spec, loss.as_deref())? {
                let value = metric(&chain, &pi, &spec).map_err(analysis_failure)?;
                let _ = writeln!(out, "loss {value}");
            }
            Ok(EXIT_OK)
        }
        Command::Sweep {
            file,
            vary,
            from,
            to,
            steps,
            csv,
            log,
            no_merge,
            loss,
        } => {
            let (spec, s) = load(&file)?;
            let target = resolve_vary(&s, &vary)?;
            let grid = make_grid(from, to, steps, log)?;
            let metric_spec = loss_metric(&spec, loss.as_deref())?.ok_or((
                EXIT_USAGE,
                "no lossy channel to default to; give --loss <lossy>/<success>".to_string(),
            ))?;
            let options = BuildOptions {
                merge: !no_merge,
                exhaustive: false,
            };
            let rows =
                sweep(&s, &target, &grid, &metric_spec, options).map_err(analysis_failure)?;
            write_atomic(&csv, &sweep_csv(&rows)).map_err(io_failure)?;
            let _ = writeln!(err, "wrote {} ({} row(s))", csv.display(), rows.len());
            Ok(EXIT_OK)
        }
        Command::Simulate {
            file,
            horizon,
            seed,
            no_merge,
        } => {
            if !(horizon > 0.0) {
                return Err((EXIT_USAGE, "horizon must be positive".to_string()));
            }
            let (_, s) = load(&file)?;
            let chain = derive(&s, no_merge, err)?;
            let run = simulate(&chain, horizon, seed);
            let _ = writeln!(
                out,
                "rng {} seed {} horizon {} events {}",
                run.rng_algorithm, run.seed, run.horizon, run.events
            );
            let _ = writeln!(out, "event counts:");
            for (label, count) in &run.counts {
                let _ = writeln!(out, "{label} {count}");
            }
            let _ = writeln!(out, "occupancy fractions:");
            for (state, f) in chain.states.iter().zip(run.occupancy_fractions()) {
                let _ = writeln!(out, "{state} {f}");
            }
            Ok(EXIT_OK)
        }
    }
}

/// Reads and elaborates a connector file. Unreadable paths are usage
/// errors; bad content is a validation failure.
fn load(file: &Path) -> Result<(ConnectorSpec, StochasticReoAutomaton), Failure> {
    let text = fs::read_to_string(file)
        .map_err(|e| (EXIT_USAGE, format!("cannot read {}: {e}", file.display())))?;
    let spec = dsl::parse(&text).map_err(|e| (EXIT_VALIDATION, e.to_string()))?;
    let s = dsl::elaborate(&spec).map_err(|e| (EXIT_VALIDATION, e.to_string()))?;
    Ok((spec, s))
}

/// Builds the chain with merging on unless disabled, forwarding warnings.
fn derive<E: Write>(
    s: &StochasticReoAutomaton,
    no_merge: bool,
    err: &mut E,
) -> Result<Ctmc, Failure> {
    for w in &s.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    let chain = build_ctmc(
        s,
        BuildOptions {
            merge: !no_merge,
            exhaustive: false,
        },
    )
    .map_err(|e: CtmcError| (EXIT_VALIDATION, e.to_string()))?;
    for w in &chain.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    Ok(chain)
}

/// Chooses the loss metric: an explicit `--loss lossy/success` argument, or
/// the description's own lossy channels paired with their success flows.
fn loss_metric(
    spec: &ConnectorSpec,
    arg: Option<&str>,
) -> Result<Option<MetricSpec>, Failure> {
    let Some(arg) = arg else {
        return Ok(dsl::default_loss_metric(spec));
    };
    let (lossy, success) = arg.split_once('/').ok_or((
        EXIT_USAGE,
        "expected --loss <lossy>/<success> with comma-separated names".to_string(),
    ))?;
    let split = |side: &str| -> BTreeSet<String> {
        side.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect()
    };
    Ok(Some(MetricSpec::LossProbability {
        lossy: split(lossy),
        success: split(success),
    }))
}

/// Resolves a sweep target: a boundary node first, then a flow rate name.
fn resolve_vary(s: &StochasticReoAutomaton, name: &str) -> Result<VaryTarget, Failure> {
    let node = NodeName::from(name);
    if s.arrival_rates.contains_key(&node) {
        return Ok(VaryTarget::Arrival(node));
    }
    if s.tuples.iter().flatten().any(|t| t.rate_name == name) {
        return Ok(VaryTarget::FlowRate(name.to_string()));
    }
    Err((
        EXIT_USAGE,
        format!("`{name}` is neither a boundary node nor a flow rate name"),
    ))
}

/// Builds the sweep grid; endpoints must be positive and steps at least 1.
fn make_grid(from: f64, to: f64, steps: usize, log: bool) -> Result<Vec<f64>, Failure> {
    if steps == 0 {
        return Err((EXIT_USAGE, "steps must be at least 1".to_string()));
    }
    if !(from > 0.0 && to > 0.0) {
        return Err((EXIT_USAGE, "grid endpoints must be positive".to_string()));
    }
    if steps == 1 {
        return Ok(vec![from]);
    }
    let n = (steps - 1) as f64;
    Ok((0..steps)
        .map(|k| {
            let t = k as f64 / n;
            if log {
                from * (to / from).powf(t)
            } else {
                from + (to - from) * t
            }
        })
        .collect())
}

fn analysis_failure(e: AnalysisError) -> Failure {
    let code = match &e {
        AnalysisError::Reducible { .. }
        | AnalysisError::Singular
        | AnalysisError::NoConvergence { .. }
        | AnalysisError::ZeroDenominator => EXIT_NUMERICAL,
        AnalysisError::UnknownRateName(_)
        | AnalysisError::EmptyMetricClass(_)
        | AnalysisError::OverlappingMetricClasses(_) => EXIT_USAGE,
        AnalysisError::PrismFormat { .. } | AnalysisError::Build(_) => EXIT_VALIDATION,
    };
    (code, e.to_string())
}

fn io_failure(e: std::io::Error) -> Failure {
    (EXIT_USAGE, e.to_string())
}

/// Writes the whole file to a temporary sibling, then renames into place.
fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}
