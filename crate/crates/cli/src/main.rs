use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use thiserror::Error;
use tracing::Level;

use stagebound::bounds::ConsensusClaim;
use stagebound::corpus::{self, Benchmark};
use stagebound::export;
use stagebound::stagegraph::LimitKind;
use stagebound::verify::{self, Condition, ScalingRow, SimTarget};
use stagebound::{aggregate, analyze, parse_protocol, Bound, Configuration, Limits, PopulationProtocol, StageKind};

const EXPECTED_TABLE: &str = include_str!("../expected_table.csv");

const EXIT_ERROR: u8 = 1;
const EXIT_NOT_CERTIFIED: u8 = 2;
const EXIT_LIMIT: u8 = 3;

/// Stage-graph analysis of population protocols.
#[derive(Parser)]
#[command(name = "stagebound", version)]
struct Cli {
    /// Log progress to stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the stage tree and report a bound on the expected interactions.
    Analyze {
        /// Protocol file, or the name of a bundled protocol.
        protocol: String,
        #[command(flatten)]
        limits: LimitArgs,
        /// Write the stage tree as Graphviz.
        #[arg(long, value_name = "PATH")]
        dot: Option<PathBuf>,
        /// Write the stage tree and report as JSON.
        #[arg(long, value_name = "PATH")]
        json: Option<PathBuf>,
    },
    /// Monte Carlo estimate of the interactions until a stable consensus.
    Simulate {
        protocol: String,
        /// Initial configuration, e.g. `A=5,B=3`.
        #[arg(long, value_name = "SPEC")]
        config: String,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also solve the Markov chain exactly.
        #[arg(long)]
        exact: bool,
        /// Give up on a trial after this many interactions.
        #[arg(long, default_value_t = 100_000_000)]
        max_steps: u64,
        /// Cap on configurations explored for the stable set.
        #[arg(long, default_value_t = 1_000_000)]
        node_cap: usize,
        /// Append `n,value,stderr` rows.
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
    },
    /// Check a stage tree against the exact Markov chains of small populations.
    Check {
        protocol: String,
        #[arg(long, default_value_t = 6)]
        max_n: u32,
        /// Check this JSON tree instead of building one.
        #[arg(long, value_name = "PATH")]
        tree: Option<PathBuf>,
        #[arg(long, default_value_t = 2_000_000)]
        node_cap: usize,
        #[command(flatten)]
        limits: LimitArgs,
    },
    /// Run the bundled benchmark suite and print one CSV row per protocol.
    Bench {
        /// Also write the table to a file.
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
        /// Compare against the expected table and fail on a mismatch.
        #[arg(long)]
        diff: bool,
        /// Include the larger threshold instances.
        #[arg(long)]
        extended: bool,
        /// Only run the named benchmarks.
        #[arg(long, value_name = "NAME")]
        only: Vec<String>,
        #[command(flatten)]
        limits: LimitArgs,
    },
}

#[derive(Args, Clone)]
struct LimitArgs {
    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
    max_stages: u64,
    /// Wall-clock limit per stage tree, in seconds.
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    timeout: u64,
}

impl LimitArgs {
    fn limits(&self) -> Limits {
        Limits {
            max_stages: self.max_stages as usize,
            timeout: Duration::from_secs(self.timeout),
            ..Limits::default()
        }
    }
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}: {1}")]
    Protocol(String, stagebound::ProtocolError),
    #[error(transparent)]
    Verify(#[from] verify::VerifyError),
    #[error(transparent)]
    Import(#[from] export::ImportError),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => Level::WARN,
        1 => Level::INFO,
        _ => Level::DEBUG,
    };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .init();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_ERROR);
    }
    let result = match cli.command {
        Command::Analyze {
            protocol,
            limits,
            dot,
            json,
        } => cmd_analyze(&protocol, &limits.limits(), dot.as_deref(), json.as_deref()),
        Command::Simulate {
            protocol,
            config,
            trials,
            seed,
            exact,
            max_steps,
            node_cap,
            csv,
        } => cmd_simulate(&protocol, &config, trials, seed, exact, max_steps, node_cap, csv.as_deref()),
        Command::Check {
            protocol,
            max_n,
            tree,
            node_cap,
            limits,
        } => cmd_check(&protocol, max_n, tree.as_deref(), node_cap, &limits.limits()),
        Command::Bench {
            csv,
            diff,
            extended,
            only,
            limits,
        } => cmd_bench(csv.as_deref(), diff, extended, &only, &limits.limits()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("STAGEBOUND_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("STAGEBOUND_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// A path is read as a protocol file; anything else must name a bundled protocol.
fn load_protocol(arg: &str) -> Result<PopulationProtocol, CliError> {
    let path = Path::new(arg);
    if path.exists() {
        let text = read(path)?;
        return parse_protocol(&text).map_err(|e| CliError::Protocol(arg.to_string(), e));
    }
    corpus::benchmark(arg)
        .map(|b| (b.build)())
        .ok_or_else(|| CliError::Usage(format!("`{arg}` is neither a readable file nor a bundled protocol")))
}

fn cmd_analyze(arg: &str, limits: &Limits, dot: Option<&Path>, json: Option<&Path>) -> Result<u8, CliError> {
    let p = load_protocol(arg)?;
    let (sg, report, limit) = match analyze(&p, limits) {
        Ok((sg, report)) => (sg, report, None),
        Err(e) => {
            let report = aggregate(&p, &e.partial, Duration::ZERO);
            (e.partial, report, Some(e.kind))
        }
    };
    if let Some(path) = dot {
        write(path, &export::to_dot(&p, &sg))?;
    }
    if let Some(path) = json {
        write(path, &export::to_json(&p, &sg, &report))?;
    }
    println!("protocol: {} ({} states, {} transitions)", p.name(), report.states, report.transitions);
    if let Some(kind) = limit {
        let what = match kind {
            LimitKind::Stages => "stage limit",
            LimitKind::Time => "time limit",
        };
        println!("{what} exceeded after {} stages; no bound", sg.len());
        return Ok(EXIT_LIMIT);
    }
    println!("{}", report.summary_line());
    println!(
        "note: parallel time {} (interactions divided by n)",
        report.overall.parallel_time()
    );
    let count = |f: fn(StageKind) -> bool| sg.stages().iter().filter(|s| s.children.is_empty() && f(s.kind)).count();
    println!(
        "terminals: {} stable, {} dead, {} exhausted",
        count(|k| matches!(k, StageKind::Stable(_))),
        count(|k| k == StageKind::Dead),
        count(|k| k == StageKind::Exhausted),
    );
    Ok(if report.claim == ConsensusClaim::Certified {
        0
    } else {
        EXIT_NOT_CERTIFIED
    })
}

fn parse_config(p: &PopulationProtocol, spec: &str) -> Result<Configuration, CliError> {
    let mut c = Configuration::zero(p.num_states());
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (name, count) = item
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("expected STATE=COUNT, got `{item}`")))?;
        let s = p
            .state_by_name(name.trim())
            .ok_or_else(|| CliError::Usage(format!("unknown state `{}`", name.trim())))?;
        let k: u32 = count
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("bad count in `{item}`")))?;
        c.set(s, c.get(s) + k);
    }
    if c.size() < 2 {
        return Err(CliError::Usage(format!(
            "a configuration needs at least 2 agents, got {}",
            c.size()
        )));
    }
    Ok(c)
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    arg: &str,
    spec: &str,
    trials: usize,
    seed: u64,
    exact: bool,
    max_steps: u64,
    node_cap: usize,
    csv: Option<&Path>,
) -> Result<u8, CliError> {
    let p = load_protocol(arg)?;
    let c0 = parse_config(&p, spec)?;
    let n = c0.size();
    println!("protocol: {}", p.name());
    println!("initial: {} (n = {n})", p.display_config(&c0));
    println!("trials: {trials}, seed: {seed}");
    let r = verify::simulate(&p, &c0, trials, seed, &SimTarget::Stable, max_steps, node_cap)?;
    if let (Some(mean), Some(se)) = (r.mean, r.stderr()) {
        println!("mean interactions: {mean:.4} (stderr {se:.4})");
        println!("mean parallel time: {:.4}", mean / n as f64);
        for (label, want) in [("output 0", Some(false)), ("output 1", Some(true))] {
            let k = r.outputs.iter().filter(|o| **o == want).count();
            println!("{label}: {k}/{trials}");
        }
    }
    if exact {
        let e = verify::expected_steps_to_stable(&p, &c0, node_cap)?;
        match e {
            verify::Expectation::Exact(ref q) => println!("exact expectation: {} = {:.4}", q, e.to_f64()),
            verify::Expectation::Approx(x) => println!("exact expectation: {x:.4} (floating point)"),
        }
    }
    if let Some(path) = csv {
        let rows: Vec<ScalingRow> = r
            .mean
            .map(|m| ScalingRow {
                n,
                value: m,
                stderr: r.stderr(),
            })
            .into_iter()
            .collect();
        let mut buf = Vec::new();
        verify::write_csv(&rows, &mut buf)?;
        write(path, &String::from_utf8_lossy(&buf))?;
    }
    Ok(0)
}

fn cmd_check(arg: &str, max_n: u32, tree: Option<&Path>, node_cap: usize, limits: &Limits) -> Result<u8, CliError> {
    let p = load_protocol(arg)?;
    let sg = match tree {
        Some(path) => export::from_json(&p, &read(path)?)?,
        None => match analyze(&p, limits) {
            Ok((sg, _)) => sg,
            Err(e) => {
                println!("{e} after {} stages; nothing to check", e.partial.len());
                return Ok(EXIT_LIMIT);
            }
        },
    };
    let r = verify::check_stage_graph(&p, &sg, max_n, node_cap);
    let sizes = match (r.sizes.first(), r.sizes.last()) {
        (Some(a), Some(b)) => format!("sizes {a}..{b}"),
        _ => "vacuous".to_string(),
    };
    println!("{} violations ({sizes})", r.violations.len());
    for v in &r.violations {
        let cond = match v.condition {
            Condition::Initial => "(a) initial configuration outside the root",
            Condition::Progress => "(b) successor not reached almost surely",
        };
        println!(
            "  stage {}: {cond}; n = {}, e.g. {} ({} configurations)",
            v.stage, v.n, v.witness, v.count
        );
    }
    if let Some(n) = r.truncated_at {
        println!("node cap of {node_cap} reached at n = {n}; larger sizes unchecked");
        return Ok(EXIT_LIMIT);
    }
    Ok(if r.violations.is_empty() { 0 } else { EXIT_NOT_CERTIFIED })
}

struct BenchRow {
    name: &'static str,
    label: &'static str,
    states: usize,
    transitions: usize,
    outcome: Option<(usize, Bound, ConsensusClaim)>,
    seconds: f64,
}

fn run_benchmark(b: &Benchmark, limits: &Limits) -> BenchRow {
    let p = (b.build)();
    let start = Instant::now();
    let outcome = analyze(&p, limits).ok().map(|(_, r)| (r.stages, r.overall, r.claim));
    BenchRow {
        name: b.name,
        label: b.label,
        states: p.num_states(),
        transitions: p.explicit_transitions().count(),
        outcome,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn cmd_bench(csv: Option<&Path>, diff: bool, extended: bool, only: &[String], limits: &Limits) -> Result<u8, CliError> {
    let mut suite = corpus::benchmarks();
    if extended {
        suite.extend(corpus::extended_benchmarks());
    }
    if !only.is_empty() {
        if let Some(bad) = only.iter().find(|n| !suite.iter().any(|b| &b.name == n)) {
            return Err(CliError::Usage(format!("unknown benchmark `{bad}`")));
        }
        suite.retain(|b| only.iter().any(|n| n == b.name));
    }
    let rows: Vec<BenchRow> = suite.par_iter().map(|b| run_benchmark(b, limits)).collect();
    let mut table = String::from("name,predicate,states,transitions,stages,bound,claim,seconds\n");
    for r in &rows {
        let (stages, bound, claim) = match &r.outcome {
            Some((s, b, c)) => (s.to_string(), b.tag().to_string(), c.to_string()),
            None => ("T/O".into(), "-".into(), "-".into()),
        };
        table.push_str(&format!(
            "{},\"{}\",{},{},{},{},{},{:.3}\n",
            r.name, r.label, r.states, r.transitions, stages, bound, claim, r.seconds
        ));
    }
    print!("{table}");
    if let Some(path) = csv {
        write(path, &table)?;
    }
    if !diff {
        return Ok(0);
    }
    let mut mismatches = 0;
    for r in &rows {
        let got = match &r.outcome {
            Some((s, b, _)) => format!("{},{},{},{}", r.states, r.transitions, s, b.tag()),
            None => format!("{},{},T/O,-", r.states, r.transitions),
        };
        match expected_row(r.name) {
            Some(want) if want == got => {}
            Some(want) => {
                mismatches += 1;
                eprintln!("diff {}: expected {want}, got {got}", r.name);
            }
            None => {
                mismatches += 1;
                eprintln!("diff {}: no expected row", r.name);
            }
        }
    }
    eprintln!("diff: {} of {} rows match", rows.len() - mismatches, rows.len());
    Ok(if mismatches == 0 { 0 } else { EXIT_NOT_CERTIFIED })
}

/// `states,transitions,stages,bound` from the checked-in table.
fn expected_row(name: &str) -> Option<String> {
    EXPECTED_TABLE.lines().skip(1).find_map(|line| {
        let (n, rest) = line.split_once(',')?;
        (n == name).then(|| rest.to_string())
    })
}
