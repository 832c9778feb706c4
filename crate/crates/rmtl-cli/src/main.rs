//! Command-line front end: compile policies, monitor event streams,
//! cross-check the incremental engine against the reference semantics,
//! fuzz the whole pipeline, and measure per-event cost.
//!
//! Exit codes are a stable contract: 0 clean, 1 violation or
//! counterexample found, 2 usage/parse error, 3 I/O or trace error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rmtl::compile::{compile, dump_table, CompiledPolicy};
use rmtl::dsl::SourcePolicy;
use rmtl::formula::PolicySpec;
use rmtl::harness::{bench, differential, GenConfig};
use rmtl::monitor::MonitorState;
use rmtl::report;
use rmtl::scenarios;
use rmtl::trace::{read_trace, TraceReader};

const EXIT_CLEAN: u8 = 0;
const EXIT_VIOLATION: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_TRACE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "rmtl",
    about = "Policy monitoring for past-time metric temporal logic with recursive definitions",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, validate and compile a policy file.
    Compile {
        policy: PathBuf,
        /// Print the compiled subformula table.
        #[arg(long)]
        dump_table: bool,
    },
    /// Monitor a JSONL event stream from stdin, one verdict line per
    /// world per policy, flushed as events arrive.
    Monitor {
        policy: PathBuf,
        #[command(flatten)]
        output: OutputFormat,
    },
    /// Run the incremental monitor over a stored trace file.
    Check {
        policy: PathBuf,
        trace: PathBuf,
        #[command(flatten)]
        output: OutputFormat,
    },
    /// Run the brute-force reference semantics over a stored trace file.
    /// Output format matches `check` exactly, so `diff` is a conformance
    /// test. Cost grows with the square of the trace length or worse.
    Oracle {
        policy: PathBuf,
        trace: PathBuf,
        #[command(flatten)]
        output: OutputFormat,
    },
    /// Differential testing: random specs and traces, monitor vs oracle.
    Fuzz {
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Where to write the repro bundle if a counterexample is found.
        #[arg(long, default_value = "fuzz-repro")]
        out: PathBuf,
    },
    /// Per-event cost across trace lengths for one policy.
    Bench {
        /// Policy file path, or the name of a bundled scenario.
        #[arg(long)]
        policy: String,
        /// Trace lengths to stream, e.g. --lengths 1000 1000000.
        #[arg(long, num_args = 1.., required = true)]
        lengths: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// List bundled scenarios.
    Scenarios,
}

#[derive(Args)]
struct OutputFormat {
    /// Emit verdicts as JSON objects instead of plain text lines.
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    ExitCode::from(run())
}

fn run() -> u8 {
    match Cli::parse().command {
        Command::Compile { policy, dump_table } => cmd_compile(&policy, dump_table),
        Command::Monitor { policy, output } => cmd_monitor(&policy, output.json),
        Command::Check {
            policy,
            trace,
            output,
        } => cmd_check(&policy, &trace, output.json),
        Command::Oracle {
            policy,
            trace,
            output,
        } => cmd_oracle(&policy, &trace, output.json),
        Command::Fuzz { trials, seed, out } => cmd_fuzz(trials, seed, &out),
        Command::Bench {
            policy,
            lengths,
            seed,
        } => cmd_bench(&policy, &lengths, seed),
        Command::Scenarios => {
            for name in scenarios::scenario_names() {
                println!("{name}");
            }
            EXIT_CLEAN
        }
    }
}

/// Loads and parses a policy file, reporting diagnostics on stderr.
fn load_policy(path: &Path) -> Result<PolicySpec, u8> {
    let source = match SourcePolicy::from_path(path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("rmtl: cannot read {}: {e}", path.display());
            return Err(EXIT_TRACE);
        }
    };
    match source.parse() {
        Ok(spec) => Ok(spec),
        Err(diags) => {
            for d in diags {
                eprintln!("{}: {d}", source.origin);
            }
            Err(EXIT_USAGE)
        }
    }
}

fn load_compiled(path: &Path) -> Result<(PolicySpec, CompiledPolicy), u8> {
    let spec = load_policy(path)?;
    match compile(&spec) {
        Ok(cp) => Ok((spec, cp)),
        Err(e) => {
            eprintln!("rmtl: {}: {e}", path.display());
            Err(EXIT_USAGE)
        }
    }
}

fn cmd_compile(path: &Path, dump: bool) -> u8 {
    match load_compiled(path) {
        Ok((_, cp)) => {
            if dump {
                print!("{}", dump_table(&cp));
            } else {
                println!(
                    "{}: {} table entries, {} state cells, {} policies",
                    path.display(),
                    cp.table.len(),
                    rmtl::monitor::state_cells(&cp),
                    cp.roots.len()
                );
            }
            EXIT_CLEAN
        }
        Err(code) => code,
    }
}

fn verdict_lines(cp: &CompiledPolicy, v: &rmtl::monitor::Verdict, json: bool) -> String {
    let mut out = String::new();
    for (root, &violated) in cp.roots.iter().zip(&v.violated) {
        if json {
            out.push_str(
                &serde_json::json!({
                    "world": v.world,
                    "ts": v.ts,
                    "policy": root.name,
                    "violated": violated,
                })
                .to_string(),
            );
            out.push('\n');
        } else {
            out.push_str(&report::verdict_line(v.world, v.ts, &root.name, violated));
            out.push('\n');
        }
    }
    out
}

fn cmd_monitor(path: &Path, json: bool) -> u8 {
    let (spec, cp) = match load_compiled(path) {
        Ok(x) => x,
        Err(code) => return code,
    };
    let stdin = std::io::stdin();
    let reader = TraceReader::new(&spec, stdin.lock());
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let mut state: Option<MonitorState> = None;
    let mut any_violation = false;
    for event in reader {
        let event = match event {
            Ok(e) => e,
            Err(e) => {
                eprintln!("rmtl: {e}");
                return EXIT_TRACE;
            }
        };
        let verdict = match state.as_mut() {
            None => {
                let (ms, v) = MonitorState::init(&cp, &event);
                state = Some(ms);
                v
            }
            Some(ms) => match ms.step(&cp, &event) {
                Ok(v) => v,
                Err(e) => {
                    eprintln!("rmtl: {e}");
                    return EXIT_TRACE;
                }
            },
        };
        any_violation |= verdict.any_violation();
        // One write + flush per world: verdicts must be visible to a
        // downstream consumer before the next event arrives.
        if out
            .write_all(verdict_lines(&cp, &verdict, json).as_bytes())
            .and_then(|()| out.flush())
            .is_err()
        {
            return EXIT_TRACE;
        }
    }
    if any_violation {
        EXIT_VIOLATION
    } else {
        EXIT_CLEAN
    }
}

fn load_trace_file(spec: &PolicySpec, path: &Path) -> Result<rmtl::trace::Trace, u8> {
    let file = match std::fs::File::open(path) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("rmtl: cannot read {}: {e}", path.display());
            return Err(EXIT_TRACE);
        }
    };
    match read_trace(spec, std::io::BufReader::new(file)) {
        Ok(t) => Ok(t),
        Err(e) => {
            eprintln!("rmtl: {}: {e}", path.display());
            Err(EXIT_TRACE)
        }
    }
}

fn cmd_check(policy: &Path, trace_path: &Path, json: bool) -> u8 {
    let (spec, cp) = match load_compiled(policy) {
        Ok(x) => x,
        Err(code) => return code,
    };
    let trace = match load_trace_file(&spec, trace_path) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let verdicts = match rmtl::monitor::run(&cp, &trace) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("rmtl: {e}");
            return EXIT_TRACE;
        }
    };
    let mut any = false;
    for v in &verdicts {
        any |= v.any_violation();
        print!("{}", verdict_lines(&cp, v, json));
    }
    if any {
        EXIT_VIOLATION
    } else {
        EXIT_CLEAN
    }
}

fn cmd_oracle(policy: &Path, trace_path: &Path, json: bool) -> u8 {
    let (spec, cp) = match load_compiled(policy) {
        Ok(x) => x,
        Err(code) => return code,
    };
    let trace = match load_trace_file(&spec, trace_path) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let mut evaluator = rmtl::oracle::Evaluator::with_memo(&spec, &trace);
    let mut any = false;
    for i in 1..=trace.len() {
        for root in &cp.roots {
            let policy = spec
                .policies
                .iter()
                .find(|p| p.name == root.name)
                .expect("roots mirror policies");
            let violated = evaluator
                .sat(i, &policy.formula)
                .expect("world index in range");
            any |= violated;
            if json {
                println!(
                    "{}",
                    serde_json::json!({
                        "world": i as u64,
                        "ts": trace.ts(i),
                        "policy": root.name,
                        "violated": violated,
                    })
                );
            } else {
                println!(
                    "{}",
                    report::verdict_line(i as u64, trace.ts(i), &root.name, violated)
                );
            }
        }
    }
    if any {
        EXIT_VIOLATION
    } else {
        EXIT_CLEAN
    }
}

fn cmd_fuzz(trials: u64, seed: u64, out: &Path) -> u8 {
    let cfg = GenConfig {
        seed,
        ..GenConfig::default()
    };
    let report = differential(&cfg, trials);
    println!(
        "trials {} worlds {} metric-checks {}",
        report.trials, report.worlds_checked, report.metric_checks
    );
    match report.counterexample {
        None => {
            println!("result ok");
            EXIT_CLEAN
        }
        Some(cex) => {
            println!(
                "result counterexample trial {} seed {}",
                cex.trial, cex.seed
            );
            match cex.write_bundle(out) {
                Ok((spec_path, trace_path, report_path)) => {
                    println!("wrote {}", spec_path.display());
                    println!("wrote {}", trace_path.display());
                    println!("wrote {}", report_path.display());
                }
                Err(e) => eprintln!("rmtl: cannot write repro bundle: {e}"),
            }
            println!("detail: {}", cex.report);
            EXIT_VIOLATION
        }
    }
}

fn cmd_bench(policy: &str, lengths: &[usize], seed: u64) -> u8 {
    let spec = if let Ok(s) = scenarios::load_scenario(policy) {
        s.spec()
    } else {
        match load_policy(Path::new(policy)) {
            Ok(s) => s,
            Err(code) => return code,
        }
    };
    match bench(&spec, lengths, seed) {
        Ok(reports) => {
            println!("policy length median_ns p95_ns state_cells");
            for r in reports {
                println!(
                    "{} {} {} {} {}",
                    r.policy, r.trace_length, r.median_ns, r.p95_ns, r.peak_state_cells
                );
            }
            EXIT_CLEAN
        }
        Err(e) => {
            eprintln!("rmtl: {e}");
            EXIT_USAGE
        }
    }
}
