//! `resilchk`: parse model files, run declared or ad-hoc checks, and emit
//! one JSON report per line on stdout. Exit codes: 0 pass, 1 fail,
//! 2 inconclusive, 3 usage or parse error.

mod checks;
mod report;
mod selftest;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use resilchk::calculus::{parse_model, CheckDecl, Model, Param};
use resilchk::error::Error;
use resilchk::models::{replicated_server_text, sidechannel_text, transmission_model_text};

use checks::Settings;
use report::{exit_code, Report};

#[derive(Parser)]
#[command(name = "resilchk", version, about = "Resilience checking for processes under adversaries")]
struct Cli {
    /// Seed for randomized validation sampling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Explicit state budget per side.
    #[arg(long, global = true, default_value_t = 200_000)]
    cap: usize,
    /// Add wall time to report statistics (reports are then not reproducible).
    #[arg(long, global = true)]
    timings: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate a model file.
    Parse { file: PathBuf },
    /// Run every check declared in a model file.
    Check {
        file: PathBuf,
        /// Only run checks of this kind.
        #[arg(long)]
        kind: Option<String>,
    },
    /// Weak barbs of a system.
    Barbs {
        file: PathBuf,
        #[arg(long)]
        system: String,
        #[arg(long, default_value_t = 64)]
        depth: i64,
    },
    /// Weak barbed bisimilarity of two systems, each under an adversary.
    Bisim {
        file: PathBuf,
        #[arg(long)]
        left: String,
        #[arg(long)]
        right: String,
        #[arg(long)]
        left_adversary: Option<String>,
        #[arg(long)]
        right_adversary: Option<String>,
        #[arg(long, default_value = "explicit")]
        engine: String,
    },
    /// Coverability of a target barb (or `err`) in a system, or of `err`
    /// and `waiting` with `--instance transmission`.
    Cover {
        file: PathBuf,
        #[arg(long)]
        instance: String,
        #[arg(long)]
        target: String,
        #[arg(long)]
        adversary: Option<String>,
        #[command(flatten)]
        tx: TxArgs,
    },
    /// Resilience of a core inside a context under an adversary.
    Resilience {
        file: PathBuf,
        #[arg(long)]
        core: String,
        #[arg(long)]
        context: String,
        #[arg(long)]
        adversary: String,
        #[arg(long)]
        env: Option<String>,
        #[arg(long)]
        reference: Option<String>,
        #[arg(long, default_value = "explicit")]
        engine: String,
    },
    /// Write a case-study model file.
    Gen {
        #[command(subcommand)]
        model: GenCmd,
        /// Output file; stdout when absent.
        #[arg(short, long, global = true)]
        output: Option<PathBuf>,
    },
    /// Oracle agreement suites.
    Selftest {
        #[arg(long, default_value_t = 200)]
        systems: usize,
        #[arg(long, default_value_t = 2_000)]
        samples: usize,
    },
}

#[derive(Args)]
struct TxArgs {
    #[arg(long, default_value = "counting")]
    client: String,
    #[arg(long, default_value = "bag")]
    channel: String,
    #[arg(long, default_value_t = 2)]
    k: i64,
    #[arg(long, default_value_t = 3)]
    p_max: i64,
}

#[derive(Subcommand)]
enum GenCmd {
    /// Fast and slow message chains with a noise context.
    Sidechannel {
        #[arg(long, default_value_t = 3)]
        n: u32,
        #[arg(long, default_value_t = 5)]
        n1: u32,
        #[arg(long, default_value = "m")]
        message: String,
    },
    /// Replicated one-time-pad server under fail-stop failures.
    Repserver {
        #[arg(long, default_value_t = 2)]
        clients: usize,
        #[arg(long, default_value_t = 2)]
        replicas: usize,
        #[arg(long, default_value_t = 1)]
        maxfail: usize,
    },
    /// Request/response transmission over lossy channels.
    Transmission {
        #[arg(long, default_value_t = 2)]
        k: u8,
        #[arg(long, default_value_t = 3)]
        p_max: u8,
    },
}

enum Failure {
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn load(path: &Path) -> Result<Model, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    parse_model(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn decl(kind: &str, params: &[(&str, Option<Param>)]) -> CheckDecl {
    let params: BTreeMap<String, Param> = params
        .iter()
        .filter_map(|(k, v)| v.clone().map(|v| (k.to_string(), v)))
        .collect();
    CheckDecl {
        kind: kind.to_string(),
        params,
    }
}

fn name(s: &str) -> Option<Param> {
    Some(Param::Name(s.to_string()))
}

fn opt(s: &Option<String>) -> Option<Param> {
    s.as_deref().and_then(name)
}

fn run_one(m: &Model, c: &CheckDecl, cfg: &Settings) -> Result<Vec<Report>, Failure> {
    Ok(vec![checks::run(m, c, cfg)?])
}

fn execute(cli: Cli) -> Result<Vec<Report>, Failure> {
    let cfg = Settings {
        seed: cli.seed,
        cap: cli.cap,
        timings: cli.timings,
    };
    match cli.cmd {
        Cmd::Parse { file } => {
            let m = load(&file)?;
            eprintln!(
                "{}: {} definitions, {} systems, {} contexts, {} adversaries, {} checks",
                file.display(),
                m.defs.len(),
                m.systems.len(),
                m.contexts.len(),
                m.adversaries.len(),
                m.checks.len()
            );
            Ok(Vec::new())
        }
        Cmd::Check { file, kind } => {
            let m = load(&file)?;
            let mut out = Vec::new();
            for c in m.checks.iter().filter(|c| kind.as_ref().is_none_or(|k| *k == c.kind)) {
                let r = checks::run(&m, c, &cfg)?;
                r.emit();
                out.push(r);
            }
            Ok(out)
        }
        Cmd::Barbs { file, system, depth } => {
            let m = load(&file)?;
            run_one(&m, &decl("barbs", &[("system", name(&system)), ("depth", Some(Param::Int(depth)))]), &cfg)
        }
        Cmd::Bisim {
            file,
            left,
            right,
            left_adversary,
            right_adversary,
            engine,
        } => {
            let m = load(&file)?;
            let c = decl(
                "bisim",
                &[
                    ("left", name(&left)),
                    ("right", name(&right)),
                    ("left_adversary", opt(&left_adversary)),
                    ("right_adversary", opt(&right_adversary)),
                    ("engine", name(&engine)),
                ],
            );
            run_one(&m, &c, &cfg)
        }
        Cmd::Cover {
            file,
            instance,
            target,
            adversary,
            tx,
        } => {
            let m = load(&file)?;
            let tx_only = |p: Param| (instance == "transmission").then_some(p);
            let c = decl(
                "cover",
                &[
                    ("instance", name(&instance)),
                    ("target", name(&target)),
                    ("adversary", opt(&adversary)),
                    ("client", tx_only(Param::Name(tx.client.clone()))),
                    ("channel", tx_only(Param::Name(tx.channel.clone()))),
                    ("k", tx_only(Param::Int(tx.k))),
                    ("p_max", tx_only(Param::Int(tx.p_max))),
                ],
            );
            run_one(&m, &c, &cfg)
        }
        Cmd::Resilience {
            file,
            core,
            context,
            adversary,
            env,
            reference,
            engine,
        } => {
            let m = load(&file)?;
            let c = decl(
                "resilience",
                &[
                    ("core", name(&core)),
                    ("context", name(&context)),
                    ("adversary", name(&adversary)),
                    ("env", opt(&env)),
                    ("reference", opt(&reference)),
                    ("engine", name(&engine)),
                ],
            );
            run_one(&m, &c, &cfg)
        }
        Cmd::Gen { model, output } => {
            let text = match model {
                GenCmd::Sidechannel { n, n1, message } => sidechannel_text(n, n1, &message)?,
                GenCmd::Repserver {
                    clients,
                    replicas,
                    maxfail,
                } => replicated_server_text(clients, replicas, maxfail)?,
                GenCmd::Transmission { k, p_max } => transmission_model_text(k, p_max)?,
            };
            match output {
                Some(path) => {
                    std::fs::write(&path, text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
                }
                None => print!("{text}"),
            }
            Ok(Vec::new())
        }
        Cmd::Selftest { systems, samples } => {
            let out = selftest::run(cli.seed, systems, samples)?;
            out.iter().for_each(Report::emit);
            Ok(out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    let emitted_inline = matches!(cli.cmd, Cmd::Check { .. } | Cmd::Selftest { .. });
    match execute(cli) {
        Ok(reports) => {
            if !emitted_inline {
                reports.iter().for_each(Report::emit);
            }
            ExitCode::from(exit_code(&reports))
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
