use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use num_traits::ToPrimitive;
use serde::Serialize;
use serde_json::json;

use nlbox::analysis;
use nlbox::betting::{self, Capital};
use nlbox::boxes::BoxError;
use nlbox::config::{self, BettorsConfig, ChshConfig, ConfigError, DiagonalConfig, LearnConfig, ProtocolRunConfig, Resolved};
use nlbox::io::{self, IoError};
use nlbox::learner;
use nlbox::protocol::{self, switch_alphabet, ProtocolError, SwitchSymbol};
use nlbox::vm;

/// Deterministic non-local boxes, the signaling protocol, and its ingredients.
///
/// Every command reads one TOML config and writes its outputs, a
/// `summary.json` and the resolved config (`resolved.toml`) into the output
/// directory. The summary is also printed to stdout. On failure a JSON error
/// record is printed to stderr and the exit code is nonzero.
#[derive(Parser)]
#[command(name = "nlbox", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// CHSH score of a box pair under seeded fair-coin inputs.
    /// Writes distribution.csv.
    Chsh(RunArgs),
    /// Run the signaling protocol. Writes transcript.jsonl.
    Protocol(RunArgs),
    /// Diagonal switching sequence against the default bettor family.
    /// Writes sequence.txt.
    Diagonal(RunArgs),
    /// Capital trajectories of bettors along a sequence file.
    /// Writes trajectory_<i>.csv per bettor.
    Bettors(RunArgs),
    /// Learning by enumeration over a sample file. Writes trace.csv.
    Learn(RunArgs),
}

fn prepare<T: Resolved>(args: &RunArgs) -> Result<T> {
    let cfg: T = config::load(&args.config)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let resolved = args.out.join("resolved.toml");
    std::fs::write(&resolved, config::to_toml(&cfg)).with_context(|| format!("writing {}", resolved.display()))?;
    Ok(cfg)
}

fn finish(out: &Path, summary: serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(&summary)?;
    let path = out.join("summary.json");
    std::fs::write(&path, format!("{text}\n")).with_context(|| format!("writing {}", path.display()))?;
    // a closed stdout (e.g. piped into `head`) is not a failure of the run
    let _ = writeln!(std::io::stdout(), "{text}");
    Ok(())
}

fn ratio(c: &Capital) -> String {
    c.to_string()
}

#[derive(Serialize)]
struct DistRow {
    x: u8,
    y: u8,
    a: u8,
    b: u8,
    count: u64,
    probability: String,
}

fn chsh(args: &RunArgs) -> Result<()> {
    let cfg: ChshConfig = prepare(args)?;
    let pair = cfg.pair.build()?;
    let dist = analysis::estimate_distribution(&pair, cfg.horizon, cfg.seed)?;
    let mut rows = Vec::new();
    for x in 0..2 {
        for y in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    rows.push(DistRow {
                        x,
                        y,
                        a,
                        b,
                        count: dist.count(x, y, a, b),
                        probability: dist.probability(a, b, x, y).map(|p| ratio(&p)).unwrap_or_default(),
                    });
                }
            }
        }
    }
    io::write_csv(&args.out.join("distribution.csv"), &rows)?;
    let score = analysis::chsh_score(&dist)?;
    let approx = score.to_f64();
    finish(
        &args.out,
        json!({ "rounds": dist.rounds(), "seed": cfg.seed, "chsh": ratio(&score), "chsh_approx": approx }),
    )
}

fn run_protocol(args: &RunArgs) -> Result<()> {
    let cfg: ProtocolRunConfig = prepare(args)?;
    let pair = cfg.pair.build()?;
    let p = &cfg.protocol;
    let run = protocol::run_protocol(p, &pair)?;
    io::write_jsonl(&args.out.join("transcript.jsonl"), &run.transcript)?;
    let p1 = protocol::check_p1(&run.transcript, &pair, &p.budget)?;
    let p2 = protocol::check_p2(&run.transcript, &pair, p.m(), p.window)?;
    let settle = protocol::rounds_to_settle(&run.transcript, p.m(), p.window);
    let distance = match (cfg.round_seconds, settle) {
        (Some(t), Some(rounds)) => Some(analysis::signaling_distance(t, rounds)?),
        _ => None,
    };
    let decoded = run.decode.message();
    finish(
        &args.out,
        json!({
            "message": p.message,
            "decoded": decoded,
            "correct": decoded.as_ref() == Some(&p.message),
            "rounds_to_settle": settle,
            "signaling_distance_m": distance,
            "decode": run.decode,
            "report": run.report,
            "p1": p1,
            "p2": p2,
        }),
    )
}

fn diagonal(args: &RunArgs) -> Result<()> {
    let cfg: DiagonalConfig = prepare(args)?;
    anyhow::ensure!(cfg.m >= 1, ConfigError::Invalid("m must be at least 1".into()));
    anyhow::ensure!(cfg.programs >= 1, ConfigError::Invalid("programs must be at least 1".into()));
    cfg.budget.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let family = protocol::build_default_family(&cfg.budget, cfg.m, cfg.programs);
    let run = betting::diagonal_sequence(&family, &switch_alphabet(cfg.m), cfg.length);
    let symbols: Vec<SwitchSymbol> = run.sequence.iter().map(|&s| SwitchSymbol::from_index(s)).collect();
    io::write_sequence(&args.out.join("sequence.txt"), &symbols)?;
    let mut counts = vec![0u64; 4 + cfg.m];
    for &s in &run.sequence {
        counts[s] += 1;
    }
    let bounded = (0..family.len()).all(|i| run.peak_capitals[i] <= family.capital_bound(i));
    finish(
        &args.out,
        json!({
            "length": cfg.length,
            "family_size": family.len(),
            "symbol_counts": counts,
            "initial_weighted_total": run.weighted_totals[0].to_f64(),
            "final_weighted_total": run.weighted_totals.last().and_then(|t| t.to_f64()),
            "capitals_bounded": bounded,
        }),
    )
}

fn bettors(args: &RunArgs) -> Result<()> {
    let cfg: BettorsConfig = prepare(args)?;
    anyhow::ensure!(cfg.m >= 1, ConfigError::Invalid("m must be at least 1".into()));
    let alphabet = switch_alphabet(cfg.m);
    let symbols = io::read_sequence(&cfg.sequence)?;
    if let Some(bad) = symbols.iter().find(|s| !s.is_valid(cfg.m)) {
        return Err(ConfigError::Invalid(format!("symbol `{bad}` is not valid for m = {}", cfg.m)).into());
    }
    let seq: Vec<usize> = symbols.iter().map(|s| s.to_index()).collect();
    let mut finals = Vec::new();
    for (i, spec) in cfg.bettors.iter().enumerate() {
        let bettor = spec.build(&alphabet)?;
        let traj = betting::run_bettor(&bettor, &seq, alphabet.k());
        io::write_trajectory(&args.out.join(format!("trajectory_{i}.csv")), &traj)?;
        finals.push(json!({
            "bettor": bettor.describe(),
            "final_capital": ratio(traj.last().expect("nonempty")),
        }));
    }
    finish(&args.out, json!({ "positions": seq.len(), "bettors": finals }))
}

fn learn(args: &RunArgs) -> Result<()> {
    let cfg: LearnConfig = prepare(args)?;
    cfg.budget.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let samples = io::read_samples(&cfg.samples)?;
    if let Some(s) = samples.iter().find(|s| s.x > 1 || s.y > 1 || s.b > 1) {
        return Err(ConfigError::Invalid(format!("sample {s:?} has a non-bit field")).into());
    }
    let (state, rows) = learner::learn_trace(&samples, &cfg.budget, cfg.scan_cap)?;
    io::write_trace(&args.out.join("trace.csv"), &rows)?;
    let program = (!state.is_exhausted()).then(|| vm::enumerate(state.guess_index()).to_text());
    finish(
        &args.out,
        json!({
            "samples": samples.len(),
            "guess_index": state.guess_index(),
            "mind_changes": state.mind_changes(),
            "status": state.status(),
            "program": program,
        }),
    )
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    if err.downcast_ref::<ConfigError>().is_some() {
        "config"
    } else if err.downcast_ref::<ProtocolError>().is_some() {
        "protocol"
    } else if err.downcast_ref::<BoxError>().is_some() {
        "box"
    } else if err.downcast_ref::<IoError>().is_some() {
        "io"
    } else if err.downcast_ref::<learner::LearnerError>().is_some() {
        "learner"
    } else if err.downcast_ref::<analysis::AnalysisError>().is_some() {
        "analysis"
    } else {
        "error"
    }
}

fn report(kind: &str, message: String, code: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return report("usage", e.to_string().trim_end().to_owned(), 2),
    };
    let result = match &cli.command {
        Command::Chsh(a) => chsh(a),
        Command::Protocol(a) => run_protocol(a),
        Command::Diagonal(a) => diagonal(a),
        Command::Bettors(a) => bettors(a),
        Command::Learn(a) => learn(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(error_kind(&e), format!("{e:#}"), 1),
    }
}
