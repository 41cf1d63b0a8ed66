//! `arena`: run, tune, synthesize and report on autobidding episodes.

use std::fs;
use std::io::{self, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use autobid_core::data::write_dataset;
use autobid_core::env::EpisodeTrace;
use autobid_core::external::{serve_peer, Message};
use autobid_core::metrics::Report;
use autobid_core::tuning::{cross_metric_table, default_for, TuningResult};
use autobid_core::{Arena, ArenaConfig, SearchSpace, SyntheticConfig, TargetMetric};

#[derive(Parser)]
#[command(name = "arena", version, about = "Deterministic arena for classical autobidding algorithms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run both periods and write traces and metrics.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tune the configured algorithm on period 1 and validate on period 2.
    Tune {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        target: TargetMetric,
        /// Search space JSON, or `default` for the built-in grid.
        #[arg(long)]
        space: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic dataset CSV.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute metrics from traces and tabulate tuning results in a directory.
    Report {
        #[arg(long)]
        traces: PathBuf,
    },
    /// Reference external bidder: bids a constant on every auction.
    Peer {
        #[arg(long)]
        bid: f64,
        /// Accept connections on this address instead of using stdio.
        #[arg(long)]
        listen: Option<String>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run { config, seed, out } => cmd_run(&config, seed, out),
        Command::Tune { config, target, space, seed, out } => cmd_tune(&config, target, &space, seed, out),
        Command::Synth { config, out } => cmd_synth(&config, &out),
        Command::Report { traces } => cmd_report(&traces),
        Command::Peer { bid, listen } => cmd_peer(bid, listen.as_deref()),
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ArenaConfig> {
    let mut config = ArenaConfig::load(path).with_context(|| format!("loading config {}", path.display()))?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_run(config_path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let config = load_config(config_path, seed)?;
    let out = out.unwrap_or_else(|| config.output_dir.clone());
    let arena = Arena::new(config)?;
    let output = arena.run()?;
    arena.write_run(&output, &out)?;
    for (i, trace) in output.traces.iter().enumerate() {
        let (nan, incidents) = (trace.total_nan_bids(), trace.total_incidents());
        if nan > 0 || incidents > 0 {
            log::warn!("period {}: {nan} NaN bids, {incidents} protocol incidents", i + 1);
        }
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_tune(config_path: &Path, target: TargetMetric, space: &str, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let config = load_config(config_path, seed)?;
    let kind = config.algorithm.kind;
    let space: SearchSpace = if space == "default" {
        default_for(kind).with_context(|| format!("{kind} has no default search space"))?
    } else {
        let text = fs::read_to_string(space).with_context(|| format!("reading search space {space}"))?;
        serde_json::from_str(&text).with_context(|| format!("parsing search space {space}"))?
    };
    let out = out.unwrap_or_else(|| config.output_dir.clone());
    let arena = Arena::new(config)?;
    let result = arena.tune(target, &space)?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let stem = format!("{kind}_{target}");
    write_json(&out.join(format!("tuning_{stem}.json")), &result)?;
    let log_path = out.join(format!("evaluations_{stem}.csv"));
    let file = fs::File::create(&log_path).with_context(|| format!("writing {}", log_path.display()))?;
    result.write_log_csv(BufWriter::new(file))?;
    println!(
        "{kind} tuned for {target}: {} (period-1 {target} = {})",
        serde_json::to_string(result.best_hyperparameters())?,
        result.period1_target
    );
    Ok(())
}

fn cmd_synth(config_path: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(config_path).with_context(|| format!("reading {}", config_path.display()))?;
    let config: SyntheticConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", config_path.display()))?;
    let dataset = config.generate_logged()?;
    let file = fs::File::create(out).with_context(|| format!("writing {}", out.display()))?;
    write_dataset(BufWriter::new(file), dataset.rows())?;
    println!("wrote {} rows to {}", dataset.len(), out.display());
    Ok(())
}

fn cmd_report(dir: &Path) -> Result<()> {
    let mut entries: Vec<PathBuf> =
        fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))?.map(|e| e.map(|e| e.path())).collect::<io::Result<_>>()?;
    entries.sort();
    let name = |p: &Path| p.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();

    let mut stdout = io::stdout().lock();
    let mut found = false;
    for csv_path in entries.iter().filter(|p| name(p).starts_with("trace_") && name(p).ends_with(".csv")) {
        let json_path = csv_path.with_extension("json");
        let trace = EpisodeTrace::read_files(csv_path, &json_path)?;
        let report = Report::from_trace(&trace)?;
        writeln!(stdout, "{} (period {})", name(csv_path), trace.header.period)?;
        report.overall.write_csv(&mut stdout)?;
        found = true;
    }

    let mut results = Vec::new();
    for path in entries.iter().filter(|p| name(p).starts_with("tuning_") && name(p).ends_with(".json")) {
        let text = fs::read_to_string(path)?;
        let result: TuningResult = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        results.push(result);
    }
    if !results.is_empty() {
        let table = cross_metric_table(&results)?;
        write_json(&dir.join("cross_metric.json"), &table)?;
        let mut buf = Vec::new();
        table.write_csv(&mut buf)?;
        fs::write(dir.join("cross_metric.csv"), &buf)?;
        stdout.write_all(&buf)?;
        found = true;
    }
    if !found {
        bail!("no traces or tuning results in {}", dir.display());
    }
    Ok(())
}

fn constant_policy(bid: f64) -> impl FnMut(&Message) -> Vec<f64> {
    move |m| match m {
        Message::Request { auctions, .. } => vec![bid; auctions.len()],
        _ => Vec::new(),
    }
}

fn serve_tcp(stream: TcpStream, bid: f64) -> io::Result<()> {
    let reader = BufReader::new(stream.try_clone()?);
    serve_peer(reader, BufWriter::new(stream), constant_policy(bid))
}

fn cmd_peer(bid: f64, listen: Option<&str>) -> Result<()> {
    if !(bid.is_finite() && bid >= 0.0) {
        bail!("--bid must be finite and >= 0");
    }
    let Some(addr) = listen else {
        let stdin = io::stdin().lock();
        let stdout = io::stdout().lock();
        return Ok(serve_peer(stdin, stdout, constant_policy(bid))?);
    };
    let listener = TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?;
    eprintln!("listening on {}", listener.local_addr()?);
    for stream in listener.incoming() {
        let stream = stream?;
        thread::spawn(move || {
            if let Err(e) = serve_tcp(stream, bid) {
                log::warn!("peer session ended: {e}");
            }
        });
    }
    Ok(())
}
