//! Command-line toolkit for local social influence prediction.
//!
//! Grammar: `influlocal <command> [--config FILE] [--key value]...` where
//! keys are flat configuration entries; CLI overrides beat file entries,
//! which beat defaults. Every command writes its artifacts plus a manifest
//! into the `out` directory.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use config::RunConfig;
use influlocal::Error;

const USAGE: &str = "usage: influlocal <command> [--config FILE] [--key value]...

commands:
  synth     generate a synthetic topology and independent-cascade action log
  prepare   build, filter, balance, split, and sample prediction instances
  features  compute structural vertex features of the global graph
  embed     train skip-gram network embeddings over random walks
  train     train the GCN/GAT influence model
  eval      score a split with a trained checkpoint and report metrics
  baseline  train and evaluate a baseline (baseline = lr | svm | pscn)
  attend    export attention coefficients and score functions per instance
  sweep     run prepare/train/eval cycles along one hyper-parameter axis

common keys: out (output dir), seed, graph, log, embeddings, features,
instances, variant, n, restart, hidden, heads, lr, weight_decay, dropout,
batch, max_epochs, patience, min_active, neg_pos. See README for the full
key reference.";

fn parse_args(args: &[String]) -> Result<(String, RunConfig), String> {
    if args.is_empty() {
        return Err("missing command".into());
    }
    let command = args[0].clone();
    if command.starts_with("--") {
        return Err(format!("expected a command before '{command}'"));
    }
    let mut file: Option<PathBuf> = None;
    let mut overrides: Vec<(String, String)> = Vec::new();
    let mut i = 1;
    while i < args.len() {
        let key = &args[i];
        let Some(name) = key.strip_prefix("--") else {
            return Err(format!("expected '--key value', got '{key}'"));
        };
        let Some(value) = args.get(i + 1) else {
            return Err(format!("missing value for '--{name}'"));
        };
        if name == "config" {
            file = Some(PathBuf::from(value));
        } else {
            overrides.push((name.to_string(), value.clone()));
        }
        i += 2;
    }
    let config = RunConfig::from_sources(file.as_deref(), &overrides)
        .map_err(|e| format!("bad configuration: {e}"))?;
    Ok((command, config))
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--help" || a == "-h") || args.is_empty() {
        println!("{USAGE}");
        return ExitCode::from(u8::from(args.is_empty()) * 2);
    }
    let (command, config) = match parse_args(&args) {
        Ok(parsed) => parsed,
        Err(msg) => {
            eprintln!("error: {msg}\n\n{USAGE}");
            return ExitCode::from(2);
        }
    };
    let started = std::time::Instant::now();
    let result = match command.as_str() {
        "synth" => commands::synth(&config),
        "prepare" => commands::prepare(&config),
        "features" => commands::features(&config),
        "embed" => commands::embed(&config),
        "train" => commands::train(&config),
        "eval" => commands::eval(&config),
        "baseline" => commands::baseline(&config),
        "attend" => commands::attend(&config),
        "sweep" => commands::sweep(&config),
        other => {
            eprintln!("error: unknown command '{other}'\n\n{USAGE}");
            return ExitCode::from(2);
        }
    };
    match result {
        Ok(()) => {
            let _ = commands::write_manifest(&config, &command, started.elapsed());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            let code = match &e {
                Error::Io(_) | Error::Parse { .. } | Error::Validation(_) => e.category_code(),
                _ => e.category_code(),
            };
            ExitCode::from(code as u8)
        }
    }
}
