//! `jshare`: plan shared journeys, run experiment batches, generate grids.
//!
//! Exit status is 0 on success, 1 for bad input and 2 when a run breaks one
//! of the engine's own invariants.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use journey_sharing::config::KeyValues;
use journey_sharing::groups::GroupRecord;
use journey_sharing::harness::{
    execute, parse_grid_size, read_requests, run_batch, BatchConfig, PipelineConfig, RunLabel, SyntheticNetworkSpec,
};
use journey_sharing::metrics::{
    mean_cost_improvement, prolongation_shares, read_results_csv, success_rates, validate_rows, write_results_csv,
    ExperimentResult, PROLONGATION_THRESHOLD,
};
use journey_sharing::transit::{
    add_walking_links, build_relaxed_graph, load_network_files, write_network_files, WalkingParams,
};
use journey_sharing::Error;
use log::{info, warn};
use serde_json::json;

#[derive(Parser)]
#[command(name = "jshare", version, about = "Shared public-transport journey planning")]
struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan and timetable shared journeys for a list of requests.
    Plan {
        #[arg(long)]
        stops: PathBuf,
        #[arg(long)]
        timetable: PathBuf,
        /// CSV with columns agent,origin,destination.
        #[arg(long)]
        requests: PathBuf,
        /// key=value settings (walk.*, sched.limit.*, br.max_rounds).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run every experiment of a matrix file and write results.csv.
    Experiment {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; omit for a sequential run.
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Write a synthetic grid network as stops.csv and timetable.csv.
    Synth {
        /// Grid size as WIDTHxHEIGHT.
        #[arg(long)]
        grid: String,
        /// Minutes between runs on each line.
        #[arg(long)]
        headway: u32,
        /// Minutes per hop between neighbouring stops.
        #[arg(long)]
        leg: u32,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5.0)]
        spacing_km: f64,
        #[arg(long, default_value_t = 360)]
        first: u32,
        #[arg(long, default_value_t = 1320)]
        last: u32,
        /// Stagger between lines' first departures, in minutes.
        #[arg(long, default_value_t = 0)]
        offset_step: u32,
        /// Every Nth line closes early (0 disables).
        #[arg(long, default_value_t = 0)]
        limited_every: u32,
        #[arg(long, default_value_t = 600)]
        limited_last: u32,
    },
    /// Re-check the invariants of a results.csv.
    Validate {
        #[arg(long)]
        results: PathBuf,
    },
}

enum Failure {
    Input(anyhow::Error),
    Invariant(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<Error>() {
            Some(Error::Inconsistent(msg)) => Failure::Invariant(msg.clone()),
            _ => Failure::Input(e),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let outcome = match cli.command {
        Command::Plan {
            stops,
            timetable,
            requests,
            config,
            out,
        } => plan(&stops, &timetable, &requests, config.as_deref(), &out),
        Command::Experiment { matrix, out, parallel } => experiment(&matrix, &out, parallel),
        Command::Synth {
            grid,
            headway,
            leg,
            out,
            spacing_km,
            first,
            last,
            offset_step,
            limited_every,
            limited_last,
        } => (|| -> CmdResult {
            let (width, height) = parse_grid_size(&grid)?;
            let spec = SyntheticNetworkSpec {
                width,
                height,
                spacing_km,
                headway,
                leg_minutes: leg,
                first_departure: first,
                last_departure: last,
                offset_step,
                limited_every,
                limited_last_departure: limited_last,
                ..SyntheticNetworkSpec::default()
            };
            synth(&spec, &out)
        })(),
        Command::Validate { results } => validate(&results),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Invariant(msg)) => {
            eprintln!("invariant violated: {msg}");
            ExitCode::from(2)
        }
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

fn plan(stops: &Path, timetable: &Path, requests: &Path, config: Option<&Path>, out: &Path) -> CmdResult {
    let cfg = match config {
        Some(p) => KeyValues::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => KeyValues::default(),
    };
    let network = load_network_files(stops, timetable)?;
    let network = add_walking_links(network, WalkingParams::from_config(&cfg)?);
    let graph = build_relaxed_graph(&network);
    let file = File::open(requests).with_context(|| format!("opening {}", requests.display()))?;
    let requests = read_requests(file, &network)?;
    let pipeline = PipelineConfig::from_config(&cfg)?;
    let exec = execute(&network, &graph, &requests, &pipeline, &RunLabel::default());
    let result = &exec.result;
    if let Some(e) = &result.error {
        return Err(Failure::Input(anyhow::anyhow!("{e}")));
    }

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut plans = BufWriter::new(File::create(out.join("plans.jsonl")).context("creating plans.jsonl")?);
    for p in &exec.initial {
        serde_json::to_writer(&mut plans, &p.to_record(&network)).context("writing plans.jsonl")?;
        writeln!(plans).context("writing plans.jsonl")?;
    }
    plans.flush().context("writing plans.jsonl")?;
    write_json(&out.join("joint.json"), &exec.joint.to_record(&network))?;
    let groups: Vec<_> = exec
        .groups
        .iter()
        .map(|g| {
            let (itineraries, reason) = match &g.schedule {
                Ok(s) => (s.itineraries.values().map(|i| i.to_record(&network)).collect(), None),
                Err(why) => (Vec::new(), Some(why.to_string())),
            };
            json!({
                "group": GroupRecord::new(&g.group, &g.parts, &network),
                "matched": g.schedule.is_ok(),
                "unscheduled_reason": reason,
                "itineraries": itineraries,
            })
        })
        .collect();
    write_json(&out.join("groups.json"), &groups)?;
    write_json(&out.join("result.json"), result)?;

    println!(
        "{} agents, {} unreachable, cost improvement {}",
        requests.len(),
        result.unreachable.len(),
        result.delta_c.map_or("n/a".into(), |d| format!("{:.1} %", d * 100.0))
    );
    for g in &result.groups {
        let status = if g.matched {
            match g.delta_t {
                Some(dt) => format!("timetabled, prolongation {:.1} %", dt * 100.0),
                None => "timetabled".into(),
            }
        } else if g.timed_out {
            "timed out".into()
        } else {
            "no timetable".into()
        };
        let plural = if g.size == 1 { "" } else { "s" };
        println!("group {} ({} agent{plural}): {status}", g.group_id, g.size);
    }
    if !result.violations.is_empty() {
        return Err(Failure::Invariant(result.violations.join("; ")));
    }
    Ok(())
}

fn summary(results: &[ExperimentResult]) -> serde_json::Value {
    let mut cells = Vec::new();
    let mut keys: Vec<(&str, usize)> = results.iter().map(|r| (r.scenario.as_str(), r.n_agents)).collect();
    keys.dedup();
    for (scenario, n) in keys {
        let cell: Vec<&ExperimentResult> = results.iter().filter(|r| r.scenario == scenario && r.n_agents == n).collect();
        let mean = |f: &dyn Fn(&ExperimentResult) -> f64| cell.iter().map(|r| f(r)).sum::<f64>() / cell.len() as f64;
        cells.push(json!({
            "scenario": scenario,
            "n_agents": n,
            "runs": cell.len(),
            "failed_runs": cell.iter().filter(|r| r.error.is_some()).count(),
            "mean_delta_c": mean_cost_improvement(cell.iter().copied()).get(&n),
            "mean_total_ms": mean(&|r| r.timings.total_ms),
            "mean_br_ms": mean(&|r| r.timings.br_ms),
            "mean_timetabling_ms": mean(&|r| r.timings.timetabling_ms),
        }));
    }
    json!({
        "experiments": results.len(),
        "cells": cells,
        "success_rate_by_group_size": success_rates(results),
        "prolongation_threshold": PROLONGATION_THRESHOLD,
        "share_below_threshold_by_group_size": prolongation_shares(results, PROLONGATION_THRESHOLD),
    })
}

fn experiment(matrix: &Path, out: &Path, parallel: Option<usize>) -> CmdResult {
    if parallel == Some(0) {
        return Err(Failure::Input(anyhow::anyhow!("--parallel needs at least one thread")));
    }
    let config = BatchConfig::load_matrix(matrix).with_context(|| format!("reading matrix {}", matrix.display()))?;
    info!("{} experiments", config.experiment_count());
    let results = run_batch(&config, parallel)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let csv_path = out.join("results.csv");
    write_results_csv(&results, BufWriter::new(File::create(&csv_path).context("creating results.csv")?))?;
    write_json(&out.join("summary.json"), &summary(&results))?;

    let failed = results.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        warn!("{failed} experiments failed; see the log and their empty result rows");
    }
    println!("{} experiments written to {}", results.len(), csv_path.display());
    let broken: Vec<String> = results
        .iter()
        .filter(|r| !r.violations.is_empty())
        .map(|r| format!("{} n={} {} seed {}: {}", r.scenario, r.n_agents, r.direction, r.seed, r.violations.join("; ")))
        .collect();
    if !broken.is_empty() {
        return Err(Failure::Invariant(broken.join("\n")));
    }
    Ok(())
}

fn synth(spec: &SyntheticNetworkSpec, out: &Path) -> CmdResult {
    let network = journey_sharing::harness::generate_synthetic_network(spec)?;
    write_network_files(&network, out)?;
    println!(
        "{} stops, {} runs, {} connections written to {}",
        network.stop_count(),
        network.runs().count(),
        network.connections().len(),
        out.display()
    );
    Ok(())
}

fn validate(path: &Path) -> CmdResult {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let rows = read_results_csv(file)?;
    let problems = validate_rows(&rows);
    if problems.is_empty() {
        println!("{}: {} rows, all invariants hold", path.display(), rows.len());
        return Ok(());
    }
    for p in &problems {
        println!("{p}");
    }
    Err(Failure::Invariant(format!("{} problems in {}", problems.len(), path.display())))
}

