//! `steam` command-line entry point.

use std::collections::HashMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};

use steam_core::bench::{read_log, summarize, CpuScope};
use steam_core::ingest::InputSpec;
use steam_core::pipeline::{load_config_with, BenchSpec, Pipeline, PipelineError};
use steam_core::sim::{generate, replay, send, HttpSink, ScenarioSpec, SimSink};
use steam_core::ConfigError;

const EXIT_STARTUP: u8 = 1;
const EXIT_INVALID: u8 = 2;

#[derive(Parser)]
#[command(name = "steam", version, about = "Sliding-window stream processing for sensor data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a pipeline until its input ends or it is stopped.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Write per-packet metrics to this TSV log.
        #[arg(long)]
        bench: Option<PathBuf>,
        /// Stop after this many seconds.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, value_name = "system|process")]
        cpu_scope: Option<CpuScope>,
        /// Replay this file instead of the configured input.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Packets per second for --input; unthrottled when absent.
        #[arg(long, requires = "input")]
        rate: Option<f64>,
        /// Config variable, as NAME=VALUE; repeatable.
        #[arg(long = "set", value_name = "NAME=VALUE", value_parser = parse_var)]
        vars: Vec<(String, String)>,
    },
    /// Check a config and report every problem found.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "NAME=VALUE", value_parser = parse_var)]
        vars: Vec<(String, String)>,
    },
    /// Summarize a benchmark log.
    BenchReport {
        #[arg(long)]
        log: PathBuf,
    },
    /// Generate a scenario and stream it.
    Sim {
        #[arg(long)]
        scenario: PathBuf,
        /// tcp:host:port or file:path
        #[arg(long)]
        sink: SimSink,
        /// Write the ground-truth event list here.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Replay a frame file verbatim.
    Replay {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        sink: SimSink,
        #[arg(long)]
        rate: Option<f64>,
    },
    /// Accept HTTP POSTs and log their bodies until interrupted.
    Sink {
        #[arg(long)]
        port: u16,
        #[arg(long)]
        log: PathBuf,
    },
}

fn parse_var(s: &str) -> Result<(String, String), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.to_owned(), v.to_owned())),
        _ => Err(format!("expected NAME=VALUE, got {s:?}")),
    }
}

fn install_stop_handler() -> Arc<AtomicBool> {
    let stop = Arc::new(AtomicBool::new(false));
    for signal in [libc::SIGINT, libc::SIGTERM] {
        let flag = Arc::clone(&stop);
        // SAFETY: the handler only stores to an atomic, which is async-signal-safe.
        let registered = unsafe { signal_hook_registry::register(signal, move || flag.store(true, Ordering::SeqCst)) };
        if let Err(e) = registered {
            log::warn!("cannot install handler for signal {signal}: {e}");
        }
    }
    stop
}

fn report_config(e: &ConfigError) -> ExitCode {
    eprintln!("{e}");
    ExitCode::from(EXIT_INVALID)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run {
            config,
            bench,
            duration,
            cpu_scope,
            input,
            rate,
            vars,
        } => {
            let vars: HashMap<String, String> = vars.into_iter().collect();
            let mut config = match load_config_with(&config, &vars) {
                Ok(c) => c,
                Err(e) => return report_config(&e),
            };
            if let Some(path) = input {
                config.input = InputSpec::File { path, rate };
            }
            if let Some(log) = bench {
                config.bench = Some(BenchSpec {
                    log,
                    cpu_scope: cpu_scope.unwrap_or_default(),
                });
            } else if let (Some(scope), Some(b)) = (cpu_scope, config.bench.as_mut()) {
                b.cpu_scope = scope;
            }
            let duration = match duration {
                Some(d) if !(d > 0.0 && d.is_finite()) => {
                    eprintln!("--duration must be a positive number of seconds");
                    return ExitCode::from(EXIT_INVALID);
                }
                d => d.map(Duration::from_secs_f64),
            };
            let stop = install_stop_handler();
            let result = Pipeline::build(&config).and_then(|p| p.run(stop, duration));
            match result {
                Ok(summary) => {
                    println!("{summary}");
                    ExitCode::SUCCESS
                }
                Err(PipelineError::Config(e)) => report_config(&e),
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_STARTUP)
                }
            }
        }
        Command::Validate { config, vars } => {
            let vars: HashMap<String, String> = vars.into_iter().collect();
            match load_config_with(&config, &vars) {
                Ok(c) => {
                    println!(
                        "{}: ok ({} columns, {} functions, {} endpoints)",
                        config.display(),
                        c.parser.columns.len(),
                        c.functions.len(),
                        c.endpoints.len()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => report_config(&e),
            }
        }
        Command::BenchReport { log } => match read_log(&log).map_err(|e| e.to_string()).and_then(|l| {
            summarize(&l).map_err(|e| format!("{}: {e}", log.display()))
        }) {
            Ok(summary) => {
                print!("{summary}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_STARTUP)
            }
        },
        Command::Sim { scenario, sink, truth } => {
            let spec = match ScenarioSpec::load(&scenario) {
                Ok(s) => s,
                Err(e) => return report_config(&e),
            };
            let generated = generate(&spec);
            if let Some(path) = truth {
                if let Err(e) = generated.write_truth(&path) {
                    eprintln!("error: {}: {e}", path.display());
                    return ExitCode::from(EXIT_STARTUP);
                }
            }
            let lines = generated.lines.iter().map(|l| format!("{l}\n"));
            match send(lines, spec.rate, &sink) {
                Ok(s) => {
                    println!("sent {} frames, {} bytes", s.lines, s.bytes);
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_STARTUP)
                }
            }
        }
        Command::Replay { file, sink, rate } => match replay(&file, rate, &sink) {
            Ok(s) => {
                println!("sent {} frames, {} bytes", s.lines, s.bytes);
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {}: {e}", file.display());
                ExitCode::from(EXIT_STARTUP)
            }
        },
        Command::Sink { port, log } => {
            let sink = match HttpSink::bind_with_log(port, &log) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: cannot listen on port {port}: {e}");
                    return ExitCode::from(EXIT_STARTUP);
                }
            };
            eprintln!("listening on {}", sink.addr());
            let stop = install_stop_handler();
            while !stop.load(Ordering::SeqCst) {
                std::thread::sleep(Duration::from_millis(100));
            }
            let (bodies, bytes, connections) = (sink.body_count(), sink.total_bytes(), sink.connections());
            if let Err(e) = sink.shutdown() {
                eprintln!("error: {}: {e}", log.display());
                return ExitCode::from(EXIT_STARTUP);
            }
            println!("received {bodies} bodies, {bytes} bytes over {connections} connections");
            ExitCode::SUCCESS
        }
    }
}
