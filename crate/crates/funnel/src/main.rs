use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use funnel::config::Config;
use funnel::loadsim::{self, LoadSimOptions};
use funnel::metrics::Metrics;
use funnel::replay;
use funnel::server::{self, StartError};

#[derive(Parser)]
#[command(name = "funnel", version, about = "Co-host mediated VR streaming server")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the server until interrupted.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `listen_address`.
        #[arg(long)]
        listen: Option<String>,
        /// Write JSON-lines metrics here.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Simulate spectators against a server (an embedded one unless --url).
    Loadsim {
        #[arg(short = 'n', long = "spectators", value_parser = clap::value_parser!(u32).range(1..))]
        spectators: u32,
        /// Playback seconds per spectator.
        #[arg(short = 't', long = "duration", default_value_t = 60.0)]
        duration: f64,
        #[arg(long)]
        url: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Segments behind the live edge; defaults to the server setting.
        #[arg(long)]
        offset: Option<u64>,
        #[arg(long, default_value = "half")]
        rung: String,
        #[arg(long, default_value_t = 500)]
        poll_ms: u64,
        /// Also join as co-host and time command round trips.
        #[arg(long)]
        cohost_probe: bool,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Replay a recorded session log and print the final state digest.
    Replay {
        log: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn fail(code: u8, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("funnel: {message}");
    ExitCode::from(code)
}

fn open_metrics(path: Option<&PathBuf>) -> Result<Metrics, String> {
    match path {
        Some(p) => Metrics::to_file(p).map_err(|e| format!("cannot open metrics file {}: {e}", p.display())),
        None => Ok(Metrics::disabled()),
    }
}

fn start_error(e: StartError) -> ExitCode {
    match e {
        StartError::Input(_) => fail(2, e),
        _ => fail(1, e),
    }
}

fn write_out(path: Option<&PathBuf>, text: &str) -> Result<(), String> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| format!("cannot write {}: {e}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = signal(SignalKind::terminate()).expect("install SIGTERM handler");
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    let _ = tokio::signal::ctrl_c().await;
}

async fn serve(config: Option<PathBuf>, listen: Option<String>, metrics: Option<PathBuf>) -> ExitCode {
    let mut cfg = match Config::load(config.as_deref()) {
        Ok(c) => c,
        Err(e) => return fail(2, e),
    };
    if let Some(l) = listen {
        cfg.listen_address = l;
    }
    let metrics = match open_metrics(metrics.as_ref()) {
        Ok(m) => m,
        Err(e) => return fail(2, e),
    };
    let running = match server::start(cfg, metrics).await {
        Ok(r) => r,
        Err(e) => return start_error(e),
    };
    eprintln!("funnel: serving on {} (spectators: {}/watch)", running.url(), running.url());
    shutdown_signal().await;
    eprintln!("funnel: shutting down");
    match running.shutdown().await {
        Ok(Some(path)) => {
            eprintln!("funnel: chat ledger written to {}", path.display());
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => fail(1, e),
    }
}

#[allow(clippy::too_many_arguments)]
async fn run_loadsim(
    spectators: u32,
    duration: f64,
    url: Option<String>,
    config: Option<PathBuf>,
    offset: Option<u64>,
    rung: String,
    poll_ms: u64,
    cohost_probe: bool,
    report: Option<PathBuf>,
    metrics: Option<PathBuf>,
) -> ExitCode {
    if !(duration > 0.0 && duration.is_finite()) {
        return fail(2, "duration must be positive");
    }
    let mut embedded = None;
    let base_url = match url {
        Some(u) => u,
        None => {
            let mut cfg = match Config::load(config.as_deref()) {
                Ok(c) => c,
                Err(e) => return fail(2, e),
            };
            cfg.listen_address = "127.0.0.1:0".into();
            let metrics = match open_metrics(metrics.as_ref()) {
                Ok(m) => m,
                Err(e) => return fail(2, e),
            };
            let running = match server::start(cfg, metrics).await {
                Ok(r) => r,
                Err(e) => return start_error(e),
            };
            let u = running.url();
            embedded = Some(running);
            u
        }
    };
    let mut opts = LoadSimOptions::new(&base_url, spectators as usize, duration);
    opts.live_edge_offset = offset;
    opts.rung = rung;
    opts.poll_interval_ms = poll_ms;
    opts.cohost_probe = cohost_probe;
    let result = loadsim::run(opts).await;
    if let Some(r) = embedded {
        let _ = r.shutdown().await;
    }
    let rep = match result {
        Ok(r) => r,
        Err(e) => return fail(1, e),
    };
    let s = &rep.summary;
    eprintln!(
        "funnel: {} spectators x {} segments, stalls {}, identical hashes {}, latency median {:.2} s [{:.2}, {:.2}]",
        rep.spectators, rep.segments_per_spectator, s.stalls_total, s.identical_hash_sets, s.latency_s.median, s.latency_s.min, s.latency_s.max
    );
    if let Some(p) = &rep.cohost_probe {
        eprintln!("funnel: co-host rtt median {:.1} ms, max {:.1} ms over {} commands", p.rtt_ms.median, p.rtt_ms.max, p.samples);
    }
    match write_out(report.as_ref(), &serde_json::to_string_pretty(&rep).expect("report serializes")) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(1, e),
    }
}

fn run_replay(log: PathBuf, config: Option<PathBuf>, report: Option<PathBuf>) -> ExitCode {
    let cfg = match Config::load(config.as_deref()) {
        Ok(c) => c,
        Err(e) => return fail(2, e),
    };
    let rep = match replay::replay_file(&cfg, &log) {
        Ok(r) => r,
        Err(e) => return fail(2, e),
    };
    match write_out(report.as_ref(), &replay::report_json(&rep).to_string()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(1, e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let rt = tokio::runtime::Runtime::new().expect("tokio runtime");
    match cli.command {
        Command::Serve { config, listen, metrics } => rt.block_on(serve(config, listen, metrics)),
        Command::Loadsim { spectators, duration, url, config, offset, rung, poll_ms, cohost_probe, report, metrics } => {
            rt.block_on(run_loadsim(spectators, duration, url, config, offset, rung, poll_ms, cohost_probe, report, metrics))
        }
        Command::Replay { log, config, report } => run_replay(log, config, report),
    }
}
