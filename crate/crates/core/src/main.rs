use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use scenetone::audio::encode_wav;
use scenetone::caption::CaptureFrame;
use scenetone::config::{ApiKeys, Config, MockLatencies};
use scenetone::device::{parse_line, simulate_firmware, Button, Line, RawEdge, SimInput};
use scenetone::prompt::InstrumentSelection;
use scenetone::service::{serve_device, Service};
use scenetone::session::{prompt_tables, replay, Backends, Control, EventLog, LatencyReport, Orchestrator, Simulation};

#[derive(Parser)]
#[command(name = "scenetone", version, about = "Image-steered loop composition engine")]
struct Cli {
    /// TOML config file; SCENETONE_* environment variables override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Serve the HTTP API and, optionally, a controller link.
    Run {
        #[arg(long)]
        bind: Option<String>,
        /// Address for controller connections speaking the line protocol.
        #[arg(long)]
        device: Option<String>,
    },
    /// Run a scripted session headlessly in virtual time.
    Compose {
        #[arg(long, num_args = 1.., required = true)]
        images: Vec<PathBuf>,
        #[arg(long, default_value = "keys")]
        instruments: String,
        /// Seconds between captures.
        #[arg(long, default_value_t = 10.0)]
        interval: f64,
        #[arg(long, short, default_value = "session.wav")]
        out: PathBuf,
        /// Write the session event log (JSON lines).
        #[arg(long)]
        log: Option<PathBuf>,
        /// Write the latency and cost report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        zero_latency: bool,
        #[arg(long)]
        auto_mix: bool,
        /// Request mastering after the last capture.
        #[arg(long)]
        master: bool,
    },
    /// Replay a session log and write its rendered WAV.
    Render {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Run the controller firmware model over a script (file or stdin).
    ///
    /// Script lines: `R <button> <0|1> <ms>` raw contact level, `H <ms> <D line>`
    /// host display line. Blank lines and `#` comments are skipped.
    SimulateDevice { script: Option<PathBuf> },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

type AnyError = Box<dyn std::error::Error>;

fn run(cli: Cli) -> Result<(), AnyError> {
    let mut config = Config::load(cli.config.as_deref())?;
    match cli.command {
        Cmd::Run { bind, device } => {
            if let Some(b) = bind {
                config.bind = b;
            }
            serve(config, device)
        }
        Cmd::Compose {
            images,
            instruments,
            interval,
            out,
            log,
            report,
            zero_latency,
            auto_mix,
            master,
        } => {
            if zero_latency {
                config.latencies = MockLatencies::zero();
            }
            config.auto_mix |= auto_mix;
            let selection = InstrumentSelection::parse_list(&instruments)?;
            compose(config, &images, selection, interval, master, &out, log.as_deref(), report.as_deref())
        }
        Cmd::Render { log, out } => {
            let text = std::fs::read_to_string(&log)?;
            let sim = replay(&EventLog::from_jsonl(&text)?)?;
            write_render(sim.orchestrator(), &out)
        }
        Cmd::SimulateDevice { script } => {
            let text = match script {
                Some(p) => std::fs::read_to_string(p)?,
                None => std::io::read_to_string(std::io::stdin())?,
            };
            let inputs = parse_script(&text)?;
            let run = simulate_firmware(&inputs);
            let mut stdout = std::io::stdout().lock();
            for line in &run.wire {
                stdout.write_all(line.as_bytes())?;
            }
            Ok(())
        }
    }
}

fn serve(config: Config, device: Option<String>) -> Result<(), AnyError> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let backends = Backends::from_config(&config, &ApiKeys::from_env())?;
        let tables = prompt_tables(&config)?;
        let bind = config.bind.clone();
        let svc = Service::new(config, tables, backends);
        if let Some(addr) = device {
            let listener = tokio::net::TcpListener::bind(&addr).await?;
            log::info!("controller link on {addr}");
            tokio::spawn(serve_device(listener, svc.handle.clone()));
        }
        let listener = tokio::net::TcpListener::bind(&bind).await?;
        log::info!("listening on http://{bind}");
        axum::serve(listener, svc.router.clone())
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

#[allow(clippy::too_many_arguments)]
fn compose(
    config: Config,
    images: &[PathBuf],
    selection: InstrumentSelection,
    interval: f64,
    master: bool,
    out: &Path,
    log_path: Option<&Path>,
    report_path: Option<&Path>,
) -> Result<(), AnyError> {
    let backends = Backends::from_config(&config, &ApiKeys::from_env())?;
    let tables = prompt_tables(&config)?;
    let orch = Orchestrator::new("compose", config, tables);
    let mut sim = Simulation::new(orch, backends);
    let step = (interval.max(0.0) * 1e6) as u64;
    for (i, path) in images.iter().enumerate() {
        let frame = CaptureFrame::from_jpeg(std::fs::read(path)?, 0)
            .map_err(|e| format!("{}: {e}", path.display()))?;
        sim.schedule_capture(i as u64 * step, frame, selection.clone());
    }
    sim.run();
    if master {
        sim.schedule_control(sim.now_us(), Control::Master);
        sim.run();
    }
    for (at, e) in sim.rejected() {
        log::warn!("at {:.3} s: {e}", *at as f64 / 1e6);
    }
    let orch = sim.orchestrator();
    if let Some(p) = log_path {
        std::fs::write(p, orch.event_log().to_jsonl())?;
    }
    write_render(orch, out)?;
    let report = LatencyReport::from_session(orch)?;
    for s in &report.sections {
        println!(
            "section {}: caption {:.2} s, generation {:.2} s, wait {:.2} s, host {:.3} s, capture to loop {:.2} s",
            s.section, s.caption_s, s.generation_s, s.schedule_s, s.processing_s, s.end_to_end_s
        );
    }
    println!(
        "capture to loop: min {:.2} s, mean {:.2} s, max {:.2} s; cost {:.3} units",
        report.end_to_end.min_s, report.end_to_end.mean_s, report.end_to_end.max_s, report.costs.total
    );
    if report.failed_captures > 0 {
        println!("{} capture(s) failed", report.failed_captures);
    }
    if let Some(p) = report_path {
        std::fs::write(p, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

fn write_render(orch: &Orchestrator, out: &Path) -> Result<(), AnyError> {
    let audio = orch.render().ok_or("session has no sections")?;
    let wav = encode_wav(&audio);
    std::fs::write(out, &wav)?;
    println!(
        "wrote {} ({:.3} s, sha256 {})",
        out.display(),
        audio.len() as f64 / f64::from(audio.sample_rate()),
        hex::encode(Sha256::digest(&wav))
    );
    Ok(())
}

fn parse_script(text: &str) -> Result<Vec<SimInput>, AnyError> {
    let mut inputs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || format!("line {}: cannot read {raw:?}", n + 1);
        let mut f = line.splitn(3, ' ');
        match (f.next(), f.next(), f.next()) {
            (Some("R"), Some(button), Some(rest)) => {
                let (level, at) = rest.split_once(' ').ok_or_else(bad)?;
                let button = button.parse().ok().and_then(Button::from_index).ok_or_else(bad)?;
                let pressed = match level {
                    "1" => true,
                    "0" => false,
                    _ => return Err(bad().into()),
                };
                let at = at.parse().map_err(|_| bad())?;
                inputs.push(SimInput::Raw(RawEdge { button, pressed, at }));
            }
            (Some("H"), Some(at), Some(d)) => {
                let Line::Display(state) = parse_line(d)? else {
                    return Err(bad().into());
                };
                let at = at.parse().map_err(|_| bad())?;
                inputs.push(SimInput::Host { at, state });
            }
            _ => return Err(bad().into()),
        }
    }
    inputs.sort_by_key(SimInput::at);
    Ok(inputs)
}
