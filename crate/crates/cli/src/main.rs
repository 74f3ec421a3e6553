//! `spotlight`: serve sessions, simulate audiences, record and replay traces.

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::warn;

use spotlight_core::trace::{decision_log, read_trace, replay_engine, write_trace};
use spotlight_core::wire::parse_weights_doc;
use spotlight_core::{GestureTracker, Policy, SessionConfig};
use spotlight_server::{stream_in_process, LiveOutcome, Server, ServerConfig, Speed};
use spotlight_sim::report::render_table;
use spotlight_sim::{gen_frames, PreparedScenario, ReportDoc, ScenarioSpec, SessionReport};

#[derive(Debug, Parser)]
#[command(name = "spotlight", version, about = "Audience spotlight server and simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the WebSocket session server.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[command(flatten)]
        session: SessionArgs,
        /// Write a trace of each session when it ends (the last one wins).
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Run a scenario through the engine and report spotlight coverage.
    Simulate {
        #[arg(long, value_name = "FILE")]
        scenario: PathBuf,
        #[command(flatten)]
        session: SessionArgs,
        /// Compare over N consecutive seeds starting at --seed.
        #[arg(long, value_name = "N", conflicts_with = "live")]
        seeds: Option<usize>,
        /// Also run these policies and report them side by side.
        #[arg(long = "compare", value_name = "POLICY", value_parser = parse_policy, conflicts_with = "live")]
        compare: Vec<Policy>,
        /// Drive an in-process server over the wire protocol instead of the engine.
        #[arg(long)]
        live: bool,
        #[arg(long, value_parser = parse_speed, requires = "live")]
        speed: Option<Speed>,
        /// Report document (JSON).
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Replay a trace and print the decision log.
    Replay {
        trace: PathBuf,
        #[command(flatten)]
        session: SessionArgs,
        #[arg(long)]
        live: bool,
        #[arg(long, value_parser = parse_speed, requires = "live")]
        speed: Option<Speed>,
        /// Decision log file instead of standard output.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Generate a scenario's frames and write them as a trace.
    GenTrace {
        #[arg(long, value_name = "FILE")]
        scenario: PathBuf,
        #[command(flatten)]
        session: SessionArgs,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Print a report document as a table.
    Report { report: PathBuf },
}

/// Session settings shared by every subcommand that runs the engine.
#[derive(Debug, Args)]
struct SessionArgs {
    /// Window length [default: 15000, or the trace's own setting].
    #[arg(long, value_name = "MS")]
    window_ms: Option<u64>,
    #[arg(long, value_parser = parse_policy)]
    policy: Option<Policy>,
    #[arg(long)]
    seed: Option<u64>,
    /// Weight profile document: {"happiness": 0.4, ...}.
    #[arg(long, value_name = "FILE")]
    weights: Option<PathBuf>,
}

fn parse_policy(s: &str) -> Result<Policy, String> {
    s.parse()
}

fn parse_speed(s: &str) -> Result<Speed, String> {
    s.parse().map_err(|e: spotlight_server::ServerError| e.to_string())
}

impl SessionArgs {
    /// Applies the flags over `base`; the weights file is read here.
    fn resolve(&self, mut base: SessionConfig) -> Result<SessionConfig> {
        if let Some(w) = self.window_ms {
            base.window_ms = w;
        }
        if let Some(p) = self.policy {
            base.policy = p;
        }
        if let Some(s) = self.seed {
            base.seed = s;
        }
        if let Some(path) = &self.weights {
            let validated = parse_weights_doc(&read(path)?).with_context(|| format!("{}", path.display()))?;
            for v in &validated.violations {
                warn!("weights {}: {v}", path.display());
            }
            base.profile = validated.profile;
        }
        base.validate()?;
        Ok(base)
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn banner(command: &str, config: &SessionConfig) {
    eprintln!(
        "spotlight {command}: seed={} policy={} window_ms={}",
        config.seed, config.policy, config.window_ms
    );
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Runtime::new()?)
}

fn load_scenario(path: &Path) -> Result<ScenarioSpec> {
    let scenario = ScenarioSpec::parse(&read(path)?).with_context(|| format!("{}", path.display()))?;
    Ok(scenario)
}

fn live_summary(out: &LiveOutcome) {
    eprintln!(
        "live: {} frames sent, {} rejected, {} decisions in {:.3} s",
        out.frames_sent,
        out.frame_errors,
        out.decisions.len(),
        out.elapsed.as_secs_f64()
    );
}

fn serve(port: u16, session: &SessionArgs, out: Option<PathBuf>) -> Result<()> {
    let config = session.resolve(SessionConfig::new("presenter"))?;
    banner("serve", &config);
    let mut server_config = ServerConfig::new(config);
    if let Some(path) = out {
        server_config.record_frames = true;
        server_config.on_end = Some(Arc::new(move |record| {
            let Some(frames) = record.frames else { return };
            let result = fs::File::create(&path)
                .map_err(Into::into)
                .and_then(|f| write_trace(&frames, &record.session, &record.config, std::io::BufWriter::new(f)));
            match result {
                Ok(()) => eprintln!("session {}: trace written to {}", record.session, path.display()),
                Err(e) => eprintln!("session {}: cannot write trace: {e}", record.session),
            }
        }));
    }
    runtime()?.block_on(async move {
        let server = Server::bind(("127.0.0.1", port), server_config)
            .await
            .with_context(|| format!("cannot listen on 127.0.0.1:{port}"))?;
        println!("listening on ws://{}", server.local_addr()?);
        server.run().await?;
        Ok(())
    })
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    scenario_path: &Path,
    session: &SessionArgs,
    seeds: Option<usize>,
    compare: &[Policy],
    live: bool,
    speed: Option<Speed>,
    out: Option<&Path>,
) -> Result<()> {
    let scenario = load_scenario(scenario_path)?;
    let config = session.resolve(SessionConfig::new(scenario.presenter.clone()))?;
    banner("simulate", &config);
    let doc = if live {
        let frames = gen_frames(&scenario);
        let speed = speed.unwrap_or(Speed::Max);
        let outcome = runtime()?.block_on(stream_in_process("simulation", &config, &frames, speed))?;
        live_summary(&outcome);
        ReportDoc::SessionReport(SessionReport::from_decisions(
            config.policy,
            config.seed,
            scenario.audience.iter().map(|m| m.id.as_str()),
            &outcome.decisions,
        ))
    } else {
        let prepared = PreparedScenario::new(&scenario)?;
        if seeds.is_none() && compare.is_empty() {
            ReportDoc::SessionReport(prepared.run(&config)?)
        } else {
            let mut policies = vec![config.policy];
            policies.extend(compare.iter().copied().filter(|p| *p != config.policy));
            ReportDoc::ComparisonReport(prepared.compare(&config, &policies, seeds.unwrap_or(1))?)
        }
    };
    if let Some(path) = out {
        write(path, &doc.to_json())?;
    }
    print!("{}", render_table(&doc));
    Ok(())
}

fn replay(path: &Path, session: &SessionArgs, live: bool, speed: Option<Speed>, out: Option<&Path>) -> Result<()> {
    let file = fs::File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut trace = read_trace(BufReader::new(file)).with_context(|| format!("{}", path.display()))?;
    trace.config = session.resolve(trace.config)?;
    banner("replay", &trace.config);
    let decisions = if live {
        let speed = speed.unwrap_or(Speed::Max);
        let outcome = runtime()?.block_on(stream_in_process(&trace.session, &trace.config, &trace.frames, speed))?;
        live_summary(&outcome);
        outcome.decisions
    } else {
        replay_engine(&trace, &mut GestureTracker::shipped())?
    };
    let log = decision_log(&decisions);
    match out {
        Some(p) => write(p, &log),
        None => {
            std::io::stdout().write_all(log.as_bytes())?;
            Ok(())
        }
    }
}

fn gen_trace(scenario_path: &Path, session: &SessionArgs, out: &Path) -> Result<()> {
    let scenario = load_scenario(scenario_path)?;
    let config = session.resolve(SessionConfig::new(scenario.presenter.clone()))?;
    banner("gen-trace", &config);
    let frames = gen_frames(&scenario);
    let session_id = scenario_path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
    let mut buf = Vec::new();
    write_trace(&frames, session_id, &config, &mut buf)?;
    fs::write(out, buf).with_context(|| format!("cannot write {}", out.display()))?;
    eprintln!("{} frames written to {}", frames.len(), out.display());
    Ok(())
}

fn report(path: &Path) -> Result<()> {
    let doc = ReportDoc::parse(&read(path)?).with_context(|| format!("malformed report {}", path.display()))?;
    print!("{}", render_table(&doc));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Serve { port, session, out } => serve(port, &session, out),
        Command::Simulate { scenario, session, seeds, compare, live, speed, out } => {
            if seeds == Some(0) {
                bail!("--seeds must be at least 1");
            }
            simulate(&scenario, &session, seeds, &compare, live, speed, out.as_deref())
        }
        Command::Replay { trace, session, live, speed, out } => replay(&trace, &session, live, speed, out.as_deref()),
        Command::GenTrace { scenario, session, out } => gen_trace(&scenario, &session, &out),
        Command::Report { report: path } => report(&path),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            // clap's message up to the usage block, folded onto one line
            let text = e.to_string();
            let head = text.split("\n\n").next().unwrap_or_default();
            eprintln!("{}", head.lines().map(str::trim).collect::<Vec<_>>().join(" "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spotlight: {e:#}");
            ExitCode::FAILURE
        }
    }
}
