use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::net::{SocketAddr, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use sidsense::compliance::{verify_log_file, verifying_key_from_hex, AuditError};
use sidsense::paws::{
    admin_request, AdminCommand, GeoLocation, MockWsdb, PawsClient, ServerClock, TcpTransport, WsdbConfig, WsdbServer,
    WsdbState,
};
use sidsense::scenario::{
    emit_report, reference_script, run_scenario_with, ClassifierChoice, ReportFormat, RunOptions, ScenarioError,
    ScenarioScript,
};
use sidsense::sensing::{
    sense_channel, train_default_model, write_verdict_line, ClassifierModel, SignalClassifier, TrainingRecipe, THETA_SENSE,
};
use sidsense::spectrum::{ChannelId, ChannelPlan, SignalClass};
use sidsense::synth::{read_captures, synth_channel, write_capture, LabeledCapture, SynthConfig};

const EXIT_SCRIPT_INVALID: u8 = 2;
const EXIT_AUDIT_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "sidsense", version, about = "TVWS sensing, mock WSDB, compliance gate and outage scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Structured,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl Switch {
    fn on(self) -> bool {
        matches!(self, Switch::On)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario script and print its report.
    RunScenario {
        /// Script file, or `builtin:<name>` for a shipped script.
        script: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Sense with the ground truth instead of the classifier.
        #[arg(long, conflicts_with = "model")]
        oracle: bool,
        /// Use a saved classifier model.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Include wall-clock sensing latency in the report.
        #[arg(long)]
        timing: bool,
        /// Persist the audit log.
        #[arg(long)]
        audit_log: Option<PathBuf>,
        /// Copy the finished audit log here.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Classify every capture in an IQ container file.
    Scan {
        dataset: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = THETA_SENSE)]
        theta: f64,
    },
    /// Write a labelled synthetic IQ container file.
    SynthDataset {
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        per_class: usize,
        #[arg(long, default_value_t = 15.0)]
        snr_db: f64,
        #[arg(long, default_value_t = 16_384)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Train the default classifier and save it.
    Train {
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        per_class: usize,
        #[arg(long, default_value_t = 0x51D5)]
        seed: u64,
    },
    /// Run the mock whitespace database until interrupted.
    ServeWsdb {
        /// WSDB config, or a scenario script whose `[wsdb]` table is used.
        config: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7545")]
        listen: String,
    },
    /// Ask a running database for spectrum.
    Query {
        #[arg(long, default_value = "127.0.0.1:7545")]
        addr: String,
        #[arg(long, default_value_t = 18.4655)]
        lat: f64,
        #[arg(long, default_value_t = -66.1057)]
        lon: f64,
        #[arg(long, default_value_t = 1000)]
        deadline_ms: u64,
    },
    /// Toggle a simulated outage on a running database.
    SetOutage {
        state: Switch,
        #[arg(long, default_value = "127.0.0.1:7545")]
        addr: String,
    },
    /// Inject response latency on a running database.
    SetLatency {
        latency_ms: u64,
        #[arg(long, default_value = "127.0.0.1:7545")]
        addr: String,
    },
    /// Mark a channel available or unavailable on a running database.
    SetAvailability {
        channel: u32,
        state: Switch,
        #[arg(long, default_value = "127.0.0.1:7545")]
        addr: String,
    },
    /// Make a running database answer with an empty ruleset.
    SetNullRuleset {
        state: Switch,
        #[arg(long, default_value = "127.0.0.1:7545")]
        addr: String,
    },
    /// Check an audit log's hash chain and signatures.
    VerifyAudit {
        logfile: PathBuf,
        /// Expected public key (hex); defaults to the key in the file header.
        #[arg(long)]
        public_key: Option<String>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::RunScenario { script, seed, report, format, oracle, model, timing, audit_log, export } => {
            let parsed = match script.strip_prefix("builtin:") {
                Some(name) => reference_script(name),
                None => ScenarioScript::from_file(Path::new(&script)),
            };
            let script = match parsed {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("{e}");
                    return Ok(ExitCode::from(EXIT_SCRIPT_INVALID));
                }
            };
            let classifier = match (oracle, model) {
                (true, _) => ClassifierChoice::Oracle,
                (false, Some(path)) => ClassifierChoice::Model(load_model(&path)?),
                (false, None) => ClassifierChoice::Script,
            };
            let opts = RunOptions { classifier, seed, measure_latency: timing, audit_log, audit_export: export };
            let r = match run_scenario_with(&script, &opts) {
                Ok(r) => r,
                Err(ScenarioError::ScriptInvalid(msg)) => {
                    eprintln!("invalid scenario script: {msg}");
                    return Ok(ExitCode::from(EXIT_SCRIPT_INVALID));
                }
                Err(e) => return Err(e.into()),
            };
            let format = match format {
                Format::Text => ReportFormat::Text,
                Format::Structured => ReportFormat::Structured,
            };
            let doc = emit_report(&r, format);
            match report {
                Some(path) => std::fs::write(&path, doc).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{doc}"),
            }
            if !r.audit_chain_ok {
                eprintln!("audit chain failed verification");
                return Ok(ExitCode::from(EXIT_AUDIT_FAILED));
            }
        }
        Command::Scan { dataset, model, theta } => {
            let model: Arc<dyn SignalClassifier> = match model {
                Some(path) => load_model(&path)?,
                None => {
                    eprintln!("no model given, training the default classifier");
                    Arc::new(train_default_model(&TrainingRecipe::default())?)
                }
            };
            let captures = read_captures(&mut BufReader::new(
                File::open(&dataset).with_context(|| format!("opening {}", dataset.display()))?,
            ))?;
            let stdout = io::stdout();
            let mut out = stdout.lock();
            let (mut labelled, mut correct) = (0usize, 0usize);
            for (i, c) in captures.iter().enumerate() {
                let v = sense_channel(ChannelId(i as u32), &c.buffer, model.as_ref(), theta)?;
                write_verdict_line(&mut out, &v)?;
                if let Some(label) = c.label {
                    labelled += 1;
                    correct += usize::from(label == v.class);
                }
            }
            out.flush()?;
            if labelled > 0 {
                eprintln!("accuracy {:.4} over {labelled} labelled captures", correct as f64 / labelled as f64);
            }
        }
        Command::SynthDataset { out, per_class, snr_db, samples, seed } => {
            let mut w = BufWriter::new(File::create(&out).with_context(|| format!("creating {}", out.display()))?);
            let fs = sidsense::synth::DEFAULT_SAMPLE_RATE_HZ;
            let mut n = 0u64;
            for _ in 0..per_class {
                for class in SignalClass::ALL {
                    let config = SynthConfig::new(class, snr_db, samples as f64 / fs, seed.wrapping_mul(1_000_003) + n);
                    let buffer = synth_channel(&config, fs)?;
                    let snr = (class != SignalClass::Vacant).then_some(snr_db);
                    write_capture(&mut w, &LabeledCapture { buffer, label: Some(class), snr_db: snr })?;
                    n += 1;
                }
            }
            w.flush()?;
            eprintln!("wrote {n} captures to {}", out.display());
        }
        Command::Train { out, per_class, seed } => {
            let recipe = TrainingRecipe { examples_per_class: per_class, seed, ..TrainingRecipe::default() };
            let model = train_default_model(&recipe)?;
            let mut w = BufWriter::new(File::create(&out).with_context(|| format!("creating {}", out.display()))?);
            model.save(&mut w)?;
            w.flush()?;
            eprintln!("saved model to {}", out.display());
        }
        Command::ServeWsdb { config, listen } => {
            let state = load_wsdb_config(&config)?;
            let server = WsdbServer::start(MockWsdb::with_clock(state, ServerClock::Wall), listen.as_str())?;
            println!("mock WSDB listening on {}", server.local_addr());
            loop {
                std::thread::park();
            }
        }
        Command::Query { addr, lat, lon, deadline_ms } => {
            let location = GeoLocation::new(lat, lon)?;
            let mut client =
                PawsClient::new(TcpTransport::new(resolve(&addr)?), "sidsense-cli", 5.0, Duration::from_millis(deadline_ms));
            client.init(location)?;
            let reply = client.query_spectrum(location, &ChannelPlan::tvws_default())?;
            for g in &reply.grants {
                println!(
                    "grant channel {} max_eirp {} dBm until {} ms",
                    g.channel.0,
                    g.max_eirp_dbm,
                    g.expires_at.as_millis()
                );
            }
            for r in &reply.reservations {
                println!("reserved channel {} for {}", r.channel.0, r.incumbent.name());
            }
        }
        Command::SetOutage { state, addr } => admin(&addr, AdminCommand::SetOutage(state.on()))?,
        Command::SetLatency { latency_ms, addr } => {
            admin(&addr, AdminCommand::SetLatency(Duration::from_millis(latency_ms)))?
        }
        Command::SetAvailability { channel, state, addr } => {
            admin(&addr, AdminCommand::SetAvailability { channel: ChannelId(channel), available: state.on() })?
        }
        Command::SetNullRuleset { state, addr } => admin(&addr, AdminCommand::SetNullRuleset(state.on()))?,
        Command::VerifyAudit { logfile, public_key } => {
            let key = match public_key {
                Some(hex) => match verifying_key_from_hex(&hex) {
                    Ok(k) => Some(k),
                    Err(e) => bail!("{e}"),
                },
                None => None,
            };
            match verify_log_file(&logfile, key.as_ref()) {
                Ok(n) => println!("ok: {n} entries verified"),
                Err(AuditError::Io(e)) => bail!("reading {}: {e}", logfile.display()),
                Err(AuditError::Chain(f)) => {
                    println!("FAILED at entry {} (byte offset {}): {}", f.index, f.offset, f.reason);
                    return Ok(ExitCode::from(EXIT_AUDIT_FAILED));
                }
                Err(e) => {
                    println!("FAILED: {e}");
                    return Ok(ExitCode::from(EXIT_AUDIT_FAILED));
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn load_model(path: &Path) -> Result<Arc<dyn SignalClassifier>> {
    let mut r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    Ok(Arc::new(ClassifierModel::load(&mut r)?))
}

fn resolve(addr: &str) -> Result<SocketAddr> {
    addr.to_socket_addrs()?.next().with_context(|| format!("no address for {addr}"))
}

fn admin(addr: &str, command: AdminCommand) -> Result<()> {
    admin_request(resolve(addr)?, command, Duration::from_secs(5))?;
    println!("ok");
    Ok(())
}

/// Accepts either a bare WSDB config or a scenario script's `[wsdb]` table.
fn load_wsdb_config(path: &Path) -> Result<WsdbState> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut table: toml::Table = toml::from_str(&text)?;
    let mut section = match table.remove("wsdb") {
        Some(toml::Value::Table(t)) => t,
        Some(_) => bail!("[wsdb] must be a table"),
        None => table,
    };
    section.remove("deadline_ms");
    let config: WsdbConfig = toml::Value::Table(section).try_into()?;
    WsdbState::try_from(config).map_err(anyhow::Error::msg)
}
