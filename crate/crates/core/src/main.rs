use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};

use equimetrics::analyze::{analyze, AnalyzeConfig};
use equimetrics::har::{self, checkpoint, HarConfig};
use equimetrics::sim::protocol::{protocol_script, Horse};
use equimetrics::sim::{simulate_session, Script};
use equimetrics::types::HoofKind;
use equimetrics::wire::net::{replay, Listener, ReplayRate, DEFAULT_PORT};
use equimetrics::wire::session::{load_session, save_session, Session};
use equimetrics::wire::IngestConfig;
use equimetrics::{Error, ErrorClass, Result};

const CHECKPOINT_FILE: &str = "model.eqmc";
const LOSS_FILE: &str = "loss_curve.csv";
const CONFUSION_FILE: &str = "confusion.csv";
const EVAL_FILE: &str = "eval_report.txt";

#[derive(Parser)]
#[command(name = "equimetrics", version, about = "Equestrian IMU recording, analysis and activity recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolHorse {
    A,
    B,
    C,
}

impl From<ProtocolHorse> for Horse {
    fn from(h: ProtocolHorse) -> Horse {
        match h {
            ProtocolHorse::A => Horse::A,
            ProtocolHorse::B => Horse::B,
            ProtocolHorse::C => Horse::C,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a ride from a script and write it as a session directory.
    Simulate {
        /// JSON script (a list of steps, or {"steps": [...], "config": {...}}).
        #[arg(long, required_unless_present = "protocol", conflicts_with = "protocol")]
        script: Option<PathBuf>,
        /// Generate a randomized dressage protocol ride for one of the built-in horses.
        #[arg(long, value_enum)]
        protocol: Option<ProtocolHorse>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Record UDP sensor traffic into a session directory.
    Listen {
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "0.0.0.0")]
        bind: String,
        #[arg(long)]
        out: PathBuf,
        /// Recording length, seconds.
        #[arg(long)]
        duration: f64,
    },
    /// Send a recorded session as UDP packets.
    Replay {
        #[arg(long)]
        session: PathBuf,
        /// HOST:PORT
        #[arg(long)]
        target: String,
        /// Speed-up factor relative to real time, or "max".
        #[arg(long, default_value = "1")]
        rate: ReplayRate,
    },
    /// Detect hoof events and compute rider motion outputs.
    Analyze {
        #[arg(long)]
        session: PathBuf,
        /// JSON overrides for the analysis thresholds.
        #[arg(long)]
        thresholds: Option<PathBuf>,
        /// Output directory (default: <session>/analysis).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train an activity classifier on annotated sessions.
    Train {
        #[arg(long, num_args = 1.., required = true)]
        sessions: Vec<PathBuf>,
        #[arg(long)]
        track: String,
        /// JSON with "windows", "model" and "train" sections.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Overrides the epoch count from the config.
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value = "model")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on annotated sessions.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        sessions: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EQUI_LOG", "info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Usage => 2,
                ErrorClass::Io => 3,
                ErrorClass::Data => 4,
            })
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate {
            script,
            protocol,
            seed,
            out,
        } => {
            let script = match (script, protocol) {
                (Some(path), _) => Script::load(&path)?,
                (None, Some(h)) => protocol_script(h.into(), seed),
                (None, None) => unreachable!("clap requires one of --script/--protocol"),
            };
            cmd_simulate(&script, seed, &out)
        }
        Command::Listen {
            port,
            bind,
            out,
            duration,
        } => cmd_listen(&bind, port, &out, duration),
        Command::Replay { session, target, rate } => {
            let s = load_session(&session)?;
            let stats = replay(&s, target.as_str(), rate)?;
            println!("sent {} packets ({} bytes) to {target}", stats.packets, stats.bytes);
            Ok(())
        }
        Command::Analyze {
            session,
            thresholds,
            out,
        } => {
            let cfg = match thresholds {
                Some(p) => AnalyzeConfig::from_json(&read(&p)?)?,
                None => AnalyzeConfig::default(),
            };
            let s = load_session(&session)?;
            let a = analyze(&s, &cfg)?;
            let dir = out.unwrap_or_else(|| session.join("analysis"));
            for p in a.write(&dir)? {
                info!("wrote {}", p.display());
            }
            print!("{}", a.summary());
            Ok(())
        }
        Command::Train {
            sessions,
            track,
            config,
            seed,
            epochs,
            out,
        } => {
            let mut cfg = match config {
                Some(p) => HarConfig::from_json(&read(&p)?)?,
                None => HarConfig::default(),
            };
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            cmd_train(&load_all(&sessions)?, &track, &cfg, seed, &out)
        }
        Command::Eval {
            checkpoint: path,
            sessions,
            out,
        } => {
            let model = checkpoint::load(&path)?;
            let raw = model.session_windows(&load_all(&sessions)?)?;
            let report = model.evaluate(&raw)?;
            print!("{}", report.to_text());
            if let Some(dir) = out {
                create_dir(&dir)?;
                write(&dir.join(EVAL_FILE), &report.to_text())?;
                report.write_confusion_csv(&dir.join(CONFUSION_FILE))?;
            }
            Ok(())
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn load_all(dirs: &[PathBuf]) -> Result<Vec<Session>> {
    dirs.iter().map(load_session).collect()
}

fn cmd_simulate(script: &Script, seed: u64, out: &Path) -> Result<()> {
    let sim = simulate_session(script, seed)?;
    let id = out.file_name().map_or_else(|| "sim".into(), |n| n.to_string_lossy().into_owned());
    save_session(out, &sim.to_session(id))?;
    let on = sim.truth.events.iter().filter(|e| e.kind == HoofKind::HoofOn).count();
    let mut labels: Vec<String> = sim
        .truth
        .labels
        .iter()
        .map(|a| format!("{}:{}", a.track, a.label))
        .collect();
    labels.sort();
    labels.dedup();
    println!("session: {}", out.display());
    println!("duration_s: {:.3}", sim.duration_s);
    println!("samples: {}", sim.samples.len());
    println!("hoof_events: {} ({on} hoof-on)", sim.truth.events.len());
    println!("jumps: {}", sim.truth.jumps.len());
    println!("labels: {}", labels.join(" "));
    Ok(())
}

fn cmd_listen(bind: &str, port: u16, out: &Path, duration: f64) -> Result<()> {
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(Error::InvalidConfig(format!("duration must be a non-negative number, got {duration}")));
    }
    let listener = Listener::bind((bind, port), IngestConfig::default())?;
    info!("listening on {} for {duration} s", listener.local_addr()?);
    let outcome = listener.run(Duration::from_secs_f64(duration))?;
    let st = &outcome.stats;
    if st.packets == 0 {
        warn!("no packets received; writing an empty session");
    }
    save_session(out, &outcome.session)?;
    println!("session: {}", out.display());
    println!(
        "packets: {} accepted {} duplicates {} late {} malformed {} unknown_device {}",
        st.packets, st.accepted, st.duplicates, st.late, st.malformed, st.unknown_device
    );
    println!("samples: {} lost {}", st.samples_emitted, st.samples_lost);
    Ok(())
}

fn cmd_train(sessions: &[Session], track: &str, cfg: &HarConfig, seed: u64, out: &Path) -> Result<()> {
    let raw = har::collect_windows(sessions, track, &cfg.windows, cfg.model.downsample)?;
    info!("{} windows of {} candidates on track '{track}'", raw.windows.len(), raw.candidates);
    let (model, report) = har::fit(&raw, cfg, seed)?;
    create_dir(out)?;
    checkpoint::save(&out.join(CHECKPOINT_FILE), &model)?;

    let mut curve = String::from("epoch,loss\n");
    for (i, l) in report.loss_curve.iter().enumerate() {
        let _ = writeln!(curve, "{},{l}", i + 1);
    }
    write(&out.join(LOSS_FILE), &curve)?;

    let eval = model.evaluate(&raw)?;
    eval.write_confusion_csv(&out.join(CONFUSION_FILE))?;
    let mut text = format!("training set, {} epochs, seed {seed}\n", cfg.train.epochs);
    text.push_str(&eval.to_text());
    write(&out.join(EVAL_FILE), &text)?;
    print!("{text}");
    println!("checkpoint: {}", out.join(CHECKPOINT_FILE).display());
    Ok(())
}
