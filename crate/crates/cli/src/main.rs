mod report;

use std::fs;
use std::io::{self, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use grm_core::analysis::{self, AnalysisError};
use grm_core::datalog::{read_session, Durability, SessionHeader, SessionWriter};
use grm_core::device::{Device, DeviceConfig};
use grm_core::library::ObjectLibrary;
use grm_core::manipulator::GripperModel;
use grm_core::orchestrator::{
    generate_table_trials, read_trial_csv, write_trial_csv, FaultPolicy, Orchestrator, TrialMatrixConfig,
};
use grm_core::protocol::{ActionClient, FrameReader, Goal, ResultBody, TcpTransport, Transport};
use grm_core::rig::{serve_tcp, InProcRig, Rig};
use grm_core::sweep::Execution;
use grm_core::types::{validate_lower_compat, validate_swap_compat, TrialSpec};
use report::Format;

#[derive(Parser)]
#[command(name = "grm", version, about = "Grasp reset rig twin: generate, run and analyze grasp trial batches")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Expand a trial-matrix config into a trial CSV.
    GenTrials {
        config: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run a batch from a trial CSV or a matrix config and record a session.
    Run {
        input: PathBuf,
        /// `inproc` or `tcp:HOST:PORT`.
        #[arg(long, default_value = "inproc")]
        device: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Policy::Abort)]
        policy: Policy,
        /// Session directory; must be absent or empty.
        #[arg(long, default_value = "session")]
        out: PathBuf,
        #[arg(long)]
        objects: Option<PathBuf>,
        /// Device configuration for the in-process rig.
        #[arg(long)]
        device_config: Option<PathBuf>,
        /// fsync every record instead of only flushing it.
        #[arg(long)]
        sync: bool,
    },
    /// Report statistics over a recorded session.
    Analyze {
        session: PathBuf,
        #[arg(long)]
        table: bool,
        #[arg(long)]
        repeatability: bool,
        #[arg(long)]
        edges: bool,
        /// Matrix config for the success table; the shipped table when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Decode a captured byte stream of protocol frames.
    ProtoDump { file: PathBuf },
    /// Check an object library against the rig's compatibility limits.
    ValidateObjects { file: PathBuf },
    /// Serve the simulated rig and arm over TCP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7400")]
        listen: String,
        #[arg(long)]
        objects: Option<PathBuf>,
        #[arg(long)]
        device_config: Option<PathBuf>,
        /// Wall-clock delay per device tick.
        #[arg(long, default_value_t = 0)]
        pace_ms: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Abort,
    Skip,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("device fault: {0}")]
    Device(String),
    #[error("log error: {0}")]
    Log(String),
    #[error("analysis error: {0}")]
    Analysis(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Device(_) => 3,
            CliError::Log(_) => 4,
            CliError::Analysis(_) => 5,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn log_err(e: impl std::fmt::Display) -> CliError {
    CliError::Log(e.to_string())
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn load_library(path: Option<&Path>) -> Result<ObjectLibrary, CliError> {
    match path {
        Some(p) => ObjectLibrary::parse(&read_text(p)?).map_err(config_err),
        None => Ok(ObjectLibrary::standard()),
    }
}

fn load_device(cfg: Option<&Path>, library: ObjectLibrary) -> Result<Device, CliError> {
    let cfg = match cfg {
        Some(p) => DeviceConfig::parse(&read_text(p)?).map_err(config_err)?,
        None => DeviceConfig::default(),
    };
    Device::new(cfg, library).map_err(config_err)
}

fn load_matrix(path: Option<&Path>) -> Result<TrialMatrixConfig, CliError> {
    match path {
        Some(p) => TrialMatrixConfig::parse(&read_text(p)?).map_err(config_err),
        None => TrialMatrixConfig::parse(grm_core::DATASET_MATRIX).map_err(config_err),
    }
}

/// A trial CSV starts with its header; anything else is read as a matrix config.
fn load_specs(path: &Path, library: &ObjectLibrary) -> Result<Vec<TrialSpec>, CliError> {
    let text = read_text(path)?;
    let first = text.lines().map(str::trim).find(|l| !l.is_empty() && !l.starts_with('#'));
    if first.is_some_and(|l| l.starts_with("trial_id")) {
        return read_trial_csv(text.as_bytes(), library)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())));
    }
    let cfg = TrialMatrixConfig::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    cfg.check_objects(library).map_err(config_err)?;
    generate_table_trials(&cfg).map_err(config_err)
}

fn gen_trials(config: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = load_matrix(Some(config))?;
    cfg.check_objects(&ObjectLibrary::standard()).map_err(config_err)?;
    let specs = generate_table_trials(&cfg).map_err(config_err)?;
    match out {
        Some(p) => {
            let f = fs::File::create(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            write_trial_csv(&specs, io::BufWriter::new(f)).map_err(config_err)?;
            eprintln!("wrote {} trials to {}", specs.len(), p.display());
        }
        None => write_trial_csv(&specs, io::stdout().lock()).map_err(config_err)?,
    }
    Ok(())
}

type DynClient = ActionClient<Box<dyn Transport>>;

fn connect(
    device: &str,
    library: &ObjectLibrary,
    device_config: Option<&Path>,
) -> Result<(DynClient, DynClient), CliError> {
    if device == "inproc" {
        let dev = load_device(device_config, library.clone())?;
        let (d, a, _threads) = InProcRig::spawn(Rig::new(dev, GripperModel::default()).shared()).into_parts();
        return Ok((ActionClient::new(Box::new(d)), ActionClient::new(Box::new(a))));
    }
    let Some(addr) = device.strip_prefix("tcp:") else {
        return Err(CliError::Config(format!("--device must be `inproc` or `tcp:HOST:PORT`, got `{device}`")));
    };
    let open = || -> Result<DynClient, CliError> {
        let t = TcpTransport::connect(addr).map_err(|e| CliError::Device(format!("connect {addr}: {e}")))?;
        Ok(ActionClient::new(Box::new(t) as Box<dyn Transport>))
    };
    Ok((open()?, open()?))
}

#[allow(clippy::too_many_arguments)]
fn run(
    input: &Path,
    device: &str,
    seed: u64,
    policy: Policy,
    out: &Path,
    objects: Option<&Path>,
    device_config: Option<&Path>,
    sync: bool,
) -> Result<(), CliError> {
    let library = load_library(objects)?;
    let specs = load_specs(input, &library)?;
    if specs.is_empty() {
        return Err(CliError::Config(format!("{}: no trials", input.display())));
    }
    let (dev, arm) = connect(device, &library, device_config)?;
    let mut orch = Orchestrator::new(dev, arm, library, GripperModel::default(), seed);
    let start = match orch.device_client().roundtrip(Goal::ReadState, |_, _| {}) {
        Ok(r) => match r.body {
            ResultBody::State(s) => s.clock_ms,
            _ => return Err(CliError::Device("ReadState returned no state".into())),
        },
        Err(e) => return Err(CliError::Device(e.to_string())),
    };
    let durability = if sync { Durability::Sync } else { Durability::Flush };
    let mut log = SessionWriter::create(out, SessionHeader::new(seed, start), durability).map_err(log_err)?;

    let policy = match policy {
        Policy::Abort => FaultPolicy::AbortOnFault,
        Policy::Skip => FaultPolicy::SkipOnFault,
    };
    let stdout = io::stdout();
    let summary = orch.run_batch(&specs, &mut log, policy, |rec| {
        let mut o = stdout.lock();
        // a closed stdout must not stop the batch
        let _ = writeln!(o, "ack trial {}", rec.spec.trial_id);
        let _ = o.flush();
    });
    if !summary.log_fault {
        log.close().map_err(log_err)?;
    }
    println!(
        "completed={} aborted={} successes={} unrun={} simulated_ms={} session={}",
        summary.completed,
        summary.aborted,
        summary.success_count,
        summary.unrun,
        summary.elapsed_ms,
        out.display()
    );
    match summary.stopped {
        Some(reason) if summary.log_fault => Err(CliError::Log(reason)),
        Some(reason) => Err(CliError::Device(reason)),
        None => Ok(()),
    }
}

fn analyze(
    session: &Path,
    mut table: bool,
    mut repeatability: bool,
    mut edges: bool,
    config: Option<&Path>,
    format: Format,
) -> Result<(), CliError> {
    if !(table || repeatability || edges) {
        (table, repeatability, edges) = (true, true, true);
    }
    let s = read_session(session).map_err(log_err)?;
    let analysis_err = |e: AnalysisError| CliError::Analysis(e.to_string());
    let mut out = String::new();
    if table {
        let cfg = load_matrix(config)?;
        let t = analysis::success_table(&s.trials, &cfg).map_err(analysis_err)?;
        out.push_str(&report::success_table(&t, format));
    }
    if repeatability {
        let r = analysis::repeatability_from_records(&s.trials).map_err(analysis_err)?;
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&report::repeatability(&r, format));
    }
    if edges {
        let e = analysis::edges(&s.trials, Execution::Parallel);
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&report::edges(&e, format));
    }
    if s.truncations > 0 {
        eprintln!("note: dropped {} partially written line(s)", s.truncations);
    }
    print!("{out}");
    Ok(())
}

fn proto_dump(file: &Path) -> Result<(), CliError> {
    let bytes = fs::read(file).map_err(|e| CliError::Config(format!("{}: {e}", file.display())))?;
    let mut reader = FrameReader::new();
    reader.push(&bytes);
    let mut n = 0;
    while let Some(msg) = reader.next_message() {
        n += 1;
        println!("{n:>5}  {msg:?}");
    }
    let st = reader.stats();
    println!(
        "frames={} crc_errors={} unknown_types={} malformed={} discarded_bytes={} trailing_bytes={}",
        st.frames,
        st.crc_errors,
        st.unknown_types,
        st.malformed,
        st.discarded_bytes,
        reader.buffered()
    );
    Ok(())
}

fn validate_objects(file: &Path) -> Result<(), CliError> {
    let lib =
        ObjectLibrary::parse(&read_text(file)?).map_err(|e| CliError::Config(format!("{}: {e}", file.display())))?;
    let mut rejected = 0;
    for obj in lib.iter() {
        let lower = validate_lower_compat(obj);
        let swap = validate_swap_compat(obj);
        rejected += !lower.is_ok() as usize;
        println!("{:<12} lower: {lower}; swap: {swap}", obj.id);
    }
    if rejected > 0 {
        return Err(CliError::Config(format!("{rejected} object(s) cannot be reset")));
    }
    Ok(())
}

fn serve(listen: &str, objects: Option<&Path>, device_config: Option<&Path>, pace_ms: u64) -> Result<(), CliError> {
    let device = load_device(device_config, load_library(objects)?)?;
    let rig = Rig::new(device, GripperModel::default()).with_pace(Duration::from_millis(pace_ms)).shared();
    let listener = TcpListener::bind(listen).map_err(|e| CliError::Device(format!("bind {listen}: {e}")))?;
    let addr = listener.local_addr().map_err(|e| CliError::Device(e.to_string()))?;
    println!("listening on {addr}");
    let _ = io::stdout().flush();
    serve_tcp(listener, rig).map_err(|e| CliError::Device(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::GenTrials { config, out } => gen_trials(config, out.as_deref()),
        Cmd::Run { input, device, seed, policy, out, objects, device_config, sync } => {
            run(input, device, *seed, *policy, out, objects.as_deref(), device_config.as_deref(), *sync)
        }
        Cmd::Analyze { session, table, repeatability, edges, config, format } => {
            analyze(session, *table, *repeatability, *edges, config.as_deref(), *format)
        }
        Cmd::ProtoDump { file } => proto_dump(file),
        Cmd::ValidateObjects { file } => validate_objects(file),
        Cmd::Serve { listen, objects, device_config, pace_ms } => {
            serve(listen, objects.as_deref(), device_config.as_deref(), *pace_ms)
        }
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("grm: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
