use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use netqir::ir::{validate, Protocol, Severity};
use netqir::lowering::{lower_with, ExposeScheme, LowerError, LowerOptions, LoweredProgram};
use netqir::parser::{parse, print};
use netqir::sim::{simulate, SimConfig, SimError};
use netqir::topology::{
    curves_csv, curves_json, default_curves, emit_curves, CostProtocol, CurveRow, Topology,
    TopologyKind,
};

const EXIT_DIAGNOSTICS: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "netqir", version, about = "Parse, lower, analyze and simulate NetQIR programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the canonical text of a program.
    Parse(FileArgs),
    /// Report every diagnostic of a program.
    Validate(FileArgs),
    /// Expand communication into primitive operations.
    Lower(RunArgs),
    /// Communication cost of a distributed circuit.
    Analyze(AnalyzeArgs),
    /// Run a program on the state-vector simulator.
    Simulate(SimulateArgs),
    /// Cost sweep over every protocol and topology for 2..=11 QPUs.
    Curves(OutputArgs),
}

#[derive(Args)]
struct FileArgs {
    input: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    file: FileArgs,
    /// Number of ranks.
    #[arg(long, default_value_t = 2)]
    qpus: u32,
    #[arg(long, value_enum, default_value_t = TopologyArg::Direct)]
    topology: TopologyArg,
    /// Protocol for communication intrinsics without a suffix.
    #[arg(long, default_value = "auto")]
    protocol: String,
    #[arg(long, default_value = "ghz")]
    expose_scheme: String,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also dump the amplitudes of every live qubit.
    #[arg(long)]
    full_state: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long, value_enum, default_value_t = Circuit::Qft)]
    circuit: Circuit,
    #[arg(long)]
    qpus: u32,
    /// teledata, telegate or expose. Every protocol when omitted.
    #[arg(long)]
    protocol: Option<String>,
    /// Every topology when omitted.
    #[arg(long, value_enum)]
    topology: Option<TopologyArg>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Circuit {
    Qft,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum TopologyArg {
    Direct,
    Communicator,
}

impl TopologyArg {
    fn kind(self) -> TopologyKind {
        match self {
            TopologyArg::Direct => TopologyKind::DirectConnected,
            TopologyArg::Communicator => TopologyKind::ViaCommunicator,
        }
    }
}

/// Error carrying its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn diagnostics(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_DIAGNOSTICS,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("{}", f.message.trim_end());
            }
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Parse(a) => cmd_parse(&a),
        Command::Validate(a) => cmd_validate(&a),
        Command::Lower(a) => {
            let lowered = lower_file(&a, false)?;
            emit(a.file.output.as_deref(), &lowered.to_string())
        }
        Command::Analyze(a) => cmd_analyze(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Curves(o) => emit(o.output.as_deref(), &render_rows(&default_curves(), o.format)),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))
}

fn emit(path: Option<&Path>, text: &str) -> Outcome {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load(path: &Path) -> Result<netqir::ir::Program, Failure> {
    let text = read(path)?;
    parse(&text).map_err(|e| Failure::diagnostics(format!("{}: {e}", path.display())))
}

fn cmd_parse(a: &FileArgs) -> Outcome {
    let program = load(&a.input)?;
    emit(a.output.as_deref(), &print(&program))
}

fn cmd_validate(a: &FileArgs) -> Outcome {
    let program = load(&a.input)?;
    let diags = validate(&program);
    let mut report = String::new();
    for d in &diags {
        let _ = writeln!(report, "{}: {d}", a.input.display());
    }
    let errors = diags.iter().filter(|d| d.severity == Severity::Error).count();
    if errors > 0 {
        return Err(Failure::diagnostics(report));
    }
    eprint!("{report}");
    emit(a.output.as_deref(), &format!("{}: ok\n", a.input.display()))
}

fn parse_protocol(s: &str) -> Result<Protocol, Failure> {
    match s {
        "auto" => Ok(Protocol::Unspecified),
        "teledata" => Ok(Protocol::Teledata),
        "telegate" => Ok(Protocol::Telegate),
        _ => Err(Failure::usage(format!(
            "unknown protocol `{s}` (expected auto, teledata or telegate)"
        ))),
    }
}

fn lower_file(a: &RunArgs, allow_unmatched: bool) -> Result<LoweredProgram, Failure> {
    if a.qpus == 0 {
        return Err(Failure::usage("--qpus must be at least 1"));
    }
    let opts = LowerOptions {
        default_protocol: parse_protocol(&a.protocol)?,
        expose_scheme: a.expose_scheme.parse::<ExposeScheme>().map_err(Failure::usage)?,
        allow_unmatched,
    };
    let program = load(&a.file.input)?;
    let topology = Topology {
        kind: a.topology.kind(),
        qpus: a.qpus,
    };
    lower_with(&program, topology, &opts).map_err(|e| lower_failure(&a.file.input, e))
}

fn lower_failure(path: &Path, e: LowerError) -> Failure {
    let mut msg = String::new();
    match &e {
        LowerError::Invalid(diags) => {
            for d in diags {
                let _ = writeln!(msg, "{}: {d}", path.display());
            }
        }
        _ => {
            let _ = writeln!(msg, "{}: error[{}]: {e}", path.display(), e.kind());
        }
    }
    Failure::diagnostics(msg)
}

fn cmd_analyze(a: &AnalyzeArgs) -> Outcome {
    let Circuit::Qft = a.circuit;
    if a.qpus < 2 {
        return Err(Failure::usage("--qpus must be at least 2 for analyze"));
    }
    let protocols = match a.protocol.as_deref() {
        None => CostProtocol::ALL.to_vec(),
        Some("auto") => return Err(Failure::usage("--protocol auto is only accepted by lower and simulate")),
        Some(s) => vec![s.parse::<CostProtocol>().map_err(Failure::usage)?],
    };
    let topologies = match a.topology {
        None => TopologyKind::ALL.to_vec(),
        Some(t) => vec![t.kind()],
    };
    let rows = emit_curves(&protocols, &topologies, a.qpus..=a.qpus);
    emit(a.out.output.as_deref(), &render_rows(&rows, a.out.format))
}

fn render_rows(rows: &[CurveRow], format: Format) -> String {
    match format {
        Format::Csv => curves_csv(rows),
        Format::Json => curves_json(rows),
        Format::Text => {
            let mut s = format!(
                "{:<9} {:<12} {:>6} {:>9} {:>15} {:>6}\n",
                "protocol", "topology", "n_qpus", "consumed", "needed_per_qpu", "syncs"
            );
            for r in rows {
                let _ = writeln!(
                    s,
                    "{:<9} {:<12} {:>6} {:>9} {:>15} {:>6}",
                    r.protocol.keyword(), r.topology.keyword(), r.n_qpus, r.consumed, r.needed_per_qpu, r.syncs
                );
            }
            s
        }
    }
}

fn cmd_simulate(a: &SimulateArgs) -> Outcome {
    let lowered = lower_file(&a.run, true)?;
    let cfg = SimConfig::new(a.seed).with_transcript();
    let res = simulate(&lowered, &cfg).map_err(|e| sim_failure(&a.run.file.input, e))?;

    let mut out = String::new();
    for line in &res.transcript {
        let _ = writeln!(out, "{line}");
    }
    let _ = writeln!(out, "final state after {} steps:", res.steps);
    for rank in 0..lowered.world_size {
        for slot in 0..lowered.num_qubits {
            let q = res.qubit(rank, slot);
            let _ = writeln!(out, "  q{rank}.{slot} p1 {:.9}", res.state.prob_one(q));
        }
    }
    for rank in 0..lowered.world_size {
        for slot in 0..lowered.num_qubits {
            if let Some(b) = res.user_bit(rank, slot) {
                let _ = writeln!(out, "  rank {rank} result {slot} = {}", u8::from(b));
            }
        }
    }
    if a.full_state {
        let live: Vec<String> = res.state.live_qubits().iter().map(ToString::to_string).collect();
        let _ = writeln!(out, "amplitudes over [{}] (first listed is least significant):", live.join(", "));
        for (i, amp) in res.state.amplitudes().iter().enumerate() {
            if amp.norm_sqr() > 1e-24 {
                let _ = writeln!(out, "  {i:0width$b} {:+.12} {:+.12}i", amp.re, amp.im, width = live.len().max(1));
            }
        }
    }
    emit(a.run.file.output.as_deref(), &out)
}

fn sim_failure(path: &Path, e: SimError) -> Failure {
    match e {
        SimError::Lower(l) => lower_failure(path, l),
        e => Failure::runtime(format!("{}: error[{}]: {e}", path.display(), e.kind())),
    }
}
