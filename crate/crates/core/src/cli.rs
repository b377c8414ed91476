//! The `sdmp` command line: split/join share files, list disjoint paths,
//! run the simulator and sweep interception probability over path counts.
//!
//! Exit codes: 0 success, 2 usage/policy/config/parse error, 3 I/O error,
//! 4 insufficient shares, 5 integrity failure, 6 shares from different messages.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::rngs::OsRng;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::adversary::{self, AdversaryModel};
use crate::codec::{
    self, CodecError, EncodingPolicy, Key, Keystream, Message, MessageId, ShareBundle,
};
use crate::routing_sim::{events_csv, SimConfig, SimError, Simulator};
use crate::topology::{self, parse_topology, NodeId, Topology};
use crate::wire::ShareFile;

pub const SWEEP_HEADER: &str = "n_paths,t,mode,analytic_p,mc_estimate,mc_halfwidth,trials,seed";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    InsufficientShares(String),
    #[error("{0}")]
    Integrity(String),
    #[error("{0}")]
    MixedMessages(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::InsufficientShares(_) => 4,
            CliError::Integrity(_) => 5,
            CliError::MixedMessages(_) => 6,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<CodecError> for CliError {
    fn from(err: CodecError) -> Self {
        match err {
            CodecError::MissingShare(_) | CodecError::InsufficientShares { .. } => {
                CliError::InsufficientShares(err.to_string())
            }
            CodecError::Integrity(_) | CodecError::Shape(_) | CodecError::Sharing(_) => {
                CliError::Integrity(err.to_string())
            }
            CodecError::Policy(_) => CliError::Config(err.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "sdmp",
    version,
    about = "Secure multipath share dispersal tools"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a file into share files named <stem>.share<i>.sdmp
    Split(SplitArgs),
    /// Rebuild a file from share files
    Join(JoinArgs),
    /// List node-disjoint paths between two nodes
    Paths(PathsArgs),
    /// Discover routes and send one message through the simulator
    Simulate(SimulateArgs),
    /// Interception probability against the number of paths, as CSV
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Chain,
    Threshold,
}

#[derive(Debug, Args)]
pub struct KeyArg {
    /// 32-byte key as 64 hex characters (defaults to all zeros)
    #[arg(long, env = "SDMP_KEY", hide_env_values = true)]
    pub key: Option<String>,
}

impl KeyArg {
    fn resolve(&self) -> Result<Key, CliError> {
        match &self.key {
            None => Ok(Key::ZERO),
            Some(text) => Key::from_hex(text).map_err(|e| CliError::Config(e.to_string())),
        }
    }
}

#[derive(Debug, Args)]
pub struct PolicyArgs {
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Fragment count (chain mode)
    #[arg(short = 'k')]
    pub k: Option<usize>,
    /// Shares needed to reconstruct (threshold mode)
    #[arg(short = 't')]
    pub t: Option<usize>,
    /// Shares produced (threshold mode)
    #[arg(short = 'n')]
    pub n: Option<usize>,
}

impl PolicyArgs {
    /// `None` when no policy flag was given at all.
    fn resolve(&self) -> Result<Option<EncodingPolicy>, CliError> {
        let mode = match self.mode {
            Some(mode) => mode,
            None if self.k.is_none() && self.t.is_none() && self.n.is_none() => return Ok(None),
            None => {
                return Err(CliError::Config(
                    "--mode is required with -k, -t or -n".into(),
                ))
            }
        };
        let policy = match mode {
            Mode::Chain => {
                if self.t.is_some() || self.n.is_some() {
                    return Err(CliError::Config("chain mode takes -k, not -t/-n".into()));
                }
                let k = self
                    .k
                    .ok_or_else(|| CliError::Config("chain mode needs -k".into()))?;
                EncodingPolicy::chain(k)
            }
            Mode::Threshold => {
                if self.k.is_some() {
                    return Err(CliError::Config(
                        "threshold mode takes -t and -n, not -k".into(),
                    ));
                }
                match (self.t, self.n) {
                    (Some(t), Some(n)) => EncodingPolicy::threshold(t, n),
                    _ => return Err(CliError::Config("threshold mode needs -t and -n".into())),
                }
            }
        };
        policy
            .map(Some)
            .map_err(|e| CliError::Config(e.to_string()))
    }
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[command(flatten)]
    pub key: KeyArg,
    /// Output directory (defaults to the input's directory)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for the message id and share randomness; OS entropy when absent
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct JoinArgs {
    #[arg(required = true)]
    pub shares: Vec<PathBuf>,
    #[command(flatten)]
    pub key: KeyArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct Endpoints {
    #[arg(long)]
    pub topology: PathBuf,
    #[arg(long)]
    pub source: String,
    #[arg(long)]
    pub dest: String,
}

#[derive(Debug, Args)]
pub struct PathsArgs {
    #[command(flatten)]
    pub endpoints: Endpoints,
    /// Maximum number of paths to list
    #[arg(long)]
    pub max: Option<usize>,
    /// Also write the listing as CSV
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub endpoints: Endpoints,
    /// File whose contents are sent as the message
    #[arg(long)]
    pub message: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-round probability that a wireless link is down
    #[arg(long, default_value_t = 0.0)]
    pub mobility: f64,
    /// Tolerated probability of too few shares arriving
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    #[arg(long, default_value_t = 3)]
    pub retry_limit: u32,
    /// Round budget per phase
    #[arg(long, default_value_t = 1000)]
    pub rounds: u64,
    /// Cap on the number of disjoint paths used
    #[arg(long)]
    pub max_paths: Option<usize>,
    /// Overrides the redundancy policy
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// Compromise every relay independently with this probability
    #[arg(long, conflicts_with = "compromised")]
    pub p_compromise: Option<f64>,
    /// Comma-separated ids of compromised relays
    #[arg(long, value_delimiter = ',')]
    pub compromised: Vec<String>,
    /// The adversary also holds the keystream key
    #[arg(long)]
    pub key_known: bool,
    #[command(flatten)]
    pub key: KeyArg,
    /// Write the event log as CSV
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub endpoints: Endpoints,
    /// Largest path count; rows run for 1..=N
    #[arg(long)]
    pub paths: usize,
    /// Uniform relay compromise probability (per-node values from the file when absent)
    #[arg(long)]
    pub p_compromise: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Mode::Threshold)]
    pub mode: Mode,
    /// Fixed threshold; defaults to t = n on every row
    #[arg(short = 't')]
    pub t: Option<usize>,
    #[arg(long)]
    pub key_known: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = err.exit_code();
            let rendered = err.render().to_string();
            let _ = if code == 0 {
                stdout.write_all(rendered.as_bytes())
            } else {
                stderr.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    match execute(cli.command, stdout, stderr) {
        Ok(()) => 0,
        Err(err) => {
            let _ = writeln!(stderr, "error: {err}");
            err.exit_code()
        }
    }
}

pub fn execute(
    command: Command,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    match command {
        Command::Split(args) => cmd_split(&args, stdout),
        Command::Join(args) => cmd_join(&args),
        Command::Paths(args) => cmd_paths(&args, stdout),
        Command::Simulate(args) => cmd_simulate(&args, stdout),
        Command::Sweep(args) => cmd_sweep(&args, stdout, stderr),
    }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn emit(stdout: &mut dyn Write, text: &str) -> Result<(), CliError> {
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

fn load_topology(path: &Path) -> Result<Topology, CliError> {
    let bytes = read(path)?;
    let text = String::from_utf8(bytes)
        .map_err(|_| CliError::Config(format!("{}: not UTF-8 text", path.display())))?;
    parse_topology(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn endpoints(topo: &Topology, args: &Endpoints) -> Result<(NodeId, NodeId), CliError> {
    let s = NodeId::new(&args.source);
    let d = NodeId::new(&args.dest);
    for id in [&s, &d] {
        if !topo.contains(id) {
            return Err(CliError::Config(format!("unknown node {id}")));
        }
    }
    if s == d {
        return Err(CliError::Config(
            "source and destination must differ".into(),
        ));
    }
    Ok((s, d))
}

fn cmd_split(args: &SplitArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let policy = args
        .policy
        .resolve()?
        .ok_or_else(|| CliError::Config("split needs --mode and its parameters".into()))?;
    let key = args.key.resolve()?;
    let payload = read(&args.input)?;

    let mut rng: Box<dyn RngCore> = match args.seed {
        Some(seed) => Box::new(ChaCha8Rng::seed_from_u64(seed)),
        None => Box::new(OsRng),
    };
    let mut id = [0u8; 16];
    rng.fill_bytes(&mut id);
    let message = Message::new(MessageId(id), payload);
    let bundle = codec::encode_message(&message, policy, &key, Keystream::Counter, &mut rng)?;

    let stem = args
        .input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "message".into());
    let dir = match &args.out {
        Some(dir) => dir.clone(),
        None => args
            .input
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default(),
    };
    let mut listing = String::new();
    for share in &bundle.shares {
        let path = dir.join(format!("{stem}.share{}.sdmp", share.index));
        let file = ShareFile {
            meta: bundle.meta,
            share: share.clone(),
        };
        write_file(&path, &file.to_bytes())?;
        let _ = writeln!(listing, "{}", path.display());
    }
    emit(stdout, &listing)
}

fn cmd_join(args: &JoinArgs) -> Result<(), CliError> {
    let key = args.key.resolve()?;
    let mut files = Vec::with_capacity(args.shares.len());
    for path in &args.shares {
        let file = ShareFile::from_bytes(&read(path)?)
            .map_err(|e| CliError::Integrity(format!("{}: {e}", path.display())))?;
        files.push((path, file));
    }
    let (_, first) = &files[0];
    let meta = first.meta;
    let mut shares: Vec<crate::secret_sharing::Share> = Vec::new();
    for (path, file) in &files {
        if file.meta.message_id != meta.message_id {
            return Err(CliError::MixedMessages(format!(
                "{} belongs to message {}, expected {}",
                path.display(),
                file.meta.message_id,
                meta.message_id
            )));
        }
        if file.meta != meta {
            return Err(CliError::Integrity(format!(
                "{}: bundle metadata disagrees with the other shares",
                path.display()
            )));
        }
        match shares.iter().find(|s| s.index == file.share.index) {
            Some(seen) if *seen == file.share => {}
            Some(_) => {
                return Err(CliError::Integrity(format!(
                    "{}: conflicting copies of share {}",
                    path.display(),
                    file.share.index
                )))
            }
            None => shares.push(file.share.clone()),
        }
    }
    let bundle = ShareBundle { meta, shares };
    let message = codec::decode_bundle(&bundle, &key, Keystream::Counter)?;
    write_file(&args.out, &message.payload)
}

fn cmd_paths(args: &PathsArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let topo = load_topology(&args.endpoints.topology)?;
    let (s, d) = endpoints(&topo, &args.endpoints)?;
    if args.max == Some(0) {
        return Err(CliError::Config("--max must be at least 1".into()));
    }
    let found = topology::node_disjoint_paths(&topo, &s, &d, args.max.unwrap_or(usize::MAX))
        .map_err(|e| CliError::Config(e.to_string()))?;

    let mut text = format!("{} paths\n", found.len());
    let mut csv = String::from("rank,hops,cost,p_compromise,nodes\n");
    for (i, path) in found.iter().enumerate() {
        let q = topology::path_compromise_prob(path, &topo);
        let _ = writeln!(
            text,
            "{}: {}  hops={} cost={:.6} p_compromise={:.6}",
            i + 1,
            path,
            path.hops(),
            path.cost,
            q
        );
        let nodes: Vec<&str> = path.nodes.iter().map(NodeId::as_str).collect();
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            i + 1,
            path.hops(),
            path.cost,
            q,
            nodes.join(" ")
        );
    }
    if let Some(out) = &args.out {
        write_file(out, csv.as_bytes())?;
    }
    emit(stdout, &text)
}

/// Message id for `simulate`: a function of the seed and payload only.
fn simulation_message_id(seed: u64, payload: &[u8]) -> MessageId {
    let mut hasher = Sha256::new();
    hasher.update(b"SDMP-MSG");
    hasher.update(seed.to_be_bytes());
    hasher.update(payload);
    let digest: [u8; 32] = hasher.finalize().into();
    MessageId(digest[..16].try_into().expect("16 bytes"))
}

fn cmd_simulate(args: &SimulateArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let topo = load_topology(&args.endpoints.topology)?;
    let (s, d) = endpoints(&topo, &args.endpoints)?;
    let key = args.key.resolve()?;
    let payload = read(&args.message)?;

    let adversary = match (args.p_compromise, args.compromised.is_empty()) {
        (Some(p), _) => Some(AdversaryModel::uniform(p, args.key_known)),
        (None, false) => Some(AdversaryModel::fixed(
            args.compromised.iter().map(NodeId::new),
            args.key_known,
        )),
        (None, true) => None,
    };
    let config = SimConfig {
        seed: args.seed,
        rounds: args.rounds,
        mobility: args.mobility,
        retry_limit: args.retry_limit,
        delta: args.delta,
        adversary,
        policy: args.policy.resolve()?,
        max_paths: args.max_paths,
        keystream: Keystream::Counter,
    };
    let mut sim = Simulator::new(topo, config).map_err(|e| CliError::Config(e.to_string()))?;
    let message = Message::new(simulation_message_id(args.seed, &payload), payload);
    match sim.send_message(&s, &d, &message, &key) {
        Ok(report) => {
            if let Some(out) = &args.out {
                write_file(out, report.events_csv().as_bytes())?;
            }
            emit(stdout, &report.render())
        }
        Err(SimError::NoRoute(..)) => {
            if let Some(out) = &args.out {
                write_file(out, events_csv(sim.event_log()).as_bytes())?;
            }
            emit(
                stdout,
                "routes found: 0\nreconstructed: false, reason: no-route\n",
            )
        }
        Err(err) => Err(CliError::Config(err.to_string())),
    }
}

fn cmd_sweep(
    args: &SweepArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    if args.trials == 0 {
        return Err(CliError::Config("--trials must be at least 1".into()));
    }
    if args.paths == 0 {
        return Err(CliError::Config("--paths must be at least 1".into()));
    }
    if args.t == Some(0) {
        return Err(CliError::Config("-t must be at least 1".into()));
    }
    if args.mode == Mode::Chain && args.t.is_some() {
        return Err(CliError::Config(
            "chain mode uses k = n; -t is for threshold mode".into(),
        ));
    }
    let mut topo = load_topology(&args.endpoints.topology)?;
    let (s, d) = endpoints(&topo, &args.endpoints)?;
    if let Some(p) = args.p_compromise {
        topo = topo
            .with_uniform_compromise(p)
            .map_err(|e| CliError::Config(e.to_string()))?;
    }

    let mut csv = format!("{SWEEP_HEADER}\n");
    for n in 1..=args.paths {
        let pathset = topology::node_disjoint_paths(&topo, &s, &d, n)
            .map_err(|e| CliError::Config(e.to_string()))?;
        if pathset.len() < n {
            let _ = writeln!(
                stderr,
                "note: n_paths={n} skipped, only {} disjoint paths available",
                pathset.len()
            );
            continue;
        }
        let policy = match args.mode {
            Mode::Chain => EncodingPolicy::chain(n),
            Mode::Threshold => {
                let t = args.t.unwrap_or(n);
                if t > n {
                    let _ = writeln!(stderr, "note: n_paths={n} skipped, t={t} exceeds n");
                    continue;
                }
                EncodingPolicy::threshold(t, n)
            }
        }
        .map_err(|e| CliError::Config(e.to_string()))?;
        let analytic = adversary::analytic_interception(&pathset, &policy, &topo, args.key_known)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let mc = adversary::mc_interception(
            &pathset,
            &policy,
            &topo,
            args.key_known,
            args.trials,
            args.seed,
        )
        .map_err(|e| CliError::Config(e.to_string()))?;
        let _ = writeln!(
            csv,
            "{n},{},{},{analytic},{},{},{},{}",
            policy.required(),
            policy.mode_name(),
            mc.estimate,
            mc.half_width,
            mc.trials,
            args.seed
        );
    }
    match &args.out {
        Some(out) => write_file(out, csv.as_bytes()),
        None => emit(stdout, &csv),
    }
}
