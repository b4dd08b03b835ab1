//! `bmmpp` command-line front end.
//!
//! Every subcommand writes CSV or JSON to `--out` (stdout when absent).
//! Relative output paths resolve against `--out-dir` or `BMMPP_OUT_DIR`.
//! `--config <json>` supplies flag values from a JSON object keyed by long
//! flag name; flags given on the command line take precedence. Failures print
//! a JSON envelope `{stage, message, data}` to stderr and exit with status 1.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use bmmpp::counting::{count_distribution, count_distribution_size_k, count_variance, palm_mean, size_k_model};
use bmmpp::descriptors::{compare, describe};
use bmmpp::fit::{empirical_report, fit};
use bmmpp::likelihood::{em_fit, loglik};
use bmmpp::queue::{queue_length_at_departures, service_rate_for, simulate_queue, traffic_intensity};
use bmmpp::simulate::{sample_random_model, simulate_trace};
use bmmpp::trace_io::{aggregate_format1, aggregate_format2, summarize, RawPacketTrace};
use bmmpp::trace_io::{DEFAULT_BIN, DEFAULT_CAP, DEFAULT_THRESHOLD};
use bmmpp::{descriptors::rho_t, descriptors::time_moment};
use bmmpp::{BmmppModel, EmOptions, Error, FitConfig, InitialPhase, ModelBounds, QueueSpec, RhoKind, RngSpec, Trace, Variant};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "bmmpp", version, about = "Two-state batch Markov modulated Poisson processes")]
struct Cli {
    /// JSON object of flag values, keyed by long flag name.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory for relative output paths.
    #[arg(long, global = true, env = "BMMPP_OUT_DIR")]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a trace (CSV `t,b`) from a model.
    Simulate(SimulateArgs),
    /// Descriptor table of a model, a trace, or both side by side.
    Describe(DescribeArgs),
    /// Fit a model to a trace; writes the fit result as JSON.
    Fit(FitArgs),
    /// Log-likelihood of a trace under a model.
    Loglik(LoglikArgs),
    /// Counting-process distribution or mean/sd series.
    Count(CountArgs),
    /// Queue length at departures of the BMMPP/M/1 queue.
    Queue(QueueArgs),
    /// Aggregate a raw packet trace into a batch trace.
    Ingest(IngestArgs),
    /// (CV, rhoT1) pairs of randomly drawn models.
    SampleScatter(ScatterArgs),
}

#[derive(Args, Debug)]
struct OutArg {
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    stream: u64,
    #[arg(long, value_enum, default_value_t = Init::Phi)]
    init: Init,
    #[command(flatten)]
    out: OutArg,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Init {
    /// Stationary at event epochs.
    Phi,
    /// Time-stationary.
    Pi,
    #[value(name = "0")]
    State0,
    #[value(name = "1")]
    State1,
}

impl From<Init> for InitialPhase {
    fn from(i: Init) -> Self {
        match i {
            Init::Phi => InitialPhase::StationaryPhi,
            Init::Pi => InitialPhase::StationaryPi,
            Init::State0 => InitialPhase::State(0),
            Init::State1 => InitialPhase::State(1),
        }
    }
}

#[derive(Args, Debug)]
struct DescribeArgs {
    /// Model JSON, or a fit result JSON holding a `model` field.
    #[arg(long, required_unless_present = "trace")]
    model: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Largest batch size for the empirical table; defaults to the model's
    /// K, else the trace's largest batch.
    #[arg(long)]
    k: Option<usize>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Method {
    Moments,
    Em,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum VariantArg {
    General,
    IidBatch,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Largest batch size; defaults to the trace's largest batch.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = FitConfig::default().tau)]
    tau: f64,
    #[arg(long, default_value_t = FitConfig::default().multistart)]
    multistart: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = VariantArg::General)]
    variant: VariantArg,
    #[arg(long, value_enum, default_value_t = Method::Moments)]
    method: Method,
    /// Starting model for EM; the moment fit when absent.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long, default_value_t = EmOptions::default().max_iter)]
    em_max_iter: usize,
    /// Empirical-vs-fitted descriptor CSV.
    #[arg(long)]
    compare_out: Option<PathBuf>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
struct LoglikArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    trace: PathBuf,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
struct CountArgs {
    #[arg(long)]
    model: PathBuf,
    /// Horizons, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    t: Vec<f64>,
    #[arg(long, default_value_t = 1e-10)]
    eps: f64,
    /// Count only batches of this size.
    #[arg(long)]
    size: Option<usize>,
    /// Emit `t,mean,sd` instead of the distribution.
    #[arg(long)]
    moments: bool,
    #[command(flatten)]
    out: OutArg,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum RhoKindArg {
    Batch,
    Customer,
}

#[derive(Args, Debug)]
struct QueueArgs {
    #[arg(long)]
    model: PathBuf,
    /// Target load; sets the service rate.
    #[arg(long, required_unless_present = "service_rate", conflicts_with = "service_rate")]
    rho: Option<f64>,
    #[arg(long, value_enum, default_value_t = RhoKindArg::Customer)]
    rho_kind: RhoKindArg,
    #[arg(long)]
    service_rate: Option<f64>,
    #[arg(long, default_value_t = QueueSpec::default().eps)]
    eps: f64,
    /// Adds simulated columns `sim,se` from this many departures.
    #[arg(long)]
    simulate: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Format {
    #[value(name = "1")]
    Bins,
    #[value(name = "2")]
    Sizes,
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// Two columns: timestamp in seconds, size in bytes.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    format: Format,
    #[arg(long, default_value_t = DEFAULT_BIN)]
    bin: f64,
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: usize,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Reject sizes outside Ethernet frame bounds.
    #[arg(long)]
    ethernet: bool,
    /// Trace summary JSON.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
struct ScatterArgs {
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArg,
}

/// Failure carried to the error envelope.
#[derive(Debug)]
struct Failure {
    stage: String,
    message: String,
    data: Value,
}

impl Failure {
    fn new(stage: &str, message: impl Into<String>) -> Self {
        Self { stage: stage.into(), message: message.into(), data: Value::Null }
    }

    fn from_error(stage: &str, e: Error) -> Self {
        let data = match &e {
            Error::Infeasible { constraint, value } => json!({ "constraint": constraint, "value": value }),
            Error::Unstable { rho } => json!({ "rho": rho }),
            Error::Parse { line, .. } => json!({ "line": line }),
            Error::BatchAboveK { batch, index, k } => json!({ "batch": batch, "index": index, "k": k }),
            Error::NonPositiveTime { value, index } => json!({ "value": value, "index": index }),
            Error::IndexOutOfRange { index, k } => json!({ "index": index, "k": k }),
            Error::Reducible { y, r } => json!({ "y": y, "r": r }),
            Error::EmptyFeasibleBox { stage, budget1, budget2 } => {
                json!({ "stage": stage, "budget": [budget1, budget2] })
            }
            Error::NonMonotoneEm { iteration, drop } => json!({ "iteration": iteration, "drop": drop }),
            _ => Value::Null,
        };
        let stage = match &e {
            Error::Stage { stage: inner, .. } => format!("{stage}/{inner}"),
            _ => stage.to_string(),
        };
        Self { stage, message: e.to_string(), data }
    }

    fn envelope(&self) -> Value {
        json!({ "stage": self.stage, "message": self.message, "data": self.data })
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Attaches the subcommand stage to library errors.
trait Stage<T> {
    fn stage(self, stage: &str) -> std::result::Result<T, Failure>;
}

impl<T> Stage<T> for bmmpp::Result<T> {
    fn stage(self, stage: &str) -> std::result::Result<T, Failure> {
        self.map_err(|e| Failure::from_error(stage, e))
    }
}

impl<T> Stage<T> for io::Result<T> {
    fn stage(self, stage: &str) -> std::result::Result<T, Failure> {
        self.map_err(|e| Failure::from_error(stage, Error::from(e)))
    }
}

struct Ctx {
    out_dir: Option<PathBuf>,
    stage: &'static str,
}

impl Ctx {
    fn resolve(&self, p: &Path) -> PathBuf {
        match &self.out_dir {
            Some(d) if p.is_relative() => d.join(p),
            _ => p.to_path_buf(),
        }
    }

    fn writer(&self, out: &Option<PathBuf>) -> std::result::Result<Box<dyn Write>, Failure> {
        match out {
            None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
            Some(p) => {
                let p = self.resolve(p);
                if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir).stage(self.stage)?;
                }
                let f = File::create(&p).map_err(|e| {
                    Failure::new(self.stage, format!("cannot create {}: {e}", p.display()))
                })?;
                Ok(Box::new(BufWriter::new(f)))
            }
        }
    }

    fn open(&self, p: &Path) -> std::result::Result<BufReader<File>, Failure> {
        File::open(p)
            .map(BufReader::new)
            .map_err(|e| Failure::new(self.stage, format!("cannot open {}: {e}", p.display())))
    }

    fn read_to_string(&self, p: &Path) -> std::result::Result<String, Failure> {
        std::fs::read_to_string(p).map_err(|e| Failure::new(self.stage, format!("cannot read {}: {e}", p.display())))
    }

    /// Model JSON, or any JSON object holding one under `model`.
    fn model(&self, p: &Path) -> std::result::Result<BmmppModel, Failure> {
        let text = self.read_to_string(p)?;
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| Failure::from_error(self.stage, Error::Parse { line: e.line(), message: e.to_string() }))?;
        let inner = v.get("model").filter(|_| v.get("D0").is_none()).cloned().unwrap_or(v);
        BmmppModel::from_json(&inner.to_string()).stage(self.stage)
    }

    fn trace(&self, p: &Path) -> std::result::Result<Trace, Failure> {
        Trace::read_csv(self.open(p)?).stage(self.stage)
    }
}

fn json_out(w: &mut dyn Write, v: &impl serde::Serialize, stage: &str) -> CmdResult {
    serde_json::to_writer_pretty(&mut *w, v).map_err(|e| Failure::new(stage, e.to_string()))?;
    writeln!(w).stage(stage)
}

/// Shortest representation that parses back to the same value.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn cmd_simulate(ctx: &Ctx, a: &SimulateArgs) -> CmdResult {
    let m = ctx.model(&a.model)?;
    let tr = simulate_trace(&m, a.n, RngSpec::new(a.seed, a.stream), a.init.into()).stage(ctx.stage)?;
    let mut w = ctx.writer(&a.out.out)?;
    tr.write_csv(&mut w).stage(ctx.stage)?;
    w.flush().stage(ctx.stage)
}

fn cmd_describe(ctx: &Ctx, a: &DescribeArgs) -> CmdResult {
    let model = a.model.as_deref().map(|p| ctx.model(p)).transpose()?;
    let model_report = model.as_ref().map(|m| describe(m).stage(ctx.stage)).transpose()?;
    let trace_report = match &a.trace {
        None => None,
        Some(p) => {
            let tr = ctx.trace(p)?;
            let k = a.k.or(model.as_ref().map(BmmppModel::k)).unwrap_or_else(|| tr.max_batch());
            Some(empirical_report(&tr, k).stage(ctx.stage)?)
        }
    };
    let mut w = ctx.writer(&a.out.out)?;
    match (&trace_report, &model_report) {
        (Some(e), Some(f)) => {
            writeln!(w, "descriptor,empirical,fitted").stage(ctx.stage)?;
            for (n, x, y) in compare(e, f) {
                writeln!(w, "{n},{},{}", num(x), num(y)).stage(ctx.stage)?;
            }
        }
        (Some(r), None) | (None, Some(r)) => {
            writeln!(w, "descriptor,value").stage(ctx.stage)?;
            for (n, x) in r.rows() {
                writeln!(w, "{n},{}", num(x)).stage(ctx.stage)?;
            }
        }
        (None, None) => return Err(Failure::new(ctx.stage, "need --model or --trace")),
    }
    w.flush().stage(ctx.stage)
}

fn cmd_fit(ctx: &Ctx, a: &FitArgs) -> CmdResult {
    let tr = ctx.trace(&a.trace)?;
    let k = a.k.unwrap_or_else(|| tr.max_batch());
    let cfg = FitConfig {
        tau: a.tau,
        multistart: a.multistart,
        rng: RngSpec::new(a.seed, 0),
        variant: match a.variant {
            VariantArg::General => Variant::General,
            VariantArg::IidBatch => Variant::IidBatch,
        },
        ..FitConfig::default()
    };
    cfg.validate().stage(ctx.stage)?;
    let res = match a.method {
        Method::Moments => fit(&tr, k, &cfg).stage(ctx.stage)?,
        Method::Em => {
            let start = Instant::now();
            let init = match &a.init {
                Some(p) => ctx.model(p)?,
                None => fit(&tr, k, &cfg).stage(ctx.stage)?.model,
            };
            let opts = EmOptions { max_iter: a.em_max_iter, ..EmOptions::default() };
            em_fit(&tr, k, &init, &opts).stage(ctx.stage)?.into_fit_result(start.elapsed()).stage(ctx.stage)?
        }
    };
    if let Some(p) = &a.compare_out {
        let e = empirical_report(&tr, k).stage(ctx.stage)?;
        let f = describe(&res.model).stage(ctx.stage)?;
        let mut w = ctx.writer(&Some(p.clone()))?;
        writeln!(w, "descriptor,empirical,fitted").stage(ctx.stage)?;
        for (n, x, y) in compare(&e, &f) {
            writeln!(w, "{n},{},{}", num(x), num(y)).stage(ctx.stage)?;
        }
        w.flush().stage(ctx.stage)?;
    }
    let mut w = ctx.writer(&a.out.out)?;
    json_out(&mut w, &res, ctx.stage)?;
    w.flush().stage(ctx.stage)
}

fn cmd_loglik(ctx: &Ctx, a: &LoglikArgs) -> CmdResult {
    let m = ctx.model(&a.model)?;
    let tr = ctx.trace(&a.trace)?;
    let v = loglik(&m, &tr).stage(ctx.stage)?;
    let mut w = ctx.writer(&a.out.out)?;
    json_out(&mut w, &json!({ "loglik": v.loglik, "n": v.n }), ctx.stage)?;
    w.flush().stage(ctx.stage)
}

fn cmd_count(ctx: &Ctx, a: &CountArgs) -> CmdResult {
    let m = ctx.model(&a.model)?;
    let mut w = ctx.writer(&a.out.out)?;
    if a.moments {
        let m = match a.size {
            Some(k) => size_k_model(&m, k).stage(ctx.stage)?,
            None => m,
        };
        writeln!(w, "t,mean,sd").stage(ctx.stage)?;
        for &t in &a.t {
            let mean = palm_mean(&m, t).stage(ctx.stage)?;
            let var = count_variance(&m, t).stage(ctx.stage)?;
            writeln!(w, "{},{},{}", num(t), num(mean), num(var.max(0.0).sqrt())).stage(ctx.stage)?;
        }
    } else {
        writeln!(w, "t,n,p").stage(ctx.stage)?;
        for &t in &a.t {
            let cd = match a.size {
                None => count_distribution(&m, t, a.eps),
                Some(k) => count_distribution_size_k(&m, t, k, a.eps),
            }
            .stage(ctx.stage)?;
            for (n, p) in cd.probs.iter().enumerate() {
                writeln!(w, "{},{n},{}", num(t), num(*p)).stage(ctx.stage)?;
            }
        }
    }
    w.flush().stage(ctx.stage)
}

fn cmd_queue(ctx: &Ctx, a: &QueueArgs) -> CmdResult {
    let m = ctx.model(&a.model)?;
    let mu = match (a.service_rate, a.rho) {
        (Some(mu), _) => mu,
        (None, Some(rho)) => {
            let kind = match a.rho_kind {
                RhoKindArg::Batch => RhoKind::Batch,
                RhoKindArg::Customer => RhoKind::Customer,
            };
            service_rate_for(&m, rho, kind).stage(ctx.stage)?
        }
        (None, None) => return Err(Failure::new(ctx.stage, "need --rho or --service-rate")),
    };
    let spec = QueueSpec { eps: a.eps, ..QueueSpec::with_service_rate(mu) };
    spec.validate().stage(ctx.stage)?;
    traffic_intensity(&m, &spec).stage(ctx.stage)?;
    let d = queue_length_at_departures(&m, &spec).stage(ctx.stage)?;
    let tail = d.tail();
    let sim = a
        .simulate
        .map(|n| simulate_queue(&m, &spec, n, RngSpec::new(a.seed, 0)))
        .transpose()
        .stage(ctx.stage)?;
    let mut w = ctx.writer(&a.out.out)?;
    match &sim {
        None => writeln!(w, "i,z,tail"),
        Some(_) => writeln!(w, "i,z,tail,sim,se"),
    }
    .stage(ctx.stage)?;
    for (i, (z, t)) in d.z.iter().zip(&tail).enumerate() {
        match &sim {
            None => writeln!(w, "{i},{},{}", num(*z), num(*t)),
            Some(s) => {
                let (sz, se) = (s.z.get(i).copied().unwrap_or(0.0), s.se.get(i).copied().unwrap_or(0.0));
                writeln!(w, "{i},{},{},{},{}", num(*z), num(*t), num(sz), num(se))
            }
        }
        .stage(ctx.stage)?;
    }
    w.flush().stage(ctx.stage)
}

fn cmd_ingest(ctx: &Ctx, a: &IngestArgs) -> CmdResult {
    let raw = RawPacketTrace::parse(ctx.open(&a.input)?, a.ethernet).stage(ctx.stage)?;
    let trace = match a.format {
        Format::Bins => aggregate_format1(&raw, a.bin, a.cap).stage(ctx.stage)?.trace,
        Format::Sizes => aggregate_format2(&raw, a.threshold).stage(ctx.stage)?.trace,
    };
    if let Some(p) = &a.summary {
        let mut w = ctx.writer(&Some(p.clone()))?;
        json_out(&mut w, &summarize(&trace), ctx.stage)?;
        w.flush().stage(ctx.stage)?;
    }
    let mut w = ctx.writer(&a.out.out)?;
    trace.write_csv(&mut w).stage(ctx.stage)?;
    w.flush().stage(ctx.stage)
}

fn cmd_sample_scatter(ctx: &Ctx, a: &ScatterArgs) -> CmdResult {
    let mut rng = RngSpec::new(a.seed, 0).rng();
    let bounds = ModelBounds::default();
    let mut w = ctx.writer(&a.out.out)?;
    writeln!(w, "cv,rhoT1").stage(ctx.stage)?;
    for _ in 0..a.count {
        let m = sample_random_model(a.k, &mut rng, &bounds).stage(ctx.stage)?;
        let (m1, m2) = (time_moment(&m, 1).stage(ctx.stage)?, time_moment(&m, 2).stage(ctx.stage)?);
        let cv = (m2 - m1 * m1).max(0.0).sqrt() / m1;
        writeln!(w, "{},{}", num(cv), num(rho_t(&m, 1).stage(ctx.stage)?)).stage(ctx.stage)?;
    }
    w.flush().stage(ctx.stage)
}

/// Appends `--key value` pairs from the config object for flags not already
/// on the command line. Arrays become comma-separated lists; `true` becomes a
/// bare switch and `false` is dropped.
fn expand_config(args: Vec<String>) -> std::result::Result<Vec<String>, Failure> {
    let Some(pos) = args.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(args);
    };
    let path = match args[pos].strip_prefix("--config=") {
        Some(p) => p.to_string(),
        None => args.get(pos + 1).cloned().ok_or_else(|| Failure::new("config", "--config needs a path"))?,
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Failure::new("config", format!("cannot read {path}: {e}")))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Failure::from_error("config", Error::Parse { line: e.line(), message: e.to_string() }))?;
    let Value::Object(map) = v else {
        return Err(Failure::new("config", "config must be a JSON object"));
    };
    let mut out = args.clone();
    for (key, val) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        if args.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}="))) {
            continue;
        }
        let scalar = |v: &Value| match v {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            _ => Err(Failure { stage: "config".into(), message: format!("unsupported value for {key}"), data: json!({ "key": key }) }),
        };
        match &val {
            Value::Bool(true) => out.push(flag),
            Value::Bool(false) | Value::Null => {}
            Value::Array(items) => {
                let parts = items.iter().map(scalar).collect::<std::result::Result<Vec<_>, _>>()?;
                out.push(flag);
                out.push(parts.join(","));
            }
            other => {
                out.push(flag);
                out.push(scalar(other)?);
            }
        }
    }
    Ok(out)
}

fn run() -> CmdResult {
    let args = expand_config(std::env::args().collect())?;
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return Ok(());
        }
        Err(e) => return Err(Failure::new("args", e.to_string().trim_end())),
    };
    let stage = match &cli.cmd {
        Command::Simulate(_) => "simulate",
        Command::Describe(_) => "describe",
        Command::Fit(_) => "fit",
        Command::Loglik(_) => "loglik",
        Command::Count(_) => "count",
        Command::Queue(_) => "queue",
        Command::Ingest(_) => "ingest",
        Command::SampleScatter(_) => "sample-scatter",
    };
    let ctx = Ctx { out_dir: cli.out_dir.clone(), stage };
    match &cli.cmd {
        Command::Simulate(a) => cmd_simulate(&ctx, a),
        Command::Describe(a) => cmd_describe(&ctx, a),
        Command::Fit(a) => cmd_fit(&ctx, a),
        Command::Loglik(a) => cmd_loglik(&ctx, a),
        Command::Count(a) => cmd_count(&ctx, a),
        Command::Queue(a) => cmd_queue(&ctx, a),
        Command::Ingest(a) => cmd_ingest(&ctx, a),
        Command::SampleScatter(a) => cmd_sample_scatter(&ctx, a),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.envelope());
            ExitCode::FAILURE
        }
    }
}
