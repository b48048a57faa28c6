//! The `pyramid` command.
//!
//! Exit codes: 0 pass, 1 verdict failure, 2 usage error, 3 build or
//! capacity failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use pyramid_oram::{PyramidConfig, DEFAULT_PAYLOAD};
use serde::Serialize;
use serde_json::{json, Value};

use crate::analysis::{self, bucket_overflow_prob_bound, expected_spill_bound};
use crate::config::{Format, OramConfigDoc, PolicyDoc, RunConfig};
use crate::error::{LabError, Result};
use crate::experiments::{compare_shapes, index_uniformity, run_bench, verify};
use crate::report::{self, BoundJson, BENCH_COLUMNS, BOUND_REPORT, CDF_COLUMNS};
use crate::traceio;
use crate::workload::{generate, Workload};

pub const EXIT_PASS: u8 = 0;
pub const EXIT_VERDICT: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_BUILD: u8 = 3;

/// Environment variable holding the default seed.
pub const SEED_ENV: &str = "PYRAMID_SEED";

#[derive(Debug, Parser)]
#[command(name = "pyramid", version, about = "Pyramid ORAM experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a workload and write one row per access.
    Bench(BenchArgs),
    /// Check a workload against a reference map.
    Verify(VerifyArgs),
    /// Repeated full-load oblivious builds of one Zigzag hash table.
    Zht(ZhtArgs),
    /// Routing network repartition count and per-stage spill.
    Prn(PrnArgs),
    /// Overflow bounds, optionally against Monte Carlo.
    Bounds(BoundsArgs),
    /// Trace shape and bucket-index uniformity checks.
    Trace(TraceArgs),
}

#[derive(Debug, Clone, Args)]
pub struct OramArgs {
    /// Capacity N (power of two).
    #[arg(long, default_value_t = 1 << 14)]
    pub capacity: usize,
    /// First level size p (power of two).
    #[arg(long, default_value_t = 64)]
    pub p: usize,
    /// Slots per bucket.
    #[arg(long, default_value_t = 4)]
    pub c: usize,
    /// Tables per level (default: per-level rule).
    #[arg(long)]
    pub k: Option<usize>,
    /// `strict` or `retry:R`.
    #[arg(long, default_value = "strict", value_parser = parse_policy)]
    pub policy: PolicyDoc,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WorkloadKind {
    Uniform,
    Sequential,
    Zipf,
    SparseIndexTrace,
}

#[derive(Debug, Clone, Args)]
pub struct WorkloadArgs {
    #[arg(long, default_value_t = 10_000)]
    pub ops: u64,
    #[arg(long, value_enum, default_value_t = WorkloadKind::Uniform)]
    pub workload: WorkloadKind,
    /// Zipf exponent.
    #[arg(long, default_value_t = 0.99)]
    pub theta: f64,
    /// Key file for `sparse-index-trace`.
    #[arg(long)]
    pub trace_file: Option<PathBuf>,
}

impl WorkloadArgs {
    fn workload(&self) -> Result<Workload> {
        Ok(match self.workload {
            WorkloadKind::Uniform => Workload::Uniform,
            WorkloadKind::Sequential => Workload::Sequential,
            WorkloadKind::Zipf => Workload::Zipf { theta: self.theta },
            WorkloadKind::SparseIndexTrace => Workload::SparseIndexTrace {
                path: self
                    .trace_file
                    .clone()
                    .ok_or_else(|| LabError::Invalid("sparse-index-trace needs --trace-file".into()))?,
            },
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output file (default: standard output).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub oram: OramArgs,
    #[command(flatten)]
    pub workload: WorkloadArgs,
    #[command(flatten)]
    pub out: OutputArgs,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,
    /// Also write the cumulative distribution of per-access cost here.
    #[arg(long)]
    pub cdf: Option<PathBuf>,
    /// Write 0 for wall times so output depends on the inputs alone.
    #[arg(long)]
    pub deterministic: bool,
    /// Write the run configuration as JSON.
    #[arg(long)]
    pub save_config: Option<PathBuf>,
    /// Replay a saved run configuration. ORAM and workload flags are
    /// ignored; `--output` still overrides the saved path.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub oram: OramArgs,
    #[command(flatten)]
    pub workload: WorkloadArgs,
    /// Flip a stored bit before this operation.
    #[arg(long, hide = true)]
    pub inject_fault_at: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ZhtArgs {
    #[arg(long, default_value_t = 2048)]
    pub n: usize,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long, default_value_t = 4)]
    pub c: usize,
    #[arg(long, default_value_t = 100)]
    pub trials: u64,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for trials (default: all cores).
    #[arg(long)]
    pub parallel_trials: Option<usize>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct PrnArgs {
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub c: usize,
    /// Live elements per bucket on entry.
    #[arg(long, default_value_t = 1.0)]
    pub load: f64,
    #[arg(long, default_value_t = 1)]
    pub trials: u64,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub parallel_trials: Option<usize>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[arg(long)]
    pub m: u64,
    #[arg(long)]
    pub n: u64,
    #[arg(long)]
    pub c: u64,
    /// Monte Carlo trials of a uniform throw (0 for none).
    #[arg(long, default_value_t = 0)]
    pub trials: u64,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub parallel_trials: Option<usize>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    #[command(flatten)]
    pub oram: OramArgs,
    #[command(flatten)]
    pub workload: WorkloadArgs,
    #[arg(long, default_value_t = 0.001)]
    pub significance: f64,
    /// Export the full trace of the run as `region,index,op` lines.
    #[arg(long)]
    pub export: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutputArgs,
}

fn parse_policy(s: &str) -> std::result::Result<PolicyDoc, String> {
    match s {
        "strict" => Ok(PolicyDoc::Strict),
        _ => s
            .strip_prefix("retry:")
            .and_then(|r| r.parse().ok())
            .map(PolicyDoc::Retry)
            .ok_or_else(|| format!("expected `strict` or `retry:R`, got `{s}`")),
    }
}

impl OramArgs {
    fn config(&self) -> PyramidConfig {
        PyramidConfig {
            capacity: self.capacity,
            first_level_size: self.p,
            c: self.c,
            k_override: self.k,
            seed: self.seed,
            policy: self.policy.into(),
        }
    }
}

/// Whether the experiment's own verdict passed.
type Verdict = bool;

fn exit_code(e: &LabError) -> u8 {
    use pyramid_oram::Error as E;
    match e {
        LabError::Oram(E::CapacityExceeded | E::BuildFailed(_) | E::Poisoned) => EXIT_BUILD,
        LabError::Schema(_) => EXIT_VERDICT,
        _ => EXIT_USAGE,
    }
}

fn emit(out: &OutputArgs, text: &str) -> Result<()> {
    match &out.output {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn json_text<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(t) => {
            let pool =
                rayon::ThreadPoolBuilder::new().num_threads(t).build().map_err(|e| LabError::Invalid(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

fn csv_text<T: Serialize>(schema: report::Schema, rows: &[T]) -> Result<String> {
    let mut buf = Vec::new();
    report::write_csv(&mut buf, schema, rows)?;
    let text = String::from_utf8(buf).map_err(|e| LabError::Invalid(e.to_string()))?;
    report::validate_csv(&text, schema)?;
    Ok(text)
}

fn bench(a: &BenchArgs) -> Result<Verdict> {
    let rc = match &a.config {
        Some(path) => {
            let mut rc = RunConfig::from_json(&fs::read_to_string(path)?)?;
            if a.out.output.is_some() {
                rc.output = a.out.output.clone();
            }
            rc
        }
        None => RunConfig {
            command: "bench".into(),
            capacity: a.oram.capacity,
            p: a.oram.p,
            c: a.oram.c,
            k: a.oram.k,
            ops: a.workload.ops,
            workload: a.workload.workload()?,
            seed: a.oram.seed,
            policy: a.oram.policy,
            output: a.out.output.clone(),
            format: match a.format {
                FormatArg::Csv => Format::Csv,
                FormatArg::Json => Format::Json,
            },
        },
    };
    if let Some(path) = &a.save_config {
        fs::write(path, rc.to_json()? + "\n")?;
    }
    let cfg = rc.oram_config();
    cfg.validate()?;
    let ops = generate(&rc.workload, rc.capacity, rc.ops, rc.seed)?;
    let rows = run_bench(&cfg, &ops, a.deterministic)?;
    let text = match rc.format {
        Format::Csv => csv_text(BENCH_COLUMNS, &rows)?,
        Format::Json => {
            let v = serde_json::to_value(&rows)?;
            for row in v.as_array().into_iter().flatten() {
                report::validate_json(row, BENCH_COLUMNS)?;
            }
            json_text(&v)?
        }
    };
    let out = OutputArgs { output: rc.output.clone() };
    emit(&out, &text)?;
    if let Some(path) = &a.cdf {
        fs::write(path, csv_text(CDF_COLUMNS, &report::cdf(&rows))?)?;
    }
    Ok(true)
}

fn verify_cmd(a: &VerifyArgs) -> Result<Verdict> {
    let cfg = a.oram.config();
    cfg.validate()?;
    let ops = generate(&a.workload.workload()?, cfg.capacity, a.workload.ops, cfg.seed)?;
    let outcome = verify(&cfg, &ops, a.inject_fault_at)?;
    match outcome.first_divergence {
        None => println!("pass: {} operations matched", outcome.ops_checked),
        Some(i) => eprintln!("fail: first divergence at operation {i}"),
    }
    Ok(outcome.passed())
}

fn zht(a: &ZhtArgs) -> Result<Verdict> {
    let t = with_threads(a.parallel_trials, || analysis::build_trials(a.n, a.k, a.c, a.trials, a.seed))??;
    let empty_tables: Vec<usize> = (0..a.k).filter(|&j| t.max_occupancy[j] == 0).map(|j| j + 1).collect();
    let pass = t.failures == 0;
    let v = json!({
        "params": {"n": a.n, "k": a.k, "c": a.c, "seed": a.seed},
        "trials": t.trials,
        "failures": t.failures,
        "mean_arrivals": t.mean_arrivals,
        "max_arrivals": t.max_arrivals,
        "max_occupancy": t.max_occupancy,
        "empty_tables": empty_tables,
        "verdict": if pass { "pass" } else { "fail" },
    });
    report::validate_json(&v, ZHT_REPORT)?;
    emit(&a.out, &json_text(&v)?)?;
    Ok(pass)
}

const ZHT_REPORT: report::Schema = &[
    ("params", report::Kind::Object),
    ("trials", report::Kind::UInt),
    ("failures", report::Kind::UInt),
    ("mean_arrivals", report::Kind::Array),
    ("max_occupancy", report::Kind::Array),
    ("empty_tables", report::Kind::Array),
    ("verdict", report::Kind::Str),
];

const PRN_REPORT: report::Schema = &[
    ("params", report::Kind::Object),
    ("trials", report::Kind::UInt),
    ("repartitions", report::Kind::UInt),
    ("expected_repartitions", report::Kind::UInt),
    ("stage_mean_spill", report::Kind::Array),
    ("throw_mean_spill", report::Kind::Float),
    ("stage_check", report::Kind::Str),
    ("verdict", report::Kind::Str),
];

/// Fewer trials than this make the per-stage comparison meaningless.
const MIN_STAGE_TRIALS: u64 = 30;

fn prn(a: &PrnArgs) -> Result<Verdict> {
    let r = with_threads(a.parallel_trials, || analysis::mc_prn_stage_spill(a.n, a.c, a.load, a.trials, a.seed))??;
    let expected = (a.n as u64 / 2) * a.n.trailing_zeros() as u64;
    let stage_check = if a.trials < MIN_STAGE_TRIALS {
        "skipped"
    } else if r.stages_below_throw(3.0) {
        "pass"
    } else {
        "fail"
    };
    let pass = r.repartitions == expected && stage_check != "fail";
    let v = json!({
        "params": {"n": a.n, "c": a.c, "load": a.load, "live": r.live, "seed": a.seed},
        "trials": a.trials,
        "repartitions": r.repartitions,
        "expected_repartitions": expected,
        "stage_mean_spill": r.per_stage.iter().map(|s| s.mean).collect::<Vec<_>>(),
        "stage_stderr": r.per_stage.iter().map(|s| s.stderr()).collect::<Vec<_>>(),
        "total_mean_spill": r.total.mean,
        "throw_mean_spill": r.throw.mean,
        "throw_stderr": r.throw.stderr(),
        "stage_check": stage_check,
        "verdict": if pass { "pass" } else { "fail" },
    });
    report::validate_json(&v, PRN_REPORT)?;
    emit(&a.out, &json_text(&v)?)?;
    Ok(pass)
}

/// Tolerance between the exact and floating-point evaluations.
pub const AGREEMENT: f64 = 1e-10;

fn bounds(a: &BoundsArgs) -> Result<Verdict> {
    if a.n == 0 || a.c == 0 {
        return Err(LabError::Invalid("n and c must be positive".into()));
    }
    let spill = expected_spill_bound(a.m, a.n, a.c);
    let overflow = bucket_overflow_prob_bound(a.m, a.n, a.c);
    let agree = [&spill, &overflow].iter().all(|b| b.disagreement().is_none_or(|d| d <= AGREEMENT));
    let mc = if a.trials > 0 {
        let (m, n, c) = (a.m as usize, a.n as usize, a.c as usize);
        Some(with_threads(a.parallel_trials, || analysis::mc_throw_spill(m, n, c, a.trials, a.seed))??)
    } else {
        None
    };
    let mc_ok = mc.as_ref().is_none_or(|s| s.within(spill.value(), 3.0));
    let verdict = match (agree && mc_ok, mc.is_some()) {
        (false, _) => "fail",
        (true, true) => "pass",
        (true, false) => "n/a",
    };
    let report = BoundJson {
        params: json!({"m": a.m, "n": a.n, "c": a.c}),
        bound: spill.value(),
        bound_exact: spill.exact_string(),
        mc_mean: mc.as_ref().map(|s| s.mean),
        mc_stderr: mc.as_ref().map(|s| s.stderr()),
        trials: a.trials,
        verdict: verdict.into(),
    };
    let mut v = serde_json::to_value(&report)?;
    v["overflow_prob_bound"] = json!(overflow.value());
    v["overflow_prob_exact"] = json!(overflow.exact_string());
    v["float_agreement"] = json!(agree);
    report::validate_json(&v, BOUND_REPORT)?;
    emit(&a.out, &json_text(&v)?)?;
    Ok(verdict != "fail")
}

const TRACE_REPORT: report::Schema = &[
    ("params", report::Kind::Object),
    ("accesses", report::Kind::UInt),
    ("shapes_identical", report::Kind::Bool),
    ("levels", report::Kind::Array),
    ("verdict", report::Kind::Str),
];

fn trace(a: &TraceArgs) -> Result<Verdict> {
    let cfg = a.oram.config();
    cfg.validate()?;
    let w = a.workload.workload()?;
    let ops = generate(&w, cfg.capacity, a.workload.ops, cfg.seed)?;
    let other = generate(&Workload::Uniform, cfg.capacity, a.workload.ops, cfg.seed.wrapping_add(1))?;
    let shapes = compare_shapes(&cfg, &ops, &other)?;
    let levels = index_uniformity(&cfg, &ops, a.significance)?;
    if let Some(path) = &a.export {
        export_trace(&cfg, &ops, path)?;
    }
    let uniform = levels.iter().all(|l| l.chi.as_ref().is_none_or(|c| c.pass));
    let pass = shapes.first_difference.is_none() && uniform;
    let level_json: Vec<Value> = levels
        .iter()
        .map(|l| {
            json!({
                "level": l.level,
                "events": l.events,
                "statistic": l.chi.as_ref().map(|c| c.statistic),
                "critical": l.chi.as_ref().map(|c| c.critical),
                "pass": l.chi.as_ref().map(|c| c.pass),
            })
        })
        .collect();
    let v = json!({
        "params": OramConfigDoc::new(&cfg, DEFAULT_PAYLOAD),
        "accesses": shapes.accesses,
        "shapes_identical": shapes.first_difference.is_none(),
        "first_shape_difference": shapes.first_difference,
        "significance": a.significance,
        "levels": level_json,
        "verdict": if pass { "pass" } else { "fail" },
    });
    report::validate_json(&v, TRACE_REPORT)?;
    emit(&a.out, &json_text(&v)?)?;
    Ok(pass)
}

fn export_trace(cfg: &PyramidConfig, ops: &[crate::workload::Op], path: &Path) -> Result<()> {
    let mut oram = pyramid_oram::PyramidOram::<DEFAULT_PAYLOAD>::new(cfg.clone())?;
    let mut rec = pyramid_oram::TraceRecorder::recording();
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for op in ops {
        let req = op
            .write
            .map_or(pyramid_oram::Request::Read, |v| pyramid_oram::Request::Write(crate::experiments::payload(v)));
        oram.access(op.key, req, &mut rec)?;
        traceio::export(&rec.take_events(), &mut out)?;
    }
    Ok(())
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    let result = match &cli.command {
        Command::Bench(a) => bench(a),
        Command::Verify(a) => verify_cmd(a),
        Command::Zht(a) => zht(a),
        Command::Prn(a) => prn(a),
        Command::Bounds(a) => bounds(a),
        Command::Trace(a) => trace(a),
    };
    match result {
        Ok(true) => EXIT_PASS,
        Ok(false) => EXIT_VERDICT,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
