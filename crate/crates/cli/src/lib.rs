//! Command-line harness over `dpfl-core`: generators, metrics, exact and
//! Monte-Carlo experiments, bound tables, and the privacy auditor.
//!
//! Everything routes through [`run_command`], which returns the serialized
//! output and maps failures onto stable exit codes: 2 for usage errors, 3
//! for data errors (unreadable or invalid files), 4 for constraint errors
//! (parameter combinations the math rejects). Floats are rendered with 17
//! significant digits in both JSON and CSV so fixed-seed outputs are
//! byte-stable.

use std::fmt::Write as _;
use std::fs;

use clap::error::ErrorKind as ClapErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use dpfl_core::bounds::{self, Family};
use dpfl_core::domain::{change_one_distance, Dataset};
use dpfl_core::families;
use dpfl_core::jsonio::format_f64;
use dpfl_core::mechanism::{
    build_output_density, exact_tail, fair_quantile, sample_location, MechanismSpec,
    TailMetric,
};
use dpfl_core::metrics::{self, EvalMode};
use dpfl_core::rng::derive_seed;
use dpfl_core::score::{q_value, WideningParam};
use dpfl_core::Error as CoreError;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_CONSTRAINT: i32 = 4;

/// A failed run: exit code plus a one-line diagnostic for stderr.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: String) -> Self {
        CliError {
            code: EXIT_USAGE,
            message,
        }
    }

    fn data(message: String) -> Self {
        CliError {
            code: EXIT_DATA,
            message,
        }
    }
}

fn from_core(e: CoreError) -> CliError {
    let code = match &e {
        CoreError::EvenCount { .. }
        | CoreError::OutOfDomain { .. }
        | CoreError::NonPositiveDiameter { .. }
        | CoreError::SizeMismatch { .. }
        | CoreError::DomainMismatch { .. }
        | CoreError::InvalidCertificate(_)
        | CoreError::DegenerateSupport
        | CoreError::Json(_) => EXIT_DATA,
        CoreError::LocationOutOfDomain { .. }
        | CoreError::ZeroGap { .. }
        | CoreError::NotCtm
        | CoreError::InvalidParams(_)
        | CoreError::InvalidK { .. }
        | CoreError::BetaOutOfRange { .. } => EXIT_CONSTRAINT,
    };
    CliError {
        code,
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// One typed output field.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Float(f64),
    Int(i64),
    Str(String),
    Bool(bool),
    Null,
}

impl Value {
    fn render(&self) -> String {
        match self {
            Value::Float(x) => format_f64(*x),
            Value::Int(i) => i.to_string(),
            Value::Str(s) => s.clone(),
            Value::Bool(b) => b.to_string(),
            Value::Null => String::new(),
        }
    }

    fn render_json(&self) -> String {
        match self {
            Value::Str(s) => format!("\"{}\"", s.escape_default()),
            Value::Null => "null".to_string(),
            other => other.render(),
        }
    }
}

/// Ordered field list; one per output row.
pub type Record = Vec<(&'static str, Value)>;

fn records_to_json(records: &[Record]) -> String {
    let objects: Vec<String> = records
        .iter()
        .map(|r| {
            let fields: Vec<String> = r
                .iter()
                .map(|(k, v)| format!("\"{}\":{}", k, v.render_json()))
                .collect();
            format!("{{{}}}", fields.join(","))
        })
        .collect();
    if objects.len() == 1 {
        objects.into_iter().next().unwrap()
    } else {
        format!("[{}]", objects.join(","))
    }
}

fn records_to_csv(records: &[Record]) -> String {
    let mut out = String::new();
    if let Some(first) = records.first() {
        let header: Vec<&str> = first.iter().map(|(k, _)| *k).collect();
        let _ = writeln!(out, "{}", header.join(","));
        for r in records {
            let row: Vec<String> = r.iter().map(|(_, v)| v.render()).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
    }
    out
}

fn emit(records: &[Record], format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = records_to_json(records);
            s.push('\n');
            s
        }
        Format::Csv => records_to_csv(records),
    }
}

#[derive(Debug, Parser)]
#[command(name = "dpfl", version, about = "Private facility location toolkit")]
pub struct Cli {
    /// Output format for tabular results.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset (or dataset pair) from a named construction.
    Gen(GenArgs),
    /// Evaluate the welfare and fairness metrics at a location.
    Metrics(MetricsArgs),
    /// Draw seeded samples from the mechanism.
    Sample(SampleArgs),
    /// Exact (and optionally Monte-Carlo) tail probability of a metric.
    Tail(TailArgs),
    /// Exact quantile of the fairness metric.
    Quantile(QuantileArgs),
    /// Analytic bound values.
    Bound(BoundArgs),
    /// Exact privacy audit of the mechanism on a dataset pair.
    AuditDp(AuditArgs),
    /// Family membership checks and certificate verification.
    CheckFamily(CheckFamilyArgs),
    /// Emit the collapsing-family certificate density for a dataset.
    Certificate(CertificateArgs),
    /// Sweep a parameter grid and emit one record per cell.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenKind {
    Uniform,
    CtmWorst,
    SpmWorst,
    ImpossibilityPair,
    FairLbPair,
    SpmLbPair,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub kind: GenKind,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub m: f64,
    #[arg(long, default_value_t = 0)]
    pub k: usize,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub dataset: String,
    #[arg(long)]
    pub location: f64,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub dataset: String,
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long)]
    pub alpha: String,
    #[arg(long)]
    pub trials: u64,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricKind {
    P,
    Fair,
    Swdiff,
}

impl MetricKind {
    fn tail_metric(self) -> TailMetric {
        match self {
            MetricKind::P => TailMetric::P,
            MetricKind::Fair => TailMetric::Fair,
            MetricKind::Swdiff => TailMetric::Swdiff,
        }
    }

    fn name(self) -> &'static str {
        match self {
            MetricKind::P => "p",
            MetricKind::Fair => "fair",
            MetricKind::Swdiff => "swdiff",
        }
    }
}

#[derive(Debug, Args)]
pub struct TailArgs {
    #[arg(long)]
    pub dataset: String,
    #[arg(long, value_enum)]
    pub metric: MetricKind,
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long)]
    pub alpha: String,
    #[arg(long)]
    pub threshold: f64,
    #[arg(long, default_value_t = 0)]
    pub trials: u64,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct QuantileArgs {
    #[arg(long)]
    pub dataset: String,
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long)]
    pub alpha: String,
    #[arg(long)]
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoundKind {
    PTail,
    KStar,
    DirectLower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Ctm,
    Spm,
}

impl FamilyArg {
    fn family(self) -> Family {
        match self {
            FamilyArg::Ctm => Family::Ctm,
            FamilyArg::Spm => Family::Spm,
        }
    }

    fn name(self) -> &'static str {
        match self {
            FamilyArg::Ctm => "ctm",
            FamilyArg::Spm => "spm",
        }
    }
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[arg(long, value_enum)]
    pub kind: BoundKind,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub d_co: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub a: String,
    #[arg(long)]
    pub b: String,
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long)]
    pub alpha: String,
}

#[derive(Debug, Args)]
pub struct CheckFamilyArgs {
    #[arg(long)]
    pub dataset: String,
    #[arg(long, value_enum)]
    pub family: FamilyArg,
    #[arg(long)]
    pub certificate: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CertificateArgs {
    #[arg(long)]
    pub dataset: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DatasetKind {
    Uniform,
    CtmWorst,
    SpmWorst,
}

#[derive(Debug, Args, Clone)]
pub struct ExperimentArgs {
    #[arg(long, value_enum, default_value_t = DatasetKind::Uniform)]
    pub dataset_kind: DatasetKind,
    /// Comma-separated dataset sizes.
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 2.0)]
    pub m: f64,
    #[arg(long, default_value_t = 0)]
    pub k: usize,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Comma-separated privacy budgets.
    #[arg(long, value_delimiter = ',')]
    pub epsilon: Vec<f64>,
    /// Widening radius, or `auto` for 1/(n*epsilon).
    #[arg(long, default_value = "auto")]
    pub alpha: String,
    /// Comma-separated metrics: p, fair, swdiff, fair-quantile.
    #[arg(long, value_delimiter = ',')]
    pub metric: Vec<String>,
    /// Comma-separated thresholds for the tail metrics.
    #[arg(long, value_delimiter = ',', default_values_t = Vec::<f64>::new())]
    pub threshold: Vec<f64>,
    /// Failure probability for the quantile metric.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub trials: u64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

fn resolve_seed(flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("DPFL_SEED") {
        Ok(v) => v
            .parse::<u64>()
            .map_err(|_| CliError::usage(format!("DPFL_SEED={v} is not a 64-bit integer"))),
        Err(_) => Ok(0),
    }
}

fn parse_alpha(raw: &str, n: usize, epsilon: f64) -> Result<WideningParam, CliError> {
    if raw == "auto" {
        return WideningParam::auto(n, epsilon).map_err(from_core);
    }
    let v: f64 = raw
        .parse()
        .map_err(|_| CliError::usage(format!("--alpha must be a number or 'auto', got {raw}")))?;
    WideningParam::new(v).map_err(from_core)
}

fn load_dataset(path: &str) -> Result<Dataset, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {path}: {e}")))?;
    Dataset::from_json(&text).map_err(from_core)
}

fn load_certificate(path: &str) -> Result<families::SinglePeakedDensity, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {path}: {e}")))?;
    families::SinglePeakedDensity::from_json(&text).map_err(from_core)
}

fn spec_for(d: &Dataset, epsilon: f64, alpha_raw: &str) -> Result<MechanismSpec, CliError> {
    let alpha = parse_alpha(alpha_raw, d.n(), epsilon)?;
    MechanismSpec::new(epsilon, alpha).map_err(from_core)
}

/// Parse and execute one invocation. Returns serialized stdout content.
pub fn run_command<I, S>(argv: I) -> Result<String, CliError>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| {
        let code = match e.kind() {
            ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion => 0,
            _ => EXIT_USAGE,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    })?;
    let format = cli.format;
    match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Metrics(args) => cmd_metrics(args, format),
        Command::Sample(args) => cmd_sample(args, format),
        Command::Tail(args) => cmd_tail(args, format),
        Command::Quantile(args) => cmd_quantile(args, format),
        Command::Bound(args) => cmd_bound(args, format),
        Command::AuditDp(args) => cmd_audit(args, format),
        Command::CheckFamily(args) => cmd_check_family(args, format),
        Command::Certificate(args) => cmd_certificate(args),
        Command::Experiment(args) => run_experiment(&args).map(|records| emit(&records, format)),
    }
}

fn pair_json(a: &Dataset, b: &Dataset) -> Result<String, CliError> {
    let d_co = change_one_distance(a, b).map_err(from_core)?;
    Ok(format!(
        "{{\"a\":{},\"b\":{},\"d_co\":{},\"median_a\":{},\"median_b\":{}}}\n",
        a.to_json(),
        b.to_json(),
        d_co,
        format_f64(a.median()),
        format_f64(b.median()),
    ))
}

fn cmd_gen(args: GenArgs) -> Result<String, CliError> {
    let need = |opt: Option<f64>, name: &str| {
        opt.ok_or_else(|| CliError::usage(format!("--{name} is required for this kind")))
    };
    match args.kind {
        GenKind::Uniform => {
            let d = families::evenly_spaced(args.n, args.m).map_err(from_core)?;
            Ok(format!("{}\n", d.to_json()))
        }
        GenKind::CtmWorst => {
            let d = families::ctm_worst(args.n, args.k, args.m).map_err(from_core)?;
            Ok(format!("{}\n", d.to_json()))
        }
        GenKind::SpmWorst => {
            let lambda = need(args.lambda, "lambda")?;
            let d = families::spm_worst(args.n, args.k, args.m, lambda).map_err(from_core)?;
            Ok(format!("{}\n", d.to_json()))
        }
        GenKind::ImpossibilityPair => {
            let (a, b) = families::impossibility_pair(args.n, args.m).map_err(from_core)?;
            pair_json(&a, &b)
        }
        GenKind::FairLbPair => {
            let gamma = need(args.gamma, "gamma")?;
            let (a, b) = families::fair_lb_pair(args.n, args.m, gamma).map_err(from_core)?;
            pair_json(&a, &b)
        }
        GenKind::SpmLbPair => {
            let lambda = need(args.lambda, "lambda")?;
            let (a, b) = families::spm_lb_pair(args.n, args.m, lambda).map_err(from_core)?;
            pair_json(&a, &b)
        }
    }
}

fn cmd_metrics(args: MetricsArgs, format: Format) -> Result<String, CliError> {
    let d = load_dataset(&args.dataset)?;
    let l = args.location;
    let record: Record = vec![
        ("n", Value::Int(d.n() as i64)),
        ("m", Value::Float(d.domain().diameter())),
        ("location", Value::Float(l)),
        (
            "optimal_location",
            Value::Float(metrics::optimal_location(&d)),
        ),
        (
            "social_welfare",
            Value::Float(metrics::social_welfare(&d, l).map_err(from_core)?),
        ),
        (
            "fair",
            Value::Float(metrics::fair(&d, l, EvalMode::Closed).map_err(from_core)?),
        ),
        (
            "swdiff",
            Value::Float(metrics::swdiff(&d, l, EvalMode::Closed).map_err(from_core)?),
        ),
        (
            "q",
            Value::Int(q_value(&d, l).map_err(from_core)? as i64),
        ),
        (
            "crossed",
            Value::Int(metrics::crossed_set(&d, l).map_err(from_core)?.len() as i64),
        ),
    ];
    Ok(emit(&[record], format))
}

fn cmd_sample(args: SampleArgs, format: Format) -> Result<String, CliError> {
    let d = load_dataset(&args.dataset)?;
    let spec = spec_for(&d, args.epsilon, &args.alpha)?;
    let seed = resolve_seed(args.seed)?;
    let density = build_output_density(&d, &spec).map_err(from_core)?;
    match format {
        Format::Json => {
            let samples: Vec<String> = (0..args.trials)
                .map(|i| format_f64(sample_location(&density, seed, i)))
                .collect();
            Ok(format!(
                "{{\"seed\":{seed},\"trials\":{},\"samples\":[{}]}}\n",
                args.trials,
                samples.join(",")
            ))
        }
        Format::Csv => {
            let records: Vec<Record> = (0..args.trials)
                .map(|i| {
                    vec![
                        ("trial_index", Value::Int(i as i64)),
                        (
                            "location",
                            Value::Float(sample_location(&density, seed, i)),
                        ),
                    ]
                })
                .collect();
            Ok(records_to_csv(&records))
        }
    }
}

fn mc_tail(
    d: &Dataset,
    spec: &MechanismSpec,
    metric: TailMetric,
    threshold: f64,
    trials: u64,
    seed: u64,
) -> Result<(f64, f64), CliError> {
    let density = build_output_density(d, spec).map_err(from_core)?;
    let t = metrics::optimal_location(d);
    let mut hits = 0u64;
    for i in 0..trials {
        let l = sample_location(&density, seed, i);
        let value = match metric {
            TailMetric::P => {
                dpfl_core::score::p_alpha_value(d, l, spec.alpha()).map_err(from_core)? as f64
            }
            TailMetric::Fair => (l - t).abs(),
            TailMetric::Swdiff => metrics::swdiff(d, l, EvalMode::Closed).map_err(from_core)?,
        };
        if value > threshold {
            hits += 1;
        }
    }
    let estimate = hits as f64 / trials as f64;
    let stderr = (estimate * (1.0 - estimate) / trials as f64).sqrt();
    Ok((estimate, stderr))
}

fn cmd_tail(args: TailArgs, format: Format) -> Result<String, CliError> {
    let d = load_dataset(&args.dataset)?;
    let spec = spec_for(&d, args.epsilon, &args.alpha)?;
    let metric = args.metric.tail_metric();
    let exact = exact_tail(&d, &spec, metric, args.threshold).map_err(from_core)?;
    let mut record: Record = vec![
        ("metric", Value::Str(args.metric.name().to_string())),
        ("threshold", Value::Float(args.threshold)),
        ("epsilon", Value::Float(args.epsilon)),
        ("alpha", Value::Float(spec.alpha().value())),
        ("exact", Value::Float(exact)),
    ];
    if args.trials > 0 {
        let seed = resolve_seed(args.seed)?;
        let (estimate, stderr) = mc_tail(&d, &spec, metric, args.threshold, args.trials, seed)?;
        record.push(("mc_estimate", Value::Float(estimate)));
        record.push(("mc_stderr", Value::Float(stderr)));
        record.push(("trials", Value::Int(args.trials as i64)));
        record.push(("seed", Value::Int(seed as i64)));
    } else {
        record.push(("mc_estimate", Value::Null));
        record.push(("mc_stderr", Value::Null));
        record.push(("trials", Value::Int(0)));
        record.push(("seed", Value::Null));
    }
    Ok(emit(&[record], format))
}

fn cmd_quantile(args: QuantileArgs, format: Format) -> Result<String, CliError> {
    let d = load_dataset(&args.dataset)?;
    let spec = spec_for(&d, args.epsilon, &args.alpha)?;
    let q = fair_quantile(&d, &spec, args.beta).map_err(from_core)?;
    let record: Record = vec![
        ("epsilon", Value::Float(args.epsilon)),
        ("alpha", Value::Float(spec.alpha().value())),
        ("beta", Value::Float(args.beta)),
        ("quantile", Value::Float(q)),
    ];
    Ok(emit(&[record], format))
}

fn cmd_bound(args: BoundArgs, format: Format) -> Result<String, CliError> {
    let record: Record = match args.kind {
        BoundKind::DirectLower => {
            let d_co = args
                .d_co
                .ok_or_else(|| CliError::usage("--d-co is required".to_string()))?;
            let value = bounds::direct_lower_bound(d_co, args.epsilon).map_err(from_core)?;
            vec![
                ("kind", Value::Str("direct-lower".to_string())),
                ("d_co", Value::Int(d_co as i64)),
                ("epsilon", Value::Float(args.epsilon)),
                ("value", Value::Float(value)),
                ("failure_floor", Value::Float(1.0 - value)),
            ]
        }
        BoundKind::PTail => {
            let n = args
                .n
                .ok_or_else(|| CliError::usage("--n is required".to_string()))?;
            let k = args
                .k
                .ok_or_else(|| CliError::usage("--k is required".to_string()))?;
            let family = args.family.unwrap_or(FamilyArg::Ctm);
            let alpha_raw = args
                .alpha
                .ok_or_else(|| CliError::usage("--alpha is required".to_string()))?;
            let alpha = parse_alpha(&alpha_raw, n, args.epsilon)?;
            let value = bounds::p_tail_upper(
                n,
                args.epsilon,
                alpha.value(),
                k,
                family.family(),
                args.lambda,
            )
            .map_err(from_core)?;
            vec![
                ("kind", Value::Str("p-tail".to_string())),
                ("n", Value::Int(n as i64)),
                ("epsilon", Value::Float(args.epsilon)),
                ("alpha", Value::Float(alpha.value())),
                ("k", Value::Int(k as i64)),
                ("family", Value::Str(family.name().to_string())),
                (
                    "lambda",
                    args.lambda.map_or(Value::Null, Value::Float),
                ),
                ("value", Value::Float(value)),
                ("capped", Value::Bool(value >= 1.0)),
            ]
        }
        BoundKind::KStar => {
            let n = args
                .n
                .ok_or_else(|| CliError::usage("--n is required".to_string()))?;
            let beta = args
                .beta
                .ok_or_else(|| CliError::usage("--beta is required".to_string()))?;
            let family = args.family.unwrap_or(FamilyArg::Ctm);
            let alpha_raw = args
                .alpha
                .ok_or_else(|| CliError::usage("--alpha is required".to_string()))?;
            let alpha = parse_alpha(&alpha_raw, n, args.epsilon)?;
            let ks = bounds::k_star(
                n,
                args.epsilon,
                alpha.value(),
                beta,
                family.family(),
                args.lambda,
            )
            .map_err(from_core)?;
            vec![
                ("kind", Value::Str("k-star".to_string())),
                ("n", Value::Int(n as i64)),
                ("epsilon", Value::Float(args.epsilon)),
                ("alpha", Value::Float(alpha.value())),
                ("beta", Value::Float(beta)),
                ("family", Value::Str(family.name().to_string())),
                (
                    "lambda",
                    args.lambda.map_or(Value::Null, Value::Float),
                ),
                ("k_star", Value::Int(ks.value as i64)),
                ("side_condition_ok", Value::Bool(ks.side_condition_ok)),
            ]
        }
    };
    Ok(emit(&[record], format))
}

fn cmd_audit(args: AuditArgs, format: Format) -> Result<String, CliError> {
    let a = load_dataset(&args.a)?;
    let b = load_dataset(&args.b)?;
    let spec = spec_for(&a, args.epsilon, &args.alpha)?;
    let ratio = bounds::audit_dp(&a, &b, &spec).map_err(from_core)?;
    let d_co = change_one_distance(&a, &b).map_err(from_core)?;
    let budget = d_co as f64 * args.epsilon;
    let record: Record = vec![
        ("epsilon", Value::Float(args.epsilon)),
        ("alpha", Value::Float(spec.alpha().value())),
        ("d_co", Value::Int(d_co as i64)),
        ("max_log_ratio", Value::Float(ratio)),
        ("budget", Value::Float(budget)),
        ("within_budget", Value::Bool(ratio <= budget + 1e-9)),
    ];
    Ok(emit(&[record], format))
}

fn cmd_check_family(args: CheckFamilyArgs, format: Format) -> Result<String, CliError> {
    let d = load_dataset(&args.dataset)?;
    let record: Record = match args.family {
        FamilyArg::Ctm => vec![
            ("family", Value::Str("ctm".to_string())),
            ("is_member", Value::Bool(families::is_ctm(&d))),
        ],
        FamilyArg::Spm => {
            let cert_path = args.certificate.ok_or_else(|| {
                CliError::usage("--certificate is required for the spm family".to_string())
            })?;
            let lambda = args.lambda.ok_or_else(|| {
                CliError::usage("--lambda is required for the spm family".to_string())
            })?;
            let cert = load_certificate(&cert_path)?;
            let certified =
                families::verify_spm_certificate(&d, &cert, lambda).map_err(from_core)?;
            let ks = families::ks_distance(&d, &cert).map_err(from_core)?;
            vec![
                ("family", Value::Str("spm".to_string())),
                ("lambda", Value::Float(lambda)),
                ("ks_distance", Value::Float(ks)),
                ("certified", Value::Bool(certified)),
            ]
        }
    };
    Ok(emit(&[record], format))
}

fn cmd_certificate(args: CertificateArgs) -> Result<String, CliError> {
    let d = load_dataset(&args.dataset)?;
    let cert = families::ctm_certificate(&d).map_err(from_core)?;
    Ok(format!("{}\n", cert.to_json()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CellMetric {
    Tail(MetricKind),
    FairQuantile,
}

impl CellMetric {
    fn name(self) -> &'static str {
        match self {
            CellMetric::Tail(m) => m.name(),
            CellMetric::FairQuantile => "fair-quantile",
        }
    }
}

fn parse_metric(raw: &str) -> Result<CellMetric, CliError> {
    match raw {
        "p" => Ok(CellMetric::Tail(MetricKind::P)),
        "fair" => Ok(CellMetric::Tail(MetricKind::Fair)),
        "swdiff" => Ok(CellMetric::Tail(MetricKind::Swdiff)),
        "fair-quantile" => Ok(CellMetric::FairQuantile),
        other => Err(CliError::usage(format!("unknown metric {other}"))),
    }
}

fn experiment_dataset(args: &ExperimentArgs, n: usize) -> Result<Dataset, CliError> {
    match args.dataset_kind {
        DatasetKind::Uniform => families::evenly_spaced(n, args.m).map_err(from_core),
        DatasetKind::CtmWorst => families::ctm_worst(n, args.k, args.m).map_err(from_core),
        DatasetKind::SpmWorst => {
            let lambda = args.lambda.ok_or_else(|| {
                CliError::usage("--lambda is required for spm-worst".to_string())
            })?;
            families::spm_worst(n, args.k, args.m, lambda).map_err(from_core)
        }
    }
}

/// Per-trial metric values for one cell, split across `workers` threads in
/// contiguous trial ranges. The result depends only on `(seed, cell)` and
/// the trial index, never on the schedule.
fn cell_samples(
    d: &Dataset,
    spec: &MechanismSpec,
    metric: CellMetric,
    cell_seed: u64,
    trials: u64,
    workers: usize,
) -> Result<Vec<f64>, CliError> {
    let density = build_output_density(d, spec).map_err(from_core)?;
    let t = metrics::optimal_location(d);
    let workers = workers.max(1).min(trials.max(1) as usize);
    let chunk = trials.div_ceil(workers as u64);
    let mut values = Vec::with_capacity(trials as usize);
    let chunks: Vec<Vec<f64>> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for w in 0..workers as u64 {
            let lo = w * chunk;
            let hi = ((w + 1) * chunk).min(trials);
            let density = &density;
            let d = &d;
            let spec = &spec;
            handles.push(scope.spawn(move || -> Vec<f64> {
                (lo..hi)
                    .map(|i| {
                        let l = sample_location(density, cell_seed, i);
                        match metric {
                            CellMetric::Tail(MetricKind::P) => {
                                dpfl_core::score::p_alpha_value(d, l, spec.alpha())
                                    .expect("sample lies in V")
                                    as f64
                            }
                            CellMetric::Tail(MetricKind::Fair)
                            | CellMetric::FairQuantile => (l - t).abs(),
                            CellMetric::Tail(MetricKind::Swdiff) => {
                                metrics::swdiff(d, l, EvalMode::Closed)
                                    .expect("sample lies in V")
                            }
                        }
                    })
                    .collect()
            }));
        }
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    for c in chunks {
        values.extend(c);
    }
    Ok(values)
}

/// Sweep the configured grid and emit one record per cell.
pub fn run_experiment(args: &ExperimentArgs) -> Result<Vec<Record>, CliError> {
    if args.n.is_empty() || args.epsilon.is_empty() || args.metric.is_empty() {
        return Err(CliError::usage(
            "--n, --epsilon and --metric must each list at least one value".to_string(),
        ));
    }
    let metrics_parsed: Vec<CellMetric> = args
        .metric
        .iter()
        .map(|m| parse_metric(m))
        .collect::<Result<_, _>>()?;
    for metric in &metrics_parsed {
        match metric {
            CellMetric::Tail(_) if args.threshold.is_empty() => {
                return Err(CliError::usage(
                    "--threshold is required for tail metrics".to_string(),
                ));
            }
            CellMetric::FairQuantile if args.beta.is_none() => {
                return Err(CliError::usage(
                    "--beta is required for the fair-quantile metric".to_string(),
                ));
            }
            _ => {}
        }
    }
    let seed = resolve_seed(args.seed)?;
    let family = match args.dataset_kind {
        DatasetKind::SpmWorst => Family::Spm,
        _ => Family::Ctm,
    };

    let mut records = Vec::new();
    let mut cell_id: u64 = 0;
    for &n in &args.n {
        let d = experiment_dataset(args, n)?;
        for &epsilon in &args.epsilon {
            let alpha = parse_alpha(&args.alpha, n, epsilon)?;
            let spec = MechanismSpec::new(epsilon, alpha).map_err(from_core)?;
            for &metric in &metrics_parsed {
                let thresholds: Vec<Option<f64>> = match metric {
                    CellMetric::Tail(_) => args.threshold.iter().map(|&t| Some(t)).collect(),
                    CellMetric::FairQuantile => vec![None],
                };
                for threshold in thresholds {
                    let exact = match metric {
                        CellMetric::Tail(kind) => exact_tail(
                            &d,
                            &spec,
                            kind.tail_metric(),
                            threshold.unwrap(),
                        )
                        .map_err(from_core)?,
                        CellMetric::FairQuantile => {
                            fair_quantile(&d, &spec, args.beta.unwrap()).map_err(from_core)?
                        }
                    };
                    let bound = match metric {
                        CellMetric::Tail(MetricKind::P) => {
                            let thr = threshold.unwrap();
                            let k = thr.round();
                            if (thr - k).abs() < 1e-12
                                && k >= 0.0
                                && (k as usize) < n / 2
                            {
                                bounds::p_tail_upper(
                                    n,
                                    epsilon,
                                    alpha.value(),
                                    k as usize,
                                    family,
                                    args.lambda,
                                )
                                .ok()
                                .map_or(Value::Null, Value::Float)
                            } else {
                                Value::Null
                            }
                        }
                        _ => Value::Null,
                    };
                    let (mc_estimate, mc_stderr) = if args.trials > 0 {
                        let cell_seed = derive_seed(seed, cell_id);
                        let values = cell_samples(
                            &d,
                            &spec,
                            metric,
                            cell_seed,
                            args.trials,
                            args.workers,
                        )?;
                        match metric {
                            CellMetric::Tail(_) => {
                                let thr = threshold.unwrap();
                                let hits =
                                    values.iter().filter(|&&v| v > thr).count() as f64;
                                let est = hits / args.trials as f64;
                                let se =
                                    (est * (1.0 - est) / args.trials as f64).sqrt();
                                (Value::Float(est), Value::Float(se))
                            }
                            CellMetric::FairQuantile => {
                                let mut sorted = values;
                                sorted.sort_by(f64::total_cmp);
                                let beta = args.beta.unwrap();
                                let rank = ((1.0 - beta) * args.trials as f64).ceil()
                                    as usize;
                                let rank = rank.clamp(1, sorted.len());
                                (Value::Float(sorted[rank - 1]), Value::Null)
                            }
                        }
                    } else {
                        (Value::Null, Value::Null)
                    };
                    records.push(vec![
                        ("cell_id", Value::Int(cell_id as i64)),
                        ("n", Value::Int(n as i64)),
                        ("m", Value::Float(args.m)),
                        ("epsilon", Value::Float(epsilon)),
                        ("alpha", Value::Float(alpha.value())),
                        ("beta", args.beta.map_or(Value::Null, Value::Float)),
                        ("lambda", args.lambda.map_or(Value::Null, Value::Float)),
                        ("metric", Value::Str(metric.name().to_string())),
                        (
                            "threshold",
                            threshold.map_or(Value::Null, Value::Float),
                        ),
                        ("exact", Value::Float(exact)),
                        ("mc_estimate", mc_estimate),
                        ("mc_stderr", mc_stderr),
                        ("bound", bound),
                    ]);
                    cell_id += 1;
                }
            }
        }
    }
    Ok(records)
}
