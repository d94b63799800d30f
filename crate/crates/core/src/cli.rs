//! Command-line pipeline. Every stage reads and writes files, so any step
//! can be re-run from the artifacts of the previous one.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baselines::{permutation_importance, ErrorMetric, PermutationResult, DEFAULT_REPEATS};
use crate::classic::{summarize, DEFAULT_EPS_REL};
use crate::data::{standardize, Dataset};
use crate::error::{Error, Result};
use crate::io::{load_dataset, load_jacobian, write_dataset_csv, write_jacobian_csv, write_jacobian_json};
use crate::mlp::{dataset_jacobian, r_squared, train, Activation, MlpModel, Optimizer, TrainConfig};
use crate::oracle::verify_sweep;
use crate::predictor::Predictor;
use crate::report::{
    diagnose, emit_report, render_alpha_curves, render_sensitivity_plots, ClassicDocument, CurvesDocument,
    DEFAULT_FLAT_TOL, DEFAULT_IRREL_TOL,
};
use crate::sensitivity::{alpha_curves, name_curves, AlphaGrid};
use crate::synthetic::{analytic_jacobian, gen_normal_inputs, named_function, shapley_table, ShapleyTable};

pub const THREADS_ENV: &str = "ALPHASENS_THREADS";

#[derive(Debug, Parser)]
#[command(name = "alphasens", version, about = "Metric sensitivity analysis for differentiable models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the cubic-root dataset and its analytic Jacobian
    Synth(SynthArgs),
    /// Fit an MLP surrogate on a CSV dataset
    Train(TrainArgs),
    /// Input Jacobian of a model over a dataset
    Jacobian(JacobianArgs),
    /// Alpha-curves and their diagnostics
    Curves(CurvesArgs),
    /// Mean / sd / rms derivative summaries
    Classic(ClassicArgs),
    /// Permutation importance
    Permute(PermuteArgs),
    /// Exact Shapley values of an additive function
    Shapley(ShapleyArgs),
    /// Combined JSON + Markdown report
    Report(ReportArgs),
    /// Check closed-form sensitivities against the brute-force oracle
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 50_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "cubic-root")]
    function: String,
    /// Output directory; receives data.csv and jacobian.csv
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    target: String,
    /// Hidden layer widths, comma separated
    #[arg(long, value_delimiter = ',', default_value = "32")]
    hidden: Vec<usize>,
    #[arg(long, default_value = "tanh")]
    activation: String,
    #[arg(long, default_value_t = 60)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 3e-3)]
    lr: f64,
    #[arg(long, default_value = "adam")]
    optimizer: String,
    /// Fraction of rows held out for the reported test R²
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct JacobianArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// `.json` writes the nested document, anything else scalar-output CSV
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CurvesArgs {
    #[arg(long)]
    jac: PathBuf,
    /// `lo:hi:geomK`, a comma list, or `default`
    #[arg(long, default_value = "default")]
    alphas: String,
    #[arg(long, default_value_t = 0)]
    output: usize,
    #[arg(long, default_value_t = DEFAULT_FLAT_TOL)]
    flat_tol: f64,
    #[arg(long, default_value_t = DEFAULT_IRREL_TOL)]
    irrel_tol: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ClassicArgs {
    #[arg(long)]
    jac: PathBuf,
    #[arg(long, default_value_t = DEFAULT_EPS_REL)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    output: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PermuteArgs {
    #[arg(long, conflicts_with = "function", required_unless_present = "function")]
    model: Option<PathBuf>,
    /// Named additive function used as the predictor
    #[arg(long)]
    function: Option<String>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    target: String,
    #[arg(long, default_value_t = DEFAULT_REPEATS)]
    repeats: usize,
    #[arg(long, default_value = "mse")]
    metric: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON output; a CSV with the same stem is written alongside
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ShapleyArgs {
    #[arg(long)]
    function: String,
    #[arg(long)]
    data: PathBuf,
    /// Column to drop from the features, if the CSV has one
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    curves: PathBuf,
    #[arg(long)]
    classic: PathBuf,
    #[arg(long)]
    perm: Option<PathBuf>,
    #[arg(long)]
    shap: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_FLAT_TOL)]
    flat_tol: f64,
    #[arg(long, default_value_t = DEFAULT_IRREL_TOL)]
    irrel_tol: f64,
    /// Markdown output; the JSON report goes next to it with a `.json` extension
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    instances: usize,
    /// Optional JSON copy of the table
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code: 0 success, 1 invalid input, 2 numerical
/// failure.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let pool = match thread_pool() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    match pool.install(|| execute(cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::InvalidArgument(format!("{THREADS_ENV} must be a non-negative integer, got `{v}`")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train_cmd(a),
        Command::Jacobian(a) => jacobian(a),
        Command::Curves(a) => curves(a),
        Command::Classic(a) => classic(a),
        Command::Permute(a) => permute(a),
        Command::Shapley(a) => shapley(a),
        Command::Report(a) => report(a),
        Command::Verify(a) => verify(a),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::schema(path.display().to_string(), e.to_string()))
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn synth(a: SynthArgs) -> Result<()> {
    let fun = named_function(&a.function)?;
    let inputs = gen_normal_inputs(a.n, fun.n_features(), a.seed)?;
    let data = fun.label(&inputs, "Y")?;
    let jac = analytic_jacobian(&fun, &data)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let mut buf = Vec::new();
    write_dataset_csv(&mut buf, &data)?;
    write_file(&a.out.join("data.csv"), &buf)?;
    buf.clear();
    write_jacobian_csv(&mut buf, &jac, data.feature_names())?;
    write_file(&a.out.join("jacobian.csv"), &buf)?;
    Ok(())
}

/// Seeded split into (train, test) row indices.
pub fn train_test_split(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::InvalidArgument(format!("test fraction must lie in [0, 1), got {test_fraction}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (n as f64 * test_fraction).round() as usize;
    if n - n_test == 0 {
        return Err(Error::InvalidArgument("no rows left for training".into()));
    }
    let test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    train.sort_unstable();
    let mut test = test;
    test.sort_unstable();
    Ok((train, test))
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let activation: Activation = a.activation.parse()?;
    let optimizer: Optimizer = a.optimizer.parse()?;
    let data = load_dataset(&a.data, Some(&a.target))?;
    let (train_idx, test_idx) = train_test_split(data.n_samples(), a.test_fraction, a.seed)?;
    let train_raw = data.select_rows(&train_idx);
    let (train_set, params) = standardize(&train_raw)?;
    let mut sizes = vec![data.n_features()];
    sizes.extend(&a.hidden);
    sizes.push(1);
    let init = MlpModel::new_random(&sizes, activation, a.seed)?;
    let config =
        TrainConfig { epochs: a.epochs, batch_size: a.batch_size, learning_rate: a.lr, optimizer, seed: a.seed };
    let (model, trace) = train(&init, &train_set, &config)?;
    let train_pred = model.predict(train_set.features());
    let train_r2 = r_squared(&train_pred, &train_set.target().expect("target").to_vec());
    let mut summary = format!("train_mse={:.6e} train_r2={train_r2:.6}", trace.last().copied().unwrap_or(f64::NAN));
    if !test_idx.is_empty() {
        let test_set = params.apply(&data.select_rows(&test_idx))?;
        let pred = model.predict(test_set.features());
        let r2 = r_squared(&pred, &test_set.target().expect("target").to_vec());
        summary.push_str(&format!(" test_r2={r2:.6}"));
    }
    let model = model.with_preprocessing(params);
    write_file(&a.out, model.to_json().as_bytes())?;
    println!("{summary}");
    Ok(())
}

fn load_model(path: &Path) -> Result<MlpModel> {
    MlpModel::from_json(&read_text(path)?).map_err(|e| match e {
        Error::SchemaError { path: p, message } => {
            Error::SchemaError { path: format!("{}: {p}", path.display()), message }
        }
        other => other,
    })
}

/// Loads `path` and brings it into the model's input space: picks the
/// model's feature columns by name and applies its preprocessing.
fn model_view(model: &MlpModel, path: &Path, target: Option<&str>) -> Result<Dataset> {
    let data = load_dataset(path, target)?;
    match model.preprocessing() {
        Some(p) => p.apply(&data.select_features(&p.feature_names)?),
        None => Ok(data),
    }
}

fn jacobian(a: JacobianArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let data = model_view(&model, &a.data, None)?;
    let jac = dataset_jacobian(&model, &data)?;
    let mut buf = Vec::new();
    if a.out.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        write_jacobian_json(&mut buf, &jac, Some(data.feature_names()))?;
        buf.push(b'\n');
    } else {
        write_jacobian_csv(&mut buf, &jac, data.feature_names())?;
    }
    write_file(&a.out, &buf)
}

fn curves(a: CurvesArgs) -> Result<()> {
    let grid: AlphaGrid = a.alphas.parse()?;
    let (jac, names) = load_jacobian(&a.jac)?;
    let mut curves = alpha_curves(&jac, a.output, &grid)?;
    name_curves(&mut curves, &names);
    let diagnostics = diagnose(&curves, a.flat_tol, a.irrel_tol)?;
    if let Some(svg) = &a.svg {
        write_file(svg, render_alpha_curves(&curves, &diagnostics)?.as_bytes())?;
    }
    let doc = CurvesDocument {
        output: a.output,
        grid: grid.alphas().to_vec(),
        include_infinity: grid.include_infinity(),
        curves,
        diagnostics,
    };
    write_file(&a.out, &to_json(&doc)?)
}

fn classic(a: ClassicArgs) -> Result<()> {
    let (jac, names) = load_jacobian(&a.jac)?;
    let mut summaries = summarize(&jac, a.output, a.eps)?;
    for s in &mut summaries {
        s.name = names.get(s.variable).cloned();
    }
    if let Some(svg) = &a.svg {
        write_file(svg, render_sensitivity_plots(&summaries)?.as_bytes())?;
    }
    let doc = ClassicDocument { output: a.output, eps_rel: a.eps, summaries };
    write_file(&a.out, &to_json(&doc)?)
}

fn permute(a: PermuteArgs) -> Result<()> {
    let metric: ErrorMetric = a.metric.parse()?;
    let result: PermutationResult = match (&a.model, &a.function) {
        (Some(path), _) => {
            let model = load_model(path)?;
            let data = model_view(&model, &a.data, Some(&a.target))?;
            permutation_importance(&model, &data, metric, a.repeats, a.seed)?
        }
        (None, Some(name)) => {
            let fun = named_function(name)?;
            let data = load_dataset(&a.data, Some(&a.target))?;
            permutation_importance(&fun, &data, metric, a.repeats, a.seed)?
        }
        (None, None) => return Err(Error::InvalidArgument("one of --model or --function is required".into())),
    };
    write_file(&a.out, &to_json(&result)?)?;
    write_file(&a.out.with_extension("csv"), result.to_csv()?.as_bytes())
}

fn shapley(a: ShapleyArgs) -> Result<()> {
    let fun = named_function(&a.function)?;
    let data = load_dataset(&a.data, a.target.as_deref())?;
    let table = shapley_table(&fun, &data, &a.function)?;
    write_file(&a.out, &to_json(&table)?)
}

fn report(a: ReportArgs) -> Result<()> {
    let curves: CurvesDocument = read_json(&a.curves)?;
    let classic: ClassicDocument = read_json(&a.classic)?;
    let perm: Option<PermutationResult> = a.perm.as_deref().map(read_json).transpose()?;
    let shap: Option<ShapleyTable> = a.shap.as_deref().map(read_json).transpose()?;
    let diagnostics = diagnose(&curves.curves, a.flat_tol, a.irrel_tol)?;
    let pair = emit_report(&curves.curves, &diagnostics, &classic.summaries, perm.as_ref(), shap.as_ref())?;
    write_file(&a.out, pair.markdown.as_bytes())?;
    write_file(&a.out.with_extension("json"), pair.json.as_bytes())
}

fn verify(a: VerifyArgs) -> Result<()> {
    let report = verify_sweep(a.seed, a.instances)?;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(
        out,
        "{:>4} {:>4} {:>10} {:>12} {:>12} {:>12}  result",
        "p", "q", "instances", "shortfall", "excess", "identity"
    );
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{:>4} {:>4} {:>10} {:>12.3e} {:>12.3e} {:>12}  {}",
            r.p,
            r.q,
            r.instances,
            r.max_shortfall,
            r.max_excess,
            r.max_identity_error.map_or("-".to_string(), |c| format!("{c:.3e}")),
            if r.passed { "PASS" } else { "FAIL" }
        );
    }
    if let Some(path) = &a.out {
        write_file(path, &to_json(&report)?)?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Error::OracleMismatch(report.rows.iter().filter(|r| !r.passed).count()))
    }
}
