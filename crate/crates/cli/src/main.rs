use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tabwm_core::detection::{detect_with, DetectOptions, DetectionMode, DetectionReport};
use tabwm_core::embedding::{embed_table, ColumnPlan, NumericTable, WatermarkKey};
use tabwm_core::fidelity::fidelity_report;
use tabwm_core::harness::{run_experiment, ExperimentConfig, Scale, Scenario};
use tabwm_core::rng::derive_seed;
use tabwm_core::robustness::{
    additive_noise_attack, targeted_flip_attack, AttackSpec, RobustnessBound, Selection,
};
use tabwm_core::smoothness::{select_columns, ColumnSelection, SmoothnessConfig};
use tabwm_core::tableio::{
    read_document, read_key, read_table, to_document_string, write_document, write_key,
    write_table, CsvTable, RunMetadata,
};
use tabwm_core::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_NOT_WATERMARKED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "tabwm",
    version,
    about = "Green-list watermarking for numeric CSV tables"
)]
struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true, env = "TABWM_THREADS")]
    threads: Option<usize>,

    /// Write a JSON record of the command, seeds and thread count here.
    #[arg(long, global = true)]
    metadata: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a watermark key for a CSV table.
    Keygen(KeygenArgs),
    /// Watermark a CSV table.
    Embed(EmbedArgs),
    /// Test a CSV table for a watermark. Exits 3 when none is found.
    Detect(DetectArgs),
    /// Perturb a CSV table.
    Attack(AttackArgs),
    /// Compare a watermarked table with its original.
    Fidelity(FidelityArgs),
    /// Screen columns for smoothness and pick m per column.
    Filter(FilterArgs),
    /// Print robustness bounds for an n x p table.
    Bounds(BoundsArgs),
    /// Run a synthetic experiment and write its results as CSV.
    Simulate(SimulateArgs),
}

#[derive(Clone, Debug, PartialEq)]
enum Auto<T> {
    Auto,
    Value(T),
}

fn parse_m(s: &str) -> Result<Auto<usize>, String> {
    if s == "auto" {
        return Ok(Auto::Auto);
    }
    match usize::from_str(s) {
        Ok(0) => Err("m must be at least 1".into()),
        Ok(m) => Ok(Auto::Value(m)),
        Err(e) => Err(format!("expected a positive integer or `auto`: {e}")),
    }
}

fn parse_columns(s: &str) -> Result<Auto<Vec<String>>, String> {
    if s == "auto" {
        return Ok(Auto::Auto);
    }
    let names: Vec<String> = s.split(',').map(|c| c.trim().to_owned()).collect();
    if names.iter().any(String::is_empty) {
        return Err("empty column name".into());
    }
    Ok(Auto::Value(names))
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    let a = f64::from_str(s).map_err(|e| e.to_string())?;
    if a > 0.0 && a < 1.0 {
        Ok(a)
    } else {
        Err("alpha must lie in (0, 1)".into())
    }
}

fn parse_proportion(s: &str) -> Result<f64, String> {
    let a = f64::from_str(s).map_err(|e| e.to_string())?;
    if (0.0..=1.0).contains(&a) {
        Ok(a)
    } else {
        Err("proportion must lie in [0, 1]".into())
    }
}

fn parse_nonneg(s: &str) -> Result<f64, String> {
    let a = f64::from_str(s).map_err(|e| e.to_string())?;
    if a.is_finite() && a >= 0.0 {
        Ok(a)
    } else {
        Err("must be finite and >= 0".into())
    }
}

#[derive(Args)]
struct KeygenArgs {
    #[arg(long)]
    input: PathBuf,
    /// Comma-separated column names, or `auto` to keep the smooth columns.
    #[arg(long, default_value = "auto", value_parser = parse_columns)]
    columns: Auto<Vec<String>>,
    /// Interval pairs per column, or `auto` to pick it per column.
    #[arg(long, default_value = "1000", value_parser = parse_m)]
    m: Auto<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Store no normalizer; intervals then apply to raw values.
    #[arg(long)]
    raw: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, required_unless_present = "key_from_selection")]
    key: Option<PathBuf>,
    /// Draw a fresh key from a `filter` selection instead of reading one.
    #[arg(long, conflicts_with = "key", requires = "key_out")]
    key_from_selection: Option<PathBuf>,
    /// Where to save the key drawn with `--key-from-selection`.
    #[arg(long)]
    key_out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Keyed,
    AllColumns,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    key: PathBuf,
    /// Significance level; defaults to the key's.
    #[arg(long, value_parser = parse_alpha)]
    alpha: Option<f64>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    #[arg(long, value_enum, default_value = "keyed")]
    mode: ModeArg,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum KindArg {
    Additive,
    TargetedFlip,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "additive")]
    kind: KindArg,
    /// Noise standard deviation.
    #[arg(long, value_parser = parse_nonneg, conflicts_with = "variance")]
    noise_std: Option<f64>,
    /// Noise variance.
    #[arg(long, value_parser = parse_nonneg)]
    variance: Option<f64>,
    /// Scale the noise by each column's standard deviation.
    #[arg(long)]
    relative: bool,
    #[arg(long, default_value = "1", value_parser = parse_proportion)]
    proportion: f64,
    /// Perturb exactly round(proportion * n) entries per column.
    #[arg(long)]
    fixed_count: bool,
    /// Key of the watermarked table (targeted flips only).
    #[arg(long)]
    key: Option<PathBuf>,
    /// Comma-separated flips per key column (targeted flips only).
    #[arg(long, value_delimiter = ',')]
    flip_counts: Vec<u64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FidelityArgs {
    #[arg(long)]
    original: PathBuf,
    #[arg(long)]
    watermarked: PathBuf,
    #[arg(long)]
    key: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "0.01")]
    delta: f64,
    #[arg(long, default_value = "5")]
    repeats: usize,
    #[arg(long, default_value = "0.1")]
    reject_fraction: f64,
    /// Comma-separated m values to try.
    #[arg(long, value_delimiter = ',')]
    m_grid: Vec<usize>,
    /// Selection output; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    p: u64,
    #[arg(long, default_value = "0.005", value_parser = parse_alpha)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    SingleColumn,
    AllColumns,
    AttackGrid,
    HighDim,
    Independence,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::SingleColumn => Scenario::SingleColumn,
            ScenarioArg::AllColumns => Scenario::AllColumns,
            ScenarioArg::AttackGrid => Scenario::AttackGrid,
            ScenarioArg::HighDim => Scenario::HighDim,
            ScenarioArg::Independence => Scenario::Independence,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    Full,
    Ci,
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment config (JSON). Its scenario wins over `--scenario`.
    #[arg(long, required_unless_present = "scenario")]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    scenario: Option<ScenarioArg>,
    #[arg(long, value_enum, default_value = "full")]
    scale: ScaleArg,
    /// Override the number of trials per cell.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Exit code on success; errors exit with 1.
type CmdResult = Result<u8, Error>;

fn io_failure(path: &Path, source: io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

struct Context {
    metadata: RunMetadata,
}

impl Context {
    fn seed(&mut self, name: &str, given: Option<u64>) -> u64 {
        let seed = given.unwrap_or_else(|| {
            let s = rand::random::<u64>();
            eprintln!("{name} seed: {s}");
            s
        });
        self.metadata.seeds.insert(name.to_owned(), seed);
        seed
    }
}

fn require_numeric(csv: &CsvTable, path: &Path) -> Result<(), Error> {
    if csv.numeric.n_cols() == 0 {
        return Err(Error::Schema(format!(
            "{}: no numeric columns",
            path.display()
        )));
    }
    Ok(())
}

fn keygen(ctx: &mut Context, args: &KeygenArgs) -> CmdResult {
    let csv = read_table(&args.input)?;
    require_numeric(&csv, &args.input)?;
    let seed = ctx.seed("keygen", args.seed);
    let table = &csv.numeric;
    let needs_selection = args.columns == Auto::Auto || args.m == Auto::Auto;
    let selection = if needs_selection {
        Some(select_columns(
            table,
            &SmoothnessConfig::default(),
            derive_seed(seed, &[1]),
        )?)
    } else {
        None
    };
    let names: Vec<String> = match &args.columns {
        Auto::Value(names) => {
            for name in names {
                if table.column_index(name).is_none() {
                    return Err(Error::Schema(format!("unknown column `{name}`")));
                }
            }
            names.clone()
        }
        Auto::Auto => {
            let sel = selection
                .as_ref()
                .expect("selection computed for auto columns");
            for r in &sel.rejected {
                eprintln!("skipping non-smooth column `{}`", r.name);
            }
            sel.kept.iter().map(|c| c.name.clone()).collect()
        }
    };
    if names.is_empty() {
        return Err(Error::Schema("no columns to watermark".into()));
    }
    let mut plan = Vec::with_capacity(names.len());
    for name in names {
        let m = match args.m {
            Auto::Value(m) => m,
            Auto::Auto => {
                let sel = selection.as_ref().expect("selection computed for auto m");
                match sel.kept.iter().find(|c| c.name == name) {
                    Some(c) => c.m,
                    None => {
                        return Err(Error::Schema(format!(
                            "column `{name}` failed the smoothness screen; pass --m explicitly"
                        )))
                    }
                }
            }
        };
        plan.push(ColumnPlan { name, m });
    }
    let key = WatermarkKey::generate(table, &plan, derive_seed(seed, &[0]), !args.raw)?;
    write_key(&key, &args.out)?;
    Ok(0)
}

fn embed(ctx: &mut Context, args: &EmbedArgs) -> CmdResult {
    let csv = read_table(&args.input)?;
    let seed = ctx.seed("embed", args.seed);
    let key = match (&args.key, &args.key_from_selection) {
        (Some(path), _) => read_key(path)?,
        (None, Some(path)) => {
            let selection: ColumnSelection = read_document(path)?;
            let key_seed = derive_seed(seed, &[0]);
            let key = WatermarkKey::generate(&csv.numeric, &selection.plan(), key_seed, true)?;
            let out = args.key_out.as_ref().expect("clap requires --key-out");
            write_key(&key, out)?;
            key
        }
        (None, None) => unreachable!("clap requires a key source"),
    };
    let marked = embed_table(&csv.numeric, &key, derive_seed(seed, &[1]))?;
    write_table(&marked, &csv.passthrough, &args.out)?;
    if !key.columns.is_empty() {
        let report = fidelity_report(&csv.numeric, &marked, &key)?;
        println!("linf {} (bound {})", report.linf, report.linf_bound);
        for c in &report.per_column_w1 {
            println!("w1 {} {}", c.column_name, c.w1);
        }
    }
    Ok(0)
}

fn print_detection(report: &DetectionReport, format: Format) -> Result<(), Error> {
    match format {
        Format::Json => print!("{}", to_document_string(report)?),
        Format::Text => {
            println!(
                "{:<24} {:>10} {:>10} {:>12} {:>14}",
                "column", "n", "green", "z", "p_value"
            );
            for c in &report.per_column {
                println!(
                    "{:<24} {:>10} {:>10} {:>12.4} {:>14.6e}",
                    c.column_name, c.n, c.green_count, c.z, c.binomial_p_value
                );
            }
            println!(
                "chi-square {:.4} on {} df, p-value {:.6e}, alpha {}",
                report.chi_square_stat, report.degrees, report.global_p_value, report.alpha
            );
            println!(
                "decision: {}",
                if report.is_watermarked() {
                    "watermarked"
                } else {
                    "not watermarked"
                }
            );
        }
    }
    Ok(())
}

fn detect_cmd(args: &DetectArgs) -> CmdResult {
    let csv = read_table(&args.input)?;
    let key = read_key(&args.key)?;
    let options = DetectOptions {
        mode: match args.mode {
            ModeArg::Keyed => DetectionMode::Keyed,
            ModeArg::AllColumns => DetectionMode::AllColumns,
        },
        ..Default::default()
    };
    let report = detect_with(
        &csv.numeric,
        &key,
        args.alpha.unwrap_or(key.alpha_default),
        &options,
    )?;
    print_detection(&report, args.format)?;
    Ok(if report.is_watermarked() {
        0
    } else {
        EXIT_NOT_WATERMARKED
    })
}

fn attack(ctx: &mut Context, args: &AttackArgs) -> CmdResult {
    let csv = read_table(&args.input)?;
    let seed = ctx.seed("attack", args.seed);
    let attacked: NumericTable = match args.kind {
        KindArg::Additive => {
            let noise_std = match (args.noise_std, args.variance) {
                (Some(s), _) => s,
                (None, Some(v)) => v.sqrt(),
                (None, None) => 0.0,
            };
            let spec = AttackSpec {
                relative: args.relative,
                selection: if args.fixed_count {
                    Selection::FixedCount
                } else {
                    Selection::Bernoulli
                },
                ..AttackSpec::additive(noise_std, args.proportion, seed)
            };
            additive_noise_attack(&csv.numeric, &spec)?
        }
        KindArg::TargetedFlip => {
            let Some(key_path) = &args.key else {
                return Err(Error::Schema("targeted flips need --key".into()));
            };
            let key = read_key(key_path)?;
            targeted_flip_attack(&csv.numeric, &key, &args.flip_counts, seed)?
        }
    };
    write_table(&attacked, &csv.passthrough, &args.out)?;
    Ok(0)
}

fn fidelity(args: &FidelityArgs) -> CmdResult {
    let original = read_table(&args.original)?;
    let marked = read_table(&args.watermarked)?;
    let key = read_key(&args.key)?;
    let report = fidelity_report(&original.numeric, &marked.numeric, &key)?;
    match args.format {
        Format::Json => print!("{}", to_document_string(&report)?),
        Format::Text => {
            println!("linf {} (bound {})", report.linf, report.linf_bound);
            for c in &report.per_column_w1 {
                println!("w1 {} {}", c.column_name, c.w1);
            }
            println!(
                "row-paired w1 {} (bound {})",
                report.row_paired_w1, report.multivariate_w1_bound
            );
            if let Some(d) = report.max_corr_diff {
                println!("max correlation change {d}");
            }
        }
    }
    Ok(0)
}

fn filter(ctx: &mut Context, args: &FilterArgs) -> CmdResult {
    let csv = read_table(&args.input)?;
    let seed = ctx.seed("filter", args.seed);
    let mut cfg = SmoothnessConfig {
        delta: args.delta,
        repeats: args.repeats,
        reject_fraction: args.reject_fraction,
        ..Default::default()
    };
    if !args.m_grid.is_empty() {
        cfg.m_grid = args.m_grid.clone();
    }
    let selection = select_columns(&csv.numeric, &cfg, seed)?;
    match &args.out {
        Some(path) => write_document(&selection, path)?,
        None => print!("{}", to_document_string(&selection)?),
    }
    Ok(0)
}

fn bounds(args: &BoundsArgs) -> CmdResult {
    let b = RobustnessBound::compute(args.n, args.p, args.alpha)?;
    match args.format {
        Format::Json => print!("{}", to_document_string(&b)?),
        Format::Text => {
            println!("n {} p {} alpha {}", b.n, b.p, b.alpha);
            println!("chi-square quantile {}", b.chi_square_quantile);
            println!("min flips to evade {}", b.min_flips);
            println!("max attacked entries {}", b.max_attacked);
            println!("failure probability lower bound {}", b.failure_prob_lb);
        }
    }
    Ok(0)
}

fn simulate(ctx: &mut Context, args: &SimulateArgs) -> CmdResult {
    let scale = match args.scale {
        ScaleArg::Full => Scale::Full,
        ScaleArg::Ci => Scale::Ci,
    };
    let mut cfg: ExperimentConfig = match (&args.config, args.scenario) {
        (Some(path), _) => read_document(path)?,
        (None, Some(s)) => ExperimentConfig::preset(s.into(), scale),
        (None, None) => unreachable!("clap requires a config or scenario"),
    };
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if args.seed.is_some() || args.config.is_none() {
        cfg.seed = ctx.seed("simulate", args.seed);
    }
    let output = run_experiment(&cfg)?;
    match &args.out {
        Some(path) => {
            let file = File::create(path).map_err(|e| io_failure(path, e))?;
            let mut w = BufWriter::new(file);
            output.write_csv(&mut w)?;
            w.flush().map_err(|e| io_failure(path, e))?;
        }
        None => output.write_csv(io::stdout().lock())?,
    }
    Ok(0)
}

fn run(cli: &Cli) -> CmdResult {
    let threads = cli
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
    {
        eprintln!("warning: could not configure thread pool: {e}");
    }
    let name = match &cli.command {
        Command::Keygen(_) => "keygen",
        Command::Embed(_) => "embed",
        Command::Detect(_) => "detect",
        Command::Attack(_) => "attack",
        Command::Fidelity(_) => "fidelity",
        Command::Filter(_) => "filter",
        Command::Bounds(_) => "bounds",
        Command::Simulate(_) => "simulate",
    };
    let mut ctx = Context {
        metadata: RunMetadata::new(name, threads),
    };
    ctx.metadata.parameters.insert(
        "args".into(),
        serde_json::Value::from(std::env::args().skip(1).collect::<Vec<_>>()),
    );
    let code = match &cli.command {
        Command::Keygen(a) => keygen(&mut ctx, a),
        Command::Embed(a) => embed(&mut ctx, a),
        Command::Detect(a) => detect_cmd(a),
        Command::Attack(a) => attack(&mut ctx, a),
        Command::Fidelity(a) => fidelity(a),
        Command::Filter(a) => filter(&mut ctx, a),
        Command::Bounds(a) => bounds(a),
        Command::Simulate(a) => simulate(&mut ctx, a),
    }?;
    if let Some(path) = &cli.metadata {
        write_document(&ctx.metadata, path)?;
    }
    Ok(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
