use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use coda_zero::bench::{run_sweep, Design, ExperimentConfig, InputSpec};
use coda_zero::countlab::{logratio_shift_experiment, make_zero_free, simulate_dm, DmSpec};
use coda_zero::impute::{apply_ceiling, run_method, Method, MethodParams, PriorKind, Variant};
use coda_zero::io::{ingest_csv, read_matrix_csv, write_counts_csv, write_matrix_csv};
use coda_zero::{CodaError, DetectionLimits};

#[derive(Parser)]
#[command(name = "coda-zero", version, about = "Zero replacement benchmarks for compositional count data")]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Impute the zeros of one matrix with one method.
    Impute(ImputeArgs),
    /// Sweep the zero proportion p at each column count m.
    BenchSparsity(BenchArgs),
    /// Sweep the column count m at each fixed p.
    BenchDimension(BenchArgs),
    /// Draw a Dirichlet–multinomial count matrix.
    SimulateDm(SimulateArgs),
    /// Log-ratio drift under scale-and-ceil quantization.
    QuantizeDemo(QuantizeArgs),
    /// Resample a count matrix into a zero-free one.
    GenNozero(NozeroArgs),
}

#[derive(Args)]
struct ImputeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    method: String,
    /// Detection limit applied to every cell.
    #[arg(long, default_value_t = 1.0, conflicts_with = "dl_file")]
    dl: f64,
    /// Per-cell detection limits (same layout as the input).
    #[arg(long)]
    dl_file: Option<PathBuf>,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.65)]
    fraction: f64,
    /// GBM prior: haldane, perks, jeffreys or bayes-laplace.
    #[arg(long, default_value = "bayes-laplace")]
    prior: String,
    /// Round the imputed matrix up to integers.
    #[arg(long)]
    ceil: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Zero-free count matrix CSV; a synthetic matrix is generated when absent.
    #[arg(long)]
    input: Option<PathBuf>,
    /// JSON experiment configuration; other flags override its fields.
    #[arg(long)]
    design: Option<PathBuf>,
    /// Comma-separated method identifiers.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long, value_delimiter = ',')]
    m: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated subset of raw,ceil.
    #[arg(long)]
    variants: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    timeout_s: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    alpha: Vec<f64>,
    #[arg(long)]
    depth: u64,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct QuantizeArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    alpha: Vec<f64>,
    #[arg(long)]
    depth: u64,
    #[arg(long)]
    n: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,0.1,0.01,0.001")]
    scales: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-sample shift table; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-scale mean table.
    #[arg(long)]
    means: Option<PathBuf>,
}

#[derive(Args)]
struct NozeroArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    depth_full: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Io(String),
    AllFailed,
}

impl From<CodaError> for Failure {
    fn from(e: CodaError) -> Self {
        match e {
            CodaError::Contract(msg) => Failure::Usage(msg),
            other => Failure::Io(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(path) => Box::new(File::create(path)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn parse_list<T: std::str::FromStr<Err = CodaError>>(s: &str) -> Result<Vec<T>, Failure> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(|t| t.parse().map_err(Failure::from)).collect()
}

fn impute(a: ImputeArgs) -> Result<(), Failure> {
    let method: Method = a.method.parse()?;
    let input = read_matrix_csv(&a.input)?;
    let dl = match &a.dl_file {
        Some(path) => DetectionLimits::full(read_matrix_csv(path)?.values)?,
        None => DetectionLimits::uniform(a.dl, input.values.nrows(), input.values.ncols())?,
    };
    let params = MethodParams { fraction: a.fraction, prior: a.prior.parse::<PriorKind>()?, ..MethodParams::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut out = run_method(method, &input.values, &dl, &params, &mut rng)?;
    if !out.status.is_ok() {
        eprintln!("{method}: {:?}", out.status);
    }
    if a.ceil {
        out = apply_ceiling(&out)?;
    }
    for note in &out.diagnostics.notes {
        log::info!("{note}");
    }
    write_matrix_csv(sink(&a.out)?, &out.imputed, &input.row_labels, &input.col_labels)?;
    Ok(())
}

fn bench(a: BenchArgs, dimension: bool) -> Result<(), Failure> {
    let mut cfg = match &a.design {
        Some(path) => ExperimentConfig::from_json_file(path)?,
        None => ExperimentConfig {
            design: if dimension { Design::default_dimension() } else { Design::default_sparsity() },
            ..ExperimentConfig::default()
        },
    };
    let is_dimension = matches!(cfg.design, Design::DimensionSweep { .. });
    if is_dimension != dimension {
        let want = if dimension { "dimension_sweep" } else { "sparsity_sweep" };
        return Err(Failure::Usage(format!("design file does not hold a {want}")));
    }
    if let Some(path) = a.input {
        cfg.input = InputSpec::Csv { path };
    }
    if let Some(s) = &a.methods {
        cfg.methods = parse_list::<Method>(s)?;
    }
    if let Some(s) = &a.variants {
        cfg.variants = parse_list::<Variant>(s)?;
    }
    match &mut cfg.design {
        Design::SparsitySweep { m_list, p_list } | Design::DimensionSweep { m_list, p_fixed: p_list } => {
            if let Some(m) = a.m {
                *m_list = m;
            }
            if let Some(p) = a.p {
                *p_list = p;
            }
        }
    }
    cfg.reps = a.reps.unwrap_or(cfg.reps);
    cfg.base_seed = a.seed.unwrap_or(cfg.base_seed);
    cfg.jobs = a.jobs.unwrap_or(cfg.jobs);
    cfg.timeout_s = a.timeout_s.unwrap_or(cfg.timeout_s);
    if a.out.is_some() {
        cfg.out_dir = a.out;
    }
    if cfg.out_dir.is_none() {
        return Err(Failure::Usage("--out is required (or out_dir in the design file)".into()));
    }
    let out = run_sweep(&cfg)?;
    let ok = out.records.iter().filter(|r| r.status == "ok").count();
    eprintln!(
        "{} records ({ok} ok) written to {}",
        out.records.len(),
        cfg.out_dir.as_deref().unwrap_or(Path::new(".")).display()
    );
    if out.all_failed() {
        return Err(Failure::AllFailed);
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let spec = DmSpec { alpha: a.alpha, depth: a.depth, n: a.n };
    let counts = simulate_dm(&spec, &mut ChaCha8Rng::seed_from_u64(a.seed))?;
    write_counts_csv(sink(&a.out)?, &counts)?;
    Ok(())
}

fn quantize(a: QuantizeArgs) -> Result<(), Failure> {
    let spec = DmSpec { alpha: a.alpha, depth: a.depth, n: a.n };
    let table = logratio_shift_experiment(&spec, &a.scales, &mut ChaCha8Rng::seed_from_u64(a.seed))?;
    table.write_shifts(sink(&a.out)?)?;
    match &a.means {
        Some(path) => table.write_means(File::create(path)?)?,
        None => {
            for s in &table.summaries {
                let mean = s.mean_lr.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into());
                eprintln!("scale {}: mean log10 ratio {mean} ({} kept, {} dropped)", s.scale, s.kept, s.dropped);
            }
        }
    }
    Ok(())
}

fn nozero(a: NozeroArgs) -> Result<(), Failure> {
    let counts = ingest_csv(&a.input)?;
    let z = make_zero_free(&counts, a.depth_full, &mut ChaCha8Rng::seed_from_u64(a.seed))?;
    if z.doublings > 0 {
        eprintln!("depth doubled {} time(s) to {}", z.doublings, z.depth);
    }
    write_counts_csv(sink(&a.out)?, &z.counts)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Impute(a) => impute(a),
        Command::BenchSparsity(a) => bench(a, false),
        Command::BenchDimension(a) => bench(a, true),
        Command::SimulateDm(a) => simulate(a),
        Command::QuantizeDemo(a) => quantize(a),
        Command::GenNozero(a) => nozero(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::AllFailed) => {
            eprintln!("error: every cell failed");
            ExitCode::from(3)
        }
    }
}
