use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use contentcf::cf::{self, Denominator, DEFAULT_K};
use contentcf::evaluation::{emit_report, run_experiment, ExperimentConfig, Method, SplitPolicy};
use contentcf::ingest::sparql::{DEFAULT_ENDPOINT, ENDPOINT_ENV};
use contentcf::ingest::{
    assemble_profiles, fetch_catalog, load_overrides, parse_movies, parse_ratings,
    read_fetch_records, read_profiles, write_fetch_records, write_profiles, AssembleOptions,
    FetchOptions, HttpTransport, ProfileStore, DEFAULT_OVERRIDE_ACTOR_CAP,
};
use contentcf::weighting::{ContentWeights, ZeroOverlapWeight};
use contentcf::{ItemId, RatingMatrix, UserId};

/// Content-weighted user-based collaborative filtering on MovieLens.
#[derive(Debug, Parser)]
#[command(name = "contentcf", version, args_override_self = true)]
struct Cli {
    /// File of `key=value` lines used as defaults for the subcommand's flags.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cross-validated MAE for each method and neighborhood size.
    Evaluate(EvaluateArgs),
    /// Predict one rating, trained on the whole ratings file.
    Predict(PredictArgs),
    /// Query the SPARQL endpoint for directors and actors of every movie.
    FetchMetadata(FetchArgs),
    /// Merge catalog genres, fetched people and overrides into a profile file.
    BuildProfiles(BuildArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Pc,
    Wpc,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Pc => Method::Pc,
            MethodArg::Wpc => Method::Wpc,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum K0Branch {
    /// 1 / largest feature count in the catalog.
    Mv,
    /// Literal first-branch formula with zero shared features.
    Literal,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DenominatorArg {
    Abs,
    Signed,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    PerItem,
    Global,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Zero-overlap weight rule.
    #[arg(long, value_enum, default_value = "mv")]
    k0_branch: K0Branch,
    /// Prediction normalizer: sum of |sim| or plain sum of sim.
    #[arg(long, value_enum, default_value = "abs")]
    denominator: DenominatorArg,
    /// Drop neighbors whose similarity is below this value.
    #[arg(long, allow_negative_numbers = true)]
    min_sim: Option<f64>,
}

impl ModelArgs {
    fn zero_overlap(&self) -> ZeroOverlapWeight {
        match self.k0_branch {
            K0Branch::Mv => ZeroOverlapWeight::Mv,
            K0Branch::Literal => ZeroOverlapWeight::Literal,
        }
    }

    fn denominator(&self) -> Denominator {
        match self.denominator {
            DenominatorArg::Abs => Denominator::Abs,
            DenominatorArg::Signed => Denominator::Signed,
        }
    }
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Directory holding ratings.dat.
    #[arg(long, value_name = "DIR")]
    data_dir: PathBuf,
    /// Profile file from build-profiles. Required for wpc.
    #[arg(long, value_name = "PATH")]
    profiles: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "pc")]
    method: Vec<MethodArg>,
    /// Neighborhood sizes.
    #[arg(long, value_delimiter = ',', default_value = "5,10,20,30,50")]
    k: Vec<usize>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_enum, default_value = "per-item")]
    split: SplitArg,
    /// Evaluate a seeded sample of this many ratings per test fold.
    #[arg(long, value_name = "N")]
    sample_test: Option<usize>,
    /// Worker threads. Defaults to the available parallelism.
    #[arg(long)]
    workers: Option<usize>,
    /// CSV report path; the text table goes next to it as .txt.
    #[arg(long, default_value = "report.csv")]
    out: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long, value_name = "DIR")]
    data_dir: PathBuf,
    #[arg(long)]
    user: u32,
    #[arg(long)]
    item: u32,
    #[arg(long, value_enum, default_value = "pc")]
    method: MethodArg,
    #[arg(long, value_name = "PATH")]
    profiles: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Args)]
struct FetchArgs {
    /// movies.dat
    #[arg(long, value_name = "PATH")]
    movies: PathBuf,
    #[arg(long, env = ENDPOINT_ENV, default_value = DEFAULT_ENDPOINT)]
    endpoint: String,
    /// Fetched-metadata file (one JSON record per movie).
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Only fetch the first N movies by id.
    #[arg(long, value_name = "N")]
    limit: Option<usize>,
    #[arg(long, default_value_t = 4)]
    concurrency: usize,
    #[arg(long, default_value_t = 2)]
    retries: usize,
    /// Pause before each request, per worker.
    #[arg(long, default_value_t = 250)]
    delay_ms: u64,
    #[arg(long, default_value_t = 30)]
    timeout_secs: u64,
}

#[derive(Debug, Args)]
struct BuildArgs {
    /// movies.dat
    #[arg(long, value_name = "PATH")]
    movies: PathBuf,
    /// Output of fetch-metadata.
    #[arg(long, value_name = "PATH")]
    fetched: Option<PathBuf>,
    /// Hand-curated people, one JSON record per line.
    #[arg(long, value_name = "PATH")]
    overrides: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_OVERRIDE_ACTOR_CAP)]
    override_actor_cap: usize,
    /// Cap on linked-data actors. Unlimited by default.
    #[arg(long)]
    fetched_actor_cap: Option<usize>,
}

/// Reads `key=value` lines as (`--key`, value) pairs. Blank lines and lines
/// starting with `#` are ignored.
fn config_args(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{}:{}: expected key=value", path.display(), n + 1);
        };
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        out.push((format!("--{key}"), value.trim().to_owned()));
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Splices config-file arguments in after the subcommand name, leaving out
/// any flag the command line sets itself.
fn expand_args(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let extra = config_args(&path)?;
    let names: Vec<String> = Cli::command()
        .get_subcommands()
        .map(|c| c.get_name().to_owned())
        .collect();
    let Some(pos) = args
        .iter()
        .position(|a| names.iter().any(|n| a.to_str() == Some(n)))
    else {
        return Ok(args);
    };
    let given = |flag: &str| {
        args[pos + 1..].iter().any(|a| {
            let a = a.to_string_lossy();
            a == flag || a.starts_with(&format!("{flag}="))
        })
    };
    let mut out = args[..=pos].to_vec();
    out.extend(extra.into_iter().filter(|(flag, _)| !given(flag)).map(|(flag, value)| {
        OsString::from(format!("{flag}={value}"))
    }));
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}

fn usage_error(msg: &str) -> ! {
    Cli::command().error(ErrorKind::MissingRequiredArgument, msg).exit()
}

fn load_profiles(path: &Path) -> Result<ProfileStore> {
    read_profiles(path).with_context(|| format!("loading profiles from {}", path.display()))
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let methods: Vec<Method> = args.method.iter().map(|&m| m.into()).collect();
    if methods.contains(&Method::Wpc) && args.profiles.is_none() {
        usage_error("--method wpc requires --profiles <PATH>");
    }
    let mut config = ExperimentConfig {
        methods,
        k_values: args.k.clone(),
        seed: args.seed,
        split: match args.split {
            SplitArg::PerItem => SplitPolicy::PerItem,
            SplitArg::Global => SplitPolicy::Global,
        },
        zero_overlap: args.model.zero_overlap(),
        denominator: args.model.denominator(),
        min_sim: args.model.min_sim,
        sample_test: args.sample_test,
        ..ExperimentConfig::default()
    };
    if let Some(w) = args.workers {
        config.workers = w;
    }
    config.validate()?;

    let ratings_path = args.data_dir.join("ratings.dat");
    let ratings = parse_ratings(&ratings_path)?;
    log::info!("{} ratings from {}", ratings.len(), ratings_path.display());
    let profiles = args.profiles.as_deref().map(load_profiles).transpose()?;

    let reports = run_experiment(&ratings, profiles.as_ref(), &config)?;
    let table = emit_report(&reports, &args.out)?;
    log::info!("wrote {}", args.out.display());
    print!("{table}");
    Ok(())
}

fn predict(args: PredictArgs) -> Result<()> {
    if args.method == MethodArg::Wpc && args.profiles.is_none() {
        usage_error("--method wpc requires --profiles <PATH>");
    }
    if args.k == 0 {
        bail!("k must be at least 1");
    }
    let ratings = parse_ratings(args.data_dir.join("ratings.dat"))?;
    let matrix = RatingMatrix::new(&ratings)?;
    let (user, item) = (UserId(args.user), ItemId(args.item));
    if !matrix.contains_user(user) {
        bail!("unknown {user}");
    }
    if !matrix.contains_item(item) {
        bail!("unknown {item}");
    }

    let weights = match args.method {
        MethodArg::Pc => None,
        MethodArg::Wpc => {
            let store = load_profiles(args.profiles.as_deref().expect("checked above"))?;
            let content = ContentWeights::new(store.iter(), args.model.zero_overlap());
            let candidates: Vec<ItemId> = matrix.user_ratings(user).map(|(i, _)| i).collect();
            Some(content.weights_for_target(item, candidates)?)
        }
    };
    let neighbors =
        cf::select_neighbors(user, item, &matrix, args.k, weights.as_ref(), args.model.min_sim)?;
    let p = cf::predict(user, item, &neighbors, &matrix, args.model.denominator())?;
    println!("{:.4}", p.value);
    let mut err = std::io::stderr().lock();
    writeln!(err, "neighbors: {}", p.neighbors)?;
    writeln!(err, "fallback: {}", p.fallback)?;
    Ok(())
}

fn fetch_metadata(args: FetchArgs) -> Result<()> {
    let movies = parse_movies(&args.movies)?;
    let transport = HttpTransport::new(Duration::from_secs(args.timeout_secs))?;
    let opts = FetchOptions {
        concurrency: args.concurrency,
        retries: args.retries,
        delay: Duration::from_millis(args.delay_ms),
        limit: args.limit,
    };
    log::info!("querying {} for {} movies", args.endpoint, args.limit.unwrap_or(movies.len()).min(movies.len()));
    let records = fetch_catalog(&movies, &args.endpoint, &transport, &opts);
    write_fetch_records(&args.out, &records)?;
    log::info!("wrote {} records to {}", records.len(), args.out.display());
    Ok(())
}

fn build_profiles(args: BuildArgs) -> Result<()> {
    let movies = parse_movies(&args.movies)?;
    let fetched = match &args.fetched {
        Some(p) => read_fetch_records(p)?,
        None => Vec::new(),
    };
    let overrides = match &args.overrides {
        Some(p) => load_overrides(p, &movies, Some(args.override_actor_cap))?,
        None => Vec::new(),
    };
    let opts = AssembleOptions {
        fetched_actor_cap: args.fetched_actor_cap,
    };
    let store = assemble_profiles(&movies, &fetched, &overrides, &opts)?;
    write_profiles(&args.out, &store)?;
    log::info!("wrote {} profiles to {}", store.len(), args.out.display());
    Ok(())
}

fn run() -> Result<()> {
    let args = expand_args(std::env::args_os().collect())?;
    let cli = Cli::parse_from(args);
    match cli.command {
        Command::Evaluate(a) => evaluate(a),
        Command::Predict(a) => predict(a),
        Command::FetchMetadata(a) => fetch_metadata(a),
        Command::BuildProfiles(a) => build_profiles(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
