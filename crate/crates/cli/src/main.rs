//! `tunability` command-line front end.
//!
//! Exit codes: 0 success, 1 data or validation failure, 2 usage error.

mod config;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use config::RunConfig;
use tunability::hyperspace::{bundled_package_defaults, bundled_space, parse_space, Configuration, NamedValue, SearchSpace};
use tunability::io::write_atomic;
use tunability::metadata::{
    generate_bot_data, make_synthetic_dataset, manifest_path, read_meta, read_meta_from, write_meta,
    BotSettings, DatasetFamily, LearnerKind, Manifest, MetaDataset,
};
use tunability::metrics::Measure;
use tunability::pipeline::{analyze_meta, AnalyzeOptions, SurrogateChoice};
use tunability::ranges::{CategoricalRule, RangeSpec};
use tunability::report::{overall_row, write_tables, TableOptions};
use tunability::rng::{derive_seed, label_key};
use tunability::surrogate::{evaluate_surrogates, SurrogateCache, SurrogateKind, SurrogateParams};
use tunability::tunability::{OptimizerSpec, ReferenceKind};

#[derive(Parser, Debug)]
#[command(name = "tunability", version, about = "Optimal defaults, tunability and tuning ranges from meta-data")]
struct Cli {
    /// TOML run configuration; command-line flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate meta-data by running toy learners on synthetic datasets.
    Generate(GenerateArgs),
    /// Compare surrogate kinds by repeated cross-validation.
    Surrogates(SurrogateArgs),
    /// Compute defaults, tunability, pairs and tuning ranges.
    Analyze(AnalyzeArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Comma-separated learners: knn, glmnet, rpart.
    #[arg(long)]
    learners: Option<String>,
    /// Number of synthetic datasets.
    #[arg(long)]
    datasets: Option<usize>,
    /// Experiments (random configurations) per learner and dataset.
    #[arg(long)]
    rows: Option<usize>,
    /// Dataset family: gaussian_blobs or xor_rotated.
    #[arg(long)]
    family: Option<String>,
    /// Observations per synthetic dataset.
    #[arg(long)]
    observations: Option<usize>,
    /// Features per synthetic dataset.
    #[arg(long)]
    features: Option<usize>,
    /// Cross-validation folds used to score each experiment.
    #[arg(long)]
    cv_folds: Option<usize>,
    /// Comma-separated measures to record.
    #[arg(long)]
    measures: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SurrogateArgs {
    #[arg(long)]
    meta: Option<PathBuf>,
    /// Search space file overriding the one referenced by the manifest.
    #[arg(long)]
    space: Option<PathBuf>,
    #[arg(long)]
    measure: Option<String>,
    /// Comma-separated kinds: constant, linear, knn, cart, forest.
    #[arg(long)]
    kinds: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    /// Trees per forest surrogate.
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(long)]
    meta: Option<PathBuf>,
    /// Search space file overriding the one referenced by the manifest.
    #[arg(long)]
    space: Option<PathBuf>,
    /// auc, accuracy or brier.
    #[arg(long)]
    measure: Option<String>,
    /// none, unit or zscore.
    #[arg(long)]
    scaling: Option<String>,
    /// mean, median or q<p> (e.g. q0.9).
    #[arg(long)]
    summary: Option<String>,
    /// random or grid.
    #[arg(long)]
    mode: Option<String>,
    /// Grid points per numeric parameter in grid mode.
    #[arg(long)]
    grid_levels: Option<usize>,
    /// Random-search budget for defaults, optima and single parameters.
    #[arg(long)]
    budget: Option<usize>,
    /// Random-search budget for parameter pairs.
    #[arg(long)]
    pair_budget: Option<usize>,
    /// Surrogate kind, or `auto` to select by cross-validation.
    #[arg(long)]
    surrogate: Option<String>,
    /// Repetitions and folds used by `--surrogate auto`.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    /// Trees per forest surrogate.
    #[arg(long)]
    trees: Option<usize>,
    /// Directory for cached surrogate fits.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Reference for pair and sequential tables: package or optimal.
    #[arg(long)]
    reference: Option<String>,
    /// JSON file of package defaults (flat, or keyed by algorithm).
    #[arg(long)]
    package_defaults: Option<PathBuf>,
    /// Folds for cross-validating the defaults across datasets.
    #[arg(long)]
    cv_across_datasets: Option<usize>,
    /// Compute pair tunability, joint gains and sequential tuning.
    #[arg(long)]
    pairs: bool,
    /// Compute tuning ranges (the default).
    #[arg(long, overrides_with = "no_ranges")]
    ranges: bool,
    /// Skip tuning ranges.
    #[arg(long, overrides_with = "ranges")]
    no_ranges: bool,
    #[arg(long)]
    p1: Option<f64>,
    #[arg(long)]
    p2: Option<f64>,
    /// at_least_once or min_fraction(<f>).
    #[arg(long)]
    categorical_rule: Option<String>,
    /// Emit per-parameter histograms of the optima with this many bins.
    #[arg(long)]
    histograms: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// An error in how the program was invoked (exit code 2).
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn required<T>(value: Option<T>, flag: &str) -> anyhow::Result<T> {
    value.ok_or_else(|| usage(format!("missing required --{flag}")))
}

fn positive(value: usize, flag: &str) -> anyhow::Result<usize> {
    if value == 0 {
        return Err(usage(format!("--{flag} must be at least 1")));
    }
    Ok(value)
}

fn parse<T>(text: &str, flag: &str) -> anyhow::Result<T>
where
    T: FromStr,
    T::Err: fmt::Display,
{
    text.parse().map_err(|e| usage(format!("--{flag}: {e}")))
}

fn parse_list<T>(text: &str, flag: &str) -> anyhow::Result<Vec<T>>
where
    T: FromStr,
    T::Err: fmt::Display,
{
    let items: Vec<T> = text
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(s.trim(), flag))
        .collect::<anyhow::Result<_>>()?;
    if items.is_empty() {
        return Err(usage(format!("--{flag} is empty")));
    }
    Ok(items)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(|e| usage(format!("{e:#}")))?,
        None => RunConfig::default(),
    };
    if let Some(n) = cli.workers.or(cfg.workers) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(positive(n, "workers")?)
            .build_global()
            .context("configuring worker threads")?;
    }
    match cli.command {
        Command::Generate(args) => generate(args, cfg),
        Command::Surrogates(args) => surrogates(args, cfg),
        Command::Analyze(args) => analyze(args, cfg),
    }
}

fn generate(args: GenerateArgs, cfg: RunConfig) -> anyhow::Result<ExitCode> {
    let seed = required(args.seed.or(cfg.seed), "seed")?;
    let out = required(args.out.or(cfg.out), "out")?;
    let learners: Vec<LearnerKind> = parse_list(&required(args.learners.or(cfg.learners), "learners")?, "learners")?;
    let n_datasets = positive(required(args.datasets.or(cfg.datasets), "datasets")?, "datasets")?;
    let rows = positive(required(args.rows.or(cfg.rows), "rows")?, "rows")?;
    let family: DatasetFamily = parse(&args.family.or(cfg.family).unwrap_or_else(|| "gaussian_blobs".into()), "family")?;
    let observations = args.observations.or(cfg.observations).unwrap_or(150);
    let features = args.features.or(cfg.features).unwrap_or(4);
    let folds = args.cv_folds.or(cfg.cv_folds).unwrap_or(5);
    let measures: Vec<Measure> = parse_list(
        &args.measures.or(cfg.measures).unwrap_or_else(|| "auc,accuracy,brier".into()),
        "measures",
    )?;

    // separations grow with the dataset index so the datasets differ in difficulty
    let datasets = (0..n_datasets)
        .map(|d| {
            let ds_seed = derive_seed(seed, &[label_key("dataset"), d as u64]);
            make_synthetic_dataset(family, observations, features, 1.0 + 0.5 * d as f64, ds_seed)
        })
        .collect::<tunability::Result<Vec<_>>>()?;
    let settings = BotSettings {
        rows_per_pair: rows,
        folds,
        measures,
        seed,
    };
    let metas = generate_bot_data(&learners, &datasets, &settings)?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    for meta in &metas {
        let path = out.join(format!("{}.csv", meta.algorithm));
        write_meta(meta, &path)?;
        println!("{}: {} rows over {} datasets", path.display(), meta.rows.len(), meta.datasets.len());
    }
    Ok(ExitCode::SUCCESS)
}

fn load_meta(meta: Option<PathBuf>, space: Option<PathBuf>) -> anyhow::Result<MetaDataset> {
    let path = required(meta, "meta")?;
    match space {
        None => Ok(read_meta(&path)?),
        Some(space_path) => {
            let space = parse_space(&read_text(&space_path)?)?;
            let mpath = manifest_path(&path);
            let manifest: Manifest = serde_json::from_str(&read_text(&mpath)?)
                .with_context(|| format!("reading {}", mpath.display()))?;
            Ok(read_meta_from(&manifest, space, &read_text(&path)?)?)
        }
    }
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn pick_measure(meta: &MetaDataset, flag: Option<String>) -> anyhow::Result<Measure> {
    match flag {
        Some(text) => parse(&text, "measure"),
        None => meta
            .measures
            .first()
            .copied()
            .ok_or_else(|| anyhow!("meta-data records no measures")),
    }
}

fn surrogate_params(trees: Option<usize>) -> anyhow::Result<SurrogateParams> {
    let mut params = SurrogateParams::default();
    if let Some(t) = trees {
        params.forest_trees = positive(t, "trees")?;
    }
    Ok(params)
}

#[derive(Serialize)]
struct EvalCsvRow<'a> {
    dataset_id: &'a str,
    kind: &'a str,
    r2: Option<f64>,
    tau: Option<f64>,
    completed_folds: usize,
    planned_folds: usize,
    error: Option<&'a str>,
}

#[derive(Serialize)]
struct SummaryCsvRow<'a> {
    kind: &'a str,
    mean_r2: Option<f64>,
    mean_tau: Option<f64>,
    datasets: usize,
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| anyhow!("csv buffer: {e}"))
}

fn surrogates(args: SurrogateArgs, cfg: RunConfig) -> anyhow::Result<ExitCode> {
    let seed = required(args.seed.or(cfg.seed), "seed")?;
    let out = required(args.out.or(cfg.out), "out")?;
    let kinds: Vec<SurrogateKind> = match args.kinds.or(cfg.kinds) {
        Some(text) => parse_list(&text, "kinds")?,
        None => SurrogateKind::PREFERENCE.to_vec(),
    };
    let reps = positive(args.reps.or(cfg.reps).unwrap_or(2), "reps")?;
    let folds = args.folds.or(cfg.folds).unwrap_or(5);
    if folds < 2 {
        return Err(usage("--folds must be at least 2"));
    }
    let params = surrogate_params(args.trees.or(cfg.trees))?;
    let meta = load_meta(args.meta.or(cfg.meta), args.space.or(cfg.space))?;
    let measure = pick_measure(&meta, args.measure.or(cfg.measure))?;

    let report = evaluate_surrogates(&meta, measure, &kinds, reps, folds, seed, &params)?;
    let entries = report.entries.iter().map(|e| EvalCsvRow {
        dataset_id: &e.dataset_id,
        kind: e.kind.name(),
        r2: e.r2,
        tau: e.tau,
        completed_folds: e.completed_folds,
        planned_folds: e.planned_folds,
        error: e.error.as_deref(),
    });
    let summary = report.summary.iter().map(|s| SummaryCsvRow {
        kind: s.kind.name(),
        mean_r2: s.mean_r2,
        mean_tau: s.mean_tau,
        datasets: s.datasets,
    });
    let files = [
        ("surrogate_eval.csv", csv_bytes(entries)?),
        ("surrogate_summary.csv", csv_bytes(summary)?),
        ("surrogate_eval.json", {
            let mut json = serde_json::to_vec_pretty(&report)?;
            json.push(b'\n');
            json
        }),
    ];
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    for (name, bytes) in &files {
        write_atomic(&out.join(name), bytes)?;
    }
    for s in &report.summary {
        println!(
            "{:<9} R2 {}  tau {}  ({} datasets)",
            s.kind.name(),
            fmt_opt(s.mean_r2),
            fmt_opt(s.mean_tau),
            s.datasets
        );
    }
    if report.has_errors() {
        for e in report.entries.iter().filter(|e| e.error.is_some()) {
            eprintln!("error: {} / {}: {}", e.dataset_id, e.kind, e.error.as_deref().unwrap_or_default());
        }
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| format!("{v:.4}"))
}

/// Package defaults from a JSON file holding either a flat object of named
/// values or one object per algorithm.
fn read_package_defaults(path: &Path, space: &SearchSpace) -> anyhow::Result<Configuration> {
    let doc: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))?;
    let section = match doc.get(space.algorithm()) {
        Some(serde_json::Value::Object(inner)) => inner.clone(),
        _ => doc,
    };
    let named: BTreeMap<String, Option<NamedValue>> = serde_json::from_value(serde_json::Value::Object(section))
        .with_context(|| format!("parsing {}", path.display()))?;
    Ok(space.configuration_from_values(&named)?)
}

fn analyze(args: AnalyzeArgs, cfg: RunConfig) -> anyhow::Result<ExitCode> {
    let seed = required(args.seed.or(cfg.seed), "seed")?;
    let out = required(args.out.or(cfg.out), "out")?;

    let mut optimizer = match args.mode.or(cfg.mode).as_deref().unwrap_or("random") {
        "random" => OptimizerSpec::random(seed),
        "grid" => {
            let levels = args.grid_levels.or(cfg.grid_levels).unwrap_or(11);
            if levels < 2 {
                return Err(usage("--grid-levels must be at least 2"));
            }
            OptimizerSpec::grid(levels, seed)
        }
        other => return Err(usage(format!("--mode: unknown mode `{other}` (random or grid)"))),
    };
    if let Some(b) = args.budget.or(cfg.budget) {
        let b = positive(b, "budget")?;
        optimizer.budgets.defaults = b;
        optimizer.budgets.optimum = b;
        optimizer.budgets.single = b;
    }
    if let Some(b) = args.pair_budget.or(cfg.pair_budget) {
        optimizer.budgets.pair = positive(b, "pair-budget")?;
    }

    let surrogate = match args.surrogate.or(cfg.surrogate).as_deref() {
        None => SurrogateChoice::default(),
        Some("auto") => {
            let reps = positive(args.reps.or(cfg.reps).unwrap_or(2), "reps")?;
            let folds = args.folds.or(cfg.folds).unwrap_or(5);
            if folds < 2 {
                return Err(usage("--folds must be at least 2"));
            }
            SurrogateChoice::Select { reps, folds }
        }
        Some(kind) => SurrogateChoice::Fixed(parse(kind, "surrogate")?),
    };
    let reference: ReferenceKind = match args.reference.or(cfg.reference) {
        Some(text) => parse(&text, "reference")?,
        None => ReferenceKind::default(),
    };
    let cv_folds = args.cv_across_datasets.or(cfg.cv_across_datasets);
    if cv_folds.is_some_and(|k| k < 2) {
        return Err(usage("--cv-across-datasets needs at least 2 folds"));
    }
    let want_ranges = if args.ranges || args.no_ranges {
        args.ranges
    } else {
        cfg.ranges.unwrap_or(true)
    };
    let ranges = if want_ranges {
        let mut spec = RangeSpec::default();
        if let Some(p) = args.p1.or(cfg.p1) {
            spec.p1 = p;
        }
        if let Some(p) = args.p2.or(cfg.p2) {
            spec.p2 = p;
        }
        if let Some(rule) = args.categorical_rule.or(cfg.categorical_rule) {
            spec.categorical_rule = parse::<CategoricalRule>(&rule, "categorical-rule")?;
        }
        spec.check().map_err(|e| usage(e.to_string()))?;
        Some(spec)
    } else {
        None
    };
    let histograms = args.histograms.or(cfg.histograms).map(|b| positive(b, "histograms")).transpose()?;
    let params = surrogate_params(args.trees.or(cfg.trees))?;
    let cache = args.cache.or(cfg.cache).map(SurrogateCache::new).transpose()?;

    let meta = load_meta(args.meta.or(cfg.meta), args.space.or(cfg.space))?;
    let measure = pick_measure(&meta, args.measure.or(cfg.measure))?;
    let package_defaults = match args.package_defaults.or(cfg.package_defaults) {
        Some(path) => Some(read_package_defaults(&path, &meta.space)?),
        // bundled defaults only apply to the unmodified bundled space
        None => match bundled_space(&meta.algorithm) {
            Ok(space) if space == meta.space => Some(bundled_package_defaults(&meta.algorithm)?),
            _ => {
                info!("no package defaults for `{}`", meta.algorithm);
                None
            }
        },
    };

    let mut opts = AnalyzeOptions::new(measure, optimizer);
    if let Some(s) = args.scaling.or(cfg.scaling) {
        opts.scaling = parse(&s, "scaling")?;
    }
    if let Some(s) = args.summary.or(cfg.summary) {
        opts.summary = parse(&s, "summary")?;
    }
    opts.surrogate = surrogate;
    opts.surrogate_params = params;
    opts.package_defaults = package_defaults;
    opts.reference = reference;
    opts.pairs = args.pairs || cfg.pairs.unwrap_or(false);
    opts.cv_folds = cv_folds;
    opts.ranges = ranges;
    opts.cache = cache;

    let bundle = analyze_meta(&meta, &opts)?;
    let files = write_tables(&out, &meta.space, &bundle, TableOptions { histogram_bins: histograms })?;
    for f in &files {
        info!("wrote {}", f.display());
    }
    let row = overall_row(&bundle.tunability);
    println!(
        "{}: Tun.P {}  Tun.O {}  Tun.O-CV {}  Improv {}  Impr-CV {}",
        row.algorithm,
        fmt_opt(row.tun_p),
        fmt_opt(row.tun_o),
        fmt_opt(row.tun_o_cv),
        fmt_opt(row.improv),
        fmt_opt(row.impr_cv)
    );
    Ok(ExitCode::SUCCESS)
}
