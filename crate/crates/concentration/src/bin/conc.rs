//! Batch command-line surface: measurements, sweeps, oracle checks and
//! theory calculators, emitting structured JSON reports and CSV tables.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 infeasible.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use concentration::data::{
    gen_gaussian, gen_uniform_cube, load_cifar_binary, load_csv, load_idx, split, Dataset,
    SplitSpec,
};
use concentration::metric::{
    cache_path, knn_table, read_cache, write_cache, KnnTable, Metric, MetricTree,
};
use concentration::oracle::{brute_force_balls, brute_force_rects};
use concentration::regions::Region;
use concentration::report::Report;
use concentration::search_l2::{self, L2Config};
use concentration::search_linf::{self, LinfConfig};
use concentration::theory::{self, ConcentrationEstimate, PenaltyParams};
use concentration::{Error, Result};

#[derive(Parser)]
#[command(
    name = "conc",
    version,
    about = "Empirical concentration-of-measure estimation over rectangle and ball families"
)]
struct Cli {
    /// Worker threads (default: machine parallelism). Output is identical
    /// for any thread count at a fixed seed.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Estimate concentration: search for a minimal-expansion error region
    Measure(MeasureArgs),
    /// Evaluate the covered-fraction grid for the ℓ∞ search (CSV)
    SweepQ(SweepQArgs),
    /// Run the full search for each T in a list (CSV)
    SweepT(SweepTArgs),
    /// Print the generalization certificate for given (n, T, m, delta)
    Bound(BoundArgs),
    /// Convert an ℓ∞ budget to the volume-matched ℓ2 budget
    Convert(ConvertArgs),
    /// Exhaustive small-scale optimum over a restricted family
    Oracle(OracleArgs),
    /// Build and store a k-NN table for later reuse
    KnnCache(KnnCacheArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum DataFormat {
    Csv,
    Idx,
    Cifar,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Synth {
    Uniform,
    Gaussian,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum CliMetric {
    Linf,
    L2,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum AnyMetric {
    L1,
    L2,
    Linf,
}

impl From<AnyMetric> for Metric {
    fn from(m: AnyMetric) -> Metric {
        match m {
            AnyMetric::L1 => Metric::L1,
            AnyMetric::L2 => Metric::L2,
            AnyMetric::Linf => Metric::Linf,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Family {
    Rects,
    Balls,
}

/// Dataset source shared by all data-consuming subcommands.
#[derive(Args, Debug, Serialize)]
struct DataArgs {
    /// Input dataset file; repeat the flag for multiple CIFAR batches
    #[arg(long = "data")]
    data: Vec<PathBuf>,

    /// Input file format
    #[arg(long, value_enum, default_value_t = DataFormat::Csv)]
    format: DataFormat,

    /// Explicit held-out test set (same format); otherwise a seeded split
    #[arg(long)]
    test_data: Option<PathBuf>,

    /// Synthetic source instead of --data
    #[arg(long, value_enum)]
    synthetic: Option<Synth>,

    /// Dimension of synthetic data
    #[arg(long, default_value_t = 1)]
    n: usize,

    /// Point count of synthetic data (before the split)
    #[arg(long, default_value_t = 1000)]
    m: usize,

    /// Standard deviation of synthetic Gaussians
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,

    /// Train fraction of the seeded split
    #[arg(long, default_value_t = 0.5)]
    train_fraction: f64,

    /// Seed for synthetic generation and for splitting
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
}

impl DataArgs {
    fn load_one(&self, path: &std::path::Path) -> Result<Dataset> {
        match self.format {
            DataFormat::Csv => load_csv(path),
            DataFormat::Idx => load_idx(path),
            DataFormat::Cifar => load_cifar_binary(&[path]),
        }
    }

    /// The full dataset, before any split.
    fn load_full(&self) -> Result<Dataset> {
        if let Some(synth) = self.synthetic {
            return match synth {
                Synth::Uniform => gen_uniform_cube(self.n, self.m, self.data_seed),
                Synth::Gaussian => gen_gaussian(self.n, self.m, self.sigma, self.data_seed),
            };
        }
        match self.data.as_slice() {
            [] => Err(Error::NoInput),
            [one] => self.load_one(one),
            many => match self.format {
                DataFormat::Cifar => {
                    let paths: Vec<&std::path::Path> = many.iter().map(PathBuf::as_path).collect();
                    load_cifar_binary(&paths)
                }
                _ => Err(Error::Param {
                    name: "data",
                    reason: "multiple input files are only supported for --format cifar".into(),
                }),
            },
        }
    }

    /// `(train, test)`: explicit test set when given, seeded split otherwise.
    fn load(&self) -> Result<(Dataset, Dataset)> {
        let base = self.load_full()?;
        match &self.test_data {
            Some(path) => Ok((base, self.load_one(path)?)),
            None => split(
                &base,
                SplitSpec {
                    train_fraction: self.train_fraction,
                    seed: self.data_seed,
                },
            ),
        }
    }
}

#[derive(Args, Debug)]
struct MeasureArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Perturbation metric: linf (rectangle complements) or l2 (ball unions)
    #[arg(long, value_enum)]
    metric: CliMetric,

    /// Risk lower bound alpha
    #[arg(long)]
    alpha: f64,

    /// Perturbation budget in the chosen metric
    #[arg(long)]
    epsilon: f64,

    /// Number of rectangles (implies --metric linf)
    #[arg(long)]
    rects: Option<usize>,

    /// Number of balls (implies --metric l2)
    #[arg(long)]
    balls: Option<usize>,

    /// Number of primitives, metric-agnostic alternative to --rects/--balls
    #[arg(long)]
    t: Option<usize>,

    /// Neighbor count of the density ordering (ℓ∞ search)
    #[arg(long, default_value_t = 50)]
    k_density: usize,

    /// Bisection resolution over the covered fraction q (ℓ∞ search)
    #[arg(long, default_value_t = 0.005)]
    delta_bin: f64,

    /// Clustering iteration cap (ℓ∞ search)
    #[arg(long, default_value_t = 30)]
    kmeans_iters: usize,

    /// Restart count (ℓ∞ search)
    #[arg(long, default_value_t = 10)]
    restarts: usize,

    /// Master seed; restart i derives seed ^ i
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Candidate-center stride for the ℓ2 greedy (1 = every point)
    #[arg(long, default_value_t = 1)]
    center_stride: usize,

    /// Deviation delta of the generalization certificate
    #[arg(long, default_value_t = 0.05)]
    delta: f64,

    /// Directory of reusable k-NN tables (ℓ∞ search)
    #[arg(long, env = "CONC_CACHE_DIR")]
    cache_dir: Option<PathBuf>,

    /// Report file; stdout when omitted
    #[arg(long)]
    output: Option<PathBuf>,
}

impl MeasureArgs {
    fn t_count(&self) -> Result<usize> {
        let usage = |reason: &str| Error::Param {
            name: "t",
            reason: reason.into(),
        };
        match (self.metric, self.rects, self.balls, self.t) {
            (CliMetric::Linf, Some(t), None, None) => Ok(t),
            (CliMetric::L2, None, Some(t), None) => Ok(t),
            (_, None, None, Some(t)) => Ok(t),
            (_, None, None, None) => {
                Err(usage("give --t, or --rects with linf / --balls with l2"))
            }
            _ => Err(usage("--rects/--balls/--t conflict with each other or the metric")),
        }
    }
}

fn linf_config(a: &MeasureArgs, t: usize) -> LinfConfig {
    let mut cfg = LinfConfig::new(a.alpha, a.epsilon, t);
    cfg.k_density = a.k_density;
    cfg.delta_bin = a.delta_bin;
    cfg.kmeans_iters = a.kmeans_iters;
    cfg.restarts = a.restarts;
    cfg.seed = a.seed;
    cfg
}

/// Loads the ℓ1 k-NN table from the cache directory, building and storing
/// it on a miss.
fn cached_table(dir: &PathBuf, train: &Dataset, k: usize) -> Result<KnnTable> {
    let path = cache_path(dir, train, k, Metric::L1);
    if path.exists() {
        return read_cache(&path);
    }
    let tree = MetricTree::build(train, Metric::L1);
    let table = knn_table(&tree, k)?;
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    write_cache(&path, &table)?;
    Ok(table)
}

fn cmd_measure(a: MeasureArgs) -> Result<()> {
    let (train, test) = a.data.load()?;
    let t = a.t_count()?;
    let config_echo = json!({
        "data": a.data,
        "metric": a.metric,
        "alpha": a.alpha,
        "epsilon": a.epsilon,
        "t": t,
        "k_density": a.k_density,
        "delta_bin": a.delta_bin,
        "kmeans_iters": a.kmeans_iters,
        "restarts": a.restarts,
        "seed": a.seed,
        "center_stride": a.center_stride,
        "delta": a.delta,
    });

    let searched: Result<ConcentrationEstimate> = match a.metric {
        CliMetric::Linf => {
            let cfg = linf_config(&a, t);
            let res = match &a.cache_dir {
                Some(dir) => {
                    let table = cached_table(dir, &train, cfg.k_density)?;
                    search_linf::run_with_table(&train, &test, &cfg, &table)?
                }
                None => search_linf::run(&train, &test, &cfg)?,
            };
            Ok(ConcentrationEstimate {
                alpha: cfg.alpha,
                epsilon: cfg.epsilon_inf,
                metric: Metric::Linf,
                t_count: t,
                risk_train: res.risk_train,
                risk_test: res.risk_test.expect("full run evaluates the test split"),
                advrisk_train: res.advrisk_train,
                advrisk_test: res.advrisk_test.expect("full run evaluates the test split"),
                region: Region::RectComplement(res.region),
                restart_mean: res.restart_mean,
                restart_stddev: res.restart_stddev,
            })
        }
        CliMetric::L2 => {
            let mut cfg = L2Config::new(a.alpha, a.epsilon, t);
            cfg.seed = a.seed;
            cfg.center_stride = a.center_stride;
            search_l2::run(&train, &test, &cfg)
        }
    };

    let est = match searched {
        Ok(est) => est,
        Err(err @ Error::Infeasible { .. }) => {
            let mut report = Report::new("measure", config_echo);
            report.infeasible = true;
            report.notes.push(err.to_string());
            emit_report(&report, &a.output)?;
            return Err(err);
        }
        Err(err) => return Err(err),
    };

    let certificate = theory::generalization_certificate(
        est.advrisk_train,
        PenaltyParams {
            n: train.n(),
            t_count: t,
            m: train.m(),
            delta: a.delta,
        },
    )?;
    let mut report = Report::new("measure", config_echo).with_estimate(est);
    report.certificate = Some(certificate);
    emit_report(&report, &a.output)
}

fn emit_report(report: &Report, output: &Option<PathBuf>) -> Result<()> {
    match output {
        Some(path) => {
            report.write(path)?;
            if let Some(est) = &report.estimate {
                println!(
                    "risk train/test = {}/{}  advrisk train/test = {}/{}  -> {}",
                    est.risk_train,
                    est.risk_test,
                    est.advrisk_train,
                    est.advrisk_test,
                    path.display()
                );
            } else {
                println!("infeasible -> {}", path.display());
            }
        }
        None => println!("{}", report.to_json()),
    }
    Ok(())
}

#[derive(Args, Debug)]
struct SweepQArgs {
    #[command(flatten)]
    data: DataArgs,

    #[arg(long)]
    alpha: f64,

    /// ℓ∞ perturbation budget
    #[arg(long)]
    epsilon: f64,

    /// Number of rectangles
    #[arg(long)]
    rects: usize,

    #[arg(long, default_value_t = 50)]
    k_density: usize,

    /// Grid step of the q sweep
    #[arg(long, default_value_t = 0.005)]
    delta_bin: f64,

    #[arg(long, default_value_t = 30)]
    kmeans_iters: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// CSV file; stdout when omitted
    #[arg(long)]
    output: Option<PathBuf>,
}

fn cmd_sweep_q(a: SweepQArgs) -> Result<()> {
    let (train, _test) = a.data.load()?;
    let mut cfg = LinfConfig::new(a.alpha, a.epsilon, a.rects);
    cfg.k_density = a.k_density;
    cfg.delta_bin = a.delta_bin;
    cfg.kmeans_iters = a.kmeans_iters;
    cfg.restarts = 1;
    cfg.seed = a.seed;
    let order = search_linf::density_order(&train, cfg.k_density)?;
    let steps = (1.0 / cfg.delta_bin).round() as usize;
    let mut probes = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        let q = (i as f64 * cfg.delta_bin).min(1.0);
        probes.push(search_linf::region_for_q(&train, &order, q, &cfg, cfg.seed)?);
    }
    emit_text(&search_linf::probes_to_csv(&probes), &a.output)
}

#[derive(Args, Debug)]
struct SweepTArgs {
    #[command(flatten)]
    data: DataArgs,

    #[arg(long, value_enum)]
    metric: CliMetric,

    #[arg(long)]
    alpha: f64,

    #[arg(long)]
    epsilon: f64,

    /// Comma-separated list of primitive counts to try
    #[arg(long, value_delimiter = ',')]
    t_list: Vec<usize>,

    #[arg(long, default_value_t = 50)]
    k_density: usize,

    #[arg(long, default_value_t = 0.005)]
    delta_bin: f64,

    #[arg(long, default_value_t = 30)]
    kmeans_iters: usize,

    #[arg(long, default_value_t = 10)]
    restarts: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, default_value_t = 1)]
    center_stride: usize,

    /// CSV file; stdout when omitted
    #[arg(long)]
    output: Option<PathBuf>,
}

fn cmd_sweep_t(a: SweepTArgs) -> Result<()> {
    if a.t_list.is_empty() {
        return Err(Error::Param {
            name: "t_list",
            reason: "at least one T required".into(),
        });
    }
    let (train, test) = a.data.load()?;
    let mut out = String::from("t,advrisk_train,advrisk_test\n");
    for &t in &a.t_list {
        let (adv_train, adv_test) = match a.metric {
            CliMetric::Linf => {
                let mut cfg = LinfConfig::new(a.alpha, a.epsilon, t);
                cfg.k_density = a.k_density;
                cfg.delta_bin = a.delta_bin;
                cfg.kmeans_iters = a.kmeans_iters;
                cfg.restarts = a.restarts;
                cfg.seed = a.seed;
                let res = search_linf::run(&train, &test, &cfg)?;
                (res.advrisk_train, res.advrisk_test.unwrap())
            }
            CliMetric::L2 => {
                let mut cfg = L2Config::new(a.alpha, a.epsilon, t);
                cfg.seed = a.seed;
                cfg.center_stride = a.center_stride;
                let est = search_l2::run(&train, &test, &cfg)?;
                (est.advrisk_train, est.advrisk_test)
            }
        };
        out.push_str(&format!("{t},{adv_train},{adv_test}\n"));
    }
    emit_text(&out, &a.output)
}

fn emit_text(text: &str, output: &Option<PathBuf>) -> Result<()> {
    match output {
        Some(path) => fs::write(path, text).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Args, Debug)]
struct BoundArgs {
    /// Dimension n
    #[arg(long)]
    n: usize,

    /// Primitive count T
    #[arg(long)]
    t: usize,

    /// Sample count m
    #[arg(long)]
    m: usize,

    /// Deviation delta
    #[arg(long)]
    delta: f64,

    /// Empirical concentration value to certify
    #[arg(long, default_value_t = 0.0)]
    h_emp: f64,
}

fn cmd_bound(a: BoundArgs) -> Result<()> {
    let cert = theory::generalization_certificate(
        a.h_emp,
        PenaltyParams {
            n: a.n,
            t_count: a.t,
            m: a.m,
            delta: a.delta,
        },
    )?;
    println!("{}", serde_json::to_string_pretty(&cert).unwrap());
    Ok(())
}

#[derive(Args, Debug)]
struct ConvertArgs {
    /// Dimension n
    #[arg(long)]
    n: usize,

    /// ℓ∞ budget to convert
    #[arg(long)]
    eps_inf: f64,
}

fn cmd_convert(a: ConvertArgs) -> Result<()> {
    println!("{}", theory::eps_convert(a.n, a.eps_inf));
    Ok(())
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[command(flatten)]
    data: DataArgs,

    #[arg(long, value_enum)]
    family: Family,

    #[arg(long)]
    alpha: f64,

    #[arg(long)]
    epsilon: f64,

    /// Primitive count (balls: 1 or 2; rects: 1)
    #[arg(long, default_value_t = 1)]
    t: usize,

    /// Report file; stdout when omitted
    #[arg(long)]
    output: Option<PathBuf>,
}

fn cmd_oracle(a: OracleArgs) -> Result<()> {
    let ds = a.data.load_full()?;
    let result = match a.family {
        Family::Balls => brute_force_balls(&ds, a.alpha, a.epsilon, a.t)?,
        Family::Rects => {
            if a.t != 1 {
                return Err(Error::OracleGuard(format!(
                    "rectangle oracle supports T = 1 only, got {}",
                    a.t
                )));
            }
            brute_force_rects(&ds, a.alpha, a.epsilon)?
        }
    };
    eprintln!(
        "optimal risk = {}, optimal advrisk = {} ({} candidates)",
        result.optimal_risk, result.optimal_advrisk, result.candidates_examined
    );
    let text = serde_json::to_string_pretty(&result).unwrap() + "\n";
    emit_text(&text, &a.output)
}

#[derive(Args, Debug)]
struct KnnCacheArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Neighbor count of the table
    #[arg(long)]
    k: usize,

    #[arg(long, value_enum, default_value_t = AnyMetric::L1)]
    metric: AnyMetric,

    /// Cache directory
    #[arg(long, env = "CONC_CACHE_DIR")]
    cache_dir: PathBuf,
}

fn cmd_knn_cache(a: KnnCacheArgs) -> Result<()> {
    let ds = a.data.load_full()?;
    let metric: Metric = a.metric.into();
    let tree = MetricTree::build(&ds, metric);
    let table = knn_table(&tree, a.k)?;
    fs::create_dir_all(&a.cache_dir).map_err(|e| Error::Io {
        path: a.cache_dir.clone(),
        source: e,
    })?;
    let path = cache_path(&a.cache_dir, &ds, a.k, metric);
    write_cache(&path, &table)?;
    println!("{}", path.display());
    Ok(())
}

fn dispatch(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Measure(a) => cmd_measure(a),
        Cmd::SweepQ(a) => cmd_sweep_q(a),
        Cmd::SweepT(a) => cmd_sweep_t(a),
        Cmd::Bound(a) => cmd_bound(a),
        Cmd::Convert(a) => cmd_convert(a),
        Cmd::Oracle(a) => cmd_oracle(a),
        Cmd::KnnCache(a) => cmd_knn_cache(a),
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Infeasible { .. } => 3,
        Error::Io { .. }
        | Error::Format { .. }
        | Error::CsvParse { .. }
        | Error::NoInput
        | Error::DimensionMismatch { .. } => 2,
        _ => 1,
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // clap exits 2 by default; the contract here is 1 for usage
            // problems and 0 for --help/--version.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    if let Some(threads) = cli.threads {
        // Ignore the error if a global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    if let Err(err) = dispatch(cli.command) {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}
