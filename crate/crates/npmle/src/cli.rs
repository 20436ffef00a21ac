use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use npmle_core::estimators::npmle_estimate;
use npmle_core::solver::solve_npmle;
use npmle_core::{Contender, CountsVector, EstimatorSpec, PretrainedPrior, SolverConfig, SolverReport};
use serde::Serialize;

use crate::bench::{fmt_f64, run_benchmark, write_outputs};
use crate::config::ExperimentConfig;
use crate::corpus::{corpus_experiment, CorpusConfig, CorpusMode, CorpusSource};
use crate::error::{AppError, AppResult};
use crate::ingest::{counts_from_stream, load_count_table, read_corpus, CountTable};
use crate::prior::{prior_to_json, read_prior};

/// Bundled benchmark configs, addressable by name.
pub const BUNDLED_CONFIGS: &[(&str, &str)] = &[
    ("uniform_small", include_str!("../configs/uniform_small.toml")),
    ("desk_uniform", include_str!("../configs/desk_uniform.toml")),
    ("desk_step", include_str!("../configs/desk_step.toml")),
    ("dirichlet_sanity", include_str!("../configs/dirichlet_sanity.toml")),
    ("paper_uniform", include_str!("../configs/paper_uniform.toml")),
    ("paper_step", include_str!("../configs/paper_step.toml")),
    ("paper_zipf1", include_str!("../configs/paper_zipf1.toml")),
    ("paper_zipf05", include_str!("../configs/paper_zipf05.toml")),
    ("paper_dirichlet1", include_str!("../configs/paper_dirichlet1.toml")),
    ("paper_sqrt_cauchy", include_str!("../configs/paper_sqrt_cauchy.toml")),
];

#[derive(Debug, Parser)]
#[command(name = "npmle", version, about = "NPMLE empirical-Bayes distribution estimation")]
pub struct Cli {
    /// Seed for every random draw (overrides a config file's seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for trial-level parallelism.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory; without it, single-artifact commands print to stdout.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    /// `symbol,count` rows.
    Counts,
    /// Raw text, tokenized.
    Text,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Count table (CSV `symbol,count`) or text file.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = InputFormat::Counts)]
    pub format: InputFormat,
    /// The count table starts with a header row.
    #[arg(long)]
    pub header: bool,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long)]
    pub grid_multiplier: Option<u64>,
    #[arg(long)]
    pub max_grid_points: Option<usize>,
    #[arg(long)]
    pub kkt_tol: Option<f64>,
    #[arg(long)]
    pub max_fw_iters: Option<usize>,
    /// Use raw grid maximizers as atoms.
    #[arg(long)]
    pub no_refine: bool,
}

impl SolverArgs {
    fn config(&self) -> AppResult<SolverConfig> {
        let mut c = SolverConfig::default();
        if let Some(v) = self.grid_multiplier {
            c.grid_multiplier = v;
        }
        if let Some(v) = self.max_grid_points {
            c.max_grid_points = v;
        }
        if let Some(v) = self.kkt_tol {
            c.kkt_tol = v;
        }
        if let Some(v) = self.max_fw_iters {
            c.max_fw_iters = v;
        }
        c.refine_atoms = !self.no_refine;
        c.validate().map_err(|e| AppError::Usage(e.to_string()))?;
        Ok(c)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the NPMLE prior; writes prior.json and fit_report.json.
    Fit {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Exit with status 2 if the fit is not certified.
        #[arg(long)]
        strict: bool,
    },
    /// Probability estimates as `symbol,count,prob` rows.
    Estimate {
        #[command(flatten)]
        input: InputArgs,
        /// Estimator, e.g. npmle, npmle:tau=1e-4, mgt:y0=5, mgt-profile,
        /// add-c:c=0.5, laplace, kt, gt, empirical, pretrained:prior=FILE,
        /// cond-npmle:threshold=20000.
        #[arg(long, short, default_value = "npmle")]
        estimator: String,
        /// Prior file for `pretrained`.
        #[arg(long)]
        prior: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Run a benchmark config (a path or a bundled name).
    Benchmark {
        config: String,
        /// Override the number of trials.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Subsample a corpus and score estimators against the full corpus.
    Corpus {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        ratio: f64,
        #[arg(long, default_value = "random")]
        mode: CorpusMode,
        /// Estimator spec, repeatable; oracles are `separable` and `natural`.
        #[arg(long = "estimator", short = 'e', default_values = ["npmle", "mgt-profile", "separable"])]
        estimators: Vec<String>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
    /// Fit the NPMLE and write only the prior, for pretrained Bayes.
    ExportPrior {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

fn load_input(args: &InputArgs) -> AppResult<(CountTable, Option<crate::ingest::TokenStream>)> {
    match args.format {
        InputFormat::Counts => Ok((load_count_table(&args.input, args.header)?, None)),
        InputFormat::Text => {
            let stream = read_corpus(&args.input)?;
            Ok((counts_from_stream(&stream), Some(stream)))
        }
    }
}

fn nonempty_counts(table: &CountTable, path: &Path) -> AppResult<CountsVector> {
    if table.is_empty() {
        return Err(AppError::Usage(format!("{}: no symbols found", path.display())));
    }
    Ok(table.to_counts_vector()?)
}

#[derive(Serialize)]
struct FitReport {
    log_likelihood: f64,
    max_gradient: f64,
    kkt_gap: f64,
    min_atom_gradient: f64,
    iterations: usize,
    converged: bool,
    grid_points: usize,
    data_floor_violations: usize,
    atoms: Vec<[f64; 2]>,
}

impl From<&SolverReport> for FitReport {
    fn from(r: &SolverReport) -> Self {
        Self {
            log_likelihood: r.final_log_likelihood,
            max_gradient: r.max_gradient,
            kkt_gap: r.max_gradient - 1.0,
            min_atom_gradient: r.min_atom_gradient,
            iterations: r.fw_iterations,
            converged: r.converged,
            grid_points: r.grid_points,
            data_floor_violations: r.data_floor_violations,
            atoms: r.solution.atoms().iter().zip(r.solution.weights()).map(|(&a, &w)| [a, w]).collect(),
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> AppResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| AppError::output(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| AppError::output(path, e))
}

fn stdout_write(bytes: &[u8]) -> AppResult<()> {
    std::io::stdout()
        .lock()
        .write_all(bytes)
        .map_err(|e| AppError::output(Path::new("<stdout>"), e))
}

fn fit(input: &InputArgs, solver: &SolverArgs) -> AppResult<(PretrainedPrior, SolverReport)> {
    let (table, _) = load_input(input)?;
    let counts = nonempty_counts(&table, &input.input)?;
    if counts.n_total() == 0 {
        return Err(AppError::Usage(format!("{}: every count is zero", input.input.display())));
    }
    let report = solve_npmle(&counts.profile(), &solver.config()?)?;
    if !report.converged {
        log::warn!(
            "fit not certified: max D - 1 = {:.3e} after {} iterations",
            report.max_gradient - 1.0,
            report.fw_iterations
        );
    }
    let prior = PretrainedPrior::new(report.solution.clone(), counts.n_total() as f64)?;
    Ok((prior, report))
}

fn parse_contenders(specs: &[String], prior: Option<&Path>) -> AppResult<Vec<Contender>> {
    specs
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| match s {
            "separable" | "separable-oracle" => Ok(Contender::SeparableOracle),
            "natural" | "natural-oracle" => Ok(Contender::NaturalOracle),
            _ => Ok(Contender::estimator(s, parse_estimator(s, prior)?)),
        })
        .collect()
}

/// Parse a spec; a bare `pretrained` takes its prior from `fallback`.
fn parse_estimator(spec: &str, fallback: Option<&Path>) -> AppResult<EstimatorSpec> {
    let owned;
    let spec = match fallback {
        Some(p) if spec.starts_with("pretrained") && !spec.contains("prior=") => {
            let sep = if spec.contains(':') { "," } else { ":" };
            owned = format!("{spec}{sep}prior={}", p.display());
            owned.as_str()
        }
        _ => spec,
    };
    let mut load_err = None;
    let parsed = EstimatorSpec::parse_with(spec, |path| {
        read_prior(Path::new(path)).map_err(|e| {
            let msg = e.to_string();
            load_err = Some(e);
            npmle_core::Error::Spec { spec: spec.to_string(), reason: msg }
        })
    });
    match (parsed, load_err) {
        (Ok(p), _) => Ok(p),
        (Err(_), Some(e)) => Err(e),
        (Err(e), None) => Err(AppError::Usage(e.to_string())),
    }
}

pub fn run(cli: &Cli) -> AppResult<()> {
    match &cli.command {
        Command::Fit { input, solver, strict } => {
            let (prior, report) = fit(input, solver)?;
            let report_json = serde_json::to_string_pretty(&FitReport::from(&report)).expect("report serializes") + "\n";
            match &cli.output {
                Some(dir) => {
                    write_file(&dir.join("prior.json"), prior_to_json(&prior).as_bytes())?;
                    write_file(&dir.join("fit_report.json"), report_json.as_bytes())?;
                    println!(
                        "{} atoms, log-likelihood {}, max D - 1 = {:.3e}, converged = {}",
                        report.solution.len(),
                        report.final_log_likelihood,
                        report.max_gradient - 1.0,
                        report.converged
                    );
                }
                None => {
                    stdout_write(prior_to_json(&prior).as_bytes())?;
                    eprint!("{report_json}");
                }
            }
            if *strict && !report.converged {
                return Err(AppError::NotConverged {
                    gap: report.max_gradient - 1.0,
                    iterations: report.fw_iterations,
                });
            }
            Ok(())
        }
        Command::Estimate { input, estimator, prior, solver } => {
            let spec = parse_estimator(estimator, prior.as_deref())?;
            let (table, _) = load_input(input)?;
            let counts = nonempty_counts(&table, &input.input)?;
            let cfg = solver.config()?;
            let est = match &spec {
                EstimatorSpec::Npmle(p) => {
                    let (est, report) = npmle_estimate(&counts, p, &cfg)?;
                    if !report.converged {
                        log::warn!("NPMLE fit not certified: max D - 1 = {:.3e}", report.max_gradient - 1.0);
                    }
                    est
                }
                other => other.estimate(&counts, &cfg)?,
            };
            if est.degenerate {
                log::warn!("estimate degenerated to uniform: the fitted prior leaves no mass to distribute");
            }
            let mut w = csv::Writer::from_writer(Vec::new());
            let csv_err = |e: csv::Error| AppError::Internal(e.to_string());
            w.write_record(["symbol", "count", "prob"]).map_err(csv_err)?;
            for ((s, c), p) in table.symbols.iter().zip(&table.counts).zip(&est.probs) {
                w.write_record([s.as_str(), &c.to_string(), &fmt_f64(*p)]).map_err(csv_err)?;
            }
            let bytes = w.into_inner().map_err(|e| AppError::Internal(e.to_string()))?;
            match &cli.output {
                Some(dir) => write_file(&dir.join("estimate.csv"), &bytes),
                None => stdout_write(&bytes),
            }
        }
        Command::Benchmark { config, trials } => {
            let mut cfg = match BUNDLED_CONFIGS.iter().find(|(name, _)| name == config) {
                Some((name, text)) if !Path::new(config).exists() => {
                    ExperimentConfig::from_toml(text, Path::new("."), Path::new(name))?
                }
                _ => ExperimentConfig::load(Path::new(config))?,
            };
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            if let Some(t) = trials {
                if *t == 0 {
                    return Err(AppError::Usage("--trials must be at least 1".into()));
                }
                cfg.trials = *t;
            }
            let out = run_benchmark(&cfg, cli.threads)?;
            let dir = cli.output.clone().unwrap_or_else(|| PathBuf::from("."));
            let (t, a) = write_outputs(&dir, &cfg.name, &out)?;
            print_aggregate(&out.aggregate);
            println!("wrote {} and {}", t.display(), a.display());
            Ok(())
        }
        Command::Corpus { input, ratio, mode, estimators, trials } => {
            let (table, stream) = load_input(input)?;
            if table.total() == 0 {
                return Err(AppError::Usage(format!("{}: corpus is empty", input.input.display())));
            }
            let source = match stream {
                Some(s) => CorpusSource::Stream(s),
                None => CorpusSource::Counts(table),
            };
            let name = input
                .input
                .file_stem()
                .map_or_else(|| "corpus".into(), |s| s.to_string_lossy().into_owned());
            let cfg = CorpusConfig {
                name: name.clone(),
                ratio: *ratio,
                mode: *mode,
                contenders: parse_contenders(estimators, None)?,
                trials: *trials,
                seed: cli.seed.unwrap_or(0),
                solver: SolverConfig::default(),
            };
            if cfg.contenders.is_empty() {
                return Err(AppError::Usage("no estimators given".into()));
            }
            let out = corpus_experiment(&source, &cfg, cli.threads)?;
            let dir = cli.output.clone().unwrap_or_else(|| PathBuf::from("."));
            let (t, a) = write_outputs(&dir, &format!("{name}_corpus"), &out)?;
            print_aggregate(&out.aggregate);
            println!("wrote {} and {}", t.display(), a.display());
            Ok(())
        }
        Command::ExportPrior { input, solver } => {
            let (prior, _) = fit(input, solver)?;
            match &cli.output {
                Some(dir) => write_file(&dir.join("prior.json"), prior_to_json(&prior).as_bytes()),
                None => stdout_write(prior_to_json(&prior).as_bytes()),
            }
        }
    }
}

fn print_aggregate(rows: &[crate::bench::AggregateRow]) {
    println!("{:>10} {:<24} {:>12} {:>12} {:>6}", "n", "estimator", "mean_regret", "se_regret", "fails");
    for r in rows {
        println!(
            "{:>10} {:<24} {:>12.4e} {:>12.2e} {:>6}",
            r.n, r.estimator, r.mean_regret, r.se_regret, r.n_failures
        );
    }
}

/// Parse `args`, run, and map the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 4 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
