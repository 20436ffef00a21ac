//! Monte-Carlo risk and regret harness.
//!
//! Every `(n, trial)` pair owns a ChaCha8 stream derived from the seed, and
//! results are reduced in index order, so the output does not depend on the
//! thread count or schedule.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use npmle_core::eval::{make_distribution, sample_counts};
use npmle_core::{Contender, CountsVector, OracleBaseline, SolverConfig, TrueDistribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{DistributionSpec, ExperimentConfig};
use crate::error::{AppError, AppResult};
use crate::ingest::load_count_table;

pub const TRIAL_COLUMNS: [&str; 10] = [
    "distribution",
    "k",
    "n",
    "trial",
    "estimator",
    "kl_risk",
    "regret",
    "gen_kl_regret",
    "failed",
    "wall_ms",
];

pub const AGGREGATE_COLUMNS: [&str; 9] = [
    "distribution",
    "k",
    "n",
    "estimator",
    "mean_risk",
    "se_risk",
    "mean_regret",
    "se_regret",
    "n_failures",
];

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub distribution: String,
    pub k: usize,
    pub n: f64,
    pub trial: usize,
    pub estimator: String,
    /// NaN when the estimator failed.
    pub kl_risk: f64,
    pub regret: f64,
    pub gen_kl_regret: f64,
    pub failed: bool,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub distribution: String,
    pub k: usize,
    pub n: f64,
    pub estimator: String,
    pub mean_risk: f64,
    pub se_risk: f64,
    pub mean_regret: f64,
    pub se_regret: f64,
    /// Failed trials plus trials with infinite risk; both are left out of the means.
    pub n_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchmarkOutput {
    pub trials: Vec<TrialResult>,
    pub aggregate: Vec<AggregateRow>,
}

/// The RNG of trial `trial` at grid position `n_index`.
pub fn trial_rng(seed: u64, n_index: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((n_index as u64) << 32) | trial as u64);
    rng
}

/// Score every contender on one sample. Failures become `failed` rows.
pub(crate) fn score_sample(
    truth: &TrueDistribution,
    counts: &CountsVector,
    contenders: &[Contender],
    solver: &SolverConfig,
    row: impl Fn(&Contender) -> TrialResult,
) -> Vec<TrialResult> {
    let baseline = OracleBaseline::new(truth, counts);
    contenders
        .iter()
        .map(|c| {
            let start = Instant::now();
            let scored = baseline.as_ref().map_err(Clone::clone).and_then(|b| b.evaluate(counts, c, solver));
            let mut r = row(c);
            r.wall_ms = start.elapsed().as_secs_f64() * 1e3;
            match scored {
                Ok(s) => {
                    r.kl_risk = s.kl_risk;
                    r.regret = s.regret;
                    r.gen_kl_regret = s.gen_kl_regret;
                }
                Err(e) => {
                    log::debug!("{} failed at n = {}, trial {}: {e}", c.label(), r.n, r.trial);
                    r.failed = true;
                }
            }
            r
        })
        .collect()
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let m = xs.len();
    if m == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / m as f64;
    if m < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1) as f64;
    (mean, (var / m as f64).sqrt())
}

/// Means and standard errors per `(n, estimator)`, in first-appearance order.
/// `rows` must already be in a fixed order.
pub fn aggregate(rows: &[TrialResult]) -> Vec<AggregateRow> {
    let mut keys: Vec<(String, usize, u64, String)> = Vec::new();
    for r in rows {
        let key = (r.distribution.clone(), r.k, r.n.to_bits(), r.estimator.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(distribution, k, n_bits, estimator)| {
            let group: Vec<&TrialResult> = rows
                .iter()
                .filter(|r| r.distribution == distribution && r.k == k && r.n.to_bits() == n_bits && r.estimator == estimator)
                .collect();
            let ok: Vec<&&TrialResult> = group
                .iter()
                .filter(|r| !r.failed && r.kl_risk.is_finite() && r.regret.is_finite())
                .collect();
            let (mean_risk, se_risk) = mean_se(&ok.iter().map(|r| r.kl_risk).collect::<Vec<_>>());
            let (mean_regret, se_regret) = mean_se(&ok.iter().map(|r| r.regret).collect::<Vec<_>>());
            AggregateRow {
                distribution,
                k,
                n: f64::from_bits(n_bits),
                estimator,
                mean_risk,
                se_risk,
                mean_regret,
                se_regret,
                n_failures: group.len() - ok.len(),
            }
        })
        .collect()
}

/// Run `work` on a pool of `threads` workers (rayon's default when `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, work: impl FnOnce() -> T + Send) -> AppResult<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t.max(1));
    }
    let pool = builder.build().map_err(|e| AppError::Internal(e.to_string()))?;
    Ok(pool.install(work))
}

enum TruthSource {
    Synthetic(npmle_core::SyntheticDistribution),
    Weights(Vec<f64>),
}

pub fn run_benchmark(cfg: &ExperimentConfig, threads: Option<usize>) -> AppResult<BenchmarkOutput> {
    let (source, k) = match &cfg.distribution {
        DistributionSpec::Synthetic(s) => (TruthSource::Synthetic(*s), cfg.k),
        DistributionSpec::FromFile(path) => {
            let table = load_count_table(path, false)?;
            if table.is_empty() || table.total() == 0 {
                return Err(AppError::format(path, "count table has no observations"));
            }
            if cfg.k != 0 && cfg.k != table.len() {
                return Err(AppError::format(
                    path,
                    format!("table has {} symbols but the config says k = {}", table.len(), cfg.k),
                ));
            }
            let len = table.len();
            (TruthSource::Weights(table.counts.iter().map(|&c| c as f64).collect()), len)
        }
    };
    let name = cfg.name.clone();
    let jobs: Vec<(usize, usize)> = (0..cfg.n_grid.len())
        .flat_map(|i| (0..cfg.trials).map(move |t| (i, t)))
        .collect();

    let run_job = |&(n_index, trial): &(usize, usize)| -> AppResult<Vec<TrialResult>> {
        let n = cfg.n_grid[n_index];
        let mut rng = trial_rng(cfg.seed, n_index, trial);
        let truth = match &source {
            TruthSource::Synthetic(s) => make_distribution(*s, k, n, &mut rng)?,
            TruthSource::Weights(w) => TrueDistribution::new(w.clone(), n)?,
        };
        let counts = sample_counts(&truth, cfg.sampling, &mut rng);
        Ok(score_sample(&truth, &counts, &cfg.contenders, &cfg.solver, |c| TrialResult {
            distribution: name.clone(),
            k,
            n,
            trial,
            estimator: c.label().to_string(),
            kl_risk: f64::NAN,
            regret: f64::NAN,
            gen_kl_regret: f64::NAN,
            failed: false,
            wall_ms: 0.0,
        }))
    };
    let per_job: Vec<AppResult<Vec<TrialResult>>> = with_threads(threads, || jobs.par_iter().map(run_job).collect())?;
    let mut trials = Vec::with_capacity(jobs.len() * cfg.contenders.len());
    for r in per_job {
        trials.extend(r?);
    }
    // Group by n, then estimator, then trial for the per-trial file.
    trials.sort_by_key(|r| {
        let e = cfg.contenders.iter().position(|c| c.label() == r.estimator).unwrap_or(usize::MAX);
        (cfg.n_grid.iter().position(|&n| n == r.n).unwrap_or(0), e, r.trial)
    });
    let aggregate = aggregate(&trials);
    Ok(BenchmarkOutput { trials, aggregate })
}

/// Shortest round-trip form; `inf` for infinities and an empty field for NaN.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x}")
    }
}

pub fn parse_f64(s: &str) -> Result<f64, std::num::ParseFloatError> {
    match s {
        "" => Ok(f64::NAN),
        s => s.parse(),
    }
}

pub fn write_trials(out: impl Write, rows: &[TrialResult]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRIAL_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.distribution.clone(),
            r.k.to_string(),
            fmt_f64(r.n),
            r.trial.to_string(),
            r.estimator.clone(),
            fmt_f64(r.kl_risk),
            fmt_f64(r.regret),
            fmt_f64(r.gen_kl_regret),
            r.failed.to_string(),
            format!("{:.3}", r.wall_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregate(out: impl Write, rows: &[AggregateRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(AGGREGATE_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.distribution.clone(),
            r.k.to_string(),
            fmt_f64(r.n),
            r.estimator.clone(),
            fmt_f64(r.mean_risk),
            fmt_f64(r.se_risk),
            fmt_f64(r.mean_regret),
            fmt_f64(r.se_regret),
            r.n_failures.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn check_header(rdr: &mut csv::Reader<impl std::io::Read>, want: &[&str]) -> Result<(), String> {
    let got = rdr.headers().map_err(|e| e.to_string())?;
    if got.iter().ne(want.iter().copied()) {
        return Err(format!("expected columns {}, found {}", want.join(","), got.iter().collect::<Vec<_>>().join(",")));
    }
    Ok(())
}

pub fn read_trials(input: impl std::io::Read) -> Result<Vec<TrialResult>, String> {
    let mut rdr = csv::Reader::from_reader(input);
    check_header(&mut rdr, &TRIAL_COLUMNS)?;
    let bad = |e: &dyn std::fmt::Display| e.to_string();
    rdr.records()
        .map(|rec| {
            let rec = rec.map_err(|e| bad(&e))?;
            Ok(TrialResult {
                distribution: rec[0].to_string(),
                k: rec[1].parse().map_err(|e| bad(&e))?,
                n: parse_f64(&rec[2]).map_err(|e| bad(&e))?,
                trial: rec[3].parse().map_err(|e| bad(&e))?,
                estimator: rec[4].to_string(),
                kl_risk: parse_f64(&rec[5]).map_err(|e| bad(&e))?,
                regret: parse_f64(&rec[6]).map_err(|e| bad(&e))?,
                gen_kl_regret: parse_f64(&rec[7]).map_err(|e| bad(&e))?,
                failed: rec[8].parse().map_err(|e| bad(&e))?,
                wall_ms: parse_f64(&rec[9]).map_err(|e| bad(&e))?,
            })
        })
        .collect()
}

pub fn read_aggregate(input: impl std::io::Read) -> Result<Vec<AggregateRow>, String> {
    let mut rdr = csv::Reader::from_reader(input);
    check_header(&mut rdr, &AGGREGATE_COLUMNS)?;
    let bad = |e: &dyn std::fmt::Display| e.to_string();
    rdr.records()
        .map(|rec| {
            let rec = rec.map_err(|e| bad(&e))?;
            Ok(AggregateRow {
                distribution: rec[0].to_string(),
                k: rec[1].parse().map_err(|e| bad(&e))?,
                n: parse_f64(&rec[2]).map_err(|e| bad(&e))?,
                estimator: rec[3].to_string(),
                mean_risk: parse_f64(&rec[4]).map_err(|e| bad(&e))?,
                se_risk: parse_f64(&rec[5]).map_err(|e| bad(&e))?,
                mean_regret: parse_f64(&rec[6]).map_err(|e| bad(&e))?,
                se_regret: parse_f64(&rec[7]).map_err(|e| bad(&e))?,
                n_failures: rec[8].parse().map_err(|e| bad(&e))?,
            })
        })
        .collect()
}

/// Write `<dir>/<stem>_trials.csv` and `<dir>/<stem>_aggregate.csv`.
pub fn write_outputs(dir: &Path, stem: &str, out: &BenchmarkOutput) -> AppResult<(std::path::PathBuf, std::path::PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| AppError::output(dir, e))?;
    let trials = dir.join(format!("{stem}_trials.csv"));
    let agg = dir.join(format!("{stem}_aggregate.csv"));
    for (path, res) in [
        (&trials, std::fs::File::create(&trials).map_err(csv::Error::from).and_then(|f| write_trials(std::io::BufWriter::new(f), &out.trials))),
        (&agg, std::fs::File::create(&agg).map_err(csv::Error::from).and_then(|f| write_aggregate(std::io::BufWriter::new(f), &out.aggregate))),
    ] {
        res.map_err(|e| AppError::output(path, std::io::Error::other(e.to_string())))?;
    }
    Ok((trials, agg))
}
