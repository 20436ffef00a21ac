//! Subsampling experiments on a text corpus or count table.
//!
//! The truth is the empirical word distribution of the whole corpus over its
//! full vocabulary, so words missing from a subsample stay in the domain.

use npmle_core::eval::sample_counts;
use npmle_core::{Contender, CountsVector, SamplingMode, SolverConfig, TrueDistribution};
use rayon::prelude::*;

use crate::bench::{aggregate, score_sample, trial_rng, with_threads, BenchmarkOutput, TrialResult};
use crate::error::{AppError, AppResult};
use crate::ingest::{counts_from_stream, CountTable, TokenStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusMode {
    /// `Poi(ratio · total)` tokens drawn with replacement from the corpus.
    Random,
    /// The first `⌈ratio · total⌉` tokens.
    Consecutive,
}

impl std::str::FromStr for CorpusMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "random" => Ok(Self::Random),
            "consecutive" => Ok(Self::Consecutive),
            other => Err(format!("unknown corpus mode {other:?} (random, consecutive)")),
        }
    }
}

pub enum CorpusSource {
    Stream(TokenStream),
    Counts(CountTable),
}

impl CorpusSource {
    pub fn table(&self) -> CountTable {
        match self {
            Self::Stream(s) => counts_from_stream(s),
            Self::Counts(t) => t.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CorpusConfig {
    /// Label written in the `distribution` column.
    pub name: String,
    pub ratio: f64,
    pub mode: CorpusMode,
    pub contenders: Vec<Contender>,
    pub trials: usize,
    pub seed: u64,
    pub solver: SolverConfig,
}

pub fn corpus_experiment(source: &CorpusSource, cfg: &CorpusConfig, threads: Option<usize>) -> AppResult<BenchmarkOutput> {
    if !(cfg.ratio > 0.0 && cfg.ratio <= 1.0) {
        return Err(AppError::Usage(format!("sampling ratio must be in (0, 1], got {}", cfg.ratio)));
    }
    if cfg.trials == 0 {
        return Err(AppError::Usage("trials must be at least 1".into()));
    }
    let table = source.table();
    let total = table.total();
    if table.is_empty() || total == 0 {
        return Err(AppError::Usage("corpus is empty".into()));
    }
    let k = table.len();
    let weights: Vec<f64> = table.counts.iter().map(|&c| c as f64).collect();

    let (n, fixed) = match cfg.mode {
        CorpusMode::Random => (cfg.ratio * total as f64, None),
        CorpusMode::Consecutive => {
            let CorpusSource::Stream(stream) = source else {
                return Err(AppError::Usage("consecutive sampling needs the token stream, not just counts".into()));
            };
            let m = (cfg.ratio * total as f64).ceil() as usize;
            (m as f64, Some(CountsVector::new(stream.prefix_counts(m).counts)?))
        }
    };
    let truth = TrueDistribution::new(weights, n)?;

    let run = |trial: usize| -> Vec<TrialResult> {
        let counts = match &fixed {
            Some(c) => c.clone(),
            None => sample_counts(&truth, SamplingMode::Poissonized, &mut trial_rng(cfg.seed, 0, trial)),
        };
        score_sample(&truth, &counts, &cfg.contenders, &cfg.solver, |c| TrialResult {
            distribution: cfg.name.clone(),
            k,
            n,
            trial,
            estimator: c.label().to_string(),
            kl_risk: f64::NAN,
            regret: f64::NAN,
            gen_kl_regret: f64::NAN,
            failed: false,
            wall_ms: 0.0,
        })
    };
    let per_trial: Vec<Vec<TrialResult>> = with_threads(threads, || (0..cfg.trials).into_par_iter().map(run).collect())?;
    let mut trials: Vec<TrialResult> = per_trial.into_iter().flatten().collect();
    trials.sort_by_key(|r| (cfg.contenders.iter().position(|c| c.label() == r.estimator), r.trial));
    let aggregate = aggregate(&trials);
    Ok(BenchmarkOutput { trials, aggregate })
}
