//! Losses, sampling, synthetic truths and per-trial scoring against the
//! separable oracle.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Binomial, Cauchy, Distribution, Gamma, Poisson};

use crate::estimators::{EstimatorSpec, ProbabilityEstimate, NORMALIZATION_TOL};
use crate::oracles::{natural_oracle, separable_oracle, TrueDistribution};
use crate::solver::SolverConfig;
use crate::{CountsVector, Error, Result};

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch { expected: a, got: b });
    }
    Ok(())
}

/// `KL(p* ‖ p̂)`; `+∞` when `p̂` misses part of the support of `p*`.
pub fn kl_divergence(p_true: &[f64], p_hat: &ProbabilityEstimate) -> Result<f64> {
    check_lengths(p_true.len(), p_hat.len())?;
    if !p_hat.normalized || (p_hat.total() - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::NotNormalized);
    }
    let mut s = 0.0;
    for (&p, &q) in p_true.iter().zip(&p_hat.probs) {
        if p > 0.0 {
            if q <= 0.0 {
                return Ok(f64::INFINITY);
            }
            s += p * libm::log(p / q);
        }
    }
    Ok(s.max(0.0))
}

fn generalized_kl_term(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        return b;
    }
    if b == 0.0 {
        return f64::INFINITY;
    }
    let t = (a - b) / b;
    let v = if t.abs() < 0.5 {
        // Avoids cancellation near a = b.
        b * ((1.0 + t) * libm::log1p(t) - t)
    } else {
        a * libm::log(a / b) - a + b
    };
    v.max(0.0)
}

/// `Σ_i a_i log(a_i/b_i) − a_i + b_i`, for unnormalized nonnegative vectors.
pub fn generalized_kl(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a.len(), b.len())?;
    if a.iter().chain(b).any(|x| !(*x >= 0.0)) {
        return Err(Error::InvalidParameter("generalized KL needs nonnegative inputs".into()));
    }
    Ok(a.iter().zip(b).map(|(&x, &y)| generalized_kl_term(x, y)).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplingMode {
    /// Independent `N_i ~ Poi(n p*_i)`.
    #[default]
    Poissonized,
    /// `N ~ Multinomial(round(n), p*)`.
    Multinomial,
}

pub fn sample_counts<R: Rng + ?Sized>(
    truth: &TrueDistribution,
    mode: SamplingMode,
    rng: &mut R,
) -> CountsVector {
    let n = truth.nominal_n();
    let counts = match mode {
        SamplingMode::Poissonized => truth
            .probs()
            .iter()
            .map(|&p| {
                let rate = n * p;
                if rate > 0.0 {
                    let d = Poisson::new(rate).expect("rate is positive and finite");
                    d.sample(rng) as u64
                } else {
                    0
                }
            })
            .collect(),
        SamplingMode::Multinomial => {
            let mut left = libm::round(n) as u64;
            let mut mass_left = 1.0;
            let mut out = vec![0u64; truth.k()];
            let last = truth.probs().iter().rposition(|p| *p > 0.0).unwrap_or(0);
            for (i, &p) in truth.probs().iter().enumerate() {
                if left == 0 || p == 0.0 {
                    continue;
                }
                let draw = if i == last {
                    left
                } else {
                    let q = (p / mass_left).clamp(0.0, 1.0);
                    Binomial::new(left, q).expect("probability is in [0, 1]").sample(rng)
                };
                out[i] = draw;
                left -= draw;
                mass_left -= p;
            }
            out
        }
    };
    CountsVector::new(counts).expect("truth has at least one symbol")
}

/// Synthetic truths used in the experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyntheticDistribution {
    Uniform,
    /// Mass `1/(2k)` on the first half of the symbols, `3/(2k)` on the rest.
    Step,
    Zipf { alpha: f64 },
    /// One draw from the symmetric `Dirichlet(c, …, c)`.
    Dirichlet { c: f64 },
    /// `p_i ∝ √|z_i|` with `z_i` iid standard Cauchy.
    SqrtCauchy,
}

impl SyntheticDistribution {
    /// Random truths are redrawn every trial.
    pub fn is_random(&self) -> bool {
        matches!(self, Self::Dirichlet { .. } | Self::SqrtCauchy)
    }

    pub fn name(&self) -> String {
        match self {
            Self::Uniform => "uniform".into(),
            Self::Step => "step".into(),
            Self::Zipf { alpha } => format!("zipf{alpha}"),
            Self::Dirichlet { c } => format!("dirichlet{c}"),
            Self::SqrtCauchy => "sqrt_cauchy".into(),
        }
    }
}

pub fn make_distribution<R: Rng + ?Sized>(
    spec: SyntheticDistribution,
    k: usize,
    nominal_n: f64,
    rng: &mut R,
) -> Result<TrueDistribution> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("synthetic distributions need k >= 2, got {k}")));
    }
    let weights: Vec<f64> = match spec {
        SyntheticDistribution::Uniform => vec![1.0; k],
        SyntheticDistribution::Step => {
            let low = k.div_ceil(2);
            (0..k).map(|i| if i < low { 1.0 } else { 3.0 }).collect()
        }
        SyntheticDistribution::Zipf { alpha } => {
            if !(alpha > 0.0) || !alpha.is_finite() {
                return Err(Error::InvalidParameter(format!("zipf exponent must be positive, got {alpha}")));
            }
            (1..=k).map(|i| libm::pow(i as f64, -alpha)).collect()
        }
        SyntheticDistribution::Dirichlet { c } => {
            let g = Gamma::new(c, 1.0)
                .map_err(|_| Error::InvalidParameter(format!("dirichlet concentration must be positive, got {c}")))?;
            let w: Vec<f64> = (0..k).map(|_| g.sample(rng)).collect();
            if !(w.iter().sum::<f64>() > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "dirichlet concentration {c} is too small: every gamma draw underflowed"
                )));
            }
            w
        }
        SyntheticDistribution::SqrtCauchy => {
            let d = Cauchy::new(0.0, 1.0).expect("standard Cauchy");
            (0..k).map(|_| libm::sqrt(libm::fabs(d.sample(rng)))).collect()
        }
    };
    TrueDistribution::new(weights, nominal_n)
}

/// Divide by the total; constant vectors map to exactly `1/k`.
fn normalize(v: &[f64]) -> ProbabilityEstimate {
    let k = v.len();
    if v.iter().all(|x| *x == v[0]) {
        return ProbabilityEstimate::normalized(vec![1.0 / k as f64; k]);
    }
    let z: f64 = v.iter().sum();
    ProbabilityEstimate::normalized(v.iter().map(|x| x / z).collect())
}

/// Anything that can be scored in a trial.
#[derive(Debug, Clone, PartialEq)]
pub enum Contender {
    Estimator { label: String, spec: EstimatorSpec },
    SeparableOracle,
    NaturalOracle,
}

impl Contender {
    pub fn estimator(label: impl Into<String>, spec: EstimatorSpec) -> Self {
        Self::Estimator { label: label.into(), spec }
    }

    pub fn label(&self) -> &str {
        match self {
            Self::Estimator { label, .. } => label,
            Self::SeparableOracle => "separable-oracle",
            Self::NaturalOracle => "natural-oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialScores {
    pub kl_risk: f64,
    /// `KL(p*‖p̂) − KL(p*‖p̄_S / Z)`.
    pub regret: f64,
    /// `genKL(p*‖p̂) − genKL(p*‖p̄_S)` with the unnormalized separable oracle `p̄_S`.
    pub gen_kl_regret: f64,
}

/// The separable oracle of one trial, computed once and shared by every contender.
#[derive(Debug, Clone)]
pub struct OracleBaseline {
    truth: TrueDistribution,
    unnormalized: Vec<f64>,
    normalized: ProbabilityEstimate,
    kl_risk: f64,
    gen_kl_risk: f64,
}

impl OracleBaseline {
    pub fn new(truth: &TrueDistribution, counts: &CountsVector) -> Result<Self> {
        let raw = separable_oracle(truth, counts)?;
        let normalized = normalize(&raw.probs);
        let kl_risk = kl_divergence(truth.probs(), &normalized)?;
        let gen_kl_risk = generalized_kl(truth.probs(), &raw.probs)?;
        Ok(Self {
            truth: truth.clone(),
            unnormalized: raw.probs,
            normalized,
            kl_risk,
            gen_kl_risk,
        })
    }

    pub fn truth(&self) -> &TrueDistribution {
        &self.truth
    }

    pub fn unnormalized(&self) -> &[f64] {
        &self.unnormalized
    }

    pub fn normalized(&self) -> &ProbabilityEstimate {
        &self.normalized
    }

    pub fn kl_risk(&self) -> f64 {
        self.kl_risk
    }

    /// Scores a normalized estimate.
    pub fn score(&self, est: &ProbabilityEstimate) -> Result<TrialScores> {
        let kl_risk = kl_divergence(self.truth.probs(), est)?;
        let gen = generalized_kl(self.truth.probs(), &est.probs)?;
        Ok(TrialScores {
            kl_risk,
            regret: kl_risk - self.kl_risk,
            gen_kl_regret: gen - self.gen_kl_risk,
        })
    }

    pub fn self_scores(&self) -> TrialScores {
        TrialScores {
            kl_risk: self.kl_risk,
            regret: 0.0,
            gen_kl_regret: 0.0,
        }
    }

    pub fn evaluate(
        &self,
        counts: &CountsVector,
        contender: &Contender,
        cfg: &SolverConfig,
    ) -> Result<TrialScores> {
        match contender {
            Contender::SeparableOracle => Ok(self.self_scores()),
            Contender::NaturalOracle => self.score(&natural_oracle(&self.truth, counts)?),
            Contender::Estimator { spec, .. } => self.score(&spec.estimate(counts, cfg)?),
        }
    }
}
