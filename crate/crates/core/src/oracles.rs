//! Baselines that know the true distribution.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::estimators::ProbabilityEstimate;
use crate::mixture::{MixingDistribution, PosteriorRule};
use crate::{CountsVector, Error, Result};

/// Largest domain accepted by [`pi_oracle_exact`].
pub const PI_ORACLE_MAX_K: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct TrueDistribution {
    probs: Vec<f64>,
    nominal_n: f64,
}

impl TrueDistribution {
    /// Normalizes `probs`; `nominal_n` is the Poisson rate `n` of the sampling model.
    pub fn new(probs: Vec<f64>, nominal_n: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::EmptyDomain);
        }
        if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidParameter(
                "probabilities must be finite and nonnegative".into(),
            ));
        }
        if !(nominal_n > 0.0) || !nominal_n.is_finite() {
            return Err(Error::InvalidParameter(format!("sample size must be positive, got {nominal_n}")));
        }
        let z: f64 = probs.iter().sum();
        if !(z > 0.0) {
            return Err(Error::InvalidParameter("probabilities sum to zero".into()));
        }
        let probs = if z == 1.0 { probs } else { probs.into_iter().map(|p| p / z).collect() };
        Ok(Self { probs, nominal_n })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    pub fn nominal_n(&self) -> f64 {
        self.nominal_n
    }

    pub fn with_nominal_n(&self, n: f64) -> Result<Self> {
        Self::new(self.probs.clone(), n)
    }

    /// `G_k = (1/k) Σ_j δ_{n p*_j}`.
    pub fn rate_distribution(&self) -> MixingDistribution {
        let k = self.k();
        let atoms = self.probs.iter().map(|p| p * self.nominal_n).collect();
        MixingDistribution::new(atoms, vec![1.0 / k as f64; k])
            .expect("rates are finite and nonnegative")
    }
}

fn check_len(truth: &TrueDistribution, counts: &CountsVector) -> Result<()> {
    if truth.k() != counts.k() {
        return Err(Error::LengthMismatch {
            expected: truth.k(),
            got: counts.k(),
        });
    }
    Ok(())
}

/// `p̄_i = θ_{G_k}(N_i) / n`, not normalized.
pub fn separable_oracle(truth: &TrueDistribution, counts: &CountsVector) -> Result<ProbabilityEstimate> {
    check_len(truth, counts)?;
    let g = truth.rate_distribution();
    let profile = counts.profile();
    if let Some((y, _)) = profile.iter().find(|(y, _)| g.ln_pmf(*y) == f64::NEG_INFINITY) {
        return Err(Error::ImpossibleCount(y));
    }
    let rule = PosteriorRule::with_counts(g, 0.0, profile.iter().map(|(y, _)| y))?;
    let n = truth.nominal_n();
    let probs = counts
        .counts()
        .iter()
        .map(|&y| rule.posterior_mean(y).map(|t| t / n))
        .collect::<Result<Vec<_>>>()?;
    Ok(ProbabilityEstimate::unnormalized(probs))
}

/// Each count class receives its true total mass, split evenly among its symbols.
pub fn natural_oracle(truth: &TrueDistribution, counts: &CountsVector) -> Result<ProbabilityEstimate> {
    check_len(truth, counts)?;
    let mut classes: BTreeMap<u64, (f64, u64)> = BTreeMap::new();
    for (&y, &p) in counts.counts().iter().zip(truth.probs()) {
        let e = classes.entry(y).or_insert((0.0, 0));
        e.0 += p;
        e.1 += 1;
    }
    let probs = counts
        .counts()
        .iter()
        .map(|y| {
            let (mass, size) = classes[y];
            mass / size as f64
        })
        .collect();
    Ok(ProbabilityEstimate::normalized(probs))
}

/// Exact permutation-invariant oracle by enumeration of all `k!` relabelings.
pub fn pi_oracle_exact(truth: &TrueDistribution, counts: &CountsVector) -> Result<ProbabilityEstimate> {
    check_len(truth, counts)?;
    let k = truth.k();
    if k > PI_ORACLE_MAX_K {
        return Err(Error::TooManySymbols { k, max: PI_ORACLE_MAX_K });
    }
    let ln_p: Vec<f64> = truth.probs().iter().map(|p| libm::log(*p)).collect();
    let ys = counts.counts();
    let ln_lik = |perm: &[usize]| -> f64 {
        let mut s = 0.0;
        for (j, &y) in ys.iter().enumerate() {
            if y > 0 {
                s += y as f64 * ln_p[perm[j]];
            }
        }
        s
    };

    // Running sums scaled by exp(-shift).
    let mut shift = f64::NEG_INFINITY;
    let mut den = 0.0;
    let mut num = vec![0.0; k];
    let mut accumulate = |perm: &[usize]| {
        let l = ln_lik(perm);
        if l == f64::NEG_INFINITY {
            return;
        }
        if l > shift {
            let r = libm::exp(shift - l);
            den *= r;
            for v in &mut num {
                *v *= r;
            }
            shift = l;
        }
        let w = libm::exp(l - shift);
        den += w;
        for (i, v) in num.iter_mut().enumerate() {
            *v += w * truth.probs()[perm[i]];
        }
    };

    // Heap's algorithm.
    let mut perm: Vec<usize> = (0..k).collect();
    let mut c = vec![0usize; k];
    accumulate(&perm);
    let mut i = 1;
    while i < k {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            accumulate(&perm);
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }

    if !(den > 0.0) {
        return Err(Error::DegeneratePermutations);
    }
    Ok(ProbabilityEstimate::normalized(num.into_iter().map(|v| v / den).collect()))
}
