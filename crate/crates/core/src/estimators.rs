//! Probability estimators: empirical, add-constant, the Good-Turing family,
//! and the empirical-Bayes NPMLE rule with its pretrained and conditional
//! variants.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::mixture::PosteriorRule;
use crate::solver::{solve_npmle, SolverConfig, SolverReport};
use crate::{CountsVector, Error, PretrainedPrior, Profile, Result};

/// Tolerance used to call an estimate normalized.
pub const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityEstimate {
    pub probs: Vec<f64>,
    pub normalized: bool,
    /// Set when the rule produced no mass at all and the uniform fallback was used.
    pub degenerate: bool,
}

impl ProbabilityEstimate {
    pub fn normalized(probs: Vec<f64>) -> Self {
        Self {
            probs,
            normalized: true,
            degenerate: false,
        }
    }

    pub fn unnormalized(probs: Vec<f64>) -> Self {
        Self {
            probs,
            normalized: false,
            degenerate: false,
        }
    }

    fn uniform_fallback(k: usize) -> Self {
        Self {
            probs: vec![1.0 / k as f64; k],
            normalized: true,
            degenerate: true,
        }
    }

    /// Normalize `weights` by their sum; `None` when the sum is zero or not finite.
    fn from_weights(mut weights: Vec<f64>) -> Option<Self> {
        let z: f64 = weights.iter().sum();
        if !(z > 0.0) || !z.is_finite() {
            return None;
        }
        for p in &mut weights {
            *p /= z;
        }
        Some(Self::normalized(weights))
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// Regularization of the NPMLE plug-in rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NpmleParams {
    /// Extra mass `τ` added to every unseen symbol before normalization.
    pub tau: f64,
    /// Floor `ρ` on `f_G(y)` in the Bayes rule.
    pub rho: f64,
}

impl Default for NpmleParams {
    /// Tuning-free: `τ = ρ = 0`.
    fn default() -> Self {
        Self { tau: 0.0, rho: 0.0 }
    }
}

impl NpmleParams {
    /// `τ = 1/k`, `ρ = (nk)^{-5}`.
    pub fn theory(k: usize, n: f64) -> Self {
        let nk = n * k as f64;
        Self {
            tau: 1.0 / k as f64,
            rho: libm::pow(nk, -5.0),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidParameter(format!("tau must be >= 0, got {}", self.tau)));
        }
        if !(self.rho >= 0.0) || !self.rho.is_finite() {
            return Err(Error::InvalidParameter(format!("rho must be >= 0, got {}", self.rho)));
        }
        Ok(())
    }
}

fn require_sample(counts: &CountsVector) -> Result<f64> {
    match counts.n_total() {
        0 => Err(Error::EmptySample),
        n => Ok(n as f64),
    }
}

/// `p̂_i = N_i / n`.
pub fn empirical(counts: &CountsVector) -> Result<ProbabilityEstimate> {
    let n = require_sample(counts)?;
    Ok(ProbabilityEstimate::normalized(
        counts.counts().iter().map(|&c| c as f64 / n).collect(),
    ))
}

/// `p̂_i = (N_i + c) / (n + c k)`; `c = 1` is Laplace, `c = 1/2` Krichevsky-Trofimov.
pub fn add_c(counts: &CountsVector, c: f64) -> Result<ProbabilityEstimate> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidParameter(format!("add-c constant must be positive, got {c}")));
    }
    let denom = counts.n_total() as f64 + c * counts.k() as f64;
    Ok(ProbabilityEstimate::normalized(
        counts.counts().iter().map(|&n| (n as f64 + c) / denom).collect(),
    ))
}

/// `p̂_i ∝ (N_i + 1) Φ_{N_i+1} / Φ_{N_i}`.
///
/// Assigns zero to every symbol whose next count class is empty, in
/// particular to the most frequent symbols; fails when nothing gets mass.
pub fn good_turing_original(counts: &CountsVector) -> Result<ProbabilityEstimate> {
    require_sample(counts)?;
    let profile = counts.profile();
    let weights = counts
        .counts()
        .iter()
        .map(|&y| (y + 1) as f64 * profile.phi(y + 1) as f64 / profile.phi(y) as f64)
        .collect();
    ProbabilityEstimate::from_weights(weights).ok_or(Error::GoodTuringUndefined)
}

fn mgt_weight(profile: &Profile, y: u64, n: f64, use_gt: bool) -> f64 {
    if use_gt {
        (y + 1) as f64 / n * (profile.phi(y + 1) + 1) as f64 / profile.phi(y) as f64
    } else {
        y as f64 / n
    }
}

/// Good-Turing with `+1` smoothing for counts `≤ y0`, empirical above.
/// `y0 = u64::MAX` applies the smoothed Good-Turing branch everywhere.
pub fn modified_gt(counts: &CountsVector, y0: u64) -> Result<ProbabilityEstimate> {
    let n = require_sample(counts)?;
    let profile = counts.profile();
    let weights = counts
        .counts()
        .iter()
        .map(|&y| mgt_weight(&profile, y, n, y <= y0))
        .collect();
    ProbabilityEstimate::from_weights(weights).ok_or(Error::EmptySample)
}

/// Modified Good-Turing whose branch is chosen per symbol by `N_i ≤ Φ_{N_i+1}`.
pub fn modified_gt_profile(counts: &CountsVector) -> Result<ProbabilityEstimate> {
    let n = require_sample(counts)?;
    let profile = counts.profile();
    let weights = counts
        .counts()
        .iter()
        .map(|&y| mgt_weight(&profile, y, n, y <= profile.phi(y + 1)))
        .collect();
    ProbabilityEstimate::from_weights(weights).ok_or(Error::EmptySample)
}

/// Apply the Bayes rule of `rule` to every count, add `τ` on unseen symbols,
/// and normalize; falls back to uniform when no mass remains.
fn plug_in(counts: &CountsVector, rule: &PosteriorRule, tau: f64) -> Result<ProbabilityEstimate> {
    let n = counts.n_total().max(1) as f64;
    let mut weights = Vec::with_capacity(counts.k());
    for &y in counts.counts() {
        let mut v = rule.posterior_mean(y)?;
        if y == 0 {
            v += tau;
        }
        weights.push(v / n);
    }
    Ok(ProbabilityEstimate::from_weights(weights)
        .unwrap_or_else(|| ProbabilityEstimate::uniform_fallback(counts.k())))
}

/// NPMLE plug-in estimate `p̂_i ∝ θ_Ĝ(N_i; ρ) + τ 1{N_i = 0}`.
pub fn npmle_estimate(
    counts: &CountsVector,
    params: &NpmleParams,
    cfg: &SolverConfig,
) -> Result<(ProbabilityEstimate, SolverReport)> {
    params.validate()?;
    require_sample(counts)?;
    let profile = counts.profile();
    let report = solve_npmle(&profile, cfg)?;
    let rule = PosteriorRule::with_counts(
        report.solution.clone(),
        params.rho,
        profile.iter().map(|(y, _)| y),
    )?;
    let est = plug_in(counts, &rule, params.tau)?;
    Ok((est, report))
}

/// Bayes rule under a fixed prior, with atoms rescaled from the prior's
/// `n_scale` to this sample's total count.
pub fn pretrained_bayes(
    counts: &CountsVector,
    prior: &PretrainedPrior,
    params: &NpmleParams,
) -> Result<ProbabilityEstimate> {
    params.validate()?;
    let n = require_sample(counts)?;
    let rescaled = prior.rescaled_to(n)?;
    let rule = PosteriorRule::with_counts(rescaled, params.rho, counts.profile().iter().map(|(y, _)| y))?;
    plug_in(counts, &rule, params.tau)
}

/// NPMLE on the symbols counted at most `threshold` times, empirical
/// frequencies above it.
///
/// Low-count symbols share the empirical mass of their group,
/// `p̂_S = Σ_{i∈S} N_i / n`, in proportion to the NPMLE estimate computed on
/// the group alone.
pub fn conditional_npmle(
    counts: &CountsVector,
    threshold: u64,
    params: &NpmleParams,
    cfg: &SolverConfig,
) -> Result<ProbabilityEstimate> {
    let n = require_sample(counts)?;
    let low: Vec<usize> = (0..counts.k())
        .filter(|&i| counts.counts()[i] <= threshold)
        .collect();
    if low.is_empty() {
        return empirical(counts);
    }
    if low.len() == counts.k() {
        return npmle_estimate(counts, params, cfg).map(|(e, _)| e);
    }
    let sub = CountsVector::new(low.iter().map(|&i| counts.counts()[i]).collect())?;
    let mut probs: Vec<f64> = counts.counts().iter().map(|&c| c as f64 / n).collect();
    if sub.n_total() == 0 {
        // No observed mass below the threshold: everything goes to the high counts.
        for &i in &low {
            probs[i] = 0.0;
        }
        return Ok(ProbabilityEstimate::normalized(probs));
    }
    let mass = sub.n_total() as f64 / n;
    let (q, _) = npmle_estimate(&sub, params, cfg)?;
    for (&i, qi) in low.iter().zip(&q.probs) {
        probs[i] = mass * qi;
    }
    Ok(ProbabilityEstimate::normalized(probs))
}

/// A configured estimator, as named on the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorSpec {
    Empirical,
    AddC { c: f64 },
    GoodTuring,
    ModifiedGt { y0: u64 },
    ModifiedGtProfile,
    Npmle(NpmleParams),
    Pretrained { prior: PretrainedPrior, params: NpmleParams },
    ConditionalNpmle { threshold: u64, params: NpmleParams },
}

impl EstimatorSpec {
    pub fn estimate(&self, counts: &CountsVector, cfg: &SolverConfig) -> Result<ProbabilityEstimate> {
        match self {
            Self::Empirical => empirical(counts),
            Self::AddC { c } => add_c(counts, *c),
            Self::GoodTuring => good_turing_original(counts),
            Self::ModifiedGt { y0 } => modified_gt(counts, *y0),
            Self::ModifiedGtProfile => modified_gt_profile(counts),
            Self::Npmle(p) => npmle_estimate(counts, p, cfg).map(|(e, _)| e),
            Self::Pretrained { prior, params } => pretrained_bayes(counts, prior, params),
            Self::ConditionalNpmle { threshold, params } => {
                conditional_npmle(counts, *threshold, params, cfg)
            }
        }
    }

    /// Parse an estimator name such as `npmle:tau=1e-4`, `mgt:y0=5`,
    /// `add-c:c=0.5` or `cond-npmle:threshold=20000`.
    ///
    /// `pretrained:prior=PATH` hands `PATH` to `load_prior`, so file access
    /// stays with the caller.
    pub fn parse_with(
        spec: &str,
        load_prior: impl FnOnce(&str) -> Result<PretrainedPrior>,
    ) -> Result<Self> {
        let fail = |reason: &str| Error::Spec {
            spec: spec.to_string(),
            reason: reason.to_string(),
        };
        let spec = spec.trim();
        let (name, args) = match spec.split_once(':') {
            Some((n, a)) => (n.trim(), a.trim()),
            None => (spec, ""),
        };
        let mut kv: Vec<(String, String)> = Vec::new();
        for part in args.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| fail("arguments must look like key=value"))?;
            kv.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut used = vec![false; kv.len()];
        let mut take = |key: &str| -> Option<String> {
            let i = kv.iter().position(|(k, _)| k == key)?;
            used[i] = true;
            Some(kv[i].1.clone())
        };
        let num = |v: Option<String>, default: f64| -> Result<f64> {
            match v {
                None => Ok(default),
                Some(s) => s.parse::<f64>().map_err(|_| fail("expected a number")),
            }
        };
        let int = |v: Option<String>| -> Result<Option<u64>> {
            match v {
                None => Ok(None),
                Some(s) if s == "inf" => Ok(Some(u64::MAX)),
                Some(s) => s.parse::<u64>().map(Some).map_err(|_| fail("expected an integer")),
            }
        };

        let parsed = match name {
            "empirical" => Self::Empirical,
            "laplace" => Self::AddC { c: 1.0 },
            "kt" => Self::AddC { c: 0.5 },
            "add-c" => {
                let c = num(take("c"), f64::NAN)?;
                if !(c > 0.0) || !c.is_finite() {
                    return Err(fail("add-c needs c > 0"));
                }
                Self::AddC { c }
            }
            "gt" => Self::GoodTuring,
            "mgt" => match int(take("y0"))? {
                Some(y0) => Self::ModifiedGt { y0 },
                None => Self::ModifiedGtProfile,
            },
            "mgt-profile" => Self::ModifiedGtProfile,
            "npmle" | "pretrained" | "cond-npmle" => {
                let params = NpmleParams {
                    tau: num(take("tau"), 0.0)?,
                    rho: num(take("rho"), 0.0)?,
                };
                params.validate().map_err(|e| fail(&e.to_string()))?;
                match name {
                    "npmle" => Self::Npmle(params),
                    "cond-npmle" => {
                        let threshold = int(take("threshold"))?
                            .ok_or_else(|| fail("cond-npmle needs threshold=N"))?;
                        if threshold == 0 {
                            return Err(fail("threshold must be positive"));
                        }
                        Self::ConditionalNpmle { threshold, params }
                    }
                    _ => {
                        let path = take("prior").ok_or_else(|| fail("pretrained needs prior=FILE"))?;
                        let prior = load_prior(&path)?;
                        Self::Pretrained { prior, params }
                    }
                }
            }
            _ => return Err(fail("unknown estimator")),
        };
        if let Some(i) = used.iter().position(|u| !u) {
            return Err(fail(&format!("unknown argument `{}`", kv[i].0)));
        }
        Ok(parsed)
    }
}

impl core::str::FromStr for EstimatorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse_with(s, |_| {
            Err(Error::Spec {
                spec: s.to_string(),
                reason: "prior files cannot be loaded here".to_string(),
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::MixingDistribution;
    use crate::solver::solve_root_example;
    use proptest::prelude::*;

    fn cv(c: &[u64]) -> CountsVector {
        CountsVector::new(c.to_vec()).unwrap()
    }

    fn assert_probs(est: &ProbabilityEstimate, expected: &[f64], tol: f64) {
        assert_eq!(est.len(), expected.len());
        for (a, b) in est.probs.iter().zip(expected) {
            assert!((a - b).abs() <= tol, "{:?} vs {:?}", est.probs, expected);
        }
    }

    #[test]
    fn empirical_examples() {
        assert_eq!(empirical(&cv(&[3, 1, 0])).unwrap().probs, vec![0.75, 0.25, 0.0]);
        assert_eq!(empirical(&cv(&[0, 0, 5])).unwrap().probs, vec![0.0, 0.0, 1.0]);
        assert_eq!(empirical(&cv(&[0, 0, 0])), Err(Error::EmptySample));
    }

    #[test]
    fn add_c_examples() {
        assert_probs(&add_c(&cv(&[3, 0, 1]), 1.0).unwrap(), &[4.0 / 7.0, 1.0 / 7.0, 2.0 / 7.0], 1e-15);
        assert_probs(&add_c(&cv(&[0, 0, 0, 0]), 0.5).unwrap(), &[0.25; 4], 0.0);
        assert!(add_c(&cv(&[1]), 0.0).is_err());
    }

    #[test]
    fn add_c_tends_to_empirical() {
        let c = cv(&[5, 0, 2, 9, 1, 0]);
        let a = add_c(&c, 1e-8).unwrap();
        let e = empirical(&c).unwrap();
        for (i, &n) in c.counts().iter().enumerate() {
            if n > 0 {
                assert!((a.probs[i] - e.probs[i]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn good_turing_pathologies() {
        assert_eq!(good_turing_original(&cv(&[0, 0, 0, 4])), Err(Error::GoodTuringUndefined));
        assert_eq!(
            good_turing_original(&cv(&[1, 1, 0, 0])).unwrap().probs,
            vec![0.0, 0.0, 0.5, 0.5]
        );
        // The unique most frequent symbol always gets nothing.
        let est = good_turing_original(&cv(&[0, 1, 1, 2, 7, 0])).unwrap();
        assert_eq!(est.probs[4], 0.0);
    }

    #[test]
    fn modified_gt_hand_example() {
        // n = 2, Φ0 = Φ1 = 2: unseen get (1/2)(3/2), singletons get (2/2)(1/2).
        let est = modified_gt(&cv(&[1, 1, 0, 0]), 10).unwrap();
        assert_probs(&est, &[0.2, 0.2, 0.3, 0.3], 1e-15);
    }

    #[test]
    fn modified_gt_without_gt_branch_is_empirical() {
        let c = cv(&[3, 1, 4, 1, 5]);
        assert_eq!(modified_gt(&c, 0).unwrap(), empirical(&c).unwrap());
    }

    #[test]
    fn modified_gt_infinite_threshold_is_smoothed_gt_everywhere() {
        let c = cv(&[0, 1, 1, 2, 7, 0, 3]);
        let n = c.n_total() as f64;
        let p = c.profile();
        let w: Vec<f64> = c.counts().iter().map(|&y| mgt_weight(&p, y, n, true)).collect();
        let z: f64 = w.iter().sum();
        let expected: Vec<f64> = w.iter().map(|x| x / z).collect();
        assert_eq!(modified_gt(&c, u64::MAX).unwrap().probs, expected);
    }

    #[test]
    fn modified_gt_profile_branches() {
        // Φ2 = 0 < 1, so singletons take the empirical branch; unseen take GT.
        let c = cv(&[1, 1, 1, 0, 0]);
        let n = 3.0;
        let unseen = (1.0 / n) * (3.0 + 1.0) / 2.0;
        let single = 1.0 / n;
        let z = 2.0 * unseen + 3.0 * single;
        let est = modified_gt_profile(&c).unwrap();
        assert_probs(&est, &[single / z, single / z, single / z, unseen / z, unseen / z], 1e-15);
        // N = 5 with Φ6 = 0: empirical branch.
        let c = cv(&[5, 0, 2]);
        let est = modified_gt_profile(&c).unwrap();
        let w = [5.0 / 7.0, (1.0 / 7.0) * (0.0 + 1.0) / 1.0, 2.0 / 7.0];
        let z: f64 = w.iter().sum();
        assert_probs(&est, &[w[0] / z, w[1] / z, w[2] / z], 1e-15);
    }

    #[test]
    fn npmle_on_binary_counts_is_uniform() {
        let c = cv(&[1, 0, 0, 1, 1, 0, 0, 0, 1, 0]);
        let (est, report) = npmle_estimate(&c, &NpmleParams::default(), &SolverConfig::default()).unwrap();
        assert_eq!(report.solution.len(), 1);
        assert!((report.solution.atoms()[0] - 0.4).abs() < 1e-12);
        for p in &est.probs {
            assert!((p - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn npmle_unseen_mass_on_single_symbol_data() {
        let (m, k) = (4u64, 10usize);
        let mut counts = vec![0u64; k - 1];
        counts.push(m);
        let (est, _) = npmle_estimate(&cv(&counts), &NpmleParams::default(), &SolverConfig::default()).unwrap();
        // Closed form: θ(0) = f(1)/f(0) with Ĝ = (1-ε)δ0 + εδ_b, and θ(m) = b.
        let b = solve_root_example(m).unwrap();
        let eps = 1.0 / (k as f64 * (1.0 - (-b).exp()));
        let theta0 = eps * b * (-b).exp() / ((1.0 - eps) + eps * (-b).exp());
        let z = (k - 1) as f64 * theta0 + b;
        assert!((est.probs[0] - theta0 / z).abs() < 1e-5, "{} vs {}", est.probs[0], theta0 / z);
        assert!((est.probs[k - 1] - b / z).abs() < 1e-5);
    }

    #[test]
    fn zero_posterior_mass_falls_back_to_uniform() {
        let prior = PretrainedPrior::new(MixingDistribution::point_mass(0.0).unwrap(), 1.0).unwrap();
        assert_eq!(
            pretrained_bayes(&cv(&[0, 0, 0, 0]), &prior, &NpmleParams::default()),
            Err(Error::EmptySample)
        );
        let rule = PosteriorRule::new(MixingDistribution::point_mass(0.0).unwrap(), 0.0).unwrap();
        let est = plug_in(&cv(&[0, 0, 0, 0]), &rule, 0.0).unwrap();
        assert!(est.degenerate && est.normalized);
        assert_eq!(est.probs, vec![0.25; 4]);
    }

    #[test]
    fn npmle_tau_makes_everything_positive() {
        let c = cv(&[0, 0, 0, 0, 0, 0, 0, 9]);
        let (est, _) = npmle_estimate(&c, &NpmleParams { tau: 1e-3, rho: 0.0 }, &SolverConfig::default()).unwrap();
        assert!(est.probs.iter().all(|p| *p > 0.0));
    }

    #[test]
    fn pretrained_identity_and_scaling() {
        let c = cv(&[0, 3, 1, 0, 7, 2, 2, 0, 1, 5]);
        let cfg = SolverConfig::default();
        let (fit, report) = npmle_estimate(&c, &NpmleParams::default(), &cfg).unwrap();
        let prior = PretrainedPrior::new(report.solution.clone(), c.n_total() as f64).unwrap();
        let pre = pretrained_bayes(&c, &prior, &NpmleParams::default()).unwrap();
        for (a, b) in pre.probs.iter().zip(&fit.probs) {
            assert!((a - b).abs() < 1e-14);
        }
        let doubled = PretrainedPrior::new(report.solution.scaled(2.0).unwrap(), 2.0 * c.n_total() as f64).unwrap();
        let pre2 = pretrained_bayes(&c, &doubled, &NpmleParams::default()).unwrap();
        for (a, b) in pre.probs.iter().zip(&pre2.probs) {
            assert!((a - b).abs() < 1e-14);
        }
        let point = PretrainedPrior::new(MixingDistribution::point_mass(17.0).unwrap(), 3.0).unwrap();
        let flat = pretrained_bayes(&c, &point, &NpmleParams::default()).unwrap();
        assert!(flat.probs.iter().all(|p| *p == flat.probs[0]));
    }

    #[test]
    fn conditional_npmle_limits() {
        let c = cv(&[0, 3, 1, 0, 40, 2, 2, 0, 1, 55]);
        let cfg = SolverConfig::default();
        let params = NpmleParams::default();
        let full = npmle_estimate(&c, &params, &cfg).unwrap().0;
        assert_eq!(conditional_npmle(&c, 55, &params, &cfg).unwrap(), full);

        let no_zero = cv(&[3, 1, 40, 2]);
        assert_eq!(conditional_npmle(&no_zero, 0, &params, &cfg).unwrap(), empirical(&no_zero).unwrap());

        let split = conditional_npmle(&c, 10, &params, &cfg).unwrap();
        let low_mass: f64 = c
            .counts()
            .iter()
            .zip(&split.probs)
            .filter(|(n, _)| **n <= 10)
            .map(|(_, p)| p)
            .sum();
        let expected = (0 + 3 + 1 + 0 + 2 + 2 + 0 + 1) as f64 / c.n_total() as f64;
        assert!((low_mass - expected).abs() < 1e-15);
        assert_eq!(split.probs[4], 40.0 / c.n_total() as f64);
        assert!((split.total() - 1.0).abs() < 1e-12);

        // Only zeros below the threshold: no mass there.
        let zeros_low = conditional_npmle(&cv(&[0, 0, 30, 50]), 10, &params, &cfg).unwrap();
        assert_eq!(zeros_low.probs, vec![0.0, 0.0, 30.0 / 80.0, 50.0 / 80.0]);
    }

    #[test]
    fn parse_specs() {
        let p = |s: &str| s.parse::<EstimatorSpec>();
        assert_eq!(p("empirical").unwrap(), EstimatorSpec::Empirical);
        assert_eq!(p("laplace").unwrap(), EstimatorSpec::AddC { c: 1.0 });
        assert_eq!(p("kt").unwrap(), EstimatorSpec::AddC { c: 0.5 });
        assert_eq!(p("add-c:c=0.5").unwrap(), EstimatorSpec::AddC { c: 0.5 });
        assert_eq!(p("gt").unwrap(), EstimatorSpec::GoodTuring);
        assert_eq!(p("mgt:y0=5").unwrap(), EstimatorSpec::ModifiedGt { y0: 5 });
        assert_eq!(p("mgt:y0=inf").unwrap(), EstimatorSpec::ModifiedGt { y0: u64::MAX });
        assert_eq!(p("mgt").unwrap(), EstimatorSpec::ModifiedGtProfile);
        assert_eq!(p("mgt-profile").unwrap(), EstimatorSpec::ModifiedGtProfile);
        assert_eq!(p("npmle").unwrap(), EstimatorSpec::Npmle(NpmleParams::default()));
        assert_eq!(
            p("npmle:tau=1e-4").unwrap(),
            EstimatorSpec::Npmle(NpmleParams { tau: 1e-4, rho: 0.0 })
        );
        assert_eq!(
            p("cond-npmle:threshold=20000").unwrap(),
            EstimatorSpec::ConditionalNpmle { threshold: 20000, params: NpmleParams::default() }
        );
        assert!(p("add-c").is_err());
        assert!(p("add-c:c=-1").is_err());
        assert!(p("npmle:sigma=2").is_err());
        assert!(p("nope").is_err());
        assert!(p("pretrained:prior=x.json").is_err());
        assert!(p("cond-npmle").is_err());

        let prior = PretrainedPrior::new(MixingDistribution::point_mass(1.0).unwrap(), 10.0).unwrap();
        let loaded = EstimatorSpec::parse_with("pretrained:prior=a.json,tau=0.1", |path| {
            assert_eq!(path, "a.json");
            Ok(prior.clone())
        })
        .unwrap();
        assert_eq!(
            loaded,
            EstimatorSpec::Pretrained { prior, params: NpmleParams { tau: 0.1, rho: 0.0 } }
        );
    }

    fn all_specs() -> Vec<EstimatorSpec> {
        vec![
            EstimatorSpec::Empirical,
            EstimatorSpec::AddC { c: 0.5 },
            EstimatorSpec::GoodTuring,
            EstimatorSpec::ModifiedGt { y0: 3 },
            EstimatorSpec::ModifiedGtProfile,
            EstimatorSpec::Npmle(NpmleParams::default()),
            EstimatorSpec::Npmle(NpmleParams { tau: 0.01, rho: 1e-9 }),
            EstimatorSpec::ConditionalNpmle { threshold: 4, params: NpmleParams::default() },
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn permutation_equivariance(
            counts in proptest::collection::vec(0u64..12, 2..25),
            seed in any::<u64>(),
        ) {
            prop_assume!(counts.iter().any(|c| *c > 0));
            let k = counts.len();
            // Fisher-Yates driven by a simple LCG keeps the test self-contained.
            let mut perm: Vec<usize> = (0..k).collect();
            let mut s = seed | 1;
            for i in (1..k).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (s >> 33) as usize % (i + 1));
            }
            let permuted: Vec<u64> = perm.iter().map(|&i| counts[i]).collect();
            let (a, b) = (cv(&counts), cv(&permuted));
            let cfg = SolverConfig::default();
            for spec in all_specs() {
                match (spec.estimate(&a, &cfg), spec.estimate(&b, &cfg)) {
                    (Ok(x), Ok(y)) => {
                        for (j, &i) in perm.iter().enumerate() {
                            prop_assert!((y.probs[j] - x.probs[i]).abs() <= 1e-15, "{:?}", spec);
                        }
                    }
                    (Err(x), Err(y)) => prop_assert_eq!(x, y),
                    (x, y) => prop_assert!(false, "{:?}: {:?} vs {:?}", spec, x, y),
                }
            }
        }

        #[test]
        fn normalized_outputs_sum_to_one(counts in proptest::collection::vec(0u64..30, 1..40)) {
            prop_assume!(counts.iter().any(|c| *c > 0));
            let c = cv(&counts);
            for spec in all_specs() {
                if let Ok(est) = spec.estimate(&c, &SolverConfig::default()) {
                    prop_assert!(est.normalized);
                    prop_assert!((est.total() - 1.0).abs() <= NORMALIZATION_TOL);
                    prop_assert!(est.probs.iter().all(|p| *p >= 0.0));
                }
            }
        }

        #[test]
        fn mgt_is_strictly_positive(counts in proptest::collection::vec(0u64..30, 1..40), y0 in 0u64..40) {
            prop_assume!(counts.iter().any(|c| *c > 0));
            let c = cv(&counts);
            prop_assert!(modified_gt(&c, y0).unwrap().probs.iter().all(|p| *p > 0.0));
            prop_assert!(modified_gt_profile(&c).unwrap().probs.iter().all(|p| *p > 0.0));
        }

        #[test]
        fn npmle_is_monotone_in_count(counts in proptest::collection::vec(0u64..40, 2..60)) {
            prop_assume!(counts.iter().any(|c| *c > 0));
            let c = cv(&counts);
            let (est, _) = npmle_estimate(&c, &NpmleParams::default(), &SolverConfig::default()).unwrap();
            for i in 0..counts.len() {
                for j in 0..counts.len() {
                    if counts[i] > counts[j] {
                        prop_assert!(est.probs[i] >= est.probs[j] * (1.0 - 1e-12));
                    }
                }
            }
        }
    }
}
