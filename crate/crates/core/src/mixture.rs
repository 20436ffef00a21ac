//! Poisson and Poisson-mixture primitives.
//!
//! Everything is evaluated in log space: corpus counts reach 10^5 and beyond,
//! where `θ^y / y!` overflows long before the ratio it feeds does.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::{Error, Profile, Result};

/// Relative distance below which two atoms are considered the same point.
pub const ATOM_MERGE_TOL: f64 = 1e-9;

pub(crate) fn ln_factorial(y: u64) -> f64 {
    if y < 2 {
        0.0
    } else {
        libm::lgamma(y as f64 + 1.0)
    }
}

/// `log Poi(θ; y)` with `lgamma(y+1)` supplied by the caller.
#[inline]
pub(crate) fn ln_poisson_with(theta: f64, y: u64, ln_fact: f64) -> f64 {
    if y == 0 {
        -theta
    } else if theta == 0.0 {
        f64::NEG_INFINITY
    } else {
        y as f64 * libm::log(theta) - theta - ln_fact
    }
}

/// `log(e^{-θ} θ^y / y!)`; `θ = 0` yields `0` for `y = 0` and `-∞` otherwise.
pub fn poisson_log_pmf(theta: f64, y: u64) -> Result<f64> {
    if !(theta >= 0.0) || !theta.is_finite() {
        return Err(Error::Domain("Poisson rate must be finite and nonnegative"));
    }
    Ok(ln_poisson_with(theta, y, ln_factorial(y)))
}

/// Numerically stable `log Σ exp(x_i)`; `-∞` for an empty or all-`-∞` input.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = xs.into_iter().map(|x| libm::exp(x - max)).sum();
    max + libm::log(s)
}

/// A discrete prior `G = Σ_j w_j δ_{θ_j}` on Poisson rates.
///
/// Atoms are kept strictly increasing; atoms closer than
/// `ATOM_MERGE_TOL · (1 + θ)` are merged at construction with their weights
/// summed. Weights are renormalized to sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingDistribution {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl MixingDistribution {
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidMixture("no atoms"));
        }
        if atoms.len() != weights.len() {
            return Err(Error::LengthMismatch {
                expected: atoms.len(),
                got: weights.len(),
            });
        }
        if atoms.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return Err(Error::InvalidMixture("atoms must be finite and nonnegative"));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidMixture("weights must be finite and positive"));
        }

        let mut pairs: Vec<(f64, f64)> = atoms.into_iter().zip(weights).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut atoms: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut weights: Vec<f64> = Vec::with_capacity(pairs.len());
        for (a, w) in pairs {
            match atoms.last() {
                Some(&last) if a - last <= ATOM_MERGE_TOL * (1.0 + last) => {
                    *weights.last_mut().unwrap() += w;
                }
                _ => {
                    atoms.push(a);
                    weights.push(w);
                }
            }
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        Ok(Self { atoms, weights })
    }

    pub fn point_mass(theta: f64) -> Result<Self> {
        Self::new(alloc::vec![theta], alloc::vec![1.0])
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }

    /// The same weights on atoms multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor >= 0.0) || !factor.is_finite() {
            return Err(Error::Domain("scale factor must be finite and nonnegative"));
        }
        Self::new(
            self.atoms.iter().map(|a| a * factor).collect(),
            self.weights.clone(),
        )
    }

    /// `log f_G(y)`.
    pub fn ln_pmf(&self, y: u64) -> f64 {
        let lf = ln_factorial(y);
        log_sum_exp(
            self.atoms
                .iter()
                .zip(&self.weights)
                .map(move |(&a, &w)| libm::log(w) + ln_poisson_with(a, y, lf)),
        )
    }

    /// `f_G(y) = Σ_j w_j Poi(θ_j; y)`.
    pub fn pmf(&self, y: u64) -> f64 {
        libm::exp(self.ln_pmf(y))
    }
}

/// `f_G(y)`, the Poisson-mixture mass at `y`.
pub fn mixture_pmf(prior: &MixingDistribution, y: u64) -> f64 {
    prior.pmf(y)
}

/// `Σ_y Φ_y log f_G(y)`; `-∞` when the prior cannot produce an observed count.
pub fn log_likelihood(prior: &MixingDistribution, profile: &Profile) -> f64 {
    let mut total = 0.0;
    for (y, m) in profile.iter() {
        let lf = prior.ln_pmf(y);
        if lf == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        total += m as f64 * lf;
    }
    total
}

/// Directional gradient `D_G(θ) = (1/k) Σ_y Φ_y f_θ(y) / f_G(y)`.
///
/// The NPMLE is characterised by `D_Ĝ ≤ 1` everywhere with equality on its
/// support.
pub fn gradient_d(prior: &MixingDistribution, profile: &Profile, theta: f64) -> Result<f64> {
    if !(theta >= 0.0) || !theta.is_finite() {
        return Err(Error::Domain("gradient evaluated at an invalid rate"));
    }
    if profile.is_empty() {
        return Err(Error::EmptyDomain);
    }
    let mut acc = 0.0;
    for (y, m) in profile.iter() {
        let lg = prior.ln_pmf(y);
        if lg == f64::NEG_INFINITY {
            return Err(Error::Infeasible(y));
        }
        let lt = ln_poisson_with(theta, y, ln_factorial(y));
        acc += m as f64 * libm::exp(lt - lg);
    }
    Ok(acc / profile.k() as f64)
}

/// A prior fixed at a known total-count scale, as stored in prior files.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainedPrior {
    pub prior: MixingDistribution,
    /// Total count of the sample the prior was fitted on.
    pub n_scale: f64,
}

impl PretrainedPrior {
    pub fn new(prior: MixingDistribution, n_scale: f64) -> Result<Self> {
        if !(n_scale > 0.0) || !n_scale.is_finite() {
            return Err(Error::InvalidParameter(alloc::format!(
                "n_scale must be positive, got {n_scale}"
            )));
        }
        Ok(Self { prior, n_scale })
    }

    /// The prior with atoms moved to a sample of `n_total` observations.
    pub fn rescaled_to(&self, n_total: f64) -> Result<MixingDistribution> {
        self.prior.scaled(n_total / self.n_scale)
    }
}

/// Regularized Bayes rule `θ_G(y; ρ) = (y+1)(Δf_G(y) / (f_G(y) ∨ ρ) + 1)`.
///
/// With `ρ = 0` this is the posterior mean `(y+1) f_G(y+1) / f_G(y)`.
/// Values for the counts passed to [`PosteriorRule::with_counts`] are
/// tabulated eagerly, so a rule can be shared across threads as is.
#[derive(Debug, Clone)]
pub struct PosteriorRule {
    prior: MixingDistribution,
    rho: f64,
    table: BTreeMap<u64, f64>,
}

impl PosteriorRule {
    pub fn new(prior: MixingDistribution, rho: f64) -> Result<Self> {
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(Error::InvalidParameter(alloc::format!(
                "rho must be finite and nonnegative, got {rho}"
            )));
        }
        Ok(Self {
            prior,
            rho,
            table: BTreeMap::new(),
        })
    }

    pub fn with_counts(
        prior: MixingDistribution,
        rho: f64,
        ys: impl IntoIterator<Item = u64>,
    ) -> Result<Self> {
        let mut rule = Self::new(prior, rho)?;
        for y in ys {
            if !rule.table.contains_key(&y) {
                let v = bayes_rule(&rule.prior, rule.rho, y)?;
                rule.table.insert(y, v);
            }
        }
        Ok(rule)
    }

    pub fn prior(&self) -> &MixingDistribution {
        &self.prior
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn posterior_mean(&self, y: u64) -> Result<f64> {
        match self.table.get(&y) {
            Some(&v) => Ok(v),
            None => bayes_rule(&self.prior, self.rho, y),
        }
    }
}

/// `θ_G(y; ρ)` for a single count.
pub fn posterior_mean(rule: &PosteriorRule, y: u64) -> Result<f64> {
    rule.posterior_mean(y)
}

fn bayes_rule(prior: &MixingDistribution, rho: f64, y: u64) -> Result<f64> {
    let ln_fy = prior.ln_pmf(y);
    if rho == 0.0 && ln_fy == f64::NEG_INFINITY {
        return Err(Error::Domain("posterior mean undefined where f_G(y) = 0"));
    }
    let scale = (y + 1) as f64;
    // Single atom: the posterior is the atom itself, exactly.
    if prior.len() == 1 && ln_fy > f64::NEG_INFINITY {
        return Ok(prior.atoms()[0]);
    }
    let ln_fy1 = prior.ln_pmf(y + 1);
    let fy = libm::exp(ln_fy);
    if rho == 0.0 || fy >= rho {
        // Δf/f + 1 = f(y+1)/f(y); the ratio of logs keeps huge counts finite.
        return Ok(scale * libm::exp(ln_fy1 - ln_fy));
    }
    let delta = libm::exp(ln_fy1) - fy;
    Ok((scale * (delta / rho + 1.0)).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::CountsVector;
    use alloc::vec;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn poisson_log_pmf_values() {
        assert_eq!(poisson_log_pmf(0.0, 0).unwrap(), 0.0);
        assert_eq!(poisson_log_pmf(0.0, 3).unwrap(), f64::NEG_INFINITY);
        assert_eq!(poisson_log_pmf(1.0, 0).unwrap(), -1.0);
        // log(e^-5 · 125/6), 40-digit reference
        let v = poisson_log_pmf(5.0, 3).unwrap();
        assert!(close(v, -1.963_445_731_925_753_877, 1e-14), "{v}");
        assert!(poisson_log_pmf(-1.0, 0).is_err());
        assert!(poisson_log_pmf(f64::NAN, 0).is_err());
    }

    #[test]
    fn huge_counts_stay_finite() {
        let v = poisson_log_pmf(1.0e5, 100_000).unwrap();
        // Stirling: -0.5 log(2π·1e5)
        assert!((v + 0.5 * (2.0 * core::f64::consts::PI * 1e5).ln()).abs() < 1e-5);
    }

    #[test]
    fn mixture_pmf_examples() {
        let g0 = MixingDistribution::point_mass(0.0).unwrap();
        assert_eq!(mixture_pmf(&g0, 0), 1.0);
        assert_eq!(mixture_pmf(&g0, 3), 0.0);

        let g = MixingDistribution::point_mass(2.5).unwrap();
        for y in 0..10 {
            let direct = poisson_log_pmf(2.5, y).unwrap().exp();
            assert!(close(mixture_pmf(&g, y), direct, 1e-14));
        }

        let g = MixingDistribution::new(vec![1.0, 3.0], vec![0.5, 0.5]).unwrap();
        assert!(close(mixture_pmf(&g, 2), 0.203_990_764_120_554_452, 1e-13));
    }

    #[test]
    fn construction_sorts_and_merges() {
        let g = MixingDistribution::new(vec![3.0, 1.0, 3.0 + 1e-12], vec![1.0, 2.0, 1.0]).unwrap();
        assert_eq!(g.atoms(), &[1.0, 3.0]);
        assert!(close(g.weights()[0], 0.5, 1e-15));
        assert!(close(g.weights()[1], 0.5, 1e-15));
        assert!(MixingDistribution::new(vec![], vec![]).is_err());
        assert!(MixingDistribution::new(vec![-1.0], vec![1.0]).is_err());
        assert!(MixingDistribution::new(vec![1.0], vec![0.0]).is_err());
        assert!(MixingDistribution::new(vec![1.0, 2.0], vec![1.0]).is_err());
    }

    #[test]
    fn log_likelihood_infeasible_prior() {
        let g0 = MixingDistribution::point_mass(0.0).unwrap();
        let p = CountsVector::new(vec![0, 2, 0]).unwrap().profile();
        assert_eq!(log_likelihood(&g0, &p), f64::NEG_INFINITY);
        assert_eq!(gradient_d(&g0, &p, 1.0), Err(Error::Infeasible(2)));
    }

    #[test]
    fn log_likelihood_point_mass_on_binary_counts() {
        // δ_q on 0/1 data: Σ log f = k (q log q − q) with q the mean count.
        let counts = vec![1, 0, 0, 1, 0, 1, 1, 0, 0, 0];
        let k = counts.len() as f64;
        let p = CountsVector::new(counts).unwrap().profile();
        let q = 0.4;
        let g = MixingDistribution::point_mass(q).unwrap();
        let expected = k * (q * q.ln() - q);
        assert!(close(log_likelihood(&g, &p), expected, 1e-13));
    }

    #[test]
    fn gradient_is_one_on_a_single_symbol() {
        let p = CountsVector::new(vec![4]).unwrap().profile();
        let g = MixingDistribution::point_mass(4.0).unwrap();
        assert!(close(gradient_d(&g, &p, 4.0).unwrap(), 1.0, 1e-14));
    }

    #[test]
    fn gradient_of_binary_example_matches_closed_form() {
        let counts = vec![1, 0, 0, 1, 0, 1, 0, 0, 0, 0];
        let q = 0.3;
        let p = CountsVector::new(counts).unwrap().profile();
        let g = MixingDistribution::point_mass(q).unwrap();
        for i in 0..=20 {
            let t = i as f64 / 20.0;
            let analytic = (1.0 - q + t) * (q - t).exp();
            assert!(close(gradient_d(&g, &p, t).unwrap(), analytic, 1e-13));
        }
    }

    #[test]
    fn posterior_single_atom_is_the_atom() {
        let rule = PosteriorRule::new(MixingDistribution::point_mass(3.7).unwrap(), 0.0).unwrap();
        for y in [0, 1, 5, 50, 10_000] {
            assert_eq!(rule.posterior_mean(y).unwrap(), 3.7);
        }
    }

    #[test]
    fn posterior_two_atoms_matches_reference() {
        let g = MixingDistribution::new(vec![1.0, 4.0], vec![0.5, 0.5]).unwrap();
        let rule = PosteriorRule::new(g, 0.0).unwrap();
        assert!(close(rule.posterior_mean(2).unwrap(), 2.330_172_808_628_943_938, 1e-13));
    }

    #[test]
    fn posterior_undefined_where_prior_has_no_mass() {
        let rule = PosteriorRule::new(MixingDistribution::point_mass(0.0).unwrap(), 0.0).unwrap();
        assert!(rule.posterior_mean(2).is_err());
        let floored = PosteriorRule::new(MixingDistribution::point_mass(0.0).unwrap(), 0.1).unwrap();
        // f(2) = f(3) = 0 < ρ, so θ = (y+1)(0/ρ + 1)
        assert_eq!(floored.posterior_mean(2).unwrap(), 3.0);
    }

    #[test]
    fn tabulated_and_direct_agree() {
        let g = MixingDistribution::new(vec![0.5, 2.0, 9.0], vec![0.2, 0.5, 0.3]).unwrap();
        let table = PosteriorRule::with_counts(g.clone(), 1e-3, [0, 1, 2, 7, 7, 30]).unwrap();
        let direct = PosteriorRule::new(g, 1e-3).unwrap();
        for y in [0, 1, 2, 7, 30, 31] {
            assert_eq!(table.posterior_mean(y).unwrap(), direct.posterior_mean(y).unwrap());
        }
    }

    fn arb_prior() -> impl Strategy<Value = MixingDistribution> {
        proptest::collection::vec((0.0f64..60.0, 0.01f64..1.0), 1..6).prop_map(|pairs| {
            let (a, w): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            MixingDistribution::new(a, w).unwrap()
        })
    }

    /// `E[θ | Y = y]` summed directly over the atoms.
    fn direct_posterior(g: &MixingDistribution, y: u64) -> f64 {
        let logs: Vec<f64> = g
            .atoms()
            .iter()
            .zip(g.weights())
            .map(|(&a, &w)| w.ln() + poisson_log_pmf(a, y).unwrap())
            .collect();
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let den: f64 = logs.iter().map(|l| (l - m).exp()).sum();
        let num: f64 = logs
            .iter()
            .zip(g.atoms())
            .map(|(l, a)| a * (l - m).exp())
            .sum();
        num / den
    }

    proptest! {
        #[test]
        fn ratio_identity(g in arb_prior(), y in 0u64..=50) {
            let rule = PosteriorRule::new(g.clone(), 0.0).unwrap();
            if g.ln_pmf(y) > f64::NEG_INFINITY {
                let a = rule.posterior_mean(y).unwrap();
                let b = direct_posterior(&g, y);
                prop_assert!(close(a, b, 1e-10), "{a} vs {b}");
            }
        }

        #[test]
        fn posterior_nondecreasing(g in arb_prior()) {
            let rule = PosteriorRule::new(g, 0.0).unwrap();
            let mut prev = rule.posterior_mean(0).unwrap();
            for y in 1..=100 {
                let v = rule.posterior_mean(y).unwrap();
                prop_assert!(v >= prev * (1.0 - 1e-12), "y={y}: {v} < {prev}");
                prev = v;
            }
        }

        #[test]
        fn pmf_normalizes(g in arb_prior()) {
            let top = g.atoms().last().copied().unwrap();
            let cutoff = (top + 10.0 * top.sqrt() + 50.0).ceil() as u64;
            let total: f64 = (0..=cutoff).map(|y| g.pmf(y)).sum();
            prop_assert!((total - 1.0).abs() < 1e-9, "{total}");
        }

        #[test]
        fn regularized_rule_lower_bound(g in arb_prior(), y in 1u64..40, rho in 1e-6f64..0.36) {
            let rule = PosteriorRule::new(g, rho).unwrap();
            prop_assert!(rule.posterior_mean(y).unwrap() >= rho * rho / 16.0);
        }

        #[test]
        fn profile_likelihood_matches_per_symbol_sum(
            g in arb_prior(),
            counts in proptest::collection::vec(0u64..40, 1..50),
        ) {
            let direct: f64 = counts.iter().map(|&c| g.ln_pmf(c)).sum();
            let p = CountsVector::new(counts).unwrap().profile();
            let compressed = log_likelihood(&g, &p);
            if direct.is_finite() {
                prop_assert!(close(compressed, direct, 1e-10));
            } else {
                prop_assert_eq!(compressed, direct);
            }
        }
    }
}
