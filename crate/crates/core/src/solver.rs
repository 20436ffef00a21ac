//! Nonparametric maximum likelihood for Poisson mixtures.
//!
//! The mixing distribution is found with the fully-corrective Frank-Wolfe
//! (vertex direction) method: each iteration locates the maximizer of the
//! directional gradient `D_G(θ)` on an equispaced grid over `[N_min, N_max]`,
//! adds it to the support, and re-fits all weights. The fit is certified by
//! the first-order condition `max_θ D_Ĝ(θ) ≤ 1` with `D_Ĝ = 1` on the support.
//!
//! Weights are re-fitted by constrained Newton steps (nonnegative least
//! squares on the local quadratic model, then backtracking), warm started from an exact line search along the Frank-Wolfe direction, so the
//! log-likelihood never decreases.

use alloc::vec;
use alloc::vec::Vec;

use crate::mixture::{ln_factorial, ln_poisson_with, ATOM_MERGE_TOL};
use crate::{Error, MixingDistribution, Profile, Result};

/// Threshold constant for the per-observation density floor check.
pub const DATA_FLOOR_CONSTANT: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Grid points per unit of `N_max`.
    pub grid_multiplier: u64,
    pub max_grid_points: usize,
    /// Certificate tolerance on `max_θ D(θ) - 1`.
    pub kkt_tol: f64,
    /// Per-symbol log-likelihood change below which the weight refit stops.
    pub weight_refit_tol: f64,
    pub weight_refit_max_iter: usize,
    pub max_fw_iters: usize,
    pub prune_weight: f64,
    /// Polish each grid argmax by a golden-section search between its grid
    /// neighbours before adding it to the support.
    pub refine_atoms: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            grid_multiplier: 10,
            max_grid_points: 100_000,
            kkt_tol: 1e-6,
            weight_refit_tol: 1e-10,
            weight_refit_max_iter: 10_000,
            max_fw_iters: 500,
            prune_weight: 1e-12,
            refine_atoms: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(alloc::format!("solver: {what}")));
        if self.grid_multiplier < 1 {
            return bad("grid_multiplier must be at least 1");
        }
        if self.max_grid_points < 2 {
            return bad("max_grid_points must be at least 2");
        }
        if !(self.kkt_tol > 0.0) || !(self.weight_refit_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.prune_weight >= 0.0) {
            return bad("prune_weight must be nonnegative");
        }
        if self.weight_refit_max_iter == 0 || self.max_fw_iters == 0 {
            return bad("iteration caps must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub solution: MixingDistribution,
    pub final_log_likelihood: f64,
    /// `max D_Ĝ(θ)` over the grid and the refined candidate.
    pub max_gradient: f64,
    /// `min D_Ĝ(θ_j)` over the retained atoms.
    pub min_atom_gradient: f64,
    pub fw_iterations: usize,
    pub converged: bool,
    /// Log-likelihood after initialization and after every iteration.
    pub likelihood_trace: Vec<f64>,
    pub grid_points: usize,
    /// Observed counts with `f_Ĝ(y) < c / (k √(y+1))`.
    pub data_floor_violations: usize,
}

/// Equispaced grid on `[N_min, N_max]` with `min(multiplier·N_max, cap)` points.
pub fn build_grid(profile: &Profile, cfg: &SolverConfig) -> Vec<f64> {
    let (lo, hi) = match (profile.min_count(), profile.max_count()) {
        (Some(lo), Some(hi)) => (lo, hi),
        _ => return Vec::new(),
    };
    if hi == 0 {
        return vec![0.0];
    }
    if lo == hi {
        return vec![lo as f64];
    }
    let points = (cfg.grid_multiplier.saturating_mul(hi))
        .min(cfg.max_grid_points as u64)
        .max(2) as usize;
    let (lo, hi) = (lo as f64, hi as f64);
    let step = (hi - lo) / (points - 1) as f64;
    let mut grid: Vec<f64> = (0..points).map(|i| lo + step * i as f64).collect();
    grid[points - 1] = hi;
    grid
}

/// Root of `b = (m - b)(e^b - 1)` in `(m - 1, m)`, by bisection to `1e-12`.
///
/// The closed-form NPMLE of the counts `(0, …, 0, m)` is
/// `(1 - ε) δ_0 + ε δ_b` with `ε = 1 / (k (1 - e^{-b}))`.
pub fn solve_root_example(m: u64) -> Result<f64> {
    if m < 2 {
        return Err(Error::Domain("b = (m - b)(e^b - 1) has no interior root for m < 2"));
    }
    let m = m as f64;
    let g = |b: f64| (m - b) * libm::expm1(b) - b;
    // g increases on [0, m-1] from g(0) = 0 and decreases afterwards, with g(m) < 0.
    let (mut lo, mut hi) = (m - 1.0, m);
    debug_assert!(g(lo) > 0.0 && g(hi) < 0.0);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Distinct observed counts with multiplicities and `log y!`.
struct Data {
    ys: Vec<u64>,
    mult: Vec<f64>,
    lfact: Vec<f64>,
    k: f64,
}

impl Data {
    fn new(profile: &Profile) -> Result<Self> {
        if profile.is_empty() {
            return Err(Error::EmptyDomain);
        }
        let ys: Vec<u64> = profile.iter().map(|(y, _)| y).collect();
        Ok(Self {
            mult: profile.iter().map(|(_, m)| m as f64).collect(),
            lfact: ys.iter().map(|&y| ln_factorial(y)).collect(),
            ys,
            k: profile.k() as f64,
        })
    }

    fn ln_column(&self, theta: f64) -> Vec<f64> {
        self.ys
            .iter()
            .zip(&self.lfact)
            .map(|(&y, &lf)| ln_poisson_with(theta, y, lf))
            .collect()
    }

    /// `D(θ)` against fixed `log f_G(y)` values.
    fn gradient(&self, theta: f64, ln_fg: &[f64]) -> f64 {
        let ln_theta = libm::log(theta);
        let mut acc = 0.0;
        for i in 0..self.ys.len() {
            let y = self.ys[i];
            let lt = if y == 0 {
                -theta
            } else if theta == 0.0 {
                continue;
            } else {
                y as f64 * ln_theta - theta - self.lfact[i]
            };
            acc += self.mult[i] * libm::exp(lt - ln_fg[i]);
        }
        acc / self.k
    }
}

/// Kernel values for a fixed support, stored as `F[j][y] = exp(log f_{θ_j}(y) - s_y)`
/// with per-count shifts `s_y = max_j log f_{θ_j}(y)`.
#[derive(Clone)]
struct Support {
    atoms: Vec<f64>,
    kernel: Vec<Vec<f64>>,
    shift: Vec<f64>,
}

impl Support {
    fn new(data: &Data, atoms: Vec<f64>) -> Result<Self> {
        let cols: Vec<Vec<f64>> = atoms.iter().map(|&a| data.ln_column(a)).collect();
        let shift: Vec<f64> = (0..data.ys.len())
            .map(|i| cols.iter().map(|c| c[i]).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        if let Some(i) = shift.iter().position(|s| *s == f64::NEG_INFINITY) {
            return Err(Error::Infeasible(data.ys[i]));
        }
        let kernel = cols
            .into_iter()
            .map(|c| c.iter().zip(&shift).map(|(l, s)| libm::exp(l - s)).collect())
            .collect();
        Ok(Self {
            atoms,
            kernel,
            shift,
        })
    }

    /// Scaled mixture masses `Σ_j w_j F[j][y]`.
    fn mixture(&self, w: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.shift.len()];
        for (wj, row) in w.iter().zip(&self.kernel) {
            if *wj == 0.0 {
                continue;
            }
            for (gi, f) in g.iter_mut().zip(row) {
                *gi += wj * f;
            }
        }
        g
    }

    fn log_likelihood(&self, data: &Data, w: &[f64]) -> f64 {
        let g = self.mixture(w);
        let mut ll = 0.0;
        for i in 0..g.len() {
            if g[i] <= 0.0 {
                return f64::NEG_INFINITY;
            }
            ll += data.mult[i] * (libm::log(g[i]) + self.shift[i]);
        }
        ll
    }

    fn ln_mixture(&self, w: &[f64]) -> Vec<f64> {
        self.mixture(w)
            .iter()
            .zip(&self.shift)
            .map(|(g, s)| libm::log(*g) + s)
            .collect()
    }

    /// `D_G(θ_j)` for every atom.
    fn atom_gradients(&self, data: &Data, w: &[f64]) -> Vec<f64> {
        let g = self.mixture(w);
        self.kernel
            .iter()
            .map(|row| {
                let mut acc = 0.0;
                for i in 0..g.len() {
                    if row[i] > 0.0 {
                        acc += data.mult[i] * row[i] / g[i];
                    }
                }
                acc / data.k
            })
            .collect()
    }

    /// `D_G(θ_j)` for every atom against precomputed scaled masses `g`.
    fn gradients_at(&self, data: &Data, g: &[f64], d: &mut [f64]) {
        for (dj, row) in d.iter_mut().zip(&self.kernel) {
            let mut acc = 0.0;
            for i in 0..g.len() {
                if row[i] > 0.0 {
                    acc += data.mult[i] * row[i] / g[i];
                }
            }
            *dj = acc / data.k;
        }
    }

    /// Weight refit warm-started at `w` by constrained Newton steps. The
    /// log-likelihood is replaced by its second-order expansion in
    /// `s_y = Σ_j v_j f_j(y) / f_G(y)` around the current mixture, which is a
    /// least-squares problem in `v`; the simplex constraint enters as a
    /// weighted leading row, and the NNLS solution is renormalized and reached
    /// by Armijo backtracking. Returns the final log-likelihood, which is never
    /// below the starting one.
    fn refit(&self, data: &Data, w: &mut [f64], cfg: &SolverConfig, budget: usize) -> f64 {
        let mut ll = self.log_likelihood(data, w);
        let mut d = vec![0.0; w.len()];
        let penalty = 10.0 * libm::sqrt(data.k);
        let sqrt_mult: Vec<f64> = data.mult.iter().map(|m| libm::sqrt(*m)).collect();
        let rhs: Vec<f64> = core::iter::once(penalty)
            .chain(sqrt_mult.iter().map(|s| 2.0 * s))
            .collect();
        for _ in 0..budget {
            let g = self.mixture(w);
            self.gradients_at(data, &g, &mut d);
            let max_d = d.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
            if max_d <= 1.0 + 0.01 * cfg.kkt_tol {
                break;
            }
            let cols: Vec<Vec<f64>> = self
                .kernel
                .iter()
                .map(|row| {
                    core::iter::once(penalty)
                        .chain(
                            row.iter()
                                .zip(&g)
                                .zip(&sqrt_mult)
                                .map(|((f, gi), s)| s * f / gi),
                        )
                        .collect()
                })
                .collect();
            let mut target = crate::nnls::nnls(&cols, &rhs, 1e-12 * data.k);
            let total: f64 = target.iter().sum();
            if !(total > 0.0) {
                break;
            }
            target.iter_mut().for_each(|t| *t /= total);
            // Directional derivative k Σ_j (ŵ_j - w_j) D_j.
            let slope: f64 = target
                .iter()
                .zip(w.iter())
                .zip(&d)
                .map(|((t, x), dj)| (t - x) * dj)
                .sum::<f64>()
                * data.k;
            if !(slope > 0.0) {
                break;
            }
            let mut alpha = 1.0;
            let mut accepted = None;
            while alpha > 1e-10 {
                let cand: Vec<f64> = w
                    .iter()
                    .zip(&target)
                    .map(|(x, t)| x + alpha * (t - x))
                    .collect();
                let lc = self.log_likelihood(data, &cand);
                if lc >= ll + alpha * slope / 3.0 {
                    accepted = Some((cand, lc));
                    break;
                }
                alpha *= 0.5;
            }
            let Some((cand, lc)) = accepted else { break };
            let gain = lc - ll;
            w.copy_from_slice(&cand);
            ll = lc;
            if gain <= cfg.weight_refit_tol * 1e-3 * data.k {
                break;
            }
        }
        ll
    }
}

/// Drop atoms whose weight is negligible or whose gradient sits below one,
/// keeping each removal only if the log-likelihood does not decrease.
fn prune(
    data: &Data,
    support: Support,
    w: Vec<f64>,
    ll: f64,
    cfg: &SolverConfig,
) -> Result<(Support, Vec<f64>, f64)> {
    let d = support.atom_gradients(data, &w);
    let mut order: Vec<usize> = (0..w.len())
        .filter(|&j| w[j] < cfg.prune_weight || d[j] < 1.0 - cfg.kkt_tol)
        .collect();
    if order.is_empty() {
        return Ok((support, w, ll));
    }
    order.sort_by(|&a, &b| w[a].total_cmp(&w[b]).then(a.cmp(&b)));

    let mut keep = vec![true; w.len()];
    let mut best = ll;
    for j in order {
        if keep.iter().filter(|k| **k).count() == 1 {
            break;
        }
        keep[j] = false;
        let trial: Vec<f64> = w
            .iter()
            .zip(&keep)
            .map(|(wj, k)| if *k { *wj } else { 0.0 })
            .collect();
        let total: f64 = trial.iter().sum();
        if total <= 0.0 {
            keep[j] = true;
            continue;
        }
        let trial: Vec<f64> = trial.iter().map(|x| x / total).collect();
        let cand = support.log_likelihood(data, &trial);
        if cand >= best {
            best = cand;
        } else {
            keep[j] = true;
        }
    }
    if keep.iter().all(|k| *k) {
        return Ok((support, w, ll));
    }
    let atoms: Vec<f64> = support
        .atoms
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(a, _)| *a)
        .collect();
    let mut w: Vec<f64> = w
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(x, _)| *x)
        .collect();
    let total: f64 = w.iter().sum();
    for x in &mut w {
        *x /= total;
    }
    let support = Support::new(data, atoms)?;
    let ll = support.log_likelihood(data, &w);
    Ok((support, w, ll))
}

fn to_distribution(support: &Support, w: &[f64]) -> Result<MixingDistribution> {
    let (atoms, weights): (Vec<f64>, Vec<f64>) = support
        .atoms
        .iter()
        .zip(w)
        .filter(|(_, w)| **w > 0.0)
        .map(|(a, w)| (*a, *w))
        .unzip();
    MixingDistribution::new(atoms, weights)
}

/// Optimal mixture weights on a fixed set of atoms.
pub fn refit_weights(
    atoms: &[f64],
    profile: &Profile,
    cfg: &SolverConfig,
) -> Result<MixingDistribution> {
    cfg.validate()?;
    if atoms.is_empty() {
        return Err(Error::InvalidMixture("no atoms to refit"));
    }
    if atoms.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
        return Err(Error::InvalidMixture("atoms must be finite and nonnegative"));
    }
    let data = Data::new(profile)?;
    let support = Support::new(&data, atoms.to_vec())?;
    let mut w = vec![1.0 / atoms.len() as f64; atoms.len()];
    let ll = support.refit(&data, &mut w, cfg, cfg.weight_refit_max_iter);
    let (support, w, _) = prune(&data, support, w, ll, cfg)?;
    to_distribution(&support, &w)
}

/// Maximize a unimodal-on-bracket `f` over `[lo, hi]` by golden-section search.
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if hi - lo <= 1e-13 * (1.0 + hi.abs()) {
            break;
        }
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Grid local maxima this far below one are not polished.
const REFINE_MARGIN: f64 = 1e-3;
/// At most this many local maxima (the highest) are polished per call.
const REFINE_MAX_PEAKS: usize = 16;

/// Best ascent vertex: the grid argmax (smallest θ on ties), or, when
/// refining, the best golden-section polish of the highest grid local maxima.
/// Returns `(θ, D(θ))`.
fn best_vertex(data: &Data, grid: &[f64], ln_fg: &[f64], refine: bool) -> (f64, f64) {
    let d: Vec<f64> = grid.iter().map(|&t| data.gradient(t, ln_fg)).collect();
    let mut best_i = 0;
    for i in 1..d.len() {
        if d[i] > d[best_i] {
            best_i = i;
        }
    }
    let (mut theta, mut best) = (grid[best_i], d[best_i]);
    if !refine || grid.len() < 2 {
        return (theta, best);
    }
    let last = grid.len() - 1;
    let mut peaks: Vec<usize> = (0..=last)
        .filter(|&i| {
            let left = if i > 0 { d[i - 1] } else { f64::NEG_INFINITY };
            let right = if i < last { d[i + 1] } else { f64::NEG_INFINITY };
            d[i] >= left && d[i] >= right && d[i] >= 1.0 - REFINE_MARGIN
        })
        .collect();
    peaks.sort_by(|&a, &b| d[b].total_cmp(&d[a]).then(a.cmp(&b)));
    peaks.truncate(REFINE_MAX_PEAKS);
    peaks.sort_unstable();
    for i in peaks {
        let lo = grid[i.saturating_sub(1)];
        let hi = grid[(i + 1).min(last)];
        let (t, dt) = golden_max(|x| data.gradient(x, ln_fg), lo, hi);
        if dt > best {
            theta = t;
            best = dt;
        }
    }
    (theta, best)
}

/// `(max D over grid and candidate, min D over atoms, candidate vertex)`.
fn certificate(
    data: &Data,
    grid: &[f64],
    support: &Support,
    w: &[f64],
    cfg: &SolverConfig,
) -> (f64, f64, f64) {
    let ln_fg = support.ln_mixture(w);
    let (candidate, max_d) = best_vertex(data, grid, &ln_fg, cfg.refine_atoms);
    let min_atom_d = support
        .atom_gradients(data, w)
        .into_iter()
        .zip(w)
        .filter(|(_, w)| **w > 0.0)
        .map(|(d, _)| d)
        .fold(f64::INFINITY, f64::min);
    (max_d, min_atom_d, candidate)
}

/// Exact line search on `α ↦ ℓ((1-α) G + α δ_c)`, returning the largest step
/// at which the derivative is still nonnegative.
fn line_search(data: &Data, g0: &[f64], fc: &[f64]) -> f64 {
    let deriv = |a: f64| {
        let mut s = 0.0;
        for i in 0..g0.len() {
            let mix = (1.0 - a) * g0[i] + a * fc[i];
            if mix <= 0.0 {
                return f64::NEG_INFINITY;
            }
            s += data.mult[i] * (fc[i] - g0[i]) / mix;
        }
        s
    };
    if deriv(1.0) >= 0.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if deriv(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Fit the NPMLE of the mixing distribution for the given profile.
///
/// Starts from a point mass at the mean count. Non-convergence is reported in
/// the returned [`SolverReport`], not as an error.
pub fn solve_npmle(profile: &Profile, cfg: &SolverConfig) -> Result<SolverReport> {
    cfg.validate()?;
    let data = Data::new(profile)?;
    let grid = build_grid(profile, cfg);
    let tol = cfg.kkt_tol;

    let mean = profile.n_total() as f64 / data.k;
    let mut support = Support::new(&data, vec![mean])?;
    let mut w = vec![1.0];
    let mut ll = support.log_likelihood(&data, &w);
    let mut trace = vec![ll];
    let mut budget = cfg.weight_refit_max_iter;
    let mut doubled = false;
    let mut iterations = 0;

    loop {
        let (max_d, min_atom_d, candidate) = certificate(&data, &grid, &support, &w, cfg);
        if max_d <= 1.0 + tol && min_atom_d >= 1.0 - 10.0 * tol {
            break;
        }
        if iterations >= cfg.max_fw_iters {
            break;
        }
        iterations += 1;

        let duplicate = support
            .atoms
            .iter()
            .any(|&a| (a - candidate).abs() <= ATOM_MERGE_TOL * (1.0 + a));
        if max_d <= 1.0 + tol || duplicate {
            // No new vertex helps: the weights on the current support are under-fitted.
            if duplicate && max_d > 1.0 + tol {
                if doubled {
                    break;
                }
                doubled = true;
                budget = budget.saturating_mul(2);
            }
            let mut nw = w.clone();
            let nll = support.refit(&data, &mut nw, cfg, budget);
            let (s, nw, nll) = prune(&data, support.clone(), nw, nll, cfg)?;
            if nll <= ll {
                break;
            }
            support = s;
            w = nw;
            ll = nll;
            trace.push(ll);
            continue;
        }

        let mut atoms = support.atoms.clone();
        atoms.push(candidate);
        let extended = Support::new(&data, atoms)?;
        let mut ext_w = w.clone();
        ext_w.push(0.0);
        let g0 = extended.mixture(&ext_w);
        let fc = extended.kernel.last().unwrap().clone();
        let alpha = line_search(&data, &g0, &fc);
        for x in ext_w.iter_mut() {
            *x *= 1.0 - alpha;
        }
        *ext_w.last_mut().unwrap() = alpha;
        let nll = extended.refit(&data, &mut ext_w, cfg, budget);
        let (s, nw, nll) = prune(&data, extended, ext_w, nll, cfg)?;
        if nll < ll {
            // Only rounding gets here; keep the previous iterate.
            break;
        }
        support = s;
        w = nw;
        ll = nll;
        trace.push(ll);
    }

    let (max_gradient, min_atom_gradient, _) = certificate(&data, &grid, &support, &w, cfg);
    let converged = max_gradient <= 1.0 + tol && min_atom_gradient >= 1.0 - 10.0 * tol;
    let solution = to_distribution(&support, &w)?;
    let data_floor_violations = data
        .ys
        .iter()
        .filter(|&&y| {
            let floor = DATA_FLOOR_CONSTANT / (data.k * libm::sqrt(y as f64 + 1.0));
            solution.pmf(y) < floor
        })
        .count();
    if converged && data_floor_violations > 0 {
        log::warn!(
            "NPMLE density below c/(k sqrt(y+1)) at {data_floor_violations} observed counts"
        );
    }
    Ok(SolverReport {
        solution,
        final_log_likelihood: ll,
        max_gradient,
        min_atom_gradient,
        fw_iterations: iterations,
        converged,
        likelihood_trace: trace,
        grid_points: grid.len(),
        data_floor_violations,
    })
}
