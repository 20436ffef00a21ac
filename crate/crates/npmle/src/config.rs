//! Benchmark definitions in TOML.
//!
//! ```toml
//! name = "uniform_small"
//! distribution = "uniform"          # or { kind = "zipf", alpha = 1.0 }
//! k = 1000
//! n_grid = [1000, 2000, 5000]
//! trials = 50
//! estimators = ["npmle", "mgt-profile", "laplace"]
//! oracles = ["separable", "natural"]
//! sampling = "poissonized"
//! seed = 1
//!
//! [solver]
//! kkt_tol = 1e-6
//! ```

use std::ops::Range;
use std::path::{Path, PathBuf};

use npmle_core::{Contender, EstimatorSpec, SamplingMode, SolverConfig, SyntheticDistribution};
use serde::Deserialize;
use toml::Spanned;

use crate::error::{AppError, AppResult};
use crate::prior::read_prior;

#[derive(Debug, Clone, PartialEq)]
pub enum DistributionSpec {
    Synthetic(SyntheticDistribution),
    /// Truth proportional to a count table.
    FromFile(PathBuf),
}

impl DistributionSpec {
    pub fn name(&self) -> String {
        match self {
            Self::Synthetic(s) => s.name(),
            Self::FromFile(p) => p
                .file_stem()
                .map_or_else(|| "file".to_string(), |s| s.to_string_lossy().into_owned()),
        }
    }

    pub fn is_random(&self) -> bool {
        matches!(self, Self::Synthetic(s) if s.is_random())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub distribution: DistributionSpec,
    pub k: usize,
    /// Ascending nominal sample sizes.
    pub n_grid: Vec<f64>,
    pub trials: usize,
    /// Estimators first, then oracles, in file order.
    pub contenders: Vec<Contender>,
    pub sampling: SamplingMode,
    pub seed: u64,
    pub redraw_truth_per_trial: bool,
    pub solver: SolverConfig,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Number {
    Int(i64),
    Float(f64),
}

impl Number {
    fn value(&self) -> f64 {
        match *self {
            Number::Int(i) => i as f64,
            Number::Float(f) => f,
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawDistribution {
    Name(String),
    Table {
        kind: String,
        alpha: Option<Number>,
        c: Option<Number>,
        path: Option<String>,
    },
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    grid_multiplier: Option<Spanned<i64>>,
    max_grid_points: Option<Spanned<i64>>,
    kkt_tol: Option<Spanned<f64>>,
    weight_refit_tol: Option<Spanned<f64>>,
    weight_refit_max_iter: Option<Spanned<i64>>,
    max_fw_iters: Option<Spanned<i64>>,
    prune_weight: Option<Spanned<f64>>,
    refine_atoms: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: Option<String>,
    distribution: Spanned<RawDistribution>,
    k: Option<Spanned<i64>>,
    n_grid: Spanned<Vec<Number>>,
    trials: Spanned<i64>,
    estimators: Spanned<Vec<Spanned<String>>>,
    oracles: Option<Spanned<Vec<Spanned<String>>>>,
    sampling: Option<Spanned<String>>,
    seed: Option<Spanned<i64>>,
    redraw_truth_per_trial: Option<bool>,
    solver: Option<RawSolver>,
}

struct Diagnostics<'a> {
    text: &'a str,
    messages: Vec<String>,
}

impl Diagnostics<'_> {
    fn line(&self, span: Range<usize>) -> usize {
        self.text[..span.start.min(self.text.len())].matches('\n').count() + 1
    }

    fn push(&mut self, span: Range<usize>, field: &str, msg: impl std::fmt::Display) {
        let line = self.line(span);
        self.messages.push(format!("line {line}, field `{field}`: {msg}"));
    }
}

fn positive_int(d: &mut Diagnostics, v: &Spanned<i64>, field: &str) -> usize {
    if *v.get_ref() < 1 {
        d.push(v.span(), field, format!("must be at least 1, got {}", v.get_ref()));
        return 1;
    }
    *v.get_ref() as usize
}

fn parse_distribution(d: &mut Diagnostics, raw: &Spanned<RawDistribution>, base: &Path) -> Option<DistributionSpec> {
    let span = raw.span();
    let (kind, alpha, c, path) = match raw.get_ref() {
        RawDistribution::Name(n) => (n.as_str(), None, None, None),
        RawDistribution::Table { kind, alpha, c, path } => (
            kind.as_str(),
            alpha.as_ref().map(Number::value),
            c.as_ref().map(Number::value),
            path.as_deref(),
        ),
    };
    let spec = match kind {
        "uniform" => SyntheticDistribution::Uniform,
        "step" => SyntheticDistribution::Step,
        "sqrt-cauchy" | "sqrt_cauchy" => SyntheticDistribution::SqrtCauchy,
        "zipf" => SyntheticDistribution::Zipf { alpha: alpha.unwrap_or(1.0) },
        "dirichlet" => SyntheticDistribution::Dirichlet { c: c.unwrap_or(1.0) },
        "file" => match path {
            Some(p) => return Some(DistributionSpec::FromFile(base.join(p))),
            None => {
                d.push(span, "distribution", "kind \"file\" needs a path");
                return None;
            }
        },
        other => {
            d.push(
                span,
                "distribution",
                format!("unknown kind {other:?} (uniform, step, zipf, dirichlet, sqrt-cauchy, file)"),
            );
            return None;
        }
    };
    match spec {
        SyntheticDistribution::Zipf { alpha: x } | SyntheticDistribution::Dirichlet { c: x } if !(x > 0.0 && x.is_finite()) => {
            d.push(span, "distribution", format!("parameter must be positive, got {x}"));
            None
        }
        _ => Some(DistributionSpec::Synthetic(spec)),
    }
}

fn parse_contender(d: &mut Diagnostics, s: &Spanned<String>, base: &Path) -> Option<Contender> {
    let text = s.get_ref().trim();
    match text {
        "separable" | "separable-oracle" => return Some(Contender::SeparableOracle),
        "natural" | "natural-oracle" => return Some(Contender::NaturalOracle),
        _ => {}
    }
    let loaded = EstimatorSpec::parse_with(text, |p| {
        read_prior(&base.join(p)).map_err(|e| npmle_core::Error::Spec {
            spec: text.to_string(),
            reason: e.to_string(),
        })
    });
    match loaded {
        Ok(spec) => Some(Contender::estimator(text, spec)),
        Err(e) => {
            d.push(s.span(), "estimators", e);
            None
        }
    }
}

impl ExperimentConfig {
    /// Parse a config; relative paths inside it resolve against `base`.
    pub fn from_toml(text: &str, base: &Path, origin: &Path) -> AppResult<Self> {
        let config_error = |diagnostics: Vec<String>| AppError::Config {
            path: origin.to_path_buf(),
            diagnostics,
        };
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let msg = match e.span() {
                Some(span) => format!("line {}: {}", text[..span.start].matches('\n').count() + 1, e.message()),
                None => e.message().to_string(),
            };
            config_error(vec![msg])
        })?;
        let mut d = Diagnostics { text, messages: Vec::new() };

        let distribution = parse_distribution(&mut d, &raw.distribution, base);
        let k = match (&raw.k, &distribution) {
            (Some(k), _) => {
                let v = positive_int(&mut d, k, "k");
                if v < 2 && matches!(distribution, Some(DistributionSpec::Synthetic(_))) {
                    d.push(k.span(), "k", "synthetic distributions need k >= 2");
                }
                v
            }
            (None, Some(DistributionSpec::FromFile(_))) => 0,
            (None, _) => {
                d.push(raw.distribution.span(), "k", "missing (required for synthetic distributions)");
                0
            }
        };

        let n_grid: Vec<f64> = raw.n_grid.get_ref().iter().map(Number::value).collect();
        if n_grid.is_empty() {
            d.push(raw.n_grid.span(), "n_grid", "must not be empty");
        } else if n_grid.iter().any(|n| !(*n > 0.0) || !n.is_finite()) {
            d.push(raw.n_grid.span(), "n_grid", "sample sizes must be positive");
        } else if n_grid.windows(2).any(|w| w[1] <= w[0]) {
            d.push(raw.n_grid.span(), "n_grid", "must be strictly ascending");
        }
        let trials = positive_int(&mut d, &raw.trials, "trials");

        let mut contenders: Vec<Contender> = Vec::new();
        let mut push = |d: &mut Diagnostics, c: Contender, span: Range<usize>, field: &str| {
            if contenders.iter().any(|x| x.label() == c.label()) {
                d.push(span, field, format!("{} listed twice", c.label()));
            } else {
                contenders.push(c);
            }
        };
        if raw.estimators.get_ref().is_empty() && raw.oracles.as_ref().map_or(true, |o| o.get_ref().is_empty()) {
            d.push(raw.estimators.span(), "estimators", "nothing to evaluate");
        }
        for s in raw.estimators.get_ref() {
            if let Some(c) = parse_contender(&mut d, s, base) {
                push(&mut d, c, s.span(), "estimators");
            }
        }
        for s in raw.oracles.iter().flat_map(|o| o.get_ref()) {
            let c = match s.get_ref().trim() {
                "separable" | "separable-oracle" => Contender::SeparableOracle,
                "natural" | "natural-oracle" => Contender::NaturalOracle,
                other => {
                    d.push(s.span(), "oracles", format!("unknown oracle {other:?} (separable, natural)"));
                    continue;
                }
            };
            push(&mut d, c, s.span(), "oracles");
        }

        let sampling = match raw.sampling.as_ref().map(|s| (s.get_ref().as_str(), s.span())) {
            None | Some(("poissonized", _)) => SamplingMode::Poissonized,
            Some(("multinomial", _)) => SamplingMode::Multinomial,
            Some((other, span)) => {
                d.push(span, "sampling", format!("unknown mode {other:?} (poissonized, multinomial)"));
                SamplingMode::Poissonized
            }
        };
        let seed = match &raw.seed {
            Some(s) if *s.get_ref() < 0 => {
                d.push(s.span(), "seed", "must be nonnegative");
                0
            }
            Some(s) => *s.get_ref() as u64,
            None => 0,
        };

        let mut solver = SolverConfig::default();
        if let Some(rs) = &raw.solver {
            if let Some(v) = &rs.grid_multiplier {
                solver.grid_multiplier = positive_int(&mut d, v, "solver.grid_multiplier") as u64;
            }
            if let Some(v) = &rs.max_grid_points {
                solver.max_grid_points = positive_int(&mut d, v, "solver.max_grid_points");
            }
            if let Some(v) = &rs.weight_refit_max_iter {
                solver.weight_refit_max_iter = positive_int(&mut d, v, "solver.weight_refit_max_iter");
            }
            if let Some(v) = &rs.max_fw_iters {
                solver.max_fw_iters = positive_int(&mut d, v, "solver.max_fw_iters");
            }
            for (v, field, slot, allow_zero) in [
                (&rs.kkt_tol, "solver.kkt_tol", &mut solver.kkt_tol, false),
                (&rs.weight_refit_tol, "solver.weight_refit_tol", &mut solver.weight_refit_tol, false),
                (&rs.prune_weight, "solver.prune_weight", &mut solver.prune_weight, true),
            ] {
                if let Some(v) = v {
                    let x = *v.get_ref();
                    if (x > 0.0 || (allow_zero && x == 0.0)) && x.is_finite() {
                        *slot = x;
                    } else {
                        d.push(v.span(), field, format!("invalid value {x}"));
                    }
                }
            }
            if let Some(b) = rs.refine_atoms {
                solver.refine_atoms = b;
            }
        }

        if !d.messages.is_empty() {
            return Err(config_error(d.messages));
        }
        let distribution = distribution.expect("diagnosed above");
        let redraw = distribution.is_random() || raw.redraw_truth_per_trial.unwrap_or(false);
        Ok(Self {
            name: raw.name.unwrap_or_else(|| distribution.name()),
            distribution,
            k,
            n_grid,
            trials,
            contenders,
            sampling,
            seed,
            redraw_truth_per_trial: redraw,
            solver,
        })
    }

    pub fn load(path: &Path) -> AppResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::input(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base, path)
    }
}
