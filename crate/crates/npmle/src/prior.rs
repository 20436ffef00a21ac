//! Prior files: `{"atoms": [...], "weights": [...], "n_scale": N}`.

use std::path::Path;

use npmle_core::{MixingDistribution, PretrainedPrior};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorFile {
    pub atoms: Vec<f64>,
    pub weights: Vec<f64>,
    /// Total count of the sample the prior was fitted on.
    pub n_scale: f64,
}

impl From<&PretrainedPrior> for PriorFile {
    fn from(p: &PretrainedPrior) -> Self {
        Self {
            atoms: p.prior.atoms().to_vec(),
            weights: p.prior.weights().to_vec(),
            n_scale: p.n_scale,
        }
    }
}

impl PriorFile {
    pub fn into_prior(self) -> npmle_core::Result<PretrainedPrior> {
        let prior = MixingDistribution::new(self.atoms, self.weights)?;
        PretrainedPrior::new(prior, self.n_scale)
    }
}

pub fn prior_to_json(prior: &PretrainedPrior) -> String {
    let mut s = serde_json::to_string_pretty(&PriorFile::from(prior)).expect("prior serializes");
    s.push('\n');
    s
}

pub fn prior_from_json(text: &str, path: &Path) -> AppResult<PretrainedPrior> {
    let file: PriorFile = serde_json::from_str(text).map_err(|e| AppError::format(path, e.to_string()))?;
    file.into_prior().map_err(|e| AppError::format(path, e.to_string()))
}

pub fn read_prior(path: &Path) -> AppResult<PretrainedPrior> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::input(path, e))?;
    prior_from_json(&text, path)
}

pub fn write_prior(path: &Path, prior: &PretrainedPrior) -> AppResult<()> {
    std::fs::write(path, prior_to_json(prior)).map_err(|e| AppError::output(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let g = MixingDistribution::new(vec![0.0, 1.5936242600400401], vec![0.75, 0.25]).unwrap();
        let p = PretrainedPrior::new(g, 4.0).unwrap();
        let back = prior_from_json(&prior_to_json(&p), Path::new("p.json")).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn rejects_bad_priors() {
        let p = Path::new("p.json");
        assert!(prior_from_json(r#"{"atoms":[1],"weights":[1]}"#, p).is_err());
        assert!(prior_from_json(r#"{"atoms":[1,2],"weights":[1],"n_scale":3}"#, p).is_err());
        assert!(prior_from_json(r#"{"atoms":[-1],"weights":[1],"n_scale":3}"#, p).is_err());
        assert!(prior_from_json(r#"{"atoms":[1],"weights":[1],"n_scale":0}"#, p).is_err());
    }
}
