//! Experiment descriptor read from `--config`.

use std::path::{Path, PathBuf};

use liouville::geometry::{Gauge, WeightFunction};
use liouville::green::{GreenMode, Point};
use liouville::pde::{ContinuationControls, Ray};
use liouville::system_algebra::{InteractionMatrix, MatrixSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Grid over the gauged heights α̂ for `mass-map`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassGrid {
    pub lo: f64,
    pub hi: f64,
    pub points_per_axis: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub matrix: Option<MatrixSpec>,
    /// Path to a matrix JSON, relative to the config file.
    pub matrix_file: Option<PathBuf>,
    /// One weight per component; h ≡ 1 when empty.
    pub weights: Vec<WeightFunction>,
    pub alpha: Option<Vec<f64>>,
    pub rho: Option<Vec<f64>>,
    /// Direction projected onto Γ_N by `gamma`.
    pub direction: Option<Vec<f64>>,
    pub level: Option<usize>,
    pub chi: Option<i64>,
    pub tol: Option<f64>,
    pub r_max: Option<f64>,
    pub mass_grid: Option<MassGrid>,
    pub target_sigma: Option<Vec<f64>>,
    pub probes: Vec<[Point; 2]>,
    pub random_probes: Option<usize>,
    pub green_mode: Option<GreenMode>,
    pub resolution: Option<usize>,
    pub points: Vec<Point>,
    pub masses: Vec<f64>,
    pub gauge: Gauge,
    pub deltas: Vec<f64>,
    pub convention_factor: Option<f64>,
    pub ray: Option<Ray>,
    pub controls: ContinuationControls,
    pub out: Option<PathBuf>,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: Self =
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))?;
        if let Some(f) = &cfg.matrix_file {
            let full = path.parent().unwrap_or(Path::new(".")).join(f);
            if !full.is_file() {
                return Err(CliError::Usage(format!("matrix file {} does not exist", full.display())));
            }
            cfg.matrix_file = Some(full);
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        format!("{:x}", Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn interaction_matrix(&self) -> Result<InteractionMatrix, CliError> {
        let spec = match (&self.matrix, &self.matrix_file) {
            (Some(m), _) => m.clone(),
            (None, Some(f)) => read_matrix(f)?,
            (None, None) => return Err(CliError::Usage("a matrix is required (--matrix or config)".into())),
        };
        Ok(InteractionMatrix::from_spec(&spec)?)
    }

    /// Configured weights, or h ≡ 1 for every component.
    pub fn weights_for(&self, n: usize) -> Result<Vec<WeightFunction>, CliError> {
        match self.weights.len() {
            0 => Ok(vec![WeightFunction::one(); n]),
            k if k == n => Ok(self.weights.clone()),
            k => Err(CliError::Usage(format!("{k} weights given for {n} components"))),
        }
    }
}

/// Accepts `{"n":..,"a":..}` or a bare list of rows.
pub fn read_matrix(path: &Path) -> Result<MatrixSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    if let Ok(spec) = serde_json::from_str::<MatrixSpec>(&text) {
        return Ok(spec);
    }
    let rows: Vec<Vec<f64>> =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad matrix {}: {e}", path.display())))?;
    Ok(MatrixSpec { n: rows.len(), a: rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use liouville::geometry::TrigPoly;

    #[test]
    fn round_trips_bit_identically() {
        let cfg = ExperimentConfig {
            matrix: Some(MatrixSpec { n: 2, a: vec![vec![1.0, 2.0], vec![2.0, 1.0]] }),
            weights: vec![WeightFunction::Trig(TrigPoly::constant(1.0).with_cos([1, 0], 0.1 + 0.2)); 2],
            alpha: Some(vec![0.0, 1.0 / 3.0]),
            deltas: vec![0.08, 0.04],
            ray: Some(Ray { base: vec![std::f64::consts::PI], dir: vec![std::f64::consts::E] }),
            seed: 7,
            ..Default::default()
        };
        let text = cfg.to_json();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_json(), text);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn rejects_unknown_fields_and_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"matrx": null}"#).unwrap();
        assert!(matches!(ExperimentConfig::load(&p), Err(CliError::Usage(_))));
        std::fs::write(&p, r#"{"matrix_file": "nope.json"}"#).unwrap();
        assert!(matches!(ExperimentConfig::load(&p), Err(CliError::Usage(_))));
        std::fs::write(dir.path().join("a.json"), "[[1.0]]").unwrap();
        std::fs::write(&p, r#"{"matrix_file": "a.json"}"#).unwrap();
        let cfg = ExperimentConfig::load(&p).unwrap();
        assert_eq!(cfg.interaction_matrix().unwrap().n(), 1);
        assert!(cfg.weights_for(2).unwrap().iter().all(|w| w.is_constant()));
    }
}
