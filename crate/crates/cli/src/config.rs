use std::fs;
use std::path::{Path, PathBuf};

use drosc::ambiguity::{nearest_mean, SampleSet};
use drosc::minimax::SolverConfig;
use drosc::pcd::{make_grid_samples, pcd_objective, PcdConfig, PcdObjective};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Everything a run or sweep needs, read from one JSON file.
///
/// Missing keys take their defaults, so `{}` is a valid config: the
/// five-variable demand model at `ε = 0.1`, `k = 25`, `η = 0.5`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: PcdConfig,
    pub solver: SolverConfig,
    pub eps_list: Vec<f64>,
    pub k_list: Vec<usize>,
    pub eta_list: Vec<f64>,
    pub reference_x: Option<Vec<f64>>,
    pub output_dir: PathBuf,
    /// Explicit sample points. When set, `k_list` must be `[samples.len()]`.
    pub samples: Option<Vec<Vec<f64>>>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let model = PcdConfig::default();
        Self {
            eta_list: vec![model.eta],
            model,
            solver: SolverConfig::default(),
            eps_list: vec![0.1],
            k_list: vec![25],
            reference_x: None,
            output_dir: PathBuf::from("out"),
            samples: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Parse(m));
        self.model.validate().map_err(|e| CliError::Parse(e.to_string()))?;
        self.solver.validate().map_err(|e| CliError::Parse(e.to_string()))?;
        if self.eps_list.is_empty() || self.k_list.is_empty() || self.eta_list.is_empty() {
            return bad("eps_list, k_list and eta_list must be nonempty".into());
        }
        if let Some(e) = self.eps_list.iter().find(|e| !(**e > 0.0)) {
            return bad(format!("eps must be positive, got {e}"));
        }
        if let Some(h) = self.eta_list.iter().find(|h| !(**h > 0.0)) {
            return bad(format!("eta must be positive, got {h}"));
        }
        match &self.samples {
            Some(s) if self.k_list != [s.len()] => {
                return bad(format!("k_list must be [{}] when samples are given", s.len()));
            }
            Some(_) => {}
            None => {
                if let Some(k) = self.k_list.iter().find(|k| {
                    let side = (**k as f64).sqrt().round() as usize;
                    **k == 0 || side * side != **k
                }) {
                    return bad(format!("k = {k} is not a positive perfect square"));
                }
            }
        }
        if let Some(r) = &self.reference_x {
            if !self.model.x_box.contains(r, 0.0) {
                return bad("reference_x lies outside the box".into());
            }
        }
        Ok(())
    }

    /// Sample set for a sweep row.
    pub fn samples_for(&self, k: usize) -> drosc::Result<SampleSet> {
        match &self.samples {
            Some(points) => SampleSet::new(points.clone(), self.model.domain.clone()),
            None => make_grid_samples(&self.model, k),
        }
    }

    /// Builds the objective for one `(ε, k, η)` triple, refusing an empty
    /// ambiguity set up front.
    pub fn objective(&self, eps: f64, k: usize, eta: f64) -> drosc::Result<PcdObjective> {
        let mut model = self.model.clone();
        model.eta = eta;
        let samples = self.samples_for(k)?;
        let hull = nearest_mean(&samples, &model.mu0);
        if hull.lower > eta {
            return Err(drosc::Error::EmptySet(format!(
                "squared distance from mu0 to the sample hull is at least {:.6e} > eta = {eta}",
                hull.lower
            )));
        }
        pcd_objective(&model, samples, eps)
    }
}
