use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use strata_wave::regularity::{order_budget, AnalysisOptions};
use strata_wave::solver::{ContinuationOptions, NewtonOptions};
use strata_wave::strip::{StripGrid, WaveParameters};
use strata_wave::{io, Result, WaveError};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nq: usize,
    pub np: usize,
    /// Must agree with `params.lambda` when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub amplitude_targets: Vec<f64>,
    /// Laminar slope for `laminar`; a hint for the bifurcation root otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    25
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: default_tol(),
            max_iter: default_max_iter(),
            amplitude_targets: Vec::new(),
            kappa: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    #[serde(default = "default_m_max")]
    pub m_max: usize,
    #[serde(default = "default_mu")]
    pub mu: f64,
    /// Highest total order in the mixed-derivative budget.
    #[serde(default = "default_order_budget")]
    pub order_budget: usize,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
}

fn default_m_max() -> usize {
    12
}

fn default_mu() -> f64 {
    0.5
}

fn default_order_budget() -> usize {
    8
}

fn default_k_max() -> usize {
    30
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            m_max: default_m_max(),
            mu: default_mu(),
            order_budget: default_order_budget(),
            k_max: default_k_max(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: WaveParameters,
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| WaveError::InvalidInput(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if let Some(l) = self.grid.lambda {
            if l != self.params.lambda {
                return Err(WaveError::InvalidInput(format!(
                    "grid.lambda = {l} differs from params.lambda = {}",
                    self.params.lambda
                )));
            }
        }
        let s = &self.solver;
        if !(s.tol > 0.0) || s.max_iter == 0 {
            return Err(WaveError::InvalidInput(
                "solver.tol must be > 0 and max_iter >= 1".into(),
            ));
        }
        if s.kappa.is_some_and(|k| !(k > 0.0 && k.is_finite())) {
            return Err(WaveError::InvalidInput("solver.kappa must be > 0".into()));
        }
        let d = &self.diagnostics;
        if !(d.mu > 0.0 && d.mu < 1.0) || d.m_max < 3 || d.order_budget < 2 || d.k_max < 5 {
            return Err(WaveError::InvalidInput(
                "diagnostics need 0 < mu < 1, m_max >= 3, order_budget >= 2 and k_max >= 5".into(),
            ));
        }
        self.grid()?;
        Ok(())
    }

    pub fn grid(&self) -> Result<std::sync::Arc<StripGrid>> {
        StripGrid::new(
            self.grid.nq,
            self.grid.np,
            self.params.lambda,
            self.params.p0,
        )
    }

    /// Hash of everything except the output directory, so relocating a run
    /// keeps its provenance.
    pub fn hash(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output_dir");
        }
        io::config_hash(&v)
    }

    pub fn continuation_options(&self) -> ContinuationOptions {
        ContinuationOptions {
            newton: NewtonOptions {
                tol: self.solver.tol,
                max_iter: self.solver.max_iter,
                ..NewtonOptions::default()
            },
            kappa_hint: self.solver.kappa,
            ..ContinuationOptions::default()
        }
    }

    pub fn analysis_options(&self) -> AnalysisOptions {
        AnalysisOptions {
            m_max: self.diagnostics.m_max,
            mu: self.diagnostics.mu,
            order_budget: order_budget(self.diagnostics.order_budget),
            ..AnalysisOptions::default()
        }
    }
}
