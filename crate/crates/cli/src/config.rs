use std::path::Path;

use ksurf::pipeline::{ConstructionConfig, Tolerances};
use ksurf::profile::PunctureSet;
use ksurf::solver::SolveOptions;
use ksurf::sphere::UnitVector;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// `κ ≡ 1`: the unit sphere.
    RoundSphere,
    Punctures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub tol_rel: f64,
    pub max_iters: usize,
    pub line_search_shrink: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolveOptions::default();
        SolverConfig {
            tol_rel: d.tol_rel,
            max_iters: d.max_iters,
            line_search_shrink: d.line_search_shrink,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportToggles {
    pub obj: bool,
    pub body_json: bool,
    pub csv: bool,
}

impl Default for ExportToggles {
    fn default() -> Self {
        ExportToggles {
            obj: true,
            body_json: true,
            csv: true,
        }
    }
}

/// Run configuration as read from disk. Missing optional sections take
/// their defaults; the resolved form is what reports echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(default)]
    pub points: Vec<UnitVector>,
    /// Equilibrium weights; computed from the points when absent.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    pub n_values: Vec<u32>,
    pub grid_level: u32,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default = "default_step_factor")]
    pub probe_step_factor: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub export: ExportToggles,
}

fn default_probes() -> usize {
    50
}

fn default_step_factor() -> f64 {
    5.0
}

#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub level: Option<u32>,
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(l) = o.level {
            self.grid_level = l;
        }
        if let Some(t) = o.tol {
            self.solver.tol_rel = t;
        }
        if let Some(m) = o.max_iters {
            self.solver.max_iters = m;
        }
    }

    /// Fills in computed weights and validates everything.
    pub fn resolve(&mut self) -> ksurf::Result<ConstructionConfig> {
        let punctures = match self.mode {
            Mode::RoundSphere => {
                if !self.points.is_empty() || self.weights.is_some() {
                    return Err(ksurf::Error::InvalidInput(
                        "round_sphere mode takes no points or weights".into(),
                    ));
                }
                PunctureSet::round_sphere()
            }
            Mode::Punctures => {
                let set = match &self.weights {
                    Some(w) => PunctureSet::new(self.points.clone(), w.clone())?,
                    None => PunctureSet::from_points(self.points.clone())?,
                };
                self.weights = Some(set.weights().to_vec());
                set
            }
        };
        let config = ConstructionConfig {
            punctures,
            n_values: self.n_values.clone(),
            grid_level: self.grid_level,
            solver: SolveOptions {
                tol_rel: self.solver.tol_rel,
                max_iters: self.solver.max_iters,
                line_search_shrink: self.solver.line_search_shrink,
                initial: None,
            },
            tolerances: self.tolerances.clone(),
            probes: self.probes,
            probe_step_factor: self.probe_step_factor,
            seed: self.seed,
        };
        config.validate()?;
        if self.grid_level > ksurf::sphere::MAX_GRID_LEVEL {
            return Err(ksurf::Error::Resource(format!(
                "grid level {} exceeds the limit {}",
                self.grid_level,
                ksurf::sphere::MAX_GRID_LEVEL
            )));
        }
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointsFile {
    pub points: Vec<UnitVector>,
}
