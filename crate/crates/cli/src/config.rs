//! Experiment configuration: a single canonical JSON schema with strict
//! validation (unknown keys rejected) and explicit defaults in the echo.

use nsscale_core::norms::Region;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub dim: usize,
    pub n_per_axis: usize,
    pub box_length: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(default = "default_viscosity")]
    pub viscosity: f64,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_true")]
    pub dealias: bool,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
    #[serde(default)]
    pub rotational_form: bool,
}

fn default_viscosity() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}
fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields, rename_all = "snake_case")]
pub enum InitialData {
    TaylorGreen {
        amplitude: f64,
    },
    Random {
        spectrum_slope: f64,
        k_peak: f64,
        energy: f64,
        seed: u64,
    },
}

impl InitialData {
    pub fn seed(&self) -> Option<u64> {
        match self {
            InitialData::Random { seed, .. } => Some(*seed),
            InitialData::TaylorGreen { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub t_lo: f64,
    pub t_hi: f64,
    /// Omitted bounds mean the full torus.
    #[serde(default)]
    pub x_lo: Option<[f64; 3]>,
    #[serde(default)]
    pub x_hi: Option<[f64; 3]>,
}

impl RegionSpec {
    pub fn to_region(&self, box_length: f64) -> Region {
        let lo = self.x_lo.unwrap_or([0.0; 3]);
        let hi = self.x_hi.unwrap_or([box_length; 3]);
        Region::new(self.t_lo, self.t_hi, lo, hi)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "task", deny_unknown_fields, rename_all = "snake_case")]
pub enum AnalysisTask {
    EnergyBudget,
    PivotBudget {
        s: Vec<f64>,
    },
    ScalingFit {
        quantity: String,
        epsilons: Vec<f64>,
        window: RegionSpec,
        #[serde(default)]
        x0: [f64; 3],
        /// For grad_norm_p: derivative order and exponent.
        #[serde(default)]
        n: Option<u32>,
        #[serde(default)]
        p: Option<f64>,
        #[serde(default)]
        d: Option<f64>,
    },
    DerivativeBound {
        n: u32,
        p: f64,
        gamma: f64,
        region: RegionSpec,
    },
    Goodset {
        delta: f64,
        eta_star: f64,
        epsilons: Vec<f64>,
        t_samples: Vec<f64>,
        x_per_axis: usize,
        #[serde(default = "default_gamma")]
        gamma: f64,
    },
    Frames {
        epsilon: f64,
        delta: f64,
        #[serde(default = "default_gamma")]
        gamma: f64,
        base_points: Vec<Vec<f64>>,
        n_list: Vec<u32>,
        #[serde(default = "default_s_slices")]
        s_slices: usize,
        #[serde(default = "default_y_per_axis")]
        y_per_axis: usize,
    },
}

fn default_gamma() -> f64 {
    1.0 / 7.0
}
fn default_s_slices() -> usize {
    9
}
fn default_y_per_axis() -> usize {
    9
}

impl AnalysisTask {
    pub fn name(&self) -> &'static str {
        match self {
            AnalysisTask::EnergyBudget => "energy_budget",
            AnalysisTask::PivotBudget { .. } => "pivot_budget",
            AnalysisTask::ScalingFit { .. } => "scaling_fit",
            AnalysisTask::DerivativeBound { .. } => "derivative_bound",
            AnalysisTask::Goodset { .. } => "goodset",
            AnalysisTask::Frames { .. } => "frames",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridBlock,
    pub solver: SolverBlock,
    pub initial_data: InitialData,
    #[serde(default)]
    pub analysis: Vec<AnalysisTask>,
    pub output_dir: String,
    #[serde(default)]
    pub save_snapshots: bool,
}

impl ExperimentConfig {
    pub fn from_str(text: &str) -> Result<ExperimentConfig, String> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        nsscale_core::Grid::new(self.grid.dim, self.grid.n_per_axis, self.grid.box_length)
            .map_err(|e| e.to_string())?;
        let solver = self.solver_config();
        let grid = self.grid().unwrap();
        solver.validate(&grid).map_err(|e| e.to_string())?;
        if let InitialData::TaylorGreen { amplitude } = &self.initial_data {
            if !amplitude.is_finite() {
                return Err("amplitude must be finite".into());
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> nsscale_core::Result<nsscale_core::Grid> {
        nsscale_core::Grid::new(self.grid.dim, self.grid.n_per_axis, self.grid.box_length)
    }

    pub fn solver_config(&self) -> nsscale_core::SolverConfig {
        nsscale_core::SolverConfig {
            viscosity: self.solver.viscosity,
            dt: self.solver.dt,
            t_end: self.solver.t_end,
            dealias: self.solver.dealias,
            snapshot_stride: self.solver.snapshot_stride,
            rotational_form: self.solver.rotational_form,
        }
    }

    /// Canonical echo with all defaults made explicit.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
