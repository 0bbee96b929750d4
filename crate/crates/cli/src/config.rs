//! Scenario documents.

use std::path::Path;

use cbilab::metrics::Observable;
use cbilab::sde::{ModelSpec, SimConfig, TestFunction};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// One experiment: a model, simulation settings and what to measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// The result the experiment exercises, echoed into reports.
    #[serde(default)]
    pub result: String,
    pub model: ModelSpec,
    pub sim: SimSection,
    pub experiment: Experiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub paths: usize,
    /// Spacing of the record grid, starting at one spacing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<f64>,
    /// Explicit record times; takes precedence over `record_every`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump_cutoff: Option<f64>,
}

impl SimSection {
    pub fn record_grid(&self) -> Vec<f64> {
        if let Some(t) = &self.record_times {
            return t.clone();
        }
        match self.record_every {
            Some(h) if h > 0.0 => {
                let n = (self.horizon / h + 1e-9).floor() as usize;
                (1..=n).map(|k| k as f64 * h).collect()
            }
            _ => vec![self.horizon],
        }
    }

    pub fn to_config(&self) -> SimConfig {
        let mut c = SimConfig::new(self.dt, self.horizon, self.seed, self.paths)
            .with_record_times(self.record_grid());
        if let Some(eps) = self.jump_cutoff {
            c = c.with_cutoff(eps);
        }
        c
    }
}

/// The experiment kinds with their parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Experiment {
    MechanismReport,
    FlowEval {
        lambda: f64,
        times: Vec<f64>,
    },
    W1Decay {
        x0: f64,
        y0: f64,
    },
    WlogDecay {
        x0: f64,
        y0: f64,
    },
    TvDecay {
        x0: f64,
        y0: f64,
        #[serde(default = "default_bins")]
        bins: usize,
    },
    InvariantConvergence {
        x0: f64,
        lambda: f64,
    },
    Slln {
        x0: f64,
        observable: Observable,
        #[serde(default = "default_batches")]
        batches: usize,
    },
    Fclt {
        x0: f64,
        lambda: f64,
        #[serde(default = "default_batches")]
        batches: usize,
    },
    CbireTv {
        x0: f64,
        y0: f64,
        #[serde(default = "default_bins")]
        bins: usize,
    },
    LyapunovScan {
        test_function: TestFunction,
        #[serde(default = "default_x_max")]
        x_max: f64,
    },
}

fn default_bins() -> usize {
    100
}

fn default_batches() -> usize {
    32
}

fn default_x_max() -> f64 {
    1e6
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::MechanismReport => "mechanism-report",
            Experiment::FlowEval { .. } => "flow-eval",
            Experiment::W1Decay { .. } => "w1-decay",
            Experiment::WlogDecay { .. } => "wlog-decay",
            Experiment::TvDecay { .. } => "tv-decay",
            Experiment::InvariantConvergence { .. } => "invariant-convergence",
            Experiment::Slln { .. } => "slln",
            Experiment::Fclt { .. } => "fclt",
            Experiment::CbireTv { .. } => "cbire-tv",
            Experiment::LyapunovScan { .. } => "lyapunov-scan",
        }
    }

    /// Whether the experiment simulates paths.
    pub fn simulates(&self) -> bool {
        !matches!(
            self,
            Experiment::MechanismReport | Experiment::FlowEval { .. } | Experiment::LyapunovScan { .. }
        )
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Command-line overrides of the simulation section.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, s: &mut Scenario) {
        let sim = &mut s.sim;
        if let Some(v) = self.seed {
            sim.seed = v;
        }
        if let Some(v) = self.paths {
            sim.paths = v;
        }
        if let Some(v) = self.dt {
            sim.dt = v;
        }
        if let Some(v) = self.horizon {
            sim.horizon = v;
            // Explicit grids past the new horizon would be rejected.
            if let Some(t) = &mut sim.record_times {
                t.retain(|&x| x <= v);
                if t.is_empty() {
                    t.push(v);
                }
            }
        }
    }
}
