//! The TOML experiment config (schema version 1).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channels::ReadoutErrorModel;
use crate::error::{Error, Result};
use crate::mitigation::{SuppressionMode, DEFAULT_FLOOR};
use crate::pauli::{Observable, PauliString};
use crate::sampling::{maximal_taps, splitmix64, SamplerKind};
use crate::simulator::{Drift, ExperimentPlan, Origin, Schedule, Scheme, StateSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Correlations,
    Threewave,
    Estimate,
    Audit,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Correlations => "correlations",
            ExperimentKind::Threewave => "threewave",
            ExperimentKind::Estimate => "estimate",
            ExperimentKind::Audit => "audit",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shots {
    #[serde(default = "default_main")]
    pub main: usize,
    #[serde(default = "default_calibration")]
    pub calibration: usize,
}

impl Default for Shots {
    fn default() -> Self {
        Self {
            main: default_main(),
            calibration: default_calibration(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MitigationSettings {
    #[serde(default)]
    pub mode: SuppressionMode,
    #[serde(default = "default_floor")]
    pub floor: f64,
}

impl Default for MitigationSettings {
    fn default() -> Self {
        Self {
            mode: SuppressionMode::PerMask,
            floor: DEFAULT_FLOOR,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationSettings {
    #[serde(default = "default_methods")]
    pub methods: Vec<Scheme>,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

impl Default for CorrelationSettings {
    fn default() -> Self {
        Self {
            methods: default_methods(),
            bins: default_bins(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThreeWaveSettings {
    #[serde(default = "default_g")]
    pub g: f64,
    /// Explicit time grid; overrides `t_end` and `points`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    /// Clip mitigated probabilities to `[0, 1]`.
    #[serde(default)]
    pub clip: bool,
}

impl Default for ThreeWaveSettings {
    fn default() -> Self {
        Self {
            g: default_g(),
            times: None,
            t_end: default_t_end(),
            points: default_points(),
            clip: false,
        }
    }
}

impl ThreeWaveSettings {
    pub fn grid(&self) -> Vec<f64> {
        match &self.times {
            Some(t) => t.clone(),
            None if self.points == 1 => vec![0.0],
            None => (0..self.points)
                .map(|i| self.t_end * i as f64 / (self.points - 1) as f64)
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSettings {
    pub state: StateSpec,
    /// Pauli string to coefficient, e.g. `{ ZZ = 0.5, XI = -1.0 }`.
    pub observable: BTreeMap<String, f64>,
}

impl EstimateSettings {
    pub fn observable(&self, n_qubits: usize) -> Result<Observable> {
        let mut o = Observable::new(n_qubits);
        for (s, &c) in &self.observable {
            let p: PauliString = s.parse()?;
            o.add_term(p, c)?;
        }
        if o.is_empty() {
            return Err(Error::Config("observable has no terms".into()));
        }
        Ok(o)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    #[serde(default = "default_qubits")]
    pub qubits: usize,
    #[serde(default = "default_sampler")]
    pub sampler: SamplerKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_width")]
    pub lfsr_width: u32,
    #[serde(default = "default_schedule")]
    pub schedule: Schedule,
    /// Bit-flip probability per qubit when preparing the calibration state.
    #[serde(default)]
    pub prep_error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub shots: Shots,
    #[serde(default)]
    pub error_model: ReadoutErrorModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<Drift>,
    #[serde(default)]
    pub mitigation: MitigationSettings,
    #[serde(default)]
    pub correlations: CorrelationSettings,
    #[serde(default)]
    pub threewave: ThreeWaveSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateSettings>,
}

fn default_main() -> usize {
    100_000
}
fn default_calibration() -> usize {
    950_000
}
fn default_floor() -> f64 {
    DEFAULT_FLOOR
}
fn default_methods() -> Vec<Scheme> {
    vec![Scheme::Direct, Scheme::PoleConcentrated, Scheme::Tetrahedral]
}
fn default_bins() -> usize {
    40
}
fn default_g() -> f64 {
    1.0
}
fn default_t_end() -> f64 {
    2.0
}
fn default_points() -> usize {
    20
}
fn default_qubits() -> usize {
    2
}
fn default_sampler() -> SamplerKind {
    SamplerKind::Tetrahedral
}
fn default_seed() -> u64 {
    0x5EED
}
fn default_batch() -> usize {
    ExperimentPlan::DEFAULT_BATCH
}
fn default_width() -> u32 {
    ExperimentPlan::DEFAULT_WIDTH
}
fn default_schedule() -> Schedule {
    Schedule::Interleaved
}

impl ExperimentConfig {
    /// A config with every optional field at its default.
    pub fn new(experiment: ExperimentKind, qubits: usize) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment,
            qubits,
            sampler: default_sampler(),
            seed: default_seed(),
            batch_size: default_batch(),
            lfsr_width: default_width(),
            schedule: default_schedule(),
            prep_error: 0.0,
            output_dir: None,
            shots: Shots::default(),
            error_model: ReadoutErrorModel::None,
            drift: None,
            mitigation: MitigationSettings::default(),
            correlations: CorrelationSettings::default(),
            threewave: ThreeWaveSettings::default(),
            estimate: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// First 12 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> Result<String> {
        let json = serde_json::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        let digest = Sha256::digest(json.as_bytes());
        Ok(digest.iter().take(6).map(|b| format!("{b:02x}")).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.qubits == 0 || self.qubits > 64 {
            return bad(format!("qubits = {} not in 1..=64", self.qubits));
        }
        if self.shots.main == 0 || self.shots.calibration == 0 {
            return bad("shot counts must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if maximal_taps(self.lfsr_width).is_none() {
            return bad(format!(
                "lfsr_width {} has no tap table (use 8, 16, 24 or 32)",
                self.lfsr_width
            ));
        }
        if !(0.0..=1.0).contains(&self.prep_error) {
            return bad(format!("prep_error {} is not a probability", self.prep_error));
        }
        if !(self.mitigation.floor >= 0.0) {
            return bad(format!(
                "mitigation floor {} must be nonnegative",
                self.mitigation.floor
            ));
        }
        self.error_model.validate(self.qubits)?;
        match self.experiment {
            ExperimentKind::Correlations => {
                if self.qubits < 2 {
                    return bad("correlations need at least 2 qubits".into());
                }
                if self.correlations.methods.is_empty() || self.correlations.bins == 0 {
                    return bad("correlations need at least one method and one bin".into());
                }
            }
            ExperimentKind::Threewave => {
                if self.qubits != 2 {
                    return bad("the three-wave sector maps onto exactly 2 qubits".into());
                }
                let tw = &self.threewave;
                if !tw.g.is_finite() {
                    return bad(format!("coupling g = {} is not finite", tw.g));
                }
                let grid = tw.grid();
                if grid.is_empty() || grid.iter().any(|t| !t.is_finite()) {
                    return bad("time grid must be non-empty and finite".into());
                }
                if grid.windows(2).any(|w| w[1] <= w[0]) {
                    return bad("time grid must be strictly increasing".into());
                }
                if self.shots.main < 2 || self.shots.calibration < 2 {
                    return bad("three-wave estimates need at least 2 shots per stream".into());
                }
            }
            ExperimentKind::Estimate => {
                let est = self
                    .estimate
                    .as_ref()
                    .ok_or_else(|| Error::Config("estimate experiment needs an [estimate] section".into()))?;
                est.observable(self.qubits)?;
                self.main_plan(est.state.clone(), self.sampler.into(), 0)?.validate()?;
            }
            ExperimentKind::Audit => {}
        }
        Ok(())
    }

    /// Seed for an independent sub-experiment.
    pub fn sub_seed(&self, tag: u64) -> u64 {
        splitmix64(self.seed ^ splitmix64(tag))
    }

    /// Main plan for `state` measured with `scheme`; `tag` separates seeds of
    /// independent runs.
    pub fn main_plan(&self, state: StateSpec, scheme: Scheme, tag: u64) -> Result<ExperimentPlan> {
        let mut plan = ExperimentPlan::new(self.qubits, state, self.shots.main, scheme, self.sub_seed(tag))
            .with_error_model(self.error_model.clone())
            .with_batch_size(self.batch_size)
            .with_lfsr_width(self.lfsr_width);
        plan.drift = self.drift;
        debug_assert_eq!(plan.origin, Origin::Main);
        Ok(plan)
    }

    /// Calibration plan matching `main`. `prep_error` only affects this
    /// plan: it models an imperfect `|0...0>` during calibration.
    pub fn calibration_plan(&self, main: &ExperimentPlan) -> ExperimentPlan {
        let mut cal = main.calibration(self.shots.calibration);
        cal.prep_error = self.prep_error;
        cal
    }
}
