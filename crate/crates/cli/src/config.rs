use std::path::Path;

use gqnq::analysis::{ClassifierConfig, EmbedMethod, TsneConfig};
use gqnq::data::DatasetKind;
use gqnq::eval::NoiseCondition;
use gqnq::gen::{CvGenConfig, SpinGenConfig};
use gqnq::model::{HyperParams, DEFAULT_STD_FLOOR};
use gqnq::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Every tunable of a run. Loaded from TOML, then overridden by flags.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// When set, replaces every component seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub analysis: AnalysisConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub kind: DatasetKind,
    pub spin: SpinGenConfig,
    pub cv: CvGenConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { kind: DatasetKind::Spin, spin: SpinGenConfig::default(), cv: CvGenConfig::default() }
    }
}

/// Network sizes; `len(m)` and `k` come from the dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_r: usize,
    /// Defaults to `3 d_r`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_h: Option<usize>,
    /// Defaults to `d_r`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_z: Option<usize>,
    pub l_steps: usize,
    pub rep_hidden: Vec<usize>,
    pub std_floor: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { d_r: 16, d_h: None, d_z: None, l_steps: 8, rep_hidden: vec![128, 128], std_floor: DEFAULT_STD_FLOOR }
    }
}

impl ModelConfig {
    pub fn hyper(&self, m_dim: usize, k: usize) -> HyperParams {
        HyperParams {
            m_dim,
            k,
            d_r: self.d_r,
            d_h: self.d_h.unwrap_or(3 * self.d_r),
            d_z: self.d_z.unwrap_or(self.d_r),
            l_steps: self.l_steps,
            rep_hidden: self.rep_hidden.clone(),
            std_floor: self.std_floor,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Context size `s`.
    pub context_size: usize,
    /// Shots per context measurement; 0 means exact statistics.
    pub shots: usize,
    pub noise_sigma: f64,
    pub phase_jitter_sigma: f64,
    pub online_steps: usize,
    /// Random contexts scored after single-state training.
    pub repeats: usize,
    pub seed: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { context_size: 30, shots: 0, noise_sigma: 0.0, phase_jitter_sigma: 0.0, online_steps: 15, repeats: 10, seed: 0 }
    }
}

impl EvalSection {
    pub fn noise(&self) -> Result<NoiseCondition, CliError> {
        let active = [self.shots > 0, self.noise_sigma != 0.0, self.phase_jitter_sigma != 0.0];
        if active.iter().filter(|a| **a).count() > 1 {
            return Err(CliError::Usage("choose at most one of shots, noise sigma and phase jitter".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.phase_jitter_sigma >= 0.0) {
            return Err(CliError::Usage("noise levels must be nonnegative".into()));
        }
        Ok(if self.shots > 0 {
            NoiseCondition::Shots { n: self.shots }
        } else if self.noise_sigma > 0.0 {
            NoiseCondition::Probability { sigma: self.noise_sigma }
        } else if self.phase_jitter_sigma > 0.0 {
            NoiseCondition::PhaseJitter { sigma: self.phase_jitter_sigma }
        } else {
            NoiseCondition::None
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub embed: EmbedMethod,
    pub tsne: TsneConfig,
    /// GMM components; defaults to the number of families present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clusters: Option<usize>,
    pub gmm_seed: u64,
    pub classifier: ClassifierConfig,
    pub plots: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            embed: EmbedMethod::Tsne,
            tsne: TsneConfig::default(),
            clusters: None,
            gmm_seed: 0,
            classifier: ClassifierConfig::default(),
            plots: true,
        }
    }
}

/// Command-line values that override the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub shots: Option<usize>,
    pub noise_sigma: Option<f64>,
    pub phase_jitter_sigma: Option<f64>,
    pub context_size: Option<usize>,
    pub measurement_subset_size: Option<usize>,
    pub scale_factor: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = crate::error::read_input(path)?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// Applies `o`, propagates the global seed and validates the result.
    pub fn resolve(mut self, o: &Overrides) -> Result<Self, CliError> {
        if let Some(s) = o.seed {
            self.seed = Some(s);
        }
        if let Some(s) = self.seed {
            self.data.spin.seed = s;
            self.data.cv.seed = s;
            self.train.seed = s;
            self.eval.seed = s;
            self.analysis.tsne.seed = s;
            self.analysis.gmm_seed = s;
            self.analysis.classifier.seed = s;
        }
        if let Some(n) = o.shots {
            self.eval.shots = n;
        }
        if let Some(v) = o.noise_sigma {
            self.eval.noise_sigma = v;
        }
        if let Some(v) = o.phase_jitter_sigma {
            self.eval.phase_jitter_sigma = v;
        }
        if let Some(s) = o.context_size {
            self.eval.context_size = s;
            self.train.max_context = s;
        }
        if let Some(n) = o.measurement_subset_size {
            self.data.spin.measurement_subset = Some(n);
            self.data.cv.n_phases = n;
        }
        if let Some(f) = o.scale_factor {
            if !(f > 0.0 && f.is_finite()) {
                return Err(CliError::Usage(format!("scale factor {f} must be positive")));
            }
            self.data.spin.scale_factor = f;
            self.data.cv.n_states = ((self.data.cv.n_states as f64 * f).round() as usize).max(1);
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train.validate()?;
        self.model.hyper(1, 1).validate()?;
        self.eval.noise()?;
        if self.eval.context_size == 0 || self.eval.online_steps == 0 || self.eval.repeats == 0 {
            return Err(CliError::Usage("context size, online steps and repeats must be positive".into()));
        }
        if !(self.data.spin.scale_factor > 0.0) {
            return Err(CliError::Usage("scale factor must be positive".into()));
        }
        if self.analysis.clusters == Some(0) {
            return Err(CliError::Usage("at least one cluster is required".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Usage(format!("cannot serialize config: {e}")))
    }
}
