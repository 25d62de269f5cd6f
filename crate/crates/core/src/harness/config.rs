use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::methods::{EvalChannel, Method};
use crate::channel::ChannelClass;
use crate::dataset::SnrPolicy;
use crate::error::{Error, Result};
use crate::nn::TrainConfig;
use crate::unidnn::{Architecture, DetectorConfig, Routing, StageTwoLabels};

/// Everything one experiment needs, loadable from TOML. Field names are the
/// TOML keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Classes in play for the mixed training and test sets.
    pub classes: Vec<ChannelClass>,
    pub snr_policy: SnrPolicy,
    pub n_pilots: usize,
    /// Training samples `m` per dataset.
    pub samples: usize,
    pub seed: u64,
    pub n_hid: usize,
    pub epochs: usize,
    pub archs: Vec<Architecture>,
    /// The one class the single-channel baseline is trained on.
    pub single_class: ChannelClass,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub dropout: f64,
    pub conv_kernel: usize,
    pub routing: Routing,
    pub stage_two_labels: StageTwoLabels,
    /// Channel draws used for the MMSE correlation matrices.
    pub m_h: usize,
    pub data_dir: PathBuf,
    pub model_dir: PathBuf,
    pub out_dir: PathBuf,
    pub sweep: SweepConfig,
    pub image: ImageConfig,
    pub timing: TimingConfig,
    pub classify: ClassifyConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            classes: ChannelClass::ALL.to_vec(),
            snr_policy: SnrPolicy::Uniform { min_db: 0.0, max_db: 20.0 },
            n_pilots: 8,
            samples: 100_000,
            seed: 0,
            n_hid: 512,
            epochs: 700,
            archs: Architecture::ALL.to_vec(),
            single_class: ChannelClass::Rician,
            batch_size: 3000,
            learning_rate: 1e-3,
            l2: 2e-6,
            dropout: 0.01,
            conv_kernel: 1,
            routing: Routing::Hard,
            stage_two_labels: StageTwoLabels::Predicted,
            m_h: 1000,
            data_dir: PathBuf::from("data"),
            model_dir: PathBuf::from("models"),
            out_dir: PathBuf::from("out"),
            sweep: SweepConfig::default(),
            image: ImageConfig::default(),
            timing: TimingConfig::default(),
            classify: ClassifyConfig::default(),
        }
    }
}

impl ScenarioConfig {
    /// The CI-sized profile: m = 20000, 150 epochs, N_hid = 256.
    pub fn fast() -> Self {
        let mut c = Self::default();
        c.apply_fast();
        c
    }

    pub fn apply_fast(&mut self) {
        self.samples = 20_000;
        self.epochs = 150;
        self.n_hid = 256;
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.samples == 0 {
            return bad("samples must be positive".into());
        }
        if self.classes.is_empty() {
            return bad("at least one channel class is required".into());
        }
        if !matches!(self.n_pilots, 8 | 16 | 32) {
            return bad(format!("n_pilots {} not in {{8, 16, 32}}", self.n_pilots));
        }
        if self.n_hid == 0 || self.epochs == 0 || self.batch_size == 0 {
            return bad("n_hid, epochs and batch_size must be positive".into());
        }
        if self.m_h < 2 {
            return bad(format!("m_h {} too small", self.m_h));
        }
        self.snr_policy.validate()?;
        for &snr in self.sweep.snr_db.iter().chain(&self.classify.snr_db) {
            if !(0.0..=20.0).contains(&snr) {
                return bad(format!("SNR {snr} dB outside [0, 20]"));
            }
        }
        if self.sweep.min_errors == 0 {
            return bad("min_errors must be positive".into());
        }
        Ok(())
    }

    pub fn detector_config(&self, arch: Architecture) -> DetectorConfig {
        DetectorConfig {
            n_hid: self.n_hid,
            n_pilots: self.n_pilots,
            conv_kernel: self.conv_kernel,
            dropout: self.dropout,
            routing: self.routing,
            seed: crate::rng::stream_id(&[self.seed, super::tags::TRAIN, arch as u64]),
        }
    }

    pub fn train_config(&self, salt: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            l2: self.l2,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: crate::rng::stream_id(&[self.seed, super::tags::TRAIN, 100 + salt]),
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub methods: Vec<Method>,
    pub channels: Vec<EvalChannel>,
    pub snr_db: Vec<f64>,
    /// A point stops once it has seen this many bit errors...
    pub min_errors: u64,
    /// ...and at least this many bits.
    pub min_bits: u64,
    /// Hard cap per point; points that hit it are flagged as bounds.
    pub bit_budget: u64,
    /// Symbols simulated between stopping-rule checks.
    pub chunk_symbols: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            methods: Method::all(),
            channels: vec![EvalChannel::Mixed],
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            min_errors: 10,
            min_bits: 0,
            bit_budget: 10_000_000,
            chunk_symbols: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImageConfig {
    pub input: PathBuf,
    pub output: PathBuf,
    pub method: Method,
    pub channel: ChannelClass,
    /// `None` transmits without noise.
    pub snr_db: Option<f64>,
}

impl Default for ImageConfig {
    fn default() -> Self {
        Self {
            input: PathBuf::from("image.pgm"),
            output: PathBuf::from("out/image_rx.pgm"),
            method: Method::Neural(Architecture::UniC),
            channel: ChannelClass::TdlA,
            snr_db: Some(20.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingConfig {
    pub trials: usize,
    pub symbols_per_trial: usize,
    pub warmup: usize,
    /// Charge the MMSE receiver for estimating its correlation matrices from
    /// `m_h` channel draws on every symbol.
    pub mmse_includes_correlation: bool,
    pub snr_db: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            trials: 31,
            symbols_per_trial: 64,
            warmup: 3,
            mmse_includes_correlation: true,
            snr_db: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyConfig {
    pub snr_db: Vec<f64>,
    pub symbols_per_snr: usize,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            symbols_per_snr: 5000,
        }
    }
}
