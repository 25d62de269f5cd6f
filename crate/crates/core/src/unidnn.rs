//! The neural receivers: single- and multi-channel detectors, the channel
//! classifier, and the three cascaded classifier/detector architectures.
//!
//! * `Single` / `Multi`: `128 -> N_hid (ReLU) -> N_out (sigmoid)`, trained on
//!   one class or on the class mixture.
//! * `UniA`: the detector sees the features concatenated with the class
//!   vector, `133 -> N_hid -> N_out`.
//! * `UniB`: the features are routed into a `128 x 5` grid whose active
//!   column is the predicted class; the flattened grid (640) feeds the
//!   detector.
//! * `UniC`: the same grid is read as a length-128 signal with 5 channels
//!   and passed through a same-padded 1-D convolution (5 filters) first.
//!
//! Grids are stored row-major, element `(row, class)` at `row * 5 + class`,
//! which is also the `[length, channels]` layout the convolution expects.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelClass, N_CHAN};
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::loss::argmax;
use crate::nn::{checkpoint, train, Activation, LayerSpec, Loss, Network, Tensor, TrainConfig, TrainReport};
use crate::rng;

pub const N_IN: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Architecture {
    Single,
    Multi,
    UniA,
    UniB,
    UniC,
}

impl Architecture {
    pub const ALL: [Architecture; 5] = [
        Architecture::Single,
        Architecture::Multi,
        Architecture::UniA,
        Architecture::UniB,
        Architecture::UniC,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Single => "Single",
            Architecture::Multi => "Multi",
            Architecture::UniA => "UniA",
            Architecture::UniB => "UniB",
            Architecture::UniC => "UniC",
        }
    }

    pub fn uses_classifier(self) -> bool {
        matches!(self, Architecture::UniA | Architecture::UniB | Architecture::UniC)
    }

    /// Width of the assembled detector input.
    pub fn detector_input_width(self) -> usize {
        match self {
            Architecture::Single | Architecture::Multi => N_IN,
            Architecture::UniA => N_IN + N_CHAN,
            Architecture::UniB | Architecture::UniC => N_IN * N_CHAN,
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownArch(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Routing {
    /// Only the argmax class is active.
    #[default]
    Hard,
    /// Every class column is scaled by its predicted probability.
    Soft,
}

impl Routing {
    pub fn name(self) -> &'static str {
        match self {
            Routing::Hard => "hard",
            Routing::Soft => "soft",
        }
    }
}

impl FromStr for Routing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hard" => Ok(Routing::Hard),
            "soft" => Ok(Routing::Soft),
            _ => Err(Error::InvalidConfig(format!("unknown routing {s:?}"))),
        }
    }
}

/// `[Re(y_0..63) | Im(y_0..63)]`.
pub fn featurize(y: &[Complex64]) -> Result<Vec<f64>> {
    if y.len() != N_IN / 2 {
        return Err(Error::LengthMismatch {
            what: "received symbol",
            expected: N_IN / 2,
            got: y.len(),
        });
    }
    Ok(y.iter().map(|v| v.re).chain(y.iter().map(|v| v.im)).collect())
}

pub fn one_hot(class: ChannelClass) -> [f64; N_CHAN] {
    let mut v = [0.0; N_CHAN];
    v[class.index()] = 1.0;
    v
}

/// Class weights actually fed to the detector.
fn routed_weights(class: &[f64], routing: Routing) -> [f64; N_CHAN] {
    match routing {
        Routing::Hard => {
            let mut w = [0.0; N_CHAN];
            w[argmax(class)] = 1.0;
            w
        }
        Routing::Soft => {
            let mut w = [0.0; N_CHAN];
            w.copy_from_slice(&class[..N_CHAN]);
            w
        }
    }
}

/// The `128 x 5` grid, flattened row-major (640 values).
pub fn build_grid_input(features: &[f64], class: &[f64], routing: Routing) -> Vec<f64> {
    let w = routed_weights(class, routing);
    let mut grid = Vec::with_capacity(features.len() * N_CHAN);
    for &f in features {
        grid.extend(w.iter().map(|c| c * f));
    }
    grid
}

/// Detector input rows for a batch of features and class vectors.
pub fn assemble_inputs(arch: Architecture, features: &Tensor, classes: &Tensor, routing: Routing) -> Result<Tensor> {
    let m = features.rows();
    if features.cols() != N_IN {
        return Err(Error::LengthMismatch {
            what: "feature width",
            expected: N_IN,
            got: features.cols(),
        });
    }
    if !arch.uses_classifier() {
        return Ok(features.clone());
    }
    if classes.rows() != m || classes.cols() != N_CHAN {
        return Err(Error::Shape(format!("class matrix {:?} for {m} samples", classes.shape())));
    }
    let width = arch.detector_input_width();
    let mut out = Vec::with_capacity(m * width);
    for i in 0..m {
        let f = features.row(i);
        match arch {
            Architecture::UniA => {
                out.extend_from_slice(f);
                out.extend_from_slice(&routed_weights(classes.row(i), routing));
            }
            _ => out.extend(build_grid_input(f, classes.row(i), routing)),
        }
    }
    Tensor::from_rows(m, width, out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub n_hid: usize,
    pub n_pilots: usize,
    /// Spatial extent of the UniC convolution.
    pub conv_kernel: usize,
    pub dropout: f64,
    pub routing: Routing,
    pub seed: u64,
}

impl DetectorConfig {
    pub fn new(n_pilots: usize) -> Self {
        Self {
            n_hid: 512,
            n_pilots,
            conv_kernel: 1,
            dropout: 0.01,
            routing: Routing::Hard,
            seed: 0,
        }
    }

    pub fn n_out(&self) -> usize {
        2 * (64 - self.n_pilots)
    }
}

pub fn classifier_specs(n_hid: usize, dropout: f64) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Dense { fan_in: N_IN, fan_out: n_hid, activation: Activation::Relu },
        LayerSpec::Dropout { rate: dropout },
        LayerSpec::Dense { fan_in: n_hid, fan_out: N_CHAN, activation: Activation::Softmax },
    ]
}

pub fn detector_specs(arch: Architecture, cfg: &DetectorConfig) -> Vec<LayerSpec> {
    let mut specs = Vec::with_capacity(4);
    if arch == Architecture::UniC {
        specs.push(LayerSpec::Conv1d {
            length: N_IN,
            in_channels: N_CHAN,
            filters: N_CHAN,
            kernel: cfg.conv_kernel,
            activation: Activation::Relu,
        });
    }
    specs.push(LayerSpec::Dense {
        fan_in: arch.detector_input_width(),
        fan_out: cfg.n_hid,
        activation: Activation::Relu,
    });
    specs.push(LayerSpec::Dropout { rate: cfg.dropout });
    specs.push(LayerSpec::Dense {
        fan_in: cfg.n_hid,
        fan_out: cfg.n_out(),
        activation: Activation::Sigmoid,
    });
    specs
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkBundle {
    pub arch: Architecture,
    pub n_pilots: usize,
    pub routing: Routing,
    /// Present for the cascaded architectures only.
    pub classifier: Option<Network>,
    pub detector: Network,
    pub trained: bool,
}

pub fn build_detector(arch: Architecture, cfg: &DetectorConfig) -> Result<NetworkBundle> {
    if !matches!(cfg.n_pilots, 8 | 16 | 32) {
        return Err(Error::InvalidConfig(format!("unsupported pilot count {}", cfg.n_pilots)));
    }
    if cfg.conv_kernel == 0 || cfg.conv_kernel.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!("conv kernel {} must be odd", cfg.conv_kernel)));
    }
    let mut r = rng::stream(cfg.seed, arch as u64);
    let classifier = if arch.uses_classifier() {
        Some(Network::new(&classifier_specs(cfg.n_hid, cfg.dropout), &mut r)?)
    } else {
        None
    };
    let detector = Network::new(&detector_specs(arch, cfg), &mut r)?;
    Ok(NetworkBundle {
        arch,
        n_pilots: cfg.n_pilots,
        routing: cfg.routing,
        classifier,
        detector,
        trained: false,
    })
}

/// Which class vectors feed stage 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageTwoLabels {
    #[default]
    Predicted,
    GroundTruth,
}

#[derive(Debug, Clone)]
pub struct TwoStageReport {
    pub classifier: Option<TrainReport>,
    pub detector: TrainReport,
}

/// Stage 1: fits the classifier on `(features -> one-hot class)` with
/// cross-entropy.
pub fn train_classifier(bundle: &mut NetworkBundle, data: &LabeledDataset, cfg: &TrainConfig) -> Result<TrainReport> {
    let clf = bundle
        .classifier
        .as_mut()
        .ok_or_else(|| Error::InvalidConfig(format!("{} has no classifier", bundle.arch)))?;
    let cfg = TrainConfig { loss: Loss::CrossEntropy, ..cfg.clone() };
    train(clf, &data.features, &data.class_labels, &cfg)
}

/// Stage 2: fits the detector with MSE on inputs assembled from the
/// (frozen) classifier's predictions, or from ground truth if asked.
pub fn train_detector(
    bundle: &mut NetworkBundle,
    data: &LabeledDataset,
    cfg: &TrainConfig,
    labels: StageTwoLabels,
) -> Result<TrainReport> {
    if data.labels.cols() != bundle.detector.output_width() {
        return Err(Error::LengthMismatch {
            what: "label width",
            expected: bundle.detector.output_width(),
            got: data.labels.cols(),
        });
    }
    let inputs = if bundle.arch.uses_classifier() {
        let classes = match labels {
            StageTwoLabels::GroundTruth => data.class_labels.clone(),
            StageTwoLabels::Predicted => bundle
                .classifier
                .as_ref()
                .ok_or(Error::Untrained)?
                .predict(&data.features)?,
        };
        assemble_inputs(bundle.arch, &data.features, &classes, bundle.routing)?
    } else {
        data.features.clone()
    };
    let cfg = TrainConfig { loss: Loss::Mse, ..cfg.clone() };
    let report = train(&mut bundle.detector, &inputs, &data.labels, &cfg)?;
    bundle.trained = true;
    Ok(report)
}

pub fn train_two_stage(
    bundle: &mut NetworkBundle,
    data: &LabeledDataset,
    cfg: &TrainConfig,
    labels: StageTwoLabels,
) -> Result<TwoStageReport> {
    let classifier = if bundle.arch.uses_classifier() {
        Some(train_classifier(bundle, data, cfg)?)
    } else {
        None
    };
    let detector = train_detector(bundle, data, cfg, labels)?;
    Ok(TwoStageReport { classifier, detector })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    /// Detector outputs in `(0, 1)`, one row per symbol.
    pub soft: Tensor,
    /// Classifier softmax rows; uniform for architectures without one.
    pub classes: Tensor,
}

impl Inference {
    pub fn bits(&self, row: usize) -> Vec<u8> {
        self.soft.row(row).iter().map(|&p| u8::from(p > 0.5)).collect()
    }
}

/// Batched inference over `features` (`m x 128`).
pub fn infer_batch(bundle: &NetworkBundle, features: &Tensor) -> Result<Inference> {
    if !bundle.trained {
        return Err(Error::Untrained);
    }
    let m = features.rows();
    let classes = match (&bundle.classifier, bundle.arch.uses_classifier()) {
        (Some(clf), true) => clf.predict(features)?,
        (None, true) => return Err(Error::Untrained),
        _ => Tensor::from_rows(m, N_CHAN, vec![1.0 / N_CHAN as f64; m * N_CHAN])?,
    };
    let inputs = assemble_inputs(bundle.arch, features, &classes, bundle.routing)?;
    let soft = bundle.detector.predict(&inputs)?;
    Ok(Inference { soft, classes })
}

/// Bits and class prediction for one received symbol.
pub fn infer(bundle: &NetworkBundle, y: &[Complex64]) -> Result<(Vec<u8>, Vec<f64>)> {
    let f = Tensor::from_rows(1, N_IN, featurize(y)?)?;
    let out = infer_batch(bundle, &f)?;
    Ok((out.bits(0), out.classes.row(0).to_vec()))
}

/// Row-normalized confusion matrix: entry `(true, predicted)`. Rows of
/// classes absent from the set stay zero.
pub fn classifier_confusion(classifier: &Network, features: &Tensor, class_labels: &Tensor) -> Result<[[f64; N_CHAN]; N_CHAN]> {
    let pred = classifier.predict(features)?;
    let mut counts = [[0.0; N_CHAN]; N_CHAN];
    for i in 0..features.rows() {
        counts[argmax(class_labels.row(i))][argmax(pred.row(i))] += 1.0;
    }
    for row in &mut counts {
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter_mut().for_each(|v| *v /= total);
        }
    }
    Ok(counts)
}

const MANIFEST: &str = "manifest.txt";
const CLASSIFIER_FILE: &str = "classifier.ckpt";
const DETECTOR_FILE: &str = "detector.ckpt";

impl NetworkBundle {
    /// Writes `manifest.txt`, `detector.ckpt` and, for cascaded
    /// architectures, `classifier.ckpt` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let classes: Vec<&str> = ChannelClass::ALL.iter().map(|c| c.name()).collect();
        let mut m = BufWriter::new(File::create(dir.join(MANIFEST))?);
        writeln!(m, "arch={}", self.arch)?;
        writeln!(m, "np={}", self.n_pilots)?;
        writeln!(m, "classes={}", classes.join(","))?;
        writeln!(m, "routing={}", self.routing.name())?;
        writeln!(m, "trained={}", self.trained)?;
        m.flush()?;
        if let Some(clf) = &self.classifier {
            checkpoint::save(clf, &mut BufWriter::new(File::create(dir.join(CLASSIFIER_FILE))?))?;
        }
        checkpoint::save(&self.detector, &mut BufWriter::new(File::create(dir.join(DETECTOR_FILE))?))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST);
        if !manifest_path.exists() {
            return Err(Error::MissingArtifact(manifest_path));
        }
        let text = std::fs::read_to_string(&manifest_path)?;
        let field = |key: &str| -> Result<&str> {
            text.lines()
                .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                .map(str::trim)
                .ok_or_else(|| Error::Format(format!("manifest lacks {key}")))
        };
        let arch: Architecture = field("arch")?.parse()?;
        let n_pilots = field("np")?
            .parse()
            .map_err(|_| Error::Format("bad np in manifest".into()))?;
        let order = field("classes")?;
        let expected: Vec<&str> = ChannelClass::ALL.iter().map(|c| c.name()).collect();
        if order != expected.join(",") {
            return Err(Error::Format(format!("class order {order} differs from {}", expected.join(","))));
        }
        let routing = field("routing")?.parse()?;
        let trained = field("trained").map(|v| v == "true").unwrap_or(true);
        let open = |name: &str| -> Result<Network> {
            let p = dir.join(name);
            if !p.exists() {
                return Err(Error::MissingArtifact(p));
            }
            checkpoint::load(&mut BufReader::new(File::open(p)?))
        };
        let classifier = if arch.uses_classifier() { Some(open(CLASSIFIER_FILE)?) } else { None };
        let detector = open(DETECTOR_FILE)?;
        if detector.input_width() != arch.detector_input_width() {
            return Err(Error::Format(format!(
                "detector input width {} does not fit {arch}",
                detector.input_width()
            )));
        }
        Ok(Self {
            arch,
            n_pilots,
            routing,
            classifier,
            detector,
            trained,
        })
    }
}
