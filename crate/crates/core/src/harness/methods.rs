use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::tags;
use crate::channel::{estimate_correlation, ChannelClass, ChannelModel, NoiseSpec};
use crate::dataset::{generate, LabeledDataset, LinkSample};
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::phy::PilotLayout;
use crate::receiver::{ConventionalReceiver, EstimateMethod, MmseSmoother};
use crate::rng::{self, SimRng};
use crate::unidnn::{build_detector, featurize, infer_batch, train_classifier, train_detector, Architecture, NetworkBundle};

/// Receiver tags as they appear in configs and CSV files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    True,
    Ls,
    MmsePerfect,
    MmseNonPerfect,
    Neural(Architecture),
}

impl Method {
    pub fn all() -> Vec<Method> {
        let mut v = vec![Method::True, Method::Ls, Method::MmsePerfect, Method::MmseNonPerfect];
        v.extend(Architecture::ALL.map(Method::Neural));
        v
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::True => "True",
            Method::Ls => "LS",
            Method::MmsePerfect => "MMSE_perfect",
            Method::MmseNonPerfect => "MMSE_nonperfect",
            Method::Neural(a) => a.name(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let m = match s.to_ascii_lowercase().as_str() {
            "true" => Method::True,
            "ls" => Method::Ls,
            "mmse_perfect" => Method::MmsePerfect,
            "mmse_nonperfect" => Method::MmseNonPerfect,
            _ => Method::Neural(s.parse().map_err(|_| Error::UnknownMethod(s.to_string()))?),
        };
        Ok(m)
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.name().to_string()
    }
}

/// Test channel for a sweep point: one class, or the uniform class mixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EvalChannel {
    Class(ChannelClass),
    Mixed,
}

impl EvalChannel {
    pub fn label(self) -> &'static str {
        match self {
            EvalChannel::Class(c) => c.name(),
            EvalChannel::Mixed => "Mixed",
        }
    }

    pub fn classes(self, scn: &ScenarioConfig) -> Vec<ChannelClass> {
        match self {
            EvalChannel::Class(c) => vec![c],
            EvalChannel::Mixed => scn.classes.clone(),
        }
    }

    fn tag(self) -> u64 {
        match self {
            EvalChannel::Class(c) => c.index() as u64,
            EvalChannel::Mixed => 99,
        }
    }
}

impl FromStr for EvalChannel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("mixed") {
            Ok(EvalChannel::Mixed)
        } else {
            Ok(EvalChannel::Class(s.parse()?))
        }
    }
}

impl TryFrom<String> for EvalChannel {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<EvalChannel> for String {
    fn from(c: EvalChannel) -> String {
        c.label().to_string()
    }
}

pub(crate) fn eval_stream_tag(ch: EvalChannel) -> u64 {
    ch.tag()
}

pub type BundleSet = BTreeMap<Architecture, NetworkBundle>;

fn class_mask(classes: &[ChannelClass]) -> u64 {
    classes.iter().fold(0, |m, c| m | 1 << c.index())
}

/// Samples from `classes` under the scenario's SNR policy and pilot count.
/// The stream depends on the seed, the pilot count and the class set only.
pub fn generate_dataset(scn: &ScenarioConfig, classes: &[ChannelClass]) -> Result<LabeledDataset> {
    scn.validate()?;
    let mut r = rng::stream(
        scn.seed,
        rng::stream_id(&[tags::DATA, scn.n_pilots as u64, class_mask(classes)]),
    );
    generate(classes, scn.snr_policy, scn.n_pilots, scn.samples, &mut r)
}

pub fn mixed_dataset_path(scn: &ScenarioConfig) -> PathBuf {
    scn.data_dir.join(format!("np{}_mixed.bin", scn.n_pilots))
}

pub fn single_dataset_path(scn: &ScenarioConfig) -> PathBuf {
    scn.data_dir.join(format!("np{}_{}.bin", scn.n_pilots, scn.single_class))
}

pub fn bundle_dir(scn: &ScenarioConfig, arch: Architecture) -> PathBuf {
    scn.model_dir.join(format!("np{}", scn.n_pilots)).join(arch.name())
}

pub fn write_dataset(ds: &LabeledDataset, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    ds.write(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<LabeledDataset> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    LabeledDataset::read(&mut BufReader::new(File::open(path)?))
}

/// Trains every architecture in `scn.archs`. Single uses `single`, all the
/// others the class mixture. The cascaded architectures share one
/// classifier, trained once and then frozen.
pub fn train_from_datasets(scn: &ScenarioConfig, mixed: &LabeledDataset, single: Option<&LabeledDataset>) -> Result<BundleSet> {
    scn.validate()?;
    let mut out = BundleSet::new();
    let mut shared_classifier = None;
    for &arch in &scn.archs {
        let mut bundle = build_detector(arch, &scn.detector_config(arch))?;
        if arch.uses_classifier() {
            match &shared_classifier {
                Some(clf) => bundle.classifier = Some(Clone::clone(clf)),
                None => {
                    train_classifier(&mut bundle, mixed, &scn.train_config(0))?;
                    shared_classifier = bundle.classifier.clone();
                }
            }
        }
        let data = if arch == Architecture::Single {
            single.ok_or_else(|| Error::InvalidConfig("Single needs a single-class dataset".into()))?
        } else {
            mixed
        };
        train_detector(&mut bundle, data, &scn.train_config(1 + arch as u64), scn.stage_two_labels)?;
        out.insert(arch, bundle);
    }
    Ok(out)
}

/// Generates the datasets in memory and trains.
pub fn train_bundles(scn: &ScenarioConfig) -> Result<BundleSet> {
    let mixed = generate_dataset(scn, &scn.classes)?;
    let single = if scn.archs.contains(&Architecture::Single) {
        Some(generate_dataset(scn, &[scn.single_class])?)
    } else {
        None
    };
    train_from_datasets(scn, &mixed, single.as_ref())
}

pub fn save_bundles(scn: &ScenarioConfig, bundles: &BundleSet) -> Result<()> {
    for (&arch, b) in bundles {
        b.save(&bundle_dir(scn, arch))?;
    }
    Ok(())
}

/// Loads the bundles `methods` need; a missing one is reported by path.
pub fn load_bundles(scn: &ScenarioConfig, methods: &[Method]) -> Result<BundleSet> {
    let mut out = BundleSet::new();
    for m in methods {
        if let Method::Neural(arch) = *m {
            if let std::collections::btree_map::Entry::Vacant(e) = out.entry(arch) {
                let b = NetworkBundle::load(&bundle_dir(scn, arch))?;
                if b.n_pilots != scn.n_pilots {
                    return Err(Error::InvalidConfig(format!(
                        "bundle {arch} was trained for N_p = {}, scenario uses {}",
                        b.n_pilots, scn.n_pilots
                    )));
                }
                e.insert(b);
            }
        }
    }
    Ok(out)
}

/// A ready-to-run receiver for one method at one noise level.
pub(crate) enum Detector<'a> {
    Conventional(ConventionalReceiver),
    Neural(&'a NetworkBundle),
}

impl<'a> Detector<'a> {
    pub(crate) fn build(
        method: Method,
        models: &[ChannelModel],
        layout: &PilotLayout,
        noise: &NoiseSpec,
        m_h: usize,
        corr_rng: &mut SimRng,
        bundles: &'a BundleSet,
    ) -> Result<Self> {
        Ok(match method {
            Method::True => Detector::Conventional(ConventionalReceiver::True),
            Method::Ls => Detector::Conventional(ConventionalReceiver::Ls),
            Method::MmsePerfect | Method::MmseNonPerfect => {
                let (r_hh, r_ls) = estimate_correlation(models, layout, m_h, noise, corr_rng)?;
                let (r, est) = if method == Method::MmsePerfect {
                    (r_hh, EstimateMethod::MmsePerfect)
                } else {
                    (r_ls, EstimateMethod::MmseNonPerfect)
                };
                Detector::Conventional(ConventionalReceiver::Mmse {
                    method: est,
                    smoother: MmseSmoother::new(&r, noise)?,
                })
            }
            Method::Neural(arch) => Detector::Neural(
                bundles
                    .get(&arch)
                    .ok_or_else(|| Error::MissingArtifact(PathBuf::from(format!("<bundle {arch}>"))))?,
            ),
        })
    }

    /// Decoded data bits for each sample.
    pub(crate) fn detect(&self, samples: &[LinkSample], layout: &PilotLayout) -> Result<Vec<Vec<u8>>> {
        match self {
            Detector::Conventional(rx) => samples.iter().map(|s| rx.detect(&s.y, &s.cfr, layout)).collect(),
            Detector::Neural(bundle) => {
                let mut feats = Vec::with_capacity(samples.len() * 2 * layout.n_sub);
                for s in samples {
                    feats.extend(featurize(&s.y)?);
                }
                let out = infer_batch(bundle, &Tensor::from_rows(samples.len(), 2 * layout.n_sub, feats)?)?;
                Ok((0..samples.len()).map(|i| out.bits(i)).collect())
            }
        }
    }
}
