//! Labeled training/evaluation sets and their binary file format.
//!
//! ```text
//! magic     7 bytes "UNIDNN1"
//! m         u64
//! n_in      u32
//! n_out     u32
//! n_chan    u32
//! n_pilots  u32
//! snr       u8 policy (0 fixed, 1 uniform), f64 a, f64 b
//!           (fixed: a = b = dB; uniform: a = min dB, b = max dB)
//! features  f64 x m*n_in
//! labels    f64 x m*n_out
//! classes   f64 x m*n_chan
//! snr       f64 x m
//! ```
//!
//! All numbers are little-endian.

use std::io::{Read, Write};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{apply_cfr_into, ChannelClass, ChannelModel, NoiseSpec, N_CHAN};
use crate::error::{Error, Result};
use crate::nn::checkpoint::{read_f64s, write_f64s};
use crate::nn::Tensor;
use crate::phy::{grid_from_bits, OfdmConfig, PilotLayout};
use crate::rng::SimRng;
use crate::unidnn::featurize;

pub const MAGIC: &[u8; 7] = b"UNIDNN1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SnrPolicy {
    Fixed { db: f64 },
    Uniform { min_db: f64, max_db: f64 },
}

impl SnrPolicy {
    pub fn sample(&self, rng: &mut SimRng) -> f64 {
        match *self {
            SnrPolicy::Fixed { db } => db,
            SnrPolicy::Uniform { min_db, max_db } => rng.random_range(min_db..=max_db),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            SnrPolicy::Fixed { db } => (0.0..=20.0).contains(&db),
            SnrPolicy::Uniform { min_db, max_db } => min_db <= max_db && min_db >= 0.0 && max_db <= 20.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("SNR policy {self:?} outside [0, 20] dB")))
        }
    }

    fn encode(&self) -> (u8, f64, f64) {
        match *self {
            SnrPolicy::Fixed { db } => (0, db, db),
            SnrPolicy::Uniform { min_db, max_db } => (1, min_db, max_db),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    /// `m x 128` received symbols, real parts then imaginary parts.
    pub features: Tensor,
    /// `m x N_out` transmitted data bits.
    pub labels: Tensor,
    /// `m x 5` one-hot channel classes.
    pub class_labels: Tensor,
    pub snr_db: Vec<f64>,
    pub n_pilots: usize,
    pub snr_policy: SnrPolicy,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn class_of(&self, i: usize) -> ChannelClass {
        let row = self.class_labels.row(i);
        ChannelClass::from_index(crate::nn::loss::argmax(row)).expect("one-hot row")
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.features.rows();
        if self.labels.rows() != m || self.class_labels.rows() != m || self.snr_db.len() != m {
            return Err(Error::Format(format!(
                "row counts disagree: features {m}, labels {}, classes {}, snr {}",
                self.labels.rows(),
                self.class_labels.rows(),
                self.snr_db.len()
            )));
        }
        if !self.features.all_finite() {
            return Err(Error::Format("non-finite feature".into()));
        }
        Ok(())
    }

    /// Rows `idx`, in order.
    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: self.features.gather_rows(idx),
            labels: self.labels.gather_rows(idx),
            class_labels: self.class_labels.gather_rows(idx),
            snr_db: idx.iter().map(|&i| self.snr_db[i]).collect(),
            n_pilots: self.n_pilots,
            snr_policy: self.snr_policy,
        }
    }

    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        self.validate()?;
        w.write_all(MAGIC)?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for v in [
            self.features.cols(),
            self.labels.cols(),
            self.class_labels.cols(),
            self.n_pilots,
        ] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        let (tag, a, b) = self.snr_policy.encode();
        w.write_all(&[tag])?;
        write_f64s(w, &[a, b])?;
        write_f64s(w, self.features.data())?;
        write_f64s(w, self.labels.data())?;
        write_f64s(w, self.class_labels.data())?;
        write_f64s(w, &self.snr_db)?;
        Ok(())
    }

    pub fn read(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 7];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a dataset file".into()));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let m = u64::from_le_bytes(b8) as usize;
        let mut dims = [0usize; 4];
        for d in &mut dims {
            let mut b4 = [0u8; 4];
            r.read_exact(&mut b4)?;
            *d = u32::from_le_bytes(b4) as usize;
        }
        let [n_in, n_out, n_chan, n_pilots] = dims;
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let ab = read_f64s(r, 2)?;
        let snr_policy = match tag[0] {
            0 => SnrPolicy::Fixed { db: ab[0] },
            1 => SnrPolicy::Uniform { min_db: ab[0], max_db: ab[1] },
            t => return Err(Error::Format(format!("unknown SNR policy tag {t}"))),
        };
        let ds = Self {
            features: Tensor::from_rows(m, n_in, read_f64s(r, m * n_in)?)?,
            labels: Tensor::from_rows(m, n_out, read_f64s(r, m * n_out)?)?,
            class_labels: Tensor::from_rows(m, n_chan, read_f64s(r, m * n_chan)?)?,
            snr_db: read_f64s(r, m)?,
            n_pilots,
            snr_policy,
        };
        ds.validate()?;
        Ok(ds)
    }
}

/// One simulated OFDM symbol at the receiver.
#[derive(Debug, Clone)]
pub struct LinkSample {
    pub class: ChannelClass,
    pub snr_db: f64,
    pub bits: Vec<u8>,
    pub cfr: Vec<Complex64>,
    pub y: Vec<Complex64>,
}

/// Draws data bits, a channel and noise for one symbol. The draw order
/// (bits, channel, noise) is part of the reproducibility contract.
pub fn simulate_symbol(
    model: &ChannelModel,
    layout: &PilotLayout,
    noise: &NoiseSpec,
    rng: &mut SimRng,
    bits_per_symbol: usize,
) -> Result<LinkSample> {
    let bits: Vec<u8> = (0..bits_per_symbol).map(|_| rng.random_range(0..2u8)).collect();
    let grid = grid_from_bits(&bits, layout)?;
    let cfr = model.draw_cfr(rng);
    let mut y = Vec::with_capacity(layout.n_sub);
    apply_cfr_into(&grid.x, &cfr, noise, rng, &mut y);
    Ok(LinkSample {
        class: model.class,
        snr_db: noise.snr_db,
        bits,
        cfr,
        y,
    })
}

/// `m` samples with classes uniform over `classes` and SNR per `policy`.
pub fn generate(
    classes: &[ChannelClass],
    policy: SnrPolicy,
    n_pilots: usize,
    m: usize,
    rng: &mut SimRng,
) -> Result<LabeledDataset> {
    if classes.is_empty() || m == 0 {
        return Err(Error::InvalidConfig("dataset needs at least one class and one sample".into()));
    }
    let cfg = OfdmConfig::new(n_pilots)?;
    let layout = PilotLayout::new(&cfg);
    let models: Vec<ChannelModel> = classes.iter().map(|&c| ChannelModel::new(c, &cfg)).collect();
    let n_out = cfg.bits_per_symbol();
    let mut features = Vec::with_capacity(m * 2 * cfg.n_sub);
    let mut labels = Vec::with_capacity(m * n_out);
    let mut class_labels = Vec::with_capacity(m * N_CHAN);
    let mut snr_db = Vec::with_capacity(m);
    for _ in 0..m {
        let model = &models[rng.random_range(0..models.len())];
        let snr = policy.sample(rng);
        let s = simulate_symbol(model, &layout, &NoiseSpec::from_snr_db(snr), rng, n_out)?;
        features.extend(featurize(&s.y)?);
        labels.extend(s.bits.iter().map(|&b| f64::from(b)));
        let mut one_hot = [0.0; N_CHAN];
        one_hot[s.class.index()] = 1.0;
        class_labels.extend_from_slice(&one_hot);
        snr_db.push(snr);
    }
    Ok(LabeledDataset {
        features: Tensor::from_rows(m, 2 * cfg.n_sub, features)?,
        labels: Tensor::from_rows(m, n_out, labels)?,
        class_labels: Tensor::from_rows(m, N_CHAN, class_labels)?,
        snr_db,
        n_pilots,
        snr_policy: policy,
    })
}
