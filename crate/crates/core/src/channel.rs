//! Fading channel classes, their frequency responses, and the noisy
//! frequency-domain link `Y = X H + n`.
//!
//! Every class is normalized to unit average power, so the SNR of a
//! [`NoiseSpec`] is the received SNR for all of them. Channels are redrawn
//! independently for each OFDM symbol (block fading per symbol).

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::phy::{ModulatedGrid, OfdmConfig, PilotLayout};
use crate::rng::{self, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum ChannelClass {
    Rayleigh,
    Rician,
    TdlA,
    Winner2,
    AwgnOnly,
}

pub const N_CHAN: usize = 5;

impl ChannelClass {
    /// One-hot column order.
    pub const ALL: [ChannelClass; N_CHAN] = [
        ChannelClass::Rayleigh,
        ChannelClass::Rician,
        ChannelClass::TdlA,
        ChannelClass::Winner2,
        ChannelClass::AwgnOnly,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ChannelClass::Rayleigh => "Rayleigh",
            ChannelClass::Rician => "Rician",
            ChannelClass::TdlA => "TdlA",
            ChannelClass::Winner2 => "Winner2",
            ChannelClass::AwgnOnly => "AwgnOnly",
        }
    }

    /// Whether the class is frequency selective over the 64-subcarrier band.
    pub fn is_selective(self) -> bool {
        matches!(
            self,
            ChannelClass::Rayleigh | ChannelClass::Rician | ChannelClass::Winner2
        )
    }
}

impl fmt::Display for ChannelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChannelClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownClass(s.to_string()))
    }
}

/// Normalized delay/power profile entry. Delay is in sample periods and
/// may be fractional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdpEntry {
    pub delay_samples: f64,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModelParams {
    pub n_taps: usize,
    pub n_frac_taps: usize,
    /// Total delay span in seconds.
    pub delay_span: f64,
    /// LOS-to-scatter power ratio, Rician only.
    pub kappa: Option<f64>,
    /// Scattered-component profile; powers sum to one, or to `1/(1+kappa)`
    /// when a LOS component is present.
    pub pdp: Vec<PdpEntry>,
}

/// 3GPP TDL-A: (normalized delay, power in dB), 23 taps.
const TDL_A: [(f64, f64); 23] = [
    (0.0000, -13.4),
    (0.3819, 0.0),
    (0.4025, -2.2),
    (0.5868, -4.0),
    (0.4610, -6.0),
    (0.5375, -8.2),
    (0.6708, -9.9),
    (0.5750, -10.5),
    (0.7618, -7.5),
    (1.5375, -15.9),
    (1.8978, -6.6),
    (2.2242, -16.7),
    (2.1718, -12.4),
    (2.4942, -15.2),
    (2.5119, -10.8),
    (3.0582, -11.3),
    (4.0810, -12.7),
    (4.4579, -16.2),
    (4.5695, -18.3),
    (4.7966, -18.9),
    (5.0066, -16.6),
    (5.3043, -19.9),
    (9.6586, -29.7),
];

const WINNER2_TAPS: usize = 24;
const WINNER2_DELAY_SEED: u64 = 0x3a1e_2024;
/// Exponential profile decay constant as a fraction of the span.
const WINNER2_DECAY_FRACTION: f64 = 1.0 / 3.0;

impl ChannelModelParams {
    pub fn for_class(class: ChannelClass, cfg: &OfdmConfig) -> Self {
        let ts = cfg.sample_period;
        let uniform = |l: usize, total: f64| {
            (0..l)
                .map(|i| PdpEntry {
                    delay_samples: i as f64,
                    power: total / l as f64,
                })
                .collect::<Vec<_>>()
        };
        match class {
            ChannelClass::Rayleigh => Self {
                n_taps: 4,
                n_frac_taps: 0,
                delay_span: 4.0 * ts,
                kappa: None,
                pdp: uniform(4, 1.0),
            },
            ChannelClass::Rician => {
                let kappa = 2.0;
                Self {
                    n_taps: 6,
                    n_frac_taps: 0,
                    delay_span: 6.0 * ts,
                    kappa: Some(kappa),
                    pdp: uniform(6, 1.0 / (1.0 + kappa)),
                }
            }
            ChannelClass::TdlA => {
                let span = 0.965e-6;
                let max_norm = TDL_A.iter().map(|t| t.0).fold(0.0, f64::max);
                let lin: Vec<f64> = TDL_A.iter().map(|t| 10f64.powf(t.1 / 10.0)).collect();
                let total: f64 = lin.iter().sum();
                let pdp = TDL_A
                    .iter()
                    .zip(&lin)
                    .map(|(t, p)| PdpEntry {
                        delay_samples: t.0 / max_norm * span / ts,
                        power: p / total,
                    })
                    .collect();
                Self {
                    n_taps: 1,
                    n_frac_taps: TDL_A.len(),
                    delay_span: span,
                    kappa: None,
                    pdp,
                }
            }
            ChannelClass::Winner2 => {
                let span = 5.2e-6;
                let mut grid_rng = rng::seeded(WINNER2_DELAY_SEED);
                let mut delays: Vec<f64> = std::iter::once(0.0)
                    .chain((1..WINNER2_TAPS).map(|_| grid_rng.random_range(0.0..=span)))
                    .collect();
                delays.sort_by(f64::total_cmp);
                let decay = span * WINNER2_DECAY_FRACTION;
                let raw: Vec<f64> = delays.iter().map(|t| (-t / decay).exp()).collect();
                let total: f64 = raw.iter().sum();
                let pdp = delays
                    .iter()
                    .zip(&raw)
                    .map(|(t, p)| PdpEntry {
                        delay_samples: t / ts,
                        power: p / total,
                    })
                    .collect();
                Self {
                    n_taps: 5,
                    n_frac_taps: WINNER2_TAPS,
                    delay_span: span,
                    kappa: None,
                    pdp,
                }
            }
            ChannelClass::AwgnOnly => Self {
                n_taps: 1,
                n_frac_taps: 0,
                delay_span: 0.0,
                kappa: None,
                pdp: vec![PdpEntry {
                    delay_samples: 0.0,
                    power: 1.0,
                }],
            },
        }
    }

    pub fn max_delay_samples(&self) -> f64 {
        self.pdp.iter().map(|e| e.delay_samples).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    /// Seconds.
    pub delay: f64,
    pub gain: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub class: ChannelClass,
    pub taps: Vec<Tap>,
    /// Line-of-sight contribution folded into tap 0, if any.
    pub los: Option<Complex64>,
    pub cfr: Vec<Complex64>,
}

impl ChannelRealization {
    pub fn delay_span(&self) -> f64 {
        self.taps.iter().map(|t| t.delay).fold(0.0, f64::max)
    }

    pub fn power(&self) -> f64 {
        self.taps.iter().map(|t| t.gain.norm_sqr()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub snr_db: f64,
    /// Complex noise variance per subcarrier (unit signal power). Zero
    /// means a noiseless link and is only produced for `snr_db = +inf`.
    pub sigma_n2: f64,
}

impl NoiseSpec {
    pub fn from_snr_db(snr_db: f64) -> Self {
        Self {
            snr_db,
            sigma_n2: 10f64.powf(-snr_db / 10.0),
        }
    }

    pub fn from_variance(sigma_n2: f64) -> Self {
        Self {
            snr_db: -10.0 * sigma_n2.log10(),
            sigma_n2,
        }
    }

    pub fn noiseless() -> Self {
        Self {
            snr_db: f64::INFINITY,
            sigma_n2: 0.0,
        }
    }
}

#[inline]
fn complex_normal(rng: &mut SimRng) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Circularly-symmetric complex Gaussian with total variance `var`.
#[inline]
pub fn cgauss(rng: &mut SimRng, var: f64) -> Complex64 {
    complex_normal(rng) * (var / 2.0).sqrt()
}

/// `H_k = sum_l g_l exp(-j 2 pi k tau_l / (N T_s))` for `k = 0..n_sub`.
pub fn cir_to_cfr(taps: &[Tap], cfg: &OfdmConfig) -> Vec<Complex64> {
    let period = cfg.n_fft as f64 * cfg.sample_period;
    (0..cfg.n_sub)
        .map(|k| {
            taps.iter()
                .map(|t| t.gain * Complex64::from_polar(1.0, -2.0 * PI * k as f64 * t.delay / period))
                .sum()
        })
        .collect()
}

fn scattered_taps(params: &ChannelModelParams, cfg: &OfdmConfig, rng: &mut SimRng) -> Vec<Tap> {
    params
        .pdp
        .iter()
        .map(|e| Tap {
            delay: e.delay_samples * cfg.sample_period,
            gain: complex_normal(rng) * (e.power / 2.0).sqrt(),
        })
        .collect()
}

fn realization(class: ChannelClass, taps: Vec<Tap>, los: Option<Complex64>, cfg: &OfdmConfig) -> ChannelRealization {
    let cfr = cir_to_cfr(&taps, cfg);
    ChannelRealization {
        class,
        taps,
        los,
        cfr,
    }
}

/// Uniform-power Rayleigh taps at integer delays `0..L`.
pub fn draw_rayleigh(params: &ChannelModelParams, cfg: &OfdmConfig, rng: &mut SimRng) -> ChannelRealization {
    realization(ChannelClass::Rayleigh, scattered_taps(params, cfg, rng), None, cfg)
}

/// Rayleigh scatter of power `1/(1+kappa)` plus a fixed-magnitude LOS
/// component on tap 0 with phase uniform on `[-pi/2, pi/2]`.
pub fn draw_rician(params: &ChannelModelParams, cfg: &OfdmConfig, rng: &mut SimRng) -> ChannelRealization {
    let kappa = params.kappa.unwrap_or(0.0);
    let mut taps = scattered_taps(params, cfg, rng);
    let phase = rng.random_range(-FRAC_PI_2..=FRAC_PI_2);
    let los = Complex64::from_polar((kappa / (1.0 + kappa)).sqrt(), phase);
    taps[0].gain += los;
    realization(ChannelClass::Rician, taps, Some(los), cfg)
}

pub fn draw_tdl_a(params: &ChannelModelParams, cfg: &OfdmConfig, rng: &mut SimRng) -> ChannelRealization {
    realization(ChannelClass::TdlA, scattered_taps(params, cfg, rng), None, cfg)
}

/// Exponential-profile surrogate for the WINNER II generator: 24 taps on a
/// fixed fractional delay grid over the 5.2 us span.
pub fn draw_winner2(params: &ChannelModelParams, cfg: &OfdmConfig, rng: &mut SimRng) -> ChannelRealization {
    realization(ChannelClass::Winner2, scattered_taps(params, cfg, rng), None, cfg)
}

pub fn awgn_class(cfg: &OfdmConfig) -> ChannelRealization {
    realization(
        ChannelClass::AwgnOnly,
        vec![Tap {
            delay: 0.0,
            gain: Complex64::new(1.0, 0.0),
        }],
        None,
        cfg,
    )
}

/// A channel class with its parameters and a cached delay-phase table, so
/// that repeated draws cost one small matrix-vector product.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    pub class: ChannelClass,
    pub params: ChannelModelParams,
    cfg: OfdmConfig,
    /// `phase[l * n_sub + k] = exp(-j 2 pi k tau_l / (N T_s))`
    phase: Vec<Complex64>,
}

impl ChannelModel {
    pub fn new(class: ChannelClass, cfg: &OfdmConfig) -> Self {
        let params = ChannelModelParams::for_class(class, cfg);
        let n = cfg.n_sub;
        let mut phase = Vec::with_capacity(params.pdp.len() * n);
        for e in &params.pdp {
            for k in 0..n {
                phase.push(Complex64::from_polar(
                    1.0,
                    -2.0 * PI * k as f64 * e.delay_samples / cfg.n_fft as f64,
                ));
            }
        }
        Self {
            class,
            params,
            cfg: cfg.clone(),
            phase,
        }
    }

    pub fn all(cfg: &OfdmConfig) -> Vec<ChannelModel> {
        ChannelClass::ALL.iter().map(|&c| Self::new(c, cfg)).collect()
    }

    /// Full realization with taps.
    pub fn draw(&self, rng: &mut SimRng) -> ChannelRealization {
        let p = &self.params;
        match self.class {
            ChannelClass::Rayleigh => draw_rayleigh(p, &self.cfg, rng),
            ChannelClass::Rician => draw_rician(p, &self.cfg, rng),
            ChannelClass::TdlA => draw_tdl_a(p, &self.cfg, rng),
            ChannelClass::Winner2 => draw_winner2(p, &self.cfg, rng),
            ChannelClass::AwgnOnly => awgn_class(&self.cfg),
        }
    }

    /// Draws only the frequency response into `cfr`, consuming the random
    /// stream exactly like [`ChannelModel::draw`].
    pub fn draw_cfr_into(&self, rng: &mut SimRng, cfr: &mut [Complex64]) {
        let n = self.cfg.n_sub;
        cfr.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        if self.class == ChannelClass::AwgnOnly {
            cfr.iter_mut().for_each(|v| *v = Complex64::new(1.0, 0.0));
            return;
        }
        let kappa = self.params.kappa;
        for (l, e) in self.params.pdp.iter().enumerate() {
            let g = complex_normal(rng) * (e.power / 2.0).sqrt();
            let row = &self.phase[l * n..(l + 1) * n];
            for (h, p) in cfr.iter_mut().zip(row) {
                *h += g * p;
            }
        }
        // LOS phase is drawn after the scatter gains, as in `draw_rician`
        if let Some(kappa) = kappa {
            let phase = rng.random_range(-FRAC_PI_2..=FRAC_PI_2);
            let los = Complex64::from_polar((kappa / (1.0 + kappa)).sqrt(), phase);
            // tap 0 sits at zero delay, so the LOS term is flat across subcarriers
            cfr.iter_mut().for_each(|h| *h += los);
        }
    }

    pub fn draw_cfr(&self, rng: &mut SimRng) -> Vec<Complex64> {
        let mut cfr = vec![Complex64::new(0.0, 0.0); self.cfg.n_sub];
        self.draw_cfr_into(rng, &mut cfr);
        cfr
    }
}

/// `Y_k = X_k H_k + n_k`, with `n_k` circular complex Gaussian of variance
/// `sigma_n2`.
pub fn apply_channel(
    grid: &ModulatedGrid,
    chan: &ChannelRealization,
    noise: &NoiseSpec,
    cfg: &OfdmConfig,
    rng: &mut SimRng,
) -> Result<Vec<Complex64>> {
    let span = chan.delay_span();
    let cp = cfg.cp_duration();
    if span > cp * (1.0 + 1e-12) {
        return Err(Error::DelaySpanExceedsCp { span_s: span, cp_s: cp });
    }
    if grid.x.len() != chan.cfr.len() {
        return Err(Error::LengthMismatch {
            what: "grid vs channel response",
            expected: chan.cfr.len(),
            got: grid.x.len(),
        });
    }
    let mut y = Vec::with_capacity(grid.x.len());
    apply_cfr_into(&grid.x, &chan.cfr, noise, rng, &mut y);
    Ok(y)
}

/// Frequency-domain link on a bare response; the caller vouches for the
/// CP condition.
pub fn apply_cfr_into(
    x: &[Complex64],
    cfr: &[Complex64],
    noise: &NoiseSpec,
    rng: &mut SimRng,
    y: &mut Vec<Complex64>,
) {
    y.clear();
    for (xk, hk) in x.iter().zip(cfr) {
        let n = if noise.sigma_n2 > 0.0 {
            cgauss(rng, noise.sigma_n2)
        } else {
            Complex64::new(0.0, 0.0)
        };
        y.push(xk * hk + n);
    }
}

/// Monte-Carlo pilot-grid correlations `(R_HH, R_LS)` over `m_h` draws
/// from `models` (chosen uniformly per draw).
pub fn estimate_correlation(
    models: &[ChannelModel],
    layout: &PilotLayout,
    m_h: usize,
    noise: &NoiseSpec,
    rng: &mut SimRng,
) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>)> {
    if m_h < 2 {
        return Err(Error::InvalidConfig(format!("m_h = {m_h}; need at least 2 draws")));
    }
    if models.is_empty() {
        return Err(Error::InvalidConfig("no channel models to correlate".into()));
    }
    let np = layout.n_pilots();
    let mut r_hh = DMatrix::<Complex64>::zeros(np, np);
    let mut r_ls = DMatrix::<Complex64>::zeros(np, np);
    let mut cfr = vec![Complex64::new(0.0, 0.0); layout.n_sub];
    let mut h = vec![Complex64::new(0.0, 0.0); np];
    let mut ls = vec![Complex64::new(0.0, 0.0); np];
    for _ in 0..m_h {
        let model = &models[if models.len() == 1 { 0 } else { rng.random_range(0..models.len()) }];
        model.draw_cfr_into(rng, &mut cfr);
        for (i, (&k, &p)) in layout.pilot_indices.iter().zip(&layout.pilot_symbols).enumerate() {
            h[i] = cfr[k];
            let n = if noise.sigma_n2 > 0.0 {
                cgauss(rng, noise.sigma_n2)
            } else {
                Complex64::new(0.0, 0.0)
            };
            ls[i] = (p * cfr[k] + n) / p;
        }
        accumulate_outer(&mut r_hh, &h);
        accumulate_outer(&mut r_ls, &ls);
    }
    let scale = 1.0 / m_h as f64;
    for r in [&mut r_hh, &mut r_ls] {
        *r *= Complex64::new(scale, 0.0);
        hermitize(r);
    }
    Ok((r_hh, r_ls))
}

fn accumulate_outer(r: &mut DMatrix<Complex64>, v: &[Complex64]) {
    let n = v.len();
    for i in 0..n {
        for j in i..n {
            r[(i, j)] += v[i] * v[j].conj();
        }
    }
}

/// Mirrors the upper triangle so the matrix is exactly Hermitian.
fn hermitize(r: &mut DMatrix<Complex64>) {
    let n = r.nrows();
    for i in 0..n {
        r[(i, i)].im = 0.0;
        for j in (i + 1)..n {
            r[(j, i)] = r[(i, j)].conj();
        }
    }
}
