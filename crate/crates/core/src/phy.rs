//! OFDM transmitter and receiver front end: gray QPSK mapping, comb pilot
//! layout, IFFT plus cyclic prefix and the inverse path.
//!
//! Both DFT directions are unitary (scaled by `1/sqrt(N)`) so the per
//! subcarrier SNR is the same in the time and frequency domains.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::rng;

/// Static numerology of the link.
#[derive(Debug, Clone, PartialEq)]
pub struct OfdmConfig {
    pub n_sub: usize,
    pub n_fft: usize,
    pub n_ifft: usize,
    pub n_cp: usize,
    /// Subcarrier spacing in Hz.
    pub delta_f: f64,
    /// Sampling period in seconds, `1 / (n_fft * delta_f)`.
    pub sample_period: f64,
    pub pilot_spacing: usize,
    pub n_pilots: usize,
    pub pilot_seed: u64,
}

pub const DEFAULT_PILOT_SEED: u64 = 0x5eed_0fd1;

impl OfdmConfig {
    /// 64 subcarriers, 16-sample CP, 15 kHz spacing, `n_pilots` comb pilots.
    pub fn new(n_pilots: usize) -> Result<Self> {
        Self::with_pilot_seed(n_pilots, DEFAULT_PILOT_SEED)
    }

    pub fn with_pilot_seed(n_pilots: usize, pilot_seed: u64) -> Result<Self> {
        let n_sub = 64;
        if n_pilots == 0 || n_sub % n_pilots != 0 {
            return Err(Error::InvalidConfig(format!(
                "pilot count {n_pilots} does not divide {n_sub} subcarriers"
            )));
        }
        let delta_f = 15_000.0;
        let cfg = Self {
            n_sub,
            n_fft: n_sub,
            n_ifft: n_sub,
            n_cp: 16,
            delta_f,
            sample_period: 1.0 / (n_sub as f64 * delta_f),
            pilot_spacing: n_sub / n_pilots,
            n_pilots,
            pilot_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sub != self.n_fft || self.n_fft != self.n_ifft {
            return Err(Error::InvalidConfig(
                "grid must be fully loaded (n_sub = n_fft = n_ifft)".into(),
            ));
        }
        if self.n_pilots < 2 || self.n_pilots * self.pilot_spacing != self.n_sub {
            return Err(Error::InvalidConfig(format!(
                "{} pilots at spacing {} do not tile {} subcarriers",
                self.n_pilots, self.pilot_spacing, self.n_sub
            )));
        }
        if self.n_cp >= self.n_fft {
            return Err(Error::InvalidConfig("cyclic prefix longer than symbol".into()));
        }
        Ok(())
    }

    pub fn n_data(&self) -> usize {
        self.n_sub - self.n_pilots
    }

    pub fn bits_per_symbol(&self) -> usize {
        2 * self.n_data()
    }

    pub fn cp_duration(&self) -> f64 {
        self.n_cp as f64 * self.sample_period
    }

    pub fn symbol_len(&self) -> usize {
        self.n_ifft + self.n_cp
    }
}

/// Comb-type pilot placement: pilots on every `pilot_spacing`-th subcarrier
/// starting at 0, data on the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotLayout {
    pub pilot_indices: Vec<usize>,
    pub pilot_symbols: Vec<Complex64>,
    pub data_indices: Vec<usize>,
    pub n_sub: usize,
}

impl PilotLayout {
    pub fn new(cfg: &OfdmConfig) -> Self {
        let pilot_indices: Vec<usize> = (0..cfg.n_sub).step_by(cfg.pilot_spacing).collect();
        let data_indices = (0..cfg.n_sub)
            .filter(|k| k % cfg.pilot_spacing != 0)
            .collect();
        let mut rng = rng::seeded(cfg.pilot_seed);
        let pilot_symbols = pilot_indices
            .iter()
            .map(|_| qpsk_point(rng.random::<bool>() as u8, rng.random::<bool>() as u8))
            .collect();
        Self {
            pilot_indices,
            pilot_symbols,
            data_indices,
            n_sub: cfg.n_sub,
        }
    }

    pub fn n_pilots(&self) -> usize {
        self.pilot_indices.len()
    }
}

/// Frequency-domain symbol: the diagonal of the transmitted matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulatedGrid {
    pub x: Vec<Complex64>,
}

/// One time-domain OFDM symbol with its cyclic prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSymbol {
    pub samples_cp: Vec<Complex64>,
}

#[inline]
fn qpsk_point(b0: u8, b1: u8) -> Complex64 {
    Complex64::new(
        (1.0 - 2.0 * f64::from(b0)) * FRAC_1_SQRT_2,
        (1.0 - 2.0 * f64::from(b1)) * FRAC_1_SQRT_2,
    )
}

/// Gray QPSK: `(b0, b1) -> ((1 - 2 b0) + j (1 - 2 b1)) / sqrt(2)`.
pub fn map_bits_to_qpsk(bits: &[u8]) -> Result<Vec<Complex64>> {
    if !bits.len().is_multiple_of(2) {
        return Err(Error::OddBitCount(bits.len()));
    }
    Ok(bits.chunks_exact(2).map(|p| qpsk_point(p[0], p[1])).collect())
}

/// Quadrant decision: `b0 = Re < 0`, `b1 = Im < 0`.
pub fn demap_qpsk_hard(symbols: &[Complex64]) -> Vec<u8> {
    let mut bits = Vec::with_capacity(2 * symbols.len());
    for s in symbols {
        bits.push(u8::from(s.re < 0.0));
        bits.push(u8::from(s.im < 0.0));
    }
    bits
}

/// The QPSK point nearest to `s`.
pub fn qpsk_slice(s: Complex64) -> Complex64 {
    qpsk_point(u8::from(s.re < 0.0), u8::from(s.im < 0.0))
}

pub const QPSK_CONSTELLATION: [Complex64; 4] = [
    Complex64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    Complex64::new(FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
    Complex64::new(-FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    Complex64::new(-FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
];

pub fn build_grid(data_symbols: &[Complex64], layout: &PilotLayout) -> Result<ModulatedGrid> {
    if layout.pilot_indices.is_empty() {
        return Err(Error::InvalidConfig("pilot layout has no pilots".into()));
    }
    if data_symbols.len() != layout.data_indices.len() {
        return Err(Error::LengthMismatch {
            what: "data symbols",
            expected: layout.data_indices.len(),
            got: data_symbols.len(),
        });
    }
    let mut x = vec![Complex64::new(0.0, 0.0); layout.n_sub];
    for (&k, &p) in layout.pilot_indices.iter().zip(&layout.pilot_symbols) {
        x[k] = p;
    }
    for (&k, &d) in layout.data_indices.iter().zip(data_symbols) {
        x[k] = d;
    }
    Ok(ModulatedGrid { x })
}

/// Maps a block of data bits straight to a grid with pilots.
pub fn grid_from_bits(bits: &[u8], layout: &PilotLayout) -> Result<ModulatedGrid> {
    build_grid(&map_bits_to_qpsk(bits)?, layout)
}

pub fn ofdm_modulate(grid: &ModulatedGrid, cfg: &OfdmConfig) -> Result<TimeSymbol> {
    if grid.x.len() != cfg.n_ifft {
        return Err(Error::LengthMismatch {
            what: "grid",
            expected: cfg.n_ifft,
            got: grid.x.len(),
        });
    }
    let mut body = grid.x.clone();
    FftPlanner::new().plan_fft_inverse(cfg.n_ifft).process(&mut body);
    let scale = 1.0 / (cfg.n_ifft as f64).sqrt();
    body.iter_mut().for_each(|v| *v *= scale);
    let mut samples_cp = Vec::with_capacity(cfg.symbol_len());
    samples_cp.extend_from_slice(&body[cfg.n_ifft - cfg.n_cp..]);
    samples_cp.extend_from_slice(&body);
    Ok(TimeSymbol { samples_cp })
}

/// Drops the prefix and takes the unitary DFT of the next `n_fft` samples.
pub fn ofdm_demodulate(rx: &[Complex64], cfg: &OfdmConfig) -> Result<Vec<Complex64>> {
    let need = cfg.n_cp + cfg.n_fft;
    if rx.len() < need {
        return Err(Error::LengthMismatch {
            what: "received samples",
            expected: need,
            got: rx.len(),
        });
    }
    let mut y = rx[cfg.n_cp..need].to_vec();
    FftPlanner::new().plan_fft_forward(cfg.n_fft).process(&mut y);
    let scale = 1.0 / (cfg.n_fft as f64).sqrt();
    y.iter_mut().for_each(|v| *v *= scale);
    Ok(y)
}
