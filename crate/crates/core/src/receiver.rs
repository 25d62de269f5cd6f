//! Conventional receiver chain: LS and MMSE pilot estimation, linear
//! interpolation with nearest-pilot edge extension, per-subcarrier ML
//! detection and BER counting.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::NoiseSpec;
use crate::error::{Error, Result};
use crate::phy::{demap_qpsk_hard, qpsk_slice, PilotLayout};

/// Provenance of a channel estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimateMethod {
    Ls,
    MmsePerfect,
    MmseNonPerfect,
    True,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    pub h_hat: Vec<Complex64>,
    pub method: EstimateMethod,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EqualizedSymbol {
    /// `Y_k / H_k` before slicing.
    pub equalized: Vec<Complex64>,
    /// Nearest constellation points.
    pub x_hat: Vec<Complex64>,
    pub bits: Vec<u8>,
    /// Data positions whose channel estimate hit the magnitude guard.
    pub guarded: Vec<usize>,
}

/// Smallest channel magnitude divided by at a data subcarrier.
pub const ESTIMATE_GUARD: f64 = 1e-12;
/// Reciprocal condition below which the regularized system is rejected.
pub const RCOND_LIMIT: f64 = 1e-12;

/// `H_LS,k = Y_k / X_k` on the pilots.
pub fn ls_estimate(y_pilots: &[Complex64], pilot_symbols: &[Complex64]) -> Result<Vec<Complex64>> {
    if y_pilots.len() != pilot_symbols.len() {
        return Err(Error::LengthMismatch {
            what: "pilot observations",
            expected: pilot_symbols.len(),
            got: y_pilots.len(),
        });
    }
    y_pilots
        .iter()
        .zip(pilot_symbols)
        .enumerate()
        .map(|(i, (y, x))| {
            if x.norm_sqr() == 0.0 {
                Err(Error::ZeroPilot(i))
            } else {
                Ok(y / x)
            }
        })
        .collect()
}

/// Gathers the pilot subcarriers of a received symbol and divides out the
/// known pilots.
pub fn ls_from_symbol(y: &[Complex64], layout: &PilotLayout) -> Result<Vec<Complex64>> {
    if y.len() != layout.n_sub {
        return Err(Error::LengthMismatch {
            what: "received symbol",
            expected: layout.n_sub,
            got: y.len(),
        });
    }
    let yp: Vec<Complex64> = layout.pilot_indices.iter().map(|&k| y[k]).collect();
    ls_estimate(&yp, &layout.pilot_symbols)
}

/// The MMSE smoother `R (R + sigma_n2 I)^-1`, factored once.
///
/// The regularized matrix is Hermitian positive definite, so it is solved
/// through a Cholesky factorization rather than inverted.
#[derive(Debug, Clone)]
pub struct MmseSmoother {
    r: DMatrix<Complex64>,
    chol: nalgebra::Cholesky<Complex64, nalgebra::Dyn>,
}

impl MmseSmoother {
    pub fn new(r: &DMatrix<Complex64>, noise: &NoiseSpec) -> Result<Self> {
        let n = r.nrows();
        if n != r.ncols() {
            return Err(Error::Shape(format!("correlation matrix is {}x{}", n, r.ncols())));
        }
        let mut reg = r.clone();
        for i in 0..n {
            reg[(i, i)] += Complex64::new(noise.sigma_n2, 0.0);
        }
        let chol = nalgebra::Cholesky::new(reg).ok_or(Error::Singular { rcond: 0.0 })?;
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), d| {
            (lo.min(d.re.abs()), hi.max(d.re.abs()))
        });
        let rcond = if hi > 0.0 { (lo / hi).powi(2) } else { 0.0 };
        if !(rcond >= RCOND_LIMIT) {
            return Err(Error::Singular { rcond });
        }
        Ok(Self { r: r.clone(), chol })
    }

    pub fn apply(&self, h_ls: &[Complex64]) -> Result<Vec<Complex64>> {
        if h_ls.len() != self.r.nrows() {
            return Err(Error::LengthMismatch {
                what: "LS estimate",
                expected: self.r.nrows(),
                got: h_ls.len(),
            });
        }
        let z = self.chol.solve(&DVector::from_column_slice(h_ls));
        Ok((&self.r * z).iter().copied().collect())
    }
}

/// `R (R + sigma_n2 I)^-1 H_LS`. Pass `R_HH` for the perfect-CSI variant
/// and the LS-estimate correlation for the non-perfect one.
pub fn mmse_estimate(h_ls: &[Complex64], r: &DMatrix<Complex64>, noise: &NoiseSpec) -> Result<Vec<Complex64>> {
    MmseSmoother::new(r, noise)?.apply(h_ls)
}

/// Linear interpolation between adjacent pilots (real and imaginary parts
/// separately); subcarriers outside the pilot span copy the nearest pilot.
pub fn interpolate_estimate(
    pilot_estimates: &[Complex64],
    layout: &PilotLayout,
    method: EstimateMethod,
) -> Result<ChannelEstimate> {
    let idx = &layout.pilot_indices;
    if idx.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "interpolation needs at least 2 pilots, got {}",
            idx.len()
        )));
    }
    if pilot_estimates.len() != idx.len() {
        return Err(Error::LengthMismatch {
            what: "pilot estimates",
            expected: idx.len(),
            got: pilot_estimates.len(),
        });
    }
    let mut h_hat = vec![Complex64::new(0.0, 0.0); layout.n_sub];
    let (first, last) = (idx[0], idx[idx.len() - 1]);
    for (k, h) in h_hat.iter_mut().enumerate() {
        *h = if k <= first {
            pilot_estimates[0]
        } else if k >= last {
            pilot_estimates[idx.len() - 1]
        } else {
            let seg = idx.partition_point(|&p| p <= k) - 1;
            let (k0, k1) = (idx[seg], idx[seg + 1]);
            let t = (k - k0) as f64 / (k1 - k0) as f64;
            pilot_estimates[seg] * (1.0 - t) + pilot_estimates[seg + 1] * t
        };
    }
    Ok(ChannelEstimate { h_hat, method })
}

/// Per-subcarrier ML detection on the data subcarriers. For a SISO link
/// the minimizer of `|Y - X H|^2` over QPSK is the slice of `Y / H`.
pub fn ml_detect(y: &[Complex64], est: &ChannelEstimate, layout: &PilotLayout) -> Result<EqualizedSymbol> {
    if y.len() != layout.n_sub || est.h_hat.len() != layout.n_sub {
        return Err(Error::LengthMismatch {
            what: "received symbol / estimate",
            expected: layout.n_sub,
            got: if y.len() != layout.n_sub { y.len() } else { est.h_hat.len() },
        });
    }
    let n = layout.data_indices.len();
    let mut equalized = Vec::with_capacity(n);
    let mut guarded = Vec::new();
    for (pos, &k) in layout.data_indices.iter().enumerate() {
        let mut h = est.h_hat[k];
        let mag = h.norm();
        if !(mag >= ESTIMATE_GUARD) {
            h = if mag > 0.0 {
                h * (ESTIMATE_GUARD / mag)
            } else {
                Complex64::new(ESTIMATE_GUARD, 0.0)
            };
            guarded.push(pos);
        }
        equalized.push(y[k] / h);
    }
    let x_hat: Vec<Complex64> = equalized.iter().map(|&v| qpsk_slice(v)).collect();
    let bits = demap_qpsk_hard(&x_hat);
    Ok(EqualizedSymbol {
        equalized,
        x_hat,
        bits,
        guarded,
    })
}

pub fn count_bit_errors(tx: &[u8], rx: &[u8]) -> Result<usize> {
    if tx.len() != rx.len() {
        return Err(Error::LengthMismatch {
            what: "bit blocks",
            expected: tx.len(),
            got: rx.len(),
        });
    }
    Ok(tx.iter().zip(rx).filter(|(a, b)| a != b).count())
}

pub fn bit_error_rate(tx: &[u8], rx: &[u8]) -> Result<f64> {
    let errors = count_bit_errors(tx, rx)?;
    Ok(if tx.is_empty() { 0.0 } else { errors as f64 / tx.len() as f64 })
}

/// Full conventional chain for one estimator choice.
#[derive(Debug, Clone)]
pub enum ConventionalReceiver {
    True,
    Ls,
    Mmse {
        method: EstimateMethod,
        smoother: MmseSmoother,
    },
}

impl ConventionalReceiver {
    pub fn method(&self) -> EstimateMethod {
        match self {
            Self::True => EstimateMethod::True,
            Self::Ls => EstimateMethod::Ls,
            Self::Mmse { method, .. } => *method,
        }
    }

    /// `true_cfr` is only consulted by the true-channel benchmark.
    pub fn estimate(&self, y: &[Complex64], true_cfr: &[Complex64], layout: &PilotLayout) -> Result<ChannelEstimate> {
        match self {
            Self::True => Ok(ChannelEstimate {
                h_hat: true_cfr.to_vec(),
                method: EstimateMethod::True,
            }),
            Self::Ls => interpolate_estimate(&ls_from_symbol(y, layout)?, layout, EstimateMethod::Ls),
            Self::Mmse { method, smoother } => {
                let smoothed = smoother.apply(&ls_from_symbol(y, layout)?)?;
                interpolate_estimate(&smoothed, layout, *method)
            }
        }
    }

    pub fn detect(&self, y: &[Complex64], true_cfr: &[Complex64], layout: &PilotLayout) -> Result<Vec<u8>> {
        let est = self.estimate(y, true_cfr, layout)?;
        Ok(ml_detect(y, &est, layout)?.bits)
    }
}
