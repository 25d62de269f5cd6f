use std::hint::black_box;
use std::io::Write;
use std::time::Instant;

use super::config::ScenarioConfig;
use super::methods::BundleSet;
use super::sweep::draw_symbols;
use super::tags;
use crate::channel::{estimate_correlation, ChannelClass, ChannelModel, NoiseSpec, N_CHAN};
use crate::dataset::{generate, LinkSample, SnrPolicy};
use crate::error::{Error, Result};
use crate::nn::loss::categorical_accuracy;
use crate::nn::Network;
use crate::phy::{OfdmConfig, PilotLayout};
use crate::receiver::{interpolate_estimate, ls_from_symbol, EstimateMethod, MmseSmoother};
use crate::rng::{self, SimRng};
use crate::unidnn::{classifier_confusion, infer};

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub method: String,
    /// Median wall-clock seconds per OFDM symbol.
    pub seconds_per_symbol: f64,
    /// `seconds_per_symbol / T_LS`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingReport {
    pub rows: Vec<TimingRow>,
}

impl TimingReport {
    pub fn get(&self, method: &str) -> Option<&TimingRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median over trials of the mean per-symbol time of `f`.
fn time_per_symbol(
    scn: &ScenarioConfig,
    samples: &[LinkSample],
    mut f: impl FnMut(&LinkSample) -> Result<()>,
) -> Result<f64> {
    let t = &scn.timing;
    for _ in 0..t.warmup {
        for s in samples {
            f(s)?;
        }
    }
    let mut per_trial = Vec::with_capacity(t.trials);
    for _ in 0..t.trials.max(1) {
        let start = Instant::now();
        for s in samples {
            f(s)?;
        }
        per_trial.push(start.elapsed().as_secs_f64() / samples.len() as f64);
    }
    Ok(median(per_trial))
}

/// Per-symbol inference times for LS (pilot estimates only), MMSE and every
/// bundle in `bundles`, relative to LS.
///
/// The MMSE row charges each symbol for the Cholesky solve and, when
/// `timing.mmse_includes_correlation` is set, for estimating the
/// correlation matrix from `m_h` channel draws. An `MMSE_solve` row with
/// the solve alone is always reported as well.
pub fn run_timing(scn: &ScenarioConfig, bundles: &BundleSet) -> Result<TimingReport> {
    scn.validate()?;
    let cfg = OfdmConfig::new(scn.n_pilots)?;
    let layout = PilotLayout::new(&cfg);
    let models: Vec<ChannelModel> = scn.classes.iter().map(|&c| ChannelModel::new(c, &cfg)).collect();
    let noise = NoiseSpec::from_snr_db(scn.timing.snr_db);
    let mut r = rng::stream(scn.seed, rng::stream_id(&[tags::TIMING, scn.n_pilots as u64]));
    let samples = draw_symbols(
        &models,
        &layout,
        &noise,
        cfg.bits_per_symbol(),
        scn.timing.symbols_per_trial.max(1),
        &mut r,
    )?;
    let (r_hh, _) = estimate_correlation(&models, &layout, scn.m_h, &noise, &mut r)?;

    let mut rows = Vec::new();
    let t_ls = time_per_symbol(scn, &samples, |s| {
        black_box(ls_from_symbol(&s.y, &layout)?);
        Ok(())
    })?;
    rows.push(("LS".to_string(), t_ls));

    let mmse_solve = |s: &LinkSample, r: &nalgebra::DMatrix<num_complex::Complex64>| -> Result<()> {
        let smoother = MmseSmoother::new(r, &noise)?;
        let est = smoother.apply(&ls_from_symbol(&s.y, &layout)?)?;
        black_box(interpolate_estimate(&est, &layout, EstimateMethod::MmsePerfect)?);
        Ok(())
    };
    let t_solve = time_per_symbol(scn, &samples, |s| mmse_solve(s, &r_hh))?;
    let t_mmse = if scn.timing.mmse_includes_correlation {
        let mut corr_rng: SimRng = rng::stream(scn.seed, rng::stream_id(&[tags::TIMING, tags::CORRELATION]));
        time_per_symbol(scn, &samples, |s| {
            let (r, _) = estimate_correlation(&models, &layout, scn.m_h, &noise, &mut corr_rng)?;
            mmse_solve(s, &r)
        })?
    } else {
        t_solve
    };
    rows.push(("MMSE".to_string(), t_mmse));
    rows.push(("MMSE_solve".to_string(), t_solve));

    for (arch, bundle) in bundles {
        let t = time_per_symbol(scn, &samples, |s| {
            black_box(infer(bundle, &s.y)?);
            Ok(())
        })?;
        rows.push((arch.name().to_string(), t));
    }
    if !(t_ls > 0.0) {
        return Err(Error::InvalidConfig("LS timing resolved to zero".into()));
    }
    Ok(TimingReport {
        rows: rows
            .into_iter()
            .map(|(method, t)| TimingRow {
                method,
                seconds_per_symbol: t,
                ratio: t / t_ls,
            })
            .collect(),
    })
}

pub fn write_timing_csv(report: &TimingReport, w: &mut impl Write) -> Result<()> {
    writeln!(w, "method,seconds_per_symbol,ratio_to_ls")?;
    for r in &report.rows {
        writeln!(w, "{},{:e},{:.3}", r.method, r.seconds_per_symbol, r.ratio)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierEval {
    pub snr_db: Vec<f64>,
    /// Row-normalized `(true, predicted)` matrices, one per SNR.
    pub confusion: Vec<[[f64; N_CHAN]; N_CHAN]>,
    pub accuracy: Vec<f64>,
}

/// Confusion matrices on fresh fixed-SNR test sets over `scn.classes`.
pub fn run_classifier_eval(scn: &ScenarioConfig, classifier: &Network) -> Result<ClassifierEval> {
    scn.validate()?;
    let mut out = ClassifierEval {
        snr_db: Vec::new(),
        confusion: Vec::new(),
        accuracy: Vec::new(),
    };
    for &snr in &scn.classify.snr_db {
        let mut r = rng::stream(
            scn.seed,
            rng::stream_id(&[tags::CLASSIFY, scn.n_pilots as u64, snr.to_bits()]),
        );
        let ds = generate(
            &scn.classes,
            SnrPolicy::Fixed { db: snr },
            scn.n_pilots,
            scn.classify.symbols_per_snr.max(1),
            &mut r,
        )?;
        out.confusion.push(classifier_confusion(classifier, &ds.features, &ds.class_labels)?);
        out.accuracy.push(categorical_accuracy(&ds.class_labels, &classifier.predict(&ds.features)?)?);
        out.snr_db.push(snr);
    }
    Ok(out)
}

/// Confusion rows to `conf` and per-SNR accuracy to `acc`.
pub fn write_classifier_csv(eval: &ClassifierEval, conf: &mut impl Write, acc: &mut impl Write) -> Result<()> {
    let names: Vec<&str> = ChannelClass::ALL.iter().map(|c| c.name()).collect();
    writeln!(conf, "snr_db,true_class,{}", names.join(","))?;
    writeln!(acc, "snr_db,accuracy")?;
    for ((snr, m), a) in eval.snr_db.iter().zip(&eval.confusion).zip(&eval.accuracy) {
        for (i, row) in m.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            writeln!(conf, "{snr},{},{}", names[i], cells.join(","))?;
        }
        writeln!(acc, "{snr},{a:.6}")?;
    }
    Ok(())
}
