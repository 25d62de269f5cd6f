use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use super::config::ScenarioConfig;
use super::methods::{eval_stream_tag, BundleSet, Detector, EvalChannel, Method};
use super::tags;
use crate::channel::{ChannelModel, NoiseSpec};
use crate::dataset::{simulate_symbol, LinkSample};
use crate::error::{Error, Result};
use crate::phy::{OfdmConfig, PilotLayout};
use crate::receiver::count_bit_errors;
use crate::rng::{self, SimRng};

#[derive(Debug, Clone, PartialEq)]
pub struct BerPoint {
    pub method: Method,
    pub channel: EvalChannel,
    pub n_pilots: usize,
    pub snr_db: f64,
    pub ber: f64,
    pub bits: u64,
    pub errors: u64,
    /// Budget ran out before `min_errors` errors were seen; `ber` is then
    /// only an upper-bound style estimate.
    pub bound: bool,
}

/// Draws `n` symbols; with several models the class is drawn per symbol.
pub(crate) fn draw_symbols(
    models: &[ChannelModel],
    layout: &PilotLayout,
    noise: &NoiseSpec,
    bits_per_symbol: usize,
    n: usize,
    rng: &mut SimRng,
) -> Result<Vec<LinkSample>> {
    (0..n)
        .map(|_| {
            let model = if models.len() == 1 {
                &models[0]
            } else {
                &models[rng.random_range(0..models.len())]
            };
            simulate_symbol(model, layout, noise, rng, bits_per_symbol)
        })
        .collect()
}

fn run_point(
    scn: &ScenarioConfig,
    method: Method,
    channel: EvalChannel,
    snr_db: f64,
    bundles: &BundleSet,
) -> Result<BerPoint> {
    let cfg = OfdmConfig::new(scn.n_pilots)?;
    let layout = PilotLayout::new(&cfg);
    let models: Vec<ChannelModel> = channel.classes(scn).iter().map(|&c| ChannelModel::new(c, &cfg)).collect();
    let noise = NoiseSpec::from_snr_db(snr_db);
    let point_id = [scn.n_pilots as u64, eval_stream_tag(channel), snr_db.to_bits()];
    let mut corr_rng = rng::stream(scn.seed, rng::stream_id(&[&[tags::CORRELATION][..], &point_id].concat()));
    let detector = Detector::build(method, &models, &layout, &noise, scn.m_h, &mut corr_rng, bundles)?;
    // Every method at a given point sees the same symbols.
    let mut sym_rng = rng::stream(scn.seed, rng::stream_id(&[&[tags::SWEEP][..], &point_id].concat()));
    let sw = &scn.sweep;
    let per_symbol = cfg.bits_per_symbol() as u64;
    let (mut bits, mut errors) = (0u64, 0u64);
    loop {
        let remaining = sw.bit_budget.saturating_sub(bits).div_ceil(per_symbol) as usize;
        let n = sw.chunk_symbols.max(1).min(remaining);
        if n == 0 {
            break;
        }
        let samples = draw_symbols(&models, &layout, &noise, cfg.bits_per_symbol(), n, &mut sym_rng)?;
        for (s, rx) in samples.iter().zip(detector.detect(&samples, &layout)?) {
            errors += count_bit_errors(&s.bits, &rx)? as u64;
        }
        bits += n as u64 * per_symbol;
        if errors >= sw.min_errors && bits >= sw.min_bits {
            break;
        }
    }
    Ok(BerPoint {
        method,
        channel,
        n_pilots: scn.n_pilots,
        snr_db,
        ber: if bits == 0 { 0.0 } else { errors as f64 / bits as f64 },
        bits,
        errors,
        bound: errors < sw.min_errors,
    })
}

/// One point per (channel, method, SNR), evaluated in parallel and returned
/// in that nested order.
pub fn run_ber_sweep(scn: &ScenarioConfig, bundles: &BundleSet) -> Result<Vec<BerPoint>> {
    scn.validate()?;
    let sw = &scn.sweep;
    if sw.bit_budget == 0 {
        return Err(Error::InvalidConfig("bit budget must be positive".into()));
    }
    for m in &sw.methods {
        if let Method::Neural(a) = m {
            if !bundles.contains_key(a) {
                return Err(Error::MissingArtifact(super::methods::bundle_dir(scn, *a)));
            }
        }
    }
    let jobs: Vec<(EvalChannel, Method, f64)> = sw
        .channels
        .iter()
        .flat_map(|&c| sw.methods.iter().flat_map(move |&m| sw.snr_db.iter().map(move |&s| (c, m, s))))
        .collect();
    jobs.par_iter()
        .map(|&(c, m, s)| run_point(scn, m, c, s, bundles))
        .collect()
}

pub fn write_ber_csv(points: &[BerPoint], w: &mut impl Write) -> Result<()> {
    writeln!(w, "method,channel,np,snr_db,ber,bits,errors,bound")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{:e},{},{},{}",
            p.method,
            p.channel.label(),
            p.n_pilots,
            p.snr_db,
            p.ber,
            p.bits,
            p.errors,
            u8::from(p.bound)
        )?;
    }
    Ok(())
}
