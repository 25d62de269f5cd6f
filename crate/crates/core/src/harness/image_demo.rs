use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, GrayImage, ImageEncoder, ImageReader};

use super::config::ScenarioConfig;
use super::methods::{BundleSet, Detector, Method};
use super::tags;
use crate::channel::{apply_cfr_into, ChannelClass, ChannelModel, NoiseSpec};
use crate::dataset::LinkSample;
use crate::error::{Error, Result};
use crate::phy::{grid_from_bits, OfdmConfig, PilotLayout};
use crate::receiver::count_bit_errors;
use crate::rng;

#[derive(Debug, Clone)]
pub struct ImageDemoReport {
    pub method: Method,
    pub channel: ChannelClass,
    pub snr_db: Option<f64>,
    pub width: u32,
    pub height: u32,
    /// Payload bits; the zero padding of the last symbol is excluded.
    pub payload_bits: usize,
    pub bit_errors: usize,
    pub ber: f64,
    pub received: GrayImage,
}

/// Pixels as bits, most significant bit first.
pub fn pixels_to_bits(pixels: &[u8]) -> Vec<u8> {
    pixels.iter().flat_map(|&p| (0..8).rev().map(move |i| (p >> i) & 1)).collect()
}

pub fn bits_to_pixels(bits: &[u8]) -> Vec<u8> {
    bits.chunks(8).map(|c| c.iter().fold(0u8, |acc, &b| (acc << 1) | (b & 1))).collect()
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    Ok(ImageReader::open(path)?.with_guessed_format()?.decode()?.to_luma8())
}

/// Binary (P5) graymap.
pub fn write_pgm(img: &GrayImage, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let enc = PnmEncoder::new(BufWriter::new(File::create(path)?))
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary));
    enc.write_image(img.as_raw(), img.width(), img.height(), ExtendedColorType::L8)?;
    Ok(())
}

/// Sends `img` through `scn.image.channel` one OFDM symbol at a time and
/// decodes it with `scn.image.method`.
pub fn transmit_image(scn: &ScenarioConfig, img: &GrayImage, bundles: &BundleSet) -> Result<ImageDemoReport> {
    let ic = &scn.image;
    let cfg = OfdmConfig::new(scn.n_pilots)?;
    let layout = PilotLayout::new(&cfg);
    let model = ChannelModel::new(ic.channel, &cfg);
    let noise = match ic.snr_db {
        Some(db) => NoiseSpec::from_snr_db(db),
        None => NoiseSpec::noiseless(),
    };
    let snr_tag = ic.snr_db.map_or(u64::MAX, f64::to_bits);
    let stream = |tag| rng::stream(scn.seed, rng::stream_id(&[tag, scn.n_pilots as u64, ic.channel.index() as u64, snr_tag]));
    let detector = Detector::build(
        ic.method,
        std::slice::from_ref(&model),
        &layout,
        &noise,
        scn.m_h,
        &mut stream(tags::CORRELATION),
        bundles,
    )?;
    let mut r = stream(tags::IMAGE);

    let payload = pixels_to_bits(img.as_raw());
    let per_symbol = cfg.bits_per_symbol();
    let mut padded = payload.clone();
    padded.resize(payload.len().div_ceil(per_symbol) * per_symbol, 0);
    let mut samples = Vec::with_capacity(padded.len() / per_symbol);
    for chunk in padded.chunks(per_symbol) {
        let grid = grid_from_bits(chunk, &layout)?;
        let cfr = model.draw_cfr(&mut r);
        let mut y = Vec::with_capacity(cfg.n_sub);
        apply_cfr_into(&grid.x, &cfr, &noise, &mut r, &mut y);
        samples.push(LinkSample {
            class: ic.channel,
            snr_db: noise.snr_db,
            bits: chunk.to_vec(),
            cfr,
            y,
        });
    }
    let mut rx_bits = Vec::with_capacity(padded.len());
    for block in samples.chunks(scn.sweep.chunk_symbols.max(1)) {
        for bits in detector.detect(block, &layout)? {
            rx_bits.extend(bits);
        }
    }
    rx_bits.truncate(payload.len());
    let bit_errors = count_bit_errors(&payload, &rx_bits)?;
    let received = GrayImage::from_raw(img.width(), img.height(), bits_to_pixels(&rx_bits))
        .ok_or_else(|| Error::Shape("reassembled image size".into()))?;
    Ok(ImageDemoReport {
        method: ic.method,
        channel: ic.channel,
        snr_db: ic.snr_db,
        width: img.width(),
        height: img.height(),
        payload_bits: payload.len(),
        bit_errors,
        ber: if payload.is_empty() { 0.0 } else { bit_errors as f64 / payload.len() as f64 },
        received,
    })
}

/// Reads `scn.image.input`, transmits it and writes the decoded image to
/// `scn.image.output`.
pub fn run_image_demo(scn: &ScenarioConfig, bundles: &BundleSet) -> Result<ImageDemoReport> {
    let img = read_pgm(&scn.image.input)?;
    let report = transmit_image(scn, &img, bundles)?;
    write_pgm(&report.received, &scn.image.output)?;
    Ok(report)
}
