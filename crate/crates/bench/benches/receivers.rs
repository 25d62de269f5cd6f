use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use unidnn::channel::{estimate_correlation, ChannelClass, ChannelModel, NoiseSpec};
use unidnn::dataset::simulate_symbol;
use unidnn::harness::ScenarioConfig;
use unidnn::phy::{grid_from_bits, ofdm_demodulate, ofdm_modulate, OfdmConfig, PilotLayout};
use unidnn::receiver::{ls_from_symbol, ConventionalReceiver, EstimateMethod, MmseSmoother};
use unidnn::rng;
use unidnn::unidnn::{build_detector, infer, Architecture};

fn receivers(c: &mut Criterion) {
    let cfg = OfdmConfig::new(8).unwrap();
    let layout = PilotLayout::new(&cfg);
    let model = ChannelModel::new(ChannelClass::Rician, &cfg);
    let noise = NoiseSpec::from_snr_db(20.0);
    let mut r = rng::seeded(1);
    let s = simulate_symbol(&model, &layout, &noise, &mut r, cfg.bits_per_symbol()).unwrap();
    let (r_hh, _) = estimate_correlation(std::slice::from_ref(&model), &layout, 1000, &noise, &mut r).unwrap();

    c.bench_function("ofdm_modulate_demodulate", |b| {
        let grid = grid_from_bits(&s.bits, &layout).unwrap();
        b.iter(|| {
            let tx = ofdm_modulate(black_box(&grid), &cfg).unwrap();
            ofdm_demodulate(&tx.samples_cp, &cfg).unwrap()
        })
    });
    c.bench_function("ls_pilots", |b| b.iter(|| ls_from_symbol(black_box(&s.y), &layout).unwrap()));
    c.bench_function("ls_detect", |b| {
        b.iter(|| ConventionalReceiver::Ls.detect(black_box(&s.y), &s.cfr, &layout).unwrap())
    });
    c.bench_function("mmse_detect", |b| {
        b.iter(|| {
            let rx = ConventionalReceiver::Mmse {
                method: EstimateMethod::MmsePerfect,
                smoother: MmseSmoother::new(&r_hh, &noise).unwrap(),
            };
            rx.detect(black_box(&s.y), &s.cfr, &layout).unwrap()
        })
    });
    c.bench_function("mmse_correlation_1000", |b| {
        let mut r = rng::seeded(2);
        b.iter(|| estimate_correlation(std::slice::from_ref(&model), &layout, 1000, &noise, &mut r).unwrap())
    });

    let scn = ScenarioConfig::fast();
    for arch in Architecture::ALL {
        let mut bundle = build_detector(arch, &scn.detector_config(arch)).unwrap();
        // Inference cost does not depend on the weights.
        bundle.trained = true;
        c.bench_function(&format!("infer_{arch}"), |b| b.iter(|| infer(&bundle, black_box(&s.y)).unwrap()));
    }
}

criterion_group!(benches, receivers);
criterion_main!(benches);
