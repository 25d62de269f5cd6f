//! End-to-end acceptance checks. Each criterion prints one
//! `criterion N: PASS|FAIL ...` line straight to stdout (visible without
//! `--nocapture`) before asserting.

mod common;

use std::io::Write;
use std::sync::{Mutex, MutexGuard, OnceLock};

use num_complex::Complex64;
use rustfft::FftPlanner;
use statrs::function::erf::erfc;

use unidnn::channel::{apply_channel, cgauss, cir_to_cfr, estimate_correlation, Tap};
use unidnn::dataset::{generate, simulate_symbol, SnrPolicy};
use unidnn::harness::{
    run_ber_sweep, run_classifier_eval, run_timing, train_bundles, transmit_image, BerPoint, BundleSet,
    EvalChannel, Method, ScenarioConfig,
};
use unidnn::phy::{grid_from_bits, ofdm_demodulate, ofdm_modulate};
use unidnn::receiver::{ls_from_symbol, mmse_estimate};
use unidnn::rng::{self, SimRng};
use unidnn::unidnn::{assemble_inputs, build_detector, Architecture, DetectorConfig, Routing};
use unidnn::{ChannelClass, ChannelModel, ChannelRealization, ConventionalReceiver, NoiseSpec, OfdmConfig, PilotLayout};

use rand::Rng;

/// Training and timing share one core; run the heavy checks one at a time.
static HEAVY: Mutex<()> = Mutex::new(());

fn heavy() -> MutexGuard<'static, ()> {
    HEAVY.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(id: &str, pass: bool, detail: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {id}: {} {detail}", if pass { "PASS" } else { "FAIL" });
    let _ = out.flush();
}

fn fast_scn(np: usize) -> ScenarioConfig {
    let mut scn = ScenarioConfig::fast();
    scn.n_pilots = np;
    scn
}

/// Fast-profile bundles at N_p = 8, trained once per test binary.
fn trained() -> &'static BundleSet {
    static BUNDLES: OnceLock<BundleSet> = OnceLock::new();
    BUNDLES.get_or_init(|| train_bundles(&fast_scn(8)).expect("fast-profile training"))
}

fn sweep_at(scn: &ScenarioConfig, methods: Vec<Method>, channels: Vec<EvalChannel>, snr: Vec<f64>, bundles: &BundleSet) -> Vec<BerPoint> {
    let mut scn = scn.clone();
    scn.sweep.methods = methods;
    scn.sweep.channels = channels;
    scn.sweep.snr_db = snr;
    run_ber_sweep(&scn, bundles).unwrap()
}

fn find(points: &[BerPoint], m: Method, c: EvalChannel, snr: f64) -> &BerPoint {
    points.iter().find(|p| p.method == m && p.channel == c && p.snr_db == snr).unwrap()
}

fn neural() -> Vec<Method> {
    Architecture::ALL.iter().map(|&a| Method::Neural(a)).collect()
}

#[test]
fn criterion_1_awgn_matches_closed_form() {
    let _g = heavy();
    let cfg = OfdmConfig::new(8).unwrap();
    let layout = PilotLayout::new(&cfg);
    let model = ChannelModel::new(ChannelClass::AwgnOnly, &cfg);
    let bps = cfg.bits_per_symbol();
    let symbols = 1_000_000usize.div_ceil(bps);
    let mut ok = true;
    let mut detail = Vec::new();
    for esn0_db in [0.0, 4.0, 8.0, 10.0] {
        let noise = NoiseSpec::from_snr_db(esn0_db);
        let mut r = rng::stream(11, esn0_db as u64);
        let (mut errors, mut bits) = (0usize, 0usize);
        for _ in 0..symbols {
            let s = simulate_symbol(&model, &layout, &noise, &mut r, bps).unwrap();
            let rx = ConventionalReceiver::True.detect(&s.y, &s.cfr, &layout).unwrap();
            errors += s.bits.iter().zip(&rx).filter(|(a, b)| a != b).count();
            bits += bps;
        }
        let ber = errors as f64 / bits as f64;
        // Q(sqrt(x)) = erfc(sqrt(x / 2)) / 2
        let es_n0 = 10f64.powf(esn0_db / 10.0);
        let theory = 0.5 * erfc((es_n0 / 2.0).sqrt());
        let rel = (ber - theory).abs() / theory;
        let checked = theory >= 1e-3;
        if checked && rel > 0.05 {
            ok = false;
        }
        detail.push(format!("{esn0_db}dB ber={ber:.3e} q={theory:.3e} rel={rel:.3}{}", if checked { "" } else { " (reported)" }));
    }
    report("1", ok, &detail.join("; "));
    assert!(ok);
}

#[test]
fn criterion_2_estimator_invariants() {
    let _g = heavy();
    let cfg = OfdmConfig::new(8).unwrap();
    let layout = PilotLayout::new(&cfg);
    let mut r = rng::seeded(21);

    let mut worst_ls = 0f64;
    for class in ChannelClass::ALL {
        let model = ChannelModel::new(class, &cfg);
        for _ in 0..200 {
            let s = simulate_symbol(&model, &layout, &NoiseSpec::noiseless(), &mut r, cfg.bits_per_symbol()).unwrap();
            let h_ls = ls_from_symbol(&s.y, &layout).unwrap();
            for (h, &k) in h_ls.iter().zip(&layout.pilot_indices) {
                worst_ls = worst_ls.max((h - s.cfr[k]).norm());
            }
        }
    }

    let models = ChannelModel::all(&cfg);
    let (_, r_ls) = estimate_correlation(&models, &layout, 2000, &NoiseSpec::from_snr_db(20.0), &mut r).unwrap();
    let tiny = NoiseSpec::from_variance(1e-12);
    let mut worst_limit = 0f64;
    for _ in 0..200 {
        let v: Vec<Complex64> = (0..layout.n_pilots()).map(|_| cgauss(&mut r, 1.0)).collect();
        let m = mmse_estimate(&v, &r_ls, &tiny).unwrap();
        worst_limit = worst_limit.max(m.iter().zip(&v).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max));
    }

    let rayleigh = ChannelModel::new(ChannelClass::Rayleigh, &cfg);
    let mut mse_ok = true;
    let mut mse_detail = Vec::new();
    for snr in [0.0, 5.0, 10.0, 15.0, 20.0] {
        let noise = NoiseSpec::from_snr_db(snr);
        let (r_hh, _) = estimate_correlation(std::slice::from_ref(&rayleigh), &layout, 10_000, &noise, &mut r).unwrap();
        let (mut e_ls, mut e_mmse) = (0.0, 0.0);
        for _ in 0..10_000 {
            let s = simulate_symbol(&rayleigh, &layout, &noise, &mut r, cfg.bits_per_symbol()).unwrap();
            let h_ls = ls_from_symbol(&s.y, &layout).unwrap();
            let h_mmse = mmse_estimate(&h_ls, &r_hh, &noise).unwrap();
            for (i, &k) in layout.pilot_indices.iter().enumerate() {
                e_ls += (h_ls[i] - s.cfr[k]).norm_sqr();
                e_mmse += (h_mmse[i] - s.cfr[k]).norm_sqr();
            }
        }
        mse_ok &= e_mmse <= e_ls;
        mse_detail.push(format!("{snr}dB mmse/ls={:.3}", e_mmse / e_ls));
    }
    let ok = worst_ls <= 1e-9 && worst_limit <= 1e-6 && mse_ok;
    report(
        "2",
        ok,
        &format!("ls_err={worst_ls:.1e} mmse_limit_err={worst_limit:.1e} {}", mse_detail.join(" ")),
    );
    assert!(ok);
}

/// `rx[n] = sum_l g_l tx[n - d_l]`, zero before the first sample.
fn convolve(tx: &[Complex64], delays: &[usize], gains: &[Complex64]) -> Vec<Complex64> {
    (0..tx.len())
        .map(|n| {
            delays
                .iter()
                .zip(gains)
                .filter(|(&d, _)| d <= n)
                .map(|(&d, g)| g * tx[n - d])
                .sum()
        })
        .collect()
}

fn random_integer_channel(cfg: &OfdmConfig, r: &mut SimRng) -> (Vec<usize>, Vec<Complex64>) {
    let n_taps = r.random_range(1..=cfg.n_cp + 1);
    let mut delays: Vec<usize> = rand::seq::index::sample(r, cfg.n_cp + 1, n_taps).into_vec();
    delays.sort_unstable();
    let gains = (0..n_taps).map(|_| cgauss(r, 1.0 / n_taps as f64)).collect();
    (delays, gains)
}

#[test]
fn criterion_3_frequency_domain_matches_time_domain() {
    let _g = heavy();
    let cfg = OfdmConfig::new(8).unwrap();
    let layout = PilotLayout::new(&cfg);
    let fft = FftPlanner::new().plan_fft_forward(cfg.n_fft);
    let mut r = rng::seeded(31);
    let (mut worst_path, mut worst_dft) = (0f64, 0f64);
    for _ in 0..1000 {
        let (delays, gains) = random_integer_channel(&cfg, &mut r);
        let taps: Vec<Tap> = delays
            .iter()
            .zip(&gains)
            .map(|(&d, &g)| Tap { delay: d as f64 * cfg.sample_period, gain: g })
            .collect();
        let cfr = cir_to_cfr(&taps, &cfg);

        let mut oracle = vec![Complex64::new(0.0, 0.0); cfg.n_fft];
        for (&d, g) in delays.iter().zip(&gains) {
            oracle[d] += g;
        }
        fft.process(&mut oracle);
        worst_dft = worst_dft.max(oracle.iter().zip(&cfr).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max));

        let bits: Vec<u8> = (0..cfg.bits_per_symbol()).map(|_| r.random_range(0..2u8)).collect();
        let grid = grid_from_bits(&bits, &layout).unwrap();
        let chan = ChannelRealization { class: ChannelClass::Rayleigh, taps, los: None, cfr };
        let freq = apply_channel(&grid, &chan, &NoiseSpec::noiseless(), &cfg, &mut r).unwrap();
        let tx = ofdm_modulate(&grid, &cfg).unwrap();
        let time = ofdm_demodulate(&convolve(&tx.samples_cp, &delays, &gains), &cfg).unwrap();
        worst_path = worst_path.max(freq.iter().zip(&time).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max));
    }
    let ok = worst_path <= 1e-9 && worst_dft <= 1e-9;
    report("3", ok, &format!("time_vs_freq={worst_path:.1e} cfr_vs_dft={worst_dft:.1e}"));
    assert!(ok);
}

#[test]
fn criterion_4_gradient_suite() {
    let _g = heavy();
    let results = common::gradcheck::run_suite(20, 41);
    let worst = results.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    let failing: Vec<&str> = results.iter().filter(|(_, e)| !(*e < 1e-4)).map(|(n, _)| n.as_str()).collect();
    let ok = failing.is_empty() && !results.is_empty();
    report("4", ok, &format!("{} checks, worst rel err {worst:.1e} {failing:?}", results.len()));
    assert!(ok);
}

#[test]
fn criterion_5_desk_scale_ordering() {
    let _g = heavy();
    let start = std::time::Instant::now();
    let bundles = trained();
    let train_s = start.elapsed().as_secs_f64();
    let mut scn = fast_scn(8);
    scn.sweep.min_errors = 10;
    scn.sweep.min_bits = 200_000;
    scn.sweep.bit_budget = 2_000_000;
    let rician = EvalChannel::Class(ChannelClass::Rician);
    let tdla = EvalChannel::Class(ChannelClass::TdlA);
    let mut methods = vec![Method::True, Method::Ls, Method::MmsePerfect, Method::MmseNonPerfect];
    methods.extend(neural());
    let pts = sweep_at(&scn, methods.clone(), vec![rician, EvalChannel::Mixed, tdla], vec![20.0], bundles);
    for p in &pts {
        let _ = writeln!(std::io::stdout().lock(), "  {:>15} {:>8} ber={:.3e} bits={}", p.method.name(), p.channel.label(), p.ber, p.bits);
    }
    let ber = |m, c| find(&pts, m, c, 20.0).ber;

    let ls = ber(Method::Ls, rician);
    let nonperfect = ber(Method::MmseNonPerfect, rician);
    let losing: Vec<&str> = neural()
        .into_iter()
        .filter(|&m| !(ber(m, rician) < ls && ber(m, rician) < nonperfect))
        .map(|m| m.name())
        .collect();
    let (unic, multi) = (ber(Method::Neural(Architecture::UniC), EvalChannel::Mixed), ber(Method::Neural(Architecture::Multi), EvalChannel::Mixed));
    let (tdla_ls, tdla_mmse) = (ber(Method::Ls, tdla), ber(Method::MmsePerfect, tdla));
    let ls_band = (7e-3 / 3.0..=7e-3 * 3.0).contains(&tdla_ls);
    let mmse_band = (3e-3 / 3.0..=3e-3 * 3.0).contains(&tdla_mmse);
    let all_bits = pts.iter().all(|p| p.bits >= 200_000);
    let ok = losing.is_empty() && unic <= multi && ls_band && mmse_band && all_bits;
    report(
        "5",
        ok,
        &format!(
            "rician LS={ls:.3e} MMSE_np={nonperfect:.3e} not-below={losing:?}; mixed UniC={unic:.3e} Multi={multi:.3e}; \
             TdlA LS={tdla_ls:.3e} MMSE_p={tdla_mmse:.3e}; training {train_s:.0}s"
        ),
    );
    assert!(ok);
}

/// Trains at the full profile (100000 samples, 700 epochs); hours on a
/// desktop CPU.
#[test]
#[ignore]
fn criterion_5_full_profile_unic_tdla() {
    let mut scn = ScenarioConfig {
        n_pilots: 8,
        archs: vec![Architecture::UniC],
        ..ScenarioConfig::default()
    };
    let bundles = train_bundles(&scn).unwrap();
    scn.sweep.min_bits = 200_000;
    let tdla = EvalChannel::Class(ChannelClass::TdlA);
    let pts = sweep_at(&scn, vec![Method::Neural(Architecture::UniC)], vec![tdla], vec![20.0], &bundles);
    let b = pts[0].ber;
    let ok = (7e-4 / 3.0..=7e-4 * 3.0).contains(&b);
    report("5-full", ok, &format!("TdlA UniC={b:.3e} target 7e-4 within 3x"));
    assert!(ok);
}

#[test]
fn criterion_6_pilot_density_law() {
    let _g = heavy();
    let selective: Vec<ChannelClass> = ChannelClass::ALL.into_iter().filter(|c| c.is_selective()).collect();
    let channels: Vec<EvalChannel> = selective.iter().map(|&c| EvalChannel::Class(c)).collect();
    let gaps = |np: usize| {
        let mut scn = fast_scn(np);
        scn.sweep.min_errors = 1000;
        scn.sweep.bit_budget = 5_000_000;
        let pts = sweep_at(&scn, vec![Method::True, Method::Ls], channels.clone(), vec![20.0], &BundleSet::new());
        channels
            .iter()
            .map(|&c| find(&pts, Method::Ls, c, 20.0).ber - find(&pts, Method::True, c, 20.0).ber)
            .collect::<Vec<f64>>()
    };
    let (g8, g32) = (gaps(8), gaps(32));
    let ok = g8.iter().zip(&g32).all(|(a, b)| b < a);
    let detail: Vec<String> = selective
        .iter()
        .zip(g8.iter().zip(&g32))
        .map(|(c, (a, b))| format!("{c} gap {a:.3e} -> {b:.3e}"))
        .collect();
    report("6", ok, &detail.join("; "));
    assert!(ok);
}

#[test]
fn criterion_7_timing_ordering() {
    let _g = heavy();
    let bundles = trained();
    let rep = run_timing(&fast_scn(8), bundles).unwrap();
    let t = |m: &str| rep.get(m).unwrap().seconds_per_symbol;
    let (ls, mmse) = (t("LS"), t("MMSE"));
    let nets: Vec<f64> = Architecture::ALL.iter().map(|a| t(a.name())).collect();
    let ok = nets.iter().all(|&n| ls < n && n < mmse) && t("UniA") < t("UniC");
    let ratios: Vec<String> = rep.rows.iter().map(|r| format!("{}={:.0}", r.method, r.ratio)).collect();
    report("7", ok, &format!("ratios to LS: {}", ratios.join(" ")));
    assert!(ok);
}

#[test]
fn criterion_8_shape_laws() {
    let mut ok = true;
    let mut detail = Vec::new();
    for (np, n_out) in [(8, 112), (16, 96), (32, 64)] {
        let ds = generate(&ChannelClass::ALL, SnrPolicy::Fixed { db: 10.0 }, np, 10, &mut rng::seeded(81)).unwrap();
        ok &= ds.labels.cols() == n_out && ds.features.cols() == 128;
        for arch in Architecture::ALL {
            let want = match arch {
                Architecture::Single | Architecture::Multi => 128,
                Architecture::UniA => 133,
                Architecture::UniB | Architecture::UniC => 640,
            };
            let inputs = assemble_inputs(arch, &ds.features, &ds.class_labels, Routing::Hard).unwrap();
            let b = build_detector(arch, &DetectorConfig { n_hid: 16, ..DetectorConfig::new(np) }).unwrap();
            ok &= inputs.cols() == want
                && arch.detector_input_width() == want
                && b.detector.output_width() == n_out;
        }
        detail.push(format!("np={np}: labels {}", ds.labels.cols()));
    }
    report("8", ok, &detail.join(", "));
    assert!(ok);
}

#[test]
fn example_sweep_sanity() {
    let _g = heavy();
    let mut scn = fast_scn(8);
    scn.sweep.min_errors = 200;
    scn.sweep.bit_budget = 1_000_000;
    let snrs = vec![0.0, 5.0, 10.0, 15.0, 20.0];
    let mut methods = vec![Method::True, Method::Ls, Method::MmsePerfect, Method::MmseNonPerfect];
    methods.extend(neural());
    let pts = sweep_at(&scn, methods.clone(), vec![EvalChannel::Mixed], snrs.clone(), trained());
    let sd = |p: &BerPoint| (p.ber.max(1.0 / p.bits as f64) / p.bits as f64).sqrt();
    let mut violations = Vec::new();
    for &s in &snrs {
        let (t, l) = (find(&pts, Method::True, EvalChannel::Mixed, s), find(&pts, Method::Ls, EvalChannel::Mixed, s));
        if l.ber < t.ber - 1.96 * (sd(t).powi(2) + sd(l).powi(2)).sqrt() {
            violations.push(format!("LS<True at {s}dB"));
        }
    }
    for &m in &methods {
        for w in snrs.windows(2) {
            let (a, b) = (find(&pts, m, EvalChannel::Mixed, w[0]), find(&pts, m, EvalChannel::Mixed, w[1]));
            if b.ber > a.ber + 3.0 * (sd(a).powi(2) + sd(b).powi(2)).sqrt() {
                violations.push(format!("{} rises {}->{}dB", m.name(), w[0], w[1]));
            }
        }
    }
    report("sweep-sanity", violations.is_empty(), &format!("{violations:?}"));
    assert!(violations.is_empty());
}

#[test]
fn example_classifier_eval() {
    let _g = heavy();
    let clf = trained()[&Architecture::UniA].classifier.clone().unwrap();
    let mut scn = fast_scn(8);
    scn.classify.snr_db = vec![0.0, 20.0];
    scn.classify.symbols_per_snr = 5000;
    let ev = run_classifier_eval(&scn, &clf).unwrap();
    let (tdla, rician, winner, awgn) = (
        ChannelClass::TdlA.index(),
        ChannelClass::Rician.index(),
        ChannelClass::Winner2.index(),
        ChannelClass::AwgnOnly.index(),
    );
    let (low, high) = (&ev.confusion[0], &ev.confusion[1]);
    let rows_ok = ev.confusion.iter().flatten().all(|r| (r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    let confusion_ok = low[tdla][winner] > low[tdla][rician];
    let rician_ok = high[rician][rician] > low[rician][rician] - 0.1;
    let awgn_ok = high[awgn][awgn] > 0.9;
    let ok = rows_ok && confusion_ok && rician_ok && awgn_ok;
    report(
        "classifier",
        ok,
        &format!(
            "acc {:?}; 0dB TdlA->Winner2 {:.3} TdlA->Rician {:.3}; Rician {:.3}->{:.3}; AwgnOnly@20dB {:.3}",
            ev.accuracy, low[tdla][winner], low[tdla][rician], low[rician][rician], high[rician][rician], high[awgn][awgn]
        ),
    );
    assert!(ok);
}

#[test]
fn example_image_demo_ordering() {
    let _g = heavy();
    let bundles = trained();
    let img = image::GrayImage::from_fn(64, 48, |x, y| image::Luma([((x * 4) ^ (y * 5)) as u8]));
    let mut scn = fast_scn(8);
    scn.image.channel = ChannelClass::TdlA;
    scn.image.snr_db = Some(20.0);
    let mut ber = |m: Method| {
        scn.image.method = m;
        transmit_image(&scn, &img, bundles).unwrap().ber
    };
    let ls = ber(Method::Ls);
    let nets: Vec<(Method, f64)> = neural().into_iter().map(|m| (m, ber(m))).collect();
    let ok = nets.iter().all(|&(_, b)| b < ls);
    let detail: Vec<String> = nets.iter().map(|(m, b)| format!("{}={b:.3e}", m.name())).collect();
    report("image-demo", ok, &format!("TdlA 20dB LS={ls:.3e} {}", detail.join(" ")));
    assert!(ok);
}

#[test]
fn example_timing_stability() {
    let _g = heavy();
    let bundles = trained();
    let mut scn = fast_scn(8);
    scn.timing.trials = 11;
    let (a, b) = (run_timing(&scn, bundles).unwrap(), run_timing(&scn, bundles).unwrap());
    let ok = a.rows.iter().zip(&b.rows).all(|(x, y)| {
        let q = x.ratio / y.ratio;
        x.method == y.method && (1.0 / 3.0..=3.0).contains(&q)
    });
    report("timing-stability", ok, "");
    assert!(ok);
}
