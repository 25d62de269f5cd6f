use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use unidnn::harness::{
    generate_dataset, load_bundles, mixed_dataset_path, read_dataset, run_ber_sweep, run_classifier_eval,
    run_image_demo, run_timing, save_bundles, single_dataset_path, train_from_datasets, write_ber_csv,
    write_classifier_csv, write_dataset, write_timing_csv, Method, ScenarioConfig,
};
use unidnn::unidnn::Architecture;

#[derive(Parser)]
#[command(name = "unidnn", version, about = "OFDM link simulation with conventional and neural receivers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the mixed and single-class training sets.
    GenData(Common),
    /// Train every architecture in the scenario and save the bundles.
    Train(Common),
    /// BER-vs-SNR sweep for the configured methods.
    Sweep(Common),
    /// Confusion matrices of the trained channel classifier.
    ClassifyEval(Common),
    /// Send a PGM image over the link and write the decoded image.
    ImageDemo(Common),
    /// Per-symbol inference time of each receiver relative to LS.
    Timing(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML); defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Use the fast profile (m = 20000, 150 epochs, N_hid = 256).
    #[arg(long)]
    fast: bool,
}

impl Common {
    fn scenario(&self) -> Result<ScenarioConfig> {
        let mut scn = match &self.config {
            Some(p) => ScenarioConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => ScenarioConfig::default(),
        };
        if let Some(seed) = self.seed {
            scn.seed = seed;
        }
        if self.fast {
            scn.apply_fast();
        }
        scn.validate()?;
        Ok(scn)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn gen_data(scn: &ScenarioConfig) -> Result<()> {
    let mixed = generate_dataset(scn, &scn.classes)?;
    write_dataset(&mixed, &mixed_dataset_path(scn))?;
    println!("wrote {} ({} samples)", mixed_dataset_path(scn).display(), mixed.len());
    if scn.archs.contains(&Architecture::Single) {
        let single = generate_dataset(scn, &[scn.single_class])?;
        write_dataset(&single, &single_dataset_path(scn))?;
        println!("wrote {} ({} samples)", single_dataset_path(scn).display(), single.len());
    }
    Ok(())
}

fn train(scn: &ScenarioConfig) -> Result<()> {
    let mixed = read_dataset(&mixed_dataset_path(scn))?;
    let single = if scn.archs.contains(&Architecture::Single) {
        Some(read_dataset(&single_dataset_path(scn))?)
    } else {
        None
    };
    if mixed.n_pilots != scn.n_pilots {
        bail!("dataset has N_p = {}, scenario uses {}", mixed.n_pilots, scn.n_pilots);
    }
    let bundles = train_from_datasets(scn, &mixed, single.as_ref())?;
    save_bundles(scn, &bundles)?;
    println!("trained {} bundles into {}", bundles.len(), scn.model_dir.display());
    Ok(())
}

fn sweep(scn: &ScenarioConfig) -> Result<()> {
    let bundles = load_bundles(scn, &scn.sweep.methods)?;
    let points = run_ber_sweep(scn, &bundles)?;
    let path = scn.out_dir.join(format!("ber_np{}.csv", scn.n_pilots));
    let mut w = create(&path)?;
    write_ber_csv(&points, &mut w)?;
    w.flush()?;
    println!("wrote {} ({} points)", path.display(), points.len());
    Ok(())
}

fn classify_eval(scn: &ScenarioConfig) -> Result<()> {
    let arch = scn
        .archs
        .iter()
        .copied()
        .find(|a| a.uses_classifier())
        .context("no cascaded architecture in the scenario, so there is no classifier")?;
    let bundles = load_bundles(scn, &[Method::Neural(arch)])?;
    let clf = bundles[&arch].classifier.as_ref().context("bundle without classifier")?;
    let eval = run_classifier_eval(scn, clf)?;
    let conf = scn.out_dir.join(format!("confusion_np{}.csv", scn.n_pilots));
    let acc = scn.out_dir.join(format!("classifier_accuracy_np{}.csv", scn.n_pilots));
    let (mut wc, mut wa) = (create(&conf)?, create(&acc)?);
    write_classifier_csv(&eval, &mut wc, &mut wa)?;
    wc.flush()?;
    wa.flush()?;
    println!("wrote {} and {}", conf.display(), acc.display());
    Ok(())
}

fn image_demo(scn: &ScenarioConfig) -> Result<()> {
    let bundles = load_bundles(scn, &[scn.image.method])?;
    let rep = run_image_demo(scn, &bundles)?;
    println!(
        "{} over {} at {}: BER {:.3e} ({} errors / {} bits), wrote {}",
        rep.method,
        rep.channel,
        rep.snr_db.map_or("no noise".to_string(), |s| format!("{s} dB")),
        rep.ber,
        rep.bit_errors,
        rep.payload_bits,
        scn.image.output.display()
    );
    Ok(())
}

fn timing(scn: &ScenarioConfig) -> Result<()> {
    let methods: Vec<Method> = scn.archs.iter().map(|&a| Method::Neural(a)).collect();
    let bundles = load_bundles(scn, &methods)?;
    let rep = run_timing(scn, &bundles)?;
    let path = scn.out_dir.join(format!("timing_np{}.csv", scn.n_pilots));
    let mut w = create(&path)?;
    write_timing_csv(&rep, &mut w)?;
    w.flush()?;
    for r in &rep.rows {
        println!("{:<12} {:>10.3e} s  {:>9.1} x LS", r.method, r.seconds_per_symbol, r.ratio);
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenData(c) => gen_data(&c.scenario()?),
        Command::Train(c) => train(&c.scenario()?),
        Command::Sweep(c) => sweep(&c.scenario()?),
        Command::ClassifyEval(c) => classify_eval(&c.scenario()?),
        Command::ImageDemo(c) => image_demo(&c.scenario()?),
        Command::Timing(c) => timing(&c.scenario()?),
    }
}
