//! End-to-end experiment orchestration: datasets, training, BER sweeps,
//! classifier evaluation, the image demo and the timing comparison.

mod config;
mod image_demo;
mod methods;
mod sweep;
mod timing;

pub use config::{ClassifyConfig, ImageConfig, ScenarioConfig, SweepConfig, TimingConfig};
pub use image_demo::{
    bits_to_pixels, pixels_to_bits, read_pgm, run_image_demo, transmit_image, write_pgm, ImageDemoReport,
};
pub use methods::{
    bundle_dir, generate_dataset, load_bundles, mixed_dataset_path, read_dataset, save_bundles, single_dataset_path,
    train_bundles, train_from_datasets, write_dataset, BundleSet, EvalChannel, Method,
};
pub use sweep::{run_ber_sweep, write_ber_csv, BerPoint};
pub use timing::{
    run_classifier_eval, run_timing, write_classifier_csv, write_timing_csv, ClassifierEval, TimingReport,
    TimingRow,
};

/// Stream tags that keep each stage's randomness independent.
pub(crate) mod tags {
    pub const DATA: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const SWEEP: u64 = 3;
    pub const CORRELATION: u64 = 4;
    pub const IMAGE: u64 = 5;
    pub const CLASSIFY: u64 = 6;
    pub const TIMING: u64 = 7;
}
