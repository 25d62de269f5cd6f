//! Link-level OFDM simulation with conventional (LS, MMSE, true-channel)
//! receivers and cascaded classifier/detector neural receivers.

pub mod channel;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod nn;
pub mod phy;
pub mod receiver;
pub mod rng;
pub mod unidnn;

pub use channel::{ChannelClass, ChannelModel, ChannelRealization, NoiseSpec, N_CHAN};
pub use error::{Error, Result};
pub use phy::{OfdmConfig, PilotLayout};
pub use receiver::{ChannelEstimate, ConventionalReceiver, EstimateMethod};
