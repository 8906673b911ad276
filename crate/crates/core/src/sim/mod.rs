//! Monte-Carlo model of the two senders, the fibres, the measurement node
//! and the reference light.

pub mod channel;
pub mod click;
pub mod ensemble;
pub mod record;
pub mod reference;
pub mod source;

use thiserror::Error;

use crate::model::ConfigError;

pub use channel::{evolve_channel, ChannelState, ChannelTrace, SLOT_S};
pub use click::{any_click_probability, click_probabilities};
pub use ensemble::{simulate_residual_pairs, ResidualEnsemble};
pub use reference::{generate_reference_counts, reference_photon_bins, ReferenceParams};
pub use source::{
    block_seed, reference_seed, simulate_block, simulate_events, ClickEvent, GroundTruth, SimBlock, SimEvents,
    SimOptions,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}
