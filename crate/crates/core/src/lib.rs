//! Mode-pairing quantum key distribution: a pulse-level simulator and the
//! classical post-processing chain from detection events to a finite-key
//! secret key rate.
//!
//! Data flows `sim` -> `pairing` -> `siftmap` -> `estimate`, with `freqref`
//! supplying the laser beat frequency used when sifting test-basis pairs and
//! `pipeline` tying the stages together.

pub mod estimate;
pub mod freqref;
pub mod model;
pub mod pairing;
pub mod pipeline;
pub mod presets;
pub mod siftmap;
pub mod sim;
