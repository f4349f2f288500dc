//! Auto resonance network simulator.
//!
//! Bit-accurate Q4.12 arithmetic, lookup-table activation approximation,
//! multi-operand adder models, composed 16-input neurons and a two-layer
//! resonance classifier for 28x28 digit images.

pub mod approx;
pub mod arnnet;
pub mod dataio;
pub mod fxp;
pub mod moadder;
pub mod neuron;
pub mod resonance;

pub use fxp::{Fx16, MulTrace, SFx16, UFx16};

/// Double-precision lookup table.
pub type Lut = approx::LutTable<f64>;
/// Double-precision resonator parameters.
pub type Resonator = resonance::ResonatorParams<f64>;
