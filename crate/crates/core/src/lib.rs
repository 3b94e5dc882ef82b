//! Host-side tinyML stack for a contactless elevator floor unit.
//!
//! A floor unit watches its landing with a camera. When the person detector
//! fires it switches the shared inference arena over to the keyword model
//! and listens for a spoken floor number, then emits a dispatch frame to the
//! elevator controller. Everything runs deterministically against recorded
//! sensor files under a virtual clock.

pub mod controller;
pub mod dsp;
pub mod nn;
pub mod quant;
pub mod sim;
pub mod tensor;
pub mod vision;

pub use controller::{
    ControllerConfig, ControllerState, DispatchFrame, KeywordScores, Light, Mode,
};
pub use dsp::{AudioBuffer, Spectrogram};
pub use nn::{parse_model, Arena, ModelGraph, NnError};
pub use quant::{QuantMultiplier, QuantParams};
pub use sim::{load_scenario, run_scenario, Scenario, SimConfig};
pub use tensor::{QuantTensor, Shape};
pub use vision::GrayImage;
