//! Scene sampling, image-source room simulation and mixture rendering.

mod render;
mod rir;
mod scene;
pub mod speech;

pub use render::{fft_convolve, measure_snr, render_scene, render_with_rir, RenderedSample, SNR_CAP_DB};
pub use rir::{
    image_source_rir, schroeder_t60, schroeder_t60_from_energy, simulate_rir, simulate_rir_with, AbsorptionModel, Rir,
    RirConfig, Shoebox, FRACTIONAL_DELAY_TAPS, SABINE_CONSTANT, SPEED_OF_SOUND,
};
pub use scene::*;
