//! Signal and image recovery from 1-bit quantized modulo measurements.
//!
//! The measurement chain is `y = Q(C mod(D B x, R))`: a sensing matrix `B`,
//! a stack of diagonal gain blocks `D`, a modulo nonlinearity with period
//! `R`, harmonic gain blocks `C` and a 1-bit quantizer with threshold
//! `delta = R / 2`. Recovery runs three stages, each in its own module:
//!
//! 1. [`dequant`] decodes every scalar's bit pattern to a cell of width
//!    `delta / k`,
//! 2. [`modrec`] undoes the modulo by matched filtering or geometric
//!    unwrapping,
//! 3. [`sparse`] recovers `x` from `B x` by CoSaMP.
//!
//! [`pipeline`] chains them.

pub mod block;
pub mod dequant;
pub mod error;
pub mod format;
pub mod forward;
pub mod image;
pub mod modrec;
pub mod pipeline;
pub mod rng;
pub mod sensing;
pub mod sparse;
pub mod types;

pub use block::{apply_block_stack, BlockDiagStack, BlockKind};
pub use dequant::{decode_interval, hm_dequantize, required_k, DecodedInterval, PointRule};
pub use error::{Error, Result, Stage};
pub use forward::{
    build_d, forward_model, harmonic_multipliers, measure, measure_adaptive, measure_nonadaptive,
    modulo, quantize, DRecipe, ForwardOutput,
};
pub use image::Image;
pub use modrec::{matched_filter, recover_z, recover_z_multishot, MfVariant, SearchStrategy};
pub use pipeline::{rqm, GroundTruth, PipelineReport, RecoveryVariant, RqmOptions};
pub use sensing::{SensingKind, SensingMatrix};
pub use types::{
    strided_subvector, BitLayout, BitMeasurements, FreqGrid, MeasurementMode, ModelConfig,
    OneBased, RealVector, Role,
};

/// `||estimate - truth|| / ||truth||`; zero truth gives the plain norm of the estimate.
pub fn normalized_error(estimate: &[f64], truth: &[f64]) -> f64 {
    let diff: f64 = estimate
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let scale = sensing::norm(truth);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}
