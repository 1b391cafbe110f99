//! The three-stage reconstruction: dequantize, unwrap, sparse-recover.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::block::BlockDiagStack;
use crate::dequant::{hm_dequantize, PointRule};
use crate::error::{Error, Result, Stage};
use crate::forward::ForwardOutput;
use crate::modrec::{recover_z, recover_z_multishot, MfVariant, SearchStrategy};
use crate::normalized_error;
use crate::sensing::{SensingKind, SensingMatrix};
use crate::sparse::{cosamp, CosampDiagnostics, CosampOptions};
use crate::types::{BitMeasurements, FreqGrid, ModelConfig, RealVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryVariant {
    MfComplex,
    MfSine,
    Multishot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RqmOptions {
    pub variant: RecoveryVariant,
    pub point_rule: PointRule,
    /// Search set for `z`; its bounds also anchor multi-shot unwrapping.
    pub grid: FreqGrid,
    pub search: SearchStrategy,
    pub cosamp: CosampOptions,
}

/// Noiseless signals of a simulated run. The pipeline only uses them to
/// score its outputs.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub u: Vec<f64>,
}

impl GroundTruth {
    pub fn from_forward(x: &[f64], out: &ForwardOutput) -> Self {
        GroundTruth {
            x: x.to_vec(),
            z: out.oracle.z.values().to_vec(),
            u: out.oracle.u.values().to_vec(),
        }
    }
}

/// Normalized errors of each stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageErrors {
    pub u: f64,
    pub z: f64,
    pub x: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub dequantize: f64,
    pub modulo_recovery: f64,
    pub sparse_recovery: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.dequantize + self.modulo_recovery + self.sparse_recovery
    }
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub u_hat: RealVector,
    pub z_hat: RealVector,
    pub x_hat: RealVector,
    /// Present iff ground truth was supplied.
    pub errors: Option<StageErrors>,
    /// Per-scalar flags from multi-shot unwrapping; empty for matched filtering.
    pub multishot_failures: Vec<bool>,
    pub cosamp: Option<CosampDiagnostics>,
    /// Seconds per stage.
    pub timings: StageTimings,
}

/// Runs all three stages on `y`.
///
/// With `config.sparsity == 0` there is no sparsity prior: `B` must be the
/// identity and `x_hat = z_hat`.
pub fn rqm(
    y: &BitMeasurements,
    config: &ModelConfig,
    d: &BlockDiagStack,
    b: &SensingMatrix,
    options: &RqmOptions,
    truth: Option<&GroundTruth>,
) -> Result<PipelineReport> {
    config.validate()?;
    if d.block_size() != config.q || d.num_blocks() != config.k_prime {
        return Err(Error::shape(format!(
            "D has {} blocks of size {}, config expects {} of size {}",
            d.num_blocks(),
            d.block_size(),
            config.k_prime,
            config.q
        )));
    }
    if config.sparsity == 0 && b.kind() != SensingKind::Identity {
        return Err(Error::shape(
            "without a sparsity prior the sensing matrix must be the identity",
        ));
    }
    let mut timings = StageTimings::default();

    let clock = Instant::now();
    let u_hat =
        hm_dequantize(y, config, options.point_rule).map_err(|e| e.in_stage(Stage::Dequantize))?;
    timings.dequantize = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let range = config.range();
    let (z_hat, multishot_failures) = match options.variant {
        RecoveryVariant::MfComplex | RecoveryVariant::MfSine => {
            let variant = if options.variant == RecoveryVariant::MfSine {
                MfVariant::RealSine
            } else {
                MfVariant::ComplexExp
            };
            let z = recover_z(&u_hat, d, range, options.grid, variant, options.search)
                .map_err(|e| e.in_stage(Stage::ModuloRecovery))?;
            (z, Vec::new())
        }
        RecoveryVariant::Multishot => {
            let out = recover_z_multishot(&u_hat, d, config, &options.grid)
                .map_err(|e| e.in_stage(Stage::ModuloRecovery))?;
            (out.z_hat, out.failures)
        }
    };
    timings.modulo_recovery = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let (x_hat, diagnostics) = if config.sparsity > 0 {
        let out = cosamp(&z_hat, b, config.sparsity, options.cosamp)
            .map_err(|e| e.in_stage(Stage::SparseRecovery))?;
        (out.x_hat, Some(out.diagnostics))
    } else {
        (
            RealVector::new(z_hat.values().to_vec(), crate::types::Role::XHat)?,
            None,
        )
    };
    timings.sparse_recovery = clock.elapsed().as_secs_f64();

    let errors = truth.map(|t| StageErrors {
        u: normalized_error(&u_hat, &t.u),
        z: normalized_error(&z_hat, &t.z),
        x: normalized_error(&x_hat, &t.x),
    });
    Ok(PipelineReport {
        u_hat,
        z_hat,
        x_hat,
        errors,
        multishot_failures,
        cosamp: diagnostics,
        timings,
    })
}
