//! File-to-file stages. Each returns the exact bytes it would write together
//! with the sidecar, so outputs can be regenerated and compared.

use std::fs;
use std::path::{Path, PathBuf};

use modrecon_core::format::{read_bits, read_vector, write_bits_to, write_vector_to};
use modrecon_core::modrec::{recover_z, recover_z_multishot};
use modrecon_core::{
    hm_dequantize, rqm, BitMeasurements, GroundTruth, MfVariant, PipelineReport, RecoveryVariant,
};
use serde::Serialize;

use crate::config::{tool_version, ImageSource, OutputFormat, Producer, ResolvedRun, Sidecar};
use crate::error::{CliError, Result};
use crate::harness::{image_from_signal, simulate, Operators};
use crate::pgm::encode_pgm;

pub struct Output {
    pub bytes: Vec<u8>,
    pub sidecar: Sidecar,
}

impl Output {
    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, &self.bytes)?;
        self.sidecar.write_for(path)
    }
}

fn vector_bytes(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * values.len());
    write_vector_to(&mut out, values).expect("writing to memory");
    out
}

fn sidecar(producer: Producer, content: &str, len: usize, run: &ResolvedRun) -> Sidecar {
    Sidecar {
        tool: tool_version(),
        producer,
        content: content.into(),
        len,
        layout: None,
        run: run.clone(),
    }
}

/// Absolute form of a path, so sidecars stay valid from any directory.
pub fn absolute(path: &Path) -> Result<PathBuf> {
    Ok(std::path::absolute(path)?)
}

pub struct Simulated {
    pub y: Output,
    pub truth: Output,
}

pub fn simulate_files(run: &ResolvedRun, source: &ImageSource) -> Result<Simulated> {
    let image = source.load()?;
    let sim = simulate(run, &image)?;
    let y = &sim.forward.y;
    let mut bytes = Vec::new();
    write_bits_to(&mut bytes, y)?;
    let mut side = sidecar(
        Producer::Simulate {
            source: source.clone(),
        },
        "y",
        y.len(),
        run,
    );
    side.layout = Some(y.layout());
    let truth = Output {
        bytes: vector_bytes(&sim.x),
        sidecar: sidecar(
            Producer::Truth {
                source: source.clone(),
            },
            "x",
            sim.x.len(),
            run,
        ),
    };
    Ok(Simulated {
        y: Output {
            bytes,
            sidecar: side,
        },
        truth,
    })
}

fn expect_content(side: &Sidecar, path: &Path, want: &str) -> Result<()> {
    if side.content != want {
        return Err(CliError::Usage(format!(
            "{} holds {}, expected {want}",
            path.display(),
            side.content
        )));
    }
    Ok(())
}

pub fn load_bits(path: &Path) -> Result<(BitMeasurements, Sidecar)> {
    let side = Sidecar::read_for(path)?;
    expect_content(&side, path, "y")?;
    let layout = side.layout.unwrap_or_else(|| side.run.layout());
    if layout != side.run.layout() {
        return Err(CliError::Config(format!(
            "{}: bit layout disagrees with the recorded run",
            path.display()
        )));
    }
    Ok((read_bits(path, layout)?, side))
}

pub fn load_vector(path: &Path, content: &str) -> Result<(Vec<f64>, Sidecar)> {
    let side = Sidecar::read_for(path)?;
    expect_content(&side, path, content)?;
    Ok((read_vector(path)?, side))
}

/// `run` is the recorded run with any overrides applied.
pub fn dequantize_file(input: &Path, run: &ResolvedRun) -> Result<Output> {
    let (y, _) = load_bits(input)?;
    let u = hm_dequantize(&y, &run.recovery_config()?, run.point_rule)?;
    Ok(Output {
        bytes: vector_bytes(&u),
        sidecar: sidecar(
            Producer::Dequantize {
                input: absolute(input)?,
            },
            "u_hat",
            u.len(),
            run,
        ),
    })
}

pub fn recover_file(input: &Path, run: &ResolvedRun) -> Result<Output> {
    let (u, _) = load_vector(input, "u_hat")?;
    let ops = Operators::build(run)?;
    let grid = run.grid()?;
    let variant = run
        .variant
        .ok_or_else(|| CliError::Usage("no recovery variant recorded, pass --variant".into()))?;
    let z = match variant {
        RecoveryVariant::MfComplex | RecoveryVariant::MfSine => {
            let mf = if variant == RecoveryVariant::MfSine {
                MfVariant::RealSine
            } else {
                MfVariant::ComplexExp
            };
            recover_z(&u, &ops.d, run.range, grid, mf, run.search)?
        }
        RecoveryVariant::Multishot => {
            recover_z_multishot(&u, &ops.d, &run.recovery_config()?, &grid)?.z_hat
        }
    };
    Ok(Output {
        bytes: vector_bytes(&z),
        sidecar: sidecar(
            Producer::Recover {
                input: absolute(input)?,
            },
            "z_hat",
            z.len(),
            run,
        ),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineSummary {
    pub errors: Option<modrecon_core::pipeline::StageErrors>,
    pub timings: modrecon_core::pipeline::StageTimings,
    pub multishot_failures: usize,
    pub cosamp_iterations: Option<usize>,
    pub cosamp_converged: Option<bool>,
}

impl From<&PipelineReport> for PipelineSummary {
    fn from(r: &PipelineReport) -> Self {
        PipelineSummary {
            errors: r.errors,
            timings: r.timings,
            multishot_failures: r.multishot_failures.iter().filter(|f| **f).count(),
            cosamp_iterations: r.cosamp.as_ref().map(|c| c.iterations()),
            cosamp_converged: r.cosamp.as_ref().map(|c| c.converged),
        }
    }
}

pub fn pipeline_file(
    input: &Path,
    run: &ResolvedRun,
    format: OutputFormat,
    truth: Option<&Path>,
) -> Result<(Output, PipelineReport)> {
    let (y, _) = load_bits(input)?;
    let ops = Operators::build(run)?;
    let config = run.recovery_config()?;
    let truth = match truth {
        Some(path) => {
            let (x, _) = load_vector(path, "x")?;
            let z = ops.b.apply(&x)?;
            let u =
                modrecon_core::modulo(&modrecon_core::apply_block_stack(&ops.d, &z)?, run.range)?;
            Some(GroundTruth { x, z, u })
        }
        None => None,
    };
    let report = rqm(
        &y,
        &config,
        &ops.d,
        &ops.b,
        &run.rqm_options()?,
        truth.as_ref(),
    )?;
    let bytes = match format {
        OutputFormat::Vector => vector_bytes(&report.x_hat),
        OutputFormat::Pgm => encode_pgm(&image_from_signal(run, &report.x_hat)?),
    };
    let out = Output {
        bytes,
        sidecar: sidecar(
            Producer::Pipeline {
                input: absolute(input)?,
                format,
            },
            "x_hat",
            report.x_hat.len(),
            run,
        ),
    };
    Ok((out, report))
}

/// Regenerates `output` from its sidecar and reports whether the bytes match.
pub fn reproduces(output: &Path) -> Result<bool> {
    let side = Sidecar::read_for(output)?;
    let run = &side.run;
    let regenerated = match &side.producer {
        Producer::Simulate { source } => simulate_files(run, source)?.y,
        Producer::Truth { source } => simulate_files(run, source)?.truth,
        Producer::Dequantize { input } => dequantize_file(input, run)?,
        Producer::Recover { input } => recover_file(input, run)?,
        Producer::Pipeline { input, format } => pipeline_file(input, run, *format, None)?.0,
    };
    Ok(regenerated.bytes == fs::read(output)? && regenerated.sidecar == side)
}
