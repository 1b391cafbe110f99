//! Experiments: scene generation, single trials and k sweeps.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use modrecon_core::pipeline::StageErrors;
use modrecon_core::rng::trial_seed;
use modrecon_core::sparse::{haar2d_inverse, sparsify};
use modrecon_core::{
    build_d, forward_model, hm_dequantize, normalized_error, rqm, BlockDiagStack, ForwardOutput,
    GroundTruth, Image, ModelConfig, PipelineReport, SensingMatrix,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ImageSource, ResolvedRun, RunConfig, Scenario};
use crate::error::{CliError, Result};

/// Deterministic 8-bit test scene: a gradient with a bright disk, a dark
/// ellipse and a mild texture.
pub fn synthetic_scene(side: usize) -> Image {
    let n = side as f64;
    let pixels = (0..side * side)
        .map(|idx| {
            let y = (idx / side) as f64 / n;
            let x = (idx % side) as f64 / n;
            let mut v = 0.45 + 0.25 * x - 0.1 * y;
            if (x - 0.35).powi(2) + (y - 0.4).powi(2) < 0.04 {
                v += 0.3;
            }
            if (x - 0.7).powi(2) / 0.02 + (y - 0.7).powi(2) / 0.05 < 1.0 {
                v -= 0.25;
            }
            v += 0.08
                * (12.0 * std::f64::consts::PI * x).sin()
                * (8.0 * std::f64::consts::PI * y).cos();
            (255.0 * v.clamp(0.0, 1.0)).round_ties_even()
        })
        .collect();
    Image::new(side, side, pixels).expect("square scene")
}

/// The signal `x` a run measures: scaled pixels, or their `s` largest Haar
/// coefficients in sparse scenarios.
pub fn signal(run: &ResolvedRun, image: &Image) -> Result<Vec<f64>> {
    if (image.width(), image.height()) != (run.width, run.height) {
        return Err(CliError::Config(format!(
            "image is {}x{}, run expects {}x{}",
            image.width(),
            image.height(),
            run.width,
            run.height
        )));
    }
    let f = run.scale.factor();
    let scaled = image.map(|v| v / f);
    if run.scenario.sparse() {
        Ok(sparsify(&scaled, run.sparsity)?)
    } else {
        Ok(scaled.into_pixels())
    }
}

/// Inverse of [`signal`] up to the sparsification, back in `[0, 255]` units.
pub fn image_from_signal(run: &ResolvedRun, x: &[f64]) -> Result<Image> {
    let f = run.scale.factor();
    let img = if run.scenario.sparse() {
        if run.width != run.height {
            return Err(CliError::Config(
                "sparse scenarios need square images".into(),
            ));
        }
        haar2d_inverse(x, run.width)?
    } else {
        Image::new(run.width, run.height, x.to_vec())?
    };
    Ok(img.map(|v| v * f))
}

pub struct Operators {
    pub config: ModelConfig,
    pub d: BlockDiagStack,
    pub b: SensingMatrix,
}

impl Operators {
    pub fn build(run: &ResolvedRun) -> Result<Operators> {
        let config = run.model_config()?;
        let d = build_d(&config, run.d)?;
        let b = SensingMatrix::build(&config, run.sensing)?;
        Ok(Operators { config, d, b })
    }
}

pub struct Simulation {
    pub ops: Operators,
    pub x: Vec<f64>,
    pub forward: ForwardOutput,
}

pub fn simulate(run: &ResolvedRun, image: &Image) -> Result<Simulation> {
    let ops = Operators::build(run)?;
    let x = signal(run, image)?;
    let forward = forward_model(&x, &ops.config, &ops.d, &ops.b)?;
    Ok(Simulation { ops, x, forward })
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub errors: StageErrors,
    /// Reconstruction time in seconds, forward model excluded.
    pub runtime: f64,
    pub multishot_failures: usize,
    pub report: Option<PipelineReport>,
}

/// Measures and reconstructs once, scoring every stage against the truth.
pub fn run_trial(run: &ResolvedRun, image: &Image) -> Result<TrialOutcome> {
    let sim = simulate(run, image)?;
    let truth = GroundTruth::from_forward(&sim.x, &sim.forward);
    let rconfig = run.recovery_config()?;
    if run.scenario == Scenario::DequantOnly {
        let clock = Instant::now();
        let u_hat = hm_dequantize(&sim.forward.y, &rconfig, run.point_rule)?;
        let runtime = clock.elapsed().as_secs_f64();
        // D is all ones, B the identity and nothing wraps, so u = z = x.
        let e = normalized_error(&u_hat, &truth.u);
        return Ok(TrialOutcome {
            errors: StageErrors { u: e, z: e, x: e },
            runtime,
            multishot_failures: 0,
            report: None,
        });
    }
    let report = rqm(
        &sim.forward.y,
        &rconfig,
        &sim.ops.d,
        &sim.ops.b,
        &run.rqm_options()?,
        Some(&truth),
    )?;
    Ok(TrialOutcome {
        errors: report.errors.expect("truth supplied"),
        runtime: report.timings.total(),
        multishot_failures: report.multishot_failures.iter().filter(|f| **f).count(),
        report: Some(report),
    })
}

pub const CSV_HEADER: &str = "scenario,k,k_prime,trial,seed,err_u,err_z,err_x,runtime_s,status";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub scenario: Scenario,
    pub k: usize,
    pub k_prime: usize,
    pub trial: usize,
    pub seed: u64,
    #[serde(with = "nan_as_null")]
    pub err_u: f64,
    #[serde(with = "nan_as_null")]
    pub err_z: f64,
    #[serde(with = "nan_as_null")]
    pub err_x: f64,
    pub runtime: f64,
    /// `None` when the trial ran; the error message otherwise.
    pub failure: Option<String>,
    pub run: Option<ResolvedRun>,
}

/// JSON has no NaN; failed rows store their errors as `null`.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

impl BenchRow {
    /// Everything but the runtime, compared bit for bit.
    pub fn same_result(&self, other: &BenchRow) -> bool {
        self.scenario == other.scenario
            && self.k == other.k
            && self.k_prime == other.k_prime
            && self.trial == other.trial
            && self.seed == other.seed
            && self.err_u.to_bits() == other.err_u.to_bits()
            && self.err_z.to_bits() == other.err_z.to_bits()
            && self.err_x.to_bits() == other.err_x.to_bits()
            && self.failure == other.failure
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub k: usize,
    pub count: usize,
    pub mean: [f64; 4],
    pub std: [f64; 4],
}

impl Summary {
    pub fn err_x(&self) -> (f64, f64) {
        (self.mean[2], self.std[2])
    }
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub scenario: Scenario,
    pub k_prime: usize,
    pub rows: Vec<BenchRow>,
    pub summaries: Vec<Summary>,
}

fn row_for(
    template: &RunConfig,
    image: &Image,
    k: usize,
    trial: usize,
    base_seed: u64,
) -> BenchRow {
    let seed = trial_seed(base_seed, trial as u64);
    let mut cfg = template.clone();
    cfg.k = Some(k);
    cfg.seed = Some(seed);
    let scenario = cfg.scenario.unwrap_or(Scenario::Rqm);
    let resolved = ResolvedRun::resolve(&cfg, image, seed);
    let k_prime = resolved.as_ref().map(|r| r.k_prime).unwrap_or(0);
    let outcome = resolved
        .as_ref()
        .map_err(|e| e.to_string())
        .and_then(|r| run_trial(r, image).map_err(|e| e.to_string()));
    let (errors, runtime, failure) = match outcome {
        Ok(o) => (o.errors, o.runtime, None),
        Err(msg) => (
            StageErrors {
                u: f64::NAN,
                z: f64::NAN,
                x: f64::NAN,
            },
            0.0,
            Some(msg),
        ),
    };
    BenchRow {
        scenario,
        k,
        k_prime,
        trial,
        seed,
        err_u: errors.u,
        err_z: errors.z,
        err_x: errors.x,
        runtime,
        failure,
        run: resolved.ok(),
    }
}

/// Runs `trials` trials at every `k`. Trial `t` uses the same seed at every
/// `k`, so curves share their random draws. Failed trials become rows with a
/// status message and are left out of the summaries.
pub fn bench_sweep(
    template: &RunConfig,
    image: &Image,
    ks: &[usize],
    trials: usize,
    base_seed: u64,
) -> Result<BenchResult> {
    let scenario = template
        .scenario
        .ok_or_else(|| CliError::Config("bench needs a scenario".into()))?;
    if ks.is_empty() || trials == 0 {
        return Err(CliError::Usage(
            "bench needs at least one k and one trial".into(),
        ));
    }
    let jobs: Vec<(usize, usize)> = ks
        .iter()
        .flat_map(|&k| (0..trials).map(move |t| (k, t)))
        .collect();
    let rows: Vec<BenchRow> = jobs
        .par_iter()
        .map(|&(k, t)| row_for(template, image, k, t, base_seed))
        .collect();
    let summaries = ks.iter().map(|&k| summarize(k, &rows)).collect();
    let k_prime = rows.iter().map(|r| r.k_prime).max().unwrap_or(0);
    Ok(BenchResult {
        scenario,
        k_prime,
        rows,
        summaries,
    })
}

fn summarize(k: usize, rows: &[BenchRow]) -> Summary {
    let ok: Vec<[f64; 4]> = rows
        .iter()
        .filter(|r| r.k == k && r.failure.is_none())
        .map(|r| [r.err_u, r.err_z, r.err_x, r.runtime])
        .collect();
    let count = ok.len();
    let mut mean = [f64::NAN; 4];
    let mut std = [f64::NAN; 4];
    if count > 0 {
        for c in 0..4 {
            let m = ok.iter().map(|r| r[c]).sum::<f64>() / count as f64;
            let var = if count > 1 {
                ok.iter().map(|r| (r[c] - m).powi(2)).sum::<f64>() / (count - 1) as f64
            } else {
                0.0
            };
            mean[c] = m;
            std[c] = var.sqrt();
        }
    }
    Summary {
        k,
        count,
        mean,
        std,
    }
}

fn csv_field(s: &str) -> String {
    s.replace([',', '\n', '\r'], ";")
}

impl BenchResult {
    /// Data rows in (k, trial) order, then a `mean` and a `std` row per k.
    /// Floats use the shortest representation that parses back exactly.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let status = match &r.failure {
                None => "ok".to_string(),
                Some(m) => format!("error: {}", csv_field(m)),
            };
            writeln!(
                out,
                "{},{},{},{},{},{:?},{:?},{:?},{:.6},{}",
                r.scenario.name(),
                r.k,
                r.k_prime,
                r.trial,
                r.seed,
                r.err_u,
                r.err_z,
                r.err_x,
                r.runtime,
                status
            )
            .unwrap();
        }
        for (label, pick) in [("mean", 0usize), ("std", 1)] {
            for s in &self.summaries {
                let v = if pick == 0 { s.mean } else { s.std };
                writeln!(
                    out,
                    "{},{},{},{},,{:?},{:?},{:?},{:.6},n={}",
                    self.scenario.name(),
                    s.k,
                    self.k_prime,
                    label,
                    v[0],
                    v[1],
                    v[2],
                    v[3],
                    s.count
                )
                .unwrap();
            }
        }
        out
    }

    pub fn summary(&self, k: usize) -> Option<&Summary> {
        self.summaries.iter().find(|s| s.k == k)
    }
}

/// Written next to a bench CSV. Each row carries its resolved run, so it can
/// be repeated on its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSidecar {
    pub tool: String,
    pub template: RunConfig,
    pub source: ImageSource,
    pub ks: Vec<usize>,
    pub trials: usize,
    pub base_seed: u64,
    pub rows: Vec<BenchRow>,
}

impl BenchSidecar {
    pub fn new(
        template: &RunConfig,
        source: ImageSource,
        ks: &[usize],
        trials: usize,
        base_seed: u64,
        result: &BenchResult,
    ) -> BenchSidecar {
        BenchSidecar {
            tool: crate::config::tool_version(),
            template: template.clone(),
            source,
            ks: ks.to_vec(),
            trials,
            base_seed,
            rows: result.rows.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<BenchSidecar> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Re-runs one recorded row from its resolved run alone.
pub fn rerun_row(row: &BenchRow, image: &Image) -> BenchRow {
    let Some(run) = &row.run else {
        return row.clone();
    };
    let (errors, runtime, failure) = match run_trial(run, image) {
        Ok(o) => (o.errors, o.runtime, None),
        Err(e) => (
            StageErrors {
                u: f64::NAN,
                z: f64::NAN,
                x: f64::NAN,
            },
            0.0,
            Some(e.to_string()),
        ),
    };
    BenchRow {
        err_u: errors.u,
        err_z: errors.z,
        err_x: errors.x,
        runtime,
        failure,
        ..row.clone()
    }
}

pub struct ReplayReport {
    pub rows: Vec<BenchRow>,
    pub mismatches: Vec<usize>,
}

pub fn replay(sidecar: &BenchSidecar) -> Result<ReplayReport> {
    let image = sidecar.source.load()?;
    let rows: Vec<BenchRow> = sidecar
        .rows
        .par_iter()
        .map(|r| rerun_row(r, &image))
        .collect();
    let mismatches = rows
        .iter()
        .zip(&sidecar.rows)
        .enumerate()
        .filter(|(_, (a, b))| !a.same_result(b))
        .map(|(i, _)| i)
        .collect();
    Ok(ReplayReport { rows, mismatches })
}
