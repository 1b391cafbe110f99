//! Fast invariant checks plus a golden run through the file stages.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use modrecon_core::dequant::oracle::brute_force_decode;
use modrecon_core::modrec::build_problem;
use modrecon_core::rng::seeded_uniform;
use modrecon_core::sparse::{cosamp, CosampOptions};
use modrecon_core::{
    apply_block_stack, build_d, decode_interval, hm_dequantize, matched_filter, measure, modulo,
    normalized_error, DRecipe, FreqGrid, MeasurementMode, MfVariant, ModelConfig, PointRule,
    SearchStrategy, SensingKind, SensingMatrix,
};

use crate::config::{ImageSource, OutputFormat, ResolvedRun, RunConfig, Scenario};
use crate::error::Result;
use crate::harness::synthetic_scene;
use crate::pgm::{encode_pgm, parse_pgm, save_pgm};
use crate::stages::{dequantize_file, pipeline_file, recover_file, reproduces, simulate_files};

type Check = (&'static str, fn() -> Result<bool>);

fn dequant_bound_and_consistency() -> Result<bool> {
    let delta = 1.0;
    let m = 2000;
    let u: Vec<f64> = (0..m as u64)
        .map(|i| seeded_uniform(11, i, 0.0, 2.0 * delta))
        .collect::<modrecon_core::Result<_>>()?;
    for k in [1, 2, 4, 8, 16] {
        for mode in [MeasurementMode::Adaptive, MeasurementMode::Nonadaptive] {
            for rule in [PointRule::Random, PointRule::Midpoint] {
                let config = ModelConfig::new(m, m, 1, k, delta, 0, 5, mode)?;
                let y = measure(&u, k, delta, mode)?;
                let u_hat = hm_dequantize(&y, &config, rule)?;
                if u.iter()
                    .zip(u_hat.iter())
                    .any(|(a, b)| (a - b).abs() >= delta / k as f64)
                {
                    return Ok(false);
                }
                if measure(&u_hat, k, delta, mode)? != y {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

fn cells_tile() -> Result<bool> {
    let delta = 1.0;
    for k in 1..=8usize {
        let width = delta / k as f64;
        for cell in 0..2 * k {
            let mid = (cell as f64 + 0.5) * width;
            let bits = measure(&[mid], k, delta, MeasurementMode::Adaptive)?.to_bits();
            let iv = decode_interval(&bits, delta, k)?;
            if iv.cell != cell || iv.lo != cell as f64 * delta / k as f64 {
                return Ok(false);
            }
            match brute_force_decode(&bits, delta, k, 4000) {
                Some((lo, hi)) if (lo - iv.lo).abs() < 1e-3 && (hi - iv.hi).abs() < 1e-3 => {}
                _ => return Ok(false),
            }
        }
    }
    Ok(true)
}

fn matched_filter_exact() -> Result<bool> {
    let grid = FreqGrid::new(0.0, 1.0, 1e-3)?;
    let config = ModelConfig::new(32, 32, 8, 2, 0.5, 0, 3, MeasurementMode::Adaptive)?;
    let d = build_d(&config, DRecipe::Random { t_bound: 2.0 })?;
    let z = (0..32u64)
        .map(|l| {
            let j = seeded_uniform(4, l, 0.0, grid.len() as f64)? as usize;
            Ok(grid.value(j.min(grid.len() - 1)))
        })
        .collect::<modrecon_core::Result<Vec<f64>>>()?;
    let u = modulo(&apply_block_stack(&d, &z)?, 1.0)?;
    for (l, want) in z.iter().enumerate() {
        let problem = build_problem(&u, &d, l, 1.0, grid, MfVariant::ComplexExp)?;
        if matched_filter(&problem, SearchStrategy::Exhaustive).value != *want {
            return Ok(false);
        }
    }
    Ok(true)
}

fn cosamp_exact() -> Result<bool> {
    let (n, q, s) = (256, 100, 5);
    let config = ModelConfig::new(n, q, 1, 1, 0.5, s, 8, MeasurementMode::Adaptive)?;
    let b = SensingMatrix::build(&config, SensingKind::SubsampledUnitaryTimesSigns)?;
    let mut x = vec![0.0; n];
    for i in 0..s {
        let at = (seeded_uniform(9, i as u64, 0.0, n as f64)? as usize).min(n - 1);
        x[at] = 1.0 + i as f64;
    }
    let z = b.apply(&x)?;
    let out = cosamp(&z, &b, s, CosampOptions::default())?;
    Ok(normalized_error(&out.x_hat, &x) <= 1e-8)
}

fn pgm_round_trip() -> Result<bool> {
    let img = synthetic_scene(8);
    let bytes = encode_pgm(&img);
    Ok(parse_pgm(&bytes)? == img && encode_pgm(&parse_pgm(&bytes)?) == bytes)
}

fn scratch_dir() -> Result<PathBuf> {
    let nanos = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_nanos())
        .unwrap_or(0);
    let dir =
        std::env::temp_dir().join(format!("modrecon-selftest-{}-{nanos}", std::process::id()));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Measures a small scene through every file stage, then regenerates each
/// output from its sidecar and compares bytes.
pub fn golden_pipeline(dir: &Path) -> Result<bool> {
    let img_path = dir.join("scene.pgm");
    save_pgm(&synthetic_scene(16), &img_path)?;
    let source = ImageSource::Pgm {
        path: img_path.clone(),
    };
    let mut cfg = RunConfig::for_scenario(Scenario::RqmSparse);
    cfg.k = Some(9);
    let run = ResolvedRun::resolve(&cfg, &source.load()?, 2024)?;

    let y = dir.join("y.bits");
    let u = dir.join("u.vec");
    let z = dir.join("z.vec");
    let x = dir.join("x.vec");
    let picture = dir.join("x.pgm");
    let truth = dir.join("truth.vec");
    let sim = simulate_files(&run, &source)?;
    sim.y.write(&y)?;
    sim.truth.write(&truth)?;
    dequantize_file(&y, &run)?.write(&u)?;
    recover_file(&u, &run)?.write(&z)?;
    pipeline_file(&y, &run, OutputFormat::Vector, None)?
        .0
        .write(&x)?;
    pipeline_file(&y, &run, OutputFormat::Pgm, None)?
        .0
        .write(&picture)?;

    for out in [&y, &truth, &u, &z, &x, &picture] {
        if !reproduces(out)? {
            return Ok(false);
        }
    }
    Ok(true)
}

fn golden() -> Result<bool> {
    let dir = scratch_dir()?;
    let ok = golden_pipeline(&dir);
    let _ = fs::remove_dir_all(&dir);
    ok
}

const CHECKS: [Check; 6] = [
    (
        "dequantization bound and consistency",
        dequant_bound_and_consistency,
    ),
    ("decoded cells tile the range", cells_tile),
    ("matched filter exact on grid", matched_filter_exact),
    ("cosamp exact on sparse input", cosamp_exact),
    ("pgm round trip", pgm_round_trip),
    ("golden pipeline reproduces from sidecars", golden),
];

/// Prints one line per check; true when all pass.
pub fn run(out: &mut impl Write) -> Result<bool> {
    let mut all = true;
    for (name, check) in CHECKS {
        let verdict = match check() {
            Ok(true) => "PASS".to_string(),
            Ok(false) => "FAIL".to_string(),
            Err(e) => format!("FAIL ({e})"),
        };
        all &= verdict == "PASS";
        writeln!(out, "{verdict} {name}")?;
    }
    Ok(all)
}
