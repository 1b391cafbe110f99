//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use modrecon::config::{ImageSource, ResolvedRun};
use modrecon::config::{RunConfig, Scenario};
use modrecon::harness::{
    bench_sweep, replay, run_trial, synthetic_scene, BenchResult, BenchSidecar, Summary,
};
use modrecon_core::dequant::oracle::BruteForceTable;
use modrecon_core::rng::{seeded_uniform, stream_rng};
use modrecon_core::sparse::{cosamp, least_squares_on_support, CosampOptions};
use modrecon_core::{
    apply_block_stack, build_d, decode_interval, hm_dequantize, measure, modulo, normalized_error,
    recover_z, DRecipe, FreqGrid, MeasurementMode, MfVariant, ModelConfig, PointRule,
    SearchStrategy, SensingKind, SensingMatrix,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

type Verdict = (bool, String);

const MODES: [MeasurementMode; 2] = [MeasurementMode::Adaptive, MeasurementMode::Nonadaptive];
const RULES: [PointRule; 2] = [PointRule::Random, PointRule::Midpoint];

fn uniform(seed: u64, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n as u64)
        .map(|i| seeded_uniform(seed, i, lo, hi).unwrap())
        .collect()
}

/// Each mean may exceed the previous one by at most the larger of their
/// standard deviations.
fn monotone_within_std(summaries: &[Summary]) -> bool {
    summaries.windows(2).all(|w| {
        let (m0, s0) = w[0].err_x();
        let (m1, s1) = w[1].err_x();
        m1 <= m0 + s0.max(s1)
    })
}

fn curve(res: &BenchResult) -> String {
    res.summaries
        .iter()
        .map(|s| format!("k={}: {:.4}+-{:.4}", s.k, s.err_x().0, s.err_x().1))
        .collect::<Vec<_>>()
        .join(", ")
}

fn all_rows_ok(res: &BenchResult) -> bool {
    res.rows.iter().all(|r| r.failure.is_none())
}

fn dequantization_accuracy() -> Verdict {
    let image = synthetic_scene(512);
    let mut errs = Vec::new();
    let mut slowest: f64 = 0.0;
    for k in [5, 9] {
        let mut cfg = RunConfig::for_scenario(Scenario::DequantOnly);
        cfg.k = Some(k);
        cfg.seed = Some(1);
        let run = ResolvedRun::resolve(&cfg, &image, 1).unwrap();
        assert_eq!(run.delta, 128.0);
        let out = run_trial(&run, &image).unwrap();
        slowest = slowest.max(out.runtime);
        errs.push(out.errors.u);
    }
    (
        errs[0] <= 0.12 && errs[1] <= 0.06 && slowest < 5.0,
        format!(
            "512x512, delta=128: err(k=5)={:.4} (<=0.12), err(k=9)={:.4} (<=0.06), slowest {:.3}s (<5s)",
            errs[0], errs[1], slowest
        ),
    )
}

fn deterministic_bound() -> Verdict {
    let delta = 1.0;
    let m = 100_000;
    let u = uniform(21, m, 0.0, 2.0 * delta);
    let mut violations = 0usize;
    let mut checked = 0usize;
    for k in [1, 2, 4, 8, 16] {
        for mode in MODES {
            for rule in RULES {
                let config = ModelConfig::new(m, m, 1, k, delta, 0, 7, mode).unwrap();
                let y = measure(&u, k, delta, mode).unwrap();
                let u_hat = hm_dequantize(&y, &config, rule).unwrap();
                let bound = delta / k as f64;
                violations += u
                    .iter()
                    .zip(u_hat.iter())
                    .filter(|(a, b)| (*a - *b).abs() >= bound)
                    .count();
                checked += m;
            }
        }
    }
    (
        violations == 0,
        format!("{violations} violations of |u_hat - u| < delta/k in {checked} decodes (k in 1,2,4,8,16, both rules, both modes)"),
    )
}

fn consistency() -> Verdict {
    let vectors = 10_000u64;
    let len = 32;
    let mut mismatches = 0usize;
    for mode in MODES {
        for v in 0..vectors {
            let k = 1 + (v % 24) as usize;
            let delta = seeded_uniform(31, v, 0.1, 10.0).unwrap();
            let u = uniform(1000 + v, len, 0.0, 2.0 * delta);
            let rule = RULES[(v % 2) as usize];
            let config = ModelConfig::new(len, len, 1, k, delta, 0, v, mode).unwrap();
            let y = measure(&u, k, delta, mode).unwrap();
            let u_hat = hm_dequantize(&y, &config, rule).unwrap();
            if measure(&u_hat, k, delta, mode).unwrap() != y {
                mismatches += 1;
            }
        }
    }
    (
        mismatches == 0,
        format!(
            "{mismatches} of {} re-quantized vectors differ from y (adaptive and non-adaptive)",
            2 * vectors
        ),
    )
}

/// Cells come back as exact integer indices, so tiling is checked on the
/// rationals `cell/k` and then on the float endpoints.
fn partition() -> Verdict {
    let delta = 1.0;
    let mut problems = Vec::new();
    let mut patterns_checked = 0usize;
    for k in 1..=32usize {
        let width = delta / k as f64;
        let mut valid = Vec::new();
        let mut cells = Vec::new();
        for c in 0..2 * k {
            let mid = (c as f64 + 0.5) * width;
            let bits = measure(&[mid], k, delta, MeasurementMode::Adaptive)
                .unwrap()
                .to_bits();
            let iv = decode_interval(&bits, delta, k).unwrap();
            cells.push(iv.cell);
            valid.push((bits, iv));
        }
        let mut sorted = cells.clone();
        sorted.sort_unstable();
        if sorted != (0..2 * k).collect::<Vec<_>>() || cells != sorted {
            problems.push(format!("k={k}: cells {cells:?}"));
            continue;
        }
        for w in valid.windows(2) {
            if w[0].1.hi != w[1].1.lo {
                problems.push(format!("k={k}: gap at cell {}", w[0].1.cell));
            }
        }
        let (first, last) = (valid[0].1, valid[2 * k - 1].1);
        if first.lo != 0.0 || last.hi != 2.0 * delta {
            problems.push(format!("k={k}: cover [{}, {}]", first.lo, last.hi));
        }
        if valid
            .iter()
            .any(|(_, iv)| (iv.width() - width).abs() > 4.0 * f64::EPSILON)
        {
            problems.push(format!("k={k}: width off"));
        }

        let table = BruteForceTable::new(delta, k, 2 * k * 64);
        // Sample points sit on cell edges, so allow float rounding there.
        let ulps = 1e-12;
        let step = table.resolution() + ulps;
        let agrees = |bits: &[bool], lo: f64, hi: f64| match table.decode(bits) {
            Some((a, b)) => a >= lo - ulps && b <= hi + ulps && a - lo <= step && hi - b <= step,
            None => false,
        };
        for (bits, iv) in &valid {
            patterns_checked += 1;
            if !agrees(bits, iv.lo, iv.hi) {
                problems.push(format!("k={k}: brute force disagrees on cell {}", iv.cell));
            }
        }
        if k <= 12 {
            let mut feasible = 0;
            for word in 0u32..(1 << k) {
                let bits: Vec<bool> = (0..k).map(|j| word >> j & 1 == 1).collect();
                patterns_checked += 1;
                if table.decode(&bits).is_some() {
                    feasible += 1;
                    let iv = decode_interval(&bits, delta, k).unwrap();
                    if !agrees(&bits, iv.lo, iv.hi) {
                        problems.push(format!("k={k}: pattern {word:b}"));
                    }
                }
            }
            if feasible != 2 * k {
                problems.push(format!(
                    "k={k}: {feasible} feasible patterns, expected {}",
                    2 * k
                ));
            }
        }
    }
    (
        problems.is_empty(),
        if problems.is_empty() {
            format!("2k cells tile [0, 2 delta] for k=1..32; brute force agrees on {patterns_checked} patterns (all 2^k for k<=12)")
        } else {
            problems.join("; ")
        },
    )
}

fn matched_filter_exactness() -> Verdict {
    let (q, kp) = (64, 8);
    let grid = FreqGrid::new(0.0, 1.0, 1e-4).unwrap();
    let mut exact = 0usize;
    let mut total = 0usize;
    let mut slowest: f64 = 0.0;
    let clock = Instant::now();
    for seed in 0..100u64 {
        let config =
            ModelConfig::new(q, q, kp, 2, 0.5, 0, seed, MeasurementMode::Adaptive).unwrap();
        let d = build_d(&config, DRecipe::Random { t_bound: 2.0 }).unwrap();
        let z: Vec<f64> = uniform(500 + seed, q, 0.0, grid.len() as f64)
            .into_iter()
            .map(|j| grid.value((j as usize).min(grid.len() - 1)))
            .collect();
        let u = modulo(&apply_block_stack(&d, &z).unwrap(), 1.0).unwrap();
        let one = Instant::now();
        let z_hat = recover_z(
            &u,
            &d,
            1.0,
            grid,
            MfVariant::ComplexExp,
            SearchStrategy::Exhaustive,
        )
        .unwrap();
        slowest = slowest.max(one.elapsed().as_secs_f64());
        exact += z_hat.iter().zip(&z).filter(|(a, b)| a == b).count();
        total += q;
    }
    let all = clock.elapsed().as_secs_f64();
    (
        exact == total && slowest < 2.0,
        format!(
            "{exact}/{total} exact over 100 seeds (k'=8, q=64, grid {}); slowest recovery {slowest:.3}s (<2s), all seeds {all:.2}s",
            grid.len()
        ),
    )
}

fn rqm_trend() -> Verdict {
    let image = synthetic_scene(64);
    let ks = [3, 5, 9, 15, 21];
    let res = bench_sweep(&RunConfig::for_scenario(Scenario::Rqm), &image, &ks, 5, 6).unwrap();
    let at15 = res.summary(15).unwrap().err_x().0;
    (
        all_rows_ok(&res)
            && res.k_prime == 4
            && monotone_within_std(&res.summaries)
            && at15 <= 0.08,
        format!(
            "64x64, k'=4, 5 seeds: {} (monotone within 1 std, <=0.08 at k=15)",
            curve(&res)
        ),
    )
}

fn multishot() -> Verdict {
    let image = synthetic_scene(64);
    let res = bench_sweep(
        &RunConfig::for_scenario(Scenario::RqmMultishot),
        &image,
        &[3],
        5,
        7,
    )
    .unwrap();
    let worst = res.rows.iter().map(|r| r.err_x).fold(0.0, f64::max);
    (
        all_rows_ok(&res) && res.k_prime == 3 && worst <= 0.07,
        format!(
            "64x64, k'=3 geometric: k=3 {} , worst trial {worst:.4} (<=0.07)",
            curve(&res)
        ),
    )
}

fn sparse_pipeline() -> Verdict {
    let image = synthetic_scene(64);
    let mut ms_cfg = RunConfig::for_scenario(Scenario::RqmMultishotSparse);
    ms_cfg.q = Some(2000);
    ms_cfg.sparsity = Some(100);
    let mut mf_cfg = RunConfig::for_scenario(Scenario::RqmSparse);
    mf_cfg.q = Some(2000);
    mf_cfg.sparsity = Some(100);
    let ms = bench_sweep(&ms_cfg, &image, &[3, 5, 7, 9], 3, 8).unwrap();
    let mf = bench_sweep(&mf_cfg, &image, &[7, 15, 25], 3, 8).unwrap();
    let ms7 = ms.summary(7).unwrap().err_x().0;
    let (mf7, mf25) = (
        mf.summary(7).unwrap().err_x().0,
        mf.summary(25).unwrap().err_x().0,
    );
    (
        all_rows_ok(&ms)
            && all_rows_ok(&mf)
            && ms7 <= 0.07
            && mf25 <= mf7
            && monotone_within_std(&ms.summaries)
            && monotone_within_std(&mf.summaries),
        format!(
            "n=4096, q=2000, s=100: multi-shot {} (<=0.07 at k=7); matched filter {} (k=25 <= k=7)",
            curve(&ms),
            curve(&mf)
        ),
    )
}

fn sparse_full_size() -> Verdict {
    let clock = Instant::now();
    let image = synthetic_scene(256);
    let mut cfg = RunConfig::for_scenario(Scenario::RqmMultishotSparse);
    cfg.q = Some(8000);
    cfg.sparsity = Some(1000);
    cfg.k = Some(7);
    let res = bench_sweep(&cfg, &image, &[7], 1, 9).unwrap();
    let err = res.rows[0].err_x;
    let secs = clock.elapsed().as_secs_f64();
    (
        all_rows_ok(&res) && err <= 0.06 && secs < 600.0,
        format!(
            "n=65536, q=8000, s=1000, multi-shot k=7: err {err:.4} (<=0.06) in {secs:.1}s (<600s)"
        ),
    )
}

fn sparse_signal(n: usize, s: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, 1);
    let mut x = vec![0.0; n];
    for j in rand::seq::index::sample(&mut rng, n, s) {
        let mag: f64 = rng.random_range(0.5..2.0);
        x[j] = if rng.random::<bool>() { mag } else { -mag };
    }
    x
}

fn dense_oracle(b: &SensingMatrix, support: &[usize], z: &[f64]) -> Vec<f64> {
    let cols: Vec<Vec<f64>> = support.iter().map(|&j| b.column(j).unwrap()).collect();
    let a = DMatrix::from_fn(b.rows(), support.len(), |i, j| cols[j][i]);
    let qr = a.qr();
    let rhs = qr.q().transpose() * DVector::from_column_slice(z);
    qr.r()
        .solve_upper_triangular(&rhs)
        .unwrap()
        .iter()
        .copied()
        .collect()
}

fn cosamp_oracle() -> Verdict {
    let (n, q, s) = (1024, 400, 20);
    let mut exact = 0;
    let mut ls_gap: f64 = 0.0;
    for trial in 0..100u64 {
        let config =
            ModelConfig::new(n, q, 1, 1, 1.0, s, trial, MeasurementMode::Adaptive).unwrap();
        let b = SensingMatrix::build(&config, SensingKind::SubsampledUnitaryTimesSigns).unwrap();
        let x = sparse_signal(n, s, 100 + trial);
        let z = b.apply(&x).unwrap();
        let out = cosamp(&z, &b, s, CosampOptions::default()).unwrap();
        if normalized_error(&out.x_hat, &x) <= 1e-8 {
            exact += 1;
        }
        if trial < 10 {
            let mut rng = stream_rng(200 + trial, 2);
            let mut support: Vec<usize> = rand::seq::index::sample(&mut rng, n, 3 * s).into_vec();
            support.sort_unstable();
            let noisy: Vec<f64> = z.iter().map(|v| v + rng.random_range(-0.1..0.1)).collect();
            let ls = least_squares_on_support(&b, &support, &noisy).unwrap();
            let oracle = dense_oracle(&b, &support, &noisy);
            for (a, o) in ls.coeffs.iter().zip(&oracle) {
                ls_gap = ls_gap.max((a - o).abs() / o.abs().max(1.0));
            }
        }
    }
    (
        exact >= 95 && ls_gap <= 1e-8,
        format!("{exact}/100 exact (>=95) at n=1024, q=400, s=20; least squares vs dense QR gap {ls_gap:.2e} (<=1e-8)"),
    )
}

fn reproducibility() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let image = synthetic_scene(16);
    let source = ImageSource::Synthetic { side: 16 };
    let mut rows = 0;
    let mut mismatched = 0;
    for scenario in Scenario::ALL {
        let template = RunConfig::for_scenario(scenario);
        let ks = [3, 5];
        let res = bench_sweep(&template, &image, &ks, 2, 42).unwrap();
        assert!(all_rows_ok(&res), "{scenario:?}");
        let path = dir.path().join(format!("{}.csv.json", scenario.name()));
        BenchSidecar::new(&template, source.clone(), &ks, 2, 42, &res)
            .save(&path)
            .unwrap();
        let loaded = BenchSidecar::load(&path).unwrap();
        let report = replay(&loaded).unwrap();
        rows += report.rows.len();
        mismatched += report.mismatches.len();
    }
    let csv = dir.path().join("b.csv");
    let code_run = modrecon::cli_main([
        "modrecon",
        "bench",
        "--scenario",
        "rqm_sparse",
        "--k",
        "3,5",
        "--trials",
        "2",
        "--side",
        "16",
        "--out",
        csv.to_str().unwrap(),
    ]);
    let mut side = csv.as_os_str().to_owned();
    side.push(".json");
    let code_replay = modrecon::cli_main(["modrecon", "bench", "--replay", side.to_str().unwrap()]);
    (
        mismatched == 0 && code_run == 0 && code_replay == 0,
        format!("{mismatched} of {rows} rows differ on replay from sidecars (all scenarios); CLI replay exit {code_replay}"),
    )
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let criteria: Vec<(&str, fn() -> Verdict)> = vec![
        ("1 dequantization accuracy", dequantization_accuracy),
        ("2 deterministic bound", deterministic_bound),
        ("3 consistency", consistency),
        ("4 partition", partition),
        ("5 matched filter exactness", matched_filter_exactness),
        ("6 RQM trend without sparsity", rqm_trend),
        ("7 multi-shot efficiency", multishot),
        ("8 sparse pipeline", sparse_pipeline),
        ("9 CoSaMP oracle", cosamp_oracle),
        ("8 full-size sparse pipeline", sparse_full_size),
        ("10 reproducibility", reproducibility),
    ];

    let mut failed = 0;
    for (name, check) in criteria {
        let clock = Instant::now();
        let (ok, detail) = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(v) => v,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {name}: {} [{:.1}s] {detail}",
            if ok { "PASS" } else { "FAIL" },
            clock.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
