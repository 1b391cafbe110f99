use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use modrecon_core::{PointRule, RecoveryVariant};

use crate::config::{GridConfig, ImageSource, OutputFormat, ResolvedRun, RunConfig, Scenario};
use crate::error::{CliError, Result};
use crate::harness::{bench_sweep, replay, synthetic_scene, BenchSidecar, CSV_HEADER};
use crate::stages::{
    absolute, dequantize_file, load_bits, load_vector, pipeline_file, recover_file, simulate_files,
    PipelineSummary,
};

pub const SEED_ENV: &str = "MODRECON_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "modrecon",
    version,
    about = "Reconstruct images from 1-bit quantized modulo measurements"
)]
struct Cli {
    /// Seed for every random draw (falls back to the config file, then MODRECON_SEED, then 0).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Measure an image and write the bit file plus sidecar.
    Simulate(SimulateArgs),
    /// Decode a bit file to the dequantized vector.
    Dequantize(DequantizeArgs),
    /// Undo the modulo on a dequantized vector.
    Recover(RecoverArgs),
    /// Run all stages on a bit file.
    Pipeline(PipelineArgs),
    /// Sweep k over repeated trials and emit CSV.
    Bench(BenchArgs),
    /// Check invariants and re-run a golden pipeline.
    Selftest,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    Complex,
    Sine,
    Multishot,
}

impl From<VariantArg> for RecoveryVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Complex => RecoveryVariant::MfComplex,
            VariantArg::Sine => RecoveryVariant::MfSine,
            VariantArg::Multishot => RecoveryVariant::Multishot,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PointRuleArg {
    Random,
    Midpoint,
}

impl From<PointRuleArg> for PointRule {
    fn from(p: PointRuleArg) -> Self {
        match p {
            PointRuleArg::Random => PointRule::Random,
            PointRuleArg::Midpoint => PointRule::Midpoint,
        }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured scenario.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    /// 8-bit binary PGM input.
    #[arg(long = "in", conflicts_with = "synthetic")]
    input: Option<PathBuf>,
    /// Use the built-in test scene with this side length instead of a file.
    #[arg(long)]
    synthetic: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the signal `x` as a vector file.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DequantizeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    point_rule: Option<PointRuleArg>,
}

#[derive(Debug, Args)]
struct GridArgs {
    #[arg(long, allow_negative_numbers = true)]
    grid_lo: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    grid_hi: Option<f64>,
    #[arg(long)]
    grid_res: Option<f64>,
}

impl GridArgs {
    fn apply(&self, run: &mut ResolvedRun) -> Result<()> {
        if self.grid_lo.is_none() && self.grid_hi.is_none() && self.grid_res.is_none() {
            return Ok(());
        }
        let base = run.grid.unwrap_or(GridConfig {
            lo: 0.0,
            hi: 1.0,
            resolution: 1e-3,
        });
        let g = GridConfig {
            lo: self.grid_lo.unwrap_or(base.lo),
            hi: self.grid_hi.unwrap_or(base.hi),
            resolution: self.grid_res.unwrap_or(base.resolution),
        };
        g.to_grid()?;
        run.grid = Some(g);
        Ok(())
    }
}

#[derive(Debug, Args)]
struct RecoverArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// `.pgm` writes the reconstructed image, anything else the vector `x_hat`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    #[arg(long, value_enum)]
    point_rule: Option<PointRuleArg>,
    #[command(flatten)]
    grid: GridArgs,
    /// Signal file from `simulate --truth`, for per-stage errors.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Write errors and timings as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, required_unless_present_any = ["replay", "config"])]
    scenario: Option<String>,
    /// Comma-separated list of k values.
    #[arg(long, value_delimiter = ',', required_unless_present = "replay")]
    k: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    #[arg(long)]
    k_prime: Option<usize>,
    /// Template configuration; the scenario, k and seed are set per row.
    #[arg(long)]
    config: Option<PathBuf>,
    /// 8-bit PGM to measure instead of the built-in scene.
    #[arg(long = "in", conflicts_with = "side")]
    input: Option<PathBuf>,
    /// Side of the built-in scene.
    #[arg(long)]
    side: Option<usize>,
    /// CSV destination; a `.json` sidecar is written next to it. Stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Re-run every row of a bench sidecar and check it is bit-identical.
    #[arg(long, conflicts_with_all = ["scenario", "k", "config", "input", "side"])]
    replay: Option<PathBuf>,
}

struct Ctx {
    seed: Option<u64>,
}

impl Ctx {
    fn base_seed(&self, config: Option<u64>) -> Result<u64> {
        if let Some(s) = self.seed.or(config) {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| {
                CliError::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))
            }),
            Err(_) => Ok(0),
        }
    }
}

fn parse_scenario(s: &str) -> Result<Scenario> {
    Scenario::parse(s).ok_or_else(|| {
        let names: Vec<_> = Scenario::ALL.iter().map(|s| s.name()).collect();
        CliError::Usage(format!(
            "unknown scenario {s:?}; expected one of {}",
            names.join(", ")
        ))
    })
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn simulate_cmd(ctx: &Ctx, a: SimulateArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(s) = &a.scenario {
        cfg.scenario = Some(parse_scenario(s)?);
    }
    if a.k.is_some() {
        cfg.k = a.k;
    }
    let source = match (&a.input, a.synthetic, &cfg.input) {
        (Some(p), _, _) => ImageSource::Pgm { path: absolute(p)? },
        (None, Some(side), _) => ImageSource::Synthetic { side },
        (None, None, Some(p)) => ImageSource::Pgm { path: absolute(p)? },
        (None, None, None) => {
            return Err(CliError::Usage("simulate needs --in or --synthetic".into()))
        }
    };
    let out = a
        .out
        .clone()
        .or(cfg.output.clone())
        .ok_or_else(|| CliError::Usage("simulate needs --out".into()))?;
    let seed = ctx.base_seed(cfg.seed)?;
    cfg.seed = Some(seed);
    let image = source.load()?;
    let run = ResolvedRun::resolve(&cfg, &image, seed)?;
    let sim = simulate_files(&run, &source)?;
    sim.y.write(&out)?;
    if let Some(t) = &a.truth {
        sim.truth.write(t)?;
    }
    eprintln!("wrote {} ({} bits)", out.display(), sim.y.sidecar.len);
    Ok(())
}

fn dequantize_cmd(ctx: &Ctx, a: DequantizeArgs) -> Result<()> {
    let (_, side) = load_bits(&a.input)?;
    let mut run = side.run;
    if let Some(r) = a.point_rule {
        run.point_rule = r.into();
    }
    if let Some(s) = ctx.seed {
        run.dequant_seed = s;
    }
    dequantize_file(&a.input, &run)?.write(&a.out)
}

fn recover_cmd(a: RecoverArgs) -> Result<()> {
    let (_, side) = load_vector(&a.input, "u_hat")?;
    let mut run = side.run;
    if let Some(v) = a.variant {
        run.variant = Some(v.into());
    }
    a.grid.apply(&mut run)?;
    recover_file(&a.input, &run)?.write(&a.out)
}

fn pipeline_cmd(ctx: &Ctx, a: PipelineArgs) -> Result<()> {
    let (_, side) = load_bits(&a.input)?;
    let mut run = side.run;
    if let Some(v) = a.variant {
        run.variant = Some(v.into());
    }
    if let Some(r) = a.point_rule {
        run.point_rule = r.into();
    }
    if let Some(s) = ctx.seed {
        run.dequant_seed = s;
    }
    a.grid.apply(&mut run)?;
    let format = match a.out.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("pgm") => OutputFormat::Pgm,
        _ => OutputFormat::Vector,
    };
    let (out, report) = pipeline_file(&a.input, &run, format, a.truth.as_deref())?;
    out.write(&a.out)?;
    let summary = PipelineSummary::from(&report);
    if let Some(e) = summary.errors {
        eprintln!("err_u {:.6}  err_z {:.6}  err_x {:.6}", e.u, e.z, e.x);
    }
    if let Some(path) = &a.report {
        fs::write(path, serde_json::to_string_pretty(&summary)? + "\n")?;
    }
    Ok(())
}

fn bench_cmd(ctx: &Ctx, a: BenchArgs) -> Result<()> {
    if let Some(path) = &a.replay {
        let sidecar = BenchSidecar::load(path)?;
        let report = replay(&sidecar)?;
        let mut stdout = std::io::stdout().lock();
        writeln!(stdout, "{CSV_HEADER}")?;
        for (i, new) in report.rows.iter().enumerate() {
            let status = if report.mismatches.contains(&i) {
                "MISMATCH"
            } else {
                "identical"
            };
            writeln!(
                stdout,
                "{},{},{},{},{},{:?},{:?},{:?},{:.6},{status}",
                new.scenario.name(),
                new.k,
                new.k_prime,
                new.trial,
                new.seed,
                new.err_u,
                new.err_z,
                new.err_x,
                new.runtime
            )?;
        }
        if !report.mismatches.is_empty() {
            return Err(CliError::Runtime(format!(
                "{} of {} rows did not reproduce",
                report.mismatches.len(),
                report.rows.len()
            )));
        }
        return Ok(());
    }
    let mut template = load_config(a.config.as_deref())?;
    if let Some(s) = &a.scenario {
        template.scenario = Some(parse_scenario(s)?);
    }
    if template.scenario.is_none() {
        return Err(CliError::Usage("bench needs --scenario".into()));
    }
    if a.k_prime.is_some() {
        template.k_prime = a.k_prime;
    }
    let base_seed = ctx.base_seed(template.seed)?;
    template.seed = None;
    let source = match (&a.input, a.side) {
        (Some(p), _) => ImageSource::Pgm { path: absolute(p)? },
        (None, side) => ImageSource::Synthetic {
            side: side.unwrap_or(64),
        },
    };
    let image = match &source {
        ImageSource::Synthetic { side } => synthetic_scene(*side),
        other => other.load()?,
    };
    let result = bench_sweep(&template, &image, &a.k, a.trials, base_seed)?;
    let csv = result.to_csv();
    match &a.out {
        Some(path) => {
            fs::write(path, &csv)?;
            let mut side_path = path.as_os_str().to_owned();
            side_path.push(".json");
            BenchSidecar::new(&template, source, &a.k, a.trials, base_seed, &result)
                .save(Path::new(&side_path))?;
        }
        None => std::io::stdout().lock().write_all(csv.as_bytes())?,
    }
    Ok(())
}

fn dispatch(ctx: &Ctx, command: Command) -> Result<()> {
    match command {
        Command::Simulate(a) => simulate_cmd(ctx, a),
        Command::Dequantize(a) => dequantize_cmd(ctx, a),
        Command::Recover(a) => recover_cmd(a),
        Command::Pipeline(a) => pipeline_cmd(ctx, a),
        Command::Bench(a) => bench_cmd(ctx, a),
        Command::Selftest => {
            if crate::selftest::run(&mut std::io::stdout().lock())? {
                Ok(())
            } else {
                Err(CliError::Runtime("selftest failed".into()))
            }
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let ctx = Ctx { seed: cli.seed };
    let result = match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| dispatch(&ctx, cli.command)),
            Err(e) => Err(CliError::Runtime(e.to_string())),
        },
        None => dispatch(&ctx, cli.command),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
