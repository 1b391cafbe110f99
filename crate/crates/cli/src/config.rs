//! Run configuration files and the sidecars written next to every output.

use std::fs;
use std::path::{Path, PathBuf};

use modrecon_core::forward::geometric_gain;
use modrecon_core::sparse::CosampOptions;
use modrecon_core::{
    BitLayout, DRecipe, FreqGrid, Image, MeasurementMode, ModelConfig, PointRule, RecoveryVariant,
    RqmOptions, SearchStrategy, SensingKind, SensingMatrix,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    DequantOnly,
    Rqm,
    RqmMultishot,
    RqmSparse,
    RqmMultishotSparse,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::DequantOnly,
        Scenario::Rqm,
        Scenario::RqmMultishot,
        Scenario::RqmSparse,
        Scenario::RqmMultishotSparse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::DequantOnly => "dequant_only",
            Scenario::Rqm => "rqm",
            Scenario::RqmMultishot => "rqm_multishot",
            Scenario::RqmSparse => "rqm_sparse",
            Scenario::RqmMultishotSparse => "rqm_multishot_sparse",
        }
    }

    pub fn parse(s: &str) -> Option<Scenario> {
        Scenario::ALL.into_iter().find(|sc| sc.name() == s)
    }

    pub fn multishot(self) -> bool {
        matches!(self, Scenario::RqmMultishot | Scenario::RqmMultishotSparse)
    }

    pub fn sparse(self) -> bool {
        matches!(self, Scenario::RqmSparse | Scenario::RqmMultishotSparse)
    }

    pub fn default_k(self) -> usize {
        match self {
            Scenario::DequantOnly => 5,
            Scenario::Rqm => 15,
            Scenario::RqmMultishot => 3,
            Scenario::RqmSparse => 25,
            Scenario::RqmMultishotSparse => 7,
        }
    }
}

/// How pixel values become the signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelScale {
    /// Keep `[0, 255]`.
    Raw,
    /// Divide by 255.
    Unit,
}

impl PixelScale {
    pub fn factor(self) -> f64 {
        match self {
            PixelScale::Raw => 1.0,
            PixelScale::Unit => 255.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: f64,
    pub hi: f64,
    pub resolution: f64,
}

impl GridConfig {
    pub fn to_grid(self) -> Result<FreqGrid> {
        Ok(FreqGrid::new(self.lo, self.hi, self.resolution)?)
    }
}

impl From<FreqGrid> for GridConfig {
    fn from(g: FreqGrid) -> Self {
        GridConfig {
            lo: g.lo(),
            hi: g.hi(),
            resolution: g.resolution(),
        }
    }
}

/// User-written JSON. Everything but the scenario has a default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Option<Scenario>,
    pub k: Option<usize>,
    pub k_prime: Option<usize>,
    pub mode: Option<MeasurementMode>,
    pub delta: Option<f64>,
    pub t_bound: Option<f64>,
    pub q: Option<usize>,
    pub sparsity: Option<usize>,
    pub seed: Option<u64>,
    pub sensing: Option<SensingKind>,
    pub variant: Option<RecoveryVariant>,
    pub point_rule: Option<PointRule>,
    pub grid: Option<GridConfig>,
    pub search: Option<SearchStrategy>,
    pub cosamp: Option<CosampOptions>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn for_scenario(scenario: Scenario) -> RunConfig {
        RunConfig {
            scenario: Some(scenario),
            ..RunConfig::default()
        }
    }
}

/// Every parameter of a run with defaults filled in. Written into sidecars,
/// so any output can be regenerated from it plus the source image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedRun {
    pub scenario: Scenario,
    pub width: usize,
    pub height: usize,
    pub n: usize,
    pub q: usize,
    pub p: usize,
    pub k: usize,
    pub k_prime: usize,
    pub mode: MeasurementMode,
    pub delta: f64,
    pub range: f64,
    pub sparsity: usize,
    /// Seeds `D` and `B`.
    pub seed: u64,
    /// Seeds the random point rule; starts equal to `seed`.
    pub dequant_seed: u64,
    pub d: DRecipe,
    pub sensing: SensingKind,
    pub scale: PixelScale,
    pub variant: Option<RecoveryVariant>,
    pub point_rule: PointRule,
    pub grid: Option<GridConfig>,
    pub search: SearchStrategy,
    pub cosamp: CosampOptions,
}

const DEFAULT_T: f64 = 2.0;
const DEFAULT_RES: f64 = 1e-3;
/// Multi-shot period as a multiple of `g_min |Omega|`.
const MULTISHOT_RANGE_FACTOR: f64 = 1.6;
/// Widening of the observed `z` range on each side in sparse scenarios.
const OMEGA_MARGIN: f64 = 0.05;

impl ResolvedRun {
    /// Fills defaults for an image. Sparse scenarios look at `B x` to bound
    /// `Omega`, so this needs the image and not just its size.
    pub fn resolve(cfg: &RunConfig, image: &Image, fallback_seed: u64) -> Result<ResolvedRun> {
        let scenario = cfg
            .scenario
            .ok_or_else(|| CliError::Config("missing \"scenario\"".into()))?;
        let (width, height) = (image.width(), image.height());
        let n = width * height;
        if n == 0 {
            return Err(CliError::Config("empty image".into()));
        }
        let sparse = scenario.sparse();
        let sparsity = match (sparse, cfg.sparsity) {
            (false, None | Some(0)) => 0,
            (false, Some(s)) => {
                return Err(CliError::Config(format!(
                    "scenario {} has no sparsity prior, got sparsity {s}",
                    scenario.name()
                )))
            }
            (true, Some(s)) => s,
            (true, None) => (n * 25).div_ceil(1024),
        };
        let q = match (sparse, cfg.q) {
            (false, Some(q)) if q != n => {
                return Err(CliError::Config(format!(
                    "scenario {} measures every pixel, q must be {n}",
                    scenario.name()
                )))
            }
            (false, _) => n,
            (true, Some(q)) => q,
            (true, None) => (n * 125).div_ceil(256),
        };
        let sensing = match (sparse, cfg.sensing) {
            (false, Some(k)) if k != SensingKind::Identity => {
                return Err(CliError::Config(
                    "scenarios without sparsity use the identity sensing matrix".into(),
                ))
            }
            (false, _) => SensingKind::Identity,
            (true, k) => k.unwrap_or(SensingKind::SubsampledUnitaryTimesSigns),
        };
        let k_prime = cfg.k_prime.unwrap_or(match scenario {
            Scenario::DequantOnly => 1,
            Scenario::Rqm | Scenario::RqmSparse => 4,
            Scenario::RqmMultishot | Scenario::RqmMultishotSparse => 3,
        });
        let d = match scenario {
            Scenario::DequantOnly => {
                if cfg.t_bound.is_some() {
                    return Err(CliError::Config("dequant_only has no gain bound".into()));
                }
                DRecipe::Ones
            }
            s if s.multishot() => {
                if cfg.t_bound.is_some() {
                    return Err(CliError::Config(
                        "multi-shot gains are fixed, drop t_bound".into(),
                    ));
                }
                if !(1..=9).contains(&k_prime) {
                    return Err(CliError::Config(format!(
                        "geometric gains need 1 <= k' <= 9, got {k_prime}"
                    )));
                }
                DRecipe::Geometric
            }
            _ => DRecipe::Random {
                t_bound: cfg.t_bound.unwrap_or(DEFAULT_T),
            },
        };
        let variant = match (scenario, cfg.variant) {
            (Scenario::DequantOnly, None) => None,
            (Scenario::DequantOnly, Some(_)) => {
                return Err(CliError::Config(
                    "dequant_only has no recovery variant".into(),
                ))
            }
            (s, Some(RecoveryVariant::Multishot)) if !s.multishot() => {
                return Err(CliError::Config(format!(
                    "the multishot variant needs geometric gains; scenario {} uses random ones",
                    s.name()
                )))
            }
            (s, Some(v)) if s.multishot() && v != RecoveryVariant::Multishot => {
                return Err(CliError::Config(format!(
                    "scenario {} only supports the multishot variant",
                    s.name()
                )))
            }
            (_, Some(v)) => Some(v),
            (s, None) if s.multishot() => Some(RecoveryVariant::Multishot),
            (_, None) => Some(RecoveryVariant::MfComplex),
        };
        let scale = if scenario == Scenario::DequantOnly {
            PixelScale::Raw
        } else {
            PixelScale::Unit
        };
        let seed = cfg.seed.unwrap_or(fallback_seed);

        let mut run = ResolvedRun {
            scenario,
            width,
            height,
            n,
            q,
            p: 0,
            k: cfg.k.unwrap_or(scenario.default_k()),
            k_prime,
            mode: cfg.mode.unwrap_or(MeasurementMode::Adaptive),
            delta: 0.0,
            range: 0.0,
            sparsity,
            seed,
            dequant_seed: seed,
            d,
            sensing,
            scale,
            variant,
            point_rule: cfg.point_rule.unwrap_or_default(),
            grid: None,
            search: cfg.search.unwrap_or_default(),
            cosamp: cfg.cosamp.unwrap_or_default(),
        };
        run.p = run.k_prime * run.q;
        // Provisional; B does not depend on it, the final value may depend on Omega.
        run.delta = 1.0;

        run.grid = match (scenario, cfg.grid) {
            (Scenario::DequantOnly, Some(_)) => {
                return Err(CliError::Config("dequant_only has no search grid".into()))
            }
            (Scenario::DequantOnly, None) => None,
            (_, Some(g)) => {
                g.to_grid()?;
                Some(g)
            }
            (s, None) if s.sparse() => Some(auto_omega(&run, image)?),
            (_, None) => Some(GridConfig {
                lo: 0.0,
                hi: 1.0,
                resolution: DEFAULT_RES,
            }),
        };
        run.delta = match (cfg.delta, scenario) {
            (Some(d), _) => d,
            (None, Scenario::DequantOnly) => 128.0,
            (None, s) if s.multishot() => {
                let g = run.grid.unwrap();
                0.5 * MULTISHOT_RANGE_FACTOR * geometric_gain(k_prime) * (g.hi - g.lo)
            }
            (None, _) => 0.5,
        };
        run.range = 2.0 * run.delta;
        run.model_config()?;
        Ok(run)
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        Ok(ModelConfig::new(
            self.n,
            self.q,
            self.k_prime,
            self.k,
            self.delta,
            self.sparsity,
            self.seed,
            self.mode,
        )?)
    }

    /// Config used by the reconstruction stages: same shapes, dequantizer seed.
    pub fn recovery_config(&self) -> Result<ModelConfig> {
        let mut c = self.model_config()?;
        c.seed = self.dequant_seed;
        Ok(c)
    }

    pub fn layout(&self) -> BitLayout {
        BitLayout {
            mode: self.mode,
            k: self.k,
            p: self.p,
        }
    }

    pub fn grid(&self) -> Result<FreqGrid> {
        match self.grid {
            Some(g) => g.to_grid(),
            None => Err(CliError::Config(format!(
                "scenario {} has no search grid",
                self.scenario.name()
            ))),
        }
    }

    pub fn rqm_options(&self) -> Result<RqmOptions> {
        Ok(RqmOptions {
            variant: self.variant.ok_or_else(|| {
                CliError::Config(format!(
                    "scenario {} has no recovery stage",
                    self.scenario.name()
                ))
            })?,
            point_rule: self.point_rule,
            grid: self.grid()?,
            search: self.search,
            cosamp: self.cosamp,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run serializes")
    }
}

/// Observed range of `B x`, widened by a margin, with a thousand grid steps.
fn auto_omega(run: &ResolvedRun, image: &Image) -> Result<GridConfig> {
    let config = run.model_config()?;
    let b = SensingMatrix::build(&config, run.sensing)?;
    let x = crate::harness::signal(run, image)?;
    let z = b.apply(&x)?;
    let lo = z.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = OMEGA_MARGIN * (hi - lo).max(f64::MIN_POSITIVE);
    let (lo, hi) = (lo - pad, hi + pad);
    Ok(GridConfig {
        lo,
        hi,
        resolution: DEFAULT_RES * (hi - lo),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImageSource {
    Pgm { path: PathBuf },
    Synthetic { side: usize },
}

impl ImageSource {
    pub fn load(&self) -> Result<Image> {
        match self {
            ImageSource::Pgm { path } => crate::pgm::load_pgm(path),
            ImageSource::Synthetic { side } => Ok(crate::harness::synthetic_scene(*side)),
        }
    }
}

/// How an output file was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Producer {
    Simulate {
        source: ImageSource,
    },
    Truth {
        source: ImageSource,
    },
    Dequantize {
        input: PathBuf,
    },
    Recover {
        input: PathBuf,
    },
    Pipeline {
        input: PathBuf,
        format: OutputFormat,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Vector,
    Pgm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub tool: String,
    pub producer: Producer,
    /// `x`, `y`, `u_hat`, `z_hat` or `x_hat`.
    pub content: String,
    pub len: usize,
    pub layout: Option<BitLayout>,
    pub run: ResolvedRun,
}

pub fn tool_version() -> String {
    format!("modrecon {}", env!("CARGO_PKG_VERSION"))
}

pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

impl Sidecar {
    pub fn write_for(&self, output: &Path) -> Result<()> {
        fs::write(
            sidecar_path(output),
            serde_json::to_string_pretty(self)? + "\n",
        )?;
        Ok(())
    }

    pub fn read_for(output: &Path) -> Result<Sidecar> {
        let path = sidecar_path(output);
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Usage(format!("cannot read sidecar {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}
