//! Run configuration: one TOML file with a section per concern. Unknown keys
//! are rejected and every physical parameter is checked before any work.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::coefficients::{CoefficientField, CoefficientSequence, SequenceFamily, TabulatedPairs};
use crate::error::{invalid, Error, Result};
use crate::experiments::{ExperimentSpec, TwoPointBump};
use crate::forms::FunctionalSpec;
use crate::kernels::{Kernel, KernelFamily};
use crate::mesh::{build_mesh, Mesh};
use crate::quadrature::{DEFAULT_GAUSS_ORDER, DEFAULT_NEAR_DIAG_LEVELS};
use crate::solver::{LineSearch, SolveMethod, SolveOptions};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Seeds the randomized start of the Poincaré estimate.
    #[serde(default)]
    pub seed: Option<u64>,
    pub kernel: KernelConfig,
    #[serde(default)]
    pub validation: Option<ValidationConfig>,
    #[serde(default)]
    pub mesh: Option<MeshConfig>,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub coefficient: Option<CoefficientConfig>,
    #[serde(default)]
    pub sequence: Option<SequenceConfig>,
    #[serde(default)]
    pub functional: Option<FunctionalSpec>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub experiment: Option<ExperimentConfig>,
    /// Directory of the config file; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub family: KernelFamily,
    pub p: f64,
    pub s: f64,
    pub c0: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationConfig {
    pub epsilon: Option<f64>,
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub omega: [f64; 2],
    pub n_cells: usize,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    #[serde(default = "default_gauss_order")]
    pub gauss_order: usize,
    #[serde(default = "default_levels")]
    pub near_diag_levels: usize,
}

fn default_gauss_order() -> usize {
    DEFAULT_GAUSS_ORDER
}
fn default_levels() -> usize {
    DEFAULT_NEAR_DIAG_LEVELS
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            gauss_order: DEFAULT_GAUSS_ORDER,
            near_diag_levels: DEFAULT_NEAR_DIAG_LEVELS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientKind {
    Constant,
    SeparableOscillation,
    Checkerboard,
    TabulatedPairs,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientConfig {
    pub family: CoefficientKind,
    pub value: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub freq: Option<u32>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub cells_per_unit: Option<u32>,
    /// CSV with columns `x,x_prime,value`.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceConfig {
    pub family: CoefficientKind,
    pub value: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub indices: Vec<u32>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub method: Option<SolveMethod>,
    pub shrink: Option<f64>,
    pub sufficient_decrease: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Defaults to three shifted bumps in the middle of the domain.
    pub test_functions: Option<Vec<TwoPointBump>>,
}

fn require<T: Copy>(v: Option<T>, name: &'static str, family: &str) -> Result<T> {
    v.ok_or_else(|| invalid(name, format!("required by family {family}")))
}

fn forbid(present: &[(&'static str, bool)], family: &str) -> Result<()> {
    match present.iter().find(|(_, p)| *p) {
        Some((name, _)) => Err(invalid(name, format!("not a parameter of family {family}"))),
        None => Ok(()),
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.kernel()?;
        cfg.solve_options()?;
        if let Some(v) = cfg.validation {
            if let Some(s) = v.samples {
                if s == 0 {
                    return Err(invalid("validation.samples", "must be positive"));
                }
            }
            if let Some(e) = v.epsilon {
                if e.is_nan() || e <= 0.0 {
                    return Err(invalid("validation.epsilon", "must be positive"));
                }
            }
        }
        if cfg.mesh.is_some() {
            cfg.mesh()?;
        }
        if cfg.quadrature.gauss_order == 0 {
            return Err(invalid("quadrature.gauss_order", "must be positive"));
        }
        if let Some(c) = &cfg.coefficient {
            if c.family != CoefficientKind::TabulatedPairs {
                cfg.coefficient()?;
            }
        }
        if cfg.sequence.is_some() {
            cfg.sequence()?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn kernel(&self) -> Result<Kernel> {
        let k = self.kernel;
        Kernel::new(k.family, k.p, k.s, k.c0, k.delta)
    }

    /// `(epsilon, samples)`, defaulting to `δ/10` and 10⁴ radii.
    pub fn validation(&self) -> (f64, usize) {
        let v = self.validation.unwrap_or_default();
        (
            v.epsilon.unwrap_or(0.1 * self.kernel.delta),
            v.samples.unwrap_or(10_000),
        )
    }

    pub fn mesh(&self) -> Result<Mesh> {
        let m = self
            .mesh
            .ok_or_else(|| invalid("mesh", "section is required"))?;
        build_mesh((m.omega[0], m.omega[1]), m.n_cells, &self.kernel()?)
    }

    pub fn solve_options(&self) -> Result<SolveOptions> {
        let d = SolveOptions::default();
        let s = self.solver;
        let opts = SolveOptions {
            tol: s.tol.unwrap_or(d.tol),
            max_iters: s.max_iters.unwrap_or(d.max_iters),
            method: s.method.unwrap_or(d.method),
            line_search: LineSearch {
                shrink: s.shrink.unwrap_or(d.line_search.shrink),
                sufficient_decrease: s
                    .sufficient_decrease
                    .unwrap_or(d.line_search.sufficient_decrease),
            },
        };
        opts.validate()?;
        Ok(opts)
    }

    pub fn functional(&self) -> Result<FunctionalSpec> {
        self.functional
            .clone()
            .ok_or_else(|| invalid("functional", "section is required"))
    }

    /// The coefficient for a single solve; constant 1 when the section is
    /// absent.
    pub fn coefficient(&self) -> Result<CoefficientField> {
        let Some(c) = &self.coefficient else {
            return CoefficientField::constant(1.0);
        };
        let present = |name, v: bool| (name, v);
        match c.family {
            CoefficientKind::Constant => {
                forbid(
                    &[
                        present("coefficient.alpha", c.alpha.is_some()),
                        present("coefficient.beta", c.beta.is_some()),
                        present("coefficient.freq", c.freq.is_some()),
                        present("coefficient.lo", c.lo.is_some()),
                        present("coefficient.hi", c.hi.is_some()),
                        present("coefficient.cells_per_unit", c.cells_per_unit.is_some()),
                        present("coefficient.path", c.path.is_some()),
                    ],
                    "constant",
                )?;
                CoefficientField::constant(require(c.value, "coefficient.value", "constant")?)
            }
            CoefficientKind::SeparableOscillation => {
                let fam = "separable_oscillation";
                forbid(
                    &[
                        present("coefficient.value", c.value.is_some()),
                        present("coefficient.lo", c.lo.is_some()),
                        present("coefficient.hi", c.hi.is_some()),
                        present("coefficient.cells_per_unit", c.cells_per_unit.is_some()),
                        present("coefficient.path", c.path.is_some()),
                    ],
                    fam,
                )?;
                CoefficientField::separable_oscillation(
                    require(c.alpha, "coefficient.alpha", fam)?,
                    require(c.beta, "coefficient.beta", fam)?,
                    require(c.freq, "coefficient.freq", fam)?,
                )
            }
            CoefficientKind::Checkerboard => {
                forbid(
                    &[
                        present("coefficient.value", c.value.is_some()),
                        present("coefficient.alpha", c.alpha.is_some()),
                        present("coefficient.beta", c.beta.is_some()),
                        present("coefficient.freq", c.freq.is_some()),
                        present("coefficient.path", c.path.is_some()),
                    ],
                    "checkerboard",
                )?;
                CoefficientField::checkerboard(
                    require(c.lo, "coefficient.lo", "checkerboard")?,
                    require(c.hi, "coefficient.hi", "checkerboard")?,
                    require(
                        c.cells_per_unit,
                        "coefficient.cells_per_unit",
                        "checkerboard",
                    )?,
                )
            }
            CoefficientKind::TabulatedPairs => {
                let path = c.path.as_ref().ok_or_else(|| {
                    invalid("coefficient.path", "required by family tabulated_pairs")
                })?;
                load_tabulated(&self.base_dir.join(path))
            }
        }
    }

    pub fn sequence(&self) -> Result<(CoefficientSequence, Vec<u32>)> {
        let s = self
            .sequence
            .as_ref()
            .ok_or_else(|| invalid("sequence", "section is required"))?;
        let present = |name, v: bool| (name, v);
        let family = match s.family {
            CoefficientKind::Constant => {
                forbid(
                    &[
                        present("sequence.alpha", s.alpha.is_some()),
                        present("sequence.beta", s.beta.is_some()),
                        present("sequence.lo", s.lo.is_some()),
                        present("sequence.hi", s.hi.is_some()),
                    ],
                    "constant",
                )?;
                SequenceFamily::Constant {
                    value: require(s.value, "sequence.value", "constant")?,
                }
            }
            CoefficientKind::SeparableOscillation => {
                let fam = "separable_oscillation";
                forbid(
                    &[
                        present("sequence.value", s.value.is_some()),
                        present("sequence.lo", s.lo.is_some()),
                        present("sequence.hi", s.hi.is_some()),
                    ],
                    fam,
                )?;
                SequenceFamily::SeparableOscillation {
                    alpha: require(s.alpha, "sequence.alpha", fam)?,
                    beta: require(s.beta, "sequence.beta", fam)?,
                }
            }
            CoefficientKind::Checkerboard => {
                forbid(
                    &[
                        present("sequence.value", s.value.is_some()),
                        present("sequence.alpha", s.alpha.is_some()),
                        present("sequence.beta", s.beta.is_some()),
                    ],
                    "checkerboard",
                )?;
                SequenceFamily::Checkerboard {
                    lo: require(s.lo, "sequence.lo", "checkerboard")?,
                    hi: require(s.hi, "sequence.hi", "checkerboard")?,
                }
            }
            CoefficientKind::TabulatedPairs => {
                return Err(Error::Unsupported(
                    "tabulated sequences have no analytic weak-* limit".into(),
                ))
            }
        };
        let seq = CoefficientSequence::built_in(family)?;
        if s.indices.len() < 2 {
            return Err(invalid("sequence.indices", "need at least two indices"));
        }
        if s.indices[0] == 0 || s.indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid(
                "sequence.indices",
                "must be positive and strictly increasing",
            ));
        }
        Ok((seq, s.indices.clone()))
    }

    pub fn experiment_spec(&self) -> Result<ExperimentSpec> {
        let exp = self
            .experiment
            .as_ref()
            .ok_or_else(|| invalid("experiment", "section is required"))?;
        let kernel = self.kernel()?;
        let mesh = self.mesh()?;
        let (sequence, indices) = self.sequence()?;
        let spec = ExperimentSpec {
            kernel,
            omega: mesh.omega(),
            n_cells: mesh.n_cells(),
            gauss_order: self.quadrature.gauss_order,
            near_diag_levels: self.quadrature.near_diag_levels,
            p: kernel.p(),
            functional: self.functional()?,
            sequence,
            indices,
            test_functions: exp
                .test_functions
                .clone()
                .unwrap_or_else(|| TwoPointBump::defaults(mesh.omega())),
            solver: self.solve_options()?,
        };
        spec.functional.build(&mesh)?;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Deserialize)]
struct TabulatedRow {
    x: f64,
    x_prime: f64,
    value: f64,
}

pub fn load_tabulated(path: &Path) -> Result<CoefficientField> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Parse(e.to_string()))?;
    let rows = reader
        .deserialize::<TabulatedRow>()
        .map(|r| {
            r.map(|r| (r.x, r.x_prime, r.value))
                .map_err(|e| Error::Parse(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    CoefficientField::tabulated(TabulatedPairs::symmetrized(rows))
}
