//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use ou_coupling::levy::{svc_set, Atom, Density, IntervalUnion, LevyMeasure, PiecewiseDensity};
use ou_coupling::sampler::DriverMode;
use ou_coupling::symbol::{LevyTriplet, OUModel};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;
pub const MIN_STATISTICAL_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    TvDecay,
    CouplingTail,
    Lemma23Sweep,
    SymbolBounds,
    GradientScan,
    CantorDemo,
    OverlapCheck,
    NegativeControl,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::TvDecay => "tv_decay",
            ExperimentKind::CouplingTail => "coupling_tail",
            ExperimentKind::Lemma23Sweep => "lemma23_sweep",
            ExperimentKind::SymbolBounds => "symbol_bounds",
            ExperimentKind::GradientScan => "gradient_scan",
            ExperimentKind::CantorDemo => "cantor_demo",
            ExperimentKind::OverlapCheck => "overlap_check",
            ExperimentKind::NegativeControl => "negative_control",
        }
    }

    fn is_statistical(self) -> bool {
        matches!(
            self,
            ExperimentKind::TvDecay | ExperimentKind::CouplingTail | ExperimentKind::NegativeControl
        )
    }

    fn needs_t_grid(self) -> bool {
        matches!(
            self,
            ExperimentKind::TvDecay
                | ExperimentKind::SymbolBounds
                | ExperimentKind::GradientScan
                | ExperimentKind::NegativeControl
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub location: Vec<f64>,
    pub mass: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NuSpec {
    Zero {
        dim: usize,
    },
    Atomic {
        atoms: Vec<AtomSpec>,
    },
    Uniform {
        lo: f64,
        hi: f64,
        mass: f64,
    },
    /// Constant density `height` on a union of intervals.
    Intervals {
        intervals: Vec<(f64, f64)>,
        height: f64,
    },
    /// Constant density on the fat Cantor set of the given level.
    Svc {
        level: u32,
        removed: f64,
        #[serde(default = "one")]
        height: f64,
    },
    /// `coef·|z - center|^exponent` on `[lo, hi]`.
    Power {
        lo: f64,
        hi: f64,
        center: f64,
        exponent: f64,
        coef: f64,
    },
    Stable {
        alpha: f64,
        scale: f64,
        dim: usize,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    #[serde(default)]
    pub q: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub drift: Option<Vec<f64>>,
    pub nu: NuSpec,
}

/// Experiment parameters; every field has a default.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub x: Option<Vec<f64>>,
    pub y: Option<Vec<f64>>,
    /// Jump truncation level.
    pub epsilon: Option<f64>,
    /// Shift radius of the overlap condition.
    pub delta: Option<f64>,
    pub mode: Option<DriverMode>,
    pub bins: Option<usize>,
    pub tail_quantile: Option<f64>,
    pub bootstrap_replicates: Option<usize>,
    pub horizon: Option<f64>,
    /// Condition coupled runs on this many jumps (default 128); `0` keeps Poisson arrivals.
    pub steps: Option<usize>,
    pub k_grid: Option<Vec<usize>>,
    pub fit_k: Option<usize>,
    pub shift_grid: Option<usize>,
    pub kmax: Option<usize>,
    /// Rationals such as `"3/10"`.
    pub r_values: Option<Vec<String>>,
    pub level: Option<u32>,
    pub removed: Option<f64>,
    pub zmax: Option<f64>,
    pub z0: Option<f64>,
    pub region_epsilon: Option<f64>,
    pub probe_points: Option<usize>,
    /// Probe spacing as a fraction of the smoothing scale `1/φ_t^{-1}(1)`.
    pub probe_fraction: Option<f64>,
    pub dump_samples: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub model: ModelSpec,
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub t_grid: Vec<f64>,
    #[serde(default)]
    pub sample_count: Option<usize>,
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub params: Params,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// `serde` path `a.b[2]` as the JSON pointer `/a/b/2`.
fn pointer(path: &serde_path_to_error::Path) -> String {
    let s = path.to_string();
    if s == "." {
        return "/".into();
    }
    let mut out = String::new();
    for part in s.split('.') {
        for piece in part.split('[') {
            let piece = piece.trim_end_matches(']');
            if !piece.is_empty() {
                out.push('/');
                out.push_str(piece);
            }
        }
    }
    out
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig =
            serde_path_to_error::deserialize(de).map_err(|e| CliError::config(pointer(e.path()), e.inner().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::config(
                "/schema_version",
                format!("unsupported schema version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        if self.experiment.is_statistical() {
            match self.sample_count {
                None => return Err(CliError::config("/sample_count", "required for statistical experiments")),
                Some(n) if n < MIN_STATISTICAL_SAMPLES => {
                    return Err(CliError::config(
                        "/sample_count",
                        format!("must be at least {MIN_STATISTICAL_SAMPLES}"),
                    ))
                }
                _ => {}
            }
        }
        if self.experiment.needs_t_grid() && self.t_grid.is_empty() {
            return Err(CliError::config("/t_grid", "must not be empty"));
        }
        for (i, t) in self.t_grid.iter().enumerate() {
            if !(*t > 0.0 && t.is_finite()) {
                return Err(CliError::config(format!("/t_grid/{i}"), "times must be positive and finite"));
            }
        }
        self.model()?;
        Ok(())
    }

    pub fn model(&self) -> CliResult<OUModel> {
        build_model(&self.model)
    }
}

fn matrix(rows: &[Vec<f64>], at: &str) -> CliResult<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(CliError::config(at, "matrix must be a nonempty list of equal-length rows"));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn core(at: &str) -> impl Fn(ou_coupling::Error) -> CliError + '_ {
    move |e| CliError::config(at, e.to_string())
}

pub fn build_measure(spec: &NuSpec) -> CliResult<LevyMeasure> {
    let at = "/model/nu";
    match spec {
        NuSpec::Zero { dim } => Ok(LevyMeasure::zero(*dim)),
        NuSpec::Atomic { atoms } => {
            LevyMeasure::atomic(atoms.iter().map(|a| Atom::new(a.location.clone(), a.mass)).collect()).map_err(core(at))
        }
        NuSpec::Uniform { lo, hi, mass } => {
            LevyMeasure::density(PiecewiseDensity::uniform(*lo, *hi, *mass).map_err(core(at))?).map_err(core(at))
        }
        NuSpec::Intervals { intervals, height } => {
            let u = IntervalUnion::new(intervals.clone()).map_err(core(at))?;
            LevyMeasure::density(PiecewiseDensity::new(u, Density::Constant(*height))).map_err(core(at))
        }
        NuSpec::Svc { level, removed, height } => {
            let u = svc_set(*level, *removed).map_err(core(at))?;
            LevyMeasure::density(PiecewiseDensity::new(u, Density::Constant(*height))).map_err(core(at))
        }
        NuSpec::Power {
            lo,
            hi,
            center,
            exponent,
            coef,
        } => {
            let u = IntervalUnion::single(*lo, *hi).map_err(core(at))?;
            let shape = Density::Power {
                center: *center,
                exponent: *exponent,
                coef: *coef,
            };
            LevyMeasure::density(PiecewiseDensity::new(u, shape)).map_err(core(at))
        }
        NuSpec::Stable { alpha, scale, dim } => LevyMeasure::stable(*alpha, *scale, *dim).map_err(core(at)),
    }
}

pub fn build_model(spec: &ModelSpec) -> CliResult<OUModel> {
    let a = matrix(&spec.a, "/model/a")?;
    let b = matrix(&spec.b, "/model/b")?;
    let nu = build_measure(&spec.nu)?;
    let d = b.ncols();
    let q = match &spec.q {
        Some(rows) => matrix(rows, "/model/q")?,
        None => DMatrix::zeros(d, d),
    };
    let drift = spec.drift.clone().map_or_else(|| DVector::zeros(d), DVector::from_vec);
    let triplet = LevyTriplet::new(q, drift, nu).map_err(core("/model"))?;
    OUModel::new(a, b, triplet).map_err(core("/model"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "schema_version": 1,
        "model": {"a": [[-1.0]], "b": [[1.0]], "nu": {"kind": "uniform", "lo": 0, "hi": 1, "mass": 1}},
        "experiment": "tv_decay",
        "t_grid": [1, 2],
        "sample_count": 1000,
        "seed": 1
    }"#;

    #[test]
    fn parses_a_minimal_config() {
        let cfg = ExperimentConfig::from_json(BASE).unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::TvDecay);
        assert_eq!(cfg.model().unwrap().n(), 1);
    }

    #[test]
    fn unknown_experiment_names_the_field() {
        let text = BASE.replace("tv_decay", "warp_drive");
        match ExperimentConfig::from_json(&text) {
            Err(CliError::Config { pointer, .. }) => assert_eq!(pointer, "/experiment"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn nested_errors_carry_a_pointer() {
        let text = BASE.replace(r#""a": [[-1.0]]"#, r#""a": [["x"]]"#);
        match ExperimentConfig::from_json(&text) {
            Err(CliError::Config { pointer, .. }) => assert_eq!(pointer, "/model/a/0/0"),
            other => panic!("{other:?}"),
        }
        // Tagged measure specs report the enclosing object.
        let text = BASE.replace(r#""hi": 1"#, r#""hi": "one""#);
        match ExperimentConfig::from_json(&text) {
            Err(CliError::Config { pointer, .. }) => assert_eq!(pointer, "/model/nu"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn small_sample_counts_are_rejected() {
        let text = BASE.replace(r#""sample_count": 1000"#, r#""sample_count": 10"#);
        assert!(matches!(
            ExperimentConfig::from_json(&text),
            Err(CliError::Config { pointer, .. }) if pointer == "/sample_count"
        ));
    }

    #[test]
    fn seed_is_required() {
        let text = BASE.replace(r#","seed": 1"#, "").replace(r#""seed": 1"#, r#""unused": 1"#);
        assert!(matches!(ExperimentConfig::from_json(&text), Err(CliError::Config { .. })));
    }
}
