//! Named coefficient configurations and the JSON config format.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cell::PeriodicOperator;
use crate::error::{Error, Result};
use crate::field::PeriodicField;
use crate::lattice::{Idx, Lattice, Symbol};
use crate::linalg::{self, CMat, C64, I};

pub const BUILTINS: [&str; 5] = ["1d_scalar", "2d_complex_beta", "2d_real_scalar", "matrix_m_eq_n", "sandwich_f"];

/// Grid used to take Fourier data of generator fields; exact for their bandwidths.
const GENERATOR_GRID: usize = 16;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    #[serde(default = "default_eps")]
    pub eps: Vec<f64>,
    #[serde(default = "default_tau")]
    pub tau: Vec<f64>,
    #[serde(default = "default_s")]
    pub s: Vec<f64>,
    /// Log-spaced |k| values in [t_min_factor · r0, r0].
    #[serde(default = "default_t_count")]
    pub t_count: usize,
    #[serde(default = "default_t_min_factor")]
    pub t_min_factor: f64,
    /// Directions for the k-grid; the germ scan uses `Scenario::theta_count`.
    #[serde(default = "default_scan_theta")]
    pub theta_count: usize,
}

fn default_eps() -> Vec<f64> {
    vec![0.1, 0.05, 0.025]
}
fn default_tau() -> Vec<f64> {
    vec![1.0, 10.0, 100.0]
}
fn default_s() -> Vec<f64> {
    vec![3.0]
}
fn default_t_count() -> usize {
    24
}
fn default_t_min_factor() -> f64 {
    1e-3
}
fn default_scan_theta() -> usize {
    24
}

impl Default for ScanSpec {
    fn default() -> Self {
        ScanSpec {
            eps: default_eps(),
            tau: default_tau(),
            s: default_s(),
            t_count: default_t_count(),
            t_min_factor: default_t_min_factor(),
            theta_count: default_scan_theta(),
        }
    }
}

/// Flags checked in assertion mode.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    pub n_zero: Option<bool>,
    pub n0_zero: Option<bool>,
    /// g⁰ for scalar problems.
    pub g0: Option<f64>,
    /// κ in N(θ) = κ θ₂³ for scalar germs depending on x₁ only.
    pub n_theta2_cubed: Option<f64>,
    /// Some fourth-order coefficient ν at the probe direction is nonzero.
    pub nu_nonzero: Option<bool>,
}

impl Expectations {
    fn flags(n_zero: bool) -> Self {
        Expectations { n_zero: Some(n_zero), n0_zero: Some(n_zero), ..Default::default() }
    }
}

/// κ = (3/2)c³ for β = c(sin x₁ + cos 2x₁).
pub fn complex_beta_kappa(c: f64) -> f64 {
    1.5 * c.powi(3)
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub op: PeriodicOperator,
    pub cutoff: f64,
    /// Germ scan directions.
    pub theta_count: usize,
    /// Direction for band fits and probes.
    pub probe_theta: Vec<f64>,
    pub scan: ScanSpec,
    pub expect: Expectations,
}

/// One Fourier coefficient: integer index and real/imaginary parts, row-major.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coefficient {
    pub index: Vec<i32>,
    pub re: Vec<Vec<f64>>,
    #[serde(default)]
    pub im: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexMatrix {
    pub re: Vec<Vec<f64>>,
    #[serde(default)]
    pub im: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldConfig {
    Fourier { fourier: Vec<Coefficient> },
    Generator { generator: String, #[serde(default)] c: Option<f64> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SymbolConfig {
    /// "gradient": b(D) = D.
    Named(String),
    Matrices { b: Vec<ComplexMatrix> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Primal basis vectors a_j, one per row.
    pub lattice: Vec<Vec<f64>>,
    pub symbol: SymbolConfig,
    pub g: FieldConfig,
    #[serde(default)]
    pub f: Option<FieldConfig>,
    #[serde(default)]
    pub cutoff: Option<f64>,
    #[serde(default)]
    pub theta_count: Option<usize>,
    #[serde(default)]
    pub probe_theta: Option<Vec<f64>>,
    #[serde(default)]
    pub scan: Option<ScanSpec>,
    #[serde(default)]
    pub expect: Option<Expectations>,
}

fn default_theta_count(d: usize) -> usize {
    match d {
        1 => 2,
        2 => 360,
        _ => 2000,
    }
}

fn matrix(path: &str, re: &[Vec<f64>], im: Option<&Vec<Vec<f64>>>) -> Result<CMat> {
    let rows = re.len();
    let cols = re.first().map(Vec::len).unwrap_or(0);
    if rows == 0 || cols == 0 || re.iter().any(|r| r.len() != cols) {
        return Err(Error::config(path, "matrix rows must be nonempty and of equal length"));
    }
    if let Some(im) = im {
        if im.len() != rows || im.iter().any(|r| r.len() != cols) {
            return Err(Error::config(path, "im must have the shape of re"));
        }
    }
    Ok(CMat::from_fn(rows, cols, |i, j| C64::new(re[i][j], im.map(|m| m[i][j]).unwrap_or(0.0))))
}

/// Scalar function of cell coordinates times a constant matrix.
fn scalar_field(d: usize, f: impl Fn(&[f64]) -> C64, block: CMat) -> PeriodicField {
    let (r, c) = block.shape();
    PeriodicField::from_fn(d, r, c, GENERATOR_GRID, |s| {
        let x: Vec<f64> = s.iter().map(|v| 2.0 * PI * v).collect();
        &block * f(&x)
    })
}

fn matrix_field(d: usize, rows: usize, cols: usize, f: impl Fn(&[f64]) -> CMat) -> PeriodicField {
    PeriodicField::from_fn(d, rows, cols, GENERATOR_GRID, |s| {
        let x: Vec<f64> = s.iter().map(|v| 2.0 * PI * v).collect();
        f(&x)
    })
}

/// β(x₁) = c(sin x₁ + cos 2x₁) in g = [[1, iβ′], [−iβ′, 1]].
pub fn beta_prime(c: f64, x1: f64) -> f64 {
    c * (x1.cos() - 2.0 * (2.0 * x1).sin())
}

/// Field generators for configs; the argument `c` is used by `complex_beta`.
pub fn generator(name: &str, c: Option<f64>, path: &str) -> Result<PeriodicField> {
    let f = match name {
        "two_plus_cos" => scalar_field(1, |x| C64::new(2.0 + x[0].cos(), 0.0), linalg::eye(1)),
        "complex_beta" => {
            let c = c.unwrap_or(0.2);
            if !(c > 0.0 && c < 1.0 / 3.0) {
                return Err(Error::config(format!("{path}.c"), "c must lie in (0, 1/3)"));
            }
            matrix_field(2, 2, 2, |x| {
                let bp = beta_prime(c, x[0]);
                CMat::from_row_slice(2, 2, &[C64::new(1.0, 0.0), I * bp, -I * bp, C64::new(1.0, 0.0)])
            })
        }
        "real_anisotropic" => matrix_field(2, 2, 2, |x| {
            let off = 0.3 * (x[0] - x[1]).cos();
            linalg::from_real(2, 2, &[2.0 + x[0].cos(), off, off, 1.5 + 0.5 * x[1].cos()])
        }),
        "hermitian_pair" => matrix_field(2, 2, 2, |x| {
            let off = C64::new(0.3 * x[1].cos(), 0.3 * x[0].sin());
            CMat::from_row_slice(
                2,
                2,
                &[C64::new(2.0 + x[0].cos(), 0.0), off, off.conj(), C64::new(1.5 + 0.5 * (x[0] + x[1]).cos(), 0.0)],
            )
        }),
        "weight_1d" => scalar_field(1, |x| C64::new(1.2 + 0.3 * x[0].cos() + 0.2 * (2.0 * x[0]).sin(), 0.0), linalg::eye(1)),
        other => return Err(Error::config(path, format!("unknown generator '{other}'"))),
    };
    Ok(f)
}

/// b₁ = 1, b₂ = J (rotation by π/2): m = n = 2, b(θ)*b(θ) = |θ|².
fn rotation_symbol() -> Result<Symbol> {
    Symbol::new(vec![linalg::eye(2), linalg::from_real(2, 2, &[0.0, -1.0, 1.0, 0.0])])
}

fn field_from_config(cfg: &FieldConfig, d: usize, path: &str) -> Result<PeriodicField> {
    match cfg {
        FieldConfig::Generator { generator: name, c } => {
            let f = generator(name, *c, path)?;
            if f.d != d {
                return Err(Error::config(path, format!("generator '{name}' is {}-dimensional, lattice is {d}", f.d)));
            }
            Ok(f)
        }
        FieldConfig::Fourier { fourier } => {
            let mut coeffs: BTreeMap<Idx, CMat> = BTreeMap::new();
            let mut shape = None;
            for (i, c) in fourier.iter().enumerate() {
                let p = format!("{path}.fourier[{i}]");
                if c.index.len() != d {
                    return Err(Error::config(format!("{p}.index"), format!("expected {d} integers")));
                }
                let m = matrix(&p, &c.re, c.im.as_ref())?;
                if *shape.get_or_insert(m.shape()) != m.shape() {
                    return Err(Error::config(p, "coefficient shapes differ"));
                }
                let mut k = [0; 3];
                k[..d].copy_from_slice(&c.index);
                if coeffs.insert(k, m).is_some() {
                    return Err(Error::config(format!("{p}.index"), "duplicate index"));
                }
            }
            let (r, c) = shape.ok_or_else(|| Error::config(path, "no coefficients"))?;
            PeriodicField::from_coeffs(d, r, c, coeffs).map_err(|e| Error::config(path, e.to_string()))
        }
    }
}

impl Scenario {
    pub fn from_config(cfg: ScenarioConfig) -> Result<Self> {
        let d = cfg.lattice.len();
        if d == 0 || d > 3 || cfg.lattice.iter().any(|v| v.len() != d) {
            return Err(Error::config("lattice", "need d vectors of length d, 1 <= d <= 3"));
        }
        let basis = DMatrix::from_fn(d, d, |i, j| cfg.lattice[j][i]);
        let lattice = Lattice::new(basis).map_err(|e| Error::config("lattice", e.to_string()))?;
        let symbol = match &cfg.symbol {
            SymbolConfig::Named(s) if s == "gradient" => Symbol::gradient(d),
            SymbolConfig::Named(s) if s == "rotation" && d == 2 => rotation_symbol(),
            SymbolConfig::Named(s) => return Err(Error::config("symbol", format!("unknown symbol '{s}'"))),
            SymbolConfig::Matrices { b } => {
                let mats = b
                    .iter()
                    .enumerate()
                    .map(|(l, m)| matrix(&format!("symbol.b[{l}]"), &m.re, m.im.as_ref()))
                    .collect::<Result<Vec<_>>>()?;
                if mats.len() != d {
                    return Err(Error::config("symbol.b", format!("expected {d} matrices")));
                }
                Symbol::new(mats)
            }
        }
        .map_err(|e| Error::config("symbol", e.to_string()))?;
        let g = field_from_config(&cfg.g, d, "g")?;
        let f = cfg.f.as_ref().map(|f| field_from_config(f, d, "f")).transpose()?;
        let op = PeriodicOperator::new(lattice, symbol, g, f).map_err(|e| Error::config("g", e.to_string()))?;
        let cutoff = match cfg.cutoff {
            Some(c) if c > 0.0 => c,
            Some(_) => return Err(Error::config("cutoff", "must be positive")),
            None => op.default_cutoff(),
        };
        let probe_theta = match cfg.probe_theta {
            Some(t) => {
                let nrm = t.iter().map(|x| x * x).sum::<f64>().sqrt();
                if t.len() != d || nrm == 0.0 {
                    return Err(Error::config("probe_theta", "need a nonzero vector of length d"));
                }
                t.iter().map(|x| x / nrm).collect()
            }
            None => {
                let mut t = vec![0.0; d];
                t[0] = 1.0;
                t
            }
        };
        Ok(Scenario {
            name: cfg.name,
            op,
            cutoff,
            theta_count: cfg.theta_count.unwrap_or_else(|| default_theta_count(d)),
            probe_theta,
            scan: cfg.scan.unwrap_or_default(),
            expect: cfg.expect.unwrap_or_default(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| Error::config("$", e.to_string()))?;
        Self::from_config(cfg)
    }

    /// A builtin name or a path to a JSON config.
    pub fn load(name_or_path: &str) -> Result<Self> {
        if let Some(cfg) = builtin_config(name_or_path) {
            return Self::from_config(cfg);
        }
        let path = Path::new(name_or_path);
        if !path.exists() {
            return Err(Error::config(name_or_path, format!("not a builtin ({}) and no such file", BUILTINS.join(", "))));
        }
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// `2d_complex_beta` with a chosen amplitude c.
    pub fn complex_beta(c: f64) -> Result<Self> {
        let mut cfg = builtin_config("2d_complex_beta").expect("builtin");
        cfg.g = FieldConfig::Generator { generator: "complex_beta".into(), c: Some(c) };
        if let Some(e) = cfg.expect.as_mut() {
            e.n_theta2_cubed = Some(complex_beta_kappa(c));
        }
        Self::from_config(cfg)
    }

    pub fn with_cutoff(mut self, cutoff: f64) -> Self {
        self.cutoff = cutoff;
        self
    }
}

fn two_pi_rows(d: usize) -> Vec<Vec<f64>> {
    (0..d).map(|i| (0..d).map(|j| if i == j { 2.0 * PI } else { 0.0 }).collect()).collect()
}

fn gen(name: &str) -> FieldConfig {
    FieldConfig::Generator { generator: name.into(), c: None }
}

pub fn builtin_config(name: &str) -> Option<ScenarioConfig> {
    let base = |name: &str, d: usize, g: FieldConfig, cutoff: f64| ScenarioConfig {
        name: name.into(),
        lattice: two_pi_rows(d),
        symbol: SymbolConfig::Named("gradient".into()),
        g,
        f: None,
        cutoff: Some(cutoff),
        theta_count: None,
        probe_theta: None,
        scan: None,
        expect: None,
    };
    let cfg = match name {
        "1d_scalar" => ScenarioConfig {
            expect: Some(Expectations { g0: Some(3f64.sqrt()), nu_nonzero: Some(true), ..Expectations::flags(true) }),
            scan: Some(ScanSpec { s: vec![3.0, 2.0], ..ScanSpec::default() }),
            ..base(name, 1, gen("two_plus_cos"), 16.0)
        },
        "2d_complex_beta" => ScenarioConfig {
            probe_theta: Some(vec![0.0, 1.0]),
            expect: Some(Expectations { n_theta2_cubed: Some(complex_beta_kappa(0.2)), ..Expectations::flags(false) }),
            ..base(name, 2, FieldConfig::Generator { generator: "complex_beta".into(), c: Some(0.2) }, 24.0)
        },
        "2d_real_scalar" => ScenarioConfig {
            theta_count: Some(72),
            expect: Some(Expectations::flags(true)),
            scan: Some(ScanSpec { s: vec![3.0, 2.0], theta_count: 8, ..ScanSpec::default() }),
            ..base(name, 2, gen("real_anisotropic"), 8.0)
        },
        "matrix_m_eq_n" => ScenarioConfig {
            symbol: SymbolConfig::Named("rotation".into()),
            theta_count: Some(72),
            expect: Some(Expectations::flags(true)),
            scan: Some(ScanSpec { theta_count: 8, ..ScanSpec::default() }),
            ..base(name, 2, gen("hermitian_pair"), 8.0)
        },
        "sandwich_f" => ScenarioConfig {
            f: Some(gen("weight_1d")),
            expect: Some(Expectations { g0: Some(3f64.sqrt()), nu_nonzero: Some(true), ..Expectations::flags(true) }),
            ..base(name, 1, gen("two_plus_cos"), 16.0)
        },
        _ => return None,
    };
    Some(cfg)
}
