//! Run configuration read from TOML. Every table rejects unknown keys and the
//! whole file is validated before anything is computed.
//!
//! ```toml
//! output_dir = "out"
//!
//! [profile]
//! k = 1.0
//! n_clad = 1.0
//! layers = [{ x_left = -1.0, x_right = 1.0, n = 1.5 }]
//!
//! [grid]
//! x = [-5.0, 5.0]
//! nx = 200
//! z = [-10.0, 10.0]
//! nz = 400
//!
//! [source]
//! kind = "gaussian"
//! sigma = 0.3
//!
//! [perturbation]
//! kind = "bump"
//! radius = 1.0
//! amplitude = 0.1
//! ```
//!
//! Lengths are in the units of `1/k`'s length scale throughout.

use crate::fields::{Field2D, FieldRole, Grid2D};
use crate::green::GreenSettings;
use crate::modes::ModeSearch;
use crate::profile::{Layer, SlabProfile};
use crate::radcheck::{ladder, BetaZero, RadcheckSettings, Variant};
use crate::scatter::SolveSettings;
use crate::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Environment variable that overrides `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "SLABWAVE_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub x_left: f64,
    pub x_right: f64,
    pub n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub k: f64,
    /// Both claddings; overridden per side by `n_minus` / `n_plus`.
    pub n_clad: Option<f64>,
    pub n_minus: Option<f64>,
    pub n_plus: Option<f64>,
    pub layers: Vec<LayerSpec>,
}

impl ProfileSpec {
    pub fn build(&self) -> Result<SlabProfile> {
        let side = |v: Option<f64>, name: &str| {
            v.or(self.n_clad).ok_or_else(|| Error::Config(format!("profile needs `{name}` or `n_clad`")))
        };
        let core = self.layers.iter().map(|l| Layer { x_left: l.x_left, x_right: l.x_right, n: l.n }).collect();
        SlabProfile::new(self.k, side(self.n_minus, "n_minus")?, side(self.n_plus, "n_plus")?, core)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x: [f64; 2],
    pub nx: usize,
    pub z: [f64; 2],
    pub nz: usize,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid2D> {
        Grid2D::new((self.x[0], self.x[1]), self.nx, (self.z[0], self.z[1]), self.nz)
    }
}

fn one() -> f64 {
    1.0
}
fn five() -> f64 {
    5.0
}
fn three() -> i32 {
    3
}
fn origin() -> [f64; 2] {
    [0.0, 0.0]
}

/// Source or perturbation data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    Zero,
    /// `A exp(-r^2 / (2 sigma^2))`, set to zero beyond `cutoff` sigmas.
    Gaussian {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "origin")]
        center: [f64; 2],
        sigma: f64,
        #[serde(default = "five")]
        cutoff: f64,
    },
    /// `A (1 - r^2/a^2)^power` inside the disc of radius `a`.
    Bump {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "origin")]
        center: [f64; 2],
        radius: f64,
        #[serde(default = "three")]
        power: i32,
    },
    /// `A (1 + z^2)^(-decay)` for `|x| <= x0`, zero elsewhere.
    Separable {
        #[serde(default = "one")]
        amplitude: f64,
        x0: f64,
        decay: f64,
    },
    /// Unit-mass Gaussian of width `width` scaled by `A`: a mollified point source.
    Point {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "origin")]
        center: [f64; 2],
        width: f64,
    },
    /// Binary field container on the configured grid.
    File {
        path: PathBuf,
    },
}

impl FieldSpec {
    fn validate(&self, what: &str) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("{what}: {m}")));
        match self {
            FieldSpec::Gaussian { sigma, cutoff, .. } if !(*sigma > 0.0 && *cutoff > 0.0) => {
                bad(format!("sigma and cutoff must be positive, got {sigma}, {cutoff}"))
            }
            FieldSpec::Bump { radius, power, .. } if !(*radius > 0.0 && *power >= 0) => {
                bad(format!("radius must be positive and power >= 0, got {radius}, {power}"))
            }
            FieldSpec::Separable { x0, decay, .. } if !(*x0 > 0.0 && *decay > 0.0) => {
                bad(format!("x0 and decay must be positive, got {x0}, {decay}"))
            }
            FieldSpec::Point { width, .. } if !(*width > 0.0) => bad(format!("width must be positive, got {width}")),
            _ => Ok(()),
        }
    }

    /// Samples the field on `grid`; relative paths resolve against `base`.
    pub fn sample(&self, grid: Grid2D, role: FieldRole, base: &Path) -> Result<Field2D> {
        let z = Complex64::new(0.0, 0.0);
        let re = |v: f64| Complex64::new(v, 0.0);
        Ok(match self.clone() {
            FieldSpec::Zero => Field2D::zeros(grid, role),
            FieldSpec::Gaussian { amplitude, center, sigma, cutoff } => Field2D::from_fn(grid, role, move |x, zz| {
                let r2 = (x - center[0]).powi(2) + (zz - center[1]).powi(2);
                if r2 <= (cutoff * sigma).powi(2) {
                    re(amplitude * (-r2 / (2.0 * sigma * sigma)).exp())
                } else {
                    z
                }
            }),
            FieldSpec::Bump { amplitude, center, radius, power } => Field2D::from_fn(grid, role, move |x, zz| {
                let t = ((x - center[0]).powi(2) + (zz - center[1]).powi(2)) / (radius * radius);
                if t < 1.0 {
                    re(amplitude * (1.0 - t).powi(power))
                } else {
                    z
                }
            }),
            FieldSpec::Separable { amplitude, x0, decay } => Field2D::from_fn(grid, role, move |x, zz| {
                if x.abs() <= x0 {
                    re(amplitude * (1.0 + zz * zz).powf(-decay))
                } else {
                    z
                }
            }),
            FieldSpec::Point { amplitude, center, width } => Field2D::from_fn(grid, role, move |x, zz| {
                let r2 = (x - center[0]).powi(2) + (zz - center[1]).powi(2);
                if r2 <= (5.0 * width).powi(2) {
                    re(amplitude * (-r2 / (2.0 * width * width)).exp() / (2.0 * std::f64::consts::PI * width * width))
                } else {
                    z
                }
            }),
            FieldSpec::File { path } => {
                let p = if path.is_absolute() { path } else { base.join(path) };
                let f = Field2D::read_binary(std::io::BufReader::new(std::fs::File::open(&p)?))?;
                if !f.grid.aligned_with(&grid) {
                    return Err(Error::GridMismatch(format!("{} is not on the configured grid", p.display())));
                }
                f.with_role(role)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModeSpec {
    pub scan_points: usize,
    pub rel_tol: f64,
    pub gap_margin: f64,
}

impl Default for ModeSpec {
    fn default() -> Self {
        let s = ModeSearch::default();
        Self { scan_points: s.scan_points, rel_tol: s.rel_tol, gap_margin: s.gap_margin }
    }
}

impl From<ModeSpec> for ModeSearch {
    fn from(s: ModeSpec) -> Self {
        ModeSearch { scan_points: s.scan_points, rel_tol: s.rel_tol, gap_margin: s.gap_margin }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(flatten)]
    pub settings: SolveSettings,
    /// Rescale the perturbation so its measured (H2) norm equals this value.
    pub h2_target: Option<f64>,
    /// Also solve from the zero start and compare.
    pub uniqueness_check: bool,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self { settings: SolveSettings::default(), h2_target: None, uniqueness_check: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadcheckSpec {
    /// Explicit ladder; otherwise `r0 2^(j/2)` for `rungs` rungs.
    pub radii: Option<Vec<f64>>,
    /// Defaults to `5 / k`.
    pub r0: Option<f64>,
    pub rungs: usize,
    /// Variants certified by `pipeline`; `radcheck` uses the first.
    pub variants: Vec<Variant>,
    pub beta0: Option<BetaZero>,
    pub tol: f64,
    pub nodes_per_wavelength: f64,
    pub floor: f64,
    /// Also certify the complex conjugate (incoming) field, which must fail.
    pub incoming_control: bool,
}

impl Default for RadcheckSpec {
    fn default() -> Self {
        let d = RadcheckSettings::default();
        Self {
            radii: None,
            r0: None,
            rungs: 12,
            variants: vec![Variant::RadCond, Variant::RadCondIi],
            beta0: None,
            tol: d.tol,
            nodes_per_wavelength: d.nodes_per_wavelength,
            floor: d.floor,
            incoming_control: true,
        }
    }
}

impl RadcheckSpec {
    pub fn radii(&self, k: f64) -> Vec<f64> {
        self.radii.clone().unwrap_or_else(|| ladder(self.r0.unwrap_or(5.0 / k), self.rungs))
    }

    pub fn settings(&self, variant: Variant) -> RadcheckSettings {
        RadcheckSettings {
            variant,
            beta0: self.beta0,
            tol: self.tol,
            nodes_per_wavelength: self.nodes_per_wavelength,
            floor: self.floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HypothesisSpec {
    /// Ladder for the (H3) fit; defaults to five radii inside the grid's z-extent.
    pub h3_radii: Option<Vec<f64>>,
}

/// Point source and observation lattice for `green-eval`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreenEvalSpec {
    pub source: [f64; 2],
    pub x: [f64; 2],
    pub nx: usize,
    pub z: [f64; 2],
    pub nz: usize,
}

impl GreenEvalSpec {
    /// Lattice points including both ends of each range, `x` slowest.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let axis = |r: [f64; 2], n: usize| -> Vec<f64> {
            if n == 1 {
                vec![r[0]]
            } else {
                (0..n).map(|i| r[0] + (r[1] - r[0]) * i as f64 / (n - 1) as f64).collect()
            }
        };
        let zs = axis(self.z, self.nz);
        axis(self.x, self.nx).into_iter().flat_map(|x| zs.iter().map(move |&z| (x, z))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub profile: ProfileSpec,
    #[serde(default)]
    pub modes: ModeSpec,
    #[serde(default)]
    pub green: GreenSettings,
    pub grid: Option<GridSpec>,
    pub source: Option<FieldSpec>,
    pub perturbation: Option<FieldSpec>,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub radcheck: RadcheckSpec,
    #[serde(default)]
    pub hypotheses: HypothesisSpec,
    pub green_eval: Option<GreenEvalSpec>,
    /// Directory that relative paths resolve against; set by [`RunConfig::load`].
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a file; `SLABWAVE_OUTPUT_DIR` overrides `output_dir`.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            cfg.output_dir = PathBuf::from(dir);
        } else if cfg.output_dir.is_relative() {
            cfg.output_dir = cfg.base_dir.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        self.profile.build()?;
        if let Some(g) = &self.grid {
            g.build()?;
        }
        if let Some(s) = &self.source {
            s.validate("source")?;
        }
        if let Some(p) = &self.perturbation {
            p.validate("perturbation")?;
        }
        let s = &self.solver.settings;
        if !(s.tol > 0.0) || s.max_iter == 0 {
            return Err(Error::Config(format!("solver needs tol > 0 and max_iter > 0, got {}, {}", s.tol, s.max_iter)));
        }
        if let Some(t) = self.solver.h2_target {
            if !(t > 0.0) {
                return Err(Error::Config(format!("h2_target must be positive, got {t}")));
            }
        }
        let g = &self.green;
        if !(g.tol > 0.0) || g.order < 2 {
            return Err(Error::Config("green needs tol > 0 and order >= 2".into()));
        }
        let rc = &self.radcheck;
        let radii = rc.radii(self.profile.k);
        if radii.len() < 4 || radii.windows(2).any(|w| !(w[1] > w[0])) || !(radii[0] > 0.0) {
            return Err(Error::Config("radcheck ladder needs at least 4 positive, increasing radii".into()));
        }
        if rc.variants.is_empty() || !(rc.tol > 0.0) || !(rc.nodes_per_wavelength > 0.0) {
            return Err(Error::Config("radcheck needs a variant, tol > 0 and nodes_per_wavelength > 0".into()));
        }
        if let Some(r) = &self.hypotheses.h3_radii {
            if r.len() < 4 {
                return Err(Error::Config("h3_radii needs at least 4 radii".into()));
            }
        }
        if let Some(e) = &self.green_eval {
            if e.nx == 0 || e.nz == 0 {
                return Err(Error::Config("green_eval needs nx, nz >= 1".into()));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid2D> {
        self.grid.as_ref().ok_or_else(|| Error::Config("missing [grid] table".into()))?.build()
    }

    pub fn source_field(&self, grid: Grid2D) -> Result<Field2D> {
        self.source.clone().unwrap_or(FieldSpec::Zero).sample(grid, FieldRole::Source, &self.base_dir)
    }

    pub fn perturbation_field(&self, grid: Grid2D) -> Result<Field2D> {
        self.perturbation.clone().unwrap_or(FieldSpec::Zero).sample(grid, FieldRole::Perturbation, &self.base_dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
        [profile]
        k = 1.0
        n_clad = 1.0
        layers = [{ x_left = -1.0, x_right = 1.0, n = 1.5 }]
    "#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = RunConfig::from_toml_str(BASE).unwrap();
        assert_eq!(c.radcheck.rungs, 12);
        assert_eq!(c.solver.settings.max_iter, 200);
        assert!(c.profile.build().unwrap().is_symmetric_cladding());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let t = format!("{BASE}\nbogus = 1\n");
        assert!(matches!(RunConfig::from_toml_str(&t), Err(Error::Config(_))));
        let t = format!("{BASE}\n[solver]\ntol = 1e-9\ntolerance = 1\n");
        assert!(RunConfig::from_toml_str(&t).is_err());
        let t = format!("{BASE}\n[source]\nkind = \"gaussian\"\nsigma = 0.3\nsigmaa = 1\n");
        assert!(RunConfig::from_toml_str(&t).is_err());
    }

    #[test]
    fn field_families_and_validation() {
        let t = format!("{BASE}\n[grid]\nx = [-2.0, 2.0]\nnx = 40\nz = [-2.0, 2.0]\nnz = 40\n[source]\nkind = \"point\"\nwidth = 0.1\n[solver]\ntol = 1e-9\n");
        let c = RunConfig::from_toml_str(&t).unwrap();
        assert_eq!(c.solver.settings.tol, 1e-9);
        let g = c.grid().unwrap();
        let f = c.source_field(g).unwrap();
        let mass: f64 = f.values.iter().map(|v| v.re).sum::<f64>() * g.cell_area();
        assert!((mass - 1.0).abs() < 1e-3, "{mass}");
        let bad = format!("{BASE}\n[perturbation]\nkind = \"bump\"\nradius = -1.0\n");
        assert!(RunConfig::from_toml_str(&bad).is_err());
    }
}
