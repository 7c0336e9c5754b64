//! Complex fields sampled at the cell midpoints of a uniform tensor grid, the
//! guided/radiating decomposition and the `psi` sources.
//!
//! Samples are stored x-major: node `(ix, iz)` lives at `ix * nz + iz`.
//!
//! # Binary container
//!
//! All numbers little-endian.
//!
//! ```text
//! offset  size  content
//!      0     8  magic "SLABFLD1"
//!      8     4  u32 format version (1)
//!     12     4  u32 role tag (see FieldRole::tag)
//!     16     8  u64 nx
//!     24     8  u64 nz
//!     32     8  f64 x_min
//!     40     8  f64 x_max
//!     48     8  f64 z_min
//!     56     8  f64 z_max
//!     64  16*N  N = nx*nz pairs (re, im) of f64, x-major
//! ```

use crate::modes::GuidedMode;
use crate::{Error, Result};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

const MAGIC: &[u8; 8] = b"SLABFLD1";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 64;

/// Tensor grid of cell midpoints over `[x_min, x_max] x [z_min, z_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub z_min: f64,
    pub z_max: f64,
    pub nz: usize,
}

impl Grid2D {
    pub fn new(x_range: (f64, f64), nx: usize, z_range: (f64, f64), nz: usize) -> Result<Self> {
        let ok = |a: f64, b: f64| a.is_finite() && b.is_finite() && b > a;
        if !ok(x_range.0, x_range.1) || !ok(z_range.0, z_range.1) {
            return Err(Error::InvalidGeometry(format!("grid ranges must be increasing: {x_range:?}, {z_range:?}")));
        }
        if nx == 0 || nz == 0 {
            return Err(Error::InvalidGeometry("grid needs at least one node per axis".into()));
        }
        Ok(Self { x_min: x_range.0, x_max: x_range.1, nx, z_min: z_range.0, z_max: z_range.1, nz })
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.nx as f64
    }

    pub fn dz(&self) -> f64 {
        (self.z_max - self.z_min) / self.nz as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dz()
    }

    pub fn x(&self, ix: usize) -> f64 {
        self.x_min + (ix as f64 + 0.5) * self.dx()
    }

    pub fn z(&self, iz: usize) -> f64 {
        self.z_min + (iz as f64 + 0.5) * self.dz()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    pub fn zs(&self) -> Vec<f64> {
        (0..self.nz).map(|i| self.z(i)).collect()
    }

    pub fn len(&self) -> usize {
        self.nx * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, ix: usize, iz: usize) -> usize {
        ix * self.nz + iz
    }

    pub fn node(&self, idx: usize) -> (f64, f64) {
        (self.x(idx / self.nz), self.z(idx % self.nz))
    }

    /// Same spacing and origin, within round-off.
    pub fn aligned_with(&self, other: &Grid2D) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()));
        self.nx == other.nx
            && self.nz == other.nz
            && close(self.x_min, other.x_min)
            && close(self.x_max, other.x_max)
            && close(self.z_min, other.z_min)
            && close(self.z_max, other.z_max)
    }
}

/// What a field represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldRole {
    Solution,
    Source,
    Perturbation,
    Guided(usize),
    Radiating,
    Psi(usize),
    Other,
}

impl FieldRole {
    /// Tag stored in the container: 0 solution, 1 source, 2 perturbation,
    /// 3 radiating, 4 other, `100 + l` guided component, `200 + l` psi source.
    pub fn tag(self) -> u32 {
        match self {
            FieldRole::Solution => 0,
            FieldRole::Source => 1,
            FieldRole::Perturbation => 2,
            FieldRole::Radiating => 3,
            FieldRole::Other => 4,
            FieldRole::Guided(l) => 100 + l as u32,
            FieldRole::Psi(l) => 200 + l as u32,
        }
    }

    pub fn from_tag(t: u32) -> Result<Self> {
        Ok(match t {
            0 => FieldRole::Solution,
            1 => FieldRole::Source,
            2 => FieldRole::Perturbation,
            3 => FieldRole::Radiating,
            4 => FieldRole::Other,
            100..=199 => FieldRole::Guided((t - 100) as usize),
            200..=299 => FieldRole::Psi((t - 200) as usize),
            _ => return Err(Error::Format(format!("unknown role tag {t}"))),
        })
    }
}

/// Complex samples on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    pub grid: Grid2D,
    pub values: Vec<Complex64>,
    pub role: FieldRole,
}

impl Field2D {
    pub fn zeros(grid: Grid2D, role: FieldRole) -> Self {
        Self { grid, values: vec![Complex64::new(0.0, 0.0); grid.len()], role }
    }

    pub fn from_values(grid: Grid2D, values: Vec<Complex64>, role: FieldRole) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} values for {} nodes", values.len(), grid.len())));
        }
        Ok(Self { grid, values, role })
    }

    pub fn from_fn<F>(grid: Grid2D, role: FieldRole, f: F) -> Self
    where
        F: Fn(f64, f64) -> Complex64 + Sync,
    {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let (x, z) = grid.node(i);
                f(x, z)
            })
            .collect();
        Self { grid, values, role }
    }

    pub fn at(&self, ix: usize, iz: usize) -> Complex64 {
        self.values[self.grid.index(ix, iz)]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, a: Complex64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|v| a * v).collect(), role: self.role }
    }

    pub fn with_role(mut self, role: FieldRole) -> Self {
        self.role = role;
        self
    }

    pub fn conj(&self) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|v| v.conj()).collect(), role: self.role }
    }

    fn check_aligned(&self, other: &Field2D) -> Result<()> {
        if self.grid.aligned_with(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{:?} vs {:?}", self.grid, other.grid)))
        }
    }

    /// Pointwise `f(a, b)`.
    pub fn zip_with<F>(&self, other: &Field2D, role: FieldRole, f: F) -> Result<Field2D>
    where
        F: Fn(Complex64, Complex64) -> Complex64,
    {
        self.check_aligned(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| f(*a, *b)).collect();
        Ok(Field2D { grid: self.grid, values, role })
    }

    pub fn sub(&self, other: &Field2D) -> Result<Field2D> {
        self.zip_with(other, self.role, |a, b| a - b)
    }

    pub fn add(&self, other: &Field2D) -> Result<Field2D> {
        self.zip_with(other, self.role, |a, b| a + b)
    }

    /// `sup |a - b|`.
    pub fn max_difference(&self, other: &Field2D) -> Result<f64> {
        self.check_aligned(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
    }

    /// Columns `ix` holding at least one sample above `threshold`.
    pub fn nonzero_columns(&self, threshold: f64) -> Vec<usize> {
        let nz = self.grid.nz;
        (0..self.grid.nx)
            .filter(|&ix| self.values[ix * nz..(ix + 1) * nz].iter().any(|v| v.norm() > threshold))
            .collect()
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let g = &self.grid;
        let mut head = Vec::with_capacity(HEADER_LEN);
        head.extend_from_slice(MAGIC);
        head.extend_from_slice(&VERSION.to_le_bytes());
        head.extend_from_slice(&self.role.tag().to_le_bytes());
        head.extend_from_slice(&(g.nx as u64).to_le_bytes());
        head.extend_from_slice(&(g.nz as u64).to_le_bytes());
        for v in [g.x_min, g.x_max, g.z_min, g.z_max] {
            head.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&head)?;
        let mut body = Vec::with_capacity(16 * self.values.len());
        for v in &self.values {
            body.extend_from_slice(&v.re.to_le_bytes());
            body.extend_from_slice(&v.im.to_le_bytes());
        }
        w.write_all(&body)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut head = [0u8; HEADER_LEN];
        r.read_exact(&mut head).map_err(|e| Error::Format(format!("header: {e}")))?;
        if &head[0..8] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(head[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(head[o..o + 8].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(head[o..o + 8].try_into().unwrap());
        let version = u32_at(8);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let role = FieldRole::from_tag(u32_at(12))?;
        let (nx, nz) = (u64_at(16) as usize, u64_at(24) as usize);
        let grid = Grid2D::new((f64_at(32), f64_at(40)), nx, (f64_at(48), f64_at(56)), nz)
            .map_err(|e| Error::Format(e.to_string()))?;
        let mut body = vec![0u8; 16 * grid.len()];
        r.read_exact(&mut body).map_err(|e| Error::Format(format!("payload: {e}")))?;
        let values = body
            .chunks_exact(16)
            .map(|c| {
                Complex64::new(
                    f64::from_le_bytes(c[0..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..16].try_into().unwrap()),
                )
            })
            .collect();
        Ok(Field2D { grid, values, role })
    }

    /// Rows `x,z,re,im`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        use crate::csv::fmt;
        writeln!(w, "x,z,re,im")?;
        for (i, v) in self.values.iter().enumerate() {
            let (x, z) = self.grid.node(i);
            writeln!(w, "{},{},{},{}", fmt(x), fmt(z), fmt(v.re), fmt(v.im))?;
        }
        Ok(())
    }
}

/// Mass of `e^2` outside `[a, b]` from the exact exponential tails.
pub fn mode_tail_mass(mode: &GuidedMode, a: f64, b: f64) -> f64 {
    let h = mode.h();
    let right = if b > h { mode.eval(b).powi(2) / (2.0 * mode.sigma_plus) } else { f64::INFINITY };
    let left = if a < -h { mode.eval(a).powi(2) / (2.0 * mode.sigma_minus) } else { f64::INFINITY };
    right + left
}

const TAIL_LIMIT: f64 = 1e-8;

/// Per-row coefficients `c(z) = sum_x w e(x) u(x, z) / sum_x w e(x)^2`.
///
/// The denominator is the discrete norm of the sampled mode, which makes
/// `u -> e c` an exact projection on the grid.
pub fn modal_coefficients(u: &Field2D, mode: &GuidedMode) -> Result<Vec<Complex64>> {
    let g = &u.grid;
    let tail = mode_tail_mass(mode, g.x_min, g.x_max);
    if tail > TAIL_LIMIT {
        return Err(Error::ExtentTooSmall(format!(
            "mode {} loses {tail:e} of its mass outside x in [{}, {}]",
            mode.index, g.x_min, g.x_max
        )));
    }
    let e: Vec<f64> = g.xs().iter().map(|&x| mode.eval(x)).collect();
    let norm: f64 = e.iter().map(|v| v * v).sum();
    let mut c = vec![Complex64::new(0.0, 0.0); g.nz];
    for (ix, ev) in e.iter().enumerate() {
        let col = &u.values[ix * g.nz..(ix + 1) * g.nz];
        for (acc, v) in c.iter_mut().zip(col) {
            *acc += v * *ev;
        }
    }
    for v in &mut c {
        *v /= norm;
    }
    Ok(c)
}

/// `u_l(x, z) = e(x) int u(xi, z) e(xi) dxi`.
pub fn project_guided(u: &Field2D, mode: &GuidedMode) -> Result<Field2D> {
    let c = modal_coefficients(u, mode)?;
    let g = u.grid;
    let mut out = Field2D::zeros(g, FieldRole::Guided(mode.index));
    for ix in 0..g.nx {
        let ev = mode.eval(g.x(ix));
        for iz in 0..g.nz {
            out.values[ix * g.nz + iz] = c[iz] * ev;
        }
    }
    Ok(out)
}

/// `u_0 = u - sum_l u_l`.
pub fn radiating_part(u: &Field2D, modes: &[GuidedMode]) -> Result<Field2D> {
    let mut out = u.clone().with_role(FieldRole::Radiating);
    for m in modes {
        let ul = project_guided(u, m)?;
        for (a, b) in out.values.iter_mut().zip(&ul.values) {
            *a -= b;
        }
    }
    Ok(out)
}

/// `[psi_0, psi_1, ..., psi_M]` for the product `p u`.
pub fn psi_sources(p: &Field2D, u: &Field2D, modes: &[GuidedMode]) -> Result<Vec<Field2D>> {
    let pu = p.zip_with(u, FieldRole::Psi(0), |a, b| a * b)?;
    let mut out = Vec::with_capacity(modes.len() + 1);
    let mut psi0 = pu.clone();
    let mut guided = Vec::with_capacity(modes.len());
    for m in modes {
        let psi = project_guided(&pu, m)?.with_role(FieldRole::Psi(m.index));
        for (a, b) in psi0.values.iter_mut().zip(&psi.values) {
            *a -= b;
        }
        guided.push(psi);
    }
    out.push(psi0);
    out.extend(guided);
    Ok(out)
}
