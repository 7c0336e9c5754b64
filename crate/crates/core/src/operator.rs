//! Discretised volume potential `w(x, z) = int G(x, z; xi, zeta) phi(xi, zeta)`
//! on a midpoint grid, tabulated once per (grid, source columns).
//!
//! The kernel depends on `z - zeta` only, so the radiating part is stored as a
//! table `T[i][j][|m|]` over target columns `i`, source columns `j` and row
//! offsets `m`. Each entry is the integral of `G_0` over one source cell:
//!
//! * free-space part: exact integral of `log(r)/(2 pi)` over the cell plus the
//!   midpoint rule for the bounded remainder when the cell is within a few
//!   cells of the target, midpoint rule otherwise;
//! * spectral correction: midpoint rule in `xi`, exact cell integral of
//!   `exp(i beta |zeta|)` in `zeta`, with a fixed cut-off `U` and the
//!   asymptotic tail beyond it.
//!
//! Guided parts are separable and applied on the fly.

use crate::fields::{Field2D, FieldRole, Grid2D};
use crate::green::{freespace_regular_limit, GreenKernel, KernelPart};
use crate::modes::GuidedMode;
use crate::quadrature::GaussRule;
use crate::special::hankel0;
use crate::spectral::{basis, build_nodes, panels_for_phase, quad_form, subtracted_tail, SpectralPlan};
use crate::{Error, Result};
use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

type C = Complex64;

/// Controls for the tabulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OperatorSettings {
    /// Spectral cut-off `U` as a multiple of `max(k n_cl, sqrt(max |V|))`.
    pub cutoff_factor: f64,
    pub order: usize,
    /// Extra panels on top of the phase-based estimate.
    pub panel_factor: usize,
    /// Cells (per axis) around the target that get the exact log integral.
    pub near_cells: usize,
}

impl Default for OperatorSettings {
    fn default() -> Self {
        Self { cutoff_factor: 64.0, order: 16, panel_factor: 2, near_cells: 2 }
    }
}

/// `int int log(x^2 + y^2) dx dy` primitive.
fn log_primitive(x: f64, y: f64) -> f64 {
    let r2 = x * x + y * y;
    if r2 == 0.0 {
        return 0.0;
    }
    let mut f = x * y * r2.ln() - 3.0 * x * y;
    if x != 0.0 {
        f += x * x * (y / x).atan();
    }
    if y != 0.0 {
        f += y * y * (x / y).atan();
    }
    f
}

/// `int log(r) / (2 pi)` over `[a0, a1] x [b0, b1]`.
pub fn log_rectangle_integral(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    let s = log_primitive(a1, b1) - log_primitive(a0, b1) - log_primitive(a1, b0) + log_primitive(a0, b0);
    s / (4.0 * PI)
}

/// Integral of `exp(i beta |zeta|)` over the cell of height `dz` centred at `m dz`.
fn cell_exponential(beta: C, m: usize, dz: f64) -> C {
    let i = C::i();
    if beta.norm() * dz < 1e-6 {
        return if m == 0 {
            C::new(dz, 0.0) + i * beta * dz * dz / 4.0
        } else {
            (i * beta * (m as f64 * dz)).exp() * dz
        };
    }
    if m == 0 {
        2.0 * ((i * beta * 0.5 * dz).exp() - 1.0) / (i * beta)
    } else {
        (i * beta * (m as f64 * dz)).exp() * 2.0 * (beta * 0.5 * dz).sin() / beta
    }
}

#[derive(Debug, Clone)]
struct GuidedTable {
    /// `e(x_i)` on every grid column.
    e: Vec<f64>,
    /// `dx * cell integral of exp(i beta |zeta|) / (2 i beta)`, per `|m|`.
    kernel: Vec<C>,
}

/// Tabulated volume potential for sources confined to a set of grid columns.
#[derive(Debug, Clone)]
pub struct GridOperator {
    pub grid: Grid2D,
    pub source_columns: Vec<usize>,
    col_slot: Vec<Option<usize>>,
    radiating: Vec<C>,
    guided: Vec<GuidedTable>,
}

impl GridOperator {
    pub fn build(kernel: &GreenKernel, grid: &Grid2D, source_columns: &[usize]) -> Result<Self> {
        Self::build_with(kernel, grid, source_columns, &OperatorSettings::default())
    }

    pub fn build_with(
        kernel: &GreenKernel,
        grid: &Grid2D,
        source_columns: &[usize],
        settings: &OperatorSettings,
    ) -> Result<Self> {
        kernel.require_symmetric()?;
        let mut cols = source_columns.to_vec();
        cols.sort_unstable();
        cols.dedup();
        if cols.iter().any(|&c| c >= grid.nx) {
            return Err(Error::GridMismatch("source column outside the grid".into()));
        }
        let mut col_slot = vec![None; grid.nx];
        for (jj, &c) in cols.iter().enumerate() {
            col_slot[c] = Some(jj);
        }
        let radiating = if cols.is_empty() { Vec::new() } else { radiating_table(kernel, grid, &cols, settings) };
        let guided = kernel.modes.iter().map(|m| guided_table(m, grid)).collect();
        Ok(Self { grid: *grid, source_columns: cols, col_slot, radiating, guided })
    }

    pub fn mode_count(&self) -> usize {
        self.guided.len()
    }

    /// Table entry: integral of `G_0(x_i, 0; ., .)` over source cell `(j, m)`.
    pub fn radiating_entry(&self, i: usize, j: usize, m: usize) -> Option<C> {
        let jj = self.col_slot[j]?;
        Some(self.radiating[(i * self.source_columns.len() + jj) * self.grid.nz + m])
    }

    fn check_source(&self, src: &Field2D) -> Result<()> {
        if !src.grid.aligned_with(&self.grid) {
            return Err(Error::GridMismatch("source grid differs from the operator grid".into()));
        }
        let nz = self.grid.nz;
        for ix in 0..self.grid.nx {
            if self.col_slot[ix].is_none() && src.values[ix * nz..(ix + 1) * nz].iter().any(|v| *v != C::new(0.0, 0.0))
            {
                return Err(Error::GridMismatch(format!("source is nonzero in column {ix}, which is not tabulated")));
            }
        }
        Ok(())
    }

    /// Nonzero source samples per tabulated column: `(row, value)`.
    fn gather(&self, src: &Field2D) -> Vec<Vec<(usize, C)>> {
        let nz = self.grid.nz;
        self.source_columns
            .iter()
            .map(|&c| {
                src.values[c * nz..(c + 1) * nz]
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != C::new(0.0, 0.0))
                    .map(|(m, v)| (m, *v))
                    .collect()
            })
            .collect()
    }

    fn guided_rows(&self, g: &GuidedTable, src: &Field2D) -> Vec<C> {
        let nz = self.grid.nz;
        let mut proj = vec![C::new(0.0, 0.0); nz];
        for &c in &self.source_columns {
            let e = g.e[c];
            for (p, v) in proj.iter_mut().zip(&src.values[c * nz..(c + 1) * nz]) {
                *p += *v * e;
            }
        }
        let active: Vec<(usize, C)> = proj.iter().copied().enumerate().filter(|(_, v)| v.norm() > 0.0).collect();
        (0..nz).into_par_iter().map(|n| active.iter().map(|&(m, p)| g.kernel[n.abs_diff(m)] * p).sum()).collect()
    }

    fn guided_parts(&self, part: KernelPart) -> Result<Vec<&GuidedTable>> {
        Ok(match part {
            KernelPart::Radiating => vec![],
            KernelPart::Total => self.guided.iter().collect(),
            KernelPart::Guided(l) => {
                if l == 0 || l > self.guided.len() {
                    return Err(Error::ModeIndex { index: l, count: self.guided.len() });
                }
                vec![&self.guided[l - 1]]
            }
        })
    }

    /// `w` at the listed grid nodes.
    pub fn apply_at(&self, src: &Field2D, part: KernelPart, targets: &[usize]) -> Result<Vec<C>> {
        self.check_source(src)?;
        let nz = self.grid.nz;
        let nc = self.source_columns.len();
        let with_radiating = !matches!(part, KernelPart::Guided(_));
        let cols = if with_radiating { self.gather(src) } else { Vec::new() };
        let guided: Vec<(&GuidedTable, Vec<C>)> =
            self.guided_parts(part)?.into_iter().map(|g| (g, self.guided_rows(g, src))).collect();
        let out = targets
            .par_iter()
            .map(|&t| {
                let (i, n) = (t / nz, t % nz);
                let mut acc = C::new(0.0, 0.0);
                for (jj, col) in cols.iter().enumerate() {
                    let base = (i * nc + jj) * nz;
                    let row = &self.radiating[base..base + nz];
                    for &(m, v) in col {
                        acc += row[n.abs_diff(m)] * v;
                    }
                }
                for (g, q) in &guided {
                    acc += q[n] * g.e[i];
                }
                acc
            })
            .collect();
        Ok(out)
    }

    /// `w` on the whole grid.
    pub fn apply(&self, src: &Field2D, part: KernelPart) -> Result<Field2D> {
        let all: Vec<usize> = (0..self.grid.len()).collect();
        let values = self.apply_at(src, part, &all)?;
        let role = match part {
            KernelPart::Radiating => FieldRole::Radiating,
            KernelPart::Guided(l) => FieldRole::Guided(l),
            KernelPart::Total => FieldRole::Solution,
        };
        Field2D::from_values(self.grid, values, role)
    }

    /// `sum |int_cell G| |weight|` at the listed nodes: the discrete form of
    /// `int |G p|` with the target as the fixed point.
    pub fn abs_apply_at(&self, weights: &Field2D, targets: &[usize]) -> Result<Vec<f64>> {
        self.check_source(weights)?;
        let nz = self.grid.nz;
        let nc = self.source_columns.len();
        let cols = self.gather(weights);
        Ok(targets
            .par_iter()
            .map(|&t| {
                let (i, n) = (t / nz, t % nz);
                let mut acc = 0.0;
                for (jj, col) in cols.iter().enumerate() {
                    let c = self.source_columns[jj];
                    let base = (i * nc + jj) * nz;
                    for &(m, v) in col {
                        let d = n.abs_diff(m);
                        let mut g = self.radiating[base + d];
                        for gt in &self.guided {
                            g += gt.kernel[d] * gt.e[i] * gt.e[c];
                        }
                        acc += g.norm() * v.norm();
                    }
                }
                acc
            })
            .collect())
    }
}

fn guided_table(mode: &GuidedMode, grid: &Grid2D) -> GuidedTable {
    let (dx, dz) = (grid.dx(), grid.dz());
    let beta = C::new(mode.beta, 0.0);
    let kernel = (0..grid.nz).map(|m| cell_exponential(beta, m, dz) * dx / (2.0 * C::i() * mode.beta)).collect();
    GuidedTable { e: grid.xs().iter().map(|&x| mode.eval(x)).collect(), kernel }
}

/// `int_cell G_FS` for offsets `(di, dm)` in cells.
fn freespace_table(kn: f64, grid: &Grid2D, near: usize) -> Vec<C> {
    let (dx, dz) = (grid.dx(), grid.dz());
    let (nx, nz) = (grid.nx, grid.nz);
    let area = dx * dz;
    let c0 = freespace_regular_limit(kn);
    (0..nx * nz)
        .into_par_iter()
        .map(|t| {
            let (di, dm) = (t / nz, t % nz);
            let (x, z) = (di as f64 * dx, dm as f64 * dz);
            let r = x.hypot(z);
            if di <= near && dm <= near {
                let log_part = log_rectangle_integral(x - 0.5 * dx, x + 0.5 * dx, z - 0.5 * dz, z + 0.5 * dz);
                let rem = if r == 0.0 { c0 } else { hankel0(kn * r) / C::new(0.0, 4.0) - r.ln() / (2.0 * PI) };
                rem * area + log_part
            } else {
                hankel0(kn * r) / C::new(0.0, 4.0) * area
            }
        })
        .collect()
}

fn radiating_table(kernel: &GreenKernel, grid: &Grid2D, cols: &[usize], settings: &OperatorSettings) -> Vec<C> {
    let p = &kernel.profile;
    let kn = kernel.cladding_wavenumber();
    let (nx, nz, nc) = (grid.nx, grid.nz, cols.len());
    let (dx, dz) = (grid.dx(), grid.dz());
    let xs = grid.xs();
    let src_x: Vec<f64> = cols.iter().map(|&c| xs[c]).collect();

    let vmax = p.core.iter().map(|l| (p.k * p.k * (l.n * l.n - p.n_minus * p.n_minus)).abs()).fold(0.0, f64::max);
    let u_max = settings.cutoff_factor * kn.max(vmax.sqrt());
    let xmax = grid.x_min.abs().max(grid.x_max.abs());
    let span = 2.0 * xmax + 2.0 * p.h;
    let zspan = grid.z_max - grid.z_min;
    let plan = SpectralPlan {
        order: settings.order,
        propagating_panels: panels_for_phase(kn * (span + zspan), 2) * settings.panel_factor,
        evanescent_panels: panels_for_phase(u_max * span, 2) * settings.panel_factor,
        u_max,
        u_taper: None,
    };
    let nodes = build_nodes(p, &plan);
    let nn = nodes.len();

    // node-major basis values
    let phi_t: Vec<Vec<[f64; 2]>> =
        nodes.par_iter().map(|nd| xs.iter().map(|&x| basis(p, nd, x).0).collect()).collect();
    let phi_s: Vec<Vec<[f64; 2]>> =
        nodes.par_iter().map(|nd| src_x.iter().map(|&x| basis(p, nd, x).0).collect()).collect();

    let mut ew_re = Array2::<f64>::zeros((nn, nz));
    let mut ew_im = Array2::<f64>::zeros((nn, nz));
    for (n, nd) in nodes.iter().enumerate() {
        for m in 0..nz {
            let v = nd.weight * cell_exponential(nd.beta, m, dz) * dx;
            ew_re[[n, m]] = v.re;
            ew_im[[n, m]] = v.im;
        }
    }

    let free = freespace_table(kn, grid, settings.near_cells);
    let kappa_u = (u_max * u_max + kn * kn).sqrt();
    let tail_rule = GaussRule::new(8);
    let potential_t: Vec<f64> = xs.iter().map(|&x| p.index_potential(x)).collect();
    let potential_s: Vec<f64> = src_x.iter().map(|&x| p.index_potential(x)).collect();

    let mut table = vec![C::new(0.0, 0.0); nx * nc * nz];
    table.par_chunks_mut(nc * nz).enumerate().for_each(|(i, block)| {
        let x = xs[i];
        let mut s = Array2::<f64>::zeros((nc, nn));
        for (n, nd) in nodes.iter().enumerate() {
            let a = &phi_t[n][i];
            for jj in 0..nc {
                s[[jj, n]] = quad_form(&nd.m, a, &phi_s[n][jj]) - 2.0 * (nd.kappa * (x - src_x[jj])).cos();
            }
        }
        let re = s.dot(&ew_re);
        let im = s.dot(&ew_im);
        for jj in 0..nc {
            let j = cols[jj];
            let di = i.abs_diff(j);
            let dphi = potential_t[i] - potential_s[jj];
            let xsep = x - src_x[jj];
            for m in 0..nz {
                let mut v = C::new(re[[jj, m]], im[[jj, m]]) + free[di * nz + m];
                if dphi != 0.0 {
                    let zc = m as f64 * dz;
                    if kappa_u * (zc - dz).max(0.0) < 45.0 {
                        let tail = |z: f64| subtracted_tail(dphi, 0.0, xsep, z, kappa_u).0;
                        let t = if m == 0 {
                            2.0 * tail_rule.on(0.0, 0.5 * dz).map(|(z, w)| w * tail(z)).sum::<f64>()
                        } else if m == 1 {
                            tail_rule.on(zc - 0.5 * dz, zc + 0.5 * dz).map(|(z, w)| w * tail(z)).sum::<f64>()
                        } else {
                            dz * tail(zc)
                        };
                        v += t * dx;
                    }
                }
                block[jj * nz + m] = v;
            }
        }
    });
    table
}
