//! Batch evaluation of `int G(x, z; xi, zeta) s(xi, zeta)` for a fixed set of
//! point sources at targets kept away from them.
//!
//! One spectral node set serves every target. Sources are grouped in rows of
//! equal `zeta`; for each node the per-row sums `sum_j phi(xi_j) s_j` are
//! accumulated upward and downward with the phase referenced to the nearest
//! row, so evanescent factors never overflow:
//!
//! ```text
//! D-[q+1] = D-[q] exp(i beta (zeta_q - zeta_{q-1})) + R_q
//! D+[q]   = D+[q+1] exp(i beta (zeta_{q+1} - zeta_q)) + R_q
//! ```
//!
//! The radiating integral is not free-space subtracted; a smooth cut-off
//! `exp(-(u/U)^8)` with `U >= 80 / d_min` limits the evanescent range, which is
//! accurate once targets are at least `d_min` from every source.

use crate::fields::Field2D;
use crate::green::{GreenKernel, KernelPart, KernelValue};
use crate::modes::GuidedMode;
use crate::profile::SlabProfile;
use crate::spectral::{basis, build_nodes, panels_for_phase, SpectralNode, SpectralPlan};
use crate::{Error, Result};
use num_complex::Complex64;
use rayon::prelude::*;

type C = Complex64;

/// Sources grouped by row, rows sorted by `zeta`.
#[derive(Debug, Clone, Default)]
pub struct PointSources {
    pub rows: Vec<(f64, Vec<(f64, C)>)>,
}

impl PointSources {
    /// `(xi, zeta, strength)` triples; zero strengths are dropped.
    pub fn from_points(points: &[(f64, f64, C)]) -> Self {
        let mut pts: Vec<_> = points.iter().copied().filter(|p| p.2 != C::new(0.0, 0.0)).collect();
        pts.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)));
        let mut rows: Vec<(f64, Vec<(f64, C)>)> = Vec::new();
        for (xi, zeta, s) in pts {
            match rows.last_mut() {
                Some((z, r)) if *z == zeta => r.push((xi, s)),
                _ => rows.push((zeta, vec![(xi, s)])),
            }
        }
        Self { rows }
    }

    /// Midpoint-rule sources `area * phi` at every nonzero cell.
    pub fn from_field(phi: &Field2D) -> Self {
        let g = &phi.grid;
        let area = g.cell_area();
        let mut rows = Vec::new();
        for iz in 0..g.nz {
            let row: Vec<(f64, C)> =
                (0..g.nx).map(|ix| (g.x(ix), phi.at(ix, iz) * area)).filter(|p| p.1 != C::new(0.0, 0.0)).collect();
            if !row.is_empty() {
                rows.push((g.z(iz), row));
            }
        }
        Self { rows }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `(x_min, x_max, z_min, z_max)` of the sources.
    pub fn bounds(&self) -> Option<(f64, f64, f64, f64)> {
        let first = self.rows.first()?;
        let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
        for (_, r) in &self.rows {
            for &(x, _) in r {
                x0 = x0.min(x);
                x1 = x1.max(x);
            }
        }
        Some((x0, x1, first.0, self.rows.last().unwrap().0))
    }

    /// Distance from `(x, z)` to the bounding box of the sources.
    pub fn box_distance(&self, x: f64, z: f64) -> f64 {
        match self.bounds() {
            None => f64::INFINITY,
            Some((x0, x1, z0, z1)) => {
                let dx = (x0 - x).max(x - x1).max(0.0);
                let dz = (z0 - z).max(z - z1).max(0.0);
                dx.hypot(dz)
            }
        }
    }
}

/// Prefix/suffix row sums for one longitudinal wavenumber.
#[derive(Debug, Clone)]
struct Sweep<const N: usize> {
    beta: C,
    down: Vec<[C; N]>,
    up: Vec<[C; N]>,
}

impl<const N: usize> Sweep<N> {
    fn new(beta: C, zetas: &[f64], rows: &[[C; N]]) -> Self {
        let q = zetas.len();
        let zero = [C::new(0.0, 0.0); N];
        let mut down = vec![zero; q + 1];
        for m in 0..q {
            let ph = if m == 0 { C::new(0.0, 0.0) } else { (C::i() * beta * (zetas[m] - zetas[m - 1])).exp() };
            for b in 0..N {
                down[m + 1][b] = down[m][b] * ph + rows[m][b];
            }
        }
        let mut up = vec![zero; q + 1];
        for m in (0..q).rev() {
            let ph = if m + 1 == q { C::new(0.0, 0.0) } else { (C::i() * beta * (zetas[m + 1] - zetas[m])).exp() };
            for b in 0..N {
                up[m][b] = up[m + 1][b] * ph + rows[m][b];
            }
        }
        Self { beta, down, up }
    }

    /// `(sum below, sum above)` of `exp(i beta |z - zeta_m|) R_m`; `q` rows lie at or below `z`.
    fn at(&self, zetas: &[f64], q: usize, z: f64) -> ([C; N], [C; N]) {
        let zero = [C::new(0.0, 0.0); N];
        let mut lo = zero;
        let mut hi = zero;
        if q > 0 {
            let ph = (C::i() * self.beta * (z - zetas[q - 1])).exp();
            for b in 0..N {
                lo[b] = self.down[q][b] * ph;
            }
        }
        if q < zetas.len() {
            let ph = (C::i() * self.beta * (zetas[q] - z)).exp();
            for b in 0..N {
                hi[b] = self.up[q][b] * ph;
            }
        }
        (lo, hi)
    }
}

/// Controls for the far-field node set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FarFieldSettings {
    pub order: usize,
    /// Minimum cut-off as a multiple of `k n_cl`.
    pub cutoff_factor: f64,
    /// Cut-off is at least `reach / d_min`.
    pub reach: f64,
    pub panel_factor: usize,
}

impl Default for FarFieldSettings {
    fn default() -> Self {
        Self { order: 16, cutoff_factor: 4.0, reach: 80.0, panel_factor: 2 }
    }
}

/// Evaluator of the potential of fixed point sources.
#[derive(Debug, Clone)]
pub struct FarField {
    profile: SlabProfile,
    modes: Vec<GuidedMode>,
    zetas: Vec<f64>,
    nodes: Vec<SpectralNode>,
    sweeps: Vec<Sweep<2>>,
    guided: Vec<Sweep<1>>,
    min_distance: f64,
    sources: PointSources,
}

impl FarField {
    /// Node set sized for targets at least `min_distance` from the sources
    /// and within `max_distance` of them (and of the core).
    pub fn new(kernel: &GreenKernel, sources: PointSources, min_distance: f64, max_distance: f64) -> Result<Self> {
        Self::with_settings(kernel, sources, min_distance, max_distance, &FarFieldSettings::default())
    }

    pub fn with_settings(
        kernel: &GreenKernel,
        sources: PointSources,
        min_distance: f64,
        max_distance: f64,
        settings: &FarFieldSettings,
    ) -> Result<Self> {
        kernel.require_symmetric()?;
        if !(min_distance > 0.0) || !(max_distance >= min_distance) {
            return Err(Error::InvalidGeometry(format!(
                "need 0 < min_distance <= max_distance, got {min_distance}, {max_distance}"
            )));
        }
        let p = kernel.profile.clone();
        let kn = kernel.cladding_wavenumber();
        let (bx0, bx1, bz0, bz1) = sources.bounds().unwrap_or((0.0, 0.0, 0.0, 0.0));
        let xs_max = bx0.abs().max(bx1.abs()).max(p.h);
        let span = 2.0 * xs_max + max_distance + 2.0 * p.h;
        let zspan = (bz1 - bz0) + max_distance;
        let u_cut = (settings.cutoff_factor * kn).max(settings.reach / min_distance);
        let u_max = 1.7 * u_cut;
        let plan = SpectralPlan {
            order: settings.order,
            propagating_panels: panels_for_phase(kn * (span + zspan), 2) * settings.panel_factor,
            evanescent_panels: panels_for_phase(u_max * span, 2) * settings.panel_factor,
            u_max,
            u_taper: Some(u_cut),
        };
        let nodes = build_nodes(&p, &plan);
        let zetas: Vec<f64> = sources.rows.iter().map(|r| r.0).collect();
        let sweeps = nodes
            .par_iter()
            .map(|nd| {
                let rows: Vec<[C; 2]> = sources
                    .rows
                    .iter()
                    .map(|(_, pts)| {
                        let mut acc = [C::new(0.0, 0.0); 2];
                        for &(xi, s) in pts {
                            let (b, _) = basis(&p, nd, xi);
                            acc[0] += s * b[0];
                            acc[1] += s * b[1];
                        }
                        acc
                    })
                    .collect();
                Sweep::new(nd.beta, &zetas, &rows)
            })
            .collect();
        let guided = kernel
            .modes
            .iter()
            .map(|m| {
                let rows: Vec<[C; 1]> =
                    sources.rows.iter().map(|(_, pts)| [pts.iter().map(|&(xi, s)| s * m.eval(xi)).sum()]).collect();
                Sweep::new(C::new(m.beta, 0.0), &zetas, &rows)
            })
            .collect();
        Ok(Self { profile: p, modes: kernel.modes.clone(), zetas, nodes, sweeps, guided, min_distance, sources })
    }

    pub fn modes(&self) -> &[GuidedMode] {
        &self.modes
    }

    pub fn sources(&self) -> &PointSources {
        &self.sources
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// `q` rows lie strictly below the target and `q_on` at or below it; on a
    /// source row the one-sided z-derivatives are averaged.
    fn radiating(&self, x: f64, z: f64, q: usize, q_on: usize) -> KernelValue {
        let mut acc = KernelValue::default();
        for (nd, sw) in self.nodes.iter().zip(&self.sweeps) {
            let (a, da) = basis(&self.profile, nd, x);
            let (lo, hi) = sw.at(&self.zetas, q_on, z);
            let (lo2, hi2) = if q == q_on { (lo, hi) } else { sw.at(&self.zetas, q, z) };
            let ma = [nd.m[0][0] * a[0] + nd.m[1][0] * a[1], nd.m[0][1] * a[0] + nd.m[1][1] * a[1]];
            let mda = [nd.m[0][0] * da[0] + nd.m[1][0] * da[1], nd.m[0][1] * da[0] + nd.m[1][1] * da[1]];
            let s = [lo[0] + hi[0], lo[1] + hi[1]];
            let d = [0.5 * (lo[0] - hi[0] + lo2[0] - hi2[0]), 0.5 * (lo[1] - hi[1] + lo2[1] - hi2[1])];
            acc.value += nd.weight * (s[0] * ma[0] + s[1] * ma[1]);
            acc.dx += nd.weight * (s[0] * mda[0] + s[1] * mda[1]);
            acc.dz += nd.weight * C::i() * nd.beta * (d[0] * ma[0] + d[1] * ma[1]);
        }
        acc
    }

    fn guided_at(&self, l: usize, x: f64, z: f64, q: usize, q_on: usize) -> KernelValue {
        let m = &self.modes[l - 1];
        let (e, de) = m.eval_with_derivative(x);
        let sw = &self.guided[l - 1];
        let (lo, hi) = sw.at(&self.zetas, q_on, z);
        let (lo2, hi2) = if q == q_on { (lo, hi) } else { sw.at(&self.zetas, q, z) };
        let c = 1.0 / C::new(0.0, 2.0 * m.beta);
        let s = (lo[0] + hi[0]) * c;
        let d = 0.5 * (lo[0] - hi[0] + lo2[0] - hi2[0]);
        KernelValue { value: s * e, dx: s * de, dz: d * c * C::new(0.0, m.beta) * e }
    }

    /// Potential and its gradient at `(x, z)`.
    pub fn eval(&self, x: f64, z: f64, part: KernelPart) -> Result<KernelValue> {
        if self.sources.is_empty() {
            return Ok(KernelValue::default());
        }
        let d = self.sources.box_distance(x, z);
        if d < self.min_distance * (1.0 - 1e-12) {
            return Err(Error::InvalidGeometry(format!(
                "target ({x}, {z}) is {d} from the sources, closer than the planned {}",
                self.min_distance
            )));
        }
        let q = self.zetas.partition_point(|&zz| zz < z);
        let q_on = self.zetas.partition_point(|&zz| zz <= z);
        match part {
            KernelPart::Radiating => Ok(self.radiating(x, z, q, q_on)),
            KernelPart::Guided(l) => {
                if l == 0 || l > self.modes.len() {
                    return Err(Error::ModeIndex { index: l, count: self.modes.len() });
                }
                Ok(self.guided_at(l, x, z, q, q_on))
            }
            KernelPart::Total => {
                let mut acc = self.radiating(x, z, q, q_on);
                for l in 1..=self.modes.len() {
                    acc = acc + self.guided_at(l, x, z, q, q_on);
                }
                Ok(acc)
            }
        }
    }

    /// Parallel evaluation at many targets, in order.
    pub fn eval_many(&self, points: &[(f64, f64)], part: KernelPart) -> Result<Vec<KernelValue>> {
        points.par_iter().map(|&(x, z)| self.eval(x, z, part)).collect()
    }
}
