//! Green representation identities as numerical checks.
//!
//! Radiating part, on the stadium `Omega_R`:
//!
//! ```text
//! u_0(P) + int_{Omega_R} G_0 psi_0 = int_{dOmega_R} (u_0 dG_0/dnu - G_0 du_0/dnu) dl
//! ```
//!
//! Guided part `l`, on the square `Q_R`:
//!
//! ```text
//! e_l(xi) int_{-R}^{R} e_l(s) u(s, zeta) ds + int_{Q_R} G_l psi_l
//!     = int_{dQ_R} (u_l dG_l/dnu - G_l du_l/dnu) dl
//! ```
//!
//! `G` is taken with the boundary point as observer and `P = (xi, zeta)` as source.
//!
//! At finite `R` both identities are off by a line term, because `G_0` and
//! `G_l` are not fundamental solutions on their own and the modes are only
//! orthogonal over the whole line. For the radiating identity it is
//! `sum_l e_l(xi) int_{Omega_R, z = zeta} e_l u_0 ds`, for the guided one
//! `e_l(xi) int_{-R}^{R} e_l (u - u_l)(s, zeta) ds`. It decays with the mode
//! tails and is reported as `line_defect`, so `residual - line_defect` is pure
//! quadrature error.

use crate::fields::Field2D;
use crate::geometry::{flattened_distance, square_boundary_split, stadium_boundary_split, DEFAULT_ORDER};
use crate::green::{GreenKernel, KernelPart};
use crate::operator::GridOperator;
use crate::probe::FieldProbe;
use crate::quadrature::GaussRule;
use crate::{Error, Result};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

type C = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Identity {
    Radiating,
    Guided(usize),
}

/// Volume sources on the operator's grid: `psi[0]` is `psi_0`, `psi[l]` is `psi_l`.
#[derive(Debug, Clone, Copy)]
pub struct VolumeTerm<'a> {
    pub op: &'a GridOperator,
    pub psi: &'a [Field2D],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RepresentationResidual {
    pub lhs: C,
    pub rhs: C,
    pub residual: C,
    pub line_defect: C,
    /// Target within two grid cells of the boundary.
    pub near_boundary: bool,
}

fn level(which: Identity, x: f64, z: f64, h: f64) -> f64 {
    match which {
        Identity::Radiating => flattened_distance(x, z, h),
        Identity::Guided(_) => x.abs().max(z.abs()),
    }
}

/// Boundary nodes and 16-point panels for the transverse line integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resolution {
    pub boundary_nodes: usize,
    pub line_panels: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Self { boundary_nodes: 512, line_panels: 16 }
    }
}

/// `int_a^b f` with 16-point panels, split at the layer edges inside `(a, b)`.
fn line_integral<F: Fn(f64) -> Result<C>>(a: f64, b: f64, edges: &[f64], panels: usize, f: F) -> Result<C> {
    let rule = GaussRule::new(16);
    let mut cuts = vec![a];
    cuts.extend(edges.iter().copied().filter(|&e| e > a && e < b));
    cuts.push(b);
    let mut acc = C::new(0.0, 0.0);
    for w in cuts.windows(2) {
        for (s, wt) in rule.composite(w[0], w[1], panels.max(1)) {
            acc += wt * f(s)?;
        }
    }
    Ok(acc)
}

/// LHS minus RHS of the chosen identity for the target `(xi, zeta)`.
pub fn representation_residual<P: FieldProbe>(
    kernel: &GreenKernel,
    u: &P,
    which: Identity,
    r: f64,
    target: (f64, f64),
    volume: Option<VolumeTerm>,
    res: Resolution,
) -> Result<RepresentationResidual> {
    let h = kernel.profile.h;
    let (xi, zeta) = target;
    let gap = r - level(which, xi, zeta, h);
    if !(gap > 0.0) {
        return Err(Error::InvalidGeometry(format!("target ({xi}, {zeta}) is not inside the boundary of radius {r}")));
    }
    let part = match which {
        Identity::Radiating => KernelPart::Radiating,
        Identity::Guided(l) => {
            if l == 0 || l > kernel.modes.len() {
                return Err(Error::ModeIndex { index: l, count: kernel.modes.len() });
            }
            KernelPart::Guided(l)
        }
    };
    let edges = [-h, h];
    let panels = res.line_panels;
    let (mut lhs, line_defect) = match which {
        Identity::Radiating => {
            let w = (r * r - zeta * zeta).sqrt();
            let mut defect = C::new(0.0, 0.0);
            for m in &kernel.modes {
                let line = line_integral(-h - w, h + w, &edges, panels, |s| {
                    Ok(m.eval(s) * u.sample(s, zeta, KernelPart::Radiating)?.value)
                })?;
                defect += m.eval(xi) * line;
            }
            (u.sample(xi, zeta, KernelPart::Radiating)?.value, defect)
        }
        Identity::Guided(l) => {
            let m = &kernel.modes[l - 1];
            let (total, own) = (
                line_integral(-r, r, &edges, panels, |s| Ok(m.eval(s) * u.sample(s, zeta, KernelPart::Total)?.value))?,
                line_integral(-r, r, &edges, panels, |s| {
                    Ok(m.eval(s) * u.sample(s, zeta, KernelPart::Guided(l))?.value)
                })?,
            );
            (m.eval(xi) * total, m.eval(xi) * (total - own))
        }
    };
    let mut near_boundary = false;
    if let Some(v) = volume {
        let g = &v.op.grid;
        let l = match which {
            Identity::Radiating => 0,
            Identity::Guided(l) => l,
        };
        let psi = v.psi.get(l).ok_or_else(|| Error::ModeIndex { index: l, count: v.psi.len().saturating_sub(1) })?;
        if !psi.grid.aligned_with(g) {
            return Err(Error::GridMismatch("psi and operator grids differ".into()));
        }
        for (t, val) in psi.values.iter().enumerate() {
            if *val != C::new(0.0, 0.0) {
                let (x, z) = g.node(t);
                if level(which, x, z, h) >= r {
                    return Err(Error::InvalidGeometry(format!("psi is nonzero at ({x}, {z}), outside the region")));
                }
            }
        }
        let ix = ((xi - g.x_min) / g.dx() - 0.5).round();
        let iz = ((zeta - g.z_min) / g.dz() - 0.5).round();
        if ix < 0.0 || iz < 0.0 || ix as usize >= g.nx || iz as usize >= g.nz {
            return Err(Error::GridMismatch("target outside the volume grid".into()));
        }
        let node = g.index(ix as usize, iz as usize);
        let (gx, gz) = g.node(node);
        if (gx - xi).abs() > 1e-9 * g.dx() || (gz - zeta).abs() > 1e-9 * g.dz() {
            return Err(Error::GridMismatch(format!("target ({xi}, {zeta}) is not a grid node")));
        }
        lhs += v.op.apply_at(psi, part, &[node])?[0];
        near_boundary = gap < 2.0 * g.dx().max(g.dz());
    }
    let boundary = match which {
        // G(.; P) has a z-kink along z = zeta
        Identity::Radiating => stadium_boundary_split(r, h, res.boundary_nodes, DEFAULT_ORDER, &[zeta])?.nodes,
        Identity::Guided(_) => square_boundary_split(r, res.boundary_nodes, DEFAULT_ORDER, &[zeta])?.nodes,
    };
    let terms: Vec<C> = boundary
        .par_iter()
        .map(|n| {
            let g = kernel.part_full(part, n.x, n.z, xi, zeta)?;
            let (uv, du) = u.normal_sample(n, part)?;
            Ok(n.w * (uv * g.normal(n.nu_x, n.nu_z) - g.value * du))
        })
        .collect::<Result<_>>()?;
    let rhs: C = terms.iter().sum();
    Ok(RepresentationResidual { lhs, rhs, residual: lhs - rhs, line_defect, near_boundary })
}
