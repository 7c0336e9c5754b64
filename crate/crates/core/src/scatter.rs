//! Hypothesis checks on the perturbation and the fixed-point solve of
//! `u = int G (f - p u)`.

use crate::fields::{Field2D, FieldRole};
use crate::geometry::{bracket_x, stadium_boundary, Boundary};
use crate::green::{GreenKernel, KernelPart};
use crate::operator::GridOperator;
use crate::quadrature::fit_line;
use crate::{Error, Result};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

type C = Complex64;

/// Samples at or below this fraction of the sup norm count as zero.
pub const SUPPORT_THRESHOLD: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct H1Report {
    pub ok: bool,
    /// Largest `|x|` of a nonzero sample.
    pub x0: f64,
}

pub fn check_h1(field: &Field2D) -> H1Report {
    let g = &field.grid;
    let cols = field.nonzero_columns(SUPPORT_THRESHOLD);
    let x0 = cols.iter().map(|&i| g.x(i).abs()).fold(0.0, f64::max);
    // support touching the outer column may continue beyond the grid
    let ok = !cols.iter().any(|&i| i == 0 || i + 1 == g.nx);
    H1Report { ok, x0 }
}

/// Grid nodes where `|p|` exceeds the support threshold.
pub fn support_nodes(p: &Field2D) -> Vec<usize> {
    let cut = SUPPORT_THRESHOLD * p.sup_norm();
    (0..p.values.len()).filter(|&i| p.values[i].norm() > cut).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct H2Probes {
    /// Grid nodes: the support box plus a margin, every 4th node per direction.
    pub nodes: Vec<usize>,
    /// Points on the stadium of twice the support radius.
    pub far: Vec<(f64, f64)>,
    pub far_radius: f64,
}

/// Default probe set: support box widened by 4 cells and coarsened 4x, plus 16
/// points on `dOmega` at twice the support radius.
pub fn default_h2_probes(p: &Field2D, h: f64) -> Result<H2Probes> {
    let g = &p.grid;
    let supp = support_nodes(p);
    if supp.is_empty() {
        return Ok(H2Probes { nodes: vec![], far: vec![], far_radius: 0.0 });
    }
    let (nz, margin, stride) = (g.nz, 4, 4);
    let (mut i0, mut i1, mut j0, mut j1) = (usize::MAX, 0, usize::MAX, 0);
    let mut radius: f64 = 0.0;
    for &t in &supp {
        let (i, j) = (t / nz, t % nz);
        i0 = i0.min(i);
        i1 = i1.max(i);
        j0 = j0.min(j);
        j1 = j1.max(j);
        radius = radius.max(bracket_x(g.x(i), h).hypot(g.z(j)));
    }
    let (i0, i1) = (i0.saturating_sub(margin), (i1 + margin).min(g.nx - 1));
    let (j0, j1) = (j0.saturating_sub(margin), (j1 + margin).min(g.nz - 1));
    let mut nodes = Vec::new();
    for i in (i0..=i1).step_by(stride) {
        for j in (j0..=j1).step_by(stride) {
            nodes.push(g.index(i, j));
        }
    }
    // every support node is within stride/2 cells of a probe; add the support peak too
    let peak = supp.iter().copied().max_by(|a, b| p.values[*a].norm().total_cmp(&p.values[*b].norm())).unwrap();
    if !nodes.contains(&peak) {
        nodes.push(peak);
    }
    let far_radius = 2.0 * radius.max(g.dx().max(g.dz()));
    let far = (0..16)
        .map(|j| {
            let (s, c) = (std::f64::consts::PI * j as f64 / 8.0).sin_cos();
            (h.copysign(c) + far_radius * c, far_radius * s)
        })
        .collect();
    Ok(H2Probes { nodes, far, far_radius })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct H2Estimate {
    /// Largest `int |G(x, z; probe)| |p(x, z)| dx dz` over the probes.
    pub norm: f64,
    pub argmax: (f64, f64),
    /// Largest value over the far ring alone.
    pub far_max: f64,
    pub support_probes: usize,
    pub far_probes: usize,
}

impl H2Estimate {
    pub fn ok(&self) -> bool {
        self.norm < 1.0
    }
}

/// Measures the contraction constant of the perturbation. Grid probes use the
/// tabulated cell integrals of `op` (which must cover the columns of `p`); far
/// probes use the pointwise kernel against `p` summed over 4x4 cell blocks.
pub fn estimate_h2_norm(kernel: &GreenKernel, op: &GridOperator, p: &Field2D, probes: &H2Probes) -> Result<H2Estimate> {
    let g = &p.grid;
    let mut best = (0.0, (0.0, 0.0));
    if !probes.nodes.is_empty() {
        let vals = op.abs_apply_at(p, &probes.nodes)?;
        for (v, &t) in vals.iter().zip(&probes.nodes) {
            if *v > best.0 {
                best = (*v, g.node(t));
            }
        }
    }
    let blocks = coarse_blocks(p, 4);
    let far_vals: Vec<f64> = probes
        .far
        .par_iter()
        .map(|&(x, z)| {
            blocks.iter().map(|&(xi, zeta, m)| Ok(kernel.total(x, z, xi, zeta)?.norm() * m)).sum::<Result<f64>>()
        })
        .collect::<Result<_>>()?;
    let mut far_max: f64 = 0.0;
    for (v, &pt) in far_vals.iter().zip(&probes.far) {
        far_max = far_max.max(*v);
        if *v > best.0 {
            best = (*v, pt);
        }
    }
    Ok(H2Estimate {
        norm: best.0,
        argmax: best.1,
        far_max,
        support_probes: probes.nodes.len(),
        far_probes: probes.far.len(),
    })
}

/// `|p|` integrated over `b x b` cell blocks, placed at the block's |p|-weighted centre.
fn coarse_blocks(p: &Field2D, b: usize) -> Vec<(f64, f64, f64)> {
    let g = &p.grid;
    let area = g.cell_area();
    let mut out = Vec::new();
    for bi in (0..g.nx).step_by(b) {
        for bj in (0..g.nz).step_by(b) {
            let (mut m, mut mx, mut mz) = (0.0, 0.0, 0.0);
            for i in bi..(bi + b).min(g.nx) {
                for j in bj..(bj + b).min(g.nz) {
                    let a = p.at(i, j).norm() * area;
                    m += a;
                    mx += a * g.x(i);
                    mz += a * g.z(j);
                }
            }
            if m > 0.0 {
                out.push((mx / m, mz / m, m));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct H3Report {
    pub ok: bool,
    /// `delta` from the fitted decay; `None` when every boundary integral
    /// vanishes (compact support), which counts as `delta = infinity`.
    pub delta: Option<f64>,
    pub c1: Option<f64>,
    pub slope: Option<f64>,
    /// `(R, int_{dOmega_R} |p|^2 dl)`.
    pub table: Vec<(f64, f64)>,
}

/// Boundary integrals of `|p|^2` on the stadia of the ladder and the fit
/// `c_1 R^{-(3 + 2 delta)}`. The field is read as constant on each cell and as
/// zero outside the grid in `x`, which needs (H1).
pub fn check_h3(p: &Field2D, h: f64, radii: &[f64]) -> Result<H3Report> {
    let g = &p.grid;
    if radii.len() < 4 {
        return Err(Error::InvalidGeometry(format!("ladder needs at least 4 radii, got {}", radii.len())));
    }
    if radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidGeometry("radii must be strictly increasing".into()));
    }
    let z_reach = g.z_min.abs().min(g.z_max.abs());
    if radii.last().copied().unwrap_or(0.0) > z_reach {
        return Err(Error::ExtentTooSmall(format!("largest radius exceeds the grid's z-extent {z_reach}")));
    }
    if !check_h1(p).ok {
        return Err(Error::ExtentTooSmall("field does not vanish at the x-edges of the grid".into()));
    }
    let step = g.dx().min(g.dz());
    let mut table = Vec::with_capacity(radii.len());
    for &r in radii {
        let perimeter = 2.0 * std::f64::consts::PI * r + 4.0 * h;
        let n = ((8.0 * perimeter / step).ceil() as usize).max(256);
        let st = stadium_boundary(r, h, n)?;
        let v = st.integrate(|node| cell_value(p, node.x, node.z).norm_sqr());
        table.push((r, v));
    }
    let peak = table.iter().map(|t| t.1).fold(0.0, f64::max);
    let pts: Vec<(f64, f64)> =
        table.iter().filter(|t| t.1 > 1e-300 && t.1 > 1e-14 * peak).map(|t| (t.0.ln(), t.1.ln())).collect();
    if pts.len() < 2 {
        return Ok(H3Report { ok: true, delta: None, c1: None, slope: None, table });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let (s, b) = fit_line(&xs, &ys).ok_or_else(|| Error::InvalidGeometry("degenerate ladder".into()))?;
    let delta = (-s - 3.0) / 2.0;
    Ok(H3Report { ok: delta > 0.5, delta: Some(delta), c1: Some(b.exp()), slope: Some(s), table })
}

fn cell_value(p: &Field2D, x: f64, z: f64) -> C {
    let g = &p.grid;
    let fx = (x - g.x_min) / g.dx();
    let fz = (z - g.z_min) / g.dz();
    if fx < 0.0 || fz < 0.0 || fx >= g.nx as f64 || fz >= g.nz as f64 {
        return C::new(0.0, 0.0);
    }
    p.at(fx as usize, fz as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Start {
    /// `u^0 = int G f`.
    Born,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSettings {
    /// Sup-norm error bound requested for the solution.
    pub tol: f64,
    pub max_iter: usize,
    /// Run even when the measured (H2) norm is not below one.
    pub forced: bool,
    pub start: Start,
}

impl Default for SolveSettings {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 200, forced: false, start: Start::Born }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub solution: Field2D,
    pub iterates: usize,
    /// `d_{m+1} / d_m` with `d_m` the sup over supp(p) of successive differences.
    pub convergence_ratios: Vec<f64>,
    pub last_difference: f64,
    /// Sup norm over the grid of `u - int G (f - p u)`.
    pub final_residual: f64,
    pub h2_norm_used: f64,
    /// Sup norm of `int G f`.
    pub born_sup: f64,
    pub solution_sup: f64,
    /// `sup |int G f| / (1 - h2)`, when the norm is below one.
    pub neumann_bound: Option<f64>,
    pub unsafe_run: bool,
    pub start: Start,
}

fn masked_product(p: &Field2D, u: &[C], supp: &[usize]) -> Field2D {
    let mut out = Field2D::zeros(p.grid, FieldRole::Source);
    for (k, &t) in supp.iter().enumerate() {
        out.values[t] = p.values[t] * u[k];
    }
    out
}

/// Picard iteration `u^{m+1} = int G (f - p u^m)`. Only values on supp(p) feed
/// back, so iterates are kept there and the full field is formed once at the
/// end. Stops when the sup over supp(p) of successive differences is below
/// `tol (1 - h2)`; since `|u^{m+1} - u^m| <= h2 d_m` everywhere this bounds the
/// error of the returned field by `tol`.
pub fn solve_fixed_point(
    op: &GridOperator,
    f: &Field2D,
    p: &Field2D,
    h2_norm: f64,
    settings: &SolveSettings,
) -> Result<SolveReport> {
    if !f.grid.aligned_with(&op.grid) || !p.grid.aligned_with(&op.grid) {
        return Err(Error::GridMismatch("f, p and the operator must share one grid".into()));
    }
    let unsafe_run = !(h2_norm < 1.0);
    if unsafe_run && !settings.forced {
        return Err(Error::ContractionHypothesis { norm: h2_norm });
    }
    let born = op.apply(f, KernelPart::Total)?;
    let born_sup = born.sup_norm();
    let supp = support_nodes(p);
    let w_s: Vec<C> = supp.iter().map(|&t| born.values[t]).collect();
    let mut u_s = match settings.start {
        Start::Born => w_s.clone(),
        Start::Zero => vec![C::new(0.0, 0.0); supp.len()],
    };
    let target = settings.tol * (1.0 - h2_norm).max(0.0);
    let mut ratios = Vec::new();
    let mut prev: Option<f64> = None;
    let mut growing = 0;
    let mut iterates = 0;
    let mut last;
    loop {
        if iterates >= settings.max_iter {
            return Err(Error::MaxIterations { iterations: iterates });
        }
        iterates += 1;
        let v = if supp.is_empty() {
            vec![]
        } else {
            op.apply_at(&masked_product(p, &u_s, &supp), KernelPart::Total, &supp)?
        };
        let next: Vec<C> = w_s.iter().zip(&v).map(|(w, v)| w - v).collect();
        let d = next.iter().zip(&u_s).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        u_s = next;
        last = d;
        if let Some(dp) = prev {
            if dp > 0.0 {
                let r = d / dp;
                ratios.push(r);
                growing = if r > 1.0 { growing + 1 } else { 0 };
                if growing >= 3 {
                    return Err(Error::NonContraction { ratios });
                }
            }
        }
        prev = Some(d);
        if d <= target || d <= 1e-15 * born_sup {
            break;
        }
    }
    let solution =
        born.sub(&op.apply(&masked_product(p, &u_s, &supp), KernelPart::Total)?)?.with_role(FieldRole::Solution);
    let u_supp: Vec<C> = supp.iter().map(|&t| solution.values[t]).collect();
    let check = op.apply(&masked_product(p, &u_supp, &supp), KernelPart::Total)?;
    let final_residual = solution
        .values
        .iter()
        .zip(&born.values)
        .zip(&check.values)
        .map(|((u, w), c)| (u - w + c).norm())
        .fold(0.0, f64::max);
    let solution_sup = solution.sup_norm();
    Ok(SolveReport {
        solution,
        iterates,
        convergence_ratios: ratios,
        last_difference: last,
        final_residual,
        h2_norm_used: h2_norm,
        born_sup,
        solution_sup,
        neumann_bound: (h2_norm < 1.0).then(|| born_sup / (1.0 - h2_norm)),
        unsafe_run,
        start: settings.start,
    })
}

/// Columns an operator must tabulate to apply `G` to `f - p u`.
pub fn source_columns(f: &Field2D, p: &Field2D) -> Vec<usize> {
    let mut cols = f.nonzero_columns(0.0);
    cols.extend(p.nonzero_columns(0.0));
    cols.sort_unstable();
    cols.dedup();
    cols
}

#[derive(Debug, Clone, Serialize)]
pub struct UniquenessCheck {
    pub difference: f64,
    pub bound: f64,
    pub ok: bool,
}

/// Solves from both starts and compares: the fields must agree within
/// `2 tol / (1 - h2)`.
pub fn uniqueness_proxy(
    op: &GridOperator,
    f: &Field2D,
    p: &Field2D,
    h2_norm: f64,
    settings: &SolveSettings,
) -> Result<(SolveReport, SolveReport, UniquenessCheck)> {
    let a = solve_fixed_point(op, f, p, h2_norm, &SolveSettings { start: Start::Born, ..*settings })?;
    let b = solve_fixed_point(op, f, p, h2_norm, &SolveSettings { start: Start::Zero, ..*settings })?;
    let difference = a.solution.max_difference(&b.solution)?;
    let bound = 2.0 * settings.tol / (1.0 - h2_norm).max(f64::MIN_POSITIVE);
    Ok((a, b, UniquenessCheck { difference, bound, ok: difference <= bound }))
}
