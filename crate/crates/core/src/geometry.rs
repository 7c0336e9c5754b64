//! Flattened-distance geometry of the slab: `[x]_h`, the stadium sets
//! `{[x]_h^2 + z^2 <= R^2}`, the squares `max(|x|,|z|) <= R`, and arc-length
//! quadrature on their boundaries.

use crate::quadrature::GaussRule;
use crate::{Error, Result};
use std::f64::consts::PI;
use std::fmt::Write as _;

/// `[x]_h`: `x + h` left of the core, `0` inside it, `x - h` right of it.
pub fn bracket_x(x: f64, h: f64) -> f64 {
    if x < -h {
        x + h
    } else if x > h {
        x - h
    } else {
        0.0
    }
}

/// `{x}_h = x - [x]_h`, the clamp of `x` to `[-h, h]`.
pub fn frac_x(x: f64, h: f64) -> f64 {
    x - bracket_x(x, h)
}

/// Flattened distance `d(x, z) = sqrt([x]_h^2 + z^2)` whose level sets are the stadium boundaries.
pub fn flattened_distance(x: f64, z: f64, h: f64) -> f64 {
    bracket_x(x, h).hypot(z)
}

/// Gradient of [`flattened_distance`]; unit length wherever `d > 0`.
pub fn flattened_distance_gradient(x: f64, z: f64, h: f64) -> Option<(f64, f64)> {
    let bx = bracket_x(x, h);
    let d = bx.hypot(z);
    if d == 0.0 {
        None
    } else {
        Some((bx / d, z / d))
    }
}

/// Which smooth piece of a boundary a node belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    /// Semicircular cap of a stadium.
    Cap,
    /// Flat part `|x| <= h, z = +-R` of a stadium.
    Flat,
    /// Square side `|x| = R`.
    SideX,
    /// Square side `|z| = R`.
    SideZ,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryNode {
    /// Arc length from the start of the parametrisation.
    pub s: f64,
    pub x: f64,
    pub z: f64,
    pub nu_x: f64,
    pub nu_z: f64,
    /// Arc-length weight.
    pub w: f64,
    pub segment: Segment,
}

/// Shared access to boundary quadrature nodes.
pub trait Boundary {
    fn nodes(&self) -> &[BoundaryNode];

    fn radius(&self) -> f64;

    fn length(&self) -> f64 {
        self.nodes().iter().map(|n| n.w).sum()
    }

    fn integrate<F: Fn(&BoundaryNode) -> f64>(&self, f: F) -> f64 {
        self.nodes().iter().map(|n| n.w * f(n)).sum()
    }

    /// CSV rows `s,x,z,nu_x,nu_z,w`.
    fn to_csv(&self) -> String {
        let mut out = String::from("s,x,z,nu_x,nu_z,w\n");
        for n in self.nodes() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                crate::csv::fmt(n.s),
                crate::csv::fmt(n.x),
                crate::csv::fmt(n.z),
                crate::csv::fmt(n.nu_x),
                crate::csv::fmt(n.nu_z),
                crate::csv::fmt(n.w)
            );
        }
        out
    }
}

/// Boundary of the stadium `[x]_h^2 + z^2 <= R^2`, traversed counter-clockwise
/// starting at the bottom of the right cap.
#[derive(Debug, Clone)]
pub struct StadiumBoundary {
    pub r: f64,
    pub h: f64,
    pub nodes: Vec<BoundaryNode>,
}

#[derive(Debug, Clone)]
pub struct SquareBoundary {
    pub r: f64,
    pub nodes: Vec<BoundaryNode>,
}

impl Boundary for StadiumBoundary {
    fn nodes(&self) -> &[BoundaryNode] {
        &self.nodes
    }
    fn radius(&self) -> f64 {
        self.r
    }
}

impl Boundary for SquareBoundary {
    fn nodes(&self) -> &[BoundaryNode] {
        &self.nodes
    }
    fn radius(&self) -> f64 {
        self.r
    }
}

pub const DEFAULT_ORDER: usize = 8;
pub const MIN_NODES: usize = 16;

// number of panels given to a piece of length `len`, at least one
fn panels_for(len: f64, total: f64, n_nodes: usize, order: usize) -> usize {
    ((n_nodes as f64 * len / total / order as f64).round() as usize).max(1)
}

// composite rule on [a, b] with panel edges forced at `cuts`
fn split_composite(rule: &GaussRule, a: f64, b: f64, panels: usize, cuts: &[f64]) -> Vec<(f64, f64)> {
    let mut pts = vec![a];
    pts.extend(cuts.iter().copied().filter(|&c| c > a && c < b));
    pts.push(b);
    pts.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    for w in pts.windows(2) {
        let n = ((panels as f64 * (w[1] - w[0]) / (b - a)).round() as usize).max(1);
        out.extend(rule.composite(w[0], w[1], n));
    }
    out
}

fn check_request(r: f64, n_nodes: usize, order: usize, pieces: usize) -> Result<()> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidGeometry(format!("radius must be positive, got {r}")));
    }
    if order < 4 {
        return Err(Error::InvalidGeometry(format!("panel order {order} places fewer than 4 nodes per piece")));
    }
    if n_nodes < MIN_NODES || n_nodes < 4 * pieces {
        return Err(Error::InvalidGeometry(format!(
            "n_nodes = {n_nodes} too small: need at least {} for {pieces} pieces",
            MIN_NODES.max(4 * pieces)
        )));
    }
    Ok(())
}

pub fn stadium_boundary(r: f64, h: f64, n_nodes: usize) -> Result<StadiumBoundary> {
    stadium_boundary_with_order(r, h, n_nodes, DEFAULT_ORDER)
}

pub fn stadium_boundary_with_order(r: f64, h: f64, n_nodes: usize, order: usize) -> Result<StadiumBoundary> {
    stadium_boundary_split(r, h, n_nodes, order, &[])
}

/// Stadium whose cap panels also break where the caps cross the levels `z_breaks`,
/// for integrands with a kink along a horizontal line.
pub fn stadium_boundary_split(
    r: f64,
    h: f64,
    n_nodes: usize,
    order: usize,
    z_breaks: &[f64],
) -> Result<StadiumBoundary> {
    if !(h >= 0.0) || !h.is_finite() {
        return Err(Error::InvalidGeometry(format!("core half-width must be >= 0, got {h}")));
    }
    let pieces = if h > 0.0 { 4 } else { 2 };
    check_request(r, n_nodes, order, pieces)?;
    let rule = GaussRule::new(order);
    let perimeter = 2.0 * PI * r + 4.0 * h;
    let cap_panels = panels_for(PI * r, perimeter, n_nodes, order);
    let flat_panels = panels_for(2.0 * h, perimeter, n_nodes, order);
    let mut nodes = Vec::with_capacity(n_nodes + 4 * order);
    let mut s0 = 0.0;

    let zb: Vec<f64> = z_breaks.iter().copied().filter(|z| z.abs() < r).map(|z| (z / r).asin()).collect();
    let cap = |centre: f64, theta0: f64, s0: f64, nodes: &mut Vec<BoundaryNode>| {
        let cuts: Vec<f64> = zb.iter().map(|&a| if theta0 < 0.0 { a } else { PI - a }).collect();
        for (t, w) in split_composite(&rule, theta0, theta0 + PI, cap_panels, &cuts) {
            let (sn, cs) = t.sin_cos();
            nodes.push(BoundaryNode {
                s: s0 + r * (t - theta0),
                x: centre + r * cs,
                z: r * sn,
                nu_x: cs,
                nu_z: sn,
                w: r * w,
                segment: Segment::Cap,
            });
        }
    };
    cap(h, -0.5 * PI, s0, &mut nodes);
    s0 += PI * r;
    if h > 0.0 {
        // top flat, right to left
        for (t, w) in rule.composite(0.0, 2.0 * h, flat_panels) {
            nodes.push(BoundaryNode { s: s0 + t, x: h - t, z: r, nu_x: 0.0, nu_z: 1.0, w, segment: Segment::Flat });
        }
        s0 += 2.0 * h;
    }
    cap(-h, 0.5 * PI, s0, &mut nodes);
    s0 += PI * r;
    if h > 0.0 {
        for (t, w) in rule.composite(0.0, 2.0 * h, flat_panels) {
            nodes.push(BoundaryNode { s: s0 + t, x: -h + t, z: -r, nu_x: 0.0, nu_z: -1.0, w, segment: Segment::Flat });
        }
    }
    Ok(StadiumBoundary { r, h, nodes })
}

pub fn square_boundary(r: f64, n_nodes: usize) -> Result<SquareBoundary> {
    square_boundary_with_order(r, n_nodes, DEFAULT_ORDER)
}

/// Square `max(|x|, |z|) = R`. Gauss nodes never sit on a corner, so corners
/// need no special weighting.
pub fn square_boundary_with_order(r: f64, n_nodes: usize, order: usize) -> Result<SquareBoundary> {
    square_boundary_split(r, n_nodes, order, &[])
}

/// Square whose `|x| = R` panels also break at the levels `z_breaks`.
pub fn square_boundary_split(r: f64, n_nodes: usize, order: usize, z_breaks: &[f64]) -> Result<SquareBoundary> {
    check_request(r, n_nodes, order, 4)?;
    let rule = GaussRule::new(order);
    let panels = panels_for(2.0 * r, 8.0 * r, n_nodes, order);
    let plain = rule.composite(0.0, 2.0 * r, panels);
    let up: Vec<f64> = z_breaks.iter().map(|z| z + r).collect();
    let down: Vec<f64> = z_breaks.iter().map(|z| r - z).collect();
    let sides =
        [split_composite(&rule, 0.0, 2.0 * r, panels, &up), split_composite(&rule, 0.0, 2.0 * r, panels, &down)];
    let mut nodes = Vec::with_capacity(4 * plain.len() + 4 * order);
    // counter-clockwise from the bottom-right corner
    for (k, &(px, pz, dx, dz, nx, nz, seg)) in [
        (r, -r, 0.0, 1.0, 1.0, 0.0, Segment::SideX),
        (r, r, -1.0, 0.0, 0.0, 1.0, Segment::SideZ),
        (-r, r, 0.0, -1.0, -1.0, 0.0, Segment::SideX),
        (-r, -r, 1.0, 0.0, 0.0, -1.0, Segment::SideZ),
    ]
    .iter()
    .enumerate()
    {
        let s0 = 2.0 * r * k as f64;
        let side = match k {
            0 => &sides[0],
            2 => &sides[1],
            _ => &plain,
        };
        for &(t, w) in side {
            nodes.push(BoundaryNode { s: s0 + t, x: px + dx * t, z: pz + dz * t, nu_x: nx, nu_z: nz, w, segment: seg });
        }
    }
    Ok(SquareBoundary { r, nodes })
}
