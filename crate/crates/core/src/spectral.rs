//! Continuous-spectrum machinery for the radiating kernel with symmetric
//! cladding.
//!
//! With `kappa` the transverse wavenumber in the cladding, the two scattering
//! states (incident from the left and from the right, unit amplitude) give the
//! spectral density
//!
//! ```text
//! rho(x, xi; kappa) = psi_L(x) conj(psi_L(xi)) + psi_R(x) conj(psi_R(xi))
//!                   = phi(x)^T M(kappa) phi(xi)
//! ```
//!
//! where `phi = (phi_1, phi_2)` are the real solutions with unit data at `-h`
//! and `M` is a real symmetric 2x2 matrix. In free space `rho = 2 cos(kappa X)`.
//! The radiating kernel is
//!
//! ```text
//! G_0 = (1/2pi) int_0^inf rho(x, xi; kappa) exp(i beta |Z|) / (2 i beta) dkappa,
//! beta = sqrt(k^2 n_cl^2 - kappa^2),  Im beta >= 0.
//! ```
//!
//! The propagating range is integrated in `theta` with `kappa = k n_cl sin(theta)`
//! and the evanescent range in `u = sqrt(kappa^2 - k^2 n_cl^2)`; both
//! substitutions remove the square-root singularity at the branch point.

use crate::profile::{layer_propagator, mat_mul, SlabProfile};
use crate::quadrature::GaussRule;
use num_complex::Complex64;
use std::f64::consts::{FRAC_PI_2, PI};

type Mat2 = [[f64; 2]; 2];

const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

/// One quadrature node of the continuous spectrum.
#[derive(Debug, Clone)]
pub struct SpectralNode {
    pub kappa: f64,
    /// Longitudinal wavenumber; real (propagating) or `i u` (evanescent).
    pub beta: Complex64,
    /// Quadrature weight including `1/(2 pi)`, the `1/(2 i beta)` factor and
    /// the change of variables; the node contributes `weight * rho * exp(i beta |Z|)`.
    pub weight: Complex64,
    pub m: Mat2,
    /// Transfer matrices from `-h` to each core interface.
    pub cumulative: Vec<Mat2>,
}

/// Quadrature layout for the continuous spectrum.
#[derive(Debug, Clone, Copy)]
pub struct SpectralPlan {
    pub order: usize,
    pub propagating_panels: usize,
    pub evanescent_panels: usize,
    /// Upper limit of the evanescent variable `u`.
    pub u_max: f64,
    /// Smooth cut-off `exp(-(u/u_taper)^8)` applied to evanescent weights.
    pub u_taper: Option<f64>,
}

/// Real symmetric matrix `M` and cumulative transfer matrices at `kappa`.
pub fn scattering_data(profile: &SlabProfile, kappa: f64) -> (Mat2, Vec<Mat2>) {
    let k2 = profile.k * profile.k;
    let ncl2 = profile.n_minus * profile.n_minus;
    let mut cumulative = Vec::with_capacity(profile.core.len() + 1);
    let mut acc = IDENTITY;
    cumulative.push(acc);
    for l in &profile.core {
        let lambda = kappa * kappa + k2 * (l.n * l.n - ncl2);
        acc = mat_mul(&layer_propagator(lambda, l.width()), &acc);
        cumulative.push(acc);
    }
    let t = acc;
    let h = profile.h;
    let ik = Complex64::new(0.0, kappa);
    let apply = |v: [Complex64; 2]| [t[0][0] * v[0] + t[0][1] * v[1], t[1][0] * v[0] + t[1][1] * v[1]];
    let one = Complex64::new(1.0, 0.0);
    let p = apply([one, ik]);
    let q = apply([one, -ik]);
    let denom = ik * q[0] - q[1];
    let ph = Complex64::from_polar(1.0, -kappa * h); // exp(-i kappa h)
    let ph2 = ph * ph;
    let r = -ph2 * (ik * p[0] - p[1]) / denom;
    let tr = ph2 * 2.0 * ik / denom;
    let phc = ph.conj();
    let c_l = [ph + r * phc, ik * (ph - r * phc)];
    let c_r = [tr * phc, -ik * tr * phc];
    let mut m = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            m[a][b] = (c_l[a] * c_l[b].conj() + c_r[a] * c_r[b].conj()).re;
        }
    }
    // symmetrise away rounding
    let off = 0.5 * (m[0][1] + m[1][0]);
    m[0][1] = off;
    m[1][0] = off;
    (m, cumulative)
}

/// `(phi_1, phi_2)` and their x-derivatives at `x` for the node's `kappa`.
pub fn basis(profile: &SlabProfile, node: &SpectralNode, x: f64) -> ([f64; 2], [f64; 2]) {
    basis_at(profile, node.kappa, &node.cumulative, x)
}

pub fn basis_at(profile: &SlabProfile, kappa: f64, cumulative: &[Mat2], x: f64) -> ([f64; 2], [f64; 2]) {
    let h = profile.h;
    let k2 = profile.k * profile.k;
    let ncl2 = profile.n_minus * profile.n_minus;
    let kk = kappa * kappa;
    let p = if x <= -h {
        layer_propagator(kk, x + h)
    } else if x >= h {
        mat_mul(&layer_propagator(kk, x - h), &cumulative[profile.core.len()])
    } else {
        let i = profile.layer_of(x);
        let l = &profile.core[i];
        let lambda = kk + k2 * (l.n * l.n - ncl2);
        mat_mul(&layer_propagator(lambda, x - l.x_left), &cumulative[i])
    };
    ([p[0][0], p[0][1]], [p[1][0], p[1][1]])
}

/// `phi(a)^T M phi(b)`.
pub fn quad_form(m: &Mat2, a: &[f64; 2], b: &[f64; 2]) -> f64 {
    a[0] * (m[0][0] * b[0] + m[0][1] * b[1]) + a[1] * (m[1][0] * b[0] + m[1][1] * b[1])
}

pub fn taper(u: f64, u_taper: f64) -> f64 {
    (-(u / u_taper).powi(8)).exp()
}

/// Nodes for the given plan; `kn` is the cladding wavenumber `k n_cl`.
pub fn build_nodes(profile: &SlabProfile, plan: &SpectralPlan) -> Vec<SpectralNode> {
    let kn = profile.k * profile.n_minus;
    let rule = GaussRule::new(plan.order);
    let mut nodes = Vec::with_capacity(plan.order * (plan.propagating_panels + plan.evanescent_panels));
    let norm = 1.0 / (2.0 * PI);
    for (theta, w) in rule.composite(0.0, FRAC_PI_2, plan.propagating_panels) {
        let kappa = kn * theta.sin();
        let beta = kn * theta.cos();
        let (m, cumulative) = scattering_data(profile, kappa);
        // E dkappa = exp(i beta |Z|) / (2 i) dtheta
        nodes.push(SpectralNode {
            kappa,
            beta: Complex64::new(beta, 0.0),
            weight: Complex64::new(0.0, -0.5 * w * norm),
            m,
            cumulative,
        });
    }
    for (u, w) in rule.composite(0.0, plan.u_max, plan.evanescent_panels) {
        let kappa = (u * u + kn * kn).sqrt();
        let (m, cumulative) = scattering_data(profile, kappa);
        let cut = plan.u_taper.map_or(1.0, |ut| taper(u, ut));
        // E dkappa = -exp(-u |Z|) / (2 kappa) du
        nodes.push(SpectralNode {
            kappa,
            beta: Complex64::new(0.0, u),
            weight: Complex64::new(-0.5 * w * norm * cut / kappa, 0.0),
            m,
            cumulative,
        });
    }
    nodes
}

/// Number of Gauss panels needed to follow `phase` radians of oscillation,
/// at about `4 pi` per panel.
pub fn panels_for_phase(phase: f64, min: usize) -> usize {
    ((phase / (4.0 * PI)).ceil() as usize).max(min)
}

/// Asymptotic large-`kappa` remainder of the subtracted integrand, integrated
/// from `kappa_u` to infinity:
/// `(dPhi / 2pi) int sin(kappa X) exp(-kappa |Z|) / kappa^2 dkappa`,
/// returned with its derivatives in `x` (observer) and `|Z|`.
pub fn subtracted_tail(dphi: f64, v_half: f64, x_sep: f64, z_abs: f64, kappa_u: f64) -> (f64, f64, f64) {
    if x_sep == 0.0 && z_abs == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let w = Complex64::new(z_abs, -x_sep);
    let s = w * kappa_u;
    let e2 = crate::special::expint_e2(s) / kappa_u;
    let e1 = crate::special::expint_e1(s);
    let c = 1.0 / (2.0 * PI);
    let value = c * dphi * e2.im;
    // d/dx: dPhi' = v_half, dw/dx = -i, dE2(s)/ds = -E1(s)
    let dx = c * v_half * e2.im + c * dphi * (Complex64::i() * e1).im;
    let dz = -c * dphi * e1.im;
    (value, dx, dz)
}
