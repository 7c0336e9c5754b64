//! Outgoing Green's function of `Delta + k^2 n(x)^2` in the slab, normalised
//! so that `(Delta + k^2 n^2) G = delta`. Near the source
//! `G ~ (1/2pi) log|omega|`.
//!
//! `G = G_0 + sum_l G_l`: the guided kernels are closed form, the radiating
//! kernel `G_0` is the free-space kernel plus a smooth spectral correction.

use crate::geometry::BoundaryNode;
use crate::modes::GuidedMode;
use crate::profile::SlabProfile;
use crate::special::{hankel01, EULER_GAMMA};
use crate::spectral::{basis, build_nodes, panels_for_phase, quad_form, subtracted_tail, SpectralNode, SpectralPlan};
use crate::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Value and observer-gradient of a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KernelValue {
    pub value: Complex64,
    pub dx: Complex64,
    pub dz: Complex64,
}

impl KernelValue {
    pub fn normal(&self, nu_x: f64, nu_z: f64) -> Complex64 {
        self.dx * nu_x + self.dz * nu_z
    }
}

impl std::ops::Add for KernelValue {
    type Output = KernelValue;
    fn add(self, o: KernelValue) -> KernelValue {
        KernelValue { value: self.value + o.value, dx: self.dx + o.dx, dz: self.dz + o.dz }
    }
}

/// Which piece of the kernel to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelPart {
    Radiating,
    Guided(usize),
    Total,
}

/// Spectral quadrature controls for pointwise evaluation of `G_0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GreenSettings {
    /// Relative agreement required between two successive refinements.
    pub tol: f64,
    pub max_refinements: usize,
    pub order: usize,
}

impl Default for GreenSettings {
    fn default() -> Self {
        Self { tol: 1e-8, max_refinements: 10, order: 16 }
    }
}

/// Gradient agreement is checked at this multiple of the value tolerance.
const GRADIENT_SLACK: f64 = 100.0;

/// `G_FS = H0^(1)(kn r) / (4i)`, the outgoing free-space kernel.
pub fn green_freespace(x: f64, z: f64, xi: f64, zeta: f64, kn: f64) -> Result<Complex64> {
    Ok(green_freespace_full(x, z, xi, zeta, kn)?.value)
}

pub fn green_freespace_full(x: f64, z: f64, xi: f64, zeta: f64, kn: f64) -> Result<KernelValue> {
    let (dx, dz) = (x - xi, z - zeta);
    let r = dx.hypot(dz);
    if r == 0.0 {
        return Err(Error::SingularPoint);
    }
    let four_i = Complex64::new(0.0, 4.0);
    let (h0, h1) = hankel01(kn * r);
    let dr = -kn * h1 / four_i;
    Ok(KernelValue { value: h0 / four_i, dx: dr * (dx / r), dz: dr * (dz / r) })
}

/// `lim_{r->0} G_FS(r) - log(r)/(2 pi)`.
pub fn freespace_regular_limit(kn: f64) -> Complex64 {
    Complex64::new(((0.5 * kn).ln() + EULER_GAMMA) / (2.0 * PI), -0.25)
}

/// Guided kernel `exp(i beta |Z|)/(2 i beta) e(x) e(xi)` with its observer gradient.
pub fn guided_kernel(mode: &GuidedMode, x: f64, z: f64, xi: f64, zeta: f64) -> KernelValue {
    let zs = z - zeta;
    let (ex, dex) = mode.eval_with_derivative(x);
    let exi = mode.eval(xi);
    let phase = Complex64::from_polar(1.0, mode.beta * zs.abs()) / Complex64::new(0.0, 2.0 * mode.beta);
    let g = phase * (ex * exi);
    let sgn = if zs > 0.0 {
        1.0
    } else if zs < 0.0 {
        -1.0
    } else {
        0.0
    };
    KernelValue { value: g, dx: phase * (dex * exi), dz: g * Complex64::new(0.0, mode.beta * sgn) }
}

/// Evaluator for the radiating, guided and total kernels of a profile.
#[derive(Debug, Clone)]
pub struct GreenKernel {
    pub profile: SlabProfile,
    pub modes: Vec<GuidedMode>,
    pub settings: GreenSettings,
}

impl GreenKernel {
    pub fn new(profile: SlabProfile, modes: Vec<GuidedMode>) -> Self {
        Self { profile, modes, settings: GreenSettings::default() }
    }

    pub fn with_settings(mut self, settings: GreenSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn is_symmetric(&self) -> bool {
        self.profile.is_symmetric_cladding()
    }

    /// `k n_cl`.
    pub fn cladding_wavenumber(&self) -> f64 {
        self.profile.k * self.profile.n_minus
    }

    pub fn require_symmetric(&self) -> Result<()> {
        if self.is_symmetric() {
            Ok(())
        } else {
            Err(Error::AsymmetricCladding { n_plus: self.profile.n_plus, n_minus: self.profile.n_minus })
        }
    }

    fn mode(&self, l: usize) -> Result<&GuidedMode> {
        if l == 0 || l > self.modes.len() {
            return Err(Error::ModeIndex { index: l, count: self.modes.len() });
        }
        Ok(&self.modes[l - 1])
    }

    pub fn guided(&self, l: usize, x: f64, z: f64, xi: f64, zeta: f64) -> Result<Complex64> {
        Ok(guided_kernel(self.mode(l)?, x, z, xi, zeta).value)
    }

    pub fn guided_full(&self, l: usize, x: f64, z: f64, xi: f64, zeta: f64) -> Result<KernelValue> {
        Ok(guided_kernel(self.mode(l)?, x, z, xi, zeta))
    }

    pub fn radiating(&self, x: f64, z: f64, xi: f64, zeta: f64) -> Result<Complex64> {
        Ok(self.radiating_full(x, z, xi, zeta)?.value)
    }

    /// `G_0` and its observer gradient, refined until two successive spectral
    /// quadratures agree to `settings.tol`.
    pub fn radiating_full(&self, x: f64, z: f64, xi: f64, zeta: f64) -> Result<KernelValue> {
        self.radiating_full_with(x, z, xi, zeta, self.settings.tol)
    }

    pub fn radiating_full_with(&self, x: f64, z: f64, xi: f64, zeta: f64, tol: f64) -> Result<KernelValue> {
        self.require_symmetric()?;
        let kn = self.cladding_wavenumber();
        let free = green_freespace_full(x, z, xi, zeta, kn)?;
        if self.profile.core.iter().all(|l| l.n == self.profile.n_minus) {
            return Ok(free);
        }
        let mut prev = self.correction(x, z, xi, zeta, 0);
        let mut last_diff = f64::INFINITY;
        for level in 1..=self.settings.max_refinements {
            let next = self.correction(x, z, xi, zeta, level);
            let total = free + next;
            let scale_v = total.value.norm().max(1e-300);
            let scale_g = (total.dx.norm() + total.dz.norm()).max(kn * scale_v);
            let dv = (next.value - prev.value).norm() / scale_v;
            // the gradient's cut-off error decays one power of U slower than the value's
            let dg = ((next.dx - prev.dx).norm() + (next.dz - prev.dz).norm()) / scale_g / GRADIENT_SLACK;
            last_diff = dv.max(dg);
            if last_diff <= tol {
                return Ok(total);
            }
            prev = next;
        }
        Err(Error::QuadratureNonConvergence { difference: last_diff })
    }

    fn base_cutoff(&self) -> f64 {
        let p = &self.profile;
        let kn = self.cladding_wavenumber();
        let vmax = p.core.iter().map(|l| (p.k * p.k * (l.n * l.n - p.n_minus * p.n_minus)).abs()).fold(0.0, f64::max);
        8.0 * kn.max(vmax.sqrt())
    }

    /// Spectral correction `G_0 - G_FS` at refinement `level`.
    fn correction(&self, x: f64, z: f64, xi: f64, zeta: f64, level: usize) -> KernelValue {
        let p = &self.profile;
        let kn = self.cladding_wavenumber();
        let zs = z - zeta;
        let za = zs.abs();
        let span = x.abs() + xi.abs() + 2.0 * p.h;
        let mut u_max = self.base_cutoff() * f64::powi(2.0, level as i32);
        if za > 0.0 {
            // beyond this the evanescent factor is below 4e-18
            u_max = u_max.min((40.0 / za).max(kn));
        }
        let scale = 1usize << level.min(3);
        let plan = SpectralPlan {
            order: self.settings.order,
            propagating_panels: panels_for_phase(kn * (span + za), 2) * scale,
            evanescent_panels: panels_for_phase(u_max * span, 2).max((u_max * za / 20.0).ceil() as usize) * scale,
            u_max,
            u_taper: None,
        };
        let nodes = build_nodes(p, &plan);
        let mut out = self.subtracted_sum(&nodes, x, zs, xi);
        let kappa_u = (u_max * u_max + kn * kn).sqrt();
        let dphi = p.index_potential(x) - p.index_potential(xi);
        let n = p.index_at(x);
        let v_half = 0.5 * p.k * p.k * (n * n - p.n_minus * p.n_minus);
        let (tv, tx, tz) = subtracted_tail(dphi, v_half, x - xi, za, kappa_u);
        let sgn = zs.signum() * f64::from(u8::from(zs != 0.0));
        out.value += tv;
        out.dx += tx;
        out.dz += tz * sgn;
        out
    }

    fn subtracted_sum(&self, nodes: &[SpectralNode], x: f64, zs: f64, xi: f64) -> KernelValue {
        let p = &self.profile;
        let xs = x - xi;
        let za = zs.abs();
        let sgn = if zs > 0.0 {
            1.0
        } else if zs < 0.0 {
            -1.0
        } else {
            0.0
        };
        let mut acc = KernelValue::default();
        for node in nodes {
            let (a, da) = basis(p, node, x);
            let (b, _) = basis(p, node, xi);
            let (sn, cs) = (node.kappa * xs).sin_cos();
            let sub = quad_form(&node.m, &a, &b) - 2.0 * cs;
            let sub_x = quad_form(&node.m, &da, &b) + 2.0 * node.kappa * sn;
            let e = node.weight * (Complex64::i() * node.beta * za).exp();
            acc.value += e * sub;
            acc.dx += e * sub_x;
            acc.dz += e * sub * Complex64::i() * node.beta * sgn;
        }
        acc
    }

    pub fn total(&self, x: f64, z: f64, xi: f64, zeta: f64) -> Result<Complex64> {
        Ok(self.total_full(x, z, xi, zeta)?.value)
    }

    pub fn total_full(&self, x: f64, z: f64, xi: f64, zeta: f64) -> Result<KernelValue> {
        let mut acc = self.radiating_full(x, z, xi, zeta)?;
        for m in &self.modes {
            acc = acc + guided_kernel(m, x, z, xi, zeta);
        }
        Ok(acc)
    }

    pub fn part_full(&self, part: KernelPart, x: f64, z: f64, xi: f64, zeta: f64) -> Result<KernelValue> {
        match part {
            KernelPart::Radiating => self.radiating_full(x, z, xi, zeta),
            KernelPart::Guided(l) => self.guided_full(l, x, z, xi, zeta),
            KernelPart::Total => self.total_full(x, z, xi, zeta),
        }
    }

    /// `dG/dnu` at a boundary node, source at `(xi, zeta)`.
    pub fn normal_derivative(&self, node: &BoundaryNode, xi: f64, zeta: f64, part: KernelPart) -> Result<Complex64> {
        Ok(self.part_full(part, node.x, node.z, xi, zeta)?.normal(node.nu_x, node.nu_z))
    }

    /// Central-difference `dG/dnu` with the given step.
    pub fn normal_derivative_fd(
        &self,
        node: &BoundaryNode,
        xi: f64,
        zeta: f64,
        part: KernelPart,
        step: f64,
    ) -> Result<Complex64> {
        let f =
            |s: f64| self.part_full(part, node.x + s * node.nu_x, node.z + s * node.nu_z, xi, zeta).map(|v| v.value);
        Ok((f(step)? - f(-step)?) / (2.0 * step))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Segment;
    use crate::modes::find_modes;
    use crate::special::series_jy01;

    fn slab_kernel() -> GreenKernel {
        let p = SlabProfile::symmetric_slab(1.0, 1.0, 1.5, 1.0).unwrap();
        let m = find_modes(&p).unwrap();
        GreenKernel::new(p, m)
    }

    #[test]
    fn freespace_at_unit_argument() {
        // power-series oracle, independent of the switch logic
        let (j0, _, y0, _) = series_jy01(1.0);
        let want = Complex64::new(j0, y0) / Complex64::new(0.0, 4.0);
        let got = green_freespace(1.0, 0.0, 0.0, 0.0, 1.0).unwrap();
        assert!((got - want).norm() < 1e-15);
        assert!((j0 - 0.765198).abs() < 1e-6 && (y0 - 0.088257).abs() < 1e-6);
        assert!(matches!(green_freespace(1.0, 2.0, 1.0, 2.0, 1.0), Err(Error::SingularPoint)));
    }

    #[test]
    fn freespace_log_limit() {
        let kn = 1.7;
        let lim = freespace_regular_limit(kn);
        for r in [1e-3, 1e-5, 1e-7] {
            let g = green_freespace(r, 0.0, 0.0, 0.0, kn).unwrap();
            let d = g - r.ln() / (2.0 * PI);
            assert!((d - lim).norm() < 2.0 * r, "{r}: {d}");
        }
    }

    #[test]
    fn freespace_solves_helmholtz_off_source() {
        let kn = 2.0;
        let h = 1e-3;
        let g = |x: f64, z: f64| green_freespace(x, z, 0.0, 0.0, kn).unwrap();
        let (x, z) = (0.7, -1.1);
        let lap = (g(x + h, z) + g(x - h, z) + g(x, z + h) + g(x, z - h) - 4.0 * g(x, z)) / (h * h);
        let res = lap + kn * kn * g(x, z);
        assert!(res.norm() < 1e-5, "{res}");
    }

    #[test]
    fn guided_kernel_properties() {
        let k = slab_kernel();
        let m = &k.modes[0];
        let g0 = k.guided(1, 0.3, 2.0, -0.4, 2.0).unwrap();
        assert!(g0.re.abs() < 1e-16);
        assert!((g0.im + m.eval(0.3) * m.eval(-0.4) / (2.0 * m.beta)).abs() < 1e-15);
        let a = k.guided(1, 0.3, 7.0, -0.4, 2.0).unwrap();
        assert!((a.norm() - g0.norm()).abs() < 1e-15);
        let b = k.guided(1, -0.4, 2.0, 0.3, 7.0).unwrap();
        assert!((a - b).norm() < 1e-16);
        assert!(matches!(k.guided(2, 0.0, 0.0, 0.0, 1.0), Err(Error::ModeIndex { .. })));
    }

    #[test]
    fn guided_outgoing_factor_is_annihilated() {
        let k = slab_kernel();
        let node = BoundaryNode { s: 0.0, x: 0.4, z: 10.0, nu_x: 0.0, nu_z: 1.0, w: 1.0, segment: Segment::SideZ };
        let g = k.guided(1, node.x, node.z, 0.1, 1.0).unwrap();
        let dg = k.normal_derivative(&node, 0.1, 1.0, KernelPart::Guided(1)).unwrap();
        let beta = k.modes[0].beta;
        assert!((dg - Complex64::new(0.0, beta) * g).norm() < 1e-16);
    }

    #[test]
    fn uniform_medium_reduces_to_freespace() {
        let p = SlabProfile::symmetric_slab(1.0, 1.0, 1.0, 1.0).unwrap();
        let k = GreenKernel::new(p, vec![]);
        let a = k.radiating(0.3, 0.1, 2.0, -3.0).unwrap();
        let b = green_freespace(0.3, 0.1, 2.0, -3.0, 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn asymmetric_cladding_is_refused() {
        let p = SlabProfile::new(1.0, 1.1, 1.0, vec![crate::profile::Layer { x_left: -1.0, x_right: 1.0, n: 1.5 }])
            .unwrap();
        let m = find_modes(&p).unwrap();
        assert!(!m.is_empty());
        let k = GreenKernel::new(p, m);
        assert!(matches!(k.radiating(0.0, 0.0, 1.0, 1.0), Err(Error::AsymmetricCladding { .. })));
        assert!(k.guided(1, 0.0, 0.0, 1.0, 1.0).is_ok());
    }

    #[test]
    fn radiating_kernel_is_reciprocal() {
        let k = slab_kernel();
        for &(x, z, xi, zeta) in &[(0.3, 0.5, -0.8, -0.2), (2.5, 1.0, 0.2, 0.0), (-3.0, 4.0, 1.5, 1.0)] {
            let a = k.radiating(x, z, xi, zeta).unwrap();
            let b = k.radiating(xi, zeta, x, z).unwrap();
            assert!((a - b).norm() < 1e-8 * a.norm(), "{a} {b}");
        }
    }

    #[test]
    fn total_kernel_solves_helmholtz_off_source() {
        let k = slab_kernel();
        let (xi, zeta) = (0.2, 0.0);
        let h = 2e-3;
        let g = |x: f64, z: f64| k.total(x, z, xi, zeta).unwrap();
        for &(x, z) in &[(0.5, 1.0), (2.0, 0.7), (-1.6, -0.5)] {
            let n = k.profile.index_at(x);
            let lap = (g(x + h, z) + g(x - h, z) + g(x, z + h) + g(x, z - h) - 4.0 * g(x, z)) / (h * h);
            let res = lap + k.profile.k * k.profile.k * n * n * g(x, z);
            assert!(res.norm() < 1e-4, "({x},{z}): {res}");
        }
    }

    #[test]
    fn analytic_normal_derivative_matches_difference() {
        let k = slab_kernel();
        let node = BoundaryNode { s: 0.0, x: 2.3, z: 1.4, nu_x: 0.6, nu_z: 0.8, w: 1.0, segment: Segment::Cap };
        for part in [KernelPart::Radiating, KernelPart::Guided(1), KernelPart::Total] {
            let a = k.normal_derivative(&node, 0.1, -0.3, part).unwrap();
            let f = k.normal_derivative_fd(&node, 0.1, -0.3, part, 1e-4).unwrap();
            assert!((a - f).norm() < 1e-7 * a.norm().max(1e-3), "{part:?}: {a} vs {f}");
        }
    }
}
