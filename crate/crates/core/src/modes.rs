//! Guided modes: roots of the dispersion function in the spectral gap and the
//! normalised eigenfunctions built from layer data.

use crate::profile::{layer_eval, layer_square_integral, SlabProfile};
use crate::quadrature::GaussRule;
use crate::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

/// A guided eigenpair. Layer data are `(e, e')` at the left edge of each core
/// layer, after normalisation; tails are exact exponentials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GuidedMode {
    #[serde(rename = "l")]
    pub index: usize,
    pub gamma: f64,
    pub beta: f64,
    pub sigma_plus: f64,
    pub sigma_minus: f64,
    pub layer_coeffs: Vec<[f64; 2]>,
    /// Layer edges `x_0 = -h < ... < x_L = h`.
    #[serde(skip)]
    pub edges: Vec<f64>,
    /// `gamma - q` in each layer.
    #[serde(skip)]
    pub lambdas: Vec<f64>,
    /// `e(h)`.
    #[serde(skip)]
    pub e_right: f64,
    pub sup_norm: f64,
}

impl GuidedMode {
    pub fn h(&self) -> f64 {
        *self.edges.last().unwrap()
    }

    /// `e(x, gamma_l)`.
    pub fn eval(&self, x: f64) -> f64 {
        self.eval_with_derivative(x).0
    }

    /// `(e(x), e'(x))`.
    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        let h = self.h();
        if x < -h {
            let e = self.layer_coeffs[0][0] * (self.sigma_minus * (x + h)).exp();
            (e, self.sigma_minus * e)
        } else if x > h {
            let e = self.e_right * (-self.sigma_plus * (x - h)).exp();
            (e, -self.sigma_plus * e)
        } else {
            let i = self.edges[1..].partition_point(|&b| b < x).min(self.lambdas.len() - 1);
            let [e0, p0] = self.layer_coeffs[i];
            layer_eval(self.lambdas[i], x - self.edges[i], e0, p0)
        }
    }

    /// Interior sign changes over the whole line.
    pub fn sign_changes(&self) -> usize {
        let mut count = 0;
        for i in 0..self.lambdas.len() {
            let t = self.edges[i + 1] - self.edges[i];
            let [e0, p0] = self.layer_coeffs[i];
            let right = layer_eval(self.lambdas[i], t, e0, p0);
            count += layer_sign_changes(self.lambdas[i], t, (e0, p0), right);
        }
        count
    }
}

fn layer_sign_changes(lambda: f64, t: f64, left: (f64, f64), right: (f64, f64)) -> usize {
    if lambda > 0.0 {
        let kappa = lambda.sqrt();
        let th0 = (kappa * left.0).atan2(left.1);
        let th1 = th0 + kappa * t;
        let pi = std::f64::consts::PI;
        ((th1 / pi).floor() - (th0 / pi).floor()).max(0.0) as usize
    } else {
        usize::from(left.0 * right.0 < 0.0 || (right.0 == 0.0 && left.0 != 0.0))
    }
}

/// Scan and bisection controls.
#[derive(Debug, Clone, Copy)]
pub struct ModeSearch {
    pub scan_points: usize,
    pub rel_tol: f64,
    /// Fraction of `min(q+, q-)` kept clear of the gap edges.
    pub gap_margin: f64,
}

impl Default for ModeSearch {
    fn default() -> Self {
        Self { scan_points: 2048, rel_tol: 1e-13, gap_margin: 1e-9 }
    }
}

/// `sigma_pm = sqrt(q_pm - gamma)`.
fn sigmas(profile: &SlabProfile, gamma: f64) -> (f64, f64) {
    ((profile.q_plus - gamma).sqrt(), (profile.q_minus - gamma).sqrt())
}

fn dispersion_parts(gamma: f64, profile: &SlabProfile) -> (f64, f64, f64) {
    let (sp, sm) = sigmas(profile, gamma);
    let m = profile.transfer_matrix(gamma);
    let e = m[0][0] + m[0][1] * sm;
    let p = m[1][0] + m[1][1] * sm;
    (sp * e + p, sp * e, p)
}

/// `F(gamma) = sigma_+ e(h) + e'(h)` for the solution decaying to the left,
/// started from `(1, sigma_-)` at `-h`. Zero exactly at guided eigenvalues.
pub fn dispersion(gamma: f64, profile: &SlabProfile) -> Result<f64> {
    let (lo, hi) = profile.spectral_gap();
    if !(gamma > lo && gamma < hi) {
        return Err(Error::OutsideSpectralGap { gamma, lo, hi });
    }
    Ok(dispersion_parts(gamma, profile).0)
}

/// Number of guided eigenvalues strictly below `gamma` (oscillation count of the
/// left-decaying solution, including a possible zero in the right tail).
pub fn eigenvalues_below(gamma: f64, profile: &SlabProfile) -> usize {
    let (sp, sm) = sigmas(profile, gamma);
    let core = profile.core_zero_count(gamma, (1.0, sm));
    let m = profile.transfer_matrix(gamma);
    let e = m[0][0] + m[0][1] * sm;
    let p = m[1][0] + m[1][1] * sm;
    // e cosh(sigma t) + (p/sigma) sinh(sigma t) vanishes for some t > 0 iff
    // tanh(sigma t) = -sigma e / p lies in (0, 1)
    let tail = p != 0.0 && {
        let r = -sp * e / p;
        r > 0.0 && r < 1.0
    };
    core + usize::from(tail)
}

pub fn find_modes(profile: &SlabProfile) -> Result<Vec<GuidedMode>> {
    find_modes_with(profile, &ModeSearch::default())
}

pub fn find_modes_with(profile: &SlabProfile, search: &ModeSearch) -> Result<Vec<GuidedMode>> {
    let (_, top) = profile.spectral_gap();
    if !(top > 0.0) {
        return Ok(Vec::new());
    }
    let margin = search.gap_margin * top;
    let a = margin;
    let b = top - margin;
    if !(b > a) {
        return Ok(Vec::new());
    }
    let n = search.scan_points.max(2);
    let step = (b - a) / (n - 1) as f64;
    let grid: Vec<f64> = (0..n).map(|i| if i + 1 == n { b } else { a + i as f64 * step }).collect();
    let values: Vec<f64> = grid.par_iter().map(|&g| dispersion_parts(g, profile).0).collect();

    let mut roots = Vec::new();
    for i in 0..n - 1 {
        let (fa, fb) = (values[i], values[i + 1]);
        if fa == 0.0 {
            roots.push(grid[i]);
        } else if fa * fb < 0.0 {
            roots.push(bisect(profile, grid[i], grid[i + 1], fa, search.rel_tol));
        }
    }
    if values[n - 1] == 0.0 {
        roots.push(grid[n - 1]);
    }

    let expected = eigenvalues_below(b, profile) - eigenvalues_below(a, profile);
    if expected != roots.len() {
        // an even number of roots hid between two scan points; report where
        let near = locate_missed(profile, &grid, &roots);
        return Err(Error::UnresolvedRoots { near });
    }

    let mut modes = Vec::with_capacity(roots.len());
    for (i, &g) in roots.iter().enumerate() {
        let mode = build_mode(profile, g, i + 1);
        if mode.sign_changes() != i {
            return Err(Error::UnresolvedRoots { near: g });
        }
        modes.push(mode);
    }
    Ok(modes)
}

fn bisect(profile: &SlabProfile, mut lo: f64, mut hi: f64, mut flo: f64, rel_tol: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= rel_tol * mid.abs() || mid == lo || mid == hi {
            break;
        }
        let fm = dispersion_parts(mid, profile).0;
        if fm == 0.0 {
            return mid;
        }
        if flo * fm < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    0.5 * (lo + hi)
}

fn locate_missed(profile: &SlabProfile, grid: &[f64], roots: &[f64]) -> f64 {
    for w in grid.windows(2) {
        let inside = roots.iter().filter(|&&r| r >= w[0] && r < w[1]).count();
        let count = eigenvalues_below(w[1], profile) - eigenvalues_below(w[0], profile);
        if count != inside {
            return 0.5 * (w[0] + w[1]);
        }
    }
    grid[grid.len() - 1]
}

/// Normalised mode at eigenvalue `gamma`, with the sign fixed by `e(-h) > 0`.
pub fn build_mode(profile: &SlabProfile, gamma: f64, index: usize) -> GuidedMode {
    let (sp, sm) = sigmas(profile, gamma);
    let data = profile.propagate(gamma, (1.0, sm));
    let lambdas: Vec<f64> = (0..profile.core.len()).map(|i| gamma - profile.q_layer(i)).collect();
    let mut norm2 = 1.0 / (2.0 * sm);
    for (i, l) in profile.core.iter().enumerate() {
        norm2 += layer_square_integral(lambdas[i], l.width(), data[i].0, data[i].1);
    }
    let e_h = data[profile.core.len()].0;
    norm2 += e_h * e_h / (2.0 * sp);
    let s = 1.0 / norm2.sqrt();

    let mut edges: Vec<f64> = profile.core.iter().map(|l| l.x_left).collect();
    edges.push(profile.h);
    let layer_coeffs: Vec<[f64; 2]> = data[..profile.core.len()].iter().map(|&(e, p)| [s * e, s * p]).collect();

    let mut sup: f64 = 0.0;
    for (i, l) in profile.core.iter().enumerate() {
        let [e0, p0] = layer_coeffs[i];
        let t = l.width();
        let (e1, _) = layer_eval(lambdas[i], t, e0, p0);
        sup = sup.max(e0.abs()).max(e1.abs());
        if lambdas[i] > 0.0 {
            // amplitude reached where the Pruefer angle passes pi/2 mod pi
            let kappa = lambdas[i].sqrt();
            let pi = std::f64::consts::PI;
            let th0 = (kappa * e0).atan2(p0);
            let first = ((th0 - 0.5 * pi) / pi).ceil() * pi + 0.5 * pi;
            if first <= th0 + kappa * t {
                sup = sup.max(e0.hypot(p0 / kappa));
            }
        }
        // with lambda <= 0, |e| is convex between zeros and peaks at an edge
    }

    GuidedMode {
        index,
        gamma,
        beta: (profile.k * profile.k * profile.n_star * profile.n_star - gamma).sqrt(),
        sigma_plus: sp,
        sigma_minus: sm,
        layer_coeffs,
        edges,
        lambdas,
        e_right: s * e_h,
        sup_norm: sup,
    }
}

/// `int e_a e_b dx` using exact tails and Gauss panels in the core.
pub fn overlap(a: &GuidedMode, b: &GuidedMode) -> f64 {
    let mut sum = a.layer_coeffs[0][0] * b.layer_coeffs[0][0] / (a.sigma_minus + b.sigma_minus)
        + a.e_right * b.e_right / (a.sigma_plus + b.sigma_plus);
    let rule = GaussRule::new(16);
    for i in 0..a.lambdas.len() {
        let (x0, x1) = (a.edges[i], a.edges[i + 1]);
        let osc = a.lambdas[i].abs().sqrt().max(b.lambdas[i].abs().sqrt()) * (x1 - x0);
        let panels = 4 + (osc / 2.0).ceil() as usize;
        sum += rule.composite(x0, x1, panels).iter().map(|&(x, w)| w * a.eval(x) * b.eval(x)).sum::<f64>();
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::Layer;
    use proptest::prelude::*;

    fn slab(k: f64) -> SlabProfile {
        SlabProfile::symmetric_slab(k, 1.0, 1.5, 1.0).unwrap()
    }

    #[test]
    fn dispersion_rejects_outside_gap() {
        let p = slab(1.0);
        assert!(matches!(dispersion(0.0, &p), Err(Error::OutsideSpectralGap { .. })));
        assert!(matches!(dispersion(p.q_plus, &p), Err(Error::OutsideSpectralGap { .. })));
        assert!(dispersion(0.5, &p).is_ok());
    }

    #[test]
    fn root_satisfies_dispersion() {
        let p = slab(5.0);
        for m in find_modes(&p).unwrap() {
            let (f, a, b) = dispersion_parts(m.gamma, &p);
            assert!(f.abs() < 1e-10 * (a.abs() + b.abs()), "{f}");
        }
    }

    #[test]
    fn empty_gap_has_no_modes() {
        let p = SlabProfile::symmetric_slab(1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(find_modes(&p).unwrap().is_empty());
        // cladding above the core: n_* lives in the cladding, gap collapses
        let p = SlabProfile::new(1.0, 1.5, 1.0, vec![Layer { x_left: -1.0, x_right: 1.0, n: 1.2 }]).unwrap();
        assert!(find_modes(&p).unwrap().is_empty());
    }

    #[test]
    fn asymmetric_below_cutoff_has_no_modes() {
        // thin asymmetric guide below its first cutoff
        let p = SlabProfile::new(1.0, 1.4, 1.0, vec![Layer { x_left: -0.1, x_right: 0.1, n: 1.5 }]).unwrap();
        assert!(find_modes(&p).unwrap().is_empty());
    }

    #[test]
    fn modes_are_continuous_and_decay() {
        let p = SlabProfile::new(
            3.0,
            1.1,
            1.0,
            vec![
                Layer { x_left: -1.0, x_right: -0.2, n: 1.6 },
                Layer { x_left: -0.2, x_right: 0.4, n: 1.3 },
                Layer { x_left: 0.4, x_right: 1.0, n: 1.5 },
            ],
        )
        .unwrap();
        let modes = find_modes(&p).unwrap();
        assert!(!modes.is_empty());
        for m in &modes {
            assert!(m.layer_coeffs[0][0] > 0.0);
            for &x in &[-1.0, -0.2, 0.4, 1.0] {
                let (l, dl) = m.eval_with_derivative(x - 1e-13);
                let (r, dr) = m.eval_with_derivative(x + 1e-13);
                assert!((l - r).abs() < 1e-10 && (dl - dr).abs() < 1e-10);
            }
            for &x in &[1.5, 3.0, 6.0] {
                let bound = m.sup_norm * (-m.sigma_plus * (x - 1.0)).exp();
                assert!(m.eval(x).abs() <= bound * (1.0 + 1e-12));
                let bound = m.sup_norm * (-m.sigma_minus * (x - 1.0)).exp();
                assert!(m.eval(-x).abs() <= bound * (1.0 + 1e-12));
            }
            let kmax = p.k * p.cladding_index();
            assert!(m.beta > kmax && m.beta < p.k * p.n_star);
        }
    }

    #[test]
    fn sup_norm_matches_dense_sampling() {
        let p = slab(5.0);
        for m in find_modes(&p).unwrap() {
            let dense = (0..=20000).map(|i| m.eval(-1.0 + 2.0 * i as f64 / 20000.0).abs()).fold(0.0, f64::max);
            assert!(m.sup_norm >= dense - 1e-12 && m.sup_norm <= dense * (1.0 + 1e-6));
        }
    }

    #[test]
    fn resolution_failure_is_reported() {
        // a scan with two points cannot separate four roots
        let p = slab(5.0);
        let coarse = ModeSearch { scan_points: 2, ..Default::default() };
        assert!(matches!(find_modes_with(&p, &coarse), Err(Error::UnresolvedRoots { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn mode_count_monotone_in_k(k in 0.2f64..6.0, dk in 0.0f64..2.0) {
            let a = find_modes(&slab(k)).unwrap().len();
            let b = find_modes(&slab(k + dk)).unwrap().len();
            prop_assert!(a <= b);
        }
    }
}
