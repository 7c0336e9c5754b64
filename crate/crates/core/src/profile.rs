//! Piecewise-constant refraction-index profiles and the transfer matrices of
//! the transverse equation `e'' + (gamma - q(x)) e = 0`.

use crate::{Error, Result};
use serde::Serialize;

/// One constant-index piece of the core.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Layer {
    pub x_left: f64,
    pub x_right: f64,
    pub n: f64,
}

impl Layer {
    pub fn width(&self) -> f64 {
        self.x_right - self.x_left
    }
}

/// Stratified index `n(x)`: cladding `n_minus` for `x < -h`, the core layers on
/// `[-h, h]`, cladding `n_plus` for `x > h`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlabProfile {
    pub k: f64,
    pub h: f64,
    pub n_plus: f64,
    pub n_minus: f64,
    pub core: Vec<Layer>,
    /// Largest index anywhere.
    pub n_star: f64,
    pub q_plus: f64,
    pub q_minus: f64,
}

const PARTITION_TOL: f64 = 1e-12;

impl SlabProfile {
    pub fn new(k: f64, n_minus: f64, n_plus: f64, core: Vec<Layer>) -> Result<Self> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::InvalidProfile(format!("wavenumber must be positive, got {k}")));
        }
        if core.is_empty() {
            return Err(Error::InvalidProfile("core needs at least one layer".into()));
        }
        let h = core.last().unwrap().x_right;
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidProfile(format!("core must span [-h, h] with h > 0, right edge is {h}")));
        }
        let tol = PARTITION_TOL * h;
        if (core[0].x_left + h).abs() > tol {
            return Err(Error::InvalidProfile(format!(
                "core layers span [{}, {h}], which is not symmetric about 0",
                core[0].x_left
            )));
        }
        for (i, l) in core.iter().enumerate() {
            if !(l.width() > 0.0) {
                return Err(Error::InvalidProfile(format!("layer {i} has non-positive width")));
            }
            if i > 0 && (l.x_left - core[i - 1].x_right).abs() > tol {
                return Err(Error::InvalidProfile(format!("gap or overlap between layers {} and {i}", i - 1)));
            }
        }
        for (name, n) in
            [("n_minus", n_minus), ("n_plus", n_plus)].into_iter().chain(core.iter().map(|l| ("core", l.n)))
        {
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::InvalidProfile(format!("{name} index must be positive, got {n}")));
            }
        }
        // snap interfaces so later lookups see an exact partition
        let mut core = core;
        core[0].x_left = -h;
        for i in 1..core.len() {
            core[i].x_left = core[i - 1].x_right;
        }
        let n_star = core.iter().map(|l| l.n).fold(n_plus.max(n_minus), f64::max);
        let k2 = k * k;
        Ok(Self {
            k,
            h,
            n_plus,
            n_minus,
            core,
            n_star,
            q_plus: k2 * (n_star * n_star - n_plus * n_plus),
            q_minus: k2 * (n_star * n_star - n_minus * n_minus),
        })
    }

    /// Single-layer core of index `n_core` between claddings `n_clad`.
    pub fn symmetric_slab(k: f64, h: f64, n_core: f64, n_clad: f64) -> Result<Self> {
        Self::new(k, n_clad, n_clad, vec![Layer { x_left: -h, x_right: h, n: n_core }])
    }

    /// Continuous core profile sampled at the midpoints of `pieces` equal sub-layers.
    pub fn sampled<F: Fn(f64) -> f64>(
        k: f64,
        h: f64,
        n_minus: f64,
        n_plus: f64,
        pieces: usize,
        n_core: F,
    ) -> Result<Self> {
        if pieces == 0 {
            return Err(Error::InvalidProfile("need at least one sub-layer".into()));
        }
        let w = 2.0 * h / pieces as f64;
        let core = (0..pieces)
            .map(|i| {
                let a = -h + i as f64 * w;
                let b = if i + 1 == pieces { h } else { a + w };
                Layer { x_left: a, x_right: b, n: n_core(0.5 * (a + b)) }
            })
            .collect();
        Self::new(k, n_minus, n_plus, core)
    }

    pub fn index_at(&self, x: f64) -> f64 {
        if x < -self.h {
            self.n_minus
        } else if x > self.h {
            self.n_plus
        } else {
            self.core[self.layer_of(x)].n
        }
    }

    /// Index of the core layer containing `x` (clamped into the core).
    pub fn layer_of(&self, x: f64) -> usize {
        let i = self.core.partition_point(|l| l.x_right < x);
        i.min(self.core.len() - 1)
    }

    /// `q(x) = k^2 (n_*^2 - n(x)^2)`.
    pub fn q_at(&self, x: f64) -> f64 {
        let n = self.index_at(x);
        self.k * self.k * (self.n_star * self.n_star - n * n)
    }

    pub fn q_layer(&self, i: usize) -> f64 {
        let n = self.core[i].n;
        self.k * self.k * (self.n_star * self.n_star - n * n)
    }

    /// Open interval in which guided eigenvalues live.
    pub fn spectral_gap(&self) -> (f64, f64) {
        (0.0, self.q_plus.min(self.q_minus))
    }

    pub fn is_symmetric_cladding(&self) -> bool {
        (self.n_plus - self.n_minus).abs() <= 1e-12 * self.n_plus.max(self.n_minus)
    }

    pub fn cladding_index(&self) -> f64 {
        self.n_plus.max(self.n_minus)
    }

    /// `Phi(x) = 1/2 int_{-inf}^x k^2 (n^2 - n_cl^2)`; constant outside the core.
    /// Only meaningful for symmetric cladding.
    pub fn index_potential(&self, x: f64) -> f64 {
        let k2 = self.k * self.k;
        let ncl2 = self.n_minus * self.n_minus;
        let mut acc = 0.0;
        for l in &self.core {
            if x <= l.x_left {
                break;
            }
            let right = x.min(l.x_right);
            acc += 0.5 * k2 * (l.n * l.n - ncl2) * (right - l.x_left);
        }
        acc
    }

    /// Product of the layer propagators: maps `(e, e')` at `-h` to `(e, e')` at `h`.
    pub fn transfer_matrix(&self, gamma: f64) -> [[f64; 2]; 2] {
        let mut m = [[1.0, 0.0], [0.0, 1.0]];
        for (i, l) in self.core.iter().enumerate() {
            let p = layer_propagator(gamma - self.q_layer(i), l.width());
            m = mat_mul(&p, &m);
        }
        m
    }

    /// `(e, e')` at every interface `-h = x_0 < x_1 < ... < x_L = h`, starting from `start`.
    pub fn propagate(&self, gamma: f64, start: (f64, f64)) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.core.len() + 1);
        let mut s = start;
        out.push(s);
        for (i, l) in self.core.iter().enumerate() {
            let p = layer_propagator(gamma - self.q_layer(i), l.width());
            s = (p[0][0] * s.0 + p[0][1] * s.1, p[1][0] * s.0 + p[1][1] * s.1);
            out.push(s);
        }
        out
    }

    /// Zeros on `(-h, h]` of the solution with data `start` at `-h`.
    pub fn core_zero_count(&self, gamma: f64, start: (f64, f64)) -> usize {
        let data = self.propagate(gamma, start);
        self.core
            .iter()
            .enumerate()
            .map(|(i, l)| layer_zero_count(gamma - self.q_layer(i), l.width(), data[i], data[i + 1]))
            .sum()
    }
}

// below this value of |lambda| t^2 the series form is used
const SERIES_SWITCH: f64 = 0.5;

/// `(C, S)` with `C'' = -lambda C`, `C(0) = 1, C'(0) = 0` and `S(0) = 0, S'(0) = 1`, at `t`.
pub fn layer_cs(lambda: f64, t: f64) -> (f64, f64) {
    let x = lambda * t * t;
    if x.abs() < SERIES_SWITCH {
        // C = sum (-x)^j/(2j)!, S = t sum (-x)^j/(2j+1)!
        let mut c = 1.0;
        let mut s = 1.0;
        let mut tc = 1.0;
        let mut ts = 1.0;
        for j in 1..30 {
            let jf = j as f64;
            tc *= -x / ((2.0 * jf - 1.0) * (2.0 * jf));
            ts *= -x / ((2.0 * jf) * (2.0 * jf + 1.0));
            c += tc;
            s += ts;
            if tc.abs() < 1e-18 && ts.abs() < 1e-18 {
                break;
            }
        }
        (c, t * s)
    } else if lambda > 0.0 {
        let kappa = lambda.sqrt();
        let (sn, cs) = (kappa * t).sin_cos();
        (cs, sn / kappa)
    } else {
        let mu = (-lambda).sqrt();
        ((mu * t).cosh(), (mu * t).sinh() / mu)
    }
}

/// Propagator `[[C, S], [-lambda S, C]]` across a layer of width `t`.
pub fn layer_propagator(lambda: f64, t: f64) -> [[f64; 2]; 2] {
    let (c, s) = layer_cs(lambda, t);
    [[c, s], [-lambda * s, c]]
}

/// Value and derivative at offset `t` into a layer with data `(e0, p0)` at its left edge.
pub fn layer_eval(lambda: f64, t: f64, e0: f64, p0: f64) -> (f64, f64) {
    let (c, s) = layer_cs(lambda, t);
    (c * e0 + s * p0, -lambda * s * e0 + c * p0)
}

pub(crate) fn mat_mul(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

/// Zeros in `(0, t]` of the layer solution joining `left` to `right`.
fn layer_zero_count(lambda: f64, t: f64, left: (f64, f64), right: (f64, f64)) -> usize {
    if lambda > 0.0 {
        // Pruefer angle advances at the constant rate kappa
        let kappa = lambda.sqrt();
        let th0 = (kappa * left.0).atan2(left.1);
        let th1 = th0 + kappa * t;
        let m0 = (th0 / std::f64::consts::PI).floor() as i64;
        let m1 = (th1 / std::f64::consts::PI).floor() as i64;
        (m1 - m0).max(0) as usize
    } else {
        // at most one zero when the solution cannot oscillate
        let crosses = left.0 * right.0 < 0.0 || (right.0 == 0.0 && left.0 != 0.0);
        usize::from(crosses)
    }
}

/// Closed-form `int_0^t e(s)^2 ds` for the layer solution with data `(e0, p0)`.
pub fn layer_square_integral(lambda: f64, t: f64, e0: f64, p0: f64) -> f64 {
    let x = lambda * t * t;
    if x.abs() < 0.1 {
        let rule = crate::quadrature::GaussRule::new(16);
        return rule
            .on(0.0, t)
            .map(|(s, w)| {
                let e = layer_eval(lambda, s, e0, p0).0;
                w * e * e
            })
            .sum();
    }
    if lambda > 0.0 {
        let k = lambda.sqrt();
        let b = p0 / k;
        let s2 = (2.0 * k * t).sin() / (4.0 * k);
        let sn = (k * t).sin();
        e0 * e0 * (0.5 * t + s2) + b * b * (0.5 * t - s2) + e0 * b * sn * sn / k
    } else {
        let m = (-lambda).sqrt();
        let b = p0 / m;
        let s2 = (2.0 * m * t).sinh() / (4.0 * m);
        let sh = (m * t).sinh();
        e0 * e0 * (0.5 * t + s2) + b * b * (s2 - 0.5 * t) + e0 * b * sh * sh / m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn det(m: &[[f64; 2]; 2]) -> f64 {
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    #[test]
    fn turning_point_is_linear_propagation() {
        let p = SlabProfile::symmetric_slab(1.0, 1.0, 1.5, 1.0).unwrap();
        // single core layer has q = 0
        let m = p.transfer_matrix(0.0);
        assert_eq!(m, [[1.0, 2.0], [0.0, 1.0]]);
    }

    #[test]
    fn composition_matches_split_layers() {
        let one = SlabProfile::symmetric_slab(2.0, 1.0, 1.5, 1.0).unwrap();
        let two = SlabProfile::new(
            2.0,
            1.0,
            1.0,
            vec![Layer { x_left: -1.0, x_right: 0.3, n: 1.5 }, Layer { x_left: 0.3, x_right: 1.0, n: 1.5 }],
        )
        .unwrap();
        for g in [0.1, 1.0, 4.5, 7.0] {
            let a = one.transfer_matrix(g);
            let b = two.transfer_matrix(g);
            for i in 0..2 {
                for j in 0..2 {
                    assert!((a[i][j] - b[i][j]).abs() < 1e-12 * (1.0 + a[i][j].abs()));
                }
            }
        }
    }

    #[test]
    fn square_integral_matches_quadrature() {
        let rule = crate::quadrature::GaussRule::new(32);
        for &(lam, t) in &[(3.0, 1.2), (-2.0, 0.8), (1e-4, 0.5), (25.0, 2.0), (-40.0, 0.6)] {
            let exact = layer_square_integral(lam, t, 0.7, -1.3);
            let num: f64 =
                rule.composite(0.0, t, 8).iter().map(|&(s, w)| w * layer_eval(lam, s, 0.7, -1.3).0.powi(2)).sum();
            assert!((exact - num).abs() < 1e-12 * num.abs(), "{lam} {t}: {exact} vs {num}");
        }
    }

    #[test]
    fn rejects_bad_profiles() {
        assert!(SlabProfile::symmetric_slab(0.0, 1.0, 1.5, 1.0).is_err());
        assert!(SlabProfile::symmetric_slab(1.0, 1.0, -1.5, 1.0).is_err());
        assert!(SlabProfile::new(1.0, 1.0, 1.0, vec![Layer { x_left: -1.0, x_right: 0.5, n: 1.2 }]).is_err());
        assert!(SlabProfile::new(
            1.0,
            1.0,
            1.0,
            vec![Layer { x_left: -1.0, x_right: 0.0, n: 1.2 }, Layer { x_left: 0.1, x_right: 1.0, n: 1.2 }]
        )
        .is_err());
    }

    #[test]
    fn derived_quantities() {
        let p = SlabProfile::new(
            2.0,
            1.1,
            1.0,
            vec![Layer { x_left: -1.0, x_right: 0.0, n: 1.4 }, Layer { x_left: 0.0, x_right: 1.0, n: 1.6 }],
        )
        .unwrap();
        assert_eq!(p.n_star, 1.6);
        assert!((p.q_plus - 4.0 * (2.56 - 1.0)).abs() < 1e-14);
        assert!((p.q_minus - 4.0 * (2.56 - 1.21)).abs() < 1e-14);
        assert_eq!(p.index_at(-0.5), 1.4);
        assert_eq!(p.index_at(0.5), 1.6);
        assert!(p.q_at(0.5).abs() < 1e-15);
        assert!(p.q_at(0.5) >= 0.0 && p.q_at(-0.5) > 0.0 && p.q_at(5.0) > 0.0);
    }

    proptest! {
        #[test]
        fn determinant_is_one(g in 0.0f64..20.0, n1 in 1.0f64..2.0, n2 in 1.0f64..2.0, k in 0.5f64..5.0) {
            let p = SlabProfile::new(k, 1.0, 1.0, vec![
                Layer { x_left: -1.0, x_right: -0.2, n: n1 },
                Layer { x_left: -0.2, x_right: 1.0, n: n2 },
            ]).unwrap();
            let m = p.transfer_matrix(g);
            let scale = m.iter().flatten().map(|v| v.abs()).fold(1.0, f64::max);
            prop_assert!((det(&m) - 1.0).abs() < 1e-12 * scale * scale);
        }
    }
}
