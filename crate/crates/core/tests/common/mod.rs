//! Reference computations shared by the integration tests. Nothing here calls
//! into the spectral or mode machinery of the library.
#![allow(dead_code)]

use num_complex::Complex64;
use slabwave::profile::SlabProfile;
use slabwave::quadrature::GaussRule;
use std::f64::consts::PI;

type C = Complex64;

/// Brute-force roots of the even (`kappa tan(kappa h) = sigma`) and odd
/// (`-kappa cot(kappa h) = sigma`) slab relations. Returned as `gamma = kappa^2`,
/// `kappa` being the core transverse wavenumber.
pub fn symmetric_slab_gammas(k: f64, h: f64, n_co: f64, n_cl: f64) -> Vec<f64> {
    let v2 = k * k * (n_co * n_co - n_cl * n_cl);
    let even = |kap: f64| {
        let s = (v2 - kap * kap).max(0.0).sqrt();
        kap * (kap * h).sin() - s * (kap * h).cos()
    };
    let odd = |kap: f64| {
        let s = (v2 - kap * kap).max(0.0).sqrt();
        -kap * (kap * h).cos() - s * (kap * h).sin()
    };
    let top = v2.sqrt();
    let mut roots = Vec::new();
    let n = 200_000;
    for f in [&even as &dyn Fn(f64) -> f64, &odd] {
        let mut prev_x = 1e-12;
        let mut prev = f(prev_x);
        for i in 1..=n {
            let x = top * i as f64 / n as f64 * (1.0 - 1e-12);
            let v = f(x);
            if prev == 0.0 || prev.signum() != v.signum() {
                let (mut lo, mut hi) = (prev_x, x);
                let flo = f(lo);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if f(mid).signum() == flo.signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                // tan/cot poles also flip sign; keep genuine zeros only
                if f(0.5 * (lo + hi)).abs() < 1e-8 * top.max(1.0) {
                    roots.push(0.5 * (lo + hi));
                }
            }
            prev_x = x;
            prev = v;
        }
    }
    let mut g: Vec<f64> = roots.iter().map(|kap| kap * kap).collect();
    g.sort_by(|a, b| a.partial_cmp(b).unwrap());
    g
}

fn propagate(mu: C, t: f64, s: (C, C)) -> (C, C) {
    let (c, sn) = ((mu * t).cos(), (mu * t).sin());
    let sinc = if mu.norm() * t.abs() < 1e-8 { C::new(t, 0.0) } else { sn / mu };
    (c * s.0 + sinc * s.1, -mu * sn * s.0 + c * s.1)
}

fn mu_of(k: f64, n: f64, beta: C) -> C {
    (C::new(k * k * n * n, 0.0) - beta * beta).sqrt()
}

/// Transverse Green's function `g'' + (k^2 n^2 - beta^2) g = delta(x - xi)`,
/// decaying (outgoing) in both claddings.
pub fn transverse_green(p: &SlabProfile, beta: C, x: f64, xi: f64) -> C {
    let h = p.h;
    let ml = mu_of(p.k, p.n_minus, beta);
    let mr = mu_of(p.k, p.n_plus, beta);
    let i = C::i();
    let (lo, hi) = if x <= xi { (x, xi) } else { (xi, x) };
    // phi_minus: exp(-i ml (x + h)) left of the core
    let walk_right = |to: f64| -> (C, C) {
        let mut s = (C::new(1.0, 0.0), -i * ml);
        for l in &p.core {
            if to <= l.x_left {
                break;
            }
            s = propagate(mu_of(p.k, l.n, beta), to.min(l.x_right) - l.x_left, s);
        }
        s
    };
    // phi_plus: exp(i mr (x - h)) right of the core
    let walk_left = |to: f64| -> (C, C) {
        let mut s = (C::new(1.0, 0.0), i * mr);
        for l in p.core.iter().rev() {
            if to >= l.x_right {
                break;
            }
            s = propagate(mu_of(p.k, l.n, beta), to.max(l.x_left) - l.x_right, s);
        }
        s
    };
    let at_h = walk_right(h);
    let a = 0.5 * (at_h.0 + at_h.1 / (i * mr));
    let b = 0.5 * (at_h.0 - at_h.1 / (i * mr));
    let w = 2.0 * i * mr * b;
    if lo >= h {
        let (sl, sh) = (lo - h, hi - h);
        return ((a / b) * (i * mr * (sl + sh)).exp() + (i * mr * (sh - sl)).exp()) / (2.0 * i * mr);
    }
    if hi <= -h {
        let at_mh = walk_left(-h);
        let c = 0.5 * (at_mh.0 - at_mh.1 / (i * ml));
        let d = 0.5 * (at_mh.0 + at_mh.1 / (i * ml));
        let (sl, sh) = (lo + h, hi + h);
        return ((c / d) * (-i * ml * (sl + sh)).exp() + (i * ml * (sh - sl)).exp()) / (2.0 * i * ml);
    }
    let phi_minus = if lo <= -h { (-i * ml * (lo + h)).exp() } else { walk_right(lo).0 };
    let phi_plus = if hi >= h { (i * mr * (hi - h)).exp() } else { walk_left(hi).0 };
    phi_minus * phi_plus / w
}

/// Total outgoing Green's function by Fourier synthesis in `z` along a contour
/// passing below the positive poles and branch points and above the negative ones.
/// Needs `|x - xi| >= 0.2` for the truncation to be sharp.
pub fn fourier_green(p: &SlabProfile, x: f64, z: f64, xi: f64, zeta: f64) -> C {
    let sep = (x - xi).abs();
    assert!(sep >= 0.2, "oracle needs horizontal separation");
    let zs = z - zeta;
    let kn = p.k * p.n_star;
    let b = 1.6 * kn + 0.5;
    let eps = (0.25 * kn).min(3.0 / (zs.abs() + 1.0)).max(0.02);
    let top = b + 40.0 / sep;
    let width = (0.25f64).min(PI / (zs.abs() + x.abs() + xi.abs() + 1.0) / 2.0);
    let rule = GaussRule::new(16);
    let mut acc = C::new(0.0, 0.0);
    let outer = ((top - b) / width).ceil() as usize;
    let inner = ((2.0 * b) / width).ceil() as usize;
    let mut nodes = rule.composite(-top, -b, outer);
    nodes.extend(rule.composite(-b, b, inner));
    nodes.extend(rule.composite(b, top, outer));
    for (t, w) in nodes {
        let (beta, dbeta) = if t.abs() < b {
            // Im beta = -eps sin(a)(1 + cos a)/2 leaves the real axis smoothly at |t| = b
            let a = PI * t / b;
            let (s, c) = a.sin_cos();
            let im = -eps * 0.5 * s * (1.0 + c);
            let dim = -eps * 0.5 * (PI / b) * (c * (1.0 + c) - s * s);
            (C::new(t, im), C::new(1.0, dim))
        } else {
            (C::new(t, 0.0), C::new(1.0, 0.0))
        };
        acc += w * dbeta * transverse_green(p, beta, x, xi) * (C::i() * beta * zs).exp();
    }
    acc / (2.0 * PI)
}
