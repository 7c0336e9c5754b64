//! Bessel functions of integer order 0 and 1 for real positive argument, the
//! Hankel functions built from them, and complex exponential integrals.
//!
//! Bessel evaluation switches method by argument:
//!
//! * `x <= 4`: ascending power series (no cancellation problems there);
//! * `4 < x <= 20`: Miller backward recurrence for `J_n`, normalised by
//!   `J_0 + 2 sum J_2k = 1`, with `Y_0` from the Neumann series and `Y_1 = -Y_0'`;
//! * `x > 20`: Hankel asymptotic expansion, truncated at its smallest term
//!   (about `exp(-2x)` relative error).

use num_complex::Complex64;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const SERIES_MAX: f64 = 4.0;
const ASYMPTOTIC_MIN: f64 = 20.0;

/// `(J0, J1, Y0, Y1)` at `x > 0`.
pub fn bessel_jy01(x: f64) -> (f64, f64, f64, f64) {
    assert!(x > 0.0, "Bessel evaluation requires x > 0, got {x}");
    if x <= SERIES_MAX {
        series_jy01(x)
    } else if x <= ASYMPTOTIC_MIN {
        miller_jy01(x)
    } else {
        let h0 = hankel_asymptotic(0.0, x);
        let h1 = hankel_asymptotic(1.0, x);
        (h0.re, h1.re, h0.im, h1.im)
    }
}

/// `H0^(1)(x) = J0(x) + i Y0(x)`.
pub fn hankel0(x: f64) -> Complex64 {
    let (j0, _, y0, _) = bessel_jy01(x);
    Complex64::new(j0, y0)
}

/// `(H0^(1)(x), H1^(1)(x))`.
pub fn hankel01(x: f64) -> (Complex64, Complex64) {
    let (j0, j1, y0, y1) = bessel_jy01(x);
    (Complex64::new(j0, y0), Complex64::new(j1, y1))
}

/// Ascending series; `Y_n` from A&S 9.1.11 with digamma coefficients.
pub(crate) fn series_jy01(x: f64) -> (f64, f64, f64, f64) {
    let q = -0.25 * x * x;
    let half = 0.5 * x;
    let log_half = half.ln();

    // J0, and the Y0 digamma sum: psi(k+1) = -gamma + H_k
    let mut term0 = 1.0; // q^k / (k!)^2
    let mut j0 = 0.0;
    let mut y0_sum = 0.0;
    // J1 with term1 = q^k / (k! (k+1)!)
    let mut term1 = 1.0;
    let mut j1 = 0.0;
    let mut y1_sum = 0.0;
    let mut harmonic = 0.0; // H_k
    for k in 0..60 {
        let kf = k as f64;
        if k > 0 {
            term0 *= q / (kf * kf);
            term1 *= q / (kf * (kf + 1.0));
            harmonic += 1.0 / kf;
        }
        let psi_k1 = -EULER_GAMMA + harmonic;
        let psi_k2 = psi_k1 + 1.0 / (kf + 1.0);
        j0 += term0;
        y0_sum += 2.0 * psi_k1 * term0;
        j1 += term1;
        y1_sum += (psi_k1 + psi_k2) * term1;
        if term0.abs() < 1e-18 * j0.abs().max(1e-300) && term1.abs() < 1e-18 {
            break;
        }
    }
    j1 *= half;
    let y0 = (2.0 / PI) * log_half * j0 - y0_sum / PI;
    let y1 = -1.0 / (PI * half) + (2.0 / PI) * log_half * j1 - half * y1_sum / PI;
    (j0, j1, y0, y1)
}

fn miller_jy01(x: f64) -> (f64, f64, f64, f64) {
    // start well above x; even so that the normalisation sum closes on J_0
    let mut start = (x + 30.0 + 8.0 * x.cbrt()) as usize;
    if start % 2 == 1 {
        start += 1;
    }
    let mut j = vec![0.0f64; start + 2];
    j[start + 1] = 0.0;
    j[start] = 1e-300;
    for n in (1..=start).rev() {
        j[n - 1] = 2.0 * n as f64 / x * j[n] - j[n + 1];
        if j[n - 1].abs() > 1e250 {
            for v in j.iter_mut().skip(n - 1) {
                *v *= 1e-250;
            }
        }
    }
    let mut norm = j[0];
    let mut k = 2;
    while k <= start {
        norm += 2.0 * j[k];
        k += 2;
    }
    for v in j.iter_mut() {
        *v /= norm;
    }
    let j0 = j[0];
    let j1 = j[1];
    // Neumann series Y0 = (2/pi)(ln(x/2)+gamma) J0 - (4/pi) sum (-1)^k J_2k / k
    let lg = (0.5 * x).ln() + EULER_GAMMA;
    let mut s = 0.0;
    let mut ds = 0.0;
    let mut kk = 1;
    while 2 * kk < start {
        let sign = if kk % 2 == 0 { 1.0 } else { -1.0 };
        let kf = kk as f64;
        s += sign * j[2 * kk] / kf;
        ds += sign * 0.5 * (j[2 * kk - 1] - j[2 * kk + 1]) / kf;
        kk += 1;
    }
    let y0 = (2.0 / PI) * lg * j0 - (4.0 / PI) * s;
    let dy0 = (2.0 / PI) * (j0 / x - lg * j1) - (4.0 / PI) * ds;
    (j0, j1, y0, -dy0)
}

fn hankel_asymptotic(nu: f64, x: f64) -> Complex64 {
    let mu = 4.0 * nu * nu;
    let phase = x - nu * FRAC_PI_2 - FRAC_PI_4;
    let mut sum = Complex64::new(1.0, 0.0);
    let mut coef = 1.0f64;
    let mut ipow = Complex64::new(1.0, 0.0);
    let mut last = f64::INFINITY;
    for k in 1..200 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        coef *= (mu - odd * odd) / (kf * 8.0 * x);
        ipow *= Complex64::i();
        let t = ipow * coef;
        let mag = coef.abs();
        if mag > last {
            break;
        }
        sum += t;
        last = mag;
        if mag < 1e-17 {
            break;
        }
    }
    (2.0 / (PI * x)).sqrt() * Complex64::from_polar(1.0, phase) * sum
}

/// Exponential integral `E1(z)` for `Re z >= 0`, `z != 0` (principal branch).
pub fn expint_e1(z: Complex64) -> Complex64 {
    if z.norm() <= 1.5 {
        // E1 = -gamma - ln z - sum (-z)^k / (k k!)
        let mut sum = Complex64::new(0.0, 0.0);
        let mut term = Complex64::new(1.0, 0.0);
        for k in 1..200 {
            let kf = k as f64;
            term *= -z / kf;
            let t = term / kf;
            sum += t;
            if t.norm() < 1e-17 * sum.norm().max(1e-300) {
                break;
            }
        }
        -EULER_GAMMA - z.ln() - sum
    } else {
        expint_cf(1, z)
    }
}

/// `E2(z) = exp(-z) - z E1(z)` for `Re z >= 0`.
pub fn expint_e2(z: Complex64) -> Complex64 {
    if z.norm() <= 1.5 {
        (-z).exp() - z * expint_e1(z)
    } else {
        expint_cf(2, z)
    }
}

/// Continued fraction for `E_n(z)` (modified Lentz), valid for `|z| > 1`, `Re z >= 0`.
fn expint_cf(n: usize, z: Complex64) -> Complex64 {
    let tiny = 1e-300;
    let nf = n as f64;
    let mut b = z + nf;
    let mut c = Complex64::new(1.0 / tiny, 0.0);
    let mut d = Complex64::new(1.0, 0.0) / b;
    let mut h = d;
    for i in 1..100_000 {
        let fi = i as f64;
        let an = -fi * (nf - 1.0 + fi);
        b += 2.0;
        d = Complex64::new(1.0, 0.0) / (d * an + b);
        c = b + c.inv() * an;
        let del = c * d;
        h *= del;
        if (del - 1.0).norm() < 1e-16 {
            break;
        }
    }
    h * (-z).exp()
}
