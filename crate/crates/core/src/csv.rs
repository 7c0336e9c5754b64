//! Float formatting shared by every CSV writer.

/// Shortest representation that round-trips, switching to exponent form for
/// very small or very large magnitudes.
pub fn fmt(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02e23, 12345.678, 0.0, -2.5e-7] {
            let s = fmt(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(fmt(1e-7), "1e-7");
        assert_eq!(fmt(0.25), "0.25");
    }
}
