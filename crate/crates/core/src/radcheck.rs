//! Radiation-condition functionals on a ladder of radii.
//!
//! For the radiating part the functional is
//! `int_{dOmega_R} |du_0/dnu - i beta_0 u_0|^2 dl`; for guided part `l` it is
//! `int |du_l/dnu - i beta_l u_l|^2 dl` over `dQ_R` or `dOmega_R` depending on
//! the variant, weighted by `sqrt(R)` in the default variant.

use crate::farfield::{FarField, PointSources};
use crate::geometry::{square_boundary, stadium_boundary, BoundaryNode, Segment, SquareBoundary, StadiumBoundary};
use crate::green::{GreenKernel, KernelPart};
use crate::modes::GuidedMode;
use crate::probe::FieldProbe;
use crate::profile::SlabProfile;
use crate::quadrature::fit_line;
use crate::{Error, Result};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

type C = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Radiating flux on `dOmega_R` plus `sqrt(R)` times guided fluxes on `dQ_R`.
    RadCond,
    /// All components on `dOmega_R`, no weight.
    RadCondIi,
    /// R-integrated radiating flux with the cladding wavenumber plus guided fluxes on `dQ_R`.
    Cm1,
    /// R-integrated sum of all components on `dOmega_R`, cladding wavenumber for `u_0`.
    Cm2,
}

impl Variant {
    pub fn is_cumulative(self) -> bool {
        matches!(self, Variant::Cm1 | Variant::Cm2)
    }

    fn guided_on_square(self) -> bool {
        matches!(self, Variant::RadCond | Variant::Cm1)
    }

    pub fn default_beta0(self) -> BetaZero {
        if self.is_cumulative() {
            BetaZero::Cladding
        } else {
            BetaZero::Pointwise
        }
    }
}

/// Wavenumber used with the radiating part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaZero {
    /// `k n(x)` at each boundary node.
    Pointwise,
    /// `k n_cl` everywhere.
    Cladding,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadcheckSettings {
    pub variant: Variant,
    pub beta0: Option<BetaZero>,
    /// Last rung must be below `tol` times the first.
    pub tol: f64,
    /// Boundary nodes per local wavelength.
    pub nodes_per_wavelength: f64,
    /// Series below this fraction of the largest value in the report count as zero.
    pub floor: f64,
}

impl Default for RadcheckSettings {
    fn default() -> Self {
        Self { variant: Variant::RadCond, beta0: None, tol: 1e-3, nodes_per_wavelength: 12.0, floor: 1e-12 }
    }
}

impl RadcheckSettings {
    pub fn beta0(&self) -> BetaZero {
        self.beta0.unwrap_or(self.variant.default_beta0())
    }
}

/// `R_j = r0 2^(j/2)`, `j = 0..rungs`.
pub fn ladder(r0: f64, rungs: usize) -> Vec<f64> {
    (0..rungs).map(|j| r0 * 2f64.powf(j as f64 / 2.0)).collect()
}

/// Number of boundary nodes for a curve of the given length.
fn node_count(length: f64, profile: &SlabProfile, per_wavelength: f64) -> usize {
    let wavelength = 2.0 * PI / (profile.k * profile.n_star);
    ((per_wavelength * length / wavelength).ceil() as usize).max(128)
}

/// Stadium and square boundaries sampled as a certificate rung of radius `r` uses them.
pub fn rung_boundaries(
    r: f64,
    profile: &SlabProfile,
    settings: &RadcheckSettings,
) -> Result<(StadiumBoundary, SquareBoundary)> {
    let npw = settings.nodes_per_wavelength;
    let perimeter = 2.0 * PI * r + 4.0 * profile.h;
    Ok((
        stadium_boundary(r, profile.h, node_count(perimeter, profile, npw))?,
        square_boundary(r, node_count(8.0 * r, profile, npw))?,
    ))
}

/// `int |du_0/dnu - i beta_0 u_0|^2 dl` over the given nodes.
pub fn radiating_flux<P: FieldProbe + ?Sized>(
    probe: &P,
    nodes: &[BoundaryNode],
    profile: &SlabProfile,
    beta0: BetaZero,
) -> Result<f64> {
    let terms: Vec<f64> = nodes
        .par_iter()
        .map(|n| {
            let (u, du) = probe.normal_sample(n, KernelPart::Radiating)?;
            let kn = match beta0 {
                BetaZero::Pointwise => profile.k * profile.index_at(n.x),
                BetaZero::Cladding => profile.k * profile.cladding_index(),
            };
            Ok(n.w * (du - C::i() * kn * u).norm_sqr())
        })
        .collect::<Result<_>>()?;
    Ok(terms.iter().sum())
}

/// Unweighted guided flux `int |du_l/dnu - i beta_l u_l|^2 dl`, split into
/// nodes on sides `|x| = R` (caps for a stadium) and `|z| = R` (flats).
pub fn guided_flux_sides<P: FieldProbe + ?Sized>(
    probe: &P,
    l: usize,
    beta: f64,
    nodes: &[BoundaryNode],
) -> Result<(f64, f64)> {
    let terms: Vec<(Segment, f64)> = nodes
        .par_iter()
        .map(|n| {
            let (u, du) = probe.normal_sample(n, KernelPart::Guided(l))?;
            Ok((n.segment, n.w * (du - C::i() * beta * u).norm_sqr()))
        })
        .collect::<Result<_>>()?;
    let mut sides = (0.0, 0.0);
    for (seg, t) in terms {
        match seg {
            Segment::SideX | Segment::Cap => sides.0 += t,
            Segment::SideZ | Segment::Flat => sides.1 += t,
        }
    }
    Ok(sides)
}

/// `sqrt(R) int_{dQ_R} |du_l/dnu - i beta_l u_l|^2 dl`.
pub fn guided_flux<P: FieldProbe + ?Sized>(probe: &P, mode: &GuidedMode, r: f64, profile: &SlabProfile) -> Result<f64> {
    let sq = square_boundary(r, node_count(8.0 * r, profile, RadcheckSettings::default().nodes_per_wavelength))?;
    let (a, b) = guided_flux_sides(probe, mode.index, mode.beta, &sq.nodes)?;
    Ok(r.sqrt() * (a + b))
}

#[derive(Debug, Clone, Serialize)]
pub struct GuidedSeries {
    pub mode: usize,
    pub beta: f64,
    /// Reported values (weighted by `sqrt(R)` in the default variant).
    pub flux: Vec<f64>,
    /// Unweighted contributions of the `|x| = R` sides (caps) and `|z| = R` sides (flats).
    pub x_sides: Vec<f64>,
    pub z_sides: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Cumulative {
    /// Trapezoid rule over the ladder plus a power-law tail; `None` when the
    /// tail slope is not below `-1 - TAIL_MARGIN`.
    pub radiating: Option<f64>,
    pub guided: Vec<Option<f64>>,
    pub extrapolated: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FluxReport {
    pub variant: Variant,
    pub beta0: BetaZero,
    pub radii: Vec<f64>,
    pub radiating_flux: Vec<f64>,
    pub guided: Vec<GuidedSeries>,
    /// Least-squares log-log slopes over the whole ladder (radiating first).
    pub fitted_slopes: Vec<Option<f64>>,
    /// The same over the top half of the ladder.
    pub tail_slopes: Vec<Option<f64>>,
    pub cumulative: Option<Cumulative>,
    pub tol: f64,
    pub floor: f64,
    pub series_pass: Vec<bool>,
    pub pass: bool,
}

impl FluxReport {
    /// All series, radiating first.
    pub fn series(&self) -> Vec<&[f64]> {
        let mut out = vec![self.radiating_flux.as_slice()];
        out.extend(self.guided.iter().map(|g| g.flux.as_slice()));
        out
    }

    /// CSV with columns `R, flux_0, flux_1.., slope_0, slope_1..`; slopes are
    /// between consecutive rungs and empty on the first row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let series = self.series();
        let mut head = vec!["R".to_string()];
        head.extend((0..series.len()).map(|l| format!("flux_{l}")));
        head.extend((0..series.len()).map(|l| format!("slope_{l}")));
        writeln!(w, "{}", head.join(","))?;
        for (j, r) in self.radii.iter().enumerate() {
            let mut row = vec![crate::csv::fmt(*r)];
            row.extend(series.iter().map(|s| crate::csv::fmt(s[j])));
            for s in &series {
                row.push(if j > 0 && s[j] > 0.0 && s[j - 1] > 0.0 {
                    crate::csv::fmt((s[j] / s[j - 1]).ln() / (r / self.radii[j - 1]).ln())
                } else {
                    String::new()
                });
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn slope(radii: &[f64], values: &[f64], floor: f64) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        radii.iter().zip(values).filter(|(_, v)| **v > floor && **v > 0.0).map(|(r, v)| (r.ln(), v.ln())).unzip();
    if xs.len() < 2 {
        return None;
    }
    fit_line(&xs, &ys).map(|(s, _)| s)
}

/// Tail slopes within this of -1 are treated as divergent.
pub const TAIL_MARGIN: f64 = 0.05;

/// `int_{R_0}^inf` from the ladder values; `None` if the tail diverges.
fn cumulative(radii: &[f64], values: &[f64], tail: Option<f64>, floor: f64) -> Option<f64> {
    if values.iter().all(|v| *v <= floor) {
        return Some(0.0);
    }
    let mut acc = 0.0;
    for j in 1..radii.len() {
        acc += 0.5 * (values[j] + values[j - 1]) * (radii[j] - radii[j - 1]);
    }
    let s = tail?;
    if s >= -1.0 - TAIL_MARGIN {
        return None;
    }
    let (r, v) = (*radii.last().unwrap(), *values.last().unwrap());
    Some(acc + v * r / (-s - 1.0))
}

fn limit_pass(values: &[f64], tol: f64, floor: f64) -> bool {
    if values.iter().all(|v| *v <= floor) {
        return true;
    }
    let n = values.len();
    let top = &values[n / 2..];
    let decreasing = top.windows(2).all(|w| w[1] <= w[0] + floor);
    decreasing && values[n - 1] < tol * values[0] + floor
}

/// Evaluates every functional of the chosen variant along `radii`. The probe
/// for each rung comes from `probe_for(R)`, so evaluators can be sized to it.
pub fn certify_with<P, F>(
    probe_for: F,
    profile: &SlabProfile,
    modes: &[GuidedMode],
    radii: &[f64],
    settings: &RadcheckSettings,
) -> Result<FluxReport>
where
    P: FieldProbe,
    F: Fn(f64) -> Result<P>,
{
    if radii.len() < 4 {
        return Err(Error::InvalidGeometry(format!("ladder needs at least 4 radii, got {}", radii.len())));
    }
    if radii.windows(2).any(|w| !(w[1] > w[0])) || !(radii[0] > 0.0) {
        return Err(Error::InvalidGeometry("ladder radii must be positive and strictly increasing".into()));
    }
    let variant = settings.variant;
    let beta0 = settings.beta0();
    let npw = settings.nodes_per_wavelength;
    let mut rad = Vec::with_capacity(radii.len());
    let mut guided: Vec<GuidedSeries> = modes
        .iter()
        .map(|m| GuidedSeries { mode: m.index, beta: m.beta, flux: vec![], x_sides: vec![], z_sides: vec![] })
        .collect();
    for &r in radii {
        let probe = probe_for(r)?;
        if probe.mode_count() != modes.len() {
            return Err(Error::ModeIndex { index: probe.mode_count(), count: modes.len() });
        }
        let perimeter = 2.0 * PI * r + 4.0 * profile.h;
        let st = stadium_boundary(r, profile.h, node_count(perimeter, profile, npw))?;
        rad.push(radiating_flux(&probe, &st.nodes, profile, beta0)?);
        if modes.is_empty() {
            continue;
        }
        let sq;
        let nodes = if variant.guided_on_square() {
            sq = square_boundary(r, node_count(8.0 * r, profile, npw))?;
            &sq.nodes
        } else {
            &st.nodes
        };
        for (g, m) in guided.iter_mut().zip(modes) {
            let (a, b) = guided_flux_sides(&probe, m.index, m.beta, nodes)?;
            let weight = if variant == Variant::RadCond { r.sqrt() } else { 1.0 };
            g.flux.push(weight * (a + b));
            g.x_sides.push(a);
            g.z_sides.push(b);
        }
    }
    let all_max = rad.iter().chain(guided.iter().flat_map(|g| g.flux.iter())).fold(0.0f64, |a, b| a.max(*b));
    let floor = settings.floor * all_max;
    let half = radii.len() / 2;
    let mut series: Vec<&[f64]> = vec![&rad];
    series.extend(guided.iter().map(|g| g.flux.as_slice()));
    let fitted_slopes: Vec<Option<f64>> = series.iter().map(|s| slope(radii, s, floor)).collect();
    let tail_slopes: Vec<Option<f64>> = series.iter().map(|s| slope(&radii[half..], &s[half..], floor)).collect();
    let (cum, series_pass) = if variant.is_cumulative() {
        let sums: Vec<Option<f64>> =
            series.iter().zip(&tail_slopes).map(|(s, t)| cumulative(radii, s, *t, floor)).collect();
        let pass = sums.iter().map(|s| s.is_some()).collect();
        let c = Cumulative { radiating: sums[0], guided: sums[1..].to_vec(), extrapolated: true };
        (Some(c), pass)
    } else {
        (None, series.iter().map(|s| limit_pass(s, settings.tol, floor)).collect::<Vec<bool>>())
    };
    let pass = series_pass.iter().all(|p| *p);
    Ok(FluxReport {
        variant,
        beta0,
        radii: radii.to_vec(),
        radiating_flux: rad,
        guided,
        fitted_slopes,
        tail_slopes,
        cumulative: cum,
        tol: settings.tol,
        floor,
        series_pass,
        pass,
    })
}

/// [`certify_with`] using one probe for every rung.
pub fn certify<P: FieldProbe>(
    probe: &P,
    profile: &SlabProfile,
    modes: &[GuidedMode],
    radii: &[f64],
    settings: &RadcheckSettings,
) -> Result<FluxReport> {
    certify_with(|_| Ok(ByRef(probe)), profile, modes, radii, settings)
}

struct ByRef<'a, P>(&'a P);

impl<P: FieldProbe> FieldProbe for ByRef<'_, P> {
    fn mode_count(&self) -> usize {
        self.0.mode_count()
    }
    fn sample(&self, x: f64, z: f64, part: KernelPart) -> Result<crate::green::KernelValue> {
        self.0.sample(x, z, part)
    }
    fn normal_sample(&self, node: &BoundaryNode, part: KernelPart) -> Result<(C, C)> {
        self.0.normal_sample(node, part)
    }
}

/// Far-field evaluator for the sources, sized for `dOmega_R` and `dQ_R`.
pub fn far_probe(kernel: &GreenKernel, sources: &PointSources, r: f64) -> Result<FarField> {
    let h = kernel.profile.h;
    let Some((x0, x1, z0, z1)) = sources.bounds() else {
        return FarField::new(kernel, sources.clone(), r, 2.0 * r);
    };
    let flat = |x: f64| (x.abs() - h).max(0.0);
    let corners = [(x0, z0), (x0, z1), (x1, z0), (x1, z1)];
    // both level functions are 1-Lipschitz, so R minus their largest value on the
    // source box bounds the distance from the boundary to every source
    let reach_stadium = corners.iter().map(|(x, z)| flat(*x).hypot(*z)).fold(0.0, f64::max);
    let reach_square = corners.iter().map(|(x, z)| x.abs().max(z.abs())).fold(0.0, f64::max);
    let d_min = r - reach_stadium.max(reach_square);
    if !(d_min > 0.0) {
        return Err(Error::InvalidGeometry(format!("radius {r} does not clear the sources")));
    }
    let far = corners.iter().map(|(x, z)| x.hypot(*z)).fold(0.0, f64::max);
    FarField::new(kernel, sources.clone(), d_min, 2f64.sqrt() * r + h + far)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::green::KernelValue;
    use crate::modes::find_modes;
    use crate::probe::{Conjugate, FnProbe};

    fn slab() -> (SlabProfile, Vec<GuidedMode>) {
        let p = SlabProfile::symmetric_slab(1.0, 1.0, 1.5, 1.0).unwrap();
        let m = find_modes(&p).unwrap();
        (p, m)
    }

    fn guided_wave(m: &GuidedMode, sign: f64) -> impl Fn(f64, f64, KernelPart) -> Result<KernelValue> + Sync + '_ {
        move |x, z, part| {
            if part != KernelPart::Guided(1) {
                return Ok(KernelValue::default());
            }
            let (e, de) = m.eval_with_derivative(x);
            let ph = C::from_polar(1.0, sign * m.beta * z);
            Ok(KernelValue { value: ph * e, dx: ph * de, dz: C::new(0.0, sign * m.beta) * ph * e })
        }
    }

    #[test]
    fn zero_field_passes_with_zero_report() {
        let (p, m) = slab();
        let zero = FnProbe { modes: 1, f: |_, _, _| Ok(KernelValue::default()) };
        let rep = certify(&zero, &p, &m, &ladder(5.0, 4), &RadcheckSettings::default()).unwrap();
        assert!(rep.pass);
        assert!(rep.radiating_flux.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn outgoing_guided_wave_is_annihilated_on_top_side() {
        let (_, m) = slab();
        let f = guided_wave(&m[0], 1.0);
        let probe = FnProbe { modes: 1, f: &f };
        let sq = square_boundary(8.0, 512).unwrap();
        let top: Vec<BoundaryNode> = sq.nodes.iter().copied().filter(|n| n.z == 8.0).collect();
        let (a, b) = guided_flux_sides(&probe, 1, m[0].beta, &top).unwrap();
        assert_eq!(a, 0.0);
        assert!(b < 1e-28, "{b}");
    }

    #[test]
    fn incoming_guided_wave_fails() {
        let (p, m) = slab();
        let f = guided_wave(&m[0], 1.0);
        let probe = Conjugate(FnProbe { modes: 1, f: &f });
        let rep = certify(&probe, &p, &m, &ladder(5.0, 6), &RadcheckSettings::default()).unwrap();
        assert!(!rep.pass);
        assert!(!rep.series_pass[1]);
    }

    #[test]
    fn homogeneity_is_quadratic() {
        let (p, _) = slab();
        let f = |x: f64, z: f64, _| {
            let r = x.hypot(z);
            let v = C::from_polar(1.0 / r, 1.3 * r);
            let d = v * C::new(-1.0 / r, 1.3);
            Ok(KernelValue { value: v, dx: d * x / r, dz: d * z / r })
        };
        let a = FnProbe { modes: 0, f };
        let st = stadium_boundary(6.0, 1.0, 400).unwrap();
        let f1 = radiating_flux(&a, &st.nodes, &p, BetaZero::Cladding).unwrap();
        let b = FnProbe {
            modes: 0,
            f: |x, z, part| f(x, z, part).map(|v| KernelValue { value: v.value * 3.0, dx: v.dx * 3.0, dz: v.dz * 3.0 }),
        };
        let f3 = radiating_flux(&b, &st.nodes, &p, BetaZero::Cladding).unwrap();
        assert!((f3 - 9.0 * f1).abs() < 1e-12 * f3);
    }

    #[test]
    fn cumulative_tail() {
        let r = ladder(1.0, 8);
        let v: Vec<f64> = r.iter().map(|x| x.powf(-3.0)).collect();
        let s = slope(&r[4..], &v[4..], 0.0).unwrap();
        assert!((s + 3.0).abs() < 1e-12);
        let c = cumulative(&r, &v, Some(s), 0.0).unwrap();
        // trapezoid on a sqrt(2) ladder overestimates the convex integrand; exact is 1/2
        assert!(c > 0.5 && c < 0.6, "{c}");
        let v1: Vec<f64> = r.iter().map(|x| 1.0 / x).collect();
        assert!(cumulative(&r, &v1, slope(&r, &v1, 0.0), 0.0).is_none());
    }
}
