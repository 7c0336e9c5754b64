//! Command-level computations shared by the CLI and the tests.

use crate::config::RunConfig;
use crate::farfield::PointSources;
use crate::fields::{project_guided, radiating_part, Field2D, FieldRole, Grid2D};
use crate::green::GreenKernel;
use crate::modes::{find_modes_with, GuidedMode};
use crate::operator::GridOperator;
use crate::probe::{Conjugate, SampledProbe};
use crate::profile::SlabProfile;
use crate::radcheck::{certify, certify_with, far_probe, FluxReport};
use crate::scatter::{
    check_h1, check_h3, default_h2_probes, estimate_h2_norm, solve_fixed_point, source_columns, uniqueness_proxy,
    H1Report, H2Estimate, H3Report, SolveReport, UniquenessCheck,
};
use crate::{Error, Result};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;

type C = Complex64;

/// Profile, guided modes and kernel of a configuration.
#[derive(Debug, Clone)]
pub struct Setup {
    pub profile: SlabProfile,
    pub modes: Vec<GuidedMode>,
    pub kernel: GreenKernel,
}

pub fn setup(cfg: &RunConfig) -> Result<Setup> {
    let profile = cfg.profile.build()?;
    let modes = find_modes_with(&profile, &cfg.modes.into())?;
    let kernel = GreenKernel::new(profile.clone(), modes.clone()).with_settings(cfg.green);
    Ok(Setup { profile, modes, kernel })
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeSummary {
    pub index: usize,
    pub gamma: f64,
    pub beta: f64,
    pub sigma_plus: f64,
    pub sigma_minus: f64,
    pub zeros: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModesReport {
    pub k: f64,
    pub n_star: f64,
    pub n_minus: f64,
    pub n_plus: f64,
    pub spectral_gap: (f64, f64),
    #[serde(rename = "M")]
    pub count: usize,
    pub modes: Vec<ModeSummary>,
}

pub fn modes_report(s: &Setup) -> ModesReport {
    let p = &s.profile;
    ModesReport {
        k: p.k,
        n_star: p.n_star,
        n_minus: p.n_minus,
        n_plus: p.n_plus,
        spectral_gap: p.spectral_gap(),
        count: s.modes.len(),
        modes: s
            .modes
            .iter()
            .map(|m| ModeSummary {
                index: m.index,
                gamma: m.gamma,
                beta: m.beta,
                sigma_plus: m.sigma_plus,
                sigma_minus: m.sigma_minus,
                zeros: m.sign_changes(),
            })
            .collect(),
    }
}

/// `x, z, re_G, im_G, re_G0, im_G0, re_G1, im_G1, ...` on the configured lattice.
pub fn green_eval<W: Write>(cfg: &RunConfig, s: &Setup, mut out: W) -> Result<usize> {
    let spec = cfg.green_eval.ok_or_else(|| Error::Config("missing [green_eval] table".into()))?;
    s.kernel.require_symmetric()?;
    let [xi, zeta] = spec.source;
    let m = s.modes.len();
    let rows: Vec<Vec<C>> = spec
        .points()
        .par_iter()
        .map(|&(x, z)| {
            let g0 = s.kernel.radiating(x, z, xi, zeta)?;
            let gl: Vec<C> = (1..=m).map(|l| s.kernel.guided(l, x, z, xi, zeta)).collect::<Result<_>>()?;
            let mut row = vec![C::new(x, z), g0 + gl.iter().sum::<C>(), g0];
            row.extend(gl);
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let mut head = vec!["x", "z", "re_G", "im_G", "re_G0", "im_G0"].into_iter().map(String::from).collect::<Vec<_>>();
    for l in 1..=m {
        head.push(format!("re_G{l}"));
        head.push(format!("im_G{l}"));
    }
    writeln!(out, "{}", head.join(","))?;
    let f = crate::csv::fmt;
    for row in &rows {
        let mut cells = vec![f(row[0].re), f(row[0].im)];
        for v in &row[1..] {
            cells.push(f(v.re));
            cells.push(f(v.im));
        }
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(rows.len())
}

/// Sampled data and operator of a scattering run.
#[derive(Debug, Clone)]
pub struct Problem {
    pub grid: Grid2D,
    pub f: Field2D,
    pub p: Field2D,
    /// Factor applied to the configured perturbation to meet `h2_target`.
    pub p_scale: f64,
    pub op: GridOperator,
    pub h2: H2Estimate,
}

pub fn prepare(cfg: &RunConfig, s: &Setup) -> Result<Problem> {
    let grid = cfg.grid()?;
    let f = cfg.source_field(grid)?;
    let mut p = cfg.perturbation_field(grid)?;
    let op = GridOperator::build(&s.kernel, &grid, &source_columns(&f, &p))?;
    let probes = default_h2_probes(&p, s.profile.h)?;
    let mut h2 = estimate_h2_norm(&s.kernel, &op, &p, &probes)?;
    let mut p_scale = 1.0;
    if let Some(target) = cfg.solver.h2_target {
        if h2.norm == 0.0 {
            return Err(Error::Config("h2_target given but the perturbation is zero".into()));
        }
        p_scale = target / h2.norm;
        p = p.scaled(C::new(p_scale, 0.0));
        h2 = estimate_h2_norm(&s.kernel, &op, &p, &probes)?;
    }
    Ok(Problem { grid, f, p, p_scale, op, h2 })
}

/// Hypothesis checks. A command fills in only the checks it runs.
#[derive(Debug, Clone, Default, Serialize)]
pub struct HypothesisReport {
    pub h1_source: Option<H1Report>,
    pub h1: Option<H1Report>,
    pub h2: Option<H2Estimate>,
    pub h2_ok: Option<bool>,
    pub h3: Option<H3Report>,
    pub p_scale: f64,
}

impl HypothesisReport {
    /// All checks that were run hold.
    pub fn ok(&self) -> bool {
        self.h1_source.as_ref().is_none_or(|h| h.ok)
            && self.h1.as_ref().is_none_or(|h| h.ok)
            && self.h2_ok.is_none_or(|ok| ok)
            && self.h3.as_ref().is_none_or(|h| h.ok)
    }
}

/// Radii for the (H3) fit: the configured ladder, or five radii up to 95% of
/// the grid's z-reach.
pub fn h3_radii(cfg: &RunConfig, grid: &Grid2D) -> Vec<f64> {
    cfg.hypotheses.h3_radii.clone().unwrap_or_else(|| {
        let reach = grid.z_min.abs().min(grid.z_max.abs());
        [0.4, 0.5, 0.63, 0.78, 0.95].iter().map(|t| t * reach).collect()
    })
}

/// (H1) for source and perturbation, and (H3) when `with_h3`. Needs no operator.
pub fn verify_sampled(cfg: &RunConfig, profile: &SlabProfile, with_h3: bool) -> Result<HypothesisReport> {
    let grid = cfg.grid()?;
    let f = cfg.source_field(grid)?;
    let p = cfg.perturbation_field(grid)?;
    let h3 = if with_h3 { Some(check_h3(&p, profile.h, &h3_radii(cfg, &grid))?) } else { None };
    Ok(HypothesisReport {
        h1_source: Some(check_h1(&f)),
        h1: Some(check_h1(&p)),
        h3,
        p_scale: 1.0,
        ..Default::default()
    })
}

/// (H1) and (H2) on a prepared problem, and (H3) when `with_h3`.
pub fn hypotheses(cfg: &RunConfig, s: &Setup, pb: &Problem, with_h3: bool) -> Result<HypothesisReport> {
    let h3 = if with_h3 { Some(check_h3(&pb.p, s.profile.h, &h3_radii(cfg, &pb.grid))?) } else { None };
    Ok(HypothesisReport {
        h1_source: Some(check_h1(&pb.f)),
        h1: Some(check_h1(&pb.p)),
        h2_ok: Some(pb.h2.ok()),
        h2: Some(pb.h2.clone()),
        h3,
        p_scale: pb.p_scale,
    })
}

pub fn solve(cfg: &RunConfig, pb: &Problem) -> Result<(SolveReport, Option<UniquenessCheck>)> {
    let settings = &cfg.solver.settings;
    if cfg.solver.uniqueness_check {
        let (a, _, u) = uniqueness_proxy(&pb.op, &pb.f, &pb.p, pb.h2.norm, settings)?;
        Ok((a, Some(u)))
    } else {
        Ok((solve_fixed_point(&pb.op, &pb.f, &pb.p, pb.h2.norm, settings)?, None))
    }
}

/// `[u_0, u_1, ..., u_M]` on the grid.
pub fn decompose(u: &Field2D, modes: &[GuidedMode]) -> Result<Vec<Field2D>> {
    let mut out = vec![radiating_part(u, modes)?];
    for m in modes {
        out.push(project_guided(u, m)?);
    }
    Ok(out)
}

/// Point sources `(f - p u) dA` whose potential is `u`.
pub fn equivalent_sources(pb: &Problem, u: &Field2D) -> Result<PointSources> {
    let pu = pb.p.zip_with(u, FieldRole::Source, |p, u| p * u)?;
    Ok(PointSources::from_field(&pb.f.sub(&pu)?))
}

/// Certificates of the field generated by `sources` for each variant, plus the
/// same for its complex conjugate when `incoming` is set.
pub fn certify_sources(
    cfg: &RunConfig,
    s: &Setup,
    sources: &PointSources,
    incoming: bool,
) -> Result<(Vec<FluxReport>, Vec<FluxReport>)> {
    let rc = &cfg.radcheck;
    let radii = rc.radii(s.profile.k);
    let mut out = Vec::new();
    let mut inc = Vec::new();
    for &v in &rc.variants {
        let st = rc.settings(v);
        out.push(certify_with(|r| far_probe(&s.kernel, sources, r), &s.profile, &s.modes, &radii, &st)?);
        if incoming {
            inc.push(certify_with(
                |r| far_probe(&s.kernel, sources, r).map(Conjugate),
                &s.profile,
                &s.modes,
                &radii,
                &st,
            )?);
        }
    }
    Ok((out, inc))
}

/// Components `[u_0, u_1, ..., u_M]` from field containers: either one total
/// field, decomposed on its grid, or the radiating part and every guided part.
pub fn components(fields: Vec<Field2D>, modes: &[GuidedMode]) -> Result<Vec<Field2D>> {
    if let [u] = fields.as_slice() {
        if u.role != FieldRole::Radiating {
            return decompose(u, modes);
        }
    }
    let mut out: Vec<Option<Field2D>> = vec![None; modes.len() + 1];
    for f in fields {
        let slot = match f.role {
            FieldRole::Radiating => 0,
            FieldRole::Guided(l) if (1..=modes.len()).contains(&l) => l,
            other => return Err(Error::Format(format!("unexpected component role {other:?}"))),
        };
        if out[slot].replace(f).is_some() {
            return Err(Error::Format(format!("component {slot} given twice")));
        }
    }
    out.into_iter().enumerate().map(|(l, f)| f.ok_or_else(|| Error::Format(format!("component {l} missing")))).collect()
}

/// Certificates of sampled components for every configured variant. The ladder
/// must fit inside the grid.
pub fn certify_sampled(cfg: &RunConfig, s: &Setup, comps: Vec<Field2D>) -> Result<Vec<FluxReport>> {
    let probe = SampledProbe::new(comps)?;
    let rc = &cfg.radcheck;
    let radii = rc.radii(s.profile.k);
    rc.variants.iter().map(|&v| certify(&probe, &s.profile, &s.modes, &radii, &rc.settings(v))).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineSummary {
    pub modes: ModesReport,
    pub hypotheses: HypothesisReport,
    pub solve: SolveReport,
    pub uniqueness: Option<UniquenessCheck>,
    pub residual_ok: bool,
    /// Solution sup norm within the Neumann-series bound.
    pub bounded: bool,
    pub certificates: Vec<FluxReport>,
    pub incoming_controls: Vec<FluxReport>,
    pub incoming_rejected: bool,
    pub pass: bool,
}

/// modes, hypotheses, solve, decomposition and certificates in one run.
pub fn pipeline(cfg: &RunConfig) -> Result<(PipelineSummary, Vec<Field2D>)> {
    let s = setup(cfg)?;
    let pb = prepare(cfg, &s)?;
    let hyp = hypotheses(cfg, &s, &pb, true)?;
    let (solve, uniqueness) = solve(cfg, &pb)?;
    let residual_ok = solve.final_residual <= cfg.solver.settings.tol;
    let bounded = solve.neumann_bound.is_some_and(|b| solve.solution_sup <= b * (1.0 + 1e-9) + 1e-300);
    let mut fields = vec![solve.solution.clone()];
    fields.extend(decompose(&solve.solution, &s.modes)?);
    let sources = equivalent_sources(&pb, &solve.solution)?;
    let incoming = cfg.radcheck.incoming_control;
    let (certificates, incoming_controls) = certify_sources(cfg, &s, &sources, incoming)?;
    let incoming_rejected = incoming_controls.iter().all(|r| !r.pass);
    let pass = hyp.ok()
        && residual_ok
        && bounded
        && uniqueness.as_ref().is_none_or(|u| u.ok)
        && certificates.iter().all(|c| c.pass)
        && (!incoming || incoming_rejected);
    let summary = PipelineSummary {
        modes: modes_report(&s),
        hypotheses: hyp,
        solve,
        uniqueness,
        residual_ok,
        bounded,
        certificates,
        incoming_controls,
        incoming_rejected,
        pass,
    };
    Ok((summary, fields))
}
