//! Point access to a decomposed field `u = u_0 + sum_l u_l`.
//!
//! Components are addressed with [`KernelPart`]: `Radiating` is `u_0`,
//! `Guided(l)` is `u_l` and `Total` is `u`.

use crate::farfield::FarField;
use crate::fields::Field2D;
use crate::geometry::BoundaryNode;
use crate::green::{GreenKernel, KernelPart, KernelValue};
use crate::{Error, Result};
use num_complex::Complex64;

type C = Complex64;

pub trait FieldProbe: Sync {
    /// Number of guided components carried by the field.
    fn mode_count(&self) -> usize;

    /// Value and gradient of one component.
    fn sample(&self, x: f64, z: f64, part: KernelPart) -> Result<KernelValue>;

    /// Value and outward normal derivative on a boundary node.
    fn normal_sample(&self, node: &BoundaryNode, part: KernelPart) -> Result<(C, C)> {
        let v = self.sample(node.x, node.z, part)?;
        Ok((v.value, v.normal(node.nu_x, node.nu_z)))
    }
}

/// `G(.; xi, zeta)` as a field of the observer.
#[derive(Debug, Clone)]
pub struct GreenProbe<'a> {
    pub kernel: &'a GreenKernel,
    pub xi: f64,
    pub zeta: f64,
}

impl FieldProbe for GreenProbe<'_> {
    fn mode_count(&self) -> usize {
        self.kernel.modes.len()
    }

    fn sample(&self, x: f64, z: f64, part: KernelPart) -> Result<KernelValue> {
        self.kernel.part_full(part, x, z, self.xi, self.zeta)
    }
}

impl FieldProbe for FarField {
    fn mode_count(&self) -> usize {
        self.modes().len()
    }

    fn sample(&self, x: f64, z: f64, part: KernelPart) -> Result<KernelValue> {
        self.eval(x, z, part)
    }
}

/// Field given by a closure over `(x, z, part)`.
pub struct FnProbe<F> {
    pub modes: usize,
    pub f: F,
}

impl<F> FieldProbe for FnProbe<F>
where
    F: Fn(f64, f64, KernelPart) -> Result<KernelValue> + Sync,
{
    fn mode_count(&self) -> usize {
        self.modes
    }

    fn sample(&self, x: f64, z: f64, part: KernelPart) -> Result<KernelValue> {
        (self.f)(x, z, part)
    }
}

/// Complex conjugate of another probe: turns outgoing data into incoming.
pub struct Conjugate<P>(pub P);

impl<P: FieldProbe> FieldProbe for Conjugate<P> {
    fn mode_count(&self) -> usize {
        self.0.mode_count()
    }

    fn sample(&self, x: f64, z: f64, part: KernelPart) -> Result<KernelValue> {
        let v = self.0.sample(x, z, part)?;
        Ok(KernelValue { value: v.value.conj(), dx: v.dx.conj(), dz: v.dz.conj() })
    }

    fn normal_sample(&self, node: &BoundaryNode, part: KernelPart) -> Result<(C, C)> {
        let (v, d) = self.0.normal_sample(node, part)?;
        Ok((v.conj(), d.conj()))
    }
}

/// Sampled components on a common grid: `components[0]` is `u_0`,
/// `components[l]` is `u_l`.
///
/// Values use cubic Lagrange interpolation over the surrounding 4x4 nodes.
/// Normal derivatives use the fourth-order one-sided stencil along the inward
/// normal with the grid step, so only data inside the grid is touched.
#[derive(Debug, Clone)]
pub struct SampledProbe {
    pub components: Vec<Field2D>,
}

fn lagrange4(t: f64) -> [f64; 4] {
    // nodes at -1, 0, 1, 2
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

fn dlagrange4(t: f64) -> [f64; 4] {
    [
        -(3.0 * t * t - 6.0 * t + 2.0) / 6.0,
        (3.0 * t * t - 4.0 * t - 1.0) / 2.0,
        -(3.0 * t * t - 2.0 * t - 2.0) / 2.0,
        (3.0 * t * t - 1.0) / 6.0,
    ]
}

impl SampledProbe {
    pub fn new(components: Vec<Field2D>) -> Result<Self> {
        let first = components.first().ok_or_else(|| Error::GridMismatch("no components given".into()))?;
        if components.iter().any(|c| !c.grid.aligned_with(&first.grid)) {
            return Err(Error::GridMismatch("components on different grids".into()));
        }
        Ok(Self { components })
    }

    fn component(&self, part: KernelPart) -> Result<Vec<&Field2D>> {
        let m = self.components.len() - 1;
        Ok(match part {
            KernelPart::Radiating => vec![&self.components[0]],
            KernelPart::Guided(l) if l >= 1 && l <= m => vec![&self.components[l]],
            KernelPart::Guided(l) => return Err(Error::ModeIndex { index: l, count: m }),
            KernelPart::Total => self.components.iter().collect(),
        })
    }

    // stencil origin and offset for a 4-point window around `s` in index space
    fn window(s: f64, n: usize) -> Option<(usize, f64)> {
        if n < 4 || s < 0.0 || s > (n - 1) as f64 {
            return None;
        }
        let i = (s.floor() as usize).clamp(1, n - 3);
        Some((i - 1, s - i as f64))
    }

    fn interpolate(&self, f: &Field2D, x: f64, z: f64) -> Result<KernelValue> {
        let g = &f.grid;
        let sx = (x - g.x(0)) / g.dx();
        let sz = (z - g.z(0)) / g.dz();
        let (Some((i0, tx)), Some((j0, tz))) = (Self::window(sx, g.nx), Self::window(sz, g.nz)) else {
            return Err(Error::ExtentTooSmall(format!("point ({x}, {z}) outside the sampled grid")));
        };
        let (wx, wz, dwx, dwz) = (lagrange4(tx), lagrange4(tz), dlagrange4(tx), dlagrange4(tz));
        let mut out = KernelValue::default();
        for a in 0..4 {
            for b in 0..4 {
                let v = f.at(i0 + a, j0 + b);
                out.value += v * (wx[a] * wz[b]);
                out.dx += v * (dwx[a] * wz[b] / g.dx());
                out.dz += v * (wx[a] * dwz[b] / g.dz());
            }
        }
        Ok(out)
    }

    fn value(&self, part: KernelPart, x: f64, z: f64) -> Result<C> {
        let mut acc = C::new(0.0, 0.0);
        for f in self.component(part)? {
            acc += self.interpolate(f, x, z)?.value;
        }
        Ok(acc)
    }

    fn step(&self) -> f64 {
        let g = &self.components[0].grid;
        g.dx().max(g.dz())
    }
}

impl FieldProbe for SampledProbe {
    fn mode_count(&self) -> usize {
        self.components.len() - 1
    }

    fn sample(&self, x: f64, z: f64, part: KernelPart) -> Result<KernelValue> {
        let mut acc = KernelValue::default();
        for f in self.component(part)? {
            acc = acc + self.interpolate(f, x, z)?;
        }
        Ok(acc)
    }

    fn normal_sample(&self, node: &BoundaryNode, part: KernelPart) -> Result<(C, C)> {
        let h = self.step();
        let mut f = [C::new(0.0, 0.0); 5];
        for (j, fj) in f.iter_mut().enumerate() {
            let t = j as f64 * h;
            *fj = self.value(part, node.x - t * node.nu_x, node.z - t * node.nu_z)?;
        }
        // derivative along the inward direction, negated
        let inward = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / (12.0 * h);
        Ok((f[0], -inward))
    }
}
