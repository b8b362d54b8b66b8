//! Smooth continuum fields used as displacements, forces and test fixtures.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::BoxDomain;

/// A smooth map `R^d → R^m` with an evaluable Jacobian.
pub trait SmoothField: Send + Sync {
    fn dim(&self) -> usize;

    fn components(&self) -> usize;

    fn eval(&self, x: &[f64], out: &mut [f64]);

    /// Row-major Jacobian: `out[i * d + j] = ∂_j u_i`.
    fn jacobian(&self, x: &[f64], out: &mut [f64]);

    fn name(&self) -> &str {
        "custom"
    }

    /// Coordinates along `axis` where the field may fail to be smooth.
    fn breakpoints(&self, _axis: usize) -> Vec<f64> {
        Vec::new()
    }

    fn value(&self, x: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.components()];
        self.eval(x, &mut v);
        v
    }
}

impl<T: SmoothField + ?Sized> SmoothField for Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn components(&self) -> usize {
        (**self).components()
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        (**self).eval(x, out)
    }
    fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        (**self).jacobian(x, out)
    }
    fn name(&self) -> &str {
        (**self).name()
    }
    fn breakpoints(&self, axis: usize) -> Vec<f64> {
        (**self).breakpoints(axis)
    }
}

#[derive(Clone, Debug)]
pub struct Zero {
    pub dim: usize,
    pub components: usize,
}

impl SmoothField for Zero {
    fn dim(&self) -> usize {
        self.dim
    }
    fn components(&self) -> usize {
        self.components
    }
    fn eval(&self, _: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn jacobian(&self, _: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn name(&self) -> &str {
        "zero"
    }
}

#[derive(Clone, Debug)]
pub struct Constant {
    pub dim: usize,
    pub value: Vec<f64>,
}

impl SmoothField for Constant {
    fn dim(&self) -> usize {
        self.dim
    }
    fn components(&self) -> usize {
        self.value.len()
    }
    fn eval(&self, _: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.value);
    }
    fn jacobian(&self, _: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn name(&self) -> &str {
        "constant"
    }
}

/// `u(x) = A x + b` with `A` stored row-major (`m × d`).
#[derive(Clone, Debug)]
pub struct Affine {
    pub dim: usize,
    pub matrix: Vec<f64>,
    pub offset: Vec<f64>,
}

impl Affine {
    pub fn linear(dim: usize, matrix: Vec<f64>) -> Self {
        let m = matrix.len() / dim;
        Self {
            dim,
            matrix,
            offset: vec![0.0; m],
        }
    }
}

impl SmoothField for Affine {
    fn dim(&self) -> usize {
        self.dim
    }
    fn components(&self) -> usize {
        self.offset.len()
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.matrix[i * self.dim..(i + 1) * self.dim];
            *o = self.offset[i] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    fn jacobian(&self, _: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.matrix);
    }
    fn name(&self) -> &str {
        "affine"
    }
}

/// Polynomial bump supported in a box:
/// `u_i(x) = a_i (1 + t_i) φ(t)` with `t = (x − lo)/(hi − lo)` and
/// `φ(t) = Π_k 16 t_k² (1 − t_k)²`, zero outside the box.
///
/// `C¹` with vanishing value and gradient on the box boundary.
#[derive(Clone, Debug)]
pub struct PolyBump {
    pub support: BoxDomain,
    pub amplitude: Vec<f64>,
}

impl PolyBump {
    pub fn new(support: BoxDomain, amplitude: Vec<f64>) -> Self {
        Self { support, amplitude }
    }

    fn local(&self, x: &[f64]) -> Option<Vec<f64>> {
        let t: Vec<f64> = (0..self.support.dim())
            .map(|k| (x[k] - self.support.lo[k]) / self.support.width(k))
            .collect();
        if t.iter().all(|&t| t > 0.0 && t < 1.0) {
            Some(t)
        } else {
            None
        }
    }
}

fn bump_1d(t: f64) -> (f64, f64) {
    let v = 16.0 * t * t * (1.0 - t) * (1.0 - t);
    let dv = 32.0 * t * (1.0 - t) * (1.0 - 2.0 * t);
    (v, dv)
}

impl SmoothField for PolyBump {
    fn dim(&self) -> usize {
        self.support.dim()
    }
    fn components(&self) -> usize {
        self.amplitude.len()
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        let Some(t) = self.local(x) else {
            out.fill(0.0);
            return;
        };
        let phi: f64 = t.iter().map(|&t| bump_1d(t).0).product();
        for (i, o) in out.iter_mut().enumerate() {
            let ti = t.get(i).copied().unwrap_or(0.0);
            *o = self.amplitude[i] * (1.0 + ti) * phi;
        }
    }
    fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let Some(t) = self.local(x) else {
            out.fill(0.0);
            return;
        };
        let vals: Vec<(f64, f64)> = t.iter().map(|&t| bump_1d(t)).collect();
        let phi: f64 = vals.iter().map(|v| v.0).product();
        // ∂_j φ in physical coordinates.
        let dphi: Vec<f64> = (0..d)
            .map(|j| {
                let others: f64 = (0..d).filter(|&k| k != j).map(|k| vals[k].0).product();
                vals[j].1 * others / self.support.width(j)
            })
            .collect();
        for i in 0..self.components() {
            let ti = t.get(i).copied().unwrap_or(0.0);
            for j in 0..d {
                let mut g = (1.0 + ti) * dphi[j];
                if i == j {
                    g += phi / self.support.width(j);
                }
                out[i * d + j] = self.amplitude[i] * g;
            }
        }
    }
    fn name(&self) -> &str {
        "bump"
    }
    fn breakpoints(&self, axis: usize) -> Vec<f64> {
        vec![self.support.lo[axis], self.support.hi[axis]]
    }
}

/// `u_i(x) = a_i Π_k sin(π t_k)` with `t = (x − lo)/(hi − lo)`, zero outside the box.
#[derive(Clone, Debug)]
pub struct SineProduct {
    pub support: BoxDomain,
    pub amplitude: Vec<f64>,
}

impl SineProduct {
    /// First component only, scaled to unit `L²` norm over the support.
    pub fn unit_l2_force(support: BoxDomain) -> Self {
        let d = support.dim();
        let a = (2f64.powi(d as i32) / support.volume()).sqrt();
        let mut amplitude = vec![0.0; d];
        amplitude[0] = a;
        Self { support, amplitude }
    }
}

impl SmoothField for SineProduct {
    fn dim(&self) -> usize {
        self.support.dim()
    }
    fn components(&self) -> usize {
        self.amplitude.len()
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        if !self.support.contains(x) {
            out.fill(0.0);
            return;
        }
        let s: f64 = (0..self.dim())
            .map(|k| (PI * (x[k] - self.support.lo[k]) / self.support.width(k)).sin())
            .product();
        for (o, a) in out.iter_mut().zip(&self.amplitude) {
            *o = a * s;
        }
    }
    fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        if !self.support.contains(x) {
            out.fill(0.0);
            return;
        }
        let arg: Vec<f64> = (0..d)
            .map(|k| PI * (x[k] - self.support.lo[k]) / self.support.width(k))
            .collect();
        for j in 0..d {
            let mut g = PI / self.support.width(j) * arg[j].cos();
            for (k, a) in arg.iter().enumerate() {
                if k != j {
                    g *= a.sin();
                }
            }
            for (i, amp) in self.amplitude.iter().enumerate() {
                out[i * d + j] = amp * g;
            }
        }
    }
    fn name(&self) -> &str {
        "sine"
    }
    fn breakpoints(&self, axis: usize) -> Vec<f64> {
        vec![self.support.lo[axis], self.support.hi[axis]]
    }
}

type EvalFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// A field given by closures; the Jacobian falls back to central differences.
#[derive(Clone)]
pub struct FnField {
    dim: usize,
    components: usize,
    eval: Arc<EvalFn>,
    jacobian: Option<Arc<EvalFn>>,
    breakpoints: Vec<Vec<f64>>,
}

impl std::fmt::Debug for FnField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnField")
            .field("dim", &self.dim)
            .field("components", &self.components)
            .finish_non_exhaustive()
    }
}

impl FnField {
    pub fn new<F>(dim: usize, components: usize, eval: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            dim,
            components,
            eval: Arc::new(eval),
            jacobian: None,
            breakpoints: vec![Vec::new(); dim],
        }
    }

    /// The same breakpoints on every axis.
    pub fn with_breakpoints(mut self, points: &[f64]) -> Self {
        self.breakpoints = vec![points.to_vec(); self.dim];
        self
    }

    pub fn with_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }
}

impl SmoothField for FnField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn components(&self) -> usize {
        self.components
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        (self.eval)(x, out)
    }
    fn breakpoints(&self, axis: usize) -> Vec<f64> {
        self.breakpoints[axis].clone()
    }
    fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        if let Some(j) = &self.jacobian {
            return j(x, out);
        }
        let (d, m) = (self.dim, self.components);
        let h = 1e-6;
        let mut xp = x.to_vec();
        let mut fp = vec![0.0; m];
        let mut fm = vec![0.0; m];
        for j in 0..d {
            xp[j] = x[j] + h;
            (self.eval)(&xp, &mut fp);
            xp[j] = x[j] - h;
            (self.eval)(&xp, &mut fm);
            xp[j] = x[j];
            for i in 0..m {
                out[i * d + j] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
    }
}

/// Displacement preset by name: `zero`, `bump`, `sine`.
///
/// `bump` lives on the middle half-width box of `domain`, so it has compact
/// support inside the domain.
pub fn displacement_preset(name: &str, domain: &BoxDomain) -> Result<Arc<dyn SmoothField>> {
    let d = domain.dim();
    Ok(match name {
        "zero" => Arc::new(Zero { dim: d, components: d }),
        "bump" => {
            let lo = (0..d).map(|k| domain.lo[k] + 0.2 * domain.width(k)).collect();
            let hi = (0..d).map(|k| domain.hi[k] - 0.2 * domain.width(k)).collect();
            let amplitude = (0..d).map(|i| 0.1 / (1.0 + i as f64)).collect();
            Arc::new(PolyBump::new(BoxDomain { lo, hi }, amplitude))
        }
        "sine" => {
            let amplitude = (0..d).map(|i| if i == 0 { 0.1 } else { 0.05 }).collect();
            Arc::new(SineProduct {
                support: domain.clone(),
                amplitude,
            })
        }
        _ => {
            return Err(Error::UnknownName {
                kind: "displacement preset",
                name: name.to_string(),
            })
        }
    })
}

/// Force preset by name: `zero`, `sine` (unit `L²`, first component), `constant`.
pub fn force_preset(name: &str, domain: &BoxDomain) -> Result<Arc<dyn SmoothField>> {
    let d = domain.dim();
    Ok(match name {
        "zero" => Arc::new(Zero { dim: d, components: d }),
        "sine" => Arc::new(SineProduct::unit_l2_force(domain.clone())),
        "constant" => {
            let mut value = vec![0.0; d];
            value[0] = 1.0 / domain.volume().sqrt();
            Arc::new(Constant { dim: d, value })
        }
        _ => {
            return Err(Error::UnknownName {
                kind: "force preset",
                name: name.to_string(),
            })
        }
    })
}
