//! The discrete energy `E_ε = E^V_ε + E^loc_ε − F_ε`, its gradient and the
//! Korn and Poincaré diagnostics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dot, DiscreteField, GridSpec};
use crate::potential::Potential;
use crate::sampler::FiberSet;
use crate::sum::{compensated_sum, CompensatedSum};

/// The three energy parts and their total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub e_nonlocal: f64,
    pub e_local: f64,
    pub work: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn new(e_nonlocal: f64, e_local: f64, work: f64) -> Self {
        Self {
            e_nonlocal,
            e_local,
            work,
            total: e_nonlocal + e_local - work,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.e_nonlocal.is_finite() && self.e_local.is_finite() && self.work.is_finite()
    }
}

/// Stencil vectors as reals together with `|b|⁴`.
fn stencil_table(grid: &GridSpec) -> Vec<(Vec<f64>, f64)> {
    grid.stencil()
        .iter()
        .map(|b| {
            let v: Vec<f64> = b.iter().map(|&k| k as f64).collect();
            let n2: f64 = v.iter().map(|x| x * x).sum();
            (v, n2 * n2)
        })
        .collect()
}

fn check_displacement(u: &DiscreteField) -> Result<()> {
    if u.components() != u.grid().dim() {
        return Err(Error::DimensionMismatch {
            expected: u.grid().dim(),
            actual: u.components(),
        });
    }
    Ok(())
}

/// Per-node sums reduced in node order, so results do not depend on the
/// thread count.
fn node_sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let parts: Vec<f64> = (0..n).into_par_iter().map(f).collect();
    compensated_sum(parts)
}

fn local_energy_impl(u: &DiscreteField, interior_only: bool) -> f64 {
    let grid = u.grid();
    let d = grid.dim();
    let table = stencil_table(grid);
    let scale = grid.eps().powi(d as i32 - 2);
    let total = node_sum(grid.len(), |i| {
        let ui = u.node(i);
        let mut acc = CompensatedSum::new();
        for (k, (b, b4)) in table.iter().enumerate() {
            let (t, factor) = match grid.stencil_neighbor(i, k) {
                Some(j) => {
                    let uj = u.node(j);
                    let t: f64 = (0..d).map(|a| (uj[a] - ui[a]) * b[a]).sum();
                    (t, 1.0)
                }
                // The zero-extended neighbor also sees this pair from outside.
                None if !interior_only => (-dot(ui, b), 2.0),
                None => continue,
            };
            acc.add(factor * t * t / b4);
        }
        acc.value()
    });
    scale * total
}

/// `E^loc_ε u = ε^{d−2} Σ_{x ∈ Z^d_ε} Σ_{b ∈ B∖0} |(u(x+εb) − u(x))·b|² / |b|⁴`
/// for `u` extended by zero outside the grid.
pub fn local_energy(u: &DiscreteField) -> f64 {
    check_displacement(u).expect("displacement must have d components");
    local_energy_impl(u, false)
}

/// The local energy restricted to pairs `(x, x + εb)` with both ends in `Q_ε`.
pub fn local_energy_interior(u: &DiscreteField) -> f64 {
    check_displacement(u).expect("displacement must have d components");
    local_energy_impl(u, true)
}

/// Coefficient `ε^{2d} σ / |x − y|^{d+ps}` of every edge, with `r = x − y`.
fn edge_terms(fibers: &FiberSet) -> impl IndexedParallelIterator<Item = (usize, usize, Vec<f64>, f64)> + '_ {
    let grid = fibers.grid();
    let eps = grid.eps();
    let d = grid.dim();
    let pre = eps.powi(2 * d as i32);
    let kappa = fibers.kernel_exponent();
    fibers.edges().par_iter().map(move |e| {
        let r: Vec<f64> = grid
            .lattice(e.i)
            .iter()
            .zip(grid.lattice(e.j))
            .map(|(a, b)| (a - b) as f64 * eps)
            .collect();
        let len = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        (e.i, e.j, r, pre * e.weight / len.powf(kappa))
    })
}

/// `E^V_ε u = ε^{2d} Σ_{edges} σ V(x, y, u(x) − u(y)) / |x − y|^{d+ps}`.
pub fn nonlocal_energy(u: &DiscreteField, fibers: &FiberSet, pot: &dyn Potential) -> Result<f64> {
    check_displacement(u)?;
    if !u.grid().as_ref().eq(fibers.grid().as_ref()) {
        return Err(Error::GridMismatch);
    }
    let d = u.components();
    let parts: Vec<f64> = edge_terms(fibers)
        .map(|(i, j, r, w)| {
            let zeta: Vec<f64> = (0..d).map(|a| u.node(i)[a] - u.node(j)[a]).collect();
            w * pot.evaluate(&r, &zeta)
        })
        .collect();
    Ok(compensated_sum(parts))
}

/// `F_ε u = ε^d Σ_x f(x) · u(x)`.
pub fn work_term(u: &DiscreteField, f: &DiscreteField) -> Result<f64> {
    u.check_same_grid(f)?;
    if u.components() != f.components() {
        return Err(Error::DimensionMismatch {
            expected: u.components(),
            actual: f.components(),
        });
    }
    let g = u.grid();
    Ok(g.eps().powi(g.dim() as i32) * u.dot(f))
}

pub fn total_energy(
    u: &DiscreteField,
    f: &DiscreteField,
    fibers: &FiberSet,
    pot: &dyn Potential,
) -> Result<EnergyBreakdown> {
    check_displacement(u)?;
    let work = work_term(u, f)?;
    let e_nonlocal = nonlocal_energy(u, fibers, pot)?;
    let e_local = local_energy(u);
    let out = EnergyBreakdown::new(e_nonlocal, e_local, work);
    if !out.is_finite() {
        return Err(Error::NonFiniteEnergy);
    }
    Ok(out)
}

/// `E_ε(u + δ) − E_ε(u)`, assembled term by term as `(t + δt)² − t² =
/// δt (2t + δt)` so that differences far below the rounding level of `E_ε`
/// itself stay accurate.
pub fn energy_difference(
    u: &DiscreteField,
    delta: &DiscreteField,
    f: &DiscreteField,
    fibers: &FiberSet,
    pot: &dyn Potential,
) -> Result<f64> {
    check_displacement(u)?;
    u.check_same_grid(delta)?;
    u.check_same_grid(f)?;
    let grid = u.grid();
    let d = grid.dim();
    let table = stencil_table(grid);
    let local = node_sum(grid.len(), |i| {
        let (ui, di) = (u.node(i), delta.node(i));
        let mut acc = CompensatedSum::new();
        for (k, (b, b4)) in table.iter().enumerate() {
            let (t, dt, factor) = match grid.stencil_neighbor(i, k) {
                Some(j) => {
                    let (uj, dj) = (u.node(j), delta.node(j));
                    let t: f64 = (0..d).map(|a| (uj[a] - ui[a]) * b[a]).sum();
                    let dt: f64 = (0..d).map(|a| (dj[a] - di[a]) * b[a]).sum();
                    (t, dt, 1.0)
                }
                None => (-dot(ui, b), -dot(di, b), 2.0),
            };
            acc.add(factor * dt * (2.0 * t + dt) / b4);
        }
        acc.value()
    }) * grid.eps().powi(d as i32 - 2);
    let parts: Vec<f64> = edge_terms(fibers)
        .map(|(i, j, r, w)| {
            let zeta: Vec<f64> = (0..d).map(|a| u.node(i)[a] - u.node(j)[a]).collect();
            let dz: Vec<f64> = (0..d).map(|a| delta.node(i)[a] - delta.node(j)[a]).collect();
            w * pot.difference(&r, &zeta, &dz)
        })
        .collect();
    let nonlocal = compensated_sum(parts);
    let work = grid.eps().powi(d as i32) * delta.dot(f);
    let out = nonlocal + local - work;
    if !out.is_finite() {
        return Err(Error::NonFiniteEnergy);
    }
    Ok(out)
}

/// Gradient of the local energy, added into `out`.
pub(crate) fn add_local_gradient(u: &DiscreteField, out: &mut [f64]) {
    let grid = u.grid();
    let d = grid.dim();
    let table = stencil_table(grid);
    let scale = -4.0 * grid.eps().powi(d as i32 - 2);
    out.par_chunks_exact_mut(d).enumerate().for_each(|(i, gi)| {
        let ui = u.node(i);
        for (k, (b, b4)) in table.iter().enumerate() {
            let t: f64 = match grid.stencil_neighbor(i, k) {
                Some(j) => (0..d).map(|a| (u.node(j)[a] - ui[a]) * b[a]).sum(),
                None => -dot(ui, b),
            };
            let c = scale * t / b4;
            for a in 0..d {
                gi[a] += c * b[a];
            }
        }
    });
}

/// Gradient of the non-local energy, added into `out`. Both endpoints of every
/// edge receive their contribution.
pub(crate) fn add_nonlocal_gradient(u: &DiscreteField, fibers: &FiberSet, pot: &dyn Potential, out: &mut [f64]) {
    let d = u.components();
    let parts: Vec<(usize, usize, Vec<f64>)> = edge_terms(fibers)
        .map(|(i, j, r, w)| {
            let zeta: Vec<f64> = (0..d).map(|a| u.node(i)[a] - u.node(j)[a]).collect();
            let mut g = vec![0.0; d];
            pot.derivative(&r, &zeta, &mut g);
            g.iter_mut().for_each(|x| *x *= w);
            (i, j, g)
        })
        .collect();
    for (i, j, g) in parts {
        for a in 0..d {
            out[i * d + a] += g[a];
            out[j * d + a] -= g[a];
        }
    }
}

/// Gradient of `E_ε` with respect to the nodal values.
pub fn gradient(
    u: &DiscreteField,
    f: &DiscreteField,
    fibers: &FiberSet,
    pot: &dyn Potential,
) -> Result<DiscreteField> {
    check_displacement(u)?;
    u.check_same_grid(f)?;
    if !u.grid().as_ref().eq(fibers.grid().as_ref()) {
        return Err(Error::GridMismatch);
    }
    let grid = u.grid();
    let vol = grid.eps().powi(grid.dim() as i32);
    let mut out: Vec<f64> = f.values().iter().map(|v| -vol * v).collect();
    add_local_gradient(u, &mut out);
    add_nonlocal_gradient(u, fibers, pot, &mut out);
    DiscreteField::from_values(grid.clone(), u.components(), out)
}

/// Diagonal of the Hessian of the local energy (constant: the energy is quadratic).
pub(crate) fn local_hessian_diagonal(grid: &GridSpec) -> Vec<f64> {
    let d = grid.dim();
    let table = stencil_table(grid);
    let scale = 4.0 * grid.eps().powi(d as i32 - 2);
    let mut diag = vec![0.0; d];
    for (b, b4) in &table {
        for a in 0..d {
            diag[a] += scale * b[a] * b[a] / b4;
        }
    }
    (0..grid.len()).flat_map(|_| diag.clone()).collect()
}

/// Hessian diagonal of the non-local energy at `u`, added into `out`.
/// Returns false if the potential provides no Hessian.
pub(crate) fn add_nonlocal_hessian_diagonal(
    u: &DiscreteField,
    fibers: &FiberSet,
    pot: &dyn Potential,
    out: &mut [f64],
) -> bool {
    let d = u.components();
    let mut h = vec![0.0; d * d];
    for (i, j, r, w) in edge_terms(fibers).collect::<Vec<_>>() {
        let zeta: Vec<f64> = (0..d).map(|a| u.node(i)[a] - u.node(j)[a]).collect();
        if !pot.hessian(&r, &zeta, &mut h) {
            return false;
        }
        for a in 0..d {
            out[i * d + a] += w * h[a * d + a];
            out[j * d + a] += w * h[a * d + a];
        }
    }
    true
}

/// Left side of the discrete Korn inequality:
/// `ε^d Σ_{x ∈ Q_ε} Σ_i ε^{−2} |u(x + εe_i) − u(x)|²`.
pub fn korn_lhs(u: &DiscreteField) -> f64 {
    forward_difference_sum(u, false)
}

/// `ε^d Σ_{x} Σ_i ε^{−2} |u(x + εe_i) − u(x)|²` over every lattice point where
/// a difference is nonzero (`interior = false` restricts to `x ∈ Q_ε`).
fn forward_difference_sum(u: &DiscreteField, full_lattice: bool) -> f64 {
    let grid = u.grid();
    let d = grid.dim();
    let m = u.components();
    let scale = grid.eps().powi(d as i32 - 2);
    let unit: Vec<Vec<i64>> = (0..d)
        .map(|a| (0..d).map(|b| i64::from(a == b)).collect())
        .collect();
    let total = node_sum(grid.len(), |i| {
        let ui = u.node(i);
        let mut acc = CompensatedSum::new();
        for e in &unit {
            let diff2: f64 = match grid.neighbor(i, e) {
                Some(j) => (0..m).map(|a| (u.node(j)[a] - ui[a]).powi(2)).sum(),
                None => dot(ui, ui),
            };
            acc.add(diff2);
            if full_lattice {
                // Difference from the outside point x − εe_i into x.
                let back: Vec<i64> = e.iter().map(|k| -k).collect();
                if grid.neighbor(i, &back).is_none() {
                    acc.add(dot(ui, ui));
                }
            }
        }
        acc.value()
    });
    scale * total
}

/// Both sides of the discrete Poincaré inequality without the constant:
/// `(ε^d Σ |u|^p)^{1/p}` and `(ε^d Σ_{x ∈ Z^d_ε} Σ_i ε^{−2} |u(x+εe_i) − u(x)|²)^{1/2}`.
pub fn poincare_check(u: &DiscreteField, p: f64) -> (f64, f64) {
    let grid = u.grid();
    let vol = grid.eps().powi(grid.dim() as i32);
    let lp = node_sum(grid.len(), |i| {
        let n = dot(u.node(i), u.node(i)).sqrt();
        n.powf(p)
    });
    let lhs = (vol * lp).powf(1.0 / p);
    let rhs = forward_difference_sum(u, true).sqrt();
    (lhs, rhs)
}

/// Continuum density `Σ_{b ∈ B∖0} (b·∇u b)² / |b|⁴` for `d = 2`, in terms of
/// `A = ∂₁u₁`, `B = ∂₂u₁`, `C = ∂₁u₂`, `D = ∂₂u₂`: `3(A² + D²) + 2AD + (B + C)²`.
///
/// `jacobian` is row-major, `jacobian[i * 2 + j] = ∂_j u_i`.
pub fn local_density_2d(jacobian: &[f64]) -> f64 {
    let (a, b, c, d) = (jacobian[0], jacobian[1], jacobian[2], jacobian[3]);
    3.0 * (a * a + d * d) + 2.0 * a * d + (b + c).powi(2)
}

/// The same sum over the half stencil `{e₁, e₂, e₁ + e₂}` only:
/// `5/4 (A² + D²) + ½ (A + D)(B + C) + ½ AD + ¼ (B + C)²`.
pub fn half_stencil_density_2d(jacobian: &[f64]) -> f64 {
    let (a, b, c, d) = (jacobian[0], jacobian[1], jacobian[2], jacobian[3]);
    1.25 * (a * a + d * d) + 0.5 * (a + d) * (b + c) + 0.5 * a * d + 0.25 * (b + c).powi(2)
}

/// `Σ_{b ∈ B∖0} (b · G b)² / |b|⁴` for any dimension, `G` row-major `d × d`.
pub fn local_density(jacobian: &[f64], d: usize) -> f64 {
    LocalDensity::new(d).eval(jacobian)
}

/// [`local_density`] with the stencil table built once.
#[derive(Clone, Debug)]
pub struct LocalDensity {
    dim: usize,
    table: Vec<(Vec<f64>, f64)>,
}

impl LocalDensity {
    pub fn new(d: usize) -> Self {
        let table = crate::model::NeighborStencil::new(d)
            .iter()
            .map(|b| {
                let v: Vec<f64> = b.iter().map(|&k| k as f64).collect();
                let n2: f64 = v.iter().map(|x| x * x).sum();
                (v, n2 * n2)
            })
            .collect();
        Self { dim: d, table }
    }

    pub fn eval(&self, jacobian: &[f64]) -> f64 {
        let d = self.dim;
        self.table
            .iter()
            .map(|(b, n4)| {
                let mut t = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        t += b[i] * jacobian[i * d + j] * b[j];
                    }
                }
                t * t / n4
            })
            .sum()
    }
}
