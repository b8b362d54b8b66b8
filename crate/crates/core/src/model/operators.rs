//! The discretization operator `R_ε` and the piecewise-constant extension `R*_ε`.

use std::sync::Arc;

use super::field::DiscreteField;
use super::grid::GridSpec;
use crate::fields::SmoothField;
use crate::quadrature::{for_each_panel, normalize_breaks, GaussRule};
use crate::sum::CompensatedSum;

/// Nodes per axis of the per-cell averaging rule.
const CELL_RULE: usize = 3;
/// Nodes per axis on each panel of the `L²` quadratures.
const PANEL_RULE: usize = 4;

/// `R_ε u`: cell averages of `u` over `x + (−ε/2, ε/2]^d`.
///
/// Cells inside the domain use a `3^d`-point Gauss rule; cells clipped by the
/// boundary take the cell-center value.
pub fn restrict(u: &dyn SmoothField, grid: &Arc<GridSpec>) -> DiscreteField {
    let rule = GaussRule::new(CELL_RULE);
    let (d, m) = (grid.dim(), u.components());
    let h = 0.5 * grid.eps();
    let cell_volume = grid.eps().powi(d as i32);
    let mut values = vec![0.0; grid.len() * m];
    let mut tmp = vec![0.0; m];
    let mut center = vec![0.0; d];
    let mut lo = vec![0.0; d];
    let mut hi = vec![0.0; d];
    let mut acc = vec![CompensatedSum::new(); m];
    for (i, out) in values.chunks_exact_mut(m).enumerate() {
        grid.position_into(i, &mut center);
        if grid.cell_clipped(i) {
            u.eval(&center, out);
            continue;
        }
        for k in 0..d {
            lo[k] = center[k] - h;
            hi[k] = center[k] + h;
        }
        acc.fill(CompensatedSum::new());
        rule.for_each_point(&lo, &hi, |x, w| {
            u.eval(x, &mut tmp);
            for (a, v) in acc.iter_mut().zip(&tmp) {
                a.add(w * v);
            }
        });
        for (o, a) in out.iter_mut().zip(&acc) {
            *o = a.value() / cell_volume;
        }
    }
    DiscreteField::from_values(grid.clone(), m, values).expect("sized to the grid")
}

/// `R*_ε u_ε` as a point evaluator.
#[derive(Clone, Debug)]
pub struct Extension<'a> {
    field: &'a DiscreteField,
}

/// `R*_ε`: the piecewise-constant extension of a discrete field.
pub fn extend(u: &DiscreteField) -> Extension<'_> {
    Extension { field: u }
}

impl Extension<'_> {
    /// Node index whose cell contains `x`, if any.
    pub fn cell_index(&self, x: &[f64]) -> Option<usize> {
        let grid = self.field.grid();
        if !grid.domain().contains(x) {
            return None;
        }
        grid.index_of(&grid.cell_of(x))
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        match self.cell_index(x) {
            Some(i) => out.copy_from_slice(self.field.node(i)),
            None => out.fill(0.0),
        }
    }

    pub fn value(&self, x: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.field.components()];
        self.eval(x, &mut v);
        v
    }
}

/// Breakpoints along `axis`: cell faces of every grid, clipped to the domain
/// bounds, together with the bounds themselves.
fn panel_breaks(grids: &[&GridSpec], axis: usize) -> Vec<f64> {
    let b = grids[0].domain().bounds();
    let (lo, hi) = (b.lo[axis], b.hi[axis]);
    let mut v = vec![lo, hi];
    for g in grids {
        v.extend(g.cell_faces(axis).into_iter().filter(|&t| t > lo && t < hi));
    }
    let scale = grids.iter().map(|g| g.eps()).fold(f64::INFINITY, f64::min);
    normalize_breaks(v, 1e-12 * scale)
}

/// Panel mesh on which every listed extension is constant.
fn mesh(grids: &[&GridSpec]) -> Vec<Vec<f64>> {
    (0..grids[0].dim()).map(|a| panel_breaks(grids, a)).collect()
}

fn panel_midpoint(lo: &[f64], hi: &[f64]) -> Vec<f64> {
    lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect()
}

/// `∫_Q R*_ε u_ε`, integrated panel by panel.
pub fn extension_integral(u: &DiscreteField) -> Vec<f64> {
    let grid = u.grid();
    let ext = extend(u);
    let m = u.components();
    let mut acc = vec![CompensatedSum::new(); m];
    let mut v = vec![0.0; m];
    for_each_panel(&mesh(&[grid]), |lo, hi| {
        let vol: f64 = lo.iter().zip(hi).map(|(a, b)| b - a).product();
        ext.eval(&panel_midpoint(lo, hi), &mut v);
        for (a, x) in acc.iter_mut().zip(&v) {
            a.add(vol * x);
        }
    });
    acc.iter().map(|a| a.value()).collect()
}

/// `‖R*_ε R_ε u − u‖_{L²(Q)}`.
pub fn roundtrip_defect(u: &dyn SmoothField, grid: &Arc<GridSpec>) -> f64 {
    let ue = restrict(u, grid);
    l2_distance_to_smooth(&ue, u)
}

/// `‖R*_ε u_ε − u‖_{L²(Q)}` by Gauss quadrature on panels aligned with the cells.
pub fn l2_distance_to_smooth(ue: &DiscreteField, u: &dyn SmoothField) -> f64 {
    let grid = ue.grid();
    let ext = extend(ue);
    let rule = GaussRule::new(PANEL_RULE);
    let m = u.components();
    let mut acc = CompensatedSum::new();
    let mut piece = vec![0.0; m];
    let mut val = vec![0.0; m];
    let indicator = grid.domain().as_box().is_none();
    for_each_panel(&mesh(&[grid]), |lo, hi| {
        ext.eval(&panel_midpoint(lo, hi), &mut piece);
        rule.for_each_point(lo, hi, |x, w| {
            if indicator && !grid.domain().contains(x) {
                return;
            }
            u.eval(x, &mut val);
            let e: f64 = val.iter().zip(&piece).map(|(a, b)| (a - b) * (a - b)).sum();
            acc.add(w * e);
        });
    });
    acc.value().max(0.0).sqrt()
}

/// `‖R*_ε u − R*_δ v‖_{L²(Q)}` for fields on two grids over the same domain.
/// Exact: both extensions are constant on the common refinement of their cells.
pub fn l2_distance_extended(u: &DiscreteField, v: &DiscreteField) -> f64 {
    let (gu, gv) = (u.grid(), v.grid());
    let eu = extend(u);
    let ev = extend(v);
    let m = u.components();
    let mut a = vec![0.0; m];
    let mut b = vec![0.0; m];
    let mut acc = CompensatedSum::new();
    for_each_panel(&mesh(&[gu, gv]), |lo, hi| {
        let vol: f64 = lo.iter().zip(hi).map(|(a, b)| b - a).product();
        let mid = panel_midpoint(lo, hi);
        eu.eval(&mid, &mut a);
        ev.eval(&mid, &mut b);
        let e: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
        acc.add(vol * e);
    });
    acc.value().max(0.0).sqrt()
}
