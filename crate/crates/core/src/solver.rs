//! Minimization of the discrete energy over fields vanishing outside `Q_ε`.
//!
//! The unknowns are the nodal values on `Q_ε`, so the zero boundary condition
//! holds by construction at every iterate.

use serde::{Deserialize, Serialize};

use crate::energy::{
    add_local_gradient, add_nonlocal_gradient, add_nonlocal_hessian_diagonal, energy_difference,
    gradient, local_hessian_diagonal, total_energy, EnergyBreakdown,
};
use crate::error::{Error, Result};
use crate::model::{dot, DiscreteField};
use crate::potential::Potential;
use crate::sampler::FiberSet;
use crate::sum::CompensatedSum;

/// Force, fibers and pair potential defining `E_ε`.
#[derive(Clone, Copy)]
pub struct Problem<'a> {
    pub force: &'a DiscreteField,
    pub fibers: &'a FiberSet,
    pub potential: &'a dyn Potential,
}

impl<'a> Problem<'a> {
    pub fn new(force: &'a DiscreteField, fibers: &'a FiberSet, potential: &'a dyn Potential) -> Result<Self> {
        let grid = force.grid();
        if force.components() != grid.dim() {
            return Err(Error::DimensionMismatch {
                expected: grid.dim(),
                actual: force.components(),
            });
        }
        if grid.as_ref() != fibers.grid().as_ref() {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            force,
            fibers,
            potential,
        })
    }

    pub fn energy(&self, u: &DiscreteField) -> Result<EnergyBreakdown> {
        total_energy(u, self.force, self.fibers, self.potential)
    }

    pub fn gradient(&self, u: &DiscreteField) -> Result<DiscreteField> {
        gradient(u, self.force, self.fibers, self.potential)
    }

    /// `‖ε^d f‖`, the scale of the stopping rule.
    pub fn load_norm(&self) -> f64 {
        let g = self.force.grid();
        g.eps().powi(g.dim() as i32) * self.force.norm()
    }

    fn threshold(&self, tol: f64) -> f64 {
        tol * (1.0 + self.load_norm())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    /// Relative gradient tolerance: stop at `‖∇E‖ ≤ tol (1 + ‖ε^d f‖)`.
    pub tol: f64,
    /// Iteration cap; `None` means `10 N` (quadratic) or `10⁵` (general).
    pub max_iterations: Option<usize>,
    /// Starting field; zero when absent.
    pub initial: Option<DiscreteField>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iterations: None,
            initial: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub minimizer: DiscreteField,
    pub energy: EnergyBreakdown,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
    pub method: String,
    /// Total energy of every accepted iterate (general solver only).
    pub energy_trace: Vec<f64>,
}

/// The serializable part of a [`SolveReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub method: String,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
    pub energy: EnergyBreakdown,
}

impl SolveReport {
    pub fn summary(&self) -> SolveSummary {
        SolveSummary {
            method: self.method.clone(),
            iterations: self.iterations,
            gradient_norm: self.gradient_norm,
            converged: self.converged,
            energy: self.energy,
        }
    }
}

fn initial_field(problem: &Problem, options: &SolverOptions) -> Result<DiscreteField> {
    match &options.initial {
        Some(u) => {
            u.check_same_grid(problem.force)?;
            Ok(u.clone())
        }
        None => Ok(DiscreteField::zeros(problem.force.grid().clone(), problem.force.components())),
    }
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Preconditioned conjugate gradients on `A u = ε^d f`, where `A` is the
/// (matrix-free) Hessian of the quadratic energy.
pub fn solve_quadratic(problem: &Problem, options: &SolverOptions) -> Result<SolveReport> {
    let pot = problem.potential;
    if !pot.is_quadratic() {
        return Err(Error::NotQuadratic(pot.name().to_string()));
    }
    let grid = problem.force.grid().clone();
    let m = problem.force.components();
    let n = grid.len() * m;
    let cap = options.max_iterations.unwrap_or(10 * n).max(1);
    let vol = grid.eps().powi(grid.dim() as i32);
    let b: Vec<f64> = problem.force.values().iter().map(|v| vol * v).collect();
    let threshold = problem.threshold(options.tol);

    let zero = DiscreteField::zeros(grid.clone(), m);
    let apply = |x: &[f64], out: &mut [f64]| {
        let xf = DiscreteField::from_values(grid.clone(), m, x.to_vec()).expect("sized");
        out.fill(0.0);
        add_local_gradient(&xf, out);
        add_nonlocal_gradient(&xf, problem.fibers, pot, out);
    };
    let mut diag = local_hessian_diagonal(&grid);
    if !add_nonlocal_hessian_diagonal(&zero, problem.fibers, pot, &mut diag) {
        log::debug!("{}: no Hessian, using the local diagonal only", pot.name());
    }
    let inv_diag: Vec<f64> = diag.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();

    let mut x = initial_field(problem, options)?.into_values();
    let mut ax = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut iterations = 0;
    let mut rnorm;
    // Outer loop restarts from the true residual if recursion drift hides it.
    'outer: loop {
        apply(&x, &mut ax);
        for k in 0..n {
            r[k] = b[k] - ax[k];
        }
        rnorm = norm(&r);
        if rnorm <= threshold || iterations >= cap {
            break;
        }
        for k in 0..n {
            z[k] = inv_diag[k] * r[k];
        }
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        loop {
            apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) || !pap.is_finite() {
                if !pap.is_finite() {
                    return Err(Error::NonFiniteEnergy);
                }
                // Direction in the null space: nothing more to gain here.
                break 'outer;
            }
            let alpha = rz / pap;
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            iterations += 1;
            rnorm = norm(&r);
            if rnorm <= threshold || iterations >= cap {
                continue 'outer;
            }
            for k in 0..n {
                z[k] = inv_diag[k] * r[k];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }
    }

    let minimizer = DiscreteField::from_values(grid.clone(), m, x)?;
    let energy = problem.energy(&minimizer)?;
    let gradient_norm = problem.gradient(&minimizer)?.norm();
    let converged = gradient_norm <= threshold;
    let report = SolveReport {
        minimizer,
        energy,
        iterations,
        gradient_norm,
        converged,
        method: "conjugate-gradient".into(),
        energy_trace: Vec::new(),
    };
    if !converged {
        return Err(Error::MaxIterations {
            report: Box::new(report),
        });
    }
    Ok(report)
}

/// Accelerated gradient descent with backtracking and function-value restart.
///
/// Step acceptance and restarts compare energy differences assembled term by
/// term, which stay accurate near the minimum where the energy itself no
/// longer resolves the decrease. Accepted iterates have nonincreasing energy.
pub fn solve_general(problem: &Problem, options: &SolverOptions) -> Result<SolveReport> {
    let pot = problem.potential;
    if !pot.is_convex() {
        log::warn!(
            "potential `{}` is not convex; the general solver returns a stationary point",
            pot.name()
        );
    }
    let cap = options.max_iterations.unwrap_or(100_000).max(1);
    let threshold = problem.threshold(options.tol);
    let diff = |u: &DiscreteField, delta: &DiscreteField| {
        energy_difference(u, delta, problem.force, problem.fibers, pot)
    };
    let between = |from: &DiscreteField, to: &DiscreteField| {
        let mut delta = to.clone();
        delta.axpy(-1.0, from);
        delta
    };

    let mut x = initial_field(problem, options)?;
    let mut fx = CompensatedSum::new();
    fx.add(problem.energy(&x)?.total);
    let mut gx = problem.gradient(&x)?;
    let mut gnorm = gx.norm();
    let mut y = x.clone();
    let mut gy = gx.clone();
    let mut t = 1.0f64;
    let mut lipschitz = 1.0f64;
    let mut trace = vec![fx.value()];
    let mut iterations = 0;

    while gnorm > threshold && iterations < cap {
        iterations += 1;
        let gy2 = gy.dot(&gy);
        let mut step = gy.clone();
        let trial = loop {
            step.values_mut().copy_from_slice(gy.values());
            step.scale(-1.0 / lipschitz);
            if diff(&y, &step)? <= -0.5 / lipschitz * gy2 {
                let mut trial = y.clone();
                trial.axpy(1.0, &step);
                break trial;
            }
            lipschitz *= 2.0;
            if lipschitz > 1e30 {
                return Err(Error::LineSearchStalled {
                    iterations,
                    gradient_norm: gnorm,
                });
            }
        };
        let dx = diff(&x, &between(&x, &trial))?;
        if dx > 0.0 {
            // Momentum overshoot: restart from the last accepted point.
            y = x.clone();
            gy = gx.clone();
            t = 1.0;
            continue;
        }
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_new;
        let mut y_new = trial.clone();
        y_new.scale(1.0 + beta);
        y_new.axpy(-beta, &x);
        x = trial;
        fx.add(dx);
        gx = problem.gradient(&x)?;
        gnorm = gx.norm();
        trace.push(fx.value());
        t = t_new;
        gy = if beta == 0.0 { gx.clone() } else { problem.gradient(&y_new)? };
        y = y_new;
        lipschitz *= 0.9;
    }

    let energy = problem.energy(&x)?;
    let converged = gnorm <= threshold;
    let report = SolveReport {
        minimizer: x,
        energy,
        iterations,
        gradient_norm: gnorm,
        converged,
        method: "accelerated-gradient".into(),
        energy_trace: trace,
    };
    if !converged {
        return Err(Error::MaxIterations {
            report: Box::new(report),
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_grid, BoxDomain, GridSpec, ModelParams, ParamRecord};
    use crate::potential::{Cauchy, Projection};
    use crate::rng::keyed_unit;
    use crate::sampler::{sample_shells, Edge};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn setup(eps: f64, seed: u64) -> (Arc<GridSpec>, FiberSet, DiscreteField) {
        let p = ModelParams::validate(ParamRecord {
            eps,
            c_tilde: 1.0,
            ..ParamRecord::default()
        })
        .unwrap();
        let g = build_grid(BoxDomain::unit(2), eps).unwrap();
        let fibers = sample_shells(&p, &g, seed, false).unwrap();
        let f = DiscreteField::from_fn(g.clone(), 2, |x, v| {
            v[0] = (3.0 * x[0]).sin() + x[1];
            v[1] = x[0] * x[1] - 0.5;
        });
        (g, fibers, f)
    }

    #[test]
    fn zero_force_gives_zero_minimizer() {
        let (g, fibers, _) = setup(0.125, 1);
        let f = DiscreteField::zeros(g, 2);
        let problem = Problem::new(&f, &fibers, &Projection).unwrap();
        for rep in [
            solve_quadratic(&problem, &SolverOptions::default()).unwrap(),
            solve_general(&problem, &SolverOptions::default()).unwrap(),
        ] {
            assert!(rep.minimizer.values().iter().all(|&v| v == 0.0));
            assert_eq!(rep.energy.total, 0.0);
        }
    }

    #[test]
    fn single_node_closed_form() {
        // One node at (½, ½) with ε = ½: every neighbor is outside, and
        // E^loc = 2 Σ_b (u·b)²/|b|⁴ = 6|u|². Minimizing 6|u|² − ¼ f·u gives u = f/48.
        let g = build_grid(BoxDomain::unit(2), 0.5).unwrap();
        let f = DiscreteField::from_values(g.clone(), 2, vec![1.2, -0.6]).unwrap();
        let fibers = FiberSet::empty(g);
        let problem = Problem::new(&f, &fibers, &Projection).unwrap();
        let rep = solve_quadratic(&problem, &SolverOptions::default()).unwrap();
        assert_relative_eq!(rep.minimizer.node(0)[0], 1.2 / 48.0, epsilon = 1e-14);
        assert_relative_eq!(rep.minimizer.node(0)[1], -0.6 / 48.0, epsilon = 1e-14);
    }

    #[test]
    fn quadratic_minimizer_is_stationary() {
        let (g, fibers, f) = setup(0.0625, 2);
        let problem = Problem::new(&f, &fibers, &Projection).unwrap();
        let rep = solve_quadratic(&problem, &SolverOptions::default()).unwrap();
        assert!(rep.converged);
        let grad = problem.gradient(&rep.minimizer).unwrap();
        let scale = 1.0 + problem.load_norm();
        for k in 0..20u64 {
            let v: Vec<f64> = (0..g.len() * 2).map(|i| 2.0 * keyed_unit(k, 3, i as u64) - 1.0).collect();
            let v = DiscreteField::from_values(g.clone(), 2, v).unwrap();
            let probe = grad.dot(&v) / v.norm();
            assert!(probe.abs() <= 1e-8 * scale, "{probe}");
        }
        // Restarting at the minimizer finishes immediately.
        let again = solve_quadratic(
            &problem,
            &SolverOptions {
                initial: Some(rep.minimizer.clone()),
                ..SolverOptions::default()
            },
        )
        .unwrap();
        assert!(again.iterations <= 2);
    }

    #[test]
    fn general_matches_quadratic() {
        let (_, fibers, f) = setup(0.125, 3);
        let problem = Problem::new(&f, &fibers, &Projection).unwrap();
        let a = solve_quadratic(&problem, &SolverOptions::default()).unwrap();
        let b = solve_general(&problem, &SolverOptions::default()).unwrap();
        let mut diff = b.minimizer.clone();
        diff.axpy(-1.0, &a.minimizer);
        assert!(diff.norm() <= 1e-6 * a.minimizer.norm());
        assert!(b.energy_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn cauchy_energy_decreases_monotonically() {
        let (_, fibers, f) = setup(0.25, 4);
        let problem = Problem::new(&f, &fibers, &Cauchy).unwrap();
        let rep = solve_general(&problem, &SolverOptions::default()).unwrap();
        assert!(rep.converged);
        assert!(rep.gradient_norm <= 1e-9 * (1.0 + problem.load_norm()));
        assert!(rep.energy_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(matches!(
            solve_quadratic(&problem, &SolverOptions::default()),
            Err(Error::NotQuadratic(_))
        ));
    }

    #[test]
    fn iteration_cap_reports_best_iterate() {
        let (_, fibers, f) = setup(0.0625, 5);
        let problem = Problem::new(&f, &fibers, &Projection).unwrap();
        let opts = SolverOptions {
            max_iterations: Some(3),
            ..SolverOptions::default()
        };
        match solve_quadratic(&problem, &opts) {
            Err(Error::MaxIterations { report }) => {
                assert_eq!(report.iterations, 3);
                assert!(!report.converged);
            }
            other => panic!("expected MaxIterations, got {other:?}"),
        }
    }

    #[test]
    fn minimum_is_invariant_under_node_reordering() {
        let (g, fibers, f) = setup(0.125, 6);
        let n = g.len();
        // Reverse-interleaved permutation: new index k holds old node order[k].
        let order: Vec<usize> = (0..n).map(|k| (k * 17 + 5) % n).collect();
        let mut inverse = vec![0; n];
        for (k, &old) in order.iter().enumerate() {
            inverse[old] = k;
        }
        let g2 = Arc::new(g.reordered(&order));
        let f2 = DiscreteField::from_values(
            g2.clone(),
            2,
            order.iter().flat_map(|&old| f.node(old).to_vec()).collect(),
        )
        .unwrap();
        let edges = fibers
            .edges()
            .iter()
            .map(|e| Edge {
                i: inverse[e.i],
                j: inverse[e.j],
                weight: e.weight,
            })
            .collect();
        let fibers2 = FiberSet::from_edges(g2.clone(), edges, fibers.kernel_exponent(), 0, false).unwrap();
        let a = solve_quadratic(&Problem::new(&f, &fibers, &Projection).unwrap(), &SolverOptions::default()).unwrap();
        let b = solve_quadratic(&Problem::new(&f2, &fibers2, &Projection).unwrap(), &SolverOptions::default()).unwrap();
        assert!((a.energy.total - b.energy.total).abs() <= 1e-10 * a.energy.total.abs());
    }
}
