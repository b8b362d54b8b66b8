//! Reproducible convergence studies over `(ε, seed)` runs.
//!
//! Every run is a pure function of the study configuration and its seed.
//! Runs execute in parallel and are collected in `(ε, seed)` order.

pub mod config;
pub mod minimizers;
pub mod output;
pub mod recovery;
pub mod sigma;
pub mod stats;

use std::sync::Arc;

pub use config::{seed_list, ExperimentConfig, Study};
pub use minimizers::{converge_minimizers, MinimizerStudy};
pub use output::{fibers_table, field_table, Table, CSV_VERSION_LINE};
pub use recovery::{converge_recovery, RecoveryStudy};
pub use sigma::{converge_sigma, converge_sigma_with, SigmaStudy};

use crate::error::Result;
use crate::model::{build_grid, restrict, DiscreteField, GridSpec, ModelParams};
use crate::sampler::{sample_shells, FiberSet};
use crate::solver::{solve_general, solve_quadratic, Problem, SolveReport, SolverOptions};

/// Grid, fibers and sampled force of one `(ε, seed)` run.
pub struct Instance {
    pub params: ModelParams,
    pub grid: Arc<GridSpec>,
    pub fibers: FiberSet,
    pub force: DiscreteField,
}

impl Study {
    pub fn instance(&self, eps: f64, seed: u64) -> Result<Instance> {
        let params = self.params_at(eps)?;
        let grid = build_grid(self.domain.clone(), eps)?;
        let fibers = sample_shells(&params, &grid, seed, self.symmetric)?;
        let force = restrict(self.force.as_ref(), &grid);
        Ok(Instance {
            params,
            grid,
            fibers,
            force,
        })
    }

    /// Minimize `E_ε` on an instance: conjugate gradients for quadratic
    /// potentials, accelerated gradient descent otherwise.
    pub fn minimize(&self, inst: &Instance) -> Result<SolveReport> {
        let problem = Problem::new(&inst.force, &inst.fibers, self.potential.as_ref())?;
        let options = SolverOptions {
            tol: self.solver_tol,
            ..Default::default()
        };
        if self.potential.is_quadratic() {
            solve_quadratic(&problem, &options)
        } else {
            solve_general(&problem, &options)
        }
    }
}
