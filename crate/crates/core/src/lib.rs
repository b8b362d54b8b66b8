//! Discrete elastic energies with random long-range fibers.
//!
//! A lattice `Q_ε = Q ∩ εZ^d` carries displacements `u_ε`. Nearest-neighbor
//! springs give a local elastic energy; random Bernoulli fibers with
//! power-law probabilities give a non-local, fractional-type energy. The crate
//! samples the fibers, evaluates and minimizes the energy, evaluates the
//! continuum limit functional, and runs convergence studies.

pub mod energy;
pub mod error;
pub mod experiments;
pub mod fields;
pub mod limit;
pub mod model;
pub mod potential;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod solver;
pub mod sum;

pub use energy::{
    gradient, korn_lhs, local_energy, local_energy_interior, nonlocal_energy, poincare_check,
    total_energy, work_term, EnergyBreakdown,
};
pub use error::{Error, ParamViolation, Result};
pub use fields::SmoothField;
pub use limit::{limit_total, local_limit, nonlocal_limit, work_limit, LimitSettings};
pub use model::{
    build_grid, extend, restrict, roundtrip_defect, validate_params, BoxDomain, DiscreteField,
    Domain, GridSpec, ModelParams, NeighborStencil, ParamRecord,
};
pub use potential::{by_name as potential_by_name, Potential};
pub use sampler::{
    expected_edge_count, pair_probability, sample_naive, sample_shells, FiberSampler, FiberSet,
    PairProbability,
};
pub use solver::{solve_general, solve_quadratic, Problem, SolveReport, SolverOptions};
