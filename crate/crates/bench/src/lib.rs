//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use fiberlat_core::fields::{displacement_preset, force_preset};
use fiberlat_core::{build_grid, restrict, sample_shells, BoxDomain, DiscreteField, FiberSet, GridSpec, ModelParams, ParamRecord};

/// Default two-dimensional parameters at grid size `eps`.
pub fn params(eps: f64) -> ModelParams {
    ModelParams::validate(ParamRecord {
        eps,
        ..Default::default()
    })
    .expect("default parameters are admissible")
}

pub fn grid(eps: f64) -> Arc<GridSpec> {
    build_grid(BoxDomain::unit(2), eps).expect("unit box grid")
}

/// One sampled instance with the `bump` displacement and `sine` force.
pub struct Fixture {
    pub params: ModelParams,
    pub grid: Arc<GridSpec>,
    pub fibers: FiberSet,
    pub displacement: DiscreteField,
    pub force: DiscreteField,
}

pub fn fixture(eps: f64, seed: u64) -> Fixture {
    let q = BoxDomain::unit(2);
    let params = params(eps);
    let grid = grid(eps);
    let fibers = sample_shells(&params, &grid, seed, false).expect("sampling");
    let displacement = restrict(displacement_preset("bump", &q).unwrap().as_ref(), &grid);
    let force = restrict(force_preset("sine", &q).unwrap().as_ref(), &grid);
    Fixture {
        params,
        grid,
        fibers,
        displacement,
        force,
    }
}
