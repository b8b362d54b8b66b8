//! Model parameters, the lattice `Q_ε`, discrete fields and the operators `R_ε`, `R*_ε`.

mod field;
mod grid;
mod operators;
mod params;

pub use field::DiscreteField;
pub(crate) use field::dot;
pub use grid::{build_grid, BoxDomain, Domain, GridSpec, NeighborStencil};
pub use operators::{
    extend, extension_integral, l2_distance_extended, l2_distance_to_smooth, restrict,
    roundtrip_defect, Extension,
};
pub use params::*;
