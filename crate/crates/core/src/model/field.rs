use std::sync::Arc;

use super::grid::GridSpec;
use crate::error::{Error, Result};
use crate::sum::CompensatedSum;

/// Vector-valued data on the nodes of a grid, extended by zero outside it.
#[derive(Clone, Debug)]
pub struct DiscreteField {
    grid: Arc<GridSpec>,
    components: usize,
    values: Vec<f64>,
}

impl PartialEq for DiscreteField {
    fn eq(&self, other: &Self) -> bool {
        self.components == other.components
            && self.values == other.values
            && (Arc::ptr_eq(&self.grid, &other.grid) || self.grid == other.grid)
    }
}

impl DiscreteField {
    pub fn zeros(grid: Arc<GridSpec>, components: usize) -> Self {
        let n = grid.len() * components;
        Self {
            grid,
            components,
            values: vec![0.0; n],
        }
    }

    /// Wrap node-major values (`values[i * m + k]` is component `k` at node `i`).
    pub fn from_values(grid: Arc<GridSpec>, components: usize, values: Vec<f64>) -> Result<Self> {
        let expected = grid.len() * components;
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: values.len(),
            });
        }
        Ok(Self {
            grid,
            components,
            values,
        })
    }

    pub fn from_fn<F>(grid: Arc<GridSpec>, components: usize, mut f: F) -> Self
    where
        F: FnMut(&[f64], &mut [f64]),
    {
        let mut values = vec![0.0; grid.len() * components];
        let mut x = vec![0.0; grid.dim()];
        for (i, v) in values.chunks_exact_mut(components).enumerate() {
            grid.position_into(i, &mut x);
            f(&x, v);
        }
        Self {
            grid,
            components,
            values,
        }
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.values[i * self.components..(i + 1) * self.components]
    }

    pub fn node_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.components..(i + 1) * self.components]
    }

    /// Value at a lattice point; zero outside the grid.
    pub fn at_lattice(&self, k: &[i64]) -> Vec<f64> {
        match self.grid.index_of(k) {
            Some(i) => self.node(i).to_vec(),
            None => vec![0.0; self.components],
        }
    }

    pub fn same_grid(&self, other: &DiscreteField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn check_same_grid(&self, other: &DiscreteField) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn scale(&mut self, t: f64) {
        self.values.iter_mut().for_each(|v| *v *= t);
    }

    /// `self += t * other`.
    pub fn axpy(&mut self, t: f64, other: &DiscreteField) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += t * b;
        }
    }

    pub fn dot(&self, other: &DiscreteField) -> f64 {
        dot(&self.values, &other.values)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Discrete L² norm `(ε^d Σ |u|²)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        (self.grid.eps().powi(self.grid.dim() as i32) * self.dot(self)).sqrt()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = CompensatedSum::new();
    for (x, y) in a.iter().zip(b) {
        acc.add(x * y);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::grid::{build_grid, BoxDomain};

    #[test]
    fn outside_queries_are_zero() {
        let g = build_grid(BoxDomain::unit(2), 0.25).unwrap();
        let u = DiscreteField::from_fn(g, 2, |x, v| {
            v[0] = x[0];
            v[1] = 1.0;
        });
        assert_eq!(u.at_lattice(&[1, 1]), vec![0.25, 1.0]);
        assert_eq!(u.at_lattice(&[0, 1]), vec![0.0, 0.0]);
        assert_eq!(u.at_lattice(&[4, 2]), vec![0.0, 0.0]);
    }

    #[test]
    fn value_count_is_checked() {
        let g = build_grid(BoxDomain::unit(2), 0.25).unwrap();
        assert!(DiscreteField::from_values(g.clone(), 2, vec![0.0; 18]).is_ok());
        assert!(matches!(
            DiscreteField::from_values(g, 2, vec![0.0; 17]),
            Err(Error::DimensionMismatch { expected: 18, actual: 17 })
        ));
    }
}
