use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::advance_mixed;

/// Points closer than this fraction of `eps` to the boundary count as outside.
const BOUNDARY_TOL: f64 = 1e-9;

/// An open axis-aligned box `(lo, hi)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "box corners must have equal, non-zero length (got {} and {})",
                lo.len(),
                hi.len()
            )));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a.is_finite() && b.is_finite() && a < b)) {
            return Err(Error::InvalidConfig(format!(
                "box must satisfy lo < hi componentwise (lo = {lo:?}, hi = {hi:?})"
            )));
        }
        Ok(Self { lo, hi })
    }

    /// The unit cube `(0, 1)^d`.
    pub fn unit(d: usize) -> Self {
        Self {
            lo: vec![0.0; d],
            hi: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn diameter(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    /// Strict containment in the open box.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&x, (&a, &b))| x > a && x < b)
    }

    /// Containment in the closed box.
    pub fn contains_closed(&self, x: &[f64], tol: f64) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&x, (&a, &b))| x >= a - tol && x <= b + tol)
    }

    /// Whether `other` lies in the closure of `self`.
    pub fn contains_box(&self, other: &BoxDomain) -> bool {
        other.dim() == self.dim()
            && self.contains_closed(&other.lo, 1e-12)
            && self.contains_closed(&other.hi, 1e-12)
    }

    /// Largest distance between a point of `self` and a point of `other`.
    pub fn max_distance_to(&self, other: &BoxDomain) -> f64 {
        (0..self.dim())
            .map(|k| {
                let a = (self.hi[k] - other.lo[k]).abs();
                let b = (other.hi[k] - self.lo[k]).abs();
                a.max(b).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }
}

type Indicator = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// A bounded region: an open box, or an indicator predicate inside a bounding box.
#[derive(Clone)]
pub enum Domain {
    Box(BoxDomain),
    Indicator { bounds: BoxDomain, inside: Indicator },
}

impl fmt::Debug for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Box(b) => f.debug_tuple("Box").field(b).finish(),
            Domain::Indicator { bounds, .. } => f
                .debug_struct("Indicator")
                .field("bounds", bounds)
                .finish_non_exhaustive(),
        }
    }
}

impl From<BoxDomain> for Domain {
    fn from(b: BoxDomain) -> Self {
        Domain::Box(b)
    }
}

impl Domain {
    pub fn indicator<F>(bounds: BoxDomain, inside: F) -> Self
    where
        F: Fn(&[f64]) -> bool + Send + Sync + 'static,
    {
        Domain::Indicator {
            bounds,
            inside: Arc::new(inside),
        }
    }

    pub fn bounds(&self) -> &BoxDomain {
        match self {
            Domain::Box(b) => b,
            Domain::Indicator { bounds, .. } => bounds,
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds().dim()
    }

    pub fn as_box(&self) -> Option<&BoxDomain> {
        match self {
            Domain::Box(b) => Some(b),
            Domain::Indicator { .. } => None,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Domain::Box(b) => b.contains(x),
            Domain::Indicator { bounds, inside } => bounds.contains(x) && inside(x),
        }
    }

    /// Lattice-point membership, with points on (or numerically at) the
    /// boundary of a box treated as outside.
    fn contains_lattice_point(&self, x: &[f64], eps: f64) -> bool {
        let tol = BOUNDARY_TOL * eps;
        let b = self.bounds();
        let in_box = x
            .iter()
            .zip(b.lo.iter().zip(&b.hi))
            .all(|(&x, (&a, &h))| x > a + tol && x < h - tol);
        match self {
            Domain::Box(_) => in_box,
            Domain::Indicator { inside, .. } => in_box && inside(x),
        }
    }
}

/// The neighbor stencil `B \ {0}`: all vectors with entries in {−1, 0, 1}
/// except zero, in lexicographic order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborStencil {
    dim: usize,
    offsets: Vec<i64>,
}

impl NeighborStencil {
    pub fn new(dim: usize) -> Self {
        let mut offsets = Vec::new();
        let extents = vec![3usize; dim];
        let mut idx = vec![0usize; dim];
        loop {
            if idx.iter().any(|&i| i != 1) {
                offsets.extend(idx.iter().map(|&i| i as i64 - 1));
            }
            if !advance_mixed(&mut idx, &extents) {
                break;
            }
        }
        Self { dim, offsets }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.offsets.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn offset(&self, k: usize) -> &[i64] {
        &self.offsets[k * self.dim..(k + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[i64]> {
        self.offsets.chunks_exact(self.dim)
    }

    /// Index of the negated offset.
    pub fn opposite(&self, k: usize) -> usize {
        self.len() - 1 - k
    }
}

/// The lattice `Q_ε = Q ∩ εZ^d`, enumerated in lexicographic order of
/// lattice coordinates.
pub struct GridSpec {
    domain: Domain,
    eps: f64,
    dim: usize,
    coords: Vec<i64>,
    origin: Vec<i64>,
    extents: Vec<usize>,
    lookup: Vec<u32>,
    stencil: NeighborStencil,
    neighbors: OnceLock<Vec<u32>>,
}

const NONE: u32 = u32::MAX;

impl fmt::Debug for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridSpec")
            .field("domain", &self.domain)
            .field("eps", &self.eps)
            .field("nodes", &self.len())
            .finish()
    }
}

impl PartialEq for GridSpec {
    fn eq(&self, other: &Self) -> bool {
        self.eps == other.eps
            && self.dim == other.dim
            && self.domain.bounds() == other.domain.bounds()
            && self.coords == other.coords
    }
}

/// Build `Q_ε` for the given domain and grid size.
pub fn build_grid(domain: impl Into<Domain>, eps: f64) -> Result<Arc<GridSpec>> {
    GridSpec::new(domain.into(), eps).map(Arc::new)
}

impl GridSpec {
    pub fn new(domain: Domain, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidConfig(format!("grid size must be positive, got {eps}")));
        }
        let dim = domain.dim();
        let b = domain.bounds();
        let origin: Vec<i64> = b.lo.iter().map(|&a| (a / eps).floor() as i64).collect();
        let top: Vec<i64> = b.hi.iter().map(|&h| (h / eps).ceil() as i64).collect();
        let full_extents: Vec<usize> = origin
            .iter()
            .zip(&top)
            .map(|(&o, &t)| (t - o + 1) as usize)
            .collect();

        let mut coords = Vec::new();
        let mut idx = vec![0usize; dim];
        let mut x = vec![0.0; dim];
        let mut k = vec![0i64; dim];
        loop {
            for a in 0..dim {
                k[a] = origin[a] + idx[a] as i64;
                x[a] = k[a] as f64 * eps;
            }
            if domain.contains_lattice_point(&x, eps) {
                coords.extend_from_slice(&k);
            }
            if !advance_mixed(&mut idx, &full_extents) {
                break;
            }
        }
        if coords.is_empty() {
            return Err(Error::EmptyGrid { eps });
        }
        let n = coords.len() / dim;
        if n >= NONE as usize {
            return Err(Error::InvalidConfig(format!("grid with {n} nodes is too large")));
        }

        // Tight lattice bounding range plus one layer of padding, so every
        // stencil neighbor lookup stays in range.
        let mut lo_k = vec![i64::MAX; dim];
        let mut hi_k = vec![i64::MIN; dim];
        for node in coords.chunks_exact(dim) {
            for a in 0..dim {
                lo_k[a] = lo_k[a].min(node[a]);
                hi_k[a] = hi_k[a].max(node[a]);
            }
        }
        let origin: Vec<i64> = lo_k.iter().map(|&l| l - 1).collect();
        let extents: Vec<usize> = lo_k
            .iter()
            .zip(&hi_k)
            .map(|(&l, &h)| (h - l + 3) as usize)
            .collect();
        let mut lookup = vec![NONE; extents.iter().product()];
        let mut grid = Self {
            domain,
            eps,
            dim,
            coords,
            origin,
            extents,
            lookup: Vec::new(),
            stencil: NeighborStencil::new(dim),
            neighbors: OnceLock::new(),
        };
        for i in 0..n {
            let slot = grid.slot(grid.lattice(i)).expect("node inside its own range");
            lookup[slot] = i as u32;
        }
        grid.lookup = lookup;
        Ok(grid)
    }

    fn slot(&self, k: &[i64]) -> Option<usize> {
        let mut s = 0usize;
        for a in 0..self.dim {
            let r = k[a] - self.origin[a];
            if r < 0 || r as usize >= self.extents[a] {
                return None;
            }
            s = s * self.extents[a] + r as usize;
        }
        Some(s)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn stencil(&self) -> &NeighborStencil {
        &self.stencil
    }

    /// Integer lattice coordinates of node `i`.
    pub fn lattice(&self, i: usize) -> &[i64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, i: usize) -> Vec<f64> {
        self.lattice(i).iter().map(|&k| k as f64 * self.eps).collect()
    }

    pub fn position_into(&self, i: usize, out: &mut [f64]) {
        for (o, &k) in out.iter_mut().zip(self.lattice(i)) {
            *o = k as f64 * self.eps;
        }
    }

    /// Dense index of a lattice point, if it belongs to `Q_ε`.
    pub fn index_of(&self, k: &[i64]) -> Option<usize> {
        self.slot(k).and_then(|s| match self.lookup[s] {
            NONE => None,
            i => Some(i as usize),
        })
    }

    /// Node reached from `i` by the lattice offset `offset`.
    pub fn neighbor(&self, i: usize, offset: &[i64]) -> Option<usize> {
        let k: Vec<i64> = self.lattice(i).iter().zip(offset).map(|(a, b)| a + b).collect();
        self.index_of(&k)
    }

    /// Stencil neighbor table: entry `i * |B| + k` is the node at
    /// `x_i + ε b_k`, or `None` outside `Q_ε`.
    pub fn stencil_neighbor(&self, i: usize, k: usize) -> Option<usize> {
        let table = self.neighbors.get_or_init(|| {
            let m = self.stencil.len();
            let mut t = vec![NONE; self.len() * m];
            for i in 0..self.len() {
                for (k, b) in self.stencil.iter().enumerate() {
                    if let Some(j) = self.neighbor(i, b) {
                        t[i * m + k] = j as u32;
                    }
                }
            }
            t
        });
        match table[i * self.stencil.len() + k] {
            NONE => None,
            j => Some(j as usize),
        }
    }

    /// True when every lattice point of the node bounding range is a node.
    pub fn is_full_box(&self) -> bool {
        let inner: usize = self.extents.iter().map(|e| e - 2).product();
        inner == self.len()
    }

    /// Per-axis inclusive lattice range of the nodes.
    pub fn lattice_range(&self) -> Vec<(i64, i64)> {
        self.origin
            .iter()
            .zip(&self.extents)
            .map(|(&o, &e)| (o + 1, o + e as i64 - 2))
            .collect()
    }

    /// Whether the cells `x + (−ε/2, ε/2]^d` tile the (box) domain exactly.
    pub fn is_cell_aligned(&self) -> bool {
        let Some(b) = self.domain.as_box() else {
            return false;
        };
        if !self.is_full_box() {
            return false;
        }
        let range = self.lattice_range();
        (0..self.dim).all(|a| {
            let lo = (range[a].0 as f64 - 0.5) * self.eps;
            let hi = (range[a].1 as f64 + 0.5) * self.eps;
            (lo - b.lo[a]).abs() <= 1e-9 * self.eps && (hi - b.hi[a]).abs() <= 1e-9 * self.eps
        })
    }

    /// Whether the cell of node `i` sticks out of the domain.
    pub fn cell_clipped(&self, i: usize) -> bool {
        let h = 0.5 * self.eps;
        let tol = 1e-9 * self.eps;
        let center = self.position(i);
        match &self.domain {
            Domain::Box(b) => (0..self.dim)
                .any(|a| center[a] - h < b.lo[a] - tol || center[a] + h > b.hi[a] + tol),
            Domain::Indicator { .. } => {
                // Probe corners pulled slightly inward.
                let mut corner = vec![0.0; self.dim];
                (0..1usize << self.dim).any(|mask| {
                    for a in 0..self.dim {
                        let sgn = if mask >> a & 1 == 1 { 1.0 } else { -1.0 };
                        corner[a] = center[a] + sgn * (h - tol);
                    }
                    !self.domain.contains(&corner)
                })
            }
        }
    }

    /// Cell faces `(k ± 1/2)ε` along `axis`, in increasing order.
    pub fn cell_faces(&self, axis: usize) -> Vec<f64> {
        let (a, b) = self.lattice_range()[axis];
        (a..=b + 1).map(|k| (k as f64 - 0.5) * self.eps).collect()
    }

    /// Lattice point whose half-open cell `z + (−ε/2, ε/2]^d` contains `x`.
    pub fn cell_of(&self, x: &[f64]) -> Vec<i64> {
        x.iter()
            .map(|&xi| {
                let t = xi / self.eps - 0.5;
                let r = t.round();
                if (t - r).abs() <= 1e-9 {
                    r as i64
                } else {
                    t.ceil() as i64
                }
            })
            .collect()
    }

    /// Same lattice, nodes enumerated in the given order (for ordering tests).
    #[cfg(test)]
    pub(crate) fn reordered(&self, order: &[usize]) -> GridSpec {
        assert_eq!(order.len(), self.len());
        let mut coords = Vec::with_capacity(self.coords.len());
        for &i in order {
            coords.extend_from_slice(self.lattice(i));
        }
        let mut lookup = vec![NONE; self.lookup.len()];
        let mut g = GridSpec {
            domain: self.domain.clone(),
            eps: self.eps,
            dim: self.dim,
            coords,
            origin: self.origin.clone(),
            extents: self.extents.clone(),
            lookup: Vec::new(),
            stencil: self.stencil.clone(),
            neighbors: OnceLock::new(),
        };
        for i in 0..g.len() {
            lookup[g.slot(g.lattice(i)).unwrap()] = i as u32;
        }
        g.lookup = lookup;
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_count(lo: f64, hi: f64, eps: f64, d: u32) -> usize {
        // Independent oracle: scan integers with exact rational arithmetic
        // on k·eps when eps = 1/m.
        let m = (1.0 / eps).round() as i64;
        let (lo_n, hi_n) = ((lo * m as f64).round() as i64, (hi * m as f64).round() as i64);
        let per_axis = (lo_n - 10..hi_n + 10).filter(|&k| k > lo_n && k < hi_n).count();
        per_axis.pow(d)
    }

    #[test]
    fn half_grid_has_single_center_node() {
        let g = build_grid(BoxDomain::unit(2), 0.5).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.position(0), vec![0.5, 0.5]);
    }

    #[test]
    fn quarter_grid_has_nine_nodes() {
        let g = build_grid(BoxDomain::unit(2), 0.25).unwrap();
        assert_eq!(g.len(), 9);
    }

    #[test]
    fn tenth_grid_on_three_box_matches_enumeration() {
        let g = build_grid(BoxDomain::new(vec![0.0; 2], vec![3.0; 2]).unwrap(), 0.1).unwrap();
        assert_eq!(g.len(), 841);
        // ε = 1/10 is not an exact dyadic; the oracle works on integers.
        assert_eq!(brute_force_count(0.0, 3.0, 0.1, 2), 841);
    }

    #[test]
    fn node_order_is_lexicographic_and_index_map_is_bijective() {
        let g = build_grid(BoxDomain::new(vec![0.0, -0.3], vec![0.7, 0.6]).unwrap(), 0.1).unwrap();
        for i in 1..g.len() {
            assert!(g.lattice(i - 1) < g.lattice(i));
        }
        for i in 0..g.len() {
            assert_eq!(g.index_of(g.lattice(i)), Some(i));
            assert!(g.domain().contains(&g.position(i)));
        }
        assert!(g.is_full_box());
    }

    #[test]
    fn empty_grid_is_an_error() {
        let err = GridSpec::new(BoxDomain::new(vec![0.1], vec![0.2]).unwrap().into(), 0.5);
        assert!(matches!(err, Err(Error::EmptyGrid { .. })));
    }

    #[test]
    fn indicator_domain_disc() {
        let disc = Domain::indicator(BoxDomain::new(vec![-1.0; 2], vec![1.0; 2]).unwrap(), |x| {
            x[0] * x[0] + x[1] * x[1] < 1.0
        });
        let g = build_grid(disc, 0.25).unwrap();
        // Points (i,j)/4 with i²+j² < 16.
        let expected = (-4i64..=4)
            .flat_map(|i| (-4i64..=4).map(move |j| (i, j)))
            .filter(|(i, j)| i * i + j * j < 16)
            .count();
        assert_eq!(g.len(), expected);
        assert!(!g.is_full_box());
    }

    #[test]
    fn stencil_has_all_nonzero_sign_vectors() {
        for d in 1..=4 {
            let b = NeighborStencil::new(d);
            assert_eq!(b.len(), 3usize.pow(d as u32) - 1);
            for k in 0..b.len() {
                let neg: Vec<i64> = b.offset(k).iter().map(|x| -x).collect();
                assert_eq!(b.offset(b.opposite(k)), neg.as_slice());
            }
        }
    }

    #[test]
    fn unit_cube_measure_converges() {
        let mut prev = f64::INFINITY;
        for m in [4, 8, 16, 32, 64] {
            let eps = 1.0 / m as f64;
            let g = build_grid(BoxDomain::unit(2), eps).unwrap();
            let err = (1.0 - eps * eps * g.len() as f64).abs();
            assert!(err < prev);
            prev = err;
        }
        assert!(prev < 0.04);
    }

    #[test]
    fn half_open_cell_convention() {
        let g = build_grid(BoxDomain::unit(2), 0.25).unwrap();
        assert_eq!(g.cell_of(&[0.375, 0.375]), vec![1, 1]);
        assert_eq!(g.cell_of(&[0.3750001, 0.25]), vec![2, 1]);
        assert_eq!(g.cell_of(&[0.1250001, 0.25]), vec![1, 1]);
    }

    #[test]
    fn cell_alignment_detection() {
        let aligned = build_grid(BoxDomain::new(vec![0.125; 2], vec![0.875; 2]).unwrap(), 0.25).unwrap();
        assert!(aligned.is_cell_aligned());
        let unaligned = build_grid(BoxDomain::unit(2), 0.25).unwrap();
        assert!(!unaligned.is_cell_aligned());
        assert!(!unaligned.cell_clipped(0));
        let clipped = build_grid(BoxDomain::new(vec![0.0; 2], vec![0.6; 2]).unwrap(), 0.25).unwrap();
        assert!(clipped.cell_clipped(clipped.len() - 1));
    }
}
