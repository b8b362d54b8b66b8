//! Random long-range fibers: Bernoulli connections between lattice pairs.
//!
//! Two samplers produce the same law. [`FiberSampler::sample_naive`] draws one
//! keyed uniform per pair and serves as the oracle. [`FiberSampler::sample_shells`]
//! groups pairs by lattice offset, draws a binomial count per group and picks
//! that many pairs uniformly without replacement.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::seq::index;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{GridSpec, ModelParams};
use crate::quadrature::advance_mixed;
use crate::rng::{keyed_unit, offset_key, CounterRng};
use crate::sum::CompensatedSum;

const NAIVE_STREAM: u64 = 0x4E41_4956;
const SHELL_STREAM: u64 = 0x5348_454C;

/// Default cap on the number of ordered pairs visited by the naive sampler.
pub const DEFAULT_NAIVE_CAP: u128 = 1 << 27;

fn norm(offset: &[i64]) -> f64 {
    offset.iter().map(|&k| (k * k) as f64).sum::<f64>().sqrt()
}

/// Whether the first nonzero entry is positive.
fn is_canonical(offset: &[i64]) -> bool {
    offset.iter().find(|&&k| k != 0).is_some_and(|&k| k > 0)
}

type OffsetFn = dyn Fn(&[i64]) -> f64 + Send + Sync;

/// Connection probability as a function of the lattice offset `ξ = (x − y)/ε`.
#[derive(Clone)]
pub struct PairProbability {
    law: Arc<OffsetFn>,
}

impl fmt::Debug for PairProbability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PairProbability").finish_non_exhaustive()
    }
}

impl PairProbability {
    /// `p(ξ) = C̃ ε^α |ξ|^{−d−ps+ℓ}`, and `p(0) = 0`.
    pub fn from_params(params: &ModelParams) -> Self {
        let scale = params.c_tilde() * params.eps().powf(params.alpha());
        let exponent = params.probability_exponent();
        Self::custom(move |xi| scale * norm(xi).powf(exponent))
    }

    /// Arbitrary law; the value at `ξ = 0` is forced to zero and the rest is
    /// clamped into `[0, 1]`.
    pub fn custom<F>(law: F) -> Self
    where
        F: Fn(&[i64]) -> f64 + Send + Sync + 'static,
    {
        Self { law: Arc::new(law) }
    }

    /// The same probability for every nonzero offset.
    pub fn constant(p: f64) -> Self {
        Self::custom(move |_| p)
    }

    pub fn of_offset(&self, offset: &[i64]) -> f64 {
        if offset.iter().all(|&k| k == 0) {
            return 0.0;
        }
        (self.law)(offset).clamp(0.0, 1.0)
    }
}

/// Fiber weight `σ(ξ) = c ε^{−α} |ξ|^{d+ps−ℓ}` for a present connection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightLaw {
    pub scale: f64,
    pub exponent: f64,
}

impl WeightLaw {
    pub fn from_params(params: &ModelParams) -> Self {
        Self {
            scale: params.c() * params.eps().powf(-params.alpha()),
            exponent: params.sigma_exponent(),
        }
    }

    pub fn of_offset(&self, offset: &[i64]) -> f64 {
        self.scale * norm(offset).powf(self.exponent)
    }
}

/// `p(ξ)` for the model parameters.
pub fn pair_probability(params: &ModelParams, offset: &[i64]) -> f64 {
    PairProbability::from_params(params).of_offset(offset)
}

/// A directed fiber from node `i` to node `j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Sampled fibers on a grid, sorted by `(i, j)`.
#[derive(Clone, Debug)]
pub struct FiberSet {
    grid: Arc<GridSpec>,
    edges: Vec<Edge>,
    kernel_exponent: f64,
    seed: u64,
    symmetric: bool,
}

impl FiberSet {
    pub fn empty(grid: Arc<GridSpec>) -> Self {
        Self {
            grid,
            edges: Vec::new(),
            kernel_exponent: 0.0,
            seed: 0,
            symmetric: true,
        }
    }

    /// Build from explicit edges. Weights are taken as given; `kernel_exponent`
    /// is the `d + ps` of the interaction kernel `|x − y|^{−d−ps}`.
    pub fn from_edges(
        grid: Arc<GridSpec>,
        mut edges: Vec<Edge>,
        kernel_exponent: f64,
        seed: u64,
        symmetric: bool,
    ) -> Result<Self> {
        let n = grid.len();
        if let Some(e) = edges.iter().find(|e| e.i >= n || e.j >= n || e.i == e.j) {
            return Err(Error::InvalidConfig(format!(
                "edge ({}, {}) is a self-loop or leaves a grid of {n} nodes",
                e.i, e.j
            )));
        }
        edges.sort_by_key(|e| (e.i, e.j));
        if edges.windows(2).any(|w| (w[0].i, w[0].j) == (w[1].i, w[1].j)) {
            return Err(Error::InvalidConfig("duplicate edge".into()));
        }
        Ok(Self {
            grid,
            edges,
            kernel_exponent,
            seed,
            symmetric,
        })
    }

    pub fn kernel_exponent(&self) -> f64 {
        self.kernel_exponent
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Lattice offset `(x_i − x_j)/ε` of an edge.
    pub fn offset(&self, e: &Edge) -> Vec<i64> {
        self.grid
            .lattice(e.i)
            .iter()
            .zip(self.grid.lattice(e.j))
            .map(|(a, b)| a - b)
            .collect()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.edges
            .binary_search_by_key(&(i, j), |e| (e.i, e.j))
            .is_ok()
    }

    /// Number of edges per lattice offset.
    pub fn offset_counts(&self) -> BTreeMap<Vec<i64>, usize> {
        let mut m = BTreeMap::new();
        for e in &self.edges {
            *m.entry(self.offset(e)).or_insert(0) += 1;
        }
        m
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).collect::<CompensatedSum>().value()
    }
}

/// A pair group: all ordered pairs `(x, y)` of nodes with `x − y = εξ`.
struct Group {
    offset: Vec<i64>,
    size: usize,
}

/// Sampler configuration.
#[derive(Clone, Debug)]
pub struct FiberSampler {
    pub probability: PairProbability,
    pub weights: WeightLaw,
    pub kernel_exponent: f64,
    pub seed: u64,
    pub symmetric: bool,
    pub naive_cap: u128,
}

impl FiberSampler {
    pub fn new(params: &ModelParams, seed: u64, symmetric: bool) -> Self {
        Self {
            probability: PairProbability::from_params(params),
            weights: WeightLaw::from_params(params),
            kernel_exponent: params.kernel_exponent(),
            seed,
            symmetric,
            naive_cap: DEFAULT_NAIVE_CAP,
        }
    }

    pub fn with_probability(mut self, probability: PairProbability) -> Self {
        self.probability = probability;
        self
    }

    fn edge(&self, grid: &GridSpec, i: usize, j: usize) -> Edge {
        let xi: Vec<i64> = grid.lattice(i).iter().zip(grid.lattice(j)).map(|(a, b)| a - b).collect();
        Edge {
            i,
            j,
            weight: self.weights.of_offset(&xi),
        }
    }

    /// One keyed Bernoulli draw per ordered pair (per unordered pair when symmetric).
    pub fn sample_naive(&self, grid: &Arc<GridSpec>) -> Result<FiberSet> {
        let n = grid.len();
        let pairs = (n as u128) * (n as u128);
        if pairs > self.naive_cap {
            return Err(Error::SizeLimit {
                pairs,
                cap: self.naive_cap,
            });
        }
        let d = grid.dim();
        let mut xi = vec![0i64; d];
        let mut edges = Vec::new();
        for i in 0..n {
            let lo = if self.symmetric { i + 1 } else { 0 };
            for j in lo..n {
                if i == j {
                    continue;
                }
                for (a, (p, q)) in xi.iter_mut().zip(grid.lattice(i).iter().zip(grid.lattice(j))) {
                    *a = p - q;
                }
                if self.symmetric && !is_canonical(&xi) {
                    xi.iter_mut().for_each(|a| *a = -*a);
                }
                let p = self.probability.of_offset(&xi);
                if p <= 0.0 {
                    continue;
                }
                let u = keyed_unit(self.seed, NAIVE_STREAM, (i * n + j) as u64);
                if u < p {
                    edges.push(self.edge(grid, i, j));
                    if self.symmetric {
                        edges.push(self.edge(grid, j, i));
                    }
                }
            }
        }
        FiberSet::from_edges(grid.clone(), edges, self.kernel_exponent, self.seed, self.symmetric)
    }

    /// Binomial count per offset group, then uniform selection within the group.
    pub fn sample_shells(&self, grid: &Arc<GridSpec>) -> Result<FiberSet> {
        let groups = offset_groups(grid, self.symmetric);
        let per_group: Vec<Vec<Edge>> = groups
            .par_iter()
            .map(|g| self.sample_group(grid, g))
            .collect();
        let edges = per_group.into_iter().flatten().collect();
        FiberSet::from_edges(grid.clone(), edges, self.kernel_exponent, self.seed, self.symmetric)
    }

    fn sample_group(&self, grid: &GridSpec, g: &Group) -> Vec<Edge> {
        let p = self.probability.of_offset(&g.offset);
        if p <= 0.0 || g.size == 0 {
            return Vec::new();
        }
        let mut rng = CounterRng::new(self.seed ^ SHELL_STREAM, offset_key(&g.offset));
        let count = if p >= 1.0 {
            g.size
        } else {
            Binomial::new(g.size as u64, p)
                .expect("probability in (0, 1)")
                .sample(&mut rng) as usize
        };
        if count == 0 {
            return Vec::new();
        }
        let weight = self.weights.of_offset(&g.offset);
        let pairs = GroupPairs::new(grid, &g.offset);
        let mut out = Vec::with_capacity(if self.symmetric { 2 * count } else { count });
        for m in index::sample(&mut rng, g.size, count).into_iter() {
            let (i, j) = pairs.pair(grid, m);
            out.push(Edge { i, j, weight });
            if self.symmetric {
                out.push(Edge { i: j, j: i, weight });
            }
        }
        out
    }
}

/// `sample_naive` with the model's probability and weight laws.
pub fn sample_naive(params: &ModelParams, grid: &Arc<GridSpec>, seed: u64, symmetric: bool) -> Result<FiberSet> {
    FiberSampler::new(params, seed, symmetric).sample_naive(grid)
}

/// `sample_shells` with the model's probability and weight laws.
pub fn sample_shells(params: &ModelParams, grid: &Arc<GridSpec>, seed: u64, symmetric: bool) -> Result<FiberSet> {
    FiberSampler::new(params, seed, symmetric).sample_shells(grid)
}

/// Enumerates the pairs of one offset group.
enum GroupPairs {
    /// Full box: pairs are the points of a sub-box, addressed in mixed radix.
    Boxed { first: Vec<i64>, extents: Vec<usize>, offset: Vec<i64> },
    /// General grid: explicit list.
    Listed(Vec<(usize, usize)>),
}

impl GroupPairs {
    fn new(grid: &GridSpec, offset: &[i64]) -> Self {
        if grid.is_full_box() {
            let range = grid.lattice_range();
            let first = range
                .iter()
                .zip(offset)
                .map(|(&(lo, _), &o)| lo + o.max(0))
                .collect();
            let extents = range
                .iter()
                .zip(offset)
                .map(|(&(lo, hi), &o)| (hi - lo + 1 - o.abs()) as usize)
                .collect();
            GroupPairs::Boxed {
                first,
                extents,
                offset: offset.to_vec(),
            }
        } else {
            let neg: Vec<i64> = offset.iter().map(|k| -k).collect();
            let list = (0..grid.len())
                .filter_map(|i| grid.neighbor(i, &neg).map(|j| (i, j)))
                .collect();
            GroupPairs::Listed(list)
        }
    }

    fn pair(&self, grid: &GridSpec, mut m: usize) -> (usize, usize) {
        match self {
            GroupPairs::Boxed { first, extents, offset } => {
                let d = first.len();
                let mut x = vec![0i64; d];
                for a in (0..d).rev() {
                    x[a] = first[a] + (m % extents[a]) as i64;
                    m /= extents[a];
                }
                let y: Vec<i64> = x.iter().zip(offset).map(|(p, o)| p - o).collect();
                (
                    grid.index_of(&x).expect("pair inside the box"),
                    grid.index_of(&y).expect("pair inside the box"),
                )
            }
            GroupPairs::Listed(list) => list[m],
        }
    }
}

/// Every offset realized by at least one ordered pair, with its group size.
/// In symmetric mode only canonical offsets are listed.
fn offset_groups(grid: &GridSpec, symmetric: bool) -> Vec<Group> {
    let range = grid.lattice_range();
    let spans: Vec<i64> = range.iter().map(|&(lo, hi)| hi - lo).collect();
    let extents: Vec<usize> = spans.iter().map(|&s| (2 * s + 1) as usize).collect();
    let full = grid.is_full_box();
    let mut groups = Vec::new();
    let mut idx = vec![0usize; spans.len()];
    loop {
        let offset: Vec<i64> = idx.iter().zip(&spans).map(|(&k, &s)| k as i64 - s).collect();
        if offset.iter().any(|&k| k != 0) && (!symmetric || is_canonical(&offset)) {
            let size = if full {
                offset
                    .iter()
                    .zip(&spans)
                    .map(|(&o, &s)| (s + 1 - o.abs()) as usize)
                    .product()
            } else {
                let neg: Vec<i64> = offset.iter().map(|k| -k).collect();
                (0..grid.len()).filter(|&i| grid.neighbor(i, &neg).is_some()).count()
            };
            if size > 0 {
                groups.push(Group { offset, size });
            }
        }
        if !advance_mixed(&mut idx, &extents) {
            break;
        }
    }
    groups
}

/// Expected number of ordered pairs connected: `Σ_{x ≠ y} p`.
pub fn expected_edge_count(params: &ModelParams, grid: &GridSpec) -> f64 {
    expected_count_with(&PairProbability::from_params(params), grid, 0.0)
}

/// Expected number of connected ordered pairs at distance at least `min_distance`.
pub fn expected_far_edge_count(params: &ModelParams, grid: &GridSpec, min_distance: f64) -> f64 {
    expected_count_with(&PairProbability::from_params(params), grid, min_distance)
}

/// Expected edge count for an arbitrary probability law.
pub fn expected_count_with(prob: &PairProbability, grid: &GridSpec, min_distance: f64) -> f64 {
    let eps = grid.eps();
    offset_groups(grid, false)
        .into_iter()
        .filter(|g| eps * norm(&g.offset) >= min_distance * (1.0 - 1e-12))
        .map(|g| g.size as f64 * prob.of_offset(&g.offset))
        .collect::<CompensatedSum>()
        .value()
}
