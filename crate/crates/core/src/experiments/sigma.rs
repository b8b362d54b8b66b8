//! Averages of the random coefficients over `U × J`:
//! `X_ε = (|U||J|)^{-1} ε^{2d} Σ_{x∈U_ε} Σ_{y∈J_ε} σ_{ε,x,y} ϖ(x, y)`,
//! split into its mean `I₁` and fluctuation `I₂ = X_ε − I₁`.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::Study;
use super::output::{fmt_f64, Table};
use super::stats::{fit_slope, mean_std};
use crate::error::Result;
use crate::model::{build_grid, BoxDomain, GridSpec, ModelParams};
use crate::quadrature::advance_mixed;
use crate::sampler::{FiberSampler, FiberSet};

/// Inclusive lattice index range of `εZ ∩ (lo, hi)`, or `None` when empty.
fn axis_range(lo: f64, hi: f64, eps: f64) -> Option<(i64, i64)> {
    let a = (lo / eps + 1e-9).floor() as i64 + 1;
    let b = (hi / eps - 1e-9).ceil() as i64 - 1;
    (a <= b).then_some((a, b))
}

/// Per-axis index ranges of `B ∩ εZ^d`.
pub fn lattice_box(b: &BoxDomain, eps: f64) -> Option<Vec<(i64, i64)>> {
    (0..b.dim()).map(|k| axis_range(b.lo[k], b.hi[k], eps)).collect()
}

fn in_ranges(k: &[i64], ranges: &Option<Vec<(i64, i64)>>) -> bool {
    match ranges {
        Some(r) => k.iter().zip(r).all(|(&c, &(a, b))| a <= c && c <= b),
        None => false,
    }
}

/// Which grid nodes lie in `b`.
pub fn membership(grid: &GridSpec, b: &BoxDomain) -> Vec<bool> {
    let ranges = lattice_box(b, grid.eps());
    (0..grid.len()).map(|i| in_ranges(grid.lattice(i), &ranges)).collect()
}

fn normalization(eps: f64, d: usize, u_box: &BoxDomain, j_box: &BoxDomain) -> f64 {
    eps.powi(2 * d as i32) / (u_box.volume() * j_box.volume())
}

/// `X_ε` for one sampled fiber set.
pub fn sigma_statistic(fibers: &FiberSet, u_box: &BoxDomain, j_box: &BoxDomain) -> f64 {
    let grid = fibers.grid();
    let in_u = membership(grid, u_box);
    let in_j = membership(grid, j_box);
    let sum: f64 = fibers
        .edges()
        .iter()
        .filter(|e| in_u[e.i] && in_j[e.j])
        .map(|e| e.weight)
        .sum();
    normalization(grid.eps(), grid.dim(), u_box, j_box) * sum
}

/// Visit every lattice offset `ξ = x − y` with `x ∈ A_ε`, `y ∈ B_ε`, with the
/// number of such pairs.
fn for_each_offset<F: FnMut(&[i64], f64)>(a: &[(i64, i64)], b: &[(i64, i64)], mut f: F) {
    let d = a.len();
    let lows: Vec<i64> = (0..d).map(|k| a[k].0 - b[k].1).collect();
    let extents: Vec<usize> = (0..d).map(|k| (a[k].1 - b[k].0 - lows[k] + 1) as usize).collect();
    let count = |k: usize, t: i64| {
        let hi = a[k].1.min(b[k].1 + t);
        let lo = a[k].0.max(b[k].0 + t);
        (hi - lo + 1).max(0) as f64
    };
    let mut idx = vec![0usize; d];
    let mut xi = vec![0i64; d];
    loop {
        let mut n = 1.0;
        for k in 0..d {
            xi[k] = lows[k] + idx[k] as i64;
            n *= count(k, xi[k]);
        }
        if n > 0.0 {
            f(&xi, n);
        }
        if !advance_mixed(&mut idx, &extents) {
            break;
        }
    }
}

fn intersect(a: &BoxDomain, b: &BoxDomain) -> Option<BoxDomain> {
    let d = a.dim();
    let lo: Vec<f64> = (0..d).map(|k| a.lo[k].max(b.lo[k])).collect();
    let hi: Vec<f64> = (0..d).map(|k| a.hi[k].min(b.hi[k])).collect();
    lo.iter().zip(&hi).all(|(l, h)| l < h).then_some(BoxDomain { lo, hi })
}

/// Exact first two moments of `X_ε` under a sampler's laws.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaMoments {
    /// `E[X_ε] = I₁`.
    pub mean: f64,
    pub variance: f64,
}

/// `E[X_ε]` and `Var[X_ε]` by summing over lattice offsets. In symmetric
/// mode a pair and its reverse share one draw, which adds the covariance
/// of ordered pairs inside `(U ∩ J)²`.
pub fn sigma_moments(sampler: &FiberSampler, eps: f64, u_box: &BoxDomain, j_box: &BoxDomain) -> SigmaMoments {
    let d = u_box.dim();
    let norm = normalization(eps, d, u_box, j_box);
    let (Some(ur), Some(jr)) = (lattice_box(u_box, eps), lattice_box(j_box, eps)) else {
        return SigmaMoments { mean: 0.0, variance: 0.0 };
    };
    let (mut mean, mut var) = (0.0, 0.0);
    for_each_offset(&ur, &jr, |xi, n| {
        let p = sampler.probability.of_offset(xi);
        let w = sampler.weights.of_offset(xi);
        mean += n * p * w;
        var += n * w * w * p * (1.0 - p);
    });
    if sampler.symmetric {
        if let Some(r) = intersect(u_box, j_box).and_then(|b| lattice_box(&b, eps)) {
            for_each_offset(&r, &r, |xi, n| {
                let p = sampler.probability.of_offset(xi);
                let w = sampler.weights.of_offset(xi);
                var += n * w * w * p * (1.0 - p);
            });
        }
    }
    SigmaMoments {
        mean: norm * mean,
        variance: norm * norm * var,
    }
}

/// `c² C̃ / (|U||J|) · M_{U,J}^{d+ps−ℓ} · ε^{d−ps+ℓ−α}`, with `M_{U,J}` the
/// largest distance between points of `U` and `J`.
pub fn chebyshev_bound(params: &ModelParams, u_box: &BoxDomain, j_box: &BoxDomain) -> f64 {
    let m = u_box.max_distance_to(j_box);
    params.c().powi(2) * params.c_tilde() / (u_box.volume() * j_box.volume())
        * m.powf(params.sigma_exponent())
        * params.eps().powf(params.variance_decay_exponent())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaRow {
    pub eps: f64,
    pub seed: u64,
    pub statistic: f64,
    pub i1: f64,
    pub i2: f64,
    pub edges: usize,
    pub runtime_s: f64,
}

/// Per-`ε` aggregate over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaLevel {
    pub eps: f64,
    pub i1: f64,
    pub mean: f64,
    pub std: f64,
    pub empirical_variance: f64,
    pub exact_variance: f64,
    pub chebyshev_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaSummary {
    pub limit: f64,
    pub symmetric: bool,
    pub levels: Vec<SigmaLevel>,
    /// Least-squares slope of `log std` against `log ε`.
    pub std_slope: Option<f64>,
    /// `(d − ps + ℓ − α) / 2`.
    pub predicted_slope: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SigmaStudy {
    pub rows: Vec<SigmaRow>,
    pub summary: SigmaSummary,
}

impl SigmaStudy {
    pub fn table(&self, timing: bool) -> Table {
        let mut cols = vec!["eps", "seed", "statistic", "i1", "i2", "edges"];
        if timing {
            cols.push("runtime_s");
        }
        let mut t = Table::new(cols);
        for r in &self.rows {
            let mut row = vec![
                fmt_f64(r.eps),
                r.seed.to_string(),
                fmt_f64(r.statistic),
                fmt_f64(r.i1),
                fmt_f64(r.i2),
                r.edges.to_string(),
            ];
            if timing {
                row.push(fmt_f64(r.runtime_s));
            }
            t.push(row);
        }
        t
    }

    /// Fraction of seeds at level `k` with `|I₂| ≥ a`, next to the Chebyshev
    /// bound `bound / a²`.
    pub fn exceedance(&self, k: usize, a: f64) -> (f64, f64) {
        let level = &self.summary.levels[k];
        let rows: Vec<&SigmaRow> = self.rows.iter().filter(|r| r.eps == level.eps).collect();
        let hits = rows.iter().filter(|r| r.i2.abs() >= a).count();
        (hits as f64 / rows.len() as f64, level.chebyshev_bound / (a * a))
    }
}

/// Run the coefficient-averaging study with the model's sampling laws.
pub fn converge_sigma(study: &Study) -> Result<SigmaStudy> {
    converge_sigma_with(study, |params, seed| FiberSampler::new(params, seed, study.symmetric))
}

/// Same, with a caller-built sampler per `(params at ε, seed)`.
pub fn converge_sigma_with<F>(study: &Study, make_sampler: F) -> Result<SigmaStudy>
where
    F: Fn(&ModelParams, u64) -> FiberSampler + Sync,
{
    let params = study
        .eps_sequence
        .iter()
        .map(|&e| study.params_at(e))
        .collect::<Result<Vec<_>>>()?;
    let grids = study
        .eps_sequence
        .iter()
        .map(|&e| build_grid(study.domain.clone(), e))
        .collect::<Result<Vec<_>>>()?;
    let moments: Vec<SigmaMoments> = params
        .iter()
        .map(|p| sigma_moments(&make_sampler(p, study.seeds[0]), p.eps(), &study.u_box, &study.j_box))
        .collect();

    let rows = study
        .runs()
        .into_par_iter()
        .map(|(e, s)| {
            let start = Instant::now();
            let seed = study.seeds[s];
            let fibers = make_sampler(&params[e], seed).sample_shells(&grids[e])?;
            let statistic = sigma_statistic(&fibers, &study.u_box, &study.j_box);
            Ok(SigmaRow {
                eps: study.eps_sequence[e],
                seed,
                statistic,
                i1: moments[e].mean,
                i2: statistic - moments[e].mean,
                edges: fibers.len(),
                runtime_s: start.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let n_seeds = study.seeds.len();
    let levels: Vec<SigmaLevel> = (0..study.eps_sequence.len())
        .map(|e| {
            let values: Vec<f64> = rows[e * n_seeds..(e + 1) * n_seeds].iter().map(|r| r.statistic).collect();
            let (mean, std) = mean_std(&values);
            SigmaLevel {
                eps: study.eps_sequence[e],
                i1: moments[e].mean,
                mean,
                std,
                empirical_variance: std * std,
                exact_variance: moments[e].variance,
                chebyshev_bound: chebyshev_bound(&params[e], &study.u_box, &study.j_box),
            }
        })
        .collect();
    let points: Vec<(f64, f64)> = levels
        .iter()
        .filter(|l| l.std > 0.0)
        .map(|l| (l.eps.ln(), l.std.ln()))
        .collect();
    let p = &study.params;
    let summary = SigmaSummary {
        limit: p.c() * p.c_tilde(),
        symmetric: study.symmetric,
        levels,
        std_slope: fit_slope(&points),
        predicted_slope: 0.5 * p.variance_decay_exponent(),
    };
    Ok(SigmaStudy { rows, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::ExperimentConfig;
    use crate::model::ParamRecord;
    use crate::sampler::PairProbability;
    use approx::assert_relative_eq;

    fn study(c_tilde: f64, eps: Vec<f64>, seeds: Vec<u64>) -> Study {
        ExperimentConfig {
            params: ParamRecord {
                c_tilde,
                ..Default::default()
            },
            eps_sequence: eps,
            seeds,
            ..Default::default()
        }
        .resolve()
        .unwrap()
    }

    #[test]
    fn zero_prefactor_gives_zero_statistic() {
        let s = study(0.0, vec![0.25, 0.125], vec![1, 2, 3]);
        let out = converge_sigma(&s).unwrap();
        assert!(out.rows.iter().all(|r| r.statistic == 0.0 && r.edges == 0));
    }

    #[test]
    fn certain_fibers_reproduce_the_deterministic_sum() {
        let s = study(0.5, vec![0.25, 0.2], vec![5]);
        let out = converge_sigma_with(&s, |p, seed| {
            FiberSampler::new(p, seed, false).with_probability(PairProbability::constant(1.0))
        })
        .unwrap();
        for (row, &eps) in out.rows.iter().zip(&s.eps_sequence) {
            // Brute force over all lattice pairs inside U × J.
            let grid = build_grid(s.domain.clone(), eps).unwrap();
            let p = s.params_at(eps).unwrap();
            let mut sum = 0.0;
            for i in 0..grid.len() {
                for j in 0..grid.len() {
                    let (x, y) = (grid.position(i), grid.position(j));
                    if i == j || !s.u_box.contains(&x) || !s.j_box.contains(&y) {
                        continue;
                    }
                    let r: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                    sum += p.c() * (r / eps).powf(p.sigma_exponent());
                }
            }
            let oracle = eps.powi(4) * sum / (s.u_box.volume() * s.j_box.volume());
            assert_relative_eq!(row.statistic, oracle, max_relative = 1e-12);
            assert_relative_eq!(row.i1, oracle, max_relative = 1e-12);
        }
    }

    #[test]
    fn moments_match_brute_force_in_both_modes() {
        let params = ModelParams::validate(ParamRecord {
            eps: 0.2,
            ..Default::default()
        })
        .unwrap();
        let grid = build_grid(BoxDomain::unit(2), 0.2).unwrap();
        let u_box = BoxDomain::new(vec![0.1, 0.1], vec![0.7, 0.9]).unwrap();
        let j_box = BoxDomain::new(vec![0.3, 0.0], vec![1.0, 0.5]).unwrap();
        let norm = normalization(0.2, 2, &u_box, &j_box);
        for symmetric in [false, true] {
            let sampler = FiberSampler::new(&params, 0, symmetric);
            let got = sigma_moments(&sampler, 0.2, &u_box, &j_box);
            // Each unordered pair {x, y} carries weight w·m with m counting
            // how many of (x, y), (y, x) lie in U × J.
            let (mut mean, mut var) = (0.0, 0.0);
            for i in 0..grid.len() {
                for j in 0..grid.len() {
                    if i == j {
                        continue;
                    }
                    let (x, y) = (grid.position(i), grid.position(j));
                    let xi: Vec<i64> = grid.lattice(i).iter().zip(grid.lattice(j)).map(|(a, b)| a - b).collect();
                    let p = sampler.probability.of_offset(&xi);
                    let w = sampler.weights.of_offset(&xi);
                    let a = (u_box.contains(&x) && j_box.contains(&y)) as u8 as f64;
                    mean += a * p * w;
                    if !symmetric {
                        var += a * w * w * p * (1.0 - p);
                    } else if i < j {
                        let b = (u_box.contains(&y) && j_box.contains(&x)) as u8 as f64;
                        var += (a + b).powi(2) * w * w * p * (1.0 - p);
                    }
                }
            }
            assert_relative_eq!(got.mean, norm * mean, max_relative = 1e-12);
            assert_relative_eq!(got.variance, norm * norm * var, max_relative = 1e-12);
        }
    }

    #[test]
    fn exact_variance_stays_below_the_chebyshev_bound() {
        for eps in [0.125, 0.0625, 0.03125] {
            let params = ModelParams::validate(ParamRecord {
                eps,
                ..Default::default()
            })
            .unwrap();
            let b = BoxDomain::new(vec![0.05, 0.05], vec![0.925, 0.925]).unwrap();
            let m = sigma_moments(&FiberSampler::new(&params, 0, false), eps, &b, &b);
            assert!(m.variance <= chebyshev_bound(&params, &b, &b));
        }
    }

    #[test]
    fn study_is_deterministic() {
        let s = study(0.5, vec![0.25, 0.125], vec![1, 2, 3, 4]);
        let a = converge_sigma(&s).unwrap();
        let b = converge_sigma(&s).unwrap();
        assert_eq!(a.table(false), b.table(false));
        assert_eq!(a.summary, b.summary);
    }
}
