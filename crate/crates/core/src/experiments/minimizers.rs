//! Minimizers of `E_ε` along the `ε` sequence, one chain per seed.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::Study;
use super::output::{fmt_f64, Table};
use super::stats::mean_std;
use crate::energy::EnergyBreakdown;
use crate::error::Result;
use crate::model::{l2_distance_extended, DiscreteField};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimizerRow {
    pub eps: f64,
    pub seed: u64,
    pub energy: EnergyBreakdown,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// `‖R*_ε u*_ε − R*_ε' u*_ε'‖_{L²}` to the previous `ε'` of the same seed.
    pub distance_to_previous: Option<f64>,
    pub edges: usize,
    pub runtime_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimizerLevel {
    pub eps: f64,
    pub mean_energy: f64,
    /// Across-seed std of the minimal energy.
    pub energy_spread: f64,
    pub mean_distance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimizerSummary {
    pub levels: Vec<MinimizerLevel>,
    /// Mean consecutive distances strictly decrease.
    pub distances_decreasing: bool,
    /// Across-seed energy spread does not grow.
    pub spread_shrinking: bool,
    /// `|Ē_last − Ē_prev| / |Ē_last|`.
    pub final_energy_change: f64,
    pub energy_cauchy_tol: f64,
}

impl MinimizerSummary {
    pub fn passed(&self) -> bool {
        self.distances_decreasing && self.final_energy_change <= self.energy_cauchy_tol
    }
}

#[derive(Clone, Debug)]
pub struct MinimizerStudy {
    pub rows: Vec<MinimizerRow>,
    pub summary: MinimizerSummary,
    /// Minimizers of the last `ε`, one per seed.
    pub finest: Vec<DiscreteField>,
}

impl MinimizerStudy {
    pub fn table(&self, timing: bool) -> Table {
        let mut cols = vec![
            "eps",
            "seed",
            "e_nonlocal",
            "e_local",
            "work",
            "energy",
            "iterations",
            "gradient_norm",
            "distance_to_previous",
            "edges",
        ];
        if timing {
            cols.push("runtime_s");
        }
        let mut t = Table::new(cols);
        for r in &self.rows {
            let mut row = vec![fmt_f64(r.eps), r.seed.to_string()];
            row.extend([r.energy.e_nonlocal, r.energy.e_local, r.energy.work, r.energy.total].map(fmt_f64));
            row.push(r.iterations.to_string());
            row.push(fmt_f64(r.gradient_norm));
            row.push(r.distance_to_previous.map(fmt_f64).unwrap_or_default());
            row.push(r.edges.to_string());
            if timing {
                row.push(fmt_f64(r.runtime_s));
            }
            t.push(row);
        }
        t
    }
}

/// Solve every `(ε, seed)` instance and compare consecutive minimizers.
pub fn converge_minimizers(study: &Study) -> Result<MinimizerStudy> {
    let chains = study
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut rows = Vec::new();
            let mut previous: Option<DiscreteField> = None;
            for &eps in &study.eps_sequence {
                let start = Instant::now();
                let inst = study.instance(eps, seed)?;
                let report = study.minimize(&inst)?;
                let distance = previous.as_ref().map(|p| l2_distance_extended(p, &report.minimizer));
                rows.push(MinimizerRow {
                    eps,
                    seed,
                    energy: report.energy,
                    iterations: report.iterations,
                    gradient_norm: report.gradient_norm,
                    distance_to_previous: distance,
                    edges: inst.fibers.len(),
                    runtime_s: start.elapsed().as_secs_f64(),
                });
                previous = Some(report.minimizer);
            }
            Ok((rows, previous.expect("non-empty eps sequence")))
        })
        .collect::<Result<Vec<_>>>()?;

    let n_eps = study.eps_sequence.len();
    let mut rows = Vec::with_capacity(n_eps * study.seeds.len());
    for e in 0..n_eps {
        rows.extend(chains.iter().map(|(c, _)| c[e].clone()));
    }
    let finest = chains.into_iter().map(|(_, u)| u).collect();

    let n = study.seeds.len();
    let levels: Vec<MinimizerLevel> = rows
        .chunks(n)
        .map(|chunk| {
            let energies: Vec<f64> = chunk.iter().map(|r| r.energy.total).collect();
            let (mean_energy, energy_spread) = mean_std(&energies);
            let dists: Option<Vec<f64>> = chunk.iter().map(|r| r.distance_to_previous).collect();
            MinimizerLevel {
                eps: chunk[0].eps,
                mean_energy,
                energy_spread,
                mean_distance: dists.map(|d| d.iter().sum::<f64>() / n as f64),
            }
        })
        .collect();
    let dists: Vec<f64> = levels.iter().filter_map(|l| l.mean_distance).collect();
    let distances_decreasing = dists.windows(2).all(|w| w[1] < w[0]);
    let spread_shrinking = levels.windows(2).all(|w| w[1].energy_spread <= w[0].energy_spread);
    let final_energy_change = match levels.as_slice() {
        [.., a, b] => (b.mean_energy - a.mean_energy).abs() / b.mean_energy.abs(),
        _ => f64::NAN,
    };
    Ok(MinimizerStudy {
        rows,
        summary: MinimizerSummary {
            levels,
            distances_decreasing,
            spread_shrinking,
            final_energy_change,
            energy_cauchy_tol: study.energy_cauchy_tol,
        },
        finest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::ExperimentConfig;
    use crate::model::ParamRecord;

    #[test]
    fn zero_force_gives_zero_minimizers() {
        let study = ExperimentConfig {
            force: "zero".into(),
            eps_sequence: vec![0.25, 0.125],
            seeds: vec![1, 2],
            ..Default::default()
        }
        .resolve()
        .unwrap();
        let out = converge_minimizers(&study).unwrap();
        for r in &out.rows {
            assert_eq!(r.energy.total, 0.0);
            assert!(r.distance_to_previous.map_or(true, |d| d == 0.0));
        }
        assert!(out.finest.iter().all(|u| u.values().iter().all(|&v| v == 0.0)));
    }

    /// Pure local elasticity: minimal energies approach a fine-grid reference
    /// monotonically.
    #[test]
    fn local_minimal_energies_approach_a_fine_reference() {
        let cfg = ExperimentConfig {
            params: ParamRecord {
                c_tilde: 0.0,
                ..Default::default()
            },
            eps_sequence: vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0],
            seeds: vec![0],
            ..Default::default()
        };
        let study = cfg.resolve().unwrap();
        let out = converge_minimizers(&study).unwrap();
        let reference = {
            let inst = study.instance(1.0 / 128.0, 0).unwrap();
            study.minimize(&inst).unwrap().energy.total
        };
        let errs: Vec<f64> = out.rows.iter().map(|r| (r.energy.total - reference).abs()).collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
        assert!(errs[2] < 0.1 * reference.abs(), "{errs:?} vs {reference}");
    }

    #[test]
    fn rows_are_eps_major_and_deterministic() {
        let study = ExperimentConfig {
            eps_sequence: vec![0.25, 0.125],
            seeds: vec![4, 5, 6],
            ..Default::default()
        }
        .resolve()
        .unwrap();
        let a = converge_minimizers(&study).unwrap();
        let b = converge_minimizers(&study).unwrap();
        let order: Vec<(f64, u64)> = a.rows.iter().map(|r| (r.eps, r.seed)).collect();
        assert_eq!(order, vec![(0.25, 4), (0.25, 5), (0.25, 6), (0.125, 4), (0.125, 5), (0.125, 6)]);
        assert_eq!(a.table(false), b.table(false));
    }
}
