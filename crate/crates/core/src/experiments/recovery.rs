//! Recovery sequences: `E_ε(R_ε u)` against the limit `E(u)` for a smooth `u`.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::Study;
use super::output::{fmt_f64, Table};
use super::stats::mean_std;
use crate::energy::{total_energy, EnergyBreakdown};
use crate::error::Result;
use crate::limit::limit_total;
use crate::model::restrict;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub eps: f64,
    pub seed: u64,
    pub discrete: EnergyBreakdown,
    /// `discrete − limit`, componentwise.
    pub gap: EnergyBreakdown,
    pub edges: usize,
    pub runtime_s: f64,
}

impl RecoveryRow {
    pub fn total_gap(&self) -> f64 {
        self.gap.total.abs()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryLevel {
    pub eps: f64,
    /// Across-seed mean and std of `|E_ε(R_ε u) − E(u)|`.
    pub mean_gap: f64,
    pub std_gap: f64,
    /// `mean_gap / |E(u)|`.
    pub relative_gap: f64,
    pub mean_gap_nonlocal: f64,
    pub mean_gap_local: f64,
    pub mean_gap_work: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoverySummary {
    pub limit: EnergyBreakdown,
    pub levels: Vec<RecoveryLevel>,
    /// Each mean gap is at most the previous one plus its across-seed std.
    pub monotone: bool,
    pub final_relative_gap: f64,
    pub threshold: f64,
}

impl RecoverySummary {
    pub fn passed(&self) -> bool {
        self.monotone && self.final_relative_gap < self.threshold
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryStudy {
    pub rows: Vec<RecoveryRow>,
    pub summary: RecoverySummary,
}

impl RecoveryStudy {
    pub fn table(&self, timing: bool) -> Table {
        let mut cols = vec![
            "eps",
            "seed",
            "e_nonlocal",
            "e_local",
            "work",
            "total",
            "limit_total",
            "gap_nonlocal",
            "gap_local",
            "gap_work",
            "gap_total",
            "edges",
        ];
        if timing {
            cols.push("runtime_s");
        }
        let mut t = Table::new(cols);
        let lim = self.summary.limit.total;
        for r in &self.rows {
            let mut row = vec![fmt_f64(r.eps), r.seed.to_string()];
            row.extend(
                [
                    r.discrete.e_nonlocal,
                    r.discrete.e_local,
                    r.discrete.work,
                    r.discrete.total,
                    lim,
                    r.gap.e_nonlocal,
                    r.gap.e_local,
                    r.gap.work,
                    r.gap.total,
                ]
                .map(fmt_f64),
            );
            row.push(r.edges.to_string());
            if timing {
                row.push(fmt_f64(r.runtime_s));
            }
            t.push(row);
        }
        t
    }
}

fn difference(a: &EnergyBreakdown, b: &EnergyBreakdown) -> EnergyBreakdown {
    EnergyBreakdown {
        e_nonlocal: a.e_nonlocal - b.e_nonlocal,
        e_local: a.e_local - b.e_local,
        work: a.work - b.work,
        total: a.total - b.total,
    }
}

/// Compare `E_ε(R_ε u)` with the limit energy along the `ε` sequence.
pub fn converge_recovery(study: &Study) -> Result<RecoveryStudy> {
    let u = study.displacement.as_ref();
    let limit = limit_total(
        u,
        study.force.as_ref(),
        &study.domain,
        &study.params,
        study.potential.as_ref(),
        &study.limit,
    )?;
    let rows = study
        .runs()
        .into_par_iter()
        .map(|(e, s)| {
            let start = Instant::now();
            let eps = study.eps_sequence[e];
            let seed = study.seeds[s];
            let inst = study.instance(eps, seed)?;
            let ue = restrict(u, &inst.grid);
            let discrete = total_energy(&ue, &inst.force, &inst.fibers, study.potential.as_ref())?;
            Ok(RecoveryRow {
                eps,
                seed,
                gap: difference(&discrete, &limit),
                discrete,
                edges: inst.fibers.len(),
                runtime_s: start.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let n = study.seeds.len();
    let levels: Vec<RecoveryLevel> = rows
        .chunks(n)
        .map(|chunk| {
            let gaps: Vec<f64> = chunk.iter().map(|r| r.total_gap()).collect();
            let (mean_gap, std_gap) = mean_std(&gaps);
            let avg = |f: fn(&RecoveryRow) -> f64| chunk.iter().map(f).sum::<f64>() / n as f64;
            RecoveryLevel {
                eps: chunk[0].eps,
                mean_gap,
                std_gap,
                relative_gap: mean_gap / limit.total.abs(),
                mean_gap_nonlocal: avg(|r| r.gap.e_nonlocal),
                mean_gap_local: avg(|r| r.gap.e_local),
                mean_gap_work: avg(|r| r.gap.work),
            }
        })
        .collect();
    let monotone = levels
        .windows(2)
        .all(|w| w[1].mean_gap <= w[0].mean_gap + w[1].std_gap);
    let final_relative_gap = levels.last().map_or(f64::NAN, |l| l.relative_gap);
    Ok(RecoveryStudy {
        rows,
        summary: RecoverySummary {
            limit,
            levels,
            monotone,
            final_relative_gap,
            threshold: study.recovery_threshold,
        },
    })
}
