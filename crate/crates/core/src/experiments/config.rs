use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{displacement_preset, force_preset, SmoothField};
use crate::limit::LimitSettings;
use crate::model::{BoxDomain, ModelParams, ParamRecord};
use crate::potential::{by_name, Potential};
use crate::rng::derive_seed;

/// Base seed of the default seed list.
pub const DEFAULT_BASE_SEED: u64 = 2024;
pub const DEFAULT_SEED_COUNT: usize = 32;

/// Seeds `derive_seed(base, 0..count)`.
pub fn seed_list(base: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| derive_seed(base, i)).collect()
}

/// Study description as read from JSON. Every field has a default, so `{}`
/// is the default study: `d = 2`, `Q = (0,1)²`, projection potential,
/// `ε ∈ {1/8, 1/16, 1/32, 1/64}` and 32 seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub params: ParamRecord,
    /// Reference domain `Q`; the unit box when absent.
    pub domain: Option<BoxDomain>,
    pub potential: String,
    /// Force preset, sampled with `R_ε`.
    pub force: String,
    /// Displacement preset used by the recovery study and `energy`.
    pub displacement: String,
    /// Strictly decreasing grid sizes.
    pub eps_sequence: Vec<f64>,
    pub seeds: Vec<u64>,
    pub symmetric: bool,
    /// Averaging boxes `U, J ⊂ Q`; `(0.05, 0.925)^d` relative to `Q` when absent.
    pub u_box: Option<BoxDomain>,
    pub j_box: Option<BoxDomain>,
    pub limit: LimitSettings,
    pub solver_tol: f64,
    /// Largest accepted final relative gap of the recovery study.
    pub recovery_threshold: f64,
    /// Largest accepted relative change of the minimal energy at the last step.
    pub energy_cauchy_tol: f64,
    /// Output directory for CLI runs.
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            params: ParamRecord::default(),
            domain: None,
            potential: "projection".into(),
            force: "sine".into(),
            displacement: "bump".into(),
            eps_sequence: vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0],
            seeds: seed_list(DEFAULT_BASE_SEED, DEFAULT_SEED_COUNT),
            symmetric: false,
            u_box: None,
            j_box: None,
            limit: LimitSettings::default(),
            solver_tol: 1e-9,
            recovery_threshold: 0.05,
            energy_cauchy_tol: 0.02,
            output: None,
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

/// `lo + a·w .. lo + b·w` on every axis.
fn relative_box(q: &BoxDomain, a: f64, b: f64) -> BoxDomain {
    let d = q.dim();
    BoxDomain {
        lo: (0..d).map(|k| q.lo[k] + a * q.width(k)).collect(),
        hi: (0..d).map(|k| q.lo[k] + b * q.width(k)).collect(),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| invalid(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Replace the seed list by as many seeds derived from `base`.
    pub fn reseed(mut self, base: u64) -> Self {
        let n = self.seeds.len().max(1);
        self.seeds = seed_list(base, n);
        self
    }

    /// Check every invariant and resolve the named presets.
    pub fn resolve(&self) -> Result<Study> {
        let params = ModelParams::validate(self.params)?;
        let d = params.d();
        let domain = self.domain.clone().unwrap_or_else(|| BoxDomain::unit(d));
        let domain = BoxDomain::new(domain.lo, domain.hi)?;
        if domain.dim() != d {
            return Err(invalid(format!("domain has dimension {}, params have d = {d}", domain.dim())));
        }
        if self.eps_sequence.is_empty() {
            return Err(invalid("eps_sequence is empty"));
        }
        if self.eps_sequence.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(invalid("eps_sequence must be strictly decreasing"));
        }
        for &eps in &self.eps_sequence {
            params.with_eps(eps)?;
        }
        if self.seeds.is_empty() {
            return Err(invalid("seed list is empty"));
        }
        let u_box = self.u_box.clone().unwrap_or_else(|| relative_box(&domain, 0.05, 0.925));
        let j_box = self.j_box.clone().unwrap_or_else(|| relative_box(&domain, 0.05, 0.925));
        for (name, b) in [("u_box", &u_box), ("j_box", &j_box)] {
            let b = BoxDomain::new(b.lo.clone(), b.hi.clone())?;
            if !domain.contains_box(&b) {
                return Err(invalid(format!("{name} is not contained in the domain")));
            }
        }
        if !(self.limit.rtol > 0.0) {
            return Err(invalid("limit.rtol must be positive"));
        }
        if !(self.solver_tol > 0.0) {
            return Err(invalid("solver_tol must be positive"));
        }
        Ok(Study {
            params,
            potential: by_name(&self.potential)?,
            force: force_preset(&self.force, &domain)?,
            displacement: displacement_preset(&self.displacement, &domain)?,
            domain,
            eps_sequence: self.eps_sequence.clone(),
            seeds: self.seeds.clone(),
            symmetric: self.symmetric,
            u_box,
            j_box,
            limit: self.limit.clone(),
            solver_tol: self.solver_tol,
            recovery_threshold: self.recovery_threshold,
            energy_cauchy_tol: self.energy_cauchy_tol,
        })
    }
}

/// A validated [`ExperimentConfig`] with presets resolved.
#[derive(Clone)]
pub struct Study {
    pub params: ModelParams,
    pub domain: BoxDomain,
    pub potential: Arc<dyn Potential>,
    pub force: Arc<dyn SmoothField>,
    pub displacement: Arc<dyn SmoothField>,
    pub eps_sequence: Vec<f64>,
    pub seeds: Vec<u64>,
    pub symmetric: bool,
    pub u_box: BoxDomain,
    pub j_box: BoxDomain,
    pub limit: LimitSettings,
    pub solver_tol: f64,
    pub recovery_threshold: f64,
    pub energy_cauchy_tol: f64,
}

impl Study {
    /// Parameters at grid size `eps`.
    pub fn params_at(&self, eps: f64) -> Result<ModelParams> {
        self.params.with_eps(eps)
    }

    /// All `(eps index, seed index)` runs, eps-major.
    pub fn runs(&self) -> Vec<(usize, usize)> {
        (0..self.eps_sequence.len())
            .flat_map(|e| (0..self.seeds.len()).map(move |s| (e, s)))
            .collect()
    }
}
