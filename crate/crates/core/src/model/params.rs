use serde::{Deserialize, Serialize};

use crate::error::{Error, ParamViolation, Result};

/// Unvalidated parameter record, as read from a config file.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    /// Spatial dimension.
    pub d: usize,
    /// Fractional order, in (0, 1).
    pub s: f64,
    /// Growth exponent, at least 1.
    pub p: f64,
    /// Weight exponent.
    pub ell: f64,
    /// Sparsity exponent, non-negative.
    pub alpha: f64,
    /// Fiber stiffness.
    pub c: f64,
    /// Probability prefactor in [0, 1].
    pub c_tilde: f64,
    /// Grid size in (0, 1).
    pub eps: f64,
}

impl Default for ParamRecord {
    fn default() -> Self {
        Self {
            d: 2,
            s: 0.5,
            p: 2.0,
            ell: 0.0,
            alpha: 0.0,
            c: 1.0,
            c_tilde: 0.5,
            eps: 0.125,
        }
    }
}

/// Validated model parameters.
///
/// Construction goes through [`ModelParams::validate`], so every instance
/// satisfies the admissibility conditions: `d > p·s − ℓ + α`, `ℓ < d + p·s`
/// and, for `d > 2`, `p < 2d/(d − 2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ModelParams {
    record: ParamRecord,
}

pub const SPARSITY: &str = "sparsity";
pub const SPARSITY_INEQ: &str = "d > p*s - ell + alpha";
pub const PROBABILITY_BOUND: &str = "probability-bound";
pub const PROBABILITY_BOUND_INEQ: &str = "ell < d + p*s";
pub const SOBOLEV_RANGE: &str = "sobolev-range";
pub const SOBOLEV_RANGE_INEQ: &str = "p < 2d/(d-2) for d > 2";

fn violation(name: &'static str, inequality: &'static str, detail: String) -> ParamViolation {
    ParamViolation::ConditionViolated {
        name,
        inequality,
        detail,
    }
}

/// Check a record and return validated parameters or every violated condition.
pub fn validate_params(raw: &ParamRecord) -> Result<ModelParams> {
    ModelParams::validate(*raw)
}

impl ModelParams {
    pub fn validate(raw: ParamRecord) -> Result<Self> {
        let mut v = Vec::new();
        let fields = [
            ("s", raw.s),
            ("p", raw.p),
            ("ell", raw.ell),
            ("alpha", raw.alpha),
            ("c", raw.c),
            ("c_tilde", raw.c_tilde),
            ("eps", raw.eps),
        ];
        let non_finite: Vec<_> = fields.iter().filter(|(_, x)| !x.is_finite()).collect();
        if !non_finite.is_empty() {
            for (name, x) in non_finite {
                v.push(violation("finite", "all fields finite", format!("{name} = {x}")));
            }
            return Err(Error::InvalidParams(v));
        }

        let d = raw.d as f64;
        let ps = raw.p * raw.s;
        if raw.d < 2 {
            v.push(violation("dimension", "d >= 2", format!("d = {}", raw.d)));
        }
        if !(raw.s > 0.0 && raw.s < 1.0) {
            v.push(violation("fractional-order", "0 < s < 1", format!("s = {}", raw.s)));
        }
        if raw.p < 1.0 {
            v.push(violation("growth", "p >= 1", format!("p = {}", raw.p)));
        }
        if raw.d > 2 && raw.p >= 2.0 * d / (d - 2.0) {
            v.push(violation(
                SOBOLEV_RANGE,
                SOBOLEV_RANGE_INEQ,
                format!("p = {} but 2d/(d-2) = {}", raw.p, 2.0 * d / (d - 2.0)),
            ));
        }
        if raw.alpha < 0.0 {
            v.push(violation("sparsity-sign", "alpha >= 0", format!("alpha = {}", raw.alpha)));
        }
        if raw.c <= 0.0 {
            v.push(violation("stiffness", "c > 0", format!("c = {}", raw.c)));
        }
        if !(0.0..=1.0).contains(&raw.c_tilde) {
            v.push(violation(
                "prefactor",
                "0 <= c_tilde <= 1",
                format!("c_tilde = {}", raw.c_tilde),
            ));
        }
        if !(raw.eps > 0.0 && raw.eps < 1.0) {
            v.push(violation("grid-size", "0 < eps < 1", format!("eps = {}", raw.eps)));
        }
        if d <= ps - raw.ell + raw.alpha {
            v.push(violation(
                SPARSITY,
                SPARSITY_INEQ,
                format!("d = {d} but p*s - ell + alpha = {}", ps - raw.ell + raw.alpha),
            ));
        }
        if raw.ell >= d + ps {
            v.push(violation(
                PROBABILITY_BOUND,
                PROBABILITY_BOUND_INEQ,
                format!("ell = {} but d + p*s = {}", raw.ell, d + ps),
            ));
        }
        // Largest probability over |ξ| >= 1: at |ξ| = 1 when the distance
        // exponent is non-positive, unbounded otherwise.
        let scale = raw.c_tilde * raw.eps.abs().powf(raw.alpha);
        if raw.ell > d + ps && raw.c_tilde > 0.0 {
            v.push(ParamViolation::NonProbability {
                max_probability: f64::INFINITY,
            });
        } else if scale > 1.0 {
            v.push(ParamViolation::NonProbability {
                max_probability: scale,
            });
        }

        if v.is_empty() {
            Ok(Self { record: raw })
        } else {
            Err(Error::InvalidParams(v))
        }
    }

    pub fn record(&self) -> &ParamRecord {
        &self.record
    }

    /// Same parameters at a different grid size.
    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::validate(ParamRecord { eps, ..self.record })
    }

    pub fn with_c_tilde(&self, c_tilde: f64) -> Result<Self> {
        Self::validate(ParamRecord {
            c_tilde,
            ..self.record
        })
    }

    pub fn d(&self) -> usize {
        self.record.d
    }
    pub fn s(&self) -> f64 {
        self.record.s
    }
    pub fn p(&self) -> f64 {
        self.record.p
    }
    pub fn ell(&self) -> f64 {
        self.record.ell
    }
    pub fn alpha(&self) -> f64 {
        self.record.alpha
    }
    pub fn c(&self) -> f64 {
        self.record.c
    }
    pub fn c_tilde(&self) -> f64 {
        self.record.c_tilde
    }
    pub fn eps(&self) -> f64 {
        self.record.eps
    }

    /// Effective stiffness `c̄ = c·C̃` of the limit.
    pub fn c_bar(&self) -> f64 {
        self.record.c * self.record.c_tilde
    }

    /// Exponent `d + p·s` of the singular kernel.
    pub fn kernel_exponent(&self) -> f64 {
        self.record.d as f64 + self.record.p * self.record.s
    }

    /// Distance exponent of the pair probability, `−d − p·s + ℓ`.
    pub fn probability_exponent(&self) -> f64 {
        -self.kernel_exponent() + self.record.ell
    }

    /// Distance exponent of the weight `σ`, `d + p·s − ℓ`.
    pub fn sigma_exponent(&self) -> f64 {
        self.kernel_exponent() - self.record.ell
    }

    /// Grid-size exponent of the per-connection strength `c·ε^{−d−ps−α+ℓ}·|x−y|^{−ℓ}`.
    pub fn connection_strength_exponent(&self) -> f64 {
        -self.kernel_exponent() - self.record.alpha + self.record.ell
    }

    /// Grid-size exponent of the number of macroscopic-distance connections.
    pub fn edge_count_exponent(&self) -> f64 {
        -(self.record.d as f64) + self.record.alpha + self.record.p * self.record.s
            - self.record.ell
    }

    /// Grid-size exponent of the variance bound of coefficient averages.
    pub fn variance_decay_exponent(&self) -> f64 {
        self.record.d as f64 - self.record.p * self.record.s + self.record.ell
            - self.record.alpha
    }
}

impl<'de> Deserialize<'de> for ModelParams {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = ParamRecord::deserialize(deserializer)?;
        ModelParams::validate(raw).map_err(serde::de::Error::custom)
    }
}
