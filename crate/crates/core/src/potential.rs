//! Pair interactions `V(x, y, ζ)` acting on displacement differences.
//!
//! All shipped potentials depend on the points only through `r = x − y`,
//! so the trait is phrased in terms of `r`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::BoxDomain;
use crate::rng::keyed_unit;

pub trait Potential: Send + Sync {
    fn name(&self) -> &str;

    /// `V(x, y, ζ)` with `r = x − y`.
    fn evaluate(&self, r: &[f64], zeta: &[f64]) -> f64;

    /// `∂_ζ V(x, y, ζ)`.
    fn derivative(&self, r: &[f64], zeta: &[f64], out: &mut [f64]);

    /// Row-major `∂²_ζ V`; returns false when not provided.
    fn hessian(&self, _r: &[f64], _zeta: &[f64], _out: &mut [f64]) -> bool {
        false
    }

    /// Growth exponent `p` in `V ≤ c_xy |ζ|^p`.
    fn growth_exponent(&self) -> f64;

    /// Pairwise growth constant `c_xy`.
    fn pair_growth_constant(&self, r: &[f64]) -> f64;

    /// Uniform growth constant over a domain of the given diameter.
    fn growth_constant(&self, diameter: f64) -> f64;

    fn is_convex(&self) -> bool;

    fn is_quadratic(&self) -> bool;

    /// `V(ζ + δ) − V(ζ)`. Implementations should avoid cancellation.
    fn difference(&self, r: &[f64], zeta: &[f64], delta: &[f64]) -> f64 {
        let moved: Vec<f64> = zeta.iter().zip(delta).map(|(a, b)| a + b).collect();
        self.evaluate(r, &moved) - self.evaluate(r, zeta)
    }

    /// `V(x, y, ζ)` from the two points.
    fn value_at(&self, x: &[f64], y: &[f64], zeta: &[f64]) -> f64 {
        let r: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        self.evaluate(&r, zeta)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `V = (ζ · (x − y))²`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Projection;

impl Potential for Projection {
    fn name(&self) -> &str {
        "projection"
    }
    fn evaluate(&self, r: &[f64], zeta: &[f64]) -> f64 {
        let t = dot(r, zeta);
        t * t
    }
    fn difference(&self, r: &[f64], zeta: &[f64], delta: &[f64]) -> f64 {
        let dt = dot(r, delta);
        dt * (2.0 * dot(r, zeta) + dt)
    }
    fn derivative(&self, r: &[f64], zeta: &[f64], out: &mut [f64]) {
        let t = 2.0 * dot(r, zeta);
        for (o, &ri) in out.iter_mut().zip(r) {
            *o = t * ri;
        }
    }
    fn hessian(&self, r: &[f64], _zeta: &[f64], out: &mut [f64]) -> bool {
        let d = r.len();
        for a in 0..d {
            for b in 0..d {
                out[a * d + b] = 2.0 * r[a] * r[b];
            }
        }
        true
    }
    fn growth_exponent(&self) -> f64 {
        2.0
    }
    fn pair_growth_constant(&self, r: &[f64]) -> f64 {
        dot(r, r)
    }
    fn growth_constant(&self, diameter: f64) -> f64 {
        diameter * diameter
    }
    fn is_convex(&self) -> bool {
        true
    }
    fn is_quadratic(&self) -> bool {
        true
    }
}

/// `V = (|r + |r| ζ| − |r|)²`: squared length change of a rod of rest vector `r`.
///
/// Not convex in `ζ`. The derivative at `r + |r| ζ = 0` is set to zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct Cauchy;

impl Potential for Cauchy {
    fn name(&self) -> &str {
        "cauchy"
    }
    fn evaluate(&self, r: &[f64], zeta: &[f64]) -> f64 {
        let a = dot(r, r).sqrt();
        let n = r
            .iter()
            .zip(zeta)
            .map(|(ri, zi)| (ri + a * zi).powi(2))
            .sum::<f64>()
            .sqrt();
        (n - a).powi(2)
    }
    fn difference(&self, r: &[f64], zeta: &[f64], delta: &[f64]) -> f64 {
        let a = dot(r, r).sqrt();
        let w: Vec<f64> = r.iter().zip(zeta).map(|(ri, zi)| ri + a * zi).collect();
        let n = dot(&w, &w).sqrt();
        let ad: Vec<f64> = delta.iter().map(|d| a * d).collect();
        let moved: Vec<f64> = w.iter().zip(&ad).map(|(x, y)| x + y).collect();
        let n_new = dot(&moved, &moved).sqrt();
        if n + n_new == 0.0 {
            return 0.0;
        }
        // n_new − n = (|w + aδ|² − |w|²) / (n_new + n)
        let dn = (2.0 * dot(&w, &ad) + dot(&ad, &ad)) / (n_new + n);
        dn * (n_new + n - 2.0 * a)
    }
    fn derivative(&self, r: &[f64], zeta: &[f64], out: &mut [f64]) {
        let a = dot(r, r).sqrt();
        for (o, (ri, zi)) in out.iter_mut().zip(r.iter().zip(zeta)) {
            *o = ri + a * zi;
        }
        let n = dot(out, out).sqrt();
        if n == 0.0 {
            out.fill(0.0);
            return;
        }
        let s = 2.0 * (n - a) * a / n;
        out.iter_mut().for_each(|o| *o *= s);
    }
    fn growth_exponent(&self) -> f64 {
        2.0
    }
    fn pair_growth_constant(&self, r: &[f64]) -> f64 {
        dot(r, r)
    }
    fn growth_constant(&self, diameter: f64) -> f64 {
        diameter * diameter
    }
    fn is_convex(&self) -> bool {
        false
    }
    fn is_quadratic(&self) -> bool {
        false
    }
}

/// `V ≡ 0`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroPotential;

impl Potential for ZeroPotential {
    fn name(&self) -> &str {
        "zero"
    }
    fn evaluate(&self, _: &[f64], _: &[f64]) -> f64 {
        0.0
    }
    fn difference(&self, _: &[f64], _: &[f64], _: &[f64]) -> f64 {
        0.0
    }
    fn derivative(&self, _: &[f64], _: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn hessian(&self, _: &[f64], _: &[f64], out: &mut [f64]) -> bool {
        out.fill(0.0);
        true
    }
    fn growth_exponent(&self) -> f64 {
        2.0
    }
    fn pair_growth_constant(&self, _: &[f64]) -> f64 {
        0.0
    }
    fn growth_constant(&self, _: f64) -> f64 {
        0.0
    }
    fn is_convex(&self) -> bool {
        true
    }
    fn is_quadratic(&self) -> bool {
        true
    }
}

pub fn projection_potential() -> Arc<dyn Potential> {
    Arc::new(Projection)
}

pub fn cauchy_potential() -> Arc<dyn Potential> {
    Arc::new(Cauchy)
}

/// Look up a potential by config name.
pub fn by_name(name: &str) -> Result<Arc<dyn Potential>> {
    match name {
        "projection" => Ok(Arc::new(Projection)),
        "cauchy" => Ok(Arc::new(Cauchy)),
        "zero" => Ok(Arc::new(ZeroPotential)),
        _ => Err(Error::UnknownName {
            kind: "potential",
            name: name.to_string(),
        }),
    }
}

/// Outcome of [`check_growth`].
#[derive(Clone, Debug, PartialEq)]
pub struct GrowthReport {
    pub probes: usize,
    /// Largest `V / (c_xy |ζ|^p)` seen.
    pub max_ratio: f64,
}

struct Probe {
    x: Vec<f64>,
    y: Vec<f64>,
    r: Vec<f64>,
}

fn probe(domain: &BoxDomain, seed: u64, k: u64) -> Probe {
    let d = domain.dim();
    let mut c = 0;
    let mut draw = |a: f64, b: f64| {
        c += 1;
        a + (b - a) * keyed_unit(seed, k, c)
    };
    let x: Vec<f64> = (0..d).map(|i| draw(domain.lo[i], domain.hi[i])).collect();
    let y: Vec<f64> = (0..d).map(|i| draw(domain.lo[i], domain.hi[i])).collect();
    let r = x.iter().zip(&y).map(|(a, b)| a - b).collect();
    Probe { x, y, r }
}

/// Uniform point of the ball of radius `radius` (by rejection from the cube).
fn ball_point(d: usize, radius: f64, seed: u64, stream: u64) -> Vec<f64> {
    let mut c = 1000;
    loop {
        let v: Vec<f64> = (0..d)
            .map(|_| {
                c += 1;
                radius * (2.0 * keyed_unit(seed, stream, c) - 1.0)
            })
            .collect();
        if dot(&v, &v) <= radius * radius {
            return v;
        }
    }
}

/// Random probes of `0 ≤ V ≤ c_xy |ζ|^p` with `x, y ∈ domain`, `|ζ| ≤ zeta_max`.
pub fn check_growth(
    pot: &dyn Potential,
    domain: &BoxDomain,
    probes: usize,
    zeta_max: f64,
    seed: u64,
) -> Result<GrowthReport> {
    let d = domain.dim();
    let p = pot.growth_exponent();
    let mut max_ratio: f64 = 0.0;
    for k in 0..probes as u64 {
        let pr = probe(domain, seed, k);
        let zeta = ball_point(d, zeta_max, seed, k);
        let v = pot.evaluate(&pr.r, &zeta);
        let bound = pot.pair_growth_constant(&pr.r) * dot(&zeta, &zeta).sqrt().powf(p);
        let ratio = if bound > 0.0 {
            v / bound
        } else if v == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        if v < 0.0 || ratio > 1.0 + 1e-12 {
            return Err(Error::GrowthViolated {
                x: pr.x,
                y: pr.y,
                zeta,
                ratio,
            });
        }
        max_ratio = max_ratio.max(ratio);
    }
    Ok(GrowthReport { probes, max_ratio })
}

/// A midpoint-convexity failure `V((ζ₁+ζ₂)/2) > (V(ζ₁)+V(ζ₂))/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexityWitness {
    pub r: Vec<f64>,
    pub zeta1: Vec<f64>,
    pub zeta2: Vec<f64>,
    pub excess: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvexityReport {
    pub probes: usize,
    pub witnesses: Vec<ConvexityWitness>,
}

impl ConvexityReport {
    pub fn is_convex_on_probes(&self) -> bool {
        self.witnesses.is_empty()
    }
}

/// Midpoint-convexity probes along random segments. Failures are logged and
/// returned, never raised.
pub fn check_convexity(
    pot: &dyn Potential,
    domain: &BoxDomain,
    probes: usize,
    zeta_max: f64,
    seed: u64,
) -> ConvexityReport {
    let d = domain.dim();
    let mut witnesses = Vec::new();
    for k in 0..probes as u64 {
        let pr = probe(domain, seed, k);
        let z1 = ball_point(d, zeta_max, seed, 2 * k + 1);
        let z2 = ball_point(d, zeta_max, seed ^ 0xC0DE, 2 * k + 2);
        let mid: Vec<f64> = z1.iter().zip(&z2).map(|(a, b)| 0.5 * (a + b)).collect();
        let lhs = pot.evaluate(&pr.r, &mid);
        let rhs = 0.5 * (pot.evaluate(&pr.r, &z1) + pot.evaluate(&pr.r, &z2));
        let excess = lhs - rhs;
        if excess > 1e-12 * (1.0 + rhs.abs()) {
            log::warn!(
                "{}: midpoint convexity fails at r={:?} (excess {excess:.3e})",
                pot.name(),
                pr.r
            );
            witnesses.push(ConvexityWitness {
                r: pr.r,
                zeta1: z1,
                zeta2: z2,
                excess,
            });
        }
    }
    ConvexityReport { probes, witnesses }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn projection_examples() {
        let p = Projection;
        assert_eq!(p.evaluate(&[1.0, 1.0], &[1.0, -1.0]), 0.0);
        assert_relative_eq!(p.evaluate(&[0.6, 0.8], &[0.6, 0.8]), 1.0, epsilon = 1e-15);
        assert_eq!(p.evaluate(&[1.0, 0.0], &[3.0, 4.0]), 9.0);
        assert_eq!(p.value_at(&[2.0, 1.0], &[1.0, 1.0], &[3.0, 4.0]), 9.0);
    }

    #[test]
    fn cauchy_examples() {
        let c = Cauchy;
        assert_eq!(c.evaluate(&[1.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(c.evaluate(&[1.0, 0.0], &[1.0, 0.0]), 1.0);
        // Transverse displacement: (√(1+t²) − 1)² = t⁴/4 − t⁶/8 + O(t⁸).
        for t in [1e-1, 1e-2, 1e-3] {
            let v = c.evaluate(&[1.0, 0.0], &[0.0, t]);
            let series = t.powi(4) / 4.0 - t.powi(6) / 8.0;
            assert!((v - series).abs() <= 1e-2 * t.powi(6) + 1e-30, "t={t}: {v} vs {series}");
        }
    }

    #[test]
    fn cauchy_derivative_at_singular_point_is_zero() {
        let mut g = [1.0, 1.0];
        Cauchy.derivative(&[1.0, 0.0], &[-1.0, 0.0], &mut g);
        assert_eq!(g, [0.0, 0.0]);
    }

    #[test]
    fn linearization_along_the_rod() {
        let r = [0.3, -0.4];
        for t in [1e-2, 1e-3, 1e-4] {
            let zeta = [0.3 * t, -0.4 * t];
            let ratio = Cauchy.evaluate(&r, &zeta) / Projection.evaluate(&r, &zeta);
            // Along r: Cauchy = |r|⁴ t², projection = |r|⁴ t².
            assert!((ratio - 1.0).abs() < 1e-9, "{ratio}");
        }
    }

    #[test]
    fn growth_checks() {
        let q = BoxDomain::unit(2);
        let rep = check_growth(&Projection, &q, 10_000, 10.0, 1).unwrap();
        assert!(rep.max_ratio <= 1.0 + 1e-12);
        assert_eq!(check_growth(&ZeroPotential, &q, 1000, 10.0, 1).unwrap().max_ratio, 0.0);
        let rep = check_growth(&Cauchy, &q, 100_000, 10.0, 2).unwrap();
        assert!(rep.max_ratio <= 1.0 + 1e-12);
    }

    #[test]
    fn quartic_growth_constant_would_be_violated() {
        // c_xy = |x−y|⁴ fails for short rods: V = |r|²|ζ|² exceeds |r|⁴|ζ|² when |r| < 1.
        let r = [0.5, 0.0];
        let zeta = [1.0, 0.0];
        let v = Cauchy.evaluate(&r, &zeta);
        assert!(v > 0.5f64.powi(4));
        assert!(v <= Cauchy.pair_growth_constant(&r) + 1e-15);
    }

    #[test]
    fn cauchy_is_not_globally_convex() {
        let rep = check_convexity(&Cauchy, &BoxDomain::unit(2), 2000, 3.0, 4);
        assert!(!rep.is_convex_on_probes());
        let rep = check_convexity(&Projection, &BoxDomain::unit(2), 2000, 3.0, 4);
        assert!(rep.is_convex_on_probes());
    }

    #[test]
    fn projection_hessian_is_twice_outer_product() {
        let mut h = [0.0; 4];
        assert!(Projection.hessian(&[1.0, 2.0], &[0.0, 0.0], &mut h));
        assert_eq!(h, [2.0, 4.0, 4.0, 8.0]);
        assert!(!Cauchy.hessian(&[1.0, 2.0], &[0.0, 0.0], &mut h));
    }

    #[test]
    fn names_resolve() {
        for n in ["projection", "cauchy", "zero"] {
            assert_eq!(by_name(n).unwrap().name(), n);
        }
        assert!(matches!(by_name("spring"), Err(Error::UnknownName { .. })));
    }

    fn vec2() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-3.0f64..3.0, 2)
    }

    proptest! {
        #[test]
        fn potentials_are_nonnegative_and_vanish_at_zero(r in vec2(), z in vec2()) {
            for pot in [by_name("projection").unwrap(), by_name("cauchy").unwrap()] {
                prop_assert!(pot.evaluate(&r, &z) >= 0.0);
                prop_assert_eq!(pot.evaluate(&r, &[0.0, 0.0]), 0.0);
            }
        }

        #[test]
        fn differences_match_plain_evaluation(r in vec2(), z in vec2(), dz in vec2()) {
            for pot in [by_name("projection").unwrap(), by_name("cauchy").unwrap()] {
                let moved: Vec<f64> = z.iter().zip(&dz).map(|(a, b)| a + b).collect();
                let plain = pot.evaluate(&r, &moved) - pot.evaluate(&r, &z);
                let scale = pot.evaluate(&r, &moved) + pot.evaluate(&r, &z);
                prop_assert!((pot.difference(&r, &z, &dz) - plain).abs() <= 1e-12 * (1.0 + scale));
            }
        }

        #[test]
        fn projection_is_two_homogeneous(r in vec2(), z in vec2(), t in -5.0f64..5.0) {
            let tz: Vec<f64> = z.iter().map(|v| t * v).collect();
            let a = Projection.evaluate(&r, &tz);
            let b = t * t * Projection.evaluate(&r, &z);
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }

        #[test]
        fn projection_midpoint_convexity(r in vec2(), z1 in vec2(), z2 in vec2()) {
            let mid: Vec<f64> = z1.iter().zip(&z2).map(|(a, b)| 0.5 * (a + b)).collect();
            let lhs = Projection.evaluate(&r, &mid);
            let rhs = 0.5 * (Projection.evaluate(&r, &z1) + Projection.evaluate(&r, &z2));
            prop_assert!(lhs <= rhs + 1e-12 * (1.0 + rhs));
        }

        #[test]
        fn derivatives_match_central_differences(r in vec2(), z in vec2()) {
            for pot in [by_name("projection").unwrap(), by_name("cauchy").unwrap()] {
                let a = dot(&r, &r).sqrt();
                let w: Vec<f64> = r.iter().zip(&z).map(|(ri, zi)| ri + a * zi).collect();
                prop_assume!(dot(&w, &w).sqrt() > 1e-3);
                let mut g = [0.0; 2];
                pot.derivative(&r, &z, &mut g);
                let scale = g.iter().map(|x| x.abs()).fold(1e-8, f64::max);
                for k in 0..2 {
                    let h = 1e-6 * (1.0 + z[k].abs());
                    let mut zp = z.clone();
                    let mut zm = z.clone();
                    zp[k] += h;
                    zm[k] -= h;
                    let fd = (pot.evaluate(&r, &zp) - pot.evaluate(&r, &zm)) / (2.0 * h);
                    prop_assert!((fd - g[k]).abs() <= 1e-6 * scale.max(1.0), "{} {}: {} vs {}", pot.name(), k, fd, g[k]);
                }
            }
        }
    }
}
