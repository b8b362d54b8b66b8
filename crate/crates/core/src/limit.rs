//! The continuum limit functional
//! `E u = c̄ ∬ V(x, y, u(x) − u(y)) / |x − y|^{d+ps} + ∫ Σ_b (b/|b| · ∇u b/|b|)² − ∫ u · f`
//! on a box `Q`.
//!
//! The double integral is taken in relative coordinates `h = y − x`:
//! `∬ F(x, y) = ∫ K(h) dh` with `K(h) = ∫_{Q ∩ (Q − h)} F(x, x + h) dx`.
//! Each orthant of `h` is covered by geometrically graded shells around the
//! singular corner `h = 0`. The innermost cube is replaced by the geometric
//! tail of the shell sums, which is exact for kernels that are homogeneous
//! near the diagonal.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{EnergyBreakdown, LocalDensity};
use crate::error::{Error, Result};
use crate::fields::SmoothField;
use crate::model::{BoxDomain, ModelParams};
use crate::potential::Potential;
use crate::quadrature::{for_each_panel, normalize_breaks, GaussRule};
use crate::sum::{compensated_sum, CompensatedSum};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimitSettings {
    /// Stop once two successive levels differ by at most `rtol` relative.
    pub rtol: f64,
    /// Highest refinement level tried before giving up.
    pub max_level: usize,
    /// Ratio between consecutive shells around the diagonal.
    pub shell_ratio: f64,
}

impl Default for LimitSettings {
    fn default() -> Self {
        Self {
            rtol: 1e-4,
            max_level: 6,
            shell_ratio: 0.5,
        }
    }
}

impl LimitSettings {
    pub fn with_rtol(rtol: f64) -> Self {
        Self {
            rtol,
            ..Self::default()
        }
    }
}

/// Values produced by successive refinement levels, the last one accepted.
#[derive(Clone, Debug, PartialEq)]
pub struct Refinement {
    pub values: Vec<f64>,
}

impl Refinement {
    pub fn value(&self) -> f64 {
        *self.values.last().expect("at least one level")
    }

    /// `|I_k − I_{k−1}|` for every level after the first.
    pub fn changes(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| (w[1] - w[0]).abs()).collect()
    }
}

fn refine<F: FnMut(usize) -> f64>(settings: &LimitSettings, mut level_value: F) -> Result<Refinement> {
    let mut values = vec![level_value(0)];
    let mut change = f64::INFINITY;
    for level in 1..=settings.max_level {
        let v = level_value(level);
        let prev = values[values.len() - 1];
        values.push(v);
        if !v.is_finite() {
            return Err(Error::NonFiniteEnergy);
        }
        change = (v - prev).abs();
        if change <= settings.rtol * v.abs() {
            return Ok(Refinement { values });
        }
    }
    Err(Error::NoConvergence {
        rtol: settings.rtol,
        change: change / values.last().map_or(1.0, |v| v.abs()).max(f64::MIN_POSITIVE),
    })
}

fn check_field(u: &dyn SmoothField, domain: &BoxDomain, what: &str) -> Result<()> {
    if u.dim() != domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: domain.dim(),
            actual: u.dim(),
        });
    }
    if u.components() != domain.dim() {
        return Err(Error::InvalidConfig(format!(
            "{what} must have {} components, got {}",
            domain.dim(),
            u.components()
        )));
    }
    Ok(())
}

/// Field breakpoints strictly inside `(lo, hi)` on every axis.
fn field_breaks(fields: &[&dyn SmoothField], domain: &BoxDomain) -> Vec<Vec<f64>> {
    (0..domain.dim())
        .map(|k| {
            let (lo, hi) = (domain.lo[k], domain.hi[k]);
            let mut v: Vec<f64> = fields
                .iter()
                .flat_map(|f| f.breakpoints(k))
                .filter(|&b| b > lo && b < hi)
                .collect();
            v.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
            v
        })
        .collect()
}

/// Composite Gauss quadrature of `g` over `domain` with `2^(level+1)` panels
/// per axis, split at the given breakpoints.
fn box_integral_level<G>(domain: &BoxDomain, kinks: &[Vec<f64>], level: usize, g: &G) -> f64
where
    G: Fn(&[f64]) -> f64 + Sync,
{
    let d = domain.dim();
    let panels = 1usize << (level + 1);
    let breaks: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            let mut v: Vec<f64> = (0..=panels)
                .map(|i| domain.lo[k] + domain.width(k) * i as f64 / panels as f64)
                .collect();
            v.extend_from_slice(&kinks[k]);
            normalize_breaks(v, 1e-14 * domain.width(k))
        })
        .collect();
    let rule = GaussRule::new(6);
    // One task per first-axis slab keeps the reduction order fixed.
    let slabs: Vec<f64> = breaks[0]
        .par_windows(2)
        .map(|w| {
            let mut sub = breaks.clone();
            sub[0] = vec![w[0], w[1]];
            let mut acc = CompensatedSum::new();
            for_each_panel(&sub, |lo, hi| acc.add(rule.integrate_box(lo, hi, g)));
            acc.value()
        })
        .collect();
    compensated_sum(slabs)
}

/// `∫_Q Σ_{b ∈ B∖0} (b · ∇u b)² / |b|⁴ dx`.
pub fn local_limit(u: &dyn SmoothField, domain: &BoxDomain, settings: &LimitSettings) -> Result<f64> {
    check_field(u, domain, "displacement")?;
    let d = domain.dim();
    let density = LocalDensity::new(d);
    let kinks = field_breaks(&[u], domain);
    let integrand = |x: &[f64]| {
        let mut jac = vec![0.0; d * d];
        u.jacobian(x, &mut jac);
        density.eval(&jac)
    };
    Ok(refine(settings, |level| box_integral_level(domain, &kinks, level, &integrand))?.value())
}

/// `∫_Q u · f dx`.
pub fn work_limit(
    u: &dyn SmoothField,
    f: &dyn SmoothField,
    domain: &BoxDomain,
    settings: &LimitSettings,
) -> Result<f64> {
    check_field(u, domain, "displacement")?;
    check_field(f, domain, "force")?;
    let d = domain.dim();
    let kinks = field_breaks(&[u, f], domain);
    let integrand = |x: &[f64]| {
        let (mut a, mut b) = (vec![0.0; d], vec![0.0; d]);
        u.eval(x, &mut a);
        f.eval(x, &mut b);
        a.iter().zip(&b).map(|(p, q)| p * q).sum()
    };
    Ok(refine(settings, |level| box_integral_level(domain, &kinks, level, &integrand))?.value())
}

/// One panel of the relative-coordinate mesh: `h` ranges over `[lo, hi]`.
struct HPanel {
    shell: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

fn h_panels(domain: &BoxDomain, shells: usize, ratio: f64) -> Vec<HPanel> {
    let d = domain.dim();
    let mut out = Vec::new();
    for signs in 0..(1usize << d) {
        for shell in 0..shells {
            let outer = ratio.powi(shell as i32);
            let inner = outer * ratio;
            for subset in 1..(1usize << d) {
                let mut lo = vec![0.0; d];
                let mut hi = vec![0.0; d];
                for k in 0..d {
                    let w = domain.width(k);
                    let (a, b) = if subset >> k & 1 == 1 {
                        (w * inner, w * outer)
                    } else {
                        (0.0, w * inner)
                    };
                    if signs >> k & 1 == 1 {
                        lo[k] = -b;
                        hi[k] = -a;
                    } else {
                        lo[k] = a;
                        hi[k] = b;
                    }
                }
                out.push(HPanel { shell, lo, hi });
            }
        }
    }
    out
}

/// `K(h) |h|^{kernel}`: the inner integral over `x ∈ Q ∩ (Q − h)`.
struct Inner<'a> {
    u: &'a dyn SmoothField,
    pot: &'a dyn Potential,
    domain: &'a BoxDomain,
    kinks: &'a [Vec<f64>],
    rule: &'a GaussRule,
}

impl Inner<'_> {
    fn eval(&self, h: &[f64]) -> f64 {
        let d = h.len();
        let mut breaks = Vec::with_capacity(d);
        for k in 0..d {
            let lo = self.domain.lo[k].max(self.domain.lo[k] - h[k]);
            let hi = self.domain.hi[k].min(self.domain.hi[k] - h[k]);
            if hi <= lo {
                return 0.0;
            }
            let mut v = vec![lo, hi];
            for &b in &self.kinks[k] {
                for c in [b, b - h[k]] {
                    if c > lo && c < hi {
                        v.push(c);
                    }
                }
            }
            breaks.push(normalize_breaks(v, 1e-14 * self.domain.width(k)));
        }
        let r: Vec<f64> = h.iter().map(|v| -v).collect();
        let mut y = vec![0.0; d];
        let mut ux = vec![0.0; d];
        let mut uy = vec![0.0; d];
        let mut zeta = vec![0.0; d];
        let mut acc = CompensatedSum::new();
        for_each_panel(&breaks, |lo, hi| {
            self.rule.for_each_point(lo, hi, |x, w| {
                for k in 0..d {
                    y[k] = x[k] + h[k];
                }
                self.u.eval(x, &mut ux);
                self.u.eval(&y, &mut uy);
                for k in 0..d {
                    zeta[k] = ux[k] - uy[k];
                }
                acc.add(w * self.pot.evaluate(&r, &zeta));
            });
        });
        acc.value()
    }
}

/// One refinement level of `∬_{Q×Q} V(x − y, u(x) − u(y)) / |x − y|^{kernel}`.
///
/// Level `k` uses `6 + 3k` shells, order `4 + 2k` in `h` and order `3 + k`
/// in `x` on every smooth piece.
pub fn double_integral_level(
    u: &dyn SmoothField,
    domain: &BoxDomain,
    pot: &dyn Potential,
    kernel_exponent: f64,
    level: usize,
    shell_ratio: f64,
) -> f64 {
    let d = domain.dim();
    let shells = 6 + 3 * level;
    let outer_rule = GaussRule::new(4 + 2 * level);
    let inner_rule = GaussRule::new(3 + level);
    let kinks = field_breaks(&[u], domain);
    let inner = Inner {
        u,
        pot,
        domain,
        kinks: &kinks,
        rule: &inner_rule,
    };
    let panels = h_panels(domain, shells, shell_ratio);
    let values: Vec<f64> = panels
        .par_iter()
        .map(|p| {
            outer_rule.integrate_box(&p.lo, &p.hi, |h| {
                let n2: f64 = h.iter().map(|v| v * v).sum();
                if n2 == 0.0 {
                    return 0.0;
                }
                inner.eval(h) / n2.powf(0.5 * kernel_exponent)
            })
        })
        .collect();
    let mut shell_sums = vec![CompensatedSum::new(); shells];
    for (p, v) in panels.iter().zip(&values) {
        shell_sums[p.shell].add(*v);
    }
    let shell_sums: Vec<f64> = shell_sums.iter().map(|s| s.value()).collect();
    let fallback = shell_ratio.powf(pot.growth_exponent() + d as f64 - kernel_exponent);
    compensated_sum(shell_sums.iter().copied()) + geometric_tail(&shell_sums, fallback)
}

/// Sum of the shells below the last one, continuing the last ratio.
fn geometric_tail(shells: &[f64], fallback: f64) -> f64 {
    let n = shells.len();
    if n < 2 || shells[n - 1] == 0.0 {
        return 0.0;
    }
    let measured = shells[n - 1] / shells[n - 2];
    let rho = if measured.is_finite() && measured > 0.0 && measured < 1.0 {
        measured
    } else {
        fallback
    };
    shells[n - 1] * rho / (1.0 - rho)
}

/// `∬_{Q×Q} V(x − y, u(x) − u(y)) / |x − y|^{kernel}` refined to `settings.rtol`.
pub fn fractional_double_integral(
    u: &dyn SmoothField,
    domain: &BoxDomain,
    pot: &dyn Potential,
    kernel_exponent: f64,
    settings: &LimitSettings,
) -> Result<Refinement> {
    if u.dim() != domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: domain.dim(),
            actual: u.dim(),
        });
    }
    let d = domain.dim() as f64;
    let growth = pot.growth_exponent();
    if growth + d - kernel_exponent <= 0.0 {
        return Err(Error::NonIntegrable {
            kernel_exponent,
            growth,
            dim: domain.dim(),
        });
    }
    if !(settings.shell_ratio > 0.0 && settings.shell_ratio < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "shell ratio must lie in (0, 1), got {}",
            settings.shell_ratio
        )));
    }
    refine(settings, |level| {
        double_integral_level(u, domain, pot, kernel_exponent, level, settings.shell_ratio)
    })
}

/// `c̄ ∬_{Q×Q} V(x, y, u(x) − u(y)) / |x − y|^{d+ps}`.
pub fn nonlocal_limit(
    u: &dyn SmoothField,
    domain: &BoxDomain,
    params: &ModelParams,
    pot: &dyn Potential,
    settings: &LimitSettings,
) -> Result<f64> {
    check_field(u, domain, "displacement")?;
    if params.d() != domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.d(),
            actual: domain.dim(),
        });
    }
    let c_bar = params.c_bar();
    if c_bar == 0.0 {
        return Ok(0.0);
    }
    let integral = fractional_double_integral(u, domain, pot, params.kernel_exponent(), settings)?;
    Ok(c_bar * integral.value())
}

/// The limit energy split as `E^V u + E^loc u − F u`.
pub fn limit_total(
    u: &dyn SmoothField,
    f: &dyn SmoothField,
    domain: &BoxDomain,
    params: &ModelParams,
    pot: &dyn Potential,
    settings: &LimitSettings,
) -> Result<EnergyBreakdown> {
    let e_nonlocal = nonlocal_limit(u, domain, params, pot, settings)?;
    let e_local = local_limit(u, domain, settings)?;
    let work = work_limit(u, f, domain, settings)?;
    let out = EnergyBreakdown::new(e_nonlocal, e_local, work);
    if !out.is_finite() {
        return Err(Error::NonFiniteEnergy);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::local_density_2d;
    use crate::fields::{displacement_preset, Affine, FnField, Zero};
    use crate::model::ParamRecord;
    use crate::potential::{Cauchy, Projection};
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::sync::Arc;

    fn unit(d: usize) -> BoxDomain {
        BoxDomain::unit(d)
    }

    fn default_params() -> ModelParams {
        ModelParams::validate(ParamRecord::default()).unwrap()
    }

    #[test]
    fn zero_field_has_zero_limit() {
        let q = unit(2);
        let u = Zero { dim: 2, components: 2 };
        let e = limit_total(&u, &u, &q, &default_params(), &Projection, &LimitSettings::default()).unwrap();
        assert_eq!(e, EnergyBreakdown::new(0.0, 0.0, 0.0));
    }

    #[test]
    fn vanishing_fiber_density_drops_the_nonlocal_part() {
        let q = unit(2);
        let u = displacement_preset("bump", &q).unwrap();
        let params = default_params().with_c_tilde(0.0).unwrap();
        let v = nonlocal_limit(u.as_ref(), &q, &params, &Projection, &LimitSettings::default()).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn zero_force_total_is_the_sum_of_energies() {
        let q = unit(2);
        let u = displacement_preset("bump", &q).unwrap();
        let f = Zero { dim: 2, components: 2 };
        let e = limit_total(u.as_ref(), &f, &q, &default_params(), &Projection, &LimitSettings::default())
            .unwrap();
        assert_eq!(e.work, 0.0);
        assert_eq!(e.total, e.e_nonlocal + e.e_local);
        assert!(e.e_nonlocal > 0.0 && e.e_local > 0.0);
    }

    /// In 1D with `u(x) = x` the projection integrand is `|x − y|^{4 − k}`,
    /// and `∫∫_{[0,1]²} |x − y|^a = 2 / ((a + 1)(a + 2))`.
    #[test]
    fn one_dimensional_power_integral_matches_closed_form() {
        let q = unit(1);
        let u = Affine::linear(1, vec![1.0]);
        for kernel in [1.25, 2.0, 2.75] {
            let a = 4.0 - kernel;
            let exact = 2.0 / ((a + 1.0) * (a + 2.0));
            let got = fractional_double_integral(&u, &q, &Projection, kernel, &LimitSettings::with_rtol(1e-8))
                .unwrap()
                .value();
            assert_relative_eq!(got, exact, max_relative = 1e-6);
        }
    }

    #[test]
    fn non_integrable_kernel_is_rejected() {
        let q = unit(2);
        let u = displacement_preset("bump", &q).unwrap();
        let err = fractional_double_integral(u.as_ref(), &q, &Projection, 4.0, &LimitSettings::default());
        assert!(matches!(err, Err(Error::NonIntegrable { .. })));
    }

    fn monte_carlo(u: &dyn SmoothField, pot: &dyn Potential, kernel: f64, samples: usize, seed: u64) -> (f64, f64) {
        let mut rng = StdRng::seed_from_u64(seed);
        let (mut sum, mut sq) = (0.0, 0.0);
        let (mut x, mut y) = ([0.0; 2], [0.0; 2]);
        let (mut ux, mut uy) = ([0.0; 2], [0.0; 2]);
        for _ in 0..samples {
            for k in 0..2 {
                x[k] = rng.random::<f64>();
                y[k] = rng.random::<f64>();
            }
            u.eval(&x, &mut ux);
            u.eval(&y, &mut uy);
            let r = [x[0] - y[0], x[1] - y[1]];
            let zeta = [ux[0] - uy[0], ux[1] - uy[1]];
            let n2 = r[0] * r[0] + r[1] * r[1];
            let v = pot.evaluate(&r, &zeta) / n2.powf(0.5 * kernel);
            sum += v;
            sq += v * v;
        }
        let n = samples as f64;
        let mean = sum / n;
        (mean, ((sq / n - mean * mean) / n).sqrt())
    }

    #[test]
    fn two_dimensional_fixture_matches_monte_carlo() {
        let q = unit(2);
        let u = displacement_preset("bump", &q).unwrap();
        let params = default_params();
        for pot in [&Projection as &dyn Potential, &Cauchy] {
            let got = fractional_double_integral(u.as_ref(), &q, pot, params.kernel_exponent(), &LimitSettings::default())
                .unwrap()
                .value();
            let (mc, se) = monte_carlo(u.as_ref(), pot, params.kernel_exponent(), 10_000_000, 11);
            assert!(se < 1e-3 * mc, "MC standard error too large: {se} vs {mc}");
            assert_relative_eq!(got, mc, max_relative = 5e-3);
        }
    }

    #[test]
    fn projection_limit_is_quadratic() {
        let q = unit(2);
        let u = displacement_preset("sine", &q).unwrap();
        let params = default_params();
        let settings = LimitSettings::with_rtol(1e-7);
        let base = nonlocal_limit(u.as_ref(), &q, &params, &Projection, &settings).unwrap();
        for t in [0.5, 3.0] {
            let inner = u.clone();
            let scaled = FnField::new(2, 2, move |x, out| {
                inner.eval(x, out);
                out.iter_mut().for_each(|v| *v *= t);
            });
            let scaled = scaled.with_jacobian({
                let inner = u.clone();
                move |x, out| {
                    inner.jacobian(x, out);
                    out.iter_mut().for_each(|v| *v *= t);
                }
            });
            let v = nonlocal_limit(&scaled, &q, &params, &Projection, &settings).unwrap();
            assert_relative_eq!(v, t * t * base, max_relative = 1e-6);
        }
    }

    #[test]
    fn refinement_changes_shrink() {
        let q = unit(2);
        let u = displacement_preset("bump", &q).unwrap();
        let values: Vec<f64> = (0..4)
            .map(|k| double_integral_level(u.as_ref(), &q, &Projection, 3.0, k, 0.5))
            .collect();
        let changes: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        for w in changes.windows(2) {
            assert!(w[1] < w[0], "changes {changes:?}");
        }
    }

    #[test]
    fn skew_linear_field_has_no_local_limit() {
        let q = unit(3);
        let u = Affine::linear(3, vec![0.0, 1.0, -2.0, -1.0, 0.0, 0.5, 2.0, -0.5, 0.0]);
        let v = local_limit(&u, &q, &LimitSettings::default()).unwrap();
        assert!(v.abs() < 1e-24, "{v}");
    }

    fn bump(t: f64) -> (f64, f64) {
        if !(0.0..=1.0).contains(&t) {
            return (0.0, 0.0);
        }
        (16.0 * t * t * (1.0 - t).powi(2), 32.0 * t * (1.0 - t) * (1.0 - 2.0 * t))
    }

    /// `φ(x) = b((x₁ − 0.2)/0.6) b((x₂ − 0.2)/0.6)`, zero outside `[0.2, 0.8]²`.
    fn phi(x: &[f64]) -> (f64, f64, f64) {
        let (a, da) = bump((x[0] - 0.2) / 0.6);
        let (b, db) = bump((x[1] - 0.2) / 0.6);
        (a * b, da * b / 0.6, a * db / 0.6)
    }

    #[test]
    fn local_limit_matches_expanded_integrand() {
        let u = FnField::new(2, 2, |x, out| {
            out[0] = x[0] * phi(x).0;
            out[1] = 0.0;
        })
        .with_jacobian(|x, out| {
            let (p, p1, p2) = phi(x);
            out.copy_from_slice(&[p + x[0] * p1, x[0] * p2, 0.0, 0.0]);
        })
        .with_breakpoints(&[0.2, 0.8]);
        let q = unit(2);
        let got = local_limit(&u, &q, &LimitSettings::with_rtol(1e-10)).unwrap();

        // Composite Simpson on a mesh aligned with the support edges,
        // integrating the expanded d = 2 density term by term.
        let n = 600;
        let h = 1.0 / n as f64;
        let w = |i: usize| match i {
            0 => 1.0,
            i if i == n => 1.0,
            i if i % 2 == 1 => 4.0,
            _ => 2.0,
        };
        let mut acc = 0.0;
        for i in 0..=n {
            for j in 0..=n {
                let x = [i as f64 * h, j as f64 * h];
                let (p, p1, p2) = phi(&x);
                let (a, b) = (p + x[0] * p1, x[0] * p2);
                acc += w(i) * w(j) * local_density_2d(&[a, b, 0.0, 0.0]);
            }
        }
        let oracle = acc * h * h / 9.0;
        assert_relative_eq!(got, oracle, max_relative = 1e-6);
    }

    #[test]
    fn work_of_constant_fields() {
        let q = BoxDomain::new(vec![0.0, 0.0], vec![2.0, 0.5]).unwrap();
        let u = crate::fields::Constant { dim: 2, value: vec![1.0, 2.0] };
        let f = crate::fields::Constant { dim: 2, value: vec![3.0, -1.0] };
        let v = work_limit(&u, &f, &q, &LimitSettings::default()).unwrap();
        assert_relative_eq!(v, 1.0, max_relative = 1e-13);
    }

    #[test]
    fn mismatched_dimensions_are_reported() {
        let q = unit(2);
        let u: Arc<dyn SmoothField> = Arc::new(Zero { dim: 3, components: 3 });
        assert!(matches!(
            local_limit(u.as_ref(), &q, &LimitSettings::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
