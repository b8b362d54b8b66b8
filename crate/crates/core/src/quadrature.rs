//! Gauss–Legendre rules and tensor-product panel quadrature.

use std::f64::consts::PI;

use crate::sum::CompensatedSum;

/// An `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, refined by Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&t, &w)| (mid + half * t, half * w))
    }

    pub fn integrate_1d<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }

    /// Tensor-product rule on the box `[lo, hi]`; calls `f(point, weight)`.
    pub fn for_each_point<F: FnMut(&[f64], f64)>(&self, lo: &[f64], hi: &[f64], mut f: F) {
        let d = lo.len();
        let n = self.len();
        let mut idx = vec![0usize; d];
        let mut x = vec![0.0; d];
        let half: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (b - a)).collect();
        let mid: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
        if half.iter().any(|&h| h <= 0.0) {
            return;
        }
        loop {
            let mut w = 1.0;
            for k in 0..d {
                x[k] = mid[k] + half[k] * self.nodes[idx[k]];
                w *= half[k] * self.weights[idx[k]];
            }
            f(&x, w);
            if !advance(&mut idx, n) {
                break;
            }
        }
    }

    pub fn integrate_box<F: FnMut(&[f64]) -> f64>(&self, lo: &[f64], hi: &[f64], mut f: F) -> f64 {
        let mut acc = CompensatedSum::new();
        self.for_each_point(lo, hi, |x, w| acc.add(w * f(x)));
        acc.value()
    }
}

/// Value and derivative of the Legendre polynomial `P_n` at `x`.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Odometer increment over `[0, n)^d`, last index fastest. Returns false on wrap.
pub(crate) fn advance(idx: &mut [usize], n: usize) -> bool {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < n {
            return true;
        }
        idx[k] = 0;
    }
    false
}

/// Odometer increment with per-axis extents.
pub(crate) fn advance_mixed(idx: &mut [usize], extents: &[usize]) -> bool {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < extents[k] {
            return true;
        }
        idx[k] = 0;
    }
    false
}

/// Visit every panel of the tensor mesh spanned by per-axis sorted breakpoints.
pub fn for_each_panel<F: FnMut(&[f64], &[f64])>(breaks: &[Vec<f64>], mut f: F) {
    let d = breaks.len();
    let extents: Vec<usize> = breaks.iter().map(|b| b.len().saturating_sub(1)).collect();
    if extents.contains(&0) {
        return;
    }
    let mut idx = vec![0usize; d];
    let mut lo = vec![0.0; d];
    let mut hi = vec![0.0; d];
    loop {
        for k in 0..d {
            lo[k] = breaks[k][idx[k]];
            hi[k] = breaks[k][idx[k] + 1];
        }
        f(&lo, &hi);
        if !advance_mixed(&mut idx, &extents) {
            break;
        }
    }
}

/// Sort and deduplicate breakpoints (merging values closer than `tol`).
pub fn normalize_breaks(mut v: Vec<f64>, tol: f64) -> Vec<f64> {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
    let mut out: Vec<f64> = Vec::with_capacity(v.len());
    for x in v {
        match out.last() {
            Some(&last) if (x - last).abs() <= tol => {}
            _ => out.push(x),
        }
    }
    out
}
