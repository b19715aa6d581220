//! Gauss–Legendre rules, tensor products over boxes, and 1-D adaptive integration.

use crate::error::{Error, Result};

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, refined by Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
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

/// A quadrature rule on a box in `R^dim`: flat node coordinates plus weights.
#[derive(Debug, Clone)]
pub struct TensorRule {
    pub dim: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl TensorRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.nodes[k * self.dim..(k + 1) * self.dim]
    }

    pub fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        pairwise_sum(
            &(0..self.len())
                .map(|k| self.weights[k] * f(self.node(k)))
                .collect::<Vec<_>>(),
        )
    }
}

/// Tensor Gauss–Legendre rule with `n` nodes per axis on `[-h, h]^dim`.
pub fn tensor_rule_cube(dim: usize, n: usize, h: f64) -> TensorRule {
    let (x, w) = gauss_legendre(n);
    let total = n.pow(dim as u32);
    let mut nodes = Vec::with_capacity(total * dim);
    let mut weights = Vec::with_capacity(total);
    let mut idx = vec![0usize; dim];
    for _ in 0..total {
        let mut wt = 1.0;
        for (k, &i) in idx.iter().enumerate() {
            let _ = k;
            nodes.push(h * x[i]);
            wt *= h * w[i];
        }
        weights.push(wt);
        for slot in idx.iter_mut().rev() {
            *slot += 1;
            if *slot < n {
                break;
            }
            *slot = 0;
        }
    }
    TensorRule {
        dim,
        nodes,
        weights,
    }
}

/// Tensor rule on `[-h, h]^dim` built orthant by orthant, so integrands with a
/// kink across the coordinate hyperplanes are integrated piecewise smoothly.
pub fn tensor_rule_orthants(dim: usize, n: usize, h: f64) -> TensorRule {
    let half = tensor_rule_cube(dim, n, h / 2.0);
    let mut nodes = Vec::with_capacity(half.nodes.len() << dim);
    let mut weights = Vec::with_capacity(half.weights.len() << dim);
    for mask in 0..(1usize << dim) {
        for k in 0..half.len() {
            for (j, &c) in half.node(k).iter().enumerate() {
                let shift = if mask >> j & 1 == 1 {
                    h / 2.0
                } else {
                    -h / 2.0
                };
                nodes.push(c + shift);
            }
            weights.push(half.weights[k]);
        }
    }
    TensorRule {
        dim,
        nodes,
        weights,
    }
}

/// Sum in a fixed pairwise-tree order; the result does not depend on chunking.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        2 => v[0] + v[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
        }
    }
}

/// Result of an adaptive integration with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

/// Globally adaptive Gauss–Legendre integration on `[a, b]`: each panel is
/// estimated with a 10-point and a 20-point rule, and panels whose
/// disagreement exceeds their share of the tolerance are bisected.
pub fn adaptive_gauss(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> Result<Integral> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::input("integration bounds must be finite"));
    }
    if a == b {
        return Ok(Integral {
            value: 0.0,
            error: 0.0,
        });
    }
    let lo = gauss_legendre(10);
    let hi = gauss_legendre(20);
    let panel = |l: f64, r: f64| -> (f64, f64) {
        let c = 0.5 * (l + r);
        let h = 0.5 * (r - l);
        let q = |rule: &(Vec<f64>, Vec<f64>)| -> f64 {
            rule.0
                .iter()
                .zip(&rule.1)
                .map(|(x, w)| w * f(c + h * x))
                .sum::<f64>()
                * h
        };
        let fine = q(&hi);
        (fine, (fine - q(&lo)).abs())
    };
    let mut panels: Vec<(f64, f64, f64, f64)> = {
        let (v, e) = panel(a, b);
        vec![(a, b, v, e)]
    };
    for _ in 0..2000 {
        let total: f64 = panels.iter().map(|p| p.2).sum();
        let err: f64 = panels.iter().map(|p| p.3).sum();
        if err <= rel_tol * total.abs().max(f64::MIN_POSITIVE) || err < 1e-300 {
            return Ok(Integral {
                value: pairwise_sum(&panels.iter().map(|p| p.2).collect::<Vec<_>>()),
                error: err,
            });
        }
        // split the worst panel
        let (worst, _) =
            panels.iter().enumerate().fold(
                (0, -1.0),
                |acc, (i, p)| if p.3 > acc.1 { (i, p.3) } else { acc },
            );
        let (l, r, _, _) = panels.remove(worst);
        let m = 0.5 * (l + r);
        let (v1, e1) = panel(l, m);
        let (v2, e2) = panel(m, r);
        panels.insert(worst, (m, r, v2, e2));
        panels.insert(worst, (l, m, v1, e1));
    }
    Err(Error::numeric("adaptive quadrature did not converge"))
}

/// Recursive adaptive Simpson rule with Richardson correction; an independent
/// second opinion for [`adaptive_gauss`].
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    fn step(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> Option<f64> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if diff.abs() <= 15.0 * tol {
            return Some(left + right + diff / 15.0);
        }
        if depth == 0 {
            return None;
        }
        Some(
            step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
                + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?,
        )
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::input("integration bounds must be finite"));
    }
    let (fa, fb) = (f(a), f(b));
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(&f, a, b, fa, fm, fb, whole, abs_tol, 50)
        .ok_or_else(|| Error::numeric("adaptive Simpson hit its depth limit"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(5);
        // degree 9 is exact for 5 nodes
        let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((v - 2.0 / 9.0).abs() < 1e-14);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn tensor_rule_volume() {
        let r = tensor_rule_cube(3, 4, 0.5);
        assert!((r.integrate(|_| 1.0) - 1.0).abs() < 1e-14);
        let o = tensor_rule_orthants(2, 3, 1.0);
        assert!((o.integrate(|x| x[0].abs()) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn adaptive_handles_flat_endpoint() {
        // integral of exp(-1/x) on (0, 1] = e^{-1} - E1(1)
        let v = adaptive_gauss(
            |x| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 },
            0.0,
            1.0,
            1e-12,
        )
        .unwrap();
        let expected = (-1.0f64).exp() - 0.219_383_934_395_520_27;
        assert!((v.value - expected).abs() < 1e-12, "{}", v.value);
        let w = adaptive_simpson(
            |x| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 },
            0.0,
            1.0,
            1e-13,
        )
        .unwrap();
        assert!((w - expected).abs() < 1e-11, "{w}");
    }
}
