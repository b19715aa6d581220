//! Small dense vector helpers on slices. Dimensions here never exceed a handful.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], t: f64) -> Vec<f64> {
    a.iter().map(|x| x * t).collect()
}

/// `a + t * b`
pub fn axpy(a: &[f64], t: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + t * y).collect()
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn normalize(a: &[f64]) -> Option<Vec<f64>> {
    let n = norm2(a);
    if n > 0.0 && n.is_finite() {
        Some(scale(a, 1.0 / n))
    } else {
        None
    }
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// Modified Gram–Schmidt over `candidates` in order, keeping vectors whose
/// residual exceeds `tol`, until `want` orthonormal vectors are collected.
pub fn gram_schmidt(candidates: &[Vec<f64>], want: usize, tol: f64) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(want);
    for c in candidates {
        if basis.len() == want {
            break;
        }
        let mut v = c.clone();
        // two passes for stability
        for _ in 0..2 {
            for b in &basis {
                let p = dot(&v, b);
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= p * bi;
                }
            }
        }
        let n = norm2(&v);
        if n > tol {
            basis.push(scale(&v, 1.0 / n));
        }
    }
    basis
}

/// Format a point with 17 significant digits, `(a;b;c)`.
pub fn fmt_point(p: &[f64]) -> String {
    let parts: Vec<String> = p.iter().map(|x| format!("{:.16e}", x)).collect();
    format!("({})", parts.join(";"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gram_schmidt_skips_dependent_vectors() {
        let c = vec![
            vec![1.0, 1.0, 0.0],
            vec![2.0, 2.0, 0.0],
            vec![0.0, 0.0, 3.0],
        ];
        let b = gram_schmidt(&c, 2, 1e-12);
        assert_eq!(b.len(), 2);
        assert!(dot(&b[0], &b[1]).abs() < 1e-15);
        assert!((b[1][2] - 1.0).abs() < 1e-15);
    }
}
