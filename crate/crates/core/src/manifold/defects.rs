use rand::Rng;

use super::Manifold;
use crate::error::{Error, Result};
use crate::rng;
use crate::vecops::{axpy, norm2, scale, sub};

/// A sampled maximum with the configuration that attains it.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DefectEstimate {
    pub value: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Shift `z` (zero for the tangent-plane defect).
    pub z: Vec<f64>,
    pub admissible: usize,
}

/// Central-difference defect `|(psi(x+hv) - psi(x-hv)) / 2h - v|_2`.
pub fn verify_tangent_identity(m: &Manifold, x: &[f64], v: &[f64], h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::input(format!("step must be positive, got {h}")));
    }
    let res = m.membership_residual(x);
    if res > 1e-8 {
        return Err(Error::domain("point is not on the manifold", res));
    }
    if v.iter().all(|c| *c == 0.0) {
        return Ok(0.0);
    }
    let a = m.retract(&axpy(x, h, v))?;
    let b = m.retract(&axpy(x, -h, v))?;
    let q: Vec<f64> = a
        .iter()
        .zip(&b)
        .zip(v)
        .map(|((p, q), vi)| (p - q) / (2.0 * h) - vi)
        .collect();
    Ok(norm2(&q))
}

/// Draws a point of `M` at Euclidean distance at most `delta` from `x`,
/// biased toward the largest admissible separations.
fn partner(
    m: &Manifold,
    x: &[f64],
    delta: f64,
    r: &mut rand_chacha::ChaCha8Rng,
) -> Option<Vec<f64>> {
    let frame = m.tangent_frame(x).ok()?;
    let dir = rng::unit_sphere(r, m.intrinsic_dim());
    let u: f64 = r.gen();
    let t = delta * (1.0 - u * u * u);
    let y = m.walk(&frame, &dir, t).ok()?;
    let dist = norm2(&sub(&y, x));
    (dist > 0.0 && dist <= delta).then_some(y)
}

/// Sampled `max |y - x - P_x(y - x)|_2 / |y - x|_2` over pairs of `M` in the
/// ball of radius `r_ball` about the base point with `|x - y|_2 <= delta`.
pub fn lemma1_defect(
    m: &Manifold,
    r_ball: f64,
    delta: f64,
    pair_count: usize,
    seed: u64,
) -> Result<DefectEstimate> {
    if !(delta > 0.0) {
        return Err(Error::input("delta must be positive"));
    }
    let tag = rng::purpose("lemma1");
    let xs = m.random_points(r_ball, pair_count, seed, "lemma1-x");
    let mut best: Option<DefectEstimate> = None;
    let mut admissible = 0;
    for (i, x) in xs.iter().enumerate() {
        let mut r = rng::stream(seed, tag, i as u64);
        let Some(y) = partner(m, x, delta, &mut r) else {
            continue;
        };
        if norm2(&sub(&y, m.basepoint())) > r_ball {
            continue;
        }
        admissible += 1;
        let frame = m.tangent_frame(x)?;
        let w = sub(&y, x);
        let ratio = norm2(&sub(&w, &frame.project(&w))) / norm2(&w);
        if best.as_ref().is_none_or(|b| ratio > b.value) {
            best = Some(DefectEstimate {
                value: ratio,
                x: x.clone(),
                y,
                z: vec![0.0; m.ambient_dim()],
                admissible: 0,
            });
        }
    }
    let mut out = best.ok_or_else(|| Error::Sampling("pairs for the tangent defect".into()))?;
    out.admissible = admissible;
    Ok(out)
}

/// Sampled `max |psi(x+z) - psi(y+z) - (x-y)|_2 / |x-y|_2` with
/// `|x-y|_2 <= pair_delta` and `|z|_2 <= z_delta`.
pub fn lemma2_defect(
    m: &Manifold,
    r_ball: f64,
    pair_delta: f64,
    z_delta: f64,
    sample_count: usize,
    seed: u64,
) -> Result<DefectEstimate> {
    if !(pair_delta > 0.0) || z_delta < 0.0 {
        return Err(Error::input("deltas must be positive"));
    }
    if z_delta > 0.5 * m.tube_radius() * (1.0 + 1e-12) {
        return Err(Error::input(format!(
            "shift radius {z_delta} exceeds half the tube radius {}",
            m.tube_radius()
        )));
    }
    let tag = rng::purpose("lemma2");
    let xs = m.random_points(r_ball, sample_count, seed, "lemma2-x");
    let n = m.ambient_dim();
    let mut best: Option<DefectEstimate> = None;
    let mut admissible = 0;
    for (i, x) in xs.iter().enumerate() {
        let mut r = rng::stream(seed, tag, i as u64);
        let Some(y) = partner(m, x, pair_delta, &mut r) else {
            continue;
        };
        if norm2(&sub(&y, m.basepoint())) > r_ball {
            continue;
        }
        admissible += 1;
        // radii biased toward the boundary of the shift ball
        let dir = rng::unit_sphere(&mut r, n);
        let u: f64 = r.gen();
        let z = scale(&dir, z_delta * (1.0 - u * u * u));
        let a = m.retract(&axpy(x, 1.0, &z))?;
        let b = m.retract(&axpy(&y, 1.0, &z))?;
        let num: Vec<f64> = (0..n).map(|k| a[k] - b[k] - (x[k] - y[k])).collect();
        let ratio = norm2(&num) / norm2(&sub(x, &y));
        if best.as_ref().is_none_or(|b| ratio > b.value) {
            best = Some(DefectEstimate {
                value: ratio,
                x: x.clone(),
                y,
                z,
                admissible: 0,
            });
        }
    }
    let mut out = best.ok_or_else(|| Error::Sampling("pairs for the translation defect".into()))?;
    out.admissible = admissible;
    Ok(out)
}

/// Federer's reach formula `inf |y-x|^2 / (2 dist(y-x, T_x))` over sampled
/// pairs; an upper estimate of the reach (infinite for affine pieces).
pub fn estimate_reach(m: &Manifold, count: usize, seed: u64) -> f64 {
    let radius = if m.is_compact() { f64::INFINITY } else { 8.0 };
    let pts = m.random_points(radius, count, seed, "reach");
    let frames: Vec<_> = pts.iter().filter_map(|p| m.tangent_frame(p).ok()).collect();
    let mut best = f64::INFINITY;
    for (i, f) in frames.iter().enumerate() {
        for (j, g) in frames.iter().enumerate() {
            if i == j {
                continue;
            }
            let w = sub(&g.point, &f.point);
            let off = norm2(&sub(&w, &f.project(&w)));
            if off > 1e-14 {
                best = best.min(crate::vecops::dot(&w, &w) / (2.0 * off));
            }
        }
    }
    best
}
