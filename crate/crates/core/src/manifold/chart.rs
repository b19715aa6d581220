use super::{Manifold, TangentFrame};
use crate::error::{Error, Result};
use crate::vecops::{norm2, sub};

/// Inverse `phi_x` of `u -> psi(x + E_x u)` near a center `x`.
///
/// `radius` bounds the tangent coordinates the root finder may visit; leaving
/// that region is reported as a domain error.
#[derive(Debug, Clone)]
pub struct ChartInverse {
    pub frame: TangentFrame,
    pub radius: f64,
}

/// Residual accepted by `eval` (Euclidean distance `|psi(p) - y|`).
pub const CHART_RESIDUAL: f64 = 1e-10;

impl ChartInverse {
    pub fn new(frame: TangentFrame, radius: f64) -> Self {
        ChartInverse { frame, radius }
    }

    pub fn center(&self) -> &[f64] {
        &self.frame.point
    }

    /// Tangent coordinates `u = E^T (phi_x(y) - x)`.
    pub fn coords(&self, m: &Manifold, y: &[f64]) -> Result<Vec<f64>> {
        let x = &self.frame.point;
        let d = self.frame.dim();
        if y == x.as_slice() {
            return Ok(vec![0.0; d]);
        }
        let mut u = self.frame.coords(&sub(y, x));
        let scale = 1.0 + norm2(y);
        let mut best = f64::INFINITY;
        for _ in 0..40 {
            if norm2(&u) > self.radius {
                return Err(Error::domain("chart inversion left its domain", norm2(&u)));
            }
            let p = m.retract(&self.frame.affine(&u))?;
            let r = sub(&p, y);
            let res = norm2(&r);
            best = best.min(res);
            if res <= 1e-15 * scale {
                return Ok(u);
            }
            let jac = self.jacobian(m, &u)?;
            let step = gauss_newton_step(&jac, &r, d)?;
            for (a, b) in u.iter_mut().zip(&step) {
                *a -= b;
            }
            if norm2(&step) <= 1e-16 * (1.0 + norm2(&u)) {
                break;
            }
        }
        let res = norm2(&sub(&m.retract(&self.frame.affine(&u))?, y));
        if res <= CHART_RESIDUAL {
            Ok(u)
        } else {
            Err(Error::domain(
                "chart inversion did not converge",
                res.min(best),
            ))
        }
    }

    /// `phi_x(y)`, a point of the affine tangent plane `x + T_x`.
    pub fn eval(&self, m: &Manifold, y: &[f64]) -> Result<Vec<f64>> {
        if y == self.frame.point.as_slice() {
            return Ok(self.frame.point.clone());
        }
        let u = self.coords(m, y)?;
        Ok(self.frame.affine(&u))
    }

    /// Central-difference Jacobian of `u -> psi(x + E u)` (columns per `u_j`).
    fn jacobian(&self, m: &Manifold, u: &[f64]) -> Result<Vec<Vec<f64>>> {
        let h = 1e-6;
        let mut cols = Vec::with_capacity(u.len());
        for j in 0..u.len() {
            let mut up = u.to_vec();
            let mut um = u.to_vec();
            up[j] += h;
            um[j] -= h;
            let a = m.retract(&self.frame.affine(&up))?;
            let b = m.retract(&self.frame.affine(&um))?;
            cols.push(a.iter().zip(&b).map(|(p, q)| (p - q) / (2.0 * h)).collect());
        }
        Ok(cols)
    }
}

fn gauss_newton_step(cols: &[Vec<f64>], r: &[f64], d: usize) -> Result<Vec<f64>> {
    let jtj = nalgebra::DMatrix::from_fn(d, d, |i, j| {
        cols[i]
            .iter()
            .zip(&cols[j])
            .map(|(a, b)| a * b)
            .sum::<f64>()
    });
    let jtr = nalgebra::DVector::from_fn(d, |i, _| {
        cols[i].iter().zip(r).map(|(a, b)| a * b).sum::<f64>()
    });
    let sol = jtj
        .lu()
        .solve(&jtr)
        .ok_or_else(|| Error::numeric("singular chart Jacobian"))?;
    Ok(sol.iter().copied().collect())
}
