//! Ambient norms on `R^N`: Euclidean, `l_p`, linear images of `l_p`, and the
//! Minkowski functional of the smooth convex body built from a flat-bottomed
//! convex profile.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::adaptive_gauss;
use crate::rng;
use crate::vecops::{all_finite, norm2, scale};

/// Left end of the flat part of the profile.
const PROFILE_KNEE: f64 = 0.75;

fn profile_integrand(u: f64) -> f64 {
    let v = u - PROFILE_KNEE;
    if v <= 0.0 {
        0.0
    } else {
        (-1.0 / v).exp()
    }
}

/// Unnormalised profile `P(t) = int_{3/4}^{max(t,3/4)} exp(-1/(u-3/4)) du`.
fn profile_unnormalised(t: f64) -> f64 {
    if t <= PROFILE_KNEE {
        return 0.0;
    }
    adaptive_gauss(profile_integrand, PROFILE_KNEE, t, 1e-14)
        .expect("profile integrand is smooth and bounded")
        .value
}

fn profile_normaliser() -> f64 {
    static P1: OnceLock<f64> = OnceLock::new();
    *P1.get_or_init(|| profile_unnormalised(1.0))
}

/// The convex profile: zero on `[0, 3/4]`, smooth, increasing after, and 1 at `t = 1`.
pub fn phi_profile_eval(t: f64) -> Result<f64> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::input(format!(
            "profile argument must be >= 0, got {t}"
        )));
    }
    Ok(phi(t))
}

fn phi(t: f64) -> f64 {
    if t <= PROFILE_KNEE {
        0.0
    } else if t == 1.0 {
        1.0
    } else {
        profile_unnormalised(t) / profile_normaliser()
    }
}

fn phi_prime(t: f64) -> f64 {
    profile_integrand(t) / profile_normaliser()
}

fn phi_second(t: f64) -> f64 {
    let v = t - PROFILE_KNEE;
    if v <= 0.0 {
        0.0
    } else {
        (-1.0 / v).exp() / (v * v) / profile_normaliser()
    }
}

/// The convex body `{x : sum_i phi(|x_i| / 2) <= 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexBodySpec {
    pub dim: usize,
}

impl ConvexBodySpec {
    pub fn new(dim: usize) -> Self {
        ConvexBodySpec { dim }
    }

    /// `Phi_body(x) = sum_i phi(|x_i| / 2)`.
    pub fn body_fn(&self, x: &[f64]) -> f64 {
        x.iter().map(|xi| phi(0.5 * xi.abs())).sum()
    }

    pub fn body_gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .map(|&xi| 0.5 * xi.signum() * phi_prime(0.5 * xi.abs()))
            .collect()
    }

    /// The Hessian of the body function is diagonal.
    pub fn body_hessian_diag(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .map(|&xi| 0.25 * phi_second(0.5 * xi.abs()))
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.body_fn(x) <= 1.0
    }

    /// Gauge `inf{t > 0 : x/t in B}` by bisection.
    ///
    /// `B` contains the Euclidean ball of radius 3/2 and sits inside `[-2,2]^N`,
    /// which brackets the answer between `|x|_2 / (2 sqrt N)` and `|x|_2 / 1.5`.
    pub fn gauge(&self, x: &[f64], rel_tol: f64) -> Result<f64> {
        let r = norm2(x);
        if r == 0.0 {
            return Ok(0.0);
        }
        let g = |t: f64| self.body_fn(&scale(x, 1.0 / t));
        let mut lo = r / (2.0 * (self.dim as f64).sqrt()) * (1.0 - 1e-12);
        let mut hi = r / 1.5;
        let mut expand = 0;
        while g(hi) > 1.0 {
            hi *= 2.0;
            expand += 1;
            if expand > 60 {
                return Err(Error::numeric("gauge bracket not found (upper)"));
            }
        }
        expand = 0;
        while g(lo) <= 1.0 {
            lo *= 0.5;
            expand += 1;
            if expand > 60 {
                return Err(Error::numeric("gauge bracket not found (lower)"));
            }
        }
        // invariant: g(lo) > 1 >= g(hi)
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= rel_tol * hi {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Serialised description of an ambient norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NormSpec {
    Euclidean,
    /// `l_p`, `p >= 1`; `p = inf` gives the max norm.
    Pnorm {
        #[serde(with = "exponent")]
        p: f64,
    },
    /// Minkowski functional of the body `{sum phi(|x_i|/2) <= 1}`.
    Minkowski {
        profile: String,
    },
    /// `x -> |A x|_p` for an invertible square matrix `A` (row-major rows).
    LinearPnorm {
        #[serde(with = "exponent")]
        p: f64,
        matrix: Vec<Vec<f64>>,
    },
}

/// `p` as a number, or the string `"inf"` (JSON has no infinity).
mod exponent {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(p: &f64, s: S) -> Result<S::Ok, S::Error> {
        if p.is_infinite() && *p > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*p)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(p) => Ok(p),
            Raw::Text(t) if matches!(t.as_str(), "inf" | "infinity" | "Inf") => Ok(f64::INFINITY),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("bad exponent `{t}`"))),
        }
    }
}

/// A norm on `R^dim`, ready for evaluation.
#[derive(Debug, Clone)]
pub struct Norm {
    dim: usize,
    spec: NormSpec,
    body: Option<ConvexBodySpec>,
    inverse: Option<Vec<Vec<f64>>>,
    /// Relative tolerance of the Minkowski bisection.
    pub gauge_tol: f64,
}

impl Norm {
    pub fn new(spec: NormSpec, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::input("norm dimension must be positive"));
        }
        let mut body = None;
        let mut inverse = None;
        match &spec {
            NormSpec::Euclidean => {}
            NormSpec::Pnorm { p } => {
                if !(*p >= 1.0) {
                    return Err(Error::input(format!("p-norm needs p >= 1, got {p}")));
                }
            }
            NormSpec::Minkowski { profile } => {
                if profile != "paper-phi" {
                    return Err(Error::input(format!("unknown profile `{profile}`")));
                }
                body = Some(ConvexBodySpec::new(dim));
            }
            NormSpec::LinearPnorm { p, matrix } => {
                if !(*p >= 1.0) {
                    return Err(Error::input(format!("p-norm needs p >= 1, got {p}")));
                }
                if matrix.len() != dim || matrix.iter().any(|r| r.len() != dim) {
                    return Err(Error::input("linear norm matrix must be dim x dim"));
                }
                let m = nalgebra::DMatrix::from_fn(dim, dim, |i, j| matrix[i][j]);
                let inv = m
                    .try_inverse()
                    .ok_or_else(|| Error::input("linear norm matrix is singular"))?;
                inverse = Some(
                    (0..dim)
                        .map(|i| (0..dim).map(|j| inv[(i, j)]).collect())
                        .collect(),
                );
            }
        }
        Ok(Norm {
            dim,
            spec,
            body,
            inverse,
            gauge_tol: 1e-13,
        })
    }

    pub fn euclidean(dim: usize) -> Self {
        Norm::new(NormSpec::Euclidean, dim).expect("euclidean norm is valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spec(&self) -> &NormSpec {
        &self.spec
    }

    pub fn body(&self) -> Option<&ConvexBodySpec> {
        self.body.as_ref()
    }

    /// Evaluates the norm, validating the input.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::input(format!(
                "expected a vector of length {}, got {}",
                self.dim,
                x.len()
            )));
        }
        if !all_finite(x) {
            return Err(Error::input("non-finite coordinates"));
        }
        match &self.body {
            Some(b) => b.gauge(x, self.gauge_tol),
            None => Ok(self.eval_unchecked(x)),
        }
    }

    /// Evaluation without validation, for hot loops on known-good input.
    /// The Minkowski variant falls back to the checked path.
    pub fn eval_unchecked(&self, x: &[f64]) -> f64 {
        match &self.spec {
            NormSpec::Euclidean => norm2(x),
            NormSpec::Pnorm { p } => pnorm(x.iter().copied(), *p),
            NormSpec::LinearPnorm { p, matrix } => pnorm(
                matrix
                    .iter()
                    .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()),
                *p,
            ),
            NormSpec::Minkowski { .. } => self
                .body
                .as_ref()
                .expect("minkowski norm has a body")
                .gauge(x, self.gauge_tol)
                .unwrap_or(f64::NAN),
        }
    }

    /// `|x - y|`.
    pub fn dist(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut buf = [0.0; 8];
        if x.len() <= 8 {
            for (k, (a, b)) in x.iter().zip(y).enumerate() {
                buf[k] = a - b;
            }
            self.eval_unchecked(&buf[..x.len()])
        } else {
            self.eval_unchecked(&crate::vecops::sub(x, y))
        }
    }

    /// The closed-form Euclidean equivalence constant where one is known.
    pub fn analytic_k(&self) -> Option<f64> {
        match &self.spec {
            NormSpec::Euclidean => Some(1.0),
            NormSpec::Pnorm { p } => {
                let e = (0.5 - 1.0 / p).abs();
                Some((self.dim as f64).powf(e))
            }
            _ => None,
        }
    }

    /// Upper bound on the dual norm `sup_{|x| <= 1} <w, x>`; exact except for
    /// the Minkowski body, where `B in [-2,2]^N` gives `2 |w|_1`.
    pub fn dual_norm_upper(&self, w: &[f64]) -> f64 {
        match &self.spec {
            NormSpec::Euclidean => norm2(w),
            NormSpec::Pnorm { p } => pnorm(w.iter().copied(), conjugate(*p)),
            NormSpec::LinearPnorm { p, .. } => {
                let inv = self
                    .inverse
                    .as_ref()
                    .expect("inverse computed at construction");
                // <w, x> = <A^{-T} w, A x>
                let v = (0..self.dim).map(|j| (0..self.dim).map(|i| inv[i][j] * w[i]).sum::<f64>());
                pnorm(v, conjugate(*p))
            }
            NormSpec::Minkowski { .. } => 2.0 * w.iter().map(|x| x.abs()).sum::<f64>(),
        }
    }
}

fn conjugate(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

fn pnorm(it: impl Iterator<Item = f64>, p: f64) -> f64 {
    if p.is_infinite() {
        it.fold(0.0, |m, v| m.max(v.abs()))
    } else if p == 1.0 {
        it.map(f64::abs).sum()
    } else if p == 2.0 {
        it.map(|v| v * v).sum::<f64>().sqrt()
    } else {
        it.map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// Sampled equivalence constant `K` with the points attaining the extremes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceConstant {
    pub k: f64,
    /// Unit-Euclidean point with the smallest norm.
    pub witness_lower: Vec<f64>,
    /// Unit-Euclidean point with the largest norm.
    pub witness_upper: Vec<f64>,
}

/// `K = max over unit-sphere samples of max(|x|, 1/|x|)`, a lower bound on the
/// optimal constant. Sample `i` depends only on `(seed, i)`, so estimates with
/// a common seed are monotone in `sample_count`.
pub fn estimate_k(norm: &Norm, sample_count: usize, seed: u64) -> Result<EquivalenceConstant> {
    if sample_count == 0 {
        return Err(Error::input("sample_count must be >= 1"));
    }
    let tag = rng::purpose("estimate_k");
    let mut lo = (f64::INFINITY, Vec::new());
    let mut hi = (0.0, Vec::new());
    for i in 0..sample_count as u64 {
        let mut r = rng::stream(seed, tag, i);
        let x = rng::unit_sphere(&mut r, norm.dim());
        let v = norm.eval(&x)?;
        if v < lo.0 {
            lo = (v, x.clone());
        }
        if v > hi.0 {
            hi = (v, x);
        }
    }
    Ok(EquivalenceConstant {
        k: hi.0.max(1.0 / lo.0).max(1.0),
        witness_lower: lo.1,
        witness_upper: hi.1,
    })
}

/// The constant used downstream: analytic for `l_p`, sampled otherwise.
pub fn equivalence_k(norm: &Norm, sample_count: usize, seed: u64) -> Result<f64> {
    match norm.analytic_k() {
        Some(k) => Ok(k),
        None => Ok(estimate_k(norm, sample_count, seed)?.k),
    }
}
