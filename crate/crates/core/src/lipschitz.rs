//! Lipschitz functions vanishing at a base point, lower-bound estimates of their
//! constants, McShane extension and seeded test suites.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::Manifold;
use crate::normed_space::Norm;
use crate::rng;
use crate::vecops::axpy;

static NEXT_TOKEN: AtomicU64 = AtomicU64::new(1);

/// Where a function may be evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainTag {
    Ambient,
    ManifoldOnly,
}

type Eval = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A real function re-based so that `f(x0) = 0` exactly.
#[derive(Clone)]
pub struct LipschitzFunction {
    raw: Eval,
    offset: f64,
    basepoint: Vec<f64>,
    claimed: Option<f64>,
    domain: DomainTag,
    token: u64,
    label: String,
}

impl fmt::Debug for LipschitzFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LipschitzFunction")
            .field("label", &self.label)
            .field("claimed", &self.claimed)
            .field("domain", &self.domain)
            .finish()
    }
}

impl LipschitzFunction {
    /// Wraps `f` and subtracts `f(x0)`.
    pub fn new(
        label: impl Into<String>,
        basepoint: &[f64],
        claimed: Option<f64>,
        domain: DomainTag,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        let raw: Eval = Arc::new(f);
        let offset = raw(basepoint);
        LipschitzFunction {
            raw,
            offset,
            basepoint: basepoint.to_vec(),
            claimed,
            domain,
            token: NEXT_TOKEN.fetch_add(1, Ordering::Relaxed),
            label: label.into(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.raw)(x) - self.offset
    }

    pub fn basepoint(&self) -> &[f64] {
        &self.basepoint
    }

    pub fn claimed(&self) -> Option<f64> {
        self.claimed
    }

    pub fn domain(&self) -> DomainTag {
        self.domain
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Unique per constructed function; caches key on it.
    pub fn token(&self) -> u64 {
        self.token
    }

    /// `a f`.
    pub fn scaled(&self, a: f64) -> Self {
        combination(&[(a, self.clone())]).expect("single term")
    }

    /// `x -> clamp(f(x), -c, c)`; still vanishes at the base point.
    pub fn clamped(&self, c: f64) -> Self {
        let g = self.clone();
        LipschitzFunction::new(
            format!("clamp({}, {c})", self.label),
            &self.basepoint,
            self.claimed,
            self.domain,
            move |x| g.eval(x).clamp(-c, c),
        )
    }
}

/// `sum a_k f_k`; all terms must share a base point.
pub fn combination(terms: &[(f64, LipschitzFunction)]) -> Result<LipschitzFunction> {
    let first = terms
        .first()
        .ok_or_else(|| Error::input("empty combination"))?;
    let x0 = first.1.basepoint.clone();
    if terms.iter().any(|(_, f)| f.basepoint != x0) {
        return Err(Error::input(
            "combined functions have different base points",
        ));
    }
    let claimed = terms
        .iter()
        .map(|(a, f)| f.claimed.map(|l| a.abs() * l))
        .sum::<Option<f64>>();
    let domain = if terms
        .iter()
        .any(|(_, f)| f.domain == DomainTag::ManifoldOnly)
    {
        DomainTag::ManifoldOnly
    } else {
        DomainTag::Ambient
    };
    let label = terms
        .iter()
        .map(|(a, f)| format!("{a}*{}", f.label))
        .collect::<Vec<_>>()
        .join(" + ");
    let owned = terms.to_vec();
    Ok(LipschitzFunction::new(
        label,
        &x0,
        claimed,
        domain,
        move |x| owned.iter().map(|(a, f)| a * f.eval(x)).sum(),
    ))
}

/// A lower bound on `Lip(f)` with the pair that attains it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipEstimate {
    pub value: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub sample_count: usize,
    pub seed: u64,
}

impl LipEstimate {
    /// Recomputes the quotient at the stored witness.
    pub fn recompute(&self, f: &LipschitzFunction, norm: &Norm) -> f64 {
        quotient(
            f.eval(&self.x),
            f.eval(&self.y),
            norm.dist(&self.x, &self.y),
        )
    }
}

fn quotient(fx: f64, fy: f64, d: f64) -> f64 {
    if d > 0.0 {
        (fx - fy).abs() / d
    } else {
        0.0
    }
}

/// Sets up to this size are searched exhaustively.
pub const ALL_PAIRS_LIMIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LipOptions {
    pub seed: u64,
    /// Random pairs drawn when the set is too large for all pairs.
    pub pairs: usize,
    pub refine_rounds: usize,
    pub refine_samples: usize,
}

impl Default for LipOptions {
    fn default() -> Self {
        LipOptions {
            seed: 0,
            pairs: 400_000,
            refine_rounds: 3,
            refine_samples: 64,
        }
    }
}

type Best = (f64, usize, usize);

// larger quotient wins, ties go to the lexicographically first pair
fn better(a: Best, b: Best) -> Best {
    if b.0 > a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) {
        b
    } else {
        a
    }
}

/// Exhaustive `max |v_i - v_j| / |p_i - p_j|` with the attaining pair
/// (first pair in lexicographic order on ties). `None` when all points coincide.
pub fn max_quotient(
    points: &[Vec<f64>],
    values: &[f64],
    norm: &Norm,
) -> Option<(f64, usize, usize)> {
    let n = points.len();
    let start: Best = (-1.0, usize::MAX, usize::MAX);
    let best = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut b = start;
            for j in i + 1..n {
                let d = norm.dist(&points[i], &points[j]);
                if d > 0.0 {
                    b = better(b, (quotient(values[i], values[j], d), i, j));
                }
            }
            b
        })
        .reduce(|| start, better);
    (best.1 != usize::MAX).then_some(best)
}

/// Maximum difference quotient of `f` over pairs of `points`.
///
/// Sets of at most [`ALL_PAIRS_LIMIT`] points are searched exhaustively.
/// Larger sets use seeded pair sampling and then Gaussian refinement around
/// the best pair. `project` maps perturbed points back to the domain; without
/// it refinement only runs for ambient functions.
pub fn estimate_lip_with(
    f: &LipschitzFunction,
    points: &[Vec<f64>],
    norm: &Norm,
    opts: &LipOptions,
    project: Option<&(dyn Fn(&[f64]) -> Option<Vec<f64>> + Sync)>,
) -> Result<LipEstimate> {
    let n = points.len();
    if n < 2 {
        return Err(Error::input(
            "need at least two points to estimate a Lipschitz constant",
        ));
    }
    let values: Vec<f64> = points.par_iter().map(|p| f.eval(p)).collect();
    let start: Best = (-1.0, usize::MAX, usize::MAX);
    let (mut value, i, j, count) = if n <= ALL_PAIRS_LIMIT {
        let best = max_quotient(points, &values, norm).unwrap_or(start);
        (best.0, best.1, best.2, n * (n - 1) / 2)
    } else {
        let tag = rng::purpose("lip-pairs");
        let chunk = 1024;
        let chunks = opts.pairs.div_ceil(chunk);
        let best = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut r = rng::stream(opts.seed, tag, c as u64);
                let mut b = start;
                for _ in 0..chunk {
                    let i = r.gen_range(0..n);
                    let j = r.gen_range(0..n);
                    let (i, j) = (i.min(j), i.max(j));
                    let d = norm.dist(&points[i], &points[j]);
                    if d > 0.0 {
                        b = better(b, (quotient(values[i], values[j], d), i, j));
                    }
                }
                b
            })
            .reduce(|| start, better);
        (best.0, best.1, best.2, chunks * chunk)
    };
    if i == usize::MAX {
        return Err(Error::input("all points coincide"));
    }
    let mut x = points[i].clone();
    let mut y = points[j].clone();
    let mut count = count;
    let may_refine = project.is_some() || f.domain == DomainTag::Ambient;
    if n > ALL_PAIRS_LIMIT && may_refine && opts.refine_rounds > 0 {
        let tag = rng::purpose("lip-refine");
        let mut sigma = 0.25 * crate::vecops::dist2(&x, &y);
        for round in 0..opts.refine_rounds {
            for k in 0..opts.refine_samples {
                let mut r = rng::stream(opts.seed, tag, (round * opts.refine_samples + k) as u64);
                let gx = rng::gaussian_vec(&mut r, x.len());
                let gy = rng::gaussian_vec(&mut r, y.len());
                let mut cx = axpy(&x, sigma, &gx);
                let mut cy = axpy(&y, sigma, &gy);
                if let Some(p) = project {
                    match (p(&cx), p(&cy)) {
                        (Some(a), Some(b)) => {
                            cx = a;
                            cy = b;
                        }
                        _ => continue,
                    }
                }
                let d = norm.dist(&cx, &cy);
                let q = quotient(f.eval(&cx), f.eval(&cy), d);
                count += 1;
                if q > value {
                    value = q;
                    x = cx;
                    y = cy;
                }
            }
            sigma *= 0.5;
        }
    }
    Ok(LipEstimate {
        value,
        x,
        y,
        sample_count: count,
        seed: opts.seed,
    })
}

pub fn estimate_lip(
    f: &LipschitzFunction,
    points: &[Vec<f64>],
    norm: &Norm,
) -> Result<LipEstimate> {
    estimate_lip_with(f, points, norm, &LipOptions::default(), None)
}

/// `x -> min_p (f(p) + L |x - p|)`, re-based at `basepoint`.
pub fn mcshane_extend(
    data: &[(Vec<f64>, f64)],
    lip: f64,
    norm: &Norm,
    basepoint: &[f64],
) -> Result<LipschitzFunction> {
    if data.is_empty() {
        return Err(Error::input(
            "McShane extension needs at least one data point",
        ));
    }
    if !(lip >= 0.0 && lip.is_finite()) {
        return Err(Error::input(format!(
            "Lipschitz bound {lip} must be finite and >= 0"
        )));
    }
    for (a, (p, fp)) in data.iter().enumerate() {
        for (b, (q, fq)) in data.iter().enumerate().skip(a + 1) {
            let d = norm.dist(p, q);
            if (fp - fq).abs() > lip * d * (1.0 + 1e-12) + 1e-15 {
                return Err(Error::input(format!(
                    "data pair ({a}, {b}) violates the bound: |{fp} - {fq}| > {lip} * {d}"
                )));
            }
        }
    }
    let data = data.to_vec();
    let norm = norm.clone();
    Ok(LipschitzFunction::new(
        format!("mcshane({} anchors, L={lip})", data.len()),
        basepoint,
        Some(lip),
        DomainTag::Ambient,
        move |x| {
            data.iter()
                .map(|(p, v)| v + lip * norm.dist(x, p))
                .fold(f64::INFINITY, f64::min)
        },
    ))
}

/// Seeded description of a test suite; the functions are regenerated from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteSpec {
    pub seed: u64,
    pub count: usize,
    #[serde(default = "default_anchors")]
    pub anchors: usize,
    /// Anchors are drawn from `M` within this distance of the base point.
    #[serde(default = "default_anchor_radius")]
    pub radius: f64,
}

fn default_anchors() -> usize {
    8
}

fn default_anchor_radius() -> f64 {
    2.0
}

/// Coordinate functionals scaled to norm one, then `|x - x0|`, then McShane
/// extensions of seeded data on `M`, truncated to `spec.count` members.
pub fn random_lip_suite(
    spec: &SuiteSpec,
    m: &Manifold,
    norm: &Norm,
) -> Result<Vec<LipschitzFunction>> {
    if spec.count == 0 {
        return Err(Error::input("suite count must be >= 1"));
    }
    let n = m.ambient_dim();
    if norm.dim() != n {
        return Err(Error::input("norm and manifold dimensions differ"));
    }
    let x0 = m.basepoint().to_vec();
    let mut out = Vec::with_capacity(spec.count);
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        let c = 1.0 / norm.dual_norm_upper(&e);
        out.push(LipschitzFunction::new(
            format!("coord{i}"),
            &x0,
            Some(1.0),
            DomainTag::Ambient,
            move |x| c * x[i],
        ));
    }
    {
        let norm = norm.clone();
        let x0c = x0.clone();
        out.push(LipschitzFunction::new(
            "dist_x0",
            &x0,
            Some(1.0),
            DomainTag::Ambient,
            move |x| norm.dist(x, &x0c),
        ));
    }
    let tag = rng::purpose("suite");
    let mut k = 0u64;
    while out.len() < spec.count {
        let mut r = rng::stream(spec.seed, tag, k);
        let pts = m.random_points(
            spec.radius,
            spec.anchors.max(1),
            spec.seed ^ k,
            "suite-anchors",
        );
        let mut data: Vec<(Vec<f64>, f64)> = vec![(x0.clone(), 0.0)];
        for p in pts {
            if data.iter().all(|(q, _)| norm.dist(&p, q) > 1e-9) {
                data.push((p, r.gen::<f64>() * 2.0 - 1.0));
            }
        }
        let mut q = 0.0f64;
        for (a, (p, fp)) in data.iter().enumerate() {
            for (pq, fq) in data.iter().skip(a + 1) {
                q = q.max((fp - fq).abs() / norm.dist(p, pq));
            }
        }
        k += 1;
        if q <= 0.0 {
            continue;
        }
        for d in &mut data {
            d.1 /= q;
        }
        let mut f = mcshane_extend(&data, 1.0, norm, &x0)?;
        f.label = format!("suite{}", k - 1);
        out.push(f);
    }
    out.truncate(spec.count);
    Ok(out)
}

/// Checks the claimed bound against a sampled quotient.
pub fn claim_holds(f: &LipschitzFunction, est: &LipEstimate) -> bool {
    f.claimed.is_none_or(|l| est.value <= l * (1.0 + 1e-9))
}

/// `f(x) - f(y)` over `|x - y|` for each consecutive pair of a path; used by
/// quick local checks.
pub fn path_quotients(f: &LipschitzFunction, path: &[Vec<f64>], norm: &Norm) -> Vec<f64> {
    path.windows(2)
        .map(|w| quotient(f.eval(&w[0]), f.eval(&w[1]), norm.dist(&w[0], &w[1])))
        .collect()
}
