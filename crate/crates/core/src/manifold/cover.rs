use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ChartInverse, Manifold, TangentFrame};
use crate::error::{Error, Result};
use crate::rng;
use crate::vecops::{axpy, dist2, norm2, sub};

/// A sampled Lipschitz constant with the pair attaining it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipSample {
    pub value: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl LipSample {
    fn none(n: usize) -> Self {
        LipSample {
            value: 0.0,
            x: vec![0.0; n],
            y: vec![0.0; n],
        }
    }

    fn offer(&mut self, v: f64, x: &[f64], y: &[f64]) {
        if v > self.value {
            self.value = v;
            self.x = x.to_vec();
            self.y = y.to_vec();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoverOptions {
    /// Size of the low-discrepancy sample swept by the greedy loop.
    pub samples: usize,
    /// A sample counts as covered when its chart coordinates satisfy
    /// `|u|_inf < inner_fraction * halfwidth`. Values below 1 leave overlap
    /// between neighbouring patches.
    pub inner_fraction: f64,
    /// Pair counts for the sampled constants `L_n` and `J_n`.
    pub lip_pairs: usize,
    pub seed: u64,
}

impl Default for CoverOptions {
    fn default() -> Self {
        CoverOptions {
            samples: 4000,
            inner_fraction: 1.0,
            lip_pairs: 2000,
            seed: 1,
        }
    }
}

/// Finite cover of `M` intersected with the ball of radius `n^2` by chart patches
/// `U_i = psi(x_i + E_i(int C))`, `C = [-h, h]^d`.
#[derive(Debug, Clone)]
pub struct CoverData {
    pub n: usize,
    pub radius: f64,
    pub halfwidth: f64,
    pub charts: Vec<ChartInverse>,
    pub l_n: LipSample,
    pub j_n: LipSample,
    pub delta_n: f64,
}

impl CoverData {
    pub fn m(&self) -> usize {
        self.charts.len()
    }

    pub fn centers(&self) -> impl Iterator<Item = &[f64]> {
        self.charts.iter().map(|c| c.center())
    }

    /// `max(1, sampled L_n)`.
    pub fn l(&self) -> f64 {
        self.l_n.value.max(1.0)
    }

    /// `max(1, sampled J_n)`.
    pub fn j(&self) -> f64 {
        self.j_n.value.max(1.0)
    }

    /// Euclidean radius outside which a point cannot lie in the patch of a center.
    pub fn cull_radius(&self, m: &Manifold) -> f64 {
        2.0 * self.halfwidth * (m.intrinsic_dim() as f64).sqrt()
    }

    /// Charts whose open patch contains `y`, with the chart coordinates of `y`.
    pub fn locate(&self, m: &Manifold, y: &[f64]) -> Vec<(usize, Vec<f64>)> {
        let cull = self.cull_radius(m);
        let mut out = Vec::new();
        for (i, c) in self.charts.iter().enumerate() {
            if dist2(c.center(), y) > cull {
                continue;
            }
            if let Ok(u) = c.coords(m, y) {
                if u.iter().all(|v| v.abs() < self.halfwidth) {
                    out.push((i, u));
                }
            }
        }
        out
    }

    /// Re-checks coverage on a point set; returns the uncovered points.
    pub fn uncovered(&self, m: &Manifold, points: &[Vec<f64>]) -> Vec<Vec<f64>> {
        points
            .iter()
            .filter(|p| self.locate(m, p).is_empty())
            .cloned()
            .collect()
    }
}

fn validate_center(m: &Manifold, chart: &ChartInverse, h: f64, idx: usize) -> Result<()> {
    let d = m.intrinsic_dim();
    let mut probes: Vec<Vec<f64>> = Vec::new();
    for mask in 0..(1usize << d) {
        probes.push(
            (0..d)
                .map(|j| if mask >> j & 1 == 1 { h } else { -h })
                .collect(),
        );
    }
    for j in 0..d {
        let mut e = vec![0.0; d];
        e[j] = h;
        probes.push(e.clone());
        e[j] = -h;
        probes.push(e);
    }
    let fail = |reason: String| Error::Construction {
        center: idx,
        reason,
    };
    for u in &probes {
        let p = chart.frame.affine(u);
        let y = m
            .retract(&p)
            .map_err(|e| fail(format!("cube corner leaves the tube: {e}")))?;
        let back = chart
            .coords(m, &y)
            .map_err(|e| fail(format!("chart inversion failed: {e}")))?;
        let err = norm2(&sub(&back, u));
        if err > 1e-8 {
            return Err(fail(format!("round trip error {err:.3e} at u = {u:?}")));
        }
    }
    // Lip((psi - I)|_V) <= 1/2, sampled on neighbouring nodes of a lattice in the cube
    const STEPS: usize = 8;
    let node = |idx: &[usize]| -> Vec<f64> {
        idx.iter()
            .map(|&i| h * (2.0 * i as f64 / STEPS as f64 - 1.0))
            .collect()
    };
    let total = (STEPS + 1).pow(d as u32);
    let mut lattice = Vec::with_capacity(total);
    for flat in 0..total {
        let mut idx = Vec::with_capacity(d);
        let mut r = flat;
        for _ in 0..d {
            idx.push(r % (STEPS + 1));
            r /= STEPS + 1;
        }
        let p = chart.frame.affine(&node(&idx));
        let y = m
            .retract(&p)
            .map_err(|e| fail(format!("cube point leaves the tube: {e}")))?;
        lattice.push((sub(&y, &p), p));
    }
    let mut stride = 1;
    for _ in 0..d {
        for flat in 0..total {
            if (flat / stride) % (STEPS + 1) == STEPS {
                continue;
            }
            let (da, pa) = &lattice[flat];
            let (db, pb) = &lattice[flat + stride];
            let q = norm2(&sub(da, db)) / norm2(&sub(pa, pb));
            if q > 0.5 {
                return Err(fail(format!(
                    "psi - I has sampled Lipschitz quotient {q:.3} > 1/2 on the cube"
                )));
            }
        }
        stride *= STEPS + 1;
    }
    Ok(())
}

/// Slides the new patch so that `y` sits near its edge, choosing the shift that
/// reaches the most still-open samples. Scoring uses tangent coordinates.
fn best_shifted_frame(
    m: &Manifold,
    y: &[f64],
    inner: f64,
    cull: f64,
    rest: &[Vec<f64>],
    open: &mut [bool],
) -> Result<TangentFrame> {
    let d = m.intrinsic_dim();
    let base = m.tangent_frame(y)?;
    let near: Vec<usize> = (0..rest.len())
        .filter(|&i| open[i] && dist2(&rest[i], y) <= 2.0 * cull)
        .collect();
    let mut best: Option<(usize, TangentFrame)> = None;
    for code in 0..3usize.pow(d as u32) {
        let mut c = code;
        let shift: Vec<f64> = (0..d)
            .map(|_| {
                let s = (c % 3) as f64 - 1.0;
                c /= 3;
                0.8 * inner * s
            })
            .collect();
        let Ok(center) = m.retract(&base.affine(&shift)) else {
            continue;
        };
        let Ok(frame) = m.tangent_frame(&center) else {
            continue;
        };
        let inside = |p: &[f64]| {
            frame
                .coords(&sub(p, &frame.point))
                .iter()
                .all(|v| v.abs() < 0.95 * inner)
        };
        if !inside(y) {
            continue;
        }
        let score = near.iter().filter(|&&i| inside(&rest[i])).count();
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, frame));
        }
    }
    Ok(best.map(|(_, f)| f).unwrap_or(base))
}

/// Greedy first-fit cover of `M` within the ball of radius `n^2` about the base point.
pub fn build_cover(
    m: &Manifold,
    n: usize,
    halfwidth: f64,
    opts: &CoverOptions,
) -> Result<CoverData> {
    if n == 0 {
        return Err(Error::input("n must be >= 1"));
    }
    if !(halfwidth > 0.0) {
        return Err(Error::input("cube halfwidth must be positive"));
    }
    if !(opts.inner_fraction > 0.0 && opts.inner_fraction <= 1.0) {
        return Err(Error::input("inner_fraction must lie in (0, 1]"));
    }
    let d = m.intrinsic_dim();
    let radius = (n * n) as f64;
    let chart_radius = 3.0 * halfwidth * (d as f64).sqrt();
    let mut samples = m.sample_ball(radius, opts.samples);
    // sweep outward from the base point so that each new patch borders covered ground
    let x0 = m.basepoint().to_vec();
    samples.sort_by(|a, b| dist2(a, &x0).total_cmp(&dist2(b, &x0)));
    let mut cover = CoverData {
        n,
        radius,
        halfwidth,
        charts: Vec::new(),
        l_n: LipSample::none(m.ambient_dim()),
        j_n: LipSample::none(m.ambient_dim()),
        delta_n: m.delta_n(),
    };
    let inner = opts.inner_fraction * halfwidth;
    let cull = cover.cull_radius(m);
    // the base point opens the first chart so that x0 lies deep inside a patch
    let mut queue = vec![m.basepoint().to_vec()];
    queue.extend(samples);
    let mut open = vec![true; queue.len()];
    for (k, y) in queue.iter().enumerate() {
        if !open[k] {
            continue;
        }
        let covered = cover.charts.iter().any(|c| {
            dist2(c.center(), y) <= cull
                && c.coords(m, y)
                    .map(|u| u.iter().all(|v| v.abs() < inner))
                    .unwrap_or(false)
        });
        if covered {
            open[k] = false;
            continue;
        }
        let frame = if k == 0 {
            m.tangent_frame(y)?
        } else {
            best_shifted_frame(m, y, inner, cull, &queue[k..], &mut open[k..])?
        };
        let chart = ChartInverse::new(frame, chart_radius);
        validate_center(m, &chart, halfwidth, cover.charts.len())?;
        cover.charts.push(chart);
    }
    log::debug!("cover n={n}: m = {}", cover.charts.len());
    cover.l_n = sample_retraction_lip(m, radius, opts.lip_pairs, opts.seed)?;
    cover.j_n = sample_chart_lip(m, &cover, opts.lip_pairs, opts.seed);
    Ok(cover)
}

/// Sampled Euclidean Lipschitz constant of `psi` on the tube of radius
/// `2 delta_n` within the ball of radius `radius + 2 delta_n`.
pub fn sample_retraction_lip(
    m: &Manifold,
    radius: f64,
    pairs: usize,
    seed: u64,
) -> Result<LipSample> {
    let dn = m.delta_n();
    let tag = rng::purpose("retraction-lip");
    let base = m.random_points(radius + 2.0 * dn, pairs, seed, "retraction-lip-base");
    let mut best = LipSample::none(m.ambient_dim());
    let mut far: Vec<Vec<f64>> = Vec::new();
    for (i, p) in base.iter().enumerate() {
        let mut r = rng::stream(seed, tag, i as u64);
        let frame = m.tangent_frame(p)?;
        let normals = m.normals(&frame);
        let u: f64 = r.gen();
        let mag = 2.0 * dn * (1.0 - u * u) * (1.0 - 1e-9);
        let dir = rng::unit_sphere(&mut r, normals.len());
        let mut t = p.clone();
        for (nv, c) in normals.iter().zip(&dir) {
            t = axpy(&t, mag * c, nv);
        }
        let step = rng::unit_sphere(&mut r, m.ambient_dim());
        let t2 = axpy(&t, 1e-5 * dn, &step);
        if let (Ok(a), Ok(b)) = (m.retract(&t), m.retract(&t2)) {
            best.offer(dist2(&a, &b) / dist2(&t, &t2), &t, &t2);
        }
        far.push(t);
    }
    for w in far.windows(2) {
        if let (Ok(a), Ok(b)) = (m.retract(&w[0]), m.retract(&w[1])) {
            best.offer(dist2(&a, &b) / dist2(&w[0], &w[1]), &w[0], &w[1]);
        }
    }
    Ok(best)
}

/// Sampled Euclidean Lipschitz constant of the chart inverses on their patches.
pub fn sample_chart_lip(m: &Manifold, cover: &CoverData, pairs: usize, seed: u64) -> LipSample {
    let d = m.intrinsic_dim();
    let h = cover.halfwidth;
    let per = (pairs / cover.m().max(1)).max(16);
    let tag = rng::purpose("chart-lip");
    let mut best = LipSample::none(m.ambient_dim());
    for (i, c) in cover.charts.iter().enumerate() {
        for k in 0..per {
            let mut r = rng::stream(seed, tag, (i * per + k) as u64);
            let u: Vec<f64> = (0..d).map(|_| (2.0 * r.gen::<f64>() - 1.0) * h).collect();
            let close = k % 2 == 0;
            let v: Vec<f64> = if close {
                let dir = rng::unit_sphere(&mut r, d);
                let t = if k % 4 == 0 { 1e-6 * h } else { 0.05 * h };
                u.iter()
                    .zip(&dir)
                    .map(|(a, b)| (a + t * b).clamp(-h, h))
                    .collect()
            } else {
                (0..d).map(|_| (2.0 * r.gen::<f64>() - 1.0) * h).collect()
            };
            let (Ok(a), Ok(b)) = (
                m.retract(&c.frame.affine(&u)),
                m.retract(&c.frame.affine(&v)),
            ) else {
                continue;
            };
            let den = dist2(&a, &b);
            if den > 0.0 {
                best.offer(norm2(&sub(&u, &v)) / den, &a, &b);
            }
        }
    }
    best
}
