//! Partition of unity, gluing, flattening, and the assembled operators
//! `Q_n'`, `Q_n` and `Gamma_n = Phi_n Q_n`.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interpolation::{
    build_pi, chart_gradient_modulus, retraction_derivative_modulus, FiniteRankChartOperator,
    ModulusOptions, VertexIndex,
};
use crate::lipschitz::{combination, max_quotient, random_lip_suite, LipschitzFunction, SuiteSpec};
use crate::manifold::{build_cover, CoverData, CoverOptions, LipSample, Manifold};
use crate::mollification::{
    kernel_constants, DeltaCalibration, Smoothed, SmoothingOperator, SmoothingOptions,
};
use crate::normed_space::{equivalence_k, Norm};
use crate::report::{refs, BoundReport};
use crate::rng;
use crate::vecops::{dist2, fmt_point};

/// `3t^2 - 2t^3` on `[0, 1]`, clamped outside.
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Seeded points of `M` within `radius` of the base point, each followed by
/// companions walked a distance `t` along a random tangent direction for each
/// `t` in `near`. Companions leaving the ball are dropped.
pub fn probe_set(
    m: &Manifold,
    radius: f64,
    count: usize,
    seed: u64,
    tag: &str,
    near: &[f64],
) -> Vec<Vec<f64>> {
    let base = m.random_points(radius, count, seed, tag);
    let purpose = rng::purpose(tag);
    let d = m.intrinsic_dim();
    let x0 = m.basepoint();
    let mut out = Vec::with_capacity(base.len() * (1 + near.len()));
    for (k, p) in base.into_iter().enumerate() {
        let mut r = rng::stream(seed, purpose, 1 << 40 | k as u64);
        let frame = m.tangent_frame(&p).ok();
        out.push(p.clone());
        let Some(frame) = frame else { continue };
        for &t in near {
            let dir = rng::unit_sphere(&mut r, d);
            if let Ok(q) = m.walk(&frame, &dir, t) {
                if dist2(&q, x0) <= radius && q != p {
                    out.push(q);
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionOptions {
    /// Base points for the sampled `H`; each gets two close companions.
    pub samples: usize,
    pub seed: u64,
    pub inflation: f64,
}

impl Default for PartitionOptions {
    fn default() -> Self {
        PartitionOptions {
            samples: 300,
            seed: 11,
            inflation: 1.1,
        }
    }
}

/// `alpha_i = beta_i / sum_j beta_j`, with `beta_i` a product of smoothsteps of
/// the chart coordinates: 1 on the inner half-cube, 0 on the boundary of `C`.
#[derive(Debug, Clone)]
pub struct PartitionOfUnity {
    cover: CoverData,
    manifold: Manifold,
    pub h_sample: LipSample,
    /// `max(1, sampled H)`.
    pub h: f64,
    pub h_inflated: f64,
}

/// Nonzero weight of chart `index` at a point, with its chart coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Weight {
    pub index: usize,
    pub alpha: f64,
    pub u: Vec<f64>,
}

impl PartitionOfUnity {
    pub fn cover(&self) -> &CoverData {
        &self.cover
    }

    pub fn m(&self) -> usize {
        self.cover.m()
    }

    fn beta(&self, u: &[f64]) -> f64 {
        let hw = self.cover.halfwidth;
        u.iter()
            .map(|v| smoothstep((hw - v.abs()) / (0.5 * hw)))
            .product()
    }

    /// All nonzero `alpha_i(y)`, by increasing chart index.
    pub fn weights(&self, y: &[f64]) -> Result<Vec<Weight>> {
        let mut w: Vec<Weight> = self
            .cover
            .locate(&self.manifold, y)
            .into_iter()
            .map(|(index, u)| Weight {
                index,
                alpha: self.beta(&u),
                u,
            })
            .filter(|w| w.alpha > 0.0)
            .collect();
        let total: f64 = w.iter().map(|w| w.alpha).sum();
        if !(total > 0.0) {
            return Err(Error::domain(
                "coverage gap: no patch weight at this point",
                dist2(y, self.manifold.basepoint()),
            ));
        }
        for x in &mut w {
            x.alpha /= total;
        }
        Ok(w)
    }

    /// `alpha_i(y)`; zero outside `U_i`.
    pub fn alpha(&self, i: usize, y: &[f64]) -> Result<f64> {
        Ok(self
            .weights(y)?
            .into_iter()
            .find(|w| w.index == i)
            .map_or(0.0, |w| w.alpha))
    }
}

fn sparse_gap(a: &[Weight], b: &[Weight]) -> f64 {
    let mut gap = 0.0f64;
    for w in a {
        let other = b
            .iter()
            .find(|v| v.index == w.index)
            .map_or(0.0, |v| v.alpha);
        gap = gap.max((w.alpha - other).abs());
    }
    for v in b {
        if !a.iter().any(|w| w.index == v.index) {
            gap = gap.max(v.alpha);
        }
    }
    gap
}

/// Builds the partition for `cover` and samples its Lipschitz constant in `norm`.
pub fn build_partition(
    m: &Manifold,
    cover: CoverData,
    norm: &Norm,
    opts: &PartitionOptions,
) -> Result<PartitionOfUnity> {
    let mut pou = PartitionOfUnity {
        cover,
        manifold: m.clone(),
        h_sample: LipSample {
            value: 0.0,
            x: m.basepoint().to_vec(),
            y: m.basepoint().to_vec(),
        },
        h: 1.0,
        h_inflated: opts.inflation,
    };
    if pou.m() == 0 {
        return Err(Error::input("cover has no charts"));
    }
    let hw = pou.cover.halfwidth;
    let mut points = probe_set(
        m,
        pou.cover.radius,
        opts.samples,
        opts.seed,
        "partition",
        &[0.02 * hw, 0.2 * hw],
    );
    points.extend(pou.cover.centers().map(|c| c.to_vec()));
    let weights: Vec<Vec<Weight>> = points
        .par_iter()
        .map(|p| {
            pou.weights(p).map_err(|_| {
                let nearest = pou
                    .cover
                    .centers()
                    .enumerate()
                    .min_by(|a, b| dist2(a.1, p).total_cmp(&dist2(b.1, p)))
                    .map_or(0, |(i, _)| i);
                Error::Construction {
                    center: nearest,
                    reason: format!(
                        "coverage gap at {}; rebuild the cover with more overlap",
                        fmt_point(p)
                    ),
                }
            })
        })
        .collect::<Result<_>>()?;
    if pou.m() > 1 {
        let n = points.len();
        let best = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut b = (0.0f64, i, i);
                for j in i + 1..n {
                    let d = norm.dist(&points[i], &points[j]);
                    if d > 0.0 {
                        let q = sparse_gap(&weights[i], &weights[j]) / d;
                        if q > b.0 {
                            b = (q, i, j);
                        }
                    }
                }
                b
            })
            .reduce(
                || (0.0, 0, 0),
                |a, b| {
                    if b.0 > a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) {
                        b
                    } else {
                        a
                    }
                },
            );
        pou.h_sample = LipSample {
            value: best.0,
            x: points[best.1].clone(),
            y: points[best.2].clone(),
        };
    }
    pou.h = pou.h_sample.value.max(1.0);
    pou.h_inflated = opts.inflation * pou.h;
    Ok(pou)
}

/// Checks the gluing lemma for `g = sum alpha_i f_i` against `f` on `points`.
///
/// The premise `|f_i - f| <= eps` and `Lip(f_i - f) <= eps` on each `U_i` is
/// sampled first; if it fails a single hypothesis-violation report comes back.
pub fn glue(
    suite: &str,
    pou: &PartitionOfUnity,
    norm: &Norm,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    piece: &(dyn Fn(usize, &[f64]) -> f64 + Sync),
    eps: f64,
    points: &[Vec<f64>],
) -> Result<Vec<BoundReport>> {
    let m = &pou.manifold;
    let located: Vec<Vec<(usize, Vec<f64>)>> =
        points.par_iter().map(|p| pou.cover.locate(m, p)).collect();
    let mut members: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut premise_sup = 0.0f64;
    for (k, loc) in located.iter().enumerate() {
        for (i, _) in loc {
            members.entry(*i).or_default().push(k);
            premise_sup = premise_sup.max((piece(*i, &points[k]) - f(&points[k])).abs());
        }
    }
    let mut premise_lip = 0.0f64;
    let mut charts: Vec<_> = members.into_iter().collect();
    charts.sort_by_key(|c| c.0);
    for (i, idx) in &charts {
        let pts: Vec<Vec<f64>> = idx.iter().map(|&k| points[k].clone()).collect();
        let vals: Vec<f64> = pts.iter().map(|p| piece(*i, p) - f(p)).collect();
        if let Some((q, _, _)) = max_quotient(&pts, &vals, norm) {
            premise_lip = premise_lip.max(q);
        }
    }
    let premise = premise_sup.max(premise_lip);
    if premise > eps * (1.0 + 1e-12) {
        return Ok(vec![BoundReport::hypothesis_violation(
            suite,
            "glue_premise",
            refs::GLUE,
            eps,
            premise,
        )]);
    }
    let defect: Vec<f64> = points
        .par_iter()
        .map(|p| -> Result<f64> {
            let g: f64 = pou
                .weights(p)?
                .iter()
                .map(|w| w.alpha * piece(w.index, p))
                .sum();
            Ok(g - f(p))
        })
        .collect::<Result<_>>()?;
    let (sup_k, sup) =
        defect.iter().enumerate().fold(
            (0, 0.0f64),
            |a, (k, v)| if v.abs() > a.1 { (k, v.abs()) } else { a },
        );
    let (lip, i, j) = max_quotient(points, &defect, norm).unwrap_or((0.0, 0, 0));
    let mh = pou.m() as f64 * pou.h;
    Ok(vec![
        BoundReport::new(suite, "glue_sup", refs::GLUE, eps, sup, 0.01, 1e-15)
            .with_witness(fmt_point(&points[sup_k])),
        BoundReport::new(
            suite,
            "glue_lip",
            refs::GLUE,
            (1.0 + mh) * eps,
            lip,
            0.01,
            1e-15,
        )
        .with_witness(format!(
            "{} {}",
            fmt_point(&points[i]),
            fmt_point(&points[j])
        )),
    ])
}

/// The logarithmic cutoff `mu` at scale `R > 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatteningCutoff {
    pub r: f64,
}

impl FlatteningCutoff {
    pub fn new(r: f64) -> Result<Self> {
        if !(r > 1.0 && r.is_finite()) {
            return Err(Error::input(format!("flattening needs R > 1, got {r}")));
        }
        Ok(FlatteningCutoff { r })
    }

    pub fn mu(&self, t: f64) -> f64 {
        let r2 = self.r * self.r;
        if t <= self.r {
            1.0
        } else if t >= r2 {
            0.0
        } else {
            let lr = self.r.ln();
            ((2.0 * lr - t.ln()) / lr).clamp(0.0, 1.0)
        }
    }

    /// `(1 + K^2 / log R)`.
    pub fn norm_bound(&self, k: f64) -> f64 {
        1.0 + k * k / self.r.ln()
    }
}

/// `Phi(f)(x) = mu(|x - x0|_2) f(x)`, zero outside the ball of radius `R^2`
/// without evaluating `f` there, and the sampled norm report.
pub fn flatten(
    suite: &str,
    f: &LipschitzFunction,
    r: f64,
    k: f64,
    norm: &Norm,
    points: &[Vec<f64>],
) -> Result<(LipschitzFunction, BoundReport)> {
    let cut = FlatteningCutoff::new(r)?;
    let claim = f
        .claimed()
        .ok_or_else(|| Error::input("flatten needs a claimed Lipschitz bound"))?;
    let g = f.clone();
    let x0 = f.basepoint().to_vec();
    let x0c = x0.clone();
    let phi = LipschitzFunction::new(
        format!("flat({}, {r})", f.label()),
        &x0,
        Some(cut.norm_bound(k) * claim),
        f.domain(),
        move |x| {
            let t = dist2(x, &x0c);
            match cut.mu(t) {
                0.0 => 0.0,
                mu => mu * g.eval(x),
            }
        },
    );
    let values: Vec<f64> = points.par_iter().map(|p| phi.eval(p)).collect();
    let (lip, i, j) = max_quotient(points, &values, norm)
        .ok_or_else(|| Error::input("need two distinct points"))?;
    let rep = BoundReport::new(
        suite,
        "flatten_lip",
        refs::FLATTEN,
        cut.norm_bound(k) * claim,
        lip,
        0.01,
        0.0,
    )
    .with_witness(format!(
        "{} {}",
        fmt_point(&points[i]),
        fmt_point(&points[j])
    ));
    Ok((phi, rep))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GammaOptions {
    pub halfwidth: f64,
    pub cover: CoverOptions,
    pub partition: PartitionOptions,
    pub smoothing: SmoothingOptions,
    pub modulus: ModulusOptions,
    /// Safety factor on the sampled `L_n`, `J_n`, `H`.
    pub inflation: f64,
    /// Charts sampled by the pitch calibration.
    pub pitch_charts: usize,
    /// Suite members whose smoothings enter the pitch calibration.
    pub pitch_suite: usize,
    pub pitch_seed: u64,
    pub max_halvings: usize,
    pub k_samples: usize,
}

impl Default for GammaOptions {
    fn default() -> Self {
        GammaOptions {
            halfwidth: 0.3,
            cover: CoverOptions {
                inner_fraction: 0.5,
                ..CoverOptions::default()
            },
            partition: PartitionOptions::default(),
            smoothing: SmoothingOptions::default(),
            modulus: ModulusOptions::default(),
            inflation: 1.1,
            pitch_charts: 4,
            pitch_suite: 4,
            pitch_seed: 23,
            max_halvings: 8,
            k_samples: 20_000,
        }
    }
}

/// The accepted mesh pitch and what led to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitchCalibration {
    pub pitch: f64,
    pub modulus: f64,
    /// Slope `modulus / delta` measured at a hundredth of the lattice spacing.
    pub slope: f64,
    /// `(delta, sampled modulus)` for each tried value.
    pub table: Vec<(f64, f64)>,
    /// `1.1 (G K L^3 sqrt(d) delta / s + K L omega)` at the accepted pitch.
    pub budget: f64,
    /// Sampled variation of `D psi` over distance `sqrt(d) delta`.
    pub dpsi_modulus: f64,
    pub charts: Vec<usize>,
}

/// Every constant of a built `Gamma_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaConstants {
    pub n: usize,
    pub ambient_dim: usize,
    pub d: usize,
    pub k: f64,
    pub l_n: f64,
    pub j_n: f64,
    pub h: f64,
    pub l_inflated: f64,
    pub j_inflated: f64,
    pub h_inflated: f64,
    pub m: usize,
    pub g: f64,
    pub delta: f64,
    pub delta_n: f64,
    pub s_n: f64,
    pub eps: f64,
    pub pitch: f64,
    pub mesh_b: u64,
    pub vertex_count: f64,
}

/// What `gamma build` persists: enough to rebuild the operator without
/// repeating the calibrations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaRecord {
    pub manifold: crate::manifold::ManifoldSpec,
    pub norm: crate::normed_space::NormSpec,
    pub options: GammaOptions,
    pub constants: GammaConstants,
    pub calibration: DeltaCalibration,
    pub pitch: PitchCalibration,
}

#[derive(Debug, Clone)]
pub struct GammaOperator {
    pub constants: GammaConstants,
    pub pitch: PitchCalibration,
    pub options: GammaOptions,
    manifold: Manifold,
    norm: Norm,
    smoothing: SmoothingOperator,
    pou: PartitionOfUnity,
    pis: Vec<FiniteRankChartOperator>,
    cutoff: FlatteningCutoff,
}

struct Assembled {
    k: f64,
    cover_l: f64,
    cover_j: f64,
    smoothing: SmoothingOperator,
    pou: PartitionOfUnity,
    eps: f64,
}

fn assemble(
    m: &Manifold,
    norm: &Norm,
    n: usize,
    opts: &GammaOptions,
    cal: Option<DeltaCalibration>,
) -> Result<Assembled> {
    if n < 2 {
        return Err(Error::input("Gamma_n needs n >= 2 (log n > 0)"));
    }
    if norm.dim() != m.ambient_dim() {
        return Err(Error::input("norm and manifold dimensions differ"));
    }
    let k = equivalence_k(norm, opts.k_samples, opts.pitch_seed)?;
    let cover = build_cover(m, n, opts.halfwidth, &opts.cover)?;
    let (cover_l, cover_j) = (cover.l(), cover.j());
    let l_inf = opts.inflation * cover_l;
    let smoothing = match cal {
        Some(c) => {
            SmoothingOperator::with_delta(m, k, l_inf, n, c, opts.smoothing.lattice_per_radius)?
        }
        None => SmoothingOperator::build(m, k, l_inf, n, &opts.smoothing)?,
    };
    let pou = build_partition(m, cover, norm, &opts.partition)?;
    let d = m.intrinsic_dim() as f64;
    let eps = 1.0
        / (2.0
            * pou.m() as f64
            * n as f64
            * pou.h_inflated
            * k
            * (1.0 + d.sqrt())
            * l_inf.max(opts.inflation * cover_j));
    Ok(Assembled {
        k,
        cover_l,
        cover_j,
        smoothing,
        pou,
        eps,
    })
}

fn pitch_charts(m: usize, want: usize) -> Vec<usize> {
    let want = want.clamp(1, m);
    let mut v: Vec<usize> = (0..want).map(|k| k * m / want).collect();
    v.dedup();
    v
}

/// Picks the mesh pitch: the slope of the sampled gradient modulus at a
/// small probe distance predicts a pitch, which is halved until the sampled
/// modulus is at most `eps`.
pub fn calibrate_pitch(
    m: &Manifold,
    smoothing: &SmoothingOperator,
    pou: &PartitionOfUnity,
    suite: &[LipschitzFunction],
    eps: f64,
    opts: &GammaOptions,
) -> Result<PitchCalibration> {
    let cover = pou.cover();
    let hw = cover.halfwidth;
    let s = smoothing.s_n;
    let sm: Vec<Smoothed<'_>> = suite
        .iter()
        .map(|f| smoothing.smoothed(f))
        .collect::<Result<_>>()?;
    let evals: Vec<_> = sm.iter().map(|g| move |x: &[f64]| g.eval(x)).collect();
    let charts = pitch_charts(cover.m(), opts.pitch_charts);
    // the lattice rule ripples at its own spacing, so differences must resolve it
    let spacing = smoothing.lattice().h;
    let h = if opts.modulus.fd_step > 0.0 {
        opts.modulus.fd_step
    } else {
        (spacing / 100.0).min(1e-5)
    };
    let modulus = |delta: f64| -> Result<f64> {
        let mut worst = 0.0f64;
        for &i in &charts {
            let rows = chart_gradient_modulus(
                m,
                &cover.charts[i].frame,
                &evals,
                hw,
                &[delta],
                h,
                &opts.modulus,
            )?;
            worst = worst.max(rows[0].modulus);
        }
        Ok(worst)
    };
    let probe = spacing / 100.0;
    let slope = modulus(probe)? / probe;
    let mut table = vec![(probe, slope * probe)];
    let mut delta = if slope > 0.0 {
        eps / (1.1 * slope)
    } else {
        eps
    };
    delta = delta.min(eps).min(hw);
    for _ in 0..=opts.max_halvings {
        let w = modulus(delta)?;
        table.push((delta, w));
        if w <= eps {
            let d = m.intrinsic_dim() as f64;
            let k = smoothing.k;
            let l = smoothing.l_n;
            let g = kernel_constants(m.ambient_dim())?.g;
            let mut dpsi = 0.0f64;
            for &i in &charts {
                dpsi = dpsi.max(retraction_derivative_modulus(
                    m,
                    &cover.charts[i].frame,
                    hw,
                    d.sqrt() * delta,
                    opts.modulus.pairs,
                    opts.modulus.seed,
                )?);
            }
            let budget = 1.1 * (g * k * l.powi(3) * d.sqrt() * delta / s + k * l * dpsi);
            return Ok(PitchCalibration {
                pitch: delta,
                modulus: w,
                slope,
                table,
                budget,
                dpsi_modulus: dpsi,
                charts,
            });
        }
        delta *= 0.5;
    }
    Err(Error::calibration(
        "pitch",
        format!(
            "gradient modulus stays above eps = {eps:.3e} down to pitch {:.3e}",
            delta * 2.0
        ),
    ))
}

/// Builds `Gamma_n` with all calibrations.
pub fn build_gamma(
    m: &Manifold,
    norm: &Norm,
    n: usize,
    opts: &GammaOptions,
) -> Result<GammaOperator> {
    let a = assemble(m, norm, n, opts, None)?;
    let suite = random_lip_suite(
        &SuiteSpec {
            seed: opts.pitch_seed,
            count: opts.pitch_suite.max(1),
            anchors: 8,
            radius: 2.0,
        },
        m,
        norm,
    )?;
    let pitch = calibrate_pitch(m, &a.smoothing, &a.pou, &suite, a.eps, opts)?;
    finish(m, norm, n, opts, a, pitch)
}

fn finish(
    m: &Manifold,
    norm: &Norm,
    n: usize,
    opts: &GammaOptions,
    a: Assembled,
    pitch: PitchCalibration,
) -> Result<GammaOperator> {
    let cover = a.pou.cover();
    let pis: Vec<FiniteRankChartOperator> = (0..cover.m())
        .map(|i| build_pi(m, cover, i, pitch.pitch))
        .collect::<Result<_>>()?;
    let vertex_count = pis.iter().map(|p| p.mesh.vertex_count()).sum();
    let constants = GammaConstants {
        n,
        ambient_dim: m.ambient_dim(),
        d: m.intrinsic_dim(),
        k: a.k,
        l_n: a.cover_l,
        j_n: a.cover_j,
        h: a.pou.h,
        l_inflated: opts.inflation * a.cover_l,
        j_inflated: opts.inflation * a.cover_j,
        h_inflated: a.pou.h_inflated,
        m: cover.m(),
        g: kernel_constants(m.ambient_dim())?.g,
        delta: a.smoothing.delta(),
        delta_n: a.smoothing.delta_n,
        s_n: a.smoothing.s_n,
        eps: a.eps,
        pitch: pitch.pitch,
        mesh_b: pis[0].mesh.b,
        vertex_count,
    };
    log::info!(
        "gamma n={n}: m={} H={:.3} eps={:.3e} s_n={:.3e} pitch={:.3e}",
        constants.m,
        constants.h,
        constants.eps,
        constants.s_n,
        constants.pitch
    );
    Ok(GammaOperator {
        constants,
        pitch,
        options: opts.clone(),
        manifold: m.clone(),
        norm: norm.clone(),
        smoothing: a.smoothing,
        pou: a.pou,
        pis,
        cutoff: FlatteningCutoff::new(n as f64)?,
    })
}

impl GammaOperator {
    pub fn record(&self) -> GammaRecord {
        GammaRecord {
            manifold: self.manifold.spec().clone(),
            norm: self.norm.spec().clone(),
            options: self.options.clone(),
            constants: self.constants.clone(),
            calibration: self.smoothing.calibration.clone(),
            pitch: self.pitch.clone(),
        }
    }

    /// Rebuilds from a record, reusing its calibrations. The cover and the
    /// partition are recomputed and must reproduce the stored constants.
    pub fn from_record(rec: &GammaRecord) -> Result<Self> {
        let m = Manifold::new(rec.manifold.clone())?;
        let norm = Norm::new(rec.norm.clone(), m.ambient_dim())?;
        let n = rec.constants.n;
        let a = assemble(&m, &norm, n, &rec.options, Some(rec.calibration.clone()))?;
        let op = finish(&m, &norm, n, &rec.options, a, rec.pitch.clone())?;
        if op.constants != rec.constants {
            return Err(Error::Config(
                "rebuilt operator does not reproduce the stored constants".into(),
            ));
        }
        Ok(op)
    }

    pub fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    pub fn norm(&self) -> &Norm {
        &self.norm
    }

    pub fn smoothing(&self) -> &SmoothingOperator {
        &self.smoothing
    }

    pub fn partition(&self) -> &PartitionOfUnity {
        &self.pou
    }

    pub fn pis(&self) -> &[FiniteRankChartOperator] {
        &self.pis
    }

    pub fn cutoff(&self) -> FlatteningCutoff {
        self.cutoff
    }

    /// Binds `f`: computes `S_n` offsets and `Q_n'(f)(x0)` and opens a vertex cache.
    pub fn bind(&self, f: &LipschitzFunction) -> Result<GammaEval<'_>> {
        let mut e = GammaEval {
            op: self,
            s: self.smoothing.smoothed(f)?,
            cache: Mutex::new(HashMap::new()),
            q0: 0.0,
        };
        e.q0 = e.q_prime(self.manifold.basepoint())?;
        Ok(e)
    }
}

/// The operators applied to one input `f`, with vertex values cached.
pub struct GammaEval<'a> {
    op: &'a GammaOperator,
    s: Smoothed<'a>,
    cache: Mutex<HashMap<(usize, VertexIndex), f64>>,
    q0: f64,
}

impl GammaEval<'_> {
    /// `S_n(f)(y)`.
    pub fn sn(&self, y: &[f64]) -> Result<f64> {
        self.s.eval(y)
    }

    /// `f_hat(y)`, the smoothing before re-basing.
    pub fn hat(&self, y: &[f64]) -> Result<f64> {
        Ok(self.s.eval(y)? + self.s.offset())
    }

    fn vertex(&self, i: usize, k: &VertexIndex) -> Result<f64> {
        if let Some(v) = self.cache.lock().expect("cache lock").get(&(i, *k)) {
            return Ok(*v);
        }
        let v = self.s.eval(&self.op.pis[i].vertex_point(k)?)?;
        self.cache.lock().expect("cache lock").insert((i, *k), v);
        Ok(v)
    }

    /// `P_i(S_n(f))(y)`.
    pub fn pi(&self, i: usize, y: &[f64]) -> Result<f64> {
        let p = &self.op.pis[i];
        p.eval_with(y, |k| self.vertex(i, k))
    }

    /// `Q_n'(f)(y)` for `y` in the covered ball.
    pub fn q_prime(&self, y: &[f64]) -> Result<f64> {
        let mut acc = 0.0;
        for w in self.op.pou.weights(y)? {
            acc += w.alpha
                * self.op.pis[w.index]
                    .mesh
                    .eval(&w.u, |k| self.vertex(w.index, k))?;
        }
        Ok(acc)
    }

    /// `Q_n'(f)(x0)`.
    pub fn q_prime_base(&self) -> f64 {
        self.q0
    }

    /// `Q_n(f)(y) = Q_n'(f)(y) - Q_n'(f)(x0)`.
    pub fn q(&self, y: &[f64]) -> Result<f64> {
        if y == self.op.manifold.basepoint() {
            return Ok(0.0);
        }
        Ok(self.q_prime(y)? - self.q0)
    }

    /// `Gamma_n(f)(y)`; exactly zero outside the ball of radius `n^2`.
    pub fn gamma(&self, y: &[f64]) -> Result<f64> {
        let mu = self.op.cutoff.mu(dist2(y, self.op.manifold.basepoint()));
        if mu == 0.0 {
            return Ok(0.0);
        }
        Ok(mu * self.q(y)?)
    }

    /// Number of distinct vertex functionals evaluated so far.
    pub fn touched(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyOptions {
    pub probes: usize,
    pub seed: u64,
    /// Sampled-side slack on the claimed bounds.
    pub slack: f64,
    /// Absolute tolerance on the `Gamma_n` uniform defect.
    pub uniform_tol: f64,
    /// Absolute tolerance on the intermediate bounds.
    pub intermediate_tol: f64,
    /// Probes used by the linearity and convergence checks.
    pub small_probes: usize,
    pub clusters: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            probes: 150,
            seed: 7,
            slack: 0.05,
            uniform_tol: 1e-4,
            intermediate_tol: 1e-9,
            small_probes: 40,
            clusters: 3,
        }
    }
}

fn sup_abs(points: &[Vec<f64>], v: &[f64]) -> (f64, String) {
    let (k, s) =
        v.iter().enumerate().fold(
            (0, 0.0f64),
            |a, (k, x)| if x.abs() > a.1 { (k, x.abs()) } else { a },
        );
    (s, points.get(k).map(|p| fmt_point(p)).unwrap_or_default())
}

fn lip_of(points: &[Vec<f64>], v: &[f64], norm: &Norm) -> (f64, String) {
    match max_quotient(points, v, norm) {
        Some((q, i, j)) => (
            q,
            format!("{} {}", fmt_point(&points[i]), fmt_point(&points[j])),
        ),
        None => (0.0, String::new()),
    }
}

/// Probe points for [`verify_gamma`]: seeded points of `M` inside the covered
/// ball with close companions at a few pitches and at `hw / 10`, all chart
/// centers, and the base point.
pub fn gamma_probes(op: &GammaOperator, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let c = &op.constants;
    let hw = op.pou.cover().halfwidth;
    let radius = (c.n * c.n) as f64;
    let mut pts = probe_set(
        &op.manifold,
        radius,
        count,
        seed,
        "gamma-probes",
        &[3.0 * c.pitch, 0.1 * hw],
    );
    pts.extend(op.pou.cover().centers().map(|p| p.to_vec()));
    pts.push(op.manifold.basepoint().to_vec());
    pts
}

/// Operator-level reports: calibration, pitch modulus and its closed-form budget.
pub fn operator_reports(op: &GammaOperator) -> Vec<BoundReport> {
    let c = &op.constants;
    let n = c.n;
    let p = &op.pitch;
    vec![
        BoundReport::new(
            "gamma",
            "delta_defect",
            refs::CALIBRATE_DELTA,
            op.smoothing.calibration.threshold,
            op.smoothing.calibration.defect,
            0.0,
            0.0,
        )
        .with_n(n)
        .with_witness(format!("delta={}", crate::report::fmt_num(c.delta))),
        BoundReport::new(
            "gamma",
            "pitch_modulus",
            refs::CHART_MODULUS,
            c.eps,
            p.modulus,
            0.0,
            0.0,
        )
        .with_n(n)
        .with_witness(format!("pitch={}", crate::report::fmt_num(p.pitch))),
        BoundReport::new(
            "gamma",
            "pitch_modulus_budget",
            refs::CHART_MODULUS,
            p.budget,
            p.modulus,
            0.0,
            0.0,
        )
        .with_n(n)
        .with_witness(format!("charts={:?}", p.charts)),
        BoundReport::new(
            "gamma",
            "partition_h_at_least_one",
            refs::PARTITION,
            c.h,
            1.0,
            0.0,
            0.0,
        )
        .with_n(n),
    ]
}

/// Rank of the evaluation matrix of `Gamma_n` over clustered points against
/// the number of vertex functionals those points touch.
pub fn rank_certificate(op: &GammaOperator, opts: &VerifyOptions) -> Result<BoundReport> {
    let m = &op.manifold;
    let d = m.intrinsic_dim();
    let per = 8usize << d;
    let tag = rng::purpose("rank-points");
    let mut points = Vec::new();
    let charts = pitch_charts(op.pis.len(), opts.clusters);
    for (c, &i) in charts.iter().enumerate() {
        let p = &op.pis[i];
        let mut r = rng::stream(opts.seed, tag, c as u64);
        let hw = p.mesh.halfwidth;
        let u0: Vec<f64> = (0..d).map(|_| (r.gen::<f64>() - 0.5) * hw).collect();
        let cell = p.mesh.cell(&u0)?;
        let corner = p.mesh.vertex_coords(&cell);
        for _ in 0..per {
            let u: Vec<f64> = corner
                .iter()
                .map(|w| w + p.mesh.xi * (0.1 + 0.8 * r.gen::<f64>()))
                .collect();
            points.push(m.retract(&p.frame().affine(&u))?);
        }
    }
    let first = random_lip_suite(
        &SuiteSpec {
            seed: opts.seed ^ 0x5eed,
            count: 1,
            anchors: 8,
            radius: 2.0,
        },
        m,
        &op.norm,
    )?;
    let probe = op.bind(&first[0])?;
    for y in &points {
        probe.gamma(y)?;
    }
    let touched = probe.touched();
    let count = m.ambient_dim() + 1 + 5 * touched;
    let suite = random_lip_suite(
        &SuiteSpec {
            seed: opts.seed ^ 0x5eed,
            count,
            anchors: 8,
            radius: 2.0,
        },
        m,
        &op.norm,
    )?;
    let columns: Vec<Vec<f64>> = suite
        .par_iter()
        .map(|f| -> Result<Vec<f64>> {
            let e = op.bind(f)?;
            points.iter().map(|y| e.gamma(y)).collect()
        })
        .collect::<Result<_>>()?;
    let mat = nalgebra::DMatrix::from_fn(points.len(), columns.len(), |i, j| columns[j][i]);
    let sv = mat.singular_values();
    let smax = sv.max();
    let rank = sv.iter().filter(|s| **s > 1e-8 * smax).count();
    Ok(BoundReport::new(
        "gamma",
        "gamma_rank",
        refs::BUILD_GAMMA,
        touched as f64,
        rank as f64,
        0.0,
        0.0,
    )
    .with_n(op.constants.n)
    .with_witness(format!(
        "rows={} cols={} total_vertices={:e}",
        points.len(),
        columns.len(),
        op.constants.vertex_count
    )))
}

/// Every per-function bound of the assembly on `suite` (claimed bound 1).
pub fn verify_gamma(
    op: &GammaOperator,
    suite: &[LipschitzFunction],
    opts: &VerifyOptions,
) -> Result<Vec<BoundReport>> {
    let c = op.constants.clone();
    let n = c.n;
    let nf = n as f64;
    let norm = &op.norm;
    let x0 = op.manifold.basepoint().to_vec();
    let probes = gamma_probes(op, opts.probes, opts.seed);
    let small: Vec<Vec<f64>> = probes
        .iter()
        .step_by((probes.len() / opts.small_probes.max(1)).max(1))
        .cloned()
        .collect();
    let sd = (c.d as f64).sqrt();
    let tol = opts.intermediate_tol;
    let mut out = operator_reports(op);
    out.push(rank_certificate(op, opts)?);
    let located: Vec<Vec<(usize, Vec<f64>)>> = probes
        .par_iter()
        .map(|p| op.pou.cover().locate(&op.manifold, p))
        .collect();

    for (fi, f) in suite.iter().enumerate() {
        let e = op.bind(f)?;
        let rows: Vec<[f64; 5]> = probes
            .par_iter()
            .map(|p| -> Result<[f64; 5]> {
                Ok([f.eval(p), e.sn(p)?, e.hat(p)?, e.q_prime(p)?, e.gamma(p)?])
            })
            .collect::<Result<_>>()?;
        let col = |j: usize| -> Vec<f64> { rows.iter().map(|r| r[j]).collect() };
        let (fv, sv, hv, qpv, gv) = (col(0), col(1), col(2), col(3), col(4));
        let qv: Vec<f64> = probes
            .iter()
            .zip(&qpv)
            .map(|(p, v)| if *p == x0 { 0.0 } else { v - e.q_prime_base() })
            .collect();
        let diff =
            |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x - y).collect() };
        let mut rep =
            |name: &str, r: &str, paper: f64, sampled: (f64, String), slack: f64, t: f64| {
                out.push(
                    BoundReport::new("gamma", name, r, paper, sampled.0, slack, t)
                        .with_n(n)
                        .with_f(fi)
                        .with_witness(sampled.1),
                );
            };
        rep(
            "sn_lip",
            refs::APPLY_SN,
            1.0 + 1.0 / nf,
            lip_of(&probes, &sv, norm),
            opts.slack,
            tol,
        );
        rep(
            "sn_uniform",
            refs::APPLY_SN,
            1.0 / nf,
            sup_abs(&probes, &diff(&sv, &fv)),
            opts.slack,
            tol,
        );
        rep(
            "sn_displacement",
            refs::SMOOTHING_OPERATOR,
            c.k * c.l_n * c.s_n,
            sup_abs(&probes, &diff(&hv, &fv)),
            opts.slack,
            tol,
        );

        // chart-wise interpolation defects
        let mut members: HashMap<usize, Vec<usize>> = HashMap::new();
        for (k, loc) in located.iter().enumerate() {
            for (i, _) in loc {
                members.entry(*i).or_default().push(k);
            }
        }
        let mut charts: Vec<_> = members.into_iter().collect();
        charts.sort_by_key(|x| x.0);
        let per_chart: Vec<((f64, String), (f64, String))> = charts
            .par_iter()
            .map(|(i, idx)| -> Result<_> {
                let pts: Vec<Vec<f64>> = idx.iter().map(|&k| probes[k].clone()).collect();
                let dv: Vec<f64> = idx
                    .iter()
                    .map(|&k| Ok(e.pi(*i, &probes[k])? - sv[k]))
                    .collect::<Result<_>>()?;
                let (l, lw) = lip_of(&pts, &dv, norm);
                let (s, sw) = sup_abs(&pts, &dv);
                Ok((
                    (l, format!("chart {i}: {lw}")),
                    (s, format!("chart {i}: {sw}")),
                ))
            })
            .collect::<Result<_>>()?;
        let pick = |get: &dyn Fn(&((f64, String), (f64, String))) -> (f64, String)| {
            per_chart.iter().map(get).fold(
                (0.0f64, String::new()),
                |a, b| if b.0 > a.0 { b } else { a },
            )
        };
        rep(
            "pi_lip_defect",
            refs::BUILD_PI,
            c.k * c.j_n * (1.0 + sd) * c.eps,
            pick(&|x| x.0.clone()),
            opts.slack,
            tol,
        );
        rep(
            "pi_sup_defect",
            refs::BUILD_PI,
            2.0 * c.k * c.l_n * sd * c.eps,
            pick(&|x| x.1.clone()),
            opts.slack,
            tol,
        );

        let qs = diff(&qpv, &sv);
        rep(
            "qprime_sn_uniform",
            refs::GAMMA_OPERATOR,
            1.0 / nf,
            sup_abs(&probes, &qs),
            opts.slack,
            tol,
        );
        rep(
            "qprime_sn_lip",
            refs::GAMMA_OPERATOR,
            2.0 / nf,
            lip_of(&probes, &qs, norm),
            opts.slack,
            tol,
        );
        rep(
            "qprime_base",
            refs::GAMMA_OPERATOR,
            2.0 / nf,
            (e.q_prime_base().abs(), fmt_point(&x0)),
            opts.slack,
            tol,
        );
        rep(
            "q_uniform",
            refs::GAMMA_OPERATOR,
            4.0 / nf,
            sup_abs(&probes, &diff(&qv, &fv)),
            opts.slack,
            tol,
        );
        rep(
            "q_lip",
            refs::GAMMA_OPERATOR,
            1.0 + 3.0 / nf,
            lip_of(&probes, &qv, norm),
            opts.slack,
            tol,
        );

        let lip_bound = op.cutoff.norm_bound(c.k) * (1.0 + 3.0 / nf);
        rep(
            "gamma_lip",
            refs::VERIFY_GAMMA,
            lip_bound,
            lip_of(&probes, &gv, norm),
            opts.slack,
            0.0,
        );
        let (inner_pts, inner_def): (Vec<Vec<f64>>, Vec<f64>) = probes
            .iter()
            .zip(gv.iter().zip(&fv))
            .filter(|(p, _)| dist2(p, &x0) <= nf)
            .map(|(p, (g, fx))| (p.clone(), g - fx))
            .unzip();
        rep(
            "gamma_uniform",
            refs::VERIFY_GAMMA,
            4.0 / nf,
            sup_abs(&inner_pts, &inner_def),
            0.0,
            opts.uniform_tol,
        );
        rep(
            "gamma_base",
            refs::GAMMA_OPERATOR,
            0.0,
            (e.gamma(&x0)?.abs(), fmt_point(&x0)),
            0.0,
            0.0,
        );
        let far: Vec<(Vec<f64>, f64)> = probes
            .iter()
            .zip(&gv)
            .filter(|(p, _)| dist2(p, &x0) >= nf * nf)
            .map(|(p, g)| (p.clone(), *g))
            .collect();
        let support = if far.is_empty() {
            (0.0, "no probe beyond n^2".to_string())
        } else {
            let (p, v): (Vec<Vec<f64>>, Vec<f64>) = far.into_iter().unzip();
            sup_abs(&p, &v)
        };
        rep(
            "gamma_support",
            refs::GAMMA_OPERATOR,
            0.0,
            support,
            0.0,
            0.0,
        );

        // linearity against the next suite member
        let g = &suite[(fi + 1) % suite.len()];
        let mut r = rng::stream(opts.seed, rng::purpose("linearity"), fi as u64);
        let (a, b) = (r.gen::<f64>() * 4.0 - 2.0, r.gen::<f64>() * 4.0 - 2.0);
        let combo = combination(&[(a, f.clone()), (b, g.clone())])?;
        let ec = op.bind(&combo)?;
        let eg = op.bind(g)?;
        let resid = small
            .par_iter()
            .map(|y| -> Result<f64> {
                Ok((ec.gamma(y)? - a * e.gamma(y)? - b * eg.gamma(y)?).abs())
            })
            .collect::<Result<Vec<_>>>()?;
        rep(
            "gamma_linearity",
            refs::GAMMA_OPERATOR,
            0.0,
            sup_abs(&small, &resid),
            0.0,
            1e-8 * (a.abs() + b.abs()),
        );

        // pointwise convergence along truncations f_k = clamp(f, c_k)
        let top = fv.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-3);
        let base_vals: Vec<f64> = small.iter().map(|y| e.gamma(y)).collect::<Result<_>>()?;
        let mut trail = Vec::new();
        let mut last = f64::INFINITY;
        for level in 0..5 {
            let ck = top * 0.25 * 2f64.powi(level);
            let ek = op.bind(&f.clamped(ck))?;
            let dk = small
                .par_iter()
                .zip(&base_vals)
                .map(|(y, g0)| -> Result<f64> { Ok((ek.gamma(y)? - g0).abs()) })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(0.0f64, f64::max);
            trail.push(format!(
                "{}:{}",
                crate::report::fmt_num(ck),
                crate::report::fmt_num(dk)
            ));
            last = dk;
        }
        rep(
            "gamma_pointwise_convergence",
            refs::GAMMA_OPERATOR,
            0.0,
            (last, trail.join(";")),
            0.0,
            1e-12,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
