//! Cube meshes in tangent coordinates, the coordinatewise-affine interpolant
//! and the chart operators `P_i`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{ChartInverse, CoverData, Manifold, TangentFrame};
use crate::report::{refs, BoundReport};
use crate::rng;
use crate::vecops::{axpy, dist2, fmt_point, norm2, sub};

/// Largest supported chart dimension.
pub const MAX_DIM: usize = 3;

/// Integer lattice index of a vertex (unused trailing slots are zero).
pub type VertexIndex = [i64; MAX_DIM];

/// Weights `c_gamma` of the cube with lower corner `w` and edge `l` at `z`;
/// bit `j` of the slot index is `gamma_j`.
pub fn cube_weights(w: &[f64], l: f64, z: &[f64]) -> Result<Vec<f64>> {
    let d = w.len();
    let mut t = Vec::with_capacity(d);
    for j in 0..d {
        let tj = (z[j] - w[j]) / l;
        if !(-1e-12..=1.0 + 1e-12).contains(&tj) {
            return Err(Error::domain("point lies outside the cube", tj));
        }
        t.push(tj.clamp(0.0, 1.0));
    }
    Ok(weights_from_fractions(&t))
}

fn weights_from_fractions(t: &[f64]) -> Vec<f64> {
    let d = t.len();
    (0..1usize << d)
        .map(|g| {
            (0..d)
                .map(|j| if g >> j & 1 == 1 { t[j] } else { 1.0 - t[j] })
                .product()
        })
        .collect()
}

/// `Lambda(f, C)(z)` from the `2^d` vertex values, ordered as in [`cube_weights`].
pub fn lambda_on_cube(values: &[f64], w: &[f64], l: f64, z: &[f64]) -> Result<f64> {
    if values.len() != 1 << w.len() {
        return Err(Error::input("need one value per cube vertex"));
    }
    let c = cube_weights(w, l, z)?;
    Ok(c.iter().zip(values).map(|(a, b)| a * b).sum())
}

/// The lattice `xi Z^d` restricted to cubes meeting `C = [-halfwidth, halfwidth]^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypercubeMesh {
    pub dim: usize,
    pub halfwidth: f64,
    /// Cells per edge of `C`: the least integer `>= e / delta`.
    pub b: u64,
    pub xi: f64,
}

impl HypercubeMesh {
    pub fn new(dim: usize, halfwidth: f64, delta: f64) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::input(format!(
                "mesh dimension must be in 1..={MAX_DIM}"
            )));
        }
        if !(halfwidth > 0.0 && delta > 0.0) {
            return Err(Error::input("mesh needs positive halfwidth and pitch"));
        }
        let e = 2.0 * halfwidth;
        let b = (e / delta).ceil().max(1.0);
        if b > 1e15 {
            return Err(Error::input(format!(
                "pitch {delta:e} is too fine for this cube"
            )));
        }
        Ok(HypercubeMesh {
            dim,
            halfwidth,
            b: b as u64,
            xi: e / b,
        })
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.iter().all(|v| v.abs() <= self.halfwidth * (1.0 + 1e-12))
    }

    /// Index range `[lo, hi]` of lattice vertices along one axis.
    fn axis_range(&self) -> (i64, i64) {
        let lo = (-self.halfwidth / self.xi).floor() as i64;
        let hi = (self.halfwidth / self.xi).ceil() as i64;
        (lo, hi)
    }

    /// Number of lattice vertices of the cubes meeting `C`.
    pub fn vertex_count(&self) -> f64 {
        let (lo, hi) = self.axis_range();
        ((hi - lo + 1) as f64).powi(self.dim as i32)
    }

    /// Lower corner of the cell used for `u`. Faces go to the
    /// lexicographically smallest containing cube.
    pub fn cell(&self, u: &[f64]) -> Result<VertexIndex> {
        if u.len() != self.dim {
            return Err(Error::input("query has the wrong dimension"));
        }
        if !self.contains(u) {
            let far = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            return Err(Error::domain("query lies outside the chart cube", far));
        }
        let (lo, hi) = self.axis_range();
        let mut k = [0i64; MAX_DIM];
        for j in 0..self.dim {
            let t = u[j] / self.xi;
            let mut c = t.floor() as i64;
            if (t - c as f64) <= 1e-12 * t.abs().max(1.0) && c > lo {
                c -= 1;
            }
            k[j] = c.clamp(lo, hi - 1);
        }
        Ok(k)
    }

    /// Tangent coordinates `xi k` of a vertex.
    pub fn vertex_coords(&self, k: &VertexIndex) -> Vec<f64> {
        (0..self.dim).map(|j| self.xi * k[j] as f64).collect()
    }

    /// `Lambda` on the given cell, with vertex values from `values`.
    pub fn eval_in_cell(
        &self,
        cell: &VertexIndex,
        u: &[f64],
        mut values: impl FnMut(&VertexIndex) -> Result<f64>,
    ) -> Result<f64> {
        let w = self.vertex_coords(cell);
        let c = cube_weights(&w, self.xi, u)?;
        let mut acc = 0.0;
        for (g, cg) in c.iter().enumerate() {
            let mut v = *cell;
            for (j, slot) in v.iter_mut().enumerate().take(self.dim) {
                *slot += (g >> j & 1) as i64;
            }
            // skip the call for zero weight, so faces only touch their own vertices
            if *cg != 0.0 {
                acc += cg * values(&v)?;
            }
        }
        Ok(acc)
    }

    /// The piecewise interpolant `Lambda(G)` at `u`.
    pub fn eval(&self, u: &[f64], values: impl FnMut(&VertexIndex) -> Result<f64>) -> Result<f64> {
        let cell = self.cell(u)?;
        self.eval_in_cell(&cell, u, values)
    }
}

/// `P_i`: interpolation of `G(f)(u) = f(psi(x_i + E u))` on a cube mesh, read
/// back through the chart inverse.
#[derive(Debug, Clone)]
pub struct FiniteRankChartOperator {
    pub index: usize,
    pub chart: ChartInverse,
    pub mesh: HypercubeMesh,
    manifold: Manifold,
}

impl FiniteRankChartOperator {
    pub fn frame(&self) -> &TangentFrame {
        &self.chart.frame
    }

    pub fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    /// Manifold point `p_v = psi(x_i + E v)` of a vertex.
    pub fn vertex_point(&self, k: &VertexIndex) -> Result<Vec<f64>> {
        self.manifold
            .retract(&self.chart.frame.affine(&self.mesh.vertex_coords(k)))
    }

    /// `E^{-1}(phi(y) - x_i)`, checked to lie in the chart cube.
    pub fn coords(&self, y: &[f64]) -> Result<Vec<f64>> {
        let u = self.chart.coords(&self.manifold, y)?;
        if !self.mesh.contains(&u) {
            return Err(Error::domain(
                format!("point is outside patch {}", self.index),
                norm2(&u),
            ));
        }
        Ok(u)
    }

    /// `P_i(f)(y)` with vertex values supplied by `values` (typically cached).
    pub fn eval_with(
        &self,
        y: &[f64],
        values: impl FnMut(&VertexIndex) -> Result<f64>,
    ) -> Result<f64> {
        let u = self.coords(y)?;
        self.mesh.eval(&u, values)
    }

    /// `P_i(f)(y)` evaluating `f` at the needed vertices directly.
    pub fn eval(&self, f: impl Fn(&[f64]) -> Result<f64>, y: &[f64]) -> Result<f64> {
        self.eval_with(y, |k| f(&self.vertex_point(k)?))
    }

    /// Vertices whose values enter `P_i(.)(y)`.
    pub fn support_vertices(&self, y: &[f64]) -> Result<Vec<VertexIndex>> {
        let mut out = Vec::new();
        self.eval_with(y, |k| {
            out.push(*k);
            Ok(0.0)
        })?;
        Ok(out)
    }
}

/// `P_i` for chart `i` of `cover` at mesh pitch `delta`.
pub fn build_pi(
    m: &Manifold,
    cover: &CoverData,
    i: usize,
    delta: f64,
) -> Result<FiniteRankChartOperator> {
    let chart = cover
        .charts
        .get(i)
        .ok_or_else(|| Error::input(format!("chart {i} does not exist (m = {})", cover.m())))?;
    Ok(FiniteRankChartOperator {
        index: i,
        chart: chart.clone(),
        mesh: HypercubeMesh::new(m.intrinsic_dim(), cover.halfwidth, delta)?,
        manifold: m.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModulusOptions {
    pub pairs: usize,
    pub seed: u64,
    /// Central-difference step; 0 means `min(1e-5, spacing / 100)` for the
    /// smoothing lattice spacing.
    pub fd_step: f64,
}

impl Default for ModulusOptions {
    fn default() -> Self {
        ModulusOptions {
            pairs: 64,
            seed: 5,
            fd_step: 0.0,
        }
    }
}

/// Central-difference gradient of `g` at `u`.
pub fn fd_gradient(
    g: &(impl Fn(&[f64]) -> Result<f64> + ?Sized),
    u: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(u.len());
    let mut p = u.to_vec();
    for j in 0..u.len() {
        p[j] = u[j] + h;
        let a = g(&p)?;
        p[j] = u[j] - h;
        let b = g(&p)?;
        p[j] = u[j];
        out.push((a - b) / (2.0 * h));
    }
    Ok(out)
}

/// A sampled pair `(u, u')` and the gradient gap found there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusRow {
    pub delta: f64,
    pub modulus: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Sampled `sup |D g(u) - D g(u')|_2` over `|u - u'|_2 <= sqrt(d) delta` inside
/// `[-halfwidth, halfwidth]^d`, for each `delta` of `grid` and each `g` of
/// `funcs`. Rows are sorted by `delta` and cumulative, hence nondecreasing.
pub fn gradient_modulus<G>(
    funcs: &[G],
    dim: usize,
    halfwidth: f64,
    grid: &[f64],
    h: f64,
    opts: &ModulusOptions,
) -> Result<Vec<ModulusRow>>
where
    G: Fn(&[f64]) -> Result<f64> + Sync,
{
    let mut deltas = grid.to_vec();
    deltas.sort_by(f64::total_cmp);
    let tag = rng::purpose("gradient-modulus");
    let sd = (dim as f64).sqrt();
    let mut rows: Vec<ModulusRow> = Vec::with_capacity(deltas.len());
    for (level, &delta) in deltas.iter().enumerate() {
        let reach = sd * delta;
        let best = (0..opts.pairs)
            .into_par_iter()
            .map(|k| -> Result<(f64, usize, Vec<f64>, Vec<f64>)> {
                let mut r = rng::stream(opts.seed, tag, (level * opts.pairs + k) as u64);
                let inner = (halfwidth - reach).max(0.0);
                let u: Vec<f64> = (0..dim)
                    .map(|_| (2.0 * r.gen::<f64>() - 1.0) * inner)
                    .collect();
                let dir = rng::unit_sphere(&mut r, dim);
                let t: f64 = r.gen();
                let mut v = axpy(&u, reach * (1.0 - t * t * t), &dir);
                for c in v.iter_mut() {
                    *c = c.clamp(-halfwidth, halfwidth);
                }
                let mut worst = (0.0, k, u.clone(), v.clone());
                for g in funcs {
                    let a = fd_gradient(g, &u, h)?;
                    let b = fd_gradient(g, &v, h)?;
                    let gap = dist2(&a, &b);
                    if gap > worst.0 {
                        worst.0 = gap;
                    }
                }
                Ok(worst)
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(
                None::<(f64, usize, Vec<f64>, Vec<f64>)>,
                |acc, x| match acc {
                    Some(a) if a.0 >= x.0 => Some(a),
                    _ => Some(x),
                },
            )
            .ok_or_else(|| Error::Sampling("gradient pairs".into()))?;
        let prev = rows.last().cloned();
        let row = match prev {
            Some(p) if p.modulus >= best.0 => ModulusRow { delta, ..p },
            _ => ModulusRow {
                delta,
                modulus: best.0,
                u: best.2,
                v: best.3,
            },
        };
        rows.push(row);
    }
    Ok(rows)
}

/// [`gradient_modulus`] for `u -> S(psi(x + E u))` with `S` given on `M`.
pub fn chart_gradient_modulus<S>(
    m: &Manifold,
    frame: &TangentFrame,
    smoothed: &[S],
    halfwidth: f64,
    grid: &[f64],
    h: f64,
    opts: &ModulusOptions,
) -> Result<Vec<ModulusRow>>
where
    S: Fn(&[f64]) -> Result<f64> + Sync,
{
    let pulled: Vec<_> = smoothed
        .iter()
        .map(|s| move |u: &[f64]| s(&m.retract(&frame.affine(u))?))
        .collect();
    gradient_modulus(&pulled, frame.dim(), halfwidth, grid, h, opts)
}

/// Sampled `sup |D psi(y) - D psi(z)|_op` (Frobenius bound) over pairs on the
/// chart plane at distance up to `reach`; enters the closed-form modulus budget.
pub fn retraction_derivative_modulus(
    m: &Manifold,
    frame: &TangentFrame,
    halfwidth: f64,
    reach: f64,
    pairs: usize,
    seed: u64,
) -> Result<f64> {
    let n = m.ambient_dim();
    let d = frame.dim();
    let h = 1e-6;
    let jac = |y: &[f64]| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n * n);
        let mut p = y.to_vec();
        for j in 0..n {
            p[j] = y[j] + h;
            let a = m.retract(&p)?;
            p[j] = y[j] - h;
            let b = m.retract(&p)?;
            p[j] = y[j];
            out.extend(a.iter().zip(&b).map(|(x, z)| (x - z) / (2.0 * h)));
        }
        Ok(out)
    };
    let tag = rng::purpose("dpsi-modulus");
    let mut best = 0.0f64;
    for k in 0..pairs {
        let mut r = rng::stream(seed, tag, k as u64);
        let u: Vec<f64> = (0..d)
            .map(|_| (2.0 * r.gen::<f64>() - 1.0) * halfwidth)
            .collect();
        let dir = rng::unit_sphere(&mut r, n);
        let y = frame.affine(&u);
        let z = axpy(&y, reach * r.gen::<f64>(), &dir);
        let (Ok(a), Ok(b)) = (jac(&y), jac(&z)) else {
            continue;
        };
        best = best.max(norm2(&sub(&a, &b)));
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridCheckOptions {
    pub pairs: usize,
    pub hypothesis_pairs: usize,
    pub seed: u64,
    pub fd_step: f64,
}

impl Default for GridCheckOptions {
    fn default() -> Self {
        GridCheckOptions {
            pairs: 6000,
            hypothesis_pairs: 2000,
            seed: 17,
            fd_step: 1e-5,
        }
    }
}

/// Checks the interpolation lemma for a chart-local `g` on the mesh of pitch
/// `delta` over `[-halfwidth, halfwidth]^d`.
///
/// The premise `|Dg(u) - Dg(u')| <= eps` for `|u - u'| <= sqrt(d) delta` is
/// sampled first (with the exact gradient when given). If it fails, a single
/// hypothesis-violation report is returned.
pub fn grid_error_check(
    suite: &str,
    g: &(dyn Fn(&[f64]) -> f64 + Sync),
    grad: Option<&(dyn Fn(&[f64]) -> Vec<f64> + Sync)>,
    dim: usize,
    halfwidth: f64,
    eps: f64,
    delta: f64,
    opts: &GridCheckOptions,
) -> Result<Vec<BoundReport>> {
    let mesh = HypercubeMesh::new(dim, halfwidth, delta)?;
    let sd = (dim as f64).sqrt();
    let gradient = |u: &[f64]| -> Vec<f64> {
        match grad {
            Some(dg) => dg(u),
            None => fd_gradient(&|p: &[f64]| Ok(g(p)), u, opts.fd_step).expect("infallible"),
        }
    };
    let tag = rng::purpose("grid-check");
    let uniform = |r: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        (0..dim)
            .map(|_| (2.0 * r.gen::<f64>() - 1.0) * halfwidth)
            .collect()
    };
    let clamp = |v: Vec<f64>| -> Vec<f64> {
        v.into_iter()
            .map(|c| c.clamp(-halfwidth, halfwidth))
            .collect()
    };

    let mut premise = 0.0f64;
    for k in 0..opts.hypothesis_pairs {
        let mut r = rng::stream(opts.seed, tag, k as u64);
        let u = uniform(&mut r);
        let dir = rng::unit_sphere(&mut r, dim);
        let v = clamp(axpy(&u, sd * delta * (1.0 - r.gen::<f64>().powi(3)), &dir));
        premise = premise.max(dist2(&gradient(&u), &gradient(&v)));
    }
    if premise > eps * (1.0 + 1e-9) {
        return Ok(vec![BoundReport::hypothesis_violation(
            suite,
            "grid_gradient_premise",
            refs::GRID_LEMMA,
            eps,
            premise,
        )]);
    }

    let lam = |u: &[f64]| mesh.eval(u, |k| Ok(g(&mesh.vertex_coords(k))));
    let defect = |u: &[f64]| -> Result<f64> { Ok(lam(u)? - g(u)) };
    let mut lip_g = 0.0f64;
    let mut lip_best = (0.0f64, Vec::new(), Vec::new());
    let mut sup_best = (0.0f64, Vec::new());
    for k in 0..opts.pairs {
        let mut r = rng::stream(opts.seed, tag, (opts.hypothesis_pairs + k) as u64);
        let u = uniform(&mut r);
        let v = match k % 3 {
            // same or neighbouring cell
            0 => clamp(axpy(
                &u,
                mesh.xi * r.gen::<f64>(),
                &rng::unit_sphere(&mut r, dim),
            )),
            1 => clamp(axpy(&u, 1e-3 * mesh.xi, &rng::unit_sphere(&mut r, dim))),
            _ => uniform(&mut r),
        };
        let dist = dist2(&u, &v);
        if dist == 0.0 {
            continue;
        }
        let (du, dv) = (defect(&u)?, defect(&v)?);
        let q = (du - dv).abs() / dist;
        if q > lip_best.0 {
            lip_best = (q, u.clone(), v.clone());
        }
        lip_g = lip_g.max((g(&u) - g(&v)).abs() / dist);
        for (p, dp) in [(&u, du), (&v, dv)] {
            if dp.abs() > sup_best.0 {
                sup_best = (dp.abs(), p.clone());
            }
        }
    }
    // cell centers are where multilinear interpolation errs most for convex g
    let (lo, hi) = (
        (-halfwidth / mesh.xi).floor() as i64,
        (halfwidth / mesh.xi).ceil() as i64,
    );
    let per_axis = (hi - lo) as usize;
    if per_axis.pow(dim as u32) <= 20_000 {
        for flat in 0..per_axis.pow(dim as u32) {
            let mut f = flat;
            let c: Vec<f64> = (0..dim)
                .map(|_| {
                    let i = (f % per_axis) as i64 + lo;
                    f /= per_axis;
                    (mesh.xi * (i as f64 + 0.5)).clamp(-halfwidth, halfwidth)
                })
                .collect();
            let dc = defect(&c)?.abs();
            if dc > sup_best.0 {
                sup_best = (dc, c);
            }
        }
    }
    let lip_bound = (1.0 + sd) * eps;
    let sup_bound = sd * delta * lip_g;
    Ok(vec![
        BoundReport::new(
            suite,
            "grid_lip_defect",
            refs::GRID_LEMMA,
            lip_bound,
            lip_best.0,
            0.01,
            1e-12,
        )
        .with_witness(format!(
            "{} {}",
            fmt_point(&lip_best.1),
            fmt_point(&lip_best.2)
        )),
        BoundReport::new(
            suite,
            "grid_sup_defect",
            refs::GRID_LEMMA,
            sup_bound,
            sup_best.0,
            0.01,
            1e-12,
        )
        .with_witness(fmt_point(&sup_best.1)),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{build_cover, CoverOptions, ManifoldSpec};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn bilinear_average() {
        let v = lambda_on_cube(&[0.0, 1.0, 1.0, 2.0], &[0.0, 0.0], 1.0, &[0.5, 0.5]).unwrap();
        assert_eq!(v, 1.0);
        assert!(lambda_on_cube(&[0.0, 1.0, 1.0, 2.0], &[0.0, 0.0], 1.0, &[1.5, 0.5]).is_err());
    }

    #[test]
    fn vertices_and_affine_functions_are_reproduced() {
        let w = [0.2, -0.3, 0.1];
        let l = 0.25;
        let f = |z: &[f64]| 1.5 - 2.0 * z[0] + 0.5 * z[1] + 3.0 * z[2];
        let verts: Vec<Vec<f64>> = (0..8)
            .map(|g| (0..3).map(|j| w[j] + l * ((g >> j & 1) as f64)).collect())
            .collect();
        let vals: Vec<f64> = verts.iter().map(|v| f(v)).collect();
        for (v, fv) in verts.iter().zip(&vals) {
            assert_abs_diff_eq!(
                lambda_on_cube(&vals, &w, l, v).unwrap(),
                *fv,
                epsilon = 1e-14
            );
        }
        let mut r = rng::stream(1, 0, 0);
        for _ in 0..10 {
            let z: Vec<f64> = (0..3).map(|j| w[j] + l * r.gen::<f64>()).collect();
            assert_abs_diff_eq!(
                lambda_on_cube(&vals, &w, l, &z).unwrap(),
                f(&z),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn face_consistency_and_constants() {
        let mesh = HypercubeMesh::new(2, 0.5, 0.1).unwrap();
        assert_eq!(mesh.b, 10);
        assert!(mesh.xi <= 0.1);
        let g = |k: &VertexIndex| Ok(((k[0] * 7 + k[1] * 13) % 5) as f64 - 0.3 * k[0] as f64);
        // a point on the face x = 0.2 between cells (1, *) and (2, *)
        let u = [0.2, 0.137];
        let left = mesh.eval_in_cell(&[1, 1, 0], &u, g).unwrap();
        let right = mesh.eval_in_cell(&[2, 1, 0], &u, g).unwrap();
        assert_abs_diff_eq!(left, right, epsilon = 1e-12);
        assert_eq!(mesh.cell(&u).unwrap()[0], 1);
        // vertices return stored values
        let v = mesh.eval(&[0.3, -0.2], g).unwrap();
        assert_abs_diff_eq!(v, g(&[3, -2, 0]).unwrap(), epsilon = 1e-12);
        let c = mesh.eval(&[0.013, 0.41], |_| Ok(2.5)).unwrap();
        assert_abs_diff_eq!(c, 2.5, epsilon = 1e-12);
        assert!(mesh.eval(&[0.6, 0.0], g).is_err());
    }

    #[test]
    fn quadratic_meets_the_lemma() {
        for d in 1..=2usize {
            let delta = 0.1;
            let eps = (d as f64).sqrt() * delta;
            let g = |u: &[f64]| 0.5 * u.iter().map(|v| v * v).sum::<f64>();
            let dg = |u: &[f64]| u.to_vec();
            let reps = grid_error_check(
                "grid",
                &g,
                Some(&dg),
                d,
                0.5,
                eps,
                delta,
                &GridCheckOptions::default(),
            )
            .unwrap();
            assert_eq!(reps.len(), 2);
            for r in &reps {
                assert!(r.passed(), "d={d}: {r:?}");
            }
        }
    }

    #[test]
    fn affine_g_has_no_defect_and_premise_is_enforced() {
        let g = |u: &[f64]| 0.3 * u[0] - u[1];
        let reps = grid_error_check(
            "grid",
            &g,
            None,
            2,
            0.5,
            1e-6,
            0.1,
            &GridCheckOptions::default(),
        )
        .unwrap();
        for r in &reps {
            assert!(r.sampled_value <= 1e-9, "{r:?}");
        }
        let q = |u: &[f64]| 0.5 * u.iter().map(|v| v * v).sum::<f64>();
        let bad = grid_error_check(
            "grid",
            &q,
            None,
            2,
            0.5,
            1e-3,
            0.1,
            &GridCheckOptions::default(),
        )
        .unwrap();
        assert_eq!(bad[0].status, crate::report::Status::HypothesisViolated);
    }

    #[test]
    fn modulus_is_nondecreasing_and_zero_for_affine() {
        let affine = |u: &[f64]| -> Result<f64> { Ok(2.0 * u[0] + 1.0) };
        let rows = gradient_modulus(
            &[affine],
            1,
            0.3,
            &[0.01, 0.05, 0.1],
            1e-5,
            &ModulusOptions::default(),
        )
        .unwrap();
        for r in &rows {
            assert!(r.modulus <= 1e-6, "{}", r.modulus);
        }
        let curved = |u: &[f64]| -> Result<f64> { Ok((3.0 * u[0]).sin() * u[1].cos()) };
        let rows = gradient_modulus(
            &[curved],
            2,
            0.3,
            &[0.1, 0.01, 0.05],
            1e-5,
            &ModulusOptions::default(),
        )
        .unwrap();
        assert!(rows
            .windows(2)
            .all(|w| w[0].delta < w[1].delta && w[0].modulus <= w[1].modulus));
    }

    #[test]
    fn pi_is_linear_and_rank_is_bounded() {
        let m = Manifold::new(ManifoldSpec::circle(1.0)).unwrap();
        let cover = build_cover(&m, 2, 0.3, &CoverOptions::default()).unwrap();
        let p = build_pi(&m, &cover, 0, 0.05).unwrap();
        let f = |y: &[f64]| -> Result<f64> { Ok(y[0] * y[1] + 0.2 * y[0]) };
        let g = |y: &[f64]| -> Result<f64> { Ok((2.0 * y[1]).sin()) };
        let zero = |_: &[f64]| -> Result<f64> { Ok(0.0) };
        let ys: Vec<Vec<f64>> = (0..25)
            .map(|k| {
                let t = -0.28 + 0.56 * k as f64 / 24.0;
                m.retract(&p.frame().affine(&[t])).unwrap()
            })
            .collect();
        for y in &ys {
            assert_eq!(p.eval(zero, y).unwrap(), 0.0);
            let combo = p.eval(|z| Ok(2.0 * f(z)? + g(z)?), y).unwrap();
            let sep = 2.0 * p.eval(f, y).unwrap() + p.eval(g, y).unwrap();
            assert!((combo - sep).abs() <= 1e-9);
        }
        // evaluation matrix over random inputs: rank at most the vertex count
        let verts = p.mesh.vertex_count() as usize;
        let rows = 5 * verts;
        let cols = 5 * verts;
        let mut r = rng::stream(3, 0, 0);
        let anchors: Vec<(f64, f64, f64)> =
            (0..cols).map(|_| (r.gen(), r.gen(), r.gen())).collect();
        let mut mat = nalgebra::DMatrix::<f64>::zeros(rows, cols);
        for i in 0..rows {
            let t = -0.3 + 0.6 * i as f64 / (rows - 1) as f64;
            let y = m.retract(&p.frame().affine(&[t])).unwrap();
            for (j, (a, b, c)) in anchors.iter().enumerate() {
                let h = |z: &[f64]| -> Result<f64> {
                    Ok(a * z[0] + (b * 5.0 * z[1]).sin() + c * z[1] * z[1])
                };
                mat[(i, j)] = p.eval(h, &y).unwrap();
            }
        }
        let sv = mat.singular_values();
        let smax = sv.max();
        let rank = sv.iter().filter(|s| **s > 1e-8 * smax).count();
        assert!(rank <= verts, "rank {rank} > {verts}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn weights_form_a_partition(t0 in 0.0f64..=1.0, t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0) {
            let c = cube_weights(&[0.0, 0.0, 0.0], 0.5, &[0.5 * t0, 0.5 * t1, 0.5 * t2]).unwrap();
            prop_assert!(c.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!((c.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn multilinear_monomials_are_exact(t0 in 0.0f64..=1.0, t1 in 0.0f64..=1.0, mask in 0usize..4) {
            let w = [-0.2, 0.4];
            let l = 0.3;
            let f = |z: &[f64]| (0..2).filter(|j| mask >> j & 1 == 1).map(|j| z[j]).product::<f64>();
            let vals: Vec<f64> = (0..4)
                .map(|g| f(&[w[0] + l * (g & 1) as f64, w[1] + l * (g >> 1 & 1) as f64]))
                .collect();
            let z = [w[0] + l * t0, w[1] + l * t1];
            prop_assert!((lambda_on_cube(&vals, &w, l, &z).unwrap() - f(&z)).abs() <= 1e-12);
        }
    }
}
