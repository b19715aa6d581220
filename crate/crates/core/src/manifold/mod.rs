//! Embedded submanifolds: membership, tangent frames, the nearest-point
//! retraction onto `M`, chart inverses and finite covers.

mod chart;
mod cover;
mod defects;
mod spec;

pub use chart::ChartInverse;
pub use cover::{build_cover, sample_retraction_lip, CoverData, CoverOptions, LipSample};
pub use defects::{
    estimate_reach, lemma1_defect, lemma2_defect, verify_tangent_identity, DefectEstimate,
};
pub use spec::{Basepoint, GraphProfile, ManifoldSpec};

use crate::error::{Error, Result};
use crate::normed_space::ConvexBodySpec;
use crate::rng;
use crate::vecops::{self, add, dot, norm2, scale, sub};

/// Tolerance of the membership test for generated points.
pub const MEMBERSHIP_TOL: f64 = 1e-10;

/// Orthonormal frame `E_x` of the tangent space at `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentFrame {
    pub point: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

impl TangentFrame {
    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    /// `E u`.
    pub fn embed(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.point.len()];
        for (e, &c) in self.vectors.iter().zip(u) {
            for (o, v) in out.iter_mut().zip(e) {
                *o += c * v;
            }
        }
        out
    }

    /// `E^T v`.
    pub fn coords(&self, v: &[f64]) -> Vec<f64> {
        self.vectors.iter().map(|e| dot(e, v)).collect()
    }

    /// Orthogonal projection `P_x v = E E^T v`.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        self.embed(&self.coords(v))
    }

    /// `x + E u`.
    pub fn affine(&self, u: &[f64]) -> Vec<f64> {
        add(&self.point, &self.embed(u))
    }
}

#[derive(Debug, Clone)]
enum Shape {
    Circle {
        r: f64,
    },
    Sphere {
        r: f64,
    },
    Torus {
        big: f64,
        small: f64,
    },
    Graph {
        profile: GraphProfile,
        halfwidth: f64,
    },
    NormSphere {
        body: ConvexBodySpec,
    },
}

/// A validated manifold with its base point and tube radius.
#[derive(Debug, Clone)]
pub struct Manifold {
    spec: ManifoldSpec,
    shape: Shape,
    n: usize,
    d: usize,
    x0: Vec<f64>,
    delta0: f64,
}

impl Manifold {
    pub fn new(spec: ManifoldSpec) -> Result<Self> {
        let shape = match &spec {
            ManifoldSpec::Circle { radius, .. } => {
                positive("radius", *radius)?;
                Shape::Circle { r: *radius }
            }
            ManifoldSpec::Sphere2 { radius, .. } => {
                positive("radius", *radius)?;
                Shape::Sphere { r: *radius }
            }
            ManifoldSpec::Torus { major, minor, .. } => {
                positive("R", *major)?;
                positive("r", *minor)?;
                if minor >= major {
                    return Err(Error::input("torus needs r < R"));
                }
                Shape::Torus {
                    big: *major,
                    small: *minor,
                }
            }
            ManifoldSpec::Graph {
                dim,
                profile,
                domain_halfwidth,
                ..
            } => {
                if !(1..=3).contains(dim) {
                    return Err(Error::input("graph dimension must be 1, 2 or 3"));
                }
                positive("domain_halfwidth", *domain_halfwidth)?;
                Shape::Graph {
                    profile: profile.clone(),
                    halfwidth: *domain_halfwidth,
                }
            }
            ManifoldSpec::NormSphere { profile, .. } => {
                if profile != "paper-phi" {
                    return Err(Error::input(format!("unknown profile `{profile}`")));
                }
                Shape::NormSphere {
                    body: ConvexBodySpec::new(3),
                }
            }
        };
        let n = spec.ambient_dim();
        let d = spec.intrinsic_dim();
        let mut m = Manifold {
            spec,
            shape,
            n,
            d,
            x0: vec![0.0; n],
            delta0: f64::INFINITY,
        };
        m.x0 = match m.spec.basepoint().clone() {
            Basepoint::Named(s) if s == "auto" => m.auto_basepoint(),
            Basepoint::Named(s) => return Err(Error::input(format!("unknown basepoint `{s}`"))),
            Basepoint::Point(p) => {
                if p.len() != n || !vecops::all_finite(&p) {
                    return Err(Error::input("basepoint has wrong dimension"));
                }
                let res = m.membership_residual(&p);
                if res > 1e-8 {
                    return Err(Error::domain("basepoint is not on the manifold", res));
                }
                // snap onto M so that every derived quantity is exact
                m.project(&p)?
            }
        };
        m.delta0 = m.compute_tube_radius();
        Ok(m)
    }

    fn auto_basepoint(&self) -> Vec<f64> {
        match &self.shape {
            Shape::Circle { r } => vec![*r, 0.0],
            Shape::Sphere { r } => vec![0.0, 0.0, *r],
            Shape::Torus { big, small } => vec![big + small, 0.0, 0.0],
            Shape::Graph { profile, .. } => {
                let mut p = vec![0.0; self.n];
                p[self.d] = profile.value(&vec![0.0; self.d]);
                p
            }
            Shape::NormSphere { .. } => vec![0.0, 0.0, 2.0],
        }
    }

    fn compute_tube_radius(&self) -> f64 {
        match &self.shape {
            Shape::Circle { r } | Shape::Sphere { r } => 0.5 * r,
            Shape::Torus { small, .. } => 0.5 * small,
            Shape::Graph { profile, .. } => {
                let k = profile.curvature_bound();
                let sampled = estimate_reach(self, 600, 0x7ea7);
                let bound = if k > 0.0 { 1.0 / k } else { f64::INFINITY };
                // the graph is unbounded; cap the radius so tube sampling stays finite
                (0.5 * sampled.min(bound)).min(4.0)
            }
            Shape::NormSphere { .. } => (0.5 * estimate_reach(self, 800, 0x7ea7)).min(1.0),
        }
    }

    pub fn spec(&self) -> &ManifoldSpec {
        &self.spec
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.d
    }

    pub fn basepoint(&self) -> &[f64] {
        &self.x0
    }

    /// Euclidean tube radius `delta_0` inside which `retract` is defined.
    pub fn tube_radius(&self) -> f64 {
        self.delta0
    }

    /// `delta_n = min(delta_0 / 2, 1)`.
    pub fn delta_n(&self) -> f64 {
        (0.5 * self.delta0).min(1.0)
    }

    /// `true` when the manifold is bounded.
    pub fn is_compact(&self) -> bool {
        !matches!(self.shape, Shape::Graph { .. })
    }

    /// Absolute residual of the defining equation.
    pub fn membership_residual(&self, y: &[f64]) -> f64 {
        match &self.shape {
            Shape::Circle { r } | Shape::Sphere { r } => (norm2(y) - r).abs(),
            Shape::Torus { big, small } => {
                let rho = (y[0] * y[0] + y[1] * y[1]).sqrt();
                (((rho - big).powi(2) + y[2] * y[2]).sqrt() - small).abs()
            }
            Shape::Graph { profile, .. } => (y[self.d] - profile.value(&y[..self.d])).abs(),
            Shape::NormSphere { body } => (body.body_fn(y) - 1.0).abs(),
        }
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        y.len() == self.n && self.membership_residual(y) <= MEMBERSHIP_TOL
    }

    fn check_dim(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.n {
            return Err(Error::input(format!(
                "expected a point of R^{}, got length {}",
                self.n,
                y.len()
            )));
        }
        if !vecops::all_finite(y) {
            return Err(Error::input("non-finite coordinates"));
        }
        Ok(())
    }

    /// Nearest point of `M` without the tube check. Fails only where the
    /// projection is undefined (axis, center) or the solver diverges.
    pub fn project(&self, y: &[f64]) -> Result<Vec<f64>> {
        match &self.shape {
            Shape::Circle { r } | Shape::Sphere { r } => {
                let len = norm2(y);
                if len == 0.0 {
                    return Err(Error::domain("projection undefined at the center", *r));
                }
                Ok(scale(y, r / len))
            }
            Shape::Torus { big, small } => {
                let rho = (y[0] * y[0] + y[1] * y[1]).sqrt();
                if rho == 0.0 {
                    return Err(Error::domain("projection undefined on the axis", *big));
                }
                let q = [big * y[0] / rho, big * y[1] / rho, 0.0];
                let w = sub(y, &q);
                let len = norm2(&w);
                if len == 0.0 {
                    return Err(Error::domain(
                        "projection undefined on the core circle",
                        *small,
                    ));
                }
                Ok(add(&q, &scale(&w, small / len)))
            }
            Shape::Graph { profile, .. } => project_graph(profile, y, self.d),
            Shape::NormSphere { body } => project_norm_sphere(body, y),
        }
    }

    /// Euclidean distance from `y` to `M` where it is cheap to get exactly.
    pub fn distance(&self, y: &[f64]) -> Result<f64> {
        match &self.shape {
            Shape::Circle { r } | Shape::Sphere { r } => Ok((norm2(y) - r).abs()),
            Shape::Torus { big, small } => {
                let rho = (y[0] * y[0] + y[1] * y[1]).sqrt();
                Ok((((rho - big).powi(2) + y[2] * y[2]).sqrt() - small).abs())
            }
            _ => Ok(norm2(&sub(y, &self.project(y)?))),
        }
    }

    /// The retraction `psi`: nearest-point projection, defined on the open tube
    /// of radius `delta_0`.
    pub fn retract(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(y)?;
        let dist = self.distance(y)?;
        if dist >= self.delta0 {
            return Err(Error::domain("point outside the retraction tube", dist));
        }
        self.project(y)
    }

    /// Unit normal vectors at `x` (orthonormal complement of the tangent frame).
    pub fn normals(&self, frame: &TangentFrame) -> Vec<Vec<f64>> {
        let mut cands: Vec<Vec<f64>> = frame.vectors.clone();
        for k in 0..self.n {
            let mut e = vec![0.0; self.n];
            e[k] = 1.0;
            cands.push(e);
        }
        let basis = vecops::gram_schmidt(&cands, self.n, 1e-8);
        basis[self.d..].to_vec()
    }

    /// Orthonormal tangent frame at a point of `M`.
    pub fn tangent_frame(&self, x: &[f64]) -> Result<TangentFrame> {
        self.check_dim(x)?;
        let res = self.membership_residual(x);
        if res > 1e-8 {
            return Err(Error::domain("point is not on the manifold", res));
        }
        let vectors = match &self.shape {
            Shape::Circle { .. } => {
                let t = vecops::normalize(&[-x[1], x[0]]).expect("nonzero on the circle");
                vec![t]
            }
            Shape::Sphere { .. } => {
                let nrm = vecops::normalize(x).expect("nonzero on the sphere");
                self.complement_of(&[nrm])
            }
            Shape::Torus { .. } => {
                let rho = (x[0] * x[0] + x[1] * x[1]).sqrt();
                let (c, s) = (x[0] / rho, x[1] / rho);
                let t1 = vec![-s, c, 0.0];
                let w = [x[0] - 0.0, x[1], x[2]];
                let big = match self.shape {
                    Shape::Torus { big, .. } => big,
                    _ => unreachable!(),
                };
                let tube = [w[0] - big * c, w[1] - big * s, w[2]];
                let nrm = vecops::normalize(&tube).expect("off the core circle");
                // second direction: along the meridian, orthogonal to t1 and the normal
                let t2 = [
                    t1[1] * nrm[2] - t1[2] * nrm[1],
                    t1[2] * nrm[0] - t1[0] * nrm[2],
                    t1[0] * nrm[1] - t1[1] * nrm[0],
                ];
                vec![t1, t2.to_vec()]
            }
            Shape::Graph { profile, .. } => {
                let g = profile.gradient(&x[..self.d]);
                let cands: Vec<Vec<f64>> = (0..self.d)
                    .map(|j| {
                        let mut v = vec![0.0; self.n];
                        v[j] = 1.0;
                        v[self.d] = g[j];
                        v
                    })
                    .collect();
                vecops::gram_schmidt(&cands, self.d, 1e-12)
            }
            Shape::NormSphere { body } => {
                let nrm = vecops::normalize(&body.body_gradient(x))
                    .ok_or_else(|| Error::numeric("vanishing body gradient"))?;
                self.complement_of(&[nrm])
            }
        };
        if vectors.len() != self.d {
            return Err(Error::numeric("tangent frame construction degenerated"));
        }
        Ok(TangentFrame {
            point: x.to_vec(),
            vectors,
        })
    }

    fn complement_of(&self, normals: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut cands: Vec<Vec<f64>> = normals.to_vec();
        for k in 0..self.n {
            let mut e = vec![0.0; self.n];
            e[k] = 1.0;
            cands.push(e);
        }
        let basis = vecops::gram_schmidt(&cands, self.n, 1e-8);
        basis[normals.len()..].to_vec()
    }

    /// The `i`-th point of a deterministic low-discrepancy sequence on `M`
    /// (unfiltered; graphs are sampled over their domain box).
    pub fn sequence_point(&self, i: u64, count_hint: u64) -> Vec<f64> {
        use std::f64::consts::PI;
        match &self.shape {
            Shape::Circle { r } => {
                let t = 2.0 * PI * rng::golden(i);
                vec![r * t.cos(), r * t.sin()]
            }
            Shape::Sphere { r } => {
                let p = rng::fibonacci_sphere(i % count_hint.max(1), count_hint.max(1));
                scale(&p, *r)
            }
            Shape::Torus { big, small } => {
                let h = rng::halton(i, 2);
                let (a, b) = (2.0 * PI * h[0], 2.0 * PI * h[1]);
                let rho = big + small * b.cos();
                vec![rho * a.cos(), rho * a.sin(), small * b.sin()]
            }
            Shape::Graph { profile, halfwidth } => {
                let h = rng::halton(i, self.d);
                let u: Vec<f64> = h.iter().map(|t| (2.0 * t - 1.0) * halfwidth).collect();
                let mut p = u.clone();
                p.push(profile.value(&u));
                p
            }
            Shape::NormSphere { body } => {
                let v = rng::fibonacci_sphere(i % count_hint.max(1), count_hint.max(1));
                let g = body.gauge(&v, 1e-15).expect("finite direction");
                scale(&v, 1.0 / g)
            }
        }
    }

    /// Up to `count` deterministic points of `M` within Euclidean distance
    /// `radius` of the base point, in a fixed order.
    pub fn sample_ball(&self, radius: f64, count: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(count);
        let cap = (count as u64).saturating_mul(50).max(1000);
        let hint = self.sequence_hint(radius, count);
        let mut i = 0u64;
        while out.len() < count && i < cap {
            let mut p = self.sequence_point(i, hint);
            i += 1;
            if let Shape::NormSphere { .. } = self.shape {
                // snap the gauge-scaled point onto the level set exactly
                if let Ok(q) = self.project(&p) {
                    p = q;
                }
            }
            if vecops::dist2(&p, &self.x0) <= radius {
                out.push(p);
            }
        }
        out
    }

    fn sequence_hint(&self, radius: f64, count: usize) -> u64 {
        match &self.shape {
            Shape::Sphere { r } => {
                // a Fibonacci lattice of the whole sphere, dense enough that
                // `count` points fall inside the ball
                let frac = spherical_cap_fraction(radius / r);
                ((count as f64 / frac).ceil() as u64).max(count as u64)
            }
            Shape::NormSphere { .. } => count as u64,
            _ => count as u64,
        }
    }

    /// Seeded random points of `M` within distance `radius` of the base point.
    pub fn random_points(&self, radius: f64, count: usize, seed: u64, tag: &str) -> Vec<Vec<f64>> {
        let purpose = rng::purpose(tag);
        let mut out = Vec::with_capacity(count);
        let mut i = 0u64;
        let cap = (count as u64).saturating_mul(200).max(1000);
        while out.len() < count && i < cap {
            let mut r = rng::stream(seed, purpose, i);
            i += 1;
            if let Some(p) = self.random_point(&mut r, radius) {
                out.push(p);
            }
        }
        out
    }

    fn random_point(&self, r: &mut rand_chacha::ChaCha8Rng, radius: f64) -> Option<Vec<f64>> {
        use rand::Rng;
        use std::f64::consts::PI;
        let p = match &self.shape {
            Shape::Circle { .. } | Shape::Sphere { .. } | Shape::NormSphere { .. } => {
                let v = rng::unit_sphere(r, self.n);
                self.project(&v).ok()?
            }
            Shape::Torus { big, small } => {
                // rejection on the area density rho / (R + r) keeps the sample uniform
                loop {
                    let a = 2.0 * PI * r.gen::<f64>();
                    let b = 2.0 * PI * r.gen::<f64>();
                    let rho = big + small * b.cos();
                    if r.gen::<f64>() * (big + small) <= rho {
                        break vec![rho * a.cos(), rho * a.sin(), small * b.sin()];
                    }
                }
            }
            Shape::Graph { profile, halfwidth } => {
                let lim = halfwidth.min(radius + norm2(&self.x0[..self.d]));
                let u: Vec<f64> = (0..self.d)
                    .map(|_| (2.0 * r.gen::<f64>() - 1.0) * lim)
                    .collect();
                let mut p = u.clone();
                p.push(profile.value(&u));
                p
            }
        };
        (vecops::dist2(&p, &self.x0) <= radius).then_some(p)
    }

    /// A point of `M` near `x`: `psi(x + t v)` for a unit tangent direction `v`.
    pub fn walk(&self, frame: &TangentFrame, dir: &[f64], t: f64) -> Result<Vec<f64>> {
        let v = frame.embed(dir);
        self.project(&vecops::axpy(&frame.point, t, &v))
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::input(format!("{name} must be positive, got {v}")))
    }
}

/// Area fraction of the unit sphere within Euclidean distance `t` of a point.
fn spherical_cap_fraction(t: f64) -> f64 {
    if t >= 2.0 {
        1.0
    } else {
        // cap height h = t^2 / 2 on the unit sphere; area fraction h / 2
        (t * t / 4.0).clamp(1e-6, 1.0)
    }
}

fn project_graph(profile: &GraphProfile, y: &[f64], d: usize) -> Result<Vec<f64>> {
    let a = &y[..d];
    let b = y[d];
    let mut u = a.to_vec();
    for _ in 0..100 {
        let g = profile.value(&u);
        let grad = profile.gradient(&u);
        let hess = profile.hessian_diag(&u);
        let r = g - b;
        let rhs: Vec<f64> = (0..d).map(|j| (u[j] - a[j]) + r * grad[j]).collect();
        let m = nalgebra::DMatrix::from_fn(d, d, |i, j| {
            let mut v = grad[i] * grad[j];
            if i == j {
                v += 1.0 + r * hess[i];
            }
            v
        });
        let step = match m.clone().cholesky() {
            Some(ch) => ch.solve(&nalgebra::DVector::from_column_slice(&rhs)),
            // far from the graph the Hessian may be indefinite: take a damped gradient step
            None => nalgebra::DVector::from_iterator(d, rhs.iter().map(|v| 0.5 * v)),
        };
        let mut moved = 0.0f64;
        for j in 0..d {
            u[j] -= step[j];
            moved = moved.max(step[j].abs());
        }
        if moved <= 1e-15 * (1.0 + norm2(&u)) {
            break;
        }
    }
    let mut p = u.clone();
    p.push(profile.value(&u));
    if !vecops::all_finite(&p) {
        return Err(Error::numeric("graph projection diverged"));
    }
    Ok(p)
}

fn project_norm_sphere(body: &ConvexBodySpec, y: &[f64]) -> Result<Vec<f64>> {
    let g0 = body.gauge(y, 1e-15)?;
    if g0 == 0.0 {
        return Err(Error::domain("projection undefined at the origin", 1.0));
    }
    let mut p = scale(y, 1.0 / g0);
    let grad = body.body_gradient(&p);
    let gg = dot(&grad, &grad);
    let mut lam = dot(&sub(y, &p), &grad) / gg;
    // Newton on  p - y - lam * grad Phi(p) = 0,  Phi(p) = 1
    for _ in 0..60 {
        let grad = body.body_gradient(&p);
        let hess = body.body_hessian_diag(&p);
        let mut f = vec![0.0; 4];
        for k in 0..3 {
            f[k] = p[k] - y[k] - lam * grad[k];
        }
        f[3] = body.body_fn(&p) - 1.0;
        let jac = nalgebra::Matrix4::from_fn(|i, j| match (i, j) {
            (3, 3) => 0.0,
            (3, j) => grad[j],
            (i, 3) => -grad[i],
            (i, j) if i == j => 1.0 - lam * hess[i],
            _ => 0.0,
        });
        let rhs = nalgebra::Vector4::from_column_slice(&f);
        let step = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::numeric("singular Newton system in norm-sphere projection"))?;
        for k in 0..3 {
            p[k] -= step[k];
        }
        lam -= step[3];
        if step.amax() <= 1e-15 * (1.0 + norm2(&p)) {
            break;
        }
    }
    // remove the last rounding drift off the level set along the radial direction
    let g = body.gauge(&p, 1e-16)?;
    let q = scale(&p, 1.0 / g);
    if !vecops::all_finite(&q) {
        return Err(Error::numeric("norm-sphere projection diverged"));
    }
    Ok(q)
}
