//! The bump kernel `nu_s`, its constants, smoothed pull-backs `f(psi(x + z))`
//! and the smoothing operator `S_n`.

use std::collections::HashMap;
use std::f64::consts::E;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lipschitz::LipschitzFunction;
use crate::manifold::{lemma2_defect, Manifold};
use crate::quadrature::{
    adaptive_gauss, adaptive_simpson, pairwise_sum, tensor_rule_orthants, Integral, TensorRule,
};

/// `exp(1/(r^2 - 1))` inside the unit ball, zero outside.
pub fn bump(r2: f64) -> f64 {
    if r2 < 1.0 {
        (1.0 / (r2 - 1.0)).exp()
    } else {
        0.0
    }
}

fn radial_moment(n: usize) -> Result<f64> {
    let p = n as i32 - 1;
    Ok(adaptive_gauss(|r| bump(r * r) * r.powi(p), 0.0, 1.0, 1e-8)?.value)
}

/// `G = (e * int_0^1 exp(1/(r^2-1)) r^{N-1} dr)^{-1}`.
pub fn compute_g(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::input("dimension must be >= 1"));
    }
    Ok(1.0 / (E * radial_moment(n)?))
}

/// Same constant through adaptive Simpson; used as a cross-check.
pub fn compute_g_simpson(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::input("dimension must be >= 1"));
    }
    let p = n as i32 - 1;
    let v = adaptive_simpson(|r| bump(r * r) * r.powi(p), 0.0, 1.0, 1e-13)?;
    Ok(1.0 / (E * v))
}

/// `2 pi^{N/2} / Gamma(N/2)`.
pub fn sphere_area_closed(n: usize) -> f64 {
    2.0 * std::f64::consts::PI.powf(n as f64 / 2.0) / statrs::function::gamma::gamma(n as f64 / 2.0)
}

/// Area of `S^{N-1}` by the recursion `|S^{k}| = |S^{k-1}| int_0^pi sin^{k-1}`.
pub fn sphere_area_quadrature(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::input("dimension must be >= 1"));
    }
    let mut area = 2.0;
    for k in 2..=n {
        let p = k as i32 - 2;
        area *= adaptive_gauss(|t| t.sin().powi(p), 0.0, std::f64::consts::PI, 1e-13)?.value;
    }
    Ok(area)
}

/// Per-dimension constants of the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConstants {
    pub dim: usize,
    /// Normaliser: `1/A = int_{B_1} exp(1/(|z|^2 - 1)) dz`.
    pub a: f64,
    pub g: f64,
    /// Unit sphere area, by quadrature.
    pub sphere_area: f64,
}

impl KernelConstants {
    /// `A * area / (e G)`, which is 1 in exact arithmetic.
    pub fn identity_ratio(&self) -> f64 {
        self.a * self.sphere_area / (E * self.g)
    }
}

fn constants_uncached(n: usize) -> Result<KernelConstants> {
    let inv_a = if n <= 3 {
        // independent of the radial route: a fine orthant-split cube rule
        let rule = tensor_rule_orthants(n, 48, 1.0);
        rule.integrate(|z| bump(z.iter().map(|v| v * v).sum()))
    } else {
        sphere_area_closed(n) * radial_moment(n)?
    };
    Ok(KernelConstants {
        dim: n,
        a: 1.0 / inv_a,
        g: compute_g(n)?,
        sphere_area: sphere_area_quadrature(n)?,
    })
}

/// Cached [`KernelConstants`] for dimension `n`.
pub fn kernel_constants(n: usize) -> Result<KernelConstants> {
    if n == 0 {
        return Err(Error::input("dimension must be >= 1"));
    }
    static CACHE: OnceLock<Mutex<HashMap<usize, KernelConstants>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(c) = cache.lock().expect("constants cache").get(&n) {
        return Ok(*c);
    }
    let c = constants_uncached(n)?;
    cache.lock().expect("constants cache").insert(n, c);
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadSettings {
    /// Gauss–Legendre nodes per half-axis.
    pub nodes: usize,
    pub check_nodes: usize,
}

impl Default for QuadSettings {
    fn default() -> Self {
        QuadSettings {
            nodes: 24,
            check_nodes: 32,
        }
    }
}

/// `nu_s(x) = s^{-N} nu(x / s)` with its quadrature rules on `[-1, 1]^N`.
#[derive(Debug, Clone)]
pub struct MollifierKernel {
    dim: usize,
    s: f64,
    consts: KernelConstants,
    quad: QuadSettings,
    rule: Arc<TensorRule>,
    check: Arc<TensorRule>,
}

impl MollifierKernel {
    pub fn new(dim: usize, s: f64, quad: QuadSettings) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::input(format!(
                "kernel scale must be positive, got {s}"
            )));
        }
        if quad.nodes < 2 || quad.check_nodes < 2 {
            return Err(Error::input("quadrature needs at least two nodes per axis"));
        }
        Ok(MollifierKernel {
            dim,
            s,
            consts: kernel_constants(dim)?,
            quad,
            rule: Arc::new(tensor_rule_orthants(dim, quad.nodes, 1.0)),
            check: Arc::new(tensor_rule_orthants(dim, quad.check_nodes, 1.0)),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scale(&self) -> f64 {
        self.s
    }

    pub fn constants(&self) -> &KernelConstants {
        &self.consts
    }

    pub fn quad(&self) -> QuadSettings {
        self.quad
    }

    /// `nu_s(x)`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::input("kernel argument has the wrong dimension"));
        }
        let r2 = x.iter().map(|v| v * v).sum::<f64>() / (self.s * self.s);
        Ok(self.consts.a * bump(r2) / self.s.powi(self.dim as i32))
    }

    /// `|D nu_s(x)|_2`.
    pub fn gradient_norm(&self, x: &[f64]) -> f64 {
        let s = self.s;
        let r2 = x.iter().map(|v| v * v).sum::<f64>() / (s * s);
        if r2 >= 1.0 {
            return 0.0;
        }
        let q = r2 - 1.0;
        self.consts.a / s.powi(self.dim as i32 + 1) * bump(r2) * 2.0 * r2.sqrt() / (q * q)
    }

    fn integrate_both(&self, f: impl Fn(&[f64]) -> f64) -> Integral {
        let scale = self.s.powi(self.dim as i32);
        let go = |rule: &TensorRule| {
            let mut z = vec![0.0; self.dim];
            let terms: Vec<f64> = (0..rule.len())
                .map(|k| {
                    for (zi, u) in z.iter_mut().zip(rule.node(k)) {
                        *zi = self.s * u;
                    }
                    rule.weights[k] * f(&z)
                })
                .collect();
            pairwise_sum(&terms) * scale
        };
        let value = go(&self.rule);
        let other = go(&self.check);
        Integral {
            value,
            error: (value - other).abs(),
        }
    }

    /// `int nu_s` by the tensor rule.
    pub fn mass(&self) -> Integral {
        self.integrate_both(|z| self.eval(z).unwrap_or(0.0))
    }

    /// `int |D nu_s|_2` by the tensor rule.
    pub fn gradient_mass(&self) -> Integral {
        self.integrate_both(|z| self.gradient_norm(z))
    }
}

fn check_tube(m: &Manifold, x: &[f64], s: f64) -> Result<()> {
    let d = m.distance(x)?;
    if d + s > m.tube_radius() {
        return Err(Error::domain(
            format!("x + B_s leaves the tube of radius {}", m.tube_radius()),
            d + s,
        ));
    }
    Ok(())
}

/// `int_{B_s} nu_s(z) f(psi(x + z)) dz` by the kernel's tensor rule, with the
/// rule renormalised to unit kernel mass. The error is the gap to the check rule.
pub fn smooth_eval(
    f: &LipschitzFunction,
    m: &Manifold,
    k: &MollifierKernel,
    x: &[f64],
) -> Result<Integral> {
    if x.len() != k.dim || m.ambient_dim() != k.dim {
        return Err(Error::input("point, kernel and manifold dimensions differ"));
    }
    check_tube(m, x, k.s)?;
    let go = |rule: &TensorRule| -> Result<f64> {
        let mut num = Vec::new();
        let mut den = Vec::new();
        for i in 0..rule.len() {
            let u = rule.node(i);
            let w = rule.weights[i] * bump(u.iter().map(|v| v * v).sum());
            if w == 0.0 {
                continue;
            }
            let y: Vec<f64> = x.iter().zip(u).map(|(a, b)| a + k.s * b).collect();
            num.push(w * f.eval(&m.retract(&y)?));
            den.push(w);
        }
        Ok(pairwise_sum(&num) / pairwise_sum(&den))
    };
    let value = go(&k.rule)?;
    let other = go(&k.check)?;
    Ok(Integral {
        value,
        error: (value - other).abs(),
    })
}

/// Fixed lattice `origin + h Z^N` used for the pipeline's smoothing.
///
/// `f_hat(x) = sum nu((w - x)/s) F(w) / sum nu((w - x)/s)` over lattice points
/// `w`. The nodes do not move with `x`, so `f_hat` is smooth even when `F` has
/// kinks, and the weights are a probability vector, so `f_hat` stays within
/// the range of `F` on `x + B_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeRule {
    pub s: f64,
    pub h: f64,
    pub origin: Vec<f64>,
}

impl LatticeRule {
    pub fn new(s: f64, per_radius: usize, origin: &[f64]) -> Result<Self> {
        if !(s > 0.0) || per_radius < 2 {
            return Err(Error::input(
                "lattice needs s > 0 and at least two points per radius",
            ));
        }
        Ok(LatticeRule {
            s,
            h: s / per_radius as f64,
            origin: origin.to_vec(),
        })
    }

    /// Weighted average of `big_f` over the lattice points in `x + B_s`.
    pub fn average(&self, x: &[f64], mut big_f: impl FnMut(&[f64]) -> Result<f64>) -> Result<f64> {
        let n = x.len();
        let lo: Vec<i64> = (0..n)
            .map(|j| ((x[j] - self.s - self.origin[j]) / self.h).ceil() as i64)
            .collect();
        let hi: Vec<i64> = (0..n)
            .map(|j| ((x[j] + self.s - self.origin[j]) / self.h).floor() as i64)
            .collect();
        let mut idx = lo.clone();
        let mut w = vec![0.0; n];
        let mut num = 0.0;
        let mut den = 0.0;
        let mut reference = None;
        let inv = 1.0 / (self.s * self.s);
        'outer: loop {
            let mut r2 = 0.0;
            for j in 0..n {
                w[j] = self.origin[j] + self.h * idx[j] as f64;
                let t = w[j] - x[j];
                r2 += t * t;
            }
            let b = bump(r2 * inv);
            if b > 0.0 {
                // centring on the first value keeps rounding relative to the local spread of F
                let v = big_f(&w)?;
                let r = *reference.get_or_insert(v);
                num += b * (v - r);
                den += b;
            }
            for j in (0..n).rev() {
                idx[j] += 1;
                if idx[j] <= hi[j] {
                    continue 'outer;
                }
                idx[j] = lo[j];
            }
            break;
        }
        if den <= 0.0 {
            return Err(Error::numeric("no lattice point inside the kernel support"));
        }
        Ok(reference.unwrap_or(0.0) + num / den)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationOptions {
    pub samples: usize,
    pub max_halvings: usize,
    pub seed: u64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            samples: 1500,
            max_halvings: 14,
            seed: 3,
        }
    }
}

/// The accepted `delta` with the defect table that led to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaCalibration {
    pub delta: f64,
    pub defect: f64,
    pub threshold: f64,
    /// `(delta, sampled defect)` for every grid value tried.
    pub table: Vec<(f64, f64)>,
}

/// Largest `delta = delta_n 2^{-k}` whose sampled translation defect (pairs at
/// Euclidean distance up to `K delta`, shifts up to `delta`) is at most `1/(n K^2)`.
pub fn calibrate_delta(
    m: &Manifold,
    k: f64,
    n: usize,
    opts: &CalibrationOptions,
) -> Result<DeltaCalibration> {
    if n == 0 {
        return Err(Error::input("n must be >= 1"));
    }
    let threshold = 1.0 / (n as f64 * k * k);
    let r_ball = (n * n) as f64 + m.delta_n();
    let mut table = Vec::new();
    let mut delta = m.delta_n();
    for _ in 0..=opts.max_halvings {
        let est = lemma2_defect(m, r_ball, k * delta, delta, opts.samples, opts.seed)?;
        table.push((delta, est.value));
        if est.value <= threshold {
            return Ok(DeltaCalibration {
                delta,
                defect: est.value,
                threshold,
                table,
            });
        }
        delta *= 0.5;
    }
    Err(Error::calibration(
        "delta",
        format!(
            "no grid value down to {delta:.3e} brings the translation defect below {threshold:.3e}; \
             refine the manifold sampling or increase n"
        ),
    ))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmoothingOptions {
    /// Lattice points per kernel radius; 0 picks 12 for `N <= 2` and 8 above.
    pub lattice_per_radius: usize,
    pub calibration: CalibrationOptions,
}

/// `S_n(f)(x) = f_hat(x) - f_hat(x0)` with `s_n = delta / (2 n K L_n)`.
#[derive(Debug, Clone)]
pub struct SmoothingOperator {
    pub n: usize,
    pub k: f64,
    pub l_n: f64,
    pub delta_n: f64,
    pub calibration: DeltaCalibration,
    pub s_n: f64,
    lattice: LatticeRule,
    manifold: Manifold,
}

impl SmoothingOperator {
    /// Calibrates `delta` and derives `s_n`. `l_n` should already carry any
    /// safety inflation.
    pub fn build(
        m: &Manifold,
        k: f64,
        l_n: f64,
        n: usize,
        opts: &SmoothingOptions,
    ) -> Result<Self> {
        let cal = calibrate_delta(m, k, n, &opts.calibration)?;
        Self::with_delta(m, k, l_n, n, cal, opts.lattice_per_radius)
    }

    /// Assembles the operator from a known calibration.
    pub fn with_delta(
        m: &Manifold,
        k: f64,
        l_n: f64,
        n: usize,
        calibration: DeltaCalibration,
        lattice_per_radius: usize,
    ) -> Result<Self> {
        if n == 0 || !(k >= 1.0) || !(l_n >= 1.0) {
            return Err(Error::input("need n >= 1, K >= 1 and L_n >= 1"));
        }
        let delta_n = m.delta_n();
        if !(calibration.delta > 0.0 && calibration.delta <= delta_n * (1.0 + 1e-12)) {
            return Err(Error::input("calibrated delta must lie in (0, delta_n]"));
        }
        let s_n = calibration.delta / (2.0 * n as f64 * k * l_n);
        let per = match lattice_per_radius {
            0 if m.ambient_dim() <= 2 => 12,
            0 => 8,
            p => p,
        };
        Ok(SmoothingOperator {
            n,
            k,
            l_n,
            delta_n,
            s_n,
            lattice: LatticeRule::new(s_n, per, m.basepoint())?,
            calibration,
            manifold: m.clone(),
        })
    }

    pub fn delta(&self) -> f64 {
        self.calibration.delta
    }

    pub fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    pub fn lattice(&self) -> &LatticeRule {
        &self.lattice
    }

    /// `f_hat_{s_n}(x)`.
    pub fn hat(&self, f: &LipschitzFunction, x: &[f64]) -> Result<f64> {
        check_tube(&self.manifold, x, self.s_n)?;
        self.lattice
            .average(x, |w| Ok(f.eval(&self.manifold.retract(w)?)))
    }

    /// `S_n(f)` with `f_hat(x0)` evaluated once.
    pub fn smoothed(&self, f: &LipschitzFunction) -> Result<Smoothed<'_>> {
        let offset = self.hat(f, self.manifold.basepoint())?;
        Ok(Smoothed {
            op: self,
            f: f.clone(),
            offset,
        })
    }

    /// `S_n(f)(x)`.
    pub fn apply(&self, f: &LipschitzFunction, x: &[f64]) -> Result<f64> {
        self.smoothed(f)?.eval(x)
    }
}

/// `S_n(f)` for one `f`.
#[derive(Debug, Clone)]
pub struct Smoothed<'a> {
    op: &'a SmoothingOperator,
    f: LipschitzFunction,
    offset: f64,
}

impl Smoothed<'_> {
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x == self.op.manifold.basepoint() {
            return Ok(0.0);
        }
        Ok(self.op.hat(&self.f, x)? - self.offset)
    }

    pub fn source(&self) -> &LipschitzFunction {
        &self.f
    }

    /// `f_hat(x0)`.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn operator(&self) -> &SmoothingOperator {
        self.op
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lipschitz::{combination, estimate_lip, random_lip_suite, DomainTag, SuiteSpec};
    use crate::manifold::{GraphProfile, ManifoldSpec};
    use crate::normed_space::{Norm, NormSpec};
    use crate::rng;
    use approx::assert_abs_diff_eq;

    #[test]
    fn kernel_vanishes_on_the_boundary_sphere() {
        let k = MollifierKernel::new(2, 0.3, QuadSettings::default()).unwrap();
        assert_eq!(k.eval(&[0.3, 0.0]).unwrap(), 0.0);
        assert_eq!(k.eval(&[0.0, -0.4]).unwrap(), 0.0);
        assert!(k.eval(&[0.0, 0.29]).unwrap() > 0.0);
        assert!(k.eval(&[0.1]).is_err());
    }

    #[test]
    fn kernel_center_value() {
        // 1/A = 2 pi int_0^1 exp(1/(r^2-1)) r dr = 0.46651239317833 (independent 1-D quadrature)
        let k = MollifierKernel::new(2, 1.0, QuadSettings::default()).unwrap();
        assert_abs_diff_eq!(
            k.eval(&[0.0, 0.0]).unwrap(),
            0.788_573_779_712_677_4,
            epsilon = 1e-8
        );
    }

    #[test]
    fn kernel_is_radial() {
        let k = MollifierKernel::new(3, 0.5, QuadSettings::default()).unwrap();
        let mut r = rng::stream(4, 0, 0);
        for _ in 0..20 {
            let x = rng::in_ball(&mut r, 3, 0.5);
            let q = rng::unit_sphere(&mut r, 3);
            let y = crate::vecops::scale(&q, crate::vecops::norm2(&x));
            assert_abs_diff_eq!(k.eval(&x).unwrap(), k.eval(&y).unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn kernel_mass_is_one() {
        for n in 1..=3 {
            for s in [0.05, 0.1, 0.5] {
                let k = MollifierKernel::new(n, s, QuadSettings::default()).unwrap();
                let m = k.mass();
                assert!((m.value - 1.0).abs() <= 1e-6, "N={n} s={s}: {}", m.value);
            }
        }
    }

    #[test]
    fn constants_identity_and_gradient_bound() {
        for n in 1..=3 {
            let c = kernel_constants(n).unwrap();
            assert!(
                (c.identity_ratio() - 1.0).abs() <= 1e-6,
                "N={n}: {}",
                c.identity_ratio()
            );
            assert!((c.sphere_area / sphere_area_closed(n) - 1.0).abs() < 1e-12);
        }
        let k = MollifierKernel::new(2, 0.25, QuadSettings::default()).unwrap();
        let gm = k.gradient_mass();
        assert!(
            gm.value <= k.constants().g / 0.25 * (1.0 + 1e-3),
            "{}",
            gm.value
        );
        // N = 1 attains the bound exactly
        let k1 = MollifierKernel::new(1, 0.1, QuadSettings::default()).unwrap();
        let g1 = k1.gradient_mass().value * 0.1 / k1.constants().g;
        assert!((g1 - 1.0).abs() < 1e-3, "{g1}");
    }

    #[test]
    fn g_agrees_across_two_rules() {
        for n in 1..=3 {
            let a = compute_g(n).unwrap();
            let b = compute_g_simpson(n).unwrap();
            assert!((a / b - 1.0).abs() <= 1e-8, "N={n}: {a} vs {b}");
        }
        assert!(compute_g(0).is_err());
    }

    fn circle() -> Manifold {
        Manifold::new(ManifoldSpec::circle(1.0)).unwrap()
    }

    #[test]
    fn smoothing_constants_and_flat_linear_functions() {
        let m = circle();
        let k = MollifierKernel::new(2, 0.1, QuadSettings::default()).unwrap();
        // re-basing forces f(x0) = 0, so the base point sits where the step is 0
        let c = LipschitzFunction::new("3", &[-9.0, 0.0], None, DomainTag::Ambient, |x| {
            if x[0] > -5.0 {
                3.0
            } else {
                0.0
            }
        });
        let v = smooth_eval(&c, &m, &k, &[0.0, 1.0]).unwrap();
        assert!((v.value - 3.0).abs() <= 1e-6, "{}", v.value);

        let flat = Manifold::new(ManifoldSpec::graph(2, GraphProfile::Flat, 3.0)).unwrap();
        let x0 = flat.basepoint().to_vec();
        let lin = LipschitzFunction::new("lin", &x0, None, DomainTag::Ambient, |x| {
            0.3 * x[0] - 0.7 * x[1] + 0.2 * x[2]
        });
        let k3 = MollifierKernel::new(3, 0.1, QuadSettings::default()).unwrap();
        for x in [[0.4, -0.2, 0.0], [1.1, 0.7, 0.0]] {
            let v = smooth_eval(&lin, &flat, &k3, &x).unwrap();
            assert!((v.value - lin.eval(&x)).abs() <= 1e-6, "{}", v.value);
        }
    }

    #[test]
    fn circle_smoothing_matches_monte_carlo() {
        // 10^6 rejection samples of nu_{0.1}: mean of psi(x + z)_1 - 1 at x = (1, 0)
        const MC_MEAN: f64 = -6.529_948_942_798_075e-4;
        const MC_SE: f64 = 7.294_213_816_032_931e-7;
        let m = circle();
        let k = MollifierKernel::new(2, 0.1, QuadSettings::default()).unwrap();
        let f =
            LipschitzFunction::new("x1", m.basepoint(), Some(1.0), DomainTag::Ambient, |x| x[0]);
        let v = smooth_eval(&f, &m, &k, &[1.0, 0.0]).unwrap();
        assert!(
            (v.value - MC_MEAN).abs() <= 3.0 * MC_SE,
            "{} vs {MC_MEAN}",
            v.value
        );
        assert!(v.error < 1e-8);
    }

    #[test]
    fn leaving_the_tube_is_a_domain_error() {
        let m = circle();
        let k = MollifierKernel::new(2, 0.6, QuadSettings::default()).unwrap();
        let f = LipschitzFunction::new("x1", m.basepoint(), None, DomainTag::Ambient, |x| x[0]);
        assert!(matches!(
            smooth_eval(&f, &m, &k, &[1.0, 0.0]),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn calibration_examples() {
        let m = circle();
        let k = 2f64.sqrt();
        let opts = CalibrationOptions::default();
        let c5 = calibrate_delta(&m, k, 5, &opts).unwrap();
        assert!(c5.delta > 0.0 && c5.delta <= m.delta_n());
        assert!(c5.defect <= 1.0 / (5.0 * k * k));
        let c10 = calibrate_delta(&m, k, 10, &opts).unwrap();
        assert!(c10.delta <= c5.delta);
        let flat = Manifold::new(ManifoldSpec::graph(1, GraphProfile::Flat, 3.0)).unwrap();
        let cf = calibrate_delta(&flat, 1.0, 5, &opts).unwrap();
        assert_eq!(cf.delta, flat.delta_n());
        assert!(cf.defect <= 1e-12);
    }

    fn linf_setup(n: usize) -> (Manifold, Norm, SmoothingOperator) {
        let m = circle();
        let norm = Norm::new(NormSpec::Pnorm { p: f64::INFINITY }, 2).unwrap();
        let k = 2f64.sqrt();
        // L of the radial projection on the tube |y| >= 1/2
        let op = SmoothingOperator::build(&m, k, 2.2, n, &SmoothingOptions::default()).unwrap();
        (m, norm, op)
    }

    #[test]
    fn sn_vanishes_at_the_base_point_and_stays_close() {
        let n = 5;
        let (m, norm, op) = linf_setup(n);
        assert!(op.s_n <= op.delta() && op.delta() <= op.delta_n);
        let suite = random_lip_suite(
            &SuiteSpec {
                seed: 1,
                count: 5,
                anchors: 6,
                radius: 2.0,
            },
            &m,
            &norm,
        )
        .unwrap();
        let probes = m.sample_ball(30.0, 200);
        for f in &suite {
            let sf = op.smoothed(f).unwrap();
            assert_eq!(sf.eval(m.basepoint()).unwrap(), 0.0);
            for p in &probes {
                let d = (sf.eval(p).unwrap() - f.eval(p)).abs();
                assert!(d <= 1.0 / n as f64, "{d}");
                // each half of the split is at most K L_n s_n
                let h = (op.hat(f, p).unwrap() - f.eval(p)).abs();
                assert!(h <= op.k * op.l_n * op.s_n * (1.0 + 1e-12), "{h}");
            }
            let g = LipschitzFunction::new("sn", m.basepoint(), None, DomainTag::ManifoldOnly, {
                let f = f.clone();
                let op = op.clone();
                move |x| op.apply(&f, x).unwrap()
            });
            let est = estimate_lip(&g, &probes, &norm).unwrap();
            assert!(est.value <= (1.0 + 1.0 / n as f64) * 1.05, "{}", est.value);
        }
    }

    #[test]
    fn sn_is_linear_and_pointwise_continuous() {
        let (m, norm, op) = linf_setup(5);
        let suite = random_lip_suite(
            &SuiteSpec {
                seed: 2,
                count: 5,
                anchors: 6,
                radius: 2.0,
            },
            &m,
            &norm,
        )
        .unwrap();
        let (f, g) = (&suite[3], &suite[4]);
        let h = combination(&[(0.7, f.clone()), (-1.3, g.clone())]).unwrap();
        for p in m.random_points(3.0, 20, 9, "lin") {
            let lhs = op.apply(&h, &p).unwrap();
            let rhs = 0.7 * op.apply(f, &p).unwrap() - 1.3 * op.apply(g, &p).unwrap();
            assert!(
                (lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()),
                "{lhs} vs {rhs}"
            );
        }
        let probes = m.random_points(3.0, 10, 4, "conv");
        let mut last = f64::INFINITY;
        for c in [0.1, 0.4, 0.8, 1.6, 3.2] {
            let fk = f.clamped(c);
            let err = probes
                .iter()
                .map(|p| (op.apply(&fk, p).unwrap() - op.apply(f, p).unwrap()).abs())
                .fold(0.0, f64::max);
            assert!(err <= last + 1e-15);
            last = err;
        }
        assert!(last < 1e-12, "{last}");
    }
}
