//! Cauchy transform, its two real branches and the R-transform.
//!
//! A one-cut measure on [a, b] is stored through the factor ρ̂ in
//! ν(x) = ρ̂(x) √((b-x)(x-a)), expanded in second-kind Chebyshev polynomials
//! of t = (x - c)/r with c, r the centre and half-width of the support.
//! With w = r / ((z - c) + √(z-a)√(z-b)) (so |w| < 1 off the cut) every mode
//! has a closed-form Stieltjes transform and
//!
//!   g(z) = π r Σ_j q_j w^{j+1} =: P(w).
//!
//! For an equilibrium measure V'(x) = P(w) + P(1/w), so the second branch
//! h = V' - g is P evaluated at |w| > 1 and P is a monotone bijection of ℝ.

use crate::hexfloat;
use crate::quad::chebyshev_u_rule;
use crate::{Error, Result};
use num_complex::Complex64;
use num_traits::{Num, One, Zero};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Order of the R-series used near k = 0.
pub const SERIES_ORDER: usize = 10;
/// Below this |k| the R-transform is evaluated from its power series.
pub const SERIES_RADIUS: f64 = 1e-3;
/// Junction window half-width, relative to g(b) - g(a).
pub const JUNCTION_WINDOW_REL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralMeasure {
    #[serde(with = "hexfloat")]
    pub a: f64,
    #[serde(with = "hexfloat")]
    pub b: f64,
    /// Coefficients q_j of ρ̂ in the U_j(t) basis.
    #[serde(with = "hexfloat::vec")]
    pub density_coeffs: Vec<f64>,
    #[serde(with = "hexfloat")]
    pub mass: f64,
}

fn clenshaw_u(q: &[f64], t: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &qk in q.iter().rev() {
        let b0 = qk + 2.0 * t * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    b1
}

fn chebyshev_t(n: usize, t: f64) -> f64 {
    if t.abs() <= 1.0 {
        (n as f64 * t.acos()).cos()
    } else {
        let (mut p0, mut p1) = (1.0, t);
        if n == 0 {
            return 1.0;
        }
        for _ in 1..n {
            let p2 = 2.0 * t * p1 - p0;
            p0 = p1;
            p1 = p2;
        }
        p1
    }
}

impl SpectralMeasure {
    /// Builds a measure and checks unit mass and non-negativity.
    pub fn new(a: f64, b: f64, density_coeffs: Vec<f64>) -> Result<Self> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Domain(format!("invalid support [{a}, {b}]")));
        }
        let r = 0.5 * (b - a);
        let mass = if density_coeffs.is_empty() {
            0.0
        } else {
            r * r * density_coeffs[0] * PI / 2.0
        };
        let m = SpectralMeasure { a, b, density_coeffs, mass };
        m.validate()?;
        Ok(m)
    }

    /// Semicircle of radius 2 centred at 0.
    pub fn semicircle() -> Self {
        SpectralMeasure::new(-2.0, 2.0, vec![1.0 / (2.0 * PI)]).expect("valid semicircle")
    }

    pub fn validate(&self) -> Result<()> {
        if (self.mass - 1.0).abs() > 1e-10 {
            return Err(Error::Model(format!("measure has mass {} (expected 1)", self.mass)));
        }
        let nodes = crate::quad::chebyshev_t_nodes(4 * self.density_coeffs.len() + 16);
        for t in nodes.into_iter().chain([-1.0, 1.0]) {
            if clenshaw_u(&self.density_coeffs, t) < -1e-12 {
                return Err(Error::Model(format!(
                    "negative density factor at x = {}",
                    self.center() + self.half_width() * t
                )));
            }
        }
        Ok(())
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.a + self.b)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.b - self.a)
    }

    /// The factor ρ̂ at x (meaningful on [a, b]).
    pub fn density_factor(&self, x: f64) -> f64 {
        clenshaw_u(&self.density_coeffs, (x - self.center()) / self.half_width())
    }

    /// Density ν(x); zero off the support.
    pub fn density(&self, x: f64) -> f64 {
        if x <= self.a || x >= self.b {
            return 0.0;
        }
        self.density_factor(x) * ((self.b - x) * (x - self.a)).sqrt()
    }

    /// Uniformizing variable w(z), |w| ≤ 1, with w(b) = 1 and w(a) = -1.
    pub fn w_of_z(&self, z: Complex64) -> Complex64 {
        let s = (z - self.a).sqrt() * (z - self.b).sqrt();
        let d = (z - self.center()) + s;
        Complex64::new(self.half_width(), 0.0) / d
    }

    /// P(w) = π r Σ_j q_j w^{j+1}, the Cauchy transform in the w variable.
    pub fn p_of_w(&self, w: Complex64) -> Complex64 {
        let mut acc = Complex64::zero();
        for &q in self.density_coeffs.iter().rev() {
            acc = acc * w + q;
        }
        acc * w * (PI * self.half_width())
    }

    pub fn p_real(&self, w: f64) -> f64 {
        let mut acc = 0.0;
        for &q in self.density_coeffs.iter().rev() {
            acc = acc * w + q;
        }
        acc * w * PI * self.half_width()
    }

    pub fn p_real_derivative(&self, w: f64) -> f64 {
        let mut acc = 0.0;
        for (j, &q) in self.density_coeffs.iter().enumerate().rev() {
            acc = acc * w + (j as f64 + 1.0) * q;
        }
        acc * PI * self.half_width()
    }

    pub fn x_of_w(&self, w: f64) -> f64 {
        self.center() + 0.5 * self.half_width() * (w + 1.0 / w)
    }

    fn on_cut(&self, z: Complex64) -> bool {
        z.im == 0.0 && z.re > self.a && z.re < self.b
    }

    /// Cauchy transform g(z) = ∫ dν(x)/(z - x), evaluated mode by mode.
    pub fn cauchy_g(&self, z: Complex64) -> Result<Complex64> {
        if self.on_cut(z) {
            return Err(Error::Domain(format!("z = {z} lies on the support")));
        }
        Ok(self.p_of_w(self.w_of_z(z)))
    }

    /// The same transform by second-kind Gauss–Chebyshev quadrature, doubling
    /// the node count from 256 until the relative change drops below 1e-12.
    pub fn cauchy_g_quadrature(&self, z: Complex64) -> Result<Complex64> {
        if self.on_cut(z) {
            return Err(Error::Domain(format!("z = {z} lies on the support")));
        }
        let (c, r) = (self.center(), self.half_width());
        let tau = (z - c) / r;
        let eval = |n: usize| -> Complex64 {
            let (s, w) = chebyshev_u_rule(n);
            let mut acc = Complex64::zero();
            for (si, wi) in s.iter().zip(&w) {
                acc += wi * clenshaw_u(&self.density_coeffs, *si) / (tau - si);
            }
            acc * r
        };
        let mut n = 256;
        let mut prev = eval(n);
        while n < 1 << 20 {
            n *= 2;
            let cur = eval(n);
            if (cur - prev).norm() <= 1e-12 * cur.norm() {
                return Ok(cur);
            }
            prev = cur;
        }
        Err(Error::Convergence(format!("quadrature for g({z}) did not settle")))
    }

    /// τ_n = ∫ T_n(t) dν for n ≥ 1 (zero past deg ρ̂ + 2).
    fn chebyshev_t_moments(&self) -> Vec<f64> {
        let q = &self.density_coeffs;
        let r2 = self.half_width().powi(2);
        let qa = |j: isize| if j >= 0 && (j as usize) < q.len() { q[j as usize] } else { 0.0 };
        (0..q.len() + 2)
            .map(|n| {
                if n == 0 {
                    self.mass
                } else if n == 1 {
                    r2 * PI / 4.0 * qa(1)
                } else {
                    r2 * PI / 4.0 * (qa(n as isize) - qa(n as isize - 2))
                }
            })
            .collect()
    }

    /// Logarithmic potential L(x) = ∫ ln|x - y| dν(y) for any real x.
    pub fn log_potential(&self, x: f64) -> f64 {
        let (c, r) = (self.center(), self.half_width());
        let tau = (x - c) / r;
        let tm = self.chebyshev_t_moments();
        if tau.abs() <= 1.0 {
            let mut s = self.mass * (r.ln() - 2f64.ln());
            for (n, &tn) in tm.iter().enumerate().skip(1) {
                s -= 2.0 * tn * chebyshev_t(n, tau) / n as f64;
            }
            s
        } else {
            self.log_transform(Complex64::new(x, 0.0)).re
        }
    }

    /// G(z) = ∫ ln(z - y) dν(y), principal logarithm, cut along (-∞, b].
    pub fn log_transform(&self, z: Complex64) -> Complex64 {
        let r = self.half_width();
        let w = self.w_of_z(z);
        let tm = self.chebyshev_t_moments();
        let mut series = Complex64::zero();
        let mut wn = Complex64::one();
        for (n, &tn) in tm.iter().enumerate().skip(1) {
            wn *= w;
            series += wn * (tn / n as f64);
        }
        let lw = if z.im == 0.0 && z.re < self.a {
            Complex64::new((2.0 * w.re.abs()).ln(), -PI)
        } else {
            (w * 2.0).ln()
        };
        (Complex64::new(r.ln(), 0.0) - lw) * self.mass - series * 2.0
    }

    /// Raw moments m_0..=m_n, exact up to rounding for polynomial ρ̂.
    pub fn moments(&self, n: usize) -> Vec<f64> {
        let (c, r) = (self.center(), self.half_width());
        let (s, w) = chebyshev_u_rule(self.density_coeffs.len() + n + 2);
        (0..=n)
            .map(|k| {
                r * r
                    * s.iter()
                        .zip(&w)
                        .map(|(si, wi)| wi * clenshaw_u(&self.density_coeffs, *si) * (c + r * si).powi(k as i32))
                        .sum::<f64>()
            })
            .collect()
    }

    /// Edge values g(a) = P(-1), g(b) = P(1).
    pub fn branch_point(&self) -> BranchPoint {
        BranchPoint {
            a: self.a,
            b: self.b,
            g_a: self.p_real(-1.0),
            g_b: self.p_real(1.0),
        }
    }
}

/// Support edges and the Cauchy transform's values there, where the g and h
/// branches meet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub a: f64,
    pub b: f64,
    pub g_a: f64,
    pub g_b: f64,
}

impl BranchPoint {
    pub fn window(&self) -> f64 {
        JUNCTION_WINDOW_REL * (self.g_b - self.g_a)
    }
}

/// Truncated power series Σ coeffs[i] x^i over any numeric field.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSeries<T> {
    pub coeffs: Vec<T>,
}

impl<T: Num + Clone> PowerSeries<T> {
    pub fn new(coeffs: Vec<T>) -> Self {
        PowerSeries { coeffs }
    }

    pub fn truncation_order(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    fn mul_trunc(a: &[T], b: &[T], len: usize) -> Vec<T> {
        let mut out = vec![T::zero(); len];
        for (i, ai) in a.iter().enumerate().take(len) {
            if ai.is_zero() {
                continue;
            }
            for (j, bj) in b.iter().enumerate().take(len - i) {
                out[i + j] = out[i + j].clone() + ai.clone() * bj.clone();
            }
        }
        out
    }

    fn inverse_trunc(a: &[T], len: usize) -> Vec<T> {
        let mut inv = vec![T::zero(); len];
        inv[0] = T::one() / a[0].clone();
        for n in 1..len {
            let mut s = T::zero();
            for k in 1..=n.min(a.len() - 1) {
                s = s + a[k].clone() * inv[n - k].clone();
            }
            inv[n] = T::zero() - s * inv[0].clone();
        }
        inv
    }
}

impl PowerSeries<f64> {
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    /// Σ coeffs[i] x^{i+1}/(i+1).
    pub fn eval_antiderivative(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (i, c)| acc * x + c / (i as f64 + 1.0))
            * x
    }
}

/// Free cumulants from moments by series reversion of the moment generating
/// function. Input holds [m_0 = 1, m_1, …, m_n]; output holds [c_1, …, c_n],
/// i.e. the coefficients of R(k) = Σ c_j k^{j-1}.
pub fn r_series<T: Num + Clone>(moments: &PowerSeries<T>) -> Result<PowerSeries<T>> {
    let m = &moments.coeffs;
    if m.len() < 3 {
        return Err(Error::Arity("moment series needs truncation order >= 2".into()));
    }
    if m[0] != T::one() {
        return Err(Error::Domain("moment series must start with m_0 = 1".into()));
    }
    let n = m.len() - 1;
    let len = n + 1;
    // k = u M(u);  u = k Φ(k) with Φ_i = [u^i] M^{-(i+1)} / (i+1).
    let minv = PowerSeries::<T>::inverse_trunc(m, len);
    let mut power = minv.clone();
    let mut phi = Vec::with_capacity(len);
    let mut idx = T::one();
    for i in 0..len {
        phi.push(power[i].clone() / idx.clone());
        power = PowerSeries::<T>::mul_trunc(&power, &minv, len);
        idx = idx + T::one();
    }
    // R(k) = (1/Φ(k) - 1)/k.
    let psi = PowerSeries::<T>::inverse_trunc(&phi, len);
    Ok(PowerSeries::new(psi[1..].to_vec()))
}

/// Real-axis structure of a one-cut Cauchy transform: the g branch outside
/// the support, the second branch h meeting it at the edges, and the
/// R-transform stitched from both.
pub trait OneCutModel {
    fn branch_point(&self) -> BranchPoint;

    /// g on the real axis outside the support.
    fn g_real(&self, x: f64) -> Result<f64>;

    /// The point x outside [a, b] with g(x) = k, for k in [g(a), g(b)]
    /// (accepted up to one junction window past either edge).
    fn g_inverse(&self, k: f64) -> Result<f64>;

    /// The point x outside (a, b) with h(x) = k, for k outside (g(a), g(b))
    /// (accepted up to one junction window inside either edge).
    fn h_inverse(&self, k: f64) -> Result<f64>;

    /// c_1..c_SERIES_ORDER for the series branch near k = 0.
    fn free_cumulants(&self) -> Vec<f64>;

    /// R(k), stitched from the series, g and h branches.
    fn r_eval(&self, k: f64) -> Result<f64> {
        if k.abs() < SERIES_RADIUS {
            return Ok(PowerSeries::new(self.free_cumulants()).eval(k));
        }
        let bp = self.branch_point();
        let win = bp.window();
        let near = (k - bp.g_b).abs() < win || (k - bp.g_a).abs() < win;
        if near {
            let xg = self.g_inverse(k)?;
            let xh = self.h_inverse(k)?;
            return Ok(0.5 * (xg + xh) - 1.0 / k);
        }
        let x = if k > bp.g_a && k < bp.g_b {
            self.g_inverse(k)?
        } else {
            self.h_inverse(k)?
        };
        Ok(x - 1.0 / k)
    }

    /// Blue's function b(k) = 1/k + R(k).
    fn blue_fn(&self, k: f64) -> Result<f64> {
        if k == 0.0 {
            return Err(Error::Pole("Blue's function has a pole at k = 0".into()));
        }
        Ok(1.0 / k + self.r_eval(k)?)
    }
}

/// Solves P(w) = k for real w; P is increasing on ℝ for convex potentials.
pub fn solve_p(measure: &SpectralMeasure, k: f64, hint: Option<f64>) -> Result<f64> {
    if k == 0.0 {
        return Err(Error::Pole("k = 0 corresponds to z = ∞".into()));
    }
    let f = |w: f64| measure.p_real(w) - k;
    let (mut lo, mut hi) = if k > 0.0 { (0.0, 1.0) } else { (-1.0, 0.0) };
    let mut guard = 0;
    while f(lo) > 0.0 || f(hi) < 0.0 {
        if k > 0.0 {
            hi *= 2.0;
        } else {
            lo *= 2.0;
        }
        guard += 1;
        if guard > 200 {
            return Err(Error::Numeric(format!("cannot bracket P(w) = {k}")));
        }
    }
    let r = measure.half_width();
    let mut w = hint.unwrap_or(0.5 * r * k).clamp(lo, hi);
    if w == 0.0 {
        w = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let fw = f(w);
        if fw == 0.0 {
            return Ok(w);
        }
        if fw > 0.0 {
            hi = w;
        } else {
            lo = w;
        }
        let d = measure.p_real_derivative(w);
        let mut next = w - fw / d;
        if !(next > lo && next < hi) || !d.is_finite() || d <= 0.0 {
            next = 0.5 * (lo + hi);
        }
        if (next - w).abs() <= 4.0 * f64::EPSILON * w.abs().max(1e-300) || hi - lo <= 4.0 * f64::EPSILON * w.abs() {
            return Ok(next);
        }
        w = next;
    }
    Ok(w)
}

/// g^{-1}(k) through the uniformizing variable.
pub fn g_inverse(measure: &SpectralMeasure, k: f64, hint: Option<f64>) -> Result<f64> {
    let bp = measure.branch_point();
    let win = bp.window();
    if k == 0.0 {
        return Err(Error::Pole("g^{-1} has a pole at k = 0".into()));
    }
    if k > bp.g_b + win || k < bp.g_a - win {
        return Err(Error::Branch(format!(
            "k = {k} outside the g-branch range [{}, {}]",
            bp.g_a, bp.g_b
        )));
    }
    let wh = hint.map(|x| measure.w_of_z(Complex64::new(x, 0.0)).re);
    let w = solve_p(measure, k, wh)?;
    Ok(measure.x_of_w(w))
}

/// h(x) = V'(x) - g(x) on the real axis outside (a, b).
pub fn h_branch(potential: &crate::equilibrium::Potential, measure: &SpectralMeasure, x: f64) -> Result<f64> {
    if x > measure.a && x < measure.b {
        return Err(Error::Domain(format!("x = {x} lies inside the support")));
    }
    Ok(potential.derivative(x) - measure.cauchy_g(Complex64::new(x, 0.0))?.re)
}

/// h^{-1}(k) by safeguarded Newton on h(x) - k with a bisection fallback.
pub fn h_inverse(potential: &crate::equilibrium::Potential, measure: &SpectralMeasure, k: f64) -> Result<f64> {
    let bp = measure.branch_point();
    let win = bp.window();
    if k < bp.g_b - win && k > bp.g_a + win {
        return Err(Error::Branch(format!(
            "k = {k} inside the g-branch range ({}, {})",
            bp.g_a, bp.g_b
        )));
    }
    if k < bp.g_b && k > bp.g_a {
        // Inside the window: continue through |w| slightly below 1.
        return Ok(measure.x_of_w(solve_p(measure, k, None)?));
    }
    let upper = k >= bp.g_b;
    let edge = if upper { bp.b } else { bp.a };
    let dir = if upper { 1.0 } else { -1.0 };
    let f = |x: f64| h_branch(potential, measure, x).map(|h| dir * (h - k));
    if f(edge)? >= 0.0 {
        return Ok(edge);
    }
    let mut step = measure.half_width().max(1.0);
    let mut far = edge + dir * step;
    let mut guard = 0;
    while f(far)? < 0.0 {
        step *= 2.0;
        far = edge + dir * step;
        guard += 1;
        if guard > 200 {
            return Err(Error::Numeric(format!("cannot bracket h(x) = {k}")));
        }
    }
    // In the oriented coordinate s = dir*(x - edge) the function increases.
    let (mut lo, mut hi) = (0.0, step);
    let mut s = 0.5 * (lo + hi);
    for _ in 0..300 {
        let x = edge + dir * s;
        let fx = f(x)?;
        if fx == 0.0 {
            return Ok(x);
        }
        if fx > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        let eps = 1e-7 * s.max(1e-12);
        let d = (f(edge + dir * (s + eps))? - fx) / eps;
        let mut next = s - fx / d;
        if !(next > lo && next < hi) || !d.is_finite() || d <= 0.0 {
            next = 0.5 * (lo + hi);
        }
        if (hi - lo) <= 2.0 * f64::EPSILON * hi || (next - s).abs() <= f64::EPSILON * s {
            return Ok(edge + dir * next);
        }
        s = next;
    }
    Ok(edge + dir * s)
}

/// Cauchy transform of the measure with R(k) = k/(1 - k²), from the
/// closed-form cube-root expression. The two sign assignments of the square
/// root are tried first; the branch is fixed by the Herglotz sign condition
/// and by g ~ 1/z.
pub fn boson_g(z: Complex64) -> Result<Complex64> {
    let b = BosonModel::EDGE;
    if z == Complex64::zero() || (z.im == 0.0 && z.re.abs() < b) {
        return Err(Error::Domain(format!("z = {z} lies on the support")));
    }
    let i = Complex64::i();
    let root = (Complex64::new(1.0 / 27.0, 0.0) - (z * z * 4.0).inv()).sqrt();
    let half = i / (z * 2.0);
    let omega = Complex64::from_polar(1.0, 2.0 * PI / 3.0);
    let residual = |g: Complex64| (z * g * g * g - z * g + 1.0).norm() / (1.0 + (z * g).norm().powi(3));
    let herglotz = |g: Complex64| {
        if z.im > 0.0 {
            g.im < 0.0
        } else if z.im < 0.0 {
            g.im > 0.0
        } else {
            g.im.abs() <= 1e-12 * g.norm() && g.re.abs() <= 1.0 / 3f64.sqrt() + 1e-9
        }
    };
    let mut best: Option<(f64, Complex64)> = None;
    for pass in 0..2 {
        let rotations: &[(usize, usize)] = if pass == 0 {
            &[(0, 0)]
        } else {
            &[(0, 1), (0, 2), (1, 0), (1, 1), (1, 2), (2, 0), (2, 1), (2, 2)]
        };
        for sign in [1.0, -1.0] {
            let s = root * sign;
            let u0 = (s - half).powf(1.0 / 3.0);
            let v0 = (s + half).powf(1.0 / 3.0);
            for &(ju, jv) in rotations {
                let u = u0 * omega.powu(ju as u32);
                let v = v0 * omega.powu(jv as u32);
                let g = i * u - i * v;
                let g = if z.im == 0.0 { Complex64::new(g.re, 0.0) } else { g };
                if residual(g) > 1e-9 || !herglotz(g) {
                    continue;
                }
                let score = (z * g - 1.0).norm();
                if best.is_none_or(|(s0, _)| score < s0) {
                    best = Some((score, g));
                }
            }
        }
        if best.is_some() {
            break;
        }
    }
    best.map(|(_, g)| g)
        .ok_or_else(|| Error::Numeric(format!("no cube-root branch of the boson transform fits at z = {z}")))
}

/// R(k) = k/(1 - k²) at complex k.
pub fn boson_r(k: Complex64) -> Result<Complex64> {
    let d = Complex64::new(1.0, 0.0) - k * k;
    if d == Complex64::zero() {
        return Err(Error::Pole(format!("R has a pole at k = {k}")));
    }
    Ok(k / d)
}

/// Blue's function 1/k + R(k) of the boson example at complex k.
pub fn boson_blue(k: Complex64) -> Result<Complex64> {
    if k == Complex64::zero() {
        return Err(Error::Pole("Blue's function has a pole at k = 0".into()));
    }
    Ok(k.inv() + boson_r(k)?)
}

/// The boson example: R(k) = k/(1 - k²), support [-3√3/2, 3√3/2],
/// g(±b) = ±1/√3. Real branches come from the trigonometric roots of
/// x k³ - x k + 1 = 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct BosonModel;

impl BosonModel {
    pub const EDGE: f64 = 2.598_076_211_353_316; // 3√3/2

    fn roots(x: f64) -> (f64, f64) {
        let theta = (-1.5 * 3f64.sqrt() / x.abs()).clamp(-1.0, 1.0).acos();
        let s = 2.0 / 3f64.sqrt();
        let g = s * (theta / 3.0 - 2.0 * PI / 3.0).cos();
        let h = s * (theta / 3.0).cos();
        (g.copysign(x), h.copysign(x))
    }

    /// h(x) for |x| ≥ b: the root of x k³ - x k + 1 = 0 in (1/√3, 1).
    pub fn h_real(&self, x: f64) -> Result<f64> {
        if x.abs() < Self::EDGE {
            return Err(Error::Domain(format!("x = {x} lies inside the support")));
        }
        Ok(Self::roots(x).1)
    }

    fn invert<F: Fn(f64) -> f64>(f: F, k: f64, lo: f64, hi: f64, increasing: bool) -> f64 {
        let (mut lo, mut hi) = (lo, hi);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            let above = f(mid) > k;
            if above == increasing {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

impl OneCutModel for BosonModel {
    fn branch_point(&self) -> BranchPoint {
        let gb = 1.0 / 3f64.sqrt();
        BranchPoint { a: -Self::EDGE, b: Self::EDGE, g_a: -gb, g_b: gb }
    }

    fn g_real(&self, x: f64) -> Result<f64> {
        if x.abs() < Self::EDGE {
            return Err(Error::Domain(format!("x = {x} lies inside the support")));
        }
        Ok(Self::roots(x).0)
    }

    fn g_inverse(&self, k: f64) -> Result<f64> {
        let bp = self.branch_point();
        if k == 0.0 {
            return Err(Error::Pole("g^{-1} has a pole at k = 0".into()));
        }
        if k.abs() > bp.g_b + bp.window() {
            return Err(Error::Branch(format!("k = {k} outside [{}, {}]", bp.g_a, bp.g_b)));
        }
        if k.abs() > bp.g_b {
            return self.h_inverse(k);
        }
        let ka = k.abs();
        let x = Self::invert(|x| Self::roots(x).0, ka, Self::EDGE, 2.0 / ka + Self::EDGE, false);
        Ok(x.copysign(k))
    }

    fn h_inverse(&self, k: f64) -> Result<f64> {
        let bp = self.branch_point();
        let ka = k.abs();
        if ka < bp.g_b - bp.window() {
            return Err(Error::Branch(format!("k = {k} inside ({}, {})", bp.g_a, bp.g_b)));
        }
        if ka >= 1.0 {
            return Err(Error::Pole(format!("R(k) = k/(1-k²) is singular for |k| >= 1 (k = {k})")));
        }
        if ka < bp.g_b {
            return self.g_inverse(k);
        }
        // h runs from 1/√3 at the edge up to 1 at infinity; 1/(k - k³) bounds x.
        let hi = 2.0 / (ka - ka.powi(3)) + Self::EDGE;
        let x = Self::invert(|x| Self::roots(x).1, ka, Self::EDGE, hi, true);
        Ok(x.copysign(k))
    }

    fn free_cumulants(&self) -> Vec<f64> {
        (1..=SERIES_ORDER).map(|n| if n % 2 == 0 { 1.0 } else { 0.0 }).collect()
    }
}
