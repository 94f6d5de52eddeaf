//! One-cut equilibrium measures of strictly convex polynomial potentials.
//!
//! The endpoints (c ± r) solve the two moment conditions
//! v_0(c, r) = 0 and v_1(c, r) = 4/r, where v_k are the Chebyshev
//! coefficients of V'(c + r t). The density factor then follows mode by
//! mode: q_j = v_{j+1} / (2π r) in the U_j basis.

use crate::quad::chebyshev_t_nodes;
use crate::transforms::{self, BranchPoint, OneCutModel, PowerSeries, SpectralMeasure, SERIES_ORDER};
use crate::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Sampled lower bound of V'' on an interval containing the support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexityCertificate {
    pub lo: f64,
    pub hi: f64,
    pub min_second_derivative: f64,
}

/// Polynomial potential V(x) = Σ_{i ≥ 1} coeffs[i] x^i; the constant term is
/// dropped since it only shifts the Lagrange multiplier.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Potential {
    coeffs: Vec<f64>,
    certificate: ConvexityCertificate,
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

fn derivative_coeffs(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(i, &ci)| i as f64 * ci).collect()
}

impl Potential {
    /// Validates the coefficients and attaches a convexity certificate.
    pub fn new(mut coeffs: Vec<f64>) -> Result<Self> {
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPotential("convexity certificate failed: non-finite coefficient".into()));
        }
        let deg = coeffs.len().saturating_sub(1);
        if deg < 2 || deg % 2 == 1 || coeffs[deg] <= 0.0 {
            return Err(Error::InvalidPotential(format!(
                "convexity certificate failed: degree {deg} with leading coefficient {:?} \
                 cannot be strictly convex (need even degree >= 2 and positive leading term)",
                coeffs.last()
            )));
        }
        coeffs[0] = 0.0;
        let d1 = derivative_coeffs(&coeffs);
        let d2 = derivative_coeffs(&d1);
        // V' is increasing for a convex V; bracket and bisect its root.
        let (mut lo, mut hi) = (-1.0, 1.0);
        while horner(&d1, lo) > 0.0 {
            lo *= 2.0;
        }
        while horner(&d1, hi) < 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if horner(&d1, mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let xmin = 0.5 * (lo + hi);
        let kappa = horner(&d2, xmin);
        if kappa <= 0.0 {
            return Err(Error::InvalidPotential(format!(
                "convexity certificate failed: V''({xmin}) = {kappa} is not positive"
            )));
        }
        let r0 = 2.0 / kappa.sqrt();
        let reach = 2.0 * (xmin.abs() + r0);
        let n = 4001;
        let mut min_vpp = f64::INFINITY;
        for i in 0..n {
            let x = -reach + 2.0 * reach * i as f64 / (n - 1) as f64;
            min_vpp = min_vpp.min(horner(&d2, x));
        }
        if min_vpp <= 0.0 {
            return Err(Error::InvalidPotential(format!(
                "convexity certificate failed: min V'' on [{}, {reach}] is {min_vpp}",
                -reach
            )));
        }
        Ok(Potential {
            coeffs,
            certificate: ConvexityCertificate { lo: -reach, hi: reach, min_second_derivative: min_vpp },
        })
    }

    /// V(x) = x²/2.
    pub fn gaussian() -> Self {
        Potential::new(vec![0.0, 0.0, 0.5]).expect("x^2/2 is convex")
    }

    /// Parses a JSON list of coefficients, lowest order first.
    pub fn from_json(s: &str) -> Result<Self> {
        let c: Vec<f64> = serde_json::from_str(s).map_err(|e| Error::Config(format!("potential: {e}")))?;
        Potential::new(c)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn certificate(&self) -> ConvexityCertificate {
        self.certificate
    }

    pub fn is_even(&self) -> bool {
        self.coeffs.iter().enumerate().all(|(i, &c)| i % 2 == 0 || c == 0.0)
    }

    pub fn value(&self, x: f64) -> f64 {
        horner(&self.coeffs, x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.coeffs.iter().enumerate().skip(1).rev().fold(0.0, |acc, (i, &c)| acc * x + i as f64 * c)
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        horner(&derivative_coeffs(&derivative_coeffs(&self.coeffs)), x)
    }

    pub fn value_complex(&self, z: Complex64) -> Complex64 {
        self.coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    /// Minimizer of V and the semicircle radius 2/√V'' there, used to start
    /// the endpoint iteration.
    pub fn quadratic_start(&self) -> (f64, f64) {
        let d1 = derivative_coeffs(&self.coeffs);
        let (mut lo, mut hi) = (self.certificate.lo, self.certificate.hi);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if horner(&d1, mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let x = 0.5 * (lo + hi);
        (x, 2.0 / self.second_derivative(x).sqrt())
    }

    /// The potential V(x)/t, whose equilibrium measure governs degree-tN
    /// orthogonal polynomials for the weight e^{-NV}.
    pub fn scaled(&self, t: f64) -> Result<Self> {
        Potential::new(self.coeffs.iter().map(|c| c / t).collect())
    }
}

impl<'de> Deserialize<'de> for Potential {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let c = Vec::<f64>::deserialize(d)?;
        Potential::new(c).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumSolution {
    pub potential: Potential,
    pub measure: SpectralMeasure,
    /// Lagrange multiplier in V(x) - 2∫ln|x-y|dν(y) + ℓ = 0 on the support.
    pub ell: f64,
    /// Largest Euler–Lagrange violation over 64 support nodes.
    pub residual: f64,
    pub newton_iterations: usize,
    /// c_1..c_SERIES_ORDER from the measure's moments.
    pub free_cumulants: Vec<f64>,
}

/// Chebyshev coefficients v_0..v_{n-1} of f(c + r t) from M first-kind nodes.
fn chebyshev_coeffs<F: Fn(f64) -> f64>(f: F, c: f64, r: f64, count: usize, nodes: &[f64]) -> Vec<f64> {
    let m = nodes.len() as f64;
    let vals: Vec<f64> = nodes.iter().map(|&t| f(c + r * t)).collect();
    (0..count)
        .map(|k| {
            let s: f64 = nodes
                .iter()
                .zip(&vals)
                .map(|(&t, &v)| v * (k as f64 * t.acos()).cos())
                .sum();
            if k == 0 {
                s / m
            } else {
                2.0 * s / m
            }
        })
        .collect()
}

pub fn solve_equilibrium(potential: &Potential, tol: f64) -> Result<EquilibriumSolution> {
    let deg = potential.degree();
    let nodes = chebyshev_t_nodes(2 * deg + 8);
    let residual_fn = |c: f64, r: f64| -> [f64; 2] {
        let v = chebyshev_coeffs(|x| potential.derivative(x), c, r, 2, &nodes);
        [v[0], v[1] - 4.0 / r]
    };
    let jac = |c: f64, r: f64| -> [[f64; 2]; 2] {
        let dc = chebyshev_coeffs(|x| potential.second_derivative(x), c, r, 2, &nodes);
        let dr = chebyshev_coeffs(|x| potential.second_derivative(x) * (x - c) / r, c, r, 2, &nodes);
        [[dc[0], dr[0]], [dc[1], dr[1] + 4.0 / (r * r)]]
    };
    let norm = |f: [f64; 2]| f[0].hypot(f[1]);
    let (mut c, mut r) = potential.quadratic_start();
    let mut f = residual_fn(c, r);
    let mut iterations = 0;
    let tol = tol.max(1e-15);
    while norm(f) > tol {
        if iterations >= 100 {
            return Err(Error::Convergence(format!(
                "endpoint iteration stalled at |F| = {:e} after 100 steps",
                norm(f)
            )));
        }
        iterations += 1;
        let j = jac(c, r);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == 0.0 || !det.is_finite() {
            return Err(Error::Convergence("singular endpoint Jacobian".into()));
        }
        let dc = (f[0] * j[1][1] - f[1] * j[0][1]) / det;
        let dr = (j[0][0] * f[1] - j[1][0] * f[0]) / det;
        let mut lambda = 1.0;
        loop {
            let (cn, rn) = (c - lambda * dc, r - lambda * dr);
            if rn > 0.0 {
                let fnew = residual_fn(cn, rn);
                if norm(fnew) < norm(f) || lambda < 1e-6 {
                    c = cn;
                    r = rn;
                    f = fnew;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 1e-12 {
                return Err(Error::Convergence("damped endpoint step failed".into()));
            }
        }
        if iterations > 5 && norm(f) < 64.0 * f64::EPSILON * (1.0 + potential.derivative(c + r).abs()) {
            break;
        }
    }
    let v = chebyshev_coeffs(|x| potential.derivative(x), c, r, deg, &nodes);
    let q: Vec<f64> = v[1..].iter().map(|vk| vk / (2.0 * PI * r)).collect();
    let measure = SpectralMeasure::new(c - r, c + r, q)?;
    let ell = 2.0 * measure.log_potential(c) - potential.value(c);
    let residual = chebyshev_t_nodes(64)
        .into_iter()
        .map(|t| {
            let x = c + r * t;
            (potential.value(x) - 2.0 * measure.log_potential(x) + ell).abs()
        })
        .fold(0.0, f64::max);
    if residual > 1e-8 {
        return Err(Error::Numeric(format!("Euler–Lagrange residual {residual:e} exceeds 1e-8")));
    }
    let mut moments = measure.moments(SERIES_ORDER);
    moments[0] = 1.0;
    let free_cumulants = transforms::r_series(&PowerSeries::new(moments))?.coeffs;
    Ok(EquilibriumSolution {
        potential: potential.clone(),
        measure,
        ell,
        residual,
        newton_iterations: iterations,
        free_cumulants,
    })
}

/// G(z) = ∫ ln(z - x) dν(x).
pub fn big_g(solution: &EquilibriumSolution, z: Complex64) -> Result<Complex64> {
    let m = &solution.measure;
    if z.im == 0.0 && z.re > m.a && z.re < m.b {
        return Err(Error::Domain(format!("z = {z} lies on the cut")));
    }
    Ok(m.log_transform(z))
}

/// H(z) = V(z) - G(z) + ℓ, the companion of G with H' = h.
pub fn big_h(solution: &EquilibriumSolution, potential: &Potential, z: Complex64) -> Result<Complex64> {
    Ok(potential.value_complex(z) - big_g(solution, z)? + solution.ell)
}

impl OneCutModel for EquilibriumSolution {
    fn branch_point(&self) -> BranchPoint {
        self.measure.branch_point()
    }

    fn g_real(&self, x: f64) -> Result<f64> {
        Ok(self.measure.cauchy_g(Complex64::new(x, 0.0))?.re)
    }

    fn g_inverse(&self, k: f64) -> Result<f64> {
        transforms::g_inverse(&self.measure, k, None)
    }

    fn h_inverse(&self, k: f64) -> Result<f64> {
        transforms::h_inverse(&self.potential, &self.measure, k)
    }

    fn free_cumulants(&self) -> Vec<f64> {
        self.free_cumulants.clone()
    }
}
