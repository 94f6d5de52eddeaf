//! Large-N limit ω(k) of the rank-one characteristic function.
//!
//! Two saddle-point forms cover the real k axis: for g(a) ≤ k ≤ g(b) the
//! saddle z0 = g^{-1}(k) sits outside the support and
//!   ω = -1 + k z0 - ln|k| - L(z0),
//! otherwise x0 = h^{-1}(k) and
//!   ω = -1 + k x0 - V(x0) + L(x0) - ℓ - ln|k|,
//! where L is the logarithmic potential of the equilibrium measure. Both
//! forms are written with real logarithms so negative k needs no branch
//! bookkeeping. Near k = 0 the series Σ c_n k^n / n is used instead.

use crate::equilibrium::EquilibriumSolution;
use crate::quad::integrate_adaptive;
use crate::transforms::{OneCutModel, PowerSeries, SERIES_RADIUS};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OmegaBranch {
    SmallK,
    LargeK,
    Series,
}

impl OmegaBranch {
    pub fn as_str(&self) -> &'static str {
        match self {
            OmegaBranch::SmallK => "small_k",
            OmegaBranch::LargeK => "large_k",
            OmegaBranch::Series => "series",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmegaEvaluation {
    pub k: f64,
    pub value: f64,
    pub branch: OmegaBranch,
    /// z0 or x0; absent for the series branch.
    pub saddle_location: Option<f64>,
}

fn series_eval(model: &dyn OneCutModel, k: f64) -> OmegaEvaluation {
    let c = PowerSeries::new(model.free_cumulants());
    OmegaEvaluation { k, value: c.eval_antiderivative(k), branch: OmegaBranch::Series, saddle_location: None }
}

/// Small-k saddle form. Requests with |k| below the series radius are
/// redirected to the series branch.
pub fn omega_small_k(sol: &EquilibriumSolution, k: f64) -> Result<OmegaEvaluation> {
    if k.abs() < SERIES_RADIUS {
        return Ok(series_eval(sol, k));
    }
    let z0 = sol.g_inverse(k)?;
    let value = -1.0 + k * z0 - k.abs().ln() - sol.measure.log_potential(z0);
    Ok(OmegaEvaluation { k, value, branch: OmegaBranch::SmallK, saddle_location: Some(z0) })
}

/// Large-k saddle form through the h branch.
pub fn omega_large_k(sol: &EquilibriumSolution, k: f64) -> Result<OmegaEvaluation> {
    let x0 = sol.h_inverse(k)?;
    let m = &sol.measure;
    // The logarithm argument (x0 - y)/k must stay positive on the support.
    if (k > 0.0 && x0 < m.b) || (k < 0.0 && x0 > m.a) {
        return Err(Error::Branch(format!("saddle x0 = {x0} on the wrong side of the support for k = {k}")));
    }
    let v = &sol.potential;
    let value = -1.0 + k * x0 - v.value(x0) + m.log_potential(x0) - sol.ell - k.abs().ln();
    Ok(OmegaEvaluation { k, value, branch: OmegaBranch::LargeK, saddle_location: Some(x0) })
}

/// ω(k) on the whole real axis, averaging the two saddle forms inside the
/// junction window.
pub fn omega(sol: &EquilibriumSolution, k: f64) -> Result<OmegaEvaluation> {
    if k.abs() < SERIES_RADIUS {
        return Ok(series_eval(sol, k));
    }
    let bp = sol.branch_point();
    let win = bp.window();
    if (k - bp.g_b).abs() < win || (k - bp.g_a).abs() < win {
        let s = omega_small_k(sol, k)?;
        let l = omega_large_k(sol, k)?;
        let branch = if k > bp.g_a && k < bp.g_b { s.branch } else { l.branch };
        return Ok(OmegaEvaluation {
            k,
            value: 0.5 * (s.value + l.value),
            branch,
            saddle_location: Some(0.5 * (s.saddle_location.unwrap() + l.saddle_location.unwrap())),
        });
    }
    if k > bp.g_a && k < bp.g_b {
        omega_small_k(sol, k)
    } else {
        omega_large_k(sol, k)
    }
}

/// ∫_0^k R(t) dt: series antiderivative inside |t| < 1e-3, adaptive
/// Gauss–Kronrod (absolute tolerance 1e-10) beyond, split at the junctions.
pub fn omega_via_r_integral(model: &dyn OneCutModel, k: f64) -> Result<f64> {
    let c = PowerSeries::new(model.free_cumulants());
    if k.abs() <= SERIES_RADIUS {
        return Ok(c.eval_antiderivative(k));
    }
    let t0 = SERIES_RADIUS.copysign(k);
    let mut total = c.eval_antiderivative(t0);
    let bp = model.branch_point();
    let mut cuts = vec![t0];
    for j in [bp.g_a, bp.g_b] {
        if (k > 0.0 && j > t0 && j < k) || (k < 0.0 && j < t0 && j > k) {
            cuts.push(j);
        }
    }
    cuts.push(k);
    let mut err = None;
    for w in cuts.windows(2) {
        let piece = integrate_adaptive(
            |t| match model.r_eval(t) {
                Ok(v) => v,
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            },
            w[0],
            w[1],
            1e-10 / (cuts.len() as f64),
        )?;
        total += piece;
    }
    match err {
        Some(e) => Err(e),
        None => Ok(total),
    }
}

/// Fermionic counterpart φ(k) = -ω(k).
pub fn phi_fermionic(model: &dyn OneCutModel, k: f64) -> Result<f64> {
    Ok(-omega_via_r_integral(model, k)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JunctionReport {
    pub k: f64,
    /// |ω_small - ω_large| at the junction; absent when the model has no
    /// saddle-point forms.
    pub value_gap: Option<f64>,
    pub first_derivative_gap: f64,
    pub second_derivative_gap: f64,
}

impl JunctionReport {
    pub const VALUE_TOL: f64 = 1e-8;
    pub const FIRST_TOL: f64 = 1e-6;
    pub const SECOND_TOL: f64 = 1e-3;

    pub fn passes(&self) -> bool {
        self.value_gap.is_none_or(|v| v < Self::VALUE_TOL)
            && self.first_derivative_gap < Self::FIRST_TOL
            && self.second_derivative_gap < Self::SECOND_TOL
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessReport {
    pub junctions: Vec<JunctionReport>,
}

impl SmoothnessReport {
    pub fn passes(&self) -> bool {
        self.junctions.iter().all(JunctionReport::passes)
    }
}

/// One-sided first and second derivatives at k from points on the side
/// `dir` (±1), second-order accurate.
fn one_sided<F: Fn(f64) -> Result<f64>>(f: &F, k: f64, dir: f64, h: f64) -> Result<(f64, f64)> {
    let s = -dir * h;
    let f0 = f(k)?;
    let f1 = f(k + dir * h)?;
    let f2 = f(k + 2.0 * dir * h)?;
    let f3 = f(k + 3.0 * dir * h)?;
    let d1 = (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * dir * h);
    let d2 = (2.0 * f0 - 5.0 * f1 + 4.0 * f2 - f3) / (s * s);
    Ok((d1, d2))
}

fn junction_gaps<L, R>(left: L, right: R, k: f64, inner_dir: f64, scale: f64) -> Result<(f64, f64)>
where
    L: Fn(f64) -> Result<f64>,
    R: Fn(f64) -> Result<f64>,
{
    let h1 = 1e-4 * scale;
    let h2 = 1e-3 * scale;
    let (a1, _) = one_sided(&left, k, inner_dir, h1)?;
    let (b1, _) = one_sided(&right, k, -inner_dir, h1)?;
    let (_, a2) = one_sided(&left, k, inner_dir, h2)?;
    let (_, b2) = one_sided(&right, k, -inner_dir, h2)?;
    Ok(((a1 - b1).abs(), (a2 - b2).abs()))
}

/// Smoothness of ω across both junctions from the two saddle-point forms.
pub fn smoothness_report(sol: &EquilibriumSolution) -> Result<SmoothnessReport> {
    let bp = sol.branch_point();
    let scale = bp.g_b - bp.g_a;
    let mut junctions = Vec::new();
    for (k, inner) in [(bp.g_b, -1.0), (bp.g_a, 1.0)] {
        let small = |t: f64| omega_small_k(sol, t).map(|e| e.value);
        let large = |t: f64| omega_large_k(sol, t).map(|e| e.value);
        let value_gap = (small(k)? - large(k)?).abs();
        let (d1, d2) = junction_gaps(small, large, k, inner, scale)?;
        junctions.push(JunctionReport { k, value_gap: Some(value_gap), first_derivative_gap: d1, second_derivative_gap: d2 });
    }
    Ok(SmoothnessReport { junctions })
}

/// Smoothness of ω' = R across the junctions for models described only by
/// their branch inverses: compares g^{-1} and h^{-1} and their slopes.
pub fn derivative_smoothness(model: &dyn OneCutModel) -> Result<SmoothnessReport> {
    let bp = model.branch_point();
    let scale = bp.g_b - bp.g_a;
    let mut junctions = Vec::new();
    for (k, inner) in [(bp.g_b, -1.0), (bp.g_a, 1.0)] {
        let rg = |t: f64| model.g_inverse(t).map(|x| x - 1.0 / t);
        let rh = |t: f64| model.h_inverse(t).map(|x| x - 1.0 / t);
        let d1 = (rg(k)? - rh(k)?).abs();
        let h = 1e-3 * scale;
        let (a, _) = one_sided(&rg, k, inner, h)?;
        let (b, _) = one_sided(&rh, k, -inner, h)?;
        junctions.push(JunctionReport { k, value_gap: None, first_derivative_gap: d1, second_derivative_gap: (a - b).abs() });
    }
    Ok(SmoothnessReport { junctions })
}
