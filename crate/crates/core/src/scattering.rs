//! Stochastic scattering in the resolvent (Heidelberg) form
//! S(E) = 1 - 2i W†(E - H + iWW†)⁻¹ W.
//!
//! Monte Carlo runs never build H. With H = U diag(x) U† and W the first M
//! identity columns scaled by γ_a, only the N×M frame B = U†W enters, and
//! S = (1 - iK)(1 + iK)⁻¹ with K = B† diag(1/(E - x)) B. The dense solve
//! `s_matrix` is kept for explicit matrices and as a cross-check.

use crate::coulomb_mc::{batch_means, run_chains, ChainParams, MEASUREMENT_BATCHES};
use crate::equilibrium::{solve_equilibrium, EquilibriumSolution, Potential};
use crate::quad::integrate_adaptive;
use crate::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const MAX_CHANNELS: usize = 8;
pub const MAX_CONDITION: f64 = 1e12;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn complex_gaussian<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// Haar-distributed N×M matrix with orthonormal columns: QR of a complex
/// Gaussian with the phases of diag(R) moved into Q.
pub fn haar_isometry<R: Rng>(rng: &mut R, n: usize, m: usize) -> DMatrix<Complex64> {
    let qr = complex_gaussian(rng, n, m).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..m {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

pub fn haar_unitary<R: Rng>(rng: &mut R, n: usize) -> DMatrix<Complex64> {
    haar_isometry(rng, n, n)
}

/// Dense-LU evaluation of S for an explicit Hermitian H.
pub fn s_matrix(h: &DMatrix<Complex64>, w: &DMatrix<f64>, e: f64) -> Result<DMatrix<Complex64>> {
    let n = h.nrows();
    if h.ncols() != n || w.nrows() != n {
        return Err(Error::Arity(format!("H is {}x{}, W has {} rows", n, h.ncols(), w.nrows())));
    }
    let m = w.ncols();
    let wc: DMatrix<Complex64> = w.map(|v| Complex64::new(v, 0.0));
    let wwt = &wc * wc.transpose();
    let a = DMatrix::from_fn(n, n, |i, j| {
        let diag = if i == j { Complex64::new(e, 0.0) } else { Complex64::new(0.0, 0.0) };
        diag - h[(i, j)] + I * wwt[(i, j)]
    });
    let lu = a.lu();
    let u = lu.u();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..n {
        let d = u[(i, i)].norm();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    let cond = hi / lo;
    if !(cond < MAX_CONDITION) {
        return Err(Error::Numeric(format!("resolvent condition estimate {cond:e} exceeds {MAX_CONDITION:e}")));
    }
    let x = lu
        .solve(&wc)
        .ok_or_else(|| Error::Numeric("singular resolvent".into()))?;
    let mut s = wc.transpose() * x * Complex64::new(0.0, -2.0);
    for a in 0..m {
        s[(a, a)] += 1.0;
    }
    Ok(s)
}

/// S from eigenvalues x and frame V (N×M, V = U†·[first M identity columns]),
/// with per-channel couplings γ.
pub fn s_matrix_spectral(eigs: &[f64], frame: &DMatrix<Complex64>, couplings: &[f64], e: f64) -> Result<DMatrix<Complex64>> {
    let m = couplings.len();
    let mut k = DMatrix::<Complex64>::zeros(m, m);
    for (n, &x) in eigs.iter().enumerate() {
        let d = 1.0 / (e - x);
        for a in 0..m {
            let ba = frame[(n, a)].conj() * (couplings[a] * d);
            for b in 0..m {
                k[(a, b)] += ba * frame[(n, b)] * couplings[b];
            }
        }
    }
    let id = DMatrix::<Complex64>::identity(m, m);
    let num = &id - &k * I;
    let den = &id + &k * I;
    let inv = den
        .try_inverse()
        .ok_or_else(|| Error::Numeric("1 + iK is singular".into()))?;
    Ok(num * inv)
}

/// max |(S S† - 1)_ij|.
pub fn unitarity_error(s: &DMatrix<Complex64>) -> f64 {
    let p = s * s.adjoint();
    let mut err: f64 = 0.0;
    for i in 0..p.nrows() {
        for j in 0..p.ncols() {
            let t = if i == j { p[(i, j)] - 1.0 } else { p[(i, j)] };
            err = err.max(t.norm());
        }
    }
    err
}

/// `params.samples` matrices U diag(x) U† with x from the Coulomb chain
/// (weight e^{-N V}) and U Haar.
pub fn sample_hamiltonians(potential: &Potential, n: usize, params: &ChainParams) -> Result<Vec<DMatrix<Complex64>>> {
    let per_chain = run_chains(potential, n, n as f64, params, |x, rng| {
        let u = haar_unitary(rng, n);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(n, x.iter().map(|&v| Complex64::new(v, 0.0))));
        Ok(&u * d * u.adjoint())
    })?;
    Ok(per_chain.into_iter().flatten().collect())
}

#[derive(Debug, Clone)]
pub struct ScatteringModel {
    pub n: usize,
    /// γ_a, the norm of column a of W.
    pub couplings: Vec<f64>,
    pub energy: f64,
    pub potential: Potential,
    pub solution: EquilibriumSolution,
}

impl ScatteringModel {
    pub fn new(potential: &Potential, n: usize, couplings: Vec<f64>, energy: f64) -> Result<Self> {
        let m = couplings.len();
        if m == 0 || m > MAX_CHANNELS {
            return Err(Error::Config(format!("channel count {m} outside 1..={MAX_CHANNELS}")));
        }
        if n < 16 * m {
            return Err(Error::Config(format!("N = {n} below 16·M = {}", 16 * m)));
        }
        if couplings.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return Err(Error::Config("couplings must be finite and non-negative".into()));
        }
        let solution = solve_equilibrium(potential, 1e-13)?;
        Ok(ScatteringModel { n, couplings, energy, potential: potential.clone(), solution })
    }

    pub fn with_couplings(&self, couplings: Vec<f64>) -> Result<Self> {
        if couplings.len() != self.couplings.len() {
            return Err(Error::Arity("coupling count changed".into()));
        }
        Ok(ScatteringModel { couplings, ..self.clone() })
    }

    pub fn m(&self) -> usize {
        self.couplings.len()
    }

    /// The explicit N×M coupling matrix.
    pub fn w(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.m(), |i, j| if i == j { self.couplings[j] } else { 0.0 })
    }

    /// Physical energy offset for ε mean level spacings.
    pub fn energy_offset(&self, epsilon: f64) -> Result<f64> {
        Ok(epsilon * mean_spacing(&self.solution, self.energy, self.n)?)
    }
}

/// One recorded chain state: eigenvalues and an independent Haar frame.
#[derive(Debug, Clone)]
pub struct ScatteringSample {
    pub eigs: Vec<f64>,
    pub frame: DMatrix<Complex64>,
}

pub fn draw_samples(model: &ScatteringModel, params: &ChainParams) -> Result<Vec<ScatteringSample>> {
    let (n, m) = (model.n, model.m());
    let per_chain = run_chains(&model.potential, n, n as f64, params, |x, rng| {
        Ok(ScatteringSample { eigs: x.to_vec(), frame: haar_isometry(rng, n, m) })
    })?;
    Ok(per_chain.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexEstimate {
    pub re: f64,
    pub im: f64,
    pub stderr: f64,
}

impl ComplexEstimate {
    fn from_series(v: &[Complex64]) -> Self {
        let re: Vec<f64> = v.iter().map(|c| c.re).collect();
        let im: Vec<f64> = v.iter().map(|c| c.im).collect();
        let (mr, sr) = batch_means(&re, MEASUREMENT_BATCHES);
        let (mi, si) = batch_means(&im, MEASUREMENT_BATCHES);
        ComplexEstimate { re: mr, im: mi, stderr: sr.hypot(si) }
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

/// ⟨S_aa(E)⟩ per channel over a sample set.
pub fn mean_s_diagonal(samples: &[ScatteringSample], couplings: &[f64], e: f64) -> Result<Vec<ComplexEstimate>> {
    let m = couplings.len();
    let mut series = vec![Vec::with_capacity(samples.len()); m];
    for s in samples {
        let sm = s_matrix_spectral(&s.eigs, &s.frame, couplings, e)?;
        for (a, col) in series.iter_mut().enumerate() {
            col.push(sm[(a, a)]);
        }
    }
    Ok(series.iter().map(|v| ComplexEstimate::from_series(v)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub value: ComplexEstimate,
    /// Offset in mean level spacings; E_{1,2} = z ± ε·spacing/2.
    pub epsilon: f64,
    pub channels: (usize, usize, usize, usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationRun {
    pub estimates: Vec<CorrelationEstimate>,
    pub mean_s: Vec<ComplexEstimate>,
    pub samples: usize,
    pub max_unitarity_error: f64,
}

/// C_{ab,cd} on a fixed sample set: the average of
/// (S_ab(E₁) - δ_ab)·conj(S_cd(E₂) - δ_cd).
pub fn correlation_from_samples(
    model: &ScatteringModel,
    samples: &[ScatteringSample],
    channels: (usize, usize, usize, usize),
    epsilon_grid: &[f64],
) -> Result<CorrelationRun> {
    let (a, b, c, d) = channels;
    let m = model.m();
    if [a, b, c, d].iter().any(|&i| i >= m) {
        return Err(Error::Config(format!("channel index out of range for M = {m}")));
    }
    let spacing = mean_spacing(&model.solution, model.energy, model.n)?;
    let z = model.energy;
    let dab = if a == b { 1.0 } else { 0.0 };
    let dcd = if c == d { 1.0 } else { 0.0 };
    let mut max_err: f64 = 0.0;
    let mut estimates = Vec::with_capacity(epsilon_grid.len());
    for &eps in epsilon_grid {
        let half = 0.5 * eps * spacing;
        let mut series = Vec::with_capacity(samples.len());
        for s in samples {
            let s1 = s_matrix_spectral(&s.eigs, &s.frame, &model.couplings, z + half)?;
            let s2 = s_matrix_spectral(&s.eigs, &s.frame, &model.couplings, z - half)?;
            max_err = max_err.max(unitarity_error(&s1)).max(unitarity_error(&s2));
            series.push((s1[(a, b)] - dab) * (s2[(c, d)] - dcd).conj());
        }
        estimates.push(CorrelationEstimate {
            value: ComplexEstimate::from_series(&series),
            epsilon: eps,
            channels,
        });
    }
    Ok(CorrelationRun {
        estimates,
        mean_s: mean_s_diagonal(samples, &model.couplings, z)?,
        samples: samples.len(),
        max_unitarity_error: max_err,
    })
}

pub fn mc_s_correlation(
    model: &ScatteringModel,
    channels: (usize, usize, usize, usize),
    epsilon_grid: &[f64],
    params: &ChainParams,
) -> Result<CorrelationRun> {
    let samples = draw_samples(model, params)?;
    correlation_from_samples(model, &samples, channels, epsilon_grid)
}

/// The two boundary values of the Cauchy transform at a bulk point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddlePair {
    pub g_plus: Complex64,
    pub g_minus: Complex64,
    pub z: f64,
    /// |q⁻¹ + R(q) - z| at q = g_plus, with the inverse recomputed by continuation.
    pub residual: f64,
}

/// Solves q⁻¹ + R(q) = z for z inside the support. g₊ is the boundary value
/// from above (Im < 0) and g₋ = conj(g₊).
pub fn solve_saddle_scalar(solution: &EquilibriumSolution, z: f64) -> Result<SaddlePair> {
    let mu = &solution.measure;
    if !(z > mu.a && z < mu.b) {
        return Err(Error::Edge(format!("z = {z} outside the bulk ({}, {})", mu.a, mu.b)));
    }
    let t = (z - mu.center()) / mu.half_width();
    let theta = t.clamp(-1.0, 1.0).acos();
    let g_plus = mu.p_of_w(Complex64::from_polar(1.0, -theta));
    if !(g_plus.im < 0.0) {
        return Err(Error::Edge(format!("density vanishes at z = {z}")));
    }
    let g_minus = g_plus.conj();
    let z_back = invert_p(solution, g_plus)?;
    Ok(SaddlePair { g_plus, g_minus, z, residual: (z_back - z).norm() })
}

/// The point G⁻¹(q) = c + r(w + 1/w)/2 with P(w) = q, found by Newton
/// continuation along s·q from small s, where w ≈ s·q/(π r q₀).
fn invert_p(solution: &EquilibriumSolution, q: Complex64) -> Result<Complex64> {
    let mu = &solution.measure;
    let r = mu.half_width();
    let scale = PI * r;
    let dp = |w: Complex64| {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, &c) in mu.density_coeffs.iter().enumerate().rev() {
            acc = acc * w + c * (j as f64 + 1.0);
        }
        acc * scale
    };
    let steps = 64;
    let mut w = q / (64.0 * scale * mu.density_coeffs[0]);
    for s in 1..=steps {
        let target = q * (s as f64 / steps as f64);
        let mut converged = false;
        for _ in 0..50 {
            let f = mu.p_of_w(w) - target;
            let dw = f / dp(w);
            w -= dw;
            if dw.norm() < 1e-15 * (1.0 + w.norm()) {
                converged = true;
                break;
            }
        }
        if !converged || w.norm() > 1.0 + 1e-8 {
            return Err(Error::Convergence(format!("inverse continuation failed at step {s}")));
        }
    }
    Ok(mu.center() + 0.5 * r * (w + 1.0 / w))
}

/// Mean level spacing 1/(N ν(z)).
pub fn mean_spacing(solution: &EquilibriumSolution, z: f64, n: usize) -> Result<f64> {
    let nu = solution.measure.density(z);
    if !(nu > 0.0) {
        return Err(Error::Edge(format!("density vanishes at z = {z}")));
    }
    Ok(1.0 / (n as f64 * nu))
}

/// ε in mean-spacing units: ε_phys · N ν(z).
pub fn unfold_epsilon(solution: &EquilibriumSolution, z: f64, epsilon_physical: f64, n: usize) -> Result<f64> {
    Ok(epsilon_physical / mean_spacing(solution, z, n)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CouplingMatch {
    pub couplings: Vec<f64>,
    /// couplings relative to the quartic model's starting values.
    pub scales: Vec<f64>,
    pub target: Vec<ComplexEstimate>,
    pub achieved: Vec<ComplexEstimate>,
    pub iterations: usize,
}

pub const MATCH_TOL: f64 = 0.01;
const MAX_SECANT_STEPS: usize = 20;

/// Column-wise secant on γ_a so that ⟨S_aa⟩ of `other` reproduces that of
/// `reference`. Both sample sets are drawn once, so every secant step sees
/// the same random numbers.
pub fn matched_coupling(reference: &ScatteringModel, other: &ScatteringModel, params: &ChainParams) -> Result<CouplingMatch> {
    if reference.m() != other.m() || reference.energy != other.energy {
        return Err(Error::Config("models must share M and z".into()));
    }
    let ref_samples = draw_samples(reference, params)?;
    let target = mean_s_diagonal(&ref_samples, &reference.couplings, reference.energy)?;
    let ref_params = ChainParams { seed: params.seed ^ 0x9e37_79b9_7f4a_7c15, ..*params };
    let samples = draw_samples(other, &ref_params)?;
    match_on_samples(reference, other, &samples, target)
}

pub fn match_on_samples(
    reference: &ScatteringModel,
    other: &ScatteringModel,
    samples: &[ScatteringSample],
    target: Vec<ComplexEstimate>,
) -> Result<CouplingMatch> {
    let m = other.m();
    let z = other.energy;
    let nu_ref = reference.solution.measure.density(z);
    let nu = other.solution.measure.density(z);
    if !(nu > 0.0 && nu_ref > 0.0) {
        return Err(Error::Edge(format!("density vanishes at z = {z}")));
    }
    let eval = |g: &[f64]| -> Result<Vec<f64>> {
        Ok(mean_s_diagonal(samples, g, z)?
            .iter()
            .zip(&target)
            .map(|(s, t)| s.re - t.re)
            .collect())
    };
    // Large-N start: ⟨S_aa⟩ depends on γ_a² ν(z).
    let mut g0: Vec<f64> = reference.couplings.iter().map(|g| g * (nu_ref / nu).sqrt()).collect();
    let mut f0 = eval(&g0)?;
    let mut g1: Vec<f64> = g0.iter().map(|g| g * 1.05).collect();
    let mut iterations = 0;
    loop {
        let f1 = eval(&g1)?;
        iterations += 1;
        if f1.iter().all(|f| f.abs() < 1e-6) {
            break;
        }
        if iterations >= MAX_SECANT_STEPS {
            return Err(Error::Matching(format!(
                "secant did not converge in {MAX_SECANT_STEPS} steps, residuals {f1:?}"
            )));
        }
        let mut next = g1.clone();
        for a in 0..m {
            let den = f1[a] - f0[a];
            if f1[a].abs() >= 1e-6 && den != 0.0 {
                next[a] = (g1[a] - f1[a] * (g1[a] - g0[a]) / den).clamp(0.5 * g1[a], 2.0 * g1[a]);
            }
        }
        g0 = std::mem::replace(&mut g1, next);
        f0 = f1;
    }
    let achieved = mean_s_diagonal(samples, &g1, z)?;
    for (a, (s, t)) in achieved.iter().zip(&target).enumerate() {
        let gap = (s.value().norm() - t.value().norm()).abs();
        if gap > MATCH_TOL {
            return Err(Error::Matching(format!("channel {a}: |<S>| differs by {gap:e}")));
        }
    }
    Ok(CouplingMatch {
        scales: g1.iter().zip(&other.couplings).map(|(g, g0)| g / g0).collect(),
        couplings: g1,
        target,
        achieved,
        iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitLawReport {
    pub n: usize,
    pub mc: ComplexEstimate,
    /// Det⁻¹(1 + A⊗B) = 1/(1 + αβ) for A = α e₁e₁†, B = β e₁e₁†.
    pub limit: Complex64,
    /// The same average at finite N, from |g₁₁|² ~ Beta(1, N-1).
    pub finite_n: Complex64,
}

/// Haar average of exp(-N Tr(A g B g⁻¹)) for rank-one A, B.
pub fn limit_law_diagnostic(n: usize, alpha: f64, beta: Complex64, samples: usize, seed: u64) -> Result<LimitLawReport> {
    if n < 2 || samples < 2 {
        return Err(Error::Config("need N ≥ 2 and at least two samples".into()));
    }
    let mut rng = crate::coulomb_mc::stream_rng(seed, 0);
    let c = beta * alpha * n as f64;
    let vals: Vec<Complex64> = (0..samples)
        .map(|_| {
            let g = haar_unitary(&mut rng, n);
            (-c * g[(0, 0)].norm_sqr()).exp()
        })
        .collect();
    let nf = n as f64;
    let part = |im: bool| {
        integrate_adaptive(
            |u| {
                let v = (-c * u).exp() * (nf - 1.0) * (1.0 - u).powf(nf - 2.0);
                if im { v.im } else { v.re }
            },
            0.0,
            1.0,
            1e-13,
        )
    };
    Ok(LimitLawReport {
        n,
        mc: ComplexEstimate::from_series(&vals),
        limit: 1.0 / (1.0 + beta * alpha),
        finite_n: Complex64::new(part(false)?, part(true)?),
    })
}

/// Mean gap of the `count` eigenvalue gaps closest to z, averaged over chain
/// samples; compares with `mean_spacing`.
pub fn mc_mean_gap(potential: &Potential, n: usize, z: f64, count: usize, params: &ChainParams) -> Result<(f64, f64)> {
    let per_chain = run_chains(potential, n, n as f64, params, |x, _| {
        let mut v = x.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let i = v.partition_point(|&e| e < z);
        let lo = i.saturating_sub(count / 2).min(n - 1 - count);
        Ok((v[lo + count] - v[lo]) / count as f64)
    })?;
    let all: Vec<f64> = per_chain.into_iter().flatten().collect();
    Ok(batch_means(&all, MEASUREMENT_BATCHES))
}

