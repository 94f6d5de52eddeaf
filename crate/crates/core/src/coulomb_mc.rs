//! Coulomb-gas Metropolis sampler and the finite-N estimators built on it.
//!
//! The chain targets Π_{i<j} (x_i - x_j)² Π_l e^{-S V(x_l)} with S the weight
//! scale (normally S = N, the particle count). Rank-one spherical integrals
//! are the divided differences of e^{kx}; these are evaluated as the first
//! column of exp(kA) for the bidiagonal matrix A = diag(x) + subdiagonal
//! ones, using a scaled Taylor block raised to a power. Every entry in that
//! product is positive, so no cancellation occurs even when the alternating
//! textbook sum would lose all digits.

use crate::equilibrium::{solve_equilibrium, Potential};
use crate::hexfloat;
use crate::quad::gauss_legendre;
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

const TARGET_ACCEPTANCE: f64 = 0.4;
const CACHE_CHECK_INTERVAL: usize = 100;
const CACHE_TOL: f64 = 1e-9;

/// Deterministic RNG for stream `stream` of master seed `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mean and batch-means standard error of a correlated series.
pub fn batch_means(values: &[f64], batches: usize) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let nb = batches.min(n).max(2);
    let len = n / nb;
    if len == 0 {
        return (mean, f64::NAN);
    }
    let bm: Vec<f64> = (0..nb)
        .map(|b| values[b * len..(b + 1) * len].iter().sum::<f64>() / len as f64)
        .collect();
    let m = bm.iter().sum::<f64>() / nb as f64;
    let var = bm.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (nb as f64 - 1.0);
    (mean, (var / nb as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainCheckpoint {
    pub seed: u64,
    pub stream: u64,
    pub sweeps: u64,
    #[serde(with = "hexfloat")]
    pub step: f64,
    /// ChaCha word position, decimal.
    pub rng_word_pos: String,
    #[serde(with = "hexfloat::vec")]
    pub eigenvalues: Vec<f64>,
}

/// Single-eigenvalue Metropolis chain with Gaussian proposals.
#[derive(Debug, Clone)]
pub struct CoulombChain {
    potential: Potential,
    weight_scale: f64,
    eigs: Vec<f64>,
    step: f64,
    rng: ChaCha8Rng,
    seed: u64,
    stream: u64,
    sweeps: u64,
    log_weight: f64,
    proposed: u64,
    accepted: u64,
    max_drift: f64,
}

impl CoulombChain {
    /// Starts n particles on the Chebyshev points of the quadratic-start
    /// support of V/(S/n).
    pub fn new(potential: &Potential, n: usize, weight_scale: f64, seed: u64, stream: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("chain needs at least one particle".into()));
        }
        let (c, r0) = potential.quadratic_start();
        let r = r0 * (n as f64 / weight_scale).sqrt();
        let eigs: Vec<f64> = (0..n)
            .map(|i| c + r * ((i as f64 + 0.5) * std::f64::consts::PI / n as f64).cos())
            .collect();
        let mut chain = CoulombChain {
            potential: potential.clone(),
            weight_scale,
            eigs,
            step: 0.5 * r / n as f64 + 1e-3,
            rng: stream_rng(seed, stream),
            seed,
            stream,
            sweeps: 0,
            log_weight: 0.0,
            proposed: 0,
            accepted: 0,
            max_drift: 0.0,
        };
        chain.log_weight = chain.recompute_log_weight();
        Ok(chain)
    }

    pub fn from_checkpoint(potential: &Potential, weight_scale: f64, cp: &ChainCheckpoint) -> Result<Self> {
        let mut chain = CoulombChain::new(potential, cp.eigenvalues.len(), weight_scale, cp.seed, cp.stream)?;
        chain.eigs = cp.eigenvalues.clone();
        chain.step = cp.step;
        chain.sweeps = cp.sweeps;
        let pos: u128 = cp
            .rng_word_pos
            .parse()
            .map_err(|e| Error::Config(format!("bad rng position: {e}")))?;
        chain.rng.set_word_pos(pos);
        chain.log_weight = chain.recompute_log_weight();
        Ok(chain)
    }

    pub fn checkpoint(&self) -> ChainCheckpoint {
        ChainCheckpoint {
            seed: self.seed,
            stream: self.stream,
            sweeps: self.sweeps,
            step: self.step,
            rng_word_pos: self.rng.get_word_pos().to_string(),
            eigenvalues: self.eigs.clone(),
        }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigs
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn sweeps(&self) -> u64 {
        self.sweeps
    }

    pub fn log_weight(&self) -> f64 {
        self.log_weight
    }

    /// Largest cache drift seen by any consistency check so far.
    pub fn max_cache_drift(&self) -> f64 {
        self.max_drift
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Acceptance fraction since the last reset.
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn reset_counters(&mut self) {
        self.proposed = 0;
        self.accepted = 0;
    }

    pub fn recompute_log_weight(&self) -> f64 {
        let x = &self.eigs;
        let mut s = 0.0;
        for i in 0..x.len() {
            for j in i + 1..x.len() {
                s += 2.0 * (x[i] - x[j]).abs().ln();
            }
            s -= self.weight_scale * self.potential.value(x[i]);
        }
        s
    }

    /// One sweep of single-eigenvalue updates; returns the number accepted.
    pub fn sweep(&mut self) -> Result<usize> {
        let n = self.eigs.len();
        let mut acc = 0;
        for i in 0..n {
            let old = self.eigs[i];
            let z: f64 = self.rng.sample(StandardNormal);
            let new = old + self.step * z;
            let mut delta = -self.weight_scale * (self.potential.value(new) - self.potential.value(old));
            // Products of 8 distance ratios per logarithm.
            let mut log_ratio = 0.0;
            let mut prod = 1.0;
            for (j, &xj) in self.eigs.iter().enumerate() {
                if j != i {
                    prod *= (new - xj) / (old - xj);
                }
                if j % 8 == 7 {
                    log_ratio += prod.abs().ln();
                    prod = 1.0;
                }
            }
            log_ratio += prod.abs().ln();
            delta += 2.0 * log_ratio;
            let u: f64 = self.rng.random();
            if delta.is_finite() && u.ln() < delta {
                self.eigs[i] = new;
                self.log_weight += delta;
                acc += 1;
            }
        }
        self.proposed += n as u64;
        self.accepted += acc as u64;
        self.sweeps += 1;
        if self.sweeps.is_multiple_of(CACHE_CHECK_INTERVAL as u64) {
            self.check_cache()?;
        }
        Ok(acc)
    }

    /// Compares the cached log-weight with a fresh evaluation and resyncs.
    pub fn check_cache(&mut self) -> Result<f64> {
        let fresh = self.recompute_log_weight();
        let drift = (fresh - self.log_weight).abs();
        if drift > CACHE_TOL * fresh.abs().max(1.0) {
            return Err(Error::Numeric(format!(
                "log-weight cache drifted by {drift:e} after {} sweeps",
                self.sweeps
            )));
        }
        self.log_weight = fresh;
        self.max_drift = self.max_drift.max(drift);
        Ok(drift)
    }

    /// Burn-in with step adaptation toward 40% acceptance, then freezes the step.
    pub fn equilibrate(&mut self, sweeps: usize) -> Result<()> {
        let n = self.eigs.len() as f64;
        for s in 0..sweeps {
            let acc = self.sweep()? as f64 / n;
            let gain = 1.0 / (1.0 + s as f64 / 20.0).sqrt();
            self.step *= (gain * (acc - TARGET_ACCEPTANCE)).exp();
        }
        self.reset_counters();
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchMean {
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainSummary {
    pub acceptance_rate: f64,
    pub step: f64,
    /// Batch means of (1/N) Σ x_i and (1/N) Σ x_i² over the measurement sweeps.
    pub first_moment: BatchMean,
    pub second_moment: BatchMean,
    pub max_cache_drift: f64,
    pub checkpoint: ChainCheckpoint,
}

pub const MEASUREMENT_BATCHES: usize = 50;

/// Burn-in of 10·N sweeps followed by `sweeps` measurement sweeps.
pub fn sample_chain(potential: &Potential, n: usize, sweeps: usize, seed: u64) -> Result<ChainSummary> {
    let mut chain = CoulombChain::new(potential, n, n as f64, seed, 0)?;
    chain.equilibrate(10 * n)?;
    let mut m1 = Vec::with_capacity(sweeps);
    let mut m2 = Vec::with_capacity(sweeps);
    for _ in 0..sweeps {
        chain.sweep()?;
        let x = chain.eigenvalues();
        m1.push(x.iter().sum::<f64>() / n as f64);
        m2.push(x.iter().map(|v| v * v).sum::<f64>() / n as f64);
    }
    let (a, b) = batch_means(&m1, MEASUREMENT_BATCHES);
    let (c, d) = batch_means(&m2, MEASUREMENT_BATCHES);
    Ok(ChainSummary {
        acceptance_rate: chain.acceptance_rate(),
        step: chain.step(),
        first_moment: BatchMean { mean: a, stderr: b },
        second_moment: BatchMean { mean: c, stderr: d },
        max_cache_drift: chain.max_cache_drift(),
        checkpoint: chain.checkpoint(),
    })
}

/// ln of the normalized rank-one spherical integral
/// (N-1)! k^{-(N-1)} Σ_i e^{k x_i} / Π_{j≠i}(x_i - x_j).
pub fn dh_rank_one_ln(x: &[f64], k: f64) -> Result<f64> {
    let n = x.len();
    if n == 0 {
        return Err(Error::Domain("no eigenvalues".into()));
    }
    let mut y: Vec<f64> = if k < 0.0 { x.iter().map(|v| -v).collect() } else { x.to_vec() };
    let k = k.abs();
    y.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for w in y.windows(2) {
        if w[1] - w[0] < 1e-12 {
            return Err(Error::Degeneracy(format!("eigenvalue gap {:e} below 1e-12", w[1] - w[0])));
        }
    }
    if k == 0.0 {
        return Ok(0.0);
    }
    if n == 1 {
        return Ok(k * y[0]);
    }
    let mid = 0.5 * (y[0] + y[n - 1]);
    for v in y.iter_mut() {
        *v -= mid;
    }
    let half = 0.5 * (y[n - 1] - y[0]);
    // Scaled step kp = k/T with kp·max|y| ≤ 1/2.
    let s = (2.0 * k * half).log2().ceil().max(0.0) as i32;
    let t = 2f64.powi(s);
    let kp = k / t;
    const TERMS: usize = 40;
    let ln_t = t.ln();
    // M[i][j] = β_ij C(i, j) T^{-(i-j)} for 0-based j ≤ i, with
    // β_ij = Σ_p kp^p h_p(y_j..y_i) m!/(m+p)!, m = i - j.
    let mut mat = vec![0.0; n * n];
    let mut h = [0.0f64; TERMS];
    let ln_fact: Vec<f64> = (0..=n).map(|i| ln_gamma(i as f64 + 1.0)).collect();
    for j in 0..n {
        h[0] = 1.0;
        for p in 1..TERMS {
            h[p] = h[p - 1] * y[j];
        }
        for i in j..n {
            if i > j {
                for p in 1..TERMS {
                    h[p] += y[i] * h[p - 1];
                }
            }
            let m = i - j;
            let mut beta = 0.0;
            let mut coef = 1.0;
            for (p, hp) in h.iter().enumerate() {
                if p > 0 {
                    coef *= kp / (m + p) as f64;
                }
                let term = coef * hp;
                beta += term;
                if p > 8 && term.abs() < 1e-18 * beta.abs() {
                    break;
                }
            }
            let ln_binom = ln_fact[i] - ln_fact[j] - ln_fact[m];
            mat[i * n + j] = beta * (ln_binom - m as f64 * ln_t).exp();
        }
    }
    let mut v = vec![0.0; n];
    v[0] = 1.0;
    let mut w = vec![0.0; n];
    let mut log_scale = 0.0;
    for _ in 0..(t as u64) {
        for i in 0..n {
            let row = &mat[i * n..i * n + i + 1];
            w[i] = row.iter().zip(&v[..=i]).map(|(a, b)| a * b).sum();
        }
        let mx = w.iter().cloned().fold(0.0, f64::max);
        if !(mx > 0.0) || !mx.is_finite() {
            return Err(Error::Numeric("spherical integral iteration lost positivity".into()));
        }
        if !(1e-100..=1e100).contains(&mx) {
            for wi in w.iter_mut() {
                *wi /= mx;
            }
            log_scale += mx.ln();
        }
        std::mem::swap(&mut v, &mut w);
    }
    Ok(k * mid + log_scale + v[n - 1].ln())
}

pub fn dh_rank_one(x: &[f64], k: f64) -> Result<f64> {
    dh_rank_one_ln(x, k).map(f64::exp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    pub seed: u64,
    /// Recorded samples per chain.
    pub samples: usize,
    /// Sweeps between recorded samples.
    pub thin: usize,
    /// Independent chains (streams of the seed), run in parallel.
    pub chains: usize,
    /// Burn-in sweeps; defaults to 10·N.
    pub burn_in: Option<usize>,
}

impl ChainParams {
    pub fn new(seed: u64, samples: usize) -> Self {
        ChainParams { seed, samples, thin: 2, chains: 1, burn_in: None }
    }
}

/// Runs `params.chains` chains and returns, per chain, the recorded values of
/// `observe` on the eigenvalues.
pub fn run_chains<T, F>(potential: &Potential, n: usize, weight_scale: f64, params: &ChainParams, observe: F) -> Result<Vec<Vec<T>>>
where
    T: Send,
    F: Fn(&[f64], &mut ChaCha8Rng) -> Result<T> + Sync,
{
    if params.samples == 0 || params.chains == 0 {
        return Err(Error::Config("samples and chains must be positive".into()));
    }
    (0..params.chains)
        .into_par_iter()
        .map(|c| {
            let mut chain = CoulombChain::new(potential, n, weight_scale, params.seed, c as u64)?;
            chain.equilibrate(params.burn_in.unwrap_or(10 * n))?;
            let mut obs_rng = stream_rng(params.seed, (1 << 32) + c as u64);
            let mut out = Vec::with_capacity(params.samples);
            for _ in 0..params.samples {
                for _ in 0..params.thin.max(1) {
                    chain.sweep()?;
                }
                out.push(observe(chain.eigenvalues(), &mut obs_rng)?);
            }
            Ok(out)
        })
        .collect()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// N^{-1} ln E[DH(x, N k)] with a batch-means standard error (delta method).
pub fn mc_char_rank1(potential: &Potential, n: usize, k: f64, params: &ChainParams) -> Result<(f64, f64)> {
    let per_chain = run_chains(potential, n, n as f64, params, |x, _| dh_rank_one_ln(x, n as f64 * k))?;
    let all: Vec<f64> = per_chain.into_iter().flatten().collect();
    let total = log_sum_exp(&all) - (all.len() as f64).ln();
    let nb = MEASUREMENT_BATCHES.min(all.len() / 2).max(2);
    let len = all.len() / nb;
    let rel: Vec<f64> = (0..nb)
        .map(|b| (log_sum_exp(&all[b * len..(b + 1) * len]) - (len as f64).ln() - total).exp())
        .collect();
    let m = rel.iter().sum::<f64>() / nb as f64;
    let var = rel.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (nb as f64 - 1.0);
    let se = (var / nb as f64).sqrt();
    Ok((total / n as f64, se / n as f64))
}

/// Monic three-term recurrence π_{k+1} = (x - α_k) π_k - β_k π_{k-1} for the
/// weight e^{-N V}; `beta[0]` holds ln ∫ e^{-N V}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthoPolys {
    pub weight_scale: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub log_mass: f64,
    pub quadrature_nodes: usize,
    pub max_gram_offdiag: f64,
}

impl OrthoPolys {
    /// π_n(x) for n ≤ len(alpha).
    pub fn eval_monic(&self, n: usize, x: f64) -> f64 {
        let (mut p0, mut p1) = (0.0, 1.0);
        for j in 0..n {
            let p2 = (x - self.alpha[j]) * p1 - if j > 0 { self.beta[j] * p0 } else { 0.0 };
            p0 = p1;
            p1 = p2;
        }
        p1
    }
}

struct Discretized {
    x: Vec<f64>,
    w: Vec<f64>,
    log_scale: f64,
}

fn discretize(potential: &Potential, scale: f64, lo: f64, hi: f64, m: usize) -> Discretized {
    let (t, wt) = gauss_legendre(m);
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let x: Vec<f64> = t.iter().map(|t| mid + half * t).collect();
    let e: Vec<f64> = x.iter().map(|&x| -scale * potential.value(x)).collect();
    let emax = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w = wt.iter().zip(&e).map(|(w, e)| w * half * (e - emax).exp()).collect();
    Discretized { x, w, log_scale: emax }
}

/// Lanczos (Stieltjes) recurrence on a discrete measure, fully reorthogonalized.
fn lanczos(d: &Discretized, degree: usize) -> (Vec<f64>, Vec<f64>, f64, Vec<Vec<f64>>) {
    let mass: f64 = d.w.iter().sum();
    let mut q: Vec<Vec<f64>> = vec![d.w.iter().map(|w| (w / mass).sqrt()).collect()];
    let mut alpha = Vec::with_capacity(degree);
    let mut beta = vec![mass];
    for k in 0..degree {
        let qk = &q[k];
        let a: f64 = qk.iter().zip(&d.x).map(|(q, x)| q * q * x).sum();
        alpha.push(a);
        if k + 1 == degree {
            break;
        }
        let mut r: Vec<f64> = qk.iter().zip(&d.x).map(|(q, x)| (x - a) * q).collect();
        if k > 0 {
            let sb = beta[k].sqrt();
            for (ri, qp) in r.iter_mut().zip(&q[k - 1]) {
                *ri -= sb * qp;
            }
        }
        for _ in 0..2 {
            for qj in &q {
                let dot: f64 = r.iter().zip(qj).map(|(a, b)| a * b).sum();
                for (ri, qji) in r.iter_mut().zip(qj) {
                    *ri -= dot * qji;
                }
            }
        }
        let nrm2: f64 = r.iter().map(|v| v * v).sum();
        beta.push(nrm2);
        let nrm = nrm2.sqrt();
        q.push(r.into_iter().map(|v| v / nrm).collect());
    }
    (alpha, beta, mass, q)
}

/// Recurrence coefficients up to `max_degree` for the weight e^{-N V}, from a
/// Gauss–Legendre discretization (4N nodes to start, doubled until the
/// coefficients settle to 1e-12).
pub fn build_ortho_polys(potential: &Potential, n: usize, max_degree: usize) -> Result<OrthoPolys> {
    if n == 0 {
        return Err(Error::Domain("weight scale N must be positive".into()));
    }
    if max_degree > 2 * n {
        return Err(Error::Domain(format!("max_degree {max_degree} exceeds 2N = {}", 2 * n)));
    }
    let scale = n as f64;
    let t = (max_degree.max(1) as f64) / scale;
    let wide = solve_equilibrium(&potential.scaled(t)?, 1e-14)?;
    let (c, r) = (wide.measure.center(), wide.measure.half_width());
    let tail = 12.0 / (scale * potential.certificate().min_second_derivative).sqrt();
    let (lo, hi) = (c - 1.25 * r - tail, c + 1.25 * r + tail);
    let deg = max_degree + 1;
    let mut m = (4 * n).max(2 * deg + 32);
    let run = |m: usize| {
        let d = discretize(potential, scale, lo, hi, m);
        let (a, b, mass, _) = lanczos(&d, deg);
        (a, b, mass.ln() + d.log_scale)
    };
    let (mut a, mut b, _) = run(m);
    let mut lm;
    loop {
        if m > 1 << 16 {
            return Err(Error::Convergence("orthogonal polynomial discretization did not settle".into()));
        }
        m *= 2;
        let (a2, b2, lm2) = run(m);
        let ascale = 1.0 + c.abs() + r;
        let change = a
            .iter()
            .zip(&a2)
            .map(|(x, y)| (x - y).abs() / ascale)
            .chain(b.iter().zip(&b2).skip(1).map(|(x, y)| (x - y).abs() / (ascale * ascale)))
            .fold(0.0, f64::max);
        a = a2;
        b = b2;
        lm = lm2;
        if change < 1e-12 {
            break;
        }
    }
    // Gram check of the orthonormal polynomials on an independent, finer grid.
    let d = discretize(potential, scale, lo, hi, 2 * m);
    let mass: f64 = d.w.iter().sum();
    let mut p_prev = vec![0.0; d.x.len()];
    let mut p_cur: Vec<f64> = vec![1.0; d.x.len()];
    let mut basis = vec![p_cur.clone()];
    for j in 0..max_degree {
        let sb = if j > 0 { b[j].sqrt() } else { 0.0 };
        let next: Vec<f64> = (0..d.x.len())
            .map(|i| ((d.x[i] - a[j]) * p_cur[i] - sb * p_prev[i]) / b[j + 1].sqrt())
            .collect();
        p_prev = std::mem::replace(&mut p_cur, next);
        basis.push(p_cur.clone());
    }
    let mut max_off: f64 = 0.0;
    for i in 0..basis.len() {
        for j in 0..i {
            let g: f64 = (0..d.x.len()).map(|q| d.w[q] * basis[i][q] * basis[j][q]).sum::<f64>() / mass;
            max_off = max_off.max(g.abs());
        }
    }
    if max_off > 1e-8 {
        return Err(Error::Precision(format!("Gram matrix off-diagonal {max_off:e} exceeds 1e-8")));
    }
    b[0] = lm;
    Ok(OrthoPolys {
        weight_scale: scale,
        alpha: a[..max_degree.max(1)].to_vec(),
        beta: b[..max_degree.max(1)].to_vec(),
        log_mass: lm,
        quadrature_nodes: m,
        max_gram_offdiag: max_off,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharPolyPoint {
    pub t: f64,
    pub mc: f64,
    pub stderr: f64,
    pub exact: f64,
}

impl CharPolyPoint {
    pub fn z_score(&self) -> f64 {
        (self.mc - self.exact).abs() / self.stderr
    }
}

pub const MAX_CHAR_POLY_N: usize = 8;

/// Monte-Carlo E[Π_{l=1}^{N-1}(t - x_l)] over N-1 particles with weight
/// e^{-N V}, against the monic orthogonal polynomial π_{N-1}.
pub fn avg_char_poly_check(potential: &Potential, n: usize, t_grid: &[f64], params: &ChainParams) -> Result<Vec<CharPolyPoint>> {
    if !(2..=MAX_CHAR_POLY_N).contains(&n) {
        return Err(Error::SizeLimit(format!("N must lie in 2..={MAX_CHAR_POLY_N}, got {n}")));
    }
    let ops = build_ortho_polys(potential, n, n)?;
    let per_chain = run_chains(potential, n - 1, n as f64, params, |x, _| {
        Ok(t_grid.iter().map(|t| x.iter().map(|xl| t - xl).product::<f64>()).collect::<Vec<f64>>())
    })?;
    let all: Vec<Vec<f64>> = per_chain.into_iter().flatten().collect();
    Ok(t_grid
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let series: Vec<f64> = all.iter().map(|v| v[i]).collect();
            let (mean, se) = batch_means(&series, MEASUREMENT_BATCHES);
            CharPolyPoint { t, mc: mean, stderr: se, exact: ops.eval_monic(n - 1, t) }
        })
        .collect())
}

pub const MAX_FERMIONIC_N: usize = 256;

/// ln|k^N π_N(t/k)| and its sign, from the scaled recurrence.
fn log_scaled_poly(ops: &OrthoPolys, n: usize, k: f64, t: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (0.0, 1.0);
    let mut log_scale = 0.0;
    for j in 0..n {
        let p2 = (t - k * ops.alpha[j]) * p1 - if j > 0 { k * k * ops.beta[j] * p0 } else { 0.0 };
        p0 = p1;
        p1 = p2;
        let m = p1.abs().max(p0.abs());
        if m > 1e100 || (m < 1e-100 && m > 0.0) {
            p0 /= m;
            p1 /= m;
            log_scale += m.ln();
        }
    }
    (log_scale + p1.abs().ln(), p1.signum())
}

/// N^{-1} ln Ω̂(N k) from the exact representation
/// Ω̂ = (N^{N+1}/N!) ∫_0^∞ k^N π_{N,N}(t/k) e^{-N t} dt,
/// integrated by composite Gauss–Legendre in log-space.
pub fn fermionic_char(potential: &Potential, n: usize, k: f64) -> Result<f64> {
    if n == 0 || n > MAX_FERMIONIC_N {
        return Err(Error::SizeLimit(format!("N must lie in 1..={MAX_FERMIONIC_N}, got {n}")));
    }
    if k == 0.0 {
        return Ok(0.0);
    }
    let ops = build_ortho_polys(potential, n, n)?;
    let nf = n as f64;
    let log_integrand = |t: f64| {
        let (lp, s) = log_scaled_poly(&ops, n, k, t);
        (lp - nf * t, s)
    };
    // Range: up to where the integrand has dropped 60 units below its peak.
    let (c, r) = potential.quadratic_start();
    let mut tmax = 2.0 * (1.0 + k.abs() * (c.abs() + 2.0 * r));
    loop {
        let grid: Vec<f64> = (1..=400).map(|i| tmax * i as f64 / 400.0).collect();
        let peak = grid.iter().map(|&t| log_integrand(t).0).fold(f64::NEG_INFINITY, f64::max);
        if log_integrand(tmax).0 < peak - 60.0 {
            break;
        }
        tmax *= 2.0;
        if tmax > 1e6 {
            return Err(Error::Convergence("fermionic integrand does not decay".into()));
        }
    }
    let (gx, gw) = gauss_legendre(16);
    let integrate = |panels: usize| -> (f64, f64) {
        let h = tmax / panels as f64;
        let mut vals = Vec::with_capacity(panels * 16);
        for p in 0..panels {
            let a = p as f64 * h;
            for (x, w) in gx.iter().zip(&gw) {
                let t = a + 0.5 * h * (x + 1.0);
                let (l, s) = log_integrand(t);
                vals.push((l + (0.5 * h * w).ln(), s));
            }
        }
        let m = vals.iter().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = vals.iter().map(|(l, s)| s * (l - m).exp()).sum();
        (m, sum)
    };
    let mut panels = 64;
    let (mut m, mut s) = integrate(panels);
    loop {
        panels *= 2;
        let (m2, s2) = integrate(panels);
        let rel = ((s2 * (m2 - m).exp()) - s).abs() / s.abs();
        m = m2;
        s = s2;
        if rel < 1e-12 {
            break;
        }
        if panels > 1 << 14 {
            return Err(Error::Convergence(format!("fermionic quadrature stalled at relative change {rel:e}")));
        }
    }
    if s <= 0.0 {
        return Err(Error::Numeric("fermionic integral is not positive".into()));
    }
    let prefactor = (nf + 1.0) * nf.ln() - ln_gamma(nf + 1.0);
    Ok((prefactor + m + s.ln()) / nf)
}
