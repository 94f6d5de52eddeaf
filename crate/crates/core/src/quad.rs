//! Quadrature rules shared across modules.

use crate::{Error, Result};
use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on [-1, 1], by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            } else {
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            dp = 1.0;
            z = 0.0;
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    if n == 1 {
        w[0] = 2.0;
    }
    (x, w)
}

/// Nodes cos((i + 1/2)π/n) of the first-kind Gauss–Chebyshev rule (weight π/n each).
pub fn chebyshev_t_nodes(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| ((i as f64 + 0.5) * PI / n as f64).cos())
        .collect()
}

/// Second-kind Gauss–Chebyshev rule: ∫ f(s) √(1-s²) ds ≈ Σ w_i f(s_i).
pub fn chebyshev_u_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let h = PI / (n as f64 + 1.0);
    (1..=n)
        .map(|i| {
            let th = i as f64 * h;
            (th.cos(), h * th.sin().powi(2))
        })
        .unzip()
}

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let fs = f(c - h * XGK[j]) + f(c + h * XGK[j]);
        k += WGK[j] * fs;
        if j % 2 == 1 {
            g += WG[j / 2] * fs;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) integration with absolute tolerance `atol`.
/// Intervals still unresolved at depth 40 are accepted as long as their
/// combined error estimate stays within `atol`.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, atol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let mut stack = vec![(a, b, atol, 0usize)];
    let mut total = 0.0;
    let mut leftover = 0.0;
    let mut evals = 0usize;
    while let Some((lo, hi, tol, depth)) = stack.pop() {
        let (val, err) = gk15(&mut f, lo, hi);
        evals += 15;
        if err <= tol || depth >= 40 {
            if err > tol {
                leftover += err;
            }
            total += val;
        } else {
            if evals > 2_000_000 {
                return Err(Error::Convergence("adaptive quadrature budget exhausted".into()));
            }
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, 0.5 * tol, depth + 1));
            stack.push((mid, hi, 0.5 * tol, depth + 1));
        }
    }
    if leftover > atol {
        return Err(Error::Convergence(format!(
            "adaptive quadrature stalled with unresolved error {leftover:e}"
        )));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(7);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(12)).sum();
        assert!((s - 2.0 / 13.0).abs() < 1e-14);
        let (x, w) = gauss_legendre(400);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.cos()).sum();
        assert!((s - 2.0 * 1f64.sin()).abs() < 1e-13);
    }

    #[test]
    fn chebyshev_u_rule_gives_semicircle_mass() {
        let (s, w) = chebyshev_u_rule(5);
        let m0: f64 = w.iter().sum();
        let m2: f64 = s.iter().zip(&w).map(|(s, w)| w * s * s).sum();
        assert!((m0 - PI / 2.0).abs() < 1e-14);
        assert!((m2 - PI / 8.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_peaked_integrand() {
        let v = integrate_adaptive(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-10).unwrap();
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!((v - exact).abs() < 1e-8);
    }
}
