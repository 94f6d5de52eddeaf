use freeprobe::coulomb_mc::*;
use freeprobe::equilibrium::{solve_equilibrium, Potential};
use freeprobe::omega::omega_via_r_integral;
use freeprobe::quad::gauss_legendre;
use freeprobe::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn quartic() -> Potential {
    Potential::new(vec![0.0, 0.0, 0.5, 0.0, 0.1]).unwrap()
}

/// (N-1)! ∫ over the simplex Σu = 1 of e^{k Σ x_i u_i}, tensor Gauss–Legendre.
fn simplex_oracle(x: &[f64], k: f64) -> f64 {
    let (t, w) = gauss_legendre(40);
    let map = |a: f64, b: f64, i: usize| (a + (b - a) * 0.5 * (t[i] + 1.0), 0.5 * (b - a) * w[i]);
    match x.len() {
        2 => (0..40).map(|i| {
            let (u, wu) = map(0.0, 1.0, i);
            wu * (k * (x[0] * u + x[1] * (1.0 - u))).exp()
        }).sum(),
        3 => {
            let mut s = 0.0;
            for i in 0..40 {
                let (u, wu) = map(0.0, 1.0, i);
                for j in 0..40 {
                    let (v, wv) = map(0.0, 1.0 - u, j);
                    s += wu * wv * (k * (x[0] * u + x[1] * v + x[2] * (1.0 - u - v))).exp();
                }
            }
            2.0 * s
        }
        _ => unreachable!(),
    }
}

#[test]
fn dh_two_point_closed_form() {
    let (x1, x2): (f64, f64) = (0.3, -1.1);
    for k in [0.5, -2.0, 7.0] {
        let want = ((k * x1).exp() - (k * x2).exp()) / (k * (x1 - x2));
        assert!((dh_rank_one(&[x1, x2], k).unwrap() / want - 1.0).abs() < 1e-12);
    }
}

#[test]
fn dh_against_simplex_quadrature() {
    for (x, k) in [(vec![0.0, 1.0, 2.0], 1.0), (vec![-0.4, 0.9, 0.1], -3.0), (vec![1.5, -2.0], 4.0), (vec![0.2, 0.25, -0.7], 10.0)] {
        let a = dh_rank_one(&x, k).unwrap();
        let b = simplex_oracle(&x, k);
        assert!((a / b - 1.0).abs() < 1e-10, "{x:?} {k}: {a} vs {b}");
    }
}

#[test]
fn dh_small_k_and_degeneracy() {
    let x = [0.4, -1.3, 0.9, 2.2, -0.1];
    assert_eq!(dh_rank_one(&x, 0.0).unwrap(), 1.0);
    assert!((dh_rank_one(&x, 1e-6).unwrap() - 1.0).abs() < 1e-5);
    assert!(matches!(dh_rank_one(&[0.5, 0.5 + 1e-13], 1.0), Err(Error::Degeneracy(_))));
}

#[test]
fn dh_survives_large_arguments() {
    // N = 128 semicircle quantiles at k·N = 64 would overflow the raw sum.
    let cdf = |x: f64| 0.5 + x * (4.0 - x * x).sqrt() / (4.0 * std::f64::consts::PI) + (x / 2.0).asin() / std::f64::consts::PI;
    let x: Vec<f64> = (0..128)
        .map(|i| {
            let q = (i as f64 + 0.5) / 128.0;
            let (mut lo, mut hi) = (-2.0, 2.0);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if cdf(mid) < q { lo = mid } else { hi = mid }
            }
            0.5 * (lo + hi)
        })
        .collect();
    let v = dh_rank_one_ln(&x, 64.0).unwrap();
    assert!(v.is_finite() && v > 0.0 && v < 64.0 * 2.0);
    // Large-N limit at k = 0.5 is N ω(0.5) = 128/8 for the semicircle.
    assert!((v / 128.0 - 0.125).abs() < 0.01, "{v}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dh_is_permutation_symmetric(x in prop::collection::vec(-3.0f64..3.0, 2..20), k in -8.0f64..8.0, seed in 0u64..1000) {
        let mut x = x;
        x.sort_by(|a, b| a.partial_cmp(b).unwrap());
        x.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
        prop_assume!(x.len() >= 2);
        let base = dh_rank_one_ln(&x, k).unwrap();
        let mut y = x.clone();
        y.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let shuffled = dh_rank_one_ln(&y, k).unwrap();
        prop_assert!((base - shuffled).abs() <= 1e-12 * base.abs().max(1.0));
    }
}

#[test]
fn chain_is_deterministic_and_resumable() {
    let v = quartic();
    let mut a = CoulombChain::new(&v, 12, 12.0, 5, 0).unwrap();
    let mut b = CoulombChain::new(&v, 12, 12.0, 5, 0).unwrap();
    a.equilibrate(50).unwrap();
    b.equilibrate(50).unwrap();
    for _ in 0..30 {
        a.sweep().unwrap();
        b.sweep().unwrap();
    }
    assert_eq!(a.eigenvalues(), b.eigenvalues());
    let cp = a.checkpoint();
    let json = serde_json::to_string(&cp).unwrap();
    let mut c = CoulombChain::from_checkpoint(&v, 12.0, &serde_json::from_str(&json).unwrap()).unwrap();
    for _ in 0..40 {
        a.sweep().unwrap();
        c.sweep().unwrap();
    }
    assert_eq!(a.eigenvalues(), c.eigenvalues());
}

#[test]
fn two_particle_second_moment() {
    // Exact E[x₁² + x₂²] for the density (x₁-x₂)² e^{-(x₁²+x₂²)} by 2D quadrature.
    let (t, w) = gauss_legendre(120);
    let (mut z, mut m) = (0.0, 0.0);
    for i in 0..120 {
        for j in 0..120 {
            let (x, y) = (6.0 * t[i], 6.0 * t[j]);
            let p = w[i] * w[j] * (x - y).powi(2) * (-(x * x + y * y)).exp();
            z += p;
            m += p * (x * x + y * y);
        }
    }
    let exact = m / z;
    let params = ChainParams { seed: 3, samples: 200_000, thin: 1, chains: 1, burn_in: None };
    let vals: Vec<f64> = run_chains(&Potential::gaussian(), 2, 2.0, &params, |x, _| Ok(x[0] * x[0] + x[1] * x[1]))
        .unwrap()
        .concat();
    let (mean, se) = batch_means(&vals, MEASUREMENT_BATCHES);
    assert!((mean - exact).abs() < 3.0 * se, "{mean} ± {se} vs {exact}");
}

#[test]
fn chain_summary_invariants() {
    let s = sample_chain(&quartic(), 40, 10_000, 8).unwrap();
    assert!((0.2..=0.6).contains(&s.acceptance_rate), "{}", s.acceptance_rate);
    assert!(s.max_cache_drift < 1e-9 * 1e3);
    let t = sample_chain(&quartic(), 40, 10_000, 9).unwrap();
    let z = (s.second_moment.mean - t.second_moment.mean).abs() / s.second_moment.stderr.hypot(t.second_moment.stderr);
    assert!(z < 3.0, "seeds disagree: z = {z}");
    let c2 = solve_equilibrium(&quartic(), 1e-13).unwrap().free_cumulants[1];
    assert!((s.second_moment.mean - c2).abs() < 0.02);
}

#[test]
fn char_rank1_examples() {
    let params = ChainParams { seed: 17, samples: 300, thin: 2, chains: 2, burn_in: None };
    let (v0, _) = mc_char_rank1(&quartic(), 16, 0.0, &params).unwrap();
    assert_eq!(v0, 0.0);
    let (v, se) = mc_char_rank1(&Potential::gaussian(), 64, 0.5, &params).unwrap();
    assert!(se > 0.0 && (v - 0.125).abs() < 2e-2, "{v} ± {se}");
}

#[test]
fn hermite_recurrence() {
    for n in [3usize, 16, 40] {
        let ops = build_ortho_polys(&Potential::gaussian(), n, 2 * n).unwrap();
        for j in 1..2 * n {
            assert!((ops.beta[j] - j as f64 / n as f64).abs() < 1e-12, "N {n}, j {j}");
        }
        assert!(ops.alpha.iter().all(|a| a.abs() < 1e-12));
        assert!(ops.max_gram_offdiag < 1e-10);
        assert_eq!(ops.eval_monic(0, 0.3), 1.0);
    }
    assert!(matches!(build_ortho_polys(&Potential::gaussian(), 4, 9), Err(Error::Domain(_))));
}

#[test]
fn first_recurrence_coefficient_is_the_mean() {
    let v = Potential::new(vec![0.0, 0.3, 0.5, 0.2, 0.1]).unwrap();
    let n = 5;
    let ops = build_ortho_polys(&v, n, 2 * n).unwrap();
    let (t, w) = gauss_legendre(400);
    let (mut z, mut m) = (0.0, 0.0);
    for (t, w) in t.iter().zip(&w) {
        let x = -3.0 + 3.0 * (t + 1.0);
        let p = w * (-(n as f64) * v.value(x)).exp();
        z += p;
        m += p * x;
    }
    assert!((ops.alpha[0] - m / z).abs() < 1e-12);
    assert!((ops.eval_monic(1, 0.7) - (0.7 - ops.alpha[0])).abs() < 1e-15);
    assert!(ops.max_gram_offdiag < 1e-10);
}

#[test]
fn average_characteristic_polynomial_small_cases() {
    let params = ChainParams { seed: 2, samples: 200_000, thin: 1, chains: 1, burn_in: None };
    let pts = avg_char_poly_check(&Potential::gaussian(), 2, &[0.5, 1.0, 2.0], &params).unwrap();
    for p in &pts {
        assert!((p.exact - p.t).abs() < 1e-14);
        assert!(p.z_score() < 3.0, "{p:?}");
    }
    let pts = avg_char_poly_check(&quartic(), 4, &[3.0, 4.0, 5.0], &params).unwrap();
    assert!(pts.iter().all(|p| p.z_score() < 3.0), "{pts:?}");
    assert!(matches!(avg_char_poly_check(&quartic(), 9, &[1.0], &params), Err(Error::SizeLimit(_))));
}

#[test]
fn fermionic_examples() {
    let g = Potential::gaussian();
    assert_eq!(fermionic_char(&g, 64, 0.0).unwrap(), 0.0);
    assert!((fermionic_char(&g, 64, 0.5).unwrap() + 0.125).abs() < 1e-2);
    assert!(fermionic_char(&g, 64, 1e-6).unwrap().abs() < 1e-10);
    let sol = solve_equilibrium(&quartic(), 1e-13).unwrap();
    let target = -omega_via_r_integral(&sol, 0.4).unwrap();
    let d64 = (fermionic_char(&quartic(), 64, 0.4).unwrap() - target).abs();
    let d128 = (fermionic_char(&quartic(), 128, 0.4).unwrap() - target).abs();
    assert!(d64 < 1e-2 && d128 < d64);
    assert!(matches!(fermionic_char(&g, 257, 0.5), Err(Error::SizeLimit(_))));
}
