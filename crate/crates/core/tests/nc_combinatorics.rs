use freeprobe::nc_combinatorics::*;
use freeprobe::Error;
use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Zero};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn q(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn part(blocks: &[&[usize]]) -> Partition {
    Partition::new(blocks.iter().map(|b| b.to_vec()).collect()).unwrap()
}

// Independent recursions: Catalan by convolution, Bell by the triangle.
fn catalan(n: usize) -> u64 {
    let mut c = vec![1u64];
    for m in 1..=n {
        c.push((0..m).map(|i| c[i] * c[m - 1 - i]).sum());
    }
    c[n]
}

fn bell(n: usize) -> u64 {
    let mut row = vec![1u64];
    for _ in 0..n {
        let mut next = vec![*row.last().unwrap()];
        for v in &row {
            next.push(next.last().unwrap() + v);
        }
        row = next;
    }
    row[0]
}

#[test]
fn small_enumerations() {
    let one = enumerate_partitions(1).unwrap();
    assert_eq!(one.len(), 1);
    assert_eq!(one[0].blocks(), &[vec![1]]);
    assert_eq!(enumerate_partitions(3).unwrap().len(), 5);
    let target = part(&[&[1, 5, 8], &[2, 3, 4], &[6, 7]]);
    assert!(enumerate_partitions(8).unwrap().contains(&target));
}

#[test]
fn enumeration_size_limits() {
    assert!(matches!(enumerate_partitions(0), Err(Error::SizeLimit(_))));
    assert!(matches!(enumerate_partitions(13), Err(Error::SizeLimit(_))));
}

#[test]
fn counts_match_bell_and_catalan() {
    for n in 1..=10 {
        assert_eq!(partition_counts(n).unwrap(), (bell(n), catalan(n)), "n = {n}");
        assert_eq!(enumerate_noncrossing(n).unwrap().len() as u64, catalan(n));
    }
}

#[test]
fn crossing_examples() {
    assert!(!is_noncrossing(&part(&[&[1, 3], &[2, 4]])));
    assert!(is_noncrossing(&part(&[&[1, 5, 8], &[2, 3, 4], &[6, 7]])));
    for n in 1..=9 {
        let all: Vec<usize> = (1..=n).collect();
        assert!(is_noncrossing(&part(&[&all])));
    }
}

#[test]
fn partition_json_form() {
    let p = part(&[&[6, 7], &[2, 4, 3], &[8, 1, 5]]);
    assert_eq!(serde_json::to_string(&p).unwrap(), "[[1,5,8],[2,3,4],[6,7]]");
    let back: Partition = serde_json::from_str("[[1,5,8],[2,3,4],[6,7]]").unwrap();
    assert_eq!(back, p);
    assert_eq!(p.block_profile().iter().enumerate().map(|(i, c)| (i + 1) * c).sum::<usize>(), 8);
}

#[test]
fn invalid_partitions_rejected() {
    assert!(Partition::new(vec![vec![1, 2], vec![2, 3]]).is_err());
    assert!(Partition::new(vec![vec![1], vec![3]]).is_err());
}

#[test]
fn free_moment_examples() {
    let semicircle = CumulantSeq::from_integers(&[0, 1, 0, 0, 0, 0, 0, 0]);
    assert_eq!(moments_from_free_cumulants(&semicircle, 8).unwrap(), q(14));
    let c1 = CumulantSeq::new(vec![BigRational::new(BigInt::from(3), BigInt::from(7))]);
    assert_eq!(moments_from_free_cumulants(&c1, 1).unwrap(), c1.get(1).clone());
    let boson = CumulantSeq::from_integers(&[0, 1, 0, 1]);
    assert_eq!(moments_from_free_cumulants(&boson, 4).unwrap(), q(3));
    assert!(matches!(moments_from_free_cumulants(&boson, 5), Err(Error::Arity(_))));
}

#[test]
fn free_cumulant_examples() {
    let m: Vec<BigRational> = [0, 1, 0, 2, 0, 5].iter().map(|&v| q(v)).collect();
    let c = free_cumulants_from_moments(&m, 6).unwrap();
    let want: Vec<BigRational> = [0, 1, 0, 0, 0, 0].iter().map(|&v| q(v)).collect();
    assert_eq!(c.values, want);
    let m: Vec<BigRational> = [5, 2, -3].iter().map(|&v| q(v)).collect();
    assert_eq!(free_cumulants_from_moments(&m, 3).unwrap().get(1), &q(5));
}

#[test]
fn classical_moment_examples() {
    let gauss = CumulantSeq::from_integers(&[0, 1, 0, 0, 0, 0]);
    assert_eq!(classical_moments_from_cumulants(&gauss, 4).unwrap(), q(3));
    assert_eq!(classical_moments_from_cumulants(&gauss, 6).unwrap(), q(15));
    let k1 = CumulantSeq::from_integers(&[4]);
    assert_eq!(classical_moments_from_cumulants(&k1, 1).unwrap(), q(4));
}

#[test]
fn classical_and_free_first_differ_at_four() {
    let c = CumulantSeq::new(vec![q(2), BigRational::new(BigInt::from(3), BigInt::from(5)), q(0), q(0)]);
    for n in 1..=3 {
        assert_eq!(classical_moments_from_cumulants(&c, n).unwrap(), moments_from_free_cumulants(&c, n).unwrap());
    }
    let diff = classical_moments_from_cumulants(&c, 4).unwrap() - moments_from_free_cumulants(&c, 4).unwrap();
    assert_eq!(diff, c.get(2) * c.get(2));
}

#[test]
fn single_block_contributes_c_n() {
    // m_n - (sum over NC(n) without the one-block partition) = c_n.
    let c = CumulantSeq::from_integers(&[1, -2, 3, 5, -1, 2]);
    for n in 1..=6 {
        let mut rest = BigRational::zero();
        for p in enumerate_noncrossing(n).unwrap() {
            if p.blocks().len() == 1 {
                continue;
            }
            let mut term = BigRational::one();
            for b in p.blocks() {
                term *= c.get(b.len());
            }
            rest += term;
        }
        assert_eq!(moments_from_free_cumulants(&c, n).unwrap() - rest, c.get(n).clone());
    }
}

#[test]
fn dual_cauchy_examples() {
    assert_eq!(dual_cauchy_residual(&[Complex64::new(0.0, 0.0)], 1).unwrap(), 0.0);
    let e = [Complex64::new(1.0, 0.0), Complex64::new(2.0, 0.0)];
    assert_eq!(dual_cauchy_residual(&e, 2).unwrap(), 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let eigs: Vec<Complex64> = (0..10)
        .map(|_| Complex64::from_polar(rng.random::<f64>().sqrt(), rng.random::<f64>() * std::f64::consts::TAU))
        .collect();
    assert!(dual_cauchy_residual(&eigs, 10).unwrap() < 1e-12);
}

fn gue_samples(n: usize, count: usize, seed: u64) -> Vec<DMatrix<Complex64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = || -> f64 { rng.sample(rand_distr::StandardNormal) };
    (0..count)
        .map(|_| {
            let mut h = DMatrix::<Complex64>::zeros(n, n);
            for i in 0..n {
                h[(i, i)] = Complex64::new(gauss() / (n as f64).sqrt(), 0.0);
                for j in 0..i {
                    let v = Complex64::new(gauss(), gauss()) / (2.0 * n as f64).sqrt();
                    h[(i, j)] = v;
                    h[(j, i)] = v.conj();
                }
            }
            h
        })
        .collect()
}

#[test]
fn gamma_profile_on_gue() {
    let samples = gue_samples(6, 4000, 9);
    let irr = gamma_profile(&samples, 2, &CycleClass::irreducible(2)).unwrap();
    assert!((irr.value - 1.0).abs() < 3.0 * irr.stderr + 0.02, "{irr:?}");
    let split = gamma_profile(&samples, 2, &CycleClass::new(vec![1, 1]).unwrap()).unwrap();
    assert!(split.value.abs() < 3.0 * split.stderr + 0.02, "{split:?}");
}

#[test]
fn gamma_profile_rejects_small_input() {
    let samples = gue_samples(4, 5, 1);
    assert!(matches!(
        gamma_profile(&samples, 2, &CycleClass::irreducible(2)),
        Err(Error::InsufficientData(_))
    ));
}

fn rational() -> impl Strategy<Value = BigRational> {
    (-20i64..=20, 1i64..=9).prop_map(|(a, b)| BigRational::new(BigInt::from(a), BigInt::from(b)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn free_roundtrip_is_exact(values in prop::collection::vec(rational(), 10)) {
        let c = CumulantSeq::new(values.clone());
        let mut m = Vec::new();
        for n in 1..=10 {
            m.push(moments_from_free_cumulants(&c, n).unwrap());
        }
        let back = free_cumulants_from_moments(&m, 10).unwrap();
        prop_assert_eq!(back.values, values);
    }

    #[test]
    fn partition_blocks_cover_ground_set(n in 1usize..=7, pick in 0usize..1000) {
        let all = enumerate_partitions(n).unwrap();
        let p = &all[pick % all.len()];
        let mut seen: Vec<usize> = p.blocks().iter().flatten().copied().collect();
        seen.sort();
        prop_assert_eq!(seen, (1..=n).collect::<Vec<_>>());
        let weighted: usize = p.block_profile().iter().enumerate().map(|(l, c)| (l + 1) * c).sum();
        prop_assert_eq!(weighted, n);
    }

    #[test]
    fn dual_cauchy_vanishes(raw in prop::collection::vec((0.0f64..1.0, 0.0f64..6.3), 1..=12)) {
        let eigs: Vec<Complex64> = raw.iter().map(|&(r, t)| Complex64::from_polar(r, t)).collect();
        prop_assert!(dual_cauchy_residual(&eigs, eigs.len()).unwrap() < 1e-12);
    }
}
