//! Set partitions, non-crossing partitions and exact moment–cumulant maps.
//!
//! Partitions are enumerated as restricted growth strings, so nothing beyond
//! one label buffer is allocated while walking all `Bell(n)` partitions.
//! Moment and cumulant sequences use exact rationals throughout.

use crate::{Error, Result};
use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::OnceLock;

pub const MAX_PARTITION_N: usize = 12;
pub const MAX_CLASSICAL_N: usize = 10;

/// A set partition of {1, …, n}. Blocks are sorted internally and ordered by
/// their smallest element; serializes as the list of blocks.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    n: usize,
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    /// Builds a partition from arbitrary blocks, checking that they cover
    /// {1, …, n} exactly once.
    pub fn new(mut blocks: Vec<Vec<usize>>) -> Result<Self> {
        blocks.retain(|b| !b.is_empty());
        for b in blocks.iter_mut() {
            b.sort_unstable();
        }
        blocks.sort_by_key(|b| b[0]);
        let n: usize = blocks.iter().map(Vec::len).sum();
        let mut seen = vec![false; n + 1];
        for &e in blocks.iter().flatten() {
            if e == 0 || e > n || seen[e] {
                return Err(Error::Domain(format!(
                    "blocks do not partition {{1..{n}}} (element {e})"
                )));
            }
            seen[e] = true;
        }
        Ok(Partition { n, blocks })
    }

    fn from_rgs(rgs: &[u8]) -> Self {
        let nb = rgs.iter().copied().max().map_or(0, |m| m as usize + 1);
        let mut blocks = vec![Vec::new(); nb];
        for (i, &l) in rgs.iter().enumerate() {
            blocks[l as usize].push(i + 1);
        }
        Partition { n: rgs.len(), blocks }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// Block labels 0, 1, … in order of first appearance.
    pub fn labels(&self) -> Vec<u8> {
        let mut rgs = vec![0u8; self.n];
        for (l, b) in self.blocks.iter().enumerate() {
            for &e in b {
                rgs[e - 1] = l as u8;
            }
        }
        rgs
    }

    /// ν_l for l = 1..=n: entry l - 1 counts the blocks of size l.
    pub fn block_profile(&self) -> Vec<usize> {
        let mut nu = vec![0; self.n];
        for b in &self.blocks {
            nu[b.len() - 1] += 1;
        }
        nu
    }
}

impl Serialize for Partition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.blocks.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Partition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let blocks = Vec::<Vec<usize>>::deserialize(d)?;
        Partition::new(blocks).map_err(serde::de::Error::custom)
    }
}

/// Conjugacy class of S_n given by its cycle type (sorted decreasing).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CycleClass {
    pub n: usize,
    pub cycle_type: Vec<usize>,
}

impl CycleClass {
    pub fn new(mut cycle_type: Vec<usize>) -> Result<Self> {
        if cycle_type.contains(&0) {
            return Err(Error::Domain("cycle lengths must be positive".into()));
        }
        cycle_type.sort_unstable_by(|a, b| b.cmp(a));
        let n = cycle_type.iter().sum();
        Ok(CycleClass { n, cycle_type })
    }

    /// The single n-cycle.
    pub fn irreducible(n: usize) -> Self {
        CycleClass { n, cycle_type: vec![n] }
    }

    pub fn is_irreducible(&self) -> bool {
        self.cycle_type.len() == 1
    }
}

/// Exact cumulant sequence; `values[i]` holds the cumulant of order i + 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CumulantSeq {
    pub values: Vec<BigRational>,
}

impl CumulantSeq {
    pub fn new(values: Vec<BigRational>) -> Self {
        CumulantSeq { values }
    }

    pub fn from_integers(values: &[i64]) -> Self {
        CumulantSeq {
            values: values.iter().map(|&v| BigRational::from_integer(v.into())).collect(),
        }
    }

    pub fn order(&self) -> usize {
        self.values.len()
    }

    /// Cumulant of order `j` (1-based).
    pub fn get(&self, j: usize) -> &BigRational {
        &self.values[j - 1]
    }
}

/// Visits every restricted growth string of length n (one per set partition).
pub fn for_each_rgs<F: FnMut(&[u8])>(n: usize, mut f: F) {
    if n == 0 {
        f(&[]);
        return;
    }
    let mut a = vec![0u8; n];
    // b[i] = 1 + max(a[0..i])
    let mut b = vec![1u8; n];
    loop {
        f(&a);
        // Find the rightmost position that can be incremented.
        let mut i = n - 1;
        loop {
            if i == 0 {
                return;
            }
            if a[i] < b[i] {
                break;
            }
            i -= 1;
        }
        a[i] += 1;
        let next_max = b[i].max(a[i] + 1);
        for j in i + 1..n {
            a[j] = 0;
            b[j] = next_max;
        }
    }
}

/// Non-crossing test on a label string: a crossing is a < b < c < d with
/// a, c in one block and b, d in another.
pub fn rgs_is_noncrossing(rgs: &[u8]) -> bool {
    let mut last = [usize::MAX; 256];
    for (i, &l) in rgs.iter().enumerate() {
        last[l as usize] = i;
    }
    let mut seen = [false; 256];
    let mut stack: Vec<u8> = Vec::with_capacity(rgs.len());
    for (i, &l) in rgs.iter().enumerate() {
        if seen[l as usize] {
            if stack.last() != Some(&l) {
                return false;
            }
            if last[l as usize] == i {
                stack.pop();
            }
        } else {
            seen[l as usize] = true;
            if last[l as usize] != i {
                stack.push(l);
            }
        }
    }
    true
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 || n > MAX_PARTITION_N {
        return Err(Error::SizeLimit(format!(
            "partition enumeration supports 1 <= n <= {MAX_PARTITION_N}, got {n}"
        )));
    }
    Ok(())
}

/// All partitions of {1, …, n} in canonical form.
pub fn enumerate_partitions(n: usize) -> Result<Vec<Partition>> {
    check_n(n)?;
    let mut out = Vec::new();
    for_each_rgs(n, |rgs| out.push(Partition::from_rgs(rgs)));
    Ok(out)
}

/// Non-crossing partitions of {1, …, n} in canonical form.
pub fn enumerate_noncrossing(n: usize) -> Result<Vec<Partition>> {
    check_n(n)?;
    let mut out = Vec::new();
    for_each_rgs(n, |rgs| {
        if rgs_is_noncrossing(rgs) {
            out.push(Partition::from_rgs(rgs));
        }
    });
    Ok(out)
}

pub fn is_noncrossing(p: &Partition) -> bool {
    rgs_is_noncrossing(&p.labels())
}

/// (total, non-crossing) partition counts for n, computed by enumeration.
pub fn partition_counts(n: usize) -> Result<(u64, u64)> {
    check_n(n)?;
    let (mut all, mut nc) = (0u64, 0u64);
    for_each_rgs(n, |rgs| {
        all += 1;
        nc += rgs_is_noncrossing(rgs) as u64;
    });
    Ok((all, nc))
}

type ProfileTable = BTreeMap<Vec<u8>, u64>;

fn profile_of(rgs: &[u8]) -> Vec<u8> {
    let mut sizes = [0u8; MAX_PARTITION_N];
    let mut nb = 0usize;
    for &l in rgs {
        sizes[l as usize] += 1;
        nb = nb.max(l as usize + 1);
    }
    let mut p = sizes[..nb].to_vec();
    p.sort_unstable_by(|a, b| b.cmp(a));
    p
}

fn build_profiles(n: usize, noncrossing_only: bool) -> ProfileTable {
    let mut t = ProfileTable::new();
    for_each_rgs(n, |rgs| {
        if !noncrossing_only || rgs_is_noncrossing(rgs) {
            *t.entry(profile_of(rgs)).or_insert(0) += 1;
        }
    });
    t
}

/// Block-size profiles with multiplicities, cached per n.
fn profiles(n: usize, noncrossing_only: bool) -> &'static ProfileTable {
    static NC: [OnceLock<ProfileTable>; MAX_PARTITION_N + 1] = [const { OnceLock::new() }; MAX_PARTITION_N + 1];
    static ALL: [OnceLock<ProfileTable>; MAX_PARTITION_N + 1] = [const { OnceLock::new() }; MAX_PARTITION_N + 1];
    let cell = if noncrossing_only { &NC[n] } else { &ALL[n] };
    cell.get_or_init(|| build_profiles(n, noncrossing_only))
}

fn profile_sum(table: &ProfileTable, c: &CumulantSeq, skip_single_block: bool) -> BigRational {
    let mut total = BigRational::zero();
    for (profile, &count) in table {
        if skip_single_block && profile.len() == 1 {
            continue;
        }
        let mut term = BigRational::from_integer(BigInt::from(count));
        for &s in profile {
            term *= c.get(s as usize);
            if term.is_zero() {
                break;
            }
        }
        total += term;
    }
    total
}

/// m_n = Σ over non-crossing partitions of Π_blocks c_|block|.
pub fn moments_from_free_cumulants(c: &CumulantSeq, n: usize) -> Result<BigRational> {
    if n > MAX_PARTITION_N {
        return Err(Error::SizeLimit(format!("n = {n} exceeds {MAX_PARTITION_N}")));
    }
    if c.order() < n {
        return Err(Error::Arity(format!(
            "need {n} free cumulants, got {}",
            c.order()
        )));
    }
    if n == 0 {
        return Ok(BigRational::one());
    }
    Ok(profile_sum(profiles(n, true), c, false))
}

/// Inverts the non-crossing moment formula order by order: the single-block
/// partition contributes c_j, everything else uses lower cumulants.
pub fn free_cumulants_from_moments(m: &[BigRational], n: usize) -> Result<CumulantSeq> {
    if n > MAX_PARTITION_N {
        return Err(Error::SizeLimit(format!("n = {n} exceeds {MAX_PARTITION_N}")));
    }
    if m.len() < n {
        return Err(Error::Arity(format!("need {n} moments, got {}", m.len())));
    }
    let mut c = CumulantSeq::new(Vec::with_capacity(n));
    for j in 1..=n {
        c.values.push(BigRational::zero());
        let rest = profile_sum(profiles(j, true), &c, true);
        c.values[j - 1] = &m[j - 1] - rest;
    }
    Ok(c)
}

/// m_n = Σ over all set partitions of Π_blocks k_|block|.
pub fn classical_moments_from_cumulants(k: &CumulantSeq, n: usize) -> Result<BigRational> {
    if n > MAX_CLASSICAL_N {
        return Err(Error::SizeLimit(format!("n = {n} exceeds {MAX_CLASSICAL_N}")));
    }
    if k.order() < n {
        return Err(Error::Arity(format!("need {n} cumulants, got {}", k.order())));
    }
    if n == 0 {
        return Ok(BigRational::one());
    }
    Ok(profile_sum(profiles(n, false), k, false))
}

/// Elementary symmetric polynomials e_0..e_len of the inputs.
pub fn elementary_symmetric(x: &[Complex64]) -> Vec<Complex64> {
    let mut e = vec![Complex64::zero(); x.len() + 1];
    e[0] = Complex64::one();
    for (i, &xi) in x.iter().enumerate() {
        for m in (1..=i + 1).rev() {
            let prev = e[m - 1];
            e[m] += xi * prev;
        }
    }
    e
}

/// |Π(1 - λ_i) - Σ_{m ≤ max_m} (-1)^m e_m(λ)|.
pub fn dual_cauchy_residual(eigs: &[Complex64], max_m: usize) -> Result<f64> {
    if max_m < eigs.len() {
        return Err(Error::Arity(format!(
            "truncation order {max_m} is below the number of eigenvalues {}",
            eigs.len()
        )));
    }
    let det: Complex64 = eigs.iter().map(|&l| Complex64::one() - l).product();
    let e = elementary_symmetric(eigs);
    let series: Complex64 = e
        .iter()
        .enumerate()
        .map(|(m, &em)| if m % 2 == 0 { em } else { -em })
        .sum();
    Ok((det - series).norm())
}

/// Scaled cumulant estimate N^{n-1} γ with a batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimate {
    pub value: f64,
    pub stderr: f64,
    pub index_tuples: usize,
}

/// (i_l, j_l) slot pairs realizing a cycle class: each cycle of length l on
/// fresh slots s_1..s_l gets the pairs (s_1,s_2), …, (s_l,s_1).
fn class_pattern(cls: &CycleClass) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(cls.n);
    let mut base = 0;
    for &l in &cls.cycle_type {
        for t in 0..l {
            pairs.push((base + t, base + (t + 1) % l));
        }
        base += l;
    }
    pairs
}

const MAX_INDEX_TUPLES: usize = 1024;

fn index_tuples(dim: usize, slots: usize) -> Vec<Vec<usize>> {
    let mut all = Vec::new();
    let mut cur = vec![0usize; slots];
    fn rec(pos: usize, dim: usize, cur: &mut Vec<usize>, all: &mut Vec<Vec<usize>>, cap: usize) {
        if all.len() > cap {
            return;
        }
        if pos == cur.len() {
            all.push(cur.clone());
            return;
        }
        for v in 0..dim {
            if !cur[..pos].contains(&v) {
                cur[pos] = v;
                rec(pos + 1, dim, cur, all, cap);
            }
        }
    }
    let total: usize = (0..slots).map(|i| dim - i).product();
    if total <= MAX_INDEX_TUPLES {
        rec(0, dim, &mut cur, &mut all, usize::MAX);
        return all;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x9a11_7e5d);
    let idx: Vec<usize> = (0..dim).collect();
    let mut seen = std::collections::HashSet::new();
    while all.len() < MAX_INDEX_TUPLES {
        let t: Vec<usize> = idx.choose_multiple(&mut rng, slots).copied().collect();
        if seen.insert(t.clone()) {
            all.push(t);
        }
    }
    all
}

/// Power sums for one index tuple: [x, y, z, xy, xz, yz, xyz].
type Sums = [Complex64; 7];

fn k_statistic(n: usize, s: &Sums, order: usize) -> Complex64 {
    let nf = n as f64;
    if order == 2 {
        (s[3] * nf - s[0] * s[1]) / (nf * (nf - 1.0))
    } else {
        let num = s[6] * nf * nf - (s[3] * s[2] + s[4] * s[1] + s[5] * s[0]) * nf
            + s[0] * s[1] * s[2] * 2.0;
        num / (nf * (nf - 1.0) * (nf - 2.0))
    }
}

/// Estimates N^{n-1} γ_{n,N}(cls) from Hermitian samples via unbiased joint
/// k-statistics of the matrix entries H_{j_l i_l} along the class pattern,
/// averaged over index tuples.
pub fn gamma_profile(samples: &[DMatrix<Complex64>], n: usize, cls: &CycleClass) -> Result<GammaEstimate> {
    if !(n == 2 || n == 3) || cls.n != n {
        return Err(Error::Domain(format!(
            "cumulant order must be 2 or 3 and match the class (n = {n}, class = {:?})",
            cls.cycle_type
        )));
    }
    if samples.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "{} samples given, at least 10 required",
            samples.len()
        )));
    }
    let dim = samples[0].nrows();
    if dim < n || samples.iter().any(|h| h.nrows() != dim || h.ncols() != dim) {
        return Err(Error::Domain("samples must be square matrices of equal size >= n".into()));
    }
    let pattern = class_pattern(cls);
    let tuples = index_tuples(dim, n);
    let n_batches = (samples.len() / 5).clamp(2, 20);
    let batch_len = samples.len() / n_batches;
    let zero: Sums = [Complex64::zero(); 7];
    let mut totals = vec![zero; tuples.len()];
    let mut batch_values = Vec::with_capacity(n_batches);
    for b in 0..n_batches {
        let lo = b * batch_len;
        let hi = if b + 1 == n_batches { samples.len() } else { lo + batch_len };
        let mut sums = vec![zero; tuples.len()];
        for h in &samples[lo..hi] {
            for (t, s) in tuples.iter().zip(sums.iter_mut()) {
                let v = |l: usize| {
                    let (i, j) = pattern[l];
                    h[(t[j], t[i])]
                };
                let x = v(0);
                let y = v(1);
                s[0] += x;
                s[1] += y;
                s[3] += x * y;
                if n == 3 {
                    let z = v(2);
                    s[2] += z;
                    s[4] += x * z;
                    s[5] += y * z;
                    s[6] += x * y * z;
                }
            }
        }
        let mean: f64 = sums.iter().map(|s| k_statistic(hi - lo, s, n).re).sum::<f64>() / tuples.len() as f64;
        batch_values.push(mean);
        for (tot, s) in totals.iter_mut().zip(&sums) {
            for q in 0..7 {
                tot[q] += s[q];
            }
        }
    }
    let scale = (dim as f64).powi(n as i32 - 1);
    let value = totals.iter().map(|s| k_statistic(samples.len(), s, n).re).sum::<f64>()
        / tuples.len() as f64;
    let bm = batch_values.iter().sum::<f64>() / n_batches as f64;
    let var = batch_values.iter().map(|v| (v - bm).powi(2)).sum::<f64>() / (n_batches as f64 - 1.0);
    Ok(GammaEstimate {
        value: scale * value,
        stderr: scale * (var / n_batches as f64).sqrt(),
        index_tuples: tuples.len(),
    })
}
