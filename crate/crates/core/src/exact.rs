//! Exhaustive enumeration of the hypothesis class.
//!
//! A [`CostTable`] holds the cost of every one of the `k^n` label vectors.
//! Label vector `c` is stored at the mixed-radix index
//! `sum_i c[i] * k^i`: object 0 is the least significant digit. From the
//! table the approximation-set sizes, partition functions, Boltzmann mean
//! costs and two-sample overlaps are computed without sampling. This engine
//! is the reference the Monte-Carlo estimators are checked against.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::costs::{tie_slack, CostFunction};
use crate::domain::Correspondence;
use crate::error::{AscError, Result};
use crate::math::log_sum_exp;

/// Default cap on the number of enumerated label vectors.
pub const DEFAULT_BUDGET: u64 = 1 << 24;

/// Absolute slack added to the approximation threshold.
pub const GAMMA_SLACK: f64 = 1e-12;

const TABLE_MAGIC: &[u8; 8] = b"ASCTBL01";

/// `k^n`, or `None` on overflow.
pub fn class_size(n: usize, k: usize) -> Option<u64> {
    (k as u64).checked_pow(u32::try_from(n).ok()?)
}

pub fn check_budget(n: usize, k: usize, budget: u64) -> Result<usize> {
    match class_size(n, k) {
        Some(size) if size <= budget => Ok(size as usize),
        _ => Err(AscError::BudgetExceeded { n, k, budget }),
    }
}

pub fn decode_into(mut index: usize, k: usize, labels: &mut [usize]) {
    for l in labels.iter_mut() {
        *l = index % k;
        index /= k;
    }
}

pub fn encode(labels: &[usize], k: usize) -> usize {
    labels.iter().rev().fold(0, |acc, &l| acc * k + l)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostTable {
    n: usize,
    k: usize,
    tag: String,
    costs: Vec<f64>,
    r_min: f64,
    argmin_index: usize,
}

impl CostTable {
    pub fn from_costs(n: usize, k: usize, tag: impl Into<String>, costs: Vec<f64>) -> Result<Self> {
        let expected = check_budget(n, k, u64::MAX)?;
        if costs.len() != expected {
            return Err(AscError::LengthMismatch { expected, found: costs.len() });
        }
        let r_min = costs.iter().copied().fold(f64::INFINITY, f64::min);
        let slack = tie_slack(r_min);
        let mut argmin_index = usize::MAX;
        let mut best = vec![0; n];
        let mut cand = vec![0; n];
        for (i, &c) in costs.iter().enumerate() {
            if c <= r_min + slack {
                decode_into(i, k, &mut cand);
                if argmin_index == usize::MAX || cand < best {
                    best.copy_from_slice(&cand);
                    argmin_index = i;
                }
            }
        }
        Ok(Self { n, k, tag: tag.into(), costs, r_min, argmin_index })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    pub fn max_cost(&self) -> f64 {
        self.costs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Encoding of the lexicographically smallest minimizer.
    pub fn argmin_index(&self) -> usize {
        self.argmin_index
    }

    pub fn argmin_labels(&self) -> Vec<usize> {
        self.labels_of(self.argmin_index)
    }

    pub fn labels_of(&self, index: usize) -> Vec<usize> {
        let mut labels = vec![0; self.n];
        decode_into(index, self.k, &mut labels);
        labels
    }

    fn threshold(&self, gamma: f64) -> f64 {
        self.r_min + gamma + GAMMA_SLACK.max(tie_slack(self.r_min))
    }

    /// Membership mask of the approximation set at precision `gamma`.
    pub fn approx_set_mask(&self, gamma: f64) -> Vec<bool> {
        let t = self.threshold(gamma);
        self.costs.iter().map(|&c| c <= t).collect()
    }

    /// Writes the table: magic, `n` and `k` as little-endian u64, the tag as
    /// a u32 length plus UTF-8 bytes, then the costs as little-endian f64 in
    /// index order.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(TABLE_MAGIC)?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&(self.k as u64).to_le_bytes())?;
        w.write_all(&(self.tag.len() as u32).to_le_bytes())?;
        w.write_all(self.tag.as_bytes())?;
        for c in &self.costs {
            w.write_all(&c.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let bad = |msg: &str| AscError::Parse { line: 0, msg: format!("cost table: {msg}") };
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != TABLE_MAGIC {
            return Err(bad("bad magic bytes"));
        }
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u64buf)?;
        let n = u64::from_le_bytes(u64buf) as usize;
        r.read_exact(&mut u64buf)?;
        let k = u64::from_le_bytes(u64buf) as usize;
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)?;
        let mut tag = vec![0u8; u32::from_le_bytes(u32buf) as usize];
        r.read_exact(&mut tag)?;
        let tag = String::from_utf8(tag).map_err(|_| bad("tag is not UTF-8"))?;
        let len = check_budget(n, k, DEFAULT_BUDGET)?;
        let mut costs = Vec::with_capacity(len);
        for _ in 0..len {
            r.read_exact(&mut u64buf)?;
            costs.push(f64::from_le_bytes(u64buf));
        }
        Self::from_costs(n, k, tag, costs)
    }
}

/// Evaluates the cost on all `k^n` label vectors.
pub fn enumerate_costs<C: CostFunction>(cost: &C, budget: u64) -> Result<CostTable> {
    let (n, k) = (cost.n(), cost.k());
    let size = check_budget(n, k, budget)?;
    let costs: Vec<f64> = (0..size)
        .into_par_iter()
        .map_init(
            || vec![0usize; n],
            |buf, idx| {
                decode_into(idx, k, buf);
                cost.evaluate(buf)
            },
        )
        .collect();
    CostTable::from_costs(n, k, cost.tag(), costs)
}

/// `|C_gamma|`: label vectors within `gamma` of the minimum cost.
pub fn approx_set_size(table: &CostTable, gamma: f64) -> u64 {
    let t = table.threshold(gamma);
    table.costs.iter().filter(|&&c| c <= t).count() as u64
}

fn boltzmann_log_sum(costs: &[f64], r_min: f64, n: usize, k: usize, beta: f64) -> f64 {
    if beta == 0.0 {
        return n as f64 * (k as f64).ln();
    }
    -beta * r_min + costs.iter().map(|&c| (-beta * (c - r_min)).exp()).sum::<f64>().ln()
}

/// `ln Z(beta) = ln sum_c exp(-beta R(c))`.
pub fn exact_log_partition(table: &CostTable, beta: f64) -> f64 {
    boltzmann_log_sum(&table.costs, table.r_min, table.n, table.k, beta)
}

fn boltzmann_mean(costs: &[f64], r_min: f64, beta: f64) -> f64 {
    if beta == f64::INFINITY {
        return r_min;
    }
    let (num, den) = costs.iter().fold((0.0, 0.0), |(num, den), &c| {
        let w = (-beta * (c - r_min)).exp();
        (num + (c - r_min) * w, den + w)
    });
    r_min + num / den
}

/// Boltzmann average cost `<R>_beta`.
pub fn exact_mean_cost(table: &CostTable, beta: f64) -> f64 {
    boltzmann_mean(&table.costs, table.r_min, beta)
}

/// Boltzmann variance of the cost, `-d<R>/dbeta`.
pub fn exact_cost_variance(table: &CostTable, beta: f64) -> f64 {
    let mean = exact_mean_cost(table, beta);
    let (num, den) = table.costs.iter().fold((0.0, 0.0), |(num, den), &c| {
        let w = (-beta * (c - table.r_min)).exp();
        (num + (c - mean) * (c - mean) * w, den + w)
    });
    num / den
}

/// Test-side index of the pushforward of every training label vector.
pub fn pushforward_indices(n: usize, k: usize, corr: &Correspondence) -> Result<Vec<usize>> {
    if corr.n() != n {
        return Err(AscError::LengthMismatch { expected: n, found: corr.n() });
    }
    let size = check_budget(n, k, u64::MAX)?;
    let nu = corr.indices();
    Ok((0..size)
        .into_par_iter()
        .map_init(
            || vec![0usize; n],
            |buf, idx| {
                decode_into(idx, k, buf);
                nu.iter().rev().fold(0, |acc, &j| acc * k + buf[j])
            },
        )
        .collect())
}

/// Combined costs `R(c, X1) + R(psi∘c, X2)` over all training label vectors.
#[derive(Clone, Debug)]
pub struct JointTable {
    n: usize,
    k: usize,
    costs: Vec<f64>,
    r_min: f64,
}

impl JointTable {
    pub fn new(train: &CostTable, test: &CostTable, corr: &Correspondence) -> Result<Self> {
        check_pair(train, test)?;
        let pushed = pushforward_indices(train.n, train.k, corr)?;
        let costs: Vec<f64> = train.costs.iter().zip(&pushed).map(|(&a, &p)| a + test.costs[p]).collect();
        let r_min = costs.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self { n: train.n, k: train.k, costs, r_min })
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    /// Number of training label vectors attaining the joint minimum.
    pub fn ground_degeneracy(&self) -> usize {
        let t = self.r_min + tie_slack(self.r_min);
        self.costs.iter().filter(|&&c| c <= t).count()
    }

    pub fn log_partition(&self, beta: f64) -> f64 {
        boltzmann_log_sum(&self.costs, self.r_min, self.n, self.k, beta)
    }

    pub fn mean_cost(&self, beta: f64) -> f64 {
        boltzmann_mean(&self.costs, self.r_min, beta)
    }
}

fn check_pair(a: &CostTable, b: &CostTable) -> Result<()> {
    if a.n != b.n || a.k != b.k {
        return Err(AscError::DimensionMismatch(format!(
            "tables differ in shape: n={}, k={} vs n={}, k={}",
            a.n, a.k, b.n, b.k
        )));
    }
    Ok(())
}

/// `ln sum_c exp(-beta R(c, X1)) exp(-beta R(psi∘c, X2))`.
pub fn exact_joint_log_partition<C: CostFunction>(
    table1: &CostTable,
    cost2: &C,
    corr: &Correspondence,
    beta: f64,
    budget: u64,
) -> Result<f64> {
    let table2 = enumerate_costs(cost2, budget)?;
    Ok(JointTable::new(table1, &table2, corr)?.log_partition(beta))
}

/// Number of training label vectors in `C_gamma(X1)` whose pushforward lies
/// in `C_gamma(X2)`.
pub fn exact_set_intersection(table1: &CostTable, table2: &CostTable, corr: &Correspondence, gamma: f64) -> Result<u64> {
    check_pair(table1, table2)?;
    let pushed = pushforward_indices(table1.n, table1.k, corr)?;
    Ok(intersection_with(table1, &table2.approx_set_mask(gamma), &pushed, gamma))
}

/// Overlap count against a precomputed receiver mask.
pub fn intersection_with(table1: &CostTable, receiver: &[bool], pushed: &[usize], gamma: f64) -> u64 {
    let t = table1.threshold(gamma);
    table1
        .costs
        .iter()
        .zip(pushed)
        .filter(|&(&c, &p)| c <= t && receiver[p])
        .count() as u64
}

/// Exact inverse of the Boltzmann mean: the `beta` at which
/// `<R>_beta = r_min + gamma`. Returns `0` when `gamma` is at or above the
/// infinite-temperature excess and `+inf` when `gamma` is zero.
pub fn beta_for_gamma(table: &CostTable, gamma: f64) -> f64 {
    let target = table.r_min + gamma;
    if exact_mean_cost(table, 0.0) <= target {
        return 0.0;
    }
    if gamma <= 0.0 {
        return f64::INFINITY;
    }
    let mut hi = 1.0 / (table.max_cost() - table.r_min).max(1e-300);
    let mut doublings = 0;
    while exact_mean_cost(table, hi) > target {
        hi *= 2.0;
        doublings += 1;
        if doublings > 2000 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if exact_mean_cost(table, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Reference `ln Z` by plain summation, for cross-checks.
pub fn log_partition_direct(costs: &[f64], beta: f64) -> f64 {
    log_sum_exp(costs.iter().map(|&c| -beta * c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::{KMeansCost, PairwiseCost};
    use crate::domain::{build_correspondence, Dataset, Dissimilarities, Vectors};
    use std::f64::consts::LN_2;

    pub(crate) struct ZeroCost {
        pub n: usize,
        pub k: usize,
    }

    impl CostFunction for ZeroCost {
        type Stats = ();
        fn n(&self) -> usize {
            self.n
        }
        fn k(&self) -> usize {
            self.k
        }
        fn tag(&self) -> &str {
            "zero"
        }
        fn evaluate(&self, _: &[usize]) -> f64 {
            0.0
        }
        fn stats(&self, _: &[usize]) {}
        fn group_delta(&self, _: &(), _: &[usize], _: usize, _: usize) -> f64 {
            0.0
        }
        fn apply_group(&self, _: &mut (), _: &[usize], _: usize, _: usize) {}
    }

    fn line_table(xs: &[f64], k: usize) -> CostTable {
        let c = KMeansCost::new(&Vectors::from_scalars(xs).unwrap().into(), k).unwrap();
        enumerate_costs(&c, DEFAULT_BUDGET).unwrap()
    }

    #[test]
    fn encoding_round_trip() {
        let mut buf = vec![0; 4];
        for idx in 0..81 {
            decode_into(idx, 3, &mut buf);
            assert_eq!(encode(&buf, 3), idx);
        }
        decode_into(1, 2, &mut buf);
        assert_eq!(buf, vec![1, 0, 0, 0]);
    }

    #[test]
    fn enumerate_examples() {
        assert_eq!(line_table(&[1.0], 2).len(), 2);
        let t = line_table(&[0.0, 1.0, 4.0], 2);
        assert_eq!(t.len(), 8);
        assert!((t.r_min() - 0.5).abs() < 1e-15);
        assert_eq!(t.argmin_labels(), vec![0, 0, 1]);
        let z = enumerate_costs(&ZeroCost { n: 3, k: 2 }, DEFAULT_BUDGET).unwrap();
        assert!(z.costs().iter().all(|&c| c == 0.0));
        assert_eq!(z.r_min(), 0.0);
        let err = enumerate_costs(&ZeroCost { n: 25, k: 2 }, DEFAULT_BUDGET).unwrap_err();
        assert!(matches!(err, AscError::BudgetExceeded { .. }));
    }

    #[test]
    fn approx_set_size_examples() {
        let t = line_table(&[0.0, 1.0, 4.0], 2);
        assert_eq!(approx_set_size(&t, 0.0), 2);
        assert_eq!(approx_set_size(&t, f64::INFINITY), 8);
        let t = line_table(&[0.0, 1.0, 4.0], 1);
        assert_eq!(approx_set_size(&t, 0.0), 1);
        let full = line_table(&[0.0, 1.0, 4.0], 2);
        assert_eq!(approx_set_size(&full, full.max_cost() - full.r_min()), 8);
    }

    #[test]
    fn log_partition_examples() {
        let t = line_table(&[0.0, 1.0, 4.0], 2);
        assert_eq!(exact_log_partition(&t, 0.0), 3.0 * LN_2);
        assert!((exact_log_partition(&t, 0.0) - 2.079442).abs() < 1e-6);
        let beta = 50.0;
        let stable = exact_log_partition(&t, beta);
        let direct = log_partition_direct(t.costs(), beta);
        assert!((stable - direct).abs() < 1e-12);
        // two degenerate minimizers dominate
        assert!((stable + beta * 0.5 - LN_2).abs() < 1e-6);
        let z = enumerate_costs(&ZeroCost { n: 4, k: 3 }, DEFAULT_BUDGET).unwrap();
        for beta in [0.0, 1.0, 100.0] {
            assert!((exact_log_partition(&z, beta) - 4.0 * 3f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_cost_examples() {
        let t = line_table(&[0.0, 1.0, 4.0], 2);
        let arithmetic = t.costs().iter().sum::<f64>() / t.len() as f64;
        assert!((exact_mean_cost(&t, 0.0) - arithmetic).abs() < 1e-12);
        assert_eq!(exact_mean_cost(&t, f64::INFINITY), t.r_min());
        assert!((exact_mean_cost(&t, 1e4) - t.r_min()).abs() < 1e-9);
        // direct summation oracle at beta = 1
        let (num, den) = t
            .costs()
            .iter()
            .fold((0.0, 0.0), |(a, b), &c| (a + c * (-c).exp(), b + (-c).exp()));
        assert!((exact_mean_cost(&t, 1.0) - num / den).abs() < 1e-12);
    }

    fn gaussian_pair() -> (Dataset, Dataset) {
        let a = Vectors::from_rows(&[[0.1, -0.2], [0.4, 0.3], [-0.3, 0.1], [3.2, 2.9], [2.8, 3.3], [3.1, 3.0]]).unwrap();
        let b = Vectors::from_rows(&[[0.3, -0.1], [0.2, 0.5], [-0.1, -0.2], [3.0, 3.1], [2.6, 3.0], [3.4, 2.8]]).unwrap();
        (a.into(), b.into())
    }

    #[test]
    fn joint_log_partition_examples() {
        let (x1, x2) = gaussian_pair();
        let c1 = KMeansCost::new(&x1, 2).unwrap();
        let c2 = KMeansCost::new(&x2, 2).unwrap();
        let t1 = enumerate_costs(&c1, DEFAULT_BUDGET).unwrap();
        let id = Correspondence::identity(6);
        for beta in [0.0, 0.3, 2.0] {
            let same = exact_joint_log_partition(&t1, &c1, &id, beta, DEFAULT_BUDGET).unwrap();
            assert!((same - exact_log_partition(&t1, 2.0 * beta)).abs() < 1e-10);
        }
        assert_eq!(exact_joint_log_partition(&t1, &c2, &id, 0.0, DEFAULT_BUDGET).unwrap(), 6.0 * LN_2);

        // direct double evaluation oracle
        let corr = build_correspondence(&x1, &x2).unwrap();
        let mut buf = vec![0; 6];
        for beta in [0.1, 0.7, 3.0] {
            let terms: Vec<f64> = (0..64)
                .map(|idx| {
                    decode_into(idx, 2, &mut buf);
                    let pushed: Vec<usize> = corr.indices().iter().map(|&j| buf[j]).collect();
                    -beta * (c1.evaluate(&buf) + c2.evaluate(&pushed))
                })
                .collect();
            let oracle = log_sum_exp(terms);
            let got = exact_joint_log_partition(&t1, &c2, &corr, beta, DEFAULT_BUDGET).unwrap();
            assert!((got - oracle).abs() < 1e-10, "{got} vs {oracle}");
            assert!(got <= exact_log_partition(&t1, beta) + 1e-12);
        }
    }

    #[test]
    fn intersection_examples() {
        let (x1, x2) = gaussian_pair();
        let c1 = KMeansCost::new(&x1, 2).unwrap();
        let c2 = KMeansCost::new(&x2, 2).unwrap();
        let t1 = enumerate_costs(&c1, DEFAULT_BUDGET).unwrap();
        let t2 = enumerate_costs(&c2, DEFAULT_BUDGET).unwrap();
        let id = Correspondence::identity(6);
        for gamma in [0.0, 0.5, 2.0, 10.0] {
            assert_eq!(exact_set_intersection(&t1, &t1, &id, gamma).unwrap(), approx_set_size(&t1, gamma));
        }
        // set-enumeration oracle
        let corr = build_correspondence(&x1, &x2).unwrap();
        for gamma in [0.0, 0.3, 1.0, 4.0] {
            let receiver: std::collections::HashSet<Vec<usize>> = (0..64)
                .map(|i| t2.labels_of(i))
                .filter(|l| c2.evaluate(l) <= t2.r_min() + gamma + 1e-12)
                .collect();
            let expected = (0..64)
                .map(|i| t1.labels_of(i))
                .filter(|l| c1.evaluate(l) <= t1.r_min() + gamma + 1e-12)
                .filter(|l| receiver.contains(&corr.indices().iter().map(|&j| l[j]).collect::<Vec<_>>()))
                .count() as u64;
            let got = exact_set_intersection(&t1, &t2, &corr, gamma).unwrap();
            assert_eq!(got, expected);
            assert!(got <= approx_set_size(&t1, gamma));
        }
    }

    #[test]
    fn unstable_minimizer_gives_empty_intersection() {
        // the training optimum splits {0,1} | {4}; the test optimum splits {0} | {3,4}
        let x1: Dataset = Vectors::from_scalars(&[0.0, 1.0, 4.0]).unwrap().into();
        let x2: Dataset = Vectors::from_scalars(&[0.0, 3.0, 4.0]).unwrap().into();
        let t1 = enumerate_costs(&KMeansCost::new(&x1, 2).unwrap(), DEFAULT_BUDGET).unwrap();
        let t2 = enumerate_costs(&KMeansCost::new(&x2, 2).unwrap(), DEFAULT_BUDGET).unwrap();
        let id = Correspondence::identity(3);
        assert_eq!(exact_set_intersection(&t1, &t2, &id, 0.0).unwrap(), 0);
    }

    #[test]
    fn beta_for_gamma_inverts_mean() {
        let t = line_table(&[0.0, 0.7, 1.9, 4.0, 4.4], 2);
        let top = exact_mean_cost(&t, 0.0) - t.r_min();
        assert_eq!(beta_for_gamma(&t, top), 0.0);
        assert_eq!(beta_for_gamma(&t, 0.0), f64::INFINITY);
        for frac in [0.05, 0.3, 0.8] {
            let beta = beta_for_gamma(&t, frac * top);
            assert!((exact_mean_cost(&t, beta) - t.r_min() - frac * top).abs() < 1e-9 * top);
        }
    }

    #[test]
    fn table_binary_round_trip() {
        let t = line_table(&[0.0, 1.0, 4.0, -2.5], 3);
        let mut bytes = Vec::new();
        t.write_to(&mut bytes).unwrap();
        assert_eq!(&bytes[..8], b"ASCTBL01");
        assert_eq!(bytes.len(), 8 + 8 + 8 + 4 + "kmeans".len() + 81 * 8);
        let back = CostTable::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back, t);
        assert!(CostTable::read_from(&b"NOTATABLE......"[..]).is_err());
    }

    #[test]
    fn pairwise_table_matches_direct_evaluation() {
        let d: Dataset =
            Dissimilarities::from_rows(&[[0.0, 1.0, 5.0], [1.0, 0.0, 4.0], [5.0, 4.0, 0.0]]).unwrap().into();
        let c = PairwiseCost::strict(&d, 2).unwrap();
        let t = enumerate_costs(&c, DEFAULT_BUDGET).unwrap();
        for idx in 0..8 {
            assert_eq!(t.costs()[idx], c.evaluate(&t.labels_of(idx)));
        }
        assert_eq!(t.r_min(), 0.5);
    }
}
