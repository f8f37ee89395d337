//! Clustering cost functions and empirical risk minimization.
//!
//! A [`CostFunction`] scores a label vector on one bound dataset. Besides
//! full evaluation it maintains sufficient statistics so that the change in
//! cost caused by relabelling a group of objects can be computed without a
//! full re-evaluation; the Gibbs sampler and the local search rely on this.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{squared_distance, Assignment, Correspondence, Dataset, Dissimilarities, Vectors};
use crate::error::{AscError, Result};
use crate::exact;
use crate::rng;

/// A clustering cost `R(c, X)` bound to a dataset and a cluster count.
///
/// Labels passed to every method are zero-based and lie in `0..k()`.
pub trait CostFunction: Sync {
    type Stats: Clone + Send + Sync;

    fn n(&self) -> usize;

    fn k(&self) -> usize;

    fn tag(&self) -> &str;

    /// Full evaluation; nonnegative for the shipped costs.
    fn evaluate(&self, labels: &[usize]) -> f64;

    fn stats(&self, labels: &[usize]) -> Self::Stats;

    /// Cost change when every object in `members` moves from cluster `from`
    /// to cluster `to`. All members must currently carry label `from`.
    fn group_delta(&self, stats: &Self::Stats, members: &[usize], from: usize, to: usize) -> f64;

    /// Updates `stats` for the move described in [`CostFunction::group_delta`].
    fn apply_group(&self, stats: &mut Self::Stats, members: &[usize], from: usize, to: usize);
}

/// `evaluate(c with c_i := new_label) - evaluate(c)` via sufficient statistics.
pub fn single_site_delta<C: CostFunction>(cost: &C, c: &Assignment, i: usize, new_label: usize) -> f64 {
    let from = c.labels()[i];
    if from == new_label {
        return 0.0;
    }
    let stats = cost.stats(c.labels());
    cost.group_delta(&stats, &[i], from, new_label)
}

fn check_labels(n: usize, k: usize, labels: &[usize]) {
    debug_assert_eq!(labels.len(), n, "label vector length");
    debug_assert!(labels.iter().all(|&l| l < k), "label out of range");
}

/// Total within-cluster sum of squared distances to the cluster means.
#[derive(Clone, Debug)]
pub struct KMeansCost {
    data: Vectors,
    k: usize,
}

#[derive(Clone, Debug)]
pub struct KMeansStats {
    counts: Vec<usize>,
    sums: Vec<f64>,
}

impl KMeansCost {
    pub fn new(data: &Dataset, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(AscError::Config("k must be positive".into()));
        }
        match data {
            Dataset::Vectors(v) => Ok(Self { data: v.clone(), k }),
            Dataset::Dissimilarities(_) => Err(AscError::WrongDatasetKind { family: "kmeans", kind: "dissimilarities" }),
        }
    }

    pub fn data(&self) -> &Vectors {
        &self.data
    }
}

impl CostFunction for KMeansCost {
    type Stats = KMeansStats;

    fn n(&self) -> usize {
        self.data.n()
    }

    fn k(&self) -> usize {
        self.k
    }

    fn tag(&self) -> &str {
        "kmeans"
    }

    fn evaluate(&self, labels: &[usize]) -> f64 {
        check_labels(self.n(), self.k, labels);
        let d = self.data.d();
        let stats = self.stats(labels);
        let mut means = stats.sums;
        for (mean, &count) in means.chunks_exact_mut(d).zip(&stats.counts) {
            if count > 0 {
                mean.iter_mut().for_each(|m| *m /= count as f64);
            }
        }
        let mut per_cluster = vec![0.0; self.k];
        for (x, &l) in self.data.rows().zip(labels) {
            per_cluster[l] += squared_distance(x, &means[l * d..(l + 1) * d]);
        }
        per_cluster.iter().sum()
    }

    fn stats(&self, labels: &[usize]) -> KMeansStats {
        let d = self.data.d();
        let mut counts = vec![0; self.k];
        let mut sums = vec![0.0; self.k * d];
        for (x, &l) in self.data.rows().zip(labels) {
            counts[l] += 1;
            sums[l * d..(l + 1) * d].iter_mut().zip(x).for_each(|(s, v)| *s += v);
        }
        KMeansStats { counts, sums }
    }

    fn group_delta(&self, stats: &KMeansStats, members: &[usize], from: usize, to: usize) -> f64 {
        if from == to || members.is_empty() {
            return 0.0;
        }
        let d = self.data.d();
        let g = members.len() as f64;
        let mut group_sum = vec![0.0; d];
        for &i in members {
            group_sum.iter_mut().zip(self.data.row(i)).for_each(|(s, v)| *s += v);
        }
        // Removing a group with mean m_G from cluster a leaves a' = a \ G and
        // saves n_a' g / n_a |m_a' - m_G|^2 beyond the group's own scatter;
        // adding it to b costs n_b g / (n_b + g) |m_b - m_G|^2 on top of it.
        let n_from = stats.counts[from] as f64;
        let rest = n_from - g;
        let removal = if rest > 0.0 {
            let s_from = &stats.sums[from * d..(from + 1) * d];
            let dist: f64 = (0..d)
                .map(|t| {
                    let diff = (s_from[t] - group_sum[t]) / rest - group_sum[t] / g;
                    diff * diff
                })
                .sum();
            rest * g / n_from * dist
        } else {
            0.0
        };
        let n_to = stats.counts[to] as f64;
        let addition = if n_to > 0.0 {
            let s_to = &stats.sums[to * d..(to + 1) * d];
            let dist: f64 = (0..d)
                .map(|t| {
                    let diff = s_to[t] / n_to - group_sum[t] / g;
                    diff * diff
                })
                .sum();
            n_to * g / (n_to + g) * dist
        } else {
            0.0
        };
        addition - removal
    }

    fn apply_group(&self, stats: &mut KMeansStats, members: &[usize], from: usize, to: usize) {
        if from == to {
            return;
        }
        let d = self.data.d();
        for &i in members {
            let x = self.data.row(i);
            for t in 0..d {
                stats.sums[from * d + t] -= x[t];
                stats.sums[to * d + t] += x[t];
            }
        }
        stats.counts[from] -= members.len();
        stats.counts[to] += members.len();
    }
}

/// Pairwise clustering cost `sum_v (1 / 2 n_v) sum_{i,j in v} D_ij`.
#[derive(Clone, Debug)]
pub struct PairwiseCost {
    data: Dissimilarities,
    k: usize,
}

#[derive(Clone, Debug)]
pub struct PairwiseStats {
    counts: Vec<usize>,
    /// Within-cluster dissimilarity mass, both orders counted.
    within: Vec<f64>,
    /// `link[i * k + v]`: dissimilarity of object `i` to all members of `v`.
    link: Vec<f64>,
}

#[inline]
fn pairwise_term(within: f64, count: usize) -> f64 {
    if count == 0 {
        0.0
    } else {
        within / (2.0 * count as f64)
    }
}

impl PairwiseCost {
    /// Binds to a dissimilarity dataset. Vector datasets are converted with
    /// squared Euclidean distances.
    pub fn new(data: &Dataset, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(AscError::Config("k must be positive".into()));
        }
        let data = match data {
            Dataset::Dissimilarities(d) => d.clone(),
            Dataset::Vectors(v) => crate::datagen::dissimilarity_from_vectors(v),
        };
        Ok(Self { data, k })
    }

    /// Binds to a dissimilarity dataset only.
    pub fn strict(data: &Dataset, k: usize) -> Result<Self> {
        match data {
            Dataset::Dissimilarities(_) => Self::new(data, k),
            Dataset::Vectors(_) => Err(AscError::WrongDatasetKind { family: "pairwise", kind: "vectors" }),
        }
    }

    pub fn data(&self) -> &Dissimilarities {
        &self.data
    }
}

impl CostFunction for PairwiseCost {
    type Stats = PairwiseStats;

    fn n(&self) -> usize {
        self.data.n()
    }

    fn k(&self) -> usize {
        self.k
    }

    fn tag(&self) -> &str {
        "pairwise"
    }

    fn evaluate(&self, labels: &[usize]) -> f64 {
        check_labels(self.n(), self.k, labels);
        let mut counts = vec![0; self.k];
        let mut within = vec![0.0; self.k];
        for (i, &li) in labels.iter().enumerate() {
            counts[li] += 1;
            let row = self.data.row(i);
            within[li] += labels.iter().zip(row).filter(|(&lj, _)| lj == li).map(|(_, &d)| d).sum::<f64>();
        }
        within.iter().zip(&counts).map(|(&w, &c)| pairwise_term(w, c)).sum()
    }

    fn stats(&self, labels: &[usize]) -> PairwiseStats {
        let n = self.n();
        let k = self.k;
        let mut counts = vec![0; k];
        let mut link = vec![0.0; n * k];
        for &l in labels {
            counts[l] += 1;
        }
        for i in 0..n {
            for (j, &lj) in labels.iter().enumerate() {
                link[i * k + lj] += self.data.get(i, j);
            }
        }
        let mut within = vec![0.0; k];
        for (i, &li) in labels.iter().enumerate() {
            within[li] += link[i * k + li];
        }
        PairwiseStats { counts, within, link }
    }

    fn group_delta(&self, stats: &PairwiseStats, members: &[usize], from: usize, to: usize) -> f64 {
        if from == to || members.is_empty() {
            return 0.0;
        }
        let k = self.k;
        let g = members.len();
        let inner: f64 = members
            .iter()
            .map(|&i| members.iter().map(|&j| self.data.get(i, j)).sum::<f64>())
            .sum();
        let link_from: f64 = members.iter().map(|&i| stats.link[i * k + from]).sum();
        let link_to: f64 = members.iter().map(|&i| stats.link[i * k + to]).sum();
        let (n_from, n_to) = (stats.counts[from], stats.counts[to]);
        let (w_from, w_to) = (stats.within[from], stats.within[to]);
        let new_from = w_from - 2.0 * link_from + inner;
        let new_to = w_to + 2.0 * link_to + inner;
        pairwise_term(new_from, n_from - g) + pairwise_term(new_to, n_to + g)
            - pairwise_term(w_from, n_from)
            - pairwise_term(w_to, n_to)
    }

    fn apply_group(&self, stats: &mut PairwiseStats, members: &[usize], from: usize, to: usize) {
        if from == to {
            return;
        }
        let k = self.k;
        let inner: f64 = members
            .iter()
            .map(|&i| members.iter().map(|&j| self.data.get(i, j)).sum::<f64>())
            .sum();
        let link_from: f64 = members.iter().map(|&i| stats.link[i * k + from]).sum();
        let link_to: f64 = members.iter().map(|&i| stats.link[i * k + to]).sum();
        stats.within[from] += inner - 2.0 * link_from;
        stats.within[to] += inner + 2.0 * link_to;
        if stats.counts[from] == members.len() {
            stats.within[from] = 0.0;
        }
        stats.counts[from] -= members.len();
        stats.counts[to] += members.len();
        for &i in members {
            for (j, row) in stats.link.chunks_exact_mut(k).enumerate() {
                let dij = self.data.get(j, i);
                row[from] -= dij;
                row[to] += dij;
            }
        }
    }
}

/// The shipped cost families, selectable by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostFamily {
    KMeans,
    Pairwise,
}

impl CostFamily {
    pub fn name(self) -> &'static str {
        match self {
            CostFamily::KMeans => "kmeans",
            CostFamily::Pairwise => "pairwise",
        }
    }

    pub fn build(self, data: &Dataset, k: usize) -> Result<AnyCost> {
        Ok(match self {
            CostFamily::KMeans => AnyCost::KMeans(KMeansCost::new(data, k)?),
            CostFamily::Pairwise => AnyCost::Pairwise(PairwiseCost::new(data, k)?),
        })
    }
}

impl fmt::Display for CostFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CostFamily {
    type Err = AscError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "kmeans" | "k-means" => Ok(CostFamily::KMeans),
            "pairwise" => Ok(CostFamily::Pairwise),
            other => Err(AscError::Config(format!("unknown cost family `{other}` (expected kmeans or pairwise)"))),
        }
    }
}

/// Runtime-selected cost function.
#[derive(Clone, Debug)]
pub enum AnyCost {
    KMeans(KMeansCost),
    Pairwise(PairwiseCost),
}

#[derive(Clone, Debug)]
pub enum AnyStats {
    KMeans(KMeansStats),
    Pairwise(PairwiseStats),
}

impl CostFunction for AnyCost {
    type Stats = AnyStats;

    fn n(&self) -> usize {
        match self {
            AnyCost::KMeans(c) => c.n(),
            AnyCost::Pairwise(c) => c.n(),
        }
    }

    fn k(&self) -> usize {
        match self {
            AnyCost::KMeans(c) => c.k(),
            AnyCost::Pairwise(c) => c.k(),
        }
    }

    fn tag(&self) -> &str {
        match self {
            AnyCost::KMeans(c) => c.tag(),
            AnyCost::Pairwise(c) => c.tag(),
        }
    }

    fn evaluate(&self, labels: &[usize]) -> f64 {
        match self {
            AnyCost::KMeans(c) => c.evaluate(labels),
            AnyCost::Pairwise(c) => c.evaluate(labels),
        }
    }

    fn stats(&self, labels: &[usize]) -> AnyStats {
        match self {
            AnyCost::KMeans(c) => AnyStats::KMeans(c.stats(labels)),
            AnyCost::Pairwise(c) => AnyStats::Pairwise(c.stats(labels)),
        }
    }

    fn group_delta(&self, stats: &AnyStats, members: &[usize], from: usize, to: usize) -> f64 {
        match (self, stats) {
            (AnyCost::KMeans(c), AnyStats::KMeans(s)) => c.group_delta(s, members, from, to),
            (AnyCost::Pairwise(c), AnyStats::Pairwise(s)) => c.group_delta(s, members, from, to),
            _ => unreachable!("statistics built by a different cost family"),
        }
    }

    fn apply_group(&self, stats: &mut AnyStats, members: &[usize], from: usize, to: usize) {
        match (self, stats) {
            (AnyCost::KMeans(c), AnyStats::KMeans(s)) => c.apply_group(s, members, from, to),
            (AnyCost::Pairwise(c), AnyStats::Pairwise(s)) => c.apply_group(s, members, from, to),
            _ => unreachable!("statistics built by a different cost family"),
        }
    }
}

impl<C: CostFunction> CostFunction for &C {
    type Stats = C::Stats;

    fn n(&self) -> usize {
        (**self).n()
    }

    fn k(&self) -> usize {
        (**self).k()
    }

    fn tag(&self) -> &str {
        (**self).tag()
    }

    fn evaluate(&self, labels: &[usize]) -> f64 {
        (**self).evaluate(labels)
    }

    fn stats(&self, labels: &[usize]) -> C::Stats {
        (**self).stats(labels)
    }

    fn group_delta(&self, stats: &C::Stats, members: &[usize], from: usize, to: usize) -> f64 {
        (**self).group_delta(stats, members, from, to)
    }

    fn apply_group(&self, stats: &mut C::Stats, members: &[usize], from: usize, to: usize) {
        (**self).apply_group(stats, members, from, to)
    }
}

/// Combined two-sample cost `R(c, X1) + R(psi∘c, X2)` over training labels.
///
/// Relabelling training object `j` relabels every test object that maps onto
/// it, so its delta sums the training delta and a group delta on the test side.
#[derive(Clone, Debug)]
pub struct JointCost<A, B> {
    train: A,
    test: B,
    corr: Correspondence,
    fan_in: Vec<Vec<usize>>,
}

impl<A: CostFunction, B: CostFunction> JointCost<A, B> {
    pub fn new(train: A, test: B, corr: Correspondence) -> Result<Self> {
        if train.k() != test.k() {
            return Err(AscError::Config(format!("cluster counts differ: {} vs {}", train.k(), test.k())));
        }
        if corr.n() != test.n() {
            return Err(AscError::LengthMismatch { expected: test.n(), found: corr.n() });
        }
        if corr.indices().iter().any(|&j| j >= train.n()) {
            return Err(AscError::InvalidDataset("correspondence points outside the training sample".into()));
        }
        let fan_in = corr.fan_in(train.n());
        Ok(Self { train, test, corr, fan_in })
    }

    pub fn train(&self) -> &A {
        &self.train
    }

    pub fn test(&self) -> &B {
        &self.test
    }

    pub fn correspondence(&self) -> &Correspondence {
        &self.corr
    }

    fn test_labels(&self, labels: &[usize]) -> Vec<usize> {
        self.corr.indices().iter().map(|&j| labels[j]).collect()
    }

    fn test_members(&self, members: &[usize]) -> Vec<usize> {
        members.iter().flat_map(|&j| self.fan_in[j].iter().copied()).collect()
    }
}

impl<A: CostFunction, B: CostFunction> CostFunction for JointCost<A, B> {
    type Stats = (A::Stats, B::Stats);

    fn n(&self) -> usize {
        self.train.n()
    }

    fn k(&self) -> usize {
        self.train.k()
    }

    fn tag(&self) -> &str {
        "joint"
    }

    fn evaluate(&self, labels: &[usize]) -> f64 {
        self.train.evaluate(labels) + self.test.evaluate(&self.test_labels(labels))
    }

    fn stats(&self, labels: &[usize]) -> Self::Stats {
        (self.train.stats(labels), self.test.stats(&self.test_labels(labels)))
    }

    fn group_delta(&self, stats: &Self::Stats, members: &[usize], from: usize, to: usize) -> f64 {
        let d1 = self.train.group_delta(&stats.0, members, from, to);
        let d2 = if let [j] = members {
            self.test.group_delta(&stats.1, &self.fan_in[*j], from, to)
        } else {
            self.test.group_delta(&stats.1, &self.test_members(members), from, to)
        };
        d1 + d2
    }

    fn apply_group(&self, stats: &mut Self::Stats, members: &[usize], from: usize, to: usize) {
        self.train.apply_group(&mut stats.0, members, from, to);
        let test_members = self.test_members(members);
        self.test.apply_group(&mut stats.1, &test_members, from, to);
    }
}

/// How to search for the empirical risk minimizer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErmMode {
    Exhaustive,
    MultistartLocal,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErmConfig {
    /// Largest hypothesis class `k^n` the exhaustive search may enumerate.
    pub budget: u64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for ErmConfig {
    fn default() -> Self {
        Self { budget: exact::DEFAULT_BUDGET, restarts: 50, seed: 0 }
    }
}

/// Slack under which two costs count as tied.
#[inline]
pub(crate) fn tie_slack(reference: f64) -> f64 {
    1e-12 * reference.abs().max(1.0)
}

/// Finds the empirical risk minimizer.
///
/// Exhaustive search returns the lexicographically smallest global minimizer.
/// Multistart local search runs greedy single-site descent from
/// `cfg.restarts` random starts and keeps the best local optimum.
pub fn erm_search<C: CostFunction>(cost: &C, mode: ErmMode, cfg: &ErmConfig) -> Result<(Assignment, f64)> {
    match mode {
        ErmMode::Exhaustive => {
            let table = exact::enumerate_costs(cost, cfg.budget)?;
            let labels = table.argmin_labels();
            Ok((Assignment::new(labels, cost.k())?, table.r_min()))
        }
        ErmMode::MultistartLocal => {
            if cfg.restarts == 0 {
                return Err(AscError::Config("multistart search needs at least one restart".into()));
            }
            let optima: Vec<(Vec<usize>, f64)> = (0..cfg.restarts)
                .into_par_iter()
                .map(|r| {
                    let mut rng = rng::stream(cfg.seed, &[r as u64]);
                    let start: Vec<usize> = (0..cost.n()).map(|_| rand::Rng::random_range(&mut rng, 0..cost.k())).collect();
                    let labels = local_descent(cost, start);
                    let value = cost.evaluate(&labels);
                    (labels, value)
                })
                .collect();
            let (labels, value) = optima
                .into_iter()
                .reduce(|best, cand| if better(&cand, &best) { cand } else { best })
                .expect("at least one restart");
            Ok((Assignment::new(labels, cost.k())?, value))
        }
    }
}

fn better(cand: &(Vec<usize>, f64), best: &(Vec<usize>, f64)) -> bool {
    let slack = tie_slack(best.1);
    if cand.1 < best.1 - slack {
        true
    } else if cand.1 <= best.1 + slack {
        cand.0 < best.0
    } else {
        false
    }
}

/// Greedy single-site descent: repeatedly moves each object to the label with
/// the largest cost decrease until no move improves the cost.
pub fn local_descent<C: CostFunction>(cost: &C, mut labels: Vec<usize>) -> Vec<usize> {
    let k = cost.k();
    let mut stats = cost.stats(&labels);
    loop {
        let mut improved = false;
        for i in 0..labels.len() {
            let from = labels[i];
            let (best, delta) = (0..k)
                .map(|l| (l, cost.group_delta(&stats, &[i], from, l)))
                .fold((from, 0.0), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
            if best != from && delta < -1e-12 {
                cost.apply_group(&mut stats, &[i], from, best);
                labels[i] = best;
                improved = true;
            }
        }
        if !improved {
            return labels;
        }
        stats = cost.stats(&labels);
    }
}
