//! Domain types shared by every module: datasets, label assignments, the
//! nearest-neighbour correspondence between two samples, and the empirical
//! type of an assignment.
//!
//! Objects are identified with their row index `0..n`. Labels are stored
//! zero-based (`0..k`); the text formats and the `one_based` helpers use the
//! conventional `1..=k` numbering.

use crate::error::{AscError, Result};

/// `n` objects described by `d`-dimensional real vectors, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Vectors {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl Vectors {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(AscError::InvalidDataset(format!(
                "vector dataset needs n >= 1 and d >= 1 (got n={n}, d={d})"
            )));
        }
        if data.len() != n * d {
            return Err(AscError::LengthMismatch { expected: n * d, found: data.len() });
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(AscError::InvalidDataset(format!(
                "non-finite coordinate at object {}",
                pos / d
            )));
        }
        Ok(Self { n, d, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n * d);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != d {
                return Err(AscError::DimensionMismatch(format!(
                    "row {i} has {} coordinates, expected {d}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(n, d, data)
    }

    /// One-dimensional points, handy for small worked examples.
    pub fn from_scalars(xs: &[f64]) -> Result<Self> {
        Self::new(xs.len(), 1, xs.to_vec())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }
}

/// A symmetric `n x n` dissimilarity matrix with zero diagonal, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dissimilarities {
    n: usize,
    data: Vec<f64>,
}

impl Dissimilarities {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(AscError::InvalidDataset("dissimilarity matrix needs n >= 1".into()));
        }
        if data.len() != n * n {
            return Err(AscError::LengthMismatch { expected: n * n, found: data.len() });
        }
        for i in 0..n {
            if data[i * n + i] != 0.0 {
                return Err(AscError::InvalidDataset(format!("nonzero diagonal entry at {i}")));
            }
            for j in 0..n {
                let v = data[i * n + j];
                if !v.is_finite() || v < 0.0 {
                    return Err(AscError::InvalidDataset(format!(
                        "entry ({i}, {j}) = {v} is not a finite nonnegative number"
                    )));
                }
                if v != data[j * n + i] {
                    return Err(AscError::InvalidDataset(format!("matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { n, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != n {
                return Err(AscError::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {n}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(n, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Measurements for one sample of objects.
#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Vectors(Vectors),
    Dissimilarities(Dissimilarities),
}

impl Dataset {
    pub fn n(&self) -> usize {
        match self {
            Dataset::Vectors(v) => v.n(),
            Dataset::Dissimilarities(d) => d.n(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Dataset::Vectors(_) => "vectors",
            Dataset::Dissimilarities(_) => "dissimilarities",
        }
    }

    pub fn as_vectors(&self) -> Option<&Vectors> {
        match self {
            Dataset::Vectors(v) => Some(v),
            Dataset::Dissimilarities(_) => None,
        }
    }

    pub fn as_dissimilarities(&self) -> Option<&Dissimilarities> {
        match self {
            Dataset::Dissimilarities(d) => Some(d),
            Dataset::Vectors(_) => None,
        }
    }
}

impl From<Vectors> for Dataset {
    fn from(v: Vectors) -> Self {
        Dataset::Vectors(v)
    }
}

impl From<Dissimilarities> for Dataset {
    fn from(d: Dissimilarities) -> Self {
        Dataset::Dissimilarities(d)
    }
}

/// A clustering hypothesis: one label in `0..k` per object.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Assignment {
    labels: Vec<usize>,
    k: usize,
}

impl Assignment {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(AscError::InvalidAssignment("k must be positive".into()));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
            return Err(AscError::InvalidAssignment(format!(
                "object {i} has label {} outside 1..={k}",
                l + 1
            )));
        }
        Ok(Self { labels, k })
    }

    /// Builds an assignment from labels numbered `1..=k`.
    pub fn from_one_based(labels: &[usize], k: usize) -> Result<Self> {
        let mut zero = Vec::with_capacity(labels.len());
        for (i, &l) in labels.iter().enumerate() {
            if l == 0 {
                return Err(AscError::InvalidAssignment(format!("object {i} has label 0")));
            }
            zero.push(l - 1);
        }
        Self::new(zero, k)
    }

    pub fn constant(n: usize, k: usize) -> Self {
        Self { labels: vec![0; n], k }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l + 1).collect()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn into_labels(self) -> Vec<usize> {
        self.labels
    }
}

/// Test-to-training nearest-neighbour map: `nu[i]` is the training object
/// identified with test object `i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Correspondence {
    nu: Vec<usize>,
}

impl Correspondence {
    pub fn identity(n: usize) -> Self {
        Self { nu: (0..n).collect() }
    }

    /// Wraps a user-supplied index map, checking every entry addresses one of
    /// the `n_train` training objects.
    pub fn from_indices(nu: Vec<usize>, n_train: usize) -> Result<Self> {
        if let Some((i, &j)) = nu.iter().enumerate().find(|(_, &j)| j >= n_train) {
            return Err(AscError::InvalidDataset(format!(
                "correspondence entry {i} points at training object {j}, but only {n_train} exist"
            )));
        }
        Ok(Self { nu })
    }

    pub fn n(&self) -> usize {
        self.nu.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.nu
    }

    #[inline]
    pub fn get(&self, test: usize) -> usize {
        self.nu[test]
    }

    /// Composition `self ∘ inner`: test index `i` maps to `inner[self[i]]`.
    pub fn then(&self, inner: &Correspondence) -> Correspondence {
        Correspondence { nu: self.nu.iter().map(|&j| inner.nu[j]).collect() }
    }

    /// For every training object, the test objects that map onto it.
    pub fn fan_in(&self, n_train: usize) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); n_train];
        for (i, &j) in self.nu.iter().enumerate() {
            groups[j].push(i);
        }
        groups
    }
}

/// Nearest-neighbour correspondence between two vector samples of equal size.
///
/// Each test object is mapped to the training object at minimal squared
/// Euclidean distance; ties go to the lowest training index.
pub fn build_correspondence(train: &Dataset, test: &Dataset) -> Result<Correspondence> {
    let (Dataset::Vectors(tr), Dataset::Vectors(te)) = (train, test) else {
        return Err(AscError::CorrespondenceRequired);
    };
    if tr.n() != te.n() {
        return Err(AscError::DimensionMismatch(format!(
            "train has {} objects, test has {}",
            tr.n(),
            te.n()
        )));
    }
    if tr.d() != te.d() {
        return Err(AscError::DimensionMismatch(format!(
            "train has dimension {}, test has dimension {}",
            tr.d(),
            te.d()
        )));
    }
    let nu = te
        .rows()
        .map(|x| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, y) in tr.rows().enumerate() {
                let d = squared_distance(x, y);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            best
        })
        .collect();
    Ok(Correspondence { nu })
}

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Transfers a training assignment to the test sample: test object `i`
/// receives the label of training object `nu[i]`.
pub fn pushforward(c: &Assignment, corr: &Correspondence) -> Result<Assignment> {
    if c.n() != corr.n() {
        return Err(AscError::LengthMismatch { expected: corr.n(), found: c.n() });
    }
    let labels = corr.indices().iter().map(|&j| c.labels[j]).collect();
    Ok(Assignment { labels, k: c.k })
}

/// Empirical label frequencies of an assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct TypeDistribution {
    counts: Vec<usize>,
    p: Vec<f64>,
}

impl TypeDistribution {
    pub fn from_counts(counts: Vec<usize>) -> Self {
        let n: usize = counts.iter().sum();
        let p = if n == 0 {
            vec![0.0; counts.len()]
        } else {
            counts.iter().map(|&c| c as f64 / n as f64).collect()
        };
        Self { counts, p }
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn n(&self) -> usize {
        self.counts.iter().sum()
    }
}

pub fn type_distribution(c: &Assignment) -> TypeDistribution {
    let mut counts = vec![0usize; c.k];
    for &l in &c.labels {
        counts[l] += 1;
    }
    TypeDistribution::from_counts(counts)
}

/// Shannon entropy of the type in nats, with `0 log 0 = 0`.
pub fn type_entropy(t: &TypeDistribution) -> f64 {
    t.p.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum()
}

/// `ln(n!)`.
pub fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// Log of the number of label vectors sharing this type, the multinomial
/// coefficient `n! / prod(n_v!)`.
pub fn log_type_class_size(t: &TypeDistribution) -> f64 {
    ln_factorial(t.n()) - t.counts.iter().map(|&c| ln_factorial(c)).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn vecs(xs: &[f64]) -> Dataset {
        Vectors::from_scalars(xs).unwrap().into()
    }

    #[test]
    fn correspondence_identity_on_identical_samples() {
        let x: Dataset = Vectors::from_rows(&[[0.0, 1.0], [3.0, -2.0], [5.5, 5.5]]).unwrap().into();
        let c = build_correspondence(&x, &x).unwrap();
        assert_eq!(c, Correspondence::identity(3));
    }

    #[test]
    fn correspondence_two_point_swap() {
        let c = build_correspondence(&vecs(&[0.0, 10.0]), &vecs(&[9.0, 1.0])).unwrap();
        assert_eq!(c.indices(), &[1, 0]);
    }

    #[test]
    fn correspondence_ties_go_to_lowest_index() {
        let c = build_correspondence(&vecs(&[2.0, 2.0, 0.0]), &vecs(&[2.0, 1.0, 0.0])).unwrap();
        assert_eq!(c.indices(), &[0, 0, 2]);
        // 1.0 is equidistant from 0.0 (index 2) and 2.0 (index 0)
        let c = build_correspondence(&vecs(&[2.0, 0.0]), &vecs(&[1.0, 1.0])).unwrap();
        assert_eq!(c.indices(), &[0, 0]);
    }

    #[test]
    fn correspondence_errors() {
        let a = vecs(&[0.0, 1.0]);
        let b = vecs(&[0.0, 1.0, 2.0]);
        assert!(matches!(build_correspondence(&a, &b), Err(AscError::DimensionMismatch(_))));
        let c: Dataset = Vectors::from_rows(&[[0.0, 0.0], [1.0, 1.0]]).unwrap().into();
        assert!(matches!(build_correspondence(&a, &c), Err(AscError::DimensionMismatch(_))));
        let d: Dataset = Dissimilarities::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap().into();
        assert!(matches!(build_correspondence(&d, &d), Err(AscError::CorrespondenceRequired)));
    }

    #[test]
    fn pushforward_examples() {
        let c = Assignment::from_one_based(&[1, 2], 2).unwrap();
        let id = Correspondence::identity(2);
        assert_eq!(pushforward(&c, &id).unwrap(), c);
        let swap = Correspondence::from_indices(vec![1, 0], 2).unwrap();
        assert_eq!(pushforward(&c, &swap).unwrap().one_based(), vec![2, 1]);
        let collapse = Correspondence::from_indices(vec![0, 0], 2).unwrap();
        assert_eq!(pushforward(&c, &collapse).unwrap().one_based(), vec![1, 1]);
        let short = Correspondence::identity(3);
        assert!(matches!(pushforward(&c, &short), Err(AscError::LengthMismatch { .. })));
    }

    #[test]
    fn type_distribution_examples() {
        let t = type_distribution(&Assignment::from_one_based(&[1, 2, 1, 2], 2).unwrap());
        assert_eq!(t.probabilities(), &[0.5, 0.5]);
        let t = type_distribution(&Assignment::from_one_based(&[1, 1, 1], 2).unwrap());
        assert_eq!(t.probabilities(), &[1.0, 0.0]);
        let t = type_distribution(&Assignment::from_one_based(&[1, 2, 2, 2], 2).unwrap());
        assert_eq!(t.probabilities(), &[0.25, 0.75]);
        assert_eq!(t.counts(), &[1, 3]);
    }

    #[test]
    fn type_entropy_examples() {
        let h = |c: Vec<usize>| type_entropy(&TypeDistribution::from_counts(c));
        assert!(close(h(vec![2, 2]), std::f64::consts::LN_2, 1e-15));
        assert_eq!(h(vec![4, 0]), 0.0);
        // -(0.25 ln 0.25 + 0.75 ln 0.75)
        let expected = -(0.25f64 * 0.25f64.ln() + 0.75 * 0.75f64.ln());
        assert!(close(h(vec![1, 3]), expected, 1e-15));
        assert!(close(h(vec![1, 3]), 0.562335, 1e-6));
    }

    #[test]
    fn log_type_class_size_examples() {
        let s = |c: Vec<usize>| log_type_class_size(&TypeDistribution::from_counts(c));
        assert_eq!(s(vec![4, 0]), 0.0);
        assert!(close(s(vec![2, 2]), 6f64.ln(), 1e-12));
        // 9! / (3! 3! 3!) = 1680
        assert!(close(s(vec![3, 3, 3]), 1680f64.ln(), 1e-12));
        assert!(close(s(vec![3, 3, 3]), 7.426549, 1e-6));
    }

    #[test]
    fn type_class_rate_approaches_entropy() {
        let t = TypeDistribution::from_counts(vec![100, 100]);
        let rate = log_type_class_size(&t) / 200.0;
        let h = type_entropy(&t);
        assert!((rate - h).abs() / h < 0.05, "rate {rate} vs entropy {h}");
    }

    #[test]
    fn dataset_validation() {
        assert!(Vectors::new(0, 1, vec![]).is_err());
        assert!(Vectors::new(2, 1, vec![0.0]).is_err());
        assert!(Vectors::new(1, 1, vec![f64::NAN]).is_err());
        assert!(Dissimilarities::from_rows(&[[0.0, 1.0], [2.0, 0.0]]).is_err());
        assert!(Dissimilarities::from_rows(&[[1.0, 1.0], [1.0, 0.0]]).is_err());
        assert!(Dissimilarities::from_rows(&[[0.0, -1.0], [-1.0, 0.0]]).is_err());
        assert!(Assignment::new(vec![0, 2], 2).is_err());
        assert!(Assignment::from_one_based(&[0, 1], 2).is_err());
        assert!(Correspondence::from_indices(vec![0, 2], 2).is_err());
    }

    proptest! {
        #[test]
        fn entropy_bounded_by_log_k(counts in prop::collection::vec(0usize..20, 1..6)) {
            prop_assume!(counts.iter().sum::<usize>() > 0);
            let k = counts.len();
            let t = TypeDistribution::from_counts(counts.clone());
            let h = type_entropy(&t);
            prop_assert!(h >= 0.0);
            prop_assert!(h <= (k as f64).ln() + 1e-12);
            let uniform = counts.iter().all(|&c| c == counts[0]);
            if !uniform {
                prop_assert!(h < (k as f64).ln() - 1e-12);
            }
            let s = log_type_class_size(&t);
            prop_assert!(s >= -1e-12);
            prop_assert!(s <= t.n() as f64 * h + 1e-9);
        }

        #[test]
        fn pushforward_composes(
            labels in prop::collection::vec(0usize..3, 1..12),
            seed in any::<u64>(),
        ) {
            let n = labels.len();
            let c = Assignment::new(labels, 3).unwrap();
            let mut s = seed;
            let mut next = || { s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); (s >> 33) as usize % n };
            let a = Correspondence::from_indices((0..n).map(|_| next()).collect(), n).unwrap();
            let b = Correspondence::from_indices((0..n).map(|_| next()).collect(), n).unwrap();
            // pushing through `b` then `a` equals pushing through `a ∘ b`
            let two_step = pushforward(&pushforward(&c, &b).unwrap(), &a).unwrap();
            let composed = pushforward(&c, &a.then(&b)).unwrap();
            prop_assert_eq!(two_step, composed);
            prop_assert_eq!(pushforward(&c, &Correspondence::identity(n)).unwrap(), c);
        }
    }
}
