//! Synthetic Gaussian-mixture data.
//!
//! Every object has a latent position drawn from the mixture; a sample is the
//! latent positions plus isotropic Gaussian measurement noise. Random streams
//! are split by role so that the training sample is the same in paired and
//! independent mode:
//!
//! | path | role |
//! |------|------|
//! | `[0]` | component labels and latent positions |
//! | `[1]` | training noise |
//! | `[2]` | test noise |
//! | `[3]` | test latent positions (independent mode only) |

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::{squared_distance, Dataset, Dissimilarities, Vectors};
use crate::error::{AscError, Result};
use crate::rng::{self, StreamRng};

/// Parameters of a Gaussian mixture and of the two-sample measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub n: usize,
    pub k_true: usize,
    pub d: usize,
    /// Explicit component centers; `None` places them on a regular simplex
    /// with pairwise distance `separation`.
    pub centers: Option<Vec<Vec<f64>>>,
    pub separation: f64,
    /// Standard deviation of a latent position around its center. Zero
    /// collapses each component to a point mass.
    pub spread: f64,
    /// Standard deviation of the measurement noise.
    pub noise_sigma: f64,
    /// Component weights; `None` is uniform.
    pub weights: Option<Vec<f64>>,
    /// Fix the component counts to the largest-remainder rounding of
    /// `n * weights` (objects listed component by component) instead of
    /// drawing labels at random.
    pub stratified: bool,
    pub seed: u64,
}

impl Default for MixtureSpec {
    fn default() -> Self {
        Self {
            n: 8,
            k_true: 2,
            d: 2,
            centers: None,
            separation: 6.0,
            spread: 1.0,
            noise_sigma: 0.5,
            weights: None,
            stratified: false,
            seed: 0,
        }
    }
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AscError::Config(m));
        if self.n == 0 || self.k_true == 0 || self.d == 0 {
            return bad("n, k_true and d must be positive".into());
        }
        for (name, v) in [("noise_sigma", self.noise_sigma), ("spread", self.spread), ("separation", self.separation)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and nonnegative, got {v}"));
            }
        }
        if let Some(w) = &self.weights {
            if w.len() != self.k_true {
                return bad(format!("{} weights for {} components", w.len(), self.k_true));
            }
            if w.iter().any(|&x| !(x.is_finite() && x >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return bad("weights must be nonnegative and sum to 1".into());
            }
        }
        match &self.centers {
            Some(c) => {
                if c.len() != self.k_true || c.iter().any(|row| row.len() != self.d) {
                    return bad(format!("centers must be a {}x{} matrix", self.k_true, self.d));
                }
            }
            None if self.d + 1 < self.k_true => {
                return bad(format!("a regular simplex of {} points needs d >= {}", self.k_true, self.k_true - 1));
            }
            None => {}
        }
        Ok(())
    }

    pub fn resolved_centers(&self) -> Vec<Vec<f64>> {
        self.centers.clone().unwrap_or_else(|| simplex_centers(self.k_true, self.d, self.separation))
    }

    pub fn resolved_weights(&self) -> Vec<f64> {
        self.weights.clone().unwrap_or_else(|| vec![1.0 / self.k_true as f64; self.k_true])
    }
}

/// `k` points in `d >= k - 1` dimensions with all pairwise distances `s`,
/// centred at the origin.
pub fn simplex_centers(k: usize, d: usize, s: f64) -> Vec<Vec<f64>> {
    assert!(d + 1 >= k, "simplex of {k} points needs d >= {}", k - 1);
    // centred standard basis of R^k, expressed in an orthonormal basis of
    // its (k-1)-dimensional span; e_i - e_j has length sqrt(2)
    let mean = 1.0 / k as f64;
    let points: Vec<Vec<f64>> =
        (0..k).map(|i| (0..k).map(|j| if i == j { 1.0 - mean } else { -mean }).collect()).collect();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for p in points.iter().take(k.saturating_sub(1)) {
        let mut v = p.clone();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        basis.push(v.into_iter().map(|x| x / norm).collect());
    }
    let scale = s / std::f64::consts::SQRT_2;
    points
        .iter()
        .map(|p| {
            let mut row = vec![0.0; d];
            for (slot, b) in row.iter_mut().zip(&basis) {
                *slot = scale * p.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            }
            row
        })
        .collect()
}

/// Largest-remainder rounding of `n * weights`.
fn stratified_counts(n: usize, weights: &[f64]) -> Vec<usize> {
    let raw: Vec<f64> = weights.iter().map(|w| w * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    let missing = n - counts.iter().sum::<usize>();
    for &c in order.iter().take(missing) {
        counts[c] += 1;
    }
    counts
}

fn draw_labels(spec: &MixtureSpec, rng: &mut StreamRng) -> Vec<usize> {
    let weights = spec.resolved_weights();
    if spec.stratified {
        stratified_counts(spec.n, &weights)
            .into_iter()
            .enumerate()
            .flat_map(|(c, m)| std::iter::repeat(c).take(m))
            .collect()
    } else {
        let dist = WeightedIndex::new(&weights).expect("validated weights");
        (0..spec.n).map(|_| dist.sample(rng)).collect()
    }
}

fn draw_latent(spec: &MixtureSpec, labels: &[usize], rng: &mut StreamRng) -> Vec<f64> {
    let centers = spec.resolved_centers();
    let mut z = Vec::with_capacity(spec.n * spec.d);
    for &c in labels {
        for &m in &centers[c] {
            let e: f64 = StandardNormal.sample(rng);
            z.push(m + spec.spread * e);
        }
    }
    z
}

fn measure(latent: &[f64], sigma: f64, rng: &mut StreamRng) -> Vec<f64> {
    latent
        .iter()
        .map(|&z| {
            let e: f64 = StandardNormal.sample(rng);
            z + sigma * e
        })
        .collect()
}

fn latent_sample(spec: &MixtureSpec, path: u64) -> (Vec<usize>, Vec<f64>) {
    let mut rng = rng::stream(spec.seed, &[path]);
    let labels = draw_labels(spec, &mut rng);
    let z = draw_latent(spec, &labels, &mut rng);
    (labels, z)
}

/// Two noisy measurements of the same latent objects, plus the true
/// component labels (zero-based).
pub fn draw_paired_samples(spec: &MixtureSpec) -> Result<(Dataset, Dataset, Vec<usize>)> {
    spec.validate()?;
    let (labels, z) = latent_sample(spec, 0);
    let x1 = measure(&z, spec.noise_sigma, &mut rng::stream(spec.seed, &[1]));
    let x2 = measure(&z, spec.noise_sigma, &mut rng::stream(spec.seed, &[2]));
    Ok((Vectors::new(spec.n, spec.d, x1)?.into(), Vectors::new(spec.n, spec.d, x2)?.into(), labels))
}

/// Two independent draws from the mixture. The training sample equals the
/// paired-mode training sample for the same spec.
pub fn draw_independent_samples(spec: &MixtureSpec) -> Result<(Dataset, Dataset, Vec<usize>, Vec<usize>)> {
    spec.validate()?;
    let (labels1, z1) = latent_sample(spec, 0);
    let (labels2, z2) = latent_sample(spec, 3);
    let x1 = measure(&z1, spec.noise_sigma, &mut rng::stream(spec.seed, &[1]));
    let x2 = measure(&z2, spec.noise_sigma, &mut rng::stream(spec.seed, &[2]));
    Ok((Vectors::new(spec.n, spec.d, x1)?.into(), Vectors::new(spec.n, spec.d, x2)?.into(), labels1, labels2))
}

/// Squared Euclidean distance matrix.
pub fn dissimilarity_from_vectors(data: &Vectors) -> Dissimilarities {
    let n = data.n();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = squared_distance(data.row(i), data.row(j));
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    Dissimilarities::new(n, d).expect("squared distances of finite vectors form a valid matrix")
}
