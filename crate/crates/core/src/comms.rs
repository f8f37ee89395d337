//! Simulation of the permutation coding protocol.
//!
//! The sender and receiver share a training sample `X1` and a codebook of
//! object permutations. To send message `s` the channel draws a fresh test
//! sample `X2` and hands the receiver `σ_s∘X2`. The receiver scores every
//! codeword `σ` by the overlap between the approximation set of `σ∘X1`,
//! carried over to the received sample, and the approximation set of the
//! received sample, and decodes the best-scoring codeword.
//!
//! The carry-over map for codeword `σ` is the nearest-neighbour map `nu`
//! between the unpermuted samples, transported by `σ`: received object `i`
//! is matched to position `σ⁻¹[nu[σ[i]]]` of `σ∘X1`. For the codeword that
//! was actually sent this lines every object up with its own training
//! measurement.

use std::collections::HashSet;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacity::{ExactCapacity, NsigmaMode};
use crate::costs::CostFamily;
use crate::datagen::{draw_paired_samples, MixtureSpec};
use crate::domain::{build_correspondence, Correspondence, Dataset, Dissimilarities, Vectors};
use crate::error::{AscError, Result};
use crate::exact::{enumerate_costs, intersection_with, pushforward_indices, CostTable};
use crate::math::{wilson_interval, Z_95};
use crate::rng::{self, derive_seed};

/// Default cap on the codebook size.
pub const DEFAULT_MAX_CODEWORDS: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub n: usize,
    /// `sigmas[0]` is the identity.
    pub sigmas: Vec<Vec<usize>>,
    pub rate_bits: f64,
    pub seed: u64,
}

impl Codebook {
    pub fn m(&self) -> usize {
        self.sigmas.len()
    }
}

/// `ceil(2^(n * rate_bits))`, ignoring float error just above an integer.
pub fn codebook_size(n: usize, rate_bits: f64) -> Result<usize> {
    if !(rate_bits.is_finite() && rate_bits >= 0.0) {
        return Err(AscError::Codebook(format!("rate must be finite and nonnegative, got {rate_bits}")));
    }
    let m = (2f64.powf(n as f64 * rate_bits) - 1e-9).ceil();
    if m > usize::MAX as f64 / 2.0 {
        return Err(AscError::Codebook(format!("2^({n} * {rate_bits}) codewords is not representable")));
    }
    Ok((m as usize).max(1))
}

fn factorial_at_least(n: usize, m: usize) -> bool {
    let mut f: u128 = 1;
    for i in 2..=n as u128 {
        f = f.saturating_mul(i);
        if f >= m as u128 {
            return true;
        }
    }
    f >= m as u128
}

/// Identity plus `m - 1` distinct random permutations, drawn by seeded
/// Fisher-Yates shuffles with duplicates rejected.
pub fn generate_codebook(n: usize, rate_bits: f64, seed: u64, max_codewords: usize) -> Result<Codebook> {
    let m = codebook_size(n, rate_bits)?;
    if m > max_codewords {
        return Err(AscError::Codebook(format!("{m} codewords exceed the maximum of {max_codewords}")));
    }
    if !factorial_at_least(n, m) {
        return Err(AscError::Codebook(format!("{m} distinct permutations of {n} objects do not exist")));
    }
    let identity: Vec<usize> = (0..n).collect();
    let mut seen: HashSet<Vec<usize>> = HashSet::from([identity.clone()]);
    let mut sigmas = vec![identity.clone()];
    let mut rng = rng::stream(seed, &[]);
    while sigmas.len() < m {
        let mut p = identity.clone();
        p.shuffle(&mut rng);
        if seen.insert(p.clone()) {
            sigmas.push(p);
        }
    }
    Ok(Codebook { n, sigmas, rate_bits, seed })
}

fn check_permutation(sigma: &[usize], n: usize) -> Result<()> {
    if sigma.len() != n {
        return Err(AscError::LengthMismatch { expected: n, found: sigma.len() });
    }
    let mut seen = vec![false; n];
    for &s in sigma {
        if s >= n || std::mem::replace(&mut seen[s], true) {
            return Err(AscError::InvalidAssignment(format!("{sigma:?} is not a permutation of 0..{n}")));
        }
    }
    Ok(())
}

pub fn inverse_permutation(sigma: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; sigma.len()];
    for (i, &s) in sigma.iter().enumerate() {
        inv[s] = i;
    }
    inv
}

/// Reorders objects: object `i` of the output is object `sigma[i]` of the
/// input. Dissimilarity rows and columns move together.
pub fn permute_dataset(data: &Dataset, sigma: &[usize]) -> Result<Dataset> {
    check_permutation(sigma, data.n())?;
    Ok(match data {
        Dataset::Vectors(v) => {
            let rows: Vec<&[f64]> = sigma.iter().map(|&s| v.row(s)).collect();
            Vectors::from_rows(&rows)?.into()
        }
        Dataset::Dissimilarities(d) => {
            let n = d.n();
            let mut out = Vec::with_capacity(n * n);
            for &a in sigma {
                out.extend(sigma.iter().map(|&b| d.get(a, b)));
            }
            Dissimilarities::new(n, out)?.into()
        }
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransmissionResult {
    pub sent_index: usize,
    pub decoded_index: usize,
    pub overlap_scores: Vec<u64>,
    pub correct: bool,
}

impl TransmissionResult {
    fn new(sent_index: usize, overlap_scores: Vec<u64>) -> Self {
        let mut decoded_index = 0;
        for (i, &s) in overlap_scores.iter().enumerate() {
            if s > overlap_scores[decoded_index] {
                decoded_index = i;
            }
        }
        Self { sent_index, decoded_index, overlap_scores, correct: decoded_index == sent_index }
    }

    /// Largest and second-largest overlap.
    pub fn top_two(&self) -> (u64, u64) {
        let mut s = self.overlap_scores.clone();
        s.sort_unstable_by(|a, b| b.cmp(a));
        (s[0], s.get(1).copied().unwrap_or(0))
    }
}

/// Everything about one transmission that does not depend on `gamma`.
struct Channel {
    sent: usize,
    receiver: CostTable,
    codewords: Vec<(CostTable, Vec<usize>)>,
}

impl Channel {
    #[allow(clippy::too_many_arguments)]
    fn new(
        codebook: &Codebook,
        sent: usize,
        train: &Dataset,
        test: &Dataset,
        nu: &Correspondence,
        family: CostFamily,
        k: usize,
        budget: u64,
    ) -> Result<Self> {
        let n = train.n();
        if codebook.n != n || test.n() != n {
            return Err(AscError::DimensionMismatch(format!(
                "codebook over {} objects, samples of {} and {}",
                codebook.n,
                n,
                test.n()
            )));
        }
        if sent >= codebook.m() {
            return Err(AscError::Codebook(format!("message {sent} outside a codebook of {}", codebook.m())));
        }
        let received = permute_dataset(test, &codebook.sigmas[sent])?;
        let receiver = enumerate_costs(&family.build(&received, k)?, budget)?;
        let codewords = codebook
            .sigmas
            .iter()
            .map(|sigma| {
                let table = enumerate_costs(&family.build(&permute_dataset(train, sigma)?, k)?, budget)?;
                let inv = inverse_permutation(sigma);
                let psi = Correspondence::from_indices(sigma.iter().map(|&s| inv[nu.get(s)]).collect(), n)?;
                let pushed = pushforward_indices(n, k, &psi)?;
                Ok((table, pushed))
            })
            .collect::<Result<_>>()?;
        Ok(Self { sent, receiver, codewords })
    }

    fn decode(&self, gamma: f64) -> TransmissionResult {
        let mask = self.receiver.approx_set_mask(gamma);
        let scores = self.codewords.iter().map(|(t, pushed)| intersection_with(t, &mask, pushed, gamma)).collect();
        TransmissionResult::new(self.sent, scores)
    }
}

/// Sends codeword `sent_index` through the channel formed by `train` and a
/// fresh `test` sample and decodes it by maximal approximation-set overlap.
/// Ties go to the lowest codeword index.
#[allow(clippy::too_many_arguments)]
pub fn transmit_and_decode(
    codebook: &Codebook,
    sent_index: usize,
    train: &Dataset,
    fresh_test: &Dataset,
    family: CostFamily,
    k: usize,
    gamma: f64,
    budget: u64,
) -> Result<TransmissionResult> {
    if gamma.is_nan() || gamma < 0.0 {
        return Err(AscError::Config(format!("gamma must be nonnegative, got {gamma}")));
    }
    let nu = build_correspondence(train, fresh_test)?;
    Ok(Channel::new(codebook, sent_index, train, fresh_test, &nu, family, k, budget)?.decode(gamma))
}

/// `min(1, exp(-n (info - rate_bits ln 2)))`.
pub fn error_bound(info_per_object: f64, rate_bits: f64, n: usize) -> f64 {
    let e = (-(n as f64) * (info_per_object - rate_bits * std::f64::consts::LN_2)).exp();
    if e.is_nan() {
        1.0
    } else {
        e.min(1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub sent: usize,
    pub decoded: usize,
    pub correct: bool,
    pub top1: u64,
    pub top2: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRate {
    pub p_hat: f64,
    /// 95% Wilson score interval.
    pub interval: (f64, f64),
    pub bound: f64,
    /// Exact information at `gamma`, averaged over the trial draws.
    pub mean_info: f64,
    pub gamma: f64,
    pub rate_bits: f64,
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub seed: u64,
    pub trials: usize,
    pub errors: usize,
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
}

impl ErrorRate {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.interval.1 - self.interval.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub cost: CostFamily,
    pub k: usize,
    pub trials: usize,
    pub seed: u64,
    pub budget: u64,
    pub nsigma: NsigmaMode,
}

/// Empirical error rates at each `gamma`, sharing the trial draws.
///
/// Trial `t` draws a paired sample from `spec` reseeded with
/// `derive_seed(seed, [t, 0])` and a uniform message from stream `[t, 1]`.
pub fn error_rate_grid(
    codebook: &Codebook,
    spec: &MixtureSpec,
    gammas: &[f64],
    cfg: &SimulationConfig,
) -> Result<Vec<ErrorRate>> {
    if cfg.trials == 0 {
        return Err(AscError::Config("at least one trial is required".into()));
    }
    if let Some(g) = gammas.iter().find(|g| g.is_nan() || **g < 0.0) {
        return Err(AscError::Config(format!("gamma must be nonnegative, got {g}")));
    }
    if spec.n != codebook.n {
        return Err(AscError::DimensionMismatch(format!("codebook over {} objects, spec draws {}", codebook.n, spec.n)));
    }
    let per_trial: Vec<(Vec<TransmissionResult>, Vec<f64>)> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let draw = MixtureSpec { seed: derive_seed(cfg.seed, &[t as u64, 0]), ..spec.clone() };
            let (x1, x2, _) = draw_paired_samples(&draw)?;
            let sent = rng::stream(cfg.seed, &[t as u64, 1]).random_range(0..codebook.m());
            let nu = build_correspondence(&x1, &x2)?;
            let channel = Channel::new(codebook, sent, &x1, &x2, &nu, cfg.cost, cfg.k, cfg.budget)?;
            let (c1, c2) = (cfg.cost.build(&x1, cfg.k)?, cfg.cost.build(&x2, cfg.k)?);
            let model = ExactCapacity::new(&c1, &c2, &nu, cfg.nsigma, cfg.budget)?;
            let results = gammas.iter().map(|&g| channel.decode(g)).collect();
            let infos = gammas.iter().map(|&g| model.point_at_gamma(g).info).collect();
            Ok((results, infos))
        })
        .collect::<Result<_>>()?;

    Ok(gammas
        .iter()
        .enumerate()
        .map(|(gi, &gamma)| {
            let records: Vec<TrialRecord> = per_trial
                .iter()
                .enumerate()
                .map(|(t, (res, _))| {
                    let r = &res[gi];
                    let (top1, top2) = r.top_two();
                    TrialRecord { trial: t, sent: r.sent_index, decoded: r.decoded_index, correct: r.correct, top1, top2 }
                })
                .collect();
            let errors = records.iter().filter(|r| !r.correct).count();
            let mean_info = per_trial.iter().map(|(_, i)| i[gi]).sum::<f64>() / cfg.trials as f64;
            ErrorRate {
                p_hat: errors as f64 / cfg.trials as f64,
                interval: wilson_interval(errors, cfg.trials, Z_95),
                bound: error_bound(mean_info, codebook.rate_bits, codebook.n),
                mean_info,
                gamma,
                rate_bits: codebook.rate_bits,
                n: codebook.n,
                k: cfg.k,
                m: codebook.m(),
                seed: cfg.seed,
                trials: cfg.trials,
                errors,
                records,
            }
        })
        .collect())
}

/// Empirical error rate at a single `gamma`.
pub fn error_rate(codebook: &Codebook, spec: &MixtureSpec, gamma: f64, cfg: &SimulationConfig) -> Result<ErrorRate> {
    Ok(error_rate_grid(codebook, spec, &[gamma], cfg)?.remove(0))
}

/// CSV with columns `trial,sent,decoded,correct,top1,top2`.
pub fn write_trials_csv<W: Write>(records: &[TrialRecord], mut w: W) -> Result<()> {
    writeln!(w, "trial,sent,decoded,correct,top1,top2")?;
    for r in records {
        writeln!(w, "{},{},{},{},{},{}", r.trial, r.sent, r.decoded, r.correct, r.top1, r.top2)?;
    }
    w.flush()?;
    Ok(())
}
