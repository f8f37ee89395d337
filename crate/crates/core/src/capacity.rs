//! Approximation capacity and model selection.
//!
//! For every `beta` on a grid the mutual information per object is
//!
//! ```text
//! I(beta) = (ln N_sigma + ln dZ(beta) - ln Z1(beta) - ln Z2(beta)) / n
//! ```
//!
//! where `Z1`, `Z2` are the partition functions of the two samples, `dZ` the
//! joint partition function over training label vectors and `N_sigma` the
//! number of label vectors sharing the type of the training minimizer. The
//! precision `gamma(beta)` is the training excess mean cost
//! `<R1>_beta - min R1`. The capacity is the maximum of `I` over the grid.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costs::{erm_search, tie_slack, CostFamily, CostFunction, ErmConfig, ErmMode};
use crate::domain::{
    build_correspondence, log_type_class_size, type_distribution, type_entropy, Assignment, Correspondence, Dataset,
};
use crate::error::{AscError, Result};
use crate::exact::{self, enumerate_costs, CostTable, JointTable};
use crate::math::isotonic_nonincreasing;
use crate::rng::derive_seed;
use crate::thermo::{self, GibbsConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Exact,
    Sampled,
    /// Exact when `k^n` fits the budget, sampled otherwise.
    Auto,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Exact => "exact",
            Engine::Sampled => "sampled",
            Engine::Auto => "auto",
        }
    }

    pub fn resolve(self, n: usize, k: usize, budget: u64) -> Engine {
        match self {
            Engine::Auto if exact::class_size(n, k).is_some_and(|s| s <= budget) => Engine::Exact,
            Engine::Auto => Engine::Sampled,
            e => e,
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Engine {
    type Err = AscError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" => Ok(Engine::Exact),
            "sampled" => Ok(Engine::Sampled),
            "auto" => Ok(Engine::Auto),
            other => Err(AscError::Config(format!("unknown engine `{other}` (expected exact, sampled or auto)"))),
        }
    }
}

/// How `ln N_sigma` is computed from the minimizer's type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NsigmaMode {
    /// `ln(n! / prod n_v!)`.
    Multinomial,
    /// `n H(type)`.
    Asymptotic,
}

impl NsigmaMode {
    pub fn log_count(self, minimizer: &Assignment) -> f64 {
        let t = type_distribution(minimizer);
        match self {
            NsigmaMode::Multinomial => log_type_class_size(&t),
            NsigmaMode::Asymptotic => t.n() as f64 * type_entropy(&t),
        }
    }
}

impl FromStr for NsigmaMode {
    type Err = AscError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "multinomial" => Ok(NsigmaMode::Multinomial),
            "asymptotic" => Ok(NsigmaMode::Asymptotic),
            other => Err(AscError::Config(format!("unknown nsigma mode `{other}` (expected multinomial or asymptotic)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityConfig {
    pub engine: Engine,
    pub nsigma: NsigmaMode,
    /// Largest `k^n` the exact engine may enumerate.
    pub budget: u64,
    /// Explicit beta grid starting at 0; `None` derives one from the data.
    pub grid: Option<Vec<f64>>,
    /// Positive points of a derived grid.
    pub grid_points: usize,
    /// Append the `beta = inf` limit to a derived exact grid.
    pub ground_state: bool,
    pub sweeps_burnin: usize,
    pub sweeps_measure: usize,
    pub chains: usize,
    /// Restarts of the minimizer search when enumeration is infeasible.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for CapacityConfig {
    fn default() -> Self {
        let g = GibbsConfig::default();
        Self {
            engine: Engine::Auto,
            nsigma: NsigmaMode::Multinomial,
            budget: exact::DEFAULT_BUDGET,
            grid: None,
            grid_points: thermo::AUTO_GRID_POINTS,
            ground_state: true,
            sweeps_burnin: g.sweeps_burnin,
            sweeps_measure: g.sweeps_measure,
            chains: g.chains,
            restarts: 50,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityPoint {
    pub beta: f64,
    pub gamma: f64,
    pub log_nsigma: f64,
    /// At `beta = inf` the three log-partition fields hold the log ground-state
    /// degeneracies (`ln Z + beta * min R` in the limit), and `log_dz` is
    /// `-inf` when no joint minimizer attains `min R1 + min R2`.
    pub log_z1: f64,
    pub log_z2: f64,
    pub log_dz: f64,
    /// Nats per object.
    pub info: f64,
}

impl CapacityPoint {
    fn assemble(n: usize, beta: f64, gamma: f64, log_nsigma: f64, log_z1: f64, log_z2: f64, log_dz: f64) -> Self {
        let info = (log_nsigma + log_dz - log_z1 - log_z2) / n as f64;
        Self { beta, gamma, log_nsigma, log_z1, log_z2, log_dz, info }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub gamma_star: f64,
    pub beta_star: f64,
    pub info_star: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityCurve {
    pub cost: String,
    pub n: usize,
    pub k: usize,
    /// `exact` or `sampled`.
    pub engine: Engine,
    pub nsigma: NsigmaMode,
    pub r_min: f64,
    /// Training minimizer, zero-based.
    pub minimizer: Vec<usize>,
    pub points: Vec<CapacityPoint>,
    pub argmax: usize,
}

/// Grid point with the largest information; ties go to the smaller `gamma`.
pub fn optimal_gamma(curve: &CapacityCurve) -> Optimum {
    let p = curve.points[curve.argmax];
    Optimum { gamma_star: p.gamma, beta_star: p.beta, info_star: p.info }
}

fn argmax(points: &[CapacityPoint]) -> usize {
    let mut best = 0;
    for (i, p) in points.iter().enumerate().skip(1) {
        let b = &points[best];
        let slack = tie_slack(b.info);
        if p.info > b.info + slack || (p.info >= b.info - slack && p.gamma < b.gamma) {
            best = i;
        }
    }
    best
}

impl CapacityCurve {
    pub fn optimum(&self) -> Optimum {
        optimal_gamma(self)
    }

    /// CSV with columns `beta,gamma,logZ1,logZ2,logDZ,log_nsigma,info`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "beta,gamma,logZ1,logZ2,logDZ,log_nsigma,info")?;
        for p in &self.points {
            writeln!(w, "{:?},{:?},{:?},{:?},{:?},{:?},{:?}", p.beta, p.gamma, p.log_z1, p.log_z2, p.log_dz, p.log_nsigma, p.info)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads the rows written by [`CapacityCurve::write_csv`].
pub fn read_capacity_csv<R: Read>(r: R) -> Result<Vec<CapacityPoint>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let f: Vec<f64> = line
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| AscError::Parse { line: i + 1, msg: e.to_string() })?;
        let [beta, gamma, log_z1, log_z2, log_dz, log_nsigma, info] = f[..] else {
            return Err(AscError::Parse { line: i + 1, msg: format!("expected 7 fields, found {}", f.len()) });
        };
        out.push(CapacityPoint { beta, gamma, log_nsigma, log_z1, log_z2, log_dz, info });
    }
    Ok(out)
}

/// Exhaustive tables for a two-sample instance, evaluated at any `beta`.
pub struct ExactCapacity {
    pub train: CostTable,
    pub test: CostTable,
    pub joint: JointTable,
    pub minimizer: Assignment,
    pub log_nsigma: f64,
}

impl ExactCapacity {
    pub fn new<A: CostFunction, B: CostFunction>(
        cost1: &A,
        cost2: &B,
        corr: &Correspondence,
        nsigma: NsigmaMode,
        budget: u64,
    ) -> Result<Self> {
        let train = enumerate_costs(cost1, budget)?;
        let test = enumerate_costs(cost2, budget)?;
        let joint = JointTable::new(&train, &test, corr)?;
        let minimizer = Assignment::new(train.argmin_labels(), train.k())?;
        let log_nsigma = nsigma.log_count(&minimizer);
        Ok(Self { train, test, joint, minimizer, log_nsigma })
    }

    pub fn point(&self, beta: f64) -> CapacityPoint {
        let n = self.train.n();
        if beta == f64::INFINITY {
            return self.ground_point();
        }
        let gamma = (exact::exact_mean_cost(&self.train, beta) - self.train.r_min()).max(0.0);
        CapacityPoint::assemble(
            n,
            beta,
            gamma,
            self.log_nsigma,
            exact::exact_log_partition(&self.train, beta),
            exact::exact_log_partition(&self.test, beta),
            self.joint.log_partition(beta),
        )
    }

    fn ground_point(&self) -> CapacityPoint {
        let degeneracy = |t: &CostTable| (exact::approx_set_size(t, 0.0) as f64).ln();
        let target = self.train.r_min() + self.test.r_min();
        let log_dz = if self.joint.r_min() <= target + tie_slack(target) {
            (self.joint.ground_degeneracy() as f64).ln()
        } else {
            f64::NEG_INFINITY
        };
        CapacityPoint::assemble(
            self.train.n(),
            f64::INFINITY,
            0.0,
            self.log_nsigma,
            degeneracy(&self.train),
            degeneracy(&self.test),
            log_dz,
        )
    }

    /// Information at precision `gamma`, through the exact inverse `beta(gamma)`.
    pub fn point_at_gamma(&self, gamma: f64) -> CapacityPoint {
        let mut p = self.point(exact::beta_for_gamma(&self.train, gamma));
        p.gamma = gamma;
        p
    }
}

/// Capacity curve of one cost family and cluster count on a sample pair.
/// The correspondence is built by nearest neighbours, so both samples must
/// be vector data.
pub fn capacity_curve(
    train: &Dataset,
    test: &Dataset,
    family: CostFamily,
    k: usize,
    cfg: &CapacityConfig,
) -> Result<CapacityCurve> {
    let corr = build_correspondence(train, test)?;
    capacity_curve_matched(train, test, &corr, family, k, cfg)
}

/// Like [`capacity_curve`] with an explicit correspondence, which admits
/// dissimilarity data.
pub fn capacity_curve_matched(
    train: &Dataset,
    test: &Dataset,
    corr: &Correspondence,
    family: CostFamily,
    k: usize,
    cfg: &CapacityConfig,
) -> Result<CapacityCurve> {
    let cost1 = family.build(train, k)?;
    let cost2 = family.build(test, k)?;
    capacity_curve_with(&cost1, &cost2, corr, cfg)
}

/// Capacity curve for bound cost functions and an explicit correspondence.
pub fn capacity_curve_with<A: CostFunction, B: CostFunction>(
    cost1: &A,
    cost2: &B,
    corr: &Correspondence,
    cfg: &CapacityConfig,
) -> Result<CapacityCurve> {
    if cost1.n() != cost2.n() || cost1.k() != cost2.k() {
        return Err(AscError::DimensionMismatch(format!(
            "samples differ: n={}, k={} vs n={}, k={}",
            cost1.n(),
            cost1.k(),
            cost2.n(),
            cost2.k()
        )));
    }
    if let Some(g) = &cfg.grid {
        thermo::validate_grid(g)?;
    }
    let (n, k) = (cost1.n(), cost1.k());
    let engine = cfg.engine.resolve(n, k, cfg.budget);
    let (minimizer, r_min, points) = match engine {
        Engine::Exact => {
            let model = ExactCapacity::new(cost1, cost2, corr, cfg.nsigma, cfg.budget)?;
            let grid = match &cfg.grid {
                Some(g) => g.clone(),
                None => {
                    let mut g = thermo::auto_beta_grid(cost1, model.minimizer.labels(), cfg.grid_points, cfg.seed);
                    if cfg.ground_state {
                        g.push(f64::INFINITY);
                    }
                    g
                }
            };
            let points = grid.iter().map(|&b| model.point(b)).collect();
            (model.minimizer, model.train.r_min(), points)
        }
        _ => sampled_points(cost1, cost2, corr, cfg)?,
    };
    let argmax = argmax(&points);
    Ok(CapacityCurve {
        cost: cost1.tag().to_string(),
        n,
        k,
        engine,
        nsigma: cfg.nsigma,
        r_min,
        minimizer: minimizer.into_labels(),
        points,
        argmax,
    })
}

fn sampled_points<A: CostFunction, B: CostFunction>(
    cost1: &A,
    cost2: &B,
    corr: &Correspondence,
    cfg: &CapacityConfig,
) -> Result<(Assignment, f64, Vec<CapacityPoint>)> {
    let n = cost1.n();
    let feasible = exact::class_size(n, cost1.k()).is_some_and(|s| s <= cfg.budget);
    let mode = if feasible { ErmMode::Exhaustive } else { ErmMode::MultistartLocal };
    let erm = ErmConfig { budget: cfg.budget, restarts: cfg.restarts, seed: derive_seed(cfg.seed, &[0]) };
    let (minimizer, r_min) = erm_search(cost1, mode, &erm)?;
    let log_nsigma = cfg.nsigma.log_count(&minimizer);
    let grid = match &cfg.grid {
        Some(g) => g.clone(),
        None => thermo::auto_beta_grid(cost1, minimizer.labels(), cfg.grid_points, cfg.seed),
    };
    let gibbs = |path: u64| GibbsConfig {
        sweeps_burnin: cfg.sweeps_burnin,
        sweeps_measure: cfg.sweeps_measure,
        chains: cfg.chains,
        seed: derive_seed(cfg.seed, &[path]),
        beta_grid: grid.clone(),
    };
    let (g1, g2, gj) = (gibbs(1), gibbs(2), gibbs(3));
    let (z1, (z2, dz)) = rayon::join(
        || thermo::thermo_integrate_log_z(cost1, &g1),
        || rayon::join(|| thermo::thermo_integrate_log_z(cost2, &g2), || thermo::joint_thermo_integrate(cost1, cost2, corr, &gj)),
    );
    let (z1, z2, dz) = (z1?, z2?, dz?);
    let smooth = isotonic_nonincreasing(&z1.mean_costs(), None);
    let points = grid
        .iter()
        .enumerate()
        .map(|(j, &beta)| {
            CapacityPoint::assemble(
                n,
                beta,
                (smooth[j] - r_min).max(0.0),
                log_nsigma,
                z1.points[j].log_z,
                z2.points[j].log_z,
                dz.points[j].log_z,
            )
        })
        .collect();
    Ok((minimizer, r_min, points))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub cost: CostFamily,
    pub k: usize,
}

impl fmt::Display for Candidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:k={}", self.cost, self.k)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub candidate: Candidate,
    pub info_star: f64,
    pub gamma_star: f64,
    pub beta_star: f64,
    /// `n * info_star`.
    pub info_star_total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedCandidate {
    pub candidate: Candidate,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    /// Best first.
    pub ranking: Vec<RankEntry>,
    pub failed: Vec<FailedCandidate>,
    /// Curves in candidate order; `None` for failed candidates.
    #[serde(skip)]
    pub curves: Vec<Option<CapacityCurve>>,
}

impl Ranking {
    pub fn winner(&self) -> Option<&RankEntry> {
        self.ranking.first()
    }
}

/// Evaluates every candidate and ranks them by capacity, best first. Equal
/// scores keep candidate order. Failing candidates are reported, not ranked.
pub fn select_model(
    candidates: &[Candidate],
    train: &Dataset,
    test: &Dataset,
    cfg: &CapacityConfig,
) -> Result<Ranking> {
    if candidates.is_empty() {
        return Err(AscError::Config("no candidates to select from".into()));
    }
    select_model_matched(candidates, train, test, &build_correspondence(train, test)?, cfg)
}

/// Like [`select_model`] with an explicit correspondence.
pub fn select_model_matched(
    candidates: &[Candidate],
    train: &Dataset,
    test: &Dataset,
    corr: &Correspondence,
    cfg: &CapacityConfig,
) -> Result<Ranking> {
    if candidates.is_empty() {
        return Err(AscError::Config("no candidates to select from".into()));
    }
    let results: Vec<Result<CapacityCurve>> =
        candidates.par_iter().map(|c| capacity_curve_matched(train, test, corr, c.cost, c.k, cfg)).collect();
    let mut ranking = Vec::new();
    let mut failed = Vec::new();
    let mut curves = Vec::new();
    for (candidate, result) in candidates.iter().zip(results) {
        match result {
            Ok(curve) => {
                let o = curve.optimum();
                ranking.push(RankEntry {
                    candidate: *candidate,
                    info_star: o.info_star,
                    gamma_star: o.gamma_star,
                    beta_star: o.beta_star,
                    info_star_total: o.info_star * curve.n as f64,
                });
                curves.push(Some(curve));
            }
            Err(e) => {
                failed.push(FailedCandidate { candidate: *candidate, error: e.to_string() });
                curves.push(None);
            }
        }
    }
    ranking.sort_by(|a, b| b.info_star.total_cmp(&a.info_star));
    Ok(Ranking { ranking, failed, curves })
}
