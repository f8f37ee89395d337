use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use asc_core::capacity::{CapacityConfig, CapacityCurve, Candidate};
use asc_core::comms::{error_rate_grid, generate_codebook, SimulationConfig};
use asc_core::datagen::{dissimilarity_from_vectors, draw_independent_samples, draw_paired_samples, MixtureSpec};
use asc_core::domain::{build_correspondence, Correspondence, Dataset};
use asc_core::io;
use asc_core::rng::derive_seed;
use serde::Serialize;

use crate::args::{CapacityArgs, Command, DataArgs, EngineArgs, GenArgs, Matching, MixtureArgs, SelectArgs, SimulateArgs};

/// Files of one run, rendered in memory and written together at the end.
struct Artifacts {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Artifacts {
    fn new() -> Self {
        Self { files: Vec::new() }
    }

    fn add(&mut self, name: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    fn write(self, out: &Path) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        for (name, bytes) in self.files {
            let path = out.join(&name);
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
            }
            fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
            written.push(path);
        }
        Ok(written)
    }
}

#[derive(Serialize)]
struct Manifest<'a, R: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a Command,
    resolved: R,
    artifacts: Vec<String>,
}

fn finish<R: Serialize>(out: &Path, command: &Command, resolved: R, mut artifacts: Artifacts) -> Result<Vec<PathBuf>> {
    let names = artifacts.files.iter().map(|(p, _)| p.display().to_string()).collect();
    let manifest = Manifest { tool: "asc", version: env!("CARGO_PKG_VERSION"), command, resolved, artifacts: names };
    artifacts.add_json("manifest.json", &manifest)?;
    artifacts.write(out)
}

pub fn run(command: &Command, out: &Path) -> Result<Vec<PathBuf>> {
    match command {
        Command::Gen(a) => gen(command, a, out),
        Command::Capacity(a) => capacity(command, a, out),
        Command::Select(a) => select(command, a, out),
        Command::Simulate(a) => simulate(command, a, out),
        Command::Replay { manifest } => {
            let text = fs::read_to_string(manifest).with_context(|| format!("cannot read {}", manifest.display()))?;
            let value: serde_json::Value = serde_json::from_str(&text)?;
            let recorded: Command = serde_json::from_value(value["command"].clone())?;
            run(&recorded, out)
        }
    }
}

fn mixture(m: &MixtureArgs, seed: u64) -> MixtureSpec {
    MixtureSpec {
        n: m.n,
        k_true: m.k_true,
        d: m.d,
        centers: None,
        separation: m.sep,
        spread: m.spread,
        noise_sigma: m.sigma,
        weights: m.weights.clone(),
        stratified: m.stratified,
        seed,
    }
}

fn dataset_bytes(data: &Dataset, dissim: bool) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    match (dissim, data.as_vectors()) {
        (true, Some(v)) => io::write_dataset(&dissimilarity_from_vectors(v).into(), &mut buf)?,
        _ => io::write_dataset(data, &mut buf)?,
    }
    Ok(buf)
}

fn labels_bytes(labels: &[usize]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    io::write_labels(labels, &mut buf)?;
    Ok(buf)
}

fn gen(command: &Command, a: &GenArgs, out: &Path) -> Result<Vec<PathBuf>> {
    let spec = mixture(&a.mixture, a.seed);
    let mut art = Artifacts::new();
    let (train, test) = if a.independent {
        let (x1, x2, l1, l2) = draw_independent_samples(&spec)?;
        art.add("labels.csv", labels_bytes(&l1)?);
        art.add("test_labels.csv", labels_bytes(&l2)?);
        (x1, x2)
    } else {
        let (x1, x2, labels) = draw_paired_samples(&spec)?;
        art.add("labels.csv", labels_bytes(&labels)?);
        (x1, x2)
    };
    art.files.insert(0, ("train.csv".into(), dataset_bytes(&train, a.dissim)?));
    art.files.insert(1, ("test.csv".into(), dataset_bytes(&test, a.dissim)?));
    let mut resolved = spec;
    resolved.centers = Some(resolved.resolved_centers());
    resolved.weights = Some(resolved.resolved_weights());
    let written = finish(out, command, resolved, art)?;
    for p in &written {
        println!("{}", p.display());
    }
    Ok(written)
}

fn capacity_config(e: &EngineArgs) -> CapacityConfig {
    CapacityConfig {
        engine: e.engine,
        nsigma: e.nsigma,
        budget: e.budget,
        grid: e.grid.clone(),
        grid_points: e.grid_points,
        ground_state: !e.no_ground_state,
        sweeps_burnin: e.sweeps_burnin,
        sweeps_measure: e.sweeps_measure,
        chains: e.chains,
        restarts: e.restarts,
        seed: e.seed,
    }
}

fn load_pair(d: &DataArgs) -> Result<(Dataset, Dataset, Correspondence)> {
    let train = io::load_dataset(&d.train).with_context(|| format!("reading {}", d.train.display()))?;
    let test = io::load_dataset(&d.test).with_context(|| format!("reading {}", d.test.display()))?;
    let corr = match d.correspondence {
        Matching::Nearest => build_correspondence(&train, &test)?,
        Matching::Identity => {
            if train.n() != test.n() {
                return Err(asc_core::AscError::LengthMismatch { expected: train.n(), found: test.n() }.into());
            }
            Correspondence::identity(train.n())
        }
    };
    Ok((train, test, corr))
}

#[derive(Serialize)]
struct CurveSummary<'a> {
    cost: &'a str,
    k: usize,
    n: usize,
    engine: asc_core::Engine,
    nsigma: asc_core::NsigmaMode,
    info_star: f64,
    info_star_total: f64,
    gamma_star: f64,
    /// `null` when the optimum sits at the zero-temperature point.
    beta_star: Option<f64>,
    r_min: f64,
    /// One-based training minimizer.
    minimizer: Vec<usize>,
    points: usize,
}

fn summary(curve: &CapacityCurve) -> CurveSummary<'_> {
    let o = curve.optimum();
    CurveSummary {
        cost: &curve.cost,
        k: curve.k,
        n: curve.n,
        engine: curve.engine,
        nsigma: curve.nsigma,
        info_star: o.info_star,
        info_star_total: o.info_star * curve.n as f64,
        gamma_star: o.gamma_star,
        beta_star: o.beta_star.is_finite().then_some(o.beta_star),
        r_min: curve.r_min,
        minimizer: curve.minimizer.iter().map(|l| l + 1).collect(),
        points: curve.points.len(),
    }
}

fn curve_bytes(curve: &CapacityCurve) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    curve.write_csv(&mut buf)?;
    Ok(buf)
}

fn capacity(command: &Command, a: &CapacityArgs, out: &Path) -> Result<Vec<PathBuf>> {
    let (train, test, corr) = load_pair(&a.data)?;
    let cfg = capacity_config(&a.engine);
    let curve = asc_core::capacity_curve_matched(&train, &test, &corr, a.cost, a.k, &cfg)?;
    let mut art = Artifacts::new();
    art.add("capacity.csv", curve_bytes(&curve)?);
    let s = summary(&curve);
    art.add_json("summary.json", &s)?;
    let resolved = CapacityConfig { engine: curve.engine, grid: Some(curve.points.iter().map(|p| p.beta).collect()), ..cfg };
    let written = finish(out, command, resolved, art)?;
    println!(
        "{}:k={} engine={} info_star={:.6} gamma_star={:.6} beta_star={}",
        s.cost, s.k, s.engine, s.info_star, s.gamma_star, curve.optimum().beta_star
    );
    Ok(written)
}

#[derive(Serialize)]
struct RankingFile<'a> {
    winner: Option<String>,
    ranking: Vec<RankedCurve<'a>>,
    failed: &'a [asc_core::capacity::FailedCandidate],
}

#[derive(Serialize)]
struct RankedCurve<'a> {
    rank: usize,
    candidate: String,
    #[serde(flatten)]
    summary: CurveSummary<'a>,
    curve_file: String,
}

fn curve_file(index: usize, c: &Candidate) -> String {
    format!("curves/{index:02}_{}_k{}.csv", c.cost, c.k)
}

fn select(command: &Command, a: &SelectArgs, out: &Path) -> Result<Vec<PathBuf>> {
    let candidates: Vec<Candidate> =
        a.cost.iter().flat_map(|&cost| a.k.iter().map(move |&k| Candidate { cost, k })).collect();
    let (train, test, corr) = load_pair(&a.data)?;
    let cfg = capacity_config(&a.engine);
    let result = asc_core::select_model_matched(&candidates, &train, &test, &corr, &cfg)?;

    let mut art = Artifacts::new();
    let mut ranked = Vec::new();
    let mut used = vec![false; candidates.len()];
    for (rank, entry) in result.ranking.iter().enumerate() {
        // duplicates share a candidate value; take the first unused curve
        let idx = (0..candidates.len())
            .find(|&i| !used[i] && candidates[i] == entry.candidate && result.curves[i].is_some())
            .expect("ranked candidate has a curve");
        used[idx] = true;
        let curve = result.curves[idx].as_ref().unwrap();
        let file = curve_file(idx, &entry.candidate);
        art.add(file.clone(), curve_bytes(curve)?);
        ranked.push(RankedCurve { rank: rank + 1, candidate: entry.candidate.to_string(), summary: summary(curve), curve_file: file });
    }
    let file = RankingFile { winner: result.winner().map(|w| w.candidate.to_string()), ranking: ranked, failed: &result.failed };
    art.files.insert(0, ("ranking.json".into(), {
        let mut b = serde_json::to_vec_pretty(&file)?;
        b.push(b'\n');
        b
    }));
    for r in &file.ranking {
        println!("{:>3}  {:<16} info_star={:.6} gamma_star={:.6}", r.rank, r.candidate, r.summary.info_star, r.summary.gamma_star);
    }
    for f in &result.failed {
        eprintln!("failed {}: {}", f.candidate, f.error);
    }
    let written = finish(out, command, cfg, art)?;
    if result.ranking.is_empty() {
        return Err(asc_core::AscError::Config("every candidate failed".into()).into());
    }
    Ok(written)
}

#[derive(Serialize)]
struct SimPoint {
    rate_bits: f64,
    m: usize,
    gamma: f64,
    trials: usize,
    errors: usize,
    p_hat: f64,
    ci_low: f64,
    ci_high: f64,
    half_width: f64,
    bound: f64,
    mean_info: f64,
    /// `p_hat <= bound + half_width`, or the bound is vacuous.
    consistent: bool,
}

#[derive(Serialize)]
struct SimSummary {
    points: Vec<SimPoint>,
    all_consistent: bool,
}

#[derive(Serialize)]
struct SimResolved {
    spec: MixtureSpec,
    codebook_seeds: Vec<u64>,
    simulation: SimulationConfig,
}

fn simulate(command: &Command, a: &SimulateArgs, out: &Path) -> Result<Vec<PathBuf>> {
    let spec = mixture(&a.mixture, derive_seed(a.seed, &[0]));
    spec.validate()?;
    let sim = SimulationConfig { cost: a.cost, k: a.k, trials: a.trials, seed: derive_seed(a.seed, &[2]), budget: a.budget, nsigma: a.nsigma };
    let codebook_seeds: Vec<u64> = a.rate.iter().map(|r| derive_seed(a.seed, &[1, r.to_bits()])).collect();

    let mut csv = String::from("rate_bits,m,gamma,trial,sent,decoded,correct,top1,top2\n");
    let mut points = Vec::new();
    for (&rate, &cb_seed) in a.rate.iter().zip(&codebook_seeds) {
        let codebook = generate_codebook(spec.n, rate, cb_seed, a.max_codewords)?;
        for r in error_rate_grid(&codebook, &spec, &a.gamma, &sim)? {
            for t in &r.records {
                csv.push_str(&format!(
                    "{:?},{},{:?},{},{},{},{},{},{}\n",
                    rate, r.m, r.gamma, t.trial, t.sent, t.decoded, t.correct, t.top1, t.top2
                ));
            }
            let half_width = r.half_width();
            points.push(SimPoint {
                rate_bits: rate,
                m: r.m,
                gamma: r.gamma,
                trials: r.trials,
                errors: r.errors,
                p_hat: r.p_hat,
                ci_low: r.interval.0,
                ci_high: r.interval.1,
                half_width,
                bound: r.bound,
                mean_info: r.mean_info,
                consistent: r.bound >= 1.0 || r.p_hat <= r.bound + half_width,
            });
        }
    }
    for p in &points {
        println!(
            "rate={:.4} m={:<5} gamma={:<8} p_hat={:.4} [{:.4}, {:.4}] bound={:.4}{}",
            p.rate_bits,
            p.m,
            p.gamma,
            p.p_hat,
            p.ci_low,
            p.ci_high,
            p.bound,
            if p.consistent { "" } else { "  VIOLATION" }
        );
    }
    let all_consistent = points.iter().all(|p| p.consistent);
    let mut art = Artifacts::new();
    art.add("trials.csv", csv.into_bytes());
    art.add_json("summary.json", &SimSummary { points, all_consistent })?;
    let written = finish(out, command, SimResolved { spec, codebook_seeds, simulation: sim }, art)?;
    std::io::stdout().flush()?;
    Ok(written)
}
