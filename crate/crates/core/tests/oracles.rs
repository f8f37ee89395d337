//! Monte-Carlo estimators checked against exhaustive enumeration.

use asc_core::capacity::{capacity_curve, CapacityConfig, Engine, NsigmaMode};
use asc_core::costs::{CostFamily, CostFunction, KMeansCost};
use asc_core::datagen::{draw_paired_samples, MixtureSpec};
use asc_core::domain::{build_correspondence, Correspondence, Dataset};
use asc_core::exact::{self, enumerate_costs, JointTable, DEFAULT_BUDGET};
use asc_core::thermo::{
    auto_beta_grid, estimate_mean_cost, joint_thermo_integrate, solve_beta_for_gamma, thermo_integrate_log_z,
    GibbsConfig,
};

fn instance(seed: u64) -> (Dataset, Dataset) {
    let spec = MixtureSpec { n: 8, k_true: 2, d: 2, separation: 4.0, spread: 1.0, noise_sigma: 0.7, seed, ..Default::default() };
    let (x1, x2, _) = draw_paired_samples(&spec).unwrap();
    (x1, x2)
}

#[test]
fn mean_cost_matches_exact() {
    let (x1, _) = instance(3);
    let cost = KMeansCost::new(&x1, 2).unwrap();
    let table = enumerate_costs(&cost, DEFAULT_BUDGET).unwrap();
    let cfg = GibbsConfig { seed: 4, ..Default::default() };
    for beta in [0.0, 0.05, 0.3, 1.0] {
        let (m, se) = estimate_mean_cost(&cost, beta, &cfg);
        let exact = exact::exact_mean_cost(&table, beta);
        assert!((m - exact).abs() <= 3.0 * se + 1e-9, "beta {beta}: {m} +- {se} vs {exact}");
    }
}

#[test]
fn log_partition_matches_exact_on_derived_grid() {
    for seed in 0..3 {
        let (x1, x2) = instance(seed);
        let corr = build_correspondence(&x1, &x2).unwrap();
        for family in [CostFamily::KMeans, CostFamily::Pairwise] {
            let c1 = family.build(&x1, 2).unwrap();
            let c2 = family.build(&x2, 2).unwrap();
            let t1 = enumerate_costs(&c1, DEFAULT_BUDGET).unwrap();
            let t2 = enumerate_costs(&c2, DEFAULT_BUDGET).unwrap();
            let joint = JointTable::new(&t1, &t2, &corr).unwrap();
            let grid = auto_beta_grid(&c1, &t1.argmin_labels(), 20, seed);
            assert_eq!(grid.len(), 21);
            let cfg = GibbsConfig { beta_grid: grid.clone(), seed, ..Default::default() };
            let z = thermo_integrate_log_z(&c1, &cfg).unwrap();
            let dz = joint_thermo_integrate(&c1, &c2, &corr, &cfg).unwrap();
            assert_eq!(z.points[0].log_z, 8.0 * 2f64.ln());
            assert_eq!(dz.points[0].log_z, 8.0 * 2f64.ln());
            for (j, &beta) in grid.iter().enumerate() {
                let e1 = (z.points[j].log_z - exact::exact_log_partition(&t1, beta)).abs();
                let e2 = (dz.points[j].log_z - joint.log_partition(beta)).abs();
                assert!(e1 <= 0.4 && e2 <= 0.4, "seed {seed} {family} beta {beta}: {e1} {e2}");
            }
            assert!(z.points.windows(2).all(|w| w[1].log_z <= w[0].log_z));
        }
    }
}

#[test]
fn joint_curve_collapses_to_doubled_beta() {
    let (x1, _) = instance(1);
    let cost = KMeansCost::new(&x1, 2).unwrap();
    let t = enumerate_costs(&cost, DEFAULT_BUDGET).unwrap();
    let grid = auto_beta_grid(&cost, &t.argmin_labels(), 12, 0);
    let doubled: Vec<f64> = grid.iter().map(|b| 2.0 * b).collect();
    let joint = joint_thermo_integrate(&cost, &cost, &Correspondence::identity(8), &GibbsConfig {
        beta_grid: grid,
        seed: 1,
        ..Default::default()
    })
    .unwrap();
    let single = thermo_integrate_log_z(&cost, &GibbsConfig { beta_grid: doubled, seed: 2, ..Default::default() }).unwrap();
    for (a, b) in joint.points.iter().zip(&single.points) {
        let sigma = (a.log_z_stderr.powi(2) + b.log_z_stderr.powi(2)).sqrt();
        assert!((a.log_z - b.log_z).abs() <= 3.0 * sigma + 1e-9, "{a:?} vs {b:?}");
    }
}

#[test]
fn calibration_agrees_with_exact_inverse() {
    let (x1, _) = instance(4);
    let cost = KMeansCost::new(&x1, 2).unwrap();
    let t = enumerate_costs(&cost, DEFAULT_BUDGET).unwrap();
    let grid = auto_beta_grid(&cost, &t.argmin_labels(), 25, 0);
    let curve = thermo_integrate_log_z(&cost, &GibbsConfig { beta_grid: grid.clone(), seed: 9, ..Default::default() }).unwrap();
    let top = curve.points[0].mean_cost - t.r_min();
    assert_eq!(solve_beta_for_gamma(&curve, t.r_min(), top).beta, 0.0);
    assert!(solve_beta_for_gamma(&curve, t.r_min(), 0.0).saturated);
    for frac in [0.2, 0.5, 0.8] {
        let gamma = frac * (exact::exact_mean_cost(&t, 0.0) - t.r_min());
        let sampled = solve_beta_for_gamma(&curve, t.r_min(), gamma).beta;
        let exact = exact::beta_for_gamma(&t, gamma);
        // within one grid cell of the exact answer
        let cell = grid.windows(2).find(|w| w[0] <= exact && exact <= w[1]).unwrap();
        let width = cell[1] - cell[0];
        assert!((sampled - exact).abs() <= width, "gamma {gamma}: {sampled} vs {exact} (cell {cell:?})");
    }
}

#[test]
fn zero_cost_curve_is_flat() {
    let x: Dataset = asc_core::Vectors::from_scalars(&[1.0; 6]).unwrap().into();
    let cost = KMeansCost::new(&x, 3).unwrap();
    assert_eq!(cost.evaluate(&[0, 1, 2, 0, 1, 2]), 0.0);
    let curve = thermo_integrate_log_z(&cost, &GibbsConfig { beta_grid: vec![0.0, 0.5, 5.0], ..Default::default() }).unwrap();
    for p in curve.points {
        assert_eq!(p.log_z, 6.0 * 3f64.ln());
        assert_eq!((p.mean_cost, p.stderr), (0.0, 0.0));
    }
}

#[test]
fn sampled_capacity_matches_exact() {
    for seed in [1, 4] {
        let (x1, x2) = instance(seed);
        let exact = capacity_curve(&x1, &x2, CostFamily::KMeans, 2, &CapacityConfig {
            engine: Engine::Exact,
            ground_state: false,
            ..Default::default()
        })
        .unwrap();
        let grid: Vec<f64> = exact.points.iter().map(|p| p.beta).collect();
        let sampled = capacity_curve(&x1, &x2, CostFamily::KMeans, 2, &CapacityConfig {
            engine: Engine::Sampled,
            grid: Some(grid),
            seed,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(sampled.engine, Engine::Sampled);
        assert_eq!(sampled.minimizer, exact.minimizer);
        for (s, e) in sampled.points.iter().zip(&exact.points) {
            assert!((s.info - e.info).abs() <= 0.1, "beta {}: {} vs {}", s.beta, s.info, e.info);
        }
    }
}

#[test]
fn optimum_survives_grid_refinement() {
    let (x1, x2) = instance(1);
    let cfg = CapacityConfig { engine: Engine::Exact, nsigma: NsigmaMode::Multinomial, ground_state: false, ..Default::default() };
    let coarse = capacity_curve(&x1, &x2, CostFamily::KMeans, 2, &cfg).unwrap();
    let grid = coarse.points.iter().map(|p| p.beta).collect::<Vec<_>>();
    let fine: Vec<f64> = std::iter::once(0.0)
        .chain(grid.windows(2).flat_map(|w| (1..=8).map(move |i| w[0] + (w[1] - w[0]) * i as f64 / 8.0)))
        .collect();
    let dense = capacity_curve(&x1, &x2, CostFamily::KMeans, 2, &CapacityConfig { grid: Some(fine), ..cfg }).unwrap();
    let (c, d) = (coarse.optimum(), dense.optimum());
    assert!(c.beta_star > 0.0, "{c:?}");
    assert!(d.info_star >= c.info_star - 1e-12);
    // the coarse optimum lies within a grid cell of the dense one
    let i = grid.iter().position(|&b| b == c.beta_star).unwrap();
    assert!(d.beta_star >= grid[i.saturating_sub(1)] && d.beta_star <= grid[(i + 1).min(grid.len() - 1)], "{c:?} vs {d:?}");
}
