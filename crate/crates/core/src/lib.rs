//! Approximation set coding for clustering validation.
//!
//! Two samples of the same objects are clustered under a cost function. The
//! approximation set of a sample holds every clustering within `gamma` of the
//! cheapest one; the mutual information between the two samples' sets,
//! maximised over `gamma`, scores how much structure the cost function can
//! reliably extract. Comparing that score across cost functions and cluster
//! counts selects a model.
//!
//! Modules:
//!
//! - [`domain`]: datasets, assignments, the train/test correspondence and
//!   label types.
//! - [`costs`]: k-means and pairwise clustering costs with incremental deltas,
//!   and minimizer search.
//! - [`exact`]: exhaustive enumeration of all `k^n` clusterings.
//! - [`thermo`]: Gibbs sampling and thermodynamic integration for larger
//!   instances.
//! - [`capacity`]: the information curve, optimal precision and model
//!   selection.
//! - [`comms`]: simulation of the permutation coding protocol.
//! - [`datagen`]: synthetic Gaussian mixtures.
//! - [`io`]: CSV readers and writers.

pub mod capacity;
pub mod comms;
pub mod costs;
pub mod datagen;
pub mod domain;
pub mod error;
pub mod exact;
pub mod io;
pub mod math;
pub mod rng;
pub mod thermo;

pub use capacity::{
    capacity_curve, capacity_curve_matched, capacity_curve_with, optimal_gamma, select_model, select_model_matched, CapacityConfig, CapacityCurve, CapacityPoint,
    Candidate, Engine, NsigmaMode, Optimum, Ranking,
};
pub use comms::{error_bound, generate_codebook, permute_dataset, transmit_and_decode, Codebook, TransmissionResult};
pub use costs::{CostFamily, CostFunction, ErmConfig, ErmMode, JointCost, KMeansCost, PairwiseCost};
pub use datagen::{draw_independent_samples, draw_paired_samples, MixtureSpec};
pub use domain::{
    build_correspondence, pushforward, Assignment, Correspondence, Dataset, Dissimilarities, TypeDistribution, Vectors,
};
pub use error::{AscError, Result};
pub use exact::CostTable;
pub use thermo::{FreeEnergyCurve, GibbsConfig};
