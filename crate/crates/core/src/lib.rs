//! Intention estimation for warehouse workers sharing the floor with robots.
//!
//! A layout is rasterized into an occupancy grid whose skeleton gives a node
//! graph with the goals attached. The [`estimator::Estimator`] associates each
//! observed worker pose with visible nodes, scores the motion against
//! alternative moves using robot-aware goal distances, and decodes the goal
//! the worker is heading to with a hidden Markov model that also has an
//! undecided and an irrational state. [`sim`] drives scripted workers and
//! robots through a layout; [`interface`] reads and writes the file formats.
//!
//! The numeric core is generic over [`scalar::Scalar`]; the aliases below fix
//! it to `f64`.

pub mod floorplan;
pub mod geom;
pub mod scalar;
pub mod voronoi;
pub mod planner;
pub mod validation;
pub mod hmm;
pub mod estimator;
pub mod sim;
pub mod interface;

pub type Estimator64 = estimator::Estimator<f64>;
pub type EstimatorConfig64 = estimator::EstimatorConfig<f64>;
pub type EstimateUpdate64 = estimator::EstimateUpdate<f64>;
pub type HmmParams64 = hmm::HmmParams<f64>;
pub type IntentionState64 = hmm::IntentionState<f64>;
pub type ValidationConfig64 = validation::ValidationConfig<f64>;
