//! Functional comparison of ReLU network layers.
//!
//! The pipeline canonicalizes hidden layers by L2 weight normalization,
//! describes each neuron by the set of probe samples on which it fires,
//! compresses those sets into MinHash sketches and matches neurons across two
//! layers with an optimal assignment. The mean matched cost is the layer
//! distance: 0 for functionally identical layers, 1 for disjoint ones.
//!
//! The network, canonicalization and signature code is generic over the
//! scalar type ([`Real`]); the assignment solver accepts any ordered ring
//! ([`AssignmentCost`]). The aliases below fix the pipeline's choice of `f64`.

pub mod canonicalize;
pub mod error;
pub mod experiment;
pub mod matching;
pub mod model;
pub mod rng;
pub mod sampling;
pub mod scalar;
pub mod signatures;
pub mod sketching;
pub mod validation;

pub use error::{Error, Result};
pub use matching::AssignmentCost;
pub use model::Activation;
pub use scalar::Real;

pub type Layer = model::Layer<f64>;
pub type Network = model::Network<f64>;
pub type ScaleFactors = canonicalize::ScaleFactors<f64>;
pub type SampleSet = sampling::SampleSet<f64>;
pub type CostMatrix = matching::CostMatrix<f64>;
pub type Matching = matching::Matching<f64>;

pub use canonicalize::{canonicalize_network, compensate_next_layer, normalize_layer};
pub use experiment::{
    generate_ellipse_labels, run_replication, train_mlp, ReplicationConfig, ReplicationReport, TrainConfig,
};
pub use matching::{
    build_cost_matrix, compare_layers, compare_layers_with, layer_distance, solve_assignment,
    LayerComparisonReport,
};
pub use model::{load_network, save_network};
pub use sampling::{generate_lhs, generate_uniform, load_samples, save_samples, solve_min_samples, VcQuery};
pub use signatures::{
    activation_frequency, classify_neurons, compute_signature_matrix, exact_jaccard_distance,
    NeuronFilterReport, SignatureMatrix,
};
pub use sketching::{
    build_hash_family, estimate_distance, required_hashes, sketch, sketch_layer, HashFamily, LayerSketches,
    MinHashSketch,
};
pub use validation::{approximation_errors, exact_cost_matrix, matching_agreement};
