//! Concrete local protocols.

mod coincidence;
pub mod controls;
mod detection;
mod guessing;
mod partition;
mod sign;

use std::sync::Arc;

pub use coincidence::{coincidence_embedding, CoincidenceEmbedding, CoincidenceParams};
pub use detection::{
    asymmetric_variant2, one_sided_detection, role_mixture_symmetric, OneSidedDetection,
    RoleMixture,
};
pub use guessing::{finite_guessing, FiniteGuessParams, FiniteGuessing};
pub use partition::{
    partition_guessing, CellMap, GridPartition, PartitionGuessing, PartitionParams,
    MAX_REGISTERED_CELLS,
};
pub use sign::{deterministic_sign, sign_model_correlation, DeterministicSign};

use crate::protocol::Model;

/// Default window and spread for the shipped coincidence embedding.
pub const DEFAULT_WINDOW: f64 = 1.0;
pub const DEFAULT_SPREAD: f64 = 1.0;

/// Every shipped model with default parameters, negative controls excluded.
pub fn shipped_models() -> Vec<Arc<dyn Model>> {
    vec![
        Arc::new(deterministic_sign()),
        Arc::new(finite_guessing(FiniteGuessParams::planar_quad()).expect("valid defaults")),
        Arc::new(partition_guessing(PartitionParams::default()).expect("valid defaults")),
        Arc::new(one_sided_detection()),
        Arc::new(role_mixture_symmetric()),
        Arc::new(asymmetric_variant2()),
        Arc::new(
            coincidence_embedding(CoincidenceParams {
                inner: Arc::new(one_sided_detection()),
                c: DEFAULT_WINDOW,
                spread: DEFAULT_SPREAD,
            })
            .expect("valid defaults"),
        ),
    ]
}
