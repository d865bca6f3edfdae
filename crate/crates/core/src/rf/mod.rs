//! Algorithmic RF path: received power, least-squares multilateration,
//! brute-force anchor labeling, classifier-chain selection, and RF
//! feature composition.

pub mod features;
pub mod power;
pub mod selector;
pub mod solver;

pub use features::{compose_rf_features, RfFeature};
pub use power::received_power;
pub use selector::{
    label_best_anchors, label_trace, train_anchor_selector, AnchorSelectorModel, SelectorSample,
    SelectorTrainConfig, SelectorTraining,
};
pub use solver::{multilaterate, range_objective, MultilaterationResult};
