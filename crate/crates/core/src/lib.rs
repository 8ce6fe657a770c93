//! Constrained counterfactual explanations for small feed-forward tabular
//! classifiers.
//!
//! A counterfactual answers "what would have to change for this input to be
//! classified differently". [`search::find_counterfactual`] finds one by
//! gradient descent in input space, restricted to a few columns, to allowed
//! directions, and to valid one-hot and integer encodings.

pub mod data;
pub mod eval;
pub mod forest;
pub mod nnet;
pub mod persist;
pub mod search;

pub use data::{load_dataset, load_schema, Dataset, EncodedSample, Encoder, Record, Schema};
pub use eval::{evaluate, EvalReport, EvalSettings};
pub use forest::{fit_forest, RandomForest};
pub use nnet::{init_network, train, AdamParams, Network, TrainConfig, TrainReport};
pub use search::{
    find_alternatives, find_counterfactual, Explanation, SearchConfig, SearchError, SearchOutcome,
};
