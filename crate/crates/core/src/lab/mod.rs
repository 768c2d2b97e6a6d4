//! Experiment manifests, the content-addressed result store, operation
//! dispatch for the `lab` binary and the acceptance runner.
//!
//! A manifest names an operation, a model file with the SHA-256 of its
//! bytes, the operation's parameters and a seed. [`run`] executes it and
//! returns a [`ResultRecord`]; [`run_and_store`] also writes the record,
//! one CSV per table and any binary attachment under
//! `<store root>/<manifest hash>/`.

pub mod accept;
mod manifest;
pub mod ops;
mod store;

pub use accept::{accept, criterion, AcceptOptions, AcceptSummary, CriterionReport, Suite};
pub use manifest::{ExperimentManifest, ModelRef, ResultRecord, TOOL_VERSION};
pub use ops::{execute, run, run_and_store, RunOutput};
pub use store::{ResultStore, RESULT_DIR_ENV};

use crate::error::Result;
use crate::model::ModelSpec;

const SHIPPED: [(&str, &str); 8] = [
    ("feller", include_str!("../../models/feller.json")),
    ("feller_c2", include_str!("../../models/feller_c2.json")),
    ("symmetric2", include_str!("../../models/symmetric2.json")),
    ("three_type", include_str!("../../models/three_type.json")),
    ("atoms", include_str!("../../models/atoms.json")),
    (
        "log_tail_1_5",
        include_str!("../../models/log_tail_1_5.json"),
    ),
    ("log_tail_2", include_str!("../../models/log_tail_2.json")),
    (
        "log_tail_2_5",
        include_str!("../../models/log_tail_2_5.json"),
    ),
];

/// The model files under `models/`, parsed.
pub fn shipped_models() -> Result<Vec<(&'static str, ModelSpec)>> {
    SHIPPED
        .iter()
        .map(|(name, text)| Ok((*name, ModelSpec::from_json(text)?)))
        .collect()
}
