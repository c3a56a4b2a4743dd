//! Scenario runner: reads a TOML or JSON configuration, evaluates one task
//! of the `pathdev` library over a parameter grid and writes CSV plus a JSON
//! sidecar.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod output;
pub mod runner;

pub use config::{load_config, parse_config, Overrides, ScenarioConfig};
pub use error::CliError;
pub use output::{to_csv, write_record, OUTPUT_DIR_ENV};
pub use runner::{run_scenario, RunOutcome, RunRecord, Table};

use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct CatalogListing {
    pub name: String,
    pub dim: Option<usize>,
    pub params: Vec<String>,
    pub coordinates: String,
    pub description: String,
}

/// Built-in manifolds with their parameters.
pub fn list_catalog() -> Vec<CatalogListing> {
    pathdev::catalog::catalog()
        .into_iter()
        .map(|e| CatalogListing {
            name: e.name.to_string(),
            dim: e.dim,
            params: e.parameter.map(|p| vec![p.to_string()]).unwrap_or_default(),
            coordinates: e.coordinates.to_string(),
            description: e.description.to_string(),
        })
        .collect()
}

/// Task kinds accepted in `task.kind`.
pub const TASKS: [&str; 6] = ["transport", "displacement", "deviation", "jacobi", "equation_of_motion", "identity_check"];
