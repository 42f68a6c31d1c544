//! Run manifests. Every artifact carries the manifest and the SHA-256 of its
//! canonical JSON, so a table can be traced back to the exact inputs.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::problem::ProblemFile;

pub const SCHEMA: &str = "fb/1";
pub const TOOL: &str = "fbound";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tolerances {
    /// Pass threshold of deterministic checks (residuals, method agreement).
    pub check: f64,
    pub inner_rel_tol: f64,
    pub root_tol: f64,
    pub pointwise_tol: f64,
    pub outer_abs_tol: f64,
    /// Standard errors allowed by the Monte Carlo verdicts.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_sigmas: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarlo {
    pub paths: usize,
    pub step: f64,
    pub seed: u64,
    pub antithetic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub problem: ProblemFile,
    pub r: f64,
    pub boundary: String,
    pub grid: GridSpec,
    pub tolerances: Tolerances,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<MonteCarlo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("manifest serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}
