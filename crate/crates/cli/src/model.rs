//! Hamiltonian model files: JSON objects `{"coeffs": [[c00, c01, ...],
//! [c10, ...], ...]}` where `coeffs[k][m]` multiplies `p^k q^m`. Rows must
//! be rectangular.

use crate::{config, CliResult};
use semioverlap_core::PolyHamiltonian;
use serde::Deserialize;
use std::path::Path;

#[derive(Deserialize)]
struct ModelFile {
    coeffs: Vec<Vec<f64>>,
}

pub fn load_model(path: &Path) -> CliResult<PolyHamiltonian> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config(format!("cannot read model {}: {e}", path.display())))?;
    let parsed: ModelFile = serde_json::from_str(&text)
        .map_err(|e| config(format!("model {} is not valid JSON: {e}", path.display())))?;
    PolyHamiltonian::new(parsed.coeffs)
        .map_err(|e| config(format!("model {} is malformed: {e}", path.display())))
}
