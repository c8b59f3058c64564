//! On-disk formats. Complex entries are `[re, im]` pairs, matrices row-major.

use crate::Failure;
use discord_gate::linalg::{self, ComplexMatrix, C64};
use discord_gate::states::BipartiteState;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub type EncodedMatrix = Vec<Vec<[f64; 2]>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateFile {
    pub dim_s: usize,
    pub dim_b: usize,
    pub matrix: EncodedMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<EncodedMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<Metadata>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitaryFile {
    pub matrix: EncodedMatrix,
}

pub fn encode(m: &ComplexMatrix) -> EncodedMatrix {
    (0..m.nrows())
        .map(|r| {
            (0..m.ncols())
                .map(|c| [m[(r, c)].re, m[(r, c)].im])
                .collect()
        })
        .collect()
}

/// Decodes an `n × n` matrix, naming the first malformed row.
pub fn decode(rows: &EncodedMatrix, n: usize, what: &str) -> Result<ComplexMatrix, Failure> {
    if rows.len() != n {
        return Err(Failure::Malformed(format!(
            "{what} has {} rows, expected {n}",
            rows.len()
        )));
    }
    let mut entries = Vec::with_capacity(n * n);
    for (r, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(Failure::Malformed(format!(
                "{what} row {r} has {} entries, expected {n}",
                row.len()
            )));
        }
        entries.extend(row.iter().map(|&[re, im]| C64::new(re, im)));
    }
    linalg::from_rows(n, n, &entries).map_err(|e| Failure::Malformed(format!("{what}: {e}")))
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::Malformed(format!("{}: cannot read: {e}", path.display())))
}

fn parse<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T, Failure> {
    serde_json::from_str(text).map_err(|e| Failure::Malformed(format!("{}: {e}", path.display())))
}

pub fn read_state_file(path: &Path) -> Result<StateFile, Failure> {
    parse(path, &read(path)?)
}

impl StateFile {
    pub fn from_state(state: &BipartiteState, metadata: Option<Metadata>) -> Self {
        let basis = state.basis();
        let is_identity = *basis == linalg::identity(state.ds());
        Self {
            dim_s: state.ds(),
            dim_b: state.db(),
            matrix: encode(state.matrix()),
            basis: (!is_identity).then(|| encode(basis)),
            metadata,
        }
    }

    /// Builds the state; shape problems are malformed input, violated state
    /// invariants are reported separately.
    pub fn to_state(&self) -> Result<BipartiteState, Failure> {
        if self.dim_s == 0 || self.dim_b == 0 {
            return Err(Failure::Malformed(
                "dim_s and dim_b must be positive".into(),
            ));
        }
        let n = self.dim_s * self.dim_b;
        let matrix = decode(&self.matrix, n, "matrix")?;
        let result = match &self.basis {
            Some(b) => {
                let basis = decode(b, self.dim_s, "basis")?;
                BipartiteState::with_basis(matrix, self.dim_s, self.dim_b, basis)
            }
            None => BipartiteState::new(matrix, self.dim_s, self.dim_b),
        };
        result.map_err(|e| Failure::Invariant(e.to_string()))
    }
}

pub fn load_state(path: &Path) -> Result<(StateFile, BipartiteState), Failure> {
    let file = read_state_file(path)?;
    let state = file.to_state()?;
    Ok((file, state))
}

/// Loads a joint unitary of dimension `n`; non-unitary input is an invariant
/// violation.
pub fn load_unitary(path: &Path, n: usize) -> Result<ComplexMatrix, Failure> {
    let file: UnitaryFile = parse(path, &read(path)?)?;
    let u = decode(&file.matrix, n, &format!("{}: unitary", path.display()))?;
    linalg::require_unitary(&u, 1e-10)
        .map_err(|e| Failure::Invariant(format!("{}: {e}", path.display())))?;
    Ok(u)
}
