//! Plain-text formats: header-less numeric CSV for matrices and frames,
//! JSON sidecars for metadata.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::IterationRecord;
use crate::synth::SynthSpec;

/// Parses a header-less CSV of reals, one matrix row per line.
pub fn parse_matrix_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|field| {
                field
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {field:?}: {e}", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("empty matrix".into()));
    }
    let cols = rows[0].len();
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// Header-less CSV with every value in shortest round-trip exponent form.
pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::with_capacity(m.len() * 24);
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Metadata written next to a synthetic frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSidecar {
    pub spec: SynthSpec,
    pub support: Vec<usize>,
}

pub fn checkpoints_to_json(trace: &[IterationRecord]) -> Result<String> {
    Ok(serde_json::to_string_pretty(trace)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_ragged_and_garbage() {
        assert!(parse_matrix_csv("1,2\n3\n").is_err());
        assert!(parse_matrix_csv("1,x\n").is_err());
        assert!(parse_matrix_csv("").is_err());
    }

    #[test]
    fn tolerates_spaces() {
        let m = parse_matrix_csv(" 1, 2\n3 ,4\n").unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(values in proptest::collection::vec(-1e30f64..1e30, 12)) {
            let m = DMatrix::from_row_slice(3, 4, &values);
            prop_assert_eq!(parse_matrix_csv(&matrix_to_csv(&m)).unwrap(), m);
        }
    }
}
