//! Models evaluated against other corpora's test writers.

use std::fmt::Write as _;

use super::distances::{compute_distances, DistanceRecord};
use super::sweep::{threshold_sweep, EvalReport};
use crate::data::{pair_image_ids, prepare_images, DatasetIndex, PairSample};
use crate::error::Result;
use crate::model::Model;

/// Preprocesses the images of `pairs` with the model's input size and the
/// given std, then sweeps the resulting distances.
pub fn evaluate_pairs(
    model: &Model,
    index: &DatasetIndex,
    pairs: &[PairSample],
    std: f64,
    step: f64,
) -> Result<(EvalReport, Vec<DistanceRecord>)> {
    let cfg = model.config();
    let images = prepare_images(index, &pair_image_ids(pairs), cfg.input_height, cfg.input_width, std)?;
    let records = compute_distances(model, pairs, &images)?;
    Ok((threshold_sweep(&records, step)?, records))
}

/// A trained model with the normalization std frozen at training time.
pub struct CrossModel {
    pub name: String,
    pub model: Model,
    pub std: f64,
}

/// A corpus and its held-out test pairs.
pub struct CrossSet {
    pub name: String,
    pub index: DatasetIndex,
    pub pairs: Vec<PairSample>,
}

/// Accuracy grid; rows are models (training corpora), columns test corpora.
#[derive(Debug)]
pub struct CrossMatrix {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    /// A failed cell keeps its error message.
    pub cells: Vec<Vec<Result<f64, String>>>,
}

/// Marker written in place of a failed cell.
pub const ERROR_MARKER: &str = "ERR";

impl CrossMatrix {
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.cells[row][col].as_ref().ok().copied()
    }

    /// Tab-separated grid with a header row and a label column.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("train\\test");
        for c in &self.cols {
            let _ = write!(out, "\t{c}");
        }
        out.push('\n');
        for (name, row) in self.rows.iter().zip(&self.cells) {
            out.push_str(name);
            for cell in row {
                match cell {
                    Ok(acc) => {
                        let _ = write!(out, "\t{acc:.4}");
                    }
                    Err(_) => {
                        let _ = write!(out, "\t{ERROR_MARKER}");
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    /// `row, col: message` for every failed cell.
    pub fn errors(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (r, row) in self.cells.iter().enumerate() {
            for (c, cell) in row.iter().enumerate() {
                if let Err(e) = cell {
                    out.push(format!("{}, {}: {e}", self.rows[r], self.cols[c]));
                }
            }
        }
        out
    }
}

/// Evaluates every model on every set; a failing cell does not stop the
/// others.
pub fn cross_dataset_matrix(models: &[CrossModel], sets: &[CrossSet], step: f64) -> CrossMatrix {
    let cells = models
        .iter()
        .map(|m| {
            sets.iter()
                .map(|s| {
                    evaluate_pairs(&m.model, &s.index, &s.pairs, m.std, step)
                        .map(|(report, _)| report.accuracy)
                        .map_err(|e| e.to_string())
                })
                .collect()
        })
        .collect();
    CrossMatrix {
        rows: models.iter().map(|m| m.name.clone()).collect(),
        cols: sets.iter().map(|s| s.name.clone()).collect(),
        cells,
    }
}
