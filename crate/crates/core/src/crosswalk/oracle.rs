//! Local recomputation of the numeric fields a diff table reports.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::extraction::ExtractionResult;
use crate::taxonomy::AspectId;

use super::table::{AspectDiff, ConfidenceSummary, DiffTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Basis {
    WeightedMean,
    SimpleMean,
    Single,
    Absent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepresentativeValue {
    pub value: Option<f64>,
    pub basis: Basis,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RepresentativeError {
    #[error("{extents} extents but {confidences} confidences")]
    LengthMismatch { extents: usize, confidences: usize },
    #[error("confidence {0} is outside [0, 1]")]
    ConfidenceOutOfRange(f64),
}

/// Confidence-weighted mean of extents, falling back to the simple mean when
/// every weight is zero.
pub fn representative_extent(
    extents: &[f64],
    confidences: &[f64],
) -> Result<RepresentativeValue, RepresentativeError> {
    if extents.len() != confidences.len() {
        return Err(RepresentativeError::LengthMismatch {
            extents: extents.len(),
            confidences: confidences.len(),
        });
    }
    if let Some(&c) = confidences.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(RepresentativeError::ConfidenceOutOfRange(c));
    }
    let (value, basis) = match extents {
        [] => (None, Basis::Absent),
        [only] => (Some(*only), Basis::Single),
        _ => {
            let weight: f64 = confidences.iter().sum();
            if weight > 0.0 {
                let num: f64 = extents.iter().zip(confidences).map(|(e, c)| e * c).sum();
                (Some(num / weight), Basis::WeightedMean)
            } else {
                let n = extents.len() as f64;
                (Some(extents.iter().sum::<f64>() / n), Basis::SimpleMean)
            }
        }
    };
    Ok(RepresentativeValue { value, basis })
}

fn confidence_summary(confidences: &[f64]) -> Option<ConfidenceSummary> {
    if confidences.is_empty() {
        return None;
    }
    let avg = confidences.iter().sum::<f64>() / confidences.len() as f64;
    let max = confidences.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some(ConfidenceSummary { avg, max })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    /// For extents and raw lists.
    pub representative: f64,
    /// For confidence avg/max/delta, which models round to two decimals.
    pub rounded: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            representative: 1e-6,
            rounded: 0.05,
        }
    }
}

impl Tolerance {
    pub fn uniform(t: f64) -> Self {
        Self {
            representative: t,
            rounded: t,
        }
    }
}

/// Values the oracle expects for one aspect.
#[derive(Debug, Clone, PartialEq)]
pub struct Recomputed {
    pub unknown: bool,
    pub extent_raw_a: Vec<f64>,
    pub extent_raw_b: Vec<f64>,
    pub confidence_raw_a: Vec<f64>,
    pub confidence_raw_b: Vec<f64>,
    pub extent_a: RepresentativeValue,
    pub extent_b: RepresentativeValue,
    pub extent_delta: Option<f64>,
    pub confidence_a: Option<ConfidenceSummary>,
    pub confidence_b: Option<ConfidenceSummary>,
    pub confidence_delta: Option<f64>,
}

fn raws(ex: &ExtractionResult, aspect: AspectId) -> (Vec<f64>, Vec<f64>) {
    ex.items_for(aspect).map(|i| (i.extent_score, i.confidence)).unzip()
}

fn clamp_unit(v: &[f64]) -> Vec<f64> {
    v.iter().map(|c| c.clamp(0.0, 1.0)).collect()
}

pub fn recompute(aspect: AspectId, a: &ExtractionResult, b: &ExtractionResult) -> Recomputed {
    let (extent_raw_a, confidence_raw_a) = raws(a, aspect);
    let (extent_raw_b, confidence_raw_b) = raws(b, aspect);
    // Items reaching here passed validation, so confidences are in range.
    let rep = |e: &[f64], c: &[f64]| {
        representative_extent(e, &clamp_unit(c)).expect("lengths match by construction")
    };
    let extent_a = rep(&extent_raw_a, &confidence_raw_a);
    let extent_b = rep(&extent_raw_b, &confidence_raw_b);
    let confidence_a = confidence_summary(&confidence_raw_a);
    let confidence_b = confidence_summary(&confidence_raw_b);
    Recomputed {
        unknown: extent_raw_a.is_empty() || extent_raw_b.is_empty(),
        extent_delta: extent_a.value.zip(extent_b.value).map(|(x, y)| x - y),
        confidence_delta: confidence_a.zip(confidence_b).map(|(x, y)| x.avg - y.avg),
        extent_raw_a,
        extent_raw_b,
        confidence_raw_a,
        confidence_raw_b,
        extent_a,
        extent_b,
        confidence_a,
        confidence_b,
    }
}

/// One disagreement between a reported field and its recomputation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleFinding {
    pub aspect: AspectId,
    pub field: String,
    pub reported: Value,
    pub recomputed: Value,
    /// Absolute difference when both sides are numbers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difference: Option<f64>,
    /// Whether repair mode substituted the recomputed value.
    pub repaired: bool,
}

impl fmt::Display for OracleFinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "aspect {} {}: reported {}, recomputed {}",
            self.aspect, self.field, self.reported, self.recomputed
        )?;
        if let Some(d) = self.difference {
            write!(f, " (differs by {d:.4})")?;
        }
        if self.repaired {
            f.write_str(" [repaired]")?;
        }
        Ok(())
    }
}

struct Checker<'a> {
    aspect: AspectId,
    repair: bool,
    out: &'a mut Vec<OracleFinding>,
}

impl Checker<'_> {
    fn push(&mut self, field: &str, reported: Value, recomputed: Value, difference: Option<f64>) {
        self.out.push(OracleFinding {
            aspect: self.aspect,
            field: field.to_string(),
            reported,
            recomputed,
            difference,
            repaired: self.repair,
        });
    }

    fn number(&mut self, field: &str, slot: &mut Option<f64>, expected: Option<f64>, tol: f64) {
        let bad = match (*slot, expected) {
            (Some(r), Some(e)) => ((r - e).abs() > tol).then_some(Some((r - e).abs())),
            (None, None) => None,
            _ => Some(None),
        };
        if let Some(difference) = bad {
            self.push(field, json!(*slot), json!(expected), difference);
            if self.repair {
                *slot = expected;
            }
        }
    }

    fn list(&mut self, field: &str, slot: &mut Vec<f64>, expected: &[f64], tol: f64) {
        let same = slot.len() == expected.len()
            && slot.iter().zip(expected).all(|(r, e)| (r - e).abs() <= tol);
        if !same {
            self.push(field, json!(*slot), json!(expected), None);
            if self.repair {
                *slot = expected.to_vec();
            }
        }
    }

    fn summary(
        &mut self,
        field: &str,
        slot: &mut Option<ConfidenceSummary>,
        expected: Option<ConfidenceSummary>,
        tol: f64,
    ) {
        match (slot.as_mut(), expected) {
            (Some(r), Some(e)) => {
                let mut avg = Some(r.avg);
                let mut max = Some(r.max);
                self.number(&format!("{field}.avg"), &mut avg, Some(e.avg), tol);
                self.number(&format!("{field}.max"), &mut max, Some(e.max), tol);
                r.avg = avg.expect("kept numeric");
                r.max = max.expect("kept numeric");
            }
            (None, None) => {}
            _ => {
                self.push(field, json!(*slot), json!(expected), None);
                if self.repair {
                    *slot = expected;
                }
            }
        }
    }
}

/// Compares one cell against its recomputation; in repair mode the
/// numeric fields, the unknown flag and (for unknown aspects only) the score
/// are overwritten.
pub fn check_cell(
    cell: &mut AspectDiff,
    a: &ExtractionResult,
    b: &ExtractionResult,
    tolerance: Tolerance,
    repair: bool,
) -> Vec<OracleFinding> {
    let r = recompute(cell.aspect_id, a, b);
    let mut out = Vec::new();
    let mut c = Checker {
        aspect: cell.aspect_id,
        repair,
        out: &mut out,
    };
    if cell.unknown != r.unknown {
        c.push("unknown", json!(cell.unknown), json!(r.unknown), None);
        if repair {
            cell.unknown = r.unknown;
        }
    }
    if r.unknown && cell.comparison_score != 0 {
        c.push(
            "comparison_score_0to5",
            json!(cell.comparison_score),
            json!(0),
            None,
        );
        if repair {
            cell.comparison_score = 0;
        }
    }
    let tr = tolerance.representative;
    let tc = tolerance.rounded;
    c.list("extent_raw_docA", &mut cell.extent_raw_doc_a, &r.extent_raw_a, tr);
    c.list("extent_raw_docB", &mut cell.extent_raw_doc_b, &r.extent_raw_b, tr);
    c.list("confidence_raw_docA", &mut cell.confidence_raw_doc_a, &r.confidence_raw_a, tr);
    c.list("confidence_raw_docB", &mut cell.confidence_raw_doc_b, &r.confidence_raw_b, tr);
    c.number("extent_docA", &mut cell.extent_doc_a, r.extent_a.value, tr);
    c.number("extent_docB", &mut cell.extent_doc_b, r.extent_b.value, tr);
    c.number("extent_delta", &mut cell.extent_delta, r.extent_delta, tr);
    c.summary("confidence_docA", &mut cell.confidence_doc_a, r.confidence_a, tc);
    c.summary("confidence_docB", &mut cell.confidence_doc_b, r.confidence_b, tc);
    c.number("confidence_delta", &mut cell.confidence_delta, r.confidence_delta, tc);
    out
}

/// Checks every cell without modifying anything.
pub fn oracle_check(
    table: &DiffTable,
    a: &ExtractionResult,
    b: &ExtractionResult,
    tolerance: Tolerance,
) -> Vec<OracleFinding> {
    table
        .cells
        .values()
        .flat_map(|cell| check_cell(&mut cell.clone(), a, b, tolerance, false))
        .collect()
}

/// Checks every cell and overwrites the mechanical fields in place.
pub fn oracle_repair(
    table: &mut DiffTable,
    a: &ExtractionResult,
    b: &ExtractionResult,
    tolerance: Tolerance,
) -> Vec<OracleFinding> {
    table
        .cells
        .values_mut()
        .flat_map(|cell| check_cell(cell, a, b, tolerance, true))
        .collect()
}
