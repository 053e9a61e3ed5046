//! Structural rules for a parsed diff table.

use crate::diagnostics::{Finding, Location, Rule};
use crate::extraction::ExtractionResult;

use super::table::{AspectDiff, DiffTable};

/// Slack allowed when checking a reported delta against the reported
/// operands, which models round to two decimals.
pub const DELTA_TOLERANCE: f64 = 0.01 + 1e-9;

pub fn validate_diff_table(
    table: &DiffTable,
    a: &ExtractionResult,
    b: &ExtractionResult,
) -> Vec<Finding> {
    let mut findings = Vec::new();
    for cell in table.cells.values() {
        validate_cell(cell, a, b, &mut findings);
    }
    findings
}

pub(crate) fn validate_cell(
    cell: &AspectDiff,
    a: &ExtractionResult,
    b: &ExtractionResult,
    out: &mut Vec<Finding>,
) {
    let at = Location::Aspect(cell.aspect_id);
    let score = cell.comparison_score;
    if !(0..=5).contains(&score) {
        out.push(Finding::error(
            Rule::ScoreOutOfRange,
            at,
            format!("comparison_score_0to5 {score} is not an integer in 0..=5"),
        ));
    }
    if cell.unknown && score != 0 {
        out.push(Finding::error(
            Rule::UnknownScoreMismatch,
            at,
            format!("unknown=true but comparison_score_0to5 is {score}"),
        ));
    }

    check_delta(
        "extent_delta",
        cell.extent_doc_a,
        cell.extent_doc_b,
        cell.extent_delta,
        at,
        out,
    );
    check_delta(
        "confidence_delta",
        cell.confidence_doc_a.map(|c| c.avg),
        cell.confidence_doc_b.map(|c| c.avg),
        cell.confidence_delta,
        at,
        out,
    );

    for (side, extent, raws) in [
        ("A", cell.extent_doc_a, &cell.extent_raw_doc_a),
        ("B", cell.extent_doc_b, &cell.extent_raw_doc_b),
    ] {
        match (extent, raws.is_empty()) {
            (Some(v), true) => out.push(Finding::warning(
                Rule::NullPropagation,
                at,
                format!("extent_doc{side} is {v} but extent_raw_doc{side} is empty; expected null"),
            )),
            (None, false) => out.push(Finding::error(
                Rule::NullPropagation,
                at,
                format!("extent_doc{side} is null but extent_raw_doc{side} has values"),
            )),
            _ => {}
        }
    }
    for (side, conf, raws) in [
        ("A", cell.confidence_doc_a, &cell.confidence_raw_doc_a),
        ("B", cell.confidence_doc_b, &cell.confidence_raw_doc_b),
    ] {
        match (conf.is_some(), raws.is_empty()) {
            (true, true) => out.push(Finding::warning(
                Rule::NullPropagation,
                at,
                format!("confidence_doc{side} is set but confidence_raw_doc{side} is empty"),
            )),
            (false, false) => out.push(Finding::error(
                Rule::NullPropagation,
                at,
                format!("confidence_doc{side} is null but confidence_raw_doc{side} has values"),
            )),
            _ => {}
        }
    }

    if cell.notes.ambiguous.is_none() {
        out.push(Finding::error(Rule::MissingNotesKey, at, "notes.ambiguous is missing"));
    }
    if cell.notes.alternative_category.is_none() {
        out.push(Finding::error(
            Rule::MissingNotesKey,
            at,
            "notes.alternative_category is missing",
        ));
    }

    let empty_a = a.items_for(cell.aspect_id).next().is_none();
    let empty_b = b.items_for(cell.aspect_id).next().is_none();
    if cell.unknown != (empty_a || empty_b) {
        out.push(Finding::error(
            Rule::UnknownFlagMismatch,
            at,
            format!(
                "unknown={} but document A has {} and document B has {} activities here",
                cell.unknown,
                if empty_a { "no" } else { "some" },
                if empty_b { "no" } else { "some" },
            ),
        ));
    }

    for (side, ex, extent_raw, conf_raw) in [
        ("A", a, &cell.extent_raw_doc_a, &cell.confidence_raw_doc_a),
        ("B", b, &cell.extent_raw_doc_b, &cell.confidence_raw_doc_b),
    ] {
        let count = ex.items_for(cell.aspect_id).count();
        for (field, len) in [("extent_raw", extent_raw.len()), ("confidence_raw", conf_raw.len())] {
            if len != count {
                out.push(Finding::error(
                    Rule::RawLengthMismatch,
                    at,
                    format!(
                        "{field}_doc{side} has {len} values but document {} has {count} activities here",
                        ex.document_label
                    ),
                ));
            }
        }
    }
}

fn check_delta(
    field: &str,
    lhs: Option<f64>,
    rhs: Option<f64>,
    delta: Option<f64>,
    at: Location,
    out: &mut Vec<Finding>,
) {
    match (lhs, rhs, delta) {
        (Some(x), Some(y), Some(d)) => {
            let expected = x - y;
            if (d - expected).abs() > DELTA_TOLERANCE {
                out.push(Finding::error(
                    Rule::DeltaInconsistency,
                    at,
                    format!("{field} is {d}, expected {expected:.1}"),
                ));
            }
        }
        (Some(_), Some(_), None) => out.push(Finding::error(
            Rule::NullPropagation,
            at,
            format!("{field} is null although both operands are present"),
        )),
        (_, _, Some(d)) if lhs.is_none() || rhs.is_none() => out.push(Finding::error(
            Rule::NullPropagation,
            at,
            format!("{field} is {d} although an operand is null"),
        )),
        _ => {}
    }
}
