//! Annotator agreement tables as CSV and Markdown.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::analytics::{fmt3, AgreementSummary};
use crate::taxonomy::{AspectId, Taxonomy};

const NO_VALUE: &str = "n/a";

fn fmt_median(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v}")
    }
}

/// Score, stdev and median cells for one aspect row.
pub fn agreement_row(summary: &AgreementSummary, aspect: AspectId) -> Option<Vec<String>> {
    let a = summary.per_aspect.get(&aspect)?;
    let mut row: Vec<String> = a.scores.iter().map(|s| s.to_string()).collect();
    row.push(a.stdev.map_or_else(|| NO_VALUE.to_string(), fmt3));
    row.push(fmt_median(a.median));
    Some(row)
}

fn aspect_name(taxonomy: &Taxonomy, id: AspectId) -> String {
    taxonomy.get(id).map(|c| c.name_en.clone()).unwrap_or_default()
}

pub fn agreement_csv(summary: &AgreementSummary, taxonomy: &Taxonomy) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_string(), "activity".to_string()];
    header.extend(summary.annotators.iter().map(|a| format!("score_{a}")));
    header.extend(["stdev".to_string(), "median".to_string()]);
    w.write_record(&header).expect("in-memory write");
    for &id in summary.per_aspect.keys() {
        let mut rec = vec![id.to_string(), aspect_name(taxonomy, id)];
        rec.extend(agreement_row(summary, id).expect("key exists"));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

fn md_row(cells: &[String]) -> String {
    format!("| {} |\n", cells.join(" | "))
}

fn md_rule(n: usize) -> String {
    format!("|{}\n", "---|".repeat(n))
}

pub fn agreement_markdown(summary: &AgreementSummary, taxonomy: &Taxonomy) -> String {
    let mut s = format!("# Annotator agreement for pair {}\n\n", summary.pair_id);
    let mut header = vec!["ID".to_string(), "Activity item".to_string()];
    header.extend(summary.annotators.iter().cloned());
    header.extend(["Std. dev.".to_string(), "Median".to_string()]);
    s.push_str(&md_row(&header));
    s.push_str(&md_rule(header.len()));
    for &id in summary.per_aspect.keys() {
        let mut rec = vec![id.to_string(), aspect_name(taxonomy, id)];
        rec.extend(agreement_row(summary, id).expect("key exists"));
        s.push_str(&md_row(&rec));
    }

    s.push_str("\n## Human vs. model mean absolute difference\n\n");
    if summary.per_model_mad.is_empty() {
        s.push_str("_No model scores are available for this pair, so the MAD tables are omitted._\n");
        return s;
    }
    let methods: BTreeSet<&str> = summary.per_model_mad.iter().map(|m| m.method_key.as_str()).collect();
    let by_annotator: BTreeMap<(&str, &str), f64> = summary
        .per_model_mad
        .iter()
        .map(|m| ((m.annotator_id.as_str(), m.method_key.as_str()), m.value))
        .collect();
    let mut header = vec!["Annotator".to_string()];
    header.extend(methods.iter().map(|m| m.to_string()));
    s.push_str(&md_row(&header));
    s.push_str(&md_rule(header.len()));
    for a in &summary.annotators {
        let mut rec = vec![a.clone()];
        rec.extend(methods.iter().map(|m| {
            by_annotator.get(&(a.as_str(), *m)).map_or_else(|| NO_VALUE.to_string(), |v| fmt3(*v))
        }));
        s.push_str(&md_row(&rec));
    }

    if !summary.per_aspect_mad.is_empty() {
        s.push_str("\n### Per aspect, averaged over annotators\n\n");
        let by_aspect: BTreeMap<(AspectId, &str), f64> = summary
            .per_aspect_mad
            .iter()
            .map(|m| ((m.aspect, m.method_key.as_str()), m.value))
            .collect();
        let aspects: BTreeSet<AspectId> = summary.per_aspect_mad.iter().map(|m| m.aspect).collect();
        let mut header = vec!["ID".to_string()];
        header.extend(methods.iter().map(|m| m.to_string()));
        s.push_str(&md_row(&header));
        s.push_str(&md_rule(header.len()));
        for id in aspects {
            let mut rec = vec![id.to_string()];
            rec.extend(methods.iter().map(|m| {
                by_aspect.get(&(id, *m)).map_or_else(|| NO_VALUE.to_string(), |v| fmt3(*v))
            }));
            s.push_str(&md_row(&rec));
        }
    }
    let _ = writeln!(s);
    s
}
