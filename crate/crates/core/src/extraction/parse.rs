//! Decoding of `<activities>` responses and re-serialization of items.

use std::fmt::Write as _;

use quick_xml::escape::escape;

use super::xml::{parse_element, Element};
use super::{ActivityItem, CategoryRef, PageNumber};
use crate::taxonomy::AspectId;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("no activities block found in response")]
    NoActivitiesBlock,
    #[error("activities block is not well-formed XML: {0}")]
    Malformed(String),
    #[error("activity {ordinal}: missing required field {field}")]
    MissingField { ordinal: usize, field: &'static str },
    #[error("activity {ordinal}: {field} is not numeric ({value:?})")]
    NotNumeric {
        ordinal: usize,
        field: &'static str,
        value: String,
    },
    #[error("activity {ordinal}: {field} has invalid category id {value:?}")]
    BadCategoryId {
        ordinal: usize,
        field: &'static str,
        value: String,
    },
}

/// Positions where an `<activities` element starts (followed by `>`, `/` or
/// whitespace).
fn block_starts(text: &str) -> impl Iterator<Item = usize> + '_ {
    text.match_indices("<activities").filter_map(move |(i, m)| {
        match text[i + m.len()..].chars().next() {
            Some('>') | Some('/') => Some(i),
            Some(c) if c.is_whitespace() => Some(i),
            _ => None,
        }
    })
}

/// Finds the first well-formed `<activities>` block anywhere in `response`
/// and decodes its `<activity>` children. Prose and code fences around the
/// block are ignored.
pub fn parse_extraction(response: &str) -> Result<Vec<ActivityItem>, ParseError> {
    let mut first_syntax_error = None;
    for start in block_starts(response) {
        match parse_element(&response[start..]) {
            Ok((block, _)) => {
                return block
                    .children_named("activity")
                    .enumerate()
                    .map(|(i, el)| decode_activity(el, i + 1))
                    .collect();
            }
            Err(e) => {
                first_syntax_error.get_or_insert(e.0);
            }
        }
    }
    Err(match first_syntax_error {
        Some(msg) => ParseError::Malformed(msg),
        None => ParseError::NoActivitiesBlock,
    })
}

fn text_of(el: &Element) -> String {
    el.text.trim().to_string()
}

fn required(el: &Element, ordinal: usize, field: &'static str) -> Result<String, ParseError> {
    el.child(field)
        .map(text_of)
        .ok_or(ParseError::MissingField { ordinal, field })
}

fn number(el: &Element, ordinal: usize, field: &'static str) -> Result<f64, ParseError> {
    let raw = required(el, ordinal, field)?;
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(ParseError::NotNumeric {
            ordinal,
            field,
            value: raw,
        }),
    }
}

fn category_ref(
    el: &Element,
    ordinal: usize,
    field: &'static str,
) -> Result<Option<CategoryRef>, ParseError> {
    let raw = el
        .attr("id")
        .map(str::to_string)
        .unwrap_or_else(|| text_of(el));
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(None);
    }
    let id: AspectId = raw.parse().map_err(|_| ParseError::BadCategoryId {
        ordinal,
        field,
        value: raw.to_string(),
    })?;
    Ok(Some(CategoryRef {
        id,
        name: el.attr("name").unwrap_or_default().trim().to_string(),
    }))
}

fn truthy(s: &str) -> bool {
    matches!(
        s.trim().to_ascii_lowercase().as_str(),
        "yes" | "true" | "1"
    )
}

fn decode_activity(el: &Element, ordinal: usize) -> Result<ActivityItem, ParseError> {
    let title = required(el, ordinal, "title")?;
    let description = required(el, ordinal, "description")?;
    let page_number = el
        .child("page_number")
        .map(|p| PageNumber::parse(&p.text))
        .unwrap_or(PageNumber::Unknown);

    let excerpts = match el.child("excerpts") {
        Some(ex) if ex.children_named("excerpt").next().is_some() => ex
            .children_named("excerpt")
            .map(text_of)
            .filter(|s| !s.is_empty())
            .collect(),
        Some(ex) => {
            let t = text_of(ex);
            if t.is_empty() {
                Vec::new()
            } else {
                vec![t]
            }
        }
        None => Vec::new(),
    };

    let mut categories = Vec::new();
    for c in el.children_named("mapped_category") {
        match category_ref(c, ordinal, "mapped_category")? {
            Some(r) => categories.push(r),
            None => {
                return Err(ParseError::BadCategoryId {
                    ordinal,
                    field: "mapped_category",
                    value: String::new(),
                })
            }
        }
    }
    if categories.is_empty() {
        return Err(ParseError::MissingField {
            ordinal,
            field: "mapped_category",
        });
    }
    let mapped_category = categories.remove(0);

    let extent_score = number(el, ordinal, "extent_score")?;
    let confidence = number(el, ordinal, "confidence")?;
    let reasoning = el.child("reasoning").map(text_of).unwrap_or_default();
    let ambiguous = el
        .child("ambiguous")
        .map(|a| match a.attr("true") {
            Some(v) => truthy(v),
            None => truthy(&a.text),
        })
        .unwrap_or(false);
    let alternative_category = match el.child("alternative_category") {
        Some(a) => category_ref(a, ordinal, "alternative_category")?,
        None => None,
    };

    Ok(ActivityItem {
        title,
        description,
        page_number,
        excerpts,
        mapped_category,
        extra_categories: categories,
        extent_score,
        confidence,
        reasoning,
        ambiguous,
        alternative_category,
    })
}

/// Serializes items as an `<activities>` block in the response format.
pub fn activities_to_xml<'a>(items: impl IntoIterator<Item = &'a ActivityItem>) -> String {
    let mut out = String::from("<activities>\n");
    for item in items {
        write_activity(&mut out, item);
    }
    out.push_str("</activities>");
    out
}

fn write_activity(out: &mut String, item: &ActivityItem) {
    let e = |s: &str| escape(s).into_owned();
    out.push_str("  <activity>\n");
    let _ = writeln!(out, "    <title>{}</title>", e(&item.title));
    let _ = writeln!(out, "    <description>{}</description>", e(&item.description));
    let _ = writeln!(out, "    <page_number>{}</page_number>", item.page_number);
    out.push_str("    <excerpts>\n");
    for ex in &item.excerpts {
        let _ = writeln!(out, "      <excerpt>{}</excerpt>", e(ex));
    }
    out.push_str("    </excerpts>\n");
    for c in std::iter::once(&item.mapped_category).chain(&item.extra_categories) {
        let _ = writeln!(
            out,
            "    <mapped_category id=\"{}\" name=\"{}\"/>",
            c.id,
            e(&c.name)
        );
    }
    let _ = writeln!(out, "    <extent_score>{}</extent_score>", item.extent_score);
    let _ = writeln!(out, "    <confidence>{}</confidence>", item.confidence);
    let _ = writeln!(out, "    <reasoning>{}</reasoning>", e(&item.reasoning));
    let _ = writeln!(
        out,
        "    <ambiguous true=\"{}\"/>",
        if item.ambiguous { "yes" } else { "no" }
    );
    if let Some(alt) = &item.alternative_category {
        let _ = writeln!(
            out,
            "    <alternative_category id=\"{}\" name=\"{}\"/>",
            alt.id,
            e(&alt.name)
        );
    }
    out.push_str("  </activity>\n");
}
