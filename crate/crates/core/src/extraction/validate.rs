//! Content rules for extracted activities.

use crate::diagnostics::{Finding, Location, Rule};
use crate::taxonomy::Taxonomy;

use super::ActivityItem;

/// Below this mapping confidence an item must be flagged ambiguous and carry
/// an alternative category.
pub const AMBIGUITY_THRESHOLD: f64 = 0.6;

/// How much of an excerpt the reasoning must quote to count as citing it.
const CITATION_PREFIX_CHARS: usize = 24;

pub fn validate_extraction(items: &[ActivityItem], taxonomy: &Taxonomy) -> Vec<Finding> {
    let mut findings = Vec::new();
    for (i, item) in items.iter().enumerate() {
        let at = Location::Activity(i + 1);
        if !item.extra_categories.is_empty() {
            let ids: Vec<String> = std::iter::once(&item.mapped_category)
                .chain(&item.extra_categories)
                .map(|c| c.id.to_string())
                .collect();
            findings.push(Finding::error(
                Rule::MultiLabel,
                at,
                format!("mapped to {} categories ({}); exactly one is allowed", ids.len(), ids.join(", ")),
            ));
        }
        if !taxonomy.contains(item.mapped_category.id) {
            findings.push(Finding::error(
                Rule::UnknownCategory,
                at,
                format!("mapped_category id {} is not in the taxonomy", item.mapped_category.id),
            ));
        }
        let e = item.extent_score;
        if e.fract() != 0.0 || !(1.0..=5.0).contains(&e) {
            findings.push(Finding::error(
                Rule::ExtentOutOfRange,
                at,
                format!("extent_score {e} is not an integer in 1..=5"),
            ));
        }
        if !(0.0..=1.0).contains(&item.confidence) {
            findings.push(Finding::error(
                Rule::ConfidenceOutOfRange,
                at,
                format!("confidence {} is outside [0.0, 1.0]", item.confidence),
            ));
        }
        if item.excerpts.iter().all(|x| x.trim().is_empty()) {
            findings.push(Finding::error(Rule::MissingExcerpts, at, "no supporting excerpt"));
        }
        if item.reasoning.trim().is_empty() {
            findings.push(Finding::error(Rule::MissingReasoning, at, "reasoning is empty"));
        } else if !item.excerpts.is_empty() && !cites_excerpt(&item.reasoning, &item.excerpts) {
            findings.push(Finding::info(
                Rule::ReasoningCitesNoExcerpt,
                at,
                "reasoning does not quote any excerpt",
            ));
        }
        if item.confidence < AMBIGUITY_THRESHOLD
            && (!item.ambiguous || item.alternative_category.is_none())
        {
            let missing = match (item.ambiguous, item.alternative_category.is_some()) {
                (false, false) => "ambiguous flag and alternative_category",
                (false, true) => "ambiguous flag",
                _ => "alternative_category",
            };
            findings.push(Finding::warning(
                Rule::AmbiguityRule,
                at,
                format!(
                    "confidence {} < {AMBIGUITY_THRESHOLD} but {missing} missing",
                    item.confidence
                ),
            ));
        }
        if let Some(alt) = &item.alternative_category {
            if !taxonomy.contains(alt.id) {
                findings.push(Finding::warning(
                    Rule::UnknownCategory,
                    at,
                    format!("alternative_category id {} is not in the taxonomy", alt.id),
                ));
            }
        }
    }
    findings
}

fn cites_excerpt(reasoning: &str, excerpts: &[String]) -> bool {
    let hay = reasoning.to_lowercase();
    excerpts.iter().any(|ex| {
        let probe: String = ex.trim().chars().take(CITATION_PREFIX_CHARS).collect();
        !probe.is_empty() && hay.contains(&probe.to_lowercase())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::Severity;
    use crate::extraction::{CategoryRef, PageNumber};
    use crate::taxonomy::builtin_taxonomy;

    fn item() -> ActivityItem {
        ActivityItem {
            title: "t".into(),
            description: "d".into(),
            page_number: PageNumber::Page(4),
            excerpts: vec!["we have hired technical experts".into()],
            mapped_category: CategoryRef { id: 12, name: "Human Capital Investment and Education".into() },
            extra_categories: vec![],
            extent_score: 4.0,
            confidence: 0.8,
            reasoning: "Quoted: we have hired technical experts".into(),
            ambiguous: false,
            alternative_category: None,
        }
    }

    fn rules(items: &[ActivityItem]) -> Vec<(Severity, Rule)> {
        validate_extraction(items, &builtin_taxonomy())
            .into_iter()
            .map(|f| (f.severity, f.rule))
            .collect()
    }

    #[test]
    fn conforming_item_has_no_findings() {
        assert!(rules(&[item()]).is_empty());
    }

    #[test]
    fn multi_label_is_error() {
        let mut it = item();
        it.extra_categories.push(CategoryRef { id: 7, name: String::new() });
        assert_eq!(rules(&[it]), vec![(Severity::Error, Rule::MultiLabel)]);
    }

    #[test]
    fn low_confidence_without_ambiguity_warns() {
        let mut it = item();
        it.confidence = 0.5;
        assert_eq!(rules(&[it.clone()]), vec![(Severity::Warning, Rule::AmbiguityRule)]);
        it.ambiguous = true;
        it.alternative_category = Some(CategoryRef { id: 5, name: String::new() });
        assert!(rules(&[it]).is_empty());
    }

    #[test]
    fn bounds_and_missing_content() {
        let mut it = item();
        it.extent_score = 6.0;
        it.confidence = 1.2;
        it.excerpts.clear();
        it.reasoning = " ".into();
        let got = rules(&[it]);
        for r in [
            Rule::ExtentOutOfRange,
            Rule::ConfidenceOutOfRange,
            Rule::MissingExcerpts,
            Rule::MissingReasoning,
        ] {
            assert!(got.contains(&(Severity::Error, r)), "{r} missing from {got:?}");
        }
        let mut frac = item();
        frac.extent_score = 3.5;
        assert_eq!(rules(&[frac]), vec![(Severity::Error, Rule::ExtentOutOfRange)]);
    }

    #[test]
    fn unknown_category_and_uncited_reasoning() {
        let mut it = item();
        it.mapped_category.id = 16;
        it.reasoning = "Because it is about people.".into();
        assert_eq!(
            rules(&[it]),
            vec![
                (Severity::Error, Rule::UnknownCategory),
                (Severity::Info, Rule::ReasoningCitesNoExcerpt)
            ]
        );
    }

    #[test]
    fn findings_point_at_activity_ordinal() {
        let mut bad = item();
        bad.extent_score = 0.0;
        let f = validate_extraction(&[item(), bad], &builtin_taxonomy());
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].location, Location::Activity(2));
    }
}
