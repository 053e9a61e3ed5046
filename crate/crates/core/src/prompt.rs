//! Prompt packs and slot rendering.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptPack {
    #[default]
    En,
    Ja,
}

impl PromptPack {
    pub fn id(self) -> &'static str {
        match self {
            PromptPack::En => "en",
            PromptPack::Ja => "ja",
        }
    }

    pub fn extraction_template(self) -> &'static str {
        match self {
            PromptPack::En => include_str!("../data/prompts/en/extraction.xml"),
            PromptPack::Ja => include_str!("../data/prompts/ja/extraction.xml"),
        }
    }

    pub fn diff_template(self) -> &'static str {
        match self {
            PromptPack::En => include_str!("../data/prompts/en/diff.poml"),
            PromptPack::Ja => include_str!("../data/prompts/ja/diff.poml"),
        }
    }
}

impl fmt::Display for PromptPack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown prompt pack {0:?} (expected en or ja)")]
pub struct UnknownPack(pub String);

impl FromStr for PromptPack {
    type Err = UnknownPack;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "en" => Ok(PromptPack::En),
            "ja" => Ok(PromptPack::Ja),
            other => Err(UnknownPack(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RenderError {
    #[error("template slot {{{{{0}}}}} has no value")]
    MissingSlot(String),
    #[error("template slot {{{{{0}}}}} is not closed")]
    Unclosed(String),
}

/// Substitutes `{{NAME}}` slots in a single left-to-right pass, so slot-like
/// text inside substituted values is never expanded.
pub fn render(template: &str, slots: &BTreeMap<&str, &str>) -> Result<String, RenderError> {
    let extra: usize = slots.values().map(|v| v.len()).sum();
    let mut out = String::with_capacity(template.len() + extra);
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find("}}")
            .ok_or_else(|| RenderError::Unclosed(after.chars().take(20).collect()))?;
        let name = &after[..end];
        let value = slots
            .get(name)
            .ok_or_else(|| RenderError::MissingSlot(name.to_string()))?;
        out.push_str(value);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pass_substitution() {
        let mut slots = BTreeMap::new();
        slots.insert("A", "{{B}}");
        slots.insert("B", "b");
        assert_eq!(render("x {{A}} {{B}} y", &slots).unwrap(), "x {{B}} b y");
    }

    #[test]
    fn missing_and_unclosed_slots() {
        let slots = BTreeMap::new();
        assert_eq!(
            render("{{NOPE}}", &slots),
            Err(RenderError::MissingSlot("NOPE".into()))
        );
        assert!(matches!(render("{{OPEN", &slots), Err(RenderError::Unclosed(_))));
    }

    #[test]
    fn packs_carry_expected_slots() {
        for pack in [PromptPack::En, PromptPack::Ja] {
            let ext = pack.extraction_template();
            for slot in ["{{DOCUMENT_ID}}", "{{DOCUMENT_BODY}}", "{{AMAIS_CATEGORIES}}"] {
                assert_eq!(ext.matches(slot).count(), 1, "{pack} {slot}");
            }
            let diff = pack.diff_template();
            for slot in ["{{DOCUMENT_A_XML}}", "{{DOCUMENT_B_XML}}", "{{AMAIS_CATEGORIES}}"] {
                assert_eq!(diff.matches(slot).count(), 1, "{pack} {slot}");
            }
        }
        assert_eq!("ja".parse::<PromptPack>().unwrap(), PromptPack::Ja);
        assert!("fr".parse::<PromptPack>().is_err());
    }
}
