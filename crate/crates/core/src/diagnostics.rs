//! Validation findings shared by the extraction and diff-table validators.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::taxonomy::AspectId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warning,
    Error,
}

/// The rule a finding reports on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    // activity extraction
    MultiLabel,
    UnknownCategory,
    ExtentOutOfRange,
    ConfidenceOutOfRange,
    MissingExcerpts,
    MissingReasoning,
    AmbiguityRule,
    ReasoningCitesNoExcerpt,
    // diff table
    ScoreOutOfRange,
    UnknownScoreMismatch,
    DeltaInconsistency,
    MissingNotesKey,
    RawLengthMismatch,
    NullPropagation,
    UnknownFlagMismatch,
}

impl Rule {
    pub fn code(self) -> &'static str {
        match self {
            Rule::MultiLabel => "multi-label",
            Rule::UnknownCategory => "unknown-category",
            Rule::ExtentOutOfRange => "extent-out-of-range",
            Rule::ConfidenceOutOfRange => "confidence-out-of-range",
            Rule::MissingExcerpts => "missing-excerpts",
            Rule::MissingReasoning => "missing-reasoning",
            Rule::AmbiguityRule => "ambiguity-rule",
            Rule::ReasoningCitesNoExcerpt => "reasoning-cites-no-excerpt",
            Rule::ScoreOutOfRange => "score-out-of-range",
            Rule::UnknownScoreMismatch => "unknown-score-mismatch",
            Rule::DeltaInconsistency => "delta-inconsistency",
            Rule::MissingNotesKey => "missing-notes-key",
            Rule::RawLengthMismatch => "raw-length-mismatch",
            Rule::NullPropagation => "null-propagation",
            Rule::UnknownFlagMismatch => "unknown-flag-mismatch",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// What a finding is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    /// 1-based activity ordinal within a response.
    Activity(usize),
    Aspect(AspectId),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Activity(n) => write!(f, "activity {n}"),
            Location::Aspect(id) => write!(f, "aspect {id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub rule: Rule,
    pub location: Location,
    pub message: String,
}

impl Finding {
    pub fn error(rule: Rule, location: Location, message: impl Into<String>) -> Self {
        Self::new(Severity::Error, rule, location, message)
    }

    pub fn warning(rule: Rule, location: Location, message: impl Into<String>) -> Self {
        Self::new(Severity::Warning, rule, location, message)
    }

    pub fn info(rule: Rule, location: Location, message: impl Into<String>) -> Self {
        Self::new(Severity::Info, rule, location, message)
    }

    fn new(
        severity: Severity,
        rule: Rule,
        location: Location,
        message: impl Into<String>,
    ) -> Self {
        Self {
            severity,
            rule,
            location,
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Info => "INFO",
            Severity::Warning => "WARNING",
            Severity::Error => "ERROR",
        };
        write!(f, "{sev} {} [{}]: {}", self.rule, self.location, self.message)
    }
}

pub fn has_errors(findings: &[Finding]) -> bool {
    findings.iter().any(Finding::is_error)
}
