//! Human annotation records and their agreement statistics.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::stats::{mean, median, sample_std};
use super::tensor::ScoreTensor;
use crate::taxonomy::{AspectId, Taxonomy};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub annotator_id: String,
    pub pair_id: String,
    pub scores: BTreeMap<AspectId, i64>,
}

#[derive(Debug, thiserror::Error)]
pub enum AgreementError {
    #[error("annotator id is empty")]
    EmptyAnnotator,
    #[error("annotation is missing a score for aspect {0}")]
    MissingAspect(AspectId),
    #[error("annotation scores aspect {0}, which is not in the taxonomy")]
    UnknownAspect(AspectId),
    #[error("aspect {aspect}: score {score} is outside 0..=5")]
    ScoreOutOfRange { aspect: AspectId, score: i64 },
    #[error("no annotation records")]
    NoRecords,
    #[error("records cover different pairs: {0} and {1}")]
    MixedPairs(String, String),
    #[error("method {method} has no score for pair {pair}, aspect {aspect}")]
    MissingModelScore {
        method: String,
        pair: String,
        aspect: AspectId,
    },
    #[error("pair {0} is not in the score tensor")]
    UnknownPair(String),
    #[error("method {0} is not in the score tensor")]
    UnknownMethod(String),
    #[error("cannot read annotation {path}: {message}")]
    Read { path: String, message: String },
}

impl AnnotationRecord {
    /// Checks that every taxonomy aspect is scored once with a value in 0..=5.
    pub fn validate(&self, taxonomy: &Taxonomy) -> Result<(), AgreementError> {
        if self.annotator_id.trim().is_empty() {
            return Err(AgreementError::EmptyAnnotator);
        }
        if let Some(id) = taxonomy.ids().find(|id| !self.scores.contains_key(id)) {
            return Err(AgreementError::MissingAspect(id));
        }
        for (&aspect, &score) in &self.scores {
            if !taxonomy.contains(aspect) {
                return Err(AgreementError::UnknownAspect(aspect));
            }
            if !(0..=5).contains(&score) {
                return Err(AgreementError::ScoreOutOfRange { aspect, score });
            }
        }
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self, AgreementError> {
        let err = |message: String| AgreementError::Read {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| err(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectAgreement {
    /// Scores in annotator order.
    pub scores: Vec<i64>,
    /// `None` with fewer than two annotators.
    pub stdev: Option<f64>,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMad {
    pub annotator_id: String,
    pub method_key: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementSummary {
    pub pair_id: String,
    pub annotators: Vec<String>,
    pub per_aspect: BTreeMap<AspectId, AspectAgreement>,
    /// Annotator × model MAD over this pair's aspects.
    #[serde(default)]
    pub per_model_mad: Vec<ModelMad>,
    /// Model × aspect MAD averaged over annotators.
    #[serde(default)]
    pub per_aspect_mad: Vec<AspectMad>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectMad {
    pub method_key: String,
    pub aspect: AspectId,
    pub value: f64,
}

impl AgreementSummary {
    /// Fills both MAD layouts from the tensor for this summary's pair.
    pub fn with_model_mad(mut self, records: &[AnnotationRecord], t: &ScoreTensor) -> Self {
        let mine: Vec<AnnotationRecord> = records
            .iter()
            .filter(|r| r.pair_id == self.pair_id)
            .cloned()
            .collect();
        self.per_model_mad = mad_by_annotator(&mine, t);
        self.per_aspect_mad = mad_by_aspect(&mine, t)
            .into_iter()
            .map(|((method_key, _, aspect), value)| AspectMad { method_key, aspect, value })
            .collect();
        self
    }
}

/// Per-aspect spread and median across the annotators of one pair.
pub fn annotator_stats(records: &[AnnotationRecord]) -> Result<AgreementSummary, AgreementError> {
    let first = records.first().ok_or(AgreementError::NoRecords)?;
    if let Some(other) = records.iter().find(|r| r.pair_id != first.pair_id) {
        return Err(AgreementError::MixedPairs(first.pair_id.clone(), other.pair_id.clone()));
    }
    let aspects: Vec<AspectId> = {
        let mut ids: Vec<AspectId> = records.iter().flat_map(|r| r.scores.keys().copied()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    };
    let mut per_aspect = BTreeMap::new();
    for aspect in aspects {
        let scores: Vec<i64> = records
            .iter()
            .map(|r| r.scores.get(&aspect).copied().ok_or(AgreementError::MissingAspect(aspect)))
            .collect::<Result<_, _>>()?;
        let as_f: Vec<f64> = scores.iter().map(|&s| s as f64).collect();
        per_aspect.insert(
            aspect,
            AspectAgreement {
                stdev: sample_std(&as_f),
                median: median(&as_f).expect("nonempty"),
                scores,
            },
        );
    }
    Ok(AgreementSummary {
        pair_id: first.pair_id.clone(),
        annotators: records.iter().map(|r| r.annotator_id.clone()).collect(),
        per_aspect,
        per_model_mad: Vec::new(),
        per_aspect_mad: Vec::new(),
    })
}

fn model_slice(
    record: &AnnotationRecord,
    t: &ScoreTensor,
    method: &str,
) -> Result<Vec<(AspectId, f64, f64)>, AgreementError> {
    let m = t
        .method_index(method)
        .ok_or_else(|| AgreementError::UnknownMethod(method.into()))?;
    let j = t
        .pair_index(&record.pair_id)
        .ok_or_else(|| AgreementError::UnknownPair(record.pair_id.clone()))?;
    record
        .scores
        .iter()
        .map(|(&aspect, &h)| {
            let s = t
                .aspect_index(aspect)
                .and_then(|p| t.get(m, j, p))
                .ok_or_else(|| AgreementError::MissingModelScore {
                    method: method.into(),
                    pair: record.pair_id.clone(),
                    aspect,
                })?;
            Ok((aspect, h as f64, f64::from(s)))
        })
        .collect()
}

/// Mean over aspects of |human − model| for one annotator and model.
pub fn human_llm_mad(
    record: &AnnotationRecord,
    t: &ScoreTensor,
    method: &str,
) -> Result<f64, AgreementError> {
    let diffs: Vec<f64> = model_slice(record, t, method)?
        .into_iter()
        .map(|(_, h, s)| (h - s).abs())
        .collect();
    mean(&diffs).ok_or(AgreementError::NoRecords)
}

/// Per (annotator, method): [`human_llm_mad`] averaged over the pairs that
/// annotator scored. Records whose pair lacks model scores are skipped.
pub fn mad_by_annotator(records: &[AnnotationRecord], t: &ScoreTensor) -> Vec<ModelMad> {
    let mut acc: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for r in records {
        for method in t.methods() {
            if let Ok(v) = human_llm_mad(r, t, method) {
                acc.entry((r.annotator_id.clone(), method.clone())).or_default().push(v);
            }
        }
    }
    acc.into_iter()
        .map(|((annotator_id, method_key), v)| ModelMad {
            annotator_id,
            method_key,
            value: mean(&v).expect("nonempty"),
        })
        .collect()
}

/// Per (method, pair, aspect): |human − model| averaged over annotators.
pub fn mad_by_aspect(
    records: &[AnnotationRecord],
    t: &ScoreTensor,
) -> BTreeMap<(String, String, AspectId), f64> {
    let mut acc: BTreeMap<(String, String, AspectId), Vec<f64>> = BTreeMap::new();
    for r in records {
        for method in t.methods() {
            let Ok(slice) = model_slice(r, t, method) else { continue };
            for (aspect, h, s) in slice {
                acc.entry((method.clone(), r.pair_id.clone(), aspect))
                    .or_default()
                    .push((h - s).abs());
            }
        }
    }
    acc.into_iter()
        .map(|(k, v)| (k, mean(&v).expect("nonempty")))
        .collect()
}
