//! The model × pair × aspect score tensor.

use std::collections::HashSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::taxonomy::AspectId;

#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("tensor axis {0} is empty")]
    EmptyAxis(&'static str),
    #[error("duplicate {axis} label {label:?}")]
    DuplicateLabel { axis: &'static str, label: String },
    #[error("unknown {axis} {label:?}")]
    UnknownLabel { axis: &'static str, label: String },
    #[error("score {score} at ({method}, {pair}, aspect {aspect}) is outside 0..=5")]
    ScoreOutOfRange {
        method: String,
        pair: String,
        aspect: AspectId,
        score: i64,
    },
    #[error("tensor CSV row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("tensor CSV: {0}")]
    Csv(#[from] csv::Error),
}

/// Dense `s[m][j][p]` with a missing flag per entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreTensor {
    methods: Vec<String>,
    pairs: Vec<String>,
    aspects: Vec<AspectId>,
    scores: Vec<Option<u8>>,
}

fn check_axis<T: std::hash::Hash + Eq + ToString>(
    axis: &'static str,
    labels: &[T],
) -> Result<(), TensorError> {
    if labels.is_empty() {
        return Err(TensorError::EmptyAxis(axis));
    }
    let mut seen = HashSet::new();
    for l in labels {
        if !seen.insert(l) {
            return Err(TensorError::DuplicateLabel {
                axis,
                label: l.to_string(),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Deserialize, Serialize)]
struct CsvRow {
    method_key: String,
    pair_id: String,
    aspect_id: AspectId,
    score: Option<i64>,
    missing: u8,
}

impl ScoreTensor {
    /// A tensor with every entry missing.
    pub fn new(
        methods: Vec<String>,
        pairs: Vec<String>,
        aspects: Vec<AspectId>,
    ) -> Result<Self, TensorError> {
        check_axis("method", &methods)?;
        check_axis("pair", &pairs)?;
        check_axis("aspect", &aspects)?;
        let n = methods.len() * pairs.len() * aspects.len();
        Ok(Self {
            methods,
            pairs,
            aspects,
            scores: vec![None; n],
        })
    }

    pub fn methods(&self) -> &[String] {
        &self.methods
    }

    pub fn pairs(&self) -> &[String] {
        &self.pairs
    }

    pub fn aspects(&self) -> &[AspectId] {
        &self.aspects
    }

    /// `(|M|, |J|, |P|)`
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.methods.len(), self.pairs.len(), self.aspects.len())
    }

    fn offset(&self, m: usize, j: usize, p: usize) -> usize {
        let (_, nj, np) = self.dims();
        (m * nj + j) * np + p
    }

    pub fn get(&self, m: usize, j: usize, p: usize) -> Option<u8> {
        self.scores[self.offset(m, j, p)]
    }

    /// Panics on out-of-range indices or a score above 5.
    pub fn set(&mut self, m: usize, j: usize, p: usize, score: Option<u8>) {
        assert!(score.map_or(true, |s| s <= 5), "score {score:?} out of range");
        let at = self.offset(m, j, p);
        self.scores[at] = score;
    }

    pub fn method_index(&self, key: &str) -> Option<usize> {
        self.methods.iter().position(|m| m == key)
    }

    pub fn pair_index(&self, pair: &str) -> Option<usize> {
        self.pairs.iter().position(|p| p == pair)
    }

    pub fn aspect_index(&self, aspect: AspectId) -> Option<usize> {
        self.aspects.iter().position(|&a| a == aspect)
    }

    fn indices(&self, method: &str, pair: &str, aspect: AspectId) -> Result<(usize, usize, usize), TensorError> {
        let unknown = |axis, label: String| TensorError::UnknownLabel { axis, label };
        Ok((
            self.method_index(method).ok_or_else(|| unknown("method", method.into()))?,
            self.pair_index(pair).ok_or_else(|| unknown("pair", pair.into()))?,
            self.aspect_index(aspect).ok_or_else(|| unknown("aspect", aspect.to_string()))?,
        ))
    }

    pub fn lookup(&self, method: &str, pair: &str, aspect: AspectId) -> Result<Option<u8>, TensorError> {
        let (m, j, p) = self.indices(method, pair, aspect)?;
        Ok(self.get(m, j, p))
    }

    pub fn insert(
        &mut self,
        method: &str,
        pair: &str,
        aspect: AspectId,
        score: Option<i64>,
    ) -> Result<(), TensorError> {
        let (m, j, p) = self.indices(method, pair, aspect)?;
        let score = match score {
            None => None,
            Some(s @ 0..=5) => Some(s as u8),
            Some(s) => {
                return Err(TensorError::ScoreOutOfRange {
                    method: method.into(),
                    pair: pair.into(),
                    aspect,
                    score: s,
                })
            }
        };
        self.set(m, j, p, score);
        Ok(())
    }

    /// Present scores of cell `(·, j, p)` in method order.
    pub fn cell(&self, j: usize, p: usize) -> Vec<u8> {
        (0..self.methods.len()).filter_map(|m| self.get(m, j, p)).collect()
    }

    pub fn missing_count(&self) -> usize {
        self.scores.iter().filter(|s| s.is_none()).count()
    }

    /// `(method, pair, aspect)` of every missing entry.
    pub fn missing_entries(&self) -> Vec<(String, String, AspectId)> {
        let (nm, nj, np) = self.dims();
        let mut out = Vec::new();
        for m in 0..nm {
            for j in 0..nj {
                for p in 0..np {
                    if self.get(m, j, p).is_none() {
                        out.push((self.methods[m].clone(), self.pairs[j].clone(), self.aspects[p]));
                    }
                }
            }
        }
        out
    }

    /// One row per entry in method, pair, aspect order.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), TensorError> {
        let mut out = csv::Writer::from_writer(w);
        let (nm, nj, np) = self.dims();
        for m in 0..nm {
            for j in 0..nj {
                for p in 0..np {
                    let score = self.get(m, j, p);
                    out.serialize(CsvRow {
                        method_key: self.methods[m].clone(),
                        pair_id: self.pairs[j].clone(),
                        aspect_id: self.aspects[p],
                        score: score.map(i64::from),
                        missing: u8::from(score.is_none()),
                    })?;
                }
            }
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Axis order follows first appearance in the file.
    pub fn read_csv<R: Read>(r: R) -> Result<Self, TensorError> {
        let mut reader = csv::Reader::from_reader(r);
        let mut rows = Vec::new();
        for (i, row) in reader.deserialize::<CsvRow>().enumerate() {
            rows.push((i + 2, row?));
        }
        let mut methods: Vec<String> = Vec::new();
        let mut pairs: Vec<String> = Vec::new();
        let mut aspects: Vec<AspectId> = Vec::new();
        for (_, r) in &rows {
            if !methods.contains(&r.method_key) {
                methods.push(r.method_key.clone());
            }
            if !pairs.contains(&r.pair_id) {
                pairs.push(r.pair_id.clone());
            }
            if !aspects.contains(&r.aspect_id) {
                aspects.push(r.aspect_id);
            }
        }
        let mut t = Self::new(methods, pairs, aspects)?;
        for (row, r) in rows {
            let score = match (r.missing, r.score) {
                (1, _) => None,
                (0, Some(s)) => Some(s),
                (0, None) => {
                    return Err(TensorError::Row {
                        row,
                        message: "score is empty but missing is 0".into(),
                    })
                }
                (flag, _) => {
                    return Err(TensorError::Row {
                        row,
                        message: format!("missing flag must be 0 or 1, got {flag}"),
                    })
                }
            };
            t.insert(&r.method_key, &r.pair_id, r.aspect_id, score)?;
        }
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScoreTensor {
        ScoreTensor::new(
            vec!["a".into(), "b".into()],
            vec!["A-B".into()],
            vec![1, 2, 3],
        )
        .unwrap()
    }

    #[test]
    fn csv_round_trip_keeps_missing_flags() {
        let mut t = small();
        t.insert("a", "A-B", 1, Some(5)).unwrap();
        t.insert("b", "A-B", 3, Some(0)).unwrap();
        let csv = t.to_csv();
        assert!(csv.starts_with("method_key,pair_id,aspect_id,score,missing\n"));
        assert!(csv.contains("a,A-B,2,,1\n"));
        let back = ScoreTensor::read_csv(csv.as_bytes()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.missing_count(), 4);
    }

    #[test]
    fn rejects_bad_scores_and_labels() {
        let mut t = small();
        assert!(matches!(
            t.insert("a", "A-B", 1, Some(6)),
            Err(TensorError::ScoreOutOfRange { score: 6, .. })
        ));
        assert!(matches!(t.insert("z", "A-B", 1, Some(1)), Err(TensorError::UnknownLabel { .. })));
        let bad = "method_key,pair_id,aspect_id,score,missing\na,A-B,1,,0\n";
        assert!(matches!(ScoreTensor::read_csv(bad.as_bytes()), Err(TensorError::Row { row: 2, .. })));
        assert!(matches!(
            ScoreTensor::new(vec!["a".into(), "a".into()], vec!["x".into()], vec![1]),
            Err(TensorError::DuplicateLabel { .. })
        ));
    }
}
