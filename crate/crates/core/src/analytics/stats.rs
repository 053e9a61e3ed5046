//! Cross-model statistics over a score tensor.

use serde::{Deserialize, Serialize};

use super::tensor::ScoreTensor;
use crate::taxonomy::AspectId;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("every model is missing a score for pair {pair}, aspect {aspect}")]
    AllMissing { pair: String, aspect: AspectId },
    #[error("methods {0} and {1} share no scored cells")]
    NoSharedCells(String, String),
    #[error("unknown method {0:?}")]
    UnknownMethod(String),
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Standard deviation with divisor `n − 1`; `None` below two values.
pub fn sample_std(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let mu = mean(values)?;
    let ss: f64 = values.iter().map(|v| (v - mu).powi(2)).sum();
    Some((ss / (values.len() - 1) as f64).sqrt())
}

/// Median; an even count takes the midpoint of the two middle values.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

fn cell_values(t: &ScoreTensor, j: usize, p: usize) -> Result<Vec<f64>, StatsError> {
    let v: Vec<f64> = t.cell(j, p).into_iter().map(f64::from).collect();
    if v.is_empty() {
        return Err(StatsError::AllMissing {
            pair: t.pairs()[j].clone(),
            aspect: t.aspects()[p],
        });
    }
    Ok(v)
}

/// Mean score across models for pair `j`, aspect `p`.
pub fn mean_similarity(t: &ScoreTensor, j: usize, p: usize) -> Result<f64, StatsError> {
    Ok(mean(&cell_values(t, j, p)?).expect("nonempty"))
}

/// Sample standard deviation across models; `None` with a single score.
pub fn std_similarity(t: &ScoreTensor, j: usize, p: usize) -> Result<Option<f64>, StatsError> {
    Ok(sample_std(&cell_values(t, j, p)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairMad {
    pub value: f64,
    pub cells_used: usize,
    /// Cells skipped because either model lacks a score.
    pub cells_excluded: usize,
}

/// Mean absolute score difference between two models over all shared cells.
pub fn model_pair_mad(t: &ScoreTensor, m1: &str, m2: &str) -> Result<PairMad, StatsError> {
    let i1 = t.method_index(m1).ok_or_else(|| StatsError::UnknownMethod(m1.into()))?;
    let i2 = t.method_index(m2).ok_or_else(|| StatsError::UnknownMethod(m2.into()))?;
    let (_, nj, np) = t.dims();
    let (mut sum, mut used, mut excluded) = (0u64, 0usize, 0usize);
    for j in 0..nj {
        for p in 0..np {
            match (t.get(i1, j, p), t.get(i2, j, p)) {
                (Some(a), Some(b)) => {
                    sum += u64::from(a.abs_diff(b));
                    used += 1;
                }
                _ => excluded += 1,
            }
        }
    }
    if used == 0 {
        return Err(StatsError::NoSharedCells(m1.into(), m2.into()));
    }
    Ok(PairMad {
        value: sum as f64 / used as f64,
        cells_used: used,
        cells_excluded: excluded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ensemble {
    Mean,
    Median,
}

/// A labelled matrix of optional reals; rows and columns are axis labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl Matrix {
    pub fn shape(&self) -> (usize, usize) {
        (self.row_labels.len(), self.col_labels.len())
    }

    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        self.values[r][c]
    }

    /// Largest present value.
    pub fn max(&self) -> Option<f64> {
        self.values
            .iter()
            .flatten()
            .flatten()
            .copied()
            .reduce(f64::max)
    }
}

/// Aspect × pair matrix with `f` applied to each cell's present scores;
/// an all-missing cell yields a missing entry.
fn aspect_pair_matrix(t: &ScoreTensor, f: impl Fn(&[f64]) -> Option<f64>) -> Matrix {
    let (_, nj, np) = t.dims();
    let values = (0..np)
        .map(|p| {
            (0..nj)
                .map(|j| {
                    let v: Vec<f64> = t.cell(j, p).into_iter().map(f64::from).collect();
                    f(&v)
                })
                .collect()
        })
        .collect();
    Matrix {
        row_labels: t.aspects().iter().map(|a| a.to_string()).collect(),
        col_labels: t.pairs().to_vec(),
        values,
    }
}

/// Mean heatmap values (aspects × pairs).
pub fn mean_matrix(t: &ScoreTensor) -> Matrix {
    aspect_pair_matrix(t, mean)
}

/// Standard-deviation heatmap values (aspects × pairs).
pub fn std_matrix(t: &ScoreTensor) -> Matrix {
    aspect_pair_matrix(t, sample_std)
}

/// Ensemble score per `(pair, aspect)` as an aspects × pairs matrix.
pub fn ensemble_scores(t: &ScoreTensor, method: Ensemble) -> Result<Matrix, StatsError> {
    let (_, nj, np) = t.dims();
    for j in 0..nj {
        for p in 0..np {
            cell_values(t, j, p)?;
        }
    }
    Ok(match method {
        Ensemble::Mean => aspect_pair_matrix(t, mean),
        Ensemble::Median => aspect_pair_matrix(t, median),
    })
}

/// Model × model MAD matrix; pairs without shared cells are missing.
pub fn mad_matrix(t: &ScoreTensor) -> Matrix {
    let methods = t.methods();
    let values = methods
        .iter()
        .map(|a| {
            methods
                .iter()
                .map(|b| model_pair_mad(t, a, b).ok().map(|m| m.value))
                .collect()
        })
        .collect();
    Matrix {
        row_labels: methods.to_vec(),
        col_labels: methods.to_vec(),
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_cell(scores: &[Option<u8>]) -> ScoreTensor {
        let methods = (0..scores.len()).map(|i| format!("m{i}")).collect();
        let mut t = ScoreTensor::new(methods, vec!["A-B".into()], vec![1]).unwrap();
        for (m, s) in scores.iter().enumerate() {
            t.set(m, 0, 0, *s);
        }
        t
    }

    #[test]
    fn mean_and_std_examples() {
        let t = one_cell(&[Some(3); 5]);
        assert_eq!(mean_similarity(&t, 0, 0).unwrap(), 3.0);
        assert_eq!(std_similarity(&t, 0, 0).unwrap(), Some(0.0));
        let t = one_cell(&[0, 1, 2, 3, 4].map(Some));
        assert_eq!(mean_similarity(&t, 0, 0).unwrap(), 2.0);
        assert!((std_similarity(&t, 0, 0).unwrap().unwrap() - 2.5f64.sqrt()).abs() < 1e-15);
        let t = one_cell(&[Some(3), None]);
        assert_eq!(std_similarity(&t, 0, 0).unwrap(), None);
        let t = one_cell(&[None, None]);
        assert!(matches!(mean_similarity(&t, 0, 0), Err(StatsError::AllMissing { aspect: 1, .. })));
    }

    #[test]
    fn ensemble_examples() {
        let t = one_cell(&[1, 2, 3, 4, 5].map(Some));
        assert_eq!(ensemble_scores(&t, Ensemble::Median).unwrap().get(0, 0), Some(3.0));
        assert_eq!(ensemble_scores(&t, Ensemble::Mean).unwrap().get(0, 0), Some(3.0));
        let t = one_cell(&[0, 0, 5, 5].map(Some));
        assert_eq!(ensemble_scores(&t, Ensemble::Median).unwrap().get(0, 0), Some(2.5));
    }

    #[test]
    fn mad_identity_offset_and_exclusions() {
        let mut t = ScoreTensor::new(vec!["a".into(), "b".into()], vec!["A-B".into(), "A-C".into()], vec![1, 2]).unwrap();
        for j in 0..2 {
            for p in 0..2 {
                t.set(0, j, p, Some((j + p) as u8));
                t.set(1, j, p, Some((j + p) as u8 + 1));
            }
        }
        assert_eq!(model_pair_mad(&t, "a", "a").unwrap().value, 0.0);
        assert_eq!(model_pair_mad(&t, "a", "b").unwrap().value, 1.0);
        t.set(1, 0, 0, None);
        let m = model_pair_mad(&t, "a", "b").unwrap();
        assert_eq!((m.cells_used, m.cells_excluded), (3, 1));
        let grid = mad_matrix(&t);
        assert_eq!(grid.shape(), (2, 2));
        assert_eq!(grid.get(1, 1), Some(0.0));
    }

    fn tensor_strategy() -> impl Strategy<Value = ScoreTensor> {
        (2usize..6, 1usize..4, 1usize..5).prop_flat_map(|(nm, nj, np)| {
            proptest::collection::vec(proptest::option::weighted(0.9, 0u8..=5), nm * nj * np).prop_map(
                move |flat| {
                    let mut t = ScoreTensor::new(
                        (0..nm).map(|i| format!("m{i}")).collect(),
                        (0..nj).map(|i| format!("A-{i}")).collect(),
                        (1..=np as u32).collect(),
                    )
                    .unwrap();
                    let mut it = flat.into_iter();
                    for m in 0..nm {
                        for j in 0..nj {
                            for p in 0..np {
                                t.set(m, j, p, it.next().unwrap());
                            }
                        }
                    }
                    t
                },
            )
        })
    }

    proptest! {
        #[test]
        fn mad_is_symmetric_with_zero_diagonal(t in tensor_strategy()) {
            let g = mad_matrix(&t);
            let n = t.methods().len();
            for a in 0..n {
                for b in 0..n {
                    prop_assert_eq!(g.get(a, b), g.get(b, a));
                }
                if let Some(d) = g.get(a, a) {
                    prop_assert_eq!(d, 0.0);
                }
            }
        }

        #[test]
        fn std_ignores_model_order(t in tensor_strategy()) {
            let mut rev = ScoreTensor::new(
                t.methods().iter().rev().cloned().collect(),
                t.pairs().to_vec(),
                t.aspects().to_vec(),
            ).unwrap();
            let (nm, nj, np) = t.dims();
            for m in 0..nm {
                for j in 0..nj {
                    for p in 0..np {
                        rev.set(nm - 1 - m, j, p, t.get(m, j, p));
                    }
                }
            }
            let (a, b) = (std_matrix(&t), std_matrix(&rev));
            for (ra, rb) in a.values.iter().zip(&b.values) {
                for (x, y) in ra.iter().zip(rb) {
                    match (x, y) {
                        (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
                        _ => prop_assert_eq!(x, y),
                    }
                }
            }
        }

        #[test]
        fn mean_matches_ensemble_mean(t in tensor_strategy()) {
            if let Ok(e) = ensemble_scores(&t, Ensemble::Mean) {
                prop_assert_eq!(e, mean_matrix(&t));
            }
        }
    }
}
