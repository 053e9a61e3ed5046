//! Stability statistics across models and agreement with human annotators.

mod agreement;
mod stats;
mod tensor;

pub use agreement::{
    annotator_stats, human_llm_mad, mad_by_annotator, mad_by_aspect, AgreementError,
    AgreementSummary, AnnotationRecord, AspectMad, AspectAgreement, ModelMad,
};
pub use stats::{
    ensemble_scores, mad_matrix, mean, mean_matrix, mean_similarity, median, model_pair_mad,
    sample_std, std_matrix, std_similarity, Ensemble, Matrix, PairMad, StatsError,
};
pub use tensor::{ScoreTensor, TensorError};

/// Three-decimal rendering used in tables.
pub fn fmt3(v: f64) -> String {
    format!("{v:.3}")
}
