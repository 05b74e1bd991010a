//! Similarity matrices, confounder estimators and searchlight (partial) correlation mapping.

mod correlation;
mod searchlight;
mod similarity;
mod vectorize;

pub use correlation::{
    midranks, partial_correlation, pearson, spearman, CorrelationMethod, Residualizer,
};
pub use searchlight::{
    searchlight_rsa, searchlight_rsa_multi, BrainSimilarity, RsaAnalysis, RsaOptions, RsaOutcome,
};
pub use similarity::{
    brain_neg_correlation, brain_sscp, stimulus_similarity, volume_bb, volume_svar, ConfounderKind,
    ConfounderSet, ConfounderSpec, SimilarityKind, SimilarityMatrix,
};
pub use vectorize::{vectorize, VectorizationRule};
