//! Valence bias auditing for contextualized word embeddings.
//!
//! * [`embedding_store`]: the VEMB exchange format.
//! * [`valence_subspace`]: max-margin valence direction and scalar projection.
//! * [`association_stats`]: SC-WEAT effect sizes, permutation tests, ValNorm
//!   and decile ranking.
//! * [`context_gen`]: bias taxonomy and intersectional sentence generation.

pub mod association_stats;
pub mod context_gen;
pub mod embedding_store;
pub mod valence_subspace;

pub use association_stats::{
    cosine_association, cosine_scweat, pearson_rho, permutation_test, projection_scweat,
    rank_contexts, valnorm, DecileReport, EffectSizeResult, Method, PermutationConfig,
    PermutationOutcome, Scorer, StatsError, ValNormReport, ValNormScore,
};
pub use context_gen::{
    generate_combinations, generate_permutations, BiasPair, BiasTaxonomy, ContextError,
    GenOptions, SentenceContext,
};
pub use embedding_store::{
    read_embeddings, read_embeddings_file, write_embeddings, write_embeddings_file,
    EmbeddingRecord, EmbeddingSet, StoreError,
};
pub use valence_subspace::{
    train_valence_direction, StimulusSet, SubspaceError, SvcConfig, TrainingMeta,
    ValenceDirection,
};
