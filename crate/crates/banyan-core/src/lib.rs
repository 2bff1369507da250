//! Unsupervised structure induction and representation learning over token
//! sequences.
//!
//! The model embeds tokens into multi-channel vectors, greedily merges the
//! most similar adjacent spans into a batch-wide deduplicated DAG (an
//! "entangled tree"), composes embeddings bottom-up and decomposes them
//! top-down, and trains the whole pipeline with either a token
//! reconstruction loss or an up/down contrastive loss. Trained checkpoints
//! can be used for zero-shot word and sentence similarity scoring.
//!
//! The crate is organised around the pipeline stages:
//!
//! * [`corpus`] — vocabulary construction, tokenization, deterministic
//!   batching
//! * [`structure`] — entangled and per-sentence (sentential) tree induction
//! * [`model`] — parameters and the compose/decompose message passing
//! * [`objectives`] — cross-entropy and contrastive losses
//! * [`train`] — reverse-mode gradients, Adam, the epoch loop
//! * [`eval`] — zero-shot similarity scoring against gold judgements
//! * [`efficiency`] — node-growth and parameter-count audits
//! * [`checkpoint`] — binary model serialization
//! * [`synth`] — synthetic corpus generators used by tests and benchmarks

pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod efficiency;
pub mod eval;
pub mod model;
mod num;
pub mod objectives;
pub mod structure;
pub mod synth;
pub mod train;

pub use checkpoint::{load_model, save_model, Model};
pub use config::{ConfigError, EmbeddingConfig, FunctionKind, Objective, StructureKind, TrainConfig};
pub use corpus::{build_vocab, tokenize, Batch, BatchIter, CorpusError, SequenceStore, TokenSequence, Vocabulary};
pub use eval::{evaluate, spearman, EvalError, EvalReport, SimilarityDataset};
pub use model::{cosine, ChannelEmbedding, Parameters};
pub use structure::{induce_entangled, induce_sentential, EntangledGraph, SpanSignature};
pub use train::{train, TrainError, TrainOutcome};
