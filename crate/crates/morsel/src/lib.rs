//! Labeled morphological segmentation.
//!
//! `morsel` segments a word type into morphs and assigns each morph a
//! morphotactic tag, using an exactly-trained semi-Markov conditional random
//! field. From the one labeled output it derives the unlabeled segmentation,
//! the roots, the stem and the inflectional tag bundle of the word.
//!
//! The main pieces:
//!
//! * [`tags`] — the hierarchical morphotactic tagset (levels 0–5), tag
//!   projection and the derived views.
//! * [`corpus`] — annotated corpora, affix gazetteers, dictionaries, data
//!   splits and cross-validation folds.
//! * [`features`] — sparse feature extraction: context n-grams, gazetteer
//!   and dictionary lookups, tag–substring conjunctions and letter
//!   successor variety.
//! * [`semicrf`] — the segment lattice: forward/backward, partition
//!   function, marginals, Viterbi and the log-likelihood gradient.
//! * [`training`] — L2-regularized maximum likelihood with L-BFGS,
//!   hyperparameter tuning and the final-train protocol.
//! * [`evaluation`] — boundary macro-F1 with multiple references, stemming
//!   and root-detection accuracy, tag classification metrics and the
//!   undersegmentation matrix.
//! * [`baselines`] — character-level CRF mode and the MaxEnt whole-word
//!   tag classifiers.
//! * [`synth`] — a synthetic agglutinative corpus generator driven by a
//!   known morphotactic grammar.
//! * [`model_io`] — the on-disk model container.
//! * [`cli`] — the `morsel` command-line driver.
//!
//! See the crate examples (`cargo run --example <name>`) for one runnable
//! walkthrough per capability.

pub mod baselines;
pub mod cli;
pub mod corpus;
pub mod errors;
pub mod evaluation;
pub mod features;
pub mod model_io;
pub mod optim;
pub mod semicrf;
pub mod synth;
pub mod tags;
pub mod training;

pub use errors::{Error, Result};
pub use tags::{LabeledSegmentation, MorphTag, Tagset, TagsetLevel};
