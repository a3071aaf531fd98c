//! Before/after conflict discourse analysis toolkit.
//!
//! The crate covers the full analysis chain for a timestamped social-media
//! corpus split around a conflict-onset date:
//!
//! * [`corpus`] — ingestion, validation, onset segmentation, stratified sampling
//! * [`textprep`] — normalization, hashtag segmentation, stopwords, lemmatization
//! * [`vectorize`] — capped n-gram vocabularies and sparse term-document matrices
//! * [`topicmodel`] — LDA via collapsed Gibbs sampling, topic assignment, topic-term dictionaries
//! * [`toxicity`] — term/document toxicity scoring (offline lexicon or remote service) and per-topic stats
//! * [`regress`] — robust/maxabs scaling and ordinary least squares on the before segment
//! * [`evaluate`] — MSE/MAE, threshold-accuracy sweeps, and report emission
//!
//! The `pipeline` binary (separate crate) wires these into resumable stages.

pub mod corpus;
pub mod evaluate;
pub mod regress;
pub mod textprep;
pub mod topicmodel;
pub mod toxicity;
pub mod vectorize;
