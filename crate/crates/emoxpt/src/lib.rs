//! Unsupervised sentiment comparison of human comments and LLM-generated
//! responses.
//!
//! The pipeline ingests a corpus of tweets, LLM responses, and human
//! comments; cleans each text class with its own rule set; builds word- and
//! sentence-level embedding matrices; clusters with k-means; scores with the
//! silhouette coefficient; projects to 2-D with exact t-SNE; and emits a
//! positive/negative sentiment comparison between the human and LLM groups.
//!
//! Every stage is a pure function of its inputs and the configured seeds, so
//! a pipeline run is reproducible byte-for-byte.

pub mod cleaning;
pub mod clustering;
pub mod corpus;
pub mod eda;
pub mod embedding;
pub mod pipeline;
pub mod projection;
pub mod sentiment;
