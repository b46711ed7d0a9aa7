//! Contextual embeddings for network categorical tokens.
//!
//! The toolkit ingests DNS event logs (or generic protocol field/value
//! streams), truncates FQDNs into hierarchy-level tokens, pretrains a small
//! bidirectional transformer encoder with a masked-token objective, and
//! compares the learned embeddings against random and co-occurrence
//! baselines on a GRU device classifier. An analysis layer provides cosine
//! nearest neighbors, mean-pooled sequence embeddings, and 2-D projection
//! (PCA and exact t-SNE).

pub mod analysis;
pub mod baselines;
pub mod corpus;
pub mod downstream;
pub mod encoder;
pub mod error;
pub mod extension;
pub mod numerics;
pub mod pretrain;
pub mod tokenizer;

pub use error::{Error, Result};
