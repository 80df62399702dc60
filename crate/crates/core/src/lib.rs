//! One model per graph: per-dataset contrastive source encoders and scoring
//! modules kept in a model bank, fused at inference time by relevance to an
//! unseen graph for zero- and few-shot node classification and link
//! prediction.

pub mod bank;
pub mod binio;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fuse;
pub mod nn;
pub mod pretrain;
pub mod propagate;
pub mod similarity;
pub mod synthetic;
pub mod theory;

pub use dataset::{load_dataset, GraphDataset};
pub use error::{OmogError, Result};
