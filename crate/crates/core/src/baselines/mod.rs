//! Baseline document features: n-gram TF-IDF and PV-DM paragraph vectors.

mod grid;
mod pvdm;
mod tfidf;

pub use grid::{pvdm_grid_search, tuning_sample, GridPoint, GridSearch, PvdmFeaturizer, PvdmGrid, TuningConfig};
pub use pvdm::{pvdm_features, pvdm_train, PvdmConfig, PvdmModel};
pub use tfidf::{ngram_tfidf, NgramIndex};
