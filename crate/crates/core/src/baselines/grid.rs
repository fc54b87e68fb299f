//! Hyperparameter lattice search for PV-DM on a stratified tuning sample.

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pvdm::{pvdm_features, PvdmConfig};
use crate::corpus::{Document, LabeledCorpus};
use crate::evaluate::{cross_validate_assignment, stratified_folds, ClassifierConfig, FoldFeatures, FoldFeaturizer};
use crate::{Error, Result};

/// Values tried for each searched hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PvdmGrid {
    pub windows: Vec<usize>,
    pub min_frequencies: Vec<usize>,
    pub negative_samples: Vec<usize>,
    pub subsample_thresholds: Vec<f64>,
}

impl Default for PvdmGrid {
    /// 4 windows × 4 minimum frequencies × 3 negative counts × 2 thresholds.
    fn default() -> Self {
        Self {
            windows: vec![5, 10, 15, 20],
            min_frequencies: vec![0, 5, 10, 20],
            negative_samples: vec![0, 10, 20],
            subsample_thresholds: vec![0.0, 5e-5],
        }
    }
}

impl PvdmGrid {
    pub fn single(cfg: &PvdmConfig) -> Self {
        Self {
            windows: vec![cfg.window],
            min_frequencies: vec![cfg.min_frequency],
            negative_samples: vec![cfg.negative_samples],
            subsample_thresholds: vec![cfg.subsample_threshold],
        }
    }

    /// Every lattice point on top of `base`, window varying slowest.
    pub fn lattice(&self, base: &PvdmConfig) -> Vec<PvdmConfig> {
        let mut out = Vec::new();
        for &window in &self.windows {
            for &min_frequency in &self.min_frequencies {
                for &negative_samples in &self.negative_samples {
                    for &subsample_threshold in &self.subsample_thresholds {
                        out.push(PvdmConfig {
                            window,
                            min_frequency,
                            negative_samples,
                            subsample_threshold,
                            ..base.clone()
                        });
                    }
                }
            }
        }
        out
    }
}

/// Sampling and inner cross-validation of the tuning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningConfig {
    /// Share of each genre drawn into the tuning sample.
    pub fraction: f64,
    /// Folds of the cross-validation inside the sample.
    pub folds: usize,
    pub seed: u64,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            fraction: 0.1,
            folds: 3,
            seed: 1,
        }
    }
}

/// `ceil(fraction · n_g)` documents of each genre (at least `min_per_genre`,
/// at most all), drawn with a seeded shuffle; returned sorted.
pub fn tuning_sample(labels: &[usize], fraction: f64, min_per_genre: usize, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("tuning fraction {fraction} outside (0, 1]")));
    }
    let num_genres = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for g in 0..num_genres {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == g).collect();
        members.shuffle(&mut rng);
        let take = ((fraction * members.len() as f64).ceil() as usize)
            .max(min_per_genre)
            .min(members.len());
        out.extend_from_slice(&members[..take]);
    }
    out.sort_unstable();
    Ok(out)
}

/// PV-DM trained on each fold's training documents, inferred on its test
/// documents.
#[derive(Debug, Clone)]
pub struct PvdmFeaturizer<'a> {
    pub docs: &'a [Document],
    pub config: PvdmConfig,
}

impl FoldFeaturizer for PvdmFeaturizer<'_> {
    fn name(&self) -> String {
        "pvdm".into()
    }

    fn featurize(&self, _: usize, train: &[usize], test: &[usize]) -> Result<FoldFeatures> {
        let vectors = pvdm_features(self.docs, train, &self.config)?;
        let pick = |ix: &[usize]| ix.iter().map(|&i| vectors[i].values.clone()).collect();
        Ok(FoldFeatures {
            train: pick(train),
            test: pick(test),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub config: PvdmConfig,
    pub fscore: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearch {
    pub best: PvdmConfig,
    pub best_fscore: f64,
    /// Every lattice point in lattice order.
    pub evaluated: Vec<GridPoint>,
    /// Indices of the tuning documents in the corpus.
    pub sample: Vec<usize>,
}

/// Scores every lattice point by cross-validated weighted F on a tuning
/// sample and keeps the best (the first on ties).
pub fn pvdm_grid_search(
    corpus: &LabeledCorpus,
    base: &PvdmConfig,
    grid: &PvdmGrid,
    tuning: &TuningConfig,
    classifier: &ClassifierConfig,
) -> Result<GridSearch> {
    let lattice = grid.lattice(base);
    if lattice.is_empty() {
        return Err(Error::InvalidArgument("empty PV-DM grid".into()));
    }
    let labels = corpus.labels();
    let sample = tuning_sample(&labels, tuning.fraction, tuning.folds, tuning.seed)?;
    let docs: Vec<Document> = sample.iter().map(|&i| corpus.documents()[i].clone()).collect();
    let sample_labels: Vec<usize> = sample.iter().map(|&i| labels[i]).collect();
    let assignment = stratified_folds(&sample_labels, tuning.folds, tuning.seed)?;
    info!(
        "PV-DM grid search: {} configurations on {} tuning documents",
        lattice.len(),
        docs.len()
    );
    let evaluated: Vec<GridPoint> = lattice
        .into_par_iter()
        .map(|config| {
            let feats = PvdmFeaturizer {
                docs: &docs,
                config: config.clone(),
            };
            let r = cross_validate_assignment(&sample_labels, corpus.num_genres(), &assignment, &feats, classifier)?;
            Ok(GridPoint {
                config,
                fscore: r.mean_fscore,
            })
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, p) in evaluated.iter().enumerate() {
        if p.fscore > evaluated[best].fscore {
            best = i;
        }
    }
    Ok(GridSearch {
        best: evaluated[best].config.clone(),
        best_fscore: evaluated[best].fscore,
        evaluated,
        sample,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_lattice_has_96_points() {
        let l = PvdmGrid::default().lattice(&PvdmConfig::default());
        assert_eq!(l.len(), 96);
        assert_eq!((l[0].window, l[95].window), (5, 20));
        assert_eq!((l[1].subsample_threshold, l[2].negative_samples), (5e-5, 10));
    }

    #[test]
    fn sample_is_stratified() {
        let labels: Vec<usize> = (0..200).map(|i| i % 2).collect();
        let s = tuning_sample(&labels, 0.1, 3, 4).unwrap();
        assert_eq!(s.len(), 20);
        assert_eq!(s.iter().filter(|&&i| labels[i] == 0).count(), 10);
    }
}
