//! Distributed-memory paragraph vectors.
//!
//! The mean of the document vector and the (up to) `window` preceding word
//! vectors predicts the next word, through negative sampling against a
//! unigram^0.75 noise distribution or, with zero negatives, through a
//! class-factorised softmax. Vectors of documents outside the training set
//! are inferred with all word and output weights frozen.

use std::collections::HashMap;

use log::{debug, warn};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::vectors::{DocumentVector, Recipe};
use crate::word_classes::{brown_cluster_stats, BigramStats, WordClassMap};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PvdmConfig {
    pub dim: usize,
    pub window: usize,
    /// Words seen fewer times in the training documents are dropped.
    pub min_frequency: usize,
    pub negative_samples: usize,
    /// Frequent-word down-sampling threshold; 0 disables it.
    pub subsample_threshold: f64,
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for PvdmConfig {
    fn default() -> Self {
        Self {
            dim: 500,
            window: 5,
            min_frequency: 0,
            negative_samples: 10,
            subsample_threshold: 0.0,
            learning_rate: 0.025,
            min_learning_rate: 1e-4,
            epochs: 20,
            seed: 1,
        }
    }
}

impl PvdmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("PV-DM config: {m}")));
        if self.dim == 0 {
            return bad("dim must be at least 1");
        }
        if self.window == 0 {
            return bad("window must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.learning_rate > 0.0) || !(self.min_learning_rate >= 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.subsample_threshold >= 0.0) {
            return bad("subsample threshold must be non-negative");
        }
        Ok(())
    }

    /// Learning rate of epoch `e`, decaying linearly to `min_learning_rate`.
    pub fn epoch_learning_rate(&self, e: usize) -> f64 {
        if self.epochs <= 1 {
            return self.learning_rate;
        }
        let frac = e as f64 / (self.epochs - 1) as f64;
        self.learning_rate + (self.min_learning_rate - self.learning_rate) * frac
    }
}

#[derive(Debug, Clone)]
enum Output {
    Negative {
        /// `V x dim`.
        weights: Vec<f64>,
        noise: WeightedIndex<f64>,
    },
    Softmax {
        map: WordClassMap,
        /// `C x dim`.
        k: Vec<f64>,
        /// `V x dim`.
        q: Vec<f64>,
    },
}

/// Trained word and output weights plus the training documents' vectors.
#[derive(Debug, Clone)]
pub struct PvdmModel {
    cfg: PvdmConfig,
    index: HashMap<String, u32>,
    counts: Vec<u64>,
    total: u64,
    /// `V x dim`.
    words: Vec<f64>,
    output: Output,
    /// `N x dim`.
    docs: Vec<f64>,
    /// Summed objective of each training epoch.
    pub epoch_losses: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn init_rows(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> Vec<f64> {
    let scale = 0.5 / dim as f64;
    (0..rows * dim).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Which parameters a pass may update.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Train,
    Infer,
}

impl PvdmModel {
    pub fn config(&self) -> &PvdmConfig {
        &self.cfg
    }

    pub fn vocab_size(&self) -> usize {
        self.counts.len()
    }

    pub fn num_docs(&self) -> usize {
        self.docs.len() / self.cfg.dim
    }

    /// Vector of training document `i`.
    pub fn doc_vector(&self, i: usize) -> &[f64] {
        &self.docs[i * self.cfg.dim..(i + 1) * self.cfg.dim]
    }

    /// Word ids of `doc`, dropping out-of-vocabulary words.
    fn encode(&self, doc: &Document) -> Vec<u32> {
        doc.surface().iter().filter_map(|w| self.index.get(w).copied()).collect()
    }

    fn keep_probability(&self, w: u32) -> f64 {
        let t = self.cfg.subsample_threshold;
        if t == 0.0 {
            return 1.0;
        }
        let f = self.counts[w as usize] as f64;
        let thr = t * self.total as f64;
        ((f / thr).sqrt() + 1.0) * thr / f
    }

    /// One prediction of `target` from `doc_vec` and the `context` words.
    /// Returns the loss contribution.
    #[allow(clippy::too_many_arguments)]
    fn step(
        &mut self,
        doc_vec: &mut [f64],
        context: &[u32],
        target: u32,
        lr: f64,
        mode: Mode,
        rng: &mut ChaCha8Rng,
        h: &mut [f64],
        grad_h: &mut [f64],
    ) -> f64 {
        let dim = self.cfg.dim;
        let count = (1 + context.len()) as f64;
        h.copy_from_slice(doc_vec);
        for &c in context {
            h.iter_mut()
                .zip(&self.words[c as usize * dim..(c as usize + 1) * dim])
                .for_each(|(a, b)| *a += b);
        }
        h.iter_mut().for_each(|x| *x /= count);
        grad_h.fill(0.0);
        let train_out = mode == Mode::Train;
        let mut loss = 0.0;
        match &mut self.output {
            Output::Negative { weights, noise } => {
                let mut sample = |label: f64, w: u32, weights: &mut Vec<f64>| {
                    let row = &mut weights[w as usize * dim..(w as usize + 1) * dim];
                    let z = dot(row, h);
                    let p = sigmoid(z);
                    loss -= if label > 0.0 { p.max(1e-300).ln() } else { (1.0 - p).max(1e-300).ln() };
                    let g = p - label;
                    grad_h.iter_mut().zip(row.iter()).for_each(|(a, b)| *a += g * b);
                    if train_out {
                        row.iter_mut().zip(h.iter()).for_each(|(a, b)| *a -= lr * g * b);
                    }
                };
                sample(1.0, target, weights);
                for _ in 0..self.cfg.negative_samples {
                    let w = noise.sample(rng) as u32;
                    if w != target {
                        sample(0.0, w, weights);
                    }
                }
            }
            Output::Softmax { map, k, q } => {
                let cls = map.class_of(target);
                let nc = map.num_classes();
                let mut s: Vec<f64> = (0..nc).map(|c| dot(&k[c * dim..(c + 1) * dim], h)).collect();
                softmax(&mut s);
                let members = map.members(cls);
                let mut p: Vec<f64> = members
                    .iter()
                    .map(|&m| dot(&q[m as usize * dim..(m as usize + 1) * dim], h))
                    .collect();
                softmax(&mut p);
                let pos = map.position(target);
                loss -= s[cls as usize].max(1e-300).ln() + p[pos].max(1e-300).ln();
                s[cls as usize] -= 1.0;
                p[pos] -= 1.0;
                for (c, &g) in s.iter().enumerate() {
                    let row = &mut k[c * dim..(c + 1) * dim];
                    grad_h.iter_mut().zip(row.iter()).for_each(|(a, b)| *a += g * b);
                    if train_out {
                        row.iter_mut().zip(h.iter()).for_each(|(a, b)| *a -= lr * g * b);
                    }
                }
                for (&m, &g) in members.iter().zip(&p) {
                    let row = &mut q[m as usize * dim..(m as usize + 1) * dim];
                    grad_h.iter_mut().zip(row.iter()).for_each(|(a, b)| *a += g * b);
                    if train_out {
                        row.iter_mut().zip(h.iter()).for_each(|(a, b)| *a -= lr * g * b);
                    }
                }
            }
        }
        let scale = lr / count;
        doc_vec.iter_mut().zip(grad_h.iter()).for_each(|(a, g)| *a -= scale * g);
        if mode == Mode::Train {
            for &c in context {
                self.words[c as usize * dim..(c as usize + 1) * dim]
                    .iter_mut()
                    .zip(grad_h.iter())
                    .for_each(|(a, g)| *a -= scale * g);
            }
        }
        loss
    }

    /// One pass over a document; returns its loss.
    #[allow(clippy::too_many_arguments)]
    fn pass(
        &mut self,
        doc_vec: &mut [f64],
        tokens: &[u32],
        lr: f64,
        mode: Mode,
        rng: &mut ChaCha8Rng,
        h: &mut [f64],
        grad_h: &mut [f64],
    ) -> f64 {
        let kept: Vec<u32> = tokens
            .iter()
            .copied()
            .filter(|&w| {
                let p = self.keep_probability(w);
                p >= 1.0 || rng.random::<f64>() < p
            })
            .collect();
        let mut loss = 0.0;
        for i in 0..kept.len() {
            let start = i.saturating_sub(self.cfg.window);
            loss += self.step(doc_vec, &kept[start..i], kept[i], lr, mode, rng, h, grad_h);
        }
        loss
    }

    /// Vector of an unseen document, trained against frozen word and output
    /// weights (they are borrowed mutably but left untouched). Documents with
    /// no in-vocabulary tokens get a zero vector.
    pub fn infer(&mut self, doc: &Document, seed: u64) -> DocumentVector {
        let dim = self.cfg.dim;
        let tokens = self.encode(doc);
        if tokens.is_empty() {
            warn!("document {} has no PV-DM vocabulary words; zero vector", doc.id());
            return DocumentVector::new(vec![0.0; dim], Recipe::Pvdm);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = init_rows(&mut rng, 1, dim);
        let (mut h, mut g) = (vec![0.0; dim], vec![0.0; dim]);
        for e in 0..self.cfg.epochs {
            let lr = self.cfg.epoch_learning_rate(e);
            self.pass(&mut v, &tokens, lr, Mode::Infer, &mut rng, &mut h, &mut g);
        }
        DocumentVector::new(v, Recipe::Pvdm)
    }
}

fn softmax(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        sum += *x;
    }
    v.iter_mut().for_each(|x| *x /= sum);
}

/// Trains PV-DM on `docs`.
pub fn pvdm_train(docs: &[&Document], cfg: &PvdmConfig) -> Result<PvdmModel> {
    cfg.validate()?;
    let mut raw: HashMap<&str, u64> = HashMap::new();
    for d in docs {
        for w in d.surface() {
            *raw.entry(w.as_str()).or_default() += 1;
        }
    }
    let mut vocab: Vec<(&str, u64)> = raw
        .into_iter()
        .filter(|&(_, c)| c as usize >= cfg.min_frequency)
        .collect();
    vocab.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    if vocab.is_empty() {
        return Err(Error::InvalidArgument(
            "PV-DM vocabulary is empty after min_frequency filtering".into(),
        ));
    }
    let index: HashMap<String, u32> = vocab.iter().enumerate().map(|(i, (w, _))| (w.to_string(), i as u32)).collect();
    let counts: Vec<u64> = vocab.iter().map(|&(_, c)| c).collect();
    let total = counts.iter().sum();
    let v = counts.len();
    let dim = cfg.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let words = init_rows(&mut rng, v, dim);
    let doc_vecs = init_rows(&mut rng, docs.len(), dim);
    let encode = |d: &Document| -> Vec<u32> { d.surface().iter().filter_map(|w| index.get(w).copied()).collect() };
    let encoded: Vec<Vec<u32>> = docs.iter().map(|d| encode(d)).collect();
    let output = if cfg.negative_samples > 0 {
        let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
        Output::Negative {
            weights: vec![0.0; v * dim],
            noise: WeightedIndex::new(weights).map_err(|e| Error::InvalidArgument(e.to_string()))?,
        }
    } else {
        let classes = ((v as f64).sqrt().ceil() as usize).clamp(1, v);
        let map = if classes >= 2 {
            let stats = BigramStats::from_sequences(v, encoded.iter().map(Vec::as_slice));
            brown_cluster_stats(&stats, classes)?
        } else {
            WordClassMap::from_assignment(vec![0; v])?
        };
        Output::Softmax {
            k: vec![0.0; map.num_classes() * dim],
            q: vec![0.0; v * dim],
            map,
        }
    };
    let mut model = PvdmModel {
        cfg: cfg.clone(),
        index,
        counts,
        total,
        words,
        output,
        docs: doc_vecs,
        epoch_losses: Vec::with_capacity(cfg.epochs),
    };
    for (d, t) in docs.iter().zip(&encoded) {
        if t.is_empty() {
            warn!("document {} has no PV-DM vocabulary words; its vector stays at initialisation", d.id());
        }
    }
    let mut order: Vec<usize> = (0..docs.len()).collect();
    let (mut h, mut g) = (vec![0.0; dim], vec![0.0; dim]);
    for e in 0..cfg.epochs {
        let lr = cfg.epoch_learning_rate(e);
        order.shuffle(&mut rng);
        let mut loss = 0.0;
        for &i in &order {
            let mut dv = model.docs[i * dim..(i + 1) * dim].to_vec();
            loss += model.pass(&mut dv, &encoded[i], lr, Mode::Train, &mut rng, &mut h, &mut g);
            model.docs[i * dim..(i + 1) * dim].copy_from_slice(&dv);
        }
        debug!("PV-DM epoch {e}: lr {lr:.5} loss {loss:.3}");
        model.epoch_losses.push(loss);
    }
    Ok(model)
}

/// Trains on the documents at `fit` and infers vectors for the rest; returns
/// one vector per document of `docs`, in order.
pub fn pvdm_features(docs: &[Document], fit: &[usize], cfg: &PvdmConfig) -> Result<Vec<DocumentVector>> {
    let train: Vec<&Document> = fit.iter().map(|&i| &docs[i]).collect();
    let mut model = pvdm_train(&train, cfg)?;
    let position: HashMap<usize, usize> = fit.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let mut out = Vec::with_capacity(docs.len());
    for (i, d) in docs.iter().enumerate() {
        out.push(match position.get(&i) {
            Some(&k) => {
                let v = model.doc_vector(k);
                if model.encode(d).is_empty() {
                    DocumentVector::new(vec![0.0; cfg.dim], Recipe::Pvdm)
                } else {
                    DocumentVector::new(v.to_vec(), Recipe::Pvdm)
                }
            }
            None => model.infer(d, cfg.seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)),
        });
    }
    Ok(out)
}
