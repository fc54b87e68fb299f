//! Per-document adaptation of a parent language model and vectorisation of
//! the adapted parameters.

use std::collections::BTreeSet;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::lm::{perplexity, train_epoch, LanguageModel, LstmLm, RnnLm};
use crate::numerics::{Gradients, Real, TrainConfig};
use crate::vectors::{DocumentVector, Recipe};
use crate::{Error, Result};

/// Parameter groups that stay trainable during adaptation; everything else
/// is frozen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FreezeMask {
    groups: BTreeSet<String>,
}

impl FreezeMask {
    pub fn new<I, S>(groups: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let groups: BTreeSet<String> = groups.into_iter().map(Into::into).collect();
        if groups.is_empty() {
            return Err(Error::InvalidArgument("freeze mask must name at least one group".into()));
        }
        Ok(Self { groups })
    }

    /// `{H, K}`.
    pub fn rnn_default() -> Self {
        Self::new(["H", "K"]).expect("nonempty")
    }

    /// `{b_l, b_m, b_c}`.
    pub fn lstm_default() -> Self {
        Self::new(["b_l", "b_m", "b_c"]).expect("nonempty")
    }

    pub fn groups(&self) -> impl Iterator<Item = &str> {
        self.groups.iter().map(String::as_str)
    }

    /// Tensor names the mask unfreezes in `model`; errors on unknown groups.
    pub fn tensors<M: LanguageModel>(&self, model: &M) -> Result<BTreeSet<&'static str>> {
        let available = model.parameter_groups();
        let mut out = BTreeSet::new();
        for g in &self.groups {
            let (_, tensors) = available.iter().find(|(name, _)| name == g).ok_or_else(|| {
                let names: Vec<_> = available.iter().map(|(n, _)| *n).collect();
                Error::InvalidArgument(format!("unknown parameter group `{g}` (model has {names:?})"))
            })?;
            out.extend(tensors.iter().copied());
        }
        Ok(out)
    }
}

/// Result of adapting a parent to one document.
#[derive(Debug, Clone)]
pub struct AdaptOutcome<M> {
    pub model: M,
    pub parent_perplexity: f64,
    pub adapted_perplexity: f64,
    /// Epoch after which the returned model was taken (0 = the parent).
    pub best_epoch: usize,
}

/// Retrains the `mask` groups of a copy of `parent` on `tokens` with a fixed
/// schedule and returns the copy with the lowest perplexity on `tokens`.
///
/// Frozen tensors keep sharing storage with the parent, so they are
/// bitwise-identical to it.
pub fn adapt<M: LanguageModel>(
    parent: &M,
    tokens: &[u32],
    mask: &FreezeMask,
    cfg: &TrainConfig,
) -> Result<AdaptOutcome<M>> {
    cfg.validate()?;
    if let Err(Error::TokenOutOfRange { id, vocab }) = parent.check_tokens(tokens) {
        return Err(Error::VocabularyMismatch(format!(
            "document token {id} is outside the parent vocabulary of {vocab} words"
        )));
    }
    let unfrozen = mask.tensors(parent)?;
    let parent_perplexity = perplexity(parent, tokens)?;

    let mut model = parent.clone();
    let flags: Vec<bool> = model.params().iter().map(|t| t.trainable).collect();
    for i in 0..model.params().len() {
        let t = model.params_mut().tensor_mut(i);
        t.trainable = unfrozen.contains(t.name());
    }
    let mut grads = Gradients::for_store(model.params(), &model.row_sparse());
    let mut best = model.clone();
    let mut best_ppl = parent_perplexity;
    let mut best_epoch = 0;
    let mut lr = cfg.learning_rate;
    for epoch in 1..=cfg.epochs {
        match train_epoch(&mut model, &[tokens], lr, cfg, &mut grads) {
            Ok(_) => {}
            Err(Error::NonFiniteGradient(_)) => return Err(Error::Diverged { epoch }),
            Err(e) => return Err(e),
        }
        let ppl = perplexity(&model, tokens)?;
        if !ppl.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        if ppl < best_ppl {
            best = model.clone();
            best_ppl = ppl;
            best_epoch = epoch;
        }
        lr *= cfg.lr_decay;
    }
    if cfg.epochs > 0 && best_epoch == 0 {
        warn!("adaptation did not lower document perplexity ({parent_perplexity:.4}); returning the parent");
    }
    for (i, f) in flags.into_iter().enumerate() {
        best.params_mut().tensor_mut(i).trainable = f;
    }
    Ok(AdaptOutcome {
        model: best,
        parent_perplexity,
        adapted_perplexity: best_ppl,
        best_epoch,
    })
}

/// Column-by-column enumeration of a row-major `rows x cols` matrix:
/// element `(r, c)` lands at `c * rows + r`.
pub fn vec_colmajor<T: Real>(data: &[T], rows: usize, cols: usize) -> Vec<f64> {
    assert_eq!(data.len(), rows * cols, "matrix data does not match its shape");
    let mut out = Vec::with_capacity(data.len());
    for c in 0..cols {
        for r in 0..rows {
            out.push(data[r * cols + c].as_f64());
        }
    }
    out
}

const NORM_EPS: f64 = 1e-12;

/// `v / ‖v‖₂`; vectors with norm at most 1e-12 are returned unchanged.
pub fn unit_normalize(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= NORM_EPS {
        warn!("normalising a zero vector of length {}; left unchanged", v.len());
        return v.to_vec();
    }
    v.iter().map(|x| x / norm).collect()
}

/// DV-RNN from an adapted RNN-LM: `h = vec(H)`, `k = vec(K)` or `[h; k]`.
pub fn dv_rnn<T: Real>(model: &RnnLm<T>, recipe: &Recipe) -> Result<DocumentVector> {
    let d = model.hidden();
    let h = || vec_colmajor(model.recurrent(), d, d);
    let k = || vec_colmajor(model.class_matrix(), model.num_classes(), d);
    let values = match recipe {
        Recipe::DvRnnH => h(),
        Recipe::DvRnnK => k(),
        Recipe::DvRnnHk => {
            let mut v = h();
            v.extend(k());
            v
        }
        other => {
            return Err(Error::InvalidArgument(format!("`{other}` is not an RNN document vector")));
        }
    };
    Ok(DocumentVector::new(values, recipe.clone()))
}

/// All DV-LSTM blocks of one adapted model.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmVectors {
    /// `[n(b_mf); n(b_mi); n(b_mo); n(b_mc)]`.
    pub bm: Vec<f64>,
    /// `bm` followed by `n(b_l)`.
    pub ba: Vec<f64>,
    /// `n(b_c)`.
    pub bc: Vec<f64>,
    /// `[n(ba); n(b_c)]`.
    pub dm: Vec<f64>,
}

impl LstmVectors {
    pub fn get(&self, recipe: &Recipe) -> Result<DocumentVector> {
        let values = match recipe {
            Recipe::DvLstmBm => &self.bm,
            Recipe::DvLstmBa => &self.ba,
            Recipe::DvLstmBc => &self.bc,
            Recipe::DvLstmDm => &self.dm,
            other => {
                return Err(Error::InvalidArgument(format!("`{other}` is not an LSTM document vector")));
            }
        };
        Ok(DocumentVector::new(values.clone(), recipe.clone()))
    }
}

fn normalized<T: Real>(model: &LstmLm<T>, name: &str) -> Vec<f64> {
    let b = model.bias(name).expect("LSTM models always carry their bias tensors");
    unit_normalize(&b.iter().map(|x| x.as_f64()).collect::<Vec<_>>())
}

/// DV-LSTM blocks from the bias vectors of an adapted LSTM-LM.
pub fn dv_lstm<T: Real>(model: &LstmLm<T>) -> LstmVectors {
    let mut bm = Vec::with_capacity(4 * model.sizes().hidden);
    for name in crate::lm::GATE_BIASES {
        bm.extend(normalized(model, name));
    }
    let mut ba = bm.clone();
    ba.extend(normalized(model, "b_l"));
    let bc = normalized(model, "b_c");
    let mut dm = unit_normalize(&ba);
    dm.extend(&bc);
    LstmVectors { bm, ba, bc, dm }
}

/// `[n(a); n(b)]`. An empty operand leaves the other unchanged.
pub fn concat_features(a: &DocumentVector, b: &DocumentVector) -> DocumentVector {
    if a.values.is_empty() {
        return b.clone();
    }
    if b.values.is_empty() {
        return a.clone();
    }
    let mut values = unit_normalize(&a.values);
    values.extend(unit_normalize(&b.values));
    let mut parts = a.recipe.leaves();
    parts.extend(b.recipe.leaves());
    DocumentVector::new(values, Recipe::Concat(parts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colmajor_small() {
        assert_eq!(vec_colmajor(&[1.0f64, 2.0, 3.0, 4.0], 2, 2), vec![1.0, 3.0, 2.0, 4.0]);
        assert_eq!(vec_colmajor(&[1.0f64, 2.0, 3.0], 1, 3), vec![1.0, 2.0, 3.0]);
        assert_eq!(vec_colmajor(&vec![0.5f32; 10000], 100, 100).len(), 10000);
    }

    #[test]
    fn normalize_cases() {
        assert_eq!(unit_normalize(&[3.0, 4.0]), vec![0.6, 0.8]);
        assert_eq!(unit_normalize(&[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn concat_dims_and_identity() {
        let a = DocumentVector::new(vec![1.0; 1000], Recipe::DvLstmDm);
        let b = DocumentVector::new(vec![2.0; 1000], Recipe::Tfidf { n: 5, top_k: 1000 });
        let c = concat_features(&a, &b);
        assert_eq!(c.dim(), 2000);
        assert_eq!(c.recipe.to_string(), "dv_lstm_dm+tfidf5_1000");
        let empty = DocumentVector::new(vec![], Recipe::Pvdm);
        assert_eq!(concat_features(&a, &empty), a);
        assert_eq!(concat_features(&empty, &b), b);
    }

    #[test]
    fn mask_rejects_unknown_and_empty() {
        assert!(FreezeMask::new(Vec::<String>::new()).is_err());
        let map = crate::word_classes::WordClassMap::round_robin(6, 2).unwrap();
        let rnn = RnnLm::<f64>::new(map, 3, 1).unwrap();
        let bad = FreezeMask::new(["H", "W_m"]).unwrap();
        assert!(bad.tensors(&rnn).is_err());
        let ok = FreezeMask::rnn_default().tensors(&rnn).unwrap();
        assert_eq!(ok.into_iter().collect::<Vec<_>>(), vec!["H", "K"]);
    }
}
