//! Simple recurrent LM: `s_t = σ(U x_t + H s_{t-1})` with a class-factorised
//! output through `K` (classes) and `Q` (words). No bias terms.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::output::OutputLayer;
use super::{class_map_from_checkpoint, expect_kind, train_parent, ForwardTrace, LanguageModel, TrainReport};
use crate::corpus::{Document, LabeledCorpus};
use crate::numerics::kernels::{gemv_acc, gemv_t_acc, ger_acc, sigmoid};
use crate::numerics::{Checkpoint, Gradients, ParamStore, Real, TrainConfig};
use crate::word_classes::WordClassMap;
use crate::{Error, Result};

const INIT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy)]
struct Layout {
    u: usize,
    h: usize,
    out: OutputLayer,
}

/// Parameters `U` (`V x d`, row `w` is the projection of word `w`), `H`
/// (`d x d`), `Q` (`V x d`) and `K` (`C x d`).
#[derive(Debug, Clone)]
pub struct RnnLm<T: Real> {
    store: ParamStore<T>,
    map: Arc<WordClassMap>,
    hidden: usize,
    layout: Layout,
}

impl<T: Real> RnnLm<T> {
    /// Uniform `[-0.1, 0.1]` initialisation.
    pub fn new(map: WordClassMap, hidden: usize, seed: u64) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::InvalidArgument("hidden size must be positive".into()));
        }
        let v = map.vocab_size();
        let c = map.num_classes();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        store.insert_uniform("U", v, hidden, INIT_SCALE, &mut rng)?;
        store.insert_uniform("H", hidden, hidden, INIT_SCALE, &mut rng)?;
        store.insert_uniform("Q", v, hidden, INIT_SCALE, &mut rng)?;
        store.insert_uniform("K", c, hidden, INIT_SCALE, &mut rng)?;
        Self::from_store(store, map)
    }

    /// Wraps an existing store; tensor shapes must agree with `map`.
    pub fn from_store(store: ParamStore<T>, map: WordClassMap) -> Result<Self> {
        let get = |name: &str| {
            store
                .index_of(name)
                .ok_or_else(|| Error::Shape(format!("RNN store lacks tensor `{name}`")))
        };
        let layout = Layout {
            u: get("U")?,
            h: get("H")?,
            out: OutputLayer {
                k: get("K")?,
                class_bias: None,
                q: get("Q")?,
            },
        };
        let hidden = store.tensor(layout.h).rows();
        let v = map.vocab_size();
        let c = map.num_classes();
        let expect = [
            (layout.u, v, hidden),
            (layout.h, hidden, hidden),
            (layout.out.q, v, hidden),
            (layout.out.k, c, hidden),
        ];
        for (idx, r, cols) in expect {
            let t = store.tensor(idx);
            if t.rows() != r || t.cols() != cols {
                return Err(Error::Shape(format!(
                    "tensor `{}` is {}x{}, expected {r}x{cols}",
                    t.name(),
                    t.rows(),
                    t.cols()
                )));
            }
        }
        Ok(Self {
            store,
            map: Arc::new(map),
            hidden,
            layout,
        })
    }

    pub fn from_checkpoint(ck: &Checkpoint<T>) -> Result<Self> {
        expect_kind(ck, "rnn")?;
        Self::from_store(ck.store.clone(), class_map_from_checkpoint(ck)?)
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn num_classes(&self) -> usize {
        self.map.num_classes()
    }

    /// Recurrent matrix `H`, row-major `d x d`.
    pub fn recurrent(&self) -> &[T] {
        self.store.tensor(self.layout.h).data()
    }

    /// Word-class matrix `K`, row-major `C x d`.
    pub fn class_matrix(&self) -> &[T] {
        self.store.tensor(self.layout.out.k).data()
    }

    /// Converts to another precision.
    pub fn cast<U: Real>(&self) -> RnnLm<U> {
        RnnLm {
            store: self.store.cast(),
            map: self.map.clone(),
            hidden: self.hidden,
            layout: self.layout,
        }
    }

    fn step(&self, input: u32, prev: &[T], next: &mut [T]) {
        next.copy_from_slice(self.store.tensor(self.layout.u).row(input as usize));
        gemv_acc(self.store.tensor(self.layout.h).data(), self.hidden, prev, next);
        for x in next.iter_mut() {
            *x = sigmoid(*x);
        }
    }
}

impl<T: Real> LanguageModel for RnnLm<T> {
    type Scalar = T;
    type State = Vec<T>;

    fn params(&self) -> &ParamStore<T> {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    fn class_map(&self) -> &WordClassMap {
        &self.map
    }

    fn initial_state(&self) -> Vec<T> {
        vec![T::zero(); self.hidden]
    }

    fn row_sparse(&self) -> Vec<usize> {
        vec![self.layout.u, self.layout.out.q]
    }

    fn parameter_groups(&self) -> Vec<(&'static str, Vec<&'static str>)> {
        vec![("U", vec!["U"]), ("H", vec!["H"]), ("Q", vec!["Q"]), ("K", vec!["K"])]
    }

    fn advance(&self, state: &mut Vec<T>, tokens: &[u32]) -> f64 {
        let mut next = vec![T::zero(); self.hidden];
        let mut pc = vec![T::zero(); self.map.num_classes()];
        let mut pw = Vec::new();
        let mut loss = 0.0;
        for w in tokens.windows(2) {
            self.step(w[0], state, &mut next);
            std::mem::swap(state, &mut next);
            loss += self.layout.out.forward(&self.store, &self.map, state, w[1], &mut pc, &mut pw);
        }
        loss
    }

    fn advance_grad(&self, state: &mut Vec<T>, tokens: &[u32], grads: &mut Gradients<T>) -> f64 {
        let steps = tokens.len().saturating_sub(1);
        if steps == 0 {
            return 0.0;
        }
        let d = self.hidden;
        let c = self.map.num_classes();
        // hs[t] is the state before step t; hs[steps] the final state.
        let mut hs = vec![T::zero(); (steps + 1) * d];
        hs[..d].copy_from_slice(state);
        let mut pcs = vec![T::zero(); steps * c];
        let mut pws: Vec<Vec<T>> = Vec::with_capacity(steps);
        let mut loss = 0.0;
        for t in 0..steps {
            let (before, after) = hs.split_at_mut((t + 1) * d);
            let cur = &mut after[..d];
            self.step(tokens[t], &before[t * d..], cur);
            let mut pw = Vec::new();
            loss += self.layout.out.forward(
                &self.store,
                &self.map,
                cur,
                tokens[t + 1],
                &mut pcs[t * c..(t + 1) * c],
                &mut pw,
            );
            pws.push(pw);
        }
        state.copy_from_slice(&hs[steps * d..]);

        let h_mat = self.store.tensor(self.layout.h).data();
        let mut carry = vec![T::zero(); d];
        let mut dh = vec![T::zero(); d];
        for t in (0..steps).rev() {
            let s = &hs[(t + 1) * d..(t + 2) * d];
            let s_prev = &hs[t * d..(t + 1) * d];
            dh.copy_from_slice(&carry);
            self.layout.out.backward(
                &self.store,
                &self.map,
                s,
                tokens[t + 1],
                &mut pcs[t * c..(t + 1) * c],
                &mut pws[t],
                grads,
                &mut dh,
            );
            for (g, &y) in dh.iter_mut().zip(s) {
                *g *= y * (T::one() - y);
            }
            if let Some(row) = grads.row_mut(self.layout.u, tokens[t] as usize) {
                for (r, &g) in row.iter_mut().zip(&dh) {
                    *r += g;
                }
            }
            if let Some(g) = grads.dense_mut(self.layout.h) {
                ger_acc(g, &dh, s_prev);
            }
            carry.fill(T::zero());
            if t > 0 {
                gemv_t_acc(h_mat, d, &dh, &mut carry);
            }
        }
        loss
    }

    fn trace(&self, tokens: &[u32]) -> Result<ForwardTrace> {
        self.check_tokens(tokens)?;
        if tokens.is_empty() {
            return Err(Error::InvalidArgument("empty token sequence".into()));
        }
        let mut state = self.initial_state();
        let mut next = state.clone();
        let mut out = ForwardTrace {
            class_probs: Vec::new(),
            word_probs: Vec::new(),
            log_loss: 0.0,
        };
        let mut pc = vec![T::zero(); self.map.num_classes()];
        let mut pw = Vec::new();
        for w in tokens.windows(2) {
            self.step(w[0], &state, &mut next);
            std::mem::swap(&mut state, &mut next);
            out.log_loss += self.layout.out.forward(&self.store, &self.map, &state, w[1], &mut pc, &mut pw);
            out.class_probs.push(pc.iter().map(|p| p.as_f64()).collect());
            out.word_probs.push(pw.iter().map(|p| p.as_f64()).collect());
        }
        Ok(out)
    }

    fn next_word_distributions(&self, tokens: &[u32]) -> Result<Vec<Vec<f64>>> {
        self.check_tokens(tokens)?;
        let mut state = self.initial_state();
        let mut next = state.clone();
        let mut out = Vec::with_capacity(tokens.len());
        for &w in tokens {
            self.step(w, &state, &mut next);
            std::mem::swap(&mut state, &mut next);
            out.push(self.layout.out.distribution(&self.store, &self.map, &state));
        }
        Ok(out)
    }

    fn to_checkpoint(&self) -> Checkpoint<T> {
        let mut ck = Checkpoint::new(self.store.clone());
        ck.meta.insert("kind".into(), "rnn".into());
        ck.meta.insert("hidden".into(), self.hidden.to_string());
        ck.meta.insert("classes".into(), self.map.num_classes().to_string());
        ck.meta.insert("vocab".into(), self.map.vocab_size().to_string());
        ck.arrays.insert("class_of".into(), self.map.assignment().to_vec());
        ck
    }
}

/// Trains a parent RNN-LM on every document of `corpus`.
pub fn rnn_train<T: Real>(
    corpus: &LabeledCorpus,
    cfg: &TrainConfig,
    hidden: usize,
    class_map: &WordClassMap,
) -> Result<(RnnLm<T>, TrainReport)> {
    if class_map.vocab_size() != corpus.vocabulary().len() {
        return Err(Error::VocabularyMismatch(format!(
            "class map covers {} words, corpus vocabulary has {}",
            class_map.vocab_size(),
            corpus.vocabulary().len()
        )));
    }
    let mut model = RnnLm::new(class_map.clone(), hidden, cfg.seed)?;
    let docs: Vec<&[u32]> = corpus.documents().iter().map(Document::tokens).collect();
    let report = train_parent(&mut model, &docs, cfg)?;
    Ok((model, report))
}
