//! LSTM LM: one-hot input → bias-free linear compression `P` → sigmoid layer
//! (`W_l`, `b_l`) → single LSTM layer without peepholes → class-factorised
//! output with class bias `b_c`.
//!
//! The gate weights are stacked row-wise in `[forget; input; output; cell]`
//! order in `W_m` (input connections) and `R_m` (recurrent connections). Each
//! gate keeps its own bias vector so they can be adapted and extracted
//! separately.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::output::OutputLayer;
use super::{class_map_from_checkpoint, expect_kind, train_parent, ForwardTrace, LanguageModel, TrainReport};
use crate::corpus::{Document, LabeledCorpus};
use crate::numerics::kernels::{gemv_acc, gemv_t_acc, ger_acc, sigmoid};
use crate::numerics::{Checkpoint, Gradients, ParamStore, Real, TrainConfig};
use crate::word_classes::WordClassMap;
use crate::{Error, Result};

const INIT_SCALE: f64 = 0.1;
const FORGET_BIAS_INIT: f64 = 1.0;

/// Gate bias tensor names in stacking order.
pub const GATE_BIASES: [&str; 4] = ["b_mf", "b_mi", "b_mo", "b_mc"];

/// Layer widths of the LSTM-LM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LstmSizes {
    /// Width of the linear compression layer.
    pub compression: usize,
    /// Width of the sigmoid layer.
    pub sigmoid: usize,
    /// Number of LSTM cells.
    pub hidden: usize,
}

impl Default for LstmSizes {
    fn default() -> Self {
        Self {
            compression: 100,
            sigmoid: 100,
            hidden: 100,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    p: usize,
    w_l: usize,
    b_l: usize,
    w_m: usize,
    r_m: usize,
    gate_bias: [usize; 4],
    out: OutputLayer,
}

#[derive(Debug, Clone)]
pub struct LstmLm<T: Real> {
    store: ParamStore<T>,
    map: Arc<WordClassMap>,
    sizes: LstmSizes,
    layout: Layout,
}

/// Hidden and cell state.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState<T> {
    pub h: Vec<T>,
    pub c: Vec<T>,
}

/// Activations of one step, kept for backpropagation.
#[derive(Debug, Clone)]
struct StepCache<T> {
    input: u32,
    /// Sigmoid-layer output.
    l: Vec<T>,
    /// Gate activations `[f; i; o; g]`.
    gates: Vec<T>,
    c: Vec<T>,
    tanh_c: Vec<T>,
    h: Vec<T>,
}

impl<T: Real> LstmLm<T> {
    /// Uniform `[-0.1, 0.1]` weights, forget-gate bias 1, other biases 0.
    pub fn new(map: WordClassMap, sizes: LstmSizes, seed: u64) -> Result<Self> {
        if sizes.compression == 0 || sizes.sigmoid == 0 || sizes.hidden == 0 {
            return Err(Error::InvalidArgument("layer widths must be positive".into()));
        }
        let v = map.vocab_size();
        let c = map.num_classes();
        let LstmSizes {
            compression: p,
            sigmoid: s,
            hidden: h,
        } = sizes;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        store.insert_uniform("P", v, p, INIT_SCALE, &mut rng)?;
        store.insert_uniform("W_l", s, p, INIT_SCALE, &mut rng)?;
        store.insert_zeros("b_l", s, 1)?;
        store.insert_uniform("W_m", 4 * h, s, INIT_SCALE, &mut rng)?;
        store.insert_uniform("R_m", 4 * h, h, INIT_SCALE, &mut rng)?;
        store.insert_filled("b_mf", h, 1, FORGET_BIAS_INIT)?;
        store.insert_zeros("b_mi", h, 1)?;
        store.insert_zeros("b_mo", h, 1)?;
        store.insert_zeros("b_mc", h, 1)?;
        store.insert_uniform("K", c, h, INIT_SCALE, &mut rng)?;
        store.insert_zeros("b_c", c, 1)?;
        store.insert_uniform("Q", v, h, INIT_SCALE, &mut rng)?;
        Self::from_store(store, map)
    }

    pub fn from_store(store: ParamStore<T>, map: WordClassMap) -> Result<Self> {
        let get = |name: &str| {
            store
                .index_of(name)
                .ok_or_else(|| Error::Shape(format!("LSTM store lacks tensor `{name}`")))
        };
        let layout = Layout {
            p: get("P")?,
            w_l: get("W_l")?,
            b_l: get("b_l")?,
            w_m: get("W_m")?,
            r_m: get("R_m")?,
            gate_bias: [get("b_mf")?, get("b_mi")?, get("b_mo")?, get("b_mc")?],
            out: OutputLayer {
                k: get("K")?,
                class_bias: Some(get("b_c")?),
                q: get("Q")?,
            },
        };
        let sizes = LstmSizes {
            compression: store.tensor(layout.p).cols(),
            sigmoid: store.tensor(layout.w_l).rows(),
            hidden: store.tensor(layout.r_m).cols(),
        };
        let (v, c) = (map.vocab_size(), map.num_classes());
        let (p, s, h) = (sizes.compression, sizes.sigmoid, sizes.hidden);
        let mut expect = vec![
            (layout.p, v, p),
            (layout.w_l, s, p),
            (layout.b_l, s, 1),
            (layout.w_m, 4 * h, s),
            (layout.r_m, 4 * h, h),
            (layout.out.k, c, h),
            (layout.out.class_bias.expect("set above"), c, 1),
            (layout.out.q, v, h),
        ];
        expect.extend(layout.gate_bias.iter().map(|&b| (b, h, 1)));
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
            sizes,
            layout,
        })
    }

    pub fn from_checkpoint(ck: &Checkpoint<T>) -> Result<Self> {
        expect_kind(ck, "lstm")?;
        Self::from_store(ck.store.clone(), class_map_from_checkpoint(ck)?)
    }

    pub fn sizes(&self) -> LstmSizes {
        self.sizes
    }

    pub fn num_classes(&self) -> usize {
        self.map.num_classes()
    }

    /// Bias vector by tensor name (`b_l`, `b_mf`, `b_mi`, `b_mo`, `b_mc`, `b_c`).
    pub fn bias(&self, name: &str) -> Option<&[T]> {
        self.store.get(name).filter(|t| t.cols() == 1).map(|t| t.data())
    }

    pub fn cast<U: Real>(&self) -> LstmLm<U> {
        LstmLm {
            store: self.store.cast(),
            map: self.map.clone(),
            sizes: self.sizes,
            layout: self.layout,
        }
    }

    /// One step of the input stack and LSTM cell.
    fn step(&self, input: u32, prev: &LstmState<T>, cache: &mut StepCache<T>) {
        let h = self.sizes.hidden;
        let st = &self.store;
        cache.input = input;
        cache.l.copy_from_slice(st.tensor(self.layout.b_l).data());
        gemv_acc(
            st.tensor(self.layout.w_l).data(),
            self.sizes.compression,
            st.tensor(self.layout.p).row(input as usize),
            &mut cache.l,
        );
        for x in cache.l.iter_mut() {
            *x = sigmoid(*x);
        }
        for (k, &b) in self.layout.gate_bias.iter().enumerate() {
            cache.gates[k * h..(k + 1) * h].copy_from_slice(st.tensor(b).data());
        }
        gemv_acc(st.tensor(self.layout.w_m).data(), self.sizes.sigmoid, &cache.l, &mut cache.gates);
        gemv_acc(st.tensor(self.layout.r_m).data(), h, &prev.h, &mut cache.gates);
        let (sig, cell) = cache.gates.split_at_mut(3 * h);
        for x in sig.iter_mut() {
            *x = sigmoid(*x);
        }
        for x in cell.iter_mut() {
            *x = x.tanh();
        }
        for j in 0..h {
            let (f, i, o, g) = (sig[j], sig[h + j], sig[2 * h + j], cell[j]);
            let c = f * prev.c[j] + i * g;
            let tc = c.tanh();
            cache.c[j] = c;
            cache.tanh_c[j] = tc;
            cache.h[j] = o * tc;
        }
    }

    fn new_cache(&self) -> StepCache<T> {
        let h = self.sizes.hidden;
        StepCache {
            input: 0,
            l: vec![T::zero(); self.sizes.sigmoid],
            gates: vec![T::zero(); 4 * h],
            c: vec![T::zero(); h],
            tanh_c: vec![T::zero(); h],
            h: vec![T::zero(); h],
        }
    }

    /// Gate activations `[f; i; o; g]` at every input position.
    pub fn gate_activations(&self, tokens: &[u32]) -> Result<Vec<Vec<f64>>> {
        self.check_tokens(tokens)?;
        let mut state = self.initial_state();
        let mut cache = self.new_cache();
        let mut out = Vec::with_capacity(tokens.len());
        for &w in tokens {
            self.step(w, &state, &mut cache);
            state.h.copy_from_slice(&cache.h);
            state.c.copy_from_slice(&cache.c);
            out.push(cache.gates.iter().map(|g| g.as_f64()).collect());
        }
        Ok(out)
    }

    /// Cell states at every input position.
    pub fn cell_states(&self, tokens: &[u32]) -> Result<Vec<Vec<f64>>> {
        self.check_tokens(tokens)?;
        let mut state = self.initial_state();
        let mut cache = self.new_cache();
        let mut out = Vec::with_capacity(tokens.len());
        for &w in tokens {
            self.step(w, &state, &mut cache);
            state.h.copy_from_slice(&cache.h);
            state.c.copy_from_slice(&cache.c);
            out.push(cache.c.iter().map(|g| g.as_f64()).collect());
        }
        Ok(out)
    }
}

impl<T: Real> LanguageModel for LstmLm<T> {
    type Scalar = T;
    type State = LstmState<T>;

    fn params(&self) -> &ParamStore<T> {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    fn class_map(&self) -> &WordClassMap {
        &self.map
    }

    fn initial_state(&self) -> LstmState<T> {
        LstmState {
            h: vec![T::zero(); self.sizes.hidden],
            c: vec![T::zero(); self.sizes.hidden],
        }
    }

    fn row_sparse(&self) -> Vec<usize> {
        vec![self.layout.p, self.layout.out.q]
    }

    fn parameter_groups(&self) -> Vec<(&'static str, Vec<&'static str>)> {
        vec![
            ("P", vec!["P"]),
            ("W_l", vec!["W_l"]),
            ("b_l", vec!["b_l"]),
            ("W_m", vec!["W_m"]),
            ("R_m", vec!["R_m"]),
            ("b_m", GATE_BIASES.to_vec()),
            ("b_mf", vec!["b_mf"]),
            ("b_mi", vec!["b_mi"]),
            ("b_mo", vec!["b_mo"]),
            ("b_mc", vec!["b_mc"]),
            ("K", vec!["K"]),
            ("b_c", vec!["b_c"]),
            ("Q", vec!["Q"]),
        ]
    }

    fn advance(&self, state: &mut LstmState<T>, tokens: &[u32]) -> f64 {
        let mut cache = self.new_cache();
        let mut pc = vec![T::zero(); self.map.num_classes()];
        let mut pw = Vec::new();
        let mut loss = 0.0;
        for w in tokens.windows(2) {
            self.step(w[0], state, &mut cache);
            state.h.copy_from_slice(&cache.h);
            state.c.copy_from_slice(&cache.c);
            loss += self.layout.out.forward(&self.store, &self.map, &state.h, w[1], &mut pc, &mut pw);
        }
        loss
    }

    fn advance_grad(&self, state: &mut LstmState<T>, tokens: &[u32], grads: &mut Gradients<T>) -> f64 {
        let steps = tokens.len().saturating_sub(1);
        if steps == 0 {
            return 0.0;
        }
        let h = self.sizes.hidden;
        let s_w = self.sizes.sigmoid;
        let p_w = self.sizes.compression;
        let nc = self.map.num_classes();
        let init = state.clone();
        let mut caches: Vec<StepCache<T>> = Vec::with_capacity(steps);
        let mut pcs = vec![T::zero(); steps * nc];
        let mut pws: Vec<Vec<T>> = Vec::with_capacity(steps);
        let mut loss = 0.0;
        for t in 0..steps {
            let mut cache = self.new_cache();
            self.step(tokens[t], state, &mut cache);
            state.h.copy_from_slice(&cache.h);
            state.c.copy_from_slice(&cache.c);
            let mut pw = Vec::new();
            loss += self.layout.out.forward(
                &self.store,
                &self.map,
                &cache.h,
                tokens[t + 1],
                &mut pcs[t * nc..(t + 1) * nc],
                &mut pw,
            );
            pws.push(pw);
            caches.push(cache);
        }

        let st = &self.store;
        let w_m = st.tensor(self.layout.w_m).data();
        let r_m = st.tensor(self.layout.r_m).data();
        let w_l = st.tensor(self.layout.w_l).data();
        let need_input_stack =
            grads.is_tracked(self.layout.b_l) || grads.is_tracked(self.layout.w_l) || grads.is_tracked(self.layout.p);
        let mut dh_next = vec![T::zero(); h];
        let mut dc_next = vec![T::zero(); h];
        let mut dh = vec![T::zero(); h];
        let mut dgates = vec![T::zero(); 4 * h];
        let mut dl = vec![T::zero(); s_w];
        let mut de = vec![T::zero(); p_w];
        for t in (0..steps).rev() {
            let cache = &caches[t];
            let (h_prev, c_prev) = if t == 0 {
                (&init.h[..], &init.c[..])
            } else {
                (&caches[t - 1].h[..], &caches[t - 1].c[..])
            };
            dh.copy_from_slice(&dh_next);
            self.layout.out.backward(
                st,
                &self.map,
                &cache.h,
                tokens[t + 1],
                &mut pcs[t * nc..(t + 1) * nc],
                &mut pws[t],
                grads,
                &mut dh,
            );
            let g = &cache.gates;
            for j in 0..h {
                let (f, i, o, cand) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                let tc = cache.tanh_c[j];
                let dc = dh[j] * o * (T::one() - tc * tc) + dc_next[j];
                let one = T::one();
                dgates[j] = dc * c_prev[j] * f * (one - f);
                dgates[h + j] = dc * cand * i * (one - i);
                dgates[2 * h + j] = dh[j] * tc * o * (one - o);
                dgates[3 * h + j] = dc * i * (one - cand * cand);
                dc_next[j] = dc * f;
            }
            for (k, &b) in self.layout.gate_bias.iter().enumerate() {
                if let Some(gb) = grads.dense_mut(b) {
                    for (x, &d) in gb.iter_mut().zip(&dgates[k * h..(k + 1) * h]) {
                        *x += d;
                    }
                }
            }
            if let Some(gw) = grads.dense_mut(self.layout.w_m) {
                ger_acc(gw, &dgates, &cache.l);
            }
            if let Some(gr) = grads.dense_mut(self.layout.r_m) {
                ger_acc(gr, &dgates, h_prev);
            }
            dh_next.fill(T::zero());
            if t > 0 {
                gemv_t_acc(r_m, h, &dgates, &mut dh_next);
            }
            if need_input_stack {
                dl.fill(T::zero());
                gemv_t_acc(w_m, s_w, &dgates, &mut dl);
                for (x, &y) in dl.iter_mut().zip(&cache.l) {
                    *x *= y * (T::one() - y);
                }
                if let Some(gb) = grads.dense_mut(self.layout.b_l) {
                    for (x, &d) in gb.iter_mut().zip(&dl) {
                        *x += d;
                    }
                }
                let e = st.tensor(self.layout.p).row(cache.input as usize);
                if let Some(gw) = grads.dense_mut(self.layout.w_l) {
                    ger_acc(gw, &dl, e);
                }
                if grads.is_tracked(self.layout.p) {
                    de.fill(T::zero());
                    gemv_t_acc(w_l, p_w, &dl, &mut de);
                    if let Some(row) = grads.row_mut(self.layout.p, cache.input as usize) {
                        for (x, &d) in row.iter_mut().zip(&de) {
                            *x += d;
                        }
                    }
                }
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
        let mut cache = self.new_cache();
        let mut out = ForwardTrace {
            class_probs: Vec::new(),
            word_probs: Vec::new(),
            log_loss: 0.0,
        };
        let mut pc = vec![T::zero(); self.map.num_classes()];
        let mut pw = Vec::new();
        for w in tokens.windows(2) {
            self.step(w[0], &state, &mut cache);
            state.h.copy_from_slice(&cache.h);
            state.c.copy_from_slice(&cache.c);
            out.log_loss += self.layout.out.forward(&self.store, &self.map, &state.h, w[1], &mut pc, &mut pw);
            out.class_probs.push(pc.iter().map(|p| p.as_f64()).collect());
            out.word_probs.push(pw.iter().map(|p| p.as_f64()).collect());
        }
        Ok(out)
    }

    fn next_word_distributions(&self, tokens: &[u32]) -> Result<Vec<Vec<f64>>> {
        self.check_tokens(tokens)?;
        let mut state = self.initial_state();
        let mut cache = self.new_cache();
        let mut out = Vec::with_capacity(tokens.len());
        for &w in tokens {
            self.step(w, &state, &mut cache);
            state.h.copy_from_slice(&cache.h);
            state.c.copy_from_slice(&cache.c);
            out.push(self.layout.out.distribution(&self.store, &self.map, &state.h));
        }
        Ok(out)
    }

    fn to_checkpoint(&self) -> Checkpoint<T> {
        let mut ck = Checkpoint::new(self.store.clone());
        ck.meta.insert("kind".into(), "lstm".into());
        ck.meta.insert("compression".into(), self.sizes.compression.to_string());
        ck.meta.insert("sigmoid".into(), self.sizes.sigmoid.to_string());
        ck.meta.insert("hidden".into(), self.sizes.hidden.to_string());
        ck.meta.insert("classes".into(), self.map.num_classes().to_string());
        ck.meta.insert("vocab".into(), self.map.vocab_size().to_string());
        ck.arrays.insert("class_of".into(), self.map.assignment().to_vec());
        ck
    }
}

/// Trains a parent LSTM-LM on every document of `corpus`.
pub fn lstm_train<T: Real>(
    corpus: &LabeledCorpus,
    cfg: &TrainConfig,
    sizes: LstmSizes,
    class_map: &WordClassMap,
) -> Result<(LstmLm<T>, TrainReport)> {
    if class_map.vocab_size() != corpus.vocabulary().len() {
        return Err(Error::VocabularyMismatch(format!(
            "class map covers {} words, corpus vocabulary has {}",
            class_map.vocab_size(),
            corpus.vocabulary().len()
        )));
    }
    let mut model = LstmLm::new(class_map.clone(), sizes, cfg.seed)?;
    let docs: Vec<&[u32]> = corpus.documents().iter().map(Document::tokens).collect();
    let report = train_parent(&mut model, &docs, cfg)?;
    Ok((model, report))
}
