//! Class-factorised softmax: `P(w | h) = P(class(w) | h) · P(w | class(w), h)`.

use crate::numerics::kernels::{axpy, dot, gemv_acc, gemv_t_acc, ger_acc, softmax_in_place};
use crate::numerics::{Gradients, ParamStore, Real};
use crate::word_classes::WordClassMap;

/// Tensor indices of an output layer inside a parameter store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct OutputLayer {
    /// Class matrix, `C x d`.
    pub k: usize,
    /// Optional class bias, `C`.
    pub class_bias: Option<usize>,
    /// Word matrix, `V x d`.
    pub q: usize,
}

impl OutputLayer {
    /// Fills `class_probs` (len C) and `word_probs` (members of the target's
    /// class) and returns `-ln P(target | h)`.
    pub fn forward<T: Real>(
        &self,
        store: &ParamStore<T>,
        map: &WordClassMap,
        h: &[T],
        target: u32,
        class_probs: &mut [T],
        word_probs: &mut Vec<T>,
    ) -> f64 {
        let d = h.len();
        match self.class_bias {
            Some(b) => class_probs.copy_from_slice(store.tensor(b).data()),
            None => class_probs.fill(T::zero()),
        }
        gemv_acc(store.tensor(self.k).data(), d, h, class_probs);
        softmax_in_place(class_probs);
        let c = map.class_of(target);
        let q = store.tensor(self.q).data();
        word_probs.clear();
        word_probs.extend(
            map.members(c)
                .iter()
                .map(|&m| dot(&q[m as usize * d..(m as usize + 1) * d], h)),
        );
        softmax_in_place(word_probs);
        let p_class = class_probs[c as usize].as_f64();
        let p_word = word_probs[map.position(target)].as_f64();
        -(p_class.ln() + p_word.ln())
    }

    /// Accumulates parameter gradients of `-ln P(target | h)` and adds
    /// `∂/∂h` into `dh`. Consumes the probability buffers.
    #[allow(clippy::too_many_arguments)]
    pub fn backward<T: Real>(
        &self,
        store: &ParamStore<T>,
        map: &WordClassMap,
        h: &[T],
        target: u32,
        class_probs: &mut [T],
        word_probs: &mut [T],
        grads: &mut Gradients<T>,
        dh: &mut [T],
    ) {
        let d = h.len();
        let c = map.class_of(target);
        class_probs[c as usize] -= T::one();
        if let Some(g) = grads.dense_mut(self.k) {
            ger_acc(g, class_probs, h);
        }
        if let Some(b) = self.class_bias {
            if let Some(g) = grads.dense_mut(b) {
                axpy(T::one(), class_probs, g);
            }
        }
        gemv_t_acc(store.tensor(self.k).data(), d, class_probs, dh);

        word_probs[map.position(target)] -= T::one();
        let q = store.tensor(self.q).data();
        let track_q = grads.is_tracked(self.q);
        for (&m, &delta) in map.members(c).iter().zip(word_probs.iter()) {
            let m = m as usize;
            axpy(delta, &q[m * d..(m + 1) * d], dh);
            if track_q {
                if let Some(row) = grads.row_mut(self.q, m) {
                    axpy(delta, h, row);
                }
            }
        }
    }

    /// Full next-word distribution over the vocabulary.
    pub fn distribution<T: Real>(&self, store: &ParamStore<T>, map: &WordClassMap, h: &[T]) -> Vec<f64> {
        let d = h.len();
        let mut class_probs = match self.class_bias {
            Some(b) => store.tensor(b).data().to_vec(),
            None => vec![T::zero(); map.num_classes()],
        };
        gemv_acc(store.tensor(self.k).data(), d, h, &mut class_probs);
        softmax_in_place(&mut class_probs);
        let q = store.tensor(self.q).data();
        let mut out = vec![0.0; map.vocab_size()];
        let mut scores = Vec::new();
        for c in 0..map.num_classes() as u32 {
            scores.clear();
            scores.extend(
                map.members(c)
                    .iter()
                    .map(|&m| dot(&q[m as usize * d..(m as usize + 1) * d], h)),
            );
            softmax_in_place(&mut scores);
            for (&m, &p) in map.members(c).iter().zip(&scores) {
                out[m as usize] = class_probs[c as usize].as_f64() * p.as_f64();
            }
        }
        out
    }
}
