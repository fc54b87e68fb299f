use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;

use super::kernels::l2_norm;
use super::Real;
use crate::{Error, Result};

/// A named, row-major real tensor. Vectors are `n x 1`.
///
/// Storage is reference counted and copy-on-write, so cloning a store shares
/// every tensor until one side mutates it.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    name: String,
    rows: usize,
    cols: usize,
    data: Arc<Vec<T>>,
    pub trainable: bool,
}

impl<T: Real> Tensor<T> {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// True when both tensors share the same allocation.
    pub fn shares_storage(&self, other: &Tensor<T>) -> bool {
        Arc::ptr_eq(&self.data, &other.data)
    }
}

/// Named tensors with fixed shapes and per-tensor trainable flags.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    tensors: Vec<Tensor<T>>,
    index: BTreeMap<String, usize>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            tensors: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    /// Adds a tensor; returns its index.
    pub fn insert(&mut self, name: &str, rows: usize, cols: usize, data: Vec<T>) -> Result<usize> {
        if self.index.contains_key(name) {
            return Err(Error::InvalidArgument(format!("duplicate tensor name `{name}`")));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "tensor `{name}`: {} values for shape {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tensor `{name}` has a non-finite entry at {bad}"
            )));
        }
        let idx = self.tensors.len();
        self.tensors.push(Tensor {
            name: name.to_owned(),
            rows,
            cols,
            data: Arc::new(data),
            trainable: true,
        });
        self.index.insert(name.to_owned(), idx);
        Ok(idx)
    }

    pub fn insert_zeros(&mut self, name: &str, rows: usize, cols: usize) -> Result<usize> {
        self.insert(name, rows, cols, vec![T::zero(); rows * cols])
    }

    pub fn insert_filled(&mut self, name: &str, rows: usize, cols: usize, value: f64) -> Result<usize> {
        self.insert(name, rows, cols, vec![T::lit(value); rows * cols])
    }

    /// Uniform initialisation in `[-scale, scale]`.
    pub fn insert_uniform<R: Rng>(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        scale: f64,
        rng: &mut R,
    ) -> Result<usize> {
        let data = (0..rows * cols)
            .map(|_| T::lit(rng.random_range(-scale..=scale)))
            .collect();
        self.insert(name, rows, cols, data)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.tensors.iter()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|t| t.name.as_str())
    }

    pub fn tensor(&self, idx: usize) -> &Tensor<T> {
        &self.tensors[idx]
    }

    pub fn tensor_mut(&mut self, idx: usize) -> &mut Tensor<T> {
        &mut self.tensors[idx]
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index_of(name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.index_of(name).map(move |i| &mut self.tensors[i])
    }

    pub fn set_all_trainable(&mut self, trainable: bool) {
        for t in &mut self.tensors {
            t.trainable = trainable;
        }
    }

    /// Same names and shapes, all entries zero.
    pub fn zeros_like(&self) -> Self {
        let mut out = Self::new();
        for t in &self.tensors {
            out.insert_zeros(&t.name, t.rows, t.cols).expect("unique names");
            out.tensors.last_mut().expect("just inserted").trainable = t.trainable;
        }
        out
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Converts every tensor to another precision, keeping flags.
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        let mut out = ParamStore::<U>::new();
        for t in &self.tensors {
            let data = t.data.iter().map(|v| U::lit(v.as_f64())).collect();
            out.insert(&t.name, t.rows, t.cols, data).expect("valid source store");
            out.tensors.last_mut().expect("just inserted").trainable = t.trainable;
        }
        out
    }

    fn check_compatible(&self, other: &ParamStore<T>) -> Result<()> {
        if self.tensors.len() != other.tensors.len() {
            return Err(Error::Shape(format!(
                "stores hold {} and {} tensors",
                self.tensors.len(),
                other.tensors.len()
            )));
        }
        for (a, b) in self.tensors.iter().zip(&other.tensors) {
            if a.name != b.name || a.rows != b.rows || a.cols != b.cols {
                return Err(Error::Shape(format!(
                    "`{}` {}x{} vs `{}` {}x{}",
                    a.name, a.rows, a.cols, b.name, b.rows, b.cols
                )));
            }
        }
        Ok(())
    }
}

/// Factor that rescales a gradient of L2 norm `norm` to at most `clip`.
#[inline]
pub fn clip_scale(norm: f64, clip: f64) -> f64 {
    if norm > clip {
        clip / norm
    } else {
        1.0
    }
}

/// Plain SGD step with per-tensor L2-norm clipping. Non-trainable tensors of
/// `store` are left untouched. A non-finite gradient aborts before any update.
pub fn sgd_update<T: Real>(store: &mut ParamStore<T>, grads: &ParamStore<T>, lr: f64, clip: f64) -> Result<()> {
    store.check_compatible(grads)?;
    let mut scales = Vec::with_capacity(store.len());
    for (t, g) in store.tensors.iter().zip(&grads.tensors) {
        if !t.trainable {
            scales.push(None);
            continue;
        }
        if g.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(t.name.clone()));
        }
        let norm = l2_norm(&g.data).as_f64();
        scales.push(Some(T::lit(-lr * clip_scale(norm, clip))));
    }
    for ((t, g), scale) in store.tensors.iter_mut().zip(&grads.tensors).zip(scales) {
        let Some(step) = scale else { continue };
        if step == T::zero() {
            continue;
        }
        for (p, &d) in Arc::make_mut(&mut t.data).iter_mut().zip(g.data.iter()) {
            *p += step * d;
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
struct GradSlot<T> {
    data: Vec<T>,
    cols: usize,
    /// Row-sparse tracking for embedding-like tensors.
    touched: Option<(Vec<u32>, Vec<bool>)>,
}

/// Gradient accumulator matching a [`ParamStore`]; only trainable tensors get
/// a buffer. Large lookup tables can be tracked row-sparsely so a step only
/// costs the rows it touched.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    slots: Vec<Option<GradSlot<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn for_store(store: &ParamStore<T>, row_sparse: &[usize]) -> Self {
        let slots = store
            .tensors
            .iter()
            .enumerate()
            .map(|(i, t)| {
                t.trainable.then(|| GradSlot {
                    data: vec![T::zero(); t.len()],
                    cols: t.cols,
                    touched: row_sparse
                        .contains(&i)
                        .then(|| (Vec::new(), vec![false; t.rows])),
                })
            })
            .collect();
        Self { slots }
    }

    pub fn is_tracked(&self, idx: usize) -> bool {
        self.slots[idx].is_some()
    }

    /// Whole buffer of tensor `idx`; marks every row touched.
    pub fn dense_mut(&mut self, idx: usize) -> Option<&mut [T]> {
        let slot = self.slots[idx].as_mut()?;
        if let Some((list, mark)) = slot.touched.as_mut() {
            for (r, m) in mark.iter_mut().enumerate() {
                if !*m {
                    *m = true;
                    list.push(r as u32);
                }
            }
        }
        Some(&mut slot.data)
    }

    pub fn row_mut(&mut self, idx: usize, row: usize) -> Option<&mut [T]> {
        let slot = self.slots[idx].as_mut()?;
        if let Some((list, mark)) = slot.touched.as_mut() {
            if !mark[row] {
                mark[row] = true;
                list.push(row as u32);
            }
        }
        let c = slot.cols;
        Some(&mut slot.data[row * c..(row + 1) * c])
    }

    /// Applies one clipped SGD step to `store` and zeroes the buffers.
    pub fn apply_sgd(&mut self, store: &mut ParamStore<T>, lr: f64, clip: f64) -> Result<()> {
        let mut scales = Vec::with_capacity(self.slots.len());
        for (slot, t) in self.slots.iter().zip(&store.tensors) {
            let Some(slot) = slot else {
                scales.push(T::zero());
                continue;
            };
            let mut sq = 0.0f64;
            let mut visit = |vals: &[T]| -> bool {
                for v in vals {
                    let x = v.as_f64();
                    if !x.is_finite() {
                        return false;
                    }
                    sq += x * x;
                }
                true
            };
            let finite = match &slot.touched {
                Some((rows, _)) => rows.iter().all(|&r| {
                    let r = r as usize;
                    visit(&slot.data[r * slot.cols..(r + 1) * slot.cols])
                }),
                None => visit(&slot.data),
            };
            if !finite {
                return Err(Error::NonFiniteGradient(t.name.clone()));
            }
            scales.push(T::lit(-lr * clip_scale(sq.sqrt(), clip)));
        }
        for ((slot, t), step) in self.slots.iter_mut().zip(store.tensors.iter_mut()).zip(scales) {
            let Some(slot) = slot else { continue };
            if !t.trainable {
                continue;
            }
            let params = Arc::make_mut(&mut t.data);
            let cols = slot.cols;
            match slot.touched.as_mut() {
                Some((rows, mark)) => {
                    for &r in rows.iter() {
                        let r = r as usize;
                        let range = r * cols..(r + 1) * cols;
                        for (p, g) in params[range.clone()].iter_mut().zip(&mut slot.data[range]) {
                            *p += step * *g;
                            *g = T::zero();
                        }
                        mark[r] = false;
                    }
                    rows.clear();
                }
                None => {
                    for (p, g) in params.iter_mut().zip(slot.data.iter_mut()) {
                        *p += step * *g;
                        *g = T::zero();
                    }
                }
            }
        }
        Ok(())
    }

    /// Dense copy laid out like `store`; untracked tensors are zero.
    pub fn to_store(&self, store: &ParamStore<T>) -> ParamStore<T> {
        let mut out = store.zeros_like();
        for (slot, t) in self.slots.iter().zip(out.tensors.iter_mut()) {
            if let Some(slot) = slot {
                t.data = Arc::new(slot.data.clone());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn scalar_store(v: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert("w", 1, 1, vec![v]).unwrap();
        s
    }

    #[test]
    fn zero_learning_rate_leaves_store_unchanged() {
        let mut s = scalar_store(1.0);
        let g = scalar_store(0.5);
        let before = s.clone();
        sgd_update(&mut s, &g, 0.0, f64::INFINITY).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn scalar_step_matches_arithmetic() {
        let mut s = scalar_store(1.0);
        sgd_update(&mut s, &scalar_store(0.5), 0.1, f64::INFINITY).unwrap();
        assert!((s.get("w").unwrap().data()[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn clipping_rescales_to_unit_direction() {
        let mut s = ParamStore::<f64>::new();
        s.insert_zeros("v", 2, 1).unwrap();
        let mut g = ParamStore::<f64>::new();
        g.insert("v", 2, 1, vec![3.0, 4.0]).unwrap();
        sgd_update(&mut s, &g, 0.5, 1.0).unwrap();
        let v = s.get("v").unwrap().data();
        assert!((v[0] + 0.5 * 0.6).abs() < 1e-15);
        assert!((v[1] + 0.5 * 0.8).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_names_tensor_and_changes_nothing() {
        let mut s = ParamStore::<f64>::new();
        s.insert("a", 1, 1, vec![1.0]).unwrap();
        s.insert("b", 1, 1, vec![2.0]).unwrap();
        let mut g = s.zeros_like();
        g.get_mut("a").unwrap().data_mut()[0] = 1.0;
        g.get_mut("b").unwrap().data_mut()[0] = f64::NAN;
        let before = s.clone();
        match sgd_update(&mut s, &g, 0.1, 5.0) {
            Err(Error::NonFiniteGradient(name)) => assert_eq!(name, "b"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(s, before);
    }

    #[test]
    fn frozen_tensors_are_bitwise_identical() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut s = ParamStore::<f32>::new();
        s.insert_uniform("a", 3, 4, 0.1, &mut rng).unwrap();
        s.insert_uniform("b", 4, 1, 0.1, &mut rng).unwrap();
        s.get_mut("a").unwrap().trainable = false;
        let before = s.clone();
        let mut g = s.zeros_like();
        g.get_mut("a").unwrap().data_mut().fill(1.0);
        g.get_mut("b").unwrap().data_mut().fill(1.0);
        sgd_update(&mut s, &g, 0.1, 5.0).unwrap();
        assert!(s.get("a").unwrap().shares_storage(before.get("a").unwrap()));
        assert_ne!(s.get("b").unwrap().data(), before.get("b").unwrap().data());
    }

    #[test]
    fn sparse_gradient_path_matches_dense_update() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut s = ParamStore::<f64>::new();
        s.insert_uniform("emb", 5, 3, 0.1, &mut rng).unwrap();
        s.insert_uniform("w", 3, 3, 0.1, &mut rng).unwrap();
        let mut grads = Gradients::for_store(&s, &[0]);
        grads.row_mut(0, 1).unwrap().copy_from_slice(&[1.0, -2.0, 3.0]);
        grads.row_mut(0, 4).unwrap().copy_from_slice(&[4.0, 0.5, 0.0]);
        grads.dense_mut(1).unwrap().fill(0.25);
        let dense = grads.to_store(&s);
        let mut via_dense = s.clone();
        sgd_update(&mut via_dense, &dense, 0.3, 2.0).unwrap();
        grads.apply_sgd(&mut s, 0.3, 2.0).unwrap();
        for (a, b) in s.iter().zip(via_dense.iter()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-15);
            }
        }
        assert!(grads.to_store(&s).iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
    }
}
