use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ParamStore;
use crate::Result;

/// A model with a scalar loss and an analytic gradient over its parameters.
pub trait GradientModel {
    type Input: ?Sized;

    fn params(&self) -> &ParamStore<f64>;
    fn params_mut(&mut self) -> &mut ParamStore<f64>;
    fn loss(&self, input: &Self::Input) -> Result<f64>;
    /// Loss and gradient; the gradient store is laid out like [`Self::params`].
    fn loss_and_grad(&self, input: &Self::Input) -> Result<(f64, ParamStore<f64>)>;
}

/// Compares the analytic gradient with central differences at `samples`
/// random coordinates and returns the largest relative error
/// `|a - n| / max(|a|, |n|, 1e-12)`.
///
/// Coordinates are drawn tensor by tensor in round-robin order (uniform within
/// each tensor), so every parameter group is probed even when a few large
/// matrices dominate the parameter count. Only trainable tensors are probed.
pub fn finite_diff_check<M: GradientModel>(
    model: &mut M,
    input: &M::Input,
    eps: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let (_, grads) = model.loss_and_grad(input)?;
    let candidates: Vec<usize> = (0..model.params().len())
        .filter(|&i| {
            let t = model.params().tensor(i);
            t.trainable && !t.is_empty()
        })
        .collect();
    if candidates.is_empty() {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for s in 0..samples {
        let t = candidates[s % candidates.len()];
        let j = rng.random_range(0..model.params().tensor(t).len());
        let analytic = grads.tensor(t).data()[j];
        let orig = model.params().tensor(t).data()[j];
        model.params_mut().tensor_mut(t).data_mut()[j] = orig + eps;
        let plus = model.loss(input)?;
        model.params_mut().tensor_mut(t).data_mut()[j] = orig - eps;
        let minus = model.loss(input)?;
        model.params_mut().tensor_mut(t).data_mut()[j] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let denom = analytic.abs().max(numeric.abs()).max(1e-12);
        worst = worst.max((analytic - numeric).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `L = Σ c_i w_i`.
    struct Linear {
        coef: Vec<f64>,
        params: ParamStore<f64>,
    }

    impl GradientModel for Linear {
        type Input = ();

        fn params(&self) -> &ParamStore<f64> {
            &self.params
        }

        fn params_mut(&mut self) -> &mut ParamStore<f64> {
            &mut self.params
        }

        fn loss(&self, _: &()) -> Result<f64> {
            let w = self.params.tensor(0).data();
            Ok(w.iter().zip(&self.coef).map(|(a, b)| a * b).sum())
        }

        fn loss_and_grad(&self, input: &()) -> Result<(f64, ParamStore<f64>)> {
            let mut g = self.params.zeros_like();
            g.tensor_mut(0).data_mut().copy_from_slice(&self.coef);
            Ok((self.loss(input)?, g))
        }
    }

    #[test]
    fn linear_model_error_is_at_rounding_level() {
        let mut params = ParamStore::new();
        params.insert("w", 4, 1, vec![0.3, -1.2, 2.0, 0.01]).unwrap();
        let mut m = Linear {
            coef: vec![1.5, -0.25, 3.0, 0.75],
            params,
        };
        let err = finite_diff_check(&mut m, &(), 1e-5, 50, 0).unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let mut params = ParamStore::new();
        params.insert("w", 2, 1, vec![0.3, -1.2]).unwrap();
        let mut m = Linear {
            coef: vec![1.0, 2.0],
            params,
        };
        struct Wrong<'a>(&'a mut Linear);
        impl GradientModel for Wrong<'_> {
            type Input = ();
            fn params(&self) -> &ParamStore<f64> {
                &self.0.params
            }
            fn params_mut(&mut self) -> &mut ParamStore<f64> {
                &mut self.0.params
            }
            fn loss(&self, i: &()) -> Result<f64> {
                self.0.loss(i)
            }
            fn loss_and_grad(&self, i: &()) -> Result<(f64, ParamStore<f64>)> {
                let (l, mut g) = self.0.loss_and_grad(i)?;
                g.tensor_mut(0).data_mut()[1] = 2.5;
                Ok((l, g))
            }
        }
        let err = finite_diff_check(&mut Wrong(&mut m), &(), 1e-5, 20, 1).unwrap();
        assert!(err > 0.1);
    }
}
