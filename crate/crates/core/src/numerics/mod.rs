//! Dense kernels, the named parameter store, SGD with clipping, the
//! checkpoint container and finite-difference gradient verification.

mod checkpoint;
mod gradcheck;
pub mod kernels;
mod store;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use gradcheck::{finite_diff_check, GradientModel};
pub use store::{clip_scale, sgd_update, Gradients, ParamStore, Tensor};

/// Floating-point storage precision of a parameter store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    Fp32,
    Fp64,
}

impl Precision {
    pub fn tag(self) -> u8 {
        match self {
            Precision::Fp32 => 4,
            Precision::Fp64 => 8,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            4 => Some(Precision::Fp32),
            8 => Some(Precision::Fp64),
            _ => None,
        }
    }
}

/// Scalar type the models are generic over (`f32` for training, `f64` for checks).
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + Send
    + Sync
    + 'static
{
    const PRECISION: Precision;
    const BYTES: usize;

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;

    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {
    const PRECISION: Precision = Precision::Fp32;
    const BYTES: usize = 4;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().expect("4 bytes"))
    }
}

impl Real for f64 {
    const PRECISION: Precision = Precision::Fp64;
    const BYTES: usize = 8;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
    }
}

/// Optimisation settings shared by parent training and per-document adaptation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Multiplier applied to the learning rate when validation perplexity
    /// stops improving. `1.0` disables decay.
    pub lr_decay: f64,
    pub epochs: usize,
    pub bptt_span: usize,
    pub clip_threshold: f64,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            lr_decay: 0.5,
            epochs: 10,
            bptt_span: 10,
            clip_threshold: 5.0,
            seed: 1,
            precision: Precision::Fp32,
        }
    }
}

impl TrainConfig {
    /// Fixed-rate schedule used for per-document adaptation.
    pub fn adaptation() -> Self {
        Self {
            learning_rate: 0.05,
            lr_decay: 1.0,
            epochs: 5,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(crate::Error::InvalidArgument(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.bptt_span == 0 {
            return Err(crate::Error::InvalidArgument("bptt_span must be >= 1".into()));
        }
        if !(self.clip_threshold > 0.0) {
            return Err(crate::Error::InvalidArgument(format!(
                "clip_threshold must be > 0, got {}",
                self.clip_threshold
            )));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(crate::Error::InvalidArgument(format!(
                "lr_decay must lie in (0, 1], got {}",
                self.lr_decay
            )));
        }
        Ok(())
    }
}
