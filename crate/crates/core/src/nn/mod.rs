//! Dense tensor machinery for the per-graph models: the single-block
//! transformer encoder over the hop axis, the mask-generating scoring MLP,
//! their analytic gradients and an Adam optimiser.
//!
//! Everything is generic over [`Real`] so that training can run in `f32`
//! while gradient checks run the same code in `f64`.

mod adam;
mod layers;
mod params_io;
mod scoring;
mod source;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{Array1, Array2, Array3, ArrayView3, ArrayViewD, ArrayViewMutD, Axis, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use adam::{Adam, AdamConfig};
pub use layers::{layer_norm, layer_norm_backward, softmax_rows, LayerNormCache, LN_EPS};
pub use params_io::{encode_params, read_param_file, write_param_file, ParamRecord};
pub(crate) use params_io::fill_from_records;
pub use scoring::{ScoringParams, ScoringTape};
pub use source::{SourceParams, SourceTape};

pub trait Real:
    Float + FromPrimitive + LinalgScalar + ScalarOperand + Debug + Display + Send + Sync + Sum + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite cast")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("float to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// A fixed, ordered collection of named parameter tensors.
pub trait ParamSet<T: Real>: Clone {
    fn tensors(&self) -> Vec<(&'static str, ArrayViewD<'_, T>)>;
    fn tensors_mut(&mut self) -> Vec<(&'static str, ArrayViewMutD<'_, T>)>;

    /// Same shapes, all entries zero.
    fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for (_, mut t) in out.tensors_mut() {
            t.fill(T::zero());
        }
        out
    }

    fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// `self += other`, tensor by tensor.
    fn accumulate(&mut self, other: &Self) {
        for ((_, mut a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.zip_mut_with(&b, |x, &y| *x = *x + y);
        }
    }

    fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// Every scalar, tensor by tensor in logical (row-major) order.
    fn flatten(&self) -> Vec<T> {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter().copied().collect::<Vec<_>>())
            .collect()
    }

    /// Mutable access to scalar `index` in [`flatten`](Self::flatten) order.
    fn with_scalar_mut(&mut self, mut index: usize, f: impl FnOnce(&mut T)) {
        for (_, mut t) in self.tensors_mut() {
            if index < t.len() {
                let v = t.iter_mut().nth(index).expect("index in range");
                f(v);
                return;
            }
            index -= t.len();
        }
        panic!("scalar index out of range");
    }
}

pub(crate) fn uniform_matrix<T: Real>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<T> {
    let bound = 1.0 / (rows as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || T::from_f64_lossy(rng.gen_range(-bound..bound)))
}

pub(crate) fn cast_array<A: Real, B: Real, D: ndarray::Dimension>(a: &ndarray::Array<A, D>) -> ndarray::Array<B, D> {
    a.mapv(|v| B::from_f64_lossy(v.as_f64()))
}

/// Mean over the hop axis: `(B, L, d) -> (B, d)`.
pub fn pool<T: Real>(x: ArrayView3<T>) -> Array2<T> {
    let l = T::from_usize(x.shape()[1]).expect("hop count");
    x.sum_axis(Axis(1)) / l
}

/// Adjoint of [`pool`]: spreads each row gradient evenly over `hops` slices.
pub fn pool_backward<T: Real>(grad: &Array2<T>, hops: usize) -> Array3<T> {
    let (b, d) = grad.dim();
    let scale = T::one() / T::from_usize(hops).expect("hop count");
    let mut out = Array3::zeros((b, hops, d));
    for (mut sample, g) in out.outer_iter_mut().zip(grad.outer_iter()) {
        for mut row in sample.outer_iter_mut() {
            row.assign(&(&g * scale));
        }
    }
    out
}

pub(crate) fn sum_rows<T: Real>(x: &Array2<T>) -> Array1<T> {
    x.sum_axis(Axis(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn pool_of_identical_slices_is_that_slice() {
        let v = array![1.5f64, -2.0, 3.0];
        let mut x = Array3::<f64>::zeros((1, 4, 3));
        for k in 0..4 {
            x.slice_mut(ndarray::s![0, k, ..]).assign(&v);
        }
        assert_eq!(pool(x.view()).row(0), v.view());
    }

    #[test]
    fn pool_single_hop_and_two_point_mean() {
        let x = Array3::from_shape_vec((1, 1, 2), vec![4.0f64, 5.0]).unwrap();
        assert_eq!(pool(x.view()), array![[4.0, 5.0]]);
        let x = Array3::from_shape_vec((1, 2, 2), vec![1.0f64, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(pool(x.view()), array![[0.5, 0.5]]);
    }
}
