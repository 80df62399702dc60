//! Two-layer MLP over a node's flattened hop stack that produces an
//! additive mask of the same shape.

use ndarray::{Array1, Array2, Array3, ArrayView3, ArrayViewD, ArrayViewMutD, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{cast_array, sum_rows, uniform_matrix, ParamSet, Real};
use crate::error::{OmogError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoringParams<T> {
    pub d: usize,
    pub alpha: usize,
    pub d_h: usize,
    pub v1: Array2<T>,
    pub c1: Array1<T>,
    pub v2: Array2<T>,
    pub c2: Array1<T>,
}

impl<T: Real> ScoringParams<T> {
    pub fn flat_dim(d: usize, alpha: usize) -> usize {
        (alpha + 1) * d
    }

    pub fn zeroed(d: usize, alpha: usize, d_h: usize) -> Self {
        let f = Self::flat_dim(d, alpha);
        ScoringParams {
            d,
            alpha,
            d_h,
            v1: Array2::zeros((f, d_h)),
            c1: Array1::zeros(d_h),
            v2: Array2::zeros((d_h, f)),
            c2: Array1::zeros(f),
        }
    }

    pub fn init(d: usize, alpha: usize, d_h: usize, seed: u64) -> Self {
        let f = Self::flat_dim(d, alpha);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeroed(d, alpha, d_h);
        p.v1 = uniform_matrix(&mut rng, f, d_h);
        p.v2 = uniform_matrix(&mut rng, d_h, f);
        p
    }

    pub fn cast<U: Real>(&self) -> ScoringParams<U> {
        ScoringParams {
            d: self.d,
            alpha: self.alpha,
            d_h: self.d_h,
            v1: cast_array(&self.v1),
            c1: cast_array(&self.c1),
            v2: cast_array(&self.v2),
            c2: cast_array(&self.c2),
        }
    }

    pub fn shapes(d: usize, alpha: usize, d_h: usize) -> Vec<(&'static str, Vec<usize>)> {
        let f = Self::flat_dim(d, alpha);
        vec![
            ("mlp.v1", vec![f, d_h]),
            ("mlp.c1", vec![d_h]),
            ("mlp.v2", vec![d_h, f]),
            ("mlp.c2", vec![f]),
        ]
    }

    /// Mask `a = V2 relu(V1 flat(h) + c1) + c2`, reshaped to `(B, alpha + 1, d)`.
    pub fn forward(&self, h: ArrayView3<T>) -> Result<Array3<T>> {
        self.forward_with_tape(h).map(|(a, _)| a)
    }

    pub fn forward_with_tape(&self, h: ArrayView3<T>) -> Result<(Array3<T>, ScoringTape<T>)> {
        let (b, l, d) = h.dim();
        if d != self.d || l != self.alpha + 1 {
            return Err(OmogError::Shape(format!(
                "scoring model expects (B, {}, {}), got (B, {l}, {d})",
                self.alpha + 1,
                self.d
            )));
        }
        let x = h
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((b, l * d))
            .expect("contiguous");
        let u = x.dot(&self.v1) + &self.c1;
        let r = u.mapv(|v| v.max(T::zero()));
        let a = r.dot(&self.v2) + &self.c2;
        if a.iter().any(|v| !v.is_finite()) {
            return Err(OmogError::NonFinite("scoring mask".into()));
        }
        let a = a.into_shape_with_order((b, l, d)).expect("contiguous");
        Ok((a, ScoringTape { x, u, r }))
    }

    /// Parameter gradients given the gradient with respect to the mask.
    pub fn backward(&self, tape: &ScoringTape<T>, d_mask: ArrayView3<T>) -> ScoringParams<T> {
        let (b, l, d) = d_mask.dim();
        let da = d_mask
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((b, l * d))
            .expect("contiguous");
        let mut g = self.zeros_like();
        g.v2 = tape.r.t().dot(&da);
        g.c2 = sum_rows(&da);
        let mut du = da.dot(&self.v2.t());
        Zip::from(&mut du).and(&tape.u).for_each(|g, &u| {
            if u <= T::zero() {
                *g = T::zero();
            }
        });
        g.v1 = tape.x.t().dot(&du);
        g.c1 = sum_rows(&du);
        g
    }
}

impl<T: Real> ParamSet<T> for ScoringParams<T> {
    fn tensors(&self) -> Vec<(&'static str, ArrayViewD<'_, T>)> {
        vec![
            ("mlp.v1", self.v1.view().into_dyn()),
            ("mlp.c1", self.c1.view().into_dyn()),
            ("mlp.v2", self.v2.view().into_dyn()),
            ("mlp.c2", self.c2.view().into_dyn()),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, ArrayViewMutD<'_, T>)> {
        vec![
            ("mlp.v1", self.v1.view_mut().into_dyn()),
            ("mlp.c1", self.c1.view_mut().into_dyn()),
            ("mlp.v2", self.v2.view_mut().into_dyn()),
            ("mlp.c2", self.c2.view_mut().into_dyn()),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct ScoringTape<T> {
    x: Array2<T>,
    u: Array2<T>,
    r: Array2<T>,
}

impl<T: Real> ScoringTape<T> {
    /// Input of the hidden ReLU, one row per node.
    pub fn relu_input(&self) -> &Array2<T> {
        &self.u
    }
}
