//! One transformer block applied independently to each node's hop sequence:
//!
//! ```text
//! O  = softmax(X Wq (X Wk)^T / sqrt(d)) X Wv
//! H1 = LN1(X + O)
//! F  = LN2(H1 + relu(H1 W1 + b1) W2 + b2)
//! ```

use ndarray::{s, Array1, Array2, Array3, ArrayView3, ArrayViewD, ArrayViewMutD, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{layer_norm, layer_norm_backward, softmax_rows, LayerNormCache};
use super::{cast_array, sum_rows, uniform_matrix, ParamSet, Real};
use crate::error::{OmogError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SourceParams<T> {
    pub d: usize,
    pub alpha: usize,
    pub d_ff: usize,
    pub w_q: Array2<T>,
    pub w_k: Array2<T>,
    pub w_v: Array2<T>,
    pub ln1_gain: Array1<T>,
    pub ln1_bias: Array1<T>,
    pub ln2_gain: Array1<T>,
    pub ln2_bias: Array1<T>,
    pub w1: Array2<T>,
    pub b1: Array1<T>,
    pub w2: Array2<T>,
    pub b2: Array1<T>,
}

impl<T: Real> SourceParams<T> {
    /// All weights and biases zero, layer-norm gains one. The block then
    /// reduces to `LN(LN(X))`.
    pub fn zeroed(d: usize, alpha: usize, d_ff: usize) -> Self {
        SourceParams {
            d,
            alpha,
            d_ff,
            w_q: Array2::zeros((d, d)),
            w_k: Array2::zeros((d, d)),
            w_v: Array2::zeros((d, d)),
            ln1_gain: Array1::ones(d),
            ln1_bias: Array1::zeros(d),
            ln2_gain: Array1::ones(d),
            ln2_bias: Array1::zeros(d),
            w1: Array2::zeros((d, d_ff)),
            b1: Array1::zeros(d_ff),
            w2: Array2::zeros((d_ff, d)),
            b2: Array1::zeros(d),
        }
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero, gains one.
    pub fn init(d: usize, alpha: usize, d_ff: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeroed(d, alpha, d_ff);
        p.w_q = uniform_matrix(&mut rng, d, d);
        p.w_k = uniform_matrix(&mut rng, d, d);
        p.w_v = uniform_matrix(&mut rng, d, d);
        p.w1 = uniform_matrix(&mut rng, d, d_ff);
        p.w2 = uniform_matrix(&mut rng, d_ff, d);
        p
    }

    pub fn cast<U: Real>(&self) -> SourceParams<U> {
        SourceParams {
            d: self.d,
            alpha: self.alpha,
            d_ff: self.d_ff,
            w_q: cast_array(&self.w_q),
            w_k: cast_array(&self.w_k),
            w_v: cast_array(&self.w_v),
            ln1_gain: cast_array(&self.ln1_gain),
            ln1_bias: cast_array(&self.ln1_bias),
            ln2_gain: cast_array(&self.ln2_gain),
            ln2_bias: cast_array(&self.ln2_bias),
            w1: cast_array(&self.w1),
            b1: cast_array(&self.b1),
            w2: cast_array(&self.w2),
            b2: cast_array(&self.b2),
        }
    }

    /// Expected shape of every named tensor.
    pub fn shapes(d: usize, d_ff: usize) -> Vec<(&'static str, Vec<usize>)> {
        vec![
            ("w_q", vec![d, d]),
            ("w_k", vec![d, d]),
            ("w_v", vec![d, d]),
            ("ln1.gain", vec![d]),
            ("ln1.bias", vec![d]),
            ("ln2.gain", vec![d]),
            ("ln2.bias", vec![d]),
            ("mlp.w1", vec![d, d_ff]),
            ("mlp.b1", vec![d_ff]),
            ("mlp.w2", vec![d_ff, d]),
            ("mlp.b2", vec![d]),
        ]
    }

    fn check_input(&self, x: &ArrayView3<T>) -> Result<()> {
        let (_, l, d) = x.dim();
        if d != self.d || l != self.alpha + 1 {
            return Err(OmogError::Shape(format!(
                "source model expects (B, {}, {}), got (B, {l}, {d})",
                self.alpha + 1,
                self.d
            )));
        }
        Ok(())
    }

    /// Encodes a batch `(B, alpha + 1, d)` into the same shape.
    pub fn forward(&self, x: ArrayView3<T>) -> Result<Array3<T>> {
        self.forward_with_tape(x).map(|(y, _)| y)
    }

    pub fn forward_with_tape(&self, x: ArrayView3<T>) -> Result<(Array3<T>, SourceTape<T>)> {
        self.check_input(&x)?;
        let (b, l, d) = x.dim();
        let xs = x
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((b * l, d))
            .expect("contiguous");

        let q = xs.dot(&self.w_q);
        let k = xs.dot(&self.w_k);
        let v = xs.dot(&self.w_v);
        let scale = T::one() / T::from_usize(d).unwrap().sqrt();

        let mut attn = Array3::<T>::zeros((b, l, l));
        let mut o = Array2::<T>::zeros((b * l, d));
        for i in 0..b {
            let r = i * l..(i + 1) * l;
            let qb = q.slice(s![r.clone(), ..]);
            let kb = k.slice(s![r.clone(), ..]);
            let vb = v.slice(s![r.clone(), ..]);
            let mut p = qb.dot(&kb.t()) * scale;
            softmax_rows(p.view_mut());
            o.slice_mut(s![r, ..]).assign(&p.dot(&vb));
            attn.slice_mut(s![i, .., ..]).assign(&p);
        }

        let z1 = &xs + &o;
        let (h1, ln1) = layer_norm(&z1, self.ln1_gain.view(), self.ln1_bias.view());
        let u = h1.dot(&self.w1) + &self.b1;
        let r = u.mapv(|v| v.max(T::zero()));
        let m = r.dot(&self.w2) + &self.b2;
        let z2 = &h1 + &m;
        let (out, ln2) = layer_norm(&z2, self.ln2_gain.view(), self.ln2_bias.view());

        if out.iter().any(|v| !v.is_finite()) {
            return Err(OmogError::NonFinite("source model output".into()));
        }
        let out = out.into_shape_with_order((b, l, d)).expect("contiguous");
        let tape = SourceTape {
            b,
            l,
            x: xs,
            q,
            k,
            v,
            attn,
            ln1,
            h1,
            u,
            r,
            ln2,
        };
        Ok((out, tape))
    }

    /// Back-propagates `d_out` (same shape as the forward output). Returns
    /// parameter gradients and the gradient with respect to the input.
    pub fn backward(&self, tape: &SourceTape<T>, d_out: ArrayView3<T>) -> (SourceParams<T>, Array3<T>) {
        let (b, l, d) = (tape.b, tape.l, self.d);
        let dy = d_out
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((b * l, d))
            .expect("contiguous");
        let mut g = self.zeros_like();

        let (dz2, dg2, db2n) = layer_norm_backward(&dy, &tape.ln2, self.ln2_gain.view());
        g.ln2_gain = dg2;
        g.ln2_bias = db2n;

        g.w2 = tape.r.t().dot(&dz2);
        g.b2 = sum_rows(&dz2);
        let mut du = dz2.dot(&self.w2.t());
        ndarray::Zip::from(&mut du)
            .and(&tape.u)
            .for_each(|g, &u| {
                if u <= T::zero() {
                    *g = T::zero();
                }
            });
        g.w1 = tape.h1.t().dot(&du);
        g.b1 = sum_rows(&du);
        let dh1 = dz2 + du.dot(&self.w1.t());

        let (dz1, dg1, db1n) = layer_norm_backward(&dh1, &tape.ln1, self.ln1_gain.view());
        g.ln1_gain = dg1;
        g.ln1_bias = db1n;

        let scale = T::one() / T::from_usize(d).unwrap().sqrt();
        let mut dq = Array2::<T>::zeros((b * l, d));
        let mut dk = Array2::<T>::zeros((b * l, d));
        let mut dv = Array2::<T>::zeros((b * l, d));
        for i in 0..b {
            let r = i * l..(i + 1) * l;
            let p = tape.attn.index_axis(Axis(0), i);
            let dob = dz1.slice(s![r.clone(), ..]);
            let vb = tape.v.slice(s![r.clone(), ..]);
            let qb = tape.q.slice(s![r.clone(), ..]);
            let kb = tape.k.slice(s![r.clone(), ..]);
            let dp = dob.dot(&vb.t());
            dv.slice_mut(s![r.clone(), ..]).assign(&p.t().dot(&dob));
            let row_dot = (&dp * &p).sum_axis(Axis(1));
            let mut ds = dp;
            for ((mut dsr, pr), &c) in ds.outer_iter_mut().zip(p.outer_iter()).zip(row_dot.iter()) {
                ndarray::Zip::from(&mut dsr)
                    .and(&pr)
                    .for_each(|x, &pv| *x = pv * (*x - c) * scale);
            }
            dq.slice_mut(s![r.clone(), ..]).assign(&ds.dot(&kb));
            dk.slice_mut(s![r, ..]).assign(&ds.t().dot(&qb));
        }
        g.w_q = tape.x.t().dot(&dq);
        g.w_k = tape.x.t().dot(&dk);
        g.w_v = tape.x.t().dot(&dv);
        let dx = dz1 + dq.dot(&self.w_q.t()) + dk.dot(&self.w_k.t()) + dv.dot(&self.w_v.t());
        (g, dx.into_shape_with_order((b, l, d)).expect("contiguous"))
    }
}

impl<T: Real> ParamSet<T> for SourceParams<T> {
    fn tensors(&self) -> Vec<(&'static str, ArrayViewD<'_, T>)> {
        vec![
            ("w_q", self.w_q.view().into_dyn()),
            ("w_k", self.w_k.view().into_dyn()),
            ("w_v", self.w_v.view().into_dyn()),
            ("ln1.gain", self.ln1_gain.view().into_dyn()),
            ("ln1.bias", self.ln1_bias.view().into_dyn()),
            ("ln2.gain", self.ln2_gain.view().into_dyn()),
            ("ln2.bias", self.ln2_bias.view().into_dyn()),
            ("mlp.w1", self.w1.view().into_dyn()),
            ("mlp.b1", self.b1.view().into_dyn()),
            ("mlp.w2", self.w2.view().into_dyn()),
            ("mlp.b2", self.b2.view().into_dyn()),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, ArrayViewMutD<'_, T>)> {
        vec![
            ("w_q", self.w_q.view_mut().into_dyn()),
            ("w_k", self.w_k.view_mut().into_dyn()),
            ("w_v", self.w_v.view_mut().into_dyn()),
            ("ln1.gain", self.ln1_gain.view_mut().into_dyn()),
            ("ln1.bias", self.ln1_bias.view_mut().into_dyn()),
            ("ln2.gain", self.ln2_gain.view_mut().into_dyn()),
            ("ln2.bias", self.ln2_bias.view_mut().into_dyn()),
            ("mlp.w1", self.w1.view_mut().into_dyn()),
            ("mlp.b1", self.b1.view_mut().into_dyn()),
            ("mlp.w2", self.w2.view_mut().into_dyn()),
            ("mlp.b2", self.b2.view_mut().into_dyn()),
        ]
    }
}

/// Forward intermediates needed by [`SourceParams::backward`].
#[derive(Debug, Clone)]
pub struct SourceTape<T> {
    b: usize,
    l: usize,
    x: Array2<T>,
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    attn: Array3<T>,
    ln1: LayerNormCache<T>,
    h1: Array2<T>,
    u: Array2<T>,
    r: Array2<T>,
    ln2: LayerNormCache<T>,
}

impl<T: Real> SourceTape<T> {
    /// Attention matrices, one `(L, L)` slice per batch item.
    pub fn attention(&self) -> &Array3<T> {
        &self.attn
    }

    /// Input of the hidden ReLU, one row per (node, hop).
    pub fn relu_input(&self) -> &Array2<T> {
        &self.u
    }
}
