use ndarray::{Array1, Array2, ArrayView1, ArrayViewMut2, Axis, Zip};

use super::Real;

pub const LN_EPS: f64 = 1e-5;

/// Normalised inputs and inverse standard deviations kept for the backward
/// pass.
#[derive(Debug, Clone)]
pub struct LayerNormCache<T> {
    pub xhat: Array2<T>,
    pub inv_std: Array1<T>,
}

/// Row-wise layer norm with population variance.
pub fn layer_norm<T: Real>(
    z: &Array2<T>,
    gain: ArrayView1<T>,
    bias: ArrayView1<T>,
) -> (Array2<T>, LayerNormCache<T>) {
    let (rows, d) = z.dim();
    let d_t = T::from_usize(d).unwrap();
    let eps = T::from_f64_lossy(LN_EPS);
    let mut xhat = Array2::zeros((rows, d));
    let mut inv_std = Array1::zeros(rows);
    for ((zr, mut xr), is) in z
        .outer_iter()
        .zip(xhat.outer_iter_mut())
        .zip(inv_std.iter_mut())
    {
        let mean = zr.sum() / d_t;
        let var = zr.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / d_t;
        let s = T::one() / (var + eps).sqrt();
        *is = s;
        Zip::from(&mut xr).and(&zr).for_each(|x, &v| *x = (v - mean) * s);
    }
    let mut y = xhat.clone();
    for mut row in y.outer_iter_mut() {
        Zip::from(&mut row)
            .and(&gain)
            .and(&bias)
            .for_each(|y, &g, &b| *y = *y * g + b);
    }
    (y, LayerNormCache { xhat, inv_std })
}

/// Returns `(d_input, d_gain, d_bias)`.
pub fn layer_norm_backward<T: Real>(
    dy: &Array2<T>,
    cache: &LayerNormCache<T>,
    gain: ArrayView1<T>,
) -> (Array2<T>, Array1<T>, Array1<T>) {
    let (_, d) = dy.dim();
    let d_t = T::from_usize(d).unwrap();
    let d_gain = (dy * &cache.xhat).sum_axis(Axis(0));
    let d_bias = dy.sum_axis(Axis(0));
    let mut dz = Array2::zeros(dy.raw_dim());
    for (((dyr, xr), mut dzr), &s) in dy
        .outer_iter()
        .zip(cache.xhat.outer_iter())
        .zip(dz.outer_iter_mut())
        .zip(cache.inv_std.iter())
    {
        let dxhat: Array1<T> = &dyr * &gain;
        let mean_dxhat = dxhat.sum() / d_t;
        let mean_dxhat_x = (&dxhat * &xr).sum() / d_t;
        Zip::from(&mut dzr)
            .and(&dxhat)
            .and(&xr)
            .for_each(|o, &g, &x| *o = s * (g - mean_dxhat - x * mean_dxhat_x));
    }
    (dz, d_gain, d_bias)
}

/// In-place numerically stable softmax over each row.
pub fn softmax_rows<T: Real>(mut x: ArrayViewMut2<T>) {
    for mut row in x.outer_iter_mut() {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn normalised_rows_have_zero_mean_unit_variance() {
        let z = array![[1.0f64, 2.0, 3.0, 10.0], [-4.0, 0.5, 0.25, 7.0]];
        let ones = Array1::ones(4);
        let zeros = Array1::zeros(4);
        let (_, cache) = layer_norm(&z, ones.view(), zeros.view());
        for row in cache.xhat.outer_iter() {
            let mean = row.sum() / 4.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
            assert!(mean.abs() <= 1e-6);
            assert!((var - 1.0).abs() <= 1e-4);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut x = array![[1.0f64, 2.0, 3.0], [1000.0, 1000.0, -5.0]];
        softmax_rows(x.view_mut());
        for row in x.outer_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        assert!((x[[1, 0]] - 0.5).abs() < 1e-12);
    }
}
