use ndarray::ArrayView1;

use crate::nn::Real;

/// Added to vector norms before dividing.
pub const NORM_EPS: f64 = 1e-12;

/// Cosine similarity accumulated in f64.
pub fn cosine<T: Real>(a: ArrayView1<T>, b: ArrayView1<T>) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (&x, &y) in a.iter().zip(b.iter()) {
        let (x, y) = (x.as_f64(), y.as_f64());
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    dot / ((na.sqrt() + NORM_EPS) * (nb.sqrt() + NORM_EPS))
}

pub fn euclidean<T: Real>(a: ArrayView1<T>, b: ArrayView1<T>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum::<f64>()
        .sqrt()
}
