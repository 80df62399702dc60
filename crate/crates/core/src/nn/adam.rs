use serde::{Deserialize, Serialize};

use super::{ParamSet, Real};
use crate::error::{OmogError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers are allocated on the first
/// step from the parameter shapes.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<T>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<T>] {
        &self.v
    }

    pub fn step<P: ParamSet<T>>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let grad_tensors = grads.tensors();
        let mut param_tensors = params.tensors_mut();
        if grad_tensors.len() != param_tensors.len() {
            return Err(OmogError::Shape("gradient tensor count differs from parameters".into()));
        }
        for ((name, g), (_, p)) in grad_tensors.iter().zip(param_tensors.iter()) {
            if g.shape() != p.shape() {
                return Err(OmogError::Shape(format!(
                    "gradient `{name}` has shape {:?}, parameter has {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(OmogError::NonFinite(format!("gradient `{name}`")));
            }
        }
        if self.m.is_empty() {
            self.m = grad_tensors.iter().map(|(_, g)| vec![T::zero(); g.len()]).collect();
            self.v = self.m.clone();
        }

        self.step += 1;
        let c = self.config;
        let b1 = T::from_f64_lossy(c.beta1);
        let b2 = T::from_f64_lossy(c.beta2);
        let one = T::one();
        let bc1 = T::from_f64_lossy(1.0 - c.beta1.powi(self.step as i32));
        let bc2 = T::from_f64_lossy(1.0 - c.beta2.powi(self.step as i32));
        let lr = T::from_f64_lossy(c.lr);
        let eps = T::from_f64_lossy(c.eps);

        for (((_, g), (_, p)), (m, v)) in grad_tensors
            .iter()
            .zip(param_tensors.iter_mut())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((pv, &gv), mv), vv) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mv = b1 * *mv + (one - b1) * gv;
                *vv = b2 * *vv + (one - b2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv = *pv - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, ArrayViewD, ArrayViewMutD};

    #[derive(Clone, Debug, PartialEq)]
    struct Vector(Array1<f64>);

    impl ParamSet<f64> for Vector {
        fn tensors(&self) -> Vec<(&'static str, ArrayViewD<'_, f64>)> {
            vec![("p", self.0.view().into_dyn())]
        }
        fn tensors_mut(&mut self) -> Vec<(&'static str, ArrayViewMutD<'_, f64>)> {
            vec![("p", self.0.view_mut().into_dyn())]
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Vector(Array1::from(vec![0.0]));
        let g = Vector(Array1::from(vec![1.0]));
        let mut adam = Adam::new(AdamConfig {
            lr: 0.1,
            ..Default::default()
        });
        adam.step(&mut p, &g).unwrap();
        // m_hat = 1, v_hat = 1 -> p = -0.1 / (1 + 1e-8)
        assert!((p.0[0] + 0.1).abs() < 1e-8);
        assert_eq!(adam.steps_taken(), 1);
    }

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut p = Vector(Array1::from(vec![0.5, -0.5]));
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut p, &Vector(Array1::from(vec![1.0, 1.0]))).unwrap();
        let before = p.clone();
        let m_before = adam.first_moments()[0][0];
        adam.step(&mut p, &Vector(Array1::zeros(2))).unwrap();
        // Momentum from the first step still moves the parameters; a fresh
        // optimiser with zero gradients must not.
        assert!(adam.first_moments()[0][0] < m_before);
        assert!(p != before);

        let mut q = Vector(Array1::from(vec![0.5, -0.5]));
        let mut fresh = Adam::new(AdamConfig::default());
        fresh.step(&mut q, &Vector(Array1::zeros(2))).unwrap();
        assert_eq!(q.0, Array1::from(vec![0.5, -0.5]));
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let mut p = Vector(Array1::from(vec![0.0]));
        let g = Vector(Array1::from(vec![2.0]));
        let mut adam = Adam::new(AdamConfig {
            lr: 0.01,
            ..Default::default()
        });
        let mut last = 0.0;
        for _ in 0..100 {
            adam.step(&mut p, &g).unwrap();
            assert!(p.0[0] < last);
            last = p.0[0];
        }
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut p = Vector(Array1::from(vec![0.0]));
        let mut adam = Adam::new(AdamConfig::default());
        let err = adam.step(&mut p, &Vector(Array1::from(vec![f64::NAN]))).unwrap_err();
        assert!(matches!(err, OmogError::NonFinite(_)));
        assert_eq!(p.0[0], 0.0);
    }
}
