//! Adaptive-moment optimizer with bias correction.

use std::collections::HashMap;

use candle_core::backprop::GradStore;
use candle_core::{Tensor, Var};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta_1: f64,
    pub beta_2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta_1: 0.9,
            beta_2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Optimizer state: step count and per-variable first and second moments.
#[derive(Clone, Debug)]
pub struct Adam {
    params: AdamParams,
    step: u64,
    m: HashMap<String, Tensor>,
    v: HashMap<String, Tensor>,
}

impl Adam {
    pub fn new(params: AdamParams) -> Self {
        Self {
            params,
            step: 0,
            m: HashMap::new(),
            v: HashMap::new(),
        }
    }

    pub fn params(&self) -> AdamParams {
        self.params
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update of every variable that has a gradient. Variables without a
    /// gradient keep their value and moments.
    ///
    /// With `g` the gradient and `t` the step count after incrementing:
    /// `m = b1 m + (1 - b1) g`, `v = b2 v + (1 - b2) g^2`,
    /// `x -= lr (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)`.
    pub fn step(&mut self, vars: &[(String, &Var)], grads: &GradStore) -> Result<()> {
        self.step += 1;
        let AdamParams {
            learning_rate,
            beta_1,
            beta_2,
            epsilon,
        } = self.params;
        let t = self.step as i32;
        let c1 = 1.0 - beta_1.powi(t);
        let c2 = 1.0 - beta_2.powi(t);
        for (name, var) in vars {
            let Some(g) = grads.get(var.as_tensor()) else {
                continue;
            };
            let g = g.to_dtype(var.dtype())?;
            let m_prev = match self.m.get(name) {
                Some(m) => m.clone(),
                None => g.zeros_like()?,
            };
            let v_prev = match self.v.get(name) {
                Some(v) => v.clone(),
                None => g.zeros_like()?,
            };
            let m = ((m_prev * beta_1)? + (&g * (1.0 - beta_1))?)?;
            let v = ((v_prev * beta_2)? + (g.sqr()? * (1.0 - beta_2))?)?;
            let denom = ((&v / c2)?.sqrt()? + epsilon)?;
            let update = ((&m / c1)? / denom)?;
            var.set(&(var.as_tensor() - (update * learning_rate)?)?)?;
            self.m.insert(name.clone(), m);
            self.v.insert(name.clone(), v);
        }
        Ok(())
    }

    /// Named moment tensors, sorted by variable name.
    pub fn moments(&self) -> (Vec<(String, Tensor)>, Vec<(String, Tensor)>) {
        let sorted = |h: &HashMap<String, Tensor>| {
            let mut v: Vec<(String, Tensor)> = h.iter().map(|(k, t)| (k.clone(), t.clone())).collect();
            v.sort_by(|a, b| a.0.cmp(&b.0));
            v
        };
        (sorted(&self.m), sorted(&self.v))
    }

    pub fn restore(
        params: AdamParams,
        step: u64,
        m: Vec<(String, Tensor)>,
        v: Vec<(String, Tensor)>,
    ) -> Result<Self> {
        let m: HashMap<String, Tensor> = m.into_iter().collect();
        let v: HashMap<String, Tensor> = v.into_iter().collect();
        let mut km: Vec<&String> = m.keys().collect();
        let mut kv: Vec<&String> = v.keys().collect();
        km.sort();
        kv.sort();
        if km != kv {
            return Err(Error::Checkpoint("first and second moments name different variables".into()));
        }
        Ok(Self { params, step, m, v })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};

    fn scalar_var(x: f64) -> Var {
        Var::from_tensor(&Tensor::new(&[x], &Device::Cpu).unwrap()).unwrap()
    }

    fn value(v: &Var) -> f64 {
        v.as_tensor().to_vec1::<f64>().unwrap()[0]
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // Bias correction makes the first step exactly lr * sign(g) up to eps.
        let x = scalar_var(1.0);
        let mut opt = Adam::new(AdamParams {
            learning_rate: 0.01,
            ..AdamParams::default()
        });
        let loss = (x.as_tensor() * 3.0).unwrap().sum_all().unwrap();
        opt.step(&[("x".into(), &x)], &loss.backward().unwrap()).unwrap();
        assert!((value(&x) - 0.99).abs() < 1e-9);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn zero_learning_rate_freezes_bits() {
        let x = Var::from_tensor(&Tensor::new(&[0.3f32, -1e-20, 7.0], &Device::Cpu).unwrap()).unwrap();
        let before = x.as_tensor().to_vec1::<f32>().unwrap();
        let mut opt = Adam::new(AdamParams {
            learning_rate: 0.0,
            ..AdamParams::default()
        });
        for _ in 0..3 {
            let loss = x.as_tensor().sqr().unwrap().sum_all().unwrap();
            opt.step(&[("x".into(), &x)], &loss.backward().unwrap()).unwrap();
        }
        let after = x.as_tensor().to_vec1::<f32>().unwrap();
        assert_eq!(
            before.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            after.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn missing_gradient_is_skipped() {
        let a = scalar_var(1.0);
        let b = scalar_var(2.0);
        let mut opt = Adam::new(AdamParams::default());
        let loss = a.as_tensor().sqr().unwrap().sum_all().unwrap();
        opt.step(&[("a".into(), &a), ("b".into(), &b)], &loss.backward().unwrap()).unwrap();
        assert_eq!(value(&b), 2.0);
        let (m, _) = opt.moments();
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].1.dtype(), DType::F64);
    }
}
