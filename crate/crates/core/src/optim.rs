//! Adam with bias correction over groups of flat parameter slices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Float;

pub const DEFAULT_LR: f64 = 0.048;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: DEFAULT_LR,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::invalid("adam betas must lie in [0,1) and eps must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam<F> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

fn check_finite<F: Float>(grads: &[&[F]]) -> Result<()> {
    for (g, group) in grads.iter().enumerate() {
        if let Some(k) = group.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient group {g} element {k} is {:?}",
                group[k]
            )));
        }
    }
    Ok(())
}

impl<F: Float> Adam<F> {
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Self {
        Self {
            config,
            step: 0,
            m: sizes.iter().map(|&n| vec![F::zero(); n]).collect(),
            v: sizes.iter().map(|&n| vec![F::zero(); n]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut [F]], grads: &[&[F]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::invalid(format!(
                "expected {} parameter groups, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[i].len() || g.len() != self.m[i].len() {
                return Err(Error::DimensionMismatch {
                    expected: self.m[i].len(),
                    actual: if p.len() != self.m[i].len() { p.len() } else { g.len() },
                });
            }
        }
        check_finite(grads)?;

        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let (b1, b2) = (F::lit(c.beta1), F::lit(c.beta2));
        let corr1 = F::one() - F::lit(c.beta1.powi(t));
        let corr2 = F::one() - F::lit(c.beta2.powi(t));
        let lr = F::lit(c.lr);
        let eps = F::lit(c.eps);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for k in 0..p.len() {
                m[k] = b1 * m[k] + (F::one() - b1) * g[k];
                v[k] = b2 * v[k] + (F::one() - b2) * g[k] * g[k];
                let m_hat = m[k] / corr1;
                let v_hat = v[k] / corr2;
                p[k] = p[k] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Adam over the rows of a matrix where each step touches only some rows; every row keeps
/// its own step count so untouched rows are never decayed.
#[derive(Debug, Clone, PartialEq)]
pub struct RowAdam<F> {
    pub config: AdamConfig,
    width: usize,
    steps: Vec<u32>,
    m: Vec<F>,
    v: Vec<F>,
}

impl<F: Float> RowAdam<F> {
    pub fn new(config: AdamConfig, rows: usize, width: usize) -> Self {
        Self {
            config,
            width,
            steps: vec![0; rows],
            m: vec![F::zero(); rows * width],
            v: vec![F::zero(); rows * width],
        }
    }

    pub fn step_row(&mut self, row: usize, param: &mut [F], grad: &[F]) -> Result<()> {
        if param.len() != self.width || grad.len() != self.width {
            return Err(Error::DimensionMismatch {
                expected: self.width,
                actual: param.len().min(grad.len()),
            });
        }
        check_finite(&[grad])?;
        self.steps[row] += 1;
        let c = self.config;
        let t = self.steps[row] as i32;
        let (b1, b2) = (F::lit(c.beta1), F::lit(c.beta2));
        let corr1 = F::one() - F::lit(c.beta1.powi(t));
        let corr2 = F::one() - F::lit(c.beta2.powi(t));
        let (lr, eps) = (F::lit(c.lr), F::lit(c.eps));
        let base = row * self.width;
        for k in 0..self.width {
            let (m, v) = (&mut self.m[base + k], &mut self.v[base + k]);
            *m = b1 * *m + (F::one() - b1) * grad[k];
            *v = b2 * *v + (F::one() - b2) * grad[k] * grad[k];
            param[k] = param[k] - lr * (*m / corr1) / ((*v / corr2).sqrt() + eps);
        }
        Ok(())
    }
}
