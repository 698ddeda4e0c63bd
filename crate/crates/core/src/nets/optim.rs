use crate::autodiff::{Graph, Tensor, Var};

use super::NetError;

/// First-order optimizer over an ordered parameter list.
///
/// The parameter order must be the same on every call; per-parameter state
/// is matched by position.
pub trait Optimizer {
    fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<(), NetError>;

    fn learning_rate(&self) -> f64;

    fn set_learning_rate(&mut self, lr: f64);
}

/// Gradients for `vars` after `backward`, in the same order.
pub fn collect_grads(g: &Graph, vars: &[Var]) -> Result<Vec<Tensor>, NetError> {
    vars.iter()
        .enumerate()
        .map(|(i, &v)| g.grad(v).cloned().ok_or(NetError::MissingGradient(i)))
        .collect()
}

fn check_state(state: &mut Vec<Vec<f64>>, params: &[&mut Tensor], grads: &[Tensor]) -> Result<(), NetError> {
    if params.len() != grads.len() {
        return Err(NetError::ParamCount {
            expected: params.len(),
            got: grads.len(),
        });
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(NetError::GradientShape {
                index: i,
                param: p.shape().to_vec(),
                grad: g.shape().to_vec(),
            });
        }
    }
    if state.is_empty() {
        *state = params.iter().map(|p| vec![0.0; p.len()]).collect();
    } else if state.len() != params.len() || state.iter().zip(params).any(|(s, p)| s.len() != p.len()) {
        return Err(NetError::ParamCount {
            expected: state.len(),
            got: params.len(),
        });
    }
    Ok(())
}

/// SGD with heavy-ball momentum: `v ← m·v + g`, `p ← p − lr·v`.
#[derive(Debug, Clone)]
pub struct SgdMomentum {
    lr: f64,
    momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl SgdMomentum {
    pub fn new(lr: f64, momentum: f64) -> Self {
        SgdMomentum {
            lr,
            momentum,
            velocity: Vec::new(),
        }
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }
}

impl Optimizer for SgdMomentum {
    fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<(), NetError> {
        check_state(&mut self.velocity, params, grads)?;
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            for ((pi, &gi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(v.iter_mut()) {
                *vi = self.momentum * *vi + gi;
                *pi -= self.lr * *vi;
            }
        }
        Ok(())
    }

    fn learning_rate(&self) -> f64 {
        self.lr
    }

    fn set_learning_rate(&mut self, lr: f64) {
        self.lr = lr;
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            first: Vec::new(),
            second: Vec::new(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

impl Optimizer for Adam {
    fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<(), NetError> {
        check_state(&mut self.first, params, grads)?;
        check_state(&mut self.second, params, grads)?;
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *pi -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }

    fn learning_rate(&self) -> f64 {
        self.lr
    }

    fn set_learning_rate(&mut self, lr: f64) {
        self.lr = lr;
    }
}
