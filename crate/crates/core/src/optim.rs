//! Parameter update rules.

use alloc::vec::Vec;

use crate::encoder::EncoderParams;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
    Sgd,
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

pub trait Optimizer<T: Real> {
    fn step(&mut self, params: &mut EncoderParams<T>, grads: &EncoderParams<T>);
}

#[derive(Debug, Clone)]
pub struct Sgd {
    pub learning_rate: f64,
}

impl<T: Real> Optimizer<T> for Sgd {
    fn step(&mut self, params: &mut EncoderParams<T>, grads: &EncoderParams<T>) {
        let lr = T::lift64(self.learning_rate);
        for (p, g) in params.matrices_mut().into_iter().zip(grads.matrices()) {
            for (w, &d) in p.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *w = *w - lr * d;
            }
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: i32,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }
}

impl<T: Real> Optimizer<T> for Adam<T> {
    fn step(&mut self, params: &mut EncoderParams<T>, grads: &EncoderParams<T>) {
        if self.m.is_empty() {
            for g in grads.matrices() {
                self.m.push(alloc::vec![T::zero(); g.as_slice().len()]);
                self.v.push(alloc::vec![T::zero(); g.as_slice().len()]);
            }
        }
        self.step += 1;
        let (b1, b2) = (T::lift64(self.beta1), T::lift64(self.beta2));
        let one = T::one();
        let bc1 = one - b1.powi(self.step);
        let bc2 = one - b2.powi(self.step);
        let lr = T::lift64(self.learning_rate);
        let eps = T::lift64(self.epsilon);
        let mats = params.matrices_mut().into_iter().zip(grads.matrices());
        for ((p, g), (m, v)) in mats.zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for (((w, &d), mi), vi) in p
                .as_mut_slice()
                .iter_mut()
                .zip(g.as_slice())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = b1 * *mi + (one - b1) * d;
                *vi = b2 * *vi + (one - b2) * d * d;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

pub fn build_optimizer<T: Real>(kind: OptimizerKind, learning_rate: f64) -> alloc::boxed::Box<dyn Optimizer<T>> {
    match kind {
        OptimizerKind::Adam { beta1, beta2, epsilon } => {
            alloc::boxed::Box::new(Adam::<T>::new(learning_rate, beta1, beta2, epsilon))
        }
        OptimizerKind::Sgd => alloc::boxed::Box::new(Sgd { learning_rate }),
    }
}
