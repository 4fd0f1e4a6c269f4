use super::network::Gradients;
use super::tensor::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam moment buffers for one network.
#[derive(Debug, Clone, Default)]
pub struct Adam {
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(shapes: &[Vec<usize>]) -> Self {
        let zeros = |s: &Vec<usize>| vec![0.0; s.iter().product()];
        Self {
            step: 0,
            m: shapes.iter().map(zeros).collect(),
            v: shapes.iter().map(zeros).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn tensor_count(&self) -> usize {
        self.m.len()
    }

    pub(crate) fn step(&mut self, params: Vec<&mut Tensor>, grads: &Gradients, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - BETA1.powf(self.step as f64);
        let c2 = 1.0 - BETA2.powf(self.step as f64);
        for (((p, g), m), v) in params
            .into_iter()
            .zip(&grads.params)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((w, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = BETA1 * *mi + (1.0 - BETA1) * gi;
                *vi = BETA2 * *vi + (1.0 - BETA2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + EPSILON);
            }
        }
    }
}
