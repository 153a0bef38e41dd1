use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    /// Moment buffers shaped like `tensors`.
    pub fn new(tensors: &[&[f64]]) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: tensors.iter().map(|t| vec![0.0; t.len()]).collect(),
            v: tensors.iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }

    /// One bias-corrected update. `params` and `grads` must list tensors in
    /// the order used at construction.
    pub fn update(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>, lr: f64) {
        assert_eq!(params.len(), self.m.len(), "tensor count changed");
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = vec![1.0, -2.0];
        let mut adam = Adam::new(&[&p]);
        adam.update(vec![&mut p], vec![&[0.5, -3.0]], 0.1);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 1.9).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_never_moves() {
        let mut p = vec![0.25; 3];
        let mut adam = Adam::new(&[&p]);
        for _ in 0..5 {
            adam.update(vec![&mut p], vec![&[0.0; 3]], 1e-3);
        }
        assert_eq!(p, vec![0.25; 3]);
    }

    #[test]
    fn minimises_quadratic() {
        let mut p = vec![3.0];
        let mut adam = Adam::new(&[&p]);
        for _ in 0..2000 {
            let g = [2.0 * (p[0] - 1.0)];
            adam.update(vec![&mut p], vec![&g], 0.01);
        }
        assert!((p[0] - 1.0).abs() < 1e-3);
    }
}
