use serde::{Deserialize, Serialize};

use super::layers::ParamSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global L2 norm limit applied to the gradient before the update.
    pub clip_norm: Option<f64>,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(ps: &ParamSet, lr: f64, clip_norm: Option<f64>) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm,
            t: 0,
            m: ps.params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
            v: ps.params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
        }
    }

    /// Clips, then applies one bias-corrected update. Returns the pre-clip gradient norm.
    pub fn step(&mut self, ps: &mut ParamSet) -> f64 {
        let norm = ps.grad_norm();
        let scale = match self.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, m), v) in ps.params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.value.len() {
                let g = p.grad[i] * scale;
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p.value[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
        norm
    }

    pub fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.m, &self.v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad() -> ParamSet {
        let mut ps = ParamSet::new(0);
        ps.add("x", vec![2], vec![1.0, 1.0]);
        ps
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut ps = quad();
        let mut opt = Adam::new(&ps, 3e-4, Some(0.5));
        ps.zero_grad();
        opt.step(&mut ps);
        assert_eq!(ps.params[0].value, vec![1.0, 1.0]);
        assert!(opt.moments().0[0].iter().all(|&m| m == 0.0));
    }

    #[test]
    fn clipping_caps_effective_norm() {
        let mut ps = quad();
        ps.params[0].grad = vec![6.0, 8.0];
        let mut opt = Adam::new(&ps, 1e-3, Some(0.5));
        assert_eq!(opt.step(&mut ps), 10.0);
        // First moment after one step is (1 - beta1) times the clipped gradient.
        let m = &opt.moments().0[0];
        let eff = (m[0].powi(2) + m[1].powi(2)).sqrt() / 0.1;
        assert!((eff - 0.5).abs() < 1e-12);
    }

    #[test]
    fn converges_on_quadratic() {
        let mut ps = quad();
        let mut opt = Adam::new(&ps, 0.05, None);
        for _ in 0..200 {
            let x = ps.params[0].value.clone();
            ps.params[0].grad = x.iter().map(|v| 2.0 * v).collect();
            opt.step(&mut ps);
        }
        let x = &ps.params[0].value;
        assert!((x[0].powi(2) + x[1].powi(2)).sqrt() < 1e-2);
    }
}
