/// A first-order update rule over a flat parameter vector.
pub trait Optimizer {
    fn step(&mut self, params: &mut [f64], grad: &[f64]);
}

/// Plain gradient descent: `θ ← θ − lr·g`.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub lr: f64,
}

impl Optimizer for Sgd {
    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        for (p, g) in params.iter_mut().zip(grad) {
            *p -= self.lr * g;
        }
    }
}

/// RMSProp with the usual defaults (`alpha = 0.99`, `eps = 1e-8`).
///
/// `v ← αv + (1−α)g²`, `θ ← θ − lr·g / (√v + eps)`.
#[derive(Clone, Debug)]
pub struct RmsProp {
    pub lr: f64,
    pub alpha: f64,
    pub eps: f64,
    square_avg: Vec<f64>,
}

impl RmsProp {
    pub fn new(lr: f64, n_params: usize) -> Self {
        Self {
            lr,
            alpha: 0.99,
            eps: 1e-8,
            square_avg: vec![0.0; n_params],
        }
    }
}

impl Optimizer for RmsProp {
    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        if self.square_avg.len() != params.len() {
            self.square_avg = vec![0.0; params.len()];
        }
        for ((p, g), v) in params.iter_mut().zip(grad).zip(&mut self.square_avg) {
            *v = self.alpha * *v + (1.0 - self.alpha) * g * g;
            *p -= self.lr * g / (v.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_is_exact() {
        let mut p = vec![1.0, -2.0];
        Sgd { lr: 0.5 }.step(&mut p, &[0.2, -0.4]);
        assert_eq!(p, vec![0.9, -1.8]);
    }

    #[test]
    fn rmsprop_first_step_matches_closed_form() {
        let mut p = vec![1.0];
        let mut opt = RmsProp::new(0.01, 1);
        opt.step(&mut p, &[0.5]);
        let v: f64 = 0.01 * 0.25;
        let expect = 1.0 - 0.01 * 0.5 / (v.sqrt() + 1e-8);
        assert!((p[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_params_fixed() {
        let mut p = vec![0.3, 0.4];
        let mut opt = RmsProp::new(0.1, 2);
        opt.step(&mut p, &[0.0, 0.0]);
        assert_eq!(p, vec![0.3, 0.4]);
    }
}
