use super::layers::Param;
use super::tensor::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    RmsProp { lr: f64, rho: f64, eps: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn rmsprop(lr: f64) -> Self {
        OptimizerKind::RmsProp {
            lr,
            rho: 0.9,
            eps: 1e-7,
        }
    }

    pub fn adam(lr: f64) -> Self {
        OptimizerKind::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-parameter optimizer state, indexed by position in the parameter
/// list passed to `step`.
#[derive(Clone, Debug)]
pub struct Optimizer<S> {
    kind: OptimizerKind,
    t: u64,
    first: Vec<Vec<S>>,
    second: Vec<Vec<S>>,
}

impl<S: Scalar> Optimizer<S> {
    pub fn new(kind: OptimizerKind) -> Self {
        Self {
            kind,
            t: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update from the accumulated gradients. Frozen
    /// parameters are left untouched.
    pub fn step(&mut self, params: Vec<&mut Param<S>>) {
        if self.second.is_empty() {
            self.first = params.iter().map(|p| vec![S::zero(); p.value.len()]).collect();
            self.second = self.first.clone();
        }
        assert_eq!(self.second.len(), params.len(), "parameter list changed");
        self.t += 1;
        match self.kind {
            OptimizerKind::RmsProp { lr, rho, eps } => {
                let (lr, rho, eps) = (S::of(lr), S::of(rho), S::of(eps));
                let one_minus = S::one() - rho;
                for (p, s) in params.into_iter().zip(&mut self.second) {
                    if !p.trainable {
                        continue;
                    }
                    for ((w, &g), s) in p.value.data_mut().iter_mut().zip(&p.grad).zip(s) {
                        *s = rho * *s + one_minus * g * g;
                        *w -= lr * g / (*s + eps).sqrt();
                    }
                }
            }
            OptimizerKind::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                let c1 = S::of(1.0 - beta1.powi(self.t as i32));
                let c2 = S::of(1.0 - beta2.powi(self.t as i32));
                let (lr, b1, b2, eps) = (S::of(lr), S::of(beta1), S::of(beta2), S::of(eps));
                for ((p, m), v) in params.into_iter().zip(&mut self.first).zip(&mut self.second) {
                    if !p.trainable {
                        continue;
                    }
                    for (((w, &g), m), v) in
                        p.value.data_mut().iter_mut().zip(&p.grad).zip(m).zip(v)
                    {
                        *m = b1 * *m + (S::one() - b1) * g;
                        *v = b2 * *v + (S::one() - b2) * g * g;
                        let m_hat = *m / c1;
                        let v_hat = *v / c2;
                        *w -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::tensor::Tensor;

    fn param(v: f64, g: f64) -> Param<f64> {
        Param {
            value: Tensor::from_vec(vec![v]),
            grad: vec![g],
            trainable: true,
        }
    }

    fn run(kind: OptimizerKind, grads: &[f64]) -> Vec<f64> {
        let mut opt = Optimizer::new(kind);
        let mut p = param(0.0, 0.0);
        let mut deltas = Vec::new();
        for &g in grads {
            p.grad[0] = g;
            let before = p.value.data()[0];
            opt.step(vec![&mut p]);
            deltas.push(p.value.data()[0] - before);
        }
        deltas
    }

    #[test]
    fn rmsprop_first_step() {
        let d = run(OptimizerKind::rmsprop(0.0002), &[1.0]);
        let expected = -0.0002 / (0.1f64 + 1e-7).sqrt();
        assert!((d[0] - expected).abs() < 1e-15);
        assert!((d[0] + 6.3245e-4).abs() < 1e-8);
    }

    #[test]
    fn rmsprop_steps_shrink_and_zero_gradient_is_noop() {
        let d = run(OptimizerKind::rmsprop(0.0002), &[1.0, 1.0]);
        assert!(d[1].abs() < d[0].abs());
        assert_eq!(run(OptimizerKind::rmsprop(0.0002), &[0.0]), vec![0.0]);
    }

    #[test]
    fn adam_first_step_is_about_lr() {
        let d = run(OptimizerKind::adam(1e-4), &[1.0]);
        assert!((d[0] + 1e-4 / (1.0 + 1e-8)).abs() < 1e-15);
        assert_eq!(run(OptimizerKind::adam(1e-4), &[0.0]), vec![0.0]);
    }

    #[test]
    fn adam_constant_gradient_step_bound() {
        for d in run(OptimizerKind::adam(1e-3), &[0.7; 50]) {
            assert!(d.abs() <= 1e-3 * (1.0 + 1e-9));
        }
    }

    #[test]
    fn frozen_params_do_not_move() {
        let mut opt = Optimizer::new(OptimizerKind::adam(0.1));
        let mut p = param(1.0, 5.0);
        p.trainable = false;
        opt.step(vec![&mut p]);
        assert_eq!(p.value.data()[0], 1.0);
    }
}
