//! Adam optimizer over named parameter lists.

use ndarray::ArrayD;

use super::{Params, ParamsMut, Scalar};

#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub lr: F,
    pub beta1: F,
    pub beta2: F,
    pub eps: F,
    step: u64,
    /// First/second moment per parameter tensor, in parameter order.
    state: Vec<(ArrayD<F>, ArrayD<F>)>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            lr: F::c(lr),
            beta1: F::c(beta1),
            beta2: F::c(beta2),
            eps: F::c(1e-8),
            step: 0,
            state: Vec::new(),
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = F::c(lr);
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Apply one update. `params` and `grads` must enumerate the same tensors
    /// in the same order; names are cross-checked to catch wiring mistakes.
    pub fn step(&mut self, params: &mut ParamsMut<'_, F>, grads: &Params<'_, F>) {
        assert_eq!(params.len(), grads.len(), "params/grads length mismatch");
        if self.state.is_empty() {
            self.state = params.iter().map(|(_, p)| (ArrayD::zeros(p.raw_dim()), ArrayD::zeros(p.raw_dim()))).collect();
        }
        assert_eq!(self.state.len(), params.len());
        self.step += 1;
        let t = self.step as i32;
        let bc1 = F::one() - self.beta1.powi(t);
        let bc2 = F::one() - self.beta2.powi(t);
        let one = F::one();

        for (((pname, p), (gname, g)), (m, v)) in
            params.iter_mut().zip(grads.iter()).zip(self.state.iter_mut())
        {
            assert_eq!(pname, gname, "parameter order mismatch");
            assert_eq!(p.raw_dim(), g.raw_dim(), "gradient shape mismatch for {pname}");
            ndarray::Zip::from(p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = self.beta1 * *m + (one - self.beta1) * g;
                    *v = self.beta2 * *v + (one - self.beta2) * g * g;
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    *p = *p - self.lr * mhat / (vhat.sqrt() + self.eps);
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, ArrayD, IxDyn};

    /// Adam on a 1-D quadratic must walk toward the minimum at the configured
    /// per-step magnitude.
    #[test]
    fn converges_on_quadratic() {
        let mut w = ArrayD::from_elem(IxDyn(&[1]), 5.0f64);
        let mut opt = Adam::new(0.1, 0.9, 0.999);
        for _ in 0..500 {
            let g = ArrayD::from_elem(IxDyn(&[1]), 2.0 * w[[0]]);
            let mut params = vec![("w".to_string(), w.view_mut())];
            let grads = vec![("w".to_string(), g.view())];
            opt.step(&mut params, &grads);
        }
        assert!(w[[0]].abs() < 1e-3, "w = {}", w[[0]]);
    }

    #[test]
    fn first_step_is_lr_sized() {
        let mut w = Array1::from_vec(vec![1.0f64]).into_dyn();
        let g = Array1::from_vec(vec![0.3f64]).into_dyn();
        let mut opt = Adam::new(0.05, 0.9, 0.999);
        let mut params = vec![("w".to_string(), w.view_mut())];
        let grads = vec![("w".to_string(), g.view())];
        opt.step(&mut params, &grads);
        // Bias correction makes the very first step ~= lr * sign(g).
        assert!((w[[0]] - (1.0 - 0.05)).abs() < 1e-6);
    }
}
