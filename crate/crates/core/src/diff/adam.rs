use ndarray::{Array2, Zip};

use super::ParamTensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moments are allocated lazily on the first step
/// and are matched to parameters by position.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step_count: u64,
    first_moment: Vec<Array2<f64>>,
    second_moment: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step_count: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update to every parameter and zeroes the gradients.
    pub fn step(&mut self, params: &mut [&mut ParamTensor], lr: f64) {
        if self.first_moment.is_empty() {
            self.first_moment = params.iter().map(|p| Array2::zeros(p.shape())).collect();
            self.second_moment = self.first_moment.clone();
        }
        assert_eq!(
            params.len(),
            self.first_moment.len(),
            "parameter list changed between Adam steps"
        );
        self.step_count += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let t = self.step_count as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);

        for ((p, m), v) in params
            .iter_mut()
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            let ParamTensor { value, grad } = &mut **p;
            Zip::from(value)
                .and(&*grad)
                .and(m)
                .and(v)
                .for_each(|w, &g, m, v| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *w -= lr * m_hat / (v_hat.sqrt() + eps);
                });
            grad.fill(0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_gradient_leaves_params_but_counts_step() {
        let mut p = ParamTensor::new(array![[1.0, -2.0]]);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut [&mut p], 0.1);
        assert_eq!(p.value, array![[1.0, -2.0]]);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        // At t = 1 the bias-corrected moments are g and g², so the update is
        // -lr·g/(|g| + eps).
        let g = array![[0.5, -3.0, 1e-3]];
        let mut p = ParamTensor::new(array![[0.0, 0.0, 0.0]]);
        p.grad = g.clone();
        let lr = 0.01;
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut [&mut p], lr);
        for (w, gv) in p.value.iter().zip(g.iter()) {
            let expected = -lr * gv / (gv.abs() + 1e-8);
            assert!((w - expected).abs() < 1e-15, "{w} vs {expected}");
        }
        assert!(p.grad.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn constant_gradient_descends() {
        let mut p = ParamTensor::new(array![[0.0, 0.0]]);
        let mut adam = Adam::new(AdamConfig::default());
        for _ in 0..50 {
            p.grad = array![[2.0, -1.0]];
            adam.step(&mut [&mut p], 0.01);
        }
        assert!(p.value[[0, 0]] < 0.0);
        assert!(p.value[[0, 1]] > 0.0);
    }
}
