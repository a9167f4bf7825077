//! Adam optimizer with bias correction.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates for one parameter tensor.
#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f32>,
    v: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    /// Step count; bias correction uses t+1 on the t-th call.
    t: u64,
    moments: Vec<Moments>,
}

impl Adam {
    /// `sizes[i]` is the element count of parameter tensor `i`.
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Self {
        let moments = sizes
            .iter()
            .map(|&n| Moments {
                m: vec![0.0; n],
                v: vec![0.0; n],
            })
            .collect();
        Self {
            config,
            t: 0,
            moments,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One update over all parameter tensors. `params[i]`, `grads[i]` and the
    /// stored moments must stay aligned across calls. `names` is used only
    /// for diagnostics.
    pub fn step(
        &mut self,
        params: &mut [Vec<f32>],
        grads: &[Vec<f32>],
        names: &[String],
    ) -> Result<()> {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.moments.len());
        for (i, g) in grads.iter().enumerate() {
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteGrad {
                    name: names.get(i).cloned().unwrap_or_else(|| format!("#{i}")),
                });
            }
        }
        self.t += 1;
        let c = &self.config;
        // Bias-corrected step size, computed once per step in f64.
        let corr = (1.0 - (c.beta2 as f64).powi(self.t as i32)).sqrt()
            / (1.0 - (c.beta1 as f64).powi(self.t as i32));
        let alpha = (c.lr as f64 * corr) as f32;
        for ((p, g), mom) in params.iter_mut().zip(grads).zip(self.moments.iter_mut()) {
            for k in 0..p.len() {
                let gk = g[k];
                mom.m[k] = c.beta1 * mom.m[k] + (1.0 - c.beta1) * gk;
                mom.v[k] = c.beta2 * mom.v[k] + (1.0 - c.beta2) * gk * gk;
                p[k] -= alpha * mom.m[k] / (mom.v[k].sqrt() + c.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i}")).collect()
    }

    #[test]
    fn zero_grad_leaves_params_unchanged() {
        let mut params = vec![vec![1.0f32, -2.0, 3.5]];
        let grads = vec![vec![0.0f32; 3]];
        let mut opt = Adam::new(AdamConfig::default(), &[3]);
        opt.step(&mut params, &grads, &names(1)).unwrap();
        assert_eq!(params[0], vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        // Hand-computed: m1 = 0.1, v1 = 0.001, corrected step =
        // lr * m̂ / (√v̂ + eps) ≈ lr for grad = 1 on step one.
        let mut params = vec![vec![0.0f32]];
        let grads = vec![vec![1.0f32]];
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        let mut opt = Adam::new(cfg, &[1]);
        opt.step(&mut params, &grads, &names(1)).unwrap();
        assert!(
            (params[0][0] + 0.1).abs() < 1e-6,
            "expected ≈ -0.1, got {}",
            params[0][0]
        );
    }

    #[test]
    fn determinism_across_runs() {
        let run = || {
            let mut params = vec![vec![0.5f32, -0.25]];
            let mut opt = Adam::new(AdamConfig::default(), &[2]);
            for s in 0..50 {
                let g = vec![vec![(s as f32 * 0.1).sin(), (s as f32 * 0.2).cos()]];
                opt.step(&mut params, &g, &names(1)).unwrap();
            }
            params
        };
        let a = run();
        let b = run();
        assert_eq!(
            a[0], b[0],
            "identical inputs must give bitwise-equal params"
        );
    }

    #[test]
    fn non_finite_grad_names_parameter() {
        let mut params = vec![vec![0.0f32], vec![0.0f32]];
        let grads = vec![vec![0.0f32], vec![f32::NAN]];
        let mut opt = Adam::new(AdamConfig::default(), &[1, 1]);
        let err = opt
            .step(&mut params, &grads, &["w".into(), "b".into()])
            .unwrap_err();
        assert!(
            err.to_string().contains("b"),
            "error should name `b`: {err}"
        );
    }
}
