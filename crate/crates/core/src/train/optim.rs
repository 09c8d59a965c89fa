use crate::error::{Error, Result};
use crate::params::{global_norm, scale, Parameters};

/// Adam with bias correction. Moments share the parameter container's layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<P> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: P,
    pub v: P,
}

impl<P: Parameters + Clone> Adam<P> {
    /// Zeroed moments shaped like `params`.
    pub fn new(params: &P, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let mut m = params.clone();
        m.fill(0.0);
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            v: m.clone(),
            m,
        }
    }

    pub fn update(&mut self, params: &mut P, grads: &P) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::NonFinite {
                stage: "gradients",
                step: None,
            });
        }
        self.step += 1;
        let t = i32::try_from(self.step).unwrap_or(i32::MAX);
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let g_blocks = grads.blocks();
        let mut m_blocks = self.m.blocks_mut();
        let mut v_blocks = self.v.blocks_mut();
        for (k, (_, p)) in params.blocks_mut().into_iter().enumerate() {
            let g = g_blocks[k].data;
            let m = &mut *m_blocks[k].1;
            let v = &mut *v_blocks[k].1;
            if g.len() != p.len() || m.len() != p.len() {
                return Err(Error::shape("adam", (p.len(), 1), (g.len(), 1)));
            }
            for j in 0..p.len() {
                m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                p[j] -= lr * (m[j] / bc1) / ((v[j] / bc2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Rescale `grads` so its global norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_global_norm<P: Parameters>(grads: &mut P, max_norm: f64) -> Result<f64> {
    let norm = global_norm(grads);
    if !norm.is_finite() {
        return Err(Error::NonFinite {
            stage: "gradients",
            step: None,
        });
    }
    if norm > max_norm {
        scale(grads, max_norm / norm);
    }
    Ok(norm)
}
