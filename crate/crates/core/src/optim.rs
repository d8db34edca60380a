//! Decoupled-weight-decay Adam and a linear warmup/decay schedule.

use celm_tensor::ParamStore;

/// AdamW over the trainable tensors of a [`ParamStore`]; moment buffers
/// follow the store's insertion order.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        AdamW { beta1, beta2, eps, weight_decay, t: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update with learning rate `lr`, then clears the gradients.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut k = 0;
        for (_, p) in store.iter_mut() {
            if !p.requires_grad {
                continue;
            }
            if self.m.len() <= k {
                self.m.push(vec![0.0; p.len()]);
                self.v.push(vec![0.0; p.len()]);
            }
            let grad = p.grad.take();
            let m = &mut self.m[k];
            let v = &mut self.v[k];
            for (i, x) in p.data_mut().iter_mut().enumerate() {
                let g = grad.as_ref().map_or(0.0, |gr| gr[i]);
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                *x -= lr * (mh / (vh.sqrt() + self.eps) + self.weight_decay * *x);
            }
            k += 1;
        }
        store.zero_grad();
    }
}

/// Global L2 norm of the trainable gradients.
pub fn grad_norm(store: &ParamStore) -> f64 {
    store
        .iter()
        .filter(|(_, t)| t.requires_grad)
        .flat_map(|(_, t)| t.grad.iter().flatten())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt()
}

/// Scales all trainable gradients so their global norm is at most `max`.
pub fn clip_grad_norm(store: &mut ParamStore, max: f64) -> f64 {
    let norm = grad_norm(store);
    if norm > max && norm > 0.0 {
        let s = max / norm;
        for (_, t) in store.iter_mut() {
            t.grad.iter_mut().flatten().for_each(|g| *g *= s);
        }
    }
    norm
}

/// Linear warmup from 0 to `peak`, then linear decay to 0 at `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSchedule {
    pub peak: f64,
    pub total_steps: usize,
    pub warmup_steps: usize,
}

impl LinearSchedule {
    pub fn new(peak: f64, total_steps: usize, warmup_ratio: f64) -> Self {
        LinearSchedule { peak, total_steps, warmup_steps: (warmup_ratio * total_steps as f64).ceil() as usize }
    }

    /// Rate for the update that follows `step` completed updates.
    pub fn lr(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.peak * step as f64 / self.warmup_steps as f64;
        }
        let rest = self.total_steps.saturating_sub(self.warmup_steps);
        if rest == 0 {
            return self.peak;
        }
        self.peak * (self.total_steps.saturating_sub(step) as f64 / rest as f64).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use celm_tensor::Tensor;

    #[test]
    fn schedule_shape() {
        let s = LinearSchedule::new(1e-4, 100, 0.1);
        assert_eq!(s.warmup_steps, 10);
        assert_eq!(s.lr(0), 0.0);
        assert!((s.lr(5) - 5e-5).abs() < 1e-18);
        assert_eq!(s.lr(10), 1e-4);
        assert!((s.lr(55) - 5e-5).abs() < 1e-18);
        assert_eq!(s.lr(100), 0.0);
    }

    #[test]
    fn no_warmup_starts_at_peak() {
        let s = LinearSchedule::new(2.0, 4, 0.0);
        assert_eq!(s.lr(0), 2.0);
        assert_eq!(s.lr(2), 1.0);
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::new(vec![2], vec![1.0, -1.0]).unwrap().with_grad(true));
        store.get_mut("w").unwrap().accumulate_grad(&[0.5, -3.0]);
        let mut opt = AdamW::new(0.9, 0.99, 1e-8, 0.0);
        opt.step(&mut store, 0.1);
        let w = store.get("w").unwrap().data();
        assert!((w[0] - 0.9).abs() < 1e-7 && (w[1] + 0.9).abs() < 1e-7, "{w:?}");
        assert!(store.get("w").unwrap().grad.is_none());
    }

    #[test]
    fn decoupled_decay_without_gradient() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::new(vec![1], vec![2.0]).unwrap().with_grad(true));
        let mut opt = AdamW::new(0.9, 0.99, 1e-8, 0.5);
        opt.step(&mut store, 0.1);
        assert!((store.get("w").unwrap().data()[0] - 1.9).abs() < 1e-12);
    }

    #[test]
    fn clipping_caps_norm() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::zeros(&[2]).with_grad(true));
        store.get_mut("w").unwrap().accumulate_grad(&[3.0, 4.0]);
        assert_eq!(clip_grad_norm(&mut store, 1.0), 5.0);
        assert!((grad_norm(&store) - 1.0).abs() < 1e-12);
    }
}
