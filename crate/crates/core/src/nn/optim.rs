//! Decoupled-weight-decay Adam and the exponential moving average used by
//! the mean-teacher refinement loop.

use super::tensor::{s, Scalar, Tensor2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// AdamW. Decay is applied to every parameter, biases included. Moment
/// slots are allocated lazily on the first step.
#[derive(Debug, Clone)]
pub struct AdamW<S> {
    pub cfg: AdamWConfig,
    t: u64,
    m: Vec<Tensor2<S>>,
    v: Vec<Tensor2<S>>,
}

impl<S: Scalar> AdamW<S> {
    pub fn new(cfg: AdamWConfig) -> Self {
        AdamW {
            cfg,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [&mut Tensor2<S>], grads: &[Tensor2<S>]) {
        assert_eq!(params.len(), grads.len(), "param/grad count mismatch");
        if self.m.is_empty() {
            for p in params.iter() {
                self.m.push(Tensor2::zeros(p.rows(), p.cols()));
                self.v.push(Tensor2::zeros(p.rows(), p.cols()));
            }
        }
        assert_eq!(self.m.len(), params.len(), "optimizer bound to a different model");
        self.t += 1;
        let b1: S = s(self.cfg.beta1);
        let b2: S = s(self.cfg.beta2);
        let lr: S = s(self.cfg.lr);
        let eps: S = s(self.cfg.eps);
        let wd: S = s(self.cfg.weight_decay);
        let one = S::one();
        let corr1: S = s(1.0 - self.cfg.beta1.powi(self.t as i32));
        let corr2: S = s(1.0 - self.cfg.beta2.powi(self.t as i32));
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            assert_eq!(p.rows(), g.rows(), "grad shape mismatch");
            assert_eq!(p.cols(), g.cols(), "grad shape mismatch");
            for ((pv, &gv), (mv, vv)) in p
                .data_mut()
                .iter_mut()
                .zip(g.data().iter())
                .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
            {
                *mv = b1 * *mv + (one - b1) * gv;
                *vv = b2 * *vv + (one - b2) * gv * gv;
                let m_hat = *mv / corr1;
                let v_hat = *vv / corr2;
                *pv = *pv - lr * (m_hat / (v_hat.sqrt() + eps) + wd * *pv);
            }
        }
    }
}

/// `teacher = momentum * teacher + (1 - momentum) * student`, element-wise.
pub fn ema_update<S: Scalar>(teacher: &mut Tensor2<S>, student: &Tensor2<S>, momentum: S) {
    assert_eq!(teacher.rows(), student.rows(), "ema shape mismatch");
    assert_eq!(teacher.cols(), student.cols(), "ema shape mismatch");
    let one = S::one();
    for (t, &st) in teacher.data_mut().iter_mut().zip(student.data().iter()) {
        *t = momentum * *t + (one - momentum) * st;
    }
}
