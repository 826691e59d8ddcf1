use super::tensor::{Tensor, TensorError};

/// Adam with bias correction and coupled L2 weight decay
/// (`grad += weight_decay * param` before the moment updates).
#[derive(Debug, Clone)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        Self::with_betas(params, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(params: &[Tensor], beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            beta1,
            beta2,
            epsilon,
            t: 0,
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Applies one update in place. Nothing is modified if any gradient is
    /// non-finite; the error names the offending parameter index.
    pub fn step(
        &mut self,
        params: &mut [Tensor],
        grads: &[Tensor],
        lr: f64,
        weight_decay: f64,
    ) -> Result<(), TensorError> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(TensorError::Dimension {
                op: "adam_step",
                lhs: vec![params.len()],
                rhs: vec![grads.len()],
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.m[i].shape() {
                return Err(TensorError::Dimension {
                    op: "adam_step",
                    lhs: p.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
            if !g.is_finite() {
                return Err(TensorError::NonFinite {
                    what: format!("gradient of parameter {i}"),
                });
            }
        }

        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let pd = p.data_mut();
            let md = m.data_mut();
            let vd = v.data_mut();
            for k in 0..pd.len() {
                let grad = g.data()[k] + weight_decay * pd[k];
                md[k] = b1 * md[k] + (1.0 - b1) * grad;
                vd[k] = b2 * vd[k] + (1.0 - b2) * grad * grad;
                let m_hat = md[k] / c1;
                let v_hat = vd[k] / c2;
                pd[k] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}
