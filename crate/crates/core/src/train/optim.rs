use crate::error::{CanError, Result};
use crate::tensor::Tensor;

/// Classical momentum: `v ← μ·v − lr·g`, `p ← p + v`.
pub fn sgd_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    lr: f64,
    momentum: f64,
    velocity: &mut [Tensor],
) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(CanError::shape(format!(
            "{} parameters, {} gradients, {} velocity buffers",
            params.len(),
            grads.len(),
            velocity.len()
        )));
    }
    for ((p, g), v) in params.iter().zip(grads).zip(velocity.iter()) {
        if p.shape() != g.shape() || p.shape() != v.shape() {
            return Err(CanError::shape(format!(
                "parameter {:?}, gradient {:?}, velocity {:?}",
                p.shape(),
                g.shape(),
                v.shape()
            )));
        }
    }
    for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vv = momentum * *vv - lr * gv;
            *pv += *vv;
        }
    }
    Ok(())
}
