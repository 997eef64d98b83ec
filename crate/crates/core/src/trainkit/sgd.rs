use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

/// `v ← μ·v + g + wd·p`, then `p ← p − lr·v`.
pub fn sgd_step(
    params: &mut [&mut DenseMatrix],
    grads: &[DenseMatrix],
    velocity: &mut [DenseMatrix],
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::Shape(format!(
            "{} params, {} grads, {} buffers",
            params.len(),
            grads.len(),
            velocity.len()
        )));
    }
    for (i, g) in grads.iter().enumerate() {
        if !g.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite gradient for parameter {i}"
            )));
        }
        if g.shape() != params[i].shape() || g.shape() != velocity[i].shape() {
            return Err(Error::Shape(format!(
                "parameter {i}: param {:?}, grad {:?}, buffer {:?}",
                params[i].shape(),
                g.shape(),
                velocity[i].shape()
            )));
        }
    }
    for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        for ((pv, gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vv = momentum * *vv + gv + weight_decay * *pv;
            *pv -= lr * *vv;
        }
    }
    Ok(())
}
