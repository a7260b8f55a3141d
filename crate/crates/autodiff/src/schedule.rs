use std::f64::consts::PI;

use crate::error::{AutodiffError, Result};

/// Linear warmup from 0 to `base_lr` over `warmup_steps`, then cosine decay to
/// 0 at `total_steps`.
pub fn cosine_warmup_lr(step: u64, warmup_steps: u64, total_steps: u64, base_lr: f64) -> Result<f64> {
    if warmup_steps > total_steps {
        return Err(AutodiffError::Invalid {
            op: "cosine_warmup_lr",
            detail: format!("warmup {warmup_steps} exceeds total {total_steps}"),
        });
    }
    if step > total_steps {
        return Err(AutodiffError::Invalid {
            op: "cosine_warmup_lr",
            detail: format!("step {step} beyond total {total_steps}"),
        });
    }
    if step < warmup_steps {
        return Ok(base_lr * step as f64 / warmup_steps as f64);
    }
    let span = total_steps - warmup_steps;
    if span == 0 {
        return Ok(base_lr);
    }
    let progress = (step - warmup_steps) as f64 / span as f64;
    Ok(0.5 * base_lr * (1.0 + (PI * progress).cos()))
}
