//! Confidence weight deciding, per sample, how much to learn from the expert.
//!
//! `phi` combines three signals: how strongly the current network already
//! prefers the expert's action (`delta_q`), how many updates the expert state
//! has received (`discount_weight`), and how reliable the action inference is.
//! It is always treated as a constant coefficient; no gradient flows through it.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceParams {
    /// Sigmoid sharpness.
    pub beta: f32,
    pub c_max: u32,
    pub err_max: f32,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `sigmoid((q[a_e] - q[a_a]) * beta)`.
pub fn delta_q(q: &[f32], a_e: usize, a_a: usize, beta: f32) -> f32 {
    if a_e == a_a {
        return 0.5;
    }
    sigmoid((q[a_e] as f64 - q[a_a] as f64) * beta as f64) as f32
}

/// `log(1 + min(c, c_max)) / log(1 + c_max)`.
pub fn discount_weight(c: u32, c_max: u32) -> f32 {
    if c_max == 0 {
        return 1.0;
    }
    ((c.min(c_max) as f64).ln_1p() / (c_max as f64).ln_1p()) as f32
}

/// Homogeneous actions: `min(dq * w, eps)`.
pub fn phi_homogeneous(dq: f32, w: f32, eps: f32) -> f32 {
    (dq * w).min(eps)
}

/// Heterogeneous actions: `dq_feas * w`, without the reliability clip.
pub fn phi_heterogeneous(dq_feas: f32, w: f32) -> f32 {
    dq_feas * w
}

/// `phi * (pred_e - target_e)^2 + (1 - phi) * (pred_a - target_a)^2`.
pub fn blend_targets(phi: f32, target_e: f32, target_a: f32, pred_e: f32, pred_a: f32) -> f32 {
    let e = pred_e - target_e;
    let a = pred_a - target_a;
    phi * e * e + (1.0 - phi) * a * a
}
