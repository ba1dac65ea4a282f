//! The output head shared by the feature networks: Euclidean normalization
//! with an epsilon floor, a pre-tanh scale, tanh, and a post-tanh scale that
//! maps every component into (-pi/4, pi/4).

#[derive(Debug, Clone)]
pub(crate) struct HeadCache {
    /// Pre-normalization vector.
    pub u: Vec<f64>,
    /// Its Euclidean norm (before the epsilon floor).
    pub norm: f64,
    /// tanh outputs, saved for the derivative.
    pub tanh_out: Vec<f64>,
}

pub(crate) fn head_forward(
    u: Vec<f64>,
    eps: f64,
    pre_scale: f64,
    post_scale: f64,
) -> (Vec<f64>, HeadCache) {
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    let denom = norm.max(eps);
    let tanh_out: Vec<f64> = u.iter().map(|v| (pre_scale * v / denom).tanh()).collect();
    let out = tanh_out.iter().map(|t| post_scale * t).collect();
    (
        out,
        HeadCache {
            u,
            norm,
            tanh_out,
        },
    )
}

/// Gradient with respect to the pre-normalization vector `u`.
pub(crate) fn head_backward(
    cache: &HeadCache,
    upstream: &[f64],
    eps: f64,
    pre_scale: f64,
    post_scale: f64,
) -> Vec<f64> {
    let n = cache.u.len();
    // Through the scales and tanh.
    let d_w: Vec<f64> = (0..n)
        .map(|i| {
            let t = cache.tanh_out[i];
            upstream[i] * post_scale * (1.0 - t * t) * pre_scale
        })
        .collect();
    // Through v -> v / max(||v||, eps).
    if cache.norm > eps {
        let norm = cache.norm;
        let u_dot: f64 = cache.u.iter().zip(&d_w).map(|(u, g)| u * g).sum();
        (0..n)
            .map(|i| d_w[i] / norm - cache.u[i] * u_dot / (norm * norm * norm))
            .collect()
    } else {
        d_w.iter().map(|g| g / eps).collect()
    }
}
