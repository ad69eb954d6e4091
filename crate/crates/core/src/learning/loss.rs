//! Alpha-weighted infoNCE loss over pose scores and its gradients.
//!
//! ```text
//! L = -log( exp(c_gt / tau) / ( (alpha / K) * sum_k exp(c_k / tau) + exp(c_gt / tau) ) )
//! ```
//!
//! Setting `alpha = K` recovers the unweighted infoNCE loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::NORM_EPS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub alpha: f64,
    /// Temperature.
    pub tau: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 4.0,
            tau: 0.1,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !(self.tau > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha and tau must be positive, got alpha={} tau={}",
                self.alpha, self.tau
            )));
        }
        Ok(())
    }
}

/// Loss value plus `dL/dc_gt` and `dL/dc_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreLoss {
    pub loss: f64,
    pub d_gt: f64,
    pub d_candidates: Vec<f64>,
}

/// Loss for one ground truth score against `K = c.len()` contrast scores.
pub fn info_nce_alpha(c_gt: f64, c: &[f64], cfg: &LossConfig) -> Result<f64> {
    info_nce_alpha_grad(c_gt, c, cfg).map(|r| r.loss)
}

/// Loss and its derivatives with respect to every score.
///
/// With `t_k = ln(alpha/K) + (c_k - c_gt)/tau` the loss is
/// `softplus(logsumexp(t))`, evaluated without overflow or cancellation.
pub fn info_nce_alpha_grad(c_gt: f64, c: &[f64], cfg: &LossConfig) -> Result<ScoreLoss> {
    cfg.validate()?;
    if c.is_empty() {
        return Err(Error::Empty("contrast scores"));
    }
    if !c_gt.is_finite() || c.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let log_w = (cfg.alpha / c.len() as f64).ln();
    let t: Vec<f64> = c.iter().map(|&ck| log_w + (ck - c_gt) / cfg.tau).collect();
    let m = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + t.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
    let loss = softplus(lse);
    // sigma = S / (1 + S), p_k = exp(t_k) / (1 + S)
    let sigma = 1.0 / (1.0 + (-lse).exp());
    let d_candidates = t
        .iter()
        .map(|&tk| (tk - lse).exp() * sigma / cfg.tau)
        .collect();
    Ok(ScoreLoss {
        loss,
        d_gt: -sigma / cfg.tau,
        d_candidates,
    })
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Cosine similarity and its gradients with respect to both arguments.
/// Degenerate (near-zero) vectors give zero similarity and zero gradients.
pub fn cosine_with_grad(a: &[f64], b: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na < NORM_EPS || nb < NORM_EPS {
        return (0.0, vec![0.0; a.len()], vec![0.0; b.len()]);
    }
    let c = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb);
    let da = a
        .iter()
        .zip(b)
        .map(|(x, y)| y / (na * nb) - c * x / (na * na))
        .collect();
    let db = a
        .iter()
        .zip(b)
        .map(|(x, y)| x / (na * nb) - c * y / (nb * nb))
        .collect();
    (c, da, db)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorGrad {
    pub loss: f64,
    pub ground: Vec<f64>,
    pub ground_truth: Vec<f64>,
    pub candidates: Vec<Vec<f64>>,
}

/// Loss over global descriptors with analytic gradients.
pub fn loss_grad_descriptors(
    ground: &[f64],
    ground_truth: &[f64],
    candidates: &[Vec<f64>],
    cfg: &LossConfig,
) -> Result<DescriptorGrad> {
    let d = ground.len();
    if ground_truth.len() != d {
        return Err(Error::LengthMismatch(ground_truth.len(), d));
    }
    if let Some(c) = candidates.iter().find(|c| c.len() != d) {
        return Err(Error::LengthMismatch(c.len(), d));
    }
    let (c_gt, dg_gt, dgt) = cosine_with_grad(ground, ground_truth);
    let per: Vec<_> = candidates
        .iter()
        .map(|c| cosine_with_grad(ground, c))
        .collect();
    let scores: Vec<f64> = per.iter().map(|p| p.0).collect();
    let sl = info_nce_alpha_grad(c_gt, &scores, cfg)?;

    let mut g_ground: Vec<f64> = dg_gt.iter().map(|x| sl.d_gt * x).collect();
    let mut g_cands = Vec::with_capacity(candidates.len());
    for ((_, dg, dc), &w) in per.into_iter().zip(&sl.d_candidates) {
        for (acc, x) in g_ground.iter_mut().zip(&dg) {
            *acc += w * x;
        }
        g_cands.push(dc.into_iter().map(|x| w * x).collect());
    }
    Ok(DescriptorGrad {
        loss: sl.loss,
        ground: g_ground,
        ground_truth: dgt.into_iter().map(|x| sl.d_gt * x).collect(),
        candidates: g_cands,
    })
}
