//! Pose error metrics and their summary statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;

/// Metric error of a predicted pose relative to the ground truth.
///
/// `longitudinal_m` is measured along the ground truth heading
/// `(sin theta, -cos theta)` and `lateral_m` along its right-hand normal
/// `(cos theta, sin theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    pub location_m: f64,
    pub orientation_deg: f64,
    pub lateral_m: f64,
    pub longitudinal_m: f64,
}

pub fn pose_error(pred: &Pose, gt: &Pose, aerial_extent_m: f64) -> Result<PoseError> {
    if !(aerial_extent_m > 0.0) || !aerial_extent_m.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "aerial extent must be positive, got {aerial_extent_m}"
        )));
    }
    let du = (pred.u - gt.u) * aerial_extent_m;
    let dv = (pred.v - gt.v) * aerial_extent_m;
    let d = (pred.theta_deg - gt.theta_deg).abs().rem_euclid(360.0);
    let (s, c) = gt.theta_deg.to_radians().sin_cos();
    Ok(PoseError {
        location_m: du.hypot(dv),
        orientation_deg: d.min(360.0 - d),
        lateral_m: du * c + dv * s,
        longitudinal_m: du * s - dv * c,
    })
}

/// Fraction of errors at or below `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recall {
    pub threshold: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub count: usize,
    pub mean_location_m: f64,
    pub median_location_m: f64,
    pub mean_orientation_deg: f64,
    pub median_orientation_deg: f64,
    pub lateral_recall: Vec<Recall>,
    pub longitudinal_recall: Vec<Recall>,
    pub orientation_recall: Vec<Recall>,
}

/// Means, lower medians and recalls at the given thresholds.
pub fn summarize(
    errors: &[PoseError],
    thresholds_m: &[f64],
    thresholds_deg: &[f64],
) -> Result<Report> {
    if errors.is_empty() {
        return Err(Error::Empty("pose errors"));
    }
    let loc: Vec<f64> = errors.iter().map(|e| e.location_m).collect();
    let ori: Vec<f64> = errors.iter().map(|e| e.orientation_deg).collect();
    let recall = |ts: &[f64], f: &dyn Fn(&PoseError) -> f64| -> Vec<Recall> {
        ts.iter()
            .map(|&t| Recall {
                threshold: t,
                recall: errors.iter().filter(|e| f(e) <= t).count() as f64 / errors.len() as f64,
            })
            .collect()
    };
    Ok(Report {
        count: errors.len(),
        mean_location_m: mean(&loc),
        median_location_m: lower_median(&loc),
        mean_orientation_deg: mean(&ori),
        median_orientation_deg: lower_median(&ori),
        lateral_recall: recall(thresholds_m, &|e| e.lateral_m.abs()),
        longitudinal_recall: recall(thresholds_m, &|e| e.longitudinal_m.abs()),
        orientation_recall: recall(thresholds_deg, &|e| e.orientation_deg),
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Element at index `(n - 1) / 2` of the sorted values.
pub fn lower_median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v[(v.len() - 1) / 2]
}
