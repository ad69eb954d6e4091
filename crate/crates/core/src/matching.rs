//! Pose scoring, argmax prediction and heatmap export.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GridShape, Pose, PoseSet};
use crate::pgm;
use crate::tensor::{cosine_unchecked, GlobalDescriptor};

/// Cosine score of every candidate pose against the ground descriptor.
#[derive(Debug, Clone)]
pub struct ScoreMap<'a> {
    pub poses: &'a PoseSet,
    pub scores: Vec<f32>,
    /// Lowest index attaining the maximum score.
    pub best_index: usize,
}

impl ScoreMap<'_> {
    pub fn best_score(&self) -> f32 {
        self.scores[self.best_index]
    }

    pub fn grid_shape(&self) -> Option<GridShape> {
        self.poses.grid()
    }

    pub fn record(&self) -> PredictionRecord {
        let p = self.poses.poses()[self.best_index];
        PredictionRecord {
            u: p.u,
            v: p.v,
            theta_deg: p.theta_deg,
            score: self.best_score(),
            k: self.best_index,
        }
    }
}

/// `c^k = cos(d_g, d_a^k)` for all `k`, ties broken towards the lowest index.
pub fn score_poses<'a>(
    ground: &GlobalDescriptor,
    descriptors: &[GlobalDescriptor],
    poses: &'a PoseSet,
) -> Result<ScoreMap<'a>> {
    if descriptors.len() != poses.len() {
        return Err(Error::LengthMismatch(descriptors.len(), poses.len()));
    }
    if descriptors.is_empty() {
        return Err(Error::Empty("candidate descriptors"));
    }
    if let Some(d) = descriptors.iter().find(|d| d.len() != ground.len()) {
        return Err(Error::LengthMismatch(d.len(), ground.len()));
    }
    let g = ground.values();
    let scores: Vec<f32> = descriptors
        .par_iter()
        .map(|d| cosine_unchecked(g, d.values()))
        .collect();
    let best_index = argmax_first(&scores);
    Ok(ScoreMap {
        poses,
        scores,
        best_index,
    })
}

fn argmax_first(xs: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// The best-scoring candidate pose.
pub fn predict(score_map: &ScoreMap<'_>) -> Result<Pose> {
    score_map
        .poses
        .get(score_map.best_index)
        .copied()
        .ok_or(Error::Empty("pose set"))
}

/// JSON prediction record, keys in this order: `u, v, theta_deg, score, k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub u: f64,
    pub v: f64,
    pub theta_deg: f64,
    pub score: f32,
    pub k: usize,
}

impl PredictionRecord {
    pub fn pose(&self) -> Result<Pose> {
        Pose::new(self.u, self.v, self.theta_deg)
    }
}

/// Best score over all headings at each grid location; row `iv`, column `iu`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub n_u: usize,
    pub n_v: usize,
    pub values: Vec<f32>,
}

impl Heatmap {
    pub fn max(&self) -> f32 {
        self.values
            .iter()
            .copied()
            .fold(f32::NEG_INFINITY, f32::max)
    }

    /// 8-bit gray levels, `[min, max]` mapped affinely onto `[0, 255]`.
    /// A constant map is all 128.
    pub fn to_gray(&self) -> Vec<u8> {
        let lo = self.values.iter().copied().fold(f32::INFINITY, f32::min);
        let hi = self.max();
        if !(hi > lo) {
            return vec![128; self.values.len()];
        }
        let scale = 255.0 / (hi as f64 - lo as f64);
        self.values
            .iter()
            .map(|&x| ((x as f64 - lo as f64) * scale).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        pgm::encode(self.n_u, self.n_v, &self.to_gray())
    }
}

pub fn location_heatmap(score_map: &ScoreMap<'_>) -> Result<Heatmap> {
    let g = score_map.grid_shape().ok_or(Error::NotGrid)?;
    if g.len() != score_map.scores.len() {
        return Err(Error::NotGrid);
    }
    let values = score_map
        .scores
        .chunks_exact(g.n_theta)
        .map(|s| s.iter().copied().fold(f32::NEG_INFINITY, f32::max))
        .collect();
    Ok(Heatmap {
        n_u: g.n_u,
        n_v: g.n_v,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::generate_pose_grid;
    use crate::tensor::l2_normalize;

    fn desc(v: &[f32]) -> GlobalDescriptor {
        GlobalDescriptor::from_values(1, v.len(), v.to_vec()).unwrap()
    }

    #[test]
    fn self_match_wins() {
        let poses = generate_pose_grid(1, 1, 3, None).unwrap();
        let g = desc(&l2_normalize(&[1.0, 2.0, -1.0]).unwrap());
        let ds = vec![desc(&[1.0, 0.0, 0.0]), g.clone(), desc(&[0.0, 1.0, 0.0])];
        let s = score_poses(&g, &ds, &poses).unwrap();
        assert_eq!(s.best_index, 1);
        assert!((s.best_score() - 1.0).abs() < 1e-6);
        assert_eq!(predict(&s).unwrap(), poses.poses()[1]);
    }

    #[test]
    fn ties_go_to_first() {
        let poses = generate_pose_grid(2, 1, 2, None).unwrap();
        let ds = vec![desc(&[0.5, 0.5]); 4];
        let s = score_poses(&desc(&[1.0, 0.0]), &ds, &poses).unwrap();
        assert_eq!(s.best_index, 0);
    }

    #[test]
    fn componentwise_scores() {
        let poses = generate_pose_grid(3, 1, 1, None).unwrap();
        let g = [0.2f32, -0.4, 0.9, 0.1];
        let cands = [
            [1.0f32, 0.0, 0.0, 0.0],
            [0.2, -0.4, 0.9, 0.1],
            [-0.3, 0.3, 0.3, -0.3],
        ];
        let ds: Vec<_> = cands.iter().map(|c| desc(c)).collect();
        let s = score_poses(&desc(&g), &ds, &poses).unwrap();
        for (k, c) in cands.iter().enumerate() {
            let dot: f64 = g.iter().zip(c).map(|(a, b)| *a as f64 * *b as f64).sum();
            let na: f64 = g.iter().map(|a| (*a as f64).powi(2)).sum::<f64>().sqrt();
            let nb: f64 = c.iter().map(|a| (*a as f64).powi(2)).sum::<f64>().sqrt();
            assert!((s.scores[k] as f64 - dot / (na * nb)).abs() < 1e-6);
        }
        assert_eq!(s.best_index, 1);
        assert!(score_poses(&desc(&[1.0]), &ds, &poses).is_err());
        assert!(score_poses(&desc(&g), &ds[..2], &poses).is_err());
    }

    #[test]
    fn scale_invariant_argmax() {
        let poses = generate_pose_grid(2, 2, 1, None).unwrap();
        let ds: Vec<_> = [[1.0f32, 0.2], [0.3, 0.9], [-1.0, 0.0], [0.7, 0.7]]
            .iter()
            .map(|c| desc(c))
            .collect();
        let g = [0.4f32, 0.5];
        let a = score_poses(&desc(&g), &ds, &poses).unwrap().best_index;
        for lambda in [1e-3f32, 0.5, 7.0, 1e3] {
            let scaled: Vec<f32> = g.iter().map(|x| x * lambda).collect();
            assert_eq!(
                score_poses(&desc(&scaled), &ds, &poses).unwrap().best_index,
                a
            );
        }
    }

    #[test]
    fn permuted_candidates_same_pose() {
        let grid = generate_pose_grid(2, 2, 2, None).unwrap();
        let ds: Vec<_> = (0..8).map(|k| desc(&[k as f32, 1.0])).collect();
        let g = desc(&[5.0, 1.0]);
        let a = predict(&score_poses(&g, &ds, &grid).unwrap()).unwrap();
        let order = [3usize, 7, 0, 5, 1, 6, 2, 4];
        let poses = PoseSet::from_poses(order.iter().map(|&i| grid.poses()[i]).collect());
        let ds2: Vec<_> = order.iter().map(|&i| ds[i].clone()).collect();
        let b = predict(&score_poses(&g, &ds2, &poses).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn heatmap_examples() {
        let poses = generate_pose_grid(3, 2, 1, None).unwrap();
        let ds: Vec<_> = (0..6).map(|k| desc(&[1.0, k as f32])).collect();
        let s = score_poses(&desc(&[0.0, 1.0]), &ds, &poses).unwrap();
        let h = location_heatmap(&s).unwrap();
        assert_eq!(h.values, s.scores);
        assert_eq!((h.n_u, h.n_v), (3, 2));

        let poses = generate_pose_grid(2, 2, 3, None).unwrap();
        let ds: Vec<_> = (0..12).map(|k| desc(&[1.0, (k % 5) as f32])).collect();
        let s = score_poses(&desc(&[0.0, 1.0]), &ds, &poses).unwrap();
        let h = location_heatmap(&s).unwrap();
        assert!((h.max() - s.best_score()).abs() < 1e-6);
        let gray = h.to_gray();
        assert_eq!(gray.iter().copied().max(), Some(255));
        assert_eq!(gray.iter().copied().min(), Some(0));

        let flat = Heatmap {
            n_u: 2,
            n_v: 2,
            values: vec![0.3; 4],
        };
        let pgm = flat.to_pgm();
        assert!(pgm.starts_with(b"P5\n2 2\n255\n"));
        assert_eq!(&pgm[pgm.len() - 4..], &[128; 4]);

        let loose = PoseSet::from_poses(poses.poses().to_vec());
        let s = score_poses(&desc(&[0.0, 1.0]), &ds, &loose).unwrap();
        assert!(matches!(location_heatmap(&s), Err(Error::NotGrid)));
    }

    #[test]
    fn record_key_order() {
        let poses = generate_pose_grid(1, 1, 1, None).unwrap();
        let s = score_poses(&desc(&[1.0]), &[desc(&[1.0])], &poses).unwrap();
        let json = serde_json::to_string(&s.record()).unwrap();
        assert_eq!(
            json,
            r#"{"u":0.5,"v":0.5,"theta_deg":0.0,"score":1.0,"k":0}"#
        );
    }
}
