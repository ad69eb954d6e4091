//! End-to-end forward pass: encoders, attention and pose descriptors.

use serde::{Deserialize, Serialize};

use crate::aggregation::{
    aggregate_from_maps, cross_view_attention, cross_view_similarity, ground_self_attention,
    slice_ground, Aggregation, AttentionMlp, CrossViewMaps, GroundSliceSet,
};
use crate::error::{Error, Result};
use crate::geometry::{CameraModel, MaskSet, PoseSet};
use crate::learning::ToyEncoder;
use crate::matching::{score_poses, ScoreMap};
use crate::tensor::{FeatureMap, GlobalDescriptor};

/// Encoder and attention sizes of a [`SliceMatchModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub c_raw: usize,
    pub c: usize,
    pub hidden: usize,
}

impl ModelDims {
    /// Length of the flat parameter vector.
    pub fn n_params(&self) -> usize {
        2 * (self.c_raw * self.c + self.c)
            + AttentionMlp::param_count(self.c, self.hidden)
            + AttentionMlp::param_count(self.c + 1, self.hidden)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceMatchModel {
    pub camera: CameraModel,
    pub ground_encoder: ToyEncoder,
    pub aerial_encoder: ToyEncoder,
    pub ground_attention: AttentionMlp,
    pub aerial_attention: AttentionMlp,
}

/// Ground descriptor plus the aerial descriptors of every candidate.
#[derive(Debug, Clone)]
pub struct Forward {
    pub ground: GlobalDescriptor,
    pub aggregation: Aggregation,
}

impl SliceMatchModel {
    pub fn new(
        camera: CameraModel,
        ground_encoder: ToyEncoder,
        aerial_encoder: ToyEncoder,
        ground_attention: AttentionMlp,
        aerial_attention: AttentionMlp,
    ) -> Result<Self> {
        camera.validate()?;
        let c = ground_encoder.c_out();
        if aerial_encoder.c_out() != c
            || ground_attention.c_in() != c
            || aerial_attention.c_in() != c + 1
        {
            return Err(Error::Dimension(format!(
                "inconsistent model: encoders output {} / {}, attention inputs {} / {}",
                c,
                aerial_encoder.c_out(),
                ground_attention.c_in(),
                aerial_attention.c_in()
            )));
        }
        Ok(Self {
            camera,
            ground_encoder,
            aerial_encoder,
            ground_attention,
            aerial_attention,
        })
    }

    /// Identity encoders and all-zero attention MLPs (constant 0.5 attention).
    pub fn geometric(camera: CameraModel, c: usize, hidden: usize) -> Result<Self> {
        Self::new(
            camera,
            ToyEncoder::identity(c),
            ToyEncoder::identity(c),
            AttentionMlp::zeros(c, hidden),
            AttentionMlp::zeros(c + 1, hidden),
        )
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            c_raw: self.ground_encoder.c_in(),
            c: self.ground_encoder.c_out(),
            hidden: self.ground_attention.hidden(),
        }
    }

    /// Flat parameters: ground encoder, aerial encoder, ground MLP, aerial MLP.
    pub fn to_params(&self) -> Vec<f32> {
        [
            self.ground_encoder.to_params(),
            self.aerial_encoder.to_params(),
            self.ground_attention.to_params(),
            self.aerial_attention.to_params(),
        ]
        .concat()
    }

    pub fn from_params(camera: CameraModel, dims: ModelDims, params: &[f32]) -> Result<Self> {
        if params.len() != dims.n_params() {
            return Err(Error::LengthMismatch(params.len(), dims.n_params()));
        }
        let enc = dims.c_raw * dims.c + dims.c;
        let gm = AttentionMlp::param_count(dims.c, dims.hidden);
        let (ge, rest) = params.split_at(enc);
        let (ae, rest) = rest.split_at(enc);
        let (gp, ap) = rest.split_at(gm);
        Self::new(
            camera,
            ToyEncoder::from_params(dims.c_raw, dims.c, ge)?,
            ToyEncoder::from_params(dims.c_raw, dims.c, ae)?,
            AttentionMlp::from_params(dims.c, dims.hidden, gp)?,
            AttentionMlp::from_params(dims.c + 1, dims.hidden, ap)?,
        )
    }

    /// Ground slice descriptors from a raw ground map.
    pub fn ground_slices(&self, ground_raw: &FeatureMap) -> Result<GroundSliceSet> {
        let z_g = self.ground_encoder.apply(ground_raw)?;
        let (_, z_g) = ground_self_attention(&z_g, &self.ground_attention)?;
        slice_ground(&z_g, self.camera.n_slices)
    }

    pub fn cross_view_maps(
        &self,
        slices: &GroundSliceSet,
        aerial_raw: &FeatureMap,
    ) -> Result<CrossViewMaps> {
        let z_a = self.aerial_encoder.apply(aerial_raw)?;
        cross_view_attention(
            &z_a,
            cross_view_similarity(slices, &z_a)?,
            &self.aerial_attention,
        )
    }

    /// Descriptors for every pose in `masks`.
    pub fn forward(
        &self,
        ground_raw: &FeatureMap,
        aerial_raw: &FeatureMap,
        masks: &MaskSet,
    ) -> Result<Forward> {
        if masks.camera() != &self.camera {
            return Err(Error::InvalidArgument(
                "mask set was built for a different camera".into(),
            ));
        }
        let slices = self.ground_slices(ground_raw)?;
        let cvm = self.cross_view_maps(&slices, aerial_raw)?;
        Ok(Forward {
            ground: slices.to_global()?,
            aggregation: aggregate_from_maps(&cvm, masks)?,
        })
    }

    /// Forward pass followed by cosine scoring against `poses`.
    pub fn score<'a>(
        &self,
        ground_raw: &FeatureMap,
        aerial_raw: &FeatureMap,
        poses: &'a PoseSet,
        masks: &MaskSet,
    ) -> Result<(ScoreMap<'a>, Forward)> {
        if poses.poses() != masks.poses() {
            return Err(Error::InvalidArgument(
                "mask set was precomputed for a different pose set".into(),
            ));
        }
        let fwd = self.forward(ground_raw, aerial_raw, masks)?;
        let sm = score_poses(&fwd.ground, &fwd.aggregation.descriptors, poses)?;
        Ok((sm, fwd))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::generate_pose_grid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> SliceMatchModel {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        SliceMatchModel::new(
            CameraModel::panoramic(4).unwrap(),
            ToyEncoder::random(5, 4, &mut rng),
            ToyEncoder::random(5, 4, &mut rng),
            AttentionMlp::random(4, 3, 0.5, &mut rng),
            AttentionMlp::random(5, 3, 0.5, &mut rng),
        )
        .unwrap()
    }

    #[test]
    fn params_roundtrip() {
        let m = model();
        let p = m.to_params();
        assert_eq!(p.len(), m.dims().n_params());
        assert_eq!(
            SliceMatchModel::from_params(m.camera, m.dims(), &p).unwrap(),
            m
        );
        assert!(SliceMatchModel::from_params(m.camera, m.dims(), &p[1..]).is_err());
    }

    #[test]
    fn forward_shapes() {
        let m = model();
        let poses = generate_pose_grid(2, 2, 4, None).unwrap();
        let masks = MaskSet::precompute(m.camera, &poses, 6, 2).unwrap();
        let g = FeatureMap::from_fn(2, 8, 5, |i, j, o| {
            o.iter_mut()
                .enumerate()
                .for_each(|(c, x)| *x = ((i + 2 * j + c) as f32).sin())
        })
        .unwrap();
        let a = FeatureMap::from_fn(6, 6, 5, |i, j, o| {
            o.iter_mut()
                .enumerate()
                .for_each(|(c, x)| *x = ((3 * i + j * c) as f32).cos())
        })
        .unwrap();
        let (sm, fwd) = m.score(&g, &a, &poses, &masks).unwrap();
        assert_eq!(sm.scores.len(), 16);
        assert_eq!(fwd.ground.len(), 16);
        assert_eq!(fwd.aggregation.attention_evals, 4 * 36);
        assert!(sm.scores.iter().all(|s| (-1.0..=1.0).contains(s)));
    }

    #[test]
    fn rejects_mismatched_parts() {
        let cam = CameraModel::panoramic(4).unwrap();
        assert!(SliceMatchModel::new(
            cam,
            ToyEncoder::identity(4),
            ToyEncoder::identity(3),
            AttentionMlp::zeros(4, 2),
            AttentionMlp::zeros(5, 2),
        )
        .is_err());
    }
}
