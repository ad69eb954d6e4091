//! Shared fixtures for the criterion benchmarks.

use slicematch::bench::{bench_inputs, candidate_poses, BenchDims, BenchInputs};
use slicematch::{CameraModel, GlobalDescriptor, MaskSet, PoseSet, Result};

/// Inputs, candidate poses and precomputed masks for `k` candidates.
pub struct Scene {
    pub camera: CameraModel,
    pub inputs: BenchInputs,
    pub ground: GlobalDescriptor,
    pub poses: PoseSet,
    pub masks: MaskSet,
}

impl Scene {
    pub fn new(dims: &BenchDims, k: usize) -> Result<Self> {
        let camera = CameraModel::panoramic(dims.n_slices)?;
        let inputs = bench_inputs(dims, &camera)?;
        let ground = inputs.slices.to_global()?;
        let poses = candidate_poses(k, dims.n_theta)?;
        let masks = MaskSet::precompute(camera, &poses, dims.l, dims.supersample)?;
        Ok(Self {
            camera,
            inputs,
            ground,
            poses,
            masks,
        })
    }
}
