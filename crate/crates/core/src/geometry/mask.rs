//! Frustum slice masks with fractional cell coverage.
//!
//! A slice mask covers the circular sector with apex at the pose location,
//! the slice's absolute azimuth interval and radius `max_range`, clipped to
//! the unit square. Cell `(i, j)` spans `[j/L, (j+1)/L] x [i/L, (i+1)/L]`
//! and its weight is the fraction of an `s x s` stratified grid of sample
//! centers that falls inside the sector.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use super::{slice_azimuth_interval, AzimuthInterval, CameraModel, Pose, PoseSet, FULL_TURN_UDEG};
use crate::error::{Error, Result};

/// One precomputed `L x L` coverage mask.
#[derive(Debug, Clone)]
pub struct SliceMask {
    pub size: usize,
    pub weights: Arc<[f32]>,
    pub pose_index: usize,
    pub slice_index: usize,
    pub azimuth_interval: AzimuthInterval,
}

impl SliceMask {
    pub fn weight(&self, i: usize, j: usize) -> f32 {
        self.weights[i * self.size + j]
    }

    /// Whether two masks share the same storage.
    pub fn shares_storage(&self, other: &SliceMask) -> bool {
        Arc::ptr_eq(&self.weights, &other.weights)
    }
}

/// Quantized azimuth of every subsample around one apex, grouped by cell.
/// Samples beyond `max_range` are stored as `-1`.
struct SampleAngles {
    size: usize,
    per_cell: usize,
    angles: Vec<i32>,
}

impl SampleAngles {
    fn new(u: f64, v: f64, size: usize, s: usize, max_range: Option<f64>) -> Self {
        let per_cell = s * s;
        let mut angles = Vec::with_capacity(size * size * per_cell);
        let l = size as f64;
        let r2max = max_range.map(|r| r * r);
        for i in 0..size {
            for j in 0..size {
                for a in 0..s {
                    let pv = (i as f64 + (a as f64 + 0.5) / s as f64) / l;
                    let dv = pv - v;
                    for b in 0..s {
                        let pu = (j as f64 + (b as f64 + 0.5) / s as f64) / l;
                        let du = pu - u;
                        if r2max.is_some_and(|r2| du * du + dv * dv > r2) {
                            angles.push(-1);
                            continue;
                        }
                        // direction (sin phi, -cos phi) => phi = atan2(du, -dv)
                        let phi = du.atan2(-dv).to_degrees().rem_euclid(360.0);
                        let q = ((phi * 1e6).floor() as i64).clamp(0, FULL_TURN_UDEG - 1);
                        angles.push(q as i32);
                    }
                }
            }
        }
        Self {
            size,
            per_cell,
            angles,
        }
    }

    fn coverage(&self, interval: &AzimuthInterval) -> Vec<f32> {
        let denom = self.per_cell as f32;
        self.angles
            .chunks_exact(self.per_cell)
            .map(|cell| {
                let hits = cell
                    .iter()
                    .filter(|&&q| q >= 0 && interval.contains_udeg(q as i64))
                    .count();
                hits as f32 / denom
            })
            .collect()
    }
}

/// Rasterizes the mask of slice `n` (0-based) for `pose` on an `L x L` grid
/// with `s x s` subsamples per cell.
pub fn rasterize_slice_mask(
    camera: &CameraModel,
    pose: &Pose,
    n: usize,
    size: usize,
    supersample: usize,
) -> Result<SliceMask> {
    check_grid(size, supersample)?;
    let interval = slice_azimuth_interval(camera, pose, n)?;
    let angles = SampleAngles::new(pose.u, pose.v, size, supersample, camera.max_range);
    debug_assert_eq!(angles.size, size);
    Ok(SliceMask {
        size,
        weights: angles.coverage(&interval).into(),
        pose_index: 0,
        slice_index: n,
        azimuth_interval: interval,
    })
}

fn check_grid(size: usize, supersample: usize) -> Result<()> {
    if size == 0 || supersample == 0 {
        return Err(Error::InvalidArgument(format!(
            "mask size and supersample must be >= 1, got L={size}, s={supersample}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct LocationKey {
    u_bits: u64,
    v_bits: u64,
}

impl LocationKey {
    fn of(p: &Pose) -> Self {
        // +0.0 so that -0.0 and 0.0 share a key
        Self {
            u_bits: (p.u + 0.0).to_bits(),
            v_bits: (p.v + 0.0).to_bits(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct MaskKey {
    location: LocationKey,
    interval: AzimuthInterval,
}

/// All slice masks for a pose set, indexed by `(pose_index, slice_index)`.
///
/// With deduplication on (the default), rasterization is keyed on the pose
/// location and the absolute azimuth interval: entries with equal keys point
/// at the same storage. For panoramic cameras this means that a location
/// with `M * N` evenly spaced headings only rasterizes `M * N` distinct
/// masks instead of `M * N^2`.
#[derive(Debug, Clone)]
pub struct MaskSet {
    camera: CameraModel,
    size: usize,
    supersample: usize,
    dedup: bool,
    storage: Vec<Arc<[f32]>>,
    storage_keys: Vec<MaskKey>,
    index: Vec<usize>,
    intervals: Vec<AzimuthInterval>,
    poses: Vec<Pose>,
    lookup: HashMap<MaskKey, usize>,
}

impl MaskSet {
    pub fn new(camera: CameraModel, size: usize, supersample: usize, dedup: bool) -> Result<Self> {
        camera.validate()?;
        check_grid(size, supersample)?;
        Ok(Self {
            camera,
            size,
            supersample,
            dedup,
            storage: Vec::new(),
            storage_keys: Vec::new(),
            index: Vec::new(),
            intervals: Vec::new(),
            poses: Vec::new(),
            lookup: HashMap::new(),
        })
    }

    /// Precomputes one mask per `(pose, slice)`, sharing storage between
    /// identical `(location, interval)` keys. Rasterization runs in parallel
    /// over locations.
    pub fn precompute(
        camera: CameraModel,
        poses: &PoseSet,
        size: usize,
        supersample: usize,
    ) -> Result<Self> {
        let mut set = Self::new(camera, size, supersample, true)?;
        set.extend(poses.poses())?;
        Ok(set)
    }

    /// Same as [`MaskSet::precompute`] but every `(pose, slice)` entry gets
    /// its own rasterization and storage.
    pub fn precompute_direct(
        camera: CameraModel,
        poses: &PoseSet,
        size: usize,
        supersample: usize,
    ) -> Result<Self> {
        let mut set = Self::new(camera, size, supersample, false)?;
        set.extend(poses.poses())?;
        Ok(set)
    }

    /// Appends poses, rasterizing only keys not seen before.
    pub fn extend(&mut self, poses: &[Pose]) -> Result<()> {
        let n_slices = self.camera.n_slices;
        let mut pending: Vec<usize> = Vec::new();
        for pose in poses {
            self.poses.push(*pose);
            let location = LocationKey::of(pose);
            for n in 0..n_slices {
                let interval = slice_azimuth_interval(&self.camera, pose, n)?;
                let key = MaskKey { location, interval };
                let id = match self.dedup.then(|| self.lookup.get(&key)).flatten() {
                    Some(&id) => id,
                    None => {
                        let id = self.storage_keys.len();
                        self.storage_keys.push(key);
                        if self.dedup {
                            self.lookup.insert(key, id);
                        }
                        pending.push(id);
                        id
                    }
                };
                self.index.push(id);
                self.intervals.push(interval);
            }
        }
        if pending.is_empty() {
            return Ok(());
        }

        // Group new keys by location so each apex computes its sample angles once.
        let mut groups: Vec<(LocationKey, Vec<usize>)> = Vec::new();
        let mut group_of: HashMap<LocationKey, usize> = HashMap::new();
        for &id in &pending {
            let loc = self.storage_keys[id].location;
            let g = *group_of.entry(loc).or_insert_with(|| {
                groups.push((loc, Vec::new()));
                groups.len() - 1
            });
            groups[g].1.push(id);
        }

        let (size, s, max_range) = (self.size, self.supersample, self.camera.max_range);
        let keys = &self.storage_keys;
        let rendered: Vec<Vec<(usize, Arc<[f32]>)>> = groups
            .par_iter()
            .map(|(loc, ids)| {
                let angles = SampleAngles::new(
                    f64::from_bits(loc.u_bits),
                    f64::from_bits(loc.v_bits),
                    size,
                    s,
                    max_range,
                );
                ids.iter()
                    .map(|&id| (id, angles.coverage(&keys[id].interval).into()))
                    .collect()
            })
            .collect();

        let first_new = self.storage.len();
        let mut slots: Vec<Option<Arc<[f32]>>> = vec![None; self.storage_keys.len() - first_new];
        for (id, w) in rendered.into_iter().flatten() {
            slots[id - first_new] = Some(w);
        }
        self.storage.extend(
            slots
                .into_iter()
                .map(|w| w.expect("every pending key rendered")),
        );
        Ok(())
    }

    /// Appends one pose and returns its pose index.
    pub fn insert_pose(&mut self, pose: &Pose) -> Result<usize> {
        let k = self.n_poses();
        self.extend(std::slice::from_ref(pose))?;
        Ok(k)
    }

    pub fn camera(&self) -> &CameraModel {
        &self.camera
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn supersample(&self) -> usize {
        self.supersample
    }

    pub fn is_dedup(&self) -> bool {
        self.dedup
    }

    pub fn n_poses(&self) -> usize {
        self.poses.len()
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    /// Number of distinct rasterized masks.
    pub fn n_distinct(&self) -> usize {
        self.storage.len()
    }

    pub fn storage_id(&self, pose_index: usize, slice_index: usize) -> Result<usize> {
        self.entry(pose_index, slice_index).map(|e| self.index[e])
    }

    pub fn weights(&self, pose_index: usize, slice_index: usize) -> Result<&[f32]> {
        let id = self.storage_id(pose_index, slice_index)?;
        Ok(&self.storage[id])
    }

    pub fn interval(&self, pose_index: usize, slice_index: usize) -> Result<AzimuthInterval> {
        self.entry(pose_index, slice_index)
            .map(|e| self.intervals[e])
    }

    pub fn mask(&self, pose_index: usize, slice_index: usize) -> Result<SliceMask> {
        let e = self.entry(pose_index, slice_index)?;
        Ok(SliceMask {
            size: self.size,
            weights: Arc::clone(&self.storage[self.index[e]]),
            pose_index,
            slice_index,
            azimuth_interval: self.intervals[e],
        })
    }

    /// Distinct mask storage in storage-id order.
    pub fn distinct_masks(&self) -> impl Iterator<Item = &[f32]> {
        self.storage.iter().map(|w| &w[..])
    }

    /// Bytes held by mask storage and the `(pose, slice)` index.
    pub fn bytes(&self) -> u64 {
        let cells = (self.size * self.size) as u64;
        self.storage.len() as u64 * cells * std::mem::size_of::<f32>() as u64
            + self.index.len() as u64
                * (std::mem::size_of::<usize>() + std::mem::size_of::<AzimuthInterval>()) as u64
    }

    fn entry(&self, pose_index: usize, slice_index: usize) -> Result<usize> {
        let n_slices = self.camera.n_slices;
        if slice_index >= n_slices || pose_index >= self.n_poses() {
            return Err(Error::MissingMask {
                pose: pose_index,
                slice: slice_index,
            });
        }
        Ok(pose_index * n_slices + slice_index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::generate_pose_grid;

    /// Independent containment test using float angles, no quantization.
    fn sample_inside(camera: &CameraModel, pose: &Pose, n: usize, x: f64, y: f64) -> bool {
        let (du, dv) = (x - pose.u, y - pose.v);
        if let Some(r) = camera.max_range {
            if du * du + dv * dv > r * r {
                return false;
            }
        }
        let phi = du.atan2(-dv).to_degrees();
        let w = camera.fov_deg / camera.n_slices as f64;
        let a0 = pose.theta_deg - camera.fov_deg / 2.0 + n as f64 * w;
        (phi - a0).rem_euclid(360.0) < w
    }

    fn oracle(camera: &CameraModel, pose: &Pose, n: usize, l: usize, s: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(l * l);
        for i in 0..l {
            for j in 0..l {
                let mut hits = 0usize;
                for a in 0..s {
                    for b in 0..s {
                        let x = (j as f64 + (b as f64 + 0.5) / s as f64) / l as f64;
                        let y = (i as f64 + (a as f64 + 0.5) / s as f64) / l as f64;
                        hits += sample_inside(camera, pose, n, x, y) as usize;
                    }
                }
                out.push(hits as f64 / (s * s) as f64);
            }
        }
        out
    }

    #[test]
    fn full_disk_is_all_ones() {
        let cam = CameraModel::panoramic(1).unwrap();
        for (u, v, t) in [(0.5, 0.5, 0.0), (0.0, 1.0, 77.0), (0.13, 0.71, 300.0)] {
            let pose = Pose::new(u, v, t).unwrap();
            let m = rasterize_slice_mask(&cam, &pose, 0, 6, 4).unwrap();
            assert!(m.weights.iter().all(|&w| w == 1.0));
        }
    }

    #[test]
    fn quadrant_containment() {
        // slice 2 (0-based) of a 4-slice panorama heading North covers [0, 90): the NE quadrant
        let cam = CameraModel::panoramic(4).unwrap();
        let pose = Pose::new(0.5, 0.5, 0.0).unwrap();
        let m = rasterize_slice_mask(&cam, &pose, 2, 2, 64).unwrap();
        assert_eq!(m.weight(0, 1), 1.0);
        assert_eq!(m.weight(1, 0), 0.0);
        assert_eq!(m.weight(0, 0), 0.0);
        assert_eq!(m.weight(1, 1), 0.0);
        let o = oracle(&cam, &pose, 2, 2, 64);
        assert_eq!(o, vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn matches_float_oracle_away_from_boundaries() {
        let cam = CameraModel::new(100.0, 5, Some(0.6)).unwrap();
        let pose = Pose::new(0.31, 0.64, 211.3).unwrap();
        for n in 0..5 {
            let m = rasterize_slice_mask(&cam, &pose, n, 7, 16).unwrap();
            let o = oracle(&cam, &pose, n, 7, 16);
            for (w, e) in m.weights.iter().zip(&o) {
                assert!((*w as f64 - e).abs() <= 1.0 / 256.0 + 1e-12);
            }
        }
    }

    #[test]
    fn bounded_range_clips() {
        let cam = CameraModel::new(360.0, 1, Some(0.1)).unwrap();
        let pose = Pose::new(0.5, 0.5, 0.0).unwrap();
        let m = rasterize_slice_mask(&cam, &pose, 0, 10, 8).unwrap();
        assert_eq!(m.weight(0, 0), 0.0);
        // quarter disk of radius 0.1 inside a 0.1 x 0.1 cell
        assert!((m.weight(4, 4) - std::f32::consts::FRAC_PI_4).abs() < 0.03);
        assert!(m.weights.iter().all(|w| (0.0..=1.0).contains(w)));
    }

    #[test]
    fn counts_and_dedup() {
        let cam = CameraModel::panoramic(16).unwrap();
        let one = generate_pose_grid(1, 1, 1, None).unwrap();
        let set = MaskSet::precompute(cam, &one, 4, 2).unwrap();
        assert_eq!(set.n_poses(), 1);
        assert_eq!(set.n_distinct(), 16);

        // 1 location x N*M headings: M*N rasterizations, not M*N^2
        for (n, m) in [(4usize, 1usize), (4, 3), (8, 2)] {
            let cam = CameraModel::panoramic(n).unwrap();
            let g = generate_pose_grid(1, 1, n * m, None).unwrap();
            let set = MaskSet::precompute(cam, &g, 4, 2).unwrap();
            assert_eq!(set.n_distinct(), n * m);
            let direct = MaskSet::precompute_direct(cam, &g, 4, 2).unwrap();
            assert_eq!(direct.n_distinct(), n * n * m);
        }
    }

    #[test]
    fn repeated_pose_reuses_storage() {
        let cam = CameraModel::panoramic(4).unwrap();
        let mut set = MaskSet::new(cam, 5, 4, true).unwrap();
        let pose = Pose::new(0.3, 0.4, 12.0).unwrap();
        let a = set.insert_pose(&pose).unwrap();
        let before = set.n_distinct();
        let b = set.insert_pose(&pose).unwrap();
        assert_ne!(a, b);
        assert_eq!(set.n_distinct(), before);
        for n in 0..4 {
            assert!(set
                .mask(a, n)
                .unwrap()
                .shares_storage(&set.mask(b, n).unwrap()));
        }
    }

    #[test]
    fn rotated_pose_shares_masks() {
        let cam = CameraModel::panoramic(8).unwrap();
        let set =
            MaskSet::precompute(cam, &generate_pose_grid(2, 2, 16, None).unwrap(), 6, 4).unwrap();
        // heading t + 2 (45 deg later) slice n == heading t slice n + 1
        for k in 0..set.n_poses() {
            if k % 16 >= 14 {
                continue;
            }
            for n in 0..8 {
                let a = set.mask(k + 2, n).unwrap();
                let b = set.mask(k, (n + 1) % 8).unwrap();
                assert!(a.shares_storage(&b));
            }
        }
    }

    #[test]
    fn missing_mask_errors() {
        let cam = CameraModel::panoramic(4).unwrap();
        let set =
            MaskSet::precompute(cam, &generate_pose_grid(1, 1, 1, None).unwrap(), 3, 1).unwrap();
        assert!(matches!(
            set.mask(1, 0),
            Err(Error::MissingMask { pose: 1, slice: 0 })
        ));
        assert!(set.mask(0, 4).is_err());
    }
}
