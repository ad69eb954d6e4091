//! Poses, camera slicing and candidate grids.
//!
//! Conventions used throughout the crate:
//!
//! * `u` grows East (rightward in the aerial image), `v` grows South
//!   (downward). Both live in `[0, 1]`.
//! * Headings are degrees clockwise from North. The unit direction of
//!   azimuth `phi` is `(sin phi, -cos phi)` in `(u, v)`.
//! * Slice 0 is the leftmost vertical strip of the ground image; its
//!   azimuth interval starts at `theta - fov / 2`.
//! * Azimuth intervals are quantized to integer micro-degrees. Masks are
//!   keyed and rasterized on the quantized values, so two requests with the
//!   same location and the same interval produce bit-identical weights.

mod mask;

pub use mask::{rasterize_slice_mask, MaskSet, SliceMask};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Micro-degrees in a full turn.
pub const FULL_TURN_UDEG: i64 = 360_000_000;
const UDEG_PER_DEG: f64 = 1e6;

/// Candidate 3-DoF camera pose in normalized aerial coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub u: f64,
    pub v: f64,
    pub theta_deg: f64,
}

impl Pose {
    /// Validates the location and reduces the heading into `[0, 360)`.
    pub fn new(u: f64, v: f64, theta_deg: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidArgument(format!(
                "pose location ({u}, {v}) outside the unit square"
            )));
        }
        if !theta_deg.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            u,
            v,
            theta_deg: canonical_deg(theta_deg),
        })
    }
}

/// Reduces an angle into `[0, 360)`.
pub fn canonical_deg(deg: f64) -> f64 {
    let r = deg.rem_euclid(360.0);
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Horizontal field of view split into equal azimuth slices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fov_deg: f64,
    pub n_slices: usize,
    /// Frustum radius in normalized aerial units; `None` is unbounded.
    #[serde(default)]
    pub max_range: Option<f64>,
}

impl CameraModel {
    pub fn new(fov_deg: f64, n_slices: usize, max_range: Option<f64>) -> Result<Self> {
        if !(fov_deg > 0.0 && fov_deg <= 360.0) {
            return Err(Error::InvalidArgument(format!(
                "fov_deg must be in (0, 360], got {fov_deg}"
            )));
        }
        if n_slices == 0 {
            return Err(Error::InvalidArgument("n_slices must be >= 1".into()));
        }
        if let Some(r) = max_range {
            if !(r > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "max_range must be positive, got {r}"
                )));
            }
        }
        Ok(Self {
            fov_deg,
            n_slices,
            max_range,
        })
    }

    pub fn panoramic(n_slices: usize) -> Result<Self> {
        Self::new(360.0, n_slices, None)
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.fov_deg, self.n_slices, self.max_range).map(|_| ())
    }

    pub fn is_panoramic(&self) -> bool {
        self.fov_deg == 360.0
    }

    pub fn slice_width_deg(&self) -> f64 {
        self.fov_deg / self.n_slices as f64
    }

    /// Number of whole slice-width rotations between `theta_deg` and its
    /// base orientation in `[0, 360 / N)`. Always 0 for limited-FoV cameras.
    pub fn rotation_steps(&self, theta_deg: f64) -> usize {
        if !self.is_panoramic() {
            return 0;
        }
        let q = (canonical_deg(theta_deg) / self.slice_width_deg() + 1e-9).floor();
        (q as usize) % self.n_slices
    }

    /// Slot permutation mapping a base descriptor onto the pose rotated by
    /// `m` slice widths.
    pub fn rotation_permutation(&self, m: usize) -> Result<Vec<usize>> {
        if !self.is_panoramic() {
            return Err(Error::NotPanoramic);
        }
        rotation_permutation(self.n_slices, m)
    }
}

/// Cyclic slot permutation `perm[n] = (n + m) mod N` (0-based).
///
/// Slot `n` of the rotated descriptor is read from slot `perm[n]` of the
/// base descriptor; `m = 1` turns `(d1, .., dN)` into `(d2, .., dN, d1)`.
pub fn rotation_permutation(n_slices: usize, m: usize) -> Result<Vec<usize>> {
    if n_slices == 0 || m >= n_slices {
        return Err(Error::InvalidArgument(format!(
            "rotation step {m} out of range for {n_slices} slices"
        )));
    }
    Ok((0..n_slices).map(|n| (n + m) % n_slices).collect())
}

/// Half-open absolute azimuth interval `[start, start + width)`, quantized
/// to micro-degrees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AzimuthInterval {
    pub start_udeg: i64,
    pub width_udeg: i64,
}

impl AzimuthInterval {
    pub fn start_deg(&self) -> f64 {
        self.start_udeg as f64 / UDEG_PER_DEG
    }

    /// End of the interval reduced into `[0, 360)`.
    pub fn end_deg(&self) -> f64 {
        ((self.start_udeg + self.width_udeg) % FULL_TURN_UDEG) as f64 / UDEG_PER_DEG
    }

    pub fn width_deg(&self) -> f64 {
        self.width_udeg as f64 / UDEG_PER_DEG
    }

    /// Whether a quantized azimuth lies inside the interval.
    #[inline]
    pub fn contains_udeg(&self, phi_udeg: i64) -> bool {
        (phi_udeg - self.start_udeg).rem_euclid(FULL_TURN_UDEG) < self.width_udeg
    }
}

fn to_udeg(deg: f64) -> i64 {
    (deg * UDEG_PER_DEG).round() as i64
}

/// Absolute azimuth interval seen by slice `n` (0-based) of `camera` at
/// `pose`.
///
/// `start = theta - fov/2 + n * fov/N`, `width = fov/N`. Boundaries are
/// rounded once in micro-degrees so consecutive slices tile exactly.
pub fn slice_azimuth_interval(
    camera: &CameraModel,
    pose: &Pose,
    n: usize,
) -> Result<AzimuthInterval> {
    let big_n = camera.n_slices;
    if n >= big_n {
        return Err(Error::InvalidArgument(format!(
            "slice index {n} out of range for {big_n} slices"
        )));
    }
    let fov_udeg = to_udeg(camera.fov_deg);
    let left = to_udeg(pose.theta_deg - camera.fov_deg / 2.0);
    let edge = |i: usize| -> i64 { ((i as f64) * fov_udeg as f64 / big_n as f64).round() as i64 };
    let start = (left + edge(n)).rem_euclid(FULL_TURN_UDEG);
    let width = edge(n + 1) - edge(n);
    Ok(AzimuthInterval {
        start_udeg: start,
        width_udeg: width,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridShape {
    pub n_u: usize,
    pub n_v: usize,
    pub n_theta: usize,
}

impl GridShape {
    pub fn len(&self) -> usize {
        self.n_u * self.n_v * self.n_theta
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_locations(&self) -> usize {
        self.n_u * self.n_v
    }
}

/// Restricts candidate headings to `[center - half_width, center + half_width]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientationPrior {
    pub center_deg: f64,
    pub half_width_deg: f64,
}

/// Ordered candidate poses. Grid-generated sets are v-major, then u, then
/// theta ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSet {
    poses: Vec<Pose>,
    grid: Option<GridShape>,
    prior: Option<OrientationPrior>,
}

impl PoseSet {
    pub fn from_poses(poses: Vec<Pose>) -> Self {
        Self {
            poses,
            grid: None,
            prior: None,
        }
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn get(&self, k: usize) -> Option<&Pose> {
        self.poses.get(k)
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn grid(&self) -> Option<GridShape> {
        self.grid
    }

    pub fn prior(&self) -> Option<OrientationPrior> {
        self.prior
    }

    /// Grid index of `(iu, iv, it)`.
    pub fn grid_index(&self, iu: usize, iv: usize, it: usize) -> Option<usize> {
        let g = self.grid?;
        (iu < g.n_u && iv < g.n_v && it < g.n_theta).then(|| (iv * g.n_u + iu) * g.n_theta + it)
    }
}

/// Uniform candidate grid.
///
/// Locations sit at cell centers `((i + 0.5) / n_u, (j + 0.5) / n_v)`.
/// Without a prior, headings are `t * 360 / n_theta`; with one, they span
/// the closed prior window evenly (a single heading sits on the center).
pub fn generate_pose_grid(
    n_u: usize,
    n_v: usize,
    n_theta: usize,
    prior: Option<OrientationPrior>,
) -> Result<PoseSet> {
    if n_u == 0 || n_v == 0 || n_theta == 0 {
        return Err(Error::InvalidArgument(format!(
            "grid counts must be >= 1, got ({n_u}, {n_v}, {n_theta})"
        )));
    }
    if let Some(p) = prior {
        if !(p.half_width_deg >= 0.0) || !p.center_deg.is_finite() {
            return Err(Error::InvalidArgument(
                "orientation prior needs finite center and non-negative half width".into(),
            ));
        }
    }
    let headings: Vec<f64> = (0..n_theta)
        .map(|t| match prior {
            None => t as f64 * 360.0 / n_theta as f64,
            Some(_) if n_theta == 1 => prior.unwrap().center_deg,
            Some(p) => {
                p.center_deg - p.half_width_deg
                    + 2.0 * p.half_width_deg * t as f64 / (n_theta - 1) as f64
            }
        })
        .collect();
    let mut poses = Vec::with_capacity(n_u * n_v * n_theta);
    for iv in 0..n_v {
        let v = (iv as f64 + 0.5) / n_v as f64;
        for iu in 0..n_u {
            let u = (iu as f64 + 0.5) / n_u as f64;
            for &theta in &headings {
                poses.push(Pose::new(u, v, theta)?);
            }
        }
    }
    Ok(PoseSet {
        poses,
        grid: Some(GridShape { n_u, n_v, n_theta }),
        prior,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes() {
        assert_eq!(generate_pose_grid(7, 7, 16, None).unwrap().len(), 784);
        assert_eq!(generate_pose_grid(5, 5, 16, None).unwrap().len(), 400);
        assert_eq!(generate_pose_grid(21, 21, 64, None).unwrap().len(), 28224);
        assert_eq!(generate_pose_grid(15, 15, 64, None).unwrap().len(), 14400);
        let one = generate_pose_grid(1, 1, 1, None).unwrap();
        assert_eq!(one.poses(), &[Pose::new(0.5, 0.5, 0.0).unwrap()]);
        assert!(generate_pose_grid(0, 1, 1, None).is_err());
    }

    #[test]
    fn grid_ordering_is_v_major() {
        let g = generate_pose_grid(2, 3, 4, None).unwrap();
        let p = g.poses();
        assert_eq!(p[0].theta_deg, 0.0);
        assert_eq!(p[1].theta_deg, 90.0);
        assert_eq!(p[4].u, 0.75);
        assert_eq!(p[4].v, p[0].v);
        assert_eq!(p[8].v, 0.5);
        assert_eq!(g.grid_index(1, 2, 3), Some(23));
        assert_eq!(g.poses()[23], Pose::new(0.75, 2.5 / 3.0, 270.0).unwrap());
    }

    #[test]
    fn grid_with_prior() {
        let prior = OrientationPrior {
            center_deg: 10.0,
            half_width_deg: 20.0,
        };
        let g = generate_pose_grid(1, 1, 5, Some(prior)).unwrap();
        let th: Vec<f64> = g.poses().iter().map(|p| p.theta_deg).collect();
        assert_eq!(th, vec![350.0, 0.0, 10.0, 20.0, 30.0]);
        let g = generate_pose_grid(1, 1, 1, Some(prior)).unwrap();
        assert_eq!(g.poses()[0].theta_deg, 10.0);
    }

    #[test]
    fn azimuth_interval_examples() {
        let cam = CameraModel::panoramic(4).unwrap();
        let p0 = Pose::new(0.5, 0.5, 0.0).unwrap();
        let iv = slice_azimuth_interval(&cam, &p0, 0).unwrap();
        assert_eq!((iv.start_deg(), iv.end_deg()), (180.0, 270.0));

        let p90 = Pose::new(0.5, 0.5, 90.0).unwrap();
        assert_eq!(
            slice_azimuth_interval(&cam, &p90, 0).unwrap(),
            slice_azimuth_interval(&cam, &p0, 1).unwrap()
        );

        let narrow = CameraModel::new(90.0, 2, None).unwrap();
        let iv = slice_azimuth_interval(&narrow, &p0, 1).unwrap();
        assert_eq!((iv.start_deg(), iv.end_deg()), (0.0, 45.0));
        assert!(slice_azimuth_interval(&narrow, &p0, 2).is_err());
    }

    #[test]
    fn slices_tile_the_fov() {
        let cam = CameraModel::new(123.4, 7, None).unwrap();
        let pose = Pose::new(0.2, 0.9, 301.7).unwrap();
        let ivs: Vec<_> = (0..7)
            .map(|n| slice_azimuth_interval(&cam, &pose, n).unwrap())
            .collect();
        for w in ivs.windows(2) {
            assert_eq!(
                (w[0].start_udeg + w[0].width_udeg) % FULL_TURN_UDEG,
                w[1].start_udeg
            );
        }
        let total: i64 = ivs.iter().map(|i| i.width_udeg).sum();
        assert_eq!(total, 123_400_000);
    }

    #[test]
    fn permutation_examples() {
        assert_eq!(rotation_permutation(5, 0).unwrap(), vec![0, 1, 2, 3, 4]);
        // (2, 3, 4, 1) in 1-based slot labels
        assert_eq!(rotation_permutation(4, 1).unwrap(), vec![1, 2, 3, 0]);
        let mut acc: Vec<usize> = (0..6).collect();
        let step = rotation_permutation(6, 1).unwrap();
        for _ in 0..6 {
            acc = step.iter().map(|&i| acc[i]).collect();
        }
        assert_eq!(acc, (0..6).collect::<Vec<_>>());
        assert!(rotation_permutation(4, 4).is_err());

        let limited = CameraModel::new(90.0, 4, None).unwrap();
        let err = limited.rotation_permutation(1).unwrap_err();
        assert_eq!(err.to_string(), "permutation path requires panoramic FoV");
    }

    #[test]
    fn rotation_steps() {
        let cam = CameraModel::panoramic(4).unwrap();
        assert_eq!(cam.rotation_steps(0.0), 0);
        assert_eq!(cam.rotation_steps(89.9), 0);
        assert_eq!(cam.rotation_steps(90.0), 1);
        assert_eq!(cam.rotation_steps(359.0), 3);
        let limited = CameraModel::new(90.0, 4, None).unwrap();
        assert_eq!(limited.rotation_steps(270.0), 0);
    }

    #[test]
    fn pose_validation() {
        assert!(Pose::new(1.1, 0.5, 0.0).is_err());
        assert!(Pose::new(0.5, 0.5, f64::NAN).is_err());
        assert_eq!(Pose::new(0.5, 0.5, -90.0).unwrap().theta_deg, 270.0);
        assert_eq!(Pose::new(0.5, 0.5, 720.0).unwrap().theta_deg, 0.0);
        assert!(CameraModel::new(0.0, 4, None).is_err());
        assert!(CameraModel::new(400.0, 4, None).is_err());
        assert!(CameraModel::new(90.0, 0, None).is_err());
        assert!(CameraModel::new(90.0, 2, Some(-1.0)).is_err());
    }
}
