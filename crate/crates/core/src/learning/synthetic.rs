//! Seeded synthetic cross-view world.
//!
//! A smooth random feature field covers the unit square. The aerial view
//! samples it at cell centers; each ground column averages the field along
//! the ray leaving the camera at that column's azimuth.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Pose};
use crate::tensor::FeatureMap;

/// Spacing of the ray samples, in unit-square coordinates.
pub const RAY_STEP: f64 = 0.05;

const WAVES_PER_CHANNEL: usize = 4;

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    /// `L_world x L_world x C_raw`, sampled at cell centers of the unit square.
    pub field: FeatureMap,
    pub aerial_extent_m: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticWorld {
    /// Random field built from a few low-frequency plane waves per channel.
    pub fn random(
        seed: u64,
        l_world: usize,
        c_raw: usize,
        aerial_extent_m: f64,
        noise_sigma: f64,
    ) -> Result<Self> {
        if l_world == 0 || c_raw == 0 {
            return Err(Error::InvalidArgument("world dims must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // (kx, ky, phase, amplitude) per wave, channel-major
        let waves: Vec<[f64; 4]> = (0..c_raw * WAVES_PER_CHANNEL)
            .map(|_| {
                let freq = rng.random_range(0.5..2.5);
                let dir = rng.random_range(0.0..TAU);
                [
                    freq * dir.cos(),
                    freq * dir.sin(),
                    rng.random_range(0.0..TAU),
                    rng.random_range(0.5..1.0),
                ]
            })
            .collect();
        let lw = l_world as f64;
        let field = FeatureMap::from_fn(l_world, l_world, c_raw, |i, j, out| {
            let (x, y) = ((j as f64 + 0.5) / lw, (i as f64 + 0.5) / lw);
            for (c, o) in out.iter_mut().enumerate() {
                let ws = &waves[c * WAVES_PER_CHANNEL..(c + 1) * WAVES_PER_CHANNEL];
                *o = ws
                    .iter()
                    .map(|[kx, ky, ph, a]| a * (TAU * (kx * x + ky * y) + ph).sin())
                    .sum::<f64>() as f32;
            }
        })?;
        Self::from_field(field, seed, aerial_extent_m, noise_sigma)
    }

    pub fn from_field(
        field: FeatureMap,
        seed: u64,
        aerial_extent_m: f64,
        noise_sigma: f64,
    ) -> Result<Self> {
        if field.height() != field.width() {
            return Err(Error::Dimension("world field must be square".into()));
        }
        if !(aerial_extent_m > 0.0) || !(noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument(
                "extent must be positive and noise non-negative".into(),
            ));
        }
        Ok(Self {
            field,
            aerial_extent_m,
            noise_sigma,
            seed,
        })
    }

    pub fn channels(&self) -> usize {
        self.field.channels()
    }

    /// Bilinear sample at `(u, v)`, clamped to the edge cells.
    pub fn sample(&self, u: f64, v: f64, out: &mut [f64]) {
        let l = self.field.width();
        let lf = l as f64;
        let x = (u * lf - 0.5).clamp(0.0, lf - 1.0);
        let y = (v * lf - 0.5).clamp(0.0, lf - 1.0);
        let (j0, i0) = (x.floor() as usize, y.floor() as usize);
        let (j1, i1) = ((j0 + 1).min(l - 1), (i0 + 1).min(l - 1));
        let (fx, fy) = (x - j0 as f64, y - i0 as f64);
        let corners = [
            (i0, j0, (1.0 - fx) * (1.0 - fy)),
            (i0, j1, fx * (1.0 - fy)),
            (i1, j0, (1.0 - fx) * fy),
            (i1, j1, fx * fy),
        ];
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, j, w) in corners {
            for (o, &f) in out.iter_mut().zip(self.field.cell(i, j)) {
                *o += w * f as f64;
            }
        }
    }

    /// Average of the field along the ray from `(u, v)` in azimuth `phi_deg`.
    fn ray_average(&self, u: f64, v: f64, phi_deg: f64, max_range: Option<f64>, out: &mut [f64]) {
        let phi = phi_deg.to_radians();
        let (du, dv) = (phi.sin(), -phi.cos());
        let reach = exit_distance(u, du).min(exit_distance(v, dv));
        let reach = max_range.map_or(reach, |r| reach.min(r));
        let mut tmp = vec![0.0; out.len()];
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut count = 0usize;
        let mut k = 1;
        loop {
            let r = RAY_STEP * k as f64;
            if r > reach + 1e-12 {
                break;
            }
            self.sample(u + r * du, v + r * dv, &mut tmp);
            out.iter_mut().zip(&tmp).for_each(|(o, t)| *o += t);
            count += 1;
            k += 1;
        }
        if count == 0 {
            self.sample(u, v, out);
        } else {
            out.iter_mut().for_each(|o| *o /= count as f64);
        }
    }

    fn noise_rng(&self, pose: &Pose) -> ChaCha8Rng {
        let mut h = self.seed ^ 0x9E37_79B9_7F4A_7C15;
        for bits in [pose.u.to_bits(), pose.v.to_bits(), pose.theta_deg.to_bits()] {
            h = h.rotate_left(23) ^ bits;
            h = h.wrapping_mul(0x2545_F491_4F6C_DD1D);
        }
        ChaCha8Rng::seed_from_u64(h)
    }
}

/// Distance along a unit direction component before leaving `[0, 1]`.
fn exit_distance(p: f64, d: f64) -> f64 {
    if d > 1e-12 {
        (1.0 - p) / d
    } else if d < -1e-12 {
        p / -d
    } else {
        f64::INFINITY
    }
}

/// Raw `(ground, aerial)` feature maps for a camera at `gt_pose`.
///
/// The ground map is `height x width x C_raw`; column `w` looks along
/// azimuth `theta - fov/2 + (w + 0.5) fov / width`. The aerial map is
/// `l x l x C_raw`.
pub fn generate_synthetic_pair(
    world: &SyntheticWorld,
    gt_pose: &Pose,
    camera: &CameraModel,
    height: usize,
    width: usize,
    l: usize,
) -> Result<(FeatureMap, FeatureMap)> {
    camera.validate()?;
    if height == 0 || width == 0 || l == 0 {
        return Err(Error::InvalidArgument("map dims must be positive".into()));
    }
    let c = world.channels();
    let mut col = vec![0.0f64; c];
    let mut columns = Vec::with_capacity(width * c);
    for w in 0..width {
        let phi = gt_pose.theta_deg - camera.fov_deg / 2.0
            + (w as f64 + 0.5) * camera.fov_deg / width as f64;
        world.ray_average(gt_pose.u, gt_pose.v, phi, camera.max_range, &mut col);
        columns.extend(col.iter().map(|&x| x as f32));
    }
    let mut ground = FeatureMap::from_fn(height, width, c, |_, j, out| {
        out.copy_from_slice(&columns[j * c..(j + 1) * c]);
    })?;

    let lf = l as f64;
    let mut aerial = FeatureMap::from_fn(l, l, c, |i, j, out| {
        world.sample((j as f64 + 0.5) / lf, (i as f64 + 0.5) / lf, &mut col);
        out.iter_mut().zip(&col).for_each(|(o, &x)| *o = x as f32);
    })?;

    if world.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, world.noise_sigma as f32)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut rng = world.noise_rng(gt_pose);
        ground = add_noise(ground, &normal, &mut rng)?;
        aerial = add_noise(aerial, &normal, &mut rng)?;
    }
    Ok((ground, aerial))
}

fn add_noise(m: FeatureMap, normal: &Normal<f32>, rng: &mut ChaCha8Rng) -> Result<FeatureMap> {
    let (h, w, c) = (m.height(), m.width(), m.channels());
    let data = m
        .into_data()
        .into_iter()
        .map(|x| x + normal.sample(rng))
        .collect();
    FeatureMap::new(h, w, c, data)
}
