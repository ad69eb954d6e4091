//! Scoring throughput and memory as the candidate count grows.

use std::hint::black_box;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aggregation::{aggregate_all, pool_weights, slice_ground, AttentionMlp, GroundSliceSet};
use crate::error::{Error, Result};
use crate::geometry::{generate_pose_grid, CameraModel, MaskSet, Pose, PoseSet};
use crate::learning::{generate_synthetic_pair, SyntheticWorld};
use crate::matching::score_poses;
use crate::tensor::{cosine_unchecked, FeatureMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchDims {
    pub l: usize,
    pub c: usize,
    pub height: usize,
    pub width: usize,
    pub n_slices: usize,
    pub hidden: usize,
    pub supersample: usize,
    /// Headings per location; candidates fill locations in grid order.
    pub n_theta: usize,
    /// Timed repetitions per `K`; the fastest is reported.
    pub repeats: usize,
    /// Rayon workers for the timed region.
    pub threads: usize,
    pub seed: u64,
    pub memory_limit_bytes: Option<u64>,
}

impl Default for BenchDims {
    fn default() -> Self {
        Self {
            l: 16,
            c: 8,
            height: 4,
            width: 32,
            n_slices: 16,
            hidden: 8,
            supersample: 4,
            n_theta: 16,
            repeats: 3,
            threads: 1,
            seed: 0,
            memory_limit_bytes: Some(4 << 30),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub k: usize,
    pub wall_ms: f64,
    pub attention_evals: u64,
    pub pooled_slices: u64,
    pub descriptors: usize,
    pub mask_bytes: u64,
    pub descriptor_bytes: u64,
    /// `mask_bytes + descriptor_bytes`.
    pub peak_bytes_estimate: u64,
}

/// Single-thread cost of the two per-candidate primitives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineCost {
    pub cosine_ms: f64,
    pub pool_ms: f64,
}

impl BaselineCost {
    pub fn total_ms(&self) -> f64 {
        self.cosine_ms + self.pool_ms
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub dims: BenchDims,
    pub rows: Vec<BenchRow>,
    pub baseline: BaselineCost,
}

/// The first `k` poses of a square grid with `n_theta` headings per location.
pub fn candidate_poses(k: usize, n_theta: usize) -> Result<PoseSet> {
    if n_theta == 0 {
        return Err(Error::InvalidArgument("n_theta must be >= 1".into()));
    }
    let locations = k.div_ceil(n_theta).max(1);
    let side = (locations as f64).sqrt().ceil() as usize;
    let grid = generate_pose_grid(side, side, n_theta, None)?;
    Ok(PoseSet::from_poses(grid.poses()[..k].to_vec()))
}

/// Upper bound on mask plus descriptor bytes, computed before allocating.
pub fn estimate_bytes(dims: &BenchDims, k: usize) -> u64 {
    let cells = (dims.l * dims.l) as u64;
    let locations = k.div_ceil(dims.n_theta.max(1)) as u64;
    let distinct = locations * (dims.n_slices.min(k.max(1) * dims.n_slices)) as u64;
    let per_entry = (std::mem::size_of::<usize>() + 16) as u64;
    distinct * cells * 4
        + k as u64 * dims.n_slices as u64 * per_entry
        + k as u64 * (dims.n_slices * dims.c) as u64 * 4
}

/// Synthetic aerial map, ground slices and attention MLP for a benchmark run.
pub struct BenchInputs {
    pub aerial: FeatureMap,
    pub mlp: AttentionMlp,
    pub slices: GroundSliceSet,
}

pub fn bench_inputs(dims: &BenchDims, camera: &CameraModel) -> Result<BenchInputs> {
    let world = SyntheticWorld::random(dims.seed, 32, dims.c, 100.0, 0.0)?;
    let (ground, aerial) = generate_synthetic_pair(
        &world,
        &Pose::new(0.5, 0.5, 0.0)?,
        camera,
        dims.height,
        dims.width,
        dims.l,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(dims.seed);
    let mlp = AttentionMlp::random(dims.c + 1, dims.hidden, 0.5, &mut rng);
    Ok(BenchInputs {
        aerial,
        mlp,
        slices: slice_ground(&ground, dims.n_slices)?,
    })
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Times aggregation plus scoring for every `K`; masks are built outside
/// the timed region.
pub fn bench_scoring(dims: &BenchDims, k_list: &[usize]) -> Result<Vec<BenchRow>> {
    let camera = CameraModel::panoramic(dims.n_slices)?;
    let inp = bench_inputs(dims, &camera)?;
    let d_g = inp.slices.to_global()?;
    let workers = pool(dims.threads.max(1))?;
    let mut rows = Vec::with_capacity(k_list.len());
    for &k in k_list {
        if let Some(limit) = dims.memory_limit_bytes {
            let bytes = estimate_bytes(dims, k);
            if bytes > limit {
                return Err(Error::OutOfMemory { k, bytes, limit });
            }
        }
        if k == 0 {
            rows.push(BenchRow {
                k,
                wall_ms: 0.0,
                attention_evals: 0,
                pooled_slices: 0,
                descriptors: 0,
                mask_bytes: 0,
                descriptor_bytes: 0,
                peak_bytes_estimate: 0,
            });
            continue;
        }
        let poses = candidate_poses(k, dims.n_theta)?;
        let masks = MaskSet::precompute(camera, &poses, dims.l, dims.supersample)?;
        let mut best = f64::INFINITY;
        let mut last = None;
        for _ in 0..dims.repeats.max(1) {
            let t = Instant::now();
            let out = workers.install(|| -> Result<_> {
                let agg = aggregate_all(&inp.aerial, &inp.slices, &poses, &masks, &inp.mlp)?;
                let best = score_poses(&d_g, &agg.descriptors, &poses)?.best_index;
                Ok((agg, best))
            })?;
            best = best.min(t.elapsed().as_secs_f64() * 1e3);
            last = Some(black_box(out).0);
        }
        let agg = last.expect("at least one repeat");
        let descriptor_bytes = agg.descriptors.iter().map(|d| d.len() as u64 * 4).sum();
        let mask_bytes = masks.bytes();
        rows.push(BenchRow {
            k,
            wall_ms: best,
            attention_evals: agg.attention_evals,
            pooled_slices: agg.pooled_slices,
            descriptors: agg.descriptors.len(),
            mask_bytes,
            descriptor_bytes,
            peak_bytes_estimate: mask_bytes + descriptor_bytes,
        });
    }
    Ok(rows)
}

/// Cost of one length-`D` cosine and one masked pool on the same inputs.
pub fn bench_baseline(dims: &BenchDims, iterations: usize) -> Result<BaselineCost> {
    let camera = CameraModel::panoramic(dims.n_slices)?;
    let inp = bench_inputs(dims, &camera)?;
    let poses = candidate_poses(1, 1)?;
    let masks = MaskSet::precompute(camera, &poses, dims.l, dims.supersample)?;
    let weights = masks.weights(0, 0)?;
    let d = dims.n_slices * dims.c;
    let a: Vec<f32> = (0..d).map(|i| (i as f32 * 0.37).sin()).collect();
    let b: Vec<f32> = (0..d).map(|i| (i as f32 * 0.11).cos()).collect();
    let iterations = iterations.max(1);

    let t = Instant::now();
    for _ in 0..iterations {
        black_box(cosine_unchecked(black_box(&a), black_box(&b)));
    }
    let cosine_ms = t.elapsed().as_secs_f64() * 1e3 / iterations as f64;

    let t = Instant::now();
    for _ in 0..iterations {
        black_box(pool_weights(black_box(&inp.aerial), black_box(weights)));
    }
    let pool_ms = t.elapsed().as_secs_f64() * 1e3 / iterations as f64;
    Ok(BaselineCost { cosine_ms, pool_ms })
}

pub fn run(dims: &BenchDims, k_list: &[usize]) -> Result<BenchReport> {
    Ok(BenchReport {
        dims: *dims,
        rows: bench_scoring(dims, k_list)?,
        baseline: bench_baseline(dims, 2000)?,
    })
}

/// Least-squares line `y = slope x + intercept` and its `R^2`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(Error::Empty("fit needs two points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("fit needs distinct x values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Ok((slope, intercept, r2))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> BenchDims {
        BenchDims {
            l: 8,
            repeats: 1,
            ..BenchDims::default()
        }
    }

    #[test]
    fn counter_constant_and_bytes_scale() {
        let rows = bench_scoring(&tiny(), &[0, 16, 160, 320]).unwrap();
        assert_eq!(rows[0].wall_ms, 0.0);
        assert_eq!(rows[0].descriptors, 0);
        let evals = rows[1].attention_evals;
        assert_eq!(evals, 16 * 64);
        assert!(rows[1..].iter().all(|r| r.attention_evals == evals));
        assert_eq!(rows[2].descriptors, 160);
        let ratio = rows[3].peak_bytes_estimate as f64 / rows[2].peak_bytes_estimate as f64;
        assert!((1.8..=2.2).contains(&ratio), "{ratio}");
        for r in &rows[1..] {
            assert!(r.peak_bytes_estimate <= estimate_bytes(&tiny(), r.k));
        }
    }

    #[test]
    fn memory_limit() {
        let dims = BenchDims {
            memory_limit_bytes: Some(1000),
            ..tiny()
        };
        match bench_scoring(&dims, &[16, 1600]) {
            Err(Error::OutOfMemory { k, .. }) => assert_eq!(k, 16),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fit() {
        let (s, i, r2) = linear_fit(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0]).unwrap();
        assert!((s - 2.0).abs() < 1e-12 && (i - 1.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
        assert!(linear_fit(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn candidates_truncate() {
        let p = candidate_poses(40, 16).unwrap();
        assert_eq!(p.len(), 40);
        assert!(p.grid().is_none());
    }
}
