//! Ground and aerial feature aggregation.
//!
//! The ground side re-weights `z_g` with a spatial self-attention mask and
//! averages it into `N` vertical slices. The aerial side builds one
//! cross-view attention mask per ground slice, then pools the re-weighted
//! aerial maps under precomputed frustum slice masks.
//!
//! Slot pairing: slot `n` of pose `k` pools attention map `(n + m_k) mod N`
//! under mask `P^{k,n}`, where `m_k` is the number of whole slice widths
//! between the pose heading and its base heading in `[0, 360/N)` (always 0
//! for limited-FoV cameras). This is exactly what re-assembling a base
//! descriptor by cyclic slot permutation produces, so the fast path and the
//! direct path agree.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{MaskSet, PoseSet, SliceMask};
use crate::tensor::{
    cosine_unchecked, l2_normalize_unchecked, norm, resize_width_bilinear, FeatureMap,
    GlobalDescriptor, SliceDescriptor, NORM_EPS,
};

/// Masks whose total weight is below this pool to the zero descriptor.
pub const EMPTY_MASK_EPS: f64 = 1e-9;

/// Two 1x1 convolutions with a ReLU in between, followed by a sigmoid.
///
/// `w1` is `c_in x hidden` row-major, `w2` has `hidden` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMlp {
    c_in: usize,
    hidden: usize,
    w1: Vec<f32>,
    b1: Vec<f32>,
    w2: Vec<f32>,
    b2: f32,
}

impl AttentionMlp {
    pub fn new(
        c_in: usize,
        hidden: usize,
        w1: Vec<f32>,
        b1: Vec<f32>,
        w2: Vec<f32>,
        b2: f32,
    ) -> Result<Self> {
        if c_in == 0 || hidden == 0 {
            return Err(Error::InvalidArgument(
                "attention MLP dims must be positive".into(),
            ));
        }
        if w1.len() != c_in * hidden {
            return Err(Error::LengthMismatch(w1.len(), c_in * hidden));
        }
        if b1.len() != hidden {
            return Err(Error::LengthMismatch(b1.len(), hidden));
        }
        if w2.len() != hidden {
            return Err(Error::LengthMismatch(w2.len(), hidden));
        }
        if w1.iter().chain(&b1).chain(&w2).any(|x| !x.is_finite()) || !b2.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            c_in,
            hidden,
            w1,
            b1,
            w2,
            b2,
        })
    }

    /// All-zero weights: the mask is 0.5 everywhere.
    pub fn zeros(c_in: usize, hidden: usize) -> Self {
        Self {
            c_in,
            hidden,
            w1: vec![0.0; c_in * hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
        }
    }

    /// Uniform init in `[-scale, scale]`.
    pub fn random<R: Rng>(c_in: usize, hidden: usize, scale: f32, rng: &mut R) -> Self {
        let mut draw =
            |n: usize| -> Vec<f32> { (0..n).map(|_| rng.random_range(-scale..=scale)).collect() };
        let w1 = draw(c_in * hidden);
        let b1 = draw(hidden);
        let w2 = draw(hidden);
        let b2 = draw(1)[0];
        Self {
            c_in,
            hidden,
            w1,
            b1,
            w2,
            b2,
        }
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn n_params(&self) -> usize {
        Self::param_count(self.c_in, self.hidden)
    }

    pub fn param_count(c_in: usize, hidden: usize) -> usize {
        c_in * hidden + 2 * hidden + 1
    }

    /// Flat parameters: `w1 | b1 | w2 | b2`.
    pub fn to_params(&self) -> Vec<f32> {
        let mut p = Vec::with_capacity(self.n_params());
        p.extend_from_slice(&self.w1);
        p.extend_from_slice(&self.b1);
        p.extend_from_slice(&self.w2);
        p.push(self.b2);
        p
    }

    pub fn from_params(c_in: usize, hidden: usize, params: &[f32]) -> Result<Self> {
        if params.len() != Self::param_count(c_in, hidden) {
            return Err(Error::LengthMismatch(
                params.len(),
                Self::param_count(c_in, hidden),
            ));
        }
        let (w1, rest) = params.split_at(c_in * hidden);
        let (b1, rest) = rest.split_at(hidden);
        let (w2, rest) = rest.split_at(hidden);
        Self::new(c_in, hidden, w1.to_vec(), b1.to_vec(), w2.to_vec(), rest[0])
    }

    /// Infers the hidden width from a flat parameter vector of known `c_in`.
    pub fn from_flat(c_in: usize, params: &[f32]) -> Result<Self> {
        let n = params.len();
        if n == 0 || !(n - 1).is_multiple_of(c_in + 2) {
            return Err(Error::Format(format!(
                "{n} parameters do not describe an MLP with {c_in} inputs"
            )));
        }
        Self::from_params(c_in, (n - 1) / (c_in + 2), params)
    }

    /// Mask value for one location; `extra` is appended as input `c_in - 1`.
    #[inline]
    pub fn evaluate(&self, features: &[f32], extra: Option<f32>) -> f32 {
        let mut logit = self.b2 as f64;
        for h in 0..self.hidden {
            let mut acc = self.b1[h] as f64;
            for (i, &x) in features.iter().enumerate() {
                acc += x as f64 * self.w1[i * self.hidden + h] as f64;
            }
            if let Some(e) = extra {
                acc += e as f64 * self.w1[features.len() * self.hidden + h] as f64;
            }
            if acc > 0.0 {
                logit += acc * self.w2[h] as f64;
            }
        }
        sigmoid(logit)
    }
}

/// Logistic function kept strictly inside `(0, 1)` in `f32`.
#[inline]
pub fn sigmoid(x: f64) -> f32 {
    let s = 1.0 / (1.0 + (-x).exp());
    (s as f32).clamp(f32::MIN_POSITIVE, 1.0 - f32::EPSILON / 2.0)
}

/// Ground self-attention: returns the `H x W` mask and `mask ⊙ z_g`.
pub fn ground_self_attention(
    z_g: &FeatureMap,
    mlp: &AttentionMlp,
) -> Result<(Vec<f32>, FeatureMap)> {
    if mlp.c_in() != z_g.channels() {
        return Err(Error::Dimension(format!(
            "ground attention expects {} channels, map has {}",
            mlp.c_in(),
            z_g.channels()
        )));
    }
    let mask: Vec<f32> = (0..z_g.cells())
        .map(|idx| mlp.evaluate(z_g.cell_flat(idx), None))
        .collect();
    let reweighted = z_g.scale_cells(&mask)?;
    Ok((mask, reweighted))
}

/// The `N` ground slice descriptors, leftmost slice first.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundSliceSet(pub Vec<SliceDescriptor>);

impl GroundSliceSet {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_global(&self) -> Result<GlobalDescriptor> {
        GlobalDescriptor::from_slices(&self.0)
    }
}

/// Cuts `z_g'` into `N` vertical slices and mean-pools each one.
///
/// When `W` is not a multiple of `N` the map is first resized to the
/// smallest multiple of `N` above `W`.
pub fn slice_ground(z: &FeatureMap, n_slices: usize) -> Result<GroundSliceSet> {
    if n_slices == 0 {
        return Err(Error::InvalidArgument("n_slices must be >= 1".into()));
    }
    let w = z.width();
    let resized;
    let z = if !w.is_multiple_of(n_slices) {
        resized = resize_width_bilinear(z, w.div_ceil(n_slices) * n_slices)?;
        &resized
    } else {
        z
    };
    let cols = z.width() / n_slices;
    let c = z.channels();
    let count = (z.height() * cols) as f64;
    let descriptors = (0..n_slices)
        .map(|n| {
            let mut acc = vec![0.0f64; c];
            for i in 0..z.height() {
                for j in n * cols..(n + 1) * cols {
                    for (a, &x) in acc.iter_mut().zip(z.cell(i, j)) {
                        *a += x as f64;
                    }
                }
            }
            let mean: Vec<f32> = acc.iter().map(|a| (a / count) as f32).collect();
            SliceDescriptor(l2_normalize_unchecked(&mean))
        })
        .collect();
    Ok(GroundSliceSet(descriptors))
}

/// `S^n[i, j] = cos(d_g^n, z_a[i, j])` for every ground slice `n`.
pub fn cross_view_similarity(slices: &GroundSliceSet, z_a: &FeatureMap) -> Result<Vec<Vec<f32>>> {
    slices
        .0
        .iter()
        .map(|d| {
            if d.0.len() != z_a.channels() {
                return Err(Error::Dimension(format!(
                    "ground descriptor has {} channels, aerial map {}",
                    d.0.len(),
                    z_a.channels()
                )));
            }
            Ok((0..z_a.cells())
                .map(|idx| cosine_unchecked(&d.0, z_a.cell_flat(idx)))
                .collect())
        })
        .collect()
}

/// Similarity maps, attention masks and re-weighted aerial maps, one per
/// ground slice.
#[derive(Debug, Clone)]
pub struct CrossViewMaps {
    pub similarity: Vec<Vec<f32>>,
    pub attention: Vec<Vec<f32>>,
    pub reweighted: Vec<FeatureMap>,
    /// Attention-MLP evaluations performed while building these maps.
    pub attention_evals: u64,
}

impl CrossViewMaps {
    pub fn n_slices(&self) -> usize {
        self.reweighted.len()
    }
}

/// Cross-view attention: each `S^n` is appended to the aerial features as
/// an extra channel and fed through `mlp`.
pub fn cross_view_attention(
    z_a: &FeatureMap,
    similarity: Vec<Vec<f32>>,
    mlp: &AttentionMlp,
) -> Result<CrossViewMaps> {
    if mlp.c_in() != z_a.channels() + 1 {
        return Err(Error::Dimension(format!(
            "aerial attention expects {} inputs, aerial map has {} channels (+1 similarity)",
            mlp.c_in(),
            z_a.channels()
        )));
    }
    if let Some(bad) = similarity.iter().find(|s| s.len() != z_a.cells()) {
        return Err(Error::LengthMismatch(bad.len(), z_a.cells()));
    }
    let evals = AtomicU64::new(0);
    let results: Vec<(Vec<f32>, FeatureMap)> = similarity
        .par_iter()
        .map(|s| {
            let att: Vec<f32> = s
                .iter()
                .enumerate()
                .map(|(idx, &sv)| mlp.evaluate(z_a.cell_flat(idx), Some(sv)))
                .collect();
            evals.fetch_add(att.len() as u64, Ordering::Relaxed);
            let rew = z_a.scale_cells(&att)?;
            Ok((att, rew))
        })
        .collect::<Result<_>>()?;
    let (attention, reweighted) = results.into_iter().unzip();
    Ok(CrossViewMaps {
        similarity,
        attention,
        reweighted,
        attention_evals: evals.into_inner(),
    })
}

/// Mask-weighted average of `z` followed by L2 normalization.
pub fn pool_slice(z: &FeatureMap, mask: &SliceMask) -> Result<SliceDescriptor> {
    if mask.size * mask.size != z.cells() || z.height() != z.width() {
        return Err(Error::Dimension(format!(
            "mask of size {} does not match aerial map {}x{}",
            mask.size,
            z.height(),
            z.width()
        )));
    }
    Ok(pool_weights(z, &mask.weights))
}

pub(crate) fn pool_weights(z: &FeatureMap, weights: &[f32]) -> SliceDescriptor {
    let mut out = vec![0.0; z.channels()];
    pool_weights_into(z, weights, &mut Vec::new(), &mut out);
    SliceDescriptor(out)
}

/// Writes the pooled, normalized descriptor into `out`; `acc` is scratch.
fn pool_weights_into(z: &FeatureMap, weights: &[f32], acc: &mut Vec<f64>, out: &mut [f32]) {
    acc.clear();
    acc.resize(z.channels(), 0.0);
    let mut total = 0.0f64;
    for (idx, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let w = w as f64;
        total += w;
        for (a, &x) in acc.iter_mut().zip(z.cell_flat(idx)) {
            *a += w * x as f64;
        }
    }
    if total < EMPTY_MASK_EPS {
        out.fill(0.0);
        return;
    }
    // same rounding as normalizing the f32 mean
    for (o, a) in out.iter_mut().zip(acc.iter()) {
        *o = (a / total) as f32;
    }
    let n = norm(out).max(NORM_EPS);
    for o in out.iter_mut() {
        *o = (*o as f64 / n) as f32;
    }
}

fn check_masks(cvm: &CrossViewMaps, masks: &MaskSet) -> Result<()> {
    let n = masks.camera().n_slices;
    if cvm.n_slices() != n {
        return Err(Error::Dimension(format!(
            "{} cross-view maps for a {n}-slice camera",
            cvm.n_slices()
        )));
    }
    let z = &cvm.reweighted[0];
    if z.height() != masks.size() || z.width() != masks.size() {
        return Err(Error::Dimension(format!(
            "aerial map {}x{} does not match mask size {}",
            z.height(),
            z.width(),
            masks.size()
        )));
    }
    Ok(())
}

/// Global aerial descriptor of pose `k` built directly from its own masks.
pub fn assemble_global(
    cvm: &CrossViewMaps,
    masks: &MaskSet,
    pose_index: usize,
) -> Result<GlobalDescriptor> {
    check_masks(cvm, masks)?;
    let camera = masks.camera();
    let n_slices = camera.n_slices;
    let pose = masks.poses().get(pose_index).ok_or(Error::MissingMask {
        pose: pose_index,
        slice: 0,
    })?;
    let m = camera.rotation_steps(pose.theta_deg);
    let slots = (0..n_slices)
        .map(|n| {
            let mask = masks.mask(pose_index, n)?;
            pool_slice(&cvm.reweighted[(n + m) % n_slices], &mask)
        })
        .collect::<Result<Vec<_>>>()?;
    GlobalDescriptor::from_slices(&slots)
}

/// Aerial descriptors for every candidate pose plus work counters.
#[derive(Debug, Clone)]
pub struct Aggregation {
    pub descriptors: Vec<GlobalDescriptor>,
    /// Attention-MLP evaluations; `N * L^2` regardless of `K`.
    pub attention_evals: u64,
    /// Slice poolings actually executed.
    pub pooled_slices: u64,
}

/// Builds the cross-view maps once and the `K` pose descriptors.
///
/// For panoramic cameras only one base heading per location and heading
/// offset modulo `360/N` is pooled; every other heading is a cyclic slot
/// permutation of it.
pub fn aggregate_all(
    z_a: &FeatureMap,
    slices: &GroundSliceSet,
    poses: &PoseSet,
    masks: &MaskSet,
    mlp: &AttentionMlp,
) -> Result<Aggregation> {
    check_pose_set(poses, masks)?;
    let cvm = cross_view_attention(z_a, cross_view_similarity(slices, z_a)?, mlp)?;
    aggregate_from_maps(&cvm, masks)
}

/// Same as [`aggregate_all`] but pools every pose's slots directly.
pub fn aggregate_all_direct(
    z_a: &FeatureMap,
    slices: &GroundSliceSet,
    poses: &PoseSet,
    masks: &MaskSet,
    mlp: &AttentionMlp,
) -> Result<Aggregation> {
    check_pose_set(poses, masks)?;
    let cvm = cross_view_attention(z_a, cross_view_similarity(slices, z_a)?, mlp)?;
    check_masks(&cvm, masks)?;
    let descriptors = (0..masks.n_poses())
        .into_par_iter()
        .map(|k| assemble_global(&cvm, masks, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(Aggregation {
        pooled_slices: (descriptors.len() * masks.camera().n_slices) as u64,
        descriptors,
        attention_evals: cvm.attention_evals,
    })
}

fn check_pose_set(poses: &PoseSet, masks: &MaskSet) -> Result<()> {
    if poses.poses() != masks.poses() {
        return Err(Error::InvalidArgument(format!(
            "mask set was precomputed for a different pose set ({} vs {} poses)",
            masks.n_poses(),
            poses.len()
        )));
    }
    Ok(())
}

/// Pose descriptors from already-built cross-view maps.
pub fn aggregate_from_maps(cvm: &CrossViewMaps, masks: &MaskSet) -> Result<Aggregation> {
    check_masks(cvm, masks)?;
    let camera = *masks.camera();
    let n_slices = camera.n_slices;
    let k_total = masks.n_poses();

    if !camera.is_panoramic() {
        let descriptors = (0..k_total)
            .into_par_iter()
            .map(|k| assemble_global(cvm, masks, k))
            .collect::<Result<Vec<_>>>()?;
        return Ok(Aggregation {
            pooled_slices: (k_total * n_slices) as u64,
            descriptors,
            attention_evals: cvm.attention_evals,
        });
    }

    // Base heading key: location plus the absolute interval of base slot 0.
    let mut base_of: HashMap<(u64, u64, i64), usize> = HashMap::with_capacity(k_total);
    let mut bases: Vec<(usize, usize)> = Vec::new();
    let mut assignment: Vec<(usize, usize)> = Vec::with_capacity(k_total);
    for (k, pose) in masks.poses().iter().enumerate() {
        let m = camera.rotation_steps(pose.theta_deg);
        let base_slot0 = masks.interval(k, (n_slices - m) % n_slices)?;
        let key = (
            (pose.u + 0.0).to_bits(),
            (pose.v + 0.0).to_bits(),
            base_slot0.start_udeg,
        );
        let b = *base_of.entry(key).or_insert_with(|| {
            bases.push((k, m));
            bases.len() - 1
        });
        assignment.push((b, m));
    }

    // slot j of the base = pool(attention j, P^{k, j - m})
    let c = cvm.reweighted[0].channels();
    let base_descriptors = bases
        .par_iter()
        .map(|&(k, m)| {
            let mut values = vec![0.0f32; n_slices * c];
            let mut acc = Vec::with_capacity(c);
            for (j, out) in values.chunks_exact_mut(c).enumerate() {
                let w = masks.weights(k, (j + n_slices - m) % n_slices)?;
                pool_weights_into(&cvm.reweighted[j], w, &mut acc, out);
            }
            GlobalDescriptor::from_values(n_slices, c, values)
        })
        .collect::<Result<Vec<_>>>()?;

    let perms: Vec<Vec<usize>> = (0..n_slices)
        .map(|m| camera.rotation_permutation(m))
        .collect::<Result<_>>()?;
    let descriptors = assignment
        .par_iter()
        .map(|&(b, m)| base_descriptors[b].permuted(&perms[m]))
        .collect();
    Ok(Aggregation {
        descriptors,
        attention_evals: cvm.attention_evals,
        pooled_slices: (bases.len() * n_slices) as u64,
    })
}
