//! Desk-scale contrastive training of the toy model on synthetic pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aggregation::AttentionMlp;
use crate::error::{Error, Result};
use crate::geometry::{generate_pose_grid, CameraModel, MaskSet, Pose, PoseSet};
use crate::learning::{
    finite_diff_grad, generate_synthetic_pair, info_nce_alpha, LossConfig, SyntheticWorld,
    ToyEncoder,
};
use crate::pipeline::{ModelDims, SliceMatchModel};
use crate::tensor::{cosine_unchecked, FeatureMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub steps: usize,
    pub learning_rate: f64,
    /// Synthetic pairs averaged per step.
    pub batch: usize,
    pub c_raw: usize,
    pub c: usize,
    /// Attention MLP width; defaults to `c`.
    pub hidden: Option<usize>,
    pub height: usize,
    pub width: usize,
    pub l: usize,
    pub n_slices: usize,
    pub fov_deg: f64,
    pub max_range: Option<f64>,
    pub grid_u: usize,
    pub grid_v: usize,
    pub grid_theta: usize,
    pub supersample: usize,
    pub l_world: usize,
    pub noise_sigma: f64,
    pub aerial_extent_m: f64,
    pub fd_eps: f64,
    pub loss: LossConfig,
    /// Held-out pairs for the before/after loss and accuracy.
    pub eval_pairs: usize,
    /// Start from identity encoders instead of random ones (needs `c_raw == c`).
    pub identity_init: bool,
    pub init_scale: f32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            steps: 200,
            learning_rate: 0.01,
            batch: 1,
            c_raw: 8,
            c: 8,
            hidden: None,
            height: 4,
            width: 16,
            l: 8,
            n_slices: 4,
            fov_deg: 360.0,
            max_range: None,
            grid_u: 3,
            grid_v: 3,
            grid_theta: 4,
            supersample: 4,
            l_world: 32,
            noise_sigma: 0.05,
            aerial_extent_m: 70.0,
            fd_eps: 1e-3,
            loss: LossConfig::default(),
            eval_pairs: 24,
            identity_init: false,
            init_scale: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.camera()?;
        if self.c_raw == 0 || self.c == 0 || self.hidden() == 0 {
            return Err(Error::InvalidArgument("model dims must be positive".into()));
        }
        if self.height == 0 || self.width == 0 || self.l == 0 || self.l_world == 0 {
            return Err(Error::InvalidArgument("map dims must be positive".into()));
        }
        if self.grid_u * self.grid_v * self.grid_theta == 0 {
            return Err(Error::InvalidArgument(
                "candidate grid must be nonempty".into(),
            ));
        }
        if self.batch == 0 || self.supersample == 0 {
            return Err(Error::InvalidArgument(
                "batch and supersample must be >= 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0) || !(self.fd_eps > 0.0) {
            return Err(Error::InvalidArgument(
                "learning_rate and fd_eps must be positive".into(),
            ));
        }
        if self.identity_init && self.c_raw != self.c {
            return Err(Error::InvalidArgument(
                "identity_init requires c_raw == c".into(),
            ));
        }
        Ok(())
    }

    pub fn camera(&self) -> Result<CameraModel> {
        CameraModel::new(self.fov_deg, self.n_slices, self.max_range)
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            c_raw: self.c_raw,
            c: self.c,
            hidden: self.hidden(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden.unwrap_or(self.c)
    }
}

/// One synthetic training or evaluation example.
#[derive(Debug, Clone)]
pub struct Pair {
    pub ground: FeatureMap,
    pub aerial: FeatureMap,
    pub gt: Pose,
    /// Candidate masks followed by the ground truth pose's masks.
    pub masks: MaskSet,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub model: SliceMatchModel,
    pub loss_curve: Vec<f64>,
    pub initial_eval_loss: f64,
    pub final_eval_loss: f64,
    pub initial_accuracy: f64,
    pub final_accuracy: f64,
}

/// Machine-readable summary of a training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub steps: usize,
    pub n_params: usize,
    pub loss_curve: Vec<f64>,
    pub initial_eval_loss: f64,
    pub final_eval_loss: f64,
    pub initial_accuracy: f64,
    pub final_accuracy: f64,
}

impl TrainResult {
    pub fn report(&self, cfg: &TrainConfig) -> TrainReport {
        TrainReport {
            seed: cfg.seed,
            steps: cfg.steps,
            n_params: cfg.dims().n_params(),
            loss_curve: self.loss_curve.clone(),
            initial_eval_loss: self.initial_eval_loss,
            final_eval_loss: self.final_eval_loss,
            initial_accuracy: self.initial_accuracy,
            final_accuracy: self.final_accuracy,
        }
    }
}

/// Model at its configured initialization.
pub fn init_model(cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<SliceMatchModel> {
    let camera = cfg.camera()?;
    let (ge, ae) = if cfg.identity_init {
        (ToyEncoder::identity(cfg.c), ToyEncoder::identity(cfg.c))
    } else {
        (
            ToyEncoder::random(cfg.c_raw, cfg.c, rng),
            ToyEncoder::random(cfg.c_raw, cfg.c, rng),
        )
    };
    let gm = AttentionMlp::random(cfg.c, cfg.hidden(), cfg.init_scale, rng);
    let am = AttentionMlp::random(cfg.c + 1, cfg.hidden(), cfg.init_scale, rng);
    SliceMatchModel::new(camera, ge, ae, gm, am)
}

/// Draws a fresh world and a ground truth pose, on the candidate grid when
/// `on_grid` is set and uniform otherwise.
pub fn sample_pair(
    cfg: &TrainConfig,
    candidates: &PoseSet,
    base_masks: &MaskSet,
    on_grid: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Pair> {
    let world = SyntheticWorld::random(
        rng.random(),
        cfg.l_world,
        cfg.c_raw,
        cfg.aerial_extent_m,
        cfg.noise_sigma,
    )?;
    let gt = if on_grid {
        candidates.poses()[rng.random_range(0..candidates.len())]
    } else {
        Pose::new(
            rng.random_range(0.0..1.0),
            rng.random_range(0.0..1.0),
            rng.random_range(0.0..360.0),
        )?
    };
    let (ground, aerial) = generate_synthetic_pair(
        &world,
        &gt,
        base_masks.camera(),
        cfg.height,
        cfg.width,
        cfg.l,
    )?;
    let mut masks = base_masks.clone();
    masks.insert_pose(&gt)?;
    Ok(Pair {
        ground,
        aerial,
        gt,
        masks,
    })
}

/// Contrastive loss of one pair; the last mask-set pose is the ground truth.
pub fn pair_loss(model: &SliceMatchModel, pair: &Pair, loss: &LossConfig) -> Result<f64> {
    let fwd = model.forward(&pair.ground, &pair.aerial, &pair.masks)?;
    let g = fwd.ground.values();
    let ds = &fwd.aggregation.descriptors;
    let (gt, cands) = ds
        .split_last()
        .ok_or(Error::Empty("candidate descriptors"))?;
    let c: Vec<f64> = cands
        .iter()
        .map(|d| cosine_unchecked(g, d.values()) as f64)
        .collect();
    info_nce_alpha(cosine_unchecked(g, gt.values()) as f64, &c, loss)
}

pub fn mean_loss(model: &SliceMatchModel, pairs: &[Pair], loss: &LossConfig) -> Result<f64> {
    let mut total = 0.0;
    for p in pairs {
        total += pair_loss(model, p, loss)?;
    }
    Ok(total / pairs.len().max(1) as f64)
}

/// Fraction of pairs whose best candidate is exactly the ground truth pose.
pub fn top1_accuracy(model: &SliceMatchModel, pairs: &[Pair], candidates: &PoseSet) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("evaluation pairs"));
    }
    let k = candidates.len();
    let mut hits = 0usize;
    for p in pairs {
        let fwd = model.forward(&p.ground, &p.aerial, &p.masks)?;
        let g = fwd.ground.values();
        let scores: Vec<f32> = fwd.aggregation.descriptors[..k]
            .iter()
            .map(|d| cosine_unchecked(g, d.values()))
            .collect();
        let best = (1..k).fold(0, |b, i| if scores[i] > scores[b] { i } else { b });
        if candidates.poses()[best] == p.gt {
            hits += 1;
        }
    }
    Ok(hits as f64 / pairs.len() as f64)
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

/// Candidate grid, its masks, and the held-out evaluation pairs for `cfg`.
pub fn setup(cfg: &TrainConfig) -> Result<(PoseSet, MaskSet, Vec<Pair>)> {
    cfg.validate()?;
    let candidates = generate_pose_grid(cfg.grid_u, cfg.grid_v, cfg.grid_theta, None)?;
    let masks = MaskSet::precompute(cfg.camera()?, &candidates, cfg.l, cfg.supersample)?;
    let mut eval_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xE7A1_0000_0000_0001);
    let eval = (0..cfg.eval_pairs)
        .map(|_| sample_pair(cfg, &candidates, &masks, true, &mut eval_rng))
        .collect::<Result<Vec<_>>>()?;
    Ok((candidates, masks, eval))
}

/// Trains the encoders and attention MLPs with finite-difference Adam.
pub fn train_toy(cfg: &TrainConfig) -> Result<TrainResult> {
    let (candidates, masks, eval) = setup(cfg)?;
    let camera = cfg.camera()?;
    let dims = cfg.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = init_model(cfg, &mut rng)?;

    let (initial_eval_loss, initial_accuracy) = if eval.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (
            mean_loss(&model, &eval, &cfg.loss)?,
            top1_accuracy(&model, &eval, &candidates)?,
        )
    };

    let mut params: Vec<f64> = model.to_params().iter().map(|&x| x as f64).collect();
    let mut adam = Adam::new(params.len(), cfg.learning_rate);
    let mut loss_curve = Vec::with_capacity(cfg.steps);
    let objective = |p: &[f64], batch: &[Pair]| -> f64 {
        let p32: Vec<f32> = p.iter().map(|&x| x as f32).collect();
        SliceMatchModel::from_params(camera, dims, &p32)
            .and_then(|m| mean_loss(&m, batch, &cfg.loss))
            .unwrap_or(f64::NAN)
    };

    for step in 0..cfg.steps {
        let batch = (0..cfg.batch)
            .map(|_| sample_pair(cfg, &candidates, &masks, false, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let loss = objective(&params, &batch);
        if !loss.is_finite() {
            return Err(Error::Diverged(step));
        }
        loss_curve.push(loss);
        let grad = finite_diff_grad(|p| objective(p, &batch), &params, cfg.fd_eps)
            .map_err(|_| Error::Diverged(step))?;
        adam.step(&mut params, &grad);
    }

    let p32: Vec<f32> = params.iter().map(|&x| x as f32).collect();
    let model = if cfg.steps == 0 {
        model
    } else {
        SliceMatchModel::from_params(camera, dims, &p32).map_err(|_| Error::Diverged(cfg.steps))?
    };
    let (final_eval_loss, final_accuracy) = if eval.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (
            mean_loss(&model, &eval, &cfg.loss)?,
            top1_accuracy(&model, &eval, &candidates)?,
        )
    };
    Ok(TrainResult {
        model,
        loss_curve,
        initial_eval_loss,
        final_eval_loss,
        initial_accuracy,
        final_accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TrainConfig {
        TrainConfig {
            steps: 3,
            eval_pairs: 2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_steps_keeps_params() {
        let cfg = TrainConfig {
            steps: 0,
            ..small()
        };
        let r = train_toy(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        assert_eq!(r.model, init_model(&cfg, &mut rng).unwrap());
        assert!(r.loss_curve.is_empty());
        assert_eq!(r.initial_eval_loss, r.final_eval_loss);
    }

    #[test]
    fn reproducible() {
        let a = train_toy(&small()).unwrap();
        let b = train_toy(&small()).unwrap();
        assert_eq!(a.loss_curve, b.loss_curve);
        assert_eq!(a.model, b.model);
        assert_eq!(a.loss_curve.len(), 3);
        assert!(a.loss_curve.iter().all(|l| l.is_finite() && *l > 0.0));
    }

    #[test]
    fn config_json_defaults() {
        let cfg: TrainConfig = serde_json::from_str(r#"{"seed": 7, "steps": 5}"#).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.c_raw, 8);
        assert_eq!(cfg.hidden(), 8);
        assert_eq!(cfg.dims().n_params(), 2 * 72 + 81 + 89);
        assert!(TrainConfig {
            identity_init: true,
            c_raw: 5,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut adam = Adam::new(2, 0.1);
        let mut p = vec![1.0, -1.0];
        adam.step(&mut p, &[2.0, -3.0]);
        assert!((p[0] - 0.9).abs() < 1e-9 && (p[1] + 0.9).abs() < 1e-9);
    }
}
