//! JSON configuration files read by the subcommands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use slicematch::aggregation::AttentionMlp;
use slicematch::error::{Error, Result};
use slicematch::geometry::{generate_pose_grid, CameraModel, OrientationPrior, PoseSet};
use slicematch::learning::ToyEncoder;
use slicematch::pipeline::SliceMatchModel;
use slicematch::smtf::Tensor;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    pub n_u: usize,
    pub n_v: usize,
    pub n_theta: usize,
    #[serde(default)]
    pub prior: Option<OrientationPrior>,
}

impl GridConfig {
    pub fn poses(&self) -> Result<PoseSet> {
        generate_pose_grid(self.n_u, self.n_v, self.n_theta, self.prior)
    }
}

/// Parameter files are SMTF tensors, resolved relative to the config file.
/// Missing encoders default to identity, missing attention MLPs to zeros.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelFiles {
    pub ground_encoder: Option<PathBuf>,
    pub aerial_encoder: Option<PathBuf>,
    pub ground_attention: Option<PathBuf>,
    pub aerial_attention: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchConfig {
    pub camera: CameraModel,
    pub grid: GridConfig,
    pub mask_size: usize,
    #[serde(default = "default_supersample")]
    pub supersample: usize,
    /// Feature channels after encoding.
    pub channels: usize,
    /// Attention MLP width; defaults to `channels`.
    #[serde(default)]
    pub hidden: Option<usize>,
    #[serde(default)]
    pub model: ModelFiles,
}

fn default_supersample() -> usize {
    8
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

impl MatchConfig {
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let cfg: Self = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok((cfg, base))
    }

    pub fn model(&self, base: &Path) -> Result<SliceMatchModel> {
        let c = self.channels;
        let load = |p: &Option<PathBuf>| -> Result<Option<Tensor>> {
            p.as_ref().map(|p| Tensor::read(base.join(p))).transpose()
        };
        let encoder = |p: &Option<PathBuf>| -> Result<ToyEncoder> {
            match load(p)? {
                Some(t) => ToyEncoder::from_tensor(&t),
                None => Ok(ToyEncoder::identity(c)),
            }
        };
        let mlp = |p: &Option<PathBuf>, c_in: usize| -> Result<AttentionMlp> {
            match load(p)? {
                Some(t) if t.dims.len() == 1 => AttentionMlp::from_flat(c_in, &t.data),
                Some(t) => Err(Error::Format(format!(
                    "attention parameters must be a 1-D tensor, got {:?}",
                    t.dims
                ))),
                None => Ok(AttentionMlp::zeros(c_in, self.hidden.unwrap_or(c))),
            }
        };
        SliceMatchModel::new(
            self.camera,
            encoder(&self.model.ground_encoder)?,
            encoder(&self.model.aerial_encoder)?,
            mlp(&self.model.ground_attention, c)?,
            mlp(&self.model.aerial_attention, c + 1)?,
        )
    }
}

/// Writes the four parameter tensors of `model` into `dir`.
pub fn write_model(model: &SliceMatchModel, dir: &Path) -> Result<ModelFiles> {
    std::fs::create_dir_all(dir)?;
    let files = ModelFiles {
        ground_encoder: Some("ground_encoder.smtf".into()),
        aerial_encoder: Some("aerial_encoder.smtf".into()),
        ground_attention: Some("ground_attention.smtf".into()),
        aerial_attention: Some("aerial_attention.smtf".into()),
    };
    let flat = |m: &AttentionMlp| {
        let p = m.to_params();
        Tensor::new(vec![p.len()], p)
    };
    model
        .ground_encoder
        .to_tensor()
        .write(dir.join("ground_encoder.smtf"))?;
    model
        .aerial_encoder
        .to_tensor()
        .write(dir.join("aerial_encoder.smtf"))?;
    flat(&model.ground_attention)?.write(dir.join("ground_attention.smtf"))?;
    flat(&model.aerial_attention)?.write(dir.join("aerial_attention.smtf"))?;
    Ok(files)
}
