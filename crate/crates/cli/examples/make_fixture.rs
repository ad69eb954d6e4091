//! Regenerates `tests/fixtures/toy` from the synthetic world.
//!
//! cargo run -p slicematch-cli --example make_fixture

use std::path::Path;

use slicematch::aggregation::AttentionMlp;
use slicematch::geometry::{generate_pose_grid, CameraModel};
use slicematch::learning::{generate_synthetic_pair, SyntheticWorld, ToyEncoder};
use slicematch::smtf::{write_feature_map, Tensor};

fn main() -> slicematch::error::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/toy");
    std::fs::create_dir_all(&dir)?;
    let (c, l) = (8, 16);
    let camera = CameraModel::panoramic(8)?;
    let grid = generate_pose_grid(5, 5, 8, None)?;
    let gt = grid.poses()[grid.grid_index(3, 1, 2).expect("on grid")];
    let world = SyntheticWorld::random(2024, 32, c, 70.0, 0.0)?;
    let (ground, aerial) = generate_synthetic_pair(&world, &gt, &camera, 2, 32, l)?;
    write_feature_map(&ground, dir.join("ground.smtf"))?;
    write_feature_map(&aerial, dir.join("aerial.smtf"))?;

    ToyEncoder::identity(c)
        .to_tensor()
        .write(dir.join("aerial_encoder.smtf"))?;
    let p = AttentionMlp::zeros(c + 1, c).to_params();
    Tensor::new(vec![p.len()], p)?.write(dir.join("aerial_attention.smtf"))?;

    let config = serde_json::json!({
        "camera": camera,
        "grid": { "n_u": 5, "n_v": 5, "n_theta": 8 },
        "mask_size": l,
        "supersample": 4,
        "channels": c,
        "model": {
            "aerial_encoder": "aerial_encoder.smtf",
            "aerial_attention": "aerial_attention.smtf"
        }
    });
    std::fs::write(
        dir.join("config.json"),
        serde_json::to_string_pretty(&config).expect("json") + "\n",
    )?;
    std::fs::write(
        dir.join("gt.json"),
        serde_json::to_string_pretty(&gt).expect("json") + "\n",
    )?;
    println!("fixture written to {}", dir.display());
    Ok(())
}
