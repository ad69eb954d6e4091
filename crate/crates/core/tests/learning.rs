use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use slicematch::learning::{finite_diff_grad, pair_loss, setup, top1_accuracy, ToyEncoder};
use slicematch::{AttentionMlp, SliceMatchModel, TrainConfig};

fn noiseless(seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        noise_sigma: 0.0,
        eval_pairs: 40,
        ..TrainConfig::default()
    }
}

#[test]
fn identity_encoders_localize_before_training() {
    for seed in 0..3 {
        let cfg = noiseless(seed);
        let (candidates, _, pairs) = setup(&cfg).unwrap();
        let model = SliceMatchModel::geometric(cfg.camera().unwrap(), cfg.c, cfg.hidden()).unwrap();
        let acc = top1_accuracy(&model, &pairs, &candidates).unwrap();
        assert!(acc >= 0.95, "seed {seed}: top-1 {acc}");
    }
}

#[test]
fn encoder_gradient_is_finite() {
    // 5 -> 4 encoder: 24 parameters
    let cfg = TrainConfig {
        c_raw: 5,
        c: 4,
        eval_pairs: 1,
        ..noiseless(9)
    };
    let (_, _, pairs) = setup(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let camera = cfg.camera().unwrap();
    let aerial = ToyEncoder::random(5, 4, &mut rng);
    let gm = AttentionMlp::random(4, 4, 0.5, &mut rng);
    let am = AttentionMlp::random(5, 4, 0.5, &mut rng);
    let init: Vec<f64> = ToyEncoder::random(5, 4, &mut rng)
        .to_params()
        .iter()
        .map(|&x| x as f64)
        .collect();
    let f = |p: &[f64]| {
        let p: Vec<f32> = p.iter().map(|&x| x as f32).collect();
        let ge = ToyEncoder::from_params(5, 4, &p).unwrap();
        let m = SliceMatchModel::new(camera, ge, aerial.clone(), gm.clone(), am.clone()).unwrap();
        pair_loss(&m, &pairs[0], &cfg.loss).unwrap()
    };
    let g = finite_diff_grad(f, &init, 1e-3).unwrap();
    assert_eq!(g.len(), 24);
    assert!(g.iter().all(|x| x.is_finite()));
    assert!(g.iter().any(|&x| x != 0.0));
}
