// Temporary head-training probe; will be removed.
use rand::Rng;
use reachlab::metric::{train_head, HeadTrainConfig, LabelMode};
use reachlab::nn::{self, Activation, DenseNet};
use reachlab::trajstore::{collect, CollectConfig, SamplerConfig};
use reachlab::tworoom::{EnvConfig, WorldGeometry};
use reachlab::worldmodel::{Encoder, EncoderConfig};

#[test]
#[ignore]
fn synthetic_linear_target() {
    // label = sum of |z_i - z_j| over dims: exactly the |diff| feature block
    let dim = 8;
    let mut rng = reachlab::rng::stream(1, "syn", &[]);
    let n = 4096;
    let mut feats = vec![0.0; n * 4 * dim];
    let mut targets = vec![0.0; n];
    for r in 0..n {
        let zi: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let zj: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = reachlab::metric::pair_features(&zi, &zj).unwrap();
        feats[r * 4 * dim..(r + 1) * 4 * dim].copy_from_slice(&f);
        targets[r] = f[3 * dim..].iter().sum::<f64>() / 8.0;
    }
    let mut net = DenseNet::new(
        &[4 * dim, 64, 64, 1],
        &[Activation::Silu, Activation::Silu, Activation::Softplus],
        7,
    );
    let mut opt = nn::AdamW::new(&net, 1e-3, 1e-4);
    let mut first = None;
    for step in 0..400 {
        let (loss_sum, grads) = nn::train_step_chunked(&net, &feats, n, |off, out| {
            let mut up = vec![0.0; out.len()];
            let mut loss = 0.0;
            for (i, u) in up.iter_mut().enumerate() {
                let t = targets[off + i];
                loss += nn::smooth_l1(out[i], t);
                *u = nn::smooth_l1_grad(out[i], t) / n as f64;
            }
            (loss, up)
        })
        .unwrap();
        let loss = loss_sum / n as f64;
        if first.is_none() {
            first = Some(loss);
        }
        if step % 50 == 0 {
            println!("step {step}: loss {loss:.6}");
        }
        opt.step(&mut net, &grads).unwrap();
    }
}

#[test]
#[ignore]
fn real_head_loss_trajectory() {
    let geom = WorldGeometry::default();
    let env = EnvConfig::default();
    let encoder = Encoder::create(EncoderConfig::default(), 3072).unwrap();
    let ds = collect(
        &geom,
        &env,
        &encoder,
        &CollectConfig {
            n_episodes: 200,
            ..CollectConfig::default()
        },
        3072,
    )
    .unwrap();
    let head = train_head(
        &ds,
        &SamplerConfig::balanced_full(20_000, 3072),
        LabelMode::TrueLabels,
        &HeadTrainConfig {
            epochs: 6,
            val_pairs: 2000,
            ..HeadTrainConfig::default()
        },
    )
    .unwrap();
    println!(
        "val MAE {:.4} constant {:.4} final train loss {:.6}",
        head.report.val_mae_scaled, head.report.constant_mae_scaled, head.report.final_train_loss
    );
}
