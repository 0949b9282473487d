use std::sync::Arc;

use proptest::prelude::*;
use rand::Rng;
use reachlab::metric::*;
use reachlab::rng::stream;
use reachlab::tworoom::WorldGeometry;
use reachlab::worldmodel::XYProbe;

fn random_probe(seed: u64, ld: usize) -> XYProbe {
    let mut rng = stream(seed, "probe", &[]);
    let w: Vec<f64> = (0..2 * ld).map(|_| rng.random_range(-1.0..1.0)).collect();
    XYProbe {
        w,
        b: [0.0, 0.0],
        latent_dim: ld,
        fit_r2: 1.0,
        fit_rmse: 0.0,
        n_train: 0,
        n_test: 0,
        ridge: 1e-6,
    }
}

#[test]
fn projector_identities_on_random_probes() {
    for seed in 0..20 {
        let probe = random_probe(seed, 32);
        let p = build_projection(&probe, ProjectionMode::Rowspace).unwrap();
        let q = build_projection(&probe, ProjectionMode::Residual).unwrap();
        assert!(p.idempotence_error() < 1e-8, "seed {seed}");
        assert!(q.idempotence_error() < 1e-8, "seed {seed}");
        assert!((p.trace() - 2.0).abs() < 1e-8);
        assert!((q.trace() - 30.0).abs() < 1e-8);
    }
}

#[test]
fn decomposition_identity_rowspace_plus_residual_equals_raw() {
    // acceptance: exact to 1e-8 per candidate
    let geom = WorldGeometry::default();
    let probe = random_probe(7, 32);
    let rowspace = Arc::new(build_projection(&probe, ProjectionMode::Rowspace).unwrap());
    let residual = Arc::new(build_projection(&probe, ProjectionMode::Residual).unwrap());
    let raw = TerminalCost::new(CostKind::RawMse, geom);
    let row_cost = TerminalCost::new(CostKind::RowspaceMse, geom)
        .with_probe(Arc::new(probe.clone()))
        .with_projection(rowspace);
    let res_cost = TerminalCost::new(CostKind::ResidualMse, geom)
        .with_probe(Arc::new(probe))
        .with_projection(residual);

    let mut rng = stream(8, "cands", &[]);
    let n = 64;
    let terminals: Vec<f64> = (0..n * 32).map(|_| rng.random_range(-10.0..10.0)).collect();
    let z_g: Vec<f64> = (0..32).map(|_| rng.random_range(-10.0..10.0)).collect();
    let (a, _) = raw.score_candidates(&terminals, n, &z_g, None, true).unwrap();
    let (b, _) = row_cost.score_candidates(&terminals, n, &z_g, None, true).unwrap();
    let (c, _) = res_cost.score_candidates(&terminals, n, &z_g, None, true).unwrap();
    for i in 0..n {
        assert!(
            (b[i] + c[i] - a[i]).abs() <= 1e-8,
            "candidate {i}: {} + {} != {}",
            b[i],
            c[i],
            a[i]
        );
    }
}

#[test]
fn hybrid_argmin_invariant_under_positive_scaling() {
    // acceptance: 1000 random batches, argmin unchanged when either
    // component is rescaled by any positive constant
    let mut rng = stream(9, "hybrid", &[]);
    let eps = 1e-8;
    let standardize = |xs: &[f64]| {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
        let s = v.sqrt();
        xs.iter().map(|x| (x - m) / (s + eps)).collect::<Vec<f64>>()
    };
    let argmin = |xs: &[f64]| {
        let mut best = 0;
        for (i, v) in xs.iter().enumerate() {
            if *v < xs[best] {
                best = i;
            }
        }
        best
    };
    for trial in 0..1000 {
        let n = rng.random_range(4..40);
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..100.0)).collect();
        let trm: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let lambda = rng.random_range(0.1..3.0);
        let hybrid = |r: &[f64], t: &[f64]| {
            let rs = standardize(r);
            let ts = standardize(t);
            rs.iter()
                .zip(&ts)
                .map(|(a, b)| a + lambda * b)
                .collect::<Vec<f64>>()
        };
        let base = argmin(&hybrid(&raw, &trm));
        let c1 = rng.random_range(0.01..50.0);
        let c2 = rng.random_range(0.01..50.0);
        let raw2: Vec<f64> = raw.iter().map(|v| v * c1).collect();
        let trm2: Vec<f64> = trm.iter().map(|v| v * c2).collect();
        assert_eq!(base, argmin(&hybrid(&raw2, &trm)), "trial {trial} raw scale");
        assert_eq!(base, argmin(&hybrid(&raw, &trm2)), "trial {trial} trm scale");
    }
}

#[test]
fn hybrid_degenerate_batch_falls_back_and_flags() {
    use reachlab::nn::{Activation, DenseNet};
    use reachlab::trajstore::{SamplerConfig, SamplerRegime};

    let geom = WorldGeometry::default();
    // constant-output head: softplus of fixed bias, zero weights
    let mut net = DenseNet::new(
        &[8, 4, 1],
        &[Activation::Silu, Activation::Softplus],
        3,
    );
    for l in net.layers.iter_mut() {
        l.w_t.iter_mut().for_each(|w| *w = 0.0);
    }
    let head = PairHead {
        net,
        scale: 224.0,
        feature_scale: 1.0,
        label_mode: LabelMode::TrueLabels,
        sampler: SamplerConfig {
            regime: SamplerRegime::BalancedFull,
            delta_max: 0,
            n_pairs: 1,
            bins: 1,
            source_rows: None,
            shuffle_labels: false,
            seed: 0,
        },
        report: HeadReport {
            val_mae_scaled: 0.0,
            val_rmse_steps: 0.0,
            constant_mae_scaled: 0.0,
            train_pairs: 0,
            steps: 0,
            final_train_loss: 0.0,
        },
    };
    let cost = TerminalCost::new(CostKind::Hybrid, geom).with_head(Arc::new(head));
    let terminals = [1.0, 0.0, 2.0, 0.0]; // two 2-d candidates, raw varies
    let z_g = [0.0, 0.0];
    let (costs, flags) = cost.score_candidates(&terminals, 2, &z_g, None, true).unwrap();
    assert!(flags.degenerate_hybrid, "constant head must flag the batch");
    // falls back to standardized raw alone: ordering preserved
    assert!(costs[0] < costs[1]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pair_features_block_structure(zi in proptest::collection::vec(-50.0f64..50.0, 1..24),
                                     scale in 0.1f64..100.0) {
        let zj: Vec<f64> = zi.iter().map(|v| v * scale % 7.0).collect();
        let f = pair_features(&zi, &zj).unwrap();
        let d = zi.len();
        prop_assert_eq!(f.len(), 4 * d);
        for k in 0..d {
            prop_assert_eq!(f[2 * d + k], zi[k] - zj[k]);
            prop_assert_eq!(f[3 * d + k], (zi[k] - zj[k]).abs());
            prop_assert!(f[3 * d + k] >= 0.0);
        }
    }

    #[test]
    fn rowspace_share_bounded(seed in 0u64..50) {
        let probe = random_probe(seed, 16);
        let p = build_projection(&probe, ProjectionMode::Rowspace).unwrap();
        let mut rng = stream(seed, "share", &[]);
        let diffs: Vec<Vec<f64>> = (0..32)
            .map(|_| (0..16).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let share = rowspace_share(&diffs, &p).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&share));
    }
}
