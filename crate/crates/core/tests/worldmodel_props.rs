use rand::Rng;
use reachlab::rng::stream;
use reachlab::trajstore::{collect, CollectConfig};
use reachlab::tworoom::{Action, AgentState, EnvConfig, WorldGeometry};
use reachlab::worldmodel::*;

fn small_stack() -> (WorldGeometry, EnvConfig, Encoder, reachlab::trajstore::Dataset) {
    let geom = WorldGeometry::default();
    let env = EnvConfig::default();
    let encoder = Encoder::create(EncoderConfig::default(), 61).unwrap();
    let ds = collect(
        &geom,
        &env,
        &encoder,
        &CollectConfig {
            n_episodes: 40,
            length: 64,
            min_crossing_fraction: 0.0,
            ..CollectConfig::default()
        },
        61,
    )
    .unwrap();
    (geom, env, encoder, ds)
}

fn small_dynamics(ds: &reachlab::trajstore::Dataset) -> (DynamicsModel, DynamicsReport) {
    train_dynamics(
        ds,
        &DynamicsConfig {
            hidden: 32,
            train_steps: 300,
            holdout_episodes: 4,
            ..DynamicsConfig::default()
        },
        61,
    )
    .unwrap()
}

#[test]
fn rollout_identities_and_associativity() {
    let (_, _, _, ds) = small_stack();
    let (dynamics, _) = small_dynamics(&ds);
    let z0 = ds.latent_f64(0, 0);

    // H = 0 returns z0 unchanged
    assert_eq!(dynamics.rollout(&z0, &[]), z0);

    // H = 1 equals one forward call
    let a = Action::new(3.0, -2.0);
    let mut one = Vec::new();
    dynamics.one_step_batch(&z0, &[a.dx, a.dy], 1, &mut one);
    assert_eq!(dynamics.rollout(&z0, &[a]), one);

    // rollout(z, A ++ B) == rollout(rollout(z, A), B) exactly
    let mut rng = stream(62, "acts", &[]);
    let seq: Vec<Action> = (0..12)
        .map(|_| Action::new(rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0)))
        .collect();
    let full = dynamics.rollout(&z0, &seq);
    let mid = dynamics.rollout(&z0, &seq[..5]);
    let composed = dynamics.rollout(&mid, &seq[5..]);
    assert_eq!(full, composed);
}

#[test]
fn rollout_batch_matches_sequential_and_is_chunk_invariant() {
    let (_, _, _, ds) = small_stack();
    let (dynamics, _) = small_dynamics(&ds);
    let n = 70; // crosses the internal chunk boundary
    let h = 6;
    let mut rng = stream(63, "batch", &[]);
    let mut z0 = Vec::new();
    let mut acts = Vec::new();
    for i in 0..n {
        z0.extend(ds.latent_f64(i % 8, i % 30));
        for _ in 0..h {
            acts.push(rng.random_range(-8.0..8.0));
            acts.push(rng.random_range(-8.0..8.0));
        }
    }
    let batch = dynamics.rollout_batch(&z0, &acts, n, h);
    for i in 0..n {
        let seq: Vec<Action> = (0..h)
            .map(|k| Action::new(acts[(i * h + k) * 2], acts[(i * h + k) * 2 + 1]))
            .collect();
        let single = dynamics.rollout(&z0[i * 32..(i + 1) * 32], &seq);
        assert_eq!(&batch[i * 32..(i + 1) * 32], single.as_slice(), "row {i}");
    }
}

#[test]
fn dynamics_training_is_deterministic() {
    let (_, _, _, ds) = small_stack();
    let (m1, r1) = small_dynamics(&ds);
    let (m2, r2) = small_dynamics(&ds);
    assert_eq!(r1.val_rmse, r2.val_rmse);
    for (a, b) in m1.net.layers.iter().zip(&m2.net.layers) {
        assert_eq!(a.w_t, b.w_t);
    }
}

#[test]
fn probe_recovers_exact_positions() {
    let (_, _, encoder, ds) = small_stack();
    let probe = fit_probe(&ds, 1500, 500, 1e-6, 61).unwrap();
    assert!(probe.fit_r2 >= 0.999, "R2 {}", probe.fit_r2);
    assert!(probe.fit_rmse <= 1.0, "RMSE {}", probe.fit_rmse);

    // decode a fresh encoding of a known state
    let mut rng = stream(64, "probe", &[]);
    for _ in 0..32 {
        let s = AgentState::new(rng.random_range(5.0..219.0), rng.random_range(5.0..219.0));
        let n = encoder.nuisance_init(&mut rng);
        let z = encoder.encode(s, &n);
        let d = probe.decode(&z);
        assert!(d.dist(&s) <= 0.5, "decoded {d:?} vs {s:?}");
    }
    assert!(probe.min_singular_value() > 1e-9);
}

#[test]
fn bundle_round_trips_and_detects_tampering() {
    let (_, _, encoder, ds) = small_stack();
    let (dynamics, report) = small_dynamics(&ds);
    let probe = fit_probe(&ds, 1000, 300, 1e-6, 61).unwrap();
    let bundle = WorldModelBundle {
        encoder,
        dynamics,
        dynamics_report: report,
        probe,
        freeze_hash: String::new(),
    };
    let dir = tempfile::tempdir().unwrap();
    bundle.save(dir.path()).unwrap();
    let loaded = WorldModelBundle::load(dir.path()).unwrap();
    assert_eq!(loaded.encoder.mixing, bundle.encoder.mixing);
    for (a, b) in loaded
        .dynamics
        .net
        .layers
        .iter()
        .zip(&bundle.dynamics.net.layers)
    {
        assert_eq!(a.w_t, b.w_t);
    }

    // flip one byte of the dynamics checkpoint: load must fail the freeze hash
    let ckpt_path = dir.path().join("dynamics.ckpt");
    let mut bytes = std::fs::read(&ckpt_path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0xff;
    std::fs::write(&ckpt_path, bytes).unwrap();
    let err = WorldModelBundle::load(dir.path()).unwrap_err();
    assert!(matches!(err, reachlab::Error::HashMismatch { .. }));
}

#[test]
fn encoder_nuisance_modulation_varies_with_position() {
    let enc = Encoder::create(EncoderConfig::default(), 5).unwrap();
    let g_center = enc.modulation(AgentState::new(56.0, 56.0));
    let g_corner = enc.modulation(AgentState::new(56.0, 168.0));
    assert!((g_center - g_corner).abs() > 0.1);
    let amp = enc.cfg.mod_amp;
    for i in 0..100 {
        let s = AgentState::new((i * 7 % 224) as f64, (i * 13 % 224) as f64);
        let g = enc.modulation(s);
        assert!(g >= 1.0 - amp - 1e-12 && g <= 1.0 + amp + 1e-12);
    }
}
