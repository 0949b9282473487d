mod common;

use rand::Rng;
use reachlab::audit::*;
use reachlab::metric::{CostKind, TerminalCost};
use reachlab::planner::*;
use reachlab::rng::stream;
use reachlab::trajstore::{collect, CollectConfig};
use reachlab::tworoom::*;
use reachlab::worldmodel::*;

fn tiny_bundle() -> (WorldGeometry, EnvConfig, WorldModelBundle) {
    let geom = WorldGeometry::default();
    let env = EnvConfig::default();
    let encoder = Encoder::create(EncoderConfig::default(), 71).unwrap();
    let ds = collect(
        &geom,
        &env,
        &encoder,
        &CollectConfig {
            n_episodes: 30,
            length: 64,
            min_crossing_fraction: 0.0,
            ..CollectConfig::default()
        },
        71,
    )
    .unwrap();
    let (dynamics, report) = train_dynamics(
        &ds,
        &DynamicsConfig {
            hidden: 32,
            train_steps: 200,
            holdout_episodes: 3,
            ..DynamicsConfig::default()
        },
        71,
    )
    .unwrap();
    let probe = fit_probe(&ds, 1000, 300, 1e-6, 71).unwrap();
    (
        geom,
        env,
        WorldModelBundle {
            encoder,
            dynamics,
            dynamics_report: report,
            probe,
            freeze_hash: String::new(),
        },
    )
}

fn spec(start: AgentState, goal: AgentState, geom: &WorldGeometry) -> EpisodeSpec {
    EpisodeSpec {
        start,
        goal,
        topology_class: if opposite_sides(start.x, goal.x, geom) {
            TopologyClass::CrossWall
        } else {
            TopologyClass::SameRoom
        },
        euclid: start.dist(&goal),
        geodesic: geodesic(start, goal, geom),
    }
}

fn fast_cem(seed: u64) -> CEMConfig {
    CEMConfig {
        n_samples: 48,
        n_iters: 4,
        top_k: 8,
        horizon: 12,
        init_std: 4.0,
        min_std: 0.5,
        replan_block: 1,
        seed,
    }
}

#[test]
fn goal_at_start_succeeds_with_zero_steps() {
    let (geom, env, bundle) = tiny_bundle();
    let cost = TerminalCost::new(CostKind::OracleEuclid, geom);
    let s = spec(AgentState::new(50.0, 50.0), AgentState::new(50.0, 50.0), &geom);
    let (out, trace, _) = run_episode(
        &s, &cost, &bundle, &geom, &env, &fast_cem(1), 50, 11, false, false,
    )
    .unwrap();
    assert!(out.success);
    assert!(trace.replans.is_empty());
}

#[test]
fn budget_zero_fails_at_start() {
    let (geom, env, bundle) = tiny_bundle();
    let cost = TerminalCost::new(CostKind::RawMse, geom);
    let mut m = generate_manifest(ManifestKind::Balanced40, &geom, 3).unwrap();
    m.specs.truncate(4);
    let res = evaluate_manifest(&m, &cost, &bundle, &env, &fast_cem(2), 0, 5, true).unwrap();
    assert!(res.rows.iter().all(|r| !r.success && r.steps_used == 0));
    // failure classes partition the episodes
    let agg = &res.aggregate;
    let total = agg.success_pct
        + agg.wrong_room_pct
        + agg.stuck_at_wall_pct
        + agg.same_room_not_precise_pct
        + agg.crossed_door_not_precise_pct;
    assert!((total - 100.0).abs() < 1e-9);
}

#[test]
fn oracle_reaches_easy_same_room_goal() {
    let (geom, env, bundle) = tiny_bundle();
    let cost = TerminalCost::new(CostKind::OracleEuclid, geom);
    let s = spec(AgentState::new(40.0, 40.0), AgentState::new(80.0, 120.0), &geom);
    let (out, _, _) = run_episode(
        &s, &cost, &bundle, &geom, &env, &fast_cem(3), 50, 17, false, false,
    )
    .unwrap();
    assert!(out.success, "final {:?}", out.final_state);
}

#[test]
fn deployment_mode_refuses_oracle_in_closed_loop() {
    let (geom, env, bundle) = tiny_bundle();
    let cost = TerminalCost::new(CostKind::OracleEuclid, geom);
    let s = spec(AgentState::new(40.0, 40.0), AgentState::new(80.0, 120.0), &geom);
    let err = run_episode(
        &s, &cost, &bundle, &geom, &env, &fast_cem(4), 50, 17, true, false,
    )
    .unwrap_err();
    assert!(matches!(err, reachlab::Error::OracleRefused(_)));
}

#[test]
fn evaluation_is_worker_count_invariant() {
    let (geom, env, bundle) = tiny_bundle();
    let cost = TerminalCost::new(CostKind::RawMse, geom);
    let mut m = generate_manifest(ManifestKind::Balanced40, &geom, 5).unwrap();
    m.specs.truncate(6);
    let run_with = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            evaluate_manifest(&m, &cost, &bundle, &env, &fast_cem(6), 10, 9, true).unwrap()
        })
    };
    let a = run_with(1);
    let b = run_with(4);
    assert_eq!(
        serde_json::to_string(&a.rows).unwrap(),
        serde_json::to_string(&b.rows).unwrap()
    );
}

#[test]
fn spearman_matches_brute_force_on_random_lists() {
    // acceptance: exact agreement with the brute-force oracle on 10^4
    // randomized lists with and without ties
    let mut rng = stream(91, "spearman", &[]);
    for trial in 0..10_000 {
        let n = rng.random_range(2..24);
        let tie_prone = trial % 2 == 0;
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 {
            if tie_prone {
                rng.random_range(0..5) as f64
            } else {
                rng.random_range(-100.0..100.0)
            }
        };
        let a: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let b: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let fast = spearman(&a, &b).ok();
        let slow = common::brute_force_spearman(&a, &b);
        match (fast, slow) {
            (None, None) => {}
            (Some(x), Some(y)) => {
                assert!((x - y).abs() < 1e-12, "trial {trial}: {x} vs {y}")
            }
            other => panic!("trial {trial}: defined-ness mismatch {other:?}"),
        }
        // derived example from the rank construction
        if n >= 3 {
            let ranks = average_ranks(&a);
            let brute = common::brute_force_ranks(&a);
            for (x, y) in ranks.iter().zip(&brute) {
                assert_eq!(x, y);
            }
        }
    }
}

#[test]
fn spearman_tied_example_value() {
    let r = spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
    assert!((r - 3.0f64.sqrt() / 2.0).abs() < 1e-12);
}

#[test]
fn scsa_oracle_selector_is_perfect_and_transform_invariant() {
    let (geom, env, bundle) = tiny_bundle();
    let mut m = generate_manifest(ManifestKind::Hard100, &geom, 7).unwrap();
    let mut specs = Vec::new();
    specs.extend(m.specs[..4].iter().cloned());
    specs.extend(m.specs[50..54].iter().cloned());
    m.specs = specs;
    let base = TerminalCost::new(CostKind::RawMse, geom);
    let cem = fast_cem(8);
    let pools = first_replan_pools(&m, &base, &bundle, &env, &cem, 13).unwrap();
    assert_eq!(pools.len(), 8);

    // selector == oracle euclid: spearman 1.0 vs euclid, best rank 0
    let oracle = TerminalCost::new(CostKind::OracleEuclid, geom);
    let (eps, stats) = scsa_audit(&pools, "oracle", &oracle, &geom, &env, 1).unwrap();
    assert_eq!(eps.len(), 8);
    assert!((stats.spearman_euclid.unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(stats.best_rank_pct, 0.0);

    // a positive monotone transform of raw mse gives identical rank stats
    let raw_stats = scsa_audit(&pools, "raw", &base, &geom, &env, 1).unwrap().1;
    // recompute raw costs transformed: exp(0.3 * sqrt(c)) is strictly increasing
    let mut transformed = Vec::new();
    for sp in &pools {
        let (c, _) = base
            .score_candidates(&sp.pool.terminals, sp.pool.n, &sp.z_goal, None, true)
            .unwrap();
        let t: Vec<f64> = c.iter().map(|v| (0.3 * v.sqrt()).exp()).collect();
        let ce: Vec<f64> = sp
            .pool
            .true_terminals
            .iter()
            .map(|s| s.dist(&sp.goal))
            .collect();
        transformed.push((spearman(&t, &ce).unwrap(), best_rank_pct(&t, &ce).unwrap()));
    }
    let mean_sp: f64 = transformed.iter().map(|x| x.0).sum::<f64>() / 8.0;
    let mean_br: f64 = transformed.iter().map(|x| x.1).sum::<f64>() / 8.0;
    assert!((mean_sp - raw_stats.spearman_euclid.unwrap()).abs() < 1e-9);
    assert!((mean_br - raw_stats.best_rank_pct).abs() < 1e-9);
}

#[test]
fn scsa_detects_pool_tampering() {
    let (geom, env, bundle) = tiny_bundle();
    let mut m = generate_manifest(ManifestKind::Balanced40, &geom, 9).unwrap();
    m.specs.truncate(2);
    let base = TerminalCost::new(CostKind::RawMse, geom);
    let mut pools =
        first_replan_pools(&m, &base, &bundle, &env, &fast_cem(10), 15).unwrap();
    pools[0].pool.costs[0] += 1.0; // costs are not hashed; candidates are
    pools[0].pool.candidates[0] += 1e-9;
    let err = scsa_audit(&pools, "raw", &base, &geom, &env, 1).unwrap_err();
    assert!(matches!(err, reachlab::Error::PoolMismatch(_)));
}

#[test]
fn trace_corr_permutation_null_is_small() {
    // permuted costs against outcomes: |corr| <= 0.2 at n = 100
    let mut rng = stream(95, "null", &[]);
    let n = 100;
    let dists: Vec<f64> = (0..n).map(|_| rng.random_range(5.0..200.0)).collect();
    let mut costs = dists.clone();
    // permute
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        costs.swap(i, j);
    }
    let rows: Vec<EpisodeRow> = (0..n)
        .map(|i| EpisodeRow {
            index: i,
            topology_class: TopologyClass::SameRoom,
            success: false,
            failure_class: FailureClass::SameRoomNotPrecise,
            final_dist: dists[i],
            steps_used: 50,
            mean_selected_cost: costs[i],
            geodesic_progress: rng.random_range(-10.0..10.0),
        })
        .collect();
    let tc = planner_trace_corr(&rows).unwrap();
    assert!(tc.cost_vs_final_dist.unwrap().abs() <= 0.2);
}

#[test]
fn trace_corr_needs_three_episodes() {
    let rows: Vec<EpisodeRow> = Vec::new();
    assert!(planner_trace_corr(&rows).is_err());
}
