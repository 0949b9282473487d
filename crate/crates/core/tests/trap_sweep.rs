// Temporary nuisance-parameter sweep; removed once constants are frozen.
// For each (freq_scale, mod_amp): build the stack, then measure the
// planning-relevant rank statistics on first-replan pools plus closed-loop
// spot checks.
use std::sync::Arc;

use reachlab::audit::scsa_audit;
use reachlab::metric::*;
use reachlab::planner::*;
use reachlab::trajstore::{collect, CollectConfig, SamplerConfig};
use reachlab::tworoom::*;
use reachlab::worldmodel::*;

#[test]
#[ignore]
fn trap_parameter_sweep() {
    let geom = WorldGeometry::default();
    let env = EnvConfig::default();
    let seed = 3072u64;
    let manifest_full = generate_manifest(ManifestKind::Hard100, &geom, 7001).unwrap();
    let mut manifest = manifest_full.clone();
    let mut specs: Vec<EpisodeSpec> = manifest_full.specs[..10].to_vec();
    specs.extend(manifest_full.specs[50..60].iter().cloned());
    manifest.specs = specs;

    for (freq, amp, epochs) in [(0.7, 0.7, 20), (1.0, 0.7, 60), (2.0, 0.9, 60)] {
        let t0 = std::time::Instant::now();
        let enc_cfg = EncoderConfig {
            freq_scale: freq,
            mod_amp: amp,
            ..EncoderConfig::default()
        };
        let encoder = Encoder::create(enc_cfg, seed).unwrap();
        let ds = collect(
            &geom,
            &env,
            &encoder,
            &CollectConfig {
                n_episodes: 700,
                ..CollectConfig::default()
            },
            seed,
        )
        .unwrap();
        let (dynamics, report) = train_dynamics(
            &ds,
            &DynamicsConfig {
                train_steps: 25_000,
                holdout_episodes: 35,
                ..DynamicsConfig::default()
            },
            seed,
        )
        .unwrap();
        let probe = fit_probe(&ds, 20000, 5000, 1e-6, seed).unwrap();

        // open-loop XY rollout error
        let xy_err = {
            use rand::Rng;
            let mut rng = reachlab::rng::stream(seed, "probe-roll", &[]);
            let mut errs: Vec<f64> = (0..200)
                .map(|_| {
                    let ep = rng.random_range(0..ds.header.n_episodes);
                    let t = rng.random_range(0..ds.header.length - 21);
                    let z0 = ds.latent_f64(ep, t);
                    let acts: Vec<Action> = (0..20).map(|h| ds.action(ep, t + h)).collect();
                    let zh = dynamics.rollout(&z0, &acts);
                    probe.decode(&zh).dist(&ds.state(ep, t + 20))
                })
                .collect();
            errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            errs[errs.len() / 2]
        };

        let bundle = WorldModelBundle {
            encoder,
            dynamics,
            dynamics_report: report.clone(),
            probe: probe.clone(),
            freeze_hash: String::new(),
        };
        let head_cfg = HeadTrainConfig {
            epochs,
            ..HeadTrainConfig::default()
        };
        let sampler = SamplerConfig::balanced_full(100_000, seed);
        let head = train_head(&ds, &sampler, LabelMode::TrueLabels, &head_cfg).unwrap();

        // rank audits on first-replan pools of the 20-episode subset
        let base = TerminalCost::new(CostKind::RawMse, geom);
        let cem = CEMConfig {
            seed,
            ..CEMConfig::default()
        };
        let pools = first_replan_pools(&manifest, &base, &bundle, &env, &cem, seed).unwrap();
        let stat = |cost: &TerminalCost, name: &str| {
            let (_, s) = scsa_audit(&pools, name, cost, &geom, &env, 1).unwrap();
            (
                s.spearman_geo.unwrap_or(f64::NAN),
                s.best_rank_pct,
            )
        };
        let (raw_sp, raw_br) = stat(&base, "raw");
        let trm_cost = TerminalCost::new(CostKind::Trm, geom).with_head(Arc::new(head.clone()));
        let (trm_sp, trm_br) = stat(&trm_cost, "trm");
        let dec_cost =
            TerminalCost::new(CostKind::DecodedEuclid, geom).with_probe(Arc::new(probe.clone()));
        let (dec_sp, dec_br) = stat(&dec_cost, "decoded");

        // closed-loop spot checks on the subset
        let run = |cost: &TerminalCost, diag: bool| {
            evaluate_manifest(&manifest, cost, &bundle, &env, &cem, 50, seed, !diag)
                .unwrap()
                .aggregate
                .success_pct
        };
        let trm_succ = run(&trm_cost, false);
        let raw_succ = run(&base, false);
        let dec_succ = run(&dec_cost, false);

        println!(
            "freq {freq} amp {amp} e{epochs}: dynRMSE {:.3} xy20 {:.1} headMAE {:.4} | spearman raw {:.3} trm {:.3} dec {:.3} | bestrank raw {:.1} trm {:.1} dec {:.1} | succ20 raw {:.0} trm {:.0} dec {:.0} | {:.0}s",
            report.val_rmse,
            xy_err,
            head.report.val_mae_scaled,
            raw_sp,
            trm_sp,
            dec_sp,
            raw_br,
            trm_br,
            dec_br,
            raw_succ,
            trm_succ,
            dec_succ,
            t0.elapsed().as_secs_f64()
        );
    }
}
