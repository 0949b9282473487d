//! Cross-entropy-method action optimization over the frozen world model and
//! closed-loop MPC evaluation against manifests.
//!
//! The CEM core is a pure optimizer over bounded flat vectors; `cem_plan`
//! instantiates it with latent rollouts plus a terminal cost. Episodes run
//! with isolated RNG streams, so manifest evaluation parallelizes over
//! episodes without changing any number.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metric::{CostKind, OracleInputs, TerminalCost};
use crate::rng::{gaussian, stream};
use crate::tworoom::{
    classify_outcome, geodesic, step, Action, AgentState, EnvConfig, EpisodeSpec, FailureClass,
    Manifest, Outcome, TopologyClass, WorldGeometry,
};
use crate::worldmodel::WorldModelBundle;


#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CEMConfig {
    pub n_samples: usize,
    pub n_iters: usize,
    pub top_k: usize,
    pub horizon: usize,
    pub init_std: f64,
    pub min_std: f64,
    pub replan_block: usize,
    pub seed: u64,
}

impl Default for CEMConfig {
    fn default() -> Self {
        CEMConfig {
            n_samples: 128,
            n_iters: 8,
            top_k: 16,
            horizon: 20,
            init_std: 4.0,
            min_std: 0.5,
            replan_block: 1,
            seed: 0,
        }
    }
}

impl CEMConfig {
    /// The solver-stress configuration: much more search under the same cost.
    pub fn stress(seed: u64) -> Self {
        CEMConfig {
            n_samples: 1000,
            n_iters: 20,
            top_k: 100,
            seed,
            ..CEMConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 || self.top_k > self.n_samples {
            return Err(Error::InvalidConfig(format!(
                "top_k {} must be in [1, n_samples {}]",
                self.top_k, self.n_samples
            )));
        }
        if self.horizon == 0 || self.n_iters == 0 || self.min_std <= 0.0 {
            return Err(Error::InvalidConfig("bad CEM config".into()));
        }
        Ok(())
    }
}

/// The last-iteration candidate set, exactly as scored by the planner.
#[derive(Debug, Clone)]
pub struct CandidatePool {
    /// Flat n x dim candidate parameter block (dim = horizon * 2 for plans).
    pub candidates: Vec<f64>,
    pub n: usize,
    pub dim: usize,
    pub costs: Vec<f64>,
    /// Predicted terminal latents (empty when the cost never looked at them).
    pub terminals: Vec<f64>,
    /// Simulator terminal states for the same candidates.
    pub true_terminals: Vec<AgentState>,
    /// Hash over candidates + terminal inputs; audits must match it.
    pub hash: String,
}

fn pool_hash(candidates: &[f64], terminals: &[f64], extra: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in candidates.iter().chain(terminals.iter()).chain(extra.iter()) {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Recompute the integrity hash of a pool against a goal latent.
pub fn pool_hash_of(pool: &CandidatePool, z_g: &[f64]) -> String {
    pool_hash(&pool.candidates, &pool.terminals, z_g)
}

/// Generic CEM over a box [-bound, bound]^dim. The score closure maps a flat
/// candidate block to per-candidate costs. Returns the final mean and the
/// last-iteration candidates with their costs. `init_mean` warm-starts the
/// sampling distribution (zeros otherwise); the std always restarts at
/// init_std.
pub fn cem_optimize<F>(
    dim: usize,
    bound: f64,
    cfg: &CEMConfig,
    init_mean: Option<&[f64]>,
    rng_seed_tag: (u64, &str, &[u64]),
    mut score: F,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)>
where
    F: FnMut(&[f64], usize) -> Result<Vec<f64>>,
{
    cfg.validate()?;
    let (seed, tag, ixs) = rng_seed_tag;
    let mut rng = stream(seed, tag, ixs);
    let n = cfg.n_samples;
    let mut mean = match init_mean {
        Some(m) => {
            debug_assert_eq!(m.len(), dim);
            m.to_vec()
        }
        None => vec![0.0; dim],
    };
    let mut std = vec![cfg.init_std; dim];
    let mut cands = vec![0.0; n * dim];
    let mut last_costs = Vec::new();
    for _iter in 0..cfg.n_iters {
        for c in 0..n {
            for d in 0..dim {
                let v = mean[d] + std[d] * gaussian(&mut rng);
                cands[c * dim + d] = v.clamp(-bound, bound);
            }
        }
        let costs = score(&cands, n)?;
        if costs.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: costs.len(),
                context: "cem score output",
            });
        }
        let elite = elite_indices(&costs, cfg.top_k);
        for d in 0..dim {
            let mut m = 0.0;
            for &e in &elite {
                m += cands[e * dim + d];
            }
            m /= elite.len() as f64;
            let mut var = 0.0;
            for &e in &elite {
                let dev = cands[e * dim + d] - m;
                var += dev * dev;
            }
            var /= elite.len() as f64;
            mean[d] = m;
            std[d] = var.sqrt().max(cfg.min_std);
        }
        last_costs = costs;
    }
    Ok((mean, cands, last_costs))
}

/// Indices of the k lowest costs; ties break by index so the elite set is
/// deterministic.
fn elite_indices(costs: &[f64], k: usize) -> Vec<usize> {
    let mut ix: Vec<usize> = (0..costs.len()).collect();
    ix.sort_by(|&a, &b| {
        costs[a]
            .partial_cmp(&costs[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    ix.truncate(k);
    ix
}

/// Everything a replan needs besides the CEM config.
pub struct PlanContext<'a> {
    pub bundle: &'a WorldModelBundle,
    pub cost: &'a TerminalCost,
    pub geom: &'a WorldGeometry,
    pub env: &'a EnvConfig,
    /// True simulator state at the replan point (oracle diagnostics only).
    pub true_state: AgentState,
    pub goal_state: AgentState,
    /// Refuse oracle costs when true.
    pub deployment: bool,
}

/// One CEM replan from latent z_t toward goal latent z_g. CEM refits its
/// Gaussian to the elite set; the returned plan is the lowest-cost candidate
/// of the final pool (the candidate the planner selects for execution).
pub fn cem_plan(
    z_t: &[f64],
    z_g: &[f64],
    ctx: &PlanContext,
    cfg: &CEMConfig,
    warm_start: Option<&[Action]>,
    seed_ixs: &[u64],
) -> Result<(Vec<Action>, CandidatePool)> {
    let h = cfg.horizon;
    let dim = h * 2;
    let needs_latents = ctx.cost.kind.needs_latents();
    let needs_oracle = ctx.cost.kind.is_oracle();
    let ld = z_t.len();

    let mut final_terminals: Vec<f64> = Vec::new();
    let mut final_true: Vec<AgentState> = Vec::new();
    let score = |cands: &[f64], n: usize| -> Result<Vec<f64>> {
        let terminals = if needs_latents {
            let z0: Vec<f64> = z_t.iter().cycle().take(n * ld).copied().collect();
            ctx.bundle.dynamics.rollout_batch(&z0, cands, n, h)
        } else {
            Vec::new()
        };
        let true_terms = if needs_oracle {
            simulate_candidates(ctx.true_state, cands, n, h, ctx.geom, ctx.env)
        } else {
            Vec::new()
        };
        let oracle = OracleInputs {
            goal: ctx.goal_state,
            terminal_states: &true_terms,
        };
        let (costs, _flags) = ctx.cost.score_candidates(
            &terminals,
            n,
            z_g,
            needs_oracle.then_some(&oracle),
            ctx.deployment,
        )?;
        final_terminals = terminals;
        final_true = true_terms;
        Ok(costs)
    };

    let init: Option<Vec<f64>> = warm_start.map(|w| {
        let mut v: Vec<f64> = w.iter().flat_map(|a| [a.dx, a.dy]).collect();
        v.resize(dim, 0.0);
        v.truncate(dim);
        v
    });
    let (_mean, cands, costs) = cem_optimize(
        dim,
        ctx.env.a_max,
        cfg,
        init.as_deref(),
        (cfg.seed, "cem", seed_ixs),
        score,
    )?;

    // Simulator terminals for the final pool (audits need them even when the
    // planner cost never looked at the simulator).
    let true_terminals = if final_true.len() == cfg.n_samples {
        final_true
    } else {
        simulate_candidates(ctx.true_state, &cands, cfg.n_samples, h, ctx.geom, ctx.env)
    };
    let hash = pool_hash(&cands, &final_terminals, z_g);
    let selected = elite_indices(&costs, 1)[0];
    let actions = cands[selected * dim..(selected + 1) * dim]
        .chunks_exact(2)
        .map(|c| Action::new(c[0], c[1]))
        .collect();
    Ok((
        actions,
        CandidatePool {
            candidates: cands,
            n: cfg.n_samples,
            dim,
            costs,
            terminals: final_terminals,
            true_terminals,
            hash,
        },
    ))
}

/// Roll candidate action sequences through the real simulator.
pub fn simulate_candidates(
    start: AgentState,
    cands: &[f64],
    n: usize,
    horizon: usize,
    geom: &WorldGeometry,
    env: &EnvConfig,
) -> Vec<AgentState> {
    (0..n)
        .map(|c| {
            let mut s = start;
            for hh in 0..horizon {
                let a = Action::new(cands[(c * horizon + hh) * 2], cands[(c * horizon + hh) * 2 + 1]);
                s = step(s, a, geom, env);
            }
            s
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplanRecord {
    pub step_index: usize,
    pub selected_cost: f64,
    pub selected_action: Action,
    pub pool_hash: String,
    pub n_candidates: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanTrace {
    pub replans: Vec<ReplanRecord>,
    pub start_geodesic: f64,
    pub final_geodesic: f64,
    pub mean_selected_cost: f64,
}

impl PlanTrace {
    pub fn geodesic_progress(&self) -> f64 {
        self.start_geodesic - self.final_geodesic
    }
}

/// Closed-loop MPC on one episode spec: encode the live state, replan, execute
/// the first action block, repeat until success or budget exhaustion.
///
/// `episode_seed` drives the episode nuisance phase, the independent goal
/// nuisance phase, and the per-replan CEM streams.
pub fn run_episode(
    spec: &EpisodeSpec,
    ctx_cost: &TerminalCost,
    bundle: &WorldModelBundle,
    geom: &WorldGeometry,
    env: &EnvConfig,
    cfg: &CEMConfig,
    budget: usize,
    episode_seed: u64,
    deployment: bool,
    keep_first_pool: bool,
) -> Result<(Outcome, PlanTrace, Option<CandidatePool>)> {
    let enc = &bundle.encoder;
    let mut phase_rng = stream(episode_seed, "episode-nuisance", &[]);
    let mut nuisance = enc.nuisance_init(&mut phase_rng);
    let mut goal_rng = stream(episode_seed, "goal-nuisance", &[]);
    let goal_nuisance = enc.nuisance_init(&mut goal_rng);
    let z_g = enc.encode(spec.goal, &goal_nuisance);

    let mut state = spec.start;
    let mut replans = Vec::new();
    let mut first_pool = None;
    let mut executed = 0usize;
    let mut cost_sum = 0.0;
    let mut carry: Option<Vec<Action>> = None;
    while executed < budget {
        if state.dist(&spec.goal) <= env.r_succ {
            break;
        }
        let z_t = enc.encode(state, &nuisance);
        let ctx = PlanContext {
            bundle,
            cost: ctx_cost,
            geom,
            env,
            true_state: state,
            goal_state: spec.goal,
            deployment,
        };
        let mut plan_cfg = *cfg;
        plan_cfg.seed = episode_seed;
        // plans never extend past the remaining execution budget
        plan_cfg.horizon = cfg.horizon.min(budget - executed).max(1);
        let (plan, pool) = cem_plan(
            &z_t,
            &z_g,
            &ctx,
            &plan_cfg,
            carry.as_deref(),
            &[executed as u64],
        )?;
        // the executed plan is the pool argmin, so its cost is the pool minimum
        let selected_cost = pool.costs.iter().cloned().fold(f64::INFINITY, f64::min);
        cost_sum += selected_cost;

        let this_pool_hash = pool.hash.clone();
        if keep_first_pool && first_pool.is_none() {
            first_pool = Some(pool);
        }

        let block = cfg.replan_block.max(1).min(budget - executed);
        // warm start for the next replan: drop the executed block; length is
        // re-fitted to the next replan's horizon inside cem_plan
        let next_carry = plan[block.min(plan.len())..].to_vec();
        carry = Some(next_carry);
        for a in plan.iter().take(block) {
            replans.push(ReplanRecord {
                step_index: executed,
                selected_cost,
                selected_action: *a,
                pool_hash: this_pool_hash.clone(),
                n_candidates: cfg.n_samples,
            });
            nuisance = enc.nuisance_step(&nuisance, state);
            state = step(state, *a, geom, env);
            executed += 1;
            if state.dist(&spec.goal) <= env.r_succ {
                break;
            }
        }
    }

    let outcome = classify_outcome(spec, state, geom, env);
    let n_replans = replans.len().max(1);
    let trace = PlanTrace {
        start_geodesic: geodesic(spec.start, spec.goal, geom),
        final_geodesic: geodesic(state, spec.goal, geom),
        mean_selected_cost: cost_sum / n_replans as f64,
        replans,
    };
    Ok((outcome, trace, first_pool))
}

// --- manifest evaluation ------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub index: usize,
    pub topology_class: TopologyClass,
    pub success: bool,
    pub failure_class: FailureClass,
    pub final_dist: f64,
    pub steps_used: usize,
    pub mean_selected_cost: f64,
    pub geodesic_progress: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct EvalAggregate {
    pub n_episodes: usize,
    pub success_pct: f64,
    pub same_room_success_pct: f64,
    pub cross_wall_success_pct: f64,
    pub wrong_room_pct: f64,
    pub stuck_at_wall_pct: f64,
    pub same_room_not_precise_pct: f64,
    pub crossed_door_not_precise_pct: f64,
}

#[derive(Debug, Clone)]
pub struct EvalResult {
    pub rows: Vec<EpisodeRow>,
    pub traces: Vec<PlanTrace>,
    pub aggregate: EvalAggregate,
}

/// Evaluate every spec in a manifest under one cost. Episodes run in
/// parallel; each owns a seed stream derived from (seed, episode index), so
/// the result is identical for any worker count.
pub fn evaluate_manifest(
    manifest: &Manifest,
    cost: &TerminalCost,
    bundle: &WorldModelBundle,
    env: &EnvConfig,
    cfg: &CEMConfig,
    budget: usize,
    seed: u64,
    deployment: bool,
) -> Result<EvalResult> {
    use rayon::prelude::*;
    if budget == 0 {
        // degenerate but well-defined: no actions executed
        let rows = manifest
            .specs
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                let out = classify_outcome(spec, spec.start, &manifest.geometry, env);
                EpisodeRow {
                    index: i,
                    topology_class: spec.topology_class,
                    success: out.success,
                    failure_class: out.failure_class,
                    final_dist: out.final_dist,
                    steps_used: 0,
                    mean_selected_cost: f64::NAN,
                    geodesic_progress: 0.0,
                }
            })
            .collect::<Vec<_>>();
        let aggregate = aggregate_rows(&rows);
        return Ok(EvalResult {
            rows,
            traces: Vec::new(),
            aggregate,
        });
    }
    let geom = &manifest.geometry;
    let results: Vec<Result<(EpisodeRow, PlanTrace)>> = manifest
        .specs
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let ep_seed = crate::rng::derive_seed(seed, "episode-seed", &[i as u64]);
            let (outcome, trace, _) = run_episode(
                spec, cost, bundle, geom, env, cfg, budget, ep_seed, deployment, false,
            )?;
            Ok((
                EpisodeRow {
                    index: i,
                    topology_class: spec.topology_class,
                    success: outcome.success,
                    failure_class: outcome.failure_class,
                    final_dist: outcome.final_dist,
                    steps_used: trace.replans.len(),
                    mean_selected_cost: trace.mean_selected_cost,
                    geodesic_progress: trace.geodesic_progress(),
                },
                trace,
            ))
        })
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut traces = Vec::with_capacity(results.len());
    for r in results {
        let (row, trace) = r?;
        rows.push(row);
        traces.push(trace);
    }
    let aggregate = aggregate_rows(&rows);
    Ok(EvalResult {
        rows,
        traces,
        aggregate,
    })
}

fn aggregate_rows(rows: &[EpisodeRow]) -> EvalAggregate {
    let n = rows.len();
    let nf = n as f64;
    let pct = |c: usize| 100.0 * c as f64 / nf;
    let count_class =
        |f: FailureClass| rows.iter().filter(|r| r.failure_class == f).count();
    let same: Vec<&EpisodeRow> = rows
        .iter()
        .filter(|r| r.topology_class == TopologyClass::SameRoom)
        .collect();
    let cross: Vec<&EpisodeRow> = rows
        .iter()
        .filter(|r| r.topology_class == TopologyClass::CrossWall)
        .collect();
    let class_pct = |rows: &[&EpisodeRow]| {
        if rows.is_empty() {
            0.0
        } else {
            100.0 * rows.iter().filter(|r| r.success).count() as f64 / rows.len() as f64
        }
    };
    EvalAggregate {
        n_episodes: n,
        success_pct: pct(rows.iter().filter(|r| r.success).count()),
        same_room_success_pct: class_pct(&same),
        cross_wall_success_pct: class_pct(&cross),
        wrong_room_pct: pct(count_class(FailureClass::WrongRoom)),
        stuck_at_wall_pct: pct(count_class(FailureClass::StuckAtWall)),
        same_room_not_precise_pct: pct(count_class(FailureClass::SameRoomNotPrecise)),
        crossed_door_not_precise_pct: pct(count_class(FailureClass::CrossedDoorNotPrecise)),
    }
}

/// Solver stress: the same evaluation under raw latent MSE with a much larger
/// search budget (1000 samples, 20 iterations, top-k 100).
pub fn solver_stress(
    manifest: &Manifest,
    bundle: &WorldModelBundle,
    env: &EnvConfig,
    budget: usize,
    seed: u64,
) -> Result<EvalResult> {
    let cost = TerminalCost::new(CostKind::RawMse, manifest.geometry);
    let cfg = CEMConfig::stress(seed);
    evaluate_manifest(manifest, &cost, bundle, env, &cfg, budget, seed, true)
}

/// First-replan candidate pools for the same-candidate selection audit.
#[derive(Debug, Clone)]
pub struct ScsaPool {
    pub episode_index: usize,
    pub start: AgentState,
    pub goal: AgentState,
    pub z_goal: Vec<f64>,
    pub pool: CandidatePool,
}

/// Produce one pool per episode: the last-iteration candidates of the first
/// replan under `base_cost` (the selector being audited is swapped later, on
/// exactly these candidates).
pub fn first_replan_pools(
    manifest: &Manifest,
    base_cost: &TerminalCost,
    bundle: &WorldModelBundle,
    env: &EnvConfig,
    cfg: &CEMConfig,
    seed: u64,
) -> Result<Vec<ScsaPool>> {
    use rayon::prelude::*;
    let geom = &manifest.geometry;
    let pools: Vec<Result<ScsaPool>> = manifest
        .specs
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let ep_seed = crate::rng::derive_seed(seed, "episode-seed", &[i as u64]);
            let (_outcome, _trace, pool) = run_episode(
                spec, base_cost, bundle, geom, env, cfg, 1, ep_seed, true, true,
            )?;
            let pool = pool.ok_or_else(|| {
                Error::PoolMismatch(format!("episode {i} produced no first-replan pool"))
            })?;
            // re-derive the goal latent exactly as run_episode did
            let mut goal_rng = stream(ep_seed, "goal-nuisance", &[]);
            let goal_nuisance = bundle.encoder.nuisance_init(&mut goal_rng);
            let z_goal = bundle.encoder.encode(spec.goal, &goal_nuisance);
            Ok(ScsaPool {
                episode_index: i,
                start: spec.start,
                goal: spec.goal,
                z_goal,
                pool,
            })
        })
        .collect();
    pools.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cem_solves_quadratic_surrogate() {
        let cfg = CEMConfig {
            n_samples: 64,
            n_iters: 10,
            top_k: 8,
            horizon: 1,
            init_std: 4.0,
            min_std: 0.1,
            replan_block: 1,
            seed: 5,
        };
        let (mean, _, _) = cem_optimize(1, 8.0, &cfg, None, (5, "test", &[]), |cands, n| {
            Ok((0..n).map(|i| (cands[i] - 3.0).powi(2)).collect())
        })
        .unwrap();
        assert!((mean[0] - 3.0).abs() < 0.1, "mean {}", mean[0]);
    }

    #[test]
    fn cem_top_k_equals_n_gives_sample_mean() {
        let cfg = CEMConfig {
            n_samples: 32,
            n_iters: 1,
            top_k: 32,
            horizon: 1,
            init_std: 2.0,
            min_std: 0.1,
            replan_block: 1,
            seed: 6,
        };
        let (mean, cands, _) = cem_optimize(1, 8.0, &cfg, None, (6, "test", &[]), |_, n| {
            Ok(vec![1.0; n])
        })
        .unwrap();
        let sample_mean: f64 = cands.iter().sum::<f64>() / 32.0;
        assert!((mean[0] - sample_mean).abs() < 1e-12);
    }

    #[test]
    fn cem_is_deterministic() {
        let cfg = CEMConfig {
            n_samples: 16,
            n_iters: 4,
            top_k: 4,
            horizon: 2,
            init_std: 4.0,
            min_std: 0.5,
            replan_block: 1,
            seed: 7,
        };
        let run = || {
            cem_optimize(4, 8.0, &cfg, None, (7, "test", &[1]), |cands, n| {
                Ok((0..n)
                    .map(|i| cands[i * 4..(i + 1) * 4].iter().map(|v| v * v).sum())
                    .collect())
            })
            .unwrap()
        };
        let (m1, c1, k1) = run();
        let (m2, c2, k2) = run();
        assert_eq!(m1, m2);
        assert_eq!(c1, c2);
        assert_eq!(k1, k2);
    }

    #[test]
    fn cem_elite_mean_cost_monotone_on_quadratic_with_frozen_std() {
        // frozen std: min_std == init_std keeps the sampling distribution
        // width fixed, isolating the elite-refit step
        let mut costs_of_mean = Vec::new();
        for iters in 1..=6 {
            let cfg = CEMConfig {
                n_samples: 256,
                n_iters: iters,
                top_k: 32,
                horizon: 1,
                init_std: 2.0,
                min_std: 2.0,
                replan_block: 1,
                seed: 11,
            };
            let (mean, _, _) = cem_optimize(1, 8.0, &cfg, None, (11, "test", &[]), |cands, n| {
                Ok((0..n).map(|i| (cands[i] - 3.0).powi(2)).collect())
            })
            .unwrap();
            costs_of_mean.push((mean[0] - 3.0).powi(2));
        }
        for w in costs_of_mean.windows(2) {
            assert!(w[1] <= w[0] + 0.05, "{costs_of_mean:?}");
        }
    }

    #[test]
    fn invalid_cem_configs_rejected() {
        let mut cfg = CEMConfig::default();
        cfg.top_k = cfg.n_samples + 1;
        assert!(cfg.validate().is_err());
        let cfg = CEMConfig {
            min_std: 0.0,
            ..CEMConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn stress_config_matches_contract() {
        let cfg = CEMConfig::stress(1);
        assert_eq!(cfg.n_samples, 1000);
        assert_eq!(cfg.n_iters, 20);
        assert_eq!(cfg.top_k, 100);
    }

    #[test]
    fn simulate_candidates_blocked_by_wall() {
        let geom = WorldGeometry::default();
        let env = EnvConfig::default();
        // one candidate, 3 steps straight into the wall
        let cands = vec![8.0, 0.0, 8.0, 0.0, 8.0, 0.0];
        let t = simulate_candidates(AgentState::new(100.0, 50.0), &cands, 1, 3, &geom, &env);
        assert_eq!(t[0], AgentState::new(111.5, 50.0));
    }
}
