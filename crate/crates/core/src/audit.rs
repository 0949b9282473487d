//! Same-candidate selection audits and rank statistics.
//!
//! The audit holds a candidate pool fixed and swaps only the scoring rule,
//! then asks how each selector orders the pool relative to oracle task-state
//! costs: rank correlation, where the oracle-best candidate lands, and the
//! realized distance after executing the selected first action block.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{OracleInputs, TerminalCost};
use crate::planner::{EpisodeRow, ScsaPool};
use crate::tworoom::{geodesic, step, Action, EnvConfig, WorldGeometry};

/// Average-tie ranks, 1-based: tied values share the mean of the positions
/// they occupy.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut ix: Vec<usize> = (0..n).collect();
    ix.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[ix[j + 1]] == xs[ix[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share rank mean of (i+1)..=(j+1)
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &ix[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation. Errors on degenerate variance rather than returning a
/// silent zero.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "pearson needs two equal-length lists of >= 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        num += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::DegenerateInput("constant list in pearson".into()));
    }
    Ok(num / (va * vb).sqrt())
}

/// Spearman rank correlation with average-tie ranks: the Pearson correlation
/// of the two rank vectors. A constant list is reported as an error (the
/// caller records it as flagged-undefined, never as 0).
pub fn spearman(c: &[f64], c_star: &[f64]) -> Result<f64> {
    if c.len() != c_star.len() || c.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "spearman needs two equal-length lists of >= 2, got {} and {}",
            c.len(),
            c_star.len()
        )));
    }
    pearson(&average_ranks(c), &average_ranks(c_star))
}

/// Percentile rank the selector assigns to the oracle-best candidate:
/// (average-tie rank of argmin c_star under c - 1) / (N - 1) * 100.
/// Ties in the oracle argmin break toward the lowest index.
pub fn best_rank_pct(c: &[f64], c_star: &[f64]) -> Result<f64> {
    if c.len() != c_star.len() || c.len() < 2 {
        return Err(Error::DegenerateInput(
            "best_rank_pct needs two equal-length lists of >= 2".into(),
        ));
    }
    let mut j_star = 0;
    for (j, v) in c_star.iter().enumerate() {
        if *v < c_star[j_star] {
            j_star = j;
        }
    }
    let ranks = average_ranks(c);
    Ok((ranks[j_star] - 1.0) / (c.len() as f64 - 1.0) * 100.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankStats {
    pub selector: String,
    /// Mean Spearman vs the oracle Euclidean cost (per episode, then averaged).
    pub spearman_euclid: Option<f64>,
    /// Mean Spearman vs the oracle geodesic cost.
    pub spearman_geo: Option<f64>,
    /// Mean percentile rank of the (Euclidean) oracle-best candidate.
    pub best_rank_pct: f64,
    /// Mean task distance after executing the selected first action block.
    pub selected_final_dist: f64,
    pub episodes: usize,
    /// Episodes whose selector costs were constant (undefined correlation).
    pub flagged_episodes: usize,
    /// Audited episodes where the oracle argmin was tied.
    pub oracle_ties: usize,
    pub pool_hash_first: String,
}

/// Per-episode audit record for one selector on one pool.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeRankStats {
    pub episode_index: usize,
    pub spearman_euclid: Option<f64>,
    pub spearman_geo: Option<f64>,
    pub best_rank_pct: f64,
    pub selected_final_dist: f64,
    pub oracle_tie: bool,
    pub pool_hash: String,
}

/// Score every pool under one selector. Returns per-episode records plus the
/// aggregate. `replan_block` controls how many actions of the selected
/// candidate are executed for the selected-final-distance stat.
pub fn scsa_audit(
    pools: &[ScsaPool],
    selector_name: &str,
    selector: &TerminalCost,
    geom: &WorldGeometry,
    env: &EnvConfig,
    replan_block: usize,
) -> Result<(Vec<EpisodeRankStats>, RankStats)> {
    if pools.is_empty() {
        return Err(Error::DegenerateInput("no pools to audit".into()));
    }
    let mut episodes = Vec::with_capacity(pools.len());
    for sp in pools {
        let pool = &sp.pool;
        // integrity: the audited pool must be byte-identical to what the
        // planner scored
        let rehash = crate::planner::pool_hash_of(pool, &sp.z_goal);
        if rehash != pool.hash {
            return Err(Error::PoolMismatch(format!(
                "episode {}: pool hash {} != recorded {}",
                sp.episode_index, rehash, pool.hash
            )));
        }
        let oracle = OracleInputs {
            goal: sp.goal,
            terminal_states: &pool.true_terminals,
        };
        let (costs, _) = selector.score_candidates(
            &pool.terminals,
            pool.n,
            &sp.z_goal,
            Some(&oracle),
            false,
        )?;
        let c_euclid: Vec<f64> = pool.true_terminals.iter().map(|s| s.dist(&sp.goal)).collect();
        let c_geo: Vec<f64> = pool
            .true_terminals
            .iter()
            .map(|s| geodesic(*s, sp.goal, geom))
            .collect();

        let min_e = c_euclid.iter().cloned().fold(f64::INFINITY, f64::min);
        let oracle_tie = c_euclid.iter().filter(|&&v| v == min_e).count() > 1;

        // execute the selected candidate's first action block
        let sel = argmin(&costs);
        let h = pool.dim / 2;
        let mut s = sp.start;
        for b in 0..replan_block.max(1).min(h) {
            let a = Action::new(
                pool.candidates[(sel * h + b) * 2],
                pool.candidates[(sel * h + b) * 2 + 1],
            );
            s = step(s, a, geom, env);
        }

        episodes.push(EpisodeRankStats {
            episode_index: sp.episode_index,
            spearman_euclid: spearman(&costs, &c_euclid).ok(),
            spearman_geo: spearman(&costs, &c_geo).ok(),
            best_rank_pct: best_rank_pct(&costs, &c_euclid)?,
            selected_final_dist: s.dist(&sp.goal),
            oracle_tie,
            pool_hash: pool.hash.clone(),
        });
    }
    let n = episodes.len() as f64;
    let defined: Vec<&EpisodeRankStats> = episodes
        .iter()
        .filter(|e| e.spearman_euclid.is_some() && e.spearman_geo.is_some())
        .collect();
    let aggregate = RankStats {
        selector: selector_name.to_string(),
        spearman_euclid: (!defined.is_empty())
            .then(|| defined.iter().map(|e| e.spearman_euclid.unwrap()).sum::<f64>() / defined.len() as f64),
        spearman_geo: (!defined.is_empty())
            .then(|| defined.iter().map(|e| e.spearman_geo.unwrap()).sum::<f64>() / defined.len() as f64),
        best_rank_pct: episodes.iter().map(|e| e.best_rank_pct).sum::<f64>() / n,
        selected_final_dist: episodes.iter().map(|e| e.selected_final_dist).sum::<f64>() / n,
        episodes: episodes.len(),
        flagged_episodes: episodes.len() - defined.len(),
        oracle_ties: episodes.iter().filter(|e| e.oracle_tie).count(),
        pool_hash_first: pools[0].pool.hash.clone(),
    };
    Ok((episodes, aggregate))
}

fn argmin(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in xs.iter().enumerate() {
        if *v < xs[best] {
            best = i;
        }
    }
    best
}

/// Across-episode Pearson correlations between the mean selected terminal
/// cost and (a) realized final distance, (b) realized geodesic progress.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceCorr {
    pub cost_vs_final_dist: Option<f64>,
    pub cost_vs_geodesic_progress: Option<f64>,
    pub episodes: usize,
}

pub fn planner_trace_corr(rows: &[EpisodeRow]) -> Result<TraceCorr> {
    if rows.len() < 3 {
        return Err(Error::DegenerateInput(
            "planner_trace_corr needs at least 3 episodes".into(),
        ));
    }
    let costs: Vec<f64> = rows.iter().map(|r| r.mean_selected_cost).collect();
    let dists: Vec<f64> = rows.iter().map(|r| r.final_dist).collect();
    let prog: Vec<f64> = rows.iter().map(|r| r.geodesic_progress).collect();
    Ok(TraceCorr {
        cost_vs_final_dist: pearson(&costs, &dists).ok(),
        cost_vs_geodesic_progress: pearson(&costs, &prog).ok(),
        episodes: rows.len(),
    })
}
