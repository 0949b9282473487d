//! Terminal candidate-scoring rules.
//!
//! The learned piece is a pairwise head trained to predict scaled temporal
//! separation between same-episode latents; at planning time it scores each
//! predicted terminal latent against the goal latent. Around it sits the full
//! cost family used by the evidence chain: raw latent MSE, per-dimension
//! standardized MSE, the standardized hybrid, probe-decoded distances,
//! rowspace/residual projections, and oracle task-state diagnostics.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, Activation, DenseNet};
use crate::rng::stream;
use crate::trajstore::{sample_pairs, Dataset, SamplerConfig, TrainPair};
use crate::tworoom::{geodesic, AgentState, WorldGeometry};
use crate::worldmodel::XYProbe;
use rand::Rng;

/// psi(z_i, z_j) = [z_i, z_j, z_i - z_j, |z_i - z_j|].
pub fn pair_features(z_i: &[f64], z_j: &[f64]) -> Result<Vec<f64>> {
    if z_i.len() != z_j.len() {
        return Err(Error::DimensionMismatch {
            expected: z_i.len(),
            got: z_j.len(),
            context: "pair_features",
        });
    }
    let mut out = Vec::with_capacity(4 * z_i.len());
    out.extend_from_slice(z_i);
    out.extend_from_slice(z_j);
    out.extend(z_i.iter().zip(z_j).map(|(a, b)| a - b));
    out.extend(z_i.iter().zip(z_j).map(|(a, b)| (a - b).abs()));
    Ok(out)
}

fn fill_pair_features_scaled(z_i: &[f64], z_j: &[f64], inv_scale: f64, out: &mut [f64]) {
    let d = z_i.len();
    for k in 0..d {
        let (a, b) = (z_i[k] * inv_scale, z_j[k] * inv_scale);
        let diff = a - b;
        out[k] = a;
        out[d + k] = b;
        out[2 * d + k] = diff;
        out[3 * d + k] = diff.abs();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    TrueLabels,
    ShuffledLabels,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadTrainConfig {
    pub hidden: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub scale: f64,
    /// Latent features are divided by this before entering the net; the raw
    /// latents carry the nuisance radius (~20) and would start the Softplus
    /// head deep in its flat region otherwise.
    pub feature_scale: f64,
    pub val_pairs: usize,
}

impl Default for HeadTrainConfig {
    fn default() -> Self {
        HeadTrainConfig {
            hidden: 256,
            lr: 1e-3,
            weight_decay: 1e-4,
            batch_size: 1024,
            epochs: 20,
            scale: 224.0,
            feature_scale: 20.0,
            val_pairs: 10_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeadReport {
    /// Mean absolute error on scaled labels over held-out true-label pairs.
    pub val_mae_scaled: f64,
    /// RMSE in raw time-step units over the same pairs.
    pub val_rmse_steps: f64,
    /// MAE of the best constant predictor on the same held-out labels.
    pub constant_mae_scaled: f64,
    pub train_pairs: usize,
    pub steps: usize,
    pub final_train_loss: f64,
}

/// The pairwise reachability head. The feature order at scoring time is
/// (predicted terminal, goal): asymmetric inputs over a symmetric label.
#[derive(Debug, Clone)]
pub struct PairHead {
    pub net: DenseNet,
    pub scale: f64,
    pub feature_scale: f64,
    pub label_mode: LabelMode,
    pub sampler: SamplerConfig,
    pub report: HeadReport,
}

impl PairHead {
    pub fn latent_dim(&self) -> usize {
        self.net.input_dim() / 4
    }

    /// Predicted temporal separation (scaled, strictly positive).
    pub fn score(&self, z_i: &[f64], z_j: &[f64]) -> Result<f64> {
        if z_i.len() != z_j.len() || z_i.len() != self.latent_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.latent_dim(),
                got: z_i.len().max(z_j.len()),
                context: "pair head score",
            });
        }
        let mut feats = vec![0.0; 4 * z_i.len()];
        fill_pair_features_scaled(z_i, z_j, 1.0 / self.feature_scale, &mut feats);
        Ok(self.net.forward_one(&feats)[0])
    }

    /// Score a flat batch of candidate latents against one goal latent.
    pub fn score_batch(&self, terminals: &[f64], n: usize, z_g: &[f64]) -> Vec<f64> {
        use rayon::prelude::*;
        let ld = z_g.len();
        const CHUNK: usize = 64;
        let nchunks = n.div_ceil(CHUNK);
        let parts: Vec<Vec<f64>> = (0..nchunks)
            .into_par_iter()
            .map(|ci| {
                let lo = ci * CHUNK;
                let hi = ((ci + 1) * CHUNK).min(n);
                let rows = hi - lo;
                let mut feats = vec![0.0; rows * 4 * ld];
                let inv = 1.0 / self.feature_scale;
                for r in 0..rows {
                    fill_pair_features_scaled(
                        &terminals[(lo + r) * ld..(lo + r + 1) * ld],
                        z_g,
                        inv,
                        &mut feats[r * 4 * ld..(r + 1) * 4 * ld],
                    );
                }
                self.net.forward_batch(&feats, rows)
            })
            .collect();
        parts.concat()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let cfg = serde_json::json!({
            "kind": "pair_head",
            "scale": self.scale,
            "feature_scale": self.feature_scale,
            "label_mode": self.label_mode,
            "sampler": self.sampler,
            "report": self.report,
        });
        nn::save_checkpoint(&self.net, self.sampler.seed, &cfg, path)
    }

    pub fn load(path: &std::path::Path) -> Result<PairHead> {
        let (net, header) = nn::load_checkpoint(path)?;
        let cfg = header.train_config;
        Ok(PairHead {
            net,
            scale: cfg["scale"].as_f64().unwrap_or(224.0),
            feature_scale: cfg["feature_scale"].as_f64().unwrap_or(1.0),
            label_mode: serde_json::from_value(cfg["label_mode"].clone())?,
            sampler: serde_json::from_value(cfg["sampler"].clone())?,
            report: serde_json::from_value(cfg["report"].clone())?,
        })
    }
}

/// Train a head under the given sampling regime. Shuffling (when requested)
/// permutes only the training labels; validation pairs keep true labels and
/// are drawn independently with the same regime.
pub fn train_head(
    ds: &Dataset,
    sampler: &SamplerConfig,
    label_mode: LabelMode,
    cfg: &HeadTrainConfig,
) -> Result<PairHead> {
    let mut train_sampler = *sampler;
    train_sampler.shuffle_labels = label_mode == LabelMode::ShuffledLabels;
    let pairs = sample_pairs(ds, &train_sampler)?;
    let ld = ds.header.latent_dim;

    let mut val_sampler = *sampler;
    val_sampler.shuffle_labels = false;
    val_sampler.n_pairs = cfg.val_pairs;
    val_sampler.seed = sampler.seed ^ 0x56414c; // independent validation stream
    let val_pairs = sample_pairs(ds, &val_sampler)?;

    let mut net = DenseNet::new(
        &[4 * ld, cfg.hidden, cfg.hidden, 1],
        &[Activation::Silu, Activation::Silu, Activation::Softplus],
        sampler.seed ^ 0x684541,
    );
    let mut opt = nn::AdamW::new(&net, cfg.lr, cfg.weight_decay);
    let bs = cfg.batch_size.min(pairs.len());
    let steps_per_epoch = pairs.len() / bs;
    if steps_per_epoch == 0 {
        return Err(Error::InvalidConfig("fewer pairs than one batch".into()));
    }

    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut erng = stream(sampler.seed, "head-epoch-shuffle", &[]);
    let mut input = vec![0.0; bs * 4 * ld];
    let mut targets = vec![0.0; bs];
    let mut last_loss = f64::NAN;
    let mut steps = 0usize;
    for _epoch in 0..cfg.epochs {
        for i in (1..order.len()).rev() {
            let j = erng.random_range(0..=i);
            order.swap(i, j);
        }
        for b in 0..steps_per_epoch {
            for r in 0..bs {
                let p: &TrainPair = &pairs[order[b * bs + r]];
                fill_pair_features_scaled(
                    &p.z_i,
                    &p.z_j,
                    1.0 / cfg.feature_scale,
                    &mut input[r * 4 * ld..(r + 1) * 4 * ld],
                );
                targets[r] = p.label / cfg.scale;
            }
            let (loss_sum, grads) = nn::train_step_chunked(&net, &input, bs, |offset, out| {
                let mut upstream = vec![0.0; out.len()];
                let mut loss = 0.0;
                for (i, u) in upstream.iter_mut().enumerate() {
                    let t = targets[offset + i];
                    loss += nn::smooth_l1(out[i], t);
                    *u = nn::smooth_l1_grad(out[i], t) / bs as f64;
                }
                (loss, upstream)
            })?;
            let loss = loss_sum / bs as f64;
            if !loss.is_finite() {
                return Err(Error::TrainingDivergence(format!(
                    "head loss non-finite at step {steps}"
                )));
            }
            last_loss = loss;
            opt.step(&mut net, &grads)?;
            steps += 1;
        }
    }

    // held-out validation with true labels
    let mut abs_sum = 0.0;
    let mut sq_steps = 0.0;
    let mut vin = vec![0.0; 4 * ld];
    for p in &val_pairs {
        fill_pair_features_scaled(&p.z_i, &p.z_j, 1.0 / cfg.feature_scale, &mut vin);
        let pred = net.forward_batch(&vin, 1)[0];
        let t = p.label / cfg.scale;
        abs_sum += (pred - t).abs();
        sq_steps += (pred * cfg.scale - p.label).powi(2);
    }
    // best constant predictor for MAE is the label median
    let mut sorted: Vec<f64> = val_pairs.iter().map(|p| p.label / cfg.scale).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    let constant_mae =
        sorted.iter().map(|l| (l - median).abs()).sum::<f64>() / sorted.len() as f64;

    let report = HeadReport {
        val_mae_scaled: abs_sum / val_pairs.len() as f64,
        val_rmse_steps: (sq_steps / val_pairs.len() as f64).sqrt(),
        constant_mae_scaled: constant_mae,
        train_pairs: pairs.len(),
        steps,
        final_train_loss: last_loss,
    };
    Ok(PairHead {
        net,
        scale: cfg.scale,
        feature_scale: cfg.feature_scale,
        label_mode,
        sampler: train_sampler,
        report,
    })
}

// --- projections -------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    Rowspace,
    Residual,
}

/// Symmetric idempotent projector onto (or away from) the probe rowspace.
#[derive(Debug, Clone)]
pub struct ProjectionOperator {
    pub p: Vec<f64>,
    pub dim: usize,
    pub mode: ProjectionMode,
}

/// P = W^T (W W^T)^{-1} W for rowspace, I - P for residual.
pub fn build_projection(probe: &XYProbe, mode: ProjectionMode) -> Result<ProjectionOperator> {
    let ld = probe.latent_dim;
    let w0 = &probe.w[..ld];
    let w1 = &probe.w[ld..];
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let (g11, g12, g22) = (dot(w0, w0), dot(w0, w1), dot(w1, w1));
    let det = g11 * g22 - g12 * g12;
    if det.abs() < 1e-18 || probe.min_singular_value() <= 1e-9 {
        return Err(Error::RankDeficient(1));
    }
    // (WW^T)^{-1}
    let (i11, i12, i22) = (g22 / det, -g12 / det, g11 / det);
    let mut p = vec![0.0; ld * ld];
    for a in 0..ld {
        for b in 0..ld {
            // row a of W^T is [w0[a], w1[a]]
            let v = w0[a] * (i11 * w0[b] + i12 * w1[b]) + w1[a] * (i12 * w0[b] + i22 * w1[b]);
            p[a * ld + b] = v;
        }
    }
    if mode == ProjectionMode::Residual {
        for a in 0..ld {
            for b in 0..ld {
                let id = if a == b { 1.0 } else { 0.0 };
                p[a * ld + b] = id - p[a * ld + b];
            }
        }
    }
    Ok(ProjectionOperator { p, dim: ld, mode })
}

impl ProjectionOperator {
    pub fn apply(&self, d: &[f64], out: &mut [f64]) {
        let n = self.dim;
        for (r, o) in out.iter_mut().enumerate() {
            *o = self.p[r * n..(r + 1) * n]
                .iter()
                .zip(d)
                .map(|(p, v)| p * v)
                .sum();
        }
    }

    pub fn projected_sq_norm(&self, d: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.dim];
        self.apply(d, &mut buf);
        buf.iter().map(|v| v * v).sum()
    }

    /// Max abs deviation of P^2 - P and P - P^T.
    pub fn idempotence_error(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += self.p[a * n + k] * self.p[k * n + b];
                }
                worst = worst.max((acc - self.p[a * n + b]).abs());
                worst = worst.max((self.p[a * n + b] - self.p[b * n + a]).abs());
            }
        }
        worst
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.p[i * self.dim + i]).sum()
    }
}

/// Share of squared difference mass inside the projection:
/// sum ||P d||^2 / sum ||d||^2.
pub fn rowspace_share(diffs: &[Vec<f64>], proj: &ProjectionOperator) -> Result<f64> {
    if diffs.is_empty() {
        return Err(Error::DegenerateInput("rowspace_share on empty set".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for d in diffs {
        num += proj.projected_sq_norm(d);
        den += d.iter().map(|v| v * v).sum::<f64>();
    }
    if den == 0.0 {
        return Err(Error::ZeroDenominator("rowspace_share"));
    }
    Ok(num / den)
}

// --- terminal costs -----------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    RawMse,
    PerdimStdMse,
    Trm,
    Hybrid,
    DecodedEuclid,
    DecodedGeodesic,
    RowspaceMse,
    ResidualMse,
    OracleEuclid,
    OracleGeodesic,
}

impl CostKind {
    pub fn name(self) -> &'static str {
        match self {
            CostKind::RawMse => "raw_mse",
            CostKind::PerdimStdMse => "perdim_std_mse",
            CostKind::Trm => "trm",
            CostKind::Hybrid => "hybrid",
            CostKind::DecodedEuclid => "decoded_euclid",
            CostKind::DecodedGeodesic => "decoded_geodesic",
            CostKind::RowspaceMse => "rowspace_mse",
            CostKind::ResidualMse => "residual_mse",
            CostKind::OracleEuclid => "oracle_euclid",
            CostKind::OracleGeodesic => "oracle_geodesic",
        }
    }

    pub fn is_oracle(self) -> bool {
        matches!(self, CostKind::OracleEuclid | CostKind::OracleGeodesic)
    }

    pub fn needs_head(self) -> bool {
        matches!(self, CostKind::Trm | CostKind::Hybrid)
    }

    pub fn needs_probe(self) -> bool {
        matches!(
            self,
            CostKind::DecodedEuclid
                | CostKind::DecodedGeodesic
                | CostKind::RowspaceMse
                | CostKind::ResidualMse
        )
    }

    /// Whether scoring needs latent rollouts at all. Oracle diagnostics rank
    /// candidates purely from simulator states.
    pub fn needs_latents(self) -> bool {
        !self.is_oracle()
    }
}

impl std::str::FromStr for CostKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "raw_mse" => CostKind::RawMse,
            "perdim_std_mse" => CostKind::PerdimStdMse,
            "trm" => CostKind::Trm,
            "hybrid" => CostKind::Hybrid,
            "decoded_euclid" => CostKind::DecodedEuclid,
            "decoded_geodesic" => CostKind::DecodedGeodesic,
            "rowspace_mse" => CostKind::RowspaceMse,
            "residual_mse" => CostKind::ResidualMse,
            "oracle_euclid" => CostKind::OracleEuclid,
            "oracle_geodesic" => CostKind::OracleGeodesic,
            other => return Err(Error::InvalidConfig(format!("unknown cost kind `{other}`"))),
        })
    }
}

/// Per-dimension dataset statistics for the standardized-MSE control.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerDimStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn perdim_stats(ds: &Dataset) -> PerDimStats {
    let ld = ds.header.latent_dim;
    let n = ds.n_rows() as f64;
    let mut mean = vec![0.0; ld];
    let mut sq = vec![0.0; ld];
    for ep in 0..ds.header.n_episodes {
        for t in 0..ds.header.length {
            for (d, v) in ds.latent_f64(ep, t).iter().enumerate() {
                mean[d] += v;
                sq[d] += v * v;
            }
        }
    }
    for d in 0..ld {
        mean[d] /= n;
        sq[d] = (sq[d] / n - mean[d] * mean[d]).max(1e-12).sqrt();
    }
    PerDimStats { mean, std: sq }
}

/// A fully-resolved candidate scorer. Holds shared references to whatever
/// frozen artifacts its kind needs.
#[derive(Debug, Clone)]
pub struct TerminalCost {
    pub kind: CostKind,
    pub lambda: f64,
    pub eps: f64,
    pub head: Option<Arc<PairHead>>,
    pub probe: Option<Arc<XYProbe>>,
    pub projection: Option<Arc<ProjectionOperator>>,
    pub perdim: Option<Arc<PerDimStats>>,
    pub geometry: WorldGeometry,
}

/// Flags raised while scoring one candidate batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BatchFlags {
    /// Hybrid fell back to a single component because the other had zero
    /// variance in this batch.
    pub degenerate_hybrid: bool,
}

/// Simulator-derived candidate information for oracle diagnostics.
#[derive(Debug, Clone)]
pub struct OracleInputs<'a> {
    pub goal: AgentState,
    pub terminal_states: &'a [AgentState],
}

impl TerminalCost {
    pub fn new(kind: CostKind, geometry: WorldGeometry) -> TerminalCost {
        TerminalCost {
            kind,
            lambda: 1.0,
            eps: 1e-8,
            head: None,
            probe: None,
            projection: None,
            perdim: None,
            geometry,
        }
    }

    pub fn with_head(mut self, head: Arc<PairHead>) -> Self {
        self.head = Some(head);
        self
    }

    pub fn with_probe(mut self, probe: Arc<XYProbe>) -> Self {
        self.probe = Some(probe);
        self
    }

    pub fn with_projection(mut self, p: Arc<ProjectionOperator>) -> Self {
        self.projection = Some(p);
        self
    }

    pub fn with_perdim(mut self, s: Arc<PerDimStats>) -> Self {
        self.perdim = Some(s);
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    /// Score a candidate batch. `terminals` is n x latent_dim (may be empty
    /// for oracle kinds), `z_g` the goal latent, `oracle` the simulator-side
    /// inputs for oracle kinds. `deployment` rejects oracle kinds outright.
    pub fn score_candidates(
        &self,
        terminals: &[f64],
        n: usize,
        z_g: &[f64],
        oracle: Option<&OracleInputs>,
        deployment: bool,
    ) -> Result<(Vec<f64>, BatchFlags)> {
        if n == 0 {
            return Err(Error::DegenerateInput("empty candidate batch".into()));
        }
        let ld = z_g.len();
        let mut flags = BatchFlags::default();
        let costs = match self.kind {
            CostKind::RawMse => raw_mse(terminals, n, z_g),
            CostKind::PerdimStdMse => {
                let stats = self
                    .perdim
                    .as_ref()
                    .ok_or_else(|| Error::InvalidConfig("perdim_std_mse needs stats".into()))?;
                (0..n)
                    .map(|i| {
                        terminals[i * ld..(i + 1) * ld]
                            .iter()
                            .zip(z_g)
                            .zip(&stats.std)
                            .map(|((a, b), s)| {
                                let e = (a - b) / s;
                                e * e
                            })
                            .sum()
                    })
                    .collect()
            }
            CostKind::Trm => self.require_head()?.score_batch(terminals, n, z_g),
            CostKind::Hybrid => {
                let raw = raw_mse(terminals, n, z_g);
                let trm = self.require_head()?.score_batch(terminals, n, z_g);
                let (raw_std, raw_ok) = standardize(&raw, self.eps);
                let (trm_std, trm_ok) = standardize(&trm, self.eps);
                match (raw_ok, trm_ok) {
                    (true, true) => raw_std
                        .iter()
                        .zip(&trm_std)
                        .map(|(a, b)| a + self.lambda * b)
                        .collect(),
                    (true, false) => {
                        flags.degenerate_hybrid = true;
                        raw_std
                    }
                    (false, true) => {
                        flags.degenerate_hybrid = true;
                        trm_std.iter().map(|b| self.lambda * b).collect()
                    }
                    (false, false) => {
                        flags.degenerate_hybrid = true;
                        vec![0.0; n]
                    }
                }
            }
            CostKind::DecodedEuclid | CostKind::DecodedGeodesic => {
                let probe = self.require_probe()?;
                let goal_pt = probe.decode(z_g);
                let clamp = |s: AgentState| {
                    AgentState::new(
                        s.x.clamp(0.0, self.geometry.width),
                        s.y.clamp(0.0, self.geometry.height),
                    )
                };
                (0..n)
                    .map(|i| {
                        let p = probe.decode(&terminals[i * ld..(i + 1) * ld]);
                        if self.kind == CostKind::DecodedEuclid {
                            p.dist(&goal_pt)
                        } else {
                            geodesic(clamp(p), clamp(goal_pt), &self.geometry)
                        }
                    })
                    .collect()
            }
            CostKind::RowspaceMse | CostKind::ResidualMse => {
                let proj = self.projection.as_ref().ok_or_else(|| {
                    Error::InvalidConfig("projection cost needs an operator".into())
                })?;
                let expected = match self.kind {
                    CostKind::RowspaceMse => ProjectionMode::Rowspace,
                    _ => ProjectionMode::Residual,
                };
                if proj.mode != expected {
                    return Err(Error::InvalidConfig(
                        "projection operator mode does not match cost kind".into(),
                    ));
                }
                let mut d = vec![0.0; ld];
                (0..n)
                    .map(|i| {
                        for (k, dv) in d.iter_mut().enumerate() {
                            *dv = terminals[i * ld + k] - z_g[k];
                        }
                        proj.projected_sq_norm(&d)
                    })
                    .collect()
            }
            CostKind::OracleEuclid | CostKind::OracleGeodesic => {
                if deployment {
                    return Err(Error::OracleRefused(self.kind.name().to_string()));
                }
                let oracle = oracle.ok_or(Error::MissingOracleState)?;
                if oracle.terminal_states.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: oracle.terminal_states.len(),
                        context: "oracle terminal states",
                    });
                }
                oracle
                    .terminal_states
                    .iter()
                    .map(|s| {
                        if self.kind == CostKind::OracleEuclid {
                            s.dist(&oracle.goal)
                        } else {
                            geodesic(*s, oracle.goal, &self.geometry)
                        }
                    })
                    .collect()
            }
        };
        Ok((costs, flags))
    }

    fn require_head(&self) -> Result<&PairHead> {
        self.head
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("cost kind needs a trained head".into()))
    }

    fn require_probe(&self) -> Result<&XYProbe> {
        self.probe
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("cost kind needs a fitted probe".into()))
    }
}

fn raw_mse(terminals: &[f64], n: usize, z_g: &[f64]) -> Vec<f64> {
    let ld = z_g.len();
    (0..n)
        .map(|i| {
            terminals[i * ld..(i + 1) * ld]
                .iter()
                .zip(z_g)
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        })
        .collect()
}

/// Population-std standardization; the bool is false when the std is zero
/// (degenerate component).
fn standardize(xs: &[f64], eps: f64) -> (Vec<f64>, bool) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let out = xs.iter().map(|x| (x - mean) / (std + eps)).collect();
    (out, std > 0.0)
}
