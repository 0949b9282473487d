//! Logged-trajectory storage and temporal pair sampling.
//!
//! Collection rolls a correlated random walk through the environment,
//! encoding every visited state with the fixed encoder and the episode's own
//! nuisance phase. Rows are stored as f32 (the on-disk format) immediately,
//! so in-memory use and save/load round trips see identical values.
//!
//! Pair sampling implements the three temporal regimes (random full-horizon,
//! balanced full-horizon, balanced capped) plus episode-wise row subsampling
//! and the shuffled-label control.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::tworoom::{opposite_sides, Action, AgentState, EnvConfig, WorldGeometry};
use crate::worldmodel::Encoder;

pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub version: u32,
    pub n_episodes: usize,
    pub length: usize,
    pub latent_dim: usize,
    pub seed: u64,
    pub encoder_seed: u64,
    pub a_max: f64,
    pub geometry: WorldGeometry,
    /// Row layout of the binary file, kept here so the file is self-describing.
    pub layout: String,
    /// Fraction of episodes containing at least one doorway crossing.
    pub crossing_fraction: f64,
}

/// Episode-major, row-major f32 storage. Row stride is
/// 2 (state) + latent_dim + 2 (action taken from this row; last row zero).
#[derive(Debug, Clone)]
pub struct Dataset {
    pub header: DatasetHeader,
    data: Vec<f32>,
}

impl Dataset {
    #[inline]
    pub fn row_stride(&self) -> usize {
        2 + self.header.latent_dim + 2
    }

    #[inline]
    fn row(&self, ep: usize, t: usize) -> &[f32] {
        let stride = self.row_stride();
        let ix = (ep * self.header.length + t) * stride;
        &self.data[ix..ix + stride]
    }

    pub fn state(&self, ep: usize, t: usize) -> AgentState {
        let r = self.row(ep, t);
        AgentState::new(r[0] as f64, r[1] as f64)
    }

    pub fn latent_f64(&self, ep: usize, t: usize) -> Vec<f64> {
        let ld = self.header.latent_dim;
        self.row(ep, t)[2..2 + ld].iter().map(|&v| v as f64).collect()
    }

    pub fn action(&self, ep: usize, t: usize) -> Action {
        let ld = self.header.latent_dim;
        let r = self.row(ep, t);
        Action::new(r[2 + ld] as f64, r[2 + ld + 1] as f64)
    }

    pub fn n_rows(&self) -> usize {
        self.header.n_episodes * self.header.length
    }

    pub fn save(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let hpath = dir.join("header.json");
        let header = serde_json::to_string_pretty(&self.header)?;
        std::fs::write(&hpath, header).map_err(|e| Error::io(hpath, e))?;
        let mut bytes = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let bpath = dir.join("data.bin");
        std::fs::write(&bpath, bytes).map_err(|e| Error::io(bpath, e))
    }

    pub fn load(dir: &std::path::Path) -> Result<Dataset> {
        let hpath = dir.join("header.json");
        if !hpath.exists() {
            return Err(Error::MissingArtifact(hpath));
        }
        let header: DatasetHeader = serde_json::from_str(
            &std::fs::read_to_string(&hpath).map_err(|e| Error::io(&hpath, e))?,
        )?;
        let bpath = dir.join("data.bin");
        let bytes = std::fs::read(&bpath).map_err(|e| Error::io(&bpath, e))?;
        let stride = 2 + header.latent_dim + 2;
        let expected = header.n_episodes * header.length * stride * 4;
        if bytes.len() != expected {
            return Err(Error::InvalidConfig(format!(
                "dataset blob is {} bytes, expected {expected}",
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Dataset { header, data })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollectConfig {
    pub n_episodes: usize,
    pub length: usize,
    /// Correlated-walk momentum: a_{t+1} = clip(momentum * a_t + noise).
    pub momentum: f64,
    /// Noise is uniform in [-noise_amp, noise_amp]^2.
    pub noise_amp: f64,
    /// Minimum fraction of episodes that must cross the doorway.
    pub min_crossing_fraction: f64,
    /// Fraction of episode starts reset inside the doorway corridor. Uniform
    /// free-space starts alone leave the walk crossing the door in only ~20%
    /// of episodes, under the coverage gate.
    pub door_start_fraction: f64,
}

impl Default for CollectConfig {
    fn default() -> Self {
        CollectConfig {
            n_episodes: 2000,
            length: 224,
            momentum: 0.8,
            noise_amp: 4.0,
            min_crossing_fraction: 0.30,
            door_start_fraction: 0.3,
        }
    }
}

/// Roll the exploration policy and encode every visited state. Episodes own
/// independent RNG streams derived from (seed, episode id), so sharding over
/// workers cannot change the result.
pub fn collect(
    geom: &WorldGeometry,
    env: &EnvConfig,
    encoder: &Encoder,
    cfg: &CollectConfig,
    seed: u64,
) -> Result<Dataset> {
    use rayon::prelude::*;
    let ld = encoder.cfg.latent_dim;
    let stride = 2 + ld + 2;
    let len = cfg.length;

    let episodes: Vec<(Vec<f32>, bool)> = (0..cfg.n_episodes)
        .into_par_iter()
        .map(|ep| {
            let mut rng = stream(seed, "collect-episode", &[ep as u64]);
            let mut nrng = stream(seed, "collect-nuisance", &[ep as u64]);
            let mut rows = vec![0.0f32; len * stride];
            let mut state = if rng.random::<f64>() < cfg.door_start_fraction {
                sample_corridor_point(&mut rng, geom, 16.0)
            } else {
                sample_free_point(&mut rng, geom, 16.0)
            };
            let mut nuisance = encoder.nuisance_init(&mut nrng);
            let mut crossed = false;
            let mut prev_action = Action::new(0.0, 0.0);
            for t in 0..len {
                let z = encoder.encode(state, &nuisance);
                let row = &mut rows[t * stride..(t + 1) * stride];
                row[0] = state.x as f32;
                row[1] = state.y as f32;
                for (dst, v) in row[2..2 + ld].iter_mut().zip(&z) {
                    *dst = *v as f32;
                }
                if t + 1 < len {
                    let nx = rng.random_range(-cfg.noise_amp..cfg.noise_amp);
                    let ny = rng.random_range(-cfg.noise_amp..cfg.noise_amp);
                    let action = Action::new(
                        cfg.momentum * prev_action.dx + nx,
                        cfg.momentum * prev_action.dy + ny,
                    )
                    .clipped(env.a_max);
                    row[2 + ld] = action.dx as f32;
                    row[2 + ld + 1] = action.dy as f32;
                    let next = crate::tworoom::step(state, action, geom, env);
                    if opposite_sides(state.x, next.x, geom) {
                        crossed = true;
                    }
                    nuisance = encoder.nuisance_step(&nuisance, state);
                    state = next;
                    prev_action = action;
                }
            }
            (rows, crossed)
        })
        .collect();

    let crossing = episodes.iter().filter(|(_, c)| *c).count() as f64 / cfg.n_episodes as f64;
    if crossing < cfg.min_crossing_fraction {
        return Err(Error::Coverage {
            got: crossing,
            required: cfg.min_crossing_fraction,
        });
    }

    let mut data = Vec::with_capacity(cfg.n_episodes * len * stride);
    for (rows, _) in episodes {
        data.extend_from_slice(&rows);
    }
    Ok(Dataset {
        header: DatasetHeader {
            version: DATASET_VERSION,
            n_episodes: cfg.n_episodes,
            length: len,
            latent_dim: ld,
            seed,
            encoder_seed: encoder.seed,
            a_max: env.a_max,
            geometry: *geom,
            layout: format!(
                "episode-major rows of f32le [x, y, z0..z{}, action_dx, action_dy]; \
                 the action in row t is the action taken from t (last row zero)",
                ld - 1
            ),
            crossing_fraction: crossing,
        },
        data,
    })
}

pub fn sample_free_point<R: Rng>(rng: &mut R, geom: &WorldGeometry, margin: f64) -> AgentState {
    loop {
        let x = rng.random_range(margin..geom.width - margin);
        let y = rng.random_range(margin..geom.height - margin);
        if (x - geom.wall_x).abs() >= margin {
            return AgentState::new(x, y);
        }
    }
}

/// Start point in the doorway mouth: x within 32 units of the wall, y inside
/// the door band. These rows are open space, and walks from here cross the
/// wall plane with high probability.
fn sample_corridor_point<R: Rng>(rng: &mut R, geom: &WorldGeometry, margin: f64) -> AgentState {
    let x = rng.random_range((geom.wall_x - 32.0).max(margin)..(geom.wall_x + 32.0).min(geom.width - margin));
    let y = rng.random_range(geom.door_lo + 2.0..geom.door_hi - 2.0);
    AgentState::new(x, y)
}

// --- pair sampling ----------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerRegime {
    RandomFull,
    BalancedFull,
    BalancedCapped,
}

impl SamplerRegime {
    pub fn name(self) -> &'static str {
        match self {
            SamplerRegime::RandomFull => "random_full",
            SamplerRegime::BalancedFull => "balanced_full",
            SamplerRegime::BalancedCapped => "balanced_capped",
        }
    }
}

impl std::str::FromStr for SamplerRegime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random_full" => Ok(SamplerRegime::RandomFull),
            "balanced_full" => Ok(SamplerRegime::BalancedFull),
            "balanced_capped" => Ok(SamplerRegime::BalancedCapped),
            other => Err(Error::InvalidConfig(format!("unknown sampler regime `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub regime: SamplerRegime,
    /// Max separation; only read in the capped regime.
    pub delta_max: usize,
    pub n_pairs: usize,
    /// Bin count for the balanced regimes.
    pub bins: usize,
    /// If set, subsample whole episodes until this many rows are retained and
    /// sample pairs only among them.
    pub source_rows: Option<usize>,
    pub shuffle_labels: bool,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn balanced_full(n_pairs: usize, seed: u64) -> Self {
        SamplerConfig {
            regime: SamplerRegime::BalancedFull,
            delta_max: 0,
            n_pairs,
            bins: 10,
            source_rows: None,
            shuffle_labels: false,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainPair {
    pub episode: usize,
    pub t_i: usize,
    pub t_j: usize,
    pub z_i: Vec<f64>,
    pub z_j: Vec<f64>,
    /// Temporal separation label (shuffled under the label-shuffle control).
    pub label: f64,
}

/// Draw temporal training pairs under the configured regime. Deterministic
/// given cfg.seed.
pub fn sample_pairs(ds: &Dataset, cfg: &SamplerConfig) -> Result<Vec<TrainPair>> {
    let len = ds.header.length;
    if ds.header.n_episodes == 0 || len < 2 {
        return Err(Error::InvalidConfig("dataset too small for pair sampling".into()));
    }
    if cfg.n_pairs == 0 || cfg.bins == 0 {
        return Err(Error::InvalidConfig("n_pairs and bins must be positive".into()));
    }
    let max_delta = match cfg.regime {
        SamplerRegime::BalancedCapped => {
            if cfg.delta_max >= len {
                return Err(Error::InvalidConfig(format!(
                    "delta_max {} must be below episode length {len}",
                    cfg.delta_max
                )));
            }
            if cfg.delta_max < 1 {
                return Err(Error::InvalidConfig("delta_max must be >= 1".into()));
            }
            cfg.delta_max
        }
        _ => len - 1,
    };
    if cfg.bins > max_delta {
        return Err(Error::InvalidConfig(format!(
            "bins {} exceed the separation range {max_delta}",
            cfg.bins
        )));
    }

    // Episode pool, optionally subsampled episode-wise to a row budget.
    let mut episodes: Vec<usize> = (0..ds.header.n_episodes).collect();
    if let Some(rows) = cfg.source_rows {
        let keep = rows.div_ceil(len).clamp(1, ds.header.n_episodes);
        let mut srng = stream(cfg.seed, "pair-subsample", &[]);
        for i in (1..episodes.len()).rev() {
            let j = srng.random_range(0..=i);
            episodes.swap(i, j);
        }
        episodes.truncate(keep);
        episodes.sort_unstable();
    }

    let balanced = matches!(
        cfg.regime,
        SamplerRegime::BalancedFull | SamplerRegime::BalancedCapped
    );

    let mut rng = stream(cfg.seed, "pair-draw", &[]);
    let mut pairs = Vec::with_capacity(cfg.n_pairs);
    for _ in 0..cfg.n_pairs {
        let ep = episodes[rng.random_range(0..episodes.len())];
        let delta = if balanced {
            // equal-width bins over [1, max_delta]; integer edges
            let b = rng.random_range(0..cfg.bins);
            let lo = 1 + b * max_delta / cfg.bins;
            let hi = 1 + (b + 1) * max_delta / cfg.bins; // exclusive
            rng.random_range(lo..hi.max(lo + 1))
        } else {
            rng.random_range(1..=max_delta)
        };
        let t = rng.random_range(0..len - delta);
        let (t_i, t_j) = if rng.random::<bool>() {
            (t, t + delta)
        } else {
            (t + delta, t)
        };
        pairs.push(TrainPair {
            episode: ep,
            t_i,
            t_j,
            z_i: ds.latent_f64(ep, t_i),
            z_j: ds.latent_f64(ep, t_j),
            label: delta as f64,
        });
    }

    if cfg.shuffle_labels {
        let mut lrng = stream(cfg.seed, "pair-shuffle-labels", &[]);
        let mut labels: Vec<f64> = pairs.iter().map(|p| p.label).collect();
        for i in (1..labels.len()).rev() {
            let j = lrng.random_range(0..=i);
            labels.swap(i, j);
        }
        for (p, l) in pairs.iter_mut().zip(labels) {
            p.label = l;
        }
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldmodel::EncoderConfig;

    fn tiny_dataset(n_episodes: usize, length: usize) -> Dataset {
        let geom = WorldGeometry::default();
        let env = EnvConfig::default();
        let encoder = Encoder::create(EncoderConfig::default(), 42).unwrap();
        let cfg = CollectConfig {
            n_episodes,
            length,
            min_crossing_fraction: 0.0,
            ..CollectConfig::default()
        };
        collect(&geom, &env, &encoder, &cfg, 7).unwrap()
    }

    #[test]
    fn collect_row_counts() {
        let ds = tiny_dataset(4, 32);
        assert_eq!(ds.n_rows(), 4 * 32);
        assert_eq!(ds.row_stride(), 36);
    }

    #[test]
    fn collect_is_deterministic() {
        let a = tiny_dataset(3, 16);
        let b = tiny_dataset(3, 16);
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn save_load_round_trip() {
        let ds = tiny_dataset(3, 16);
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path()).unwrap();
        let ds2 = Dataset::load(dir.path()).unwrap();
        assert_eq!(ds.data, ds2.data);
        assert_eq!(ds.header, ds2.header);
    }

    #[test]
    fn forced_pair_on_length_two_episode() {
        let ds = tiny_dataset(1, 2);
        let cfg = SamplerConfig {
            regime: SamplerRegime::RandomFull,
            delta_max: 0,
            n_pairs: 8,
            bins: 1,
            source_rows: None,
            shuffle_labels: false,
            seed: 1,
        };
        let pairs = sample_pairs(&ds, &cfg).unwrap();
        assert!(pairs.iter().all(|p| p.label == 1.0));
        assert!(pairs
            .iter()
            .all(|p| (p.t_i, p.t_j) == (0, 1) || (p.t_i, p.t_j) == (1, 0)));
    }

    #[test]
    fn labels_match_separation_without_shuffle() {
        let ds = tiny_dataset(4, 32);
        let cfg = SamplerConfig {
            regime: SamplerRegime::BalancedFull,
            delta_max: 0,
            n_pairs: 500,
            bins: 10,
            source_rows: None,
            shuffle_labels: false,
            seed: 2,
        };
        for p in sample_pairs(&ds, &cfg).unwrap() {
            assert_eq!(p.label, (p.t_i as i64 - p.t_j as i64).unsigned_abs() as f64);
            assert_eq!(p.z_i, ds.latent_f64(p.episode, p.t_i));
        }
    }

    #[test]
    fn shuffle_preserves_label_multiset() {
        let ds = tiny_dataset(4, 32);
        let mut cfg = SamplerConfig {
            regime: SamplerRegime::BalancedFull,
            delta_max: 0,
            n_pairs: 400,
            bins: 10,
            source_rows: None,
            shuffle_labels: false,
            seed: 3,
        };
        let plain = sample_pairs(&ds, &cfg).unwrap();
        cfg.shuffle_labels = true;
        let shuffled = sample_pairs(&ds, &cfg).unwrap();
        let mut a: Vec<i64> = plain.iter().map(|p| p.label as i64).collect();
        let mut b: Vec<i64> = shuffled.iter().map(|p| p.label as i64).collect();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
        // features untouched
        for (p, q) in plain.iter().zip(&shuffled) {
            assert_eq!(p.z_i, q.z_i);
            assert_eq!(p.t_i, q.t_i);
        }
    }

    #[test]
    fn capped_rejects_delta_at_or_above_length() {
        let ds = tiny_dataset(2, 16);
        let cfg = SamplerConfig {
            regime: SamplerRegime::BalancedCapped,
            delta_max: 16,
            n_pairs: 10,
            bins: 4,
            source_rows: None,
            shuffle_labels: false,
            seed: 4,
        };
        assert!(sample_pairs(&ds, &cfg).is_err());
    }

    #[test]
    fn capped_respects_delta_max() {
        let ds = tiny_dataset(2, 64);
        let cfg = SamplerConfig {
            regime: SamplerRegime::BalancedCapped,
            delta_max: 9,
            n_pairs: 300,
            bins: 3,
            source_rows: None,
            shuffle_labels: false,
            seed: 5,
        };
        let pairs = sample_pairs(&ds, &cfg).unwrap();
        assert!(pairs.iter().all(|p| p.label >= 1.0 && p.label <= 9.0));
        // every separation in range is reachable
        let mut seen = std::collections::HashSet::new();
        for p in &pairs {
            seen.insert(p.label as usize);
        }
        assert_eq!(seen.len(), 9);
    }

    #[test]
    fn source_rows_limits_episode_pool() {
        let ds = tiny_dataset(8, 16);
        let cfg = SamplerConfig {
            regime: SamplerRegime::RandomFull,
            delta_max: 0,
            n_pairs: 400,
            bins: 1,
            source_rows: Some(32), // 2 episodes
            shuffle_labels: false,
            seed: 6,
        };
        let pairs = sample_pairs(&ds, &cfg).unwrap();
        let eps: std::collections::HashSet<usize> = pairs.iter().map(|p| p.episode).collect();
        assert!(eps.len() <= 2);
    }
}
