//! Run configuration: one plain-text file (key = value, [sections]) checked
//! into every run directory, so each run is self-describing. No environment
//! variables.

use crate::error::{Error, Result};
use crate::metric::HeadTrainConfig;
use crate::planner::CEMConfig;
use crate::trajstore::CollectConfig;
use crate::tworoom::{EnvConfig, WorldGeometry};
use crate::worldmodel::{DynamicsConfig, EncoderConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Testbed seeds (one frozen model stack per seed).
    pub seeds: Vec<u64>,
    /// Manifests are shared across seeds, generated from this seed.
    pub manifest_seed: u64,
    pub geometry: WorldGeometry,
    pub env: EnvConfig,
    pub encoder: EncoderConfig,
    pub collect: CollectConfig,
    pub dynamics: DynamicsConfig,
    pub probe_rows: usize,
    pub probe_test_rows: usize,
    pub probe_ridge: f64,
    pub head: HeadTrainConfig,
    /// Default pair budget for the headline heads.
    pub head_pairs: usize,
    pub head_bins: usize,
    pub cem: CEMConfig,
    pub budget: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seeds: vec![3072, 3073, 3074],
            manifest_seed: 7001,
            geometry: WorldGeometry::default(),
            env: EnvConfig::default(),
            encoder: EncoderConfig::default(),
            collect: CollectConfig::default(),
            dynamics: DynamicsConfig::default(),
            probe_rows: 20_000,
            probe_test_rows: 5_000,
            probe_ridge: 1e-6,
            head: HeadTrainConfig::default(),
            head_pairs: 100_000,
            head_bins: 10,
            cem: CEMConfig::default(),
            budget: 50,
        }
    }
}

impl RunConfig {
    /// Serialize in a fixed order; re-parsing yields an identical struct and
    /// identical bytes.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let seeds = self
            .seeds
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        s.push_str("[run]\n");
        s.push_str(&format!("seeds = {seeds}\n"));
        s.push_str(&format!("manifest_seed = {}\n", self.manifest_seed));
        s.push_str(&format!("budget = {}\n", self.budget));
        s.push_str("\n[geometry]\n");
        s.push_str(&format!("width = {}\n", self.geometry.width));
        s.push_str(&format!("height = {}\n", self.geometry.height));
        s.push_str(&format!("wall_x = {}\n", self.geometry.wall_x));
        s.push_str(&format!("door_lo = {}\n", self.geometry.door_lo));
        s.push_str(&format!("door_hi = {}\n", self.geometry.door_hi));
        s.push_str("\n[env]\n");
        s.push_str(&format!("a_max = {}\n", self.env.a_max));
        s.push_str(&format!("r_succ = {}\n", self.env.r_succ));
        s.push_str(&format!("wall_standoff = {}\n", self.env.wall_standoff));
        s.push_str(&format!("stuck_band = {}\n", self.env.stuck_band));
        s.push_str("\n[encoder]\n");
        s.push_str(&format!("latent_dim = {}\n", self.encoder.latent_dim));
        s.push_str(&format!("nuisance_dim = {}\n", self.encoder.nuisance_dim));
        s.push_str(&format!("nuisance_radius = {}\n", self.encoder.nuisance_radius));
        s.push_str(&format!("gamma_xy = {}\n", self.encoder.gamma_xy));
        s.push_str(&format!("gamma_n = {}\n", self.encoder.gamma_n));
        s.push_str(&format!("pos_scale = {}\n", self.encoder.pos_scale));
        s.push_str(&format!("freq_scale = {}\n", self.encoder.freq_scale));
        s.push_str(&format!("mod_amp = {}\n", self.encoder.mod_amp));
        s.push_str("\n[collect]\n");
        s.push_str(&format!("n_episodes = {}\n", self.collect.n_episodes));
        s.push_str(&format!("length = {}\n", self.collect.length));
        s.push_str(&format!("momentum = {}\n", self.collect.momentum));
        s.push_str(&format!("noise_amp = {}\n", self.collect.noise_amp));
        s.push_str(&format!(
            "min_crossing_fraction = {}\n",
            self.collect.min_crossing_fraction
        ));
        s.push_str(&format!(
            "door_start_fraction = {}\n",
            self.collect.door_start_fraction
        ));
        s.push_str("\n[dynamics]\n");
        s.push_str(&format!("hidden = {}\n", self.dynamics.hidden));
        s.push_str(&format!("lr = {}\n", self.dynamics.lr));
        s.push_str(&format!("weight_decay = {}\n", self.dynamics.weight_decay));
        s.push_str(&format!("batch_size = {}\n", self.dynamics.batch_size));
        s.push_str(&format!("train_steps = {}\n", self.dynamics.train_steps));
        s.push_str(&format!(
            "holdout_episodes = {}\n",
            self.dynamics.holdout_episodes
        ));
        s.push_str(&format!("latent_scale = {}\n", self.dynamics.latent_scale));
        s.push_str("\n[probe]\n");
        s.push_str(&format!("rows = {}\n", self.probe_rows));
        s.push_str(&format!("test_rows = {}\n", self.probe_test_rows));
        s.push_str(&format!("ridge = {}\n", self.probe_ridge));
        s.push_str("\n[head]\n");
        s.push_str(&format!("hidden = {}\n", self.head.hidden));
        s.push_str(&format!("lr = {}\n", self.head.lr));
        s.push_str(&format!("weight_decay = {}\n", self.head.weight_decay));
        s.push_str(&format!("batch_size = {}\n", self.head.batch_size));
        s.push_str(&format!("epochs = {}\n", self.head.epochs));
        s.push_str(&format!("scale = {}\n", self.head.scale));
        s.push_str(&format!("feature_scale = {}\n", self.head.feature_scale));
        s.push_str(&format!("val_pairs = {}\n", self.head.val_pairs));
        s.push_str(&format!("pairs = {}\n", self.head_pairs));
        s.push_str(&format!("bins = {}\n", self.head_bins));
        s.push_str("\n[cem]\n");
        s.push_str(&format!("n_samples = {}\n", self.cem.n_samples));
        s.push_str(&format!("n_iters = {}\n", self.cem.n_iters));
        s.push_str(&format!("top_k = {}\n", self.cem.top_k));
        s.push_str(&format!("horizon = {}\n", self.cem.horizon));
        s.push_str(&format!("init_std = {}\n", self.cem.init_std));
        s.push_str(&format!("min_std = {}\n", self.cem.min_std));
        s.push_str(&format!("replan_block = {}\n", self.cem.replan_block));
        s
    }

    pub fn from_text(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = line[1..line.len() - 1].to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            cfg.set(&section, key, value).map_err(|e| {
                Error::InvalidConfig(format!("line {}: {e}", lineno + 1))
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        let f = || -> Result<f64> {
            value
                .parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("bad float `{value}` for {key}")))
        };
        let u = || -> Result<usize> {
            value
                .parse::<usize>()
                .map_err(|_| Error::InvalidConfig(format!("bad integer `{value}` for {key}")))
        };
        match (section, key) {
            ("run", "seeds") => {
                self.seeds = value
                    .split(',')
                    .map(|v| {
                        v.trim().parse::<u64>().map_err(|_| {
                            Error::InvalidConfig(format!("bad seed `{v}`"))
                        })
                    })
                    .collect::<Result<Vec<u64>>>()?;
            }
            ("run", "manifest_seed") => self.manifest_seed = u()? as u64,
            ("run", "budget") => self.budget = u()?,
            ("geometry", "width") => self.geometry.width = f()?,
            ("geometry", "height") => self.geometry.height = f()?,
            ("geometry", "wall_x") => self.geometry.wall_x = f()?,
            ("geometry", "door_lo") => self.geometry.door_lo = f()?,
            ("geometry", "door_hi") => self.geometry.door_hi = f()?,
            ("env", "a_max") => self.env.a_max = f()?,
            ("env", "r_succ") => self.env.r_succ = f()?,
            ("env", "wall_standoff") => self.env.wall_standoff = f()?,
            ("env", "stuck_band") => self.env.stuck_band = f()?,
            ("encoder", "latent_dim") => self.encoder.latent_dim = u()?,
            ("encoder", "nuisance_dim") => self.encoder.nuisance_dim = u()?,
            ("encoder", "nuisance_radius") => self.encoder.nuisance_radius = f()?,
            ("encoder", "gamma_xy") => self.encoder.gamma_xy = f()?,
            ("encoder", "gamma_n") => self.encoder.gamma_n = f()?,
            ("encoder", "pos_scale") => self.encoder.pos_scale = f()?,
            ("encoder", "freq_scale") => self.encoder.freq_scale = f()?,
            ("encoder", "mod_amp") => self.encoder.mod_amp = f()?,
            ("collect", "n_episodes") => self.collect.n_episodes = u()?,
            ("collect", "length") => self.collect.length = u()?,
            ("collect", "momentum") => self.collect.momentum = f()?,
            ("collect", "noise_amp") => self.collect.noise_amp = f()?,
            ("collect", "min_crossing_fraction") => self.collect.min_crossing_fraction = f()?,
            ("collect", "door_start_fraction") => self.collect.door_start_fraction = f()?,
            ("dynamics", "hidden") => self.dynamics.hidden = u()?,
            ("dynamics", "lr") => self.dynamics.lr = f()?,
            ("dynamics", "weight_decay") => self.dynamics.weight_decay = f()?,
            ("dynamics", "batch_size") => self.dynamics.batch_size = u()?,
            ("dynamics", "train_steps") => self.dynamics.train_steps = u()?,
            ("dynamics", "holdout_episodes") => self.dynamics.holdout_episodes = u()?,
            ("dynamics", "latent_scale") => self.dynamics.latent_scale = f()?,
            ("probe", "rows") => self.probe_rows = u()?,
            ("probe", "test_rows") => self.probe_test_rows = u()?,
            ("probe", "ridge") => self.probe_ridge = f()?,
            ("head", "hidden") => self.head.hidden = u()?,
            ("head", "lr") => self.head.lr = f()?,
            ("head", "weight_decay") => self.head.weight_decay = f()?,
            ("head", "batch_size") => self.head.batch_size = u()?,
            ("head", "epochs") => self.head.epochs = u()?,
            ("head", "scale") => self.head.scale = f()?,
            ("head", "feature_scale") => self.head.feature_scale = f()?,
            ("head", "val_pairs") => self.head.val_pairs = u()?,
            ("head", "pairs") => self.head_pairs = u()?,
            ("head", "bins") => self.head_bins = u()?,
            ("cem", "n_samples") => self.cem.n_samples = u()?,
            ("cem", "n_iters") => self.cem.n_iters = u()?,
            ("cem", "top_k") => self.cem.top_k = u()?,
            ("cem", "horizon") => self.cem.horizon = u()?,
            ("cem", "init_std") => self.cem.init_std = f()?,
            ("cem", "min_std") => self.cem.min_std = f()?,
            ("cem", "replan_block") => self.cem.replan_block = u()?,
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "unknown key `{key}` in section `[{section}]`"
                )))
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed required".into()));
        }
        self.geometry.validate()?;
        self.cem.validate()?;
        if self.budget == 0 {
            return Err(Error::InvalidConfig("budget must be >= 1".into()));
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_text(&text)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_exactly() {
        let cfg = RunConfig::default();
        let text = cfg.to_text();
        let parsed = RunConfig::from_text(&text).unwrap();
        assert_eq!(cfg, parsed);
        assert_eq!(text, parsed.to_text());
    }

    #[test]
    fn overrides_and_comments_parse() {
        let text = "# comment\n[run]\nseeds = 1, 2\nbudget = 25\n\n[cem]\nn_samples = 64\n";
        let cfg = RunConfig::from_text(text).unwrap();
        assert_eq!(cfg.seeds, vec![1, 2]);
        assert_eq!(cfg.budget, 25);
        assert_eq!(cfg.cem.n_samples, 64);
        // untouched values keep defaults
        assert_eq!(cfg.cem.horizon, 20);
    }

    #[test]
    fn unknown_key_is_a_config_error() {
        assert!(RunConfig::from_text("[run]\nbogus = 1\n").is_err());
    }

    #[test]
    fn malformed_line_is_a_config_error() {
        assert!(RunConfig::from_text("[run]\nseeds\n").is_err());
    }
}
