//! Pipeline stages over a run directory.
//!
//! Every stage writes its outputs plus a run-manifest (`runmeta/<stage>.json`)
//! recording the config hash and the sha256 of every input and output file.
//! Before reading an upstream artifact, a stage re-hashes it against the
//! producer's recorded output hash and refuses to run on a mismatch, so a
//! retrained upstream can never silently leak into downstream numbers.
//!
//! Layout under the run directory:
//!   config.txt, manifests/, runmeta/
//!   seed<k>/{dataset,wm,heads,evals,audits,runmeta}/
//!   tables/

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audit::{planner_trace_corr, scsa_audit, EpisodeRankStats, RankStats, TraceCorr};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::metric::{
    build_projection, perdim_stats, train_head, CostKind, LabelMode, PairHead, PerDimStats,
    ProjectionMode, TerminalCost,
};
use crate::planner::{
    evaluate_manifest, first_replan_pools, CEMConfig, EvalAggregate, EpisodeRow,
};
use crate::rng::derive_seed;
use crate::trajstore::{collect, Dataset, SamplerConfig, SamplerRegime};
use crate::tworoom::{generate_manifest, Manifest, ManifestKind};
use crate::worldmodel::{
    fit_probe, freeze_hash, train_dynamics, DynamicsModel, DynamicsReport, Encoder,
    WorldModelBundle,
};
use crate::nn;

pub fn hash_bytes(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex::encode(h.finalize())
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hash_bytes(&bytes))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub stage: String,
    pub seed: Option<u64>,
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub struct RunDir {
    pub root: PathBuf,
    pub cfg: RunConfig,
}

impl RunDir {
    /// Open (or initialize) a run directory for a config. The exact config
    /// text is pinned into the directory on first use; any later drift is a
    /// hash mismatch.
    pub fn open(root: impl Into<PathBuf>, cfg: &RunConfig) -> Result<RunDir> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        let cfg_path = root.join("config.txt");
        let text = cfg.to_text();
        if cfg_path.exists() {
            let existing = std::fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
            if existing != text {
                return Err(Error::HashMismatch {
                    artifact: cfg_path.display().to_string(),
                    expected: hash_bytes(existing.as_bytes()),
                    found: hash_bytes(text.as_bytes()),
                });
            }
        } else {
            std::fs::write(&cfg_path, &text).map_err(|e| Error::io(&cfg_path, e))?;
        }
        Ok(RunDir {
            root,
            cfg: cfg.clone(),
        })
    }

    pub fn config_hash(&self) -> String {
        hash_bytes(self.cfg.to_text().as_bytes())
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.root.join(format!("seed{seed}"))
    }

    fn runmeta_path(&self, seed: Option<u64>, stage: &str) -> PathBuf {
        match seed {
            Some(s) => self.seed_dir(s).join("runmeta").join(format!("{stage}.json")),
            None => self.root.join("runmeta").join(format!("{stage}.json")),
        }
    }

    fn write_runmeta(&self, meta: &RunMeta) -> Result<()> {
        let path = self.runmeta_path(meta.seed, &meta.stage);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        write_json_pretty(&path, meta)
    }

    pub fn read_runmeta(&self, seed: Option<u64>, stage: &str) -> Result<RunMeta> {
        let path = self.runmeta_path(seed, stage);
        if !path.exists() {
            return Err(Error::MissingArtifact(path));
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Verify that `path` (an output of `producer`) is byte-identical to what
    /// the producer recorded; returns (key, hash) for the consumer's inputs.
    fn expect_fresh(
        &self,
        seed: Option<u64>,
        producer: &str,
        path: &Path,
    ) -> Result<(String, String)> {
        let meta = self.read_runmeta(seed, producer)?;
        let key = self.rel(path);
        let expected = meta.outputs.get(&key).ok_or_else(|| {
            Error::MissingRun(format!("stage `{producer}` did not record output `{key}`"))
        })?;
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let found = hash_file(path)?;
        if &found != expected {
            return Err(Error::HashMismatch {
                artifact: key,
                expected: expected.clone(),
                found,
            });
        }
        Ok((key, found))
    }

    fn rel(&self, path: &Path) -> String {
        path.strip_prefix(&self.root)
            .unwrap_or(path)
            .display()
            .to_string()
    }

    // --- stage: gen-manifests ------------------------------------------------

    pub fn stage_gen_manifests(&self) -> Result<Vec<Manifest>> {
        let dir = self.root.join("manifests");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut outputs = BTreeMap::new();
        let mut manifests = Vec::new();
        for kind in [
            ManifestKind::Balanced40,
            ManifestKind::Matched40,
            ManifestKind::Hard100,
        ] {
            let m = generate_manifest(kind, &self.cfg.geometry, self.cfg.manifest_seed)?;
            let path = dir.join(format!("{}.json", kind.name()));
            std::fs::write(&path, m.to_json()?).map_err(|e| Error::io(&path, e))?;
            outputs.insert(self.rel(&path), hash_file(&path)?);
            manifests.push(m);
        }
        self.write_runmeta(&RunMeta {
            stage: "gen-manifests".into(),
            seed: None,
            config_hash: self.config_hash(),
            inputs: BTreeMap::new(),
            outputs,
        })?;
        Ok(manifests)
    }

    pub fn manifest_path(&self, kind: ManifestKind) -> PathBuf {
        self.root.join("manifests").join(format!("{}.json", kind.name()))
    }

    pub fn load_manifest(&self, kind: ManifestKind) -> Result<(Manifest, String)> {
        let path = self.manifest_path(kind);
        let (_, hash) = self.expect_fresh(None, "gen-manifests", &path)?;
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok((Manifest::from_json(&text)?, hash))
    }

    // --- stage: collect --------------------------------------------------------

    pub fn stage_collect(&self, seed: u64) -> Result<Dataset> {
        let encoder = Encoder::create(self.cfg.encoder, seed)?;
        let ds = collect(
            &self.cfg.geometry,
            &self.cfg.env,
            &encoder,
            &self.cfg.collect,
            seed,
        )?;
        let dir = self.seed_dir(seed).join("dataset");
        ds.save(&dir)?;
        let mut outputs = BTreeMap::new();
        for name in ["header.json", "data.bin"] {
            let p = dir.join(name);
            outputs.insert(self.rel(&p), hash_file(&p)?);
        }
        self.write_runmeta(&RunMeta {
            stage: "collect".into(),
            seed: Some(seed),
            config_hash: self.config_hash(),
            inputs: BTreeMap::new(),
            outputs,
        })?;
        Ok(ds)
    }

    pub fn load_dataset(&self, seed: u64) -> Result<Dataset> {
        let dir = self.seed_dir(seed).join("dataset");
        self.expect_fresh(Some(seed), "collect", &dir.join("header.json"))?;
        self.expect_fresh(Some(seed), "collect", &dir.join("data.bin"))?;
        Dataset::load(&dir)
    }

    // --- stage: train-wm ---------------------------------------------------------

    pub fn stage_train_wm(&self, seed: u64) -> Result<(DynamicsModel, DynamicsReport)> {
        let ds = self.load_dataset(seed)?;
        let mut inputs = BTreeMap::new();
        for name in ["header.json", "data.bin"] {
            let p = self.seed_dir(seed).join("dataset").join(name);
            inputs.insert(self.rel(&p), hash_file(&p)?);
        }
        let encoder = Encoder::create(self.cfg.encoder, seed)?;
        let (dynamics, report) = train_dynamics(&ds, &self.cfg.dynamics, seed)?;
        let dir = self.seed_dir(seed).join("wm");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let enc_path = dir.join("encoder.json");
        std::fs::write(&enc_path, encoder.to_json()?).map_err(|e| Error::io(&enc_path, e))?;
        let ckpt = nn::checkpoint_bytes(
            &dynamics.net,
            seed,
            &serde_json::json!({
                "kind": "dynamics",
                "action_scale": dynamics.action_scale,
                "latent_scale": dynamics.latent_scale,
                "report": report,
            }),
        )?;
        let ckpt_path = dir.join("dynamics.ckpt");
        std::fs::write(&ckpt_path, &ckpt).map_err(|e| Error::io(&ckpt_path, e))?;
        let mut outputs = BTreeMap::new();
        outputs.insert(self.rel(&enc_path), hash_file(&enc_path)?);
        outputs.insert(self.rel(&ckpt_path), hash_file(&ckpt_path)?);
        self.write_runmeta(&RunMeta {
            stage: "train-wm".into(),
            seed: Some(seed),
            config_hash: self.config_hash(),
            inputs,
            outputs,
        })?;
        Ok((dynamics, report))
    }

    // --- stage: fit-probe -----------------------------------------------------------

    pub fn stage_fit_probe(&self, seed: u64) -> Result<WorldModelBundle> {
        let ds = self.load_dataset(seed)?;
        let dir = self.seed_dir(seed).join("wm");
        let mut inputs = BTreeMap::new();
        for name in ["encoder.json", "dynamics.ckpt"] {
            let (k, h) = self.expect_fresh(Some(seed), "train-wm", &dir.join(name))?;
            inputs.insert(k, h);
        }
        let probe = fit_probe(
            &ds,
            self.cfg.probe_rows,
            self.cfg.probe_test_rows,
            self.cfg.probe_ridge,
            seed,
        )?;
        let probe_json = serde_json::to_string(&probe)?;
        let probe_path = dir.join("probe.json");
        std::fs::write(&probe_path, &probe_json).map_err(|e| Error::io(&probe_path, e))?;

        // dataset-wide per-dimension stats and the measured rowspace share,
        // recorded beside the probe
        let stats = perdim_stats(&ds);
        let rowspace = build_projection(&probe, ProjectionMode::Rowspace)?;
        let share = measured_rowspace_share(&ds, &rowspace, seed)?;
        let stats_path = dir.join("stats.json");
        write_json_pretty(
            &stats_path,
            &serde_json::json!({
                "perdim": stats,
                "rowspace_share_random_pairs": share,
            }),
        )?;

        let enc_json = std::fs::read_to_string(dir.join("encoder.json"))
            .map_err(|e| Error::io(dir.join("encoder.json"), e))?;
        let ckpt =
            std::fs::read(dir.join("dynamics.ckpt")).map_err(|e| Error::io(dir.join("dynamics.ckpt"), e))?;
        let hash = freeze_hash(&enc_json, &ckpt, &probe_json);
        let freeze_path = dir.join("freeze.json");
        write_json_pretty(&freeze_path, &serde_json::json!({ "hash": hash }))?;

        let mut outputs = BTreeMap::new();
        for p in [&probe_path, &stats_path, &freeze_path] {
            outputs.insert(self.rel(p), hash_file(p)?);
        }
        self.write_runmeta(&RunMeta {
            stage: "fit-probe".into(),
            seed: Some(seed),
            config_hash: self.config_hash(),
            inputs,
            outputs,
        })?;
        WorldModelBundle::load(&dir)
    }

    pub fn load_bundle(&self, seed: u64) -> Result<WorldModelBundle> {
        let dir = self.seed_dir(seed).join("wm");
        self.expect_fresh(Some(seed), "train-wm", &dir.join("encoder.json"))?;
        self.expect_fresh(Some(seed), "train-wm", &dir.join("dynamics.ckpt"))?;
        self.expect_fresh(Some(seed), "fit-probe", &dir.join("probe.json"))?;
        WorldModelBundle::load(&dir)
    }

    pub fn load_perdim_stats(&self, seed: u64) -> Result<(PerDimStats, f64)> {
        let path = self.seed_dir(seed).join("wm").join("stats.json");
        self.expect_fresh(Some(seed), "fit-probe", &path)?;
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?)?;
        Ok((
            serde_json::from_value(v["perdim"].clone())?,
            v["rowspace_share_random_pairs"].as_f64().unwrap_or(f64::NAN),
        ))
    }

    // --- stage: train-trm ---------------------------------------------------------

    pub fn stage_train_trm(&self, seed: u64, spec: &HeadSpec) -> Result<PairHead> {
        let ds = self.load_dataset(seed)?;
        let mut inputs = BTreeMap::new();
        for name in ["header.json", "data.bin"] {
            let p = self.seed_dir(seed).join("dataset").join(name);
            inputs.insert(self.rel(&p), hash_file(&p)?);
        }
        let sampler = spec.sampler(self, seed);
        let label_mode = if spec.shuffle_labels {
            LabelMode::ShuffledLabels
        } else {
            LabelMode::TrueLabels
        };
        let head = train_head(&ds, &sampler, label_mode, &self.cfg.head)?;
        let dir = self.seed_dir(seed).join("heads");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join(format!("{}.ckpt", spec.tag()));
        head.save(&path)?;
        let mut outputs = BTreeMap::new();
        outputs.insert(self.rel(&path), hash_file(&path)?);
        self.write_runmeta(&RunMeta {
            stage: format!("train-trm-{}", spec.tag()),
            seed: Some(seed),
            config_hash: self.config_hash(),
            inputs,
            outputs,
        })?;
        Ok(head)
    }

    pub fn load_head(&self, seed: u64, tag: &str) -> Result<(PairHead, String)> {
        let path = self.seed_dir(seed).join("heads").join(format!("{tag}.ckpt"));
        let (_, hash) = self.expect_fresh(Some(seed), &format!("train-trm-{tag}"), &path)?;
        Ok((PairHead::load(&path)?, hash))
    }

    // --- stage: evaluate ------------------------------------------------------------

    pub fn stage_evaluate(&self, seed: u64, req: &EvalRequest) -> Result<EvalRecord> {
        let (manifest, manifest_hash) = self.load_manifest(req.manifest)?;
        let bundle = self.load_bundle(seed)?;
        let mut inputs = BTreeMap::new();
        inputs.insert(format!("manifests/{}.json", req.manifest.name()), manifest_hash.clone());
        inputs.insert("wm.freeze_hash".into(), bundle.freeze_hash.clone());

        let mut head_hash = None;
        let cost = self.resolve_cost(seed, req, &bundle, &mut inputs, &mut head_hash)?;

        let mut cem = req.cem.unwrap_or(self.cfg.cem);
        cem.seed = seed;
        let eval_seed = derive_seed(seed, "evaluate", &[req.manifest as u64]);
        let deployment = !req.diagnostic;
        let res = evaluate_manifest(
            &manifest,
            &cost,
            &bundle,
            &self.cfg.env,
            &cem,
            req.budget,
            eval_seed,
            deployment,
        )?;
        let trace_corr = planner_trace_corr(&res.rows).ok();

        let record = EvalRecord {
            seed,
            manifest: req.manifest,
            cost_tag: req.cost_tag(),
            cost_kind: req.kind,
            lambda: req.lambda,
            head_tag: req.head.as_ref().map(|h| h.tag()),
            budget: req.budget,
            cem,
            aggregate: res.aggregate.clone(),
            trace_corr,
            manifest_hash,
            bundle_hash: bundle.freeze_hash.clone(),
            head_hash,
            rows: res.rows.clone(),
        };

        let dir = self.seed_dir(seed).join("evals");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let base = record.file_base();
        let json_path = dir.join(format!("{base}.json"));
        write_json_pretty(&json_path, &record)?;
        let csv_path = dir.join(format!("{base}.csv"));
        std::fs::write(&csv_path, eval_rows_csv(&record.rows)).map_err(|e| Error::io(&csv_path, e))?;

        let mut outputs = BTreeMap::new();
        outputs.insert(self.rel(&json_path), hash_file(&json_path)?);
        outputs.insert(self.rel(&csv_path), hash_file(&csv_path)?);
        self.write_runmeta(&RunMeta {
            stage: format!("evaluate-{base}"),
            seed: Some(seed),
            config_hash: self.config_hash(),
            inputs,
            outputs,
        })?;
        Ok(record)
    }

    fn resolve_cost(
        &self,
        seed: u64,
        req: &EvalRequest,
        bundle: &WorldModelBundle,
        inputs: &mut BTreeMap<String, String>,
        head_hash: &mut Option<String>,
    ) -> Result<TerminalCost> {
        let mut cost = TerminalCost::new(req.kind, self.cfg.geometry).with_lambda(req.lambda);
        if req.kind.needs_head() {
            let spec = req.head.as_ref().ok_or_else(|| {
                Error::InvalidConfig(format!("cost `{}` needs a head spec", req.kind.name()))
            })?;
            let (head, hash) = self.load_head(seed, &spec.tag())?;
            inputs.insert(format!("heads/{}.ckpt", spec.tag()), hash.clone());
            *head_hash = Some(hash);
            cost = cost.with_head(Arc::new(head));
        }
        if req.kind.needs_probe() {
            cost = cost.with_probe(Arc::new(bundle.probe.clone()));
            match req.kind {
                CostKind::RowspaceMse => {
                    cost = cost
                        .with_projection(Arc::new(build_projection(&bundle.probe, ProjectionMode::Rowspace)?));
                }
                CostKind::ResidualMse => {
                    cost = cost
                        .with_projection(Arc::new(build_projection(&bundle.probe, ProjectionMode::Residual)?));
                }
                _ => {}
            }
        }
        if req.kind == CostKind::PerdimStdMse {
            let (stats, _) = self.load_perdim_stats(seed)?;
            cost = cost.with_perdim(Arc::new(stats));
        }
        Ok(cost)
    }

    // --- stage: stress --------------------------------------------------------------

    pub fn stage_stress(&self, seed: u64, manifest: ManifestKind) -> Result<EvalRecord> {
        let req = EvalRequest {
            kind: CostKind::RawMse,
            manifest,
            budget: self.cfg.budget,
            lambda: 1.0,
            head: None,
            cem: Some(CEMConfig::stress(seed)),
            diagnostic: false,
            tag_suffix: Some("stress".into()),
        };
        self.stage_evaluate(seed, &req)
    }

    // --- stage: scsa -----------------------------------------------------------------

    pub fn stage_scsa(&self, seed: u64, manifest_kind: ManifestKind) -> Result<Vec<RankStats>> {
        let (manifest, manifest_hash) = self.load_manifest(manifest_kind)?;
        let bundle = self.load_bundle(seed)?;
        let mut inputs = BTreeMap::new();
        inputs.insert(
            format!("manifests/{}.json", manifest_kind.name()),
            manifest_hash,
        );
        inputs.insert("wm.freeze_hash".into(), bundle.freeze_hash.clone());

        // pools come from the planner under raw latent MSE (the failing
        // selector being audited); the audited replan is the first of each
        // episode
        let base_cost = TerminalCost::new(CostKind::RawMse, self.cfg.geometry);
        let mut cem = self.cfg.cem;
        cem.seed = seed;
        let pool_seed = derive_seed(seed, "scsa-pools", &[manifest_kind as u64]);
        let pools = first_replan_pools(
            &manifest,
            &base_cost,
            &bundle,
            &self.cfg.env,
            &cem,
            pool_seed,
        )?;

        let (true_head, true_hash) = self.load_head(seed, &HeadSpec::headline_true(self).tag())?;
        let (shuf_head, shuf_hash) =
            self.load_head(seed, &HeadSpec::headline_shuffled(self).tag())?;
        inputs.insert("heads/true".into(), true_hash);
        inputs.insert("heads/shuffled".into(), shuf_hash);

        let geom = self.cfg.geometry;
        let selectors: Vec<(String, TerminalCost)> = vec![
            ("raw_mse".into(), TerminalCost::new(CostKind::RawMse, geom)),
            (
                "decoded_euclid".into(),
                TerminalCost::new(CostKind::DecodedEuclid, geom)
                    .with_probe(Arc::new(bundle.probe.clone())),
            ),
            (
                "trm_true".into(),
                TerminalCost::new(CostKind::Trm, geom).with_head(Arc::new(true_head)),
            ),
            (
                "trm_shuffled".into(),
                TerminalCost::new(CostKind::Trm, geom).with_head(Arc::new(shuf_head)),
            ),
            (
                "oracle_euclid".into(),
                TerminalCost::new(CostKind::OracleEuclid, geom),
            ),
        ];

        let dir = self.seed_dir(seed).join("audits");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut outputs = BTreeMap::new();
        let mut aggregates = Vec::new();
        let mut summary = Vec::new();
        for (name, selector) in &selectors {
            let (episodes, agg) = scsa_audit(
                &pools,
                name,
                selector,
                &self.cfg.geometry,
                &self.cfg.env,
                self.cfg.cem.replan_block,
            )?;
            let csv_path = dir.join(format!("scsa_{}_{}.csv", manifest_kind.name(), name));
            std::fs::write(&csv_path, scsa_rows_csv(&episodes)).map_err(|e| Error::io(&csv_path, e))?;
            outputs.insert(self.rel(&csv_path), hash_file(&csv_path)?);
            summary.push(agg.clone());
            aggregates.push(agg);
        }
        let json_path = dir.join(format!("scsa_{}.json", manifest_kind.name()));
        write_json_pretty(
            &json_path,
            &serde_json::json!({
                "manifest": manifest_kind.name(),
                "seed": seed,
                "audited_replan": "first replan of each episode",
                "pool_source": "raw_mse planner, last CEM iteration",
                "selectors": summary,
            }),
        )?;
        outputs.insert(self.rel(&json_path), hash_file(&json_path)?);
        self.write_runmeta(&RunMeta {
            stage: format!("scsa-{}", manifest_kind.name()),
            seed: Some(seed),
            config_hash: self.config_hash(),
            inputs,
            outputs,
        })?;
        Ok(aggregates)
    }

}

impl RunDir {
    /// Ensure a head exists and is fresh; train it if it has never been
    /// produced. A stale (hash-mismatched) head is an error, not a retrain.
    pub fn ensure_head(&self, seed: u64, spec: &HeadSpec) -> Result<()> {
        match self.load_head(seed, &spec.tag()) {
            Ok(_) => Ok(()),
            Err(Error::MissingArtifact(_)) => self.stage_train_trm(seed, spec).map(|_| ()),
            Err(e) => Err(e),
        }
    }

    /// The horizon/coverage grid: train each head variant (if missing) and
    /// evaluate it as the planner cost on one manifest.
    pub fn stage_ablate_horizon(
        &self,
        seed: u64,
        manifest: ManifestKind,
    ) -> Result<Vec<EvalRecord>> {
        let grid = ablation_grid(&self.cfg);
        let mut records = Vec::new();
        for spec in grid {
            self.ensure_head(seed, &spec)?;
            let req = EvalRequest::new(CostKind::Trm, manifest, self.cfg.budget).with_head(spec);
            records.push(self.stage_evaluate(seed, &req)?);
        }
        Ok(records)
    }

    /// Merge every recorded evaluation and audit into CSV + JSON tables.
    pub fn stage_report(&self) -> Result<Vec<PathBuf>> {
        let tables_dir = self.root.join("tables");
        std::fs::create_dir_all(&tables_dir).map_err(|e| Error::io(&tables_dir, e))?;
        let mut written = Vec::new();

        // gather all eval records
        let mut evals: Vec<EvalRecord> = Vec::new();
        for seed in &self.cfg.seeds {
            let dir = self.seed_dir(*seed).join("evals");
            if !dir.exists() {
                continue;
            }
            let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
                .map_err(|e| Error::io(&dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            paths.sort();
            for p in paths {
                let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                evals.push(serde_json::from_str(&text)?);
            }
        }

        // one wide table of all evaluations, plus per-group mean rows
        let mut rows: Vec<EvalTableRow> = evals.iter().map(EvalTableRow::from_record).collect();
        rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        let mut groups: BTreeMap<(String, String, usize), Vec<&EvalTableRow>> = BTreeMap::new();
        for r in &rows {
            groups
                .entry((r.manifest.clone(), r.cost.clone(), r.budget))
                .or_default()
                .push(r);
        }
        let mut means = Vec::new();
        for ((manifest, cost, budget), g) in &groups {
            let n = g.len() as f64;
            let mean = |f: fn(&EvalTableRow) -> f64| g.iter().map(|r| f(r)).sum::<f64>() / n;
            means.push(EvalTableRow {
                manifest: manifest.clone(),
                cost: cost.clone(),
                budget: *budget,
                seed: "mean".into(),
                success: mean(|r| r.success),
                same_room: mean(|r| r.same_room),
                cross_wall: mean(|r| r.cross_wall),
                wrong_room: mean(|r| r.wrong_room),
                stuck_at_wall: mean(|r| r.stuck_at_wall),
                same_room_not_precise: mean(|r| r.same_room_not_precise),
                crossed_door_not_precise: mean(|r| r.crossed_door_not_precise),
                cost_vs_final_dist: mean(|r| r.cost_vs_final_dist),
                cost_vs_geodesic_progress: mean(|r| r.cost_vs_geodesic_progress),
            });
        }
        rows.extend(means);
        rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        written.push(write_table(
            &tables_dir,
            "evals",
            EVAL_TABLE_HEADER,
            &rows,
            |r| r.csv_line(),
        )?);

        // SCSA table
        let mut scsa_rows: Vec<ScsaTableRow> = Vec::new();
        for seed in &self.cfg.seeds {
            let dir = self.seed_dir(*seed).join("audits");
            if !dir.exists() {
                continue;
            }
            let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
                .map_err(|e| Error::io(&dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    p.extension().is_some_and(|x| x == "json")
                        && p.file_name()
                            .is_some_and(|n| n.to_string_lossy().starts_with("scsa_"))
                })
                .collect();
            paths.sort();
            for p in paths {
                let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                let v: serde_json::Value = serde_json::from_str(&text)?;
                let manifest = v["manifest"].as_str().unwrap_or("?").to_string();
                let selectors: Vec<RankStats> =
                    serde_json::from_value(v["selectors"].clone())?;
                for s in selectors {
                    scsa_rows.push(ScsaTableRow {
                        manifest: manifest.clone(),
                        selector: s.selector,
                        seed: seed.to_string(),
                        spearman_euclid: s.spearman_euclid.unwrap_or(f64::NAN),
                        spearman_geo: s.spearman_geo.unwrap_or(f64::NAN),
                        best_rank_pct: s.best_rank_pct,
                        selected_final_dist: s.selected_final_dist,
                        flagged_episodes: s.flagged_episodes,
                    });
                }
            }
        }
        let mut scsa_groups: BTreeMap<(String, String), Vec<&ScsaTableRow>> = BTreeMap::new();
        for r in &scsa_rows {
            scsa_groups
                .entry((r.manifest.clone(), r.selector.clone()))
                .or_default()
                .push(r);
        }
        let mut scsa_means = Vec::new();
        for ((manifest, selector), g) in &scsa_groups {
            let n = g.len() as f64;
            scsa_means.push(ScsaTableRow {
                manifest: manifest.clone(),
                selector: selector.clone(),
                seed: "mean".into(),
                spearman_euclid: g.iter().map(|r| r.spearman_euclid).sum::<f64>() / n,
                spearman_geo: g.iter().map(|r| r.spearman_geo).sum::<f64>() / n,
                best_rank_pct: g.iter().map(|r| r.best_rank_pct).sum::<f64>() / n,
                selected_final_dist: g.iter().map(|r| r.selected_final_dist).sum::<f64>() / n,
                flagged_episodes: g.iter().map(|r| r.flagged_episodes).sum(),
            });
        }
        scsa_rows.extend(scsa_means);
        scsa_rows.sort_by(|a, b| {
            (&a.manifest, &a.selector, &a.seed).cmp(&(&b.manifest, &b.selector, &b.seed))
        });
        written.push(write_table(
            &tables_dir,
            "scsa",
            SCSA_TABLE_HEADER,
            &scsa_rows,
            |r| r.csv_line(),
        )?);

        // probe + share summary
        let mut probe_rows = Vec::new();
        for seed in &self.cfg.seeds {
            let probe_path = self.seed_dir(*seed).join("wm").join("probe.json");
            if !probe_path.exists() {
                continue;
            }
            let probe: crate::worldmodel::XYProbe = serde_json::from_str(
                &std::fs::read_to_string(&probe_path).map_err(|e| Error::io(&probe_path, e))?,
            )?;
            let share = self
                .load_perdim_stats(*seed)
                .map(|(_, s)| s)
                .unwrap_or(f64::NAN);
            probe_rows.push(ProbeTableRow {
                seed: seed.to_string(),
                r2: probe.fit_r2,
                rmse: probe.fit_rmse,
                rowspace_share: share,
            });
        }
        written.push(write_table(
            &tables_dir,
            "probe",
            "seed,r2,rmse,rowspace_share_random_pairs",
            &probe_rows,
            |r| {
                format!(
                    "{},{:.6},{:.6},{:.6}",
                    r.seed, r.r2, r.rmse, r.rowspace_share
                )
            },
        )?);

        Ok(written)
    }
}

pub const EVAL_TABLE_HEADER: &str = "manifest,cost,budget,seed,success,same_room,cross_wall,wrong_room,stuck_at_wall,same_room_not_precise,crossed_door_not_precise,cost_vs_final_dist,cost_vs_geodesic_progress";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalTableRow {
    pub manifest: String,
    pub cost: String,
    pub budget: usize,
    pub seed: String,
    pub success: f64,
    pub same_room: f64,
    pub cross_wall: f64,
    pub wrong_room: f64,
    pub stuck_at_wall: f64,
    pub same_room_not_precise: f64,
    pub crossed_door_not_precise: f64,
    pub cost_vs_final_dist: f64,
    pub cost_vs_geodesic_progress: f64,
}

impl EvalTableRow {
    fn from_record(r: &EvalRecord) -> EvalTableRow {
        EvalTableRow {
            manifest: r.manifest.name().to_string(),
            cost: r.cost_tag.clone(),
            budget: r.budget,
            seed: r.seed.to_string(),
            success: r.aggregate.success_pct,
            same_room: r.aggregate.same_room_success_pct,
            cross_wall: r.aggregate.cross_wall_success_pct,
            wrong_room: r.aggregate.wrong_room_pct,
            stuck_at_wall: r.aggregate.stuck_at_wall_pct,
            same_room_not_precise: r.aggregate.same_room_not_precise_pct,
            crossed_door_not_precise: r.aggregate.crossed_door_not_precise_pct,
            cost_vs_final_dist: r
                .trace_corr
                .as_ref()
                .and_then(|t| t.cost_vs_final_dist)
                .unwrap_or(f64::NAN),
            cost_vs_geodesic_progress: r
                .trace_corr
                .as_ref()
                .and_then(|t| t.cost_vs_geodesic_progress)
                .unwrap_or(f64::NAN),
        }
    }

    fn sort_key(&self) -> (String, String, usize, String) {
        (
            self.manifest.clone(),
            self.cost.clone(),
            self.budget,
            self.seed.clone(),
        )
    }

    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2},{:.4},{:.4}",
            self.manifest,
            self.cost,
            self.budget,
            self.seed,
            self.success,
            self.same_room,
            self.cross_wall,
            self.wrong_room,
            self.stuck_at_wall,
            self.same_room_not_precise,
            self.crossed_door_not_precise,
            self.cost_vs_final_dist,
            self.cost_vs_geodesic_progress,
        )
    }
}

pub const SCSA_TABLE_HEADER: &str =
    "manifest,selector,seed,spearman_euclid,spearman_geo,best_rank_pct,selected_final_dist,flagged_episodes";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScsaTableRow {
    pub manifest: String,
    pub selector: String,
    pub seed: String,
    pub spearman_euclid: f64,
    pub spearman_geo: f64,
    pub best_rank_pct: f64,
    pub selected_final_dist: f64,
    pub flagged_episodes: usize,
}

impl ScsaTableRow {
    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{:.4},{:.4},{:.2},{:.2},{}",
            self.manifest,
            self.selector,
            self.seed,
            self.spearman_euclid,
            self.spearman_geo,
            self.best_rank_pct,
            self.selected_final_dist,
            self.flagged_episodes,
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProbeTableRow {
    seed: String,
    r2: f64,
    rmse: f64,
    rowspace_share: f64,
}

fn write_table<T: Serialize>(
    dir: &Path,
    name: &str,
    header: &str,
    rows: &[T],
    line: impl Fn(&T) -> String,
) -> Result<PathBuf> {
    let csv_path = dir.join(format!("{name}.csv"));
    let mut csv = String::from(header);
    csv.push('\n');
    for r in rows {
        csv.push_str(&line(r));
        csv.push('\n');
    }
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    let json_path = dir.join(format!("{name}.json"));
    write_json_pretty(&json_path, &rows)?;
    Ok(csv_path)
}

/// The horizon/coverage head grid (criterion set plus the small-pair
/// random-coverage point).
pub fn ablation_grid(cfg: &RunConfig) -> Vec<HeadSpec> {
    let p = cfg.head_pairs;
    vec![
        HeadSpec {
            regime: SamplerRegime::BalancedFull,
            pairs: p,
            delta_max: None,
            source_rows: None,
            shuffle_labels: false,
        },
        HeadSpec {
            regime: SamplerRegime::BalancedFull,
            pairs: p / 5,
            delta_max: None,
            source_rows: None,
            shuffle_labels: false,
        },
        HeadSpec {
            regime: SamplerRegime::BalancedCapped,
            pairs: p,
            delta_max: Some(50),
            source_rows: None,
            shuffle_labels: false,
        },
        HeadSpec {
            regime: SamplerRegime::RandomFull,
            pairs: p,
            delta_max: None,
            source_rows: None,
            shuffle_labels: false,
        },
        HeadSpec {
            regime: SamplerRegime::RandomFull,
            pairs: p,
            delta_max: None,
            source_rows: Some(20_000),
            shuffle_labels: false,
        },
        HeadSpec {
            regime: SamplerRegime::RandomFull,
            pairs: p / 5,
            delta_max: None,
            source_rows: None,
            shuffle_labels: false,
        },
    ]
}

/// Measured rowspace share over random same-dataset row differences.
fn measured_rowspace_share(
    ds: &Dataset,
    rowspace: &crate::metric::ProjectionOperator,
    seed: u64,
) -> Result<f64> {
    use rand::Rng;
    let mut rng = crate::rng::stream(seed, "rowspace-share", &[]);
    let mut diffs = Vec::with_capacity(100_000);
    for _ in 0..100_000 {
        let e1 = rng.random_range(0..ds.header.n_episodes);
        let e2 = rng.random_range(0..ds.header.n_episodes);
        let t1 = rng.random_range(0..ds.header.length);
        let t2 = rng.random_range(0..ds.header.length);
        let a = ds.latent_f64(e1, t1);
        let b = ds.latent_f64(e2, t2);
        diffs.push(a.iter().zip(&b).map(|(x, y)| x - y).collect());
    }
    crate::metric::rowspace_share(&diffs, rowspace)
}

/// What head to train: regime, pair budget, caps, subsampling, label mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub regime: SamplerRegime,
    pub pairs: usize,
    pub delta_max: Option<usize>,
    pub source_rows: Option<usize>,
    pub shuffle_labels: bool,
}

impl HeadSpec {
    pub fn headline_true(run: &RunDir) -> HeadSpec {
        HeadSpec {
            regime: SamplerRegime::BalancedFull,
            pairs: run.cfg.head_pairs,
            delta_max: None,
            source_rows: None,
            shuffle_labels: false,
        }
    }

    pub fn headline_shuffled(run: &RunDir) -> HeadSpec {
        HeadSpec {
            shuffle_labels: true,
            ..HeadSpec::headline_true(run)
        }
    }

    pub fn tag(&self) -> String {
        let mut t = match self.regime {
            SamplerRegime::RandomFull => "random_full".to_string(),
            SamplerRegime::BalancedFull => "balanced_full".to_string(),
            SamplerRegime::BalancedCapped => {
                format!("balanced_capped{}", self.delta_max.unwrap_or(0))
            }
        };
        t.push_str(&format!("_p{}", self.pairs));
        if let Some(rows) = self.source_rows {
            t.push_str(&format!("_rows{rows}"));
        }
        if self.shuffle_labels {
            t.push_str("_shuffled");
        }
        t
    }

    pub fn sampler(&self, run: &RunDir, seed: u64) -> SamplerConfig {
        SamplerConfig {
            regime: self.regime,
            delta_max: self.delta_max.unwrap_or(0),
            n_pairs: self.pairs,
            bins: run.cfg.head_bins,
            source_rows: self.source_rows,
            shuffle_labels: false, // set by train_head from the label mode
            seed: derive_seed(seed, "head-sampler", &[]),
        }
    }
}

/// A single evaluation request: cost x manifest x budget (+ optional CEM
/// override for stress, + diagnostic mode for oracle costs).
#[derive(Debug, Clone)]
pub struct EvalRequest {
    pub kind: CostKind,
    pub manifest: ManifestKind,
    pub budget: usize,
    pub lambda: f64,
    pub head: Option<HeadSpec>,
    pub cem: Option<CEMConfig>,
    pub diagnostic: bool,
    pub tag_suffix: Option<String>,
}

impl EvalRequest {
    pub fn new(kind: CostKind, manifest: ManifestKind, budget: usize) -> EvalRequest {
        EvalRequest {
            kind,
            manifest,
            budget,
            lambda: 1.0,
            head: None,
            cem: None,
            diagnostic: false,
            tag_suffix: None,
        }
    }

    pub fn with_head(mut self, head: HeadSpec) -> Self {
        self.head = Some(head);
        self
    }

    pub fn diagnostic(mut self) -> Self {
        self.diagnostic = true;
        self
    }

    pub fn cost_tag(&self) -> String {
        let mut t = self.kind.name().to_string();
        if self.kind == CostKind::Hybrid {
            t.push_str(&format!("-l{}", self.lambda));
        }
        if let Some(h) = &self.head {
            t.push('-');
            t.push_str(&h.tag());
        }
        if let Some(s) = &self.tag_suffix {
            t.push('-');
            t.push_str(s);
        }
        t
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRecord {
    pub seed: u64,
    pub manifest: ManifestKind,
    pub cost_tag: String,
    pub cost_kind: CostKind,
    pub lambda: f64,
    pub head_tag: Option<String>,
    pub budget: usize,
    pub cem: CEMConfig,
    pub aggregate: EvalAggregate,
    pub trace_corr: Option<TraceCorr>,
    pub manifest_hash: String,
    pub bundle_hash: String,
    pub head_hash: Option<String>,
    pub rows: Vec<EpisodeRow>,
}

impl EvalRecord {
    pub fn file_base(&self) -> String {
        format!("{}_{}_b{}", self.manifest.name(), self.cost_tag, self.budget)
    }
}

fn eval_rows_csv(rows: &[EpisodeRow]) -> String {
    let mut s = String::from(
        "index,topology_class,success,failure_class,final_dist,steps_used,mean_selected_cost,geodesic_progress\n",
    );
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{:.6},{},{:.6},{:.6}\n",
            r.index,
            match r.topology_class {
                crate::tworoom::TopologyClass::SameRoom => "same_room",
                crate::tworoom::TopologyClass::CrossWall => "cross_wall",
            },
            r.success,
            r.failure_class.name(),
            r.final_dist,
            r.steps_used,
            r.mean_selected_cost,
            r.geodesic_progress,
        ));
    }
    s
}

fn scsa_rows_csv(rows: &[EpisodeRankStats]) -> String {
    let mut s = String::from(
        "episode_index,spearman_euclid,spearman_geo,best_rank_pct,selected_final_dist,oracle_tie,pool_hash\n",
    );
    let fmt_opt = |v: Option<f64>| match v {
        Some(x) => format!("{x:.6}"),
        None => "undefined".to_string(),
    };
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{:.6},{:.6},{},{}\n",
            r.episode_index,
            fmt_opt(r.spearman_euclid),
            fmt_opt(r.spearman_geo),
            r.best_rank_pct,
            r.selected_final_dist,
            r.oracle_tie,
            r.pool_hash,
        ));
    }
    s
}

pub fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Check pair-sampling preconditions early so `train-trm` fails with a config
/// error before touching the dataset.
pub fn validate_head_spec(spec: &HeadSpec, episode_length: usize) -> Result<()> {
    if spec.regime == SamplerRegime::BalancedCapped {
        let dm = spec.delta_max.unwrap_or(0);
        if dm == 0 || dm >= episode_length {
            return Err(Error::InvalidConfig(format!(
                "balanced_capped needs 1 <= delta_max < episode length, got {dm}"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn head_tags_are_distinct_and_stable() {
        let a = HeadSpec {
            regime: SamplerRegime::BalancedFull,
            pairs: 100_000,
            delta_max: None,
            source_rows: None,
            shuffle_labels: false,
        };
        assert_eq!(a.tag(), "balanced_full_p100000");
        let b = HeadSpec {
            shuffle_labels: true,
            ..a.clone()
        };
        assert_eq!(b.tag(), "balanced_full_p100000_shuffled");
        let c = HeadSpec {
            regime: SamplerRegime::BalancedCapped,
            delta_max: Some(50),
            ..a.clone()
        };
        assert_eq!(c.tag(), "balanced_capped50_p100000");
        let d = HeadSpec {
            regime: SamplerRegime::RandomFull,
            source_rows: Some(20_000),
            ..a
        };
        assert_eq!(d.tag(), "random_full_p100000_rows20000");
    }

    #[test]
    fn eval_cost_tags() {
        let mut req = EvalRequest::new(CostKind::RawMse, ManifestKind::Hard100, 50);
        assert_eq!(req.cost_tag(), "raw_mse");
        req.tag_suffix = Some("stress".into());
        assert_eq!(req.cost_tag(), "raw_mse-stress");
        let req = EvalRequest::new(CostKind::Hybrid, ManifestKind::Matched40, 50).with_head(
            HeadSpec {
                regime: SamplerRegime::BalancedFull,
                pairs: 1000,
                delta_max: None,
                source_rows: None,
                shuffle_labels: false,
            },
        );
        assert_eq!(req.cost_tag(), "hybrid-l1-balanced_full_p1000");
    }
}
