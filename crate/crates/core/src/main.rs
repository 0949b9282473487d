//! Pipeline CLI. Every subcommand reads the plain-text config, opens (or
//! initializes) the run directory, verifies upstream artifact hashes, runs
//! one stage, and records a run-manifest.
//!
//! Exit codes: 0 ok, 2 config error, 3 hash mismatch / missing artifact,
//! 4 coverage or manifest-generation failure, 5 training divergence.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use reachlab::config::RunConfig;
use reachlab::error::Error;
use reachlab::metric::CostKind;
use reachlab::pipeline::{EvalRequest, HeadSpec, RunDir};
use reachlab::trajstore::SamplerRegime;
use reachlab::tworoom::ManifestKind;

#[derive(Parser)]
#[command(
    name = "reachlab",
    about = "Two-room testbed for terminal-cost selection in latent world-model planning",
    version
)]
struct Cli {
    /// Path to the run config (plain text, key = value). Omit to use defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run directory (artifacts, run-manifests, tables).
    #[arg(long, global = true, default_value = "runs/default")]
    out: PathBuf,

    /// Episode-level worker threads (0 = all cores). Outputs are identical
    /// for any value.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the default config to stdout.
    PrintConfig,
    /// Generate the balanced40 / matched40 / hard100 manifests.
    GenManifests,
    /// Roll the exploration policy and store the latent dataset (per seed).
    Collect {
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the one-step latent dynamics on the logged dataset.
    TrainWm {
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit the linear XY probe and freeze the world-model bundle.
    FitProbe {
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a pairwise reachability head.
    TrainTrm {
        #[arg(long)]
        seed: Option<u64>,
        /// random_full | balanced_full | balanced_capped
        #[arg(long, default_value = "balanced_full")]
        regime: String,
        /// Training pair budget (defaults to [head] pairs).
        #[arg(long)]
        pairs: Option<usize>,
        /// Max temporal separation (balanced_capped only).
        #[arg(long)]
        delta_max: Option<usize>,
        /// Episode-wise row subsampling budget.
        #[arg(long)]
        source_rows: Option<usize>,
        /// Permute training labels (control head).
        #[arg(long, default_value_t = false)]
        shuffle_labels: bool,
    },
    /// Closed-loop evaluation of one cost on one manifest.
    Evaluate {
        #[arg(long)]
        seed: Option<u64>,
        /// raw_mse | perdim_std_mse | trm | hybrid | decoded_euclid |
        /// decoded_geodesic | rowspace_mse | residual_mse | oracle_euclid |
        /// oracle_geodesic
        #[arg(long)]
        cost: String,
        /// balanced40 | matched40 | hard100
        #[arg(long, default_value = "hard100")]
        manifest: String,
        /// Execution step budget (defaults to [run] budget).
        #[arg(long)]
        budget: Option<usize>,
        /// Hybrid weight.
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        /// Head tag flags, for trm / hybrid costs.
        #[arg(long, default_value = "balanced_full")]
        regime: String,
        #[arg(long)]
        pairs: Option<usize>,
        #[arg(long)]
        delta_max: Option<usize>,
        #[arg(long)]
        source_rows: Option<usize>,
        #[arg(long, default_value_t = false)]
        shuffle_labels: bool,
        /// Allow oracle diagnostic costs (off = deployment mode).
        #[arg(long, default_value_t = false)]
        diagnostic: bool,
    },
    /// Solver-stress control: raw latent MSE under 1000 samples / 20
    /// iterations / top-k 100.
    Stress {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "matched40")]
        manifest: String,
    },
    /// Same-candidate selection audit on first-replan pools.
    Scsa {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "hard100")]
        manifest: String,
    },
    /// Train and evaluate the horizon/coverage head grid.
    AblateHorizon {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "matched40")]
        manifest: String,
    },
    /// Merge all runs into the report tables.
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_) | Error::Serde(_) | Error::OracleRefused(_) => 2,
        Error::HashMismatch { .. }
        | Error::MissingArtifact(_)
        | Error::MissingRun(_)
        | Error::PoolMismatch(_) => 3,
        Error::Coverage { .. } | Error::ManifestGeneration(_) => 4,
        Error::TrainingDivergence(_) | Error::NonFiniteGradient(_) => 5,
        _ => 1,
    }
}

fn run(cli: Cli) -> reachlab::Result<()> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if cli.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.workers)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
    }

    if let Command::PrintConfig = cli.command {
        print!("{}", cfg.to_text());
        return Ok(());
    }

    let run = RunDir::open(&cli.out, &cfg)?;
    let seeds = |one: Option<u64>| -> Vec<u64> {
        match one {
            Some(s) => vec![s],
            None => cfg.seeds.clone(),
        }
    };

    match cli.command {
        Command::PrintConfig => unreachable!(),
        Command::GenManifests => {
            let ms = run.stage_gen_manifests()?;
            for m in ms {
                println!(
                    "{}: {} specs ({} same-room, {} cross-wall, {} doorway-required)",
                    m.name,
                    m.specs.len(),
                    m.same_room_count(),
                    m.cross_wall_count(),
                    m.doorway_required_count()
                );
            }
        }
        Command::Collect { seed } => {
            for s in seeds(seed) {
                let ds = run.stage_collect(s)?;
                println!(
                    "seed {s}: {} rows, crossing fraction {:.3}",
                    ds.n_rows(),
                    ds.header.crossing_fraction
                );
            }
        }
        Command::TrainWm { seed } => {
            for s in seeds(seed) {
                let (_, report) = run.stage_train_wm(s)?;
                println!(
                    "seed {s}: dynamics val one-step RMSE {:.4} ({} steps)",
                    report.val_rmse, report.train_steps
                );
            }
        }
        Command::FitProbe { seed } => {
            for s in seeds(seed) {
                let bundle = run.stage_fit_probe(s)?;
                println!(
                    "seed {s}: probe R2 {:.6}, RMSE {:.3}; bundle frozen {}",
                    bundle.probe.fit_r2,
                    bundle.probe.fit_rmse,
                    &bundle.freeze_hash[..12]
                );
            }
        }
        Command::TrainTrm {
            seed,
            regime,
            pairs,
            delta_max,
            source_rows,
            shuffle_labels,
        } => {
            let spec = head_spec(&cfg, &regime, pairs, delta_max, source_rows, shuffle_labels)?;
            reachlab::pipeline::validate_head_spec(&spec, cfg.collect.length)?;
            for s in seeds(seed) {
                let head = run.stage_train_trm(s, &spec)?;
                println!(
                    "seed {s}: head {} val MAE {:.4} (constant {:.4})",
                    spec.tag(),
                    head.report.val_mae_scaled,
                    head.report.constant_mae_scaled
                );
            }
        }
        Command::Evaluate {
            seed,
            cost,
            manifest,
            budget,
            lambda,
            regime,
            pairs,
            delta_max,
            source_rows,
            shuffle_labels,
            diagnostic,
        } => {
            let kind: CostKind = cost.parse()?;
            if kind.is_oracle() && !diagnostic {
                return Err(Error::OracleRefused(format!(
                    "{} is diagnostic-only; pass --diagnostic to run it outside deployment mode",
                    kind.name()
                )));
            }
            let mkind: ManifestKind = manifest.parse()?;
            let mut req = EvalRequest::new(kind, mkind, budget.unwrap_or(cfg.budget));
            req.lambda = lambda;
            req.diagnostic = diagnostic;
            if kind.needs_head() {
                req.head = Some(head_spec(
                    &cfg,
                    &regime,
                    pairs,
                    delta_max,
                    source_rows,
                    shuffle_labels,
                )?);
            }
            for s in seeds(seed) {
                let rec = run.stage_evaluate(s, &req)?;
                println!(
                    "seed {s}: {} on {} b{}: success {:.1}% (same {:.1}, cross {:.1}; wrong {:.1}, stuck {:.1})",
                    rec.cost_tag,
                    rec.manifest.name(),
                    rec.budget,
                    rec.aggregate.success_pct,
                    rec.aggregate.same_room_success_pct,
                    rec.aggregate.cross_wall_success_pct,
                    rec.aggregate.wrong_room_pct,
                    rec.aggregate.stuck_at_wall_pct
                );
            }
        }
        Command::Stress { seed, manifest } => {
            let mkind: ManifestKind = manifest.parse()?;
            for s in seeds(seed) {
                let rec = run.stage_stress(s, mkind)?;
                println!(
                    "seed {s}: stress raw_mse on {}: success {:.1}%",
                    mkind.name(),
                    rec.aggregate.success_pct
                );
            }
        }
        Command::Scsa { seed, manifest } => {
            let mkind: ManifestKind = manifest.parse()?;
            for s in seeds(seed) {
                let stats = run.stage_scsa(s, mkind)?;
                for st in stats {
                    println!(
                        "seed {s}: {:<16} spearman_geo {} best_rank {:>6.2} selected_dist {:>7.2}",
                        st.selector,
                        st.spearman_geo
                            .map(|v| format!("{v:+.3}"))
                            .unwrap_or_else(|| "undef".into()),
                        st.best_rank_pct,
                        st.selected_final_dist
                    );
                }
            }
        }
        Command::AblateHorizon { seed, manifest } => {
            let mkind: ManifestKind = manifest.parse()?;
            for s in seeds(seed) {
                let recs = run.stage_ablate_horizon(s, mkind)?;
                for r in recs {
                    println!(
                        "seed {s}: {:<42} success {:>5.1}%",
                        r.cost_tag, r.aggregate.success_pct
                    );
                }
            }
        }
        Command::Report => {
            let tables = run.stage_report()?;
            for t in tables {
                println!("wrote {}", t.display());
            }
        }
    }
    Ok(())
}

fn head_spec(
    cfg: &RunConfig,
    regime: &str,
    pairs: Option<usize>,
    delta_max: Option<usize>,
    source_rows: Option<usize>,
    shuffle_labels: bool,
) -> reachlab::Result<HeadSpec> {
    let regime: SamplerRegime = regime.parse()?;
    Ok(HeadSpec {
        regime,
        pairs: pairs.unwrap_or(cfg.head_pairs),
        delta_max,
        source_rows,
        shuffle_labels,
    })
}
