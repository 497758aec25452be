//! `liic`: data preparation, pattern mining, training, search and evaluation.
//!
//! The encoder is the in-process mock unless `LIIC_BACKEND_URL` points at a
//! model service.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use liic::datamodel::{load_dataset, split_dev1, DataSplit, Source, SplitName};
use liic::evaluation::{expected_validation_performance, pr_curve, write_curve_csv};
use liic::harness::{
    evaluate, fit, n_sweep, run_search, sample_configs_in, transfer_eval, Approach, AuditedSplit, BatchProfile,
    Checkpoint, HyperConfig, Model, RunContext, SearchSpace,
};
use liic::harness::search::read_ledger;
use liic::lmbackend::{BackendSpec, LmBackend, MockConfig};
use liic::mining::{
    find_candidates, load_curated, rank_candidates, read_corpus, top_n_patterns, write_ranked, MatchMode,
    RuleInflector, ScoringPair,
};
use liic::pattern::{load_pattern_file, Pattern, PatternSet, ScoringMode};

#[derive(Parser)]
#[command(name = "liic", version, about = "Lexical inference in context: NLI and pattern-based classifiers")]
struct Cli {
    #[command(flatten)]
    backend: BackendArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct BackendArgs {
    /// Model service URL; without it the deterministic mock is used.
    #[arg(long, env = "LIIC_BACKEND_URL", global = true)]
    backend_url: Option<String>,
    #[arg(long, default_value_t = 64, global = true)]
    mock_dim: usize,
    #[arg(long, default_value_t = 0, global = true)]
    mock_seed: u64,
}

impl BackendArgs {
    fn spec(&self, vocab: Vec<String>) -> BackendSpec {
        match &self.backend_url {
            Some(url) => BackendSpec::Service { url: url.clone() },
            None => BackendSpec::Mock(MockConfig {
                dim: self.mock_dim,
                seed: self.mock_seed,
                vocab,
                ..MockConfig::default()
            }),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate a dataset file; for dev₁, split it into train and dev₂.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        source: Source,
        #[arg(long, value_enum, default_value = "dev1")]
        split: SplitArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Find pattern candidates in a corpus and rank them with masked completions.
    Mine {
        #[arg(long)]
        corpus: PathBuf,
        /// Labeled pairs (normally the training split).
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        source: Source,
        #[arg(long, value_enum, default_value = "verbatim")]
        match_mode: MatchArg,
        #[arg(long, default_value_t = 100)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one configuration and write a checkpoint.
    Train {
        #[command(flatten)]
        approach: ApproachArgs,
        #[command(flatten)]
        data: TrainData,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a labeled split with a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        source: Source,
        /// Decision threshold; defaults to the checkpoint's tuned value.
        #[arg(long)]
        threshold: Option<f64>,
        /// Count precision-crossing segments partially in the restricted AUC.
        #[arg(long)]
        interpolate: bool,
        #[arg(long)]
        metrics_out: Option<PathBuf>,
        #[arg(long)]
        curve_out: Option<PathBuf>,
    },
    /// Random hyperparameter search with a resumable run ledger.
    Hpo {
        #[command(flatten)]
        approach: ApproachArgs,
        #[command(flatten)]
        data: TrainData,
        #[arg(long, default_value_t = 500)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "base")]
        profile: BatchProfile,
        #[arg(long, default_value_t = 1e-8)]
        lr_min: f64,
        #[arg(long, default_value_t = 5e-2)]
        lr_max: f64,
        #[arg(long, default_value_t = 10)]
        accum_max: usize,
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Train with the top n patterns and evaluate with the top n', for all pairs.
    SweepN {
        /// Ranked pattern file written by `mine`.
        #[arg(long)]
        ranked: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        n_values: Vec<usize>,
        #[arg(long, value_enum, default_value = "phi-psi")]
        mode: ModeArg,
        #[command(flatten)]
        data: TrainData,
        #[arg(long)]
        test: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on another dataset at the standard threshold.
    Transfer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        target_source: Source,
    },
    /// Expected validation performance over the completed runs of a ledger.
    Evp {
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long, default_value_t = 50)]
        max_n: u32,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Dev1,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum MatchArg {
    Verbatim,
    Lemma,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    PhiPsi,
    Phi,
}

impl From<ModeArg> for ScoringMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::PhiPsi => ScoringMode::PhiPsi,
            ModeArg::Phi => ScoringMode::PhiOnly,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ApproachArg {
    Nli,
    Manpat,
    /// Top n of a ranked file.
    Autpat,
    /// A curated pattern file (`auto_curated` or `auto_arg` origins).
    Curated,
}

#[derive(Args)]
struct ApproachArgs {
    #[arg(long, value_enum)]
    approach: ApproachArg,
    #[arg(long)]
    patterns: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, value_enum, default_value = "phi-psi")]
    mode: ModeArg,
}

#[derive(Args)]
struct TrainData {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev2: PathBuf,
    #[arg(long)]
    source: Source,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML file with lr, weight_decay, grad_accum, epochs, profile, seed.
    #[arg(long, conflicts_with = "lr")]
    config: Option<PathBuf>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    weight_decay: f64,
    #[arg(long, default_value_t = 1)]
    grad_accum: usize,
    #[arg(long, default_value = "base")]
    profile: BatchProfile,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<HyperConfig> {
        let cfg = match (&self.config, self.lr) {
            (Some(path), _) => HyperConfig::load(path)?,
            (None, Some(lr)) => HyperConfig::new(lr, self.weight_decay, self.grad_accum, self.profile, self.seed),
            (None, None) => bail!("give either --config or --lr"),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn ranked_patterns(path: &Path) -> Result<Vec<Pattern>> {
    Ok(load_pattern_file(path)?.into_iter().map(|e| e.pattern).collect())
}

fn build_approach(args: &ApproachArgs, source: Source) -> Result<Approach> {
    let mode = ScoringMode::from(args.mode);
    let need_file = || args.patterns.as_deref().context("--patterns is required for this approach");
    Ok(match args.approach {
        ApproachArg::Nli => Approach::Nli,
        ApproachArg::Manpat => Approach::Pattern(PatternSet::manual(mode)?),
        ApproachArg::Autpat => {
            let (pats, antis) = top_n_patterns(&ranked_patterns(need_file()?)?, args.n)?;
            Approach::Pattern(PatternSet::new(pats, antis, mode)?.with_mined_on(source))
        }
        ApproachArg::Curated => {
            let all = load_curated(need_file()?)?;
            Approach::Pattern(PatternSet::from_patterns(all, mode)?.with_mined_on(source))
        }
    })
}

fn build_backend(spec: &BackendSpec) -> Result<Arc<dyn LmBackend>> {
    Ok(Arc::from(spec.build()?))
}

fn load_train_data(data: &TrainData) -> Result<(DataSplit, DataSplit)> {
    let train = load_dataset(&data.train, data.source, SplitName::Train)
        .with_context(|| format!("loading {}", data.train.display()))?;
    let dev2 = load_dataset(&data.dev2, data.source, SplitName::Dev2)
        .with_context(|| format!("loading {}", data.dev2.display()))?;
    Ok((train, dev2))
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Ingest {
            input,
            source,
            split,
            seed,
            out_dir,
        } => {
            std::fs::create_dir_all(&out_dir)?;
            match split {
                SplitArg::Test => {
                    let test = load_dataset(&input, source, SplitName::Test)?;
                    let path = out_dir.join("test.jsonl");
                    test.save(&path)?;
                    println!("test: {} instances ({})", test.len(), test.content_hash());
                }
                SplitArg::Dev1 => {
                    let dev1 = load_dataset(&input, source, SplitName::Dev1)?;
                    let (train, dev2) = split_dev1(&dev1, seed)?;
                    train.save(out_dir.join("train.jsonl"))?;
                    dev2.save(out_dir.join("dev2.jsonl"))?;
                    println!(
                        "dev1: {} -> train: {} ({}), dev2: {} ({})",
                        dev1.len(),
                        train.len(),
                        train.content_hash(),
                        dev2.len(),
                        dev2.content_hash()
                    );
                }
            }
        }
        Command::Mine {
            corpus,
            pairs,
            source,
            match_mode,
            k,
            out,
        } => {
            let pairs = load_dataset(&pairs, source, SplitName::Train)?;
            let mut vocab: Vec<String> = pairs
                .instances
                .iter()
                .flat_map(|i| [i.prem.representative.clone(), i.hypo.representative.clone()])
                .collect();
            vocab.sort();
            vocab.dedup();
            let backend = build_backend(&cli.backend.spec(vocab))?;
            let (mode, inflector) = match match_mode {
                MatchArg::Verbatim => (MatchMode::Verbatim, None),
                MatchArg::Lemma => (MatchMode::LemmaInflected, Some(&RuleInflector as &dyn liic::mining::Inflector)),
            };
            let (candidates, stats) = find_candidates(read_corpus(&corpus)?, &pairs.instances, mode, inflector)?;
            let scoring: Vec<ScoringPair> = pairs.instances.iter().map(ScoringPair::from).collect();
            let ranked = rank_candidates(backend.as_ref(), &candidates, &scoring, k)?;
            write_ranked(&ranked, &out)?;
            print_json(&stats)?;
            println!("{} ranked templates written to {}", ranked.len(), out.display());
        }
        Command::Train {
            approach,
            data,
            config,
            out,
        } => {
            let (train, dev2) = load_train_data(&data)?;
            let spec = cli.backend.spec(Vec::new());
            let ctx = RunContext {
                backend: build_backend(&spec)?,
                backend_spec: Some(spec.clone()),
                approach: build_approach(&approach, data.source)?,
                train: &train,
                dev2: &dev2,
                source: Some(data.source),
                run_dir: None,
                interpolate_auc: false,
            };
            let cfg = config.resolve()?;
            let (record, model) = fit(&ctx, &cfg)?;
            match model {
                Some(m) => {
                    Checkpoint::from_model(&m, Some(&spec), Some(&cfg), Some(data.source)).save(&out)?;
                    print_json(&record)?;
                }
                None => {
                    print_json(&record)?;
                    bail!("training failed: {}", record.error.unwrap_or_default());
                }
            }
        }
        Command::Eval {
            checkpoint,
            data,
            source,
            threshold,
            interpolate,
            metrics_out,
            curve_out,
        } => {
            let model: Model = Checkpoint::load(&checkpoint)?.restore()?;
            let split = load_dataset(&data, source, SplitName::Test)?;
            let t = threshold.unwrap_or_else(|| model.threshold());
            let metrics = evaluate(&model, &split.instances, t, interpolate)?;
            if let Some(p) = metrics_out {
                metrics.save(p)?;
            }
            if let Some(p) = curve_out {
                let scores = model.score_instances(&split.instances)?;
                let curve = pr_curve(&scores, &split.labels())?;
                write_curve_csv(&curve, std::fs::File::create(p)?)?;
            }
            print_json(&metrics)?;
        }
        Command::Hpo {
            approach,
            data,
            samples,
            seed,
            profile,
            lr_min,
            lr_max,
            accum_max,
            run_dir,
        } => {
            let (train, dev2) = load_train_data(&data)?;
            let spec = cli.backend.spec(Vec::new());
            let ctx = RunContext {
                backend: build_backend(&spec)?,
                backend_spec: Some(spec.clone()),
                approach: build_approach(&approach, data.source)?,
                train: &train,
                dev2: &dev2,
                source: Some(data.source),
                run_dir: Some(run_dir.clone()),
                interpolate_auc: false,
            };
            let space = SearchSpace {
                lr: (lr_min, lr_max),
                grad_accum: (1, accum_max),
                ..SearchSpace::default()
            };
            let configs = sample_configs_in(&space, samples, seed, profile)?;
            let outcome = run_search(&ctx, &configs)?;
            let failed = outcome.records.iter().filter(|r| !r.completed()).count();
            println!("{} runs, {failed} failed", outcome.records.len());
            match outcome.best {
                Some(b) => {
                    let best = &outcome.records[b];
                    if let Some(path) = &best.checkpoint {
                        std::fs::copy(path, run_dir.join("best.json"))?;
                    }
                    print_json(best)?;
                }
                None => bail!("no run completed"),
            }
        }
        Command::SweepN {
            ranked,
            n_values,
            mode,
            data,
            test,
            config,
            out,
        } => {
            let (train, dev2) = load_train_data(&data)?;
            let test = load_dataset(&test, data.source, SplitName::Test)?;
            let spec = cli.backend.spec(Vec::new());
            let ctx = RunContext {
                backend: build_backend(&spec)?,
                backend_spec: Some(spec),
                approach: Approach::Nli,
                train: &train,
                dev2: &dev2,
                source: Some(data.source),
                run_dir: None,
                interpolate_auc: false,
            };
            let grid = n_sweep(&ctx, &ranked_patterns(&ranked)?, &n_values, &config.resolve()?, mode.into(), &test)?;
            std::fs::write(&out, serde_json::to_string_pretty(&grid)?)?;
            println!("{} cells written to {}", grid.len(), out.display());
        }
        Command::Transfer {
            checkpoint,
            target,
            target_source,
        } => {
            let model = Checkpoint::load(&checkpoint)?.restore()?;
            let split = load_dataset(&target, target_source, SplitName::Test)?;
            let audited = AuditedSplit::new(&split, target_source);
            print_json(&transfer_eval(&model, &audited, false)?)?;
        }
        Command::Evp { ledger, max_n } => {
            let scores: Vec<f64> = read_ledger(&ledger)?
                .iter()
                .filter_map(|r| r.dev2.as_ref().map(|m| m.auc))
                .collect();
            if scores.is_empty() {
                bail!("{} has no completed runs", ledger.display());
            }
            println!("n\tevp");
            for n in 1..=max_n {
                println!("{n}\t{:.6}", expected_validation_performance(&scores, n)?);
            }
        }
    }
    Ok(())
}
