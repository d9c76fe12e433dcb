//! Command-line front end.
//!
//! Every file written is accompanied by `<file>.manifest.json` recording the
//! argument vector, the resolved configuration, digests of all inputs and
//! the seed, which is enough to re-run the command.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::align::{train, AssociationTable, ModelKind, TrainConfig};
use crate::corpus::{ContentPair, Corpus, Instance, Source};
use crate::coupling::{
    classifiable, cross_validate, cv_table_tsv, extract_features_from, labeled_examples, predict_coupled,
    train_ridge_logistic, CouplingConfig, CouplingModel, Selection,
};
use crate::datagen::{generate, GenConfig, Generated};
use crate::error::{Error, Result};
use crate::eval::{evaluate, pr_curve, GoldStandard, MetricsReport};
use crate::semantics::{DomainModel, SemanticContext, Taxonomy, DEFAULT_SR_FLOOR};
use crate::simulate::{simulate, SimConfig, SimMode};

#[derive(Debug, Parser)]
#[command(
    name = "gaze-lexicon",
    version,
    about = "Word acquisition from speech and gaze streams"
)]
pub struct Cli {
    /// Upper bound on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON file with the subcommand's configuration; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceArg {
    Recognized,
    Transcript,
}

impl From<SourceArg> for Source {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::Recognized => Source::Recognized,
            SourceArg::Transcript => Source::Transcript,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Map,
    Pr,
    Curve,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    #[value(name = "no_training")]
    NoTraining,
    #[value(name = "with_training")]
    WithTraining,
}

#[derive(Debug, Args)]
pub struct SemanticArgs {
    #[arg(long)]
    pub domain: Option<PathBuf>,
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with its gold standard, domain model and taxonomy.
    Datagen {
        #[arg(long, default_value = "data")]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        users: Option<usize>,
        #[arg(long)]
        instances_per_user: Option<usize>,
        #[arg(long)]
        noise_word_rate: Option<f64>,
        #[arg(long)]
        coupled_fraction: Option<f64>,
    },
    /// Train a translation model and write its association table.
    Train {
        #[arg(long)]
        model: ModelKind,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "recognized")]
        source: SourceArg,
        #[command(flatten)]
        semantics: SemanticArgs,
        /// Keep only instances labeled coupled.
        #[arg(long, conflicts_with = "coupling_model")]
        coupled_only: bool,
        /// Keep only instances this classifier predicts coupled.
        #[arg(long)]
        coupling_model: Option<PathBuf>,
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// Reweight an association table by semantic relatedness.
    Rescore {
        #[arg(long)]
        assoc: PathBuf,
        #[arg(long)]
        domain: PathBuf,
        #[arg(long)]
        taxonomy: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        sr_floor: Option<f64>,
    },
    /// Coupled-instance classifier.
    Couple {
        #[command(subcommand)]
        command: CoupleCommand,
    },
    /// Score an association table against the gold standard.
    Eval {
        #[arg(long)]
        assoc: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        domain: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        metric: Metric,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value = "metrics.json")]
        out: PathBuf,
    },
    /// Ground each entity's n-best words to domain properties.
    Ground {
        #[arg(long)]
        assoc: PathBuf,
        #[arg(long)]
        domain: PathBuf,
        #[arg(long)]
        taxonomy: PathBuf,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value = "grounding.json")]
        out: PathBuf,
    },
    /// Replay online acquisition over permuted user orders.
    Simulate {
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        training_users: Option<usize>,
        #[arg(long)]
        static_baseline: bool,
        /// Without a corpus, the default synthetic corpus with this seed is used.
        #[arg(long, default_value_t = 7)]
        data_seed: u64,
        #[arg(long, requires_all = ["gold", "domain", "taxonomy"])]
        corpus: Option<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[command(flatten)]
        semantics: SemanticArgs,
        #[arg(long, default_value = "simulation.json")]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum CoupleCommand {
    /// Fit the classifier on labeled instances.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "G+UA+S+CC")]
        features: String,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, value_enum, default_value = "recognized")]
        source: SourceArg,
    },
    /// Stratified k-fold cross-validation over feature sets.
    Cv {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// A single feature set; by default every ablation row is run.
        #[arg(long)]
        features: Option<String>,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, value_enum, default_value = "recognized")]
        source: SourceArg,
    },
    /// Label instances with a trained classifier.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "recognized")]
        source: SourceArg,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub argv: Vec<String>,
    pub config: Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub version: String,
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

struct Run {
    subcommand: String,
    argv: Vec<String>,
    config: Value,
    inputs: BTreeMap<String, String>,
    outputs: Vec<(PathBuf, Vec<u8>)>,
    seed: Option<u64>,
    details: Option<Value>,
}

impl Run {
    fn new(subcommand: &str, argv: &[String]) -> Self {
        Run {
            subcommand: subcommand.into(),
            argv: argv.to_vec(),
            config: Value::Null,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            seed: None,
            details: None,
        }
    }

    fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        self.inputs.insert(path_str(path), crate::sha256_hex(&bytes));
        Ok(bytes)
    }

    fn corpus(&mut self, path: &Path) -> Result<Corpus> {
        let bytes = self.read(path)?;
        Corpus::from_reader(bytes.as_slice())
    }

    fn json<T: serde::de::DeserializeOwned>(&mut self, path: &Path, what: &'static str) -> Result<T> {
        let bytes = self.read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Format {
            what,
            message: format!("{}: {e}", path.display()),
        })
    }

    fn gold(&mut self, path: &Path) -> Result<GoldStandard> {
        let g: GoldStandard = self.json(path, "gold standard")?;
        g.validate()?;
        Ok(g)
    }

    fn taxonomy(&mut self, path: &Path) -> Result<Taxonomy> {
        Taxonomy::from_file(self.json(path, "taxonomy")?)
    }

    fn table(&mut self, path: &Path) -> Result<AssociationTable> {
        let bytes = self.read(path)?;
        let text = String::from_utf8(bytes).map_err(|e| Error::Format {
            what: "association table",
            message: format!("{}: {e}", path.display()),
        })?;
        AssociationTable::from_tsv(&text)
    }

    fn write(&mut self, path: &Path, bytes: impl Into<Vec<u8>>) {
        self.outputs.push((path.to_path_buf(), bytes.into()));
    }

    fn write_json<T: Serialize>(&mut self, path: &Path, value: &T) -> Result<()> {
        let mut text = to_json(value)?;
        text.push('\n');
        self.write(path, text);
        Ok(())
    }

    fn finish(self) -> Result<()> {
        let manifest = RunManifest {
            subcommand: self.subcommand,
            argv: self.argv,
            config: self.config,
            inputs: self.inputs,
            outputs: self.outputs.iter().map(|(p, _)| path_str(p)).collect(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: self.seed,
            details: self.details,
        };
        let mut text = to_json(&manifest)?;
        text.push('\n');
        for (path, bytes) in &self.outputs {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
            let side = manifest_path(path);
            std::fs::write(&side, &text).map_err(|e| Error::io(&side, e))?;
            log::info!("wrote {}", path.display());
        }
        Ok(())
    }
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn path_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Format {
        what: "output",
        message: e.to_string(),
    })
}

fn to_value<T: Serialize>(value: &T) -> Result<Value> {
    serde_json::to_value(value).map_err(|e| Error::Format {
        what: "configuration",
        message: e.to_string(),
    })
}

/// Configuration from `--config`, or the defaults.
fn base_config<T: Default + serde::de::DeserializeOwned>(run: &mut Run, path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => {
            let bytes = run.read(p)?;
            serde_json::from_slice(&bytes).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
        None => Ok(T::default()),
    }
}

fn semantic_inputs(run: &mut Run, args: &SemanticArgs) -> Result<Option<(DomainModel, Taxonomy)>> {
    match (&args.domain, &args.taxonomy) {
        (Some(d), Some(t)) => {
            let domain: DomainModel = run.json(d, "domain model")?;
            let taxonomy = run.taxonomy(t)?;
            domain.validate(&taxonomy)?;
            Ok(Some((domain, taxonomy)))
        }
        (None, None) => Ok(None),
        _ => Err(Error::Usage("--domain and --taxonomy must be given together".into())),
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let argv: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return 2;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already configured: {e}");
        }
    }
    match execute(cli, &argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Usage(_)) {
                2
            } else {
                1
            }
        }
    }
}

pub fn execute(cli: Cli, argv: &[String]) -> Result<()> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Datagen {
            out_dir,
            seed,
            users,
            instances_per_user,
            noise_word_rate,
            coupled_fraction,
        } => {
            let mut run = Run::new("datagen", argv);
            let mut cfg: GenConfig = base_config(&mut run, config)?;
            if let Some(v) = seed {
                cfg.seed = v;
            }
            if let Some(v) = users {
                cfg.users = v;
            }
            if let Some(v) = instances_per_user {
                cfg.instances_per_user = v;
            }
            if let Some(v) = noise_word_rate {
                cfg.noise_word_rate = v;
            }
            if let Some(v) = coupled_fraction {
                cfg.coupled_fraction = v;
            }
            let Generated {
                corpus,
                gold,
                domain,
                taxonomy,
            } = generate(&cfg)?;
            run.seed = Some(cfg.seed);
            run.config = to_value(&cfg)?;
            run.write(&out_dir.join("corpus.jsonl"), corpus.to_jsonl());
            run.write_json(&out_dir.join("gold.json"), &gold)?;
            run.write_json(&out_dir.join("domain.json"), &domain)?;
            run.write_json(&out_dir.join("taxonomy.json"), &taxonomy.to_file())?;
            run.finish()
        }
        Command::Train {
            model,
            corpus,
            out,
            source,
            semantics,
            coupled_only,
            coupling_model,
            max_iters,
        } => {
            let mut run = Run::new("train", argv);
            let mut cfg: TrainConfig = base_config(&mut run, config)?;
            if let Some(v) = max_iters {
                cfg.max_iters = v;
            }
            let corpus = run.corpus(&corpus)?;
            let sem = semantic_inputs(&mut run, &semantics)?;
            let classifier: Option<CouplingModel> = match &coupling_model {
                Some(p) => Some(run.json(p, "coupling model")?),
                None => None,
            };
            let source = Source::from(source);
            let mut pairs = Vec::new();
            for inst in &corpus.instances {
                let keep = if coupled_only {
                    inst.coupled == Some(true)
                } else if let Some(c) = &classifier {
                    classifiable(inst, source) && predict_coupled(c, &extract_features_from(inst, source)?)?.1
                } else {
                    true
                };
                if keep {
                    pairs.push(ContentPair::from_instance(inst, source));
                }
            }
            let ctx = sem.as_ref().map(|(d, t)| SemanticContext::new(d, t, cfg.sr_floor));
            let trained = train(model, &pairs, ctx.as_ref(), &cfg)?;
            run.config = serde_json::json!({
                "model": model,
                "source": format!("{source:?}").to_lowercase(),
                "coupled_only": coupled_only,
                "train": to_value(&cfg)?,
            });
            run.details = Some(to_value(&trained.metadata(&cfg))?);
            run.write(&out, trained.table.to_tsv());
            run.finish()
        }
        Command::Rescore {
            assoc,
            domain,
            taxonomy,
            out,
            sr_floor,
        } => {
            let mut run = Run::new("rescore", argv);
            let floor = sr_floor.unwrap_or(DEFAULT_SR_FLOOR);
            let table = run.table(&assoc)?;
            let domain: DomainModel = run.json(&domain, "domain model")?;
            let taxonomy = run.taxonomy(&taxonomy)?;
            domain.validate(&taxonomy)?;
            let rescored = SemanticContext::new(&domain, &taxonomy, floor).rescore(&table)?;
            run.config = serde_json::json!({ "sr_floor": floor });
            run.write(&out, rescored.to_tsv());
            run.finish()
        }
        Command::Couple { command } => couple(command, config, argv),
        Command::Eval {
            assoc,
            gold,
            domain,
            metric,
            n,
            out,
        } => {
            let mut run = Run::new("eval", argv);
            let table = run.table(&assoc)?;
            let gold = run.gold(&gold)?;
            let domain: DomainModel = run.json(&domain, "domain model")?;
            let report = evaluate(&table, &gold, &domain, n, None)?;
            let curve = match metric {
                Metric::Curve | Metric::All => Some(pr_curve(&table, &gold, &domain, n.max(1))?),
                _ => None,
            };
            let output = EvalOutput::new(metric, report, curve);
            run.config = serde_json::json!({ "metric": format!("{metric:?}").to_lowercase(), "n": n });
            run.write_json(&out, &output)?;
            run.finish()
        }
        Command::Ground {
            assoc,
            domain,
            taxonomy,
            n,
            out,
        } => {
            let mut run = Run::new("ground", argv);
            let table = run.table(&assoc)?;
            let domain: DomainModel = run.json(&domain, "domain model")?;
            let taxonomy = run.taxonomy(&taxonomy)?;
            domain.validate(&taxonomy)?;
            let ctx = SemanticContext::new(&domain, &taxonomy, DEFAULT_SR_FLOOR);
            let mut grounded: BTreeMap<String, Vec<GroundedWord>> = BTreeMap::new();
            for e in table.real_entities() {
                if !domain.entities.contains_key(e) {
                    log::warn!("entity `{e}` is not in the domain model; skipped");
                    continue;
                }
                let list = crate::eval::nbest(&table, e, n, &domain)?;
                let mut words = Vec::new();
                for (w, p) in &list.words {
                    let c = ctx.ground_concept(e, w)?;
                    words.push(GroundedWord {
                        word: w.clone(),
                        probability: *p,
                        property: c.property,
                        node: c.node,
                    });
                }
                grounded.insert(e.to_string(), words);
            }
            run.config = serde_json::json!({ "n": n });
            run.write_json(&out, &grounded)?;
            run.finish()
        }
        Command::Simulate {
            mode,
            reps,
            seed,
            training_users,
            static_baseline,
            data_seed,
            corpus,
            gold,
            semantics,
            out,
        } => {
            let mut run = Run::new("simulate", argv);
            let mut cfg: SimConfig = base_config(&mut run, config)?;
            if let Some(m) = mode {
                cfg.mode = match m {
                    ModeArg::NoTraining => SimMode::NoTraining,
                    ModeArg::WithTraining => SimMode::WithTraining,
                };
            }
            if let Some(v) = reps {
                cfg.repetitions = v;
            }
            if let Some(v) = seed {
                cfg.master_seed = v;
            }
            if let Some(v) = training_users {
                cfg.training_users = v;
            }
            if static_baseline {
                cfg.static_baseline = true;
            }
            let data = match corpus {
                Some(c) => {
                    let corpus = run.corpus(&c)?;
                    let gold = run.gold(gold.as_deref().expect("required by clap"))?;
                    let (domain, taxonomy) = semantic_inputs(&mut run, &semantics)?
                        .ok_or_else(|| Error::Usage("--corpus needs --domain and --taxonomy".into()))?;
                    Generated {
                        corpus,
                        gold,
                        domain,
                        taxonomy,
                    }
                }
                None => generate(&GenConfig {
                    seed: data_seed,
                    ..GenConfig::default()
                })?,
            };
            let result = simulate(&data.corpus, &data.gold, &data.domain, &data.taxonomy, &cfg)?;
            run.seed = Some(cfg.master_seed);
            run.config = to_value(&cfg)?;
            run.write_json(&out, &result)?;
            run.write(&out.with_extension("tsv"), result.to_tsv());
            run.finish()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedWord {
    pub word: String,
    pub probability: f64,
    pub property: String,
    pub node: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pr_curve: Option<Vec<(f64, f64)>>,
    pub report: MetricsReport,
}

impl EvalOutput {
    fn new(metric: Metric, report: MetricsReport, pr_curve: Option<Vec<(f64, f64)>>) -> Self {
        let map = matches!(metric, Metric::Map | Metric::All).then_some(report.map);
        let pr = matches!(metric, Metric::Pr | Metric::All);
        EvalOutput {
            map,
            precision: pr.then_some(report.precision),
            recall: pr.then_some(report.recall),
            pr_curve,
            report,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub probability: Option<f64>,
    pub coupled: bool,
}

fn examples_for(corpus: &Corpus, source: Source) -> Result<Vec<(crate::coupling::FeatureVector, bool)>> {
    let usable: Vec<&Instance> = corpus
        .instances
        .iter()
        .filter(|i| i.coupled.is_some() && classifiable(i, source))
        .collect();
    labeled_examples(&usable, source)
}

fn couple(command: CoupleCommand, config: Option<&Path>, argv: &[String]) -> Result<()> {
    match command {
        CoupleCommand::Train {
            corpus,
            out,
            features,
            lambda,
            source,
        } => {
            let mut run = Run::new("couple train", argv);
            let mut cfg: CouplingConfig = base_config(&mut run, config)?;
            if let Some(l) = lambda {
                cfg.lambda = l;
            }
            let selection = Selection::parse(&features)?;
            let corpus = run.corpus(&corpus)?;
            let model = train_ridge_logistic(&examples_for(&corpus, source.into())?, &selection, &cfg)?;
            run.config = serde_json::json!({ "features": selection.label(), "coupling": to_value(&cfg)? });
            run.write_json(&out, &model)?;
            run.finish()
        }
        CoupleCommand::Cv {
            corpus,
            out,
            features,
            k,
            seed,
            lambda,
            source,
        } => {
            let mut run = Run::new("couple cv", argv);
            let mut cfg: CouplingConfig = base_config(&mut run, config)?;
            if let Some(l) = lambda {
                cfg.lambda = l;
            }
            let rows = match &features {
                Some(f) => vec![Selection::parse(f)?],
                None => Selection::table_rows(),
            };
            let corpus = run.corpus(&corpus)?;
            let examples = examples_for(&corpus, source.into())?;
            let results = rows
                .iter()
                .map(|s| cross_validate(&examples, s, k, &cfg, seed))
                .collect::<Result<Vec<_>>>()?;
            run.seed = Some(seed);
            run.config = serde_json::json!({
                "k": k,
                "feature_sets": rows.iter().map(Selection::label).collect::<Vec<_>>(),
                "coupling": to_value(&cfg)?,
            });
            run.write(&out, cv_table_tsv(&results));
            run.finish()
        }
        CoupleCommand::Predict {
            model,
            corpus,
            out,
            source,
        } => {
            let mut run = Run::new("couple predict", argv);
            let classifier: CouplingModel = run.json(&model, "coupling model")?;
            let corpus = run.corpus(&corpus)?;
            let source = Source::from(source);
            let mut text = String::new();
            for inst in &corpus.instances {
                let p = if classifiable(inst, source) {
                    Some(predict_coupled(&classifier, &extract_features_from(inst, source)?)?)
                } else {
                    None
                };
                let line = Prediction {
                    id: inst.id.clone(),
                    probability: p.map(|(q, _)| q),
                    coupled: p.is_some_and(|(_, c)| c),
                };
                text.push_str(&serde_json::to_string(&line).map_err(|e| Error::Format {
                    what: "prediction",
                    message: e.to_string(),
                })?);
                text.push('\n');
            }
            run.config = serde_json::json!({ "source": format!("{source:?}").to_lowercase() });
            run.write(&out, text);
            run.finish()
        }
    }
}
