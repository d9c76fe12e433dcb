//! Online vocabulary acquisition replayed user by user.
//!
//! Users arrive in a random order. Before each user the system's vocabulary
//! is scored by how many transcript concepts it recovers from the recognized
//! speech; afterwards words are acquired from everything seen so far,
//! checked against the gold standard, and added. Repeating over many user
//! orders gives a mean concept identification rate per user index.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::{train, ModelKind, TrainConfig};
use crate::corpus::{ContentPair, Corpus, Instance, Source};
use crate::coupling::{
    classifiable, extract_features_from, labeled_examples, predict_coupled, train_ridge_logistic, CouplingConfig,
    Selection,
};
use crate::error::{Error, Result};
use crate::eval::{
    concept_identification_rate, default_vocabulary, nbest, reference_vocabulary, GoldStandard, RankedList, Vocabulary,
};
use crate::semantics::{Concept, DomainModel, SemanticContext, Taxonomy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    NoTraining,
    WithTraining,
}

impl std::str::FromStr for SimMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "no_training" => Ok(SimMode::NoTraining),
            "with_training" => Ok(SimMode::WithTraining),
            _ => Err(Error::Usage(format!("unknown simulation mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub mode: SimMode,
    pub training_users: usize,
    pub repetitions: usize,
    pub nbest_n: usize,
    pub master_seed: u64,
    pub model: ModelKind,
    /// Never acquire; the vocabulary stays at its starting point.
    pub static_baseline: bool,
    pub keep_traces: bool,
    pub train: TrainConfig,
    pub coupling: CouplingConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            mode: SimMode::NoTraining,
            training_users: 10,
            repetitions: 100,
            nbest_n: 10,
            master_seed: 7,
            model: ModelKind::Model2tR,
            static_baseline: false,
            keep_traces: true,
            train: TrainConfig::default(),
            coupling: CouplingConfig::default(),
        }
    }
}

/// One repetition: the user order and what happened at each index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepTrace {
    pub users: Vec<String>,
    pub cir: Vec<f64>,
    /// Vocabulary size at each evaluation.
    pub vocab_sizes: Vec<usize>,
    /// Words added after each index, with the entity they were verified for.
    pub added: Vec<Vec<(String, String)>>,
    pub final_vocabulary: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub config: SimConfig,
    pub mean_cir: Vec<f64>,
    pub stderr: Vec<f64>,
    pub traces: Vec<RepTrace>,
}

impl SimResult {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("user_index\tmean_cir\tstderr\n");
        for (i, (m, s)) in self.mean_cir.iter().zip(&self.stderr).enumerate() {
            let _ = writeln!(out, "{}\t{m:.6}\t{s:.6}", i + 1);
        }
        out
    }
}

/// Candidates present in the entity's gold set and not yet known, paired
/// with the concept they ground to.
pub fn verify_words(
    candidates: &RankedList,
    gold: &GoldStandard,
    vocab: &Vocabulary,
    semantics: &SemanticContext,
) -> Result<Vec<(String, Concept)>> {
    let mut out: Vec<(String, Concept)> = Vec::new();
    for w in candidates.surfaces() {
        if vocab.contains_key(w) || out.iter().any(|(a, _)| a == w) || !gold.contains(&candidates.entity, w) {
            continue;
        }
        out.push((w.to_string(), semantics.ground_concept(&candidates.entity, w)?));
    }
    Ok(out)
}

struct UserData<'c> {
    name: String,
    instances: Vec<&'c Instance>,
    recognized: Vec<ContentPair>,
    transcript: Vec<ContentPair>,
    /// (recognized content words, transcript content words) per utterance.
    utterances: Vec<(Vec<String>, Vec<String>)>,
}

fn content_surfaces(inst: &Instance, source: Source) -> Vec<String> {
    inst.content_words(source).map(|w| w.surface.clone()).collect()
}

struct Env<'a> {
    users: Vec<UserData<'a>>,
    gold: &'a GoldStandard,
    semantics: SemanticContext<'a>,
    reference: Vocabulary,
    defaults: Vocabulary,
    config: &'a SimConfig,
}

impl<'a> Env<'a> {
    fn new(
        corpus: &'a Corpus,
        gold: &'a GoldStandard,
        domain: &'a DomainModel,
        taxonomy: &'a Taxonomy,
        config: &'a SimConfig,
    ) -> Result<Self> {
        if config.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if gold.entities.is_empty() {
            return Err(Error::Config("simulation needs a non-empty gold standard".into()));
        }
        config.train.validate()?;
        let semantics = SemanticContext::new(domain, taxonomy, config.train.sr_floor);
        let users: Vec<UserData> = corpus
            .users()
            .into_iter()
            .map(|u| {
                let instances: Vec<&Instance> = corpus.user_instances(u).collect();
                UserData {
                    name: u.to_string(),
                    recognized: instances
                        .iter()
                        .map(|i| ContentPair::from_instance(i, Source::Recognized))
                        .collect(),
                    transcript: instances
                        .iter()
                        .map(|i| ContentPair::from_instance(i, Source::Transcript))
                        .collect(),
                    utterances: instances
                        .iter()
                        .map(|i| {
                            (
                                content_surfaces(i, Source::Recognized),
                                content_surfaces(i, Source::Transcript),
                            )
                        })
                        .collect(),
                    instances,
                }
            })
            .collect();
        if config.mode == SimMode::WithTraining && config.training_users >= users.len() {
            return Err(Error::Config(format!(
                "training_users = {} leaves no users to simulate out of {}",
                config.training_users,
                users.len()
            )));
        }
        Ok(Env {
            reference: reference_vocabulary(gold, &semantics)?,
            defaults: default_vocabulary(&semantics)?,
            users,
            gold,
            semantics,
            config,
        })
    }

    fn permutation(&self, rep: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.master_seed);
        rng.set_stream(rep as u64);
        let mut order: Vec<usize> = (0..self.users.len()).collect();
        order.shuffle(&mut rng);
        order
    }

    /// Trains on `pairs` and adds verified n-best words. Returns what was added.
    fn acquire(&self, pairs: &[ContentPair], vocab: &mut Vocabulary) -> Result<Vec<(String, String)>> {
        let model = match train(self.config.model, pairs, Some(&self.semantics), &self.config.train) {
            Ok(m) => m,
            Err(Error::Training(msg)) => {
                log::debug!("nothing to acquire from: {msg}");
                return Ok(Vec::new());
            }
            Err(e) => return Err(e),
        };
        let mut added = Vec::new();
        for e in model.table.real_entities() {
            if !self.semantics.domain.entities.contains_key(e) || !self.gold.entities.contains_key(e) {
                continue;
            }
            let list = nbest(&model.table, e, self.config.nbest_n, self.semantics.domain)?;
            for (w, c) in verify_words(&list, self.gold, vocab, &self.semantics)? {
                added.push((e.to_string(), w.clone()));
                vocab.insert(w, c);
            }
        }
        Ok(added)
    }

    fn cir(&self, user: usize, vocab: &Vocabulary) -> f64 {
        concept_identification_rate(&self.users[user].utterances, vocab, Some(&self.reference)).rate
    }

    fn no_training(&self, rep: usize) -> Result<RepTrace> {
        let order = self.permutation(rep);
        let mut vocab = self.defaults.clone();
        let mut trace = RepTrace::new(&order, self);
        let mut seen: Vec<ContentPair> = Vec::new();
        for &u in &order {
            trace.cir.push(self.cir(u, &vocab));
            trace.vocab_sizes.push(vocab.len());
            if self.config.static_baseline {
                trace.added.push(Vec::new());
                continue;
            }
            seen.extend(self.users[u].recognized.iter().cloned());
            trace.added.push(self.acquire(&seen, &mut vocab)?);
        }
        trace.final_vocabulary = vocab.into_keys().collect();
        Ok(trace)
    }

    fn with_training(&self, rep: usize) -> Result<RepTrace> {
        let order = self.permutation(rep);
        let m = self.config.training_users;
        let (train_users, rest) = order.split_at(m);
        let mut vocab = self.defaults.clone();

        let seed_pairs: Vec<ContentPair> = train_users
            .iter()
            .flat_map(|&u| self.users[u].transcript.iter().cloned())
            .collect();
        self.acquire(&seed_pairs, &mut vocab)?;

        let mut labeled: Vec<&Instance> = Vec::new();
        let mut base: Vec<ContentPair> = Vec::new();
        for &u in train_users {
            let data = &self.users[u];
            for (inst, pair) in data.instances.iter().zip(&data.transcript) {
                let label = inst.coupled.ok_or_else(|| {
                    Error::Config(format!(
                        "training user {} has unlabeled instance `{}`",
                        data.name, inst.id
                    ))
                })?;
                if inst.transcript_words.is_none() {
                    return Err(Error::Config(format!(
                        "training user {} lacks a transcript for `{}`",
                        data.name, inst.id
                    )));
                }
                if classifiable(inst, Source::Recognized) {
                    labeled.push(inst);
                }
                if label {
                    base.push(pair.clone());
                }
            }
        }
        let examples = labeled_examples(&labeled, Source::Recognized)?;
        let classifier = train_ridge_logistic(&examples, &Selection::all(), &self.config.coupling)?;

        let mut trace = RepTrace::new(rest, self);
        let mut seen = base;
        for &u in rest {
            trace.cir.push(self.cir(u, &vocab));
            trace.vocab_sizes.push(vocab.len());
            if self.config.static_baseline {
                trace.added.push(Vec::new());
                continue;
            }
            let data = &self.users[u];
            for (inst, pair) in data.instances.iter().zip(&data.recognized) {
                if !classifiable(inst, Source::Recognized) {
                    continue;
                }
                let features = extract_features_from(inst, Source::Recognized)?;
                if predict_coupled(&classifier, &features)?.1 {
                    seen.push(pair.clone());
                }
            }
            trace.added.push(self.acquire(&seen, &mut vocab)?);
        }
        trace.final_vocabulary = vocab.into_keys().collect();
        Ok(trace)
    }
}

impl RepTrace {
    fn new(order: &[usize], env: &Env) -> Self {
        RepTrace {
            users: order.iter().map(|&u| env.users[u].name.clone()).collect(),
            cir: Vec::with_capacity(order.len()),
            vocab_sizes: Vec::with_capacity(order.len()),
            added: Vec::with_capacity(order.len()),
            final_vocabulary: Vec::new(),
        }
    }
}

fn aggregate(config: &SimConfig, traces: Vec<RepTrace>) -> SimResult {
    let len = traces.first().map_or(0, |t| t.cir.len());
    let r = traces.len() as f64;
    let mut mean_cir = Vec::with_capacity(len);
    let mut stderr = Vec::with_capacity(len);
    for i in 0..len {
        let m = traces.iter().map(|t| t.cir[i]).sum::<f64>() / r;
        let se = if traces.len() > 1 {
            let var = traces.iter().map(|t| (t.cir[i] - m).powi(2)).sum::<f64>() / (r - 1.0);
            (var / r).sqrt()
        } else {
            0.0
        };
        mean_cir.push(m);
        stderr.push(se);
    }
    SimResult {
        config: config.clone(),
        mean_cir,
        stderr,
        traces: if config.keep_traces { traces } else { Vec::new() },
    }
}

fn run(
    corpus: &Corpus,
    gold: &GoldStandard,
    domain: &DomainModel,
    taxonomy: &Taxonomy,
    config: &SimConfig,
    with_training: bool,
) -> Result<SimResult> {
    let env = Env::new(corpus, gold, domain, taxonomy, config)?;
    let traces = (0..config.repetitions)
        .into_par_iter()
        .map(|rep| {
            if with_training {
                env.with_training(rep)
            } else {
                env.no_training(rep)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(config, traces))
}

pub fn simulate_no_training(
    corpus: &Corpus,
    gold: &GoldStandard,
    domain: &DomainModel,
    taxonomy: &Taxonomy,
    config: &SimConfig,
) -> Result<SimResult> {
    run(corpus, gold, domain, taxonomy, config, false)
}

/// With zero training users this is the no-training protocol.
pub fn simulate_with_training(
    corpus: &Corpus,
    gold: &GoldStandard,
    domain: &DomainModel,
    taxonomy: &Taxonomy,
    config: &SimConfig,
) -> Result<SimResult> {
    run(corpus, gold, domain, taxonomy, config, config.training_users > 0)
}

pub fn simulate(
    corpus: &Corpus,
    gold: &GoldStandard,
    domain: &DomainModel,
    taxonomy: &Taxonomy,
    config: &SimConfig,
) -> Result<SimResult> {
    match config.mode {
        SimMode::NoTraining => simulate_no_training(corpus, gold, domain, taxonomy, config),
        SimMode::WithTraining => simulate_with_training(corpus, gold, domain, taxonomy, config),
    }
}

/// Checks that vocabularies only grow and every acquired word is gold.
pub fn check_trace(trace: &RepTrace, gold: &GoldStandard) -> std::result::Result<(), String> {
    if trace.vocab_sizes.windows(2).any(|w| w[1] < w[0]) {
        return Err("vocabulary shrank".into());
    }
    for (step, added) in trace.added.iter().enumerate() {
        for (e, w) in added {
            if !gold.contains(e, w) {
                return Err(format!("step {}: `{w}` is not a gold word of `{e}`", step + 1));
            }
        }
        if step + 1 < trace.vocab_sizes.len() && trace.vocab_sizes[step] + added.len() != trace.vocab_sizes[step + 1] {
            return Err(format!("step {}: vocabulary size does not match additions", step + 1));
        }
    }
    Ok(())
}

/// Per-entity counts of acquired words across all traces, for reporting.
pub fn acquisition_counts(result: &SimResult) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for t in &result.traces {
        for added in &t.added {
            for (e, _) in added {
                *out.entry(e.clone()).or_default() += 1;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, GenConfig};

    fn small() -> crate::datagen::Generated {
        generate(&GenConfig {
            users: 5,
            instances_per_user: 40,
            seed: 21,
            ..GenConfig::default()
        })
        .unwrap()
    }

    fn cfg(mode: SimMode, reps: usize) -> SimConfig {
        SimConfig {
            mode,
            training_users: 2,
            repetitions: reps,
            train: TrainConfig {
                max_iters: 15,
                ..TrainConfig::default()
            },
            ..SimConfig::default()
        }
    }

    fn list(entity: &str, words: &[&str]) -> RankedList {
        RankedList {
            entity: entity.into(),
            words: words.iter().map(|w| (w.to_string(), 0.1)).collect(),
        }
    }

    #[test]
    fn verification_examples() {
        let g = small();
        let ctx = SemanticContext::new(&g.domain, &g.taxonomy, 1e-4);
        let vocab = Vocabulary::new();
        let ok = verify_words(&list("stool", &["seat", "bad"]), &g.gold, &vocab, &ctx).unwrap();
        assert_eq!(ok.iter().map(|(w, _)| w.as_str()).collect::<Vec<_>>(), ["seat"]);
        let known: Vocabulary = ok.into_iter().collect();
        assert!(verify_words(&list("stool", &["seat"]), &g.gold, &known, &ctx)
            .unwrap()
            .is_empty());
        assert!(verify_words(&list("stool", &[]), &g.gold, &vocab, &ctx)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn repeat_runs_are_identical() {
        let g = small();
        let c = cfg(SimMode::NoTraining, 1);
        let a = simulate(&g.corpus, &g.gold, &g.domain, &g.taxonomy, &c).unwrap();
        let b = simulate(&g.corpus, &g.gold, &g.domain, &g.taxonomy, &c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.mean_cir.len(), 5);
    }

    #[test]
    fn traces_are_sound() {
        let g = small();
        for mode in [SimMode::NoTraining, SimMode::WithTraining] {
            let r = simulate(&g.corpus, &g.gold, &g.domain, &g.taxonomy, &cfg(mode, 2)).unwrap();
            for t in &r.traces {
                check_trace(t, &g.gold).unwrap();
                assert!(t.cir.iter().all(|c| (0.0..=1.0).contains(c)));
            }
            let expect = if mode == SimMode::WithTraining { 3 } else { 5 };
            assert_eq!(r.mean_cir.len(), expect);
        }
    }

    #[test]
    fn static_vocabulary_never_changes() {
        let g = small();
        let c = SimConfig {
            static_baseline: true,
            ..cfg(SimMode::NoTraining, 3)
        };
        let r = simulate(&g.corpus, &g.gold, &g.domain, &g.taxonomy, &c).unwrap();
        for t in &r.traces {
            assert!(t.vocab_sizes.iter().all(|&s| s == t.vocab_sizes[0]));
        }
    }

    #[test]
    fn zero_training_users_is_the_plain_protocol() {
        let g = small();
        let a = simulate(
            &g.corpus,
            &g.gold,
            &g.domain,
            &g.taxonomy,
            &SimConfig {
                training_users: 0,
                ..cfg(SimMode::WithTraining, 1)
            },
        )
        .unwrap();
        let b = simulate(
            &g.corpus,
            &g.gold,
            &g.domain,
            &g.taxonomy,
            &SimConfig {
                training_users: 0,
                ..cfg(SimMode::NoTraining, 1)
            },
        )
        .unwrap();
        assert_eq!(a.mean_cir, b.mean_cir);
        assert_eq!(a.traces, b.traces);
    }

    #[test]
    fn config_errors() {
        let g = small();
        let too_many = SimConfig {
            training_users: 5,
            ..cfg(SimMode::WithTraining, 1)
        };
        assert!(matches!(
            simulate(&g.corpus, &g.gold, &g.domain, &g.taxonomy, &too_many),
            Err(Error::Config(_))
        ));
        let no_gold = GoldStandard::default();
        assert!(matches!(
            simulate(
                &g.corpus,
                &no_gold,
                &g.domain,
                &g.taxonomy,
                &cfg(SimMode::NoTraining, 1)
            ),
            Err(Error::Config(_))
        ));
        let mut unlabeled = g.corpus.clone();
        for i in &mut unlabeled.instances {
            i.coupled = None;
        }
        assert!(simulate(
            &unlabeled,
            &g.gold,
            &g.domain,
            &g.taxonomy,
            &cfg(SimMode::WithTraining, 1)
        )
        .is_err());
    }

    #[test]
    fn seeded_vocabulary_starts_higher() {
        let g = small();
        let plain = simulate(&g.corpus, &g.gold, &g.domain, &g.taxonomy, &cfg(SimMode::NoTraining, 4)).unwrap();
        let seeded = simulate(
            &g.corpus,
            &g.gold,
            &g.domain,
            &g.taxonomy,
            &cfg(SimMode::WithTraining, 4),
        )
        .unwrap();
        assert!(seeded.mean_cir[0] > plain.mean_cir[0]);
        for t in &seeded.traces {
            assert!(t.vocab_sizes[0] > plain.traces[0].vocab_sizes[0]);
        }
    }

    #[test]
    fn doubling_repetitions_keeps_means_stable() {
        let g = small();
        let c = SimConfig {
            static_baseline: true,
            ..cfg(SimMode::NoTraining, 30)
        };
        let a = simulate(&g.corpus, &g.gold, &g.domain, &g.taxonomy, &c).unwrap();
        let b = simulate(
            &g.corpus,
            &g.gold,
            &g.domain,
            &g.taxonomy,
            &SimConfig { repetitions: 60, ..c },
        )
        .unwrap();
        assert_eq!(a.traces[..], b.traces[..30]);
        for i in 0..a.mean_cir.len() {
            assert!((a.mean_cir[i] - b.mean_cir[i]).abs() < 3.0 * a.stderr[i].max(b.stderr[i]));
        }
    }
}
