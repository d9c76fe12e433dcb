//! EM-trained word-entity translation models.
//!
//! Five alignment variants share one EM engine:
//!
//! | model    | alignment weights `q(i | j)`                              |
//! |----------|-----------------------------------------------------------|
//! | model1   | uniform over the null entity and all fixations            |
//! | model2   | learned positional table `p(i | j, m, l)`                 |
//! | model2t  | temporal, `exp(alpha * d)` over permissible fixations     |
//! | model2s  | semantic relatedness of word and entity, normalized       |
//! | model2ts | normalized product of the temporal and semantic weights   |
//!
//! `model1-r` and `model2t-r` rescore the learned table with semantic
//! relatedness after training.

mod em;
mod table;
mod temporal;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::ContentPair;
use crate::error::{Error, Result};
use crate::semantics::{SemanticContext, DEFAULT_SR_FLOOR};

pub use em::PROB_FLOOR;
use em::{run_em, AlignmentModel, FixedAlignment, Indexed};
pub use table::{format_sig, AssociationTable, PositionalTable, NULL_ENTITY};
use temporal::{combine_weights, temporal_weights, GridTemporal};
pub use temporal::{log_grid, temporal_alignment_probs, temporal_distance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "model1")]
    Model1,
    #[serde(rename = "model1-r")]
    Model1R,
    #[serde(rename = "model2")]
    Model2,
    #[serde(rename = "model2s")]
    Model2s,
    #[serde(rename = "model2t")]
    Model2t,
    #[serde(rename = "model2ts")]
    Model2ts,
    #[serde(rename = "model2t-r")]
    Model2tR,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::Model1,
        ModelKind::Model1R,
        ModelKind::Model2,
        ModelKind::Model2s,
        ModelKind::Model2t,
        ModelKind::Model2ts,
        ModelKind::Model2tR,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Model1 => "model1",
            ModelKind::Model1R => "model1-r",
            ModelKind::Model2 => "model2",
            ModelKind::Model2s => "model2s",
            ModelKind::Model2t => "model2t",
            ModelKind::Model2ts => "model2ts",
            ModelKind::Model2tR => "model2t-r",
        }
    }

    /// The EM-trained model underneath a rescored one.
    pub fn base(self) -> ModelKind {
        match self {
            ModelKind::Model1R => ModelKind::Model1,
            ModelKind::Model2tR => ModelKind::Model2t,
            k => k,
        }
    }

    pub fn is_rescored(self) -> bool {
        self.base() != self
    }

    pub fn needs_semantics(self) -> bool {
        matches!(
            self,
            ModelKind::Model1R | ModelKind::Model2s | ModelKind::Model2ts | ModelKind::Model2tR
        )
    }

    pub fn is_temporal(self) -> bool {
        matches!(self.base(), ModelKind::Model2t | ModelKind::Model2ts)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown model `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_iters: usize,
    /// Stop once the relative log-likelihood change falls below this.
    pub rel_tol: f64,
    /// Candidate temporal scales, per millisecond.
    pub alpha_grid: Vec<f64>,
    /// Relatedness floor for words outside the lexicon and for the null entity.
    pub sr_floor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_iters: 50,
            rel_tol: 1e-6,
            alpha_grid: log_grid(1e-5, 1e-1, 25),
            sr_floor: DEFAULT_SR_FLOOR,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if self.rel_tol.is_nan() || self.rel_tol <= 0.0 {
            return Err(Error::Config("rel_tol must be positive".into()));
        }
        if self.alpha_grid.is_empty() || self.alpha_grid.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::Config("alpha_grid must hold positive finite values".into()));
        }
        if !(self.sr_floor >= 0.0 && self.sr_floor.is_finite()) {
            return Err(Error::Config("sr_floor must be non-negative".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        crate::sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

/// Output of one training run.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub table: AssociationTable,
    pub positional: Option<PositionalTable>,
    pub alpha: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Training log-likelihood at initialization and after every iteration.
    pub trace: Vec<f64>,
    pub sr_floor: f64,
}

impl TrainedModel {
    pub fn log_likelihood_final(&self) -> f64 {
        *self.trace.last().unwrap_or(&f64::NAN)
    }

    pub fn metadata(&self, config: &TrainConfig) -> ModelMetadata {
        ModelMetadata {
            model: self.kind,
            alpha: self.alpha,
            iterations: self.iterations,
            converged: self.converged,
            log_likelihood: self.log_likelihood_final(),
            config_hash: config.digest(),
        }
    }

    /// Corpus log-likelihood of `pairs` under this model's alignment and
    /// association probabilities. Unseen words contribute `ln(PROB_FLOOR)`.
    pub fn log_likelihood(&self, pairs: &[ContentPair], semantics: Option<&SemanticContext>) -> Result<f64> {
        let base = self.kind.base();
        let sem = if matches!(base, ModelKind::Model2s | ModelKind::Model2ts) {
            Some(semantics.ok_or_else(|| Error::Config(format!("{} needs a domain model and taxonomy", self.kind)))?)
        } else {
            None
        };
        let mut ll = 0.0;
        for pair in pairs.iter().filter(|p| p.is_usable()) {
            let width = pair.fixations.len() + 1;
            let weights = match base {
                ModelKind::Model1 => uniform_weights(pair),
                ModelKind::Model2 => {
                    let table = self.positional.clone().unwrap_or_default();
                    positional_weights(pair, &table)
                }
                ModelKind::Model2t => temporal_weights(pair, self.alpha.unwrap_or(1e-3)),
                ModelKind::Model2s => semantic_weights(pair, sem.unwrap())?,
                ModelKind::Model2ts => combine_weights(
                    &temporal_weights(pair, self.alpha.unwrap_or(1e-3)),
                    &semantic_weights(pair, sem.unwrap())?,
                    width,
                ),
                _ => unreachable!("base() never returns a rescored kind"),
            };
            for (j, w) in pair.words.iter().enumerate() {
                let q = &weights[j * width..(j + 1) * width];
                if q.iter().all(|&x| x == 0.0) {
                    continue;
                }
                let s: f64 = std::iter::once(NULL_ENTITY)
                    .chain(pair.fixations.iter().map(|f| f.entity.as_str()))
                    .zip(q)
                    .map(|(e, qi)| qi * self.table.prob(e, &w.surface))
                    .sum();
                ll += s.max(PROB_FLOOR).ln();
            }
        }
        Ok(ll)
    }
}

/// Sidecar written next to an association table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub model: ModelKind,
    pub alpha: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub log_likelihood: f64,
    pub config_hash: String,
}

fn uniform_weights(pair: &ContentPair) -> Vec<f64> {
    let width = pair.fixations.len() + 1;
    vec![1.0 / width as f64; pair.words.len() * width]
}

fn positional_weights(pair: &ContentPair, table: &PositionalTable) -> Vec<f64> {
    let (m, l) = (pair.words.len() as u32, pair.fixations.len() as u32);
    let mut out = Vec::with_capacity((m * (l + 1)) as usize);
    for j in 1..=m {
        out.extend((0..=l).map(|i| table.prob(i, j, m, l)));
    }
    out
}

/// Normalized relatedness weights; the null entity scores the floor.
fn semantic_weights(pair: &ContentPair, ctx: &SemanticContext) -> Result<Vec<f64>> {
    let width = pair.fixations.len() + 1;
    let mut out = Vec::with_capacity(pair.words.len() * width);
    for w in &pair.words {
        let start = out.len();
        out.push(ctx.null_relatedness());
        for f in &pair.fixations {
            out.push(ctx.relatedness(&f.entity, &w.surface)?);
        }
        let total: f64 = out[start..].iter().sum();
        if total > 0.0 {
            out[start..].iter_mut().for_each(|x| *x /= total);
        } else {
            log::warn!("word `{}` has no permissible alignment; skipped", w.surface);
        }
    }
    Ok(out)
}

fn check_domain_coverage(ix: &Indexed, ctx: &SemanticContext) -> Result<()> {
    for e in &ix.entities[1..] {
        if !ctx.domain.entities.contains_key(e) {
            return Err(Error::Config(format!(
                "fixated entity `{e}` is missing from the domain model"
            )));
        }
    }
    Ok(())
}

fn finish(
    kind: ModelKind,
    ix: &Indexed,
    outcome: em::EmOutcome,
    positional: Option<PositionalTable>,
    alpha: Option<f64>,
    config: &TrainConfig,
) -> TrainedModel {
    TrainedModel {
        kind,
        table: AssociationTable::from_parts(ix.entities.clone(), ix.words.clone(), outcome.probs),
        positional,
        alpha,
        iterations: outcome.iterations,
        converged: outcome.converged,
        trace: outcome.trace,
        sr_floor: config.sr_floor,
    }
}

/// Model-1: every alignment equally likely.
pub fn train_model1(pairs: &[ContentPair], config: &TrainConfig) -> Result<TrainedModel> {
    config.validate()?;
    let ix = Indexed::new(pairs)?;
    let mut align = FixedAlignment(ix.weight_buffer(pairs, uniform_weights));
    let out = run_em(&ix, &mut align, config.max_iters, config.rel_tol);
    Ok(finish(ModelKind::Model1, &ix, out, None, None, config))
}

struct Positional {
    keys: Vec<(u32, u32, u32)>,
    values: Vec<Vec<f64>>,
    /// Table slot for every (pair, word) in training order.
    word_keys: Vec<usize>,
    weights: Vec<f64>,
    frozen: bool,
}

impl Positional {
    fn new(ix: &Indexed, frozen: bool) -> Self {
        let mut slot_of = std::collections::HashMap::new();
        let mut keys = Vec::new();
        let mut values = Vec::new();
        let mut word_keys = Vec::new();
        for ip in &ix.pairs {
            let (m, l) = (ip.words.len() as u32, ip.width() as u32 - 1);
            for j in 1..=m {
                let slot = *slot_of.entry((j, m, l)).or_insert_with(|| {
                    keys.push((j, m, l));
                    values.push(vec![1.0 / (l as f64 + 1.0); l as usize + 1]);
                    keys.len() - 1
                });
                word_keys.push(slot);
            }
        }
        let mut p = Positional {
            keys,
            values,
            word_keys,
            weights: Vec::with_capacity(ix.cells),
            frozen,
        };
        p.rebuild(ix);
        p
    }

    fn rebuild(&mut self, ix: &Indexed) {
        self.weights.clear();
        let mut k = 0;
        for ip in &ix.pairs {
            for _ in &ip.words {
                self.weights.extend_from_slice(&self.values[self.word_keys[k]]);
                k += 1;
            }
        }
    }

    fn table(&self) -> PositionalTable {
        PositionalTable {
            entries: self.keys.iter().cloned().zip(self.values.iter().cloned()).collect(),
        }
    }
}

impl AlignmentModel for Positional {
    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn needs_posterior(&self) -> bool {
        !self.frozen
    }

    fn update(&mut self, ix: &Indexed, _probs: &[f64], posterior: &[f64]) {
        if self.frozen {
            return;
        }
        let mut counts: Vec<Vec<f64>> = self.values.iter().map(|v| vec![0.0; v.len()]).collect();
        let mut k = 0;
        for ip in &ix.pairs {
            let width = ip.width();
            for j in 0..ip.words.len() {
                let base = ip.offset + j * width;
                for (c, r) in counts[self.word_keys[k]].iter_mut().zip(&posterior[base..base + width]) {
                    *c += r;
                }
                k += 1;
            }
        }
        for (v, c) in self.values.iter_mut().zip(counts) {
            let total: f64 = c.iter().sum();
            if total > 0.0 {
                *v = c.into_iter().map(|x| x / total).collect();
            }
        }
        self.rebuild(ix);
    }
}

/// Model-2: joint EM over `p(w|e)` and the positional alignment table.
pub fn train_model2(pairs: &[ContentPair], config: &TrainConfig) -> Result<TrainedModel> {
    train_model2_inner(pairs, config, false)
}

pub(crate) fn train_model2_inner(pairs: &[ContentPair], config: &TrainConfig, freeze: bool) -> Result<TrainedModel> {
    config.validate()?;
    let ix = Indexed::new(pairs)?;
    let mut align = Positional::new(&ix, freeze);
    let out = run_em(&ix, &mut align, config.max_iters, config.rel_tol);
    let table = align.table();
    Ok(finish(ModelKind::Model2, &ix, out, Some(table), None, config))
}

/// Model-2t: temporal alignment with the scale chosen from `alpha_grid` by
/// generalized EM.
pub fn train_model2t(pairs: &[ContentPair], config: &TrainConfig) -> Result<TrainedModel> {
    config.validate()?;
    let ix = Indexed::new(pairs)?;
    let mut align = GridTemporal::new(&ix, pairs, &config.alpha_grid, None);
    let out = run_em(&ix, &mut align, config.max_iters, config.rel_tol);
    let alpha = align.alpha();
    Ok(finish(ModelKind::Model2t, &ix, out, None, Some(alpha), config))
}

/// Model-2s: fixed alignment weights from semantic relatedness.
pub fn train_model2s(pairs: &[ContentPair], semantics: &SemanticContext, config: &TrainConfig) -> Result<TrainedModel> {
    config.validate()?;
    let ix = Indexed::new(pairs)?;
    check_domain_coverage(&ix, semantics)?;
    let sem = semantic_buffer(&ix, pairs, semantics)?;
    let mut align = FixedAlignment(sem);
    let out = run_em(&ix, &mut align, config.max_iters, config.rel_tol);
    Ok(finish(ModelKind::Model2s, &ix, out, None, None, config))
}

/// Model-2ts: product of temporal and semantic alignment weights.
pub fn train_model2ts(
    pairs: &[ContentPair],
    semantics: &SemanticContext,
    config: &TrainConfig,
) -> Result<TrainedModel> {
    config.validate()?;
    let ix = Indexed::new(pairs)?;
    check_domain_coverage(&ix, semantics)?;
    let sem = semantic_buffer(&ix, pairs, semantics)?;
    let mut align = GridTemporal::new(&ix, pairs, &config.alpha_grid, Some(&sem));
    let out = run_em(&ix, &mut align, config.max_iters, config.rel_tol);
    let alpha = align.alpha();
    Ok(finish(ModelKind::Model2ts, &ix, out, None, Some(alpha), config))
}

fn semantic_buffer(ix: &Indexed, pairs: &[ContentPair], ctx: &SemanticContext) -> Result<Vec<f64>> {
    let mut buf = Vec::with_capacity(ix.cells);
    for ip in &ix.pairs {
        buf.extend(semantic_weights(&pairs[ip.source], ctx)?);
    }
    Ok(buf)
}

/// Trains `kind`, rescoring afterwards for the `-r` variants.
pub fn train(
    kind: ModelKind,
    pairs: &[ContentPair],
    semantics: Option<&SemanticContext>,
    config: &TrainConfig,
) -> Result<TrainedModel> {
    let need = || semantics.ok_or_else(|| Error::Config(format!("{kind} needs a domain model and taxonomy")));
    let mut model = match kind.base() {
        ModelKind::Model1 => train_model1(pairs, config)?,
        ModelKind::Model2 => train_model2(pairs, config)?,
        ModelKind::Model2t => train_model2t(pairs, config)?,
        ModelKind::Model2s => train_model2s(pairs, need()?, config)?,
        ModelKind::Model2ts => train_model2ts(pairs, need()?, config)?,
        _ => unreachable!(),
    };
    if kind.is_rescored() {
        model.table = need()?.rescore(&model.table)?;
        model.kind = kind;
    }
    Ok(model)
}
