//! Detection of closely coupled speech-gaze instances.
//!
//! Each instance is summarized by speech, gaze, user-activity and
//! conversation-context features; a ridge-penalized logistic regression
//! predicts whether its words refer to what the user was looking at.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{merge_fixations, Instance, Source};
use crate::error::{Error, Result};
use crate::semantics::read_json;

pub const NUMERIC_SLOTS: usize = 10;
pub const DIM: usize = NUMERIC_SLOTS + 8 + 1;
pub const INTERCEPT: usize = DIM - 1;

pub const SLOT_NAMES: [&str; DIM] = [
    "word_count",
    "word_rate",
    "entity_count",
    "entity_rate",
    "fixation_max_ms",
    "fixation_mean_ms",
    "fixation_var_ms2",
    "entity_share",
    "movement_max",
    "position_var",
    "prev_specific-see",
    "prev_nonspecific-see",
    "prev_previous-see",
    "prev_describe",
    "prev_compare",
    "prev_clarify",
    "prev_action-request",
    "prev_misc",
    "intercept",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; DIM]);

impl FeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Features from the recognized word stream.
pub fn extract_features(instance: &Instance) -> Result<FeatureVector> {
    extract_features_from(instance, Source::Recognized)
}

pub fn extract_features_from(instance: &Instance, source: Source) -> Result<FeatureVector> {
    let mut x = [0.0; DIM];
    let c_w = instance.content_words(source).count() as f64;
    let l_s = instance.speech_len_ms as f64 / 1000.0;
    if c_w > 0.0 && l_s <= 0.0 {
        return Err(Error::Feature {
            id: instance.id.clone(),
            message: "words present but speech length is zero".into(),
        });
    }
    let rate = |c: f64| if l_s > 0.0 { c / l_s } else { 0.0 };

    let mut per_entity: BTreeMap<&str, f64> = BTreeMap::new();
    let merged = merge_fixations(&instance.fixations);
    for f in &merged {
        *per_entity.entry(f.entity.as_str()).or_default() += f.duration() as f64;
    }
    let c_e = per_entity.len() as f64;
    let lens: Vec<f64> = per_entity.values().copied().collect();
    let (max, mean, var) = if lens.is_empty() {
        (0.0, 0.0, 0.0)
    } else {
        let mean = lens.iter().sum::<f64>() / c_e;
        let var = lens.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / c_e;
        (lens.iter().copied().fold(f64::MIN, f64::max), mean, var)
    };

    x[0] = c_w;
    x[1] = rate(c_w);
    x[2] = c_e;
    x[3] = rate(c_e);
    x[4] = max;
    x[5] = mean;
    x[6] = var;
    x[7] = if instance.visible_entity_count > 0 {
        c_e / instance.visible_entity_count as f64
    } else {
        0.0
    };
    x[8] = max_movement(&instance.user_positions);
    x[9] = position_variance(&instance.user_positions);
    if let Some(r) = instance.prev_response {
        x[NUMERIC_SLOTS + r.index()] = 1.0;
    }
    x[INTERCEPT] = 1.0;
    Ok(FeatureVector(x))
}

fn max_movement(points: &[[f64; 3]]) -> f64 {
    let mut best: f64 = 0.0;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
            best = best.max(d);
        }
    }
    best
}

/// Trace of the population covariance of the positions.
fn position_variance(points: &[[f64; 3]]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let n = points.len() as f64;
    (0..3)
        .map(|k| {
            let m = points.iter().map(|p| p[k]).sum::<f64>() / n;
            points.iter().map(|p| (p[k] - m).powi(2)).sum::<f64>() / n
        })
        .sum()
}

/// Feature families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureSet {
    /// Speech: word count and rate.
    S,
    /// Gaze: entity counts and fixation lengths.
    G,
    /// User activity: movement.
    UA,
    /// Conversation context: previous system response.
    CC,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 4] = [FeatureSet::S, FeatureSet::G, FeatureSet::UA, FeatureSet::CC];

    pub fn slots(self) -> std::ops::Range<usize> {
        match self {
            FeatureSet::S => 0..2,
            FeatureSet::G => 2..8,
            FeatureSet::UA => 8..10,
            FeatureSet::CC => NUMERIC_SLOTS..NUMERIC_SLOTS + 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::S => "S",
            FeatureSet::G => "G",
            FeatureSet::UA => "UA",
            FeatureSet::CC => "CC",
        }
    }
}

/// Union of feature families; empty means the all-coupled baseline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection(pub BTreeSet<FeatureSet>);

impl Selection {
    pub fn all() -> Self {
        Selection(FeatureSet::ALL.into_iter().collect())
    }

    pub fn is_null(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mask(&self) -> [bool; DIM] {
        let mut m = [false; DIM];
        for s in &self.0 {
            for i in s.slots() {
                m[i] = true;
            }
        }
        m[INTERCEPT] = true;
        m
    }

    pub fn label(&self) -> String {
        if self.is_null() {
            return "Null".into();
        }
        // Display order follows the ablation table: G, UA, S, CC.
        let order = [FeatureSet::G, FeatureSet::UA, FeatureSet::S, FeatureSet::CC];
        order
            .iter()
            .filter(|s| self.0.contains(s))
            .map(|s| s.name())
            .collect::<Vec<_>>()
            .join("+")
    }

    /// Parses `Null`, `all`, or a `+`-joined list such as `G+UA`.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "Null" | "null" => return Ok(Selection(BTreeSet::new())),
            "all" | "ALL" => return Ok(Selection::all()),
            _ => {}
        }
        let mut set = BTreeSet::new();
        for part in s.split('+') {
            let f = FeatureSet::ALL
                .into_iter()
                .find(|f| f.name().eq_ignore_ascii_case(part.trim()))
                .ok_or_else(|| Error::Usage(format!("unknown feature set `{part}`")))?;
            set.insert(f);
        }
        Ok(Selection(set))
    }

    /// The ablation rows reported for the classifier.
    pub fn table_rows() -> Vec<Selection> {
        ["Null", "S", "G", "UA", "CC", "G+UA", "G+UA+S", "G+UA+CC", "G+UA+S+CC"]
            .iter()
            .map(|s| Selection::parse(s).expect("static labels parse"))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingModel {
    pub slot_names: Vec<String>,
    pub beta: Vec<f64>,
    pub lambda: f64,
    /// Standardization statistics; identity for one-hot and intercept slots.
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Slots that carry weight; unselected and constant slots are off.
    pub active: Vec<bool>,
    pub threshold: f64,
}

impl CouplingModel {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref(), "coupling model")
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, v)| {
                if self.active[j] {
                    (v - self.mean[j]) / self.std[j]
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn score(&self, features: &FeatureVector) -> Result<f64> {
        if self.beta.len() != DIM || self.mean.len() != DIM || self.std.len() != DIM || self.active.len() != DIM {
            return Err(Error::Usage(format!(
                "model has {} slots but features have {DIM}",
                self.beta.len()
            )));
        }
        let z = self.standardize(features.values());
        Ok(z.iter().zip(&self.beta).map(|(a, b)| a * b).sum())
    }
}

/// Probability of being coupled and the thresholded label.
pub fn predict_coupled(model: &CouplingModel, features: &FeatureVector) -> Result<(f64, bool)> {
    let p = logistic(model.score(features)?);
    Ok((p, p > model.threshold))
}

pub fn logistic(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^s)` without overflow.
fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

/// Penalized log-likelihood `l(beta) - lambda * |beta|^2` over a fixed design
/// matrix. The penalty skips the intercept column.
#[derive(Debug, Clone)]
pub struct RidgeProblem {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub lambda: f64,
    /// Column index of the intercept, if any.
    pub intercept: Option<usize>,
}

impl RidgeProblem {
    fn penalty_weight(&self, j: usize) -> f64 {
        if Some(j) == self.intercept {
            0.0
        } else {
            self.lambda
        }
    }

    pub fn objective(&self, beta: &DVector<f64>) -> f64 {
        let s = &self.x * beta;
        let ll: f64 = s.iter().zip(self.y.iter()).map(|(s, y)| y * s - softplus(*s)).sum();
        let pen: f64 = beta
            .iter()
            .enumerate()
            .map(|(j, b)| self.penalty_weight(j) * b * b)
            .sum();
        ll - pen
    }

    pub fn gradient(&self, beta: &DVector<f64>) -> DVector<f64> {
        let s = &self.x * beta;
        let resid = DVector::from_iterator(s.len(), s.iter().zip(self.y.iter()).map(|(s, y)| y - logistic(*s)));
        let mut g = self.x.transpose() * resid;
        for j in 0..g.len() {
            g[j] -= 2.0 * self.penalty_weight(j) * beta[j];
        }
        g
    }

    /// Negative Hessian (positive semi-definite).
    fn neg_hessian(&self, beta: &DVector<f64>) -> DMatrix<f64> {
        let s = &self.x * beta;
        let mut xw = self.x.clone();
        for (i, si) in s.iter().enumerate() {
            let p = logistic(*si);
            let w = p * (1.0 - p);
            xw.row_mut(i).scale_mut(w);
        }
        let mut h = self.x.transpose() * xw;
        for j in 0..h.ncols() {
            h[(j, j)] += 2.0 * self.penalty_weight(j);
        }
        h
    }

    /// Newton ascent with step halving. Returns the maximizer and the
    /// objective after every accepted step.
    pub fn solve(&self, max_iters: usize, tol: f64) -> Result<(DVector<f64>, Vec<f64>)> {
        let p = self.x.ncols();
        let mut beta = DVector::zeros(p);
        let mut obj = self.objective(&beta);
        let mut trace = vec![obj];
        let mut grad_norm = f64::INFINITY;
        for _ in 0..max_iters {
            let g = self.gradient(&beta);
            grad_norm = g.norm();
            if grad_norm < tol {
                return Ok((beta, trace));
            }
            let h = self.neg_hessian(&beta);
            let step = match h.clone().cholesky() {
                Some(c) => c.solve(&g),
                None => h.lu().solve(&g).unwrap_or_else(|| g.clone()),
            };
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let cand = &beta + &step * t;
                let o = self.objective(&cand);
                if o >= obj {
                    let moved = (&cand - &beta).norm();
                    beta = cand;
                    obj = o;
                    trace.push(obj);
                    accepted = true;
                    // At floating-point resolution the gradient cannot shrink further.
                    if moved <= 1e-15 * (1.0 + beta.norm()) {
                        return Ok((beta, trace));
                    }
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                // No ascent direction left at machine precision.
                return Ok((beta, trace));
            }
        }
        let g = self.gradient(&beta);
        if g.norm() < tol {
            return Ok((beta, trace));
        }
        Err(Error::Optimization {
            iterations: max_iters,
            grad_norm: grad_norm.min(g.norm()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingConfig {
    pub lambda: f64,
    pub threshold: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        CouplingConfig {
            lambda: 1.0,
            threshold: 0.5,
            max_iters: 100,
            tol: 1e-8,
        }
    }
}

/// Fits the classifier on labeled feature vectors, using the slots of
/// `selection`.
pub fn train_ridge_logistic(
    examples: &[(FeatureVector, bool)],
    selection: &Selection,
    config: &CouplingConfig,
) -> Result<CouplingModel> {
    if config.lambda < 0.0 || !config.lambda.is_finite() {
        return Err(Error::Config("lambda must be non-negative".into()));
    }
    let positives = examples.iter().filter(|(_, y)| *y).count();
    if examples.len() < 2 || positives == 0 || positives == examples.len() {
        return Err(Error::Training(
            "need at least two examples covering both labels".into(),
        ));
    }
    let n = examples.len() as f64;
    let mask = selection.mask();
    let mut mean = vec![0.0; DIM];
    let mut std = vec![1.0; DIM];
    let mut active = mask.to_vec();
    for j in 0..INTERCEPT {
        if !mask[j] {
            continue;
        }
        let col = examples.iter().map(|(x, _)| x.0[j]);
        let first = examples[0].0 .0[j];
        if col.clone().all(|v| v == first) {
            active[j] = false;
            continue;
        }
        if j < NUMERIC_SLOTS {
            let m = col.clone().sum::<f64>() / n;
            let v = col.map(|x| (x - m).powi(2)).sum::<f64>() / n;
            mean[j] = m;
            std[j] = v.sqrt();
        }
    }
    let cols: Vec<usize> = (0..DIM).filter(|&j| active[j]).collect();
    let x = DMatrix::from_fn(examples.len(), cols.len(), |i, c| {
        let j = cols[c];
        (examples[i].0 .0[j] - mean[j]) / std[j]
    });
    let y = DVector::from_iterator(examples.len(), examples.iter().map(|(_, l)| if *l { 1.0 } else { 0.0 }));
    let problem = RidgeProblem {
        x,
        y,
        lambda: config.lambda,
        intercept: cols.iter().position(|&j| j == INTERCEPT),
    };
    let (b, _) = problem.solve(config.max_iters, config.tol)?;
    let mut beta = vec![0.0; DIM];
    for (c, &j) in cols.iter().enumerate() {
        beta[j] = b[c];
    }
    Ok(CouplingModel {
        slot_names: SLOT_NAMES.iter().map(|s| s.to_string()).collect(),
        beta,
        lambda: config.lambda,
        mean,
        std,
        active,
        threshold: config.threshold,
    })
}

/// Instances the classifier is trained and evaluated on: those with content
/// words and fixations.
pub fn classifiable(instance: &Instance, source: Source) -> bool {
    instance.content_words(source).next().is_some() && !instance.fixations.is_empty()
}

/// Labeled feature vectors for every classifiable instance.
pub fn labeled_examples(instances: &[&Instance], source: Source) -> Result<Vec<(FeatureVector, bool)>> {
    instances
        .iter()
        .map(|inst| {
            let y = inst.coupled.ok_or_else(|| Error::Validation {
                id: inst.id.clone(),
                message: "missing coupled label".into(),
            })?;
            Ok((extract_features_from(inst, source)?, y))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub feature_set: String,
    pub precision: f64,
    pub recall: f64,
    pub true_positives: usize,
    pub predicted_positives: usize,
    pub gold_positives: usize,
    /// Out-of-fold prediction per example, in input order.
    pub predictions: Vec<bool>,
}

/// Stratified k-fold cross-validation. The null selection predicts every
/// example coupled.
pub fn cross_validate(
    examples: &[(FeatureVector, bool)],
    selection: &Selection,
    k: usize,
    config: &CouplingConfig,
    seed: u64,
) -> Result<CvResult> {
    if k < 2 {
        return Err(Error::Config("cross-validation needs k >= 2".into()));
    }
    let folds = stratified_folds(examples, k, seed)?;
    let mut predictions = vec![true; examples.len()];
    if !selection.is_null() {
        for f in 0..k {
            let train: Vec<(FeatureVector, bool)> = examples
                .iter()
                .zip(&folds)
                .filter(|(_, &g)| g != f)
                .map(|(e, _)| *e)
                .collect();
            let model = train_ridge_logistic(&train, selection, config)?;
            for (i, _) in folds.iter().enumerate().filter(|(_, &g)| g == f) {
                predictions[i] = predict_coupled(&model, &examples[i].0)?.1;
            }
        }
    }
    let gold_positives = examples.iter().filter(|(_, y)| *y).count();
    let predicted_positives = predictions.iter().filter(|p| **p).count();
    let true_positives = examples
        .iter()
        .zip(&predictions)
        .filter(|((_, y), p)| *y && **p)
        .count();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(CvResult {
        feature_set: selection.label(),
        precision: ratio(true_positives, predicted_positives),
        recall: ratio(true_positives, gold_positives),
        true_positives,
        predicted_positives,
        gold_positives,
        predictions,
    })
}

/// Fold index per example; each class is shuffled and dealt round-robin.
fn stratified_folds(examples: &[(FeatureVector, bool)], k: usize, seed: u64) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; examples.len()];
    for label in [true, false] {
        let mut idx: Vec<usize> = (0..examples.len()).filter(|&i| examples[i].1 == label).collect();
        if idx.len() < k {
            return Err(Error::Stratification(format!(
                "only {} {} example(s) for {k} folds; some fold would hold one class",
                idx.len(),
                if label { "coupled" } else { "uncoupled" }
            )));
        }
        idx.shuffle(&mut rng);
        for (r, i) in idx.into_iter().enumerate() {
            folds[i] = r % k;
        }
    }
    Ok(folds)
}

/// Cross-validation rows as TSV: feature set, precision, recall.
pub fn cv_table_tsv(rows: &[CvResult]) -> String {
    let mut out = String::from("feature_set\tprecision\trecall\n");
    for r in rows {
        let _ = writeln!(out, "{}\t{:.4}\t{:.4}", r.feature_set, r.precision, r.recall);
    }
    out
}
