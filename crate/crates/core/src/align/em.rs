//! Shared EM machinery for the translation models.
//!
//! Every model here has the form `p(w|e) = prod_j sum_i q(i|j) p(w_j|e_i)`
//! and differs only in the alignment weights `q`. Weights for all training
//! pairs live in one flat buffer, pair `k` occupying `m_k * (l_k + 1)` cells
//! laid out word-major.

use std::collections::{BTreeSet, HashMap};

use crate::corpus::ContentPair;
use crate::error::{Error, Result};

use super::table::NULL_ENTITY;

/// Floor on per-word likelihoods so unseen words stay finite.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub(crate) struct IndexedPair {
    /// Position of the pair in the caller's slice.
    pub source: usize,
    pub words: Vec<u32>,
    /// Entity id per alignment slot; slot 0 is the null entity.
    pub slots: Vec<u32>,
    pub offset: usize,
}

impl IndexedPair {
    pub fn width(&self) -> usize {
        self.slots.len()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Indexed {
    pub words: Vec<String>,
    pub entities: Vec<String>,
    pub pairs: Vec<IndexedPair>,
    pub cells: usize,
}

impl Indexed {
    /// Indexes the usable pairs (non-empty words and fixations).
    pub fn new(pairs: &[ContentPair]) -> Result<Self> {
        let usable: Vec<(usize, &ContentPair)> = pairs.iter().enumerate().filter(|(_, p)| p.is_usable()).collect();
        if usable.is_empty() {
            return Err(Error::Training(
                "no instance has both content words and fixations".into(),
            ));
        }
        let vocab: BTreeSet<&str> = usable
            .iter()
            .flat_map(|(_, p)| p.words.iter().map(|w| w.surface.as_str()))
            .collect();
        let ents: BTreeSet<&str> = usable
            .iter()
            .flat_map(|(_, p)| p.fixations.iter().map(|f| f.entity.as_str()))
            .filter(|e| *e != NULL_ENTITY)
            .collect();
        let words: Vec<String> = vocab.into_iter().map(String::from).collect();
        let entities: Vec<String> = std::iter::once(NULL_ENTITY.to_string())
            .chain(ents.into_iter().map(String::from))
            .collect();
        let w_idx: HashMap<&str, u32> = words.iter().enumerate().map(|(i, w)| (w.as_str(), i as u32)).collect();
        let e_idx: HashMap<&str, u32> = entities
            .iter()
            .enumerate()
            .map(|(i, e)| (e.as_str(), i as u32))
            .collect();

        let mut offset = 0;
        let indexed = usable
            .into_iter()
            .map(|(source, p)| {
                let words: Vec<u32> = p.words.iter().map(|w| w_idx[w.surface.as_str()]).collect();
                let slots: Vec<u32> = std::iter::once(0)
                    .chain(p.fixations.iter().map(|f| e_idx[f.entity.as_str()]))
                    .collect();
                let ip = IndexedPair {
                    source,
                    offset,
                    words,
                    slots,
                };
                offset += ip.words.len() * ip.width();
                ip
            })
            .collect();
        Ok(Indexed {
            words,
            entities,
            pairs: indexed,
            cells: offset,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.words.len()
    }

    pub fn uniform_probs(&self) -> Vec<f64> {
        vec![1.0 / self.words.len() as f64; self.entities.len() * self.words.len()]
    }

    /// Concatenates per-pair weight matrices produced by `f`.
    pub fn weight_buffer(&self, source: &[ContentPair], mut f: impl FnMut(&ContentPair) -> Vec<f64>) -> Vec<f64> {
        let mut buf = Vec::with_capacity(self.cells);
        for ip in &self.pairs {
            let w = f(&source[ip.source]);
            debug_assert_eq!(w.len(), ip.words.len() * ip.width());
            buf.extend(w);
        }
        buf
    }

    /// `p(w_j | e_i)` for every cell.
    pub fn cell_probs(&self, probs: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let v = self.words.len();
        for ip in &self.pairs {
            for &w in &ip.words {
                out.extend(ip.slots.iter().map(|&e| probs[e as usize * v + w as usize]));
            }
        }
    }
}

/// Log-likelihood from precomputed cell probabilities. Words whose weight
/// column is all zero are skipped.
pub(crate) fn loglik_cells(ix: &Indexed, weights: &[f64], cell_p: &[f64]) -> f64 {
    let mut ll = 0.0;
    for ip in &ix.pairs {
        let width = ip.width();
        for j in 0..ip.words.len() {
            let base = ip.offset + j * width;
            let w = &weights[base..base + width];
            if w.iter().all(|&x| x == 0.0) {
                continue;
            }
            let p = &cell_p[base..base + width];
            let s: f64 = w.iter().zip(p).map(|(a, b)| a * b).sum();
            ll += s.max(PROB_FLOOR).ln();
        }
    }
    ll
}

/// E-step: accumulates expected counts `c(w, e)` and, when requested, the
/// per-cell alignment posteriors. Returns the log-likelihood of `probs`.
pub(crate) fn expectation(
    ix: &Indexed,
    probs: &[f64],
    weights: &[f64],
    counts: &mut [f64],
    mut posterior: Option<&mut [f64]>,
) -> f64 {
    counts.iter_mut().for_each(|c| *c = 0.0);
    let v = ix.words.len();
    let mut ll = 0.0;
    let mut scratch = Vec::new();
    for ip in &ix.pairs {
        let width = ip.width();
        for (j, &w) in ip.words.iter().enumerate() {
            let base = ip.offset + j * width;
            let q = &weights[base..base + width];
            scratch.clear();
            scratch.extend(
                ip.slots
                    .iter()
                    .zip(q)
                    .map(|(&e, &qi)| qi * probs[e as usize * v + w as usize]),
            );
            let total: f64 = scratch.iter().sum();
            if total <= 0.0 {
                if let Some(post) = posterior.as_deref_mut() {
                    post[base..base + width].iter_mut().for_each(|x| *x = 0.0);
                }
                if q.iter().any(|&x| x > 0.0) {
                    ll += PROB_FLOOR.ln();
                }
                continue;
            }
            ll += total.max(PROB_FLOOR).ln();
            for (i, &e) in ip.slots.iter().enumerate() {
                let r = scratch[i] / total;
                counts[e as usize * v + w as usize] += r;
                if let Some(post) = posterior.as_deref_mut() {
                    post[base + i] = r;
                }
            }
        }
    }
    ll
}

/// M-step: normalizes expected counts per entity. Rows that received no mass
/// keep their previous distribution.
pub(crate) fn maximize(counts: &[f64], probs: &mut [f64], vocab: usize) {
    for (c_row, p_row) in counts.chunks(vocab).zip(probs.chunks_mut(vocab)) {
        let total: f64 = c_row.iter().sum();
        if total > 0.0 {
            for (p, c) in p_row.iter_mut().zip(c_row) {
                *p = c / total;
            }
        }
    }
}

/// Alignment component of a model: supplies weights and re-estimates its
/// own parameters after each M-step on `p(w|e)`.
pub(crate) trait AlignmentModel {
    fn weights(&self) -> &[f64];

    fn needs_posterior(&self) -> bool {
        false
    }

    /// Called after `probs` has been re-estimated.
    fn update(&mut self, _ix: &Indexed, _probs: &[f64], _posterior: &[f64]) {}
}

/// Fixed weights (Model-1, Model-2s).
pub(crate) struct FixedAlignment(pub Vec<f64>);

impl AlignmentModel for FixedAlignment {
    fn weights(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone)]
pub(crate) struct EmOutcome {
    pub probs: Vec<f64>,
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) fn run_em(ix: &Indexed, align: &mut dyn AlignmentModel, max_iters: usize, rel_tol: f64) -> EmOutcome {
    let v = ix.vocab_size();
    let mut probs = ix.uniform_probs();
    let mut counts = vec![0.0; probs.len()];
    let mut posterior = if align.needs_posterior() {
        vec![0.0; ix.cells]
    } else {
        Vec::new()
    };
    fn post_opt(p: &mut [f64]) -> Option<&mut [f64]> {
        if p.is_empty() {
            None
        } else {
            Some(p)
        }
    }

    let mut ll = expectation(ix, &probs, align.weights(), &mut counts, post_opt(&mut posterior));
    let mut trace = vec![ll];
    let mut iterations = 0;
    let mut converged = false;
    for iter in 1..=max_iters {
        maximize(&counts, &mut probs, v);
        align.update(ix, &probs, &posterior);
        let next = expectation(ix, &probs, align.weights(), &mut counts, post_opt(&mut posterior));
        trace.push(next);
        iterations = iter;
        let rel = (next - ll).abs() / ll.abs().max(f64::MIN_POSITIVE);
        ll = next;
        if rel < rel_tol {
            converged = true;
            break;
        }
    }
    log::debug!("EM finished after {iterations} iterations, log-likelihood {ll:.6}");
    EmOutcome {
        probs,
        trace,
        iterations,
        converged,
    }
}
