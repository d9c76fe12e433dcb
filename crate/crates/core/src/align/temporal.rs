//! Gaze-speech temporal alignment.
//!
//! A word may only align with an entity whose fixation started no later than
//! the word; among permissible entities, weight decays as `exp(alpha * d)`
//! with the (non-positive) temporal distance `d`. The null entity is always
//! permissible at distance zero.

use crate::corpus::{ContentPair, Fixation, Millis, WordToken};

use super::em::{loglik_cells, AlignmentModel, Indexed};

/// Signed gap between a fixation and a word onset. Positive means the word
/// starts before the fixation does.
pub fn temporal_distance(fixation: &Fixation, word: &WordToken) -> Millis {
    let t = word.t_start;
    if t < fixation.t_start {
        fixation.t_start - t
    } else if t > fixation.t_end {
        fixation.t_end - t
    } else {
        0
    }
}

/// Temporal alignment probabilities for every word (rows) over the null
/// entity followed by each fixation (columns). Each row sums to one.
pub fn temporal_alignment_probs(pair: &ContentPair, alpha: f64) -> Vec<Vec<f64>> {
    let width = pair.fixations.len() + 1;
    temporal_weights(pair, alpha)
        .chunks(width)
        .map(<[f64]>::to_vec)
        .collect()
}

/// Flat word-major temporal weights for one pair.
pub(crate) fn temporal_weights(pair: &ContentPair, alpha: f64) -> Vec<f64> {
    let width = pair.fixations.len() + 1;
    let mut out = Vec::with_capacity(pair.words.len() * width);
    for w in &pair.words {
        let start = out.len();
        out.push(1.0);
        for f in &pair.fixations {
            let d = temporal_distance(f, w);
            out.push(if d > 0 { 0.0 } else { (alpha * d as f64).exp() });
        }
        let total: f64 = out[start..].iter().sum();
        out[start..].iter_mut().for_each(|x| *x /= total);
    }
    out
}

/// Multiplies two weight matrices cell-wise and renormalizes each word row.
/// Rows whose product vanishes stay all-zero and are skipped by training.
pub(crate) fn combine_weights(a: &[f64], b: &[f64], width: usize) -> Vec<f64> {
    let mut out: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    for row in out.chunks_mut(width) {
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|x| *x /= s);
        }
    }
    out
}

/// Log-spaced grid of `n` scale candidates over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|k| {
                let t = k as f64 / (n - 1) as f64;
                (lo.ln() + t * (hi.ln() - lo.ln())).exp()
            })
            .collect(),
    }
}

/// Temporal alignment whose scale is re-selected from a fixed grid after
/// every M-step. A move is taken only if it strictly raises the likelihood.
pub(crate) struct GridTemporal {
    grid: Vec<f64>,
    /// Weight buffers, one per grid point.
    buffers: Vec<Vec<f64>>,
    current: usize,
    cell_p: Vec<f64>,
}

impl GridTemporal {
    /// `extra`, when given, is multiplied into every temporal weight buffer
    /// (semantic weights for the combined model).
    pub fn new(ix: &Indexed, pairs: &[ContentPair], grid: &[f64], extra: Option<&[f64]>) -> Self {
        let buffers = grid
            .iter()
            .map(|&a| {
                let mut buf = Vec::with_capacity(ix.cells);
                for ip in &ix.pairs {
                    let t = temporal_weights(&pairs[ip.source], a);
                    match extra {
                        Some(s) => {
                            let len = t.len();
                            buf.extend(combine_weights(&t, &s[ip.offset..ip.offset + len], ip.width()));
                        }
                        None => buf.extend(t),
                    }
                }
                buf
            })
            .collect();
        GridTemporal {
            grid: grid.to_vec(),
            buffers,
            current: grid.len() / 2,
            cell_p: Vec::with_capacity(ix.cells),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.grid[self.current]
    }
}

impl AlignmentModel for GridTemporal {
    fn weights(&self) -> &[f64] {
        &self.buffers[self.current]
    }

    fn update(&mut self, ix: &Indexed, probs: &[f64], _posterior: &[f64]) {
        if self.grid.len() < 2 {
            return;
        }
        ix.cell_probs(probs, &mut self.cell_p);
        let mut best = self.current;
        let mut best_ll = loglik_cells(ix, &self.buffers[self.current], &self.cell_p);
        for (k, buf) in self.buffers.iter().enumerate() {
            if k == self.current {
                continue;
            }
            let ll = loglik_cells(ix, buf, &self.cell_p);
            if ll > best_ll {
                best = k;
                best_ll = ll;
            }
        }
        self.current = best;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn word(t: Millis) -> WordToken {
        WordToken::new("w", t, true)
    }

    #[test]
    fn distance_cases() {
        let f = Fixation::new("E", 500, 1500);
        assert_eq!(temporal_distance(&f, &word(1000)), 0);
        assert_eq!(temporal_distance(&f, &word(2000)), -500);
        assert_eq!(temporal_distance(&f, &word(400)), 100);
        assert_eq!(temporal_distance(&f, &word(500)), 0);
        assert_eq!(temporal_distance(&f, &word(1500)), 0);
    }

    #[test]
    fn forbidden_alignment_gets_zero() {
        let pair = ContentPair {
            words: vec![word(400)],
            fixations: vec![Fixation::new("E", 500, 1500)],
        };
        let p = temporal_alignment_probs(&pair, 0.01);
        assert_eq!(p[0], vec![1.0, 0.0]);
    }

    #[test]
    fn null_and_covering_fixation_split_evenly() {
        let pair = ContentPair {
            words: vec![word(1000)],
            fixations: vec![Fixation::new("E", 500, 1500)],
        };
        assert_eq!(temporal_alignment_probs(&pair, 0.05)[0], vec![0.5, 0.5]);
    }

    #[test]
    fn small_alpha_tends_to_uniform_over_permissible() {
        let pair = ContentPair {
            words: vec![word(3000)],
            fixations: vec![
                Fixation::new("A", 0, 100),
                Fixation::new("B", 1000, 2000),
                Fixation::new("C", 4000, 5000),
            ],
        };
        let p = &temporal_alignment_probs(&pair, 1e-12)[0];
        for &x in &p[..3] {
            assert!((x - 1.0 / 3.0).abs() < 1e-8);
        }
        assert_eq!(p[3], 0.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        // Larger alpha favours the more recent fixation.
        let p = &temporal_alignment_probs(&pair, 1e-2)[0];
        assert!(p[2] > p[1]);
    }

    #[test]
    fn grid_is_log_spaced() {
        let g = log_grid(1e-5, 1e-1, 25);
        assert_eq!(g.len(), 25);
        assert!((g[0] - 1e-5).abs() < 1e-18);
        assert!((g[24] - 1e-1).abs() < 1e-14);
        let r = g[1] / g[0];
        assert!(g.windows(2).all(|w| ((w[1] / w[0]) - r).abs() < 1e-9));
        assert_eq!(log_grid(0.01, 1.0, 1), vec![0.01]);
    }
}
