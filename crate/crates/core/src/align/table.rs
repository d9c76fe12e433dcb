use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the null entity that absorbs words referring to nothing fixated.
pub const NULL_ENTITY: &str = "NULL";

/// Word-given-entity probabilities `p(w|e)`, one distribution per entity.
///
/// Storage is dense: entities (null first, then ascending) by words
/// (ascending).
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationTable {
    entities: Vec<String>,
    words: Vec<String>,
    probs: Vec<f64>,
    entity_index: HashMap<String, usize>,
    word_index: HashMap<String, usize>,
}

impl AssociationTable {
    /// Builds a table from already-ordered entities and words. `entities[0]`
    /// must be the null entity.
    pub(crate) fn from_parts(entities: Vec<String>, words: Vec<String>, probs: Vec<f64>) -> Self {
        debug_assert_eq!(entities[0], NULL_ENTITY);
        debug_assert_eq!(probs.len(), entities.len() * words.len());
        let entity_index = entities.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        let word_index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        AssociationTable {
            entities,
            words,
            probs,
            entity_index,
            word_index,
        }
    }

    /// Builds a table from per-entity rows over `words`. The null entity is
    /// added with a uniform row unless it is listed.
    pub fn from_rows(entities: Vec<String>, words: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != entities.len() || rows.iter().any(|r| r.len() != words.len()) {
            return Err(Error::Format {
                what: "association table",
                message: "row shape does not match entities x words".into(),
            });
        }
        let mut by_entity: BTreeMap<String, Vec<f64>> = entities.into_iter().zip(rows).collect();
        let mut pairs: Vec<(String, f64, String)> = Vec::new();
        if !by_entity.contains_key(NULL_ENTITY) && !words.is_empty() {
            by_entity.insert(NULL_ENTITY.into(), vec![1.0 / words.len() as f64; words.len()]);
        }
        for (e, row) in by_entity {
            for (w, p) in words.iter().zip(row) {
                pairs.push((e.clone(), p, w.clone()));
            }
        }
        Self::from_triples(pairs)
    }

    fn from_triples(triples: Vec<(String, f64, String)>) -> Result<Self> {
        let mut words: Vec<String> = triples.iter().map(|t| t.2.clone()).collect();
        words.sort();
        words.dedup();
        let mut entities: Vec<String> = triples
            .iter()
            .map(|t| t.0.clone())
            .filter(|e| e != NULL_ENTITY)
            .collect();
        entities.sort();
        entities.dedup();
        entities.insert(0, NULL_ENTITY.to_string());
        let n = entities.len() * words.len();
        let mut table = Self::from_parts(entities, words, vec![0.0; n]);
        for (e, p, w) in triples {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Format {
                    what: "association table",
                    message: format!("probability {p} for ({e}, {w}) outside [0, 1]"),
                });
            }
            let (ei, wi) = (table.entity_index[&e], table.word_index[&w]);
            table.probs[ei * table.words.len() + wi] = p;
        }
        Ok(table)
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    /// Non-null entities.
    pub fn real_entities(&self) -> impl Iterator<Item = &str> {
        self.entities[1..].iter().map(String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn contains_entity(&self, entity: &str) -> bool {
        self.entity_index.contains_key(entity)
    }

    pub fn entity_id(&self, entity: &str) -> Option<usize> {
        self.entity_index.get(entity).copied()
    }

    pub fn word_id(&self, word: &str) -> Option<usize> {
        self.word_index.get(word).copied()
    }

    /// `p(word | entity)`; zero for unknown words or entities.
    pub fn prob(&self, entity: &str, word: &str) -> f64 {
        match (self.entity_index.get(entity), self.word_index.get(word)) {
            (Some(&e), Some(&w)) => self.probs[e * self.words.len() + w],
            _ => 0.0,
        }
    }

    pub fn row(&self, entity_id: usize) -> &[f64] {
        let v = self.words.len();
        &self.probs[entity_id * v..(entity_id + 1) * v]
    }

    pub(crate) fn row_mut(&mut self, entity_id: usize) -> &mut [f64] {
        let v = self.words.len();
        &mut self.probs[entity_id * v..(entity_id + 1) * v]
    }

    pub fn row_sum(&self, entity: &str) -> f64 {
        self.entity_id(entity).map_or(0.0, |e| self.row(e).iter().sum())
    }

    /// Largest deviation of any row sum from one.
    pub fn max_row_error(&self) -> f64 {
        (0..self.entities.len())
            .map(|e| (self.row(e).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest absolute difference to another table over the union of cells.
    pub fn max_abs_diff(&self, other: &AssociationTable) -> f64 {
        let mut worst: f64 = 0.0;
        for e in self.entities.iter().chain(other.entities.iter()) {
            for w in self.words.iter().chain(other.words.iter()) {
                worst = worst.max((self.prob(e, w) - other.prob(e, w)).abs());
            }
        }
        worst
    }

    /// TSV with a header; rows ordered by entity, then descending probability,
    /// then word. Zero entries are omitted.
    pub fn to_tsv(&self) -> String {
        let mut entities: Vec<usize> = (0..self.entities.len()).collect();
        entities.sort_by(|&a, &b| self.entities[a].cmp(&self.entities[b]));
        let mut out = String::from("entity\tword\tprobability\n");
        for e in entities {
            let row = self.row(e);
            let mut cells: Vec<usize> = (0..self.words.len()).filter(|&w| row[w] > 0.0).collect();
            cells.sort_by(|&a, &b| {
                row[b]
                    .total_cmp(&row[a])
                    .then_with(|| self.words[a].cmp(&self.words[b]))
            });
            for w in cells {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}",
                    self.entities[e],
                    self.words[w],
                    format_sig(row[w], 10)
                );
            }
        }
        out
    }

    /// Parses [`to_tsv`](Self::to_tsv) output. Rows are renormalized to undo
    /// print rounding.
    pub fn from_tsv(text: &str) -> Result<Self> {
        let bad = |line: usize, message: String| Error::Parse { line, message };
        let mut triples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 && line.starts_with("entity\t") {
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(bad(i + 1, format!("expected 3 columns, found {}", cols.len())));
            }
            let p: f64 = cols[2]
                .parse()
                .map_err(|e| bad(i + 1, format!("bad probability `{}`: {e}", cols[2])))?;
            triples.push((cols[0].to_string(), p, cols[1].to_string()));
        }
        if triples.is_empty() {
            return Err(Error::Format {
                what: "association table",
                message: "no rows".into(),
            });
        }
        let mut table = Self::from_triples(triples)?;
        for e in 0..table.entities.len() {
            let row = table.row_mut(e);
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter_mut().for_each(|p| *p /= s);
            }
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv(&text)
    }
}

/// Formats `x` with `digits` significant digits, like C's `%.{digits}g`.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    let sci = format!("{:.*e}", digits - 1, x);
    // Rounding may bump the exponent (9.99.. -> 1.00e+k); read it back.
    let (mantissa, e) = sci.split_once('e').unwrap();
    let e: i32 = e.parse().unwrap_or(exp);
    if e < -5 || e >= digits as i32 {
        let m = trim_zeros(mantissa);
        format!("{m}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
    } else {
        let decimals = (digits as i32 - 1 - e).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Positional alignment probabilities `p(a_j = i | j, m, l)` for the
/// `(j, m, l)` combinations seen in training.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PositionalTable {
    /// Keyed by `(j, m, l)` with `j` 1-based; each entry has `l + 1` values.
    pub entries: BTreeMap<(u32, u32, u32), Vec<f64>>,
}

impl PositionalTable {
    pub fn get(&self, j: u32, m: u32, l: u32) -> Option<&[f64]> {
        self.entries.get(&(j, m, l)).map(Vec::as_slice)
    }

    /// `p(i | j, m, l)`, or uniform `1 / (l + 1)` for unseen combinations.
    pub fn prob(&self, i: u32, j: u32, m: u32, l: u32) -> f64 {
        self.get(j, m, l)
            .map_or(1.0 / (l as f64 + 1.0), |v| v.get(i as usize).copied().unwrap_or(0.0))
    }

    pub fn max_row_error(&self) -> f64 {
        self.entries
            .values()
            .map(|v| (v.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}
