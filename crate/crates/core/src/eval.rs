//! N-best extraction and acquisition metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::align::AssociationTable;
use crate::error::{Error, Result};
use crate::semantics::{read_json, Concept, DomainModel, SemanticContext};

/// Accepted words per entity and property.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GoldStandard {
    pub entities: BTreeMap<String, BTreeMap<String, Vec<String>>>,
}

impl GoldStandard {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let gold: GoldStandard = read_json(path.as_ref(), "gold standard")?;
        gold.validate()?;
        Ok(gold)
    }

    pub fn validate(&self) -> Result<()> {
        for (e, props) in &self.entities {
            for (p, words) in props {
                if words.is_empty() {
                    return Err(Error::Format {
                        what: "gold standard",
                        message: format!("property {p} of `{e}` has no words"),
                    });
                }
                if let Some(w) = words.iter().find(|w| **w != w.to_lowercase()) {
                    return Err(Error::Format {
                        what: "gold standard",
                        message: format!("word `{w}` of `{e}` is not lowercase"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Union of an entity's property word sets.
    pub fn words(&self, entity: &str) -> BTreeSet<&str> {
        self.entities
            .get(entity)
            .into_iter()
            .flat_map(|props| props.values().flatten())
            .map(String::as_str)
            .collect()
    }

    pub fn contains(&self, entity: &str, word: &str) -> bool {
        self.entities
            .get(entity)
            .is_some_and(|props| props.values().any(|ws| ws.iter().any(|w| w == word)))
    }

    pub fn contains_anywhere(&self, word: &str) -> bool {
        self.entities.keys().any(|e| self.contains(e, word))
    }

    /// Gold words an acquisition can be credited for: everything except the
    /// entity's default word.
    pub fn acquirable<'a>(&'a self, entity: &str, domain: &DomainModel) -> BTreeSet<&'a str> {
        let mut words = self.words(entity);
        if let Some(d) = domain.default_word(entity) {
            words.remove(d);
        }
        words
    }
}

/// Candidate words for one entity, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub entity: String,
    pub words: Vec<(String, f64)>,
}

impl RankedList {
    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(|(w, _)| w.as_str())
    }
}

/// The `n` most probable words of `entity`, skipping its default word. Ties
/// are ordered lexicographically.
pub fn nbest(assoc: &AssociationTable, entity: &str, n: usize, domain: &DomainModel) -> Result<RankedList> {
    let e = assoc.entity_id(entity).ok_or_else(|| Error::lookup("entity", entity))?;
    let default = domain.entity(entity)?.default_word.as_str();
    let row = assoc.row(e);
    let mut idx: Vec<usize> = (0..row.len()).filter(|&w| assoc.words()[w] != default).collect();
    // Words are stored in ascending order, so a stable sort keeps ties lexicographic.
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
    idx.truncate(n);
    Ok(RankedList {
        entity: entity.to_string(),
        words: idx.into_iter().map(|w| (assoc.words()[w].clone(), row[w])).collect(),
    })
}

/// Word-level precision and recall of acquired lists against the gold
/// standard. Empty acquisitions give precision 0.
pub fn precision_recall(lists: &[RankedList], gold: &GoldStandard, domain: &DomainModel) -> (f64, f64) {
    let (mut correct, mut acquired, mut relevant) = (0usize, 0usize, 0usize);
    for list in lists {
        let g = gold.acquirable(&list.entity, domain);
        correct += list.surfaces().filter(|w| g.contains(w)).count();
        acquired += list.words.len();
        relevant += g.len();
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    (ratio(correct, acquired), ratio(correct, relevant))
}

/// Average precision of a full ranking with `n_relevant` gold words.
pub fn average_precision<'a>(
    ranking: impl IntoIterator<Item = &'a str>,
    gold: &BTreeSet<&str>,
    n_relevant: usize,
) -> f64 {
    if n_relevant == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (r, w) in ranking.into_iter().enumerate() {
        if gold.contains(w) {
            hits += 1;
            sum += hits as f64 / (r + 1) as f64;
        }
    }
    sum / n_relevant as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityMetrics {
    pub entity: String,
    pub precision: f64,
    pub recall: f64,
    pub average_precision: f64,
    pub acquired: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: Option<String>,
    pub n: usize,
    pub precision: f64,
    pub recall: f64,
    pub map: f64,
    pub per_entity: Vec<EntityMetrics>,
}

/// Entities that can be scored: in the gold standard, the domain model and
/// the table, with at least one acquirable gold word.
fn scored_entities<'a>(assoc: &AssociationTable, gold: &'a GoldStandard, domain: &DomainModel) -> Vec<&'a str> {
    let mut out = Vec::new();
    for e in gold.entities.keys() {
        if !assoc.contains_entity(e) || !domain.entities.contains_key(e) {
            log::warn!("gold entity `{e}` is absent from the association table or domain model; skipped");
            continue;
        }
        if gold.acquirable(e, domain).is_empty() {
            log::warn!("entity `{e}` has no gold words besides its default word; skipped");
            continue;
        }
        out.push(e.as_str());
    }
    out
}

/// Mean over entities of the average precision of the full ranked
/// vocabulary.
pub fn mean_average_precision(assoc: &AssociationTable, gold: &GoldStandard, domain: &DomainModel) -> Result<f64> {
    Ok(evaluate(assoc, gold, domain, 0, None)?.map)
}

/// Full report: P/R at cutoff `n` and MAP over the full ranking.
pub fn evaluate(
    assoc: &AssociationTable,
    gold: &GoldStandard,
    domain: &DomainModel,
    n: usize,
    model: Option<&str>,
) -> Result<MetricsReport> {
    let mut per_entity = Vec::new();
    let mut lists = Vec::new();
    for e in scored_entities(assoc, gold, domain) {
        let full = nbest(assoc, e, usize::MAX, domain)?;
        let g = gold.acquirable(e, domain);
        let ap = average_precision(full.surfaces(), &g, g.len());
        let top = RankedList {
            entity: e.to_string(),
            words: full.words.iter().take(n).cloned().collect(),
        };
        let (p, r) = precision_recall(std::slice::from_ref(&top), gold, domain);
        per_entity.push(EntityMetrics {
            entity: e.to_string(),
            precision: p,
            recall: r,
            average_precision: ap,
            acquired: top.surfaces().map(String::from).collect(),
        });
        lists.push(top);
    }
    let (precision, recall) = precision_recall(&lists, gold, domain);
    let map = if per_entity.is_empty() {
        0.0
    } else {
        per_entity.iter().map(|m| m.average_precision).sum::<f64>() / per_entity.len() as f64
    };
    Ok(MetricsReport {
        model: model.map(String::from),
        n,
        precision,
        recall,
        map,
        per_entity,
    })
}

/// 11-point interpolated precision-recall curve over cutoffs `1..=max_n`.
pub fn pr_curve(
    assoc: &AssociationTable,
    gold: &GoldStandard,
    domain: &DomainModel,
    max_n: usize,
) -> Result<Vec<(f64, f64)>> {
    let entities = scored_entities(assoc, gold, domain);
    let full: Vec<RankedList> = entities
        .iter()
        .map(|e| nbest(assoc, e, max_n, domain))
        .collect::<Result<_>>()?;
    let points: Vec<(f64, f64)> = (1..=max_n)
        .map(|n| {
            let cut: Vec<RankedList> = full
                .iter()
                .map(|l| RankedList {
                    entity: l.entity.clone(),
                    words: l.words.iter().take(n).cloned().collect(),
                })
                .collect();
            let (p, r) = precision_recall(&cut, gold, domain);
            (r, p)
        })
        .collect();
    Ok((0..=10)
        .map(|k| {
            let level = k as f64 / 10.0;
            let p = points
                .iter()
                .filter(|(r, _)| *r >= level - 1e-12)
                .map(|(_, p)| *p)
                .fold(0.0, f64::max);
            (level, p)
        })
        .collect())
}

/// Known words and the concept each one denotes.
pub type Vocabulary = BTreeMap<String, Concept>;

/// Every gold word grounded on its entity. A word listed for several
/// entities keeps the concept of the first entity in name order.
pub fn reference_vocabulary(gold: &GoldStandard, semantics: &SemanticContext) -> Result<Vocabulary> {
    let mut vocab = Vocabulary::new();
    for e in gold.entities.keys() {
        if !semantics.domain.entities.contains_key(e) {
            return Err(Error::Config(format!(
                "gold entity `{e}` is missing from the domain model"
            )));
        }
        for w in gold.words(e) {
            if !vocab.contains_key(w) {
                vocab.insert(w.to_string(), semantics.ground_concept(e, w)?);
            }
        }
    }
    Ok(vocab)
}

/// Each entity's default word grounded on that entity.
pub fn default_vocabulary(semantics: &SemanticContext) -> Result<Vocabulary> {
    let mut vocab = Vocabulary::new();
    for (e, spec) in &semantics.domain.entities {
        if !vocab.contains_key(&spec.default_word) {
            vocab.insert(
                spec.default_word.clone(),
                semantics.ground_concept(e, &spec.default_word)?,
            );
        }
    }
    Ok(vocab)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CirOutcome {
    pub rate: f64,
    pub identified: usize,
    pub total: usize,
}

fn concept_counts<'a>(words: &[String], vocab: &'a Vocabulary) -> BTreeMap<&'a Concept, usize> {
    let mut counts = BTreeMap::new();
    for w in words {
        if let Some(c) = vocab.get(w) {
            *counts.entry(c).or_default() += 1;
        }
    }
    counts
}

/// Concept identification rate over `(recognized, transcript)` content-word
/// pairs. Recognized words are read through `vocab`; transcript concepts
/// come from `reference`, or from `vocab` when none is given. Utterances
/// without transcript concepts are skipped; with none at all the rate is 0.
pub fn concept_identification_rate(
    utterances: &[(Vec<String>, Vec<String>)],
    vocab: &Vocabulary,
    reference: Option<&Vocabulary>,
) -> CirOutcome {
    let reference = reference.unwrap_or(vocab);
    let (mut identified, mut total) = (0, 0);
    for (recognized, transcript) in utterances {
        let truth = concept_counts(transcript, reference);
        let n: usize = truth.values().sum();
        if n == 0 {
            continue;
        }
        let found = concept_counts(recognized, vocab);
        total += n;
        identified += truth
            .iter()
            .map(|(c, &k)| k.min(found.get(*c).copied().unwrap_or(0)))
            .sum::<usize>();
    }
    CirOutcome {
        rate: if total == 0 {
            0.0
        } else {
            identified as f64 / total as f64
        },
        identified,
        total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantics::{EntitySpec, Property};
    use proptest::prelude::*;

    fn domain(entities: &[(&str, &str)]) -> DomainModel {
        DomainModel {
            entities: entities
                .iter()
                .map(|(e, d)| {
                    (
                        e.to_string(),
                        EntitySpec {
                            default_word: d.to_string(),
                            properties: vec![Property {
                                name: "SEM".into(),
                                node: "x#n#1".into(),
                            }],
                        },
                    )
                })
                .collect(),
        }
    }

    fn table(entity: &str, row: &[(&str, f64)]) -> AssociationTable {
        AssociationTable::from_rows(
            vec![entity.into()],
            row.iter().map(|(w, _)| w.to_string()).collect(),
            vec![row.iter().map(|(_, p)| *p).collect()],
        )
        .unwrap()
    }

    fn gold(entity: &str, words: &[&str]) -> GoldStandard {
        GoldStandard {
            entities: BTreeMap::from([(
                entity.to_string(),
                BTreeMap::from([("SEM".to_string(), words.iter().map(|w| w.to_string()).collect())]),
            )]),
        }
    }

    fn list(entity: &str, words: &[&str]) -> RankedList {
        RankedList {
            entity: entity.into(),
            words: words.iter().map(|w| (w.to_string(), 0.1)).collect(),
        }
    }

    #[test]
    fn nbest_drops_default_word() {
        let t = table("barrel", &[("barrel", 0.5), ("keg", 0.3), ("wooden", 0.2)]);
        let dm = domain(&[("barrel", "barrel")]);
        let l = nbest(&t, "barrel", 10, &dm).unwrap();
        assert_eq!(l.surfaces().collect::<Vec<_>>(), ["keg", "wooden"]);
        assert!(matches!(nbest(&t, "vase", 3, &dm), Err(Error::Lookup { .. })));
    }

    #[test]
    fn nbest_truncates_and_breaks_ties() {
        let t = table(
            "e",
            &[
                ("bed", 0.25),
                ("bad", 0.25),
                ("zed", 0.25),
                ("abc", 0.25),
                ("dflt", 0.0),
            ],
        );
        let dm = domain(&[("e", "dflt")]);
        let l = nbest(&t, "e", 10, &dm).unwrap();
        assert_eq!(l.surfaces().collect::<Vec<_>>(), ["abc", "bad", "bed", "zed"]);
    }

    #[test]
    fn precision_recall_examples() {
        let dm = domain(&[("e", "dflt")]);
        let g = gold("e", &["a", "b"]);
        assert_eq!(precision_recall(&[list("e", &["a", "x"])], &g, &dm), (0.5, 0.5));
        assert_eq!(precision_recall(&[list("e", &["a", "b"])], &g, &dm), (1.0, 1.0));
        assert_eq!(precision_recall(&[list("e", &[])], &g, &dm), (0.0, 0.0));
    }

    #[test]
    fn average_precision_hand_example() {
        let g: BTreeSet<&str> = ["a", "b"].into();
        let ap = average_precision(["a", "x", "b", "y"], &g, 2);
        assert!((ap - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(average_precision(["a", "b", "x"], &g, 2), 1.0);
        assert_eq!(average_precision(["x", "y"], &g, 2), 0.0);
    }

    #[test]
    fn map_through_table() {
        let t = table("e", &[("a", 0.4), ("x", 0.3), ("b", 0.2), ("y", 0.1)]);
        let dm = domain(&[("e", "dflt")]);
        let map = mean_average_precision(&t, &gold("e", &["a", "b", "dflt"]), &dm).unwrap();
        assert!((map - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn pr_curve_is_non_increasing() {
        let t = table("e", &[("a", 0.4), ("x", 0.3), ("b", 0.2), ("y", 0.1)]);
        let dm = domain(&[("e", "dflt")]);
        let curve = pr_curve(&t, &gold("e", &["a", "b"]), &dm, 4).unwrap();
        assert_eq!(curve.len(), 11);
        assert_eq!(curve[0], (0.0, 1.0));
        assert!(curve.windows(2).all(|w| w[1].1 <= w[0].1));
        assert!((curve[10].1 - 2.0 / 3.0).abs() < 1e-12);
    }

    fn concept(p: &str) -> Concept {
        Concept {
            property: p.into(),
            node: format!("{}#n#1", p.to_lowercase()),
        }
    }

    fn words(ws: &[&str]) -> Vec<String> {
        ws.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn cir_examples() {
        let vocab: Vocabulary = [
            ("vase".to_string(), concept("SEM")),
            ("purple".to_string(), concept("COLOR")),
        ]
        .into();
        let same = vec![(words(&["purple", "vase"]), words(&["purple", "vase"]))];
        assert_eq!(concept_identification_rate(&same, &vocab, None).rate, 1.0);
        let half = vec![(words(&["purple", "face"]), words(&["purple", "vase"]))];
        assert_eq!(concept_identification_rate(&half, &vocab, None).rate, 0.5);
        let skipped = vec![(words(&["x"]), words(&["y"])), (words(&["vase"]), words(&["vase"]))];
        let out = concept_identification_rate(&skipped, &vocab, None);
        assert_eq!((out.identified, out.total), (1, 1));
        assert_eq!(concept_identification_rate(&[], &vocab, None).rate, 0.0);
    }

    #[test]
    fn cir_counts_multisets() {
        let vocab: Vocabulary = [
            ("vase".to_string(), concept("SEM")),
            ("pot".to_string(), concept("SEM")),
        ]
        .into();
        let reference = vocab.clone();
        let small: Vocabulary = [("vase".to_string(), concept("SEM"))].into();
        let utt = vec![(words(&["vase", "vase", "vase"]), words(&["vase", "pot"]))];
        let out = concept_identification_rate(&utt, &small, Some(&reference));
        assert_eq!((out.identified, out.total), (2, 2));
    }

    proptest! {
        #[test]
        fn map_depends_only_on_ranking(raw in prop::collection::vec(0.01f64..1.0, 6), power in 0.2f64..5.0) {
            let names = ["a", "b", "c", "d", "e", "f"];
            let total: f64 = raw.iter().sum();
            let row: Vec<(&str, f64)> = names.iter().copied().zip(raw.iter().map(|x| x / total)).collect();
            let t1 = table("e", &row);
            let mono: Vec<f64> = raw.iter().map(|x| x.powf(power)).collect();
            let mt: f64 = mono.iter().sum();
            let t2 = table("e", &names.iter().copied().zip(mono.iter().map(|x| x / mt)).collect::<Vec<_>>());
            let dm = domain(&[("e", "zz")]);
            let g = gold("e", &["b", "d", "f"]);
            let m1 = mean_average_precision(&t1, &g, &dm).unwrap();
            let m2 = mean_average_precision(&t2, &g, &dm).unwrap();
            prop_assert!((m1 - m2).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&m1));
        }

        #[test]
        fn nbest_prefix_property(raw in prop::collection::vec(0.0f64..1.0, 1..8), n1 in 0usize..10, extra in 0usize..5) {
            let names: Vec<String> = (0..raw.len()).map(|i| format!("w{i}")).collect();
            let total: f64 = raw.iter().sum::<f64>() + 1e-9;
            let t = AssociationTable::from_rows(vec!["e".into()], names, vec![raw.iter().map(|x| x / total).collect()]).unwrap();
            let dm = domain(&[("e", "w0")]);
            let a = nbest(&t, "e", n1, &dm).unwrap();
            let b = nbest(&t, "e", n1 + extra, &dm).unwrap();
            prop_assert_eq!(&b.words[..a.words.len()], &a.words[..]);
        }

        #[test]
        fn metrics_stay_in_unit_interval(acq in prop::collection::btree_set("[a-f]", 0..6), gw in prop::collection::vec("[a-f]", 1..4)) {
            let dm = domain(&[("e", "zz")]);
            let g = gold("e", &gw.iter().map(String::as_str).collect::<Vec<_>>());
            let (p, r) = precision_recall(&[list("e", &acq.iter().map(String::as_str).collect::<Vec<_>>())], &g, &dm);
            prop_assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&r));
        }
    }
}
