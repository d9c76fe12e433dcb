//! Taxonomy-based semantic relatedness between words and domain entities.
//!
//! Concepts are nodes of an undirected hypernym graph. Words reach the graph
//! through a lexicon listing their senses, and entities through the domain
//! model, which binds each entity property to one concept node. Similarity of
//! two nodes is the reciprocal of the number of nodes on the shortest path
//! between them.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::align::{AssociationTable, NULL_ENTITY};
use crate::error::{Error, Result};

/// Default relatedness floor for words outside the lexicon.
pub const DEFAULT_SR_FLOOR: f64 = 1e-4;

const UNREACHABLE: u32 = u32::MAX;

/// Wire format of a taxonomy file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaxonomyFile {
    pub nodes: Vec<String>,
    pub edges: Vec<[String; 2]>,
    pub lexicon: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct Taxonomy {
    nodes: Vec<String>,
    index: HashMap<String, usize>,
    adjacency: Vec<Vec<usize>>,
    lexicon: BTreeMap<String, Vec<usize>>,
    // Single-source BFS distances, filled lazily per source node.
    distances: Vec<OnceLock<Vec<u32>>>,
}

fn is_concept_id(s: &str) -> bool {
    let parts: Vec<&str> = s.split('#').collect();
    parts.len() == 3 && parts.iter().all(|p| !p.is_empty())
}

impl Taxonomy {
    pub fn from_file(file: TaxonomyFile) -> Result<Self> {
        let bad = |message: String| Error::Format {
            what: "taxonomy",
            message,
        };
        let mut index = HashMap::with_capacity(file.nodes.len());
        for (i, n) in file.nodes.iter().enumerate() {
            if !is_concept_id(n) {
                return Err(bad(format!("node `{n}` is not of the form lemma#pos#sense")));
            }
            if index.insert(n.clone(), i).is_some() {
                return Err(bad(format!("duplicate node `{n}`")));
            }
        }
        let lookup = |n: &str| index.get(n).copied().ok_or_else(|| bad(format!("unknown node `{n}`")));
        let mut adjacency = vec![Vec::new(); file.nodes.len()];
        for [a, b] in &file.edges {
            let (a, b) = (lookup(a)?, lookup(b)?);
            if a != b && !adjacency[a].contains(&b) {
                adjacency[a].push(b);
                adjacency[b].push(a);
            }
        }
        let mut lexicon = BTreeMap::new();
        for (word, senses) in &file.lexicon {
            if senses.is_empty() {
                return Err(bad(format!("lexicon entry `{word}` has no senses")));
            }
            let ids = senses.iter().map(|s| lookup(s)).collect::<Result<Vec<_>>>()?;
            lexicon.insert(word.to_lowercase(), ids);
        }
        let distances = (0..file.nodes.len()).map(|_| OnceLock::new()).collect();
        Ok(Taxonomy {
            nodes: file.nodes,
            index,
            adjacency,
            lexicon,
            distances,
        })
    }

    pub fn to_file(&self) -> TaxonomyFile {
        let mut edges = Vec::new();
        for (a, nbrs) in self.adjacency.iter().enumerate() {
            for &b in nbrs {
                if a < b {
                    edges.push([self.nodes[a].clone(), self.nodes[b].clone()]);
                }
            }
        }
        let lexicon = self
            .lexicon
            .iter()
            .map(|(w, ids)| (w.clone(), ids.iter().map(|&i| self.nodes[i].clone()).collect()))
            .collect();
        TaxonomyFile {
            nodes: self.nodes.clone(),
            edges,
            lexicon,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file: TaxonomyFile = read_json(path.as_ref(), "taxonomy")?;
        Taxonomy::from_file(file)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn contains(&self, node: &str) -> bool {
        self.index.contains_key(node)
    }

    fn node_id(&self, node: &str) -> Result<usize> {
        self.index
            .get(node)
            .copied()
            .ok_or_else(|| Error::lookup("concept node", node))
    }

    /// Senses of a word, in lexicon order; empty when the word is unknown.
    pub fn senses(&self, word: &str) -> impl Iterator<Item = &str> {
        self.lexicon
            .get(word)
            .into_iter()
            .flatten()
            .map(|&i| self.nodes[i].as_str())
    }

    fn sense_ids(&self, word: &str) -> &[usize] {
        self.lexicon.get(word).map(Vec::as_slice).unwrap_or(&[])
    }

    fn distances_from(&self, src: usize) -> &[u32] {
        self.distances[src].get_or_init(|| {
            let mut dist = vec![UNREACHABLE; self.nodes.len()];
            dist[src] = 0;
            let mut queue = VecDeque::from([src]);
            while let Some(u) = queue.pop_front() {
                for &v in &self.adjacency[u] {
                    if dist[v] == UNREACHABLE {
                        dist[v] = dist[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
            dist
        })
    }

    fn similarity_ids(&self, a: usize, b: usize) -> f64 {
        match self.distances_from(a)[b] {
            UNREACHABLE => 0.0,
            edges => 1.0 / (edges as f64 + 1.0),
        }
    }

    /// Reciprocal of the number of nodes on the shortest path from `a` to `b`.
    pub fn path_similarity(&self, a: &str, b: &str) -> Result<f64> {
        let (a, b) = (self.node_id(a)?, self.node_id(b)?);
        Ok(self.similarity_ids(a, b))
    }
}

pub fn path_similarity(a: &str, b: &str, taxonomy: &Taxonomy) -> Result<f64> {
    taxonomy.path_similarity(a, b)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Property {
    pub name: String,
    pub node: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntitySpec {
    pub default_word: String,
    pub properties: Vec<Property>,
}

/// Domain concept an acquired word is grounded to: a property together with
/// the taxonomy node bound to it. Entities of the same type share concepts.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Concept {
    pub property: String,
    pub node: String,
}

impl fmt::Display for Concept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.property, self.node)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DomainModel {
    pub entities: BTreeMap<String, EntitySpec>,
}

impl DomainModel {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref(), "domain model")
    }

    pub fn entity(&self, entity: &str) -> Result<&EntitySpec> {
        self.entities.get(entity).ok_or_else(|| Error::lookup("entity", entity))
    }

    pub fn default_word(&self, entity: &str) -> Option<&str> {
        self.entities.get(entity).map(|e| e.default_word.as_str())
    }

    pub fn validate(&self, taxonomy: &Taxonomy) -> Result<()> {
        let bad = |message: String| Error::Format {
            what: "domain model",
            message,
        };
        for (name, spec) in &self.entities {
            if spec.default_word.trim().is_empty() {
                return Err(bad(format!("entity `{name}` has an empty default word")));
            }
            if spec.properties.is_empty() {
                return Err(bad(format!("entity `{name}` has no properties")));
            }
            for p in &spec.properties {
                if !taxonomy.contains(&p.node) {
                    return Err(bad(format!(
                        "property `{}` of `{name}` points at unknown node `{}`",
                        p.name, p.node
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Domain model, taxonomy and relatedness floor bundled for the operations
/// that need all three.
#[derive(Debug, Clone, Copy)]
pub struct SemanticContext<'a> {
    pub domain: &'a DomainModel,
    pub taxonomy: &'a Taxonomy,
    pub floor: f64,
}

impl<'a> SemanticContext<'a> {
    pub fn new(domain: &'a DomainModel, taxonomy: &'a Taxonomy, floor: f64) -> Self {
        SemanticContext {
            domain,
            taxonomy,
            floor,
        }
    }

    fn property_similarities(&self, spec: &EntitySpec, word: &str) -> Result<Vec<f64>> {
        let senses = self.taxonomy.sense_ids(word);
        spec.properties
            .iter()
            .map(|p| {
                let node = self.taxonomy.node_id(&p.node)?;
                Ok(senses
                    .iter()
                    .map(|&s| self.taxonomy.similarity_ids(node, s))
                    .fold(0.0, f64::max))
            })
            .collect()
    }

    /// Maximum similarity between any property concept of `entity` and any
    /// sense of `word`, raised to the floor.
    pub fn relatedness(&self, entity: &str, word: &str) -> Result<f64> {
        let spec = self.domain.entity(entity)?;
        let best = self.property_similarities(spec, word)?.into_iter().fold(0.0, f64::max);
        Ok(best.max(self.floor))
    }

    /// Relatedness of the null entity, which has no properties.
    pub fn null_relatedness(&self) -> f64 {
        self.floor
    }

    /// Index of the property whose concept best matches `word`; ties go to
    /// the earliest property.
    pub fn ground_index(&self, entity: &str, word: &str) -> Result<usize> {
        let spec = self.domain.entity(entity)?;
        let sims = self.property_similarities(spec, word)?;
        let mut best = 0;
        for (i, &s) in sims.iter().enumerate() {
            if s > sims[best] {
                best = i;
            }
        }
        Ok(best)
    }

    pub fn ground(&self, entity: &str, word: &str) -> Result<&'a Property> {
        let idx = self.ground_index(entity, word)?;
        Ok(&self.domain.entity(entity)?.properties[idx])
    }

    pub fn ground_concept(&self, entity: &str, word: &str) -> Result<Concept> {
        let p = self.ground(entity, word)?;
        Ok(Concept {
            property: p.name.clone(),
            node: p.node.clone(),
        })
    }

    /// Redistributes each entity's association mass in proportion to
    /// `p(w|e) * SR(e, w)`. The null row is left untouched.
    pub fn rescore(&self, assoc: &AssociationTable) -> Result<AssociationTable> {
        let mut out = assoc.clone();
        let words: Vec<String> = assoc.words().to_vec();
        for (e_idx, entity) in assoc.entities().iter().enumerate() {
            if entity == NULL_ENTITY {
                continue;
            }
            let row = out.row_mut(e_idx);
            let mut total = 0.0;
            for (p, w) in row.iter_mut().zip(&words) {
                *p *= self.relatedness(entity, w)?;
                total += *p;
            }
            if total.is_nan() || total <= 0.0 {
                return Err(Error::Rescore { entity: entity.clone() });
            }
            row.iter_mut().for_each(|p| *p /= total);
        }
        Ok(out)
    }
}

pub fn semantic_relatedness(
    entity: &str,
    word: &str,
    domain: &DomainModel,
    taxonomy: &Taxonomy,
    floor: f64,
) -> Result<f64> {
    SemanticContext::new(domain, taxonomy, floor).relatedness(entity, word)
}

pub fn rescore(
    assoc: &AssociationTable,
    domain: &DomainModel,
    taxonomy: &Taxonomy,
    floor: f64,
) -> Result<AssociationTable> {
    SemanticContext::new(domain, taxonomy, floor).rescore(assoc)
}

/// Name of the property `word` most plausibly denotes for `entity`.
pub fn ground_word<'a>(entity: &str, word: &str, domain: &'a DomainModel, taxonomy: &Taxonomy) -> Result<&'a str> {
    let ctx = SemanticContext::new(domain, taxonomy, 0.0);
    let idx = ctx.ground_index(entity, word)?;
    Ok(domain.entity(entity)?.properties[idx].name.as_str())
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &'static str) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        what,
        message: format!("{}: {e}", path.display()),
    })
}
