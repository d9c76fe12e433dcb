//! Seeded synthetic corpora with known ground truth.
//!
//! The generator stages a treasure-hunt style session: users walk through
//! four rooms and talk about the objects there while their gaze moves over
//! the scene. In a coupled utterance the user looks at an object shortly
//! before naming it; in an uncoupled one the gaze wanders over unrelated
//! objects. Recognition errors swap content words for sound-alikes.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{merge_fixations, Corpus, Fixation, Instance, Millis, ResponseType, WordToken};
use crate::error::{Error, Result};
use crate::eval::GoldStandard;
use crate::semantics::{read_json, DomainModel, EntitySpec, Property, Taxonomy, TaxonomyFile};

/// Surface words of one property with relative frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertyLexicon {
    pub name: String,
    pub node: String,
    /// How often this property is mentioned, relative to the others.
    pub weight: f64,
    pub words: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntityLexicon {
    pub room: String,
    pub default_word: String,
    pub properties: Vec<PropertyLexicon>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub users: usize,
    pub instances_per_user: usize,
    pub lexicon: BTreeMap<String, EntityLexicon>,
    /// Range of the delay between fixation onset and the word, in ms.
    pub gaze_lead_ms: [Millis; 2],
    pub coupled_fraction: f64,
    /// Probability of an extra off-topic content word per utterance.
    pub noise_word_rate: f64,
    /// Probability of each extra fixation on a non-target object.
    pub noise_fixation_rate: f64,
    pub recognition_error_rate: f64,
    pub noise_words: Vec<String>,
    /// Sound-alike substitutions applied on recognition errors.
    pub confusions: BTreeMap<String, String>,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            users: 20,
            instances_per_user: 150,
            lexicon: default_lexicon(),
            gaze_lead_ms: [300, 800],
            coupled_fraction: 0.674,
            noise_word_rate: 0.3,
            noise_fixation_rate: 0.5,
            recognition_error_rate: 0.2,
            noise_words: NOISE_WORDS.iter().map(|w| w.to_string()).collect(),
            confusions: CONFUSIONS.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
            seed: 7,
        }
    }
}

impl GenConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref(), "generator config")
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.lexicon.is_empty() {
            return cfg("lexicon is empty".into());
        }
        for (name, p) in [
            ("coupled_fraction", self.coupled_fraction),
            ("noise_word_rate", self.noise_word_rate),
            ("noise_fixation_rate", self.noise_fixation_rate),
            ("recognition_error_rate", self.recognition_error_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return cfg(format!("{name} = {p} is not a probability"));
            }
        }
        let [lo, hi] = self.gaze_lead_ms;
        if lo <= 0 || hi < lo {
            return cfg(format!("gaze_lead_ms range [{lo}, {hi}] must be positive and ordered"));
        }
        if self.users == 0 || self.instances_per_user == 0 {
            return cfg("users and instances_per_user must be positive".into());
        }
        for (entity, lex) in &self.lexicon {
            if lex.properties.is_empty() || lex.properties.iter().any(|p| p.words.is_empty() || p.weight <= 0.0) {
                return cfg(format!(
                    "entity `{entity}` needs properties with words and positive weights"
                ));
            }
            if lex.properties.iter().flat_map(|p| &p.words).any(|(_, w)| *w <= 0.0) {
                return cfg(format!("entity `{entity}` has a non-positive word weight"));
            }
        }
        if self.noise_word_rate > 0.0 && self.noise_words.is_empty() {
            return cfg("noise_word_rate > 0 needs noise_words".into());
        }
        Ok(())
    }

    pub fn domain_model(&self) -> DomainModel {
        DomainModel {
            entities: self
                .lexicon
                .iter()
                .map(|(e, lex)| {
                    let spec = EntitySpec {
                        default_word: lex.default_word.clone(),
                        properties: lex
                            .properties
                            .iter()
                            .map(|p| Property {
                                name: p.name.clone(),
                                node: p.node.clone(),
                            })
                            .collect(),
                    };
                    (e.clone(), spec)
                })
                .collect(),
        }
    }

    /// The generating lexicon as a gold standard.
    pub fn gold_standard(&self) -> GoldStandard {
        GoldStandard {
            entities: self
                .lexicon
                .iter()
                .map(|(e, lex)| {
                    let props = lex
                        .properties
                        .iter()
                        .map(|p| (p.name.clone(), p.words.iter().map(|(w, _)| w.clone()).collect()))
                        .collect();
                    (e.clone(), props)
                })
                .collect(),
        }
    }

    fn rooms(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut rooms: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (e, lex) in &self.lexicon {
            rooms.entry(lex.room.as_str()).or_default().push(e.as_str());
        }
        rooms
    }
}

/// Everything one generator run produces.
#[derive(Debug, Clone)]
pub struct Generated {
    pub corpus: Corpus,
    pub gold: GoldStandard,
    pub domain: DomainModel,
    pub taxonomy: Taxonomy,
}

pub fn generate(config: &GenConfig) -> Result<Generated> {
    config.validate()?;
    let taxonomy = mini_taxonomy();
    let domain = config.domain_model();
    domain.validate(&taxonomy)?;
    let rooms = config.rooms();
    let room_names: Vec<&str> = rooms.keys().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut instances = Vec::with_capacity(config.users * config.instances_per_user);
    for u in 0..config.users {
        let user = format!("user{:02}", u + 1);
        let mut order = room_names.clone();
        shuffle(&mut order, &mut rng);
        for k in 0..config.instances_per_user {
            let room = order[k * order.len() / config.instances_per_user];
            let gen = InstanceGen {
                cfg: config,
                room: &rooms[room],
                rooms: &rooms,
            };
            let mut inst = gen.build(&mut rng);
            inst.id = format!("{user}-{k:04}");
            inst.user = user.clone();
            if k == 0 {
                inst.prev_response = None;
            }
            instances.push(inst);
        }
    }
    let corpus = Corpus::new(instances)?;
    Ok(Generated {
        corpus,
        gold: config.gold_standard(),
        domain,
        taxonomy,
    })
}

fn shuffle<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    use rand::seq::SliceRandom;
    items.shuffle(rng);
}

fn weighted<'a, T>(items: &'a [(T, f64)], rng: &mut ChaCha8Rng) -> &'a T {
    &items.choose_weighted(rng, |(_, w)| *w).expect("weights validated").0
}

const FUNCTION_WORDS: [&str; 14] = [
    "the", "a", "there", "is", "i", "see", "this", "that", "and", "it", "on", "with", "one", "next",
];

const COUPLED_RESPONSES: [(ResponseType, f64); 8] = [
    (ResponseType::SpecificSee, 0.28),
    (ResponseType::NonspecificSee, 0.12),
    (ResponseType::PreviousSee, 0.1),
    (ResponseType::Describe, 0.24),
    (ResponseType::Compare, 0.1),
    (ResponseType::Clarify, 0.06),
    (ResponseType::ActionRequest, 0.05),
    (ResponseType::Misc, 0.05),
];

const UNCOUPLED_RESPONSES: [(ResponseType, f64); 8] = [
    (ResponseType::SpecificSee, 0.06),
    (ResponseType::NonspecificSee, 0.16),
    (ResponseType::PreviousSee, 0.06),
    (ResponseType::Describe, 0.07),
    (ResponseType::Compare, 0.05),
    (ResponseType::Clarify, 0.2),
    (ResponseType::ActionRequest, 0.22),
    (ResponseType::Misc, 0.18),
];

struct InstanceGen<'a> {
    cfg: &'a GenConfig,
    room: &'a [&'a str],
    rooms: &'a BTreeMap<&'a str, Vec<&'a str>>,
}

struct Utterance {
    /// (surface, time, is_content)
    words: Vec<(String, Millis, bool)>,
    fixations: Vec<Fixation>,
}

impl InstanceGen<'_> {
    fn build(&self, rng: &mut ChaCha8Rng) -> Instance {
        let coupled = rng.random_bool(self.cfg.coupled_fraction);
        let mut utt = if coupled {
            self.coupled(rng)
        } else {
            self.uncoupled(rng)
        };
        self.sprinkle_function_words(&mut utt, rng);

        // Shift so that the earliest event sits at a small non-negative time.
        let earliest = utt
            .words
            .iter()
            .map(|w| w.1)
            .chain(utt.fixations.iter().map(|f| f.t_start))
            .min()
            .unwrap_or(0);
        let shift = rng.random_range(0..200) - earliest;
        for w in &mut utt.words {
            w.1 += shift;
        }
        for f in &mut utt.fixations {
            f.t_start += shift;
            f.t_end += shift;
        }
        utt.words.sort_by_key(|w| w.1);
        utt.fixations.sort_by_key(|f| f.t_start);
        let fixations = merge_fixations(&utt.fixations);

        let transcript: Vec<WordToken> = utt
            .words
            .iter()
            .map(|(s, t, c)| WordToken::new(s.clone(), *t, *c))
            .collect();
        let recognized: Vec<WordToken> = transcript
            .iter()
            .map(|w| {
                if w.is_content && rng.random_bool(self.cfg.recognition_error_rate) {
                    WordToken::new(self.confuse(&w.surface, rng), w.t_start, true)
                } else {
                    w.clone()
                }
            })
            .collect();
        let last_word = transcript.last().map_or(0, |w| w.t_start);
        let speech_len_ms = last_word + rng.random_range(250..700);

        let distinct: BTreeSet<&str> = fixations.iter().map(|f| f.entity.as_str()).collect();
        let visible = (self.room.len() + rng.random_range(0..4)).max(distinct.len()) as u32;
        let sigma = if coupled { 0.25 } else { 0.9 };
        let positions = walk(rng.random_range(2..5), sigma, rng);
        let responses = if coupled {
            &COUPLED_RESPONSES
        } else {
            &UNCOUPLED_RESPONSES
        };
        let prev_response = Some(*weighted(responses, rng));

        Instance {
            id: String::new(),
            user: String::new(),
            words: recognized,
            fixations,
            speech_len_ms,
            user_positions: positions,
            visible_entity_count: visible,
            prev_response,
            coupled: Some(coupled),
            transcript_words: Some(transcript),
        }
    }

    fn confuse(&self, word: &str, rng: &mut ChaCha8Rng) -> String {
        match self.cfg.confusions.get(word) {
            Some(c) => c.clone(),
            None => FALLBACK_CONFUSIONS.choose(rng).expect("non-empty").to_string(),
        }
    }

    fn describe(&self, entity: &str, n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
        let lex = &self.cfg.lexicon[entity];
        let props: Vec<(&PropertyLexicon, f64)> = lex.properties.iter().map(|p| (p, p.weight)).collect();
        let mut out: Vec<String> = Vec::with_capacity(n);
        for _ in 0..n {
            let p = weighted(&props, rng);
            let w = weighted(&p.words, rng).clone();
            if !out.contains(&w) {
                out.push(w);
            }
        }
        out
    }

    fn lead(&self, rng: &mut ChaCha8Rng) -> Millis {
        let [lo, hi] = self.cfg.gaze_lead_ms;
        rng.random_range(lo..=hi)
    }

    fn pick_other(&self, exclude: &[&str], rng: &mut ChaCha8Rng) -> Option<String> {
        let pool: Vec<&str> = self.room.iter().copied().filter(|e| !exclude.contains(e)).collect();
        pool.choose(rng).map(|e| e.to_string())
    }

    fn noise_word(&self, rng: &mut ChaCha8Rng) -> String {
        self.cfg.noise_words.choose(rng).expect("validated").clone()
    }

    fn coupled(&self, rng: &mut ChaCha8Rng) -> Utterance {
        let n_targets = if self.room.len() > 1 && rng.random_bool(0.3) {
            2
        } else {
            1
        };
        let targets: Vec<&str> = self.room.choose_multiple(rng, n_targets).copied().collect();
        let mut words = Vec::new();
        let mut fixations: Vec<Fixation> = Vec::new();
        let mut gaze_start = 0;
        let mut last_word = 0;
        for (k, &target) in targets.iter().enumerate() {
            if k > 0 {
                gaze_start = last_word + rng.random_range(150..450);
                // The previous target's fixation ends before this one begins.
                let prev = fixations.last_mut().expect("one per target");
                prev.t_end = prev.t_end.min(gaze_start - 20);
            }
            let n_words = *weighted(&[(1usize, 0.45), (2, 0.35), (3, 0.2)], rng);
            let mut t = gaze_start + self.lead(rng);
            let first = t;
            for w in self.describe(target, n_words, rng) {
                words.push((w, t, true));
                last_word = t;
                t += rng.random_range(250..600);
            }
            let end = (last_word + rng.random_range(-700..=400))
                .max(first)
                .max(gaze_start + 200);
            fixations.push(Fixation::new(target, gaze_start, end));
        }
        let first_gaze = fixations[0].t_start;
        let gaze_end = fixations.iter().map(|f| f.t_end).max().unwrap_or(0);
        // Glances at other objects before the description starts...
        let mut cursor = first_gaze;
        for _ in 0..2 {
            if rng.random_bool(self.cfg.noise_fixation_rate) {
                if let Some(e) = self.pick_other(&targets, rng) {
                    let end = cursor - rng.random_range(30..300);
                    let start = end - rng.random_range(150..450);
                    fixations.push(Fixation::new(e, start, end));
                    cursor = start;
                }
            }
        }
        // ...and after the user has finished naming things.
        let mut cursor = gaze_end.max(last_word);
        for _ in 0..2 {
            if rng.random_bool(self.cfg.noise_fixation_rate) {
                if let Some(e) = self.pick_other(&targets, rng) {
                    let start = cursor + rng.random_range(50..300);
                    let end = start + rng.random_range(150..450);
                    fixations.push(Fixation::new(e, start, end));
                    cursor = end;
                }
            }
        }
        if rng.random_bool(self.cfg.noise_word_rate) {
            let t = rng.random_range(words[0].1..=last_word + 300);
            words.push((self.noise_word(rng), t, true));
        }
        Utterance { words, fixations }
    }

    fn uncoupled(&self, rng: &mut ChaCha8Rng) -> Utterance {
        let topical = rng.random_bool(0.85);
        let n_words = if topical {
            rng.random_range(1..=3)
        } else {
            rng.random_range(1..=2)
        };
        let mut times = Vec::with_capacity(n_words + 1);
        let mut time = 0;
        for _ in 0..n_words + 1 {
            times.push(time);
            time += rng.random_range(250..600);
        }
        // Gaze wanders over the room while the user talks about something else.
        let last = times[n_words - 1];
        let mut fixations = Vec::new();
        let mut t = -self.lead(rng);
        while fixations.len() < 2 || (t < last + 200 && fixations.len() < 6) {
            let e = self.room.choose(rng).expect("rooms are non-empty");
            let d = rng.random_range(120..450);
            fixations.push(Fixation::new(*e, t, t + d));
            t += d + rng.random_range(30..250);
        }
        let fixated: Vec<&str> = fixations.iter().map(|f| f.entity.as_str()).collect();
        let mut content: Vec<String> = Vec::new();
        if topical {
            let topic = self.pick_other(&fixated, rng).unwrap_or_else(|| {
                let others: Vec<&str> = self
                    .rooms
                    .values()
                    .flatten()
                    .copied()
                    .filter(|e| !self.room.contains(e))
                    .collect();
                others.choose(rng).copied().unwrap_or(self.room[0]).to_string()
            });
            content.extend(self.describe(&topic, n_words, rng));
        } else {
            for _ in 0..n_words {
                content.push(self.noise_word(rng));
            }
        }
        if rng.random_bool(self.cfg.noise_word_rate) {
            content.push(self.noise_word(rng));
        }
        let words = content.into_iter().zip(times).map(|(w, at)| (w, at, true)).collect();
        Utterance { words, fixations }
    }

    fn sprinkle_function_words(&self, utt: &mut Utterance, rng: &mut ChaCha8Rng) {
        let times: Vec<Millis> = utt.words.iter().map(|w| w.1).collect();
        for t in times {
            if rng.random_bool(0.6) {
                let fw = FUNCTION_WORDS.choose(rng).expect("non-empty");
                utt.words.push((fw.to_string(), t - rng.random_range(100..240), false));
            }
        }
    }
}

/// Random walk of eye-height positions in the horizontal plane.
fn walk(n: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    let step = Normal::new(0.0, sigma).expect("positive sigma");
    let mut p = [rng.random_range(0.0..10.0), rng.random_range(0.0..10.0), 1.6];
    let mut out = vec![p];
    for _ in 1..n {
        p[0] += step.sample(rng);
        p[1] += step.sample(rng);
        out.push(p);
    }
    out
}

const NOISE_WORDS: [&str; 20] = [
    "room",
    "wall",
    "door",
    "window",
    "floor",
    "corner",
    "thing",
    "way",
    "stuff",
    "kind",
    "lot",
    "something",
    "place",
    "treasure",
    "game",
    "time",
    "nice",
    "old",
    "pretty",
    "other",
];

const FALLBACK_CONFUSIONS: [&str; 5] = ["sand", "ban", "hat", "cap", "pan"];

const CONFUSIONS: &[(&str, &str)] = &[
    ("vase", "face"),
    ("pot", "hot"),
    ("urn", "earn"),
    ("table", "cable"),
    ("desk", "disk"),
    ("couch", "catch"),
    ("sofa", "soda"),
    ("lamp", "camp"),
    ("light", "night"),
    ("bed", "bad"),
    ("dresser", "dress"),
    ("drawers", "doors"),
    ("stool", "school"),
    ("seat", "sheet"),
    ("chest", "test"),
    ("trunk", "truck"),
    ("box", "fox"),
    ("painting", "paying"),
    ("picture", "mixture"),
    ("portrait", "port"),
    ("statue", "status"),
    ("sculpture", "culture"),
    ("figure", "finger"),
    ("scroll", "stroll"),
    ("paper", "pepper"),
    ("cabinet", "cabin"),
    ("cupboard", "clipboard"),
    ("shelf", "self"),
    ("chair", "share"),
    ("barrel", "bare"),
    ("keg", "leg"),
    ("jug", "jog"),
    ("pitcher", "richer"),
    ("plate", "play"),
    ("dish", "fish"),
    ("bowl", "ball"),
    ("purple", "people"),
    ("white", "wide"),
    ("brown", "brow"),
    ("red", "read"),
    ("yellow", "hello"),
    ("gold", "cold"),
    ("golden", "holding"),
    ("black", "block"),
    ("blue", "blew"),
    ("grey", "pray"),
    ("gray", "tray"),
    ("green", "screen"),
    ("big", "pig"),
    ("large", "charge"),
    ("huge", "hug"),
    ("small", "mall"),
    ("little", "lid"),
    ("tiny", "tidy"),
    ("round", "around"),
    ("rolled", "road"),
    ("circular", "circus"),
    ("square", "scare"),
    ("rectangular", "regular"),
    ("flat", "flag"),
    ("tall", "all"),
    ("long", "lung"),
    ("wooden", "woman"),
    ("wood", "would"),
    ("oak", "oat"),
    ("stone", "stun"),
    ("metal", "medal"),
    ("brass", "grass"),
    ("glass", "class"),
    ("leather", "feather"),
    ("parchment", "department"),
    ("clay", "clean"),
    ("ceramic", "cinema"),
    ("marble", "marvel"),
    ("fabric", "frantic"),
    ("cloth", "clock"),
    ("canvas", "campus"),
    ("wall", "ball"),
    ("door", "more"),
    ("window", "widow"),
    ("floor", "flour"),
    ("corner", "coroner"),
    ("thing", "think"),
    ("room", "broom"),
    ("treasure", "pressure"),
    ("game", "came"),
];

type Props<'a> = [(&'a str, &'a str, &'a [(&'a str, f64)]); 5];

fn entity(room: &str, default_word: &str, props: Props<'_>) -> EntityLexicon {
    const WEIGHTS: [f64; 5] = [0.45, 0.2, 0.12, 0.1, 0.13];
    const NAMES: [&str; 5] = ["SEM", "COLOR", "SIZE", "SHAPE", "MATERIAL"];
    EntityLexicon {
        room: room.into(),
        default_word: default_word.into(),
        properties: props
            .iter()
            .zip(WEIGHTS)
            .zip(NAMES)
            .map(|(((name, node, words), weight), expected)| {
                debug_assert_eq!(*name, expected);
                PropertyLexicon {
                    name: name.to_string(),
                    node: node.to_string(),
                    weight,
                    words: words.iter().map(|(w, f)| (w.to_string(), *f)).collect(),
                }
            })
            .collect(),
    }
}

/// Twenty objects in four rooms, each with five describable properties.
pub fn default_lexicon() -> BTreeMap<String, EntityLexicon> {
    let e = entity;
    let list = [
        (
            "vase_purple",
            e(
                "living",
                "vase",
                [
                    ("SEM", "vase#n#1", &[("vase", 4.0), ("pot", 1.0)]),
                    ("COLOR", "purple#n#1", &[("purple", 3.0)]),
                    ("SIZE", "big#a#1", &[("big", 2.0), ("large", 1.0)]),
                    ("SHAPE", "round#a#1", &[("round", 1.0)]),
                    ("MATERIAL", "clay#n#1", &[("clay", 1.0), ("ceramic", 1.0)]),
                ],
            ),
        ),
        (
            "vase_greek",
            e(
                "living",
                "vase",
                [
                    ("SEM", "vase#n#1", &[("vase", 4.0), ("urn", 1.0)]),
                    ("COLOR", "white#n#1", &[("white", 2.0)]),
                    ("SIZE", "small#a#1", &[("small", 1.0), ("little", 1.0)]),
                    ("SHAPE", "tall#a#1", &[("tall", 2.0)]),
                    ("MATERIAL", "marble#n#1", &[("marble", 1.0)]),
                ],
            ),
        ),
        (
            "table_vase",
            e(
                "living",
                "table",
                [
                    ("SEM", "table#n#1", &[("table", 4.0), ("desk", 1.0)]),
                    ("COLOR", "brown#n#1", &[("brown", 2.0)]),
                    ("SIZE", "small#a#1", &[("small", 1.0)]),
                    ("SHAPE", "square#a#1", &[("square", 1.0)]),
                    ("MATERIAL", "wood#n#1", &[("wooden", 2.0), ("wood", 1.0)]),
                ],
            ),
        ),
        (
            "couch_red",
            e(
                "living",
                "couch",
                [
                    ("SEM", "couch#n#1", &[("couch", 3.0), ("sofa", 2.0)]),
                    ("COLOR", "red#n#1", &[("red", 3.0)]),
                    ("SIZE", "big#a#1", &[("big", 1.0), ("huge", 1.0)]),
                    ("SHAPE", "long#a#1", &[("long", 1.0)]),
                    ("MATERIAL", "leather#n#1", &[("leather", 2.0)]),
                ],
            ),
        ),
        (
            "lamp_brass",
            e(
                "living",
                "lamp",
                [
                    ("SEM", "lamp#n#1", &[("lamp", 4.0), ("light", 1.0)]),
                    ("COLOR", "yellow#n#1", &[("yellow", 1.0), ("golden", 1.0)]),
                    ("SIZE", "small#a#1", &[("small", 1.0)]),
                    ("SHAPE", "tall#a#1", &[("tall", 1.0)]),
                    ("MATERIAL", "brass#n#1", &[("brass", 2.0), ("metal", 1.0)]),
                ],
            ),
        ),
        (
            "bed",
            e(
                "bedroom",
                "bed",
                [
                    ("SEM", "bed#n#1", &[("bed", 4.0)]),
                    ("COLOR", "white#n#1", &[("white", 1.0)]),
                    ("SIZE", "big#a#1", &[("big", 2.0), ("huge", 1.0)]),
                    ("SHAPE", "square#a#1", &[("square", 1.0)]),
                    ("MATERIAL", "wood#n#1", &[("wooden", 1.0)]),
                ],
            ),
        ),
        (
            "dresser",
            e(
                "bedroom",
                "dresser",
                [
                    ("SEM", "dresser#n#1", &[("dresser", 3.0), ("drawers", 1.0)]),
                    ("COLOR", "brown#n#1", &[("brown", 2.0)]),
                    ("SIZE", "big#a#1", &[("large", 1.0)]),
                    ("SHAPE", "tall#a#1", &[("tall", 1.0)]),
                    ("MATERIAL", "wood#n#1", &[("wooden", 1.0), ("oak", 1.0)]),
                ],
            ),
        ),
        (
            "stool",
            e(
                "bedroom",
                "stool",
                [
                    ("SEM", "stool#n#1", &[("stool", 3.0), ("seat", 1.0)]),
                    ("COLOR", "black#n#1", &[("black", 2.0)]),
                    ("SIZE", "small#a#1", &[("small", 1.0), ("little", 1.0)]),
                    ("SHAPE", "round#a#1", &[("round", 2.0)]),
                    ("MATERIAL", "metal#n#1", &[("metal", 1.0)]),
                ],
            ),
        ),
        (
            "chest",
            e(
                "bedroom",
                "chest",
                [
                    ("SEM", "chest#n#1", &[("chest", 3.0), ("trunk", 2.0), ("box", 1.0)]),
                    ("COLOR", "brown#n#1", &[("brown", 1.0)]),
                    ("SIZE", "big#a#1", &[("big", 1.0)]),
                    ("SHAPE", "square#a#1", &[("square", 1.0)]),
                    ("MATERIAL", "wood#n#1", &[("wooden", 2.0)]),
                ],
            ),
        ),
        (
            "painting",
            e(
                "bedroom",
                "painting",
                [
                    (
                        "SEM",
                        "painting#n#1",
                        &[("painting", 3.0), ("picture", 2.0), ("portrait", 1.0)],
                    ),
                    ("COLOR", "blue#n#1", &[("blue", 2.0)]),
                    ("SIZE", "big#a#1", &[("large", 1.0)]),
                    ("SHAPE", "square#a#1", &[("square", 1.0), ("rectangular", 1.0)]),
                    ("MATERIAL", "fabric#n#1", &[("canvas", 1.0)]),
                ],
            ),
        ),
        (
            "statue_stone",
            e(
                "hall",
                "statue",
                [
                    ("SEM", "statue#n#1", &[("statue", 3.0), ("sculpture", 1.0)]),
                    ("COLOR", "grey#n#1", &[("gray", 1.0), ("grey", 1.0)]),
                    ("SIZE", "big#a#1", &[("big", 1.0), ("huge", 1.0)]),
                    ("SHAPE", "tall#a#1", &[("tall", 1.0)]),
                    ("MATERIAL", "stone#n#1", &[("stone", 2.0)]),
                ],
            ),
        ),
        (
            "statue_gold",
            e(
                "hall",
                "statue",
                [
                    ("SEM", "statue#n#1", &[("statue", 3.0), ("figure", 1.0)]),
                    ("COLOR", "gold#n#1", &[("gold", 2.0), ("golden", 2.0)]),
                    ("SIZE", "small#a#1", &[("small", 1.0)]),
                    ("SHAPE", "tall#a#1", &[("tall", 1.0)]),
                    ("MATERIAL", "metal#n#1", &[("metal", 1.0)]),
                ],
            ),
        ),
        (
            "scroll",
            e(
                "hall",
                "scroll",
                [
                    ("SEM", "scroll#n#1", &[("scroll", 3.0), ("paper", 1.0)]),
                    ("COLOR", "yellow#n#1", &[("yellow", 1.0)]),
                    ("SIZE", "small#a#1", &[("small", 1.0)]),
                    ("SHAPE", "round#a#1", &[("rolled", 1.0)]),
                    ("MATERIAL", "leather#n#1", &[("parchment", 1.0)]),
                ],
            ),
        ),
        (
            "cabinet",
            e(
                "hall",
                "cabinet",
                [
                    (
                        "SEM",
                        "cabinet#n#1",
                        &[("cabinet", 3.0), ("cupboard", 2.0), ("shelf", 1.0)],
                    ),
                    ("COLOR", "brown#n#1", &[("brown", 1.0)]),
                    ("SIZE", "big#a#1", &[("big", 1.0)]),
                    ("SHAPE", "square#a#1", &[("square", 1.0)]),
                    ("MATERIAL", "wood#n#1", &[("wooden", 1.0), ("wood", 1.0)]),
                ],
            ),
        ),
        (
            "chair_green",
            e(
                "hall",
                "chair",
                [
                    ("SEM", "chair#n#1", &[("chair", 4.0), ("seat", 1.0)]),
                    ("COLOR", "green#n#1", &[("green", 3.0)]),
                    ("SIZE", "small#a#1", &[("small", 1.0)]),
                    ("SHAPE", "square#a#1", &[("square", 1.0)]),
                    ("MATERIAL", "fabric#n#1", &[("fabric", 1.0), ("cloth", 1.0)]),
                ],
            ),
        ),
        (
            "barrel",
            e(
                "kitchen",
                "barrel",
                [
                    ("SEM", "barrel#n#1", &[("barrel", 4.0), ("keg", 1.0)]),
                    ("COLOR", "brown#n#1", &[("brown", 1.0)]),
                    ("SIZE", "big#a#1", &[("big", 1.0)]),
                    ("SHAPE", "round#a#1", &[("round", 2.0)]),
                    ("MATERIAL", "wood#n#1", &[("wooden", 2.0)]),
                ],
            ),
        ),
        (
            "jug",
            e(
                "kitchen",
                "jug",
                [
                    ("SEM", "jug#n#1", &[("jug", 3.0), ("pitcher", 2.0)]),
                    ("COLOR", "white#n#1", &[("white", 1.0)]),
                    ("SIZE", "small#a#1", &[("small", 1.0)]),
                    ("SHAPE", "round#a#1", &[("round", 1.0)]),
                    ("MATERIAL", "clay#n#1", &[("clay", 1.0), ("ceramic", 1.0)]),
                ],
            ),
        ),
        (
            "plate",
            e(
                "kitchen",
                "plate",
                [
                    ("SEM", "plate#n#1", &[("plate", 3.0), ("dish", 2.0)]),
                    ("COLOR", "blue#n#1", &[("blue", 1.0)]),
                    ("SIZE", "small#a#1", &[("small", 1.0)]),
                    ("SHAPE", "round#a#1", &[("round", 2.0), ("flat", 1.0)]),
                    ("MATERIAL", "glass#n#1", &[("glass", 1.0)]),
                ],
            ),
        ),
        (
            "bowl",
            e(
                "kitchen",
                "bowl",
                [
                    ("SEM", "bowl#n#1", &[("bowl", 4.0)]),
                    ("COLOR", "red#n#1", &[("red", 1.0)]),
                    ("SIZE", "small#a#1", &[("small", 1.0), ("tiny", 1.0)]),
                    ("SHAPE", "round#a#1", &[("round", 1.0), ("circular", 1.0)]),
                    ("MATERIAL", "glass#n#1", &[("glass", 1.0)]),
                ],
            ),
        ),
        (
            "table_kitchen",
            e(
                "kitchen",
                "table",
                [
                    ("SEM", "table#n#1", &[("table", 4.0)]),
                    ("COLOR", "brown#n#1", &[("brown", 1.0)]),
                    ("SIZE", "big#a#1", &[("big", 1.0)]),
                    ("SHAPE", "long#a#1", &[("long", 1.0)]),
                    ("MATERIAL", "wood#n#1", &[("wooden", 1.0), ("wood", 1.0)]),
                ],
            ),
        ),
    ];
    list.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// (child, parent) hypernym links of the shipped taxonomy.
const HYPERNYMS: &[(&str, &str)] = &[
    ("object#n#1", "entity#n#1"),
    ("thing#n#1", "object#n#1"),
    ("artifact#n#1", "object#n#1"),
    ("furniture#n#1", "artifact#n#1"),
    ("table#n#1", "furniture#n#1"),
    ("couch#n#1", "furniture#n#1"),
    ("bed#n#1", "furniture#n#1"),
    ("dresser#n#1", "furniture#n#1"),
    ("stool#n#1", "furniture#n#1"),
    ("chair#n#1", "furniture#n#1"),
    ("cabinet#n#1", "furniture#n#1"),
    ("chest#n#1", "furniture#n#1"),
    ("container#n#1", "artifact#n#1"),
    ("vase#n#1", "container#n#1"),
    ("barrel#n#1", "container#n#1"),
    ("jug#n#1", "container#n#1"),
    ("bowl#n#1", "container#n#1"),
    ("device#n#1", "artifact#n#1"),
    ("lamp#n#1", "device#n#1"),
    ("creation#n#1", "artifact#n#1"),
    ("painting#n#1", "creation#n#1"),
    ("statue#n#1", "creation#n#1"),
    ("scroll#n#1", "creation#n#1"),
    ("tableware#n#1", "artifact#n#1"),
    ("plate#n#1", "tableware#n#1"),
    ("structure#n#1", "artifact#n#1"),
    ("wall#n#1", "structure#n#1"),
    ("door#n#1", "structure#n#1"),
    ("window#n#1", "structure#n#1"),
    ("location#n#1", "entity#n#1"),
    ("room#n#1", "location#n#1"),
    ("corner#n#1", "location#n#1"),
    ("floor#n#1", "location#n#1"),
    ("abstraction#n#1", "entity#n#1"),
    ("attribute#n#1", "abstraction#n#1"),
    ("color#n#1", "attribute#n#1"),
    ("purple#n#1", "color#n#1"),
    ("white#n#1", "color#n#1"),
    ("brown#n#1", "color#n#1"),
    ("red#n#1", "color#n#1"),
    ("yellow#n#1", "color#n#1"),
    ("gold#n#1", "color#n#1"),
    ("black#n#1", "color#n#1"),
    ("blue#n#1", "color#n#1"),
    ("grey#n#1", "color#n#1"),
    ("green#n#1", "color#n#1"),
    ("size#n#1", "attribute#n#1"),
    ("big#a#1", "size#n#1"),
    ("small#a#1", "size#n#1"),
    ("shape#n#1", "attribute#n#1"),
    ("round#a#1", "shape#n#1"),
    ("square#a#1", "shape#n#1"),
    ("tall#a#1", "shape#n#1"),
    ("long#a#1", "shape#n#1"),
    ("substance#n#1", "entity#n#1"),
    ("material#n#1", "substance#n#1"),
    ("wood#n#1", "material#n#1"),
    ("stone#n#1", "material#n#1"),
    ("metal#n#1", "material#n#1"),
    ("brass#n#1", "metal#n#1"),
    ("gold#n#2", "metal#n#1"),
    ("glass#n#1", "material#n#1"),
    ("leather#n#1", "material#n#1"),
    ("clay#n#1", "material#n#1"),
    ("marble#n#1", "material#n#1"),
    ("fabric#n#1", "material#n#1"),
];

const LEXICON: &[(&str, &[&str])] = &[
    ("vase", &["vase#n#1"]),
    ("pot", &["vase#n#1"]),
    ("urn", &["vase#n#1"]),
    ("table", &["table#n#1"]),
    ("desk", &["table#n#1"]),
    ("couch", &["couch#n#1"]),
    ("sofa", &["couch#n#1"]),
    ("lamp", &["lamp#n#1"]),
    ("light", &["lamp#n#1"]),
    ("bed", &["bed#n#1"]),
    ("dresser", &["dresser#n#1"]),
    ("drawers", &["dresser#n#1"]),
    ("stool", &["stool#n#1"]),
    ("seat", &["chair#n#1", "stool#n#1"]),
    ("chest", &["chest#n#1"]),
    ("trunk", &["chest#n#1"]),
    ("box", &["chest#n#1", "container#n#1"]),
    ("painting", &["painting#n#1"]),
    ("picture", &["painting#n#1"]),
    ("portrait", &["painting#n#1"]),
    ("statue", &["statue#n#1"]),
    ("sculpture", &["statue#n#1"]),
    ("figure", &["statue#n#1", "shape#n#1"]),
    ("scroll", &["scroll#n#1"]),
    ("paper", &["scroll#n#1"]),
    ("cabinet", &["cabinet#n#1"]),
    ("cupboard", &["cabinet#n#1"]),
    ("shelf", &["cabinet#n#1"]),
    ("chair", &["chair#n#1"]),
    ("barrel", &["barrel#n#1"]),
    ("keg", &["barrel#n#1"]),
    ("jug", &["jug#n#1"]),
    ("pitcher", &["jug#n#1"]),
    ("plate", &["plate#n#1"]),
    ("dish", &["plate#n#1", "bowl#n#1"]),
    ("bowl", &["bowl#n#1"]),
    ("furniture", &["furniture#n#1"]),
    ("container", &["container#n#1"]),
    ("object", &["object#n#1"]),
    ("purple", &["purple#n#1"]),
    ("white", &["white#n#1"]),
    ("brown", &["brown#n#1"]),
    ("red", &["red#n#1"]),
    ("yellow", &["yellow#n#1"]),
    ("gold", &["gold#n#1", "gold#n#2"]),
    ("golden", &["gold#n#1"]),
    ("black", &["black#n#1"]),
    ("blue", &["blue#n#1"]),
    ("grey", &["grey#n#1"]),
    ("gray", &["grey#n#1"]),
    ("green", &["green#n#1"]),
    ("color", &["color#n#1"]),
    ("colour", &["color#n#1"]),
    ("big", &["big#a#1"]),
    ("large", &["big#a#1"]),
    ("huge", &["big#a#1"]),
    ("small", &["small#a#1"]),
    ("little", &["small#a#1"]),
    ("tiny", &["small#a#1"]),
    ("size", &["size#n#1"]),
    ("round", &["round#a#1"]),
    ("rolled", &["round#a#1"]),
    ("circular", &["round#a#1"]),
    ("square", &["square#a#1"]),
    ("rectangular", &["square#a#1"]),
    ("flat", &["square#a#1"]),
    ("tall", &["tall#a#1"]),
    ("long", &["long#a#1"]),
    ("shape", &["shape#n#1"]),
    ("wooden", &["wood#n#1"]),
    ("wood", &["wood#n#1"]),
    ("oak", &["wood#n#1"]),
    ("stone", &["stone#n#1"]),
    ("metal", &["metal#n#1"]),
    ("brass", &["brass#n#1"]),
    ("glass", &["glass#n#1"]),
    ("leather", &["leather#n#1"]),
    ("parchment", &["leather#n#1"]),
    ("clay", &["clay#n#1"]),
    ("ceramic", &["clay#n#1"]),
    ("marble", &["marble#n#1"]),
    ("fabric", &["fabric#n#1"]),
    ("cloth", &["fabric#n#1"]),
    ("canvas", &["fabric#n#1"]),
    ("material", &["material#n#1"]),
    ("room", &["room#n#1"]),
    ("wall", &["wall#n#1"]),
    ("door", &["door#n#1"]),
    ("window", &["window#n#1"]),
    ("floor", &["floor#n#1"]),
    ("corner", &["corner#n#1"]),
    ("thing", &["thing#n#1"]),
    ("place", &["location#n#1"]),
    ("stuff", &["substance#n#1"]),
];

/// Small hypernym taxonomy covering the shipped domain.
pub fn mini_taxonomy() -> Taxonomy {
    let mut nodes = vec!["entity#n#1".to_string()];
    nodes.extend(HYPERNYMS.iter().map(|(c, _)| c.to_string()));
    let edges = HYPERNYMS.iter().map(|(c, p)| [c.to_string(), p.to_string()]).collect();
    let lexicon = LEXICON
        .iter()
        .map(|(w, senses)| (w.to_string(), senses.iter().map(|s| s.to_string()).collect()))
        .collect();
    Taxonomy::from_file(TaxonomyFile { nodes, edges, lexicon }).expect("shipped taxonomy is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::temporal_distance;

    fn small(seed: u64) -> GenConfig {
        GenConfig {
            users: 3,
            instances_per_user: 40,
            seed,
            ..GenConfig::default()
        }
    }

    #[test]
    fn shipped_resources_are_consistent() {
        let tax = mini_taxonomy();
        assert_eq!(tax.node_count(), 67);
        let cfg = GenConfig::default();
        cfg.domain_model().validate(&tax).unwrap();
        let gold_words: BTreeSet<&String> = cfg
            .lexicon
            .values()
            .flat_map(|l| &l.properties)
            .flat_map(|p| p.words.iter().map(|(w, _)| w))
            .collect();
        for w in &gold_words {
            assert!(tax.senses(w).next().is_some(), "gold word `{w}` missing from lexicon");
            let c = &cfg.confusions[w.as_str()];
            assert!(!gold_words.contains(c), "confusion `{c}` is itself a gold word");
        }
        for lex in cfg.lexicon.values() {
            assert!(lex.properties[0].words.iter().any(|(w, _)| *w == lex.default_word));
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate(&small(3)).unwrap().corpus.to_jsonl();
        let b = generate(&small(3)).unwrap().corpus.to_jsonl();
        assert_eq!(a, b);
        assert_ne!(a, generate(&small(4)).unwrap().corpus.to_jsonl());
    }

    #[test]
    fn generated_corpus_round_trips_through_validation() {
        let g = generate(&small(5)).unwrap();
        let back = Corpus::from_reader(g.corpus.to_jsonl().as_bytes()).unwrap();
        assert_eq!(back, g.corpus);
    }

    #[test]
    fn clean_coupled_words_follow_their_fixation() {
        let cfg = GenConfig {
            coupled_fraction: 1.0,
            noise_word_rate: 0.0,
            noise_fixation_rate: 0.0,
            recognition_error_rate: 0.0,
            ..small(9)
        };
        let gold = cfg.gold_standard();
        let g = generate(&cfg).unwrap();
        for inst in &g.corpus.instances {
            for w in inst.content_words(crate::corpus::Source::Recognized) {
                let ok = inst.fixations.iter().any(|f| {
                    let d = temporal_distance(f, w);
                    gold.contains(&f.entity, &w.surface) && (-800..=0).contains(&d)
                });
                assert!(ok, "{}: `{}` lacks a source fixation", inst.id, w.surface);
            }
        }
    }

    #[test]
    fn coupled_share_within_binomial_interval() {
        let cfg = GenConfig {
            users: 20,
            instances_per_user: 150,
            ..GenConfig::default()
        };
        let g = generate(&cfg).unwrap();
        let n = g.corpus.len() as f64;
        let k = g.corpus.instances.iter().filter(|i| i.coupled == Some(true)).count() as f64;
        // 99% normal-approximation interval around the configured share.
        let p = 0.674;
        let half = 2.5758 * (p * (1.0 - p) / n).sqrt();
        assert!((k / n - p).abs() <= half, "share {} outside {p} +/- {half}", k / n);
    }

    #[test]
    fn recognition_errors_only_touch_content_words() {
        let cfg = GenConfig {
            recognition_error_rate: 1.0,
            ..small(11)
        };
        let g = generate(&cfg).unwrap();
        for inst in &g.corpus.instances {
            let t = inst.transcript_words.as_ref().unwrap();
            assert_eq!(t.len(), inst.words.len());
            for (a, b) in t.iter().zip(&inst.words) {
                assert_eq!(a.t_start, b.t_start);
                if a.is_content {
                    assert_ne!(a.surface, b.surface);
                    assert!(!g.gold.contains_anywhere(&b.surface));
                } else {
                    assert_eq!(a.surface, b.surface);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(generate(&GenConfig {
            lexicon: BTreeMap::new(),
            ..small(1)
        })
        .is_err());
        assert!(generate(&GenConfig {
            coupled_fraction: 1.5,
            ..small(1)
        })
        .is_err());
        assert!(generate(&GenConfig {
            gaze_lead_ms: [0, 100],
            ..small(1)
        })
        .is_err());
    }
}
