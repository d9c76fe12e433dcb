//! Paired speech/gaze instances.
//!
//! An instance pairs the timestamped words of one user utterance with the gaze
//! fixations accumulated while it was spoken. Corpora are stored as JSON lines;
//! loading validates every record and merges neighbouring fixations on the same
//! entity, so everything downstream sees normalized fixation streams.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Milliseconds since the start of the session.
pub type Millis = i64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WordToken {
    pub surface: String,
    #[serde(rename = "t_ms")]
    pub t_start: Millis,
    /// Noun or adjective.
    #[serde(rename = "content")]
    pub is_content: bool,
}

impl WordToken {
    pub fn new(surface: impl Into<String>, t_start: Millis, is_content: bool) -> Self {
        WordToken {
            surface: surface.into(),
            t_start,
            is_content,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fixation {
    pub entity: String,
    #[serde(rename = "t_start_ms")]
    pub t_start: Millis,
    #[serde(rename = "t_end_ms")]
    pub t_end: Millis,
}

impl Fixation {
    pub fn new(entity: impl Into<String>, t_start: Millis, t_end: Millis) -> Self {
        Fixation {
            entity: entity.into(),
            t_start,
            t_end,
        }
    }

    pub fn duration(&self) -> Millis {
        self.t_end - self.t_start
    }
}

/// Type of the system turn preceding an utterance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ResponseType {
    SpecificSee,
    NonspecificSee,
    PreviousSee,
    Describe,
    Compare,
    Clarify,
    ActionRequest,
    Misc,
}

impl ResponseType {
    pub const ALL: [ResponseType; 8] = [
        ResponseType::SpecificSee,
        ResponseType::NonspecificSee,
        ResponseType::PreviousSee,
        ResponseType::Describe,
        ResponseType::Compare,
        ResponseType::Clarify,
        ResponseType::ActionRequest,
        ResponseType::Misc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ResponseType::SpecificSee => "specific-see",
            ResponseType::NonspecificSee => "nonspecific-see",
            ResponseType::PreviousSee => "previous-see",
            ResponseType::Describe => "describe",
            ResponseType::Compare => "compare",
            ResponseType::Clarify => "clarify",
            ResponseType::ActionRequest => "action-request",
            ResponseType::Misc => "misc",
        }
    }

    pub fn index(self) -> usize {
        ResponseType::ALL.iter().position(|r| *r == self).unwrap()
    }
}

impl fmt::Display for ResponseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ResponseType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        ResponseType::ALL
            .iter()
            .copied()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown response type `{s}`"))
    }
}

/// Which word stream of an instance to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// 1-best recognizer output.
    Recognized,
    /// Human transcript; falls back to the recognized words when absent.
    Transcript,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: String,
    pub user: String,
    pub words: Vec<WordToken>,
    pub fixations: Vec<Fixation>,
    pub speech_len_ms: Millis,
    pub user_positions: Vec<[f64; 3]>,
    pub visible_entity_count: u32,
    pub prev_response: Option<ResponseType>,
    pub coupled: Option<bool>,
    pub transcript_words: Option<Vec<WordToken>>,
}

/// On-disk shape of one corpus line.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceRecord {
    id: String,
    words: Vec<WordToken>,
    fixations: Vec<Fixation>,
    speech_len_ms: Millis,
    user: String,
    user_positions: Vec<[f64; 3]>,
    visible_entities: u32,
    prev_response: Option<String>,
    coupled: Option<bool>,
    transcript_words: Option<Vec<WordToken>>,
}

impl Instance {
    fn from_record(rec: InstanceRecord) -> Result<Self> {
        let invalid = |message: String| Error::Validation {
            id: rec.id.clone(),
            message,
        };
        let prev_response = match &rec.prev_response {
            Some(s) => Some(ResponseType::from_str(s).map_err(invalid)?),
            None => None,
        };
        let lower = |ws: Vec<WordToken>| -> Vec<WordToken> {
            ws.into_iter()
                .map(|w| WordToken {
                    surface: w.surface.to_lowercase(),
                    ..w
                })
                .collect()
        };
        let mut inst = Instance {
            id: rec.id,
            user: rec.user,
            words: lower(rec.words),
            fixations: rec.fixations,
            speech_len_ms: rec.speech_len_ms,
            user_positions: rec.user_positions,
            visible_entity_count: rec.visible_entities,
            prev_response,
            coupled: rec.coupled,
            transcript_words: rec.transcript_words.map(lower),
        };
        inst.validate()?;
        inst.fixations = merge_fixations(&inst.fixations);
        Ok(inst)
    }

    fn to_record(&self) -> InstanceRecord {
        InstanceRecord {
            id: self.id.clone(),
            words: self.words.clone(),
            fixations: self.fixations.clone(),
            speech_len_ms: self.speech_len_ms,
            user: self.user.clone(),
            user_positions: self.user_positions.clone(),
            visible_entities: self.visible_entity_count,
            prev_response: self.prev_response.map(|r| r.as_str().to_string()),
            coupled: self.coupled,
            transcript_words: self.transcript_words.clone(),
        }
    }

    /// Checks the record-level invariants.
    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| {
            Err(Error::Validation {
                id: self.id.clone(),
                message,
            })
        };
        if self.id.is_empty() {
            return fail("empty id".into());
        }
        if self.user.is_empty() {
            return fail("empty user".into());
        }
        let streams = std::iter::once(("words", &self.words))
            .chain(self.transcript_words.iter().map(|t| ("transcript_words", t)));
        for (name, words) in streams {
            for w in words {
                if w.surface.trim().is_empty() {
                    return fail(format!("{name}: empty surface"));
                }
                if w.t_start < 0 {
                    return fail(format!("{name}: negative timestamp for `{}`", w.surface));
                }
            }
            if words.windows(2).any(|p| p[1].t_start < p[0].t_start) {
                return fail(format!("{name}: tokens not sorted by start time"));
            }
        }
        for f in &self.fixations {
            if f.entity.is_empty() {
                return fail("fixation with empty entity".into());
            }
            if f.t_start > f.t_end {
                return fail(format!(
                    "fixation on `{}` starts at {} after it ends at {}",
                    f.entity, f.t_start, f.t_end
                ));
            }
        }
        if self.fixations.windows(2).any(|p| p[1].t_start < p[0].t_start) {
            return fail("fixations not sorted by start time".into());
        }
        let has_words = !self.words.is_empty() || self.transcript_words.as_ref().is_some_and(|t| !t.is_empty());
        if has_words && self.speech_len_ms <= 0 {
            return fail("speech_len_ms must be positive when words are present".into());
        }
        if self.speech_len_ms < 0 {
            return fail("negative speech_len_ms".into());
        }
        let distinct: HashSet<&str> = self.fixations.iter().map(|f| f.entity.as_str()).collect();
        if self.visible_entity_count == 0 {
            return fail("visible_entities must be positive".into());
        }
        if (self.visible_entity_count as usize) < distinct.len() {
            return fail(format!(
                "visible_entities {} is below the {} distinct fixated entities",
                self.visible_entity_count,
                distinct.len()
            ));
        }
        if self.user_positions.iter().flatten().any(|c| !c.is_finite()) {
            return fail("non-finite user position".into());
        }
        Ok(())
    }

    pub fn word_stream(&self, source: Source) -> &[WordToken] {
        match source {
            Source::Recognized => &self.words,
            Source::Transcript => self.transcript_words.as_deref().unwrap_or(&self.words),
        }
    }

    pub fn content_words(&self, source: Source) -> impl Iterator<Item = &WordToken> {
        self.word_stream(source).iter().filter(|w| w.is_content)
    }
}

/// Collapses maximal runs of neighbouring fixations on the same entity.
pub fn merge_fixations(fixations: &[Fixation]) -> Vec<Fixation> {
    let mut out: Vec<Fixation> = Vec::with_capacity(fixations.len());
    for f in fixations {
        match out.last_mut() {
            Some(last) if last.entity == f.entity => {
                last.t_start = last.t_start.min(f.t_start);
                last.t_end = last.t_end.max(f.t_end);
            }
            _ => out.push(f.clone()),
        }
    }
    out
}

/// Content words of one stream paired with the merged fixations, keeping
/// timestamps for the temporal alignment models.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentPair {
    pub words: Vec<WordToken>,
    pub fixations: Vec<Fixation>,
}

impl ContentPair {
    pub fn from_instance(instance: &Instance, source: Source) -> Self {
        ContentPair {
            words: instance.content_words(source).cloned().collect(),
            fixations: merge_fixations(&instance.fixations),
        }
    }

    /// Trainers skip pairs with no words or no fixations.
    pub fn is_usable(&self) -> bool {
        !self.words.is_empty() && !self.fixations.is_empty()
    }
}

/// The word sequence `w` and entity sequence `e` of an instance.
pub fn content_sequences(instance: &Instance, source: Source) -> (Vec<String>, Vec<String>) {
    let w = instance.content_words(source).map(|t| t.surface.clone()).collect();
    let e = merge_fixations(&instance.fixations)
        .into_iter()
        .map(|f| f.entity)
        .collect();
    (w, e)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub instances: Vec<Instance>,
}

impl Corpus {
    pub fn new(instances: Vec<Instance>) -> Result<Self> {
        let mut seen = HashSet::new();
        for inst in &instances {
            inst.validate()?;
            if !seen.insert(inst.id.as_str()) {
                return Err(Error::Validation {
                    id: inst.id.clone(),
                    message: "duplicate instance id".into(),
                });
            }
        }
        Ok(Corpus { instances })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Distinct users in order of first appearance.
    pub fn users(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for inst in &self.instances {
            if seen.insert(inst.user.as_str()) {
                out.push(inst.user.as_str());
            }
        }
        out
    }

    pub fn user_instances<'a>(&'a self, user: &'a str) -> impl Iterator<Item = &'a Instance> + 'a {
        self.instances.iter().filter(move |i| i.user == user)
    }

    pub fn content_pairs(&self, source: Source) -> Vec<ContentPair> {
        self.instances
            .iter()
            .map(|i| ContentPair::from_instance(i, source))
            .collect()
    }

    pub fn from_reader(reader: impl BufRead) -> Result<Self> {
        let mut instances = Vec::new();
        let mut seen = HashSet::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: InstanceRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            let inst = Instance::from_record(rec)?;
            if !seen.insert(inst.id.clone()) {
                return Err(Error::Validation {
                    id: inst.id,
                    message: "duplicate instance id".into(),
                });
            }
            instances.push(inst);
        }
        let no_gaze = instances.iter().filter(|i| i.fixations.is_empty()).count();
        if no_gaze > 0 {
            log::warn!("{no_gaze} instance(s) have no gaze fixations and will be skipped in training");
        }
        Ok(Corpus { instances })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Corpus::from_reader(BufReader::new(file))
    }

    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        for inst in &self.instances {
            serde_json::to_writer(&mut out, &inst.to_record())?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }
}

/// Loads a JSON-lines corpus file.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    Corpus::load(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fx(e: &str, s: Millis, t: Millis) -> Fixation {
        Fixation::new(e, s, t)
    }

    const GOOD: &str = r#"{"id":"u1-0","words":[{"surface":"Purple","t_ms":100,"content":true},{"surface":"vase","t_ms":400,"content":true},{"surface":"the","t_ms":500,"content":false}],"fixations":[{"entity":"vase_purple","t_start_ms":0,"t_end_ms":300},{"entity":"vase_purple","t_start_ms":320,"t_end_ms":600}],"speech_len_ms":900,"user":"u1","user_positions":[[0,0,0]],"visible_entities":3,"prev_response":"describe","coupled":true,"transcript_words":null}
{"id":"u1-1","words":[],"fixations":[],"speech_len_ms":0,"user":"u1","user_positions":[],"visible_entities":1,"prev_response":null,"coupled":null,"transcript_words":null}
"#;

    #[test]
    fn merge_collapses_neighbouring_runs() {
        let merged = merge_fixations(&[fx("A", 100, 200), fx("A", 220, 400), fx("B", 450, 600)]);
        assert_eq!(merged, vec![fx("A", 100, 400), fx("B", 450, 600)]);
    }

    #[test]
    fn merge_keeps_separated_runs() {
        let input = vec![fx("A", 0, 100), fx("B", 120, 200), fx("A", 210, 300)];
        assert_eq!(merge_fixations(&input), input);
        assert!(merge_fixations(&[]).is_empty());
    }

    #[test]
    fn loads_two_line_file() {
        let corpus = Corpus::from_reader(GOOD.as_bytes()).unwrap();
        assert_eq!(corpus.len(), 2);
        let first = &corpus.instances[0];
        assert_eq!(first.words[0].surface, "purple");
        assert_eq!(first.fixations, vec![fx("vase_purple", 0, 600)]);
        assert_eq!(first.prev_response, Some(ResponseType::Describe));
        assert_eq!(corpus.users(), vec!["u1"]);
    }

    #[test]
    fn rejects_inverted_fixation() {
        let bad = GOOD
            .lines()
            .next()
            .unwrap()
            .replace(r#""t_end_ms":300"#, r#""t_end_ms":-5"#);
        match Corpus::from_reader(bad.as_bytes()) {
            Err(Error::Validation { id, .. }) => assert_eq!(id, "u1-0"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_response_type() {
        let bad = GOOD.lines().next().unwrap().replace("describe", "greet");
        let err = Corpus::from_reader(bad.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Validation { ref id, .. } if id == "u1-0"), "{err}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = format!("{}\n{{not json\n", GOOD.lines().next().unwrap());
        match Corpus::from_reader(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_fields_rejected() {
        let bad = GOOD
            .lines()
            .next()
            .unwrap()
            .replace(r#""id":"u1-0","#, r#""id":"u1-0","extra":1,"#);
        assert!(matches!(
            Corpus::from_reader(bad.as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let line = GOOD.lines().next().unwrap();
        let text = format!("{line}\n{line}\n");
        assert!(matches!(
            Corpus::from_reader(text.as_bytes()),
            Err(Error::Validation { .. })
        ));
    }

    #[test]
    fn visible_count_must_cover_fixated_entities() {
        let bad = GOOD
            .lines()
            .next()
            .unwrap()
            .replace(r#""visible_entities":3"#, r#""visible_entities":0"#);
        assert!(matches!(
            Corpus::from_reader(bad.as_bytes()),
            Err(Error::Validation { .. })
        ));
    }

    #[test]
    fn content_sequences_filter_function_words() {
        let corpus = Corpus::from_reader(GOOD.as_bytes()).unwrap();
        let (w, e) = content_sequences(&corpus.instances[0], Source::Recognized);
        assert_eq!(w, vec!["purple", "vase"]);
        assert_eq!(e, vec!["vase_purple"]);
        let (w, e) = content_sequences(&corpus.instances[1], Source::Transcript);
        assert!(w.is_empty() && e.is_empty());
    }

    #[test]
    fn vase_scene_entity_sequence() {
        let inst = Instance {
            id: "fig3".into(),
            user: "u".into(),
            words: vec![
                WordToken::new("there's", 0, false),
                WordToken::new("purple", 300, true),
                WordToken::new("vase", 700, true),
                WordToken::new("in", 900, false),
                WordToken::new("orange", 1100, true),
                WordToken::new("face", 1500, true),
            ],
            fixations: vec![
                fx("table_vase", 0, 200),
                fx("vase_purple", 250, 800),
                fx("vase_purple", 820, 900),
                fx("vase_greek3", 950, 1800),
            ],
            speech_len_ms: 2000,
            user_positions: vec![],
            visible_entity_count: 3,
            prev_response: None,
            coupled: None,
            transcript_words: None,
        };
        let (w, e) = content_sequences(&inst, Source::Recognized);
        assert_eq!(w, vec!["purple", "vase", "orange", "face"]);
        assert_eq!(e, vec!["table_vase", "vase_purple", "vase_greek3"]);
    }

    #[test]
    fn round_trips_through_jsonl() {
        let corpus = Corpus::from_reader(GOOD.as_bytes()).unwrap();
        let again = Corpus::from_reader(corpus.to_jsonl().as_bytes()).unwrap();
        assert_eq!(corpus, again);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn fixation_stream() -> impl Strategy<Value = Vec<Fixation>> {
            stream_with_gaps(1..50)
        }

        fn stream_with_gaps(gaps: std::ops::Range<i64>) -> impl Strategy<Value = Vec<Fixation>> {
            prop::collection::vec((0usize..3, gaps, 0i64..40), 0..20).prop_map(|steps| {
                let mut t = 0;
                steps
                    .into_iter()
                    .map(|(e, gap, dur)| {
                        t += gap;
                        let f = Fixation::new(["A", "B", "C"][e], t, t + dur);
                        t += dur;
                        f
                    })
                    .collect()
            })
        }

        proptest! {
            #[test]
            fn merge_is_idempotent(fs in fixation_stream()) {
                let once = merge_fixations(&fs);
                prop_assert_eq!(merge_fixations(&once), once.clone());
                prop_assert!(once.windows(2).all(|p| p[0].entity != p[1].entity));
            }

            #[test]
            fn merge_spans_cover_original_durations(fs in fixation_stream()) {
                // Non-overlapping runs: merged span per entity covers the summed dwell time.
                let merged = merge_fixations(&fs);
                for e in ["A", "B", "C"] {
                    let before: i64 = fs.iter().filter(|f| f.entity == e).map(Fixation::duration).sum();
                    let after: i64 = merged.iter().filter(|f| f.entity == e).map(Fixation::duration).sum();
                    prop_assert!(after >= before);
                }
            }

            #[test]
            fn merge_preserves_duration_of_contiguous_runs(fs in stream_with_gaps(0..1)) {
                let merged = merge_fixations(&fs);
                for e in ["A", "B", "C"] {
                    let before: i64 = fs.iter().filter(|f| f.entity == e).map(Fixation::duration).sum();
                    let after: i64 = merged.iter().filter(|f| f.entity == e).map(Fixation::duration).sum();
                    prop_assert_eq!(after, before);
                }
            }
        }
    }
}
