//! Corpus loading and event-block extraction.
//!
//! A document is turned into a list of [`EventBlock`]s, each a
//! (subject, predicate, object) triple whose slots carry an element
//! [`Category`]. Blocks come either from an external extractor through the
//! JSON-Lines events format ([`load_events`] / [`save_events`]) or from the
//! built-in English heuristic ([`HeuristicExtractor`]).

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Role of an event element, and the node label used by the graph miner.
///
/// The declaration order is the label order used in DFS codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Category {
    Entity,
    Predicate,
    Argument,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Entity, Category::Predicate, Category::Argument];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Entity => "ENTITY",
            Category::Predicate => "PREDICATE",
            Category::Argument => "ARGUMENT",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "ENTITY" => Ok(Category::Entity),
            "PREDICATE" => Ok(Category::Predicate),
            "ARGUMENT" => Ok(Category::Argument),
            other => Err(format!(
                "unknown category {other:?} (allowed: ENTITY, PREDICATE, ARGUMENT)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EventElement {
    pub surface: String,
    pub category: Category,
}

impl EventElement {
    pub fn new(surface: impl Into<String>, category: Category) -> Self {
        Self {
            surface: surface.into(),
            category,
        }
    }
}

/// One extracted (subject, predicate, object) triple.
///
/// Subject and object slots may be absent; the predicate never is.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventBlock {
    pub doc_id: String,
    pub sentence_index: usize,
    pub elements: [Option<EventElement>; 3],
}

impl EventBlock {
    pub fn new(
        doc_id: impl Into<String>,
        sentence_index: usize,
        subject: Option<EventElement>,
        predicate: EventElement,
        object: Option<EventElement>,
    ) -> Self {
        Self {
            doc_id: doc_id.into(),
            sentence_index,
            elements: [subject, Some(predicate), object],
        }
    }

    pub fn subject(&self) -> Option<&EventElement> {
        self.elements[0].as_ref()
    }

    pub fn predicate(&self) -> &EventElement {
        self.elements[1]
            .as_ref()
            .expect("event block without predicate")
    }

    pub fn object(&self) -> Option<&EventElement> {
        self.elements[2].as_ref()
    }

    /// Present elements in slot order.
    pub fn present(&self) -> impl Iterator<Item = &EventElement> {
        self.elements.iter().flatten()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub label: Option<String>,
    /// Tokens keep their source casing; extraction lowercases surfaces.
    pub sentences: Vec<Vec<String>>,
}

impl Document {
    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub documents: Vec<Document>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.doc_id == doc_id)
    }

    /// Map from doc_id to label, for labeled documents.
    pub fn labels(&self) -> HashMap<String, String> {
        self.documents
            .iter()
            .filter_map(|d| d.label.clone().map(|l| (d.doc_id.clone(), l)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusFormat {
    /// One document per line; doc_id is the 1-based line number.
    PlainLines,
    /// `label<TAB>text` per line; doc_id is the 1-based line number.
    LabeledTsv,
}

impl FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "plain-lines" => Ok(CorpusFormat::PlainLines),
            "labeled-tsv" => Ok(CorpusFormat::LabeledTsv),
            other => Err(format!(
                "unknown corpus format {other:?} (allowed: plain-lines, labeled-tsv)"
            )),
        }
    }
}

pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text, format, path)
}

/// Parses corpus text. `origin` is only used in error messages.
pub fn parse_corpus(text: &str, format: CorpusFormat, origin: &Path) -> Result<Corpus> {
    if text.trim().is_empty() {
        return Err(Error::EmptyInput {
            path: origin.to_path_buf(),
        });
    }
    let mut documents = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let (label, body) = match format {
            CorpusFormat::PlainLines => (None, raw),
            CorpusFormat::LabeledTsv => {
                let (label, body) = raw.split_once('\t').ok_or_else(|| {
                    Error::parse(origin, line_no, "expected `label<TAB>text`, found no tab")
                })?;
                let label = label.trim();
                if label.is_empty() {
                    return Err(Error::parse(origin, line_no, "empty label"));
                }
                (Some(label.to_string()), body)
            }
        };
        let sentences = split_sentences(body);
        if sentences.is_empty() {
            return Err(Error::parse(origin, line_no, "document has no tokens"));
        }
        documents.push(Document {
            doc_id: line_no.to_string(),
            label,
            sentences,
        });
    }
    Ok(Corpus { documents })
}

/// Splits text on `.`, `!`, `?` and tokenizes on whitespace, trimming
/// surrounding punctuation from each token. Empty sentences are dropped.
pub fn split_sentences(text: &str) -> Vec<Vec<String>> {
    text.split(['.', '!', '?'])
        .map(|s| {
            s.split_whitespace()
                .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()))
                .filter(|t| !t.is_empty())
                .map(str::to_string)
                .collect::<Vec<_>>()
        })
        .filter(|s| !s.is_empty())
        .collect()
}

pub const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "an", "the", "and", "or", "but", "of", "on", "in", "at", "to", "for", "with", "by",
    "from", "as", "into", "onto", "over", "under", "about", "this", "that", "these", "those", "it",
    "its", "he", "she", "they", "them", "his", "her", "their", "we", "our", "you", "your", "i",
    "me", "my", "not", "no", "so", "then", "than", "very", "also", "just", "there", "here",
];

pub fn default_stopwords() -> HashSet<String> {
    DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect()
}

/// Reads a word list, one word per line; `#` starts a comment line.
pub fn load_word_list(path: impl AsRef<Path>) -> Result<HashSet<String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect())
}

/// Drops stopwords and tokens whose corpus frequency (case-folded) is below
/// `min_freq`. Sentences left empty are removed.
pub fn filter_vocabulary(corpus: &Corpus, stopwords: &HashSet<String>, min_freq: usize) -> Corpus {
    let mut freq: HashMap<String, usize> = HashMap::new();
    for doc in &corpus.documents {
        for tok in doc.sentences.iter().flatten() {
            *freq.entry(tok.to_lowercase()).or_default() += 1;
        }
    }
    let keep = |tok: &String| {
        let lower = tok.to_lowercase();
        !stopwords.contains(&lower) && freq.get(&lower).copied().unwrap_or(0) >= min_freq
    };
    let documents = corpus
        .documents
        .iter()
        .map(|doc| Document {
            doc_id: doc.doc_id.clone(),
            label: doc.label.clone(),
            sentences: doc
                .sentences
                .iter()
                .map(|s| s.iter().filter(|t| keep(t)).cloned().collect::<Vec<_>>())
                .filter(|s| !s.is_empty())
                .collect(),
        })
        .collect();
    Corpus { documents }
}

const VERB_LEXICON: &[&str] = &[
    "is",
    "are",
    "was",
    "were",
    "be",
    "been",
    "being",
    "am",
    "has",
    "have",
    "had",
    "do",
    "does",
    "did",
    "eat",
    "eats",
    "ate",
    "eaten",
    "sit",
    "sits",
    "sat",
    "make",
    "makes",
    "made",
    "take",
    "takes",
    "took",
    "taken",
    "give",
    "gives",
    "gave",
    "given",
    "go",
    "goes",
    "went",
    "gone",
    "get",
    "gets",
    "got",
    "see",
    "sees",
    "saw",
    "seen",
    "say",
    "says",
    "said",
    "win",
    "wins",
    "won",
    "lose",
    "loses",
    "lost",
    "play",
    "plays",
    "meet",
    "meets",
    "met",
    "buy",
    "buys",
    "bought",
    "sell",
    "sells",
    "sold",
    "lead",
    "leads",
    "led",
    "hold",
    "holds",
    "held",
    "run",
    "runs",
    "ran",
    "find",
    "finds",
    "found",
    "build",
    "builds",
    "built",
    "beat",
    "beats",
    "sign",
    "signs",
    "join",
    "joins",
    "leave",
    "leaves",
    "left",
    "visit",
    "visits",
    "hire",
    "hires",
    "fire",
    "fires",
    "open",
    "opens",
    "close",
    "closes",
    "launch",
    "launches",
    "report",
    "reports",
    "announce",
    "announces",
    "call",
    "calls",
    "tell",
    "tells",
    "told",
    "send",
    "sends",
    "sent",
    "pay",
    "pays",
    "paid",
    "write",
    "writes",
    "wrote",
    "written",
    "read",
    "reads",
    "drink",
    "drinks",
    "drank",
    "face",
    "faces",
    "back",
    "backs",
    "cut",
    "cuts",
    "raise",
    "raises",
    "acquire",
    "acquires",
    "sue",
    "sues",
    "attack",
    "attacks",
    "defeat",
    "defeats",
    "praise",
    "praises",
    "criticize",
    "criticizes",
    "support",
    "supports",
    "fund",
    "funds",
    "approve",
    "approves",
    "reject",
    "rejects",
    "release",
    "releases",
    "score",
    "scores",
    "host",
    "hosts",
    "chase",
    "chases",
    "help",
    "helps",
    "love",
    "loves",
    "like",
    "likes",
    "want",
    "wants",
    "need",
    "needs",
    "use",
    "uses",
    "study",
    "studies",
];

/// Suffixes that mark a token as verb-like, with the minimum token length
/// for the rule to fire.
const VERB_SUFFIXES: &[(&str, usize)] = &[
    ("ed", 4),
    ("ing", 5),
    ("izes", 6),
    ("ises", 6),
    ("ized", 6),
    ("ify", 5),
    ("ifies", 7),
];

/// Rule-based English SVO extractor.
///
/// Within a sentence (stopwords removed), runs of verb-like tokens form one
/// predicate whose last token is the main verb. The subject is the first
/// noun-like token between the previous predicate and this one (inherited
/// from the previous block when that span is empty or only holds the
/// previous object); the object is the first noun-like token after the
/// predicate and before the next one. A block is emitted only when a
/// subject or an object exists.
#[derive(Debug, Clone, Default)]
pub struct HeuristicExtractor {
    pub stopwords: HashSet<String>,
    pub entities: HashSet<String>,
}

impl HeuristicExtractor {
    pub fn new(stopwords: HashSet<String>) -> Self {
        Self {
            stopwords,
            entities: HashSet::new(),
        }
    }

    pub fn with_entities(mut self, entities: HashSet<String>) -> Self {
        self.entities = entities;
        self
    }

    pub fn is_verb_like(word: &str) -> bool {
        let lower = word.to_lowercase();
        VERB_LEXICON.contains(&lower.as_str())
            || VERB_SUFFIXES
                .iter()
                .any(|(suffix, min)| lower.len() >= *min && lower.ends_with(suffix))
    }

    fn element(&self, token: &str) -> EventElement {
        let lower = token.to_lowercase();
        let capitalized = token.chars().next().is_some_and(char::is_uppercase);
        let category = if capitalized || self.entities.contains(&lower) {
            Category::Entity
        } else {
            Category::Argument
        };
        EventElement::new(lower, category)
    }

    pub fn extract(&self, doc: &Document) -> Vec<EventBlock> {
        let mut blocks = Vec::new();
        for (sentence_index, sentence) in doc.sentences.iter().enumerate() {
            self.extract_sentence(&doc.doc_id, sentence_index, sentence, &mut blocks);
        }
        blocks
    }

    fn extract_sentence(
        &self,
        doc_id: &str,
        sentence_index: usize,
        sentence: &[String],
        out: &mut Vec<EventBlock>,
    ) {
        let content: Vec<&str> = sentence
            .iter()
            .map(String::as_str)
            .filter(|t| !self.stopwords.contains(&t.to_lowercase()))
            .filter(|t| t.chars().any(char::is_alphabetic))
            .collect();
        let verb: Vec<bool> = content.iter().map(|t| Self::is_verb_like(t)).collect();

        // (start, end) of each maximal run of verb-like tokens
        let mut runs = Vec::new();
        let mut i = 0;
        while i < content.len() {
            if verb[i] {
                let start = i;
                while i < content.len() && verb[i] {
                    i += 1;
                }
                runs.push((start, i));
            } else {
                i += 1;
            }
        }

        let mut prev_subject: Option<EventElement> = None;
        let mut prev_object_pos: Option<usize> = None;
        for (k, &(start, end)) in runs.iter().enumerate() {
            let seg_start = if k == 0 { 0 } else { runs[k - 1].1 };
            let next_start = runs.get(k + 1).map_or(content.len(), |r| r.0);

            let subject = (seg_start..start)
                .find(|&p| Some(p) != prev_object_pos)
                .map(|p| self.element(content[p]))
                .or_else(|| prev_subject.clone());
            let object_pos = (end..next_start).next();
            let object = object_pos.map(|p| self.element(content[p]));
            let predicate = EventElement::new(content[end - 1].to_lowercase(), Category::Predicate);

            if subject.is_some() || object.is_some() {
                out.push(EventBlock::new(
                    doc_id,
                    sentence_index,
                    subject.clone(),
                    predicate,
                    object,
                ));
            }
            prev_subject = subject;
            prev_object_pos = object_pos;
        }
    }
}

/// Extracts blocks with the default heuristic and the given stopword set.
pub fn extract_events_heuristic(doc: &Document, stopwords: &HashSet<String>) -> Vec<EventBlock> {
    HeuristicExtractor::new(stopwords.clone()).extract(doc)
}

/// Writes blocks as JSON Lines, one block per line.
pub fn write_events<W: Write>(mut w: W, blocks: &[EventBlock]) -> std::io::Result<()> {
    for block in blocks {
        serde_json::to_writer(&mut w, block)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_events(path: impl AsRef<Path>, blocks: &[EventBlock]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_events(&mut buf, blocks).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_events(path: impl AsRef<Path>) -> Result<Vec<EventBlock>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_events(&text, path)
}

/// Parses JSON-Lines events text, validating each block.
pub fn parse_events(text: &str, origin: &Path) -> Result<Vec<EventBlock>> {
    let mut blocks = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let value: Value = serde_json::from_str(line)
            .map_err(|e| Error::parse(origin, line_no, format!("invalid JSON: {e}")))?;
        blocks.push(block_from_value(&value).map_err(|msg| Error::parse(origin, line_no, msg))?);
    }
    Ok(blocks)
}

fn block_from_value(value: &Value) -> std::result::Result<EventBlock, String> {
    let obj = value.as_object().ok_or("expected a JSON object")?;
    for key in obj.keys() {
        if !matches!(key.as_str(), "doc_id" | "sentence_index" | "elements") {
            return Err(format!("field `{key}`: unknown field"));
        }
    }
    let doc_id = match obj.get("doc_id") {
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        Some(Value::String(_)) => return Err("field `doc_id`: must be non-empty".into()),
        Some(_) => return Err("field `doc_id`: expected a string".into()),
        None => return Err("field `doc_id`: missing".into()),
    };
    let sentence_index = match obj.get("sentence_index") {
        Some(v) => v
            .as_u64()
            .ok_or("field `sentence_index`: expected a non-negative integer")?
            as usize,
        None => return Err("field `sentence_index`: missing".into()),
    };
    let elements = match obj.get("elements") {
        Some(Value::Array(a)) => a,
        Some(_) => return Err("field `elements`: expected an array".into()),
        None => return Err("field `elements`: missing".into()),
    };
    if elements.len() != 3 {
        return Err(format!(
            "field `elements`: elements must have length 3 (found {})",
            elements.len()
        ));
    }
    let mut parsed: [Option<EventElement>; 3] = [None, None, None];
    for (slot, raw) in elements.iter().enumerate() {
        parsed[slot] =
            element_from_value(raw).map_err(|msg| format!("field `elements[{slot}]`: {msg}"))?;
    }
    if parsed[1].is_none() {
        return Err("field `elements[1]`: predicate must not be absent".into());
    }
    Ok(EventBlock {
        doc_id,
        sentence_index,
        elements: parsed,
    })
}

fn element_from_value(value: &Value) -> std::result::Result<Option<EventElement>, String> {
    let obj = match value {
        Value::Null => return Ok(None),
        Value::Object(o) => o,
        _ => return Err("expected an object or null".into()),
    };
    let surface = match obj.get("surface") {
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        Some(Value::String(_)) => {
            return Err("`surface` must be non-empty (use null for an absent slot)".into())
        }
        Some(_) => return Err("`surface` must be a string".into()),
        None => return Err("missing `surface`".into()),
    };
    let category = match obj.get("category") {
        Some(Value::String(s)) => s.parse::<Category>()?,
        Some(_) => return Err("`category` must be a string".into()),
        None => return Err("missing `category`".into()),
    };
    Ok(Some(EventElement { surface, category }))
}
