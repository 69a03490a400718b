//! Dictionary-based word counting and content-category tagging.

mod provider;
mod remote;

pub use provider::{
    categorize_event, video_id_from_url, CategoryProvider, Lookup, OfflineProvider, PooledProvider,
    ADULT, NEWS,
};
pub use remote::{
    fetch_video_metadata, MetadataClient, RemoteConfig, RemoteProvider, VideoMetadata,
};

use std::collections::{HashMap, HashSet};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LexiconError {
    #[error("no categories")]
    NoCategories,
    #[error("line {line}: duplicate category id {id}")]
    DuplicateId { line: usize, id: u32 },
    #[error("line {line}: duplicate category name {name:?}")]
    DuplicateName { line: usize, name: String },
    #[error("line {line}: interior wildcard in {pattern:?}")]
    InteriorWildcard { line: usize, pattern: String },
    #[error("line {line}: empty pattern")]
    EmptyPattern { line: usize },
    #[error("line {line}: unknown category id {id}")]
    UnknownId { line: usize, id: String },
    #[error("empty category {0:?}")]
    EmptyCategory(String),
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
}

/// The four dictionary dimensions analyzed downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dimension {
    PersonalConcern,
    NegativeEmotion,
    Social,
    Health,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [
        Dimension::PersonalConcern,
        Dimension::NegativeEmotion,
        Dimension::Social,
        Dimension::Health,
    ];

    /// Category names (lowercase) accepted for this dimension.
    pub fn aliases(self) -> &'static [&'static str] {
        match self {
            Dimension::PersonalConcern => &[
                "personal_concern",
                "persconc",
                "personal concerns",
                "personal",
            ],
            Dimension::NegativeEmotion => &["negative_emotion", "negemo", "negative emotion"],
            Dimension::Social => &["social", "social_words"],
            Dimension::Health => &["health", "health/illness", "health_illness"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Category {
    pub id: u32,
    pub name: String,
}

/// Parsed dictionary. Literal patterns match whole tokens; stems match any
/// token they prefix.
#[derive(Debug, Clone)]
pub struct Lexicon {
    categories: Vec<Category>,
    literals: HashMap<String, Vec<usize>>,
    stems: HashMap<String, Vec<usize>>,
    stem_lengths: Vec<usize>,
}

pub const DEMO_LEXICON: &str = include_str!("../../data/demo_lexicon.dic");

impl Lexicon {
    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        let name = name.to_lowercase();
        self.categories
            .iter()
            .position(|c| c.name.to_lowercase() == name)
    }

    pub fn dimension_index(&self, dim: Dimension) -> Option<usize> {
        dim.aliases().iter().find_map(|a| self.index_of(a))
    }

    /// The bundled demonstration dictionary. Not a clinical instrument.
    pub fn demo() -> Self {
        load_lexicon(DEMO_LEXICON).expect("bundled lexicon parses")
    }

    /// Drop one pattern (as written in the file) from every category.
    pub fn without_pattern(&self, pattern: &str) -> Self {
        let mut out = self.clone();
        match pattern.strip_suffix('*') {
            Some(stem) => {
                out.stems.remove(stem);
            }
            None => {
                out.literals.remove(pattern);
            }
        }
        out.refresh_stem_lengths();
        out
    }

    fn refresh_stem_lengths(&mut self) {
        let lens: HashSet<usize> = self.stems.keys().map(|k| k.chars().count()).collect();
        self.stem_lengths = lens.into_iter().collect();
        self.stem_lengths.sort_unstable();
    }

    fn for_each_match(&self, token: &str, mut f: impl FnMut(usize)) {
        if let Some(ids) = self.literals.get(token) {
            ids.iter().for_each(|&i| f(i));
        }
        for &len in &self.stem_lengths {
            let Some((end, _)) = token.char_indices().nth(len) else {
                if token.chars().count() == len {
                    if let Some(ids) = self.stems.get(token) {
                        ids.iter().for_each(|&i| f(i));
                    }
                }
                break;
            };
            if let Some(ids) = self.stems.get(&token[..end]) {
                ids.iter().for_each(|&i| f(i));
            }
        }
    }
}

/// Parse a `.dic`-style document: a `%`-delimited header of `id name` lines,
/// then `pattern id [id ...]` lines.
pub fn load_lexicon(document: &str) -> Result<Lexicon, LexiconError> {
    let mut lines = document
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    match lines.next() {
        None => return Err(LexiconError::NoCategories),
        Some((_, "%")) => {}
        Some((line, _)) => {
            return Err(LexiconError::Syntax {
                line,
                message: "expected '%' opening the category block".into(),
            })
        }
    }

    let mut categories = Vec::new();
    let mut by_id: HashMap<u32, usize> = HashMap::new();
    let mut closed = false;
    for (line, text) in lines.by_ref() {
        if text == "%" {
            closed = true;
            break;
        }
        let mut parts = text.split_whitespace();
        let id_text = parts.next().unwrap_or_default();
        let id: u32 = id_text.parse().map_err(|_| LexiconError::Syntax {
            line,
            message: format!("invalid category id {id_text:?}"),
        })?;
        let name = parts.collect::<Vec<_>>().join(" ");
        if name.is_empty() {
            return Err(LexiconError::Syntax {
                line,
                message: "category without a name".into(),
            });
        }
        if by_id.contains_key(&id) {
            return Err(LexiconError::DuplicateId { line, id });
        }
        if categories
            .iter()
            .any(|c: &Category| c.name.eq_ignore_ascii_case(&name))
        {
            return Err(LexiconError::DuplicateName { line, name });
        }
        by_id.insert(id, categories.len());
        categories.push(Category { id, name });
    }
    if !closed {
        return Err(LexiconError::Syntax {
            line: document.lines().count(),
            message: "unterminated category block".into(),
        });
    }
    if categories.is_empty() {
        return Err(LexiconError::NoCategories);
    }

    let mut literals: HashMap<String, Vec<usize>> = HashMap::new();
    let mut stems: HashMap<String, Vec<usize>> = HashMap::new();
    let mut used = vec![false; categories.len()];
    for (line, text) in lines {
        let mut parts = text.split_whitespace();
        let raw = parts.next().unwrap_or_default().to_lowercase();
        let (body, is_stem) = match raw.strip_suffix('*') {
            Some(b) => (b.to_owned(), true),
            None => (raw.clone(), false),
        };
        if body.contains('*') {
            return Err(LexiconError::InteriorWildcard { line, pattern: raw });
        }
        if body.is_empty() {
            return Err(LexiconError::EmptyPattern { line });
        }
        let mut ids = Vec::new();
        for tok in parts {
            let idx = tok
                .parse::<u32>()
                .ok()
                .and_then(|id| by_id.get(&id).copied())
                .ok_or_else(|| LexiconError::UnknownId {
                    line,
                    id: tok.to_owned(),
                })?;
            if !ids.contains(&idx) {
                ids.push(idx);
            }
        }
        if ids.is_empty() {
            return Err(LexiconError::Syntax {
                line,
                message: format!("pattern {raw:?} has no category"),
            });
        }
        let table = if is_stem { &mut stems } else { &mut literals };
        let entry = table.entry(body).or_default();
        for idx in ids {
            used[idx] = true;
            if !entry.contains(&idx) {
                entry.push(idx);
            }
        }
    }
    if let Some(i) = used.iter().position(|u| !u) {
        return Err(LexiconError::EmptyCategory(categories[i].name.clone()));
    }

    let mut lex = Lexicon {
        categories,
        literals,
        stems,
        stem_lengths: Vec::new(),
    };
    lex.refresh_stem_lengths();
    Ok(lex)
}

/// Hits per category (aligned with [`Lexicon::categories`]) and the token total.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LexiconCounts {
    pub counts: Vec<u64>,
    pub tokens: u64,
}

impl LexiconCounts {
    pub fn zeros(categories: usize) -> Self {
        Self {
            counts: vec![0; categories],
            tokens: 0,
        }
    }

    pub fn merge(&mut self, other: &LexiconCounts) {
        self.tokens += other.tokens;
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }
}

/// Calls `f` with each lowercase alphabetic run in `text`.
pub fn for_each_token(text: &str, buf: &mut String, mut f: impl FnMut(&str)) {
    buf.clear();
    for c in text.chars() {
        if c.is_alphabetic() {
            buf.extend(c.to_lowercase());
        } else if !buf.is_empty() {
            f(buf);
            buf.clear();
        }
    }
    if !buf.is_empty() {
        f(buf);
        buf.clear();
    }
}

/// Add the matches of one text to `acc`.
pub fn count_into(text: &str, lexicon: &Lexicon, acc: &mut LexiconCounts, buf: &mut String) {
    if acc.counts.len() != lexicon.categories.len() {
        acc.counts.resize(lexicon.categories.len(), 0);
    }
    let mut seen: Vec<usize> = Vec::new();
    for_each_token(text, buf, |tok| {
        acc.tokens += 1;
        seen.clear();
        lexicon.for_each_match(tok, |i| {
            if !seen.contains(&i) {
                seen.push(i);
                acc.counts[i] += 1;
            }
        });
    });
}

pub fn count_matches<I, S>(corpus: I, lexicon: &Lexicon) -> LexiconCounts
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut acc = LexiconCounts::zeros(lexicon.categories.len());
    let mut buf = String::new();
    for text in corpus {
        count_into(text.as_ref(), lexicon, &mut acc, &mut buf);
    }
    acc
}
