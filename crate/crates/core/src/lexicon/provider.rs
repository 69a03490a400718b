//! Content-category providers.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io;
use std::path::Path;

use url::Url;

use super::for_each_token;
use crate::ingest::ActivityEvent;

pub const ADULT: &str = "adult";
pub const NEWS: &str = "news";

/// A provider verdict. `Unresolved` means the provider could not answer
/// (e.g. a transport failure), which is different from "no category".
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Lookup {
    Tags(BTreeSet<String>),
    Unresolved,
}

impl Lookup {
    pub fn empty() -> Self {
        Lookup::Tags(BTreeSet::new())
    }

    pub fn has(&self, tag: &str) -> bool {
        matches!(self, Lookup::Tags(t) if t.contains(tag))
    }
}

pub trait CategoryProvider: Send + Sync {
    fn lookup(&self, event: &ActivityEvent) -> Lookup;
}

pub fn categorize_event(event: &ActivityEvent, provider: &dyn CategoryProvider) -> Lookup {
    provider.lookup(event)
}

#[derive(Debug, Clone)]
struct OfflineCategory {
    name: String,
    domains: HashSet<String>,
    words: HashSet<String>,
    phrases: Vec<Vec<String>>,
}

/// Matches URL hosts against domain lists and text against keyword lists.
#[derive(Debug, Clone, Default)]
pub struct OfflineProvider {
    categories: Vec<OfflineCategory>,
}

fn entries(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

fn tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut buf = String::new();
    for_each_token(text, &mut buf, |t| out.push(t.to_owned()));
    out
}

impl OfflineProvider {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add a category from the contents of its domain and keyword files.
    pub fn with_category(mut self, name: &str, domains: &str, keywords: &str) -> Self {
        let mut cat = OfflineCategory {
            name: name.to_lowercase(),
            domains: entries(domains)
                .map(|d| d.trim_start_matches("www.").to_lowercase())
                .collect(),
            words: HashSet::new(),
            phrases: Vec::new(),
        };
        for k in entries(keywords) {
            let t = tokens(k);
            match t.len() {
                0 => {}
                1 => {
                    cat.words.insert(t.into_iter().next().unwrap());
                }
                _ => cat.phrases.push(t),
            }
        }
        self.categories.push(cat);
        self
    }

    /// The demonstration adult/news lists shipped with the crate.
    pub fn bundled() -> Self {
        Self::new()
            .with_category(
                ADULT,
                include_str!("../../data/adult.domains"),
                include_str!("../../data/adult.keywords"),
            )
            .with_category(
                NEWS,
                include_str!("../../data/news.domains"),
                include_str!("../../data/news.keywords"),
            )
    }

    /// Load `<category>.domains` and `<category>.keywords` files from a
    /// directory; either file may be absent.
    pub fn load_dir(dir: &Path) -> io::Result<Self> {
        let mut names = BTreeSet::new();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            let ext = path.extension().and_then(|e| e.to_str());
            if matches!(ext, Some("domains" | "keywords")) {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    names.insert(stem.to_owned());
                }
            }
        }
        let read = |name: &str, ext: &str| -> io::Result<String> {
            match fs::read_to_string(dir.join(format!("{name}.{ext}"))) {
                Ok(s) => Ok(s),
                Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(String::new()),
                Err(e) => Err(e),
            }
        };
        let mut out = Self::new();
        for name in names {
            out = out.with_category(&name, &read(&name, "domains")?, &read(&name, "keywords")?);
        }
        Ok(out)
    }

    fn host_matches(domains: &HashSet<String>, host: &str) -> bool {
        let mut h = host;
        loop {
            if domains.contains(h) {
                return true;
            }
            match h.find('.') {
                Some(i) => h = &h[i + 1..],
                None => return false,
            }
        }
    }
}

impl CategoryProvider for OfflineProvider {
    fn lookup(&self, event: &ActivityEvent) -> Lookup {
        let host = event
            .url
            .as_deref()
            .and_then(|u| Url::parse(u).ok())
            .and_then(|u| u.host_str().map(str::to_lowercase));
        let words = tokens(&event.text);
        let mut tags = BTreeSet::new();
        for cat in &self.categories {
            let by_host = host
                .as_deref()
                .is_some_and(|h| Self::host_matches(&cat.domains, h));
            let by_word = words.iter().any(|w| cat.words.contains(w))
                || cat
                    .phrases
                    .iter()
                    .any(|p| words.windows(p.len()).any(|w| w == p.as_slice()));
            if by_host || by_word {
                tags.insert(cat.name.clone());
            }
        }
        Lookup::Tags(tags)
    }
}

/// Unions the tags of several providers. The event is unresolved only when
/// no provider resolves it.
pub struct PooledProvider {
    providers: Vec<Box<dyn CategoryProvider>>,
}

impl PooledProvider {
    pub fn new(providers: Vec<Box<dyn CategoryProvider>>) -> Self {
        Self { providers }
    }
}

impl CategoryProvider for PooledProvider {
    fn lookup(&self, event: &ActivityEvent) -> Lookup {
        let mut tags = BTreeSet::new();
        let mut resolved = self.providers.is_empty();
        for p in &self.providers {
            if let Lookup::Tags(t) = p.lookup(event) {
                resolved = true;
                tags.extend(t);
            }
        }
        if resolved {
            Lookup::Tags(tags)
        } else {
            Lookup::Unresolved
        }
    }
}

fn valid_video_id(id: &str) -> bool {
    id.len() == 11
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

/// Video id from `youtube.com/watch?v=`, `youtu.be/`, `/shorts/` and
/// `/embed/` URL shapes.
pub fn video_id_from_url(url: &str) -> Option<String> {
    let u = Url::parse(url).ok()?;
    let host = u.host_str()?.to_lowercase();
    let host = host.strip_prefix("www.").unwrap_or(&host);
    let host = host.strip_prefix("m.").unwrap_or(host);
    let id = match host {
        "youtu.be" => u.path_segments()?.next()?.to_owned(),
        "youtube.com" | "music.youtube.com" | "youtube-nocookie.com" => {
            let mut segs = u.path_segments()?;
            match segs.next()? {
                "watch" => u.query_pairs().find(|(k, _)| k == "v")?.1.into_owned(),
                "shorts" | "embed" | "live" | "v" => segs.next()?.to_owned(),
                _ => return None,
            }
        }
        _ => return None,
    };
    valid_video_id(&id).then_some(id)
}
