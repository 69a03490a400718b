//! Optional HTTP metadata lookup for watched videos, with an on-disk cache.

use std::collections::{BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::provider::{video_id_from_url, CategoryProvider, Lookup, ADULT, NEWS};
use crate::ingest::{ActivityEvent, EventKind};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    /// URL template; `{id}` and `{key}` are substituted.
    pub endpoint: String,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    pub cache_path: Option<PathBuf>,
    pub min_interval_ms: u64,
    pub timeout_ms: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            api_key_env: "METADATA_API_KEY".into(),
            cache_path: None,
            min_interval_ms: 100,
            timeout_ms: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoMetadata {
    pub id: String,
    pub title: String,
    pub category: String,
}

#[derive(Debug)]
enum FetchError {
    Transport(String),
    Malformed(String),
}

pub struct MetadataClient {
    config: RemoteConfig,
    key: Option<String>,
    agent: ureq::Agent,
    cache: RwLock<HashMap<String, VideoMetadata>>,
    cache_file: Mutex<Option<File>>,
    last_call: Mutex<Option<Instant>>,
    network_calls: AtomicUsize,
}

impl MetadataClient {
    pub fn new(config: RemoteConfig) -> std::io::Result<Self> {
        let key = std::env::var(&config.api_key_env).ok();
        if key.is_none() && config.endpoint.contains("{key}") {
            log::warn!(
                "{} is not set; remote lookups will likely fail",
                config.api_key_env
            );
        }
        let mut cache = HashMap::new();
        let mut cache_file = None;
        if let Some(path) = &config.cache_path {
            if path.exists() {
                for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    match serde_json::from_str::<VideoMetadata>(&line) {
                        Ok(m) => {
                            cache.insert(m.id.clone(), m);
                        }
                        Err(e) => {
                            log::warn!("{}:{}: skipping cache line: {e}", path.display(), i + 1)
                        }
                    }
                }
            }
            cache_file = Some(OpenOptions::new().create(true).append(true).open(path)?);
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            config,
            key,
            agent,
            cache: RwLock::new(cache),
            cache_file: Mutex::new(cache_file),
            last_call: Mutex::new(None),
            network_calls: AtomicUsize::new(0),
        })
    }

    /// HTTP requests issued so far (cache hits excluded).
    pub fn network_calls(&self) -> usize {
        self.network_calls.load(Ordering::Relaxed)
    }

    pub fn cached(&self, id: &str) -> Option<VideoMetadata> {
        self.cache.read().unwrap().get(id).cloned()
    }

    fn throttle(&self) {
        let mut last = self.last_call.lock().unwrap();
        let gap = Duration::from_millis(self.config.min_interval_ms);
        if let Some(t) = *last {
            let since = t.elapsed();
            if since < gap {
                thread::sleep(gap - since);
            }
        }
        *last = Some(Instant::now());
    }

    fn fetch(&self, id: &str) -> Result<Option<VideoMetadata>, FetchError> {
        if let Some(hit) = self.cached(id) {
            return Ok(Some(hit));
        }
        let url = self
            .config
            .endpoint
            .replace("{id}", id)
            .replace("{key}", self.key.as_deref().unwrap_or(""));
        self.throttle();
        self.network_calls.fetch_add(1, Ordering::Relaxed);
        let mut resp = self
            .agent
            .get(&url)
            .call()
            .map_err(|e| FetchError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 404 {
            return Ok(None);
        }
        if status != 200 {
            return Err(FetchError::Transport(format!("HTTP {status}")));
        }
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| FetchError::Transport(e.to_string()))?;
        let doc: Value =
            serde_json::from_str(&body).map_err(|e| FetchError::Malformed(e.to_string()))?;
        let Some(meta) = parse_metadata(id, &doc)? else {
            return Ok(None);
        };
        self.store(&meta);
        Ok(Some(meta))
    }

    fn store(&self, meta: &VideoMetadata) {
        let mut cache = self.cache.write().unwrap();
        if cache.contains_key(&meta.id) {
            return;
        }
        cache.insert(meta.id.clone(), meta.clone());
        if let Some(f) = self.cache_file.lock().unwrap().as_mut() {
            let line = serde_json::to_string(meta).expect("metadata serializes");
            if let Err(e) = writeln!(f, "{line}") {
                log::warn!("could not append to metadata cache: {e}");
            }
        }
    }
}

/// Accepts a flat `{title, category}` object or a video-list response with
/// `items[0].snippet.{title, categoryId}`.
fn parse_metadata(id: &str, doc: &Value) -> Result<Option<VideoMetadata>, FetchError> {
    let field = |v: &Value, k: &str| v.get(k).and_then(Value::as_str).map(str::to_owned);
    if let Some(items) = doc.get("items").and_then(Value::as_array) {
        let Some(snippet) = items.first().and_then(|i| i.get("snippet")) else {
            return Ok(None);
        };
        let title = field(snippet, "title")
            .ok_or_else(|| FetchError::Malformed("snippet without title".into()))?;
        let category = field(snippet, "categoryId")
            .map(|c| category_name(&c).to_owned())
            .unwrap_or_default();
        return Ok(Some(VideoMetadata {
            id: id.to_owned(),
            title,
            category,
        }));
    }
    match (field(doc, "title"), field(doc, "category")) {
        (Some(title), Some(category)) => Ok(Some(VideoMetadata {
            id: id.to_owned(),
            title,
            category,
        })),
        _ => Err(FetchError::Malformed("expected title and category".into())),
    }
}

fn category_name(id: &str) -> &str {
    match id {
        "1" => "Film & Animation",
        "10" => "Music",
        "17" => "Sports",
        "20" => "Gaming",
        "22" => "People & Blogs",
        "23" => "Comedy",
        "24" => "Entertainment",
        "25" => "News & Politics",
        "26" => "Howto & Style",
        "27" => "Education",
        "28" => "Science & Technology",
        other => other,
    }
}

/// Look up one video; failures are logged and reported as `None`.
pub fn fetch_video_metadata(id: &str, client: &MetadataClient) -> Option<VideoMetadata> {
    match client.fetch(id) {
        Ok(m) => m,
        Err(FetchError::Transport(e)) => {
            log::warn!("metadata lookup for {id} failed: {e}");
            None
        }
        Err(FetchError::Malformed(e)) => {
            log::warn!("metadata lookup for {id} returned a malformed response: {e}");
            None
        }
    }
}

fn content_tag(category: &str) -> Option<String> {
    let c = category.to_lowercase();
    if c.is_empty() {
        None
    } else if c.contains("news") {
        Some(NEWS.into())
    } else if c.contains("adult") {
        Some(ADULT.into())
    } else {
        Some(c)
    }
}

/// Tags watched videos by their remote category; other events get no tags.
pub struct RemoteProvider {
    client: MetadataClient,
}

impl RemoteProvider {
    pub fn new(client: MetadataClient) -> Self {
        Self { client }
    }

    pub fn client(&self) -> &MetadataClient {
        &self.client
    }
}

impl CategoryProvider for RemoteProvider {
    fn lookup(&self, event: &ActivityEvent) -> Lookup {
        if event.kind != EventKind::VideoWatch {
            return Lookup::empty();
        }
        let Some(id) = event.url.as_deref().and_then(video_id_from_url) else {
            return Lookup::empty();
        };
        match self.client.fetch(&id) {
            Ok(Some(m)) => Lookup::Tags(content_tag(&m.category).into_iter().collect()),
            Ok(None) => Lookup::Tags(BTreeSet::new()),
            Err(e) => {
                log::warn!("metadata lookup for {id} failed: {e:?}");
                Lookup::Unresolved
            }
        }
    }
}
