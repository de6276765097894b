//! Logged interaction records and the events/catalog file formats.
//!
//! An events file is UTF-8 text, one event per line, TAB-separated:
//!
//! ```text
//! context_id <TAB> action_id <TAB> reward <TAB> context_features <TAB> action_features
//! ```
//!
//! Each feature list is a comma-separated sequence of `id:value` pairs where
//! `id` is either a raw decimal integer or a double-quoted token that gets
//! hashed with FNV-1a. `-` (or an empty field) denotes the empty list. Lines
//! beginning with `#` are comments; the special comment `#split` marks the
//! boundary between a training segment and a test segment. Events with only
//! four fields take their action features from an action catalog file
//! (`action_id <TAB> features` per line).
//!
//! Types here are immutable after construction and safe to share across
//! threads; parsing is independent per line.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::sparse::{hash_token, SparseVector};

/// Marker comment separating the train segment from the test segment.
pub const SPLIT_MARKER: &str = "#split";

/// One logged interaction: the displayed action and its observed reward.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggedEvent {
    pub context_id: String,
    pub action_id: String,
    pub reward: f64,
    pub context_features: SparseVector,
    pub action_features: SparseVector,
}

impl LoggedEvent {
    /// Validating constructor; rewards outside `[0, 1]` are rejected rather
    /// than clamped.
    pub fn new(
        context_id: impl Into<String>,
        action_id: impl Into<String>,
        reward: f64,
        context_features: SparseVector,
        action_features: SparseVector,
    ) -> Result<Self> {
        let context_id = context_id.into();
        let action_id = action_id.into();
        for (label, id) in [("context_id", &context_id), ("action_id", &action_id)] {
            if id.is_empty() {
                return Err(Error::Format(format!("empty {label}")));
            }
            if id.contains(['\t', '\n']) {
                return Err(Error::Format(format!("{label} {id:?} contains TAB or newline")));
            }
        }
        if !reward.is_finite() || !(0.0..=1.0).contains(&reward) {
            return Err(Error::Format(format!(
                "reward {reward} outside [0, 1] for context {context_id:?}"
            )));
        }
        Ok(Self {
            context_id,
            action_id,
            reward,
            context_features,
            action_features,
        })
    }
}

/// An ordered log of T events, preserved exactly as ingested.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    events: Vec<LoggedEvent>,
}

impl Dataset {
    pub fn new(events: Vec<LoggedEvent>) -> Self {
        Self { events }
    }

    pub fn events(&self) -> &[LoggedEvent] {
        &self.events
    }

    /// Number of logged events (T).
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LoggedEvent> {
        self.events.iter()
    }
}

/// Map from action id to its feature vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ActionCatalog {
    features: BTreeMap<String, SparseVector>,
}

impl ActionCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, action_id: impl Into<String>, features: SparseVector) {
        self.features.insert(action_id.into(), features);
    }

    pub fn get(&self, action_id: &str) -> Option<&SparseVector> {
        self.features.get(action_id)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &SparseVector)> {
        self.features.iter().map(|(id, f)| (id.as_str(), f))
    }

    /// Collect the action features observed in a dataset. Later occurrences
    /// of an action id overwrite earlier ones.
    pub fn from_dataset(data: &Dataset) -> Self {
        let mut catalog = Self::new();
        for event in data.iter() {
            catalog.insert(event.action_id.clone(), event.action_features.clone());
        }
        catalog
    }

    /// Entries of `other` that are absent here are added; existing entries win.
    pub fn absorb(&mut self, other: &ActionCatalog) {
        for (id, f) in other.iter() {
            self.features.entry(id.to_string()).or_insert_with(|| f.clone());
        }
    }

    /// Parse a catalog file: `action_id <TAB> features` per line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut catalog = Self::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.splitn(2, '\t');
            let action_id = parts.next().unwrap_or("");
            let features = parts.next().ok_or_else(|| {
                Error::Format(format!("line {}: catalog row needs 2 fields", lineno + 1))
            })?;
            if action_id.is_empty() {
                return Err(Error::Format(format!("line {}: empty action_id", lineno + 1)));
            }
            let features = parse_feature_list(features)
                .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
            catalog.insert(action_id, features);
        }
        Ok(catalog)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (id, f) in self.iter() {
            let _ = writeln!(out, "{id}\t{}", format_feature_list(f));
        }
        out
    }
}

/// A parsed events file: the dataset plus the optional train/test boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct EventsFile {
    pub dataset: Dataset,
    /// Index of the first test event, when the file carries a `#split` marker.
    pub split_at: Option<usize>,
}

impl EventsFile {
    /// Events before the split marker.
    pub fn train(&self) -> Result<Dataset> {
        let at = self.require_split()?;
        Ok(Dataset::new(self.dataset.events()[..at].to_vec()))
    }

    /// Events after the split marker.
    pub fn test(&self) -> Result<Dataset> {
        let at = self.require_split()?;
        Ok(Dataset::new(self.dataset.events()[at..].to_vec()))
    }

    fn require_split(&self) -> Result<usize> {
        self.split_at
            .ok_or_else(|| Error::Config("events file has no #split marker".into()))
    }
}

/// Parse a single feature list (`id:value,...`, `-`, or empty).
pub fn parse_feature_list(text: &str) -> Result<SparseVector> {
    let text = text.trim();
    if text.is_empty() || text == "-" {
        return Ok(SparseVector::empty());
    }
    let mut entries = Vec::new();
    for pair in text.split(',') {
        let (id_part, value_part) = pair
            .rsplit_once(':')
            .ok_or_else(|| Error::Format(format!("feature {pair:?} is not id:value")))?;
        let id = if let Some(token) = id_part.strip_prefix('"') {
            let token = token
                .strip_suffix('"')
                .ok_or_else(|| Error::Format(format!("unterminated quoted token {id_part:?}")))?;
            hash_token(token)
        } else {
            id_part
                .parse::<u64>()
                .map_err(|_| Error::Format(format!("bad feature id {id_part:?}")))?
        };
        let value = value_part
            .parse::<f64>()
            .map_err(|_| Error::Format(format!("bad feature value {value_part:?}")))?;
        entries.push((id, value));
    }
    SparseVector::canonicalize(entries)
}

/// Render a feature list with raw integer ids; empty lists render as `-`.
pub fn format_feature_list(v: &SparseVector) -> String {
    if v.is_empty() {
        return "-".to_string();
    }
    let mut out = String::new();
    for (i, (id, value)) in v.entries().iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{id}:{value}");
    }
    out
}

/// Parse an events file. `catalog` supplies action features for 4-field rows.
pub fn parse_events(text: &str, catalog: Option<&ActionCatalog>) -> Result<EventsFile> {
    let mut events = Vec::new();
    let mut split_at = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line == SPLIT_MARKER {
            if split_at.is_some() {
                return Err(Error::Format(format!(
                    "line {}: duplicate {SPLIT_MARKER} marker",
                    lineno + 1
                )));
            }
            split_at = Some(events.len());
            continue;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let event =
            parse_event_line(line, catalog).map_err(|e| match e {
                Error::Format(msg) => Error::Format(format!("line {}: {msg}", lineno + 1)),
                other => other,
            })?;
        events.push(event);
    }
    Ok(EventsFile {
        dataset: Dataset::new(events),
        split_at,
    })
}

fn parse_event_line(line: &str, catalog: Option<&ActionCatalog>) -> Result<LoggedEvent> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 4 && fields.len() != 5 {
        return Err(Error::Format(format!(
            "expected 4 or 5 TAB-separated fields, found {}",
            fields.len()
        )));
    }
    let reward = fields[2]
        .parse::<f64>()
        .map_err(|_| Error::Format(format!("bad reward {:?}", fields[2])))?;
    let context_features = parse_feature_list(fields[3])?;
    let action_features = if fields.len() == 5 {
        parse_feature_list(fields[4])?
    } else {
        let catalog = catalog.ok_or_else(|| {
            Error::Format("event omits action features and no catalog was given".into())
        })?;
        catalog
            .get(fields[1])
            .cloned()
            .ok_or_else(|| Error::Format(format!("action {:?} not in catalog", fields[1])))?
    };
    LoggedEvent::new(fields[0], fields[1], reward, context_features, action_features)
}

/// Render a dataset back to the events file format, reinserting the split
/// marker when given. Feature values use the shortest round-trip decimal
/// form, so parse(write(d)) == d exactly.
pub fn write_events(data: &Dataset, split_at: Option<usize>) -> String {
    let mut out = String::new();
    for (i, event) in data.iter().enumerate() {
        if split_at == Some(i) {
            out.push_str(SPLIT_MARKER);
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            event.context_id,
            event.action_id,
            event.reward,
            format_feature_list(&event.context_features),
            format_feature_list(&event.action_features),
        );
    }
    if split_at == Some(data.len()) {
        out.push_str(SPLIT_MARKER);
        out.push('\n');
    }
    out
}
