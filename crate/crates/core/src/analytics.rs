//! Session segmentation of composer event logs and suggestion adoption.

use std::collections::{BTreeSet, HashSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::textproc::tokenize;
use crate::{Error, Result};

/// Consecutive events further apart than this start a new session.
pub const SESSION_GAP_SECS: f64 = 1800.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Compose,
    TsiShown,
    Edit,
    Submit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UiEvent {
    pub advertiser_id: String,
    /// Seconds since the epoch.
    pub timestamp: f64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_before: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_after: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suggestions_shown: Option<Vec<String>>,
    /// Score shown with a `tsi_shown` event.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tsi: Option<u8>,
}

impl UiEvent {
    pub fn validate(&self) -> Result<()> {
        if self.advertiser_id.is_empty() {
            return Err(Error::InvalidArgument("advertiser_id must not be empty".into()));
        }
        if !(self.timestamp.is_finite() && self.timestamp >= 0.0) {
            return Err(Error::InvalidArgument(format!("bad timestamp {}", self.timestamp)));
        }
        if self.kind == EventKind::TsiShown && self.suggestions_shown.is_none() {
            return Err(Error::InvalidArgument("tsi_shown needs suggestions_shown".into()));
        }
        if self.tsi.is_some_and(|t| t > 1) {
            return Err(Error::InvalidArgument("tsi must be 0 or 1".into()));
        }
        Ok(())
    }

    /// The shown score; without an explicit value, a non-empty suggestion
    /// list implies a weak rating.
    pub fn shown_weak(&self) -> bool {
        self.kind == EventKind::TsiShown
            && match self.tsi {
                Some(t) => t == 0,
                None => self.suggestions_shown.as_ref().is_some_and(|s| !s.is_empty()),
            }
    }
}

pub fn load_events(path: &Path) -> Result<Vec<UiEvent>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(std::fs::File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ev: UiEvent = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        ev.validate().map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(ev);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub advertiser_id: String,
    pub events: Vec<UiEvent>,
}

/// Groups by advertiser in time order, splitting where the gap exceeds
/// [`SESSION_GAP_SECS`]. A gap of exactly the limit stays in the session.
pub fn sessionize(mut events: Vec<UiEvent>) -> Vec<Session> {
    events.sort_by(|a, b| {
        a.advertiser_id
            .cmp(&b.advertiser_id)
            .then_with(|| a.timestamp.total_cmp(&b.timestamp))
    });
    let mut sessions: Vec<Session> = Vec::new();
    for ev in events {
        match sessions.last_mut() {
            Some(s)
                if s.advertiser_id == ev.advertiser_id
                    && ev.timestamp - s.events.last().expect("sessions are non-empty").timestamp <= SESSION_GAP_SECS =>
            {
                s.events.push(ev)
            }
            _ => sessions.push(Session {
                advertiser_id: ev.advertiser_id.clone(),
                events: vec![ev],
            }),
        }
    }
    sessions
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Adoption {
    pub adopted: bool,
    pub tokens: BTreeSet<String>,
    /// Indices into the `suggestions_shown` list of the triggering event.
    pub suggestion_indices: BTreeSet<usize>,
}

fn token_set(text: &str) -> HashSet<String> {
    tokenize(text).into_iter().collect()
}

/// A suggestion is adopted when an edit or submit after it introduces a
/// non-stopword token that was absent before the suggestion was shown and
/// appears in one of the shown suggestions.
pub fn detect_adoption(session: &Session, stopwords: &HashSet<String>) -> Result<Adoption> {
    if !session.events.iter().any(|e| e.kind == EventKind::TsiShown) {
        return Err(Error::InvalidArgument("session has no tsi_shown event".into()));
    }
    let mut out = Adoption::default();
    let mut last_text: Option<&str> = None;
    for (i, ev) in session.events.iter().enumerate() {
        if ev.kind == EventKind::TsiShown {
            let before = ev.text_before.as_deref().or(last_text).unwrap_or("");
            let before = token_set(before);
            let shown: Vec<HashSet<String>> = ev
                .suggestions_shown
                .as_deref()
                .unwrap_or_default()
                .iter()
                .map(|s| token_set(s))
                .collect();
            for later in &session.events[i + 1..] {
                if !matches!(later.kind, EventKind::Edit | EventKind::Submit) {
                    continue;
                }
                let Some(after) = later.text_after.as_deref() else { continue };
                for t in tokenize(after) {
                    if stopwords.contains(&t) || before.contains(&t) {
                        continue;
                    }
                    let hits: Vec<usize> = (0..shown.len()).filter(|&j| shown[j].contains(&t)).collect();
                    if !hits.is_empty() {
                        out.tokens.insert(t);
                        out.suggestion_indices.extend(hits);
                    }
                }
            }
        }
        if let Some(t) = ev.text_after.as_deref() {
            last_text = Some(t);
        }
    }
    out.adopted = !out.tokens.is_empty();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub sessions: usize,
    /// Sessions where at least one shown rating was weak.
    pub recommended_sessions: usize,
    pub adopters: usize,
    pub rec_rate: f64,
    pub adoption_rate: f64,
    /// A rate had a zero denominator and was reported as 0.
    pub empty_denominator: bool,
}

pub fn report(sessions: &[Session], stopwords: &HashSet<String>) -> Result<Report> {
    let mut recommended = 0;
    let mut adopters = 0;
    for s in sessions {
        if s.events.iter().any(UiEvent::shown_weak) {
            recommended += 1;
            if detect_adoption(s, stopwords)?.adopted {
                adopters += 1;
            }
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    Ok(Report {
        sessions: sessions.len(),
        recommended_sessions: recommended,
        adopters,
        rec_rate: ratio(recommended, sessions.len()),
        adoption_rate: ratio(adopters, recommended),
        empty_denominator: sessions.is_empty() || recommended == 0,
    })
}
