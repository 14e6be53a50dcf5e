//! Corpus curation: keep the videos whose title or narration mentions the
//! tracked object, whose narration uses at least one verb associated with the
//! object's states, and whose narration is not unreasonably long.
//!
//! The verb lexicon itself is bootstrapped once per category by asking the
//! language model to list verbs for every state sentence.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::client::LabelerClient;
use crate::llm::parse::two_column_rows;
use crate::llm::prompts;
use crate::textnorm;
use crate::types::{NarrationTranscript, StateVocabulary};

/// One candidate video prior to curation.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    pub video_id: String,
    pub title: String,
    pub transcript: NarrationTranscript,
}

impl VideoRecord {
    pub fn word_count(&self) -> usize {
        self.transcript.word_count()
    }
}

/// Verbs associated with each state of one category, index-aligned with the
/// vocabulary's state list. Verbs are lowercase single tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerbLexicon {
    pub states: Vec<String>,
    pub verbs: Vec<Vec<String>>,
}

impl VerbLexicon {
    /// Union of all verbs across states, first occurrence order, deduplicated.
    pub fn all_verbs(&self) -> Vec<&str> {
        let mut seen = std::collections::BTreeSet::new();
        let mut out = Vec::new();
        for list in &self.verbs {
            for v in list {
                if seen.insert(v.as_str()) {
                    out.push(v.as_str());
                }
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)
            .map_err(|e| Error::Validation(format!("lexicon serialization: {e}")))?;
        bytes.push(b'\n');
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::MalformedLine {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }
}

/// Left-anchored stem used for inflection matching: the first four characters
/// of the verb, or the whole verb when shorter. "peel" matches "peeled" and
/// "peeling" but not "repeel".
pub fn verb_stem(verb: &str) -> String {
    let norm = textnorm::normalize(verb);
    norm.chars().take(4.min(norm.chars().count())).collect()
}

/// Whether any token of `text` starts with any of `stems`.
fn matches_any_stem(text: &str, stems: &[String]) -> bool {
    textnorm::tokens(text)
        .iter()
        .any(|tok| stems.iter().any(|s| !s.is_empty() && tok.starts_with(s.as_str())))
}

#[derive(Debug, Clone)]
pub struct CurateConfig {
    /// Maximum narration length in whitespace-delimited words.
    pub max_words: usize,
    /// Require the object mention in both the title and the narration
    /// instead of either.
    pub require_title_and_narration: bool,
}

impl Default for CurateConfig {
    fn default() -> Self {
        CurateConfig {
            max_words: 12_000,
            require_title_and_narration: false,
        }
    }
}

/// Where the object mention was found for a kept video.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchedIn {
    Title,
    Narration,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuratedVideo {
    pub video_id: String,
    pub title: String,
    pub word_count: usize,
    pub matched_in: MatchedIn,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CurateStats {
    pub total: usize,
    pub kept: usize,
    pub dropped_no_object_mention: usize,
    pub dropped_no_verb: usize,
    pub dropped_too_long: usize,
}

#[derive(Debug, Clone)]
pub struct CurationReport {
    /// Kept videos in input order, paired with their match diagnostics.
    pub kept: Vec<(VideoRecord, CuratedVideo)>,
    pub stats: CurateStats,
}

/// Filter `records`, preserving input order. Checks run in a fixed order
/// (object mention, verb, length) and each dropped video is counted once
/// under the first check it fails.
pub fn curate(
    records: Vec<VideoRecord>,
    vocab: &StateVocabulary,
    lexicon: &VerbLexicon,
    cfg: &CurateConfig,
) -> Result<CurationReport> {
    vocab.validate()?;
    let stems: Vec<String> = lexicon.all_verbs().iter().map(|v| verb_stem(v)).collect();
    if stems.is_empty() {
        return Err(Error::Validation("verb lexicon is empty".into()));
    }
    let name = &vocab.object_primary_name;
    let mut kept = Vec::new();
    let mut stats = CurateStats {
        total: records.len(),
        ..CurateStats::default()
    };
    for record in records {
        let narration_text: String = record
            .transcript
            .sentences
            .iter()
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        let in_title = textnorm::contains_token_seq(&record.title, name);
        let in_narration = textnorm::contains_token_seq(&narration_text, name);
        let mentioned = if cfg.require_title_and_narration {
            in_title && in_narration
        } else {
            in_title || in_narration
        };
        if !mentioned {
            stats.dropped_no_object_mention += 1;
            continue;
        }
        if !matches_any_stem(&narration_text, &stems) {
            stats.dropped_no_verb += 1;
            continue;
        }
        let word_count = record.word_count();
        if word_count > cfg.max_words {
            stats.dropped_too_long += 1;
            continue;
        }
        let matched_in = match (in_title, in_narration) {
            (true, true) => MatchedIn::Both,
            (true, false) => MatchedIn::Title,
            _ => MatchedIn::Narration,
        };
        let curated = CuratedVideo {
            video_id: record.video_id.clone(),
            title: record.title.clone(),
            word_count,
            matched_in,
        };
        kept.push((record, curated));
    }
    stats.kept = kept.len();
    Ok(CurationReport { kept, stats })
}

/// Ask the language model for verbs associated with every state sentence and
/// assemble the per-state lexicon. Response rows whose first column does not
/// reproduce one of the state sentences are skipped and counted.
pub fn build_verb_lexicon(
    client: &LabelerClient,
    vocab: &StateVocabulary,
) -> Result<(VerbLexicon, usize)> {
    vocab.validate()?;
    let prompt = prompts::verb_list_prompt(&vocab.states);
    let response = client.complete("verb-lexicon", &prompt)?;
    let (rows, mut skipped) = two_column_rows(&response, false);
    let mut verbs: Vec<Vec<String>> = vec![Vec::new(); vocab.states.len()];
    for (state_text, verb_list) in rows {
        let norm = textnorm::normalize(&state_text);
        let Some(idx) = vocab
            .states
            .iter()
            .position(|s| textnorm::normalize(&s.state_text) == norm)
        else {
            skipped += 1;
            continue;
        };
        for verb in verb_list.split(',') {
            let v = textnorm::normalize(verb);
            if v.is_empty() || v.contains(' ') {
                continue;
            }
            if !verbs[idx].contains(&v) {
                verbs[idx].push(v);
            }
        }
    }
    let lexicon = VerbLexicon {
        states: vocab.states.iter().map(|s| s.name.clone()).collect(),
        verbs,
    };
    Ok((lexicon, skipped))
}
