//! Grounding per-action verdicts to frames.
//!
//! For every frame the aligner (1) checks that the object is visible at all
//! via embedding similarity against "a photo of <name>" prompts, (2) asks a
//! vision scorer which nearby action the frame shows, (3) verifies the
//! chosen action's state description against the frame, and only then copies
//! that action's verdict row into the frame. Frames failing any step stay
//! Unassigned, except frames where the object is absent, which become
//! all-states-Negative.
//!
//! Scorers are pluggable; CI runs on the deterministic table-driven stub.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::llm::chain::ActionStateChain;
use crate::llm::client::{ChatMessage, ChatRequest, LabelerClient};
use crate::llm::parse::parse_true_false;
use crate::llm::prompts;
use crate::textnorm;
use crate::types::{PseudoLabelTimeline, StateVocabulary, TernaryLabel};

#[derive(Debug, Clone)]
pub struct AlignmentConfig {
    /// Slack added on both sides of a frame when collecting candidate
    /// actions, in seconds.
    pub delta_t_s: f64,
    /// Object-presence threshold on the maximum prompt similarity.
    pub background_threshold: f32,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        AlignmentConfig {
            delta_t_s: 10.0,
            background_threshold: 0.2,
        }
    }
}

impl AlignmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_t_s.is_finite() && self.delta_t_s >= 0.0) {
            return Err(Error::Validation(format!(
                "delta_t_s must be finite and non-negative, got {}",
                self.delta_t_s
            )));
        }
        if !(self.background_threshold.is_finite()
            && (0.0..=1.0).contains(&self.background_threshold))
        {
            return Err(Error::Validation(format!(
                "background_threshold must lie in [0, 1], got {}",
                self.background_threshold
            )));
        }
        Ok(())
    }
}

/// Per-frame answers from a vision backend. Implementations must be pure
/// functions of (video, frame, query) so reruns are deterministic.
pub trait FrameScorer: Sync {
    /// Answer the action-choice prompt for one frame.
    fn choose_action(&self, video_id: &str, frame: usize, prompt: &str) -> Result<String>;
    /// Answer the state-filter prompt for one frame.
    fn judge_state(&self, video_id: &str, frame: usize, prompt: &str) -> Result<String>;
    /// Similarity of the frame to each text prompt.
    fn similarities(&self, video_id: &str, frame: usize, prompts: &[String]) -> Result<Vec<f32>>;
}

/// Table-driven scorer answering from a JSON fixture. Keys are
/// `"<video_id>:<frame>"`; similarity values are comma-separated floats
/// aligned with the query prompts. Missing keys fall back to the configured
/// defaults, or error when no default is given.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StubScorer {
    #[serde(default)]
    pub choices: BTreeMap<String, String>,
    #[serde(default)]
    pub filters: BTreeMap<String, String>,
    #[serde(default)]
    pub similarities: BTreeMap<String, String>,
    #[serde(default)]
    pub default_choice: Option<String>,
    #[serde(default)]
    pub default_filter: Option<String>,
    #[serde(default)]
    pub default_similarity: Option<String>,
}

impl StubScorer {
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::MalformedLine {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)
            .map_err(|e| Error::Validation(format!("stub serialization: {e}")))?;
        bytes.push(b'\n');
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn frame_key(video_id: &str, frame: usize) -> String {
        format!("{video_id}:{frame}")
    }

    fn lookup<'a>(
        table: &'a BTreeMap<String, String>,
        default: &'a Option<String>,
        kind: &str,
        video_id: &str,
        frame: usize,
    ) -> Result<&'a str> {
        let key = StubScorer::frame_key(video_id, frame);
        table
            .get(&key)
            .or(default.as_ref())
            .map(|s| s.as_str())
            .ok_or_else(|| {
                Error::endpoint("scorer-stub", format!("no {kind} entry for {key}"))
            })
    }
}

impl FrameScorer for StubScorer {
    fn choose_action(&self, video_id: &str, frame: usize, _prompt: &str) -> Result<String> {
        StubScorer::lookup(&self.choices, &self.default_choice, "choice", video_id, frame)
            .map(str::to_string)
    }

    fn judge_state(&self, video_id: &str, frame: usize, _prompt: &str) -> Result<String> {
        StubScorer::lookup(&self.filters, &self.default_filter, "filter", video_id, frame)
            .map(str::to_string)
    }

    fn similarities(
        &self,
        video_id: &str,
        frame: usize,
        prompts: &[String],
    ) -> Result<Vec<f32>> {
        let raw = StubScorer::lookup(
            &self.similarities,
            &self.default_similarity,
            "similarity",
            video_id,
            frame,
        )?;
        let mut values = Vec::new();
        for field in raw.split(',') {
            let v: f32 = field.trim().parse().map_err(|_| {
                Error::endpoint(
                    "scorer-stub",
                    format!("bad similarity value {field:?} for {video_id}:{frame}"),
                )
            })?;
            values.push(v);
        }
        if values.is_empty() {
            return Err(Error::endpoint(
                "scorer-stub",
                format!("empty similarity list for {video_id}:{frame}"),
            ));
        }
        // Only the maximum matters downstream; repeat the last value if the
        // fixture provides fewer entries than prompts.
        while values.len() < prompts.len() {
            values.push(*values.last().unwrap());
        }
        Ok(values)
    }
}

/// Live vision backend speaking the chat protocol with an optional image
/// attachment. Frame pixels are outside this crate's scope, so requests
/// carry no payload unless an image provider is wired in by the caller;
/// embedding similarities have no chat equivalent and always error.
pub struct VlmScorer {
    pub client: LabelerClient,
}

impl FrameScorer for VlmScorer {
    fn choose_action(&self, video_id: &str, frame: usize, prompt: &str) -> Result<String> {
        self.client.complete_request(
            "vlm-choice",
            &ChatRequest {
                model: self.client.model().to_string(),
                messages: vec![ChatMessage {
                    role: "user".into(),
                    content: format!("[frame {frame} of {video_id}]\n{prompt}"),
                }],
                temperature: 0.0,
                image_b64: None,
            },
        )
    }

    fn judge_state(&self, video_id: &str, frame: usize, prompt: &str) -> Result<String> {
        self.client.complete_request(
            "vlm-boolean",
            &ChatRequest {
                model: self.client.model().to_string(),
                messages: vec![ChatMessage {
                    role: "user".into(),
                    content: format!("[frame {frame} of {video_id}]\n{prompt}"),
                }],
                temperature: 0.0,
                image_b64: None,
            },
        )
    }

    fn similarities(&self, video_id: &str, frame: usize, _prompts: &[String]) -> Result<Vec<f32>> {
        Err(Error::endpoint(
            "embedding-similarity",
            format!(
                "no live embedding backend is wired up (frame {frame} of {video_id}); \
                 use the stub scorer"
            ),
        ))
    }
}

/// Indices of the actions whose narration interval intersects the frame's
/// window `[t - delta_t, (t + 1) + delta_t]` (closed intervals, seconds).
pub fn candidate_actions(
    frame: usize,
    actions: &[crate::llm::chain::ManipulationAction],
    delta_t_s: f64,
) -> Vec<usize> {
    let win_lo = frame as f64 - delta_t_s;
    let win_hi = (frame + 1) as f64 + delta_t_s;
    actions
        .iter()
        .enumerate()
        .filter(|(_, a)| a.start_s <= win_hi && a.end_s >= win_lo)
        .map(|(i, _)| i)
        .collect()
}

/// Outcome of the per-frame action choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    Action(usize),
    Others,
}

/// Match a scorer answer against candidate summaries: exact normalized
/// equality first (including the "others" sentinel), then the highest
/// positive token overlap; anything else is Others and flagged unmatched.
pub fn select_action(
    answer: &str,
    candidates: &[usize],
    actions: &[crate::llm::chain::ManipulationAction],
) -> (Selection, bool) {
    let norm = textnorm::normalize(answer);
    if norm == "others" {
        return (Selection::Others, false);
    }
    for &i in candidates {
        if textnorm::normalize(&actions[i].summary) == norm {
            return (Selection::Action(i), false);
        }
    }
    let mut best: Option<(usize, f64)> = None;
    for &i in candidates {
        let overlap = textnorm::token_jaccard(answer, &actions[i].summary);
        if overlap > 0.0 && best.map_or(true, |(_, b)| overlap > b) {
            best = Some((i, overlap));
        }
    }
    match best {
        Some((i, _)) => (Selection::Action(i), false),
        None => (Selection::Others, true),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AlignStats {
    pub frames: usize,
    pub assigned_frames: usize,
    pub background_absent_frames: usize,
    pub others_frames: usize,
    pub no_candidate_frames: usize,
    pub unmatched_answers: usize,
    pub filtered_out_frames: usize,
    pub judge_parse_failures: usize,
    pub scorer_errors: usize,
    pub assignment_rate: f64,
}

enum FrameOutcome {
    Assigned(usize),
    BackgroundAbsent,
    NoCandidates,
    Others { unmatched: bool },
    FilteredOut { parse_failure: bool },
    ScorerError,
}

fn score_frame(
    chain: &ActionStateChain,
    scorer: &dyn FrameScorer,
    cfg: &AlignmentConfig,
    background_prompts: &[String],
    frame: usize,
) -> FrameOutcome {
    let video = &chain.video_id;
    let sims = match scorer.similarities(video, frame, background_prompts) {
        Ok(s) => s,
        Err(_) => return FrameOutcome::ScorerError,
    };
    let max_sim = sims.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    if !(max_sim >= cfg.background_threshold) {
        return FrameOutcome::BackgroundAbsent;
    }

    let candidates = candidate_actions(frame, &chain.actions, cfg.delta_t_s);
    if candidates.is_empty() {
        return FrameOutcome::NoCandidates;
    }
    let summaries: Vec<&str> = candidates.iter().map(|&i| chain.actions[i].summary.as_str()).collect();
    let choice_prompt = prompts::action_choice_prompt(&summaries);
    let answer = match scorer.choose_action(video, frame, &choice_prompt) {
        Ok(a) => a,
        Err(_) => return FrameOutcome::ScorerError,
    };
    let (selection, unmatched) = select_action(&answer, &candidates, &chain.actions);
    let action_index = match selection {
        Selection::Action(i) => i,
        Selection::Others => return FrameOutcome::Others { unmatched },
    };

    let description = &chain.descriptions[action_index].text;
    let filter_prompt = prompts::state_filter_prompt(&chain.actions[action_index].summary, description);
    let judged = match scorer.judge_state(video, frame, &filter_prompt) {
        Ok(j) => j,
        Err(_) => return FrameOutcome::ScorerError,
    };
    match parse_true_false(&judged) {
        Some(true) => FrameOutcome::Assigned(action_index),
        Some(false) => FrameOutcome::FilteredOut { parse_failure: false },
        None => FrameOutcome::FilteredOut { parse_failure: true },
    }
}

/// Align one chain onto `num_frames` frames.
pub fn align(
    chain: &ActionStateChain,
    num_frames: usize,
    vocab: &StateVocabulary,
    scorer: &dyn FrameScorer,
    cfg: &AlignmentConfig,
) -> Result<(PseudoLabelTimeline, AlignStats)> {
    cfg.validate()?;
    vocab.validate()?;
    if chain.num_states() != vocab.num_states() {
        return Err(Error::shape(
            format!("align states for {}", chain.video_id),
            vocab.num_states(),
            chain.num_states(),
        ));
    }
    if chain.descriptions.len() != chain.actions.len() {
        return Err(Error::shape(
            format!("align chain for {}", chain.video_id),
            chain.actions.len(),
            chain.descriptions.len(),
        ));
    }
    let background_prompts: Vec<String> = vocab
        .all_names()
        .iter()
        .map(|n| prompts::background_prompt(n))
        .collect();

    let outcomes = exec::ordered_map(num_frames, |t| {
        score_frame(chain, scorer, cfg, &background_prompts, t)
    });

    let k = vocab.num_states();
    let mut timeline = PseudoLabelTimeline::new(chain.video_id.clone(), num_frames, k);
    let mut stats = AlignStats {
        frames: num_frames,
        ..AlignStats::default()
    };
    for (t, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            FrameOutcome::Assigned(a) => {
                stats.assigned_frames += 1;
                for s in 0..k {
                    let label = chain.verdict(a, s);
                    if label.is_assigned() {
                        timeline.set(t, s, label, Some(format!("action:{a}")));
                    }
                }
            }
            FrameOutcome::BackgroundAbsent => {
                stats.background_absent_frames += 1;
                for s in 0..k {
                    timeline.set(t, s, TernaryLabel::Negative, Some("background".into()));
                }
            }
            FrameOutcome::NoCandidates => stats.no_candidate_frames += 1,
            FrameOutcome::Others { unmatched } => {
                stats.others_frames += 1;
                if unmatched {
                    stats.unmatched_answers += 1;
                }
            }
            FrameOutcome::FilteredOut { parse_failure } => {
                stats.filtered_out_frames += 1;
                if parse_failure {
                    stats.judge_parse_failures += 1;
                }
            }
            FrameOutcome::ScorerError => stats.scorer_errors += 1,
        }
    }
    stats.assignment_rate = timeline.assignment_rate();
    Ok((timeline, stats))
}
