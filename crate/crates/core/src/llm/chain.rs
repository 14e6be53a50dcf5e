//! The three-stage labeling chain: extract manipulation actions from the
//! narration, trace the object's state description across actions, then ask
//! for a per-state yes/no/ambiguous verdict after every action.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exec;
use crate::llm::client::LabelerClient;
use crate::llm::parse::{self, two_column_rows, Phase, Verdict};
use crate::llm::prompts;
use crate::textnorm;
use crate::types::{NarrationTranscript, StateDef, StateVocabulary, TernaryLabel};

/// Sentences (stage a) and actions (stage b) are chunked into blocks of
/// this many items per request.
pub const BLOCK_SIZE: usize = 10;

/// Jaccard floor below which a support snippet is considered unmatched.
pub const SUPPORT_JACCARD_FLOOR: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManipulationAction {
    pub summary: String,
    pub support_text: String,
    pub start_s: f64,
    pub end_s: f64,
    /// Which stage (a) block produced the action.
    pub block_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDescription {
    /// Index into the action list this description follows.
    pub action_index: usize,
    pub text: String,
    /// Name the object is currently tracked under. The format constraint
    /// pins descriptions to "The <object> ...", so this is the vocabulary's
    /// primary name; drift shows up in the free text only.
    pub object_alias: String,
    /// True when the model's row was missing or malformed and the previous
    /// description was carried forward instead.
    pub repaired: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub malformed_extract_rows: usize,
    pub malformed_describe_rows: usize,
    pub malformed_infer_answers: usize,
    /// Support snippets that matched no sentence and fell back to the block
    /// interval.
    pub interval_fallbacks: usize,
}

/// Output of the full chain for one video: per-action verdicts for every
/// state, row-major `actions x states`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionStateChain {
    pub video_id: String,
    pub object: String,
    pub state_names: Vec<String>,
    pub actions: Vec<ManipulationAction>,
    pub descriptions: Vec<StateDescription>,
    pub verdicts: Vec<TernaryLabel>,
    pub stats: ChainStats,
}

impl ActionStateChain {
    pub fn num_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn verdict(&self, action: usize, state: usize) -> TernaryLabel {
        self.verdicts[action * self.state_names.len() + state]
    }
}

/// Locate the narration interval supporting an extracted action.
///
/// Sentences whose normalized text contains the normalized support snippet,
/// or is contained by it (the model may have concatenated several
/// sentences), all count as matches and their span is unioned. If nothing
/// matches exactly, the sentence with the highest token Jaccard overlap wins
/// provided it clears [`SUPPORT_JACCARD_FLOOR`]; otherwise the whole block's
/// span is used.
fn support_interval(
    support: &str,
    block: &[crate::types::NarrationSentence],
) -> (f64, f64, bool) {
    let support_norm = textnorm::normalize(support);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    if !support_norm.is_empty() {
        for s in block {
            let s_norm = textnorm::normalize(&s.text);
            if s_norm.is_empty() {
                continue;
            }
            if support_norm.contains(&s_norm) || s_norm.contains(&support_norm) {
                lo = lo.min(s.start_s);
                hi = hi.max(s.end_s);
            }
        }
    }
    if lo.is_finite() {
        return (lo, hi, false);
    }
    let mut best = (0usize, 0.0f64);
    for (i, s) in block.iter().enumerate() {
        let j = textnorm::token_jaccard(support, &s.text);
        if j > best.1 {
            best = (i, j);
        }
    }
    if best.1 >= SUPPORT_JACCARD_FLOOR {
        let s = &block[best.0];
        (s.start_s, s.end_s, false)
    } else {
        (
            block.first().map(|s| s.start_s).unwrap_or(0.0),
            block.last().map(|s| s.end_s).unwrap_or(0.0),
            true,
        )
    }
}

/// Stage (a): extract manipulation actions block by block.
pub fn extract_actions(
    client: &LabelerClient,
    transcript: &NarrationTranscript,
) -> Result<(Vec<ManipulationAction>, ChainStats)> {
    let mut actions = Vec::new();
    let mut stats = ChainStats::default();
    for (block_index, block) in transcript.sentences.chunks(BLOCK_SIZE).enumerate() {
        let lines: Vec<&str> = block.iter().map(|s| s.text.as_str()).collect();
        let prompt = prompts::action_extraction_prompt(&lines);
        let response = client.complete("extract", &prompt)?;
        let (rows, malformed) = two_column_rows(&response, true);
        stats.malformed_extract_rows += malformed;
        for (summary, support) in rows {
            let (start_s, end_s, fell_back) = support_interval(&support, block);
            if fell_back {
                stats.interval_fallbacks += 1;
            }
            actions.push(ManipulationAction {
                summary,
                support_text: support,
                start_s,
                end_s,
                block_index,
            });
        }
    }
    Ok((actions, stats))
}

fn starts_with_the_object(text: &str, object: &str) -> bool {
    let want = textnorm::tokens(&format!("the {object}"));
    let got = textnorm::tokens(text);
    got.len() >= want.len() && got[..want.len()] == want[..]
}

/// Stage (b): trace one state description per action, block by block,
/// threading the last description of each block into the next block's
/// prompt. Missing, extra, or malformed rows are repaired by carrying the
/// previous description forward and counted.
pub fn describe_states(
    client: &LabelerClient,
    object: &str,
    actions: &[ManipulationAction],
) -> Result<(Vec<StateDescription>, ChainStats)> {
    let mut stats = ChainStats::default();
    let mut descriptions: Vec<StateDescription> = Vec::with_capacity(actions.len());
    let mut previous = prompts::initial_state_seed(object);
    for block in actions.chunks(BLOCK_SIZE) {
        let summaries: Vec<&str> = block.iter().map(|a| a.summary.as_str()).collect();
        let prompt = prompts::state_description_prompt(object, &previous, &summaries);
        let response = client.complete("describe", &prompt)?;
        let (rows, malformed) = two_column_rows(&response, true);
        stats.malformed_describe_rows += malformed;
        if rows.len() > block.len() {
            stats.malformed_describe_rows += rows.len() - block.len();
        }
        for (offset, _action) in block.iter().enumerate() {
            let action_index = descriptions.len();
            let (text, repaired) = match rows.get(offset) {
                Some((_, desc)) if starts_with_the_object(desc, object) => {
                    (desc.clone(), false)
                }
                Some(_) => {
                    stats.malformed_describe_rows += 1;
                    (previous.clone(), true)
                }
                None => {
                    stats.malformed_describe_rows += 1;
                    (previous.clone(), true)
                }
            };
            previous = text.clone();
            descriptions.push(StateDescription {
                action_index,
                text,
                object_alias: object.to_string(),
                repaired,
            });
        }
    }
    Ok((descriptions, stats))
}

/// Stage (c): one request per (description, state) pair, each carrying the
/// full description history up to that action (optionally capped to the
/// most recent `context_cap` descriptions). Returns row-major
/// `actions x states` verdicts.
pub fn infer_labels(
    client: &LabelerClient,
    object: &str,
    descriptions: &[StateDescription],
    states: &[StateDef],
    context_cap: Option<usize>,
) -> Result<(Vec<TernaryLabel>, ChainStats)> {
    let k = states.len();
    let results = exec::ordered_map(descriptions.len() * k, |pair| {
        let (i, s) = (pair / k, pair % k);
        let lo = match context_cap {
            Some(cap) => (i + 1).saturating_sub(cap.max(1)),
            None => 0,
        };
        let history: Vec<&str> = descriptions[lo..=i].iter().map(|d| d.text.as_str()).collect();
        let prompt = prompts::label_inference_prompt(object, &history, &states[s]);
        client
            .complete("infer", &prompt)
            .map(|response| parse::parse_verdict(&response))
    });
    let mut stats = ChainStats::default();
    let mut verdicts = Vec::with_capacity(results.len());
    for r in results {
        let label = match r? {
            Some(Verdict::Yes) => TernaryLabel::Positive,
            Some(Verdict::No) => TernaryLabel::Negative,
            Some(Verdict::Ambiguous) => TernaryLabel::Unassigned,
            None => {
                stats.malformed_infer_answers += 1;
                TernaryLabel::Unassigned
            }
        };
        verdicts.push(label);
    }
    Ok((verdicts, stats))
}

/// Run the full chain for one video.
pub fn run_chain(
    client: &LabelerClient,
    vocab: &StateVocabulary,
    transcript: &NarrationTranscript,
    context_cap: Option<usize>,
) -> Result<ActionStateChain> {
    vocab.validate()?;
    let video = transcript.video_id.clone();
    let tag = |stage: &str, e: crate::Error| e.in_stage(stage, &video);
    let object = &vocab.object_primary_name;
    let (actions, stats_a) = extract_actions(client, transcript).map_err(|e| tag("extract", e))?;
    let (descriptions, stats_b) =
        describe_states(client, object, &actions).map_err(|e| tag("describe", e))?;
    let (verdicts, stats_c) =
        infer_labels(client, object, &descriptions, &vocab.states, context_cap)
            .map_err(|e| tag("infer", e))?;
    Ok(ActionStateChain {
        video_id: video,
        object: object.clone(),
        state_names: vocab.states.iter().map(|s| s.name.clone()).collect(),
        actions,
        descriptions,
        verdicts,
        stats: ChainStats {
            malformed_extract_rows: stats_a.malformed_extract_rows,
            malformed_describe_rows: stats_b.malformed_describe_rows,
            malformed_infer_answers: stats_c.malformed_infer_answers,
            interval_fallbacks: stats_a.interval_fallbacks,
        },
    })
}

/// Category description for the three-phase benchmark variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeItCategory {
    pub object: String,
    pub action: String,
    pub end_states: Vec<String>,
}

impl ChangeItCategory {
    pub fn end_state_phrase(&self) -> String {
        self.end_states.join(", ")
    }
}

/// Phase inference over descriptions: one request per description, answer
/// parsed by leading token; unparseable answers count as Ambiguous.
pub fn infer_phases(
    client: &LabelerClient,
    category: &ChangeItCategory,
    descriptions: &[StateDescription],
) -> Result<(Vec<Phase>, usize)> {
    let end_state = category.end_state_phrase();
    let results = exec::ordered_map(descriptions.len(), |i| {
        let history: Vec<&str> = descriptions[..=i].iter().map(|d| d.text.as_str()).collect();
        let prompt = prompts::changeit_inference_prompt(
            &category.object,
            &history,
            &category.action,
            &end_state,
        );
        client
            .complete("infer-phase", &prompt)
            .map(|response| parse::parse_phase(&response))
    });
    let mut phases = Vec::with_capacity(results.len());
    let mut malformed = 0;
    for r in results {
        match r? {
            Some(p) => phases.push(p),
            None => {
                malformed += 1;
                phases.push(Phase::Ambiguous);
            }
        }
    }
    Ok((phases, malformed))
}
