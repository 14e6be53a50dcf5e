//! Domain types shared by every pipeline phase: the state vocabulary, the
//! narration transcript, frame-wise ternary label timelines, and dense
//! per-frame feature sequences, plus the frame-clock conversion that maps
//! narration seconds onto frame indices.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One trackable state of the object category, e.g. "peeled" for apples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDef {
    /// Short identifier, unique within the vocabulary ("whole", "peeled").
    pub name: String,
    /// Definition sentence used when asking whether the state holds.
    pub description: String,
    /// Full state sentence used verbatim in prompts ("The apple is peeled").
    pub state_text: String,
}

/// The object category under study together with its K states.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateVocabulary {
    /// Primary object name ("apple").
    pub object_primary_name: String,
    /// Alternative surface forms counted as mentions ("apples", "apple pie").
    #[serde(default)]
    pub object_secondary_names: Vec<String>,
    pub states: Vec<StateDef>,
}

impl StateVocabulary {
    pub fn validate(&self) -> Result<()> {
        if self.object_primary_name.trim().is_empty() {
            return Err(Error::Validation("empty primary object name".into()));
        }
        if self.states.is_empty() {
            return Err(Error::Validation("vocabulary has no states".into()));
        }
        let mut names: Vec<&str> = self.states.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.states.len() {
            return Err(Error::Validation("duplicate state names".into()));
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    /// Primary name followed by secondary names, in declaration order.
    pub fn all_names(&self) -> Vec<&str> {
        let mut names = vec![self.object_primary_name.as_str()];
        names.extend(self.object_secondary_names.iter().map(|s| s.as_str()));
        names
    }
}

/// One timestamped narration sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrationSentence {
    pub text: String,
    pub start_s: f64,
    pub end_s: f64,
}

impl NarrationSentence {
    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::Validation("empty narration sentence".into()));
        }
        if !(self.start_s.is_finite() && self.end_s.is_finite()) {
            return Err(Error::Validation("non-finite narration timestamp".into()));
        }
        if self.start_s < 0.0 {
            return Err(Error::Validation(format!(
                "negative narration start {}",
                self.start_s
            )));
        }
        if self.end_s <= self.start_s {
            return Err(Error::Validation(format!(
                "narration interval [{}, {}] is empty or reversed",
                self.start_s, self.end_s
            )));
        }
        Ok(())
    }
}

/// A whole video's narration, sorted by sentence start time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrationTranscript {
    pub video_id: String,
    pub duration_s: f64,
    pub sentences: Vec<NarrationSentence>,
}

impl NarrationTranscript {
    /// Sentence timestamps may overhang the nominal duration by up to one
    /// second (subtitle tracks routinely do); anything beyond that is an
    /// inconsistent record.
    pub fn validate(&self) -> Result<()> {
        if self.video_id.is_empty() {
            return Err(Error::Validation("empty video id".into()));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::Validation(format!(
                "invalid duration {}",
                self.duration_s
            )));
        }
        for s in &self.sentences {
            s.validate()?;
            if s.end_s > self.duration_s + 1.0 {
                return Err(Error::Validation(format!(
                    "sentence ending at {}s exceeds duration {}s by more than 1s",
                    s.end_s, self.duration_s
                )));
            }
        }
        if !self
            .sentences
            .windows(2)
            .all(|w| w[0].start_s <= w[1].start_s)
        {
            return Err(Error::Validation("sentences not sorted by start".into()));
        }
        Ok(())
    }

    pub fn word_count(&self) -> usize {
        self.sentences
            .iter()
            .map(|s| s.text.split_whitespace().count())
            .sum()
    }
}

/// Ternary frame-state label. `Unassigned` cells are excluded from every
/// loss and metric; they are not a third class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TernaryLabel {
    #[serde(rename = "pos")]
    Positive,
    #[serde(rename = "neg")]
    Negative,
    Unassigned,
}

impl TernaryLabel {
    pub fn is_assigned(self) -> bool {
        !matches!(self, TernaryLabel::Unassigned)
    }
}

/// Frame-wise ternary labels for one video: a T x K matrix where every
/// assigned cell also records which pipeline step produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelTimeline {
    pub video_id: String,
    pub num_frames: usize,
    pub num_states: usize,
    labels: Vec<TernaryLabel>,
    provenance: Vec<Option<String>>,
}

impl PseudoLabelTimeline {
    pub fn new(video_id: impl Into<String>, num_frames: usize, num_states: usize) -> Self {
        PseudoLabelTimeline {
            video_id: video_id.into(),
            num_frames,
            num_states,
            labels: vec![TernaryLabel::Unassigned; num_frames * num_states],
            provenance: vec![None; num_frames * num_states],
        }
    }

    #[inline]
    fn idx(&self, frame: usize, state: usize) -> usize {
        debug_assert!(frame < self.num_frames && state < self.num_states);
        frame * self.num_states + state
    }

    pub fn get(&self, frame: usize, state: usize) -> TernaryLabel {
        self.labels[self.idx(frame, state)]
    }

    pub fn provenance(&self, frame: usize, state: usize) -> Option<&str> {
        self.provenance[self.idx(frame, state)].as_deref()
    }

    /// Assign one cell. Positive/Negative cells must carry provenance;
    /// clearing a cell back to Unassigned drops it.
    pub fn set(
        &mut self,
        frame: usize,
        state: usize,
        label: TernaryLabel,
        provenance: Option<String>,
    ) {
        let i = self.idx(frame, state);
        debug_assert!(
            !(label.is_assigned() && provenance.is_none()),
            "assigned cell without provenance"
        );
        self.labels[i] = label;
        self.provenance[i] = if label.is_assigned() { provenance } else { None };
    }

    /// Fraction of cells carrying a Positive or Negative label.
    pub fn assignment_rate(&self) -> f64 {
        if self.labels.is_empty() {
            return 0.0;
        }
        let assigned = self.labels.iter().filter(|l| l.is_assigned()).count();
        assigned as f64 / self.labels.len() as f64
    }

    pub fn labels(&self) -> &[TernaryLabel] {
        &self.labels
    }
}

/// Cell-wise merge of two timelines over the same video.
///
/// Per cell: anything beats Unassigned; equal labels keep the left operand's
/// provenance; a Positive/Negative disagreement is discarded back to
/// Unassigned rather than arbitrated.
pub fn merge_timelines(
    a: &PseudoLabelTimeline,
    b: &PseudoLabelTimeline,
) -> Result<PseudoLabelTimeline> {
    if a.video_id != b.video_id {
        return Err(Error::shape("merge_timelines video_id", &a.video_id, &b.video_id));
    }
    if a.num_frames != b.num_frames || a.num_states != b.num_states {
        return Err(Error::shape(
            "merge_timelines dimensions",
            format!("{}x{}", a.num_frames, a.num_states),
            format!("{}x{}", b.num_frames, b.num_states),
        ));
    }
    let mut out = PseudoLabelTimeline::new(a.video_id.clone(), a.num_frames, a.num_states);
    for i in 0..a.labels.len() {
        let (la, lb) = (a.labels[i], b.labels[i]);
        let (label, prov) = match (la, lb) {
            (TernaryLabel::Unassigned, TernaryLabel::Unassigned) => {
                (TernaryLabel::Unassigned, None)
            }
            (x, TernaryLabel::Unassigned) => (x, a.provenance[i].clone()),
            (TernaryLabel::Unassigned, y) => (y, b.provenance[i].clone()),
            (x, y) if x == y => (x, a.provenance[i].clone()),
            _ => (TernaryLabel::Unassigned, None),
        };
        out.labels[i] = label;
        out.provenance[i] = prov;
    }
    Ok(out)
}

/// Strictly binary per-frame labels, used as evaluation ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthTimeline {
    pub video_id: String,
    pub num_frames: usize,
    pub num_states: usize,
    /// Row-major T x K; `true` means the state holds in the frame.
    pub values: Vec<bool>,
}

impl GroundTruthTimeline {
    /// Every cell of `t` must be assigned; Unassigned cells are rejected.
    pub fn from_timeline(t: &PseudoLabelTimeline) -> Result<Self> {
        let mut values = Vec::with_capacity(t.labels.len());
        for (i, l) in t.labels.iter().enumerate() {
            match l {
                TernaryLabel::Positive => values.push(true),
                TernaryLabel::Negative => values.push(false),
                TernaryLabel::Unassigned => {
                    return Err(Error::Validation(format!(
                        "ground truth for {} has an unassigned cell at frame {}, state {}",
                        t.video_id,
                        i / t.num_states,
                        i % t.num_states
                    )))
                }
            }
        }
        Ok(GroundTruthTimeline {
            video_id: t.video_id.clone(),
            num_frames: t.num_frames,
            num_states: t.num_states,
            values,
        })
    }

    pub fn get(&self, frame: usize, state: usize) -> bool {
        self.values[frame * self.num_states + state]
    }
}

/// Dense per-frame feature matrix for one video, sampled at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub video_id: String,
    pub num_frames: usize,
    pub feat_dim: usize,
    /// Frames per second of the feature clock; the pipeline runs at 1.0.
    pub fps: f32,
    /// Row-major T x D, finite values only.
    pub data: Vec<f32>,
}

impl FeatureSequence {
    pub fn new(
        video_id: impl Into<String>,
        num_frames: usize,
        feat_dim: usize,
        fps: f32,
        data: Vec<f32>,
    ) -> Result<Self> {
        let seq = FeatureSequence {
            video_id: video_id.into(),
            num_frames,
            feat_dim,
            fps,
            data,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.len() != self.num_frames * self.feat_dim {
            return Err(Error::shape(
                format!("feature data for {}", self.video_id),
                self.num_frames * self.feat_dim,
                self.data.len(),
            ));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::Validation(format!("invalid fps {}", self.fps)));
        }
        if let Some(i) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite feature value at index {} of {}",
                i, self.video_id
            )));
        }
        Ok(())
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.data[t * self.feat_dim..(t + 1) * self.feat_dim]
    }
}

/// Map a closed seconds interval onto the frames it touches.
///
/// At 1 fps, frame `t` covers `[t, t+1)` seconds, so `[start_s, end_s]`
/// becomes `floor(start) .. ceil(end)`, clamped to `[0, num_frames)`. An
/// interval that rounds to nothing (or lies outside the clip) yields an
/// empty range.
pub fn seconds_to_frames(start_s: f64, end_s: f64, num_frames: usize) -> Range<usize> {
    if !start_s.is_finite() || !end_s.is_finite() || end_s < start_s {
        return 0..0;
    }
    let lo = start_s.max(0.0).floor() as usize;
    let hi = end_s.max(0.0).ceil() as usize;
    let lo = lo.min(num_frames);
    let hi = hi.min(num_frames);
    if lo >= hi {
        0..0
    } else {
        lo..hi
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tl(video: &str, t: usize, k: usize) -> PseudoLabelTimeline {
        PseudoLabelTimeline::new(video, t, k)
    }

    #[test]
    fn seconds_to_frames_basic() {
        // [2.3s, 4.1s] at 1 fps covers frames 2, 3, 4.
        assert_eq!(seconds_to_frames(2.3, 4.1, 10), 2..5);
        // Exact integer end lands on the previous frame only.
        assert_eq!(seconds_to_frames(2.0, 3.0, 10), 2..3);
        // Sub-second interval inside one frame.
        assert_eq!(seconds_to_frames(2.1, 2.3, 10), 2..3);
        // Clamped to the clip.
        assert_eq!(seconds_to_frames(8.5, 99.0, 10), 8..10);
        assert_eq!(seconds_to_frames(12.0, 15.0, 10), 0..0);
        // Degenerate and reversed intervals are empty.
        assert!(seconds_to_frames(2.0, 2.0, 10).is_empty());
        assert!(seconds_to_frames(5.0, 4.0, 10).is_empty());
    }

    #[test]
    fn merge_prefers_assigned_over_unassigned() {
        let mut a = tl("v", 2, 1);
        let b = {
            let mut b = tl("v", 2, 1);
            b.set(0, 0, TernaryLabel::Positive, Some("b".into()));
            b
        };
        a.set(1, 0, TernaryLabel::Negative, Some("a".into()));
        let m = merge_timelines(&a, &b).unwrap();
        assert_eq!(m.get(0, 0), TernaryLabel::Positive);
        assert_eq!(m.provenance(0, 0), Some("b"));
        assert_eq!(m.get(1, 0), TernaryLabel::Negative);
        assert_eq!(m.provenance(1, 0), Some("a"));
    }

    #[test]
    fn merge_conflict_discards() {
        let mut a = tl("v", 1, 1);
        let mut b = tl("v", 1, 1);
        a.set(0, 0, TernaryLabel::Positive, Some("a".into()));
        b.set(0, 0, TernaryLabel::Negative, Some("b".into()));
        let m = merge_timelines(&a, &b).unwrap();
        assert_eq!(m.get(0, 0), TernaryLabel::Unassigned);
        assert_eq!(m.provenance(0, 0), None);
    }

    #[test]
    fn merge_equal_labels_keep_left_provenance() {
        let mut a = tl("v", 1, 1);
        let mut b = tl("v", 1, 1);
        a.set(0, 0, TernaryLabel::Positive, Some("a".into()));
        b.set(0, 0, TernaryLabel::Positive, Some("b".into()));
        let m = merge_timelines(&a, &b).unwrap();
        assert_eq!(m.get(0, 0), TernaryLabel::Positive);
        assert_eq!(m.provenance(0, 0), Some("a"));
    }

    #[test]
    fn merge_shape_mismatch() {
        let a = tl("v", 2, 1);
        let b = tl("v", 3, 1);
        assert!(matches!(
            merge_timelines(&a, &b),
            Err(Error::Shape { .. })
        ));
        let c = tl("w", 2, 1);
        assert!(matches!(
            merge_timelines(&a, &c),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn assignment_rate_counts_cells() {
        let mut a = tl("v", 4, 2);
        assert_eq!(a.assignment_rate(), 0.0);
        a.set(0, 0, TernaryLabel::Positive, Some("x".into()));
        a.set(1, 1, TernaryLabel::Negative, Some("x".into()));
        assert!((a.assignment_rate() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn ground_truth_rejects_unassigned() {
        let mut a = tl("v", 1, 2);
        a.set(0, 0, TernaryLabel::Positive, Some("x".into()));
        assert!(GroundTruthTimeline::from_timeline(&a).is_err());
        a.set(0, 1, TernaryLabel::Negative, Some("x".into()));
        let gt = GroundTruthTimeline::from_timeline(&a).unwrap();
        assert!(gt.get(0, 0));
        assert!(!gt.get(0, 1));
    }

    #[test]
    fn transcript_validation() {
        let t = NarrationTranscript {
            video_id: "v".into(),
            duration_s: 10.0,
            sentences: vec![NarrationSentence {
                text: "hello".into(),
                start_s: 0.0,
                end_s: 10.8,
            }],
        };
        // 0.8s overhang is within the 1s slack.
        t.validate().unwrap();
        let mut bad = t.clone();
        bad.sentences[0].end_s = 11.5;
        assert!(bad.validate().is_err());
    }
}
