//! Synthetic fixture generator: a closed world whose pipeline output is
//! known up front.
//!
//! Each video narrates a sequence of steps; some steps toggle one object
//! state, the rest are filler. The LLM cache is pre-filled with the exact
//! responses the chain will request (actions, descriptions, verdicts), the
//! stub scorer names the right action for every frame, and features embed
//! the ground-truth state vector linearly. Running the real pipeline over
//! the fixture therefore reproduces the generator's ground truth on every
//! cell, except cells deliberately masked by scripting an Ambiguous verdict.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::align::StubScorer;
use crate::error::{Error, Result};
use crate::features::write_feature_file;
use crate::labels::write_label_file;
use crate::llm::chain::BLOCK_SIZE;
use crate::llm::client::{cache_key, write_cache_entry};
use crate::llm::prompts;
use crate::trainer::TrainConfig;
use crate::transcripts::write_transcript;
use crate::types::{
    FeatureSequence, GroundTruthTimeline, NarrationSentence, NarrationTranscript,
    PseudoLabelTimeline, StateDef, StateVocabulary, TernaryLabel,
};

/// Object category used by every fixture.
pub const OBJECT: &str = "widget";
/// Model id the cache entries are keyed under; the written pipeline config
/// uses the same id so replay lookups hit.
pub const SCRIPTED_MODEL: &str = "scripted-labeler";

pub const DIR_TRANSCRIPTS: &str = "transcripts";
pub const DIR_FEATURES: &str = "features";
pub const DIR_GROUND_TRUTH: &str = "gt";
pub const DIR_CACHE: &str = "cache";
pub const FILE_VOCAB: &str = "vocab.json";
pub const FILE_SCORER: &str = "scorer.json";
pub const FILE_PIPELINE_CFG: &str = "pipeline.cfg";
pub const FILE_TRAIN_CFG: &str = "train.cfg";
pub const FILE_SPEC: &str = "spec.json";

const STATE_NAMES: [&str; 8] = [
    "coated", "fastened", "polished", "calibrated", "primed", "sealed", "labeled", "mounted",
];
const STATE_VERBS: [&str; 8] = [
    "coat", "fasten", "polish", "calibrate", "prime", "seal", "label", "mount",
];
const STATE_GERUNDS: [&str; 8] = [
    "Coating", "Fastening", "Polishing", "Calibrating", "Priming", "Sealing", "Labeling",
    "Mounting",
];

// Generator RNG streams, all derived from the spec seed.
const STREAM_WORLD: u64 = 1;
const STREAM_MASK: u64 = 2;
const STREAM_NOISE: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub videos: usize,
    /// Frames per video (one narration step per frame at 1 fps).
    pub frames: usize,
    pub feat_dim: usize,
    pub num_states: usize,
    /// Probability that a step toggles a state instead of being filler.
    pub action_rate: f64,
    /// `transitions[a]` is the state toggled by action kind `a`; empty means
    /// the identity table (kind k toggles state k).
    pub transitions: Vec<usize>,
    /// Fraction of (frame, state) cells whose verdict is scripted as
    /// Ambiguous, hiding the label from the pipeline.
    pub mask_rate: f64,
    /// Magnitude of the embedded state signal in the features.
    pub feature_margin: f64,
    /// Standard deviation of the additive feature noise.
    pub noise_std: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 7,
            videos: 10,
            frames: 64,
            feat_dim: 16,
            num_states: 4,
            action_rate: 0.7,
            transitions: Vec::new(),
            mask_rate: 0.0,
            feature_margin: 6.0,
            noise_std: 0.05,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.videos == 0 || self.frames == 0 {
            return Err(Error::Validation("need at least one video and one frame".into()));
        }
        if self.videos > 999 || self.frames > 999 {
            return Err(Error::Validation(
                "fixture sizes are capped at 999 videos and 999 frames".into(),
            ));
        }
        if self.num_states == 0 || self.num_states > STATE_NAMES.len() {
            return Err(Error::Validation(format!(
                "num_states must lie in 1..={}, got {}",
                STATE_NAMES.len(),
                self.num_states
            )));
        }
        if self.feat_dim < self.num_states {
            return Err(Error::Validation(format!(
                "feat_dim {} is too small to embed {} states",
                self.feat_dim, self.num_states
            )));
        }
        if !(0.0..=1.0).contains(&self.action_rate) {
            return Err(Error::Validation(format!(
                "action_rate {} outside [0, 1]",
                self.action_rate
            )));
        }
        if !(0.0..1.0).contains(&self.mask_rate) {
            return Err(Error::Validation(format!(
                "mask_rate {} outside [0, 1)",
                self.mask_rate
            )));
        }
        for &t in &self.transitions {
            if t >= self.num_states {
                return Err(Error::Validation(format!(
                    "transition target {t} is not a state index below {}",
                    self.num_states
                )));
            }
        }
        if !(self.feature_margin.is_finite() && self.feature_margin > 0.0) {
            return Err(Error::Validation(format!(
                "feature_margin must be positive, got {}",
                self.feature_margin
            )));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::Validation(format!(
                "noise_std must be non-negative, got {}",
                self.noise_std
            )));
        }
        Ok(())
    }

    /// The transition table with the identity default applied.
    pub fn resolved_transitions(&self) -> Vec<usize> {
        if self.transitions.is_empty() {
            (0..self.num_states).collect()
        } else {
            self.transitions.clone()
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let spec: SyntheticSpec =
            serde_json::from_slice(&bytes).map_err(|e| Error::MalformedLine {
                path: path.to_path_buf(),
                line: e.line(),
                message: e.to_string(),
            })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)
            .map_err(|e| Error::Validation(format!("spec serialization: {e}")))?;
        bytes.push(b'\n');
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

/// What the generator decided, for tests that need the hidden truth.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub vocab: StateVocabulary,
    pub video_ids: Vec<String>,
    pub gt: Vec<GroundTruthTimeline>,
    /// Row-major T x K per video; true = hidden behind an Ambiguous verdict.
    pub masked: Vec<Vec<bool>>,
}

pub fn vocabulary(num_states: usize) -> StateVocabulary {
    let states = (0..num_states)
        .map(|k| StateDef {
            name: STATE_NAMES[k].to_string(),
            description: format!(
                "The {OBJECT} counts as {} once somebody has taken the time to {} it.",
                STATE_NAMES[k], STATE_VERBS[k]
            ),
            state_text: format!("The {OBJECT} is {}", STATE_NAMES[k]),
        })
        .collect();
    StateVocabulary {
        object_primary_name: OBJECT.to_string(),
        object_secondary_names: vec![format!("{OBJECT}s")],
        states,
    }
}

/// One generated video before anything is written.
struct VideoWorld {
    id: String,
    /// Ground-truth state vector after each step, row-major T x K.
    states: Vec<bool>,
    sentences: Vec<NarrationSentence>,
    summaries: Vec<String>,
    descriptions: Vec<String>,
}

fn build_video(
    index: usize,
    spec: &SyntheticSpec,
    transitions: &[usize],
    rng: &mut ChaCha8Rng,
) -> VideoWorld {
    let id = format!("synth{index:03}");
    let k = spec.num_states;
    let mut current = vec![false; k];
    let mut states = Vec::with_capacity(spec.frames * k);
    let mut sentences = Vec::with_capacity(spec.frames);
    let mut summaries = Vec::with_capacity(spec.frames);
    let mut descriptions = Vec::with_capacity(spec.frames);
    for i in 0..spec.frames {
        let target = if rng.gen::<f64>() < spec.action_rate {
            Some(transitions[rng.gen_range(0..transitions.len())])
        } else {
            None
        };
        let (text, summary) = match target {
            Some(s) => {
                current[s] = !current[s];
                (
                    format!("now we {} the widget in step {i:03} of clip {id}", STATE_VERBS[s]),
                    format!("{} the widget in step {i:03} of clip {id}.", STATE_GERUNDS[s]),
                )
            }
            None => (
                format!("next we check on the widget in step {i:03} of clip {id}"),
                format!("Checking the widget in step {i:03} of clip {id}."),
            ),
        };
        let held: Vec<&str> = (0..k).filter(|&s| current[s]).map(|s| STATE_NAMES[s]).collect();
        let description = if held.is_empty() {
            format!("The widget is untouched as of step {i:03} of clip {id}.")
        } else {
            format!(
                "The widget is {} as of step {i:03} of clip {id}.",
                held.join(" and ")
            )
        };
        states.extend_from_slice(&current);
        sentences.push(NarrationSentence {
            text,
            start_s: i as f64 + 0.1,
            end_s: i as f64 + 0.9,
        });
        summaries.push(summary);
        descriptions.push(description);
    }
    VideoWorld {
        id,
        states,
        sentences,
        summaries,
        descriptions,
    }
}

/// Script every response the chain will ask for over this video.
fn script_chain_cache(
    cache_dir: &Path,
    vocab: &StateVocabulary,
    video: &VideoWorld,
    masked: &[bool],
) -> Result<()> {
    let k = vocab.num_states();
    let put = |prompt: &str, response: &str| {
        write_cache_entry(cache_dir, &cache_key(SCRIPTED_MODEL, 0.0, prompt), response)
    };

    // Stage (a): one extraction request per sentence block, echoing back one
    // action per sentence with the sentence itself as support.
    for (block_start, block) in video
        .sentences
        .chunks(BLOCK_SIZE)
        .enumerate()
        .map(|(b, c)| (b * BLOCK_SIZE, c))
    {
        let lines: Vec<&str> = block.iter().map(|s| s.text.as_str()).collect();
        let prompt = prompts::action_extraction_prompt(&lines);
        let mut response = String::new();
        for (offset, sentence) in block.iter().enumerate() {
            response.push_str(&format!(
                "\"{}\",\"{}\"\n",
                video.summaries[block_start + offset], sentence.text
            ));
        }
        put(&prompt, &response)?;
    }

    // Stage (b): one description request per action block, threading the
    // previous block's last description.
    let mut previous = prompts::initial_state_seed(OBJECT);
    for (block_start, block) in video
        .summaries
        .chunks(BLOCK_SIZE)
        .enumerate()
        .map(|(b, c)| (b * BLOCK_SIZE, c))
    {
        let actions: Vec<&str> = block.iter().map(|s| s.as_str()).collect();
        let prompt = prompts::state_description_prompt(OBJECT, &previous, &actions);
        let mut response = String::new();
        for (offset, summary) in block.iter().enumerate() {
            response.push_str(&format!(
                "\"{}\",\"{}\"\n",
                summary,
                video.descriptions[block_start + offset]
            ));
        }
        put(&prompt, &response)?;
        previous = video.descriptions[block_start + block.len() - 1].clone();
    }

    // Stage (c): one verdict per (action, state), full history, masked cells
    // answered Ambiguous so the aligner leaves them unassigned.
    for i in 0..video.descriptions.len() {
        let history: Vec<&str> = video.descriptions[..=i].iter().map(|d| d.as_str()).collect();
        for (s, state) in vocab.states.iter().enumerate() {
            let prompt = prompts::label_inference_prompt(OBJECT, &history, state);
            let verdict = if masked[i * k + s] {
                format!("Answer: Ambiguous, the record does not settle whether the widget is {}.", state.name)
            } else if video.states[i * k + s] {
                format!("Answer: Yes, the widget is {} at this point.", state.name)
            } else {
                format!("Answer: No, the widget is missing the {} step so far.", state.name)
            };
            let response = format!(
                "Judging points: the definition requires a completed {} step.\n\n\
                 Comparison: the history through step {i:03} was traced in order.\n\n\
                 {verdict}",
                STATE_VERBS[s]
            );
            put(&prompt, &response)?;
        }
    }
    Ok(())
}

/// Response for the one-shot verb-lexicon bootstrap. The filler verb "check"
/// rides along on the first state so narrations made of filler steps alone
/// still pass curation.
fn verb_lexicon_response(vocab: &StateVocabulary) -> String {
    let mut out = String::new();
    for (k, state) in vocab.states.iter().enumerate() {
        let verbs = if k == 0 {
            format!("{},check", STATE_VERBS[k])
        } else {
            STATE_VERBS[k].to_string()
        };
        out.push_str(&format!("\"{}\",\"{}\"\n", state.state_text, verbs));
    }
    out
}

fn pipeline_config_text(spec: &SyntheticSpec) -> String {
    format!(
        "# generated fixture configuration\n\
         vocab = {FILE_VOCAB}\n\
         transcripts = {DIR_TRANSCRIPTS}\n\
         features = {DIR_FEATURES}\n\
         ground_truth = {DIR_GROUND_TRUTH}\n\
         scorer = {FILE_SCORER}\n\
         cache = {DIR_CACHE}\n\
         model = {SCRIPTED_MODEL}\n\
         mode = replay\n\
         workdir = work\n\
         train_config = {FILE_TRAIN_CFG}\n\
         delta_t_s = 10\n\
         background_threshold = 0.2\n\
         context_cap = 0\n\
         max_words = 12000\n\
         require_title_and_narration = false\n\
         # mask_rate {} (for reference only)\n",
        spec.mask_rate
    )
}

fn train_config(spec: &SyntheticSpec) -> TrainConfig {
    TrainConfig {
        batch_size: 16,
        epochs_stage1: 16,
        epochs_stage2: 16,
        lr: 1e-3,
        weight_decay: 0.01,
        seed: spec.seed,
        hidden: 32,
        stages: 4,
        layers: 5,
        dropout: 0.1,
        ..TrainConfig::default()
    }
}

/// Generate the full fixture tree under `out_dir`. Rerunning with the same
/// spec produces byte-identical files.
pub fn generate_synthetic(spec: &SyntheticSpec, out_dir: &Path) -> Result<SyntheticWorld> {
    spec.validate()?;
    let transitions = spec.resolved_transitions();
    let vocab = vocabulary(spec.num_states);
    for dir in [DIR_TRANSCRIPTS, DIR_FEATURES, DIR_GROUND_TRUTH, DIR_CACHE] {
        let p = out_dir.join(dir);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }

    let mut world_rng = stream(spec.seed, STREAM_WORLD);
    let mut mask_rng = stream(spec.seed, STREAM_MASK);
    let mut noise_rng = stream(spec.seed, STREAM_NOISE);
    let noise = Normal::new(0.0, spec.noise_std)
        .map_err(|e| Error::Validation(format!("noise distribution: {e}")))?;
    let (t, d, k) = (spec.frames, spec.feat_dim, spec.num_states);
    let block_width = d / k;

    let mut stub = StubScorer {
        default_filter: Some("The step is clearly underway. The answer is True.".into()),
        default_similarity: Some("1.0".into()),
        ..StubScorer::default()
    };
    let state_names: Vec<String> = vocab.states.iter().map(|s| s.name.clone()).collect();
    let mut world = SyntheticWorld {
        vocab: vocab.clone(),
        video_ids: Vec::with_capacity(spec.videos),
        gt: Vec::with_capacity(spec.videos),
        masked: Vec::with_capacity(spec.videos),
    };

    for v in 0..spec.videos {
        let video = build_video(v, spec, &transitions, &mut world_rng);
        let masked: Vec<bool> = (0..t * k).map(|_| mask_rng.gen::<f64>() < spec.mask_rate).collect();

        let transcript = NarrationTranscript {
            video_id: video.id.clone(),
            duration_s: t as f64,
            sentences: video.sentences.clone(),
        };
        write_transcript(
            &out_dir.join(DIR_TRANSCRIPTS).join(format!("{}.jsonl", video.id)),
            &transcript,
            &format!("Working with the widget, clip {}", video.id),
        )?;

        let mut data = Vec::with_capacity(t * d);
        for i in 0..t {
            for j in 0..d {
                let block = j / block_width;
                let signal = if block < k {
                    let sign = if video.states[i * k + block] { 1.0 } else { -1.0 };
                    spec.feature_margin * sign
                } else {
                    0.0
                };
                data.push((signal + noise.sample(&mut noise_rng)) as f32);
            }
        }
        let seq = FeatureSequence::new(video.id.clone(), t, d, 1.0, data)?;
        write_feature_file(&out_dir.join(DIR_FEATURES).join(format!("{}.fsq", video.id)), &seq)?;

        let mut gt = PseudoLabelTimeline::new(video.id.clone(), t, k);
        for i in 0..t {
            for s in 0..k {
                let label = if video.states[i * k + s] {
                    TernaryLabel::Positive
                } else {
                    TernaryLabel::Negative
                };
                gt.set(i, s, label, Some("gt".into()));
            }
        }
        write_label_file(
            &out_dir.join(DIR_GROUND_TRUTH).join(format!("{}.json", video.id)),
            &gt,
            OBJECT,
            &state_names,
        )?;

        for (i, summary) in video.summaries.iter().enumerate() {
            stub.choices.insert(StubScorer::frame_key(&video.id, i), summary.clone());
        }
        script_chain_cache(&out_dir.join(DIR_CACHE), &vocab, &video, &masked)?;

        world.video_ids.push(video.id.clone());
        world.gt.push(GroundTruthTimeline::from_timeline(&gt)?);
        world.masked.push(masked);
    }

    write_cache_entry(
        &out_dir.join(DIR_CACHE),
        &cache_key(SCRIPTED_MODEL, 0.0, &prompts::verb_list_prompt(&vocab.states)),
        &verb_lexicon_response(&vocab),
    )?;
    stub.write(&out_dir.join(FILE_SCORER))?;

    let mut vocab_bytes = serde_json::to_vec_pretty(&vocab)
        .map_err(|e| Error::Validation(format!("vocab serialization: {e}")))?;
    vocab_bytes.push(b'\n');
    let vocab_path = out_dir.join(FILE_VOCAB);
    fs::write(&vocab_path, vocab_bytes).map_err(|e| Error::io(&vocab_path, e))?;

    let cfg_path = out_dir.join(FILE_PIPELINE_CFG);
    fs::write(&cfg_path, pipeline_config_text(spec)).map_err(|e| Error::io(&cfg_path, e))?;
    let train_path = out_dir.join(FILE_TRAIN_CFG);
    fs::write(&train_path, train_config(spec).to_key_values())
        .map_err(|e| Error::io(&train_path, e))?;
    spec.write(&out_dir.join(FILE_SPEC))?;

    Ok(world)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::{align, AlignmentConfig};
    use crate::features::read_feature_file;
    use crate::labels::read_ground_truth;
    use crate::llm::chain::run_chain;
    use crate::llm::client::LabelerClient;
    use crate::transcripts::load_transcript;

    fn small_spec() -> SyntheticSpec {
        SyntheticSpec {
            seed: 11,
            videos: 2,
            frames: 12,
            feat_dim: 8,
            num_states: 2,
            action_rate: 0.8,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn spec_validation_rejects_bad_fields() {
        assert!(SyntheticSpec::default().validate().is_ok());
        let mut s = small_spec();
        s.transitions = vec![0, 5];
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.num_states = 9;
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.feat_dim = 1;
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.mask_rate = 1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("spec.json");
        let spec = small_spec();
        spec.write(&p).unwrap();
        assert_eq!(SyntheticSpec::read(&p).unwrap(), spec);
        // Partial specs fall back to defaults; unknown keys are rejected.
        std::fs::write(&p, "{\"videos\": 3}").unwrap();
        let partial = SyntheticSpec::read(&p).unwrap();
        assert_eq!(partial.videos, 3);
        assert_eq!(partial.frames, SyntheticSpec::default().frames);
        std::fs::write(&p, "{\"vydeos\": 3}").unwrap();
        assert!(SyntheticSpec::read(&p).is_err());
    }

    #[test]
    fn generation_is_byte_identical_under_a_fixed_seed() {
        let spec = small_spec();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate_synthetic(&spec, a.path()).unwrap();
        generate_synthetic(&spec, b.path()).unwrap();
        let mut paths: Vec<_> = walk(a.path());
        paths.sort();
        let mut other: Vec<_> = walk(b.path());
        other.sort();
        let rel = |root: &Path, p: &Path| p.strip_prefix(root).unwrap().to_path_buf();
        assert_eq!(
            paths.iter().map(|p| rel(a.path(), p)).collect::<Vec<_>>(),
            other.iter().map(|p| rel(b.path(), p)).collect::<Vec<_>>()
        );
        assert!(!paths.is_empty());
        for (pa, pb) in paths.iter().zip(other.iter()) {
            assert_eq!(
                std::fs::read(pa).unwrap(),
                std::fs::read(pb).unwrap(),
                "{pa:?} differs"
            );
        }
    }

    fn walk(root: &Path) -> Vec<std::path::PathBuf> {
        let mut out = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(dir) = stack.pop() {
            for entry in std::fs::read_dir(&dir).unwrap() {
                let p = entry.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    out.push(p);
                }
            }
        }
        out
    }

    #[test]
    fn chain_and_align_reproduce_ground_truth_when_unmasked() {
        let spec = small_spec();
        let dir = tempfile::tempdir().unwrap();
        let world = generate_synthetic(&spec, dir.path()).unwrap();
        let client = LabelerClient::replay(dir.path().join(DIR_CACHE), SCRIPTED_MODEL);
        let stub = StubScorer::read(&dir.path().join(FILE_SCORER)).unwrap();
        let cfg = AlignmentConfig::default();
        for (v, id) in world.video_ids.iter().enumerate() {
            let load = load_transcript(
                &dir.path().join(DIR_TRANSCRIPTS).join(format!("{id}.jsonl")),
            )
            .unwrap();
            let chain = run_chain(&client, &world.vocab, &load.transcript, None).unwrap();
            assert_eq!(chain.actions.len(), spec.frames);
            assert_eq!(chain.stats.malformed_extract_rows, 0);
            assert_eq!(chain.stats.malformed_describe_rows, 0);
            assert_eq!(chain.stats.malformed_infer_answers, 0);
            assert_eq!(chain.stats.interval_fallbacks, 0);
            let (timeline, stats) =
                align(&chain, spec.frames, &world.vocab, &stub, &cfg).unwrap();
            assert_eq!(stats.assigned_frames, spec.frames);
            assert!((stats.assignment_rate - 1.0).abs() < 1e-12);
            for i in 0..spec.frames {
                for s in 0..spec.num_states {
                    let expect = if world.gt[v].get(i, s) {
                        TernaryLabel::Positive
                    } else {
                        TernaryLabel::Negative
                    };
                    assert_eq!(timeline.get(i, s), expect, "video {id} frame {i} state {s}");
                }
            }
        }
    }

    #[test]
    fn masked_cells_stay_unassigned_after_align() {
        let spec = SyntheticSpec {
            mask_rate: 0.4,
            ..small_spec()
        };
        let dir = tempfile::tempdir().unwrap();
        let world = generate_synthetic(&spec, dir.path()).unwrap();
        let client = LabelerClient::replay(dir.path().join(DIR_CACHE), SCRIPTED_MODEL);
        let stub = StubScorer::read(&dir.path().join(FILE_SCORER)).unwrap();
        let id = &world.video_ids[0];
        let load =
            load_transcript(&dir.path().join(DIR_TRANSCRIPTS).join(format!("{id}.jsonl")))
                .unwrap();
        let chain = run_chain(&client, &world.vocab, &load.transcript, None).unwrap();
        let (timeline, _) =
            align(&chain, spec.frames, &world.vocab, &stub, &AlignmentConfig::default()).unwrap();
        let k = spec.num_states;
        for i in 0..spec.frames {
            for s in 0..k {
                if world.masked[0][i * k + s] {
                    assert_eq!(timeline.get(i, s), TernaryLabel::Unassigned);
                } else {
                    assert!(timeline.get(i, s).is_assigned());
                }
            }
        }
    }

    #[test]
    fn mask_fraction_concentrates_at_the_configured_rate() {
        // 10 videos x 128 frames x 8 states = 10240 cells.
        let spec = SyntheticSpec {
            seed: 3,
            videos: 10,
            frames: 128,
            feat_dim: 16,
            num_states: 8,
            mask_rate: 0.4,
            ..SyntheticSpec::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let world = generate_synthetic(&spec, dir.path()).unwrap();
        let total: usize = world.masked.iter().map(|m| m.len()).sum();
        let hidden: usize = world
            .masked
            .iter()
            .map(|m| m.iter().filter(|&&x| x).count())
            .sum();
        assert!(total >= 10_000);
        let rate = hidden as f64 / total as f64;
        assert!((rate - 0.4).abs() < 0.02, "masked fraction {rate}");
    }

    #[test]
    fn ground_truth_files_and_features_match_the_world() {
        let spec = small_spec();
        let dir = tempfile::tempdir().unwrap();
        let world = generate_synthetic(&spec, dir.path()).unwrap();
        for (v, id) in world.video_ids.iter().enumerate() {
            let gt = read_ground_truth(
                &dir.path().join(DIR_GROUND_TRUTH).join(format!("{id}.json")),
            )
            .unwrap();
            assert_eq!(gt.values, world.gt[v].values);
            let feats =
                read_feature_file(&dir.path().join(DIR_FEATURES).join(format!("{id}.fsq")))
                    .unwrap();
            assert_eq!(feats.num_frames, spec.frames);
            assert_eq!(feats.feat_dim, spec.feat_dim);
            // The block sign encodes the ground-truth bit.
            let bw = spec.feat_dim / spec.num_states;
            for i in 0..spec.frames {
                for s in 0..spec.num_states {
                    let x = feats.frame(i)[s * bw];
                    assert_eq!(x > 0.0, gt.get(i, s), "video {id} frame {i} state {s}");
                }
            }
        }
    }

    #[test]
    fn written_configs_parse() {
        let spec = small_spec();
        let dir = tempfile::tempdir().unwrap();
        generate_synthetic(&spec, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join(FILE_TRAIN_CFG)).unwrap();
        let cfg = TrainConfig::from_key_values(&text).unwrap();
        assert_eq!(cfg.seed, spec.seed);
        assert_eq!(cfg.hidden, 32);
    }
}
