//! JSON on-disk format for label timelines.
//!
//! Labels are stored as per-state run-length encodings; frames not covered
//! by any run are Unassigned. The writer emits canonical files (runs sorted,
//! maximal, pretty-printed with a fixed field order), so write -> read ->
//! write reproduces the bytes exactly. Ground truth uses the same format and
//! is additionally required to cover every cell.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{GroundTruthTimeline, PseudoLabelTimeline, TernaryLabel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRun {
    pub start_frame: usize,
    pub end_frame_exclusive: usize,
    pub label: TernaryLabel,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelFile {
    pub video_id: String,
    pub frames: usize,
    pub fps: f32,
    pub object: String,
    pub states: Vec<String>,
    /// One run list per state, index-aligned with `states`.
    pub runs: Vec<Vec<LabelRun>>,
}

/// Run-length encode a timeline. `object` and `states` are carried through
/// so the file is self-describing.
pub fn encode_label_file(
    timeline: &PseudoLabelTimeline,
    object: &str,
    states: &[String],
) -> Result<LabelFile> {
    if states.len() != timeline.num_states {
        return Err(Error::shape(
            "encode_label_file states",
            timeline.num_states,
            states.len(),
        ));
    }
    let mut runs = vec![Vec::new(); timeline.num_states];
    for k in 0..timeline.num_states {
        let mut open: Option<LabelRun> = None;
        for t in 0..timeline.num_frames {
            let label = timeline.get(t, k);
            let prov = timeline.provenance(t, k);
            if let Some(run) = &mut open {
                let same = label == run.label && prov == Some(run.provenance.as_str());
                if same {
                    run.end_frame_exclusive = t + 1;
                    continue;
                }
                runs[k].push(open.take().unwrap());
            }
            if label.is_assigned() {
                open = Some(LabelRun {
                    start_frame: t,
                    end_frame_exclusive: t + 1,
                    label,
                    provenance: prov.unwrap_or_default().to_string(),
                });
            }
        }
        if let Some(run) = open {
            runs[k].push(run);
        }
    }
    Ok(LabelFile {
        video_id: timeline.video_id.clone(),
        frames: timeline.num_frames,
        fps: 1.0,
        object: object.to_string(),
        states: states.to_vec(),
        runs,
    })
}

pub fn decode_label_file(file: &LabelFile) -> Result<PseudoLabelTimeline> {
    if file.runs.len() != file.states.len() {
        return Err(Error::shape(
            format!("label file for {}: runs vs states", file.video_id),
            file.states.len(),
            file.runs.len(),
        ));
    }
    let mut timeline =
        PseudoLabelTimeline::new(file.video_id.clone(), file.frames, file.states.len());
    for (k, state_runs) in file.runs.iter().enumerate() {
        let mut last_end = 0usize;
        for run in state_runs {
            if run.start_frame >= run.end_frame_exclusive {
                return Err(Error::Validation(format!(
                    "empty or reversed run [{}, {}) for state {} of {}",
                    run.start_frame, run.end_frame_exclusive, file.states[k], file.video_id
                )));
            }
            if run.end_frame_exclusive > file.frames {
                return Err(Error::Validation(format!(
                    "run ending at {} exceeds {} frames in {}",
                    run.end_frame_exclusive, file.frames, file.video_id
                )));
            }
            if run.start_frame < last_end {
                return Err(Error::Validation(format!(
                    "overlapping or unsorted runs at frame {} for state {} of {}",
                    run.start_frame, file.states[k], file.video_id
                )));
            }
            if !run.label.is_assigned() {
                return Err(Error::Validation(format!(
                    "explicit unassigned run in {}; omit the frames instead",
                    file.video_id
                )));
            }
            last_end = run.end_frame_exclusive;
            for t in run.start_frame..run.end_frame_exclusive {
                timeline.set(t, k, run.label, Some(run.provenance.clone()));
            }
        }
    }
    Ok(timeline)
}

pub fn write_label_file(
    path: &Path,
    timeline: &PseudoLabelTimeline,
    object: &str,
    states: &[String],
) -> Result<()> {
    let file = encode_label_file(timeline, object, states)?;
    let mut bytes = serde_json::to_vec_pretty(&file)
        .map_err(|e| Error::Validation(format!("label serialization failed: {e}")))?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_label_file(path: &Path) -> Result<(PseudoLabelTimeline, LabelFile)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let file: LabelFile = serde_json::from_slice(&bytes).map_err(|e| Error::MalformedLine {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let timeline = decode_label_file(&file)?;
    Ok((timeline, file))
}

/// Read a fully-covered binary timeline; any Unassigned cell is an error.
pub fn read_ground_truth(path: &Path) -> Result<GroundTruthTimeline> {
    let (timeline, _) = read_label_file(path)?;
    GroundTruthTimeline::from_timeline(&timeline)
}
