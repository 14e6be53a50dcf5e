//! Transcript files: one JSON object per line with `text`, `start_s`,
//! `end_s`, plus an optional `<stem>.meta.json` sidecar carrying the video
//! id, title, and duration. Without a sidecar the id falls back to the file
//! stem and the duration to the last sentence end.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{NarrationSentence, NarrationTranscript};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptMeta {
    pub video_id: String,
    pub duration_s: f64,
    pub title: String,
}

/// A loaded transcript plus load diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptLoad {
    pub transcript: NarrationTranscript,
    pub title: String,
    /// True when the file's sentences were out of order and got re-sorted.
    pub was_unsorted: bool,
}

pub fn meta_path(transcript_path: &Path) -> PathBuf {
    let stem = transcript_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    transcript_path.with_file_name(format!("{stem}.meta.json"))
}

pub fn load_transcript(path: &Path) -> Result<TranscriptLoad> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut sentences = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let sentence: NarrationSentence =
            serde_json::from_str(line).map_err(|e| Error::MalformedLine {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
        sentence.validate().map_err(|e| Error::MalformedLine {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        sentences.push(sentence);
    }

    let was_unsorted = !sentences.windows(2).all(|w| w[0].start_s <= w[1].start_s);
    if was_unsorted {
        sentences.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    }

    let sidecar = meta_path(path);
    let (video_id, duration_s, title) = if sidecar.exists() {
        let bytes = fs::read(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let meta: TranscriptMeta =
            serde_json::from_slice(&bytes).map_err(|e| Error::MalformedLine {
                path: sidecar.clone(),
                line: e.line(),
                message: e.to_string(),
            })?;
        (meta.video_id, meta.duration_s, meta.title)
    } else {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let duration = sentences.iter().map(|s| s.end_s).fold(0.0, f64::max);
        (stem, duration, String::new())
    };

    let transcript = NarrationTranscript {
        video_id,
        duration_s,
        sentences,
    };
    transcript.validate()?;
    Ok(TranscriptLoad {
        transcript,
        title,
        was_unsorted,
    })
}

pub fn write_transcript(
    path: &Path,
    transcript: &NarrationTranscript,
    title: &str,
) -> Result<()> {
    transcript.validate()?;
    let mut out = String::new();
    for s in &transcript.sentences {
        out.push_str(
            &serde_json::to_string(s)
                .map_err(|e| Error::Validation(format!("transcript serialization: {e}")))?,
        );
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))?;
    let meta = TranscriptMeta {
        video_id: transcript.video_id.clone(),
        duration_s: transcript.duration_s,
        title: title.to_string(),
    };
    let sidecar = meta_path(path);
    let mut bytes = serde_json::to_vec_pretty(&meta)
        .map_err(|e| Error::Validation(format!("meta serialization: {e}")))?;
    bytes.push(b'\n');
    fs::write(&sidecar, bytes).map_err(|e| Error::io(&sidecar, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_jsonl_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vid1.jsonl");
        let t = NarrationTranscript {
            video_id: "vid1".into(),
            duration_s: 30.0,
            sentences: vec![
                NarrationSentence {
                    text: "first".into(),
                    start_s: 0.0,
                    end_s: 2.0,
                },
                NarrationSentence {
                    text: "second".into(),
                    start_s: 2.5,
                    end_s: 4.0,
                },
            ],
        };
        write_transcript(&p, &t, "How to peel an apple").unwrap();
        let load = load_transcript(&p).unwrap();
        assert_eq!(load.transcript, t);
        assert_eq!(load.title, "How to peel an apple");
        assert!(!load.was_unsorted);
    }

    #[test]
    fn unsorted_lines_are_sorted_and_flagged() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.jsonl");
        std::fs::write(
            &p,
            concat!(
                "{\"text\":\"b\",\"start_s\":5.0,\"end_s\":6.0}\n",
                "{\"text\":\"a\",\"start_s\":1.0,\"end_s\":2.0}\n"
            ),
        )
        .unwrap();
        let load = load_transcript(&p).unwrap();
        assert!(load.was_unsorted);
        assert_eq!(load.transcript.sentences[0].text, "a");
        assert_eq!(load.transcript.video_id, "v");
        assert_eq!(load.transcript.duration_s, 6.0);
    }

    #[test]
    fn malformed_line_reports_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.jsonl");
        std::fs::write(
            &p,
            "{\"text\":\"a\",\"start_s\":1.0,\"end_s\":2.0}\nnot json\n",
        )
        .unwrap();
        match load_transcript(&p) {
            Err(Error::MalformedLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected malformed line, got {other:?}"),
        }
    }

    #[test]
    fn invalid_interval_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.jsonl");
        std::fs::write(&p, "{\"text\":\"a\",\"start_s\":3.0,\"end_s\":2.0}\n").unwrap();
        assert!(matches!(
            load_transcript(&p),
            Err(Error::MalformedLine { line: 1, .. })
        ));
    }
}
