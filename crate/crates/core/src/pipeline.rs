//! Batch pipeline driver.
//!
//! Six stages run in a fixed order: curate -> label -> align -> train ->
//! selftrain -> eval. A manifest in the work directory records a content
//! hash of every input and output per stage; a stage is skipped when its
//! recorded inputs match the current files and its outputs are still intact.
//! Once any stage actually executes, every later stage runs too, so a
//! corrupted or regenerated intermediate re-runs its whole suffix.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::align::{align, AlignmentConfig, FrameScorer, StubScorer, VlmScorer};
use crate::error::{Error, Result};
use crate::exec::ordered_map;
use crate::features::{read_feature_file, write_feature_file};
use crate::ingest::{build_verb_lexicon, curate, CurateConfig, VerbLexicon, VideoRecord};
use crate::labels::{read_ground_truth, read_label_file, write_label_file};
use crate::llm::chain::{run_chain, ActionStateChain, ChainStats};
use crate::llm::client::{LabelerClient, Mode, ENV_LLM_URL, ENV_VLM_URL};
use crate::metrics::{evaluate_states, Pooling};
use crate::models::{MlpModel, TcnModel};
use crate::nn::tensor::Tensor2;
use crate::trainer::{self_train, train_teachers, LabeledSequence, TrainConfig};
use crate::transcripts::{load_transcript, meta_path};
use crate::types::{FeatureSequence, StateVocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Curate,
    Label,
    Align,
    Train,
    SelfTrain,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Curate,
        Stage::Label,
        Stage::Align,
        Stage::Train,
        Stage::SelfTrain,
        Stage::Eval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Curate => "curate",
            Stage::Label => "label",
            Stage::Align => "align",
            Stage::Train => "train",
            Stage::SelfTrain => "selftrain",
            Stage::Eval => "eval",
        }
    }

    pub fn from_name(name: &str) -> Option<Stage> {
        Stage::ALL.iter().copied().find(|s| s.name() == name)
    }

    fn index(self) -> usize {
        Stage::ALL.iter().position(|&s| s == self).unwrap()
    }
}

/// Pipeline configuration, parsed from a `key = value` file. Relative paths
/// are resolved against the file's directory.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub source: PathBuf,
    pub vocab: PathBuf,
    pub transcripts: PathBuf,
    pub features: PathBuf,
    pub ground_truth: Option<PathBuf>,
    pub scorer: Option<PathBuf>,
    pub cache: PathBuf,
    pub model: String,
    pub mode: Mode,
    pub workdir: PathBuf,
    pub train_config: PathBuf,
    pub lexicon: Option<PathBuf>,
    pub delta_t_s: f64,
    pub background_threshold: f32,
    /// History cap for verdict prompts; 0 means the full history.
    pub context_cap: usize,
    pub max_words: usize,
    pub require_title_and_narration: bool,
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        let bad = |line: usize, message: String| Error::MalformedLine {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut vocab = None;
        let mut transcripts = None;
        let mut features = None;
        let mut ground_truth = None;
        let mut scorer = None;
        let mut cache = None;
        let mut model = None;
        let mut mode = Mode::Replay;
        let mut workdir = None;
        let mut train_config = None;
        let mut lexicon = None;
        let mut delta_t_s = 10.0f64;
        let mut background_threshold = 0.2f32;
        let mut context_cap = 0usize;
        let mut max_words = 12_000usize;
        let mut require_title_and_narration = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| bad(line, format!("expected key = value, got {trimmed:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let path_of = |v: &str| {
                let p = PathBuf::from(v);
                if p.is_absolute() {
                    p
                } else {
                    root.join(p)
                }
            };
            match key {
                "vocab" => vocab = Some(path_of(value)),
                "transcripts" => transcripts = Some(path_of(value)),
                "features" => features = Some(path_of(value)),
                "ground_truth" => ground_truth = Some(path_of(value)),
                "scorer" => scorer = Some(path_of(value)),
                "cache" => cache = Some(path_of(value)),
                "model" => model = Some(value.to_string()),
                "mode" => {
                    mode = value
                        .parse()
                        .map_err(|e: Error| bad(line, e.to_string()))?
                }
                "workdir" => workdir = Some(path_of(value)),
                "train_config" => train_config = Some(path_of(value)),
                "lexicon" => lexicon = Some(path_of(value)),
                "delta_t_s" => {
                    delta_t_s = value
                        .parse()
                        .map_err(|e| bad(line, format!("delta_t_s: {e}")))?
                }
                "background_threshold" => {
                    background_threshold = value
                        .parse()
                        .map_err(|e| bad(line, format!("background_threshold: {e}")))?
                }
                "context_cap" => {
                    context_cap = value
                        .parse()
                        .map_err(|e| bad(line, format!("context_cap: {e}")))?
                }
                "max_words" => {
                    max_words = value
                        .parse()
                        .map_err(|e| bad(line, format!("max_words: {e}")))?
                }
                "require_title_and_narration" => {
                    require_title_and_narration = value
                        .parse()
                        .map_err(|e| bad(line, format!("require_title_and_narration: {e}")))?
                }
                other => return Err(bad(line, format!("unknown key {other:?}"))),
            }
        }
        let need = |name: &str, v: Option<PathBuf>| {
            v.ok_or_else(|| Error::Config(format!("{name} is required in {}", path.display())))
        };
        Ok(PipelineConfig {
            source: path.to_path_buf(),
            vocab: need("vocab", vocab)?,
            transcripts: need("transcripts", transcripts)?,
            features: need("features", features)?,
            ground_truth,
            scorer,
            cache: need("cache", cache)?,
            model: model.ok_or_else(|| {
                Error::Config(format!("model is required in {}", path.display()))
            })?,
            mode,
            workdir: need("workdir", workdir)?,
            train_config: need("train_config", train_config)?,
            lexicon,
            delta_t_s,
            background_threshold,
            context_cap,
            max_words,
            require_title_and_narration,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let expect = |p: &Path, what: &str| {
            if p.exists() {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} {} does not exist", p.display())))
            }
        };
        expect(&self.vocab, "vocabulary file")?;
        expect(&self.transcripts, "transcript directory")?;
        expect(&self.features, "feature directory")?;
        expect(&self.train_config, "training config")?;
        if let Some(p) = &self.scorer {
            expect(p, "scorer fixture")?;
        }
        if let Some(p) = &self.lexicon {
            expect(p, "verb lexicon")?;
        }
        if let Some(p) = &self.ground_truth {
            expect(p, "ground-truth directory")?;
        }
        if !(self.delta_t_s.is_finite() && self.delta_t_s >= 0.0) {
            return Err(Error::Config(format!(
                "delta_t_s must be non-negative, got {}",
                self.delta_t_s
            )));
        }
        Ok(())
    }

    fn alignment(&self) -> AlignmentConfig {
        AlignmentConfig {
            delta_t_s: self.delta_t_s,
            background_threshold: self.background_threshold,
        }
    }

    fn cap(&self) -> Option<usize> {
        if self.context_cap == 0 {
            None
        } else {
            Some(self.context_cap)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StageRecord {
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    stats: serde_json::Value,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct Manifest {
    stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    fn load(path: &Path) -> Result<Manifest> {
        if !path.exists() {
            return Ok(Manifest::default());
        }
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::MalformedLine {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    /// Fresh = recorded, same inputs, and all outputs still hash-match.
    fn is_fresh(&self, stage: &str, inputs: &BTreeMap<String, String>, root: &Path) -> bool {
        let Some(record) = self.stages.get(stage) else {
            return false;
        };
        if &record.inputs != inputs {
            return false;
        }
        record
            .outputs
            .iter()
            .all(|(rel, want)| matches!(hash_file(&root.join(rel)), Ok(h) if &h == want))
    }
}

fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn rel_key(root: &Path, path: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .to_string_lossy()
        .into_owned()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| Error::Validation(format!("serialization for {}: {e}", path.display())))?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::MalformedLine {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// One curated video as recorded in the work directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CuratedEntry {
    pub video_id: String,
    pub transcript_file: String,
    pub title: String,
    pub word_count: usize,
}

struct Ctx {
    cfg: PipelineConfig,
    root: PathBuf,
    vocab: StateVocabulary,
    state_names: Vec<String>,
    train: TrainConfig,
    fingerprint: String,
}

impl Ctx {
    fn new(cfg: &PipelineConfig) -> Result<Ctx> {
        let vocab: StateVocabulary = read_json(&cfg.vocab)?;
        vocab.validate()?;
        let train_text =
            fs::read_to_string(&cfg.train_config).map_err(|e| Error::io(&cfg.train_config, e))?;
        let train = TrainConfig::from_key_values(&train_text)?;
        let cfg_bytes = fs::read(&cfg.source).map_err(|e| Error::io(&cfg.source, e))?;
        let mut hasher = Sha256::new();
        hasher.update(&cfg_bytes);
        hasher.update(train_text.as_bytes());
        let root = cfg
            .source
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .to_path_buf();
        Ok(Ctx {
            cfg: cfg.clone(),
            root,
            state_names: vocab.states.iter().map(|s| s.name.clone()).collect(),
            vocab,
            train,
            fingerprint: hex(&hasher.finalize()),
        })
    }

    fn curated_path(&self) -> PathBuf {
        self.cfg.workdir.join("curated.json")
    }

    fn lexicon_path(&self) -> PathBuf {
        self.cfg.workdir.join("lexicon.json")
    }

    fn chain_path(&self, video_id: &str) -> PathBuf {
        self.cfg.workdir.join("chains").join(format!("{video_id}.json"))
    }

    fn label_path(&self, video_id: &str) -> PathBuf {
        self.cfg.workdir.join("labels").join(format!("{video_id}.json"))
    }

    fn model_path(&self, name: &str) -> PathBuf {
        self.cfg.workdir.join("models").join(name)
    }

    fn pred_path(&self, video_id: &str) -> PathBuf {
        self.cfg.workdir.join("preds").join(format!("{video_id}.fsq"))
    }

    fn curated(&self) -> Result<Vec<CuratedEntry>> {
        read_json(&self.curated_path())
    }

    fn llm_client(&self) -> Result<LabelerClient> {
        LabelerClient::from_env(
            self.cfg.mode,
            Some(self.cfg.cache.clone()),
            self.cfg.model.clone(),
            ENV_LLM_URL,
        )
    }

    fn dataset(&self, curated: &[CuratedEntry]) -> Result<Vec<LabeledSequence>> {
        curated
            .iter()
            .map(|entry| {
                let feats = read_feature_file(
                    &self.cfg.features.join(format!("{}.fsq", entry.video_id)),
                )?;
                let (timeline, _) = read_label_file(&self.label_path(&entry.video_id))?;
                LabeledSequence::new(&feats, &timeline)
            })
            .collect()
    }
}

fn list_transcript_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("jsonl") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn input_map(ctx: &Ctx, files: &[PathBuf]) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    map.insert("::config".to_string(), ctx.fingerprint.clone());
    for file in files {
        map.insert(rel_key(&ctx.root, file), hash_file(file)?);
    }
    Ok(map)
}

fn stage_inputs(stage: Stage, ctx: &Ctx) -> Result<BTreeMap<String, String>> {
    let cfg = &ctx.cfg;
    let mut files = Vec::new();
    let per_video = |files: &mut Vec<PathBuf>, f: &dyn Fn(&str) -> PathBuf| -> Result<()> {
        for entry in ctx.curated()? {
            files.push(f(&entry.video_id));
        }
        Ok(())
    };
    match stage {
        Stage::Curate => {
            files.push(cfg.vocab.clone());
            for t in list_transcript_files(&cfg.transcripts)? {
                files.push(meta_path(&t));
                files.push(t);
            }
            if let Some(p) = &cfg.lexicon {
                files.push(p.clone());
            }
        }
        Stage::Label => {
            files.push(cfg.vocab.clone());
            files.push(ctx.curated_path());
            for entry in ctx.curated()? {
                let t = cfg.transcripts.join(&entry.transcript_file);
                files.push(meta_path(&t));
                files.push(t);
            }
        }
        Stage::Align => {
            files.push(cfg.vocab.clone());
            files.push(ctx.curated_path());
            per_video(&mut files, &|v| ctx.chain_path(v))?;
            per_video(&mut files, &|v| cfg.features.join(format!("{v}.fsq")))?;
            if let Some(p) = &cfg.scorer {
                files.push(p.clone());
            }
        }
        Stage::Train => {
            files.push(ctx.curated_path());
            per_video(&mut files, &|v| ctx.label_path(v))?;
            per_video(&mut files, &|v| cfg.features.join(format!("{v}.fsq")))?;
        }
        Stage::SelfTrain => {
            files.push(ctx.curated_path());
            per_video(&mut files, &|v| ctx.label_path(v))?;
            per_video(&mut files, &|v| cfg.features.join(format!("{v}.fsq")))?;
            for name in ["mlp.ckpt", "mlp.ckpt.json", "tcn.ckpt", "tcn.ckpt.json"] {
                files.push(ctx.model_path(name));
            }
        }
        Stage::Eval => {
            let gt = cfg.ground_truth.as_ref().ok_or_else(|| {
                Error::Config("eval needs a ground_truth directory in the config".into())
            })?;
            files.push(cfg.vocab.clone());
            files.push(ctx.curated_path());
            per_video(&mut files, &|v| cfg.features.join(format!("{v}.fsq")))?;
            per_video(&mut files, &|v| gt.join(format!("{v}.json")))?;
            files.push(ctx.model_path("student_tcn.ckpt"));
            files.push(ctx.model_path("student_tcn.ckpt.json"));
        }
    }
    input_map(ctx, &files)
}

fn stage_curate(ctx: &Ctx) -> Result<(Vec<PathBuf>, serde_json::Value)> {
    let files = list_transcript_files(&ctx.cfg.transcripts)?;
    let mut records = Vec::with_capacity(files.len());
    let mut file_of: BTreeMap<String, String> = BTreeMap::new();
    for path in &files {
        let load = load_transcript(path)?;
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        file_of.insert(load.transcript.video_id.clone(), name);
        records.push(VideoRecord {
            video_id: load.transcript.video_id.clone(),
            title: load.title,
            transcript: load.transcript,
        });
    }
    let (lexicon, lexicon_rows_skipped) = match &ctx.cfg.lexicon {
        Some(path) => (VerbLexicon::read(path)?, 0),
        None => build_verb_lexicon(&ctx.llm_client()?, &ctx.vocab)?,
    };
    let report = curate(
        records,
        &ctx.vocab,
        &lexicon,
        &CurateConfig {
            max_words: ctx.cfg.max_words,
            require_title_and_narration: ctx.cfg.require_title_and_narration,
        },
    )?;
    let entries: Vec<CuratedEntry> = report
        .kept
        .iter()
        .map(|(_, curated)| CuratedEntry {
            video_id: curated.video_id.clone(),
            transcript_file: file_of[&curated.video_id].clone(),
            title: curated.title.clone(),
            word_count: curated.word_count,
        })
        .collect();
    lexicon.write(&ctx.lexicon_path())?;
    write_json(&ctx.curated_path(), &entries)?;
    let stats = json!({
        "curate": report.stats,
        "lexicon_rows_skipped": lexicon_rows_skipped,
    });
    Ok((vec![ctx.lexicon_path(), ctx.curated_path()], stats))
}

fn stage_label(ctx: &Ctx) -> Result<(Vec<PathBuf>, serde_json::Value)> {
    let curated = ctx.curated()?;
    if curated.is_empty() {
        return Err(Error::Validation("no curated videos to label".into()));
    }
    let client = ctx.llm_client()?;
    let dir = ctx.cfg.workdir.join("chains");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let cap = ctx.cfg.cap();
    let results = ordered_map(curated.len(), |i| -> Result<(PathBuf, ChainStats)> {
        let entry = &curated[i];
        let load = load_transcript(&ctx.cfg.transcripts.join(&entry.transcript_file))?;
        let chain = run_chain(&client, &ctx.vocab, &load.transcript, cap)?;
        let path = ctx.chain_path(&entry.video_id);
        write_json(&path, &chain)?;
        Ok((path, chain.stats))
    });
    let mut outputs = Vec::with_capacity(results.len());
    let mut total = ChainStats::default();
    for r in results {
        let (path, stats) = r?;
        outputs.push(path);
        total.malformed_extract_rows += stats.malformed_extract_rows;
        total.malformed_describe_rows += stats.malformed_describe_rows;
        total.malformed_infer_answers += stats.malformed_infer_answers;
        total.interval_fallbacks += stats.interval_fallbacks;
    }
    let stats = json!({ "videos": outputs.len(), "chain": total });
    Ok((outputs, stats))
}

fn stage_align(ctx: &Ctx) -> Result<(Vec<PathBuf>, serde_json::Value)> {
    let curated = ctx.curated()?;
    let scorer: Box<dyn FrameScorer> = match &ctx.cfg.scorer {
        Some(path) => Box::new(StubScorer::read(path)?),
        None => Box::new(VlmScorer {
            client: LabelerClient::from_env(
                ctx.cfg.mode,
                Some(ctx.cfg.cache.clone()),
                ctx.cfg.model.clone(),
                ENV_VLM_URL,
            )?,
        }),
    };
    let dir = ctx.cfg.workdir.join("labels");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let acfg = ctx.cfg.alignment();
    let mut outputs = Vec::new();
    let mut per_video = Vec::new();
    let mut rate_sum = 0.0;
    for entry in &curated {
        let chain: ActionStateChain = read_json(&ctx.chain_path(&entry.video_id))?;
        let feats =
            read_feature_file(&ctx.cfg.features.join(format!("{}.fsq", entry.video_id)))?;
        let (timeline, stats) = align(&chain, feats.num_frames, &ctx.vocab, scorer.as_ref(), &acfg)
            .map_err(|e| e.in_stage("align", &entry.video_id))?;
        let path = ctx.label_path(&entry.video_id);
        write_label_file(&path, &timeline, &ctx.vocab.object_primary_name, &ctx.state_names)?;
        outputs.push(path);
        rate_sum += stats.assignment_rate;
        per_video.push(json!({ "video_id": entry.video_id, "stats": stats }));
    }
    let stats_path = ctx.cfg.workdir.join("align_stats.json");
    let summary = json!({
        "videos": per_video,
        "mean_assignment_rate": if curated.is_empty() { 0.0 } else { rate_sum / curated.len() as f64 },
    });
    write_json(&stats_path, &summary)?;
    outputs.push(stats_path);
    Ok((outputs, summary))
}

fn stage_train(ctx: &Ctx) -> Result<(Vec<PathBuf>, serde_json::Value)> {
    let curated = ctx.curated()?;
    let dataset = ctx.dataset(&curated)?;
    let run = train_teachers(&dataset, &ctx.train)?;
    let dir = ctx.cfg.workdir.join("models");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    run.mlp.save(&ctx.model_path("mlp.ckpt"))?;
    run.tcn.save(&ctx.model_path("tcn.ckpt"))?;
    let summary_path = ctx.cfg.workdir.join("train_summary.json");
    let stats = json!({
        "steps": run.steps,
        "mlp_loss": run.mlp_loss,
        "tcn_loss": run.tcn_loss,
    });
    write_json(&summary_path, &stats)?;
    let outputs = vec![
        ctx.model_path("mlp.ckpt"),
        ctx.model_path("mlp.ckpt.json"),
        ctx.model_path("tcn.ckpt"),
        ctx.model_path("tcn.ckpt.json"),
        summary_path,
    ];
    Ok((outputs, stats))
}

fn stage_selftrain(ctx: &Ctx) -> Result<(Vec<PathBuf>, serde_json::Value)> {
    let curated = ctx.curated()?;
    let dataset = ctx.dataset(&curated)?;
    let teacher_mlp = MlpModel::load(&ctx.model_path("mlp.ckpt"))?;
    let teacher_tcn = TcnModel::load(&ctx.model_path("tcn.ckpt"))?;
    let run = self_train(&teacher_mlp, &teacher_tcn, &dataset, &ctx.train)?;
    run.student_mlp.save(&ctx.model_path("student_mlp.ckpt"))?;
    run.student_tcn.save(&ctx.model_path("student_tcn.ckpt"))?;
    let summary_path = ctx.cfg.workdir.join("selftrain_summary.json");
    let stats = json!({
        "steps": run.steps,
        "student_mlp_loss": run.student_mlp_loss,
        "student_tcn_loss": run.student_tcn_loss,
    });
    write_json(&summary_path, &stats)?;
    let outputs = vec![
        ctx.model_path("student_mlp.ckpt"),
        ctx.model_path("student_mlp.ckpt.json"),
        ctx.model_path("student_tcn.ckpt"),
        ctx.model_path("student_tcn.ckpt.json"),
        summary_path,
    ];
    Ok((outputs, stats))
}

fn stage_eval(ctx: &Ctx) -> Result<(Vec<PathBuf>, serde_json::Value)> {
    let gt_dir = ctx.cfg.ground_truth.as_ref().ok_or_else(|| {
        Error::Config("eval needs a ground_truth directory in the config".into())
    })?;
    let curated = ctx.curated()?;
    if curated.is_empty() {
        return Err(Error::Validation("no curated videos to evaluate".into()));
    }
    let student = TcnModel::load(&ctx.model_path("student_tcn.ckpt"))?;
    let k = ctx.vocab.num_states();
    let dir = ctx.cfg.workdir.join("preds");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut outputs = Vec::new();
    let mut per_video = Vec::with_capacity(curated.len());
    for entry in &curated {
        let feats =
            read_feature_file(&ctx.cfg.features.join(format!("{}.fsq", entry.video_id)))?;
        let gt = read_ground_truth(&gt_dir.join(format!("{}.json", entry.video_id)))?;
        if gt.num_frames != feats.num_frames || gt.num_states != k {
            return Err(Error::shape(
                format!("ground truth for {}", entry.video_id),
                format!("{} x {}", feats.num_frames, k),
                format!("{} x {}", gt.num_frames, gt.num_states),
            ));
        }
        let x = Tensor2::from_flat(feats.num_frames, feats.feat_dim, feats.data.clone());
        let probs = student
            .forward(&x)?
            .pop()
            .ok_or_else(|| Error::Validation("model produced no stages".into()))?;
        let pred_path = ctx.pred_path(&entry.video_id);
        write_feature_file(
            &pred_path,
            &FeatureSequence::new(
                entry.video_id.clone(),
                feats.num_frames,
                k,
                feats.fps,
                probs.data().to_vec(),
            )?,
        )?;
        outputs.push(pred_path);
        let scores: Vec<f64> = probs.data().iter().map(|&p| p as f64).collect();
        per_video.push((scores, gt.values));
    }
    let report = evaluate_states(
        &ctx.vocab.object_primary_name,
        &ctx.state_names,
        &per_video,
        k,
        Pooling::PerCategory,
    )?;
    let report_path = ctx.cfg.workdir.join("report.json");
    write_json(&report_path, &report)?;
    outputs.push(report_path);
    let stats = serde_json::to_value(&report)
        .map_err(|e| Error::Validation(format!("report stats: {e}")))?;
    Ok((outputs, stats))
}

fn run_stage(stage: Stage, ctx: &Ctx) -> Result<(Vec<PathBuf>, serde_json::Value)> {
    match stage {
        Stage::Curate => stage_curate(ctx),
        Stage::Label => stage_label(ctx),
        Stage::Align => stage_align(ctx),
        Stage::Train => stage_train(ctx),
        Stage::SelfTrain => stage_selftrain(ctx),
        Stage::Eval => stage_eval(ctx),
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub executed: Vec<&'static str>,
    pub skipped: Vec<&'static str>,
}

/// Run every stage up to and including `until`, skipping stages whose
/// recorded inputs and outputs are unchanged. `force` re-runs everything.
pub fn run_pipeline(cfg: &PipelineConfig, until: Stage, force: bool) -> Result<RunSummary> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.workdir).map_err(|e| Error::io(&cfg.workdir, e))?;
    let ctx = Ctx::new(cfg)?;
    let manifest_path = cfg.workdir.join("manifest.json");
    let mut manifest = Manifest::load(&manifest_path)?;
    let mut dirty = force;
    let mut summary = RunSummary::default();
    for &stage in Stage::ALL.iter().take(until.index() + 1) {
        let inputs = stage_inputs(stage, &ctx)?;
        if !dirty && manifest.is_fresh(stage.name(), &inputs, &ctx.root) {
            summary.skipped.push(stage.name());
            continue;
        }
        let (output_paths, stats) = run_stage(stage, &ctx)?;
        let mut outputs = BTreeMap::new();
        for path in &output_paths {
            outputs.insert(rel_key(&ctx.root, path), hash_file(path)?);
        }
        manifest
            .stages
            .insert(stage.name().to_string(), StageRecord { inputs, outputs, stats });
        manifest.write(&manifest_path)?;
        dirty = true;
        summary.executed.push(stage.name());
    }
    Ok(summary)
}
