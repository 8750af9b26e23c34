//! The end-to-end build: transform → generate → validate → mix → stats.
//!
//! Every artifact is first written with a `.partial` suffix and only renamed
//! once the whole run has succeeded, so a failed run never leaves files that
//! look complete.

use std::fmt;
use std::path::{Path, PathBuf};

use agentdial_core::digest::sha256_hex;
use agentdial_core::generate::{
    generate_batch, split_turn_samples_default, GenParams, Generated, GenerationClient, PromptOptions, SeedDialogue,
};
use agentdial_core::mix::{dataset_stats, interleave, render_jsonl, render_samples_jsonl, render_stats_table, DatasetStats};
use agentdial_core::model::{load_registry_str, parse_compact_registry};
use agentdial_core::templates::DST_INSTRUCTION;
use agentdial_core::tokenize::ReferenceTokenizer;
use agentdial_core::transform::{snips_to_dst, transform_fc_record, FcRecord, MaskMap, SnipsRecord};
use agentdial_core::validate::{check_dialogue, sample_for_review, ValidationReport};
use agentdial_core::{FunctionRegistry, InstructionSample, ReactDialogue};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::PipelineConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Load,
    TransformDst,
    TransformFc,
    Generate,
    Validate,
    Mix,
    Stats,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::TransformDst => "transform-dst",
            Stage::TransformFc => "transform-fc",
            Stage::Generate => "generate",
            Stage::Validate => "validate",
            Stage::Mix => "mix",
            Stage::Stats => "stats",
            Stage::Write => "write",
        };
        f.write_str(s)
    }
}

/// A failure in one stage, with the 0-based index of the offending record
/// when there is one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineError {
    pub stage: Stage,
    pub index: Option<usize>,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: Stage, message: impl fmt::Display) -> Self {
        PipelineError {
            stage,
            index: None,
            message: message.to_string(),
        }
    }

    pub fn at(stage: Stage, index: usize, message: impl fmt::Display) -> Self {
        PipelineError {
            stage,
            index: Some(index),
            message: message.to_string(),
        }
    }
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "stage {}: record {}: {}", self.stage, i, self.message),
            None => write!(f, "stage {}: {}", self.stage, self.message),
        }
    }
}

impl std::error::Error for PipelineError {}

/// Loads a registry written either as a JSON tool list or as numbered
/// `Name(param, ...)` lines.
pub fn load_registry_file(path: &Path) -> Result<FunctionRegistry, PipelineError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PipelineError::new(Stage::Load, format!("{}: {e}", path.display())))?;
    let result = if text.trim_start().starts_with(['[', '{']) {
        load_registry_str(&text)
    } else {
        parse_compact_registry(&text)
    };
    result.map_err(|e| PipelineError::new(Stage::Load, format!("{}: {e}", path.display())))
}

/// Reads one JSON document per non-blank line. Errors carry the record index.
pub fn read_records<T: DeserializeOwned>(path: &Path, stage: Stage) -> Result<Vec<T>, PipelineError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PipelineError::new(stage, format!("{}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| PipelineError::at(stage, i, format!("{}: {e}", path.display())))
        })
        .collect()
}

/// Renders values as one JSON document per line.
pub fn render_records<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn transform_dst(records: &[SnipsRecord]) -> Result<Vec<InstructionSample>, PipelineError> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| snips_to_dst(r, DST_INSTRUCTION).map_err(|e| PipelineError::at(Stage::TransformDst, i, e)))
        .collect()
}

/// Transforms tool-calling records; the mask decision for record `i` depends
/// only on `seed ^ i`.
pub fn transform_fc(
    records: &[FcRecord],
    seed: u64,
    mask_probability: f64,
) -> Result<(Vec<InstructionSample>, Vec<Option<MaskMap>>), PipelineError> {
    let mut samples = Vec::with_capacity(records.len());
    let mut masks = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let (s, m) =
            transform_fc_record(r, i as u64, seed, mask_probability).map_err(|e| PipelineError::at(Stage::TransformFc, i, e))?;
        samples.push(s);
        masks.push(m);
    }
    Ok((samples, masks))
}

/// Generates one trace per seed, in seed order. The first failure aborts
/// with that seed's index.
pub fn generate(
    seeds: &[SeedDialogue],
    reg: &FunctionRegistry,
    registry_ref: &str,
    client: &dyn GenerationClient,
    params: &GenParams,
    opts: PromptOptions,
    concurrency: usize,
) -> Result<Vec<Generated>, PipelineError> {
    generate_batch(seeds, reg, registry_ref, client, params, opts, concurrency)
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| PipelineError::at(Stage::Generate, i, format!("seed {:?}: {e}", seeds[i].id))))
        .collect()
}

pub fn validate_all(dialogues: &[ReactDialogue], reg: &FunctionRegistry) -> Vec<ValidationReport> {
    dialogues.iter().map(|d| check_dialogue(d, reg)).collect()
}

pub fn split_all(dialogues: &[ReactDialogue], reg: &FunctionRegistry) -> Vec<InstructionSample> {
    dialogues.iter().flat_map(|d| split_turn_samples_default(d, reg)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub file: String,
    pub sha256: String,
    /// Line count for line-delimited files.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub records: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceEntry {
    pub name: String,
    /// Input file name (without directory).
    pub input: String,
    pub records: usize,
    pub samples: usize,
}

/// Everything needed to reproduce a run. Holds no absolute paths or clock
/// readings, so identical inputs produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub shuffle_seed: u64,
    pub sample_seed: u64,
    pub mask_probability: f64,
    pub dedup: bool,
    pub generation: Option<serde_json::Value>,
    pub inputs: Vec<FileDigest>,
    pub sources: Vec<SourceEntry>,
    pub sample_count: usize,
    pub outputs: Vec<FileDigest>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
    pub stats: DatasetStats,
    pub reports: Vec<ValidationReport>,
}

/// Output files written under `.partial` names until [`Staging::commit`].
struct Staging {
    dir: PathBuf,
    files: Vec<(String, String)>,
    digests: Vec<FileDigest>,
}

impl Staging {
    fn new(dir: &Path) -> Result<Self, PipelineError> {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::new(Stage::Write, format!("{}: {e}", dir.display())))?;
        Ok(Staging {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            digests: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, text: &str, line_delimited: bool) -> Result<(), PipelineError> {
        let partial = format!("{name}.partial");
        let path = self.dir.join(&partial);
        std::fs::write(&path, text).map_err(|e| PipelineError::new(Stage::Write, format!("{}: {e}", path.display())))?;
        self.files.push((partial, name.to_string()));
        self.digests.push(FileDigest {
            file: name.to_string(),
            sha256: sha256_hex(text.as_bytes()),
            records: line_delimited.then(|| text.lines().count()),
        });
        Ok(())
    }

    fn commit(self) -> Result<(), PipelineError> {
        for (partial, name) in &self.files {
            std::fs::rename(self.dir.join(partial), self.dir.join(name))
                .map_err(|e| PipelineError::new(Stage::Write, format!("{name}: {e}")))?;
        }
        Ok(())
    }
}

fn input_digest(path: &Path) -> Result<FileDigest, PipelineError> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::new(Stage::Load, format!("{}: {e}", path.display())))?;
    Ok(FileDigest {
        file: file_name(path),
        sha256: sha256_hex(&bytes),
        records: None,
    })
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Runs the full build described by `cfg`. `client` is only used when seed
/// dialogues are configured.
pub fn run_pipeline(cfg: &PipelineConfig, client: &dyn GenerationClient) -> Result<RunOutcome, PipelineError> {
    cfg.validate().map_err(|e| PipelineError::new(Stage::Config, e))?;
    let reg = load_registry_file(&cfg.registry)?;
    let registry_ref = file_name(&cfg.registry);
    let mut inputs = vec![input_digest(&cfg.registry)?];
    let mut sources = Vec::new();
    let mut streams: Vec<(String, Vec<InstructionSample>)> = Vec::new();
    let mut out = Staging::new(&cfg.out_dir)?;

    if let Some(path) = &cfg.sources.snips {
        inputs.push(input_digest(path)?);
        let records: Vec<SnipsRecord> = read_records(path, Stage::TransformDst)?;
        let samples = transform_dst(&records)?;
        out.write("tod.jsonl", &render_samples_jsonl(&samples), true)?;
        sources.push(SourceEntry {
            name: "tod".into(),
            input: file_name(path),
            records: records.len(),
            samples: samples.len(),
        });
        streams.push(("tod".into(), samples));
    }

    if let Some(path) = &cfg.sources.fc {
        inputs.push(input_digest(path)?);
        let records: Vec<FcRecord> = read_records(path, Stage::TransformFc)?;
        let (samples, masks) = transform_fc(&records, cfg.seed, cfg.transform.mask_probability)?;
        out.write("la.jsonl", &render_samples_jsonl(&samples), true)?;
        let mask_lines: Vec<_> = masks
            .iter()
            .enumerate()
            .map(|(index, m)| json!({"index": index, "mask": m}))
            .collect();
        out.write("la.masks.jsonl", &render_records(&mask_lines), true)?;
        sources.push(SourceEntry {
            name: "la".into(),
            input: file_name(path),
            records: records.len(),
            samples: samples.len(),
        });
        streams.push(("la".into(), samples));
    }

    let mut reports = Vec::new();
    let mut generation = None;
    if let Some(path) = &cfg.sources.seeds {
        inputs.push(input_digest(path)?);
        if let Some(replay) = &cfg.generation.replay_file {
            inputs.push(input_digest(replay)?);
        }
        let seeds: Vec<SeedDialogue> = read_records(path, Stage::Generate)?;
        let params = cfg.generation.params();
        let opts = PromptOptions {
            include_seed_frames: cfg.generation.include_seed_frames,
        };
        let generated = generate(&seeds, &reg, &registry_ref, client, &params, opts, cfg.generation.concurrency)?;
        let log: Vec<_> = generated
            .iter()
            .map(|g| json!({"seed_id": g.dialogue.id, "attempts": g.attempts, "lints": g.lints}))
            .collect();
        out.write("generation_log.jsonl", &render_records(&log), true)?;
        let dialogues: Vec<ReactDialogue> = generated.into_iter().map(|g| g.dialogue).collect();
        out.write("dialogues.jsonl", &render_records(&dialogues), true)?;

        reports = validate_all(&dialogues, &reg);
        out.write("validation.jsonl", &render_records(&reports), true)?;
        let ids: Vec<String> = dialogues.iter().map(|d| d.id.clone()).collect();
        let n = cfg.annotation.sample_size.min(ids.len());
        let sampled =
            sample_for_review(&ids, n, cfg.sample_seed()).map_err(|e| PipelineError::new(Stage::Validate, e))?;
        let review = json!({"seed": cfg.sample_seed(), "size": n, "ids": sampled});
        out.write("review_sample.json", &(serde_json::to_string_pretty(&review).expect("json") + "\n"), false)?;

        let samples = split_all(&dialogues, &reg);
        out.write("cra.jsonl", &render_samples_jsonl(&samples), true)?;
        sources.push(SourceEntry {
            name: "cra".into(),
            input: file_name(path),
            records: seeds.len(),
            samples: samples.len(),
        });
        streams.push(("cra".into(), samples));
        generation = Some(json!({
            "client": cfg.generation.client,
            "params": params,
            "include_seed_frames": opts.include_seed_frames,
        }));
    }

    let mixed = interleave(&streams, cfg.shuffle_seed(), cfg.mix.dedup);
    let (data, meta) = render_jsonl(&mixed);
    out.write("dataset.jsonl", &data, true)?;
    out.write("dataset.meta.jsonl", &meta, true)?;

    let stats = dataset_stats(&streams, &ReferenceTokenizer);
    out.write("stats.txt", &render_stats_table(&stats), false)?;
    out.write("stats.json", &(serde_json::to_string_pretty(&stats).expect("json") + "\n"), false)?;

    let manifest = Manifest {
        tool: "agentdial".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.seed,
        shuffle_seed: cfg.shuffle_seed(),
        sample_seed: cfg.sample_seed(),
        mask_probability: cfg.transform.mask_probability,
        dedup: cfg.mix.dedup,
        generation,
        inputs,
        sources,
        sample_count: mixed.len(),
        outputs: out.digests.clone(),
    };
    out.write("manifest.json", &(serde_json::to_string_pretty(&manifest).expect("json") + "\n"), false)?;
    out.commit()?;
    Ok(RunOutcome {
        out_dir: cfg.out_dir.clone(),
        manifest,
        stats,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_display_names_stage_and_index() {
        let e = PipelineError::at(Stage::TransformFc, 2, "bad tool");
        assert_eq!(e.to_string(), "stage transform-fc: record 2: bad tool");
    }

    #[test]
    fn bad_record_index_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.jsonl");
        std::fs::write(&p, "{\"utterance\":\"a\",\"domain\":\"D\"}\n\n{not json}\n").unwrap();
        let err = read_records::<SnipsRecord>(&p, Stage::TransformDst).unwrap_err();
        assert_eq!(err.index, Some(1));
        assert_eq!(err.stage, Stage::TransformDst);
    }

    #[test]
    fn compact_registry_files_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.txt");
        std::fs::write(&p, "1. FindEvents(category, city_of_event)\n").unwrap();
        assert!(load_registry_file(&p).unwrap().contains("FindEvents"));
    }
}
