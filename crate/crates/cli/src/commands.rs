//! Command-line interface. Values resolve as: flag, then config file
//! (`--config`), then built-in default.

use std::collections::BTreeMap;
use std::error::Error;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use agentdial_core::call::CallMatchPolicy;
use agentdial_core::eval::{evaluate, relevance_detection, EvalRecord, Metric};
use agentdial_core::generate::{GenerationClient, PromptOptions, SeedDialogue};
use agentdial_core::mix::{
    dataset_stats, emit_jsonl, interleave, read_jsonl, read_samples_jsonl, render_stats_table, write_samples_jsonl,
};
use agentdial_core::tokenize::ReferenceTokenizer;
use agentdial_core::transform::{FcRecord, SnipsRecord};
use agentdial_core::validate::{error_rate_report, sample_for_review, ValidationReport};
use agentdial_core::{DomainTag, InstructionSample, ReactDialogue};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::client::build_client;
use crate::config::{ClientKind, GenerationConfig, PipelineConfig};
use crate::pipeline::{self, read_records, render_records, Stage};
use crate::service::{open_store, AppState};

pub type CmdResult = Result<(), Box<dyn Error>>;

#[derive(Debug, Parser)]
#[command(name = "agentdial", version, about = "Build, validate and evaluate tool-using dialogue datasets")]
pub struct Cli {
    /// Pipeline config file (TOML); supplies defaults for every subcommand.
    #[arg(long, global = true, env = "AGENTDIAL_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn slot-annotated utterances into dialogue-state-tracking samples.
    TransformDst(TransformDstArgs),
    /// Turn tool-calling records into function-calling samples, masking names at random.
    TransformFc(TransformFcArgs),
    /// Rewrite seed dialogues into ReAct traces with a generation client.
    GenerateCra(GenerateArgs),
    /// Run the automated checks over generated dialogues.
    Validate(ValidateArgs),
    /// Shuffle sample files together into one dataset.
    Mix(MixArgs),
    /// Print per-source sample and token counts.
    Stats(StatsArgs),
    /// Score predictions against gold answers.
    Eval(EvalArgs),
    /// Serve the human review API.
    Serve(ServeArgs),
    /// Run transform, generation, validation, mixing and stats end to end.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct TransformDstArgs {
    /// Slot-annotated records, one per line [config: sources.snips].
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output samples file (tagged JSONL).
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct TransformFcArgs {
    /// Tool-calling records, one per line [config: sources.fc].
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
    /// Where to write the per-record masks.
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// [config: seed; default 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// [config: transform.mask_probability; default 0.5]
    #[arg(long)]
    pub mask_probability: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct ClientArgs {
    /// [config: generation.client]
    #[arg(long, value_enum)]
    pub client: Option<ClientKind>,
    /// [config: generation.replay_file]
    #[arg(long)]
    pub replay_file: Option<PathBuf>,
    /// [config: generation.endpoint]
    #[arg(long)]
    pub endpoint: Option<String>,
    /// [config: generation.model_id]
    #[arg(long)]
    pub model_id: Option<String>,
    /// [config: generation.temperature]
    #[arg(long)]
    pub temperature: Option<f64>,
    /// [config: generation.retries]
    #[arg(long)]
    pub retries: Option<u32>,
    /// [config: generation.concurrency]
    #[arg(long)]
    pub concurrency: Option<usize>,
}

impl ClientArgs {
    fn apply(&self, g: &mut GenerationConfig) {
        if let Some(v) = self.client {
            g.client = v;
        }
        if let Some(v) = &self.replay_file {
            g.replay_file = Some(v.clone());
        }
        if let Some(v) = &self.endpoint {
            g.endpoint = Some(v.clone());
        }
        if let Some(v) = &self.model_id {
            g.model_id = v.clone();
        }
        if let Some(v) = self.temperature {
            g.temperature = v;
        }
        if let Some(v) = self.retries {
            g.retries = v;
        }
        if let Some(v) = self.concurrency {
            g.concurrency = v;
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Seed dialogues, one per line [config: sources.seeds].
    #[arg(long)]
    pub seeds: Option<PathBuf>,
    /// [config: registry]
    #[arg(long)]
    pub registry: Option<PathBuf>,
    /// Generated dialogues (JSONL).
    #[arg(long)]
    pub output: PathBuf,
    /// Also write the per-turn training samples here.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    #[command(flatten)]
    pub client: ClientArgs,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub dialogues: PathBuf,
    /// [config: registry]
    #[arg(long)]
    pub registry: Option<PathBuf>,
    /// Reports (JSONL); printed to stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MixArgs {
    /// `NAME=PATH` or `NAME=PATH@TAG`; TAG is used for records without one.
    #[arg(long = "source", required = true)]
    pub sources: Vec<String>,
    /// [config: mix.shuffle_seed, then seed; default 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Drop exact duplicates [config: mix.dedup].
    #[arg(long)]
    pub dedup: bool,
    /// Dataset file; a `.meta.jsonl` sidecar with domain tags is written next to it.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// `NAME=PATH[@TAG]` tagged sample files, one row each.
    #[arg(long = "source")]
    pub sources: Vec<String>,
    /// A mixed dataset with sidecar; one row per domain tag.
    #[arg(long, conflicts_with = "sources")]
    pub dataset: Option<PathBuf>,
    /// Also write the statistics as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Records `{id, gold, predicted, level_tag?}`, one per line.
    #[arg(long)]
    pub input: PathBuf,
    /// ast, jga, rouge-l, rouge-1, rouge-2, bleu4, relevance.
    #[arg(long = "metric", default_value = "ast")]
    pub metrics: Vec<String>,
    /// Tool registry used to fill parameter defaults for ast [config: registry].
    #[arg(long)]
    pub registry: Option<PathBuf>,
    /// Compare function names case-insensitively.
    #[arg(long)]
    pub ignore_name_case: bool,
    /// Compare strings without trimming.
    #[arg(long)]
    pub no_trim: bool,
    /// Require predicted calls in gold order.
    #[arg(long)]
    pub ordered: bool,
    /// Full report as JSON.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Directory of a finished run [config: out_dir].
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    /// [default: RUN_DIR/dialogues.jsonl]
    #[arg(long)]
    pub dialogues: Option<PathBuf>,
    /// [default: RUN_DIR/validation.jsonl]
    #[arg(long)]
    pub reports: Option<PathBuf>,
    /// Review sample `{ids: [...]}` [default: RUN_DIR/review_sample.json].
    #[arg(long)]
    pub sample: Option<PathBuf>,
    /// [config: annotation.scores; default RUN_DIR/scores.jsonl]
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// [config: annotation.bind; default 127.0.0.1:8080]
    #[arg(long)]
    pub bind: Option<String>,
    /// Environment variable holding the shared API token [config: annotation.token_env].
    #[arg(long)]
    pub token_env: Option<String>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// [config: seed]
    #[arg(long)]
    pub seed: Option<u64>,
    /// [config: out_dir]
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub client: ClientArgs,
}

fn fail(msg: impl Into<String>) -> Box<dyn Error> {
    msg.into().into()
}

fn load_config(path: Option<&Path>) -> Result<Option<PipelineConfig>, Box<dyn Error>> {
    Ok(match path {
        Some(p) => Some(PipelineConfig::load(p)?),
        None => None,
    })
}

/// Flag, then config value, else an error naming both.
fn pick<T>(flag: Option<T>, file: Option<T>, what: &str) -> Result<T, Box<dyn Error>> {
    flag.or(file)
        .ok_or_else(|| fail(format!("{what} is required (flag or config file)")))
}

fn write_text(path: Option<&Path>, text: &str) -> CmdResult {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| fail(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Parses `NAME=PATH` or `NAME=PATH@TAG`.
pub fn parse_source(spec: &str) -> Result<(String, PathBuf, Option<DomainTag>), Box<dyn Error>> {
    let (name, rest) = spec
        .split_once('=')
        .ok_or_else(|| fail(format!("source {spec:?} must look like NAME=PATH[@TAG]")))?;
    let (path, tag) = match rest.rsplit_once('@') {
        Some((p, t)) => (p, Some(DomainTag::parse(t).ok_or_else(|| fail(format!("unknown domain tag {t:?}")))?)),
        None => (rest, None),
    };
    Ok((name.to_string(), PathBuf::from(path), tag))
}

/// Named sample streams in command-line order.
type Streams = Vec<(String, Vec<InstructionSample>)>;

fn load_sources(specs: &[String]) -> Result<Streams, Box<dyn Error>> {
    let mut out: Streams = Vec::new();
    for spec in specs {
        let (name, path, tag) = parse_source(spec)?;
        if out.iter().any(|(n, _)| *n == name) {
            return Err(fail(format!("duplicate source name {name:?}")));
        }
        out.push((name, read_samples_jsonl(&path, tag)?));
    }
    Ok(out)
}

pub fn execute(cli: Cli) -> CmdResult {
    let cfg = load_config(cli.config.as_deref())?;
    let cfg = cfg.as_ref();
    match cli.command {
        Command::TransformDst(a) => transform_dst(a, cfg),
        Command::TransformFc(a) => transform_fc(a, cfg),
        Command::GenerateCra(a) => generate_cra(a, cfg),
        Command::Validate(a) => validate(a, cfg),
        Command::Mix(a) => mix(a, cfg),
        Command::Stats(a) => stats(a),
        Command::Eval(a) => eval(a, cfg),
        Command::Serve(a) => serve(a, cfg),
        Command::Run(a) => run(a, cfg),
    }
}

fn transform_dst(a: TransformDstArgs, cfg: Option<&PipelineConfig>) -> CmdResult {
    let input = pick(a.input, cfg.and_then(|c| c.sources.snips.clone()), "--input")?;
    let records: Vec<SnipsRecord> = read_records(&input, Stage::TransformDst)?;
    let samples = pipeline::transform_dst(&records)?;
    write_samples_jsonl(&samples, &a.output)?;
    eprintln!("wrote {} samples to {}", samples.len(), a.output.display());
    Ok(())
}

fn transform_fc(a: TransformFcArgs, cfg: Option<&PipelineConfig>) -> CmdResult {
    let input = pick(a.input, cfg.and_then(|c| c.sources.fc.clone()), "--input")?;
    let seed = a.seed.or(cfg.map(|c| c.seed)).unwrap_or(0);
    let p = a
        .mask_probability
        .or(cfg.map(|c| c.transform.mask_probability))
        .unwrap_or(0.5);
    if !(0.0..=1.0).contains(&p) {
        return Err(fail("--mask-probability must be within [0, 1]"));
    }
    let records: Vec<FcRecord> = read_records(&input, Stage::TransformFc)?;
    let (samples, masks) = pipeline::transform_fc(&records, seed, p)?;
    write_samples_jsonl(&samples, &a.output)?;
    if let Some(m) = &a.masks {
        let lines: Vec<_> = masks.iter().enumerate().map(|(i, m)| json!({"index": i, "mask": m})).collect();
        write_text(Some(m), &render_records(&lines))?;
    }
    let masked = masks.iter().filter(|m| m.is_some()).count();
    eprintln!("wrote {} samples ({masked} masked) to {}", samples.len(), a.output.display());
    Ok(())
}

fn generation_config(args: &ClientArgs, cfg: Option<&PipelineConfig>) -> GenerationConfig {
    let mut g = cfg.map(|c| c.generation.clone()).unwrap_or_default();
    args.apply(&mut g);
    g
}

fn generate_cra(a: GenerateArgs, cfg: Option<&PipelineConfig>) -> CmdResult {
    let seeds_path = pick(a.seeds, cfg.and_then(|c| c.sources.seeds.clone()), "--seeds")?;
    let reg_path = pick(a.registry, cfg.map(|c| c.registry.clone()), "--registry")?;
    let g = generation_config(&a.client, cfg);
    let reg = pipeline::load_registry_file(&reg_path)?;
    let client: Box<dyn GenerationClient> = build_client(&g)?;
    let seeds: Vec<SeedDialogue> = read_records(&seeds_path, Stage::Generate)?;
    let registry_ref = reg_path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let opts = PromptOptions {
        include_seed_frames: g.include_seed_frames,
    };
    let generated = pipeline::generate(&seeds, &reg, &registry_ref, &client, &g.params(), opts, g.concurrency)?;
    let dialogues: Vec<ReactDialogue> = generated.into_iter().map(|x| x.dialogue).collect();
    write_text(Some(&a.output), &render_records(&dialogues))?;
    if let Some(p) = &a.samples {
        write_samples_jsonl(&pipeline::split_all(&dialogues, &reg), p)?;
    }
    eprintln!("generated {} dialogues", dialogues.len());
    Ok(())
}

fn validate(a: ValidateArgs, cfg: Option<&PipelineConfig>) -> CmdResult {
    let reg_path = pick(a.registry, cfg.map(|c| c.registry.clone()), "--registry")?;
    let reg = pipeline::load_registry_file(&reg_path)?;
    let dialogues: Vec<ReactDialogue> = read_records(&a.dialogues, Stage::Validate)?;
    for (i, d) in dialogues.iter().enumerate() {
        d.check().map_err(|e| pipeline::PipelineError::at(Stage::Validate, i, e))?;
    }
    let reports = pipeline::validate_all(&dialogues, &reg);
    write_text(a.output.as_deref(), &render_records(&reports))?;
    let s = error_rate_report(&reports, &[])?;
    eprintln!(
        "{} dialogues, {} auto-flagged ({:.1}%)",
        s.dialogues,
        s.auto_flagged,
        s.auto_error_rate * 100.0
    );
    Ok(())
}

fn mix(a: MixArgs, cfg: Option<&PipelineConfig>) -> CmdResult {
    let streams = load_sources(&a.sources)?;
    let seed = a.seed.or(cfg.map(|c| c.shuffle_seed())).unwrap_or(0);
    let dedup = a.dedup || cfg.is_some_and(|c| c.mix.dedup);
    let mixed = interleave(&streams, seed, dedup);
    emit_jsonl(&mixed, &a.output)?;
    eprintln!("wrote {} samples to {}", mixed.len(), a.output.display());
    Ok(())
}

fn stats(a: StatsArgs) -> CmdResult {
    let streams = match &a.dataset {
        Some(p) => {
            let mut by_tag: BTreeMap<DomainTag, Vec<InstructionSample>> = BTreeMap::new();
            for s in read_jsonl(p)? {
                by_tag.entry(s.domain_tag).or_default().push(s);
            }
            by_tag.into_iter().map(|(t, v)| (t.to_string(), v)).collect()
        }
        None if a.sources.is_empty() => return Err(fail("give --dataset or at least one --source")),
        None => load_sources(&a.sources)?,
    };
    let st = dataset_stats(&streams, &ReferenceTokenizer);
    print!("{}", render_stats_table(&st));
    if let Some(p) = &a.json {
        write_text(Some(p), &(serde_json::to_string_pretty(&st)? + "\n"))?;
    }
    Ok(())
}

fn eval(a: EvalArgs, cfg: Option<&PipelineConfig>) -> CmdResult {
    let records: Vec<EvalRecord> = read_records(&a.input, Stage::Load)?;
    let metrics = a
        .metrics
        .iter()
        .map(|m| m.parse::<Metric>())
        .collect::<Result<Vec<_>, _>>()?;
    let registry = match a.registry.or(cfg.map(|c| c.registry.clone())) {
        Some(p) => Some(pipeline::load_registry_file(&p)?),
        None => None,
    };
    let policy = CallMatchPolicy {
        name_case_sensitive: !a.ignore_name_case,
        string_trim: !a.no_trim,
        order_insensitive_sets: !a.ordered,
    };
    let mut reports = Vec::new();
    println!("{:<12} {:>8} {:>10}", "metric", "records", "score");
    for m in metrics {
        let r = evaluate(&records, m, &policy, registry.as_ref())?;
        println!("{:<12} {:>8} {:>10.4}", r.metric, r.count, r.aggregate);
        for (level, v) in &r.per_level {
            println!("  {level:<10} {:>8} {v:>10.4}", "");
        }
        if m == Metric::Relevance {
            let rs = relevance_detection(&records)?;
            reports.push(json!({"report": r, "relevance": rs}));
        } else {
            reports.push(json!({"report": r}));
        }
    }
    if let Some(p) = &a.output {
        write_text(Some(p), &(serde_json::to_string_pretty(&reports)? + "\n"))?;
    }
    Ok(())
}

/// Loads everything the review service needs from a finished run.
pub fn service_state(a: &ServeArgs, cfg: Option<&PipelineConfig>) -> Result<AppState, Box<dyn Error>> {
    let run_dir = a.run_dir.clone().or(cfg.map(|c| c.out_dir.clone()));
    let in_run = |flag: &Option<PathBuf>, name: &str| -> Result<PathBuf, Box<dyn Error>> {
        flag.clone()
            .or_else(|| run_dir.as_ref().map(|d| d.join(name)))
            .ok_or_else(|| fail(format!("--run-dir or an explicit path for {name} is required")))
    };
    let dialogues: Vec<ReactDialogue> = read_records(&in_run(&a.dialogues, "dialogues.jsonl")?, Stage::Load)?;
    let reports: Vec<ValidationReport> = read_records(&in_run(&a.reports, "validation.jsonl")?, Stage::Load)?;
    let sample_path = in_run(&a.sample, "review_sample.json")?;
    let sample: Vec<String> = if sample_path.exists() {
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&sample_path)?)?;
        serde_json::from_value(v["ids"].clone()).map_err(|e| fail(format!("{}: {e}", sample_path.display())))?
    } else {
        let ids: Vec<String> = dialogues.iter().map(|d| d.id.clone()).collect();
        let n = cfg.map(|c| c.annotation.sample_size).unwrap_or(100).min(ids.len());
        sample_for_review(&ids, n, cfg.map(|c| c.sample_seed()).unwrap_or(0))?
    };
    let scores = a
        .scores
        .clone()
        .or(cfg.and_then(|c| c.annotation.scores.clone()))
        .map(Ok)
        .unwrap_or_else(|| in_run(&None, "scores.jsonl"))?;
    let token = match a.token_env.clone().or(cfg.and_then(|c| c.annotation.token_env.clone())) {
        Some(var) => Some(std::env::var(&var).map_err(|_| fail(format!("environment variable {var} is not set")))?),
        None => None,
    };
    Ok(AppState::new(dialogues, reports, sample, open_store(&scores)?, token)?)
}

fn serve(a: ServeArgs, cfg: Option<&PipelineConfig>) -> CmdResult {
    let state = Arc::new(service_state(&a, cfg)?);
    let bind = a
        .bind
        .clone()
        .or(cfg.map(|c| c.annotation.bind.clone()))
        .unwrap_or_else(|| "127.0.0.1:8080".into());
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&bind).await?;
        eprintln!("review API listening on http://{}", listener.local_addr()?);
        crate::service::serve(listener, state).await
    })?;
    Ok(())
}

fn run(a: RunArgs, cfg: Option<&PipelineConfig>) -> CmdResult {
    let mut cfg = cfg.cloned().ok_or_else(|| fail("run needs --config"))?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(d) = a.out_dir {
        cfg.out_dir = d;
    }
    a.client.apply(&mut cfg.generation);
    cfg.validate()?;
    let client: Box<dyn GenerationClient> = if cfg.sources.seeds.is_some() {
        build_client(&cfg.generation)?
    } else {
        Box::new(agentdial_core::generate::ReplayClient::default())
    };
    let out = pipeline::run_pipeline(&cfg, &client)?;
    print!("{}", render_stats_table(&out.stats));
    eprintln!(
        "wrote {} samples to {}",
        out.manifest.sample_count,
        out.out_dir.join("dataset.jsonl").display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn source_specs() {
        let (n, p, t) = parse_source("cra=out/cra.jsonl@CRA_action").unwrap();
        assert_eq!((n.as_str(), p, t), ("cra", PathBuf::from("out/cra.jsonl"), Some(DomainTag::CraAction)));
        assert_eq!(parse_source("a=b.jsonl").unwrap().2, None);
        assert!(parse_source("nopath").is_err());
        assert!(parse_source("a=b@XYZ").is_err());
    }

    #[test]
    fn flags_beat_config() {
        assert_eq!(pick(Some(1), Some(2), "x").unwrap(), 1);
        assert_eq!(pick(None, Some(2), "x").unwrap(), 2);
        assert!(pick::<u8>(None, None, "x").is_err());
    }

    #[test]
    fn cli_parses() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
