//! Interleaving of per-domain sample streams, token statistics and the
//! instruction/input/output dataset file format.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DomainTag, InstructionSample};
use crate::prng::Xoshiro256;
use crate::tokenize::Tokenizer;

#[derive(Debug, Error)]
pub enum MixError {
    #[error("source {name:?}: {source}")]
    Io {
        name: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Record { path: PathBuf, line: usize, message: String },
    #[error("duplicate source name {0:?}")]
    DuplicateSource(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub name: String,
    pub path: PathBuf,
    /// Used for records that carry no tag of their own.
    pub domain_tag: DomainTag,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixPlan {
    pub sources: Vec<SourceSpec>,
    pub shuffle_seed: u64,
    #[serde(default)]
    pub dedup: bool,
}

impl MixPlan {
    pub fn check(&self) -> Result<(), MixError> {
        let mut seen = HashSet::new();
        for s in &self.sources {
            if !seen.insert(&s.name) {
                return Err(MixError::DuplicateSource(s.name.clone()));
            }
        }
        Ok(())
    }

    /// Reads every source in plan order.
    pub fn load(&self) -> Result<Vec<(String, Vec<InstructionSample>)>, MixError> {
        self.check()?;
        self.sources
            .iter()
            .map(|s| {
                read_samples_jsonl(&s.path, Some(s.domain_tag))
                    .map(|v| (s.name.clone(), v))
                    .map_err(|e| match e {
                        MixError::Io { source, .. } => MixError::Io {
                            name: s.name.clone(),
                            source,
                        },
                        other => other,
                    })
            })
            .collect()
    }
}

/// Seeded global shuffle of the union of all streams. With `dedup`, exact
/// (instruction, input, output) repeats are dropped, keeping the first.
pub fn interleave(streams: &[(String, Vec<InstructionSample>)], shuffle_seed: u64, dedup: bool) -> Vec<InstructionSample> {
    let mut all: Vec<InstructionSample> = Vec::new();
    let mut seen: HashSet<(&str, &str, &str)> = HashSet::new();
    for (_, samples) in streams {
        for s in samples {
            if dedup && !seen.insert((&s.instruction, &s.input, &s.output)) {
                continue;
            }
            all.push(s.clone());
        }
    }
    Xoshiro256::seed_from_u64(shuffle_seed).shuffle(&mut all);
    all
}

/// Seeded holdout split: the first `ratio` share of a shuffled copy is held out.
pub fn split_holdout(samples: &[InstructionSample], ratio: f64, seed: u64) -> (Vec<InstructionSample>, Vec<InstructionSample>) {
    let mut v = samples.to_vec();
    Xoshiro256::seed_from_u64(seed).shuffle(&mut v);
    let held = ((v.len() as f64) * ratio.clamp(0.0, 1.0)).round() as usize;
    let train = v.split_off(held);
    (train, v)
}

pub fn count_tokens(s: &InstructionSample, tok: &dyn Tokenizer) -> usize {
    tok.count(&s.instruction) + tok.count(&s.input) + tok.count(&s.output)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceStats {
    pub name: String,
    pub sample_count: usize,
    pub total_tokens: usize,
    /// Rounded to two decimals; 0 for an empty source.
    pub avg_tokens_per_sample: f64,
}

impl SourceStats {
    fn new(name: String, sample_count: usize, total_tokens: usize) -> Self {
        let avg = if sample_count == 0 {
            0.0
        } else {
            (total_tokens as f64 / sample_count as f64 * 100.0).round() / 100.0
        };
        SourceStats {
            name,
            sample_count,
            total_tokens,
            avg_tokens_per_sample: avg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub tokenizer: String,
    pub sources: Vec<SourceStats>,
    pub total: SourceStats,
    pub warnings: Vec<String>,
}

pub fn dataset_stats(streams: &[(String, Vec<InstructionSample>)], tok: &dyn Tokenizer) -> DatasetStats {
    let sources: Vec<SourceStats> = streams
        .par_iter()
        .map(|(name, samples)| {
            let total = samples.iter().map(|s| count_tokens(s, tok)).sum();
            SourceStats::new(name.clone(), samples.len(), total)
        })
        .collect();
    let warnings = sources
        .iter()
        .filter(|s| s.sample_count == 0)
        .map(|s| format!("source {:?} is empty; average reported as 0.00", s.name))
        .collect();
    let total = SourceStats::new(
        "Total".into(),
        sources.iter().map(|s| s.sample_count).sum(),
        sources.iter().map(|s| s.total_tokens).sum(),
    );
    DatasetStats {
        tokenizer: tok.name().to_string(),
        sources,
        total,
        warnings,
    }
}

/// Plain-text table with sample, token and average columns.
pub fn render_stats_table(stats: &DatasetStats) -> String {
    let rows: Vec<&SourceStats> = stats.sources.iter().chain(std::iter::once(&stats.total)).collect();
    let name_w = rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max("Source".len());
    let mut out = String::new();
    let _ = writeln!(out, "Tokenizer: {}", stats.tokenizer);
    let _ = writeln!(
        out,
        "{:<name_w$} | {:>17} | {:>18} | {:>23}",
        "Source", "# of Data Samples", "# of Total Tokens", "Avg. Tokens Per Sample"
    );
    let _ = writeln!(out, "{}", "-".repeat(name_w + 3 + 17 + 3 + 18 + 3 + 23));
    for r in rows {
        let _ = writeln!(
            out,
            "{:<name_w$} | {:>17} | {:>18} | {:>23.2}",
            r.name, r.sample_count, r.total_tokens, r.avg_tokens_per_sample
        );
    }
    for w in &stats.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

#[derive(Serialize, Deserialize)]
struct AlpacaRecord {
    instruction: String,
    input: String,
    output: String,
}

#[derive(Serialize, Deserialize)]
struct MetaRecord {
    index: usize,
    domain_tag: DomainTag,
}

/// `dataset.jsonl` → `dataset.meta.jsonl`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.meta.jsonl"))
}

fn to_lines<T: Serialize>(items: impl Iterator<Item = T>) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(&item).expect("records serialize"));
        out.push('\n');
    }
    out
}

/// Renders the dataset file (instruction/input/output records, one per line)
/// and its sidecar (one domain tag per record).
pub fn render_jsonl(samples: &[InstructionSample]) -> (String, String) {
    let data = to_lines(samples.iter().map(|s| AlpacaRecord {
        instruction: s.instruction.clone(),
        input: s.input.clone(),
        output: s.output.clone(),
    }));
    let meta = to_lines(samples.iter().enumerate().map(|(index, s)| MetaRecord {
        index,
        domain_tag: s.domain_tag,
    }));
    (data, meta)
}

/// Renders samples with their tag inline, one per line.
pub fn render_samples_jsonl(samples: &[InstructionSample]) -> String {
    to_lines(samples.iter())
}

fn write_synced(path: &Path, text: &str) -> io::Result<()> {
    let mut f = File::create(path)?;
    f.write_all(text.as_bytes())?;
    f.sync_all()
}

/// Writes instruction/input/output records, one per line, and the domain
/// tags into the sidecar file. Returns the number of records.
pub fn emit_jsonl(samples: &[InstructionSample], path: &Path) -> io::Result<usize> {
    let (data, meta) = render_jsonl(samples);
    write_synced(path, &data)?;
    write_synced(&sidecar_path(path), &meta)?;
    Ok(samples.len())
}

fn read_records<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, MixError> {
    let file = File::open(path).map_err(|source| MixError::Io {
        name: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| MixError::Io {
            name: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| MixError::Record {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Reads a file written by [`emit_jsonl`] together with its sidecar.
pub fn read_jsonl(path: &Path) -> Result<Vec<InstructionSample>, MixError> {
    let records: Vec<AlpacaRecord> = read_records(path)?;
    let meta: Vec<MetaRecord> = read_records(&sidecar_path(path))?;
    if meta.len() != records.len() {
        return Err(MixError::Record {
            path: sidecar_path(path),
            line: 0,
            message: format!("{} tags for {} records", meta.len(), records.len()),
        });
    }
    Ok(records
        .into_iter()
        .zip(meta)
        .map(|(r, m)| InstructionSample {
            instruction: r.instruction,
            input: r.input,
            output: r.output,
            domain_tag: m.domain_tag,
        })
        .collect())
}

#[derive(Deserialize)]
struct TaggedRecord {
    instruction: String,
    input: String,
    output: String,
    #[serde(default)]
    domain_tag: Option<DomainTag>,
}

/// Writes samples with their tag inline (intermediate stage files).
pub fn write_samples_jsonl(samples: &[InstructionSample], path: &Path) -> io::Result<usize> {
    write_synced(path, &render_samples_jsonl(samples))?;
    Ok(samples.len())
}

/// Reads samples whose records may carry a `domain_tag`; untagged records get
/// `default_tag`, and are an error without one.
pub fn read_samples_jsonl(path: &Path, default_tag: Option<DomainTag>) -> Result<Vec<InstructionSample>, MixError> {
    let records: Vec<TaggedRecord> = read_records(path)?;
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let domain_tag = r.domain_tag.or(default_tag).ok_or_else(|| MixError::Record {
                path: path.to_path_buf(),
                line: i + 1,
                message: "record has no domain_tag".into(),
            })?;
            Ok(InstructionSample {
                instruction: r.instruction,
                input: r.input,
                output: r.output,
                domain_tag,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenize::ReferenceTokenizer;

    fn sample(tag: DomainTag, text: &str) -> InstructionSample {
        InstructionSample {
            instruction: "do".into(),
            input: text.into(),
            output: "ok".into(),
            domain_tag: tag,
        }
    }

    fn streams() -> Vec<(String, Vec<InstructionSample>)> {
        vec![
            ("a".into(), (0..3).map(|i| sample(DomainTag::Tod, &format!("a{i}"))).collect()),
            ("b".into(), (0..2).map(|i| sample(DomainTag::La, &format!("b{i}"))).collect()),
            ("c".into(), vec![sample(DomainTag::CraAction, "c0")]),
        ]
    }

    #[test]
    fn interleave_permutes() {
        let out = interleave(&streams(), 11, false);
        assert_eq!(out.len(), 6);
        let mut inputs: Vec<&str> = out.iter().map(|s| s.input.as_str()).collect();
        inputs.sort();
        assert_eq!(inputs, vec!["a0", "a1", "a2", "b0", "b1", "c0"]);
        assert_eq!(out, interleave(&streams(), 11, false));
    }

    #[test]
    fn dedup_drops_exact_repeat() {
        let mut s = streams();
        s[1].1.push(sample(DomainTag::La, "a0"));
        assert_eq!(interleave(&s, 1, false).len(), 7);
        assert_eq!(interleave(&s, 1, true).len(), 6);
        let mut s = streams();
        s[2].1.push(sample(DomainTag::CraAction, "a1"));
        s[2].1[1].domain_tag = DomainTag::CraResponse;
        assert_eq!(interleave(&s, 1, true).len(), 6);
    }

    #[test]
    fn stats_arithmetic() {
        let tok = ReferenceTokenizer;
        let mk = |n: usize, words: usize| -> Vec<InstructionSample> {
            (0..n)
                .map(|_| InstructionSample {
                    instruction: String::new(),
                    input: vec!["w"; words].join(" "),
                    output: String::new(),
                    domain_tag: DomainTag::Tod,
                })
                .collect()
        };
        let st = dataset_stats(&[("x".into(), mk(3, 10)), ("y".into(), mk(1, 20))], &tok);
        assert_eq!(st.total.sample_count, 4);
        assert_eq!(st.total.total_tokens, 50);
        assert_eq!(st.total.avg_tokens_per_sample, 12.5);
        let ten = dataset_stats(&[("z".into(), mk(10, 10))], &tok);
        assert_eq!(ten.total.avg_tokens_per_sample, 10.0);
        let empty = dataset_stats(&[("e".into(), vec![])], &tok);
        assert_eq!(empty.sources[0].avg_tokens_per_sample, 0.0);
        assert_eq!(empty.warnings.len(), 1);
        assert!(render_stats_table(&st).contains("12.50"));
    }

    #[test]
    fn token_count_of_user_line() {
        let s = InstructionSample {
            instruction: String::new(),
            input: "User: hi there".into(),
            output: String::new(),
            domain_tag: DomainTag::Tod,
        };
        assert_eq!(count_tokens(&s, &ReferenceTokenizer), 4);
        let empty = InstructionSample { input: String::new(), ..s };
        assert_eq!(count_tokens(&empty, &ReferenceTokenizer), 0);
    }

    #[test]
    fn emit_and_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        let mut samples = vec![
            sample(DomainTag::Tod, "one"),
            sample(DomainTag::La, "two"),
            sample(DomainTag::CraResponse, "three"),
        ];
        samples[2].output = "line1\nline2".into();
        assert_eq!(emit_jsonl(&samples, &path).unwrap(), 3);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.ends_with('\n'));
        assert!(!text.contains("domain_tag"));
        assert_eq!(read_jsonl(&path).unwrap(), samples);
        assert!(dir.path().join("data.meta.jsonl").exists());

        let empty = dir.path().join("empty.jsonl");
        assert_eq!(emit_jsonl(&[], &empty).unwrap(), 0);
        assert_eq!(std::fs::read_to_string(&empty).unwrap(), "");
    }

    #[test]
    fn missing_source_names_it() {
        let plan = MixPlan {
            sources: vec![SourceSpec {
                name: "snips".into(),
                path: "/nonexistent/x.jsonl".into(),
                domain_tag: DomainTag::Tod,
            }],
            shuffle_seed: 0,
            dedup: false,
        };
        match plan.load() {
            Err(MixError::Io { name, .. }) => assert_eq!(name, "snips"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn holdout_split_sizes() {
        let all: Vec<InstructionSample> = (0..10).map(|i| sample(DomainTag::Tod, &i.to_string())).collect();
        let (train, val) = split_holdout(&all, 0.2, 5);
        assert_eq!((train.len(), val.len()), (8, 2));
    }
}
