//! Human review scores and their append-only store.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One reviewer's binary verdict on a dialogue. A zero score must carry feedback.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanScore {
    pub dialogue_id: String,
    pub score: u8,
    #[serde(default)]
    pub feedback: String,
    pub annotator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScoreError {
    #[error("score must be 0 or 1, got {0}")]
    BadScore(u8),
    #[error("feedback is mandatory when score is 0")]
    MissingFeedback,
    #[error("annotator must be set")]
    MissingAnnotator,
}

impl HumanScore {
    pub fn check(&self) -> Result<(), ScoreError> {
        if self.score > 1 {
            return Err(ScoreError::BadScore(self.score));
        }
        if self.score == 0 && self.feedback.trim().is_empty() {
            return Err(ScoreError::MissingFeedback);
        }
        if self.annotator.trim().is_empty() {
            return Err(ScoreError::MissingAnnotator);
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{annotator:?} already scored {dialogue_id:?}")]
    Conflict { dialogue_id: String, annotator: String },
    #[error("invalid score: {0}")]
    Invalid(#[from] ScoreError),
    #[error("{path}:{line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Line-delimited score log. Every accepted score is appended and synced
/// before it becomes visible; reopening the file restores the same state.
#[derive(Debug)]
pub struct ScoreStore {
    file: File,
    scores: Vec<HumanScore>,
    keys: HashSet<(String, String)>,
}

impl ScoreStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref();
        let mut scores = Vec::new();
        let mut keys = HashSet::new();
        if path.exists() {
            for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let s: HumanScore = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
                keys.insert((s.dialogue_id.clone(), s.annotator.clone()));
                scores.push(s);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(ScoreStore { file, scores, keys })
    }

    /// Appends a score and returns its position in the log.
    pub fn record(&mut self, score: HumanScore) -> Result<usize, StoreError> {
        score.check()?;
        let key = (score.dialogue_id.clone(), score.annotator.clone());
        if self.keys.contains(&key) {
            return Err(StoreError::Conflict {
                dialogue_id: key.0,
                annotator: key.1,
            });
        }
        let mut line = serde_json::to_string(&score).expect("score serializes");
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.sync_data()?;
        self.keys.insert(key);
        self.scores.push(score);
        Ok(self.scores.len() - 1)
    }

    pub fn scores(&self) -> &[HumanScore] {
        &self.scores
    }

    pub fn has_scored(&self, dialogue_id: &str, annotator: &str) -> bool {
        self.keys.contains(&(dialogue_id.to_string(), annotator.to_string()))
    }
}
