//! LLM-backed conversion of seed dialogues into ReAct traces, and the split of
//! those traces into action-prediction and response-generation samples.

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::call::render_call;
use crate::digest::sha256_hex;
use crate::model::{DomainTag, FunctionRegistry, InstructionSample, ReactDialogue};
use crate::react::{parse_trace, render_history, render_turn_action, render_turn_opening, TraceError, TraceLint};
use crate::templates::{
    ACTION_TASK_BLOCK, CALL_FORMAT_BLOCK, CORRECTIVE_LINE, GENERATION_EXAMPLE, GENERATION_OUTPUT_FORMAT,
    GENERATION_PREAMBLE, GENERATION_USER_INPUT, RESPONSE_TASK_BLOCK, TOOLS_BEGIN, TOOLS_END,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    pub model_id: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    #[serde(with = "duration_secs")]
    pub timeout: Duration,
    pub retries: u32,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            model_id: "gpt-4o".into(),
            temperature: 0.7,
            max_output_tokens: 2048,
            timeout: Duration::from_secs(120),
            retries: 2,
        }
    }
}

mod duration_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        if !(secs.is_finite() && secs >= 0.0) {
            return Err(serde::de::Error::custom("timeout must be a non-negative number of seconds"));
        }
        Ok(Duration::from_secs_f64(secs))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("transport error: {0}")]
pub struct TransportError(pub String);

/// A text-completion backend. Implementations must tolerate concurrent sends.
pub trait GenerationClient: Send + Sync {
    fn send(&self, prompt: &str, params: &GenParams) -> Result<String, TransportError>;
}

impl<C: GenerationClient + ?Sized> GenerationClient for Box<C> {
    fn send(&self, prompt: &str, params: &GenParams) -> Result<String, TransportError> {
        (**self).send(prompt, params)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayEntry {
    /// Hex SHA-256 of the exact prompt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_sha256: Option<String>,
    /// Matches any prompt containing this text.
    #[serde(default, rename = "match", skip_serializing_if = "Option::is_none")]
    pub matches: Option<String>,
    pub reply: String,
}

/// Answers prompts from recorded prompt/reply pairs. Exact digests are tried
/// first, then substring matches in file order.
#[derive(Debug, Clone, Default)]
pub struct ReplayClient {
    by_digest: HashMap<String, String>,
    by_substring: Vec<(String, String)>,
}

impl ReplayClient {
    pub fn new(entries: impl IntoIterator<Item = ReplayEntry>) -> Self {
        let mut c = ReplayClient::default();
        for e in entries {
            if let Some(d) = e.prompt_sha256 {
                c.by_digest.insert(d.to_ascii_lowercase(), e.reply);
            } else if let Some(m) = e.matches {
                c.by_substring.push((m, e.reply));
            }
        }
        c
    }

    /// Reads one [`ReplayEntry`] per line.
    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str::<ReplayEntry>)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ReplayClient::new(entries))
    }
}

impl GenerationClient for ReplayClient {
    fn send(&self, prompt: &str, _params: &GenParams) -> Result<String, TransportError> {
        if let Some(r) = self.by_digest.get(&sha256_hex(prompt.as_bytes())) {
            return Ok(r.clone());
        }
        self.by_substring
            .iter()
            .find(|(m, _)| prompt.contains(m.as_str()))
            .map(|(_, r)| r.clone())
            .ok_or_else(|| TransportError("no recorded reply for prompt".into()))
    }
}

/// Token bucket limiting sends to `per_minute` with bursts up to `burst`.
#[derive(Debug)]
pub struct RateLimiter {
    per_sec: f64,
    burst: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn per_minute(per_minute: u32, burst: u32) -> Self {
        let burst = burst.max(1) as f64;
        RateLimiter {
            per_sec: per_minute.max(1) as f64 / 60.0,
            burst,
            state: Mutex::new((burst, Instant::now())),
        }
    }

    /// Blocks until a token is available.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut st = self.state.lock().expect("rate limiter lock");
                let now = Instant::now();
                let elapsed = now.duration_since(st.1).as_secs_f64();
                st.0 = (st.0 + elapsed * self.per_sec).min(self.burst);
                st.1 = now;
                if st.0 >= 1.0 {
                    st.0 -= 1.0;
                    return;
                }
                (1.0 - st.0) / self.per_sec
            };
            std::thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

/// Wraps a client so every send first takes a token.
pub struct RateLimited<C> {
    pub inner: C,
    pub limiter: RateLimiter,
}

impl<C: GenerationClient> GenerationClient for RateLimited<C> {
    fn send(&self, prompt: &str, params: &GenParams) -> Result<String, TransportError> {
        self.limiter.acquire();
        self.inner.send(prompt, params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedTurn {
    pub user: String,
    pub system: String,
    /// Source annotations (service frames); only shown when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<serde_json::Value>,
}

/// A source dialogue to be rewritten into a ReAct trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedDialogue {
    pub id: String,
    pub turns: Vec<SeedTurn>,
    #[serde(default)]
    pub services: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptOptions {
    pub include_seed_frames: bool,
}

/// Assembles the trace-generation prompt: role and task text, the numbered
/// function list, output format, worked example, then the seed turns under
/// `# User Input:`.
pub fn build_generation_prompt(seed: &SeedDialogue, reg: &FunctionRegistry, opts: PromptOptions) -> String {
    let api_names = reg
        .iter()
        .map(|s| format!("{}()", s.name))
        .collect::<Vec<_>>()
        .join(", ");
    let mut out = String::new();
    out.push_str(GENERATION_PREAMBLE);
    out.push('\n');
    out.push_str(&reg.numbered_signatures());
    out.push_str("\n\n");
    out.push_str(&GENERATION_OUTPUT_FORMAT.replace("{api_names}", &api_names));
    out.push_str("\n\n");
    out.push_str(GENERATION_EXAMPLE);
    out.push_str("\n\n");
    out.push_str(GENERATION_USER_INPUT);
    for t in &seed.turns {
        out.push_str("\nUser: ");
        out.push_str(&t.user);
        out.push_str("\nSystem: ");
        out.push_str(&t.system);
        if opts.include_seed_frames {
            if let Some(f) = &t.frames {
                out.push_str("\nFrames: ");
                out.push_str(&f.to_string());
            }
        }
    }
    out.push('\n');
    out
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerationError {
    #[error("generation failed after {attempts} attempt(s): {last}")]
    GenerationFailed { attempts: u32, last: TraceError },
    #[error(transparent)]
    Transport(#[from] TransportError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub dialogue: ReactDialogue,
    pub attempts: u32,
    pub lints: Vec<TraceLint>,
}

/// Sends the generation prompt and parses the reply, re-sending with a
/// corrective line on parse failure up to `params.retries` times.
pub fn generate_cra(
    seed: &SeedDialogue,
    reg: &FunctionRegistry,
    registry_ref: &str,
    client: &dyn GenerationClient,
    params: &GenParams,
    opts: PromptOptions,
) -> Result<Generated, GenerationError> {
    let prompt = build_generation_prompt(seed, reg, opts);
    let corrected = format!("{prompt}\n{CORRECTIVE_LINE}\n");
    let mut last = TraceError::EmptyTrace;
    for attempt in 0..=params.retries {
        let text = client.send(if attempt == 0 { &prompt } else { &corrected }, params)?;
        match parse_trace(&text) {
            Ok(parsed) => {
                let lints = parsed.lints.clone();
                return Ok(Generated {
                    dialogue: parsed.into_dialogue(seed.id.clone(), registry_ref),
                    attempts: attempt + 1,
                    lints,
                });
            }
            Err(e) => last = e,
        }
    }
    Err(GenerationError::GenerationFailed {
        attempts: params.retries + 1,
        last,
    })
}

/// Generates every seed with at most `concurrency` requests in flight.
/// Results come back in seed order.
pub fn generate_batch(
    seeds: &[SeedDialogue],
    reg: &FunctionRegistry,
    registry_ref: &str,
    client: &dyn GenerationClient,
    params: &GenParams,
    opts: PromptOptions,
    concurrency: usize,
) -> Vec<Result<Generated, GenerationError>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(concurrency.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        seeds
            .par_iter()
            .map(|s| generate_cra(s, reg, registry_ref, client, params, opts))
            .collect()
    })
}

pub fn tools_block(reg: &FunctionRegistry) -> String {
    format!("{TOOLS_BEGIN}\n{}\n{TOOLS_END}", reg.numbered_signatures())
}

/// Splits a dialogue into training samples: two per API turn (action, then
/// response) and one response sample per direct turn.
pub fn split_turn_samples(
    d: &ReactDialogue,
    reg: &FunctionRegistry,
    action_instruction: &str,
    response_instruction: &str,
) -> Vec<InstructionSample> {
    let tools = tools_block(reg);
    let mut out = Vec::new();
    for (k, turn) in d.turns.iter().enumerate() {
        let history = render_history(d, k, false);
        let with_history = |head: String| {
            if history.is_empty() {
                head
            } else {
                format!("{head}\n\n{history}")
            }
        };
        let opening = render_turn_opening(turn);
        if let Some(call) = &turn.action {
            out.push(InstructionSample {
                instruction: with_history(format!("{action_instruction}\n\n{tools}\n\n{CALL_FORMAT_BLOCK}")),
                input: opening.join("\n"),
                output: format!("Action: {}", render_call(call)),
                domain_tag: DomainTag::CraAction,
            });
        }
        let mut input = opening;
        input.extend(render_turn_action(turn));
        out.push(InstructionSample {
            instruction: with_history(format!("{response_instruction}\n\n{CALL_FORMAT_BLOCK}")),
            input: input.join("\n"),
            output: format!("System: {}", turn.system),
            domain_tag: DomainTag::CraResponse,
        });
    }
    out
}

/// [`split_turn_samples`] with the standard task blocks.
pub fn split_turn_samples_default(d: &ReactDialogue, reg: &FunctionRegistry) -> Vec<InstructionSample> {
    split_turn_samples(d, reg, ACTION_TASK_BLOCK, RESPONSE_TASK_BLOCK)
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicU32, Ordering};

    use super::*;
    use crate::model::parse_compact_registry;

    struct Scripted {
        replies: Vec<&'static str>,
        calls: AtomicU32,
    }

    impl GenerationClient for Scripted {
        fn send(&self, _prompt: &str, _params: &GenParams) -> Result<String, TransportError> {
            let i = self.calls.fetch_add(1, Ordering::SeqCst) as usize;
            Ok(self.replies[i.min(self.replies.len() - 1)].to_string())
        }
    }

    struct Down;

    impl GenerationClient for Down {
        fn send(&self, _: &str, _: &GenParams) -> Result<String, TransportError> {
            Err(TransportError("connection refused".into()))
        }
    }

    fn seed() -> SeedDialogue {
        SeedDialogue {
            id: "s1".into(),
            turns: vec![SeedTurn {
                user: "hello".into(),
                system: "hi".into(),
                frames: Some(serde_json::json!({"service": "Music_1"})),
            }],
            services: vec![],
        }
    }

    fn reg() -> FunctionRegistry {
        parse_compact_registry("1. GetWeather(city)").unwrap()
    }

    #[test]
    fn single_function_prompt() {
        let p = build_generation_prompt(&seed(), &reg(), PromptOptions::default());
        assert!(p.contains("# Available Functions:\n1. GetWeather(city)\n\n# Output Format:"));
        assert!(p.contains("Add Don and Sherri to my \"Meditate to Sounds of Nature\" playlist."));
        assert!(p.ends_with("# User Input:\nUser: hello\nSystem: hi\n"));
        assert!(!p.contains("Frames:"));
        let with_frames = build_generation_prompt(&seed(), &reg(), PromptOptions { include_seed_frames: true });
        assert!(with_frames.contains("Frames: {\"service\":\"Music_1\"}"));
    }

    #[test]
    fn retry_then_success() {
        let client = Scripted {
            replies: vec!["garbage", "User: a\nThought: fine thanks ok\nSystem: b"],
            calls: AtomicU32::new(0),
        };
        let params = GenParams {
            retries: 1,
            ..GenParams::default()
        };
        let g = generate_cra(&seed(), &reg(), "r", &client, &params, PromptOptions::default()).unwrap();
        assert_eq!(g.attempts, 2);
        assert_eq!(g.dialogue.id, "s1");
    }

    #[test]
    fn exhausted_retries() {
        let client = Scripted {
            replies: vec!["no labels here"],
            calls: AtomicU32::new(0),
        };
        let params = GenParams {
            retries: 0,
            ..GenParams::default()
        };
        let err = generate_cra(&seed(), &reg(), "r", &client, &params, PromptOptions::default()).unwrap_err();
        assert_eq!(
            err,
            GenerationError::GenerationFailed {
                attempts: 1,
                last: TraceError::EmptyTrace
            }
        );
    }

    #[test]
    fn transport_failure() {
        let err = generate_cra(&seed(), &reg(), "r", &Down, &GenParams::default(), PromptOptions::default());
        assert!(matches!(err, Err(GenerationError::Transport(_))));
    }

    #[test]
    fn replay_by_digest_and_substring() {
        let prompt = "exact prompt";
        let c = ReplayClient::new([
            ReplayEntry {
                prompt_sha256: Some(sha256_hex(prompt.as_bytes())),
                matches: None,
                reply: "A".into(),
            },
            ReplayEntry {
                prompt_sha256: None,
                matches: Some("needle".into()),
                reply: "B".into(),
            },
        ]);
        let p = GenParams::default();
        assert_eq!(c.send(prompt, &p).unwrap(), "A");
        assert_eq!(c.send("hay needle hay", &p).unwrap(), "B");
        assert!(c.send("nothing", &p).is_err());
    }

    #[test]
    fn single_direct_turn_gives_one_sample() {
        let d = parse_trace("User: hi\nThought: no API needed\nSystem: hello")
            .unwrap()
            .into_dialogue("d", "r");
        let samples = split_turn_samples_default(&d, &reg());
        assert_eq!(samples.len(), 1);
        assert_eq!(samples[0].output, "System: hello");
        assert_eq!(samples[0].input, "User: hi\nThought: no API needed");
        assert!(!samples[0].instruction.contains("CONVERSATION HISTORY"));
    }

    #[test]
    fn rate_limiter_allows_burst() {
        let rl = RateLimiter::per_minute(600, 3);
        let start = Instant::now();
        for _ in 0..3 {
            rl.acquire();
        }
        assert!(start.elapsed() < Duration::from_millis(50));
    }
}
