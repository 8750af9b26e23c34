//! Building blocks for tool-using dialogue datasets: schema and call types,
//! call and trace parsers, corpus transformers, trace generation, validation,
//! dataset mixing and evaluation metrics.

pub mod call;
pub mod digest;
pub mod eval;
pub mod generate;
pub mod literal;
pub mod mix;
pub mod model;
pub mod prng;
pub mod react;
pub mod review;
pub mod templates;
pub mod testgen;
pub mod tokenize;
pub mod transform;
pub mod validate;
pub mod value;

pub use call::{
    ast_equal, match_call_sets, parse_call, parse_toolcall_json, render_call, render_toolcall_json,
    CallError, CallMatchPolicy,
};
pub use eval::{
    ast_accuracy, bleu4, jga, relevance_detection, rouge, EvalRecord, Metric, MetricReport, Payload,
    RelevanceScores, RougeVariant,
};
pub use literal::LintWarning;
pub use mix::{count_tokens, dataset_stats, emit_jsonl, interleave, read_jsonl, DatasetStats, MixPlan};
pub use model::{
    load_registry, validate_call_against_schema, ApiCall, DialogueState, DomainTag, FunctionRegistry,
    FunctionSchema, InstructionSample, ModelError, ParamSpec, ReactDialogue, ReactTurn, SchemaViolation,
    ValueType, ViolationKind,
};
pub use value::CanonValue;
