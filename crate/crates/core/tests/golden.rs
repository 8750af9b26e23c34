//! Golden inputs taken verbatim from the published sample figures.

use agentdial_core::call::{parse_call, parse_toolcall_json, render_call, render_toolcall_json};
use agentdial_core::generate::{build_generation_prompt, generate_cra, split_turn_samples_default, GenParams, PromptOptions, ReplayClient, ReplayEntry, SeedDialogue, SeedTurn, tools_block};
use agentdial_core::model::{load_registry_str, parse_compact_registry, DomainTag, ValueType};
use agentdial_core::react::{parse_trace, render_history, render_turns_block};
use agentdial_core::templates::{ACTION_TASK_BLOCK, CALL_FORMAT_BLOCK, DST_INSTRUCTION, GENERATION_EXAMPLE, RESPONSE_TASK_BLOCK};
use agentdial_core::transform::{build_fc_sample, snips_to_dst, SnipsRecord};
use agentdial_core::validate::check_dialogue;
use agentdial_core::value::to_spaced_json;
use agentdial_core::{CanonValue, FunctionRegistry, ReactDialogue};

fn fixture(name: &str) -> String {
    let path = format!("{}/tests/fixtures/figures/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

fn trim_lines(s: &str) -> String {
    s.lines().map(str::trim_end).collect::<Vec<_>>().join("\n").trim().to_string()
}

fn strip_history_delims(s: &str) -> String {
    s.lines()
        .filter(|l| !l.starts_with("[BEGIN OF") && !l.starts_with("[END OF"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// The three-turn figure dialogue: history, then the turn shown in the inputs.
fn figure_dialogue() -> ReactDialogue {
    let text = format!(
        "{}\n{}{}",
        strip_history_delims(&fixture("action_history.txt")),
        fixture("response_input.txt"),
        fixture("response_output.txt")
    );
    parse_trace(&text).unwrap().into_dialogue("fig", "figure")
}

fn figure_registry() -> FunctionRegistry {
    parse_compact_registry(
        "1. FindEvents(category, city_of_event)\n2. BuyEventTickets(event_name, number_of_seats, date, city_of_event)",
    )
    .unwrap()
}

#[test]
fn snips_figure() {
    let rec = SnipsRecord {
        utterance: "Book a table at a restaurant in Portugal with parking for me and bonnie in 19 minutes".into(),
        domain: "BookRestaurant".into(),
        slots: vec![
            ("restaurant_type".into(), "restaurant".into()),
            ("country".into(), "Portugal".into()),
            ("facility".into(), "parking".into()),
            ("party_size_description".into(), "me and bonnie".into()),
            ("timeRange".into(), "in 19 minutes".into()),
        ],
    };
    let s = snips_to_dst(&rec, DST_INSTRUCTION).unwrap();
    assert_eq!(s.input, fixture("snips_input.txt").trim_end());
    assert_eq!(s.output, fixture("snips_output.txt").trim_end());
    assert_eq!(s.domain_tag, DomainTag::Tod);
}

#[test]
fn hammer_figure() {
    let tools_text = fixture("hammer_tools.json");
    let reg = load_registry_str(&tools_text).unwrap();
    assert_eq!(reg.len(), 4);
    let w = reg.get("WoDdNSe7e7K5").unwrap();
    assert_eq!(w.params.len(), 1);
    assert_eq!(w.params[0].name, "LzZsvxUC");
    assert_eq!(w.params[0].value_type, ValueType::String);
    assert_eq!(w.params[0].default, Some(CanonValue::String("London".into())));

    // Tool list re-renders byte-identically.
    assert_eq!(reg.to_tool_json(), tools_text.trim_end());

    let out = fixture("hammer_output.txt");
    let calls = parse_toolcall_json(out.trim_end()).unwrap();
    assert_eq!(calls.len(), 1);
    assert_eq!(render_toolcall_json(&calls), out.trim_end());

    let schemas: Vec<_> = reg.iter().cloned().collect();
    let sample = build_fc_sample("What are the current weather conditions in Sydney?", &schemas, &calls, None, None).unwrap();
    assert_eq!(sample.output, out.trim_end());
    assert!(sample.instruction.contains(tools_text.trim_end()));
    assert_eq!(
        sample.input,
        "[BEGIN OF QUERY]\nWhat are the current weather conditions in Sydney?\n[END OF QUERY]"
    );
    let none = build_fc_sample("Tell me a joke", &schemas, &[], None, None).unwrap();
    assert_eq!(none.output, "[]");
    assert_eq!(to_spaced_json(&serde_json::json!([])), "[]");
}

#[test]
fn action_figure_history() {
    let hist = fixture("action_history.txt");
    let parsed = parse_trace(&hist).unwrap();
    assert_eq!(parsed.turns.len(), 2);
    let a = parsed.turns[0].action.as_ref().unwrap();
    assert_eq!(a.name, "FindEvents");
    assert_eq!(a.arg("city_of_event"), Some(&CanonValue::String("New York".into())));
    assert!(!parsed.turns[1].is_api());
    assert_eq!(trim_lines(&render_turns_block(&parsed.turns)), trim_lines(&hist));
}

#[test]
fn action_figure_output_call() {
    let line = fixture("action_output.txt");
    let text = line.trim_end().strip_prefix("Action: ").unwrap();
    let c = parse_call(text).unwrap();
    assert_eq!(c.name, "BuyEventTickets");
    assert_eq!(c.args.len(), 4);
    assert_eq!(c.arg("number_of_seats"), Some(&CanonValue::Integer(2)));
    assert_eq!(render_call(&c), text);
}

#[test]
fn figure_dialogue_split() {
    let d = figure_dialogue();
    assert_eq!(d.turns.len(), 3);
    assert_eq!(
        d.turns.iter().map(|t| t.is_api()).collect::<Vec<_>>(),
        vec![true, false, true]
    );
    let reg = figure_registry();
    let samples = split_turn_samples_default(&d, &reg);
    assert_eq!(samples.len(), 5);

    let history = fixture("action_history.txt");
    let action = &samples[3];
    assert_eq!(action.domain_tag, DomainTag::CraAction);
    assert_eq!(action.output, fixture("action_output.txt").trim_end());
    assert_eq!(trim_lines(&action.input), trim_lines(&fixture("action_input.txt")));
    let expected_instruction = format!(
        "{ACTION_TASK_BLOCK}\n\n{}\n\n{CALL_FORMAT_BLOCK}\n\n{}",
        tools_block(&reg),
        trim_lines(&history)
    );
    assert_eq!(trim_lines(&action.instruction), trim_lines(&expected_instruction));

    let response = &samples[4];
    assert_eq!(response.domain_tag, DomainTag::CraResponse);
    assert_eq!(response.output, fixture("response_output.txt").trim_end());
    assert_eq!(trim_lines(&response.input), trim_lines(&fixture("response_input.txt")));
    assert!(response.instruction.starts_with(RESPONSE_TASK_BLOCK));
    assert_eq!(trim_lines(&render_history(&d, 2, false)), trim_lines(&history));
}

#[test]
fn response_figure_observation() {
    let d = figure_dialogue();
    let obs = d.turns[2].observation.as_ref().unwrap();
    match obs {
        CanonValue::Object(m) => {
            assert_eq!(m.len(), 2);
            assert!(m.values().all(|v| matches!(v, CanonValue::String(_))));
        }
        other => panic!("{other:?}"),
    }
}

fn playlist_registry() -> FunctionRegistry {
    load_registry_str(
        r#"[{"name": "AddToPlaylist", "description": "Adds artists or songs to a playlist.", "parameters": {
            "playlist_name": {"description": "Playlist name.", "type": "str"},
            "artists": {"description": "Artists to add.", "type": "str", "default": null},
            "songs": {"description": "Songs to add.", "type": "str", "default": null}}}]"#,
    )
    .unwrap()
}

#[test]
fn prompt_example() {
    let text = fixture("prompt_example.txt");
    assert_eq!(Some(text.trim_end()), GENERATION_EXAMPLE.strip_prefix("# Example:\n"));
    let parsed = parse_trace(&text).unwrap();
    assert_eq!(parsed.turns.len(), 4);
    let names: Vec<Option<&str>> = parsed.turns.iter().map(|t| t.action.as_ref().map(|a| a.name.as_str())).collect();
    assert_eq!(names, vec![Some("AddToPlaylist"), None, Some("AddToPlaylist"), None]);
    let first = parsed.turns[0].action.as_ref().unwrap();
    assert_eq!(first.arg("artists"), Some(&CanonValue::String("Don Sherri".into())));
    let third = parsed.turns[2].action.as_ref().unwrap();
    assert_eq!(third.arg("songs"), Some(&CanonValue::String("Calm River".into())));

    let d = parsed.into_dialogue("example", "playlist");
    let report = check_dialogue(&d, &playlist_registry());
    assert_eq!(report.flags, vec![], "{report:?}");
    assert_eq!(report.auto_score, 1);
}

#[test]
fn replaying_the_example_generates_it() {
    let reg = playlist_registry();
    let seed = SeedDialogue {
        id: "s1".into(),
        turns: vec![SeedTurn {
            user: "Add Don and Sherri to my playlist.".into(),
            system: "Done.".into(),
            frames: None,
        }],
        services: vec!["Music".into()],
    };
    let prompt = build_generation_prompt(&seed, &reg, PromptOptions::default());
    assert!(prompt.contains("Add Don and Sherri to my \"Meditate to Sounds of Nature\" playlist."));
    let client = ReplayClient::new([ReplayEntry {
        prompt_sha256: None,
        matches: Some("# User Input:\nUser: Add Don and Sherri to my playlist.".into()),
        reply: fixture("prompt_example.txt"),
    }]);
    let g = generate_cra(&seed, &reg, "playlist", &client, &GenParams::default(), PromptOptions::default()).unwrap();
    assert_eq!(g.dialogue.turns.len(), 4);
    assert_eq!(g.dialogue.api_turns(), 2);
    assert_eq!(g.attempts, 1);
}
