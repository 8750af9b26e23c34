//! Property tests over randomly generated inputs.

use std::collections::HashMap;

use agentdial_core::eval::{bleu4, rouge, RougeVariant};
use agentdial_core::mix::interleave;
use agentdial_core::model::{FunctionSchema, ParamSpec, ReactTurn, ValueType};
use agentdial_core::prng::Xoshiro256;
use agentdial_core::testgen;
use agentdial_core::validate::{check_dialogue, Dimension};
use agentdial_core::{ApiCall, CanonValue, FunctionRegistry, InstructionSample, ReactDialogue};
use proptest::prelude::*;

fn words() -> impl Strategy<Value = String> {
    proptest::collection::vec("[a-d]{1,2}|[.,!]", 0..10).prop_map(|w| w.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn rouge_bounds_and_identity(a in words(), b in words()) {
        for v in [RougeVariant::L, RougeVariant::N(1), RougeVariant::N(2)] {
            let r = rouge(&a, &b, v);
            prop_assert!((0.0..=1.0).contains(&r));
            prop_assert!((rouge(&a, &b, v) - rouge(&b, &a, v)).abs() < 1e-12);
            if !a.trim().is_empty() {
                prop_assert!((rouge(&a, &a, v) - 1.0).abs() < 1e-12);
            }
        }
        let bl = bleu4(&a, &b);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&bl));
    }

    #[test]
    fn interleave_is_permutation(seed in any::<u64>(), sizes in proptest::collection::vec(0usize..6, 1..4)) {
        let mut rng = Xoshiro256::seed_from_u64(seed);
        let streams: Vec<(String, Vec<InstructionSample>)> = sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| (format!("s{i}"), (0..n).map(|_| testgen::sample(&mut rng)).collect()))
            .collect();
        let out = interleave(&streams, seed, false);
        let count = |v: &mut dyn Iterator<Item = &InstructionSample>| {
            let mut m: HashMap<String, usize> = HashMap::new();
            for s in v {
                *m.entry(format!("{s:?}")).or_default() += 1;
            }
            m
        };
        let input = count(&mut streams.iter().flat_map(|(_, v)| v.iter()));
        prop_assert_eq!(count(&mut out.iter()), input);
    }

    /// Calls that conform to their schema and whose string values appear in
    /// the user text never raise schema or hallucination flags.
    #[test]
    fn grounded_conforming_calls_are_clean(seed in any::<u64>(), turns in 1usize..5) {
        let mut rng = Xoshiro256::seed_from_u64(seed);
        let schema = FunctionSchema::new(
            "Lookup",
            "Looks something up.",
            vec![
                ParamSpec::new("query", "", ValueType::String, None).unwrap(),
                ParamSpec::new("count", "", ValueType::Integer, Some(CanonValue::Integer(1))).unwrap(),
            ],
        )
        .unwrap();
        let reg = FunctionRegistry::from_schemas([schema]).unwrap();
        let dialogue_turns: Vec<ReactTurn> = (0..turns)
            .map(|_| {
                let q = testgen::sentence(&mut rng);
                let mut args = vec![("query".to_string(), CanonValue::String(q.clone()))];
                if rng.chance(0.5) {
                    args.push(("count".into(), CanonValue::Integer(rng.below(9) as i64)));
                }
                ReactTurn::api(
                    format!("please look up {q}"),
                    "I need to call the lookup API.",
                    ApiCall::new("Lookup", args).unwrap(),
                    CanonValue::String(testgen::sentence(&mut rng)),
                    "The result answers the user question.",
                    testgen::sentence(&mut rng),
                )
            })
            .collect();
        let d = ReactDialogue::new("p", dialogue_turns, "lookup").unwrap();
        let report = check_dialogue(&d, &reg);
        for dim in [Dimension::UndefinedFunctionCall, Dimension::IncorrectArgumentType, Dimension::ArgumentHallucination] {
            prop_assert!(!report.has(dim), "{:?}", report);
        }
    }
}
