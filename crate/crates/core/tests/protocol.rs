use guirl_core::policies::random_action;
use guirl_core::protocol::{parse_tool_call, parse_turn, render_turn, serialize_action, ScreenSize};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const SCREEN: ScreenSize = ScreenSize::new(1080, 2400);

fn corpus() -> Value {
    serde_json::from_str(include_str!("data/golden_turns.json")).unwrap()
}

fn kinds(turn: &guirl_core::AgentTurn) -> Vec<String> {
    turn.diagnostics.iter().map(|d| serde_json::to_value(d).unwrap()["kind"].as_str().unwrap().to_string()).collect()
}

#[test]
fn golden_well_formed_turns() {
    let c = corpus();
    let good = c["well_formed"].as_array().unwrap();
    assert!(good.len() >= 20);
    for e in good {
        let turn = parse_turn(e["raw"].as_str().unwrap(), Some(SCREEN));
        assert!(turn.format_ok(), "{}: {:?}", e["name"], turn.diagnostics);
        assert_eq!(
            serialize_action(turn.tool_call.as_ref().unwrap()),
            e["canonical"].as_str().unwrap(),
            "{}",
            e["name"]
        );
    }
}

#[test]
fn golden_malformed_turns() {
    let c = corpus();
    let bad = c["malformed"].as_array().unwrap();
    assert!(bad.len() >= 20);
    for e in bad {
        let turn = parse_turn(e["raw"].as_str().unwrap(), Some(SCREEN));
        let want: Vec<String> =
            e["diagnostics"].as_array().unwrap().iter().map(|k| k.as_str().unwrap().into()).collect();
        assert!(!turn.format_ok(), "{}", e["name"]);
        assert_eq!(kinds(&turn), want, "{}", e["name"]);
    }
}

#[test]
fn thousand_generated_actions_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..1000 {
        let action = random_action(&mut rng, SCREEN);
        let text = serialize_action(&action);
        assert_eq!(parse_tool_call(&text).unwrap(), action, "{text}");
        let turn = parse_turn(&render_turn("state, next, goal", "act", &action), Some(SCREEN));
        assert!(turn.format_ok(), "{text}: {:?}", turn.diagnostics);
        assert_eq!(turn.tool_call.unwrap(), action);
    }
}

#[test]
fn ten_thousand_random_byte_strings_never_panic() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let fragments: [&[u8]; 8] = [
        b"<think>",
        b"</think>",
        b"<action>",
        b"</action>",
        b"<tool_call>",
        b"</tool_call>",
        b"{\"name\":\"mobile_use\"",
        b"\xff\xfe",
    ];
    for i in 0..10_000 {
        let mut bytes = Vec::new();
        for _ in 0..rng.gen_range(0..24) {
            if rng.gen_bool(0.3) {
                bytes.extend_from_slice(fragments[rng.gen_range(0..fragments.len())]);
            } else {
                bytes.push(rng.gen());
            }
        }
        let raw = String::from_utf8_lossy(&bytes);
        let result = std::panic::catch_unwind(|| parse_turn(&raw, Some(SCREEN)));
        let turn = result.unwrap_or_else(|_| panic!("case {i} aborted"));
        assert_eq!(turn.format_ok(), turn.diagnostics.is_empty());
    }
}
