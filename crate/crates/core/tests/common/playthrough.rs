//! Scripted API client that plays every room. Odd rooms get the weak
//! suite (sabotage goes unnoticed), even rooms the strong one (alarm).

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use reqwest::StatusCode;
use serde_json::{json, Value};
use shipcheck::content::ContentPack;
use shipcheck::engine::minigame::Puzzle;

use super::fixtures;
use super::server::Client;

#[derive(Debug, Default)]
pub struct Report {
    pub elapsed: Duration,
    pub detected_rooms: Vec<u32>,
    pub destroyed_rooms: Vec<u32>,
    /// Coverage of every successful activation, by room.
    pub activation_coverage: BTreeMap<u32, f64>,
    /// Coverage reported by the refused activation in room 1.
    pub refused_coverage: f64,
    /// Event type counts this script must produce.
    pub expected: BTreeMap<&'static str, usize>,
    pub game_complete: bool,
}

pub fn weak_room(room: u32) -> bool {
    room % 2 == 1
}

async fn wait_for_sabotage(client: &Client) -> Value {
    let deadline = Instant::now() + Duration::from_secs(10);
    loop {
        let s = client.state().await;
        if s["phase"] != "TESTS_ACTIVE" {
            return s;
        }
        assert!(Instant::now() < deadline, "sabotage never fired");
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
}

fn ok(step: &str, (status, body): (StatusCode, Value)) -> Value {
    assert_eq!(status, StatusCode::OK, "{step}: {body}");
    body
}

/// Plays the whole game as `client`, who must not have started yet.
pub async fn play(client: &Client, pack: &ContentPack) -> Report {
    let started = Instant::now();
    let mut report = Report::default();
    let mut count = |t: &'static str| *report.expected.entry(t).or_default() += 1;
    let fresh = client.state().await;
    count("GameStarted");
    assert_eq!((fresh["room"].as_u64(), fresh["phase"].as_str()), (Some(1), Some("TALK")));
    let mut detected = Vec::new();
    let mut destroyed = Vec::new();
    let mut coverage = BTreeMap::new();
    let mut refused = f64::NAN;
    for room in 1..=pack.room_count() {
        let content = pack.room(room).expect("room exists");
        let c = content.spec.component_name.as_str();
        let s = client.state().await;
        assert_eq!(s["room"], room, "{s}");
        assert_eq!(s["phase"], "TALK");
        assert_eq!(s["componentName"], c);

        ok("finish talk", client.post("/api/talk/finish", json!({})).await);
        count("TalkFinished");
        if room == 1 {
            let (status, body) = client.post("/api/activate", json!({})).await;
            assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
            refused = body["coveragePercent"].as_f64().expect("coverage in gate error");
            count("TestsExecuted");
            ok("broken tests", client.put("/api/code/test", json!({ "source": "tests Broken {" })).await);
            count("TestCodeModified");
            let run = ok("execute broken", client.post("/api/execute", json!({})).await);
            assert_eq!(run["outcome"], "COMPILE_ERROR", "{run}");
            count("CompilationFailed");
        }
        let (status, _) = client.put("/api/code/cut", json!({ "source": "x" })).await;
        assert_eq!(status, StatusCode::CONFLICT, "CUT must be read-only while testing");

        let suite = if weak_room(room) { fixtures::weak(c) } else { fixtures::strong(c) };
        ok("write tests", client.put("/api/code/test", json!({ "source": suite })).await);
        count("TestCodeModified");
        let run = ok("execute", client.post("/api/execute", json!({})).await);
        assert_eq!(run["outcome"], "EXECUTED", "{run}");
        assert!(run["result"]["results"].as_array().unwrap().iter().all(|r| r["status"] == "PASS"));
        count("TestsExecuted");

        let act = ok("activate", client.post("/api/activate", json!({})).await);
        assert_eq!(act["phase"], "TESTS_ACTIVE");
        coverage.insert(room, act["coveragePercent"].as_f64().unwrap());
        count("TestsActivated");
        let (status, _) = client.post("/api/activate", json!({})).await;
        assert_eq!(status, StatusCode::CONFLICT, "repeat activation");

        let s = wait_for_sabotage(client).await;
        count("SabotageTriggered");
        assert_eq!(s["cutSource"].as_str(), Some(content.mutant.text.as_str()));
        if weak_room(room) {
            assert_eq!(s["phase"], "DESTROYED", "{s}");
            let hidden = s["hiddenTests"].as_array().unwrap();
            assert_eq!(hidden.len(), 1);
            assert_eq!(hidden[0]["name"], content.guiding_test.name.as_str());
            destroyed.push(room);
            count("ComponentDestroyed");
            count("HiddenTestAdded");
        } else {
            assert_eq!(s["phase"], "MUTATED", "{s}");
            detected.push(room);
            count("MutationDetected");
        }

        ok("start debugging", client.post("/api/debug/start", json!({})).await);
        let wrong = ok(
            "wrong fix",
            client.post("/api/fix", json!({ "source": fixtures::wrong_fix(c) })).await,
        );
        assert_eq!((wrong["fixed"].as_bool(), wrong["phase"].as_str()), (Some(false), Some("DEBUGGING")));
        count("CutCodeModified");
        count("TestsExecuted");
        let right = ok(
            "right fix",
            client.post("/api/fix", json!({ "source": content.cut.text })).await,
        );
        assert_eq!(right["fixed"], true, "{right}");
        count("CutCodeModified");
        count("ComponentFixed");

        let s = client.state().await;
        let last = room == pack.room_count();
        if last {
            assert_eq!((s["room"].as_u64(), s["phase"].as_str()), (Some(room as u64), Some("RESOLVED")));
        } else {
            assert_eq!((s["room"].as_u64(), s["phase"].as_str()), (Some(room as u64 + 1), Some("DOOR")));
        }
        let puzzle: Puzzle = serde_json::from_value(s["puzzle"].clone()).expect("puzzle in state");
        let rotations = puzzle.solve().expect("puzzles are solvable");
        let done = ok(
            "minigame",
            client
                .post("/api/minigame/complete", json!({ "puzzleId": puzzle.id, "rotations": rotations }))
                .await,
        );
        count("MinigameCompleted");
        if last {
            assert_eq!(done["gameComplete"], true);
        } else {
            count("DoorUnlocked");
        }
    }
    let end = client.state().await;
    report.game_complete = end["gameComplete"] == true;
    report.elapsed = started.elapsed();
    report.detected_rooms = detected;
    report.destroyed_rooms = destroyed;
    report.activation_coverage = coverage;
    report.refused_coverage = refused;
    report
}
