//! End-to-end checks shared by the API tests and the acceptance target.
//! Each returns the list of problems it found; empty means it held.

use std::collections::BTreeMap;
use std::sync::Arc;

use reqwest::{Method, StatusCode};
use serde_json::{json, Value};
use shipcheck::clock::{ManualClock, SystemClock, Timestamp};
use shipcheck::events::{parse_export, ExportFilter};

use super::playthrough::{self, Report};
use super::server::{self, Client, TestServer, ADMIN_PASSWORD, TTL_SECS};

pub struct Endpoint {
    pub method: Method,
    pub path: &'static str,
    pub body: Option<Value>,
    pub admin: bool,
}

fn ep(method: Method, path: &'static str, body: Option<Value>, admin: bool) -> Endpoint {
    Endpoint { method, path, body, admin }
}

/// Every authenticated route with a well-formed body.
pub fn endpoints() -> Vec<Endpoint> {
    vec![
        ep(Method::GET, "/api/state", None, false),
        ep(Method::POST, "/api/talk/finish", Some(json!({})), false),
        ep(Method::PUT, "/api/code/test", Some(json!({ "source": "tests X {\n}\n" })), false),
        ep(Method::PUT, "/api/code/cut", Some(json!({ "source": "component X {\n}\n" })), false),
        ep(Method::POST, "/api/execute", Some(json!({})), false),
        ep(Method::POST, "/api/activate", Some(json!({})), false),
        ep(Method::POST, "/api/debug/start", Some(json!({})), false),
        ep(Method::POST, "/api/fix", Some(json!({})), false),
        ep(
            Method::POST,
            "/api/minigame/complete",
            Some(json!({ "puzzleId": "none", "rotations": [] })),
            false,
        ),
        ep(Method::POST, "/api/admin/users/bulk", Some(json!({ "count": 1, "prefix": "sweep" })), true),
        ep(Method::GET, "/api/admin/export", None, true),
    ]
}

async fn ws_status(url: &str) -> Option<u16> {
    match tokio_tungstenite::connect_async(url).await {
        Ok(_) => Some(101),
        Err(tokio_tungstenite::tungstenite::Error::Http(resp)) => Some(resp.status().as_u16()),
        Err(_) => None,
    }
}

/// Calls every route as nobody, with a forged, a superseded and an expired
/// token, as a player and as admin. Returns the number of calls made and
/// every unexpected status.
pub async fn authorization_sweep() -> (usize, Vec<String>) {
    let clock = ManualClock::new(Timestamp(1_700_000_000_000));
    let srv = server::start(server::zero_wait_pack(), Arc::new(clock.clone())).await;
    srv.state.auth.create_user("pat", "pat-password").expect("player account");
    let mut problems = Vec::new();
    let mut calls = 0;
    let mut expect = |who: &str, e: &Endpoint, status: StatusCode, ok: bool| {
        calls += 1;
        if !ok {
            problems.push(format!("{who} {} {} -> {status}", e.method, e.path));
        }
    };

    let nobody = Client::anonymous(&srv.base);
    let mut forged = Client::anonymous(&srv.base);
    forged.token = Some("eyJzdWIiOiJhZG1pbiJ9.AAAA".to_string());
    let superseded = Client::login(&srv.base, "pat", "pat-password").await;
    let player = Client::login(&srv.base, "pat", "pat-password").await;
    let admin = Client::login(&srv.base, "admin", ADMIN_PASSWORD).await;

    for e in endpoints() {
        for (who, c) in [("anonymous", &nobody), ("forged", &forged), ("superseded", &superseded)] {
            let (s, _) = c.call(e.method.clone(), e.path, e.body.clone()).await;
            expect(who, &e, s, s == StatusCode::UNAUTHORIZED);
        }
        let (s, _) = player.call(e.method.clone(), e.path, e.body.clone()).await;
        if e.admin {
            expect("player", &e, s, s == StatusCode::FORBIDDEN);
        } else {
            let ok = ![StatusCode::UNAUTHORIZED, StatusCode::FORBIDDEN].contains(&s) && !s.is_server_error();
            expect("player", &e, s, ok);
        }
        if e.admin {
            let (s, _) = admin.call(e.method.clone(), e.path, e.body.clone()).await;
            expect("admin", &e, s, s == StatusCode::OK);
        }
    }
    let ws_checks = [
        ("anonymous ws", nobody.ws_url(), 401),
        ("forged ws", forged.ws_url(), 401),
        ("player ws", player.ws_url(), 101),
    ];
    for (who, url, want) in ws_checks {
        calls += 1;
        let got = ws_status(&url).await;
        if got != Some(want) {
            problems.push(format!("{who} -> {got:?}, wanted {want}"));
        }
    }

    clock.advance_millis(TTL_SECS as i64 * 1000);
    for e in endpoints() {
        for (who, c) in [("expired player", &player), ("expired admin", &admin)] {
            calls += 1;
            let (s, _) = c.call(e.method.clone(), e.path, e.body.clone()).await;
            if s != StatusCode::UNAUTHORIZED {
                problems.push(format!("{who} {} {} -> {s}", e.method, e.path));
            }
        }
    }
    calls += 1;
    if ws_status(&player.ws_url()).await != Some(401) {
        problems.push("expired ws token accepted".to_string());
    }
    (calls, problems)
}

pub struct Played {
    pub server: TestServer,
    pub player: Client,
    pub admin: Client,
    pub report: Report,
    pub report_user: String,
}

/// Starts a real-clock server with zero sabotage wait and plays the whole
/// game as `player`.
pub async fn full_playthrough(player: &str) -> Played {
    let pack = server::zero_wait_pack();
    let srv = server::start(pack.clone(), Arc::new(SystemClock)).await;
    srv.state.auth.create_user(player, "player-password").expect("player account");
    let client = Client::login(&srv.base, player, "player-password").await;
    let report = playthrough::play(&client, &pack).await;
    let admin = Client::login(&srv.base, "admin", ADMIN_PASSWORD).await;
    Played {
        server: srv,
        player: client,
        admin,
        report,
        report_user: player.to_string(),
    }
}

/// Compares the exported log of the player with what the script produced,
/// and the export document with the log it was taken from.
pub async fn export_check(played: &Played, username: &str) -> Vec<String> {
    let mut problems = Vec::new();
    let path = format!("/api/admin/export?username={username}");
    let resp = played
        .admin
        .http
        .get(format!("{}{path}", played.admin.base))
        .bearer_auth(played.admin.token.as_deref().unwrap_or_default())
        .send()
        .await
        .expect("export request");
    if resp.status() != StatusCode::OK {
        return vec![format!("export -> {}", resp.status())];
    }
    let text = resp.text().await.expect("export body");
    let exported = match parse_export(&text) {
        Ok(events) => events,
        Err(e) => return vec![format!("export does not parse: {e}")],
    };
    let filter = ExportFilter {
        username: Some(username.to_string()),
        ..ExportFilter::default()
    };
    let logged = played.server.state.engine.log().export(&filter);
    if exported != logged {
        problems.push(format!("export differs from the log: {} vs {} events", exported.len(), logged.len()));
    }
    if shipcheck::events::export_json(&exported) != text {
        problems.push("re-serialized export differs from the document".to_string());
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &exported {
        *counts.entry(e.kind.type_name()).or_default() += 1;
        if e.username != username {
            problems.push(format!("event {} belongs to {}", e.id, e.username));
        }
    }
    if counts.len() != shipcheck::events::EVENT_TYPES.len() {
        problems.push(format!("only {} event types appear", counts.len()));
    }
    if counts != played.report.expected {
        problems.push(format!("event counts {counts:?}, expected {:?}", played.report.expected));
    }
    if !exported.windows(2).all(|w| w[0].id < w[1].id && w[0].timestamp <= w[1].timestamp) {
        problems.push("export is not ordered by id and time".to_string());
    }
    problems
}

/// Component whose `covered` function has `a` statements and whose
/// `uncovered` function has `b`, with a suite calling only the first.
pub fn split_component(a: usize, b: usize) -> (shipcheck::lang::SourceUnit, shipcheck::lang::SourceUnit) {
    use shipcheck::lang::SourceUnit;
    let body = |n: usize| "        print(1)\n".repeat(n);
    let cut = format!(
        "component Split {{\n    fn covered() {{\n{}    }}\n\n    fn uncovered() {{\n{}    }}\n}}\n",
        body(a),
        body(b)
    );
    let tests = "tests Split {\n    fn testCovered() {\n        covered()\n    }\n}\n";
    (SourceUnit::cut("Split", cut), SourceUnit::test("SplitTest", tests))
}

/// Coverage and gate verdict for `split_component(a, b)`.
pub fn gate_verdict(a: usize, b: usize) -> (f64, bool) {
    let (cut, tests) = split_component(a, b);
    let suite = shipcheck::harness::compile_pair(&cut, &tests).expect("split suite compiles");
    let result = shipcheck::harness::run_suite(&suite, &shipcheck::lang::ExecLimits::default());
    (result.coverage_percent, shipcheck::harness::meets_activation_gate(&result))
}

/// Runs an endless loop under a 1000 ms wall timeout `repeats` times, once
/// as a plain call and once inside a suite, and reports every slow or
/// non-timeout outcome.
pub fn watchdog(repeats: usize) -> (std::time::Duration, Vec<String>) {
    use shipcheck::harness::{compile_pair, run_suite, TestStatus};
    use shipcheck::lang::{self, ExecLimits, ExecStatus, SourceUnit, TimeoutCause};
    use std::time::{Duration, Instant};

    let limits = ExecLimits {
        wall_timeout_ms: 1000,
        max_steps: u64::MAX,
        ..ExecLimits::default()
    };
    let cut = SourceUnit::cut("Spin", "component Spin {\n    fn spin() {\n        while (true) {\n        }\n    }\n}\n");
    let program = lang::parse(&cut).expect("spin parses");
    let tests = SourceUnit::test("SpinTest", "tests Spin {\n    fn testSpin() {\n        spin()\n    }\n}\n");
    let suite = compile_pair(&cut, &tests).expect("spin suite compiles");
    let mut worst = Duration::ZERO;
    let mut problems = Vec::new();
    for i in 0..repeats {
        let started = Instant::now();
        let out = lang::run(&program, "spin", &limits).expect("entry exists");
        let took = started.elapsed();
        worst = worst.max(took);
        if out.status != ExecStatus::Timeout || out.timeout != Some(TimeoutCause::WallClock) {
            problems.push(format!("run {i}: {:?} {:?}", out.status, out.timeout));
        }
        if out.elapsed_ms < 1000 || took > Duration::from_millis(2000) {
            problems.push(format!("run {i}: reported {} ms, took {took:?}", out.elapsed_ms));
        }
    }
    let started = Instant::now();
    let result = run_suite(&suite, &limits);
    let took = started.elapsed();
    worst = worst.max(took);
    if result.status_of("testSpin") != Some(TestStatus::Timeout) || took > Duration::from_millis(2000) {
        problems.push(format!("suite: {:?} after {took:?}", result.status_of("testSpin")));
    }
    (worst, problems)
}

/// Re-runs every room's hidden suites outside the validator: all must pass
/// on the pristine component and at least one must fail on the mutant.
/// Also confirms the validator refuses a pack whose mutant is a no-op.
pub fn content_validation(pack: &shipcheck::content::ContentPack) -> Vec<String> {
    use shipcheck::content::{default_files, ContentPack};
    use shipcheck::harness::{compile_suite, parse_labeled, run_suite};
    use shipcheck::lang::ExecLimits;

    let mut problems = Vec::new();
    if pack.room_count() != 7 {
        problems.push(format!("{} rooms", pack.room_count()));
    }
    for room in &pack.rooms {
        let c = &room.spec.component_name;
        let run = |cut| {
            let cut = parse_labeled(cut, false).expect("pack components parse");
            let units = room.all_hidden_units();
            let suite = compile_suite(&cut, None, &units).expect("hidden suites compile");
            run_suite(&suite, &ExecLimits::default())
        };
        let pristine = run(&room.cut);
        if pristine.results.is_empty() || !pristine.all_pass() {
            problems.push(format!("{c}: pristine fails {:?}", pristine.failing()));
        }
        let mutant = run(&room.mutant);
        if mutant.failing().is_empty() {
            problems.push(format!("{c}: mutant survives every hidden test"));
        }
        if mutant.status_of(&room.guiding_test.name) == Some(shipcheck::harness::TestStatus::Pass) {
            problems.push(format!("{c}: guiding test {} misses the mutant", room.guiding_test.name));
        }
    }
    let mut files = default_files();
    let first = pack.rooms[0].spec.component_name.clone();
    let pristine = files[&format!("cut/{first}.ship")].clone();
    files.insert(format!("mutants/{first}.ship"), pristine);
    if ContentPack::from_files(&files).is_ok() {
        problems.push("validator accepted an equivalent mutant".to_string());
    }
    problems
}
