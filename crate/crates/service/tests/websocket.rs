mod support;

use std::time::Duration;

use poac::manager::{ManagerConfig, SessionManager};
use poac::protocol::{ErrorCode, Hello, Join, Message, PROTOCOL_VERSION};
use poac::protocol::Envelope;
use poac_core::engine::{Action, ActionMap, Color};
use poac_core::replay::{read_replay, verify};
use support::{act, http_get, request, Client};

fn manager() -> SessionManager {
    SessionManager::new(ManagerConfig::default())
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn two_external_random_clients_finish_and_replay_is_exact() {
    let addr = support::start_http(manager()).await;
    let mut red = Client::ws(addr).await;
    let mut req = request("0", 11, "external", "external");
    req.claim = Some(vec![Color::Red]);
    let (id, created) = red.create(req).await;
    assert_eq!(created.board.rows, 13);

    let mut blue = Client::ws(addr).await;
    blue.send(Envelope::new(Message::Join(Join { side: Color::Blue })).session(id)).await;
    blue.recv_kind("session_created").await;

    let (r, b) = tokio::join!(red.play_random(id, Color::Red, 1), blue.play_random(id, Color::Blue, 2));
    let ((end_r, acts_r), (end_b, acts_b)) = (r, b);
    assert_eq!(end_r, end_b);
    assert!(acts_r > 0 && acts_b > 0);
    assert_eq!(end_r.controllers.red, "external");

    red.send(Envelope::new(Message::ReplayRequest).session(id)).await;
    let text = red.collect_replay().await;
    let loaded = read_replay(text.as_bytes()).unwrap();
    assert!(loaded.warnings.is_empty(), "{:?}", loaded.warnings);
    assert_eq!(loaded.record.footer.as_ref().unwrap().total_ticks, end_r.ticks);
    assert!(verify(&loaded.record).unwrap().is_exact());

    let (status, body) = http_get(addr, &format!("/api/sessions/{id}/replay")).await;
    assert_eq!(status, 200);
    assert_eq!(body, text);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn human_versus_bot_waits_for_the_human() {
    let addr = support::start_http(manager()).await;
    let mut c = Client::ws(addr).await;
    let (id, _) = c.create(request("2", 5, "human", "bot:KAI0")).await;
    let obs = c.recv_kind("observation").await;
    assert_eq!(obs.tick, Some(0));
    let Message::Observation(o) = obs.body else { unreachable!() };
    assert_eq!(o.side, Color::Red);
    assert_eq!(o.agents.len(), 3);

    // Gated: nothing moves while the human thinks.
    assert!(c.recv_within(Duration::from_millis(400)).await.is_none());

    let hold: ActionMap = o.agents.iter().map(|a| (a.uid, Action::Stop)).collect();
    c.send(act(id, 0, Color::Red, hold.clone())).await;
    assert_eq!(c.recv().await.kind(), "act_ack");
    let step = c.recv_kind("step_result").await;
    assert_eq!(step.tick, Some(0));
    let next = c.recv_kind("observation").await;
    assert_eq!(next.tick, Some(1));

    // Acting again for tick 0 is stale.
    c.send(act(id, 0, Color::Red, hold)).await;
    let e = c.expect_error(ErrorCode::StaleTick).await;
    assert_eq!(e.session, Some(id));

    // Acting for the bot's side is refused.
    c.send(act(id, 1, Color::Blue, ActionMap::new())).await;
    c.expect_error(ErrorCode::NotController).await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn illegal_and_incomplete_acts_are_rejected() {
    let addr = support::start_http(manager()).await;
    let mut c = Client::ws(addr).await;
    let (id, _) = c.create(request("0", 1, "external", "bot:KAI1")).await;
    let obs = c.recv_kind("observation").await;
    let Message::Observation(o) = obs.body else { unreachable!() };
    // Nobody can shoot at tick 0 from the start positions.
    let bad: ActionMap = o.agents.iter().map(|a| (a.uid, Action::Shoot(3))).collect();
    c.send(act(id, 0, Color::Red, bad)).await;
    c.expect_error(ErrorCode::IllegalAction).await;
    let partial: ActionMap = o.agents.iter().take(1).map(|a| (a.uid, Action::Stop)).collect();
    c.send(act(id, 0, Color::Red, partial)).await;
    c.expect_error(ErrorCode::IllegalAction).await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn handshake_and_bad_requests() {
    let addr = support::start_http(manager()).await;
    let mut c = Client::ws(addr).await;
    c.send(Envelope::new(Message::Hello(Hello {
        protocol_version: PROTOCOL_VERSION,
        client: "test".into(),
    })))
    .await;
    assert_eq!(c.recv().await.kind(), "hello");
    c.send(Envelope::new(Message::Hello(Hello {
        protocol_version: PROTOCOL_VERSION + 1,
        client: "test".into(),
    })))
    .await;
    c.expect_error(ErrorCode::Version).await;
    c.send(Envelope::new(Message::CreateSession(request("0", 0, "bot:KAI9", "random"))))
        .await;
    c.expect_error(ErrorCode::InvalidConfig).await;
    c.send(Envelope::new(Message::CreateSession(request("99", 0, "random", "random"))))
        .await;
    c.expect_error(ErrorCode::InvalidConfig).await;
    c.send(Envelope::new(Message::Join(Join { side: Color::Red })).session(424242))
        .await;
    c.expect_error(ErrorCode::UnknownSession).await;
    c.send(Envelope::new(Message::ReplayRequest)).await;
    c.expect_error(ErrorCode::UnknownSession).await;

    let (status, body) = http_get(addr, "/health").await;
    assert_eq!((status, body.as_str()), (200, "ok"));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn second_claim_on_a_side_is_refused() {
    let addr = support::start_http(manager()).await;
    let mut a = Client::ws(addr).await;
    let (id, _) = a.create(request("1", 0, "external", "bot:KAI0")).await;
    let mut b = Client::ws(addr).await;
    b.send(Envelope::new(Message::Join(Join { side: Color::Red })).session(id)).await;
    let e = b.recv().await;
    assert_eq!(e.kind(), "error");
    // Bot sides cannot be joined either.
    b.send(Envelope::new(Message::Join(Join { side: Color::Blue })).session(id)).await;
    assert_eq!(b.recv().await.kind(), "error");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn rejoining_resumes_with_a_fresh_observation() {
    let addr = support::start_http(manager()).await;
    let mut a = Client::ws(addr).await;
    let (id, _) = a.create(request("1", 3, "human", "random")).await;
    a.recv_kind("observation").await;
    drop(a);
    // The claim is released when the connection goes away.
    let mut b = Client::ws(addr).await;
    let mut joined = false;
    for _ in 0..50 {
        b.send(Envelope::new(Message::Join(Join { side: Color::Red })).session(id)).await;
        let e = b.recv().await;
        if e.kind() == "session_created" {
            joined = true;
            break;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    assert!(joined);
    let obs = b.recv_kind("observation").await;
    assert_eq!(obs.tick, Some(0));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn served_replay_streams_in_chunks() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.poacrep");
    poac::commands::play("3", 8, poac_core::bots::BotKind::Kai2, poac_core::bots::BotKind::Kai1, Some(&path)).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert!(bytes.len() > poac::net::REPLAY_CHUNK_BYTES, "episode long enough to need several chunks");
    let mgr = SessionManager::with_served_replay(ManagerConfig::default(), bytes.clone());
    let addr = support::start_http(mgr).await;
    let mut c = Client::ws(addr).await;
    c.send(Envelope::new(Message::ReplayRequest)).await;
    let text = c.collect_replay().await;
    assert_eq!(text.as_bytes(), &bytes[..]);
    let (status, body) = http_get(addr, "/api/replay").await;
    assert_eq!(status, 200);
    assert_eq!(body.as_bytes(), &bytes[..]);
}
