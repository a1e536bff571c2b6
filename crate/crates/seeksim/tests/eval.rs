//! Evaluation harness: seeding, aggregation and transports.

use seeksim::eval::{evaluate, rows_from_csv, rows_to_csv, EvalConfig, PolicyKind, SceneSummary, Stat};
use seeksim::server::{Server, ServerConfig};
use seeksim_core::agents::rescore;
use seeksim_core::seeds::episode_seed;
use seeksim_core::task::TaskConfig;

fn quick(policy: PolicyKind, episodes: usize) -> EvalConfig {
    EvalConfig { policy, episodes, seed: 3, task: TaskConfig { episode_limit: 80, ..Default::default() }, ..Default::default() }
}

#[test]
fn population_statistics() {
    assert_eq!(Stat::of([2.0]), Stat { mean: 2.0, std: 0.0 });
    // Population form: divides by n.
    assert_eq!(Stat::of([1.0, 3.0]), Stat { mean: 2.0, std: 1.0 });
    let s = Stat::of([2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
    assert_eq!((s.mean, s.std), (5.0, 2.0));
}

#[test]
fn single_episode_reports_zero_spread() {
    let ev = evaluate(&quick(PolicyKind::Random, 1)).unwrap();
    assert_eq!(ev.rows.len(), 2);
    for s in &ev.report.summaries[..2] {
        assert_eq!(s.episodes, 1);
        for st in [s.recall, s.precision, s.collisions, s.steps, s.score, s.explored_m2] {
            assert_eq!(st.std, 0.0);
        }
    }
}

#[test]
fn report_is_recomputable_from_the_csv() {
    let cfg = quick(PolicyKind::Random, 6);
    let ev = evaluate(&cfg).unwrap();
    let csv = rows_to_csv(&ev.rows);
    assert!(csv.starts_with("scene,episode,recall,precision,collisions,steps,score,explored_m2\n"));
    let rows = rows_from_csv(&csv).unwrap();
    assert_eq!(rows, ev.rows);
    for s in &ev.report.summaries {
        let mine: Vec<_> = rows.iter().filter(|r| s.scene == 0 || r.scene == s.scene).collect();
        assert_eq!(&SceneSummary::of(s.scene, &mine), s);
    }
    // Every logged episode rescored from its events gives its row back.
    for (row, log) in ev.rows.iter().zip(&ev.logs) {
        assert_eq!(rescore(log), log.result);
        assert_eq!(log.start.episode_seed, episode_seed(cfg.seed, row.scene, row.episode as u64));
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let one = evaluate(&quick(PolicyKind::Frontier, 2)).unwrap();
    let three = evaluate(&EvalConfig { jobs: 3, ..quick(PolicyKind::Frontier, 2) }).unwrap();
    assert_eq!(rows_to_csv(&one.rows), rows_to_csv(&three.rows));
    assert_eq!(one.report.summaries, three.report.summaries);
    assert_eq!(one.report.config_digest, three.report.config_digest);
}

#[test]
fn remote_evaluation_matches_local() {
    let server = ServerConfig { port: 0, odom_port: 0, ws_port: 0, ..Default::default() };
    let addrs = Server::bind(server).unwrap().spawn().unwrap();
    let local = evaluate(&quick(PolicyKind::Frontier, 2)).unwrap();
    let remote = evaluate(&EvalConfig { server: Some(addrs.command), ..quick(PolicyKind::Frontier, 2) }).unwrap();
    assert_eq!(local.logs, remote.logs);
    assert_eq!(rows_to_csv(&local.rows), rows_to_csv(&remote.rows));
}

#[test]
fn transport_failures_are_reported_not_counted() {
    // A port that was just free: nothing listens there.
    let dead = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let ev = evaluate(&EvalConfig { server: Some(dead), ..quick(PolicyKind::Random, 2) }).unwrap();
    assert!(ev.rows.is_empty());
    assert_eq!(ev.report.aborted.len(), 4);
    assert!(ev.report.summaries.iter().all(|s| s.episodes == 0));
}

#[test]
fn config_digest_tracks_the_config() {
    let a = quick(PolicyKind::Random, 2);
    assert_eq!(a.digest(), quick(PolicyKind::Random, 2).digest());
    assert_ne!(a.digest(), EvalConfig { seed: 4, ..a.clone() }.digest());
    assert_ne!(a.digest(), quick(PolicyKind::Frontier, 2).digest());
    // Worker count and transport are not part of the experiment.
    assert_eq!(a.digest(), EvalConfig { jobs: 8, ..a.clone() }.digest());
}
