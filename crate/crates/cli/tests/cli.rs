use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spotlight_sim::{ArchetypeKind, ComparisonReport, ReportDoc, ScenarioSpec};

fn spotlight(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spotlight")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn scenario_file(dir: &Path) -> PathBuf {
    let s = ScenarioSpec::new(
        90_000,
        15,
        3,
        &[("a", ArchetypeKind::Nodder), ("b", ArchetypeKind::Stoic), ("c", ArchetypeKind::Smiler)],
    );
    let path = dir.join("s.json");
    std::fs::write(&path, s.to_json()).unwrap();
    path
}

#[test]
fn help_lists_every_subcommand() {
    let o = spotlight(&["--help"]);
    assert!(o.status.success());
    for sub in ["serve", "simulate", "replay", "gen-trace", "report"] {
        assert!(stdout(&o).contains(sub), "{sub}");
        assert!(spotlight(&[sub, "--help"]).status.success(), "{sub} --help");
    }
}

#[test]
fn bad_invocations_fail_with_one_line() {
    for args in [
        vec!["simulate", "--bogus"],
        vec!["simulate"],
        vec!["simulate", "--scenario", "/nonexistent/s.json"],
        vec!["report", "/nonexistent/r.json"],
        vec!["replay", "t.ajsonl", "--speed", "max"],
        vec!["replay", "t.ajsonl", "--live", "--speed", "fast"],
        vec!["simulate", "--scenario", "s.json", "--live", "--seeds", "3"],
    ] {
        let o = spotlight(&args);
        assert!(!o.status.success(), "{args:?}");
        assert_eq!(stderr(&o).trim_end().lines().count(), 1, "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn simulate_defaults_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = scenario_file(dir.path());
    let out = dir.path().join("r.json");
    let o = spotlight(&["simulate", "--scenario", scenario.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("seed=0 policy=affective window_ms=15000"));
    let ReportDoc::SessionReport(r) = ReportDoc::parse(&std::fs::read_to_string(&out).unwrap()).unwrap() else {
        panic!("expected a session report")
    };
    assert_eq!((r.seed, r.decisions), (0, 6));

    let table = spotlight(&["report", out.to_str().unwrap()]);
    assert_eq!(stdout(&table), stdout(&o));
}

#[test]
fn report_tables_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = scenario_file(dir.path());
    let out = dir.path().join("cmp.json");
    let o = spotlight(&[
        "simulate", "--scenario", scenario.to_str().unwrap(), "--seeds", "4", "--compare", "random", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let first = spotlight(&["report", out.to_str().unwrap()]);
    let second = spotlight(&["report", out.to_str().unwrap()]);
    assert_eq!(first.stdout, second.stdout);
    let text = stdout(&first);
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(1).unwrap().starts_with("affective"));
    assert!(text.lines().nth(2).unwrap().starts_with("random"));

    let empty = dir.path().join("empty.json");
    let doc = ReportDoc::ComparisonReport(ComparisonReport { n_seeds: 0, audience_size: 0, policies: vec![] });
    std::fs::write(&empty, doc.to_json()).unwrap();
    let o = spotlight(&["report", empty.to_str().unwrap()]);
    assert_eq!(stdout(&o).lines().count(), 1);
}

#[test]
fn gen_trace_then_replay_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = scenario_file(dir.path());
    let trace = dir.path().join("t.ajsonl");
    let o = spotlight(&["gen-trace", "--scenario", scenario.to_str().unwrap(), "--out", trace.to_str().unwrap(), "--policy", "random", "--seed", "9"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let a = spotlight(&["replay", trace.to_str().unwrap()]);
    let b = spotlight(&["replay", trace.to_str().unwrap()]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(stdout(&a).lines().count(), 6);
    assert!(stderr(&a).contains("seed=9 policy=random"));

    let log = dir.path().join("log.jsonl");
    let o = spotlight(&["replay", trace.to_str().unwrap(), "--out", log.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(&log).unwrap(), a.stdout);

    let live = spotlight(&["replay", trace.to_str().unwrap(), "--live", "--speed", "max"]);
    assert!(live.status.success(), "{}", stderr(&live));
    assert!(stderr(&live).contains("0 rejected"));
}

#[test]
fn serve_on_a_taken_port_fails() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let o = spotlight(&["serve", "--port", &port]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("cannot listen"), "{}", stderr(&o));
}

#[test]
fn shipped_scenarios_run() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let o = spotlight(&["simulate", "--scenario", path.to_str().unwrap()]);
        assert!(o.status.success(), "{}: {}", path.display(), stderr(&o));
        seen += 1;
    }
    assert!(seen >= 2);
}
