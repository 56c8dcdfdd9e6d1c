use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(rel)
}

fn mar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mar"))
        .args(args)
        .output()
        .expect("mar runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn run_ramen(out: &Path, extra: &[&str]) -> String {
    let script = format!("scripted:{}", s(&fixture("ramen/script.json")));
    let (task, scenario, kb) = (fixture("ramen/task.txt"), fixture("ramen/scenario.json"), fixture("kb"));
    let mut args = vec![
        "run", "--task", s(&task), "--task-id", "ramen", "--scenario", s(&scenario),
        "--provider", &script, "--kb", s(&kb), "--out", s(out),
    ];
    args.extend_from_slice(extra);
    ok(&mar(&args))
}

#[test]
fn run_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let stdout = run_ramen(&out, &[]);
    assert!(stdout.contains("finished after 11 steps"), "{stdout}");
    assert!(out.join("trajectory.json").is_file());
    assert!(fs::read_dir(out.join("screenshots")).unwrap().count() > 0);

    let metrics = ok(&mar(&[
        "eval",
        "--trajectory",
        s(&out),
        "--criteria",
        s(&fixture("ramen/criteria.json")),
        "--scenario",
        s(&fixture("ramen/scenario.json")),
    ]));
    let m: serde_json::Value = serde_json::from_str(&metrics).unwrap();
    assert_eq!(m["cr"], 100.0);
    assert_eq!(m["sr"], true);
    assert_eq!(m["steps"], 11);
}

#[test]
fn runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_ramen(&a, &[]);
    run_ramen(&b, &[]);
    let strip = |p: &Path| {
        let mut v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(p.join("trajectory.json")).unwrap()).unwrap();
        fn zero(v: &mut serde_json::Value) {
            match v {
                serde_json::Value::Object(m) => {
                    for (k, x) in m.iter_mut() {
                        if k.ends_with("_ms") {
                            *x = 0.into();
                        } else {
                            zero(x);
                        }
                    }
                }
                serde_json::Value::Array(a) => a.iter_mut().for_each(zero),
                _ => {}
            }
        }
        zero(&mut v);
        v
    };
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn kb_pipeline_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let staging = dir.path().join("staging");
    let stdout = run_ramen(&dir.path().join("run"), &["--log-kb", s(&staging)]);
    assert!(stdout.contains("trace logged"), "{stdout}");
    ok(&mar(&["kb", "log", "--trajectory", s(&dir.path().join("run")), "--staging", s(&staging), "--failed"]));

    let filtered = dir.path().join("filtered");
    let stdout = ok(&mar(&["kb", "filter", "--in", s(&staging), "--out", s(&filtered)]));
    assert!(stdout.contains("kept 1 of 2 traces; staged 8 entries"), "{stdout}");

    let decisions = dir.path().join("decisions.jsonl");
    let lines: String = (1..=8)
        .map(|id| {
            let verdict = if id == 2 { "reject" } else { "accept" };
            format!("{{\"id\": {id}, \"verdict\": \"{verdict}\"}}\n")
        })
        .collect();
    let first_seven: String = lines.lines().take(7).map(|l| format!("{l}\n")).collect();
    fs::write(&decisions, first_seven).unwrap();
    let kb_dir = dir.path().join("kb");
    let partial = mar(&["kb", "curate", "--staging", s(&filtered), "--decisions", s(&decisions), "--out", s(&kb_dir)]);
    assert!(!partial.status.success());
    let err = String::from_utf8_lossy(&partial.stderr);
    assert!(err.contains("staged entry 8 has no curation decision"), "{err}");

    fs::write(&decisions, &lines).unwrap();
    let stdout = ok(&mar(&["kb", "curate", "--staging", s(&filtered), "--decisions", s(&decisions), "--out", s(&kb_dir)]));
    assert!(stdout.contains("accepted 7, edited 0, rejected 1"), "{stdout}");
    assert!(kb_dir.join("operator/Maps.jsonl").is_file());
    assert!(kb_dir.join("operator/Notes.jsonl").is_file());
}

#[test]
fn interactive_curation_reads_stdin() {
    use std::io::Write;
    use std::process::Stdio;
    let dir = tempfile::tempdir().unwrap();
    let staging = dir.path().join("staging");
    run_ramen(&dir.path().join("run"), &["--log-kb", s(&staging)]);
    let filtered = dir.path().join("filtered");
    ok(&mar(&["kb", "filter", "--in", s(&staging), "--out", s(&filtered)]));
    let decisions = dir.path().join("decisions.jsonl");
    let mut child = Command::new(env!("CARGO_BIN_EXE_mar"))
        .args(["kb", "curate", "--interactive", "--staging", s(&filtered), "--decisions", s(&decisions), "--out", s(&dir.path().join("kb"))])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"a\nr\ne Tap at {\"x\": 404, \"y\": 260}\na\na\na\na\na\n")
        .unwrap();
    let stdout = ok(&child.wait_with_output().unwrap());
    assert!(stdout.contains("accepted 6, edited 1, rejected 1"), "{stdout}");
    assert_eq!(fs::read_to_string(&decisions).unwrap().lines().count(), 8);
}

#[test]
fn build_manager_from_tsv() {
    let dir = tempfile::tempdir().unwrap();
    let tsv = dir.path().join("tasks.tsv");
    fs::write(
        &tsv,
        "Find ramen in Chicago Loop.\topen Maps app, tap on the search bar\n\
         Find a hotpot restaurant.\topen Maps app, type \"hotpot\"\n",
    )
    .unwrap();
    let out = dir.path().join("kb/manager.jsonl");
    let stdout = ok(&mar(&["kb", "build-manager", "--in", s(&tsv), "--out", s(&out)]));
    assert!(stdout.contains("wrote 2 manager docs"));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.lines().next().unwrap().starts_with("{\"id\":1,"));

    fs::write(&tsv, "same\ta\nsame\tb\n").unwrap();
    let dup = mar(&["kb", "build-manager", "--in", s(&tsv), "--out", s(&out)]);
    assert!(!dup.status.success());
    assert!(String::from_utf8_lossy(&dup.stderr).contains("duplicate instruction"));
}

#[test]
fn bench_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&mar(&[
        "bench",
        "--suite",
        s(&fixture("suite.json")),
        "--kb",
        s(&fixture("kb")),
        "--out",
        s(dir.path()),
        "--workers",
        "2",
    ]));
    assert!(stdout.contains("ramen"), "{stdout}");
    assert!(dir.path().join("report.json").is_file());
    assert!(dir.path().join("report.txt").is_file());
}

#[test]
fn bad_arguments_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = mar(&[
        "run", "--task", "x", "--scenario", s(&fixture("ramen/scenario.json")),
        "--provider", "carrier-pigeon", "--out", s(dir.path()),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("provider must be"));

    let out = mar(&[
        "run", "--task", "x", "--scenario", s(&fixture("ramen/scenario.json")),
        "--provider", "http:http://127.0.0.1:9", "--max-steps", "0", "--out", s(dir.path()),
    ]);
    assert!(!out.status.success());

    let out = mar(&["run", "--task", "x", "--provider", "http", "--out", s(dir.path())]);
    assert!(!out.status.success(), "needs --scenario or --device");
}
