use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn liftml(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_liftml"))
        .args(args)
        .output()
        .expect("spawn liftml")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn fixtures() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let o = liftml(&["fixtures", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(stdout(&o).lines().count(), 7);
    dir
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

fn run(dir: &Path, scenario: &str, extra: &[&str]) -> Output {
    let (scn, pd, kws) = (
        p(dir, scenario),
        p(dir, "stub_person.tmlf"),
        p(dir, "stub_keyword.tmlf"),
    );
    let mut args = vec!["run", &scn, "--pd", &pd, "--kws", &kws];
    args.extend_from_slice(extra);
    liftml(&args)
}

#[test]
fn run_passes_and_prints_transcript() {
    let d = fixtures();
    let o = run(d.path(), "happy.scn", &[]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let out = stdout(&o);
    assert!(
        out.contains("t=1770 unit=0 ACTION dispatch floor=3 can id=0x2E0"),
        "{out}"
    );
    assert!(out.ends_with("expectations 2 passed, 0 failed\n"), "{out}");
}

#[test]
fn failed_expectation_exits_nonzero() {
    let d = fixtures();
    fs::write(
        d.path().join("wrong.scn"),
        "0 camera person.pgm\n1500 audio three.wav\n1500 expect_dispatch 4 5000\n",
    )
    .unwrap();
    let o = run(d.path(), "wrong.scn", &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn transcript_file_matches_stdout() {
    let d = fixtures();
    let t = p(d.path(), "out.txt");
    let printed = stdout(&run(d.path(), "silence.scn", &[]));
    let o = run(
        d.path(),
        "silence.scn",
        &["--transcript", &t, "--config", &p(d.path(), "default.cfg")],
    );
    assert!(o.status.success());
    let written = fs::read_to_string(&t).unwrap();
    assert!(printed.starts_with(&written));
    assert!(
        written.contains("t=5740 unit=0 EVENT listen_timeout"),
        "{written}"
    );
}

#[test]
fn config_changes_behaviour() {
    let d = fixtures();
    fs::write(d.path().join("strict.cfg"), "floors=1,2,4\n").unwrap();
    let o = run(
        d.path(),
        "happy.scn",
        &["--config", &p(d.path(), "strict.cfg")],
    );
    assert_eq!(o.status.code(), Some(1));
    fs::write(d.path().join("bad.cfg"), "listen_timeout_ms=soon\n").unwrap();
    let o = run(
        d.path(),
        "happy.scn",
        &["--config", &p(d.path(), "bad.cfg")],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bench_reports_csv_and_budgets() {
    let d = fixtures();
    let (scn, pd, kws) = (
        p(d.path(), "happy.scn"),
        p(d.path(), "stub_person.tmlf"),
        p(d.path(), "stub_keyword.tmlf"),
    );
    let o = liftml(&["bench", &scn, "--runs", "10", "--pd", &pd, "--kws", &kws]);
    assert!(o.status.success(), "{o:?}");
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "runs 10");
    assert_eq!(lines[1], "phase,n,mean_ms,min_ms,max_ms");
    assert_eq!(lines[2], "person_inference,10,740.000,740,740");
    assert!(out.contains("dispatches 10 timeouts 0 failed_expectations 0"));
    assert!(out.contains("flash_pd 125 <= 256000 PASS"), "{out}");
}

#[test]
fn features_csv_is_49_by_43() {
    let d = fixtures();
    let csv = p(d.path(), "three.csv");
    let o = liftml(&["features", &p(d.path(), "three.wav"), "--csv", &csv]);
    assert!(o.status.success());
    let text = fs::read_to_string(&csv).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 49);
    assert!(rows.iter().all(|r| r.len() == 43));
    // the 600 ms clip is preceded by silence
    assert!(rows[0].iter().all(|&v| (v - 1e-6f64.ln()).abs() < 1e-7));
    assert!(rows[48].iter().any(|&v| v > 0.0));
    let stdout_csv = stdout(&liftml(&["features", &p(d.path(), "three.wav")]));
    assert_eq!(stdout_csv, text);
}

#[test]
fn inference_commands() {
    let d = fixtures();
    let (pd, kws) = (
        p(d.path(), "stub_person.tmlf"),
        p(d.path(), "stub_keyword.tmlf"),
    );
    let out = stdout(&liftml(&[
        "infer-image",
        &p(d.path(), "person.pgm"),
        "--model",
        &pd,
    ]));
    assert!(out.contains("person score=127 pct=100 -> person"), "{out}");
    let out = stdout(&liftml(&[
        "infer-image",
        &p(d.path(), "empty.pgm"),
        "--model",
        &pd,
    ]));
    assert!(out.contains("-> no person"), "{out}");
    for (i, word) in ["one", "two", "three", "four"].iter().enumerate() {
        let out = stdout(&liftml(&[
            "infer-audio",
            &p(d.path(), &format!("{word}.wav")),
            "--model",
            &kws,
        ]));
        assert!(
            out.contains(&format!("top={word} pct=100 -> floor {}", i + 1)),
            "{out}"
        );
    }
    let out = stdout(&liftml(&[
        "infer-audio",
        &p(d.path(), "silence.wav"),
        "--model",
        &kws,
    ]));
    assert!(out.contains("top=silence"), "{out}");
    let o = liftml(&["infer-image", &p(d.path(), "person.pgm"), "--model", &kws]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn inspect_and_bad_model() {
    let d = fixtures();
    let o = liftml(&["inspect", &p(d.path(), "stub_keyword.tmlf")]);
    let out = stdout(&o);
    assert!(out.starts_with("model stub_keyword"), "{out}");
    assert!(out.contains("flash 480 bytes / budget 256000 PASS"));
    let o = liftml(&[
        "inspect",
        &p(d.path(), "stub_keyword.tmlf"),
        "--arena",
        "100",
    ]);
    assert!(stdout(&o).contains("/ capacity 100 FAIL"));
    fs::write(d.path().join("junk.tmlf"), b"not a model").unwrap();
    let o = liftml(&["inspect", &p(d.path(), "junk.tmlf")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: "));
}
