use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn codesum(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_codesum"))
        .args(args)
        .env_remove("EACS_SEED")
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn train(dir: &Path) -> (PathBuf, PathBuf) {
    let (ext, abs) = (dir.join("ext.ckpt"), dir.join("abs.ckpt"));
    let corpus = data("mini.jsonl");
    let conf = data("mini.conf");
    let out = codesum(&["train-extractor", "--corpus", p(&corpus), "--lang", "java", "--config", p(&conf), "--out", p(&ext)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = codesum(&[
        "train-abstracter",
        "--corpus",
        p(&corpus),
        "--extractor",
        p(&ext),
        "--config",
        p(&conf),
        "--fusion",
        "abex",
        "--out",
        p(&abs),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    (ext, abs)
}

#[test]
fn usage_errors_exit_2() {
    let out = codesum(&["train-extractor", "--out", "x.ckpt"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--corpus"));
    assert_eq!(codesum(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(codesum(&["segment", "--lang", "cobol"]).status.code(), Some(2));
}

#[test]
fn module_errors_give_one_line_naming_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.ckpt");
    let out = codesum(&["summarize", "--extractor", p(&missing), "--abstracter", p(&missing), "--code", p(&missing)]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error[summarize]:"), "{err}");

    let bad = dir.path().join("bad.conf");
    fs::write(&bad, "hidden_size = 3\n").unwrap();
    let out = codesum(&["train-extractor", "--corpus", p(&data("mini.jsonl")), "--config", p(&bad), "--out", "x"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error[train-extractor]:"));
    assert!(stderr(&out).contains("hidden_size"));
}

#[test]
fn segment_reads_stdin() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_codesum"))
        .args(["segment", "--lang", "java"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"int f() { String s = \"a;b\"; return 1; }")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    assert_eq!(stdout(&out), "int f() {\nString s = \"a;b\";\nreturn 1;\n}\n");
}

#[test]
fn label_emits_one_record_per_pair() {
    let out = codesum(&["label", "--corpus", p(&data("mini.jsonl")), "--lang", "java"]);
    assert!(out.status.success());
    let records: Vec<serde_json::Value> = stdout(&out).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 4);
    for r in &records {
        let labels = r["labels"].as_array().unwrap();
        assert_eq!(labels.len(), r["statements"].as_array().unwrap().len());
        assert!(labels.iter().any(|l| l == 1));
    }
}

#[test]
fn evaluate_same_file_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let refs = dir.path().join("refs.txt");
    fs::write(&refs, "returns the name of this user .\nsets the age of this user .\n").unwrap();
    let record = dir.path().join("record.json");
    let out = codesum(&["evaluate", "--refs", p(&refs), "--hyps", p(&refs), "--out", p(&record)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let row: Vec<String> = stdout(&out).lines().nth(1).unwrap().split_whitespace().map(str::to_owned).collect();
    assert_eq!(row[1], "100.00");
    assert_eq!(row[3], "100.00");
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&record).unwrap()).unwrap();
    assert_eq!(json["report"]["mean"]["bleu"], 1.0);
    assert_eq!(json["report"]["mean"]["rouge_l"], 1.0);
}

#[test]
fn evaluate_compare_and_buckets() {
    let dir = tempfile::tempdir().unwrap();
    let refs = dir.path().join("refs.txt");
    let base = dir.path().join("base.txt");
    let lines: Vec<String> = (0..25).map(|i| format!("token{i} gets the value")).collect();
    fs::write(&refs, lines.join("\n")).unwrap();
    fs::write(&base, "nothing\n".repeat(25)).unwrap();
    let out = codesum(&[
        "evaluate",
        "--refs",
        p(&refs),
        "--hyps",
        p(&refs),
        "--compare",
        p(&base),
        "--buckets",
        "comment",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("****"), "{text}");
    assert!(text.contains("comment[0, 5) (n=25)"), "{text}");
    assert!(dir.path().join("refs.txt.report.json").exists());

    let out = codesum(&["evaluate", "--refs", p(&refs), "--hyps", p(&refs), "--buckets", "code"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error[evaluate]:"));
}

#[test]
fn trained_pipeline_reproduces_gold_comments() {
    let dir = tempfile::tempdir().unwrap();
    let (ext, abs) = train(dir.path());
    let gold = [
        "returns the name of this user .",
        "sets the name of this user .",
        "returns the age of this user .",
        "sets the age , rejecting negative values .",
    ];
    let corpus = fs::read_to_string(data("mini.jsonl")).unwrap();
    for (line, want) in corpus.lines().zip(gold) {
        let record: serde_json::Value = serde_json::from_str(line).unwrap();
        let code = dir.path().join("snippet.java");
        fs::write(&code, record["code"].as_str().unwrap()).unwrap();
        for beam in ["1", "3"] {
            let out = codesum(&["summarize", "--extractor", p(&ext), "--abstracter", p(&abs), "--code", p(&code), "--beam", beam]);
            assert!(out.status.success(), "{}", stderr(&out));
            assert_eq!(stdout(&out).trim_end(), want);
        }
        let out = codesum(&["extract", "--ckpt", p(&ext), "--code", p(&code)]);
        assert!(out.status.success());
        assert!(!stdout(&out).trim().is_empty());
    }

    let out = codesum(&["summarize", "--extractor", p(&abs), "--abstracter", p(&abs), "--code", p(&ext)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("expected an extractor checkpoint"));
}

#[test]
fn seed_controls_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = data("mini.jsonl");
    let conf = data("mini.conf");
    let run = |name: &str, seed: Option<&str>| {
        let out_path = dir.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_codesum"));
        cmd.args(["train-extractor", "--corpus", p(&corpus), "--config", p(&conf), "--epochs", "5", "--out", p(&out_path)]);
        match seed {
            Some(s) => cmd.env("EACS_SEED", s),
            None => cmd.env_remove("EACS_SEED"),
        };
        assert!(cmd.output().unwrap().status.success());
        fs::read(out_path).unwrap()
    };
    let a = run("a.ckpt", None);
    let b = run("b.ckpt", None);
    let c = run("c.ckpt", Some("11"));
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn gradcheck_passes() {
    let out = codesum(&["gradcheck"]);
    assert!(out.status.success(), "{}", stdout(&out));
    assert_eq!(stdout(&out).lines().count(), 4);
}
