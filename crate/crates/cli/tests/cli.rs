use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_intentdiv"))
}

fn toy() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/toy")
}

fn toy_file(name: &str) -> String {
    toy().join(name).display().to_string()
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "status {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        run_ok(bin().args(["run", "--config", &toy_file("experiment.toml"), "--out", path_str(out)]));
    }
    for name in ["run.txt", "baseline.txt", "intents.jsonl", "scores.tsv", "eval.json", "manifest.json"] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn stages_compose_to_run() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).display().to_string();
    run_ok(bin().args(["run", "--config", &toy_file("experiment.toml"), "--out", &p("full")]));

    run_ok(bin().args(["build-tree", "--log", &toy_file("querylog.tsv"), "--out", &p("tree.json")]));
    run_ok(bin().args([
        "gen-intents", "--topics", &toy_file("topics.tsv"), "--tree", &p("tree.json"), "--n", "2", "--out",
        &p("intents.jsonl"),
    ]));
    run_ok(bin().args([
        "retrieve", "--corpus", &toy_file("corpus.jsonl"), "--topics", &toy_file("topics.tsv"), "--out",
        &p("pool.txt"),
    ]));
    run_ok(bin().args([
        "score", "--corpus", &toy_file("corpus.jsonl"), "--topics", &toy_file("topics.tsv"), "--pool",
        &p("pool.txt"), "--intents", &p("intents.jsonl"), "--n", "2", "--out", &p("scores.tsv"),
    ]));
    run_ok(bin().args([
        "diversify", "--scores", &p("scores.tsv"), "--n", "2", "--lambda", "1", "--tag", "toy-xquad", "--out",
        &p("run.txt"),
    ]));
    run_ok(bin().args([
        "evaluate", "--run", &p("run.txt"), "--qrels", &toy_file("qrels.txt"), "--topics",
        &toy_file("topics.tsv"), "--json", &p("eval.json"), "--out", &p("eval.tsv"),
    ]));

    let read = |name: &str| std::fs::read_to_string(dir.path().join(name)).unwrap();
    assert_eq!(read("intents.jsonl"), read("full/intents.jsonl"));
    assert_eq!(read("scores.tsv"), read("full/scores.tsv"));
    assert_eq!(read("run.txt"), read("full/run.txt"));
    assert_eq!(read("eval.json"), read("full/eval.json"));
    assert_eq!(read("eval.tsv"), read("full/eval.tsv"));
}

#[test]
fn external_generator_matches_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).display().to_string();
    run_ok(bin().args([
        "gen-intents", "--topics", &toy_file("topics.tsv"), "--log", &toy_file("querylog.tsv"), "--out",
        &p("local.jsonl"),
    ]));
    run_ok(bin().args([
        "gen-intents", "--topics", &toy_file("topics.tsv"), "--out", &p("remote.jsonl"), "--external",
        env!("CARGO_BIN_EXE_intentdiv"), "serve", "--log", &toy_file("querylog.tsv"),
    ]));
    let local = std::fs::read_to_string(p("local.jsonl")).unwrap();
    assert!(local.contains("pittsburgh hockey"));
    assert_eq!(local, std::fs::read_to_string(p("remote.jsonl")).unwrap());
}

#[test]
fn empty_intent_file_reproduces_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let intents = dir.path().join("none.jsonl");
    std::fs::write(&intents, "{\"qid\":\"1\",\"intents\":[]}\n").unwrap();
    let out = dir.path().join("out");
    run_ok(bin().args([
        "run", "--config", &toy_file("experiment.toml"), "--set", "intent_source=file", "--set",
        &format!("intents_file={}", intents.display()), "--out", path_str(&out),
    ]));
    let docs = |name: &str| -> Vec<String> {
        std::fs::read_to_string(out.join(name))
            .unwrap()
            .lines()
            .map(|l| l.split_whitespace().take(3).collect::<Vec<_>>().join(" "))
            .collect()
    };
    assert_eq!(docs("run.txt"), docs("baseline.txt"));
}

#[test]
fn tune_and_stratify() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).display().to_string();
    for name in ["a.toml", "b.toml"] {
        std::fs::copy(toy().join("experiment.toml"), dir.path().join(name)).unwrap();
    }
    let base = toy().display().to_string();
    let out = run_ok(bin().args([
        "tune", "--config", &p("a.toml"), "--config", &p("b.toml"), "--set", &format!("corpus={base}/corpus.jsonl"),
        "--set", &format!("topics={base}/topics.tsv"), "--set", &format!("qrels={base}/qrels.txt"), "--set",
        &format!("query_log={base}/querylog.tsv"), "--set", "n_intents=20",
    ]));
    let held: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(held.as_array().unwrap().len(), 2);

    run_ok(bin().args(["run", "--config", &toy_file("experiment.toml"), "--out", &p("full")]));
    let out = run_ok(bin().args([
        "stratify", "--eval", &p("full/eval.json"), "--topics", &toy_file("topics.tsv"), "--log",
        &toy_file("querylog.tsv"),
    ]));
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("total\t2"), "{table}");

    let out = run_ok(bin().args(["compare", "--a", &p("full/eval.json"), "--b", &p("full/baseline_eval.json")]));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["topics"], 2);
}

#[test]
fn dclm_and_prototypes() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).display().to_string();
    run_ok(bin().args(["build-tree", "--log", &toy_file("querylog.tsv"), "--out", &p("tree.json")]));
    let a = run_ok(bin().args(["emit-dclm", "--tree", &p("tree.json"), "--walks", "20", "--seed", "3"]));
    let b = run_ok(bin().args(["emit-dclm", "--tree", &p("tree.json"), "--walks", "20", "--seed", "3"]));
    assert_eq!(a.stdout, b.stdout);
    assert!(!a.stdout.is_empty());
    let clm = run_ok(bin().args(["emit-clm", "--log", &toy_file("querylog.tsv")]));
    assert!(String::from_utf8(clm.stdout).unwrap().contains("</q>"));

    std::fs::write(
        p("emb.jsonl"),
        "{\"term\":\"jaguar\",\"passage_id\":\"p1\",\"vector\":[1,0]}\n\
         {\"term\":\"jaguar\",\"passage_id\":\"p2\",\"vector\":[0.9,0.1]}\n\
         {\"term\":\"jaguar\",\"passage_id\":\"p3\",\"vector\":[0,1]}\n",
    )
    .unwrap();
    let out = run_ok(bin().args(["prototypes", "--embeddings", &p("emb.jsonl"), "--k", "2"]));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 2);
}

#[test]
fn exit_codes() {
    assert_eq!(bin().output().unwrap().status.code(), Some(1));
    assert_eq!(bin().args(["evaluate", "--bogus"]).output().unwrap().status.code(), Some(1));
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "1 1 d1\n").unwrap();
    let out = bin()
        .args(["evaluate", "--run", path_str(&bad), "--qrels", &toy_file("qrels.txt")])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));

    let missing = dir.path().join("missing.txt");
    let out = bin()
        .args(["evaluate", "--run", path_str(&missing), "--qrels", &toy_file("qrels.txt")])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin()
        .args(["run", "--config", &toy_file("experiment.toml"), "--set", "lambda=2", "--out", path_str(dir.path())])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin().args(["gen-intents", "--topics", &toy_file("topics.tsv")]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}
