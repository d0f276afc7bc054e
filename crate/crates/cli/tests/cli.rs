use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

const XLR: &str = env!("CARGO_BIN_EXE_xlr");

fn data() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic").canonicalize().unwrap()
}

fn xlr(args: &[&str]) -> Output {
    Command::new(XLR).args(args).env_remove("XLR_CACHE_DIR").output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = xlr(args);
    assert!(
        out.status.success(),
        "xlr {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(args: &[&str]) -> i32 {
    xlr(args).status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Files {
    corpus: PathBuf,
    topics: PathBuf,
    qrels: PathBuf,
}

fn files() -> Files {
    let d = data();
    Files {
        corpus: d.join("corpus.en.jsonl"),
        topics: d.join("topics.jsonl"),
        qrels: d.join("qrels.txt"),
    }
}

fn write_config(dir: &Path, scorer: &str) -> PathBuf {
    let f = files();
    let cfg = dir.join("exp.toml");
    fs::write(
        &cfg,
        format!(
            r#"name = "cli"
corpus = "{}"
doc_lang = "en"
topics = "{}"
query_lang = "en"
qrels = "{}"
scorer = "{scorer}"
seed = 11
folds = 5
out_dir = "out"

[grid]
alpha_values = [0.0, 0.5, 1.0]
weight_values = [0.0, 0.5, 1.0]
k_values = [1, 2]
"#,
            p(&f.corpus),
            p(&f.topics),
            p(&f.qrels)
        ),
    )
    .unwrap();
    cfg
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&[]), 1);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["eval", "--run"]), 1);
    assert_eq!(code(&["--help"]), 0);
    let f = files();
    let bad_spec = [
        "rerank", "--run", "x.run", "--corpus", p(&f.corpus), "--lang", "en", "--topics", p(&f.topics),
        "--query-lang", "en", "--scorer", "magic:8", "--alpha", "0.5", "--weights", "1",
    ];
    assert_eq!(code(&bad_spec), 1);
}

#[test]
fn data_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let f = files();
    assert_eq!(code(&["eval", "--run", "/nonexistent.run", "--qrels", p(&f.qrels)]), 2);
    let bad = tmp.path().join("bad.run");
    fs::write(&bad, "S001 Q0 d1 1 0.5\n").unwrap();
    assert_eq!(code(&["eval", "--run", p(&bad), "--qrels", p(&f.qrels)]), 2);
    let idx = tmp.path().join("i.json");
    ok(&["index", "--corpus", p(&f.corpus), "--lang", "en", "--out", p(&idx)]);
    assert_eq!(
        code(&["search", "--index", p(&idx), "--topics", p(&f.topics), "--query-lang", "fr"]),
        2
    );
}

#[test]
fn scorer_errors_exit_3_unless_zeroed() {
    let tmp = tempfile::tempdir().unwrap();
    let f = files();
    let idx = tmp.path().join("i.json");
    ok(&["index", "--corpus", p(&f.corpus), "--lang", "en", "--out", p(&idx)]);
    let mut args = vec![
        "rerank", "--index", p(&idx), "--depth", "5", "--corpus", p(&f.corpus), "--lang", "en", "--topics",
        p(&f.topics), "--query-lang", "en", "--scorer", "stdio:exit 0", "--alpha", "0.5", "--weights", "1",
    ];
    assert_eq!(code(&args), 3);
    args.extend(["--on-scorer-error", "zero"]);
    let out = ok(&args);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 50);
}

#[test]
fn experiment_equals_chained_subcommands() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "builtin:lexical");
    ok(&["experiment", p(&cfg)]);
    let out = tmp.path().join("out");

    let f = files();
    let idx = tmp.path().join("index.json");
    let bm25 = tmp.path().join("bm25.run");
    ok(&["index", "--corpus", p(&f.corpus), "--lang", "en", "--out", p(&idx)]);
    ok(&["search", "--index", p(&idx), "--topics", p(&f.topics), "--query-lang", "en", "--out", p(&bm25)]);
    assert_eq!(fs::read(&bm25).unwrap(), fs::read(out.join("bm25.run")).unwrap());

    for k in ["1", "2"] {
        let run = tmp.path().join(format!("rerank-{k}.run"));
        let report = tmp.path().join(format!("tuning-{k}.json"));
        ok(&[
            "rerank", "--run", p(&bm25), "--corpus", p(&f.corpus), "--lang", "en", "--topics", p(&f.topics),
            "--query-lang", "en", "--scorer", "builtin:lexical", "--qrels", p(&f.qrels), "--k-sentences", k,
            "--alpha-values", "0,0.5,1", "--weight-values", "0,0.5,1", "--seed", "11", "--folds", "5",
            "--report", p(&report), "--out", p(&run),
        ]);
        assert_eq!(fs::read(&run).unwrap(), fs::read(out.join(format!("rerank-{k}s.run"))).unwrap());
        assert_eq!(fs::read(&report).unwrap(), fs::read(out.join(format!("tuning-{k}s.json"))).unwrap());
        let eval = ok(&["eval", "--run", p(&run), "--qrels", p(&f.qrels)]).stdout;
        assert_eq!(eval, fs::read(out.join(format!("rerank-{k}s.eval.tsv"))).unwrap());
    }
}

#[test]
fn experiment_is_deterministic_across_thread_counts() {
    let mut outputs = Vec::new();
    for threads in ["1", "4", "1"] {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = write_config(tmp.path(), "builtin:lexical");
        ok(&["--threads", threads, "experiment", p(&cfg)]);
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(tmp.path().join("out"))
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|f| f.extension().is_some_and(|x| x == "run"))
            .map(|f| (f.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&f).unwrap()))
            .collect();
        files.sort();
        assert_eq!(files.len(), 3);
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn check_scorer_over_stdio() {
    let spec = format!("stdio:{XLR} serve --scorer builtin:lexical");
    let out = ok(&["check-scorer", "--scorer", &spec]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 5, "{text}");
    assert!(text.lines().all(|l| l.starts_with("PASS")), "{text}");
}

struct HttpServer {
    child: Child,
    url: String,
}

impl Drop for HttpServer {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn http_server(scorer: &str) -> HttpServer {
    let mut child = Command::new(XLR)
        .args(["serve", "--scorer", scorer, "--http", "127.0.0.1:0", "--model", "test-model"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.trim().strip_prefix("listening on ").expect("address line").to_string();
    HttpServer { child, url }
}

#[test]
fn http_serve_round_trip() {
    let server = http_server("builtin:lexical");
    let spec = format!("http:{}", server.url);
    let out = ok(&["check-scorer", "--scorer", &spec]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("PASS\thealth\t") && text.contains("test-model"), "{text}");

    // Remote and in-process scoring give the same reranked run.
    let tmp = tempfile::tempdir().unwrap();
    let f = files();
    let idx = tmp.path().join("i.json");
    ok(&["index", "--corpus", p(&f.corpus), "--lang", "en", "--out", p(&idx)]);
    let rerank = |scorer: &str| {
        ok(&[
            "rerank", "--index", p(&idx), "--depth", "30", "--corpus", p(&f.corpus), "--lang", "en", "--topics",
            p(&f.topics), "--query-lang", "en", "--scorer", scorer, "--alpha", "0.3", "--weights", "1,0.5",
        ])
        .stdout
    };
    assert_eq!(rerank(&spec), rerank("builtin:lexical"));
}

#[test]
fn cache_dir_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cache = tmp.path().join("cache");
    let cfg = write_config(tmp.path(), "builtin:lexical");
    let out = Command::new(XLR)
        .args(["experiment", p(&cfg)])
        .env("XLR_CACHE_DIR", &cache)
        .output()
        .unwrap();
    assert!(out.status.success());
    let entries: Vec<_> = fs::read_dir(&cache).unwrap().collect();
    assert_eq!(entries.len(), 1);
}

#[test]
fn synth_reproduces_bundled_collection() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["synth", "--out", p(tmp.path())]);
    for name in ["corpus.en.jsonl", "corpus.zh.jsonl", "topics.jsonl", "qrels.txt"] {
        assert!(fs::read(tmp.path().join(name)).unwrap() == fs::read(data().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn eval_json_output() {
    let tmp = tempfile::tempdir().unwrap();
    let f = files();
    let idx = tmp.path().join("i.json");
    let run = tmp.path().join("r.run");
    ok(&["index", "--corpus", p(&f.corpus), "--lang", "en", "--out", p(&idx)]);
    ok(&["search", "--index", p(&idx), "--topics", p(&f.topics), "--query-lang", "en", "--out", p(&run)]);
    let out = ok(&["eval", "--run", p(&run), "--qrels", p(&f.qrels), "--output", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["mean"]["num_topics"], 10);
    assert!(v["mean"]["ap"].as_f64().unwrap() > 0.0);
}

#[test]
fn params_file_equals_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let f = files();
    let idx = tmp.path().join("i.json");
    let params = tmp.path().join("params.json");
    fs::write(&params, r#"{"alpha": 0.4, "weights": [1.0, 0.3], "k": 2}"#).unwrap();
    ok(&["index", "--corpus", p(&f.corpus), "--lang", "en", "--out", p(&idx)]);
    let base = [
        "rerank", "--index", p(&idx), "--depth", "40", "--corpus", p(&f.corpus), "--lang", "en", "--topics",
        p(&f.topics), "--query-lang", "en", "--scorer", "builtin:lexical",
    ];
    let from_file = ok(&[&base[..], &["--params", p(&params)]].concat()).stdout;
    let from_flags = ok(&[&base[..], &["--alpha", "0.4", "--weights", "1,0.3"]].concat()).stdout;
    assert_eq!(from_file, from_flags);
    fs::write(&params, r#"{"alpha": 0.4, "weights": [1.0, 0.3], "k": 3}"#).unwrap();
    assert_eq!(code(&[&base[..], &["--params", p(&params)]].concat()), 1);
}
