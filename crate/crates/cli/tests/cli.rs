//! End-to-end tests of the `hybridir` binary: every subcommand, plus the
//! run-file self round-trip and the throughput scaling check.

use std::path::Path;
use std::process::{Command, Output};

use hybridir_cli::bench;

fn hybridir() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hybridir"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let output = cmd.output().expect("spawn hybridir");
    assert!(
        output.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn fixtures() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/prep")
}

fn write(path: &Path, contents: &str) {
    std::fs::write(path, contents).unwrap();
}

#[test]
fn index_search_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    let queries = dir.path().join("queries.jsonl");
    let qrels = dir.path().join("qrels.tsv");
    write(
        &corpus,
        "{\"_id\":\"d1\",\"text\":\"kot pies\"}\n{\"_id\":\"d2\",\"text\":\"kot kot ryba\"}\n{\"_id\":\"d3\",\"text\":\"sowa\"}\n",
    );
    write(&queries, "{\"_id\":\"q1\",\"text\":\"kot\"}\n");
    write(&qrels, "q1\td2\t1\n");

    let index = dir.path().join("bm25.spix");
    run_ok(hybridir().args(["index", "--kind", "bm25"]).arg("--corpus").arg(&corpus).arg("--out").arg(&index));

    let run = dir.path().join("run.trec");
    run_ok(
        hybridir()
            .args(["search", "--kind", "bm25", "--k", "10", "--tag", "t"])
            .arg("--index")
            .arg(&index)
            .arg("--queries")
            .arg(&queries)
            .arg("--out")
            .arg(&run),
    );
    let trec = std::fs::read_to_string(&run).unwrap();
    assert!(trec.lines().count() == 2, "two matching docs expected:\n{trec}");

    // self round-trip: the run file we wrote is consumable by evaluate
    let output = run_ok(
        hybridir()
            .args(["evaluate"])
            .arg("--run")
            .arg(&run)
            .arg("--qrels")
            .arg(&qrels),
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("NDCG@10"), "{stdout}");
    assert!(stdout.contains("1.000000"), "d2 ranks first, NDCG should be 1:\n{stdout}");
}

#[test]
fn impact_index_search_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let vectors = dir.path().join("docs_sparse.jsonl");
    let queries = dir.path().join("queries_sparse.jsonl");
    write(
        &vectors,
        "{\"_id\":\"d1\",\"vector\":{\"1\":2.0}}\n{\"_id\":\"d2\",\"vector\":{\"1\":1.0,\"2\":4.0}}\n",
    );
    write(&queries, "{\"_id\":\"q1\",\"vector\":{\"1\":1.0}}\n");

    let index = dir.path().join("impact.spix");
    run_ok(hybridir().args(["index", "--kind", "impact"]).arg("--vectors").arg(&vectors).arg("--out").arg(&index));

    let run = dir.path().join("run.trec");
    run_ok(
        hybridir()
            .args(["search", "--kind", "impact", "--k", "10", "--tag", "t"])
            .arg("--index")
            .arg(&index)
            .arg("--query-vectors")
            .arg(&queries)
            .arg("--out")
            .arg(&run),
    );
    let trec = std::fs::read_to_string(&run).unwrap();
    let first = trec.lines().next().unwrap();
    assert!(first.starts_with("q1 Q0 d1 1 2"), "dot product ranks d1 (2.0) first: {first}");
}

#[test]
fn dense_search_via_binary() {
    let dir = tempfile::tempdir().unwrap();
    let store = hybridir_core::dense::EmbeddingStore::from_rows(
        vec!["d1".into(), "d2".into()],
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
    )
    .unwrap();
    let docs = dir.path().join("docs.emb");
    let doc_ids = dir.path().join("docs.ids.jsonl");
    store.save(&docs, &doc_ids).unwrap();

    let qstore = hybridir_core::dense::EmbeddingStore::from_rows(
        vec!["q1".into()],
        vec![vec![0.6, 0.8]],
    )
    .unwrap();
    let qvecs = dir.path().join("q.emb");
    let qids = dir.path().join("q.ids.jsonl");
    qstore.save(&qvecs, &qids).unwrap();

    let run = dir.path().join("run.trec");
    run_ok(
        hybridir()
            .args(["search", "--kind", "dense", "--k", "2", "--tag", "t"])
            .arg("--doc-vectors")
            .arg(&docs)
            .arg("--doc-ids")
            .arg(&doc_ids)
            .arg("--query-vectors")
            .arg(&qvecs)
            .arg("--query-ids")
            .arg(&qids)
            .arg("--out")
            .arg(&run),
    );
    let trec = std::fs::read_to_string(&run).unwrap();
    assert!(trec.lines().next().unwrap().starts_with("q1 Q0 d2 1 0.8"), "{trec}");
}

#[test]
fn fuse_train_then_fuse_via_binary() {
    let dir = tempfile::tempdir().unwrap();
    // two synthetic member runs over 24 queries: index A puts the relevant
    // doc on top with a high score, index B is noise at another scale
    let mut trec_a = String::new();
    let mut trec_b = String::new();
    let mut qrels = String::new();
    for q in 0..24 {
        let qid = format!("q{q:02}");
        qrels.push_str(&format!("{qid}\t{qid}_rel\t1\n"));
        trec_a.push_str(&format!("{qid} Q0 {qid}_rel 1 0.95 a\n"));
        for i in 0..5 {
            trec_a.push_str(&format!("{qid} Q0 {qid}_d{i} {} 0.{} a\n", i + 2, 40 - i));
        }
        for i in 0..5 {
            trec_b.push_str(&format!("{qid} Q0 {qid}_d{i} {} {}.5 b\n", i + 1, 19 - i));
        }
    }
    let run_a = dir.path().join("a.trec");
    let run_b = dir.path().join("b.trec");
    let qrels_path = dir.path().join("qrels.tsv");
    write(&run_a, &trec_a);
    write(&run_b, &trec_b);
    write(&qrels_path, &qrels);

    let model = dir.path().join("model.lmrt");
    run_ok(
        hybridir()
            .args(["fuse-train", "--trees", "20", "--seed", "7"])
            .arg("--runs")
            .arg(&run_a)
            .arg(&run_b)
            .arg("--qrels")
            .arg(&qrels_path)
            .arg("--out")
            .arg(&model),
    );
    assert!(model.exists());

    let fused = dir.path().join("fused.trec");
    run_ok(
        hybridir()
            .args(["fuse", "--k", "10"])
            .arg("--model")
            .arg(&model)
            .arg("--runs")
            .arg(&run_a)
            .arg(&run_b)
            .arg("--out")
            .arg(&fused),
    );

    let output = run_ok(
        hybridir().args(["evaluate"]).arg("--run").arg(&fused).arg("--qrels").arg(&qrels_path),
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    // the relevant doc is separable from noise, so fused NDCG must be high
    let ndcg_line = stdout.lines().find(|l| l.starts_with("NDCG")).unwrap();
    let value: f64 = ndcg_line.split_whitespace().last().unwrap().parse().unwrap();
    assert!(value > 0.9, "fused NDCG@10 too low: {stdout}");
}

#[test]
fn preprocess_binary_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("clean.jsonl");
    run_ok(
        hybridir()
            .args(["preprocess"])
            .arg("--input")
            .arg(fixtures().join("raw_pairs.jsonl"))
            .arg("--config")
            .arg(fixtures().join("prep.json"))
            .arg("--output")
            .arg(&out),
    );
    let got = std::fs::read(&out).unwrap();
    let golden = std::fs::read(fixtures().join("clean_golden.jsonl")).unwrap();
    assert_eq!(got, golden);
}

#[test]
fn losses_check_exits_zero() {
    let output = run_ok(hybridir().args(["losses", "check", "--points", "10"]));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("max rel err"), "{stdout}");
}

#[test]
fn bench_throughput_smoke_and_zero_queries() {
    let output = run_ok(hybridir().args(["bench-throughput", "--queries", "50", "--trees", "10", "--json"]));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("rescoring throughput"), "{stdout}");

    // n_queries = 0 must not divide by zero
    let output = run_ok(hybridir().args(["bench-throughput", "--queries", "0", "--trees", "5"]));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("0 queries"), "{stdout}");
}

#[test]
fn doubling_candidates_roughly_doubles_per_query_cost() {
    let ensemble = bench::random_ensemble(100, 6, 8, 99);
    // warm up, then measure both configurations
    bench::throughput_bench(&ensemble, 200, 200, 99).unwrap();
    let base = bench::throughput_bench(&ensemble, 1200, 200, 99).unwrap();
    let doubled = bench::throughput_bench(&ensemble, 1200, 400, 99).unwrap();
    let cost_base = base.single_thread_secs / base.n_queries as f64;
    let cost_doubled = doubled.single_thread_secs / doubled.n_queries as f64;
    let ratio = cost_doubled / cost_base;
    assert!(
        (1.0..=3.0).contains(&ratio),
        "per-query cost ratio {ratio:.2} outside 2x +/- 50% band ({cost_base:.2e}s vs {cost_doubled:.2e}s)"
    );
}

#[test]
fn missing_file_yields_json_error_record() {
    let output = hybridir()
        .args(["evaluate", "--run", "/nonexistent/run.trec", "--qrels", "/nonexistent/qrels.tsv"])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    let line = stderr.lines().last().unwrap();
    let record: serde_json::Value = serde_json::from_str(line).expect("stderr ends with a JSON record");
    assert!(record["error"].as_str().unwrap().contains("run"), "{record}");
}

#[test]
fn benchmark_subcommand_runs_a_minimal_config() {
    let dir = tempfile::tempdir().unwrap();
    write(
        &dir.path().join("corpus.jsonl"),
        "{\"_id\":\"d1\",\"text\":\"kot pies\"}\n{\"_id\":\"d2\",\"text\":\"ryba\"}\n",
    );
    write(&dir.path().join("queries.jsonl"), "{\"_id\":\"q1\",\"text\":\"kot\"}\n");
    write(&dir.path().join("qrels.tsv"), "q1\td1\t1\n");
    let config = serde_json::json!({
        "output_dir": "out",
        "datasets": [{
            "name": "mini", "group": "g",
            "corpus": "corpus.jsonl", "queries": "queries.jsonl", "qrels": "qrels.tsv"
        }],
        "retrievers": [{ "name": "bm25", "kind": "bm25" }]
    });
    write(&dir.path().join("bench.json"), &serde_json::to_string(&config).unwrap());

    let output = run_ok(hybridir().arg("benchmark").arg("--config").arg(dir.path().join("bench.json")));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("bm25"), "{stdout}");
    assert!(dir.path().join("out/runs/bm25__mini.trec").exists());
    assert!(dir.path().join("out/reports/bm25__mini.json").exists());
    assert!(dir.path().join("out/summary.txt").exists());

    // rerunning produces byte-identical reports
    let summary_first = std::fs::read(dir.path().join("out/reports/summary.json")).unwrap();
    run_ok(hybridir().arg("benchmark").arg("--config").arg(dir.path().join("bench.json")));
    let summary_second = std::fs::read(dir.path().join("out/reports/summary.json")).unwrap();
    assert_eq!(summary_first, summary_second);
}
