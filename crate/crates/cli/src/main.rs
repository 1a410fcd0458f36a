//! `hybridir` command-line interface.
//!
//! Subcommands: `index`, `search`, `fuse-train`, `fuse`, `evaluate`,
//! `preprocess`, `bench-throughput`, `losses check`, and `benchmark`.
//! Exit code is 0 on success; failures print a machine-readable JSON error
//! record to stderr and exit nonzero. `HYBRIDIR_THREADS` caps parallelism.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use hybridir_cli::bench;
use hybridir_core::corpus;
use hybridir_core::dense::EmbeddingStore;
use hybridir_core::hybrid::{self, LtrParams};
use hybridir_core::losses;
use hybridir_core::metrics::{evaluate_run, MetricKs};
use hybridir_core::run::RetrievalRun;
use hybridir_core::sparse::{self, Bm25Index, Bm25Params, ImpactIndex, SparseIndexFile};
use hybridir_core::textprep::{preprocess_pair, PrepConfig, QaPair};

#[derive(Parser)]
#[command(name = "hybridir", version, about = "Hybrid sparse-dense retrieval engine and benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a BM25 or impact index and persist it.
    Index(IndexArgs),
    /// Search an index (or embedding files) and write a TREC run.
    Search(SearchArgs),
    /// Train the LambdaMART fusion model from member runs and qrels.
    FuseTrain(FuseTrainArgs),
    /// Rescore member runs with a trained fusion model.
    Fuse(FuseArgs),
    /// Evaluate a TREC run against qrels.
    Evaluate(EvaluateArgs),
    /// Clean raw question-answer pairs.
    Preprocess(PreprocessArgs),
    /// Measure fusion rescoring throughput.
    BenchThroughput(BenchThroughputArgs),
    /// Loss-kernel utilities.
    Losses(LossesArgs),
    /// Run a full benchmark config end to end.
    Benchmark(BenchmarkArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum IndexKind {
    Bm25,
    Impact,
}

#[derive(Args)]
struct IndexArgs {
    #[arg(long, value_enum)]
    kind: IndexKind,
    /// corpus.jsonl (bm25).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Sparse doc vectors JSONL (impact).
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// Stopword list, one per line (bm25).
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Lemma dictionary TSV: surface<TAB>lemma (bm25).
    #[arg(long)]
    lemmas: Option<PathBuf>,
    #[arg(long)]
    k1: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SearchKind {
    Bm25,
    Impact,
    Dense,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, value_enum)]
    kind: SearchKind,
    /// Sparse index file (bm25, impact).
    #[arg(long)]
    index: Option<PathBuf>,
    /// queries.jsonl with query text (bm25).
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Query vectors: sparse JSONL (impact) or EMB1 file (dense).
    #[arg(long)]
    query_vectors: Option<PathBuf>,
    /// Query id JSONL parallel to the EMB1 query file (dense).
    #[arg(long)]
    query_ids: Option<PathBuf>,
    /// Document EMB1 file (dense).
    #[arg(long)]
    doc_vectors: Option<PathBuf>,
    /// Document id JSONL (dense).
    #[arg(long)]
    doc_ids: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    k: usize,
    #[arg(long, default_value = "hybridir")]
    tag: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FuseTrainArgs {
    /// Member TREC runs, in hybrid feature order.
    #[arg(long, num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
    #[arg(long)]
    qrels: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long, default_value_t = 6)]
    max_depth: usize,
    #[arg(long, default_value_t = 0.3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0.75)]
    row_subsample: f64,
    #[arg(long, default_value_t = 0.9)]
    col_subsample: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    l2: f64,
    /// NDCG truncation inside the lambda weights; omit for the full list.
    #[arg(long)]
    ndcg_truncation: Option<usize>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Candidates pooled per member run.
    #[arg(long, default_value_t = 100)]
    depth: usize,
    /// Print training NDCG@10 after each boosting round.
    #[arg(long)]
    verbose: bool,
}

#[derive(Args)]
struct FuseArgs {
    #[arg(long)]
    model: PathBuf,
    /// Member TREC runs, in the order the model was trained on.
    #[arg(long, num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
    #[arg(long, default_value_t = 100)]
    k: usize,
    #[arg(long, default_value_t = 100)]
    depth: usize,
    #[arg(long, default_value = "hybrid")]
    tag: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    #[arg(long, default_value_t = 10)]
    ndcg_k: usize,
    #[arg(long, default_value_t = 10)]
    mrr_k: usize,
    #[arg(long, default_value_t = 100)]
    recall_k: usize,
    /// Write the full per-query report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PreprocessArgs {
    /// Raw pairs JSONL: {"question", "answer", "source"}.
    #[arg(long)]
    input: PathBuf,
    /// prep.json with dictionary paths and thresholds.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct BenchThroughputArgs {
    #[arg(long, default_value_t = 2000)]
    queries: usize,
    #[arg(long, default_value_t = 200)]
    candidates: usize,
    /// Trained model; a deterministic random ensemble is used when absent.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long, default_value_t = 6)]
    max_depth: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Also print the report as a JSON line.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct LossesArgs {
    #[command(subcommand)]
    command: LossesCommand,
}

#[derive(Subcommand)]
enum LossesCommand {
    /// Run the finite-difference gradient suite and print max relative errors.
    Check {
        #[arg(long, default_value_t = 20)]
        points: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long)]
    config: PathBuf,
}

fn load_run(path: &PathBuf) -> Result<RetrievalRun> {
    RetrievalRun::load_trec(path).with_context(|| format!("loading run {}", path.display()))
}

fn cmd_index(args: IndexArgs) -> Result<()> {
    match args.kind {
        IndexKind::Bm25 => {
            let corpus_path = args.corpus.context("--kind bm25 requires --corpus")?;
            let store = corpus::load_corpus(&corpus_path)
                .with_context(|| format!("loading corpus {}", corpus_path.display()))?;
            let mut analyzer = sparse::AnalyzerConfig::simple();
            if let Some(path) = &args.stopwords {
                let text = std::fs::read_to_string(path)?;
                analyzer.stopwords =
                    text.lines().map(|l| l.trim().to_lowercase()).filter(|l| !l.is_empty()).collect();
            }
            if let Some(path) = &args.lemmas {
                let text = std::fs::read_to_string(path)?;
                let mut map = std::collections::HashMap::new();
                for line in text.lines().filter(|l| !l.trim().is_empty()) {
                    let mut cols = line.splitn(2, '\t');
                    let surface = cols.next().unwrap_or_default().trim().to_lowercase();
                    if let Some(lemma) = cols.next() {
                        map.insert(surface, lemma.trim().to_lowercase());
                    }
                }
                analyzer.lemmas = Some(map);
            }
            let defaults = Bm25Params::default();
            let params = Bm25Params {
                k1: args.k1.unwrap_or(defaults.k1),
                b: args.b.unwrap_or(defaults.b),
            };
            let index = Bm25Index::build(&store, analyzer, params)?;
            index.save(&args.out)?;
            eprintln!(
                "indexed {} docs, avg length {:.2}, -> {}",
                index.doc_count(),
                index.avg_doc_length(),
                args.out.display()
            );
        }
        IndexKind::Impact => {
            let vectors_path = args.vectors.context("--kind impact requires --vectors")?;
            let docs = sparse::load_sparse_vectors(&vectors_path)
                .with_context(|| format!("loading sparse vectors {}", vectors_path.display()))?;
            let index = ImpactIndex::build(&docs)?;
            index.save(&args.out)?;
            eprintln!("indexed {} docs -> {}", index.doc_count(), args.out.display());
        }
    }
    Ok(())
}

fn cmd_search(args: SearchArgs) -> Result<()> {
    let run = match args.kind {
        SearchKind::Bm25 => {
            let index_path = args.index.context("--kind bm25 requires --index")?;
            let SparseIndexFile::Bm25(index) = sparse::load_sparse_index(&index_path)? else {
                bail!("{} is not a BM25 index", index_path.display());
            };
            let queries_path = args.queries.context("--kind bm25 requires --queries")?;
            let queries = corpus::load_queries(&queries_path)?;
            let mut run = RetrievalRun::new();
            for query in queries.iter() {
                run.insert(query.query_id.clone(), index.search(&query.text, args.k))?;
            }
            run
        }
        SearchKind::Impact => {
            let index_path = args.index.context("--kind impact requires --index")?;
            let SparseIndexFile::Impact(index) = sparse::load_sparse_index(&index_path)? else {
                bail!("{} is not an impact index", index_path.display());
            };
            let vectors_path = args.query_vectors.context("--kind impact requires --query-vectors")?;
            let query_vectors = sparse::load_sparse_vectors(&vectors_path)?;
            let mut run = RetrievalRun::new();
            for (query_id, vector) in query_vectors {
                run.insert(query_id, index.search(&vector, args.k))?;
            }
            run
        }
        SearchKind::Dense => {
            let doc_vectors = args.doc_vectors.context("--kind dense requires --doc-vectors")?;
            let doc_ids = args.doc_ids.context("--kind dense requires --doc-ids")?;
            let query_vectors = args.query_vectors.context("--kind dense requires --query-vectors")?;
            let query_ids = args.query_ids.context("--kind dense requires --query-ids")?;
            let store = EmbeddingStore::load(&doc_vectors, &doc_ids)?.normalize()?;
            let query_store = EmbeddingStore::load(&query_vectors, &query_ids)?;
            let queries: Vec<(String, Vec<f32>)> = query_store
                .ids()
                .iter()
                .enumerate()
                .map(|(i, id)| (id.clone(), query_store.row(i).to_vec()))
                .collect();
            store.search_batch(&queries, args.k)?
        }
    };
    run.save_trec(&args.out, &args.tag)?;
    eprintln!("wrote {} queries -> {}", run.len(), args.out.display());
    Ok(())
}

fn cmd_fuse_train(args: FuseTrainArgs) -> Result<()> {
    let runs: Vec<RetrievalRun> = args.runs.iter().map(load_run).collect::<Result<_>>()?;
    let run_refs: Vec<&RetrievalRun> = runs.iter().collect();
    let qrels = corpus::load_qrels(&args.qrels)
        .with_context(|| format!("loading qrels {}", args.qrels.display()))?;
    let groups = hybrid::training_groups_from_runs(&run_refs, &qrels, args.depth);
    let params = LtrParams {
        n_trees: args.trees,
        max_depth: args.max_depth,
        learning_rate: args.learning_rate,
        row_subsample: args.row_subsample,
        col_subsample_per_tree: args.col_subsample,
        sigma: args.sigma,
        l2_leaf_reg: args.l2,
        min_child_weight: 1.0,
        ndcg_truncation: args.ndcg_truncation,
        seed: args.seed,
    };
    let (ensemble, ndcg_log) = hybrid::train_lambdamart_with_log(&groups, &qrels, &params)?;
    if args.verbose {
        for (round, ndcg) in ndcg_log.iter().enumerate() {
            eprintln!("round {:>3}: train NDCG@10 = {ndcg:.6}", round + 1);
        }
    }
    hybrid::save_model(&ensemble, &args.out)?;
    eprintln!(
        "trained {} trees on {} groups (final train NDCG@10 {:.4}) -> {}",
        ensemble.len(),
        groups.len(),
        ndcg_log.last().copied().unwrap_or(0.0),
        args.out.display()
    );
    Ok(())
}

fn cmd_fuse(args: FuseArgs) -> Result<()> {
    let ensemble = hybrid::load_model(&args.model)
        .with_context(|| format!("loading model {}", args.model.display()))?;
    let runs: Vec<RetrievalRun> = args.runs.iter().map(load_run).collect::<Result<_>>()?;
    let run_refs: Vec<&RetrievalRun> = runs.iter().collect();
    let fused = hybrid::fuse_run(&run_refs, &ensemble, args.k, args.depth)?;
    fused.save_trec(&args.out, &args.tag)?;
    eprintln!("fused {} queries -> {}", fused.len(), args.out.display());
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let run = load_run(&args.run)?;
    let qrels = corpus::load_qrels(&args.qrels)
        .with_context(|| format!("loading qrels {}", args.qrels.display()))?;
    let ks = MetricKs { ndcg: args.ndcg_k, mrr: args.mrr_k, recall: args.recall_k };
    let report = evaluate_run(&run, &qrels, ks);
    println!("queries:          {}", report.per_query.len());
    println!("NDCG@{:<4}        {:.6}", ks.ndcg, report.mean_ndcg);
    println!("MRR@{:<5}        {:.6}", ks.mrr, report.mean_mrr);
    match report.mean_recall {
        Some(recall) => println!("Recall@{:<4}      {recall:.6}", ks.recall),
        None => println!("Recall@{:<4}      n/a (no relevant docs)", ks.recall),
    }
    println!("Accuracy@1       {:.6}", report.mean_accuracy);
    if let Some(out) = &args.out {
        std::fs::write(out, serde_json::to_string_pretty(&report)?)?;
        eprintln!("wrote report -> {}", out.display());
    }
    Ok(())
}

fn cmd_preprocess(args: PreprocessArgs) -> Result<()> {
    let config = PrepConfig::from_file(&args.config)
        .with_context(|| format!("loading prep config {}", args.config.display()))?;
    let input = BufReader::new(
        File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?,
    );
    let mut output = BufWriter::new(File::create(&args.output)?);
    let mut total = 0usize;
    let mut kept = 0usize;
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        let pair: QaPair = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}: bad pair", args.input.display(), idx + 1))?;
        if let Some(cleaned) = preprocess_pair(&pair, &config) {
            kept += 1;
            writeln!(output, "{}", serde_json::to_string(&cleaned)?)?;
        }
    }
    output.flush()?;
    eprintln!("kept {kept} of {total} pairs -> {}", args.output.display());
    Ok(())
}

fn cmd_bench_throughput(args: BenchThroughputArgs) -> Result<()> {
    let ensemble = match &args.model {
        Some(path) => hybrid::load_model(path)
            .with_context(|| format!("loading model {}", path.display()))?,
        None => bench::random_ensemble(args.trees, args.max_depth, 8, args.seed),
    };
    let report = bench::throughput_bench(&ensemble, args.queries, args.candidates, args.seed)?;
    println!("{report}");
    if args.json {
        println!("{}", serde_json::to_string(&report)?);
    }
    Ok(())
}

fn cmd_losses(args: LossesArgs) -> Result<()> {
    match args.command {
        LossesCommand::Check { points, seed } => {
            let report = losses::finite_difference_suite(seed, points);
            println!("finite-difference gradient check ({points} points per loss, h = 1e-5)");
            println!("  margin_mse  max rel err: {:.3e}", report.max_rel_err_margin_mse);
            println!("  mnr_loss    max rel err: {:.3e}", report.max_rel_err_mnr);
            println!("  distill_mse max rel err: {:.3e}", report.max_rel_err_distill);
            println!("  overall     max rel err: {:.3e}", report.max_overall());
            if report.max_overall() >= 1e-4 {
                bail!("gradient check failed: max relative error {:.3e} >= 1e-4", report.max_overall());
            }
        }
    }
    Ok(())
}

fn cmd_benchmark(args: BenchmarkArgs) -> Result<()> {
    let config = bench::BenchmarkConfig::load(&args.config)?;
    let report = bench::run_benchmark(&config)?;
    print!("{}", bench::render_summary_table(&report));
    eprintln!("reports -> {}", config.output_dir.display());
    Ok(())
}

fn init_thread_pool() {
    if let Ok(value) = std::env::var("HYBRIDIR_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            if threads >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
            }
        }
    }
}

fn main() {
    init_thread_pool();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Index(args) => cmd_index(args),
        Command::Search(args) => cmd_search(args),
        Command::FuseTrain(args) => cmd_fuse_train(args),
        Command::Fuse(args) => cmd_fuse(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Preprocess(args) => cmd_preprocess(args),
        Command::BenchThroughput(args) => cmd_bench_throughput(args),
        Command::Losses(args) => cmd_losses(args),
        Command::Benchmark(args) => cmd_benchmark(args),
    };
    if let Err(error) = result {
        let record = serde_json::json!({
            "error": format!("{error:#}"),
        });
        eprintln!("{record}");
        std::process::exit(1);
    }
}
