//! Benchmark orchestration: config-driven dataset -> index -> search ->
//! fuse -> evaluate pipelines, plus the rescoring throughput benchmark.
//!
//! A benchmark config lists datasets (with their artifact files) and
//! retrievers (bm25, impact, dense, hybrid). Running it produces one TREC
//! run file and one metric report per (retriever, dataset), a summary JSON,
//! and a text table of NDCG group means (rows = retrievers, columns = task
//! groups). Output is a pure function of the config and input files:
//! reruns are byte-identical.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use hybridir_core::corpus::{self, QuerySet, ValidationReport};
use hybridir_core::dense::EmbeddingStore;
use hybridir_core::hybrid::{self, Node, RegressionTree, TreeEnsemble};
use hybridir_core::metrics::{aggregate_groups, evaluate_run, GroupTable, MetricKs, MetricReport};
use hybridir_core::run::{RetrievalRun, ScoredDoc};
use hybridir_core::sparse::{AnalyzerConfig, Bm25Index, Bm25Params, ImpactIndex};

/// Dense-retrieval artifact files of one dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseFiles {
    pub doc_vectors: PathBuf,
    pub doc_ids: PathBuf,
    pub query_vectors: PathBuf,
    pub query_ids: PathBuf,
}

/// Sparse-vector (impact) artifact files of one dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparseFiles {
    pub doc_vectors: PathBuf,
    pub query_vectors: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub name: String,
    pub group: String,
    pub corpus: PathBuf,
    pub queries: PathBuf,
    pub qrels: PathBuf,
    #[serde(default)]
    pub dense: Option<DenseFiles>,
    #[serde(default)]
    pub sparse: Option<SparseFiles>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RetrieverKind {
    Bm25 {
        #[serde(default)]
        k1: Option<f64>,
        #[serde(default)]
        b: Option<f64>,
        #[serde(default)]
        stopwords: Option<PathBuf>,
        #[serde(default)]
        lemmas: Option<PathBuf>,
    },
    Impact,
    Dense,
    Hybrid {
        members: Vec<String>,
        model: PathBuf,
        #[serde(default = "default_pool_depth")]
        depth: usize,
    },
}

fn default_pool_depth() -> usize {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrieverConfig {
    pub name: String,
    #[serde(flatten)]
    pub kind: RetrieverKind,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MetricCutoffs {
    #[serde(default = "default_ndcg_k")]
    pub ndcg: usize,
    #[serde(default = "default_mrr_k")]
    pub mrr: usize,
    #[serde(default = "default_recall_k")]
    pub recall: usize,
}

fn default_ndcg_k() -> usize {
    10
}
fn default_mrr_k() -> usize {
    10
}
fn default_recall_k() -> usize {
    100
}

impl Default for MetricCutoffs {
    fn default() -> Self {
        MetricCutoffs { ndcg: 10, mrr: 10, recall: 100 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub datasets: Vec<DatasetConfig>,
    pub retrievers: Vec<RetrieverConfig>,
    #[serde(default)]
    pub metrics: Option<MetricCutoffs>,
    /// Retrieval depth of every run file.
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    pub output_dir: PathBuf,
}

fn default_top_k() -> usize {
    100
}

impl BenchmarkConfig {
    /// Loads a config file, resolving relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading benchmark config {}", path.display()))?;
        let mut config: BenchmarkConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing benchmark config {}", path.display()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        for dataset in &mut self.datasets {
            resolve(&mut dataset.corpus);
            resolve(&mut dataset.queries);
            resolve(&mut dataset.qrels);
            if let Some(dense) = &mut dataset.dense {
                resolve(&mut dense.doc_vectors);
                resolve(&mut dense.doc_ids);
                resolve(&mut dense.query_vectors);
                resolve(&mut dense.query_ids);
            }
            if let Some(sparse) = &mut dataset.sparse {
                resolve(&mut sparse.doc_vectors);
                resolve(&mut sparse.query_vectors);
            }
        }
        for retriever in &mut self.retrievers {
            match &mut retriever.kind {
                RetrieverKind::Bm25 { stopwords, lemmas, .. } => {
                    if let Some(p) = stopwords {
                        resolve(p);
                    }
                    if let Some(p) = lemmas {
                        resolve(p);
                    }
                }
                RetrieverKind::Hybrid { model, .. } => resolve(model),
                _ => {}
            }
        }
        resolve(&mut self.output_dir);
    }

    fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            bail!("benchmark config lists no datasets");
        }
        if self.retrievers.is_empty() {
            bail!("benchmark config lists no retrievers");
        }
        let mut names = HashSet::new();
        for dataset in &self.datasets {
            if !names.insert(&dataset.name) {
                bail!("duplicate dataset name {:?}", dataset.name);
            }
        }
        let mut retriever_names = HashSet::new();
        for retriever in &self.retrievers {
            if !retriever_names.insert(&retriever.name) {
                bail!("duplicate retriever name {:?}", retriever.name);
            }
        }
        for retriever in &self.retrievers {
            if let RetrieverKind::Hybrid { members, .. } = &retriever.kind {
                if members.len() < 2 {
                    bail!("hybrid retriever {:?} must reference >= 2 members", retriever.name);
                }
                for member in members {
                    let Some(target) = self.retrievers.iter().find(|r| &r.name == member) else {
                        bail!(
                            "hybrid retriever {:?} references unknown member {member:?}",
                            retriever.name
                        );
                    };
                    if matches!(target.kind, RetrieverKind::Hybrid { .. }) {
                        bail!(
                            "hybrid retriever {:?} cannot use hybrid member {member:?}",
                            retriever.name
                        );
                    }
                }
            }
        }
        Ok(())
    }
}

/// Mean metric values of one (retriever, dataset) pair.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DatasetSummary {
    pub ndcg: f64,
    pub mrr: f64,
    pub recall: Option<f64>,
    pub accuracy: f64,
    pub queries_evaluated: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetValidation {
    pub missing_docs: usize,
    pub queries_without_judgments: usize,
    pub duplicate_ids: Vec<String>,
}

impl From<ValidationReport> for DatasetValidation {
    fn from(report: ValidationReport) -> Self {
        DatasetValidation {
            missing_docs: report.missing_docs,
            queries_without_judgments: report.queries_without_judgments,
            duplicate_ids: report.duplicate_ids,
        }
    }
}

/// Everything `run_benchmark` produces, also serialized to `summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkReport {
    pub metrics: MetricCutoffs,
    pub top_k: usize,
    /// retriever -> dataset -> metric means.
    pub per_dataset: BTreeMap<String, BTreeMap<String, DatasetSummary>>,
    /// retriever -> NDCG group means.
    pub ndcg_groups: BTreeMap<String, GroupTable>,
    /// dataset -> consistency report.
    pub dataset_validation: BTreeMap<String, DatasetValidation>,
}

fn load_analyzer(stopwords: Option<&Path>, lemmas: Option<&Path>) -> Result<AnalyzerConfig> {
    let mut analyzer = AnalyzerConfig::simple();
    if let Some(path) = stopwords {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading stopword list {}", path.display()))?;
        analyzer.stopwords = text
            .lines()
            .map(|l| l.trim().to_lowercase())
            .filter(|l| !l.is_empty())
            .collect();
    }
    if let Some(path) = lemmas {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading lemma dictionary {}", path.display()))?;
        let mut map = HashMap::new();
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.splitn(2, '\t');
            let surface = cols.next().unwrap_or_default().trim().to_lowercase();
            if let Some(lemma) = cols.next() {
                map.insert(surface, lemma.trim().to_lowercase());
            }
        }
        analyzer.lemmas = Some(map);
    }
    Ok(analyzer)
}

fn collect_run(ranked: Vec<(String, Vec<ScoredDoc>)>) -> Result<RetrievalRun> {
    let mut run = RetrievalRun::new();
    for (query_id, docs) in ranked {
        run.insert(query_id, docs)?;
    }
    Ok(run)
}

fn bm25_run(
    dataset: &DatasetConfig,
    queries: &QuerySet,
    k: usize,
    k1: Option<f64>,
    b: Option<f64>,
    stopwords: Option<&Path>,
    lemmas: Option<&Path>,
) -> Result<RetrievalRun> {
    let corpus = corpus::load_corpus(&dataset.corpus)
        .with_context(|| format!("dataset {}: corpus {}", dataset.name, dataset.corpus.display()))?;
    let defaults = Bm25Params::default();
    let params = Bm25Params { k1: k1.unwrap_or(defaults.k1), b: b.unwrap_or(defaults.b) };
    let index = Bm25Index::build(&corpus, load_analyzer(stopwords, lemmas)?, params)?;

    let records: Vec<_> = queries.iter().collect();
    let ranked: Vec<(String, Vec<ScoredDoc>)> = records
        .par_iter()
        .map(|q| (q.query_id.clone(), index.search(&q.text, k)))
        .collect();
    collect_run(ranked)
}

fn impact_run(dataset: &DatasetConfig, k: usize) -> Result<RetrievalRun> {
    let files = dataset.sparse.as_ref().with_context(|| {
        format!("dataset {}: retriever kind impact needs sparse vector files", dataset.name)
    })?;
    let docs = hybridir_core::sparse::load_sparse_vectors(&files.doc_vectors).with_context(|| {
        format!("dataset {}: sparse doc vectors {}", dataset.name, files.doc_vectors.display())
    })?;
    let query_vectors = hybridir_core::sparse::load_sparse_vectors(&files.query_vectors)
        .with_context(|| {
            format!(
                "dataset {}: sparse query vectors {}",
                dataset.name,
                files.query_vectors.display()
            )
        })?;
    let index = ImpactIndex::build(&docs)?;
    let ranked: Vec<(String, Vec<ScoredDoc>)> = query_vectors
        .par_iter()
        .map(|(query_id, vector)| (query_id.clone(), index.search(vector, k)))
        .collect();
    collect_run(ranked)
}

fn dense_run(dataset: &DatasetConfig, k: usize) -> Result<RetrievalRun> {
    let files = dataset.dense.as_ref().with_context(|| {
        format!("dataset {}: retriever kind dense needs embedding files", dataset.name)
    })?;
    let store = EmbeddingStore::load(&files.doc_vectors, &files.doc_ids)
        .with_context(|| {
            format!("dataset {}: doc embeddings {}", dataset.name, files.doc_vectors.display())
        })?
        .normalize()?;
    let query_store = EmbeddingStore::load(&files.query_vectors, &files.query_ids).with_context(|| {
        format!(
            "dataset {}: query embeddings {}",
            dataset.name,
            files.query_vectors.display()
        )
    })?;
    let queries: Vec<(String, Vec<f32>)> = query_store
        .ids()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), query_store.row(i).to_vec()))
        .collect();
    Ok(store.search_batch(&queries, k)?)
}

/// Runs every retriever over every dataset, writes run and report files,
/// and aggregates NDCG group means.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkReport> {
    config.validate()?;
    let cutoffs = config.metrics.unwrap_or_default();
    let ks = MetricKs { ndcg: cutoffs.ndcg, mrr: cutoffs.mrr, recall: cutoffs.recall };

    let runs_dir = config.output_dir.join("runs");
    let reports_dir = config.output_dir.join("reports");
    fs::create_dir_all(&runs_dir)?;
    fs::create_dir_all(&reports_dir)?;

    let mut per_dataset: BTreeMap<String, BTreeMap<String, DatasetSummary>> = BTreeMap::new();
    let mut dataset_validation = BTreeMap::new();
    let mut model_cache: HashMap<PathBuf, TreeEnsemble> = HashMap::new();

    for dataset in &config.datasets {
        let queries = corpus::load_queries(&dataset.queries).with_context(|| {
            format!("dataset {}: queries {}", dataset.name, dataset.queries.display())
        })?;
        let qrels = corpus::load_qrels(&dataset.qrels)
            .with_context(|| format!("dataset {}: qrels {}", dataset.name, dataset.qrels.display()))?;
        let corpus_store = corpus::load_corpus(&dataset.corpus).with_context(|| {
            format!("dataset {}: corpus {}", dataset.name, dataset.corpus.display())
        })?;
        dataset_validation.insert(
            dataset.name.clone(),
            corpus::validate_dataset(&corpus_store, &queries, &qrels).into(),
        );

        let mut dataset_runs: BTreeMap<String, RetrievalRun> = BTreeMap::new();

        // member retrievers first, hybrids afterwards
        for hybrid_pass in [false, true] {
            for retriever in &config.retrievers {
                let is_hybrid = matches!(retriever.kind, RetrieverKind::Hybrid { .. });
                if is_hybrid != hybrid_pass {
                    continue;
                }
                let run = match &retriever.kind {
                    RetrieverKind::Bm25 { k1, b, stopwords, lemmas } => bm25_run(
                        dataset,
                        &queries,
                        config.top_k,
                        *k1,
                        *b,
                        stopwords.as_deref(),
                        lemmas.as_deref(),
                    )?,
                    RetrieverKind::Impact => impact_run(dataset, config.top_k)?,
                    RetrieverKind::Dense => dense_run(dataset, config.top_k)?,
                    RetrieverKind::Hybrid { members, model, depth } => {
                        if !model_cache.contains_key(model) {
                            let loaded = hybrid::load_model(model).with_context(|| {
                                format!("retriever {}: model {}", retriever.name, model.display())
                            })?;
                            model_cache.insert(model.clone(), loaded);
                        }
                        let ensemble = &model_cache[model];
                        let member_runs: Vec<&RetrievalRun> = members
                            .iter()
                            .map(|m| {
                                dataset_runs.get(m).with_context(|| {
                                    format!("hybrid {}: member run {m:?} missing", retriever.name)
                                })
                            })
                            .collect::<Result<_>>()?;
                        hybrid::fuse_run(&member_runs, ensemble, config.top_k, *depth).with_context(
                            || format!("hybrid {} on dataset {}", retriever.name, dataset.name),
                        )?
                    }
                };

                let stem = format!("{}__{}", retriever.name, dataset.name);
                run.save_trec(runs_dir.join(format!("{stem}.trec")), &retriever.name)?;
                let report: MetricReport = evaluate_run(&run, &qrels, ks);
                fs::write(
                    reports_dir.join(format!("{stem}.json")),
                    serde_json::to_string_pretty(&report)?,
                )?;
                per_dataset.entry(retriever.name.clone()).or_default().insert(
                    dataset.name.clone(),
                    DatasetSummary {
                        ndcg: report.mean_ndcg,
                        mrr: report.mean_mrr,
                        recall: report.mean_recall,
                        accuracy: report.mean_accuracy,
                        queries_evaluated: report.per_query.len(),
                    },
                );
                dataset_runs.insert(retriever.name.clone(), run);
            }
        }
    }

    let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for dataset in &config.datasets {
        groups.entry(dataset.group.clone()).or_default().push(dataset.name.clone());
    }
    let mut ndcg_groups = BTreeMap::new();
    for (retriever, datasets) in &per_dataset {
        let scores: BTreeMap<String, f64> =
            datasets.iter().map(|(d, s)| (d.clone(), s.ndcg)).collect();
        ndcg_groups.insert(retriever.clone(), aggregate_groups(&scores, &groups, &HashSet::new())?);
    }

    let report = BenchmarkReport {
        metrics: cutoffs,
        top_k: config.top_k,
        per_dataset,
        ndcg_groups,
        dataset_validation,
    };
    fs::write(reports_dir.join("summary.json"), serde_json::to_string_pretty(&report)?)?;
    fs::write(config.output_dir.join("summary.txt"), render_summary_table(&report))?;
    Ok(report)
}

/// Text table of NDCG group means: rows = retrievers, columns = groups.
pub fn render_summary_table(report: &BenchmarkReport) -> String {
    let group_names: Vec<&String> = report
        .ndcg_groups
        .values()
        .flat_map(|t| t.group_means.keys())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let name_width = report
        .per_dataset
        .keys()
        .map(String::len)
        .chain(["retriever".len()])
        .max()
        .unwrap_or(9);

    let mut out = String::new();
    out.push_str(&format!("{:<name_width$} | {:>8}", "retriever", "Avg"));
    for group in &group_names {
        out.push_str(&format!(" | {group:>8}"));
    }
    out.push('\n');
    let width = name_width + 11 + group_names.iter().map(|g| g.len().max(8) + 3).sum::<usize>();
    out.push_str(&"-".repeat(width));
    out.push('\n');
    for (retriever, table) in &report.ndcg_groups {
        out.push_str(&format!("{retriever:<name_width$} | {:>8.4}", table.overall_mean));
        for group in &group_names {
            match table.group_means.get(group.as_str()) {
                Some(mean) => out.push_str(&format!(" | {mean:>8.4}")),
                None => out.push_str(&format!(" | {:>8}", "-")),
            }
        }
        out.push('\n');
    }
    out
}

/// Result of the rescoring throughput benchmark.
#[derive(Debug, Clone, Serialize)]
pub struct ThroughputReport {
    pub n_queries: usize,
    pub candidates_per_query: usize,
    pub n_trees: usize,
    pub feature_count: usize,
    pub single_thread_secs: f64,
    pub single_thread_qps: f64,
    pub multi_thread_secs: f64,
    pub multi_thread_qps: f64,
    /// Reference point: ~1500 q/s on an i7-13700 for the same two-index,
    /// 200-candidate configuration.
    pub paper_reference_qps: f64,
}

impl std::fmt::Display for ThroughputReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "rescoring throughput: {} queries, {} candidates/query, {} trees",
            self.n_queries, self.candidates_per_query, self.n_trees
        )?;
        writeln!(
            f,
            "  single-threaded: {:>10.1} q/s ({:.3} s)",
            self.single_thread_qps, self.single_thread_secs
        )?;
        writeln!(
            f,
            "  multi-threaded:  {:>10.1} q/s ({:.3} s)",
            self.multi_thread_qps, self.multi_thread_secs
        )?;
        write!(f, "  reference:       {:>10.1} q/s (i7-13700)", self.paper_reference_qps)
    }
}

/// Deterministic random ensemble of full binary trees, used when no trained
/// model is supplied to the throughput benchmark.
pub fn random_ensemble(n_trees: usize, depth: usize, feature_count: usize, seed: u64) -> TreeEnsemble {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trees = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        let mut nodes = Vec::new();
        build_random_tree(&mut rng, &mut nodes, depth, feature_count);
        trees.push(RegressionTree::from_nodes(nodes));
    }
    TreeEnsemble::from_parts(trees, 0.3, feature_count).expect("generated trees are valid")
}

fn build_random_tree(
    rng: &mut ChaCha8Rng,
    nodes: &mut Vec<Node>,
    depth: usize,
    feature_count: usize,
) -> usize {
    if depth == 0 {
        nodes.push(Node::Leaf { value: rng.gen_range(-1.0..1.0) });
        return nodes.len() - 1;
    }
    let at = nodes.len();
    nodes.push(Node::Split {
        feature: rng.gen_range(0..feature_count),
        threshold: rng.gen_range(0.0..1.0),
        left: 0,
        right: 0,
    });
    let left = build_random_tree(rng, nodes, depth - 1, feature_count);
    let right = build_random_tree(rng, nodes, depth - 1, feature_count);
    let Node::Split { left: l, right: r, .. } = &mut nodes[at] else { unreachable!() };
    *l = left;
    *r = right;
    at
}

/// Per-query candidate lists for two synthetic indexes with disjoint doc
/// ids and different score scales, `candidates_per_query / 2` docs each.
pub fn synthetic_query_runs(
    n_queries: usize,
    candidates_per_query: usize,
    seed: u64,
) -> Vec<(Vec<ScoredDoc>, Vec<ScoredDoc>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = (candidates_per_query / 2).max(1);
    (0..n_queries)
        .map(|_| {
            let mut make = |offset: usize, scale: f64| -> Vec<ScoredDoc> {
                let docs: Vec<ScoredDoc> = (0..half)
                    .map(|i| ScoredDoc::new(format!("d{:05}", offset + i), rng.gen_range(0.0..scale)))
                    .collect();
                let n = docs.len();
                hybridir_core::run::rank_top_k(docs, n)
            };
            (make(0, 1.0), make(half, 20.0))
        })
        .collect()
}

/// Measures feature extraction + prediction + ranking throughput over
/// synthetic two-index candidate lists, single- and multi-threaded.
pub fn throughput_bench(
    ensemble: &TreeEnsemble,
    n_queries: usize,
    candidates_per_query: usize,
    seed: u64,
) -> Result<ThroughputReport> {
    if ensemble.feature_count() != 2 * hybrid::FEATURES_PER_INDEX {
        bail!(
            "throughput benchmark expects a two-index model ({} features), got {}",
            2 * hybrid::FEATURES_PER_INDEX,
            ensemble.feature_count()
        );
    }
    let queries = synthetic_query_runs(n_queries, candidates_per_query, seed);
    let depth = (candidates_per_query / 2).max(1);

    let rescore = |query: &(Vec<ScoredDoc>, Vec<ScoredDoc>)| -> f64 {
        let fused = hybrid::fuse(&[&query.0, &query.1], ensemble, 10, depth).expect("fuse");
        fused.first().map_or(0.0, |d| d.score)
    };

    let start = Instant::now();
    let mut checksum = 0.0;
    for query in &queries {
        checksum += rescore(query);
    }
    let single_secs = start.elapsed().as_secs_f64();
    std::hint::black_box(checksum);

    let start = Instant::now();
    let parallel_checksum: f64 = queries.par_iter().map(rescore).sum();
    let multi_secs = start.elapsed().as_secs_f64();
    std::hint::black_box(parallel_checksum);

    let qps = |secs: f64| {
        if n_queries == 0 || secs <= 0.0 {
            0.0
        } else {
            n_queries as f64 / secs
        }
    };
    Ok(ThroughputReport {
        n_queries,
        candidates_per_query,
        n_trees: ensemble.len(),
        feature_count: ensemble.feature_count(),
        single_thread_secs: single_secs,
        single_thread_qps: qps(single_secs),
        multi_thread_secs: multi_secs,
        multi_thread_qps: qps(multi_secs),
        paper_reference_qps: 1500.0,
    })
}
