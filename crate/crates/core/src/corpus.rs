//! Benchmark dataset loading: documents, queries, and relevance judgments.
//!
//! Input files follow the BEIR interchange layout: `corpus.jsonl` with one
//! `{"_id", "title", "text"}` object per line, `queries.jsonl` with
//! `{"_id", "text"}`, and `qrels.tsv` with tab-separated
//! `query-id <TAB> doc-id <TAB> grade` rows plus an optional header.
//!
//! Ids are opaque strings and are never numerically coerced ("01" and "1"
//! are different documents). Stores are immutable after load and preserve
//! file order, so iteration and downstream indexing are deterministic.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

/// One document (or passage) of a retrieval corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusRecord {
    pub doc_id: String,
    pub title: Option<String>,
    pub text: String,
}

/// One query of a retrieval task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryRecord {
    pub query_id: String,
    pub text: String,
}

/// Immutable document collection with id lookup and file-order iteration.
#[derive(Debug, Clone)]
pub struct CorpusStore {
    records: Vec<CorpusRecord>,
    by_id: HashMap<String, usize>,
}

impl CorpusStore {
    /// Builds a store from records, preserving order. When an id repeats,
    /// lookup resolves to the first occurrence; duplicates stay iterable so
    /// that [`validate_dataset`] can report them. The file loader
    /// ([`load_corpus`]) rejects duplicates up front instead.
    pub fn from_records(records: Vec<CorpusRecord>) -> Self {
        let mut by_id = HashMap::with_capacity(records.len());
        for (i, rec) in records.iter().enumerate() {
            by_id.entry(rec.doc_id.clone()).or_insert(i);
        }
        CorpusStore { records, by_id }
    }

    pub fn get(&self, doc_id: &str) -> Option<&CorpusRecord> {
        self.by_id.get(doc_id).map(|&i| &self.records[i])
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.by_id.contains_key(doc_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &CorpusRecord> {
        self.records.iter()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Immutable query collection with id lookup and file-order iteration.
#[derive(Debug, Clone)]
pub struct QuerySet {
    records: Vec<QueryRecord>,
    by_id: HashMap<String, usize>,
}

impl QuerySet {
    /// See [`CorpusStore::from_records`] for duplicate-id semantics.
    pub fn from_records(records: Vec<QueryRecord>) -> Self {
        let mut by_id = HashMap::with_capacity(records.len());
        for (i, rec) in records.iter().enumerate() {
            by_id.entry(rec.query_id.clone()).or_insert(i);
        }
        QuerySet { records, by_id }
    }

    pub fn get(&self, query_id: &str) -> Option<&QueryRecord> {
        self.by_id.get(query_id).map(|&i| &self.records[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &QueryRecord> {
        self.records.iter()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Graded relevance judgments: query id -> doc id -> grade.
///
/// Grades are non-negative integers; binary datasets use {0, 1} and graded
/// datasets pass through unchanged.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QrelSet {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl QrelSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one judgment. A repeated (query, doc) pair is an error.
    pub fn insert(&mut self, query_id: impl Into<String>, doc_id: impl Into<String>, grade: u32) -> Result<()> {
        let query_id = query_id.into();
        let doc_id = doc_id.into();
        let per_query = self.judgments.entry(query_id.clone()).or_default();
        if per_query.contains_key(&doc_id) {
            return Err(Error::Validation(format!(
                "duplicate judgment for query {query_id}, doc {doc_id}"
            )));
        }
        per_query.insert(doc_id, grade);
        Ok(())
    }

    pub fn for_query(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(query_id)
    }

    /// Grade of a (query, doc) pair; unjudged pairs are grade 0.
    pub fn grade(&self, query_id: &str, doc_id: &str) -> u32 {
        self.judgments
            .get(query_id)
            .and_then(|m| m.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    /// Query ids in sorted order.
    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeMap<String, u32>)> {
        self.judgments.iter().map(|(q, m)| (q.as_str(), m))
    }

    /// Number of queries with at least one judgment row.
    pub fn len(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }
}

/// Consistency summary produced by [`validate_dataset`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    /// Distinct qrel doc ids that are absent from the corpus.
    pub missing_docs: usize,
    /// Queries in the query set that have no judgments at all.
    pub queries_without_judgments: usize,
    /// Ids that occur more than once in the corpus or query store.
    pub duplicate_ids: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.missing_docs == 0 && self.queries_without_judgments == 0 && self.duplicate_ids.is_empty()
    }
}

#[derive(Deserialize)]
struct RawCorpusLine {
    _id: String,
    #[serde(default)]
    title: Option<String>,
    text: String,
}

#[derive(Deserialize)]
struct RawQueryLine {
    _id: String,
    text: String,
}

fn read_lines(path: &Path) -> Result<impl Iterator<Item = std::io::Result<String>>> {
    Ok(BufReader::new(File::open(path)?).lines())
}

/// Loads a BEIR-style `corpus.jsonl`. Blank lines are skipped; any malformed
/// line or duplicate `_id` aborts the load with its line number.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<CorpusStore> {
    let path = path.as_ref();
    let mut records = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in read_lines(path)?.enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawCorpusLine = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        if raw._id.is_empty() {
            return Err(Error::parse(path, lineno, "empty _id"));
        }
        let title_nonempty = raw.title.as_deref().is_some_and(|t| !t.trim().is_empty());
        if raw.text.trim().is_empty() && !title_nonempty {
            return Err(Error::parse(
                path,
                lineno,
                format!("document {:?} has neither text nor title", raw._id),
            ));
        }
        if let Some(first) = seen.insert(raw._id.clone(), lineno) {
            return Err(Error::parse(
                path,
                lineno,
                format!("duplicate _id {:?} (first seen on line {first})", raw._id),
            ));
        }
        records.push(CorpusRecord {
            doc_id: raw._id,
            title: raw.title.filter(|t| !t.is_empty()),
            text: raw.text,
        });
    }
    Ok(CorpusStore::from_records(records))
}

/// Loads a BEIR-style `queries.jsonl`. Query text must be nonempty.
pub fn load_queries(path: impl AsRef<Path>) -> Result<QuerySet> {
    let path = path.as_ref();
    let mut records = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in read_lines(path)?.enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawQueryLine = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        if raw._id.is_empty() {
            return Err(Error::parse(path, lineno, "empty _id"));
        }
        if raw.text.trim().is_empty() {
            return Err(Error::parse(
                path,
                lineno,
                format!("query {:?} has blank text", raw._id),
            ));
        }
        if let Some(first) = seen.insert(raw._id.clone(), lineno) {
            return Err(Error::parse(
                path,
                lineno,
                format!("duplicate _id {:?} (first seen on line {first})", raw._id),
            ));
        }
        records.push(QueryRecord {
            query_id: raw._id,
            text: raw.text,
        });
    }
    Ok(QuerySet::from_records(records))
}

/// Loads a `qrels.tsv` with columns `query-id, doc-id, grade`.
///
/// The first line is treated as a header when its third column is not an
/// integer. Grades must be non-negative integers; a repeated (query, doc)
/// pair is an error.
pub fn load_qrels(path: impl AsRef<Path>) -> Result<QrelSet> {
    let path = path.as_ref();
    let mut qrels = QrelSet::new();
    for (idx, line) in read_lines(path)?.enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected 3 tab-separated columns, got {}", cols.len()),
            ));
        }
        let grade_field = cols[2].trim();
        let grade: i64 = match grade_field.parse() {
            Ok(g) => g,
            Err(_) if lineno == 1 => continue, // header row
            Err(_) => {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("non-integer grade {grade_field:?}"),
                ))
            }
        };
        if grade < 0 {
            return Err(Error::parse(path, lineno, format!("negative grade {grade}")));
        }
        qrels
            .insert(cols[0].trim(), cols[1].trim(), grade as u32)
            .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
    }
    Ok(qrels)
}

/// Cross-checks a loaded (corpus, queries, qrels) triple. Report-only: never
/// fails, a clean dataset yields an all-zero report.
pub fn validate_dataset(corpus: &CorpusStore, queries: &QuerySet, qrels: &QrelSet) -> ValidationReport {
    let mut missing: HashSet<&str> = HashSet::new();
    for (_, docs) in qrels.iter() {
        for doc_id in docs.keys() {
            if !corpus.contains(doc_id) {
                missing.insert(doc_id);
            }
        }
    }

    let queries_without_judgments = queries
        .iter()
        .filter(|q| qrels.for_query(&q.query_id).is_none_or(|m| m.is_empty()))
        .count();

    let mut duplicate_ids = Vec::new();
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for rec in corpus.iter() {
        *counts.entry(rec.doc_id.as_str()).or_insert(0) += 1;
    }
    let mut qcounts: HashMap<&str, usize> = HashMap::new();
    for rec in queries.iter() {
        *qcounts.entry(rec.query_id.as_str()).or_insert(0) += 1;
    }
    for (id, n) in counts.into_iter().chain(qcounts) {
        if n > 1 {
            duplicate_ids.push(id.to_string());
        }
    }
    duplicate_ids.sort();

    ValidationReport {
        missing_docs: missing.len(),
        queries_without_judgments,
        duplicate_ids,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(contents: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("input");
        let mut f = File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        (dir, path)
    }

    #[test]
    fn load_corpus_counts_and_preserves_order() {
        let (_dir, path) = write_file(
            "{\"_id\":\"d1\",\"title\":\"t\",\"text\":\"a\"}\n\
             {\"_id\":\"d2\",\"text\":\"b\"}\n\
             {\"_id\":\"d3\",\"text\":\"c\"}\n",
        );
        let store = load_corpus(&path).unwrap();
        assert_eq!(store.len(), 3);
        let ids: Vec<&str> = store.iter().map(|r| r.doc_id.as_str()).collect();
        assert_eq!(ids, ["d1", "d2", "d3"]);
        assert_eq!(store.get("d2").unwrap().text, "b");
    }

    #[test]
    fn load_corpus_empty_file_is_empty_store() {
        let (_dir, path) = write_file("");
        let store = load_corpus(&path).unwrap();
        assert!(store.is_empty());
    }

    #[test]
    fn load_corpus_duplicate_id_names_id_and_line() {
        let (_dir, path) = write_file(
            "{\"_id\":\"d1\",\"text\":\"a\"}\n\
             {\"_id\":\"d2\",\"text\":\"b\"}\n\
             {\"_id\":\"d3\",\"text\":\"c\"}\n\
             {\"_id\":\"d1\",\"text\":\"again\"}\n",
        );
        let err = load_corpus(&path).unwrap_err().to_string();
        assert!(err.contains("d1"), "{err}");
        assert!(err.contains(":4:"), "{err}");
    }

    #[test]
    fn load_corpus_rejects_doc_without_text_or_title() {
        let (_dir, path) = write_file("{\"_id\":\"d1\",\"text\":\"\"}\n");
        assert!(load_corpus(&path).is_err());
        let (_dir, path) = write_file("{\"_id\":\"d1\",\"title\":\"only title\",\"text\":\"\"}\n");
        assert!(load_corpus(&path).is_ok());
    }

    #[test]
    fn load_queries_two_lines() {
        let (_dir, path) = write_file(
            "{\"_id\":\"q1\",\"text\":\"pierwsze pytanie\"}\n\
             {\"_id\":\"q2\",\"text\":\"drugie pytanie\"}\n",
        );
        let queries = load_queries(&path).unwrap();
        assert_eq!(queries.len(), 2);
    }

    #[test]
    fn load_queries_blank_text_is_error() {
        let (_dir, path) = write_file("{\"_id\":\"q1\",\"text\":\"  \"}\n");
        assert!(load_queries(&path).is_err());
    }

    #[test]
    fn load_queries_preserves_polish_diacritics_exactly() {
        let text = "Dlaczego żółć jest gęsta? Średnio ćma, źdźbło!";
        let (_dir, path) = write_file(&format!("{{\"_id\":\"q1\",\"text\":\"{text}\"}}\n"));
        let queries = load_queries(&path).unwrap();
        assert_eq!(queries.get("q1").unwrap().text.as_bytes(), text.as_bytes());
    }

    #[test]
    fn load_qrels_basic_and_header() {
        let (_dir, path) = write_file("q1\td1\t1\n");
        let qrels = load_qrels(&path).unwrap();
        assert_eq!(qrels.grade("q1", "d1"), 1);

        let (_dir, path) = write_file("query-id\tcorpus-id\tscore\nq1\td1\t2\nq1\td2\t0\n");
        let qrels = load_qrels(&path).unwrap();
        assert_eq!(qrels.grade("q1", "d1"), 2);
        assert_eq!(qrels.grade("q1", "d2"), 0);
        assert_eq!(qrels.len(), 1);
    }

    #[test]
    fn load_qrels_rejects_negative_and_non_integer_grades() {
        let (_dir, path) = write_file("q1\td1\t-1\n");
        assert!(load_qrels(&path).unwrap_err().to_string().contains("negative"));
        let (_dir, path) = write_file("q1\td1\t1\nq2\td2\tbad\n");
        assert!(load_qrels(&path).unwrap_err().to_string().contains("non-integer"));
    }

    #[test]
    fn load_qrels_rejects_duplicate_pair() {
        let (_dir, path) = write_file("q1\td1\t1\nq1\td1\t0\n");
        assert!(load_qrels(&path).is_err());
    }

    fn toy_triple() -> (CorpusStore, QuerySet, QrelSet) {
        let corpus = CorpusStore::from_records(vec![
            CorpusRecord { doc_id: "d1".into(), title: None, text: "a".into() },
            CorpusRecord { doc_id: "d2".into(), title: None, text: "b".into() },
        ]);
        let queries = QuerySet::from_records(vec![
            QueryRecord { query_id: "q1".into(), text: "x".into() },
        ]);
        let mut qrels = QrelSet::new();
        qrels.insert("q1", "d1", 1).unwrap();
        (corpus, queries, qrels)
    }

    #[test]
    fn validate_consistent_triple_is_all_zero() {
        let (corpus, queries, qrels) = toy_triple();
        let report = validate_dataset(&corpus, &queries, &qrels);
        assert!(report.is_clean());
    }

    #[test]
    fn validate_reports_missing_doc_and_unjudged_query() {
        let (corpus, _, mut qrels) = toy_triple();
        qrels.insert("q1", "dX", 1).unwrap();
        let queries = QuerySet::from_records(vec![
            QueryRecord { query_id: "q1".into(), text: "x".into() },
            QueryRecord { query_id: "q9".into(), text: "y".into() },
        ]);
        let report = validate_dataset(&corpus, &queries, &qrels);
        assert_eq!(report.missing_docs, 1);
        assert_eq!(report.queries_without_judgments, 1);
    }

    #[test]
    fn validate_reports_duplicate_ids_in_merged_stores() {
        let corpus = CorpusStore::from_records(vec![
            CorpusRecord { doc_id: "d1".into(), title: None, text: "a".into() },
            CorpusRecord { doc_id: "d1".into(), title: None, text: "merged copy".into() },
        ]);
        let queries = QuerySet::from_records(vec![]);
        let report = validate_dataset(&corpus, &queries, &QrelSet::new());
        assert_eq!(report.duplicate_ids, vec!["d1".to_string()]);
    }

    #[test]
    fn judged_lookup_succeeds_iff_no_missing_docs() {
        let (corpus, queries, qrels) = toy_triple();
        let report = validate_dataset(&corpus, &queries, &qrels);
        let all_found = qrels
            .iter()
            .flat_map(|(_, docs)| docs.keys())
            .all(|d| corpus.get(d).is_some());
        assert_eq!(all_found, report.missing_docs == 0);

        let mut qrels2 = qrels.clone();
        qrels2.insert("q1", "ghost", 1).unwrap();
        let report2 = validate_dataset(&corpus, &queries, &qrels2);
        let all_found2 = qrels2
            .iter()
            .flat_map(|(_, docs)| docs.keys())
            .all(|d| corpus.get(d).is_some());
        assert_eq!(all_found2, report2.missing_docs == 0);
        assert!(!all_found2);
    }
}
