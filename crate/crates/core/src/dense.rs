//! Exact dense retrieval over externally produced embeddings.
//!
//! Embeddings are stored as 32-bit floats and scored with cosine similarity
//! computed as the dot product of unit-normalized vectors, accumulated in
//! 64-bit. Top-k search is exhaustive (no approximation), which keeps
//! results exact and lets oracle tests compare against a direct sort.
//!
//! On-disk layout: a vector file with magic `EMB1`, `u32` dimension, `u32`
//! row count, then `count * dim` little-endian `f32` values; ids live in a
//! parallel JSONL file of `{"_id": ...}` lines, one per row.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::run::{rank_top_k, RetrievalRun, ScoredDoc};

const MAGIC: &[u8; 4] = b"EMB1";

/// Id-aligned matrix of fixed-dimension embeddings.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    dim: usize,
    ids: Vec<String>,
    by_id: HashMap<String, usize>,
    data: Vec<f32>,
    normalized: bool,
}

impl EmbeddingStore {
    /// Builds a store from parallel ids and rows. All rows must share one
    /// dimension >= 1, hold only finite values, and ids must be unique.
    pub fn from_rows(ids: Vec<String>, rows: Vec<Vec<f32>>) -> Result<Self> {
        if ids.len() != rows.len() {
            return Err(Error::Validation(format!(
                "id count {} does not match row count {}",
                ids.len(),
                rows.len()
            )));
        }
        let dim = rows.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(Error::Validation("embedding dimension must be >= 1".into()));
        }
        let mut data = Vec::with_capacity(ids.len() * dim);
        for (row_idx, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, actual: row.len() });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("non-finite value in row {row_idx}")));
            }
            data.extend_from_slice(row);
        }
        let mut by_id = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if by_id.insert(id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate id {id:?}")));
            }
        }
        Ok(EmbeddingStore { dim, ids, by_id, data, normalized: false })
    }

    /// Loads a store from an `EMB1` vector file and its parallel id file.
    /// The result is unnormalized; call [`EmbeddingStore::normalize`] before
    /// searching.
    pub fn load(vectors_path: impl AsRef<Path>, ids_path: impl AsRef<Path>) -> Result<Self> {
        let vectors_path = vectors_path.as_ref();
        let mut reader = BufReader::new(File::open(vectors_path)?);
        let mut magic = [0u8; 4];
        reader.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}, expected {MAGIC:?}")));
        }
        let mut u32buf = [0u8; 4];
        reader.read_exact(&mut u32buf)?;
        let dim = u32::from_le_bytes(u32buf) as usize;
        reader.read_exact(&mut u32buf)?;
        let count = u32::from_le_bytes(u32buf) as usize;
        if dim == 0 {
            return Err(Error::Format("embedding dimension must be >= 1".into()));
        }

        let mut data = vec![0f32; count * dim];
        let mut f32buf = [0u8; 4];
        for value in data.iter_mut() {
            reader.read_exact(&mut f32buf)?;
            *value = f32::from_le_bytes(f32buf);
        }
        for (i, chunk) in data.chunks(dim).enumerate() {
            if chunk.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("non-finite value in row {i}")));
            }
        }

        let ids = load_ids(ids_path.as_ref())?;
        if ids.len() != count {
            return Err(Error::Validation(format!(
                "id count {} does not match vector count {count}",
                ids.len()
            )));
        }
        let mut by_id = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if by_id.insert(id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate id {id:?}")));
            }
        }
        Ok(EmbeddingStore { dim, ids, by_id, data, normalized: false })
    }

    /// Writes the vector file and the parallel id file.
    pub fn save(&self, vectors_path: impl AsRef<Path>, ids_path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(vectors_path.as_ref())?);
        out.write_all(MAGIC)?;
        out.write_all(&(self.dim as u32).to_le_bytes())?;
        out.write_all(&(self.ids.len() as u32).to_le_bytes())?;
        for value in &self.data {
            out.write_all(&value.to_le_bytes())?;
        }
        out.flush()?;

        let mut ids_out = BufWriter::new(File::create(ids_path.as_ref())?);
        for id in &self.ids {
            writeln!(ids_out, "{}", serde_json::json!({ "_id": id }))?;
        }
        ids_out.flush()?;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, index: usize) -> &[f32] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    pub fn vector(&self, id: &str) -> Option<&[f32]> {
        self.by_id.get(id).map(|&i| self.row(i))
    }

    /// Rescales every row to unit L2 norm. Rows already at unit norm stay
    /// put up to one rounding step; zero-norm rows are an error.
    pub fn normalize(mut self) -> Result<Self> {
        for i in 0..self.ids.len() {
            let start = i * self.dim;
            let row = &mut self.data[start..start + self.dim];
            let norm = row.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::Validation(format!("zero-norm row {i}")));
            }
            for value in row.iter_mut() {
                *value = (*value as f64 / norm) as f32;
            }
        }
        self.normalized = true;
        Ok(self)
    }

    /// Exact top-k by cosine similarity. The store must be normalized
    /// beforehand; the query is normalized internally.
    pub fn search(&self, query: &[f32], k: usize) -> Result<Vec<ScoredDoc>> {
        if !self.normalized {
            return Err(Error::Validation("store must be normalized before search".into()));
        }
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: query.len() });
        }
        let norm = query.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Validation("query vector must be nonzero and finite".into()));
        }
        let qn: Vec<f64> = query.iter().map(|&v| v as f64 / norm).collect();

        let entries: Vec<ScoredDoc> = (0..self.len())
            .map(|i| {
                let score: f64 = self.row(i).iter().zip(&qn).map(|(&d, &q)| d as f64 * q).sum();
                ScoredDoc::new(self.ids[i].clone(), score)
            })
            .collect();
        Ok(rank_top_k(entries, k))
    }

    /// Searches a batch of `(query_id, vector)` pairs in parallel. Output
    /// order is deterministic regardless of thread count.
    pub fn search_batch(&self, queries: &[(String, Vec<f32>)], k: usize) -> Result<RetrievalRun> {
        let results: Result<Vec<(String, Vec<ScoredDoc>)>> = queries
            .par_iter()
            .map(|(query_id, vector)| Ok((query_id.clone(), self.search(vector, k)?)))
            .collect();
        let mut run = RetrievalRun::new();
        for (query_id, ranked) in results? {
            run.insert(query_id, ranked)?;
        }
        Ok(run)
    }
}

#[derive(Deserialize)]
struct RawIdLine {
    _id: String,
}

fn load_ids(path: &Path) -> Result<Vec<String>> {
    let reader = BufReader::new(File::open(path)?);
    let mut ids = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawIdLine = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, idx + 1, e.to_string()))?;
        ids.push(raw._id);
    }
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn store_of(rows: &[&[f32]]) -> EmbeddingStore {
        let ids = (0..rows.len()).map(|i| format!("d{i}")).collect();
        EmbeddingStore::from_rows(ids, rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn from_rows_validates_counts_and_finiteness() {
        assert!(EmbeddingStore::from_rows(vec!["a".into()], vec![]).is_err());
        let err = EmbeddingStore::from_rows(
            vec!["a".into(), "b".into(), "c".into()],
            vec![vec![1.0], vec![2.0], vec![f32::NAN]],
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("row 2"), "{err}");
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let store = store_of(&[&[0.1, -0.2, 0.3, 4.0], &[1.5, 0.0, -2.5, 0.25], &[9.9, 8.8, 7.7, 6.6]]);
        let dir = tempfile::tempdir().unwrap();
        let vecs = dir.path().join("docs.emb");
        let ids = dir.path().join("docs.ids.jsonl");
        store.save(&vecs, &ids).unwrap();
        let loaded = EmbeddingStore::load(&vecs, &ids).unwrap();
        assert_eq!(loaded.dim(), 4);
        assert_eq!(loaded.len(), 3);
        assert_eq!(loaded.ids(), store.ids());
        assert_eq!(loaded.data, store.data);

        let vecs2 = dir.path().join("again.emb");
        let ids2 = dir.path().join("again.ids.jsonl");
        loaded.save(&vecs2, &ids2).unwrap();
        assert_eq!(std::fs::read(&vecs).unwrap(), std::fs::read(&vecs2).unwrap());
        assert_eq!(std::fs::read(&ids).unwrap(), std::fs::read(&ids2).unwrap());
    }

    #[test]
    fn load_rejects_id_count_mismatch() {
        let store = store_of(&[&[1.0, 2.0]]);
        let dir = tempfile::tempdir().unwrap();
        let vecs = dir.path().join("v.emb");
        let ids = dir.path().join("i.jsonl");
        store.save(&vecs, &ids).unwrap();
        std::fs::write(&ids, "{\"_id\":\"a\"}\n{\"_id\":\"b\"}\n").unwrap();
        assert!(EmbeddingStore::load(&vecs, &ids).is_err());
    }

    #[test]
    fn normalize_scales_to_unit_norm() {
        let store = store_of(&[&[3.0, 4.0]]).normalize().unwrap();
        assert_eq!(store.row(0), &[0.6, 0.8]);
        assert!(store.is_normalized());
    }

    #[test]
    fn normalize_is_idempotent_within_tolerance() {
        let store = store_of(&[&[0.6, 0.8]]).normalize().unwrap();
        assert!((store.row(0)[0] - 0.6).abs() < 1e-7);
        assert!((store.row(0)[1] - 0.8).abs() < 1e-7);
    }

    #[test]
    fn normalize_rejects_zero_vector() {
        assert!(store_of(&[&[0.0, 0.0]]).normalize().is_err());
    }

    #[test]
    fn search_ranks_identical_row_first_with_unit_score() {
        let store = store_of(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.7, 0.7, 0.0]])
            .normalize()
            .unwrap();
        let results = store.search(&[0.0, 1.0, 0.0], 3).unwrap();
        assert_eq!(results[0].doc_id, "d1");
        assert!((results[0].score - 1.0).abs() < 1e-6);
    }

    #[test]
    fn orthogonal_query_scores_zero_everywhere() {
        let store = store_of(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]).normalize().unwrap();
        let results = store.search(&[0.0, 0.0, 2.0], 2).unwrap();
        assert!(results.iter().all(|r| r.score.abs() < 1e-12));
    }

    #[test]
    fn search_rejects_dimension_mismatch() {
        let store = store_of(&[&[1.0, 0.0]]).normalize().unwrap();
        assert!(matches!(
            store.search(&[1.0, 0.0, 0.0], 1),
            Err(Error::DimensionMismatch { expected: 2, actual: 3 })
        ));
    }

    fn random_store(rng: &mut StdRng, n: usize, dim: usize) -> EmbeddingStore {
        let rows: Vec<Vec<f32>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let ids = (0..n).map(|i| format!("d{i:04}")).collect();
        EmbeddingStore::from_rows(ids, rows).unwrap().normalize().unwrap()
    }

    #[test]
    fn search_agrees_with_brute_force_oracle_on_1000_vectors() {
        let mut rng = StdRng::seed_from_u64(7);
        let store = random_store(&mut rng, 1000, 16);
        for _ in 0..20 {
            let query: Vec<f32> = (0..16).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
            let got = store.search(&query, 10).unwrap();

            // oracle: plain cosine over every row, full sort
            let qn: f64 = query.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
            let mut scored: Vec<(String, f64)> = (0..store.len())
                .map(|i| {
                    let dot: f64 = store.row(i).iter().zip(&query).map(|(&d, &q)| d as f64 * q as f64).sum();
                    (store.ids()[i].clone(), dot / qn)
                })
                .collect();
            scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            for (result, (oracle_id, oracle_score)) in got.iter().zip(&scored) {
                assert_eq!(&result.doc_id, oracle_id);
                assert!((result.score - oracle_score).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn cosine_is_symmetric_and_bounded() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..50 {
            let u: Vec<f32> = (0..8).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
            let v: Vec<f32> = (0..8).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
            let store_u = EmbeddingStore::from_rows(vec!["u".into()], vec![u.clone()])
                .unwrap()
                .normalize()
                .unwrap();
            let store_v = EmbeddingStore::from_rows(vec!["v".into()], vec![v.clone()])
                .unwrap()
                .normalize()
                .unwrap();
            let uv = store_u.search(&v, 1).unwrap()[0].score;
            let vu = store_v.search(&u, 1).unwrap()[0].score;
            assert!((uv - vu).abs() < 1e-6);
            assert!((-1.0 - 1e-6..=1.0 + 1e-6).contains(&uv));
        }
    }

    /// Builds a random rotation (orthonormal matrix) via Gram-Schmidt.
    fn random_rotation(rng: &mut StdRng, dim: usize) -> Vec<Vec<f64>> {
        let mut basis: Vec<Vec<f64>> = Vec::new();
        while basis.len() < dim {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for b in &basis {
                let proj: f64 = v.iter().zip(b).map(|(a, b)| a * b).sum();
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= proj * bi;
                }
            }
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                basis.push(v.into_iter().map(|x| x / norm).collect());
            }
        }
        basis
    }

    #[test]
    fn ranking_is_invariant_under_rotation() {
        let mut rng = StdRng::seed_from_u64(23);
        let dim = 8;
        let rows: Vec<Vec<f32>> = (0..60)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect())
            .collect();
        let query: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let rotation = random_rotation(&mut rng, dim);
        let rotate = |v: &[f32]| -> Vec<f32> {
            rotation
                .iter()
                .map(|row| row.iter().zip(v).map(|(r, &x)| r * x as f64).sum::<f64>() as f32)
                .collect()
        };

        let ids: Vec<String> = (0..rows.len()).map(|i| format!("d{i:03}")).collect();
        let plain = EmbeddingStore::from_rows(ids.clone(), rows.clone())
            .unwrap()
            .normalize()
            .unwrap();
        let rotated = EmbeddingStore::from_rows(ids, rows.iter().map(|r| rotate(r)).collect())
            .unwrap()
            .normalize()
            .unwrap();

        let a = plain.search(&query, rows.len()).unwrap();
        let b = rotated.search(&rotate(&query), rows.len()).unwrap();
        let ids_a: Vec<&str> = a.iter().map(|d| d.doc_id.as_str()).collect();
        let ids_b: Vec<&str> = b.iter().map(|d| d.doc_id.as_str()).collect();
        assert_eq!(ids_a, ids_b);
    }

    #[test]
    fn batch_search_matches_sequential_order() {
        let mut rng = StdRng::seed_from_u64(31);
        let store = random_store(&mut rng, 50, 8);
        let queries: Vec<(String, Vec<f32>)> = (0..10)
            .map(|i| {
                (
                    format!("q{i}"),
                    (0..8).map(|_| rng.gen_range(-1.0f32..1.0)).collect(),
                )
            })
            .collect();
        let run = store.search_batch(&queries, 5).unwrap();
        for (query_id, vector) in &queries {
            let single = store.search(vector, 5).unwrap();
            assert_eq!(run.ranking(query_id).unwrap(), single.as_slice());
        }
    }
}
