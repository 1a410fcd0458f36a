//! Binary persistence for sparse indexes.
//!
//! Layout (all integers little-endian, strings are u32 length + UTF-8):
//!
//! ```text
//! magic   "SPIX1" (5 bytes)
//! kind    u8: 0 = BM25, 1 = impact
//!
//! BM25 body:
//!   k1 f64, b f64
//!   lowercase u8
//!   n_stopwords u32, then n strings (sorted)
//!   has_lemmas u8; if 1: n u32, then n (surface, lemma) string pairs (sorted)
//!   n_docs u32, then per doc: doc_id string, doc_length u32
//!   avg_doc_length f64
//!   n_terms u32, then per term (sorted by term string):
//!     term string, n_postings u32, then (doc u32, tf u32) pairs
//!
//! impact body:
//!   n_docs u32, then doc_id strings
//!   n_terms u32, then per term (ascending term id):
//!     term u32, n_postings u32, then (doc u32, weight f32) pairs
//! ```
//!
//! Dictionaries and postings are written in sorted order, so saving the
//! same index twice produces byte-identical files, and save/load round-trips
//! are exact (floats are stored bit-for-bit).

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::analyzer::AnalyzerConfig;
use super::bm25::{Bm25Index, Bm25Params, Posting};
use super::impact::ImpactIndex;

const MAGIC: &[u8; 5] = b"SPIX1";
const KIND_BM25: u8 = 0;
const KIND_IMPACT: u8 = 1;

/// A sparse index loaded from disk.
pub enum SparseIndexFile {
    Bm25(Bm25Index),
    Impact(ImpactIndex),
}

struct Writer<W: Write> {
    inner: W,
}

impl<W: Write> Writer<W> {
    fn u8(&mut self, v: u8) -> Result<()> {
        Ok(self.inner.write_all(&[v])?)
    }
    fn u32(&mut self, v: u32) -> Result<()> {
        Ok(self.inner.write_all(&v.to_le_bytes())?)
    }
    fn f32(&mut self, v: f32) -> Result<()> {
        Ok(self.inner.write_all(&v.to_le_bytes())?)
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        Ok(self.inner.write_all(&v.to_le_bytes())?)
    }
    fn string(&mut self, s: &str) -> Result<()> {
        self.u32(s.len() as u32)?;
        Ok(self.inner.write_all(s.as_bytes())?)
    }
}

struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn u8(&mut self) -> Result<u8> {
        let mut buf = [0u8; 1];
        self.inner.read_exact(&mut buf)?;
        Ok(buf[0])
    }
    fn u32(&mut self) -> Result<u32> {
        let mut buf = [0u8; 4];
        self.inner.read_exact(&mut buf)?;
        Ok(u32::from_le_bytes(buf))
    }
    fn f32(&mut self) -> Result<f32> {
        let mut buf = [0u8; 4];
        self.inner.read_exact(&mut buf)?;
        Ok(f32::from_le_bytes(buf))
    }
    fn f64(&mut self) -> Result<f64> {
        let mut buf = [0u8; 8];
        self.inner.read_exact(&mut buf)?;
        Ok(f64::from_le_bytes(buf))
    }
    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let mut buf = vec![0u8; len];
        self.inner.read_exact(&mut buf)?;
        String::from_utf8(buf).map_err(|_| Error::Format("invalid UTF-8 string".into()))
    }
}

impl Bm25Index {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = Writer { inner: BufWriter::new(File::create(path.as_ref())?) };
        w.inner.write_all(MAGIC)?;
        w.u8(KIND_BM25)?;
        w.f64(self.params.k1)?;
        w.f64(self.params.b)?;

        w.u8(self.analyzer.lowercase as u8)?;
        let mut stopwords: Vec<&String> = self.analyzer.stopwords.iter().collect();
        stopwords.sort();
        w.u32(stopwords.len() as u32)?;
        for word in stopwords {
            w.string(word)?;
        }
        match &self.analyzer.lemmas {
            Some(lemmas) => {
                w.u8(1)?;
                let mut pairs: Vec<(&String, &String)> = lemmas.iter().collect();
                pairs.sort();
                w.u32(pairs.len() as u32)?;
                for (surface, lemma) in pairs {
                    w.string(surface)?;
                    w.string(lemma)?;
                }
            }
            None => w.u8(0)?,
        }

        w.u32(self.doc_ids.len() as u32)?;
        for (doc_id, &dl) in self.doc_ids.iter().zip(&self.doc_lengths) {
            w.string(doc_id)?;
            w.u32(dl)?;
        }
        w.f64(self.avg_doc_length)?;

        let mut terms: Vec<&String> = self.postings.keys().collect();
        terms.sort();
        w.u32(terms.len() as u32)?;
        for term in terms {
            w.string(term)?;
            let plist = &self.postings[term];
            w.u32(plist.len() as u32)?;
            for posting in plist {
                w.u32(posting.doc)?;
                w.u32(posting.tf)?;
            }
        }
        w.inner.flush()?;
        Ok(())
    }
}

impl ImpactIndex {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = Writer { inner: BufWriter::new(File::create(path.as_ref())?) };
        w.inner.write_all(MAGIC)?;
        w.u8(KIND_IMPACT)?;
        w.u32(self.doc_ids.len() as u32)?;
        for doc_id in &self.doc_ids {
            w.string(doc_id)?;
        }
        let mut terms: Vec<&u32> = self.postings.keys().collect();
        terms.sort();
        w.u32(terms.len() as u32)?;
        for &term in terms {
            w.u32(term)?;
            let plist = &self.postings[&term];
            w.u32(plist.len() as u32)?;
            for &(doc, weight) in plist {
                w.u32(doc)?;
                w.f32(weight)?;
            }
        }
        w.inner.flush()?;
        Ok(())
    }
}

/// Loads an index saved by [`Bm25Index::save`] or [`ImpactIndex::save`].
pub fn load_sparse_index(path: impl AsRef<Path>) -> Result<SparseIndexFile> {
    let mut r = Reader { inner: BufReader::new(File::open(path.as_ref())?) };
    let mut magic = [0u8; 5];
    r.inner.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {magic:?}, expected {MAGIC:?}"
        )));
    }
    match r.u8()? {
        KIND_BM25 => {
            let params = Bm25Params { k1: r.f64()?, b: r.f64()? };
            let lowercase = r.u8()? != 0;
            let n_stop = r.u32()? as usize;
            let mut stopwords = std::collections::HashSet::with_capacity(n_stop);
            for _ in 0..n_stop {
                stopwords.insert(r.string()?);
            }
            let lemmas = if r.u8()? != 0 {
                let n = r.u32()? as usize;
                let mut map = HashMap::with_capacity(n);
                for _ in 0..n {
                    let surface = r.string()?;
                    let lemma = r.string()?;
                    map.insert(surface, lemma);
                }
                Some(map)
            } else {
                None
            };
            let analyzer = AnalyzerConfig { lowercase, stopwords, lemmas };

            let n_docs = r.u32()? as usize;
            let mut doc_ids = Vec::with_capacity(n_docs);
            let mut doc_lengths = Vec::with_capacity(n_docs);
            let mut by_id = HashMap::with_capacity(n_docs);
            for i in 0..n_docs {
                let doc_id = r.string()?;
                by_id.insert(doc_id.clone(), i as u32);
                doc_ids.push(doc_id);
                doc_lengths.push(r.u32()?);
            }
            let avg_doc_length = r.f64()?;

            let n_terms = r.u32()? as usize;
            let mut postings = HashMap::with_capacity(n_terms);
            for _ in 0..n_terms {
                let term = r.string()?;
                let n = r.u32()? as usize;
                let mut plist = Vec::with_capacity(n);
                for _ in 0..n {
                    plist.push(Posting { doc: r.u32()?, tf: r.u32()? });
                }
                postings.insert(term, plist);
            }
            Ok(SparseIndexFile::Bm25(Bm25Index {
                params,
                analyzer,
                doc_ids,
                by_id,
                doc_lengths,
                avg_doc_length,
                postings,
            }))
        }
        KIND_IMPACT => {
            let n_docs = r.u32()? as usize;
            let mut doc_ids = Vec::with_capacity(n_docs);
            let mut by_id = HashMap::with_capacity(n_docs);
            for i in 0..n_docs {
                let doc_id = r.string()?;
                by_id.insert(doc_id.clone(), i as u32);
                doc_ids.push(doc_id);
            }
            let n_terms = r.u32()? as usize;
            let mut postings = HashMap::with_capacity(n_terms);
            for _ in 0..n_terms {
                let term = r.u32()?;
                let n = r.u32()? as usize;
                let mut plist = Vec::with_capacity(n);
                for _ in 0..n {
                    plist.push((r.u32()?, r.f32()?));
                }
                postings.insert(term, plist);
            }
            Ok(SparseIndexFile::Impact(ImpactIndex { doc_ids, by_id, postings }))
        }
        kind => Err(Error::Format(format!("unknown index kind {kind}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CorpusRecord, CorpusStore};
    use crate::sparse::SparseVector;

    fn sample_bm25() -> Bm25Index {
        let corpus = CorpusStore::from_records(vec![
            CorpusRecord { doc_id: "d1".into(), title: Some("Tytuł".into()), text: "kot pies kot".into() },
            CorpusRecord { doc_id: "d2".into(), title: None, text: "ryba".into() },
        ]);
        let mut analyzer = AnalyzerConfig::simple();
        analyzer.stopwords.insert("i".into());
        analyzer.lemmas = Some([("psy".to_string(), "pies".to_string())].into_iter().collect());
        Bm25Index::build(&corpus, analyzer, Bm25Params::default()).unwrap()
    }

    #[test]
    fn bm25_round_trip_preserves_scores_and_is_byte_stable() {
        let index = sample_bm25();
        let dir = tempfile::tempdir().unwrap();
        let path_a = dir.path().join("a.spix");
        let path_b = dir.path().join("b.spix");
        index.save(&path_a).unwrap();
        index.save(&path_b).unwrap();
        assert_eq!(std::fs::read(&path_a).unwrap(), std::fs::read(&path_b).unwrap());

        let SparseIndexFile::Bm25(loaded) = load_sparse_index(&path_a).unwrap() else {
            panic!("wrong kind");
        };
        let q = ["kot".to_string()];
        assert_eq!(index.score(&q, "d1").unwrap(), loaded.score(&q, "d1").unwrap());
        assert_eq!(index.avg_doc_length(), loaded.avg_doc_length());

        let resaved = dir.path().join("c.spix");
        loaded.save(&resaved).unwrap();
        assert_eq!(std::fs::read(&path_a).unwrap(), std::fs::read(&resaved).unwrap());
    }

    #[test]
    fn impact_round_trip_is_exact() {
        let docs = vec![
            ("d1".to_string(), SparseVector::new(vec![(1, 0.125), (9, 3.5)]).unwrap()),
            ("d2".to_string(), SparseVector::new(vec![(1, 1.0)]).unwrap()),
        ];
        let index = ImpactIndex::build(&docs).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("impact.spix");
        index.save(&path).unwrap();
        let SparseIndexFile::Impact(loaded) = load_sparse_index(&path).unwrap() else {
            panic!("wrong kind");
        };
        for (id, vector) in &docs {
            assert_eq!(&loaded.doc_vector(id).unwrap(), vector);
        }
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.spix");
        std::fs::write(&path, b"NOPE!rest").unwrap();
        assert!(matches!(load_sparse_index(&path), Err(Error::Format(_))));
    }
}
