//! Tokenization for the BM25 index.
//!
//! The analyzer splits on non-alphanumeric characters, optionally
//! lowercases, drops stopwords, and maps tokens through a lemma dictionary.
//! The external morphological analyzer used by Lucene's Polish pipeline is
//! abstracted to that dictionary: pass a surface -> lemma TSV to approximate
//! it, or leave it empty for plain whitespace-and-punctuation tokenization.

use std::collections::{HashMap, HashSet};

/// Deterministic tokenizer configuration.
#[derive(Debug, Clone, Default)]
pub struct AnalyzerConfig {
    pub lowercase: bool,
    pub stopwords: HashSet<String>,
    pub lemmas: Option<HashMap<String, String>>,
}

impl AnalyzerConfig {
    /// Lowercasing analyzer with no stopwords and no lemma dictionary.
    pub fn simple() -> Self {
        AnalyzerConfig {
            lowercase: true,
            ..Default::default()
        }
    }

    /// Produces the token stream for a piece of text. The output is a pure
    /// function of `(self, text)`.
    pub fn analyze(&self, text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(|t| {
                if self.lowercase {
                    t.to_lowercase()
                } else {
                    t.to_string()
                }
            })
            .filter(|t| !self.stopwords.contains(t))
            .map(|t| match &self.lemmas {
                Some(lemmas) => lemmas.get(&t).cloned().unwrap_or(t),
                None => t,
            })
            .collect()
    }
}
