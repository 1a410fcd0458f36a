//! Cleaning pipeline for question-answer pairs scraped from the web.
//!
//! The pipeline runs, in order: text normalization (e-mail/URL removal,
//! special-character removal, whitespace collapsing), dictionary-based
//! anonymization (sentences mentioning names or contact words are dropped),
//! boilerplate stripping at both ends ("dzień dobry", "pozdrawiam", ...),
//! leading-numbering removal on questions, image-question filtering, and
//! minimum-length filtering. All steps are pure functions of the input and a
//! [`PrepConfig`], so cleaning is deterministic and trivially parallel.
//!
//! Lemmatization is dictionary-based: a surface form -> lemma map loaded
//! from a TSV file. Unknown words pass through unchanged.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

static EMAIL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}").unwrap());
static URL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)(?:https?://|www\.)\S+").unwrap());
static NUMBERING_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[0-9]+[.)]\s+").unwrap());

/// Punctuation that survives normalization; everything else outside
/// letters, digits, and whitespace counts as a special character.
const ALLOWED_PUNCT: &str = ".,:;?!()-\"'%";

/// Dictionaries and thresholds driving the cleaning pipeline.
///
/// All dictionary entries are expected in lowercase lemma form.
#[derive(Debug, Clone)]
pub struct PrepConfig {
    pub first_names: HashSet<String>,
    pub surnames: HashSet<String>,
    pub contact_words: HashSet<String>,
    pub boilerplate_phrases: Vec<String>,
    pub image_words: HashSet<String>,
    /// Surface form -> lemma. Unknown surfaces lemmatize to themselves.
    pub lemmas: HashMap<String, String>,
    pub min_question_chars: usize,
    pub min_answer_chars: usize,
    /// Sources that require the longer answer minimum.
    pub low_quality_sources: HashSet<String>,
    pub min_answer_chars_low_quality: usize,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            first_names: HashSet::new(),
            surnames: HashSet::new(),
            contact_words: HashSet::new(),
            boilerplate_phrases: Vec::new(),
            image_words: HashSet::new(),
            lemmas: HashMap::new(),
            min_question_chars: 10,
            min_answer_chars: 50,
            low_quality_sources: HashSet::new(),
            min_answer_chars_low_quality: 200,
        }
    }
}

/// On-disk shape of `prep.json`. Dictionary fields are paths to
/// one-entry-per-line UTF-8 files, resolved relative to the config file.
#[derive(Debug, Deserialize)]
struct PrepConfigFile {
    #[serde(default)]
    first_names: Option<String>,
    #[serde(default)]
    surnames: Option<String>,
    #[serde(default)]
    contact_words: Option<String>,
    #[serde(default)]
    boilerplate_phrases: Option<String>,
    #[serde(default)]
    image_words: Option<String>,
    #[serde(default)]
    lemmas: Option<String>,
    #[serde(default)]
    min_question_chars: Option<usize>,
    #[serde(default)]
    min_answer_chars: Option<usize>,
    #[serde(default)]
    low_quality_sources: Option<Vec<String>>,
    #[serde(default)]
    min_answer_chars_low_quality: Option<usize>,
}

fn load_word_list(path: &Path) -> Result<Vec<String>> {
    let mut words = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        let word = line.trim();
        if !word.is_empty() {
            words.push(word.to_lowercase());
        }
    }
    Ok(words)
}

fn load_lemma_dictionary(path: &Path) -> Result<HashMap<String, String>> {
    let mut lemmas = HashMap::new();
    for (idx, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.splitn(2, '\t');
        let surface = cols.next().unwrap_or("").trim().to_lowercase();
        let lemma = cols
            .next()
            .ok_or_else(|| Error::parse(path, idx + 1, "expected surface<TAB>lemma"))?
            .trim()
            .to_lowercase();
        lemmas.insert(surface, lemma);
    }
    Ok(lemmas)
}

impl PrepConfig {
    /// Loads `prep.json`, resolving dictionary paths relative to it.
    pub fn from_file(path: impl AsRef<Path>) -> Result<PrepConfig> {
        let path = path.as_ref();
        let raw: PrepConfigFile = serde_json::from_reader(BufReader::new(File::open(path)?))
            .map_err(|e| Error::parse(path, 1, e.to_string()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let resolve = |p: &str| base.join(p);

        let mut config = PrepConfig::default();
        if let Some(p) = raw.first_names {
            config.first_names = load_word_list(&resolve(&p))?.into_iter().collect();
        }
        if let Some(p) = raw.surnames {
            config.surnames = load_word_list(&resolve(&p))?.into_iter().collect();
        }
        if let Some(p) = raw.contact_words {
            config.contact_words = load_word_list(&resolve(&p))?.into_iter().collect();
        }
        if let Some(p) = raw.boilerplate_phrases {
            config.boilerplate_phrases = load_word_list(&resolve(&p))?;
        }
        if let Some(p) = raw.image_words {
            config.image_words = load_word_list(&resolve(&p))?.into_iter().collect();
        }
        if let Some(p) = raw.lemmas {
            config.lemmas = load_lemma_dictionary(&resolve(&p))?;
        }
        if let Some(v) = raw.min_question_chars {
            config.min_question_chars = v;
        }
        if let Some(v) = raw.min_answer_chars {
            config.min_answer_chars = v;
        }
        if let Some(v) = raw.low_quality_sources {
            config.low_quality_sources = v.into_iter().collect();
        }
        if let Some(v) = raw.min_answer_chars_low_quality {
            config.min_answer_chars_low_quality = v;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_question_chars == 0 || self.min_answer_chars == 0 {
            return Err(Error::Validation("minimum lengths must be positive".into()));
        }
        Ok(())
    }

    /// Answer-length minimum for a source, honoring the low-quality list.
    pub fn min_answer_for(&self, source: &str) -> usize {
        if self.low_quality_sources.contains(source) {
            self.min_answer_chars_low_quality
        } else {
            self.min_answer_chars
        }
    }

    fn lemma<'a>(&'a self, token: &'a str) -> &'a str {
        self.lemmas.get(token).map(String::as_str).unwrap_or(token)
    }
}

/// A raw or cleaned question-answer pair with its originating source name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
    #[serde(default)]
    pub source: String,
}

/// Removes e-mail addresses and www/URL tokens, removes special characters,
/// and collapses whitespace runs into single spaces.
///
/// Special characters become spaces rather than vanishing in place, so
/// removal never fuses two neighboring tokens into a new one.
pub fn normalize_text(raw: &str) -> String {
    let no_email = EMAIL_RE.replace_all(raw, " ");
    let no_url = URL_RE.replace_all(&no_email, " ");
    let filtered: String = no_url
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c.is_whitespace() || ALLOWED_PUNCT.contains(c) {
                c
            } else {
                ' '
            }
        })
        .collect();
    filtered.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Splits on `.`, `!`, or `?` followed by whitespace and an uppercase letter
/// or digit. The terminator stays with its sentence.
fn split_sentences(text: &str) -> Vec<&str> {
    let mut sentences = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if matches!(c, '.' | '!' | '?') {
            // find the next non-whitespace character after this terminator
            let mut j = i + 1;
            let mut saw_space = false;
            while j < chars.len() && chars[j].1.is_whitespace() {
                saw_space = true;
                j += 1;
            }
            if saw_space && j < chars.len() && (chars[j].1.is_uppercase() || chars[j].1.is_numeric()) {
                sentences.push(text[start..pos + c.len_utf8()].trim());
                start = chars[j].0;
                i = j;
                continue;
            }
        }
        i += 1;
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        sentences.push(tail);
    }
    sentences
}

fn lowercase_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

fn sentence_hits_dictionary(sentence: &str, config: &PrepConfig) -> bool {
    lowercase_tokens(sentence).any(|token| {
        let lemma = config.lemma(&token);
        config.first_names.contains(lemma)
            || config.surnames.contains(lemma)
            || config.contact_words.contains(lemma)
    })
}

/// Drops every sentence whose lemmatized tokens hit the name or contact-word
/// dictionaries; remaining sentences are rejoined with single spaces.
pub fn remove_personal_info(text: &str, config: &PrepConfig) -> String {
    split_sentences(text)
        .into_iter()
        .filter(|s| !sentence_hits_dictionary(s, config))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Case-insensitive prefix match on whole words; returns the byte length of
/// the matched prefix in `text`.
fn ci_prefix_len(text: &str, phrase: &str) -> Option<usize> {
    let mut text_chars = text.char_indices();
    for pc in phrase.chars() {
        let (_, tc) = text_chars.next()?;
        if !tc.to_lowercase().eq(pc.to_lowercase()) {
            return None;
        }
    }
    let end = text_chars.next().map_or(text.len(), |(i, _)| i);
    // word boundary: the match must not continue into a letter or digit
    if text[end..].chars().next().is_some_and(|c| c.is_alphanumeric()) {
        return None;
    }
    Some(end)
}

/// Case-insensitive suffix match on whole words; returns the byte offset
/// where the matched suffix starts.
fn ci_suffix_start(text: &str, phrase: &str) -> Option<usize> {
    let mut text_chars = text.char_indices().rev();
    let mut start = text.len();
    for pc in phrase.chars().rev() {
        let (i, tc) = text_chars.next()?;
        if !tc.to_lowercase().eq(pc.to_lowercase()) {
            return None;
        }
        start = i;
    }
    if text[..start].chars().next_back().is_some_and(|c| c.is_alphanumeric()) {
        return None;
    }
    Some(start)
}

/// Strips configured phrases from the beginning and end of the text,
/// case-insensitively and repeatedly until no phrase matches. Mid-text
/// occurrences are left alone. Separator punctuation exposed by a strip
/// (e.g. the comma after a greeting) is trimmed as well. Longer phrases
/// are tried first, so "witam serdecznie" wins over "witam".
pub fn strip_boilerplate_phrases(text: &str, config: &PrepConfig) -> String {
    let mut phrases: Vec<&String> = config.boilerplate_phrases.iter().collect();
    phrases.sort_by_key(|p| std::cmp::Reverse(p.chars().count()));

    let mut current = text.trim().to_string();
    loop {
        let mut changed = false;

        for phrase in &phrases {
            if phrase.is_empty() {
                continue;
            }
            if let Some(end) = ci_prefix_len(&current, phrase) {
                current = current[end..]
                    .trim_start_matches(|c: char| c.is_whitespace() || (!c.is_alphanumeric() && ALLOWED_PUNCT.contains(c)))
                    .to_string();
                changed = true;
            }
        }

        for phrase in &phrases {
            if phrase.is_empty() {
                continue;
            }
            // allow trailing punctuation after an end phrase ("Pozdrawiam!")
            let trimmed_end = current.trim_end_matches(|c: char| c.is_whitespace() || (!c.is_alphanumeric() && ALLOWED_PUNCT.contains(c)));
            if let Some(start) = ci_suffix_start(trimmed_end, phrase) {
                current = trimmed_end[..start].trim_end().to_string();
                changed = true;
            }
        }

        if !changed {
            return current;
        }
    }
}

/// Removes a single leading "<digits>." or "<digits>)" numbering token.
pub fn strip_leading_numbering(question: &str) -> String {
    let trimmed = question.trim_start();
    NUMBERING_RE.replace(trimmed, "").into_owned()
}

/// True when the lemmatized question mentions any configured image word.
pub fn is_image_question(question: &str, config: &PrepConfig) -> bool {
    lowercase_tokens(question).any(|token| config.image_words.contains(config.lemma(&token)))
}

/// Runs the full cleaning pipeline on one pair. Returns `None` when the pair
/// is filtered out (image question, or question/answer below the minimum
/// length for its source).
pub fn preprocess_pair(pair: &QaPair, config: &PrepConfig) -> Option<QaPair> {
    let question = normalize_text(&pair.question);
    let question = remove_personal_info(&question, config);
    let question = strip_boilerplate_phrases(&question, config);
    let question = strip_leading_numbering(&question);

    let answer = normalize_text(&pair.answer);
    let answer = remove_personal_info(&answer, config);
    let answer = strip_boilerplate_phrases(&answer, config);

    if is_image_question(&question, config) {
        return None;
    }
    if question.chars().count() < config.min_question_chars {
        return None;
    }
    if answer.chars().count() < config.min_answer_for(&pair.source) {
        return None;
    }
    Some(QaPair {
        question,
        answer,
        source: pair.source.clone(),
    })
}
