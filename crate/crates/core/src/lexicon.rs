//! Constituent lexicon: base ingredient names and longest-match lookup.
//!
//! A constituent is the bare ingredient name inside an ingredient phrase
//! ("garlic" in "2 tablespoons garlic, chopped"). The lexicon is built from a
//! recipe corpus by a rule-based extractor and is the shared substrate of the
//! coherence rewards and the coherence/F1/repetition metrics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid lexicon entry {0:?}: {1}")]
    InvalidEntry(String, String),
}

/// Default stop words; an entry containing any of these is rejected.
pub const DEFAULT_STOP_WORDS: [&str; 7] = ["and", "or", "with", "in", "of", "to", "for"];

/// Leading measurement words stripped from ingredient phrases.
const UNIT_WORDS: &[&str] = &[
    "cup", "cups", "tablespoon", "tablespoons", "tbsp", "teaspoon", "teaspoons", "tsp", "lb",
    "lbs", "pound", "pounds", "ounce", "ounces", "oz", "gram", "grams", "g", "kg", "kilogram",
    "kilograms", "ml", "milliliter", "milliliters", "liter", "liters", "l", "pint", "pints",
    "quart", "quarts", "gallon", "gallons", "pinch", "pinches", "dash", "dashes", "can", "cans",
    "clove", "cloves", "stalk", "stalks", "block", "blocks", "stick", "sticks", "slice",
    "slices", "package", "packages", "bunch", "bunches", "head", "heads", "piece", "pieces",
];

const UNICODE_FRACTIONS: [char; 9] = ['½', '⅓', '⅔', '¼', '¾', '⅕', '⅛', '⅜', '⅝'];

fn is_quantity_token(word: &str) -> bool {
    !word.is_empty()
        && word.chars().all(|c| {
            c.is_ascii_digit()
                || c == '/'
                || c == '-'
                || c == '.'
                || UNICODE_FRACTIONS.contains(&c)
        })
        && word
            .chars()
            .any(|c| c.is_ascii_digit() || UNICODE_FRACTIONS.contains(&c))
}

/// Extracts candidate constituent names from one ingredient phrase.
///
/// Strips parenthesized comments, the preparation clause after the first
/// comma, leading quantity tokens, and leading unit words; lowercases what
/// remains. Unparseable phrases yield the empty set.
pub fn extract_constituent_candidates(phrase: &str) -> BTreeSet<String> {
    let mut text = String::with_capacity(phrase.len());
    let mut depth = 0usize;
    for c in phrase.chars() {
        match c {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            _ if depth == 0 => text.push(c),
            _ => {}
        }
    }
    let before_comma = text.split(',').next().unwrap_or("");
    let mut words: Vec<&str> = before_comma.split_whitespace().collect();
    while let Some(first) = words.first() {
        let lower = first.to_lowercase();
        if is_quantity_token(&lower) || UNIT_WORDS.contains(&lower.as_str()) {
            words.remove(0);
        } else {
            break;
        }
    }
    let name = words.join(" ").to_lowercase();
    if name.is_empty() {
        BTreeSet::new()
    } else {
        BTreeSet::from([name])
    }
}

fn entry_is_clean(entry: &str, stop_words: &BTreeSet<String>) -> bool {
    if entry.is_empty() || entry.contains("  ") {
        return false;
    }
    if !entry
        .chars()
        .all(|c| c.is_alphabetic() && c.is_lowercase() || c == ' ')
    {
        return false;
    }
    !entry.split(' ').any(|w| stop_words.contains(w))
}

/// Set of constituent names with an index for longest-match lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstituentLexicon {
    entries: BTreeSet<String>,
    /// first word -> entries starting with it, as word vectors, longest first
    index: HashMap<String, Vec<Vec<String>>>,
}

impl ConstituentLexicon {
    /// Wraps an already-filtered entry set; rejects entries violating the
    /// alphabetic / single-space invariant.
    pub fn from_entries<I: IntoIterator<Item = String>>(
        entries: I,
    ) -> Result<Self, LexiconError> {
        let stop_words: BTreeSet<String> =
            DEFAULT_STOP_WORDS.iter().map(|s| s.to_string()).collect();
        let mut set = BTreeSet::new();
        for e in entries {
            if !entry_is_clean(&e, &stop_words) {
                return Err(LexiconError::InvalidEntry(
                    e,
                    "entries must be lowercase alphabetic words separated by single spaces, \
                     free of stop words"
                        .to_string(),
                ));
            }
            set.insert(e);
        }
        Ok(Self::index_entries(set))
    }

    fn index_entries(entries: BTreeSet<String>) -> Self {
        let mut index: HashMap<String, Vec<Vec<String>>> = HashMap::new();
        for e in &entries {
            let words: Vec<String> = e.split(' ').map(|w| w.to_string()).collect();
            index.entry(words[0].clone()).or_default().push(words);
        }
        for v in index.values_mut() {
            // longest first so the first prefix match wins
            v.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        }
        ConstituentLexicon { entries, index }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn contains(&self, entry: &str) -> bool {
        self.entries.contains(entry)
    }

    pub fn entries(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|s| s.as_str())
    }

    /// Writes the lexicon as one sorted lowercase entry per line.
    pub fn save(&self, path: &Path) -> Result<(), LexiconError> {
        let mut file = std::fs::File::create(path).map_err(|source| LexiconError::Io {
            path: path.display().to_string(),
            source,
        })?;
        for e in &self.entries {
            writeln!(file, "{e}").map_err(|source| LexiconError::Io {
                path: path.display().to_string(),
                source,
            })?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        let file = std::fs::File::open(path).map_err(|source| LexiconError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut entries = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|source| LexiconError::Io {
                path: path.display().to_string(),
                source,
            })?;
            let line = line.trim().to_string();
            if !line.is_empty() {
                entries.push(line);
            }
        }
        Self::from_entries(entries)
    }
}

/// Builds the lexicon from a corpus of recipes.
///
/// Unions the per-phrase candidates, drops entries with non-alphabetic
/// characters or stop words, then drops every entry expressible as a
/// space-joined concatenation of other surviving entries ("salt pepper" goes
/// when "salt" and "pepper" are both present). Deterministic for a given
/// input.
pub fn build_lexicon<'a, I>(phrases: I, stop_words: &BTreeSet<String>) -> ConstituentLexicon
where
    I: IntoIterator<Item = &'a str>,
{
    let mut candidates: BTreeSet<String> = BTreeSet::new();
    for phrase in phrases {
        candidates.extend(extract_constituent_candidates(phrase));
    }
    build_lexicon_from_candidates(candidates, stop_words)
}

pub fn build_lexicon_from_candidates(
    candidates: BTreeSet<String>,
    stop_words: &BTreeSet<String>,
) -> ConstituentLexicon {
    let clean: Vec<String> = candidates
        .into_iter()
        .filter(|e| entry_is_clean(e, stop_words))
        .collect();

    // Keep single words, then admit longer entries only if they cannot be
    // segmented into already-kept entries.
    let mut by_len: Vec<(usize, &String)> = clean
        .iter()
        .map(|e| (e.split(' ').count(), e))
        .collect();
    by_len.sort();
    let mut kept: BTreeSet<String> = BTreeSet::new();
    for (word_count, entry) in by_len {
        if word_count == 1 || !is_decomposable(entry, &kept) {
            kept.insert(entry.clone());
        }
    }
    ConstituentLexicon::index_entries(kept)
}

/// True when `entry` splits into two or more space-joined runs, each of which
/// is an entry of `set`.
fn is_decomposable(entry: &str, set: &BTreeSet<String>) -> bool {
    let words: Vec<&str> = entry.split(' ').collect();
    let n = words.len();
    if n < 2 {
        return false;
    }
    // reachable[i] = words[..i] segmentable into entries of `set`
    let mut reachable = vec![false; n + 1];
    reachable[0] = true;
    for end in 1..=n {
        for start in 0..end {
            if reachable[start] && set.contains(&words[start..end].join(" ")) {
                reachable[end] = true;
                break;
            }
        }
    }
    reachable[n]
}

pub fn default_stop_words() -> BTreeSet<String> {
    DEFAULT_STOP_WORDS.iter().map(|s| s.to_string()).collect()
}

/// Lowercased alphabetic word runs of a text, with byte-position info elided.
fn word_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_alphabetic() {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Finds lexicon constituents in arbitrary text.
///
/// Case-insensitive, exact word-boundary matching; at each position the
/// longest matching entry wins and consumes its words, so matched spans never
/// overlap. Returns each matched constituent with its occurrence count.
pub fn find_constituents(text: &str, lexicon: &ConstituentLexicon) -> BTreeMap<String, usize> {
    let words = word_tokens(text);
    let mut counts = BTreeMap::new();
    let mut i = 0;
    while i < words.len() {
        let mut matched = None;
        if let Some(entries) = lexicon.index.get(&words[i]) {
            for entry_words in entries {
                let len = entry_words.len();
                if i + len <= words.len()
                    && entry_words.iter().zip(&words[i..i + len]).all(|(a, b)| a == b)
                {
                    matched = Some(entry_words);
                    break; // longest first
                }
            }
        }
        match matched {
            Some(entry_words) => {
                *counts.entry(entry_words.join(" ")).or_insert(0) += 1;
                i += entry_words.len();
            }
            None => i += 1,
        }
    }
    counts
}
