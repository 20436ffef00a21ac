//! Text corpora and count tables.
//!
//! Words are lowercased, stripped of every character in the Unicode
//! punctuation (`P*`) and symbol (`S*`) categories, and split on whitespace.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Read, Write};
use std::path::Path;

use npmle_core::CountsVector;
use unicode_general_category::{get_general_category, GeneralCategory as Gc};

use crate::error::{AppError, AppResult};

fn is_stripped(c: char) -> bool {
    matches!(
        get_general_category(c),
        Gc::ConnectorPunctuation
            | Gc::DashPunctuation
            | Gc::OpenPunctuation
            | Gc::ClosePunctuation
            | Gc::InitialPunctuation
            | Gc::FinalPunctuation
            | Gc::OtherPunctuation
            | Gc::MathSymbol
            | Gc::CurrencySymbol
            | Gc::ModifierSymbol
            | Gc::OtherSymbol
    )
}

/// An ordered word sequence over a dense vocabulary (first occurrence order).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenStream {
    words: Vec<String>,
    index: HashMap<String, usize>,
    tokens: Vec<usize>,
}

impl TokenStream {
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut stream = Self::default();
        for w in words {
            stream.push(w.as_ref());
        }
        stream
    }

    fn push(&mut self, word: &str) {
        let id = match self.index.get(word) {
            Some(&id) => id,
            None => {
                let id = self.words.len();
                self.words.push(word.to_string());
                self.index.insert(word.to_string(), id);
                id
            }
        };
        self.tokens.push(id);
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Vocabulary, indexed by word id.
    pub fn vocab(&self) -> &[String] {
        &self.words
    }

    pub fn word_id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn token_ids(&self) -> &[usize] {
        &self.tokens
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> + '_ {
        self.tokens.iter().map(|&i| self.words[i].as_str())
    }

    /// Counts of the first `m` tokens over the full vocabulary.
    pub fn prefix_counts(&self, m: usize) -> CountTable {
        let mut counts = vec![0u64; self.words.len()];
        for &t in self.tokens.iter().take(m) {
            counts[t] += 1;
        }
        CountTable {
            symbols: self.words.clone(),
            counts,
        }
    }

    /// One token per line.
    pub fn write_lines(&self, mut out: impl Write) -> std::io::Result<()> {
        for t in self.tokens() {
            writeln!(out, "{t}")?;
        }
        Ok(())
    }

    /// Inverse of [`TokenStream::write_lines`]; blank lines are skipped.
    pub fn read_lines(input: impl BufRead) -> std::io::Result<Self> {
        let mut stream = Self::default();
        for line in input.lines() {
            let line = line?;
            let w = line.trim();
            if !w.is_empty() {
                stream.push(w);
            }
        }
        Ok(stream)
    }
}

pub fn tokenize(text: &str) -> TokenStream {
    let cleaned: String = text.to_lowercase().chars().filter(|&c| !is_stripped(c)).collect();
    TokenStream::from_words(cleaned.split_whitespace())
}

/// [`tokenize`] for raw bytes, rejecting invalid UTF-8.
pub fn tokenize_bytes(bytes: &[u8]) -> Result<TokenStream, std::str::Utf8Error> {
    std::str::from_utf8(bytes).map(tokenize)
}

pub fn read_corpus(path: &Path) -> AppResult<TokenStream> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| AppError::input(path, e))?;
    tokenize_bytes(&bytes).map_err(|e| AppError::format(path, format!("not valid UTF-8: {e}")))
}

/// Symbols with nonnegative counts; symbols are unique.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CountTable {
    pub symbols: Vec<String>,
    pub counts: Vec<u64>,
}

impl CountTable {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn to_counts_vector(&self) -> npmle_core::Result<CountsVector> {
        CountsVector::new(self.counts.clone())
    }
}

pub fn counts_from_stream(stream: &TokenStream) -> CountTable {
    stream.prefix_counts(stream.len())
}

/// Parse `symbol,count` rows. Zero counts are kept.
pub fn parse_count_table(input: impl Read, has_header: bool, path: &Path) -> AppResult<CountTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut table = CountTable::default();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| AppError::format(path, e.to_string()))?;
        let line = rec.position().map_or(i as u64 + 1, |p| p.line());
        if rec.len() != 2 {
            return Err(AppError::format(
                path,
                format!("line {line}: expected 2 fields (symbol,count), found {}", rec.len()),
            ));
        }
        let count = &rec[1];
        let count: u64 = match count.parse() {
            Ok(c) => c,
            Err(_) if count.parse::<i64>().is_ok() => {
                return Err(AppError::format(path, format!("line {line}: negative count {count}")));
            }
            Err(_) => {
                return Err(AppError::format(path, format!("line {line}: invalid count {count:?}")));
            }
        };
        table.symbols.push(rec[0].to_string());
        table.counts.push(count);
    }
    let mut seen = HashSet::new();
    let mut dups: Vec<&str> = Vec::new();
    for s in &table.symbols {
        if !seen.insert(s.as_str()) && !dups.contains(&s.as_str()) {
            dups.push(s);
        }
    }
    if !dups.is_empty() {
        return Err(AppError::format(path, format!("duplicate symbols: {}", dups.join(", "))));
    }
    Ok(table)
}

pub fn load_count_table(path: &Path, has_header: bool) -> AppResult<CountTable> {
    let file = std::fs::File::open(path).map_err(|e| AppError::input(path, e))?;
    parse_count_table(std::io::BufReader::new(file), has_header, path)
}
