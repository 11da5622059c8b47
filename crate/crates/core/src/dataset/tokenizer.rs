//! Cased WordPiece tokenizer.
//!
//! Reads and writes the one-token-per-line `vocab.txt` layout used by BERT
//! checkpoints, so a real `bert-base-cased` vocabulary can be dropped in. For
//! desk-scale runs [`WordPieceTokenizer::build`] derives a vocabulary from the
//! corpus, splitting camel-case identifiers at case boundaries.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use crate::dataset::DatasetError;

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";
const SPECIALS: [&str; 5] = [PAD, UNK, CLS, SEP, MASK];
const CONTINUATION: &str = "##";
const MAX_CHARS_PER_WORD: usize = 100;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordPieceTokenizer {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    unk: u32,
    cls: u32,
    sep: u32,
    pad: u32,
}

/// Options for deriving a vocabulary from a corpus.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VocabOptions {
    /// Words seen fewer times are only reachable through pieces.
    pub min_frequency: usize,
    /// Upper bound on whole words / pieces added after characters.
    pub max_entries: usize,
}

impl Default for VocabOptions {
    fn default() -> Self {
        Self {
            min_frequency: 1,
            max_entries: 30_000,
        }
    }
}

/// Splits at lower→upper, acronym→word and letter↔digit boundaries:
/// `RRCReconfiguration` → `RRC`, `Reconfiguration`.
pub fn camel_segments(word: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = word.char_indices().collect();
    let mut cuts = vec![0];
    for i in 1..chars.len() {
        let (_, prev) = chars[i - 1];
        let (pos, cur) = chars[i];
        let next = chars.get(i + 1).map(|&(_, c)| c);
        let boundary = (prev.is_lowercase() && cur.is_uppercase())
            || (prev.is_uppercase() && cur.is_uppercase() && next.is_some_and(char::is_lowercase))
            || (prev.is_ascii_digit() != cur.is_ascii_digit() && prev.is_alphanumeric() && cur.is_alphanumeric());
        if boundary {
            cuts.push(pos);
        }
    }
    cuts.push(word.len());
    cuts.windows(2).map(|w| &word[w[0]..w[1]]).filter(|s| !s.is_empty()).collect()
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation() || (!c.is_alphanumeric() && !c.is_whitespace())
}

/// Punctuation characters become their own pieces, as in BERT's basic tokenizer.
fn split_punctuation(word: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, c) in word.char_indices() {
        if is_punct(c) {
            if start < i {
                out.push(&word[start..i]);
            }
            out.push(&word[i..i + c.len_utf8()]);
            start = i + c.len_utf8();
        }
    }
    if start < word.len() {
        out.push(&word[start..]);
    }
    out
}

impl WordPieceTokenizer {
    /// Builds from an ordered token list; the five special tokens must be present.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, DatasetError> {
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i as u32).is_some() {
                return Err(DatasetError::InvalidVocab(format!("duplicate token `{t}`")));
            }
        }
        let special = |name: &str| {
            ids.get(name)
                .copied()
                .ok_or_else(|| DatasetError::InvalidVocab(format!("missing special token {name}")))
        };
        Ok(Self {
            unk: special(UNK)?,
            cls: special(CLS)?,
            sep: special(SEP)?,
            pad: special(PAD)?,
            tokens,
            ids,
        })
    }

    /// Derives a vocabulary: specials, every character (plain and `##`),
    /// then frequent words, camel-case words contributing their segments.
    pub fn build<'a>(words: impl IntoIterator<Item = &'a str>, opts: VocabOptions) -> Self {
        let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
        for w in words {
            if !SPECIALS.contains(&w) {
                *freq.entry(w).or_default() += 1;
            }
        }
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let mut seen: std::collections::HashSet<String> = tokens.iter().cloned().collect();
        let mut add = |t: String, tokens: &mut Vec<String>| {
            if seen.insert(t.clone()) {
                tokens.push(t);
            }
        };

        let mut chars: Vec<char> = freq.keys().flat_map(|w| w.chars()).collect();
        chars.sort_unstable();
        chars.dedup();
        for c in &chars {
            add(c.to_string(), &mut tokens);
        }
        for c in &chars {
            add(format!("{CONTINUATION}{c}"), &mut tokens);
        }

        let mut ranked: Vec<(&str, usize)> = freq.into_iter().filter(|&(_, n)| n >= opts.min_frequency).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let budget = tokens.len() + opts.max_entries;
        'words: for (word, _) in ranked {
            for piece in split_punctuation(word) {
                let segments = camel_segments(piece);
                for (i, seg) in segments.iter().enumerate() {
                    if tokens.len() >= budget {
                        break 'words;
                    }
                    let entry = if i == 0 { seg.to_string() } else { format!("{CONTINUATION}{seg}") };
                    add(entry, &mut tokens);
                }
            }
        }
        Self::from_tokens(tokens).expect("built vocabulary contains specials")
    }

    pub fn from_reader(reader: impl BufRead) -> Result<Self, DatasetError> {
        let mut tokens = Vec::new();
        for line in reader.lines() {
            let line = line.map_err(|e| DatasetError::Io(e.to_string()))?;
            let token = line.trim_end_matches(['\r', '\n']);
            if !token.is_empty() {
                tokens.push(token.to_string());
            }
        }
        Self::from_tokens(tokens)
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let file = std::fs::File::open(path).map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    pub fn write(&self, mut out: impl Write) -> std::io::Result<()> {
        for t in &self.tokens {
            writeln!(out, "{t}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        let file = std::fs::File::create(path).map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))?;
        let mut out = std::io::BufWriter::new(file);
        self.write(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn cls_id(&self) -> u32 {
        self.cls
    }

    pub fn sep_id(&self) -> u32 {
        self.sep
    }

    pub fn pad_id(&self) -> u32 {
        self.pad
    }

    pub fn unk_id(&self) -> u32 {
        self.unk
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    /// Subword ids for one word; never empty.
    pub fn tokenize_word(&self, word: &str) -> Vec<u32> {
        if let Some(&id) = self.ids.get(word).filter(|_| SPECIALS.contains(&word)) {
            return vec![id];
        }
        let mut out = Vec::new();
        for piece in split_punctuation(word) {
            self.wordpiece(piece, &mut out);
        }
        if out.is_empty() {
            out.push(self.unk);
        }
        out
    }

    /// Greedy longest-match-first; an unmatchable piece becomes one `[UNK]`.
    fn wordpiece(&self, piece: &str, out: &mut Vec<u32>) {
        if piece.chars().count() > MAX_CHARS_PER_WORD {
            out.push(self.unk);
            return;
        }
        let bounds: Vec<usize> = piece.char_indices().map(|(i, _)| i).chain([piece.len()]).collect();
        let mut found = Vec::new();
        let mut start = 0;
        while start + 1 < bounds.len() {
            let mut end = bounds.len() - 1;
            let mut hit = None;
            while end > start {
                let sub = &piece[bounds[start]..bounds[end]];
                let candidate = if start == 0 { sub.to_string() } else { format!("{CONTINUATION}{sub}") };
                if let Some(&id) = self.ids.get(&candidate) {
                    hit = Some(id);
                    break;
                }
                end -= 1;
            }
            match hit {
                Some(id) => {
                    found.push(id);
                    start = end;
                }
                None => {
                    out.push(self.unk);
                    return;
                }
            }
        }
        out.extend(found);
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<&str> {
        ids.iter().map(|&i| self.token(i).unwrap_or(UNK)).collect()
    }
}
