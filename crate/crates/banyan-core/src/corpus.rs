//! Corpus ingestion: vocabulary construction, tokenization, and
//! deterministic batching.
//!
//! Corpora are UTF-8 text files with one sentence per line. A corpus that
//! was tokenized elsewhere (e.g. with a pretrained subword vocabulary) can
//! be supplied as a file of space-separated decimal token ids instead.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Token id; id 0 is reserved for unknown tokens.
pub type TokenId = u32;

/// The reserved surface form for the unknown id.
pub const UNK_TOKEN: &str = "<unk>";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty sequence")]
    EmptySequence,
    #[error("token id {id} out of range (vocabulary size {vocab})")]
    IdOutOfRange { id: u64, vocab: usize },
    #[error("malformed vocab file at line {0}")]
    BadVocabLine(usize),
    #[error("vocab ids are not dense in [0, V)")]
    NonDenseVocab,
    #[error("line {line}: `{token}` is not a decimal token id")]
    BadTokenId { line: usize, token: String },
}

/// Bijective token/id mapping with a reserved unknown id at 0.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    token_to_id: HashMap<String, TokenId>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    /// Build from (token, count) pairs. Tokens with `count >= min_count`
    /// get ids by descending count, ties broken lexicographically.
    pub fn from_counts(counts: impl IntoIterator<Item = (String, u64)>, min_count: u64) -> Self {
        let mut kept: Vec<(String, u64)> = counts
            .into_iter()
            .filter(|(tok, n)| *n >= min_count && tok != UNK_TOKEN)
            .collect();
        kept.sort_by(|(ta, na), (tb, nb)| nb.cmp(na).then_with(|| ta.cmp(tb)));

        let mut id_to_token = Vec::with_capacity(kept.len() + 1);
        id_to_token.push(UNK_TOKEN.to_string());
        id_to_token.extend(kept.into_iter().map(|(tok, _)| tok));

        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(id, tok)| (tok.clone(), id as TokenId))
            .collect();
        Self { token_to_id, id_to_token }
    }

    /// Vocabulary size V, including the unknown token.
    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the unknown token is always present
    }

    /// Id for a token, falling back to the unknown id.
    pub fn id(&self, token: &str) -> TokenId {
        self.token_to_id.get(token).copied().unwrap_or(0)
    }

    /// Id for a token only if it is in the vocabulary.
    pub fn lookup(&self, token: &str) -> Option<TokenId> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.id_to_token[id as usize]
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.id_to_token.iter().map(String::as_str)
    }

    /// Placeholder vocabulary for pre-tokenized corpora without a vocab
    /// file: ids 1..V map to `<id_N>` surface forms.
    pub fn placeholder(vocab_size: usize) -> Self {
        let mut id_to_token = vec![UNK_TOKEN.to_string()];
        id_to_token.extend((1..vocab_size).map(|i| format!("<id_{i}>")));
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(id, tok)| (tok.clone(), id as TokenId))
            .collect();
        Self { token_to_id, id_to_token }
    }

    /// Serialize as TSV `token<TAB>id`, sorted by id; line 0 is the
    /// unknown token.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (id, tok) in self.id_to_token.iter().enumerate() {
            out.push_str(tok);
            out.push('\t');
            out.push_str(&id.to_string());
            out.push('\n');
        }
        out
    }

    pub fn save_tsv(&self, path: &Path) -> Result<(), CorpusError> {
        let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
        f.write_all(self.to_tsv().as_bytes()).map_err(|e| io_err(path, e))
    }

    pub fn from_tsv(text: &str) -> Result<Self, CorpusError> {
        let mut rows: Vec<(String, usize)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (tok, id) = line.split_once('\t').ok_or(CorpusError::BadVocabLine(lineno + 1))?;
            let id: usize = id.trim().parse().map_err(|_| CorpusError::BadVocabLine(lineno + 1))?;
            rows.push((tok.to_string(), id));
        }
        if rows.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        rows.sort_by_key(|(_, id)| *id);
        if rows.iter().enumerate().any(|(i, (_, id))| i != *id) {
            return Err(CorpusError::NonDenseVocab);
        }
        let id_to_token: Vec<String> = rows.into_iter().map(|(tok, _)| tok).collect();
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(id, tok)| (tok.clone(), id as TokenId))
            .collect();
        Ok(Self { token_to_id, id_to_token })
    }

    pub fn load_tsv(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::from_tsv(&text)
    }
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io { path: path.display().to_string(), source }
}

/// One sentence as token ids; never empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSequence {
    pub ids: Vec<TokenId>,
}

impl TokenSequence {
    pub fn new(ids: Vec<TokenId>) -> Result<Self, CorpusError> {
        if ids.is_empty() {
            return Err(CorpusError::EmptySequence);
        }
        Ok(Self { ids })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Count whitespace tokens per line and build the vocabulary.
pub fn build_vocab(corpus_path: &Path, min_count: u64) -> Result<Vocabulary, CorpusError> {
    let text = fs::read_to_string(corpus_path).map_err(|e| io_err(corpus_path, e))?;
    build_vocab_from_lines(text.lines(), min_count)
}

/// As [`build_vocab`], over in-memory lines.
pub fn build_vocab_from_lines<'a>(
    lines: impl IntoIterator<Item = &'a str>,
    min_count: u64,
) -> Result<Vocabulary, CorpusError> {
    let mut counts: HashMap<String, u64> = HashMap::new();
    let mut saw_token = false;
    for line in lines {
        for tok in line.split_whitespace() {
            saw_token = true;
            *counts.entry(tok.to_string()).or_insert(0) += 1;
        }
    }
    if !saw_token {
        return Err(CorpusError::EmptyCorpus);
    }
    Ok(Vocabulary::from_counts(counts, min_count))
}

/// Whitespace-split a line and map tokens to ids (unknown falls back
/// to id 0). Errors on a line with no tokens.
pub fn tokenize(line: &str, vocab: &Vocabulary) -> Result<TokenSequence, CorpusError> {
    let ids: Vec<TokenId> = line.split_whitespace().map(|tok| vocab.id(tok)).collect();
    TokenSequence::new(ids)
}

/// In-memory sentence store that batches deterministically.
#[derive(Debug, Clone)]
pub struct SequenceStore {
    sequences: Vec<TokenSequence>,
    vocab_size: usize,
}

impl SequenceStore {
    pub fn new(sequences: Vec<TokenSequence>, vocab_size: usize) -> Result<Self, CorpusError> {
        if sequences.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        for seq in &sequences {
            if let Some(&id) = seq.ids.iter().find(|&&id| id as usize >= vocab_size) {
                return Err(CorpusError::IdOutOfRange { id: id as u64, vocab: vocab_size });
            }
        }
        Ok(Self { sequences, vocab_size })
    }

    /// Tokenize a text corpus, skipping blank lines and truncating
    /// sentences to `max_len` tokens.
    pub fn from_text(text: &str, vocab: &Vocabulary, max_len: usize) -> Result<Self, CorpusError> {
        let mut sequences = Vec::new();
        for line in text.lines() {
            if line.split_whitespace().next().is_none() {
                continue;
            }
            let mut seq = tokenize(line, vocab)?;
            seq.ids.truncate(max_len);
            sequences.push(seq);
        }
        Self::new(sequences, vocab.len())
    }

    pub fn from_text_file(path: &Path, vocab: &Vocabulary, max_len: usize) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::from_text(&text, vocab, max_len)
    }

    /// Parse a pre-tokenized corpus: one space-separated decimal id
    /// sequence per line. Returns the store and the inferred minimum
    /// vocabulary size (max id + 1) when `vocab_size` is `None`.
    pub fn from_ids_text(
        text: &str,
        vocab_size: Option<usize>,
        max_len: usize,
    ) -> Result<Self, CorpusError> {
        let mut sequences = Vec::new();
        let mut max_id: u64 = 0;
        for (lineno, line) in text.lines().enumerate() {
            let mut ids = Vec::new();
            for tok in line.split_whitespace() {
                let id: u64 = tok.parse().map_err(|_| CorpusError::BadTokenId {
                    line: lineno + 1,
                    token: tok.to_string(),
                })?;
                max_id = max_id.max(id);
                if id > TokenId::MAX as u64 {
                    return Err(CorpusError::IdOutOfRange { id, vocab: vocab_size.unwrap_or(0) });
                }
                ids.push(id as TokenId);
            }
            if ids.is_empty() {
                continue;
            }
            ids.truncate(max_len);
            sequences.push(TokenSequence { ids });
        }
        let vocab_size = vocab_size.unwrap_or(max_id as usize + 1);
        Self::new(sequences, vocab_size)
    }

    pub fn from_ids_file(
        path: &Path,
        vocab_size: Option<usize>,
        max_len: usize,
    ) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::from_ids_text(&text, vocab_size, max_len)
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn sequences(&self) -> &[TokenSequence] {
        &self.sequences
    }

    /// First `n` sentences, in file order.
    pub fn prefix_batch(&self, n: usize) -> Batch {
        Batch {
            sequences: self.sequences[..n].to_vec(),
            index: 0,
            seed_snapshot: BatchSeed { seed: 0, epoch: 0, index: 0 },
        }
    }

    /// Deterministic shuffled batches for one epoch.
    pub fn batches(&self, batch_size: usize, seed: u64, epoch: u64) -> BatchIter<'_> {
        assert!(batch_size >= 1, "batch_size must be >= 1");
        let mut order: Vec<usize> = (0..self.sequences.len()).collect();
        // Distinct stream per epoch so epochs reshuffle but remain
        // reproducible from (seed, epoch) alone.
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch.wrapping_mul(0x9e3779b97f4a7c15)));
        order.shuffle(&mut rng);
        BatchIter { store: self, order, batch_size, seed, epoch, next_index: 0 }
    }
}

/// Identifies where in the shuffled stream a batch came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchSeed {
    pub seed: u64,
    pub epoch: u64,
    pub index: u32,
}

/// A batch of sentences handed to structure induction.
#[derive(Debug, Clone)]
pub struct Batch {
    pub sequences: Vec<TokenSequence>,
    pub index: u32,
    pub seed_snapshot: BatchSeed,
}

impl Batch {
    pub fn from_sequences(sequences: Vec<TokenSequence>) -> Self {
        assert!(!sequences.is_empty(), "batch must contain at least one sequence");
        Self { sequences, index: 0, seed_snapshot: BatchSeed { seed: 0, epoch: 0, index: 0 } }
    }

    pub fn total_tokens(&self) -> usize {
        self.sequences.iter().map(TokenSequence::len).sum()
    }
}

/// Iterator over one epoch's batches; the final batch may be partial.
pub struct BatchIter<'a> {
    store: &'a SequenceStore,
    order: Vec<usize>,
    batch_size: usize,
    seed: u64,
    epoch: u64,
    next_index: u32,
}

impl Iterator for BatchIter<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        let start = self.next_index as usize * self.batch_size;
        if start >= self.order.len() {
            return None;
        }
        let end = (start + self.batch_size).min(self.order.len());
        let sequences = self.order[start..end]
            .iter()
            .map(|&i| self.store.sequences[i].clone())
            .collect();
        let index = self.next_index;
        self.next_index += 1;
        Some(Batch {
            sequences,
            index,
            seed_snapshot: BatchSeed { seed: self.seed, epoch: self.epoch, index },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab_ab() -> Vocabulary {
        build_vocab_from_lines(["a b", "a c"], 1).unwrap()
    }

    #[test]
    fn vocab_orders_by_frequency_then_lexicographic() {
        // a appears twice, b and c once; unk is id 0.
        let v = vocab_ab();
        assert_eq!(v.len(), 4);
        assert_eq!(v.id("a"), 1);
        assert_eq!(v.id("b"), 2);
        assert_eq!(v.id("c"), 3);
        assert_eq!(v.token(0), UNK_TOKEN);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let err = build_vocab_from_lines(["", "   "], 1).unwrap_err();
        assert!(matches!(err, CorpusError::EmptyCorpus));
    }

    #[test]
    fn min_count_can_exclude_everything() {
        let v = build_vocab_from_lines(["x"], 2).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v.token(0), UNK_TOKEN);
    }

    #[test]
    fn tokenize_maps_known_and_unknown() {
        let v = vocab_ab();
        assert_eq!(tokenize("a b", &v).unwrap().ids, vec![1, 2]);
        assert_eq!(tokenize("a z", &v).unwrap().ids, vec![1, 0]);
        assert!(matches!(tokenize("   ", &v), Err(CorpusError::EmptySequence)));
    }

    #[test]
    fn retokenizing_is_deterministic() {
        let v = vocab_ab();
        let line = "a b c a z";
        assert_eq!(tokenize(line, &v).unwrap(), tokenize(line, &v).unwrap());
    }

    #[test]
    fn batching_emits_partial_tail_and_is_seed_stable() {
        let v = build_vocab_from_lines(["a b c d e"], 1).unwrap();
        let seqs: Vec<TokenSequence> =
            (1..=5).map(|n| TokenSequence::new(vec![n as TokenId % 5]).unwrap()).collect();
        let store = SequenceStore::new(seqs, v.len()).unwrap();

        let sizes: Vec<usize> =
            store.batches(2, 7, 0).map(|b| b.sequences.len()).collect();
        assert_eq!(sizes, vec![2, 2, 1]);

        let first: Vec<Vec<TokenId>> =
            store.batches(2, 7, 0).flat_map(|b| b.sequences).map(|s| s.ids).collect();
        let second: Vec<Vec<TokenId>> =
            store.batches(2, 7, 0).flat_map(|b| b.sequences).map(|s| s.ids).collect();
        assert_eq!(first, second);

        let other_epoch: Vec<Vec<TokenId>> =
            store.batches(2, 7, 1).flat_map(|b| b.sequences).map(|s| s.ids).collect();
        assert_eq!(other_epoch.len(), first.len());
    }

    #[test]
    fn max_len_truncates_sentences() {
        let v = vocab_ab();
        let store = SequenceStore::from_text("a b a b a b\na c", &v, 3).unwrap();
        assert_eq!(store.sequences()[0].len(), 3);
        assert_eq!(store.sequences()[1].len(), 2);
    }

    #[test]
    fn ids_corpus_roundtrip_and_validation() {
        let store = SequenceStore::from_ids_text("1 2 3\n0 4\n", None, 128).unwrap();
        assert_eq!(store.vocab_size(), 5);
        assert_eq!(store.len(), 2);
        assert!(SequenceStore::from_ids_text("1 notanid\n", None, 128).is_err());
        assert!(matches!(
            SequenceStore::from_ids_text("9\n", Some(4), 128),
            Err(CorpusError::IdOutOfRange { .. })
        ));
    }

    #[test]
    fn vocab_tsv_roundtrip() {
        let v = vocab_ab();
        let restored = Vocabulary::from_tsv(&v.to_tsv()).unwrap();
        assert_eq!(restored.len(), v.len());
        for tok in ["a", "b", "c"] {
            assert_eq!(restored.id(tok), v.id(tok));
        }
    }
}
