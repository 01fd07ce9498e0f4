//! Byte-pair encoding over whitespace-separated words.
//!
//! Word-internal merges with the end-of-word marker `</w>` attached to each
//! word's final character, so token boundaries never cross words. Merge order
//! is the training order and ties on pair frequency break to the
//! lexicographically smallest pair, which makes training deterministic.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use crate::corpus::Corpus;
use crate::error::{Error, Result};

pub type TokenId = u32;

pub const UNK_ID: TokenId = 0;
pub const BOS_ID: TokenId = 1;
pub const EOS_ID: TokenId = 2;
/// Separator between the two sides of a pair encoded as one stream.
pub const SEP_ID: TokenId = 3;

pub const RESERVED_TOKENS: [&str; 4] = ["<unk>", "<bos>", "<eos>", "<sep>"];

const END_MARK: &str = "</w>";

/// A trained BPE model: ordered merge list plus the dense id vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct BpeModel {
    merges: Vec<(String, String)>,
    vocab: Vec<String>,
    ids: HashMap<String, TokenId>,
    merge_rank: HashMap<(String, String), usize>,
}

/// A corpus rendered as token-id sequences, `[BOS, subwords.., EOS]` each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedCorpus {
    pub sentences: Vec<Vec<TokenId>>,
}

impl TokenizedCorpus {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Number of predicted positions over the whole corpus (EOS counted,
    /// BOS not).
    pub fn predicted_tokens(&self) -> u64 {
        self.sentences.iter().map(|s| s.len() as u64 - 1).sum()
    }

    /// Materialize a subset by sentence index.
    pub fn subset(&self, indices: &[usize]) -> TokenizedCorpus {
        TokenizedCorpus {
            sentences: indices.iter().map(|&i| self.sentences[i].clone()).collect(),
        }
    }
}

impl BpeModel {
    /// Greedy highest-frequency pair merging until the vocabulary reaches
    /// `target_vocab_size` or no pair occurs at least twice.
    pub fn train(corpus: &Corpus, target_vocab_size: usize) -> Result<BpeModel> {
        if corpus.is_empty() {
            return Err(Error::config("bpe training corpus is empty"));
        }
        // Word histogram; merge work is per distinct word.
        let mut word_counts: HashMap<&str, u64> = HashMap::new();
        for line in corpus.lines() {
            for word in line.split_whitespace() {
                *word_counts.entry(word).or_default() += 1;
            }
        }
        if word_counts.is_empty() {
            return Err(Error::config("bpe training corpus contains no words"));
        }
        // Sorted for deterministic symbol interning.
        let mut distinct: Vec<(&str, u64)> = word_counts.into_iter().collect();
        distinct.sort_unstable();

        let mut symbols = SymbolTable::default();
        let mut words: Vec<(Vec<u32>, u64)> = distinct
            .iter()
            .map(|&(word, count)| (symbols.intern_word(word), count))
            .collect();
        let charset_size = symbols.names.len();
        if target_vocab_size <= charset_size + RESERVED_TOKENS.len() {
            return Err(Error::config(format!(
                "target vocab size {target_vocab_size} must exceed charset size \
                 {charset_size} + {} reserved ids",
                RESERVED_TOKENS.len()
            )));
        }

        let mut pair_counts: HashMap<(u32, u32), u64> = HashMap::new();
        let mut pair_words: HashMap<(u32, u32), HashSet<usize>> = HashMap::new();
        for (w, (syms, count)) in words.iter().enumerate() {
            for pair in adjacent_pairs(syms) {
                *pair_counts.entry(pair).or_default() += count;
                pair_words.entry(pair).or_default().insert(w);
            }
        }

        let mut merges: Vec<(String, String)> = Vec::new();
        let merge_budget = target_vocab_size - charset_size - RESERVED_TOKENS.len();
        while merges.len() < merge_budget {
            // Unique max under (count, reversed lexicographic pair), so the
            // winner is independent of hash-map iteration order.
            let best = pair_counts
                .iter()
                .filter(|(_, &c)| c >= 2)
                .max_by(|(pa, ca), (pb, cb)| {
                    ca.cmp(cb).then_with(|| {
                        let sa = (&symbols.names[pa.0 as usize], &symbols.names[pa.1 as usize]);
                        let sb = (&symbols.names[pb.0 as usize], &symbols.names[pb.1 as usize]);
                        sb.cmp(&sa)
                    })
                })
                .map(|(&p, _)| p);
            let Some(pair) = best else { break };

            let left = symbols.names[pair.0 as usize].clone();
            let right = symbols.names[pair.1 as usize].clone();
            let merged_sym = symbols.intern(format!("{left}{right}"));
            merges.push((left, right));

            let affected = pair_words.remove(&pair).unwrap_or_default();
            for w in affected {
                let (syms, count) = &mut words[w];
                if !contains_pair(syms, pair) {
                    continue; // stale membership from an earlier rewrite
                }
                for p in adjacent_pairs(syms) {
                    if let Some(c) = pair_counts.get_mut(&p) {
                        *c -= *count;
                        if *c == 0 {
                            pair_counts.remove(&p);
                        }
                    }
                }
                *syms = apply_merge(syms, pair, merged_sym);
                for p in adjacent_pairs(syms) {
                    *pair_counts.entry(p).or_default() += *count;
                    pair_words.entry(p).or_default().insert(w);
                }
            }
        }

        Ok(BpeModel::assemble(merges, &symbols.names[..charset_size]))
    }

    fn assemble(merges: Vec<(String, String)>, charset: &[String]) -> BpeModel {
        let mut vocab: Vec<String> = RESERVED_TOKENS.iter().map(|s| s.to_string()).collect();
        vocab.extend(charset.iter().cloned());
        for (l, r) in &merges {
            vocab.push(format!("{l}{r}"));
        }
        let ids = vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        let merge_rank = merges
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i))
            .collect();
        BpeModel {
            merges,
            vocab,
            ids,
            merge_rank,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.vocab[id as usize]
    }

    pub fn token_id(&self, token: &str) -> Option<TokenId> {
        self.ids.get(token).copied()
    }

    /// Encode one sentence as `[BOS, subword ids.., EOS]`. Characters outside
    /// the training charset map to UNK.
    pub fn encode(&self, sentence: &str) -> Vec<TokenId> {
        let mut out = vec![BOS_ID];
        self.encode_words_into(sentence, &mut out);
        out.push(EOS_ID);
        out
    }

    /// Encode `source<SEP>target` as one stream.
    pub fn encode_pair(&self, source: &str, target: &str) -> Vec<TokenId> {
        let mut out = vec![BOS_ID];
        self.encode_words_into(source, &mut out);
        out.push(SEP_ID);
        self.encode_words_into(target, &mut out);
        out.push(EOS_ID);
        out
    }

    fn encode_words_into(&self, sentence: &str, out: &mut Vec<TokenId>) {
        for word in sentence.split_whitespace() {
            for sym in self.segment_word(word) {
                out.push(self.ids.get(&sym).copied().unwrap_or(UNK_ID));
            }
        }
    }

    /// Split a word into merge-closed subword strings by applying the merge
    /// list in training order.
    fn segment_word(&self, word: &str) -> Vec<String> {
        let mut syms = word_symbols(word);
        loop {
            let best = syms
                .windows(2)
                .filter_map(|w| {
                    self.merge_rank
                        .get(&(w[0].clone(), w[1].clone()))
                        .map(|&r| (r, (w[0].clone(), w[1].clone())))
                })
                .min_by_key(|(r, _)| *r);
            let Some((_, pair)) = best else { break };
            let mut next = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == pair.0 && syms[i + 1] == pair.1 {
                    next.push(format!("{}{}", pair.0, pair.1));
                    i += 2;
                } else {
                    next.push(syms[i].clone());
                    i += 1;
                }
            }
            syms = next;
        }
        syms
    }

    /// Reconstruct the text of an encoded sentence. Reserved ids are skipped;
    /// exact for any sentence whose characters were all in the training
    /// charset and whose words are single-space separated.
    pub fn decode(&self, tokens: &[TokenId]) -> String {
        let mut joined = String::new();
        for &id in tokens {
            if id as usize >= RESERVED_TOKENS.len() {
                joined.push_str(&self.vocab[id as usize]);
            }
        }
        joined.replace(END_MARK, " ").trim_end().to_string()
    }

    pub fn encode_corpus(&self, corpus: &Corpus) -> TokenizedCorpus {
        TokenizedCorpus {
            sentences: corpus.lines().map(|l| self.encode(l)).collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = format!("bpe v1 {}\n", self.vocab.len());
        for (l, r) in &self.merges {
            out.push_str(&format!("{l} {r}\n"));
        }
        for (id, token) in self.vocab.iter().enumerate() {
            out.push_str(&format!("{token} {id}\n"));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<BpeModel> {
        if !path.exists() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bad = |msg: &str| Error::artifact(path, msg);
        let lines: Vec<&str> = text.lines().collect();
        let header = lines.first().ok_or_else(|| bad("empty file"))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("bpe") || fields.next() != Some("v1") {
            return Err(bad("expected `bpe v1` header"));
        }
        let vocab_size: usize = fields
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("bad vocab size in header"))?;
        if lines.len() < 1 + vocab_size {
            return Err(bad("truncated vocabulary section"));
        }
        let n_merges = lines.len() - 1 - vocab_size;
        let mut merges = Vec::with_capacity(n_merges);
        for line in &lines[1..1 + n_merges] {
            let mut f = line.split(' ');
            match (f.next(), f.next(), f.next()) {
                (Some(l), Some(r), None) => merges.push((l.to_string(), r.to_string())),
                _ => return Err(bad("malformed merge line")),
            }
        }
        let mut vocab = vec![String::new(); vocab_size];
        for line in &lines[1 + n_merges..] {
            let mut f = line.split(' ');
            let (Some(token), Some(id), None) = (f.next(), f.next(), f.next()) else {
                return Err(bad("malformed vocab line"));
            };
            let id: usize = id.parse().map_err(|_| bad("bad vocab id"))?;
            if id >= vocab_size {
                return Err(bad("vocab id out of range"));
            }
            vocab[id] = token.to_string();
        }
        for (i, expected) in RESERVED_TOKENS.iter().enumerate() {
            if vocab[i] != *expected {
                return Err(bad("reserved ids 0..=3 are not the reserved tokens"));
            }
        }
        let ids = vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        let merge_rank = merges
            .iter()
            .enumerate()
            .map(|(i, p): (usize, &(String, String))| (p.clone(), i))
            .collect();
        Ok(BpeModel {
            merges,
            vocab,
            ids,
            merge_rank,
        })
    }
}

/// Initial symbol sequence of a word: its characters, with `</w>` attached to
/// the final one.
fn word_symbols(word: &str) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    let last = chars.len() - 1;
    chars
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if i == last {
                format!("{c}{END_MARK}")
            } else {
                c.to_string()
            }
        })
        .collect()
}

#[derive(Default)]
struct SymbolTable {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl SymbolTable {
    fn intern(&mut self, name: String) -> u32 {
        if let Some(&id) = self.index.get(&name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.index.insert(name.clone(), id);
        self.names.push(name);
        id
    }

    fn intern_word(&mut self, word: &str) -> Vec<u32> {
        word_symbols(word)
            .into_iter()
            .map(|s| self.intern(s))
            .collect()
    }
}

fn adjacent_pairs(syms: &[u32]) -> impl Iterator<Item = (u32, u32)> + '_ {
    syms.windows(2).map(|w| (w[0], w[1]))
}

fn contains_pair(syms: &[u32], pair: (u32, u32)) -> bool {
    adjacent_pairs(syms).any(|p| p == pair)
}

fn apply_merge(syms: &[u32], pair: (u32, u32), merged: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(syms.len());
    let mut i = 0;
    while i < syms.len() {
        if i + 1 < syms.len() && syms[i] == pair.0 && syms[i + 1] == pair.1 {
            out.push(merged);
            i += 2;
        } else {
            out.push(syms[i]);
            i += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(lines: &[&str]) -> Corpus {
        Corpus::from_lines(lines.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    fn aaab_corpus() -> Corpus {
        corpus(&["aaab"; 10])
    }

    #[test]
    fn first_merge_is_most_frequent_pair() {
        // "aaab" -> [a, a, a, b</w>]: pairs (a,a) x2, (a,b</w>) x1 per word.
        let model = BpeModel::train(&aaab_corpus(), 8).unwrap();
        assert_eq!(model.merges()[0], ("a".to_string(), "a".to_string()));
        // Tie at count 10 between (aa,a) and (a,b</w>): lexicographic pick.
        assert_eq!(model.merges()[1], ("a".to_string(), "b</w>".to_string()));
    }

    #[test]
    fn too_small_vocab_is_rejected() {
        // charset {a, b</w>} = 2, so the minimum admissible target is 7.
        let err = BpeModel::train(&aaab_corpus(), 6).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(BpeModel::train(&aaab_corpus(), 7).is_ok());
    }

    #[test]
    fn training_is_deterministic() {
        let c = corpus(&["the cat sat", "the bat sat", "a cat sat on the mat"]);
        let a = BpeModel::train(&c, 30).unwrap();
        let b = BpeModel::train(&c, 30).unwrap();
        assert_eq!(a.merges(), b.merges());
        assert_eq!(a.vocab, b.vocab);
    }

    #[test]
    fn encode_empty_sentence() {
        let model = BpeModel::train(&aaab_corpus(), 8).unwrap();
        assert_eq!(model.encode(""), vec![BOS_ID, EOS_ID]);
    }

    #[test]
    fn encode_single_character_word() {
        let c = corpus(&["a b", "a b", "a"]);
        let model = BpeModel::train(&c, 7).unwrap();
        let id = model.token_id("a</w>").unwrap();
        assert_eq!(model.encode("a"), vec![BOS_ID, id, EOS_ID]);
    }

    #[test]
    fn encode_matches_hand_applied_merges() {
        let model = BpeModel::train(&aaab_corpus(), 8).unwrap();
        // [a,a,a,b</w>] --(a,a)--> [aa,a,b</w>] --(a,b</w>)--> [aa, ab</w>]
        let aa = model.token_id("aa").unwrap();
        let ab = model.token_id("ab</w>").unwrap();
        assert_eq!(model.encode("aaab"), vec![BOS_ID, aa, ab, EOS_ID]);
    }

    #[test]
    fn unknown_characters_map_to_unk() {
        let model = BpeModel::train(&aaab_corpus(), 8).unwrap();
        let ids = model.encode("axa");
        assert!(ids.contains(&UNK_ID));
    }

    #[test]
    fn pair_encoding_inserts_sep() {
        let model = BpeModel::train(&aaab_corpus(), 8).unwrap();
        let ids = model.encode_pair("aaab", "aaab");
        assert_eq!(ids[0], BOS_ID);
        assert_eq!(*ids.last().unwrap(), EOS_ID);
        assert_eq!(ids.iter().filter(|&&t| t == SEP_ID).count(), 1);
    }

    #[test]
    fn save_load_roundtrip() {
        let c = corpus(&["the cat sat", "the bat sat on a mat"]);
        let model = BpeModel::train(&c, 40).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bpe.txt");
        model.save(&path).unwrap();
        let loaded = BpeModel::load(&path).unwrap();
        assert_eq!(model, loaded);
    }

    #[test]
    fn encode_is_pure() {
        let c = corpus(&["the cat sat on the mat"]);
        let model = BpeModel::train(&c, 30).unwrap();
        assert_eq!(model.encode("the cat"), model.encode("the cat"));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn sentences() -> impl Strategy<Value = Vec<String>> {
            proptest::collection::vec("[a-d]{1,6}( [a-d]{1,6}){0,5}", 1..8)
        }

        proptest! {
            #[test]
            fn decode_reproduces_in_charset_sentences(lines in sentences(), extra in "[a-d]{1,6}( [a-d]{1,6}){0,3}") {
                // Cover every character both word-internally and word-finally
                // so any [a-d] sentence stays inside the charset.
                let mut all = lines.clone();
                all.push("abcd bcda cdab dabc".to_string());
                let corpus = Corpus::from_lines(all).unwrap();
                let model = BpeModel::train(&corpus, 64).unwrap();
                for line in lines.iter().chain(std::iter::once(&extra)) {
                    let ids = model.encode(line);
                    prop_assert_eq!(model.decode(&ids), line.clone());
                }
            }
        }
    }
}
