use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::corpus::LabeledExample;
use super::tokenize::{tokenize, TokenizerMode};
use crate::error::{Error, Result};
use crate::task::{Label, Task};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token/id map with the reserved pad and unknown ids and the fixed
/// sequence length every encoded example is padded or truncated to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "VocabFile", try_from = "VocabFile")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    fixing_length: usize,
    tokenizer: TokenizerMode,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VocabFile {
    tokens: Vec<String>,
    fixing_length: usize,
    tokenizer: TokenizerMode,
}

impl From<Vocabulary> for VocabFile {
    fn from(v: Vocabulary) -> Self {
        VocabFile { tokens: v.tokens, fixing_length: v.fixing_length, tokenizer: v.tokenizer }
    }
}

impl TryFrom<VocabFile> for Vocabulary {
    type Error = String;

    fn try_from(f: VocabFile) -> Result<Self, Self::Error> {
        if f.tokens.len() < 2 || f.tokens[PAD_ID] != PAD_TOKEN || f.tokens[UNK_ID] != UNK_TOKEN {
            return Err("vocabulary must start with <pad>, <unk>".into());
        }
        if f.fixing_length == 0 {
            return Err("fixing_length must be at least 1".into());
        }
        let index = f.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect::<HashMap<_, _>>();
        if index.len() != f.tokens.len() {
            return Err("duplicate vocabulary token".into());
        }
        Ok(Vocabulary { tokens: f.tokens, index, fixing_length: f.fixing_length, tokenizer: f.tokenizer })
    }
}

impl Vocabulary {
    /// Builds from tokenised sequences. Tokens seen fewer than `min_count`
    /// times map to the unknown id. Ids are assigned by descending frequency,
    /// ties broken lexicographically.
    pub fn build(sequences: &[Vec<String>], min_count: usize, fixing_length: usize, tokenizer: TokenizerMode) -> Result<Self> {
        if fixing_length == 0 {
            return Err(Error::invalid("fixing_length must be at least 1"));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for seq in sequences {
            for t in seq {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(t, c)| c >= min_count.max(1) && t != PAD_TOKEN && t != UNK_TOKEN)
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let tokens: Vec<String> = [PAD_TOKEN, UNK_TOKEN].into_iter().chain(ranked.into_iter().map(|(t, _)| t)).map(str::to_owned).collect();
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(Vocabulary { tokens, index, fixing_length, tokenizer })
    }

    /// Tokenises `examples`, sets the fixing length to the 99th percentile of
    /// their token counts and builds the vocabulary from them.
    pub fn from_examples(examples: &[LabeledExample], min_count: usize, tokenizer: TokenizerMode) -> Result<Self> {
        let sequences: Vec<Vec<String>> = examples.iter().map(|e| tokenize(&e.text, tokenizer)).collect();
        let lengths: Vec<usize> = sequences.iter().map(|s| s.len().max(1)).collect();
        let fixing_length = super::split::compute_fixing_length(&lengths)?;
        Self::build(&sequences, min_count, fixing_length, tokenizer)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn fixing_length(&self) -> usize {
        self.fixing_length
    }

    pub fn tokenizer(&self) -> TokenizerMode {
        self.tokenizer
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Pads or right-truncates to the fixing length. An empty token list is
    /// encoded as a single unknown token so every sequence has a position.
    pub fn encode_tokens(&self, tokens: &[String]) -> (Vec<usize>, usize) {
        let mut ids = vec![PAD_ID; self.fixing_length];
        if tokens.is_empty() {
            ids[0] = UNK_ID;
            return (ids, 1);
        }
        let n = tokens.len().min(self.fixing_length);
        for (slot, t) in ids.iter_mut().zip(&tokens[..n]) {
            *slot = self.id(t);
        }
        (ids, n)
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).unwrap_or(UNK_TOKEN).to_owned()).collect()
    }

    pub fn encode(&self, example: &LabeledExample) -> EncodedExample {
        let (token_ids, true_length) = self.encode_tokens(&tokenize(&example.text, self.tokenizer));
        EncodedExample { token_ids, true_length, labels: example.task_labels() }
    }

    pub fn encode_all(&self, examples: &[LabeledExample]) -> Vec<EncodedExample> {
        examples.iter().map(|e| self.encode(e)).collect()
    }
}

/// Model-ready example: fixed-length ids plus all three task labels.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedExample {
    pub token_ids: Vec<usize>,
    pub true_length: usize,
    pub labels: [Label; 3],
}

impl EncodedExample {
    pub fn label(&self, task: Task) -> Label {
        self.labels[task.index()]
    }

    pub fn one_hot(&self, task: Task) -> [f64; 3] {
        self.label(task).one_hot()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seqs(v: &[&str]) -> Vec<Vec<String>> {
        v.iter().map(|s| s.split_whitespace().map(str::to_owned).collect()).collect()
    }

    #[test]
    fn reserved_ids() {
        let v = Vocabulary::build(&seqs(&["b a a", "c a"]), 1, 4, TokenizerMode::Whitespace).unwrap();
        assert_eq!(v.id(PAD_TOKEN), PAD_ID);
        assert_eq!(v.id(UNK_TOKEN), UNK_ID);
        assert_eq!(v.id("a"), 2);
        assert_eq!(v.id("b"), 3);
        assert_eq!(v.id("zzz"), UNK_ID);
    }

    #[test]
    fn min_count_filters() {
        let v = Vocabulary::build(&seqs(&["b a a"]), 2, 4, TokenizerMode::Whitespace).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.id("b"), UNK_ID);
    }

    #[test]
    fn pads_and_truncates() {
        let v = Vocabulary::build(&seqs(&["a b c d e"]), 1, 3, TokenizerMode::Whitespace).unwrap();
        let (ids, n) = v.encode_tokens(&seqs(&["a b"])[0]);
        assert_eq!(n, 2);
        assert_eq!(ids[2], PAD_ID);
        let (ids, n) = v.encode_tokens(&seqs(&["a b c d e"])[0]);
        assert_eq!(n, 3);
        assert_eq!(v.decode(&ids), vec!["a", "b", "c"]);
        let (ids, n) = v.encode_tokens(&[]);
        assert_eq!((ids[0], n), (UNK_ID, 1));
    }

    #[test]
    fn serde_round_trip() {
        let v = Vocabulary::build(&seqs(&["x y"]), 1, 2, TokenizerMode::CharCjk).unwrap();
        let s = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&s).unwrap();
        assert_eq!(v, back);
    }

    proptest! {
        #[test]
        fn encode_decode_prefix(tokens in proptest::collection::vec("[a-e]{1,2}", 1..12), fix in 1usize..16) {
            let v = Vocabulary::build(std::slice::from_ref(&tokens), 1, fix, TokenizerMode::Whitespace).unwrap();
            let (ids, n) = v.encode_tokens(&tokens);
            prop_assert_eq!(ids.len(), fix);
            prop_assert!(ids[n..].iter().all(|&i| i == PAD_ID));
            prop_assert_eq!(v.decode(&ids[..n]), tokens[..n].to_vec());
        }
    }
}
