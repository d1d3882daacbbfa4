use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::review::Review;
use crate::error::{bail, Result};

pub const END_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const END_TOKEN: &str = "END";
pub const UNK_TOKEN: &str = "UNK";

/// Token/id mapping with `END` (padding) at 0 and `UNK` at 1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    /// Vocabulary over the given non-reserved tokens, in order.
    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Result<Self> {
        let mut all = vec![END_TOKEN.to_string(), UNK_TOKEN.to_string()];
        for t in tokens {
            if t == END_TOKEN || t == UNK_TOKEN {
                bail!(Argument, "`{t}` is reserved");
            }
            all.push(t);
        }
        let v = Vocab::from(all);
        if v.index.len() != v.tokens.len() {
            bail!(Argument, "duplicate tokens in vocabulary");
        }
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map_or(UNK_TOKEN, String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Builds a vocabulary from token frequencies. Tokens seen fewer than
/// `min_freq` times map to `UNK`. Ids are assigned by descending frequency,
/// ties broken lexicographically.
pub fn build_vocab(corpus: &[Review], min_freq: usize) -> Result<Vocab> {
    if corpus.is_empty() {
        bail!(Argument, "cannot build a vocabulary from an empty corpus");
    }
    if min_freq == 0 {
        bail!(Argument, "min_freq must be at least 1");
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for r in corpus {
        for t in &r.tokens {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(t, c)| c >= min_freq && t != END_TOKEN && t != UNK_TOKEN)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Vocab::from_tokens(kept.into_iter().map(|(t, _)| t.to_string()))
}

/// Fixed-length id sequence, `END`-padded after `true_length`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSeq {
    ids: Vec<usize>,
    true_length: usize,
}

impl TokenSeq {
    pub fn new(ids: Vec<usize>, true_length: usize) -> Result<Self> {
        if true_length > ids.len() {
            bail!(Argument, "true length {true_length} exceeds sequence length {}", ids.len());
        }
        if ids[true_length..].iter().any(|&i| i != END_ID) {
            bail!(Argument, "padding after the true length must be END");
        }
        if ids[..true_length].contains(&END_ID) {
            bail!(Argument, "END inside the content prefix");
        }
        Ok(Self { ids, true_length })
    }

    /// Pads `content` (which must not contain `END`) to `max_len`.
    pub fn padded(content: &[usize], max_len: usize) -> Result<Self> {
        if content.len() > max_len {
            bail!(Argument, "{} tokens exceed length {max_len}", content.len());
        }
        let mut ids = content.to_vec();
        ids.resize(max_len, END_ID);
        Self::new(ids, content.len())
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn content(&self) -> &[usize] {
        &self.ids[..self.true_length]
    }

    pub fn true_length(&self) -> usize {
        self.true_length
    }

    pub fn max_len(&self) -> usize {
        self.ids.len()
    }

    /// Number of generation decisions that produced this sequence: the
    /// content tokens plus the terminating `END`, unless the sequence fills
    /// every slot.
    pub fn n_actions(&self) -> usize {
        (self.true_length + 1).min(self.ids.len())
    }
}

/// Encodes a review into `max_len` ids. Unknown tokens become `UNK`.
pub fn encode(review: &Review, vocab: &Vocab, max_len: usize) -> Result<TokenSeq> {
    if review.tokens.len() >= max_len {
        return Err(crate::Error::Length {
            tokens: review.tokens.len(),
            max_len,
        });
    }
    let ids: Vec<usize> = review.tokens.iter().map(|t| vocab.id(t)).collect();
    TokenSeq::padded(&ids, max_len)
}

/// Tokens of the non-`END` prefix.
pub fn decode(seq: &TokenSeq, vocab: &Vocab) -> Vec<String> {
    seq.content()
        .iter()
        .map(|&i| vocab.token(i).to_string())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::review::Label;

    fn review(text: &str) -> Review {
        Review {
            review_id: "r".into(),
            item_id: None,
            user_id: None,
            date: None,
            tokens: text.split_whitespace().map(String::from).collect(),
            score: 5,
            label: Label::Genuine,
        }
    }

    #[test]
    fn min_freq_maps_rare_tokens_to_unk() {
        let v = build_vocab(&[review("a a b")], 2).unwrap();
        assert_eq!(v.tokens(), &["END", "UNK", "a"]);
        assert_eq!(v.id("b"), UNK_ID);
        let all = build_vocab(&[review("a a b")], 1).unwrap();
        assert_eq!(all.len(), 4);
        assert_ne!(all.id("b"), UNK_ID);
    }

    #[test]
    fn build_vocab_rejects_bad_input() {
        assert!(build_vocab(&[], 1).is_err());
        assert!(build_vocab(&[review("a")], 0).is_err());
    }

    #[test]
    fn encode_pads_with_end() {
        let v = build_vocab(&[review("x y z")], 1).unwrap();
        let s = encode(&review("x y z"), &v, 400).unwrap();
        assert_eq!(s.true_length(), 3);
        assert_eq!(s.ids().len(), 400);
        assert_eq!(s.ids()[3..].iter().filter(|&&i| i == END_ID).count(), 397);
    }

    #[test]
    fn encode_one_short_appends_single_end() {
        let v = build_vocab(&[review("a b c")], 1).unwrap();
        let s = encode(&review("a b c"), &v, 4).unwrap();
        assert_eq!(s.ids()[3], END_ID);
        assert_eq!(s.n_actions(), 4);
        assert!(matches!(
            encode(&review("a b c d"), &v, 4),
            Err(crate::Error::Length { tokens: 4, max_len: 4 })
        ));
    }

    #[test]
    fn decode_inverts_encode_up_to_unk() {
        let v = build_vocab(&[review("a a b")], 2).unwrap();
        let s = encode(&review("a b a q"), &v, 8).unwrap();
        assert_eq!(decode(&s, &v), vec!["a", "UNK", "a", "UNK"]);
    }

    #[test]
    fn token_seq_invariants() {
        assert!(TokenSeq::new(vec![3, 0, 4], 1).is_err());
        assert!(TokenSeq::new(vec![3, 0, 0], 4).is_err());
        assert!(TokenSeq::new(vec![0, 3], 2).is_err());
        let full = TokenSeq::new(vec![2, 3], 2).unwrap();
        assert_eq!(full.n_actions(), 2);
    }

    #[test]
    fn vocab_serde_round_trip() {
        let v = build_vocab(&[review("p q q r")], 1).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocab = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.id("q"), v.id("q"));
    }

    proptest::proptest! {
        #[test]
        fn encode_decode_identity_on_known_tokens(words in proptest::collection::vec("[a-e]{1,3}", 1..20)) {
            let r = review(&words.join(" "));
            let v = build_vocab(std::slice::from_ref(&r), 1).unwrap();
            let s = encode(&r, &v, 32).unwrap();
            proptest::prop_assert_eq!(decode(&s, &v), r.tokens);
        }
    }
}
