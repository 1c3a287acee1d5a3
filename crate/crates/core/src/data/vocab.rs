//! Question and answer vocabularies.

use std::collections::{BTreeSet, HashMap};

use crate::data::QaInstance;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;

/// Ordered token list with reverse lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Maps words to ids, lowercasing first; unknown words become UNK.
    pub fn encode_question(&self, words: &[String]) -> Vec<usize> {
        words.iter().map(|w| self.get(&w.to_lowercase()).unwrap_or(UNK_ID)).collect()
    }

    /// One token per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Self {
        Self::from_tokens(text.lines().map(str::to_string).collect())
    }
}

/// Question vocab: PAD, UNK, then sorted unique lowercase tokens.
/// Answer vocab: sorted unique answers.
pub fn build_vocab<'a>(instances: impl IntoIterator<Item = &'a QaInstance>) -> (Vocab, Vocab) {
    let mut words = BTreeSet::new();
    let mut answers = BTreeSet::new();
    for q in instances {
        words.extend(q.tokens.iter().map(|t| t.to_lowercase()));
        answers.insert(q.answer.clone());
    }
    words.remove(PAD);
    words.remove(UNK);
    let mut question = vec![PAD.to_string(), UNK.to_string()];
    question.extend(words);
    (Vocab::from_tokens(question), Vocab::from_tokens(answers.into_iter().collect()))
}
