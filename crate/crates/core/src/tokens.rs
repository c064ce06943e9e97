use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("token id {token} at position {position} is outside vocabulary of size {vocab_size}")]
pub struct TokenOutOfVocab {
    pub token: usize,
    pub position: usize,
    pub vocab_size: usize,
}

/// A sequence of token ids over a fixed-size vocabulary.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    tokens: Vec<usize>,
    vocab_size: usize,
}

impl TokenSequence {
    pub fn new(tokens: Vec<usize>, vocab_size: usize) -> Result<Self, TokenOutOfVocab> {
        if let Some((position, &token)) = tokens.iter().enumerate().find(|(_, &t)| t >= vocab_size) {
            return Err(TokenOutOfVocab { token, position, vocab_size });
        }
        Ok(Self { tokens, vocab_size })
    }

    pub fn tokens(&self) -> &[usize] {
        &self.tokens
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn into_tokens(self) -> Vec<usize> {
        self.tokens
    }

    /// Empirical unigram distribution over the vocabulary.
    pub fn unigram_frequencies(&self) -> Vec<f64> {
        let mut counts = vec![0.0; self.vocab_size];
        for &t in &self.tokens {
            counts[t] += 1.0;
        }
        let n = self.tokens.len().max(1) as f64;
        counts.iter_mut().for_each(|c| *c /= n);
        counts
    }
}
