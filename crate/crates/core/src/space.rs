//! Discrete domains `S^D` and token vectors.
//!
//! Tokens are 0-based. When the source distribution is masked, the mask
//! symbol occupies the extra index `vocab`, so the working vocabulary has
//! `vocab + 1` entries while data tokens stay contiguous in `[0, vocab)`.

use crate::error::{Error, Result};

/// The product space `S^D`, optionally extended by a mask token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StateSpace {
    dims: usize,
    vocab: usize,
    mask_token: Option<usize>,
}

impl StateSpace {
    pub fn new(dims: usize, vocab: usize) -> Result<Self> {
        if dims == 0 {
            return Err(Error::config("state space needs at least one dimension"));
        }
        if vocab < 2 {
            return Err(Error::config(format!("vocabulary size {vocab} < 2")));
        }
        Ok(Self {
            dims,
            vocab,
            mask_token: None,
        })
    }

    /// Same space with the mask symbol appended at index `vocab`.
    pub fn with_mask(self) -> Self {
        Self {
            mask_token: Some(self.vocab),
            ..self
        }
    }

    /// Same space without a mask symbol.
    pub fn without_mask(self) -> Self {
        Self {
            mask_token: None,
            ..self
        }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Number of data tokens `|S|`.
    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn mask_token(&self) -> Option<usize> {
        self.mask_token
    }

    pub fn is_masked(&self) -> bool {
        self.mask_token.is_some()
    }

    /// `|S|`, or `|S| + 1` when a mask token is present.
    pub fn working_vocab(&self) -> usize {
        self.vocab + usize::from(self.mask_token.is_some())
    }

    pub fn is_data_token(&self, token: usize) -> bool {
        token < self.vocab
    }

    pub fn is_valid_token(&self, token: usize) -> bool {
        token < self.vocab || Some(token) == self.mask_token
    }

    pub fn check_token(&self, token: usize) -> Result<()> {
        if self.is_valid_token(token) {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "token {token} outside working vocabulary of size {}",
                self.working_vocab()
            )))
        }
    }

    pub fn check_state(&self, state: &State) -> Result<()> {
        if state.len() != self.dims {
            return Err(Error::domain(format!(
                "state has {} tokens, space has {} dimensions",
                state.len(),
                self.dims
            )));
        }
        state
            .tokens()
            .iter()
            .try_for_each(|&tok| self.check_token(tok))
    }

    /// Number of states over the working vocabulary, `None` on overflow.
    pub fn num_states(&self) -> Option<usize> {
        checked_pow(self.working_vocab(), self.dims)
    }

    /// Mixed-radix index over the working vocabulary, most-significant
    /// dimension first.
    pub fn encode(&self, state: &State) -> usize {
        encode_radix(state.tokens(), self.working_vocab())
    }

    pub fn decode(&self, index: usize) -> State {
        State::new(decode_radix(index, self.dims, self.working_vocab()))
    }

    /// The all-mask state, if the space has a mask token.
    pub fn all_mask(&self) -> Option<State> {
        self.mask_token.map(|m| State::new(vec![m; self.dims]))
    }
}

/// A length-`D` token vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State(Vec<usize>);

impl State {
    pub fn new(tokens: Vec<usize>) -> Self {
        Self(tokens)
    }

    pub fn tokens(&self) -> &[usize] {
        &self.0
    }

    pub fn tokens_mut(&mut self) -> &mut [usize] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, d: usize) -> usize {
        self.0[d]
    }

    pub fn set(&mut self, d: usize, token: usize) {
        self.0[d] = token;
    }

    /// Number of coordinates where the two states differ.
    pub fn hamming(&self, other: &State) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }

    pub fn into_tokens(self) -> Vec<usize> {
        self.0
    }
}

impl From<Vec<usize>> for State {
    fn from(tokens: Vec<usize>) -> Self {
        Self(tokens)
    }
}

pub(crate) fn checked_pow(base: usize, exp: usize) -> Option<usize> {
    (0..exp).try_fold(1usize, |acc, _| acc.checked_mul(base))
}

pub(crate) fn encode_radix(tokens: &[usize], radix: usize) -> usize {
    tokens.iter().fold(0, |acc, &t| acc * radix + t)
}

pub(crate) fn decode_radix(mut index: usize, len: usize, radix: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = index % radix;
        index /= radix;
    }
    out
}
