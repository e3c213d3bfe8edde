//! Token counting.
//!
//! Metrics and budget accounting need token counts that are deterministic and
//! independent of any model provider. The default tokenizer treats a maximal
//! run of alphanumeric characters as one token and every other non-whitespace
//! character as its own token. Deployments that know the real model tokenizer
//! can plug in exact counts through the [`Tokenizer`] trait; nothing downstream
//! assumes a particular scheme beyond the trait contract.

/// Counts tokens in a piece of text. Implementations must be pure: the same
/// input always yields the same count.
pub trait Tokenizer: Send + Sync {
    fn count(&self, text: &str) -> u64;
}

/// Splits on whitespace and punctuation: alphanumeric runs are single tokens,
/// every other visible character counts as one token by itself.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WordPunctTokenizer;

impl Tokenizer for WordPunctTokenizer {
    fn count(&self, text: &str) -> u64 {
        let mut tokens = 0u64;
        let mut in_word = false;
        for ch in text.chars() {
            if ch.is_alphanumeric() {
                if !in_word {
                    tokens += 1;
                    in_word = true;
                }
            } else {
                in_word = false;
                if !ch.is_whitespace() {
                    tokens += 1;
                }
            }
        }
        tokens
    }
}

/// Counts tokens with the given tokenizer.
pub fn count_tokens(text: &str, tokenizer: &dyn Tokenizer) -> u64 {
    tokenizer.count(text)
}

/// Splits text into lowercase alphanumeric tokens. Shared by the intent
/// classifier, the hashing embedder, and the stub judge so that they agree on
/// what a "term" is.
pub fn lexical_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            out.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}
