//! Query/title normalization shared by every module that touches text.
//!
//! Pipeline: lowercase -> split on non-alphanumeric -> drop stop-words ->
//! suffix-strip stemming -> drop stop-words again (a strip can surface one).
//!
//! The stemmer is a fixed rule table, not Porter. Rules are tried in order
//! and re-applied until none fires, so the output is a fixed point:
//!
//!   1. strip "ing"  if at least 3 chars remain
//!   2. strip "ed"   if at least 3 chars remain
//!   3. strip "es"   if at least 3 chars remain
//!   4. strip "s"    if at least 3 chars remain and the word does not
//!      end in "ss"

use serde::{Deserialize, Serialize};

/// Shipped stop-word list (see data/stopwords_v1.txt).
pub const STOPWORDS_RAW: &str = include_str!("../../data/stopwords_v1.txt");

fn is_stopword(token: &str) -> bool {
    STOPWORDS_RAW
        .lines()
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .any(|w| w == token)
}

/// Ordered list of normalized terms produced by [`normalize`].
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenStream(pub Vec<String>);

impl TokenStream {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn join(&self) -> String {
        self.0.join(" ")
    }

    pub fn contains(&self, term: &str) -> bool {
        self.0.iter().any(|t| t == term)
    }
}

/// Strip one suffix per pass, repeating until no rule applies.
pub fn stem(word: &str) -> String {
    let mut w = word.to_string();
    loop {
        let before = w.len();
        if let Some(rest) = w.strip_suffix("ing") {
            if rest.chars().count() >= 3 {
                w = rest.to_string();
                continue;
            }
        }
        if let Some(rest) = w.strip_suffix("ed") {
            if rest.chars().count() >= 3 {
                w = rest.to_string();
                continue;
            }
        }
        if let Some(rest) = w.strip_suffix("es") {
            if rest.chars().count() >= 3 {
                w = rest.to_string();
                continue;
            }
        }
        if !w.ends_with("ss") {
            if let Some(rest) = w.strip_suffix('s') {
                if rest.chars().count() >= 3 {
                    w = rest.to_string();
                    continue;
                }
            }
        }
        if w.len() == before {
            break;
        }
    }
    w
}

pub fn normalize(text: &str) -> TokenStream {
    let lowered = text.to_lowercase();
    let tokens = lowered
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .filter(|t| !is_stopword(t))
        .map(stem)
        .filter(|t| !is_stopword(t))
        .collect();
    TokenStream(tokens)
}
