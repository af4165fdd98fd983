//! Single-turn listwise prompt construction and parsing of `[i] > [j]` replies.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::domain::{Document, Query};
use crate::error::{ListkError, Result};

const SYSTEM_MESSAGE: &str =
    "You are RankLLM, an intelligent assistant that can rank passages based on their relevancy to the query";

static VALIDATION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\[\d+\]( > \[\d+\])*$").unwrap());
static EXTRACTION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[(\d+)\]").unwrap());

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "user".into(),
            content: content.into(),
        }
    }
}

/// Builds the system message and user turn. Passages are numbered `1..=n` in
/// the given order and substituted verbatim.
pub fn build_prompt(query: &Query, docs: &[&Document]) -> Vec<ChatMessage> {
    build_prompt_with_hint(query, docs, None)
}

/// Like [`build_prompt`], optionally stating a known relative order of some
/// passages, given as 1-based positions from most to least relevant.
pub fn build_prompt_with_hint(
    query: &Query,
    docs: &[&Document],
    known_order: Option<&[usize]>,
) -> Vec<ChatMessage> {
    let num = docs.len();
    let q = &query.text;
    let mut user = format!(
        "I will provide you with {num} passages, each indicated by a numerical identifier []. \
         Rank the passages based on their relevance to the search query: {q}.\n"
    );
    for (i, d) in docs.iter().enumerate() {
        user.push_str(&format!("[{}] {}\n", i + 1, d.text));
    }
    user.push_str(&format!(
        "Search Query: {q}.\nRank the {num} passages above based on their relevance to the search query. \
         All the passages should be included and listed using identifiers, in descending order of relevance. \
         The output format should be [] > [], e.g., [2] > [1], Answer concisely and directly and only \
         respond with the ranking results, do not say any word or explain."
    ));
    if let Some(order) = known_order.filter(|o| o.len() > 1) {
        let chain: Vec<String> = order.iter().map(|p| format!("[{p}]")).collect();
        user.push_str(&format!(
            " It is already known that {} in relevance; keep these passages in that relative order.",
            chain.join(" > ")
        ));
    }
    vec![ChatMessage::system(SYSTEM_MESSAGE), ChatMessage::user(user)]
}

/// A reply reduced to 1-based passage positions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedRanking {
    /// A permutation of `1..=n`, most relevant first.
    pub positions: Vec<usize>,
    /// Whether the reply matched the strict `[i] > [j] > ...` format.
    pub well_formed: bool,
}

/// Extracts a ranking of `n` passages from model output.
///
/// Out-of-range indices are ignored, repeated ones keep their first
/// occurrence and missing ones are appended in input order. Fails only when
/// no usable index is present.
pub fn parse_llm_ranking(text: &str, n: usize) -> Result<ParsedRanking> {
    let trimmed = text.trim();
    let well_formed = VALIDATION.is_match(trimmed);
    let mut seen = vec![false; n + 1];
    let mut positions = Vec::with_capacity(n);
    for cap in EXTRACTION.captures_iter(trimmed) {
        if let Ok(p) = cap[1].parse::<usize>() {
            if (1..=n).contains(&p) && !seen[p] {
                seen[p] = true;
                positions.push(p);
            }
        }
    }
    if positions.is_empty() {
        return Err(ListkError::UnparsableRanking(text.to_string()));
    }
    positions.extend((1..=n).filter(|&p| !seen[p]));
    Ok(ParsedRanking {
        positions,
        well_formed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(texts: &[&str]) -> Vec<Document> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Document::new(i as u32, *t))
            .collect()
    }

    #[test]
    fn three_passage_prompt() {
        let d = docs(&["alpha", "beta", "gamma"]);
        let refs: Vec<_> = d.iter().collect();
        let m = build_prompt(&Query::new("1", "greek letters"), &refs);
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].role, "system");
        assert!(m[0].content.starts_with("You are RankLLM"));
        let u = &m[1].content;
        assert!(u.starts_with("I will provide you with 3 passages"));
        assert!(u.contains("[1] alpha\n[2] beta\n[3] gamma\n"));
        assert!(u.contains("Rank the 3 passages above"));
        assert!(u.contains("search query: greek letters."));
    }

    #[test]
    fn single_passage_prompt() {
        let d = docs(&["only"]);
        let m = build_prompt(&Query::new("1", "q"), &[&d[0]]);
        assert!(m[1].content.contains("with 1 passages"));
        assert!(m[1].content.contains("[1] only\n"));
    }

    #[test]
    fn text_is_not_escaped() {
        let d = docs(&["see [2] > [1]"]);
        let m = build_prompt(&Query::new("1", "q"), &[&d[0]]);
        assert!(m[1].content.contains("[1] see [2] > [1]\n"));
    }

    #[test]
    fn hint_lists_known_order() {
        let d = docs(&["a", "b", "c"]);
        let refs: Vec<_> = d.iter().collect();
        let m = build_prompt_with_hint(&Query::new("1", "q"), &refs, Some(&[1, 2]));
        assert!(m[1].content.contains("[1] > [2] in relevance"));
    }

    #[test]
    fn parses_well_formed() {
        let p = parse_llm_ranking("[2] > [1] > [3]", 3).unwrap();
        assert_eq!(p.positions, vec![2, 1, 3]);
        assert!(p.well_formed);
        assert_eq!(parse_llm_ranking("[1]", 1).unwrap().positions, vec![1]);
    }

    #[test]
    fn dedups_and_completes() {
        let p = parse_llm_ranking("[2] > [2]", 3).unwrap();
        assert_eq!(p.positions, vec![2, 1, 3]);
        assert!(p.well_formed);
    }

    #[test]
    fn tolerates_chatter_but_flags_it() {
        let p = parse_llm_ranking("Sure! [3] > [9] > [1]", 3).unwrap();
        assert_eq!(p.positions, vec![3, 1, 2]);
        assert!(!p.well_formed);
    }

    #[test]
    fn no_index_is_failure() {
        assert!(parse_llm_ranking("I cannot rank these.", 3).is_err());
        assert!(parse_llm_ranking("[0] > [7]", 3).is_err());
    }
}
