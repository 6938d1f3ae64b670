//! Tokenization and small text utilities shared by ingestion, scoring and
//! response composition.
//!
//! Tokens are maximal runs of alphanumeric characters, lowercased. Everything
//! else (whitespace and punctuation) separates tokens and is dropped.

use std::collections::BTreeSet;
use std::ops::Range;

/// Byte ranges of every token in `text`, in order.
pub fn token_spans(text: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            if start.is_none() {
                start = Some(i);
            }
        } else if let Some(s) = start.take() {
            spans.push(s..i);
        }
    }
    if let Some(s) = start {
        spans.push(s..text.len());
    }
    spans
}

pub fn tokenize(text: &str) -> Vec<String> {
    token_spans(text)
        .into_iter()
        .map(|r| text[r].to_lowercase())
        .collect()
}

pub fn token_count(text: &str) -> usize {
    token_spans(text).len()
}

pub fn token_set(text: &str) -> BTreeSet<String> {
    tokenize(text).into_iter().collect()
}

/// Common English function words that carry no subject matter.
pub const STOPWORDS: &[&str] = &[
    "a", "about", "after", "again", "all", "also", "am", "an", "and", "any", "are", "as", "at", "be", "because",
    "been", "before", "being", "both", "but", "by", "can", "could", "did", "do", "does", "doing", "done", "down",
    "each", "few", "for", "from", "get", "got", "had", "has", "have", "he", "her", "here", "him", "his", "how", "i",
    "if", "in", "into", "is", "it", "its", "just", "me", "more", "most", "my", "no", "not", "now", "of", "on",
    "once", "only", "or", "other", "our", "out", "over", "own", "same", "she", "should", "so", "some", "such",
    "than", "that", "the", "their", "them", "then", "there", "these", "they", "this", "those", "through", "to",
    "too", "under", "until", "up", "us", "very", "was", "we", "were", "what", "when", "where", "which", "while",
    "who", "why", "will", "with", "would", "you", "your",
];

/// Distinct tokens of `text` that are neither stopwords nor single
/// characters.
pub fn content_token_set(text: &str) -> BTreeSet<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| t.chars().count() > 1 && STOPWORDS.binary_search(&t.as_str()).is_err())
        .collect()
}

/// Kind of break found in the gap between two adjacent tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Gap {
    None,
    Sentence,
    Paragraph,
}

/// Classify the separator text between two tokens.
pub fn classify_gap(gap: &str) -> Gap {
    if gap.contains('\u{c}') || has_blank_line(gap) {
        return Gap::Paragraph;
    }
    let mut seen_terminal = false;
    for c in gap.chars() {
        if matches!(c, '.' | '!' | '?') {
            seen_terminal = true;
        } else if seen_terminal && c.is_whitespace() {
            return Gap::Sentence;
        }
    }
    Gap::None
}

fn has_blank_line(gap: &str) -> bool {
    let mut lines = gap.split('\n');
    lines.next();
    // any line strictly between two newlines that is blank
    let rest: Vec<&str> = lines.collect();
    rest.len() >= 2 && rest[..rest.len() - 1].iter().any(|l| l.trim().is_empty())
}

/// Byte offsets where sentences end (exclusive), covering the whole string.
///
/// Each returned range is one sentence including its terminal punctuation;
/// separating whitespace is not part of any range.
pub fn sentence_ranges(text: &str) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut start = skip_ws(text, 0);
    let mut i = start;
    while i < text.len() {
        let c = text[i..].chars().next().unwrap();
        let next = i + c.len_utf8();
        let terminal = matches!(c, '.' | '!' | '?');
        let newline_break = c == '\n' && next < text.len() && bytes[next] == b'\n';
        if terminal {
            let mut j = next;
            while j < text.len() && matches!(bytes[j], b'.' | b'!' | b'?' | b'"' | b'\'' | b')') {
                j += 1;
            }
            if j == text.len() || text[j..].starts_with(char::is_whitespace) {
                out.push(start..j);
                start = skip_ws(text, j);
                i = start;
                continue;
            }
        } else if newline_break {
            let end = text[start..i].trim_end().len() + start;
            if end > start {
                out.push(start..end);
            }
            start = skip_ws(text, next);
            i = start;
            continue;
        }
        i = next;
    }
    if start < text.len() {
        let end = text[start..].trim_end().len() + start;
        if end > start {
            out.push(start..end);
        }
    }
    out
}

fn skip_ws(text: &str, mut i: usize) -> usize {
    while i < text.len() {
        let c = text[i..].chars().next().unwrap();
        if !c.is_whitespace() {
            break;
        }
        i += c.len_utf8();
    }
    i
}

/// Find phrases from `vocabulary` that occur in `text` as whole token
/// sequences, case-insensitively.
pub fn match_phrases<'a, I>(text: &str, vocabulary: I) -> BTreeSet<String>
where
    I: IntoIterator<Item = &'a String>,
{
    let tokens = tokenize(text);
    let mut found = BTreeSet::new();
    for phrase in vocabulary {
        let needle = tokenize(phrase);
        if needle.is_empty() || needle.len() > tokens.len() {
            continue;
        }
        if tokens.windows(needle.len()).any(|w| w == needle.as_slice()) {
            found.insert(phrase.clone());
        }
    }
    found
}

/// 64-bit FNV-1a. Stable across platforms and releases, unlike `DefaultHasher`.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stopwords_are_sorted_and_filtered() {
        assert!(STOPWORDS.windows(2).all(|w| w[0] < w[1]));
        let got: Vec<String> = content_token_set("Return len(a) and you are done, X2").into_iter().collect();
        assert_eq!(got, ["len", "return", "x2"]);
    }

    #[test]
    fn tokenizes_on_whitespace_and_punctuation() {
        assert_eq!(
            tokenize("Jaccard similarity: |A∩B| / |A∪B|, e.g. 0.5!"),
            vec!["jaccard", "similarity", "a", "b", "a", "b", "e", "g", "0", "5"]
        );
        assert!(tokenize("  ... --- ").is_empty());
    }

    #[test]
    fn spans_slice_back_to_tokens() {
        let text = "Héllo, wörld  42";
        let spans = token_spans(text);
        let words: Vec<&str> = spans.iter().map(|r| &text[r.clone()]).collect();
        assert_eq!(words, vec!["Héllo", "wörld", "42"]);
    }

    #[test]
    fn gap_classification() {
        assert_eq!(classify_gap(" "), Gap::None);
        assert_eq!(classify_gap(". "), Gap::Sentence);
        assert_eq!(classify_gap("."), Gap::None);
        assert_eq!(classify_gap(".\n\n"), Gap::Paragraph);
        assert_eq!(classify_gap("\n  \n"), Gap::Paragraph);
        assert_eq!(classify_gap("\n"), Gap::None);
    }

    #[test]
    fn sentences_cover_terminal_punctuation() {
        let text = "First one. Second one?  Third\n\nFourth";
        let got: Vec<&str> = sentence_ranges(text).into_iter().map(|r| &text[r]).collect();
        assert_eq!(got, vec!["First one.", "Second one?", "Third", "Fourth"]);
        let text = "Pi is 3.14 roughly. Done";
        let got: Vec<&str> = sentence_ranges(text).into_iter().map(|r| &text[r]).collect();
        assert_eq!(got, vec!["Pi is 3.14 roughly.", "Done"]);
    }

    #[test]
    fn phrase_matching_is_token_aligned() {
        let vocab = vec!["jaccard similarity".to_string(), "tf".to_string(), "idf".to_string()];
        let found = match_phrases("What is Jaccard similarity? Is it like tf-idf?", &vocab);
        assert_eq!(found.len(), 3);
        let found = match_phrases("jaccardsimilarity", &vocab);
        assert!(found.is_empty());
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }
}
