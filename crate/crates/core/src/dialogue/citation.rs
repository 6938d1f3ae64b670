use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{InstructionalUnit, Resource, SourceLocator};
use crate::text;

/// Longest excerpt, in characters.
pub const MAX_EXCERPT_CHARS: usize = 400;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Citation {
    pub unit_id: String,
    pub display_label: String,
    /// Contiguous verbatim substring of the unit text.
    pub excerpt: String,
}

/// `HH:MM:SS` from milliseconds, truncating fractional seconds.
pub fn format_clock(ms: u64) -> String {
    let s = ms / 1000;
    format!("{:02}:{:02}:{:02}", s / 3600, (s / 60) % 60, s % 60)
}

/// Human-readable location of a unit within its resource.
pub fn display_label(resource: &Resource, locator: &SourceLocator) -> String {
    let title = &resource.title;
    match locator {
        SourceLocator::TimeSpan(t) => {
            format!("{title}, {}\u{2013}{}", format_clock(t.start_ms), format_clock(t.end_ms))
        }
        SourceLocator::PageRange { start, end } if start == end => format!("{title}, p. {start}"),
        SourceLocator::PageRange { start, end } => format!("{title}, pp. {start}\u{2013}{end}"),
        SourceLocator::SlideNumber { n } => format!("{title}, slide {n}"),
        SourceLocator::SectionPath { headings } if headings.is_empty() => title.clone(),
        SourceLocator::SectionPath { headings } => format!("{title}, {}", headings.join(" > ")),
    }
}

/// Build the citation for `unit`, quoting the passage that best matches the
/// query terms.
pub fn render_citation(unit: &InstructionalUnit, resource: &Resource, query_terms: &[String]) -> Citation {
    Citation {
        unit_id: unit.id.clone(),
        display_label: display_label(resource, &unit.locator),
        excerpt: select_excerpt(&unit.text, query_terms).to_string(),
    }
}

/// The sentence sharing the most terms with the query (earliest on ties),
/// extended with following sentences of the same paragraph while the whole
/// stays within [`MAX_EXCERPT_CHARS`]. A single over-long sentence is cut at
/// a word boundary.
pub fn select_excerpt<'t>(unit_text: &'t str, query_terms: &[String]) -> &'t str {
    let sentences = text::sentence_ranges(unit_text);
    if sentences.is_empty() {
        return truncate_words(unit_text.trim(), MAX_EXCERPT_CHARS);
    }
    let terms: BTreeSet<&str> = query_terms.iter().map(String::as_str).collect();
    let is_heading = |r: &std::ops::Range<usize>| unit_text[r.clone()].starts_with('#');
    // headings only when there is nothing else to quote
    let mut best = sentences.iter().position(|r| !is_heading(r)).unwrap_or(0);
    let mut best_hits = 0;
    for (i, r) in sentences.iter().enumerate() {
        if is_heading(r) {
            continue;
        }
        let hits = text::token_set(&unit_text[r.clone()])
            .iter()
            .filter(|t| terms.contains(t.as_str()))
            .count();
        if hits > best_hits {
            best = i;
            best_hits = hits;
        }
    }
    let start = sentences[best].start;
    let mut end = sentences[best].end;
    if unit_text[start..end].chars().count() > MAX_EXCERPT_CHARS {
        return truncate_words(&unit_text[start..end], MAX_EXCERPT_CHARS);
    }
    for next in &sentences[best + 1..] {
        let gap = &unit_text[end..next.start];
        if text::classify_gap(gap) == text::Gap::Paragraph || gap.contains("\n\n") {
            break;
        }
        if unit_text[start..next.end].chars().count() > MAX_EXCERPT_CHARS {
            break;
        }
        end = next.end;
    }
    &unit_text[start..end]
}

/// Prefix of at most `max` characters, ending at a word boundary when one
/// exists.
fn truncate_words(s: &str, max: usize) -> &str {
    let Some((cut, _)) = s.char_indices().nth(max) else {
        return s;
    };
    let head = &s[..cut];
    // the char at `cut` starting a new word means head already ends on one
    if s[cut..].starts_with(char::is_whitespace) {
        return head.trim_end();
    }
    match head.rfind(char::is_whitespace) {
        Some(ws) if !head[..ws].trim_end().is_empty() => head[..ws].trim_end(),
        _ => head,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::resource;
    use crate::corpus::{ResourceKind, TimeSpan};

    #[test]
    fn labels() {
        let mut lecture = resource("lec7", ResourceKind::Transcript);
        lecture.title = "Lecture 7".into();
        let t = SourceLocator::TimeSpan(TimeSpan::from_secs(750, 845).unwrap());
        assert_eq!(display_label(&lecture, &t), "Lecture 7, 00:12:30\u{2013}00:14:05");

        let mut book = resource("book", ResourceKind::Textbook);
        book.title = "Textbook ch. 3".into();
        assert_eq!(
            display_label(&book, &SourceLocator::PageRange { start: 41, end: 43 }),
            "Textbook ch. 3, pp. 41\u{2013}43"
        );
        assert_eq!(display_label(&book, &SourceLocator::PageRange { start: 9, end: 9 }), "Textbook ch. 3, p. 9");
        assert!(display_label(&book, &SourceLocator::SlideNumber { n: 12 }).ends_with("slide 12"));
        let path = SourceLocator::SectionPath {
            headings: vec!["Sets".into(), "Jaccard".into()],
        };
        assert_eq!(display_label(&book, &path), "Textbook ch. 3, Sets > Jaccard");
        assert_eq!(display_label(&book, &SourceLocator::SectionPath { headings: vec![] }), "Textbook ch. 3");
        assert_eq!(format_clock(3_600_000 * 10 + 59_999), "10:00:59");
    }

    fn terms(q: &str) -> Vec<String> {
        text::tokenize(q)
    }

    #[test]
    fn picks_matching_sentence() {
        let t = "Sets are collections. The Jaccard index compares two sets. It divides sizes.\n\nUnrelated paragraph here.";
        assert_eq!(
            select_excerpt(t, &terms("jaccard")),
            "The Jaccard index compares two sets. It divides sizes."
        );
        assert_eq!(select_excerpt(t, &terms("nothing matches")), "Sets are collections. The Jaccard index compares two sets. It divides sizes.");
    }

    #[test]
    fn headings_are_not_quoted() {
        let t = "## Part A: Jaccard Similarity\n\nWrite a function that returns the ratio.";
        assert_eq!(select_excerpt(t, &terms("jaccard similarity")), "Write a function that returns the ratio.");
        assert_eq!(select_excerpt("# Only a heading", &[]), "# Only a heading");
    }

    #[test]
    fn five_hundred_chars_cut_at_sentence() {
        let sentence = "Overlap of two sets is measured by the Jaccard index.";
        let text: String = (0..10).map(|_| sentence).collect::<Vec<_>>().join(" ");
        assert!(text.len() >= 500);
        let e = select_excerpt(&text, &[]);
        assert_eq!(e.len(), 7 * sentence.len() + 6);
        assert!(e.ends_with("index."));
        assert!(text.starts_with(e));
    }

    #[test]
    fn long_sentence_cut_at_word() {
        let text = "word ".repeat(120);
        let e = select_excerpt(&text, &[]);
        assert!(e.chars().count() <= MAX_EXCERPT_CHARS);
        assert!(e.ends_with("word"));
        let glued = "x".repeat(600);
        assert_eq!(select_excerpt(&glued, &[]).chars().count(), 400);
        let multibyte = "é".repeat(500);
        assert_eq!(select_excerpt(&multibyte, &[]).chars().count(), 400);
    }
}
