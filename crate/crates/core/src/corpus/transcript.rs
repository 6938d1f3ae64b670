//! WebVTT-compatible cue parsing.

use std::path::Path;

use super::{CorpusError, TimeSpan};
use crate::text;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cue {
    pub span: TimeSpan,
    pub text: String,
    /// 1-based line number of the cue's timing line.
    pub line_no: usize,
}

pub fn parse_transcript(path: impl AsRef<Path>) -> Result<Vec<Cue>, CorpusError> {
    let raw = super::read_file(path.as_ref())?;
    parse_transcript_str(&raw)
}

/// Parse cue blocks. A leading `WEBVTT` header and `NOTE`/`STYLE`/`REGION`
/// blocks are skipped; cue identifiers and cue settings are accepted and
/// ignored. Cues must be ordered and non-overlapping.
pub fn parse_transcript_str(raw: &str) -> Result<Vec<Cue>, CorpusError> {
    let normalized = super::normalize_source(raw);
    let lines: Vec<&str> = normalized.split('\n').collect();

    let mut cues: Vec<Cue> = Vec::new();
    let mut i = 0;
    if lines.first().is_some_and(|l| l.trim_start().starts_with("WEBVTT")) {
        while i < lines.len() && !lines[i].trim().is_empty() {
            i += 1;
        }
    }

    while i < lines.len() {
        if lines[i].trim().is_empty() {
            i += 1;
            continue;
        }
        let block_start = i;
        let mut end = i;
        while end < lines.len() && !lines[end].trim().is_empty() {
            end += 1;
        }
        let block = &lines[block_start..end];
        i = end;

        let first = block[0].trim_start();
        if first.starts_with("NOTE") || first.starts_with("STYLE") || first.starts_with("REGION") {
            continue;
        }

        let timing_idx = match block.iter().take(2).position(|l| l.contains("-->")) {
            Some(p) => p,
            None => return Err(CorpusError::MalformedCue(block_start + 1)),
        };
        let line_no = block_start + timing_idx + 1;
        let span = parse_timing(block[timing_idx]).ok_or(CorpusError::MalformedCue(line_no))?;
        let body: Vec<&str> = block[timing_idx + 1..].iter().map(|l| l.trim_end()).collect();
        let text = body.join("\n");
        if text::token_count(&text) == 0 {
            return Err(CorpusError::MalformedCue(line_no));
        }
        if let Some(prev) = cues.last() {
            if span.start_ms < prev.span.end_ms {
                return Err(CorpusError::NonMonotonicTimestamps(line_no));
            }
        }
        cues.push(Cue { span, text, line_no });
    }
    Ok(cues)
}

/// Text the transcript's units are cut from: cue texts joined by newlines.
pub(crate) fn joined_text(cues: &[Cue]) -> String {
    cues.iter().map(|c| c.text.as_str()).collect::<Vec<_>>().join("\n")
}

fn parse_timing(line: &str) -> Option<TimeSpan> {
    let (left, right) = line.split_once("-->")?;
    let start = parse_timestamp(left.trim())?;
    let end = parse_timestamp(right.split_whitespace().next()?)?;
    TimeSpan::new(start, end)
}

/// `HH:MM:SS.mmm` or `MM:SS.mmm`, returning milliseconds.
fn parse_timestamp(s: &str) -> Option<u64> {
    let (clock, millis) = s.split_once(['.', ','])?;
    if millis.len() != 3 || !millis.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let parts: Vec<&str> = clock.split(':').collect();
    let (h, m, sec) = match parts.as_slice() {
        [h, m, s] => (*h, *m, *s),
        [m, s] => ("0", *m, *s),
        _ => return None,
    };
    let num = |v: &str, width: Option<usize>| -> Option<u64> {
        if v.is_empty() || !v.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        if width.is_some_and(|w| v.len() != w) {
            return None;
        }
        v.parse().ok()
    };
    let h = num(h, None)?;
    let m = num(m, Some(2))?;
    let sec = num(sec, Some(2))?;
    if m >= 60 || sec >= 60 {
        return None;
    }
    let ms: u64 = millis.parse().ok()?;
    Some(((h * 60 + m) * 60 + sec) * 1000 + ms)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_two_adjacent_cues() {
        let src = "WEBVTT\n\n00:00:00.000 --> 00:00:30.000\nA\n\n00:00:30.000 --> 00:01:00.000\nB\n";
        let cues = parse_transcript_str(src).unwrap();
        assert_eq!(cues.len(), 2);
        assert_eq!(cues[0].span, TimeSpan::from_secs(0, 30).unwrap());
        assert_eq!(cues[0].text, "A");
        assert_eq!(cues[1].span, TimeSpan::from_secs(30, 60).unwrap());
        assert_eq!(cues[1].text, "B");
    }

    #[test]
    fn end_before_start_is_malformed() {
        let src = "WEBVTT\n\n00:00:30.000 --> 00:00:10.000\nA\n";
        assert!(matches!(parse_transcript_str(src), Err(CorpusError::MalformedCue(3))));
    }

    #[test]
    fn overlapping_cue_is_non_monotonic() {
        let src = "WEBVTT\n\n00:00:00.000 --> 00:00:30.000\nA\n\n00:00:29.500 --> 00:00:40.000\nB\n";
        assert!(matches!(
            parse_transcript_str(src),
            Err(CorpusError::NonMonotonicTimestamps(6))
        ));
    }

    #[test]
    fn identifiers_notes_settings_and_short_clock() {
        let src = "WEBVTT - lecture\nKind: captions\n\nNOTE produced by hand\nsecond line\n\nintro\n00:05.250 --> 00:07.000 align:start\nHello <v Prof>there</v>\nsecond line\n\r\n01:00:00.000 --> 01:00:01.000\nlate\n";
        let cues = parse_transcript_str(src).unwrap();
        assert_eq!(cues.len(), 2);
        assert_eq!(cues[0].span, TimeSpan::new(5250, 7000).unwrap());
        assert_eq!(cues[0].text, "Hello <v Prof>there</v>\nsecond line");
        assert_eq!(cues[1].span.start_ms, 3_600_000);
    }

    #[test]
    fn garbage_timing_and_missing_text() {
        assert!(matches!(
            parse_transcript_str("00:00:xx.000 --> 00:00:01.000\nA\n"),
            Err(CorpusError::MalformedCue(1))
        ));
        assert!(matches!(
            parse_transcript_str("WEBVTT\n\njust text without timing\n"),
            Err(CorpusError::MalformedCue(3))
        ));
        assert!(matches!(
            parse_transcript_str("00:00:00.000 --> 00:00:01.000\n...\n"),
            Err(CorpusError::MalformedCue(1))
        ));
        assert!(matches!(
            parse_transcript_str("00:00:00.000 --> 00:61:00.000\nA\n"),
            Err(CorpusError::MalformedCue(1))
        ));
    }

    #[test]
    fn empty_input_gives_no_cues() {
        assert!(parse_transcript_str("WEBVTT\n").unwrap().is_empty());
    }
}
