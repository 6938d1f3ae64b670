//! Splitting resources into instructional units.
//!
//! Text documents are first cut at Markdown headings into sections. A section
//! longer than `target_tokens` is cut into windows that end at the paragraph
//! break nearest the target size, else the nearest sentence end, else exactly
//! at the target. Windows inside one section overlap by `overlap_tokens`
//! tokens. No unit exceeds `2 * target_tokens` tokens.
//!
//! Units are exact byte slices of the normalized source, so the sources can
//! be rebuilt from the units by dropping each unit's overlap with its
//! predecessor. Slide decks are the exception: the `---` delimiter lines sit
//! between units and belong to none.

use std::ops::Range;

use super::{
    normalize_source, ByteSpan, CorpusError, Cue, InstructionalUnit, Resource, SegmentationConfig, SourceLocator,
};
use crate::text::{self, Gap};

struct Section {
    start: usize,
    end: usize,
    path: Vec<String>,
}

/// Segment a text-like resource (textbook, reading, notebook).
pub fn segment_text(
    resource: &Resource,
    text: &str,
    cfg: &SegmentationConfig,
) -> Result<Vec<InstructionalUnit>, CorpusError> {
    let text = normalize_source(text);
    let tokens = text::token_spans(&text);
    if tokens.is_empty() {
        return Err(CorpusError::EmptyDocument);
    }
    let page_breaks: Vec<usize> = text.match_indices('\u{c}').map(|(i, _)| i).collect();
    let paged = !page_breaks.is_empty();
    let page_of = |offset: usize| resource.first_page + page_breaks.partition_point(|&b| b < offset) as u32;

    let mut units = Vec::new();
    for section in sections(&text, &tokens) {
        let lo = tokens.partition_point(|t| t.start < section.start);
        let hi = tokens.partition_point(|t| t.start < section.end);
        let section_tokens = &tokens[lo..hi];
        if section_tokens.is_empty() {
            continue;
        }
        for (bytes, toks) in split_section(&text, section_tokens, section.start, section.end, cfg) {
            let locator = if paged {
                SourceLocator::PageRange {
                    start: page_of(toks.first().unwrap().start),
                    end: page_of(toks.last().unwrap().start),
                }
            } else {
                SourceLocator::SectionPath {
                    headings: section.path.clone(),
                }
            };
            let seq = units.len() as u32;
            units.push(InstructionalUnit::new(
                resource,
                seq,
                text[bytes.clone()].to_string(),
                ByteSpan {
                    start: bytes.start,
                    end: bytes.end,
                },
                locator,
            ));
        }
    }
    Ok(units)
}

/// Segment a slide deck. Slides are separated by lines consisting of `---`;
/// slide numbers start at 1 and empty slides produce no unit. Returns the
/// units and the slide count.
pub fn segment_slides(
    resource: &Resource,
    text: &str,
    cfg: &SegmentationConfig,
) -> Result<(Vec<InstructionalUnit>, u32), CorpusError> {
    let text = normalize_source(text);
    let tokens = text::token_spans(&text);
    if tokens.is_empty() {
        return Err(CorpusError::EmptyDocument);
    }

    let mut bodies: Vec<Range<usize>> = Vec::new();
    let mut body_start = 0;
    let mut line_start = 0;
    for line in text.split_inclusive('\n') {
        if line.trim() == "---" {
            bodies.push(body_start..line_start);
            body_start = line_start + line.len();
        }
        line_start += line.len();
    }
    bodies.push(body_start..text.len());

    let mut units = Vec::new();
    for (i, body) in bodies.iter().enumerate() {
        let lo = tokens.partition_point(|t| t.start < body.start);
        let hi = tokens.partition_point(|t| t.start < body.end);
        if lo == hi {
            continue;
        }
        for (bytes, _) in split_section(&text, &tokens[lo..hi], body.start, body.end, cfg) {
            let seq = units.len() as u32;
            units.push(InstructionalUnit::new(
                resource,
                seq,
                text[bytes.clone()].to_string(),
                ByteSpan {
                    start: bytes.start,
                    end: bytes.end,
                },
                SourceLocator::SlideNumber { n: i as u32 + 1 },
            ));
        }
    }
    Ok((units, bodies.len() as u32))
}

/// Group cues greedily into units spanning at most `transcript_window_s`.
/// A cue longer than the window forms a unit on its own.
pub fn segment_transcript(
    resource: &Resource,
    cues: &[Cue],
    cfg: &SegmentationConfig,
) -> Result<Vec<InstructionalUnit>, CorpusError> {
    if cues.is_empty() {
        return Err(CorpusError::EmptyTranscript);
    }
    let window = cfg.window_ms();
    let mut offsets = Vec::with_capacity(cues.len());
    let mut off = 0;
    for cue in cues {
        offsets.push(off);
        off += cue.text.len() + 1;
    }

    let mut units = Vec::new();
    let mut first = 0;
    while first < cues.len() {
        let start_ms = cues[first].span.start_ms;
        let mut last = first;
        while last + 1 < cues.len() && cues[last + 1].span.end_ms - start_ms <= window {
            last += 1;
        }
        let span = ByteSpan {
            start: offsets[first],
            end: offsets[last] + cues[last].text.len(),
        };
        let text = cues[first..=last]
            .iter()
            .map(|c| c.text.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        let locator = SourceLocator::TimeSpan(super::TimeSpan {
            start_ms,
            end_ms: cues[last].span.end_ms,
        });
        let seq = units.len() as u32;
        units.push(InstructionalUnit::new(resource, seq, text, span, locator));
        first = last + 1;
    }
    Ok(units)
}

fn heading(line: &str) -> Option<(usize, String)> {
    let level = line.bytes().take_while(|&b| b == b'#').count();
    if level == 0 || level > 6 {
        return None;
    }
    let rest = &line[level..];
    if !rest.starts_with([' ', '\t']) {
        return None;
    }
    let title = rest.trim().trim_end_matches('#').trim();
    (text::token_count(title) > 0).then(|| (level, title.to_string()))
}

/// Cut `text` at heading lines. Sections with no tokens besides their heading
/// are merged into the following section.
fn sections(text: &str, tokens: &[Range<usize>]) -> Vec<Section> {
    let mut raw: Vec<(usize, Vec<String>, usize)> = Vec::new(); // start, path, heading line end
    let mut stack: Vec<(usize, String)> = Vec::new();
    let mut offset = 0;
    let mut preamble = true;
    for line in text.split_inclusive('\n') {
        if let Some((level, title)) = heading(line.trim_end_matches('\n')) {
            if preamble && offset > 0 {
                raw.push((0, Vec::new(), 0));
            }
            preamble = false;
            stack.retain(|(l, _)| *l < level);
            stack.push((level, title));
            raw.push((offset, stack.iter().map(|(_, t)| t.clone()).collect(), offset + line.len()));
        }
        offset += line.len();
    }
    if raw.is_empty() || raw[0].0 != 0 {
        raw.insert(0, (0, Vec::new(), 0));
    }

    let tokens_in = |r: Range<usize>| {
        let lo = tokens.partition_point(|t| t.start < r.start);
        let hi = tokens.partition_point(|t| t.start < r.end);
        hi - lo
    };

    let mut out: Vec<Section> = Vec::new();
    let mut pending_start: Option<usize> = None;
    for (i, (start, path, heading_end)) in raw.iter().enumerate() {
        let end = raw.get(i + 1).map(|r| r.0).unwrap_or(text.len());
        let body_tokens = tokens_in(*heading_end..end);
        let start = pending_start.unwrap_or(*start);
        if body_tokens == 0 && i + 1 < raw.len() {
            pending_start = Some(start);
            continue;
        }
        pending_start = None;
        out.push(Section {
            start,
            end,
            path: path.clone(),
        });
    }
    out
}

/// Split one section into (byte range, tokens) windows.
fn split_section<'t>(
    text: &str,
    toks: &'t [Range<usize>],
    sec_start: usize,
    sec_end: usize,
    cfg: &SegmentationConfig,
) -> Vec<(Range<usize>, &'t [Range<usize>])> {
    let target = cfg.target_tokens as usize;
    let overlap = cfg.overlap_tokens as usize;
    let n = toks.len();
    let mut out = Vec::new();
    let mut s = 0;
    let mut byte_start = sec_start;
    loop {
        if n - s <= target {
            out.push((byte_start..sec_end, &toks[s..]));
            break;
        }
        let ideal = s + target;
        let lo = s + (overlap + 1).max(target / 2).max(1);
        let hi = (s + 2 * target).min(n - 1);
        let gap_at = |e: usize| text::classify_gap(&text[toks[e - 1].end..toks[e].start]);
        let nearest = |kind: Gap| {
            (lo..=hi)
                .filter(|&e| gap_at(e) == kind)
                .min_by_key(|&e| (e.abs_diff(ideal), e))
        };
        let e = nearest(Gap::Paragraph)
            .or_else(|| nearest(Gap::Sentence))
            .unwrap_or(ideal);
        out.push((byte_start..toks[e].start, &toks[s..e]));
        s = e - overlap;
        byte_start = toks[s].start;
    }
    out
}
