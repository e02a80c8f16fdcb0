use serde::{Deserialize, Serialize};

use super::{CharRange, Section, SectionKind};

/// Layout cues carried over from markup.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FormatHint {
    /// Byte range of the text that came from a `<table>` element.
    TableBlock(CharRange),
}

const MAX_HEADER_LEN: usize = 80;

const SMALL_WORDS: &[&str] =
    &["a", "an", "and", "as", "at", "by", "for", "from", "in", "of", "on", "or", "the", "to", "vs", "vs.", "with"];

const BOILERPLATE_MARKERS: &[&str] =
    &["forward-looking statements", "safe harbor", "private securities litigation reform act", "all rights reserved"];

#[derive(Debug, Clone, Copy)]
struct Line<'a> {
    text: &'a str,
    range: CharRange,
    in_table_hint: bool,
}

impl Line<'_> {
    fn is_blank(&self) -> bool {
        self.text.trim().is_empty()
    }

    fn is_tabular(&self) -> bool {
        self.in_table_hint || column_count(self.text) >= 2
    }
}

/// Split normalized text into ordered, non-overlapping sections.
///
/// Paragraphs are separated by blank lines. A short all-caps or title-case
/// line followed by more text becomes a `Header`. Two or more consecutive
/// lines with at least two tab or multi-space separated columns, or any text
/// covered by a [`FormatHint::TableBlock`], become a `Table`.
pub fn segment_sections(raw_text: &str, hints: &[FormatHint]) -> Vec<Section> {
    let lines = split_lines(raw_text, hints);
    let blocks: Vec<&[Line<'_>]> = lines.split(|l| l.is_blank()).filter(|b| !b.is_empty()).collect();

    let mut sections: Vec<Section> = Vec::new();
    let mut current_title = String::new();

    for (bi, block) in blocks.iter().enumerate() {
        let has_following_block = bi + 1 < blocks.len();
        for run in group_runs(block) {
            match run {
                Run::Table(lines) => {
                    push_section(&mut sections, raw_text, lines, SectionKind::Table, &current_title);
                }
                Run::Text(lines) => {
                    let mut body = lines;
                    let first = lines[0];
                    let followed = lines.len() > 1 || has_following_block;
                    if followed && is_heading(first.text) {
                        let title = first.text.trim().to_string();
                        push_section(&mut sections, raw_text, &lines[..1], SectionKind::Header, &title);
                        current_title = title;
                        body = &lines[1..];
                    }
                    if !body.is_empty() {
                        let kind = if is_boilerplate(body) { SectionKind::Boilerplate } else { SectionKind::Narrative };
                        push_section(&mut sections, raw_text, body, kind, &current_title);
                    }
                }
            }
        }
    }

    if sections.is_empty() {
        let start = raw_text.len() - raw_text.trim_start().len();
        let end = raw_text.trim_end().len().max(start);
        sections.push(Section {
            section_id: "s0".into(),
            title: String::new(),
            body: raw_text[start..end].to_string(),
            char_range: CharRange::new(start, end),
            kind: SectionKind::Narrative,
        });
    }
    sections
}

enum Run<'b, 'a> {
    Text(&'b [Line<'a>]),
    Table(&'b [Line<'a>]),
}

fn group_runs<'b, 'a>(block: &'b [Line<'a>]) -> Vec<Run<'b, 'a>> {
    let mut runs = Vec::new();
    let mut i = 0;
    let mut text_start = 0;
    while i < block.len() {
        if block[i].is_tabular() {
            let mut j = i;
            while j < block.len() && block[j].is_tabular() {
                j += 1;
            }
            let hinted = block[i..j].iter().any(|l| l.in_table_hint);
            if j - i >= 2 || hinted {
                if text_start < i {
                    runs.push(Run::Text(&block[text_start..i]));
                }
                runs.push(Run::Table(&block[i..j]));
                text_start = j;
            }
            i = j;
        } else {
            i += 1;
        }
    }
    if text_start < block.len() {
        runs.push(Run::Text(&block[text_start..]));
    }
    runs
}

fn push_section(out: &mut Vec<Section>, raw: &str, lines: &[Line<'_>], kind: SectionKind, title: &str) {
    let first = lines[0];
    let last = lines[lines.len() - 1];
    let lead = first.text.len() - first.text.trim_start().len();
    let start = first.range.start + lead;
    let end = last.range.start + last.text.trim_end().len();
    let title = if kind == SectionKind::Header { raw[start..end].to_string() } else { title.to_string() };
    out.push(Section {
        section_id: format!("s{}", out.len()),
        title,
        body: raw[start..end].to_string(),
        char_range: CharRange::new(start, end),
        kind,
    });
}

fn split_lines<'a>(raw: &'a str, hints: &[FormatHint]) -> Vec<Line<'a>> {
    let mut lines = Vec::new();
    let mut offset = 0;
    for piece in raw.split('\n') {
        let range = CharRange::new(offset, offset + piece.len());
        let in_table_hint = hints
            .iter()
            .any(|FormatHint::TableBlock(h)| range.start < h.end && h.start < range.end.max(range.start + 1));
        lines.push(Line { text: piece, range, in_table_hint });
        offset += piece.len() + 1;
    }
    lines
}

fn column_count(line: &str) -> usize {
    let trimmed = line.trim();
    if trimmed.is_empty() {
        return 0;
    }
    if trimmed.contains('\t') {
        return trimmed.split('\t').filter(|c| !c.trim().is_empty()).count();
    }
    trimmed.split("  ").filter(|c| !c.trim().is_empty()).count()
}

pub(crate) fn is_heading(line: &str) -> bool {
    let t = line.trim();
    if t.is_empty() || t.chars().count() > MAX_HEADER_LEN {
        return false;
    }
    if t.ends_with(['.', '!', '?', ';', ',']) || t.contains(['$', '%', '\t']) {
        return false;
    }
    if !t.chars().any(char::is_alphabetic) {
        return false;
    }
    let all_caps = t.chars().filter(|c| c.is_alphabetic()).all(|c| c.is_uppercase());
    if all_caps {
        return true;
    }
    let words: Vec<&str> = t.split_whitespace().collect();
    if words.len() > 12 {
        return false;
    }
    words.iter().enumerate().all(|(i, w)| {
        let Some(first) = w.chars().find(|c| c.is_alphanumeric()) else {
            return true;
        };
        if first.is_numeric() {
            return true;
        }
        first.is_uppercase() || (i > 0 && SMALL_WORDS.contains(&w.to_lowercase().as_str()))
    })
}

fn is_boilerplate(lines: &[Line<'_>]) -> bool {
    let text: String = lines.iter().map(|l| l.text.to_lowercase()).collect::<Vec<_>>().join(" ");
    BOILERPLATE_MARKERS.iter().any(|m| text.contains(m))
}
