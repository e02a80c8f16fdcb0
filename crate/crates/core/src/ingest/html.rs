use super::segment::FormatHint;
use super::{normalize_text, CharRange};

const TABLE_OPEN: char = '\u{E000}';
const TABLE_CLOSE: char = '\u{E001}';

const BLOCK_TAGS: &[&str] = &[
    "p",
    "div",
    "section",
    "article",
    "header",
    "footer",
    "h1",
    "h2",
    "h3",
    "h4",
    "h5",
    "h6",
    "ul",
    "ol",
    "li",
    "blockquote",
    "pre",
    "hr",
    "title",
    "body",
    "html",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrippedHtml {
    pub text: String,
    pub table_blocks: Vec<FormatHint>,
}

/// Reduce HTML to plain text. Block elements end paragraphs, `<br>` ends a
/// line, table rows become lines and cells are tab separated. Entities are
/// decoded and `<script>`/`<style>` contents dropped.
pub fn strip_html(input: &str) -> StrippedHtml {
    let mut out = String::with_capacity(input.len());
    let mut rest = input;
    let mut table_depth = 0usize;
    let mut cell_in_row = 0usize;
    let mut skip_until: Option<&'static str> = None;

    while !rest.is_empty() {
        if let Some(lt) = rest.find('<') {
            let (text, tail) = rest.split_at(lt);
            if skip_until.is_none() {
                push_text(&mut out, text, table_depth > 0);
            }
            let Some(gt) = tail.find('>') else {
                // Unterminated tag: treat the remainder as text.
                if skip_until.is_none() {
                    push_text(&mut out, tail, table_depth > 0);
                }
                break;
            };
            let tag = &tail[1..gt];
            rest = &tail[gt + 1..];
            if tag.starts_with("!--") {
                if let Some(end) = tail.find("-->") {
                    rest = &tail[end + 3..];
                }
                continue;
            }
            let closing = tag.starts_with('/');
            let name = tag
                .trim_start_matches('/')
                .split(|c: char| c.is_whitespace() || c == '/')
                .next()
                .unwrap_or("")
                .to_ascii_lowercase();

            if let Some(stop) = skip_until {
                if closing && name == stop {
                    skip_until = None;
                }
                continue;
            }
            match (name.as_str(), closing) {
                ("script", false) => skip_until = Some("script"),
                ("style", false) => skip_until = Some("style"),
                ("table", false) => {
                    if table_depth == 0 {
                        paragraph_break(&mut out);
                        out.push(TABLE_OPEN);
                    }
                    table_depth += 1;
                }
                ("table", true) => {
                    if table_depth > 0 {
                        table_depth -= 1;
                        if table_depth == 0 {
                            trim_trailing_inline(&mut out);
                            out.push(TABLE_CLOSE);
                            paragraph_break(&mut out);
                        }
                    }
                }
                ("tr", false) => {
                    cell_in_row = 0;
                    if table_depth > 0 && !out.ends_with(TABLE_OPEN) {
                        trim_trailing_inline(&mut out);
                        out.push('\n');
                    }
                }
                ("td" | "th", false) => {
                    if cell_in_row > 0 {
                        trim_trailing_inline(&mut out);
                        out.push('\t');
                    }
                    cell_in_row += 1;
                }
                ("br", _) => {
                    trim_trailing_inline(&mut out);
                    out.push('\n');
                }
                (n, _) if BLOCK_TAGS.contains(&n) && table_depth == 0 => paragraph_break(&mut out),
                _ => {}
            }
        } else {
            if skip_until.is_none() {
                push_text(&mut out, rest, table_depth > 0);
            }
            break;
        }
    }

    let normalized = normalize_text(&out);
    let mut text = String::with_capacity(normalized.len());
    let mut table_blocks = Vec::new();
    let mut open_at = None;
    for ch in normalized.chars() {
        match ch {
            TABLE_OPEN => open_at = Some(text.len()),
            TABLE_CLOSE => {
                if let Some(start) = open_at.take() {
                    if text.len() > start {
                        table_blocks.push(FormatHint::TableBlock(CharRange::new(start, text.len())));
                    }
                }
            }
            c => text.push(c),
        }
    }
    StrippedHtml { text, table_blocks }
}

fn push_text(out: &mut String, raw: &str, in_table: bool) {
    let decoded = decode_entities(raw);
    for ch in decoded.chars() {
        if ch.is_whitespace() {
            let at_line_start =
                out.is_empty() || out.ends_with('\n') || out.ends_with('\t') || out.ends_with(TABLE_OPEN);
            if !at_line_start && !out.ends_with(' ') {
                out.push(' ');
            }
        } else if in_table && ch == '\t' {
            out.push(' ');
        } else {
            out.push(ch);
        }
    }
}

fn trim_trailing_inline(out: &mut String) {
    while out.ends_with(' ') {
        out.pop();
    }
}

fn paragraph_break(out: &mut String) {
    trim_trailing_inline(out);
    if out.is_empty() {
        return;
    }
    while !out.ends_with("\n\n") {
        out.push('\n');
    }
}

fn decode_entities(raw: &str) -> String {
    if !raw.contains('&') {
        return raw.to_string();
    }
    let mut out = String::with_capacity(raw.len());
    let mut rest = raw;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        let tail = &rest[amp..];
        let decoded =
            tail.find(';').filter(|&semi| semi <= 10).and_then(|semi| decode_entity(&tail[1..semi]).map(|c| (c, semi)));
        match decoded {
            Some((c, semi)) => {
                out.push(c);
                rest = &tail[semi + 1..];
            }
            None => {
                out.push('&');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn decode_entity(name: &str) -> Option<char> {
    if let Some(num) = name.strip_prefix('#') {
        let code = if let Some(hex) = num.strip_prefix(['x', 'X']) {
            u32::from_str_radix(hex, 16).ok()?
        } else {
            num.parse::<u32>().ok()?
        };
        return char::from_u32(code);
    }
    Some(match name {
        "amp" => '&',
        "lt" => '<',
        "gt" => '>',
        "quot" => '"',
        "apos" => '\'',
        "nbsp" => ' ',
        "ndash" => '–',
        "mdash" => '—',
        "minus" => '−',
        "dollar" => '$',
        "percnt" => '%',
        "rsquo" => '\u{2019}',
        "lsquo" => '\u{2018}',
        "ldquo" => '\u{201C}',
        "rdquo" => '\u{201D}',
        "hellip" => '…',
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entities_are_decoded() {
        assert_eq!(decode_entities("15&ndash;17&#37; &amp; more &bogus;"), "15–17% & more &bogus;");
        assert_eq!(decode_entities("&#x24;4.3"), "$4.3");
    }

    #[test]
    fn tables_become_tab_separated_rows() {
        let html =
            "<table><tr><th>Metric</th><th>Q4 2024</th></tr><tr><td>Revenue</td><td>$2.5 billion</td></tr></table>";
        let s = strip_html(html);
        assert_eq!(s.text, "Metric\tQ4 2024\nRevenue\t$2.5 billion");
        assert_eq!(s.table_blocks, vec![FormatHint::TableBlock(CharRange::new(0, s.text.len()))]);
    }

    #[test]
    fn scripts_and_comments_are_dropped() {
        let s = strip_html("<script>var x = '<p>';</script><!-- note --><p>Hi <b>there</b></p>");
        assert_eq!(s.text, "Hi there");
    }

    #[test]
    fn breaks_and_paragraphs() {
        let s = strip_html("<h2>OUTLOOK</h2><p>We expect\n   margin of 15&ndash;17%.</p>line<br>next");
        assert_eq!(s.text, "OUTLOOK\n\nWe expect margin of 15–17%.\n\nline\nnext");
    }
}
