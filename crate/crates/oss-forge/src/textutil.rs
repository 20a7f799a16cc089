//! Line-oriented text helpers used by seed extraction and pair mining.
//!
//! Documents are split on `\n` only; `\r` stays attached to the line text so
//! that re-joining lines reproduces the original bytes. A final `\n` does not
//! open an extra empty line.

/// Splits `content` into lines. The trailing empty slice produced by a final
/// newline is dropped; interior empty lines are kept.
pub fn split_lines(content: &str) -> Vec<&str> {
    if content.is_empty() {
        return Vec::new();
    }
    let mut lines: Vec<&str> = content.split('\n').collect();
    if content.ends_with('\n') {
        lines.pop();
    }
    lines
}

/// Re-slices `content` at a 1-based line window, joining with `\n`.
/// Returns `None` when the window falls outside the document.
pub fn slice_lines(content: &str, start_line: usize, line_count: usize) -> Option<String> {
    if start_line == 0 || line_count == 0 {
        return None;
    }
    let lines = split_lines(content);
    let start = start_line - 1;
    let end = start.checked_add(line_count)?;
    if end > lines.len() {
        return None;
    }
    Some(lines[start..end].join("\n"))
}

/// Collapses runs of whitespace to single spaces and trims the ends.
/// This is the normalization applied to both sides of every contamination
/// comparison; offsets in match reports index the normalized text.
pub fn normalize_ws(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_ws = true; // leading whitespace is dropped
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !in_ws {
                out.push(' ');
                in_ws = true;
            }
        } else {
            out.push(ch);
            in_ws = false;
        }
    }
    if out.ends_with(' ') {
        out.pop();
    }
    out
}
