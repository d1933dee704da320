//! Self-contained SVG output and a minimal well-formedness checker.
//!
//! Plots carry their data as CSV inside XML comments so a figure can be
//! re-read without the run directory.

use std::fmt::Write as _;

use thiserror::Error;

pub const WIDTH: f64 = 720.0;
pub const HEIGHT: f64 = 440.0;
pub const MARGIN_LEFT: f64 = 70.0;
pub const MARGIN_RIGHT: f64 = 160.0;
pub const MARGIN_TOP: f64 = 40.0;
pub const MARGIN_BOTTOM: f64 = 50.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

pub fn color(k: usize) -> &'static str {
    PALETTE[k % PALETTE.len()]
}

pub fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Makes arbitrary text safe inside `<!-- -->`.
pub fn comment_safe(text: &str) -> String {
    let mut out = text.replace("--", "- -");
    while out.contains("--") {
        out = out.replace("--", "- -");
    }
    if out.ends_with('-') {
        out.push(' ');
    }
    out
}

/// Linear map from data range to pixel range; degenerate ranges are widened.
#[derive(Clone, Copy, Debug)]
pub struct Scale {
    d0: f64,
    d1: f64,
    p0: f64,
    p1: f64,
}

impl Scale {
    pub fn new(mut d0: f64, mut d1: f64, p0: f64, p1: f64) -> Self {
        if !(d1 > d0) {
            let pad = if d0 == 0.0 { 1.0 } else { d0.abs() * 0.05 };
            d0 -= pad;
            d1 += pad;
        }
        Scale { d0, d1, p0, p1 }
    }

    pub fn map(&self, v: f64) -> f64 {
        self.p0 + (v - self.d0) / (self.d1 - self.d0) * (self.p1 - self.p0)
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.d0, self.d1)
    }
}

/// Accumulates an SVG document.
pub struct Doc {
    body: String,
}

impl Doc {
    pub fn new(title: &str) -> Self {
        let mut body = String::new();
        let _ = writeln!(
            body,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(body, r#"<title>{}</title>"#, escape(title));
        let _ = writeln!(body, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            body,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
            (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0,
            escape(title)
        );
        Doc { body }
    }

    pub fn comment(&mut self, text: &str) {
        let _ = writeln!(self.body, "<!--\n{}\n-->", comment_safe(text));
    }

    pub fn raw(&mut self, element: &str) {
        self.body.push_str(element);
        self.body.push('\n');
    }

    pub fn text(&mut self, x: f64, y: f64, anchor: &str, class: &str, text: &str) {
        let _ = writeln!(
            self.body,
            r#"<text class="{class}" x="{x:.1}" y="{y:.1}" text-anchor="{anchor}">{}</text>"#,
            escape(text)
        );
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{x1:.1}" y1="{y1:.1}" x2="{x2:.1}" y2="{y2:.1}" stroke="{stroke}"/>"#
        );
    }

    /// Frame, tick labels and axis titles. Tick labels for the domain ends
    /// carry the classes `x-min`, `x-max`, `y-min`, `y-max`.
    pub fn axes(&mut self, x: &Scale, y: &Scale, x_title: &str, y_title: &str) {
        let (left, right) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
        let (top, bottom) = (MARGIN_TOP, HEIGHT - MARGIN_BOTTOM);
        self.raw(&format!(
            r##"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="#333"/>"##,
            right - left,
            bottom - top
        ));
        let (x0, x1) = x.domain();
        let (y0, y1) = y.domain();
        self.text(left, bottom + 16.0, "middle", "x-min", &tick(x0));
        self.text(right, bottom + 16.0, "middle", "x-max", &tick(x1));
        self.text(left - 6.0, bottom + 4.0, "end", "y-min", &tick(y0));
        self.text(left - 6.0, top + 4.0, "end", "y-max", &tick(y1));
        self.text((left + right) / 2.0, HEIGHT - 12.0, "middle", "x-title", x_title);
        let cy = (top + bottom) / 2.0;
        self.raw(&format!(
            r#"<text class="y-title" x="16" y="{cy:.1}" text-anchor="middle" transform="rotate(-90 16 {cy:.1})">{}</text>"#,
            escape(y_title)
        ));
    }

    pub fn legend(&mut self, row: usize, label: &str, stroke: &str) {
        let x = WIDTH - MARGIN_RIGHT + 14.0;
        let y = MARGIN_TOP + 14.0 + 18.0 * row as f64;
        self.line(x, y - 4.0, x + 20.0, y - 4.0, stroke);
        self.text(x + 26.0, y, "start", "legend", label);
    }

    pub fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

pub fn tick(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e9 {
        format!("{}", v as i64)
    } else {
        format!("{v:.3}")
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("malformed SVG at byte {offset}: {message}")]
pub struct SvgError {
    pub offset: usize,
    pub message: String,
}

fn fail<T>(offset: usize, message: impl Into<String>) -> Result<T, SvgError> {
    Err(SvgError {
        offset,
        message: message.into(),
    })
}

fn is_name_start(b: u8) -> bool {
    b.is_ascii_alphabetic() || b == b'_' || b == b':'
}

fn is_name_char(b: u8) -> bool {
    is_name_start(b) || b.is_ascii_digit() || b == b'-' || b == b'.'
}

fn check_entities(text: &str, base: usize) -> Result<(), SvgError> {
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'<' => return fail(base + i, "bare '<' in text"),
            b'&' => {
                let end = text[i..]
                    .find(';')
                    .ok_or(SvgError {
                        offset: base + i,
                        message: "unterminated entity".into(),
                    })?;
                let name = &text[i + 1..i + end];
                let ok = matches!(name, "amp" | "lt" | "gt" | "quot" | "apos")
                    || name
                        .strip_prefix("#x")
                        .is_some_and(|h| !h.is_empty() && h.bytes().all(|b| b.is_ascii_hexdigit()))
                    || name
                        .strip_prefix('#')
                        .is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()));
                if !ok {
                    return fail(base + i, format!("unknown entity &{name};"));
                }
                i += end + 1;
            }
            _ => i += 1,
        }
    }
    Ok(())
}

/// Checks that `text` is a single well-formed XML element named `svg` with
/// the SVG namespace: balanced tags, quoted unique attributes, valid
/// entities, well-formed comments. No DTDs, CDATA or processing
/// instructions other than a leading XML declaration.
pub fn check_svg(text: &str) -> Result<(), SvgError> {
    let bytes = text.as_bytes();
    let mut i = 0;
    let mut stack: Vec<&str> = Vec::new();
    let mut root_seen = false;
    if text.starts_with("<?xml") {
        i = text.find("?>").map(|e| e + 2).ok_or(SvgError {
            offset: 0,
            message: "unterminated XML declaration".into(),
        })?;
    }
    while i < bytes.len() {
        if bytes[i] != b'<' {
            let end = text[i..].find('<').map_or(bytes.len(), |e| i + e);
            let chunk = &text[i..end];
            if stack.is_empty() && !chunk.trim().is_empty() {
                return fail(i, "text outside the root element");
            }
            check_entities(chunk, i)?;
            i = end;
            continue;
        }
        if text[i..].starts_with("<!--") {
            let end = text[i + 4..].find("-->").ok_or(SvgError {
                offset: i,
                message: "unterminated comment".into(),
            })?;
            let body = &text[i + 4..i + 4 + end];
            if body.contains("--") || body.ends_with('-') {
                return fail(i, "'--' inside a comment");
            }
            i += 4 + end + 3;
            continue;
        }
        if text[i..].starts_with("<!") || text[i..].starts_with("<?") {
            return fail(i, "unsupported markup declaration");
        }
        if text[i..].starts_with("</") {
            let start = i + 2;
            let mut j = start;
            while j < bytes.len() && is_name_char(bytes[j]) {
                j += 1;
            }
            let name = &text[start..j];
            while j < bytes.len() && bytes[j].is_ascii_whitespace() {
                j += 1;
            }
            if j >= bytes.len() || bytes[j] != b'>' {
                return fail(i, "malformed closing tag");
            }
            match stack.pop() {
                Some(open) if open == name => {}
                Some(open) => return fail(i, format!("</{name}> closes <{open}>")),
                None => return fail(i, format!("</{name}> without an open element")),
            }
            i = j + 1;
            continue;
        }
        // start tag
        let start = i + 1;
        if start >= bytes.len() || !is_name_start(bytes[start]) {
            return fail(i, "malformed tag name");
        }
        let mut j = start;
        while j < bytes.len() && is_name_char(bytes[j]) {
            j += 1;
        }
        let name = &text[start..j];
        if stack.is_empty() {
            if root_seen {
                return fail(i, "more than one root element");
            }
            if name != "svg" {
                return fail(i, format!("root element is <{name}>, not <svg>"));
            }
            root_seen = true;
        }
        let mut attrs: Vec<(&str, &str)> = Vec::new();
        let self_closing;
        loop {
            let ws = j;
            while j < bytes.len() && bytes[j].is_ascii_whitespace() {
                j += 1;
            }
            if j >= bytes.len() {
                return fail(i, "unterminated tag");
            }
            if bytes[j] == b'>' {
                self_closing = false;
                j += 1;
                break;
            }
            if text[j..].starts_with("/>") {
                self_closing = true;
                j += 2;
                break;
            }
            if ws == j {
                return fail(j, "attributes must be separated by whitespace");
            }
            let an = j;
            if !is_name_start(bytes[j]) {
                return fail(j, "malformed attribute name");
            }
            while j < bytes.len() && is_name_char(bytes[j]) {
                j += 1;
            }
            let attr = &text[an..j];
            if j >= bytes.len() || bytes[j] != b'=' {
                return fail(j, format!("attribute {attr} has no value"));
            }
            j += 1;
            let quote = bytes.get(j).copied();
            if quote != Some(b'"') && quote != Some(b'\'') {
                return fail(j, format!("attribute {attr} value is not quoted"));
            }
            let q = quote.unwrap() as char;
            let vend = text[j + 1..].find(q).ok_or(SvgError {
                offset: j,
                message: format!("unterminated value for {attr}"),
            })?;
            let value = &text[j + 1..j + 1 + vend];
            check_entities(value, j + 1)?;
            if attrs.iter().any(|(a, _)| *a == attr) {
                return fail(an, format!("duplicate attribute {attr}"));
            }
            attrs.push((attr, value));
            j += vend + 2;
        }
        if stack.is_empty() && !attrs.iter().any(|&(a, v)| a == "xmlns" && v == "http://www.w3.org/2000/svg") {
            return fail(i, "root <svg> lacks the SVG namespace");
        }
        if !self_closing {
            stack.push(name);
        }
        i = j;
    }
    if let Some(open) = stack.last() {
        return fail(bytes.len(), format!("<{open}> is never closed"));
    }
    if !root_seen {
        return fail(0, "no root element");
    }
    Ok(())
}

/// Extracts every comment body, in order.
pub fn comments(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(s) = rest.find("<!--") {
        let after = &rest[s + 4..];
        match after.find("-->") {
            Some(e) => {
                out.push(&after[..e]);
                rest = &after[e + 3..];
            }
            None => break,
        }
    }
    out
}
