//! Splits a raw message into the text stream and the URL stream.
//!
//! Handles the subset of the Internet Message Format found in public phishing
//! and ham corpora: an unfolded header block, a blank line, then a body that
//! is either a single part or a `multipart/*` body delimited by its
//! `boundary` parameter. Parts may use the `quoted-printable` or `base64`
//! transfer encodings. The body text is taken from the first `text/plain`
//! leaf (depth-first), falling back to the first `text/html` leaf with tags
//! removed and entities decoded.
//!
//! Parsing never fails. Anything unexpected is recorded in
//! [`ParsedEmail::warnings`].

use base64::engine::general_purpose::{GeneralPurpose, GeneralPurposeConfig};
use base64::engine::DecodePaddingMode;
use base64::Engine;
use serde::{Deserialize, Serialize};

const MAX_MULTIPART_DEPTH: usize = 8;

/// Ordered header multimap. Lookups ignore the case of the name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Headers(Vec<(String, String)>);

impl Headers {
    pub fn get(&self, name: &str) -> Option<&str> {
        self.0
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn get_all<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.0
            .iter()
            .filter(move |(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParsedEmail {
    pub headers: Headers,
    pub body_text: String,
    pub urls: Vec<String>,
    pub warnings: Vec<String>,
}

/// `type/subtype` plus parameters, lowercased except for parameter values.
#[derive(Debug, Clone, PartialEq, Eq)]
struct ContentType {
    mime: String,
    params: Vec<(String, String)>,
}

impl ContentType {
    fn parse(value: Option<&str>) -> ContentType {
        let value = match value {
            Some(v) if !v.trim().is_empty() => v,
            _ => return ContentType::default_text(),
        };
        let mut pieces = split_params(value).into_iter();
        let mime = pieces.next().unwrap_or_default().trim().to_ascii_lowercase();
        let params = pieces
            .filter_map(|p| {
                let (k, v) = p.split_once('=')?;
                let v = v.trim();
                let v = v
                    .strip_prefix('"')
                    .and_then(|v| v.strip_suffix('"'))
                    .unwrap_or(v);
                Some((k.trim().to_ascii_lowercase(), v.to_string()))
            })
            .collect();
        ContentType { mime, params }
    }

    fn default_text() -> ContentType {
        ContentType {
            mime: "text/plain".into(),
            params: Vec::new(),
        }
    }

    fn param(&self, name: &str) -> Option<&str> {
        self.params
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }
}

/// Splits on `;` outside double quotes.
fn split_params(value: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    for c in value.chars() {
        match c {
            '"' => {
                quoted = !quoted;
                cur.push(c);
            }
            ';' if !quoted => out.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    out.push(cur);
    out
}

/// Byte lines with their terminators removed, and the offset just past each
/// line's terminator.
fn lines_with_offsets(raw: &[u8]) -> Vec<(&[u8], usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < raw.len() {
        let end = raw[start..]
            .iter()
            .position(|&b| b == b'\n')
            .map_or(raw.len(), |p| start + p);
        let next = (end + 1).min(raw.len());
        let mut line = &raw[start..end];
        if line.last() == Some(&b'\r') {
            line = &line[..line.len() - 1];
        }
        out.push((line, next));
        start = next;
    }
    out
}

fn is_header_line(line: &[u8]) -> bool {
    match line.iter().position(|&b| b == b':') {
        Some(0) | None => false,
        Some(colon) => line[..colon].iter().all(|&b| b.is_ascii_graphic()),
    }
}

/// Returns the header lines and the body, or `None` when the input does not
/// start with a well-formed header block closed by a blank line.
fn split_head_body(raw: &[u8]) -> Option<(Vec<&[u8]>, &[u8])> {
    let mut head = Vec::new();
    for (line, next) in lines_with_offsets(raw) {
        if line.is_empty() {
            return Some((head, &raw[next..]));
        }
        let continuation = matches!(line[0], b' ' | b'\t');
        if continuation && head.is_empty() {
            return None;
        }
        if !continuation && !is_header_line(line) {
            return None;
        }
        head.push(line);
    }
    None
}

fn parse_headers(lines: &[&[u8]]) -> Headers {
    let mut headers: Vec<(String, String)> = Vec::new();
    for line in lines {
        let text = String::from_utf8_lossy(line);
        if text.starts_with([' ', '\t']) {
            if let Some((_, v)) = headers.last_mut() {
                if !v.is_empty() {
                    v.push(' ');
                }
                v.push_str(text.trim());
            }
        } else if let Some((name, value)) = text.split_once(':') {
            headers.push((name.trim().to_string(), value.trim().to_string()));
        }
    }
    Headers(headers)
}

fn decode_transfer(body: &[u8], encoding: Option<&str>, warnings: &mut Vec<String>) -> Vec<u8> {
    match encoding.map(|e| e.trim().to_ascii_lowercase()).as_deref() {
        Some("quoted-printable") => {
            quoted_printable::decode(body, quoted_printable::ParseMode::Robust).unwrap_or_else(|e| {
                warnings.push(format!("quoted-printable decode failed: {e}"));
                body.to_vec()
            })
        }
        Some("base64") => {
            let compact: Vec<u8> = body.iter().copied().filter(|b| !b.is_ascii_whitespace()).collect();
            let engine = GeneralPurpose::new(
                &base64::alphabet::STANDARD,
                GeneralPurposeConfig::new().with_decode_padding_mode(DecodePaddingMode::Indifferent),
            );
            engine.decode(&compact).unwrap_or_else(|e| {
                warnings.push(format!("base64 decode failed: {e}"));
                body.to_vec()
            })
        }
        _ => body.to_vec(),
    }
}

fn decode_charset(bytes: &[u8], charset: Option<&str>, warnings: &mut Vec<String>) -> String {
    let charset = charset.map(|c| c.trim().to_ascii_lowercase());
    match charset.as_deref() {
        Some("iso-8859-1" | "latin1" | "latin-1" | "iso8859-1" | "windows-1252" | "cp1252") => {
            bytes.iter().map(|&b| b as char).collect()
        }
        _ => match String::from_utf8(bytes.to_vec()) {
            Ok(s) => s,
            Err(_) => {
                warnings.push("undecodable bytes replaced with U+FFFD".to_string());
                String::from_utf8_lossy(bytes).into_owned()
            }
        },
    }
}

struct Leaf {
    html: bool,
    text: String,
}

/// Collects decoded `text/plain` and `text/html` leaves in depth-first order.
fn collect_leaves(
    headers: &Headers,
    body: &[u8],
    depth: usize,
    leaves: &mut Vec<Leaf>,
    warnings: &mut Vec<String>,
) {
    let ctype = ContentType::parse(headers.get("content-type"));
    if ctype.mime.starts_with("multipart/") {
        let Some(boundary) = ctype.param("boundary") else {
            warnings.push("multipart body without boundary; treated as text".to_string());
            leaves.push(Leaf {
                html: false,
                text: decode_charset(body, None, warnings),
            });
            return;
        };
        if depth >= MAX_MULTIPART_DEPTH {
            warnings.push("multipart nesting too deep; inner parts skipped".to_string());
            return;
        }
        for part in split_multipart(body, boundary) {
            let (part_headers, part_body) = match split_head_body(part) {
                Some((lines, b)) => (parse_headers(&lines), b),
                None => (Headers::default(), part),
            };
            collect_leaves(&part_headers, part_body, depth + 1, leaves, warnings);
        }
        return;
    }
    let html = match ctype.mime.as_str() {
        "text/plain" => false,
        "text/html" => true,
        _ => return,
    };
    let decoded = decode_transfer(body, headers.get("content-transfer-encoding"), warnings);
    leaves.push(Leaf {
        html,
        text: decode_charset(&decoded, ctype.param("charset"), warnings),
    });
}

/// Part bodies between `--boundary` delimiter lines; preamble and epilogue
/// are dropped.
fn split_multipart<'a>(body: &'a [u8], boundary: &str) -> Vec<&'a [u8]> {
    let open = format!("--{boundary}");
    let close = format!("--{boundary}--");
    let mut parts = Vec::new();
    let mut part_start: Option<usize> = None;
    let mut line_start = 0;
    for (line, next) in lines_with_offsets(body) {
        let trimmed = trim_ascii_end(line);
        let is_close = trimmed == close.as_bytes();
        if is_close || trimmed == open.as_bytes() {
            if let Some(start) = part_start {
                // The line break before the delimiter belongs to the delimiter.
                let mut end = line_start;
                if end > start && body[end - 1] == b'\n' {
                    end -= 1;
                    if end > start && body[end - 1] == b'\r' {
                        end -= 1;
                    }
                }
                parts.push(&body[start..end.max(start)]);
            }
            if is_close {
                return parts;
            }
            part_start = Some(next);
        }
        line_start = next;
    }
    if let Some(start) = part_start {
        parts.push(&body[start..]);
    }
    parts
}

fn trim_ascii_end(mut s: &[u8]) -> &[u8] {
    while let Some((last, rest)) = s.split_last() {
        if last.is_ascii_whitespace() {
            s = rest;
        } else {
            break;
        }
    }
    s
}

/// Parses a raw message. Total: any byte sequence yields a result.
pub fn parse_email(raw: &[u8]) -> ParsedEmail {
    let mut warnings = Vec::new();
    let (headers, body) = match split_head_body(raw) {
        Some((lines, body)) => (parse_headers(&lines), body),
        None => {
            warnings.push("no header/body separator; whole input treated as body".to_string());
            (Headers::default(), raw)
        }
    };

    let mut leaves = Vec::new();
    collect_leaves(&headers, body, 0, &mut leaves, &mut warnings);

    let chosen = leaves
        .iter()
        .position(|l| !l.html)
        .or_else(|| leaves.iter().position(|l| l.html));
    let (body_text, urls) = match chosen {
        Some(i) if leaves[i].html => {
            let source = &leaves[i].text;
            let urls = extract_urls(source)
                .into_iter()
                .map(|u| decode_entities(&u))
                .collect();
            (tidy_whitespace(&decode_entities(&strip_tags(source))), urls)
        }
        Some(i) => {
            let text = leaves[i].text.replace("\r\n", "\n");
            let urls = extract_urls(&text);
            (text.trim().to_string(), urls)
        }
        None => {
            warnings.push("no text/plain or text/html part found".to_string());
            (String::new(), Vec::new())
        }
    };

    ParsedEmail {
        headers,
        body_text,
        urls,
        warnings,
    }
}

const BLOCK_TAGS: &[&str] = &[
    "br", "p", "div", "tr", "li", "ul", "ol", "table", "h1", "h2", "h3", "h4", "h5", "h6", "hr",
    "blockquote", "title",
];

/// Removes markup, keeping text content. Block-level tags become a newline;
/// `<script>` and `<style>` contents and comments are dropped. Never makes
/// the text longer.
pub fn strip_tags(html: &str) -> String {
    let mut out = String::with_capacity(html.len());
    let mut rest = html;
    while let Some(lt) = rest.find('<') {
        out.push_str(&rest[..lt]);
        let tail = &rest[lt..];
        if tail.starts_with("<!--") {
            rest = tail.find("-->").map_or("", |end| &tail[end + 3..]);
            continue;
        }
        let opens_tag = tail[1..]
            .chars()
            .next()
            .is_some_and(|c| c.is_ascii_alphabetic() || matches!(c, '/' | '!' | '?'));
        if !opens_tag {
            out.push('<');
            rest = &tail[1..];
            continue;
        }
        let Some(gt) = tail.find('>') else {
            rest = "";
            break;
        };
        let inner = &tail[1..gt];
        let name: String = inner
            .trim_start_matches('/')
            .chars()
            .take_while(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        rest = &tail[gt + 1..];
        if !inner.starts_with('/') && (name == "script" || name == "style") {
            let closing = format!("</{name}");
            rest = find_ignore_case(rest, &closing)
                .and_then(|at| rest[at..].find('>').map(|gt| &rest[at + gt + 1..]))
                .unwrap_or("");
            continue;
        }
        if BLOCK_TAGS.contains(&name.as_str()) {
            out.push('\n');
        }
    }
    out.push_str(rest);
    out
}

fn find_ignore_case(haystack: &str, needle: &str) -> Option<usize> {
    let hay = haystack.as_bytes();
    let needle = needle.as_bytes();
    if needle.len() > hay.len() {
        return None;
    }
    (0..=hay.len() - needle.len()).find(|&i| hay[i..i + needle.len()].eq_ignore_ascii_case(needle))
}

/// Decodes `&amp; &lt; &gt; &quot; &apos; &nbsp;` and numeric references
/// (`&#NN;`, `&#xNN;`). Anything else is left as is.
pub fn decode_entities(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        let tail = &rest[amp..];
        let decoded = tail.find(';').filter(|&semi| semi <= 10).and_then(|semi| {
            let entity = &tail[1..semi];
            let c = match entity {
                "amp" => Some('&'),
                "lt" => Some('<'),
                "gt" => Some('>'),
                "quot" => Some('"'),
                "apos" => Some('\''),
                "nbsp" => Some(' '),
                _ => {
                    let num = entity.strip_prefix('#')?;
                    let code = match num.strip_prefix(['x', 'X']) {
                        Some(hex) => u32::from_str_radix(hex, 16).ok(),
                        None => num.parse::<u32>().ok(),
                    };
                    code.and_then(char::from_u32)
                }
            };
            c.map(|c| (c, semi))
        });
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

/// Collapses horizontal whitespace runs, trims lines and drops blank lines.
fn tidy_whitespace(s: &str) -> String {
    s.lines()
        .map(|l| l.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

const URL_PREFIXES: &[&str] = &["http://", "https://", "www."];
const TRAILING_PUNCT: &[char] = &['.', ',', ';', ':', '!', '?', ')', ']', '}', '\'', '"'];

fn is_url_terminator(c: char) -> bool {
    c.is_whitespace() || matches!(c, '<' | '>' | '"')
}

/// Finds `http://`, `https://` and `www.` tokens (prefix matched without
/// regard to case, and not glued to a preceding letter or digit). A token
/// runs to the next whitespace, `<`, `>` or `"`, then loses trailing
/// sentence punctuation. Every result is a substring of `text`.
pub fn extract_urls(text: &str) -> Vec<String> {
    let mut urls = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let prefix = URL_PREFIXES.iter().find(|p| {
            bytes.len() - i >= p.len() && bytes[i..i + p.len()].eq_ignore_ascii_case(p.as_bytes())
        });
        let glued = i > 0
            && text[..i]
                .chars()
                .next_back()
                .is_some_and(|c| c.is_alphanumeric());
        let Some(prefix) = prefix.filter(|_| !glued) else {
            i += text[i..].chars().next().map_or(1, char::len_utf8);
            continue;
        };
        let end = text[i..]
            .char_indices()
            .find(|&(_, c)| is_url_terminator(c))
            .map_or(text.len(), |(off, _)| i + off);
        let token = text[i..end].trim_end_matches(TRAILING_PUNCT);
        if token.len() > prefix.len() {
            urls.push(token.to_string());
        }
        i = end;
    }
    urls
}
