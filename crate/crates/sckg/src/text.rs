//! HTML and plain-text cleaning.

use scraper::node::Node;
use scraper::{ElementRef, Html};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TextError {
    #[error("unsupported content type {0}")]
    UnsupportedContentType(String),
    #[error("no text left after cleaning")]
    EmptyAfterCleaning,
}

const SKIPPED: &[&str] = &[
    "script", "style", "noscript", "template", "nav", "header", "footer", "aside", "form",
    "iframe", "svg", "head", "button", "select",
];

const BLOCKS: &[&str] = &[
    "p", "div", "br", "li", "ul", "ol", "h1", "h2", "h3", "h4", "h5", "h6", "tr", "table",
    "section", "article", "main", "blockquote", "pre", "dd", "dt", "dl", "figcaption", "body",
    "hr", "td", "th",
];

fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

struct Paragraphs {
    done: Vec<String>,
    current: String,
}

impl Paragraphs {
    fn flush(&mut self) {
        let p = collapse(&self.current);
        if !p.is_empty() {
            self.done.push(p);
        }
        self.current.clear();
    }
}

fn walk(el: ElementRef<'_>, out: &mut Paragraphs) {
    for child in el.children() {
        match child.value() {
            Node::Text(t) => out.current.push_str(t),
            Node::Element(e) => {
                let name = e.name();
                if SKIPPED.contains(&name) {
                    continue;
                }
                let block = BLOCKS.contains(&name);
                if block {
                    out.flush();
                }
                if let Some(inner) = ElementRef::wrap(child) {
                    walk(inner, out);
                }
                if block {
                    out.flush();
                } else {
                    out.current.push(' ');
                }
            }
            _ => {}
        }
    }
}

pub fn clean_html(html: &str) -> String {
    let doc = Html::parse_document(html);
    let mut p = Paragraphs {
        done: Vec::new(),
        current: String::new(),
    };
    walk(doc.root_element(), &mut p);
    p.flush();
    p.done.join("\n")
}

pub fn clean_plain(text: &str) -> String {
    text.lines()
        .map(collapse)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Clean a fetched body into paragraph-per-line text, capped at `max_chars`.
pub fn extract_text(
    content_type: Option<&str>,
    body: &[u8],
    max_chars: usize,
) -> Result<String, TextError> {
    let text = String::from_utf8_lossy(body);
    let mime = content_type
        .map(|c| c.split(';').next().unwrap_or("").trim().to_ascii_lowercase())
        .unwrap_or_default();
    let cleaned = match mime.as_str() {
        "text/html" | "application/xhtml+xml" => clean_html(&text),
        "text/plain" => clean_plain(&text),
        "" if text.trim_start().starts_with('<') => clean_html(&text),
        "" => clean_plain(&text),
        other => return Err(TextError::UnsupportedContentType(other.to_string())),
    };
    let capped: String = match cleaned.char_indices().nth(max_chars) {
        Some((i, _)) => cleaned[..i].trim_end().to_string(),
        None => cleaned,
    };
    if capped.is_empty() {
        return Err(TextError::EmptyAfterCleaning);
    }
    Ok(capped)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_script_and_markup() {
        let t = extract_text(
            Some("text/html; charset=utf-8"),
            b"<p>A supplies B</p><script>x</script>",
            1000,
        );
        assert_eq!(t.unwrap(), "A supplies B");
    }

    #[test]
    fn keeps_paragraph_breaks_and_inline_spacing() {
        let html = "<html><head><title>T</title></head><body><nav>Home | About</nav>\
            <h1>News</h1><p>TSMC <b>supplies</b>\n   Apple.</p><div>Second<br>line</div>\
            <footer>(c) 2024</footer></body></html>";
        assert_eq!(
            extract_text(Some("text/html"), html.as_bytes(), 1000).unwrap(),
            "News\nTSMC supplies Apple.\nSecond\nline"
        );
    }

    #[test]
    fn plain_text_only_normalizes_whitespace() {
        let t = extract_text(Some("text/plain"), b"  A  supplies\tB \r\n\r\nC buys  D\n", 1000);
        assert_eq!(t.unwrap(), "A supplies B\nC buys D");
    }

    #[test]
    fn navigation_only_page_is_empty() {
        let r = extract_text(Some("text/html"), b"<nav><a href='/'>Home</a></nav>", 1000);
        assert_eq!(r, Err(TextError::EmptyAfterCleaning));
    }

    #[test]
    fn rejects_binary_types_and_caps_length() {
        assert_eq!(
            extract_text(Some("application/pdf"), b"%PDF", 10),
            Err(TextError::UnsupportedContentType("application/pdf".into()))
        );
        assert_eq!(extract_text(None, "héllo world".as_bytes(), 5).unwrap(), "héllo");
    }

    #[test]
    fn cleaning_is_deterministic() {
        let html = b"<div><p>x</p><p>y  z</p></div>";
        assert_eq!(
            extract_text(None, html, 100).unwrap(),
            extract_text(None, html, 100).unwrap()
        );
    }
}
