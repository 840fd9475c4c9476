//! Boilerplate stripping for documentation pages.

use std::sync::LazyLock;

use regex::Regex;
use scraper::{ElementRef, Html, Node, Selector};

use crate::text::collapse_whitespace;

/// Elements whose whole subtree is dropped.
const SKIPPED: &[&str] = &["script", "style", "noscript", "template", "head", "nav", "header", "footer", "aside"];

/// Elements that break words: a space is emitted before and after them.
const BLOCK: &[&str] = &[
    "address",
    "article",
    "blockquote",
    "body",
    "br",
    "caption",
    "dd",
    "details",
    "div",
    "dl",
    "dt",
    "figcaption",
    "figure",
    "h1",
    "h2",
    "h3",
    "h4",
    "h5",
    "h6",
    "hr",
    "html",
    "li",
    "main",
    "ol",
    "option",
    "p",
    "pre",
    "section",
    "summary",
    "table",
    "tbody",
    "td",
    "tfoot",
    "th",
    "thead",
    "title",
    "tr",
    "ul",
];

static LOOKS_LIKE_HTML: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)<!--|<!doctype|</?(html|head|body|p|div|span|a|main|nav|header|footer|script|style|section|article|aside|ul|ol|li|table|tr|td|th|thead|tbody|h[1-6]|pre|code|br|hr|img|b|i|em|strong|dl|dt|dd|blockquote|form|meta|link|title|noscript|template)(\s[^>]*)?/?>",
    )
    .expect("static regex")
});

/// Strip markup and boilerplate from an HTML page, returning whitespace-collapsed text.
///
/// Input without recognisable markup is treated as plain text and only has its
/// whitespace collapsed, so entity-like sequences in already-clean text are kept
/// verbatim. Malformed HTML is parsed best-effort.
pub fn clean_html(input: &str) -> String {
    if !LOOKS_LIKE_HTML.is_match(input) {
        return collapse_whitespace(input);
    }
    let doc = Html::parse_document(input);
    let mut out = String::with_capacity(input.len() / 2);
    walk(doc.root_element(), &mut out);
    collapse_whitespace(&out)
}

fn walk(element: ElementRef<'_>, out: &mut String) {
    let name = element.value().name();
    if SKIPPED.contains(&name) {
        return;
    }
    let block = BLOCK.contains(&name);
    if block {
        out.push(' ');
    }
    for child in element.children() {
        match child.value() {
            Node::Text(text) => out.push_str(text),
            Node::Element(_) => {
                if let Some(el) = ElementRef::wrap(child) {
                    walk(el, out);
                }
            }
            _ => {}
        }
    }
    if block {
        out.push(' ');
    }
}

static HEADINGS: LazyLock<Selector> = LazyLock::new(|| Selector::parse("title, h1, h2, h3").expect("static selector"));

/// Page title and h1-h3 headings in document order, whitespace-collapsed.
pub fn extract_headings(html: &str) -> Vec<String> {
    let doc = Html::parse_document(html);
    doc.select(&HEADINGS)
        .map(|el| collapse_whitespace(&el.text().collect::<String>()))
        .filter(|h| !h.is_empty())
        .collect()
}
