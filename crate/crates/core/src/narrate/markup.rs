//! Tagged-text rendering of a document.
//!
//! ```text
//! <slide image_ref="slide.png" width="640" height="480">
//! <title id="0">Discovering Attention Patterns</title>
//! <table id="3">alpha | beta | gamma | delta</table>
//! </slide>
//! ```
//!
//! One element per region, in reading order, named by class. `&`, `<`, `>`,
//! `"` and line breaks in content are escaped as entities.

use crate::error::{Error, Result};
use crate::extract::{Payload, SlideDocument};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MarkupEntry {
    pub id: u32,
    pub class: String,
    pub content: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedMarkup {
    pub image_ref: String,
    pub width: u32,
    pub height: u32,
    pub entries: Vec<MarkupEntry>,
}

/// Plain-text content of a payload as it appears in markup.
pub fn payload_text(payload: &Payload) -> String {
    match payload {
        Payload::Text(t) | Payload::FigureClass(t) | Payload::EquationDescription(t) => t.clone(),
        Payload::Table(t) => t.cell_texts.join(" | "),
        Payload::Error(_) => String::new(),
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\n' => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str, offset: usize) -> Result<String> {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(i) = rest.find('&') {
        out.push_str(&rest[..i]);
        let tail = &rest[i..];
        let end = tail.find(';').ok_or_else(|| parse_err(offset, "unterminated entity"))?;
        out.push(match &tail[..=end] {
            "&amp;" => '&',
            "&lt;" => '<',
            "&gt;" => '>',
            "&quot;" => '"',
            "&#10;" => '\n',
            "&#13;" => '\r',
            other => return Err(parse_err(offset, &format!("unknown entity {other}"))),
        });
        rest = &tail[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn parse_err(offset: usize, message: &str) -> Error {
    Error::Parse {
        offset,
        message: message.to_string(),
    }
}

pub fn to_markup(doc: &SlideDocument) -> String {
    let mut out = format!(
        "<slide image_ref=\"{}\" width=\"{}\" height=\"{}\">\n",
        escape(&doc.image_ref),
        doc.width,
        doc.height
    );
    for r in doc.ordered() {
        out.push_str(&format!(
            "<{cls} id=\"{}\">{}</{cls}>\n",
            r.id,
            escape(&payload_text(&r.payload)),
            cls = r.class
        ));
    }
    out.push_str("</slide>\n");
    out
}

/// `name="value"` pairs of an opening tag body.
fn attributes(body: &str, offset: usize) -> Result<Vec<(String, String)>> {
    let mut attrs = Vec::new();
    let mut rest = body.trim_start();
    while !rest.is_empty() {
        let eq = rest.find("=\"").ok_or_else(|| parse_err(offset, "malformed attribute"))?;
        let name = rest[..eq].trim().to_string();
        let after = &rest[eq + 2..];
        let close = after.find('"').ok_or_else(|| parse_err(offset, "unterminated attribute value"))?;
        attrs.push((name, unescape(&after[..close], offset)?));
        rest = after[close + 1..].trim_start();
    }
    Ok(attrs)
}

fn attr<'a>(attrs: &'a [(String, String)], name: &str, offset: usize) -> Result<&'a str> {
    attrs
        .iter()
        .find(|(n, _)| n == name)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| parse_err(offset, &format!("missing attribute `{name}`")))
}

fn number<T: std::str::FromStr>(s: &str, offset: usize) -> Result<T> {
    s.parse().map_err(|_| parse_err(offset, &format!("`{s}` is not a number")))
}

/// Inverse of [`to_markup`].
pub fn parse_markup(text: &str) -> Result<ParsedMarkup> {
    let mut lines = text.lines();
    let mut offset = 0;
    let head = lines.next().ok_or_else(|| parse_err(0, "empty markup"))?;
    let body = head
        .strip_prefix("<slide ")
        .and_then(|s| s.strip_suffix('>'))
        .ok_or_else(|| parse_err(0, "expected <slide ...> envelope"))?;
    let attrs = attributes(body, 0)?;
    let mut parsed = ParsedMarkup {
        image_ref: attr(&attrs, "image_ref", 0)?.to_string(),
        width: number(attr(&attrs, "width", 0)?, 0)?,
        height: number(attr(&attrs, "height", 0)?, 0)?,
        entries: Vec::new(),
    };
    offset += head.len() + 1;
    let mut closed = false;
    for line in lines {
        let at = offset;
        offset += line.len() + 1;
        if closed {
            if line.trim().is_empty() {
                continue;
            }
            return Err(parse_err(at, "content after </slide>"));
        }
        if line == "</slide>" {
            closed = true;
            continue;
        }
        let inner = line.strip_prefix('<').ok_or_else(|| parse_err(at, "expected an element"))?;
        let gt = inner.find('>').ok_or_else(|| parse_err(at, "unterminated start tag"))?;
        let start = &inner[..gt];
        let (class, attr_body) = start.split_once(' ').ok_or_else(|| parse_err(at, "element lacks an id"))?;
        let attrs = attributes(attr_body, at)?;
        let id = number(attr(&attrs, "id", at)?, at)?;
        let close = format!("</{class}>");
        let content = inner[gt + 1..]
            .strip_suffix(close.as_str())
            .ok_or_else(|| parse_err(at, &format!("expected closing {close}")))?;
        parsed.entries.push(MarkupEntry {
            id,
            class: class.to_string(),
            content: unescape(content, at)?,
        });
    }
    if !closed {
        return Err(parse_err(offset, "missing </slide>"));
    }
    Ok(parsed)
}

/// (class, content) pairs of a document in reading order.
pub fn document_entries(doc: &SlideDocument) -> Vec<MarkupEntry> {
    doc.ordered()
        .map(|r| MarkupEntry {
            id: r.id,
            class: r.class.clone(),
            content: payload_text(&r.payload),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Coarse;
    use crate::extract::{DocRegion, DOCUMENT_VERSION};
    use crate::geometry::BBox;

    fn doc(regions: Vec<DocRegion>, order: Vec<u32>) -> SlideDocument {
        SlideDocument {
            image_ref: "a \"b\".png".into(),
            width: 50,
            height: 40,
            regions,
            reading_order: order,
            version: DOCUMENT_VERSION.into(),
        }
    }

    #[test]
    fn empty_document_envelope() {
        let m = to_markup(&doc(vec![], vec![]));
        assert_eq!(m, "<slide image_ref=\"a &quot;b&quot;.png\" width=\"50\" height=\"40\">\n</slide>\n");
        let p = parse_markup(&m).unwrap();
        assert_eq!(p.image_ref, "a \"b\".png");
        assert!(p.entries.is_empty());
    }

    #[test]
    fn heading_round_trip() {
        let d = doc(
            vec![
                DocRegion {
                    id: 1,
                    class: "text".into(),
                    coarse: Coarse::Text,
                    bbox: BBox::new(0, 20, 10, 10),
                    confidence: 1.0,
                    payload: Payload::Text("a < b & c\nnext".into()),
                },
                DocRegion {
                    id: 0,
                    class: "heading".into(),
                    coarse: Coarse::Text,
                    bbox: BBox::new(0, 0, 40, 8),
                    confidence: 1.0,
                    payload: Payload::Text("Discovering Attention Patterns".into()),
                },
            ],
            vec![0, 1],
        );
        let m = to_markup(&d);
        assert!(m.contains("<heading id=\"0\">Discovering Attention Patterns</heading>\n"));
        assert_eq!(parse_markup(&m).unwrap().entries, document_entries(&d));
    }

    #[test]
    fn malformed_markup() {
        assert!(parse_markup("").is_err());
        assert!(parse_markup("<slide image_ref=\"a\" width=\"1\" height=\"1\">\n<text id=\"0\">x</title>\n</slide>").is_err());
        assert!(parse_markup("<slide image_ref=\"a\" width=\"1\" height=\"1\">\n").is_err());
        let err = parse_markup("<slide image_ref=\"a\" width=\"1\" height=\"1\">\n<text id=\"0\">&bogus;</text>\n</slide>\n").unwrap_err();
        assert!(matches!(err, Error::Parse { offset, .. } if offset > 0));
    }
}
