use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::adapters::{Payload, TablePayload};
use super::regions::Region;
use crate::dataio::Coarse;
use crate::error::{Error, Result};
use crate::geometry::BBox;

pub const DOCUMENT_VERSION: &str = "1";

/// JSON schema (draft-07) for serialized documents.
pub const SCHEMA_V1: &str = include_str!("../../schema/slide_document.v1.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocRegion {
    pub id: u32,
    pub class: String,
    pub coarse: Coarse,
    pub bbox: BBox,
    pub confidence: f64,
    pub payload: Payload,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlideDocument {
    pub image_ref: String,
    pub width: u32,
    pub height: u32,
    pub regions: Vec<DocRegion>,
    pub reading_order: Vec<u32>,
    pub version: String,
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::validation(field, message)
}

impl SlideDocument {
    pub fn region(&self, id: u32) -> Option<&DocRegion> {
        self.regions.iter().find(|r| r.id == id)
    }

    /// Regions in reading order.
    pub fn ordered(&self) -> impl Iterator<Item = &DocRegion> + '_ {
        self.reading_order.iter().filter_map(|id| self.region(*id))
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != DOCUMENT_VERSION {
            return Err(invalid(
                "version",
                format!("expected \"{DOCUMENT_VERSION}\", got \"{}\"", self.version),
            ));
        }
        if self.image_ref.is_empty() {
            return Err(invalid("image_ref", "must not be empty"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(invalid("width", "image dimensions must be positive"));
        }
        let mut ids = Vec::with_capacity(self.regions.len());
        for (i, r) in self.regions.iter().enumerate() {
            let f = |name: &str| format!("regions[{i}].{name}");
            let mut chars = r.class.chars();
            let ident = matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
                && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
            if !ident {
                return Err(invalid(f("class"), format!("`{}` is not a class identifier", r.class)));
            }
            if !r.bbox.fits_within(self.width, self.height) {
                return Err(invalid(
                    f("bbox"),
                    format!("{:?} is empty or outside the {}x{} image", r.bbox, self.width, self.height),
                ));
            }
            if !(0.0..=1.0).contains(&r.confidence) {
                return Err(invalid(f("confidence"), format!("{} is outside [0, 1]", r.confidence)));
            }
            if !r.payload.matches(r.coarse) {
                return Err(invalid(f("payload"), format!("variant does not fit coarse class `{}`", r.coarse)));
            }
            if let Payload::Table(t) = &r.payload {
                check_table(t, &f("payload.table"))?;
            }
            ids.push(r.id);
        }
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("regions", "region ids are not unique"));
        }
        let mut order = self.reading_order.clone();
        order.sort_unstable();
        if order != sorted {
            return Err(invalid("reading_order", "is not a permutation of the region ids"));
        }
        Ok(())
    }

    /// Sorted keys, no insignificant whitespace, confidences with six
    /// decimals. Equal documents serialize to equal bytes.
    pub fn to_canonical_json(&self) -> Result<String> {
        self.validate()?;
        let mut value = serde_json::to_value(self)?;
        if let Some(regions) = value.get_mut("regions").and_then(Value::as_array_mut) {
            for r in regions {
                if let Some(c) = r.get_mut("confidence") {
                    let rounded = format!("{:.6}", c.as_f64().unwrap_or(0.0));
                    *c = Value::String(rounded);
                }
            }
        }
        let mut out = String::new();
        write_canonical(&value, &mut out);
        Ok(out)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SlideDocument = serde_json::from_str(text).map_err(|e| {
            let field = e.to_string();
            invalid(json_field_hint(&field), field)
        })?;
        doc.validate()?;
        Ok(doc)
    }
}

fn json_field_hint(message: &str) -> String {
    // serde messages name the field in backticks, e.g. "missing field `width`"
    message
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "document".into())
}

fn check_table(t: &TablePayload, field: &str) -> Result<()> {
    let n = t.grid.rows * t.grid.cols;
    if n == 0 {
        return Err(invalid(format!("{field}.grid"), "rows and cols must be positive"));
    }
    if t.cells.len() != n {
        return Err(invalid(format!("{field}.cells"), format!("expected {n} cells, got {}", t.cells.len())));
    }
    if t.cell_texts.len() != n {
        return Err(invalid(
            format!("{field}.cell_texts"),
            format!("expected {n} texts, got {}", t.cell_texts.len()),
        ));
    }
    for (i, c) in t.cells.iter().enumerate() {
        if c.row != i / t.grid.cols || c.col != i % t.grid.cols {
            return Err(invalid(format!("{field}.cells[{i}]"), "cells are not in row-major order"));
        }
    }
    Ok(())
}

/// Confidence strings produced above are written as bare numbers.
fn write_canonical(v: &Value, out: &mut String) {
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String((*k).clone()).to_string());
                out.push(':');
                let child = &map[k.as_str()];
                match (k.as_str(), child) {
                    ("confidence", Value::String(s)) => out.push_str(s),
                    _ => write_canonical(child, out),
                }
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        other => out.push_str(&other.to_string()),
    }
}

/// Assemble and validate a document. Region ids are kept; `reading_order`
/// must be a permutation of them.
pub fn build_document(
    image_ref: &str,
    width: u32,
    height: u32,
    recognized: Vec<(Region, Payload)>,
    reading_order: Vec<u32>,
) -> Result<SlideDocument> {
    let doc = SlideDocument {
        image_ref: image_ref.to_string(),
        width,
        height,
        regions: recognized
            .into_iter()
            .map(|(r, payload)| DocRegion {
                id: r.id,
                class: r.class_name,
                coarse: r.coarse,
                bbox: r.bbox,
                confidence: r.confidence,
                payload,
            })
            .collect(),
        reading_order,
        version: DOCUMENT_VERSION.into(),
    };
    doc.validate()?;
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn one_of_each() -> SlideDocument {
        let r = |id: u32, class: &str, coarse: Coarse, bbox: BBox, payload: Payload| DocRegion {
            id,
            class: class.into(),
            coarse,
            bbox,
            confidence: 0.9,
            payload,
        };
        SlideDocument {
            image_ref: "slide.png".into(),
            width: 100,
            height: 80,
            regions: vec![
                r(0, "title", Coarse::Text, BBox::new(5, 2, 60, 10), Payload::Text("Discovering Attention Patterns".into())),
                r(1, "figure", Coarse::Figure, BBox::new(55, 20, 40, 30), Payload::FigureClass("diagram".into())),
                r(2, "equation", Coarse::Equation, BBox::new(5, 60, 40, 10), Payload::EquationDescription("e equals m c squared".into())),
                r(
                    3,
                    "table",
                    Coarse::Table,
                    BBox::new(5, 20, 40, 30),
                    Payload::Table(TablePayload::uniform(BBox::new(5, 20, 40, 30), 2, 2, vec!["a".into(), "b".into(), "c".into(), "d".into()])),
                ),
            ],
            reading_order: vec![0, 3, 1, 2],
            version: DOCUMENT_VERSION.into(),
        }
    }

    #[test]
    fn canonical_round_trip() {
        let doc = one_of_each();
        let a = doc.to_canonical_json().unwrap();
        let back = SlideDocument::from_json(&a).unwrap();
        assert_eq!(back.to_canonical_json().unwrap(), a);
        assert!(a.starts_with("{\"height\":80,\"image_ref\":\"slide.png\",\"reading_order\":[0,3,1,2],\"regions\":[{\"bbox\":"));
        assert!(a.contains("\"confidence\":0.900000"));
    }

    #[test]
    fn empty_document_is_valid() {
        let doc = build_document("x.png", 4, 4, vec![], vec![]).unwrap();
        let json = doc.to_canonical_json().unwrap();
        assert_eq!(
            json,
            "{\"height\":4,\"image_ref\":\"x.png\",\"reading_order\":[],\"regions\":[],\"version\":\"1\",\"width\":4}"
        );
    }

    #[test]
    fn validation_names_field() {
        let mut doc = one_of_each();
        doc.regions[1].payload = Payload::Text("oops".into());
        assert!(matches!(doc.validate(), Err(Error::Validation { ref field, .. }) if field == "regions[1].payload"));

        let mut doc = one_of_each();
        doc.reading_order.pop();
        assert!(matches!(doc.validate(), Err(Error::Validation { ref field, .. }) if field == "reading_order"));

        let err = SlideDocument::from_json("{\"image_ref\":\"a\"}").unwrap_err();
        assert!(matches!(err, Error::Validation { ref field, .. } if field == "width"), "{err}");
    }
}
