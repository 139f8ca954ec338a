#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use leanet::dataio::Coarse;
use leanet::extract::{DocRegion, Payload, SlideDocument, TablePayload, DOCUMENT_VERSION};
use leanet::geometry::BBox;
use leanet::narrate::document_order;

const CLASSES: [(&str, Coarse); 8] = [
    ("title", Coarse::Text),
    ("heading", Coarse::Text),
    ("paragraph", Coarse::Text),
    ("figure", Coarse::Figure),
    ("natural-image", Coarse::Figure),
    ("equation", Coarse::Equation),
    ("table", Coarse::Table),
    ("logo", Coarse::Other),
];

const ALPHABET: &[char] = &['a', 'Z', ' ', '&', '<', '>', '"', '\n', '\r', ';', '#', 'é', '=', '/', '|', '\t'];

pub fn random_text(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(0..12);
    (0..n).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())]).collect()
}

fn random_bbox(rng: &mut ChaCha8Rng, width: u32, height: u32) -> BBox {
    let x = rng.gen_range(0..width);
    let y = rng.gen_range(0..height);
    BBox::new(x, y, rng.gen_range(1..=width - x), rng.gen_range(1..=height - y))
}

/// A valid document with 0 to 7 regions; reading order from `document_order`.
pub fn random_document(seed: u64) -> SlideDocument {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = rng.gen_range(8..200);
    let height = rng.gen_range(8..200);
    let n = rng.gen_range(0..8);
    let mut regions = Vec::with_capacity(n);
    for i in 0..n {
        let (class, coarse) = CLASSES[rng.gen_range(0..CLASSES.len())];
        let bbox = random_bbox(&mut rng, width, height);
        let payload = if rng.gen_bool(0.1) {
            Payload::Error(random_text(&mut rng))
        } else {
            match coarse {
                Coarse::Text => Payload::Text(random_text(&mut rng)),
                Coarse::Figure | Coarse::Other => Payload::FigureClass(random_text(&mut rng)),
                Coarse::Equation => Payload::EquationDescription(random_text(&mut rng)),
                Coarse::Table => {
                    let (r, c) = (rng.gen_range(1..4), rng.gen_range(1..4));
                    let texts = (0..r * c).map(|_| random_text(&mut rng)).collect();
                    Payload::Table(TablePayload::uniform(bbox, r, c, texts))
                }
            }
        };
        regions.push(DocRegion {
            id: i as u32 * 3 + rng.gen_range(0..3),
            class: class.into(),
            coarse,
            bbox,
            confidence: rng.gen_range(0.0..=1.0),
            payload,
        });
    }
    let mut doc = SlideDocument {
        image_ref: format!("slide-{seed}.png"),
        width,
        height,
        regions,
        reading_order: Vec::new(),
        version: DOCUMENT_VERSION.into(),
    };
    doc.reading_order = document_order(&doc);
    doc.validate().expect("generator produced an invalid document");
    doc
}
