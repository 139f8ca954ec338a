//! Procedural slide generator.
//!
//! Every slide has a title band in the top quarter, then a two-column body:
//! a text block on the left and (K ≥ 3) a bar-chart figure on the right with
//! a caption-like text block drawn inside it, so those pixels carry both
//! labels. With K ≥ 4 a table grid, and with K = 5 an equation strip, may
//! occupy a lower band. Each class has its own fill colour and texture.

use image::{Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::labels::LabelSet;
use super::SlideSample;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::mask::MultiLabelMask;

pub const MIN_CANVAS: (usize, usize) = (32, 32);

/// Ground-truth content the stub recognizers read back.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FixtureContent {
    Text { text: String },
    Figure { figure_class: String },
    Equation { description: String },
    Table { rows: usize, cols: usize, cells: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureRegion {
    pub class: String,
    pub bbox: BBox,
    pub content: FixtureContent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlideFixture {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub regions: Vec<FixtureRegion>,
}

#[derive(Clone, Debug)]
pub struct ToySlide {
    pub sample: SlideSample,
    pub fixture: SlideFixture,
}

const TITLES: [&str; 8] = [
    "Discovering Attention Patterns",
    "Location Encoding",
    "Dilated Convolutions",
    "Training Schedules",
    "Semantic Segmentation",
    "Reading Slides Aloud",
    "Multi Label Masks",
    "Pyramid Pooling",
];

const SENTENCES: [&str; 8] = [
    "Attention relates every position to every other position",
    "Sinusoidal codes tell the network where a pixel lies",
    "Overlapping labels are predicted independently",
    "Atrous filters enlarge the receptive field cheaply",
    "The learning rate decays polynomially",
    "Regions are read from top to bottom",
    "Each class has its own sigmoid output",
    "Slides mix text figures tables and equations",
];

const EQUATIONS: [&str; 4] = [
    "x squared plus y squared equals z squared",
    "sum over i of a i times b i",
    "e to the i pi plus one equals zero",
    "f of x equals m x plus c",
];

const TABLE_WORDS: [&str; 12] = [
    "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta", "iota", "kappa", "lambda", "mu",
];

const TITLE_FILL: Rgb<u8> = Rgb([196, 214, 242]);
const TITLE_INK: Rgb<u8> = Rgb([24, 40, 120]);
const TEXT_FILL: Rgb<u8> = Rgb([228, 228, 228]);
const TEXT_INK: Rgb<u8> = Rgb([28, 28, 28]);
const FIGURE_FILL: Rgb<u8> = Rgb([250, 196, 112]);
const FIGURE_INK: Rgb<u8> = Rgb([52, 150, 72]);
const TABLE_FILL: Rgb<u8> = Rgb([255, 248, 200]);
const TABLE_INK: Rgb<u8> = Rgb([96, 96, 96]);
const EQUATION_FILL: Rgb<u8> = Rgb([228, 206, 246]);
const EQUATION_INK: Rgb<u8> = Rgb([112, 36, 142]);

fn fill(img: &mut RgbImage, b: BBox, color: Rgb<u8>) {
    for y in b.y..b.bottom() {
        for x in b.x..b.right() {
            img.put_pixel(x, y, color);
        }
    }
}

/// Dashed "words" on every other row.
fn text_lines(img: &mut RgbImage, b: BBox, ink: Rgb<u8>, rng: &mut ChaCha8Rng) {
    if b.w < 3 || b.h < 3 {
        return;
    }
    let mut y = b.y + 1;
    while y + 1 < b.bottom() {
        let mut x = b.x + 1;
        let end = b.right() - 1 - rng.gen_range(0..=b.w / 4);
        while x < end {
            let len = rng.gen_range(2..=5).min(end - x);
            for xx in x..x + len {
                img.put_pixel(xx, y, ink);
            }
            x += len + 1;
        }
        y += 2;
    }
}

fn bars(img: &mut RgbImage, b: BBox, ink: Rgb<u8>, rng: &mut ChaCha8Rng) {
    if b.w < 4 || b.h < 4 {
        return;
    }
    let mut x = b.x + 1;
    while x + 2 < b.right() {
        let top = b.y + 1 + rng.gen_range(0..b.h - 2);
        for xx in x..x + 2 {
            for yy in top..b.bottom() - 1 {
                img.put_pixel(xx, yy, ink);
            }
        }
        x += 3;
    }
}

fn grid(img: &mut RgbImage, b: BBox, rows: u32, cols: u32, ink: Rgb<u8>) {
    for r in 0..=rows {
        let y = (b.y + r * (b.h - 1) / rows).min(b.bottom() - 1);
        for x in b.x..b.right() {
            img.put_pixel(x, y, ink);
        }
    }
    for c in 0..=cols {
        let x = (b.x + c * (b.w - 1) / cols).min(b.right() - 1);
        for y in b.y..b.bottom() {
            img.put_pixel(x, y, ink);
        }
    }
}

/// Plus-sign glyphs along the middle rows.
fn glyphs(img: &mut RgbImage, b: BBox, ink: Rgb<u8>) {
    if b.w < 3 || b.h < 3 {
        return;
    }
    let cy = b.y + b.h / 2;
    let mut x = b.x + 1;
    while x + 1 < b.right() {
        img.put_pixel(x, cy, ink);
        if x + 2 < b.right() {
            img.put_pixel(x + 1, cy, ink);
        }
        if cy > b.y {
            img.put_pixel(x, cy - 1, ink);
        }
        if cy + 1 < b.bottom() {
            img.put_pixel(x, cy + 1, ink);
        }
        x += 4;
    }
}

fn rect(x0: usize, y0: usize, x1: usize, y1: usize) -> BBox {
    BBox::new(x0 as u32, y0 as u32, (x1 - x0) as u32, (y1 - y0) as u32)
}

fn span(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    if hi <= lo {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// Render one slide. `index` selects an independent random stream.
pub fn make_toy_slide(labels: &LabelSet, seed: u64, index: usize, height: usize, width: usize) -> Result<ToySlide> {
    let k = labels.len();
    if height < MIN_CANVAS.0 || width < MIN_CANVAS.1 {
        return Err(Error::config(format!(
            "toy canvas {height}x{width} is too small for the slide layout (minimum {}x{})",
            MIN_CANVAS.0, MIN_CANVAS.1
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let (h, w) = (height, width);
    let m = (w / 20).max(1);
    let gap = (w / 32).max(1);

    let title_y = span(&mut rng, 1, (h / 24).max(1));
    let title_h = span(&mut rng, (h / 10).max(3), (h / 7).max(3)).min(h / 4 - title_y);
    let title_x = m + span(&mut rng, 0, w / 20);
    let title_w = span(&mut rng, w / 2, w * 4 / 5).min(w - m - title_x);
    let title = rect(title_x, title_y, title_x + title_w, title_y + title_h);

    let body_top = h / 4 + span(&mut rng, 1, (h / 24).max(1));
    let body_bottom = h - m;
    let has_table = k >= 4 && rng.gen_bool(0.75);
    let has_equation = k >= 5 && rng.gen_bool(0.75);
    let lower = has_table || has_equation;
    let split_y = if lower {
        body_top + ((body_bottom - body_top) as f64 * rng.gen_range(0.5..0.62)) as usize
    } else {
        body_bottom
    };
    let split_x = (w as f64 * rng.gen_range(0.45..0.58)) as usize;
    let upper_bottom = if lower { split_y - gap } else { split_y };

    let mut regions: Vec<(usize, BBox, FixtureContent)> = Vec::new();
    let text_idx = 1;
    let sentence = |rng: &mut ChaCha8Rng| SENTENCES.choose(rng).expect("non-empty").to_string();

    regions.push((
        0,
        title,
        FixtureContent::Text {
            text: TITLES.choose(&mut rng).expect("non-empty").to_string(),
        },
    ));
    let left = rect(m, body_top, split_x - gap, upper_bottom);
    regions.push((text_idx, left, FixtureContent::Text { text: sentence(&mut rng) }));
    let right = rect(split_x + gap, body_top, w - m, upper_bottom);
    let mut caption = None;
    if k >= 3 {
        regions.push((
            2,
            right,
            FixtureContent::Figure {
                figure_class: "diagram".into(),
            },
        ));
        if right.w >= 10 && right.h >= 10 && rng.gen_bool(0.85) {
            let ch = (right.h / 4).max(3);
            let cap = BBox::new(right.x + 2, right.bottom() - ch - 1, right.w - 4, ch);
            caption = Some(cap);
            regions.push((text_idx, cap, FixtureContent::Text { text: sentence(&mut rng) }));
        }
    } else {
        regions.push((text_idx, right, FixtureContent::Text { text: sentence(&mut rng) }));
    }
    let mut table_shape = None;
    if lower {
        let lower_top = split_y;
        let table_right = if has_equation { split_x - gap } else { w - m };
        let eq_left = if has_table { split_x + gap } else { m };
        if has_table {
            let b = rect(m, lower_top, table_right, body_bottom);
            let rows = rng.gen_range(2..=3).min((b.h / 3).max(1) as usize);
            let cols = rng.gen_range(2..=4).min((b.w / 3).max(1) as usize);
            let cells = (0..rows * cols)
                .map(|_| TABLE_WORDS.choose(&mut rng).expect("non-empty").to_string())
                .collect();
            table_shape = Some((rows as u32, cols as u32));
            regions.push((3, b, FixtureContent::Table { rows, cols, cells }));
        }
        if has_equation {
            let b = rect(eq_left, lower_top, w - m, body_bottom);
            regions.push((
                4,
                b,
                FixtureContent::Equation {
                    description: EQUATIONS.choose(&mut rng).expect("non-empty").to_string(),
                },
            ));
        }
    }

    let bg = rng.gen_range(246..=255u8);
    let mut image = RgbImage::from_pixel(w as u32, h as u32, Rgb([bg, bg, bg.saturating_sub(2)]));
    let mut mask = MultiLabelMask::new(k, h, w);
    // figure before its caption so the caption texture sits on top
    let mut draw_order: Vec<usize> = (0..regions.len()).collect();
    draw_order.sort_by_key(|&i| Some(regions[i].1) == caption);
    for i in draw_order {
        let (class, b, content) = &regions[i];
        mask.fill_rect(*class, b.x as usize, b.y as usize, b.w as usize, b.h as usize);
        match (class, content) {
            (0, _) => {
                fill(&mut image, *b, TITLE_FILL);
                text_lines(&mut image, *b, TITLE_INK, &mut rng);
            }
            (2, _) => {
                fill(&mut image, *b, FIGURE_FILL);
                bars(&mut image, *b, FIGURE_INK, &mut rng);
            }
            (3, _) => {
                fill(&mut image, *b, TABLE_FILL);
                let (rows, cols) = table_shape.expect("table shape recorded");
                grid(&mut image, *b, rows, cols, TABLE_INK);
            }
            (4, _) => {
                fill(&mut image, *b, EQUATION_FILL);
                glyphs(&mut image, *b, EQUATION_INK);
            }
            _ => {
                fill(&mut image, *b, TEXT_FILL);
                text_lines(&mut image, *b, TEXT_INK, &mut rng);
            }
        }
    }

    let id = format!("toy-{seed}-{index:04}");
    let fixture = SlideFixture {
        id: id.clone(),
        width: w as u32,
        height: h as u32,
        regions: regions
            .into_iter()
            .map(|(class, bbox, content)| FixtureRegion {
                class: labels.name(class).to_string(),
                bbox,
                content,
            })
            .collect(),
    };
    Ok(ToySlide {
        sample: SlideSample { id, image, mask },
        fixture,
    })
}

/// `n_slides` toy slides over the first `k` toy classes.
pub fn make_toy_dataset(n_slides: usize, k: usize, seed: u64, canvas: (usize, usize)) -> Result<Vec<ToySlide>> {
    if n_slides == 0 {
        return Err(Error::config("toy dataset needs at least one slide"));
    }
    let labels = LabelSet::toy(k)?;
    (0..n_slides)
        .map(|i| make_toy_slide(&labels, seed, i, canvas.0, canvas.1))
        .collect()
}
