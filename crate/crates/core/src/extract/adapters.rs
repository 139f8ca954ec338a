//! Recognizer adapter contract, registry and the deterministic stubs.

use std::collections::BTreeMap;
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::str::FromStr;
use std::sync::Arc;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::regions::Region;
use crate::dataio::{Coarse, FixtureContent, SlideFixture};
use crate::error::{Error, Result};
use crate::geometry::BBox;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdapterKind {
    Ocr,
    Figure,
    Equation,
    Table,
}

impl AdapterKind {
    pub const ALL: [AdapterKind; 4] = [AdapterKind::Ocr, AdapterKind::Figure, AdapterKind::Equation, AdapterKind::Table];

    /// `other` regions go to the figure classifier.
    pub fn for_coarse(coarse: Coarse) -> Self {
        match coarse {
            Coarse::Text => AdapterKind::Ocr,
            Coarse::Figure | Coarse::Other => AdapterKind::Figure,
            Coarse::Equation => AdapterKind::Equation,
            Coarse::Table => AdapterKind::Table,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AdapterKind::Ocr => "ocr",
            AdapterKind::Figure => "figure",
            AdapterKind::Equation => "equation",
            AdapterKind::Table => "table",
        }
    }
}

impl fmt::Display for AdapterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AdapterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AdapterKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown adapter kind `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableCell {
    pub row: usize,
    pub col: usize,
    pub bbox: BBox,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridShape {
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TablePayload {
    pub grid: GridShape,
    /// Row-major.
    pub cells: Vec<TableCell>,
    /// Row-major, one per cell.
    pub cell_texts: Vec<String>,
}

impl TablePayload {
    /// Evenly divided `rows × cols` grid over `bbox`.
    pub fn uniform(bbox: BBox, rows: usize, cols: usize, cell_texts: Vec<String>) -> Self {
        let mut cells = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let y0 = bbox.y + (r as u32 * bbox.h) / rows as u32;
                let y1 = bbox.y + ((r as u32 + 1) * bbox.h) / rows as u32;
                let x0 = bbox.x + (c as u32 * bbox.w) / cols as u32;
                let x1 = bbox.x + ((c as u32 + 1) * bbox.w) / cols as u32;
                cells.push(TableCell {
                    row: r,
                    col: c,
                    bbox: BBox::new(x0, y0, (x1 - x0).max(1), (y1 - y0).max(1)),
                });
            }
        }
        Self {
            grid: GridShape { rows, cols },
            cells,
            cell_texts,
        }
    }
}

/// Recognised content of one region.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Payload {
    Text(String),
    FigureClass(String),
    EquationDescription(String),
    Table(TablePayload),
    /// Recognizer failure; the region is kept.
    Error(String),
}

impl Payload {
    /// Whether this variant is the one `coarse` regions carry.
    pub fn matches(&self, coarse: Coarse) -> bool {
        matches!(
            (self, AdapterKind::for_coarse(coarse)),
            (Payload::Error(_), _)
                | (Payload::Text(_), AdapterKind::Ocr)
                | (Payload::FigureClass(_), AdapterKind::Figure)
                | (Payload::EquationDescription(_), AdapterKind::Equation)
                | (Payload::Table(_), AdapterKind::Table)
        )
    }
}

pub trait RecognizerAdapter: Send + Sync {
    fn kind(&self) -> AdapterKind;

    /// `crop` is the region's tight bounding box cut from the slide.
    fn recognize(&self, crop: &RgbImage, region: &Region) -> Result<Payload>;

    /// Adapters that cannot run concurrently return false.
    fn concurrent(&self) -> bool {
        true
    }
}

#[derive(Clone, Default)]
pub struct AdapterRegistry {
    adapters: BTreeMap<AdapterKind, Arc<dyn RecognizerAdapter>>,
}

impl fmt::Debug for AdapterRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.adapters.keys()).finish()
    }
}

impl AdapterRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replaces any adapter already registered for the same kind.
    pub fn register(&mut self, adapter: Arc<dyn RecognizerAdapter>) {
        self.adapters.insert(adapter.kind(), adapter);
    }

    pub fn get(&self, kind: AdapterKind) -> Option<&Arc<dyn RecognizerAdapter>> {
        self.adapters.get(&kind)
    }

    pub fn kinds(&self) -> Vec<AdapterKind> {
        self.adapters.keys().copied().collect()
    }

    /// All four stubs, reading ground truth from `fixture` when given.
    pub fn stubs(fixture: Option<SlideFixture>) -> Self {
        let fixture = fixture.map(Arc::new);
        let mut reg = Self::new();
        reg.register(Arc::new(StubOcr { fixture: fixture.clone() }));
        reg.register(Arc::new(StubFigure));
        reg.register(Arc::new(StubEquation { fixture: fixture.clone() }));
        reg.register(Arc::new(StubTable { fixture }));
        reg
    }
}

/// The fixture region of a matching content kind that overlaps `bbox` most.
fn best_match<'a>(
    fixture: &'a SlideFixture,
    bbox: &BBox,
    accept: impl Fn(&FixtureContent) -> bool,
) -> Option<&'a FixtureContent> {
    fixture
        .regions
        .iter()
        .filter(|r| accept(&r.content))
        .map(|r| (r.bbox.iou(bbox), &r.content))
        .filter(|(iou, _)| *iou > 0.0)
        .fold(None, |best: Option<(f64, &FixtureContent)>, cand| match best {
            Some(b) if b.0 >= cand.0 => Some(b),
            _ => Some(cand),
        })
        .map(|(_, c)| c)
}

/// Returns the fixture text under the region, or an empty string.
pub struct StubOcr {
    pub fixture: Option<Arc<SlideFixture>>,
}

impl RecognizerAdapter for StubOcr {
    fn kind(&self) -> AdapterKind {
        AdapterKind::Ocr
    }

    fn recognize(&self, _crop: &RgbImage, region: &Region) -> Result<Payload> {
        let text = self
            .fixture
            .as_deref()
            .and_then(|f| best_match(f, &region.bbox, |c| matches!(c, FixtureContent::Text { .. })))
            .map(|c| match c {
                FixtureContent::Text { text } => text.clone(),
                _ => unreachable!("filtered to text"),
            })
            .unwrap_or_default();
        Ok(Payload::Text(text))
    }
}

/// Always answers "diagram".
pub struct StubFigure;

impl RecognizerAdapter for StubFigure {
    fn kind(&self) -> AdapterKind {
        AdapterKind::Figure
    }

    fn recognize(&self, _crop: &RgbImage, _region: &Region) -> Result<Payload> {
        Ok(Payload::FigureClass("diagram".into()))
    }
}

pub struct StubEquation {
    pub fixture: Option<Arc<SlideFixture>>,
}

impl RecognizerAdapter for StubEquation {
    fn kind(&self) -> AdapterKind {
        AdapterKind::Equation
    }

    fn recognize(&self, _crop: &RgbImage, region: &Region) -> Result<Payload> {
        let desc = self
            .fixture
            .as_deref()
            .and_then(|f| best_match(f, &region.bbox, |c| matches!(c, FixtureContent::Equation { .. })))
            .map(|c| match c {
                FixtureContent::Equation { description } => description.clone(),
                _ => unreachable!("filtered to equations"),
            })
            .unwrap_or_else(|| "equation".into());
        Ok(Payload::EquationDescription(desc))
    }
}

/// Fixture grid over the region's box; a single empty cell without one.
pub struct StubTable {
    pub fixture: Option<Arc<SlideFixture>>,
}

impl RecognizerAdapter for StubTable {
    fn kind(&self) -> AdapterKind {
        AdapterKind::Table
    }

    fn recognize(&self, _crop: &RgbImage, region: &Region) -> Result<Payload> {
        let found = self
            .fixture
            .as_deref()
            .and_then(|f| best_match(f, &region.bbox, |c| matches!(c, FixtureContent::Table { .. })));
        Ok(Payload::Table(match found {
            Some(FixtureContent::Table { rows, cols, cells }) => {
                TablePayload::uniform(region.bbox, *rows, *cols, cells.clone())
            }
            _ => TablePayload::uniform(region.bbox, 1, 1, vec![String::new()]),
        }))
    }
}

pub fn crop(image: &RgbImage, bbox: &BBox) -> RgbImage {
    image::imageops::crop_imm(image, bbox.x, bbox.y, bbox.w, bbox.h).to_image()
}

fn run_one(adapter: &dyn RecognizerAdapter, image: &RgbImage, region: &Region) -> Payload {
    let piece = crop(image, &region.bbox);
    match catch_unwind(AssertUnwindSafe(|| adapter.recognize(&piece, region))) {
        Ok(Ok(p)) => p,
        Ok(Err(e)) => {
            log::warn!("{} adapter failed on region {}: {e}", adapter.kind(), region.id);
            Payload::Error(e.to_string())
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "adapter panicked".into());
            log::warn!("{} adapter panicked on region {}: {msg}", adapter.kind(), region.id);
            Payload::Error(msg)
        }
    }
}

/// Dispatch every region's crop to the adapter for its coarse class.
/// Concurrent adapters run on scoped threads; results keep region order.
pub fn recognize_all(image: &RgbImage, regions: &[Region], registry: &AdapterRegistry) -> Result<Vec<(Region, Payload)>> {
    let mut missing: Vec<AdapterKind> = regions
        .iter()
        .map(|r| AdapterKind::for_coarse(r.coarse))
        .filter(|k| registry.get(*k).is_none())
        .collect();
    missing.sort();
    missing.dedup();
    if !missing.is_empty() {
        let names: Vec<&str> = missing.iter().map(|k| k.as_str()).collect();
        return Err(Error::config(format!("no adapter registered for: {}", names.join(", "))));
    }
    for r in regions {
        if !r.bbox.fits_within(image.width(), image.height()) {
            return Err(Error::validation(
                format!("regions[{}].bbox", r.id),
                "bounding box lies outside the image",
            ));
        }
    }
    let adapter_of = |r: &Region| registry.get(AdapterKind::for_coarse(r.coarse)).expect("checked above").clone();
    let mut payloads: Vec<Option<Payload>> = vec![None; regions.len()];
    std::thread::scope(|s| {
        let handles: Vec<_> = regions
            .iter()
            .enumerate()
            .filter(|(_, r)| adapter_of(r).concurrent())
            .map(|(i, r)| {
                let adapter = adapter_of(r);
                (i, s.spawn(move || run_one(adapter.as_ref(), image, r)))
            })
            .collect();
        for (i, r) in regions.iter().enumerate() {
            let adapter = adapter_of(r);
            if !adapter.concurrent() {
                payloads[i] = Some(run_one(adapter.as_ref(), image, r));
            }
        }
        for (i, h) in handles {
            payloads[i] = Some(h.join().unwrap_or_else(|_| Payload::Error("adapter thread failed".into())));
        }
    });
    Ok(regions
        .iter()
        .cloned()
        .zip(payloads.into_iter().map(|p| p.expect("every region dispatched")))
        .collect())
}
