//! Mask → regions → recognizer adapters → SlideDocument.

pub mod adapters;
pub mod document;
pub mod regions;

pub use adapters::{
    crop, recognize_all, AdapterKind, AdapterRegistry, GridShape, Payload, RecognizerAdapter, StubEquation,
    StubFigure, StubOcr, StubTable, TableCell, TablePayload,
};
pub use document::{build_document, DocRegion, SlideDocument, DOCUMENT_VERSION, SCHEMA_V1};
pub use regions::{components, default_min_area, mask_from_regions, regions_from_mask, Region};
