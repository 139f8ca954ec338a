//! Image in, SlideDocument out.

use image::RgbImage;

use crate::dataio::LabelSet;
use crate::error::Result;
use crate::extract::{build_document, default_min_area, recognize_all, regions_from_mask, AdapterRegistry, SlideDocument};
use crate::mask::{MultiLabelMask, ProbMask};
use crate::narrate::{is_title_class, reading_order, OrderItem};
use crate::segnet::SegNet;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineOptions {
    pub threshold: f64,
    /// `None` uses [`default_min_area`] for the image size.
    pub min_region_area: Option<usize>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            threshold: 0.5,
            min_region_area: None,
        }
    }
}

pub struct Segmentation {
    pub probs: ProbMask,
    pub mask: MultiLabelMask,
}

pub fn segment(net: &SegNet, labels: &LabelSet, image: &RgbImage, threshold: f64) -> Result<Segmentation> {
    net.check_label_count(labels.len())?;
    let (probs, mask) = net.predict(image, threshold)?;
    Ok(Segmentation { probs, mask })
}

/// Regions, payloads and reading order for an already segmented slide.
pub fn document_from_mask(
    image: &RgbImage,
    image_ref: &str,
    seg: &Segmentation,
    labels: &LabelSet,
    registry: &AdapterRegistry,
    min_region_area: Option<usize>,
) -> Result<SlideDocument> {
    let (w, h) = image.dimensions();
    let min_area = min_region_area.unwrap_or_else(|| default_min_area(h as usize, w as usize));
    let regions = regions_from_mask(&seg.mask, Some(&seg.probs), min_area, labels)?;
    let recognized = recognize_all(image, &regions, registry)?;
    let items: Vec<OrderItem> = regions
        .iter()
        .map(|r| OrderItem {
            id: r.id,
            bbox: r.bbox,
            is_title: is_title_class(&r.class_name),
        })
        .collect();
    build_document(image_ref, w, h, recognized, reading_order(&items))
}

pub fn process_slide(
    net: &SegNet,
    labels: &LabelSet,
    image: &RgbImage,
    image_ref: &str,
    registry: &AdapterRegistry,
    opts: &PipelineOptions,
) -> Result<SlideDocument> {
    let seg = segment(net, labels, image, opts.threshold)?;
    document_from_mask(image, image_ref, &seg, labels, registry, opts.min_region_area)
}
