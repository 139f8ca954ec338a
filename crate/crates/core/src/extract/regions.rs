use serde::{Deserialize, Serialize};

use crate::dataio::{Coarse, LabelSet};
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::mask::{MultiLabelMask, ProbMask};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: u32,
    pub class_index: usize,
    pub class_name: String,
    pub coarse: Coarse,
    pub bbox: BBox,
    pub pixel_count: u64,
    /// Mean predicted probability over the component's pixels (1 without
    /// probabilities).
    pub confidence: f64,
}

/// 0.1% of the image, at least one pixel.
pub fn default_min_area(height: usize, width: usize) -> usize {
    (height * width).div_ceil(1000).max(1)
}

/// 4-connected components of one binary plane, in scan order of their first
/// pixel. Each component is its list of flat indices.
pub fn components(plane: &[u8], height: usize, width: usize) -> Vec<Vec<usize>> {
    let mut seen = vec![false; plane.len()];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..plane.len() {
        if plane[start] == 0 || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut comp = Vec::new();
        while let Some(i) = stack.pop() {
            comp.push(i);
            let (y, x) = (i / width, i % width);
            let mut visit = |j: usize| {
                if plane[j] != 0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if y > 0 {
                visit(i - width);
            }
            if y + 1 < height {
                visit(i + width);
            }
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < width {
                visit(i + 1);
            }
        }
        out.push(comp);
    }
    out
}

/// Connected components per class plane at or above `min_region_area`
/// pixels, ordered by class then by first pixel in scan order. Classes may
/// overlap, so regions may too.
pub fn regions_from_mask(
    mask: &MultiLabelMask,
    probs: Option<&ProbMask>,
    min_region_area: usize,
    labels: &LabelSet,
) -> Result<Vec<Region>> {
    let (k, h, w) = mask.dims();
    if labels.len() != k {
        return Err(Error::config(format!("mask has {k} classes, label set has {}", labels.len())));
    }
    if let Some(p) = probs {
        if p.tensor().shape() != [k, h, w] {
            return Err(Error::shape(format!(
                "probabilities {:?} do not match mask {:?}",
                p.tensor().shape(),
                (k, h, w)
            )));
        }
    }
    let mut regions = Vec::new();
    for c in 0..k {
        for comp in components(mask.plane(c), h, w) {
            if comp.len() < min_region_area.max(1) {
                continue;
            }
            let (mut x0, mut y0, mut x1, mut y1) = (w, h, 0, 0);
            let mut psum = 0.0;
            for &i in &comp {
                let (y, x) = (i / w, i % w);
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
                if let Some(p) = probs {
                    psum += p.get(c, y, x);
                }
            }
            let confidence = if probs.is_some() { psum / comp.len() as f64 } else { 1.0 };
            regions.push(Region {
                id: regions.len() as u32,
                class_index: c,
                class_name: labels.name(c).to_string(),
                coarse: labels.coarse(c),
                bbox: BBox::new(x0 as u32, y0 as u32, (x1 - x0 + 1) as u32, (y1 - y0 + 1) as u32),
                pixel_count: comp.len() as u64,
                confidence,
            });
        }
    }
    Ok(regions)
}

/// Rasterise region boxes back into a mask.
pub fn mask_from_regions(regions: &[Region], classes: usize, height: usize, width: usize) -> MultiLabelMask {
    let mut m = MultiLabelMask::new(classes, height, width);
    for r in regions {
        m.fill_rect(r.class_index, r.bbox.x as usize, r.bbox.y as usize, r.bbox.w as usize, r.bbox.h as usize);
    }
    m
}
