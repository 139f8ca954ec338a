//! Per-class raster masks. Classes are independent planes, so a pixel may carry
//! zero, one or several labels.

use crate::error::{Error, Result};
use crate::kernels::sigmoid;
use crate::tensor::Tensor;

/// Binary `[K, H, W]` mask stored one byte per entry (0 or 1).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiLabelMask {
    classes: usize,
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl MultiLabelMask {
    pub fn new(classes: usize, height: usize, width: usize) -> Self {
        Self {
            classes,
            height,
            width,
            data: vec![0; classes * height * width],
        }
    }

    pub fn from_vec(classes: usize, height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != classes * height * width {
            return Err(Error::shape(format!(
                "mask [{classes},{height},{width}] needs {} entries, got {}",
                classes * height * width,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|&v| v > 1) {
            return Err(Error::validation(
                format!("mask[{i}]"),
                format!("non-binary value {}", data[i]),
            ));
        }
        Ok(Self {
            classes,
            height,
            width,
            data,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.classes, self.height, self.width)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, k: usize, y: usize, x: usize) -> bool {
        self.data[(k * self.height + y) * self.width + x] != 0
    }

    pub fn set(&mut self, k: usize, y: usize, x: usize, on: bool) {
        self.data[(k * self.height + y) * self.width + x] = on as u8;
    }

    pub fn plane(&self, k: usize) -> &[u8] {
        let n = self.height * self.width;
        &self.data[k * n..(k + 1) * n]
    }

    pub fn plane_mut(&mut self, k: usize) -> &mut [u8] {
        let n = self.height * self.width;
        &mut self.data[k * n..(k + 1) * n]
    }

    /// Turn on every pixel of class `k` inside the rectangle, clipped to the raster.
    pub fn fill_rect(&mut self, k: usize, x: usize, y: usize, w: usize, h: usize) {
        for yy in y..(y + h).min(self.height) {
            for xx in x..(x + w).min(self.width) {
                self.set(k, yy, xx, true);
            }
        }
    }

    pub fn count(&self, k: usize) -> usize {
        self.plane(k).iter().filter(|&&v| v != 0).count()
    }

    /// Class indices with at least one pixel set.
    pub fn present_classes(&self) -> Vec<usize> {
        (0..self.classes).filter(|&k| self.count(k) > 0).collect()
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(
            &[self.classes, self.height, self.width],
            self.data.iter().map(|&v| v as f64).collect(),
        )
        .expect("mask dims")
    }
}

/// Per-class sigmoid probabilities, `[K, H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMask {
    probs: Tensor,
}

impl ProbMask {
    pub fn from_logits(logits: &Tensor) -> Self {
        Self {
            probs: logits.map(sigmoid),
        }
    }

    pub fn tensor(&self) -> &Tensor {
        &self.probs
    }

    pub fn get(&self, k: usize, y: usize, x: usize) -> f64 {
        self.probs.at3(k, y, x)
    }

    /// Per-pixel, per-class decision `p >= threshold`.
    pub fn threshold(&self, threshold: f64) -> MultiLabelMask {
        let (k, h, w) = self.probs.dims3();
        let data = self
            .probs
            .data()
            .iter()
            .map(|&p| (p >= threshold) as u8)
            .collect();
        MultiLabelMask::from_vec(k, h, w, data).expect("dims consistent")
    }
}
