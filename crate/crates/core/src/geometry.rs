use serde::{Deserialize, Serialize};

/// Axis-aligned pixel rectangle: columns `x..x+w`, rows `y..y+h`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn right(&self) -> u32 {
        self.x + self.w
    }

    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn contains(&self, px: u32, py: u32) -> bool {
        px >= self.x && px < self.right() && py >= self.y && py < self.bottom()
    }

    pub fn contains_box(&self, other: &BBox) -> bool {
        other.x >= self.x && other.y >= self.y && other.right() <= self.right() && other.bottom() <= self.bottom()
    }

    pub fn intersection_area(&self, other: &BBox) -> u64 {
        let w = self.right().min(other.right()).saturating_sub(self.x.max(other.x));
        let h = self.bottom().min(other.bottom()).saturating_sub(self.y.max(other.y));
        w as u64 * h as u64
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Length of the shared row range.
    pub fn vertical_overlap(&self, other: &BBox) -> u32 {
        self.bottom().min(other.bottom()).saturating_sub(self.y.max(other.y))
    }

    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.w >= 1 && self.h >= 1 && self.right() <= width && self.bottom() <= height
    }

    pub fn translated(&self, dx: u32, dy: u32) -> Self {
        Self::new(self.x + dx, self.y + dy, self.w, self.h)
    }
}
