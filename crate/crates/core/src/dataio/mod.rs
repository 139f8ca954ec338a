//! Slide datasets: label sets, the mask container, the loader, and the
//! synthetic toy generator.

pub mod codec;
pub mod labels;
pub mod loader;
pub mod toy;

use image::RgbImage;

use crate::mask::MultiLabelMask;

pub use codec::{decode_mask, encode_mask};
pub use labels::{Coarse, LabelSet};
pub use loader::{load_dataset, read_labels, split_sizes, write_labels, write_sample, Dataset, Split};
pub use toy::{make_toy_dataset, make_toy_slide, FixtureContent, FixtureRegion, SlideFixture, ToySlide};

#[derive(Clone, Debug, PartialEq)]
pub struct SlideSample {
    pub id: String,
    pub image: RgbImage,
    pub mask: MultiLabelMask,
}
