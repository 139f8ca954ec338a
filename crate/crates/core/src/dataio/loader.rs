//! On-disk dataset layout.
//!
//! ```text
//! <root>/labels.txt                      optional manifest (`name coarse` per line)
//! <root>/images/<split>/<id>.png
//! <root>/masks/<split>/<id>.lmask        run-length container, or
//! <root>/masks/<split>/<id>/<class>.png  one 8-bit plane per class (non-zero = on; absent = empty)
//! <root>/fixtures/<split>/<id>.json      optional recognizer ground truth
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::codec::{decode_mask, encode_mask};
use super::labels::LabelSet;
use super::toy::SlideFixture;
use super::SlideSample;
use crate::error::{Error, Result};
use crate::mask::MultiLabelMask;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown split `{s}` (train, val, test)")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum MaskSource {
    Container(PathBuf),
    Planes(PathBuf),
}

/// Read-only view of one split. Samples are decoded on access.
#[derive(Clone, Debug)]
pub struct Dataset {
    root: PathBuf,
    split: Split,
    labels: LabelSet,
    ids: Vec<String>,
    masks: Vec<MaskSource>,
}

fn list_ids(dir: &Path, ext: &str) -> Result<Vec<String>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

/// Image counts per split, in `Split::ALL` order.
pub fn split_sizes(root: &Path) -> Result<[usize; 3]> {
    let mut out = [0; 3];
    for (i, s) in Split::ALL.iter().enumerate() {
        out[i] = list_ids(&root.join("images").join(s.as_str()), "png")?.len();
    }
    Ok(out)
}

pub fn read_labels(root: &Path) -> Result<LabelSet> {
    let path = root.join("labels.txt");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    LabelSet::from_manifest(&text)
}

impl Dataset {
    /// Index a split and check that every image has a mask.
    pub fn open(root: &Path, split: Split, labels: LabelSet) -> Result<Self> {
        let ids = list_ids(&root.join("images").join(split.as_str()), "png")?;
        if ids.is_empty() {
            return Err(Error::Dataset(format!(
                "no images under {}",
                root.join("images").join(split.as_str()).display()
            )));
        }
        let mask_dir = root.join("masks").join(split.as_str());
        let mut masks = Vec::with_capacity(ids.len());
        let mut missing = Vec::new();
        for id in &ids {
            let container = mask_dir.join(format!("{id}.lmask"));
            let planes = mask_dir.join(id);
            if container.is_file() {
                masks.push(MaskSource::Container(container));
            } else if planes.is_dir() {
                masks.push(MaskSource::Planes(planes));
            } else {
                missing.push(id.as_str());
            }
        }
        if !missing.is_empty() {
            return Err(Error::Dataset(format!(
                "missing mask for image id(s): {}",
                missing.join(", ")
            )));
        }
        Ok(Self {
            root: root.to_path_buf(),
            split,
            labels,
            ids,
            masks,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn image_path(&self, i: usize) -> PathBuf {
        self.root.join("images").join(self.split.as_str()).join(format!("{}.png", self.ids[i]))
    }

    fn read_mask(&self, i: usize, h: usize, w: usize) -> Result<MultiLabelMask> {
        let id = &self.ids[i];
        let k = self.labels.len();
        match &self.masks[i] {
            MaskSource::Container(path) => {
                let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
                let mask = decode_mask(&bytes)?;
                if mask.classes() > k {
                    return Err(Error::Dataset(format!(
                        "mask for `{id}` uses class id {} but the label set has {k} classes",
                        mask.classes() - 1
                    )));
                }
                if mask.classes() < k {
                    return Err(Error::Dataset(format!(
                        "mask for `{id}` has {} classes, label set has {k}",
                        mask.classes()
                    )));
                }
                Ok(mask)
            }
            MaskSource::Planes(dir) => {
                let mut mask = MultiLabelMask::new(k, h, w);
                for name in list_ids(dir, "png")? {
                    let c = self.labels.index_of(&name).ok_or_else(|| {
                        Error::Dataset(format!("mask for `{id}` has unknown class `{name}`"))
                    })?;
                    let plane = image::open(dir.join(format!("{name}.png")))?.to_luma8();
                    if plane.dimensions() != (w as u32, h as u32) {
                        return Err(Error::Dataset(format!(
                            "class plane `{name}` of `{id}` is {:?}, image is {w}x{h}",
                            plane.dimensions()
                        )));
                    }
                    for (dst, src) in mask.plane_mut(c).iter_mut().zip(plane.as_raw()) {
                        *dst = u8::from(*src != 0);
                    }
                }
                Ok(mask)
            }
        }
    }

    pub fn get(&self, i: usize) -> Result<SlideSample> {
        let image = image::open(self.image_path(i))?.to_rgb8();
        let (w, h) = (image.width() as usize, image.height() as usize);
        let mask = self.read_mask(i, h, w)?;
        if (mask.height(), mask.width()) != (h, w) {
            return Err(Error::Dataset(format!(
                "mask for `{}` is {}x{}, image is {h}x{w}",
                self.ids[i],
                mask.height(),
                mask.width()
            )));
        }
        Ok(SlideSample {
            id: self.ids[i].clone(),
            image,
            mask,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = Result<SlideSample>> + '_ {
        (0..self.len()).map(|i| self.get(i))
    }

    pub fn fixture(&self, i: usize) -> Result<Option<SlideFixture>> {
        let path = self
            .root
            .join("fixtures")
            .join(self.split.as_str())
            .join(format!("{}.json", self.ids[i]));
        if !path.is_file() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Some(serde_json::from_str(&text)?))
    }
}

pub fn load_dataset(root: &Path, split: Split, labels: LabelSet) -> Result<Dataset> {
    Dataset::open(root, split, labels)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_labels(root: &Path, labels: &LabelSet) -> Result<()> {
    ensure_dir(root)?;
    let path = root.join("labels.txt");
    fs::write(&path, labels.to_manifest()).map_err(|e| Error::io(&path, e))
}

/// Store a sample in container layout, plus its fixture when given.
pub fn write_sample(root: &Path, split: Split, sample: &SlideSample, fixture: Option<&SlideFixture>) -> Result<()> {
    let images = root.join("images").join(split.as_str());
    let masks = root.join("masks").join(split.as_str());
    ensure_dir(&images)?;
    ensure_dir(&masks)?;
    sample.image.save(images.join(format!("{}.png", sample.id)))?;
    let path = masks.join(format!("{}.lmask", sample.id));
    fs::write(&path, encode_mask(&sample.mask)).map_err(|e| Error::io(&path, e))?;
    if let Some(f) = fixture {
        let dir = root.join("fixtures").join(split.as_str());
        ensure_dir(&dir)?;
        let path = dir.join(format!("{}.json", sample.id));
        fs::write(&path, serde_json::to_string_pretty(f)?).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
