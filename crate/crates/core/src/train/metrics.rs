use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::MultiLabelMask;

/// Which decisions pixel accuracy counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaConvention {
    /// Every (pixel, class) binary decision.
    #[default]
    PerDecision,
    /// One decision per pixel: correct when prediction and ground truth share
    /// a positive label, or both are empty.
    AnyLabelPerPixel,
}

/// How classes with an empty union enter the mean IoU.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UndefinedIou {
    #[default]
    Exclude,
    Zero,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricOptions {
    pub pa: PaConvention,
    pub undefined: UndefinedIou,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub intersection: u64,
    pub union: u64,
    /// Pixels where the class decision matches.
    pub correct: u64,
    pub total: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// `None` where the union is empty.
    pub per_class_iou: Vec<Option<f64>>,
    pub mean_iou: f64,
    pub pixel_accuracy: f64,
    pub confusion_counts: Vec<ClassCounts>,
}

/// Running counts over any number of mask pairs of one class count.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetricAccumulator {
    counts: Vec<ClassCounts>,
    pixel_correct: u64,
    pixels: u64,
}

impl MetricAccumulator {
    pub fn new(classes: usize) -> Self {
        Self {
            counts: vec![ClassCounts::default(); classes],
            pixel_correct: 0,
            pixels: 0,
        }
    }

    pub fn add(&mut self, pred: &MultiLabelMask, gt: &MultiLabelMask) -> Result<()> {
        if pred.dims() != gt.dims() {
            return Err(Error::shape(format!(
                "prediction {:?} and ground truth {:?} differ in shape",
                pred.dims(),
                gt.dims()
            )));
        }
        if pred.classes() != self.counts.len() {
            return Err(Error::shape(format!(
                "accumulator tracks {} classes, masks have {}",
                self.counts.len(),
                pred.classes()
            )));
        }
        let n = pred.height() * pred.width();
        for (k, c) in self.counts.iter_mut().enumerate() {
            let (p, g) = (pred.plane(k), gt.plane(k));
            let mut inter = 0;
            let mut union = 0;
            let mut correct = 0;
            for (&a, &b) in p.iter().zip(g) {
                inter += u64::from(a & b);
                union += u64::from(a | b);
                correct += u64::from(a == b);
            }
            c.intersection += inter;
            c.union += union;
            c.correct += correct;
            c.total += n as u64;
        }
        for i in 0..n {
            let mut shared = false;
            let mut any_p = false;
            let mut any_g = false;
            for k in 0..pred.classes() {
                let (a, b) = (pred.plane(k)[i] != 0, gt.plane(k)[i] != 0);
                shared |= a && b;
                any_p |= a;
                any_g |= b;
            }
            self.pixel_correct += u64::from(shared || (!any_p && !any_g));
        }
        self.pixels += n as u64;
        Ok(())
    }

    pub fn merge(&mut self, other: &MetricAccumulator) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            a.intersection += b.intersection;
            a.union += b.union;
            a.correct += b.correct;
            a.total += b.total;
        }
        self.pixel_correct += other.pixel_correct;
        self.pixels += other.pixels;
    }

    /// When no class is defined, prediction and ground truth are both empty
    /// everywhere and the mean IoU is reported as 1.
    pub fn report(&self, opts: MetricOptions) -> MetricReport {
        let per_class_iou: Vec<Option<f64>> = self
            .counts
            .iter()
            .map(|c| (c.union > 0).then(|| c.intersection as f64 / c.union as f64))
            .collect();
        let terms: Vec<f64> = per_class_iou
            .iter()
            .filter_map(|v| match (v, opts.undefined) {
                (Some(x), _) => Some(*x),
                (None, UndefinedIou::Zero) => Some(0.0),
                (None, UndefinedIou::Exclude) => None,
            })
            .collect();
        let mean_iou = if terms.is_empty() {
            1.0
        } else {
            terms.iter().sum::<f64>() / terms.len() as f64
        };
        let pixel_accuracy = match opts.pa {
            PaConvention::PerDecision => {
                let correct: u64 = self.counts.iter().map(|c| c.correct).sum();
                let total: u64 = self.counts.iter().map(|c| c.total).sum();
                ratio(correct, total)
            }
            PaConvention::AnyLabelPerPixel => ratio(self.pixel_correct, self.pixels),
        };
        MetricReport {
            per_class_iou,
            mean_iou,
            pixel_accuracy,
            confusion_counts: self.counts.clone(),
        }
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        1.0
    } else {
        a as f64 / b as f64
    }
}

pub fn compute_metrics(pred: &MultiLabelMask, gt: &MultiLabelMask) -> Result<MetricReport> {
    compute_metrics_with(pred, gt, MetricOptions::default())
}

pub fn compute_metrics_with(pred: &MultiLabelMask, gt: &MultiLabelMask, opts: MetricOptions) -> Result<MetricReport> {
    let mut acc = MetricAccumulator::new(pred.classes());
    acc.add(pred, gt)?;
    Ok(acc.report(opts))
}
