//! Training loop, schedule, augmentation, losses, metrics and the ablation
//! harness.

pub mod ablation;
pub mod augment;
pub mod config;
pub mod loss;
pub mod metrics;
pub mod optim;
pub mod schedule;

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Graph;
use crate::dataio::SlideSample;
use crate::error::{Error, Result};
use crate::mask::MultiLabelMask;
use crate::params::Gradients;
use crate::segnet::{checkpoint, image_to_tensor, predict_mask, ForwardOptions, NetworkConfig, SegNet};
use crate::tensor::Tensor;

pub use augment::augment;
pub use config::TrainConfig;
pub use loss::{bce_multilabel_loss, mask_loss};
pub use metrics::{compute_metrics, compute_metrics_with, MetricAccumulator, MetricOptions, MetricReport};
pub use optim::Sgd;
pub use schedule::poly_lr;

/// One line of the metric history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    /// Zero-based optimisation step.
    pub iteration: usize,
    pub loss: f64,
    pub lr: f64,
    #[serde(rename = "mIoU")]
    pub miou: Option<f64>,
    #[serde(rename = "PA")]
    pub pa: Option<f64>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub net: SegNet,
    pub history: Vec<HistoryRecord>,
}

/// Optional side channels of a training run.
#[derive(Default)]
pub struct TrainHooks<'a> {
    /// Receives each history record as one JSON line.
    pub history: Option<&'a mut dyn Write>,
    /// Where to drop a checkpoint of the last finite parameters on divergence.
    pub snapshot_dir: Option<&'a Path>,
}

/// Stateless 64-bit mixing of a few integers into a seed.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}

/// Mean BCE of the main head plus `aux_weight` × the auxiliary head, and
/// its gradient with respect to every trainable parameter.
pub fn loss_and_grads(
    net: &SegNet,
    image: &Tensor,
    target: &MultiLabelMask,
    aux_weight: f64,
    opts: &ForwardOptions,
) -> Result<(f64, Gradients)> {
    let mut g = Graph::new(net.params());
    let x = g.constant(image.clone());
    let (logits, aux) = net.forward_graph(&mut g, x, opts)?;
    let t = target.to_tensor();
    if g.value(logits).shape() != t.shape() {
        return Err(Error::shape(format!(
            "logits {:?} and target {:?} differ in shape",
            g.value(logits).shape(),
            t.shape()
        )));
    }
    let main = g.bce_with_logits(logits, t.clone());
    let loss = if aux_weight != 0.0 {
        let aux = g.bce_with_logits(aux, t);
        let aux = g.scale_const(aux, aux_weight);
        g.add(main, aux)
    } else {
        main
    };
    let value = g.value(loss).item();
    Ok((value, g.backward(loss).param_grads()))
}

fn worker_count(requested: usize, jobs: usize) -> usize {
    let n = if requested == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        requested
    };
    n.clamp(1, jobs.max(1))
}

/// Run `f` over `items` on up to `workers` threads, returning results in
/// input order.
fn par_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = worker_count(workers, items.len());
    if workers <= 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| {
                let f = &f;
                s.spawn(move || part.iter().map(f).collect::<Vec<R>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker thread panicked"))
            .collect()
    })
}

/// Dataset-level metrics of thresholded eval-mode predictions.
pub fn evaluate(net: &SegNet, samples: &[SlideSample], threshold: f64, opts: MetricOptions) -> Result<MetricReport> {
    let mut acc = MetricAccumulator::new(net.num_classes());
    let preds = par_map(samples, 0, |s| -> Result<MultiLabelMask> {
        let out = net.forward(&image_to_tensor(&s.image), &ForwardOptions::eval())?;
        predict_mask(&out.logits, threshold)
    });
    for (pred, s) in preds.into_iter().zip(samples) {
        acc.add(&pred?, &s.mask)?;
    }
    Ok(acc.report(opts))
}

fn check_samples(samples: &[SlideSample], k: usize, what: &str) -> Result<()> {
    for s in samples {
        let (mk, h, w) = s.mask.dims();
        if mk != k {
            return Err(Error::Dataset(format!(
                "{what} sample `{}` has {mk} classes, network predicts {k}",
                s.id
            )));
        }
        if (s.image.height() as usize, s.image.width() as usize) != (h, w) {
            return Err(Error::Dataset(format!("{what} sample `{}`: image and mask sizes differ", s.id)));
        }
    }
    Ok(())
}

/// Train a freshly initialised network.
pub fn train(
    train_set: &[SlideSample],
    val_set: &[SlideSample],
    net_config: NetworkConfig,
    config: &TrainConfig,
    hooks: TrainHooks,
) -> Result<TrainOutcome> {
    train_net(SegNet::new(net_config)?, train_set, val_set, config, hooks)
}

/// Continue training `net`. Deterministic for a given config seed, whatever
/// the worker count.
pub fn train_net(
    mut net: SegNet,
    train_set: &[SlideSample],
    val_set: &[SlideSample],
    config: &TrainConfig,
    mut hooks: TrainHooks,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Dataset("training set is empty".into()));
    }
    let k = net.num_classes();
    check_samples(train_set, k, "training")?;
    check_samples(val_set, k, "validation")?;

    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut opt = Sgd::new(config.momentum, config.wd_backbone, config.wd_head);
    let interval = config.validation_interval();
    let mut history = Vec::with_capacity(config.max_iteration);

    for it in 0..config.max_iteration {
        let lr = poly_lr(it, config);
        let mut slots = Vec::with_capacity(config.batch);
        for slot in 0..config.batch {
            if cursor == order.len() {
                order = (0..train_set.len()).collect();
                order.shuffle(&mut order_rng);
                cursor = 0;
            }
            slots.push((slot as u64, order[cursor]));
            cursor += 1;
        }
        let results = par_map(&slots, config.workers, |&(slot, idx)| {
            let s = &train_set[idx];
            let seed = mix_seed(&[config.seed, it as u64, slot]);
            let (img, mask) = augment(&s.image, &s.mask, config, seed);
            let opts = ForwardOptions::train(mix_seed(&[seed, 1]));
            loss_and_grads(&net, &image_to_tensor(&img), &mask, config.aux_weight, &opts)
        });
        let mut grads = Gradients::new(net.params().len());
        let mut loss = 0.0;
        let scale = 1.0 / config.batch as f64;
        for r in results {
            let (l, g) = r?;
            loss += l * scale;
            grads.merge(&g, scale);
        }
        if !loss.is_finite() {
            if let Some(dir) = hooks.snapshot_dir {
                let path = dir.join(format!("diverged-{it}.ckpt"));
                match checkpoint::save(&net, &path) {
                    Ok(()) => log::error!("loss became {loss} at iteration {it}; parameters saved to {}", path.display()),
                    Err(e) => log::error!("loss became {loss} at iteration {it}; snapshot failed: {e}"),
                }
            }
            return Err(Error::Diverged { iteration: it, loss });
        }
        opt.step(net.params_mut(), &grads, lr);

        let mut record = HistoryRecord {
            iteration: it,
            loss,
            lr,
            miou: None,
            pa: None,
        };
        if ((it + 1) % interval == 0 || it + 1 == config.max_iteration) && !val_set.is_empty() {
            let report = evaluate(&net, val_set, config.threshold, MetricOptions::default())?;
            log::info!(
                "iteration {it}: loss {loss:.5}, val mIoU {:.4}, PA {:.4}",
                report.mean_iou,
                report.pixel_accuracy
            );
            record.miou = Some(report.mean_iou);
            record.pa = Some(report.pixel_accuracy);
        }
        if let Some(w) = hooks.history.as_deref_mut() {
            let line = serde_json::to_string(&record)?;
            writeln!(w, "{line}").map_err(|e| Error::io("<history>", e))?;
        }
        history.push(record);
    }
    Ok(TrainOutcome { net, history })
}
