use image::imageops::{self, FilterType};
use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use crate::mask::MultiLabelMask;

/// Source index for `i` after reflecting about the edges (no edge repeat).
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

fn resize_mask_nearest(mask: &MultiLabelMask, oh: usize, ow: usize) -> MultiLabelMask {
    let (k, h, w) = mask.dims();
    if (oh, ow) == (h, w) {
        return mask.clone();
    }
    let ys: Vec<usize> = (0..oh).map(|y| (((y as f64 + 0.5) * h as f64 / oh as f64) as usize).min(h - 1)).collect();
    let xs: Vec<usize> = (0..ow).map(|x| (((x as f64 + 0.5) * w as f64 / ow as f64) as usize).min(w - 1)).collect();
    let mut out = MultiLabelMask::new(k, oh, ow);
    for c in 0..k {
        let src = mask.plane(c);
        let dst = out.plane_mut(c);
        for (y, &sy) in ys.iter().enumerate() {
            for (x, &sx) in xs.iter().enumerate() {
                dst[y * ow + x] = src[sy * w + sx];
            }
        }
    }
    out
}

/// Window of size `ch × cw` whose top-left corner is `(top, left)` in the
/// reflect-extended plane; negative offsets reach into the reflection.
fn window(image: &RgbImage, mask: &MultiLabelMask, top: isize, left: isize, ch: usize, cw: usize) -> (RgbImage, MultiLabelMask) {
    let (k, h, w) = mask.dims();
    let ys: Vec<usize> = (0..ch).map(|y| reflect(top + y as isize, h)).collect();
    let xs: Vec<usize> = (0..cw).map(|x| reflect(left + x as isize, w)).collect();
    let mut img = RgbImage::new(cw as u32, ch as u32);
    for (y, &sy) in ys.iter().enumerate() {
        for (x, &sx) in xs.iter().enumerate() {
            img.put_pixel(x as u32, y as u32, *image.get_pixel(sx as u32, sy as u32));
        }
    }
    let mut m = MultiLabelMask::new(k, ch, cw);
    for c in 0..k {
        let src = mask.plane(c);
        let dst = m.plane_mut(c);
        for (y, &sy) in ys.iter().enumerate() {
            for (x, &sx) in xs.iter().enumerate() {
                dst[y * cw + x] = src[sy * w + sx];
            }
        }
    }
    (img, m)
}

fn color_jitter(image: &mut RgbImage, amount: f64, rng: &mut ChaCha8Rng) {
    let brightness = rng.gen_range(1.0 - amount..=1.0 + amount);
    let contrast = rng.gen_range(1.0 - amount..=1.0 + amount);
    let saturation = rng.gen_range(1.0 - amount..=1.0 + amount);
    let n = (image.width() * image.height()) as f64;
    let mean = image
        .pixels()
        .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
        .sum::<f64>()
        / n;
    for p in image.pixels_mut() {
        let rgb = [p[0] as f64, p[1] as f64, p[2] as f64].map(|v| v * brightness);
        let gray = 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2];
        for (c, v) in rgb.iter().enumerate() {
            let s = gray + (v - gray) * saturation;
            let out = mean * brightness + (s - mean * brightness) * contrast;
            p[c] = out.round().clamp(0.0, 255.0) as u8;
        }
    }
}

/// Random scale, reflect-padded random crop of exactly `config.crop`,
/// optional Gaussian blur and colour jitter. Geometry is shared between image
/// and mask (nearest neighbour for the mask); photometric changes touch the
/// image only. With `config.augment` off only the crop (taken at the origin)
/// is applied.
pub fn augment(image: &RgbImage, mask: &MultiLabelMask, config: &TrainConfig, seed: u64) -> (RgbImage, MultiLabelMask) {
    let (ch, cw) = config.crop;
    let (_, h, w) = mask.dims();
    debug_assert_eq!((image.width() as usize, image.height() as usize), (w, h));
    if !config.augment {
        if (h, w) == (ch, cw) {
            return (image.clone(), mask.clone());
        }
        return window(image, mask, 0, 0, ch, cw);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = config.scale_range;
    let scale = if lo < hi { rng.gen_range(lo..=hi) } else { lo };
    let sh = ((h as f64 * scale).round() as usize).max(1);
    let sw = ((w as f64 * scale).round() as usize).max(1);
    let (scaled_img, scaled_mask) = if (sh, sw) == (h, w) {
        (image.clone(), mask.clone())
    } else {
        (
            imageops::resize(image, sw as u32, sh as u32, FilterType::Triangle),
            resize_mask_nearest(mask, sh, sw),
        )
    };
    // when the scaled slide is smaller than the crop, the window straddles it
    // and reaches into the reflection on either side
    let top = if sh >= ch {
        rng.gen_range(0..=sh - ch) as isize
    } else {
        -(rng.gen_range(0..=ch - sh) as isize)
    };
    let left = if sw >= cw {
        rng.gen_range(0..=sw - cw) as isize
    } else {
        -(rng.gen_range(0..=cw - sw) as isize)
    };
    let (mut out_img, out_mask) = window(&scaled_img, &scaled_mask, top, left, ch, cw);
    if config.blur_prob > 0.0 && rng.gen_bool(config.blur_prob) {
        let (s0, s1) = config.blur_sigma;
        let sigma = if s0 < s1 { rng.gen_range(s0..=s1) } else { s0 };
        if sigma > 0.0 {
            out_img = imageops::blur(&out_img, sigma as f32);
        }
    }
    if config.color_jitter > 0.0 {
        color_jitter(&mut out_img, config.color_jitter, &mut rng);
    }
    (out_img, out_mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::make_toy_dataset;

    #[test]
    fn reflect_indices() {
        let got: Vec<usize> = (-4..8).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, vec![2, 3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1]);
        assert_eq!(reflect(-3, 1), 0);
    }

    #[test]
    fn identity_when_disabled_and_crop_matches() {
        let s = &make_toy_dataset(1, 5, 2, (32, 48)).unwrap()[0].sample;
        let cfg = TrainConfig::toy_overfit((32, 48), 1);
        let (img, m) = augment(&s.image, &s.mask, &cfg, 9);
        assert_eq!(img, s.image);
        assert_eq!(m, s.mask);

        let cfg = TrainConfig {
            crop: (32, 48),
            scale_range: (1.0, 1.0),
            blur_prob: 0.0,
            color_jitter: 0.0,
            ..TrainConfig::default()
        };
        let (img, m) = augment(&s.image, &s.mask, &cfg, 9);
        assert_eq!(img, s.image);
        assert_eq!(m, s.mask);
    }

    #[test]
    fn deterministic_exact_crop_and_label_subset() {
        let s = &make_toy_dataset(1, 5, 3, (40, 48)).unwrap()[0].sample;
        let cfg = TrainConfig {
            crop: (32, 36),
            ..TrainConfig::default()
        };
        let before: Vec<usize> = s.mask.present_classes();
        for seed in 0..100 {
            let (a, ma) = augment(&s.image, &s.mask, &cfg, seed);
            let (b, mb) = augment(&s.image, &s.mask, &cfg, seed);
            assert_eq!(a, b);
            assert_eq!(ma, mb);
            assert_eq!(a.dimensions(), (36, 32));
            assert_eq!(ma.dims(), (5, 32, 36));
            assert!(ma.present_classes().iter().all(|c| before.contains(c)));
        }
    }
}
