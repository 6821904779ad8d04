use hazefuse_core::raster::RasterImage;
use hazefuse_core::sky::{
    classify_usable_sky, detect_sky, extract_color_features, sky_stats, train_sky_classifier,
    train_sky_classifier_with, SkyMask, SkyParams, TrainConfig,
};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn jitter(rng: &mut StdRng, c: [u8; 3], amp: i32) -> [u8; 3] {
    c.map(|v| (v as i32 + rng.gen_range(-amp..=amp)).clamp(0, 255) as u8)
}

/// Sky over ground, with the horizon at `sky_rows`.
fn landscape(rng: &mut StdRng, w: usize, h: usize, sky_rows: usize) -> RasterImage {
    let sky = [rng.gen_range(80..130), rng.gen_range(140..180), rng.gen_range(210..255)];
    let ground = [rng.gen_range(60..140), rng.gen_range(50..110), rng.gen_range(10..50)];
    let mut img = RasterImage::filled(w, h, ground).unwrap();
    for y in 0..h {
        for x in 0..w {
            let base = if y < sky_rows { sky } else { ground };
            img.set(x, y, jitter(rng, base, 4));
        }
    }
    img
}

fn no_sky(rng: &mut StdRng, w: usize, h: usize) -> RasterImage {
    let palette: Vec<[u8; 3]> = (0..3)
        .map(|_| {
            let r = rng.gen_range(60..220);
            [r, rng.gen_range(40..r.min(200)), rng.gen_range(10..60)]
        })
        .collect();
    let mut img = RasterImage::filled(w, h, palette[0]).unwrap();
    for y in 0..h {
        for x in 0..w {
            img.set(x, y, jitter(rng, palette[(x / 11 + y / 7) % 3], 6));
        }
    }
    img
}

#[test]
fn building_silhouette_is_excluded() {
    let (w, h) = (40, 30);
    let mut img = RasterImage::filled(w, h, [110, 80, 40]).unwrap();
    let mut truth = vec![false; w * h];
    for y in 0..15 {
        for x in 0..w {
            img.set(x, y, [100, 150, 230]);
            truth[y * w + x] = true;
        }
    }
    // Neutral-gray tower touching the top edge.
    for y in 0..h {
        for x in 12..16 {
            img.set(x, y, [128, 128, 128]);
            truth[y * w + x] = false;
        }
    }
    let mask = detect_sky(&img, &SkyParams::default());
    for x in 12..16 {
        for y in 0..h {
            assert!(!mask.get(x, y));
        }
    }
    let truth_fraction = truth.iter().filter(|&&b| b).count() as f64 / truth.len() as f64;
    let stats = sky_stats(&img, &mask, 0.15).unwrap();
    assert!((stats.sky_fraction - truth_fraction).abs() <= 0.01);
}

fn connected_to_top_band(mask: &SkyMask, band_rows: usize) -> bool {
    let (w, h) = (mask.width, mask.height);
    let mut seen = vec![false; w * h];
    let mut stack: Vec<usize> = (0..band_rows * w).filter(|&p| mask.bits[p]).collect();
    for &p in &stack {
        seen[p] = true;
    }
    while let Some(p) = stack.pop() {
        let (x, y) = (p % w, p / w);
        let mut push = |q: usize| {
            if mask.bits[q] && !seen[q] {
                seen[q] = true;
                stack.push(q);
            }
        };
        if x > 0 { push(p - 1) }
        if x + 1 < w { push(p + 1) }
        if y > 0 { push(p - w) }
        if y + 1 < h { push(p + w) }
    }
    mask.bits.iter().zip(&seen).all(|(&m, &s)| !m || s)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mask_commutes_with_mirroring_and_is_connected(seed in any::<u64>(), sky_rows in 0usize..24, blob_x in 0usize..30) {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut img = landscape(&mut rng, 32, 24, sky_rows);
        // A sky-coloured patch cut off from the top band must never be picked up.
        for y in 20..23 {
            for x in blob_x..(blob_x + 2).min(32) {
                img.set(x, y, [100, 160, 240]);
            }
        }
        let params = SkyParams::default();
        let mask = detect_sky(&img, &params);
        prop_assert_eq!(detect_sky(&img.mirrored(), &params), mask.mirrored());
        prop_assert!(connected_to_top_band(&mask, 3));
    }

    #[test]
    fn mean_rg_ignores_unmasked_pixels(seed in any::<u64>(), extra in 1usize..10) {
        let mut rng = StdRng::seed_from_u64(seed);
        let img = landscape(&mut rng, 16, 12, 6);
        let mask = detect_sky(&img, &SkyParams::default());
        // Append rows of arbitrary pixels that stay outside the mask.
        let mut pixels = img.pixels().to_vec();
        for _ in 0..extra * 16 {
            pixels.extend_from_slice(&[rng.gen(), rng.gen(), rng.gen()]);
        }
        let taller = RasterImage::new(16, 12 + extra, pixels).unwrap();
        let mut bits = mask.bits.clone();
        bits.resize(16 * (12 + extra), false);
        let taller_mask = SkyMask { width: 16, height: 12 + extra, bits };
        let a = sky_stats(&img, &mask, 0.0).unwrap().mean_rg;
        let b = sky_stats(&taller, &taller_mask, 0.0).unwrap().mean_rg;
        prop_assert_eq!(a, b);
    }
}

fn corpus(seed: u64, n: usize) -> Vec<(RasterImage, bool)> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            if i % 2 == 0 {
                let rows = rng.gen_range(14..34);
                (landscape(&mut rng, 64, 48, rows), true)
            } else {
                (no_sky(&mut rng, 64, 48), false)
            }
        })
        .collect()
}

#[test]
fn classifier_generalises_to_held_out_fixtures() {
    let train: Vec<_> = corpus(1, 60)
        .iter()
        .map(|(img, l)| (extract_color_features(img, 4).unwrap(), *l))
        .collect();
    let run = train_sky_classifier_with(&train, TrainConfig::default()).unwrap();
    assert!(run.losses.windows(2).all(|w| w[1] <= w[0]), "loss increased");
    let held_out = corpus(2, 40);
    let correct = held_out
        .iter()
        .filter(|(img, l)| (classify_usable_sky(&run.model, img).unwrap() >= 0.5) == *l)
        .count();
    assert!(correct as f64 / held_out.len() as f64 >= 0.9, "{correct}/40");
}

#[test]
fn duplicated_dataset_trains_same_model() {
    let samples: Vec<_> = corpus(3, 20)
        .iter()
        .map(|(img, l)| (extract_color_features(img, 4).unwrap(), *l))
        .collect();
    let mut doubled = samples.clone();
    doubled.extend(samples.iter().cloned());
    let a = train_sky_classifier(&samples).unwrap();
    let b = train_sky_classifier(&doubled).unwrap();
    assert!((a.bias - b.bias).abs() < 1e-12);
    assert!(a.weights.iter().zip(&b.weights).all(|(x, y)| (x - y).abs() < 1e-12));
    assert_eq!(a, train_sky_classifier(&samples).unwrap());
}

#[test]
fn raising_a_positive_weight_never_lowers_probability() {
    let samples: Vec<_> = corpus(4, 20)
        .iter()
        .map(|(img, l)| (extract_color_features(img, 4).unwrap(), *l))
        .collect();
    let model = train_sky_classifier(&samples).unwrap();
    let mut rng = StdRng::seed_from_u64(5);
    let img = landscape(&mut rng, 64, 48, 20);
    let x = extract_color_features(&img, 4).unwrap();
    let base = model.probability(&x).unwrap();
    for k in 0..x.len() {
        if x.as_slice()[k] > 0.0 {
            let mut bumped = model.clone();
            bumped.weights[k] += 0.5;
            assert!(bumped.probability(&x).unwrap() >= base);
        }
    }
}
