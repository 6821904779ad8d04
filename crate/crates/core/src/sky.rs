//! Sky detection, localization and the mean sky R/G ratio.
//!
//! Detection ("does this photo show enough sky?") uses grid colour features
//! and a logistic-regression classifier. Localization grows a region from
//! bluish, bright seed pixels in the top band of the image.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::raster::{to_pbm, RasterImage};

#[derive(Debug, Error)]
pub enum SkyError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("training data is degenerate: {0}")]
    DegenerateData(String),
    #[error("model is untrained")]
    UntrainedModel,
    #[error("feature length {got} does not match model length {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("mask is {mask_w}x{mask_h} but image is {img_w}x{img_h}")]
    DimensionMismatch { mask_w: usize, mask_h: usize, img_w: usize, img_h: usize },
    #[error("malformed model file at line {line}: {reason}")]
    MalformedModel { line: usize, reason: String },
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, SkyError>;

/// Features per grid cell: mean R, G, B (scaled to [0, 1]), R/G ratio of the
/// means, mean brightness (scaled to [0, 1]).
pub const FEATURES_PER_CELL: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct ColorFeatureVector(pub Vec<f64>);

impl ColorFeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Splits `len` pixels into `cells` bands; the last band takes the remainder.
fn cell_of(pos: usize, len: usize, cells: usize) -> usize {
    (pos / (len / cells)).min(cells - 1)
}

/// Colour features over a `g × g` grid, cells in row-major order.
pub fn extract_color_features(img: &RasterImage, g: usize) -> Result<ColorFeatureVector> {
    if g == 0 || g > img.width().min(img.height()) {
        return Err(SkyError::Domain(format!(
            "grid {g} invalid for a {}x{} image",
            img.width(),
            img.height()
        )));
    }
    let mut sums = vec![[0u64; 3]; g * g];
    let mut counts = vec![0u64; g * g];
    for y in 0..img.height() {
        let row = cell_of(y, img.height(), g);
        for x in 0..img.width() {
            let c = row * g + cell_of(x, img.width(), g);
            let px = img.get(x, y);
            for k in 0..3 {
                sums[c][k] += px[k] as u64;
            }
            counts[c] += 1;
        }
    }
    let mut out = Vec::with_capacity(FEATURES_PER_CELL * g * g);
    for (sum, &n) in sums.iter().zip(&counts) {
        let mean = sum.map(|s| s as f64 / n as f64);
        out.extend_from_slice(&[
            mean[0] / 255.0,
            mean[1] / 255.0,
            mean[2] / 255.0,
            mean[0] / mean[1].max(1.0),
            (mean[0] + mean[1] + mean[2]) / (3.0 * 255.0),
        ]);
    }
    Ok(ColorFeatureVector(out))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub trained: bool,
}

impl LogisticModel {
    pub fn untrained(n_features: usize) -> Self {
        Self { weights: vec![0.0; n_features], bias: 0.0, trained: false }
    }

    /// A ready-to-use model from known coefficients.
    pub fn from_parts(weights: Vec<f64>, bias: f64) -> Result<Self> {
        if !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(SkyError::Domain("non-finite model coefficient".into()));
        }
        Ok(Self { weights, bias, trained: true })
    }

    pub fn probability(&self, features: &ColorFeatureVector) -> Result<f64> {
        if !self.trained {
            return Err(SkyError::UntrainedModel);
        }
        if features.len() != self.weights.len() {
            return Err(SkyError::LengthMismatch { expected: self.weights.len(), got: features.len() });
        }
        Ok(sigmoid(dot(&self.weights, features.as_slice()) + self.bias))
    }

    /// Side length of the feature grid the model was trained on.
    pub fn grid(&self) -> Option<usize> {
        let cells = self.weights.len() / FEATURES_PER_CELL;
        let g = (cells as f64).sqrt().round() as usize;
        (g >= 1 && g * g * FEATURES_PER_CELL == self.weights.len()).then_some(g)
    }

    /// Plain text: bias, then one weight per line.
    pub fn to_text(&self) -> String {
        let mut s = format!("{:?}\n", self.bias);
        for w in &self.weights {
            writeln!(s, "{w:?}").unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            values.push(line.trim().parse::<f64>().map_err(|_| SkyError::MalformedModel {
                line: i + 1,
                reason: format!("`{}` is not a number", line.trim()),
            })?);
        }
        if values.len() < 2 {
            return Err(SkyError::MalformedModel { line: 1, reason: "need a bias and at least one weight".into() });
        }
        let bias = values.remove(0);
        Self::from_parts(values, bias)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| SkyError::Io { path: path.display().to_string(), source })?;
        Self::from_text(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|source| SkyError::Io { path: path.display().to_string(), source })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.1, epochs: 500 }
    }
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub model: LogisticModel,
    /// Mean cross-entropy before each epoch's update, then after the last.
    pub losses: Vec<f64>,
}

fn mean_loss(weights: &[f64], bias: f64, samples: &[(ColorFeatureVector, bool)]) -> f64 {
    let total: f64 = samples
        .iter()
        .map(|(x, label)| {
            let z = dot(weights, x.as_slice()) + bias;
            if *label { softplus(-z) } else { softplus(z) }
        })
        .sum();
    total / samples.len() as f64
}

/// Full-batch gradient descent from zero weights.
pub fn train_sky_classifier_with(samples: &[(ColorFeatureVector, bool)], config: TrainConfig) -> Result<TrainingRun> {
    let n = samples.first().map(|(x, _)| x.len()).ok_or_else(|| SkyError::DegenerateData("no samples".into()))?;
    if samples.iter().any(|(x, _)| x.len() != n) {
        return Err(SkyError::DegenerateData("feature vectors differ in length".into()));
    }
    if samples.iter().any(|(x, _)| x.as_slice().iter().any(|v| !v.is_finite())) {
        return Err(SkyError::DegenerateData("non-finite feature".into()));
    }
    let positives = samples.iter().filter(|(_, l)| *l).count();
    if positives == 0 || positives == samples.len() {
        return Err(SkyError::DegenerateData("need samples of both classes".into()));
    }

    let (mut w, mut b) = (vec![0.0; n], 0.0);
    let m = samples.len() as f64;
    let mut losses = Vec::with_capacity(config.epochs + 1);
    for _ in 0..config.epochs {
        losses.push(mean_loss(&w, b, samples));
        let mut grad_w = vec![0.0; n];
        let mut grad_b = 0.0;
        for (x, label) in samples {
            let err = sigmoid(dot(&w, x.as_slice()) + b) - if *label { 1.0 } else { 0.0 };
            for (g, xi) in grad_w.iter_mut().zip(x.as_slice()) {
                *g += err * xi;
            }
            grad_b += err;
        }
        for (wi, g) in w.iter_mut().zip(&grad_w) {
            *wi -= config.learning_rate * g / m;
        }
        b -= config.learning_rate * grad_b / m;
    }
    losses.push(mean_loss(&w, b, samples));
    Ok(TrainingRun { model: LogisticModel { weights: w, bias: b, trained: true }, losses })
}

pub fn train_sky_classifier(samples: &[(ColorFeatureVector, bool)]) -> Result<LogisticModel> {
    train_sky_classifier_with(samples, TrainConfig::default()).map(|run| run.model)
}

/// Probability that `img` shows a usable amount of sky.
pub fn classify_usable_sky(model: &LogisticModel, img: &RasterImage) -> Result<f64> {
    if !model.trained {
        return Err(SkyError::UntrainedModel);
    }
    let g = model.grid().ok_or(SkyError::LengthMismatch {
        expected: model.weights.len(),
        got: FEATURES_PER_CELL,
    })?;
    model.probability(&extract_color_features(img, g)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkyParams {
    /// Fraction of rows, from the top, that may hold seed pixels.
    pub top_band_fraction: f64,
    /// Euclidean RGB distance allowed between a grown pixel and the seed mean.
    pub tolerance: f64,
    /// Minimum `(R + G + B) / 3` for a seed pixel.
    pub min_brightness: f64,
    /// Sky fraction at or above which an image is usable.
    pub min_fraction: f64,
}

impl Default for SkyParams {
    fn default() -> Self {
        Self { top_band_fraction: 0.1, tolerance: 30.0, min_brightness: 80.0, min_fraction: 0.15 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkyMask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl SkyMask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, bits: vec![false; width * height] }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn mirrored(&self) -> Self {
        let mut bits = vec![false; self.bits.len()];
        for y in 0..self.height {
            for x in 0..self.width {
                bits[y * self.width + self.width - 1 - x] = self.get(x, y);
            }
        }
        Self { width: self.width, height: self.height, bits }
    }

    pub fn to_pbm(&self) -> Vec<u8> {
        to_pbm(self.width, self.height, &self.bits)
    }
}

fn is_seed_color(px: [u8; 3], min_brightness: f64) -> bool {
    let [r, g, b] = px.map(f64::from);
    b >= r && b >= 0.9 * g && (r + g + b) / 3.0 >= min_brightness
}

fn distance(px: [u8; 3], mean: [f64; 3]) -> f64 {
    px.iter()
        .zip(mean)
        .map(|(&c, m)| (c as f64 - m).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn mean_color(img: &RasterImage, pixels: &[usize]) -> [f64; 3] {
    let mut sum = [0u64; 3];
    for &p in pixels {
        let px = img.get(p % img.width(), p / img.width());
        for k in 0..3 {
            sum[k] += px[k] as u64;
        }
    }
    sum.map(|s| s as f64 / pixels.len() as f64)
}

/// Grows the sky region from the top band.
///
/// Candidate seeds are top-band pixels that are bluish (`B ≥ R`, `B ≥ 0.9·G`)
/// and bright enough. Candidates farther than `tolerance` from the candidate
/// mean are dropped; the survivors' mean is the region colour, and growth
/// proceeds through 4-neighbours within `tolerance` of it. All statistics are
/// order-independent, so the mask commutes with mirroring.
pub fn detect_sky(img: &RasterImage, params: &SkyParams) -> SkyMask {
    let (w, h) = (img.width(), img.height());
    let mut mask = SkyMask::empty(w, h);
    let band = ((h as f64 * params.top_band_fraction).ceil() as usize).clamp(1, h);

    let candidates: Vec<usize> = (0..band * w)
        .filter(|&p| is_seed_color(img.get(p % w, p / w), params.min_brightness))
        .collect();
    if candidates.is_empty() {
        return mask;
    }
    let candidate_mean = mean_color(img, &candidates);
    let seeds: Vec<usize> = candidates
        .into_iter()
        .filter(|&p| distance(img.get(p % w, p / w), candidate_mean) <= params.tolerance)
        .collect();
    if seeds.is_empty() {
        return mask;
    }
    let region_mean = mean_color(img, &seeds);

    let mut queue: VecDeque<usize> = seeds.iter().copied().collect();
    for &s in &seeds {
        mask.bits[s] = true;
    }
    while let Some(p) = queue.pop_front() {
        let (x, y) = (p % w, p / w);
        let neighbours = [
            (x > 0).then(|| p - 1),
            (x + 1 < w).then(|| p + 1),
            (y > 0).then(|| p - w),
            (y + 1 < h).then(|| p + w),
        ];
        for q in neighbours.into_iter().flatten() {
            if !mask.bits[q] && distance(img.get(q % w, q / w), region_mean) <= params.tolerance {
                mask.bits[q] = true;
                queue.push_back(q);
            }
        }
    }
    mask
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkyStats {
    pub sky_fraction: f64,
    /// Mean over sky pixels of `R / max(G, 1)`; `None` for an empty mask.
    pub mean_rg: Option<f64>,
    pub usable: bool,
    /// More than 1% of sky pixels had `G = 0`.
    pub suspect: bool,
}

pub fn sky_stats(img: &RasterImage, mask: &SkyMask, min_fraction: f64) -> Result<SkyStats> {
    if mask.width != img.width() || mask.height != img.height() {
        return Err(SkyError::DimensionMismatch {
            mask_w: mask.width,
            mask_h: mask.height,
            img_w: img.width(),
            img_h: img.height(),
        });
    }
    let (mut n, mut zero_green, mut sum) = (0usize, 0usize, 0.0);
    for (p, _) in mask.bits.iter().enumerate().filter(|(_, &b)| b) {
        let [r, g, _] = img.get(p % img.width(), p / img.width());
        if g == 0 {
            zero_green += 1;
        }
        sum += r as f64 / (g.max(1)) as f64;
        n += 1;
    }
    let sky_fraction = n as f64 / mask.bits.len() as f64;
    let mean_rg = (n > 0).then(|| sum / n as f64);
    Ok(SkyStats {
        sky_fraction,
        mean_rg,
        usable: n > 0 && sky_fraction >= min_fraction,
        suspect: n > 0 && zero_green as f64 > 0.01 * n as f64,
    })
}
