//! Filter-photo blob detector: thresholding, grouping, merging and blob
//! radius calculation, plus the linear blob-count → PM calibration.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::observation::{GeoPoint, Observation, PhenomenonKind, QualityFlag, SourceKind, TimeStamp};
use crate::raster::RasterImage;

#[derive(Debug, Error)]
pub enum BlobError {
    #[error("degenerate calibration: {0}")]
    DegenerateFit(String),
    #[error("calibration curve is untrained: {0}")]
    UntrainedCurve(String),
    #[error("invalid blob parameters: {0}")]
    InvalidParams(String),
    #[error("malformed calibration file: {0}")]
    MalformedCalibration(String),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, BlobError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl GrayImage {
    /// Luma `0.299 R + 0.587 G + 0.114 B`, rounded half up, in integer
    /// arithmetic so the result is bit-reproducible.
    pub fn from_rgb(img: &RasterImage) -> Self {
        let data = img
            .pixels()
            .chunks_exact(3)
            .map(|p| ((299 * p[0] as u32 + 587 * p[1] as u32 + 114 * p[2] as u32 + 500) / 1000) as u8)
            .collect();
        Self { width: img.width(), height: img.height(), data }
    }

    pub fn inverted(&self) -> Self {
        Self { width: self.width, height: self.height, data: self.data.iter().map(|v| 255 - v).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    DarkBlobs,
    LightBlobs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobParams {
    pub threshold: u8,
    pub polarity: Polarity,
    pub min_area: usize,
    pub merge_distance: f64,
    pub connectivity: Connectivity,
}

impl Default for BlobParams {
    fn default() -> Self {
        Self {
            threshold: 128,
            polarity: Polarity::DarkBlobs,
            min_area: 4,
            merge_distance: 0.0,
            connectivity: Connectivity::Eight,
        }
    }
}

impl BlobParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_area < 1 {
            return Err(BlobError::InvalidParams("min_area must be at least 1".into()));
        }
        if !(self.merge_distance >= 0.0) {
            return Err(BlobError::InvalidParams("merge_distance must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub min_x: usize,
    pub min_y: usize,
    pub max_x: usize,
    pub max_y: usize,
}

impl BoundingBox {
    fn union(self, o: Self) -> Self {
        Self {
            min_x: self.min_x.min(o.min_x),
            min_y: self.min_y.min(o.min_y),
            max_x: self.max_x.max(o.max_x),
            max_y: self.max_y.max(o.max_y),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub cx: f64,
    pub cy: f64,
    pub area: usize,
    /// `sqrt(area / π)`.
    pub radius: f64,
    pub bbox: BoundingBox,
}

fn radius_of(area: usize) -> f64 {
    (area as f64 / std::f64::consts::PI).sqrt()
}

/// DarkBlobs selects `intensity ≤ threshold`; LightBlobs `intensity ≥ threshold`.
pub fn threshold(img: &GrayImage, threshold: u8, polarity: Polarity) -> BinaryImage {
    let bits = img
        .data
        .iter()
        .map(|&v| match polarity {
            Polarity::DarkBlobs => v <= threshold,
            Polarity::LightBlobs => v >= threshold,
        })
        .collect();
    BinaryImage { width: img.width, height: img.height, bits }
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Keep the smaller root so labels follow raster order.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Component labels, `0` for background and `1..=count` in raster order of
/// each component's first pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelImage {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    pub count: u32,
}

/// Two-pass connected-component labeling with union-find over provisional
/// labels.
pub fn label_components(binary: &BinaryImage, connectivity: Connectivity) -> LabelImage {
    let (w, h) = (binary.width, binary.height);
    let mut provisional = vec![0usize; w * h];
    let mut sets = DisjointSet::new(1);
    let mut next = 1usize;
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if !binary.bits[p] {
                continue;
            }
            let mut neighbours = [0usize; 4];
            let mut k = 0;
            let mut push = |q: usize| {
                if provisional[q] != 0 {
                    neighbours[k] = provisional[q];
                    k += 1;
                }
            };
            if x > 0 {
                push(p - 1);
            }
            if y > 0 {
                push(p - w);
                if connectivity == Connectivity::Eight {
                    if x > 0 {
                        push(p - w - 1);
                    }
                    if x + 1 < w {
                        push(p - w + 1);
                    }
                }
            }
            if k == 0 {
                provisional[p] = next;
                sets.parent.push(next);
                next += 1;
            } else {
                let first = neighbours[0];
                provisional[p] = first;
                for &other in &neighbours[1..k] {
                    sets.union(first, other);
                }
            }
        }
    }
    let mut final_label = vec![0u32; next];
    let mut count = 0u32;
    let mut labels = vec![0u32; w * h];
    for p in 0..w * h {
        if provisional[p] == 0 {
            continue;
        }
        let root = sets.find(provisional[p]);
        if final_label[root] == 0 {
            count += 1;
            final_label[root] = count;
        }
        labels[p] = final_label[root];
    }
    LabelImage { width: w, height: h, labels, count }
}

fn sort_blobs(blobs: &mut [Blob]) {
    blobs.sort_by(|a, b| a.cy.total_cmp(&b.cy).then(a.cx.total_cmp(&b.cx)));
}

/// Connected components with at least `min_area` pixels, ordered by centroid
/// y then x.
pub fn group(binary: &BinaryImage, connectivity: Connectivity, min_area: usize) -> Vec<Blob> {
    let labels = label_components(binary, connectivity);
    let n = labels.count as usize;
    let mut sum_x = vec![0u64; n];
    let mut sum_y = vec![0u64; n];
    let mut area = vec![0usize; n];
    let mut bbox = vec![BoundingBox { min_x: usize::MAX, min_y: usize::MAX, max_x: 0, max_y: 0 }; n];
    for (p, &l) in labels.labels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let i = l as usize - 1;
        let (x, y) = (p % labels.width, p / labels.width);
        sum_x[i] += x as u64;
        sum_y[i] += y as u64;
        area[i] += 1;
        bbox[i] = bbox[i].union(BoundingBox { min_x: x, min_y: y, max_x: x, max_y: y });
    }
    let mut blobs: Vec<Blob> = (0..n)
        .filter(|&i| area[i] >= min_area)
        .map(|i| Blob {
            cx: sum_x[i] as f64 / area[i] as f64,
            cy: sum_y[i] as f64 / area[i] as f64,
            area: area[i],
            radius: radius_of(area[i]),
            bbox: bbox[i],
        })
        .collect();
    sort_blobs(&mut blobs);
    blobs
}

/// Clusters blobs whose centroids lie within `merge_distance`, transitively.
pub fn merge(blobs: &[Blob], merge_distance: f64) -> Vec<Blob> {
    let n = blobs.len();
    let mut sets = DisjointSet::new(n);
    for i in 0..n {
        for j in i + 1..n {
            let d = (blobs[i].cx - blobs[j].cx).hypot(blobs[i].cy - blobs[j].cy);
            if d <= merge_distance {
                sets.union(i, j);
            }
        }
    }
    let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let r = sets.find(i);
        clusters[r].push(i);
    }
    let mut merged: Vec<Blob> = clusters
        .into_iter()
        .filter(|c| !c.is_empty())
        .map(|members| {
            let area: usize = members.iter().map(|&i| blobs[i].area).sum();
            let wx: f64 = members.iter().map(|&i| blobs[i].cx * blobs[i].area as f64).sum();
            let wy: f64 = members.iter().map(|&i| blobs[i].cy * blobs[i].area as f64).sum();
            let bbox = members.iter().map(|&i| blobs[i].bbox).reduce(BoundingBox::union).unwrap();
            if members.len() == 1 {
                return blobs[members[0]].clone();
            }
            Blob { cx: wx / area as f64, cy: wy / area as f64, area, radius: radius_of(area), bbox }
        })
        .collect();
    sort_blobs(&mut merged);
    merged
}

pub fn detect_blobs(img: &GrayImage, params: &BlobParams) -> Result<Vec<Blob>> {
    params.validate()?;
    let binary = threshold(img, params.threshold, params.polarity);
    let blobs = group(&binary, params.connectivity, params.min_area);
    Ok(merge(&blobs, params.merge_distance))
}

/// CSV report `id,cx,cy,area,radius`.
pub fn blob_report(blobs: &[Blob]) -> String {
    let mut s = String::from("id,cx,cy,area,radius\n");
    for (i, b) in blobs.iter().enumerate() {
        s.push_str(&format!("{},{:.4},{:.4},{},{:.4}\n", i + 1, b.cx, b.cy, b.area, b.radius));
    }
    s
}

/// Linear map from blob count to PM concentration (µg/m³).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationCurve {
    pub slope: f64,
    pub intercept: f64,
    pub rms: f64,
    pub samples: usize,
}

impl CalibrationCurve {
    pub fn new(slope: f64, intercept: f64, rms: f64, samples: usize) -> Result<Self> {
        if samples < 2 {
            return Err(BlobError::UntrainedCurve(format!("fitted from {samples} samples")));
        }
        if !(slope.is_finite() && intercept.is_finite() && rms.is_finite() && rms >= 0.0) {
            return Err(BlobError::UntrainedCurve("non-finite coefficients".into()));
        }
        Ok(Self { slope, intercept, rms, samples })
    }

    pub fn predict(&self, count: usize) -> f64 {
        self.slope * count as f64 + self.intercept
    }

    /// `slope intercept rms n` on one line.
    pub fn to_text(&self) -> String {
        format!("{:?} {:?} {:?} {}\n", self.slope, self.intercept, self.rms, self.samples)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(BlobError::MalformedCalibration(format!("expected 4 fields, found {}", fields.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| BlobError::MalformedCalibration(format!("bad number `{s}`")));
        let n = fields[3]
            .parse::<usize>()
            .map_err(|_| BlobError::MalformedCalibration(format!("bad sample count `{}`", fields[3])))?;
        Self::new(num(fields[0])?, num(fields[1])?, num(fields[2])?, n)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| BlobError::Io { path: path.display().to_string(), source })?;
        Self::from_text(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|source| BlobError::Io { path: path.display().to_string(), source })
    }
}

/// Ordinary least squares over `(blob count, PM)` pairs.
pub fn fit_calibration(samples: &[(usize, f64)]) -> Result<CalibrationCurve> {
    if samples.len() < 2 {
        return Err(BlobError::DegenerateFit(format!("{} samples, need at least 2", samples.len())));
    }
    let n = samples.len() as f64;
    let mean_x = samples.iter().map(|s| s.0 as f64).sum::<f64>() / n;
    let mean_y = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let sxx: f64 = samples.iter().map(|s| (s.0 as f64 - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return Err(BlobError::DegenerateFit("all blob counts are equal".into()));
    }
    let sxy: f64 = samples.iter().map(|s| (s.0 as f64 - mean_x) * (s.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let rms = (samples.iter().map(|s| (s.1 - slope * s.0 as f64 - intercept).powi(2)).sum::<f64>() / n).sqrt();
    CalibrationCurve::new(slope, intercept, rms, samples.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PmEstimate {
    pub value: f64,
    pub quality_flag: QualityFlag,
    pub blob_count: usize,
    pub blobs: Vec<Blob>,
}

impl PmEstimate {
    pub fn to_observation(&self, phenomenon: PhenomenonKind, location: GeoPoint, time: TimeStamp) -> Observation {
        Observation::new(SourceKind::FilterPhoto, phenomenon, self.value, location, time).with_flag(self.quality_flag)
    }
}

/// Counts blobs and applies the calibration, flooring negative PM at zero.
pub fn estimate_pm(curve: &CalibrationCurve, img: &GrayImage, params: &BlobParams) -> Result<PmEstimate> {
    if curve.samples < 2 {
        return Err(BlobError::UntrainedCurve(format!("fitted from {} samples", curve.samples)));
    }
    let blobs = detect_blobs(img, params)?;
    let raw = curve.predict(blobs.len());
    let (value, quality_flag) = if raw < 0.0 { (0.0, QualityFlag::Clamped) } else { (raw, QualityFlag::Ok) };
    Ok(PmEstimate { value, quality_flag, blob_count: blobs.len(), blobs })
}
