//! Residual kriging: base map sampling, empirical semivariogram, variogram
//! fitting and ordinary kriging of observation residuals onto a city grid.
//!
//! Distances are planar, in latitude-degree units, with longitude shrunk by
//! the cosine of the mean latitude of the data being kriged.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::observation::{GeoPoint, GeoRect, Observation, PhenomenonKind};

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("point ({lat}, {lon}) lies outside the grid extent")]
    OutOfExtent { lat: f64, lon: f64 },
    #[error("value matrix has {got} entries, grid needs {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("observations mix {0} and {1}")]
    MixedPhenomena(PhenomenonKind, PhenomenonKind),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("need at least 3 non-empty semivariogram bins, got {0}")]
    InsufficientBins(usize),
    #[error("invalid variogram: {0}")]
    InvalidVariogram(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("kriging system is singular (condition number {condition:e})")]
    SingularSystem { condition: f64 },
    #[error("cannot fit a variogram without observations")]
    CannotFitVariogram,
    #[error("malformed grid file at line {line}: {reason}")]
    MalformedGrid { line: usize, reason: String },
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, FusionError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FusionError + '_ {
    move |source| FusionError::Io { path: path.display().to_string(), source }
}

/// Regular lat/lon grid. Row 0 is the southern edge, column 0 the western.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// South-west corner of the grid.
    pub origin: GeoPoint,
    pub dlat: f64,
    pub dlon: f64,
    pub rows: usize,
    pub cols: usize,
}

impl GridSpec {
    pub fn new(origin: GeoPoint, dlat: f64, dlon: f64, rows: usize, cols: usize) -> Result<Self> {
        if !(dlat.is_finite() && dlat > 0.0 && dlon.is_finite() && dlon > 0.0) {
            return Err(FusionError::InvalidGrid(format!("cell sizes must be positive, got {dlat} × {dlon}")));
        }
        if rows == 0 || cols == 0 {
            return Err(FusionError::InvalidGrid(format!("empty grid {rows} × {cols}")));
        }
        origin.validate().map_err(|e| FusionError::InvalidGrid(e.to_string()))?;
        Ok(Self { origin, dlat, dlon, rows, cols })
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_center(&self, row: usize, col: usize) -> GeoPoint {
        GeoPoint {
            lat: self.origin.lat + (row as f64 + 0.5) * self.dlat,
            lon: self.origin.lon + (col as f64 + 0.5) * self.dlon,
        }
    }

    pub fn centers(&self) -> impl Iterator<Item = GeoPoint> + '_ {
        (0..self.len()).map(|i| self.cell_center(i / self.cols, i % self.cols))
    }

    pub fn max_lat(&self) -> f64 {
        self.origin.lat + self.rows as f64 * self.dlat
    }

    pub fn max_lon(&self) -> f64 {
        self.origin.lon + self.cols as f64 * self.dlon
    }

    /// Outer edges of the grid as a rectangle.
    pub fn extent(&self) -> GeoRect {
        GeoRect { min_lat: self.origin.lat, max_lat: self.max_lat(), min_lon: self.origin.lon, max_lon: self.max_lon() }
    }

    /// Inclusive of the outer edges.
    pub fn contains(&self, p: GeoPoint) -> bool {
        p.lat >= self.origin.lat && p.lat <= self.max_lat() && p.lon >= self.origin.lon && p.lon <= self.max_lon()
    }

    /// Row/column of the cell containing `p`, edges going to the last cell.
    pub fn cell_of(&self, p: GeoPoint) -> Option<(usize, usize)> {
        if !self.contains(p) {
            return None;
        }
        let r = (((p.lat - self.origin.lat) / self.dlat) as usize).min(self.rows - 1);
        let c = (((p.lon - self.origin.lon) / self.dlon) as usize).min(self.cols - 1);
        Some((r, c))
    }

    fn header(&self) -> String {
        format!(
            "# grid lat0={} lon0={} dlat={} dlon={} rows={} cols={}",
            self.origin.lat, self.origin.lon, self.dlat, self.dlon, self.rows, self.cols
        )
    }

    fn parse_header(line: &str) -> Result<Self> {
        let bad = |reason: String| FusionError::MalformedGrid { line: 1, reason };
        let rest = line.strip_prefix("# grid").ok_or_else(|| bad("missing `# grid` header".into()))?;
        let mut fields = std::collections::HashMap::new();
        for kv in rest.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| bad(format!("bad field `{kv}`")))?;
            fields.insert(k, v);
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| bad(format!("missing `{k}`")));
        let num = |k: &str| get(k)?.parse::<f64>().map_err(|_| bad(format!("bad `{k}`")));
        let count = |k: &str| get(k)?.parse::<usize>().map_err(|_| bad(format!("bad `{k}`")));
        let origin = GeoPoint { lat: num("lat0")?, lon: num("lon0")? };
        Self::new(origin, num("dlat")?, num("dlon")?, count("rows")?, count("cols")?).map_err(|e| bad(e.to_string()))
    }
}

/// Fixed six-decimal formatting that never prints a negative zero.
pub fn fmt6(x: f64) -> String {
    let s = format!("{x:.6}");
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}

/// Grid file body: header line, then one line per row from south to north.
pub fn write_grid(spec: &GridSpec, values: &[f64]) -> String {
    let mut out = spec.header();
    out.push('\n');
    for row in values.chunks(spec.cols) {
        let line: Vec<String> = row.iter().map(|&v| fmt6(v)).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_grid(text: &str) -> Result<(GridSpec, Vec<f64>)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(FusionError::MalformedGrid { line: 1, reason: "empty file".into() })?;
    let spec = GridSpec::parse_header(header.trim())?;
    let mut values = Vec::with_capacity(spec.len());
    let mut rows = 0;
    for (i, l) in lines {
        let row: Vec<f64> = l
            .split_whitespace()
            .map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<_>>()
            .ok_or_else(|| FusionError::MalformedGrid { line: i + 1, reason: "non-numeric value".into() })?;
        if row.len() != spec.cols {
            return Err(FusionError::MalformedGrid {
                line: i + 1,
                reason: format!("expected {} values, found {}", spec.cols, row.len()),
            });
        }
        values.extend(row);
        rows += 1;
    }
    if rows != spec.rows {
        return Err(FusionError::MalformedGrid { line: rows + 1, reason: format!("expected {} rows, found {rows}", spec.rows) });
    }
    Ok((spec, values))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseMap {
    pub grid: GridSpec,
    /// Row-major, row 0 south.
    pub values: Vec<f64>,
}

impl BaseMap {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(FusionError::ShapeMismatch { expected: grid.len(), got: values.len() });
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Self { grid, values: vec![value; grid.len()] }
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.grid.cols + col]
    }

    pub fn to_text(&self) -> String {
        write_grid(&self.grid, &self.values)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (grid, values) = parse_grid(text)?;
        Self::new(grid, values)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_text(&fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(io_err(path))
    }
}

/// Bilinear interpolation over cell centres. Between the outermost centres
/// and the grid edge the nearest centre row/column is held constant.
pub fn sample_basemap(map: &BaseMap, p: GeoPoint) -> Result<f64> {
    let g = &map.grid;
    if !g.contains(p) {
        return Err(FusionError::OutOfExtent { lat: p.lat, lon: p.lon });
    }
    let axis = |offset: f64, step: f64, n: usize| -> (usize, usize, f64) {
        let mut f = (offset / step - 0.5).clamp(0.0, (n - 1) as f64);
        // Snap float noise so queries at cell centres return stored values exactly.
        if (f - f.round()).abs() < 1e-9 {
            f = f.round();
        }
        let i0 = (f.floor() as usize).min(n.saturating_sub(2));
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, f - i0 as f64)
    };
    let (r0, r1, ty) = axis(p.lat - g.origin.lat, g.dlat, g.rows);
    let (c0, c1, tx) = axis(p.lon - g.origin.lon, g.dlon, g.cols);
    let south = map.at(r0, c0) * (1.0 - tx) + map.at(r0, c1) * tx;
    let north = map.at(r1, c0) * (1.0 - tx) + map.at(r1, c1) * tx;
    Ok(south * (1.0 - ty) + north * ty)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Residuals {
    pub points: Vec<(GeoPoint, f64)>,
    pub phenomenon: Option<PhenomenonKind>,
    pub warnings: Vec<String>,
}

/// `obs.value − basemap(obs.location)`. Observations outside the grid or
/// without a numeric value are dropped with a warning.
pub fn compute_residuals(obs: &[Observation], map: &BaseMap) -> Result<Residuals> {
    let mut out = Residuals::default();
    for o in obs {
        match out.phenomenon {
            None => out.phenomenon = Some(o.phenomenon),
            Some(p) if p != o.phenomenon => return Err(FusionError::MixedPhenomena(p, o.phenomenon)),
            Some(_) => {}
        }
        let Some(v) = o.value.as_real() else {
            out.warnings.push(format!("observation `{}` has no numeric value", o.id));
            continue;
        };
        match sample_basemap(map, o.location) {
            Ok(base) => out.points.push((o.location, v - base)),
            Err(_) => out.warnings.push(format!(
                "observation `{}` at ({}, {}) lies outside the grid",
                o.id, o.location.lat, o.location.lon
            )),
        }
    }
    Ok(out)
}

/// Planar metric with a fixed longitude scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metric {
    pub ref_lat: f64,
    cos_ref: f64,
}

impl Metric {
    pub fn new(ref_lat: f64) -> Self {
        Self { ref_lat, cos_ref: ref_lat.to_radians().cos() }
    }

    /// Uses the mean latitude of `points`.
    pub fn for_points(points: &[(GeoPoint, f64)]) -> Self {
        if points.is_empty() {
            return Self::new(0.0);
        }
        Self::new(points.iter().map(|(p, _)| p.lat).sum::<f64>() / points.len() as f64)
    }

    pub fn distance(&self, a: GeoPoint, b: GeoPoint) -> f64 {
        let dy = a.lat - b.lat;
        let dx = (a.lon - b.lon) * self.cos_ref;
        (dx * dx + dy * dy).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemivariogramBin {
    /// Bin centre.
    pub lag: f64,
    pub gamma: f64,
    pub pairs: usize,
}

/// Bins `½(vᵢ − vⱼ)²` over unordered pairs by distance, with `n_bins` equal
/// bins on `[0, max_lag]`. Empty bins are left out.
pub fn empirical_semivariogram(points: &[(GeoPoint, f64)], n_bins: usize, max_lag: f64) -> Result<Vec<SemivariogramBin>> {
    if points.len() < 2 {
        return Err(FusionError::TooFewPoints { needed: 2, got: points.len() });
    }
    if n_bins == 0 || !(max_lag.is_finite() && max_lag > 0.0) {
        return Err(FusionError::InvalidParams(format!("n_bins {n_bins}, max_lag {max_lag}")));
    }
    let metric = Metric::for_points(points);
    let width = max_lag / n_bins as f64;
    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = metric.distance(points[i].0, points[j].0);
            if d > max_lag {
                continue;
            }
            let k = ((d / width) as usize).min(n_bins - 1);
            sums[k] += 0.5 * (points[i].1 - points[j].1).powi(2);
            counts[k] += 1;
        }
    }
    Ok((0..n_bins)
        .filter(|&k| counts[k] > 0)
        .map(|k| SemivariogramBin { lag: (k as f64 + 0.5) * width, gamma: sums[k] / counts[k] as f64, pairs: counts[k] })
        .collect())
}

/// Half the largest pairwise distance, a common default lag cut-off.
pub fn default_max_lag(points: &[(GeoPoint, f64)]) -> f64 {
    let metric = Metric::for_points(points);
    let mut max: f64 = 0.0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            max = max.max(metric.distance(points[i].0, points[j].0));
        }
    }
    max / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariogramKind {
    Exponential,
    Spherical,
}

impl std::str::FromStr for VariogramKind {
    type Err = FusionError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exponential" | "exp" => Ok(VariogramKind::Exponential),
            "spherical" | "sph" => Ok(VariogramKind::Spherical),
            _ => Err(FusionError::InvalidVariogram(format!("unknown model `{s}`"))),
        }
    }
}

impl std::fmt::Display for VariogramKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VariogramKind::Exponential => "exponential",
            VariogramKind::Spherical => "spherical",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariogramModel {
    pub kind: VariogramKind,
    pub nugget: f64,
    pub sill: f64,
    pub range: f64,
}

impl VariogramModel {
    pub fn new(kind: VariogramKind, nugget: f64, sill: f64, range: f64) -> Result<Self> {
        if !(nugget.is_finite() && sill.is_finite() && range.is_finite()) {
            return Err(FusionError::InvalidVariogram("non-finite parameter".into()));
        }
        if nugget < 0.0 || sill < nugget || range <= 0.0 {
            return Err(FusionError::InvalidVariogram(format!(
                "need 0 <= nugget <= sill and range > 0, got nugget {nugget}, sill {sill}, range {range}"
            )));
        }
        Ok(Self { kind, nugget, sill, range })
    }

    /// `γ(0) = 0`; for `h > 0` the nugget plus the structured part.
    pub fn gamma(&self, h: f64) -> f64 {
        if h <= 0.0 {
            return 0.0;
        }
        let s = h / self.range;
        let shape = match self.kind {
            VariogramKind::Exponential => 1.0 - (-3.0 * s).exp(),
            VariogramKind::Spherical if s < 1.0 => 1.5 * s - 0.5 * s * s * s,
            VariogramKind::Spherical => 1.0,
        };
        self.nugget + (self.sill - self.nugget) * shape
    }
}

fn wls(bins: &[SemivariogramBin], kind: VariogramKind, p: [f64; 3]) -> f64 {
    let m = VariogramModel { kind, nugget: p[0], sill: p[1], range: p[2] };
    bins.iter().map(|b| b.pairs as f64 * (b.gamma - m.gamma(b.lag)).powi(2)).sum()
}

/// Weighted least squares fit (weights = pair counts). A 10×10×10 grid over
/// nugget, sill and range seeds a coordinate-descent refinement with step
/// halving. The range is kept between the smallest lag and ten times the
/// largest. Ties go to the pure-nugget model.
pub fn fit_variogram(bins: &[SemivariogramBin], kind: VariogramKind) -> Result<VariogramModel> {
    if bins.len() < 3 {
        return Err(FusionError::InsufficientBins(bins.len()));
    }
    let gmax = bins.iter().map(|b| b.gamma).fold(0.0, f64::max);
    let hmin = bins.iter().map(|b| b.lag).fold(f64::INFINITY, f64::min);
    let hmax = bins.iter().map(|b| b.lag).fold(0.0, f64::max);
    let (r_lo, r_hi) = (hmin, 10.0 * hmax);
    let clamp = |mut p: [f64; 3]| {
        p[0] = p[0].max(0.0);
        p[1] = p[1].max(p[0]);
        p[2] = p[2].clamp(r_lo, r_hi);
        p
    };

    let steps = 10;
    let level = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (steps - 1) as f64;
    let mut best = clamp([0.0, gmax, hmax]);
    let mut best_err = wls(bins, kind, best);
    for i in 0..steps {
        let nugget = level(0.0, gmax, i);
        for j in 0..steps {
            let sill = level(0.0, 1.5 * gmax, j);
            if sill < nugget {
                continue;
            }
            for k in 0..steps {
                let p = [nugget, sill, level(r_lo, 2.0 * hmax, k)];
                let e = wls(bins, kind, p);
                if e < best_err {
                    best = p;
                    best_err = e;
                }
            }
        }
    }

    let scale = [gmax.max(f64::MIN_POSITIVE), gmax.max(f64::MIN_POSITIVE), hmax];
    let mut step = [gmax / 9.0, 1.5 * gmax / 9.0, (2.0 * hmax - r_lo) / 9.0];
    for _ in 0..20_000 {
        let mut improved = false;
        for c in 0..3 {
            for sign in [1.0, -1.0] {
                let mut p = best;
                p[c] += sign * step[c];
                let p = clamp(p);
                let e = wls(bins, kind, p);
                if e < best_err {
                    best = p;
                    best_err = e;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            for c in 0..3 {
                step[c] *= 0.5;
            }
            if (0..3).all(|c| step[c] <= 1e-12 * scale[c]) {
                break;
            }
        }
    }
    // Prefer the pure-nugget model whenever it fits no worse: flat data are
    // also matched exactly by a short-range model, which would be spurious.
    let total: f64 = bins.iter().map(|b| b.pairs as f64).sum();
    let mean = bins.iter().map(|b| b.pairs as f64 * b.gamma).sum::<f64>() / total;
    let flat = [mean, mean, best[2]];
    if wls(bins, kind, flat) <= best_err * (1.0 + 1e-9) {
        best = flat;
    }
    VariogramModel::new(kind, best[0], best[1], best[2])
}

/// Averages observations sharing an exact location, keeping first-seen order.
pub fn merge_duplicates(points: &[(GeoPoint, f64)]) -> Vec<(GeoPoint, f64)> {
    let mut order: Vec<(GeoPoint, f64, usize)> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for &(p, v) in points {
        let key = (p.lat.to_bits(), p.lon.to_bits());
        match index.get(&key) {
            Some(&i) => {
                let e: &mut (GeoPoint, f64, usize) = &mut order[i];
                e.1 += v;
                e.2 += 1;
            }
            None => {
                index.insert(key, order.len());
                order.push((p, v, 1));
            }
        }
    }
    order.into_iter().map(|(p, s, n)| (p, s / n as f64)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointEstimate {
    pub value: f64,
    pub variance: f64,
    pub weights: Vec<f64>,
    pub lagrange: f64,
}

/// Above this the bordered system is treated as singular.
pub const MAX_CONDITION: f64 = 1e13;

/// Ordinary kriging system for a fixed data set, factorised once.
#[derive(Debug, Clone)]
pub struct Kriger {
    points: Vec<(GeoPoint, f64)>,
    model: VariogramModel,
    metric: Metric,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl Kriger {
    pub fn new(points: &[(GeoPoint, f64)], model: VariogramModel) -> Result<Self> {
        let points = merge_duplicates(points);
        if points.is_empty() {
            return Err(FusionError::TooFewPoints { needed: 1, got: 0 });
        }
        let metric = Metric::for_points(&points);
        Self::with_metric(points, model, metric)
    }

    pub fn with_metric(points: Vec<(GeoPoint, f64)>, model: VariogramModel, metric: Metric) -> Result<Self> {
        let n = points.len();
        let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    a[(i, j)] = model.gamma(metric.distance(points[i].0, points[j].0));
                }
            }
            a[(i, n)] = 1.0;
            a[(n, i)] = 1.0;
        }
        let sv = a.singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !(condition.is_finite() && condition <= MAX_CONDITION) {
            return Err(FusionError::SingularSystem { condition });
        }
        Ok(Self { points, model, metric, lu: a.lu() })
    }

    pub fn points(&self) -> &[(GeoPoint, f64)] {
        &self.points
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn predict(&self, target: GeoPoint) -> Result<PointEstimate> {
        let n = self.points.len();
        let mut b = DVector::<f64>::zeros(n + 1);
        for (i, (p, _)) in self.points.iter().enumerate() {
            b[i] = self.model.gamma(self.metric.distance(*p, target));
        }
        b[n] = 1.0;
        let x = self.lu.solve(&b).ok_or(FusionError::SingularSystem { condition: f64::INFINITY })?;
        let weights: Vec<f64> = x.iter().take(n).copied().collect();
        let lagrange = x[n];
        let value = weights.iter().zip(&self.points).map(|(w, (_, v))| w * v).sum();
        let variance = weights.iter().zip(b.iter()).map(|(w, g)| w * g).sum::<f64>() + lagrange;
        Ok(PointEstimate { value, variance, weights, lagrange })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrigedSurface {
    pub values: Vec<f64>,
    pub variance: Vec<f64>,
    /// Largest `|Σw − 1|` over all cells.
    pub max_weight_sum_error: f64,
}

/// Kriges `points` at every cell centre. Cells are solved in parallel against
/// one shared factorisation; results do not depend on the thread count.
pub fn ordinary_kriging(points: &[(GeoPoint, f64)], model: &VariogramModel, grid: &GridSpec) -> Result<KrigedSurface> {
    let kriger = Kriger::new(points, *model)?;
    krige_grid(&kriger, grid)
}

pub fn krige_grid(kriger: &Kriger, grid: &GridSpec) -> Result<KrigedSurface> {
    let cells: Vec<PointEstimate> = (0..grid.len())
        .into_par_iter()
        .map(|i| kriger.predict(grid.cell_center(i / grid.cols, i % grid.cols)))
        .collect::<Result<_>>()?;
    let max_weight_sum_error =
        cells.iter().map(|c| (c.weights.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
    Ok(KrigedSurface {
        values: cells.iter().map(|c| c.value).collect(),
        variance: cells.iter().map(|c| c.variance).collect(),
        max_weight_sum_error,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VariogramChoice {
    Fixed(VariogramModel),
    /// Fit from the residuals; `max_lag` defaults to half the largest pair
    /// distance.
    Auto { kind: VariogramKind, n_bins: usize, max_lag: Option<f64> },
}

impl Default for VariogramChoice {
    fn default() -> Self {
        VariogramChoice::Auto { kind: VariogramKind::Exponential, n_bins: 10, max_lag: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedMap {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub variance: Vec<f64>,
}

impl FusedMap {
    /// Sibling file that holds the variance grid.
    pub fn variance_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".var");
        PathBuf::from(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, write_grid(&self.grid, &self.values)).map_err(io_err(path))?;
        let var = Self::variance_path(path);
        fs::write(&var, write_grid(&self.grid, &self.variance)).map_err(io_err(&var))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (grid, values) = parse_grid(&fs::read_to_string(path).map_err(io_err(path))?)?;
        let var = Self::variance_path(path);
        let (vgrid, variance) = parse_grid(&fs::read_to_string(&var).map_err(io_err(&var))?)?;
        if vgrid != grid {
            return Err(FusionError::MalformedGrid { line: 1, reason: "variance grid differs from value grid".into() });
        }
        Ok(Self { grid, values, variance })
    }

    /// Cell centres as GeoJSON points with `value` and `variance` properties.
    pub fn to_geojson(&self) -> String {
        let mut out = String::from("{\"type\":\"FeatureCollection\",\"features\":[\n");
        for (i, p) in self.grid.centers().enumerate() {
            let sep = if i + 1 < self.grid.len() { "," } else { "" };
            let _ = writeln!(
                out,
                "{{\"type\":\"Feature\",\"geometry\":{{\"type\":\"Point\",\"coordinates\":[{},{}]}},\"properties\":{{\"row\":{},\"col\":{},\"value\":{},\"variance\":{}}}}}{sep}",
                fmt6(p.lon),
                fmt6(p.lat),
                i / self.grid.cols,
                i % self.grid.cols,
                fmt6(self.values[i]),
                fmt6(self.variance[i])
            );
        }
        out.push_str("]}\n");
        out
    }

    /// `lat,lon,value,variance` per cell centre.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lat,lon,value,variance\n");
        for (i, p) in self.grid.centers().enumerate() {
            let _ = writeln!(out, "{},{},{},{}", fmt6(p.lat), fmt6(p.lon), fmt6(self.values[i]), fmt6(self.variance[i]));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionReport {
    pub map: FusedMap,
    /// `None` when there was nothing to krige.
    pub model: Option<VariogramModel>,
    pub residuals: Residuals,
}

/// Base map plus the kriged residual field.
///
/// With no usable observations the base map is returned unchanged with the
/// model sill as variance (auto mode cannot fit one and fails). When every
/// residual is identical the field is that constant with zero variance, since
/// the empirical semivariogram vanishes and no model can be fitted to it.
pub fn residual_kriging_fuse(obs: &[Observation], basemap: &BaseMap, choice: VariogramChoice) -> Result<FusionReport> {
    let residuals = compute_residuals(obs, basemap)?;
    let grid = basemap.grid;
    let points = merge_duplicates(&residuals.points);
    if points.is_empty() {
        let VariogramChoice::Fixed(model) = choice else {
            return Err(FusionError::CannotFitVariogram);
        };
        let map = FusedMap { grid, values: basemap.values.clone(), variance: vec![model.sill; grid.len()] };
        return Ok(FusionReport { map, model: Some(model), residuals });
    }
    let model = match choice {
        VariogramChoice::Fixed(m) => Some(m),
        VariogramChoice::Auto { .. } if points.iter().all(|p| p.1 == points[0].1) => None,
        VariogramChoice::Auto { kind, n_bins, max_lag } => {
            let lag = max_lag.unwrap_or_else(|| default_max_lag(&points));
            let bins = empirical_semivariogram(&points, n_bins, lag)?;
            Some(fit_variogram(&bins, kind)?)
        }
    };
    let surface = match model {
        Some(m) => krige_grid(&Kriger::new(&points, m)?, &grid)?,
        None => KrigedSurface {
            values: vec![points[0].1; grid.len()],
            variance: vec![0.0; grid.len()],
            max_weight_sum_error: 0.0,
        },
    };
    let values = basemap.values.iter().zip(&surface.values).map(|(b, r)| b + r).collect();
    Ok(FusionReport { map: FusedMap { grid, values, variance: surface.variance }, model, residuals })
}
