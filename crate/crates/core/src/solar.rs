//! Solar zenith angle from place and time, and per-city (day of year, time of
//! day) lookup tables.
//!
//! Declination and the equation of time use Spencer's Fourier series. The day
//! angle includes the fractional day, so the result depends only on day of
//! year and UTC hour, never on the calendar year. Refraction is ignored.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::observation::GeoPoint;

#[derive(Debug, Error)]
pub enum SolarError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("query ({doy}, {tod}) outside table axes")]
    OutOfRange { doy: f64, tod: f64 },
    #[error("malformed sza table at line {line}: {reason}")]
    MalformedTable { line: usize, reason: String },
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, SolarError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolarContext {
    pub location: GeoPoint,
    pub doy: u32,
    pub tod_utc: f64,
}

impl SolarContext {
    pub fn new(location: GeoPoint, doy: u32, tod_utc: f64) -> Result<Self> {
        location.validate().map_err(|e| SolarError::Domain(e.to_string()))?;
        if !(1..=366).contains(&doy) {
            return Err(SolarError::Domain(format!("day of year {doy} outside [1, 366]")));
        }
        if !(0.0..24.0).contains(&tod_utc) {
            return Err(SolarError::Domain(format!("time of day {tod_utc} outside [0, 24)")));
        }
        Ok(Self { location, doy, tod_utc })
    }
}

/// Phase shift (days) moving the series' 1950-epoch equinox onto the mean
/// equinox of the 2000-2030 leap cycles.
const EPOCH_PHASE_DAYS: f64 = 0.87;

fn day_angle(doy: f64, tod_utc: f64) -> f64 {
    2.0 * PI * (doy - 1.0 + (tod_utc - 12.0) / 24.0 + EPOCH_PHASE_DAYS) / 365.0
}

/// Spencer's series overshoots the obliquity by ~0.006° near the June
/// solstice; the result is clamped to ±23.45°.
fn spencer_declination(g: f64) -> f64 {
    let max = 23.45_f64.to_radians();
    (0.006918 - 0.399912 * g.cos() + 0.070257 * g.sin() - 0.006758 * (2.0 * g).cos()
        + 0.000907 * (2.0 * g).sin()
        - 0.002697 * (3.0 * g).cos()
        + 0.00148 * (3.0 * g).sin())
    .clamp(-max, max)
}

/// Equation of time in minutes.
fn spencer_eot(g: f64) -> f64 {
    229.18
        * (0.000075 + 0.001868 * g.cos() - 0.032077 * g.sin() - 0.014615 * (2.0 * g).cos()
            - 0.040849 * (2.0 * g).sin())
}

/// Solar declination in radians at 12:00 UTC on `doy`.
pub fn solar_declination(doy: u32) -> Result<f64> {
    if !(1..=366).contains(&doy) {
        return Err(SolarError::Domain(format!("day of year {doy} outside [1, 366]")));
    }
    Ok(spencer_declination(day_angle(doy as f64, 12.0)))
}

/// Equation of time in minutes at 12:00 UTC on `doy`.
pub fn equation_of_time(doy: u32) -> Result<f64> {
    if !(1..=366).contains(&doy) {
        return Err(SolarError::Domain(format!("day of year {doy} outside [1, 366]")));
    }
    Ok(spencer_eot(day_angle(doy as f64, 12.0)))
}

fn zenith_deg(lat: f64, lon: f64, doy: f64, tod_utc: f64) -> f64 {
    let g = day_angle(doy, tod_utc);
    let decl = spencer_declination(g);
    let true_solar_time = tod_utc + lon / 15.0 + spencer_eot(g) / 60.0;
    let hour_angle = (15.0 * (true_solar_time - 12.0)).to_radians();
    let phi = lat.to_radians();
    let cos_z = phi.sin() * decl.sin() + phi.cos() * decl.cos() * hour_angle.cos();
    cos_z.clamp(-1.0, 1.0).acos().to_degrees().clamp(0.0, 180.0)
}

/// Solar zenith angle in degrees, in `[0, 180]`. Values above 90 mean the
/// sun is below the horizon.
pub fn solar_zenith_angle(ctx: &SolarContext) -> f64 {
    zenith_deg(ctx.location.lat, ctx.location.lon, ctx.doy as f64, ctx.tod_utc)
}

/// UTC hour of true solar noon at `lon` on `doy`.
pub fn solar_noon_utc(lon: f64, doy: u32) -> f64 {
    let mut t = 12.0 - lon / 15.0;
    // Two fixed-point passes are plenty: EoT moves < 1 s per hour.
    for _ in 0..2 {
        t = 12.0 - lon / 15.0 - spencer_eot(day_angle(doy as f64, t)) / 60.0;
    }
    t.rem_euclid(24.0)
}

/// Regular grid of solar zenith angles for one city, indexed by day of year
/// (rows) and UTC time of day (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct SzaTable {
    pub city: GeoPoint,
    pub doy_axis: Vec<u32>,
    pub tod_axis: Vec<f64>,
    /// Row-major, `doy_axis.len() × tod_axis.len()`.
    pub sza: Vec<f64>,
}

impl SzaTable {
    pub fn new(city: GeoPoint, doy_axis: Vec<u32>, tod_axis: Vec<f64>, sza: Vec<f64>) -> Result<Self> {
        if doy_axis.len() < 2 || tod_axis.len() < 2 {
            return Err(SolarError::Domain("table axes need at least two samples".into()));
        }
        if !doy_axis.windows(2).all(|w| w[0] < w[1]) || !tod_axis.windows(2).all(|w| w[0] < w[1]) {
            return Err(SolarError::Domain("table axes must be strictly ascending".into()));
        }
        if doy_axis[0] < 1 || *doy_axis.last().unwrap() > 366 {
            return Err(SolarError::Domain("day axis outside [1, 366]".into()));
        }
        if tod_axis[0] < 0.0 || *tod_axis.last().unwrap() >= 24.0 {
            return Err(SolarError::Domain("time axis outside [0, 24)".into()));
        }
        if sza.len() != doy_axis.len() * tod_axis.len() {
            return Err(SolarError::Domain("value count does not match axes".into()));
        }
        if let Some(v) = sza.iter().find(|v| !(0.0..=180.0).contains(*v)) {
            return Err(SolarError::Domain(format!("zenith angle {v} outside [0, 180]")));
        }
        Ok(Self { city, doy_axis, tod_axis, sza })
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.sza[i * self.tod_axis.len() + j]
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("# sza_table lat={} lon={}\ndoy/tod", self.city.lat, self.city.lon);
        for t in &self.tod_axis {
            write!(s, ",{t}").unwrap();
        }
        s.push('\n');
        for (i, d) in self.doy_axis.iter().enumerate() {
            write!(s, "{d}").unwrap();
            for j in 0..self.tod_axis.len() {
                write!(s, ",{:.4}", self.at(i, j)).unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: usize, reason: String| SolarError::MalformedTable { line, reason };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| bad(1, "empty file".into()))?;
        let rest = header
            .trim()
            .strip_prefix("# sza_table")
            .ok_or_else(|| bad(1, "missing `# sza_table` header".into()))?;
        let (mut lat, mut lon) = (None, None);
        for kv in rest.split_whitespace() {
            match kv.split_once('=') {
                Some(("lat", v)) => lat = v.parse::<f64>().ok(),
                Some(("lon", v)) => lon = v.parse::<f64>().ok(),
                _ => {}
            }
        }
        let city = match (lat, lon) {
            (Some(lat), Some(lon)) => GeoPoint::new(lat, lon).map_err(|e| bad(1, e.to_string()))?,
            _ => return Err(bad(1, "header needs lat= and lon=".into())),
        };
        let (n, axis_line) = lines.next().ok_or_else(|| bad(2, "missing time axis".into()))?;
        let tod_axis = axis_line
            .split(',')
            .skip(1)
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad(n + 1, format!("bad time `{v}`"))))
            .collect::<Result<Vec<_>>>()?;
        let (mut doy_axis, mut sza) = (Vec::new(), Vec::new());
        for (n, line) in lines {
            let mut cells = line.split(',');
            let doy = cells.next().unwrap_or_default().trim();
            doy_axis.push(doy.parse::<u32>().map_err(|_| bad(n + 1, format!("bad day `{doy}`")))?);
            let before = sza.len();
            for v in cells {
                sza.push(v.trim().parse::<f64>().map_err(|_| bad(n + 1, format!("bad value `{v}`")))?);
            }
            if sza.len() - before != tod_axis.len() {
                return Err(bad(n + 1, format!("expected {} values", tod_axis.len())));
            }
        }
        Self::new(city, doy_axis, tod_axis, sza).map_err(|e| bad(0, e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| SolarError::Io { path: path.display().to_string(), source })?;
        Self::from_csv(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|source| SolarError::Io { path: path.display().to_string(), source })
    }
}

/// Samples the zenith angle for days `1, 1+doy_step, … ≤ 366` and times
/// `0, tod_step, … < 24`.
pub fn build_sza_table(city: GeoPoint, doy_step: u32, tod_step: f64) -> Result<SzaTable> {
    city.validate().map_err(|e| SolarError::Domain(e.to_string()))?;
    if doy_step == 0 || !(tod_step > 0.0) {
        return Err(SolarError::Domain("steps must be positive".into()));
    }
    let doy_axis: Vec<u32> = (1..=366).step_by(doy_step as usize).collect();
    let tod_axis: Vec<f64> = (0..)
        .map(|k| k as f64 * tod_step)
        .take_while(|&t| t < 24.0)
        .collect();
    if doy_axis.len() < 2 || tod_axis.len() < 2 {
        return Err(SolarError::Domain("steps leave fewer than two samples on an axis".into()));
    }
    let mut sza = Vec::with_capacity(doy_axis.len() * tod_axis.len());
    for &d in &doy_axis {
        for &t in &tod_axis {
            sza.push(zenith_deg(city.lat, city.lon, d as f64, t));
        }
    }
    SzaTable::new(city, doy_axis, tod_axis, sza)
}

/// Bracketing nodes and blend weight along an axis. Past the last node the
/// axis wraps onto the first node one `period` later.
fn bracket(axis: &[f64], x: f64, period: f64, wrap: bool) -> Option<(usize, usize, f64)> {
    let last = axis.len() - 1;
    if x < axis[0] {
        if !wrap {
            return None;
        }
        let lo = axis[last] - period;
        let span = axis[0] - lo;
        if x < lo {
            return None;
        }
        return Some((last, 0, (x - lo) / span));
    }
    if x > axis[last] {
        if !wrap {
            return None;
        }
        let hi = axis[0] + period;
        if x > hi {
            return None;
        }
        return Some((last, 0, (x - axis[last]) / (hi - axis[last])));
    }
    let hi = axis.partition_point(|&a| a <= x).min(last);
    let lo = hi.saturating_sub(1);
    if axis[hi] == x {
        return Some((hi, hi, 0.0));
    }
    Some((lo, hi, (x - axis[lo]) / (axis[hi] - axis[lo])))
}

/// Bilinear lookup over (day of year, time of day). Exact at nodes. Time wraps
/// at 24 h and day wraps at the year end when `wrap` is set.
pub fn lookup_sza_with(table: &SzaTable, doy: f64, tod: f64, wrap: bool) -> Result<f64> {
    let doy_axis: Vec<f64> = table.doy_axis.iter().map(|&d| d as f64).collect();
    let year_len = 366.0_f64.max(doy_axis[doy_axis.len() - 1]);
    let (i0, i1, u) = bracket(&doy_axis, doy, year_len, wrap).ok_or(SolarError::OutOfRange { doy, tod })?;
    let (j0, j1, v) = bracket(&table.tod_axis, tod, 24.0, wrap).ok_or(SolarError::OutOfRange { doy, tod })?;
    let row = |i: usize| (1.0 - v) * table.at(i, j0) + v * table.at(i, j1);
    if u == 0.0 {
        return Ok(row(i0));
    }
    Ok((1.0 - u) * row(i0) + u * row(i1))
}

pub fn lookup_sza(table: &SzaTable, doy: f64, tod: f64) -> Result<f64> {
    lookup_sza_with(table, doy, tod, true)
}
