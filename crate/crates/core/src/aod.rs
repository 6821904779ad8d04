//! R/G-ratio lookup table relating solar zenith angle and aerosol optical
//! depth, its inversion, and the photo → AOD pipeline.
//!
//! The table is produced offline by a radiative-transfer model, with the R/G
//! ratio approximated by the ratio of diffuse irradiance at two wavelengths.
//! [`generate_synthetic_table`] builds an analytic stand-in for tests.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::observation::{GeoPoint, Observation, PhenomenonKind, QualityFlag, SourceKind, TimeStamp};
use crate::raster::RasterImage;
use crate::sky::{detect_sky, sky_stats, SkyParams};
use crate::solar::{lookup_sza, SzaTable};

#[derive(Debug, Error)]
pub enum AodError {
    #[error("malformed rg table at line {line}, column {column}: {reason}")]
    MalformedTable { line: usize, column: usize, reason: String },
    #[error("rg row at sza {sza} is not strictly monotone in aod")]
    NonMonotoneRow { sza: f64 },
    #[error("{what} {value} outside table range [{min}, {max}]")]
    OutOfRange { what: &'static str, value: f64, min: f64, max: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("image location ({lat}, {lon}) is {distance_km:.1} km from the table's city")]
    OutOfArea { lat: f64, lon: f64, distance_km: f64 },
    #[error("table range error: {0}")]
    TableRange(String),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, AodError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monotonicity {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RgTable {
    sza_axis: Vec<f64>,
    aod_axis: Vec<f64>,
    /// Row-major, one row per SZA node.
    rg: Vec<f64>,
    wavelengths_nm: (f64, f64),
    provenance: String,
    direction: Monotonicity,
}

fn strictly_ascending(axis: &[f64]) -> bool {
    axis.iter().all(|v| v.is_finite()) && axis.windows(2).all(|w| w[0] < w[1])
}

impl RgTable {
    pub fn new(
        sza_axis: Vec<f64>,
        aod_axis: Vec<f64>,
        rg: Vec<f64>,
        wavelengths_nm: (f64, f64),
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let malformed = |reason: &str| AodError::MalformedTable { line: 0, column: 0, reason: reason.into() };
        if sza_axis.len() < 2 || aod_axis.len() < 2 {
            return Err(malformed("both axes need at least two nodes"));
        }
        if !strictly_ascending(&sza_axis) {
            return Err(malformed("sza axis not strictly ascending"));
        }
        if !strictly_ascending(&aod_axis) {
            return Err(malformed("aod axis not strictly ascending"));
        }
        if rg.len() != sza_axis.len() * aod_axis.len() {
            return Err(malformed("value count does not match axes"));
        }
        if let Some(v) = rg.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(malformed(&format!("non-positive rg value {v}")));
        }
        let n = aod_axis.len();
        let direction = if rg[1] > rg[0] { Monotonicity::Increasing } else { Monotonicity::Decreasing };
        for (i, row) in rg.chunks(n).enumerate() {
            let ok = row.windows(2).all(|w| match direction {
                Monotonicity::Increasing => w[1] > w[0],
                Monotonicity::Decreasing => w[1] < w[0],
            });
            if !ok {
                return Err(AodError::NonMonotoneRow { sza: sza_axis[i] });
            }
        }
        Ok(Self { sza_axis, aod_axis, rg, wavelengths_nm, provenance: provenance.into(), direction })
    }

    pub fn sza_axis(&self) -> &[f64] {
        &self.sza_axis
    }

    pub fn aod_axis(&self) -> &[f64] {
        &self.aod_axis
    }

    pub fn direction(&self) -> Monotonicity {
        self.direction
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn wavelengths_nm(&self) -> (f64, f64) {
        self.wavelengths_nm
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.rg[i * self.aod_axis.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.aod_axis.len();
        &self.rg[i * n..(i + 1) * n]
    }

    pub fn to_csv(&self) -> String {
        let (a, b) = self.wavelengths_nm;
        let mut s = format!("# rg_table wl={a},{b} provenance={}\n", self.provenance);
        let axis: Vec<String> = self.aod_axis.iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&axis.join(","));
        s.push('\n');
        for (i, sza) in self.sza_axis.iter().enumerate() {
            write!(s, "{sza:?}").unwrap();
            for v in self.row(i) {
                write!(s, ",{v:?}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: usize, column: usize, reason: String| AodError::MalformedTable { line, column, reason };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| bad(1, 0, "empty file".into()))?;
        let rest = header
            .trim()
            .strip_prefix("# rg_table")
            .ok_or_else(|| bad(1, 0, "missing `# rg_table` header".into()))?;
        let mut wavelengths = (550.0, 700.0);
        let mut provenance = String::new();
        for kv in rest.split_whitespace() {
            match kv.split_once('=') {
                Some(("wl", v)) => {
                    let parsed = v
                        .split_once(',')
                        .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)))
                        .ok_or_else(|| bad(1, 0, format!("bad wavelength pair `{v}`")))?;
                    wavelengths = parsed;
                }
                Some(("provenance", v)) => provenance = v.to_string(),
                _ => {}
            }
        }
        let parse_row = |n: usize, line: &str| -> Result<Vec<f64>> {
            line.split(',')
                .enumerate()
                .map(|(c, v)| v.trim().parse::<f64>().map_err(|_| bad(n + 1, c + 1, format!("`{}` is not a number", v.trim()))))
                .collect()
        };
        let (n, axis_line) = lines.next().ok_or_else(|| bad(2, 0, "missing aod axis".into()))?;
        let aod_axis = parse_row(n, axis_line)?;
        if !strictly_ascending(&aod_axis) {
            return Err(bad(n + 1, 0, "aod axis not strictly ascending".into()));
        }
        let (mut sza_axis, mut rg) = (Vec::new(), Vec::new());
        for (n, line) in lines {
            let row = parse_row(n, line)?;
            if row.len() != aod_axis.len() + 1 {
                return Err(bad(n + 1, row.len(), format!("expected {} columns", aod_axis.len() + 1)));
            }
            if let Some(&prev) = sza_axis.last() {
                if row[0] <= prev {
                    return Err(bad(n + 1, 1, format!("sza {} not above previous {prev}", row[0])));
                }
            }
            for (c, v) in row[1..].iter().enumerate() {
                if *v <= 0.0 {
                    return Err(bad(n + 1, c + 2, format!("non-positive rg {v}")));
                }
            }
            sza_axis.push(row[0]);
            rg.extend_from_slice(&row[1..]);
        }
        Self::new(sza_axis, aod_axis, rg, wavelengths, provenance)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| AodError::Io { path: path.display().to_string(), source })?;
        Self::from_csv(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|source| AodError::Io { path: path.display().to_string(), source })
    }
}

/// Lower node index and blend weight of `x` on an ascending axis.
fn locate(axis: &[f64], x: f64, what: &'static str) -> Result<(usize, f64)> {
    let (min, max) = (axis[0], axis[axis.len() - 1]);
    if !(x >= min && x <= max) {
        return Err(AodError::OutOfRange { what, value: x, min, max });
    }
    let hi = axis.partition_point(|&a| a <= x);
    if hi == axis.len() {
        return Ok((axis.len() - 2, 1.0));
    }
    let lo = hi - 1;
    Ok((lo, (x - axis[lo]) / (axis[hi] - axis[lo])))
}

/// Bilinear forward evaluation of the table.
pub fn eval_rg(table: &RgTable, sza: f64, aod: f64) -> Result<f64> {
    let (i, u) = locate(&table.sza_axis, sza, "sza")?;
    let (j, v) = locate(&table.aod_axis, aod, "aod")?;
    let along = |i: usize| (1.0 - v) * table.at(i, j) + v * table.at(i, j + 1);
    Ok((1.0 - u) * along(i) + u * along(i + 1))
}

/// R/G as a function of AOD at `sza`: the two bracketing rows blended nodewise.
fn profile_at(table: &RgTable, sza: f64) -> Result<Vec<f64>> {
    let (i, u) = locate(&table.sza_axis, sza, "sza")?;
    Ok(table.row(i).iter().zip(table.row(i + 1)).map(|(a, b)| (1.0 - u) * a + u * b).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AodEstimate {
    pub aod: f64,
    pub quality_flag: QualityFlag,
    pub sza: f64,
    pub rg: f64,
    pub image_id: Option<String>,
}

/// Inverts the piecewise-linear R/G profile at `sza`. R/G values beyond the
/// profile clamp to the nearest AOD endpoint with flag `Clamped`.
pub fn invert_aod(table: &RgTable, sza: f64, rg: f64) -> Result<AodEstimate> {
    let mut profile = profile_at(table, sza)?;
    let mut aod = table.aod_axis.clone();
    if table.direction == Monotonicity::Decreasing {
        profile.reverse();
        aod.reverse();
    }
    let estimate = |value: f64, flag| AodEstimate { aod: value, quality_flag: flag, sza, rg, image_id: None };
    let last = profile.len() - 1;
    if !rg.is_finite() {
        return Err(AodError::Domain(format!("rg {rg} is not finite")));
    }
    if rg < profile[0] {
        return Ok(estimate(aod[0], QualityFlag::Clamped));
    }
    if rg > profile[last] {
        return Ok(estimate(aod[last], QualityFlag::Clamped));
    }
    let hi = profile.partition_point(|&p| p <= rg);
    if hi == profile.len() {
        return Ok(estimate(aod[last], QualityFlag::Ok));
    }
    let lo = hi - 1;
    if profile[lo] == rg {
        return Ok(estimate(aod[lo], QualityFlag::Ok));
    }
    let t = (rg - profile[lo]) / (profile[hi] - profile[lo]);
    Ok(estimate(aod[lo] + t * (aod[hi] - aod[lo]), QualityFlag::Ok))
}

/// Coefficients of the analytic table `rg = (b0 + b1·sza) + (s0 + s1·sza)·aod`
/// with `sza` in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticParams {
    pub b0: f64,
    pub b1: f64,
    pub s0: f64,
    pub s1: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self { b0: 0.55, b1: 0.002, s0: 0.30, s1: 0.001 }
    }
}

impl SyntheticParams {
    pub fn rg(&self, sza: f64, aod: f64) -> f64 {
        (self.b0 + self.b1 * sza) + (self.s0 + self.s1 * sza) * aod
    }
}

pub fn generate_synthetic_table(sza_axis: &[f64], aod_axis: &[f64], params: SyntheticParams) -> Result<RgTable> {
    if let Some(&sza) = sza_axis.iter().find(|&&s| params.s0 + params.s1 * s <= 0.0) {
        return Err(AodError::Domain(format!("slope is non-positive at sza {sza}")));
    }
    let rg = sza_axis
        .iter()
        .flat_map(|&s| aod_axis.iter().map(move |&a| params.rg(s, a)))
        .collect();
    RgTable::new(sza_axis.to_vec(), aod_axis.to_vec(), rg, (550.0, 700.0), "synthetic").map_err(|e| match e {
        AodError::MalformedTable { reason, .. } => AodError::Domain(reason),
        other => other,
    })
}

/// `n` evenly spaced values from `start` to `end` inclusive.
pub fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| start + (end - start) * k as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AodPipelineParams {
    pub sky: SkyParams,
    /// Images with a larger solar zenith angle are rejected.
    pub max_sza: f64,
    /// Images farther than this from the table's city are rejected.
    pub max_city_distance_km: f64,
}

impl Default for AodPipelineParams {
    fn default() -> Self {
        Self { sky: SkyParams::default(), max_sza: 85.0, max_city_distance_km: 50.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Unusable {
    NotEnoughSky { sky_fraction: f64 },
    SunTooLow { sza: f64 },
}

impl std::fmt::Display for Unusable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Unusable::NotEnoughSky { sky_fraction } => write!(f, "sky fraction {sky_fraction:.4} below minimum"),
            Unusable::SunTooLow { sza } => write!(f, "solar zenith angle {sza:.2} above daylight gate"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AodOutcome {
    Estimate(AodEstimate),
    Unusable(Unusable),
}

fn distance_km(a: GeoPoint, b: GeoPoint) -> f64 {
    const KM_PER_DEG: f64 = 111.195;
    let mean_lat = 0.5 * (a.lat + b.lat);
    let dy = a.lat - b.lat;
    let dx = (a.lon - b.lon) * mean_lat.to_radians().cos();
    (dx * dx + dy * dy).sqrt() * KM_PER_DEG
}

/// Sky detection → mean R/G → SZA lookup → table inversion.
pub fn estimate_aod_from_image(
    img: &RasterImage,
    image_id: &str,
    location: GeoPoint,
    time: TimeStamp,
    sza_table: &SzaTable,
    rg_table: &RgTable,
    params: &AodPipelineParams,
) -> Result<AodOutcome> {
    let d = distance_km(location, sza_table.city);
    if d > params.max_city_distance_km {
        return Err(AodError::OutOfArea { lat: location.lat, lon: location.lon, distance_km: d });
    }
    let sza = lookup_sza(sza_table, time.day_of_year() as f64, time.time_of_day())
        .map_err(|e| AodError::TableRange(e.to_string()))?;
    if sza > params.max_sza {
        return Ok(AodOutcome::Unusable(Unusable::SunTooLow { sza }));
    }
    let mask = detect_sky(img, &params.sky);
    let stats = sky_stats(img, &mask, params.sky.min_fraction).map_err(|e| AodError::Domain(e.to_string()))?;
    let mean_rg = match stats.mean_rg {
        Some(rg) if stats.usable => rg,
        _ => return Ok(AodOutcome::Unusable(Unusable::NotEnoughSky { sky_fraction: stats.sky_fraction })),
    };
    let (lo, hi) = (rg_table.sza_axis[0], rg_table.sza_axis[rg_table.sza_axis.len() - 1]);
    if sza < lo || sza > hi {
        return Err(AodError::TableRange(format!("sza {sza:.3} outside rg table axis [{lo}, {hi}]")));
    }
    let mut estimate = invert_aod(rg_table, sza, mean_rg)?;
    if stats.suspect && estimate.quality_flag == QualityFlag::Ok {
        estimate.quality_flag = QualityFlag::Suspect;
    }
    estimate.image_id = Some(image_id.to_string());
    Ok(AodOutcome::Estimate(estimate))
}

impl AodEstimate {
    pub fn to_observation(&self, source: SourceKind, location: GeoPoint, time: TimeStamp) -> Observation {
        Observation::new(source, PhenomenonKind::Aod, self.aod, location, time).with_flag(self.quality_flag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> RgTable {
        RgTable::from_csv(
            "# rg_table wl=550,700 provenance=fixture\n0.0,0.5,1.0\n0,0.60,0.70,0.80\n30,0.65,0.76,0.87\n60,0.70,0.82,0.94\n",
        )
        .unwrap()
    }

    #[test]
    fn loads_well_formed_fixture() {
        let t = fixture();
        assert_eq!(t.direction(), Monotonicity::Increasing);
        assert_eq!(t.sza_axis(), &[0.0, 30.0, 60.0]);
        assert_eq!(t.provenance(), "fixture");
        assert_eq!(t.wavelengths_nm(), (550.0, 700.0));
    }

    #[test]
    fn rejects_dip_and_unsorted_axis() {
        let dip = "# rg_table wl=550,700 provenance=x\n0.0,0.5,1.0\n0,0.6,0.7,0.8\n30,0.65,0.6,0.87\n";
        assert!(matches!(RgTable::from_csv(dip), Err(AodError::NonMonotoneRow { sza }) if sza == 30.0));
        let unsorted = "# rg_table wl=550,700 provenance=x\n0.0,0.5,1.0\n30,0.6,0.7,0.8\n0,0.65,0.76,0.87\n";
        assert!(matches!(RgTable::from_csv(unsorted), Err(AodError::MalformedTable { line: 4, .. })));
    }

    #[test]
    fn decreasing_tables_invert() {
        let t = RgTable::new(vec![0.0, 10.0], vec![0.0, 1.0], vec![0.9, 0.5, 0.8, 0.4], (550.0, 700.0), "x").unwrap();
        assert_eq!(t.direction(), Monotonicity::Decreasing);
        let est = invert_aod(&t, 0.0, 0.7).unwrap();
        assert!((est.aod - 0.5).abs() < 1e-12);
        assert_eq!(invert_aod(&t, 0.0, 0.3).unwrap().aod, 1.0);
    }

    #[test]
    fn node_and_midpoint_evaluation() {
        let t = fixture();
        assert_eq!(eval_rg(&t, 30.0, 0.5).unwrap(), 0.76);
        assert!((eval_rg(&t, 30.0, 0.25).unwrap() - 0.705).abs() < 1e-12);
        assert!(matches!(eval_rg(&t, 61.0, 0.5), Err(AodError::OutOfRange { what: "sza", .. })));
        assert!(matches!(eval_rg(&t, 30.0, -0.1), Err(AodError::OutOfRange { what: "aod", .. })));
    }

    #[test]
    fn clamping_and_node_identity() {
        let t = fixture();
        let low = invert_aod(&t, 30.0, 0.1).unwrap();
        assert_eq!((low.aod, low.quality_flag), (0.0, QualityFlag::Clamped));
        let high = invert_aod(&t, 30.0, 2.0).unwrap();
        assert_eq!((high.aod, high.quality_flag), (1.0, QualityFlag::Clamped));
        let node = invert_aod(&t, 30.0, 0.76).unwrap();
        assert_eq!((node.aod, node.quality_flag), (0.5, QualityFlag::Ok));
        assert!(invert_aod(&t, 70.0, 0.7).is_err());
    }

    #[test]
    fn synthetic_generator() {
        let t = generate_synthetic_table(&linspace(0.0, 80.0, 17), &linspace(0.0, 2.0, 21), SyntheticParams::default()).unwrap();
        assert_eq!(t.at(0, 0), 0.55);
        assert!(RgTable::from_csv(&t.to_csv()).unwrap() == t);
        let bad = SyntheticParams { s0: -1.0, ..Default::default() };
        assert!(matches!(generate_synthetic_table(&[0.0, 10.0], &[0.0, 1.0], bad), Err(AodError::Domain(_))));
    }
}
