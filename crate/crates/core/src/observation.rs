//! Observation domain model and the file-backed observation store.
//!
//! Every data source is treated as a sensor that produces [`Observation`]s:
//! one timestamped, geolocated value with its provenance. The store keeps them
//! in memory and persists them as one `|`-separated record per line:
//!
//! ```text
//! id|source|phenomenon|value|lat|lon|iso8601_utc|quality_flag
//! ws-0001|WebService|PM10|42.0|40.630000|22.950000|2016-06-01T12:00:00Z|Ok
//! ```
//!
//! Coordinates are persisted with six decimals, so the store snaps them to
//! that grid on insert; values round-trip bit-exactly.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime, Timelike, Utc};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ObservationError {
    #[error("duplicate observation id `{0}`")]
    DuplicateId(String),
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("malformed query: {0}")]
    MalformedQuery(String),
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("phenomenon {0} has no air-quality classification")]
    UnsupportedPhenomenon(PhenomenonKind),
    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),
    #[error("cannot parse `{0}`")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, ObservationError>;

/// Geographic position in degrees (WGS84-style lat/lon).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        let p = Self { lat, lon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.lat) {
            return Err(ObservationError::InvariantViolation(format!(
                "latitude {} outside [-90, 90]",
                self.lat
            )));
        }
        if !(-180.0..=180.0).contains(&self.lon) {
            return Err(ObservationError::InvariantViolation(format!(
                "longitude {} outside [-180, 180]",
                self.lon
            )));
        }
        Ok(())
    }

    /// Rounds both coordinates to the nearest micro-degree.
    pub fn snapped(self) -> Self {
        let snap = |v: f64| (v * 1e6).round() / 1e6;
        Self { lat: snap(self.lat), lon: snap(self.lon) }
    }
}

/// Axis-aligned lat/lon rectangle with inclusive bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoRect {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

impl GeoRect {
    pub fn new(min_lat: f64, max_lat: f64, min_lon: f64, max_lon: f64) -> Result<Self> {
        let r = Self { min_lat, max_lat, min_lon, max_lon };
        if !(min_lat <= max_lat && min_lon <= max_lon) {
            return Err(ObservationError::MalformedQuery(format!(
                "rectangle bounds out of order: lat [{min_lat}, {max_lat}], lon [{min_lon}, {max_lon}]"
            )));
        }
        Ok(r)
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        p.lat >= self.min_lat && p.lat <= self.max_lat && p.lon >= self.min_lon && p.lon <= self.max_lon
    }

    pub fn centroid(&self) -> GeoPoint {
        GeoPoint {
            lat: 0.5 * (self.min_lat + self.max_lat),
            lon: 0.5 * (self.min_lon + self.max_lon),
        }
    }

    pub fn everywhere() -> Self {
        Self { min_lat: -90.0, max_lat: 90.0, min_lon: -180.0, max_lon: 180.0 }
    }
}

/// UTC instant with one-second resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeStamp(i64);

impl TimeStamp {
    pub fn from_unix(seconds: i64) -> Self {
        Self(seconds)
    }

    pub fn from_ymd_hms(year: i32, month: u32, day: u32, h: u32, m: u32, s: u32) -> Result<Self> {
        NaiveDate::from_ymd_opt(year, month, day)
            .and_then(|d| d.and_hms_opt(h, m, s))
            .map(|dt| Self(dt.and_utc().timestamp()))
            .ok_or_else(|| ObservationError::Parse(format!("{year}-{month}-{day} {h}:{m}:{s}")))
    }

    pub fn unix(&self) -> i64 {
        self.0
    }

    fn datetime(&self) -> DateTime<Utc> {
        DateTime::from_timestamp(self.0, 0).expect("timestamp within chrono range")
    }

    /// Day of year in `[1, 366]`.
    pub fn day_of_year(&self) -> u32 {
        self.datetime().ordinal()
    }

    /// Hours since UTC midnight in `[0, 24)`.
    pub fn time_of_day(&self) -> f64 {
        self.datetime().num_seconds_from_midnight() as f64 / 3600.0
    }

    pub fn year(&self) -> i32 {
        self.datetime().year()
    }

    /// Seconds elapsed from `earlier` to `self`.
    pub fn seconds_since(&self, earlier: TimeStamp) -> i64 {
        self.0 - earlier.0
    }

    pub fn plus_seconds(&self, s: i64) -> Self {
        Self(self.0 + s)
    }

    pub fn now() -> Self {
        Self(Utc::now().timestamp())
    }
}

impl fmt::Display for TimeStamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.datetime().format("%Y-%m-%dT%H:%M:%SZ"))
    }
}

impl FromStr for TimeStamp {
    type Err = ObservationError;

    /// Accepts RFC 3339 (any offset) and offset-less `YYYY-MM-DDTHH:MM[:SS]`
    /// or `YYYY-MM-DD HH:MM[:SS]` with an optional `Z`, the latter read as UTC.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
            return Ok(Self(dt.timestamp()));
        }
        // A bare `Z` without seconds is still UTC.
        let naive = s.strip_suffix('Z').unwrap_or(s);
        for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
            if let Ok(dt) = NaiveDateTime::parse_from_str(naive, fmt) {
                return Ok(Self(dt.and_utc().timestamp()));
            }
        }
        Err(ObservationError::Parse(format!("timestamp `{s}`")))
    }
}

/// Inclusive time interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeRange {
    pub start: TimeStamp,
    pub end: TimeStamp,
}

impl TimeRange {
    pub fn new(start: TimeStamp, end: TimeStamp) -> Result<Self> {
        if start > end {
            return Err(ObservationError::MalformedQuery(format!(
                "time range start {start} after end {end}"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn all() -> Self {
        Self { start: TimeStamp(i64::MIN / 4), end: TimeStamp(i64::MAX / 4) }
    }

    pub fn contains(&self, t: TimeStamp) -> bool {
        t >= self.start && t <= self.end
    }
}

macro_rules! string_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(&self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = ObservationError;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim() {
                    $($text => Ok($name::$variant),)+
                    other => Err(ObservationError::Parse(format!(
                        concat!(stringify!($name), " `{}`"), other
                    ))),
                }
            }
        }
    };
}

string_enum!(
    /// Where an observation came from.
    SourceKind {
        WebService => "WebService",
        WebSite => "WebSite",
        SocialImage => "SocialImage",
        AppImage => "AppImage",
        WebcamFrame => "WebcamFrame",
        SensorDevice => "SensorDevice",
        FilterPhoto => "FilterPhoto",
    }
);

impl SourceKind {
    /// Prefix used for generated observation ids.
    pub fn id_prefix(&self) -> &'static str {
        match self {
            SourceKind::WebService => "ws",
            SourceKind::WebSite => "site",
            SourceKind::SocialImage => "img",
            SourceKind::AppImage => "app",
            SourceKind::WebcamFrame => "cam",
            SourceKind::SensorDevice => "dev",
            SourceKind::FilterPhoto => "flt",
        }
    }
}

string_enum!(
    /// Observed property. PM values are in µg/m³, AOD is dimensionless.
    PhenomenonKind {
        Pm10 => "PM10",
        Pm2_5 => "PM2_5",
        Aod => "AOD",
        AirQualityClass => "AirQualityClass",
    }
);

impl PhenomenonKind {
    pub fn unit(&self) -> &'static str {
        match self {
            PhenomenonKind::Pm10 | PhenomenonKind::Pm2_5 => "µg/m³",
            PhenomenonKind::Aod => "1",
            PhenomenonKind::AirQualityClass => "class",
        }
    }
}

string_enum!(
    /// Coarse air-quality index, ordered `Low < Medium < High < VeryHigh`.
    AirQualityClass {
        Low => "Low",
        Medium => "Medium",
        High => "High",
        VeryHigh => "VeryHigh",
    }
);

string_enum!(
    QualityFlag {
        Ok => "Ok",
        Clamped => "Clamped",
        Suspect => "Suspect",
    }
);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObservedValue {
    Real(f64),
    Class(AirQualityClass),
}

impl ObservedValue {
    pub fn as_real(&self) -> Option<f64> {
        match self {
            ObservedValue::Real(v) => Some(*v),
            ObservedValue::Class(_) => None,
        }
    }
}

impl fmt::Display for ObservedValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // Debug formatting is the shortest string that parses back to the
            // same f64, and always carries a decimal point.
            ObservedValue::Real(v) => write!(f, "{v:?}"),
            ObservedValue::Class(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Empty means "not yet assigned"; the store fills it in on insert.
    pub id: String,
    pub source: SourceKind,
    pub phenomenon: PhenomenonKind,
    pub value: ObservedValue,
    pub location: GeoPoint,
    pub time: TimeStamp,
    pub quality_flag: QualityFlag,
}

impl Observation {
    pub fn new(
        source: SourceKind,
        phenomenon: PhenomenonKind,
        value: f64,
        location: GeoPoint,
        time: TimeStamp,
    ) -> Self {
        Self {
            id: String::new(),
            source,
            phenomenon,
            value: ObservedValue::Real(value),
            location,
            time,
            quality_flag: QualityFlag::Ok,
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn with_flag(mut self, flag: QualityFlag) -> Self {
        self.quality_flag = flag;
        self
    }

    /// Checks every type invariant except id uniqueness.
    pub fn validate(&self) -> Result<()> {
        self.location.validate()?;
        if self.id.contains(['|', '\n', '\r']) {
            return Err(ObservationError::InvariantViolation(format!(
                "id `{}` contains a record separator",
                self.id
            )));
        }
        match (self.phenomenon, self.value) {
            (PhenomenonKind::AirQualityClass, ObservedValue::Class(_)) => Ok(()),
            (PhenomenonKind::AirQualityClass, ObservedValue::Real(_)) => Err(
                ObservationError::InvariantViolation("AirQualityClass needs a class value".into()),
            ),
            (p, ObservedValue::Real(v)) => {
                if !v.is_finite() || v < 0.0 {
                    Err(ObservationError::InvariantViolation(format!("{p} value {v} must be finite and >= 0")))
                } else {
                    Ok(())
                }
            }
            (p, ObservedValue::Class(_)) => Err(ObservationError::InvariantViolation(format!(
                "{p} needs a real value"
            ))),
        }
    }

    pub fn to_record(&self) -> String {
        format!(
            "{}|{}|{}|{}|{:.6}|{:.6}|{}|{}",
            self.id,
            self.source,
            self.phenomenon,
            self.value,
            self.location.lat,
            self.location.lon,
            self.time,
            self.quality_flag
        )
    }

    pub fn from_record(line: &str) -> std::result::Result<Self, String> {
        let fields: Vec<&str> = line.split('|').collect();
        if fields.len() != 8 {
            return Err(format!("expected 8 fields, found {}", fields.len()));
        }
        let err = |e: ObservationError| e.to_string();
        let source: SourceKind = fields[1].parse().map_err(err)?;
        let phenomenon: PhenomenonKind = fields[2].parse().map_err(err)?;
        let value = if phenomenon == PhenomenonKind::AirQualityClass {
            ObservedValue::Class(fields[3].parse().map_err(err)?)
        } else {
            ObservedValue::Real(fields[3].trim().parse().map_err(|_| format!("bad value `{}`", fields[3]))?)
        };
        let lat: f64 = fields[4].trim().parse().map_err(|_| format!("bad latitude `{}`", fields[4]))?;
        let lon: f64 = fields[5].trim().parse().map_err(|_| format!("bad longitude `{}`", fields[5]))?;
        let obs = Observation {
            id: fields[0].to_string(),
            source,
            phenomenon,
            value,
            location: GeoPoint { lat, lon },
            time: fields[6].parse().map_err(err)?,
            quality_flag: fields[7].parse().map_err(err)?,
        };
        if obs.id.is_empty() {
            return Err("empty id".into());
        }
        obs.validate().map_err(err)?;
        Ok(obs)
    }
}

/// Maps a real value onto the four-level index. A value equal to a threshold
/// belongs to the higher class.
pub fn classify_aq(value: f64, phenomenon: PhenomenonKind, thresholds: [f64; 3]) -> Result<AirQualityClass> {
    if phenomenon == PhenomenonKind::AirQualityClass {
        return Err(ObservationError::UnsupportedPhenomenon(phenomenon));
    }
    if !thresholds.iter().all(|t| t.is_finite()) || !(thresholds[0] < thresholds[1] && thresholds[1] < thresholds[2]) {
        return Err(ObservationError::InvalidThresholds(format!("{thresholds:?} not strictly increasing")));
    }
    let passed = thresholds.iter().filter(|&&t| value >= t).count();
    Ok(AirQualityClass::ALL[passed])
}

/// In-memory observation repository.
///
/// Reads take `&self` and writes `&mut self`, so sharing the store behind an
/// `RwLock` gives the many-readers/one-writer contract.
#[derive(Debug, Default, Clone)]
pub struct ObservationStore {
    records: Vec<Observation>,
    index: HashMap<String, usize>,
    counter: u64,
}

impl ObservationStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Observation> {
        self.records.iter()
    }

    pub fn get(&self, id: &str) -> Option<&Observation> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    /// Inserts after validation, assigning `<source prefix>-<counter>` when
    /// the id is empty. Returns the stored id.
    pub fn insert(&mut self, mut obs: Observation) -> Result<String> {
        obs.validate()?;
        obs.location = obs.location.snapped();
        if obs.id.is_empty() {
            obs.id = self.next_id(obs.source);
        } else if self.index.contains_key(&obs.id) {
            return Err(ObservationError::DuplicateId(obs.id));
        }
        let id = obs.id.clone();
        self.index.insert(id.clone(), self.records.len());
        self.records.push(obs);
        Ok(id)
    }

    fn next_id(&mut self, source: SourceKind) -> String {
        loop {
            self.counter += 1;
            let id = format!("{}-{:04}", source.id_prefix(), self.counter);
            if !self.index.contains_key(&id) {
                return id;
            }
        }
    }

    /// Observations inside `bbox` and `range` (both inclusive), optionally of
    /// one phenomenon, sorted by time then id.
    pub fn query(&self, bbox: &GeoRect, range: &TimeRange, phenomenon: Option<PhenomenonKind>) -> Result<Vec<Observation>> {
        GeoRect::new(bbox.min_lat, bbox.max_lat, bbox.min_lon, bbox.max_lon)?;
        TimeRange::new(range.start, range.end)?;
        let mut hits: Vec<Observation> = self
            .records
            .iter()
            .filter(|o| bbox.contains(o.location) && range.contains(o.time))
            .filter(|o| phenomenon.is_none_or(|p| o.phenomenon == p))
            .cloned()
            .collect();
        hits.sort_by(|a, b| a.time.cmp(&b.time).then_with(|| a.id.cmp(&b.id)));
        Ok(hits)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io_err = |source| ObservationError::IoFailure { path: path.display().to_string(), source };
        let file = fs::File::create(path).map_err(io_err)?;
        let mut out = BufWriter::new(file);
        for obs in &self.records {
            writeln!(out, "{}", obs.to_record()).map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|source| ObservationError::IoFailure { path: path.display().to_string(), source })?;
        Self::from_records(&text)
    }

    /// Loads `path` if it exists, otherwise returns an empty store.
    pub fn load_or_default(path: impl AsRef<Path>) -> Result<Self> {
        if path.as_ref().exists() {
            Self::load(path)
        } else {
            Ok(Self::new())
        }
    }

    pub fn from_records(text: &str) -> Result<Self> {
        let mut store = Self::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let obs = Observation::from_record(line)
                .map_err(|reason| ObservationError::MalformedRecord { line: i + 1, reason })?;
            if store.index.contains_key(&obs.id) {
                return Err(ObservationError::MalformedRecord {
                    line: i + 1,
                    reason: format!("duplicate id `{}`", obs.id),
                });
            }
            store.insert(obs).map_err(|e| ObservationError::MalformedRecord { line: i + 1, reason: e.to_string() })?;
        }
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pm10(v: f64, lat: f64, lon: f64) -> Observation {
        Observation::new(
            SourceKind::WebService,
            PhenomenonKind::Pm10,
            v,
            GeoPoint { lat, lon },
            "2016-06-01T12:00:00Z".parse().unwrap(),
        )
    }

    #[test]
    fn insert_then_get_round_trips() {
        let mut store = ObservationStore::new();
        let id = store.insert(pm10(42.0, 40.63, 22.95).with_id("ws-0001")).unwrap();
        let got = store.get(&id).unwrap();
        assert_eq!(got, &pm10(42.0, 40.63, 22.95).with_id("ws-0001"));
        assert_eq!(got.to_record(), "ws-0001|WebService|PM10|42.0|40.630000|22.950000|2016-06-01T12:00:00Z|Ok");
    }

    #[test]
    fn rejects_latitude_out_of_range() {
        let mut store = ObservationStore::new();
        let err = store.insert(pm10(1.0, 95.0, 0.0)).unwrap_err();
        assert!(matches!(err, ObservationError::InvariantViolation(_)));
    }

    #[test]
    fn rejects_negative_pm() {
        let mut store = ObservationStore::new();
        assert!(matches!(store.insert(pm10(-1.0, 0.0, 0.0)), Err(ObservationError::InvariantViolation(_))));
    }

    #[test]
    fn rejects_duplicate_id() {
        let mut store = ObservationStore::new();
        store.insert(pm10(1.0, 0.0, 0.0).with_id("a")).unwrap();
        assert!(matches!(store.insert(pm10(2.0, 0.0, 0.0).with_id("a")), Err(ObservationError::DuplicateId(_))));
    }

    #[test]
    fn generated_ids_use_source_prefix() {
        let mut store = ObservationStore::new();
        assert_eq!(store.insert(pm10(1.0, 0.0, 0.0)).unwrap(), "ws-0001");
        assert_eq!(store.insert(pm10(1.0, 0.0, 0.0)).unwrap(), "ws-0002");
    }

    #[test]
    fn generated_ids_skip_taken_ones() {
        let mut store = ObservationStore::new();
        store.insert(pm10(1.0, 0.0, 0.0).with_id("ws-0001")).unwrap();
        assert_eq!(store.insert(pm10(1.0, 0.0, 0.0)).unwrap(), "ws-0002");
    }

    #[test]
    fn empty_store_query() {
        let store = ObservationStore::new();
        assert!(store.query(&GeoRect::everywhere(), &TimeRange::all(), None).unwrap().is_empty());
    }

    #[test]
    fn malformed_queries() {
        let store = ObservationStore::new();
        let bad = GeoRect { min_lat: 1.0, max_lat: 0.0, min_lon: 0.0, max_lon: 1.0 };
        assert!(matches!(store.query(&bad, &TimeRange::all(), None), Err(ObservationError::MalformedQuery(_))));
        let t0 = TimeStamp::from_unix(10);
        let range = TimeRange { start: t0, end: TimeStamp::from_unix(0) };
        assert!(matches!(store.query(&GeoRect::everywhere(), &range, None), Err(ObservationError::MalformedQuery(_))));
    }

    #[test]
    fn phenomenon_filter() {
        let mut store = ObservationStore::new();
        store.insert(pm10(1.0, 0.0, 0.0)).unwrap();
        let mut pm25 = pm10(2.0, 0.0, 0.0);
        pm25.phenomenon = PhenomenonKind::Pm2_5;
        store.insert(pm25).unwrap();
        let hits = store.query(&GeoRect::everywhere(), &TimeRange::all(), Some(PhenomenonKind::Pm2_5)).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].phenomenon, PhenomenonKind::Pm2_5);
    }

    #[test]
    fn corrupt_line_reports_line_number() {
        let good = pm10(1.0, 0.0, 0.0).with_id("a").to_record();
        let text = format!("{good}\nthis is not a record\n");
        match ObservationStore::from_records(&text) {
            Err(ObservationError::MalformedRecord { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_empty_store() {
        assert!(ObservationStore::from_records("").unwrap().is_empty());
    }

    #[test]
    fn class_values_round_trip() {
        let mut obs = pm10(0.0, 1.0, 2.0).with_id("c1");
        obs.phenomenon = PhenomenonKind::AirQualityClass;
        obs.value = ObservedValue::Class(AirQualityClass::High);
        let back = Observation::from_record(&obs.to_record()).unwrap();
        assert_eq!(back, obs);
    }

    #[test]
    fn timestamp_accessors() {
        let t: TimeStamp = "2016-12-31T18:30:00Z".parse().unwrap();
        assert_eq!(t.day_of_year(), 366);
        assert_eq!(t.time_of_day(), 18.5);
        let t: TimeStamp = "2015-12-31T00:00:00Z".parse().unwrap();
        assert_eq!(t.day_of_year(), 365);
        let t: TimeStamp = "2016-06-01T14:00:00+02:00".parse().unwrap();
        assert_eq!(t.to_string(), "2016-06-01T12:00:00Z");
    }

    #[test]
    fn classify_boundaries() {
        let th = [20.0, 50.0, 100.0];
        assert_eq!(classify_aq(0.0, PhenomenonKind::Pm10, th).unwrap(), AirQualityClass::Low);
        assert_eq!(classify_aq(20.0, PhenomenonKind::Pm10, th).unwrap(), AirQualityClass::Medium);
        assert_eq!(classify_aq(99.9, PhenomenonKind::Pm10, th).unwrap(), AirQualityClass::High);
        assert_eq!(classify_aq(100.0, PhenomenonKind::Pm10, th).unwrap(), AirQualityClass::VeryHigh);
        assert!(matches!(
            classify_aq(1.0, PhenomenonKind::AirQualityClass, th),
            Err(ObservationError::UnsupportedPhenomenon(_))
        ));
        assert!(matches!(
            classify_aq(1.0, PhenomenonKind::Pm10, [1.0, 1.0, 2.0]),
            Err(ObservationError::InvalidThresholds(_))
        ));
    }

    #[test]
    fn classify_sweep_is_monotone() {
        let th = [20.0, 50.0, 100.0];
        let classes: Vec<_> = (0..=2000)
            .map(|i| classify_aq(i as f64 * 0.1, PhenomenonKind::Pm10, th).unwrap())
            .collect();
        assert!(classes.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(classes[0], AirQualityClass::Low);
        assert_eq!(*classes.last().unwrap(), AirQualityClass::VeryHigh);
    }
}
