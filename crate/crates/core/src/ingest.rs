//! Source adapters: structured payloads (JSON/XML), regex extraction from HTML
//! pages, local geotagged image catalogs and webcam frame sampling.
//!
//! Nothing here touches the network. Platform APIs are stood in for by local
//! catalogs with the same query semantics.

use std::fs;
use std::path::{Path, PathBuf};

use regex::Regex;
use thiserror::Error;

use crate::observation::{
    GeoPoint, GeoRect, Observation, ObservationError, PhenomenonKind, QualityFlag, SourceKind, TimeRange, TimeStamp,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("rule `{name}` does not compile: {reason}")]
    RuleCompile { name: String, reason: String },
    #[error("malformed configuration at line {line}: {reason}")]
    MalformedConfig { line: usize, reason: String },
    #[error("catalog {path} unreadable: {reason}")]
    CatalogUnreadable { path: String, reason: String },
    #[error("invalid source descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Observation(#[from] ObservationError),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, IngestError>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| IngestError::Io { path: path.display().to_string(), source })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceGeometry {
    Station(GeoPoint),
    Area(GeoRect),
}

impl SourceGeometry {
    /// Where observations from this source are placed: the station itself or
    /// the centre of the area.
    pub fn anchor(&self) -> GeoPoint {
        match self {
            SourceGeometry::Station(p) => *p,
            SourceGeometry::Area(r) => r.centroid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceDescriptor {
    pub id: String,
    pub kind: SourceKind,
    pub geometry: SourceGeometry,
    /// Mapping or rules file used to read this source, if any.
    pub config: Option<PathBuf>,
}

impl SourceDescriptor {
    /// Devices, webcams and filters sit at a point; social image searches
    /// cover an area. Services, sites and app uploads may be either.
    pub fn new(id: impl Into<String>, kind: SourceKind, geometry: SourceGeometry) -> Result<Self> {
        let id = id.into();
        let mismatched = matches!(
            (kind, &geometry),
            (SourceKind::SensorDevice | SourceKind::WebcamFrame | SourceKind::FilterPhoto, SourceGeometry::Area(_))
                | (SourceKind::SocialImage, SourceGeometry::Station(_))
        );
        if mismatched {
            return Err(IngestError::InvalidDescriptor(format!("{kind} source `{id}` cannot use that geometry")));
        }
        if let SourceGeometry::Station(p) = geometry {
            p.validate()?;
        }
        Ok(Self { id, kind, geometry, config: None })
    }

    pub fn with_config(mut self, path: impl Into<PathBuf>) -> Self {
        self.config = Some(path.into());
        self
    }
}

fn parse_scale(s: &str, line: usize) -> Result<f64> {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(IngestError::MalformedConfig { line, reason: format!("bad scale `{}`", s.trim()) }),
    }
}

fn parse_phenomenon(s: &str, line: usize) -> Result<PhenomenonKind> {
    match s.trim().parse::<PhenomenonKind>() {
        Ok(PhenomenonKind::AirQualityClass) | Err(_) => {
            Err(IngestError::MalformedConfig { line, reason: format!("unsupported phenomenon `{}`", s.trim()) })
        }
        Ok(p) => Ok(p),
    }
}

/// Numbered non-blank, non-comment lines of a configuration file.
fn config_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadFormat {
    Json,
    Xml,
}

impl PayloadFormat {
    /// Guesses from the first significant character.
    pub fn detect(text: &str) -> Option<Self> {
        match text.trim_start().chars().next()? {
            '{' | '[' => Some(PayloadFormat::Json),
            '<' => Some(PayloadFormat::Xml),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingEntry {
    pub path: String,
    pub phenomenon: PhenomenonKind,
    pub scale: f64,
}

/// Key paths to read from a payload. Paths are dotted; JSON array elements
/// are addressed by index and XML attributes by a final `@name` segment.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PayloadMapping {
    pub entries: Vec<MappingEntry>,
    pub time_path: Option<String>,
}

impl PayloadMapping {
    /// Lines `path|phenomenon|scale`, plus an optional `@time|path`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut mapping = PayloadMapping::default();
        for (line, l) in config_lines(text) {
            let fields: Vec<&str> = l.split('|').collect();
            match fields.as_slice() {
                ["@time", path] => mapping.time_path = Some(path.trim().to_string()),
                [path, phen, scale] => mapping.entries.push(MappingEntry {
                    path: path.trim().to_string(),
                    phenomenon: parse_phenomenon(phen, line)?,
                    scale: parse_scale(scale, line)?,
                }),
                _ => {
                    return Err(IngestError::MalformedConfig {
                        line,
                        reason: "expected `path|phenomenon|scale`".into(),
                    })
                }
            }
        }
        Ok(mapping)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&read(path.as_ref())?)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PayloadResult {
    pub observations: Vec<Observation>,
    pub warnings: Vec<String>,
}

enum Document<'a> {
    Json(serde_json::Value),
    Xml(roxmltree::Document<'a>),
}

impl Document<'_> {
    /// Text at `path`, `None` when absent or not a scalar.
    fn lookup(&self, path: &str) -> Option<String> {
        match self {
            Document::Json(root) => {
                let mut node = root;
                for seg in path.split('.') {
                    node = match node {
                        serde_json::Value::Array(items) => items.get(seg.parse::<usize>().ok()?)?,
                        other => other.get(seg)?,
                    };
                }
                match node {
                    serde_json::Value::Number(n) => Some(n.to_string()),
                    serde_json::Value::String(s) => Some(s.clone()),
                    _ => None,
                }
            }
            Document::Xml(doc) => {
                let mut segs = path.split('.');
                let mut node = doc.root_element();
                if node.tag_name().name() != segs.next()? {
                    return None;
                }
                for seg in segs {
                    if let Some(attr) = seg.strip_prefix('@') {
                        return node.attribute(attr).map(str::to_string);
                    }
                    node = node.children().find(|c| c.is_element() && c.tag_name().name() == seg)?;
                }
                Some(node.text().unwrap_or("").to_string())
            }
        }
    }
}

/// One observation per mapped path that is present and numeric. Missing or
/// non-numeric paths become warnings. Without a usable time path the
/// observations carry `ingested_at` and the Suspect flag.
pub fn parse_structured_payload(
    text: &str,
    format: PayloadFormat,
    mapping: &PayloadMapping,
    descriptor: &SourceDescriptor,
    ingested_at: TimeStamp,
) -> Result<PayloadResult> {
    let doc = match format {
        PayloadFormat::Json => {
            Document::Json(serde_json::from_str(text).map_err(|e| IngestError::MalformedDocument(e.to_string()))?)
        }
        PayloadFormat::Xml => {
            Document::Xml(roxmltree::Document::parse(text).map_err(|e| IngestError::MalformedDocument(e.to_string()))?)
        }
    };
    let mut out = PayloadResult::default();
    let (time, flag) = match &mapping.time_path {
        None => (ingested_at, QualityFlag::Suspect),
        Some(p) => match doc.lookup(p).map(|s| s.parse::<TimeStamp>()) {
            Some(Ok(t)) => (t, QualityFlag::Ok),
            Some(Err(_)) => {
                out.warnings.push(format!("time path `{p}` is not a timestamp; using ingestion time"));
                (ingested_at, QualityFlag::Suspect)
            }
            None => {
                out.warnings.push(format!("time path `{p}` missing; using ingestion time"));
                (ingested_at, QualityFlag::Suspect)
            }
        },
    };
    let location = descriptor.geometry.anchor();
    for entry in &mapping.entries {
        let Some(raw) = doc.lookup(&entry.path) else {
            out.warnings.push(format!("path `{}` missing", entry.path));
            continue;
        };
        let value = match raw.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => v * entry.scale,
            _ => {
                out.warnings.push(format!("path `{}` is not numeric: `{}`", entry.path, raw.trim()));
                continue;
            }
        };
        let obs = Observation::new(descriptor.kind, entry.phenomenon, value, location, time).with_flag(flag);
        obs.validate()?;
        out.observations.push(obs);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ExtractionRule {
    pub name: String,
    pub phenomenon: PhenomenonKind,
    pub scale: f64,
    pub pattern: Regex,
}

impl PartialEq for ExtractionRule {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.phenomenon == other.phenomenon
            && self.scale == other.scale
            && self.pattern.as_str() == other.pattern.as_str()
    }
}

impl ExtractionRule {
    pub fn new(name: impl Into<String>, phenomenon: PhenomenonKind, scale: f64, pattern: &str) -> Result<Self> {
        let name = name.into();
        let pattern =
            Regex::new(pattern).map_err(|e| IngestError::RuleCompile { name: name.clone(), reason: e.to_string() })?;
        if !pattern.capture_names().any(|n| n == Some("value")) {
            return Err(IngestError::RuleCompile { name, reason: "no `value` capture group".into() });
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(IngestError::RuleCompile { name, reason: format!("bad scale {scale}") });
        }
        Ok(Self { name, phenomenon, scale, pattern })
    }
}

/// One rule per line, `name|phenomenon|scale|pattern`. The pattern may itself
/// contain `|`.
pub fn parse_rules(text: &str) -> Result<Vec<ExtractionRule>> {
    config_lines(text)
        .map(|(line, l)| {
            let fields: Vec<&str> = l.splitn(4, '|').collect();
            if fields.len() != 4 {
                return Err(IngestError::MalformedConfig { line, reason: "expected `name|phenomenon|scale|pattern`".into() });
            }
            ExtractionRule::new(fields[0].trim(), parse_phenomenon(fields[1], line)?, parse_scale(fields[2], line)?, fields[3])
        })
        .collect()
}

pub fn load_rules(path: impl AsRef<Path>) -> Result<Vec<ExtractionRule>> {
    parse_rules(&read(path.as_ref())?)
}

fn timestamp_pattern() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\d{4}-\d{2}-\d{2}[T ]\d{2}:\d{2}(?::\d{2})?(?:Z|[+-]\d{2}:\d{2})?").expect("static pattern")
    })
}

/// First parseable ISO-8601 date-time in the page.
pub fn page_timestamp(html: &str) -> Option<TimeStamp> {
    timestamp_pattern().find_iter(html).find_map(|m| m.as_str().parse().ok())
}

/// Conversion to µg/m³ implied by a captured unit, when recognised.
fn unit_factor(unit: &str) -> Option<f64> {
    let u = unit.trim().to_ascii_lowercase().replace('³', "3");
    match u.as_str() {
        "µg/m3" | "μg/m3" | "ug/m3" => Some(1.0),
        "mg/m3" => Some(1000.0),
        _ => None,
    }
}

/// Applies every rule to the raw page text. Observations come out in document
/// order, stamped with the page's own timestamp when it has one and with
/// `ingested_at` plus the Suspect flag otherwise.
///
/// A captured `unit` that names a mass concentration fixes the conversion;
/// otherwise the rule's scale is used.
pub fn extract_from_html(
    html: &str,
    rules: &[ExtractionRule],
    descriptor: &SourceDescriptor,
    ingested_at: TimeStamp,
) -> Result<Vec<Observation>> {
    let (time, flag) = match page_timestamp(html) {
        Some(t) => (t, QualityFlag::Ok),
        None => (ingested_at, QualityFlag::Suspect),
    };
    let location = descriptor.geometry.anchor();
    // (offset, rule index, value)
    let mut hits: Vec<(usize, usize, f64)> = Vec::new();
    for (ri, rule) in rules.iter().enumerate() {
        for caps in rule.pattern.captures_iter(html) {
            let Some(m) = caps.name("value") else { continue };
            let Ok(raw) = m.as_str().trim().parse::<f64>() else { continue };
            let factor = caps.name("unit").and_then(|u| unit_factor(u.as_str())).unwrap_or(rule.scale);
            let value = raw * factor;
            if value.is_finite() {
                hits.push((m.start(), ri, value));
            }
        }
    }
    hits.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    hits.dedup_by(|b, a| a.0 == b.0 && rules[a.1].name == rules[b.1].name && a.2 == b.2);
    hits.into_iter()
        .map(|(_, ri, value)| {
            let obs = Observation::new(descriptor.kind, rules[ri].phenomenon, value, location, time).with_flag(flag);
            obs.validate()?;
            Ok(obs)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageMeta {
    pub image_id: String,
    pub path: PathBuf,
    pub location: Option<GeoPoint>,
    pub time: TimeStamp,
    pub source: SourceKind,
    pub tags: Vec<String>,
}

impl ImageMeta {
    /// Coordinates for mapping: the geotag when present, otherwise the city
    /// window centre flagged Suspect.
    pub fn placement(&self, window: &GeoRect) -> (GeoPoint, QualityFlag) {
        match self.location {
            Some(p) => (p, QualityFlag::Ok),
            None => (window.centroid(), QualityFlag::Suspect),
        }
    }

    /// Sidecar record `image_id|path|lat|lon|iso8601|tags`.
    pub fn to_record(&self) -> String {
        let (lat, lon) = match self.location {
            Some(p) => (format!("{:.6}", p.lat), format!("{:.6}", p.lon)),
            None => ("-".into(), "-".into()),
        };
        format!("{}|{}|{lat}|{lon}|{}|{}", self.image_id, self.path.display(), self.time, self.tags.join(","))
    }
}

/// Local stand-in for a photo platform: a sidecar file listing images.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Catalog {
    pub entries: Vec<ImageMeta>,
}

/// Sidecar file name looked for when a catalog is given as a directory.
pub const SIDECAR_NAME: &str = "catalog.txt";

impl Catalog {
    /// Parses sidecar records. Relative image paths are resolved against
    /// `base`.
    pub fn parse(text: &str, base: &Path, source: SourceKind) -> std::result::Result<Self, (usize, String)> {
        let mut entries = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (line, l) in config_lines(text) {
            let f: Vec<&str> = l.split('|').collect();
            if f.len() != 6 {
                return Err((line, format!("expected 6 fields, found {}", f.len())));
            }
            let id = f[0].trim();
            if id.is_empty() || !seen.insert(id.to_string()) {
                return Err((line, format!("missing or duplicate image id `{id}`")));
            }
            let location = match (f[2].trim(), f[3].trim()) {
                ("-", "-") => None,
                (lat, lon) => {
                    let (Ok(lat), Ok(lon)) = (lat.parse::<f64>(), lon.parse::<f64>()) else {
                        return Err((line, format!("bad coordinates `{lat}`, `{lon}`")));
                    };
                    Some(GeoPoint::new(lat, lon).map_err(|e| (line, e.to_string()))?)
                }
            };
            let time = f[4].parse::<TimeStamp>().map_err(|e| (line, e.to_string()))?;
            let tags: Vec<String> =
                f[5].split(',').map(str::trim).filter(|t| !t.is_empty()).map(str::to_string).collect();
            if source == SourceKind::SocialImage && location.is_none() && tags.is_empty() {
                return Err((line, format!("image `{id}` has neither geotag nor tags")));
            }
            let path = Path::new(f[1].trim());
            let path = if path.is_absolute() { path.to_path_buf() } else { base.join(path) };
            entries.push(ImageMeta { image_id: id.to_string(), path, location, time, source, tags });
        }
        Ok(Self { entries })
    }

    /// Reads a sidecar file, or `catalog.txt` inside a directory.
    pub fn load(path: impl AsRef<Path>, source: SourceKind) -> Result<Self> {
        let path = path.as_ref();
        let file = if path.is_dir() { path.join(SIDECAR_NAME) } else { path.to_path_buf() };
        let unreadable = |reason: String| IngestError::CatalogUnreadable { path: file.display().to_string(), reason };
        let text = fs::read_to_string(&file).map_err(|e| unreadable(e.to_string()))?;
        let base = file.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, source).map_err(|(line, reason)| unreadable(format!("line {line}: {reason}")))
    }
}

/// Geotagged entries inside `window` (inclusive) and `range`, in catalog order.
pub fn query_geotagged_images(catalog: &Catalog, window: &GeoRect, range: &TimeRange) -> Vec<ImageMeta> {
    catalog
        .entries
        .iter()
        .filter(|m| m.location.is_some_and(|p| window.contains(p)) && range.contains(m.time))
        .cloned()
        .collect()
}

/// Entries carrying any of `tags` (case-insensitive) within `range`, each
/// image at most once, in catalog order.
pub fn query_tagged_images(catalog: &Catalog, tags: &[String], range: &TimeRange) -> Result<Vec<ImageMeta>> {
    if tags.is_empty() {
        return Err(IngestError::Domain("at least one tag is required".into()));
    }
    let wanted: Vec<String> = tags.iter().map(|t| t.trim().to_lowercase()).collect();
    let mut seen = std::collections::HashSet::new();
    Ok(catalog
        .entries
        .iter()
        .filter(|m| range.contains(m.time))
        .filter(|m| m.tags.iter().any(|t| wanted.contains(&t.to_lowercase())))
        .filter(|m| seen.insert(m.image_id.clone()))
        .cloned()
        .collect())
}

/// Greedy frame selection: the first frame, then each earliest frame at
/// least `3600 / rate` seconds after the previously selected one.
pub fn sample_frames(times: &[TimeStamp], rate_per_hour: f64) -> Result<Vec<usize>> {
    if !(rate_per_hour.is_finite() && rate_per_hour > 0.0) {
        return Err(IngestError::Domain(format!("rate must be positive, got {rate_per_hour}")));
    }
    if let Some(i) = times.windows(2).position(|w| w[1] < w[0]) {
        return Err(IngestError::Domain(format!("timestamps not ascending at index {}", i + 1)));
    }
    let gap = 3600.0 / rate_per_hour;
    let mut out = Vec::new();
    let mut last: Option<TimeStamp> = None;
    for (i, &t) in times.iter().enumerate() {
        if last.is_none_or(|l| t.seconds_since(l) as f64 >= gap) {
            out.push(i);
            last = Some(t);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn station() -> SourceDescriptor {
        SourceDescriptor::new("st1", SourceKind::WebService, SourceGeometry::Station(GeoPoint::new(40.6, 22.9).unwrap()))
            .unwrap()
    }

    fn t0() -> TimeStamp {
        TimeStamp::from_ymd_hms(2017, 3, 1, 0, 0, 0).unwrap()
    }

    #[test]
    fn descriptor_geometry_must_fit_kind() {
        let rect = GeoRect::new(40.0, 41.0, 22.0, 23.0).unwrap();
        assert!(SourceDescriptor::new("s", SourceKind::SensorDevice, SourceGeometry::Area(rect)).is_err());
        assert!(SourceDescriptor::new("s", SourceKind::SocialImage, SourceGeometry::Area(rect)).is_ok());
        let p = GeoPoint::new(40.5, 22.5).unwrap();
        assert!(SourceDescriptor::new("s", SourceKind::SocialImage, SourceGeometry::Station(p)).is_err());
    }

    #[test]
    fn json_payload() {
        let mapping = PayloadMapping::parse("@time|obs.time\nobs.pm10|PM10|1\n").unwrap();
        let r = parse_structured_payload(
            r#"{"obs": {"time": "2017-03-01T10:00:00Z", "pm10": 42}}"#,
            PayloadFormat::Json,
            &mapping,
            &station(),
            t0(),
        )
        .unwrap();
        assert_eq!(r.observations.len(), 1);
        let o = &r.observations[0];
        assert_eq!((o.phenomenon, o.value.as_real(), o.quality_flag), (PhenomenonKind::Pm10, Some(42.0), QualityFlag::Ok));
        assert_eq!(o.time, "2017-03-01T10:00:00Z".parse().unwrap());
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn missing_path_warns() {
        let mapping = PayloadMapping::parse("obs.pm25|PM2_5|1").unwrap();
        let r = parse_structured_payload(r#"{"obs": {}}"#, PayloadFormat::Json, &mapping, &station(), t0()).unwrap();
        assert!(r.observations.is_empty());
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn xml_payload_with_scaling_and_arrays() {
        let mapping = PayloadMapping::parse("station.pm10|PM10|1000\nstation.@pm25|PM2_5|1").unwrap();
        let r = parse_structured_payload(
            r#"<station pm25="12.5"><pm10>0.042</pm10></station>"#,
            PayloadFormat::Xml,
            &mapping,
            &station(),
            t0(),
        )
        .unwrap();
        let values: Vec<_> = r.observations.iter().map(|o| o.value.as_real().unwrap()).collect();
        assert!((values[0] - 42.0).abs() < 1e-9);
        assert_eq!(values[1], 12.5);
        assert!(r.observations.iter().all(|o| o.quality_flag == QualityFlag::Suspect));

        let mapping = PayloadMapping::parse("readings.1.v|PM10|1").unwrap();
        let r = parse_structured_payload(r#"{"readings":[{"v":1},{"v":"7"}]}"#, PayloadFormat::Json, &mapping, &station(), t0())
            .unwrap();
        assert_eq!(r.observations[0].value.as_real(), Some(7.0));
    }

    #[test]
    fn malformed_documents() {
        let m = PayloadMapping::default();
        assert!(matches!(
            parse_structured_payload("{", PayloadFormat::Json, &m, &station(), t0()),
            Err(IngestError::MalformedDocument(_))
        ));
        assert!(matches!(
            parse_structured_payload("<a>", PayloadFormat::Xml, &m, &station(), t0()),
            Err(IngestError::MalformedDocument(_))
        ));
        assert_eq!(PayloadFormat::detect("  <x/>"), Some(PayloadFormat::Xml));
        assert_eq!(PayloadFormat::detect("pm10=3"), None);
    }

    fn pm10_rule() -> ExtractionRule {
        ExtractionRule::new("pm10", PhenomenonKind::Pm10, 1.0, r"PM10:\s*(?<value>\d+(\.\d+)?)").unwrap()
    }

    #[test]
    fn html_single_and_double_readings() {
        let obs = extract_from_html("<p>PM10: 35 µg/m³</p>", &[pm10_rule()], &station(), t0()).unwrap();
        assert_eq!(obs.len(), 1);
        assert_eq!(obs[0].value.as_real(), Some(35.0));
        assert_eq!((obs[0].time, obs[0].quality_flag), (t0(), QualityFlag::Suspect));

        let page = "<time>2017-03-02 08:00</time><li>PM10: 20</li><li>PM10: 31.5</li>";
        let obs = extract_from_html(page, &[pm10_rule()], &station(), t0()).unwrap();
        let values: Vec<_> = obs.iter().map(|o| o.value.as_real().unwrap()).collect();
        assert_eq!(values, vec![20.0, 31.5]);
        assert_eq!(obs[0].quality_flag, QualityFlag::Ok);
        assert_eq!(obs[0].time, TimeStamp::from_ymd_hms(2017, 3, 2, 8, 0, 0).unwrap());
    }

    #[test]
    fn duplicate_rules_are_deduplicated() {
        let obs = extract_from_html("PM10: 35", &[pm10_rule(), pm10_rule()], &station(), t0()).unwrap();
        assert_eq!(obs.len(), 1);
    }

    #[test]
    fn unit_group_overrides_scale() {
        let rule = ExtractionRule::new(
            "pm10",
            PhenomenonKind::Pm10,
            1.0,
            r"PM10:\s*(?<value>\d+(?:\.\d+)?)\s*(?<unit>mg/m³|µg/m³)?",
        )
        .unwrap();
        let obs = extract_from_html("PM10: 0.04 mg/m³ PM10: 9", &[rule], &station(), t0()).unwrap();
        assert!((obs[0].value.as_real().unwrap() - 40.0).abs() < 1e-9);
        assert_eq!(obs[1].value.as_real(), Some(9.0));
    }

    #[test]
    fn rule_errors_surface_at_configuration() {
        assert!(matches!(ExtractionRule::new("x", PhenomenonKind::Pm10, 1.0, "(unclosed"), Err(IngestError::RuleCompile { .. })));
        assert!(matches!(ExtractionRule::new("x", PhenomenonKind::Pm10, 1.0, r"\d+"), Err(IngestError::RuleCompile { .. })));
        let rules = parse_rules("# c\npm|PM10|1|PM10:\\s*(?<value>\\d+)|x\n").unwrap();
        assert_eq!(rules[0].pattern.as_str(), "PM10:\\s*(?<value>\\d+)|x");
        assert!(matches!(parse_rules("a|PM10|1"), Err(IngestError::MalformedConfig { line: 1, .. })));
        assert!(matches!(parse_rules("a|AirQualityClass|1|(?<value>x)"), Err(IngestError::MalformedConfig { .. })));
    }

    #[test]
    fn frame_sampling() {
        let times: Vec<_> = (0..60).map(|i| t0().plus_seconds(60 * i)).collect();
        assert_eq!(sample_frames(&times, 6.0).unwrap(), vec![0, 10, 20, 30, 40, 50]);
        assert_eq!(sample_frames(&times[..1], 6.0).unwrap(), vec![0]);
        assert!(sample_frames(&[t0(), t0().plus_seconds(-1)], 1.0).is_err());
        assert!(sample_frames(&times, 0.0).is_err());
        assert!(sample_frames(&[], 1.0).unwrap().is_empty());
    }

    #[test]
    fn catalog_records() {
        let text = "a|a.ppm|40.6|22.9|2017-03-01T10:00:00Z|thessaloniki,Sea\nb|/abs/b.ppm|-|-|2017-03-01T11:00:00Z|Thessaloniki\n";
        let c = Catalog::parse(text, Path::new("/cat"), SourceKind::SocialImage).unwrap();
        assert_eq!(c.entries[0].path, PathBuf::from("/cat/a.ppm"));
        assert_eq!(c.entries[1].path, PathBuf::from("/abs/b.ppm"));
        assert_eq!(c.entries[1].location, None);
        let rt = Catalog::parse(&c.entries[1].to_record(), Path::new("/"), SourceKind::SocialImage).unwrap();
        assert_eq!(rt.entries[0], c.entries[1]);
        assert_eq!(
            Catalog::parse("c|c.ppm|-|-|2017-03-01T10:00:00Z|", Path::new("."), SourceKind::SocialImage).unwrap_err().0,
            1
        );
    }
}
