use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hazefuse_core::fusion::VariogramKind;
use hazefuse_core::observation::{GeoRect, PhenomenonKind, SourceKind, TimeStamp};

#[derive(Debug, Parser)]
#[command(name = "hazefuse", version, about = "Fuse sky photos, filter photos, web readings and sensors into city air-quality maps")]
pub struct Cli {
    /// `key = value` file with default flag values; flags on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic R/G lookup table.
    GenTable(GenTableArgs),
    /// Build or query a per-city solar zenith angle table.
    #[command(subcommand)]
    Sza(SzaCommand),
    /// Train the usable-sky classifier from labelled photos.
    TrainSky(TrainSkyArgs),
    /// Estimate AOD from one sky photo and append it to the store.
    EstimateImage(EstimateImageArgs),
    /// Estimate PM from a filter photo and append it to the store.
    EstimateFilter(EstimateFilterArgs),
    /// Fit the blob-count to PM calibration line.
    FitCalibration(FitCalibrationArgs),
    /// Turn payloads, pages or image catalogs into stored observations.
    #[command(subcommand)]
    Ingest(IngestCommand),
    /// Residual-krige stored observations onto a base map.
    Fuse(FuseArgs),
    /// Write stored observations matching a query as CSV.
    Export(ExportArgs),
}

pub fn parse_bbox(s: &str) -> Result<GeoRect, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| format!("`{x}` is not a number")))
        .collect::<Result<_, _>>()?;
    if v.len() != 4 {
        return Err("expected min_lat,max_lat,min_lon,max_lon".into());
    }
    GeoRect::new(v[0], v[1], v[2], v[3]).map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct GenTableArgs {
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub sza_min: f64,
    #[arg(long, default_value_t = 85.0)]
    pub sza_max: f64,
    /// Number of SZA rows.
    #[arg(long, default_value_t = 18)]
    pub sza_n: usize,
    #[arg(long, default_value_t = 2.0)]
    pub aod_max: f64,
    /// Number of AOD columns.
    #[arg(long, default_value_t = 21)]
    pub aod_n: usize,
    /// R/G = b0 + b1·sza + (s0 + s1·sza)·aod
    #[arg(long, default_value_t = 0.55)]
    pub b0: f64,
    #[arg(long, default_value_t = 0.002)]
    pub b1: f64,
    #[arg(long, default_value_t = 0.30)]
    pub s0: f64,
    #[arg(long, default_value_t = 0.001)]
    pub s1: f64,
    #[arg(long, default_value = "synthetic")]
    pub provenance: String,
}

#[derive(Debug, Subcommand)]
pub enum SzaCommand {
    /// Precompute a DoY × ToD table for a city.
    Build(SzaBuildArgs),
    /// Look up the solar zenith angle for a time.
    Query(SzaQueryArgs),
}

#[derive(Debug, Args)]
pub struct SzaBuildArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub lat: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub lon: f64,
    #[arg(long, default_value_t = 1)]
    pub doy_step: u32,
    /// Hours between time-of-day columns.
    #[arg(long, default_value_t = 0.5)]
    pub tod_step: f64,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SzaQueryArgs {
    #[arg(long, value_name = "FILE")]
    pub table: PathBuf,
    /// UTC time, RFC 3339 or `YYYY-MM-DD HH:MM[:SS]`.
    #[arg(long, conflicts_with_all = ["doy", "tod"])]
    pub time: Option<TimeStamp>,
    #[arg(long, requires = "tod")]
    pub doy: Option<f64>,
    /// UTC hours.
    #[arg(long, requires = "doy")]
    pub tod: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainSkyArgs {
    /// Lines `image.ppm|1` (usable sky) or `image.ppm|0`; paths relative to the file.
    #[arg(long, value_name = "FILE")]
    pub samples: PathBuf,
    /// Cells per image side for the colour features.
    #[arg(long, default_value_t = 4)]
    pub grid: usize,
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

/// Where the solar zenith angle comes from.
#[derive(Debug, Args, Clone)]
pub struct SzaSource {
    /// Precomputed SZA table for the city.
    #[arg(long, value_name = "FILE")]
    pub sza_table: Option<PathBuf>,
    /// City latitude, when no table is given (built at 1 day × 0.5 h).
    #[arg(long, allow_hyphen_values = true, requires = "city_lon")]
    pub city_lat: Option<f64>,
    #[arg(long, allow_hyphen_values = true, requires = "city_lat")]
    pub city_lon: Option<f64>,
}

#[derive(Debug, Args, Clone)]
pub struct AodArgs {
    #[arg(long, value_name = "FILE")]
    pub rg_table: PathBuf,
    #[command(flatten)]
    pub sza: SzaSource,
    /// Optional usable-sky classifier; images scoring below 0.5 are rejected.
    #[arg(long, value_name = "FILE")]
    pub sky_model: Option<PathBuf>,
    #[arg(long, default_value_t = 85.0)]
    pub max_sza: f64,
    #[arg(long, default_value_t = 50.0)]
    pub max_city_km: f64,
    /// RGB tolerance for sky region growing.
    #[arg(long, default_value_t = 30.0)]
    pub sky_tolerance: f64,
    /// Minimum sky fraction for a usable image.
    #[arg(long, default_value_t = 0.15)]
    pub min_sky_fraction: f64,
}

#[derive(Debug, Args)]
pub struct EstimateImageArgs {
    /// Binary PPM (P6) photo.
    #[arg(long, value_name = "FILE")]
    pub image: PathBuf,
    #[arg(long)]
    pub image_id: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub lat: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub lon: f64,
    #[arg(long)]
    pub time: TimeStamp,
    #[arg(long, default_value = "AppImage")]
    pub source: SourceKind,
    #[command(flatten)]
    pub aod: AodArgs,
    /// Observation store to append to.
    #[arg(long, value_name = "FILE")]
    pub store: PathBuf,
    /// Also write the sky mask as PBM.
    #[arg(long, value_name = "FILE")]
    pub mask_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolarityArg {
    Dark,
    Light,
}

#[derive(Debug, Args)]
pub struct BlobArgs {
    #[arg(long, default_value_t = 128)]
    pub threshold: u8,
    #[arg(long, value_enum, default_value_t = PolarityArg::Dark)]
    pub polarity: PolarityArg,
    #[arg(long, default_value_t = 4)]
    pub min_area: usize,
    /// Pixels between centroids for blobs to merge.
    #[arg(long, default_value_t = 0.0)]
    pub merge_distance: f64,
    #[arg(long, default_value_t = 8, value_parser = parse_connectivity)]
    pub connectivity: u8,
}

#[derive(Debug, Args)]
pub struct EstimateFilterArgs {
    #[arg(long, value_name = "FILE")]
    pub image: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub calibration: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub lat: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub lon: f64,
    #[arg(long)]
    pub time: TimeStamp,
    #[arg(long, default_value = "PM10")]
    pub phenomenon: PhenomenonKind,
    #[command(flatten)]
    pub blobs: BlobArgs,
    #[arg(long, value_name = "FILE")]
    pub store: PathBuf,
    /// Blob report CSV.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitCalibrationArgs {
    /// Lines `blob_count,pm`; `#` starts a comment.
    #[arg(long, value_name = "FILE")]
    pub samples: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum IngestCommand {
    /// JSON or XML payload with a key-path mapping.
    Payload(PayloadArgs),
    /// HTML pages with regular-expression rules.
    Html(HtmlArgs),
    /// Geotagged (and optionally tagged) images from a local catalog.
    Catalog(CatalogArgs),
}

#[derive(Debug, Args)]
pub struct DescriptorArgs {
    #[arg(long, default_value = "source")]
    pub source_id: String,
    #[arg(long)]
    pub kind: SourceKind,
    /// Station latitude.
    #[arg(long, allow_hyphen_values = true, requires = "lon", conflicts_with = "area")]
    pub lat: Option<f64>,
    #[arg(long, allow_hyphen_values = true, requires = "lat")]
    pub lon: Option<f64>,
    /// Area source: min_lat,max_lat,min_lon,max_lon.
    #[arg(long, value_parser = parse_bbox, allow_hyphen_values = true)]
    pub area: Option<GeoRect>,
    /// Stamp for readings without their own time (defaults to now).
    #[arg(long)]
    pub ingested_at: Option<TimeStamp>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Json,
    Xml,
}

#[derive(Debug, Args)]
pub struct PayloadArgs {
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// Lines `path|phenomenon|scale`, optionally `@time|path`.
    #[arg(long, value_name = "FILE")]
    pub mapping: PathBuf,
    /// Guessed from the first character when omitted.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[command(flatten)]
    pub descriptor: DescriptorArgs,
    #[arg(long, value_name = "FILE")]
    pub store: PathBuf,
}

#[derive(Debug, Args)]
pub struct HtmlArgs {
    /// Page files, processed in the order given.
    #[arg(long, value_name = "FILE", num_args = 1.., required = true)]
    pub input: Vec<PathBuf>,
    /// Lines `name|phenomenon|scale|pattern`.
    #[arg(long, value_name = "FILE")]
    pub rules: PathBuf,
    #[command(flatten)]
    pub descriptor: DescriptorArgs,
    #[arg(long, value_name = "FILE")]
    pub store: PathBuf,
}

#[derive(Debug, Args)]
pub struct CatalogArgs {
    /// Sidecar file, or a directory holding `catalog.txt`.
    #[arg(long, value_name = "PATH")]
    pub catalog: PathBuf,
    /// City window: min_lat,max_lat,min_lon,max_lon.
    #[arg(long, value_parser = parse_bbox, allow_hyphen_values = true)]
    pub window: GeoRect,
    #[arg(long)]
    pub from: Option<TimeStamp>,
    #[arg(long)]
    pub to: Option<TimeStamp>,
    /// Also take images carrying any of these tags (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub tags: Vec<String>,
    #[arg(long, default_value = "SocialImage")]
    pub source: SourceKind,
    /// Keep at most this many frames per hour (greedy, by time).
    #[arg(long)]
    pub frame_rate: Option<f64>,
    #[command(flatten)]
    pub aod: AodArgs,
    #[arg(long, value_name = "FILE")]
    pub store: PathBuf,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[arg(long, value_name = "FILE")]
    pub store: PathBuf,
    /// Grid file with the prior field.
    #[arg(long, value_name = "FILE")]
    pub basemap: PathBuf,
    #[arg(long, default_value = "AOD")]
    pub phenomenon: PhenomenonKind,
    #[arg(long)]
    pub from: Option<TimeStamp>,
    #[arg(long)]
    pub to: Option<TimeStamp>,
    #[arg(long, default_value = "exponential")]
    pub model: VariogramKind,
    /// Fixed variogram parameters; all three or none (then fitted).
    #[arg(long, requires_all = ["sill", "range"])]
    pub nugget: Option<f64>,
    #[arg(long, requires_all = ["nugget", "range"])]
    pub sill: Option<f64>,
    #[arg(long, requires_all = ["nugget", "sill"])]
    pub range: Option<f64>,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    /// Semivariogram cut-off in degrees; half the largest separation by default.
    #[arg(long)]
    pub max_lag: Option<f64>,
    /// Fused grid; variance goes to `<out>.var`.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub geojson: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long, value_name = "FILE")]
    pub store: PathBuf,
    /// min_lat,max_lat,min_lon,max_lon
    #[arg(long, value_parser = parse_bbox, allow_hyphen_values = true)]
    pub bbox: Option<GeoRect>,
    #[arg(long)]
    pub from: Option<TimeStamp>,
    #[arg(long)]
    pub to: Option<TimeStamp>,
    #[arg(long)]
    pub phenomenon: Option<PhenomenonKind>,
    /// Add an air-quality class column from three increasing thresholds.
    #[arg(long, value_delimiter = ',')]
    pub classify: Option<Vec<f64>>,
    /// Defaults to standard output.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

fn parse_connectivity(s: &str) -> Result<u8, String> {
    match s {
        "4" => Ok(4),
        "8" => Ok(8),
        _ => Err(format!("connectivity must be 4 or 8, got `{s}`")),
    }
}
