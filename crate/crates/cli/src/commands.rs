use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use hazefuse_core::aod::{
    estimate_aod_from_image, generate_synthetic_table, linspace, AodOutcome, AodPipelineParams, RgTable,
    SyntheticParams,
};
use hazefuse_core::blob::{
    blob_report, estimate_pm, fit_calibration, BlobParams, CalibrationCurve, Connectivity, GrayImage, Polarity,
};
use hazefuse_core::fusion::{fmt6, residual_kriging_fuse, BaseMap, VariogramChoice, VariogramModel};
use hazefuse_core::ingest::{
    extract_from_html, load_rules, parse_structured_payload, query_geotagged_images, query_tagged_images,
    sample_frames, Catalog, ImageMeta, PayloadFormat, PayloadMapping, SourceDescriptor, SourceGeometry,
};
use hazefuse_core::observation::{
    classify_aq, GeoPoint, GeoRect, Observation, ObservationStore, QualityFlag, TimeRange, TimeStamp,
};
use hazefuse_core::raster::RasterImage;
use hazefuse_core::sky::{classify_usable_sky, detect_sky, extract_color_features, train_sky_classifier_with, LogisticModel, SkyParams, TrainConfig};
use hazefuse_core::solar::{build_sza_table, lookup_sza, SzaTable};

use crate::cli::*;
use crate::UsageError;

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenTable(a) => gen_table(a),
        Command::Sza(SzaCommand::Build(a)) => sza_build(a),
        Command::Sza(SzaCommand::Query(a)) => sza_query(a),
        Command::TrainSky(a) => train_sky(a),
        Command::EstimateImage(a) => estimate_image(a),
        Command::EstimateFilter(a) => estimate_filter(a),
        Command::FitCalibration(a) => fit_calibration_cmd(a),
        Command::Ingest(IngestCommand::Payload(a)) => ingest_payload(a),
        Command::Ingest(IngestCommand::Html(a)) => ingest_html(a),
        Command::Ingest(IngestCommand::Catalog(a)) => ingest_catalog(a),
        Command::Fuse(a) => fuse(a),
        Command::Export(a) => export(a),
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Input files must exist before any work starts.
fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(usage(format!("input file {} does not exist", path.display())))
    }
}

fn write_file(path: &Path, data: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, data).with_context(|| format!("writing {}", path.display()))
}

fn time_range(from: Option<TimeStamp>, to: Option<TimeStamp>) -> Result<TimeRange> {
    let all = TimeRange::all();
    TimeRange::new(from.unwrap_or(all.start), to.unwrap_or(all.end)).map_err(|e| usage(e.to_string()))
}

fn point(lat: f64, lon: f64) -> Result<GeoPoint> {
    GeoPoint::new(lat, lon).map_err(|e| usage(e.to_string()))
}

/// Appends observations in order and prints their records.
fn append(store_path: &Path, observations: Vec<Observation>) -> Result<()> {
    let mut store = ObservationStore::load_or_default(store_path)
        .with_context(|| format!("reading store {}", store_path.display()))?;
    let mut out = String::new();
    for obs in observations {
        let id = store.insert(obs)?;
        let _ = writeln!(out, "{}", store.get(&id).expect("just inserted").to_record());
    }
    store.save(store_path).with_context(|| format!("writing store {}", store_path.display()))?;
    print!("{out}");
    Ok(())
}

fn gen_table(a: GenTableArgs) -> Result<()> {
    if a.sza_n < 2 || a.aod_n < 2 {
        return Err(usage("tables need at least 2 rows and 2 columns"));
    }
    let params = SyntheticParams { b0: a.b0, b1: a.b1, s0: a.s0, s1: a.s1 };
    let mut table = generate_synthetic_table(&linspace(a.sza_min, a.sza_max, a.sza_n), &linspace(0.0, a.aod_max, a.aod_n), params)?;
    if a.provenance != table.provenance() {
        table = RgTable::new(
            table.sza_axis().to_vec(),
            table.aod_axis().to_vec(),
            (0..a.sza_n).flat_map(|i| table.row(i).to_vec()).collect(),
            table.wavelengths_nm(),
            a.provenance.clone(),
        )?;
    }
    table.save(&a.out)?;
    eprintln!("wrote {} ({} × {})", a.out.display(), a.sza_n, a.aod_n);
    Ok(())
}

fn sza_build(a: SzaBuildArgs) -> Result<()> {
    let table = build_sza_table(point(a.lat, a.lon)?, a.doy_step, a.tod_step)?;
    table.save(&a.out)?;
    eprintln!("wrote {} ({} × {})", a.out.display(), table.doy_axis.len(), table.tod_axis.len());
    Ok(())
}

fn sza_query(a: SzaQueryArgs) -> Result<()> {
    require(&a.table)?;
    let table = SzaTable::load(&a.table)?;
    let (doy, tod) = match (a.time, a.doy, a.tod) {
        (Some(t), _, _) => (t.day_of_year() as f64, t.time_of_day()),
        (None, Some(d), Some(h)) => (d, h),
        _ => return Err(usage("give --time or both --doy and --tod")),
    };
    println!("{:.4}", lookup_sza(&table, doy, tod)?);
    Ok(())
}

fn train_sky(a: TrainSkyArgs) -> Result<()> {
    require(&a.samples)?;
    let text = fs::read_to_string(&a.samples)?;
    let base = a.samples.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (path, label) = line
            .rsplit_once('|')
            .with_context(|| format!("{}:{}: expected `image|label`", a.samples.display(), i + 1))?;
        let label = match label.trim() {
            "1" | "sky" | "true" => true,
            "0" | "nosky" | "false" => false,
            other => bail!("{}:{}: bad label `{other}`", a.samples.display(), i + 1),
        };
        entries.push((base.join(path.trim()), label));
    }
    let samples: Vec<_> = entries
        .par_iter()
        .map(|(path, label)| -> Result<_> {
            let img = RasterImage::load(path).with_context(|| format!("reading {}", path.display()))?;
            Ok((extract_color_features(&img, a.grid)?, *label))
        })
        .collect::<Result<_>>()?;
    let run = train_sky_classifier_with(&samples, TrainConfig { learning_rate: a.learning_rate, epochs: a.epochs })?;
    run.model.save(&a.out)?;
    eprintln!("trained on {} images, final loss {:.6}", samples.len(), run.losses.last().copied().unwrap_or(f64::NAN));
    Ok(())
}

struct AodContext {
    rg: RgTable,
    sza: SzaTable,
    classifier: Option<LogisticModel>,
    params: AodPipelineParams,
}

impl AodContext {
    fn load(a: &AodArgs) -> Result<Self> {
        require(&a.rg_table)?;
        let rg = RgTable::load(&a.rg_table)?;
        let sza = match (&a.sza.sza_table, a.sza.city_lat, a.sza.city_lon) {
            (Some(p), _, _) => {
                require(p)?;
                SzaTable::load(p)?
            }
            (None, Some(lat), Some(lon)) => build_sza_table(point(lat, lon)?, 1, 0.5)?,
            _ => return Err(usage("give --sza-table or --city-lat/--city-lon")),
        };
        let classifier = match &a.sky_model {
            Some(p) => {
                require(p)?;
                Some(LogisticModel::load(p)?)
            }
            None => None,
        };
        let params = AodPipelineParams {
            sky: SkyParams { tolerance: a.sky_tolerance, min_fraction: a.min_sky_fraction, ..SkyParams::default() },
            max_sza: a.max_sza,
            max_city_distance_km: a.max_city_km,
        };
        Ok(Self { rg, sza, classifier, params })
    }

    /// `Ok(Err(reason))` for an image that is readable but unusable.
    fn estimate(&self, img: &RasterImage, id: &str, loc: GeoPoint, time: TimeStamp) -> Result<std::result::Result<Observation, String>> {
        if let Some(model) = &self.classifier {
            let p = classify_usable_sky(model, img)?;
            if p < 0.5 {
                return Ok(Err(format!("classifier score {p:.4} below 0.5")));
            }
        }
        match estimate_aod_from_image(img, id, loc, time, &self.sza, &self.rg, &self.params)? {
            AodOutcome::Estimate(e) => Ok(Ok(e.to_observation(hazefuse_core::observation::SourceKind::AppImage, loc, time))),
            AodOutcome::Unusable(u) => Ok(Err(u.to_string())),
        }
    }
}

fn image_id_of(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into())
}

fn estimate_image(a: EstimateImageArgs) -> Result<()> {
    require(&a.image)?;
    let ctx = AodContext::load(&a.aod)?;
    let loc = point(a.lat, a.lon)?;
    let img = RasterImage::load(&a.image).with_context(|| format!("reading {}", a.image.display()))?;
    let id = a.image_id.clone().unwrap_or_else(|| image_id_of(&a.image));
    if let Some(mask_path) = &a.mask_out {
        write_file(mask_path, detect_sky(&img, &ctx.params.sky).to_pbm())?;
    }
    match ctx.estimate(&img, &id, loc, a.time).with_context(|| format!("estimating {}", a.image.display()))? {
        Ok(obs) => append(&a.store, vec![Observation { source: a.source, ..obs }]),
        Err(reason) => {
            println!("{id}|Unusable|{reason}");
            eprintln!("{id}: unusable ({reason}); nothing stored");
            Ok(())
        }
    }
}

fn blob_params(b: &BlobArgs) -> BlobParams {
    BlobParams {
        threshold: b.threshold,
        polarity: match b.polarity {
            PolarityArg::Dark => Polarity::DarkBlobs,
            PolarityArg::Light => Polarity::LightBlobs,
        },
        min_area: b.min_area,
        merge_distance: b.merge_distance,
        connectivity: if b.connectivity == 4 { Connectivity::Four } else { Connectivity::Eight },
    }
}

fn estimate_filter(a: EstimateFilterArgs) -> Result<()> {
    require(&a.image)?;
    require(&a.calibration)?;
    let curve = CalibrationCurve::load(&a.calibration)?;
    let img = RasterImage::load(&a.image).with_context(|| format!("reading {}", a.image.display()))?;
    let params = blob_params(&a.blobs);
    params.validate().map_err(|e| usage(e.to_string()))?;
    let est = estimate_pm(&curve, &GrayImage::from_rgb(&img), &params)?;
    if let Some(r) = &a.report {
        write_file(r, blob_report(&est.blobs))?;
    }
    eprintln!("{}: {} blobs", a.image.display(), est.blob_count);
    append(&a.store, vec![est.to_observation(a.phenomenon, point(a.lat, a.lon)?, a.time)])
}

fn fit_calibration_cmd(a: FitCalibrationArgs) -> Result<()> {
    require(&a.samples)?;
    let text = fs::read_to_string(&a.samples)?;
    let mut samples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed = line
            .split_once(',')
            .and_then(|(c, v)| Some((c.trim().parse::<usize>().ok()?, v.trim().parse::<f64>().ok()?)));
        match parsed {
            Some(s) => samples.push(s),
            None => bail!("{}:{}: expected `blob_count,pm`", a.samples.display(), i + 1),
        }
    }
    let curve = fit_calibration(&samples)?;
    curve.save(&a.out)?;
    eprintln!(
        "slope {:.6} intercept {:.6} rms {:.6} over {} samples",
        curve.slope, curve.intercept, curve.rms, curve.samples
    );
    Ok(())
}

fn descriptor(d: &DescriptorArgs, config: &Path) -> Result<SourceDescriptor> {
    let geometry = match (d.lat, d.lon, d.area) {
        (Some(lat), Some(lon), None) => SourceGeometry::Station(point(lat, lon)?),
        (None, None, Some(r)) => SourceGeometry::Area(r),
        _ => return Err(usage("give either --lat/--lon (station) or --area")),
    };
    Ok(SourceDescriptor::new(d.source_id.clone(), d.kind, geometry).map_err(|e| usage(e.to_string()))?.with_config(config))
}

fn ingest_payload(a: PayloadArgs) -> Result<()> {
    require(&a.input)?;
    require(&a.mapping)?;
    let desc = descriptor(&a.descriptor, &a.mapping)?;
    let mapping = PayloadMapping::load(&a.mapping)?;
    let text = fs::read_to_string(&a.input)?;
    let format = match a.format {
        Some(FormatArg::Json) => PayloadFormat::Json,
        Some(FormatArg::Xml) => PayloadFormat::Xml,
        None => PayloadFormat::detect(&text)
            .with_context(|| format!("{}: cannot tell JSON from XML; pass --format", a.input.display()))?,
    };
    let at = a.descriptor.ingested_at.unwrap_or_else(TimeStamp::now);
    let result = parse_structured_payload(&text, format, &mapping, &desc, at)
        .with_context(|| format!("parsing {}", a.input.display()))?;
    for w in &result.warnings {
        eprintln!("warning: {}: {w}", a.input.display());
    }
    append(&a.store, result.observations)
}

fn ingest_html(a: HtmlArgs) -> Result<()> {
    require(&a.rules)?;
    for p in &a.input {
        require(p)?;
    }
    let desc = descriptor(&a.descriptor, &a.rules)?;
    let rules = load_rules(&a.rules)?;
    let at = a.descriptor.ingested_at.unwrap_or_else(TimeStamp::now);
    let mut all = Vec::new();
    for page in &a.input {
        let html = fs::read_to_string(page).with_context(|| format!("reading {}", page.display()))?;
        let obs = extract_from_html(&html, &rules, &desc, at)?;
        eprintln!("{}: {} readings", page.display(), obs.len());
        all.extend(obs);
    }
    append(&a.store, all)
}

fn ingest_catalog(a: CatalogArgs) -> Result<()> {
    let ctx = AodContext::load(&a.aod)?;
    let catalog = Catalog::load(&a.catalog, a.source)?;
    let range = time_range(a.from, a.to)?;
    let mut picked: Vec<ImageMeta> = query_geotagged_images(&catalog, &a.window, &range);
    if !a.tags.is_empty() {
        let seen: std::collections::HashSet<String> = picked.iter().map(|m| m.image_id.clone()).collect();
        let tagged = query_tagged_images(&catalog, &a.tags, &range)?;
        // Tag matches add only images the geo query could not place.
        picked.extend(tagged.into_iter().filter(|m| m.location.is_none() && !seen.contains(&m.image_id)));
        let order: std::collections::HashMap<&str, usize> =
            catalog.entries.iter().enumerate().map(|(i, m)| (m.image_id.as_str(), i)).collect();
        picked.sort_by_key(|m| order[m.image_id.as_str()]);
    }
    if let Some(rate) = a.frame_rate {
        picked.sort_by(|x, y| x.time.cmp(&y.time).then_with(|| x.image_id.cmp(&y.image_id)));
        let times: Vec<TimeStamp> = picked.iter().map(|m| m.time).collect();
        let keep = sample_frames(&times, rate).map_err(|e| usage(e.to_string()))?;
        picked = keep.into_iter().map(|i| picked[i].clone()).collect();
    }
    eprintln!("{} of {} catalog images selected", picked.len(), catalog.entries.len());

    let results: Vec<(ImageMeta, Result<std::result::Result<Observation, String>>)> = picked
        .into_par_iter()
        .map(|m| {
            let (loc, flag) = m.placement(&a.window);
            let res = RasterImage::load(&m.path)
                .with_context(|| format!("reading {}", m.path.display()))
                .and_then(|img| ctx.estimate(&img, &m.image_id, loc, m.time))
                .map(|r| {
                    r.map(|obs| {
                        let flag = if flag == QualityFlag::Suspect { flag } else { obs.quality_flag };
                        Observation { source: m.source, ..obs }.with_flag(flag)
                    })
                });
            (m, res)
        })
        .collect();

    let mut observations = Vec::new();
    let (mut unusable, mut failed) = (0, 0);
    for (m, res) in results {
        match res {
            Ok(Ok(obs)) => observations.push(obs),
            Ok(Err(reason)) => {
                unusable += 1;
                eprintln!("{}: unusable ({reason})", m.image_id);
            }
            Err(e) => {
                failed += 1;
                eprintln!("warning: {}: {e:#}", m.image_id);
            }
        }
    }
    eprintln!("{} estimates, {unusable} unusable, {failed} failed", observations.len());
    append(&a.store, observations)
}

fn fuse(a: FuseArgs) -> Result<()> {
    require(&a.store)?;
    require(&a.basemap)?;
    let base = BaseMap::load(&a.basemap)?;
    let store = ObservationStore::load(&a.store)?;
    let obs = store.query(&base.grid.extent(), &time_range(a.from, a.to)?, Some(a.phenomenon))?;
    let choice = match (a.nugget, a.sill, a.range) {
        (Some(n), Some(s), Some(r)) => {
            VariogramChoice::Fixed(VariogramModel::new(a.model, n, s, r).map_err(|e| usage(e.to_string()))?)
        }
        _ => VariogramChoice::Auto { kind: a.model, n_bins: a.bins, max_lag: a.max_lag },
    };
    let report = residual_kriging_fuse(&obs, &base, choice)?;
    for w in &report.residuals.warnings {
        eprintln!("warning: {w}");
    }
    match report.model {
        Some(m) => eprintln!(
            "{} observations, {} model nugget {} sill {} range {}",
            report.residuals.points.len(),
            m.kind,
            fmt6(m.nugget),
            fmt6(m.sill),
            fmt6(m.range)
        ),
        None => eprintln!("{} observations, constant residual field", report.residuals.points.len()),
    }
    report.map.save(&a.out)?;
    if let Some(p) = &a.geojson {
        write_file(p, report.map.to_geojson())?;
    }
    if let Some(p) = &a.csv {
        write_file(p, report.map.to_csv())?;
    }
    Ok(())
}

fn export(a: ExportArgs) -> Result<()> {
    require(&a.store)?;
    let thresholds: Option<[f64; 3]> = match &a.classify {
        None => None,
        Some(v) => Some(
            v.as_slice()
                .try_into()
                .map_err(|_| usage(format!("--classify needs 3 thresholds, got {}", v.len())))?,
        ),
    };
    let store = ObservationStore::load(&a.store)?;
    let bbox = a.bbox.unwrap_or_else(GeoRect::everywhere);
    let hits = store.query(&bbox, &time_range(a.from, a.to)?, a.phenomenon)?;
    let mut out = String::from("id,source,phenomenon,value,lat,lon,time,quality_flag");
    out.push_str(if thresholds.is_some() { ",aq_class\n" } else { "\n" });
    for o in &hits {
        let value = match o.value.as_real() {
            Some(v) => fmt6(v),
            None => o.value.to_string(),
        };
        let _ = write!(
            out,
            "{},{},{},{},{:.6},{:.6},{},{}",
            o.id, o.source, o.phenomenon, value, o.location.lat, o.location.lon, o.time, o.quality_flag
        );
        if let Some(t) = thresholds {
            let class = match o.value.as_real() {
                Some(v) => classify_aq(v, o.phenomenon, t).map(|c| c.to_string()).unwrap_or_else(|_| "-".into()),
                None => o.value.to_string(),
            };
            let _ = write!(out, ",{class}");
        }
        out.push('\n');
    }
    match &a.out {
        Some(p) => write_file(p, out),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}

