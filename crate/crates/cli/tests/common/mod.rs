#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hazefuse_core::aod::{eval_rg, generate_synthetic_table, linspace, SyntheticParams};
use hazefuse_core::fusion::{BaseMap, GridSpec};
use hazefuse_core::observation::GeoPoint;
use hazefuse_core::raster::RasterImage;
use hazefuse_oracles::{noaa, render};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_hazefuse")
}

/// Runs the binary in `dir` with a fixed rayon pool size.
pub fn run(dir: &Path, threads: usize, args: &[&str]) -> Output {
    Command::new(bin())
        .current_dir(dir)
        .env("RAYON_NUM_THREADS", threads.to_string())
        .args(args)
        .output()
        .expect("spawn hazefuse")
}

pub fn run_ok(dir: &Path, threads: usize, args: &[&str]) -> Output {
    let out = run(dir, threads, args);
    assert!(
        out.status.success(),
        "hazefuse {args:?} exited {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn grid() -> GridSpec {
    GridSpec::new(GeoPoint::new(40.55, 22.85).unwrap(), 0.02, 0.02, 8, 10).unwrap()
}

/// A sky photo whose mean R/G is what the default synthetic table predicts
/// for `aod` under the true sun position at `(lat, lon)` and the given UTC time.
/// After dark the colours are those of a low sun; the pipeline must reject it.
pub fn render_sky(lat: f64, lon: f64, ymd: (i32, u32, u32), hour: f64, aod: f64) -> RasterImage {
    let table = generate_synthetic_table(&linspace(0.0, 85.0, 18), &linspace(0.0, 2.0, 21), SyntheticParams::default())
        .unwrap();
    let sza = noaa::solar_zenith(ymd.0, ymd.1, ymd.2, hour, lat, lon).min(85.0);
    let rg = eval_rg(&table, sza, aod).unwrap();
    RasterImage::new(64, 48, render::sky_scene(64, 48, 24, rg)).unwrap()
}

pub struct Fixture {
    pub lat: f64,
    pub lon: f64,
    pub hour: u32,
    pub minute: u32,
    pub aod: f64,
}

/// Photos placed on cell centres so fused values at those cells are checkable.
pub fn fixtures() -> Vec<Fixture> {
    let g = grid();
    let cells = [(1, 1), (1, 7), (3, 4), (4, 2), (5, 8), (6, 5), (7, 1), (2, 9)];
    cells
        .iter()
        .enumerate()
        .map(|(k, &(r, c))| {
            let p = g.cell_center(r, c);
            Fixture { lat: p.lat, lon: p.lon, hour: 8 + (k as u32 % 5), minute: 10 * (k as u32 % 6), aod: 0.1 + 0.1 * k as f64 }
        })
        .collect()
}

/// Every artifact the pipeline writes, plus captured standard output.
pub fn pipeline(dir: &Path, threads: usize) -> Vec<(String, Vec<u8>)> {
    let mut outputs = Vec::new();
    let mut step = |name: &str, args: &[&str]| {
        let out = run_ok(dir, threads, args);
        outputs.push((format!("stdout:{name}"), out.stdout));
    };
    step("gen-table", &["gen-table", "--out", "rg.csv"]);
    step("sza", &["sza", "build", "--lat", "40.63", "--lon", "22.95", "--out", "sza.csv"]);
    fs::write(dir.join("run.conf"), "rg-table = rg.csv\nsza-table = sza.csv\nstore = store.txt\n").unwrap();

    for (k, f) in fixtures().iter().enumerate() {
        let name = format!("photo{k}.ppm");
        render_sky(f.lat, f.lon, (2016, 6, 1), f.hour as f64 + f.minute as f64 / 60.0, f.aod).save(dir.join(&name)).unwrap();
        let (lat, lon) = (format!("{}", f.lat), format!("{}", f.lon));
        let time = format!("2016-06-01T{:02}:{:02}:00Z", f.hour, f.minute);
        step(
            &name,
            &["--config", "run.conf", "estimate-image", "--image", &name, "--lat", &lat, "--lon", &lon, "--time", &time],
        );
    }

    // A catalog of social images: some geotagged, one tag-only, one at night.
    fs::create_dir_all(dir.join("social")).unwrap();
    let mut catalog = String::new();
    let social = [
        ("s0", Some((40.60, 22.90)), 9, 0.35),
        ("s1", Some((40.66, 22.97)), 10, 0.55),
        ("s2", None, 11, 0.45),
        ("s3", Some((40.62, 22.93)), 21, 0.40),
        ("s4", Some((40.68, 22.88)), 12, 0.75),
        ("s5", Some((40.58, 23.01)), 13, 0.25),
    ];
    let window = grid().extent();
    for (id, loc, hour, aod) in social {
        let (lat, lon) = loc.unwrap_or((window.centroid().lat, window.centroid().lon));
        render_sky(lat, lon, (2016, 6, 2), hour as f64, aod).save(dir.join("social").join(format!("{id}.ppm"))).unwrap();
        let geo = loc.map(|(a, b)| format!("{a}|{b}")).unwrap_or_else(|| "-|-".into());
        catalog.push_str(&format!("{id}|{id}.ppm|{geo}|2016-06-02T{hour:02}:00:00Z|Thessaloniki,sky\n"));
    }
    fs::write(dir.join("social/catalog.txt"), catalog).unwrap();
    let window_arg = format!("{},{},{},{}", window.min_lat, window.max_lat, window.min_lon, window.max_lon);
    step(
        "catalog",
        &["--config", "run.conf", "ingest", "catalog", "--catalog", "social", "--window", &window_arg, "--tags", "thessaloniki"],
    );

    BaseMap::constant(grid(), 0.4).save(dir.join("base.grid")).unwrap();
    step(
        "fuse-auto",
        &["fuse", "--store", "store.txt", "--basemap", "base.grid", "--out", "auto.grid", "--geojson", "auto.geojson", "--csv", "auto.csv"],
    );
    step(
        "fuse-fixed",
        &[
            "fuse", "--store", "store.txt", "--basemap", "base.grid", "--to", "2016-06-01T23:59:59Z", "--nugget", "0", "--sill",
            "0.1", "--range", "0.1", "--out", "fixed.grid", "--geojson", "fixed.geojson",
        ],
    );
    step("export", &["export", "--store", "store.txt", "--classify", "0.2,0.5,1.0", "--out", "export.csv"]);

    let mut names: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).filter(|p| p.is_file()).collect();
    names.sort();
    for p in names {
        outputs.push((p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()));
    }
    outputs
}
