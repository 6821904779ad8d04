use std::fs;
use std::path::{Path, PathBuf};

use hazefuse_core::ingest::{
    extract_from_html, load_rules, parse_structured_payload, query_geotagged_images, query_tagged_images,
    sample_frames, Catalog, IngestError, ImageMeta, PayloadFormat, PayloadMapping, SourceDescriptor, SourceGeometry,
};
use hazefuse_core::observation::{GeoPoint, GeoRect, PhenomenonKind, QualityFlag, SourceKind, TimeRange, TimeStamp};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn site() -> SourceDescriptor {
    SourceDescriptor::new("site", SourceKind::WebSite, SourceGeometry::Station(GeoPoint::new(40.63, 22.95).unwrap()))
        .unwrap()
}

fn ingested_at() -> TimeStamp {
    TimeStamp::from_ymd_hms(2017, 4, 1, 0, 0, 0).unwrap()
}

#[test]
fn html_corpus_matches_hand_labels() {
    let rules = load_rules(fixtures().join("html_rules.txt")).unwrap();
    let labels = fs::read_to_string(fixtures().join("html_labels.txt")).unwrap();
    let mut expected: std::collections::BTreeMap<String, (Vec<(PhenomenonKind, f64)>, Option<TimeStamp>)> =
        Default::default();
    for line in labels.lines().filter(|l| !l.starts_with('#')) {
        let f: Vec<&str> = line.split('|').collect();
        let entry = expected.entry(f[0].to_string()).or_default();
        entry.1 = (f[3] != "-").then(|| f[3].parse().unwrap());
        if f[1] != "-" {
            entry.0.push((f[1].parse().unwrap(), f[2].parse().unwrap()));
        }
    }
    assert_eq!(expected.len(), 20);
    for (page, (readings, time)) in &expected {
        let html = fs::read_to_string(fixtures().join("html").join(page)).unwrap();
        let obs = extract_from_html(&html, &rules, &site(), ingested_at()).unwrap();
        assert_eq!(obs.len(), readings.len(), "{page}");
        for (o, (phen, value)) in obs.iter().zip(readings) {
            assert_eq!(o.phenomenon, *phen, "{page}");
            assert!((o.value.as_real().unwrap() - value).abs() < 1e-9, "{page}: {o:?}");
            match time {
                Some(t) => assert_eq!((o.time, o.quality_flag), (*t, QualityFlag::Ok), "{page}"),
                None => assert_eq!((o.time, o.quality_flag), (ingested_at(), QualityFlag::Suspect), "{page}"),
            }
            assert_eq!(o.location, GeoPoint::new(40.63, 22.95).unwrap());
        }
    }
}

#[test]
fn extraction_ignores_bytes_outside_matches() {
    let rules = load_rules(fixtures().join("html_rules.txt")).unwrap();
    let stamp = regex::Regex::new(r"\d{4}-\d{2}-\d{2}[T ]\d{2}:\d{2}(?::\d{2})?(?:Z|[+-]\d{2}:\d{2})?").unwrap();
    let mut rng = StdRng::seed_from_u64(21);
    for entry in fs::read_dir(fixtures().join("html")).unwrap() {
        let html = fs::read_to_string(entry.unwrap().path()).unwrap();
        let mut protected = vec![false; html.len()];
        let spans = rules
            .iter()
            .flat_map(|r| r.pattern.find_iter(&html).map(|m| m.range()).collect::<Vec<_>>())
            .chain(stamp.find_iter(&html).map(|m| m.range()));
        for span in spans {
            protected[span].iter_mut().for_each(|p| *p = true);
        }
        let base = extract_from_html(&html, &rules, &site(), ingested_at()).unwrap();
        for _ in 0..5 {
            let mutated: String = html
                .char_indices()
                .map(|(i, c)| if !protected[i] && rng.gen_bool(0.3) { 'x' } else { c })
                .collect();
            assert_eq!(extract_from_html(&mutated, &rules, &site(), ingested_at()).unwrap(), base);
        }
    }
}

#[test]
fn station_payload_fixture() {
    let mapping = PayloadMapping::parse("@time|station.updated\nstation.readings.pm10|PM10|1\nstation.readings.co|PM10|1").unwrap();
    let text = r#"{"station": {"name": "Egnatia", "updated": "2017-03-01T12:00:00Z", "readings": {"pm10": 42}}}"#;
    let out = parse_structured_payload(text, PayloadFormat::Json, &mapping, &site(), ingested_at()).unwrap();
    assert_eq!(out.observations.len(), 1);
    assert_eq!(out.observations[0].value.as_real(), Some(42.0));
    assert_eq!(out.warnings.len(), 1);
}

fn random_catalog(rng: &mut StdRng, n: usize) -> Catalog {
    let base = TimeStamp::from_ymd_hms(2017, 3, 1, 0, 0, 0).unwrap();
    let tags = ["Thessaloniki", "whitetower", "sea", "sunset"];
    let entries = (0..n)
        .map(|i| ImageMeta {
            image_id: format!("img{i}"),
            path: PathBuf::from(format!("img{i}.ppm")),
            location: rng
                .gen_bool(0.7)
                .then(|| GeoPoint::new(rng.gen_range(40.0..41.2), rng.gen_range(22.0..23.6)).unwrap()),
            time: base.plus_seconds(rng.gen_range(0..86_400 * 10)),
            source: SourceKind::SocialImage,
            tags: tags.iter().filter(|_| rng.gen_bool(0.4)).map(|t| t.to_string()).chain(["x".to_string()]).collect(),
        })
        .collect();
    Catalog { entries }
}

#[test]
fn geotagged_query_matches_linear_scan() {
    let mut rng = StdRng::seed_from_u64(22);
    for _ in 0..50 {
        let catalog = random_catalog(&mut rng, 40);
        let (a, b): (f64, f64) = (rng.gen_range(40.0..41.2), rng.gen_range(40.0..41.2));
        let (c, d): (f64, f64) = (rng.gen_range(22.0..23.6), rng.gen_range(22.0..23.6));
        let window = GeoRect::new(a.min(b), a.max(b), c.min(d), c.max(d)).unwrap();
        let start = TimeStamp::from_ymd_hms(2017, 3, 3, 0, 0, 0).unwrap();
        let range = TimeRange::new(start, start.plus_seconds(86_400 * 4)).unwrap();
        let mut oracle = Vec::new();
        for m in &catalog.entries {
            if let Some(p) = m.location {
                let inside = p.lat >= window.min_lat && p.lat <= window.max_lat && p.lon >= window.min_lon && p.lon <= window.max_lon;
                if inside && m.time >= range.start && m.time <= range.end {
                    oracle.push(m.clone());
                }
            }
        }
        assert_eq!(query_geotagged_images(&catalog, &window, &range), oracle);
    }
}

#[test]
fn ten_item_catalog_and_degenerate_window() {
    let t = TimeStamp::from_ymd_hms(2017, 3, 1, 12, 0, 0).unwrap();
    let coords = [
        Some((40.60, 22.90)),
        Some((40.65, 22.95)),
        Some((40.70, 23.00)),
        Some((40.62, 22.98)),
        Some((41.50, 22.90)),
        Some((40.60, 24.00)),
        Some((39.00, 21.00)),
        None,
        None,
        Some((38.00, 23.70)),
    ];
    let catalog = Catalog {
        entries: coords
            .iter()
            .enumerate()
            .map(|(i, c)| ImageMeta {
                image_id: format!("i{i}"),
                path: PathBuf::from("p"),
                location: c.map(|(lat, lon)| GeoPoint::new(lat, lon).unwrap()),
                time: t,
                source: SourceKind::SocialImage,
                tags: vec!["thessaloniki".into()],
            })
            .collect(),
    };
    let window = GeoRect::new(40.5, 40.75, 22.8, 23.1).unwrap();
    let ids: Vec<_> = query_geotagged_images(&catalog, &window, &TimeRange::all()).into_iter().map(|m| m.image_id).collect();
    assert_eq!(ids, ["i0", "i1", "i2", "i3"]);
    let point = GeoRect::new(40.65, 40.65, 22.95, 22.95).unwrap();
    let ids: Vec<_> = query_geotagged_images(&catalog, &point, &TimeRange::all()).into_iter().map(|m| m.image_id).collect();
    assert_eq!(ids, ["i1"]);
}

#[test]
fn tag_queries() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("catalog.txt"),
        "a|a.ppm|40.6|22.9|2017-03-01T10:00:00Z|Thessaloniki,whitetower\n\
         b|b.ppm|-|-|2017-03-01T11:00:00Z|thessaloniki\n\
         c|c.ppm|-|-|2017-03-01T12:00:00Z|THESSALONIKI,sea\n\
         d|d.ppm|40.6|22.9|2017-03-01T13:00:00Z|athens\n",
    )
    .unwrap();
    let catalog = Catalog::load(dir.path(), SourceKind::SocialImage).unwrap();
    assert_eq!(catalog.entries[0].path, dir.path().join("a.ppm"));
    let all = TimeRange::all();
    let q = |tags: &[&str]| -> Vec<String> {
        let tags: Vec<String> = tags.iter().map(|s| s.to_string()).collect();
        query_tagged_images(&catalog, &tags, &all).unwrap().into_iter().map(|m| m.image_id).collect()
    };
    assert_eq!(q(&["thessaloniki"]), ["a", "b", "c"]);
    assert_eq!(q(&["WhiteTower", "thessaloniki"]), ["a", "b", "c"]);
    assert!(q(&["patras"]).is_empty());
    assert!(query_tagged_images(&catalog, &[], &all).is_err());

    let window = GeoRect::new(40.5, 40.8, 22.8, 23.1).unwrap();
    let (p, flag) = catalog.entries[1].placement(&window);
    assert_eq!((p, flag), (window.centroid(), QualityFlag::Suspect));

    assert!(matches!(
        Catalog::load(dir.path().join("missing"), SourceKind::SocialImage),
        Err(IngestError::CatalogUnreadable { .. })
    ));
    fs::write(dir.path().join("bad.txt"), "a|a.ppm|x|y|2017-03-01T10:00:00Z|t\n").unwrap();
    assert!(matches!(Catalog::load(dir.path().join("bad.txt"), SourceKind::SocialImage), Err(IngestError::CatalogUnreadable { .. })));
}

/// Reference greedy scan: for each selected frame, look ahead for the first
/// frame far enough away.
fn greedy_oracle(times: &[i64], gap: f64) -> Vec<usize> {
    if times.is_empty() {
        return vec![];
    }
    let mut out = vec![0];
    loop {
        let last = *out.last().unwrap();
        match (last + 1..times.len()).find(|&j| (times[j] - times[last]) as f64 >= gap) {
            Some(j) => out.push(j),
            None => return out,
        }
    }
}

#[test]
fn frame_sampling_matches_greedy_oracle() {
    let mut rng = StdRng::seed_from_u64(23);
    for _ in 0..200 {
        let mut t = 1_490_000_000i64;
        let times: Vec<i64> = (0..rng.gen_range(1..80))
            .map(|_| {
                t += rng.gen_range(0..1200);
                t
            })
            .collect();
        let rate = rng.gen_range(0.5..20.0);
        let stamps: Vec<_> = times.iter().map(|&s| TimeStamp::from_unix(s)).collect();
        let picked = sample_frames(&stamps, rate).unwrap();
        assert_eq!(picked, greedy_oracle(&times, 3600.0 / rate));
        assert!(picked.windows(2).all(|w| (times[w[1]] - times[w[0]]) as f64 >= 3600.0 / rate));
    }
}
