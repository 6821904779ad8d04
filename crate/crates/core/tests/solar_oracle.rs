use hazefuse_core::observation::GeoPoint;
use hazefuse_core::solar::{build_sza_table, lookup_sza, solar_zenith_angle, SolarContext};
use hazefuse_oracles::noaa;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn max_error_against_noaa(year: i32) -> f64 {
    let mut worst: f64 = 0.0;
    for month in 1..=12 {
        let doy = noaa::day_of_year(year, month, 15);
        for lat_i in 0..=18 {
            let lat = -90.0 + 10.0 * lat_i as f64;
            for lon_i in 0..36 {
                let lon = -180.0 + 10.0 * lon_i as f64;
                let p = GeoPoint::new(lat, lon).unwrap();
                for hour in 0..24 {
                    let ours = solar_zenith_angle(&SolarContext::new(p, doy, hour as f64).unwrap());
                    let reference = noaa::solar_zenith(year, month, 15, hour as f64, lat, lon);
                    worst = worst.max((ours - reference).abs());
                }
            }
        }
    }
    worst
}

#[test]
fn zenith_matches_noaa_within_half_degree() {
    for year in 2010..=2030 {
        let err = max_error_against_noaa(year);
        assert!(err < 0.5, "{year}: max error {err}");
    }
}

#[test]
fn hourly_daily_table_tracks_direct_computation() {
    let city = GeoPoint::new(40.63, 22.95).unwrap();
    let table = build_sza_table(city, 1, 1.0).unwrap();
    let mut rng = StdRng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let doy = rng.gen_range(1..=365u32);
        let tod = rng.gen_range(0.0..23.0);
        let direct = solar_zenith_angle(&SolarContext::new(city, doy, tod).unwrap());
        let looked_up = lookup_sza(&table, doy as f64, tod).unwrap();
        worst = worst.max((direct - looked_up).abs());
    }
    // Worst case for a 1 h grid is solar noon falling midway between two
    // nodes at the June solstice: the chord through h = ±7.5° versus the
    // minimum at h = 0.
    let (phi, decl) = (40.63_f64.to_radians(), 23.45_f64.to_radians());
    let zen = |h: f64| (phi.sin() * decl.sin() + phi.cos() * decl.cos() * h.to_radians().cos()).acos().to_degrees();
    let bound = zen(7.5) - zen(0.0);
    assert!((1.1..1.2).contains(&bound), "{bound}");
    assert!(worst <= bound + 0.05, "max lookup error {worst} vs chord bound {bound}");
}

fn lookup_error(doy_step: u32, tod_step: f64) -> f64 {
    let city = GeoPoint::new(40.63, 22.95).unwrap();
    let table = build_sza_table(city, doy_step, tod_step).unwrap();
    let mut rng = StdRng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..2000 {
        let doy = rng.gen_range(1..=300u32);
        let tod = rng.gen_range(0.0..22.0);
        let direct = solar_zenith_angle(&SolarContext::new(city, doy, tod).unwrap());
        worst = worst.max((direct - lookup_sza(&table, doy as f64, tod).unwrap()).abs());
    }
    worst
}

#[test]
fn lookup_error_shrinks_with_step() {
    let coarse = lookup_error(8, 2.0);
    let medium = lookup_error(4, 1.0);
    let fine = lookup_error(2, 0.5);
    assert!(medium < coarse && fine < medium, "{coarse} {medium} {fine}");
}

#[test]
fn default_granularity_error() {
    assert!(lookup_error(1, 0.5) < 0.5);
}
