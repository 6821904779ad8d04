//! NOAA solar position calculator (Meeus-based), as published in the NOAA
//! solar calculation spreadsheet. Accurate to well under 0.05 degrees for
//! dates between 1900 and 2100.

fn rad(d: f64) -> f64 {
    d.to_radians()
}

fn deg(r: f64) -> f64 {
    r.to_degrees()
}

/// Julian day number (with fraction) of a Gregorian calendar UTC instant.
pub fn julian_day(year: i32, month: u32, day: u32, hour_utc: f64) -> f64 {
    let (mut y, mut m) = (year as f64, month as f64);
    if month <= 2 {
        y -= 1.0;
        m += 12.0;
    }
    let a = (y / 100.0).floor();
    let b = 2.0 - a + (a / 4.0).floor();
    (365.25 * (y + 4716.0)).floor() + (30.6001 * (m + 1.0)).floor() + day as f64 + b - 1524.5
        + hour_utc / 24.0
}

/// Solar declination (degrees) and equation of time (minutes) at a Julian day.
pub fn declination_and_eot(jd: f64) -> (f64, f64) {
    let t = (jd - 2451545.0) / 36525.0;
    let l0 = (280.46646 + t * (36000.76983 + 0.0003032 * t)).rem_euclid(360.0);
    let m = 357.52911 + t * (35999.05029 - 0.0001537 * t);
    let e = 0.016708634 - t * (0.000042037 + 0.0000001267 * t);
    let c = rad(m).sin() * (1.914602 - t * (0.004817 + 0.000014 * t))
        + rad(2.0 * m).sin() * (0.019993 - 0.000101 * t)
        + rad(3.0 * m).sin() * 0.000289;
    let true_long = l0 + c;
    let omega = 125.04 - 1934.136 * t;
    let app_long = true_long - 0.00569 - 0.00478 * rad(omega).sin();
    let eps0 = 23.0 + (26.0 + (21.448 - t * (46.815 + t * (0.00059 - t * 0.001813))) / 60.0) / 60.0;
    let eps = eps0 + 0.00256 * rad(omega).cos();
    let decl = deg((rad(eps).sin() * rad(app_long).sin()).asin());

    let y = (rad(eps) / 2.0).tan().powi(2);
    let (l0r, mr) = (rad(l0), rad(m));
    let eot = 4.0
        * deg(y * (2.0 * l0r).sin() - 2.0 * e * mr.sin()
            + 4.0 * e * y * mr.sin() * (2.0 * l0r).cos()
            - 0.5 * y * y * (4.0 * l0r).sin()
            - 1.25 * e * e * (2.0 * mr).sin());
    (decl, eot)
}

/// Solar zenith angle in degrees, without refraction correction.
pub fn solar_zenith(year: i32, month: u32, day: u32, hour_utc: f64, lat: f64, lon: f64) -> f64 {
    let jd = julian_day(year, month, day, hour_utc);
    let (decl, eot) = declination_and_eot(jd);
    let true_solar_min = (hour_utc * 60.0 + eot + 4.0 * lon).rem_euclid(1440.0);
    let mut hour_angle = true_solar_min / 4.0 - 180.0;
    if hour_angle < -180.0 {
        hour_angle += 360.0;
    }
    let cos_zen = rad(lat).sin() * rad(decl).sin()
        + rad(lat).cos() * rad(decl).cos() * rad(hour_angle).cos();
    deg(cos_zen.clamp(-1.0, 1.0).acos())
}

/// Day of year (1-based) of a Gregorian date.
pub fn day_of_year(year: i32, month: u32, day: u32) -> u32 {
    let leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
    let cumulative = [0, 31, 59, 90, 120, 151, 181, 212, 243, 273, 304, 334];
    let mut doy = cumulative[(month - 1) as usize] + day;
    if leap && month > 2 {
        doy += 1;
    }
    doy
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn j2000_epoch() {
        assert_eq!(julian_day(2000, 1, 1, 12.0), 2451545.0);
    }

    #[test]
    fn june_solstice_declination() {
        let (decl, _) = declination_and_eot(julian_day(2016, 6, 20, 22.5));
        assert!((decl - 23.44).abs() < 0.01, "{decl}");
    }

    #[test]
    fn november_eot_peak() {
        let (_, eot) = declination_and_eot(julian_day(2016, 11, 3, 12.0));
        assert!((eot - 16.4).abs() < 0.2, "{eot}");
    }
}
