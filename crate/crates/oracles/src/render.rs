//! Synthetic photographs with known ground truth.

/// RGB bytes of a `width × height` scene: sky above row `sky_rows`, brown
/// ground below. Sky pixels use G = 160, B = 255 and an R channel dithered so
/// the mean of R/G over the sky equals `rg` to within 1/(160·pixels).
pub fn sky_scene(width: usize, height: usize, sky_rows: usize, rg: f64) -> Vec<u8> {
    const G: f64 = 160.0;
    let target = rg * G;
    assert!((0.0..=255.0).contains(&target), "rg {rg} not renderable");
    let mut out = Vec::with_capacity(3 * width * height);
    let mut carry = 0.0;
    for y in 0..height {
        for _ in 0..width {
            if y < sky_rows {
                let want = target + carry;
                let r = want.round().clamp(0.0, 255.0);
                carry = want - r;
                out.extend_from_slice(&[r as u8, G as u8, 255]);
            } else {
                out.extend_from_slice(&[110, 80, 40]);
            }
        }
    }
    out
}

/// A dark scene with no bright bluish pixels anywhere.
pub fn night_scene(width: usize, height: usize) -> Vec<u8> {
    [12u8, 14, 30].repeat(width * height)
}

/// Filter photo: light paper with dark disks at the given centres/radii.
/// A pixel is dark when its centre lies within the radius.
pub fn filter_scene(width: usize, height: usize, disks: &[(f64, f64, f64)]) -> Vec<u8> {
    let mut out = Vec::with_capacity(3 * width * height);
    for y in 0..height {
        for x in 0..width {
            let inside = disks
                .iter()
                .any(|&(cx, cy, r)| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r);
            out.extend_from_slice(if inside { &[60, 50, 45] } else { &[235, 232, 225] });
        }
    }
    out
}

/// Number of pixel centres inside a disk, by enumeration.
pub fn disk_pixel_count(cx: f64, cy: f64, r: f64) -> usize {
    let (x0, x1) = ((cx - r).floor() as i64, (cx + r).ceil() as i64);
    let (y0, y1) = ((cy - r).floor() as i64, (cy + r).ceil() as i64);
    (y0..=y1)
        .flat_map(|y| (x0..=x1).map(move |x| (x, y)))
        .filter(|&(x, y)| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r)
        .count()
}
