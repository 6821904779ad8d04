//! Connected components by explicit flood fill.

/// Labels set pixels of a row-major binary image. Background is `0`, components
/// are numbered from `1` in raster order of their first pixel.
pub fn flood_fill_labels(width: usize, height: usize, set: &[bool], eight: bool) -> (Vec<u32>, u32) {
    assert_eq!(set.len(), width * height);
    let mut labels = vec![0u32; set.len()];
    let mut next = 0u32;
    let offsets: &[(i64, i64)] = if eight {
        &[(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]
    } else {
        &[(0, -1), (-1, 0), (1, 0), (0, 1)]
    };
    for start in 0..set.len() {
        if !set[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        let mut stack = vec![start];
        while let Some(p) = stack.pop() {
            let (x, y) = ((p % width) as i64, (p / width) as i64);
            for &(dx, dy) in offsets {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                    continue;
                }
                let q = ny as usize * width + nx as usize;
                if set[q] && labels[q] == 0 {
                    labels[q] = next;
                    stack.push(q);
                }
            }
        }
    }
    (labels, next)
}

/// Groups pixel indices by label, components ordered by smallest member index.
pub fn partition(labels: &[u32]) -> Vec<Vec<usize>> {
    let mut groups: std::collections::BTreeMap<u32, Vec<usize>> = Default::default();
    for (i, &l) in labels.iter().enumerate() {
        if l != 0 {
            groups.entry(l).or_default().push(i);
        }
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort_by_key(|g| g[0]);
    out
}
