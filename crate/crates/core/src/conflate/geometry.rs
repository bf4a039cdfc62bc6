//! Small polyline helpers shared by the conflation steps.

pub type Polyline = Vec<[f64; 2]>;

pub fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub fn length(line: &[[f64; 2]]) -> f64 {
    line.windows(2).map(|w| dist(w[0], w[1])).sum()
}

/// Cumulative arc length at every vertex.
pub fn stations(line: &[[f64; 2]]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(line.len());
    out.push(0.0);
    for w in line.windows(2) {
        acc += dist(w[0], w[1]);
        out.push(acc);
    }
    out
}

/// Position at normalized arc length `f` in [0, 1], given precomputed stations.
pub fn point_at(line: &[[f64; 2]], st: &[f64], f: f64) -> [f64; 2] {
    let total = *st.last().unwrap_or(&0.0);
    if line.len() == 1 || total <= 0.0 {
        return line[0];
    }
    let s = (f.clamp(0.0, 1.0)) * total;
    let k = st.partition_point(|&x| x < s).clamp(1, line.len() - 1);
    let (a, b) = (line[k - 1], line[k]);
    let seg = st[k] - st[k - 1];
    let t = if seg > 0.0 { (s - st[k - 1]) / seg } else { 0.0 };
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

/// `n ≥ 2` points at equal arc-length spacing.
pub fn resample(line: &[[f64; 2]], n: usize) -> Polyline {
    let st = stations(line);
    (0..n).map(|i| point_at(line, &st, i as f64 / (n - 1) as f64)).collect()
}

pub fn reversed(line: &[[f64; 2]]) -> Polyline {
    line.iter().rev().copied().collect()
}

/// Midline of two polylines running the same way: both are sampled at the
/// union of their vertices' normalized arc-length positions.
pub fn midline(left: &[[f64; 2]], right: &[[f64; 2]]) -> Polyline {
    let (sl, sr) = (stations(left), stations(right));
    let norm = |st: &[f64]| {
        let total = *st.last().unwrap_or(&0.0);
        st.iter().map(|s| if total > 0.0 { s / total } else { 0.0 }).collect::<Vec<f64>>()
    };
    let mut fs: Vec<f64> = norm(&sl).into_iter().chain(norm(&sr)).collect();
    fs.push(1.0);
    fs.sort_by(f64::total_cmp);
    fs.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    fs.into_iter()
        .map(|f| {
            let a = point_at(left, &sl, f);
            let b = point_at(right, &sr, f);
            [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
        })
        .collect()
}

/// Symmetric Hausdorff distance between two polylines, measured from the
/// vertices of each to the segments of the other.
pub fn hausdorff(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    let one_way = |from: &[[f64; 2]], to: &[[f64; 2]]| {
        from.iter()
            .map(|&p| {
                if to.len() == 1 {
                    return dist(p, to[0]);
                }
                to.windows(2)
                    .map(|w| crate::align::point_segment_distance(p, w[0], w[1]))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    one_way(a, b).max(one_way(b, a))
}

pub fn chord(line: &[[f64; 2]]) -> [f64; 2] {
    let (a, b) = (line[0], line[line.len() - 1]);
    [b[0] - a[0], b[1] - a[1]]
}
