//! Turning selected edges into a single clean mask: endpoint bridging,
//! exterior flood fill, and contour smoothing.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::imgproc::{
    dilate_disk, gaussian_blur, inner_boundary, label_components, largest_component, squared_distance_to, Connectivity,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PostConfig {
    /// Longest bridge as a fraction of the image diagonal.
    pub max_gap_frac: f64,
    /// Allowed squared residual per contour point for the spline fit.
    pub spline_smoothing: f64,
    /// Masks below this fraction of the image fall back to the region.
    pub min_area_frac: f64,
    pub multi_region: bool,
    pub dilate_radius: f64,
    pub blur_sigma: f64,
}

impl Default for PostConfig {
    fn default() -> Self {
        PostConfig {
            max_gap_frac: 0.05,
            spline_smoothing: 2.0,
            min_area_frac: 0.001,
            multi_region: false,
            dilate_radius: 2.0,
            blur_sigma: 1.5,
        }
    }
}

impl PostConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_gap_frac >= 0.0
            && self.max_gap_frac.is_finite()
            && self.spline_smoothing >= 0.0
            && self.spline_smoothing.is_finite()
            && (0.0..1.0).contains(&self.min_area_frac)
            && self.dilate_radius >= 0.0
            && self.blur_sigma >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Param(format!("invalid post-processing config {self:?}")))
        }
    }
}

/// Ordered boundary pixels `(row, col)`, consecutive points 8-adjacent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Contour {
    pub points: Vec<(usize, usize)>,
}

impl Contour {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of positions where the chain step direction changes.
    pub fn direction_changes(&self) -> usize {
        let n = self.points.len();
        if n < 3 {
            return 0;
        }
        let step = |k: usize| {
            let (a, b) = (self.points[k], self.points[(k + 1) % n]);
            (b.0 as isize - a.0 as isize, b.1 as isize - a.1 as isize)
        };
        (0..n).filter(|&k| step(k) != step((k + 1) % n)).count()
    }
}

/// Pixels of a digital straight segment from `a` to `b`, inclusive.
pub fn bresenham(a: (isize, isize), b: (isize, isize)) -> Vec<(isize, isize)> {
    let (mut i, mut j) = a;
    let di = (b.0 - a.0).abs();
    let dj = (b.1 - a.1).abs();
    let si = if b.0 >= a.0 { 1 } else { -1 };
    let sj = if b.1 >= a.1 { 1 } else { -1 };
    let mut err = dj - di;
    let mut out = Vec::with_capacity((di.max(dj) + 1) as usize);
    loop {
        out.push((i, j));
        if (i, j) == b {
            break;
        }
        let e2 = 2 * err;
        if e2 > -di {
            err -= di;
            j += sj;
        }
        if e2 < dj {
            err += dj;
            i += si;
        }
    }
    out
}

fn edge_neighbors(edges: &Grid<bool>, i: usize, j: usize) -> usize {
    let mut n = 0;
    for di in -1isize..=1 {
        for dj in -1isize..=1 {
            if (di, dj) != (0, 0) && edges.get(i as isize + di, j as isize + dj) == Some(&true) {
                n += 1;
            }
        }
    }
    n
}

/// Edge pixels with at most one 8-neighbour on the edge set.
pub fn endpoints(edges: &Grid<bool>) -> Vec<(usize, usize)> {
    edges
        .indexed()
        .filter(|(i, j, e)| **e && edge_neighbors(edges, *i, *j) <= 1)
        .map(|(i, j, _)| (i, j))
        .collect()
}

/// Joins open endpoints with straight segments, shortest gaps first, each
/// endpoint used at most once. Two endpoints of the same stroke are only
/// joined when the stroke is long relative to the gap, which closes arcs but
/// leaves straight runs alone.
pub fn bridge_endpoints(edges: &Grid<bool>, max_gap: f64) -> Grid<bool> {
    let ends = endpoints(edges);
    if ends.len() < 2 {
        return edges.clone();
    }
    let (labels, sizes) = label_components(edges, Connectivity::Eight);
    let max2 = max_gap * max_gap;
    let mut pairs = Vec::new();
    for a in 0..ends.len() {
        for b in a + 1..ends.len() {
            let (p, q) = (ends[a], ends[b]);
            let d2 = (p.0 as f64 - q.0 as f64).powi(2) + (p.1 as f64 - q.1 as f64).powi(2);
            if d2 > max2 {
                continue;
            }
            let (lp, lq) = (labels[p], labels[q]);
            if lp == lq && (sizes[lp as usize - 1] as f64) <= 3.0 * d2.sqrt() {
                continue;
            }
            pairs.push((d2, a, b));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used = vec![false; ends.len()];
    let mut out = edges.clone();
    for (_, a, b) in pairs {
        if used[a] || used[b] {
            continue;
        }
        used[a] = true;
        used[b] = true;
        let (p, q) = (ends[a], ends[b]);
        for (i, j) in bresenham((p.0 as isize, p.1 as isize), (q.0 as isize, q.1 as isize)) {
            out[(i as usize, j as usize)] = true;
        }
    }
    out
}

/// Exterior flood fill from the border over non-edge pixels
/// (4-connected). Returns the mask and the number of pixels dequeued.
pub fn edge_to_mask_counted(edges: &Grid<bool>) -> (Grid<bool>, usize) {
    let (h, w) = edges.dims();
    // 0 interior, 1 edge, 2 exterior
    let mut label = edges.map(|e| u8::from(*e));
    let mut queue = VecDeque::new();
    let seed = |i: usize, j: usize, label: &mut Grid<u8>, queue: &mut VecDeque<(usize, usize)>| {
        if label[(i, j)] == 0 {
            label[(i, j)] = 2;
            queue.push_back((i, j));
        }
    };
    for j in 0..w {
        seed(0, j, &mut label, &mut queue);
        seed(h - 1, j, &mut label, &mut queue);
    }
    for i in 0..h {
        seed(i, 0, &mut label, &mut queue);
        seed(i, w - 1, &mut label, &mut queue);
    }
    let mut visits = 0;
    while let Some((i, j)) = queue.pop_front() {
        visits += 1;
        for (di, dj) in Connectivity::Four.offsets() {
            let (ni, nj) = (i as isize + di, j as isize + dj);
            if label.get(ni, nj) == Some(&0) {
                label[(ni as usize, nj as usize)] = 2;
                queue.push_back((ni as usize, nj as usize));
            }
        }
    }
    (label.map(|l| *l != 2), visits)
}

/// Everything not reachable from the image border without crossing an edge.
pub fn edge_to_mask(edges: &Grid<bool>) -> Grid<bool> {
    if edges.is_empty() {
        return edges.clone();
    }
    edge_to_mask_counted(edges).0
}

const NEIGHBORS_CW: [(isize, isize); 8] = [(0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1)];

/// Moore-neighbour trace of the outer boundary of the component containing
/// the first foreground pixel in raster order.
pub fn trace_outer_contour(mask: &Grid<bool>) -> Contour {
    let Some(start) = mask.indexed().find(|(_, _, v)| **v).map(|(i, j, _)| (i, j)) else {
        return Contour { points: Vec::new() };
    };
    let fg = |i: isize, j: isize| mask.get(i, j) == Some(&true);
    let mut points = vec![start];
    // Direction index of the backtrack pixel relative to the current pixel.
    // West of the raster-first pixel is always background.
    let mut back = 0usize;
    let mut cur = start;
    let mut first_move = None;
    let limit = 4 * mask.len() + 8;
    for _ in 0..limit {
        let Some(d) = (1..=8).map(|k| (back + k) % 8).find(|&d| {
            let (di, dj) = NEIGHBORS_CW[d];
            fg(cur.0 as isize + di, cur.1 as isize + dj)
        }) else {
            break;
        };
        let (di, dj) = NEIGHBORS_CW[d];
        let nxt = ((cur.0 as isize + di) as usize, (cur.1 as isize + dj) as usize);
        if cur == start {
            if first_move == Some(nxt) {
                break;
            }
            first_move.get_or_insert(nxt);
        }
        // The new backtrack is the neighbour examined just before `nxt`,
        // expressed relative to `nxt`.
        let prev = NEIGHBORS_CW[(d + 7) % 8];
        let bpos = (cur.0 as isize + prev.0 - nxt.0 as isize, cur.1 as isize + prev.1 - nxt.1 as isize);
        back = NEIGHBORS_CW.iter().position(|o| *o == bpos).unwrap_or(0);
        cur = nxt;
        points.push(cur);
    }
    if points.len() > 1 && points.last() == Some(&start) {
        points.pop();
    }
    Contour { points }
}

fn spline_basis(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        (1.0 - t).powi(3) / 6.0,
        (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
        (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
        t3 / 6.0,
    ]
}

fn solve_dense(mut a: Vec<f64>, mut rhs: Vec<[f64; 2]>, n: usize) -> Option<Vec<[f64; 2]>> {
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))?;
        if a[piv * n + col].abs() < 1e-12 {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            rhs.swap(piv, col);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[r * n + k] -= f * a[col * n + k];
            }
            rhs[r][0] -= f * rhs[col][0];
            rhs[r][1] -= f * rhs[col][1];
        }
    }
    let mut x = vec![[0.0; 2]; n];
    for r in (0..n).rev() {
        let mut s = rhs[r];
        for k in r + 1..n {
            s[0] -= a[r * n + k] * x[k][0];
            s[1] -= a[r * n + k] * x[k][1];
        }
        x[r] = [s[0] / a[r * n + r], s[1] / a[r * n + r]];
    }
    Some(x)
}

/// Closed uniform cubic B-spline through `m` control points.
#[derive(Clone, Debug)]
pub struct ClosedSpline {
    pub control: Vec<[f64; 2]>,
}

impl ClosedSpline {
    pub fn eval(&self, u: f64) -> [f64; 2] {
        let m = self.control.len();
        let u = u.rem_euclid(m as f64);
        let k = (u.floor() as usize).min(m - 1);
        let b = spline_basis(u - k as f64);
        let mut p = [0.0; 2];
        for (r, w) in b.iter().enumerate() {
            let c = self.control[(k + m + r - 1) % m];
            p[0] += w * c[0];
            p[1] += w * c[1];
        }
        p
    }

    pub fn sample(&self, count: usize) -> Vec<[f64; 2]> {
        let m = self.control.len() as f64;
        (0..count).map(|s| self.eval(s as f64 * m / count as f64)).collect()
    }
}

const MAX_KNOTS: usize = 256;

fn fit_with(points: &[[f64; 2]], m: usize) -> Option<(ClosedSpline, f64)> {
    let n = points.len();
    let mut ata = vec![0.0; m * m];
    let mut atb = vec![[0.0; 2]; m];
    let rows: Vec<(usize, [f64; 4])> = (0..n)
        .map(|i| {
            let u = i as f64 * m as f64 / n as f64;
            let k = (u.floor() as usize).min(m - 1);
            (k, spline_basis(u - k as f64))
        })
        .collect();
    for (i, (k, b)) in rows.iter().enumerate() {
        let idx = [0, 1, 2, 3].map(|r| (k + m + r - 1) % m);
        for r in 0..4 {
            for c in 0..4 {
                ata[idx[r] * m + idx[c]] += b[r] * b[c];
            }
            atb[idx[r]][0] += b[r] * points[i][0];
            atb[idx[r]][1] += b[r] * points[i][1];
        }
    }
    for d in 0..m {
        ata[d * m + d] += 1e-9;
    }
    let control = solve_dense(ata, atb, m)?;
    let spline = ClosedSpline { control };
    let resid = rows
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let p = spline.eval(i as f64 * m as f64 / n as f64);
            (p[0] - points[i][0]).powi(2) + (p[1] - points[i][1]).powi(2)
        })
        .sum();
    Some((spline, resid))
}

/// Least-squares closed cubic B-spline with the fewest knots (doubling from
/// 8, capped) whose squared residual is at most `smoothing` per point.
pub fn fit_closed_spline(points: &[[f64; 2]], smoothing: f64) -> Option<ClosedSpline> {
    let n = points.len();
    if n < 8 {
        return None;
    }
    let cap = (n / 2).clamp(4, MAX_KNOTS);
    let mut m = 8.min(cap);
    let mut best = None;
    loop {
        let fit = fit_with(points, m);
        if let Some((spline, resid)) = fit {
            let done = resid <= smoothing * n as f64;
            best = Some(spline);
            if done {
                break;
            }
        }
        if m >= cap {
            break;
        }
        m = (m * 2).min(cap);
    }
    best
}

/// Pixels whose centres fall inside the polygon under the even-odd rule.
pub fn fill_polygon(poly: &[[f64; 2]], height: usize, width: usize) -> Grid<bool> {
    let mut out = Grid::filled(height, width, false);
    let n = poly.len();
    if n < 3 {
        return out;
    }
    let mut xs = Vec::new();
    for i in 0..height {
        let y = i as f64;
        xs.clear();
        for k in 0..n {
            let (a, b) = (poly[k], poly[(k + 1) % n]);
            if (a[0] > y) != (b[0] > y) {
                xs.push(a[1] + (y - a[0]) * (b[1] - a[1]) / (b[0] - a[0]));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            let lo = pair[0].ceil().max(0.0);
            let hi = pair[1].floor().min(width as f64 - 1.0);
            let mut j = lo;
            while j <= hi {
                out[(i, j as usize)] = true;
                j += 1.0;
            }
        }
    }
    out
}

fn smooth_component(component: &Grid<bool>, smoothing: f64) -> Grid<bool> {
    let contour = trace_outer_contour(component);
    let points: Vec<[f64; 2]> = contour.points.iter().map(|&(i, j)| [i as f64, j as f64]).collect();
    let Some(spline) = fit_closed_spline(&points, smoothing) else {
        return component.clone();
    };
    let poly = spline.sample((4 * points.len()).max(64));
    let filled = fill_polygon(&poly, component.height(), component.width());
    // The spline passes through boundary pixel centres, so keep the traced
    // outline itself in the mask.
    let mut out = filled;
    for &(i, j) in &contour.points {
        out[(i, j)] = true;
    }
    edge_to_mask(&out)
}

/// Dilate, blur and re-threshold, then replace each component by the fill of
/// a smoothing spline fitted to its outer contour.
pub fn smooth_mask(mask: &Grid<bool>, cfg: &PostConfig) -> Grid<bool> {
    if mask.count() == 0 {
        return mask.clone();
    }
    let dilated = dilate_disk(mask, cfg.dilate_radius);
    let soft = gaussian_blur(&dilated.to_scalar::<f64>(), cfg.blur_sigma);
    let firm = soft.threshold(0.5);
    let (labels, sizes) = label_components(&firm, Connectivity::Eight);
    let mut out = Grid::filled(mask.height(), mask.width(), false);
    for (k, _) in sizes.iter().enumerate() {
        let id = k as u32 + 1;
        let comp = labels.map(|l| *l == id);
        let s = smooth_component(&comp, cfg.spline_smoothing);
        out = out.or(&s).expect("same dims");
    }
    out
}

/// Edge-to-mask fill that treats the region as a prior. Support pixels deeper
/// than `band` and stretches of the support outline with no edge within
/// `band` act as walls, so the exterior only reaches into the band and stops
/// at the edges there. Growth outside the support is limited to the band.
pub fn edge_to_mask_guided(edges: &Grid<bool>, support: &Grid<bool>, band: f64) -> Result<Grid<bool>> {
    edges.ensure_same_dims(support)?;
    if edges.is_empty() {
        return Ok(edges.clone());
    }
    let depth = squared_distance_to(&support.map(|v| !*v));
    let near_edge = squared_distance_to(edges);
    let outline = inner_boundary(support);
    let band2 = band * band;
    let (h, w) = edges.dims();
    let walls = Grid::from_fn(h, w, |i, j| {
        edges[(i, j)] || depth[(i, j)] > band2 || (outline[(i, j)] && near_edge[(i, j)] > band2)
    });
    let reach = squared_distance_to(support);
    edge_to_mask(&walls).zip_map(&reach, |&m, &d| m && d <= band2)
}

/// Result of [`finalize`].
#[derive(Clone, Debug)]
pub struct Finalized {
    pub mask: Grid<bool>,
    pub used_fallback: bool,
}

/// Bridge, fill, keep the main component and smooth. With `guide_band` the
/// fill is [`edge_to_mask_guided`] against `support`. Falls back to the
/// region support when the fill collapses.
pub fn finalize(
    edges: &Grid<bool>,
    support: &Grid<bool>,
    guide_band: Option<f64>,
    cfg: &PostConfig,
) -> Result<Finalized> {
    cfg.validate()?;
    edges.ensure_same_dims(support)?;
    let (h, w) = edges.dims();
    let diag = ((h * h + w * w) as f64).sqrt();
    let bridged = bridge_endpoints(edges, cfg.max_gap_frac * diag);
    let filled = match guide_band {
        Some(band) => edge_to_mask_guided(&bridged, support, band)?,
        None => edge_to_mask(&bridged),
    };
    let kept = if cfg.multi_region {
        filled
    } else {
        largest_component(&filled)
    };
    let min_area = cfg.min_area_frac * (h * w) as f64;
    if kept.count() as f64 >= min_area && kept.count() > 0 {
        let mask = smooth_mask(&kept, cfg);
        if mask.count() as f64 >= min_area {
            return Ok(Finalized {
                mask,
                used_fallback: false,
            });
        }
    }
    let base = if cfg.multi_region {
        support.clone()
    } else {
        largest_component(support)
    };
    Ok(Finalized {
        mask: smooth_mask(&base, cfg),
        used_fallback: true,
    })
}

/// Intersection over union; two empty masks score 1.
pub fn iou(a: &Grid<bool>, b: &Grid<bool>) -> Result<f64> {
    a.ensure_same_dims(b)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        inter += usize::from(*x && *y);
        union += usize::from(*x || *y);
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}
