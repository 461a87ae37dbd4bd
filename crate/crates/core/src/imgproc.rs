//! Small image-processing kernels shared by refinement and post-processing:
//! resampling, Gaussian blur, exact Euclidean distance transforms, binary
//! morphology and connected components.

use std::collections::VecDeque;

use crate::grid::Grid;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Upsample {
    #[default]
    Bilinear,
    Nearest,
}

impl std::str::FromStr for Upsample {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "bilinear" => Ok(Upsample::Bilinear),
            "nearest" => Ok(Upsample::Nearest),
            other => Err(crate::Error::Param(format!("unknown upsampling mode {other:?}"))),
        }
    }
}

/// Source sample positions and weights for one output axis under the
/// half-pixel-centre convention.
fn axis_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let x = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let x0 = x.floor() as usize;
            let x1 = (x0 + 1).min(src - 1);
            (x0, x1, x - x0 as f64)
        })
        .collect()
}

pub fn resize_bilinear<S: Scalar>(src: &Grid<S>, height: usize, width: usize) -> Grid<S> {
    let rows = axis_taps(src.height(), height);
    let cols = axis_taps(src.width(), width);
    let lo = src.as_slice().iter().copied().fold(S::infinity(), S::min);
    let hi = src.max_value().max(lo);
    Grid::from_fn(height, width, |i, j| {
        let (r0, r1, fr) = rows[i];
        let (c0, c1, fc) = cols[j];
        let (fr, fc) = (S::of(fr), S::of(fc));
        let one = S::one();
        let top = src[(r0, c0)] * (one - fc) + src[(r0, c1)] * fc;
        let bot = src[(r1, c0)] * (one - fc) + src[(r1, c1)] * fc;
        (top * (one - fr) + bot * fr).max(lo).min(hi)
    })
}

pub fn resize_nearest<T: Clone>(src: &Grid<T>, height: usize, width: usize) -> Grid<T> {
    let (sh, sw) = src.dims();
    Grid::from_fn(height, width, |i, j| {
        let si = ((i * sh) / height).min(sh - 1);
        let sj = ((j * sw) / width).min(sw - 1);
        src[(si, sj)].clone()
    })
}

pub fn resize<S: Scalar>(src: &Grid<S>, height: usize, width: usize, mode: Upsample) -> Grid<S> {
    match mode {
        Upsample::Bilinear => resize_bilinear(src, height, width),
        Upsample::Nearest => resize_nearest(src, height, width),
    }
}

pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Separable Gaussian blur with replicated borders.
pub fn gaussian_blur<S: Scalar>(src: &Grid<S>, sigma: f64) -> Grid<S> {
    let k: Vec<S> = gaussian_kernel(sigma).into_iter().map(S::of).collect();
    let r = (k.len() / 2) as isize;
    let (h, w) = src.dims();
    let clampi = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let tmp = Grid::from_fn(h, w, |i, j| {
        k.iter()
            .enumerate()
            .map(|(t, &kv)| kv * src[(i, clampi(j as isize + t as isize - r, w))])
            .fold(S::zero(), |a, b| a + b)
    });
    Grid::from_fn(h, w, |i, j| {
        k.iter()
            .enumerate()
            .map(|(t, &kv)| kv * tmp[(clampi(i as isize + t as isize - r, h), j)])
            .fold(S::zero(), |a, b| a + b)
    })
}

const INF: f64 = 1e20;

/// 1-D squared distance transform of a sampled function (lower envelope of
/// parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = -INF;
    z[1] = INF;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] {
                if k == 0 {
                    v[0] = q;
                    z[0] = -INF;
                    z[1] = INF;
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = INF;
                break;
            }
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        *o = (q as f64 - p as f64).powi(2) + f[p];
    }
}

/// Squared Euclidean distance from every cell to the nearest `true` cell.
/// Cells are at infinity (1e20) when there is no feature at all.
pub fn squared_distance_to(features: &Grid<bool>) -> Grid<f64> {
    let (h, w) = features.dims();
    let mut d = features.map(|b| if *b { 0.0 } else { INF });
    let n = h.max(w);
    let (mut f, mut out, mut v, mut z) = (vec![0.0; n], vec![0.0; n], vec![0usize; n], vec![0.0; n + 1]);
    for j in 0..w {
        for i in 0..h {
            f[i] = d[(i, j)];
        }
        edt_1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for i in 0..h {
            d[(i, j)] = out[i];
        }
    }
    for i in 0..h {
        for j in 0..w {
            f[j] = d[(i, j)];
        }
        edt_1d(&f[..w], &mut out[..w], &mut v, &mut z);
        for j in 0..w {
            d[(i, j)] = out[j];
        }
    }
    d
}

/// Foreground cells with at least one 4-neighbour outside the foreground
/// (the image border counts as outside).
pub fn inner_boundary(mask: &Grid<bool>) -> Grid<bool> {
    let (h, w) = mask.dims();
    Grid::from_fn(h, w, |i, j| {
        if !mask[(i, j)] {
            return false;
        }
        let (i, j) = (i as isize, j as isize);
        [(i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)]
            .iter()
            .any(|&(a, b)| !mask.get(a, b).copied().unwrap_or(false))
    })
}

/// Largest inscribed-disk radius: the maximum distance from a foreground cell
/// to the nearest background cell, with everything outside the image treated
/// as background.
pub fn inscribed_radius(mask: &Grid<bool>) -> (f64, Option<(usize, usize)>) {
    let (h, w) = mask.dims();
    // Pad by one so the image exterior acts as background.
    let padded = Grid::from_fn(h + 2, w + 2, |i, j| {
        i > 0 && j > 0 && i <= h && j <= w && mask[(i - 1, j - 1)]
    });
    let d = squared_distance_to(&padded.map(|b| !*b));
    let mut best = (0.0, None);
    for i in 0..h {
        for j in 0..w {
            if mask[(i, j)] {
                let v = d[(i + 1, j + 1)].sqrt();
                if v > best.0 {
                    best = (v, Some((i, j)));
                }
            }
        }
    }
    best
}

/// Offsets of a digital disk of the given radius.
pub fn disk_offsets(radius: f64) -> Vec<(isize, isize)> {
    let r = radius.floor() as isize;
    let r2 = radius * radius;
    let mut out = Vec::new();
    for di in -r..=r {
        for dj in -r..=r {
            if (di * di + dj * dj) as f64 <= r2 {
                out.push((di, dj));
            }
        }
    }
    out
}

/// Binary dilation with a disk structuring element.
pub fn dilate_disk(mask: &Grid<bool>, radius: f64) -> Grid<bool> {
    let d = squared_distance_to(mask);
    let r2 = radius * radius;
    d.map(|v| *v <= r2)
}

const N4: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
const N8: [(isize, isize); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    pub(crate) fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &N4,
            Connectivity::Eight => &N8,
        }
    }
}

/// Labels foreground components (labels start at 1; 0 is background) and
/// returns the label grid with the size of each component.
pub fn label_components(mask: &Grid<bool>, conn: Connectivity) -> (Grid<u32>, Vec<usize>) {
    let (h, w) = mask.dims();
    let mut labels = Grid::filled(h, w, 0u32);
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for i in 0..h {
        for j in 0..w {
            if !mask[(i, j)] || labels[(i, j)] != 0 {
                continue;
            }
            let label = sizes.len() as u32 + 1;
            let mut size = 0;
            labels[(i, j)] = label;
            queue.push_back((i, j));
            while let Some((ci, cj)) = queue.pop_front() {
                size += 1;
                for &(di, dj) in conn.offsets() {
                    let (ni, nj) = (ci as isize + di, cj as isize + dj);
                    if mask.get(ni, nj) == Some(&true) && labels[(ni as usize, nj as usize)] == 0 {
                        labels[(ni as usize, nj as usize)] = label;
                        queue.push_back((ni as usize, nj as usize));
                    }
                }
            }
            sizes.push(size);
        }
    }
    (labels, sizes)
}

/// Keeps only the largest 4-connected component (first one on ties).
pub fn largest_component(mask: &Grid<bool>) -> Grid<bool> {
    let (labels, sizes) = label_components(mask, Connectivity::Four);
    let Some((best, _)) = sizes.iter().enumerate().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0))) else {
        return mask.clone();
    };
    let keep = best as u32 + 1;
    labels.map(|l| *l == keep)
}
