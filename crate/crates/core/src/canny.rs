//! Canny edge detector: Gaussian blur, Sobel gradients, non-maximum
//! suppression along the quantized gradient direction, and hysteresis.

use std::collections::VecDeque;

use crate::grid::Grid;
use crate::imgproc::gaussian_blur;
use crate::scalar::Scalar;

pub const DEFAULT_SIGMA: f64 = 1.4;

fn sobel<S: Scalar>(img: &Grid<S>) -> (Grid<S>, Grid<S>) {
    let (h, w) = img.dims();
    let at = |i: isize, j: isize| {
        img[(
            i.clamp(0, h as isize - 1) as usize,
            j.clamp(0, w as isize - 1) as usize,
        )]
    };
    let two = S::of(2.0);
    let gx = Grid::from_fn(h, w, |i, j| {
        let (i, j) = (i as isize, j as isize);
        (at(i - 1, j + 1) + two * at(i, j + 1) + at(i + 1, j + 1))
            - (at(i - 1, j - 1) + two * at(i, j - 1) + at(i + 1, j - 1))
    });
    let gy = Grid::from_fn(h, w, |i, j| {
        let (i, j) = (i as isize, j as isize);
        (at(i + 1, j - 1) + two * at(i + 1, j) + at(i + 1, j + 1))
            - (at(i - 1, j - 1) + two * at(i - 1, j) + at(i - 1, j + 1))
    });
    (gx, gy)
}

/// Binary Canny edges of an 8-bit-range luminance image. Thresholds apply to
/// the L2 Sobel magnitude.
pub fn canny<S: Scalar>(gray: &Grid<S>, low: f64, high: f64, sigma: f64) -> Grid<bool> {
    let (h, w) = gray.dims();
    let blurred = gaussian_blur(gray, sigma);
    let (gx, gy) = sobel(&blurred);
    let mag = gx.zip_map(&gy, |a, b| a.hypot(*b)).expect("same dims");
    let tan22 = S::of(0.414_213_562_373_095_1);
    let tan67 = S::of(2.414_213_562_373_095);

    // Non-maximum suppression. Ties keep the first pixel along the gradient
    // direction, which yields one-pixel-wide ridges on symmetric steps.
    let low_s = S::of(low);
    let high_s = S::of(high);
    let mut state = Grid::filled(h, w, 0u8); // 0 none, 1 weak, 2 strong
    for i in 0..h {
        for j in 0..w {
            let m = mag[(i, j)];
            if m <= low_s || m.is_zero() {
                continue;
            }
            let (x, y) = (gx[(i, j)], gy[(i, j)]);
            let (ax, ay) = (x.abs(), y.abs());
            let (di, dj): (isize, isize) = if ay <= ax * tan22 {
                (0, 1)
            } else if ay >= ax * tan67 {
                (1, 0)
            } else if (x > S::zero()) == (y > S::zero()) {
                (1, 1)
            } else {
                (1, -1)
            };
            let (ii, jj) = (i as isize, j as isize);
            let before = mag.get(ii - di, jj - dj).copied().unwrap_or_else(S::zero);
            let after = mag.get(ii + di, jj + dj).copied().unwrap_or_else(S::zero);
            if m > before && m >= after {
                state[(i, j)] = if m >= high_s { 2 } else { 1 };
            }
        }
    }

    let mut edges = Grid::filled(h, w, false);
    let mut queue = VecDeque::new();
    for (i, j, s) in state.indexed() {
        if *s == 2 {
            queue.push_back((i, j));
        }
    }
    for &(i, j) in &queue {
        edges[(i, j)] = true;
    }
    while let Some((i, j)) = queue.pop_front() {
        for di in -1isize..=1 {
            for dj in -1isize..=1 {
                let (ni, nj) = (i as isize + di, j as isize + dj);
                if state.get(ni, nj) == Some(&1) && !edges[(ni as usize, nj as usize)] {
                    edges[(ni as usize, nj as usize)] = true;
                    queue.push_back((ni as usize, nj as usize));
                }
            }
        }
    }
    edges
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_no_edges() {
        let img = Grid::filled(32, 32, 128.0f32);
        assert_eq!(canny(&img, 50.0, 150.0, DEFAULT_SIGMA).count(), 0);
    }

    #[test]
    fn vertical_step_gives_one_thin_line() {
        let img = Grid::from_fn(40, 64, |_, j| if j < 32 { 0.0f64 } else { 255.0 });
        let e = canny(&img, 50.0, 150.0, DEFAULT_SIGMA);
        for i in 0..40 {
            let cols: Vec<usize> = (0..64).filter(|&j| e[(i, j)]).collect();
            assert_eq!(cols.len(), 1, "row {i}: {cols:?}");
            assert!(cols[0] == 31 || cols[0] == 32);
        }
        for i in 0..39 {
            for j in 0..63 {
                assert!(!(e[(i, j)] && e[(i + 1, j)] && e[(i, j + 1)] && e[(i + 1, j + 1)]));
            }
        }
    }

    #[test]
    fn weak_edges_need_a_strong_neighbour() {
        // A faint step whose magnitude sits between the thresholds disappears.
        let img = Grid::from_fn(20, 20, |_, j| if j < 10 { 100.0f64 } else { 125.0 });
        let e = canny(&img, 20.0, 1000.0, DEFAULT_SIGMA);
        assert_eq!(e.count(), 0);
        let e = canny(&img, 20.0, 40.0, DEFAULT_SIGMA);
        assert!(e.count() >= 20);
    }
}
