//! Edge-aware refinement: cross/self attention merge and Canny edge
//! selection against the merged region.

use serde::{Deserialize, Serialize};

use crate::canny::{canny, DEFAULT_SIGMA};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::imgproc::{inner_boundary, inscribed_radius, resize, resize_bilinear, squared_distance_to, Upsample};
use crate::scalar::Scalar;
use crate::tensorio::ImageBuffer;

/// Bilinear upsample of a fine target map to the self-attention resolution.
pub fn upsample_fine<S: Scalar>(fine: &Grid<S>, height: usize, width: usize) -> Grid<S> {
    resize_bilinear(fine, height, width)
}

/// Averages the cross map with the self map restricted to the cross
/// map's support, then keep only values above `alpha`.
pub fn cross_self_merge<S: Scalar>(cross: &Grid<S>, self_map: &Grid<S>, alpha: S) -> Result<Grid<S>> {
    if !(alpha > S::zero() && alpha < S::one()) {
        return Err(Error::Param(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let half = S::of(0.5);
    cross.zip_map(self_map, |&c, &s| {
        if c <= S::zero() {
            return S::zero();
        }
        let v = (c + s) * half;
        if v > alpha {
            v
        } else {
            S::zero()
        }
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CombineMode {
    #[default]
    Max,
    Mean,
    /// The single region with the highest mean over its nonzero cells.
    Best,
}

impl std::str::FromStr for CombineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(CombineMode::Max),
            "mean" => Ok(CombineMode::Mean),
            "best" => Ok(CombineMode::Best),
            other => Err(Error::Param(format!("unknown combine mode {other:?}"))),
        }
    }
}

/// Folds the fused regions into one map.
pub fn combine_regions<S: Scalar>(regions: &[Grid<S>], mode: CombineMode) -> Result<Grid<S>> {
    let first = regions
        .first()
        .ok_or_else(|| Error::Shape("no regions to combine".into()))?;
    for r in regions {
        first.ensure_same_dims(r)?;
    }
    Ok(match mode {
        CombineMode::Max => {
            let mut out = first.clone();
            for r in &regions[1..] {
                out = out.zip_map(r, |a, b| a.max(*b))?;
            }
            out
        }
        CombineMode::Mean => {
            let n = S::of_usize(regions.len());
            let mut acc = Grid::<S>::zeros(first.height(), first.width());
            for r in regions {
                acc = acc.zip_map(r, |a: &S, b: &S| *a + *b)?;
            }
            acc.map(|v| *v / n)
        }
        CombineMode::Best => {
            let score = |g: &Grid<S>| {
                let (s, c) = g
                    .as_slice()
                    .iter()
                    .filter(|v| **v > S::zero())
                    .fold((0.0, 0usize), |(s, c), v| (s + v.as_f64(), c + 1));
                if c == 0 {
                    0.0
                } else {
                    s / c as f64
                }
            };
            let mut best = 0;
            for (k, r) in regions.iter().enumerate() {
                if score(r) > score(&regions[best]) {
                    best = k;
                }
            }
            regions[best].clone()
        }
    })
}

/// Canny edges of an image at its own resolution.
pub fn canny_edges(image: &ImageBuffer, low: f64, high: f64) -> Grid<bool> {
    canny(&image.luminance::<f32>(), low, high, DEFAULT_SIGMA)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeRule {
    /// Keep edges within `μ·l` of the region boundary.
    #[default]
    Boundary,
    /// Keep edges within `μ·l` of the deepest point of the region.
    Literal,
}

/// The region support at image resolution together with its geometry.
#[derive(Clone, Debug)]
pub struct RegionSupport {
    pub support: Grid<bool>,
    /// Largest inscribed-disk radius in pixels.
    pub inscribed: f64,
    pub center: (usize, usize),
}

/// Upsamples a combined region map to image size and thresholds it at
/// `0.5·alpha`.
pub fn region_support<S: Scalar>(
    region: &Grid<S>,
    image_dims: (usize, usize),
    alpha: f64,
    upsample: Upsample,
) -> Result<RegionSupport> {
    let up = resize(region, image_dims.0, image_dims.1, upsample);
    let support = up.threshold(S::of(0.5 * alpha));
    let (inscribed, center) = inscribed_radius(&support);
    let center = center.ok_or(Error::EmptyRegion)?;
    Ok(RegionSupport {
        support,
        inscribed,
        center,
    })
}

/// Edge selection against a precomputed support.
pub fn edge_select_support(edges: &Grid<bool>, region: &RegionSupport, mu: f64, rule: EdgeRule) -> Result<Grid<bool>> {
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(Error::Param(format!("mu must lie in (0, 1], got {mu}")));
    }
    edges.ensure_same_dims(&region.support)?;
    let reach = mu * region.inscribed;
    let reach2 = reach * reach;
    Ok(match rule {
        EdgeRule::Boundary => {
            let dist = squared_distance_to(&inner_boundary(&region.support));
            edges.zip_map(&dist, |&e, &d| e && d <= reach2)?
        }
        EdgeRule::Literal => {
            let (ci, cj) = (region.center.0 as f64, region.center.1 as f64);
            let (h, w) = edges.dims();
            Grid::from_fn(h, w, |i, j| {
                edges[(i, j)] && (i as f64 - ci).powi(2) + (j as f64 - cj).powi(2) <= reach2
            })
        }
    })
}

/// Keeps Canny edges that lie within `μ·l` of the combined region's
/// boundary, `l` being the region's largest inscribed-disk radius.
pub fn edge_select<S: Scalar>(
    edges: &Grid<bool>,
    region: &Grid<S>,
    mu: f64,
    alpha: f64,
    rule: EdgeRule,
) -> Result<Grid<bool>> {
    let support = region_support(region, edges.dims(), alpha, Upsample::Bilinear)?;
    edge_select_support(edges, &support, mu, rule)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_examples() {
        let zero = Grid::<f64>::zeros(4, 4);
        let s = Grid::filled(4, 4, 0.9);
        assert!(cross_self_merge(&zero, &s, 0.4).unwrap().is_all_zero());
        let c = Grid::filled(4, 4, 0.9);
        assert!(cross_self_merge(&c, &s, 0.4).unwrap().as_slice().iter().all(|v| *v == 0.9));

        let c = Grid::<f64>::from_vec(1, 2, vec![0.9, 0.5]).unwrap();
        let s = Grid::from_vec(1, 2, vec![0.1, 0.1]).unwrap();
        let r = cross_self_merge(&c, &s, 0.4).unwrap();
        assert!((r[(0, 0)] - 0.5).abs() < 1e-12);
        assert_eq!(r[(0, 1)], 0.0);
        assert!(matches!(cross_self_merge(&c, &s, 1.0), Err(Error::Param(_))));
    }

    #[test]
    fn combine_examples() {
        let a = Grid::from_fn(4, 4, |i, _| if i < 2 { 0.6 } else { 0.0 });
        let b = Grid::from_fn(4, 4, |i, _| if i >= 2 { 0.7 } else { 0.0 });
        let z = Grid::<f64>::zeros(4, 4);
        assert_eq!(combine_regions(&[a.clone(), a.clone(), a.clone()], CombineMode::Max).unwrap(), a);
        assert_eq!(combine_regions(&[z.clone(), a.clone(), z.clone()], CombineMode::Max).unwrap(), a);
        let u = combine_regions(&[a.clone(), b.clone()], CombineMode::Max).unwrap();
        assert_eq!(u.support().count(), 16);
        assert_eq!(combine_regions(&[a.clone(), b.clone()], CombineMode::Best).unwrap(), b);
        let m = combine_regions(&[a.clone(), b.clone()], CombineMode::Mean).unwrap();
        assert!((m[(0, 0)] - 0.3).abs() < 1e-12);
    }

    fn rect(h: usize, w: usize, top: usize, left: usize, bottom: usize, right: usize) -> Grid<bool> {
        Grid::from_fn(h, w, |i, j| i >= top && i < bottom && j >= left && j < right)
    }

    fn outline(h: usize, w: usize, top: usize, left: usize, bottom: usize, right: usize) -> Grid<bool> {
        Grid::from_fn(h, w, |i, j| {
            let inside = i >= top && i < bottom && j >= left && j < right;
            inside && (i == top || i == bottom - 1 || j == left || j == right - 1)
        })
    }

    fn support_of(mask: Grid<bool>) -> RegionSupport {
        let (inscribed, center) = inscribed_radius(&mask);
        RegionSupport {
            support: mask,
            inscribed,
            center: center.unwrap(),
        }
    }

    #[test]
    fn empty_edges_stay_empty() {
        let r = support_of(rect(64, 64, 10, 10, 50, 50));
        let e = Grid::filled(64, 64, false);
        assert_eq!(edge_select_support(&e, &r, 0.1, EdgeRule::Boundary).unwrap().count(), 0);
    }

    #[test]
    fn boundary_edges_always_survive() {
        let r = support_of(rect(64, 64, 10, 10, 50, 50));
        let e = outline(64, 64, 10, 10, 50, 50);
        let out = edge_select_support(&e, &r, 0.01, EdgeRule::Boundary).unwrap();
        assert_eq!(out, e);
    }

    #[test]
    fn offset_outline_kept_iff_within_band() {
        // Region 40x40 => inscribed radius 20; mu 0.1 => band 2 px.
        let r = support_of(rect(80, 80, 20, 20, 60, 60));
        assert_eq!(r.inscribed, 20.0);
        for d in 0..5usize {
            // Outline shifted outward by d pixels.
            let e = outline(80, 80, 20 - d, 20 - d, 60 + d, 60 + d);
            let out = edge_select_support(&e, &r, 0.1, EdgeRule::Boundary).unwrap();
            // Distance from the shifted outline to the inner boundary is d
            // along the straight sides (corners are farther).
            let kept_mid = out[(40, 20 - d)];
            assert_eq!(kept_mid, d as f64 <= 2.0, "d = {d}");
            assert!(out.is_subset_of(&e));
        }
    }

    #[test]
    fn mu_monotone_and_literal_rule() {
        let r = support_of(rect(80, 80, 20, 20, 60, 60));
        let e = Grid::from_fn(80, 80, |i, j| (i + 2 * j) % 7 == 0);
        let mut prev = 0;
        for mu in [0.05, 0.1, 0.2, 0.5, 1.0] {
            let n = edge_select_support(&e, &r, mu, EdgeRule::Boundary).unwrap().count();
            assert!(n >= prev);
            prev = n;
        }
        let lit = edge_select_support(&e, &r, 0.1, EdgeRule::Literal).unwrap();
        assert!(lit.indexed().filter(|(_, _, v)| **v).all(|(i, j, _)| {
            (i as f64 - 40.0).powi(2) + (j as f64 - 40.0).powi(2) <= 4.0
        }));
        assert!(matches!(
            edge_select_support(&e, &r, 0.0, EdgeRule::Boundary),
            Err(Error::Param(_))
        ));
    }

    #[test]
    fn empty_region_is_an_error() {
        let e = Grid::filled(8, 8, true);
        let region = Grid::<f64>::zeros(4, 4);
        assert!(matches!(
            edge_select(&e, &region, 0.1, 0.4, EdgeRule::Boundary),
            Err(Error::EmptyRegion)
        ));
    }
}
