//! Pose-guided localization of token maps.
//!
//! Star token maps are normalized, translated so their attention centroid
//! lands on the matching keypoint, and clipped to a disk around it. Fleshy
//! token maps are translated onto an anchor point expressed as an affine
//! combination of keypoints. Bilateral tokens (shoulders, arms, ...) are
//! split between the two sides before calibration so that each side gets its
//! own map.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::anatomy::{is_body25, skeleton_neighbors, star_keypoints};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scalar::Scalar;
use crate::tensorio::{Keypoint, KeypointSet};

const DEFAULT_ANCHORS: &str = include_str!("../data/anchors.json");

/// A token's saliency map on the attention grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionMap<S> {
    pub values: Grid<S>,
    /// `(row, col)` cell the map is registered to.
    pub anchor: Option<(usize, usize)>,
    /// Radial constraint radius in grid cells, once applied.
    pub radius: Option<S>,
}

impl<S: Scalar> RegionMap<S> {
    pub fn new(values: Grid<S>) -> Self {
        Self {
            values,
            anchor: None,
            radius: None,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values.dims()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapStatus {
    Ok,
    /// The map was all zero and has been left unchanged.
    Degenerate,
}

/// Rescales a map so its maximum becomes 1.
pub fn normalize_map<S: Scalar>(map: &RegionMap<S>) -> (RegionMap<S>, MapStatus) {
    let max = map.values.max_value();
    if max <= S::zero() {
        return (map.clone(), MapStatus::Degenerate);
    }
    let mut out = map.clone();
    if max != S::one() {
        out.values = map.values.map(|v| *v / max);
    }
    (out, MapStatus::Ok)
}

fn centroid_f64<S: Scalar>(values: &Grid<S>) -> Option<(f64, f64)> {
    let (mut m, mut sr, mut sc) = (0.0, 0.0, 0.0);
    for (i, j, v) in values.indexed() {
        let v = v.as_f64();
        m += v;
        sr += v * i as f64;
        sc += v * j as f64;
    }
    (m > 0.0).then(|| (sr / m, sc / m))
}

/// Value-weighted mean cell, rounded to the nearest cell.
pub fn attention_centroid<S: Scalar>(map: &RegionMap<S>) -> Result<(usize, usize)> {
    let (r, c) = centroid_f64(&map.values).ok_or(Error::DegenerateMap)?;
    let (h, w) = map.dims();
    Ok((
        (r.round() as usize).min(h - 1),
        (c.round() as usize).min(w - 1),
    ))
}

/// Image pixel to grid cell by uniform scaling: `col = floor(x / width * W)`.
pub fn pixel_to_cell(x: f64, y: f64, image_dims: (u32, u32), grid_dims: (usize, usize)) -> (usize, usize) {
    let (iw, ih) = (f64::from(image_dims.0), f64::from(image_dims.1));
    let (gh, gw) = grid_dims;
    let col = ((x / iw * gw as f64).floor().max(0.0) as usize).min(gw - 1);
    let row = ((y / ih * gh as f64).floor().max(0.0) as usize).min(gh - 1);
    (row, col)
}

/// Shifts a grid by whole cells, zero-filling the vacated cells.
pub fn translate<S: Scalar>(values: &Grid<S>, drow: isize, dcol: isize) -> Grid<S> {
    let (h, w) = values.dims();
    Grid::from_fn(h, w, |i, j| {
        values
            .get(i as isize - drow, j as isize - dcol)
            .copied()
            .unwrap_or_else(S::zero)
    })
}

/// A localized map plus how it was obtained.
#[derive(Clone, Debug, PartialEq)]
pub struct Calibrated<S> {
    pub map: RegionMap<S>,
    /// Keypoint (star) or anchor rule label (fleshy) the map was registered to.
    pub target: String,
    /// True when the target was unavailable and the map kept its own centroid.
    pub fallback: bool,
}

fn translate_to<S: Scalar>(
    map: &RegionMap<S>,
    target: Option<(usize, usize)>,
) -> Result<(RegionMap<S>, bool)> {
    let centroid = attention_centroid(map)?;
    match target {
        Some(cell) => {
            let dr = cell.0 as isize - centroid.0 as isize;
            let dc = cell.1 as isize - centroid.1 as isize;
            let values = if dr == 0 && dc == 0 {
                map.values.clone()
            } else {
                translate(&map.values, dr, dc)
            };
            Ok((
                RegionMap {
                    values,
                    anchor: Some(cell),
                    radius: map.radius,
                },
                false,
            ))
        }
        None => Ok((
            RegionMap {
                values: map.values.clone(),
                anchor: Some(centroid),
                radius: map.radius,
            },
            true,
        )),
    }
}

/// Translates a star map onto its keypoint's grid cell. A missing or
/// low-confidence keypoint leaves the map in place with the anchor at its own
/// centroid.
pub fn calibrate_star<S: Scalar>(
    map: &RegionMap<S>,
    keypoint: Option<&Keypoint>,
    image_dims: (u32, u32),
    confidence_floor: f64,
) -> Result<Calibrated<S>> {
    let cell = keypoint
        .filter(|k| k.confidence >= confidence_floor)
        .map(|k| pixel_to_cell(k.x, k.y, image_dims, map.dims()));
    let (map, fallback) = translate_to(map, cell)?;
    if fallback {
        debug!("star map left uncalibrated: keypoint unavailable");
    }
    Ok(Calibrated {
        map,
        target: String::new(),
        fallback,
    })
}

/// One affine anchor rule: `Σ weight · keypoint`, weights summing to 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnchorRule(pub Vec<(String, f64)>);

impl AnchorRule {
    /// Pixel position of the anchor, when every referenced keypoint is
    /// present with at least `floor` confidence.
    pub fn resolve(&self, keypoints: &KeypointSet, floor: f64) -> Option<(f64, f64)> {
        let mut x = 0.0;
        let mut y = 0.0;
        for (name, w) in &self.0 {
            let k = keypoints.confident(name, floor)?;
            x += w * k.x;
            y += w * k.y;
        }
        Some((x, y))
    }

    fn label(&self) -> String {
        self.0.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>().join("+")
    }
}

/// Fleshy token name to one anchor rule per side (one for midline tokens).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnchorTable(pub BTreeMap<String, Vec<AnchorRule>>);

impl AnchorTable {
    pub fn builtin() -> &'static AnchorTable {
        static TABLE: OnceLock<AnchorTable> = OnceLock::new();
        TABLE.get_or_init(|| AnchorTable::from_json(DEFAULT_ANCHORS).expect("built-in anchor table is valid"))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let table: AnchorTable = serde_json::from_str(text)?;
        for (token, rules) in &table.0 {
            if rules.is_empty() {
                return Err(Error::Format(format!("anchor rule list for {token} is empty")));
            }
            for rule in rules {
                let total: f64 = rule.0.iter().map(|(_, w)| w).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::Format(format!("{token}: anchor weights sum to {total}, not 1")));
                }
                if let Some((bad, _)) = rule.0.iter().find(|(n, _)| !is_body25(n)) {
                    return Err(Error::Format(format!("{token}: {bad:?} is not a BODY-25 keypoint")));
                }
            }
        }
        Ok(table)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn rules(&self, token: &str) -> Option<&[AnchorRule]> {
        self.0
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(token))
            .map(|(_, v)| v.as_slice())
    }
}

struct Side {
    label: String,
    cell: Option<(f64, f64)>,
}

/// Splits a map between sides by nearest side cell and calibrates each part.
fn localize_sides<S: Scalar>(map: &RegionMap<S>, sides: &[Side]) -> Result<Vec<Calibrated<S>>> {
    if sides.len() == 1 {
        let cell = sides[0].cell.map(|(r, c)| (r as usize, c as usize));
        let (map, fallback) = translate_to(map, cell)?;
        return Ok(vec![Calibrated {
            map,
            target: sides[0].label.clone(),
            fallback,
        }]);
    }
    let centroid = centroid_f64(&map.values).ok_or(Error::DegenerateMap)?;
    let known: Vec<(f64, f64)> = sides.iter().filter_map(|s| s.cell).collect();
    // Split points: known sides keep their cell, a missing side mirrors a known
    // one through the attention centroid.
    let split: Vec<(f64, f64)> = sides
        .iter()
        .map(|s| {
            s.cell.unwrap_or_else(|| match known.first() {
                Some(&(r, c)) => (2.0 * centroid.0 - r, 2.0 * centroid.1 - c),
                None => centroid,
            })
        })
        .collect();
    if known.is_empty() {
        let (m, _) = translate_to(map, None)?;
        return Ok(vec![Calibrated {
            map: m,
            target: sides.iter().map(|s| s.label.as_str()).collect::<Vec<_>>().join("|"),
            fallback: true,
        }]);
    }

    let (h, w) = map.dims();
    let mut parts: Vec<Grid<S>> = vec![Grid::zeros(h, w); sides.len()];
    for (i, j, v) in map.values.indexed() {
        if v.is_zero() {
            continue;
        }
        let d2 = |p: &(f64, f64)| (i as f64 - p.0).powi(2) + (j as f64 - p.1).powi(2);
        let mut best = 0;
        for k in 1..split.len() {
            if d2(&split[k]) < d2(&split[best]) {
                best = k;
            }
        }
        parts[best][(i, j)] = *v;
    }

    let mut out = Vec::new();
    for (side, part) in sides.iter().zip(parts) {
        if part.is_all_zero() {
            continue;
        }
        let sub = RegionMap {
            values: part,
            anchor: None,
            radius: map.radius,
        };
        let cell = side.cell.map(|(r, c)| (r as usize, c as usize));
        let (m, fallback) = translate_to(&sub, cell)?;
        out.push(Calibrated {
            map: m,
            target: side.label.clone(),
            fallback,
        });
    }
    Ok(out)
}

fn cell_of(p: (f64, f64), image_dims: (u32, u32), grid: (usize, usize)) -> (f64, f64) {
    let (r, c) = pixel_to_cell(p.0, p.1, image_dims, grid);
    (r as f64, c as f64)
}

/// Calibrates a star token map onto every side's keypoint.
pub fn localize_star<S: Scalar>(
    map: &RegionMap<S>,
    token: &str,
    keypoints: &KeypointSet,
    confidence_floor: f64,
) -> Result<Vec<Calibrated<S>>> {
    let dims = (keypoints.image_width(), keypoints.image_height());
    let sides: Vec<Side> = star_keypoints(token)
        .iter()
        .map(|name| Side {
            label: name.to_string(),
            cell: keypoints
                .confident(name, confidence_floor)
                .map(|k| cell_of((k.x, k.y), dims, map.dims())),
        })
        .collect();
    if sides.is_empty() {
        return Err(Error::Value(format!("{token} is not a star token")));
    }
    localize_sides(map, &sides)
}

/// Translates a fleshy token map onto its anchor point(s).
pub fn anchor_fleshy<S: Scalar>(
    map: &RegionMap<S>,
    table: &AnchorTable,
    keypoints: &KeypointSet,
    token: &str,
    confidence_floor: f64,
) -> Result<Vec<Calibrated<S>>> {
    let rules = table
        .rules(token)
        .ok_or_else(|| Error::Value(format!("no anchor rule for fleshy token {token}")))?;
    let dims = (keypoints.image_width(), keypoints.image_height());
    let sides: Vec<Side> = rules
        .iter()
        .map(|rule| Side {
            label: rule.label(),
            cell: rule
                .resolve(keypoints, confidence_floor)
                .map(|p| cell_of(p, dims, map.dims())),
        })
        .collect();
    localize_sides(map, &sides)
}

/// Zeroes every cell farther than `r` from `center`.
pub fn radial_constrain<S: Scalar>(map: &RegionMap<S>, center: (usize, usize), r: S) -> Result<RegionMap<S>> {
    if r.is_nan() || r <= S::zero() {
        return Err(Error::Param(format!("radius must be positive, got {r}")));
    }
    let (h, w) = map.dims();
    if center.0 >= h || center.1 >= w {
        return Err(Error::Param(format!("center {center:?} outside {h}x{w} grid")));
    }
    let r2 = r * r;
    let (m, n) = (S::of_usize(center.0), S::of_usize(center.1));
    let values = Grid::from_fn(h, w, |i, j| {
        let di = S::of_usize(i) - m;
        let dj = S::of_usize(j) - n;
        let v = map.values[(i, j)];
        // Comparing squared distances keeps the disk test exact for integer offsets.
        if di * di + dj * dj <= r2 {
            v
        } else {
            S::zero()
        }
    });
    Ok(RegionMap {
        values,
        anchor: Some(center),
        radius: Some(r),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RadiusMode {
    Min,
    #[default]
    Average,
    Max,
}

impl std::str::FromStr for RadiusMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(RadiusMode::Min),
            "average" | "ave" | "mean" => Ok(RadiusMode::Average),
            "max" => Ok(RadiusMode::Max),
            other => Err(Error::Param(format!("unknown radius mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for RadiusMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RadiusMode::Min => "min",
            RadiusMode::Average => "average",
            RadiusMode::Max => "max",
        })
    }
}

/// Bone lengths in grid cells from `keypoint` to its present skeleton
/// neighbours.
pub fn bone_lengths(
    keypoint: &str,
    keypoints: &KeypointSet,
    grid_dims: (usize, usize),
    confidence_floor: f64,
) -> Vec<f64> {
    let Some(k) = keypoints.confident(keypoint, confidence_floor) else {
        return Vec::new();
    };
    let sx = grid_dims.1 as f64 / f64::from(keypoints.image_width());
    let sy = grid_dims.0 as f64 / f64::from(keypoints.image_height());
    skeleton_neighbors(keypoint)
        .filter_map(|n| keypoints.confident(n, confidence_floor))
        .map(|o| ((o.x - k.x) * sx).hypot((o.y - k.y) * sy))
        .collect()
}

/// Radius from the bone lengths around a keypoint, or `default_r` when the
/// keypoint or all of its neighbours are missing.
pub fn choose_radius_from_lengths(lengths: &[f64], mode: RadiusMode, default_r: f64) -> f64 {
    if lengths.is_empty() {
        return default_r;
    }
    let r = match mode {
        RadiusMode::Min => lengths.iter().copied().fold(f64::INFINITY, f64::min),
        RadiusMode::Max => lengths.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        RadiusMode::Average => lengths.iter().sum::<f64>() / lengths.len() as f64,
    };
    if r > 0.0 {
        r
    } else {
        default_r
    }
}

pub fn choose_radius(
    keypoint: &str,
    keypoints: &KeypointSet,
    mode: RadiusMode,
    grid_dims: (usize, usize),
    default_r: f64,
    confidence_floor: f64,
) -> f64 {
    choose_radius_from_lengths(
        &bone_lengths(keypoint, keypoints, grid_dims, confidence_floor),
        mode,
        default_r,
    )
}
