//! Multi-phase token filtering.
//!
//! Per step, token maps are fused by thresholded averaging into a coarse
//! target map `C_t`. The `T` coarse maps are then laid out row-major on a
//! `G × G` step grid (`T = G²`), smoothed with a phase-weighted `k × k`
//! window (no padding) and averaged along one grid axis into fine target maps.
//!
//! Phase weights are kept as exact rationals. The window average only sees
//! the reduced integer ratios between weights, so rescaling every weight by a
//! positive factor cannot change a single output bit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scalar::Scalar;

/// Per pixel, the average of the token values above `beta`, or 0
/// where no token clears the threshold.
pub fn thresholded_average<S: Scalar>(maps: &[Grid<S>], beta: S) -> Result<Grid<S>> {
    if !(beta > S::zero() && beta < S::one()) {
        return Err(Error::Param(format!("beta must lie in (0, 1), got {beta}")));
    }
    let first = maps
        .first()
        .ok_or_else(|| Error::Param("thresholded average needs at least one map".into()))?;
    let (h, w) = first.dims();
    let mut sum = vec![S::zero(); h * w];
    let mut count = vec![0usize; h * w];
    for m in maps {
        first.ensure_same_dims(m)?;
        for (k, &v) in m.as_slice().iter().enumerate() {
            if v > beta {
                sum[k] = sum[k] + v;
                count[k] += 1;
            }
        }
    }
    let values = sum
        .into_iter()
        .zip(count)
        .map(|(s, c)| if c == 0 { S::zero() } else { s / S::of_usize(c) })
        .collect();
    Grid::from_vec(h, w, values)
}

/// Coarse target maps `C_t`, one per diffusion step.
#[derive(Clone, Debug, PartialEq)]
pub struct CoarseTargetStack<S> {
    pub maps: Vec<Grid<S>>,
}

impl<S> CoarseTargetStack<S> {
    pub fn steps(&self) -> usize {
        self.maps.len()
    }
}

/// Applies [`thresholded_average`] at every step. `steps[t]` holds the
/// localized token maps of step `t`.
pub fn build_coarse_stack<S: Scalar>(steps: &[Vec<Grid<S>>], beta: S) -> Result<CoarseTargetStack<S>> {
    let maps = steps
        .par_iter()
        .map(|maps| thresholded_average(maps, beta))
        .collect::<Result<Vec<_>>>()?;
    Ok(CoarseTargetStack { maps })
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Positive per-step weights held as `relative[t] · numer / denom`, with the
/// relative integers reduced to gcd 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhaseWeights {
    relative: Vec<u64>,
    numer: u128,
    denom: u128,
}

impl PhaseWeights {
    /// Weights proportional to the given positive integers, scaled to sum to 1.
    pub fn from_integers(weights: &[u64]) -> Result<Self> {
        if weights.is_empty() || weights.contains(&0) {
            return Err(Error::Param("weights must be a non-empty list of positive values".into()));
        }
        let g = weights.iter().fold(0u128, |g, &w| gcd(g, u128::from(w)));
        let relative: Vec<u64> = weights.iter().map(|&w| (u128::from(w) / g) as u64).collect();
        let total: u128 = relative.iter().map(|&w| u128::from(w)).sum();
        Ok(Self {
            relative,
            numer: 1,
            denom: total,
        })
    }

    /// Multiplies every weight by the positive rational `numer / denom`.
    pub fn scaled(&self, numer: u64, denom: u64) -> Result<Self> {
        if numer == 0 || denom == 0 {
            return Err(Error::Param("scale factor must be a positive ratio".into()));
        }
        let n = self.numer * u128::from(numer);
        let d = self.denom * u128::from(denom);
        let g = gcd(n, d);
        Ok(Self {
            relative: self.relative.clone(),
            numer: n / g,
            denom: d / g,
        })
    }

    pub fn len(&self) -> usize {
        self.relative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relative.is_empty()
    }

    /// Reduced integer ratios between the weights.
    pub fn relative(&self) -> &[u64] {
        &self.relative
    }

    pub fn weight(&self, t: usize) -> f64 {
        self.relative[t] as f64 * self.numer as f64 / self.denom as f64
    }

    pub fn to_vec(&self) -> Vec<f64> {
        (0..self.len()).map(|t| self.weight(t)).collect()
    }
}

/// `w_t ∝ 2t / (T + 1)` for `t = 1..=T`, renormalized to sum to 1, i.e.
/// `w_t = 2t / (T (T + 1))`.
pub fn phase_weights(steps: usize) -> Result<PhaseWeights> {
    if steps == 0 {
        return Err(Error::Param("need at least one step".into()));
    }
    PhaseWeights::from_integers(&(1..=steps as u64).collect::<Vec<_>>())
}

/// Weighted mean computed as `min + Σ w (x − min) / Σ w`, clamped to the
/// input range: exact for constant inputs and never outside `[min, max]`.
fn convex_mean<S: Scalar>(values: &[S], weights: &[S]) -> S {
    let lo = values.iter().copied().fold(S::infinity(), S::min);
    let hi = values.iter().copied().fold(S::neg_infinity(), S::max);
    if lo == hi {
        return lo;
    }
    let mut num = S::zero();
    let mut den = S::zero();
    for (&v, &w) in values.iter().zip(weights) {
        num = num + w * (v - lo);
        den = den + w;
    }
    (lo + num / den).max(lo).min(hi)
}

/// The `(G − k + 1)²` window-fused maps, row-major over window positions.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsensusGrid<S> {
    pub side: usize,
    pub maps: Vec<Grid<S>>,
}

impl<S> ConsensusGrid<S> {
    pub fn at(&self, i: usize, j: usize) -> &Grid<S> {
        &self.maps[i * self.side + j]
    }
}

/// Side of the square step grid for `steps`, if `steps` is a perfect square.
pub fn step_grid_side(steps: usize) -> Option<usize> {
    let g = (steps as f64).sqrt().round() as usize;
    (g * g == steps).then_some(g)
}

/// Weighted `window × window` consensus over the row-major step grid.
pub fn sliding_window_consensus<S: Scalar>(
    coarse: &CoarseTargetStack<S>,
    weights: &PhaseWeights,
    window: usize,
) -> Result<ConsensusGrid<S>> {
    let steps = coarse.steps();
    if weights.len() != steps {
        return Err(Error::Shape(format!("{} weights for {steps} steps", weights.len())));
    }
    let g = step_grid_side(steps)
        .ok_or_else(|| Error::Shape(format!("{steps} steps do not form a square grid")))?;
    if window == 0 || window > g {
        return Err(Error::Shape(format!("window {window} does not fit a {g}x{g} step grid")));
    }
    let (h, w) = coarse.maps[0].dims();
    for m in &coarse.maps {
        coarse.maps[0].ensure_same_dims(m)?;
    }
    let rel: Vec<S> = weights.relative().iter().map(|&v| S::of(v as f64)).collect();
    let side = g - window + 1;

    let maps = (0..side * side)
        .into_par_iter()
        .map(|pos| {
            let (i, j) = (pos / side, pos % side);
            let members: Vec<usize> = (i..i + window)
                .flat_map(|m| (j..j + window).map(move |n| m * g + n))
                .collect();
            let ws: Vec<S> = members.iter().map(|&t| rel[t]).collect();
            let mut vals = vec![S::zero(); members.len()];
            let mut out = Vec::with_capacity(h * w);
            for p in 0..h * w {
                for (slot, &t) in vals.iter_mut().zip(&members) {
                    *slot = coarse.maps[t].as_slice()[p];
                }
                out.push(convex_mean(&vals, &ws));
            }
            Grid::from_vec(h, w, out).expect("plane size")
        })
        .collect();
    Ok(ConsensusGrid { side, maps })
}

/// Which grid axis [`collapse_to_fine`] averages away.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CollapseAxis {
    /// Average over window rows; one fine map per window column.
    Row,
    /// Average over window columns; one fine map per window row, so each
    /// fine map covers a contiguous band of steps.
    #[default]
    Col,
}

impl std::str::FromStr for CollapseAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "row" => Ok(CollapseAxis::Row),
            "col" | "column" => Ok(CollapseAxis::Col),
            other => Err(Error::Param(format!("unknown collapse axis {other:?}"))),
        }
    }
}

/// Fine target maps `C̄_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct FineTargetStack<S> {
    pub maps: Vec<Grid<S>>,
}

/// Averages the consensus grid along `axis`.
pub fn collapse_to_fine<S: Scalar>(grid: &ConsensusGrid<S>, axis: CollapseAxis) -> FineTargetStack<S> {
    let side = grid.side;
    let (h, w) = grid.maps[0].dims();
    let ones = vec![S::one(); side];
    let maps = (0..side)
        .map(|k| {
            let members: Vec<&Grid<S>> = (0..side)
                .map(|i| match axis {
                    CollapseAxis::Row => grid.at(i, k),
                    CollapseAxis::Col => grid.at(k, i),
                })
                .collect();
            let mut vals = vec![S::zero(); side];
            Grid::from_fn(h, w, |r, c| {
                for (slot, m) in vals.iter_mut().zip(&members) {
                    *slot = m[(r, c)];
                }
                convex_mean(&vals, &ones)
            })
        })
        .collect();
    FineTargetStack { maps }
}
