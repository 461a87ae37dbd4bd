//! Synthetic fixtures: a rendered figure with pose keypoints, per-step token
//! attention that follows a convergence / stabilization / divergence
//! schedule, segment-level self-attention maps, and exact ground-truth masks.
//!
//! This is a parametric stand-in for attention dumped from a real diffusion
//! model, used as the oracle for the test suites. All randomness comes from
//! ChaCha8 (`rand_chacha`) seeded with a `u64`, with one stream per purpose,
//! so a `(preset, seed, profile)` triple reproduces the same bytes on every
//! platform.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::anatomy::{skeleton_neighbors, star_keypoints, TokenKind};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::imgproc::gaussian_blur;
use crate::instruction::{RuleTable, TokenGroup};
use crate::localization::{bone_lengths, AnchorTable};
use crate::pipeline::{ground_truth_file_name, Fixture};
use crate::tensorio::{
    write_attention_stack, write_keypoints, write_mask_png, write_png, write_self_attention_stack, AttentionStack,
    ImageBuffer, Keypoint, KeypointSet, SelfAttentionStack,
};

/// Cross-attention grid side.
pub const ATTN_GRID: usize = 16;
/// Self-attention grid side.
pub const SELF_GRID: usize = 32;
pub const SELF_MAPS: usize = 8;
pub const STEPS: usize = 100;

/// Instructions every scene carries ground truth for.
pub const INSTRUCTIONS: [&str; 4] = [
    "belly-length blouse",
    "waist-length shirt",
    "knee-length skirt",
    "ankle-length dress",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosePreset {
    Standing,
    Seated,
    Articulated,
}

impl PosePreset {
    pub const ALL: [PosePreset; 3] = [PosePreset::Standing, PosePreset::Seated, PosePreset::Articulated];
}

impl FromStr for PosePreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "standing" => Ok(PosePreset::Standing),
            "seated" => Ok(PosePreset::Seated),
            "articulated" => Ok(PosePreset::Articulated),
            other => Err(Error::Param(format!("unknown pose preset {other:?}"))),
        }
    }
}

impl fmt::Display for PosePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PosePreset::Standing => "standing",
            PosePreset::Seated => "seated",
            PosePreset::Articulated => "articulated",
        })
    }
}

/// Timing and noise of the three attention phases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhaseProfile {
    pub phase1_frac: f64,
    pub phase2_frac: f64,
    pub phase3_frac: f64,
    /// Additive noise amplitude per phase.
    pub jitter: [f64; 3],
    /// Blob spread inflation at step 0, decaying to none by the end of
    /// phase I.
    pub scatter: f64,
    /// Random centre offset at step 0 in attention cells, decaying over
    /// phase I.
    pub wander: f64,
    /// Largest σ growth of a phase III over-shoot at the last step.
    pub overshoot: f64,
    /// Largest phase III centre drift in attention cells.
    pub drift: f64,
    /// Per-step chance of a spurious blob on a neighbouring structure in
    /// phases I and III.
    pub spurious: f64,
    /// Largest per-token shift of the phase boundaries, in steps.
    pub boundary_spread: usize,
    /// Enforce the observed phase-length bands.
    pub banded: bool,
    pub seed: u64,
}

impl Default for PhaseProfile {
    fn default() -> Self {
        PhaseProfile {
            phase1_frac: 0.3,
            phase2_frac: 0.3,
            phase3_frac: 0.4,
            jitter: [0.12, 0.04, 0.12],
            scatter: 3.0,
            wander: 1.0,
            overshoot: 1.2,
            drift: 1.5,
            spurious: 0.15,
            boundary_spread: 4,
            banded: true,
            seed: 0,
        }
    }
}

impl PhaseProfile {
    pub fn with_seed(seed: u64) -> Self {
        PhaseProfile {
            seed,
            ..Self::default()
        }
    }

    /// Phase fractions drawn inside the observed bands.
    pub fn sampled(seed: u64) -> Self {
        Self::default().resampled(seed)
    }

    /// This profile with its phase fractions redrawn inside the observed
    /// bands.
    pub fn resampled(&self, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(7);
        let p1 = rng.random_range(0.25..0.40);
        let p2 = rng.random_range(0.26..0.34);
        PhaseProfile {
            phase1_frac: p1,
            phase2_frac: p2,
            phase3_frac: 1.0 - p1 - p2,
            banded: true,
            seed,
            ..self.clone()
        }
    }

    /// Removes the stochastic noise (jitter, wander, drift, spurious blobs)
    /// and keeps the deterministic phase structure.
    pub fn zero_jitter(mut self) -> Self {
        self.jitter = [0.0; 3];
        self.wander = 0.0;
        self.drift = 0.0;
        self.spurious = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fr = [self.phase1_frac, self.phase2_frac, self.phase3_frac];
        if fr.iter().any(|f| !(0.0..=1.0).contains(f)) || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Param(format!("phase fractions {fr:?} must be in [0, 1] and sum to 1")));
        }
        if self.banded {
            let bands = [(0.15, 0.45), (0.25, 0.35), (0.10, 0.50)];
            for (k, (f, (lo, hi))) in fr.iter().zip(bands).enumerate() {
                if *f < lo - 1e-12 || *f > hi + 1e-12 {
                    return Err(Error::Param(format!("phase {} fraction {f} outside [{lo}, {hi}]", k + 1)));
                }
            }
        }
        if self.jitter.iter().any(|j| !(0.0..1.0).contains(j)) {
            return Err(Error::Param("jitter amplitudes must lie in [0, 1)".into()));
        }
        for (name, v) in [
            ("scatter", self.scatter),
            ("wander", self.wander),
            ("overshoot", self.overshoot),
            ("drift", self.drift),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Param(format!("{name} must be non-negative")));
            }
        }
        if !(0.0..=1.0).contains(&self.spurious) {
            return Err(Error::Param("spurious must be a probability".into()));
        }
        Ok(())
    }
}

/// Shape of the emulated attention, fixed per scene.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttentionStyle {
    /// Star blob σ as a fraction of the mean bone length around the joint.
    pub star_spread: f64,
    /// Multiplier on every fleshy blob σ.
    pub fleshy_spread: f64,
    /// Cross-attention gain on cells with no body coverage; covered cells
    /// get 1.
    pub off_body_gain: f64,
    /// Range of self-attention levels drawn per region fully inside the
    /// target.
    pub self_level: (f64, f64),
    /// Blur of the self-attention maps in 32×32 cells.
    pub self_blur: f64,
}

impl Default for AttentionStyle {
    fn default() -> Self {
        AttentionStyle {
            star_spread: 0.35,
            fleshy_spread: 1.0,
            off_body_gain: 1.0,
            self_level: (0.8, 1.0),
            self_blur: 0.6,
        }
    }
}

/// Body part labels in [`SyntheticScene::parts`].
pub mod part {
    pub const BACKGROUND: u8 = 0;
    pub const HEAD: u8 = 1;
    pub const NECK: u8 = 2;
    pub const TORSO: u8 = 3;
    pub const UPPER_ARM: u8 = 4;
    pub const FOREARM: u8 = 5;
    pub const HAND: u8 = 6;
    pub const THIGH: u8 = 7;
    pub const SHANK: u8 = 8;
    pub const FOOT: u8 = 9;
    pub const COUNT: usize = 10;
}

/// Appearance segment labels in [`SyntheticScene::segments`].
pub mod segment {
    pub const BACKGROUND: u8 = 0;
    pub const SKIN: u8 = 1;
    pub const TOP: u8 = 2;
    pub const BOTTOM: u8 = 3;
    pub const COUNT: usize = 4;
}

/// Anisotropic Gaussian on the attention grid, in cell coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Blob {
    /// `(row, col)`; cell `i` is centred at `i`.
    pub center: (f64, f64),
    /// Unit direction `(drow, dcol)` of the long axis.
    pub axis: (f64, f64),
    pub sigma_along: f64,
    pub sigma_across: f64,
}

impl Blob {
    fn widened(self, f: f64) -> Blob {
        Blob {
            sigma_along: self.sigma_along * f,
            sigma_across: self.sigma_across * f,
            ..self
        }
    }

    fn value(&self, i: f64, j: f64, scale: f64, offset: (f64, f64)) -> f64 {
        let (dr, dc) = (i - self.center.0 - offset.0, j - self.center.1 - offset.1);
        let along = dr * self.axis.0 + dc * self.axis.1;
        let across = -dr * self.axis.1 + dc * self.axis.0;
        let q = (along / (self.sigma_along * scale)).powi(2) + (across / (self.sigma_across * scale)).powi(2);
        (-0.5 * q).exp()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TokenShape {
    Blobs(Vec<Blob>),
    /// Coverage fraction per cell of a garment region.
    Region(Grid<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TokenSpec {
    pub name: String,
    pub kind: TokenKind,
    pub shape: TokenShape,
    /// Cell centres of neighbouring structures the token can misfire on.
    pub distractors: Vec<(f64, f64)>,
}

/// Skeleton neighbours of the joints nearest to each blob, in cells.
fn neighbour_cells(fig: &Figure, blobs: &[Blob], size: f64) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for b in blobs {
        let nearest = fig
            .kp
            .iter()
            .filter(|(n, _)| skeleton_neighbors(n).next().is_some())
            .map(|(n, p)| {
                let c = to_cell(*p, size);
                (n, (c.0 - b.center.0).hypot(c.1 - b.center.1))
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(n, _)| *n);
        if let Some(n) = nearest {
            for m in skeleton_neighbors(n) {
                if let Some((_, p)) = fig.kp.iter().find(|(k, _)| *k == m) {
                    let c = to_cell(*p, size);
                    if !out.contains(&c) {
                        out.push(c);
                    }
                }
            }
        }
    }
    out
}

impl TokenSpec {
    /// Mean σ of the token's blobs, or one cell for regions.
    fn mean_sigma(&self) -> f64 {
        match &self.shape {
            TokenShape::Blobs(b) if !b.is_empty() => {
                b.iter().map(|x| (x.sigma_along * x.sigma_across).sqrt()).sum::<f64>() / b.len() as f64
            }
            _ => 1.0,
        }
    }

    /// The Phase II (stable) map.
    pub fn tight(&self) -> Grid<f64> {
        self.render(1.0, (0.0, 0.0), 1.0)
    }

    fn render(&self, scale: f64, offset: (f64, f64), gain: f64) -> Grid<f64> {
        match &self.shape {
            TokenShape::Blobs(blobs) => Grid::from_fn(ATTN_GRID, ATTN_GRID, |i, j| {
                let v = blobs
                    .iter()
                    .map(|b| b.value(i as f64, j as f64, scale, offset))
                    .fold(0.0, f64::max);
                (v * gain).min(1.0)
            }),
            TokenShape::Region(r) => {
                let spread = ((scale - 1.0).max(0.0)) * 1.2;
                let base = if spread > 0.0 {
                    let b = gaussian_blur(r, spread);
                    let peak = b.max_value();
                    if peak > 0.0 {
                        let m = r.max_value() / peak;
                        b.map(|v| v * m)
                    } else {
                        b
                    }
                } else {
                    r.clone()
                };
                base.map(|v| (v * gain).clamp(0.0, 1.0))
            }
        }
    }
}

/// A rendered scene with everything needed to emit a fixture.
#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub preset: PosePreset,
    pub seed: u64,
    pub size: usize,
    pub keypoints: KeypointSet,
    pub image: ImageBuffer,
    pub parts: Grid<u8>,
    pub segments: Grid<u8>,
    pub tokens: Vec<TokenSpec>,
    pub style: AttentionStyle,
    /// Instruction the self-attention maps are queried for.
    pub target: String,
}

fn base_pose(preset: PosePreset) -> Vec<(&'static str, f64, f64)> {
    let mut kp = vec![
        ("Nose", 0.50, 0.115),
        ("REye", 0.485, 0.10),
        ("LEye", 0.515, 0.10),
        ("REar", 0.465, 0.105),
        ("LEar", 0.535, 0.105),
        ("Neck", 0.50, 0.20),
        ("RShoulder", 0.385, 0.215),
        ("LShoulder", 0.615, 0.215),
        ("RElbow", 0.355, 0.36),
        ("LElbow", 0.645, 0.36),
        ("RWrist", 0.345, 0.50),
        ("LWrist", 0.655, 0.50),
        ("MidHip", 0.50, 0.52),
        ("RHip", 0.44, 0.52),
        ("LHip", 0.56, 0.52),
        ("RKnee", 0.44, 0.72),
        ("LKnee", 0.56, 0.72),
        ("RAnkle", 0.44, 0.91),
        ("LAnkle", 0.56, 0.91),
        ("RHeel", 0.445, 0.925),
        ("LHeel", 0.555, 0.925),
        ("RBigToe", 0.42, 0.95),
        ("LBigToe", 0.58, 0.95),
        ("RSmallToe", 0.405, 0.945),
        ("LSmallToe", 0.595, 0.945),
    ];
    let mut set = |name: &str, x: f64, y: f64| {
        for e in kp.iter_mut() {
            if e.0 == name {
                e.1 = x;
                e.2 = y;
            }
        }
    };
    match preset {
        PosePreset::Standing => {}
        PosePreset::Seated => {
            for (n, x, y) in [
                ("Nose", 0.50, 0.165),
                ("REye", 0.485, 0.15),
                ("LEye", 0.515, 0.15),
                ("REar", 0.465, 0.155),
                ("LEar", 0.535, 0.155),
                ("Neck", 0.50, 0.25),
                ("RShoulder", 0.385, 0.265),
                ("LShoulder", 0.615, 0.265),
                ("RElbow", 0.34, 0.41),
                ("LElbow", 0.66, 0.41),
                ("RWrist", 0.39, 0.56),
                ("LWrist", 0.61, 0.56),
                ("MidHip", 0.50, 0.57),
                ("RHip", 0.44, 0.57),
                ("LHip", 0.56, 0.57),
                ("RKnee", 0.36, 0.66),
                ("LKnee", 0.64, 0.66),
                ("RAnkle", 0.37, 0.88),
                ("LAnkle", 0.63, 0.88),
                ("RHeel", 0.375, 0.895),
                ("LHeel", 0.625, 0.895),
                ("RBigToe", 0.35, 0.925),
                ("LBigToe", 0.65, 0.925),
                ("RSmallToe", 0.335, 0.92),
                ("LSmallToe", 0.665, 0.92),
            ] {
                set(n, x, y);
            }
        }
        PosePreset::Articulated => {
            for (n, x, y) in [
                ("RElbow", 0.25, 0.28),
                ("RWrist", 0.31, 0.13),
                ("LElbow", 0.70, 0.34),
                ("LWrist", 0.58, 0.44),
                ("RKnee", 0.40, 0.66),
                ("RAnkle", 0.47, 0.82),
                ("RHeel", 0.475, 0.835),
                ("RBigToe", 0.45, 0.86),
                ("RSmallToe", 0.435, 0.855),
                ("LKnee", 0.57, 0.72),
                ("LAnkle", 0.58, 0.91),
                ("LHeel", 0.585, 0.925),
                ("LBigToe", 0.60, 0.95),
                ("LSmallToe", 0.615, 0.945),
            ] {
                set(n, x, y);
            }
        }
    }
    kp
}

type P = (f64, f64);

fn sub(a: P, b: P) -> P {
    (a.0 - b.0, a.1 - b.1)
}

fn norm(a: P) -> f64 {
    a.0.hypot(a.1)
}

fn lerp(a: P, b: P, t: f64) -> P {
    (a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t)
}

/// Squared distance from `p` to segment `ab`.
fn seg_dist2(p: P, a: P, b: P) -> f64 {
    let ab = sub(b, a);
    let ap = sub(p, a);
    let len2 = ab.0 * ab.0 + ab.1 * ab.1;
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((ap.0 * ab.0 + ap.1 * ab.1) / len2).clamp(0.0, 1.0)
    };
    let q = (a.0 + ab.0 * t, a.1 + ab.1 * t);
    (p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)
}

fn in_polygon(p: P, poly: &[P]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for k in 0..n {
        let (a, b) = (poly[k], poly[(k + 1) % n]);
        if (a.1 > p.1) != (b.1 > p.1) && p.0 < a.0 + (p.1 - a.1) * (b.0 - a.0) / (b.1 - a.1) {
            inside = !inside;
        }
    }
    inside
}

/// Joint angle in degrees at `b` between `b→a` and `b→c`.
pub fn joint_angle(a: P, b: P, c: P) -> f64 {
    let (u, v) = (sub(a, b), sub(c, b));
    ((u.0 * v.0 + u.1 * v.1) / (norm(u) * norm(v))).clamp(-1.0, 1.0).acos().to_degrees()
}

struct Figure {
    kp: Vec<(&'static str, P)>,
    size: f64,
}

impl Figure {
    fn at(&self, name: &str) -> P {
        self.kp.iter().find(|e| e.0 == name).map(|e| e.1).expect("base pose has every keypoint")
    }

    fn hand(&self, side: char) -> P {
        let w = self.at(&format!("{side}Wrist"));
        let e = self.at(&format!("{side}Elbow"));
        (1.25 * w.0 - 0.25 * e.0, 1.25 * w.1 - 0.25 * e.1)
    }

    fn torso(&self) -> Vec<P> {
        let s = self.size;
        let (rs, ls) = (self.at("RShoulder"), self.at("LShoulder"));
        let (rh, lh, mh) = (self.at("RHip"), self.at("LHip"), self.at("MidHip"));
        let top = self.at("Neck").1 + 0.005 * s;
        let bottom = mh.1 + 0.025 * s;
        vec![
            (rs.0 - 0.01 * s, top.max(rs.1 - 0.01 * s)),
            (ls.0 + 0.01 * s, top.max(ls.1 - 0.01 * s)),
            (lh.0 + 0.035 * s, bottom),
            (rh.0 - 0.035 * s, bottom),
        ]
    }

    /// Body part at pixel centre `p`; later parts paint over earlier ones.
    fn part_at(&self, p: P, torso: &[P]) -> u8 {
        let s = self.size;
        let mut label = part::BACKGROUND;
        let caps = |a: &str, b: &str, r: f64| seg_dist2(p, self.at(a), self.at(b)) <= (r * s).powi(2);
        for side in ['R', 'L'] {
            let n = |x: &str| format!("{side}{x}");
            if caps(&n("Heel"), &n("BigToe"), 0.02) {
                label = part::FOOT;
            }
            if caps(&n("Knee"), &n("Ankle"), 0.037) {
                label = part::SHANK;
            }
            if caps(&n("Hip"), &n("Knee"), 0.048) {
                label = part::THIGH;
            }
        }
        if in_polygon(p, torso) {
            label = part::TORSO;
        }
        let neck_top = lerp(self.at("Neck"), self.at("Nose"), 0.5);
        if seg_dist2(p, self.at("Neck"), neck_top) <= (0.03 * s).powi(2) {
            label = part::NECK;
        }
        let head = lerp(self.at("Nose"), lerp(self.at("REye"), self.at("LEye"), 0.5), 0.5);
        if ((p.0 - head.0) / (0.055 * s)).powi(2) + ((p.1 - head.1) / (0.07 * s)).powi(2) <= 1.0 {
            label = part::HEAD;
        }
        for side in ['R', 'L'] {
            let n = |x: &str| format!("{side}{x}");
            if caps(&n("Shoulder"), &n("Elbow"), 0.03) {
                label = part::UPPER_ARM;
            }
            if caps(&n("Elbow"), &n("Wrist"), 0.025) {
                label = part::FOREARM;
            }
            let h = self.hand(side);
            if (p.0 - h.0).powi(2) + (p.1 - h.1).powi(2) <= (0.028 * s).powi(2) {
                label = part::HAND;
            }
        }
        label
    }
}

/// Garment coverage chosen per scene.
#[derive(Clone, Copy, Debug)]
struct Outfit {
    /// Pixel row of the top's hem.
    hem: f64,
    /// 0 short, 1 to the elbow, 2 to the wrist.
    sleeves: u8,
    /// Pixel row where the bottom garment starts.
    waistband: f64,
    /// Legs covered down to this fraction of the knee-to-ankle span
    /// (negative values stop above the knee).
    leg_cover: f64,
}

fn anchor_point(table: &AnchorTable, keypoints: &KeypointSet, token: &str) -> Option<(f64, f64)> {
    let rules = table.rules(token)?;
    let pts: Vec<(f64, f64)> = rules.iter().filter_map(|r| r.resolve(keypoints, 0.0)).collect();
    if pts.is_empty() {
        return None;
    }
    let n = pts.len() as f64;
    Some((pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n))
}

/// Image row of an anatomical anchor token (mean over sides).
pub fn anchor_row(keypoints: &KeypointSet, token: &str) -> Option<f64> {
    let kps = star_keypoints(token);
    if !kps.is_empty() {
        let ys: Vec<f64> = kps.iter().filter_map(|k| keypoints.get(k)).map(|k| k.y).collect();
        return (!ys.is_empty()).then(|| ys.iter().sum::<f64>() / ys.len() as f64);
    }
    anchor_point(AnchorTable::builtin(), keypoints, token).map(|p| p.1)
}

fn pick_level(rng: &mut ChaCha8Rng, base: f64) -> f64 {
    base + rng.random_range(-3.0..3.0)
}

/// Builds a deterministic scene for `(preset, seed)` at `size × size`.
pub fn generate_scene_sized(preset: PosePreset, seed: u64, size: usize) -> Result<SyntheticScene> {
    generate_scene_styled(preset, seed, size, &AttentionStyle::default())
}

/// [`generate_scene_sized`] with explicit blob extents.
pub fn generate_scene_styled(preset: PosePreset, seed: u64, size: usize, style: &AttentionStyle) -> Result<SyntheticScene> {
    if size < 64 {
        return Err(Error::Param(format!("scene size {size} too small")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let s = size as f64;
    let scale = rng.random_range(0.92..1.03);
    let shift = (rng.random_range(-0.03..0.03), rng.random_range(-0.025..0.025));
    let kp: Vec<(&'static str, P)> = base_pose(preset)
        .into_iter()
        .map(|(n, x, y)| {
            let jx = rng.random_range(-0.008..0.008);
            let jy = rng.random_range(-0.008..0.008);
            let x = 0.5 + (x - 0.5) * scale + shift.0 + jx;
            let y = 0.5 + (y - 0.5) * scale + shift.1 + jy;
            (n, (x.clamp(0.02, 0.98) * s, y.clamp(0.02, 0.98) * s))
        })
        .collect();
    let fig = Figure { kp, size: s };

    let mut keypoints = KeypointSet::new(size as u32, size as u32);
    for (name, p) in &fig.kp {
        let conf = rng.random_range(0.75..0.98);
        keypoints.insert(name, Keypoint::new(p.0, p.1, conf))?;
    }

    let neck = fig.at("Neck").1;
    let mid = fig.at("MidHip").1;
    let torso_len = mid - neck;
    let hem = match rng.random_range(0..3) {
        0 => neck + 0.68 * torso_len,
        1 => neck + 0.85 * torso_len,
        _ => mid + 0.03 * s,
    };
    let outfit = Outfit {
        hem,
        sleeves: rng.random_range(0..3),
        waistband: hem.max(neck + 0.75 * torso_len),
        leg_cover: [-0.4, 0.3, 1.0][rng.random_range(0..3)],
    };
    let swap = rng.random_bool(0.5);
    let bg = pick_level(&mut rng, 15.0);
    let skin = pick_level(&mut rng, 240.0);
    let (top, bottom) = if swap {
        (pick_level(&mut rng, 165.0), pick_level(&mut rng, 90.0))
    } else {
        (pick_level(&mut rng, 90.0), pick_level(&mut rng, 165.0))
    };

    let torso = fig.torso();
    let parts = Grid::from_fn(size, size, |i, j| fig.part_at((j as f64 + 0.5, i as f64 + 0.5), &torso));
    let segments = Grid::from_fn(size, size, |i, j| {
        let p = (j as f64 + 0.5, i as f64 + 0.5);
        let y = p.1;
        match parts[(i, j)] {
            part::BACKGROUND => segment::BACKGROUND,
            part::TORSO => {
                if y <= outfit.hem {
                    segment::TOP
                } else if y >= outfit.waistband {
                    segment::BOTTOM
                } else {
                    segment::SKIN
                }
            }
            part::UPPER_ARM => {
                let side = if p.0 < fig.at("Neck").0 { 'R' } else { 'L' };
                let sh = fig.at(&format!("{side}Shoulder"));
                let el = fig.at(&format!("{side}Elbow"));
                let t = along(p, sh, el);
                if outfit.sleeves >= 1 || t <= 0.5 {
                    segment::TOP
                } else {
                    segment::SKIN
                }
            }
            part::FOREARM => {
                if outfit.sleeves == 2 {
                    segment::TOP
                } else {
                    segment::SKIN
                }
            }
            part::THIGH => {
                let side = if p.0 < fig.at("MidHip").0 { 'R' } else { 'L' };
                let (hp, kn) = (fig.at(&format!("{side}Hip")), fig.at(&format!("{side}Knee")));
                if outfit.leg_cover >= 0.0 || along(p, hp, kn) <= 1.0 + outfit.leg_cover {
                    segment::BOTTOM
                } else {
                    segment::SKIN
                }
            }
            part::SHANK => {
                let side = if p.0 < fig.at("MidHip").0 { 'R' } else { 'L' };
                let (kn, an) = (fig.at(&format!("{side}Knee")), fig.at(&format!("{side}Ankle")));
                if along(p, kn, an) <= outfit.leg_cover {
                    segment::BOTTOM
                } else {
                    segment::SKIN
                }
            }
            part::FOOT => segment::BOTTOM,
            _ => segment::SKIN,
        }
    });

    let mut noise = ChaCha8Rng::seed_from_u64(seed);
    noise.set_stream(2);
    let levels = [bg, skin, top, bottom];
    let samples: Vec<u8> = segments
        .as_slice()
        .iter()
        .map(|&sg| (levels[sg as usize] + noise.random_range(-6.0..6.0)).round().clamp(0.0, 255.0) as u8)
        .collect();
    let image = ImageBuffer::new(size as u32, size as u32, 1, samples)?;

    let tokens = token_specs(&fig, &keypoints, &segments, style);
    Ok(SyntheticScene {
        preset,
        seed,
        size,
        keypoints,
        image,
        parts,
        segments,
        tokens,
        style: *style,
        target: INSTRUCTIONS[0].to_string(),
    })
}

/// Mean of `f` over the pixel block under each cell of an `n × n` grid.
fn block_mean(size: usize, n: usize, f: impl Fn(usize, usize) -> f64) -> Grid<f64> {
    let block = size as f64 / n as f64;
    Grid::from_fn(n, n, |i, j| {
        let (r0, c0) = ((i as f64 * block) as usize, (j as f64 * block) as usize);
        let (r1, c1) = (((i + 1) as f64 * block) as usize, ((j + 1) as f64 * block) as usize);
        let mut acc = 0.0;
        for r in r0..r1 {
            for c in c0..c1 {
                acc += f(r, c);
            }
        }
        acc / ((r1 - r0) * (c1 - c0)).max(1) as f64
    })
}

/// Fraction along `a → b` of the projection of `p`.
fn along(p: P, a: P, b: P) -> f64 {
    let ab = sub(b, a);
    let ap = sub(p, a);
    (ap.0 * ab.0 + ap.1 * ab.1) / (ab.0 * ab.0 + ab.1 * ab.1)
}

/// Standard 256 × 256 scene.
pub fn generate_scene(preset: PosePreset, seed: u64) -> Result<SyntheticScene> {
    generate_scene_sized(preset, seed, 256)
}

/// Every token any supported instruction needs, in first-use order.
fn scene_token_names() -> Vec<(String, TokenKind)> {
    let rules = RuleTable::builtin();
    let mut out: Vec<(String, TokenKind)> = Vec::new();
    let mut push = |n: &str, k: TokenKind| {
        if !out.iter().any(|(m, _)| m == n) {
            out.push((n.to_string(), k));
        }
    };
    for ins in INSTRUCTIONS {
        let g = rules
            .expand(&rules.parse(ins).expect("built-in instruction parses"))
            .expect("built-in instruction expands");
        for t in &g.star_tokens {
            push(t, TokenKind::Star);
        }
        for t in &g.fleshy_tokens {
            push(t, TokenKind::Fleshy);
        }
        for t in &g.clothes_tokens {
            push(t, TokenKind::Clothes);
        }
    }
    out
}

/// Scale factor from pixels to attention cells.
fn px_to_cell(size: f64) -> f64 {
    ATTN_GRID as f64 / size
}

fn to_cell(p: P, size: f64) -> (f64, f64) {
    let k = px_to_cell(size);
    (p.1 * k - 0.5, p.0 * k - 0.5)
}

fn unit(a: P, b: P) -> (f64, f64) {
    let d = sub(b, a);
    let n = norm(d).max(1e-9);
    // (drow, dcol)
    (d.1 / n, d.0 / n)
}

fn token_specs(fig: &Figure, keypoints: &KeypointSet, segments: &Grid<u8>, style: &AttentionStyle) -> Vec<TokenSpec> {
    let size = fig.size;
    let k = px_to_cell(size);
    let table = AnchorTable::builtin();
    let neck = fig.at("Neck");
    let mid = fig.at("MidHip");
    let torso_axis = unit(neck, mid);
    let torso_len = norm(sub(mid, neck));
    let shoulder_w = norm(sub(fig.at("RShoulder"), fig.at("LShoulder")));

    let region = |wanted: &[u8]| {
        block_mean(size as usize, ATTN_GRID, |r, c| f64::from(wanted.contains(&segments[(r, c)])))
    };

    scene_token_names()
        .into_iter()
        .map(|(name, kind)| {
            let shape = match kind {
                TokenKind::Star => {
                    let mut blobs = Vec::new();
                    for kpn in star_keypoints(&name) {
                        let lens = bone_lengths(kpn, keypoints, (ATTN_GRID, ATTN_GRID), 0.0);
                        let r = lens.iter().sum::<f64>() / lens.len().max(1) as f64;
                        let sigma = style.star_spread * r.max(1.0);
                        let joint = fig.at(kpn);
                        blobs.push(Blob {
                            center: to_cell(joint, size),
                            axis: (1.0, 0.0),
                            sigma_along: sigma,
                            sigma_across: sigma,
                        });
                    }
                    TokenShape::Blobs(blobs)
                }
                TokenKind::Fleshy => {
                    let limb = |side: char, a: &str, b: &str, along: f64, across: f64| {
                        let pa = fig.at(&format!("{side}{a}"));
                        let pb = fig.at(&format!("{side}{b}"));
                        let len = norm(sub(pb, pa));
                        Blob {
                            center: to_cell(lerp(pa, pb, 0.5), size),
                            axis: unit(pa, pb),
                            sigma_along: along * len * k,
                            sigma_across: across * len * k,
                        }
                    };
                    let torso_blob = |along: f64, across: f64| {
                        let c = anchor_point(table, keypoints, &name).unwrap_or(lerp(neck, mid, 0.5));
                        Blob {
                            center: to_cell(c, size),
                            axis: torso_axis,
                            sigma_along: along * torso_len * k,
                            sigma_across: across * shoulder_w * k,
                        }
                    };
                    let blobs = match name.as_str() {
                        "Chest" => vec![torso_blob(0.16, 0.38)],
                        "Waist" => vec![torso_blob(0.12, 0.34)],
                        "Belly" => vec![torso_blob(0.12, 0.34)],
                        "Torso" => vec![torso_blob(0.34, 0.38)],
                        "Hip" => vec![torso_blob(0.12, 0.40)],
                        "Arms" => ['R', 'L'].map(|s| limb(s, "Shoulder", "Wrist", 0.30, 0.10)).to_vec(),
                        "Thigh" => ['R', 'L'].map(|s| limb(s, "Hip", "Knee", 0.30, 0.22)).to_vec(),
                        "Shank" => ['R', 'L'].map(|s| limb(s, "Knee", "Ankle", 0.30, 0.16)).to_vec(),
                        "Hand" => ['R', 'L']
                            .map(|s| {
                                let c = fig.hand(s);
                                Blob {
                                    center: to_cell(c, size),
                                    axis: (1.0, 0.0),
                                    sigma_along: 0.03 * size * k,
                                    sigma_across: 0.03 * size * k,
                                }
                            })
                            .to_vec(),
                        _ => {
                            let c = anchor_point(table, keypoints, &name).unwrap_or(lerp(neck, mid, 0.5));
                            vec![Blob {
                                center: to_cell(c, size),
                                axis: (1.0, 0.0),
                                sigma_along: 0.04 * size * k,
                                sigma_across: 0.04 * size * k,
                            }]
                        }
                    };
                    TokenShape::Blobs(blobs.into_iter().map(|b| b.widened(style.fleshy_spread)).collect())
                }
                TokenKind::Clothes => {
                    let wanted: &[u8] = match name.as_str() {
                        "skirt" | "skirts" | "pants" | "trousers" => &[segment::BOTTOM],
                        "dress" | "dresses" => &[segment::TOP, segment::BOTTOM],
                        _ => &[segment::TOP],
                    };
                    TokenShape::Region(region(wanted))
                }
            };
            let distractors = match &shape {
                TokenShape::Blobs(blobs) => neighbour_cells(fig, blobs, size),
                TokenShape::Region(_) => Vec::new(),
            };
            TokenSpec {
                name,
                kind,
                shape,
                distractors,
            }
        })
        .collect()
}

impl SyntheticScene {
    pub fn with_target(mut self, instruction: &str) -> Result<Self> {
        self.ground_truth(instruction)?;
        self.target = instruction.to_string();
        Ok(self)
    }

    pub fn token(&self, name: &str) -> Option<&TokenSpec> {
        self.tokens.iter().find(|t| t.name.eq_ignore_ascii_case(name))
    }

    /// Exact target mask for `instruction`: body parts the garment covers,
    /// restricted to the rows between its start and end anchors.
    pub fn ground_truth(&self, instruction: &str) -> Result<Grid<bool>> {
        let rules = RuleTable::builtin();
        let group = rules.expand(&rules.parse(instruction)?)?;
        let zone = zone_parts(&group);
        let start = anchor_row(&self.keypoints, &group.start_anchor)
            .ok_or_else(|| Error::Value(format!("no row for anchor {}", group.start_anchor)))?;
        let end = anchor_row(&self.keypoints, &group.end_anchor)
            .ok_or_else(|| Error::Value(format!("no row for anchor {}", group.end_anchor)))?;
        let (first, last) = (start.floor() as usize, end.floor() as usize);
        Ok(Grid::from_fn(self.size, self.size, |i, j| {
            i >= first && i <= last && zone.contains(&self.parts[(i, j)])
        }))
    }
}

fn zone_parts(group: &TokenGroup) -> Vec<u8> {
    let mut z = vec![part::TORSO];
    if group.contains("Elbow") || group.contains("Arms") || group.contains("Wrist") {
        z.extend([part::UPPER_ARM, part::FOREARM]);
    }
    if group.contains("Hand") {
        z.push(part::HAND);
    }
    if group.include_legs || ["Thigh", "Knee", "Shank", "Ankle"].iter().any(|t| group.contains(t)) {
        z.extend([part::THIGH, part::SHANK]);
    }
    z
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Convergence,
    Stabilization,
    Divergence,
}

/// Phase boundaries `(end of I, end of II)` in steps for a profile.
pub fn phase_bounds(profile: &PhaseProfile, steps: usize) -> (usize, usize) {
    let b1 = (profile.phase1_frac * steps as f64).round() as usize;
    let b2 = ((profile.phase1_frac + profile.phase2_frac) * steps as f64).round() as usize;
    (b1.min(steps), b2.clamp(b1.min(steps), steps))
}

/// Per-step cross-attention for every scene token and the segment-level
/// self-attention maps.
pub fn generate_attention(scene: &SyntheticScene, profile: &PhaseProfile) -> Result<(AttentionStack, SelfAttentionStack)> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed ^ scene.seed.rotate_left(29));
    rng.set_stream(3);
    let (b1, b2) = phase_bounds(profile, STEPS);
    let spread = profile.boundary_spread as i64;
    let floor = scene.style.off_body_gain;
    let focus = block_mean(scene.size, ATTN_GRID, |r, c| f64::from(scene.parts[(r, c)] != part::BACKGROUND))
        .map(|cov| floor + (1.0 - floor) * cov);

    let mut names = Vec::new();
    let mut kinds = Vec::new();
    let mut per_step: Vec<Vec<Grid<f64>>> = vec![Vec::new(); STEPS];
    for tok in &scene.tokens {
        names.push(tok.name.clone());
        kinds.push(tok.kind);
        let shift = |rng: &mut ChaCha8Rng, b: usize| -> usize {
            if spread == 0 || b == 0 || b == STEPS {
                return b;
            }
            (b as i64 + rng.random_range(-spread..=spread)).clamp(1, STEPS as i64 - 1) as usize
        };
        let t1 = shift(&mut rng, b1);
        let t2 = shift(&mut rng, b2).max(t1);
        for (t, slot) in per_step.iter_mut().enumerate() {
            let (phase, progress) = if t < t1 {
                (Phase::Convergence, t as f64 / t1 as f64)
            } else if t < t2 {
                (Phase::Stabilization, 0.0)
            } else {
                (Phase::Divergence, (t - t2) as f64 / (STEPS - t2).max(1) as f64)
            };
            let dir = |rng: &mut ChaCha8Rng, m: f64| {
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                (m * a.sin(), m * a.cos())
            };
            let (scale, offset, gain) = match phase {
                Phase::Convergence => {
                    let scale = 1.0 + profile.scatter * (1.0 - progress);
                    let m = profile.wander * (1.0 - progress) * rng.random::<f64>();
                    (scale, dir(&mut rng, m), 1.0 / scale)
                }
                Phase::Stabilization => (1.0, (0.0, 0.0), 1.0),
                Phase::Divergence => {
                    let depth = 0.4 + 0.6 * progress;
                    let u: f64 = rng.random();
                    if rng.random_bool(0.5) {
                        (1.0 - 0.45 * depth * u, (0.0, 0.0), 1.0 - 0.4 * depth * u)
                    } else {
                        let scale = 1.0 + profile.overshoot * depth * u;
                        let m = profile.drift * depth * u;
                        (scale, dir(&mut rng, m), 1.0 / scale)
                    }
                }
            };
            let misfire = if phase != Phase::Stabilization
                && !tok.distractors.is_empty()
                && rng.random_bool(profile.spurious)
            {
                let c = tok.distractors[rng.random_range(0..tok.distractors.len())];
                Some((c, rng.random_range(0.5..1.0)))
            } else {
                None
            };
            let jitter = profile.jitter[phase as usize];
            let mut map = tok.render(scale, offset, gain);
            if let Some((c, amp)) = misfire {
                let blob = Blob {
                    center: c,
                    axis: (1.0, 0.0),
                    sigma_along: tok.mean_sigma(),
                    sigma_across: tok.mean_sigma(),
                };
                for (k, v) in map.as_mut_slice().iter_mut().enumerate() {
                    let (i, j) = ((k / ATTN_GRID) as f64, (k % ATTN_GRID) as f64);
                    *v = v.max(amp * blob.value(i, j, 1.0, (0.0, 0.0)));
                }
            }
            if scene.style.off_body_gain < 1.0 {
                map = map.zip_map(&focus, |v, f| v * f)?;
            }
            if jitter > 0.0 {
                for v in map.as_mut_slice() {
                    let e: f64 = rng.random_range(-1.0..1.0);
                    let a: f64 = rng.random();
                    *v = (*v * (1.0 + jitter * e) + 0.5 * jitter * a).clamp(0.0, 1.0);
                }
            }
            slot.push(map);
        }
    }
    let attn = AttentionStack::from_maps(names, kinds, &per_step)?;

    let mut srng = ChaCha8Rng::seed_from_u64(profile.seed ^ scene.seed.rotate_left(29));
    srng.set_stream(4);
    // Self-attention queried with the target region lights up every
    // (body part, appearance) region in proportion to its overlap with it.
    let gt = scene.ground_truth(&scene.target)?;
    let mut area = [[0usize; segment::COUNT]; part::COUNT];
    let mut hit = [[0usize; segment::COUNT]; part::COUNT];
    for ((p, g), t) in scene.parts.as_slice().iter().zip(scene.segments.as_slice()).zip(gt.as_slice()) {
        area[*p as usize][*g as usize] += 1;
        hit[*p as usize][*g as usize] += usize::from(*t);
    }
    let (lo, hi) = scene.style.self_level;
    let mut maps = Vec::with_capacity(SELF_MAPS);
    for _ in 0..SELF_MAPS {
        let mut level = [[0.0f64; segment::COUNT]; part::COUNT];
        for p in 0..part::COUNT {
            for g in 0..segment::COUNT {
                let overlap = if area[p][g] == 0 {
                    0.0
                } else {
                    hit[p][g] as f64 / area[p][g] as f64
                };
                let base: f64 = srng.random_range(0.0..0.05);
                level[p][g] = base.max(srng.random_range(lo..hi) * overlap.sqrt());
            }
        }
        let coarse = block_mean(scene.size, SELF_GRID, |r, c| {
            level[scene.parts[(r, c)] as usize][scene.segments[(r, c)] as usize]
        });
        maps.push(gaussian_blur(&coarse, scene.style.self_blur));
    }
    let self_attn = SelfAttentionStack::from_maps(&maps)?;
    Ok((attn, self_attn))
}

/// Writes `image.png`, `attn.astd`, `self.astd`, `keypoints.json`,
/// `profile.json` and the ground truth `gt_<instruction>.png` of the scene target.
pub fn write_fixture(scene: &SyntheticScene, profile: &PhaseProfile, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (attn, self_attn) = generate_attention(scene, profile)?;
    write_png(&scene.image, dir.join("image.png"))?;
    write_attention_stack(&attn, dir.join("attn.astd"))?;
    write_self_attention_stack(&self_attn, dir.join("self.astd"))?;
    write_keypoints(&scene.keypoints, dir.join("keypoints.json"))?;
    let meta = serde_json::json!({
        "preset": scene.preset,
        "seed": scene.seed,
        "size": scene.size,
        "target": scene.target,
        "profile": profile,
    });
    let path = dir.join("profile.json");
    fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&path, e))?;
    write_mask_png(&scene.ground_truth(&scene.target)?, dir.join(ground_truth_file_name(&scene.target)))?;
    Ok(())
}

/// One in-memory fixture.
pub fn make_fixture(scene: &SyntheticScene, profile: &PhaseProfile, instruction: &str) -> Result<Fixture> {
    let scene = scene.clone().with_target(instruction)?;
    let (attn, self_attn) = generate_attention(&scene, profile)?;
    Ok(Fixture {
        name: format!("{}-{}/{}", scene.preset, scene.seed, instruction),
        image: scene.image.clone(),
        attn,
        self_attn,
        keypoints: scene.keypoints.clone(),
        instruction: instruction.to_string(),
        ground_truth: scene.ground_truth(instruction)?,
    })
}

/// Parameters of the phase-dynamics suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteSpec {
    pub count: usize,
    pub size: usize,
    pub zero_jitter: bool,
    pub style: AttentionStyle,
    /// Template profile; each fixture redraws the phase fractions.
    pub profile: PhaseProfile,
}

impl Default for SuiteSpec {
    fn default() -> Self {
        SuiteSpec {
            count: 50,
            size: 256,
            zero_jitter: false,
            style: AttentionStyle::default(),
            profile: PhaseProfile::default(),
        }
    }
}

/// The phase-dynamics suite: presets and instructions cycle, each fixture
/// has its own seed and in-band phase fractions.
pub fn phase_dynamics_suite(spec: &SuiteSpec) -> Result<Vec<Fixture>> {
    use rayon::prelude::*;
    (0..spec.count)
        .into_par_iter()
        .map(|i| {
            let preset = PosePreset::ALL[i % 3];
            let seed = 1000 + i as u64;
            let scene = generate_scene_styled(preset, seed, spec.size, &spec.style)?;
            let mut profile = spec.profile.resampled(seed);
            if spec.zero_jitter {
                profile = profile.zero_jitter();
            }
            make_fixture(&scene, &profile, INSTRUCTIONS[(i / 3) % INSTRUCTIONS.len()])
        })
        .collect()
}
