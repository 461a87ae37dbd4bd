//! End-to-end mask synthesis, evaluation and parameter sweeps.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{
    build_coarse_stack, collapse_to_fine, phase_weights, sliding_window_consensus, step_grid_side, CollapseAxis,
    ConsensusGrid, PhaseWeights,
};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::imgproc::{resize, Upsample};
use crate::instruction::{RuleTable, TokenGroup};
use crate::localization::{
    anchor_fleshy, choose_radius, localize_star, normalize_map, radial_constrain, AnchorTable, MapStatus, RadiusMode,
    RegionMap,
};
use crate::maskpost::{finalize, PostConfig};
use crate::refinement::{
    canny_edges, combine_regions, cross_self_merge, edge_select_support, region_support, CombineMode, EdgeRule,
};
use crate::scalar::Scalar;
use crate::tensorio::{
    read_attention_stack, read_keypoints, read_mask_png, read_png, read_self_attention_stack, write_mask_png,
    write_png, AttentionStack, ImageBuffer, KeypointSet, SelfAttentionStack,
};

pub use crate::maskpost::iou;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub beta: f64,
    pub alpha: f64,
    pub mu: f64,
    pub r_mode: RadiusMode,
    pub window: usize,
    /// Expected number of diffusion steps in the attention stack.
    pub steps: usize,
    /// Radius in grid cells for star maps without usable bone lengths.
    pub default_r: f64,
    pub confidence_floor: f64,
    pub canny_low: f64,
    pub canny_high: f64,
    pub combine: CombineMode,
    pub collapse: CollapseAxis,
    pub upsample: Upsample,
    pub edge_rule: EdgeRule,
    /// Feed clothes token maps into the per-step thresholded average.
    pub clothes_in_aggregation: bool,
    /// Fill the selected edges guided by the region support: edges bound
    /// the mask within a band of the support outline, the outline itself
    /// where no edge is near.
    pub region_closure: bool,
    #[serde(flatten)]
    pub post: PostConfig,
    #[serde(skip)]
    pub debug_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            beta: 0.3,
            alpha: 0.4,
            mu: 0.1,
            r_mode: RadiusMode::Average,
            window: 3,
            steps: 100,
            default_r: 4.0,
            confidence_floor: 0.1,
            canny_low: 50.0,
            canny_high: 150.0,
            combine: CombineMode::Max,
            collapse: CollapseAxis::Col,
            upsample: Upsample::Bilinear,
            edge_rule: EdgeRule::Boundary,
            clothes_in_aggregation: false,
            region_closure: true,
            post: PostConfig::default(),
            debug_dir: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Param(what.to_string()));
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(&format!("beta must lie in (0, 1), got {}", self.beta));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(&format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.mu > 0.0 && self.mu <= 1.0) {
            return bad(&format!("mu must lie in (0, 1], got {}", self.mu));
        }
        if !(1..=4).contains(&self.window) {
            return bad(&format!("window must be 1..=4, got {}", self.window));
        }
        if self.steps == 0 {
            return bad("steps must be positive");
        }
        if self.window > 1 {
            match step_grid_side(self.steps) {
                Some(g) if g >= self.window => {}
                _ => return bad(&format!("window {} needs a square step count, got {}", self.window, self.steps)),
            }
        }
        if !(self.default_r > 0.0 && self.default_r.is_finite()) {
            return bad("default_r must be positive");
        }
        if !(0.0..=1.0).contains(&self.confidence_floor) {
            return bad("confidence_floor must lie in [0, 1]");
        }
        if !(self.canny_low >= 0.0 && self.canny_low <= self.canny_high && self.canny_high.is_finite()) {
            return bad("canny thresholds must satisfy 0 <= low <= high");
        }
        self.post.validate()
    }
}

/// Everything one run consumes.
#[derive(Clone, Copy, Debug)]
pub struct RunInputs<'a> {
    pub image: &'a ImageBuffer,
    pub attn: &'a AttentionStack,
    pub self_attn: &'a SelfAttentionStack,
    pub keypoints: &'a KeypointSet,
    pub instruction: &'a str,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunReport {
    pub mask_path: Option<String>,
    pub instruction: String,
    /// Wall-clock milliseconds per stage.
    pub timings_ms: BTreeMap<String, f64>,
    pub tokens: Vec<String>,
    pub skipped_tokens: Vec<String>,
    pub fallbacks: Vec<String>,
    pub iou: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub mask: Grid<bool>,
    pub report: RunReport,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Role {
    Star,
    Fleshy,
    Clothes,
}

struct Selected {
    name: String,
    index: usize,
    role: Role,
}

fn select_tokens(group: &TokenGroup, attn: &AttentionStack, cfg: &PipelineConfig, report: &mut RunReport) -> Vec<Selected> {
    let mut wanted: Vec<(&String, Role)> = group.star_tokens.iter().map(|t| (t, Role::Star)).collect();
    wanted.extend(group.fleshy_tokens.iter().map(|t| (t, Role::Fleshy)));
    if cfg.clothes_in_aggregation {
        wanted.extend(group.clothes_tokens.iter().map(|t| (t, Role::Clothes)));
    }
    let mut out = Vec::new();
    for (name, role) in wanted {
        match attn.token_index(name) {
            Some(index) => out.push(Selected {
                name: name.clone(),
                index,
                role,
            }),
            None => {
                warn!("token {name} missing from attention stack, skipped");
                report.skipped_tokens.push(name.clone());
            }
        }
    }
    out
}

/// Localized maps of one token: `maps[t]` holds every side's map at step `t`.
struct TokenMaps<S> {
    maps: Vec<Vec<Grid<S>>>,
    fallbacks: Vec<String>,
}

fn localize_token<S: Scalar>(
    token: &Selected,
    attn: &AttentionStack,
    keypoints: &KeypointSet,
    cfg: &PipelineConfig,
) -> Result<TokenMaps<S>> {
    let grid_dims = (attn.height(), attn.width());
    let mut maps = Vec::with_capacity(attn.steps());
    let mut fallbacks = Vec::new();
    for t in 0..attn.steps() {
        let raw = RegionMap::new(attn.map::<S>(t, token.index));
        if raw.values.is_all_zero() {
            maps.push(Vec::new());
            continue;
        }
        let step = match token.role {
            Role::Clothes => vec![raw.values],
            Role::Fleshy => anchor_fleshy(&raw, AnchorTable::builtin(), keypoints, &token.name, cfg.confidence_floor)?
                .into_iter()
                .map(|c| {
                    if c.fallback && t == 0 {
                        fallbacks.push(format!("{}: anchor {} unavailable", token.name, c.target));
                    }
                    c.map.values
                })
                .collect(),
            Role::Star => {
                let (norm, status) = normalize_map(&raw);
                if status == MapStatus::Degenerate {
                    maps.push(Vec::new());
                    continue;
                }
                let mut sides = Vec::new();
                for c in localize_star(&norm, &token.name, keypoints, cfg.confidence_floor)? {
                    if c.fallback && t == 0 {
                        fallbacks.push(format!("{}: keypoint {} unavailable", token.name, c.target));
                    }
                    let r = choose_radius(
                        &c.target,
                        keypoints,
                        cfg.r_mode,
                        grid_dims,
                        cfg.default_r,
                        cfg.confidence_floor,
                    );
                    let center = c.map.anchor.ok_or(Error::DegenerateMap)?;
                    sides.push(radial_constrain(&c.map, center, S::of(r))?.values);
                }
                sides
            }
        };
        maps.push(step);
    }
    Ok(TokenMaps { maps, fallbacks })
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Consensus over the step grid; a non-square step count with a 1×1 window
/// is treated as a single column of steps.
fn consensus<S: Scalar>(
    coarse: &crate::aggregation::CoarseTargetStack<S>,
    weights: &PhaseWeights,
    window: usize,
) -> Result<ConsensusGrid<S>> {
    if window == 1 && step_grid_side(coarse.steps()).is_none() {
        return Ok(ConsensusGrid {
            side: 1,
            maps: coarse.maps.clone(),
        });
    }
    sliding_window_consensus(coarse, weights, window)
}

/// Runs the whole pipeline and returns the mask at image resolution.
pub fn run<S: Scalar>(inputs: &RunInputs<'_>, cfg: &PipelineConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let mut report = RunReport {
        instruction: inputs.instruction.to_string(),
        ..RunReport::default()
    };
    let total = Instant::now();
    let attn = inputs.attn;
    let img_dims = (inputs.image.height() as usize, inputs.image.width() as usize);
    if attn.steps() != cfg.steps {
        return Err(Error::Shape(format!("attention stack has {} steps, expected {}", attn.steps(), cfg.steps)));
    }
    if (inputs.keypoints.image_width(), inputs.keypoints.image_height()) != (inputs.image.width(), inputs.image.height())
    {
        return Err(Error::Shape(format!(
            "keypoints are for a {}x{} image, input is {}x{}",
            inputs.keypoints.image_width(),
            inputs.keypoints.image_height(),
            inputs.image.width(),
            inputs.image.height()
        )));
    }
    if inputs.self_attn.maps() == 0 {
        return Err(Error::Shape("self-attention stack holds no maps".into()));
    }

    let stage = Instant::now();
    let rules = RuleTable::builtin();
    let group = rules.expand(&rules.parse(inputs.instruction)?)?;
    let selected = select_tokens(&group, attn, cfg, &mut report);
    report.timings_ms.insert("instruction".into(), elapsed_ms(stage));

    let stage = Instant::now();
    let localized: Vec<Result<TokenMaps<S>>> = selected
        .par_iter()
        .map(|tok| localize_token::<S>(tok, attn, inputs.keypoints, cfg))
        .collect();
    let mut per_step: Vec<Vec<Grid<S>>> = vec![Vec::new(); attn.steps()];
    for (tok, result) in selected.iter().zip(localized) {
        let tm = result?;
        if tm.maps.iter().all(Vec::is_empty) {
            warn!("token {} has no attention at any step, skipped", tok.name);
            report.skipped_tokens.push(tok.name.clone());
            continue;
        }
        report.tokens.push(tok.name.clone());
        report.fallbacks.extend(tm.fallbacks);
        for (t, maps) in tm.maps.into_iter().enumerate() {
            per_step[t].extend(maps);
        }
    }
    if report.tokens.is_empty() {
        return Err(Error::NoTokens(format!("none of {:?} are usable", report.skipped_tokens)));
    }
    let (gh, gw) = (attn.height(), attn.width());
    for step in per_step.iter_mut() {
        if step.is_empty() {
            step.push(Grid::zeros(gh, gw));
        }
    }
    report.timings_ms.insert("localization".into(), elapsed_ms(stage));

    let stage = Instant::now();
    let coarse = build_coarse_stack(&per_step, S::of(cfg.beta))?;
    let weights = phase_weights(attn.steps())?;
    let grid = consensus(&coarse, &weights, cfg.window)?;
    let fine = collapse_to_fine(&grid, cfg.collapse);
    report.timings_ms.insert("aggregation".into(), elapsed_ms(stage));

    let stage = Instant::now();
    let sa = inputs.self_attn;
    let (sh, sw) = (sa.height(), sa.width());
    let k_count = fine.maps.len();
    let regions: Vec<Grid<S>> = fine
        .maps
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let s_idx = k * sa.maps() / k_count;
            let up = resize(c, sh, sw, cfg.upsample);
            cross_self_merge(&up, &sa.map::<S>(s_idx), S::of(cfg.alpha))
        })
        .collect::<Result<_>>()?;
    let combined = combine_regions(&regions, cfg.combine)?;
    let edges = canny_edges(inputs.image, cfg.canny_low, cfg.canny_high);
    let support = region_support(&combined, img_dims, cfg.alpha, cfg.upsample)?;
    let selected_edges = edge_select_support(&edges, &support, cfg.mu, cfg.edge_rule)?;
    let guide_band = cfg.region_closure.then(|| (cfg.mu * support.inscribed).max(1.5));
    report.timings_ms.insert("refinement".into(), elapsed_ms(stage));

    let stage = Instant::now();
    let done = finalize(&selected_edges, &support.support, guide_band, &cfg.post)?;
    if done.used_fallback {
        report.fallbacks.push("mask fell back to region support".into());
    }
    report.timings_ms.insert("postprocess".into(), elapsed_ms(stage));
    report.timings_ms.insert("total".into(), elapsed_ms(total));
    debug!("run finished in {:.1} ms", report.timings_ms["total"]);

    if let Some(dir) = &cfg.debug_dir {
        let dbg = DebugMaps {
            coarse: &coarse.maps,
            fine: &fine.maps,
            regions: &regions,
            combined: &combined,
            edges: &edges,
            selected: &selected_edges,
            support: &support.support,
            mask: &done.mask,
        };
        dbg.write(dir)?;
    }
    Ok(RunOutput {
        mask: done.mask,
        report,
    })
}

/// Fixed black-red-yellow-white ramp over `[0, 1]`.
fn heat(v: f64) -> [u8; 3] {
    let v = v.clamp(0.0, 1.0) * 3.0;
    let c = |x: f64| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
    [c(v), c(v - 1.0), c(v - 2.0)]
}

fn write_heatmap<S: Scalar>(map: &Grid<S>, scale: usize, path: &Path) -> Result<()> {
    let (h, w) = map.dims();
    let mut samples = Vec::with_capacity(h * w * scale * scale * 3);
    for i in 0..h * scale {
        for j in 0..w * scale {
            samples.extend(heat(map[(i / scale, j / scale)].as_f64()));
        }
    }
    let img = ImageBuffer::new((w * scale) as u32, (h * scale) as u32, 3, samples)?;
    write_png(&img, path)
}

struct DebugMaps<'a, S> {
    coarse: &'a [Grid<S>],
    fine: &'a [Grid<S>],
    regions: &'a [Grid<S>],
    combined: &'a Grid<S>,
    edges: &'a Grid<bool>,
    selected: &'a Grid<bool>,
    support: &'a Grid<bool>,
    mask: &'a Grid<bool>,
}

impl<S: Scalar> DebugMaps<'_, S> {
    fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let n = self.coarse.len();
        for t in [0, n / 2, n - 1] {
            write_heatmap(&self.coarse[t], 8, &dir.join(format!("coarse_t{t:03}.png")))?;
        }
        for (k, m) in self.fine.iter().enumerate() {
            write_heatmap(m, 8, &dir.join(format!("fine_{k}.png")))?;
        }
        for (k, m) in self.regions.iter().enumerate() {
            write_heatmap(m, 4, &dir.join(format!("region_{k}.png")))?;
        }
        write_heatmap(self.combined, 4, &dir.join("region_combined.png"))?;
        write_mask_png(self.edges, dir.join("edges.png"))?;
        write_mask_png(self.selected, dir.join("edges_selected.png"))?;
        write_mask_png(self.support, dir.join("support.png"))?;
        write_mask_png(self.mask, dir.join("mask.png"))?;
        Ok(())
    }
}

/// A fixture with ground truth for one instruction.
#[derive(Clone, Debug)]
pub struct Fixture {
    pub name: String,
    pub image: ImageBuffer,
    pub attn: AttentionStack,
    pub self_attn: SelfAttentionStack,
    pub keypoints: KeypointSet,
    pub instruction: String,
    pub ground_truth: Grid<bool>,
}

impl Fixture {
    pub fn inputs(&self) -> RunInputs<'_> {
        RunInputs {
            image: &self.image,
            attn: &self.attn,
            self_attn: &self.self_attn,
            keypoints: &self.keypoints,
            instruction: &self.instruction,
        }
    }
}

/// File name of the ground-truth mask for `instruction`.
pub fn ground_truth_file_name(instruction: &str) -> String {
    let slug: Vec<&str> = instruction.split_whitespace().collect();
    format!("gt_{}.png", slug.join("_"))
}

fn instruction_from_file_name(name: &str) -> Option<String> {
    let stem = name.strip_prefix("gt_")?.strip_suffix(".png")?;
    Some(stem.replace('_', " "))
}

/// Loads one fixture directory: one [`Fixture`] per `gt_*.png` file.
pub fn load_fixture_dir(dir: &Path) -> Result<Vec<Fixture>> {
    let image = read_png(dir.join("image.png"))?;
    let attn = read_attention_stack(dir.join("attn.astd"))?;
    let self_attn = read_self_attention_stack(dir.join("self.astd"))?;
    let keypoints = read_keypoints(dir.join("keypoints.json"))?;
    let mut gts: Vec<(String, PathBuf)> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            instruction_from_file_name(&name).map(|i| (i, e.path()))
        })
        .collect();
    gts.sort();
    let base = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    gts.into_iter()
        .map(|(instruction, path)| {
            Ok(Fixture {
                name: format!("{base}/{instruction}"),
                image: image.clone(),
                attn: attn.clone(),
                self_attn: self_attn.clone(),
                keypoints: keypoints.clone(),
                instruction,
                ground_truth: read_mask_png(path)?,
            })
        })
        .collect()
}

/// Loads `root` itself if it is a fixture directory, otherwise every
/// fixture directory directly below it, in name order.
pub fn load_fixtures(root: &Path) -> Result<Vec<Fixture>> {
    if root.join("attn.astd").is_file() {
        return load_fixture_dir(root);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.join("attn.astd").is_file())
        .collect();
    dirs.sort();
    let mut out: Vec<Fixture> = Vec::new();
    for d in dirs {
        out.extend(load_fixture_dir(&d)?);
    }
    Ok(out)
}

/// Parameter grid: config key to the values it takes. Cells are the
/// cartesian product in key order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SweepGrid(pub BTreeMap<String, Vec<serde_json::Value>>);

impl SweepGrid {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn cells(&self) -> Vec<Vec<(String, serde_json::Value)>> {
        let mut cells: Vec<Vec<(String, serde_json::Value)>> = vec![Vec::new()];
        for (key, values) in &self.0 {
            let mut next = Vec::with_capacity(cells.len() * values.len());
            for cell in &cells {
                for v in values {
                    let mut c = cell.clone();
                    c.push((key.clone(), v.clone()));
                    next.push(c);
                }
            }
            cells = next;
        }
        cells
    }

    /// `base` with one cell's assignments applied.
    pub fn apply(base: &PipelineConfig, cell: &[(String, serde_json::Value)]) -> Result<PipelineConfig> {
        let mut value = serde_json::to_value(base)?;
        let obj = value.as_object_mut().expect("config serializes to an object");
        for (k, v) in cell {
            if !obj.contains_key(k) {
                return Err(Error::Param(format!("unknown config key {k:?} in sweep grid")));
            }
            obj.insert(k.clone(), v.clone());
        }
        let mut cfg: PipelineConfig = serde_json::from_value(value)?;
        cfg.debug_dir = None;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub assignment: Vec<(String, serde_json::Value)>,
    pub mean_iou: f64,
    pub fixtures: usize,
    /// Runs that errored; they count as IoU 0.
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepTable {
    pub keys: Vec<String>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn row(&self, key: &str, value: &serde_json::Value) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.assignment.iter().any(|(k, v)| k == key && v == value))
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = self.keys.clone();
        header.extend(["mean_iou", "fixtures", "failures"].map(String::from));
        w.write_record(&header).map_err(csv_err)?;
        for row in &self.rows {
            let mut rec: Vec<String> = row
                .assignment
                .iter()
                .map(|(_, v)| match v {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect();
            rec.push(format!("{:.6}", row.mean_iou));
            rec.push(row.fixtures.to_string());
            rec.push(row.failures.to_string());
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: PathBuf::from("<csv>"),
            source: e,
        })
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io {
        path: PathBuf::from("<csv>"),
        source: std::io::Error::other(e),
    }
}

/// IoU of one run against its ground truth; errors score 0.
pub fn score_fixture(fixture: &Fixture, cfg: &PipelineConfig) -> (f64, bool) {
    match run::<f32>(&fixture.inputs(), cfg).and_then(|out| iou(&out.mask, &fixture.ground_truth)) {
        Ok(v) => (v, true),
        Err(e) => {
            warn!("{}: {e}", fixture.name);
            (0.0, false)
        }
    }
}

/// Mean IoU over `fixtures` for every cell of `grid`.
pub fn sweep(base: &PipelineConfig, grid: &SweepGrid, fixtures: &[Fixture]) -> Result<SweepTable> {
    if fixtures.is_empty() {
        return Err(Error::Param("sweep needs at least one fixture".into()));
    }
    let cells = grid.cells();
    let configs: Vec<PipelineConfig> = cells.iter().map(|c| SweepGrid::apply(base, c)).collect::<Result<_>>()?;
    let rows = cells
        .into_iter()
        .zip(configs)
        .map(|(assignment, cfg)| {
            let scores: Vec<(f64, bool)> = fixtures.par_iter().map(|f| score_fixture(f, &cfg)).collect();
            let failures = scores.iter().filter(|s| !s.1).count();
            let mean_iou = scores.iter().map(|s| s.0).sum::<f64>() / scores.len() as f64;
            SweepRow {
                assignment,
                mean_iou,
                fixtures: fixtures.len(),
                failures,
            }
        })
        .collect();
    Ok(SweepTable {
        keys: grid.0.keys().cloned().collect(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        let bad = [
            PipelineConfig { beta: 0.0, ..Default::default() },
            PipelineConfig { beta: 1.0, ..Default::default() },
            PipelineConfig { alpha: 1.2, ..Default::default() },
            PipelineConfig { mu: 0.0, ..Default::default() },
            PipelineConfig { mu: 1.5, ..Default::default() },
            PipelineConfig { window: 0, ..Default::default() },
            PipelineConfig { window: 5, ..Default::default() },
            PipelineConfig { steps: 90, ..Default::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::Param(_))), "{c:?}");
        }
        let ok = PipelineConfig {
            steps: 90,
            window: 1,
            ..Default::default()
        };
        assert!(ok.validate().is_ok());
    }

    #[test]
    fn iou_examples() {
        let a = Grid::from_fn(8, 8, |i, j| i < 4 && j < 4);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        let b = Grid::from_fn(8, 8, |i, j| i >= 4 && j >= 4);
        assert_eq!(iou(&a, &b).unwrap(), 0.0);
        let c = Grid::from_fn(8, 8, |i, j| i < 4 && (2..6).contains(&j));
        assert!((iou(&a, &c).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_grid_cells_and_apply() {
        let g = SweepGrid::from_json(r#"{"window":[1,2,3,4]}"#).unwrap();
        assert_eq!(g.cells().len(), 4);
        let g = SweepGrid::from_json(r#"{"beta":[0.2,0.4,0.6],"alpha":[0.3,0.5,0.7]}"#).unwrap();
        let cells = g.cells();
        assert_eq!(cells.len(), 9);
        let cfg = SweepGrid::apply(&PipelineConfig::default(), &cells[8]).unwrap();
        assert_eq!((cfg.alpha, cfg.beta), (0.7, 0.6));
        let g = SweepGrid::from_json(r#"{"r_mode":["min","average","max"]}"#).unwrap();
        let cfg = SweepGrid::apply(&PipelineConfig::default(), &g.cells()[0]).unwrap();
        assert_eq!(cfg.r_mode, RadiusMode::Min);
        let g = SweepGrid::from_json(r#"{"nonsense":[1]}"#).unwrap();
        assert!(SweepGrid::apply(&PipelineConfig::default(), &g.cells()[0]).is_err());
        let g = SweepGrid::from_json(r#"{"window":[9]}"#).unwrap();
        assert!(SweepGrid::apply(&PipelineConfig::default(), &g.cells()[0]).is_err());
    }

    #[test]
    fn empty_sweep_is_a_param_error() {
        let g = SweepGrid::from_json(r#"{"window":[1]}"#).unwrap();
        assert!(matches!(sweep(&PipelineConfig::default(), &g, &[]), Err(Error::Param(_))));
    }

    #[test]
    fn ground_truth_names_round_trip() {
        let n = ground_truth_file_name("belly-length blouse");
        assert_eq!(n, "gt_belly-length_blouse.png");
        assert_eq!(instruction_from_file_name(&n).as_deref(), Some("belly-length blouse"));
    }
}
