mod common;

use posestar::aggregation::{
    build_coarse_stack, collapse_to_fine, phase_weights, sliding_window_consensus, thresholded_average, CollapseAxis,
    CoarseTargetStack,
};
use posestar::localization::{radial_constrain, RegionMap};
use posestar::maskpost::{edge_to_mask, iou};
use posestar::refinement::{combine_regions, cross_self_merge, edge_select_support, CombineMode, EdgeRule, RegionSupport};
use posestar::imgproc::inscribed_radius;
use posestar::tensorio::{decode_attention_stack, encode_attention_stack, AttentionStack};
use posestar::anatomy::TokenKind;
use posestar::Grid;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_grid(r: &mut ChaCha8Rng, h: usize, w: usize, zero_frac: f64) -> Grid<f64> {
    Grid::from_fn(h, w, |_, _| if r.random_bool(zero_frac) { 0.0 } else { r.random::<f64>() })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn thresholded_average_matches_oracle(seed in any::<u64>(), beta in 0.05f32..0.95) {
        let mut r = rng(seed);
        let maps = random_map_set(&mut r, beta);
        let got = thresholded_average(&maps, beta).unwrap();
        prop_assert_eq!(got, thresholded_average_oracle(&maps, beta));
    }

    #[test]
    fn thresholded_average_stays_within_passing_values(seed in any::<u64>(), beta in 0.05f32..0.95) {
        let mut r = rng(seed);
        let maps = random_map_set(&mut r, beta);
        let got = thresholded_average(&maps, beta).unwrap();
        for (i, j, v) in got.indexed() {
            let passing: Vec<f32> = maps.iter().map(|m| m[(i, j)]).filter(|x| *x > beta).collect();
            if passing.is_empty() {
                prop_assert_eq!(*v, 0.0);
            } else {
                let lo = passing.iter().copied().fold(f32::INFINITY, f32::min);
                let hi = passing.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                prop_assert!(*v >= lo - 1e-6 && *v <= hi + 1e-6);
            }
        }
    }

    #[test]
    fn consensus_is_convex_and_scale_free(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (maps, window) = random_step_stack(&mut r);
        let steps = maps.len();
        let coarse = CoarseTargetStack { maps };
        let w = phase_weights(steps).unwrap();
        let a = sliding_window_consensus(&coarse, &w, window).unwrap();
        let b = sliding_window_consensus(&coarse, &w.scaled(5, 1).unwrap(), window).unwrap();
        prop_assert_eq!(&a, &b);
        let side = (steps as f64).sqrt().round() as usize;
        prop_assert_eq!(a.side, side - window + 1);
        for wi in 0..a.side {
            for wj in 0..a.side {
                let out = a.at(wi, wj);
                for (i, j, v) in out.indexed() {
                    let vals: Vec<f32> = (wi..wi + window)
                        .flat_map(|m| (wj..wj + window).map(move |n| m * side + n))
                        .map(|t| coarse.maps[t][(i, j)])
                        .collect();
                    let lo = vals.iter().copied().fold(f32::INFINITY, f32::min);
                    let hi = vals.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                    prop_assert!(*v >= lo && *v <= hi);
                    if lo == hi {
                        prop_assert_eq!(*v, lo);
                    }
                }
            }
        }
    }

    #[test]
    fn collapse_of_constant_grid_is_constant(c in 0.0f32..1.0, side in 1usize..8) {
        let grid = posestar::aggregation::ConsensusGrid { side, maps: vec![Grid::filled(4, 4, c); side * side] };
        for axis in [CollapseAxis::Row, CollapseAxis::Col] {
            let fine = collapse_to_fine(&grid, axis);
            prop_assert_eq!(fine.maps.len(), side);
            for m in &fine.maps {
                prop_assert!(m.as_slice().iter().all(|v| (*v - c).abs() <= 1e-6));
            }
        }
    }

    #[test]
    fn radial_constraint_contains_and_grows_with_r(seed in any::<u64>(), r1 in 0.5f64..8.0, dr in 0.0f64..8.0) {
        let mut r = rng(seed);
        let values = random_grid(&mut r, 16, 16, 0.3);
        let map = RegionMap::new(values.clone());
        let center = (r.random_range(0..16), r.random_range(0..16));
        let small = radial_constrain(&map, center, r1).unwrap();
        let large = radial_constrain(&map, center, r1 + dr).unwrap();
        for (i, j, v) in small.values.indexed() {
            let d2 = (i as f64 - center.0 as f64).powi(2) + (j as f64 - center.1 as f64).powi(2);
            if *v > 0.0 {
                prop_assert!(values[(i, j)] > 0.0 && d2 <= r1 * r1);
                prop_assert_eq!(large.values[(i, j)], *v);
            }
        }
    }

    #[test]
    fn merge_support_and_alpha_monotonicity(seed in any::<u64>(), a1 in 0.01f64..0.98, da in 0.0f64..0.5) {
        let mut r = rng(seed);
        let c = random_grid(&mut r, 32, 32, 0.4);
        let s = random_grid(&mut r, 32, 32, 0.0);
        let a2 = (a1 + da).min(0.99);
        let lo = cross_self_merge(&c, &s, a1).unwrap();
        let hi = cross_self_merge(&c, &s, a2).unwrap();
        for (i, j, v) in lo.indexed() {
            if *v > 0.0 {
                prop_assert!(c[(i, j)] > 0.0 && *v > a1);
            }
            if hi[(i, j)] > 0.0 {
                prop_assert!(*v > 0.0);
            }
        }
    }

    #[test]
    fn max_combine_is_idempotent_and_order_free(seed in any::<u64>(), n in 1usize..6) {
        let mut r = rng(seed);
        let regions: Vec<Grid<f64>> = (0..n).map(|_| random_grid(&mut r, 8, 8, 0.5)).collect();
        let a = combine_regions(&regions, CombineMode::Max).unwrap();
        let mut rev = regions.clone();
        rev.reverse();
        prop_assert_eq!(&a, &combine_regions(&rev, CombineMode::Max).unwrap());
        prop_assert_eq!(&a, &combine_regions(&[a.clone(), a.clone()], CombineMode::Max).unwrap());
    }

    #[test]
    fn edge_selection_is_a_subset_and_grows_with_mu(seed in any::<u64>(), mu in 0.01f64..0.5, dmu in 0.0f64..0.5) {
        let mut r = rng(seed);
        let (top, left) = (r.random_range(2..20), r.random_range(2..20));
        let (h, w) = (r.random_range(6..30), r.random_range(6..30));
        let support = Grid::from_fn(64, 64, |i, j| i >= top && i < top + h && j >= left && j < left + w);
        let (inscribed, center) = inscribed_radius(&support);
        let region = RegionSupport { support, inscribed, center: center.unwrap() };
        let edges = Grid::from_fn(64, 64, |_, _| r.random_bool(0.2));
        let small = edge_select_support(&edges, &region, mu, EdgeRule::Boundary).unwrap();
        let large = edge_select_support(&edges, &region, (mu + dmu).min(1.0), EdgeRule::Boundary).unwrap();
        prop_assert!(small.is_subset_of(&edges));
        prop_assert!(small.is_subset_of(&large));
    }

    #[test]
    fn flood_fill_matches_scanline_fill(seed in any::<u64>()) {
        let mut r = rng(seed);
        let c = random_lattice_curve(&mut r, 64);
        prop_assert_eq!(edge_to_mask(&c.curve), scanline_even_odd_fill(&c));
    }

    #[test]
    fn iou_is_symmetric_and_bounded(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = Grid::from_fn(12, 12, |_, _| r.random_bool(0.4));
        let b = Grid::from_fn(12, 12, |_, _| r.random_bool(0.4));
        let x = iou(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert_eq!(x, iou(&b, &a).unwrap());
        prop_assert_eq!(iou(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn attention_stack_round_trips(seed in any::<u64>(), steps in 1usize..6, tokens in 1usize..4) {
        let mut r = rng(seed);
        let maps: Vec<Vec<Grid<f32>>> = (0..steps)
            .map(|_| (0..tokens).map(|_| Grid::from_fn(16, 16, |_, _| r.random::<f32>())).collect())
            .collect();
        let names: Vec<String> = (0..tokens).map(|k| format!("tok{k}")).collect();
        let kinds = vec![TokenKind::Fleshy; tokens];
        let stack = AttentionStack::from_maps(names, kinds, &maps).unwrap();
        let back = decode_attention_stack(&encode_attention_stack(&stack).unwrap()).unwrap();
        prop_assert_eq!(back, stack);
    }
}

#[test]
fn coarse_stack_applies_the_average_per_step() {
    let mut r = rng(9);
    let steps: Vec<Vec<Grid<f32>>> = (0..5).map(|_| random_map_set(&mut r, 0.3)).collect();
    let coarse = build_coarse_stack(&steps, 0.3).unwrap();
    for (t, maps) in steps.iter().enumerate() {
        assert_eq!(coarse.maps[t], thresholded_average_oracle(maps, 0.3));
    }
}
