//! Mean IoU of the synthetic suite under generator and pipeline overrides
//! read from the environment (STAR, FLESHY, SCATTER, ALPHA, BETA, AXIS, ...).
//!
//!     cargo run --release -p posestar-core --example tune -- 50 [zero]

use std::time::Instant;

use posestar::pipeline::{score_fixture, PipelineConfig};
use posestar::synthgen::{phase_dynamics_suite, AttentionStyle, PhaseProfile, SuiteSpec};

fn main() {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(36);
    let zero = std::env::args().any(|a| a == "zero");
    let t = Instant::now();
    let env = |k: &str, d: f64| std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d);
    let style = AttentionStyle {
        star_spread: env("STAR", 0.35),
        fleshy_spread: env("FLESHY", 1.0),
        off_body_gain: env("OFFBODY", 1.0),
        self_level: (env("SLO", 0.8), env("SHI", 1.0)),
        self_blur: env("SBLUR", 0.6),
    };
    let d = PhaseProfile::default();
    let profile = PhaseProfile {
        scatter: env("SCATTER", d.scatter),
        wander: env("WANDER", d.wander),
        overshoot: env("OVER", d.overshoot),
        drift: env("DRIFT", d.drift),
        spurious: env("SPUR", d.spurious),
        jitter: [env("J1", d.jitter[0]), env("J2", d.jitter[1]), env("J3", d.jitter[2])],
        ..d
    };
    let spec = SuiteSpec { count: n, size: 256, zero_jitter: zero, style, profile };
    let fx = phase_dynamics_suite(&spec).unwrap();
    eprintln!("suite {:?}", t.elapsed());
    let mut base = PipelineConfig::default();
    if let Ok(a) = std::env::var("AXIS") {
        base.collapse = a.parse().unwrap();
    }
    if let Ok(c) = std::env::var("COMBINE") {
        base.combine = c.parse().unwrap();
    }
    base.alpha = env("ALPHA", base.alpha);
    base.beta = env("BETA", base.beta);
    let mean = |cfg: &PipelineConfig| {
        let s: Vec<f64> = fx.iter().map(|f| score_fixture(f, cfg).0).collect();
        s.iter().sum::<f64>() / s.len() as f64
    };
    for w in 1..=4 {
        let cfg = PipelineConfig { window: w, ..base.clone() };
        println!("window {w}: {:.4}", mean(&cfg));
    }
    for m in ["min", "max", "average"] {
        let cfg = PipelineConfig { r_mode: m.parse().unwrap(), ..base.clone() };
        println!("r {m}: {:.4}", mean(&cfg));
    }
    if std::env::args().any(|a| a == "standing") {
        for seed in 0..12u64 {
            let sc = posestar::synthgen::generate_scene(posestar::synthgen::PosePreset::Standing, seed).unwrap();
            let f = posestar::synthgen::make_fixture(&sc, &PhaseProfile::sampled(seed), "belly-length blouse").unwrap();
            println!("standing seed {seed}: {:.4}", score_fixture(&f, &base).0);
        }
    }
    if std::env::args().any(|a| a == "rdetail") {
        for ins in posestar::synthgen::INSTRUCTIONS {
            let mut line = format!("{ins:>22}");
            for m in ["min", "average", "max"] {
                let cfg = PipelineConfig { r_mode: m.parse().unwrap(), ..base.clone() };
                let s: Vec<f64> = fx.iter().filter(|f| f.instruction == ins).map(|f| score_fixture(f, &cfg).0).collect();
                line += &format!(" {m} {:.4}", s.iter().sum::<f64>() / s.len() as f64);
            }
            println!("{line}");
        }
    }
    if std::env::args().any(|a| a == "stab") {
        let fz = phase_dynamics_suite(&SuiteSpec { zero_jitter: true, ..spec.clone() }).unwrap();
        let mut vals = Vec::new();
        for b in [0.2, 0.4, 0.6] {
            for a in [0.3, 0.5, 0.7] {
                let cfg = PipelineConfig { beta: b, alpha: a, ..base.clone() };
                let s: Vec<f64> = fz.iter().map(|f| score_fixture(f, &cfg).0).collect();
                let m = s.iter().sum::<f64>() / s.len() as f64;
                println!("beta {b} alpha {a}: {m:.4}");
                vals.push(m);
            }
        }
        let (lo, hi) = vals.iter().fold((1f64, 0f64), |(l, h), v| (l.min(*v), h.max(*v)));
        println!("stability range {:.4}", hi - lo);
    }
    if std::env::args().any(|a| a == "detail") {
        for f in &fx {
            println!("{} {:.3}", f.name, score_fixture(f, &base).0);
        }
    }
    if let Some(k) = std::env::args().find_map(|a| a.strip_prefix("debug=").map(|s| s.parse::<usize>().unwrap())) {
        let f = &fx[k];
        let dir = std::path::PathBuf::from(format!("/tmp/dbg{k}"));
        std::fs::create_dir_all(&dir).unwrap();
        let cfg = PipelineConfig { debug_dir: Some(dir.clone()), ..base.clone() };
        let out = posestar::pipeline::run::<f32>(&f.inputs(), &cfg).unwrap();
        posestar::tensorio::write_png(&f.image, dir.join("image.png")).unwrap();
        posestar::tensorio::write_mask_png(&f.ground_truth, dir.join("gt.png")).unwrap();
        println!("{} {:?}", f.name, out.report.iou);
        println!("{}", serde_json::to_string(&out.report).unwrap());
    }
    eprintln!("total {:?}", t.elapsed());
}
