//! Shared synthetic scene bank for the integration tests.

use boxprog::geometry::RayFan;
use boxprog::synth::{FacePattern, GeneratedScene, Glyph, InnerSpec, OuterSpec, SceneSpec, ViewSpec};

// ---------------------------------------------------------------------------
// scene bank

pub fn grid(bg: [f32; 3], fg: [f32; 3], glyph: Glyph, size: f64, ps: f64, pt: f64) -> FacePattern {
    FacePattern::Grid {
        bg,
        fg,
        glyph,
        size,
        period_s: ps,
        period_t: pt,
        phase_s: 0.5 * ps,
        phase_t: 0.0,
    }
}

pub fn inner_bank() -> Vec<SceneSpec> {
    let glyphs = [Glyph::Square, Glyph::Disk, Glyph::Cross];
    (0..10)
        .map(|i| {
            let g = |k: usize| glyphs[(i + k) % 3];
            let ps: f64 = [1.0, 0.8, 1.25][i % 3];
            let pt: f64 = [1.0, 1.1, 0.9][(i / 3) % 3];
            let size = 0.28 * ps.min(pt);
            let half_width = [2.0, 1.8, 2.2][(i + 1) % 3];
            let half_height = [1.5, 1.6, 1.4][(i + 2) % 3];
            SceneSpec {
                width: 320,
                height: 240,
                cam_pos: [0.05 * (i % 3) as f64 - 0.05, 0.04 * (i % 2) as f64, 0.0],
                pan_deg: [0.0, 2.0, -2.5, 1.0, -1.5][i % 5],
                tilt_deg: [0.0, 1.5, -1.0][i % 3],
                noise_sigma: 0.01,
                seed: i as u64,
                view: ViewSpec::Inner(InnerSpec {
                    half_width,
                    half_height,
                    depth: [12.0, 11.0, 13.0][i % 3],
                    // adjacent faces alternate light/dark so every corner
                    // edge has strong contrast for the segment detector
                    left: grid([0.72, 0.62, 0.5], [0.35, 0.25, 0.2], g(0), size, ps, pt),
                    right: grid([0.55, 0.65, 0.75], [0.2, 0.25, 0.4], g(1), size, ps, pt),
                    floor: grid([0.18, 0.18, 0.2], [0.7, 0.3, 0.25], g(2), size, ps, pt),
                    ceiling: grid([0.14, 0.17, 0.2], [0.6, 0.65, 0.75], g(0), size, ps, pt),
                    far: FacePattern::Uniform {
                        rgb: [0.4, 0.38, 0.36],
                    },
                }),
            }
        })
        .collect()
}

pub fn outer_bank() -> Vec<SceneSpec> {
    (0..10)
        .map(|i| {
            let pa: f64 = [1.6, 1.4, 1.8, 1.5, 1.7][i % 5];
            let pb: f64 = [1.5, 1.7, 1.3, 1.6, 1.4][i % 5];
            SceneSpec {
                width: 320,
                height: 240,
                cam_pos: [0.0, 0.0, 0.0],
                pan_deg: [0.0, 1.5, -1.5][i % 3],
                tilt_deg: 0.0,
                noise_sigma: 0.01,
                seed: 100 + i as u64,
                view: ViewSpec::Outer(OuterSpec {
                    edge: [0.3 * (i % 3) as f64 - 0.3, 0.0, [6.0, 5.5, 6.5][i % 3]],
                    angle_a_deg: [35.0, 30.0, 40.0, 33.0, 38.0][i % 5],
                    angle_b_deg: [40.0, 42.0, 34.0, 37.0, 31.0][(i + 2) % 5],
                    extent_a: 15.0,
                    extent_b: 15.0,
                    half_height: 5.0,
                    wall_a: grid(
                        [0.6, 0.55, 0.5],
                        [0.2, 0.3, 0.45],
                        if i % 2 == 0 { Glyph::Square } else { Glyph::Disk },
                        0.28 * pa.min(1.4),
                        pa,
                        1.4,
                    ),
                    wall_b: grid(
                        [0.55, 0.5, 0.45],
                        [0.85, 0.85, 0.8],
                        if i % 2 == 0 { Glyph::Disk } else { Glyph::Square },
                        0.28 * pb.min(1.3),
                        pb,
                        1.3,
                    ),
                    sky: [0.75, 0.85, 0.95],
                }),
            }
        })
        .collect()
}

/// Ray fan of an inner scene's exact cues: the vanishing point plus the four
/// corner-edge segments.
pub fn fan_from_exact_cues(scene: &GeneratedScene) -> RayFan {
    let vp = scene.cues.vp.as_ref().expect("inner scene has a vp");
    let vp = (vp.x, vp.y);
    let segs = &scene.cues.segments;
    assert!(segs.len() >= 4, "expected the four corner edges");
    let targets = [
        segs[0].farther_end(vp),
        segs[1].farther_end(vp),
        segs[2].farther_end(vp),
        segs[3].farther_end(vp),
    ];
    RayFan::from_targets(vp, targets)
}

