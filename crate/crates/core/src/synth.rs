//! Procedural ground-truth scenes: analytically rendered corridor interiors
//! and two-faced building exteriors with known camera, plane layout, and
//! lattice structure. The generator returns the rendered image together with
//! the exact program, per-face masks, and geometric cues, so it doubles as
//! an oracle for the inference pipeline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cues::{CueSet, CueSource, VanishingPoint};
use crate::dsl::{BoxProgram, CameraStmt, LinearExpr, LoopSpec, PlaneBlock};
use crate::geometry::{
    cross3, dot3, normalize3, plane_rectify_homography, scale3, sub3, CameraModel, LineSeg2,
    PlaneGeometry, PlaneLabel, Vec3,
};
use crate::imaging::{ImageBuffer, Mask};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("scene spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

pub type Result<T> = std::result::Result<T, SynthError>;

// ---------------------------------------------------------------------------
// scene specification

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Glyph {
    Disk,
    Square,
    Cross,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StripeAxis {
    /// Repeats along the box axis (depth for corridors).
    S,
    /// Repeats across it.
    T,
}

/// Appearance of one face, in face meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FacePattern {
    Uniform {
        rgb: [f32; 3],
    },
    /// 2D lattice of glyphs.
    Grid {
        bg: [f32; 3],
        fg: [f32; 3],
        glyph: Glyph,
        /// Glyph half-extent in meters.
        size: f64,
        period_s: f64,
        period_t: f64,
        phase_s: f64,
        phase_t: f64,
    },
    /// 1D lattice: stripes perpendicular to the given axis.
    Stripes {
        bg: [f32; 3],
        fg: [f32; 3],
        axis: StripeAxis,
        period: f64,
        /// Stripe half-width in meters.
        width: f64,
        phase: f64,
    },
    /// Aperiodic value noise; ground truth for "irregular".
    Noise {
        base: [f32; 3],
        amp: f32,
        salt: u64,
    },
}

impl FacePattern {
    fn eval(&self, s: f64, t: f64) -> [f32; 3] {
        match self {
            FacePattern::Uniform { rgb } => *rgb,
            FacePattern::Grid {
                bg,
                fg,
                glyph,
                size,
                period_s,
                period_t,
                phase_s,
                phase_t,
            } => {
                // offset to the nearest lattice point
                let ds = centered_rem(s - phase_s, *period_s);
                let dt = centered_rem(t - phase_t, *period_t);
                let inside = match glyph {
                    Glyph::Disk => ds * ds + dt * dt <= size * size,
                    Glyph::Square => ds.abs() <= *size && dt.abs() <= *size,
                    Glyph::Cross => {
                        (ds.abs() <= size / 3.0 && dt.abs() <= *size)
                            || (dt.abs() <= size / 3.0 && ds.abs() <= *size)
                    }
                };
                if inside {
                    *fg
                } else {
                    *bg
                }
            }
            FacePattern::Stripes {
                bg,
                fg,
                axis,
                period,
                width,
                phase,
            } => {
                let u = match axis {
                    StripeAxis::S => s,
                    StripeAxis::T => t,
                };
                if centered_rem(u - phase, *period).abs() <= *width {
                    *fg
                } else {
                    *bg
                }
            }
            FacePattern::Noise { base, amp, salt } => {
                let n = 0.6 * value_noise(s / 0.53, t / 0.53, *salt)
                    + 0.4 * value_noise(s / 1.71, t / 1.71, salt.wrapping_add(1));
                let shift = amp * (2.0 * n as f32 - 1.0);
                [
                    (base[0] + shift).clamp(0.0, 1.0),
                    (base[1] + shift).clamp(0.0, 1.0),
                    (base[2] + shift).clamp(0.0, 1.0),
                ]
            }
        }
    }

    /// Expected lattice in face meters, if the pattern repeats.
    /// (d1_s, d1_t, optional second vector, phase point).
    fn ground_truth_lattice(&self) -> Option<((f64, f64), Option<(f64, f64)>, (f64, f64))> {
        match self {
            FacePattern::Grid {
                period_s,
                period_t,
                phase_s,
                phase_t,
                ..
            } => Some(((*period_s, 0.0), Some((0.0, *period_t)), (*phase_s, *phase_t))),
            FacePattern::Stripes { axis, period, phase, .. } => match axis {
                StripeAxis::S => Some(((*period, 0.0), None, (*phase, 0.0))),
                StripeAxis::T => Some(((0.0, *period), None, (0.0, *phase))),
            },
            _ => None,
        }
    }
}

fn centered_rem(v: f64, period: f64) -> f64 {
    let r = v.rem_euclid(period);
    if r > period / 2.0 {
        r - period
    } else {
        r
    }
}

fn hash2(ix: i64, iy: i64, salt: u64) -> f64 {
    let mut h = (ix as u64).wrapping_mul(0x9e3779b97f4a7c15)
        ^ (iy as u64).wrapping_mul(0xc2b2ae3d27d4eb4f)
        ^ salt.wrapping_mul(0xd6e8feb86659fd93);
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51afd7ed558ccd);
    h ^= h >> 33;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(x: f64, y: f64, salt: u64) -> f64 {
    let (ix, iy) = (x.floor() as i64, y.floor() as i64);
    let (fx, fy) = (x - x.floor(), y - y.floor());
    let (sx, sy) = (fx * fx * (3.0 - 2.0 * fx), fy * fy * (3.0 - 2.0 * fy));
    let v00 = hash2(ix, iy, salt);
    let v10 = hash2(ix + 1, iy, salt);
    let v01 = hash2(ix, iy + 1, salt);
    let v11 = hash2(ix + 1, iy + 1, salt);
    let a = v00 + sx * (v10 - v00);
    let b = v01 + sx * (v11 - v01);
    a + sy * (b - a)
}

/// Inner view: a corridor along +z in world coordinates (x right, y down),
/// camera near the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerSpec {
    pub half_width: f64,
    pub half_height: f64,
    pub depth: f64,
    pub left: FacePattern,
    pub right: FacePattern,
    pub floor: FacePattern,
    pub ceiling: FacePattern,
    pub far: FacePattern,
}

/// Outer view: two building facades meeting at a vertical edge, corner
/// toward the camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterSpec {
    /// Corner edge base point (x, y, z) in world meters.
    pub edge: [f64; 3],
    /// Facade recession angles from the image plane, degrees.
    pub angle_a_deg: f64,
    pub angle_b_deg: f64,
    /// Facade lengths along their directions.
    pub extent_a: f64,
    pub extent_b: f64,
    pub half_height: f64,
    pub wall_a: FacePattern,
    pub wall_b: FacePattern,
    pub sky: [f32; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViewSpec {
    Inner(InnerSpec),
    Outer(OuterSpec),
}

fn default_noise_sigma() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    /// Camera position in world meters.
    #[serde(default)]
    pub cam_pos: [f64; 3],
    /// Yaw around the vertical axis, degrees.
    #[serde(default)]
    pub pan_deg: f64,
    /// Pitch around the horizontal axis, degrees.
    #[serde(default)]
    pub tilt_deg: f64,
    /// Additive Gaussian pixel noise, linear [0, 1] units.
    #[serde(default = "default_noise_sigma")]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    pub view: ViewSpec,
}

impl SceneSpec {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene spec serializes")
    }

    pub fn from_json(text: &str) -> Result<SceneSpec> {
        serde_json::from_str(text).map_err(|e| SynthError::Spec(e.to_string()))
    }

    /// A well-behaved corridor with a 2D glyph grid on every wall.
    pub fn standard_inner(width: u32, height: u32) -> SceneSpec {
        let grid = |bg: [f32; 3], fg: [f32; 3], glyph: Glyph| FacePattern::Grid {
            bg,
            fg,
            glyph,
            size: 0.28,
            period_s: 1.0,
            period_t: 1.0,
            phase_s: 0.5,
            phase_t: 0.0,
        };
        SceneSpec {
            width,
            height,
            cam_pos: [0.0, 0.0, 0.0],
            pan_deg: 0.0,
            tilt_deg: 0.0,
            noise_sigma: 0.01,
            seed: 0,
            view: ViewSpec::Inner(InnerSpec {
                half_width: 2.0,
                half_height: 1.5,
                depth: 12.0,
                left: grid([0.55, 0.35, 0.25], [0.9, 0.8, 0.3], Glyph::Square),
                right: grid([0.3, 0.45, 0.55], [0.85, 0.9, 0.95], Glyph::Disk),
                floor: grid([0.35, 0.35, 0.38], [0.75, 0.2, 0.2], Glyph::Cross),
                ceiling: grid([0.8, 0.8, 0.78], [0.3, 0.3, 0.6], Glyph::Disk),
                far: FacePattern::Uniform {
                    rgb: [0.12, 0.12, 0.14],
                },
            }),
        }
    }

    /// A two-faced building corner filling most of the frame.
    pub fn standard_outer(width: u32, height: u32) -> SceneSpec {
        SceneSpec {
            width,
            height,
            cam_pos: [0.0, 0.0, 0.0],
            pan_deg: 0.0,
            tilt_deg: 0.0,
            noise_sigma: 0.01,
            seed: 0,
            view: ViewSpec::Outer(OuterSpec {
                edge: [0.0, 0.0, 6.0],
                angle_a_deg: 35.0,
                angle_b_deg: 40.0,
                extent_a: 14.0,
                extent_b: 14.0,
                half_height: 5.0,
                wall_a: FacePattern::Grid {
                    bg: [0.6, 0.55, 0.5],
                    fg: [0.2, 0.3, 0.45],
                    glyph: Glyph::Square,
                    size: 0.45,
                    period_s: 1.6,
                    period_t: 1.4,
                    phase_s: 0.8,
                    phase_t: 0.0,
                },
                wall_b: FacePattern::Grid {
                    bg: [0.55, 0.5, 0.45],
                    fg: [0.85, 0.85, 0.8],
                    glyph: Glyph::Disk,
                    size: 0.4,
                    period_s: 1.5,
                    period_t: 1.3,
                    phase_s: 0.75,
                    phase_t: 0.0,
                },
                sky: [0.75, 0.85, 0.95],
            }),
        }
    }
}

// ---------------------------------------------------------------------------
// rendering

#[derive(Debug, Clone)]
pub struct GeneratedScene {
    pub image: ImageBuffer,
    /// Exact program in the camera frame.
    pub program: BoxProgram,
    /// Per-face coverage, keyed by label string ("far" for the far quad,
    /// "sky" for outer-view background).
    pub masks: Vec<(String, Mask)>,
    /// Exact vanishing point and box-edge segments.
    pub cues: CueSet,
}

fn rot_y(a: f64) -> [[f64; 3]; 3] {
    let (s, c) = a.sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

fn rot_x(a: f64) -> [[f64; 3]; 3] {
    let (s, c) = a.sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

fn mat_mul(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = (0..3).map(|k| a[r][k] * b[k][c]).sum();
        }
    }
    out
}

fn mat_apply(m: [[f64; 3]; 3], v: Vec3) -> Vec3 {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

fn transpose(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = m[c][r];
        }
    }
    out
}

/// One renderable face: a bounded plane chart in world coordinates.
struct Face {
    label: String,
    point: Vec3,
    normal: Vec3,
    axis_s: Vec3,
    axis_t: Vec3,
    /// Hard chart limits; None = unbounded on that side.
    s_range: (Option<f64>, Option<f64>),
    t_range: (Option<f64>, Option<f64>),
    pattern: FacePattern,
    /// Whether this face becomes a plane block of the program.
    modeled: bool,
}

struct Hit {
    face: usize,
    s: f64,
    t: f64,
}

fn intersect(faces: &[Face], origin: Vec3, dir: Vec3) -> Option<Hit> {
    let mut best: Option<(f64, Hit)> = None;
    for (k, f) in faces.iter().enumerate() {
        let denom = dot3(f.normal, dir);
        if denom.abs() < 1e-12 {
            continue;
        }
        let t_ray = dot3(f.normal, sub3(f.point, origin)) / denom;
        if t_ray <= 1e-9 {
            continue;
        }
        let hit = [
            origin[0] + t_ray * dir[0],
            origin[1] + t_ray * dir[1],
            origin[2] + t_ray * dir[2],
        ];
        let rel = sub3(hit, f.point);
        let s = dot3(rel, f.axis_s);
        let t = dot3(rel, f.axis_t);
        let eps = 1e-9;
        let in_lo = |lim: Option<f64>, v: f64| lim.is_none_or(|l| v >= l - eps);
        let in_hi = |lim: Option<f64>, v: f64| lim.is_none_or(|l| v <= l + eps);
        if !(in_lo(f.s_range.0, s) && in_hi(f.s_range.1, s) && in_lo(f.t_range.0, t) && in_hi(f.t_range.1, t)) {
            continue;
        }
        if best.as_ref().is_none_or(|(bt, _)| t_ray < *bt) {
            best = Some((t_ray, Hit { face: k, s, t }));
        }
    }
    best.map(|(_, h)| h)
}

fn inner_faces(spec: &InnerSpec) -> Vec<Face> {
    let (hx, hy, d) = (spec.half_width, spec.half_height, spec.depth);
    vec![
        Face {
            label: "left".into(),
            point: [-hx, 0.0, 0.0],
            normal: [1.0, 0.0, 0.0],
            axis_s: [0.0, 0.0, 1.0],
            axis_t: [0.0, 1.0, 0.0],
            s_range: (None, Some(d)),
            t_range: (Some(-hy), Some(hy)),
            pattern: spec.left.clone(),
            modeled: true,
        },
        Face {
            label: "right".into(),
            point: [hx, 0.0, 0.0],
            normal: [-1.0, 0.0, 0.0],
            axis_s: [0.0, 0.0, 1.0],
            axis_t: [0.0, 1.0, 0.0],
            s_range: (None, Some(d)),
            t_range: (Some(-hy), Some(hy)),
            pattern: spec.right.clone(),
            modeled: true,
        },
        Face {
            label: "floor".into(),
            point: [0.0, hy, 0.0],
            normal: [0.0, -1.0, 0.0],
            axis_s: [0.0, 0.0, 1.0],
            axis_t: [1.0, 0.0, 0.0],
            s_range: (None, Some(d)),
            t_range: (Some(-hx), Some(hx)),
            pattern: spec.floor.clone(),
            modeled: true,
        },
        Face {
            label: "ceiling".into(),
            point: [0.0, -hy, 0.0],
            normal: [0.0, 1.0, 0.0],
            axis_s: [0.0, 0.0, 1.0],
            axis_t: [1.0, 0.0, 0.0],
            s_range: (None, Some(d)),
            t_range: (Some(-hx), Some(hx)),
            pattern: spec.ceiling.clone(),
            modeled: true,
        },
        Face {
            label: "far".into(),
            point: [0.0, 0.0, d],
            normal: [0.0, 0.0, -1.0],
            axis_s: [1.0, 0.0, 0.0],
            axis_t: [0.0, 1.0, 0.0],
            s_range: (Some(-hx), Some(hx)),
            t_range: (Some(-hy), Some(hy)),
            pattern: spec.far.clone(),
            modeled: false,
        },
    ]
}

fn outer_faces(spec: &OuterSpec) -> Result<Vec<Face>> {
    let edge: Vec3 = spec.edge;
    let a = spec.angle_a_deg.to_radians();
    let b = spec.angle_b_deg.to_radians();
    // both facades recede away from the camera
    let dir_a = normalize3([-a.cos(), 0.0, a.sin()]);
    let dir_b = normalize3([b.cos(), 0.0, b.sin()]);
    let down: Vec3 = [0.0, 1.0, 0.0];
    let mut normal_a = normalize3(cross3(down, dir_a));
    if dot3(normal_a, edge) > 0.0 {
        normal_a = scale3(normal_a, -1.0);
    }
    let mut normal_b = normalize3(cross3(down, dir_b));
    if dot3(normal_b, edge) > 0.0 {
        normal_b = scale3(normal_b, -1.0);
    }
    if spec.extent_a <= 0.0 || spec.extent_b <= 0.0 || spec.half_height <= 0.0 {
        return Err(SynthError::Spec("outer extents must be positive".into()));
    }
    Ok(vec![
        Face {
            label: "wall_a".into(),
            point: edge,
            normal: normal_a,
            axis_s: dir_a,
            axis_t: down,
            s_range: (Some(0.0), Some(spec.extent_a)),
            t_range: (Some(-spec.half_height), Some(spec.half_height)),
            pattern: spec.wall_a.clone(),
            modeled: true,
        },
        Face {
            label: "wall_b".into(),
            point: edge,
            normal: normal_b,
            axis_s: dir_b,
            axis_t: down,
            s_range: (Some(0.0), Some(spec.extent_b)),
            t_range: (Some(-spec.half_height), Some(spec.half_height)),
            pattern: spec.wall_b.clone(),
            modeled: true,
        },
    ])
}

fn label_of(s: &str) -> PlaneLabel {
    s.parse().expect("face label")
}

/// Build the gt plane block: chart in the camera frame, loops from the
/// pattern's known lattice converted to rectified-canvas pixels.
fn face_to_block(
    face: &Face,
    visible: [f64; 4],
    w2c: [[f64; 3]; 3],
    cam_pos: Vec3,
    cam: &CameraModel,
    rect_size: u32,
) -> Result<PlaneBlock> {
    let geom = PlaneGeometry {
        point: mat_apply(w2c, sub3(face.point, cam_pos)),
        normal: mat_apply(w2c, face.normal),
        axis_s: mat_apply(w2c, face.axis_s),
        axis_t: mat_apply(w2c, face.axis_t),
        bounds: visible,
    };
    let loops = match face.pattern.ground_truth_lattice() {
        None => None,
        Some((d1, d2, phase)) => {
            let (_, scale) = plane_rectify_homography(&geom, cam, rect_size)?;
            let margin = 2.0;
            let to_px = |v: (f64, f64)| {
                (v.0 * scale.px_per_meter_s, v.1 * scale.px_per_meter_t)
            };
            // first lattice point at or after the visible lower bounds
            let count_axis = |phase: f64, step: f64, lo: f64, hi: f64| -> (f64, i64) {
                if step.abs() < 1e-12 {
                    return (phase.clamp(lo, hi), 1);
                }
                let first = phase + ((lo - phase) / step).ceil() * step;
                let n = ((hi - first) / step).floor() as i64 + 1;
                (first, n.max(0))
            };
            // gt lattices are axis-aligned: d1 along s, d2 along t (or one
            // of them for stripes)
            let (s_first, ns) = count_axis(phase.0, d1.0.max(d2.map_or(0.0, |v| v.0)), visible[0], visible[1]);
            let t_step = d1.1.max(d2.map_or(0.0, |v| v.1));
            let (t_first, nt) = count_axis(phase.1, t_step, visible[2], visible[3]);
            if ns == 0 || nt == 0 {
                None
            } else {
                let origin = (
                    margin + (s_first - visible[0]) * scale.px_per_meter_s,
                    margin + (t_first - visible[2]) * scale.px_per_meter_t,
                );
                let d1_px = to_px(d1);
                let d2_px = d2.map(to_px);
                let two_d = d2_px.is_some() && d1_px != (0.0, 0.0);
                if two_d {
                    Some(LoopSpec {
                        outer: (0, ns),
                        inner: Some((0, nt)),
                        draw_x: LinearExpr { ci: d1_px.0, cj: d2_px.unwrap().0, c0: origin.0 },
                        draw_y: LinearExpr { ci: d1_px.1, cj: d2_px.unwrap().1, c0: origin.1 },
                    })
                } else {
                    // stripes: a single loop along the repeating axis
                    let (step_px, n) = if d1_px.0.abs() > d1_px.1.abs() {
                        ((d1_px.0, 0.0), ns)
                    } else {
                        ((0.0, d1_px.1), nt)
                    };
                    Some(LoopSpec {
                        outer: (0, n),
                        inner: None,
                        draw_x: LinearExpr { ci: step_px.0, cj: 0.0, c0: origin.0 },
                        draw_y: LinearExpr { ci: step_px.1, cj: 0.0, c0: origin.1 },
                    })
                }
            }
        }
    };
    Ok(PlaneBlock {
        pos: geom.point,
        normal: geom.normal,
        axis_s: geom.axis_s,
        axis_t: geom.axis_t,
        bounds: visible,
        label: label_of(&face.label),
        loops,
    })
}

/// Render the scene and assemble image, program, masks, and cues.
/// Deterministic for a fixed spec.
pub fn generate_scene(spec: &SceneSpec) -> Result<GeneratedScene> {
    generate_scene_with_camera(spec, &CameraModel::new(spec.width, spec.height))
}

/// Same, but with an explicit camera model (used to probe focal-length
/// sensitivity).
pub fn generate_scene_with_camera(spec: &SceneSpec, cam: &CameraModel) -> Result<GeneratedScene> {
    if spec.width < 8 || spec.height < 8 {
        return Err(SynthError::Spec("image too small".into()));
    }
    let faces = match &spec.view {
        ViewSpec::Inner(inner) => {
            if inner.half_width <= 0.0 || inner.half_height <= 0.0 || inner.depth <= spec.cam_pos[2] {
                return Err(SynthError::Spec("degenerate corridor dimensions".into()));
            }
            inner_faces(inner)
        }
        ViewSpec::Outer(outer) => outer_faces(outer)?,
    };
    let c2w = mat_mul(rot_y(spec.pan_deg.to_radians()), rot_x(spec.tilt_deg.to_radians()));
    let w2c = transpose(c2w);
    let cam_pos: Vec3 = spec.cam_pos;

    let mut image = ImageBuffer::new(spec.width, spec.height);
    let mut masks: Vec<Mask> = faces
        .iter()
        .map(|_| Mask::new(spec.width, spec.height, false))
        .collect();
    let mut sky_mask = Mask::new(spec.width, spec.height, false);
    // visible (s, t) extents per face
    let mut vis: Vec<[f64; 4]> = faces
        .iter()
        .map(|_| [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY])
        .collect();
    let sky = match &spec.view {
        ViewSpec::Outer(o) => o.sky,
        ViewSpec::Inner(_) => [0.0, 0.0, 0.0],
    };

    for y in 0..spec.height {
        for x in 0..spec.width {
            let dir_c = cam.ray_dir(x as f64 + 0.5, y as f64 + 0.5);
            let dir_w = mat_apply(c2w, dir_c);
            match intersect(&faces, cam_pos, dir_w) {
                Some(hit) => {
                    let rgb = faces[hit.face].pattern.eval(hit.s, hit.t);
                    image.set(x, y, rgb);
                    masks[hit.face].set(x, y, true);
                    let v = &mut vis[hit.face];
                    v[0] = v[0].min(hit.s);
                    v[1] = v[1].max(hit.s);
                    v[2] = v[2].min(hit.t);
                    v[3] = v[3].max(hit.t);
                }
                None => {
                    image.set(x, y, sky);
                    sky_mask.set(x, y, true);
                }
            }
        }
    }

    if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0, spec.noise_sigma).map_err(|e| SynthError::Spec(e.to_string()))?;
        for v in image.data.iter_mut() {
            *v = (*v + normal.sample(&mut rng) as f32).clamp(0.0, 1.0);
        }
    }

    // program
    let mut blocks = Vec::new();
    for (k, face) in faces.iter().enumerate() {
        if !face.modeled {
            continue;
        }
        if masks[k].count() == 0 {
            return Err(SynthError::Spec(format!("face {} is not visible", face.label)));
        }
        blocks.push(face_to_block(face, vis[k], w2c, cam_pos, cam, 200)?);
    }
    let axis_cam = match &spec.view {
        ViewSpec::Inner(_) => mat_apply(w2c, [0.0, 0.0, 1.0]),
        // outer views have no single box axis; point the camera statement
        // along the optical axis
        ViewSpec::Outer(_) => [0.0, 0.0, 1.0],
    };
    let far_plane = match &spec.view {
        ViewSpec::Inner(inner) => {
            let (hx, hy, d) = (inner.half_width, inner.half_height, inner.depth);
            let mut quad = [(0.0, 0.0); 4];
            for (i, (sx, sy)) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
                .into_iter()
                .enumerate()
            {
                let p_c = mat_apply(w2c, sub3([sx * hx, sy * hy, d], cam_pos));
                quad[i] = cam
                    .project(p_c)
                    .ok_or_else(|| SynthError::Spec("far corner behind camera".into()))?;
            }
            Some(quad)
        }
        ViewSpec::Outer(_) => None,
    };
    let program = BoxProgram {
        camera: CameraStmt {
            pos: [0.0, 0.0, 0.0],
            point_to: axis_cam,
        },
        planes: blocks,
        far_plane,
    };
    program
        .validate()
        .map_err(|e| SynthError::Spec(format!("generated program invalid: {e}")))?;

    // cues
    let cues = match &spec.view {
        ViewSpec::Inner(inner) => {
            let vp_c = mat_apply(w2c, [0.0, 0.0, 1.0]);
            let vp = cam
                .project(scale3(vp_c, 1000.0))
                .ok_or_else(|| SynthError::Spec("vanishing point behind camera".into()))?;
            let (hx, hy, d) = (inner.half_width, inner.half_height, inner.depth);
            let z_near = cam_pos[2] + 0.4;
            let mut segments = Vec::new();
            for (sx, sy) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
                let p = |z: f64| {
                    cam.project(mat_apply(w2c, sub3([sx * hx, sy * hy, z], cam_pos)))
                };
                if let (Some(a), Some(b)) = (p(z_near), p(d)) {
                    segments.push(LineSeg2::new(a, b, 1.0));
                }
            }
            CueSet {
                vp: Some(VanishingPoint {
                    x: vp.0,
                    y: vp.1,
                    confidence: 1.0,
                }),
                segments,
                source: CueSource::Annotated,
            }
        }
        ViewSpec::Outer(outer) => {
            let mut segments = Vec::new();
            let hv = outer.half_height;
            let mut push_seg = |a_w: Vec3, b_w: Vec3| {
                let a = cam.project(mat_apply(w2c, sub3(a_w, cam_pos)));
                let b = cam.project(mat_apply(w2c, sub3(b_w, cam_pos)));
                if let (Some(a), Some(b)) = (a, b) {
                    segments.push(LineSeg2::new(a, b, 1.0));
                }
            };
            let e: Vec3 = outer.edge;
            // the corner edge itself, then each facade's top and bottom
            push_seg(
                [e[0], e[1] - hv, e[2]],
                [e[0], e[1] + hv, e[2]],
            );
            for face in &faces {
                let far = [
                    face.point[0] + face.axis_s[0] * face.s_range.1.unwrap(),
                    face.point[1],
                    face.point[2] + face.axis_s[2] * face.s_range.1.unwrap(),
                ];
                for v in [-hv, hv] {
                    push_seg(
                        [face.point[0], face.point[1] + v, face.point[2]],
                        [far[0], far[1] + v, far[2]],
                    );
                }
            }
            CueSet {
                vp: None,
                segments,
                source: CueSource::Annotated,
            }
        }
    };

    let mut named_masks: Vec<(String, Mask)> = faces
        .iter()
        .zip(masks)
        .map(|(f, m)| (f.label.clone(), m))
        .collect();
    if sky_mask.count() > 0 {
        named_masks.push(("sky".into(), sky_mask));
    }

    Ok(GeneratedScene {
        image,
        program,
        masks: named_masks,
        cues,
    })
}

/// Punch seeded random rectangles into the image. Returns the corrupted
/// image and the hole mask. Holes are filled with mid gray.
pub fn corrupt(img: &ImageBuffer, n_rects: u32, max_frac: f64, seed: u64) -> (ImageBuffer, Mask) {
    use rand::Rng;
    let mut out = img.clone();
    let mut mask = Mask::new(img.width, img.height, false);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_rects {
        let rw = rng.gen_range(4..=((img.width as f64 * max_frac) as u32).max(5));
        let rh = rng.gen_range(4..=((img.height as f64 * max_frac) as u32).max(5));
        let x0 = rng.gen_range(0..img.width.saturating_sub(rw).max(1));
        let y0 = rng.gen_range(0..img.height.saturating_sub(rh).max(1));
        for y in y0..(y0 + rh).min(img.height) {
            for x in x0..(x0 + rw).min(img.width) {
                out.set(x, y, [0.5, 0.5, 0.5]);
                mask.set(x, y, true);
            }
        }
    }
    (out, mask)
}
