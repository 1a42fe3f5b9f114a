//! Pinhole camera model, vanishing-point refitting, the rectangle-from-rays
//! solver, 3D plane reconstruction under the box prior, and rectification
//! homographies.
//!
//! Coordinate conventions:
//! - Image: x right, y down, origin at the top-left pixel center.
//! - Camera: origin at the pinhole, x right, y down, z forward (into the
//!   scene). A pixel (px, py) corresponds to the ray direction
//!   ((px - cx)/f, (py - cy)/f, 1) with f the focal length in pixels.
//! - Plane coordinates: meters, (s, t) with s along the box depth axis and
//!   t along the face's cross edge.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("segment support lines are parallel; no intersection point")]
    ParallelLines,
    #[error("no rectangle with positive corner distances exists for this ray fan")]
    InfeasibleRectangle,
    #[error("homography is singular")]
    SingularHomography,
    #[error("plane bounds are empty or degenerate in the image")]
    DegenerateBounds,
    #[error("plane lies behind the camera")]
    PlaneBehindCamera,
}

pub type Result<T> = std::result::Result<T, GeometryError>;

// ---------------------------------------------------------------------------
// small vector helpers

pub type Vec3 = [f64; 3];

pub fn dot3(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross3(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm3(a: Vec3) -> f64 {
    dot3(a, a).sqrt()
}

pub fn normalize3(a: Vec3) -> Vec3 {
    let n = norm3(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

pub fn add3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale3(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

// ---------------------------------------------------------------------------
// camera

/// Fixed-intrinsics pinhole camera. The focal length and sensor width are
/// assumptions, not estimates; they cannot be recovered from a two-plane or
/// four-plane box view, and the rectification results do not depend on them.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CameraModel {
    pub focal_mm: f64,
    pub sensor_width_mm: f64,
    pub image_w: u32,
    pub image_h: u32,
}

impl CameraModel {
    pub fn new(image_w: u32, image_h: u32) -> Self {
        CameraModel {
            focal_mm: 35.0,
            sensor_width_mm: 36.0,
            image_w,
            image_h,
        }
    }

    pub fn with_focal_mm(mut self, focal_mm: f64) -> Self {
        self.focal_mm = focal_mm;
        self
    }

    /// Focal length in pixels; fy = fx (unit pixel aspect).
    pub fn focal_px(&self) -> f64 {
        self.focal_mm / self.sensor_width_mm * self.image_w as f64
    }

    pub fn cx(&self) -> f64 {
        self.image_w as f64 / 2.0
    }

    pub fn cy(&self) -> f64 {
        self.image_h as f64 / 2.0
    }

    /// Direction of the viewing ray through an image point (unnormalized, z = 1).
    pub fn ray_dir(&self, px: f64, py: f64) -> Vec3 {
        let f = self.focal_px();
        [(px - self.cx()) / f, (py - self.cy()) / f, 1.0]
    }

    /// Project a camera-space point with z > 0 to image pixels.
    pub fn project(&self, p: Vec3) -> Option<(f64, f64)> {
        if p[2] <= 1e-12 {
            return None;
        }
        let f = self.focal_px();
        Some((self.cx() + f * p[0] / p[2], self.cy() + f * p[1] / p[2]))
    }
}

// ---------------------------------------------------------------------------
// 2D segments

/// A 2D line segment with a detection confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSeg2 {
    pub a: (f64, f64),
    pub b: (f64, f64),
    pub confidence: f64,
}

impl LineSeg2 {
    pub fn new(a: (f64, f64), b: (f64, f64), confidence: f64) -> Self {
        LineSeg2 { a, b, confidence }
    }

    pub fn length(&self) -> f64 {
        let dx = self.b.0 - self.a.0;
        let dy = self.b.1 - self.a.1;
        (dx * dx + dy * dy).sqrt()
    }

    /// Unit normal (nx, ny) and offset c of the support line n·p = c.
    pub fn support_line(&self) -> ((f64, f64), f64) {
        let dx = self.b.0 - self.a.0;
        let dy = self.b.1 - self.a.1;
        let len = (dx * dx + dy * dy).sqrt();
        let n = (-dy / len, dx / len);
        let c = n.0 * self.a.0 + n.1 * self.a.1;
        (n, c)
    }

    /// Perpendicular distance from a point to the support line.
    pub fn line_distance(&self, p: (f64, f64)) -> f64 {
        let (n, c) = self.support_line();
        (n.0 * p.0 + n.1 * p.1 - c).abs()
    }

    /// Endpoint farther from the given point.
    pub fn farther_end(&self, p: (f64, f64)) -> (f64, f64) {
        let da = (self.a.0 - p.0).hypot(self.a.1 - p.1);
        let db = (self.b.0 - p.0).hypot(self.b.1 - p.1);
        if da >= db {
            self.a
        } else {
            self.b
        }
    }
}

// ---------------------------------------------------------------------------
// ray fan

/// A vanishing point with four rays, sorted by angle.
///
/// Angles are atan2(dy, dx) over image coordinates, stored strictly
/// increasing in (-pi, pi].
#[derive(Debug, Clone, Copy)]
pub struct RayFan {
    pub vp: (f64, f64),
    pub angles: [f64; 4],
}

impl RayFan {
    /// Build a fan from a vanishing point and four ray target points,
    /// sorting rays into increasing angular order.
    pub fn from_targets(vp: (f64, f64), targets: [(f64, f64); 4]) -> Self {
        let mut angles = [0.0f64; 4];
        for (k, t) in targets.iter().enumerate() {
            angles[k] = (t.1 - vp.1).atan2(t.0 - vp.0);
        }
        angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
        RayFan { vp, angles }
    }

    pub fn from_angles(vp: (f64, f64), mut angles: [f64; 4]) -> Self {
        angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
        RayFan { vp, angles }
    }

    /// Unit direction of ray k in image space.
    pub fn dir(&self, k: usize) -> (f64, f64) {
        (self.angles[k].cos(), self.angles[k].sin())
    }

    /// Point where ray k leaves the image rectangle [0,w-1]x[0,h-1].
    /// Returns the farthest in-frame intersection along the ray.
    pub fn exit_point(&self, k: usize, w: u32, h: u32) -> Option<(f64, f64)> {
        let (dx, dy) = self.dir(k);
        let (x0, y0) = self.vp;
        let (wf, hf) = ((w - 1) as f64, (h - 1) as f64);
        let mut best: Option<(f64, (f64, f64))> = None;
        let mut consider = |t: f64, p: (f64, f64)| {
            if t > 0.0 && p.0 >= -1e-9 && p.0 <= wf + 1e-9 && p.1 >= -1e-9 && p.1 <= hf + 1e-9 {
                let clamped = (p.0.clamp(0.0, wf), p.1.clamp(0.0, hf));
                if best.is_none() || t > best.unwrap().0 {
                    best = Some((t, clamped));
                }
            }
        };
        if dx.abs() > 1e-12 {
            for bx in [0.0, wf] {
                let t = (bx - x0) / dx;
                consider(t, (bx, y0 + t * dy));
            }
        }
        if dy.abs() > 1e-12 {
            for by in [0.0, hf] {
                let t = (by - y0) / dy;
                consider(t, (x0 + t * dx, by));
            }
        }
        best.map(|(_, p)| p)
    }
}

// ---------------------------------------------------------------------------
// homography

/// 3x3 projective transform on image points, normalized so m[2][2] = 1
/// whenever that entry is nonzero.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Homography {
    pub m: [[f64; 3]; 3],
}

impl Homography {
    pub fn identity() -> Self {
        Homography {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn from_matrix(m: [[f64; 3]; 3]) -> Self {
        let mut h = Homography { m };
        h.normalize();
        h
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Homography {
            m: [[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]],
        }
    }

    /// Anisotropic scale then translation: p -> (sx*x + tx, sy*y + ty).
    pub fn scale_translate(sx: f64, sy: f64, tx: f64, ty: f64) -> Self {
        Homography {
            m: [[sx, 0.0, tx], [0.0, sy, ty], [0.0, 0.0, 1.0]],
        }
    }

    fn normalize(&mut self) {
        let w = self.m[2][2];
        if w.abs() > 1e-300 {
            for r in 0..3 {
                for c in 0..3 {
                    self.m[r][c] /= w;
                }
            }
        }
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn invert(&self) -> Result<Homography> {
        let d = self.det();
        if !d.is_finite() || d.abs() < 1e-300 {
            return Err(GeometryError::SingularHomography);
        }
        let m = &self.m;
        let adj = [
            [
                m[1][1] * m[2][2] - m[1][2] * m[2][1],
                m[0][2] * m[2][1] - m[0][1] * m[2][2],
                m[0][1] * m[1][2] - m[0][2] * m[1][1],
            ],
            [
                m[1][2] * m[2][0] - m[1][0] * m[2][2],
                m[0][0] * m[2][2] - m[0][2] * m[2][0],
                m[0][2] * m[1][0] - m[0][0] * m[1][2],
            ],
            [
                m[1][0] * m[2][1] - m[1][1] * m[2][0],
                m[0][1] * m[2][0] - m[0][0] * m[2][1],
                m[0][0] * m[1][1] - m[0][1] * m[1][0],
            ],
        ];
        let mut out = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                out[r][c] = adj[r][c] / d;
            }
        }
        Ok(Homography::from_matrix(out))
    }

    /// self ∘ other: apply `other` first.
    pub fn compose(&self, other: &Homography) -> Homography {
        let a = &self.m;
        let b = &other.m;
        let mut out = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                out[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c] + a[r][2] * b[2][c];
            }
        }
        Homography::from_matrix(out)
    }

    /// Apply to a point. Returns None when the point maps to infinity.
    pub fn apply(&self, p: (f64, f64)) -> Option<(f64, f64)> {
        let m = &self.m;
        let w = m[2][0] * p.0 + m[2][1] * p.1 + m[2][2];
        if w.abs() < 1e-12 {
            return None;
        }
        Some((
            (m[0][0] * p.0 + m[0][1] * p.1 + m[0][2]) / w,
            (m[1][0] * p.0 + m[1][1] * p.1 + m[1][2]) / w,
        ))
    }
}

// ---------------------------------------------------------------------------
// planes

/// A 3D plane with an orthonormal in-plane chart. World point of plane
/// coordinates (s, t) is `point + s * axis_s + t * axis_t` (meters).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlaneGeometry {
    pub point: Vec3,
    pub normal: Vec3,
    pub axis_s: Vec3,
    pub axis_t: Vec3,
    /// Bounding rectangle of the visible region in plane coordinates:
    /// [s_min, s_max, t_min, t_max].
    pub bounds: [f64; 4],
}

impl PlaneGeometry {
    pub fn world_point(&self, s: f64, t: f64) -> Vec3 {
        add3(self.point, add3(scale3(self.axis_s, s), scale3(self.axis_t, t)))
    }

    /// Intersect the viewing ray through an image pixel with the plane,
    /// returning plane coordinates (s, t) and the ray depth (camera z of the
    /// hit point). None when the ray is parallel to the plane or hits behind
    /// the camera.
    pub fn intersect_ray(&self, cam: &CameraModel, px: f64, py: f64) -> Option<(f64, f64, f64)> {
        let d = cam.ray_dir(px, py);
        let denom = dot3(self.normal, d);
        if denom.abs() < 1e-12 {
            return None;
        }
        let lambda = dot3(self.normal, self.point) / denom;
        if lambda <= 1e-9 {
            return None;
        }
        let hit = scale3(d, lambda);
        let rel = sub3(hit, self.point);
        Some((dot3(rel, self.axis_s), dot3(rel, self.axis_t), hit[2]))
    }
}

/// Face labels of a box view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaneLabel {
    Left,
    Right,
    Floor,
    Ceiling,
    WallA,
    WallB,
}

impl std::fmt::Display for PlaneLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PlaneLabel::Left => "left",
            PlaneLabel::Right => "right",
            PlaneLabel::Floor => "floor",
            PlaneLabel::Ceiling => "ceiling",
            PlaneLabel::WallA => "wall_a",
            PlaneLabel::WallB => "wall_b",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for PlaneLabel {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "left" => Ok(PlaneLabel::Left),
            "right" => Ok(PlaneLabel::Right),
            "floor" => Ok(PlaneLabel::Floor),
            "ceiling" => Ok(PlaneLabel::Ceiling),
            "wall_a" => Ok(PlaneLabel::WallA),
            "wall_b" => Ok(PlaneLabel::WallB),
            other => Err(format!("unknown plane label {other:?}")),
        }
    }
}

/// Reconstructed inner view: four face planes around the box axis.
///
/// `planes[k]` spans ray k and ray k+1 of the sorted fan; `corners` are the
/// orthographic rectangle corners in the plane through the camera origin
/// perpendicular to the axis, with corner 0 at distance 1 m.
#[derive(Debug, Clone)]
pub struct BoxReconstruction {
    pub axis: Vec3,
    pub corners: [Vec3; 4],
    pub planes: [PlaneGeometry; 4],
    pub labels: [PlaneLabel; 4],
    /// Rectangle edge directions in the orthographic 2D basis.
    pub edge_dirs: ((f64, f64), (f64, f64)),
    /// Image-space ray angles in plane order: plane k covers the sector
    /// swept counterclockwise from sector_angles[k] to sector_angles[k+1].
    pub sector_angles: [f64; 4],
}

// ---------------------------------------------------------------------------
// vanishing-point refit

/// Least-squares intersection of segment support lines: minimizes the sum of
/// squared point-to-line distances over all segments. Returns the optimum
/// and the attained residual.
pub fn refit_vanishing_point(segments: &[LineSeg2]) -> Result<((f64, f64), f64)> {
    // Normal equations of sum_i (n_i . p - c_i)^2.
    let mut a00 = 0.0;
    let mut a01 = 0.0;
    let mut a11 = 0.0;
    let mut b0 = 0.0;
    let mut b1 = 0.0;
    for s in segments {
        let ((nx, ny), c) = s.support_line();
        a00 += nx * nx;
        a01 += nx * ny;
        a11 += ny * ny;
        b0 += c * nx;
        b1 += c * ny;
    }
    let det = a00 * a11 - a01 * a01;
    let scale = (a00 + a11).max(1e-12);
    if det.abs() < 1e-9 * scale * scale {
        return Err(GeometryError::ParallelLines);
    }
    let x = (a11 * b0 - a01 * b1) / det;
    let y = (a00 * b1 - a01 * b0) / det;
    let mut residual = 0.0;
    for s in segments {
        let ((nx, ny), c) = s.support_line();
        let d = nx * x + ny * y - c;
        residual += d * d;
    }
    Ok(((x, y), residual))
}

// ---------------------------------------------------------------------------
// rectangle-from-rays solver

/// Solution of the rectangle-on-four-rays problem.
#[derive(Debug, Clone, Copy)]
pub struct BoxRectangle {
    /// Direction of edge corner0 -> corner1 (sign-canonicalized).
    pub u_dir: (f64, f64),
    /// Direction of edge corner1 -> corner2 (sign-canonicalized).
    pub v_dir: (f64, f64),
    /// Distances of the four corners from the fan origin; corner 0 at 1.
    pub corner_dists: [f64; 4],
}

/// Find the rectangle (unique up to scale) whose k-th corner lies on the
/// k-th ray of the fan, with corner 0 at distance 1 from the origin.
///
/// With corner k at distance r_k along direction e_k = (cos th_k, sin th_k)
/// and the edge direction at angle phi, the side constraints chain the r_k
/// and close only when
///
///   sin(th1+th2-2*phi) * sin(th3-th4) + sin(th3+th4-2*phi) * sin(th1-th2) = 0
///
/// (indices 1-based), which is linear in (sin 2phi, cos 2phi) and therefore
/// solvable in closed form, independent of the corner positions. Two edge
/// orientations 90 degrees apart satisfy the closure; the feasible one is
/// the one with all corner distances positive.
pub fn solve_box_rectangle(fan: &RayFan) -> Result<BoxRectangle> {
    let th = fan.angles;
    for i in 0..4 {
        for j in (i + 1)..4 {
            if (th[i] - th[j]).abs() < 1e-12 {
                return Err(GeometryError::InfeasibleRectangle);
            }
        }
    }
    let s12 = th[0] + th[1];
    let s34 = th[2] + th[3];
    let d12 = (th[0] - th[1]).sin();
    let d34 = (th[2] - th[3]).sin();
    let num = s12.sin() * d34 + s34.sin() * d12;
    let den = s12.cos() * d34 + s34.cos() * d12;
    if num.abs() < 1e-300 && den.abs() < 1e-300 {
        return Err(GeometryError::InfeasibleRectangle);
    }
    let phi0 = 0.5 * num.atan2(den);

    let solve_branch = |phi: f64| -> Option<BoxRectangle> {
        let al: Vec<f64> = th.iter().map(|t| t - phi).collect();
        // r chains around the rectangle; denominators near zero mean a
        // corner escapes to infinity.
        let eps = 1e-12;
        if al[1].sin().abs() < eps
            || al[2].cos().abs() < eps
            || al[3].sin().abs() < eps
            || al[0].cos().abs() < eps
        {
            return None;
        }
        let r0 = 1.0;
        let r1 = r0 * al[0].sin() / al[1].sin();
        let r2 = r1 * al[1].cos() / al[2].cos();
        let r3 = r2 * al[2].sin() / al[3].sin();
        let closure = r3 * al[3].cos() / al[0].cos();
        if (closure - r0).abs() > 1e-6 {
            return None;
        }
        let r = [r0, r1, r2, r3];
        if r.iter().any(|&v| v <= 1e-9) {
            return None;
        }
        let p: Vec<(f64, f64)> = (0..4)
            .map(|k| (r[k] * th[k].cos(), r[k] * th[k].sin()))
            .collect();
        let canon = |mut d: (f64, f64)| {
            let n = (d.0 * d.0 + d.1 * d.1).sqrt();
            d = (d.0 / n, d.1 / n);
            if d.0 < 0.0 || (d.0 == 0.0 && d.1 < 0.0) {
                d = (-d.0, -d.1);
            }
            d
        };
        let u_dir = canon((p[1].0 - p[0].0, p[1].1 - p[0].1));
        let v_dir = canon((p[2].0 - p[1].0, p[2].1 - p[1].1));
        Some(BoxRectangle {
            u_dir,
            v_dir,
            corner_dists: r,
        })
    };

    solve_branch(phi0)
        .or_else(|| solve_branch(phi0 + std::f64::consts::FRAC_PI_2))
        .ok_or(GeometryError::InfeasibleRectangle)
}

// ---------------------------------------------------------------------------
// inner-view reconstruction

/// Depth-extent policy for reconstructed faces. The box is unbounded toward
/// the vanishing point, so the far bound is a fixed multiple of the nearest
/// visible depth.
#[derive(Debug, Clone, Copy)]
pub struct DepthExtent {
    pub far_ratio: f64,
    pub overscan: f64,
}

impl Default for DepthExtent {
    fn default() -> Self {
        DepthExtent {
            far_ratio: 4.0,
            overscan: 1.0,
        }
    }
}

/// Lift the ray fan to a 3D box interior.
///
/// The axis through the vanishing point gives the box depth direction; the
/// intersection edges are parallel to it. Corner 0 of the orthographic
/// rectangle is placed at 1 m from the axis. Face k spans sorted rays k and
/// k+1; its visible plane-coordinate bounds are estimated by unprojecting
/// the image sector between the rays, with depth capped per `extent`.
pub fn reconstruct_inner_planes(
    fan: &RayFan,
    cam: &CameraModel,
    extent: DepthExtent,
) -> Result<BoxReconstruction> {
    let axis = normalize3(cam.ray_dir(fan.vp.0, fan.vp.1));
    // Orthonormal basis of the plane perpendicular to the axis.
    let seed = if axis[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let a = normalize3(sub3(seed, scale3(axis, dot3(seed, axis))));
    let b = cross3(axis, a);

    // Perpendicular direction of each ray: step a short way along the image
    // ray from the vp and take the component of the viewing direction
    // orthogonal to the axis.
    let mut th = [0.0f64; 4];
    for k in 0..4 {
        let (dx, dy) = fan.dir(k);
        let q = (fan.vp.0 + 100.0 * dx, fan.vp.1 + 100.0 * dy);
        let d = cam.ray_dir(q.0, q.1);
        let perp = sub3(d, scale3(axis, dot3(d, axis)));
        if norm3(perp) < 1e-12 {
            return Err(GeometryError::InfeasibleRectangle);
        }
        let m = normalize3(perp);
        th[k] = dot3(m, b).atan2(dot3(m, a));
    }
    // Re-sort rays by the 3D angle, keeping the pairing with image angles.
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&i, &j| th[i].partial_cmp(&th[j]).unwrap());
    let th_sorted = [th[order[0]], th[order[1]], th[order[2]], th[order[3]]];
    let img_angles = [
        fan.angles[order[0]],
        fan.angles[order[1]],
        fan.angles[order[2]],
        fan.angles[order[3]],
    ];
    let sorted_fan = RayFan {
        vp: fan.vp,
        angles: th_sorted,
    };
    let rect = solve_box_rectangle(&sorted_fan)?;

    let corner = |k: usize| -> Vec3 {
        let r = rect.corner_dists[k];
        add3(
            scale3(a, r * th_sorted[k].cos()),
            scale3(b, r * th_sorted[k].sin()),
        )
    };
    let corners = [corner(0), corner(1), corner(2), corner(3)];

    let image_fan = RayFan {
        vp: fan.vp,
        angles: img_angles,
    };

    let mut planes = Vec::with_capacity(4);
    let mut labels = Vec::with_capacity(4);
    for k in 0..4 {
        let kn = (k + 1) % 4;
        let edge = sub3(corners[kn], corners[k]);
        let axis_t = normalize3(edge);
        let mut normal = normalize3(cross3(axis_t, axis));
        // Orient the normal toward the camera side.
        if dot3(normal, corners[k]) > 0.0 {
            normal = scale3(normal, -1.0);
        }
        let mut plane = PlaneGeometry {
            point: corners[k],
            normal,
            axis_s: axis,
            axis_t,
            bounds: [0.0; 4],
        };
        plane.bounds = face_bounds(&plane, &image_fan, k, cam, extent)?;
        planes.push(plane);
        let mid = scale3(add3(corners[k], corners[kn]), 0.5);
        labels.push(if mid[0].abs() > mid[1].abs() {
            if mid[0] < 0.0 {
                PlaneLabel::Left
            } else {
                PlaneLabel::Right
            }
        } else if mid[1] > 0.0 {
            // camera y points down, so positive y is below the camera
            PlaneLabel::Floor
        } else {
            PlaneLabel::Ceiling
        });
    }

    Ok(BoxReconstruction {
        axis,
        corners,
        planes: planes_into_array(planes),
        labels: [labels[0], labels[1], labels[2], labels[3]],
        edge_dirs: (rect.u_dir, rect.v_dir),
        sector_angles: img_angles,
    })
}

fn planes_into_array(v: Vec<PlaneGeometry>) -> [PlaneGeometry; 4] {
    let mut it = v.into_iter();
    [
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
    ]
}

/// Image-space polygon of the sector between sorted rays k and k+1, clipped
/// to the frame: vp, exit of ray k, boundary corners swept counterclockwise
/// (in image angle), exit of ray k+1.
pub fn sector_polygon(fan: &RayFan, k: usize, w: u32, h: u32) -> Vec<(f64, f64)> {
    let kn = (k + 1) % 4;
    let e0 = match fan.exit_point(k, w, h) {
        Some(p) => p,
        None => return Vec::new(),
    };
    let e1 = match fan.exit_point(kn, w, h) {
        Some(p) => p,
        None => return Vec::new(),
    };
    let mut poly = vec![fan.vp, e0];
    // Walk the frame boundary from e0 to e1 in the direction of increasing
    // angle around the vp, collecting the frame corners in between.
    let a0 = fan.angles[k];
    let mut a1 = fan.angles[kn];
    if a1 <= a0 {
        a1 += std::f64::consts::TAU;
    }
    let (wf, hf) = ((w - 1) as f64, (h - 1) as f64);
    let corners = [(0.0, 0.0), (wf, 0.0), (wf, hf), (0.0, hf)];
    let mut in_between: Vec<((f64, f64), f64)> = Vec::new();
    for c in corners {
        let mut ang = (c.1 - fan.vp.1).atan2(c.0 - fan.vp.0);
        while ang <= a0 {
            ang += std::f64::consts::TAU;
        }
        if ang < a1 {
            in_between.push((c, ang));
        }
    }
    in_between.sort_by(|x, y| x.1.partial_cmp(&y.1).unwrap());
    poly.extend(in_between.into_iter().map(|(c, _)| c));
    poly.push(e1);
    poly
}

fn face_bounds(
    plane: &PlaneGeometry,
    image_fan: &RayFan,
    k: usize,
    cam: &CameraModel,
    extent: DepthExtent,
) -> Result<[f64; 4]> {
    let poly = sector_polygon(image_fan, k, cam.image_w, cam.image_h);
    if poly.len() < 3 {
        return Err(GeometryError::DegenerateBounds);
    }
    // Sample the polygon edges and unproject onto the plane. Samples close
    // to the vp have unbounded depth and are dropped by the s cap below.
    let mut samples: Vec<(f64, f64)> = Vec::new();
    let n = poly.len();
    for i in 0..n {
        let p0 = poly[i];
        let p1 = poly[(i + 1) % n];
        for j in 0..=32 {
            let t = j as f64 / 32.0;
            let px = p0.0 + t * (p1.0 - p0.0);
            let py = p0.1 + t * (p1.1 - p0.1);
            if let Some((s, tt, _z)) = plane.intersect_ray(cam, px, py) {
                if s.is_finite() && tt.is_finite() && s > 0.0 {
                    samples.push((s, tt));
                }
            }
        }
    }
    if samples.is_empty() {
        return Err(GeometryError::DegenerateBounds);
    }
    let s_min = samples.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let s_cap = s_min * extent.far_ratio * extent.overscan;
    let s_max = samples
        .iter()
        .map(|p| p.0)
        .fold(0.0f64, f64::max)
        .min(s_cap);
    let kept: Vec<&(f64, f64)> = samples.iter().filter(|p| p.0 <= s_cap).collect();
    let t_min = kept.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let t_max = kept.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if !(s_max > s_min && t_max > t_min) {
        return Err(GeometryError::DegenerateBounds);
    }
    Ok([s_min, s_max, t_min, t_max])
}

// ---------------------------------------------------------------------------
// rectification

/// Empty border of a rectified canvas, px.
pub const RECT_MARGIN: f64 = 2.0;

/// Forward chart of a plane: homography taking plane coordinates (s, t) in
/// meters to image pixels, pixel ~ K [axis_s axis_t point] (s, t, 1)^T.
pub fn plane_chart_homography(plane: &PlaneGeometry, cam: &CameraModel) -> Homography {
    let f = cam.focal_px();
    let (cx, cy) = (cam.cx(), cam.cy());
    let cols = [plane.axis_s, plane.axis_t, plane.point];
    let mut fwd = [[0.0; 3]; 3];
    for c in 0..3 {
        let v = cols[c];
        fwd[0][c] = f * v[0] + cx * v[2];
        fwd[1][c] = f * v[1] + cy * v[2];
        fwd[2][c] = v[2];
    }
    Homography::from_matrix(fwd)
}

/// Per-axis pixel densities of a rectified canvas.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RectifyScale {
    pub px_per_meter_s: f64,
    pub px_per_meter_t: f64,
}

/// Homography from image pixels to a rect_size x rect_size fronto-parallel
/// canvas of the plane, plus the px-per-meter densities of its two axes.
///
/// The plane's bounds rectangle is stretched to fill the canvas with a 2 px
/// margin, per axis. Per-axis fitting (rather than a uniform scale) is what
/// makes the canvas independent of the assumed focal length: changing the
/// focal length reparametrizes each plane axis affinely, and the fit
/// normalizes that away.
pub fn plane_rectify_homography(
    plane: &PlaneGeometry,
    cam: &CameraModel,
    rect_size: u32,
) -> Result<(Homography, RectifyScale)> {
    let [s_min, s_max, t_min, t_max] = plane.bounds;
    if !(s_max > s_min && t_max > t_min) {
        return Err(GeometryError::DegenerateBounds);
    }
    let plane_from_img = plane_chart_homography(plane, cam).invert()?;
    // Plane must be in front of the camera over its bounds.
    let center = plane.world_point((s_min + s_max) / 2.0, (t_min + t_max) / 2.0);
    if center[2] <= 0.0 {
        return Err(GeometryError::PlaneBehindCamera);
    }
    let margin = RECT_MARGIN;
    let span = rect_size as f64 - 2.0 * margin;
    let sx = span / (s_max - s_min);
    let sy = span / (t_max - t_min);
    let fit = Homography::scale_translate(sx, sy, margin - sx * s_min, margin - sy * t_min);
    Ok((
        fit.compose(&plane_from_img),
        RectifyScale {
            px_per_meter_s: sx,
            px_per_meter_t: sy,
        },
    ))
}
