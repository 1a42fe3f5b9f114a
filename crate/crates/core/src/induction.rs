//! The candidate search that turns an image plus cues into a box program.
//!
//! Inner views: candidate ray fans are enumerated from segments grouped by
//! quadrant around the vanishing point, each fan is lifted to a 3D box, and
//! every face is rectified and scored by how periodic its texture is under
//! integer-lattice displacements. The best fan wins; a final pass picks the
//! far-plane extent and each face's lattice.
//!
//! Outer views: candidate vertical split lines take the place of fans; each
//! side's plane orientation is grid-searched and scored the same way.

use rayon::prelude::*;

use crate::cues::{min_segment_length, vp_inlier_distance, CueSet};
use crate::dsl::{lattice_to_loops, BoxProgram, CameraStmt, Lattice, PlaneBlock};
use crate::geometry::{
    cross3, dot3, normalize3, plane_rectify_homography, refit_vanishing_point,
    reconstruct_inner_planes, scale3, sector_polygon, sub3, BoxReconstruction, CameraModel,
    DepthExtent, LineSeg2, PlaneGeometry, PlaneLabel, RayFan, Vec3,
};
use crate::imaging::{shift_diff, warp_by_homography, ImageBuffer, Mask};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InductionError {
    #[error("inner view inference needs a vanishing point")]
    MissingVanishingPoint,
    #[error("no usable ray-fan candidates could be built from the cues")]
    NoCandidates,
    #[error("no usable split-line candidates for an outer view")]
    NoSplitLine,
    #[error("all candidates failed geometric reconstruction")]
    AllCandidatesFailed,
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Imaging(#[from] crate::imaging::ImagingError),
}

pub type Result<T> = std::result::Result<T, InductionError>;

#[derive(Debug, Clone)]
pub struct SearchConfig {
    /// Rectified canvas edge length.
    pub rect_size: u32,
    /// A period must repeat at least this many times across the canvas.
    pub min_repeats: u32,
    /// Smallest admissible period in canvas pixels.
    pub min_period_px: f64,
    /// Cap on enumerated ray fans.
    pub max_candidates: usize,
    /// Segments considered per image (by confidence * length).
    pub top_k_segments: usize,
    /// Fans that survive cue-support pre-ranking into fitness scoring.
    pub top_fans: usize,
    /// Fans whose rays all agree within this angle are duplicates.
    pub angle_dedup_deg: f64,
    /// Outer-view plane orientation grid step, degrees.
    pub outer_grid_deg: f64,
    /// Far-plane search evaluates t = k/10 for k in 0..far_steps.
    pub far_steps: usize,
    /// Landscapes flatter than this carry no period signal.
    pub flat_eps: f64,
    /// Best fitness must clear this for an axis to count as periodic.
    pub periodic_min_f: f64,
    /// A flat landscape this close to zero is a constant axis.
    pub uniform_eps: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            rect_size: 200,
            min_repeats: 3,
            min_period_px: 12.0,
            max_candidates: 4000,
            top_k_segments: 24,
            top_fans: 8,
            angle_dedup_deg: 0.5,
            outer_grid_deg: 5.0,
            far_steps: 10,
            flat_eps: 3e-4,
            periodic_min_f: -0.02,
            uniform_eps: 2e-3,
        }
    }
}

// ---------------------------------------------------------------------------
// fitness landscapes

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Fitness samples over axis-aligned displacements. Fitness is the negative
/// mean squared RGB difference per compared pixel, so 0 is a perfect repeat.
#[derive(Debug, Clone)]
pub struct Landscape {
    pub samples: Vec<(f64, f64)>,
    /// Displacement and fitness of the best admissible sample.
    pub best: Option<(f64, f64)>,
}

/// Fitness of one displacement; None when less than a quarter of the valid
/// pixels could be compared.
pub fn displacement_fitness(img: &ImageBuffer, valid: &Mask, d: (f64, f64)) -> Option<f64> {
    let (ssd, n) = shift_diff(img, valid, d);
    if n * 4 < valid.count() {
        return None;
    }
    Some(-ssd / n as f64)
}

/// Sweep displacements along one axis: a coarse 4 px grid over the
/// admissible period range, then 0.25 px refinement around the best cell.
pub fn axis_landscape(img: &ImageBuffer, valid: &Mask, axis: Axis, cfg: &SearchConfig) -> Landscape {
    let max_d = cfg.rect_size as f64 / cfg.min_repeats as f64;
    let to_vec = |d: f64| match axis {
        Axis::X => (d, 0.0),
        Axis::Y => (0.0, d),
    };
    let mut samples = Vec::new();
    let mut best: Option<(f64, f64)> = None;
    let mut d = cfg.min_period_px;
    while d <= max_d {
        if let Some(f) = displacement_fitness(img, valid, to_vec(d)) {
            samples.push((d, f));
            if best.is_none_or(|(_, bf)| f > bf) {
                best = Some((d, f));
            }
        }
        d += 4.0;
    }
    if let Some((bd, _)) = best {
        let mut d = (bd - 3.75).max(cfg.min_period_px);
        let hi = (bd + 3.75).min(max_d);
        while d <= hi {
            if let Some(f) = displacement_fitness(img, valid, to_vec(d)) {
                samples.push((d, f));
                if best.is_none_or(|(_, bf)| f > bf) {
                    best = Some((d, f));
                }
            }
            d += 0.25;
        }
    }
    // The coarse grid can land on a multiple of the true period (the
    // fundamental falls between grid cells but 2x or 3x of it does not).
    // Probe integer divisors of the winner and keep the smallest period
    // whose fitness is essentially as good.
    if let Some((bd, bf)) = best {
        let tol = 1e-3f64.max(0.05 * bf.abs());
        let max_k = (bd / cfg.min_period_px).floor() as u32;
        for k in (2..=max_k).rev() {
            let center = bd / k as f64;
            let mut d = (center - 2.0).max(cfg.min_period_px);
            let hi = center + 2.0;
            let mut local: Option<(f64, f64)> = None;
            while d <= hi {
                if let Some(f) = displacement_fitness(img, valid, to_vec(d)) {
                    samples.push((d, f));
                    if local.is_none_or(|(_, lf)| f > lf) {
                        local = Some((d, f));
                    }
                }
                d += 0.25;
            }
            if let Some((ld, lf)) = local {
                if lf >= bf - tol {
                    best = Some((ld, lf));
                    break;
                }
            }
        }
    }
    Landscape { samples, best }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AxisClass {
    /// No signal and near-zero difference everywhere: texture does not vary
    /// along this axis.
    Constant,
    Periodic { period: f64, fitness: f64 },
    /// Varies but never repeats well.
    Irregular,
}

pub fn classify_axis(land: &Landscape, cfg: &SearchConfig) -> AxisClass {
    let Some((best_d, best_f)) = land.best else {
        return AxisClass::Irregular;
    };
    let worst = land
        .samples
        .iter()
        .map(|&(_, f)| f)
        .fold(f64::INFINITY, f64::min);
    let spread = best_f - worst;
    if spread < cfg.flat_eps {
        if best_f > -cfg.uniform_eps {
            AxisClass::Constant
        } else {
            AxisClass::Irregular
        }
    } else if best_f > cfg.periodic_min_f && spread > 3.0 * cfg.flat_eps {
        AxisClass::Periodic {
            period: best_d,
            fitness: best_f,
        }
    } else {
        AxisClass::Irregular
    }
}

/// Result of the per-plane regularity search.
#[derive(Debug, Clone)]
pub struct PlaneRegularity {
    pub lattice: Option<Lattice>,
    pub class_x: AxisClass,
    pub class_y: AxisClass,
    /// Sum of the periodic axes' fitness (0 when no axis is periodic).
    pub fitness: f64,
}

/// How much each pixel's 7x7 neighborhood mean departs from the global
/// mean luma: high where a lattice element (glyph, stripe) sits on the
/// background, near zero on the background itself.
fn saliency_map(img: &ImageBuffer, valid: &Mask) -> Vec<f64> {
    let (w, h) = (img.width as usize, img.height as usize);
    let mut sum = vec![0.0f64; (w + 1) * (h + 1)];
    let mut global = 0.0;
    let mut n_valid = 0usize;
    for y in 0..h {
        for x in 0..w {
            let v = img.luma255(x as u32, y as u32);
            let i = (y + 1) * (w + 1) + x + 1;
            sum[i] = v + sum[i - 1] + sum[i - w - 1] - sum[i - w - 2];
            if valid.get(x as u32, y as u32) {
                global += v;
                n_valid += 1;
            }
        }
    }
    let global = if n_valid == 0 { 0.0 } else { global / n_valid as f64 };
    let mut out = vec![0.0f64; w * h];
    let r = 3usize;
    for y in 0..h {
        for x in 0..w {
            let x0 = x.saturating_sub(r);
            let y0 = y.saturating_sub(r);
            let x1 = (x + r + 1).min(w);
            let y1 = (y + r + 1).min(h);
            let n = ((x1 - x0) * (y1 - y0)) as f64;
            let mean = (sum[y1 * (w + 1) + x1] + sum[y0 * (w + 1) + x0]
                - sum[y0 * (w + 1) + x1]
                - sum[y1 * (w + 1) + x0])
                / n;
            out[y * w + x] = (mean - global).abs();
        }
    }
    out
}

/// Choose the lattice origin: jointly sweep phase offsets of the periodic
/// axes and keep the phase whose element positions are most salient, so
/// elements land on the glyphs rather than on the background between them.
/// A non-periodic axis contributes sample rows/columns across the canvas.
fn choose_origin(
    img: &ImageBuffer,
    valid: &Mask,
    period: (Option<f64>, Option<f64>),
    rect_size: u32,
) -> (f64, f64) {
    let sal = saliency_map(img, valid);
    let w = img.width as usize;
    let size = rect_size as f64;
    let positions = |p: Option<f64>, o: f64| -> Vec<f64> {
        match p {
            Some(p) => {
                let mut v = Vec::new();
                let mut x = o;
                while x < size {
                    v.push(x);
                    x += p;
                }
                v
            }
            // sample across the canvas along the non-repeating axis
            None => (0..)
                .map(|k| 3.0 + 11.0 * k as f64)
                .take_while(|&x| x < size)
                .collect(),
        }
    };
    let score = |ox: f64, oy: f64| -> f64 {
        let mut total = 0.0;
        let mut n = 0u32;
        for &x in &positions(period.0, ox) {
            for &y in &positions(period.1, oy) {
                let (xi, yi) = (x.round() as i64, y.round() as i64);
                if xi < 0 || yi < 0 || xi >= w as i64 || yi >= img.height as i64 {
                    continue;
                }
                if !valid.get(xi as u32, yi as u32) {
                    continue;
                }
                total += sal[yi as usize * w + xi as usize];
                n += 1;
            }
        }
        if n == 0 {
            f64::NEG_INFINITY
        } else {
            total / n as f64
        }
    };
    let offsets = |p: Option<f64>| -> Vec<f64> {
        match p {
            None => vec![0.0],
            Some(period) => {
                let steps = (period / 2.0).floor().max(4.0) as usize;
                (0..steps).map(|k| k as f64 * period / steps as f64).collect()
            }
        }
    };
    let mut best = ((0.0, 0.0), f64::NEG_INFINITY);
    for &ox in &offsets(period.0) {
        for &oy in &offsets(period.1) {
            let s = score(ox, oy);
            if s > best.1 {
                best = ((ox, oy), s);
            }
        }
    }
    best.0
}

/// Full regularity inference for one rectified plane: landscapes on both
/// axes, classification, then origin and loop ranges for the winning model.
pub fn plane_regularity(img: &ImageBuffer, valid: &Mask, cfg: &SearchConfig) -> PlaneRegularity {
    let lx = axis_landscape(img, valid, Axis::X, cfg);
    let ly = axis_landscape(img, valid, Axis::Y, cfg);
    let cx = classify_axis(&lx, cfg);
    let cy = classify_axis(&ly, cfg);
    let period = |c: AxisClass| match c {
        AxisClass::Periodic { period, .. } => Some(period),
        _ => None,
    };
    let fit = |c: AxisClass| match c {
        AxisClass::Periodic { fitness, .. } => fitness,
        _ => 0.0,
    };
    let (px, py) = (period(cx), period(cy));
    let fitness = fit(cx) + fit(cy);
    let lattice = if px.is_none() && py.is_none() {
        None
    } else {
        let origin = choose_origin(img, valid, (px, py), cfg.rect_size);
        let size = cfg.rect_size as f64;
        let count = |o: f64, p: f64| (((size - 1.0 - o) / p).floor() as i64 + 1).max(1);
        let lat = match (px, py) {
            (Some(px), Some(py)) => Lattice {
                origin,
                d1: (px, 0.0),
                d2: Some((0.0, py)),
                outer: (0, count(origin.0, px)),
                inner: Some((0, count(origin.1, py))),
            },
            (Some(px), None) => Lattice {
                origin,
                d1: (px, 0.0),
                d2: None,
                outer: (0, count(origin.0, px)),
                inner: None,
            },
            (None, Some(py)) => Lattice {
                origin,
                d1: (0.0, py),
                d2: None,
                outer: (0, count(origin.1, py)),
                inner: None,
            },
            (None, None) => unreachable!(),
        };
        Some(lat)
    };
    PlaneRegularity {
        lattice,
        class_x: cx,
        class_y: cy,
        fitness,
    }
}

// ---------------------------------------------------------------------------
// inner candidates

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::TAU);
    d.min(std::f64::consts::TAU - d)
}

/// Farthest in-frame frame-boundary intersection along a direction.
fn ray_exit(vp: (f64, f64), angle: f64, w: u32, h: u32) -> Option<(f64, f64)> {
    let fan = RayFan {
        vp,
        angles: [angle; 4],
    };
    fan.exit_point(0, w, h)
}

#[derive(Debug, Clone)]
pub struct ScoredFan {
    pub fan: RayFan,
    /// Total confidence * length of the supporting segments.
    pub support: f64,
}

/// Enumerate candidate ray fans: refit the vanishing point over its inlier
/// segments, derive one ray per segment, bucket rays by quadrant around the
/// vanishing point, and emit every one-per-quadrant combination (deduped,
/// strongest support first). Quadrants with no segment fall back to the ray
/// toward the matching frame corner.
pub fn enumerate_inner_candidates(
    cues: &CueSet,
    width: u32,
    height: u32,
    cfg: &SearchConfig,
) -> Result<Vec<ScoredFan>> {
    let vp0 = cues.vp.as_ref().ok_or(InductionError::MissingVanishingPoint)?;
    let tol = vp_inlier_distance(width, height);
    let min_len = min_segment_length(width, height);
    let inliers: Vec<&LineSeg2> = cues
        .segments
        .iter()
        .filter(|s| s.length() >= min_len && s.line_distance((vp0.x, vp0.y)) <= tol)
        .collect();
    let vp = if inliers.len() >= 2 {
        let owned: Vec<LineSeg2> = inliers.iter().map(|&&s| s).collect();
        refit_vanishing_point(&owned)
            .map(|(p, _)| p)
            .unwrap_or((vp0.x, vp0.y))
    } else {
        (vp0.x, vp0.y)
    };

    // one ray per segment, graded by confidence * length
    let mut rated: Vec<(f64, f64)> = inliers
        .iter()
        .map(|s| {
            let far = s.farther_end(vp);
            let angle = (far.1 - vp.1).atan2(far.0 - vp.0);
            (angle, s.confidence * s.length())
        })
        .collect();
    rated.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    rated.truncate(cfg.top_k_segments);

    // quadrants of the image frame around the vp
    let mut buckets: [Vec<(f64, f64)>; 4] = Default::default();
    for (angle, wgt) in rated {
        let q = match (angle.cos() >= 0.0, angle.sin() >= 0.0) {
            (true, true) => 0,   // down-right
            (false, true) => 1,  // down-left
            (false, false) => 2, // up-left
            (true, false) => 3,  // up-right
        };
        buckets[q].push((angle, wgt));
    }
    // fallback rays toward the frame corners
    let corners = [
        (width as f64 - 1.0, height as f64 - 1.0),
        (0.0, height as f64 - 1.0),
        (0.0, 0.0),
        (width as f64 - 1.0, 0.0),
    ];
    for (q, bucket) in buckets.iter_mut().enumerate() {
        if bucket.is_empty() {
            let c = corners[q];
            bucket.push(((c.1 - vp.1).atan2(c.0 - vp.0), 0.0));
        }
        // dedup near-identical rays within a bucket
        bucket.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let mut kept: Vec<(f64, f64)> = Vec::new();
        for &(a, wgt) in bucket.iter() {
            if kept
                .iter()
                .all(|&(ka, _)| angle_diff(a, ka) > cfg.angle_dedup_deg.to_radians())
            {
                kept.push((a, wgt));
            }
        }
        *bucket = kept;
    }

    let mut fans: Vec<ScoredFan> = Vec::new();
    'outer: for &(a0, w0) in &buckets[0] {
        for &(a1, w1) in &buckets[1] {
            for &(a2, w2) in &buckets[2] {
                for &(a3, w3) in &buckets[3] {
                    let fan = RayFan::from_angles(vp, [a0, a1, a2, a3]);
                    let support = w0 + w1 + w2 + w3;
                    let dup = fans.iter().any(|f| {
                        (0..4).all(|k| {
                            angle_diff(f.fan.angles[k], fan.angles[k])
                                <= cfg.angle_dedup_deg.to_radians()
                        })
                    });
                    if !dup {
                        fans.push(ScoredFan { fan, support });
                    }
                    if fans.len() >= cfg.max_candidates {
                        break 'outer;
                    }
                }
            }
        }
    }
    if fans.is_empty() {
        return Err(InductionError::NoCandidates);
    }
    fans.sort_by(|a, b| b.support.partial_cmp(&a.support).unwrap());
    Ok(fans)
}

fn polygon_area(poly: &[(f64, f64)]) -> f64 {
    let mut a = 0.0;
    for i in 0..poly.len() {
        let j = (i + 1) % poly.len();
        a += poly[i].0 * poly[j].1 - poly[j].0 * poly[i].1;
    }
    a.abs() / 2.0
}

/// Is the image angle inside the counterclockwise span from `from` to `to`?
fn in_ccw_span(theta: f64, from: f64, to: f64) -> bool {
    let span = (to - from).rem_euclid(std::f64::consts::TAU);
    let off = (theta - from).rem_euclid(std::f64::consts::TAU);
    off < span
}

/// Far-plane quad in image space: corners on the sector rays at fraction t
/// of the way from the vanishing point to the frame boundary.
pub fn far_quad(rec: &BoxReconstruction, vp: (f64, f64), t: f64, w: u32, h: u32) -> Option<[(f64, f64); 4]> {
    if t <= 0.0 {
        return None;
    }
    let mut quad = [(0.0, 0.0); 4];
    for k in 0..4 {
        let exit = ray_exit(vp, rec.sector_angles[k], w, h)?;
        quad[k] = (vp.0 + t * (exit.0 - vp.0), vp.1 + t * (exit.1 - vp.1));
    }
    Some(quad)
}

fn point_in_convex_quad(p: (f64, f64), quad: &[(f64, f64); 4]) -> bool {
    let mut sign = 0.0f64;
    for i in 0..4 {
        let a = quad[i];
        let b = quad[(i + 1) % 4];
        let cr = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
        if cr.abs() < 1e-12 {
            continue;
        }
        if sign == 0.0 {
            sign = cr.signum();
        } else if cr.signum() != sign {
            return false;
        }
    }
    true
}

/// Partition the frame into the four plane sectors plus the far quad.
/// Returns masks in plane order and the far mask.
pub fn segment_inner(
    rec: &BoxReconstruction,
    vp: (f64, f64),
    quad: Option<[(f64, f64); 4]>,
    width: u32,
    height: u32,
) -> ([Mask; 4], Mask) {
    let mut planes = [
        Mask::new(width, height, false),
        Mask::new(width, height, false),
        Mask::new(width, height, false),
        Mask::new(width, height, false),
    ];
    let mut far = Mask::new(width, height, false);
    for y in 0..height {
        for x in 0..width {
            let p = (x as f64, y as f64);
            if let Some(q) = &quad {
                if point_in_convex_quad(p, q) {
                    far.set(x, y, true);
                    continue;
                }
            }
            let theta = (p.1 - vp.1).atan2(p.0 - vp.0);
            let mut assigned = false;
            for k in 0..4 {
                if in_ccw_span(theta, rec.sector_angles[k], rec.sector_angles[(k + 1) % 4]) {
                    planes[k].set(x, y, true);
                    assigned = true;
                    break;
                }
            }
            if !assigned {
                // exactly on a boundary angle; give it to the first sector
                planes[0].set(x, y, true);
            }
        }
    }
    (planes, far)
}

// ---------------------------------------------------------------------------
// inner scoring

struct PlaneEval {
    rect: ImageBuffer,
    valid: Mask,
    /// Image coordinates of every canvas pixel, for far-quad exclusion.
    img_coords: Vec<(f32, f32)>,
    land_x: Landscape,
    land_y: Landscape,
    area: f64,
}

struct FanEval {
    rec: BoxReconstruction,
    vp: (f64, f64),
    planes: Vec<PlaneEval>,
    score: f64,
}

fn eval_plane(
    img: &ImageBuffer,
    plane: &PlaneGeometry,
    rec: &BoxReconstruction,
    k: usize,
    vp: (f64, f64),
    cam: &CameraModel,
    cfg: &SearchConfig,
) -> Result<PlaneEval> {
    let (h, _scale) = plane_rectify_homography(plane, cam, cfg.rect_size)?;
    let warped = warp_by_homography(img, &h, cfg.rect_size, cfg.rect_size)?;
    let hinv = h.invert()?;
    let mut valid = warped.validity;
    let mut img_coords = vec![(0.0f32, 0.0f32); (cfg.rect_size * cfg.rect_size) as usize];
    for cy in 0..cfg.rect_size {
        for cx in 0..cfg.rect_size {
            let i = (cy * cfg.rect_size + cx) as usize;
            let Some(p) = hinv.apply((cx as f64, cy as f64)) else {
                valid.data[i] = false;
                continue;
            };
            img_coords[i] = (p.0 as f32, p.1 as f32);
            if valid.data[i] {
                let theta = (p.1 - vp.1).atan2(p.0 - vp.0);
                if !in_ccw_span(theta, rec.sector_angles[k], rec.sector_angles[(k + 1) % 4]) {
                    valid.data[i] = false;
                }
            }
        }
    }
    let land_x = axis_landscape(&warped.image, &valid, Axis::X, cfg);
    let land_y = axis_landscape(&warped.image, &valid, Axis::Y, cfg);
    let poly = sector_polygon(
        &RayFan {
            vp,
            angles: rec.sector_angles,
        },
        k,
        img.width,
        img.height,
    );
    Ok(PlaneEval {
        rect: warped.image,
        valid,
        img_coords,
        land_x,
        land_y,
        area: polygon_area(&poly),
    })
}

/// Penalty used when an axis landscape has no admissible sample at all
/// (degenerate sector): worse than any plausible texture mismatch.
const MISSING_AXIS_PENALTY: f64 = -0.5;

fn eval_fan(img: &ImageBuffer, fan: &RayFan, cam: &CameraModel, cfg: &SearchConfig) -> Result<FanEval> {
    let rec = reconstruct_inner_planes(fan, cam, DepthExtent::default())?;
    let mut planes = Vec::with_capacity(4);
    let mut score = 0.0;
    let total_area = (img.width * img.height) as f64;
    for k in 0..4 {
        let pe = eval_plane(img, &rec.planes[k], &rec, k, fan.vp, cam, cfg)?;
        let axis_score = |l: &Landscape| l.best.map_or(MISSING_AXIS_PENALTY, |(_, f)| f);
        score += pe.area / total_area * (axis_score(&pe.land_x) + axis_score(&pe.land_y));
        planes.push(pe);
    }
    Ok(FanEval {
        rec,
        vp: fan.vp,
        planes,
        score,
    })
}

// ---------------------------------------------------------------------------
// far plane search

/// Re-evaluate a plane's best-displacement fitness with the far quad
/// excluded.
fn fitness_with_exclusion(pe: &PlaneEval, quad: &Option<[(f64, f64); 4]>, land: &Landscape, axis: Axis) -> Option<f64> {
    let (bd, _) = land.best?;
    let d = match axis {
        Axis::X => (bd, 0.0),
        Axis::Y => (0.0, bd),
    };
    let masked: Mask = match quad {
        None => pe.valid.clone(),
        Some(q) => {
            let mut m = pe.valid.clone();
            for (i, &(x, y)) in pe.img_coords.iter().enumerate() {
                if m.data[i] && point_in_convex_quad((x as f64, y as f64), q) {
                    m.data[i] = false;
                }
            }
            m
        }
    };
    displacement_fitness(&pe.rect, &masked, d)
}

fn far_score_at(ev: &FanEval, t: f64, width: u32, height: u32) -> f64 {
    let total_area = (width * height) as f64;
    let quad = far_quad(&ev.rec, ev.vp, t, width, height);
    let mut score = 0.0;
    for pe in &ev.planes {
        for (land, axis) in [(&pe.land_x, Axis::X), (&pe.land_y, Axis::Y)] {
            let f = fitness_with_exclusion(pe, &quad, land, axis).unwrap_or(MISSING_AXIS_PENALTY);
            score += pe.area / total_area * f;
        }
    }
    score
}

/// Where the supporting segments stop is where the far plane begins: each
/// vanishing-point-inlier segment's endpoint nearer the vanishing point
/// marks the far boundary along its ray. Detection fragments edges, so a
/// witness can stop early (too large a fraction) but almost never extends
/// past the boundary; the lower quartile of the fractions compensates for
/// that one-sided error. Returns None with too few witnesses.
fn far_t_from_segments(cues: &CueSet, vp: (f64, f64), width: u32, height: u32) -> Option<f64> {
    let tol = vp_inlier_distance(width, height);
    let min_len = min_segment_length(width, height);
    let mut ts: Vec<f64> = Vec::new();
    for s in &cues.segments {
        if s.length() < min_len || s.line_distance(vp) > tol {
            continue;
        }
        let far = s.farther_end(vp);
        let near = if far == s.a { s.b } else { s.a };
        let angle = (far.1 - vp.1).atan2(far.0 - vp.0);
        let Some(exit) = ray_exit(vp, angle, width, height) else {
            continue;
        };
        let exit_d = ((exit.0 - vp.0).powi(2) + (exit.1 - vp.1).powi(2)).sqrt();
        let near_d = ((near.0 - vp.0).powi(2) + (near.1 - vp.1).powi(2)).sqrt();
        if exit_d < 1.0 {
            continue;
        }
        let t = near_d / exit_d;
        if (0.02..=0.95).contains(&t) {
            ts.push(t);
        }
    }
    if ts.len() < 2 {
        return None;
    }
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Some(ts[ts.len() / 4])
}

/// Pick the far-plane fraction. The primary estimate comes from the cue
/// segments (their near endpoints witness the far boundary directly); the
/// fitness grid is the fallback when cues give no witness. The grid rule
/// takes the smallest t whose exclusion score is within a tenth of the
/// achievable improvement of the maximum, since fitness keeps creeping up
/// as ever more of the compressed deep texture is excluded.
fn choose_far_t(
    ev: &FanEval,
    cues: &CueSet,
    width: u32,
    height: u32,
    cfg: &SearchConfig,
) -> (f64, f64) {
    if let Some(t) = far_t_from_segments(cues, ev.vp, width, height) {
        return (t, far_score_at(ev, t, width, height));
    }
    let mut scores = Vec::new();
    for step in 0..cfg.far_steps {
        let t = step as f64 / 10.0;
        if t > 0.0 && far_quad(&ev.rec, ev.vp, t, width, height).is_none() {
            break;
        }
        scores.push((t, far_score_at(ev, t, width, height)));
    }
    let finite: Vec<f64> = scores
        .iter()
        .map(|&(_, s)| s)
        .filter(|s| *s > MISSING_AXIS_PENALTY)
        .collect();
    let best = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let worst = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = (0.1 * (best - worst)).max(1e-4);
    for &(t, s) in &scores {
        if s >= best - tol {
            return (t, s);
        }
    }
    (0.0, best)
}

// ---------------------------------------------------------------------------
// top level

#[derive(Debug, Clone)]
pub struct PlaneReport {
    pub label: PlaneLabel,
    pub class_x: AxisClass,
    pub class_y: AxisClass,
    pub lattice: Option<Lattice>,
    pub fitness: f64,
}

#[derive(Debug, Clone)]
pub struct Inference {
    pub program: BoxProgram,
    /// Segmentation masks keyed by plane label, plus "far" for inner views.
    pub masks: Vec<(String, Mask)>,
    pub score: f64,
    pub far_t: Option<f64>,
    pub reports: Vec<PlaneReport>,
}

/// Infer an inner-view (corridor) program.
pub fn infer_inner(img: &ImageBuffer, cues: &CueSet, cfg: &SearchConfig) -> Result<Inference> {
    let cam = CameraModel::new(img.width, img.height);
    let fans = enumerate_inner_candidates(cues, img.width, img.height, cfg)?;
    let considered: Vec<&ScoredFan> = fans.iter().take(cfg.top_fans).collect();
    let evals: Vec<(usize, Result<FanEval>)> = considered
        .par_iter()
        .enumerate()
        .map(|(i, sf)| (i, eval_fan(img, &sf.fan, &cam, cfg)))
        .collect();
    // deterministic winner: best score, lowest index on ties
    let mut best: Option<(usize, FanEval)> = None;
    for (i, ev) in evals {
        let Ok(ev) = ev else { continue };
        let replace = match &best {
            None => true,
            Some((_, b)) => ev.score > b.score,
        };
        if replace {
            best = Some((i, ev));
        }
    }
    let (_, ev) = best.ok_or(InductionError::AllCandidatesFailed)?;

    let (far_t, score) = choose_far_t(&ev, cues, img.width, img.height, cfg);
    let quad = far_quad(&ev.rec, ev.vp, far_t, img.width, img.height);

    // final per-plane regularity with the far region excluded
    let mut blocks = Vec::with_capacity(4);
    let mut reports = Vec::with_capacity(4);
    for (k, pe) in ev.planes.iter().enumerate() {
        let mut valid = pe.valid.clone();
        if let Some(q) = &quad {
            for (i, &(x, y)) in pe.img_coords.iter().enumerate() {
                if valid.data[i] && point_in_convex_quad((x as f64, y as f64), q) {
                    valid.data[i] = false;
                }
            }
        }
        let reg = plane_regularity(&pe.rect, &valid, cfg);
        let plane = &ev.rec.planes[k];
        blocks.push(PlaneBlock {
            pos: plane.point,
            normal: plane.normal,
            axis_s: plane.axis_s,
            axis_t: plane.axis_t,
            bounds: plane.bounds,
            label: ev.rec.labels[k],
            loops: reg.lattice.as_ref().map(lattice_to_loops),
        });
        reports.push(PlaneReport {
            label: ev.rec.labels[k],
            class_x: reg.class_x,
            class_y: reg.class_y,
            lattice: reg.lattice,
            fitness: reg.fitness,
        });
    }
    let program = BoxProgram {
        camera: CameraStmt {
            pos: [0.0, 0.0, 0.0],
            point_to: ev.rec.axis,
        },
        planes: blocks,
        far_plane: quad,
    };
    let (plane_masks, far_mask) = segment_inner(&ev.rec, ev.vp, quad, img.width, img.height);
    let mut masks: Vec<(String, Mask)> = plane_masks
        .into_iter()
        .enumerate()
        .map(|(k, m)| (ev.rec.labels[k].to_string(), m))
        .collect();
    masks.push(("far".to_string(), far_mask));
    Ok(Inference {
        program,
        masks,
        score,
        far_t: Some(far_t),
        reports,
    })
}

// ---------------------------------------------------------------------------
// outer views

#[derive(Debug, Clone)]
pub struct SplitLine {
    /// Line through a + u * dir in image space, roughly vertical.
    pub a: (f64, f64),
    pub dir: (f64, f64),
    pub support: f64,
}

/// Candidate facade split lines: predominantly vertical segments, with
/// collinear fragments merged first so a corner edge broken up by facade
/// texture still yields one full-strength candidate.
pub fn enumerate_outer_candidates(cues: &CueSet, width: u32, height: u32, cfg: &SearchConfig) -> Result<Vec<SplitLine>> {
    let min_len = 0.3 * height.min(width) as f64;
    let vertical: Vec<&LineSeg2> = cues
        .segments
        .iter()
        .filter(|s| (s.b.1 - s.a.1).abs() > 2.0 * (s.b.0 - s.a.0).abs())
        .collect();
    // greedy collinear grouping, longest first
    let mut order: Vec<usize> = (0..vertical.len()).collect();
    order.sort_by(|&i, &j| {
        vertical[j]
            .length()
            .partial_cmp(&vertical[i].length())
            .unwrap()
    });
    let mut grouped: Vec<(SplitLine, f64)> = Vec::new(); // (line, summed length)
    for &i in &order {
        let s = vertical[i];
        let len = s.length();
        let mid = ((s.a.0 + s.b.0) / 2.0, (s.a.1 + s.b.1) / 2.0);
        match grouped.iter_mut().find(|(l, _)| {
            let d = (mid.0 - l.a.0) * l.dir.1 - (mid.1 - l.a.1) * l.dir.0;
            let cross = ((s.b.0 - s.a.0) * l.dir.1 - (s.b.1 - s.a.1) * l.dir.0).abs();
            d.abs() < 3.0 && cross < 0.08 * len
        }) {
            Some((l, total)) => {
                *total += len;
                l.support += s.confidence * len;
            }
            None => grouped.push((
                SplitLine {
                    a: s.a,
                    dir: ((s.b.0 - s.a.0) / len, (s.b.1 - s.a.1) / len),
                    support: s.confidence * len,
                },
                len,
            )),
        }
    }
    let mut lines: Vec<SplitLine> = grouped
        .into_iter()
        .filter(|(_, total)| *total >= min_len)
        .map(|(l, _)| l)
        .collect();
    if lines.is_empty() {
        return Err(InductionError::NoSplitLine);
    }
    lines.sort_by(|a, b| b.support.partial_cmp(&a.support).unwrap());
    lines.truncate(6);
    let _ = cfg;
    Ok(lines)
}

/// Side masks of a split line (left = side of smaller x at mid-height).
fn split_masks(line: &SplitLine, width: u32, height: u32) -> (Mask, Mask) {
    let mut left = Mask::new(width, height, false);
    let mut right = Mask::new(width, height, false);
    // normal pointing toward +x when the line points down
    let n = (line.dir.1, -line.dir.0);
    let n = if n.0 >= 0.0 { n } else { (-n.0, -n.1) };
    for y in 0..height {
        for x in 0..width {
            let d = n.0 * (x as f64 - line.a.0) + n.1 * (y as f64 - line.a.1);
            if d < 0.0 {
                left.set(x, y, true);
            } else {
                right.set(x, y, true);
            }
        }
    }
    (left, right)
}

struct OuterPlaneFit {
    geom: PlaneGeometry,
    reg: PlaneRegularity,
    score: f64,
}

/// Fit one facade: rotate the plane about the 3D corner edge over a grid of
/// orientations and keep the most regular one.
fn fit_outer_plane(
    img: &ImageBuffer,
    line: &SplitLine,
    side_mask: &Mask,
    cam: &CameraModel,
    cfg: &SearchConfig,
) -> Result<OuterPlaneFit> {
    // 3D corner edge: back-project the split line at a nominal 5 m depth
    let ray_at = |u: f64| cam.ray_dir(line.a.0 + u * line.dir.0, line.a.1 + u * line.dir.1);
    let da = ray_at(0.0);
    let db = ray_at(100.0);
    let scale_z = |d: Vec3| scale3(d, 5.0 / d[2]);
    let a3 = scale_z(da);
    let b3 = scale_z(db);
    let edge = normalize3(sub3(b3, a3));
    // basis perpendicular to the edge: p away from the camera, q across
    let p = normalize3(sub3(a3, scale3(edge, dot3(a3, edge))));
    let q = cross3(edge, p);

    // sample side pixels once for the bounds estimate
    let mut samples: Vec<(f64, f64)> = Vec::new();
    for y in (0..img.height).step_by(7) {
        for x in (0..img.width).step_by(7) {
            if side_mask.get(x, y) {
                samples.push((x as f64 + 0.5, y as f64 + 0.5));
            }
        }
    }
    if samples.len() < 16 {
        return Err(InductionError::NoSplitLine);
    }

    let mut best: Option<OuterPlaneFit> = None;
    let steps = (150.0 / cfg.outer_grid_deg) as i32;
    for i in -steps / 2..=steps / 2 {
        let theta = (i as f64 * cfg.outer_grid_deg).to_radians();
        let normal = normalize3(add3_scaled(scale3(p, -theta.cos()), q, theta.sin()));
        if dot3(normal, a3) >= -1e-6 {
            continue;
        }
        let axis_s = normalize3(cross3(edge, normal));
        let geom_base = PlaneGeometry {
            point: a3,
            normal,
            axis_s,
            axis_t: edge,
            bounds: [0.0; 4],
        };
        // visible bounds by unprojection; reject orientations where rays
        // graze the plane
        let mut b = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
        let mut hits = 0usize;
        let mut depths: Vec<f64> = Vec::with_capacity(samples.len());
        for &(px, py) in &samples {
            if let Some((s, t, depth)) = geom_base.intersect_ray(cam, px, py) {
                if depth > 0.1 && depth < 200.0 {
                    b[0] = b[0].min(s);
                    b[1] = b[1].max(s);
                    b[2] = b[2].min(t);
                    b[3] = b[3].max(t);
                    depths.push(depth);
                    hits += 1;
                }
            }
        }
        if hits * 10 < samples.len() * 8 {
            continue;
        }
        depths.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let near = depths[depths.len() / 20];
        // cap the receding extent so grazing far regions cannot dominate
        let max_span = 12.0 * near;
        if b[1] - b[0] > max_span {
            if b[0].abs() < b[1].abs() {
                b[1] = b[0] + max_span;
            } else {
                b[0] = b[1] - max_span;
            }
        }
        if !(b[1] > b[0] + 1e-6 && b[3] > b[2] + 1e-6) {
            continue;
        }
        let mut geom = geom_base;
        geom.bounds = b;
        let Ok((h, _)) = plane_rectify_homography(&geom, cam, cfg.rect_size) else {
            continue;
        };
        let Ok(warped) = warp_by_homography(img, &h, cfg.rect_size, cfg.rect_size) else {
            continue;
        };
        let Ok(hinv) = h.invert() else { continue };
        let mut valid = warped.validity;
        for cy in 0..cfg.rect_size {
            for cx in 0..cfg.rect_size {
                let i = (cy * cfg.rect_size + cx) as usize;
                if !valid.data[i] {
                    continue;
                }
                if let Some((ix, iy)) = hinv.apply((cx as f64, cy as f64)) {
                    let (xi, yi) = (ix.round() as i64, iy.round() as i64);
                    if xi < 0
                        || yi < 0
                        || xi >= img.width as i64
                        || yi >= img.height as i64
                        || !side_mask.get(xi as u32, yi as u32)
                    {
                        valid.data[i] = false;
                    }
                } else {
                    valid.data[i] = false;
                }
            }
        }
        let reg = plane_regularity(&warped.image, &valid, cfg);
        let lx = axis_landscape(&warped.image, &valid, Axis::X, cfg);
        let ly = axis_landscape(&warped.image, &valid, Axis::Y, cfg);
        let raw = lx.best.map_or(MISSING_AXIS_PENALTY, |(_, f)| f)
            + ly.best.map_or(MISSING_AXIS_PENALTY, |(_, f)| f);
        if best.as_ref().is_none_or(|b| raw > b.score) {
            best = Some(OuterPlaneFit {
                geom,
                reg,
                score: raw,
            });
        }
    }
    best.ok_or(InductionError::NoSplitLine)
}

fn add3_scaled(a: Vec3, b: Vec3, s: f64) -> Vec3 {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
}

/// Infer an outer-view (two-facade) program.
pub fn infer_outer(img: &ImageBuffer, cues: &CueSet, cfg: &SearchConfig) -> Result<Inference> {
    let cam = CameraModel::new(img.width, img.height);
    let lines = enumerate_outer_candidates(cues, img.width, img.height, cfg)?;
    let lines: Vec<&SplitLine> = lines.iter().take(3).collect();
    let results: Vec<Result<(f64, &SplitLine, OuterPlaneFit, OuterPlaneFit)>> = lines
        .par_iter()
        .map(|line| {
            let (left, right) = split_masks(line, img.width, img.height);
            let fl = fit_outer_plane(img, line, &left, &cam, cfg)?;
            let fr = fit_outer_plane(img, line, &right, &cam, cfg)?;
            let total = (img.width * img.height) as f64;
            let score =
                left.count() as f64 / total * fl.score + right.count() as f64 / total * fr.score;
            Ok((score, *line, fl, fr))
        })
        .collect();
    let mut best: Option<(f64, &SplitLine, OuterPlaneFit, OuterPlaneFit)> = None;
    for r in results {
        let Ok(cand) = r else { continue };
        if best.as_ref().is_none_or(|b| cand.0 > b.0) {
            best = Some(cand);
        }
    }
    let (score, line, fl, fr) = best.ok_or(InductionError::NoSplitLine)?;

    let mut blocks = Vec::new();
    let mut reports = Vec::new();
    for (fit, label) in [(&fl, PlaneLabel::WallA), (&fr, PlaneLabel::WallB)] {
        blocks.push(PlaneBlock {
            pos: fit.geom.point,
            normal: fit.geom.normal,
            axis_s: fit.geom.axis_s,
            axis_t: fit.geom.axis_t,
            bounds: fit.geom.bounds,
            label,
            loops: fit.reg.lattice.as_ref().map(lattice_to_loops),
        });
        reports.push(PlaneReport {
            label,
            class_x: fit.reg.class_x,
            class_y: fit.reg.class_y,
            lattice: fit.reg.lattice.clone(),
            fitness: fit.reg.fitness,
        });
    }
    let program = BoxProgram {
        camera: CameraStmt {
            pos: [0.0, 0.0, 0.0],
            point_to: [0.0, 0.0, 1.0],
        },
        planes: blocks,
        far_plane: None,
    };
    let (left, right) = split_masks(line, img.width, img.height);
    Ok(Inference {
        program,
        masks: vec![
            (PlaneLabel::WallA.to_string(), left),
            (PlaneLabel::WallB.to_string(), right),
        ],
        score,
        far_t: None,
        reports,
    })
}

/// Infer a program, choosing the view type from the cues: a vanishing point
/// means an inner view, otherwise an outer view is attempted.
pub fn infer_box_program(img: &ImageBuffer, cues: &CueSet, cfg: &SearchConfig) -> Result<Inference> {
    if cues.vp.is_some() {
        infer_inner(img, cues, cfg)
    } else {
        infer_outer(img, cues, cfg)
    }
}
