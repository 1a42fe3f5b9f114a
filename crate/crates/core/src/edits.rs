//! Program-guided editing: inpainting, extrapolation, and single-image
//! view synthesis.
//!
//! All three operations share one pipeline shape: rectify each plane of the
//! program onto a fronto-parallel canvas, run regularity-guided PatchMatch
//! there, and warp the result back. Pixels outside the edit region are
//! never touched.
//!
//! Plane geometry in a program is expressed in the source camera's frame
//! (camera at the origin looking down +z). A new camera passed to
//! `synthesize_view` is interpreted in that same frame.

use crate::dsl::{loops_to_lattice, BoxProgram, CameraStmt, Lattice};
use crate::geometry::{
    cross3, dot3, normalize3, plane_chart_homography, scale3, sub3, CameraModel, Homography,
    PlaneGeometry, Vec3, RECT_MARGIN,
};
use crate::imaging::{
    bilinear_sample, warp_by_homography, warp_mask_by_homography, ImageBuffer, Mask,
};
use crate::patchmatch::{pm_inpaint, PmConfig};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EditError {
    #[error("hole covers the entire frame, nothing to copy from")]
    HoleCoversFrame,
    #[error("target region is unreachable by any plane of the program")]
    TargetUnreachable,
    #[error("target overlaps the subject mask")]
    TargetOverlapsSubject,
    #[error("new camera coincides with its aim point")]
    DegenerateCamera,
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Imaging(#[from] crate::imaging::ImagingError),
}

pub type Result<T> = std::result::Result<T, EditError>;

#[derive(Debug, Clone)]
pub struct EditConfig {
    /// Rectified working canvas size for the original plane bounds; larger
    /// canvases keep more source detail at more cost.
    pub canvas_size: u32,
    /// Canvas size the program's lattice coordinates are expressed in
    /// (the induction canvas).
    pub lattice_ref_size: u32,
    /// Seam blend width at plane boundaries, px.
    pub feather_px: f64,
    pub pm: PmConfig,
}

impl Default for EditConfig {
    fn default() -> Self {
        EditConfig {
            canvas_size: 512,
            lattice_ref_size: 200,
            feather_px: 2.0,
            pm: PmConfig::default(),
        }
    }
}

// ---------------------------------------------------------------------------
// plane assignment

/// Per-pixel owner of the frame under a program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Owner {
    Plane(usize),
    Far,
    None,
}

fn point_in_quad(p: (f64, f64), quad: &[(f64, f64); 4]) -> bool {
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

/// Assign every pixel to the program plane it sees: the nearest positive
/// ray-plane intersection, bounded in the across-axis (t) and, when
/// `relax_depth` is false, in the receding axis (s) as well. Far-quad
/// pixels of an inner view are owned by the far plane.
pub fn assign_pixels(
    program: &BoxProgram,
    cam: &CameraModel,
    width: u32,
    height: u32,
    relax_depth: bool,
) -> Vec<Owner> {
    let geoms: Vec<PlaneGeometry> = program.planes.iter().map(|b| b.geometry()).collect();
    let mut owners = vec![Owner::None; (width * height) as usize];
    for y in 0..height {
        for x in 0..width {
            let i = (y * width + x) as usize;
            let p = (x as f64, y as f64);
            if let Some(q) = &program.far_plane {
                if point_in_quad(p, q) {
                    owners[i] = Owner::Far;
                    continue;
                }
            }
            let mut best: Option<(f64, usize)> = None;
            for (k, g) in geoms.iter().enumerate() {
                let Some((s, t, depth)) = g.intersect_ray(cam, p.0, p.1) else {
                    continue;
                };
                if depth <= 1e-6 {
                    continue;
                }
                let [s0, s1, t0, t1] = g.bounds;
                let span_s = s1 - s0;
                let tol = 1e-6;
                let s_ok = if relax_depth {
                    s >= s0 - 0.5 * span_s
                } else {
                    s >= s0 - tol && s <= s1 + tol
                };
                if !(s_ok && t >= t0 - tol && t <= t1 + tol) {
                    continue;
                }
                if best.is_none_or(|(bd, _)| depth < bd) {
                    best = Some((depth, k));
                }
            }
            if let Some((_, k)) = best {
                owners[i] = Owner::Plane(k);
            }
        }
    }
    owners
}

// ---------------------------------------------------------------------------
// canvases and lattices

/// A rectified working canvas for one plane: homography image -> canvas,
/// the bounds it covers, and its px-per-meter densities.
struct Canvas {
    h: Homography,
    width: u32,
    height: u32,
    bounds: [f64; 4],
    ppm: (f64, f64),
}

const MAX_CANVAS_PX: u32 = 1600;

/// Build a canvas over `bounds` with the given densities, from the chart of
/// `geom` seen by `cam`.
fn build_canvas(
    geom: &PlaneGeometry,
    cam: &CameraModel,
    bounds: [f64; 4],
    ppm: (f64, f64),
) -> Result<Canvas> {
    let [s0, s1, t0, t1] = bounds;
    let w = ((s1 - s0) * ppm.0 + 2.0 * RECT_MARGIN).ceil();
    let h = ((t1 - t0) * ppm.1 + 2.0 * RECT_MARGIN).ceil();
    if !(w.is_finite() && h.is_finite()) || w < 8.0 || h < 8.0 {
        return Err(EditError::TargetUnreachable);
    }
    let (w, h) = (
        (w as u32).min(MAX_CANVAS_PX),
        (h as u32).min(MAX_CANVAS_PX),
    );
    let chart = plane_chart_homography(geom, cam);
    let plane_from_img = chart.invert()?;
    let fit = Homography::scale_translate(
        ppm.0,
        ppm.1,
        RECT_MARGIN - ppm.0 * s0,
        RECT_MARGIN - ppm.1 * t0,
    );
    Ok(Canvas {
        h: fit.compose(&plane_from_img),
        width: w,
        height: h,
        bounds,
        ppm,
    })
}

/// Canvas coordinates of a plane point (s, t).
fn canvas_coords(cv: &Canvas, s: f64, t: f64) -> (f64, f64) {
    (
        RECT_MARGIN + (s - cv.bounds[0]) * cv.ppm.0,
        RECT_MARGIN + (t - cv.bounds[2]) * cv.ppm.1,
    )
}

/// Densities that reproduce the induction canvas resolution scaled to
/// `canvas_size` over the plane's original bounds.
fn base_ppm(bounds: [f64; 4], canvas_size: u32) -> (f64, f64) {
    let span = canvas_size as f64 - 2.0 * RECT_MARGIN;
    (span / (bounds[1] - bounds[0]), span / (bounds[3] - bounds[2]))
}

/// Re-express a lattice given in the induction reference canvas (size
/// `ref_size` over `bounds_ref`) in a working canvas over `bounds_new`
/// with densities `ppm`.
fn remap_lattice(
    lat: &Lattice,
    bounds_ref: [f64; 4],
    ref_size: u32,
    bounds_new: [f64; 4],
    ppm: (f64, f64),
) -> Lattice {
    let span = ref_size as f64 - 2.0 * RECT_MARGIN;
    let ppm_ref = (
        span / (bounds_ref[1] - bounds_ref[0]),
        span / (bounds_ref[3] - bounds_ref[2]),
    );
    let fx = ppm.0 / ppm_ref.0;
    let fy = ppm.1 / ppm_ref.1;
    let map_x = |c: f64| {
        let s = (c - RECT_MARGIN) / ppm_ref.0 + bounds_ref[0];
        RECT_MARGIN + (s - bounds_new[0]) * ppm.0
    };
    let map_y = |c: f64| {
        let t = (c - RECT_MARGIN) / ppm_ref.1 + bounds_ref[2];
        RECT_MARGIN + (t - bounds_new[2]) * ppm.1
    };
    Lattice {
        origin: (map_x(lat.origin.0), map_y(lat.origin.1)),
        d1: (lat.d1.0 * fx, lat.d1.1 * fy),
        d2: lat.d2.map(|d| (d.0 * fx, d.1 * fy)),
        outer: lat.outer,
        inner: lat.inner,
    }
}

/// Inpaint one plane's canvas: warp the image, mark everything that is not
/// a trustworthy source pixel as hole, run guided PatchMatch.
fn fill_canvas(
    img: &ImageBuffer,
    known: &Mask,
    cv: &Canvas,
    lattice: Option<&Lattice>,
    pm: &PmConfig,
) -> Result<ImageBuffer> {
    let warped = warp_by_homography(img, &cv.h, cv.width, cv.height)?;
    let canvas_known = warp_mask_by_homography(known, &cv.h, cv.width, cv.height)?;
    let mut hole = Mask::new(cv.width, cv.height, false);
    for i in 0..hole.data.len() {
        hole.data[i] = !(warped.validity.data[i] && canvas_known.data[i]);
    }
    if hole.count() == hole.data.len() {
        return Err(EditError::HoleCoversFrame);
    }
    Ok(pm_inpaint(&warped.image, &hole, None, lattice, pm))
}

fn plane_lattice(
    program: &BoxProgram,
    k: usize,
    bounds_new: [f64; 4],
    ppm: (f64, f64),
    cfg: &EditConfig,
) -> Option<Lattice> {
    let block = &program.planes[k];
    let loops = block.loops.as_ref()?;
    let lat = loops_to_lattice(loops);
    Some(remap_lattice(
        &lat,
        block.bounds,
        cfg.lattice_ref_size,
        bounds_new,
        ppm,
    ))
}

// ---------------------------------------------------------------------------
// inpaint

/// Fill `hole` using the program's per-plane regular structure. Non-hole
/// pixels are returned bit-identical. Far-plane holes are filled by
/// unguided PatchMatch restricted to far-plane sources.
pub fn inpaint(
    img: &ImageBuffer,
    hole: &Mask,
    program: &BoxProgram,
    cam: &CameraModel,
    cfg: &EditConfig,
) -> Result<ImageBuffer> {
    assert_eq!((img.width, img.height), (hole.width, hole.height));
    if hole.count() == 0 {
        return Ok(img.clone());
    }
    if hole.count() == hole.data.len() {
        return Err(EditError::HoleCoversFrame);
    }
    let owners = assign_pixels(program, cam, img.width, img.height, true);
    let mut known = Mask::new(img.width, img.height, false);
    for i in 0..known.data.len() {
        known.data[i] = !hole.data[i];
    }
    let mut out = img.clone();

    for k in 0..program.planes.len() {
        let hole_px: Vec<usize> = (0..owners.len())
            .filter(|&i| hole.data[i] && owners[i] == Owner::Plane(k))
            .collect();
        if hole_px.is_empty() {
            continue;
        }
        // restrict sources to this plane
        let mut plane_known = known.clone();
        for i in 0..owners.len() {
            if owners[i] != Owner::Plane(k) {
                plane_known.data[i] = false;
            }
        }
        let geom = program.planes[k].geometry();
        let ppm = base_ppm(geom.bounds, cfg.canvas_size);
        let cv = build_canvas(&geom, cam, geom.bounds, ppm)?;
        let lattice = plane_lattice(program, k, cv.bounds, cv.ppm, cfg);
        let filled = fill_canvas(img, &plane_known, &cv, lattice.as_ref(), &cfg.pm)?;
        for &i in &hole_px {
            let (x, y) = ((i as u32) % img.width, (i as u32) / img.width);
            if let Some(c) = cv.h.apply((x as f64, y as f64)) {
                if c.0 >= 0.0
                    && c.1 >= 0.0
                    && c.0 <= (cv.width - 1) as f64
                    && c.1 <= (cv.height - 1) as f64
                {
                    out.set(x, y, bilinear_sample(&filled, c.0, c.1));
                }
            }
        }
    }

    // far-plane and unowned holes: plain PatchMatch in image space, with
    // sources confined to the matching region when it is big enough
    for owner in [Owner::Far, Owner::None] {
        let needs: Vec<usize> = (0..owners.len())
            .filter(|&i| hole.data[i] && owners[i] == owner)
            .collect();
        if needs.is_empty() {
            continue;
        }
        let mut pm_hole = hole.clone();
        let region: Vec<usize> = (0..owners.len()).filter(|&i| owners[i] == owner).collect();
        let sources_in_region = region.iter().filter(|&&i| !hole.data[i]).count();
        if sources_in_region > 500 {
            for i in 0..owners.len() {
                if owners[i] != owner {
                    pm_hole.data[i] = true;
                }
            }
        }
        let filled = pm_inpaint(img, &pm_hole, None, None, &cfg.pm);
        for &i in &needs {
            let (x, y) = ((i as u32) % img.width, (i as u32) / img.width);
            out.set(x, y, filled.get(x, y));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// extrapolate

/// Fill `target` by extending the program's planes beyond their visible
/// bounds, continuing each plane's lattice. `subject` restricts the source
/// pixels (pass an empty mask to allow the whole frame). Pixels outside
/// `target` are returned bit-identical.
pub fn extrapolate(
    img: &ImageBuffer,
    subject: &Mask,
    target: &Mask,
    program: &BoxProgram,
    cam: &CameraModel,
    cfg: &EditConfig,
) -> Result<ImageBuffer> {
    assert_eq!((img.width, img.height), (target.width, target.height));
    if target.count() == 0 {
        return Ok(img.clone());
    }
    if subject.count() > 0 && subject.intersects(target) {
        return Err(EditError::TargetOverlapsSubject);
    }
    let strict = assign_pixels(program, cam, img.width, img.height, false);
    let geoms: Vec<PlaneGeometry> = program.planes.iter().map(|b| b.geometry()).collect();

    // assign target pixels by nearest unbounded intersection
    let mut target_owner = vec![Owner::None; strict.len()];
    for y in 0..img.height {
        for x in 0..img.width {
            let i = (y * img.width + x) as usize;
            if !target.data[i] {
                continue;
            }
            // the target extends some plane beyond its visible bounds; pick
            // the plane whose bounds rectangle is nearest to the hit point,
            // not the nearest unbounded hit (a neighboring facade's infinite
            // extension can pass in front of the right plane)
            let mut best: Option<(f64, f64, usize)> = None;
            for (k, g) in geoms.iter().enumerate() {
                if let Some((s, t, depth)) = g.intersect_ray(cam, x as f64, y as f64) {
                    if depth <= 1e-6 {
                        continue;
                    }
                    let [s0, s1, t0, t1] = g.bounds;
                    let ds = (s0 - s).max(s - s1).max(0.0);
                    let dt = (t0 - t).max(t - t1).max(0.0);
                    let d2 = ds * ds + dt * dt;
                    if best.is_none_or(|(bd2, bd, _)| (d2, depth) < (bd2, bd)) {
                        best = Some((d2, depth, k));
                    }
                }
            }
            if let Some((_, _, k)) = best {
                target_owner[i] = Owner::Plane(k);
            }
        }
    }
    if !target_owner.iter().any(|o| matches!(o, Owner::Plane(_))) {
        return Err(EditError::TargetUnreachable);
    }

    let mut out = img.clone();
    for (k, geom) in geoms.iter().enumerate() {
        let targets: Vec<(u32, u32)> = (0..target_owner.len())
            .filter(|&i| target_owner[i] == Owner::Plane(k))
            .map(|i| ((i as u32) % img.width, (i as u32) / img.width))
            .collect();
        if targets.is_empty() {
            continue;
        }
        // extended bounds covering the target footprint on this plane
        let mut b = geom.bounds;
        for &(x, y) in &targets {
            if let Some((s, t, depth)) = geom.intersect_ray(cam, x as f64, y as f64) {
                if depth > 1e-6 {
                    b[0] = b[0].min(s);
                    b[1] = b[1].max(s);
                    b[2] = b[2].min(t);
                    b[3] = b[3].max(t);
                }
            }
        }
        let pad_s = 0.02 * (b[1] - b[0]);
        let pad_t = 0.02 * (b[3] - b[2]);
        let bounds_e = [b[0] - pad_s, b[1] + pad_s, b[2] - pad_t, b[3] + pad_t];

        let ppm = base_ppm(geom.bounds, cfg.canvas_size);
        let cv = build_canvas(geom, cam, bounds_e, ppm)?;
        // sources: this plane's strictly-owned, non-target pixels, further
        // cut to the subject when one is given
        let mut known = Mask::new(img.width, img.height, false);
        for i in 0..strict.len() {
            known.data[i] = strict[i] == Owner::Plane(k)
                && !target.data[i]
                && (subject.count() == 0 || subject.data[i]);
        }
        let lattice = plane_lattice(program, k, cv.bounds, cv.ppm, cfg);
        let filled = fill_canvas(img, &known, &cv, lattice.as_ref(), &cfg.pm)?;
        for &(x, y) in &targets {
            if let Some(c) = cv.h.apply((x as f64, y as f64)) {
                if c.0 >= 0.0
                    && c.1 >= 0.0
                    && c.0 <= (cv.width - 1) as f64
                    && c.1 <= (cv.height - 1) as f64
                {
                    out.set(x, y, bilinear_sample(&filled, c.0, c.1));
                }
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// view synthesis

/// Orthonormal roll-free camera basis (columns right, down, forward) for a
/// camera at `pos` aimed at `point_to`, in a y-down world.
pub fn camera_basis(pos: Vec3, point_to: Vec3) -> Result<[[f64; 3]; 3]> {
    let fwd = sub3(point_to, pos);
    let n = dot3(fwd, fwd).sqrt();
    if n < 1e-12 {
        return Err(EditError::DegenerateCamera);
    }
    let z = scale3(fwd, 1.0 / n);
    // y points down, so "up" is -y; right = up x forward in a right-handed
    // y-down frame works out to [0,1,0] x z
    let up_cross = cross3([0.0, 1.0, 0.0], z);
    let nx = dot3(up_cross, up_cross).sqrt();
    if nx < 1e-9 {
        // looking straight up or down: fall back to x as right
        let x = [1.0, 0.0, 0.0];
        let y = cross3(z, x);
        return Ok([x, y, z]);
    }
    let x = scale3(up_cross, 1.0 / nx);
    let y = cross3(z, x);
    Ok([x, y, z])
}

fn to_cam_frame(basis: &[[f64; 3]; 3], pos: Vec3, p: Vec3) -> Vec3 {
    let d = sub3(p, pos);
    [dot3(basis[0], d), dot3(basis[1], d), dot3(basis[2], d)]
}

fn rotate_to_cam(basis: &[[f64; 3]; 3], v: Vec3) -> Vec3 {
    [dot3(basis[0], v), dot3(basis[1], v), dot3(basis[2], v)]
}

fn transform_geometry(geom: &PlaneGeometry, basis: &[[f64; 3]; 3], pos: Vec3) -> PlaneGeometry {
    PlaneGeometry {
        point: to_cam_frame(basis, pos, geom.point),
        normal: normalize3(rotate_to_cam(basis, geom.normal)),
        axis_s: rotate_to_cam(basis, geom.axis_s),
        axis_t: rotate_to_cam(basis, geom.axis_t),
        bounds: geom.bounds,
    }
}

/// Fronto-parallel far-plane geometry recovered from the program's far
/// quad: depth from intersecting the quad's corner rays with the adjacent
/// wall planes, axes perpendicular to the box axis.
pub fn far_plane_geometry(program: &BoxProgram, cam: &CameraModel) -> Option<PlaneGeometry> {
    let quad = program.far_plane?;
    let axis = normalize3(sub3(program.camera.point_to, program.camera.pos));
    let mut depth_sum = 0.0;
    let mut n = 0u32;
    for q in &quad {
        for block in &program.planes {
            let g = block.geometry();
            if let Some((s, t, _)) = g.intersect_ray(cam, q.0, q.1) {
                let [s0, s1, t0, t1] = g.bounds;
                let span_s = s1 - s0;
                let span_t = t1 - t0;
                // only trust walls whose extension actually passes nearby
                if s >= s0 - 0.1 * span_s
                    && s <= s1 + 2.0 * span_s
                    && t >= t0 - 0.5 * span_t
                    && t <= t1 + 0.5 * span_t
                {
                    let p = g.world_point(s, t);
                    depth_sum += dot3(p, axis);
                    n += 1;
                }
            }
        }
    }
    if n == 0 {
        return None;
    }
    let depth = depth_sum / n as f64;
    let seed = if axis[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let axis_s = normalize3(sub3(seed, scale3(axis, dot3(seed, axis))));
    let axis_t = cross3(axis, axis_s);
    let mut geom = PlaneGeometry {
        point: scale3(axis, depth),
        normal: scale3(axis, -1.0),
        axis_s,
        axis_t,
        bounds: [0.0; 4],
    };
    let mut b = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
    for q in &quad {
        let (s, t, _) = geom.intersect_ray(cam, q.0, q.1)?;
        b[0] = b[0].min(s);
        b[1] = b[1].max(s);
        b[2] = b[2].min(t);
        b[3] = b[3].max(t);
    }
    if !(b[1] > b[0] + 1e-9 && b[3] > b[2] + 1e-9) {
        return None;
    }
    geom.bounds = b;
    Some(geom)
}

/// Mean far-plane depth along the box axis, if the program has a far quad.
pub fn far_plane_depth(program: &BoxProgram, cam: &CameraModel) -> Option<f64> {
    let g = far_plane_geometry(program, cam)?;
    let axis = normalize3(sub3(program.camera.point_to, program.camera.pos));
    Some(dot3(g.point, axis))
}

struct RenderPlane {
    geom_new: PlaneGeometry,
    texture: ImageBuffer,
    tex_valid: Option<Mask>,
    cv: Canvas,
    /// Extended bounds a hit must fall into.
    bounds: [f64; 4],
    /// Chart of the plane in the source camera, for sampling the source
    /// image directly where the surface was visible.
    chart: Homography,
    /// Chart of the plane in the new camera, for estimating the output
    /// sampling density a hit requires.
    chart_new: Homography,
    /// Lattice basis vectors in plane meters, when the plane is periodic.
    lat_m: Option<((f64, f64), Option<(f64, f64)>)>,
    owner: Owner,
}

/// Source-pixel densities (px per meter along s and t) of a chart at (s, t).
fn chart_density(h: &Homography, s: f64, t: f64) -> Option<(f64, f64)> {
    let e = 1e-4;
    let p = h.apply((s, t))?;
    let ps = h.apply((s + e, t))?;
    let pt = h.apply((s, t + e))?;
    Some((
        (ps.0 - p.0).hypot(ps.1 - p.1) / e,
        (pt.0 - p.0).hypot(pt.1 - p.1) / e,
    ))
}

/// Render the program from a new camera. Plane textures are rectified from
/// the source image and extrapolated with guided PatchMatch to cover parts
/// visible only from the new camera; the far plane is a textured quad
/// without extrapolation. Validity marks pixels covered by some plane.
pub fn synthesize_view(
    img: &ImageBuffer,
    program: &BoxProgram,
    cam: &CameraModel,
    new_cam: &CameraStmt,
    cfg: &EditConfig,
) -> Result<crate::imaging::WarpResult> {
    let basis = camera_basis(new_cam.pos, new_cam.point_to)?;
    let strict = assign_pixels(program, cam, img.width, img.height, false);
    let geoms: Vec<PlaneGeometry> = program.planes.iter().map(|b| b.geometry()).collect();
    let far_geom = far_plane_geometry(program, cam);

    // Footprint of the new view on each plane: sample new-view rays, give
    // each to the nearest plausible surface (far plane included), and grow
    // that plane's bounds. Growth is capped so grazing rays near a plane's
    // horizon cannot explode the canvas.
    let all_new: Vec<PlaneGeometry> = geoms
        .iter()
        .chain(far_geom.iter())
        .map(|g| transform_geometry(g, &basis, new_cam.pos))
        .collect();
    let mut foot: Vec<[f64; 4]> = geoms.iter().map(|g| g.bounds).collect();
    let mut any_hit = vec![false; geoms.len()];
    let lims: Vec<[f64; 4]> = geoms
        .iter()
        .map(|g| {
            let [s0, s1, t0, t1] = g.bounds;
            let (ds, dt) = (s1 - s0, t1 - t0);
            [s0 - 2.0 * ds, s1 + 2.0 * ds, t0 - 0.75 * dt, t1 + 0.75 * dt]
        })
        .collect();
    let step = 4;
    for y in (0..img.height).step_by(step) {
        for x in (0..img.width).step_by(step) {
            let mut nearest: Option<(f64, usize, f64, f64)> = None;
            for (k, g) in all_new.iter().enumerate() {
                let Some((s, t, depth)) = g.intersect_ray(cam, x as f64, y as f64) else {
                    continue;
                };
                if depth <= 1e-6 {
                    continue;
                }
                if k < geoms.len() {
                    let lim = lims[k];
                    if s < lim[0] || s > lim[1] || t < lim[2] || t > lim[3] {
                        continue;
                    }
                } else {
                    let [s0, s1, t0, t1] = far_geom.as_ref().unwrap().bounds;
                    if s < s0 || s > s1 || t < t0 || t > t1 {
                        continue;
                    }
                }
                if nearest.is_none_or(|(bd, _, _, _)| depth < bd) {
                    nearest = Some((depth, k, s, t));
                }
            }
            if let Some((_, k, s, t)) = nearest {
                if k < geoms.len() {
                    foot[k][0] = foot[k][0].min(s);
                    foot[k][1] = foot[k][1].max(s);
                    foot[k][2] = foot[k][2].min(t);
                    foot[k][3] = foot[k][3].max(t);
                    any_hit[k] = true;
                }
            }
        }
    }

    let mut planes: Vec<RenderPlane> = Vec::new();
    for (k, geom) in geoms.iter().enumerate() {
        let geom_new = transform_geometry(geom, &basis, new_cam.pos);
        if !any_hit[k] {
            continue;
        }
        let b = foot[k];
        let ppm = base_ppm(geom.bounds, cfg.canvas_size);
        let cv = build_canvas(geom, cam, b, ppm)?;
        let mut known = Mask::new(img.width, img.height, false);
        for i in 0..strict.len() {
            known.data[i] = strict[i] == Owner::Plane(k);
        }
        let lattice = plane_lattice(program, k, cv.bounds, cv.ppm, cfg);
        let texture = fill_canvas(img, &known, &cv, lattice.as_ref(), &cfg.pm)?;
        let lat_m = lattice.as_ref().map(|l| {
            (
                (l.d1.0 / cv.ppm.0, l.d1.1 / cv.ppm.1),
                l.d2.map(|d| (d.0 / cv.ppm.0, d.1 / cv.ppm.1)),
            )
        });
        planes.push(RenderPlane {
            geom_new: geom_new.clone(),
            texture,
            tex_valid: None,
            bounds: b,
            cv,
            chart: plane_chart_homography(geom, cam),
            chart_new: plane_chart_homography(&geom_new, cam),
            lat_m,
            owner: Owner::Plane(k),
        });
    }

    // far plane: textured, not extrapolated
    if let Some(geom) = far_geom {
        let geom_new = transform_geometry(&geom, &basis, new_cam.pos);
        let ppm = base_ppm(geom.bounds, cfg.canvas_size);
        let cv = build_canvas(&geom, cam, geom.bounds, ppm)?;
        let warped = warp_by_homography(img, &cv.h, cv.width, cv.height)?;
        planes.push(RenderPlane {
            geom_new: geom_new.clone(),
            texture: warped.image,
            tex_valid: Some(warped.validity),
            bounds: geom.bounds,
            cv,
            chart: plane_chart_homography(&geom, cam),
            chart_new: plane_chart_homography(&geom_new, cam),
            lat_m: None,
            owner: Owner::Far,
        });
    }
    if planes.is_empty() {
        return Err(EditError::TargetUnreachable);
    }

    let mut image = ImageBuffer::new(img.width, img.height);
    let mut validity = Mask::new(img.width, img.height, false);
    for y in 0..img.height {
        for x in 0..img.width {
            // candidate hits with a feather weight from the distance to the
            // plane's own boundary (the seam between adjacent planes)
            let mut hits: Vec<(f64, f64, [f32; 3])> = Vec::new();
            for rp in &planes {
                let Some((s, t, depth)) = rp.geom_new.intersect_ray(cam, x as f64, y as f64)
                else {
                    continue;
                };
                let [s0, s1, t0, t1] = rp.bounds;
                if depth <= 1e-6 || s < s0 || s > s1 || t < t0 || t > t1 {
                    continue;
                }
                let (cx, cy) = canvas_coords(&rp.cv, s, t);
                if cx < 0.0
                    || cy < 0.0
                    || cx > (rp.cv.width - 1) as f64
                    || cy > (rp.cv.height - 1) as f64
                {
                    continue;
                }
                if let Some(v) = &rp.tex_valid {
                    if !crate::imaging::mask_support(v, cx, cy) {
                        continue;
                    }
                }
                let border_px = [
                    (s - s0) * rp.cv.ppm.0,
                    (s1 - s) * rp.cv.ppm.0,
                    (t - t0) * rp.cv.ppm.1,
                    (t1 - t) * rp.cv.ppm.1,
                ]
                .into_iter()
                .fold(f64::INFINITY, f64::min);
                let w = (border_px / cfg.feather_px).clamp(0.0, 1.0);
                // Sample the source image directly where the surface was
                // visible; the canvas texture carries one extra resampling.
                // On a periodic plane any lattice translate of the hit is an
                // exact copy, so prefer the translate the source camera saw
                // at the resolution this output pixel needs.
                let visible = |s2: f64, t2: f64| -> Option<(f64, f64)> {
                    let (px, py) = rp.chart.apply((s2, t2))?;
                    if !(px >= 0.0
                        && py >= 0.0
                        && px <= (img.width - 1) as f64
                        && py <= (img.height - 1) as f64)
                    {
                        return None;
                    }
                    let rx = (px.round() as u32).min(img.width - 1);
                    let ry = (py.round() as u32).min(img.height - 1);
                    if strict[(ry * img.width + rx) as usize] != rp.owner {
                        return None;
                    }
                    Some((px, py))
                };
                let needed = chart_density(&rp.chart_new, s, t);
                let mut best: Option<(f64, i64, (f64, f64))> = None;
                let mut consider = |i: i64, j: i64, s2: f64, t2: f64| {
                    let Some(p) = visible(s2, t2) else { return };
                    let score = match (needed, chart_density(&rp.chart, s2, t2)) {
                        (Some(nd), Some(d)) => {
                            // 1.0 = the source saw this copy at least as
                            // finely as the output needs it
                            ((d.0 / nd.0).min(d.1 / nd.1)).min(1.0)
                        }
                        _ => 0.0,
                    };
                    let drift = i * i + j * j;
                    let better = match best {
                        None => true,
                        Some((bs, bd, _)) => score > bs + 1e-3 || (score > bs - 1e-3 && drift < bd),
                    };
                    if better {
                        best = Some((score, drift, p));
                    }
                };
                consider(0, 0, s, t);
                if let Some((v1, v2)) = rp.lat_m {
                    let v2 = v2.unwrap_or((0.0, 0.0));
                    let jr = if v2 == (0.0, 0.0) { 0 } else { 8 };
                    for i in -8i64..=8 {
                        for j in -jr..=jr {
                            if (i, j) == (0, 0) {
                                continue;
                            }
                            let s2 = s + i as f64 * v1.0 + j as f64 * v2.0;
                            let t2 = t + i as f64 * v1.1 + j as f64 * v2.1;
                            consider(i, j, s2, t2);
                        }
                    }
                }
                let rgb = match best {
                    Some((_, _, (px, py))) => bilinear_sample(img, px, py),
                    None => bilinear_sample(&rp.texture, cx, cy),
                };
                hits.push((depth, w, rgb));
            }
            if hits.is_empty() {
                continue;
            }
            let dmin = hits.iter().map(|h| h.0).fold(f64::INFINITY, f64::min);
            // blend only surfaces meeting at the nearest depth
            let near: Vec<&(f64, f64, [f32; 3])> = hits
                .iter()
                .filter(|h| h.0 <= dmin * 1.01 + 1e-6)
                .collect();
            let wsum: f64 = near.iter().map(|h| h.1).sum();
            let mut rgb = [0.0f32; 3];
            if wsum > 1e-9 {
                for h in &near {
                    for c in 0..3 {
                        rgb[c] += (h.1 / wsum) as f32 * h.2[c];
                    }
                }
            } else {
                rgb = near[0].2;
            }
            image.set(x, y, rgb);
            validity.set(x, y, true);
        }
    }
    Ok(crate::imaging::WarpResult { image, validity })
}
