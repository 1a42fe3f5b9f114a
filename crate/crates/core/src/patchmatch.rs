//! Nearest-neighbor-field inpainting with lattice shift-map guidance.
//!
//! Patch similarity combines a pixel term (mean squared RGB difference over
//! the valid patch overlap) with a regularity term that compares the two
//! pixels' fractional lattice coordinates, so filled content lands at the
//! same intra-element position as its source. Holes are filled coarse to
//! fine; every random decision comes from one seeded generator, so results
//! are reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsl::Lattice;
use crate::imaging::{ImageBuffer, Mask};

#[derive(Debug, Clone)]
pub struct PmConfig {
    /// Patch half-extent; 3 gives 7x7 patches.
    pub patch_radius: i64,
    /// PatchMatch sweeps per pyramid level.
    pub iters: usize,
    /// Weight of the shift-map regularity term.
    pub lambda_reg: f64,
    pub seed: u64,
    /// Random-search radius decay per probe.
    pub decay: f64,
    /// Pyramid levels (1 = single scale).
    pub levels: usize,
    /// Use the cell-distance variant max(1-x, x) instead of the circular
    /// metric min(x, 1-x). Kept for comparison; the circular metric is the
    /// one that actually treats opposite cell corners as equal.
    pub printed_wraparound: bool,
}

impl Default for PmConfig {
    fn default() -> Self {
        PmConfig {
            patch_radius: 3,
            iters: 8,
            lambda_reg: 10.0,
            seed: 0,
            decay: 0.5,
            levels: 4,
            printed_wraparound: false,
        }
    }
}

/// Fractional lattice coordinates per pixel, in [-0.5, 0.5) per axis.
/// 1D lattices use only the first component.
#[derive(Debug, Clone)]
pub struct ShiftMap {
    pub width: u32,
    pub height: u32,
    pub data: Vec<(f32, f32)>,
    pub two_d: bool,
}

impl ShiftMap {
    pub fn get(&self, x: u32, y: u32) -> (f32, f32) {
        self.data[(y * self.width + x) as usize]
    }
}

fn frac_centered(v: f64) -> f64 {
    // [0,1) fractional part shifted so a cell center maps to 0
    v.rem_euclid(1.0) - 0.5
}

/// Fractional lattice coordinate of every pixel of a width x height canvas.
/// Pixels are expressed in the lattice basis (origin + i*d1 + j*d2); only
/// the fractional part is kept.
pub fn build_shift_map(lat: &Lattice, width: u32, height: u32) -> ShiftMap {
    let mut data = Vec::with_capacity((width * height) as usize);
    let (ox, oy) = lat.origin;
    let two_d = lat.d2.is_some();
    let (d1, d2) = (lat.d1, lat.d2.unwrap_or((0.0, 0.0)));
    let det = d1.0 * d2.1 - d1.1 * d2.0;
    let d1_sq = d1.0 * d1.0 + d1.1 * d1.1;
    for y in 0..height {
        for x in 0..width {
            let px = x as f64 - ox;
            let py = y as f64 - oy;
            let (u, v) = if two_d {
                ((px * d2.1 - py * d2.0) / det, (d1.0 * py - d1.1 * px) / det)
            } else {
                ((px * d1.0 + py * d1.1) / d1_sq, 0.0)
            };
            data.push((frac_centered(u) as f32, if two_d { frac_centered(v) as f32 } else { 0.0 }));
        }
    }
    ShiftMap {
        width,
        height,
        data,
        two_d,
    }
}

fn wrap_component(x: f64, printed: bool) -> f64 {
    let m = x.abs().rem_euclid(1.0);
    if printed {
        m.max(1.0 - m)
    } else {
        m.min(1.0 - m)
    }
}

/// Squared wraparound distance between two shift-map values: each component
/// is compared on the unit circle, so a difference of 0.9 counts as 0.1.
pub fn wraparound_sq(a: (f32, f32), b: (f32, f32), printed: bool) -> f64 {
    let dx = wrap_component(a.0 as f64 - b.0 as f64, printed);
    let dy = wrap_component(a.1 as f64 - b.1 as f64, printed);
    dx * dx + dy * dy
}

// ---------------------------------------------------------------------------
// pyramid

struct Level {
    image: ImageBuffer,
    hole: Mask,
    smap: Option<ShiftMap>,
}

/// Half-resolution image; hole pixels are excluded from the box filter and
/// any coarse pixel touching a hole pixel becomes a hole.
fn downsample(img: &ImageBuffer, hole: &Mask) -> (ImageBuffer, Mask) {
    let w = (img.width / 2).max(1);
    let h = (img.height / 2).max(1);
    let mut out = ImageBuffer::new(w, h);
    let mut out_hole = Mask::new(w, h, false);
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f32; 3];
            let mut n = 0u32;
            let mut any_hole = false;
            for dy in 0..2 {
                for dx in 0..2 {
                    let sx = (2 * x + dx).min(img.width - 1);
                    let sy = (2 * y + dy).min(img.height - 1);
                    if hole.get(sx, sy) {
                        any_hole = true;
                        continue;
                    }
                    let rgb = img.get(sx, sy);
                    for c in 0..3 {
                        acc[c] += rgb[c];
                    }
                    n += 1;
                }
            }
            if n > 0 {
                out.set(x, y, [acc[0] / n as f32, acc[1] / n as f32, acc[2] / n as f32]);
            }
            out_hole.set(x, y, any_hole);
        }
    }
    (out, out_hole)
}

fn scale_lattice(lat: &Lattice, factor: f64) -> Lattice {
    Lattice {
        origin: (lat.origin.0 * factor, lat.origin.1 * factor),
        d1: (lat.d1.0 * factor, lat.d1.1 * factor),
        d2: lat.d2.map(|d| (d.0 * factor, d.1 * factor)),
        outer: lat.outer,
        inner: lat.inner,
    }
}

// ---------------------------------------------------------------------------
// core search

struct PmState<'a> {
    img: &'a ImageBuffer,
    /// A pixel may serve as a source-patch center only if its whole patch
    /// window is inside the frame and hole-free.
    source_ok: Vec<bool>,
    smap: Option<&'a ShiftMap>,
    cfg: &'a PmConfig,
}

impl<'a> PmState<'a> {
    fn new(img: &'a ImageBuffer, hole: &'a Mask, smap: Option<&'a ShiftMap>, cfg: &'a PmConfig) -> Self {
        let (w, h) = (img.width as i64, img.height as i64);
        let r = cfg.patch_radius;
        let mut source_ok = vec![false; (w * h) as usize];
        // prefix sums of hole counts for O(1) window tests
        let mut integral = vec![0u32; ((w + 1) * (h + 1)) as usize];
        for y in 0..h {
            for x in 0..w {
                let v = hole.get(x as u32, y as u32) as u32;
                integral[((y + 1) * (w + 1) + x + 1) as usize] = v
                    + integral[(y * (w + 1) + x + 1) as usize]
                    + integral[((y + 1) * (w + 1) + x) as usize]
                    - integral[(y * (w + 1) + x) as usize];
            }
        }
        for y in r..h - r {
            for x in r..w - r {
                let (x0, y0, x1, y1) = (x - r, y - r, x + r + 1, y + r + 1);
                let holes = integral[(y1 * (w + 1) + x1) as usize]
                    + integral[(y0 * (w + 1) + x0) as usize]
                    - integral[(y0 * (w + 1) + x1) as usize]
                    - integral[(y1 * (w + 1) + x0) as usize];
                source_ok[(y * w + x) as usize] = holes == 0;
            }
        }
        PmState {
            img,
            source_ok,
            smap,
            cfg,
        }
    }

    fn source_ok(&self, x: i64, y: i64) -> bool {
        let w = self.img.width as i64;
        let h = self.img.height as i64;
        x >= 0 && y >= 0 && x < w && y < h && self.source_ok[(y * w + x) as usize]
    }

    /// Patch dissimilarity (lower is better): mean squared RGB difference
    /// over the in-frame overlap plus the shift-map term at the centers.
    fn cost(&self, current: &ImageBuffer, tx: i64, ty: i64, sx: i64, sy: i64, cutoff: f64) -> f64 {
        let r = self.cfg.patch_radius;
        let (w, h) = (self.img.width as i64, self.img.height as i64);
        let mut reg = 0.0;
        if let Some(smap) = self.smap {
            reg = self.cfg.lambda_reg
                * wraparound_sq(
                    smap.get(tx as u32, ty as u32),
                    smap.get(sx as u32, sy as u32),
                    self.cfg.printed_wraparound,
                );
            if reg >= cutoff {
                return reg;
            }
        }
        let mut sum = 0.0;
        let mut n = 0u32;
        for dy in -r..=r {
            for dx in -r..=r {
                let (px, py) = (tx + dx, ty + dy);
                if px < 0 || py < 0 || px >= w || py >= h {
                    continue;
                }
                // source patch windows are pre-validated as in-frame
                let a = current.get(px as u32, py as u32);
                let b = self.img.get((sx + dx) as u32, (sy + dy) as u32);
                for c in 0..3 {
                    let d = (a[c] - b[c]) as f64;
                    sum += d * d;
                }
                n += 1;
            }
        }
        reg + sum / n as f64
    }
}

/// Inpaint the hole region. When a shift map is given, the similarity is
/// augmented with the wraparound regularity term so the fill respects the
/// plane's lattice. The image outside the hole is returned untouched.
pub fn pm_inpaint(
    img: &ImageBuffer,
    hole: &Mask,
    smap: Option<&ShiftMap>,
    lattice: Option<&Lattice>,
    cfg: &PmConfig,
) -> ImageBuffer {
    assert_eq!((img.width, img.height), (hole.width, hole.height));
    if hole.count() == 0 {
        return img.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // build the pyramid; the shift map is rebuilt per level from the scaled
    // lattice rather than resampled
    let mut levels: Vec<Level> = Vec::new();
    levels.push(Level {
        image: img.clone(),
        hole: hole.clone(),
        smap: smap.cloned(),
    });
    for l in 1..cfg.levels {
        let prev = &levels[l - 1];
        if prev.image.width < 16 || prev.image.height < 16 {
            break;
        }
        let (di, dh) = downsample(&prev.image, &prev.hole);
        let sm = lattice.map(|lat| {
            let f = 0.5f64.powi(l as i32);
            build_shift_map(&scale_lattice(lat, f), di.width, di.height)
        });
        levels.push(Level {
            image: di,
            hole: dh,
            smap: sm,
        });
    }

    let mut nnf: Vec<(i64, i64)> = Vec::new();
    let mut filled: Option<ImageBuffer> = None;
    for li in (0..levels.len()).rev() {
        let level = &levels[li];
        let (w, h) = (level.image.width as i64, level.image.height as i64);
        let state = PmState::new(&level.image, &level.hole, level.smap.as_ref(), cfg);

        let sources: Vec<(i64, i64)> = (0..w * h)
            .filter(|&i| state.source_ok[i as usize])
            .map(|i| (i % w, i / w))
            .collect();
        if sources.is_empty() {
            // nothing to copy from at this scale; keep the current estimate
            continue;
        }
        let targets: Vec<(i64, i64)> = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .filter(|&(x, y)| level.hole.get(x as u32, y as u32))
            .collect();

        // working image: known pixels plus the current hole estimate
        let mut current = level.image.clone();
        match &filled {
            None => {
                // initialize holes with the mean source color
                let mut mean = [0.0f32; 3];
                for &(x, y) in &sources {
                    let rgb = level.image.get(x as u32, y as u32);
                    for c in 0..3 {
                        mean[c] += rgb[c];
                    }
                }
                for c in &mut mean {
                    *c /= sources.len() as f32;
                }
                for &(x, y) in &targets {
                    current.set(x as u32, y as u32, mean);
                }
            }
            Some(prev) => {
                // upscale the coarser estimate into the holes
                for &(x, y) in &targets {
                    let sx = ((x / 2).min(prev.width as i64 - 1)) as u32;
                    let sy = ((y / 2).min(prev.height as i64 - 1)) as u32;
                    current.set(x as u32, y as u32, prev.get(sx, sy));
                }
            }
        }

        // init or upscale the field
        let mut field: Vec<(i64, i64)> = Vec::with_capacity(targets.len());
        if nnf.is_empty() {
            for _ in &targets {
                field.push(sources[rng.gen_range(0..sources.len())]);
            }
        } else {
            // map each target to its coarse parent's match, doubled
            let coarse = &levels[li + 1];
            let cw = coarse.image.width as i64;
            let mut coarse_lookup =
                vec![(-1i64, -1i64); (coarse.image.width * coarse.image.height) as usize];
            let coarse_targets: Vec<(i64, i64)> = (0..coarse.image.height as i64)
                .flat_map(|y| (0..cw).map(move |x| (x, y)))
                .filter(|&(x, y)| coarse.hole.get(x as u32, y as u32))
                .collect();
            for (t, n) in coarse_targets.iter().zip(&nnf) {
                coarse_lookup[(t.1 * cw + t.0) as usize] = *n;
            }
            for &(x, y) in &targets {
                let cx = (x / 2).min(cw - 1);
                let cy = (y / 2).min(coarse.image.height as i64 - 1);
                let parent = coarse_lookup[(cy * cw + cx) as usize];
                let cand = if parent.0 >= 0 {
                    (parent.0 * 2 + (x & 1), parent.1 * 2 + (y & 1))
                } else {
                    (-1, -1)
                };
                if state.source_ok(cand.0, cand.1) {
                    field.push(cand);
                } else {
                    field.push(sources[rng.gen_range(0..sources.len())]);
                }
            }
        }

        let mut cost: Vec<f64> = targets
            .iter()
            .zip(&field)
            .map(|(&(tx, ty), &(sx, sy))| state.cost(&current, tx, ty, sx, sy, f64::INFINITY))
            .collect();
        let mut index_of = vec![usize::MAX; (w * h) as usize];
        for (i, &(x, y)) in targets.iter().enumerate() {
            index_of[(y * w + x) as usize] = i;
        }

        // integer offsets of nearby lattice translates; the guidance term
        // rewards them but random search rarely proposes them exactly
        let mut translates: Vec<(i64, i64)> = Vec::new();
        if let Some(lat) = lattice {
            let f = 0.5f64.powi(li as i32);
            let d1 = (lat.d1.0 * f, lat.d1.1 * f);
            let d2 = lat.d2.map_or((0.0, 0.0), |d| (d.0 * f, d.1 * f));
            for i in -2i64..=2 {
                for j in -2i64..=2 {
                    let dx = (i as f64 * d1.0 + j as f64 * d2.0).round() as i64;
                    let dy = (i as f64 * d1.1 + j as f64 * d2.1).round() as i64;
                    if (dx, dy) != (0, 0) && !translates.contains(&(dx, dy)) {
                        translates.push((dx, dy));
                    }
                }
            }
        }

        let search_start = w.max(h) as f64;
        for iter in 0..cfg.iters {
            let reverse = iter % 2 == 1;
            for step in 0..targets.len() {
                let ti = if reverse { targets.len() - 1 - step } else { step };
                let (tx, ty) = targets[ti];
                // propagation from the already-visited neighbors
                let offsets: [(i64, i64); 2] = if reverse { [(1, 0), (0, 1)] } else { [(-1, 0), (0, -1)] };
                for (ox, oy) in offsets {
                    let (nx, ny) = (tx + ox, ty + oy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    let ni = index_of[(ny * w + nx) as usize];
                    if ni == usize::MAX {
                        continue;
                    }
                    let cand = (field[ni].0 - ox, field[ni].1 - oy);
                    if state.source_ok(cand.0, cand.1) {
                        let c = state.cost(&current, tx, ty, cand.0, cand.1, cost[ti]);
                        if c < cost[ti] {
                            cost[ti] = c;
                            field[ti] = cand;
                        }
                    }
                }
                // lattice translates of the target itself
                for &(dx, dy) in &translates {
                    let cand = (tx + dx, ty + dy);
                    if state.source_ok(cand.0, cand.1) {
                        let c = state.cost(&current, tx, ty, cand.0, cand.1, cost[ti]);
                        if c < cost[ti] {
                            cost[ti] = c;
                            field[ti] = cand;
                        }
                    }
                }
                // exponentially shrinking random search around the match
                let mut radius = search_start;
                while radius >= 1.0 {
                    let r = radius as i64;
                    let cand = (
                        field[ti].0 + rng.gen_range(-r..=r),
                        field[ti].1 + rng.gen_range(-r..=r),
                    );
                    if state.source_ok(cand.0, cand.1) {
                        let c = state.cost(&current, tx, ty, cand.0, cand.1, cost[ti]);
                        if c < cost[ti] {
                            cost[ti] = c;
                            field[ti] = cand;
                        }
                    }
                    radius *= cfg.decay;
                }
            }
            // vote: each hole pixel averages the source pixels proposed by
            // every patch that covers it
            let r = cfg.patch_radius;
            for (ti, &(tx, ty)) in targets.iter().enumerate() {
                let mut acc = [0.0f32; 3];
                let mut n = 0u32;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let (cx, cy) = (tx + dx, ty + dy);
                        if cx < 0 || cy < 0 || cx >= w || cy >= h {
                            continue;
                        }
                        let ci = index_of[(cy * w + cx) as usize];
                        let (sx, sy) = if ci == usize::MAX {
                            // a non-hole neighbor votes with the true image
                            (cx, cy)
                        } else {
                            (field[ci].0, field[ci].1)
                        };
                        let (px, py) = (sx - dx, sy - dy);
                        if px < 0 || py < 0 || px >= w || py >= h {
                            continue;
                        }
                        if level.hole.get(px as u32, py as u32) {
                            continue;
                        }
                        let rgb = level.image.get(px as u32, py as u32);
                        for c in 0..3 {
                            acc[c] += rgb[c];
                        }
                        n += 1;
                    }
                }
                if n > 0 {
                    current.set(
                        tx as u32,
                        ty as u32,
                        [acc[0] / n as f32, acc[1] / n as f32, acc[2] / n as f32],
                    );
                }
                let _ = ti;
            }
        }
        nnf = field;
        filled = Some(current);
    }

    let mut out = img.clone();
    if let Some(est) = filled {
        for y in 0..img.height {
            for x in 0..img.width {
                if hole.get(x, y) {
                    out.set(x, y, est.get(x, y));
                }
            }
        }
    }
    out
}
