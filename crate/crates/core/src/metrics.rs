//! Evaluation metrics: mask-assignment IoU, mean L1, PSNR, and SSIM.
//! Pixel metrics work on the 0..255 scale regardless of the internal
//! linear [0, 1] representation.

use crate::imaging::{ImageBuffer, Mask};

/// Mean absolute RGB difference, 0..255 scale.
pub fn l1_mean(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    assert_eq!((a.width, a.height), (b.width, b.height));
    let n = a.data.len();
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| ((x - y) as f64).abs())
        .sum();
    255.0 * sum / n as f64
}

/// Luma PSNR in dB. Identical images give +infinity.
pub fn psnr_luma(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    assert_eq!((a.width, a.height), (b.width, b.height));
    let mut mse = 0.0;
    for y in 0..a.height {
        for x in 0..a.width {
            let d = a.luma255(x, y) - b.luma255(x, y);
            mse += d * d;
        }
    }
    mse /= (a.width * a.height) as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0 * 255.0 / mse).log10()
    }
}

/// Mean structural similarity on luma with an 11x11 Gaussian window
/// (sigma 1.5) and the usual stabilizers C1 = (0.01 * 255)^2,
/// C2 = (0.03 * 255)^2. Window positions that would leave the frame are
/// skipped, so images must be at least 11x11.
pub fn ssim_luma(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    assert_eq!((a.width, a.height), (b.width, b.height));
    let (w, h) = (a.width as usize, a.height as usize);
    assert!(w >= 11 && h >= 11, "ssim needs at least 11x11 images");
    let la: Vec<f64> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| a.luma255(x as u32, y as u32))
        .collect();
    let lb: Vec<f64> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| b.luma255(x as u32, y as u32))
        .collect();

    let mut kernel = [0.0f64; 11];
    let sigma = 1.5;
    let mut ksum = 0.0;
    for (i, k) in kernel.iter_mut().enumerate() {
        let d = i as f64 - 5.0;
        *k = (-d * d / (2.0 * sigma * sigma)).exp();
        ksum += *k;
    }
    for k in kernel.iter_mut() {
        *k /= ksum;
    }

    let c1 = (0.01 * 255.0) * (0.01 * 255.0);
    let c2 = (0.03 * 255.0) * (0.03 * 255.0);
    let mut total = 0.0;
    let mut count = 0usize;
    for cy in 5..h - 5 {
        for cx in 5..w - 5 {
            let (mut ma, mut mb) = (0.0, 0.0);
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for dy in 0..11 {
                for dx in 0..11 {
                    let wgt = kernel[dy] * kernel[dx];
                    let idx = (cy + dy - 5) * w + (cx + dx - 5);
                    ma += wgt * la[idx];
                    mb += wgt * lb[idx];
                }
            }
            for dy in 0..11 {
                for dx in 0..11 {
                    let wgt = kernel[dy] * kernel[dx];
                    let idx = (cy + dy - 5) * w + (cx + dx - 5);
                    let da = la[idx] - ma;
                    let db = lb[idx] - mb;
                    va += wgt * da * da;
                    vb += wgt * db * db;
                    cov += wgt * da * db;
                }
            }
            let s = ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            total += s;
            count += 1;
        }
    }
    total / count as f64
}

fn iou(a: &Mask, b: &Mask, exclude: Option<&Mask>) -> f64 {
    let mut inter = 0usize;
    let mut union = 0usize;
    for i in 0..a.data.len() {
        if exclude.is_some_and(|e| e.data[i]) {
            continue;
        }
        let (x, y) = (a.data[i], b.data[i]);
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        // both empty over the evaluated region counts as a perfect match
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Mean IoU under the best one-to-one assignment of predicted masks to
/// ground-truth masks (exhaustive; intended for up to ~4 masks per side).
/// Unmatched masks on either side contribute 0: the sum is divided by
/// max(#pred, #gt). Pixels set in `exclude` are ignored, and a mask that is
/// empty or mostly inside the excluded region is dropped outright: it
/// carries no evaluable signal, so neither matching nor penalizing it is
/// meaningful.
pub fn best_match_iou(pred: &[Mask], gt: &[Mask], exclude: Option<&Mask>) -> f64 {
    let evaluable = |m: &&Mask| -> bool {
        let mut outside = 0usize;
        let mut inside = 0usize;
        for i in 0..m.data.len() {
            if m.data[i] {
                if exclude.is_some_and(|e| e.data[i]) {
                    inside += 1;
                } else {
                    outside += 1;
                }
            }
        }
        outside > 0 && outside >= inside
    };
    let pred: Vec<&Mask> = pred.iter().filter(evaluable).collect();
    let gt: Vec<&Mask> = gt.iter().filter(evaluable).collect();
    if pred.is_empty() && gt.is_empty() {
        return 1.0;
    }
    if pred.is_empty() || gt.is_empty() {
        return 0.0;
    }
    let scores: Vec<Vec<f64>> = gt
        .iter()
        .map(|g| pred.iter().map(|p| iou(p, g, exclude)).collect())
        .collect();
    // branch and bound over assignments of gt rows to pred columns
    fn best(scores: &[Vec<f64>], row: usize, used: &mut [bool]) -> f64 {
        if row == scores.len() {
            return 0.0;
        }
        let mut top = f64::NEG_INFINITY;
        // leaving this gt row unmatched is allowed
        let skip = best(scores, row + 1, used);
        top = top.max(skip);
        for col in 0..used.len() {
            if used[col] {
                continue;
            }
            used[col] = true;
            let v = scores[row][col] + best(scores, row + 1, used);
            used[col] = false;
            top = top.max(v);
        }
        top
    }
    let mut used = vec![false; pred.len()];
    let total = best(&scores, 0, &mut used);
    total / pred.len().max(gt.len()) as f64
}
