//! Matching-cost volumes from windowed normalized cross correlation.

use std::io::{self, Read, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pixmap::GrayImage;

/// Per-pixel, per-disparity matching costs stored in `(y, x, d)` order.
///
/// An optional candidate mask marks the admissible disparities of each
/// pixel after sparse pruning.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    width: usize,
    height: usize,
    levels: usize,
    costs: Vec<f64>,
    candidates: Option<Vec<bool>>,
}

impl CostVolume {
    pub fn new(width: usize, height: usize, levels: usize, costs: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param(format!(
                "volume dimensions must be positive, got {width}x{height}"
            )));
        }
        if levels == 0 {
            return Err(Error::param("disparity level count must be at least 1"));
        }
        if costs.len() != width * height * levels {
            return Err(Error::param(format!(
                "expected {} costs for {width}x{height}x{levels}, got {}",
                width * height * levels,
                costs.len()
            )));
        }
        if let Some(bad) = costs.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(Error::param(format!(
                "costs must be finite and non-negative, found {bad}"
            )));
        }
        Ok(Self {
            width,
            height,
            levels,
            costs,
            candidates: None,
        })
    }

    /// Attaches a candidate mask (`true` = admissible), laid out like the costs.
    pub fn with_candidates(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.costs.len() {
            return Err(Error::param("candidate mask does not match volume size"));
        }
        if mask.chunks(self.levels).any(|px| !px.contains(&true)) {
            return Err(Error::param("every pixel needs at least one candidate"));
        }
        self.candidates = Some(mask);
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn cost(&self, x: usize, y: usize, d: usize) -> f64 {
        self.costs[(y * self.width + x) * self.levels + d]
    }

    /// Cost vector of the pixel with row-major index `p`.
    pub fn pixel_costs(&self, p: usize) -> &[f64] {
        &self.costs[p * self.levels..(p + 1) * self.levels]
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn has_candidates(&self) -> bool {
        self.candidates.is_some()
    }

    /// Candidate mask of pixel `p`, if the volume was pruned.
    pub fn pixel_candidates(&self, p: usize) -> Option<&[bool]> {
        self.candidates
            .as_deref()
            .map(|m| &m[p * self.levels..(p + 1) * self.levels])
    }

    /// Admissible disparities of pixel `(x, y)` in increasing order.
    pub fn candidates(&self, x: usize, y: usize) -> Vec<usize> {
        let p = y * self.width + x;
        match self.pixel_candidates(p) {
            Some(mask) => (0..self.levels).filter(|&d| mask[d]).collect(),
            None => (0..self.levels).collect(),
        }
    }

    /// Total cost over all pixels at disparity `d`.
    pub fn mass_at(&self, d: usize) -> f64 {
        self.costs.iter().skip(d).step_by(self.levels).sum()
    }

    pub fn without_candidates(mut self) -> Self {
        self.candidates = None;
        self
    }
}

/// How many disparities survive sparse pruning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CandidateCount {
    #[default]
    All,
    Top(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NccParams {
    pub window_radius: usize,
    /// Scales `1 - ncc` into energy units.
    pub data_weight: f64,
    /// Cap on a single data cost.
    pub data_truncation: f64,
    pub candidate_count: CandidateCount,
}

impl Default for NccParams {
    fn default() -> Self {
        Self {
            window_radius: 2,
            data_weight: 1.0,
            data_truncation: 1.0,
            candidate_count: CandidateCount::All,
        }
    }
}

impl NccParams {
    pub fn validate(&self) -> Result<()> {
        if self.window_radius == 0 {
            return Err(Error::param("window radius must be at least 1"));
        }
        if !(self.data_weight.is_finite() && self.data_weight > 0.0) {
            return Err(Error::param("data weight must be positive and finite"));
        }
        if !(self.data_truncation.is_finite() && self.data_truncation > 0.0) {
            return Err(Error::param("data truncation must be positive and finite"));
        }
        if self.candidate_count == CandidateCount::Top(0) {
            return Err(Error::param("candidate count must be at least 1"));
        }
        Ok(())
    }
}

/// Zero-mean normalized cross correlation of two equally long windows.
///
/// Returns 0 when either window has zero variance.
pub fn ncc(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "ncc windows differ in length");
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let (mut cross, mut var_a, mut var_b) = (0.0, 0.0, 0.0);
    for (&u, &v) in a.iter().zip(b) {
        let (du, dv) = (u - mean_a, v - mean_b);
        cross += du * dv;
        var_a += du * du;
        var_b += dv * dv;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return 0.0;
    }
    (cross / (var_a * var_b).sqrt()).clamp(-1.0, 1.0)
}

fn window(image: &GrayImage, cx: usize, cy: usize, r: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity((2 * r + 1) * (2 * r + 1));
    for y in cy - r..=cy + r {
        for x in cx - r..=cx + r {
            out.push(f64::from(image.get(x, y)));
        }
    }
    out
}

fn window_inside(width: usize, height: usize, x: isize, y: isize, r: usize) -> bool {
    let r = r as isize;
    x - r >= 0 && y - r >= 0 && x + r < width as isize && y + r < height as isize
}

/// NCC between the window at `(x, y)` in `left` and at `(x - d, y)` in `right`.
pub fn ncc_score(
    left: &GrayImage,
    right: &GrayImage,
    x: usize,
    y: usize,
    d: usize,
    r: usize,
) -> Result<f64> {
    if left.dimensions() != right.dimensions() {
        return Err(Error::DimensionMismatch {
            expected: left.dimensions(),
            found: right.dimensions(),
        });
    }
    let (w, h) = left.dimensions();
    let (xl, xr, yi) = (x as isize, x as isize - d as isize, y as isize);
    for xi in [xl, xr] {
        if !window_inside(w, h, xi, yi, r) {
            return Err(Error::OutOfBounds { x: xi, y: yi });
        }
    }
    let a = window(left, x, y, r);
    let b = window(right, x - d, y, r);
    Ok(ncc(&a, &b))
}

/// Box sums of samples and squared samples over every fully interior window.
struct WindowStats {
    sum: Vec<i64>,
    sum_sq: Vec<i64>,
}

fn window_stats(image: &GrayImage, r: usize) -> WindowStats {
    let (w, h) = image.dimensions();
    // Integral images with a zero row and column in front.
    let stride = w + 1;
    let mut integral = vec![0i64; stride * (h + 1)];
    let mut integral_sq = vec![0i64; stride * (h + 1)];
    for y in 0..h {
        let (mut row, mut row_sq) = (0i64, 0i64);
        for x in 0..w {
            let v = i64::from(image.get(x, y));
            row += v;
            row_sq += v * v;
            let i = (y + 1) * stride + x + 1;
            integral[i] = integral[i - stride] + row;
            integral_sq[i] = integral_sq[i - stride] + row_sq;
        }
    }
    let boxed = |table: &[i64], x: usize, y: usize| -> i64 {
        if x < r || y < r || x + r >= w || y + r >= h {
            return 0;
        }
        let (x0, y0, x1, y1) = (x - r, y - r, x + r + 1, y + r + 1);
        table[y1 * stride + x1] - table[y0 * stride + x1] - table[y1 * stride + x0]
            + table[y0 * stride + x0]
    };
    let mut sum = vec![0; w * h];
    let mut sum_sq = vec![0; w * h];
    for y in 0..h {
        for x in 0..w {
            sum[y * w + x] = boxed(&integral, x, y);
            sum_sq[y * w + x] = boxed(&integral_sq, x, y);
        }
    }
    WindowStats { sum, sum_sq }
}

/// Builds `cost(x, y, d) = min(weight * (1 - ncc), truncation)` with the left
/// image as reference. Disparities whose windows leave either image get the
/// truncation cost. Applies the configured candidate pruning.
pub fn build_cost_volume(
    left: &GrayImage,
    right: &GrayImage,
    levels: usize,
    params: &NccParams,
) -> Result<CostVolume> {
    params.validate()?;
    if left.dimensions() != right.dimensions() {
        return Err(Error::DimensionMismatch {
            expected: left.dimensions(),
            found: right.dimensions(),
        });
    }
    if levels == 0 {
        return Err(Error::param("disparity level count must be at least 1"));
    }
    let (w, h) = left.dimensions();
    let r = params.window_radius;
    let n = ((2 * r + 1) * (2 * r + 1)) as i64;
    let stats_l = window_stats(left, r);
    let stats_r = window_stats(right, r);
    let (lambda, tau) = (params.data_weight, params.data_truncation);

    let mut costs = vec![tau; w * h * levels];
    costs
        .par_chunks_mut(w * levels)
        .enumerate()
        .for_each(|(y, row)| {
            if y < r || y + r >= h {
                return;
            }
            for x in r..w.saturating_sub(r) {
                let pl = y * w + x;
                let (sa, qa) = (stats_l.sum[pl], stats_l.sum_sq[pl]);
                let var_a = n * qa - sa * sa;
                for d in 0..levels.min(x + 1 - r) {
                    let xr = x - d;
                    let pr = y * w + xr;
                    let (sb, qb) = (stats_r.sum[pr], stats_r.sum_sq[pr]);
                    let var_b = n * qb - sb * sb;
                    let score = if var_a == 0 || var_b == 0 {
                        0.0
                    } else {
                        let mut cross = 0i64;
                        for wy in y - r..=y + r {
                            for wx in 0..=2 * r {
                                cross += i64::from(left.get(x - r + wx, wy))
                                    * i64::from(right.get(xr - r + wx, wy));
                            }
                        }
                        let num = (n * cross - sa * sb) as f64;
                        (num / ((var_a as f64) * (var_b as f64)).sqrt()).clamp(-1.0, 1.0)
                    };
                    row[x * levels + d] = (lambda * (1.0 - score)).min(tau);
                }
            }
        });
    let volume = CostVolume::new(w, h, levels, costs)?;
    match params.candidate_count {
        CandidateCount::All => Ok(volume),
        k => prune_candidates(&volume, k, tau),
    }
}

/// Keeps the `k` cheapest disparities per pixel (ties toward smaller `d`)
/// and raises every other cost to `truncation`.
pub fn prune_candidates(
    volume: &CostVolume,
    k: CandidateCount,
    truncation: f64,
) -> Result<CostVolume> {
    let levels = volume.levels;
    let k = match k {
        CandidateCount::All => return Ok(volume.clone()),
        CandidateCount::Top(k) => k,
    };
    if k == 0 || k > levels {
        return Err(Error::param(format!(
            "candidate count {k} outside 1..={levels}"
        )));
    }
    if k == levels {
        return Ok(volume.clone());
    }
    if !(truncation.is_finite() && truncation >= 0.0) {
        return Err(Error::param("truncation must be finite and non-negative"));
    }
    let mut costs = volume.costs.clone();
    let mut mask = vec![false; costs.len()];
    let mut order: Vec<usize> = Vec::with_capacity(levels);
    for (px_costs, px_mask) in costs.chunks_mut(levels).zip(mask.chunks_mut(levels)) {
        order.clear();
        order.extend(0..levels);
        order.sort_by(|&a, &b| px_costs[a].total_cmp(&px_costs[b]).then(a.cmp(&b)));
        for &d in &order[..k] {
            px_mask[d] = true;
        }
        for (c, keep) in px_costs.iter_mut().zip(px_mask.iter()) {
            if !keep {
                *c = c.max(truncation);
            }
        }
    }
    CostVolume::new(volume.width, volume.height, levels, costs)?.with_candidates(mask)
}

/// Halves both image dimensions (rounding up) by summing 2x2 blocks of costs
/// at every disparity. Candidate masks are dropped.
pub fn downsample_volume(volume: &CostVolume) -> CostVolume {
    let (w, h, l) = (volume.width, volume.height, volume.levels);
    let (cw, ch) = (w.div_ceil(2), h.div_ceil(2));
    let mut costs = vec![0.0; cw * ch * l];
    for y in 0..h {
        for x in 0..w {
            let dst = ((y / 2) * cw + x / 2) * l;
            let src = (y * w + x) * l;
            for d in 0..l {
                costs[dst + d] += volume.costs[src + d];
            }
        }
    }
    CostVolume {
        width: cw,
        height: ch,
        levels: l,
        costs,
        candidates: None,
    }
}

/// Writes the debug dump: little-endian `u32` width, height, levels, then
/// every cost as `f32` in `(y, x, d)` order.
pub fn write_volume_dump(volume: &CostVolume, mut out: impl Write) -> io::Result<()> {
    for dim in [volume.width, volume.height, volume.levels] {
        let dim = u32::try_from(dim)
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "dimension exceeds u32"))?;
        out.write_all(&dim.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(volume.costs.len() * 4);
    for &c in &volume.costs {
        buf.extend_from_slice(&(c as f32).to_le_bytes());
    }
    out.write_all(&buf)?;
    out.flush()
}

/// Reads a dump written by [`write_volume_dump`]. Costs come back at `f32`
/// precision and without candidate masks.
pub fn read_volume_dump(mut input: impl Read) -> Result<CostVolume> {
    let mut header = [0u8; 12];
    input.read_exact(&mut header)?;
    let dim = |i: usize| {
        u32::from_le_bytes(header[i * 4..i * 4 + 4].try_into().expect("4-byte slice")) as usize
    };
    let (w, h, l) = (dim(0), dim(1), dim(2));
    let mut body = Vec::new();
    input.read_to_end(&mut body)?;
    let expected = w * h * l * 4;
    if body.len() != expected {
        return Err(Error::format(
            12 + body.len().min(expected),
            format!("volume dump holds {} payload bytes, expected {expected}", body.len()),
        ));
    }
    let costs = body
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4-byte chunk"))))
        .collect();
    CostVolume::new(w, h, l, costs)
}
