//! Min-sum loopy belief propagation on the 4-connected pixel grid.
//!
//! Messages are double buffered: a sweep reads only the previous buffer and
//! writes only the next one, so per-pixel work is order independent and runs
//! in parallel. The [`Schedule::Fast`] schedule recomputes only the outgoing
//! messages of pixels that have not yet stabilized.

use rayon::prelude::*;

use crate::cost::CostVolume;
use crate::error::{Error, Result};
use crate::pixmap::DisparityMap;

/// Truncated-linear jump cost `min(slope * |a - b|, truncation)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessParams {
    pub slope: f64,
    pub truncation: f64,
}

impl Default for SmoothnessParams {
    fn default() -> Self {
        Self {
            slope: 1.0,
            truncation: 2.0,
        }
    }
}

impl SmoothnessParams {
    pub fn new(slope: f64, truncation: f64) -> Result<Self> {
        let params = Self { slope, truncation };
        params.validate()?;
        Ok(params)
    }

    /// A zero slope is accepted and disables smoothing.
    pub fn validate(&self) -> Result<()> {
        if !(self.slope.is_finite() && self.slope >= 0.0) {
            return Err(Error::param("smoothness slope must be finite and >= 0"));
        }
        if !(self.truncation.is_finite() && self.truncation > 0.0) {
            return Err(Error::param("smoothness truncation must be finite and > 0"));
        }
        Ok(())
    }

    #[inline]
    pub fn cost(&self, a: usize, b: usize) -> f64 {
        (self.slope * a.abs_diff(b) as f64).min(self.truncation)
    }
}

pub fn smoothness_cost(a: usize, b: usize, params: &SmoothnessParams) -> f64 {
    params.cost(a, b)
}

/// Side of a pixel where a neighbor sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Left = 0,
    Right = 1,
    Up = 2,
    Down = 3,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::Left,
        Direction::Right,
        Direction::Up,
        Direction::Down,
    ];

    pub fn opposite(self) -> Direction {
        match self {
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
        }
    }

    fn offset(self) -> (isize, isize) {
        match self {
            Direction::Left => (-1, 0),
            Direction::Right => (1, 0),
            Direction::Up => (0, -1),
            Direction::Down => (0, 1),
        }
    }

    /// Neighbor of `(x, y)` on this side, if it lies inside a `width x height` grid.
    pub fn neighbor(self, x: usize, y: usize, width: usize, height: usize) -> Option<(usize, usize)> {
        let (dx, dy) = self.offset();
        let nx = x.checked_add_signed(dx)?;
        let ny = y.checked_add_signed(dy)?;
        (nx < width && ny < height).then_some((nx, ny))
    }
}

/// Incoming messages of every pixel, one length-`levels` vector per side.
///
/// Slot `Direction::Left` of pixel `p` holds the message sent into `p` by its
/// left neighbor. Slots facing the image border stay zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageField {
    width: usize,
    height: usize,
    levels: usize,
    buffers: [Vec<f64>; 2],
    front: usize,
}

impl MessageField {
    pub fn zeros(width: usize, height: usize, levels: usize) -> Self {
        let len = width * height * 4 * levels;
        Self {
            width,
            height,
            levels,
            buffers: [vec![0.0; len], vec![0.0; len]],
            front: 0,
        }
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

    #[inline]
    fn slot(&self, p: usize, side: Direction) -> usize {
        (p * 4 + side as usize) * self.levels
    }

    /// Latest message into `(x, y)` from its neighbor on `from`.
    pub fn incoming(&self, x: usize, y: usize, from: Direction) -> &[f64] {
        let i = self.slot(y * self.width + x, from);
        &self.buffers[self.front][i..i + self.levels]
    }

    /// Overwrites a message in the current buffer.
    pub fn set_incoming(&mut self, x: usize, y: usize, from: Direction, message: &[f64]) {
        assert_eq!(message.len(), self.levels, "message length must equal level count");
        let i = self.slot(y * self.width + x, from);
        self.buffers[self.front][i..i + self.levels].copy_from_slice(message);
    }

    /// The current buffer, laid out as `(pixel, side, level)`.
    pub fn messages(&self) -> &[f64] {
        &self.buffers[self.front]
    }

    fn check_against(&self, volume: &CostVolume) -> Result<()> {
        if (self.width, self.height) != (volume.width(), volume.height()) {
            return Err(Error::DimensionMismatch {
                expected: (volume.width(), volume.height()),
                found: (self.width, self.height),
            });
        }
        if self.levels != volume.levels() {
            return Err(Error::param(format!(
                "message field has {} levels, volume has {}",
                self.levels,
                volume.levels()
            )));
        }
        Ok(())
    }

    /// Data cost plus all four incoming messages at `(x, y)`.
    pub fn belief(&self, volume: &CostVolume, x: usize, y: usize) -> Vec<f64> {
        let p = y * self.width + x;
        let msgs = &self.buffers[self.front][p * 4 * self.levels..(p + 1) * 4 * self.levels];
        let mut out = volume.pixel_costs(p).to_vec();
        for side in msgs.chunks_exact(self.levels) {
            for (b, m) in out.iter_mut().zip(side) {
                *b += m;
            }
        }
        out
    }
}

/// Per-pixel activity flags of the fast schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceMask {
    active: Vec<bool>,
    last_delta: Vec<f64>,
    epsilon: f64,
}

impl ConvergenceMask {
    /// Every pixel starts active with an unknown (infinite) last change.
    pub fn new(pixel_count: usize, epsilon: f64) -> Self {
        Self {
            active: vec![true; pixel_count],
            last_delta: vec![f64::INFINITY; pixel_count],
            epsilon,
        }
    }

    pub fn is_active(&self, p: usize) -> bool {
        self.active[p]
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    pub fn last_delta(&self) -> &[f64] {
        &self.last_delta
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    /// Every pixel updates on every sweep.
    Full,
    /// Stable pixels are skipped until a neighbor's message to them changes.
    #[default]
    Fast,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpConfig {
    pub max_sweeps: usize,
    pub epsilon: f64,
    pub schedule: Schedule,
    pub smoothness: SmoothnessParams,
}

impl Default for BpConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 30,
            epsilon: 1e-3,
            schedule: Schedule::Fast,
            smoothness: SmoothnessParams::default(),
        }
    }
}

impl BpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_sweeps == 0 {
            return Err(Error::param("sweep budget must be at least 1"));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::param("epsilon must be finite and >= 0"));
        }
        self.smoothness.validate()
    }
}

/// Outcome of a single sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepStats {
    /// Pixels whose outgoing messages were recomputed.
    pub updated: usize,
    /// Pixels active for the next sweep.
    pub active: usize,
    /// Largest max-norm change of any message.
    pub max_delta: f64,
}

/// Writes `min over d_p [h(d_p) + V(d_p, d_q)]`, min-normalized, into `out`.
/// `h` is consumed as scratch; entries of `h` set to infinity are excluded.
fn min_convolve(h: &[f64], params: &SmoothnessParams, out: &mut [f64]) {
    let levels = h.len();
    let floor = h.iter().copied().fold(f64::INFINITY, f64::min) + params.truncation;
    out.copy_from_slice(h);
    // Lower envelope of the linear cones, then the truncation plateau.
    for d in 1..levels {
        out[d] = out[d].min(out[d - 1] + params.slope);
    }
    for d in (0..levels.saturating_sub(1)).rev() {
        out[d] = out[d].min(out[d + 1] + params.slope);
    }
    let mut lowest = f64::INFINITY;
    for v in out.iter_mut() {
        *v = v.min(floor);
        lowest = lowest.min(*v);
    }
    for v in out.iter_mut() {
        *v -= lowest;
    }
}

/// Fills `h` with the data cost of `p` plus every incoming message except the
/// one on `skip`. Non-candidate levels become infinite.
fn gather(
    volume: &CostVolume,
    messages: &[f64],
    p: usize,
    skip: Direction,
    h: &mut [f64],
) {
    let levels = volume.levels();
    h.copy_from_slice(volume.pixel_costs(p));
    let base = p * 4 * levels;
    for side in Direction::ALL {
        if side == skip {
            continue;
        }
        let m = &messages[base + side as usize * levels..base + (side as usize + 1) * levels];
        for (a, b) in h.iter_mut().zip(m) {
            *a += b;
        }
    }
    if let Some(mask) = volume.pixel_candidates(p) {
        for (a, keep) in h.iter_mut().zip(mask) {
            if !keep {
                *a = f64::INFINITY;
            }
        }
    }
}

/// Message from pixel `(x, y)` to its neighbor on `toward`, computed from the
/// field's current buffer.
pub fn update_message(
    volume: &CostVolume,
    field: &MessageField,
    x: usize,
    y: usize,
    toward: Direction,
    params: &SmoothnessParams,
) -> Result<Vec<f64>> {
    field.check_against(volume)?;
    let (w, h) = (volume.width(), volume.height());
    if x >= w || y >= h {
        return Err(Error::OutOfBounds {
            x: x as isize,
            y: y as isize,
        });
    }
    if toward.neighbor(x, y, w, h).is_none() {
        let (dx, dy) = toward.offset();
        return Err(Error::OutOfBounds {
            x: x as isize + dx,
            y: y as isize + dy,
        });
    }
    let levels = volume.levels();
    let mut scratch = vec![0.0; levels];
    let mut out = vec![0.0; levels];
    gather(volume, field.messages(), y * w + x, toward, &mut scratch);
    min_convolve(&scratch, params, &mut out);
    Ok(out)
}

/// Runs one synchronous sweep and swaps the message buffers.
pub fn sweep(
    volume: &CostVolume,
    field: &mut MessageField,
    mask: &mut ConvergenceMask,
    config: &BpConfig,
) -> Result<SweepStats> {
    field.check_against(volume)?;
    if mask.active.len() != volume.pixel_count() {
        return Err(Error::param("convergence mask does not match the volume"));
    }
    let (w, h, levels) = (volume.width(), volume.height(), volume.levels());
    let full = config.schedule == Schedule::Full;
    let params = config.smoothness;

    let (first, second) = field.buffers.split_at_mut(1);
    let (prev, next) = if field.front == 0 {
        (&first[0], &mut second[0])
    } else {
        (&second[0], &mut first[0])
    };
    let active = &mask.active;

    // Per incoming slot: max-norm change of that message in this sweep.
    let mut slot_delta = vec![0.0f64; w * h * 4];
    next.par_chunks_mut(w * 4 * levels)
        .zip(slot_delta.par_chunks_mut(w * 4))
        .enumerate()
        .for_each(|(y, (row, row_delta))| {
            let mut scratch = vec![0.0; levels];
            for x in 0..w {
                let q = y * w + x;
                for side in Direction::ALL {
                    let local = (x * 4 + side as usize) * levels;
                    let global = q * 4 * levels + side as usize * levels;
                    let out = &mut row[local..local + levels];
                    let old = &prev[global..global + levels];
                    match side.neighbor(x, y, w, h) {
                        None => out.fill(0.0),
                        Some((px, py)) => {
                            let p = py * w + px;
                            if full || active[p] {
                                gather(volume, prev, p, side.opposite(), &mut scratch);
                                min_convolve(&scratch, &params, out);
                                row_delta[x * 4 + side as usize] = out
                                    .iter()
                                    .zip(old)
                                    .map(|(a, b)| (a - b).abs())
                                    .fold(0.0, f64::max);
                            } else {
                                out.copy_from_slice(old);
                            }
                        }
                    }
                }
            }
        });
    field.front ^= 1;

    let updated: Vec<bool> = if full {
        vec![true; w * h]
    } else {
        mask.active.clone()
    };
    let eps = config.epsilon;
    let mut max_delta = 0.0f64;
    let mut next_active = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let mut outgoing = 0.0f64;
            let mut incoming = 0.0f64;
            for side in Direction::ALL {
                incoming = incoming.max(slot_delta[p * 4 + side as usize]);
                if let Some((qx, qy)) = side.neighbor(x, y, w, h) {
                    let q = qy * w + qx;
                    outgoing = outgoing.max(slot_delta[q * 4 + side.opposite() as usize]);
                }
            }
            max_delta = max_delta.max(incoming);
            if updated[p] {
                mask.last_delta[p] = outgoing;
            }
            next_active[p] = full || (updated[p] && outgoing >= eps) || incoming >= eps;
        }
    }
    mask.active = next_active;
    mask.epsilon = eps;

    Ok(SweepStats {
        updated: updated.iter().filter(|u| **u).count(),
        active: mask.active_count(),
        max_delta,
    })
}

/// Per-pixel argmin of the belief, ties toward the smaller disparity.
pub fn extract_disparity(volume: &CostVolume, field: &MessageField) -> Result<DisparityMap> {
    field.check_against(volume)?;
    let (w, h) = (volume.width(), volume.height());
    let labels = (0..w * h)
        .into_par_iter()
        .map(|p| Some(argmin(&field.belief(volume, p % w, p / w)) as u32))
        .collect();
    DisparityMap::new(w, h, labels, 1)
}

/// First index of the smallest value.
pub(crate) fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Energy of a dense labeling: data costs summed row-major, plus the jump
/// cost of every right and down neighbor pair.
pub(crate) fn energy_of_labels(
    volume: &CostVolume,
    labels: &[usize],
    params: &SmoothnessParams,
) -> f64 {
    let (w, h) = (volume.width(), volume.height());
    let data: f64 = labels
        .iter()
        .enumerate()
        .map(|(p, &d)| volume.pixel_costs(p)[d])
        .sum();
    let mut smooth = 0.0;
    for y in 0..h {
        for x in 0..w {
            let d = labels[y * w + x];
            if x + 1 < w {
                smooth += params.cost(d, labels[y * w + x + 1]);
            }
            if y + 1 < h {
                smooth += params.cost(d, labels[(y + 1) * w + x]);
            }
        }
    }
    data + smooth
}

pub fn labeling_energy(
    volume: &CostVolume,
    map: &DisparityMap,
    params: &SmoothnessParams,
) -> Result<f64> {
    if map.dimensions() != (volume.width(), volume.height()) {
        return Err(Error::DimensionMismatch {
            expected: (volume.width(), volume.height()),
            found: map.dimensions(),
        });
    }
    let w = volume.width();
    let labels = map
        .labels()
        .iter()
        .enumerate()
        .map(|(p, l)| match l {
            Some(d) if (*d as usize) < volume.levels() => Ok(*d as usize),
            _ => Err(Error::InvalidLabel { x: p % w, y: p / w }),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(energy_of_labels(volume, &labels, params))
}

/// One row of a BP trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord {
    /// 1-based sweep index within the run.
    pub sweep: usize,
    pub updated: usize,
    pub active: usize,
    pub max_delta: f64,
    /// Energy of the labeling extracted after this sweep.
    pub energy: f64,
}

#[derive(Debug, Clone)]
pub struct BpOutcome {
    pub field: MessageField,
    pub mask: ConvergenceMask,
    pub trace: Vec<SweepRecord>,
}

impl BpOutcome {
    /// Total pixel updates across all sweeps.
    pub fn total_updates(&self) -> usize {
        self.trace.iter().map(|r| r.updated).sum()
    }
}

/// Runs up to `config.max_sweeps` sweeps starting from `field`. Under the
/// fast schedule the run stops early once no pixel is active.
pub fn run(volume: &CostVolume, field: MessageField, config: &BpConfig) -> Result<BpOutcome> {
    config.validate()?;
    field.check_against(volume)?;
    let mut field = field;
    let mut mask = ConvergenceMask::new(volume.pixel_count(), config.epsilon);
    let mut trace = Vec::with_capacity(config.max_sweeps);
    for sweep_index in 1..=config.max_sweeps {
        let stats = sweep(volume, &mut field, &mut mask, config)?;
        let labels = extract_disparity(volume, &field)?;
        let energy = labeling_energy(volume, &labels, &config.smoothness)?;
        trace.push(SweepRecord {
            sweep: sweep_index,
            updated: stats.updated,
            active: stats.active,
            max_delta: stats.max_delta,
            energy,
        });
        if config.schedule == Schedule::Fast && stats.active == 0 {
            break;
        }
    }
    Ok(BpOutcome { field, mask, trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothness_examples() {
        let p = SmoothnessParams::new(1.0, 2.0).unwrap();
        assert_eq!(p.cost(4, 4), 0.0);
        assert_eq!(p.cost(0, 5), 2.0);
        let q = SmoothnessParams::new(0.5, 10.0).unwrap();
        assert_eq!(smoothness_cost(3, 6, &q), 1.5);
        assert!(SmoothnessParams::new(-1.0, 1.0).is_err());
        assert!(SmoothnessParams::new(1.0, 0.0).is_err());
    }

    #[test]
    fn neighbors_respect_borders() {
        assert_eq!(Direction::Left.neighbor(0, 0, 3, 3), None);
        assert_eq!(Direction::Right.neighbor(1, 0, 3, 3), Some((2, 0)));
        assert_eq!(Direction::Down.neighbor(1, 2, 3, 3), None);
        assert_eq!(Direction::Up.neighbor(1, 2, 3, 3), Some((1, 1)));
    }

    #[test]
    fn two_label_message() {
        let vol = CostVolume::new(2, 1, 2, vec![0.0, 5.0, 0.0, 0.0]).unwrap();
        let field = MessageField::zeros(2, 1, 2);
        let params = SmoothnessParams::new(1.0, 10.0).unwrap();
        let m = update_message(&vol, &field, 0, 0, Direction::Right, &params).unwrap();
        assert_eq!(m, vec![0.0, 1.0]);
        assert!(matches!(
            update_message(&vol, &field, 0, 0, Direction::Left, &params),
            Err(Error::OutOfBounds { x: -1, y: 0 })
        ));
    }

    #[test]
    fn flat_data_gives_zero_message() {
        let vol = CostVolume::new(3, 3, 4, vec![0.0; 36]).unwrap();
        let field = MessageField::zeros(3, 3, 4);
        let m = update_message(&vol, &field, 1, 1, Direction::Up, &SmoothnessParams::default())
            .unwrap();
        assert_eq!(m, vec![0.0; 4]);
    }

    #[test]
    fn candidates_restrict_minimization() {
        // Only d_p = 2 admissible, so the message is a cone centered on 2.
        let vol = CostVolume::new(2, 1, 3, vec![0.0, 0.0, 0.5, 0.0, 0.0, 0.0])
            .unwrap()
            .with_candidates(vec![false, false, true, true, true, true])
            .unwrap();
        let field = MessageField::zeros(2, 1, 3);
        let params = SmoothnessParams::new(1.0, 10.0).unwrap();
        let m = update_message(&vol, &field, 0, 0, Direction::Right, &params).unwrap();
        assert_eq!(m, vec![2.0, 1.0, 0.0]);
    }

    #[test]
    fn belief_argmin_ties_low() {
        assert_eq!(argmin(&[3.0, 1.0, 1.0]), 1);
        let vol = CostVolume::new(1, 1, 3, vec![3.0, 1.0, 1.0]).unwrap();
        let field = MessageField::zeros(1, 1, 3);
        let map = extract_disparity(&vol, &field).unwrap();
        assert_eq!(map.get(0, 0), Some(1));
    }

    #[test]
    fn energy_examples() {
        let params = SmoothnessParams::new(1.0, 2.0).unwrap();
        let single = CostVolume::new(1, 1, 3, vec![0.5, 0.25, 2.0]).unwrap();
        let map = DisparityMap::from_labels(1, 1, vec![2]).unwrap();
        assert_eq!(labeling_energy(&single, &map, &params).unwrap(), 2.0);

        let pair = CostVolume::new(2, 1, 4, vec![0.0; 8]).unwrap();
        let map = DisparityMap::from_labels(2, 1, vec![0, 3]).unwrap();
        assert_eq!(labeling_energy(&pair, &map, &params).unwrap(), 2.0);

        let invalid = DisparityMap::new(2, 1, vec![Some(0), None], 1).unwrap();
        assert!(matches!(
            labeling_energy(&pair, &invalid, &params),
            Err(Error::InvalidLabel { x: 1, y: 0 })
        ));
        let out_of_range = DisparityMap::from_labels(2, 1, vec![0, 4]).unwrap();
        assert!(labeling_energy(&pair, &out_of_range, &params).is_err());
    }

    #[test]
    fn border_slots_stay_zero() {
        let costs: Vec<f64> = (0..3 * 2 * 3).map(|i| (i % 5) as f64 * 0.3).collect();
        let vol = CostVolume::new(3, 2, 3, costs).unwrap();
        let mut field = MessageField::zeros(3, 2, 3);
        let config = BpConfig::default();
        let mut mask = ConvergenceMask::new(6, config.epsilon);
        for _ in 0..3 {
            sweep(&vol, &mut field, &mut mask, &config).unwrap();
        }
        for x in 0..3 {
            assert!(field.incoming(x, 0, Direction::Up).iter().all(|v| *v == 0.0));
            assert!(field.incoming(x, 1, Direction::Down).iter().all(|v| *v == 0.0));
        }
        assert!(field.incoming(0, 1, Direction::Left).iter().all(|v| *v == 0.0));
        assert!(field.incoming(2, 0, Direction::Right).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sweep_rejects_mismatched_field() {
        let vol = CostVolume::new(2, 2, 2, vec![0.0; 8]).unwrap();
        let mut field = MessageField::zeros(3, 2, 2);
        let mut mask = ConvergenceMask::new(4, 0.0);
        assert!(matches!(
            sweep(&vol, &mut field, &mut mask, &BpConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
