//! Scoring against ground truth, exact small-instance solvers, and the
//! random-dot stereogram fixture.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bp::{argmin, energy_of_labels, SmoothnessParams};
use crate::cost::CostVolume;
use crate::error::{Error, Result};
use crate::pixmap::{DisparityMap, GrayImage};

/// Bad-pixel statistics of a disparity map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub bad_pixel_rate: f64,
    pub threshold: f64,
    pub evaluated_count: usize,
    pub excluded_count: usize,
    /// Mean absolute error over evaluated pixels with a valid result.
    pub mean_abs_error: f64,
}

impl EvalReport {
    /// `bad_rate,threshold,evaluated,excluded,mae`
    pub fn csv_line(&self) -> String {
        format!(
            "{:.6},{:?},{},{},{:.6}",
            self.bad_pixel_rate,
            self.threshold,
            self.evaluated_count,
            self.excluded_count,
            self.mean_abs_error
        )
    }

    pub const CSV_HEADER: &'static str = "bad_rate,threshold,evaluated,excluded,mae";
}

/// A pixel is bad when `|result - truth| > threshold`. Pixels with invalid
/// truth or in the `border` leftmost columns are excluded; an invalid result
/// against valid truth counts as bad.
pub fn bad_pixel_rate(
    result: &DisparityMap,
    truth: &DisparityMap,
    threshold: f64,
    border: usize,
) -> Result<EvalReport> {
    if result.dimensions() != truth.dimensions() {
        return Err(Error::DimensionMismatch {
            expected: truth.dimensions(),
            found: result.dimensions(),
        });
    }
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(Error::param("threshold must be positive"));
    }
    let w = truth.width();
    let (mut evaluated, mut excluded, mut bad) = (0usize, 0usize, 0usize);
    let (mut abs_sum, mut abs_count) = (0.0, 0usize);
    for (p, (r, t)) in result.labels().iter().zip(truth.labels()).enumerate() {
        let Some(t) = t else {
            excluded += 1;
            continue;
        };
        if p % w < border {
            excluded += 1;
            continue;
        }
        evaluated += 1;
        match r {
            Some(r) => {
                let err = f64::from(r.abs_diff(*t));
                abs_sum += err;
                abs_count += 1;
                if err > threshold {
                    bad += 1;
                }
            }
            None => bad += 1,
        }
    }
    let ratio = |n: f64, d: usize| if d == 0 { 0.0 } else { n / d as f64 };
    Ok(EvalReport {
        bad_pixel_rate: ratio(bad as f64, evaluated),
        threshold,
        evaluated_count: evaluated,
        excluded_count: excluded,
        mean_abs_error: ratio(abs_sum, abs_count),
    })
}

/// An optimal labeling and its energy.
#[derive(Debug, Clone, PartialEq)]
pub struct MapSolution {
    pub labels: Vec<usize>,
    pub energy: f64,
}

/// Viterbi minimization of `sum cost_i(d_i) + sum V(d_i, d_{i+1})` on a chain.
pub fn exact_map_chain(costs: &[Vec<f64>], params: &SmoothnessParams) -> Result<MapSolution> {
    let first = costs.first().ok_or_else(|| Error::param("chain is empty"))?;
    let levels = first.len();
    if levels == 0 || costs.iter().any(|c| c.len() != levels) {
        return Err(Error::param("chain cost vectors must share a non-zero length"));
    }
    let mut acc = first.clone();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(costs.len());
    for node in &costs[1..] {
        let mut next = vec![0.0; levels];
        let mut from = vec![0; levels];
        for d in 0..levels {
            let scores: Vec<f64> = (0..levels).map(|e| acc[e] + params.cost(e, d)).collect();
            let best = argmin(&scores);
            from[d] = best;
            next[d] = node[d] + scores[best];
        }
        back.push(from);
        acc = next;
    }
    let mut label = argmin(&acc);
    let energy = acc[label];
    let mut labels = vec![label; costs.len()];
    for (i, from) in back.iter().enumerate().rev() {
        label = from[label];
        labels[i] = label;
    }
    Ok(MapSolution { labels, energy })
}

/// Largest number of labelings [`exact_map_grid_small`] will enumerate.
pub const EXHAUSTIVE_LIMIT: f64 = 1e7;

/// Exhaustive minimum over all labelings of a tiny grid; ties resolve to the
/// lexicographically smallest labeling in row-major pixel order.
pub fn exact_map_grid_small(volume: &CostVolume, params: &SmoothnessParams) -> Result<MapSolution> {
    let n = volume.pixel_count();
    let levels = volume.levels();
    let count = (levels as f64).powi(n as i32);
    if count > EXHAUSTIVE_LIMIT {
        return Err(Error::TooLarge {
            labelings: count,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    let mut labels = vec![0usize; n];
    let mut best = MapSolution {
        energy: energy_of_labels(volume, &labels, params),
        labels: labels.clone(),
    };
    loop {
        // Odometer increment with pixel 0 most significant.
        let mut i = n;
        loop {
            if i == 0 {
                return Ok(best);
            }
            i -= 1;
            labels[i] += 1;
            if labels[i] < levels {
                break;
            }
            labels[i] = 0;
        }
        let energy = energy_of_labels(volume, &labels, params);
        if energy < best.energy {
            best.energy = energy;
            best.labels.copy_from_slice(&labels);
        }
    }
}

/// Per-pixel argmin of the data term alone.
pub fn winner_take_all(volume: &CostVolume) -> DisparityMap {
    let labels = (0..volume.pixel_count())
        .map(|p| Some(argmin(volume.pixel_costs(p)) as u32))
        .collect();
    DisparityMap::new(volume.width(), volume.height(), labels, 1)
        .expect("label count matches volume")
}

/// A synthetic stereo pair with exact ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Stereogram {
    pub left: GrayImage,
    pub right: GrayImage,
    pub truth: DisparityMap,
}

/// Uniform-noise left view; the right view shifts the central rectangle
/// (`[w/4, 3w/4) x [h/4, 3h/4)`) left by `shift` pixels and fills the
/// uncovered strip with fresh noise. Truth is `shift` inside the rectangle
/// and 0 elsewhere.
pub fn random_dot_stereogram(
    width: usize,
    height: usize,
    shift: usize,
    seed: u64,
) -> Result<Stereogram> {
    if width == 0 || height == 0 {
        return Err(Error::param("stereogram dimensions must be positive"));
    }
    if shift > 0 && shift >= width / 4 {
        return Err(Error::param(format!(
            "shift {shift} must be below width/4 = {}",
            width / 4
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<u8> = (0..width * height).map(|_| rng.gen()).collect();
    let left = GrayImage::new(width, height, samples)?;
    let mut right = left.clone();
    let mut truth = DisparityMap::from_labels(width, height, vec![0; width * height])?;
    let (x0, x1) = (width / 4, 3 * width / 4);
    let (y0, y1) = (height / 4, 3 * height / 4);
    for y in y0..y1 {
        for x in x0..x1 {
            right.set(x - shift, y, left.get(x, y));
            truth.set(x, y, Some(shift as u32));
        }
        for x in x1 - shift..x1 {
            right.set(x, y, rng.gen());
        }
    }
    Ok(Stereogram { left, right, truth })
}
