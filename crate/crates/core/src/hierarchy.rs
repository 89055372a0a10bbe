//! Coarse-to-fine scheduling of belief propagation over a cost pyramid.

use std::io::{self, Write};

use crate::bp::{self, BpConfig, Direction, MessageField, SweepRecord};
use crate::cost::{downsample_volume, CostVolume};
use crate::error::{Error, Result};
use crate::pixmap::DisparityMap;

#[derive(Debug, Clone, PartialEq)]
pub struct PyramidConfig {
    pub scale_count: usize,
    /// Sweep budget per scale, coarsest first.
    pub sweeps_per_scale: Vec<usize>,
    /// Engine settings; `max_sweeps` is replaced by the per-scale budget.
    pub bp: BpConfig,
}

impl Default for PyramidConfig {
    fn default() -> Self {
        Self {
            scale_count: 4,
            sweeps_per_scale: vec![10, 10, 10, 20],
            bp: BpConfig::default(),
        }
    }
}

impl PyramidConfig {
    /// `scale_count` scales with the same sweep budget each.
    pub fn uniform(scale_count: usize, sweeps: usize, bp: BpConfig) -> Self {
        Self {
            scale_count,
            sweeps_per_scale: vec![sweeps; scale_count],
            bp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale_count == 0 {
            return Err(Error::param("scale count must be at least 1"));
        }
        if self.sweeps_per_scale.len() != self.scale_count {
            return Err(Error::param(format!(
                "{} sweep budgets given for {} scales",
                self.sweeps_per_scale.len(),
                self.scale_count
            )));
        }
        if self.sweeps_per_scale.contains(&0) {
            return Err(Error::param("every scale needs at least one sweep"));
        }
        BpConfig {
            max_sweeps: 1,
            ..self.bp
        }
        .validate()
    }
}

/// Level 0 is the input; each further level halves the previous one.
///
/// Fails when a level would have to be derived from a 1x1 volume, since
/// halving can no longer coarsen it.
pub fn build_pyramid(volume: &CostVolume, scale_count: usize) -> Result<Vec<CostVolume>> {
    if scale_count == 0 {
        return Err(Error::param("scale count must be at least 1"));
    }
    let mut levels = Vec::with_capacity(scale_count);
    levels.push(volume.clone());
    for k in 1..scale_count {
        let prev = &levels[k - 1];
        if prev.width() == 1 && prev.height() == 1 {
            return Err(Error::param(format!(
                "{scale_count} scales requested but a {}x{} volume supports only {k}",
                volume.width(),
                volume.height()
            )));
        }
        let next = downsample_volume(prev);
        levels.push(next);
    }
    Ok(levels)
}

/// Initializes a fine field by copying, for every side, the message vector
/// of the parent pixel `(x / 2, y / 2)`.
pub fn lift_messages(
    coarse: &MessageField,
    fine_width: usize,
    fine_height: usize,
) -> Result<MessageField> {
    let expected = (fine_width.div_ceil(2), fine_height.div_ceil(2));
    if (coarse.width(), coarse.height()) != expected || fine_width == 0 || fine_height == 0 {
        return Err(Error::DimensionMismatch {
            expected,
            found: (coarse.width(), coarse.height()),
        });
    }
    let mut fine = MessageField::zeros(fine_width, fine_height, coarse.levels());
    for y in 0..fine_height {
        for x in 0..fine_width {
            for side in Direction::ALL {
                fine.set_incoming(x, y, side, coarse.incoming(x / 2, y / 2, side));
            }
        }
    }
    Ok(fine)
}

/// A sweep record tagged with its pyramid level (0 = finest).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub scale: usize,
    pub record: SweepRecord,
}

#[derive(Debug, Clone)]
pub struct HierarchicalResult {
    pub disparity: DisparityMap,
    /// Energy of `disparity` on the finest volume.
    pub energy: f64,
    pub trace: Vec<TraceRow>,
    /// Messages at the finest scale after the last sweep.
    pub field: MessageField,
}

impl HierarchicalResult {
    pub fn total_updates(&self) -> usize {
        self.trace.iter().map(|r| r.record.updated).sum()
    }

    /// Trace rows of one pyramid level.
    pub fn scale_trace(&self, scale: usize) -> impl Iterator<Item = &SweepRecord> + '_ {
        self.trace
            .iter()
            .filter(move |r| r.scale == scale)
            .map(|r| &r.record)
    }
}

/// Runs BP from zero messages at the coarsest scale, lifting messages to each
/// finer scale, and extracts the disparity at the finest scale.
pub fn run_hierarchical(volume: &CostVolume, config: &PyramidConfig) -> Result<HierarchicalResult> {
    config.validate()?;
    let pyramid = build_pyramid(volume, config.scale_count)?;
    let coarsest = pyramid.len() - 1;
    let mut trace = Vec::new();
    let mut field = MessageField::zeros(
        pyramid[coarsest].width(),
        pyramid[coarsest].height(),
        volume.levels(),
    );
    for (budget_index, scale) in (0..=coarsest).rev().enumerate() {
        let level = &pyramid[scale];
        if scale != coarsest {
            field = lift_messages(&field, level.width(), level.height())?;
        }
        let bp_config = BpConfig {
            max_sweeps: config.sweeps_per_scale[budget_index],
            ..config.bp
        };
        let outcome = bp::run(level, field, &bp_config)?;
        trace.extend(outcome.trace.iter().map(|&record| TraceRow { scale, record }));
        field = outcome.field;
    }
    let disparity = bp::extract_disparity(volume, &field)?;
    let energy = bp::labeling_energy(volume, &disparity, &config.bp.smoothness)?;
    Ok(HierarchicalResult {
        disparity,
        energy,
        trace,
        field,
    })
}

/// Writes `scale,sweep,active,max_delta,energy` rows.
pub fn write_trace_csv(rows: &[TraceRow], mut out: impl Write) -> io::Result<()> {
    writeln!(out, "scale,sweep,active,max_delta,energy")?;
    for row in rows {
        let r = &row.record;
        writeln!(
            out,
            "{},{},{},{:.6e},{:.6}",
            row.scale, r.sweep, r.active, r.max_delta, r.energy
        )?;
    }
    out.flush()
}

/// Writes the single-scale `sweep,active,max_delta,energy` trace.
pub fn write_sweep_csv(records: &[SweepRecord], mut out: impl Write) -> io::Result<()> {
    writeln!(out, "sweep,active,max_delta,energy")?;
    for r in records {
        writeln!(out, "{},{},{:.6e},{:.6}", r.sweep, r.active, r.max_delta, r.energy)?;
    }
    out.flush()
}
