//! Dense stereo correspondence with an NCC matching-cost volume and
//! hierarchical min-sum loopy belief propagation.
//!
//! The pipeline is:
//!
//! 1. [`build_cost_volume`] scores every pixel and disparity with windowed
//!    normalized cross correlation, optionally pruning each pixel to its
//!    `k` best candidates.
//! 2. [`run_hierarchical`] coarsens the volume into a pyramid, runs belief
//!    propagation from the coarsest level down, and lifts messages between
//!    levels.
//! 3. [`extract_disparity`] reads off the per-pixel minimum-belief label,
//!    and [`bad_pixel_rate`] scores it against ground truth.
//!
//! ```
//! use stereo_bp::{build_cost_volume, random_dot_stereogram, run_hierarchical, NccParams, PyramidConfig};
//!
//! let pair = random_dot_stereogram(64, 64, 4, 1).unwrap();
//! let volume = build_cost_volume(&pair.left, &pair.right, 8, &NccParams::default()).unwrap();
//! let result = run_hierarchical(&volume, &PyramidConfig::default()).unwrap();
//! assert_eq!(result.disparity.get(32, 32), Some(4));
//! ```

pub mod bp;
pub mod cost;
pub mod error;
pub mod eval;
pub mod hierarchy;
pub mod pixmap;

pub use bp::{
    extract_disparity, labeling_energy, smoothness_cost, sweep, update_message, BpConfig,
    BpOutcome, ConvergenceMask, Direction, MessageField, Schedule, SmoothnessParams, SweepRecord,
    SweepStats,
};
pub use cost::{
    build_cost_volume, downsample_volume, ncc, ncc_score, prune_candidates, CandidateCount,
    CostVolume, NccParams,
};
pub use error::{Error, Result};
pub use eval::{
    bad_pixel_rate, exact_map_chain, exact_map_grid_small, random_dot_stereogram,
    winner_take_all, EvalReport, MapSolution, Stereogram,
};
pub use hierarchy::{
    build_pyramid, lift_messages, run_hierarchical, HierarchicalResult, PyramidConfig, TraceRow,
};
pub use pixmap::{
    read_disparity, read_image, read_pgm, to_grayscale, write_pgm, DisparityMap, GrayImage,
};
