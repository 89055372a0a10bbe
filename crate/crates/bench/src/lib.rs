//! Shared fixtures for the criterion benchmarks.

use stereo_bp::{build_cost_volume, random_dot_stereogram, CostVolume, NccParams};

/// NCC volume of a `size x size` random-dot pair shifted by 5 pixels.
pub fn stereogram_volume(size: usize, levels: usize) -> CostVolume {
    let pair = random_dot_stereogram(size, size, 5, 1).expect("valid stereogram geometry");
    build_cost_volume(&pair.left, &pair.right, levels, &NccParams::default())
        .expect("matching dimensions")
}
