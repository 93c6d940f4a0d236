//! The shipped stage-2 pooling designs.
//!
//! Each design is one fixed realisation of its weight profile, drawn once by
//! [`profile_sample`](super::profile_sample) from a stream seeded with
//! `derive_seed(BUILD_SEED, [rows, width])` and stored under `data/`.
//! Regenerate with `pooling matrix gen --profile <rows>x<width> --seed
//! <that seed>`.

use std::sync::OnceLock;

use super::{parse_matrix, SensingMatrix, WeightProfile};
use crate::error::{Error, Result};

pub const BUILD_SEED: u64 = 20_200_613;

/// `(rows, width)` of every shipped design.
pub const DESIGN_SIZES: [(usize, usize); 7] =
    [(5, 31), (6, 31), (7, 31), (8, 31), (9, 62), (10, 62), (11, 62)];

const DATA: [&str; 7] = [
    include_str!("../../data/a2_5x31.txt"),
    include_str!("../../data/a2_6x31.txt"),
    include_str!("../../data/a2_7x31.txt"),
    include_str!("../../data/a2_8x31.txt"),
    include_str!("../../data/a2_9x62.txt"),
    include_str!("../../data/a2_10x62.txt"),
    include_str!("../../data/a2_11x62.txt"),
];

/// Row/column weight profile of a stage-2 design.
pub fn design_profile(rows: usize, width: usize) -> Result<WeightProfile> {
    let (cols, row_counts): (Vec<(usize, usize)>, Vec<(usize, usize)>) = match (rows, width) {
        (5, 31) => (vec![(0, 1), (1, 5), (2, 10), (3, 10), (4, 5)], vec![(15, 5)]),
        (6, 31) => (vec![(3, 16), (4, 15)], vec![(18, 6)]),
        (7, 31) => (vec![(3, 16), (4, 15)], vec![(15, 4), (16, 3)]),
        (8, 31) => (vec![(3, 16), (4, 15)], vec![(13, 4), (14, 4)]),
        (9, 62) => (vec![(3, 31), (4, 31)], vec![(23, 1), (24, 6), (25, 2)]),
        (10, 62) => (vec![(3, 31), (4, 31)], vec![(21, 4), (22, 5), (23, 1)]),
        (11, 62) => (vec![(3, 31), (4, 31)], vec![(19, 5), (20, 4), (21, 2)]),
        _ => {
            return Err(Error::invalid(format!(
                "no shipped design of size {rows}x{width}; available: {DESIGN_SIZES:?}"
            )))
        }
    };
    Ok(WeightProfile::new(cols, row_counts))
}

/// Seed the shipped design of this size was drawn with.
pub fn design_seed(rows: usize, width: usize) -> u64 {
    crate::rng::derive_seed(BUILD_SEED, &[rows as u64, width as u64])
}

/// The shipped design of the given size.
pub fn builtin_matrix(rows: usize, width: usize) -> Result<&'static SensingMatrix> {
    static CACHE: [OnceLock<SensingMatrix>; 7] = [const { OnceLock::new() }; 7];
    let idx = DESIGN_SIZES
        .iter()
        .position(|&s| s == (rows, width))
        .ok_or_else(|| {
            Error::invalid(format!(
                "no shipped design of size {rows}x{width}; available: {DESIGN_SIZES:?}"
            ))
        })?;
    if let Some(m) = CACHE[idx].get() {
        return Ok(m);
    }
    let parsed = parse_matrix(DATA[idx], &format!("builtin {rows}x{width}"))?;
    Ok(CACHE[idx].get_or_init(|| parsed))
}
