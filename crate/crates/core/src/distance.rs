//! Cosine frame distance and path-normalized DTW dissimilarity.
//!
//! The DTW value is the minimum, over all monotone paths from the first to
//! the last cell of the cost grid using diagonal, vertical and horizontal
//! steps, of the mean cell cost along the path. Because the mean is not
//! additive, the recursion keeps one accumulated cost per (cell, path
//! length) state; this costs O(n·m·(n+m)) which is fine for phone-sized
//! segments.

use serde::{Deserialize, Serialize};

use crate::corpus::FrameMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtwConfig {
    /// Distance reported when either frame has zero norm.
    pub zero_vector_distance: f64,
}

impl Default for DtwConfig {
    fn default() -> Self {
        DtwConfig {
            zero_vector_distance: 1.0,
        }
    }
}

impl DtwConfig {
    pub fn new(zero_vector_distance: f64) -> Result<Self> {
        if !(0.0..=2.0).contains(&zero_vector_distance) {
            return Err(Error::Argument(format!(
                "zero_vector_distance {zero_vector_distance} outside [0, 2]"
            )));
        }
        Ok(DtwConfig {
            zero_vector_distance,
        })
    }
}

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

#[inline]
fn cosine_core(a: &[f32], na: f64, b: &[f32], nb: f64, zero: f64) -> f64 {
    if na == 0.0 || nb == 0.0 {
        return zero;
    }
    if a == b {
        return 0.0;
    }
    let dot: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum();
    (1.0 - dot / (na * nb)).clamp(0.0, 2.0)
}

/// `1 - a·b / (|a||b|)`, accumulated in 64-bit arithmetic.
pub fn cosine_distance(a: &[f32], b: &[f32], cfg: &DtwConfig) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Argument(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite value in cosine distance input".into()));
    }
    Ok(cosine_core(a, norm(a), b, norm(b), cfg.zero_vector_distance))
}

/// A frame matrix with per-frame norms cached for repeated DTW calls.
#[derive(Debug, Clone)]
pub struct PreparedFrames<'a> {
    frames: &'a FrameMatrix,
    norms: Vec<f64>,
}

impl<'a> PreparedFrames<'a> {
    pub fn new(frames: &'a FrameMatrix) -> Self {
        PreparedFrames {
            norms: frames.rows().map(norm).collect(),
            frames,
        }
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }
}

/// Cost grid `cost[i * m + j] = cosine(a_i, b_j)`.
fn cost_grid(a: &PreparedFrames<'_>, b: &PreparedFrames<'_>, zero: f64) -> Vec<f64> {
    let mut grid = Vec::with_capacity(a.len() * b.len());
    for (i, ra) in a.frames.rows().enumerate() {
        for (j, rb) in b.frames.rows().enumerate() {
            grid.push(cosine_core(ra, a.norms[i], rb, b.norms[j], zero));
        }
    }
    grid
}

/// Minimum mean cell cost over monotone paths through an `n × m` grid.
fn min_mean_path(cost: &[f64], n: usize, m: usize) -> f64 {
    // acc[j * kmax + (k - 1)]: cheapest path to (i, j) with k cells.
    let kmax = n + m - 1;
    let mut prev = vec![f64::INFINITY; m * kmax];
    let mut cur = vec![f64::INFINITY; m * kmax];
    for i in 0..n {
        for j in 0..m {
            let c = cost[i * m + j];
            let base = j * kmax;
            if i == 0 && j == 0 {
                cur[base] = c;
                continue;
            }
            let kmin = i.max(j) + 1;
            for k in kmin..=i + j + 1 {
                // diagonal > vertical > horizontal on ties
                let mut best = f64::INFINITY;
                if i > 0 && j > 0 {
                    best = prev[(j - 1) * kmax + k - 2];
                }
                if i > 0 {
                    let v = prev[base + k - 2];
                    if v < best {
                        best = v;
                    }
                }
                if j > 0 {
                    let h = cur[(j - 1) * kmax + k - 2];
                    if h < best {
                        best = h;
                    }
                }
                cur[base + k - 1] = best + c;
            }
        }
        std::mem::swap(&mut prev, &mut cur);
        cur.iter_mut().for_each(|v| *v = f64::INFINITY);
    }
    let last = &prev[(m - 1) * kmax..m * kmax];
    let mut best = f64::INFINITY;
    for (idx, &acc) in last.iter().enumerate() {
        let mean = acc / (idx + 1) as f64;
        if mean < best {
            best = mean;
        }
    }
    best
}

pub fn dtw_prepared(a: &PreparedFrames<'_>, b: &PreparedFrames<'_>, cfg: &DtwConfig) -> f64 {
    let grid = cost_grid(a, b, cfg.zero_vector_distance);
    min_mean_path(&grid, a.len(), b.len())
}

/// DTW dissimilarity between two frame matrices of equal dimension.
pub fn dtw_dissimilarity(a: &FrameMatrix, x: &FrameMatrix, cfg: &DtwConfig) -> Result<f64> {
    if a.nframes() == 0 || x.nframes() == 0 {
        return Err(Error::Argument("DTW input has no frames".into()));
    }
    if a.dim() != x.dim() {
        return Err(Error::Argument(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            x.dim()
        )));
    }
    Ok(dtw_prepared(
        &PreparedFrames::new(a),
        &PreparedFrames::new(x),
        cfg,
    ))
}
