//! Field <-> patch-stack conversion for dictionary learning.
//!
//! The grid is tiled with non-overlapping p x p patches; when p does not
//! divide a dimension the last patch is anchored flush to the boundary and
//! overlaps its predecessor, with overlapped pixels averaged on
//! reconstruction. The global field mean is removed on the way in and restored
//! on the way out.

use super::DenoiseError;
use crate::grid::{Axis, Field};
use ndarray::Array2;

/// Stack of flattened zero-mean patches: `data` is p² x f with one column per
/// patch, column-major over tiles (x tiles outer, t tiles inner).
#[derive(Debug, Clone)]
pub struct PatchStack {
    pub patch_size: usize,
    pub data: Array2<f64>,
    pub origins: Vec<(usize, usize)>,
    pub removed_mean: f64,
}

fn tile_starts(n: usize, p: usize) -> Vec<usize> {
    let mut starts: Vec<usize> = (0..).map(|k| k * p).take_while(|s| s + p <= n).collect();
    if starts.last().map(|&s| s + p < n).unwrap_or(true) {
        starts.push(n - p);
    }
    starts
}

pub fn to_patches(field: &Field, p: usize) -> Result<PatchStack, DenoiseError> {
    let (nx, nt) = field.values.dim();
    if p == 0 || p > nx {
        return Err(DenoiseError::PatchTooLarge { p, dim: nx });
    }
    if p > nt {
        return Err(DenoiseError::PatchTooLarge { p, dim: nt });
    }
    let mean = field.mean();
    let xs = tile_starts(nx, p);
    let ts = tile_starts(nt, p);
    let mut origins = Vec::with_capacity(xs.len() * ts.len());
    let mut data = Array2::zeros((p * p, xs.len() * ts.len()));
    for (col, (&ox, &ot)) in xs
        .iter()
        .flat_map(|ox| ts.iter().map(move |ot| (ox, ot)))
        .enumerate()
    {
        origins.push((ox, ot));
        for a in 0..p {
            for b in 0..p {
                data[[a * p + b, col]] = field.values[[ox + a, ot + b]] - mean;
            }
        }
    }
    Ok(PatchStack {
        patch_size: p,
        data,
        origins,
        removed_mean: mean,
    })
}

/// Reassembles a field from (possibly modified) patch data; pixels covered by
/// several patches are averaged.
pub fn from_patches(stack: &PatchStack, x_axis: Axis, t_axis: Axis) -> Result<Field, DenoiseError> {
    let p = stack.patch_size;
    let (rows, cols) = stack.data.dim();
    if rows != p * p {
        return Err(DenoiseError::BadStack(format!(
            "stack has {rows} rows, expected {}",
            p * p
        )));
    }
    if cols != stack.origins.len() {
        return Err(DenoiseError::BadStack(format!(
            "stack has {cols} columns but {} origins",
            stack.origins.len()
        )));
    }
    let (nx, nt) = (x_axis.count, t_axis.count);
    let mut sum = Array2::<f64>::zeros((nx, nt));
    let mut count = Array2::<f64>::zeros((nx, nt));
    for (col, &(ox, ot)) in stack.origins.iter().enumerate() {
        if ox + p > nx || ot + p > nt {
            return Err(DenoiseError::BadStack(format!(
                "origin ({ox}, {ot}) overflows {nx}x{nt} grid"
            )));
        }
        for a in 0..p {
            for b in 0..p {
                sum[[ox + a, ot + b]] += stack.data[[a * p + b, col]];
                count[[ox + a, ot + b]] += 1.0;
            }
        }
    }
    if count.iter().any(|&c| c == 0.0) {
        return Err(DenoiseError::BadStack("tiling leaves uncovered pixels".into()));
    }
    let values = Array2::from_shape_fn((nx, nt), |(i, j)| {
        sum[[i, j]] / count[[i, j]] + stack.removed_mean
    });
    Ok(Field::new(x_axis, t_axis, values)?)
}
