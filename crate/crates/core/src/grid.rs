//! Space-time fields on rectangular grids, Gaussian noise injection, and field
//! file I/O.
//!
//! A [`Field`] stores one real-valued state sampled x-major: row `i` is the
//! spatial index, column `j` the temporal index. Field files are a single JSON
//! header line followed by the raw little-endian `f64` payload, so round-trips
//! are bit-exact.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

/// Name of the generator used for every seeded draw in this crate, recorded in
/// file headers. ChaCha8 is counter-based, so realizations are reproducible
/// across platforms for a fixed seed.
pub const PRNG_NAME: &str = "chacha8";

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid axis: {0}")]
    InvalidAxis(String),
    #[error("field is {rows}x{cols} but axes require {nx}x{nt}")]
    DimensionMismatch {
        rows: usize,
        cols: usize,
        nx: usize,
        nt: usize,
    },
    #[error("non-finite value at grid point ({i}, {j})")]
    NonFinite { i: usize, j: usize },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("payload holds {found} values but header claims {expected}")]
    SizeMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Uniformly spaced sample locations on a closed interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Result<Self, GridError> {
        if !(min.is_finite() && max.is_finite()) {
            return Err(GridError::InvalidAxis("bounds must be finite".into()));
        }
        if max <= min {
            return Err(GridError::InvalidAxis(format!(
                "max ({max}) must exceed min ({min})"
            )));
        }
        if count < 2 {
            return Err(GridError::InvalidAxis(format!(
                "need at least 2 samples, got {count}"
            )));
        }
        Ok(Self { min, max, count })
    }

    /// Spacing between adjacent samples.
    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.count - 1) as f64
    }

    /// Physical coordinate of sample `i`.
    pub fn point(&self, i: usize) -> f64 {
        self.min + i as f64 * self.spacing()
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(|i| self.point(i))
    }

    /// Physical extent `max - min`.
    pub fn extent(&self) -> f64 {
        self.max - self.min
    }
}

/// A real-valued state sampled on a space-time grid; `values[[i, j]]` is the
/// sample at `(x_axis.point(i), t_axis.point(j))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub x_axis: Axis,
    pub t_axis: Axis,
    pub values: Array2<f64>,
}

impl Field {
    pub fn new(x_axis: Axis, t_axis: Axis, values: Array2<f64>) -> Result<Self, GridError> {
        let (rows, cols) = values.dim();
        if rows != x_axis.count || cols != t_axis.count {
            return Err(GridError::DimensionMismatch {
                rows,
                cols,
                nx: x_axis.count,
                nt: t_axis.count,
            });
        }
        if let Some(((i, j), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(GridError::NonFinite { i, j });
        }
        Ok(Self {
            x_axis,
            t_axis,
            values,
        })
    }

    pub fn nx(&self) -> usize {
        self.x_axis.count
    }

    pub fn nt(&self) -> usize {
        self.t_axis.count
    }

    /// Population (divide-by-N) standard deviation over every grid value.
    pub fn std_dev(&self) -> f64 {
        let n = self.values.len() as f64;
        let mean = self.values.sum() / n;
        let var = self.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        var.sqrt()
    }

    pub fn mean(&self) -> f64 {
        self.values.sum() / self.values.len() as f64
    }
}

/// Gaussian observation-noise model: i.i.d. samples of
/// `(epsilon_percent * sigma_u / 100) * N(0, 1)` where `sigma_u` is the
/// population standard deviation of the clean field over the whole domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub epsilon_percent: f64,
    pub seed: u64,
}

/// Adds seeded Gaussian noise scaled to `epsilon_percent`% of the field's
/// global standard deviation. Deterministic for a fixed spec.
pub fn add_noise(field: &Field, spec: &NoiseSpec) -> Field {
    assert!(
        spec.epsilon_percent.is_finite() && spec.epsilon_percent >= 0.0,
        "noise level must be finite and non-negative"
    );
    if spec.epsilon_percent == 0.0 {
        return field.clone();
    }
    let scale = spec.epsilon_percent * field.std_dev() / 100.0;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = field.clone();
    // x-major iteration order matches the on-disk layout.
    for v in out.values.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v += scale * z;
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct FieldHeader {
    nx: usize,
    nt: usize,
    xmin: f64,
    xmax: f64,
    tmin: f64,
    tmax: f64,
    layout: String,
    dtype: String,
    prng: String,
}

/// Writes a field as one JSON header line plus `nx*nt` little-endian f64s.
pub fn write_field<P: AsRef<Path>>(field: &Field, path: P) -> Result<(), GridError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    let header = FieldHeader {
        nx: field.nx(),
        nt: field.nt(),
        xmin: field.x_axis.min,
        xmax: field.x_axis.max,
        tmin: field.t_axis.min,
        tmax: field.t_axis.max,
        layout: "x-major".into(),
        dtype: "f64le".into(),
        prng: PRNG_NAME.into(),
    };
    let line = serde_json::to_string(&header)
        .map_err(|e| GridError::MalformedHeader(e.to_string()))?;
    w.write_all(line.as_bytes())?;
    w.write_all(b"\n")?;
    for v in field.values.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a field file written by [`write_field`]; the round-trip is bit-exact.
pub fn read_field<P: AsRef<Path>>(path: P) -> Result<Field, GridError> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: FieldHeader = serde_json::from_str(line.trim_end())
        .map_err(|e| GridError::MalformedHeader(e.to_string()))?;
    if header.layout != "x-major" {
        return Err(GridError::MalformedHeader(format!(
            "unsupported layout {:?}",
            header.layout
        )));
    }
    if header.dtype != "f64le" {
        return Err(GridError::MalformedHeader(format!(
            "unsupported dtype {:?}",
            header.dtype
        )));
    }
    let expected = header
        .nx
        .checked_mul(header.nt)
        .ok_or_else(|| GridError::MalformedHeader("grid size overflow".into()))?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != expected * 8 {
        return Err(GridError::SizeMismatch {
            expected,
            found: payload.len() / 8,
        });
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let x_axis = Axis::new(header.xmin, header.xmax, header.nx)?;
    let t_axis = Axis::new(header.tmin, header.tmax, header.nt)?;
    let values = Array2::from_shape_vec((header.nx, header.nt), values)
        .expect("shape checked above");
    Field::new(x_axis, t_axis, values)
}

/// CSV export for inspection: one row per spatial index, columns in time order.
pub fn write_field_csv<P: AsRef<Path>>(field: &Field, path: P) -> Result<(), GridError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for row in field.values.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}
