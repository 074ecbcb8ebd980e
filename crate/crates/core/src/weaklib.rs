//! Weak-form candidate libraries.
//!
//! A candidate `u^{d1} * ∂x^{d2} u` is turned into one column of the library by
//! integrating it against a smooth compactly-supported weight over each of
//! `N_Ω` randomly placed space-time subdomains. Derivatives are moved onto the
//! weight by integration by parts wherever a total-derivative identity exists,
//! so the data itself is never differentiated for those columns:
//!
//! * `d1 = 0`: all `d2` derivatives transfer to the weight with sign `(-1)^{d2}`.
//! * `d1 >= 1, d2 = 1`: `u^{d1} u_x = ∂x(u^{d1+1})/(d1+1)`, so one derivative
//!   transfers and the integrand becomes `u^{d1+1}`.
//! * `d1 >= 1, d2 >= 2`: no identity exists; the derivative is taken by centered
//!   finite differences on the (optionally smoothed) field inside the subdomain.
//!
//! The target `q0[i] = ∫ w ∂t u` is likewise computed as `-∫ (∂t w) u`.

use crate::denoise::savgol::{smooth_matrix, SavgolSpec};
use crate::grid::Field;
use ndarray::{s, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error("invalid candidate: u^0 with no derivative")]
    InvalidTerm,
    #[error("subdomain spec invalid: {0}")]
    InvalidSpec(String),
    #[error("subdomain does not fit: {0}")]
    OutOfBounds(String),
    #[error("subdomain holds fewer than 5 grid points along {axis}")]
    TooFewPoints { axis: &'static str },
    #[error("library entry ({row}, {col}) is non-finite")]
    NonFinite { row: usize, col: usize },
    #[error("target entry {row} is non-finite")]
    NonFiniteTarget { row: usize },
    #[error("smoothing window invalid: {0}")]
    Smoothing(String),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("payload holds {found} values but header claims {expected}")]
    SizeMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One library candidate `u^{power} * ∂x^{deriv} u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CandidateTerm {
    #[serde(rename = "d1")]
    pub power: u32,
    #[serde(rename = "d2")]
    pub deriv: u32,
}

impl CandidateTerm {
    pub fn new(power: u32, deriv: u32) -> Result<Self, LibraryError> {
        if power + deriv == 0 {
            return Err(LibraryError::InvalidTerm);
        }
        Ok(Self { power, deriv })
    }
}

impl std::fmt::Display for CandidateTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let du = match self.deriv {
            0 => String::new(),
            d => format!("u_{}", "x".repeat(d as usize)),
        };
        let up = match self.power {
            0 => String::new(),
            1 => "u".into(),
            p => format!("u^{p}"),
        };
        match (up.is_empty(), du.is_empty()) {
            (false, false) => write!(f, "{up}*{du}"),
            (false, true) => write!(f, "{up}"),
            (true, false) => write!(f, "{du}"),
            (true, true) => write!(f, "1"),
        }
    }
}

/// All `(d1, d2)` with `0 <= d1 <= max_power`, `0 <= d2 <= max_deriv`,
/// `d1 + d2 >= 1`, in lexicographic order.
pub fn enumerate_terms(max_power: u32, max_deriv: u32) -> Vec<CandidateTerm> {
    let mut terms = Vec::new();
    for power in 0..=max_power {
        for deriv in 0..=max_deriv {
            if power + deriv >= 1 {
                terms.push(CandidateTerm { power, deriv });
            }
        }
    }
    terms
}

/// Placement and shape of the random integration subdomains.
///
/// Each subdomain is the rectangle `[xc - Hx, xc + Hx] x [tc - Ht, tc + Ht]`
/// carrying the separable weight `w = (x̄² - 1)^P (t̄² - 1)^P` in the unit
/// coordinates `x̄ = (x - xc)/Hx`, `t̄ = (t - tc)/Ht`; `w` vanishes along the
/// subdomain boundary together with its first `P - 1` derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubdomainSpec {
    pub n_domains: usize,
    pub half_width_x: f64,
    pub half_width_t: f64,
    pub seed: u64,
    pub weight_power: u32,
}

impl SubdomainSpec {
    pub fn validate(&self) -> Result<(), LibraryError> {
        if self.n_domains == 0 {
            return Err(LibraryError::InvalidSpec(
                "need at least one subdomain".into(),
            ));
        }
        if !(self.half_width_x > 0.0 && self.half_width_t > 0.0) {
            return Err(LibraryError::InvalidSpec(
                "half-widths must be positive".into(),
            ));
        }
        if self.weight_power < 2 {
            return Err(LibraryError::InvalidSpec(
                "weight power must be at least 2".into(),
            ));
        }
        Ok(())
    }
}

/// Weak-form regression problem: target `q0` and candidate matrix `phi`
/// (rows = subdomains, columns = candidates, intercept last when enabled).
#[derive(Debug, Clone)]
pub struct WeakLibrary {
    pub phi: Array2<f64>,
    pub q0: Array1<f64>,
    pub terms: Vec<CandidateTerm>,
    pub include_intercept: bool,
    pub spec: SubdomainSpec,
}

impl WeakLibrary {
    pub fn n_samples(&self) -> usize {
        self.q0.len()
    }

    pub fn n_candidates(&self) -> usize {
        self.phi.ncols()
    }

    /// Candidate term behind column `col`; `None` for the intercept column.
    pub fn term_of(&self, col: usize) -> Option<CandidateTerm> {
        self.terms.get(col).copied()
    }
}

/// Optional adjustments to [`build`].
#[derive(Debug, Clone, Copy, Default)]
pub struct BuildOptions {
    /// Odd Savitzky-Golay window applied to the field restricted to each
    /// subdomain before quadrature; `None` or `Some(1)` disables smoothing.
    pub smoothing_window: Option<usize>,
    /// Append a `∫ w` column after the candidate columns.
    pub intercept: bool,
}

/// d-th derivative of `(y² - 1)^p`, evaluated analytically via the binomial
/// expansion. `d = 0` returns the weight factor itself.
pub fn weight_poly_deriv(p: u32, d: u32, y: f64) -> f64 {
    let mut acc = 0.0;
    for m in 0..=p {
        let e = 2 * m; // exponent of y^e
        if e < d {
            continue;
        }
        // binomial(p, m) * (-1)^(p-m)
        let mut c = 1.0;
        for k in 0..m {
            c = c * (p - k) as f64 / (k + 1) as f64;
        }
        if (p - m) % 2 == 1 {
            c = -c;
        }
        // falling factorial e * (e-1) * ... * (e-d+1)
        let mut fall = 1.0;
        for k in 0..d {
            fall *= (e - k) as f64;
        }
        acc += c * fall * y.powi((e - d) as i32);
    }
    acc
}

/// Minimal-width centered finite-difference weights for the d-th derivative
/// (second-order accurate), as an odd-length kernel to be scaled by `1/h^d`.
pub fn central_diff_weights(d: u32) -> Vec<f64> {
    let second = [1.0, -2.0, 1.0];
    let first = [-0.5, 0.0, 0.5];
    let mut kernel = vec![1.0];
    let mut rem = d;
    if rem % 2 == 1 {
        kernel = convolve(&kernel, &first);
        rem -= 1;
    }
    while rem > 0 {
        kernel = convolve(&kernel, &second);
        rem -= 2;
    }
    kernel
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Builds the weak library with derivative transfer and no smoothing.
pub fn build(
    field: &Field,
    terms: &[CandidateTerm],
    spec: &SubdomainSpec,
) -> Result<WeakLibrary, LibraryError> {
    build_with(field, terms, spec, &BuildOptions::default())
}

/// Same as [`build`] but the field restricted to each subdomain is smoothed by
/// a 2D Savitzky-Golay filter of order 2 and window `alpha` before quadrature.
pub fn denoised_build(
    field: &Field,
    terms: &[CandidateTerm],
    spec: &SubdomainSpec,
    alpha: usize,
) -> Result<WeakLibrary, LibraryError> {
    build_with(
        field,
        terms,
        spec,
        &BuildOptions {
            smoothing_window: Some(alpha),
            intercept: false,
        },
    )
}

struct WeightTables {
    /// trapezoid factors including dx*dt, indexed [a][b]
    trap: Array2<f64>,
    /// g(x̄)g(t̄)
    w0: Array2<f64>,
    /// g(x̄)g'(t̄)/Ht
    wt: Array2<f64>,
    /// per pure-derivative order d: g^(d)(x̄)g(t̄)/Hx^d
    wx: Vec<Array2<f64>>,
}

fn weight_tables(mx: usize, mt: usize, hx: f64, ht: f64, p: u32, max_d: u32) -> WeightTables {
    let na = 2 * mx + 1;
    let nb = 2 * mt + 1;
    let xs: Vec<f64> = (0..na)
        .map(|a| (a as f64 - mx as f64) / mx as f64)
        .collect();
    let ts: Vec<f64> = (0..nb)
        .map(|b| (b as f64 - mt as f64) / mt as f64)
        .collect();
    let gx: Vec<f64> = xs.iter().map(|&y| weight_poly_deriv(p, 0, y)).collect();
    let gt: Vec<f64> = ts.iter().map(|&y| weight_poly_deriv(p, 0, y)).collect();
    let dgt: Vec<f64> = ts.iter().map(|&y| weight_poly_deriv(p, 1, y)).collect();
    let dx = hx / mx as f64;
    let dt = ht / mt as f64;
    let trap = Array2::from_shape_fn((na, nb), |(a, b)| {
        let fa = if a == 0 || a == na - 1 { 0.5 } else { 1.0 };
        let fb = if b == 0 || b == nb - 1 { 0.5 } else { 1.0 };
        fa * fb * dx * dt
    });
    let w0 = Array2::from_shape_fn((na, nb), |(a, b)| gx[a] * gt[b]);
    let wt = Array2::from_shape_fn((na, nb), |(a, b)| gx[a] * dgt[b] / ht);
    let mut wx = Vec::new();
    for d in 0..=max_d {
        let gxd: Vec<f64> = xs.iter().map(|&y| weight_poly_deriv(p, d, y)).collect();
        let scale = hx.powi(d as i32);
        wx.push(Array2::from_shape_fn((na, nb), |(a, b)| {
            gxd[a] * gt[b] / scale
        }));
    }
    WeightTables { trap, w0, wt, wx }
}

pub fn build_with(
    field: &Field,
    terms: &[CandidateTerm],
    spec: &SubdomainSpec,
    opts: &BuildOptions,
) -> Result<WeakLibrary, LibraryError> {
    spec.validate()?;
    for t in terms {
        if t.power + t.deriv == 0 {
            return Err(LibraryError::InvalidTerm);
        }
    }
    let nx = field.nx();
    let nt = field.nt();
    let dx = field.x_axis.spacing();
    let dt = field.t_axis.spacing();

    // Snap half-widths to whole grid steps; the weight then hits exactly zero
    // at the first and last quadrature point of every subdomain.
    let mx = (spec.half_width_x / dx).round() as usize;
    let mt = (spec.half_width_t / dt).round() as usize;
    if mx < 2 {
        return Err(LibraryError::TooFewPoints { axis: "x" });
    }
    if mt < 2 {
        return Err(LibraryError::TooFewPoints { axis: "t" });
    }

    // Margin of extra columns needed by centered stencils for composite terms.
    let fd_margin = terms
        .iter()
        .filter(|t| t.power >= 1 && t.deriv >= 2)
        .map(|t| ((t.deriv + 1) / 2) as usize)
        .max()
        .unwrap_or(0);
    let max_transfer_d = terms
        .iter()
        .filter(|t| t.power == 0)
        .map(|t| t.deriv)
        .max()
        .unwrap_or(0);
    if max_transfer_d > spec.weight_power {
        return Err(LibraryError::InvalidSpec(format!(
            "weight power {} cannot absorb {} transferred derivatives; boundary terms would survive",
            spec.weight_power, max_transfer_d
        )));
    }

    let ix_lo = mx + fd_margin;
    let ix_hi = nx
        .checked_sub(1 + mx + fd_margin)
        .ok_or_else(|| LibraryError::OutOfBounds("x window exceeds grid".into()))?;
    let it_lo = mt;
    let it_hi = nt
        .checked_sub(1 + mt)
        .ok_or_else(|| LibraryError::OutOfBounds("t window exceeds grid".into()))?;
    if ix_lo > ix_hi {
        return Err(LibraryError::OutOfBounds("x window exceeds grid".into()));
    }
    if it_lo > it_hi {
        return Err(LibraryError::OutOfBounds("t window exceeds grid".into()));
    }

    let smoothing = match opts.smoothing_window {
        None | Some(1) => None,
        Some(w) => {
            if w % 2 == 0 || w < 3 {
                return Err(LibraryError::Smoothing(format!(
                    "window must be odd and >= 3, got {w}"
                )));
            }
            if w > 2 * mx + 1 || w > 2 * mt + 1 {
                return Err(LibraryError::Smoothing(format!(
                    "window {w} exceeds subdomain extent"
                )));
            }
            Some(w)
        }
    };

    let hx = mx as f64 * dx;
    let ht = mt as f64 * dt;
    let tables = weight_tables(mx, mt, hx, ht, spec.weight_power, max_transfer_d.max(1));

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centers: Vec<(usize, usize)> = (0..spec.n_domains)
        .map(|_| {
            (
                rng.random_range(ix_lo..=ix_hi),
                rng.random_range(it_lo..=it_hi),
            )
        })
        .collect();

    let n_cols = terms.len() + usize::from(opts.intercept);
    let mut phi = Array2::zeros((spec.n_domains, n_cols));
    let mut q0 = Array1::zeros(spec.n_domains);

    use rayon::prelude::*;
    let rows: Vec<(f64, Vec<f64>)> = centers
        .par_iter()
        .map(|&(ic, jc)| {
            integrate_subdomain(
                field,
                terms,
                &tables,
                ic,
                jc,
                mx,
                mt,
                fd_margin,
                dx,
                smoothing,
                opts.intercept,
            )
        })
        .collect();
    for (i, (q, row)) in rows.into_iter().enumerate() {
        q0[i] = q;
        for (j, v) in row.into_iter().enumerate() {
            phi[[i, j]] = v;
        }
    }

    for ((row, col), v) in phi.indexed_iter() {
        if !v.is_finite() {
            return Err(LibraryError::NonFinite { row, col });
        }
    }
    if let Some(row) = q0.iter().position(|v| !v.is_finite()) {
        return Err(LibraryError::NonFiniteTarget { row });
    }

    Ok(WeakLibrary {
        phi,
        q0,
        terms: terms.to_vec(),
        include_intercept: opts.intercept,
        spec: *spec,
    })
}

#[allow(clippy::too_many_arguments)]
fn integrate_subdomain(
    field: &Field,
    terms: &[CandidateTerm],
    tables: &WeightTables,
    ic: usize,
    jc: usize,
    mx: usize,
    mt: usize,
    fd_margin: usize,
    dx: f64,
    smoothing: Option<usize>,
    intercept: bool,
) -> (f64, Vec<f64>) {
    let na = 2 * mx + 1;
    let nb = 2 * mt + 1;
    // Window plus the finite-difference margin along x.
    let x0 = ic - mx - fd_margin;
    let x1 = ic + mx + fd_margin + 1;
    let t0 = jc - mt;
    let t1 = jc + mt + 1;
    let mut window = field.values.slice(s![x0..x1, t0..t1]).to_owned();
    if let Some(w) = smoothing {
        // Order-2 smoothing with shifted windows at the edges keeps quadratic
        // fields exactly intact.
        window = smooth_matrix(
            &window,
            &SavgolSpec {
                window: (w, w),
                polyorder: (2, 2),
            },
        )
        .expect("window validated against subdomain extent");
    }
    let inner = window.slice(s![fd_margin..fd_margin + na, ..]);

    let quad = |f: &dyn Fn(usize, usize) -> f64, table: &Array2<f64>| -> f64 {
        let mut acc = 0.0;
        for a in 0..na {
            for b in 0..nb {
                acc += table[[a, b]] * tables.trap[[a, b]] * f(a, b);
            }
        }
        acc
    };

    // q0 = ∫ w u_t = -∫ w_t u
    let q = -quad(&|a, b| inner[[a, b]], &tables.wt);

    let mut row = Vec::with_capacity(terms.len() + usize::from(intercept));
    for term in terms {
        let d1 = term.power;
        let d2 = term.deriv;
        let v = if d1 == 0 {
            // (-1)^{d2} ∫ w^{(d2)}_x u
            let sign = if d2 % 2 == 0 { 1.0 } else { -1.0 };
            sign * quad(&|a, b| inner[[a, b]], &tables.wx[d2 as usize])
        } else if d2 == 0 {
            quad(&|a, b| inner[[a, b]].powi(d1 as i32), &tables.w0)
        } else if d2 == 1 {
            // u^{d1} u_x = ∂x(u^{d1+1})/(d1+1)
            let scale = -1.0 / (d1 + 1) as f64;
            scale * quad(&|a, b| inner[[a, b]].powi(d1 as i32 + 1), &tables.wx[1])
        } else {
            // composite: centered finite differences inside the window
            let kernel = central_diff_weights(d2);
            let r = kernel.len() / 2;
            let scale = dx.powi(d2 as i32);
            let offset = fd_margin - r;
            let deriv = |a: usize, b: usize| -> f64 {
                let mut acc = 0.0;
                for (k, &ck) in kernel.iter().enumerate() {
                    acc += ck * window[[a + offset + k, b]];
                }
                acc / scale
            };
            quad(
                &|a, b| inner[[a, b]].powi(d1 as i32) * deriv(a, b),
                &tables.w0,
            )
        };
        row.push(v);
    }
    if intercept {
        row.push(quad(&|_, _| 1.0, &tables.w0));
    }
    (q, row)
}

#[derive(Debug, Serialize, Deserialize)]
struct LibraryHeader {
    n_omega: usize,
    terms: Vec<CandidateTerm>,
    include_intercept: bool,
    n_domains: usize,
    half_width_x: f64,
    half_width_t: f64,
    seed: u64,
    weight_power: u32,
    layout: String,
    dtype: String,
}

/// Serializes a library as a JSON header line followed by `q0` and then the
/// rows of `phi`, all little-endian f64.
pub fn write_library<P: AsRef<Path>>(lib: &WeakLibrary, path: P) -> Result<(), LibraryError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    let header = LibraryHeader {
        n_omega: lib.n_samples(),
        terms: lib.terms.clone(),
        include_intercept: lib.include_intercept,
        n_domains: lib.spec.n_domains,
        half_width_x: lib.spec.half_width_x,
        half_width_t: lib.spec.half_width_t,
        seed: lib.spec.seed,
        weight_power: lib.spec.weight_power,
        layout: "q0-then-phi-rows".into(),
        dtype: "f64le".into(),
    };
    let line =
        serde_json::to_string(&header).map_err(|e| LibraryError::MalformedHeader(e.to_string()))?;
    w.write_all(line.as_bytes())?;
    w.write_all(b"\n")?;
    for v in lib.q0.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in lib.phi.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_library<P: AsRef<Path>>(path: P) -> Result<WeakLibrary, LibraryError> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: LibraryHeader = serde_json::from_str(line.trim_end())
        .map_err(|e| LibraryError::MalformedHeader(e.to_string()))?;
    if header.dtype != "f64le" || header.layout != "q0-then-phi-rows" {
        return Err(LibraryError::MalformedHeader(
            "unsupported layout or dtype".into(),
        ));
    }
    let n_cols = header.terms.len() + usize::from(header.include_intercept);
    let expected = header.n_omega * (1 + n_cols);
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != expected * 8 {
        return Err(LibraryError::SizeMismatch {
            expected,
            found: payload.len() / 8,
        });
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let q0 = Array1::from_vec(values[..header.n_omega].to_vec());
    let phi =
        Array2::from_shape_vec((header.n_omega, n_cols), values[header.n_omega..].to_vec())
            .expect("shape checked above");
    Ok(WeakLibrary {
        phi,
        q0,
        terms: header.terms,
        include_intercept: header.include_intercept,
        spec: SubdomainSpec {
            n_domains: header.n_domains,
            half_width_x: header.half_width_x,
            half_width_t: header.half_width_t,
            seed: header.seed,
            weight_power: header.weight_power,
        },
    })
}
