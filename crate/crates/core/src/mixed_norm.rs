//! Finite mixed-norm spaces `L_p^{N1}(L_u^{N2})`.
//!
//! An element is an `N1 x N2` real matrix. The inner norm is the normalized
//! `L_u` norm of each row, `((1/N2) sum_j |f(i,j)|^u)^(1/u)`, and the outer
//! norm is the normalized `L_p` norm of the resulting vector of row norms.
//! Infinite exponents use the maximum.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// A norm exponent in `[1, inf]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extended {
    Finite(f64),
    Inf,
}

impl Extended {
    pub fn finite(value: f64) -> Result<Self> {
        if value.is_finite() && value >= 1.0 {
            Ok(Extended::Finite(value))
        } else {
            Err(Error::InvalidExponent(format!(
                "exponent must lie in [1, inf], got {value}"
            )))
        }
    }

    pub fn is_inf(self) -> bool {
        matches!(self, Extended::Inf)
    }

    /// The finite value, if any.
    pub fn value(self) -> Option<f64> {
        match self {
            Extended::Finite(v) => Some(v),
            Extended::Inf => None,
        }
    }

    /// `1/x`, with `1/inf = 0`.
    pub fn recip(self) -> f64 {
        match self {
            Extended::Finite(v) => 1.0 / v,
            Extended::Inf => 0.0,
        }
    }

    /// `min(x, 2)`, the exponent that governs Monte Carlo rates.
    pub fn bar(self) -> f64 {
        match self {
            Extended::Finite(v) => v.min(2.0),
            Extended::Inf => 2.0,
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Extended::Finite(v) => v,
            Extended::Inf => f64::INFINITY,
        }
    }
}

impl PartialOrd for Extended {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.as_f64().partial_cmp(&other.as_f64())
    }
}

impl fmt::Display for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::Finite(v) => write!(f, "{v}"),
            Extended::Inf => f.write_str("inf"),
        }
    }
}

impl FromStr for Extended {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") {
            return Ok(Extended::Inf);
        }
        let v: f64 = t
            .parse()
            .map_err(|_| Error::InvalidExponent(format!("cannot parse exponent {s:?}")))?;
        if v == f64::INFINITY {
            return Ok(Extended::Inf);
        }
        Extended::finite(v)
    }
}

/// Dimensions and exponents of a mean computation problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemSpec {
    n1: usize,
    n2: usize,
    p: Extended,
    u: Extended,
}

impl ProblemSpec {
    pub fn new(n1: usize, n2: usize, p: Extended, u: Extended) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::InvalidSpec(format!(
                "dimensions must be positive, got {n1}x{n2}"
            )));
        }
        for e in [p, u] {
            if let Extended::Finite(v) = e {
                Extended::finite(v)?;
            }
        }
        Ok(ProblemSpec { n1, n2, p, u })
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn p(&self) -> Extended {
        self.p
    }

    pub fn u(&self) -> Extended {
        self.u
    }

    /// Total number of entries `N1 * N2`.
    pub fn entry_count(&self) -> usize {
        self.n1 * self.n2
    }
}

/// An element of `L_p^{N1}(L_u^{N2})`, stored densely in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedMatrix {
    spec: ProblemSpec,
    entries: Vec<f64>,
}

impl MixedMatrix {
    pub fn new(spec: ProblemSpec, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != spec.entry_count() {
            return Err(Error::ShapeMismatch {
                expected_rows: spec.n1,
                expected_cols: spec.n2,
                len: entries.len(),
            });
        }
        if let Some(pos) = entries.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / spec.n2,
                col: pos % spec.n2,
            });
        }
        Ok(MixedMatrix { spec, entries })
    }

    pub fn from_rows(p: Extended, u: Extended, rows: &[Vec<f64>]) -> Result<Self> {
        let n1 = rows.len();
        let n2 = rows.first().map_or(0, Vec::len);
        let spec = ProblemSpec::new(n1, n2, p, u)?;
        let mut entries = Vec::with_capacity(spec.entry_count());
        for row in rows {
            if row.len() != n2 {
                return Err(Error::ShapeMismatch {
                    expected_rows: n1,
                    expected_cols: n2,
                    len: rows.iter().map(Vec::len).sum(),
                });
            }
            entries.extend_from_slice(row);
        }
        MixedMatrix::new(spec, entries)
    }

    pub fn zeros(spec: ProblemSpec) -> Self {
        MixedMatrix {
            spec,
            entries: vec![0.0; spec.entry_count()],
        }
    }

    pub fn constant(spec: ProblemSpec, c: f64) -> Result<Self> {
        MixedMatrix::new(spec, vec![c; spec.entry_count()])
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.spec.n2 + j]
    }

    pub(crate) fn set(&mut self, i: usize, j: usize, value: f64) {
        debug_assert!(value.is_finite());
        let n2 = self.spec.n2;
        self.entries[i * n2 + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n2 = self.spec.n2;
        &self.entries[i * n2..(i + 1) * n2]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.chunks_exact(self.spec.n2)
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Entry-wise `c * self`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        MixedMatrix::new(self.spec, self.entries.iter().map(|x| c * x).collect())
    }

    /// Entry-wise sum; shapes must agree.
    pub fn add(&self, other: &MixedMatrix) -> Result<Self> {
        if self.spec.n1 != other.spec.n1 || self.spec.n2 != other.spec.n2 {
            return Err(Error::ShapeMismatch {
                expected_rows: self.spec.n1,
                expected_cols: self.spec.n2,
                len: other.entries.len(),
            });
        }
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a + b)
            .collect();
        MixedMatrix::new(self.spec, entries)
    }
}

/// Neumaier-compensated summation.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `|x|^e` with exact fast paths for `e = 1, 2` and `0^e = 0`.
pub fn abs_pow(x: f64, e: f64) -> f64 {
    let a = x.abs();
    if a == 0.0 {
        0.0
    } else if e == 1.0 {
        a
    } else if e == 2.0 {
        a * a
    } else {
        (e * a.ln()).exp()
    }
}

/// `x^(1/e)` for `x >= 0`.
pub fn root(x: f64, e: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if e == 1.0 {
        x
    } else if e == 2.0 {
        x.sqrt()
    } else {
        (x.ln() / e).exp()
    }
}

/// Normalized `L_e` norm of a slice: `((1/n) sum |x_j|^e)^(1/e)`, or the
/// maximum modulus for `e = inf`.
pub fn lp_mean_norm(values: &[f64], e: Extended) -> f64 {
    match e {
        Extended::Inf => values.iter().fold(0.0f64, |m, x| m.max(x.abs())),
        Extended::Finite(e) => {
            let s = compensated_sum(values.iter().map(|&x| abs_pow(x, e)));
            root(s / values.len() as f64, e)
        }
    }
}

/// Inner norm `||row||_{L_u^{N2}}`.
pub fn row_norm(row: &[f64], u: Extended) -> f64 {
    assert!(!row.is_empty(), "row_norm of an empty row");
    lp_mean_norm(row, u)
}

/// `||f||_{L_p^{N1}(L_u^{N2})}`.
pub fn mixed_norm(f: &MixedMatrix) -> f64 {
    let spec = f.spec();
    let row_norms: Vec<f64> = f.rows().map(|r| row_norm(r, spec.u)).collect();
    lp_mean_norm(&row_norms, spec.p)
}

/// Mean of all `N1 * N2` entries.
pub fn scalar_mean(f: &MixedMatrix) -> f64 {
    compensated_sum(f.entries().iter().copied()) / f.spec().entry_count() as f64
}

/// Vector of row means.
pub fn row_means(f: &MixedMatrix) -> Vec<f64> {
    let n2 = f.spec().n2() as f64;
    f.rows()
        .map(|r| compensated_sum(r.iter().copied()) / n2)
        .collect()
}
