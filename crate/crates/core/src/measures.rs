//! Total variation, coordinatewise oscillation, and nonnegative-matrix
//! spectral utilities.

use serde::{Deserialize, Serialize};

use crate::error::{LocalityError, Result};
use crate::mdp::{Space, StateFunction};

/// Tolerance used when checking that `tv` inputs are distributions.
const DIST_TOL: f64 = 1e-9;

/// Normalized total variation `½ Σ_x |p(x) - q(x)|`.
pub fn tv(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(LocalityError::DimensionMismatch(format!(
            "distributions of length {} and {}",
            p.len(),
            q.len()
        )));
    }
    for d in [p, q] {
        let sum: f64 = d.iter().sum();
        if d.iter().any(|v| !v.is_finite() || *v < -DIST_TOL) || (sum - 1.0).abs() > DIST_TOL {
            return Err(LocalityError::InvalidDistribution(format!("{d:?}")));
        }
    }
    Ok(tv_unchecked(p, q))
}

/// `tv` without input checks, clipped to `[0, 1]`.
#[inline]
pub(crate) fn tv_unchecked(p: &[f64], q: &[f64]) -> f64 {
    let s: f64 = p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum();
    (0.5 * s).clamp(0.0, 1.0)
}

/// Per-coordinate oscillations `δ_i(f)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OscillationVector(pub Vec<f64>);

impl OscillationVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `‖δ‖_∞`, the seminorm value `p(f)`.
    pub fn sup_norm(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    pub fn l1_norm(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Largest `self_i - other_i`; nonpositive when `self ⪯ other`.
    pub fn max_excess_over(&self, other: &OscillationVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a - b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn dominated_by(&self, other: &OscillationVector, tol: f64) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| *a <= *b + tol)
    }
}

impl std::ops::Index<usize> for OscillationVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// `δ_i(f) = max_{x_{-i} = y_{-i}} |f(x) - f(y)|` by exhaustive scan of
/// every coordinate line.
pub fn oscillation(f: &StateFunction, space: &Space) -> Result<OscillationVector> {
    if f.len() != space.len() {
        return Err(LocalityError::DimensionMismatch(format!(
            "function of length {} on a space of {} states",
            f.len(),
            space.len()
        )));
    }
    let mut out = vec![0.0f64; space.dims()];
    for (i, delta) in out.iter_mut().enumerate() {
        let size = space.size(i);
        if size == 1 {
            continue;
        }
        let stride = space.stride(i);
        for base in (0..space.len()).filter(|&x| space.digit(x, i) == 0) {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for v in 0..size {
                let y = f[base + v * stride];
                lo = lo.min(y);
                hi = hi.max(y);
            }
            *delta = f64::max(*delta, hi - lo);
        }
    }
    Ok(OscillationVector(out))
}

/// Square matrix with nonnegative entries, stored row-major.
///
/// Entry `(j, i)` is the influence of coordinate `i` on coordinate `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct NonnegMatrix {
    n: usize,
    data: Vec<f64>,
}

impl NonnegMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn scaled_identity(n: usize, c: f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, c);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(LocalityError::DimensionMismatch(
                "matrix is not square".into(),
            ));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        if data.iter().any(|v| v.is_nan()) {
            return Err(LocalityError::OutOfRange("matrix has NaN entries".into()));
        }
        if data.iter().any(|v| *v < 0.0) {
            return Err(LocalityError::OutOfRange(
                "matrix has negative entries".into(),
            ));
        }
        Ok(Self { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.n + col] = v;
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data
            .chunks(self.n.max(1))
            .take(self.n)
            .map(|r| r.to_vec())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for r in 0..self.n {
            for c in 0..self.n {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.n != other.n {
            return Err(LocalityError::DimensionMismatch(format!(
                "{}x{} vs {}x{} matrices",
                self.n, self.n, other.n, other.n
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let n = self.n;
        let mut out = Self::zeros(n);
        for r in 0..n {
            for k in 0..n {
                let a = self.get(r, k);
                if a == 0.0 {
                    continue;
                }
                for c in 0..n {
                    out.data[r * n + c] += a * other.get(k, c);
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    /// Plain matrix-vector product `M v`.
    pub fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|r| (0..self.n).fold(0.0, |acc, c| acc + self.get(r, c) * v[c]))
            .collect()
    }

    /// Oscillation propagation `out_i = Σ_j M(j, i) v_j`, i.e. `Mᵀ v`,
    /// summing over `j` in ascending order.
    pub fn propagate(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).fold(0.0, |acc, j| acc + self.get(j, i) * v[j]))
            .collect()
    }

    /// Induced `∞→∞` norm: the largest absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.n)
            .map(|r| (0..self.n).map(|c| self.get(r, c).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_entry(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// Largest `self - other` entry.
    pub fn max_excess_over(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn clip_unit(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }
}

impl Serialize for NonnegMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for NonnegMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        NonnegMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

const SHIFT: f64 = 1e-12;
const MAX_POWER_ITERS: usize = 100_000;

/// Perron root of a nonnegative matrix, absolute accuracy about `1e-10`.
///
/// Power iteration on `M + εI` from the all-ones vector. Iteration stops
/// once the successive estimates differ by less than `1e-12` and the
/// geometric tail implied by the observed contraction of those
/// differences is below `1e-11`. Falls back to a dense Schur
/// eigensolve if that never happens.
pub fn spectral_radius(m: &NonnegMatrix) -> Result<f64> {
    if m.data.iter().any(|v| v.is_nan()) {
        return Err(LocalityError::OutOfRange("matrix has NaN entries".into()));
    }
    let n = m.n;
    if n == 0 || m.is_zero() {
        return Ok(0.0);
    }
    let mut x = vec![1.0 / n as f64; n];
    let mut prev_est = f64::NAN;
    let mut prev_diff = f64::NAN;
    for _ in 0..MAX_POWER_ITERS {
        let mut y = m.mat_vec(&x);
        for (yi, xi) in y.iter_mut().zip(&x) {
            *yi += SHIFT * xi;
        }
        let est: f64 = y.iter().sum();
        if !(est > 0.0) || !est.is_finite() {
            break;
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / est;
        }
        let diff = (est - prev_est).abs();
        if diff < 1e-12 {
            let ratio = diff / prev_diff;
            let tail = if diff == 0.0 {
                0.0
            } else if ratio.is_finite() && ratio < 1.0 {
                diff * ratio / (1.0 - ratio)
            } else {
                f64::INFINITY
            };
            if tail < 1e-11 {
                return Ok((est - SHIFT).max(0.0));
            }
        }
        prev_diff = diff;
        prev_est = est;
    }
    Ok(dense_spectral_radius(m))
}

/// Largest eigenvalue modulus from a dense Schur decomposition.
pub fn dense_spectral_radius(m: &NonnegMatrix) -> f64 {
    let n = m.n;
    let dm = nalgebra::DMatrix::from_row_slice(n, n, &m.data);
    dm.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// `max_{0 ≤ t ≤ t_max} ‖M^t‖_{∞→∞} / λ^t`, an empirical stand-in for the
/// constant in `‖M^t‖ ≤ C λ^t`.
pub fn power_norm_constant(m: &NonnegMatrix, lambda: f64, t_max: usize) -> Result<f64> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(LocalityError::OutOfRange(format!(
            "lambda {lambda} outside (0, 1)"
        )));
    }
    if t_max == 0 {
        return Err(LocalityError::OutOfRange("t_max must be at least 1".into()));
    }
    let mut best = 1.0f64;
    let mut power = NonnegMatrix::identity(m.n);
    let mut scale = 1.0f64;
    for t in 1..=t_max {
        power = power.mul(m)?;
        scale *= lambda;
        let norm = power.inf_norm();
        if norm == 0.0 {
            break;
        }
        let ratio = if scale > 1e-300 {
            norm / scale
        } else {
            (norm.ln() - t as f64 * lambda.ln()).exp()
        };
        best = best.max(ratio);
    }
    Ok(best)
}
