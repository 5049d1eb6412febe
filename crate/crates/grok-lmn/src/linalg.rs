//! Dense symmetric linear algebra, self-contained.
//!
//! Three primitives back the complexity metric: a cyclic Jacobi
//! eigendecomposition for real symmetric matrices, the squared Pearson
//! correlation written in moment form, and Shannon entropy of a normalized
//! nonnegative vector. All arithmetic is `f64`; the matrices here are small
//! (at most ~1000 on a side) so accuracy wins over speed.

use thiserror::Error;

/// Default sweep budget for [`jacobi_eigen`] and [`eigen_symmetric`].
pub const DEFAULT_JACOBI_SWEEPS: usize = 100;

/// Relative variance below which a series is treated as constant.
///
/// A series whose variance is at or below `VAR_REL_FLOOR * mean(y^2)` has a
/// relative standard deviation of 1e-12 or less; at that point the "slope"
/// seen by a regression is floating-point noise, not signal.
const VAR_REL_FLOOR: f64 = 1e-24;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix rows have inconsistent lengths (row {row} has {len}, expected {expected})")]
    RaggedRows { row: usize, len: usize, expected: usize },
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric: entry ({i},{j}) = {a} but ({j},{i}) = {b}")]
    NotSymmetric { i: usize, j: usize, a: f64, b: f64 },
    #[error("matrix dimension must be at least 1")]
    EmptyMatrix,
    #[error("Jacobi eigensolver did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("vector lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {min} values, got {got}")]
    TooFewValues { min: usize, got: usize },
    #[error("probe variable x has zero variance")]
    ZeroVarianceX,
    #[error("distribution entry {index} is negative ({value})")]
    NegativeEntry { index: usize, value: f64 },
    #[error("distribution sums to {sum}, expected 1 within 1e-9")]
    NotNormalized { sum: f64 },
}

/// Dense square real matrix kept symmetric by construction.
///
/// `set` writes both `(i, j)` and `(j, i)`, so the symmetry invariant is
/// exact, never approximate.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymmetricMatrix {
    /// Zero matrix of dimension `n`. Panics if `n == 0`.
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "matrix dimension must be at least 1");
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// All-ones matrix; the connectivity pattern of a perfectly affine map.
    pub fn ones(n: usize) -> Self {
        assert!(n >= 1, "matrix dimension must be at least 1");
        Self { n, data: vec![1.0; n * n] }
    }

    /// Builds from full row data, checking squareness and exact symmetry.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let n = rows.len();
        if n == 0 {
            return Err(LinalgError::EmptyMatrix);
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(LinalgError::RaggedRows { row: i, len: row.len(), expected: n });
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if rows[i][j] != rows[j][i] {
                    return Err(LinalgError::NotSymmetric { i, j, a: rows[i][j], b: rows[j][i] });
                }
            }
        }
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Ok(Self { n, data })
    }

    /// Builds by evaluating `f(i, j)` for `i <= j` and mirroring.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                m.data[i * n + j] = v;
                m.data[j * n + i] = v;
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.n + j] = value;
        self.data[j * self.n + i] = value;
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.data[i * self.n + i]).sum()
    }

    /// Row-major backing slice, length `n * n`.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Reorders rows and columns simultaneously: entry `(i, j)` of the
    /// result is entry `(perm[i], perm[j])` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.n, "permutation length must match dimension");
        Self::from_fn(self.n, |i, j| self.get(perm[i], perm[j]))
    }
}

/// Eigenvalues of a symmetric matrix, sorted descending by magnitude,
/// together with the normalized magnitude distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSpectrum {
    eigenvalues: Vec<f64>,
    normalized: Vec<f64>,
}

impl EigenSpectrum {
    /// Eigenvalues sorted descending by absolute value. Ties in magnitude
    /// put the positive eigenvalue first.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `|lambda_i| / sum_j |lambda_j|`. For the all-zero spectrum, where
    /// that ratio is 0/0, the distribution is defined as uniform.
    pub fn normalized(&self) -> &[f64] {
        &self.normalized
    }

    /// Fraction of total magnitude carried by negative eigenvalues.
    pub fn negative_mass(&self) -> f64 {
        let total: f64 = self.eigenvalues.iter().map(|v| v.abs()).sum();
        if total == 0.0 {
            return 0.0;
        }
        self.eigenvalues.iter().filter(|&&v| v < 0.0).map(|v| v.abs()).sum::<f64>() / total
    }
}

/// Full eigendecomposition: values plus orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Unordered eigenvalues, `eigenvalues[k]` pairing with column `k` of
    /// `vectors`.
    pub eigenvalues: Vec<f64>,
    /// Row-major `n x n`; column `k` is the eigenvector for `eigenvalues[k]`.
    pub vectors: Vec<f64>,
    pub n: usize,
}

impl SymmetricEigen {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.vectors[i * self.n + k]).collect()
    }
}

/// Cyclic Jacobi eigendecomposition of a real symmetric matrix.
///
/// Sweeps rotate every upper-triangle pair `(p, q)` in turn, annihilating
/// the off-diagonal entry; the accumulated rotations form the eigenvector
/// matrix. Follows the classic formulation in Numerical Recipes §11.1.
/// Fails with [`LinalgError::NoConvergence`] if the off-diagonal mass has
/// not vanished after `max_sweeps` sweeps; it never truncates silently.
pub fn jacobi_eigen(m: &SymmetricMatrix, max_sweeps: usize) -> Result<SymmetricEigen, LinalgError> {
    let n = m.n;
    let mut a = m.data.clone();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let mut d: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    let mut b = d.clone();
    let mut z = vec![0.0; n];

    if n == 1 {
        return Ok(SymmetricEigen { eigenvalues: d, vectors: v, n });
    }

    for sweep in 1..=max_sweeps {
        let mut off_sum = 0.0;
        for p in 0..n - 1 {
            for q in p + 1..n {
                off_sum += a[p * n + q].abs();
            }
        }
        if off_sum == 0.0 {
            return Ok(SymmetricEigen { eigenvalues: d, vectors: v, n });
        }
        // During the first three sweeps only rotate entries above a
        // shrinking threshold; afterwards rotate everything.
        let tresh = if sweep < 4 { 0.2 * off_sum / (n * n) as f64 } else { 0.0 };
        for p in 0..n - 1 {
            for q in p + 1..n {
                let g = 100.0 * a[p * n + q].abs();
                // After four sweeps, zero entries too small to matter
                // relative to the diagonal.
                if sweep > 4 && d[p].abs() + g == d[p].abs() && d[q].abs() + g == d[q].abs() {
                    a[p * n + q] = 0.0;
                } else if a[p * n + q].abs() > tresh {
                    let mut h = d[q] - d[p];
                    let t = if h.abs() + g == h.abs() {
                        a[p * n + q] / h
                    } else {
                        let theta = 0.5 * h / a[p * n + q];
                        let mut t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                        if theta < 0.0 {
                            t = -t;
                        }
                        t
                    };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;
                    let tau = s / (1.0 + c);
                    h = t * a[p * n + q];
                    z[p] -= h;
                    z[q] += h;
                    d[p] -= h;
                    d[q] += h;
                    a[p * n + q] = 0.0;
                    let rotate = |a: &mut [f64], i: usize, j: usize| {
                        let g = a[i];
                        let h = a[j];
                        a[i] = g - s * (h + g * tau);
                        a[j] = h + s * (g - h * tau);
                    };
                    for j in 0..p {
                        rotate(&mut a, j * n + p, j * n + q);
                    }
                    for j in p + 1..q {
                        rotate(&mut a, p * n + j, j * n + q);
                    }
                    for j in q + 1..n {
                        rotate(&mut a, p * n + j, q * n + j);
                    }
                    for j in 0..n {
                        rotate(&mut v, j * n + p, j * n + q);
                    }
                }
            }
        }
        for p in 0..n {
            b[p] += z[p];
            d[p] = b[p];
            z[p] = 0.0;
        }
    }
    Err(LinalgError::NoConvergence { sweeps: max_sweeps })
}

/// All eigenvalues of a symmetric matrix as an [`EigenSpectrum`].
///
/// Runs [`jacobi_eigen`] with the default sweep budget, sorts descending by
/// magnitude (positive first on magnitude ties) and attaches the normalized
/// magnitude distribution.
pub fn eigen_symmetric(m: &SymmetricMatrix) -> Result<EigenSpectrum, LinalgError> {
    let eig = jacobi_eigen(m, DEFAULT_JACOBI_SWEEPS)?;
    Ok(spectrum_from_values(eig.eigenvalues))
}

pub(crate) fn spectrum_from_values(mut eigenvalues: Vec<f64>) -> EigenSpectrum {
    eigenvalues.sort_by(|a, b| {
        b.abs()
            .partial_cmp(&a.abs())
            .expect("eigenvalues are finite")
            .then(b.partial_cmp(a).expect("eigenvalues are finite"))
    });
    let total: f64 = eigenvalues.iter().map(|v| v.abs()).sum();
    let n = eigenvalues.len();
    let normalized = if total == 0.0 {
        vec![1.0 / n as f64; n]
    } else {
        eigenvalues.iter().map(|v| v.abs() / total).collect()
    };
    EigenSpectrum { eigenvalues, normalized }
}

/// Squared Pearson correlation between `y` and `x` in moment form:
/// `(<xy> - <x><y>)^2 / ((<x^2> - <x>^2)(<y^2> - <y>^2))`.
///
/// A constant `y` (zero variance within [`VAR_REL_FLOOR`] relative to its
/// mean square) returns 1: a constant is affine, hence perfectly linearly
/// related to anything. A constant `x` is rejected — the probe variable is
/// expected to actually vary.
pub fn pearson_r2(y: &[f64], x: &[f64]) -> Result<f64, LinalgError> {
    if y.len() != x.len() {
        return Err(LinalgError::LengthMismatch { left: y.len(), right: x.len() });
    }
    if x.len() < 2 {
        return Err(LinalgError::TooFewValues { min: 2, got: x.len() });
    }
    let n = x.len() as f64;
    let (mut sx, mut sy, mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y.iter()) {
        sx += xi;
        sy += yi;
        sxy += xi * yi;
        sxx += xi * xi;
        syy += yi * yi;
    }
    let (mx, my, mxy, mxx, myy) = (sx / n, sy / n, sxy / n, sxx / n, syy / n);
    let cov = mxy - mx * my;
    let vx = mxx - mx * mx;
    let vy = myy - my * my;
    if vx <= VAR_REL_FLOOR * mxx {
        return Err(LinalgError::ZeroVarianceX);
    }
    if vy <= VAR_REL_FLOOR * myy {
        return Ok(1.0);
    }
    Ok((cov * cov / (vx * vy)).clamp(0.0, 1.0))
}

/// Shannon entropy in bits, `-sum p_i log2 p_i`, with `0 log 0 = 0`.
///
/// `p` must be entrywise nonnegative and sum to 1 within 1e-9.
pub fn entropy_bits(p: &[f64]) -> Result<f64, LinalgError> {
    let mut sum = 0.0;
    for (index, &value) in p.iter().enumerate() {
        if value < 0.0 {
            return Err(LinalgError::NegativeEntry { index, value });
        }
        sum += value;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(LinalgError::NotNormalized { sum });
    }
    let h: f64 = p.iter().filter(|&&pi| pi > 0.0).map(|&pi| -pi * pi.log2()).sum();
    Ok(h.max(0.0))
}
