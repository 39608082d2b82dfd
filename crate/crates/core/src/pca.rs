//! Correlation-matrix principal component analysis.
//!
//! Columns are z-scored with the population standard deviation, the
//! Pearson correlation matrix of the standardized columns is diagonalised
//! with cyclic Jacobi rotations, and the leading `w` components are kept,
//! where `w` is the smallest count whose eigenvalue mass reaches the
//! configured fraction of the total (0.85 by default).
//!
//! Columns with zero variance are masked: they standardize to 0, have an
//! identity row/column in the correlation matrix, and are left out of the
//! eigenproblem so the spectrum sums to the number of unmasked columns.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fusion::FeatureMatrix;

pub const DEFAULT_THRESHOLD: f64 = 0.85;

/// A column is treated as constant when its std is at most this fraction of
/// `max(|mean|, 1)`.
pub const ZERO_VARIANCE_RTOL: f64 = 1e-12;

pub const JACOBI_MAX_SWEEPS: usize = 100;
pub const JACOBI_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub zero_variance_mask: Vec<bool>,
}

impl Standardization {
    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn unmasked(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&j| !self.zero_variance_mask[j])
            .collect()
    }

    /// Standardizes one row; masked columns become 0.
    pub fn apply(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.len() {
            return Err(Error::Shape(format!(
                "row has {} features, model expects {}",
                row.len(),
                self.len()
            )));
        }
        Ok(row
            .iter()
            .enumerate()
            .map(|(j, &x)| {
                if self.zero_variance_mask[j] {
                    0.0
                } else {
                    (x - self.means[j]) / self.stds[j]
                }
            })
            .collect())
    }
}

/// Output of [`standardize`]: row-major z-scores plus the column mask.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub mask: Vec<bool>,
}

impl StandardizedMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }
}

pub fn standardize(x: &FeatureMatrix) -> Result<(StandardizedMatrix, Standardization)> {
    let (m, n) = (x.rows(), x.cols());
    if m == 0 || n == 0 {
        return Err(Error::Shape("cannot standardize an empty matrix".into()));
    }
    let mf = m as f64;
    let mut means = vec![0.0; n];
    for i in 0..m {
        for (acc, v) in means.iter_mut().zip(x.row(i)) {
            *acc += v;
        }
    }
    means.iter_mut().for_each(|s| *s /= mf);

    let mut sq = vec![0.0; n];
    for i in 0..m {
        for ((acc, v), mean) in sq.iter_mut().zip(x.row(i)).zip(&means) {
            let d = v - mean;
            *acc += d * d;
        }
    }

    let mut stds = Vec::with_capacity(n);
    let mut mask = Vec::with_capacity(n);
    for (s, mean) in sq.iter().zip(&means) {
        let std = (s / mf).sqrt();
        let constant = !std.is_finite() || std <= ZERO_VARIANCE_RTOL * mean.abs().max(1.0);
        mask.push(constant);
        stds.push(if constant { 0.0 } else { std });
    }
    let stats = Standardization {
        means,
        stds,
        zero_variance_mask: mask.clone(),
    };

    let mut data = Vec::with_capacity(m * n);
    for i in 0..m {
        data.extend(stats.apply(x.row(i))?);
    }
    Ok((
        StandardizedMatrix {
            rows: m,
            cols: n,
            data,
            mask,
        },
        stats,
    ))
}

/// Symmetric matrix stored as its packed upper triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    n: usize,
    upper: Vec<f64>,
}

impl CorrelationMatrix {
    /// Builds from a dense row-major matrix, reading only the upper triangle.
    pub fn from_dense_upper(n: usize, dense: &[f64]) -> Result<Self> {
        if dense.len() != n * n {
            return Err(Error::Shape(format!(
                "dense matrix has {} entries, expected {n}x{n}",
                dense.len()
            )));
        }
        let mut upper = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            upper.extend_from_slice(&dense[i * n + i..(i + 1) * n]);
        }
        Ok(Self { n, upper })
    }

    fn offset(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        // rows 0..i hold n + (n-1) + ... + (n-i+1) entries
        i * (2 * self.n - i + 1) / 2 + (j - i)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.upper[self.offset(i, j)]
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = self.get(i, j);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        d
    }

    /// Principal submatrix on `idx`.
    pub fn select(&self, idx: &[usize]) -> CorrelationMatrix {
        let k = idx.len();
        let mut upper = Vec::with_capacity(k * (k + 1) / 2);
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[a..] {
                upper.push(self.get(i, j));
            }
        }
        CorrelationMatrix { n: k, upper }
    }
}

/// Pearson correlation between the standardized feature columns, computed
/// with the explicit inner re-centering.
pub fn correlation(a: &StandardizedMatrix) -> CorrelationMatrix {
    let (m, n) = (a.rows, a.cols);
    let columns: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mean = (0..m).map(|i| a.get(i, j)).sum::<f64>() / m as f64;
            (0..m).map(|i| a.get(i, j) - mean).collect()
        })
        .collect();
    let norms: Vec<f64> = columns
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum())
        .collect();

    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i..n)
                .map(|j| {
                    if i == j {
                        1.0
                    } else if a.mask[i] || a.mask[j] {
                        0.0
                    } else {
                        let num: f64 = columns[i].iter().zip(&columns[j]).map(|(x, y)| x * y).sum();
                        (num / (norms[i] * norms[j]).sqrt()).clamp(-1.0, 1.0)
                    }
                })
                .collect()
        })
        .collect();
    CorrelationMatrix {
        n,
        upper: rows.concat(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
}

fn frobenius(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i * n + j] * a[i * n + j];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix.
///
/// Pairs come back sorted by descending eigenvalue (stable on the solver's
/// diagonal index), each vector of unit length with its largest-magnitude
/// entry positive.
pub fn eigen_symmetric(r: &CorrelationMatrix) -> Result<Vec<EigenPair>> {
    let n = r.n();
    let mut a = r.to_dense();
    // Row p of `vt` is the p-th eigenvector estimate.
    let mut vt = vec![0.0; n * n];
    for p in 0..n {
        vt[p * n + p] = 1.0;
    }
    let scale = frobenius(&a);
    let tol = JACOBI_TOLERANCE * scale;

    let mut converged = n <= 1 || scale == 0.0;
    let mut sweep = 0;
    while !converged {
        if off_diagonal_norm(&a, n) <= tol {
            converged = true;
            break;
        }
        if sweep == JACOBI_MAX_SWEEPS {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let g = 100.0 * apq.abs();
                if sweep > 4 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut a, n, p, q, c, s);
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                let (head, tail) = vt.split_at_mut(q * n);
                let vp = &mut head[p * n..(p + 1) * n];
                let vq = &mut tail[..n];
                for (x, y) in vp.iter_mut().zip(vq.iter_mut()) {
                    let (xp, xq) = (*x, *y);
                    *x = c * xp - s * xq;
                    *y = s * xp + c * xq;
                }
            }
        }
        sweep += 1;
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps (off-diagonal norm {:e})",
            off_diagonal_norm(&a, n)
        )));
    }

    let mut pairs: Vec<EigenPair> = (0..n)
        .map(|p| {
            let mut vector = vt[p * n..(p + 1) * n].to_vec();
            let norm = frobenius(&vector);
            vector.iter_mut().for_each(|v| *v /= norm);
            let lead = vector.iter().enumerate().fold(0, |best, (k, v)| {
                if v.abs() > vector[best].abs() {
                    k
                } else {
                    best
                }
            });
            if vector[lead] < 0.0 {
                vector.iter_mut().for_each(|v| *v = -*v);
            }
            EigenPair {
                value: a[p * n + p],
                vector,
            }
        })
        .collect();
    pairs.sort_by(|x, y| y.value.total_cmp(&x.value));
    Ok(pairs)
}

/// Applies the rotation to rows/columns `p` and `q` off the diagonal.
fn rotate(a: &mut [f64], n: usize, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = a[k * n + p];
        let akq = a[k * n + q];
        let kp = c * akp - s * akq;
        let kq = s * akp + c * akq;
        a[k * n + p] = kp;
        a[p * n + k] = kp;
        a[k * n + q] = kq;
        a[q * n + k] = kq;
    }
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Argument(format!(
            "pca threshold {threshold} must lie in (0, 1]"
        )));
    }
    Ok(())
}

/// Smallest `w` with `sum(λ[..w]) / sum(λ) >= threshold`.
pub fn select_components(eigenvalues: &[f64], threshold: f64) -> Result<usize> {
    check_threshold(threshold)?;
    let total: f64 = eigenvalues.iter().sum();
    if eigenvalues.is_empty() || total.is_nan() || total <= 0.0 {
        return Err(Error::Degenerate(format!(
            "eigenvalue total {total} is not positive"
        )));
    }
    let mut cumulative = 0.0;
    for (i, &l) in eigenvalues.iter().enumerate() {
        cumulative += l;
        if cumulative / total >= threshold {
            return Ok(i + 1);
        }
    }
    Ok(eigenvalues.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub standardization: Standardization,
    /// Eigenpairs of the unmasked correlation block, embedded back into the
    /// full feature space (zeros at masked columns), sorted descending.
    pub eigenpairs: Vec<EigenPair>,
    pub retained: usize,
    pub threshold: f64,
}

impl PcaModel {
    pub fn n_features(&self) -> usize {
        self.standardization.len()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigenpairs.iter().map(|p| p.value).collect()
    }

    pub fn project_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        let z = self.standardization.apply(row)?;
        Ok(self.eigenpairs[..self.retained]
            .iter()
            .map(|p| z.iter().zip(&p.vector).map(|(a, u)| a * u).sum())
            .collect())
    }

    pub fn project(&self, x: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
        (0..x.rows()).map(|i| self.project_row(x.row(i))).collect()
    }
}

pub fn fit(x: &FeatureMatrix, threshold: f64) -> Result<PcaModel> {
    check_threshold(threshold)?;
    let (a, standardization) = standardize(x)?;
    let r = correlation(&a);
    let keep = standardization.unmasked();
    if keep.is_empty() {
        return Err(Error::Degenerate(
            "every feature column has zero variance".into(),
        ));
    }
    let block = eigen_symmetric(&r.select(&keep))?;
    let n = x.cols();
    let eigenpairs: Vec<EigenPair> = block
        .into_iter()
        .map(|p| {
            let mut vector = vec![0.0; n];
            for (&j, v) in keep.iter().zip(p.vector) {
                vector[j] = v;
            }
            EigenPair {
                value: p.value,
                vector,
            }
        })
        .collect();
    let values: Vec<f64> = eigenpairs.iter().map(|p| p.value).collect();
    let retained = select_components(&values, threshold)?;
    Ok(PcaModel {
        standardization,
        eigenpairs,
        retained,
        threshold,
    })
}
