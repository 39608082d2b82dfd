//! Linear soft-margin SVM trained in the dual, one-vs-rest for many classes.
//!
//! The dual is
//!
//! ```text
//! min_α  ½ αᵀQα − Σα   s.t.  0 ≤ α_i ≤ C,  Σ α_i y_i = 0,   Q_ij = y_i y_j x_i·x_j
//! ```
//!
//! Coordinates are visited cyclically. Because of the equality constraint a
//! single coordinate cannot move alone, so each visited index `i` is paired
//! with the partner that forms the most violating pair with it, and the two
//! are updated in closed form along the direction that keeps `Σ α_i y_i`
//! fixed. Training stops when the largest pair violation falls to the
//! tolerance.

use rayon::prelude::*;

use crate::error::{Error, Result};

pub const DEFAULT_C: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    /// Stop once the maximal projected-gradient pair violation is this small.
    pub tolerance: f64,
    pub max_epochs: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            tolerance: 1e-4,
            max_epochs: 10_000,
        }
    }
}

/// Training data for one binary problem; labels are `+1.0` or `-1.0`.
#[derive(Debug, Clone, Copy)]
pub struct BinaryProblem<'a> {
    pub rows: &'a [Vec<f64>],
    pub labels: &'a [f64],
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinarySolution {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub alpha: Vec<f64>,
    pub epochs: usize,
    pub converged: bool,
    /// Dual objective `Σα − ½αᵀQα` after each epoch.
    pub objective_trace: Vec<f64>,
    /// `Σ α_i y_i` after each epoch.
    pub equality_trace: Vec<f64>,
}

impl BinarySolution {
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        decision(&self.weights, self.bias, x)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `ω·x + b`.
pub fn decision(weights: &[f64], bias: f64, x: &[f64]) -> Result<f64> {
    if weights.len() != x.len() {
        return Err(Error::Shape(format!(
            "input has {} features, model expects {}",
            x.len(),
            weights.len()
        )));
    }
    Ok(dot(weights, x) + bias)
}

fn validate_rows(rows: &[Vec<f64>]) -> Result<usize> {
    let d = rows
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Training("no training samples".into()))?;
    for (i, r) in rows.iter().enumerate() {
        if r.len() != d {
            return Err(Error::Shape(format!(
                "training row {i} has {} features, expected {d}",
                r.len()
            )));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "training row {i} has a non-finite feature"
            )));
        }
    }
    Ok(d)
}

struct Solver<'a> {
    y: &'a [f64],
    kernel: Vec<f64>,
    alpha: Vec<f64>,
    grad: Vec<f64>,
    c: f64,
    m: usize,
}

impl Solver<'_> {
    fn k(&self, i: usize, j: usize) -> f64 {
        self.kernel[i * self.m + j]
    }

    fn in_up(&self, t: usize) -> bool {
        if self.y[t] > 0.0 {
            self.alpha[t] < self.c
        } else {
            self.alpha[t] > 0.0
        }
    }

    fn in_low(&self, t: usize) -> bool {
        if self.y[t] > 0.0 {
            self.alpha[t] > 0.0
        } else {
            self.alpha[t] < self.c
        }
    }

    fn score(&self, t: usize) -> f64 {
        -self.y[t] * self.grad[t]
    }

    fn max_violation(&self) -> f64 {
        let mut up = f64::NEG_INFINITY;
        let mut low = f64::INFINITY;
        for t in 0..self.m {
            if self.in_up(t) {
                up = up.max(self.score(t));
            }
            if self.in_low(t) {
                low = low.min(self.score(t));
            }
        }
        if up.is_finite() && low.is_finite() {
            up - low
        } else {
            0.0
        }
    }

    /// Best pair containing `i`, as `(up index, low index, violation)`.
    fn partner(&self, i: usize) -> Option<(usize, usize, f64)> {
        let si = self.score(i);
        let mut best: Option<(usize, usize, f64)> = None;
        let mut consider = |u: usize, l: usize, gap: f64| {
            if best.is_none_or(|(_, _, g)| gap > g) {
                best = Some((u, l, gap));
            }
        };
        if self.in_up(i) {
            if let Some(j) = (0..self.m)
                .filter(|&j| j != i && self.in_low(j))
                .min_by(|&a, &b| self.score(a).total_cmp(&self.score(b)))
            {
                consider(i, j, si - self.score(j));
            }
        }
        if self.in_low(i) {
            if let Some(j) = (0..self.m)
                .filter(|&j| j != i && self.in_up(j))
                .max_by(|&a, &b| self.score(a).total_cmp(&self.score(b)).then(b.cmp(&a)))
            {
                consider(j, i, self.score(j) - si);
            }
        }
        best
    }

    /// Moves `α_u += y_u t`, `α_l -= y_l t` with the optimal clipped `t`.
    fn step(&mut self, u: usize, l: usize, gap: f64) {
        let quad = (self.k(u, u) + self.k(l, l) - 2.0 * self.k(u, l)).max(1e-12);
        let cap_u = if self.y[u] > 0.0 {
            self.c - self.alpha[u]
        } else {
            self.alpha[u]
        };
        let cap_l = if self.y[l] > 0.0 {
            self.alpha[l]
        } else {
            self.c - self.alpha[l]
        };
        let t = (gap / quad).min(cap_u).min(cap_l);
        if t <= 0.0 {
            return;
        }
        let (yu, yl) = (self.y[u], self.y[l]);
        let (old_u, old_l) = (self.alpha[u], self.alpha[l]);
        self.alpha[u] += yu * t;
        self.alpha[l] -= yl * t;
        // land exactly on a bound when the step hits it or rounding leaves a sliver
        let eps = 1e-12 * self.c;
        for (idx, cap) in [(u, cap_u), (l, cap_l)] {
            let a = self.alpha[idx];
            if t == cap || a <= eps || a >= self.c - eps {
                self.alpha[idx] = if a > 0.5 * self.c { self.c } else { 0.0 };
            }
        }
        // G = Qα − 1, so G_k moves by y_k (y_u Δα_u K_ku + y_l Δα_l K_kl)
        let (du, dl) = (yu * (self.alpha[u] - old_u), yl * (self.alpha[l] - old_l));
        for k in 0..self.m {
            self.grad[k] += self.y[k] * (du * self.k(k, u) + dl * self.k(k, l));
        }
    }

    fn objective(&self) -> f64 {
        // αᵀQα = αᵀ(G + 1)
        let quad: f64 = self
            .alpha
            .iter()
            .zip(&self.grad)
            .map(|(a, g)| a * (g + 1.0))
            .sum();
        self.alpha.iter().sum::<f64>() - 0.5 * quad
    }

    fn equality(&self) -> f64 {
        self.alpha.iter().zip(self.y).map(|(a, y)| a * y).sum()
    }
}

pub fn train_binary(problem: &BinaryProblem<'_>, params: &SolverParams) -> Result<BinarySolution> {
    let BinaryProblem { rows, labels, c } = *problem;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Argument(format!(
            "svm C must be positive and finite, got {c}"
        )));
    }
    let d = validate_rows(rows)?;
    let m = rows.len();
    if labels.len() != m {
        return Err(Error::Shape(format!(
            "{} labels for {m} samples",
            labels.len()
        )));
    }
    if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
        return Err(Error::Training("binary labels must be +1 or -1".into()));
    }
    if !labels.contains(&1.0) || !labels.contains(&-1.0) {
        return Err(Error::Training(
            "binary problem needs samples of both signs".into(),
        ));
    }

    let mut kernel = vec![0.0; m * m];
    for i in 0..m {
        for j in i..m {
            let v = dot(&rows[i], &rows[j]);
            kernel[i * m + j] = v;
            kernel[j * m + i] = v;
        }
    }
    let mut s = Solver {
        y: labels,
        kernel,
        alpha: vec![0.0; m],
        grad: vec![-1.0; m],
        c,
        m,
    };

    let mut objective_trace = Vec::new();
    let mut equality_trace = Vec::new();
    let mut epochs = 0;
    let mut converged = false;
    while epochs < params.max_epochs {
        if s.max_violation() <= params.tolerance {
            converged = true;
            break;
        }
        for i in 0..m {
            if let Some((u, l, gap)) = s.partner(i) {
                if gap > 0.0 {
                    s.step(u, l, gap);
                }
            }
        }
        epochs += 1;
        objective_trace.push(s.objective());
        equality_trace.push(s.equality());
    }
    if !converged {
        converged = s.max_violation() <= params.tolerance;
        if !converged {
            log::warn!(
                "svm dual stopped after {epochs} epochs with violation {:e}",
                s.max_violation()
            );
        }
    }

    let mut weights = vec![0.0; d];
    for (i, row) in rows.iter().enumerate() {
        let coef = s.alpha[i] * labels[i];
        if coef != 0.0 {
            for (w, x) in weights.iter_mut().zip(row) {
                *w += coef * x;
            }
        }
    }
    let bias = intercept(&weights, rows, labels, &s.alpha, c);
    Ok(BinarySolution {
        weights,
        bias,
        alpha: s.alpha,
        epochs,
        converged,
        objective_trace,
        equality_trace,
    })
}

/// Mean of `y_i − ω·x_i` over free support vectors. When every multiplier
/// sits at a bound, the midpoint of the interval the KKT conditions leave
/// for `b`; for a hard margin with no multiplier at `C` this is the midpoint
/// between the closest positive and negative margins.
fn intercept(weights: &[f64], rows: &[Vec<f64>], labels: &[f64], alpha: &[f64], c: f64) -> f64 {
    let eps = 1e-12 * c;
    let (mut sum, mut count) = (0.0, 0usize);
    for ((row, &y), &a) in rows.iter().zip(labels).zip(alpha) {
        if a > eps && a < c - eps {
            sum += y - dot(weights, row);
            count += 1;
        }
    }
    if count > 0 {
        return sum / count as f64;
    }
    // b ≥ y − ω·x where α can still grow along y, b ≤ y − ω·x where it can shrink
    let mut lower = f64::NEG_INFINITY;
    let mut upper = f64::INFINITY;
    for ((row, &y), &a) in rows.iter().zip(labels).zip(alpha) {
        let r = y - dot(weights, row);
        let at_upper = a >= c - eps;
        if (y > 0.0) != at_upper {
            lower = lower.max(r);
        } else {
            upper = upper.min(r);
        }
    }
    match (lower.is_finite(), upper.is_finite()) {
        (true, true) => 0.5 * (lower + upper),
        (true, false) => lower,
        (false, true) => upper,
        (false, false) => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub classes: Vec<String>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub c: f64,
}

impl SvmModel {
    pub fn width(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn decisions(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, &b)| decision(w, b, x))
            .collect()
    }

    /// Arg-max class; ties go to the lowest index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.decisions(x)?))
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// One binary problem per class (that class `+1`, the rest `-1`), in class order.
pub fn train_multiclass(
    rows: &[Vec<f64>],
    labels: &[usize],
    classes: &[String],
    c: f64,
    params: &SolverParams,
) -> Result<SvmModel> {
    if classes.len() < 2 {
        return Err(Error::Training(format!(
            "one-vs-rest needs at least two classes, got {}",
            classes.len()
        )));
    }
    if labels.len() != rows.len() {
        return Err(Error::Shape(format!(
            "{} labels for {} samples",
            labels.len(),
            rows.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes.len()) {
        return Err(Error::Training(format!("label {bad} has no class")));
    }
    for (k, name) in classes.iter().enumerate() {
        if !labels.contains(&k) {
            return Err(Error::Training(format!(
                "class `{name}` has no training samples"
            )));
        }
    }
    validate_rows(rows)?;

    let solutions = (0..classes.len())
        .into_par_iter()
        .map(|k| {
            let y: Vec<f64> = labels
                .iter()
                .map(|&l| if l == k { 1.0 } else { -1.0 })
                .collect();
            let sol = train_binary(
                &BinaryProblem {
                    rows,
                    labels: &y,
                    c,
                },
                params,
            )?;
            log::debug!(
                "class {} trained in {} epochs (converged: {})",
                classes[k],
                sol.epochs,
                sol.converged
            );
            Ok(sol)
        })
        .collect::<Result<Vec<_>>>()?;
    let (weights, biases) = solutions.into_iter().map(|s| (s.weights, s.bias)).unzip();
    Ok(SvmModel {
        classes: classes.to_vec(),
        weights,
        biases,
        c,
    })
}
