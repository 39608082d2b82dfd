//! Helpers shared by the integration tests: independent oracles and fixtures.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synthetic")
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Hard-margin solution found by enumerating candidate support sets.
#[derive(Debug, Clone)]
pub struct HardMargin {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl HardMargin {
    pub fn margin(&self) -> f64 {
        2.0 / dot(&self.weights, &self.weights).sqrt()
    }
}

fn subsets(m: usize, max: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(start: usize, m: usize, max: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() >= 2 {
            f(cur);
        }
        if cur.len() == max {
            return;
        }
        for i in start..m {
            cur.push(i);
            rec(i + 1, m, max, cur, f);
            cur.pop();
        }
    }
    rec(0, m, max, &mut Vec::new(), f);
}

/// Exhaustive support-subset oracle for the hard-margin SVM.
///
/// For every subset S of at most d + 1 points containing both labels, the
/// margin constraints of S are made tight and the stationarity conditions
/// solved exactly: `[Q_SS y_S; y_Sᵀ 0] [β; b] = [1; 0]` with
/// `Q_ij = y_i y_j x_i·x_j`. A candidate is kept when `β ≥ 0` and every point
/// satisfies `y_i (ω·x_i + b) ≥ 1`; the smallest `‖ω‖` among candidates is
/// the maximal margin.
pub fn brute_force_hard_margin(rows: &[Vec<f64>], labels: &[f64]) -> Option<HardMargin> {
    let m = rows.len();
    let d = rows[0].len();
    let mut best: Option<HardMargin> = None;
    subsets(m, d + 1, &mut |s| {
        if !s.iter().any(|&i| labels[i] > 0.0) || !s.iter().any(|&i| labels[i] < 0.0) {
            return;
        }
        let k = s.len();
        let mut a = DMatrix::<f64>::zeros(k + 1, k + 1);
        let mut rhs = DVector::<f64>::zeros(k + 1);
        for (p, &i) in s.iter().enumerate() {
            for (q, &j) in s.iter().enumerate() {
                a[(p, q)] = labels[i] * labels[j] * dot(&rows[i], &rows[j]);
            }
            a[(p, k)] = labels[i];
            a[(k, p)] = labels[i];
            rhs[p] = 1.0;
        }
        let Some(sol) = a.lu().solve(&rhs) else {
            return;
        };
        if sol.iter().any(|v| !v.is_finite()) || sol.iter().take(k).any(|&b| b < -1e-9) {
            return;
        }
        let mut w = vec![0.0; d];
        for (p, &i) in s.iter().enumerate() {
            for (wj, xj) in w.iter_mut().zip(&rows[i]) {
                *wj += sol[p] * labels[i] * xj;
            }
        }
        let b = sol[k];
        if rows
            .iter()
            .zip(labels)
            .any(|(x, &y)| y * (dot(&w, x) + b) < 1.0 - 1e-9)
        {
            return;
        }
        let norm = dot(&w, &w);
        if best
            .as_ref()
            .is_none_or(|h| norm < dot(&h.weights, &h.weights))
        {
            best = Some(HardMargin {
                weights: w,
                bias: b,
            });
        }
    });
    best
}

/// Random linearly separable problem with a clear gap around the true plane.
pub fn separable_instance(rng: &mut ChaCha8Rng, m: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut normal: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let len = dot(&normal, &normal).sqrt().max(1e-3);
    normal.iter_mut().for_each(|v| *v /= len);
    let offset = rng.random_range(-0.3..0.3);
    loop {
        let mut rows = Vec::with_capacity(m);
        let mut labels = Vec::with_capacity(m);
        while rows.len() < m {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let s = dot(&normal, &x) + offset;
            if s.abs() > 0.2 {
                labels.push(s.signum());
                rows.push(x);
            }
        }
        if labels.contains(&1.0) && labels.contains(&-1.0) {
            return (rows, labels);
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
