mod common;

use common::{brute_force_hard_margin, dot, rng, separable_instance};
use mvdr::svm::{train_binary, BinaryProblem, SolverParams};

#[test]
fn ten_point_hard_margin_matches_subset_search() {
    for seed in 0..10 {
        let mut r = rng(seed);
        let (rows, labels) = separable_instance(&mut r, 10, 2);
        let oracle =
            brute_force_hard_margin(&rows, &labels).expect("separable instance has a solution");
        let s = train_binary(
            &BinaryProblem {
                rows: &rows,
                labels: &labels,
                c: 1e6,
            },
            &SolverParams::default(),
        )
        .unwrap();
        assert!(s.converged, "seed {seed}");
        for (w, o) in s.weights.iter().zip(&oracle.weights) {
            assert!(
                (w - o).abs() <= 1e-4,
                "seed {seed}: ω {:?} vs {:?}",
                s.weights,
                oracle.weights
            );
        }
        assert!(
            (s.bias - oracle.bias).abs() <= 1e-4,
            "seed {seed}: b {} vs {}",
            s.bias,
            oracle.bias
        );
    }
}

#[test]
fn oracle_recovers_a_known_margin() {
    // Points on x = ±1 plus one farther away: ω = (1, 0), b = 0.
    let rows = vec![
        vec![-1.0, 0.0],
        vec![-1.0, 2.0],
        vec![1.0, 1.0],
        vec![3.0, -1.0],
    ];
    let labels = [-1.0, -1.0, 1.0, 1.0];
    let h = brute_force_hard_margin(&rows, &labels).unwrap();
    assert!((h.weights[0] - 1.0).abs() < 1e-12 && h.weights[1].abs() < 1e-12);
    assert!(h.bias.abs() < 1e-12);
    assert!((h.margin() - 2.0).abs() < 1e-12);
}

#[test]
fn reused_rows_give_identical_solutions() {
    let mut r = rng(99);
    let (rows, labels) = separable_instance(&mut r, 12, 3);
    let p = BinaryProblem {
        rows: &rows,
        labels: &labels,
        c: 1e6,
    };
    let a = train_binary(&p, &SolverParams::default()).unwrap();
    let b = train_binary(&p, &SolverParams::default()).unwrap();
    assert_eq!(a, b);
    let margins: Vec<f64> = rows
        .iter()
        .zip(&labels)
        .map(|(x, y)| y * (dot(&a.weights, x) + a.bias))
        .collect();
    assert!(margins.iter().all(|&m| m >= 1.0 - 1e-3), "{margins:?}");
}
