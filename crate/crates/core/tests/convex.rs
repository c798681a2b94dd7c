mod common;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

use ris_iterative::convex::linalg::{hermitian_cholesky, CMatrix};
use ris_iterative::convex::{
    solve_logdet_program, solve_maxmin_concave_quadratics, solve_qcqp, ConcaveQuadratic, LogDetBlock,
    LogDetConstraint, LogDetProblem, QcqpProblem, QuadConstraint, QuadForm, Quadratic, Sense, SolverError,
};

fn norm_sq(n: usize) -> Quadratic {
    Quadratic { quad: QuadForm::Diagonal(DVector::from_element(n, 2.0)), lin: DVector::zeros(n), constant: 0.0 }
}

fn linear_at_least(lin: Vec<f64>, constant: f64) -> QuadConstraint {
    QuadConstraint { quad: QuadForm::Zero, lin: DVector::from_vec(lin), constant, sense: Sense::AtLeast }
}

#[test]
fn scalar_square_with_active_bound() {
    let p = QcqpProblem { objective: norm_sq(1), constraints: vec![linear_at_least(vec![1.0], -2.0)], start: None };
    let s = solve_qcqp(&p, 1e-10).unwrap();
    assert!((s.x[0] - 2.0).abs() < 1e-6);
    assert!((s.objective - 4.0).abs() < 1e-5);
}

#[test]
fn complex_scalar_fp_constraint_matches_grid() {
    // 2 Re{conj(y) g w} - |y|^2 b >= c with y = g = b = c = 1 on w = (re, im).
    let c = linear_at_least(vec![2.0, 0.0], -2.0);
    let p = QcqpProblem { objective: norm_sq(2), constraints: vec![c.clone()], start: None };
    let s = solve_qcqp(&p, 1e-10).unwrap();
    assert!((s.x[0] - 1.0).abs() < 1e-6 && s.x[1].abs() < 1e-6);
    assert!((s.objective - 1.0).abs() < 1e-5);
    let mut best = f64::INFINITY;
    for i in 0..=400 {
        for q in 0..=100 {
            let x = DVector::from_vec(vec![i as f64 * 0.01 - 2.0, q as f64 * 0.01 - 0.5]);
            if c.value(&x) >= 0.0 {
                best = best.min(x.norm_squared());
            }
        }
    }
    assert!((best - s.objective).abs() < 0.03, "grid {best}, solver {}", s.objective);
}

#[test]
fn halfspace_projection() {
    let a = DVector::from_vec(vec![1.0, 1.0]) / 2f64.sqrt();
    let p = QcqpProblem {
        objective: norm_sq(2),
        constraints: vec![linear_at_least(a.as_slice().to_vec(), -1.0)],
        start: None,
    };
    let s = solve_qcqp(&p, 1e-10).unwrap();
    let proj = &a / a.norm_squared();
    assert!((&s.x - proj).norm() < 1e-6);
    assert!((s.objective - 1.0).abs() < 1e-5);
}

#[test]
fn infeasible_qcqp_is_reported() {
    let p = QcqpProblem {
        objective: norm_sq(1),
        constraints: vec![linear_at_least(vec![1.0], -2.0), linear_at_least(vec![-1.0], 1.0)],
        start: None,
    };
    assert!(matches!(solve_qcqp(&p, 1e-9), Err(SolverError::Infeasible { .. })));
}

fn parabola(center: f64, constant: f64) -> ConcaveQuadratic {
    // -(x - c)^2 + constant = -½ (2) x² + 2c x - c² + constant
    ConcaveQuadratic {
        curvature: QuadForm::Diagonal(DVector::from_element(1, 2.0)),
        lin: DVector::from_element(1, 2.0 * center),
        constant: constant - center * center,
    }
}

#[test]
fn maxmin_single_piece() {
    let x = solve_maxmin_concave_quadratics(&[parabola(1.0, 0.0)], &DVector::from_element(1, -3.0), 1e-10).unwrap();
    assert!((x[0] - 1.0).abs() < 1e-5);
}

#[test]
fn maxmin_symmetric_pieces_match_grid() {
    let pieces = [parabola(1.0, 0.0), parabola(-1.0, 0.0)];
    let x = solve_maxmin_concave_quadratics(&pieces, &DVector::from_element(1, 0.7), 1e-10).unwrap();
    let value = pieces.iter().map(|p| p.value(&x)).fold(f64::INFINITY, f64::min);
    let grid = (0..=4000)
        .map(|i| {
            let g = DVector::from_element(1, -2.0 + i as f64 * 1e-3);
            pieces.iter().map(|p| p.value(&g)).fold(f64::INFINITY, f64::min)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(x[0].abs() < 1e-5);
    assert!((value + 1.0).abs() < 1e-8);
    assert!((grid - value).abs() < 1e-5);
}

#[test]
fn maxmin_dominated_piece() {
    let pieces = [parabola(0.0, 1.0), parabola(0.0, 0.0)];
    let x = solve_maxmin_concave_quadratics(&pieces, &DVector::from_element(1, 0.4), 1e-10).unwrap();
    assert!(x[0].abs() < 1e-5);
    let value = pieces.iter().map(|p| p.value(&x)).fold(f64::INFINITY, f64::min);
    assert!(value.abs() < 1e-8);
}

/// `log2(1 + Σ_l x_l)` blocks on the listed variables.
fn mac_constraint(vars: &[usize], n: usize, rate: f64) -> LogDetConstraint {
    LogDetConstraint {
        blocks: vec![LogDetBlock {
            base: CMatrix::identity(1, 1),
            terms: vars.iter().map(|&l| (l, CMatrix::identity(1, 1))).collect(),
        }],
        lin: DVector::zeros(n),
        rhs: rate,
    }
}

fn sum_power(n: usize) -> Quadratic {
    Quadratic::linear(DVector::from_element(n, 1.0), 0.0)
}

fn nonneg(n: usize) -> Vec<QuadConstraint> {
    (0..n)
        .map(|l| {
            let mut e = vec![0.0; n];
            e[l] = 1.0;
            linear_at_least(e, 0.0)
        })
        .collect()
}

#[test]
fn single_user_rate_two_bits() {
    let p = LogDetProblem {
        objective: sum_power(1),
        quad_constraints: nonneg(1),
        logdet_constraints: vec![mac_constraint(&[0], 1, 2.0)],
        start: None,
    };
    let s = solve_logdet_program(&p, 1e-10).unwrap();
    assert!((s.x[0] - 3.0).abs() < 1e-6);
}

#[test]
fn two_user_mac_matches_grid() {
    let cons = vec![mac_constraint(&[0], 2, 0.5), mac_constraint(&[1], 2, 0.5), mac_constraint(&[0, 1], 2, 1.0)];
    let p = LogDetProblem { objective: sum_power(2), quad_constraints: nonneg(2), logdet_constraints: cons.clone(), start: None };
    let s = solve_logdet_program(&p, 1e-10).unwrap();
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for a in 0..=200 {
        for b in 0..=200 {
            let x = DVector::from_vec(vec![a as f64 * 0.005, b as f64 * 0.005]);
            if cons.iter().all(|c| c.slack(&x).unwrap() >= -1e-12) && x.sum() < best.0 {
                best = (x.sum(), x[0], x[1]);
            }
        }
    }
    assert!((s.x[0] - 0.5).abs() < 1e-5 && (s.x[1] - 0.5).abs() < 1e-5, "{:?}", s.x);
    assert!((best.0 - s.objective).abs() < 0.01);
    assert!(cons[2].slack(&s.x).unwrap().abs() < 1e-6, "sum constraint is active");
}

fn random_hpd(seed: u64, m: usize) -> CMatrix {
    let mut r = common::rng(seed);
    let a = CMatrix::from_fn(m, m, |_, _| common::cn(&mut r));
    &a * a.adjoint() + CMatrix::identity(m, m) * Complex64::new(0.1, 0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cholesky_log_det_matches_eigenvalues(seed in 0u64..10_000, m in 1usize..6) {
        let a = random_hpd(seed, m);
        let chol = hermitian_cholesky(&a).unwrap();
        let eig = DMatrix::from_fn(2 * m, 2 * m, |r, c| {
            let z = a[(r % m, c % m)];
            match (r < m, c < m) {
                (true, true) | (false, false) => z.re,
                (true, false) => -z.im,
                (false, true) => z.im,
            }
        })
        .symmetric_eigenvalues();
        // Each eigenvalue of the Hermitian matrix appears twice in its real embedding.
        let ln_det: f64 = eig.iter().map(|l| l.ln()).sum::<f64>() / 2.0;
        prop_assert!((chol.ln_det() - ln_det).abs() < 1e-9 * ln_det.abs().max(1.0));
        let inv = chol.inverse();
        let err = (&a * inv - CMatrix::identity(m, m)).norm();
        prop_assert!(err < 1e-9);
    }

    #[test]
    fn qcqp_halfspace_projection(a0 in -3.0f64..3.0, a1 in -3.0f64..3.0, b in 0.1f64..4.0) {
        prop_assume!(a0.hypot(a1) > 0.1);
        let a = DVector::from_vec(vec![a0, a1]);
        let p = QcqpProblem { objective: norm_sq(2), constraints: vec![linear_at_least(vec![a0, a1], -b)], start: None };
        let s = solve_qcqp(&p, 1e-10).unwrap();
        let proj = &a * (b / a.norm_squared());
        prop_assert!((&s.x - &proj).norm() < 1e-5 * proj.norm().max(1.0));
        prop_assert!(p.constraints[0].violation(&s.x) < 1e-9);
    }

    #[test]
    fn maxmin_value_dominates_samples(c0 in -2.0f64..2.0, c1 in -2.0f64..2.0, k0 in -1.0f64..1.0) {
        let pieces = [parabola(c0, k0), parabola(c1, 0.0)];
        let x = solve_maxmin_concave_quadratics(&pieces, &DVector::from_element(1, 0.0), 1e-10).unwrap();
        let f = |x: &DVector<f64>| pieces.iter().map(|p| p.value(x)).fold(f64::INFINITY, f64::min);
        let opt = f(&x);
        for i in 0..=200 {
            let g = DVector::from_element(1, -3.0 + i as f64 * 0.03);
            prop_assert!(f(&g) <= opt + 1e-6);
        }
    }
}
