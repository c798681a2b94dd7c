mod common;

use num_complex::Complex64;
use proptest::prelude::*;

use ris_iterative::coding::transfer::{default_table, DecTransfer};
use ris_iterative::coding::CodingError;
use ris_iterative::convex::linalg::CVector;
use ris_iterative::state_evolution::{
    path_feasible, phi, phi_prime, se_run, weighted_sinr, Grouping, PathSpec, SeError,
};

/// `ψ(ρ) = 1/(1+ρ)`, the variance of a Gaussian prior after one AWGN look.
struct GaussianStub;

impl DecTransfer for GaussianStub {
    fn psi(&self, rho: f64) -> f64 {
        1.0 / (1.0 + rho)
    }
    fn psi_inv(&self, v: f64) -> Result<f64, CodingError> {
        Ok(1.0 / v - 1.0)
    }
}

fn scalar(g: &[f64]) -> Vec<Vec<CVector>> {
    g.iter().map(|&x| vec![CVector::from_element(1, Complex64::new(x, 0.0))]).collect()
}

#[test]
fn scalar_single_user_phi() {
    for v in [1.0, 0.6, 0.05] {
        let r = phi(&scalar(&[1.5]), 0.5, &[v]).unwrap()[0];
        assert!(common::rel(r, 2.25 / 0.5, 1e-30) < 1e-12);
    }
}

#[test]
fn scalar_two_user_phi() {
    let r = phi(&scalar(&[1.5, 0.8]), 0.5, &[1.0, 0.4]).unwrap();
    assert!(common::rel(r[0], 2.25 / (0.4 * 0.64 + 0.5), 1e-30) < 1e-12);
    assert!(common::rel(r[1], 0.64 / (2.25 + 0.5), 1e-30) < 1e-12);
}

#[test]
fn single_group_reduces_to_phi_at_unit_variance() {
    let mut rg = common::rng(1);
    let cols = common::random_columns(&mut rg, 3, 4, 2, 1.0);
    let g = Grouping::single(3);
    let full = phi(&cols, 0.3, &[1.0; 3]).unwrap();
    for (k, f) in full.iter().enumerate() {
        assert!(common::rel(phi_prime(k, &g, &cols, 0.3).unwrap(), *f, 1e-30) < 1e-12);
    }
}

#[test]
fn last_group_sees_only_noise() {
    let g = Grouping::new(vec![vec![0], vec![1]], 2).unwrap();
    let r = phi_prime(1, &g, &scalar(&[2.0, 0.7]), 0.25).unwrap();
    assert!(common::rel(r, 0.49 / 0.25, 1e-30) < 1e-12);
}

#[test]
fn phi_prime_matches_reference_embedding() {
    let mut rg = common::rng(2);
    for _ in 0..20 {
        let cols = common::random_columns(&mut rg, 4, 3, 2, 1.0);
        let g = Grouping::new(vec![vec![2], vec![0, 3], vec![1]], 4).unwrap();
        for k in 0..4 {
            let t = g.group_of(k).unwrap();
            let weights: Vec<f64> = (0..4).map(|u| if g.group_of(u).unwrap() >= t { 1.0 } else { 0.0 }).collect();
            let tau = common::tau_reference(&cols, 0.4, &weights)[k];
            let want = common::sinr_reference(tau, 1.0);
            let got = phi_prime(k, &g, &cols, 0.4).unwrap();
            assert!(common::rel(got, want, 1e-30) < 1e-12);
            assert_eq!(got, weighted_sinr(&cols, 0.4, k, &weights).unwrap());
        }
    }
}

#[test]
fn stub_transfer_reaches_closed_form_fixed_point() {
    let (g, noise) = (1.3, 0.4);
    let tr = se_run(&[1.0], 5, &GaussianStub, &scalar(&[g]), noise, None).unwrap();
    let v_star = 1.0 / (1.0 + g * g / noise);
    for v in &tr.v[1..] {
        assert!((v[0] - v_star).abs() < 1e-12);
    }
}

#[test]
fn zero_power_keeps_unit_variance() {
    let tr = se_run(&[1.0, 1.0], 4, default_table(), &scalar(&[0.0, 0.0]), 1.0, None).unwrap();
    assert!(tr.v.iter().flatten().all(|&v| v == 1.0));
    assert!(tr.to_csv().starts_with("t,v1,v2,rho1,rho2\n"));
    assert_eq!(tr.to_csv().lines().count(), 6);
}

#[test]
fn cancelled_users_are_frozen() {
    let tr = se_run(&[1.0, 1.0], 3, &GaussianStub, &scalar(&[10.0, 0.3]), 1.0, Some(&[0.05, 0.05])).unwrap();
    assert_eq!(tr.v[1][0], 0.0);
    // With user 0 cancelled, user 1 sees only noise.
    assert!(common::rel(tr.rho[1][1], 0.09, 1e-30) < 1e-12);
}

#[test]
fn vanishing_noise_makes_every_path_feasible() {
    let mut rg = common::rng(3);
    let cols = common::random_columns(&mut rg, 3, 2, 3, 1.0);
    let v_tar = [3e-3, 3e-3, 3e-3];
    let g = Grouping::new(vec![vec![1], vec![0, 2]], 3).unwrap();
    for path in [PathSpec::diagonal(&v_tar, 16), PathSpec::staircase(&g, &v_tar, 8)] {
        assert!(path.is_monotone());
        let chk = path_feasible(&path, default_table(), &cols, 1e-12, &v_tar).unwrap();
        assert!(chk.feasible, "{:?}", chk.witness);
    }
}

#[test]
fn starved_user_is_the_witness() {
    let mut rg = common::rng(4);
    let mut cols = common::random_columns(&mut rg, 2, 2, 2, 1.0);
    cols[1] = vec![CVector::zeros(2); 2];
    let v_tar = [1e-2, 1e-2];
    let chk = path_feasible(&PathSpec::diagonal(&v_tar, 8), default_table(), &cols, 1e-3, &v_tar).unwrap();
    assert!(!chk.feasible);
    let w = chk.witness.unwrap();
    assert_eq!((w.point, w.user), (0, 1));
}

#[test]
fn diagonal_path_endpoints() {
    let p = PathSpec::diagonal(&[0.1, 0.01], 5);
    assert_eq!(p.points.len(), 5);
    assert_eq!(p.points[0], vec![1.0, 1.0]);
    assert_eq!(p.points[4], vec![0.1, 0.01]);
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(matches!(Grouping::new(vec![vec![0, 0]], 2), Err(SeError::InvalidGrouping(_))));
    assert!(matches!(Grouping::new(vec![vec![0]], 2), Err(SeError::InvalidGrouping(_))));
    assert!(matches!(phi(&scalar(&[1.0]), 1.0, &[1.5]), Err(SeError::InvalidVariance(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn phi_decreases_with_interference(seed in 0u64..10_000, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let cols = common::random_columns(&mut common::rng(seed), 3, 2, 2, 1.0);
        let r_lo = phi(&cols, 0.5, &[1.0, lo, 1.0]).unwrap()[0];
        let r_hi = phi(&cols, 0.5, &[1.0, hi, 1.0]).unwrap()[0];
        prop_assert!(r_lo >= r_hi * (1.0 - 1e-12));
    }

    #[test]
    fn se_variances_stay_in_unit_interval(seed in 0u64..10_000, scale in 0.01f64..10.0) {
        let cols = common::random_columns(&mut common::rng(seed), 2, 4, 2, scale);
        let tr = se_run(&[1.0, 1.0], 6, default_table(), &cols, 1.0, None).unwrap();
        prop_assert!(tr.v.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(tr.rho.iter().flatten().all(|r| *r >= 0.0));
    }
}
