mod common;

use nalgebra::{DMatrix, DVector};
use platoon_core::lyapunov::solve_stein;
use platoon_core::moments::{build_upsilon, propagate_covariance, stationary_covariance};
use platoon_core::spectral::variance_ladder;
use platoon_core::ConcatenatedPlatoon;

use common::{paper_spec, rel_diff};

/// `vec(P) = (I - A (x) A)^-1 vec(Q)`.
fn kronecker_stationary(a: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let lhs = DMatrix::<f64>::identity(n * n, n * n) - a.kronecker(a);
    let v = lhs.lu().solve(&DVector::from_column_slice(q.as_slice())).unwrap();
    DMatrix::from_column_slice(n, n, v.as_slice())
}

/// State `[xi; d(k-1)]` driven by white `d(k)`; no correlated input left.
fn augmented(sys: &ConcatenatedPlatoon) -> (DMatrix<f64>, DMatrix<f64>) {
    let (m, n) = (sys.dim(), sys.followers);
    let mut a = DMatrix::zeros(m + n, m + n);
    a.view_mut((0, 0), (m, m)).copy_from(&sys.a);
    a.view_mut((0, m), (m, n)).copy_from(&sys.b_b);
    let mut b = DMatrix::zeros(m + n, n);
    b.view_mut((0, 0), (m, n)).copy_from(&sys.b_a);
    b.view_mut((m, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
    (a, b)
}

#[test]
fn upsilon_is_symmetric() {
    let sys = paper_spec(3.2, 2, 0.6).concatenated().unwrap();
    let u = build_upsilon(&sys, 0.6);
    assert_eq!(u.shape(), (6, 6));
    assert!((&u - u.transpose()).amax() < 1e-14);
}

#[test]
fn lyapunov_matches_kronecker() {
    for h in [3.2, 2.4] {
        for n in 1..=4 {
            let sys = paper_spec(h, n, 0.6).concatenated().unwrap();
            let st = stationary_covariance(&sys, 0.6).unwrap();
            let kron = kronecker_stationary(&sys.a, &build_upsilon(&sys, 0.6));
            let scale = kron.amax();
            assert!((&st.p_xi_inf - &kron).amax() <= 1e-9 * scale.max(1.0), "h={h} N={n}");
        }
    }
}

#[test]
fn upsilon_matches_augmented_white_noise_model() {
    let p_d = 0.6;
    let sys = paper_spec(3.2, 3, p_d).concatenated().unwrap();
    let (a, b) = augmented(&sys);
    let m = sys.dim();
    // Stationary.
    let aug = solve_stein(&a, &(&b * b.transpose() * p_d)).unwrap();
    let st = stationary_covariance(&sys, p_d).unwrap();
    let top = aug.view((0, 0), (m, m)).into_owned();
    assert!((&top - &st.p_xi_inf).amax() <= 1e-10 * top.amax());
    // Transient from a zero start, where d(-1) = 0.
    let (p_xi, _) = propagate_covariance(&sys, &DMatrix::zeros(m, m), p_d, 30, true).unwrap();
    let mut p = DMatrix::zeros(m + 3, m + 3);
    for (k, want) in p_xi.iter().enumerate() {
        let got = p.view((0, 0), (m, m)).into_owned();
        assert!((&got - want).amax() <= 1e-12 * want.amax().max(1.0), "k={k}");
        p = &a * &p * a.transpose() + &b * b.transpose() * p_d;
    }
}

#[test]
fn recursion_reaches_stationary_value() {
    for h in [3.2, 2.4] {
        let sys = paper_spec(h, 2, 0.6).concatenated().unwrap();
        let rho = sys.spectral_radius();
        let k = ((1e-9f64).ln() / rho.ln()).ceil() as usize;
        let st = stationary_covariance(&sys, 0.6).unwrap();
        let (_, pz) = propagate_covariance(&sys, &DMatrix::zeros(6, 6), 0.6, 4 * k, false).unwrap();
        let last = pz.last().unwrap();
        assert!((last - &st.p_zeta_inf).amax() <= 1e-6, "h={h}");
    }
}

#[test]
fn initial_covariance_is_forgotten() {
    let sys = paper_spec(3.2, 3, 0.6).concatenated().unwrap();
    let m = sys.dim();
    let p0 = DMatrix::from_fn(m, m, |r, c| {
        if r == c {
            2.0
        } else {
            0.3f64.powi((r as i32 - c as i32).abs())
        }
    });
    let horizon = 600;
    let (_, a) = propagate_covariance(&sys, &DMatrix::zeros(m, m), 0.6, horizon, false).unwrap();
    let (_, b) = propagate_covariance(&sys, &p0, 0.6, horizon, false).unwrap();
    assert!((a.last().unwrap() - b.last().unwrap()).amax() <= 1e-8);
}

#[test]
fn covariance_grows_from_zero() {
    let sys = paper_spec(3.2, 3, 0.6).concatenated().unwrap();
    let (_, pz) = propagate_covariance(&sys, &DMatrix::zeros(9, 9), 0.6, 200, false).unwrap();
    for k in 0..pz.len() - 1 {
        let diff = &pz[k + 1] - &pz[k];
        let min_eig = diff.symmetric_eigenvalues().min();
        assert!(min_eig >= -1e-12 * pz[k + 1].amax(), "k={k} min_eig={min_eig}");
    }
}

#[test]
fn ladder_matches_lyapunov_diagonal() {
    for h in [3.2, 2.4] {
        let spec = paper_spec(h, 10, 0.6);
        let vl = spec.vehicle_loop();
        let ladder = variance_ladder(&vl.t, &vl.s, &vl.h, 0.6, 10).unwrap();
        let st = stationary_covariance(&spec.concatenated().unwrap(), 0.6).unwrap();
        for (i, (a, b)) in ladder.iter().zip(&st.per_vehicle_variance).enumerate() {
            assert!(rel_diff(*a, *b) < 1e-6, "h={h} i={} ladder {a} lyapunov {b}", i + 1);
        }
    }
}

#[test]
fn stationary_variance_increases_along_string() {
    let st = stationary_covariance(&paper_spec(3.2, 20, 0.6).concatenated().unwrap(), 0.6).unwrap();
    assert!(st.per_vehicle_variance.windows(2).all(|w| w[1] >= w[0]));
    assert!(st.mu_zeta_inf.iter().all(|v| *v == 0.0));
}
