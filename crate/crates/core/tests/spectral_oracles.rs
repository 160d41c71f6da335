mod common;

use num_complex::Complex64;
use platoon_core::grid::{FrequencyGrid, DEFAULT_GRID_SIZE};
use platoon_core::spectral::{
    gain_scan, lag_zero, limiting_variance, limiting_variance_series, psd_ladder, spectral_factorize, variance_ladder,
};
use platoon_core::{certify, PlatoonSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{controller, paper_spec, plant, rel_diff};

fn default_grid() -> FrequencyGrid {
    FrequencyGrid::uniform(DEFAULT_GRID_SIZE).unwrap()
}

#[test]
fn psd_integrates_to_ladder() {
    let spec = paper_spec(3.2, 8, 0.6);
    let vl = spec.vehicle_loop();
    let ladder = psd_ladder(&vl.t, &vl.s, &vl.h, 0.6, 8, &default_grid()).unwrap();
    let exact = variance_ladder(&vl.t, &vl.s, &vl.h, 0.6, 8).unwrap();
    for i in 1..=8 {
        assert!(rel_diff(ladder.variance(i), exact[i - 1]) < 1e-4, "i={i}");
        assert!(ladder.phi[i - 1].iter().all(|v| *v >= 0.0));
    }
}

#[test]
fn factor_identity_on_fine_grid() {
    let t = paper_spec(3.2, 1, 0.6).vehicle_loop().t.clone();
    let f = spectral_factorize(&t).unwrap();
    let grid = FrequencyGrid::uniform(1 << 14).unwrap();
    for &w in grid.points() {
        let m2 = f.m.freq_response(w).unwrap().norm_sqr();
        let t2 = t.freq_response(w).unwrap().norm_sqr();
        assert!((m2 + t2 - 1.0).abs() <= 1e-7, "w={w}");
    }
    assert!(f.m.poles().iter().all(|p| p.norm() < 1.0));
    assert!(f.m.zeros().iter().all(|z| z.norm() <= 1.0 + 1e-7));
}

#[test]
fn headway_loop_orthogonal_to_constant() {
    for h in [3.2, 2.4] {
        let vl = paper_spec(h, 1, 0.6).vehicle_loop().clone();
        let ht = vl.h.series(&vl.t);
        assert_eq!(lag_zero(&ht), 0.0);
        let grid = FrequencyGrid::uniform(4096).unwrap();
        let re: Vec<f64> = grid.points().iter().map(|&w| ht.freq_response(w).unwrap().re).collect();
        assert!(grid.circle_mean(&re).abs() <= 1e-8);
    }
}

#[test]
fn ladder_monotone_and_below_limit() {
    let spec = paper_spec(3.2, 40, 0.6);
    let vl = spec.vehicle_loop();
    let ladder = variance_ladder(&vl.t, &vl.s, &vl.h, 0.6, 40).unwrap();
    assert!(ladder.windows(2).all(|w| w[1] >= w[0]));
    let limit = limiting_variance(&vl.s, &spectral_factorize(&vl.t).unwrap(), 0.6).unwrap();
    assert!(ladder.iter().all(|v| *v <= limit + 1e-9));
}

#[test]
fn unstable_string_amplifies_at_worst_frequency() {
    let spec = paper_spec(2.4, 20, 0.6);
    let vl = spec.vehicle_loop();
    let scan = gain_scan(&vl.t, &default_grid()).unwrap();
    assert!(scan.peak.value > 1.0);
    let grid = FrequencyGrid::uniform(4096).unwrap();
    let ladder = psd_ladder(&vl.t, &vl.s, &vl.h, 0.6, 20, &grid).unwrap();
    let j = (scan.peak.omega / grid.step()).round() as usize;
    assert!(vl.t.freq_response(grid.points()[j]).unwrap().norm() > 1.0);
    for i in 1..20 {
        assert!(ladder.phi[i][j] > ladder.phi[i - 1][j], "i={i}");
    }
    assert!(ladder.max_phi(20) > 10.0 * ladder.max_phi(1));
}

#[test]
fn psd_ladder_needs_stable_loop() {
    let h = 3.2;
    let spec = PlatoonSpec::new(plant(), controller(h, 13.5, 0.89), h, 2, 0.6).unwrap();
    let vl = spec.vehicle_loop();
    assert!(psd_ladder(&vl.t, &vl.s, &vl.h, 0.6, 2, &FrequencyGrid::uniform(64).unwrap()).is_err());
}

#[test]
fn closed_form_limit_matches_series_for_random_controllers() {
    let grid = default_grid();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut checked = 0;
    while checked < 20 {
        let h = rng.random_range(2.0..5.0);
        let k = rng.random_range(0.5..2.0);
        let p = rng.random_range(0.3..0.95);
        let Ok(spec) = PlatoonSpec::new(plant(), controller(h, k, p), h, 2, 0.6) else {
            continue;
        };
        let verdict = certify(&spec, &grid).unwrap();
        if !verdict.string_stable {
            continue;
        }
        let vl = spec.vehicle_loop();
        let series = limiting_variance_series(&vl.t, &vl.s, &vl.h, 0.6, 1e-8).unwrap();
        let closed = verdict.limiting_variance.unwrap();
        assert!(
            rel_diff(closed, series) < 1e-6,
            "h={h} k={k} p={p}: {closed} vs {series}"
        );
        checked += 1;
    }
}

#[test]
fn limit_is_linear_in_noise_variance() {
    let t = paper_spec(3.2, 1, 0.6).vehicle_loop().clone();
    let f = spectral_factorize(&t.t).unwrap();
    let a = limiting_variance(&t.s, &f, 0.3).unwrap();
    let b = limiting_variance(&t.s, &f, 0.6).unwrap();
    assert!((a / b - 0.5).abs() < 1e-9);
    assert_eq!(limiting_variance(&t.s, &f, 0.0).unwrap(), 0.0);
}

#[test]
fn factor_zero_at_one_is_simple() {
    let t = paper_spec(3.2, 1, 0.6).vehicle_loop().t.clone();
    let f = spectral_factorize(&t).unwrap();
    assert_eq!(f.unit_circle_zeros, vec![Complex64::new(1.0, 0.0)]);
    let dm = f.m.num().derivative().eval(1.0);
    assert!(dm.abs() > 1e-3);
}
