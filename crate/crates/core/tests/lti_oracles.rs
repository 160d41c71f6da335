mod common;

use num_complex::Complex64;
use platoon_core::grid::FrequencyGrid;
use platoon_core::norms::{h2_norm_squared, h_infinity_norm};
use platoon_core::{realize, Polynomial, TransferFunction};
use proptest::prelude::*;

use common::impulse_response;

fn stable_tf() -> impl Strategy<Value = TransferFunction> {
    // Poles from radii < 0.95 and angles; numerator random of lower degree.
    (
        prop::collection::vec((0.05f64..0.95, 0.0f64..std::f64::consts::PI), 1..3),
        prop::collection::vec(-2.0f64..2.0, 1..4),
    )
        .prop_filter_map("degenerate", |(poles, num)| {
            let mut roots = Vec::new();
            for (r, a) in poles {
                roots.push(Complex64::from_polar(r, a));
                roots.push(Complex64::from_polar(r, -a));
            }
            let den = Polynomial::from_roots(&roots, 1.0);
            let num = Polynomial::new(num).ok()?;
            if num.degree() > den.degree() || num.is_zero() {
                return None;
            }
            TransferFunction::new(num, den).ok()
        })
}

fn any_tf() -> impl Strategy<Value = TransferFunction> {
    (
        prop::collection::vec(-1.5f64..1.5, 1..4),
        prop::collection::vec(-1.0f64..1.0, 1..4),
    )
        .prop_filter_map("degenerate", |(den_tail, num)| {
            let mut den = vec![1.0];
            den.extend(den_tail);
            let num = Polynomial::new(num).ok()?;
            let den = Polynomial::new(den).ok()?;
            if num.degree() > den.degree() || num.is_zero() {
                return None;
            }
            TransferFunction::new(num, den).ok()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn realization_reproduces_response(tf in any_tf()) {
        let ss = realize(&tf).unwrap();
        prop_assert_eq!(ss.order(), tf.den().degree());
        for j in 0..16 {
            let z = Complex64::from_polar(1.0, 0.1 + j as f64 * 0.19);
            let (Ok(a), Ok(b)) = (ss.evaluate(z), tf.evaluate(z)) else { continue };
            prop_assert!((a - b).norm() <= 1e-9 * b.norm().max(1.0));
        }
    }

    #[test]
    fn stability_agrees_with_poles(tf in any_tf()) {
        let rho = realize(&tf).unwrap().spectral_radius();
        let by_poles = tf.poles().iter().all(|p| p.norm() < 1.0 - 1e-9);
        // Skip cases within numerical reach of the boundary.
        prop_assume!((rho - (1.0 - 1e-9)).abs() > 1e-7);
        prop_assert_eq!(rho < 1.0 - 1e-9, by_poles);
    }

    #[test]
    fn h2_matches_impulse_energy(tf in stable_tf()) {
        let g = impulse_response(&tf, 4000);
        let energy: f64 = g.iter().map(|v| v * v).sum();
        let gram = h2_norm_squared(&tf).unwrap();
        prop_assert!(common::rel_diff(energy, gram) < 1e-9, "{} vs {}", energy, gram);
    }

    #[test]
    fn hinf_dominates_dense_samples(tf in stable_tf()) {
        let peak = h_infinity_norm(&tf, &FrequencyGrid::uniform(2048).unwrap()).unwrap();
        for j in 0..=20000 {
            let w = std::f64::consts::PI * j as f64 / 20000.0;
            let v = tf.freq_response(w).unwrap().norm();
            prop_assert!(v <= peak.value * (1.0 + 1e-9));
        }
    }
}

#[test]
fn h2_of_first_order_lag() {
    // 1/(z - a): energy sum a^(2k) = 1/(1 - a^2).
    let a = 0.6;
    let tf = TransferFunction::from_coeffs(&[1.0], &[1.0, -a]).unwrap();
    let want = 1.0 / (1.0 - a * a);
    assert!(common::rel_diff(h2_norm_squared(&tf).unwrap(), want) < 1e-13);
}
