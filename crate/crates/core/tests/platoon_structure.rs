mod common;

use nalgebra::DMatrix;
use num_complex::Complex64;
use platoon_core::grid::FrequencyGrid;
use platoon_core::moments::propagate_mean;
use platoon_core::{error_chain_tf, PlatoonInput};

use common::{impulse_response, paper_spec};

#[test]
fn stacked_system_matches_error_chain() {
    let grid = FrequencyGrid::uniform(511).unwrap();
    for h in [3.2, 2.4] {
        for n in 1..=5 {
            let spec = paper_spec(h, n, 0.6);
            let sys = spec.concatenated().unwrap();
            let vl = spec.vehicle_loop();
            for i in 1..=n {
                let chain = error_chain_tf(&vl.t, &vl.s, &vl.h, i).unwrap();
                for &w in grid.points() {
                    let z = Complex64::from_polar(1.0, w);
                    let a = sys.response(z, PlatoonInput::Leader, i).unwrap();
                    let b = chain.from_leader.evaluate(z).unwrap();
                    assert!(
                        (a - b).norm() <= 1e-8 * b.norm().max(1.0),
                        "leader h={h} N={n} i={i} w={w}"
                    );
                    for j in 1..=n {
                        let a = sys.response(z, PlatoonInput::Noise(j), i).unwrap();
                        let b = if j <= i {
                            chain.from_noise[j - 1].evaluate(z).unwrap()
                        } else {
                            Complex64::new(0.0, 0.0)
                        };
                        assert!(
                            (a - b).norm() <= 1e-8 * b.norm().max(1.0),
                            "noise {j} h={h} N={n} i={i} w={w}"
                        );
                    }
                }
            }
        }
    }
}

fn det(m: DMatrix<Complex64>) -> Complex64 {
    m.lu().determinant()
}

#[test]
fn stacked_eigenvalues_repeat_the_block() {
    let spec = paper_spec(3.2, 4, 0.6);
    let sys = spec.concatenated().unwrap();
    let a = &spec.vehicle_loop().t_ss.a;
    for z in [
        Complex64::new(0.3, 0.7),
        Complex64::new(-1.1, 0.2),
        Complex64::new(0.9, -0.4),
    ] {
        let big = DMatrix::from_fn(sys.dim(), sys.dim(), |r, c| {
            (if r == c { z } else { Complex64::new(0.0, 0.0) }) - sys.a[(r, c)]
        });
        let small = DMatrix::from_fn(3, 3, |r, c| {
            (if r == c { z } else { Complex64::new(0.0, 0.0) }) - a[(r, c)]
        });
        let lhs = det(big);
        let rhs = det(small).powu(4);
        assert!((lhs - rhs).norm() <= 1e-10 * rhs.norm());
    }
    assert_eq!(sys.spectral_radius(), spec.vehicle_loop().t_ss.spectral_radius());
}

#[test]
fn leader_impulse_gives_powers_of_t() {
    let spec = paper_spec(3.2, 3, 0.6);
    let sys = spec.concatenated().unwrap();
    let horizon = 60;
    let (_, mu) = propagate_mean(&sys, &[1.0], &nalgebra::DVector::zeros(sys.dim()), horizon).unwrap();
    for i in 1..=3 {
        let g = impulse_response(&spec.vehicle_loop().t.pow(i as u32), horizon);
        for k in 0..horizon {
            assert!((mu[k][i - 1] - g[k]).abs() < 1e-12, "i={i} k={k}");
        }
    }
}

#[test]
fn spectral_radius_near_printed_constants() {
    // The printed controller constants give 0.5274 and 0.6546.
    let r32 = paper_spec(3.2, 1, 0.6).vehicle_loop().t_ss.spectral_radius();
    let r24 = paper_spec(2.4, 1, 0.6).vehicle_loop().t_ss.spectral_radius();
    assert!((r32 - 0.52742).abs() < 1e-4, "{r32}");
    assert!((r24 - 0.65463).abs() < 1e-4, "{r24}");
}
