#![allow(dead_code)]

use platoon_core::platoon::{LeaderProfile, SpeedChange};
use platoon_core::{PlatoonSpec, TransferFunction};

pub fn plant() -> TransferFunction {
    TransferFunction::from_coeffs(&[1.0], &[1.0, -2.0, 1.0]).unwrap()
}

/// `k/(1+h) * z/(z+p)`
pub fn controller(h: f64, k: f64, p: f64) -> TransferFunction {
    TransferFunction::from_coeffs(&[k / (1.0 + h), 0.0], &[1.0, p]).unwrap()
}

pub fn paper_spec(h: f64, followers: usize, p_d: f64) -> PlatoonSpec {
    PlatoonSpec::new(plant(), controller(h, 1.35, 0.89), h, followers, p_d).unwrap()
}

pub fn speed_step() -> LeaderProfile {
    LeaderProfile::PiecewiseSpeed {
        base_speed: 1.0,
        changes: vec![SpeedChange { at: 10, speed: 2.0 }],
    }
}

/// Coefficients of the expansion of `tf` in powers of `1/z`, lags `0..len`.
pub fn impulse_response(tf: &TransferFunction, len: usize) -> Vec<f64> {
    let d = tf.den().coeffs();
    let m = d.len() - 1;
    let nc = tf.num().coeffs();
    let mut n = vec![0.0; m + 1 - nc.len()];
    n.extend_from_slice(nc);
    let mut g = vec![0.0; len];
    for k in 0..len {
        let mut v = if k <= m { n[k] } else { 0.0 };
        for j in 1..=m.min(k) {
            v -= d[j] * g[k - j];
        }
        g[k] = v / d[0];
    }
    g
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
