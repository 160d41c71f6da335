//! Fixtures shared by the benchmarks.

use platoon_core::{PlatoonSpec, TransferFunction};

/// Double-integrator platoon with the h-scheduled lead controller.
pub fn reference_spec(h: f64, followers: usize) -> PlatoonSpec {
    let plant = TransferFunction::from_coeffs(&[1.0], &[1.0, -2.0, 1.0]).expect("valid plant");
    let controller = TransferFunction::from_coeffs(&[1.35 / (1.0 + h), 0.0], &[1.0, 0.89]).expect("valid controller");
    PlatoonSpec::new(plant, controller, h, followers, 0.6).expect("valid platoon")
}
