use crate::error::{Error, Result};

/// Default number of positive frequencies on `(0, pi]`.
pub const DEFAULT_GRID_SIZE: usize = 1 << 16;

/// Uniform frequency grid `0, pi/M, 2 pi/M, ..., pi`.
///
/// `omega = 0` is always the first point; real-coefficient symmetry means
/// `[0, pi]` covers the whole circle.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyGrid {
    points: Vec<f64>,
}

impl FrequencyGrid {
    pub fn uniform(positive_points: usize) -> Result<Self> {
        if positive_points == 0 {
            return Err(Error::InvalidInput(
                "frequency grid needs at least one positive point".into(),
            ));
        }
        let step = std::f64::consts::PI / positive_points as f64;
        let points = (0..=positive_points).map(|j| j as f64 * step).collect();
        Ok(FrequencyGrid { points })
    }

    /// All points, starting with `omega = 0`.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Points strictly greater than zero.
    pub fn positive(&self) -> &[f64] {
        &self.points[1..]
    }

    pub fn count(&self) -> usize {
        self.points.len()
    }

    pub fn step(&self) -> f64 {
        self.points[1]
    }

    /// `(1/2pi) * integral over the circle` of an even function sampled on
    /// this grid, by the trapezoidal rule on `[0, pi]`.
    pub fn circle_mean(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.points.len());
        let m = values.len() - 1;
        let inner: f64 = values[1..m].iter().sum();
        (0.5 * (values[0] + values[m]) + inner) / m as f64
    }
}
