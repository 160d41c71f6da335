//! H2 and H-infinity norms of stable SISO transfer functions.

use crate::error::Result;
use crate::grid::FrequencyGrid;
use crate::ss::realize;
use crate::tf::TransferFunction;

/// Peak of `|W(e^jw)|` and the frequency where it is attained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak {
    pub value: f64,
    pub omega: f64,
}

/// `||W||_2^2` through the observability Gramian of a minimal realization.
pub fn h2_norm_squared(tf: &TransferFunction) -> Result<f64> {
    tf.require_stable()?;
    realize(tf)?.h2_norm_squared()
}

pub fn h2_norm(tf: &TransferFunction) -> Result<f64> {
    h2_norm_squared(tf).map(f64::sqrt)
}

/// `max |W(e^jw)|` on the grid, refined by golden-section search around the
/// best grid point.
pub fn h_infinity_norm(tf: &TransferFunction, grid: &FrequencyGrid) -> Result<Peak> {
    tf.require_stable()?;
    Ok(peak_magnitude(tf, grid.points()))
}

/// Maximizes `|W|` over the given increasing frequencies, then refines
/// between the neighbours of the best sample (never leaving the sampled
/// range).
pub(crate) fn peak_magnitude(tf: &TransferFunction, omegas: &[f64]) -> Peak {
    let mag = |w: f64| tf.freq_response(w).map(|v| v.norm()).unwrap_or(f64::INFINITY);
    refine_extremum(omegas, mag)
}

/// Maximum of `f` over sorted samples with golden-section refinement.
pub(crate) fn refine_extremum(omegas: &[f64], f: impl Fn(f64) -> f64) -> Peak {
    let (mut best_i, mut best) = (0, f64::NEG_INFINITY);
    for (i, &w) in omegas.iter().enumerate() {
        let v = f(w);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let lo = omegas[best_i.saturating_sub(1)];
    let hi = omegas[(best_i + 1).min(omegas.len() - 1)];
    let (w, v) = golden_max(&f, lo, hi);
    if v > best {
        Peak { value: v, omega: w }
    } else {
        Peak {
            value: best,
            omega: omegas[best_i],
        }
    }
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    if b <= a {
        return (a, f(a));
    }
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if (b - a) <= 1e-15 * b.abs().max(1.0) {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}
