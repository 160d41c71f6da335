//! Frequency-domain view of the platoon: power spectral density ladder,
//! stationary variance ladder and its limit as the platoon grows.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{FrequencyGrid, DEFAULT_GRID_SIZE};
use crate::lyapunov::solve_stein;
use crate::norms::{h2_norm_squared, refine_extremum, Peak};
use crate::poly::Polynomial;
use crate::ss::realize;
use crate::tf::{TransferFunction, STABILITY_TOL};

/// Radial distance from the unit circle below which a root of the
/// factorization polynomial is treated as lying on it.
pub const CIRCLE_TOL: f64 = 1e-7;
/// Two unit-circle roots are paired when closer than this.
pub const PAIR_TOL: f64 = 1e-6;
pub const MAX_SERIES_TERMS: usize = 100_000;
/// Series integrand values below this fraction of the peak are dropped.
const PRUNE_REL: f64 = 1e-20;
/// Grid size used to fit and check the spectral factor.
const FACTOR_GRID: usize = 1 << 14;

#[derive(Clone, Debug)]
pub struct SpectrumLadder {
    pub grid: FrequencyGrid,
    /// `phi[i - 1][j]` is the PSD of `zeta_i` at `grid.points()[j]`.
    pub phi: Vec<Vec<f64>>,
    pub followers: usize,
    pub p_d: f64,
}

impl SpectrumLadder {
    /// `(1/2pi) int phi_i` over the circle (trapezoid rule).
    pub fn variance(&self, i: usize) -> f64 {
        self.grid.circle_mean(&self.phi[i - 1])
    }

    pub fn max_phi(&self, i: usize) -> f64 {
        self.phi[i - 1].iter().copied().fold(0.0, f64::max)
    }
}

/// `phi_1 = |HT|^2 P_d`,
/// `phi_i = |T|^2 phi_(i-1) + |T|^2 |S|^2 P_d + (1 - |T|^2) |1 - S|^2 P_d`.
pub fn psd_ladder(
    t: &TransferFunction,
    s: &TransferFunction,
    h: &TransferFunction,
    p_d: f64,
    followers: usize,
    grid: &FrequencyGrid,
) -> Result<SpectrumLadder> {
    let rho = t.max_pole_modulus();
    if rho >= 1.0 - STABILITY_TOL {
        return Err(Error::NotMss { rho });
    }
    if followers == 0 {
        return Err(Error::InvalidInput("the platoon needs at least one follower".into()));
    }
    let mut t2 = Vec::with_capacity(grid.count());
    let mut s2 = Vec::with_capacity(grid.count());
    let mut ht2 = Vec::with_capacity(grid.count());
    for &w in grid.points() {
        let tv = t.freq_response(w)?;
        let hv = h.freq_response(w)?;
        t2.push(tv.norm_sqr());
        s2.push(s.freq_response(w)?.norm_sqr());
        ht2.push((hv * tv).norm_sqr());
    }
    let mut phi = Vec::with_capacity(followers);
    phi.push(ht2.iter().map(|v| v * p_d).collect::<Vec<_>>());
    for i in 1..followers {
        let prev = &phi[i - 1];
        let next = (0..grid.count())
            .map(|j| t2[j] * prev[j] + t2[j] * s2[j] * p_d + (1.0 - t2[j]) * ht2[j] * p_d)
            .collect();
        phi.push(next);
    }
    Ok(SpectrumLadder {
        grid: grid.clone(),
        phi,
        followers,
        p_d,
    })
}

/// `P_1 = ||HT||^2 P_d`, `P_i = P_(i-1) + ||T^(i-1) S||^2 P_d`.
///
/// All the `||T^m S||` come from one controllability Gramian of the cascade
/// `S -> T -> ... -> T`, reading out each stage in turn.
pub fn variance_ladder(
    t: &TransferFunction,
    s: &TransferFunction,
    h: &TransferFunction,
    p_d: f64,
    followers: usize,
) -> Result<Vec<f64>> {
    t.require_stable()?;
    if followers == 0 {
        return Err(Error::InvalidInput("the platoon needs at least one follower".into()));
    }
    let first = h2_norm_squared(&h.series(t))? * p_d;
    let mut out = Vec::with_capacity(followers);
    out.push(first);
    if followers == 1 {
        return Ok(out);
    }
    let s_ss = realize(s)?;
    let t_ss = realize(t)?;
    let mut cascade = s_ss.clone();
    for _ in 1..followers {
        cascade = cascade.then(&t_ss);
    }
    let p = solve_stein(&cascade.a, &(&cascade.b * cascade.b.transpose()))?;
    // Stage 0 is S; stage m >= 1 is the m-th copy of T, whose output is T^m S.
    let (ns, nt) = (s_ss.order(), t_ss.order());
    let c = &t_ss.c;
    let mut acc = first;
    for m in 1..followers {
        let off = ns + (m - 1) * nt;
        acc += (c * p.view((off, off), (nt, nt)) * c.transpose())[(0, 0)] * p_d;
        out.push(acc);
    }
    Ok(out)
}

/// `M` with `|M|^2 = 1 - |T|^2` on the unit circle.
#[derive(Clone, Debug)]
pub struct SpectralFactor {
    pub m: TransferFunction,
    /// Max grid defect of `|M|^2 - (1 - |T|^2)`.
    pub residual: f64,
    /// Zeros of `M` on the unit circle, `z = 1` included when present.
    pub unit_circle_zeros: Vec<Complex64>,
}

/// `z^m [d(z) d(1/z) - n(z) n(1/z)]` for `T = n/d` with `deg d = m`.
fn factorization_polynomial(t: &TransferFunction) -> Polynomial {
    let m = t.den().degree();
    let pad = |p: &Polynomial| {
        let mut c = vec![0.0; m + 1 - p.coeffs().len()];
        c.extend_from_slice(p.coeffs());
        c
    };
    let d = pad(t.den());
    let n = pad(t.num());
    let conv_rev = |a: &[f64]| {
        let mut out = vec![0.0; 2 * m + 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in a.iter().rev().enumerate() {
                out[i + j] += x * y;
            }
        }
        out
    };
    let dd = conv_rev(&d);
    let nn = conv_rev(&n);
    Polynomial::from_raw(dd.iter().zip(&nn).map(|(a, b)| a - b).collect())
}

fn gain_defect(t: &TransferFunction, omegas: &[f64]) -> Result<Vec<f64>> {
    omegas
        .iter()
        .map(|&w| t.freq_response(w).map(|v| 1.0 - v.norm_sqr()))
        .collect()
}

pub fn spectral_factorize(t: &TransferFunction) -> Result<SpectralFactor> {
    t.require_stable()?;
    if !t.is_proper() {
        return Err(Error::NotProper {
            num: t.num().degree(),
            den: t.den().degree(),
        });
    }
    let grid = FrequencyGrid::uniform(FACTOR_GRID)?;
    let target = gain_defect(t, grid.points())?;
    let min_value = target.iter().copied().fold(f64::INFINITY, f64::min);
    if min_value < -1e-9 {
        return Err(Error::NoFactorization { min_value });
    }
    let m = t.den().degree();
    if m == 0 {
        let v = 1.0 - t.num().leading().powi(2) / t.den().leading().powi(2);
        let gain = v.max(0.0).sqrt();
        return Ok(SpectralFactor {
            m: TransferFunction::constant(gain),
            residual: (gain * gain - v).abs(),
            unit_circle_zeros: Vec::new(),
        });
    }
    let mut p = factorization_polynomial(t);
    let scale = p.max_abs_coeff().max(f64::MIN_POSITIVE);
    let mut forced = 0;
    let t1 = t.evaluate(Complex64::new(1.0, 0.0))?.norm();
    if (1.0 - t1).abs() < 1e-9 {
        for _ in 0..2 {
            let (q, rem) = p.deflate(1.0);
            if rem.abs() > 1e-8 * scale {
                return Err(Error::IllConditioned(format!(
                    "|T(1)| = 1 but 1 - T T~ does not vanish to second order at z = 1 (remainder {rem:e})"
                )));
            }
            p = q;
        }
        forced = 1;
    }
    let roots = p.roots();
    let mut inside = Vec::new();
    let mut circle = Vec::new();
    for r in roots {
        let radius = r.norm();
        if radius < 1.0 - CIRCLE_TOL {
            inside.push(r);
        } else if radius <= 1.0 + CIRCLE_TOL {
            circle.push(r);
        }
    }
    let circle_half = pair_circle_roots(circle)?;
    if inside.len() + circle_half.len() + forced != m {
        return Err(Error::IllConditioned(format!(
            "root split gives {} stable and {} unit-circle roots, expected {m} in total",
            inside.len(),
            circle_half.len() + forced
        )));
    }
    let mut zeros = inside;
    zeros.extend(&circle_half);
    let mut unit_circle_zeros = circle_half;
    if forced == 1 {
        zeros.push(Complex64::new(1.0, 0.0));
        unit_circle_zeros.insert(0, Complex64::new(1.0, 0.0));
    }
    let num = Polynomial::from_roots(&zeros, 1.0);
    let den = t.den().scale(1.0 / t.den().leading());
    // Least-squares gain on the grid: g^2 = <b, f> / <b, b>.
    let b: Vec<f64> = grid
        .points()
        .iter()
        .map(|&w| {
            let z = Complex64::from_polar(1.0, w);
            (num.eval_complex(z) / den.eval_complex(z)).norm_sqr()
        })
        .collect();
    let bf: f64 = b.iter().zip(&target).map(|(x, y)| x * y).sum();
    let bb: f64 = b.iter().map(|x| x * x).sum();
    if bb == 0.0 {
        return Err(Error::IllConditioned("spectral factor vanishes on the grid".into()));
    }
    let g2 = (bf / bb).max(0.0);
    let residual = b
        .iter()
        .zip(&target)
        .map(|(x, y)| (g2 * x - y).abs())
        .fold(0.0, f64::max);
    if residual > 1e-7 {
        return Err(Error::IllConditioned(format!(
            "spectral factor residual {residual:e} exceeds 1e-7"
        )));
    }
    let mtf = TransferFunction::new(num.scale(g2.sqrt()), den)?;
    Ok(SpectralFactor {
        m: mtf,
        residual,
        unit_circle_zeros,
    })
}

/// Keeps one root from each coincident pair on the unit circle.
fn pair_circle_roots(mut circle: Vec<Complex64>) -> Result<Vec<Complex64>> {
    if !circle.len().is_multiple_of(2) {
        return Err(Error::IllConditioned(format!(
            "odd number ({}) of unit-circle roots",
            circle.len()
        )));
    }
    circle.sort_by(|a, b| a.arg().total_cmp(&b.arg()));
    let mut half = Vec::with_capacity(circle.len() / 2);
    for pair in circle.chunks(2) {
        if (pair[0] - pair[1]).norm() > PAIR_TOL {
            return Err(Error::IllConditioned(format!(
                "unit-circle roots {} and {} do not pair",
                pair[0], pair[1]
            )));
        }
        let mid = (pair[0] + pair[1]) * 0.5;
        half.push(mid / mid.norm());
    }
    // Real polynomial: make conjugate partners exact.
    for z in half.iter_mut() {
        if z.im.abs() < PAIR_TOL {
            *z = Complex64::new(z.re.signum(), 0.0);
        }
    }
    Ok(half)
}

/// `(||S/M||^2 - 1) P_d`, cancelling the common zero at `z = 1` exactly.
pub fn limiting_variance(s: &TransferFunction, factor: &SpectralFactor, p_d: f64) -> Result<f64> {
    let one = Complex64::new(1.0, 0.0);
    if let Some(z) = factor.unit_circle_zeros.iter().find(|z| (**z - one).norm() > PAIR_TOL) {
        return Err(Error::NotStringStable {
            max_gain: 1.0,
            omega: z.arg().abs(),
        });
    }
    let mut num = s.num().mul(factor.m.den());
    let mut den = s.den().mul(factor.m.num());
    for _ in 0..factor.unit_circle_zeros.len() {
        let scale = num.max_abs_coeff().max(f64::MIN_POSITIVE);
        let (qn, rn) = num.deflate(1.0);
        if rn.abs() > 1e-8 * scale {
            return Err(Error::CancellationFailure { remainder: rn });
        }
        let (qd, _) = den.deflate(1.0);
        num = qn;
        den = qd;
    }
    let ratio = TransferFunction::new(num, den)?;
    Ok((h2_norm_squared(&ratio)? - 1.0) * p_d)
}

/// Peak of `|T|` over the positive grid frequencies and the smallest
/// value of `(1 - |T|^2) / |1 - e^{jw}|^2` there.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GainScan {
    pub peak: Peak,
    pub hinf: f64,
    pub scaled_margin: f64,
}

/// Gain-condition decision threshold on the scaled margin.
pub const GAIN_TOL: f64 = 1e-9;

impl GainScan {
    /// `|T(e^{jw})| < 1` for every `w > 0`.
    pub fn gain_condition(&self) -> bool {
        self.scaled_margin > GAIN_TOL
    }
}

pub fn gain_scan(t: &TransferFunction, grid: &FrequencyGrid) -> Result<GainScan> {
    let mag = |w: f64| t.freq_response(w).map(|v| v.norm()).unwrap_or(f64::INFINITY);
    let peak = refine_extremum(grid.positive(), mag);
    let hinf = peak.value.max(mag(0.0));
    let scaled = |w: f64| {
        let v = t.freq_response(w).map(|v| v.norm_sqr()).unwrap_or(f64::INFINITY);
        -(1.0 - v) / (2.0 - 2.0 * w.cos())
    };
    let worst = refine_extremum(grid.positive(), scaled);
    Ok(GainScan {
        peak,
        hinf,
        scaled_margin: -worst.value,
    })
}

/// Sum of the series `||HT||^2 P_d + P_d sum_{i>=1} ||T^i S||^2`.
///
/// The terms are integrated on a uniform grid and decay like a power of
/// `i` when `|T(1)| = 1`, so the tail is extrapolated from the observed
/// power law. The totals at successive doublings of the term count are
/// further accelerated with Aitken's delta-squared; summation stops when
/// either the plain or the accelerated total moves by less than `rel_tol`
/// (or the tail itself is that small).
pub fn limiting_variance_series(
    t: &TransferFunction,
    s: &TransferFunction,
    h: &TransferFunction,
    p_d: f64,
    rel_tol: f64,
) -> Result<f64> {
    t.require_stable()?;
    let grid = FrequencyGrid::uniform(DEFAULT_GRID_SIZE)?;
    let t2: Vec<f64> = grid
        .points()
        .iter()
        .map(|&w| t.freq_response(w).map(|v| v.norm_sqr()))
        .collect::<Result<_>>()?;
    if let Some((j, v)) = t2
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, v)| **v > (1.0 + GAIN_TOL).powi(2))
    {
        return Err(Error::NotStringStable {
            max_gain: v.sqrt(),
            omega: grid.points()[j],
        });
    }
    let base = h2_norm_squared(&h.series(t))?;
    if p_d == 0.0 {
        return Ok(0.0);
    }
    // (|T|^2, |S|^2 |T|^(2i), trapezoid weight) per grid point. Since
    // |T| <= 1, points that fall far below the peak stay negligible and are
    // dropped as the integrand concentrates around the peaks of |T|.
    let m = grid.count() - 1;
    let mut active: Vec<(f64, f64, f64)> = grid
        .points()
        .iter()
        .zip(&t2)
        .enumerate()
        .map(|(j, (&om, &tj))| {
            let weight = if j == 0 || j == m { 0.5 } else { 1.0 } / m as f64;
            s.freq_response(om).map(|v| (tj, v.norm_sqr(), weight))
        })
        .collect::<Result<_>>()?;
    let mut terms = Vec::new();
    let mut sum = base;
    let mut check_at = 16;
    let mut estimates = Vec::new();
    let mut accelerated = f64::NAN;
    let mut tail = f64::INFINITY;
    while terms.len() < MAX_SERIES_TERMS {
        let mut term = 0.0;
        for (tj, wj, weight) in active.iter_mut() {
            *wj *= *tj;
            term += *wj * *weight;
        }
        terms.push(term);
        sum += term;
        if terms.len() == check_at {
            check_at *= 2;
            let peak = active.iter().fold(0.0f64, |acc, e| acc.max(e.1));
            active.retain(|e| e.1 >= PRUNE_REL * peak);
            tail = tail_estimate(&terms);
            let estimate = sum + tail;
            if tail <= rel_tol * sum {
                return Ok(estimate * p_d);
            }
            let previous = estimates.last().copied().unwrap_or(f64::NAN);
            estimates.push(estimate);
            let next = aitken(&estimates).unwrap_or(estimate);
            if (estimate - previous).abs() <= rel_tol * estimate || (next - accelerated).abs() <= rel_tol * next {
                return Ok(next * p_d);
            }
            accelerated = next;
        }
    }
    Err(Error::SlowConvergence {
        terms: terms.len(),
        tail,
    })
}

/// Aitken's delta-squared limit of the last three estimates. The error of
/// the extrapolated totals shrinks by a near-constant factor per doubling
/// of the term count, which is the case this removes.
fn aitken(e: &[f64]) -> Option<f64> {
    let [a, b, c] = e.get(e.len().checked_sub(3)?..)? else {
        return None;
    };
    let (d1, d2) = (b - a, c - b);
    let denom = d2 - d1;
    if denom == 0.0 || d1 * d2 <= 0.0 {
        return None;
    }
    Some(c - d2 * d2 / denom)
}

/// Remainder `sum_{k>n} t_k` for terms behaving like `c k^-p`.
fn tail_estimate(terms: &[f64]) -> f64 {
    let n = terms.len();
    let tn = terms[n - 1];
    let th = terms[n / 2 - 1];
    if tn <= 0.0 {
        return 0.0;
    }
    if tn < th * 1e-12 {
        return tn;
    }
    let p = (th / tn).ln() / ((n as f64) / (n / 2) as f64).ln();
    if p <= 1.05 {
        return f64::INFINITY;
    }
    let nf = n as f64;
    // Geometric decay shows up as a very large apparent exponent.
    let power_tail = tn * (nf / (p - 1.0) - 0.5 + p / (12.0 * nf));
    power_tail.max(0.0)
}

/// Impulse response at lag zero of `W` (the constant term of its
/// expansion in `z^-1`).
pub fn lag_zero(w: &TransferFunction) -> f64 {
    if w.is_strictly_proper() {
        0.0
    } else {
        w.num().coeff(w.den().degree()) / w.den().leading()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::platoon::headway_filter;
    use approx::assert_relative_eq;

    fn paper_loop(h: f64) -> (TransferFunction, TransferFunction, TransferFunction) {
        let g = TransferFunction::from_coeffs(&[1.0], &[1.0, -2.0, 1.0]).unwrap();
        let k = TransferFunction::from_coeffs(&[1.35 / (1.0 + h), 0.0], &[1.0, 0.89]).unwrap();
        let hf = headway_filter(h);
        let t = crate::tf::close_loop(&g, &k, &hf).unwrap();
        let s = crate::tf::sensitivity(&t, &hf);
        (t, s, hf)
    }

    #[test]
    fn constant_factor() {
        let t = TransferFunction::from_coeffs(&[0.6], &[1.0, 0.0]).unwrap();
        let f = spectral_factorize(&t).unwrap();
        let v = f.m.evaluate(Complex64::new(0.3, 0.4)).unwrap();
        assert_relative_eq!(v.re, 0.8, epsilon = 1e-12);
        assert!(v.im.abs() < 1e-12);
        let f0 = spectral_factorize(&TransferFunction::zero()).unwrap();
        assert_relative_eq!(f0.m.evaluate(Complex64::new(1.0, 0.0)).unwrap().re, 1.0);
    }

    #[test]
    fn paper_factor_vanishes_at_one() {
        let (t, _, _) = paper_loop(3.2);
        let f = spectral_factorize(&t).unwrap();
        assert!(f.residual <= 1e-7);
        assert_eq!(f.unit_circle_zeros[0], Complex64::new(1.0, 0.0));
        assert!(f.m.evaluate(Complex64::new(1.0, 0.0)).unwrap().norm() < 1e-12);
        assert!(f.m.is_stable());
    }

    #[test]
    fn string_unstable_has_no_factor() {
        let (t, _, _) = paper_loop(2.4);
        assert!(matches!(spectral_factorize(&t), Err(Error::NoFactorization { .. })));
        let err = limiting_variance_series(&t, &paper_loop(2.4).1, &headway_filter(2.4), 0.6, 1e-9);
        assert!(matches!(err, Err(Error::NotStringStable { .. })));
    }

    #[test]
    fn first_order_series_closed_form() {
        // T = a/z, H = 1, S = 1 - a/z: ||T||^2 = a^2 and
        // ||T^i S||^2 = a^(2i) (1 + a^2), so the sum is a^2 + (1 + a^2) a^2 / (1 - a^2).
        let a: f64 = 0.5;
        let t = TransferFunction::from_coeffs(&[a], &[1.0, 0.0]).unwrap();
        let s = TransferFunction::from_coeffs(&[1.0, -a], &[1.0, 0.0]).unwrap();
        let h = TransferFunction::one();
        let got = limiting_variance_series(&t, &s, &h, 2.0, 1e-12).unwrap();
        let want = 2.0 * (a * a + (1.0 + a * a) * a * a / (1.0 - a * a));
        assert_relative_eq!(got, want, max_relative = 1e-10);
        assert_eq!(limiting_variance_series(&t, &s, &h, 0.0, 1e-12).unwrap(), 0.0);
    }

    #[test]
    fn ladder_first_entries() {
        let (t, s, h) = paper_loop(3.2);
        let l = variance_ladder(&t, &s, &h, 0.6, 3).unwrap();
        let ht = h2_norm_squared(&h.series(&t)).unwrap();
        let ts = h2_norm_squared(&t.series(&s)).unwrap();
        let tts = h2_norm_squared(&t.series(&t).series(&s)).unwrap();
        assert_relative_eq!(l[0], ht * 0.6, max_relative = 1e-12);
        assert_relative_eq!(l[1], (ht + ts) * 0.6, max_relative = 1e-10);
        assert_relative_eq!(l[2], (ht + ts + tts) * 0.6, max_relative = 1e-10);
        assert_eq!(variance_ladder(&t, &s, &h, 0.0, 4).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn psd_flat_at_zero_frequency() {
        let (t, s, h) = paper_loop(3.2);
        let g = FrequencyGrid::uniform(512).unwrap();
        let l = psd_ladder(&t, &s, &h, 0.6, 4, &g).unwrap();
        for i in 2..=4 {
            assert_relative_eq!(l.phi[i - 1][0], l.phi[0][0], max_relative = 1e-12);
        }
    }

    #[test]
    fn gain_scan_verdicts() {
        let g = FrequencyGrid::uniform(DEFAULT_GRID_SIZE).unwrap();
        let stable = gain_scan(&paper_loop(3.2).0, &g).unwrap();
        assert!(stable.gain_condition());
        assert!(stable.peak.value < 1.0);
        let unstable = gain_scan(&paper_loop(2.4).0, &g).unwrap();
        assert!(!unstable.gain_condition());
        assert!(unstable.peak.value > 1.0 && unstable.peak.omega > 0.0);
    }

    #[test]
    fn paper_limit_matches_series() {
        let (t, s, h) = paper_loop(3.2);
        let f = spectral_factorize(&t).unwrap();
        let closed = limiting_variance(&s, &f, 0.6).unwrap();
        let series = limiting_variance_series(&t, &s, &h, 0.6, 1e-8).unwrap();
        assert_relative_eq!(closed, series, max_relative = 1e-6);
    }
}
