//! Linear-rate estimation from a gap sequence.

#[allow(unused_imports)]
use num_traits::Float;

use super::DiagError;

/// Minimum number of points a fit uses.
pub const MIN_FIT_POINTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateFit {
    /// `exp(slope)` of the least-squares line through `(k, ln gap_k)`.
    pub rho: f64,
    pub r2: f64,
    /// First index used.
    pub start: usize,
    pub points: usize,
}

/// Length of the prefix of `gaps` above the numerical floor
/// `1e3 · ε · gap_0`.
fn usable_len(gaps: &[f64]) -> usize {
    let Some(&g0) = gaps.first() else {
        return 0;
    };
    let floor = 1e3 * f64::EPSILON * g0;
    gaps.iter()
        .take_while(|&&g| g > floor && g > 0.0 && g.is_finite())
        .count()
}

/// Fits `ln gap_k ≈ a + k ln ρ` over `burn_in ≤ k < K`, where `K` ends the
/// prefix of gaps above `1e3 · ε · gap_0`.
pub fn rate_fit(gaps: &[f64], burn_in: usize) -> Result<RateFit, DiagError> {
    let end = usable_len(gaps);
    let n = end.saturating_sub(burn_in);
    if n < MIN_FIT_POINTS {
        return Err(DiagError::TooFewPoints {
            needed: MIN_FIT_POINTS,
            got: n,
        });
    }
    let nf = n as f64;
    let (mut sk, mut sy) = (0.0, 0.0);
    for (k, g) in gaps.iter().enumerate().take(end).skip(burn_in) {
        sk += k as f64;
        sy += g.ln();
    }
    let (mk, my) = (sk / nf, sy / nf);
    let (mut skk, mut sky, mut syy) = (0.0, 0.0, 0.0);
    for (k, g) in gaps.iter().enumerate().take(end).skip(burn_in) {
        let dk = k as f64 - mk;
        let dy = g.ln() - my;
        skk += dk * dk;
        sky += dk * dy;
        syy += dy * dy;
    }
    let slope = sky / skk;
    let ss_res = (syy - slope * sky).max(0.0);
    let r2 = if syy <= 1e-24 * nf * (1.0 + my * my) {
        1.0
    } else {
        1.0 - ss_res / syy
    };
    Ok(RateFit {
        rho: slope.exp(),
        r2,
        start: burn_in,
        points: n,
    })
}

/// [`rate_fit`] with the burn-in set to `max(10, fraction · K)` where `K` is
/// the usable prefix length, so that the transient before the asymptotic
/// rate is dropped.
pub fn rate_fit_tail(gaps: &[f64], fraction: f64) -> Result<RateFit, DiagError> {
    let end = usable_len(gaps);
    let burn = ((fraction * end as f64).floor() as usize).max(MIN_FIT_POINTS);
    rate_fit(gaps, burn)
}
