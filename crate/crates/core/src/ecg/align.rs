use super::EcgTrace;
use crate::error::{Error, Result};

/// Alignment search half-width, ms.
pub const MAX_SHIFT_MS: f64 = 50.0;

/// Value of `sim` at sample `k` of the reference grid shifted by `s` samples;
/// zero outside the simulated range.
fn sample(sim: &EcgTrace, lead: usize, offset: i64, k: usize, s: i64) -> f64 {
    let j = k as i64 + offset + s;
    if j < 0 {
        return 0.0;
    }
    sim.leads[lead].get(j as usize).copied().unwrap_or(0.0)
}

/// Finds the integer shift (in samples of `dt`, within +-50 ms) maximising
/// the cross-correlation summed over leads on the reference QRS window, then
/// returns `(shift_ms, y)` with `y` the time- and lead-averaged squared
/// difference (trapezoid). A positive shift means `sim` lags `ref`.
pub fn align_and_loss(reference: &EcgTrace, sim: &EcgTrace) -> Result<(f64, f64)> {
    if (reference.dt - sim.dt).abs() > 1e-9 * reference.dt {
        return Err(Error::Config(format!("sampling mismatch: {} vs {} ms", reference.dt, sim.dt)));
    }
    let (a, b) = reference.qrs_range().ok_or_else(|| Error::Config("empty QRS window in reference".into()))?;
    let dt = reference.dt;
    let offset = ((reference.t0 - sim.t0) / dt).round() as i64;
    let max_s = (MAX_SHIFT_MS / dt + 1e-9).floor() as i64;

    let mut best = (f64::NEG_INFINITY, 0i64);
    // visit 0, -1, 1, -2, 2, .. so ties prefer the smallest |shift|
    for m in 0..=2 * max_s {
        let s = if m % 2 == 0 { -(m / 2) } else { m / 2 + 1 };
        let mut cc = 0.0;
        for l in 0..12 {
            for k in a..=b {
                cc += reference.leads[l][k] * sample(sim, l, offset, k, s);
            }
        }
        if cc > best.0 {
            best = (cc, s);
        }
    }
    let s = best.1;

    let mut integral = 0.0;
    for k in a..=b {
        let w = if k == a || k == b { 0.5 } else { 1.0 };
        let mut sq = 0.0;
        for l in 0..12 {
            let d = reference.leads[l][k] - sample(sim, l, offset, k, s);
            sq += d * d;
        }
        integral += w * sq;
    }
    let y = integral / ((b - a) as f64 * 12.0);
    Ok((s as f64 * dt, y))
}

/// Loss of `sim` against every beat.
pub fn beat_errors(beats: &[EcgTrace], sim: &EcgTrace) -> Result<Vec<f64>> {
    if beats.len() < 2 {
        return Err(Error::Config(format!("at least two beats required, got {}", beats.len())));
    }
    beats.iter().map(|b| align_and_loss(b, sim).map(|(_, y)| y)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump(shift: f64) -> EcgTrace {
        let leads = (0..12)
            .map(|l| {
                (0..200)
                    .map(|k| {
                        let t = k as f64 - 80.0 - shift;
                        (1.0 + l as f64 * 0.1) * (-t * t / (30.0 + l as f64)).exp() * (t * 0.05 + l as f64).cos()
                    })
                    .collect()
            })
            .collect();
        EcgTrace::new(1.0, 0.0, leads).unwrap().with_qrs(40.0, 100.0)
    }

    #[test]
    fn identity_has_zero_loss() {
        let r = bump(0.0);
        assert_eq!(align_and_loss(&r, &r).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn pure_delay_is_recovered() {
        let (s, y) = align_and_loss(&bump(0.0), &bump(12.0)).unwrap();
        assert_eq!(s, 12.0);
        assert!(y < 1e-12);
    }

    #[test]
    fn dt_mismatch_errors() {
        let mut other = bump(0.0);
        other.dt = 2.0;
        assert!(align_and_loss(&bump(0.0), &other).is_err());
    }
}
