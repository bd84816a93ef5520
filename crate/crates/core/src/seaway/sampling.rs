use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::Rng;

use super::synth::SeaState;
use super::GRAVITY;
use crate::error::{arg, Error, Result};

pub const HS_RANGE: (f64, f64) = (0.5, 10.5);
pub const TZ_RANGE: (f64, f64) = (3.5, 9.6);
/// Half-open: 360 is never drawn.
pub const BETA_RANGE: (f64, f64) = (0.0, 360.0);

/// Mean wave steepness 2πHs/(gTz²).
pub fn steepness(hs: f64, tz: f64) -> f64 {
    TAU * hs / (GRAVITY * tz * tz)
}

/// Breaking limit on steepness: 1/10 up to Tz = 6 s, 1/15 from 12 s,
/// linear in between.
pub fn steepness_limit(tz: f64) -> Result<f64> {
    if !(tz > 0.0) {
        return Err(Error::Domain(format!("tz must be positive, got {tz}")));
    }
    Ok(if tz <= 6.0 {
        0.1
    } else if tz >= 12.0 {
        1.0 / 15.0
    } else {
        0.1 + (tz - 6.0) / 6.0 * (1.0 / 15.0 - 0.1)
    })
}

pub fn steepness_ok(state: &SeaState) -> bool {
    steepness_limit(state.tz).is_ok_and(|lim| steepness(state.hs, state.tz) <= lim)
}

/// Latin hypercube over the (Hs, Tz, β) box: one point per stratum on each
/// axis, strata paired by independent random permutations.
pub fn lhs_sample<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<SeaState>> {
    if n < 1 {
        return arg("Latin hypercube needs at least one sample");
    }
    let mut axis = |(lo, hi): (f64, f64)| {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        strata
            .into_iter()
            .map(|k| {
                let v = lo + (hi - lo) * (k as f64 + rng.random::<f64>()) / n as f64;
                // guard the open upper end against rounding
                if v < hi { v } else { hi - (hi - lo) * f64::EPSILON }
            })
            .collect::<Vec<_>>()
    };
    let hs = axis(HS_RANGE);
    let tz = axis(TZ_RANGE);
    let beta = axis(BETA_RANGE);
    Ok((0..n).map(|i| SeaState { hs: hs[i], tz: tz[i], beta: beta[i] }).collect())
}
