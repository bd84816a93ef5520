use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::rao::{Dof, TransferFunction};
use super::spectrum::{component_amplitudes, FrequencyGrid};
use super::GRAVITY;
use crate::error::{arg, Error, Result};

/// Parametric, unidirectional sea state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeaState {
    /// Significant wave height, m.
    pub hs: f64,
    /// Zero up-crossing period, s.
    pub tz: f64,
    /// Relative wave direction in degrees; 180 is head seas.
    pub beta: f64,
}

impl SeaState {
    pub fn new(hs: f64, tz: f64, beta: f64) -> Result<Self> {
        let s = Self { hs, tz, beta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hs > 0.0 && self.hs.is_finite() && self.tz > 0.0 && self.tz.is_finite()) {
            return Err(Error::Domain(format!("hs and tz must be positive, got {self:?}")));
        }
        if !(0.0..360.0).contains(&self.beta) {
            return Err(Error::Domain(format!("beta must lie in [0, 360), got {}", self.beta)));
        }
        Ok(())
    }
}

/// ω_e = ω − ω²U/g·cos β.
pub fn encounter_frequency(omega: f64, speed: f64, beta: f64) -> f64 {
    omega - omega * omega * speed / GRAVITY * cos_deg(beta)
}

/// Cosine of an angle in degrees, exactly zero in beam seas.
fn cos_deg(beta: f64) -> f64 {
    let b = beta.rem_euclid(360.0);
    if b == 90.0 || b == 270.0 { 0.0 } else { b.to_radians().cos() }
}

/// Discretisation and sampling of one synthesized record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignalParams {
    pub grid_size: usize,
    pub omega_min: f64,
    pub omega_max: f64,
    /// Seconds; the record spans `0..=duration`.
    pub duration: f64,
    pub sample_rate: f64,
}

impl Default for SignalParams {
    fn default() -> Self {
        Self { grid_size: 500, omega_min: 0.25, omega_max: 4.0, duration: 300.0, sample_rate: 5.0 }
    }
}

impl SignalParams {
    pub fn n_samples(&self) -> usize {
        (self.duration * self.sample_rate).round() as usize + 1
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0 && self.duration * self.sample_rate >= 1.0 && self.duration.is_finite()) {
            return arg(format!(
                "duration·sample_rate must be at least 1, got {}·{}",
                self.duration, self.sample_rate
            ));
        }
        Ok(())
    }
}

/// One random-phase realisation of a sea state.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveComponents {
    pub omega: Vec<f64>,
    pub amp: Vec<f64>,
    pub phase: Vec<f64>,
    pub omega_e: Vec<f64>,
    /// Deep-water wave numbers ω²/g.
    pub wave_number: Vec<f64>,
}

impl WaveComponents {
    pub fn realize<R: Rng + ?Sized>(state: &SeaState, speed: f64, params: &SignalParams, rng: &mut R) -> Result<Self> {
        state.validate()?;
        let grid = FrequencyGrid::build(params.grid_size, params.omega_min, params.omega_max, rng)?;
        let amp = component_amplitudes(&grid, state.hs, state.tz)?;
        let phase = (0..grid.len()).map(|_| rng.random_range(0.0..TAU)).collect();
        let omega_e = grid.centers.iter().map(|&w| encounter_frequency(w, speed, state.beta)).collect();
        let wave_number = grid.centers.iter().map(|&w| w * w / GRAVITY).collect();
        Ok(Self { omega: grid.centers, amp, phase, omega_e, wave_number })
    }

    /// Wave elevation at the origin, ζ(0, t) = Σ A cos(ωt + ε).
    pub fn elevation(&self, t: f64) -> f64 {
        self.omega.iter().zip(&self.amp).zip(&self.phase).map(|((w, a), e)| a * (w * t + e).cos()).sum()
    }

    /// Heave, pitch and roll time-series at `times`.
    ///
    /// Roll changes sign with the side the waves come from: a port-side sea
    /// heels the ship the other way, which amplitude-only operators cannot
    /// express. Without it, headings β and 360°−β would produce identical
    /// records.
    pub fn responses(&self, tf: &dyn TransferFunction, beta: f64, times: &[f64]) -> [Vec<f64>; 3] {
        let side = if beta.to_radians().sin() < 0.0 { -1.0 } else { 1.0 };
        let gains: Vec<(usize, [f64; 3])> = self
            .omega_e
            .iter()
            .zip(&self.amp)
            .map(|(&we, &a)| {
                let g = Dof::ALL.map(|d| a * tf.amplitude(d, we.abs(), beta));
                [g[0], g[1], side * g[2]]
            })
            .enumerate()
            .filter(|(_, g)| g.iter().any(|&v| v != 0.0))
            .collect();
        let mut out = [vec![0.0; times.len()], vec![0.0; times.len()], vec![0.0; times.len()]];
        for (j, &t) in times.iter().enumerate() {
            let mut acc = [0.0; 3];
            for &(i, g) in &gains {
                let c = (self.omega_e[i] * t + self.phase[i]).cos();
                for d in 0..3 {
                    acc[d] += g[d] * c;
                }
            }
            for d in 0..3 {
                out[d][j] = acc[d];
            }
        }
        out
    }
}

/// Three-channel motion record with its label.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionRecord {
    /// Heave (m), pitch (deg), roll (deg).
    pub channels: [Vec<f64>; 3],
    pub sample_rate: f64,
    pub label: SeaState,
    pub speed: f64,
    pub seed: u64,
}

impl MotionRecord {
    pub fn n_samples(&self) -> usize {
        self.channels[0].len()
    }
}

/// Synthesize heave, pitch and roll for one sea state. The phases are
/// shared across DOFs; the record is a pure function of its arguments.
pub fn synthesize_motions(
    state: &SeaState,
    speed: f64,
    tf: &dyn TransferFunction,
    params: &SignalParams,
    seed: u64,
) -> Result<MotionRecord> {
    params.validate()?;
    if !(speed >= 0.0 && speed.is_finite()) {
        return arg(format!("speed must be nonnegative, got {speed}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let comps = WaveComponents::realize(state, speed, params, &mut rng)?;
    let times: Vec<f64> = (0..params.n_samples()).map(|j| j as f64 / params.sample_rate).collect();
    let channels = comps.responses(tf, state.beta, &times);
    Ok(MotionRecord { channels, sample_rate: params.sample_rate, label: *state, speed, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seaway::{ConstantRao, SurrogateRao};

    #[test]
    fn encounter_hand_values() {
        assert!((encounter_frequency(0.6, 8.3295, 180.0) - 0.905_669).abs() < 1e-4);
        assert!((encounter_frequency(0.6, 8.3295, 0.0) - 0.294_331).abs() < 1e-4);
        for w in [0.1, 0.6, 1.3, 3.9] {
            assert_eq!(encounter_frequency(w, 8.3295, 90.0), w);
            assert_eq!(encounter_frequency(w, 8.3295, 270.0), w);
        }
    }

    #[test]
    fn sea_state_domain() {
        assert!(SeaState::new(3.0, 6.0, 0.0).is_ok());
        assert!(matches!(SeaState::new(3.0, 6.0, 360.0), Err(Error::Domain(_))));
        assert!(matches!(SeaState::new(0.0, 6.0, 10.0), Err(Error::Domain(_))));
        assert!(matches!(SeaState::new(1.0, -6.0, 10.0), Err(Error::Domain(_))));
    }

    #[test]
    fn default_record_length() {
        assert_eq!(SignalParams::default().n_samples(), 1501);
    }

    #[test]
    fn unit_rao_reproduces_elevation() {
        let st = SeaState::new(2.0, 7.0, 30.0).unwrap();
        let p = SignalParams { duration: 20.0, ..Default::default() };
        let rec = synthesize_motions(&st, 0.0, &ConstantRao([1.0, 0.0, 0.0]), &p, 5).unwrap();
        let comps = WaveComponents::realize(&st, 0.0, &p, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        for (j, &v) in rec.channels[0].iter().enumerate() {
            assert!((v - comps.elevation(j as f64 / 5.0)).abs() < 1e-9);
        }
        assert!(rec.channels[1].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn surrogate_roll_vanishes_in_following_seas() {
        let st = SeaState::new(3.0, 6.0, 0.0).unwrap();
        let rec = synthesize_motions(&st, 8.3295, &SurrogateRao, &SignalParams::default(), 1).unwrap();
        assert!(rec.channels[2].iter().all(|&v| v == 0.0));
        assert!(rec.channels.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn elevation_variance_near_m0() {
        let st = SeaState::new(3.0, 6.0, 150.0).unwrap();
        let rec = synthesize_motions(&st, 8.3295, &ConstantRao([1.0, 1.0, 1.0]), &SignalParams::default(), 11).unwrap();
        let x = &rec.channels[0];
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64;
        assert!((var / 0.5625 - 1.0).abs() < 0.10, "{var}");
    }

    #[test]
    fn mirrored_headings_differ_only_in_roll_sign() {
        let p = SignalParams { duration: 30.0, ..Default::default() };
        let a = synthesize_motions(&SeaState::new(3.0, 6.0, 60.0).unwrap(), 8.3295, &SurrogateRao, &p, 4).unwrap();
        let b = synthesize_motions(&SeaState::new(3.0, 6.0, 300.0).unwrap(), 8.3295, &SurrogateRao, &p, 4).unwrap();
        for (x, y) in a.channels[0].iter().zip(&b.channels[0]) {
            assert!((x - y).abs() < 1e-9);
        }
        for (x, y) in a.channels[2].iter().zip(&b.channels[2]) {
            assert!((x + y).abs() < 1e-9);
        }
    }

    #[test]
    fn same_seed_same_record() {
        let st = SeaState::new(4.0, 8.0, 200.0).unwrap();
        let p = SignalParams { duration: 10.0, ..Default::default() };
        let a = synthesize_motions(&st, 8.3295, &SurrogateRao, &p, 99).unwrap();
        let b = synthesize_motions(&st, 8.3295, &SurrogateRao, &p, 99).unwrap();
        assert_eq!(a, b);
    }
}
