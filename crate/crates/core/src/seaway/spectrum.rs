use rand::Rng;

use crate::error::{arg, Error, Result};

/// Two-parameter Bretschneider spectral density S(ω) in m²·s.
pub fn bretschneider_density(omega: f64, hs: f64, tz: f64) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(Error::Domain(format!("spectral density needs omega > 0, got {omega}")));
    }
    check_hs_tz(hs, tz)?;
    Ok(density(omega, hs, tz))
}

/// Unchecked closed form, shared with the grid code.
pub(crate) fn density(omega: f64, hs: f64, tz: f64) -> f64 {
    let tz4 = tz.powi(4);
    let w4 = omega.powi(4);
    124.0 * hs * hs / tz4 / (w4 * omega) * (-496.0 / (tz4 * w4)).exp()
}

/// Zeroth spectral moment. The density integrates to Hs²/16 for every Tz.
pub fn spectrum_m0(hs: f64, tz: f64) -> Result<f64> {
    check_hs_tz(hs, tz)?;
    Ok(hs * hs / 16.0)
}

fn check_hs_tz(hs: f64, tz: f64) -> Result<()> {
    if !(hs > 0.0 && hs.is_finite()) || !(tz > 0.0 && tz.is_finite()) {
        return Err(Error::Domain(format!("hs and tz must be positive, got hs={hs}, tz={tz}")));
    }
    Ok(())
}

/// Non-equidistant partition of a frequency band into `n` intervals.
///
/// Interior boundaries start equispaced and are jittered by up to ±0.45 of
/// the nominal spacing, so intervals can never swap or collapse. Each
/// component frequency is drawn uniformly inside its interval.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    pub boundaries: Vec<f64>,
    pub centers: Vec<f64>,
    pub widths: Vec<f64>,
}

impl FrequencyGrid {
    pub fn build<R: Rng + ?Sized>(n: usize, omega_min: f64, omega_max: f64, rng: &mut R) -> Result<Self> {
        if n < 2 {
            return arg(format!("frequency grid needs at least 2 intervals, got {n}"));
        }
        if !(omega_min >= 0.0 && omega_min < omega_max && omega_max.is_finite()) {
            return arg(format!("invalid frequency range [{omega_min}, {omega_max}]"));
        }
        let spacing = (omega_max - omega_min) / n as f64;
        let mut boundaries = Vec::with_capacity(n + 1);
        boundaries.push(omega_min);
        for i in 1..n {
            let jitter = rng.random_range(-0.45..=0.45) * spacing;
            boundaries.push(omega_min + i as f64 * spacing + jitter);
        }
        boundaries.push(omega_max);
        let widths: Vec<f64> = boundaries.windows(2).map(|w| w[1] - w[0]).collect();
        let centers = boundaries
            .windows(2)
            .map(|w| {
                let c = rng.random_range(w[0]..w[1]);
                // the lowest interval may start at 0 where the density is undefined
                if c > 0.0 { c } else { 0.5 * (w[0] + w[1]) }
            })
            .collect();
        Ok(Self { boundaries, centers, widths })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }
}

/// Component amplitudes from ½A² = S(ω)Δω.
pub fn component_amplitudes(grid: &FrequencyGrid, hs: f64, tz: f64) -> Result<Vec<f64>> {
    if hs == 0.0 {
        return Ok(vec![0.0; grid.len()]);
    }
    check_hs_tz(hs, tz)?;
    grid.centers
        .iter()
        .zip(&grid.widths)
        .map(|(&w, &dw)| Ok((2.0 * bretschneider_density(w, hs, tz)? * dw).sqrt()))
        .collect()
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let inner: f64 = (1..n).map(|i| f(a + i as f64 * h)).sum();
        h * (0.5 * f(a) + inner + 0.5 * f(b))
    }

    #[test]
    fn density_hand_value() {
        let s = bretschneider_density(1.1158, 3.0, 4.0).unwrap();
        // 124·9/256 · 1.1158⁻⁵ · exp(−496/(256·1.1158⁴))
        let want = 124.0 * 9.0 / 256.0 * 1.1158f64.powi(-5) * (-496.0 / (256.0 * 1.1158f64.powi(4))).exp();
        assert!((s - want).abs() < 1e-12);
        assert!((s - 0.7222).abs() < 5e-4, "{s}");
    }

    #[test]
    fn density_scales_with_hs_squared() {
        let a = bretschneider_density(0.9, 2.0, 7.0).unwrap();
        let b = bretschneider_density(0.9, 4.0, 7.0).unwrap();
        assert!((b / a - 4.0).abs() < 1e-12);
    }

    #[test]
    fn density_rejects_nonpositive_omega() {
        assert!(matches!(bretschneider_density(0.0, 3.0, 4.0), Err(Error::Domain(_))));
        assert!(matches!(bretschneider_density(-1.0, 3.0, 4.0), Err(Error::Domain(_))));
    }

    #[test]
    fn m0_closed_form() {
        assert_eq!(spectrum_m0(3.0, 4.0).unwrap(), 0.5625);
        assert_eq!(spectrum_m0(4.0, 9.0).unwrap(), 1.0);
        let q = trapezoid(|w| density(w, 3.0, 4.0), 0.01, 20.0, 200_000);
        assert!((q / 0.5625 - 1.0).abs() < 5e-3, "{q}");
    }

    #[test]
    fn grid_partitions_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = FrequencyGrid::build(4, 0.0, 4.0, &mut rng).unwrap();
        assert_eq!(g.boundaries[0], 0.0);
        assert_eq!(g.boundaries[4], 4.0);
        let total: f64 = g.widths.iter().sum();
        assert!((total - 4.0).abs() < 1e-12);
        for (i, &c) in g.centers.iter().enumerate() {
            assert!(c > g.boundaries[i] && c < g.boundaries[i + 1]);
        }
    }

    #[test]
    fn grid_depends_on_seed() {
        let a = FrequencyGrid::build(50, 0.25, 4.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = FrequencyGrid::build(50, 0.25, 4.0, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_ne!(a.boundaries[1..50], b.boundaries[1..50]);
    }

    #[test]
    fn grid_rejects_bad_arguments() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(FrequencyGrid::build(1, 0.25, 4.0, &mut rng), Err(Error::Argument(_))));
        assert!(matches!(FrequencyGrid::build(10, 4.0, 0.25, &mut rng), Err(Error::Argument(_))));
    }

    #[test]
    fn single_interval_amplitude() {
        // S = 0.5 at the center of a 0.1-wide interval gives A = sqrt(0.1).
        let w: f64 = 1.0;
        let hs = (0.5 / density(w, 1.0, 5.0)).sqrt();
        let g = FrequencyGrid { boundaries: vec![0.95, 1.05], centers: vec![w], widths: vec![0.1] };
        let a = component_amplitudes(&g, hs, 5.0).unwrap();
        assert!((a[0] - 0.1f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn riemann_sum_matches_m0() {
        let g = FrequencyGrid::build(500, 0.25, 4.0, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let a = component_amplitudes(&g, 3.0, 6.0).unwrap();
        let var: f64 = a.iter().map(|x| 0.5 * x * x).sum();
        assert!((var / 0.5625 - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn zero_hs_gives_zero_amplitudes() {
        let g = FrequencyGrid::build(10, 0.25, 4.0, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert!(component_amplitudes(&g, 0.0, 6.0).unwrap().iter().all(|&a| a == 0.0));
    }
}
