use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{data, Error, Result};

/// Motion degrees of freedom, in channel order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dof {
    Heave,
    Pitch,
    Roll,
}

impl Dof {
    pub const ALL: [Dof; 3] = [Dof::Heave, Dof::Pitch, Dof::Roll];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Dof::Heave => "heave",
            Dof::Pitch => "pitch",
            Dof::Roll => "roll",
        }
    }
}

/// Amplitude of a response amplitude operator, |Φ(ω_e, β)|.
pub trait TransferFunction: Sync {
    /// `omega_e` is nonnegative; `beta` is in degrees.
    fn amplitude(&self, dof: Dof, omega_e: f64, beta: f64) -> f64;
}

/// Closed-form stand-in for a hydrodynamic solver: low-pass heave and
/// pitch bands and a lightly damped roll resonance.
#[derive(Debug, Clone, Copy, Default)]
pub struct SurrogateRao;

pub fn surrogate_rao(dof: Dof, omega_e: f64, beta: f64) -> f64 {
    fn band(r: f64) -> f64 {
        let r2 = r * r;
        r2 / (1.0 + r2 * r2)
    }
    let b = beta.to_radians();
    match dof {
        Dof::Heave => band(omega_e / 0.9),
        Dof::Pitch => 1.4 * b.cos().abs() * band(omega_e / 1.1),
        Dof::Roll => {
            let r = omega_e / 0.55;
            let r2 = r * r;
            let dyn_amp = r2 / ((1.0 - r2).powi(2) + (0.2 * r).powi(2)).sqrt();
            (3.0 * b.sin().abs() * dyn_amp).min(6.0)
        }
    }
}

impl TransferFunction for SurrogateRao {
    fn amplitude(&self, dof: Dof, omega_e: f64, beta: f64) -> f64 {
        surrogate_rao(dof, omega_e, beta)
    }
}

/// Same amplitude at every frequency and heading; mostly useful in tests.
#[derive(Debug, Clone, Copy)]
pub struct ConstantRao(pub [f64; 3]);

impl TransferFunction for ConstantRao {
    fn amplitude(&self, dof: Dof, _omega_e: f64, _beta: f64) -> f64 {
        self.0[dof.index()]
    }
}

/// Tabulated RAO amplitudes on an (encounter frequency × heading) grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RaoFile", into = "RaoFile")]
pub struct RaoTable {
    freq_axis: Vec<f64>,
    heading_axis: Vec<f64>,
    /// Per DOF, row-major `[freq][heading]`.
    amplitude: [Vec<f64>; 3],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RaoFile {
    freq_axis: Vec<f64>,
    heading_axis: Vec<f64>,
    heave: Vec<Vec<f64>>,
    pitch: Vec<Vec<f64>>,
    roll: Vec<Vec<f64>>,
}

impl TryFrom<RaoFile> for RaoTable {
    type Error = Error;

    fn try_from(f: RaoFile) -> Result<Self> {
        let flat = |name: &str, rows: Vec<Vec<f64>>| -> Result<Vec<f64>> {
            if rows.len() != f.freq_axis.len() || rows.iter().any(|r| r.len() != f.heading_axis.len()) {
                return data(format!(
                    "{name} table must be {}×{}",
                    f.freq_axis.len(),
                    f.heading_axis.len()
                ));
            }
            Ok(rows.into_iter().flatten().collect())
        };
        let heave = flat("heave", f.heave)?;
        let pitch = flat("pitch", f.pitch)?;
        let roll = flat("roll", f.roll)?;
        RaoTable::new(f.freq_axis, f.heading_axis, [heave, pitch, roll])
    }
}

impl From<RaoTable> for RaoFile {
    fn from(t: RaoTable) -> Self {
        let nh = t.heading_axis.len();
        let rows = |v: &[f64]| v.chunks(nh).map(<[f64]>::to_vec).collect();
        RaoFile {
            heave: rows(&t.amplitude[0]),
            pitch: rows(&t.amplitude[1]),
            roll: rows(&t.amplitude[2]),
            freq_axis: t.freq_axis,
            heading_axis: t.heading_axis,
        }
    }
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite()) && v.windows(2).all(|w| w[0] < w[1])
}

impl RaoTable {
    pub fn new(freq_axis: Vec<f64>, heading_axis: Vec<f64>, amplitude: [Vec<f64>; 3]) -> Result<Self> {
        if freq_axis.len() < 2 || !strictly_increasing(&freq_axis) {
            return data("RAO frequency axis must hold at least 2 strictly increasing values");
        }
        if heading_axis.len() < 2
            || !strictly_increasing(&heading_axis)
            || heading_axis[0] < 0.0
            || heading_axis[heading_axis.len() - 1] >= 360.0
        {
            return data("RAO heading axis must be strictly increasing within [0, 360)");
        }
        let n = freq_axis.len() * heading_axis.len();
        for (dof, a) in Dof::ALL.iter().zip(&amplitude) {
            if a.len() != n {
                return data(format!("{} table holds {} values, expected {n}", dof.name(), a.len()));
            }
            if a.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                return data(format!("{} table has negative or non-finite amplitudes", dof.name()));
            }
        }
        Ok(Self { freq_axis, heading_axis, amplitude })
    }

    /// Tabulate any transfer function on the given axes.
    pub fn tabulate(tf: &dyn TransferFunction, freq_axis: Vec<f64>, heading_axis: Vec<f64>) -> Result<Self> {
        let amplitude = Dof::ALL.map(|dof| {
            freq_axis
                .iter()
                .flat_map(|&w| heading_axis.iter().map(move |&b| (w, b)))
                .map(|(w, b)| tf.amplitude(dof, w, b))
                .collect()
        });
        Self::new(freq_axis, heading_axis, amplitude)
    }

    /// The surrogate on 36 headings (10° apart) and 0–20 rad/s in 0.05 steps,
    /// wide enough for head-sea encounter frequencies at service speed.
    pub fn surrogate() -> Self {
        let freq = (0..=400).map(|i| i as f64 * 0.05).collect();
        let heading = (0..36).map(|i| i as f64 * 10.0).collect();
        Self::tabulate(&SurrogateRao, freq, heading).expect("surrogate axes are valid")
    }

    pub fn freq_axis(&self) -> &[f64] {
        &self.freq_axis
    }

    pub fn heading_axis(&self) -> &[f64] {
        &self.heading_axis
    }

    /// Stored value at grid node `(fi, hi)`.
    pub fn node(&self, dof: Dof, fi: usize, hi: usize) -> f64 {
        self.amplitude[dof.index()][fi * self.heading_axis.len() + hi]
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Data(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Bilinear interpolation in (ω_e, β). Frequencies outside the axis clamp
/// to the edge; headings wrap across 360°.
pub fn rao_lookup(table: &RaoTable, dof: Dof, omega_e: f64, beta: f64) -> f64 {
    let (f0, f1, tf) = bracket_clamped(&table.freq_axis, omega_e);
    let (h0, h1, th) = bracket_wrapped(&table.heading_axis, beta);
    let v = |fi, hi| table.node(dof, fi, hi);
    let lo = v(f0, h0) * (1.0 - th) + v(f0, h1) * th;
    let hi = v(f1, h0) * (1.0 - th) + v(f1, h1) * th;
    lo * (1.0 - tf) + hi * tf
}

impl TransferFunction for RaoTable {
    fn amplitude(&self, dof: Dof, omega_e: f64, beta: f64) -> f64 {
        rao_lookup(self, dof, omega_e, beta)
    }
}

fn bracket_clamped(axis: &[f64], x: f64) -> (usize, usize, f64) {
    let last = axis.len() - 1;
    if !(x > axis[0]) {
        return (0, 0, 0.0);
    }
    if x >= axis[last] {
        return (last, last, 0.0);
    }
    let i = axis.partition_point(|&a| a <= x) - 1;
    (i, i + 1, (x - axis[i]) / (axis[i + 1] - axis[i]))
}

fn bracket_wrapped(axis: &[f64], beta: f64) -> (usize, usize, f64) {
    let b = beta.rem_euclid(360.0);
    let last = axis.len() - 1;
    if b >= axis[0] && b < axis[last] {
        let i = axis.partition_point(|&a| a <= b) - 1;
        return (i, i + 1, (b - axis[i]) / (axis[i + 1] - axis[i]));
    }
    // between the last heading and the first one plus a full turn
    let span = axis[0] + 360.0 - axis[last];
    let off = if b >= axis[last] { b - axis[last] } else { b + 360.0 - axis[last] };
    (last, 0, off / span)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ten_degree_table() -> RaoTable {
        let heading: Vec<f64> = (0..36).map(|i| i as f64 * 10.0).collect();
        let freq = vec![0.5, 1.0];
        let one: Vec<f64> = (0..72).map(|i| (i % 36) as f64 * 0.01 + (i / 36) as f64).collect();
        RaoTable::new(freq, heading, [one.clone(), one.clone(), one]).unwrap()
    }

    #[test]
    fn surrogate_hand_values() {
        assert!((surrogate_rao(Dof::Heave, 0.9, 0.0) - 0.5).abs() < 1e-15);
        for w in [0.1, 0.7, 1.3, 5.0] {
            assert!(surrogate_rao(Dof::Pitch, w, 90.0).abs() < 1e-15);
            assert_eq!(surrogate_rao(Dof::Roll, w, 0.0), 0.0);
        }
        // roll at resonance: 3·1/0.2 = 15, capped
        assert_eq!(surrogate_rao(Dof::Roll, 0.55, 90.0), 6.0);
        // pitch peak in head seas: 1.4·B(1)
        assert!((surrogate_rao(Dof::Pitch, 1.1, 180.0) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn lookup_at_nodes_and_midpoints() {
        let t = ten_degree_table();
        assert_eq!(rao_lookup(&t, Dof::Heave, 0.5, 20.0), t.node(Dof::Heave, 0, 2));
        assert_eq!(rao_lookup(&t, Dof::Roll, 1.0, 350.0), t.node(Dof::Roll, 1, 35));
        // 0.2 at 20° and 0.4 at 30°
        let heading: Vec<f64> = (0..36).map(|i| i as f64 * 10.0).collect();
        let mut vals = vec![0.0; 72];
        vals[2] = 0.2;
        vals[3] = 0.4;
        let t2 = RaoTable::new(vec![0.5, 1.0], heading, [vals.clone(), vals.clone(), vals]).unwrap();
        assert!((rao_lookup(&t2, Dof::Pitch, 0.5, 25.0) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn lookup_wraps_heading() {
        let t = ten_degree_table();
        let at350 = t.node(Dof::Heave, 0, 35);
        let at0 = t.node(Dof::Heave, 0, 0);
        let got = rao_lookup(&t, Dof::Heave, 0.5, 359.5);
        assert!((got - (0.05 * at350 + 0.95 * at0)).abs() < 1e-12);
        assert!((rao_lookup(&t, Dof::Heave, 0.5, -0.5) - got).abs() < 1e-12);
    }

    #[test]
    fn lookup_clamps_frequency() {
        let t = ten_degree_table();
        assert_eq!(rao_lookup(&t, Dof::Heave, 0.0, 10.0), t.node(Dof::Heave, 0, 1));
        assert_eq!(rao_lookup(&t, Dof::Heave, 9.0, 10.0), t.node(Dof::Heave, 1, 1));
        let mid = rao_lookup(&t, Dof::Heave, 0.75, 10.0);
        assert!((mid - 0.5 * (t.node(Dof::Heave, 0, 1) + t.node(Dof::Heave, 1, 1))).abs() < 1e-12);
    }

    #[test]
    fn malformed_tables_are_rejected() {
        let h: Vec<f64> = (0..36).map(|i| i as f64 * 10.0).collect();
        let v = vec![0.0; 72];
        let bad_axis = RaoTable::new(vec![1.0, 0.5], h.clone(), [v.clone(), v.clone(), v.clone()]);
        assert!(matches!(bad_axis, Err(Error::Data(_))));
        let mut neg = v.clone();
        neg[5] = -1.0;
        assert!(matches!(RaoTable::new(vec![0.5, 1.0], h.clone(), [v.clone(), neg, v.clone()]), Err(Error::Data(_))));
        assert!(matches!(RaoTable::new(vec![0.5, 1.0], h, [v.clone(), v.clone(), vec![0.0; 3]]), Err(Error::Data(_))));
    }

    #[test]
    fn json_round_trip() {
        let t = RaoTable::surrogate();
        assert_eq!(t.heading_axis().len(), 36);
        let text = serde_json::to_string(&t).unwrap();
        let back: RaoTable = serde_json::from_str(&text).unwrap();
        assert_eq!(back, t);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["roll"].as_array().unwrap().len(), t.freq_axis().len());
    }

    #[test]
    fn tabulated_surrogate_matches_closed_form_at_nodes() {
        let t = RaoTable::surrogate();
        for (fi, hi) in [(0, 0), (18, 9), (11, 27), (400, 35)] {
            let w = t.freq_axis()[fi];
            let b = t.heading_axis()[hi];
            for dof in Dof::ALL {
                assert_eq!(rao_lookup(&t, dof, w, b), surrogate_rao(dof, w, b));
            }
        }
    }
}
