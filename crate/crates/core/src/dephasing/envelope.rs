use std::io::Write;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::channel::ChannelFamily;
use super::DephasingError;
use crate::quantum::{setting_vectors, AtomBasisSetting, CVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    X,
    Y,
    Z,
}

impl Basis {
    pub const ALL: [Basis; 3] = [Basis::X, Basis::Y, Basis::Z];

    pub fn setting(self) -> AtomBasisSetting {
        match self {
            Basis::X => AtomBasisSetting::x(),
            Basis::Y => AtomBasisSetting::y(),
            Basis::Z => AtomBasisSetting::z(),
        }
    }

    /// Atom state heralded by the orthogonal photon polarization of this basis (V, A, L).
    pub fn prepared_state(self) -> CVector {
        setting_vectors(self.setting()).1
    }

    pub fn label(self) -> &'static str {
        match self {
            Basis::X => "X",
            Basis::Y => "Y",
            Basis::Z => "Z",
        }
    }
}

/// Memory coherence versus storage time.
#[derive(Debug, Clone, Serialize)]
pub struct CoherenceEnvelope {
    pub times: Vec<f64>,
    pub bases: Vec<Basis>,
    /// Lab-frame contrast 2·P(prepared) − 1 per basis (outer) and time (inner).
    pub expectation: Vec<Vec<f64>>,
    /// Oscillation envelope: X contrast in the frame co-rotating with the bias precession.
    pub envelope: Vec<f64>,
}

/// Builds the per-basis curves and the envelope from a channel family.
pub fn coherence_envelope(family: &ChannelFamily, bases: &[Basis]) -> Result<CoherenceEnvelope, DephasingError> {
    if family.times.windows(2).any(|w| w[1] < w[0]) {
        return Err(DephasingError::InvalidParameter("time grid must be sorted".into()));
    }
    let expectation = bases
        .iter()
        .map(|b| {
            let psi = b.prepared_state();
            family.lab.iter().map(|ch| 2.0 * ch.survival(&psi) - 1.0).collect()
        })
        .collect();
    let psi = Basis::X.prepared_state();
    let envelope = family.rotating.iter().map(|ch| 2.0 * ch.survival(&psi) - 1.0).collect();
    Ok(CoherenceEnvelope { times: family.times.clone(), bases: bases.to_vec(), expectation, envelope })
}

impl CoherenceEnvelope {
    pub fn curve(&self, basis: Basis) -> Option<&[f64]> {
        self.bases.iter().position(|&b| b == basis).map(|i| self.expectation[i].as_slice())
    }

    /// Running maximum over a centred window, which removes the rephasing dips.
    pub fn smoothed_max(&self, window: f64) -> Vec<f64> {
        let half = half_width(&self.times, window);
        (0..self.envelope.len())
            .map(|i| {
                let lo = i.saturating_sub(half);
                let hi = (i + half).min(self.envelope.len() - 1);
                self.envelope[lo..=hi].iter().copied().fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    }

    /// Centred moving average (truncated at the ends).
    pub fn smoothed_mean(&self, window: f64) -> Vec<f64> {
        moving_average(&self.envelope, half_width(&self.times, window))
    }

    /// First time the running-maximum envelope falls below 1/e, linearly interpolated.
    pub fn one_over_e_time(&self, window: f64) -> Option<f64> {
        let s = self.smoothed_max(window);
        let level = (-1.0f64).exp();
        for i in 1..s.len() {
            if s[i] < level && s[i - 1] >= level {
                let frac = (s[i - 1] - level) / (s[i - 1] - s[i]);
                return Some(self.times[i - 1] + frac * (self.times[i] - self.times[i - 1]));
            }
        }
        None
    }

    /// Dominant frequency of a basis curve within [f_min, f_max].
    pub fn principal_frequency(&self, basis: Basis, f_min: f64, f_max: f64) -> Option<f64> {
        let curve = self.curve(basis)?;
        dominant_frequency(&self.times, curve, f_min, f_max)
    }

    /// Dominant modulation frequency of the envelope after removing its slow decay.
    pub fn rephasing_frequency(&self, trend_window: f64, f_min: f64, f_max: f64) -> Option<f64> {
        let trend = self.smoothed_mean(trend_window);
        let residual: Vec<f64> = self.envelope.iter().zip(&trend).map(|(e, t)| e - t).collect();
        dominant_frequency(&self.times, &residual, f_min, f_max)
    }

    /// CSV with columns time_us, basis, expectation, envelope.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), DephasingError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time_us", "basis", "expectation", "envelope"])?;
        for (i, t) in self.times.iter().enumerate() {
            for (b, curve) in self.bases.iter().zip(&self.expectation) {
                w.write_record([
                    format!("{:.4}", t * 1e6),
                    b.label().to_string(),
                    format!("{:.6}", curve[i]),
                    format!("{:.6}", self.envelope[i]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn half_width(times: &[f64], window: f64) -> usize {
    if times.len() < 2 {
        return 0;
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    ((window / dt) / 2.0).round() as usize
}

pub fn moving_average(values: &[f64], half: usize) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(values.len() - 1);
            values[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Peak of the Hann-windowed, zero-padded amplitude spectrum of a uniformly sampled signal,
/// refined by parabolic interpolation of the log magnitude.
pub fn dominant_frequency(times: &[f64], values: &[f64], f_min: f64, f_max: f64) -> Option<f64> {
    let n = values.len();
    if n < 8 || times.len() != n {
        return None;
    }
    let dt = (times[n - 1] - times[0]) / (n - 1) as f64;
    let mean = values.iter().sum::<f64>() / n as f64;
    let padded = (n * 8).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let hann = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos();
            Complex::new((v - mean) * hann, 0.0)
        })
        .collect();
    buf.resize(padded, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(padded).process(&mut buf);
    let df = 1.0 / (padded as f64 * dt);
    let lo = (f_min / df).ceil().max(1.0) as usize;
    let hi = ((f_max / df).floor() as usize).min(padded / 2 - 1);
    if lo >= hi {
        return None;
    }
    let (k, _) = (lo..=hi).map(|k| (k, buf[k].norm())).max_by(|a, b| a.1.total_cmp(&b.1))?;
    let mag = |k: usize| buf[k].norm().max(1e-300).ln();
    let (a, b, c) = (mag(k - 1), mag(k), mag(k + 1));
    let denom = a - 2.0 * b + c;
    let shift = if denom.abs() > 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
    Some((k as f64 + shift.clamp(-0.5, 0.5)) * df)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dephasing::channel::{ChannelFamily, MemoryChannel};

    #[test]
    fn spectrum_finds_injected_tone() {
        let times: Vec<f64> = (0..900).map(|i| i as f64 * 0.5e-6).collect();
        let v: Vec<f64> = times
            .iter()
            .map(|t| (2.0 * std::f64::consts::PI * 105.3e3 * t).cos() * (-t / 300e-6).exp())
            .collect();
        let f = dominant_frequency(&times, &v, 20e3, 500e3).unwrap();
        assert!((f - 105.3e3).abs() < 0.5e3, "{f}");
    }

    #[test]
    fn ideal_family_gives_flat_envelope() {
        let times: Vec<f64> = (0..50).map(|i| i as f64 * 1e-6).collect();
        let fam = ChannelFamily {
            times: times.clone(),
            lab: vec![MemoryChannel::identity(); times.len()],
            rotating: vec![MemoryChannel::identity(); times.len()],
            trajectories_used: 1,
            trajectories_escaped: 0,
        };
        let env = coherence_envelope(&fam, &Basis::ALL).unwrap();
        assert!(env.envelope.iter().all(|&e| (e - 1.0).abs() < 1e-12));
        assert!(env.expectation.iter().flatten().all(|&e| (e - 1.0).abs() < 1e-12));
        assert!(env.one_over_e_time(14.3e-6).is_none());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let fam = ChannelFamily {
            times: vec![0.0, 1e-6],
            lab: vec![MemoryChannel::identity(); 2],
            rotating: vec![MemoryChannel::identity(); 2],
            trajectories_used: 1,
            trajectories_escaped: 0,
        };
        let env = coherence_envelope(&fam, &[Basis::X, Basis::Y]).unwrap();
        let mut buf = Vec::new();
        env.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "time_us,basis,expectation,envelope");
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[3], "1.0000,X,1.000000,1.000000");
    }
}
