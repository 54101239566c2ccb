use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::detection::check_probability;
use super::ChannelError;

/// FWHM of a Gaussian in units of its standard deviation.
const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

/// Single-photon temporal mode: Gaussian excitation followed by exponential decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhotonWavepacket {
    /// Delay of the excitation pulse centre relative to the try trigger, in s.
    pub emission_offset: f64,
    /// Excited-state lifetime in s.
    pub decay_time: f64,
    /// FWHM of the excitation pulse in s.
    pub excitation_fwhm: f64,
}

impl PhotonWavepacket {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.decay_time > 0.0 && self.decay_time.is_finite()) {
            return Err(ChannelError::InvalidParameter(format!("decay time {} s", self.decay_time)));
        }
        if !(self.excitation_fwhm >= 0.0) || !self.emission_offset.is_finite() {
            return Err(ChannelError::InvalidParameter("excitation parameters must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn excitation_sigma(&self) -> f64 {
        self.excitation_fwhm / FWHM_PER_SIGMA
    }

    /// Detection-time distribution: excitation jitter convolved with the decay.
    pub fn sample_emission_time<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let sigma = self.excitation_sigma();
        let g = if sigma > 0.0 { Normal::new(0.0, sigma).expect("sigma > 0").sample(rng) } else { 0.0 };
        let e = Exp::new(1.0 / self.decay_time).expect("decay time > 0").sample(rng);
        self.emission_offset + g + e
    }

    /// CDF of the emission time (exponentially modified Gaussian).
    pub fn emission_cdf(&self, t: f64) -> f64 {
        let x = t - self.emission_offset;
        let sigma = self.excitation_sigma();
        let tau = self.decay_time;
        if sigma == 0.0 {
            return if x <= 0.0 { 0.0 } else { 1.0 - (-x / tau).exp() };
        }
        let phi = |z: f64| 0.5 * erfc(-z / std::f64::consts::SQRT_2);
        let z = x / sigma;
        let expo = -x / tau + sigma * sigma / (2.0 * tau * tau);
        (phi(z) - expo.exp() * phi(z - sigma / tau)).clamp(0.0, 1.0)
    }

    /// Probability that a photon falls in [start, start + width].
    pub fn window_fraction(&self, start: f64, width: f64) -> f64 {
        (self.emission_cdf(start + width) - self.emission_cdf(start)).max(0.0)
    }

    /// Window start (after the most efficient position) at which `target` of the photons are accepted.
    pub fn window_start_for_fraction(&self, width: f64, target: f64) -> Result<f64, ChannelError> {
        check_probability("target fraction", target)?;
        let tau = self.decay_time;
        let sigma = self.excitation_sigma();
        // Locate the best start on a coarse grid, then bisect on the late side.
        let lo_scan = self.emission_offset - 5.0 * sigma - width;
        let hi_scan = self.emission_offset + 20.0 * tau;
        let n = 2000;
        let (mut best_start, mut best) = (lo_scan, 0.0);
        for i in 0..=n {
            let s = lo_scan + (hi_scan - lo_scan) * i as f64 / n as f64;
            let f = self.window_fraction(s, width);
            if f > best {
                best = f;
                best_start = s;
            }
        }
        if target > best {
            return Err(ChannelError::InvalidParameter(format!(
                "a {width:e} s window accepts at most {best:.4}, below the requested {target:.4}"
            )));
        }
        let (mut a, mut b) = (best_start, hi_scan);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if self.window_fraction(m, width) > target {
                a = m;
            } else {
                b = m;
            }
        }
        Ok(0.5 * (a + b))
    }
}

/// |⟨ψ1|ψ2⟩|² for one-sided exponential amplitude modes offset by `delta_tau`.
///
/// Emission offsets shift the modes too, so equal offsets and Δτ = 0 give full overlap.
pub fn temporal_overlap(w1: &PhotonWavepacket, w2: &PhotonWavepacket, delta_tau: f64) -> f64 {
    let shift = delta_tau + w2.emission_offset - w1.emission_offset;
    let (early, late_tau) = if shift >= 0.0 { (w1.decay_time, w2.decay_time) } else { (w2.decay_time, w1.decay_time) };
    let mismatch = 4.0 * early * late_tau / (early + late_tau).powi(2);
    mismatch * (-shift.abs() / early).exp()
}

/// Temporal overlap scaled by the residual-distinguishability ceiling `xi_max`.
pub fn indistinguishability(w1: &PhotonWavepacket, w2: &PhotonWavepacket, delta_tau: f64, xi_max: f64) -> Result<f64, ChannelError> {
    check_probability("xi_max", xi_max)?;
    Ok(xi_max * temporal_overlap(w1, w2, delta_tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn packet() -> PhotonWavepacket {
        PhotonWavepacket { emission_offset: 0.0, decay_time: 26.2e-9, excitation_fwhm: 21e-9 }
    }

    /// Midpoint-rule overlap of √(1/τ)·exp(−t/2τ) amplitudes.
    fn quadrature_overlap(tau1: f64, tau2: f64, shift: f64) -> f64 {
        let n = 400_000;
        let t_max = 60.0 * tau1.max(tau2) + shift.abs();
        let h = t_max / n as f64;
        let amp = |tau: f64, t: f64| if t < 0.0 { 0.0 } else { (-t / (2.0 * tau)).exp() / tau.sqrt() };
        let s: f64 = (0..n)
            .map(|i| {
                let t = (i as f64 + 0.5) * h;
                amp(tau1, t) * amp(tau2, t - shift)
            })
            .sum();
        (s * h).powi(2)
    }

    #[test]
    fn overlap_matches_quadrature() {
        let p = packet();
        assert_relative_eq!(temporal_overlap(&p, &p, 0.0), 1.0, epsilon = 1e-12);
        let one_tau = temporal_overlap(&p, &p, 26.2e-9);
        assert_relative_eq!(one_tau, (-1.0f64).exp(), epsilon = 1e-12);
        assert_relative_eq!(one_tau, quadrature_overlap(26.2e-9, 26.2e-9, 26.2e-9), epsilon = 1e-4);
        let mut q = p;
        q.decay_time = 30e-9;
        assert_relative_eq!(temporal_overlap(&p, &q, 10e-9), quadrature_overlap(26.2e-9, 30e-9, 10e-9), epsilon = 1e-4);
        assert_relative_eq!(temporal_overlap(&p, &q, -10e-9), quadrature_overlap(30e-9, 26.2e-9, 10e-9), epsilon = 1e-4);
    }

    #[test]
    fn ceiling_applies() {
        let p = packet();
        assert_relative_eq!(indistinguishability(&p, &p, 0.0, 1.0).unwrap(), 1.0);
        assert_relative_eq!(indistinguishability(&p, &p, 0.0, 0.97).unwrap(), 0.97);
        assert!(indistinguishability(&p, &p, 0.0, 1.5).is_err());
    }

    #[test]
    fn cdf_matches_sampling() {
        let p = packet();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200_000;
        let inside = (0..n)
            .filter(|_| {
                let t = p.sample_emission_time(&mut rng);
                (10e-9..80e-9).contains(&t)
            })
            .count();
        assert_relative_eq!(inside as f64 / n as f64, p.window_fraction(10e-9, 70e-9), epsilon = 4e-3);
    }

    #[test]
    fn window_calibration_hits_target() {
        let p = packet();
        let start = p.window_start_for_fraction(70e-9, 0.8).unwrap();
        assert_relative_eq!(p.window_fraction(start, 70e-9), 0.8, epsilon = 1e-9);
        assert!(p.window_start_for_fraction(70e-9, 0.999).is_err());
    }
}
