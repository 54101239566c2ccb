use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::ChannelError;
use crate::constants::FIBRE_SPEED;

/// Lowest loss a fibre can credibly have, per km, after allowing for a small measurement offset.
const FLOOR_DB_PER_KM: f64 = 0.22;
const FLOOR_OFFSET_DB: f64 = 0.5;

/// Power ratio expressed in dB of loss (positive = attenuation).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Decibels(pub f64);

impl Decibels {
    /// Accepts either sign, since loss tables often quote attenuation as a negative gain.
    pub fn loss(value: f64) -> Self {
        Decibels(value.abs())
    }

    pub fn transmission(self) -> f64 {
        10f64.powf(-self.0 / 10.0)
    }

    pub fn from_transmission(t: f64) -> Self {
        Decibels(-10.0 * t.log10())
    }
}

/// Fibre between a node and the middle station.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FibreLink {
    pub length_km: f64,
    /// Total attenuation including connectors.
    pub attenuation_db: Decibels,
    /// Group velocity in m/s.
    #[serde(default = "default_speed")]
    pub propagation_speed: f64,
}

fn default_speed() -> f64 {
    FIBRE_SPEED
}

impl FibreLink {
    pub fn new(length_km: f64, attenuation_db: f64) -> Result<Self, ChannelError> {
        let link = Self { length_km, attenuation_db: Decibels::loss(attenuation_db), propagation_speed: FIBRE_SPEED };
        link.validate()?;
        Ok(link)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.length_km.is_finite() && self.length_km >= 0.0) {
            return Err(ChannelError::InvalidParameter(format!("fibre length {} km", self.length_km)));
        }
        if !(self.propagation_speed.is_finite() && self.propagation_speed > 0.0) {
            return Err(ChannelError::InvalidParameter(format!("propagation speed {}", self.propagation_speed)));
        }
        let floor = FLOOR_DB_PER_KM * self.length_km - FLOOR_OFFSET_DB;
        if !(self.attenuation_db.0 >= 0.0 && self.attenuation_db.0 >= floor) {
            return Err(ChannelError::InvalidParameter(format!(
                "attenuation {} dB below the {floor:.2} dB floor for {} km",
                self.attenuation_db.0, self.length_km
            )));
        }
        Ok(())
    }

    /// Both links traversed in sequence.
    pub fn concatenate(&self, other: &FibreLink) -> FibreLink {
        FibreLink {
            length_km: self.length_km + other.length_km,
            attenuation_db: Decibels(self.attenuation_db.0 + other.attenuation_db.0),
            propagation_speed: self.propagation_speed,
        }
    }
}

pub fn link_transmission(link: &FibreLink) -> f64 {
    link.attenuation_db.transmission()
}

/// One-way flight time in s.
pub fn propagation_delay(link: &FibreLink) -> f64 {
    link.length_km * 1e3 / link.propagation_speed
}

/// Mean number of counts from a flat rate (cps) inside a window (s).
pub fn background_in_window(rate: f64, window: f64) -> Result<f64, ChannelError> {
    if !(window >= 0.0) || !(rate >= 0.0) {
        return Err(ChannelError::InvalidParameter(format!("rate {rate} and window {window} must be non-negative")));
    }
    Ok(rate * window)
}

/// Poisson count with the given mean.
pub fn sample_counts<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|p| p.sample(rng) as u64).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn transmission_values() {
        assert_eq!(link_transmission(&FibreLink::new(0.0, 0.0).unwrap()), 1.0);
        assert_relative_eq!(link_transmission(&FibreLink::new(16.5, -4.5).unwrap()), 0.354_813, epsilon = 1e-6);
        assert_relative_eq!(link_transmission(&FibreLink::new(10.0, 2.2).unwrap()), 0.602_560, epsilon = 1e-6);
    }

    #[test]
    fn delays() {
        assert_eq!(propagation_delay(&FibreLink::new(0.0, 0.0).unwrap()), 0.0);
        assert_relative_eq!(propagation_delay(&FibreLink::new(16.5, 4.5).unwrap()), 82.56e-6, epsilon = 0.05e-6);
        assert_relative_eq!(propagation_delay(&FibreLink::new(2.6, 0.7).unwrap()), 13.0e-6, epsilon = 0.05e-6);
    }

    #[test]
    fn background_counts() {
        assert_relative_eq!(background_in_window(170.0, 70e-9).unwrap(), 1.19e-5, epsilon = 1e-9);
        assert_eq!(background_in_window(170.0, 0.0).unwrap(), 0.0);
        assert_relative_eq!(background_in_window(65.0, 70e-9).unwrap(), 4.55e-6, epsilon = 1e-10);
        assert!(background_in_window(1.0, -1.0).is_err());
    }

    #[test]
    fn implausibly_low_loss_rejected() {
        assert!(FibreLink::new(33.0, 1.0).is_err());
        assert!(FibreLink::new(-1.0, 1.0).is_err());
    }
}
