use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::AnalysisError;

/// P(α) = offset + (V/2)·cos(2(α − φ)), angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeFit {
    pub visibility: f64,
    pub visibility_error: f64,
    /// φ in degrees, in [0, 180).
    pub phase_deg: f64,
    pub phase_error_deg: f64,
    pub offset: f64,
    pub offset_error: f64,
    pub chi_squared: f64,
}

impl FringeFit {
    pub fn evaluate(&self, angle_deg: f64) -> f64 {
        self.offset + 0.5 * self.visibility * (2.0 * (angle_deg - self.phase_deg).to_radians()).cos()
    }
}

/// Weighted linear least squares in the basis {1, cos 2α, sin 2α}; errors from the fit covariance.
pub fn fringe_fit(angles_deg: &[f64], values: &[f64], sigmas: &[f64]) -> Result<FringeFit, AnalysisError> {
    if angles_deg.len() != values.len() || values.len() != sigmas.len() {
        return Err(AnalysisError::InvalidInput("angles, values and errors differ in length".into()));
    }
    let mut distinct: Vec<f64> = angles_deg.iter().map(|a| a.rem_euclid(180.0)).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    if distinct.len() < 4 {
        return Err(AnalysisError::TooFewPoints { needed: 4, got: distinct.len() });
    }
    if sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(AnalysisError::InvalidInput("fit errors must be positive and finite".into()));
    }
    let mut normal = Matrix3::<f64>::zeros();
    let mut rhs = Vector3::<f64>::zeros();
    for ((a, y), s) in angles_deg.iter().zip(values).zip(sigmas) {
        let t = 2.0 * a.to_radians();
        let row = Vector3::new(1.0, t.cos(), t.sin());
        let w = 1.0 / (s * s);
        normal += row * row.transpose() * w;
        rhs += row * (w * y);
    }
    let cov = normal.try_inverse().ok_or(AnalysisError::SingularFit)?;
    if !cov.iter().all(|v| v.is_finite()) || cov.determinant().abs() < 1e-300 {
        return Err(AnalysisError::SingularFit);
    }
    let p = cov * rhs;
    let (offset, a, b) = (p[0], p[1], p[2]);
    let r = a.hypot(b);
    let chi_squared = angles_deg
        .iter()
        .zip(values)
        .zip(sigmas)
        .map(|((ang, y), s)| {
            let t = 2.0 * ang.to_radians();
            ((y - offset - a * t.cos() - b * t.sin()) / s).powi(2)
        })
        .sum();

    // Gradients of V = 2r and φ = atan2(b, a)/2 with respect to (a, b).
    let (gv, gp) = if r > 0.0 {
        ([2.0 * a / r, 2.0 * b / r], [-0.5 * b / (r * r), 0.5 * a / (r * r)])
    } else {
        ([0.0, 0.0], [0.0, 0.0])
    };
    let quad = |g: [f64; 2]| {
        g[0] * g[0] * cov[(1, 1)] + 2.0 * g[0] * g[1] * cov[(1, 2)] + g[1] * g[1] * cov[(2, 2)]
    };
    Ok(FringeFit {
        visibility: 2.0 * r,
        visibility_error: if r > 0.0 { quad(gv).max(0.0).sqrt() } else { 2.0 * cov[(1, 1)].max(cov[(2, 2)]).sqrt() },
        phase_deg: (0.5 * b.atan2(a)).to_degrees().rem_euclid(180.0),
        phase_error_deg: quad(gp).max(0.0).sqrt().to_degrees(),
        offset,
        offset_error: cov[(0, 0)].sqrt(),
        chi_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_fringe_recovered() {
        let angles: Vec<f64> = (0..5).map(|i| i as f64 * 22.5).collect();
        // Ideal anticorrelated fringe: P_corr = sin²(α − β) with β = 0.
        let p: Vec<f64> = angles.iter().map(|a: &f64| a.to_radians().sin().powi(2)).collect();
        let fit = fringe_fit(&angles, &p, &vec![0.01; 5]).unwrap();
        assert_relative_eq!(fit.visibility, 1.0, epsilon = 1e-9);
        assert_relative_eq!(fit.offset, 0.5, epsilon = 1e-9);
        assert_relative_eq!(fit.phase_deg, 90.0, epsilon = 1e-7);
        assert!(fit.chi_squared < 1e-12);
    }

    #[test]
    fn degenerate_inputs_rejected() {
        assert!(matches!(
            fringe_fit(&[0.0, 180.0, 45.0, 225.0], &[0.1, 0.1, 0.5, 0.5], &[0.1; 4]),
            Err(AnalysisError::TooFewPoints { .. })
        ));
        assert!(fringe_fit(&[0.0, 45.0, 90.0, 135.0], &[0.0; 4], &[0.0; 4]).is_err());
    }
}
