use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::QuantumError;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const NORM_TOL: f64 = 1e-12;
pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
/// Eigenvalues above this are accepted as non-negative.
pub const PSD_TOL: f64 = -1e-10;

pub(crate) fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Ordered subsystem dimensions of a composite Hilbert space.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HilbertSpace {
    dims: Vec<usize>,
}

impl HilbertSpace {
    pub fn new(dims: Vec<usize>) -> Result<Self, QuantumError> {
        if dims.is_empty() {
            return Err(QuantumError::InvalidSpace("no subsystems".into()));
        }
        if let Some(d) = dims.iter().find(|&&d| d < 2) {
            return Err(QuantumError::InvalidSpace(format!("subsystem dimension {d} < 2")));
        }
        Ok(Self { dims })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn num_subsystems(&self) -> usize {
        self.dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn concat(&self, other: &HilbertSpace) -> HilbertSpace {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        HilbertSpace { dims }
    }

    /// Row-major multi-index of a flat basis index (first subsystem most significant).
    pub fn unravel(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for (slot, &d) in out.iter_mut().zip(&self.dims).rev() {
            *slot = index % d;
            index /= d;
        }
        out
    }

    pub fn ravel(&self, digits: &[usize]) -> usize {
        digits
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&i, &d)| acc * d + i)
    }

    /// Stride of a subsystem index in the flat basis ordering.
    pub fn stride(&self, subsystem: usize) -> usize {
        self.dims[subsystem + 1..].iter().product()
    }

    pub(crate) fn check_subsystem(&self, subsystem: usize) -> Result<(), QuantumError> {
        if subsystem >= self.dims.len() {
            return Err(QuantumError::InvalidSubsystem {
                index: subsystem,
                count: self.dims.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    space: HilbertSpace,
    amplitudes: CVector,
}

impl StateVector {
    /// Requires unit norm within [`NORM_TOL`].
    pub fn new(space: HilbertSpace, amplitudes: CVector) -> Result<Self, QuantumError> {
        if amplitudes.len() != space.total_dim() {
            return Err(QuantumError::DimensionMismatch {
                expected: space.total_dim(),
                found: amplitudes.len(),
            });
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(QuantumError::NotNormalized(norm));
        }
        Ok(Self { space, amplitudes })
    }

    /// Normalizes the given amplitudes first.
    pub fn normalized(space: HilbertSpace, amplitudes: CVector) -> Result<Self, QuantumError> {
        let norm = amplitudes.norm();
        if norm < 1e-300 {
            return Err(QuantumError::NotNormalized(norm));
        }
        Self::new(space, amplitudes.unscale(norm))
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn amplitude(&self, digits: &[usize]) -> C64 {
        self.amplitudes[self.space.ravel(digits)]
    }

    pub fn tensor(&self, other: &StateVector) -> StateVector {
        StateVector {
            space: self.space.concat(&other.space),
            amplitudes: self.amplitudes.kronecker(&other.amplitudes),
        }
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    pub fn to_density(&self) -> DensityMatrix {
        let m = &self.amplitudes * self.amplitudes.adjoint();
        DensityMatrix::from_parts_unchecked(self.space.clone(), m)
    }
}

/// A validated mixed state: Hermitian, unit trace and positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    space: HilbertSpace,
    matrix: CMatrix,
}

impl DensityMatrix {
    pub fn new(space: HilbertSpace, matrix: CMatrix) -> Result<Self, QuantumError> {
        let rho = Self { space, matrix };
        rho.validate()?;
        Ok(rho)
    }

    pub(crate) fn from_parts_unchecked(space: HilbertSpace, matrix: CMatrix) -> Self {
        Self { space, matrix }
    }

    pub fn maximally_mixed(space: HilbertSpace) -> Self {
        let d = space.total_dim();
        let m = CMatrix::identity(d, d).unscale(d as f64);
        Self { space, matrix: m }
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn validate(&self) -> Result<(), QuantumError> {
        let d = self.space.total_dim();
        if self.matrix.nrows() != d || self.matrix.ncols() != d {
            return Err(QuantumError::DimensionMismatch {
                expected: d,
                found: self.matrix.nrows(),
            });
        }
        let herm_err = (&self.matrix - self.matrix.adjoint()).camax();
        if herm_err > HERMITIAN_TOL {
            return Err(QuantumError::NotHermitian(herm_err));
        }
        let tr = self.matrix.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(QuantumError::BadTrace(tr.re));
        }
        let min_eig = self.min_eigenvalue();
        if min_eig < PSD_TOL {
            return Err(QuantumError::NotPositive(min_eig));
        }
        Ok(())
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let herm = (&self.matrix + self.matrix.adjoint()).scale(0.5);
        let mut ev: Vec<f64> = herm.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix {
            space: self.space.concat(&other.space),
            matrix: self.matrix.kronecker(&other.matrix),
        }
    }

    /// Reduced state on the `keep` subsystems, in their original order.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityMatrix, QuantumError> {
        if keep.is_empty() {
            return Err(QuantumError::InvalidSpace("partial trace must keep a subsystem".into()));
        }
        let mut keep_sorted = keep.to_vec();
        keep_sorted.sort_unstable();
        keep_sorted.dedup();
        if keep_sorted.len() != keep.len() {
            return Err(QuantumError::InvalidSpace("duplicate subsystem in keep set".into()));
        }
        for &k in &keep_sorted {
            self.space.check_subsystem(k)?;
        }
        let dims = self.space.dims();
        let kept_space = HilbertSpace::new(keep_sorted.iter().map(|&k| dims[k]).collect())?;
        let traced: Vec<usize> = (0..dims.len()).filter(|i| !keep_sorted.contains(i)).collect();
        let traced_space_dims: Vec<usize> = traced.iter().map(|&t| dims[t]).collect();
        let traced_total: usize = traced_space_dims.iter().product();
        let kd = kept_space.total_dim();
        let mut out = CMatrix::zeros(kd, kd);

        // Flat offsets for kept and traced digit combinations.
        let offsets = |subs: &[usize], sub_dims: &[usize], n: usize| -> Vec<usize> {
            (0..n)
                .map(|mut flat| {
                    let mut off = 0;
                    for (s, &d) in subs.iter().zip(sub_dims).rev() {
                        off += (flat % d) * self.space.stride(*s);
                        flat /= d;
                    }
                    off
                })
                .collect()
        };
        let kept_off = offsets(&keep_sorted, kept_space.dims(), kd);
        let traced_off = if traced.is_empty() {
            vec![0]
        } else {
            offsets(&traced, &traced_space_dims, traced_total)
        };
        for (i, &ki) in kept_off.iter().enumerate() {
            for (j, &kj) in kept_off.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for &t in &traced_off {
                    acc += self.matrix[(ki + t, kj + t)];
                }
                out[(i, j)] = acc;
            }
        }
        Ok(DensityMatrix { space: kept_space, matrix: out })
    }

    /// Embeds a single-subsystem operator as I ⊗ … ⊗ op ⊗ … ⊗ I.
    pub fn embed_local(&self, subsystem: usize, op: &CMatrix) -> Result<CMatrix, QuantumError> {
        self.space.check_subsystem(subsystem)?;
        embed_local(&self.space, subsystem, op)
    }

    /// ρ → U ρ U† for a unitary acting on one subsystem.
    pub fn apply_local_unitary(&self, subsystem: usize, u: &CMatrix) -> Result<DensityMatrix, QuantumError> {
        let full = self.embed_local(subsystem, u)?;
        let m = &full * &self.matrix * full.adjoint();
        Ok(DensityMatrix { space: self.space.clone(), matrix: m })
    }

    /// Applies a superoperator S (acting on row-major vec(σ) of one subsystem) to that subsystem.
    pub fn apply_local_superop(&self, subsystem: usize, superop: &CMatrix) -> Result<DensityMatrix, QuantumError> {
        self.space.check_subsystem(subsystem)?;
        let d = self.space.dims()[subsystem];
        if superop.nrows() != d * d || superop.ncols() != d * d {
            return Err(QuantumError::DimensionMismatch {
                expected: d * d,
                found: superop.nrows(),
            });
        }
        let n = self.dim();
        let stride = self.space.stride(subsystem);
        let mut out = CMatrix::zeros(n, n);
        for row in 0..n {
            let i = (row / stride) % d;
            let row_base = row - i * stride;
            for col in 0..n {
                let j = (col / stride) % d;
                let col_base = col - j * stride;
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..d {
                    for l in 0..d {
                        let s = superop[(i * d + j, k * d + l)];
                        if s.re == 0.0 && s.im == 0.0 {
                            continue;
                        }
                        acc += s * self.matrix[(row_base + k * stride, col_base + l * stride)];
                    }
                }
                out[(row, col)] = acc;
            }
        }
        Ok(DensityMatrix { space: self.space.clone(), matrix: out })
    }

    pub fn expectation(&self, op: &CMatrix) -> C64 {
        (op * &self.matrix).trace()
    }

    pub fn fidelity_to_pure(&self, psi: &StateVector) -> f64 {
        let a = psi.amplitudes();
        (a.adjoint() * &self.matrix * a)[(0, 0)].re
    }

    /// Uhlmann fidelity (tr √(√ρ σ √ρ))².
    pub fn fidelity(&self, other: &DensityMatrix) -> f64 {
        let sqrt_rho = hermitian_sqrt(&self.matrix);
        let inner = &sqrt_rho * &other.matrix * &sqrt_rho;
        let ev = ((&inner + inner.adjoint()).scale(0.5)).symmetric_eigenvalues();
        let s: f64 = ev.iter().map(|&x| x.max(0.0).sqrt()).sum();
        s * s
    }

    /// Convex mixture Σ wᵢ ρᵢ; weights must be non-negative and sum to 1.
    pub fn mixture(parts: &[(f64, &DensityMatrix)]) -> Result<DensityMatrix, QuantumError> {
        let first = parts
            .first()
            .ok_or_else(|| QuantumError::InvalidSpace("empty mixture".into()))?;
        let space = first.1.space().clone();
        let n = space.total_dim();
        let mut m = CMatrix::zeros(n, n);
        let mut wsum = 0.0;
        for (w, rho) in parts {
            if rho.space() != &space {
                return Err(QuantumError::InvalidSpace("mixture of different spaces".into()));
            }
            if *w < 0.0 {
                return Err(QuantumError::InvalidSpace(format!("negative mixture weight {w}")));
            }
            m += rho.matrix().scale(*w);
            wsum += w;
        }
        if (wsum - 1.0).abs() > 1e-12 {
            return Err(QuantumError::BadTrace(wsum));
        }
        DensityMatrix::new(space, m)
    }

    /// Renormalizes an unnormalized positive operator; fails when its trace is below `min_trace`.
    pub(crate) fn from_unnormalized(space: HilbertSpace, m: CMatrix, min_trace: f64) -> Result<(f64, DensityMatrix), QuantumError> {
        let tr = m.trace().re;
        if tr < min_trace {
            return Err(QuantumError::ImpossibleOutcome(tr));
        }
        let mut m = m.unscale(tr);
        hermitize(&mut m);
        Ok((tr, DensityMatrix::new(space, m)?))
    }
}

pub(crate) fn hermitize(m: &mut CMatrix) {
    let h = (&*m + m.adjoint()).scale(0.5);
    *m = h;
}

pub fn embed_local(space: &HilbertSpace, subsystem: usize, op: &CMatrix) -> Result<CMatrix, QuantumError> {
    let dims = space.dims();
    if op.nrows() != dims[subsystem] || op.ncols() != dims[subsystem] {
        return Err(QuantumError::DimensionMismatch {
            expected: dims[subsystem],
            found: op.nrows(),
        });
    }
    let left: usize = dims[..subsystem].iter().product();
    let right: usize = dims[subsystem + 1..].iter().product();
    let id_l = CMatrix::identity(left, left);
    let id_r = CMatrix::identity(right, right);
    Ok(id_l.kronecker(op).kronecker(&id_r))
}

fn hermitian_sqrt(m: &CMatrix) -> CMatrix {
    let herm = (m + m.adjoint()).scale(0.5);
    let eig = herm.symmetric_eigen();
    let n = m.nrows();
    let mut diag = CMatrix::zeros(n, n);
    for i in 0..n {
        diag[(i, i)] = C64::new(eig.eigenvalues[i].max(0.0).sqrt(), 0.0);
    }
    &eig.eigenvectors * diag * eig.eigenvectors.adjoint()
}

/// Superoperator U ⊗ conj(U) of ρ → UρU† in row-major vectorization.
pub fn unitary_superop(u: &CMatrix) -> CMatrix {
    u.kronecker(&u.map(|z| z.conj()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn qubit_plus() -> StateVector {
        let s = 0.5f64.sqrt();
        StateVector::new(HilbertSpace::new(vec![2]).unwrap(), CVector::from_vec(vec![c(s, 0.0), c(0.0, s)])).unwrap()
    }

    #[test]
    fn space_rejects_trivial_dims() {
        assert!(HilbertSpace::new(vec![3, 1]).is_err());
        assert!(HilbertSpace::new(vec![]).is_err());
        let s = HilbertSpace::new(vec![3, 2, 3, 2]).unwrap();
        assert_eq!(s.total_dim(), 36);
        assert_eq!(s.unravel(s.ravel(&[2, 1, 0, 1])), vec![2, 1, 0, 1]);
    }

    #[test]
    fn unnormalized_state_rejected() {
        let space = HilbertSpace::new(vec![2]).unwrap();
        let v = CVector::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(StateVector::new(space, v), Err(QuantumError::NotNormalized(_))));
    }

    #[test]
    fn invalid_density_rejected() {
        let space = HilbertSpace::new(vec![2]).unwrap();
        let bad_trace = CMatrix::identity(2, 2);
        assert!(matches!(DensityMatrix::new(space.clone(), bad_trace), Err(QuantumError::BadTrace(_))));
        let mut neg = CMatrix::zeros(2, 2);
        neg[(0, 0)] = c(1.5, 0.0);
        neg[(1, 1)] = c(-0.5, 0.0);
        assert!(matches!(DensityMatrix::new(space.clone(), neg), Err(QuantumError::NotPositive(_))));
        let mut nh = CMatrix::identity(2, 2).unscale(2.0);
        nh[(0, 1)] = c(0.1, 0.0);
        assert!(matches!(DensityMatrix::new(space, nh), Err(QuantumError::NotHermitian(_))));
    }

    #[test]
    fn partial_trace_of_product_returns_factor() {
        let a = qubit_plus().to_density();
        let b = DensityMatrix::maximally_mixed(HilbertSpace::new(vec![3]).unwrap());
        let ab = a.tensor(&b);
        let back = ab.partial_trace(&[0]).unwrap();
        assert!((back.matrix() - a.matrix()).camax() < 1e-14);
        let other = ab.partial_trace(&[1]).unwrap();
        assert!((other.matrix() - b.matrix()).camax() < 1e-14);
        assert!(ab.partial_trace(&[2]).is_err());
        assert!(ab.partial_trace(&[]).is_err());
    }

    #[test]
    fn tensor_of_pure_states_is_pure() {
        let a = qubit_plus().to_density();
        let ab = a.tensor(&a);
        assert_relative_eq!(ab.purity(), 1.0, epsilon = 1e-10);
        assert_relative_eq!(ab.trace(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn local_superop_matches_local_unitary() {
        let theta: f64 = 0.7;
        let mut u = CMatrix::zeros(2, 2);
        u[(0, 0)] = c(theta.cos(), 0.0);
        u[(0, 1)] = c(0.0, -theta.sin());
        u[(1, 0)] = c(0.0, -theta.sin());
        u[(1, 1)] = c(theta.cos(), 0.0);
        let rho = qubit_plus().to_density().tensor(&DensityMatrix::maximally_mixed(HilbertSpace::new(vec![3]).unwrap()));
        let rho = rho.tensor(&qubit_plus().to_density());
        for sub in [0, 2] {
            let a = rho.apply_local_unitary(sub, &u).unwrap();
            let b = rho.apply_local_superop(sub, &unitary_superop(&u)).unwrap();
            assert!((a.matrix() - b.matrix()).camax() < 1e-14);
        }
    }

    #[test]
    fn uhlmann_fidelity_reduces_to_overlap_for_pure() {
        let p = qubit_plus();
        let rho = DensityMatrix::maximally_mixed(HilbertSpace::new(vec![2]).unwrap());
        assert_relative_eq!(rho.fidelity(&p.to_density()), 0.5, epsilon = 1e-12);
        assert_relative_eq!(rho.fidelity_to_pure(&p), 0.5, epsilon = 1e-12);
        assert_relative_eq!(p.to_density().fidelity(&p.to_density()), 1.0, epsilon = 1e-10);
    }
}
