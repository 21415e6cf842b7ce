//! Small dense Hermitian linear algebra: pure states, density matrices,
//! fidelity, purity and von Neumann entropy.
//!
//! Matrices are stored column-major as [`nalgebra::DMatrix`] of
//! [`Complex64`]. Matrix functions (square root, logarithm) go through the
//! Hermitian eigendecomposition with eigenvalues in `[-tol, 0)` clamped to
//! zero.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Tolerance on the Euclidean norm of a [`PureState`].
pub const NORM_TOL: f64 = 1e-12;
/// Maximum entrywise deviation from Hermiticity.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Trace tolerance for physical states.
pub const TRACE_TOL: f64 = 1e-10;
/// Smallest eigenvalue accepted for a physical state at construction.
pub const PHYSICAL_EIG_TOL: f64 = 1e-10;
/// Smallest eigenvalue accepted by [`fidelity`].
pub const FIDELITY_EIG_TOL: f64 = 1e-8;
/// Smallest eigenvalue accepted by [`von_neumann_entropy`].
pub const ENTROPY_EIG_TOL: f64 = 1e-6;

/// A normalized state vector `|phi>`.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    amplitudes: Vec<Complex64>,
}

impl PureState {
    /// Wraps amplitudes that are already normalized.
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() < 2 {
            return Err(Error::validation(
                "pure state dimension >= 2",
                format!("got dimension {}", amplitudes.len()),
            ));
        }
        let norm = norm(&amplitudes);
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::validation(
                "pure state normalized",
                format!("norm is {norm:.17}"),
            ));
        }
        Ok(Self { amplitudes })
    }

    /// Normalizes `amplitudes`; fails on a zero vector.
    pub fn normalized(mut amplitudes: Vec<Complex64>) -> Result<Self> {
        let n = norm(&amplitudes);
        if n == 0.0 || !n.is_finite() {
            return Err(Error::validation(
                "pure state normalized",
                "cannot normalize a zero or non-finite vector",
            ));
        }
        for a in &mut amplitudes {
            *a /= n;
        }
        Self::new(amplitudes)
    }

    /// A real-amplitude state from unnormalized coefficients.
    pub fn from_real(coefficients: &[f64]) -> Result<Self> {
        Self::normalized(coefficients.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &PureState) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

/// A Hermitian `d x d` matrix.
///
/// Physical states (trace one, positive semidefinite) are flagged at
/// construction. Reconstructed candidates `rho_f = sum_j w_j rho_j` are
/// Hermitian but may be indefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    entries: DMatrix<Complex64>,
    physical: bool,
}

impl DensityMatrix {
    /// Accepts any Hermitian matrix (reconstructed candidates).
    pub fn hermitian(entries: DMatrix<Complex64>) -> Result<Self> {
        check_square(&entries)?;
        if entries.nrows() < 1 {
            return Err(Error::validation("density matrix dimension >= 1", "empty matrix"));
        }
        let asym = max_asymmetry(&entries);
        if asym > HERMITIAN_TOL || !asym.is_finite() {
            return Err(Error::validation(
                "density matrix Hermitian",
                format!("max |rho - rho^dagger| = {asym:e}"),
            ));
        }
        Ok(Self {
            entries,
            physical: false,
        })
    }

    /// Accepts a physical state: Hermitian, unit trace, positive semidefinite.
    pub fn physical(entries: DMatrix<Complex64>) -> Result<Self> {
        let mut rho = Self::hermitian(entries)?;
        let tr = rho.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::validation(
                "density matrix unit trace",
                format!("trace is {tr:.17}"),
            ));
        }
        let min = rho.min_eigenvalue();
        if min < -PHYSICAL_EIG_TOL {
            return Err(Error::NonPhysical(min));
        }
        rho.physical = true;
        Ok(rho)
    }

    /// `sum_j weights[j] * matrices[j]`, Hermitian by construction.
    pub fn combination(weights: &[f64], matrices: &[DensityMatrix]) -> Result<Self> {
        if weights.len() != matrices.len() {
            return Err(Error::DimensionMismatch {
                expected: matrices.len(),
                found: weights.len(),
            });
        }
        let d = common_dim(matrices)?;
        let mut acc = vec![Complex64::new(0.0, 0.0); d * d];
        for (w, m) in weights.iter().zip(matrices) {
            for (a, x) in acc.iter_mut().zip(m.as_slice()) {
                *a += x * *w;
            }
        }
        Self::hermitian(DMatrix::from_vec(d, d, acc))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    /// Column-major entries.
    pub fn as_slice(&self) -> &[Complex64] {
        self.entries.as_slice()
    }

    pub fn is_physical(&self) -> bool {
        self.physical
    }

    /// Real part of the trace (the imaginary part of a Hermitian trace is zero).
    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.entries[(i, i)].re).sum()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = hermitize(&self.entries)
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Wraps column-major entries already known to be Hermitian.
    pub(crate) fn from_hermitian_slice(entries: &[Complex64], d: usize) -> Self {
        Self {
            entries: DMatrix::from_column_slice(d, d, entries),
            physical: false,
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn max_asymmetry(&self) -> f64 {
        max_asymmetry(&self.entries)
    }

    /// Nearest physical state in the eigenbasis: negative eigenvalues are
    /// set to zero and the trace renormalized to one. A physical input is
    /// returned unchanged up to rounding.
    pub fn to_physical(&self) -> Result<DensityMatrix> {
        let eig = hermitize(&self.entries).symmetric_eigen();
        let clipped: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
        let total: f64 = clipped.iter().sum();
        if total <= 0.0 {
            return Err(Error::NonPhysical(self.min_eigenvalue()));
        }
        let scaled: Vec<f64> = clipped.iter().map(|l| l / total).collect();
        let m = from_spectrum(&eig.eigenvectors, &scaled);
        Ok(DensityMatrix {
            entries: hermitize(&m),
            physical: true,
        })
    }
}

fn check_square(m: &DMatrix<Complex64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    Ok(())
}

pub(crate) fn common_dim(matrices: &[DensityMatrix]) -> Result<usize> {
    let Some(first) = matrices.first() else {
        return Err(Error::validation("at least one detector", "empty detector list"));
    };
    let d = first.dim();
    for m in matrices {
        if m.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: m.dim(),
            });
        }
    }
    Ok(d)
}

fn max_asymmetry(m: &DMatrix<Complex64>) -> f64 {
    let d = m.nrows();
    let mut worst: f64 = 0.0;
    for j in 0..d {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `(m + m^dagger) / 2`.
fn hermitize(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// `U diag(values) U^dagger`.
fn from_spectrum(vectors: &DMatrix<Complex64>, values: &[f64]) -> DMatrix<Complex64> {
    let mut scaled = vectors.clone();
    for (j, &v) in values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(v);
    }
    scaled * vectors.adjoint()
}

/// Eigenvalues at or below this fraction of the spectral radius are treated
/// as exact zeros before taking square roots.
const SPECTRAL_CUTOFF: f64 = 64.0 * f64::EPSILON;

fn sqrt_psd(m: &DMatrix<Complex64>, tol: f64) -> Result<DMatrix<Complex64>> {
    let eig = hermitize(m).symmetric_eigen();
    let radius = eig.eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs()));
    let mut roots = Vec::with_capacity(eig.eigenvalues.len());
    for &l in eig.eigenvalues.iter() {
        if l < -tol {
            return Err(Error::NonPhysical(l));
        }
        roots.push(if l <= SPECTRAL_CUTOFF * radius { 0.0 } else { l.sqrt() });
    }
    Ok(from_spectrum(&eig.eigenvectors, &roots))
}

/// `|psi><psi|`.
pub fn outer_product(psi: &PureState) -> DensityMatrix {
    let d = psi.dim();
    let a = psi.amplitudes();
    let entries = DMatrix::from_fn(d, d, |i, j| a[i] * a[j].conj());
    DensityMatrix {
        entries,
        physical: true,
    }
}

/// Uhlmann fidelity `Tr sqrt(sqrt(a) b sqrt(a))`, in `[0, 1]`.
///
/// For two pure states this is `|<phi_a|phi_b>|`.
pub fn fidelity(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let min_b = b.min_eigenvalue();
    if min_b < -FIDELITY_EIG_TOL {
        return Err(Error::NonPhysical(min_b));
    }
    let root_a = sqrt_psd(a.entries(), FIDELITY_EIG_TOL)?;
    let inner = &root_a * b.entries() * &root_a;
    let eig = hermitize(&inner).symmetric_eigenvalues();
    let radius = eig.iter().fold(0.0f64, |acc, l| acc.max(l.abs()));
    let f: f64 = eig
        .iter()
        .filter(|&&l| l > SPECTRAL_CUTOFF * radius)
        .map(|l| l.sqrt())
        .sum();
    Ok(f.clamp(0.0, 1.0))
}

/// `-Tr rho ln rho` with the natural logarithm and `0 ln 0 = 0`.
///
/// Eigenvalues in `[-1e-6, 0)` are clamped to zero; anything more negative
/// is reported as [`Error::NonPhysical`].
pub fn von_neumann_entropy(rho: &DensityMatrix) -> Result<f64> {
    entropy_from_eigenvalues(&rho.eigenvalues(), ENTROPY_EIG_TOL)
}

pub(crate) fn entropy_from_eigenvalues(eigenvalues: &[f64], tol: f64) -> Result<f64> {
    let mut s = 0.0;
    for &l in eigenvalues {
        if l < -tol {
            return Err(Error::NonPhysical(l));
        }
        if l > 0.0 {
            s -= l * l.ln();
        }
    }
    Ok(s.max(0.0))
}

/// Entropy of the positive part of a spectrum. Negative eigenvalues of an
/// indefinite candidate are left out of the sum rather than rejected.
pub fn positive_part_entropy(eigenvalues: &[f64]) -> f64 {
    let s: f64 = eigenvalues
        .iter()
        .filter(|&&l| l > 0.0)
        .map(|&l| -l * l.ln())
        .sum();
    s.max(0.0)
}

/// `Tr rho^2`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    // Tr(rho rho) = sum |rho_mn|^2 for Hermitian rho
    rho.as_slice().iter().map(|z| z.norm_sqr()).sum()
}

/// `sum_mn |(rho^2 - rho)_mn|^2` for a Hermitian `rho` in column-major order.
///
/// Only the upper triangle of `rho^2 - rho` is formed.
pub(crate) fn idempotency_loss(rho: &[Complex64], d: usize) -> f64 {
    let mut total = 0.0;
    for n in 0..d {
        let col_n = &rho[n * d..(n + 1) * d];
        for m in 0..=n {
            // (rho^2)_mn = sum_k rho_mk rho_kn = sum_k conj(rho_km) rho_kn
            let col_m = &rho[m * d..(m + 1) * d];
            let mut s = -col_n[m];
            for k in 0..d {
                s += col_m[k].conj() * col_n[k];
            }
            let w = if m == n { 1.0 } else { 2.0 };
            total += w * s.norm_sqr();
        }
    }
    total
}
