//! Validated qubit and two-qubit states.

use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{self, pauli, ComplexMatrix, C64};

/// Default tolerance for the density-matrix invariants.
pub const STATE_TOL: f64 = 1e-10;

/// Hermitian, unit-trace, positive semidefinite matrix of dimension 2 or 4.
#[derive(Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl fmt::Debug for DensityMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DensityMatrix{}", self.matrix)
    }
}

impl DensityMatrix {
    /// Validate at the default tolerance. Drift below the tolerance is
    /// symmetrized away; anything larger is rejected.
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        Self::with_tolerance(matrix, STATE_TOL)
    }

    pub fn with_tolerance(matrix: ComplexMatrix, tol: f64) -> Result<Self> {
        let dim = matrix.nrows();
        if !matrix.is_square() || !(dim == 2 || dim == 4) {
            return Err(Error::DimensionMismatch {
                expected: "2x2 or 4x4".into(),
                actual: format!("{}x{}", matrix.nrows(), matrix.ncols()),
            });
        }
        if matrix
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::invalid_state("finiteness", "non-finite entry"));
        }
        let drift = linalg::hermiticity_drift(&matrix);
        if drift > tol {
            return Err(Error::invalid_state(
                "hermiticity",
                format!("max |rho - rho^dagger| = {drift:e}"),
            ));
        }
        let matrix = linalg::hermitian_part(&matrix);
        let tr = matrix.trace().re;
        if (tr - 1.0).abs() > tol {
            return Err(Error::invalid_state("unit trace", format!("trace = {tr}")));
        }
        let min_eig = linalg::hermitian_eigen_unchecked(matrix.clone()).values[0];
        if min_eig < -tol {
            return Err(Error::invalid_state(
                "positivity",
                format!("smallest eigenvalue {min_eig:e}"),
            ));
        }
        Ok(Self { matrix })
    }

    /// Projector onto a normalized pure state.
    pub fn pure(amplitudes: &[C64]) -> Result<Self> {
        let n = amplitudes.len();
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > STATE_TOL {
            return Err(Error::invalid_state(
                "unit trace",
                format!("|psi|^2 = {norm}"),
            ));
        }
        let m = ComplexMatrix::from_fn(n, n, |i, j| amplitudes[i] * amplitudes[j].conj());
        Self::new(m)
    }

    pub fn excited() -> Self {
        Self {
            matrix: linalg::diag(&[1.0, 0.0]),
        }
    }

    pub fn ground() -> Self {
        Self {
            matrix: linalg::diag(&[0.0, 1.0]),
        }
    }

    /// `|+> = (|e> + |g>)/sqrt 2`.
    pub fn plus() -> Self {
        Self {
            matrix: linalg::from_real_rows(2, &[0.5, 0.5, 0.5, 0.5]),
        }
    }

    /// `|-> = (|e> - |g>)/sqrt 2`.
    pub fn minus() -> Self {
        Self {
            matrix: linalg::from_real_rows(2, &[0.5, -0.5, -0.5, 0.5]),
        }
    }

    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        Self::new(linalg::identity(dim).scale(1.0 / dim as f64))
    }

    /// Qubit Gibbs state of `H = (omega/2) sigma_z` at temperature `t`.
    pub fn thermal_qubit(omega: f64, temperature: f64) -> Self {
        let x = omega / temperature;
        // p_e / p_g = exp(-x)
        let p_e = if x > 700.0 {
            0.0
        } else {
            1.0 / (1.0 + x.exp())
        };
        Self {
            matrix: linalg::diag(&[p_e, 1.0 - p_e]),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::hermitian_eigen_unchecked(self.matrix.clone()).values
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    /// `self ⊗ other` (this factor first).
    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        Self {
            matrix: linalg::kron(&self.matrix, &other.matrix),
        }
    }

    /// Probe state of a probe ⊗ ancilla state.
    pub fn partial_trace_ancilla(&self) -> Result<DensityMatrix> {
        self.require_dim(4)?;
        Ok(Self {
            matrix: trace_out_ancilla(&self.matrix),
        })
    }

    /// Ancilla state of a probe ⊗ ancilla state.
    pub fn partial_trace_probe(&self) -> Result<DensityMatrix> {
        self.require_dim(4)?;
        Ok(Self {
            matrix: trace_out_probe(&self.matrix),
        })
    }

    fn require_dim(&self, dim: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: format!("{dim}x{dim}"),
                actual: format!("{0}x{0}", self.dim()),
            });
        }
        Ok(())
    }

    pub fn bloch(&self) -> Result<BlochVector> {
        bloch_from_density(self)
    }
}

/// Tensor-factor order of a two-qubit operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factor {
    Probe,
    Ancilla,
}

/// `Tr_A` on any 4x4 operator (no state invariants required), so it also
/// applies to derivatives.
pub fn trace_out_ancilla(m: &ComplexMatrix) -> ComplexMatrix {
    assert_eq!(m.shape(), (4, 4), "expects a probe ⊗ ancilla operator");
    ComplexMatrix::from_fn(2, 2, |i, j| m[(2 * i, 2 * j)] + m[(2 * i + 1, 2 * j + 1)])
}

/// `Tr_P` on any 4x4 operator.
pub fn trace_out_probe(m: &ComplexMatrix) -> ComplexMatrix {
    assert_eq!(m.shape(), (4, 4), "expects a probe ⊗ ancilla operator");
    ComplexMatrix::from_fn(2, 2, |i, j| m[(i, j)] + m[(2 + i, 2 + j)])
}

/// Reduce a probe ⊗ ancilla operator to the factor `keep`.
pub fn reduce(m: &ComplexMatrix, keep: Factor) -> ComplexMatrix {
    match keep {
        Factor::Probe => trace_out_ancilla(m),
        Factor::Ancilla => trace_out_probe(m),
    }
}

/// `Tr_A` with input validation (the probe reduction of a two-qubit state).
pub fn partial_trace_ancilla(rho: &DensityMatrix) -> Result<DensityMatrix> {
    rho.partial_trace_ancilla()
}

/// `D = ½ Tr|a - b|`.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: format!("{0}x{0}", a.dim()),
            actual: format!("{0}x{0}", b.dim()),
        });
    }
    let diff = a.matrix() - b.matrix();
    let eig = linalg::hermitian_eigen(&diff)?;
    Ok(0.5 * eig.values.iter().map(|l| l.abs()).sum::<f64>())
}

/// Real Bloch vector with `rho = (I + r . sigma) / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let r = Self { x, y, z };
        let len = r.norm();
        if !(len <= 1.0 + STATE_TOL) {
            return Err(Error::invalid_state("|r| <= 1", format!("|r| = {len}")));
        }
        Ok(r)
    }

    /// Components of an arbitrary vector (no length check), e.g. a derivative.
    pub fn raw(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn dot(&self, o: &BlochVector) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// Pauli components `r_k = Tr(m sigma_k)` of any 2x2 operator.
pub fn pauli_components(m: &ComplexMatrix) -> BlochVector {
    assert_eq!(m.shape(), (2, 2), "expects a qubit operator");
    BlochVector::raw(
        2.0 * m[(0, 1)].re,
        -2.0 * m[(0, 1)].im,
        (m[(0, 0)] - m[(1, 1)]).re,
    )
}

pub fn bloch_from_density(rho: &DensityMatrix) -> Result<BlochVector> {
    rho.require_dim(2)?;
    let r = pauli_components(rho.matrix());
    BlochVector::new(r.x, r.y, r.z)
}

pub fn density_from_bloch(r: &BlochVector) -> Result<DensityMatrix> {
    let r = BlochVector::new(r.x, r.y, r.z)?;
    let [id, x, y, z] = pauli::all();
    let m = (id + x.scale(r.x) + y.scale(r.y) + z.scale(r.z)).scale(0.5);
    DensityMatrix::new(m)
}
