use crate::error::{Error, Result};
use crate::estimation::EstimationTarget;
use crate::linalg::{self, kron, pauli, ComplexMatrix, C64, I};
use crate::model::{self, SystemParams};

pub const TRACE_RESIDUAL_TOL: f64 = 1e-10;
pub const STATIONARY_EIGENVALUE_TOL: f64 = 1e-8;
pub const GROWTH_TOL: f64 = 1e-10;

/// `X -> -i[H, X]` on column-stacked matrices.
pub fn commutator_superop(h: &ComplexMatrix) -> ComplexMatrix {
    let id = linalg::identity(h.nrows());
    (kron(&id, h) - kron(&h.transpose(), &id)) * (-I)
}

/// `X -> A X A^dagger - {A^dagger A, X}/2` on column-stacked matrices.
pub fn dissipator_superop(a: &ComplexMatrix) -> ComplexMatrix {
    let id = linalg::identity(a.nrows());
    let ada = a.adjoint() * a;
    kron(&a.conjugate(), a) - kron(&id, &ada).scale(0.5) - kron(&ada.transpose(), &id).scale(0.5)
}

/// Ancilla lowering and raising operators embedded in the probe ⊗ ancilla space.
pub fn ancilla_jump_operators() -> (ComplexMatrix, ComplexMatrix) {
    let id = pauli::id();
    (kron(&id, &pauli::lowering()), kron(&id, &pauli::raising()))
}

/// Generator of the probe-ancilla master equation, with its spectrum sorted
/// by increasing modulus.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    matrix: ComplexMatrix,
    params: Option<SystemParams>,
    spectrum: Vec<C64>,
}

impl Liouvillian {
    /// Generator for `H` and the ancilla decay/excitation rates, validated.
    pub fn from_parts(h: &ComplexMatrix, gamma_minus: f64, gamma_plus: f64) -> Result<Self> {
        let (lower, raise) = ancilla_jump_operators();
        let mut matrix = commutator_superop(h);
        if gamma_minus != 0.0 {
            matrix += dissipator_superop(&lower).scale(gamma_minus);
        }
        if gamma_plus != 0.0 {
            matrix += dissipator_superop(&raise).scale(gamma_plus);
        }
        Self::from_matrix(matrix)
    }

    /// Wrap an arbitrary superoperator after checking trace preservation,
    /// existence of a stationary state and absence of growing modes.
    pub fn from_matrix(matrix: ComplexMatrix) -> Result<Self> {
        if matrix.shape() != (16, 16) {
            return Err(Error::DimensionMismatch {
                expected: "16x16".into(),
                actual: format!("{}x{}", matrix.nrows(), matrix.ncols()),
            });
        }
        if matrix
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::InvalidLiouvillian {
                check: "finite entries",
                residual: f64::NAN,
            });
        }
        let residual = trace_row_residual(&matrix);
        if residual > TRACE_RESIDUAL_TOL {
            return Err(Error::InvalidLiouvillian {
                check: "trace preservation",
                residual,
            });
        }
        let mut spectrum = linalg::eigenvalues(&matrix)?;
        spectrum.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
        let smallest = spectrum[0].norm();
        if smallest >= STATIONARY_EIGENVALUE_TOL {
            return Err(Error::InvalidLiouvillian {
                check: "stationary eigenvalue",
                residual: smallest,
            });
        }
        let growth = spectrum
            .iter()
            .map(|l| l.re)
            .fold(f64::NEG_INFINITY, f64::max);
        if growth > GROWTH_TOL {
            return Err(Error::InvalidLiouvillian {
                check: "no growing modes",
                residual: growth,
            });
        }
        Ok(Self {
            matrix,
            params: None,
            spectrum,
        })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn params(&self) -> Option<&SystemParams> {
        self.params.as_ref()
    }

    /// Eigenvalues ordered by increasing `|lambda|`.
    pub fn spectrum(&self) -> &[C64] {
        &self.spectrum
    }

    /// Smallest nonzero relaxation rate `min |Re lambda|` over the modes other
    /// than the stationary one. Zero for a degenerate kernel.
    pub fn spectral_gap(&self) -> f64 {
        self.spectrum[1..]
            .iter()
            .map(|l| -l.re)
            .filter(|r| *r > GROWTH_TOL)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn apply(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        let v = &self.matrix * linalg::vectorize(rho);
        linalg::unvectorize(&v, rho.nrows())
    }
}

/// Largest entry of `vec(I)^T L`.
pub fn trace_row_residual(matrix: &ComplexMatrix) -> f64 {
    let n = (matrix.nrows() as f64).sqrt().round() as usize;
    (0..matrix.ncols())
        .map(|col| {
            (0..n)
                .map(|i| matrix[(i * (n + 1), col)])
                .sum::<C64>()
                .norm()
        })
        .fold(0.0, f64::max)
}

pub fn build_liouvillian(p: &SystemParams) -> Result<Liouvillian> {
    p.validate()?;
    let (gamma_minus, gamma_plus) = model::decay_rates(p);
    let mut l = Liouvillian::from_parts(&model::total_hamiltonian(p), gamma_minus, gamma_plus)?;
    l.params = Some(*p);
    Ok(l)
}

/// Exact `dL/dtheta` for one estimation target.
pub fn liouvillian_derivative(p: &SystemParams, target: EstimationTarget) -> ComplexMatrix {
    let (lower, raise) = ancilla_jump_operators();
    let n = model::thermal_occupation(p.omega_a, p.temperature);
    let nn1 = model::occupation_variance(p.omega_a, p.temperature);
    let (d_minus, d_plus, d_h) = match target {
        EstimationTarget::Temperature => {
            let dn = p.gamma * nn1 * p.omega_a / (p.temperature * p.temperature);
            (dn, dn, None)
        }
        EstimationTarget::AncillaFrequency => {
            let dn = -p.gamma * nn1 / p.temperature;
            (dn, dn, Some(kron(&pauli::id(), &pauli::z()).scale(0.5)))
        }
        EstimationTarget::BathCoupling => (n + 1.0, n, None),
    };
    let mut d =
        dissipator_superop(&lower).scale(d_minus) + dissipator_superop(&raise).scale(d_plus);
    if let Some(h) = d_h {
        d += commutator_superop(&h);
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{commutator, max_abs, zeros};
    use crate::model::InteractionKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(n, n, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    #[test]
    fn zero_hamiltonian_without_bath_is_zero() {
        let l = Liouvillian::from_parts(&zeros(4), 0.0, 0.0).unwrap();
        assert_eq!(l.matrix(), &zeros(16));
    }

    #[test]
    fn closed_generator_acts_as_commutator() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = SystemParams::reference(InteractionKind::XXplusZX, 0.3);
        let h = model::total_hamiltonian(&p);
        let l = Liouvillian::from_parts(&h, 0.0, 0.0).unwrap();
        for _ in 0..20 {
            let rho = random_matrix(&mut rng, 4);
            let direct = commutator(&h, &rho) * (-I);
            assert!(max_abs(&(l.apply(&rho) - direct)) < 1e-14);
        }
    }

    #[test]
    fn dissipator_matches_direct_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 4);
        let rho = random_matrix(&mut rng, 4);
        let ada = a.adjoint() * &a;
        let direct = &a * &rho * a.adjoint() - (&ada * &rho + &rho * &ada).scale(0.5);
        let via_super = linalg::unvectorize(&(dissipator_superop(&a) * linalg::vectorize(&rho)), 4);
        assert!(max_abs(&(via_super - direct)) < 1e-13);
    }

    #[test]
    fn reference_generators_are_valid() {
        for kind in InteractionKind::ALL {
            let l = build_liouvillian(&SystemParams::reference(kind, 0.09)).unwrap();
            assert!(trace_row_residual(l.matrix()) < 1e-12);
            assert!(l.spectrum()[0].norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_trace_preserving_generator() {
        let mut m = zeros(16);
        m[(0, 0)] = C64::new(-1.0, 0.0);
        assert!(matches!(
            Liouvillian::from_matrix(m),
            Err(Error::InvalidLiouvillian {
                check: "trace preservation",
                ..
            })
        ));
    }

    #[test]
    fn derivative_matches_finite_difference_of_generator() {
        let p = SystemParams::reference(InteractionKind::XX, 0.06);
        for target in EstimationTarget::ALL {
            let theta = target.value(&p);
            let h = 1e-6 * theta;
            let up = build_liouvillian(&target.perturb(&p, theta + h)).unwrap();
            let down = build_liouvillian(&target.perturb(&p, theta - h)).unwrap();
            let fd = (up.matrix() - down.matrix()).scale(0.5 / h);
            let exact = liouvillian_derivative(&p, target);
            let scale = max_abs(&exact);
            assert!(max_abs(&(fd - exact)) < 1e-7 * scale.max(1.0), "{target:?}");
        }
    }
}
