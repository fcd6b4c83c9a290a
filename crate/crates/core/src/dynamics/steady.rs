use super::liouvillian::Liouvillian;
use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, C64, ONE, ZERO};
use crate::state::DensityMatrix;

pub const DEGENERACY_TOL: f64 = 1e-6;
pub const STEADY_RESIDUAL_TOL: f64 = 1e-10;

/// `L` with its first row replaced by the trace functional `vec(I)^T`.
fn bordered(l: &ComplexMatrix) -> ComplexMatrix {
    let mut m = l.clone();
    for j in 0..16 {
        m[(0, j)] = if j % 5 == 0 { ONE } else { ZERO };
    }
    m
}

fn solve_bordered(l: &ComplexMatrix, rhs: nalgebra::DVector<C64>) -> Result<ComplexMatrix> {
    let x = bordered(l)
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NumericalInvariant("bordered generator is singular".into()))?;
    Ok(linalg::unvectorize(&x, 4))
}

/// Unique stationary state. The kernel is found by solving `L x = 0` with the
/// trace constraint replacing one (redundant) equation.
pub fn steady_state(l: &Liouvillian) -> Result<DensityMatrix> {
    let spectrum = l.spectrum();
    let (smallest, second) = (spectrum[0].norm(), spectrum[1].norm());
    if second <= DEGENERACY_TOL {
        return Err(Error::DegenerateSteadyState { smallest, second });
    }
    let mut rhs = nalgebra::DVector::zeros(16);
    rhs[0] = ONE;
    let x = solve_bordered(l.matrix(), rhs)?;
    let x = linalg::hermitize_checked(&x, 1e-8)?;
    let x = x.unscale(linalg::trace(&x).re);
    let residual = linalg::max_abs(&l.apply(&x));
    if residual > STEADY_RESIDUAL_TOL {
        return Err(Error::NumericalInvariant(format!(
            "steady-state residual {residual:e}"
        )));
    }
    DensityMatrix::new(x)
}

/// `d rho_ss / d theta` given `dL/dtheta`, from differentiating
/// `L rho_ss = 0` under the trace constraint.
pub fn steady_state_derivative(
    l: &Liouvillian,
    rho_ss: &DensityMatrix,
    d_l: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    let mut rhs = -(d_l * linalg::vectorize(rho_ss.matrix()));
    rhs[0] = ZERO;
    let x = solve_bordered(l.matrix(), rhs)?;
    Ok(linalg::hermitian_part(&x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{build_liouvillian, evolve, liouvillian_derivative, TimeGrid};
    use crate::estimation::EstimationTarget;
    use crate::linalg::max_abs;
    use crate::model::{decay_rates, InteractionKind, SystemParams};
    use crate::state::partial_trace_ancilla;

    #[test]
    fn decoupled_ancilla_relaxes_to_gibbs() {
        let p = SystemParams::reference(InteractionKind::XX, 0.0);
        let l = build_liouvillian(&p);
        // g = 0 leaves the probe populations conserved: degenerate kernel.
        assert!(matches!(
            steady_state(&l.unwrap()),
            Err(Error::DegenerateSteadyState { .. })
        ));

        // the ancilla block alone: propagate long and compare with detailed balance
        let (gm, gp) = decay_rates(&p);
        let rho0 = DensityMatrix::ground().tensor(&DensityMatrix::excited());
        let l = build_liouvillian(&p).unwrap();
        let t = 10.0 / p.gamma * 5.0;
        let traj = evolve(&l, &rho0, &TimeGrid::linear(t, 2).unwrap()).unwrap();
        let anc = traj.states()[1].partial_trace_probe().unwrap();
        let ratio = anc.matrix()[(0, 0)].re / anc.matrix()[(1, 1)].re;
        assert!((ratio - gp / gm).abs() < 1e-9, "{ratio} vs {}", gp / gm);
    }

    #[test]
    fn xz_probe_is_maximally_mixed() {
        let p = SystemParams::reference(InteractionKind::XZ, 0.08);
        let rho = steady_state(&build_liouvillian(&p).unwrap()).unwrap();
        let probe = partial_trace_ancilla(&rho).unwrap();
        assert!(max_abs(&(probe.matrix() - linalg::identity(2).scale(0.5))) < 1e-8);
    }

    #[test]
    fn zx_kernel_is_degenerate() {
        let p = SystemParams::reference(InteractionKind::ZX, 0.08);
        match steady_state(&build_liouvillian(&p).unwrap()) {
            Err(Error::DegenerateSteadyState { smallest, second }) => {
                assert!(smallest < 1e-10 && second < 1e-10)
            }
            other => panic!("expected degeneracy, got {other:?}"),
        }
    }

    #[test]
    fn cold_xz_kernel_is_numerically_degenerate() {
        let p = SystemParams {
            temperature: 0.01,
            ..SystemParams::reference(InteractionKind::XZ, 0.08)
        };
        assert!(matches!(
            steady_state(&build_liouvillian(&p).unwrap()),
            Err(Error::DegenerateSteadyState { .. })
        ));
    }

    #[test]
    fn derivative_matches_central_difference() {
        let p = SystemParams {
            temperature: 0.5,
            ..SystemParams::reference(InteractionKind::XX, 0.08)
        };
        let l = build_liouvillian(&p).unwrap();
        let rho = steady_state(&l).unwrap();
        for target in EstimationTarget::ALL {
            let exact =
                steady_state_derivative(&l, &rho, &liouvillian_derivative(&p, target)).unwrap();
            let theta = target.value(&p);
            let h = 1e-5 * theta;
            let at =
                |v: f64| steady_state(&build_liouvillian(&target.perturb(&p, v)).unwrap()).unwrap();
            let fd = (at(theta + h).into_matrix() - at(theta - h).into_matrix()).scale(0.5 / h);
            assert!(
                max_abs(&(fd - &exact)) < 1e-7 * max_abs(&exact).max(1e-3),
                "{target:?}"
            );
            assert!(linalg::trace(&exact).norm() < 1e-12);
        }
    }
}
