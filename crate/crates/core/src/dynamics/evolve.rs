use std::collections::HashMap;
use std::sync::OnceLock;

use nalgebra::{DMatrix, SMatrix, SVector};

use super::grid::TimeGrid;
use super::liouvillian::Liouvillian;
use crate::error::{Error, Result};
use crate::linalg::{self, kron, pauli, ComplexMatrix, C64};
use crate::state::{self, DensityMatrix, Factor};

pub type Real16 = SMatrix<f64, 16, 16>;
pub type Coeffs = SVector<f64, 16>;

/// States along a trajectory are accepted at this looser tolerance.
pub const TRAJECTORY_TOL: f64 = 1e-8;
pub const RENORMALIZE_THRESHOLD: f64 = 1e-12;

/// Orthonormal Hermitian operator basis `E_{4m+n} = sigma_m ⊗ sigma_n / 2`
/// (order I, X, Y, Z) as columns of column-stacked vectors.
fn basis() -> &'static ComplexMatrix {
    static BASIS: OnceLock<ComplexMatrix> = OnceLock::new();
    BASIS.get_or_init(|| {
        let paulis = pauli::all();
        let mut t = ComplexMatrix::zeros(16, 16);
        for (m, pm) in paulis.iter().enumerate() {
            for (n, pn) in paulis.iter().enumerate() {
                let e = kron(pm, pn).scale(0.5);
                t.set_column(4 * m + n, &linalg::vectorize(&e));
            }
        }
        t
    })
}

/// Real coordinates `c_k = Tr(E_k rho)` of a Hermitian 4x4 operator.
pub fn to_coefficients(m: &ComplexMatrix) -> Coeffs {
    let v = basis().adjoint() * linalg::vectorize(m);
    Coeffs::from_fn(|k, _| v[k].re)
}

pub fn from_coefficients(c: &Coeffs) -> ComplexMatrix {
    let cv = nalgebra::DVector::from_fn(16, |k, _| C64::new(c[k], 0.0));
    linalg::unvectorize(&(basis() * cv), 4)
}

/// Probe Bloch components `Tr(rho sigma_m ⊗ I)` from the coefficients.
pub fn probe_bloch(c: &Coeffs) -> [f64; 3] {
    [2.0 * c[4], 2.0 * c[8], 2.0 * c[12]]
}

/// Ancilla Bloch components `Tr(rho I ⊗ sigma_n)`.
pub fn ancilla_bloch(c: &Coeffs) -> [f64; 3] {
    [2.0 * c[1], 2.0 * c[2], 2.0 * c[3]]
}

/// The generator in the Hermitian operator basis, where it is real.
pub fn real_generator(l: &Liouvillian) -> Result<Real16> {
    let r = basis().adjoint() * l.matrix() * basis();
    let imag = r.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let scale = r.iter().map(|z| z.norm()).fold(1.0, f64::max);
    if imag > 1e-12 * scale {
        return Err(Error::NumericalInvariant(format!(
            "generator does not preserve Hermiticity: imaginary part {imag:e}"
        )));
    }
    Ok(Real16::from_fn(|i, j| r[(i, j)].re))
}

pub fn real_expm(r: &Real16, t: f64) -> Real16 {
    let d = DMatrix::from_column_slice(16, 16, (r * t).as_slice());
    Real16::from_column_slice(linalg::expm(&d).as_slice())
}

/// Exact one-step propagators `exp(L dt)`, cached per step length.
#[derive(Debug, Clone)]
pub struct Propagator {
    generator: Real16,
    cache: HashMap<u64, Real16>,
}

impl Propagator {
    pub fn new(l: &Liouvillian) -> Result<Self> {
        Ok(Self::from_real(real_generator(l)?))
    }

    pub fn from_real(generator: Real16) -> Self {
        Self {
            generator,
            cache: HashMap::new(),
        }
    }

    pub fn generator(&self) -> &Real16 {
        &self.generator
    }

    pub fn step(&mut self, dt: f64) -> &Real16 {
        let g = self.generator;
        self.cache
            .entry(dt.to_bits())
            .or_insert_with(|| real_expm(&g, dt))
    }

    /// Propagate any operator (not necessarily a state) through `times`.
    pub fn propagate(&mut self, c0: &Coeffs, times: &[f64]) -> Result<Vec<Coeffs>> {
        let mut out = Vec::with_capacity(times.len());
        let mut c = *c0;
        out.push(c);
        for w in times.windows(2) {
            c = self.step(w[1] - w[0]) * c;
            if c.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { time: w[1] });
            }
            out.push(c);
        }
        Ok(out)
    }

    /// Propagate the state `c0` through `times` (which must start at 0),
    /// keeping its trace at one.
    pub fn run(&mut self, c0: &Coeffs, times: &[f64]) -> Result<(Vec<Coeffs>, TraceMonitor)> {
        let mut out = Vec::with_capacity(times.len());
        let mut monitor = TraceMonitor::default();
        let mut c = *c0;
        out.push(c);
        for w in times.windows(2) {
            c = self.step(w[1] - w[0]) * c;
            if c.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { time: w[1] });
            }
            monitor.observe(&mut c, w[1]);
            out.push(c);
        }
        Ok((out, monitor))
    }
}

/// Trace bookkeeping during propagation; the trace is `2 c_0`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TraceMonitor {
    pub max_trace_drift: f64,
    pub renormalizations: usize,
}

impl TraceMonitor {
    fn observe(&mut self, c: &mut Coeffs, t: f64) {
        let tr = 2.0 * c[0];
        let drift = (tr - 1.0).abs();
        self.max_trace_drift = self.max_trace_drift.max(drift);
        if drift > RENORMALIZE_THRESHOLD {
            log::info!("trace drift {drift:e} at t = {t}; renormalizing");
            *c /= tr;
            self.renormalizations += 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolutionDiagnostics {
    pub max_trace_drift: f64,
    pub renormalizations: usize,
    pub min_eigenvalue: f64,
}

/// `rho_S(t)` sampled on a grid.
#[derive(Debug, Clone)]
pub struct TrajectoryGrid {
    times: Vec<f64>,
    states: Vec<DensityMatrix>,
    diagnostics: EvolutionDiagnostics,
}

impl TrajectoryGrid {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[DensityMatrix] {
        &self.states
    }

    pub fn diagnostics(&self) -> EvolutionDiagnostics {
        self.diagnostics
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Coefficient-level propagation without per-state validation.
pub fn evolve_coefficients(
    l: &Liouvillian,
    rho0: &DensityMatrix,
    grid: &TimeGrid,
) -> Result<(Vec<Coeffs>, TraceMonitor)> {
    let rho0 = require_two_qubit(rho0)?;
    Propagator::new(l)?.run(&to_coefficients(rho0.matrix()), grid.times())
}

pub fn evolve(l: &Liouvillian, rho0: &DensityMatrix, grid: &TimeGrid) -> Result<TrajectoryGrid> {
    let (coeffs, monitor) = evolve_coefficients(l, rho0, grid)?;
    let mut min_eigenvalue = f64::INFINITY;
    let mut states = Vec::with_capacity(coeffs.len());
    for (c, &t) in coeffs.iter().zip(grid.times()) {
        let rho =
            DensityMatrix::with_tolerance(from_coefficients(c), TRAJECTORY_TOL).map_err(|e| {
                Error::NumericalInvariant(format!(
                    "propagated state at t = {t} is not a density matrix: {e}"
                ))
            })?;
        min_eigenvalue = min_eigenvalue.min(rho.eigenvalues()[0]);
        states.push(rho);
    }
    Ok(TrajectoryGrid {
        times: grid.times().to_vec(),
        states,
        diagnostics: EvolutionDiagnostics {
            max_trace_drift: monitor.max_trace_drift,
            renormalizations: monitor.renormalizations,
            min_eigenvalue,
        },
    })
}

pub fn reduce_probe(traj: &TrajectoryGrid) -> Result<Vec<DensityMatrix>> {
    reduce(traj, Factor::Probe)
}

pub fn reduce_ancilla(traj: &TrajectoryGrid) -> Result<Vec<DensityMatrix>> {
    reduce(traj, Factor::Ancilla)
}

fn reduce(traj: &TrajectoryGrid, keep: Factor) -> Result<Vec<DensityMatrix>> {
    traj.states
        .iter()
        .map(|rho| DensityMatrix::with_tolerance(state::reduce(rho.matrix(), keep), TRAJECTORY_TOL))
        .collect()
}

fn require_two_qubit(rho: &DensityMatrix) -> Result<&DensityMatrix> {
    if rho.dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: "4x4".into(),
            actual: format!("{0}x{0}", rho.dim()),
        });
    }
    Ok(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::build_liouvillian;
    use crate::linalg::{max_abs, zeros};
    use crate::model::{self, InteractionKind, SystemParams};

    fn rk4(
        l: &ComplexMatrix,
        v0: &nalgebra::DVector<C64>,
        dt: f64,
        steps: usize,
    ) -> nalgebra::DVector<C64> {
        let mut v = v0.clone();
        let h = C64::new(dt, 0.0);
        for _ in 0..steps {
            let k1 = l * &v;
            let k2 = l * (&v + &k1 * (h * 0.5));
            let k3 = l * (&v + &k2 * (h * 0.5));
            let k4 = l * (&v + &k3 * h);
            v += (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * (h / 6.0);
        }
        v
    }

    #[test]
    fn coefficient_round_trip() {
        let rho = DensityMatrix::plus().tensor(&DensityMatrix::thermal_qubit(0.99, 0.3));
        let c = to_coefficients(rho.matrix());
        assert!(max_abs(&(from_coefficients(&c) - rho.matrix())) < 1e-15);
        assert!((2.0 * c[0] - 1.0).abs() < 1e-15);
        assert!((probe_bloch(&c)[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_generator_keeps_the_state() {
        let l = Liouvillian::from_parts(&zeros(4), 0.0, 0.0).unwrap();
        let rho0 = DensityMatrix::plus().tensor(&DensityMatrix::excited());
        let traj = evolve(&l, &rho0, &TimeGrid::linear(10.0, 5).unwrap()).unwrap();
        for s in traj.states() {
            assert!(max_abs(&(s.matrix() - rho0.matrix())) < 1e-15);
        }
    }

    #[test]
    fn eigenstate_of_closed_dynamics_is_stationary() {
        let p = SystemParams::reference(InteractionKind::XX, 0.0);
        let l = Liouvillian::from_parts(&model::total_hamiltonian(&p), 0.0, 0.0).unwrap();
        let rho0 = DensityMatrix::ground().tensor(&DensityMatrix::excited());
        let traj = evolve(&l, &rho0, &TimeGrid::linear(100.0, 11).unwrap()).unwrap();
        for s in traj.states() {
            assert!(max_abs(&(s.matrix() - rho0.matrix())) < 1e-13);
        }
    }

    #[test]
    fn matches_rk4_at_spot_times() {
        let p = SystemParams::reference(InteractionKind::XX, 0.08);
        let l = build_liouvillian(&p).unwrap();
        let rho0 =
            DensityMatrix::ground().tensor(&DensityMatrix::thermal_qubit(p.omega_a, p.temperature));
        let grid = TimeGrid::new(vec![0.0, 10.0, 100.0, 1000.0]).unwrap();
        let traj = evolve(&l, &rho0, &grid).unwrap();
        let dt = 1e-3;
        let mut v = linalg::vectorize(rho0.matrix());
        let mut t_prev = 0.0;
        for (k, &t) in grid.times().iter().enumerate().skip(1) {
            v = rk4(l.matrix(), &v, dt, ((t - t_prev) / dt).round() as usize);
            t_prev = t;
            let dev = max_abs(&(linalg::unvectorize(&v, 4) - traj.states()[k].matrix()));
            assert!(dev < 1e-6, "t = {t}: {dev:e}");
        }
    }

    #[test]
    fn probe_reduction_of_decoupled_closed_dynamics() {
        let p = SystemParams::reference(InteractionKind::XZ, 0.0);
        let l = Liouvillian::from_parts(&model::total_hamiltonian(&p), 0.0, 0.0).unwrap();
        let rho0 = DensityMatrix::plus().tensor(&DensityMatrix::excited());
        let grid = TimeGrid::linear(5.0, 6).unwrap();
        let probe = reduce_probe(&evolve(&l, &rho0, &grid).unwrap()).unwrap();
        assert_eq!(probe.len(), 6);
        assert!(max_abs(&(probe[0].matrix() - DensityMatrix::plus().matrix())) < 1e-15);
        for (rho, &t) in probe.iter().zip(grid.times()) {
            // free precession: rho_eg = exp(-i omega_p t)/2
            let expect = C64::from_polar(0.5, -p.omega_p * t);
            assert!((rho.matrix()[(0, 1)] - expect).norm() < 1e-13);
        }
    }

    #[test]
    fn xx_probe_stays_diagonal() {
        let p = SystemParams::reference(InteractionKind::XX, 0.08);
        let l = build_liouvillian(&p).unwrap();
        let rho0 = DensityMatrix::ground().tensor(&DensityMatrix::excited());
        let probe = reduce_probe(&evolve(&l, &rho0, &TimeGrid::default_for(2e4).unwrap()).unwrap())
            .unwrap();
        let off = probe
            .iter()
            .map(|r| r.matrix()[(0, 1)].norm())
            .fold(0.0, f64::max);
        assert!(off < 1e-8, "{off:e}");
    }
}
