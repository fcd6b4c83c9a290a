//! Fisher information of evolved and stationary states.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    self, ancilla_bloch, build_liouvillian, from_coefficients, probe_bloch, to_coefficients,
    Coeffs, Propagator, TimeGrid, TraceMonitor,
};
use crate::error::{Error, Result};
use crate::linalg::{self, pauli, ComplexMatrix, C64};
use crate::model::{InteractionKind, SystemParams};
use crate::state::{self, pauli_components, BlochVector, DensityMatrix, Factor};

pub const SLD_CUTOFF: f64 = 1e-12;
pub const RANK_WARNING_WEIGHT: f64 = 1e-6;
pub const PURE_TOL: f64 = 1e-12;
pub const PURE_CONSISTENCY_TOL: f64 = 1e-6;
pub const CLAMP_TOL: f64 = 1e-10;
pub const VARIANCE_TOL: f64 = 1e-12;
pub const RICHARDSON_TOL: f64 = 1e-5;
/// Coefficient-level round-off assumed for propagated states; divided by the
/// step it becomes the absolute noise floor of the Richardson comparison.
pub const PROPAGATION_NOISE: f64 = 1e-12;
pub const CROSS_CHECK_TOL: f64 = 1e-8;
/// One probe sample in this many is re-evaluated with the SLD formula.
pub const CROSS_CHECK_STRIDE: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimationTarget {
    #[serde(rename = "T", alias = "temperature")]
    Temperature,
    #[serde(rename = "omega_a", alias = "wA")]
    AncillaFrequency,
    #[serde(rename = "gamma")]
    BathCoupling,
}

impl EstimationTarget {
    pub const ALL: [EstimationTarget; 3] = [
        Self::Temperature,
        Self::AncillaFrequency,
        Self::BathCoupling,
    ];

    /// The `SystemParams` field this target perturbs.
    pub fn field(self) -> &'static str {
        match self {
            Self::Temperature => "temperature",
            Self::AncillaFrequency => "omega_a",
            Self::BathCoupling => "gamma",
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Self::Temperature => "T",
            Self::AncillaFrequency => "wA",
            Self::BathCoupling => "gamma",
        }
    }

    pub fn value(self, p: &SystemParams) -> f64 {
        match self {
            Self::Temperature => p.temperature,
            Self::AncillaFrequency => p.omega_a,
            Self::BathCoupling => p.gamma,
        }
    }

    pub fn perturb(self, p: &SystemParams, value: f64) -> SystemParams {
        let mut q = *p;
        match self {
            Self::Temperature => q.temperature = value,
            Self::AncillaFrequency => q.omega_a = value,
            Self::BathCoupling => q.gamma = value,
        }
        q
    }

    /// Central-difference step `1e-5 max(|theta|, 1e-2)`.
    pub fn step(self, p: &SystemParams) -> f64 {
        1e-5 * self.value(p).abs().max(1e-2)
    }

    /// Larger step for differences of stationary states, whose solves carry
    /// more rounding than a propagation.
    pub fn stationary_step(self, p: &SystemParams) -> f64 {
        10.0 * self.step(p)
    }
}

impl fmt::Display for EstimationTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for EstimationTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "T" | "temperature" => Ok(Self::Temperature),
            "wA" | "omega_a" => Ok(Self::AncillaFrequency),
            "gamma" => Ok(Self::BathCoupling),
            _ => Err(Error::invalid_param(
                "target",
                format!("unknown target `{s}` (T, omega_a, gamma)"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subsystem {
    Probe,
    Ancilla,
    Full,
}

impl Subsystem {
    pub const ALL: [Subsystem; 3] = [Self::Probe, Self::Ancilla, Self::Full];

    pub fn name(self) -> &'static str {
        match self {
            Self::Probe => "probe",
            Self::Ancilla => "ancilla",
            Self::Full => "full",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Observable {
    #[serde(rename = "sigma_x")]
    SigmaX,
    #[serde(rename = "sigma_z")]
    SigmaZ,
}

impl Observable {
    pub fn matrix(self) -> ComplexMatrix {
        match self {
            Self::SigmaX => pauli::x(),
            Self::SigmaZ => pauli::z(),
        }
    }
}

/// Result of the spectral SLD formula together with the weight of the
/// derivative that fell into modes below the eigenvalue cutoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SldQfi {
    pub value: f64,
    pub excluded_weight: f64,
}

impl SldQfi {
    pub fn rank_deficient(&self) -> bool {
        self.excluded_weight > RANK_WARNING_WEIGHT
    }
}

pub fn qfi_sld_detailed(rho: &DensityMatrix, drho: &ComplexMatrix) -> Result<SldQfi> {
    if drho.shape() != rho.matrix().shape() {
        return Err(Error::DimensionMismatch {
            expected: format!("{0}x{0}", rho.dim()),
            actual: format!("{}x{}", drho.nrows(), drho.ncols()),
        });
    }
    let drho = linalg::hermitize_checked(drho, 1e-8)?;
    let mut eig = linalg::hermitian_eigen(rho.matrix())?;
    if rho.dim() == 2 && eig.values[1] > 0.0 {
        eig.values[0] = linalg::qubit_determinant(rho.matrix()) / eig.values[1];
    }
    let rotated = eig.vectors.adjoint() * drho * &eig.vectors;
    let n = rho.dim();
    let (mut value, mut excluded_weight) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let w = rotated[(i, j)].norm_sqr();
            let s = eig.values[i] + eig.values[j];
            if s > SLD_CUTOFF {
                value += 2.0 * w / s;
            } else {
                excluded_weight += w;
            }
        }
    }
    let out = SldQfi {
        value,
        excluded_weight,
    };
    if out.rank_deficient() {
        log::warn!(
            "SLD: derivative weight {excluded_weight:e} lies in the vanishing subspace of rho"
        );
    }
    Ok(out)
}

/// `F = 2 sum |<i|drho|j>|^2 / (l_i + l_j)` over pairs with `l_i + l_j > 1e-12`.
pub fn qfi_sld(rho: &DensityMatrix, drho: &ComplexMatrix) -> Result<f64> {
    Ok(qfi_sld_detailed(rho, drho)?.value)
}

/// Qubit QFI from the Bloch vector and its derivative.
pub fn qfi_bloch_vectors(r: &BlochVector, dr: &BlochVector) -> Result<f64> {
    let r = BlochVector::new(r.x, r.y, r.z)?;
    let (px, ex) = linalg::exact_product(r.x, r.x);
    let (py, ey) = linalg::exact_product(r.y, r.y);
    let (pz, ez) = linalg::exact_product(r.z, r.z);
    bloch_formula(
        &r,
        dr,
        linalg::compensated_sum(&[1.0, -px, -py, -pz, -ex, -ey, -ez]),
    )
}

/// `|dr|^2 + (r . dr)^2 / (1 - |r|^2)` with the deficit `1 - |r|^2` supplied.
fn bloch_formula(r: &BlochVector, dr: &BlochVector, deficit: f64) -> Result<f64> {
    let rdr = r.dot(dr);
    if deficit < PURE_TOL {
        if rdr.abs() >= PURE_CONSISTENCY_TOL {
            return Err(Error::InconsistentPureFamily(rdr.abs()));
        }
        return Ok(dr.norm_sqr());
    }
    Ok(dr.norm_sqr() + rdr * rdr / deficit)
}

pub fn qfi_bloch(rho: &DensityMatrix, drho: &ComplexMatrix) -> Result<f64> {
    let r = rho.bloch()?;
    let drho = linalg::hermitize_checked(drho, 1e-8)?;
    bloch_formula(
        &r,
        &pauli_components(&drho),
        4.0 * linalg::qubit_determinant(rho.matrix()),
    )
}

/// Fisher information of a projective Pauli measurement on a qubit.
pub fn classical_fi(
    rho: &DensityMatrix,
    drho: &ComplexMatrix,
    observable: Observable,
) -> Result<f64> {
    if rho.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: "2x2".into(),
            actual: format!("{0}x{0}", rho.dim()),
        });
    }
    let o = observable.matrix();
    let mean = linalg::trace(&(rho.matrix() * &o)).re;
    let slope = linalg::trace(&(drho * &o)).re;
    fi_from_moments(mean, slope)
}

fn fi_from_moments(mean: f64, slope: f64) -> Result<f64> {
    let variance = 1.0 - mean * mean;
    if variance < VARIANCE_TOL {
        if slope.abs() < VARIANCE_TOL {
            return Ok(0.0);
        }
        return Err(Error::UnboundedFisherInformation { slope });
    }
    Ok(slope * slope / variance)
}

/// Outcome of comparing the central differences at `h` and `h/2`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RichardsonReport {
    pub checked: usize,
    pub failures: usize,
    /// Largest discrepancy relative to `max(|fine|, noise floor)`.
    pub max_relative: f64,
    /// `(t, |coarse|, |fine|)` at the worst failing sample (max-abs norms).
    pub worst: Option<(f64, f64, f64)>,
    worst_relative: f64,
}

impl RichardsonReport {
    fn observe(&mut self, t: f64, coarse: &Coeffs, fine: &Coeffs, h: f64) {
        self.checked += 1;
        let diff = (coarse - fine).amax();
        let scale = fine.amax();
        let floor = PROPAGATION_NOISE / h;
        let relative = diff / scale.max(floor);
        self.max_relative = self.max_relative.max(relative);
        if diff > RICHARDSON_TOL * scale + floor {
            self.failures += 1;
            if relative > self.worst_relative {
                self.worst_relative = relative;
                self.worst = Some((t, coarse.amax(), scale));
            }
        }
    }

    pub fn into_result(self) -> Result<Self> {
        match self.worst {
            Some((time, coarse, fine)) => Err(Error::RichardsonMismatch { time, coarse, fine }),
            None => Ok(self),
        }
    }
}

/// `rho_S(t)` and `d rho_S(t) / d theta` on a grid, in the real operator basis.
#[derive(Debug, Clone)]
pub struct StateDerivative {
    pub times: Vec<f64>,
    pub states: Vec<Coeffs>,
    pub derivatives: Vec<Coeffs>,
    pub step: f64,
    pub richardson: RichardsonReport,
    pub trace: TraceMonitor,
}

impl StateDerivative {
    pub fn state(&self, k: usize) -> Result<DensityMatrix> {
        DensityMatrix::with_tolerance(from_coefficients(&self.states[k]), dynamics::TRAJECTORY_TOL)
    }

    pub fn derivative(&self, k: usize) -> ComplexMatrix {
        from_coefficients(&self.derivatives[k])
    }

    /// Reduced state and derivative of one qubit at sample `k`.
    pub fn reduced(&self, k: usize, keep: Factor) -> Result<(DensityMatrix, ComplexMatrix)> {
        let rho = DensityMatrix::with_tolerance(
            state::reduce(&from_coefficients(&self.states[k]), keep),
            dynamics::TRAJECTORY_TOL,
        )?;
        Ok((
            rho,
            state::reduce(&from_coefficients(&self.derivatives[k]), keep),
        ))
    }

    fn bloch(&self, k: usize, keep: Factor) -> (BlochVector, BlochVector) {
        let pick = match keep {
            Factor::Probe => probe_bloch,
            Factor::Ancilla => ancilla_bloch,
        };
        let [x, y, z] = pick(&self.states[k]);
        let [dx, dy, dz] = pick(&self.derivatives[k]);
        (BlochVector::raw(x, y, z), BlochVector::raw(dx, dy, dz))
    }
}

fn evolve_at(
    p: &SystemParams,
    c0: &Coeffs,
    grid: &TimeGrid,
) -> Result<(Vec<Coeffs>, TraceMonitor)> {
    Propagator::new(&build_liouvillian(p)?)?.run(c0, grid.times())
}

/// Central finite difference of two full evolutions at `theta +- h`, checked
/// against the same difference at `h/2`.
pub fn state_derivative_trajectory(
    p: &SystemParams,
    target: EstimationTarget,
    rho0: &DensityMatrix,
    grid: &TimeGrid,
) -> Result<StateDerivative> {
    p.validate()?;
    if rho0.dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: "4x4".into(),
            actual: format!("{0}x{0}", rho0.dim()),
        });
    }
    let theta = target.value(p);
    let h = target.step(p);
    if !(theta > h) {
        return Err(Error::invalid_param(
            target.field(),
            format!("value {theta} must exceed the step {h}"),
        ));
    }
    let c0 = to_coefficients(rho0.matrix());
    let (states, trace) = evolve_at(p, &c0, grid)?;
    let run = |v: f64| evolve_at(&target.perturb(p, v), &c0, grid).map(|r| r.0);
    let (up, down) = (run(theta + h)?, run(theta - h)?);
    let (up2, down2) = (run(theta + h / 2.0)?, run(theta - h / 2.0)?);

    let mut richardson = RichardsonReport::default();
    let mut derivatives = Vec::with_capacity(states.len());
    for (k, &t) in grid.times().iter().enumerate() {
        let coarse = (up[k] - down[k]) / (2.0 * h);
        let fine = (up2[k] - down2[k]) / h;
        richardson.observe(t, &coarse, &fine, h);
        derivatives.push(coarse);
    }
    if richardson.failures > 0 {
        log::warn!("{} Richardson failures for {target}", richardson.failures);
    }
    Ok(StateDerivative {
        times: grid.times().to_vec(),
        states,
        derivatives,
        step: h,
        richardson,
        trace,
    })
}

/// `d rho_S(t) / d theta` as matrices.
pub fn state_derivative(
    p: &SystemParams,
    target: EstimationTarget,
    rho0: &DensityMatrix,
    grid: &TimeGrid,
) -> Result<Vec<ComplexMatrix>> {
    let d = state_derivative_trajectory(p, target, rho0, grid)?;
    d.richardson.into_result()?;
    Ok(d.derivatives.iter().map(from_coefficients).collect())
}

/// Clamp round-off negatives, reject anything more negative.
fn clamp(value: f64, counter: &mut usize) -> Result<f64> {
    if value >= 0.0 {
        Ok(value)
    } else if value >= -CLAMP_TOL {
        *counter += 1;
        log::debug!("clamping Fisher information {value:e} to 0");
        Ok(0.0)
    } else {
        Err(Error::NumericalInvariant(format!(
            "negative Fisher information {value:e}"
        )))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CurveDiagnostics {
    pub clamped: usize,
    pub rank_warnings: usize,
    pub cross_checks: usize,
    pub max_cross_check_relative: f64,
    pub richardson: RichardsonReport,
    pub max_trace_drift: f64,
    pub renormalizations: usize,
}

#[derive(Debug, Clone)]
pub struct FisherCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub target: EstimationTarget,
    pub interaction: InteractionKind,
    pub subsystem: Subsystem,
    pub diagnostics: CurveDiagnostics,
}

impl FisherCurve {
    pub fn supremum(&self) -> (f64, f64) {
        self.times
            .iter()
            .zip(&self.values)
            .fold((f64::NAN, f64::NEG_INFINITY), |acc, (&t, &v)| {
                if v > acc.1 {
                    (t, v)
                } else {
                    acc
                }
            })
    }
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-14 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// QFI of one subsystem at sample `k`; probe and ancilla use the Bloch
/// formula, the full state the SLD formula.
pub fn subsystem_qfi(
    d: &StateDerivative,
    k: usize,
    subsystem: Subsystem,
    diag: &mut CurveDiagnostics,
) -> Result<f64> {
    let raw = match subsystem {
        Subsystem::Probe | Subsystem::Ancilla => {
            let keep = if subsystem == Subsystem::Probe {
                Factor::Probe
            } else {
                Factor::Ancilla
            };
            let (r, dr) = d.bloch(k, keep);
            let value = qfi_bloch_vectors(&r, &dr)?;
            if subsystem == Subsystem::Probe && k % CROSS_CHECK_STRIDE == 0 {
                let (rho, drho) = d.reduced(k, keep)?;
                let sld = qfi_sld_detailed(&rho, &drho)?;
                diag.cross_checks += 1;
                let gap = relative_gap(value, sld.value);
                diag.max_cross_check_relative = diag.max_cross_check_relative.max(gap);
                if gap > CROSS_CHECK_TOL && !sld.rank_deficient() {
                    return Err(Error::NumericalInvariant(format!(
                        "Bloch QFI {value:e} and SLD QFI {:e} disagree at t = {}",
                        sld.value, d.times[k]
                    )));
                }
            }
            value
        }
        Subsystem::Full => {
            let sld = qfi_sld_detailed(&d.state(k)?, &d.derivative(k))?;
            if sld.rank_deficient() {
                diag.rank_warnings += 1;
            }
            sld.value
        }
    };
    clamp(raw, &mut diag.clamped)
}

/// QFI curves of several subsystems sharing one set of evolutions.
pub fn qfi_curves(
    p: &SystemParams,
    target: EstimationTarget,
    rho0: &DensityMatrix,
    grid: &TimeGrid,
    subsystems: &[Subsystem],
) -> Result<Vec<FisherCurve>> {
    let d = state_derivative_trajectory(p, target, rho0, grid)?;
    subsystems
        .iter()
        .map(|&subsystem| {
            let mut diagnostics = CurveDiagnostics {
                richardson: d.richardson,
                max_trace_drift: d.trace.max_trace_drift,
                renormalizations: d.trace.renormalizations,
                ..Default::default()
            };
            let values = (0..d.times.len())
                .map(|k| subsystem_qfi(&d, k, subsystem, &mut diagnostics))
                .collect::<Result<Vec<_>>>()?;
            Ok(FisherCurve {
                times: d.times.clone(),
                values,
                target,
                interaction: p.interaction,
                subsystem,
                diagnostics,
            })
        })
        .collect()
}

pub fn qfi_curve(
    p: &SystemParams,
    target: EstimationTarget,
    rho0: &DensityMatrix,
    grid: &TimeGrid,
    subsystem: Subsystem,
) -> Result<FisherCurve> {
    Ok(qfi_curves(p, target, rho0, grid, &[subsystem])?.remove(0))
}

/// Probe QFI next to the Fisher information of sigma_z and sigma_x readouts.
#[derive(Debug, Clone)]
pub struct FisherComparison {
    pub times: Vec<f64>,
    pub qfi: Vec<f64>,
    pub fi_sigma_z: Vec<f64>,
    pub fi_sigma_x: Vec<f64>,
    pub diagnostics: CurveDiagnostics,
}

pub fn fisher_comparison(
    p: &SystemParams,
    target: EstimationTarget,
    rho0: &DensityMatrix,
    grid: &TimeGrid,
) -> Result<FisherComparison> {
    let d = state_derivative_trajectory(p, target, rho0, grid)?;
    let mut diagnostics = CurveDiagnostics {
        richardson: d.richardson,
        max_trace_drift: d.trace.max_trace_drift,
        renormalizations: d.trace.renormalizations,
        ..Default::default()
    };
    let n = d.times.len();
    let (mut qfi, mut fi_z, mut fi_x) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for k in 0..n {
        qfi.push(subsystem_qfi(&d, k, Subsystem::Probe, &mut diagnostics)?);
        let (r, dr) = d.bloch(k, Factor::Probe);
        fi_z.push(fi_from_moments(r.z, dr.z)?);
        fi_x.push(fi_from_moments(r.x, dr.x)?);
    }
    Ok(FisherComparison {
        times: d.times,
        qfi,
        fi_sigma_z: fi_z,
        fi_sigma_x: fi_x,
        diagnostics,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SteadyDerivativeMethod {
    /// Differentiate the stationarity condition exactly.
    LinearResponse,
    /// Central difference of two stationary states.
    FiniteDifference,
}

#[derive(Debug, Clone)]
pub struct SteadyQfi {
    pub state: DensityMatrix,
    pub probe: DensityMatrix,
    pub probe_derivative: ComplexMatrix,
    pub qfi: f64,
}

/// Probe QFI of the stationary state.
pub fn steady_probe_qfi(
    p: &SystemParams,
    target: EstimationTarget,
    method: SteadyDerivativeMethod,
) -> Result<SteadyQfi> {
    let l = build_liouvillian(p)?;
    let rho = dynamics::steady_state(&l)?;
    let d_full = match method {
        SteadyDerivativeMethod::LinearResponse => dynamics::steady_state_derivative(
            &l,
            &rho,
            &dynamics::liouvillian_derivative(p, target),
        )?,
        SteadyDerivativeMethod::FiniteDifference => {
            let theta = target.value(p);
            let h = target.stationary_step(p);
            if !(theta > h) {
                return Err(Error::invalid_param(
                    target.field(),
                    format!("value {theta} must exceed the step {h}"),
                ));
            }
            let at = |v: f64| -> Result<ComplexMatrix> {
                Ok(
                    dynamics::steady_state(&build_liouvillian(&target.perturb(p, v))?)?
                        .into_matrix(),
                )
            };
            let coarse = (at(theta + h)? - at(theta - h)?) / C64::new(2.0 * h, 0.0);
            let fine = (at(theta + h / 2.0)? - at(theta - h / 2.0)?) / C64::new(h, 0.0);
            let mut report = RichardsonReport::default();
            report.observe(0.0, &to_coefficients(&coarse), &to_coefficients(&fine), h);
            report.into_result()?;
            coarse
        }
    };
    let probe = rho.partial_trace_ancilla()?;
    let probe_derivative = state::trace_out_ancilla(&d_full);
    let qfi = clamp(qfi_sld(&probe, &probe_derivative)?, &mut 0)?;
    Ok(SteadyQfi {
        state: rho,
        probe,
        probe_derivative,
        qfi,
    })
}
