//! Closed-form stationary sensitivities of the XX coupling and the
//! l1 coherence measure.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimation::{steady_probe_qfi, EstimationTarget, SteadyDerivativeMethod};
use crate::model::{decay_rates, InteractionKind, SystemParams};
use crate::state::DensityMatrix;

/// Beyond this `omega_a / T` the hyperbolic forms are rewritten in
/// `u = exp(-omega_a / T)`.
pub const HYPERBOLIC_CUTOFF: f64 = 350.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteadyStateClosedForm {
    pub delta_p: f64,
    pub f_t: f64,
    pub f_wa: f64,
    pub f_gamma: f64,
    pub omega_cap: f64,
    /// May overflow to `+inf` for very cold baths; the sensitivities never
    /// divide by it directly there.
    pub chi: f64,
    pub xi: f64,
    pub lambda_cap: f64,
    pub a_t: f64,
    pub a_wa: f64,
    pub a_gamma: f64,
}

impl SteadyStateClosedForm {
    pub fn qfi(&self, target: EstimationTarget) -> f64 {
        match target {
            EstimationTarget::Temperature => self.f_t,
            EstimationTarget::AncillaFrequency => self.f_wa,
            EstimationTarget::BathCoupling => self.f_gamma,
        }
    }

    pub fn slope(&self, target: EstimationTarget) -> f64 {
        match target {
            EstimationTarget::Temperature => self.a_t,
            EstimationTarget::AncillaFrequency => self.a_wa,
            EstimationTarget::BathCoupling => self.a_gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_p.abs() < 0.5) {
            return Err(Error::NumericalInvariant(format!(
                "|delta_p| = {} is not below 1/2",
                self.delta_p.abs()
            )));
        }
        if !(self.chi > 0.0) {
            return Err(Error::NumericalInvariant(format!(
                "chi = {} is not positive",
                self.chi
            )));
        }
        let purity_gap = 1.0 - 4.0 * self.delta_p * self.delta_p;
        for target in EstimationTarget::ALL {
            let a = self.slope(target);
            let f = self.qfi(target);
            let again = 4.0 * a * a / purity_gap;
            if !(f.is_finite() && f >= 0.0) || (f - again).abs() > 1e-12 * f.max(f64::MIN_POSITIVE)
            {
                return Err(Error::NumericalInvariant(format!(
                    "steady QFI for {target} inconsistent: {f} vs {again}"
                )));
            }
        }
        Ok(())
    }
}

/// `Delta_p = (rho_ee - rho_gg)/2` of the stationary probe under XX coupling.
pub fn delta_p(p: &SystemParams) -> f64 {
    let (gm, gp) = decay_rates(p);
    let s = gm + gp;
    let g2 = p.g * p.g;
    4.0 * (gp - gm) * p.omega_a * p.omega_p
        / (s * (8.0 * g2 + s * s + 4.0 * (p.omega_a * p.omega_a + p.omega_p * p.omega_p)))
}

pub fn closed_form(p: &SystemParams) -> Result<SteadyStateClosedForm> {
    evaluate(p, p.omega_a / p.temperature > HYPERBOLIC_CUTOFF)
}

fn evaluate(p: &SystemParams, exponential_form: bool) -> Result<SteadyStateClosedForm> {
    if p.interaction != InteractionKind::XX {
        return Err(Error::ClosedFormUnavailable(p.interaction.name().into()));
    }
    p.validate()?;
    let (wa, wp, g2, gam2, t) = (
        p.omega_a,
        p.omega_p,
        p.g * p.g,
        p.gamma * p.gamma,
        p.temperature,
    );
    let x = wa / t;
    let omega_cap = 4.0 * (wa * wa + wp * wp);
    let a = gam2 + 8.0 * g2 + omega_cap;
    let b = gam2 - 8.0 * g2 - omega_cap;
    let a3 = 3.0 * gam2 + 8.0 * g2 + omega_cap;
    let k0 = 3.0 * gam2 - 8.0 * g2 - omega_cap;
    let pp = gam2 + 8.0 * g2 + 4.0 * wp * wp - 4.0 * wa * wa;
    let qq = gam2 - 8.0 * g2 + 4.0 * wa * wa - 4.0 * wp * wp;

    let (chi, xi, lambda_cap, a_t, a_wa, a_gamma);
    if !exponential_form {
        let (c, s) = (x.cosh(), x.sinh());
        let th = (0.5 * x).tanh();
        chi = (a * c + b).powi(2);
        xi = a3 * c;
        lambda_cap = 2.0 * wa * (k0 + xi) + 2.0 * t * s * (pp * c + qq);
        a_t = 4.0 * wa * wa * wp * th * th * (k0 + xi) / (t * t * chi);
        a_wa = -2.0 * wp * th * th * lambda_cap / (t * chi);
        a_gamma = 4.0 * p.gamma * wa * wp * ((2.0 * x).sinh() - 2.0 * s) / chi;
    } else {
        let u = (-x).exp();
        let (u2, u4) = (u * u, u * u * u * u);
        let th = (1.0 - u) / (1.0 + u);
        let root = a * (1.0 + u2) + 2.0 * b * u;
        let den = root * root;
        chi = den / (4.0 * u2);
        xi = a3 * (1.0 + u2) / (2.0 * u);
        let lambda_u = 8.0 * wa * k0 * u2
            + 4.0 * wa * a3 * u * (1.0 + u2)
            + 2.0 * t * (pp * (1.0 - u4) + 2.0 * qq * u * (1.0 - u2));
        lambda_cap = lambda_u / (4.0 * u2);
        a_t = 8.0 * wa * wa * wp * th * th * u * (2.0 * u * k0 + a3 * (1.0 + u2)) / (t * t * den);
        a_wa = -2.0 * wp * th * th * (lambda_u / den) / t;
        a_gamma = 8.0 * p.gamma * wa * wp * ((1.0 - u4) - 2.0 * u * (1.0 - u2)) / den;
    }

    let dp = delta_p(p);
    let purity_gap = 1.0 - 4.0 * dp * dp;
    let f = |a: f64| 4.0 * a * a / purity_gap;
    let out = SteadyStateClosedForm {
        delta_p: dp,
        f_t: f(a_t),
        f_wa: f(a_wa),
        f_gamma: f(a_gamma),
        omega_cap,
        chi,
        xi,
        lambda_cap,
        a_t,
        a_wa,
        a_gamma,
    };
    out.validate()?;
    Ok(out)
}

/// `C = sum_{i != j} |rho_ij|` in the computational (bare energy) basis.
pub fn coherence_l1(rho: &DensityMatrix) -> f64 {
    let m = rho.matrix();
    let n = m.nrows();
    let mut c = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                c += m[(i, j)].norm();
            }
        }
    }
    c
}

/// Closed form next to the numerical stationary pipeline at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteadyComparison {
    pub closed: SteadyStateClosedForm,
    pub delta_p_numeric: f64,
    pub f_t_numeric: f64,
    pub f_wa_numeric: f64,
    pub f_gamma_numeric: f64,
}

impl SteadyComparison {
    pub fn numeric(&self, target: EstimationTarget) -> f64 {
        match target {
            EstimationTarget::Temperature => self.f_t_numeric,
            EstimationTarget::AncillaFrequency => self.f_wa_numeric,
            EstimationTarget::BathCoupling => self.f_gamma_numeric,
        }
    }

    pub fn max_relative_error(&self) -> f64 {
        EstimationTarget::ALL
            .iter()
            .map(|&t| {
                let (a, n) = (self.closed.qfi(t), self.numeric(t));
                if a == 0.0 && n == 0.0 {
                    0.0
                } else {
                    (a - n).abs() / a.abs()
                }
            })
            .fold(0.0, f64::max)
    }
}

pub fn compare_steady(
    p: &SystemParams,
    method: SteadyDerivativeMethod,
) -> Result<SteadyComparison> {
    let closed = closed_form(p)?;
    let mut numeric = [0.0; 3];
    let mut delta_p_numeric = 0.0;
    for (slot, target) in numeric.iter_mut().zip(EstimationTarget::ALL) {
        let s = steady_probe_qfi(p, target, method)?;
        let m = s.probe.matrix();
        delta_p_numeric = 0.5 * (m[(0, 0)].re - m[(1, 1)].re);
        *slot = s.qfi;
    }
    Ok(SteadyComparison {
        closed,
        delta_p_numeric,
        f_t_numeric: numeric[0],
        f_wa_numeric: numeric[1],
        f_gamma_numeric: numeric[2],
    })
}
