//! Physical model: parameters, Hamiltonians and thermal rates.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{kron, pauli, ComplexMatrix};

/// Above this ratio `exp(omega_a / T)` overflows and the occupation is zero.
pub const OCCUPATION_CUTOFF: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InteractionKind {
    #[serde(rename = "XX")]
    XX,
    #[serde(rename = "XXplusZX")]
    XXplusZX,
    #[serde(rename = "ZX")]
    ZX,
    #[serde(rename = "XZ")]
    XZ,
}

impl InteractionKind {
    pub const ALL: [InteractionKind; 4] = [Self::XX, Self::XXplusZX, Self::ZX, Self::XZ];

    pub fn name(self) -> &'static str {
        match self {
            Self::XX => "XX",
            Self::XXplusZX => "XXplusZX",
            Self::ZX => "ZX",
            Self::XZ => "XZ",
        }
    }

    /// Coupling operator at unit strength, probe factor first.
    pub fn coupling_operator(self) -> ComplexMatrix {
        let (x, z) = (pauli::x(), pauli::z());
        match self {
            Self::XX => kron(&x, &x),
            Self::XXplusZX => kron(&x, &x) + kron(&z, &x),
            Self::ZX => kron(&z, &x),
            Self::XZ => kron(&x, &z),
        }
    }
}

impl fmt::Display for InteractionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InteractionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::invalid_param(
                    "interaction",
                    format!("unknown kind `{s}` (XX, XXplusZX, ZX, XZ)"),
                )
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    pub omega_p: f64,
    pub omega_a: f64,
    pub g: f64,
    pub gamma: f64,
    pub temperature: f64,
    pub interaction: InteractionKind,
}

impl SystemParams {
    /// Field names accepted by [`SystemParams::set`].
    pub const FIELDS: [&'static str; 5] = ["omega_p", "omega_a", "g", "gamma", "temperature"];

    /// Values used for the non-Markovianity and transient QFI studies.
    pub fn reference(interaction: InteractionKind, g: f64) -> Self {
        Self {
            omega_p: 1.0,
            omega_a: 0.99,
            g,
            gamma: 0.05,
            temperature: 0.3,
            interaction,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("omega_p", self.omega_p),
            ("omega_a", self.omega_a),
            ("gamma", self.gamma),
            ("temperature", self.temperature),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid_param(
                    name,
                    format!("must be finite and > 0, got {v}"),
                ));
            }
        }
        if !(self.g.is_finite() && self.g >= 0.0) {
            return Err(Error::invalid_param(
                "g",
                format!("must be finite and >= 0, got {}", self.g),
            ));
        }
        Ok(())
    }

    pub fn get(&self, field: &str) -> Result<f64> {
        Ok(match field {
            "omega_p" => self.omega_p,
            "omega_a" => self.omega_a,
            "g" => self.g,
            "gamma" => self.gamma,
            "temperature" => self.temperature,
            _ => {
                return Err(Error::invalid_param(
                    "field",
                    format!("unknown parameter `{field}`"),
                ))
            }
        })
    }

    /// Copy with one numeric field replaced. No validation, so derivative
    /// code can probe around a point freely.
    pub fn with(&self, field: &str, value: f64) -> Result<Self> {
        let mut p = *self;
        match field {
            "omega_p" => p.omega_p = value,
            "omega_a" => p.omega_a = value,
            "g" => p.g = value,
            "gamma" => p.gamma = value,
            "temperature" => p.temperature = value,
            _ => {
                return Err(Error::invalid_param(
                    "field",
                    format!("unknown parameter `{field}`"),
                ))
            }
        }
        Ok(p)
    }

    pub fn set(&mut self, field: &str, value: f64) -> Result<()> {
        *self = self.with(field, value)?;
        Ok(())
    }
}

pub fn interaction_hamiltonian(p: &SystemParams) -> ComplexMatrix {
    p.interaction.coupling_operator().scale(p.g)
}

pub fn free_hamiltonian(p: &SystemParams) -> ComplexMatrix {
    let (id, z) = (pauli::id(), pauli::z());
    kron(&z, &id).scale(p.omega_p / 2.0) + kron(&id, &z).scale(p.omega_a / 2.0)
}

pub fn total_hamiltonian(p: &SystemParams) -> ComplexMatrix {
    free_hamiltonian(p) + interaction_hamiltonian(p)
}

/// Bose-Einstein occupation `1/(exp(omega_a/T) - 1)`.
pub fn thermal_occupation(omega_a: f64, temperature: f64) -> f64 {
    let x = omega_a / temperature;
    if x > OCCUPATION_CUTOFF {
        log::debug!("thermal occupation underflows at omega_a/T = {x:e}; using 0");
        return 0.0;
    }
    1.0 / x.exp_m1()
}

/// `n (n + 1)`, the common factor of every occupation derivative, written so
/// it stays finite and accurate for large and small `omega_a / T`.
pub fn occupation_variance(omega_a: f64, temperature: f64) -> f64 {
    let x = omega_a / temperature;
    if x > 2.0 * OCCUPATION_CUTOFF {
        return 0.0;
    }
    let s = (0.5 * x).sinh();
    0.25 / (s * s)
}

/// `(gamma_minus, gamma_plus)`: decay and excitation rates of the ancilla.
pub fn decay_rates(p: &SystemParams) -> (f64, f64) {
    let n = thermal_occupation(p.omega_a, p.temperature);
    let gamma_plus = n * p.gamma;
    (gamma_plus + p.gamma, gamma_plus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{diag, hermiticity_drift, max_abs, zeros};

    #[test]
    fn interaction_examples() {
        for kind in InteractionKind::ALL {
            let p = SystemParams::reference(kind, 0.0);
            assert_eq!(interaction_hamiltonian(&p), zeros(4));
        }
        let p = SystemParams::reference(InteractionKind::XX, 1.0);
        assert_eq!(interaction_hamiltonian(&p), kron(&pauli::x(), &pauli::x()));

        let p = SystemParams::reference(InteractionKind::XXplusZX, 0.08);
        let mut oracle = zeros(4);
        let xx = kron(&pauli::x(), &pauli::x());
        let zx = kron(&pauli::z(), &pauli::x());
        for i in 0..4 {
            for j in 0..4 {
                oracle[(i, j)] = (xx[(i, j)] + zx[(i, j)]) * 0.08;
            }
        }
        assert!(max_abs(&(interaction_hamiltonian(&p) - oracle)) < 1e-17);
    }

    #[test]
    fn sum_family_is_exact_sum() {
        let mut p = SystemParams::reference(InteractionKind::XXplusZX, 0.37);
        let sum = interaction_hamiltonian(&p);
        p.interaction = InteractionKind::XX;
        let xx = interaction_hamiltonian(&p);
        p.interaction = InteractionKind::ZX;
        let zx = interaction_hamiltonian(&p);
        assert_eq!(sum, xx + zx);
    }

    #[test]
    fn total_hamiltonian_examples() {
        let p = SystemParams::reference(InteractionKind::XX, 0.0);
        let h = total_hamiltonian(&p);
        assert!(max_abs(&(h - diag(&[0.995, 0.005, -0.005, -0.995]))) < 1e-15);

        let p = SystemParams {
            omega_p: 0.0,
            omega_a: 0.0,
            ..SystemParams::reference(InteractionKind::XZ, 0.0)
        };
        assert_eq!(total_hamiltonian(&p), zeros(4));

        let p = SystemParams::reference(InteractionKind::XZ, 0.08);
        let oracle =
            diag(&[0.995, 0.005, -0.005, -0.995]) + kron(&pauli::x(), &pauli::z()).scale(0.08);
        let h = total_hamiltonian(&p);
        assert!(max_abs(&(&h - oracle)) < 1e-15);
        assert!(hermiticity_drift(&h) < 1e-14);
    }

    #[test]
    fn occupation_examples() {
        let n = thermal_occupation(0.99, 0.3);
        assert!((n - 0.038_295_631_591_983_34).abs() < 1e-15, "{n}");
        assert_eq!(thermal_occupation(1.0, 1e-6), 0.0);
        assert!((thermal_occupation(2f64.ln(), 1.0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rate_examples() {
        let p = SystemParams::reference(InteractionKind::XX, 0.0);
        let (gm, gp) = decay_rates(&p);
        assert!((gm - 0.051_914_781_579_599_17).abs() < 1e-15);
        assert!((gp - 0.001_914_781_579_599_167).abs() < 1e-15);
        let cold = SystemParams {
            temperature: 1e-5,
            ..p
        };
        assert_eq!(decay_rates(&cold), (0.05, 0.0));
        let closed = SystemParams { gamma: 0.0, ..p };
        assert_eq!(decay_rates(&closed), (0.0, 0.0));
    }

    #[test]
    fn occupation_variance_matches_direct_product() {
        for &(w, t) in &[(0.99, 0.3), (0.5, 0.01), (1.0, 5.0)] {
            let n = thermal_occupation(w, t);
            let v = occupation_variance(w, t);
            assert!(
                (v - n * (n + 1.0)).abs() <= 1e-12 * v.max(1e-300),
                "{w} {t}"
            );
        }
    }

    #[test]
    fn validation_rejects_signs() {
        let mut p = SystemParams::reference(InteractionKind::XX, 0.1);
        p.g = -1.0;
        assert!(matches!(
            p.validate(),
            Err(Error::InvalidParameter { name: "g", .. })
        ));
        p.g = 0.1;
        p.temperature = 0.0;
        assert!(matches!(
            p.validate(),
            Err(Error::InvalidParameter {
                name: "temperature",
                ..
            })
        ));
    }

    #[test]
    fn field_access_round_trip() {
        let mut p = SystemParams::reference(InteractionKind::ZX, 0.1);
        for (i, f) in SystemParams::FIELDS.iter().enumerate() {
            p.set(f, i as f64 + 0.5).unwrap();
            assert_eq!(p.get(f).unwrap(), i as f64 + 0.5);
        }
        assert!(p.set("interaction", 1.0).is_err());
        assert_eq!(
            "xz".parse::<InteractionKind>().unwrap(),
            InteractionKind::XZ
        );
    }
}
