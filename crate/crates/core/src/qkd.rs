//! Asymptotic MDI-QKD key rate on the same gain records:
//! `R = Q¹¹_Z (1 - H(e¹¹_X)) - f Q_Z H(E_Z)`.
//!
//! Error convention for the `Ψ⁻` announcement, in both `Z` and `X`: equal
//! bits (`Z0Z0`, `Z1Z1`, `X0X0`, `X1X1`) are errors, since the singlet has
//! no overlap with a product of identical states.

use serde::{Deserialize, Serialize};

use crate::decoy::{GainRecord, IntensityPair, IntensitySet, Level, YieldBounds};
use crate::error::{Error, Result};
use crate::qubit::{Basis, StateLabel};

pub const DEFAULT_EC_INEFFICIENCY: f64 = 1.16;

/// `H(x) = -x log₂ x - (1-x) log₂(1-x)`, with `H(0) = H(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::OutOfRange {
            name: "x",
            value: x,
            expected: "[0, 1]",
        });
    }
    let term = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
    Ok(term(x) + term(1.0 - x))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRateInputs {
    pub q11_z: f64,
    pub q_z: f64,
    pub e_z: f64,
    pub e11_x: f64,
    pub f: f64,
}

impl KeyRateInputs {
    pub fn validate(&self) -> Result<()> {
        let gains = [("q11_z", self.q11_z), ("q_z", self.q_z)];
        for (name, v) in gains {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfRange {
                    name,
                    value: v,
                    expected: "[0, 1]",
                });
            }
        }
        for (name, v) in [("e_z", self.e_z), ("e11_x", self.e11_x)] {
            if !(0.0..=0.5).contains(&v) {
                return Err(Error::OutOfRange {
                    name,
                    value: v,
                    expected: "[0, 0.5]",
                });
            }
        }
        if !(self.f >= 1.0 && self.f.is_finite()) {
            return Err(Error::OutOfRange {
                name: "f",
                value: self.f,
                expected: ">= 1",
            });
        }
        Ok(())
    }
}

/// Right-hand side of the key-rate bound; negative means no key.
pub fn key_rate(inputs: &KeyRateInputs) -> Result<f64> {
    inputs.validate()?;
    Ok(inputs.q11_z * (1.0 - binary_entropy(inputs.e11_x)?) - inputs.q_z * inputs.f * binary_entropy(inputs.e_z)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisStatistics {
    /// Mean gain over the four settings of the basis at `μμ`.
    pub gain: f64,
    /// Fraction of successes from equal-bit settings.
    pub qber: f64,
}

fn basis_settings(basis: Basis) -> Result<[(StateLabel, StateLabel, bool); 4]> {
    if basis == Basis::Y {
        return Err(Error::Config("key statistics are defined for the Z and X bases".into()));
    }
    let l = |bit| StateLabel::new(basis, bit).expect("valid bit");
    Ok([
        (l(0), l(0), true),
        (l(1), l(1), true),
        (l(0), l(1), false),
        (l(1), l(0), false),
    ])
}

pub fn qber_from_gains(gains: &GainRecord, basis: Basis) -> Result<BasisStatistics> {
    let signal = IntensityPair::new(Level::Mu, Level::Mu);
    let mut total = 0.0;
    let mut errors = 0.0;
    for (x, y, is_error) in basis_settings(basis)? {
        let g = gains
            .get(x, y, signal)
            .ok_or(Error::MissingSettings(
                "key rate needs all four settings of the basis at mu-mu",
            ))?
            .gain;
        total += g;
        if is_error {
            errors += g;
        }
    }
    let qber = if total > 0.0 { errors / total } else { 0.0 };
    Ok(BasisStatistics {
        gain: total / 4.0,
        qber,
    })
}

/// Assembles the key-rate inputs. `bounds` must be in the units of
/// `gains` (no efficiency calibration).
pub fn key_rate_inputs(
    gains: &GainRecord,
    bounds: &YieldBounds,
    intensities: &IntensitySet,
    f: f64,
) -> Result<KeyRateInputs> {
    let missing = || Error::MissingSettings("key rate needs yield bounds for all Z and X settings");
    let z = qber_from_gains(gains, Basis::Z)?;
    let mut y11_z = 0.0;
    for (x, y, _) in basis_settings(Basis::Z)? {
        y11_z += bounds.get(x, y).ok_or_else(missing)?.lower;
    }
    let mu = intensities.mu;
    let q11_z = (-2.0 * mu).exp() * mu * mu * y11_z / 4.0;

    let (mut wrong, mut right) = (0.0, 0.0);
    for (x, y, is_error) in basis_settings(Basis::X)? {
        let b = bounds.get(x, y).ok_or_else(missing)?;
        if is_error {
            wrong += b.upper;
        } else {
            right += b.lower;
        }
    }
    let e11_x = if wrong + right > 0.0 {
        wrong / (wrong + right)
    } else {
        0.5
    };
    Ok(KeyRateInputs {
        q11_z,
        q_z: z.gain,
        e_z: z.qber.min(0.5),
        e11_x: e11_x.min(0.5),
        f,
    })
}
