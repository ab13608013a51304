//! Payoff tables and the single-photon, lossless game payoff.
//!
//! Only the `b = 0` answer (a projection onto `|Ψ⁻⟩`) carries payoff; every
//! other answer scores zero.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::channels::Channel;
use crate::error::{Error, Result};
use crate::qubit::{c, ideal_state, Basis, DensityMatrix, Mat4, Role, StateLabel, TomographySet};

/// Order of the four-state game: eigenstates of `Z` and `Y`.
pub const FOUR_STATE_LABELS: [StateLabel; 4] = [StateLabel::Z0, StateLabel::Z1, StateLabel::Y0, StateLabel::Y1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableKind {
    #[serde(alias = "six")]
    SixState,
    #[serde(alias = "four")]
    FourState,
    Custom,
}

impl TableKind {
    pub fn labels(self) -> &'static [StateLabel] {
        match self {
            TableKind::SixState | TableKind::Custom => &StateLabel::ALL,
            TableKind::FourState => &FOUR_STATE_LABELS,
        }
    }
}

/// Payoff of the six-state game: `+1/4` for pairs anti-correlated in `X` or
/// `Z`, `-1/4` for pairs correlated in `X` or `Z`, `-1/2` for pairs
/// correlated in `Y`, zero otherwise.
pub fn six_state_payoff(x: StateLabel, y: StateLabel) -> f64 {
    if x.basis() != y.basis() {
        return 0.0;
    }
    match (x.basis(), x.bit() == y.bit()) {
        (Basis::Z | Basis::X, false) => 0.25,
        (Basis::Z | Basis::X, true) => -0.25,
        (Basis::Y, true) => -0.5,
        (Basis::Y, false) => 0.0,
    }
}

/// Payoff of the four-state game: the six-state rule with `X` removed.
pub fn four_state_payoff(x: StateLabel, y: StateLabel) -> f64 {
    if x.basis() == Basis::X || y.basis() == Basis::X {
        return 0.0;
    }
    six_state_payoff(x, y)
}

/// Referee's payoff rule `℘(0, x, y)` together with the question states.
///
/// Payoffs are keyed on labels, never on the (possibly imperfect) states.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffTable {
    xi_labels: Vec<StateLabel>,
    xi_states: Vec<DensityMatrix>,
    psi_labels: Vec<StateLabel>,
    psi_states: Vec<DensityMatrix>,
    payoff: BTreeMap<(usize, usize), f64>,
}

impl PayoffTable {
    pub fn new(
        xi: Vec<(StateLabel, DensityMatrix)>,
        psi: Vec<(StateLabel, DensityMatrix)>,
        entries: &[(StateLabel, StateLabel, f64)],
    ) -> Result<Self> {
        let (xi_labels, xi_states): (Vec<_>, Vec<_>) = xi.into_iter().unzip();
        let (psi_labels, psi_states): (Vec<_>, Vec<_>) = psi.into_iter().unzip();
        for (name, labels) in [("xi", &xi_labels), ("psi", &psi_labels)] {
            let unique: BTreeSet<_> = labels.iter().collect();
            if unique.len() != labels.len() {
                return Err(Error::InvalidTable(format!("duplicate {name} label")));
            }
        }
        let mut payoff = BTreeMap::new();
        for &(x, y, value) in entries {
            if !value.is_finite() {
                return Err(Error::NonFinite("payoff value"));
            }
            let xi_idx = xi_labels
                .iter()
                .position(|&l| l == x)
                .ok_or_else(|| Error::InvalidTable(format!("payoff refers to unknown xi label {x}")))?;
            let psi_idx = psi_labels
                .iter()
                .position(|&l| l == y)
                .ok_or_else(|| Error::InvalidTable(format!("payoff refers to unknown psi label {y}")))?;
            if value != 0.0 {
                payoff.insert((xi_idx, psi_idx), value);
            } else {
                payoff.remove(&(xi_idx, psi_idx));
            }
        }
        Ok(PayoffTable {
            xi_labels,
            xi_states,
            psi_labels,
            psi_states,
            payoff,
        })
    }

    fn from_rule(
        labels: &[StateLabel],
        xi: Vec<DensityMatrix>,
        psi: Vec<DensityMatrix>,
        rule: fn(StateLabel, StateLabel) -> f64,
    ) -> Result<Self> {
        for list in [&xi, &psi] {
            if list.len() != labels.len() {
                return Err(Error::WrongLength {
                    expected: labels.len(),
                    got: list.len(),
                });
            }
        }
        let entries: Vec<_> = labels
            .iter()
            .flat_map(|&x| labels.iter().map(move |&y| (x, y, rule(x, y))))
            .collect();
        Self::new(
            labels.iter().copied().zip(xi).collect(),
            labels.iter().copied().zip(psi).collect(),
            &entries,
        )
    }

    /// States ordered `(Z0, Z1, X0, X1, Y0, Y1)`.
    pub fn six_state(xi: Vec<DensityMatrix>, psi: Vec<DensityMatrix>) -> Result<Self> {
        Self::from_rule(&StateLabel::ALL, xi, psi, six_state_payoff)
    }

    /// States ordered `(Z0, Z1, Y0, Y1)`.
    pub fn four_state(xi: Vec<DensityMatrix>, psi: Vec<DensityMatrix>) -> Result<Self> {
        Self::from_rule(&FOUR_STATE_LABELS, xi, psi, four_state_payoff)
    }

    pub fn ideal_six_state() -> Self {
        let states: Vec<_> = StateLabel::ALL.iter().map(|&l| ideal_state(l)).collect();
        Self::six_state(states.clone(), states).expect("six ideal states")
    }

    pub fn ideal_four_state() -> Self {
        let states: Vec<_> = FOUR_STATE_LABELS.iter().map(|&l| ideal_state(l)).collect();
        Self::four_state(states.clone(), states).expect("four ideal states")
    }

    /// Built-in table of the given kind with states taken from tomography.
    pub fn from_tomography(kind: TableKind, tomo: &TomographySet) -> Result<Self> {
        let labels = kind.labels();
        let xi = tomo.states(Role::Xi, labels);
        let psi = tomo.states(Role::Psi, labels);
        match kind {
            TableKind::SixState => Self::six_state(xi, psi),
            TableKind::FourState => Self::four_state(xi, psi),
            TableKind::Custom => Err(Error::InvalidTable("custom tables need an explicit payoff file".into())),
        }
    }

    /// Same labels and payoffs, different question states.
    pub fn with_states(&self, xi: Vec<DensityMatrix>, psi: Vec<DensityMatrix>) -> Result<Self> {
        if xi.len() != self.xi_labels.len() {
            return Err(Error::WrongLength {
                expected: self.xi_labels.len(),
                got: xi.len(),
            });
        }
        if psi.len() != self.psi_labels.len() {
            return Err(Error::WrongLength {
                expected: self.psi_labels.len(),
                got: psi.len(),
            });
        }
        Ok(PayoffTable {
            xi_states: xi,
            psi_states: psi,
            ..self.clone()
        })
    }

    pub fn xi_labels(&self) -> &[StateLabel] {
        &self.xi_labels
    }

    pub fn psi_labels(&self) -> &[StateLabel] {
        &self.psi_labels
    }

    pub fn xi_states(&self) -> &[DensityMatrix] {
        &self.xi_states
    }

    pub fn psi_states(&self) -> &[DensityMatrix] {
        &self.psi_states
    }

    /// `℘(0, x, y)` by index; zero for unlisted pairs.
    pub fn payoff(&self, x: usize, y: usize) -> f64 {
        self.payoff.get(&(x, y)).copied().unwrap_or(0.0)
    }

    /// Nonzero entries as `(x index, y index, payoff)`, in index order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.payoff.iter().map(|(&(x, y), &v)| (x, y, v))
    }

    /// Nonzero entries keyed by label.
    pub fn labeled_entries(&self) -> Vec<(StateLabel, StateLabel, f64)> {
        self.entries()
            .map(|(x, y, v)| (self.xi_labels[x], self.psi_labels[y], v))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.payoff.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffEntry {
    pub x: StateLabel,
    pub y: StateLabel,
    pub value: f64,
}

/// Structured-text form of a custom table, e.g.
/// `{"xi": ["Z0", "Z1"], "psi": ["Z0", "Z1"], "payoff": [{"x": "Z0", "y": "Z1", "value": 0.5}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomTableSpec {
    pub xi: Vec<StateLabel>,
    pub psi: Vec<StateLabel>,
    pub payoff: Vec<PayoffEntry>,
}

impl CustomTableSpec {
    pub fn build(&self, tomo: Option<&TomographySet>) -> Result<PayoffTable> {
        let states = |role, labels: &[StateLabel]| -> Vec<(StateLabel, DensityMatrix)> {
            let s = match tomo {
                Some(t) => t.states(role, labels),
                None => labels.iter().map(|&l| ideal_state(l)).collect(),
            };
            labels.iter().copied().zip(s).collect()
        };
        let entries: Vec<_> = self.payoff.iter().map(|e| (e.x, e.y, e.value)).collect();
        PayoffTable::new(states(Role::Xi, &self.xi), states(Role::Psi, &self.psi), &entries)
    }
}

/// Projector onto `|Ψ⁻⟩ = (|01⟩ - |10⟩)/√2`.
pub fn bell_projector() -> Mat4 {
    let mut m = Mat4::zeros();
    m[(1, 1)] = c(0.5, 0.0);
    m[(2, 2)] = c(0.5, 0.0);
    m[(1, 2)] = c(-0.5, 0.0);
    m[(2, 1)] = c(-0.5, 0.0);
    m
}

/// `P(0 | ξ, ψ) = tr[(𝒩(ξ) ⊗ ψ) |Ψ⁻⟩⟨Ψ⁻|]`.
pub fn ideal_probability(ch: &Channel, xi: &DensityMatrix, psi: &DensityMatrix) -> f64 {
    let joint = ch.apply(xi).kron(psi);
    (joint.matrix() * bell_projector()).trace().re
}

/// Closed form of the singlet overlap for a product of two qubit states.
pub fn singlet_overlap(rho: &DensityMatrix, sigma: &DensityMatrix) -> f64 {
    (1.0 - rho.to_bloch().dot(&sigma.to_bloch())) / 4.0
}

/// `I_𝒩 = Σ ℘(0,x,y) P(0 | ξ_x, ψ_y)`.
pub fn ideal_payoff(ch: &Channel, table: &PayoffTable) -> f64 {
    table
        .entries()
        .map(|(x, y, p)| p * ideal_probability(ch, &table.xi_states()[x], &table.psi_states()[y]))
        .sum()
}

#[cfg(test)]
pub(crate) fn random_table<R: rand::Rng + ?Sized>(rng: &mut R) -> PayoffTable {
    use crate::qubit::BlochVector;
    let states = |rng: &mut R| -> Vec<(StateLabel, DensityMatrix)> {
        StateLabel::ALL
            .iter()
            .map(|&l| (l, DensityMatrix::from_bloch(BlochVector::random_mixed(rng))))
            .collect()
    };
    let xi = states(rng);
    let psi = states(rng);
    let mut entries = Vec::new();
    for x in StateLabel::ALL {
        for y in StateLabel::ALL {
            if rng.random::<f64>() < 0.5 {
                entries.push((x, y, rng.random::<f64>() * 2.0 - 1.0));
            }
        }
    }
    PayoffTable::new(xi, psi, &entries).unwrap()
}
