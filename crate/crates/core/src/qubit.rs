//! Qubit states: density matrices, Bloch vectors, the six Pauli eigenstates,
//! tomography reconstruction and fidelity.
//!
//! Fidelity follows the Uhlmann convention `F(ρ, σ) = (tr √(√ρ σ √ρ))²`, so
//! for a pure `σ` it is simply `tr(ρσ)`. For qubits this has the closed form
//! `tr(ρσ) + 2 √(det ρ · det σ)`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use nalgebra::{Complex, Matrix2, Matrix4, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type Mat2 = Matrix2<C64>;
pub type Mat4 = Matrix4<C64>;

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

/// Slack allowed on each raw tomography expectation value.
pub const TOMOGRAPHY_SLACK: f64 = 0.05;

pub(crate) fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

pub(crate) fn pauli_x() -> Mat2 {
    Mat2::new(c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0))
}

pub(crate) fn pauli_y() -> Mat2 {
    Mat2::new(c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0))
}

pub(crate) fn pauli_z() -> Mat2 {
    Mat2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
    Y,
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Basis::Z => "Z",
            Basis::X => "X",
            Basis::Y => "Y",
        };
        f.write_str(s)
    }
}

impl FromStr for Basis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "Z" | "z" => Ok(Basis::Z),
            "X" | "x" => Ok(Basis::X),
            "Y" | "y" => Ok(Basis::Y),
            other => Err(Error::Config(format!("unknown basis '{other}'"))),
        }
    }
}

/// One of the six Pauli eigenstates `|bit⟩_basis`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StateLabel {
    Z0,
    Z1,
    X0,
    X1,
    Y0,
    Y1,
}

impl StateLabel {
    /// Canonical order used by the six-state game.
    pub const ALL: [StateLabel; 6] = [
        StateLabel::Z0,
        StateLabel::Z1,
        StateLabel::X0,
        StateLabel::X1,
        StateLabel::Y0,
        StateLabel::Y1,
    ];

    pub fn new(basis: Basis, bit: u8) -> Result<Self> {
        match (basis, bit) {
            (Basis::Z, 0) => Ok(StateLabel::Z0),
            (Basis::Z, 1) => Ok(StateLabel::Z1),
            (Basis::X, 0) => Ok(StateLabel::X0),
            (Basis::X, 1) => Ok(StateLabel::X1),
            (Basis::Y, 0) => Ok(StateLabel::Y0),
            (Basis::Y, 1) => Ok(StateLabel::Y1),
            (_, b) => Err(Error::Config(format!("bit must be 0 or 1, got {b}"))),
        }
    }

    pub fn basis(self) -> Basis {
        match self {
            StateLabel::Z0 | StateLabel::Z1 => Basis::Z,
            StateLabel::X0 | StateLabel::X1 => Basis::X,
            StateLabel::Y0 | StateLabel::Y1 => Basis::Y,
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            StateLabel::Z0 | StateLabel::X0 | StateLabel::Y0 => 0,
            StateLabel::Z1 | StateLabel::X1 | StateLabel::Y1 => 1,
        }
    }

    /// Unit Bloch vector of the ideal eigenstate.
    pub fn bloch(self) -> BlochVector {
        let (x, y, z) = match self {
            StateLabel::Z0 => (0.0, 0.0, 1.0),
            StateLabel::Z1 => (0.0, 0.0, -1.0),
            StateLabel::X0 => (1.0, 0.0, 0.0),
            StateLabel::X1 => (-1.0, 0.0, 0.0),
            StateLabel::Y0 => (0.0, 1.0, 0.0),
            StateLabel::Y1 => (0.0, -1.0, 0.0),
        };
        BlochVector { x, y, z }
    }
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.basis(), self.bit())
    }
}

impl FromStr for StateLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let mut chars = s.chars();
        match (chars.next(), chars.next(), chars.next()) {
            (Some(b), Some(bit @ ('0' | '1')), None) => StateLabel::new(b.to_string().parse()?, bit as u8 - b'0'),
            _ => Err(Error::Config(format!("invalid state label '{s}'"))),
        }
    }
}

impl Serialize for StateLabel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StateLabel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(Error::NonFinite("Bloch vector"));
        }
        let v = BlochVector { x, y, z };
        if v.norm() > 1.0 + PSD_TOL {
            return Err(Error::OutOfRange {
                name: "Bloch norm",
                value: v.norm(),
                expected: "<= 1",
            });
        }
        Ok(v)
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn dot(&self, other: &BlochVector) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn scaled(&self, s: f64) -> BlochVector {
        BlochVector {
            x: self.x * s,
            y: self.y * s,
            z: self.z * s,
        }
    }

    /// Uniformly distributed point on the unit sphere.
    pub fn random_pure<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let z: f64 = 2.0 * rng.random::<f64>() - 1.0;
        let phi = 2.0 * std::f64::consts::PI * rng.random::<f64>();
        let r = (1.0 - z * z).max(0.0).sqrt();
        BlochVector {
            x: r * phi.cos(),
            y: r * phi.sin(),
            z,
        }
    }

    /// Uniformly distributed point in the unit ball.
    pub fn random_mixed<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let r = rng.random::<f64>().cbrt();
        Self::random_pure(rng).scaled(r)
    }
}

/// A 2×2 qubit density matrix: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(Mat2);

impl DensityMatrix {
    pub fn new(m: Mat2) -> Result<Self> {
        check_physical(m.as_slice(), 2, || hermitian_eigenvalues2(&m))?;
        Ok(DensityMatrix(m))
    }

    /// Wraps a matrix that is physical by construction, symmetrizing away
    /// rounding noise in the off-diagonal.
    pub(crate) fn from_trusted(m: Mat2) -> Self {
        DensityMatrix((m + m.adjoint()) * c(0.5, 0.0))
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.0
    }

    pub fn maximally_mixed() -> Self {
        DensityMatrix(Mat2::identity() * c(0.5, 0.0))
    }

    pub fn from_bloch(v: BlochVector) -> Self {
        DensityMatrix(Mat2::new(
            c((1.0 + v.z) / 2.0, 0.0),
            c(v.x / 2.0, -v.y / 2.0),
            c(v.x / 2.0, v.y / 2.0),
            c((1.0 - v.z) / 2.0, 0.0),
        ))
    }

    pub fn to_bloch(&self) -> BlochVector {
        let m = &self.0;
        BlochVector {
            x: 2.0 * m[(0, 1)].re,
            y: -2.0 * m[(0, 1)].im,
            z: (m[(0, 0)] - m[(1, 1)]).re,
        }
    }

    pub fn transpose(&self) -> Self {
        DensityMatrix(self.0.transpose())
    }

    pub fn purity(&self) -> f64 {
        (self.0 * self.0).trace().re
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn eigenvalues(&self) -> [f64; 2] {
        hermitian_eigenvalues2(&self.0)
    }

    /// Convex mixture `(1 - p) ρ + p 𝕀/2`.
    pub fn depolarize(&self, p: f64) -> Self {
        let v = self.to_bloch();
        Self::from_bloch(v.scaled(1.0 - p))
    }

    pub fn kron(&self, other: &DensityMatrix) -> JointDensityMatrix {
        JointDensityMatrix(self.0.kronecker(&other.0).fixed_view::<4, 4>(0, 0).into_owned())
    }
}

/// Pure eigenstate projector for a Pauli label.
pub fn ideal_state(label: StateLabel) -> DensityMatrix {
    let h = 0.5;
    let m = match label {
        StateLabel::Z0 => Mat2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)),
        StateLabel::Z1 => Mat2::new(c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)),
        StateLabel::X0 => Mat2::new(c(h, 0.0), c(h, 0.0), c(h, 0.0), c(h, 0.0)),
        StateLabel::X1 => Mat2::new(c(h, 0.0), c(-h, 0.0), c(-h, 0.0), c(h, 0.0)),
        StateLabel::Y0 => Mat2::new(c(h, 0.0), c(0.0, -h), c(0.0, h), c(h, 0.0)),
        StateLabel::Y1 => Mat2::new(c(h, 0.0), c(0.0, h), c(0.0, -h), c(h, 0.0)),
    };
    DensityMatrix(m)
}

/// Builds a physical state from measured Pauli expectation values.
///
/// Each value may exceed `[-1, 1]` by at most [`TOMOGRAPHY_SLACK`]. A raw
/// Bloch vector longer than one is rescaled radially onto the unit sphere.
pub fn reconstruct_tomography(exp_x: f64, exp_y: f64, exp_z: f64) -> Result<DensityMatrix> {
    for (axis, value) in [("X", exp_x), ("Y", exp_y), ("Z", exp_z)] {
        if !value.is_finite() {
            return Err(Error::NonFinite("tomography record"));
        }
        if value.abs() > 1.0 + TOMOGRAPHY_SLACK {
            return Err(Error::CorruptTomography {
                axis,
                value,
                slack: TOMOGRAPHY_SLACK,
            });
        }
    }
    let raw = BlochVector {
        x: exp_x,
        y: exp_y,
        z: exp_z,
    };
    let norm = raw.norm();
    let v = if norm > 1.0 { raw.scaled(1.0 / norm) } else { raw };
    Ok(DensityMatrix::from_bloch(v))
}

/// Uhlmann fidelity between two qubit states.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> f64 {
    let overlap = (rho.0 * sigma.0).trace().re;
    let det_r = rho.0.determinant().re.max(0.0);
    let det_s = sigma.0.determinant().re.max(0.0);
    (overlap + 2.0 * (det_r * det_s).sqrt()).clamp(0.0, 1.0)
}

fn hermitian_eigenvalues2(m: &Mat2) -> [f64; 2] {
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    let b = m[(0, 1)];
    let mean = (a + d) / 2.0;
    let r = (((a - d) / 2.0).powi(2) + b.norm_sqr()).sqrt();
    [mean - r, mean + r]
}

fn check_physical<F>(entries: &[C64], dim: usize, eigenvalues: F) -> Result<()>
where
    F: FnOnce() -> [f64; 2],
{
    check_entries(entries, dim)?;
    let ev = eigenvalues();
    if ev[0] < -PSD_TOL {
        return Err(Error::NonPhysical(format!("negative eigenvalue {}", ev[0])));
    }
    Ok(())
}

// Column-major entries of a dim×dim matrix.
fn check_entries(entries: &[C64], dim: usize) -> Result<()> {
    if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("density matrix"));
    }
    let at = |r: usize, c: usize| entries[c * dim + r];
    let mut herm: f64 = 0.0;
    let mut trace = c(0.0, 0.0);
    for i in 0..dim {
        trace += at(i, i);
        for j in 0..dim {
            herm = herm.max((at(i, j) - at(j, i).conj()).norm());
        }
    }
    if herm > HERMITIAN_TOL {
        return Err(Error::NonPhysical(format!("not Hermitian (deviation {herm:e})")));
    }
    if (trace.re - 1.0).abs() > TRACE_TOL || trace.im.abs() > TRACE_TOL {
        return Err(Error::NonPhysical(format!("trace {trace} != 1")));
    }
    Ok(())
}

/// A two-qubit (4×4) density matrix, used for Choi states and product states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointDensityMatrix(Mat4);

impl JointDensityMatrix {
    pub fn new(m: Mat4) -> Result<Self> {
        check_entries(m.as_slice(), 4)?;
        let state = JointDensityMatrix(m);
        let min = state.eigenvalues()[0];
        if min < -PSD_TOL {
            return Err(Error::NonPhysical(format!("negative eigenvalue {min}")));
        }
        Ok(state)
    }

    pub(crate) fn from_trusted(m: Mat4) -> Self {
        JointDensityMatrix((m + m.adjoint()) * c(0.5, 0.0))
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 4] {
        hermitian_eigenvalues4(&self.0)
    }

    /// Transpose on the second tensor factor.
    pub fn partial_transpose(&self) -> Mat4 {
        let mut out = Mat4::zeros();
        for a in 0..2 {
            for b in 0..2 {
                for a2 in 0..2 {
                    for b2 in 0..2 {
                        out[(2 * a + b2, 2 * a2 + b)] = self.0[(2 * a + b, 2 * a2 + b2)];
                    }
                }
            }
        }
        out
    }

    /// Smallest eigenvalue of the partial transpose; negative means entangled.
    pub fn min_partial_transpose_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues4(&self.partial_transpose())[0]
    }

    /// Sum of the magnitudes of the negative partial-transpose eigenvalues.
    pub fn negativity(&self) -> f64 {
        hermitian_eigenvalues4(&self.partial_transpose())
            .iter()
            .filter(|&&e| e < 0.0)
            .map(|e| -e)
            .sum()
    }

    /// Peres–Horodecki criterion; exact for two qubits.
    pub fn is_ppt(&self, tol: f64) -> bool {
        self.min_partial_transpose_eigenvalue() >= -tol
    }
}

pub(crate) fn hermitian_eigenvalues4(m: &Mat4) -> [f64; 4] {
    let h = (m + m.adjoint()) * c(0.5, 0.0);
    let eig = SymmetricEigen::new(h);
    let mut ev = [0.0; 4];
    for (slot, v) in ev.iter_mut().zip(eig.eigenvalues.iter()) {
        *slot = *v;
    }
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Xi,
    Psi,
}

#[derive(Debug, Clone, Deserialize)]
struct TomographyRow {
    #[serde(default)]
    role: Option<Role>,
    basis: String,
    bit: u8,
    exp_x: f64,
    exp_y: f64,
    exp_z: f64,
}

/// Reconstructed states for the two preparation modules, keyed by label.
#[derive(Debug, Clone, Default)]
pub struct TomographySet {
    pub xi: BTreeMap<StateLabel, DensityMatrix>,
    pub psi: BTreeMap<StateLabel, DensityMatrix>,
}

impl TomographySet {
    /// Reads CSV records `role,basis,bit,exp_x,exp_y,exp_z`. The `role`
    /// column (`xi` or `psi`) is optional; rows without it apply to both
    /// preparation modules.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut set = TomographySet::default();
        for (line, row) in rdr.deserialize::<TomographyRow>().enumerate() {
            let row = row?;
            let label = StateLabel::new(row.basis.parse()?, row.bit)
                .map_err(|e| Error::Config(format!("record {}: {e}", line + 1)))?;
            let state = reconstruct_tomography(row.exp_x, row.exp_y, row.exp_z)?;
            match row.role {
                Some(Role::Xi) => {
                    set.xi.insert(label, state);
                }
                Some(Role::Psi) => {
                    set.psi.insert(label, state);
                }
                None => {
                    set.xi.insert(label, state);
                    set.psi.insert(label, state);
                }
            }
        }
        Ok(set)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    /// States for `labels` in order, falling back to the ideal eigenstate for
    /// labels that were not measured.
    pub fn states(&self, role: Role, labels: &[StateLabel]) -> Vec<DensityMatrix> {
        let map = match role {
            Role::Xi => &self.xi,
            Role::Psi => &self.psi,
        };
        labels
            .iter()
            .map(|l| map.get(l).copied().unwrap_or_else(|| ideal_state(*l)))
            .collect()
    }
}
