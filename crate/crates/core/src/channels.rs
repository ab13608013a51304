//! Qubit channels in Kraus form.
//!
//! Choi states use the trace-one convention `(𝒩 ⊗ id)(|Φ⁺⟩⟨Φ⁺|)`; the factor
//! `d²` that appears in the separable-state bound is applied there, not here.

use nalgebra::SymmetricEigen;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qubit::{c, pauli_z, BlochVector, DensityMatrix, JointDensityMatrix, Mat2, Mat4, C64};

const CPTP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    kraus: Vec<Mat2>,
}

impl Channel {
    pub fn new(kraus: Vec<Mat2>) -> Result<Self> {
        if kraus.is_empty() {
            return Err(Error::InvalidChannel("no Kraus operators".into()));
        }
        let sum: Mat2 = kraus.iter().map(|k| k.adjoint() * k).sum();
        let dev = (sum - Mat2::identity()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if !dev.is_finite() || dev > CPTP_TOL {
            return Err(Error::InvalidChannel(format!(
                "sum of K†K deviates from identity by {dev:e}"
            )));
        }
        Ok(Channel { kraus })
    }

    pub fn identity() -> Self {
        Channel {
            kraus: vec![Mat2::identity()],
        }
    }

    /// `D_γ(ρ) = (1-γ)ρ + γ(|0⟩⟨0|ρ₀₀ + |1⟩⟨1|ρ₁₁)`.
    ///
    /// Kraus operators `√(1-γ/2)·𝕀` and `√(γ/2)·Z`: populations are kept and
    /// coherences pick up `(1-γ/2) - γ/2 = 1-γ`.
    pub fn decoherence(gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::OutOfRange {
                name: "gamma",
                value: gamma,
                expected: "[0, 1]",
            });
        }
        let keep = (1.0 - gamma / 2.0).sqrt();
        let flip = (gamma / 2.0).sqrt();
        Ok(Channel {
            kraus: vec![Mat2::identity() * c(keep, 0.0), pauli_z() * c(flip, 0.0)],
        })
    }

    /// Measure-and-prepare channel `ρ ↦ Σ_k tr[E_k ρ] γ_k`.
    ///
    /// With `E_k = Σ_i λ_i |e_i⟩⟨e_i|` and `γ_k = Σ_j p_j |g_j⟩⟨g_j|`, the Kraus
    /// operators are `√(λ_i p_j) |g_j⟩⟨e_i|`.
    pub fn from_eb_spec(spec: &EbChannelSpec) -> Self {
        let mut kraus = Vec::new();
        for (effect, output) in spec.povm.iter().zip(&spec.outputs) {
            let e = SymmetricEigen::new(*effect);
            let g = SymmetricEigen::new(*output.matrix());
            for i in 0..2 {
                let lambda = e.eigenvalues[i];
                if lambda <= 0.0 {
                    continue;
                }
                let bra = e.eigenvectors.column(i).adjoint();
                for j in 0..2 {
                    let p = g.eigenvalues[j];
                    if p <= 0.0 {
                        continue;
                    }
                    let ket = g.eigenvectors.column(j);
                    kraus.push(ket * bra * c((lambda * p).sqrt(), 0.0));
                }
            }
        }
        Channel { kraus }
    }

    pub fn kraus_ops(&self) -> &[Mat2] {
        &self.kraus
    }

    pub fn apply(&self, rho: &DensityMatrix) -> DensityMatrix {
        let m = rho.matrix();
        let out: Mat2 = self.kraus.iter().map(|k| k * m * k.adjoint()).sum();
        DensityMatrix::from_trusted(out)
    }

    pub fn choi_state(&self) -> JointDensityMatrix {
        let mut phi = Mat4::zeros();
        for (i, j) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
            phi[(i, j)] = c(0.5, 0.0);
        }
        let out: Mat4 = self
            .kraus
            .iter()
            .map(|k| {
                let kk = k.kronecker(&Mat2::identity());
                kk * phi * kk.adjoint()
            })
            .sum();
        JointDensityMatrix::from_trusted(out)
    }
}

/// POVM effects paired with the states prepared on each outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct EbChannelSpec {
    povm: Vec<Mat2>,
    outputs: Vec<DensityMatrix>,
}

impl EbChannelSpec {
    pub fn new(povm: Vec<Mat2>, outputs: Vec<DensityMatrix>) -> Result<Self> {
        if povm.is_empty() {
            return Err(Error::InvalidPovm("no effects".into()));
        }
        if povm.len() != outputs.len() {
            return Err(Error::InvalidPovm(format!(
                "{} effects but {} output states",
                povm.len(),
                outputs.len()
            )));
        }
        for (k, e) in povm.iter().enumerate() {
            let herm = (e - e.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
            if !herm.is_finite() || herm > CPTP_TOL {
                return Err(Error::InvalidPovm(format!("effect {k} is not Hermitian")));
            }
            let min = SymmetricEigen::new(*e).eigenvalues.min();
            if min < -CPTP_TOL {
                return Err(Error::InvalidPovm(format!("effect {k} has negative eigenvalue {min}")));
            }
        }
        let sum: Mat2 = povm.iter().sum();
        let dev = (sum - Mat2::identity()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if dev > CPTP_TOL {
            return Err(Error::InvalidPovm(format!(
                "effects sum to identity only within {dev:e}"
            )));
        }
        Ok(EbChannelSpec { povm, outputs })
    }

    pub fn povm(&self) -> &[Mat2] {
        &self.povm
    }

    pub fn outputs(&self) -> &[DensityMatrix] {
        &self.outputs
    }

    /// A random measure-and-prepare channel with `outcomes` POVM elements and
    /// mixed output states.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, outcomes: usize) -> Self {
        let outcomes = outcomes.max(1);
        let raw: Vec<Mat2> = (0..outcomes).map(|_| random_psd(rng)).collect();
        let total: Mat2 = raw.iter().sum();
        let w = inverse_sqrt_psd(&total);
        let povm = raw
            .iter()
            .map(|a| {
                let e = w * a * w;
                (e + e.adjoint()) * c(0.5, 0.0)
            })
            .collect();
        let outputs = (0..outcomes)
            .map(|_| DensityMatrix::from_bloch(BlochVector::random_mixed(rng)))
            .collect();
        EbChannelSpec { povm, outputs }
    }
}

fn random_psd<R: Rng + ?Sized>(rng: &mut R) -> Mat2 {
    let g = Mat2::from_fn(|_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    g * g.adjoint() + Mat2::identity() * c(1e-3, 0.0)
}

pub(crate) fn inverse_sqrt_psd(m: &Mat2) -> Mat2 {
    let eig = SymmetricEigen::new(*m);
    let d = Mat2::from_diagonal(&eig.eigenvalues.map(|e| c(1.0 / e.sqrt(), 0.0)));
    eig.eigenvectors * d * eig.eigenvectors.adjoint()
}

/// A complex entry in a JSON matrix: either a bare real or `[re, im]`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum JsonComplex {
    Real(f64),
    Pair([f64; 2]),
}

impl From<JsonComplex> for C64 {
    fn from(v: JsonComplex) -> Self {
        match v {
            JsonComplex::Real(re) => c(re, 0.0),
            JsonComplex::Pair([re, im]) => c(re, im),
        }
    }
}

pub type JsonMatrix = [[JsonComplex; 2]; 2];

fn matrix_from_json(m: &JsonMatrix) -> Mat2 {
    Mat2::new(m[0][0].into(), m[0][1].into(), m[1][0].into(), m[1][1].into())
}

/// Structured-text channel description, e.g. `{"type": "decoherence", "gamma": 0.3}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ChannelSpec {
    Identity,
    Decoherence {
        gamma: f64,
    },
    Eb {
        povm: Vec<JsonMatrix>,
        outputs: Vec<JsonMatrix>,
    },
}

impl ChannelSpec {
    pub fn build(&self) -> Result<Channel> {
        match self {
            ChannelSpec::Identity => Ok(Channel::identity()),
            ChannelSpec::Decoherence { gamma } => Channel::decoherence(*gamma),
            ChannelSpec::Eb { povm, outputs } => {
                let povm = povm.iter().map(matrix_from_json).collect();
                let outputs = outputs
                    .iter()
                    .map(|m| DensityMatrix::new(matrix_from_json(m)))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Channel::from_eb_spec(&EbChannelSpec::new(povm, outputs)?))
            }
        }
    }

    pub fn from_json(text: &str) -> Result<Channel> {
        let spec: ChannelSpec = serde_json::from_str(text)?;
        spec.build()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qubit::{ideal_state, StateLabel};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn max_dev(a: &Mat2, b: &Mat2) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn z_projectors() -> Vec<Mat2> {
        vec![
            *ideal_state(StateLabel::Z0).matrix(),
            *ideal_state(StateLabel::Z1).matrix(),
        ]
    }

    // Direct evaluation of D_γ, independent of the Kraus form.
    fn dephase_direct(rho: &DensityMatrix, gamma: f64) -> Mat2 {
        let m = rho.matrix();
        let mut out = m * c(1.0 - gamma, 0.0);
        out[(0, 0)] += m[(0, 0)] * c(gamma, 0.0);
        out[(1, 1)] += m[(1, 1)] * c(gamma, 0.0);
        out
    }

    fn random_channel<R: Rng>(rng: &mut R, n: usize) -> Channel {
        let raw: Vec<Mat2> = (0..n)
            .map(|_| Mat2::from_fn(|_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)))
            .collect();
        let s: Mat2 = raw.iter().map(|k| k.adjoint() * k).sum();
        let w = inverse_sqrt_psd(&s);
        Channel::new(raw.iter().map(|k| k * w).collect()).unwrap()
    }

    #[test]
    fn apply_examples() {
        let rho = DensityMatrix::from_bloch(BlochVector::new(0.3, -0.4, 0.1).unwrap());
        assert!(max_dev(Channel::identity().apply(&rho).matrix(), rho.matrix()) < 1e-15);

        let plus = ideal_state(StateLabel::X0);
        let out = Channel::decoherence(1.0).unwrap().apply(&plus);
        assert!(max_dev(out.matrix(), DensityMatrix::maximally_mixed().matrix()) < 1e-15);

        let out = Channel::decoherence(0.4).unwrap().apply(&plus);
        let want = Mat2::new(c(0.5, 0.0), c(0.3, 0.0), c(0.3, 0.0), c(0.5, 0.0));
        assert!(max_dev(out.matrix(), &want) < 1e-15);
    }

    #[test]
    fn decoherence_matches_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..=10 {
            let gamma = i as f64 / 10.0;
            let ch = Channel::decoherence(gamma).unwrap();
            Channel::new(ch.kraus_ops().to_vec()).unwrap();
            for _ in 0..20 {
                let rho = DensityMatrix::from_bloch(BlochVector::random_mixed(&mut rng));
                assert!(max_dev(ch.apply(&rho).matrix(), &dephase_direct(&rho, gamma)) < 1e-14);
            }
        }
    }

    #[test]
    fn decoherence_examples() {
        let id = Channel::decoherence(0.0).unwrap();
        let rho = ideal_state(StateLabel::Y1);
        assert!(max_dev(id.apply(&rho).matrix(), rho.matrix()) < 1e-15);

        let half = Channel::decoherence(0.5).unwrap().apply(&ideal_state(StateLabel::Y0));
        let b = half.to_bloch();
        assert_abs_diff_eq!(b.x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.y, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(b.z, 0.0, epsilon = 1e-15);

        // γ = 1 is the Z measure-and-prepare channel.
        let full = Channel::decoherence(1.0).unwrap();
        let mp = Channel::from_eb_spec(
            &EbChannelSpec::new(
                z_projectors(),
                vec![ideal_state(StateLabel::Z0), ideal_state(StateLabel::Z1)],
            )
            .unwrap(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let rho = DensityMatrix::from_bloch(BlochVector::random_mixed(&mut rng));
            assert!(max_dev(full.apply(&rho).matrix(), mp.apply(&rho).matrix()) < 1e-14);
        }
    }

    #[test]
    fn decoherence_rejects_out_of_range() {
        assert!(Channel::decoherence(-0.1).is_err());
        assert!(Channel::decoherence(1.2).is_err());
        assert!(Channel::decoherence(f64::NAN).is_err());
    }

    #[test]
    fn eb_spec_examples() {
        let constant = Channel::from_eb_spec(
            &EbChannelSpec::new(vec![Mat2::identity()], vec![DensityMatrix::maximally_mixed()]).unwrap(),
        );
        for label in StateLabel::ALL {
            let out = constant.apply(&ideal_state(label));
            assert!(max_dev(out.matrix(), DensityMatrix::maximally_mixed().matrix()) < 1e-15);
        }

        let flip = Channel::from_eb_spec(
            &EbChannelSpec::new(
                z_projectors(),
                vec![ideal_state(StateLabel::Z1), ideal_state(StateLabel::Z0)],
            )
            .unwrap(),
        );
        let out = flip.apply(&ideal_state(StateLabel::Z0));
        assert!(max_dev(out.matrix(), ideal_state(StateLabel::Z1).matrix()) < 1e-15);
    }

    #[test]
    fn eb_spec_action_on_hermitian_basis() {
        // Linearity extends the check from this basis to every operator.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let basis: Vec<Mat2> = vec![
            Mat2::identity(),
            crate::qubit::pauli_x(),
            crate::qubit::pauli_y(),
            pauli_z(),
        ];
        for _ in 0..50 {
            let spec = EbChannelSpec::random(&mut rng, 3);
            let ch = Channel::from_eb_spec(&spec);
            for b in &basis {
                let via_kraus: Mat2 = ch.kraus_ops().iter().map(|k| k * b * k.adjoint()).sum();
                let direct: Mat2 = spec
                    .povm()
                    .iter()
                    .zip(spec.outputs())
                    .map(|(e, g)| g.matrix() * (e * b).trace())
                    .sum();
                assert!(max_dev(&via_kraus, &direct) < 1e-12);
            }
        }
    }

    #[test]
    fn invalid_povms_are_rejected() {
        let half = Mat2::identity() * c(0.5, 0.0);
        assert!(EbChannelSpec::new(vec![half], vec![DensityMatrix::maximally_mixed()]).is_err());
        let neg = Mat2::new(c(1.5, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-0.5, 0.0));
        let rest = Mat2::identity() - neg;
        assert!(EbChannelSpec::new(
            vec![neg, rest],
            vec![DensityMatrix::maximally_mixed(), DensityMatrix::maximally_mixed()]
        )
        .is_err());
        assert!(EbChannelSpec::new(z_projectors(), vec![DensityMatrix::maximally_mixed()]).is_err());
    }

    #[test]
    fn choi_examples() {
        let choi = Channel::identity().choi_state();
        let m = choi.matrix();
        for (i, j) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
            assert_abs_diff_eq!(m[(i, j)].re, 0.5, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(choi.trace(), 1.0, epsilon = 1e-15);

        let full = Channel::decoherence(1.0).unwrap().choi_state();
        assert!(full.is_ppt(1e-10));
        let half = Channel::decoherence(0.5).unwrap().choi_state();
        // Partial-transpose spectrum {1/4, 1/4, 1/4, -1/4} for γ = 0.5.
        assert_abs_diff_eq!(half.min_partial_transpose_eigenvalue(), -0.25, epsilon = 1e-12);
        assert!(half.negativity() > 0.0);
    }

    #[test]
    fn decoherence_choi_is_npt_iff_gamma_below_one() {
        for i in 0..=20 {
            let gamma = i as f64 / 20.0;
            let choi = Channel::decoherence(gamma).unwrap().choi_state();
            let min = choi.min_partial_transpose_eigenvalue();
            assert_abs_diff_eq!(min, -(1.0 - gamma) / 2.0, epsilon = 1e-12);
            assert_eq!(min < -1e-12, gamma < 1.0, "gamma = {gamma}");
        }
    }

    #[test]
    fn eb_channels_have_ppt_choi_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for n in 1..=4 {
            for _ in 0..50 {
                let ch = Channel::from_eb_spec(&EbChannelSpec::random(&mut rng, n));
                let choi = ch.choi_state();
                JointDensityMatrix::new(*choi.matrix()).unwrap();
                assert!(choi.is_ppt(1e-10));
            }
        }
    }

    #[test]
    fn apply_preserves_trace_and_positivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for case in 0..1000 {
            let ch = random_channel(&mut rng, 1 + case % 4);
            let rho = DensityMatrix::from_bloch(BlochVector::random_mixed(&mut rng));
            let out = ch.apply(&rho);
            DensityMatrix::new(*out.matrix()).unwrap();
        }
    }

    #[test]
    fn channel_spec_json() {
        let ch = ChannelSpec::from_json(r#"{"type": "decoherence", "gamma": 0.3}"#).unwrap();
        assert_eq!(ch, Channel::decoherence(0.3).unwrap());
        let ch = ChannelSpec::from_json(
            r#"{"type": "eb",
                "povm": [[[1, 0], [0, 0]], [[0, 0], [0, 1]]],
                "outputs": [[[0, 0], [0, 1]], [[1, 0], [0, [0, 0]]]]}"#,
        )
        .unwrap();
        let out = ch.apply(&ideal_state(StateLabel::Z1));
        assert!(max_dev(out.matrix(), ideal_state(StateLabel::Z0).matrix()) < 1e-15);
        assert!(ChannelSpec::from_json(r#"{"type": "decoherence", "gamma": 2}"#).is_err());
        assert!(ChannelSpec::from_json(
            r#"{"type": "eb", "povm": [[[0.5, 0], [0, 0.5]]], "outputs": [[[1, 0], [0, 0]]]}"#
        )
        .is_err());
    }

    #[test]
    fn channel_new_rejects_non_cptp() {
        assert!(Channel::new(vec![Mat2::identity() * c(0.9, 0.0)]).is_err());
        assert!(Channel::new(vec![]).is_err());
    }
}
