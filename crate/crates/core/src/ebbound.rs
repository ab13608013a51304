//! The largest payoff any entanglement-breaking channel can reach with the
//! given question states: `C_EB = d² max_{ω_sep} tr[W ω_sep]`, `d = 2`.
//!
//! The `d²` factor comes from bounding the conditional output operators by
//! subnormalized states, so it only enlarges a nonnegative maximum. When the
//! maximum `m` is negative, `m` itself is reported: every EB payoff equals
//! `tr[W ω]` for some normalized separable `ω` and hence is at most `m`.
//!
//! The objective is linear in `ω_sep` and every separable state is a convex
//! mixture of pure product states, so the maximum is attained at some
//! `|a⟩⟨a| ⊗ |b⟩⟨b|`. The transposes in `W` can be ignored while searching:
//! transposition is a reflection of the Bloch `y` axis and maps the set of
//! pure product states onto itself.
//!
//! For fixed `a` the objective is `tr[W_a b]` with `W_a = tr₁[(a ⊗ 𝕀) W]`,
//! maximized by the top eigenvector of `W_a`; the search alternates between
//! the two sides from many random starting points.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::PayoffTable;
use crate::qubit::{c, pauli_x, pauli_y, pauli_z, BlochVector, DensityMatrix, Mat2, Mat4};

/// Squared local dimension.
pub const D_SQUARED: f64 = 4.0;

/// Maps `m = max tr[W ω_sep]` to the reported bound.
pub fn scale_maximum(m: f64) -> f64 {
    if m >= 0.0 {
        D_SQUARED * m
    } else {
        m
    }
}

/// `W = Σ ℘(0,x,y) ξ_xᵀ ⊗ ψ_yᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct WitnessOperator {
    matrix: Mat4,
}

impl WitnessOperator {
    pub fn matrix(&self) -> &Mat4 {
        &self.matrix
    }

    /// `tr[W (ρ ⊗ σ)]`.
    pub fn expectation(&self, rho: &DensityMatrix, sigma: &DensityMatrix) -> f64 {
        (self.matrix * rho.kron(sigma).matrix()).trace().re
    }

    /// Components `w_ij = tr[W (σ_i ⊗ σ_j)]` with `σ_0 = 𝕀`.
    fn pauli_components(&self) -> [[f64; 4]; 4] {
        let paulis = [Mat2::identity(), pauli_x(), pauli_y(), pauli_z()];
        let mut w = [[0.0; 4]; 4];
        for (i, si) in paulis.iter().enumerate() {
            for (j, sj) in paulis.iter().enumerate() {
                w[i][j] = (self.matrix * si.kronecker(sj)).trace().re;
            }
        }
        w
    }
}

pub fn build_witness(table: &PayoffTable) -> WitnessOperator {
    let mut matrix = Mat4::zeros();
    for (x, y, p) in table.entries() {
        let xi = table.xi_states()[x].transpose();
        let psi = table.psi_states()[y].transpose();
        matrix += xi.kron(&psi).matrix() * c(p, 0.0);
    }
    WitnessOperator {
        matrix: (matrix + matrix.adjoint()) * c(0.5, 0.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMethod {
    Multistart,
    GridOracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EbBoundResult {
    pub value: f64,
    pub argmax_a: BlochVector,
    pub argmax_b: BlochVector,
    pub method: BoundMethod,
    pub restarts: usize,
    pub converged: bool,
}

impl EbBoundResult {
    /// A bound fixed by hand rather than computed from states.
    pub fn fixed(value: f64) -> Self {
        let origin = BlochVector { x: 0.0, y: 0.0, z: 0.0 };
        EbBoundResult {
            value,
            argmax_a: origin,
            argmax_b: origin,
            method: BoundMethod::Multistart,
            restarts: 0,
            converged: true,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundOptions {
    pub restarts: usize,
    pub tol: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for BoundOptions {
    fn default() -> Self {
        BoundOptions {
            restarts: 64,
            tol: 1e-10,
            max_iterations: 500,
            seed: 0x005e_edeb,
        }
    }
}

// tr[W (a ⊗ b)] in Bloch form is (1/4) Σ w_ij a_i b_j with a_0 = b_0 = 1.
fn objective(w: &[[f64; 4]; 4], a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let mut s = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            s += w[i][j] * a[i] * b[j];
        }
    }
    s / 4.0
}

// Best pure state on one side given the other. The conditioned operator is
// (1/2)(v_0 𝕀 + v·σ); its top eigenvector has Bloch vector v/|v|.
fn best_response(w: &[[f64; 4]; 4], other: &[f64; 4], other_is_first: bool, current: &[f64; 4]) -> [f64; 4] {
    let mut v = [0.0; 4];
    for k in 0..4 {
        for l in 0..4 {
            v[k] += if other_is_first {
                w[l][k] * other[l]
            } else {
                w[k][l] * other[l]
            };
        }
    }
    let norm = (v[1] * v[1] + v[2] * v[2] + v[3] * v[3]).sqrt();
    if norm < 1e-300 {
        return *current;
    }
    [1.0, v[1] / norm, v[2] / norm, v[3] / norm]
}

fn homogeneous(v: &BlochVector) -> [f64; 4] {
    [1.0, v.x, v.y, v.z]
}

fn bloch(v: &[f64; 4]) -> BlochVector {
    BlochVector {
        x: v[1],
        y: v[2],
        z: v[3],
    }
}

struct Ascent {
    value: f64,
    a: [f64; 4],
    b: [f64; 4],
    converged: bool,
}

fn ascend(w: &[[f64; 4]; 4], start: BlochVector, opts: &BoundOptions) -> Ascent {
    let mut a = homogeneous(&start);
    let mut b = best_response(w, &a, true, &[1.0, 0.0, 0.0, 1.0]);
    let mut value = objective(w, &a, &b);
    for _ in 0..opts.max_iterations {
        a = best_response(w, &b, false, &a);
        b = best_response(w, &a, true, &b);
        let next = objective(w, &a, &b);
        let improvement = next - value;
        value = next.max(value);
        if improvement < opts.tol {
            return Ascent {
                value,
                a,
                b,
                converged: true,
            };
        }
    }
    Ascent {
        value,
        a,
        b,
        converged: false,
    }
}

/// Separable-state bound with default iteration cap and seed.
pub fn eb_bound(table: &PayoffTable, restarts: usize, tol: f64) -> Result<EbBoundResult> {
    eb_bound_with(
        table,
        &BoundOptions {
            restarts,
            tol,
            ..BoundOptions::default()
        },
    )
}

pub fn eb_bound_with(table: &PayoffTable, opts: &BoundOptions) -> Result<EbBoundResult> {
    if opts.restarts == 0 {
        return Err(Error::OutOfRange {
            name: "restarts",
            value: 0.0,
            expected: ">= 1",
        });
    }
    let w = build_witness(table).pauli_components();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let starts: Vec<BlochVector> = (0..opts.restarts).map(|_| BlochVector::random_pure(&mut rng)).collect();
    let runs: Vec<Ascent> = starts.par_iter().map(|s| ascend(&w, *s, opts)).collect();

    let mut best = &runs[0];
    for run in &runs[1..] {
        if run.value > best.value {
            best = run;
        }
    }
    let result = EbBoundResult {
        value: scale_maximum(objective(&w, &best.a, &best.b)),
        argmax_a: bloch(&best.a),
        argmax_b: bloch(&best.b),
        method: BoundMethod::Multistart,
        restarts: opts.restarts,
        converged: best.converged,
    };
    if !best.converged {
        return Err(Error::NotConverged {
            iterations: opts.max_iterations,
            best: Box::new(result),
        });
    }
    Ok(result)
}

/// Exhaustive scan over a `(θ, φ)` grid of pure product states; returns
/// `d²` times the best value found. Never exceeds the true maximum.
pub fn eb_bound_oracle(table: &PayoffTable, grid_n: usize) -> f64 {
    let grid_n = grid_n.max(2);
    let w = build_witness(table).pauli_components();
    let mut points = Vec::with_capacity(grid_n * grid_n);
    for i in 0..grid_n {
        let theta = std::f64::consts::PI * i as f64 / (grid_n - 1) as f64;
        for j in 0..grid_n {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / grid_n as f64;
            points.push([1.0, theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]);
        }
    }
    let best = points
        .par_iter()
        .map(|a| {
            let mut v = [0.0; 4];
            for (k, vk) in v.iter_mut().enumerate() {
                for l in 0..4 {
                    *vk += w[l][k] * a[l];
                }
            }
            points
                .iter()
                .map(|b| v[0] + v[1] * b[1] + v[2] * b[2] + v[3] * b[3])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .reduce(|| f64::NEG_INFINITY, f64::max);
    scale_maximum(best / 4.0)
}
