//! Optical model of the game: phase-randomized weak coherent pulses in time
//! bins, an optical channel on the `ξ` arm, a 50/50 beam-splitter Bell-state
//! measurement with threshold detectors, dark counts and continuous-wave
//! noise.
//!
//! Coherent inputs stay coherent through linear optics, so given the global
//! phases each `(detector, bin)` cell sees a Poisson photon number and clicks
//! independently with `1 - (1 - p_d) exp(-η w n̄)`. Gains follow by averaging
//! over the phases, either on a grid (analytic) or by sampling (Monte Carlo).

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoy::{GainEntry, GainRecord, IntensityPair, IntensitySet};
use crate::error::{Error, Result};
use crate::game::PayoffTable;
use crate::qubit::{c, Basis, StateLabel, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeBinPulse {
    pub early_amp: C64,
    pub late_amp: C64,
    /// Applied to both bins at the beam splitter.
    pub global_phase: f64,
}

impl TimeBinPulse {
    pub fn vacuum() -> Self {
        TimeBinPulse {
            early_amp: c(0.0, 0.0),
            late_amp: c(0.0, 0.0),
            global_phase: 0.0,
        }
    }

    pub fn intensity(&self) -> f64 {
        self.early_amp.norm_sqr() + self.late_amp.norm_sqr()
    }

    pub fn with_global_phase(mut self, phase: f64) -> Self {
        self.global_phase = phase;
        self
    }

    /// `[early, late]` amplitudes including the global phase.
    pub fn bins(&self) -> [C64; 2] {
        let g = C64::from_polar(1.0, self.global_phase);
        [self.early_amp * g, self.late_amp * g]
    }
}

/// Relative phase `φ` of the late bin for `X0, X1, Y0, Y1`.
fn encoding_phase(label: StateLabel) -> Option<f64> {
    match (label.basis(), label.bit()) {
        (Basis::Z, _) => None,
        (Basis::X, 0) => Some(0.0),
        (Basis::X, _) => Some(PI),
        (Basis::Y, 0) => Some(PI / 2.0),
        (Basis::Y, _) => Some(3.0 * PI / 2.0),
    }
}

/// `Z0 → (√α, 0)`, `Z1 → (0, √α)`, `X/Y → (√(α/2), e^{iφ}√(α/2))`.
pub fn prepare_pulse(label: StateLabel, intensity: f64, global_phase: f64) -> Result<TimeBinPulse> {
    if !(intensity >= 0.0 && intensity.is_finite()) {
        return Err(Error::OutOfRange {
            name: "intensity",
            value: intensity,
            expected: ">= 0",
        });
    }
    let root = intensity.sqrt();
    let (early_amp, late_amp) = match encoding_phase(label) {
        None if label.bit() == 0 => (c(root, 0.0), c(0.0, 0.0)),
        None => (c(0.0, 0.0), c(root, 0.0)),
        Some(phi) => {
            let half = root * FRAC_1_SQRT_2;
            (c(half, 0.0), C64::from_polar(half, phi))
        }
    };
    Ok(TimeBinPulse {
        early_amp,
        late_amp,
        global_phase,
    })
}

/// One draw of the optical decoherence channel. `u ∈ [0, 1)`: below `1-γ`
/// the pulse passes; otherwise one bin is deleted, each with probability
/// `γ/2`, and the survivor keeps its amplitude.
pub fn apply_optical_decoherence(pulse: TimeBinPulse, gamma: f64, u: f64) -> TimeBinPulse {
    if u < 1.0 - gamma {
        pulse
    } else if u < 1.0 - gamma / 2.0 {
        TimeBinPulse {
            late_amp: c(0.0, 0.0),
            ..pulse
        }
    } else {
        TimeBinPulse {
            early_amp: c(0.0, 0.0),
            ..pulse
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum OpticalChannel {
    Identity,
    Decoherence { gamma: f64 },
}

impl OpticalChannel {
    pub fn validate(&self) -> Result<()> {
        if let OpticalChannel::Decoherence { gamma } = *self {
            if !(0.0..=1.0).contains(&gamma) {
                return Err(Error::OutOfRange {
                    name: "gamma",
                    value: gamma,
                    expected: "[0, 1]",
                });
            }
        }
        Ok(())
    }

    /// Output pulses with their probabilities; probabilities sum to one.
    pub fn branches(&self, pulse: TimeBinPulse) -> Vec<(f64, TimeBinPulse)> {
        match *self {
            OpticalChannel::Identity => vec![(1.0, pulse)],
            OpticalChannel::Decoherence { gamma } => vec![
                (1.0 - gamma, pulse),
                (gamma / 2.0, apply_optical_decoherence(pulse, gamma, 1.0 - 0.75 * gamma)),
                (gamma / 2.0, apply_optical_decoherence(pulse, gamma, 1.0 - 0.25 * gamma)),
            ],
        }
    }

    pub fn sample(&self, pulse: TimeBinPulse, u: f64) -> TimeBinPulse {
        match *self {
            OpticalChannel::Identity => pulse,
            OpticalChannel::Decoherence { gamma } => apply_optical_decoherence(pulse, gamma, u),
        }
    }
}

/// Dark-count probability per gate from 50 counts/s at a 37.5 MHz gate rate
/// with an 85 % window.
pub const DEFAULT_DARK_PROB: f64 = 50.0 / 37.5e6 * 0.85;

/// An 85 % window on a 2.5 ns pulse, repeated every 1/37.5 MHz.
pub const DEFAULT_NOISE_DUTY: f64 = 0.85 * 2.5e-9 * 37.5e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorModel {
    pub efficiency: f64,
    pub dark_prob: f64,
    pub window_fraction: f64,
    /// Continuous-wave noise power relative to the average signal power.
    pub noise_beta: f64,
    /// Fraction of a pulse period covered by one time-bin detection window.
    pub noise_duty: f64,
    /// Mode overlap of the two inputs at the beam splitter.
    pub overlap: f64,
    /// Require the two non-coincident cells to stay dark.
    pub exclusive: bool,
}

impl Default for DetectorModel {
    fn default() -> Self {
        DetectorModel {
            efficiency: 0.27,
            dark_prob: DEFAULT_DARK_PROB,
            window_fraction: 0.85,
            noise_beta: 0.0,
            noise_duty: DEFAULT_NOISE_DUTY,
            overlap: 1.0,
            exclusive: true,
        }
    }
}

impl DetectorModel {
    pub fn validate(&self) -> Result<()> {
        let checks: [(&'static str, f64, bool, &'static str); 6] = [
            (
                "efficiency",
                self.efficiency,
                (0.0..=1.0).contains(&self.efficiency),
                "[0, 1]",
            ),
            (
                "dark_prob",
                self.dark_prob,
                (0.0..1.0).contains(&self.dark_prob),
                "[0, 1)",
            ),
            (
                "window_fraction",
                self.window_fraction,
                self.window_fraction > 0.0 && self.window_fraction <= 1.0,
                "(0, 1]",
            ),
            (
                "noise_beta",
                self.noise_beta,
                self.noise_beta >= 0.0 && self.noise_beta.is_finite(),
                ">= 0",
            ),
            (
                "noise_duty",
                self.noise_duty,
                (0.0..=1.0).contains(&self.noise_duty),
                "[0, 1]",
            ),
            ("overlap", self.overlap, (0.0..=1.0).contains(&self.overlap), "[0, 1]"),
        ];
        for (name, value, ok, expected) in checks {
            if !ok {
                return Err(Error::OutOfRange { name, value, expected });
            }
        }
        Ok(())
    }

    /// Noise photons inside one (detector, bin) window for signal intensity
    /// `mu`: the CW carries `β μ` photons per period, split by the beam
    /// splitter, and a window spans `noise_duty` of the period.
    pub fn noise_mean(&self, mu: f64) -> f64 {
        self.noise_beta * mu * self.noise_duty / 2.0
    }

    /// `1 / (η w)²`: converts two-fold gains to lossless-detector units.
    pub fn yield_scale(&self) -> f64 {
        1.0 / (self.efficiency * self.window_fraction).powi(2)
    }
}

/// Click probabilities indexed `[detector][bin]`, bin 0 early.
pub type ClickProbs = [[f64; 2]; 2];

/// Mean photon numbers reaching each `[detector][bin]` cell, before
/// detection.
pub fn bsm_output_intensities(a: &TimeBinPulse, b: &TimeBinPulse, overlap: f64) -> ClickProbs {
    let (ab, bb) = (a.bins(), b.bins());
    let mut out = [[0.0; 2]; 2];
    for bin in 0..2 {
        let (x, y) = (ab[bin], bb[bin]);
        let base = x.norm_sqr() + y.norm_sqr();
        // Re(x · conj(i y)); port 0 gains it, port 1 loses it.
        let cross = (x * (C64::i() * y).conj()).re * overlap;
        out[0][bin] = (base + 2.0 * cross) / 2.0;
        out[1][bin] = (base - 2.0 * cross) / 2.0;
    }
    out
}

pub fn bsm_click_probs(a: &TimeBinPulse, b: &TimeBinPulse, det: &DetectorModel, cw_mean: f64) -> ClickProbs {
    let n = bsm_output_intensities(a, b, det.overlap);
    let mut p = [[0.0; 2]; 2];
    for d in 0..2 {
        for bin in 0..2 {
            // The window captures `w` of each pulse; CW noise is counted per window already.
            let mean = det.window_fraction * n[d][bin] + cw_mean;
            p[d][bin] = 1.0 - (1.0 - det.dark_prob) * (-det.efficiency * mean).exp();
        }
    }
    p
}

/// Success when detectors 0 and 1 fire in opposite bins. With `exclusive`
/// the remaining two cells must be silent.
pub fn psi_minus_coincidence(clicks: &[[bool; 2]; 2], exclusive: bool) -> bool {
    let pattern = |e: usize, l: usize| clicks[0][e] && clicks[1][l] && (!exclusive || (!clicks[0][l] && !clicks[1][e]));
    pattern(0, 1) || pattern(1, 0)
}

pub fn psi_minus_probability(p: &ClickProbs, exclusive: bool) -> f64 {
    let a = p[0][0] * p[1][1];
    let b = p[0][1] * p[1][0];
    if exclusive {
        a * (1.0 - p[0][1]) * (1.0 - p[1][0]) + b * (1.0 - p[0][0]) * (1.0 - p[1][1])
    } else {
        a + b - a * b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SimMode {
    #[default]
    Analytic,
    MonteCarlo,
}

impl std::str::FromStr for SimMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "analytic" => Ok(SimMode::Analytic),
            "montecarlo" | "monte-carlo" => Ok(SimMode::MonteCarlo),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub intensities: IntensitySet,
    pub detector: DetectorModel,
    pub channel: OpticalChannel,
    pub trials_per_setting: u64,
    pub seed: u64,
    pub mode: SimMode,
    /// Points per arm of the analytic phase grid.
    pub phase_grid: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            intensities: IntensitySet::default(),
            detector: DetectorModel::default(),
            channel: OpticalChannel::Identity,
            trials_per_setting: 10_000_000,
            seed: 2020,
            mode: SimMode::Analytic,
            phase_grid: 64,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.intensities.validate()?;
        self.detector.validate()?;
        self.channel.validate()?;
        if self.trials_per_setting == 0 {
            return Err(Error::OutOfRange {
                name: "trials_per_setting",
                value: 0.0,
                expected: ">= 1",
            });
        }
        if self.phase_grid == 0 {
            return Err(Error::OutOfRange {
                name: "phase_grid",
                value: 0.0,
                expected: ">= 1",
            });
        }
        Ok(())
    }
}

/// Exact success probability of one setting, averaged over the channel
/// branches and a `grid × grid` lattice of global phases.
pub fn analytic_gain(x: StateLabel, y: StateLabel, alpha_xi: f64, alpha_psi: f64, config: &SimConfig) -> Result<f64> {
    let det = &config.detector;
    let cw = det.noise_mean(config.intensities.mu);
    let n = config.phase_grid;
    let xi = prepare_pulse(x, alpha_xi, 0.0)?;
    let psi = prepare_pulse(y, alpha_psi, 0.0)?;
    let phases: Vec<f64> = (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect();
    let mut total = 0.0;
    for (weight, out) in config.channel.branches(xi) {
        if weight == 0.0 {
            continue;
        }
        let mut acc = 0.0;
        for &ta in &phases {
            let a = out.with_global_phase(ta);
            for &tb in &phases {
                let p = bsm_click_probs(&a, &psi.with_global_phase(tb), det, cw);
                acc += psi_minus_probability(&p, det.exclusive);
            }
        }
        total += weight * acc / (n * n) as f64;
    }
    Ok(total)
}

/// Sampled success count of one setting; `rng` drives phases, channel and
/// detector clicks.
pub fn monte_carlo_clicks<R: Rng>(
    x: StateLabel,
    y: StateLabel,
    alpha_xi: f64,
    alpha_psi: f64,
    config: &SimConfig,
    rng: &mut R,
) -> Result<u64> {
    let det = &config.detector;
    let cw = det.noise_mean(config.intensities.mu);
    let xi = prepare_pulse(x, alpha_xi, 0.0)?;
    let psi = prepare_pulse(y, alpha_psi, 0.0)?;
    let mut successes = 0;
    for _ in 0..config.trials_per_setting {
        let a = config
            .channel
            .sample(xi.with_global_phase(2.0 * PI * rng.random::<f64>()), rng.random());
        let b = psi.with_global_phase(2.0 * PI * rng.random::<f64>());
        let p = bsm_click_probs(&a, &b, det, cw);
        let mut clicks = [[false; 2]; 2];
        for (d, row) in clicks.iter_mut().enumerate() {
            for (bin, cell) in row.iter_mut().enumerate() {
                *cell = rng.random::<f64>() < p[d][bin];
            }
        }
        if psi_minus_coincidence(&clicks, det.exclusive) {
            successes += 1;
        }
    }
    Ok(successes)
}

fn label_index(l: StateLabel) -> u64 {
    StateLabel::ALL.iter().position(|&m| m == l).unwrap_or(0) as u64
}

/// Stream index of a setting; independent of iteration order.
fn setting_stream(x: StateLabel, y: StateLabel, pair_index: usize) -> u64 {
    (label_index(x) * 6 + label_index(y)) * 8 + pair_index as u64
}

/// Gains for every nonzero-payoff pair of `table` and all seven intensity
/// pairs. Deterministic for a fixed config.
pub fn simulate_gains(config: &SimConfig, table: &PayoffTable) -> Result<GainRecord> {
    config.validate()?;
    let mut jobs = Vec::new();
    for (x, y, _) in table.labeled_entries() {
        for (k, pair) in IntensityPair::ALL.iter().enumerate() {
            jobs.push((x, y, k, *pair));
        }
    }
    let results: Vec<Result<(StateLabel, StateLabel, IntensityPair, GainEntry)>> = jobs
        .par_iter()
        .map(|&(x, y, k, pair)| {
            let (ax, ay) = pair.alphas(&config.intensities);
            let entry = match config.mode {
                SimMode::Analytic => {
                    GainEntry::expected(analytic_gain(x, y, ax, ay, config)?, config.trials_per_setting)
                }
                SimMode::MonteCarlo => {
                    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                    rng.set_stream(setting_stream(x, y, k));
                    let clicks = monte_carlo_clicks(x, y, ax, ay, config, &mut rng)?;
                    GainEntry::from_counts(config.trials_per_setting, clicks)?
                }
            };
            Ok((x, y, pair, entry))
        })
        .collect();
    let mut record = GainRecord::new();
    for r in results {
        let (x, y, pair, entry) = r?;
        record.insert(x, y, pair, entry);
    }
    Ok(record)
}
