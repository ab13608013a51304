//! Decoy-state analysis: bounds on the single-photon yield `Y¹¹` from gains
//! measured at three intensities `μ > ν > ω = 0`, and the resulting lower
//! bound on the game payoff.
//!
//! With `J₁ = Q_νν e^{2ν} + Q_ωω - Q_νω e^ν - Q_ων e^ν` and `J₂` the same
//! combination at `μ`, inclusion–exclusion removes every yield with `n = 0`
//! or `m = 0`, and `μ³J₁ - ν³J₂` additionally cancels `Y¹²` and `Y²¹`:
//!
//! ```text
//! μ³J₁ - ν³J₂ = Σ_{n,m≥1} (μ³ν^{n+m} - ν³μ^{n+m}) / (n! m!) · Y^{nm}
//! ```
//!
//! Every surviving coefficient other than `(1,1)` is negative, so dropping
//! them gives a lower bound, and setting their yields to one gives an upper
//! bound. Since `J₁ = Σ_{n,m≥1} ν^{n+m}/(n! m!) Y^{nm}` has only nonnegative
//! terms, `J₁/ν²` and `J₂/μ²` also cap `Y¹¹` without assuming `Y ≤ 1`; the
//! upper bound is the smallest of the three.
//!
//! Standard errors are first order: binomial variance `Q(1-Q)/N` per gain,
//! pushed linearly through the `J` combinations and the payoff sum.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::ebbound::EbBoundResult;
use crate::error::{Error, Result};
use crate::game::PayoffTable;
use crate::qubit::{Basis, StateLabel};

/// Photon-number cutoff per arm used when synthesizing gains from yields.
pub const DEFAULT_TRUNCATION: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensitySet {
    pub mu: f64,
    pub nu: f64,
    #[serde(default)]
    pub omega: f64,
}

impl IntensitySet {
    pub fn new(mu: f64, nu: f64, omega: f64) -> Result<Self> {
        let set = IntensitySet { mu, nu, omega };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let IntensitySet { mu, nu, omega } = *self;
        if !(mu.is_finite() && nu.is_finite() && omega.is_finite()) {
            return Err(Error::NonFinite("intensities"));
        }
        if !(mu > nu && nu > omega && omega >= 0.0) {
            return Err(Error::InvalidIntensities(format!(
                "need mu > nu > omega >= 0, got mu={mu}, nu={nu}, omega={omega}"
            )));
        }
        Ok(())
    }

    pub fn value(&self, level: Level) -> f64 {
        match level {
            Level::Mu => self.mu,
            Level::Nu => self.nu,
            Level::Omega => self.omega,
        }
    }

    fn level_of(&self, alpha: f64) -> Option<Level> {
        [Level::Mu, Level::Nu, Level::Omega]
            .into_iter()
            .find(|&l| (self.value(l) - alpha).abs() <= 1e-12 * self.mu.max(1.0))
    }
}

impl Default for IntensitySet {
    fn default() -> Self {
        IntensitySet {
            mu: 0.2,
            nu: 0.05,
            omega: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Level {
    Mu,
    Nu,
    Omega,
}

/// Intensities `(α_ξ, α_ψ)` of one setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IntensityPair {
    pub xi: Level,
    pub psi: Level,
}

impl IntensityPair {
    pub const fn new(xi: Level, psi: Level) -> Self {
        IntensityPair { xi, psi }
    }

    /// The seven combinations the analysis needs.
    pub const ALL: [IntensityPair; 7] = [
        IntensityPair::new(Level::Mu, Level::Mu),
        IntensityPair::new(Level::Nu, Level::Nu),
        IntensityPair::new(Level::Mu, Level::Omega),
        IntensityPair::new(Level::Omega, Level::Mu),
        IntensityPair::new(Level::Nu, Level::Omega),
        IntensityPair::new(Level::Omega, Level::Nu),
        IntensityPair::new(Level::Omega, Level::Omega),
    ];

    pub fn alphas(&self, set: &IntensitySet) -> (f64, f64) {
        (set.value(self.xi), set.value(self.psi))
    }
}

/// Observed (or expected) success rate of one setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainEntry {
    pub gain: f64,
    pub trials: u64,
    pub clicks: u64,
}

impl GainEntry {
    pub fn from_counts(trials: u64, clicks: u64) -> Result<Self> {
        if clicks > trials {
            return Err(Error::InconsistentStatistics {
                pair: format!("{clicks} clicks in {trials} trials"),
                lower: clicks as f64,
                upper: trials as f64,
            });
        }
        let gain = if trials > 0 { clicks as f64 / trials as f64 } else { 0.0 };
        Ok(GainEntry { gain, trials, clicks })
    }

    /// An exact expectation attributed to `trials` pulse pairs. `clicks` is
    /// the nearest integer count; `gain` keeps full precision.
    pub fn expected(gain: f64, trials: u64) -> Self {
        let clicks = (gain * trials as f64).round().clamp(0.0, trials as f64) as u64;
        GainEntry { gain, trials, clicks }
    }

    pub fn variance(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.gain * (1.0 - self.gain) / self.trials as f64
        }
    }
}

pub type SettingKey = (StateLabel, StateLabel, IntensityPair);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GainRecord {
    entries: BTreeMap<SettingKey, GainEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GainRow {
    x_basis: Basis,
    x_bit: u8,
    y_basis: Basis,
    y_bit: u8,
    alpha_xi: f64,
    alpha_psi: f64,
    trials: u64,
    clicks: u64,
}

impl GainRecord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, x: StateLabel, y: StateLabel, pair: IntensityPair, entry: GainEntry) {
        self.entries.insert((x, y, pair), entry);
    }

    pub fn get(&self, x: StateLabel, y: StateLabel, pair: IntensityPair) -> Option<&GainEntry> {
        self.entries.get(&(x, y, pair))
    }

    pub fn gain(&self, x: StateLabel, y: StateLabel, pair: IntensityPair) -> Result<f64> {
        self.get(x, y, pair)
            .map(|e| e.gain)
            .ok_or_else(|| Error::MissingGain(format!("({x}, {y}) at {pair:?}")))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&SettingKey, &GainEntry)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distinct `(x, y)` pairs present, in order.
    pub fn pairs(&self) -> Vec<(StateLabel, StateLabel)> {
        let mut out: Vec<_> = self.entries.keys().map(|&(x, y, _)| (x, y)).collect();
        out.dedup();
        out
    }

    /// Writes `x_basis,x_bit,y_basis,y_bit,alpha_xi,alpha_psi,trials,clicks`.
    pub fn write_csv<W: Write>(&self, writer: W, intensities: &IntensitySet) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        for (&(x, y, pair), entry) in &self.entries {
            let (alpha_xi, alpha_psi) = pair.alphas(intensities);
            wtr.serialize(GainRow {
                x_basis: x.basis(),
                x_bit: x.bit(),
                y_basis: y.basis(),
                y_bit: y.bit(),
                alpha_xi,
                alpha_psi,
                trials: entry.trials,
                clicks: entry.clicks,
            })?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads the CSV schema of [`GainRecord::write_csv`]; intensities are
    /// matched against `intensities`.
    pub fn read_csv<R: Read>(reader: R, intensities: &IntensitySet) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut record = GainRecord::new();
        for (i, row) in rdr.deserialize::<GainRow>().enumerate() {
            let row = row?;
            let line = i + 2;
            let x = StateLabel::new(row.x_basis, row.x_bit).map_err(|e| Error::Config(format!("line {line}: {e}")))?;
            let y = StateLabel::new(row.y_basis, row.y_bit).map_err(|e| Error::Config(format!("line {line}: {e}")))?;
            let level = |alpha: f64| {
                intensities
                    .level_of(alpha)
                    .ok_or_else(|| Error::Config(format!("line {line}: intensity {alpha} is not one of mu, nu, omega")))
            };
            let pair = IntensityPair::new(level(row.alpha_xi)?, level(row.alpha_psi)?);
            record.insert(x, y, pair, GainEntry::from_counts(row.trials, row.clicks)?);
        }
        Ok(record)
    }

    /// Checks that all seven intensity pairs exist for every nonzero-payoff pair.
    pub fn check_complete(&self, table: &PayoffTable) -> Result<()> {
        for (x, y, _) in table.labeled_entries() {
            for pair in IntensityPair::ALL {
                self.gain(x, y, pair)?;
            }
        }
        Ok(())
    }
}

/// Yields `Y^{nm}` for `n, m ≤ max`; unset entries are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct YieldMap {
    values: Vec<Vec<f64>>,
}

impl YieldMap {
    pub fn zeros(max: usize) -> Self {
        YieldMap {
            values: vec![vec![0.0; max + 1]; max + 1],
        }
    }

    pub fn from_fn(max: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut map = Self::zeros(max);
        for n in 0..=max {
            for m in 0..=max {
                map.values[n][m] = f(n, m);
            }
        }
        map
    }

    pub fn set(&mut self, n: usize, m: usize, value: f64) {
        self.values[n][m] = value;
    }

    pub fn get(&self, n: usize, m: usize) -> f64 {
        self.values.get(n).and_then(|row| row.get(m)).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainEstimate {
    pub gain: f64,
    /// Poisson mass beyond the cutoff; bounds the truncation error since
    /// yields lie in `[0, 1]`.
    pub truncation_error: f64,
}

fn poisson_weights(alpha: f64, max: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(max + 1);
    let mut term = (-alpha).exp();
    for n in 0..=max {
        if n > 0 {
            term *= alpha / n as f64;
        }
        w.push(term);
    }
    w
}

/// `Q = e^{-α_ξ-α_ψ} Σ_{n,m ≤ T} α_ξⁿ α_ψᵐ / (n! m!) Y^{nm}`.
pub fn expected_gain(alpha_xi: f64, alpha_psi: f64, yields: &YieldMap, truncation: usize) -> Result<GainEstimate> {
    for (name, a) in [("alpha_xi", alpha_xi), ("alpha_psi", alpha_psi)] {
        if !(a >= 0.0 && a.is_finite()) {
            return Err(Error::OutOfRange {
                name,
                value: a,
                expected: ">= 0",
            });
        }
    }
    let wx = poisson_weights(alpha_xi, truncation);
    let wy = poisson_weights(alpha_psi, truncation);
    let mut gain = 0.0;
    for (n, px) in wx.iter().enumerate() {
        for (m, py) in wy.iter().enumerate() {
            gain += px * py * yields.get(n, m);
        }
    }
    let kept = wx.iter().sum::<f64>() * wy.iter().sum::<f64>();
    Ok(GainEstimate {
        gain,
        truncation_error: (1.0 - kept).max(0.0),
    })
}

/// Interval for `Y¹¹` of one `(ξ_x, ψ_y)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairBounds {
    pub lower: f64,
    pub upper: f64,
    /// One-sigma statistical error of the unclamped bounds.
    pub std_error: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct YieldBounds {
    bounds: BTreeMap<(StateLabel, StateLabel), PairBounds>,
}

impl YieldBounds {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, x: StateLabel, y: StateLabel, bounds: PairBounds) {
        self.bounds.insert((x, y), bounds);
    }

    pub fn get(&self, x: StateLabel, y: StateLabel) -> Option<&PairBounds> {
        self.bounds.get(&(x, y))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(StateLabel, StateLabel), &PairBounds)> {
        self.bounds.iter()
    }
}

/// Coefficients of the lower bound on the seven gains, in the order of
/// [`IntensityPair::ALL`].
fn lower_bound_coefficients(set: &IntensitySet) -> [f64; 7] {
    let IntensitySet { mu, nu, .. } = *set;
    let d = mu * mu * nu * nu * (mu - nu);
    let (m3, n3) = (mu.powi(3), nu.powi(3));
    [
        -n3 * (2.0 * mu).exp() / d, // μμ
        m3 * (2.0 * nu).exp() / d,  // νν
        n3 * mu.exp() / d,          // μω
        n3 * mu.exp() / d,          // ωμ
        -m3 * nu.exp() / d,         // νω
        -m3 * nu.exp() / d,         // ων
        (m3 - n3) / d,              // ωω
    ]
}

/// Worst-case contribution of the multi-photon yields the lower bound drops:
/// `Σ |c_nm| / (μ²ν²(μ-ν))` over `n, m ≥ 2` and over `(1, m ≥ 3)`, `(n ≥ 3, 1)`.
pub fn upper_bound_gap(set: &IntensitySet) -> f64 {
    two_photon_gap(set) + single_multi_gap(set)
}

/// Part of the gap from yields with `n, m ≥ 2`.
pub fn two_photon_gap(set: &IntensitySet) -> f64 {
    let IntensitySet { mu, nu, .. } = *set;
    let d = mu * mu * nu * nu * (mu - nu);
    let tail2 = |a: f64| a.exp_m1() - a;
    (nu.powi(3) * tail2(mu).powi(2) - mu.powi(3) * tail2(nu).powi(2)) / d
}

/// Part of the gap from yields `Y^{1m}` and `Y^{n1}` with the other index ≥ 3.
pub fn single_multi_gap(set: &IntensitySet) -> f64 {
    let IntensitySet { mu, nu, .. } = *set;
    let d = mu * mu * nu * nu * (mu - nu);
    let tail3 = |a: f64| a.exp_m1() - a - a * a / 2.0;
    2.0 * (nu.powi(3) * mu * tail3(mu) - mu.powi(3) * nu * tail3(nu)) / d
}

fn check_vacuum_decoy(set: &IntensitySet) -> Result<()> {
    set.validate().map_err(|e| match e {
        Error::InvalidIntensities(_) if set.mu == set.nu => {
            Error::InvalidIntensities("mu == nu makes the yield bounds singular".into())
        }
        other => other,
    })?;
    if set.omega != 0.0 {
        return Err(Error::InvalidIntensities(format!(
            "the bounds assume a vacuum decoy, got omega = {}",
            set.omega
        )));
    }
    Ok(())
}

/// Bounds `Y¹¹` for every pair present in `gains`.
pub fn y11_bounds(gains: &GainRecord, intensities: &IntensitySet) -> Result<YieldBounds> {
    y11_bounds_scaled(gains, intensities, 1.0)
}

/// As [`y11_bounds`], with every gain multiplied by `scale` first (for
/// efficiency-calibrated yields).
pub fn y11_bounds_scaled(gains: &GainRecord, intensities: &IntensitySet, scale: f64) -> Result<YieldBounds> {
    if intensities.mu == intensities.nu {
        return Err(Error::InvalidIntensities(
            "mu == nu makes the yield bounds singular".into(),
        ));
    }
    check_vacuum_decoy(intensities)?;
    let coef = lower_bound_coefficients(intensities);
    let gap = upper_bound_gap(intensities);
    let IntensitySet { mu, nu, .. } = *intensities;

    let mut out = YieldBounds::new();
    for (x, y) in gains.pairs() {
        let mut lower = 0.0;
        let mut var = 0.0;
        let mut q = [0.0; 7];
        // Order of IntensityPair::ALL: μμ, νν, μω, ωμ, νω, ων, ωω.
        for (k, pair) in IntensityPair::ALL.iter().enumerate() {
            let entry = gains
                .get(x, y, *pair)
                .ok_or_else(|| Error::MissingGain(format!("({x}, {y}) at {pair:?}")))?;
            if !entry.gain.is_finite() {
                return Err(Error::NonFinite("gain"));
            }
            q[k] = entry.gain * scale;
            lower += coef[k] * q[k];
            var += (coef[k] * scale).powi(2) * entry.variance();
        }
        let j_nu = q[1] * (2.0 * nu).exp() + q[6] - (q[4] + q[5]) * nu.exp();
        let j_mu = q[0] * (2.0 * mu).exp() + q[6] - (q[2] + q[3]) * mu.exp();
        let cap = (j_nu / (nu * nu)).min(j_mu / (mu * mu));
        let upper = (lower + gap).min(cap);
        let lower_c = lower.clamp(0.0, 1.0);
        let upper_c = upper.clamp(0.0, 1.0);
        if lower_c > upper_c {
            return Err(Error::InconsistentStatistics {
                pair: format!("({x}, {y})"),
                lower: lower_c,
                upper: upper_c,
            });
        }
        out.insert(
            x,
            y,
            PairBounds {
                lower: lower_c,
                upper: upper_c,
                std_error: var.sqrt(),
            },
        );
    }
    Ok(out)
}

/// `I_𝒩ᴸ = Σ ℘(0,x,y) Y¹¹`, taking the lower bound where `℘ > 0` and the
/// upper bound where `℘ < 0`.
pub fn payoff_lower_bound(bounds: &YieldBounds, table: &PayoffTable) -> Result<f64> {
    Ok(payoff_lower_bound_with_error(bounds, table)?.0)
}

fn payoff_lower_bound_with_error(bounds: &YieldBounds, table: &PayoffTable) -> Result<(f64, f64)> {
    let mut total = 0.0;
    let mut var = 0.0;
    for (x, y, p) in table.labeled_entries() {
        let b = bounds
            .get(x, y)
            .ok_or_else(|| Error::MissingBounds(format!("({x}, {y})")))?;
        total += p * if p > 0.0 { b.lower } else { b.upper };
        var += (p * b.std_error).powi(2);
    }
    Ok((total, var.sqrt()))
}

/// Payoff with every signal-intensity success attributed to a single-photon
/// pair, `Y¹¹ ≈ Q_μμ e^{2μ} / μ²`, i.e. without decoy analysis. Returns the
/// value and its one-sigma error.
pub fn payoff_without_decoy(
    gains: &GainRecord,
    intensities: &IntensitySet,
    table: &PayoffTable,
    scale: f64,
) -> Result<(f64, f64)> {
    let signal = IntensityPair::new(Level::Mu, Level::Mu);
    let mu = intensities.mu;
    let factor = scale * (2.0 * mu).exp() / (mu * mu);
    let mut total = 0.0;
    let mut var = 0.0;
    for (x, y, p) in table.labeled_entries() {
        let entry = gains
            .get(x, y, signal)
            .ok_or_else(|| Error::MissingGain(format!("({x}, {y}) at {signal:?}")))?;
        total += p * entry.gain * factor;
        var += (p * factor).powi(2) * entry.variance();
    }
    Ok((total, var.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificationVerdict {
    pub payoff_lower: f64,
    pub eb_bound: f64,
    pub certified: bool,
    pub std_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyOptions {
    /// Multiplier applied to every gain before the analysis; `1 / (η w)²`
    /// expresses yields relative to a lossless detector.
    pub yield_scale: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions { yield_scale: 1.0 }
    }
}

pub fn certify(
    gains: &GainRecord,
    intensities: &IntensitySet,
    table: &PayoffTable,
    ebresult: &EbBoundResult,
) -> Result<CertificationVerdict> {
    certify_with(gains, intensities, table, ebresult, &CertifyOptions::default())
}

pub fn certify_with(
    gains: &GainRecord,
    intensities: &IntensitySet,
    table: &PayoffTable,
    ebresult: &EbBoundResult,
    opts: &CertifyOptions,
) -> Result<CertificationVerdict> {
    gains.check_complete(table)?;
    let bounds = y11_bounds_scaled(gains, intensities, opts.yield_scale)?;
    let (payoff_lower, std_error) = payoff_lower_bound_with_error(&bounds, table)?;
    Ok(CertificationVerdict {
        payoff_lower,
        eb_bound: ebresult.value,
        certified: payoff_lower > ebresult.value,
        std_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use StateLabel::*;

    fn set() -> IntensitySet {
        IntensitySet::new(0.2, 0.05, 0.0).unwrap()
    }

    fn synthesize(yields: &YieldMap, set: &IntensitySet, x: StateLabel, y: StateLabel, rec: &mut GainRecord) -> f64 {
        let mut tail: f64 = 0.0;
        for pair in IntensityPair::ALL {
            let (a, b) = pair.alphas(set);
            let est = expected_gain(a, b, yields, DEFAULT_TRUNCATION).unwrap();
            tail = tail.max(est.truncation_error);
            rec.insert(x, y, pair, GainEntry::expected(est.gain, 0));
        }
        tail
    }

    #[test]
    fn expected_gain_examples() {
        let zeros = YieldMap::zeros(20);
        assert_eq!(expected_gain(0.3, 0.1, &zeros, 20).unwrap().gain, 0.0);

        let ones = YieldMap::from_fn(20, |_, _| 1.0);
        assert_abs_diff_eq!(expected_gain(0.0, 0.0, &ones, 20).unwrap().gain, 1.0, epsilon = 1e-15);

        let mut y = YieldMap::zeros(20);
        y.set(1, 1, 0.5);
        let g = expected_gain(0.1, 0.1, &y, 20).unwrap();
        assert_abs_diff_eq!(g.gain, (-0.2f64).exp() * 0.1 * 0.1 * 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(g.gain, 0.004094, epsilon = 1e-6);
        assert!(g.truncation_error < 1e-15);
    }

    #[test]
    fn expected_gain_rejects_negative_intensity() {
        assert!(expected_gain(-0.1, 0.1, &YieldMap::zeros(2), 20).is_err());
    }

    #[test]
    fn all_zero_gains_give_zero_bounds() {
        let mut rec = GainRecord::new();
        synthesize(&YieldMap::zeros(20), &set(), Z0, Z1, &mut rec);
        let b = y11_bounds(&rec, &set()).unwrap();
        let pb = b.get(Z0, Z1).unwrap();
        assert_eq!((pb.lower, pb.upper), (0.0, 0.0));
    }

    #[test]
    fn j_caps_pin_isolated_single_photon_yield() {
        // Only Y¹¹ and vacuum-arm yields: both caps equal Y¹¹ exactly.
        let mut y = YieldMap::zeros(20);
        y.set(1, 1, 0.42);
        y.set(3, 0, 0.9);
        y.set(0, 2, 0.7);
        let mut rec = GainRecord::new();
        synthesize(&y, &set(), X0, X0, &mut rec);
        let pb = *y11_bounds(&rec, &set()).unwrap().get(X0, X0).unwrap();
        assert_abs_diff_eq!(pb.lower, 0.42, epsilon = 1e-9);
        assert_abs_diff_eq!(pb.upper, 0.42, epsilon = 1e-9);
    }

    #[test]
    fn lower_bound_is_exact_when_only_cancelled_yields_are_present() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let mut y = YieldMap::zeros(20);
            for n in 0..=20 {
                y.set(n, 0, rng.random());
                y.set(0, n, rng.random());
            }
            y.set(1, 2, rng.random());
            y.set(2, 1, rng.random());
            let truth: f64 = rng.random();
            y.set(1, 1, truth);
            let mut rec = GainRecord::new();
            synthesize(&y, &set(), X0, X1, &mut rec);
            let b = y11_bounds(&rec, &set()).unwrap();
            assert_abs_diff_eq!(b.get(X0, X1).unwrap().lower, truth, epsilon = 1e-9);
        }
    }

    #[test]
    fn sandwich_with_saturated_multiphoton_yields() {
        let s = IntensitySet::new(0.2, 0.05, 0.0).unwrap();
        let y = YieldMap::from_fn(20, |n, m| match (n, m) {
            (1, 1) => 0.3,
            (n, m) if n >= 2 && m >= 2 => 1.0,
            _ => 0.0,
        });
        let mut rec = GainRecord::new();
        synthesize(&y, &s, Z0, Z0, &mut rec);
        let b = y11_bounds(&rec, &s).unwrap();
        let pb = b.get(Z0, Z0).unwrap();
        assert!(pb.lower <= 0.3 && 0.3 <= pb.upper, "{pb:?}");
    }

    #[test]
    fn printed_gap_misses_single_multi_terms() {
        // Y¹¹ = 0 and Y^{13} = Y^{31} = 1 (all else zero): the n,m ≥ 2 gap
        // alone would put the upper bound below the truth.
        let s = set();
        let mut y = YieldMap::zeros(20);
        for k in 3..=20 {
            y.set(1, k, 1.0);
            y.set(k, 1, 1.0);
        }
        y.set(1, 1, 0.5);
        let mut rec = GainRecord::new();
        synthesize(&y, &s, Z0, Z0, &mut rec);
        let coef = lower_bound_coefficients(&s);
        let lower: f64 = IntensityPair::ALL
            .iter()
            .zip(coef)
            .map(|(p, c)| c * rec.gain(Z0, Z0, *p).unwrap())
            .sum();
        assert!(lower + two_photon_gap(&s) < 0.5);
        assert!(lower + upper_bound_gap(&s) >= 0.5 - 1e-9);
        let pb = *y11_bounds(&rec, &s).unwrap().get(Z0, Z0).unwrap();
        assert!(pb.lower <= 0.5 + 1e-9 && 0.5 <= pb.upper + 1e-9);
    }

    #[test]
    fn gap_pieces_match_series() {
        // Brute-force the coefficient sums.
        let s = set();
        let (mu, nu) = (s.mu, s.nu);
        let d = mu * mu * nu * nu * (mu - nu);
        let fact = |k: usize| (1..=k).map(|i| i as f64).product::<f64>();
        let mut two = 0.0;
        let mut single = 0.0;
        for n in 1..40 {
            for m in 1..40 {
                let c =
                    (mu.powi(3) * nu.powi((n + m) as i32) - nu.powi(3) * mu.powi((n + m) as i32)) / (fact(n) * fact(m));
                if n >= 2 && m >= 2 {
                    two -= c / d;
                } else if (n == 1 && m >= 3) || (m == 1 && n >= 3) {
                    single -= c / d;
                }
            }
        }
        assert_abs_diff_eq!(two_photon_gap(&s), two, epsilon = 1e-12);
        assert_abs_diff_eq!(single_multi_gap(&s), single, epsilon = 1e-12);
    }

    #[test]
    fn randomized_sandwich() {
        let s = set();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let y = YieldMap::from_fn(20, |_, _| rng.random());
            let truth = y.get(1, 1);
            let mut rec = GainRecord::new();
            let tail = synthesize(&y, &s, Y0, Y1, &mut rec);
            let eps = tail + 1e-9;
            let pb = *y11_bounds(&rec, &s).unwrap().get(Y0, Y1).unwrap();
            assert!(pb.lower - eps <= truth && truth <= pb.upper + eps, "{pb:?} vs {truth}");
        }
    }

    #[test]
    fn bounds_reject_bad_intensities() {
        let rec = GainRecord::new();
        let degenerate = IntensitySet {
            mu: 0.1,
            nu: 0.1,
            omega: 0.0,
        };
        assert!(matches!(
            y11_bounds(&rec, &degenerate),
            Err(Error::InvalidIntensities(_))
        ));
        let nonvacuum = IntensitySet {
            mu: 0.3,
            nu: 0.1,
            omega: 0.01,
        };
        assert!(y11_bounds(&rec, &nonvacuum).is_err());
        assert!(IntensitySet::new(0.1, 0.2, 0.0).is_err());
    }

    #[test]
    fn missing_gain_is_reported() {
        let mut rec = GainRecord::new();
        rec.insert(Z0, Z1, IntensityPair::ALL[0], GainEntry::expected(0.1, 10));
        assert!(matches!(y11_bounds(&rec, &set()), Err(Error::MissingGain(_))));
    }

    #[test]
    fn inconsistent_statistics_are_surfaced() {
        // Large νν gain with no μμ gain: the lower bound exceeds the μ cap.
        let mut rec = GainRecord::new();
        for pair in IntensityPair::ALL {
            let g = if pair == IntensityPair::new(Level::Nu, Level::Nu) {
                0.01
            } else {
                0.0
            };
            rec.insert(Z0, Z1, pair, GainEntry::expected(g, 100));
        }
        assert!(matches!(
            y11_bounds(&rec, &set()),
            Err(Error::InconsistentStatistics { .. })
        ));
    }

    fn constant_bounds(table: &PayoffTable, lower: f64, upper: f64) -> YieldBounds {
        let mut b = YieldBounds::new();
        for (x, y, _) in table.labeled_entries() {
            b.insert(
                x,
                y,
                PairBounds {
                    lower,
                    upper,
                    std_error: 0.0,
                },
            );
        }
        b
    }

    #[test]
    fn payoff_lower_bound_examples() {
        let table = PayoffTable::ideal_six_state();
        let p = 0.37;
        assert_abs_diff_eq!(
            payoff_lower_bound(&constant_bounds(&table, p, p), &table).unwrap(),
            -p,
            epsilon = 1e-15
        );
        assert_eq!(
            payoff_lower_bound(&constant_bounds(&table, 0.0, 0.0), &table).unwrap(),
            0.0
        );

        let id = crate::channels::Channel::identity();
        let mut exact = YieldBounds::new();
        for (x, y, _) in table.labeled_entries() {
            let prob =
                crate::game::ideal_probability(&id, &crate::qubit::ideal_state(x), &crate::qubit::ideal_state(y));
            exact.insert(
                x,
                y,
                PairBounds {
                    lower: prob,
                    upper: prob,
                    std_error: 0.0,
                },
            );
        }
        assert_abs_diff_eq!(payoff_lower_bound(&exact, &table).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn payoff_lower_bound_uses_sign_rule() {
        let table = PayoffTable::ideal_four_state();
        let b = constant_bounds(&table, 0.1, 0.3);
        // Positive weights sum to 1/2, negative weights to -3/2.
        assert_abs_diff_eq!(
            payoff_lower_bound(&b, &table).unwrap(),
            0.5 * 0.1 - 1.5 * 0.3,
            epsilon = 1e-15
        );
        let empty = YieldBounds::new();
        assert!(matches!(
            payoff_lower_bound(&empty, &table),
            Err(Error::MissingBounds(_))
        ));
    }

    #[test]
    fn payoff_bound_never_exceeds_true_payoff() {
        let s = set();
        let table = PayoffTable::ideal_six_state();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let mut rec = GainRecord::new();
            let mut truth = 0.0;
            for (x, y, p) in table.labeled_entries() {
                let yields = YieldMap::from_fn(20, |_, _| rng.random());
                truth += p * yields.get(1, 1);
                synthesize(&yields, &s, x, y, &mut rec);
            }
            let b = y11_bounds(&rec, &s).unwrap();
            assert!(payoff_lower_bound(&b, &table).unwrap() <= truth + 1e-9);
        }
    }

    #[test]
    fn zero_click_record_is_not_certified() {
        let table = PayoffTable::ideal_six_state();
        let mut rec = GainRecord::new();
        for (x, y, _) in table.labeled_entries() {
            for pair in IntensityPair::ALL {
                rec.insert(x, y, pair, GainEntry::from_counts(1000, 0).unwrap());
            }
        }
        let v = certify(&rec, &set(), &table, &EbBoundResult::fixed(0.0)).unwrap();
        assert_eq!(v.payoff_lower, 0.0);
        assert!(!v.certified);
    }

    #[test]
    fn certify_propagates_binomial_error() {
        let s = set();
        let table = PayoffTable::ideal_four_state();
        let mut rec = GainRecord::new();
        for (x, y, _) in table.labeled_entries() {
            for pair in IntensityPair::ALL {
                rec.insert(x, y, pair, GainEntry::from_counts(1_000_000, 20_000).unwrap());
            }
        }
        let v = certify(&rec, &s, &table, &EbBoundResult::fixed(0.0)).unwrap();
        let coef = lower_bound_coefficients(&s);
        let var_q = 0.02 * 0.98 / 1e6;
        let var_pair: f64 = coef.iter().map(|c| c * c * var_q).sum();
        let weights: f64 = table.labeled_entries().iter().map(|(_, _, p)| p * p).sum();
        assert_abs_diff_eq!(v.std_error, (weights * var_pair).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let s = set();
        let mut rec = GainRecord::new();
        for (k, pair) in IntensityPair::ALL.iter().enumerate() {
            rec.insert(
                Z0,
                Z1,
                *pair,
                GainEntry::from_counts(1000 + k as u64, 17 * k as u64).unwrap(),
            );
            rec.insert(Y1, Y1, *pair, GainEntry::from_counts(10, 0).unwrap());
        }
        let mut buf = Vec::new();
        rec.write_csv(&mut buf, &s).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x_basis,x_bit,y_basis,y_bit,alpha_xi,alpha_psi,trials,clicks\n"));
        let back = GainRecord::read_csv(buf.as_slice(), &s).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn csv_rejects_unknown_intensity_and_overcount() {
        let s = set();
        let bad_alpha = "x_basis,x_bit,y_basis,y_bit,alpha_xi,alpha_psi,trials,clicks\nZ,0,Z,1,0.3,0,10,1\n";
        assert!(GainRecord::read_csv(bad_alpha.as_bytes(), &s).is_err());
        let overcount = "x_basis,x_bit,y_basis,y_bit,alpha_xi,alpha_psi,trials,clicks\nZ,0,Z,1,0.2,0,10,11\n";
        assert!(GainRecord::read_csv(overcount.as_bytes(), &s).is_err());
    }
}
