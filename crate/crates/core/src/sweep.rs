//! Parameter sweeps: simulate gains at each value of `γ` or `β`, run the
//! decoy analysis, compare against the EB bound and emit plot-ready CSV.
//!
//! The optical simulation always prepares ideal pulses. Imperfect states
//! (from tomography) enter only through the EB bound.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::Channel;
use crate::decoy::{certify_with, payoff_without_decoy, y11_bounds, CertifyOptions, GainRecord};
use crate::ebbound::{eb_bound_with, BoundOptions, EbBoundResult};
use crate::error::{Error, Result};
use crate::game::{ideal_payoff, CustomTableSpec, PayoffTable, TableKind};
use crate::optics::{simulate_gains, OpticalChannel, SimConfig, SimMode};
use crate::qkd::{key_rate, key_rate_inputs, DEFAULT_EC_INEFFICIENCY};
use crate::qubit::TomographySet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParameter {
    Gamma,
    Beta,
}

impl SweepParameter {
    fn check(self, v: f64) -> bool {
        match self {
            SweepParameter::Gamma => (0.0..=1.0).contains(&v),
            SweepParameter::Beta => v >= 0.0 && v.is_finite(),
        }
    }

    /// Simulation config at parameter value `v`.
    pub fn apply(self, base: &SimConfig, v: f64) -> SimConfig {
        let mut cfg = *base;
        match self {
            SweepParameter::Gamma => cfg.channel = OpticalChannel::Decoherence { gamma: v },
            SweepParameter::Beta => cfg.detector.noise_beta = v,
        }
        cfg
    }
}

impl std::str::FromStr for SweepParameter {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gamma" => Ok(SweepParameter::Gamma),
            "beta" => Ok(SweepParameter::Beta),
            other => Err(Error::Config(format!(
                "unknown parameter {other:?}; expected gamma or beta"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum StatesSource {
    #[default]
    Ideal,
    /// Tomography CSV; a relative path is resolved against the config file.
    Tomography { path: PathBuf },
}

/// Where the EB bound of a sweep comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum BoundSource {
    /// Maximized over separable states for the configured question states.
    #[default]
    Computed,
    /// A bound determined elsewhere.
    Fixed { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    #[serde(default = "default_table")]
    pub table: TableKind,
    #[serde(default)]
    pub custom_table: Option<CustomTableSpec>,
    #[serde(default)]
    pub states: StatesSource,
    #[serde(default)]
    pub bound: BoundSource,
    #[serde(default)]
    pub sim: SimConfig,
    /// Divide gains by `(η w)²` before the decoy analysis.
    #[serde(default = "default_true")]
    pub efficiency_calibrated: bool,
    #[serde(default = "default_f")]
    pub ec_inefficiency: f64,
}

fn default_table() -> TableKind {
    TableKind::SixState
}

fn default_true() -> bool {
    true
}

fn default_f() -> f64 {
    DEFAULT_EC_INEFFICIENCY
}

impl SweepSpec {
    pub fn new(parameter: SweepParameter, values: Vec<f64>) -> Self {
        SweepSpec {
            parameter,
            values,
            table: TableKind::SixState,
            custom_table: None,
            states: StatesSource::Ideal,
            bound: BoundSource::Computed,
            sim: SimConfig::default(),
            efficiency_calibrated: true,
            ec_inefficiency: DEFAULT_EC_INEFFICIENCY,
        }
    }

    /// Parses a JSON config; relative tomography paths are resolved against
    /// `base_dir`.
    pub fn from_json(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut spec: SweepSpec = serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        if let (StatesSource::Tomography { path }, Some(base)) = (&mut spec.states, base_dir) {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, path.parent())
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, e: Error| Error::Config(format!("{name}: {e}"));
        for (i, &v) in self.values.iter().enumerate() {
            if !self.parameter.check(v) {
                return Err(Error::Config(format!(
                    "values[{i}]: {v} is outside the domain of {:?}",
                    self.parameter
                )));
            }
            if i > 0 && v <= self.values[i - 1] {
                return Err(Error::Config(format!("values[{i}]: values must be strictly ascending")));
            }
        }
        self.sim
            .intensities
            .validate()
            .map_err(|e| field("sim.intensities", e))?;
        self.sim.detector.validate().map_err(|e| field("sim.detector", e))?;
        self.sim.channel.validate().map_err(|e| field("sim.channel", e))?;
        self.sim.validate().map_err(|e| field("sim", e))?;
        if self.sim.intensities.omega != 0.0 {
            return Err(Error::Config(
                "sim.intensities.omega: the decoy analysis needs omega = 0".into(),
            ));
        }
        match (self.table, &self.custom_table) {
            (TableKind::Custom, None) => {
                return Err(Error::Config("custom_table: required when table is custom".into()))
            }
            (TableKind::SixState | TableKind::FourState, Some(_)) => {
                return Err(Error::Config("custom_table: only allowed when table is custom".into()))
            }
            _ => {}
        }
        if let BoundSource::Fixed { value } = self.bound {
            if !value.is_finite() {
                return Err(Error::Config("bound.value: must be finite".into()));
            }
        }
        if self.ec_inefficiency.partial_cmp(&1.0).is_none_or(|o| o.is_lt()) {
            return Err(Error::Config(format!("ec_inefficiency: {} < 1", self.ec_inefficiency)));
        }
        Ok(())
    }

    /// Payoff table carrying the configured (possibly imperfect) states.
    pub fn table(&self) -> Result<PayoffTable> {
        let tomo = match &self.states {
            StatesSource::Ideal => None,
            StatesSource::Tomography { path } => Some(TomographySet::from_path(path)?),
        };
        match (self.table, &self.custom_table, &tomo) {
            (TableKind::Custom, Some(custom), t) => custom.build(t.as_ref()),
            (TableKind::Custom, None, _) => Err(Error::Config("custom_table missing".into())),
            (kind, _, Some(t)) => PayoffTable::from_tomography(kind, t),
            (TableKind::SixState, _, None) => Ok(PayoffTable::ideal_six_state()),
            (TableKind::FourState, _, None) => Ok(PayoffTable::ideal_four_state()),
        }
    }

    fn yield_scale(&self) -> f64 {
        if self.efficiency_calibrated {
            self.sim.detector.yield_scale()
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub param: f64,
    pub payoff_lower: f64,
    pub std_error: f64,
    pub eb_bound: f64,
    pub certified: bool,
    pub payoff_nodecoy: f64,
    pub key_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub parameter: SweepParameter,
    pub bound: EbBoundResult,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let with_key = self.parameter == SweepParameter::Beta;
        let mut header = vec![
            "param",
            "payoff_lower",
            "std_error",
            "eb_bound",
            "certified",
            "payoff_nodecoy",
        ];
        if with_key {
            header.push("key_rate");
        }
        wtr.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.param.to_string(),
                r.payoff_lower.to_string(),
                r.std_error.to_string(),
                r.eb_bound.to_string(),
                r.certified.to_string(),
                r.payoff_nodecoy.to_string(),
            ];
            if with_key {
                rec.push(r.key_rate.map(|k| k.to_string()).unwrap_or_default());
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// The EB bound a sweep certifies against.
pub fn sweep_bound(spec: &SweepSpec, table: &PayoffTable) -> Result<EbBoundResult> {
    match spec.bound {
        BoundSource::Computed => eb_bound_with(table, &BoundOptions::default()),
        BoundSource::Fixed { value } => Ok(EbBoundResult::fixed(value)),
    }
}

/// Key rate from one gain record, or `None` when the table lacks the `Z`
/// and `X` settings.
pub fn key_rate_from_gains(gains: &GainRecord, spec: &SweepSpec) -> Result<Option<f64>> {
    let bounds = y11_bounds(gains, &spec.sim.intensities)?;
    match key_rate_inputs(gains, &bounds, &spec.sim.intensities, spec.ec_inefficiency) {
        Ok(inputs) => Ok(Some(key_rate(&inputs)?)),
        Err(Error::MissingSettings(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn sweep_point(spec: &SweepSpec, table: &PayoffTable, bound: &EbBoundResult, v: f64) -> Result<SweepRow> {
    let cfg = spec.parameter.apply(&spec.sim, v);
    let gains = simulate_gains(&cfg, table)?;
    let opts = CertifyOptions {
        yield_scale: spec.yield_scale(),
    };
    let verdict = certify_with(&gains, &cfg.intensities, table, bound, &opts)?;
    let (payoff_nodecoy, _) = payoff_without_decoy(&gains, &cfg.intensities, table, opts.yield_scale)?;
    let key_rate = match spec.parameter {
        SweepParameter::Beta => key_rate_from_gains(&gains, spec)?,
        SweepParameter::Gamma => None,
    };
    Ok(SweepRow {
        param: v,
        payoff_lower: verdict.payoff_lower,
        std_error: verdict.std_error,
        eb_bound: verdict.eb_bound,
        certified: verdict.certified,
        payoff_nodecoy,
        key_rate,
    })
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepReport> {
    spec.validate()?;
    let table = spec.table()?;
    let bound = sweep_bound(spec, &table)?;
    let rows = spec
        .values
        .par_iter()
        .map(|&v| sweep_point(spec, &table, &bound, v))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport {
        parameter: spec.parameter,
        bound,
        rows,
    })
}

#[derive(Debug, Serialize)]
struct Environment {
    package: &'static str,
    version: &'static str,
    os: &'static str,
    arch: &'static str,
}

#[derive(Debug, Serialize)]
struct Sidecar<'a> {
    config: &'a SweepSpec,
    eb_bound: &'a EbBoundResult,
    environment: Environment,
}

/// Writes `sweep.csv` and `sweep.json` (config and environment) into `dir`.
pub fn write_report(dir: &Path, spec: &SweepSpec, report: &SweepReport) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join("sweep.csv");
    let json_path = dir.join("sweep.json");
    report.write_csv(std::fs::File::create(&csv_path)?)?;
    let sidecar = Sidecar {
        config: spec,
        eb_bound: &report.bound,
        environment: Environment {
            package: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
        },
    };
    let mut f = std::fs::File::create(&json_path)?;
    serde_json::to_writer_pretty(&mut f, &sidecar)?;
    f.write_all(b"\n")?;
    Ok((csv_path, json_path))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoryRow {
    pub param: f64,
    /// Single-photon payoff with perfect states and detectors.
    pub ideal: f64,
    /// Decoy lower bound from exact (unsampled) simulated gains.
    pub rs_mdi: f64,
}

/// Ideal-game and simulated theory curves side by side.
pub fn report_theory_curve(
    kind: TableKind,
    parameter: SweepParameter,
    values: &[f64],
    sim: &SimConfig,
) -> Result<Vec<TheoryRow>> {
    let table = match kind {
        TableKind::SixState => PayoffTable::ideal_six_state(),
        TableKind::FourState => PayoffTable::ideal_four_state(),
        TableKind::Custom => {
            return Err(Error::Config(
                "theory curves are defined for the built-in tables".into(),
            ))
        }
    };
    let mut spec = SweepSpec::new(parameter, values.to_vec());
    spec.table = kind;
    spec.sim = SimConfig {
        mode: SimMode::Analytic,
        ..*sim
    };
    spec.bound = BoundSource::Fixed { value: 0.0 };
    spec.validate()?;
    values
        .par_iter()
        .map(|&v| {
            let channel = match parameter {
                SweepParameter::Gamma => Channel::decoherence(v)?,
                SweepParameter::Beta => match sim.channel {
                    OpticalChannel::Identity => Channel::identity(),
                    OpticalChannel::Decoherence { gamma } => Channel::decoherence(gamma)?,
                },
            };
            let row = sweep_point(&spec, &table, &EbBoundResult::fixed(0.0), v)?;
            Ok(TheoryRow {
                param: v,
                ideal: ideal_payoff(&channel, &table),
                rs_mdi: row.payoff_lower,
            })
        })
        .collect()
}

pub fn write_theory_csv<W: Write>(rows: &[TheoryRow], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["param", "ideal", "rs_mdi"])?;
    for r in rows {
        wtr.write_record([r.param.to_string(), r.ideal.to_string(), r.rs_mdi.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// EB bound of a built-in table with states read from a tomography CSV.
pub fn bound_from_tomography(path: &Path, kind: TableKind) -> Result<EbBoundResult> {
    let tomo = TomographySet::from_path(path)?;
    let table = PayoffTable::from_tomography(kind, &tomo)?;
    eb_bound_with(&table, &BoundOptions::default())
}
