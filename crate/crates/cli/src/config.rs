//! Run configuration: TOML (or the `config` field of a `meta.json`), schema version 1.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use pumpsim::full::InitialBand;
use pumpsim::model::{min_gap, GapReport, PumpSchedule, RiceMele, RmParams, ScheduleKind};
use pumpsim::observables::OffsetEstimator;
use pumpsim::thermal::{MeanFieldSampler, ThermalParams};
use serde::de::{self, MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

/// Momentum and time resolution of every gap and Chern-number scan.
pub const SCAN_GRID: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    Single,
    Meanfield,
    Full,
    OracleCheck,
    Chern,
}

/// Unit tag of a physical quantity. Energies: `gap`, `omega0`, `model`;
/// times: the inverse of an energy unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "gap")]
    Gap,
    #[serde(rename = "omega0")]
    Omega0,
    #[serde(rename = "model")]
    Model,
    #[serde(rename = "1/gap")]
    PerGap,
    #[serde(rename = "1/omega0")]
    PerOmega0,
    #[serde(rename = "1/model")]
    PerModel,
    #[serde(rename = "1/eta")]
    PerEta,
    #[serde(rename = "1/gap_mf")]
    PerMeanFieldGap,
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Unit::Gap => "gap",
            Unit::Omega0 => "omega0",
            Unit::Model => "model",
            Unit::PerGap => "1/gap",
            Unit::PerOmega0 => "1/omega0",
            Unit::PerModel => "1/model",
            Unit::PerEta => "1/eta",
            Unit::PerMeanFieldGap => "1/gap_mf",
        };
        f.write_str(s)
    }
}

/// `{ value = x, unit = "..." }` or `{ pi_times = x, unit = "..." }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quantity {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pi_times: Option<f64>,
    pub unit: Unit,
}

impl Quantity {
    pub fn magnitude(&self) -> f64 {
        match (self.value, self.pi_times) {
            (Some(v), _) => v,
            (None, Some(m)) => m * PI,
            (None, None) => unreachable!("checked on deserialization"),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TaggedQuantity {
    value: Option<f64>,
    pi_times: Option<f64>,
    unit: Unit,
}

struct QuantityVisitor;

impl QuantityVisitor {
    fn bare<E: de::Error>(v: impl fmt::Display) -> E {
        E::custom(format!("bare number {v} has no unit tag; write {{ value = {v}, unit = \"...\" }}"))
    }
}

impl<'de> Visitor<'de> for QuantityVisitor {
    type Value = Quantity;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a unit-tagged quantity { value = ..., unit = \"...\" }")
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Quantity, E> {
        Err(Self::bare(v))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Quantity, E> {
        Err(Self::bare(v))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Quantity, E> {
        Err(Self::bare(v))
    }

    fn visit_map<A: MapAccess<'de>>(self, map: A) -> Result<Quantity, A::Error> {
        let t = TaggedQuantity::deserialize(de::value::MapAccessDeserializer::new(map))?;
        match (t.value, t.pi_times) {
            (Some(_), Some(_)) => Err(de::Error::custom("give either `value` or `pi_times`, not both")),
            (None, None) => Err(de::Error::custom("quantity needs `value` or `pi_times`")),
            (value, pi_times) => {
                let q = Quantity { value, pi_times, unit: t.unit };
                if q.magnitude().is_finite() {
                    Ok(q)
                } else {
                    Err(de::Error::custom("quantity must be finite"))
                }
            }
        }
    }
}

impl<'de> Deserialize<'de> for Quantity {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        d.deserialize_any(QuantityVisitor)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScheduleConfig {
    /// `t1,2 = -(Ω0/4)(1 ± cos)`, `Δ = (Ω0/2) sin`.
    Omega { omega0: Quantity },
    /// `t1,2 = 1 ± cos`, `Δ = -2 sin`.
    Unit,
    /// Time-independent `t1`, `t2`, `Δ`.
    Constant { t1: Quantity, t2: Quantity, delta: Quantity },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub cells: usize,
    #[serde(default)]
    pub n0: i64,
}

fn default_steps() -> usize {
    pumpsim::evolve::PropagatorConfig::default().steps_per_cycle
}

fn default_cycles() -> usize {
    1
}

fn default_samples() -> usize {
    32
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub tau: Quantity,
    #[serde(default = "default_steps")]
    pub steps_per_cycle: usize,
    /// Output times are `i τ / samples_per_cycle` for `i = 0..=cycles·samples_per_cycle`.
    #[serde(default = "default_cycles")]
    pub cycles: usize,
    #[serde(default = "default_samples")]
    pub samples_per_cycle: usize,
}

impl TimeConfig {
    pub fn output_times(&self, tau: f64) -> Vec<f64> {
        let n = self.cycles * self.samples_per_cycle;
        (0..=n).map(|i| tau * i as f64 / self.samples_per_cycle as f64).collect()
    }
}

fn zero_energy() -> Quantity {
    Quantity { value: Some(0.0), pi_times: None, unit: Unit::Model }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalConfig {
    /// Temperatures in units of the system gap; 0 is the ground state.
    pub t_over_gap: Vec<f64>,
    #[serde(default = "zero_energy")]
    pub mu: Quantity,
    pub eta: Quantity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialBandChoice {
    #[default]
    MeanfieldLowest,
    SystemLower,
}

impl From<InitialBandChoice> for InitialBand {
    fn from(c: InitialBandChoice) -> Self {
        match c {
            InitialBandChoice::MeanfieldLowest => InitialBand::MeanFieldLowest,
            InitialBandChoice::SystemLower => InitialBand::SystemLower,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorChoice {
    #[default]
    Minimum,
    FarMedian,
}

impl From<EstimatorChoice> for OffsetEstimator {
    fn from(c: EstimatorChoice) -> Self {
        match c {
            EstimatorChoice::Minimum => OffsetEstimator::Minimum,
            EstimatorChoice::FarMedian => OffsetEstimator::FarMedian,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Switches {
    /// Band loaded in the single-particle and mean-field pipelines.
    #[serde(default)]
    pub band: usize,
    /// Initial auxiliary band for the full and oracle-check pipelines.
    #[serde(default)]
    pub initial_band: InitialBandChoice,
    #[serde(default)]
    pub offset_estimator: EstimatorChoice,
}

fn default_snapshots() -> Vec<f64> {
    vec![0.0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    /// Cycle fractions at which the schedule is frozen for the comparison.
    #[serde(default = "default_snapshots")]
    pub snapshots: Vec<f64>,
    /// Extra cases with random snapshot, temperature, coupling and start cell.
    #[serde(default)]
    pub random_cases: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub pipeline: Pipeline,
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    pub schedule: ScheduleConfig,
    pub lattice: LatticeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<TimeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thermal: Option<ThermalConfig>,
    #[serde(default)]
    pub switches: Switches,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleConfig>,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn parse_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    /// Accepts a bare config object or a `meta.json` carrying one under `config`.
    pub fn parse_json(text: &str) -> CliResult<Self> {
        let mut value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        if let Some(inner) = value.get_mut("config") {
            value = inner.take();
        }
        serde_json::from_value(value).map_err(|e| config_err(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("cannot read {}", path.display()), e))?;
        let config = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::parse_json(&text)?,
            _ => Self::parse_toml(&text)?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(config_err(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.lattice.cells == 0 {
            return Err(config_err("lattice.cells must be at least 1"));
        }
        let needs_time = self.pipeline != Pipeline::Chern;
        let needs_thermal =
            matches!(self.pipeline, Pipeline::Meanfield | Pipeline::Full | Pipeline::OracleCheck);
        match (&self.time, needs_time) {
            (None, true) => return Err(config_err("missing [time] section")),
            (Some(t), _) if t.cycles == 0 || t.samples_per_cycle == 0 => {
                return Err(config_err("time.cycles and time.samples_per_cycle must be positive"))
            }
            _ => {}
        }
        match (&self.thermal, needs_thermal) {
            (None, true) => return Err(config_err("missing [thermal] section")),
            (Some(_), false) if self.pipeline == Pipeline::Single => {
                return Err(config_err("[thermal] has no meaning for pipeline \"single\""))
            }
            (Some(th), _) => {
                if th.t_over_gap.is_empty() {
                    return Err(config_err("thermal.t_over_gap is empty"));
                }
                if let Some(bad) = th.t_over_gap.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
                    return Err(config_err(format!("temperature {bad} must be finite and >= 0")));
                }
            }
            _ => {}
        }
        if self.oracle.is_some() && self.pipeline != Pipeline::OracleCheck {
            return Err(config_err("[oracle] is only used by pipeline \"oracle-check\""));
        }
        if let Some(o) = &self.oracle {
            if let Some(bad) = o.snapshots.iter().find(|s| !(0.0..=1.0).contains(*s)) {
                return Err(config_err(format!("oracle snapshot {bad} is not a cycle fraction in [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn time(&self) -> &TimeConfig {
        self.time.as_ref().expect("validated")
    }

    pub fn thermal(&self) -> CliResult<&ThermalConfig> {
        self.thermal.as_ref().ok_or_else(|| config_err("missing [thermal] section"))
    }
}

/// Schedule and couplings converted to model units.
#[derive(Debug, Clone)]
pub struct Model {
    kind: ScheduleKind,
    omega0: Option<f64>,
    pub gap: GapReport,
    pub eta: Option<f64>,
    pub mu: f64,
}

fn model_only(q: &Quantity, what: &str) -> CliResult<f64> {
    if q.unit != Unit::Model {
        return Err(config_err(format!(
            "{what} defines the energy scale and must use unit \"model\", got \"{}\"",
            q.unit
        )));
    }
    Ok(q.magnitude())
}

impl Model {
    pub fn resolve(config: &RunConfig) -> CliResult<Self> {
        let (kind, omega0) = match &config.schedule {
            ScheduleConfig::Omega { omega0 } => {
                let w = model_only(omega0, "schedule.omega0")?;
                (ScheduleKind::Omega { omega0: w }, Some(w))
            }
            ScheduleConfig::Unit => (ScheduleKind::Unit, None),
            ScheduleConfig::Constant { t1, t2, delta } => {
                let p = RmParams::new(
                    model_only(t1, "schedule.t1")?,
                    model_only(t2, "schedule.t2")?,
                    model_only(delta, "schedule.delta")?,
                );
                (ScheduleKind::Constant(p), None)
            }
        };
        let probe = RiceMele::new(PumpSchedule::new(1.0, kind.clone())?);
        let gap = min_gap(&probe, SCAN_GRID, SCAN_GRID)?;
        let mut model = Model { kind, omega0, gap, eta: None, mu: 0.0 };
        if let Some(th) = &config.thermal {
            model.eta = Some(model.energy(&th.eta, "thermal.eta")?);
            model.mu = model.energy(&th.mu, "thermal.mu")?;
        }
        Ok(model)
    }

    pub fn system(&self, tau: f64) -> CliResult<RiceMele> {
        Ok(RiceMele::new(PumpSchedule::new(tau, self.kind.clone())?))
    }

    fn omega0(&self, unit: Unit) -> CliResult<f64> {
        self.omega0.ok_or_else(|| config_err(format!("unit \"{unit}\" needs schedule variant \"omega\"")))
    }

    pub fn energy(&self, q: &Quantity, what: &str) -> CliResult<f64> {
        let scale = match q.unit {
            Unit::Gap => self.gap.gap,
            Unit::Omega0 => self.omega0(q.unit)?,
            Unit::Model => 1.0,
            other => return Err(config_err(format!("{what} is an energy; unit \"{other}\" is a time"))),
        };
        Ok(q.magnitude() * scale)
    }

    pub fn eta(&self) -> CliResult<f64> {
        self.eta.ok_or_else(|| config_err("missing [thermal] section"))
    }

    pub fn thermal(&self, t_over_gap: f64) -> CliResult<ThermalParams> {
        Ok(ThermalParams::from_temperature(t_over_gap * self.gap.gap, self.mu)?)
    }

    /// Lowest gap of the mean-field Hamiltonian at `tp`.
    pub fn meanfield_gap(&self, tp: &ThermalParams) -> CliResult<GapReport> {
        let mf = MeanFieldSampler { system: self.system(1.0)?, thermal: *tp, eta: self.eta()? };
        Ok(min_gap(&mf, SCAN_GRID, SCAN_GRID)?)
    }

    /// Cycle period in model units; `tp` is needed for the `1/gap_mf` unit.
    pub fn tau(&self, q: &Quantity, tp: Option<&ThermalParams>) -> CliResult<f64> {
        let scale = match q.unit {
            Unit::PerGap => self.gap.gap,
            Unit::PerOmega0 => self.omega0(q.unit)?,
            Unit::PerModel => 1.0,
            Unit::PerEta => self.eta()?,
            Unit::PerMeanFieldGap => {
                let tp = tp.ok_or_else(|| config_err("unit \"1/gap_mf\" needs a temperature"))?;
                self.meanfield_gap(tp)?.gap
            }
            other => return Err(config_err(format!("time.tau is a time; unit \"{other}\" is an energy"))),
        };
        Ok(q.magnitude() / scale)
    }
}
