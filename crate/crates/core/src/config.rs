//! JSON experiment configuration: parsing, defaults and validation.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::{Spacing, TimeGrid, DEFAULT_POINTS};
use crate::error::{Error, Result};
use crate::estimation::{EstimationTarget, SteadyDerivativeMethod, Subsystem};
use crate::model::{InteractionKind, SystemParams};
use crate::nonmarkov::SaturationOptions;
use crate::state::{density_from_bloch, BlochVector, DensityMatrix};

/// Horizon used by curve experiments when the document has no `grid`.
pub const DEFAULT_HORIZON: f64 = 2e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Evolve,
    Qfi,
    Nonmarkov,
    Steady,
    FiCompare,
    Coherence,
    Sweep,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        Self::Evolve,
        Self::Qfi,
        Self::Nonmarkov,
        Self::Steady,
        Self::FiCompare,
        Self::Coherence,
        Self::Sweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Evolve => "evolve",
            Self::Qfi => "qfi",
            Self::Nonmarkov => "nonmarkov",
            Self::Steady => "steady",
            Self::FiCompare => "fi-compare",
            Self::Coherence => "coherence",
            Self::Sweep => "sweep",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config {
                key: "experiment".into(),
                line: 0,
                detail: format!("unknown experiment `{s}`"),
            })
    }
}

/// Single-qubit preparation: `"ground"`, `"excited"`, `"plus"`, `"minus"`
/// or `{"bloch": [x, y, z]}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateSpec {
    Ground,
    Excited,
    Plus,
    Minus,
    Bloch([f64; 3]),
}

impl StateSpec {
    pub fn density(&self) -> Result<DensityMatrix> {
        Ok(match *self {
            Self::Ground => DensityMatrix::ground(),
            Self::Excited => DensityMatrix::excited(),
            Self::Plus => DensityMatrix::plus(),
            Self::Minus => DensityMatrix::minus(),
            Self::Bloch([x, y, z]) => density_from_bloch(&BlochVector::new(x, y, z)?)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    #[serde(default = "ground")]
    pub probe: StateSpec,
    #[serde(default = "excited")]
    pub ancilla: StateSpec,
}

fn ground() -> StateSpec {
    StateSpec::Ground
}

fn excited() -> StateSpec {
    StateSpec::Excited
}

impl Default for InitialState {
    fn default() -> Self {
        Self {
            probe: StateSpec::Ground,
            ancilla: StateSpec::Excited,
        }
    }
}

impl InitialState {
    /// Probe ⊗ ancilla.
    pub fn density(&self) -> Result<DensityMatrix> {
        Ok(self.probe.density()?.tensor(&self.ancilla.density()?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub horizon: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    /// Log spacing past `t = 1e3`, linear below, unless given.
    #[serde(default)]
    pub spacing: Option<Spacing>,
    /// Extra sample times merged into the grid.
    #[serde(default)]
    pub include: Vec<f64>,
}

fn default_points() -> usize {
    DEFAULT_POINTS
}

impl GridSpec {
    pub fn with_horizon(horizon: f64) -> Self {
        Self {
            horizon,
            points: DEFAULT_POINTS,
            spacing: None,
            include: Vec::new(),
        }
    }

    pub fn build(&self) -> Result<TimeGrid> {
        let spacing = self
            .spacing
            .unwrap_or_else(|| TimeGrid::default_spacing(self.horizon));
        let grid = TimeGrid::with_spacing(spacing, self.horizon, self.points)?;
        if self.include.is_empty() {
            Ok(grid)
        } else {
            grid.including(&self.include)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub field: String,
    pub values: Vec<f64>,
}

/// Cartesian product of the axes, first axis slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Experiment run at each point; defaults to the top-level one.
    #[serde(default)]
    pub experiment: Option<ExperimentKind>,
    pub axes: Vec<SweepAxis>,
}

impl SweepSpec {
    pub fn points(&self) -> Vec<Vec<(String, f64)>> {
        let mut points = vec![Vec::new()];
        for axis in &self.axes {
            points = points
                .into_iter()
                .flat_map(|prefix| {
                    axis.values.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push((axis.field.clone(), v));
                        p
                    })
                })
                .collect();
        }
        points
    }

    pub fn fields(&self) -> Vec<&str> {
        self.axes.iter().map(|a| a.field.as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackflowSpec {
    #[serde(default)]
    pub saturation: SaturationOptions,
    /// Grid-search antipodal pure probe pairs in addition to `|+>, |->`.
    #[serde(default)]
    pub maximize_pairs: bool,
    #[serde(default = "default_resolution")]
    pub pair_resolution: usize,
}

fn default_resolution() -> usize {
    4
}

impl Default for BackflowSpec {
    fn default() -> Self {
        Self {
            saturation: SaturationOptions::default(),
            maximize_pairs: false,
            pair_resolution: default_resolution(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteadySpec {
    #[serde(default = "linear_response")]
    pub method: SteadyDerivativeMethod,
}

fn linear_response() -> SteadyDerivativeMethod {
    SteadyDerivativeMethod::LinearResponse
}

impl Default for SteadySpec {
    fn default() -> Self {
        Self {
            method: SteadyDerivativeMethod::LinearResponse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    #[serde(default)]
    experiment: Option<ExperimentKind>,
    params: SystemParams,
    #[serde(default = "temperature")]
    target: EstimationTarget,
    #[serde(default = "probe_only")]
    subsystems: Vec<Subsystem>,
    #[serde(default)]
    grid: Option<GridSpec>,
    #[serde(default)]
    initial_state: InitialState,
    #[serde(default)]
    sweep: Option<SweepSpec>,
    #[serde(default)]
    backflow: BackflowSpec,
    #[serde(default)]
    steady: SteadySpec,
    #[serde(default)]
    output: Option<PathBuf>,
}

fn temperature() -> EstimationTarget {
    EstimationTarget::Temperature
}

fn probe_only() -> Vec<Subsystem> {
    vec![Subsystem::Probe]
}

/// A validated experiment with every default resolved.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub params: SystemParams,
    pub target: EstimationTarget,
    pub subsystems: Vec<Subsystem>,
    /// `None` only for `nonmarkov`, which then streams to saturation.
    pub grid: Option<GridSpec>,
    pub initial_state: InitialState,
    pub sweep: Option<SweepSpec>,
    pub backflow: BackflowSpec,
    pub steady: SteadySpec,
    pub output: Option<PathBuf>,
}

/// 1-based line of the first occurrence of `"key"`, or 0.
fn line_of(text: &str, key: &str) -> usize {
    let needle = format!("\"{key}\"");
    text.find(&needle)
        .map(|pos| text[..pos].matches('\n').count() + 1)
        .unwrap_or(0)
}

fn config_error(text: &str, key: &str, detail: impl Into<String>) -> Error {
    let leaf = key.rsplit('.').next().unwrap_or(key);
    Error::Config {
        key: key.to_string(),
        line: line_of(text, leaf),
        detail: detail.into(),
    }
}

/// Parse and validate a JSON document. `requested` is the experiment named on
/// the command line; it fills a missing `experiment` key and must agree with
/// a present one.
pub fn parse_config(text: &str, requested: Option<ExperimentKind>) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: Document = serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        let line = e.inner().line();
        let message = e.inner().to_string();
        let detail = match message.rfind(" at line ") {
            Some(cut) => message[..cut].to_string(),
            None => message,
        };
        Error::Config { key, line, detail }
    })?;

    let experiment = match (doc.experiment, requested) {
        (Some(a), Some(b)) if a != b => {
            return Err(config_error(
                text,
                "experiment",
                format!("document says `{a}` but `{b}` was requested"),
            ))
        }
        (Some(a), _) | (None, Some(a)) => a,
        (None, None) => return Err(config_error(text, "experiment", "missing experiment")),
    };

    let config = ExperimentConfig {
        experiment,
        params: doc.params,
        target: doc.target,
        subsystems: doc.subsystems,
        grid: doc.grid,
        initial_state: doc.initial_state,
        sweep: doc.sweep,
        backflow: doc.backflow,
        steady: doc.steady,
        output: doc.output,
    };
    config.resolve(text)
}

impl ExperimentConfig {
    /// The experiment run at each point: the sweep's inner one for sweeps.
    pub fn point_experiment(&self) -> ExperimentKind {
        match (&self.sweep, self.experiment) {
            (
                Some(SweepSpec {
                    experiment: Some(inner),
                    ..
                }),
                _,
            ) => *inner,
            (_, kind) => kind,
        }
    }

    fn resolve(mut self, text: &str) -> Result<Self> {
        if self.experiment == ExperimentKind::Sweep {
            match &self.sweep {
                None => {
                    return Err(config_error(
                        text,
                        "sweep",
                        "experiment `sweep` needs a `sweep` block",
                    ))
                }
                Some(s) if s.experiment.is_none() => {
                    return Err(config_error(
                        text,
                        "sweep.experiment",
                        "experiment `sweep` needs the experiment to run",
                    ))
                }
                _ => {}
            }
        }
        if let Some(s) = &self.sweep {
            if s.experiment == Some(ExperimentKind::Sweep) {
                return Err(config_error(text, "sweep.experiment", "sweeps cannot nest"));
            }
            if let Some(inner) = s.experiment {
                if self.experiment != ExperimentKind::Sweep && inner != self.experiment {
                    return Err(config_error(
                        text,
                        "sweep.experiment",
                        format!("`{inner}` conflicts with experiment `{}`", self.experiment),
                    ));
                }
            }
            if s.axes.is_empty() {
                return Err(config_error(
                    text,
                    "sweep.axes",
                    "at least one axis is required",
                ));
            }
            for axis in &s.axes {
                if !SystemParams::FIELDS.contains(&axis.field.as_str()) {
                    return Err(config_error(
                        text,
                        "sweep.axes.field",
                        format!(
                            "unknown parameter `{}` (expected one of {:?})",
                            axis.field,
                            SystemParams::FIELDS
                        ),
                    ));
                }
                if axis.values.is_empty() {
                    return Err(config_error(
                        text,
                        "sweep.axes.values",
                        format!("no values for `{}`", axis.field),
                    ));
                }
            }
        }
        if self.grid.is_none() && self.point_experiment() != ExperimentKind::Nonmarkov {
            self.grid = Some(GridSpec::with_horizon(DEFAULT_HORIZON));
        }
        self.validate(text)?;
        Ok(self)
    }

    fn validate(&self, text: &str) -> Result<()> {
        let check_params = |p: &SystemParams| {
            p.validate().map_err(|e| match e {
                Error::InvalidParameter { name, detail } => {
                    config_error(text, &format!("params.{name}"), detail)
                }
                other => other,
            })
        };
        check_params(&self.params)?;
        for point in self.points() {
            check_params(&point?)?;
        }
        if let Some(grid) = &self.grid {
            grid.build()
                .map_err(|e| config_error(text, "grid", e.to_string()))?;
        }
        self.initial_state
            .density()
            .map_err(|e| config_error(text, "initial_state", e.to_string()))?;
        if self.subsystems.is_empty() {
            return Err(config_error(
                text,
                "subsystems",
                "at least one subsystem is required",
            ));
        }
        self.backflow
            .saturation
            .validate()
            .map_err(|e| config_error(text, "backflow.saturation", e.to_string()))?;
        if self.backflow.maximize_pairs && self.backflow.pair_resolution < 2 {
            return Err(config_error(
                text,
                "backflow.pair_resolution",
                "need at least 2",
            ));
        }
        Ok(())
    }

    /// Parameters at every sweep point, in output order; the base parameters
    /// alone when there is no sweep.
    pub fn points(&self) -> Vec<Result<SystemParams>> {
        match &self.sweep {
            None => vec![Ok(self.params)],
            Some(s) => s
                .points()
                .into_iter()
                .map(|assignments| {
                    let mut p = self.params;
                    for (field, v) in &assignments {
                        p.set(field, *v)?;
                    }
                    Ok(p)
                })
                .collect(),
        }
    }

    /// Apply a `key=value` override from the command line and revalidate.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let bad = |detail: String| Error::Config {
            key: format!("--param {assignment}"),
            line: 0,
            detail,
        };
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| bad("expected key=value".into()))?;
        let (key, value) = (key.trim(), value.trim());
        let number = || {
            value
                .parse::<f64>()
                .map_err(|e| bad(format!("`{value}` is not a number: {e}")))
        };
        match key {
            "interaction" => {
                self.params.interaction = value
                    .parse::<InteractionKind>()
                    .map_err(|e| bad(e.to_string()))?
            }
            "target" => {
                self.target = serde_json::from_value(serde_json::Value::String(value.into()))
                    .map_err(|e| bad(e.to_string()))?
            }
            "grid.horizon" => {
                self.grid
                    .get_or_insert_with(|| GridSpec::with_horizon(DEFAULT_HORIZON))
                    .horizon = number()?
            }
            "grid.points" => {
                self.grid
                    .get_or_insert_with(|| GridSpec::with_horizon(DEFAULT_HORIZON))
                    .points = value
                    .parse()
                    .map_err(|e| bad(format!("`{value}` is not a count: {e}")))?
            }
            field if SystemParams::FIELDS.contains(&field) => self.params.set(field, number()?)?,
            other => return Err(bad(format!("unknown override key `{other}`"))),
        }
        self.validate("").map_err(|e| match e {
            Error::Config { detail, .. } => bad(detail),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
  "experiment": "qfi",
  "params": {"omega_p": 1, "omega_a": 0.99, "g": 0.03, "gamma": 0.05, "temperature": 0.3, "interaction": "XX"}
}"#;

    #[test]
    fn minimal_document_gets_defaults() {
        let c = parse_config(MINIMAL, None).unwrap();
        assert_eq!(c.experiment, ExperimentKind::Qfi);
        assert_eq!(
            c.initial_state,
            InitialState {
                probe: StateSpec::Ground,
                ancilla: StateSpec::Excited
            }
        );
        assert_eq!(c.target, EstimationTarget::Temperature);
        assert_eq!(c.subsystems, vec![Subsystem::Probe]);
        let grid = c.grid.as_ref().unwrap().build().unwrap();
        assert_eq!(grid.len(), DEFAULT_POINTS);
        assert_eq!(grid.horizon(), DEFAULT_HORIZON);
        assert_eq!(grid.times()[1], 0.1);
    }

    #[test]
    fn sweep_expands_in_order() {
        let text = r#"{
  "experiment": "sweep",
  "params": {"omega_p": 1, "omega_a": 0.99, "g": 0.03, "gamma": 0.05, "temperature": 0.3, "interaction": "XZ"},
  "sweep": {"experiment": "nonmarkov", "axes": [{"field": "g", "values": [0.01, 0.03, 0.06, 0.09]}]}
}"#;
        let c = parse_config(text, Some(ExperimentKind::Sweep)).unwrap();
        let gs: Vec<f64> = c.points().into_iter().map(|p| p.unwrap().g).collect();
        assert_eq!(gs, vec![0.01, 0.03, 0.06, 0.09]);
        assert_eq!(c.point_experiment(), ExperimentKind::Nonmarkov);
        assert!(c.grid.is_none());
    }

    #[test]
    fn cartesian_sweep() {
        let s = SweepSpec {
            experiment: None,
            axes: vec![
                SweepAxis {
                    field: "temperature".into(),
                    values: vec![0.1, 0.2],
                },
                SweepAxis {
                    field: "omega_a".into(),
                    values: vec![0.5, 0.7, 0.9],
                },
            ],
        };
        let pts = s.points();
        assert_eq!(pts.len(), 6);
        assert_eq!(
            pts[1],
            vec![
                ("temperature".to_string(), 0.1),
                ("omega_a".to_string(), 0.7)
            ]
        );
        assert_eq!(pts[3][0].1, 0.2);
    }

    #[test]
    fn negative_coupling_is_rejected_with_its_line() {
        let text = MINIMAL.replace("\"g\": 0.03", "\"g\": -1");
        match parse_config(&text, None) {
            Err(Error::Config { key, line, .. }) => {
                assert_eq!(key, "params.g");
                assert_eq!(line, 3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace(
            "\"experiment\": \"qfi\",",
            "\"experiment\": \"qfi\",\n  \"horizon\": 5,",
        );
        match parse_config(&text, None) {
            Err(Error::Config { line, detail, .. }) => {
                assert_eq!(line, 3);
                assert!(detail.contains("unknown field `horizon`"), "{detail}");
            }
            other => panic!("{other:?}"),
        }
        let text = MINIMAL.replace("\"g\": 0.03", "\"g\": 0.03, \"h\": 1");
        assert!(matches!(
            parse_config(&text, None),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn wrong_types_and_unknown_sweep_fields() {
        let text = MINIMAL.replace("\"g\": 0.03", "\"g\": \"big\"");
        match parse_config(&text, None) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "params.g"),
            other => panic!("{other:?}"),
        }
        let text = MINIMAL.replace(
            "\"experiment\": \"qfi\",",
            "\"experiment\": \"qfi\", \"sweep\": {\"axes\": [{\"field\": \"colour\", \"values\": [1]}]},",
        );
        assert!(matches!(
            parse_config(&text, None),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn experiment_must_agree_with_request() {
        assert!(parse_config(MINIMAL, Some(ExperimentKind::Steady)).is_err());
        let text = MINIMAL.replace("\"experiment\": \"qfi\",", "");
        assert_eq!(
            parse_config(&text, Some(ExperimentKind::Evolve))
                .unwrap()
                .experiment,
            ExperimentKind::Evolve
        );
        assert!(parse_config(&text, None).is_err());
    }

    #[test]
    fn initial_states_and_bloch_vectors() {
        let text = MINIMAL.replace(
            "\"experiment\": \"qfi\",",
            "\"experiment\": \"qfi\", \"initial_state\": {\"probe\": {\"bloch\": [0.6, 0, 0]}, \"ancilla\": \"plus\"},",
        );
        let c = parse_config(&text, None).unwrap();
        let rho = c.initial_state.density().unwrap();
        let probe = rho.partial_trace_ancilla().unwrap().bloch().unwrap();
        assert!((probe.x - 0.6).abs() < 1e-15);
        let text = text.replace("0.6, 0, 0", "1.5, 0, 0");
        assert!(parse_config(&text, None).is_err());
    }

    #[test]
    fn overrides() {
        let mut c = parse_config(MINIMAL, None).unwrap();
        c.apply_override("g=0.09").unwrap();
        c.apply_override("interaction=xz").unwrap();
        c.apply_override("target=gamma").unwrap();
        c.apply_override("grid.horizon=100").unwrap();
        assert_eq!(c.params.g, 0.09);
        assert_eq!(c.params.interaction, InteractionKind::XZ);
        assert_eq!(c.target, EstimationTarget::BathCoupling);
        assert_eq!(c.grid.as_ref().unwrap().horizon, 100.0);
        assert!(c.apply_override("gamma=-2").is_err());
        assert!(c.apply_override("colour=2").is_err());
        assert!(c.apply_override("g").is_err());
    }
}
