//! Experiment orchestration: every run produces one table, sweeps fan out
//! over parameter points and are stitched back together in config order.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::analytics::{closed_form, coherence_l1};
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::dynamics::{
    build_liouvillian, evolve, liouvillian_derivative, steady_state, steady_state_derivative,
    TimeGrid,
};
use crate::error::{Error, Result};
use crate::estimation::{
    fisher_comparison, qfi_bloch, qfi_curves, CurveDiagnostics, EstimationTarget,
    SteadyDerivativeMethod,
};
use crate::linalg::{self, max_abs};
use crate::model::{InteractionKind, SystemParams};
use crate::nonmarkov::{backflow, maximize_over_pairs, saturation_run};
use crate::state::{trace_out_ancilla, DensityMatrix};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    /// `None` marks a value that does not apply at that row.
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Option<f64>>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn push_values(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&v| Some(v)).collect());
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Values of a column, `None` cells skipped.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.column_index(name)?;
        Some(self.rows.iter().filter_map(|r| r[k]).collect())
    }

    fn check_finite(&self) -> Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            for (k, cell) in row.iter().enumerate() {
                if let Some(v) = cell {
                    if !v.is_finite() {
                        return Err(Error::NumericalInvariant(format!(
                            "non-finite value {v} in column `{}` of row {}",
                            self.columns[k],
                            i + 1
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| c.map(format_float).unwrap_or_default())
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Shortest decimal string that parses back to the same double.
pub fn format_float(x: f64) -> String {
    format!("{x:?}")
}

/// Invariant counters accumulated over every point of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Counters {
    pub max_trace_drift: f64,
    pub renormalizations: usize,
    /// Most negative eigenvalue seen among evolved states, if any were checked.
    pub min_eigenvalue: Option<f64>,
    pub clamped_qfi: usize,
    pub rank_warnings: usize,
    pub sld_cross_checks: usize,
    pub max_cross_check_relative: f64,
    pub richardson_checked: usize,
    pub richardson_failures: usize,
    pub richardson_max_relative: f64,
    pub coarse_cells: usize,
    pub unsaturated_runs: usize,
    pub degenerate_points: usize,
}

impl Default for Counters {
    fn default() -> Self {
        Self {
            max_trace_drift: 0.0,
            renormalizations: 0,
            min_eigenvalue: None,
            clamped_qfi: 0,
            rank_warnings: 0,
            sld_cross_checks: 0,
            max_cross_check_relative: 0.0,
            richardson_checked: 0,
            richardson_failures: 0,
            richardson_max_relative: 0.0,
            coarse_cells: 0,
            unsaturated_runs: 0,
            degenerate_points: 0,
        }
    }
}

impl Counters {
    fn merge(&mut self, o: &Counters) {
        self.max_trace_drift = self.max_trace_drift.max(o.max_trace_drift);
        self.renormalizations += o.renormalizations;
        self.min_eigenvalue = match (self.min_eigenvalue, o.min_eigenvalue) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self.clamped_qfi += o.clamped_qfi;
        self.rank_warnings += o.rank_warnings;
        self.sld_cross_checks += o.sld_cross_checks;
        self.max_cross_check_relative = self
            .max_cross_check_relative
            .max(o.max_cross_check_relative);
        self.richardson_checked += o.richardson_checked;
        self.richardson_failures += o.richardson_failures;
        self.richardson_max_relative = self.richardson_max_relative.max(o.richardson_max_relative);
        self.coarse_cells += o.coarse_cells;
        self.unsaturated_runs += o.unsaturated_runs;
        self.degenerate_points += o.degenerate_points;
    }

    fn observe_curve(&mut self, d: &CurveDiagnostics, with_shared: bool) {
        self.clamped_qfi += d.clamped;
        self.rank_warnings += d.rank_warnings;
        self.sld_cross_checks += d.cross_checks;
        self.max_cross_check_relative = self
            .max_cross_check_relative
            .max(d.max_cross_check_relative);
        // Richardson and trace figures describe the shared evolutions, so
        // they are counted once per point.
        if with_shared {
            self.richardson_checked += d.richardson.checked;
            self.richardson_failures += d.richardson.failures;
            self.richardson_max_relative =
                self.richardson_max_relative.max(d.richardson.max_relative);
            self.max_trace_drift = self.max_trace_drift.max(d.max_trace_drift);
            self.renormalizations += d.renormalizations;
        }
    }
}

struct PointResult {
    table: Table,
    counters: Counters,
    notes: Map<String, Value>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub table: Table,
    pub counters: Counters,
    /// Per-point scalar results that do not fit the table.
    pub notes: Vec<Value>,
    pub wall_time: Duration,
}

pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    let started = Instant::now();
    let kind = config.point_experiment();
    let points = config.points().into_iter().collect::<Result<Vec<_>>>()?;
    let assignments: Vec<Vec<(String, f64)>> = match &config.sweep {
        Some(s) => s.points(),
        None => vec![Vec::new()],
    };
    let grid = config.grid.as_ref().map(|g| g.build()).transpose()?;
    let rho0 = config.initial_state.density()?;

    let work = |(p, assigned): (&SystemParams, &Vec<(String, f64)>)| {
        run_point(config, kind, p, &rho0, grid.as_ref()).map_err(|e| {
            let at: Vec<String> = assigned.iter().map(|(f, v)| format!("{f}={v}")).collect();
            if at.is_empty() {
                e.context(format!("{kind}"))
            } else {
                e.context(format!("{kind} at {}", at.join(", ")))
            }
        })
    };
    let results: Vec<PointResult> = if points.len() > 1 {
        points
            .par_iter()
            .zip(assignments.par_iter())
            .map(work)
            .collect::<Result<_>>()?
    } else {
        points
            .iter()
            .zip(assignments.iter())
            .map(work)
            .collect::<Result<_>>()?
    };

    let prefix: Vec<&str> = match (&config.sweep, kind) {
        (Some(_), ExperimentKind::Steady) | (None, _) => Vec::new(),
        (Some(s), _) => s.fields(),
    };
    let mut table = Table::default();
    let mut counters = Counters::default();
    let mut notes = Vec::with_capacity(results.len());
    for (result, assigned) in results.into_iter().zip(&assignments) {
        if table.columns.is_empty() {
            table.columns = prefix
                .iter()
                .map(|s| s.to_string())
                .chain(result.table.columns.iter().cloned())
                .collect();
        }
        let lead: Vec<Option<f64>> = assigned
            .iter()
            .take(prefix.len())
            .map(|(_, v)| Some(*v))
            .collect();
        for row in result.table.rows {
            table.rows.push(lead.iter().copied().chain(row).collect());
        }
        counters.merge(&result.counters);
        let mut note = Map::new();
        for (f, v) in assigned {
            note.insert(f.clone(), json!(v));
        }
        note.extend(result.notes);
        notes.push(Value::Object(note));
    }
    table.check_finite()?;
    Ok(RunOutput {
        config: config.clone(),
        table,
        counters,
        notes,
        wall_time: started.elapsed(),
    })
}

fn run_point(
    config: &ExperimentConfig,
    kind: ExperimentKind,
    p: &SystemParams,
    rho0: &DensityMatrix,
    grid: Option<&TimeGrid>,
) -> Result<PointResult> {
    let need_grid =
        || grid.ok_or_else(|| Error::InvalidGrid(format!("experiment `{kind}` needs a grid")));
    match kind {
        ExperimentKind::Evolve => evolve_point(p, rho0, need_grid()?),
        ExperimentKind::Qfi => qfi_point(config, p, rho0, need_grid()?),
        ExperimentKind::FiCompare => fi_point(config.target, p, rho0, need_grid()?),
        ExperimentKind::Coherence => coherence_point(p, rho0, need_grid()?),
        ExperimentKind::Nonmarkov => nonmarkov_point(config, p, grid),
        ExperimentKind::Steady => steady_point(config.steady.method, p),
        ExperimentKind::Sweep => Err(Error::Config {
            key: "sweep.experiment".into(),
            line: 0,
            detail: "sweeps cannot nest".into(),
        }),
    }
}

fn evolve_point(p: &SystemParams, rho0: &DensityMatrix, grid: &TimeGrid) -> Result<PointResult> {
    let traj = evolve(&build_liouvillian(p)?, rho0, grid)?;
    let mut table = Table::new(&[
        "t",
        "probe_x",
        "probe_y",
        "probe_z",
        "ancilla_x",
        "ancilla_y",
        "ancilla_z",
        "purity",
    ]);
    for (t, rho) in traj.times().iter().zip(traj.states()) {
        let rp = rho.partial_trace_ancilla()?.bloch()?;
        let ra = rho.partial_trace_probe()?.bloch()?;
        table.push_values(&[*t, rp.x, rp.y, rp.z, ra.x, ra.y, ra.z, rho.purity()]);
    }
    let d = traj.diagnostics();
    let counters = Counters {
        max_trace_drift: d.max_trace_drift,
        renormalizations: d.renormalizations,
        min_eigenvalue: Some(d.min_eigenvalue),
        ..Default::default()
    };
    Ok(PointResult {
        table,
        counters,
        notes: Map::new(),
    })
}

fn qfi_point(
    config: &ExperimentConfig,
    p: &SystemParams,
    rho0: &DensityMatrix,
    grid: &TimeGrid,
) -> Result<PointResult> {
    let curves = qfi_curves(p, config.target, rho0, grid, &config.subsystems)?;
    let mut columns = vec!["t".to_string()];
    columns.extend(curves.iter().map(|c| format!("qfi_{}", c.subsystem.name())));
    let mut table = Table {
        columns,
        rows: Vec::with_capacity(grid.len()),
    };
    for (k, t) in grid.times().iter().enumerate() {
        let mut row = vec![Some(*t)];
        row.extend(curves.iter().map(|c| Some(c.values[k])));
        table.push(row);
    }
    let mut counters = Counters::default();
    let mut notes = Map::new();
    for (i, c) in curves.iter().enumerate() {
        counters.observe_curve(&c.diagnostics, i == 0);
        let (t_sup, sup) = c.supremum();
        notes.insert(format!("sup_{}", c.subsystem.name()), json!(sup));
        notes.insert(format!("t_sup_{}", c.subsystem.name()), json!(t_sup));
    }
    Ok(PointResult {
        table,
        counters,
        notes,
    })
}

fn fi_point(
    target: EstimationTarget,
    p: &SystemParams,
    rho0: &DensityMatrix,
    grid: &TimeGrid,
) -> Result<PointResult> {
    let cmp = fisher_comparison(p, target, rho0, grid)?;
    let mut table = Table::new(&["t", "qfi", "fi_sz", "fi_sx"]);
    for k in 0..cmp.times.len() {
        table.push_values(&[
            cmp.times[k],
            cmp.qfi[k],
            cmp.fi_sigma_z[k],
            cmp.fi_sigma_x[k],
        ]);
    }
    let mut counters = Counters::default();
    counters.observe_curve(&cmp.diagnostics, true);
    Ok(PointResult {
        table,
        counters,
        notes: Map::new(),
    })
}

fn coherence_point(p: &SystemParams, rho0: &DensityMatrix, grid: &TimeGrid) -> Result<PointResult> {
    let traj = evolve(&build_liouvillian(p)?, rho0, grid)?;
    let mut table = Table::new(&["t", "coherence"]);
    let mut peak: f64 = 0.0;
    for (t, rho) in traj.times().iter().zip(traj.states()) {
        let c = coherence_l1(&rho.partial_trace_ancilla()?);
        peak = peak.max(c);
        table.push_values(&[*t, c]);
    }
    let d = traj.diagnostics();
    let counters = Counters {
        max_trace_drift: d.max_trace_drift,
        renormalizations: d.renormalizations,
        min_eigenvalue: Some(d.min_eigenvalue),
        ..Default::default()
    };
    let mut notes = Map::new();
    notes.insert("max_coherence".into(), json!(peak));
    Ok(PointResult {
        table,
        counters,
        notes,
    })
}

fn nonmarkov_point(
    config: &ExperimentConfig,
    p: &SystemParams,
    grid: Option<&TimeGrid>,
) -> Result<PointResult> {
    let anc = config.initial_state.ancilla.density()?;
    let mut notes = Map::new();
    let mut counters = Counters::default();
    let curve = match grid {
        Some(grid) => backflow(p, &anc, grid)?,
        None => {
            let run = saturation_run(p, &anc, &config.backflow.saturation)?;
            notes.insert("horizon".into(), json!(run.horizon));
            notes.insert("saturated".into(), json!(run.saturated));
            notes.insert("last_decade_change".into(), json!(run.last_decade_change));
            notes.insert("steps".into(), json!(run.steps));
            notes.insert("subspace_dim".into(), json!(run.subspace_dim));
            if !run.saturated {
                counters.unsaturated_runs += 1;
            }
            run.curve
        }
    };
    counters.coarse_cells += curve.coarse_cells.len();
    notes.insert("saturation".into(), json!(curve.saturation()));
    if config.backflow.maximize_pairs {
        let search_grid = match grid {
            Some(g) => g.clone(),
            None => TimeGrid::linear(1e3, 20_001)?,
        };
        let (best, dir) =
            maximize_over_pairs(p, &anc, &search_grid, config.backflow.pair_resolution)?;
        notes.insert("best_pair_saturation".into(), json!(best));
        notes.insert("best_pair_direction".into(), json!(dir.as_array()));
        notes.insert("pair_search_horizon".into(), json!(search_grid.horizon()));
    }
    let mut table = Table::new(&["t", "D", "N"]);
    for k in 0..curve.times.len() {
        table.push_values(&[curve.times[k], curve.distance[k], curve.n_cumulative[k]]);
    }
    Ok(PointResult {
        table,
        counters,
        notes,
    })
}

const STEADY_COLUMNS: [&str; 15] = [
    "T",
    "omega_a",
    "gamma",
    "g",
    "second_eigenvalue",
    "delta_p",
    "f_T",
    "f_wA",
    "f_gamma",
    "delta_p_numeric",
    "f_T_numeric",
    "f_wA_numeric",
    "f_gamma_numeric",
    "max_relative_error",
    "probe_deviation",
];

fn steady_point(method: SteadyDerivativeMethod, p: &SystemParams) -> Result<PointResult> {
    let l = build_liouvillian(p)?;
    let second = l.spectrum()[1].norm();
    let closed = if p.interaction == InteractionKind::XX {
        Some(closed_form(p)?)
    } else {
        None
    };
    if let Some(c) = &closed {
        c.validate()?;
    }
    let mut counters = Counters::default();
    let numeric = match steady_state(&l) {
        Ok(rho) => Some(steady_numeric(method, p, &l, &rho)?),
        Err(e @ Error::DegenerateSteadyState { .. }) => {
            log::warn!(
                "no unique steady state at T = {}, omega_a = {}: {e}",
                p.temperature,
                p.omega_a
            );
            counters.degenerate_points += 1;
            None
        }
        Err(e) => return Err(e),
    };
    let mut row: Vec<Option<f64>> = vec![
        Some(p.temperature),
        Some(p.omega_a),
        Some(p.gamma),
        Some(p.g),
        Some(second),
    ];
    match &closed {
        Some(c) => row.extend([c.delta_p, c.f_t, c.f_wa, c.f_gamma].map(Some)),
        None => row.extend([None; 4]),
    }
    match &numeric {
        Some(n) => row.extend([n.delta_p, n.f[0], n.f[1], n.f[2]].map(Some)),
        None => row.extend([None; 4]),
    }
    let max_rel = match (&closed, &numeric) {
        (Some(c), Some(n)) => Some(
            EstimationTarget::ALL
                .iter()
                .zip(n.f)
                .map(|(&t, f)| {
                    let a = c.qfi(t);
                    if a == f {
                        0.0
                    } else {
                        (a - f).abs() / a.abs()
                    }
                })
                .fold(0.0, f64::max),
        ),
        _ => None,
    };
    row.push(max_rel);
    row.push(numeric.as_ref().map(|n| n.probe_deviation));
    let mut table = Table::new(&STEADY_COLUMNS);
    table.push(row);
    Ok(PointResult {
        table,
        counters,
        notes: Map::new(),
    })
}

struct SteadyNumeric {
    delta_p: f64,
    f: [f64; 3],
    probe_deviation: f64,
}

fn steady_numeric(
    method: SteadyDerivativeMethod,
    p: &SystemParams,
    l: &crate::dynamics::Liouvillian,
    rho: &DensityMatrix,
) -> Result<SteadyNumeric> {
    let probe = rho.partial_trace_ancilla()?;
    let m = probe.matrix();
    let delta_p = 0.5 * (m[(0, 0)].re - m[(1, 1)].re);
    let probe_deviation = max_abs(&(m - linalg::identity(2).scale(0.5)));
    let mut f = [0.0; 3];
    for (slot, target) in f.iter_mut().zip(EstimationTarget::ALL) {
        *slot = match method {
            SteadyDerivativeMethod::LinearResponse => {
                let d = steady_state_derivative(l, rho, &liouvillian_derivative(p, target))?;
                qfi_bloch(&probe, &trace_out_ancilla(&d))?
            }
            SteadyDerivativeMethod::FiniteDifference => {
                crate::estimation::steady_probe_qfi(p, target, method)?.qfi
            }
        };
    }
    Ok(SteadyNumeric {
        delta_p,
        f,
        probe_deviation,
    })
}

/// Where a run's files go: the CSV itself and its JSON summary beside it.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputPaths {
    pub csv: PathBuf,
    pub summary: PathBuf,
}

impl OutputPaths {
    pub fn for_csv(csv: impl Into<PathBuf>) -> Self {
        let csv = csv.into();
        let summary = csv.with_extension("summary.json");
        Self { csv, summary }
    }

    /// `--out`, then the config's `output`, then `<experiment>.csv`.
    pub fn resolve(cli: Option<&Path>, config: &ExperimentConfig) -> Self {
        match (cli, &config.output) {
            (Some(p), _) => Self::for_csv(p),
            (None, Some(p)) => Self::for_csv(p),
            (None, None) => Self::for_csv(format!("{}.csv", config.experiment)),
        }
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    experiment: ExperimentKind,
    point_experiment: ExperimentKind,
    config: &'a ExperimentConfig,
    csv: String,
    columns: &'a [String],
    rows: usize,
    points: usize,
    counters: &'a Counters,
    notes: &'a [Value],
    wall_time_seconds: f64,
}

fn write_atomically(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut partial = path.as_os_str().to_owned();
    partial.push(".partial");
    let partial = PathBuf::from(partial);
    let result = (|| {
        let mut f = fs::File::create(&partial)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&partial, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&partial);
    }
    result
}

/// Write the CSV and the summary; on failure neither file is left behind.
pub fn write_outputs(out: &RunOutput, paths: &OutputPaths) -> Result<()> {
    let summary = Summary {
        experiment: out.config.experiment,
        point_experiment: out.config.point_experiment(),
        config: &out.config,
        csv: paths.csv.display().to_string(),
        columns: &out.table.columns,
        rows: out.table.rows.len(),
        points: out.notes.len(),
        counters: &out.counters,
        notes: &out.notes,
        wall_time_seconds: out.wall_time.as_secs_f64(),
    };
    let summary = serde_json::to_vec_pretty(&summary).map_err(|e| Error::Io(e.to_string()))?;
    write_atomically(&paths.csv, out.table.to_csv().as_bytes())?;
    if let Err(e) = write_atomically(&paths.summary, &summary) {
        let _ = fs::remove_file(&paths.csv);
        return Err(e.into());
    }
    Ok(())
}
