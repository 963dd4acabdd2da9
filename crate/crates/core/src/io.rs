//! Run configuration (TOML) and the CSV formats.
//!
//! A configuration starts from an optional preset and overrides individual
//! values:
//!
//! ```toml
//! preset = "dof8"
//!
//! [geometry]
//! segment_count = 8
//!
//! [params]
//! angle_unit = "rad"   # or "deg" for coefficients quoted per degree
//! k_0 = 0.9
//!
//! [simulation]
//! integrator = "dormand_prince45"
//! rtol = 1e-6
//! gravity = true
//!
//! [fit]
//! objective = "tip_y"
//! ```
//!
//! Without a preset every geometry and parameter value must be given.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Deserialize;

use crate::dynamics::{ChainModel, IntegratorKind, SimulationConfig, Trajectory};
use crate::error::{Error, Result};
use crate::forces::{per_degree_to_per_radian, per_radian_to_per_degree, MaterialParams, PressureTrace, STANDARD_GRAVITY};
use crate::geometry::ActuatorGeometry;
use crate::identification::{
    params_from_vector, FitResult, FitSettings, MeasuredTrajectory, Objective, PARAM_NAMES,
};
use crate::presets;

pub const PRESSURE_HEADER: [&str; 2] = ["t_s", "p_pa"];
pub const MEASURED_HEADER: [&str; 3] = ["t_s", "tip_x_m", "tip_y_m"];
pub const PARAMS_HEADER: [&str; 2] = ["parameter", "value"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleUnit {
    #[default]
    Rad,
    Deg,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: Option<String>,
    #[serde(default)]
    geometry: RawGeometry,
    #[serde(default)]
    params: RawParams,
    #[serde(default)]
    simulation: RawSimulation,
    #[serde(default)]
    fit: RawFit,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeometry {
    outer_radius_m: Option<f64>,
    initial_inner_radius_m: Option<f64>,
    total_length_m: Option<f64>,
    segment_count: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    #[serde(default)]
    angle_unit: AngleUnit,
    k_0: Option<f64>,
    m_k: Option<f64>,
    b_0_pos: Option<f64>,
    b_0_neg: Option<f64>,
    m_b_pos: Option<f64>,
    m_b_neg: Option<f64>,
    r_hyd: Option<f64>,
    total_mass_kg: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulation {
    integrator: Option<IntegratorKind>,
    rtol: Option<f64>,
    atol: Option<f64>,
    output_rate_hz: Option<f64>,
    max_steps: Option<usize>,
    max_step: Option<f64>,
    gravity: Option<bool>,
    gravity_m_s2: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFit {
    objective: Option<Objective>,
    max_iterations: Option<usize>,
    relative_step: Option<f64>,
    rtol: Option<f64>,
    atol: Option<f64>,
}

/// Everything a command needs to build and run a model.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub geometry: ActuatorGeometry,
    /// Per-joint coefficients (per radian) with gravity already applied.
    pub params: MaterialParams,
    pub simulation: SimulationConfig,
    pub objective: Objective,
    pub fit_settings: FitSettings,
    /// Integration settings used inside the fit.
    pub fit_simulation: SimulationConfig,
}

impl RunConfig {
    pub fn from_preset(name: &str) -> Result<Self> {
        Self::from_toml_str(&format!("preset = {name:?}"))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            Error::config(
                "config",
                e.to_string().lines().collect::<Vec<_>>().join(" "),
            )
        })?;
        Self::from_raw(raw)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config { key, reason } => Error::Config {
                key,
                reason: format!("{reason} (in {})", path.display()),
            },
            other => other,
        })
    }

    fn from_raw(raw: RawConfig) -> Result<Self> {
        let base = match raw.preset.as_deref() {
            Some(name) => Some(presets::by_name(name).ok_or_else(|| {
                Error::config("preset", format!("unknown preset {name:?}; expected one of {:?}", presets::NAMES))
            })?),
            None => None,
        };
        let need = |key: &str, value: Option<f64>, fallback: Option<f64>| -> Result<f64> {
            value
                .or(fallback)
                .ok_or_else(|| Error::config(key, "missing (no preset to inherit from)"))
        };

        let g = &raw.geometry;
        let segment_count = g
            .segment_count
            .or(base.map(|b| b.geometry.segment_count()))
            .ok_or_else(|| Error::config("geometry.segment_count", "missing (no preset to inherit from)"))?;
        let geometry = ActuatorGeometry::new(
            need("geometry.outer_radius_m", g.outer_radius_m, base.map(|b| b.geometry.outer_radius()))?,
            need(
                "geometry.initial_inner_radius_m",
                g.initial_inner_radius_m,
                base.map(|b| b.geometry.initial_inner_radius()),
            )?,
            need("geometry.total_length_m", g.total_length_m, base.map(|b| b.geometry.total_length()))?,
            segment_count,
        )
        .map_err(|e| prefix_key(e, "geometry"))?;

        // preset coefficients follow the chosen discretization
        let inherited = base.map(|b| {
            b.params
                .rescaled_for_segments(b.geometry.segment_count(), segment_count)
        });
        let p = &raw.params;
        let per_angle = |v: Option<f64>| match p.angle_unit {
            AngleUnit::Rad => v,
            AngleUnit::Deg => v.map(per_degree_to_per_radian),
        };
        let default_mass = presets::PDMS_DENSITY * geometry.material_volume();
        let s = &raw.simulation;
        let gravity = match (s.gravity, s.gravity_m_s2) {
            (Some(false), _) => 0.0,
            (_, Some(g)) => g,
            _ => STANDARD_GRAVITY,
        };
        let params = MaterialParams {
            k_0: need("params.k_0", per_angle(p.k_0), inherited.map(|b| b.k_0))?,
            m_k: need("params.m_k", per_angle(p.m_k), inherited.map(|b| b.m_k))?,
            b_0_pos: need("params.b_0_pos", per_angle(p.b_0_pos), inherited.map(|b| b.b_0_pos))?,
            b_0_neg: need("params.b_0_neg", per_angle(p.b_0_neg), inherited.map(|b| b.b_0_neg))?,
            m_b_pos: need("params.m_b_pos", per_angle(p.m_b_pos), inherited.map(|b| b.m_b_pos))?,
            m_b_neg: need("params.m_b_neg", per_angle(p.m_b_neg), inherited.map(|b| b.m_b_neg))?,
            r_hyd: need("params.r_hyd", p.r_hyd, inherited.map(|b| b.r_hyd))?,
            total_mass: p.total_mass_kg.unwrap_or(default_mass),
            gravity,
        };
        params.validate().map_err(|e| prefix_key(e, "params"))?;

        let defaults = SimulationConfig::default();
        let simulation = SimulationConfig {
            integrator: s.integrator.unwrap_or(defaults.integrator),
            rtol: s.rtol.unwrap_or(defaults.rtol),
            atol: s.atol.unwrap_or(defaults.atol),
            output_rate_hz: s.output_rate_hz.unwrap_or(defaults.output_rate_hz),
            max_steps: s.max_steps.unwrap_or(defaults.max_steps),
            max_step: s.max_step.unwrap_or(defaults.max_step),
        };
        simulation.validate().map_err(|e| prefix_key(e, "simulation"))?;

        let f = &raw.fit;
        let fit_defaults = FitSettings::default();
        let fit_settings = FitSettings {
            max_iterations: f.max_iterations.unwrap_or(fit_defaults.max_iterations),
            relative_step: f.relative_step.unwrap_or(fit_defaults.relative_step),
            ..fit_defaults
        };
        if fit_settings.max_iterations == 0 {
            return Err(Error::config("fit.max_iterations", "must be positive"));
        }
        if !(fit_settings.relative_step > 0.0 && fit_settings.relative_step < 1.0) {
            return Err(Error::config("fit.relative_step", "must lie in (0, 1)"));
        }
        let base_fit = crate::identification::fitting_simulation_config();
        let fit_simulation = SimulationConfig {
            rtol: f.rtol.unwrap_or(base_fit.rtol),
            atol: f.atol.unwrap_or(base_fit.atol),
            integrator: simulation.integrator,
            ..base_fit
        };
        fit_simulation.validate().map_err(|e| prefix_key(e, "fit"))?;

        Ok(Self {
            geometry,
            params,
            simulation,
            objective: f.objective.unwrap_or_default(),
            fit_settings,
            fit_simulation,
        })
    }

    pub fn model(&self) -> Result<ChainModel> {
        ChainModel::new(self.geometry, self.params)
    }
}

fn prefix_key(e: Error, section: &str) -> Error {
    match e {
        Error::Config { key, reason } => Error::Config {
            key: format!("{section}.{key}"),
            reason,
        },
        other => other,
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

fn open_csv(path: &Path, header: &[&str]) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let found = reader
        .headers()
        .map_err(|e| parse_error(path, 1, e))?
        .clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            reason: format!("expected header {:?}, found {:?}", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        });
    }
    Ok(reader)
}

fn parse_error(path: &Path, line: u64, e: impl std::fmt::Display) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        reason: e.to_string(),
    }
}

/// Rows of numeric fields with their 1-based line numbers.
fn numeric_rows(path: &Path, header: &[&str]) -> Result<Vec<(u64, Vec<f64>)>> {
    let mut reader = open_csv(path, header)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(path, line, e)
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let values = record
            .iter()
            .map(|field| {
                field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_error(path, line, format!("not a finite number: {field:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push((line, values));
    }
    if rows.is_empty() {
        return Err(Error::Data {
            path: path.to_path_buf(),
            reason: "no data rows".into(),
        });
    }
    Ok(rows)
}

fn check_increasing(path: &Path, rows: &[(u64, Vec<f64>)]) -> Result<()> {
    for w in rows.windows(2) {
        if !(w[1].1[0] > w[0].1[0]) {
            return Err(Error::Data {
                path: path.to_path_buf(),
                reason: format!(
                    "line {}: time {} does not increase (previous {})",
                    w[1].0, w[1].1[0], w[0].1[0]
                ),
            });
        }
    }
    Ok(())
}

/// Reads a `t_s,p_pa` pressure CSV.
pub fn load_pressure_trace(path: &Path) -> Result<PressureTrace> {
    let rows = numeric_rows(path, &PRESSURE_HEADER)?;
    check_increasing(path, &rows)?;
    if let Some((line, _)) = rows.iter().find(|(_, v)| v[1] < 0.0) {
        return Err(Error::Data {
            path: path.to_path_buf(),
            reason: format!("line {line}: negative pressure"),
        });
    }
    PressureTrace::new(rows.into_iter().map(|(_, v)| (v[0], v[1])).collect()).map_err(|e| Error::Data {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn write_pressure_trace(trace: &PressureTrace, path: &Path) -> Result<()> {
    write_rows(path, &PRESSURE_HEADER, trace.samples().map(|(t, p)| vec![t, p]))
}

/// Reads a `t_s,tip_x_m,tip_y_m` tip CSV.
pub fn load_measured(path: &Path) -> Result<MeasuredTrajectory> {
    let rows = numeric_rows(path, &MEASURED_HEADER)?;
    check_increasing(path, &rows)?;
    MeasuredTrajectory::new(
        path.display().to_string(),
        rows.into_iter().map(|(_, v)| (v[0], v[1], v[2])).collect(),
    )
    .map_err(|e| Error::Data {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn write_measured(measured: &MeasuredTrajectory, path: &Path) -> Result<()> {
    write_rows(path, &MEASURED_HEADER, measured.samples().map(|(t, x, y)| vec![t, x, y]))
}

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    let mut out = BufWriter::new(file);
    let write = || -> std::io::Result<()> {
        writeln!(out, "{}", header.join(","))?;
        for row in rows {
            let fields: Vec<String> = row.iter().map(|v| format_value(*v)).collect();
            writeln!(out, "{}", fields.join(","))?;
        }
        out.flush()
    };
    write().map_err(|e| io_error(path, e))
}

/// Twelve significant digits.
fn format_value(v: f64) -> String {
    format!("{v:.11e}")
}

pub fn trajectory_header(segment_count: usize) -> Vec<String> {
    let mut header = vec!["t_s".to_string()];
    for prefix in ["theta", "omega", "ri"] {
        header.extend((1..=segment_count).map(|j| format!("{prefix}_{j}")));
    }
    header.extend(
        ["tip_x_m", "tip_y_m", "bend_total_rad", "energy_kin_j", "energy_pot_j"]
            .iter()
            .map(|s| s.to_string()),
    );
    header
}

/// Writes a trajectory; angles and angular rates in `unit` (the header keeps
/// its names).
pub fn export_trajectory(traj: &Trajectory, path: &Path, unit: AngleUnit) -> Result<()> {
    if traj.is_empty() {
        return Err(Error::Data {
            path: path.to_path_buf(),
            reason: "trajectory has no samples".into(),
        });
    }
    let angle = |v: f64| match unit {
        AngleUnit::Rad => v,
        AngleUnit::Deg => v.to_degrees(),
    };
    let header = trajectory_header(traj.segment_count);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_rows(
        path,
        &header,
        traj.samples.iter().map(|s| {
            let mut row = Vec::with_capacity(3 * traj.segment_count + 6);
            row.push(s.time());
            row.extend(s.state.q.iter().map(|v| angle(*v)));
            row.extend(s.state.q_dot.iter().map(|v| angle(*v)));
            row.extend(&s.state.r_inner);
            row.extend([s.tip.x, s.tip.y, angle(s.bend_total), s.kinetic_energy, s.potential_energy]);
            row
        }),
    )
}

/// One row of an exported trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub time: f64,
    pub theta: Vec<f64>,
    pub omega: Vec<f64>,
    pub r_inner: Vec<f64>,
    pub tip_x: f64,
    pub tip_y: f64,
    pub bend_total: f64,
    pub kinetic_energy: f64,
    pub potential_energy: f64,
}

/// Reads a file written by [`export_trajectory`].
pub fn load_trajectory(path: &Path) -> Result<Vec<TrajectoryRow>> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let header = reader.headers().map_err(|e| parse_error(path, 1, e))?.clone();
    let columns = header.len();
    if columns < 9 || (columns - 6) % 3 != 0 {
        return Err(parse_error(path, 1, format!("unexpected column count {columns}")));
    }
    let n = (columns - 6) / 3;
    let expected = trajectory_header(n);
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(parse_error(path, 1, "not a trajectory header"));
    }
    let header: Vec<&str> = expected.iter().map(String::as_str).collect();
    drop(reader);
    Ok(numeric_rows(path, &header)?
        .into_iter()
        .map(|(_, v)| TrajectoryRow {
            time: v[0],
            theta: v[1..=n].to_vec(),
            omega: v[n + 1..=2 * n].to_vec(),
            r_inner: v[2 * n + 1..=3 * n].to_vec(),
            tip_x: v[3 * n + 1],
            tip_y: v[3 * n + 2],
            bend_total: v[3 * n + 3],
            kinetic_energy: v[3 * n + 4],
            potential_energy: v[3 * n + 5],
        })
        .collect())
}

/// Writes fitted coefficients as `parameter,value` rows followed by a fit summary.
pub fn write_fit_result(result: &FitResult, path: &Path, unit: AngleUnit) -> Result<()> {
    let mut rows = params_rows(&result.params, unit);
    rows.push(("residual_rms_m".into(), format_value(result.residual_rms)));
    rows.push(("iterations".into(), result.iterations.to_string()));
    rows.push(("evaluations".into(), result.evaluations.to_string()));
    rows.push(("converged".into(), result.converged.to_string()));
    write_pairs(path, &rows)
}

pub fn write_params(params: &MaterialParams, path: &Path, unit: AngleUnit) -> Result<()> {
    write_pairs(path, &params_rows(params, unit))
}

fn params_rows(params: &MaterialParams, unit: AngleUnit) -> Vec<(String, String)> {
    let v = crate::identification::params_to_vector(params);
    let mut rows: Vec<(String, String)> = PARAM_NAMES
        .iter()
        .zip(v)
        .enumerate()
        .map(|(i, (name, value))| {
            // everything but r_hyd is quoted per unit angle
            let value = if i < 6 && unit == AngleUnit::Deg {
                per_radian_to_per_degree(value)
            } else {
                value
            };
            (name.to_string(), format_value(value))
        })
        .collect();
    rows.push((
        "angle_unit".into(),
        match unit {
            AngleUnit::Rad => "rad".into(),
            AngleUnit::Deg => "deg".into(),
        },
    ));
    rows
}

fn write_pairs(path: &Path, rows: &[(String, String)]) -> Result<()> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    let mut out = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "{}", PARAMS_HEADER.join(","))?;
        for (k, v) in rows {
            writeln!(out, "{k},{v}")?;
        }
        out.flush()
    };
    write().map_err(|e| io_error(path, e))
}

/// Reads the seven coefficients from a `parameter,value` file; mass and
/// gravity come from `template`. Summary rows are ignored.
pub fn load_params(path: &Path, template: &MaterialParams) -> Result<MaterialParams> {
    let mut reader = open_csv(path, &PARAMS_HEADER)?;
    let mut values: [Option<f64>; 7] = [None; 7];
    let mut unit = AngleUnit::Rad;
    for record in reader.records() {
        let record = record.map_err(|e| parse_error(path, e.position().map_or(0, |p| p.line()), e))?;
        let line = record.position().map_or(0, |p| p.line());
        let (key, value) = (&record[0], &record[1]);
        if key == "angle_unit" {
            unit = match value {
                "rad" => AngleUnit::Rad,
                "deg" => AngleUnit::Deg,
                other => return Err(parse_error(path, line, format!("unknown angle unit {other:?}"))),
            };
            continue;
        }
        if let Some(i) = PARAM_NAMES.iter().position(|n| *n == key) {
            let v = value
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_error(path, line, format!("{key}: not a finite number: {value:?}")))?;
            values[i] = Some(v);
        }
    }
    let mut v = [0.0; 7];
    for i in 0..7 {
        v[i] = values[i].ok_or_else(|| Error::Data {
            path: path.to_path_buf(),
            reason: format!("missing parameter {}", PARAM_NAMES[i]),
        })?;
        if i < 6 && unit == AngleUnit::Deg {
            v[i] = per_degree_to_per_radian(v[i]);
        }
    }
    let params = params_from_vector(&v, template);
    params.validate().map_err(|e| prefix_key(e, "params"))?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use tempfile::TempDir;

    fn write_file(dir: &TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        std::fs::File::create(&path).unwrap().write_all(text.as_bytes()).unwrap();
        path
    }

    #[test]
    fn preset_config_matches_preset() {
        let c = RunConfig::from_preset("dof8").unwrap();
        assert_eq!(c.params, presets::dof8().params);
        assert_eq!(c.geometry, presets::dof8().geometry);
        let c = RunConfig::from_preset("dof2").unwrap();
        assert_eq!(c.params, presets::dof2().params);
    }

    #[test]
    fn overrides_and_gravity_switch() {
        let c = RunConfig::from_toml_str(
            "preset = \"dof8\"\n[params]\nk_0 = 1.1\n[simulation]\ngravity = false\nrtol = 1e-7\n",
        )
        .unwrap();
        assert_eq!(c.params.k_0, 1.1);
        assert_eq!(c.params.gravity, 0.0);
        assert_eq!(c.simulation.rtol, 1e-7);
    }

    #[test]
    fn degree_coefficients_are_converted() {
        let c = RunConfig::from_toml_str("preset = \"dof8\"\n[params]\nangle_unit = \"deg\"\nk_0 = 0.01\n").unwrap();
        assert_relative_eq!(c.params.k_0, 0.01 * 180.0 / std::f64::consts::PI);
        // untouched values are inherited in radians
        assert_eq!(c.params.m_k, presets::dof8().params.m_k);
    }

    #[test]
    fn changing_segment_count_rescales_preset() {
        let c = RunConfig::from_toml_str("preset = \"dof8\"\n[geometry]\nsegment_count = 16\n").unwrap();
        assert_relative_eq!(c.params.k_0, 2.0 * presets::dof8().params.k_0);
        assert_eq!(c.geometry.segment_count(), 16);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = RunConfig::from_toml_str("preset = \"dof8\"\n[params]\nk0 = 1.0\n").unwrap_err();
        assert!(matches!(e, Error::Config { .. }));
        assert!(e.to_string().contains("k0"), "{e}");
    }

    #[test]
    fn invalid_values_name_their_key() {
        let cases = [
            ("preset = \"dof8\"\n[params]\nk_0 = -1.0\n", "params.k_0"),
            ("preset = \"dof8\"\n[params]\nm_k = 2.0\n", "params.m_k"),
            ("preset = \"dof8\"\n[geometry]\ninitial_inner_radius_m = 0.009\n", "geometry.initial_inner_radius_m"),
            ("preset = \"dof8\"\n[simulation]\nrtol = 0.0\n", "simulation.rtol"),
            ("preset = \"dof9\"\n", "preset"),
            ("[geometry]\nsegment_count = 4\n", "geometry.outer_radius_m"),
        ];
        for (text, key) in cases {
            match RunConfig::from_toml_str(text) {
                Err(Error::Config { key: k, .. }) => assert_eq!(k, key, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn pressure_csv() {
        let dir = TempDir::new().unwrap();
        let ok = write_file(&dir, "p.csv", "t_s,p_pa\n0,0\n1,100000\n");
        let trace = load_pressure_trace(&ok).unwrap();
        assert_eq!(trace.len(), 2);
        assert_eq!(trace.pressure_at(0.5), 50000.0);

        let unsorted = write_file(&dir, "u.csv", "t_s,p_pa\n0,0\n2,1\n1,1\n");
        let e = load_pressure_trace(&unsorted).unwrap_err();
        assert!(matches!(e, Error::Data { .. }));
        assert!(e.to_string().contains("line 4"), "{e}");

        let garbage = write_file(&dir, "g.csv", "t_s,p_pa\n0,0\n1,abc\n");
        assert!(matches!(load_pressure_trace(&garbage), Err(Error::Parse { line: 3, .. })));

        let header = write_file(&dir, "h.csv", "time,p\n0,0\n");
        assert!(matches!(load_pressure_trace(&header), Err(Error::Parse { line: 1, .. })));

        assert!(matches!(load_pressure_trace(&dir.path().join("missing.csv")), Err(Error::Io { .. })));
    }

    #[test]
    fn dense_step_profile_is_exact_within_plateaus() {
        let dir = TempDir::new().unwrap();
        let mut text = String::from("t_s,p_pa\n");
        for k in 0..=300 {
            let t = k as f64 * 0.01;
            let p = if t < 1.0 - 1e-9 { 0.0 } else if t < 2.0 - 1e-9 { 270000.0 } else { 90000.0 };
            text.push_str(&format!("{t},{p}\n"));
        }
        let trace = load_pressure_trace(&write_file(&dir, "step.csv", &text)).unwrap();
        for k in 0..100 {
            let t = 1.0 + k as f64 * 0.0099;
            assert_eq!(trace.pressure_at(t), 270000.0, "t = {t}");
            assert_eq!(trace.pressure_at(t + 1.0), 90000.0);
        }
    }

    #[test]
    fn params_round_trip_in_degrees() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("params.csv");
        let p = presets::dof8().params;
        write_params(&p, &path, AngleUnit::Deg).unwrap();
        let back = load_params(&path, &p).unwrap();
        for (a, b) in crate::identification::params_to_vector(&back)
            .iter()
            .zip(crate::identification::params_to_vector(&p))
        {
            assert_relative_eq!(*a, b, max_relative = 1e-11);
        }
    }

    #[test]
    fn params_file_missing_entry() {
        let dir = TempDir::new().unwrap();
        let path = write_file(&dir, "p.csv", "parameter,value\nk_0,1.0\n");
        assert!(matches!(load_params(&path, &presets::dof8().params), Err(Error::Data { .. })));
    }
}
