//! Command line front end: configuration, experiment drivers and export.
//!
//! A config file holds flat `key = value` lines whose keys are the long flag
//! names without the leading dashes; flags given on the command line
//! override the file.

use std::ffi::OsString;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::analysis::{self, ErrorRecord};
use crate::error::{Error, Result};
use crate::geometry::SphereSolution;
use crate::mesh::{generate_box, generate_dumbbell, generate_icosphere, NodalField, SurfaceMesh};
use crate::refelem::node_multi_indices;
use crate::schemes::{run_flow, run_flow_observed, FlowConfig, FlowReport, Scheme, TauSchedule, DEFAULT_PINCH_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Evolve,
    ConvergeSpace,
    ConvergeTime,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Evolve => "evolve",
            Command::ConvergeSpace => "converge-space",
            Command::ConvergeTime => "converge-time",
        }
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "evolve" => Ok(Command::Evolve),
            "converge-space" => Ok(Command::ConvergeSpace),
            "converge-time" => Ok(Command::ConvergeTime),
            other => Err(format!(
                "unknown command '{other}' (expected evolve, converge-space or converge-time)"
            )),
        }
    }
}

/// Initial surface: `sphere[:R]`, `dumbbell[:NTxNP]` or `box[:n]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SurfaceSpec {
    Sphere { radius: f64 },
    Dumbbell { n_theta: usize, n_phi: usize },
    Box { n: usize },
}

impl SurfaceSpec {
    pub fn is_sphere(&self) -> bool {
        matches!(self, SurfaceSpec::Sphere { .. })
    }

    /// Builds the mesh; `level` is the icosphere refinement level and is
    /// ignored for the other surfaces.
    pub fn mesh(&self, level: usize, degree: usize) -> Result<SurfaceMesh> {
        match *self {
            SurfaceSpec::Sphere { radius } => generate_icosphere(radius, level, degree),
            SurfaceSpec::Dumbbell { n_theta, n_phi } => generate_dumbbell(n_theta, n_phi, degree),
            SurfaceSpec::Box { n } => generate_box([1.0, 3.0, 1.0], n, degree),
        }
    }
}

impl fmt::Display for SurfaceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SurfaceSpec::Sphere { radius } => write!(f, "sphere:{radius}"),
            SurfaceSpec::Dumbbell { n_theta, n_phi } => write!(f, "dumbbell:{n_theta}x{n_phi}"),
            SurfaceSpec::Box { n } => write!(f, "box:{n}"),
        }
    }
}

impl FromStr for SurfaceSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let bad = || format!("invalid surface '{s}' (expected sphere:R, dumbbell:NxM or box:n)");
        match kind {
            "sphere" => {
                let radius = match arg {
                    Some(a) => a.parse::<f64>().map_err(|_| bad())?,
                    None => 2.0,
                };
                if !(radius > 0.0) || !radius.is_finite() {
                    return Err(format!("sphere radius must be positive, got {radius}"));
                }
                Ok(SurfaceSpec::Sphere { radius })
            }
            "dumbbell" => {
                let (n_theta, n_phi) = match arg {
                    Some(a) => {
                        let (p, q) = a.split_once('x').ok_or_else(bad)?;
                        (p.parse().map_err(|_| bad())?, q.parse().map_err(|_| bad())?)
                    }
                    None => (16, 16),
                };
                if n_theta < 3 || n_phi < 2 {
                    return Err(format!("dumbbell grid needs at least 3x2 cells, got {n_theta}x{n_phi}"));
                }
                Ok(SurfaceSpec::Dumbbell { n_theta, n_phi })
            }
            "box" => {
                let n = match arg {
                    Some(a) => a.parse().map_err(|_| bad())?,
                    None => 4,
                };
                if n == 0 {
                    return Err("box resolution must be at least 1".into());
                }
                Ok(SurfaceSpec::Box { n })
            }
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Vtk,
    Csv,
    Both,
}

impl ExportFormat {
    pub fn csv(self) -> bool {
        matches!(self, ExportFormat::Csv | ExportFormat::Both)
    }

    pub fn vtk(self) -> bool {
        matches!(self, ExportFormat::Vtk | ExportFormat::Both)
    }
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "vtk" => Ok(ExportFormat::Vtk),
            "csv" => Ok(ExportFormat::Csv),
            "both" => Ok(ExportFormat::Both),
            other => Err(format!("unknown export format '{other}' (expected vtk, csv or both)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub surface: SurfaceSpec,
    pub scheme: Scheme,
    pub degree: usize,
    /// Icosphere levels; a single level for `evolve`.
    pub levels: Vec<usize>,
    /// Step sizes of a temporal study, strictly decreasing.
    pub taus: Vec<f64>,
    /// Icosphere level of the fixed mesh of a temporal study.
    pub ref_level: usize,
    pub schedule: TauSchedule,
    pub final_time: f64,
    pub out: PathBuf,
    pub export: ExportFormat,
    pub pinch_threshold: f64,
    pub cadence: usize,
}

/// Keys accepted in config files.
pub const CONFIG_KEYS: &[&str] = &[
    "command",
    "surface",
    "scheme",
    "degree",
    "levels",
    "taus",
    "ref-level",
    "tau",
    "tau-schedule",
    "final-time",
    "out",
    "export",
    "pinch-threshold",
    "cadence",
];

pub const DEFAULT_DEGREE: usize = 2;
pub const DEFAULT_TAU: f64 = 1e-4;
pub const DEFAULT_FINAL_TIME: f64 = 0.125;
pub const DEFAULT_EVOLVE_LEVEL: usize = 3;
pub const DEFAULT_LEVELS: [usize; 3] = [1, 2, 3];
pub const DEFAULT_TAUS: [f64; 3] = [4e-3, 2e-3, 1e-3];
pub const DEFAULT_REF_LEVEL: usize = 3;
pub const DEFAULT_CADENCE: usize = 100;
/// Finest icosphere level accepted; level 6 has about 40k vertices.
pub const MAX_LEVEL: usize = 6;

/// Splits `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_pairs(text: &str) -> std::result::Result<Vec<(String, String)>, Vec<String>> {
    let mut pairs = Vec::new();
    let mut problems = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line.split_once('=') {
            Some((k, v)) => pairs.push((k.trim().to_string(), v.trim().to_string())),
            None => problems.push(format!("line {}: expected key = value, got '{line}'", no + 1)),
        }
    }
    if problems.is_empty() { Ok(pairs) } else { Err(problems) }
}

/// Parses and validates a config file.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let pairs = parse_pairs(text).map_err(Error::Config)?;
    ExperimentConfig::from_pairs(&pairs)
}

fn parse_list<T: FromStr>(key: &str, v: &str, problems: &mut Vec<String>) -> Option<Vec<T>> {
    let items: std::result::Result<Vec<T>, _> = v.split(',').map(|s| s.trim().parse::<T>()).collect();
    match items {
        Ok(list) if !list.is_empty() => Some(list),
        _ => {
            problems.push(format!("{key}: expected a comma-separated list, got '{v}'"));
            None
        }
    }
}

fn parse_value<T: FromStr>(key: &str, v: &str, what: &str, problems: &mut Vec<String>) -> Option<T> {
    match v.parse::<T>() {
        Ok(x) => Some(x),
        Err(_) => {
            problems.push(format!("{key}: expected {what}, got '{v}'"));
            None
        }
    }
}

fn parse_named<T: FromStr<Err = String>>(key: &str, v: &str, problems: &mut Vec<String>) -> Option<T> {
    v.parse::<T>().map_err(|e| problems.push(format!("{key}: {e}"))).ok()
}

/// `t0:tau0,t1:tau1,...`
fn parse_schedule(v: &str) -> std::result::Result<Vec<(f64, f64)>, String> {
    v.split(',')
        .map(|phase| {
            let (t, tau) = phase
                .split_once(':')
                .ok_or_else(|| format!("tau-schedule: expected t:tau pairs, got '{phase}'"))?;
            let t = t.trim().parse::<f64>().map_err(|_| format!("tau-schedule: bad switch time '{t}'"))?;
            let tau = tau.trim().parse::<f64>().map_err(|_| format!("tau-schedule: bad step size '{tau}'"))?;
            Ok((t, tau))
        })
        .collect()
}

impl ExperimentConfig {
    /// Builds a config from key-value pairs, later pairs overriding earlier
    /// ones. All violations are reported together.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut problems = Vec::new();
        let mut get = std::collections::BTreeMap::new();
        for (k, v) in pairs {
            if CONFIG_KEYS.contains(&k.as_str()) {
                get.insert(k.as_str(), v.as_str());
            } else {
                problems.push(format!("unknown key '{k}'"));
            }
        }
        let p = &mut problems;

        let command = get.get("command").map_or(Some(Command::Evolve), |v| parse_named("command", v, p));
        let surface = get
            .get("surface")
            .map_or(Some(SurfaceSpec::Sphere { radius: 2.0 }), |v| parse_named("surface", v, p));
        let scheme = get.get("scheme").map_or(Some(Scheme::Mdr), |v| parse_named("scheme", v, p));
        let degree = get
            .get("degree")
            .map_or(Some(DEFAULT_DEGREE), |v| parse_value("degree", v, "an integer", p));
        let levels: Option<Vec<usize>> = get.get("levels").map(|v| parse_list("levels", v, p)).unwrap_or(None);
        let levels_given = get.contains_key("levels");
        let taus = get
            .get("taus")
            .map_or(Some(DEFAULT_TAUS.to_vec()), |v| parse_list("taus", v, p));
        let ref_level = get
            .get("ref-level")
            .map_or(Some(DEFAULT_REF_LEVEL), |v| parse_value("ref-level", v, "an integer", p));
        let final_time = get
            .get("final-time")
            .map_or(Some(DEFAULT_FINAL_TIME), |v| parse_value("final-time", v, "a number", p));
        let export = get.get("export").map_or(Some(ExportFormat::Both), |v| parse_named("export", v, p));
        let pinch_threshold = get
            .get("pinch-threshold")
            .map_or(Some(DEFAULT_PINCH_THRESHOLD), |v| parse_value("pinch-threshold", v, "a number", p));
        let cadence = get
            .get("cadence")
            .map_or(Some(DEFAULT_CADENCE), |v| parse_value("cadence", v, "an integer", p));
        let out = PathBuf::from(get.get("out").copied().unwrap_or("out"));

        let phases = match (get.get("tau"), get.get("tau-schedule")) {
            (Some(_), Some(_)) => {
                p.push("give either tau or tau-schedule, not both".into());
                None
            }
            (_, Some(s)) => parse_schedule(s).map_err(|e| p.push(e)).ok(),
            (Some(t), None) => parse_value::<f64>("tau", t, "a number", p).map(|t| vec![(0.0, t)]),
            (None, None) => Some(vec![(0.0, DEFAULT_TAU)]),
        };
        let schedule = phases.and_then(|ph| match TauSchedule::new(ph) {
            Ok(s) => Some(s),
            Err(Error::Config(v)) => {
                p.extend(v);
                None
            }
            Err(e) => {
                p.push(e.to_string());
                None
            }
        });

        if let Some(k) = degree {
            if !(1..=3).contains(&k) {
                p.push(format!("degree must be 1, 2 or 3, got {k}"));
            }
            if scheme == Some(Scheme::Bgn) && k != 1 {
                p.push(format!("scheme bgn requires degree 1, got degree {k}"));
            }
            if matches!(surface, Some(SurfaceSpec::Box { .. })) && k != 1 {
                p.push(format!("the box surface requires degree 1, got degree {k}"));
            }
        }
        if let Some(t) = final_time {
            if !(t >= 0.0) || !t.is_finite() {
                p.push(format!("final-time must be nonnegative, got {t}"));
            }
            if let Some(SurfaceSpec::Sphere { radius }) = surface {
                let extinction = radius * radius / 4.0;
                if t >= extinction {
                    p.push(format!("final-time {t} is not before the sphere's extinction time {extinction}"));
                }
            }
        }
        if let Some(th) = pinch_threshold {
            if !(th >= 0.0) || !th.is_finite() {
                p.push(format!("pinch-threshold must be nonnegative, got {th}"));
            }
        }
        if cadence == Some(0) {
            p.push("cadence must be at least 1".into());
        }
        let levels = match command {
            Some(Command::Evolve) => levels.or_else(|| (!levels_given).then(|| vec![DEFAULT_EVOLVE_LEVEL])),
            _ => levels.or_else(|| (!levels_given).then(|| DEFAULT_LEVELS.to_vec())),
        };
        if let Some(ls) = &levels {
            if command == Some(Command::Evolve) && ls.len() != 1 {
                p.push(format!("evolve takes a single level, got {}", ls.len()));
            }
            if ls.windows(2).any(|w| w[1] <= w[0]) {
                p.push("levels must be strictly increasing".into());
            }
            if let Some(l) = ls.iter().find(|&&l| l > MAX_LEVEL) {
                p.push(format!("level {l} exceeds the maximum {MAX_LEVEL}"));
            }
        }
        if let Some(l) = ref_level {
            if l > MAX_LEVEL {
                p.push(format!("ref-level {l} exceeds the maximum {MAX_LEVEL}"));
            }
        }
        if let Some(ts) = &taus {
            if ts.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
                p.push("taus must be positive".into());
            }
            if ts.windows(2).any(|w| !(w[1] < w[0])) {
                p.push("taus must be strictly decreasing".into());
            }
        }
        if let Some(c) = command {
            if c != Command::Evolve && surface.is_some_and(|s| !s.is_sphere()) {
                p.push(format!("{} needs the sphere surface, whose exact solution is known", c.name()));
            }
        }

        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        Ok(Self {
            command: command.unwrap(),
            surface: surface.unwrap(),
            scheme: scheme.unwrap(),
            degree: degree.unwrap(),
            levels: levels.unwrap(),
            taus: taus.unwrap(),
            ref_level: ref_level.unwrap(),
            schedule: schedule.unwrap(),
            final_time: final_time.unwrap(),
            out,
            export: export.unwrap(),
            pinch_threshold: pinch_threshold.unwrap(),
            cadence: cadence.unwrap(),
        })
    }

    fn sphere(&self) -> Option<SphereSolution> {
        match self.surface {
            SurfaceSpec::Sphere { radius } => Some(SphereSolution { initial_radius: radius }),
            _ => None,
        }
    }

    fn flow_config(&self, schedule: TauSchedule) -> FlowConfig {
        FlowConfig {
            scheme: self.scheme,
            schedule,
            final_time: self.final_time,
            pinch_threshold: self.pinch_threshold,
            cadence: self.cadence,
            sphere: self.sphere(),
        }
    }
}

/// One row of a convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    /// Icosphere level of the mesh.
    pub level: usize,
    pub h: f64,
    pub tau: f64,
    pub k: usize,
    pub scheme: Scheme,
    /// `max_m ||e(t_m)||_L2`.
    pub linf_l2: f64,
    /// `(sum_m tau ||grad e(t_m)||^2)^(1/2)`.
    pub l2_h1: f64,
    pub eoc_linf_l2: Option<f64>,
    pub eoc_l2_h1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Errors at every time level of every run, in row order.
    pub records: Vec<ErrorRecord>,
}

fn fill_eocs(rows: &mut [ConvergenceRow], x: impl Fn(&ConvergenceRow) -> f64) -> Result<()> {
    if rows.len() < 2 {
        return Ok(());
    }
    let a = analysis::eoc(&rows.iter().map(|r| (x(r), r.linf_l2)).collect::<Vec<_>>())?;
    let b = analysis::eoc(&rows.iter().map(|r| (x(r), r.l2_h1)).collect::<Vec<_>>())?;
    for (i, r) in rows.iter_mut().enumerate().skip(1) {
        r.eoc_linf_l2 = Some(a[i - 1]);
        r.eoc_l2_h1 = Some(b[i - 1]);
    }
    Ok(())
}

fn convergence_run(cfg: &ExperimentConfig, level: usize, schedule: TauSchedule) -> Result<(ConvergenceRow, Vec<ErrorRecord>)> {
    let mesh = cfg.surface.mesh(level, cfg.degree)?;
    let tau = schedule.max_tau();
    let out = run_flow(&mesh, &cfg.flow_config(schedule))?;
    if let Some(t) = out.pinch_time {
        return Err(Error::InvalidArgument(format!(
            "sphere run at level {level} hit the pinch criterion at t = {t}"
        )));
    }
    let (linf_l2, l2_h1) = out.aggregate_errors().unwrap_or((0.0, 0.0));
    let row = ConvergenceRow {
        level,
        h: mesh.mesh_size(),
        tau,
        k: cfg.degree,
        scheme: cfg.scheme,
        linf_l2,
        l2_h1,
        eoc_linf_l2: None,
        eoc_l2_h1: None,
    };
    Ok((row, out.errors))
}

fn collect(runs: Vec<(ConvergenceRow, Vec<ErrorRecord>)>) -> (Vec<ConvergenceRow>, Vec<ErrorRecord>) {
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for (r, e) in runs {
        rows.push(r);
        records.extend(e);
    }
    (rows, records)
}

/// Spatial study on the sphere: one run per level with the configured step
/// schedule. EOCs are taken against the measured mesh size.
pub fn run_converge_space(cfg: &ExperimentConfig) -> Result<ConvergenceTable> {
    if !cfg.surface.is_sphere() {
        return Err(Error::Config(vec!["converge-space needs the sphere surface".into()]));
    }
    let runs = cfg
        .levels
        .par_iter()
        .map(|&level| convergence_run(cfg, level, cfg.schedule.clone()))
        .collect::<Result<Vec<_>>>()?;
    let (mut rows, records) = collect(runs);
    fill_eocs(&mut rows, |r| r.h)?;
    Ok(ConvergenceTable { rows, records })
}

/// Temporal study on the sphere: one run per step size on the fixed mesh
/// at `ref_level`.
pub fn run_converge_time(cfg: &ExperimentConfig) -> Result<ConvergenceTable> {
    if !cfg.surface.is_sphere() {
        return Err(Error::Config(vec!["converge-time needs the sphere surface".into()]));
    }
    if cfg.taus.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Config(vec!["taus must be strictly decreasing".into()]));
    }
    let runs = cfg
        .taus
        .par_iter()
        .map(|&tau| convergence_run(cfg, cfg.ref_level, TauSchedule::constant(tau)?))
        .collect::<Result<Vec<_>>>()?;
    let (mut rows, records) = collect(runs);
    fill_eocs(&mut rows, |r| r.tau)?;
    Ok(ConvergenceTable { rows, records })
}

/// 17 significant digits, round-trip exact and locale independent.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

/// A record type with a fixed CSV column layout.
pub trait CsvRecord {
    fn header() -> &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

impl CsvRecord for ErrorRecord {
    fn header() -> &'static [&'static str] {
        &["t", "h", "tau", "k", "scheme", "e_l2", "e_h1", "e_linf"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            format_float(self.t),
            format_float(self.h),
            format_float(self.tau),
            self.k.to_string(),
            self.scheme.clone(),
            format_float(self.e_l2),
            format_float(self.e_h1),
            format_float(self.e_linf),
        ]
    }
}

impl CsvRecord for FlowReport {
    fn header() -> &'static [&'static str] {
        &[
            "step",
            "t",
            "tau",
            "tau_over_hk",
            "h",
            "area",
            "mean_radius",
            "min_angle",
            "area_ratio",
            "quality",
            "kappa_min",
            "kappa_max",
            "kappa_mean",
            "e_l2",
            "e_h1",
            "e_linf",
            "pinched",
        ]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.step.to_string(),
            format_float(self.t),
            format_float(self.tau),
            format_float(self.tau_over_hk),
            format_float(self.h),
            format_float(self.area),
            format_float(self.mean_radius),
            format_float(self.min_angle),
            format_float(self.area_ratio),
            format_float(self.quality),
            opt(self.kappa_min),
            opt(self.kappa_max),
            opt(self.kappa_mean),
            opt(self.e_l2),
            opt(self.e_h1),
            opt(self.e_linf),
            self.pinched.to_string(),
        ]
    }
}

impl CsvRecord for ConvergenceRow {
    fn header() -> &'static [&'static str] {
        &["level", "h", "tau", "k", "scheme", "linf_l2", "l2_h1", "eoc_linf_l2", "eoc_l2_h1"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.level.to_string(),
            format_float(self.h),
            format_float(self.tau),
            self.k.to_string(),
            self.scheme.to_string(),
            format_float(self.linf_l2),
            format_float(self.l2_h1),
            opt(self.eoc_linf_l2),
            opt(self.eoc_l2_h1),
        ]
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

pub fn csv_string<R: CsvRecord>(records: &[R]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record(R::header()).map_err(csv_error)?;
    for r in records {
        w.write_record(r.fields()).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("fields are UTF-8"))
}

/// Header row plus one row per record, RFC 4180 quoting and line endings.
pub fn export_csv<R: CsvRecord>(records: &[R], path: &Path) -> Result<()> {
    fs::write(path, csv_string(records)?)?;
    Ok(())
}

/// Flat sub-triangles of a degree-`k` element over its Lagrange node
/// lattice, as local node indices; `k^2` of them, oriented like the element.
pub fn sub_triangles(k: usize) -> Vec<[usize; 3]> {
    let multi = node_multi_indices(k);
    let at = |i: usize, j: usize| {
        multi
            .iter()
            .position(|m| m[1] == i && m[2] == j)
            .expect("lattice point is a node")
    };
    let mut out = Vec::with_capacity(k * k);
    for j in 0..k {
        for i in 0..k - j {
            out.push([at(i, j), at(i + 1, j), at(i, j + 1)]);
            if i + j + 1 < k {
                out.push([at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)]);
            }
        }
    }
    out
}

/// Legacy ASCII VTK unstructured grid. Curved elements are drawn as `k^2`
/// flat sub-triangles through their nodes; nodal fields go to POINT_DATA.
pub fn vtk_string(mesh: &SurfaceMesh, fields: &[(&str, &NodalField)]) -> Result<String> {
    for (name, f) in fields {
        f.check_on(mesh)?;
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(Error::InvalidArgument(format!("invalid VTK field name '{name}'")));
        }
        if f.components() != 1 && f.components() != 3 {
            return Err(Error::FieldMismatch(format!(
                "VTK export supports scalar or 3-vector fields, '{name}' has {} components",
                f.components()
            )));
        }
    }
    let subs = sub_triangles(mesh.degree());
    let ncells = subs.len() * mesh.num_elements();
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\nmcflow surface\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    writeln!(s, "POINTS {} double", mesh.num_nodes()).unwrap();
    for p in mesh.nodes() {
        writeln!(s, "{} {} {}", format_float(p[0]), format_float(p[1]), format_float(p[2])).unwrap();
    }
    writeln!(s, "CELLS {ncells} {}", 4 * ncells).unwrap();
    for el in mesh.elements() {
        for t in &subs {
            writeln!(s, "3 {} {} {}", el[t[0]], el[t[1]], el[t[2]]).unwrap();
        }
    }
    writeln!(s, "CELL_TYPES {ncells}").unwrap();
    for _ in 0..ncells {
        s.push_str("5\n");
    }
    if !fields.is_empty() {
        writeln!(s, "POINT_DATA {}", mesh.num_nodes()).unwrap();
    }
    for (name, f) in fields {
        if f.components() == 1 {
            writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default").unwrap();
            for v in f.values() {
                writeln!(s, "{}", format_float(*v)).unwrap();
            }
        } else {
            writeln!(s, "VECTORS {name} double").unwrap();
            for v in f.vectors() {
                writeln!(s, "{} {} {}", format_float(v[0]), format_float(v[1]), format_float(v[2])).unwrap();
            }
        }
    }
    Ok(s)
}

pub fn export_vtk(mesh: &SurfaceMesh, fields: &[(&str, &NodalField)], path: &Path) -> Result<()> {
    fs::write(path, vtk_string(mesh, fields)?)?;
    Ok(())
}

/// How a command ended.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Completed,
    Pinched { t: f64 },
}

fn write_table(cfg: &ExperimentConfig, table: &ConvergenceTable) -> Result<()> {
    if cfg.export.csv() {
        fs::create_dir_all(&cfg.out)?;
        export_csv(&table.records, &cfg.out.join("errors.csv"))?;
        export_csv(&table.rows, &cfg.out.join("eoc.csv"))?;
    }
    Ok(())
}

/// Human-readable summary of a convergence table.
pub fn format_table(table: &ConvergenceTable) -> String {
    let mut s = String::from("level        h          tau      Linf(L2)    EOC     L2(H1)     EOC\n");
    let e = |v: Option<f64>| v.map_or("     -".to_string(), |x| format!("{x:6.3}"));
    for r in &table.rows {
        writeln!(
            s,
            "{:>5} {:10.4e} {:10.4e} {:10.4e} {} {:10.4e} {}",
            r.level,
            r.h,
            r.tau,
            r.linf_l2,
            e(r.eoc_linf_l2),
            r.l2_h1,
            e(r.eoc_l2_h1)
        )
        .unwrap();
    }
    s
}

fn run_evolve(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mesh = cfg.surface.mesh(cfg.levels[0], cfg.degree)?;
    if cfg.export.csv() || cfg.export.vtk() {
        fs::create_dir_all(&cfg.out)?;
    }
    let flow = cfg.flow_config(cfg.schedule.clone());
    let out_dir = cfg.out.clone();
    let vtk = cfg.export.vtk();
    let outcome = run_flow_observed(&mesh, &flow, &mut |report, m, kappa| {
        if vtk {
            let fields: Vec<(&str, &NodalField)> = kappa.map(|k| ("kappa", k)).into_iter().collect();
            export_vtk(m, &fields, &out_dir.join(format!("mesh_{}.vtk", report.step)))?;
        }
        Ok(())
    })?;
    if cfg.export.csv() {
        export_csv(&outcome.reports, &cfg.out.join("flow_report.csv"))?;
        if flow.sphere.is_some() {
            export_csv(&outcome.errors, &cfg.out.join("errors.csv"))?;
        }
    }
    let last = outcome.reports.last().expect("initial report");
    println!(
        "{} {} k={} steps={} t={} mean_radius={:.6} min_angle={:.4}",
        cfg.scheme, cfg.surface, cfg.degree, outcome.steps, last.t, last.mean_radius, last.min_angle
    );
    Ok(match outcome.pinch_time {
        Some(t) => Outcome::Pinched { t },
        None => Outcome::Completed,
    })
}

/// Runs a validated experiment and writes its outputs.
pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome> {
    match cfg.command {
        Command::Evolve => run_evolve(cfg),
        Command::ConvergeSpace => {
            let table = run_converge_space(cfg)?;
            write_table(cfg, &table)?;
            print!("{}", format_table(&table));
            Ok(Outcome::Completed)
        }
        Command::ConvergeTime => {
            let table = run_converge_time(cfg)?;
            write_table(cfg, &table)?;
            print!("{}", format_table(&table));
            Ok(Outcome::Completed)
        }
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_PINCH: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::InvalidArgument(_)
        | Error::UnsupportedDegree(_)
        | Error::QuadratureNotTabulated { .. } => EXIT_CONFIG,
        Error::SolverFailure { .. } => EXIT_SOLVER,
        _ => EXIT_FAILURE,
    }
}

#[derive(Debug, Parser)]
#[command(name = "mcflow", version, about = "Mean curvature flow of closed surfaces with parametric finite elements")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Evolve a surface and record mesh quality, errors and snapshots.
    Evolve(Flags),
    /// Spatial convergence study on the shrinking sphere.
    ConvergeSpace(Flags),
    /// Temporal convergence study on the shrinking sphere.
    ConvergeTime(Flags),
}

/// Flags shared by all commands; values are validated together after
/// merging with the config file.
#[derive(Debug, Args, Default)]
pub struct Flags {
    /// Config file of `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// dziuk, bgn or mdr.
    #[arg(long)]
    pub scheme: Option<String>,
    /// sphere:R, dumbbell:NxM or box:n.
    #[arg(long)]
    pub surface: Option<String>,
    /// Lagrange degree 1, 2 or 3.
    #[arg(long)]
    pub degree: Option<String>,
    /// Constant time step.
    #[arg(long)]
    pub tau: Option<String>,
    /// Piecewise constant steps, e.g. 0:1e-5,0.09:1e-7.
    #[arg(long)]
    pub tau_schedule: Option<String>,
    #[arg(long)]
    pub final_time: Option<String>,
    /// Icosphere levels, comma separated.
    #[arg(long)]
    pub levels: Option<String>,
    /// Step sizes of a temporal study, comma separated.
    #[arg(long)]
    pub taus: Option<String>,
    /// Icosphere level of the temporal study mesh.
    #[arg(long)]
    pub ref_level: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<String>,
    /// vtk, csv or both.
    #[arg(long)]
    pub export: Option<String>,
    #[arg(long)]
    pub pinch_threshold: Option<String>,
    /// Report and snapshot every this many steps.
    #[arg(long)]
    pub cadence: Option<String>,
}

impl Flags {
    fn pairs(&self) -> Vec<(String, String)> {
        [
            ("scheme", &self.scheme),
            ("surface", &self.surface),
            ("degree", &self.degree),
            ("tau", &self.tau),
            ("tau-schedule", &self.tau_schedule),
            ("final-time", &self.final_time),
            ("levels", &self.levels),
            ("taus", &self.taus),
            ("ref-level", &self.ref_level),
            ("out", &self.out),
            ("export", &self.export),
            ("pinch-threshold", &self.pinch_threshold),
            ("cadence", &self.cadence),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
        .collect()
    }
}

/// Merges file keys, the subcommand and flags, in increasing precedence.
/// A flag `--tau` drops a `tau-schedule` from the file and vice versa.
pub fn config_from_cli(cli: &Cli) -> Result<ExperimentConfig> {
    let (command, flags) = match &cli.command {
        CliCommand::Evolve(f) => (Command::Evolve, f),
        CliCommand::ConvergeSpace(f) => (Command::ConvergeSpace, f),
        CliCommand::ConvergeTime(f) => (Command::ConvergeTime, f),
    };
    let mut pairs = match &flags.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(vec![format!("cannot read config {}: {e}", path.display())]))?;
            parse_pairs(&text).map_err(Error::Config)?
        }
        None => Vec::new(),
    };
    if flags.tau.is_some() {
        pairs.retain(|(k, _)| k != "tau-schedule");
    }
    if flags.tau_schedule.is_some() {
        pairs.retain(|(k, _)| k != "tau");
    }
    pairs.push(("command".into(), command.name().into()));
    pairs.extend(flags.pairs());
    ExperimentConfig::from_pairs(&pairs)
}

/// Entry point of the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let cfg = match config_from_cli(&cli) {
        Ok(c) => c,
        Err(e) => {
            report_error(&e);
            return exit_code(&e);
        }
    };
    match execute(&cfg) {
        Ok(Outcome::Completed) => EXIT_OK,
        Ok(Outcome::Pinched { t }) => {
            println!("pinch at t = {t}");
            EXIT_PINCH
        }
        Err(e) => {
            report_error(&e);
            exit_code(&e)
        }
    }
}

fn report_error(e: &Error) {
    match e {
        Error::Config(problems) => {
            eprintln!("invalid configuration:");
            for p in problems {
                eprintln!("  {p}");
            }
        }
        other => eprintln!("error: {other}"),
    }
}
