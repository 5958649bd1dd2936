//! One-step solvers for the Dziuk, BGN and MDR schemes and the time loop.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::analysis::{self, sphere_errors, ErrorRecord};
use crate::assembly::{
    assemble_grad_coupling, assemble_lumped_bgn, assemble_normal_coupling, assemble_stiffness, blockwise,
    load_vectors, mass_kernel, stiffness_kernel, AssemblyPlan,
};
use crate::error::{Error, Result};
use crate::geometry::SphereSolution;
use crate::mesh::{NodalField, SurfaceMesh};
use crate::refelem::Tabulation;
use crate::sparse::{push_block, LuSolver, SolveStats, SparseMatrix};
use crate::assembly::ElementGeometry;
use crate::vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Dziuk,
    Bgn,
    Mdr,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Dziuk, Scheme::Bgn, Scheme::Mdr];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Dziuk => "dziuk",
            Scheme::Bgn => "bgn",
            Scheme::Mdr => "mdr",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dziuk" => Ok(Scheme::Dziuk),
            "bgn" => Ok(Scheme::Bgn),
            "mdr" => Ok(Scheme::Mdr),
            other => Err(format!("unknown scheme '{other}' (expected dziuk, bgn or mdr)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub mesh: SurfaceMesh,
    /// Lagrange multiplier of the MDR scheme.
    pub kappa: Option<NodalField>,
    pub system_size: usize,
    pub residual: f64,
    pub wall_time: Duration,
}

/// New nodal positions before the mesh is updated.
#[derive(Debug, Clone)]
pub struct StepSolution {
    pub positions: NodalField,
    pub kappa: Option<NodalField>,
    pub stats: SolveStats,
}

/// Advances a mesh by one step of a scheme. Connectivity never changes,
/// so sparsity patterns and factorizations carry over between steps.
pub struct Stepper {
    scheme: Scheme,
    system: LuSolver,
    mass: LuSolver,
    plans: Option<Plans>,
}

struct Plans {
    scalar: AssemblyPlan,
    mdr: Option<AssemblyPlan>,
}

impl Stepper {
    pub fn new(scheme: Scheme) -> Self {
        Self {
            scheme,
            system: LuSolver::reusing_factors(),
            mass: LuSolver::reusing_factors(),
            plans: None,
        }
    }

    fn plans(&mut self, mesh: &SurfaceMesh) -> Result<&Plans> {
        if !self.plans.as_ref().is_some_and(|p| p.scalar.fits(mesh)) {
            let mdr = match self.scheme {
                Scheme::Mdr => Some(mdr_plan(mesh)?),
                _ => None,
            };
            self.plans = Some(Plans {
                scalar: AssemblyPlan::scalar(mesh)?,
                mdr,
            });
        }
        Ok(self.plans.as_ref().unwrap())
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn solve(&mut self, mesh: &SurfaceMesh, tau: f64) -> Result<StepSolution> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {tau}")));
        }
        match self.scheme {
            Scheme::Dziuk => self.solve_dziuk(mesh, tau),
            Scheme::Bgn => self.solve_bgn(mesh, tau),
            Scheme::Mdr => self.solve_mdr(mesh, tau),
        }
    }

    pub fn step(&mut self, mesh: &SurfaceMesh, tau: f64) -> Result<StepResult> {
        let start = Instant::now();
        let sol = self.solve(mesh, tau)?;
        let new_mesh = mesh.deform(&sol.positions)?;
        Ok(StepResult {
            mesh: new_mesh,
            kappa: sol.kappa,
            system_size: sol.stats.size,
            residual: sol.stats.residual,
            wall_time: start.elapsed(),
        })
    }

    /// `(M / tau + A) X_c = M x_c / tau` for each coordinate.
    fn solve_dziuk(&mut self, mesh: &SurfaceMesh, tau: f64) -> Result<StepSolution> {
        let lhs = self.plans(mesh)?.scalar.assemble(mesh, |e, el, qps, tab, out| {
            mass_kernel(e, el, qps, tab, out);
            out.iter_mut().for_each(|v| *v /= tau);
            stiffness_kernel(e, el, qps, tab, out);
        })?;
        // (M x_c)_i = int phi_i x_c
        let rhs: Vec<Vec<f64>> = load_vectors(mesh, 3, |_, qp| qp.geom.position.to_vec())?
            .into_iter()
            .map(|r| r.into_iter().map(|v| v / tau).collect())
            .collect();
        let (cols, stats) = self.system.solve_many(&lhs, &rhs)?;
        Ok(StepSolution {
            positions: NodalField::from_components(&cols),
            kappa: None,
            stats,
        })
    }

    /// `(L / tau + A_v) X = L x / tau` with the lumped normal matrix `L`.
    fn solve_bgn(&mut self, mesh: &SurfaceMesh, tau: f64) -> Result<StepSolution> {
        let l = assemble_lumped_bgn(mesh)?;
        let av = blockwise(&assemble_stiffness(mesh)?);
        let lhs = l.linear_combination(1.0 / tau, &av, 1.0)?;
        let rhs: Vec<f64> = l.mul_vec(mesh.coordinates().values()).into_iter().map(|v| v / tau).collect();
        let (x, stats) = self.system.solve(&lhs, &rhs)?;
        Ok(StepSolution {
            positions: NodalField::new(3, x)?,
            kappa: None,
            stats,
        })
    }

    fn averaged_normal(&mut self, mesh: &SurfaceMesh) -> Result<NodalField> {
        let rhs = load_vectors(mesh, 3, |_, qp| qp.geom.normal.to_vec())?;
        let mass = self.plans(mesh)?.scalar.assemble(mesh, mass_kernel)?;
        let (cols, _) = self.mass.solve_many(&mass, &rhs)?;
        Ok(NodalField::from_components(&cols))
    }

    /// Monolithic 4N x 4N solve, unknowns ordered `[X (3N, node-major); kappa (N)]`:
    ///
    /// ```text
    /// [ B/tau + C      0   ] [X]   [ B x / tau   ]
    /// [ A_v/tau      -B^T  ] [k] = [ A_v x / tau ]
    /// ```
    fn solve_mdr(&mut self, mesh: &SurfaceMesh, tau: f64) -> Result<StepSolution> {
        let nbar = self.averaged_normal(mesh)?;
        let plan = self.plans(mesh)?.mdr.as_ref().expect("mdr plan");
        let (matrix, rhs) = assemble_mdr(plan, mesh, &nbar, tau)?;
        let (sol, stats) = self.system.solve(&matrix, &rhs)?;
        let n = mesh.num_nodes();
        Ok(StepSolution {
            positions: NodalField::new(3, sol[..3 * n].to_vec())?,
            kappa: Some(NodalField::scalar(sol[3 * n..].to_vec())),
            stats,
        })
    }
}

/// Assembled MDR system of one step.
pub struct MdrSystem {
    pub normal_coupling: SparseMatrix,
    pub grad_coupling: SparseMatrix,
    pub vector_stiffness: SparseMatrix,
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
}

impl MdrSystem {
    pub fn assemble(mesh: &SurfaceMesh, nbar: &NodalField, tau: f64) -> Result<Self> {
        let n = mesh.num_nodes();
        let b = assemble_normal_coupling(mesh, nbar)?;
        let c = assemble_grad_coupling(mesh, nbar)?;
        let av = blockwise(&assemble_stiffness(mesh)?);
        let bt = b.transpose();
        let mut t = Vec::with_capacity(2 * b.nnz() + c.nnz() + av.nnz());
        push_block(&mut t, &b, 0, 0, 1.0 / tau);
        push_block(&mut t, &c, 0, 0, 1.0);
        push_block(&mut t, &av, n, 0, 1.0 / tau);
        push_block(&mut t, &bt, n, 3 * n, -1.0);
        let matrix = SparseMatrix::from_triplets(4 * n, 4 * n, t)?;
        let x = mesh.coordinates();
        let mut rhs: Vec<f64> = b.mul_vec(x.values()).into_iter().map(|v| v / tau).collect();
        rhs.extend(av.mul_vec(x.values()).into_iter().map(|v| v / tau));
        Ok(Self {
            normal_coupling: b,
            grad_coupling: c,
            vector_stiffness: av,
            matrix,
            rhs,
        })
    }
}

/// Local entries per element pair `(a, b)` and component `c`: the first
/// row block, the `A_v / tau` block and the `-B^T` block.
fn mdr_plan(mesh: &SurfaceMesh) -> Result<AssemblyPlan> {
    let n = mesh.num_nodes();
    let nb = mesh.nodes_per_element();
    AssemblyPlan::new(mesh, 4 * n, 4 * n, 9 * nb * nb, |el, out| {
        for &i in el {
            for &j in el {
                for c in 0..3 {
                    out.push((i, 3 * j + c));
                    out.push((n + 3 * i + c, 3 * j + c));
                    out.push((n + 3 * j + c, 3 * n + i));
                }
            }
        }
    })
}

/// Same system as [`MdrSystem::assemble`] in one element pass.
fn assemble_mdr(plan: &AssemblyPlan, mesh: &SurfaceMesh, nbar: &NodalField, tau: f64) -> Result<(SparseMatrix, Vec<f64>)> {
    nbar.check_on(mesh)?;
    let n = mesh.num_nodes();
    let k = plan.assemble(mesh, |_, el, qps, tab, out| {
        let nb = el.len();
        for (q, qp) in qps.iter().enumerate() {
            let phi = &tab.values[q];
            let mut nq = [0.0; 3];
            let mut gn = [[0.0; 3]; 3];
            for (a, &node) in el.iter().enumerate() {
                let na = nbar.vector(node);
                vec3::axpy(&mut nq, phi[a], na);
                for c in 0..3 {
                    vec3::axpy(&mut gn[c], na[c], qp.grads[a]);
                }
            }
            for i in 0..nb {
                for j in 0..nb {
                    let gij = vec3::dot(qp.grads[j], qp.grads[i]);
                    let pp = qp.dx * phi[i] * phi[j];
                    let base = 9 * (i * nb + j);
                    for c in 0..3 {
                        let b = pp * nq[c];
                        let cc = qp.dx * (nq[c] * gij + phi[i] * vec3::dot(qp.grads[j], gn[c]));
                        out[base + 3 * c] += b / tau + cc;
                        out[base + 3 * c + 1] += qp.dx * gij / tau;
                        out[base + 3 * c + 2] -= b;
                    }
                }
            }
        }
    })?;
    // B x / tau is read off the -B^T block, A_v x / tau off the second row block
    let x = mesh.coordinates();
    let x = x.values();
    let mut rhs = vec![0.0; 4 * n];
    for r in n..4 * n {
        for (col, v) in k.row(r) {
            if col < 3 * n {
                rhs[r] += v * x[col];
            } else {
                rhs[col - 3 * n] -= v * x[r - n] / tau;
            }
        }
    }
    Ok((k, rhs))
}

pub fn step_dziuk(mesh: &SurfaceMesh, tau: f64) -> Result<StepResult> {
    Stepper::new(Scheme::Dziuk).step(mesh, tau)
}

pub fn step_bgn(mesh: &SurfaceMesh, tau: f64) -> Result<StepResult> {
    Stepper::new(Scheme::Bgn).step(mesh, tau)
}

pub fn step_mdr(mesh: &SurfaceMesh, tau: f64) -> Result<StepResult> {
    Stepper::new(Scheme::Mdr).step(mesh, tau)
}

pub const DEFAULT_PINCH_THRESHOLD: f64 = 1e-4;

/// Pinch criterion based on area elements relative to the initial mesh.
#[derive(Debug, Clone)]
pub struct PinchDetector {
    initial_area: Vec<f64>,
    threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinchStatus {
    pub pinched: bool,
    /// Minimum over elements and quadrature points of the area element
    /// divided by its initial value; negative when an element turned over.
    pub quality: f64,
}

impl PinchDetector {
    pub fn new(initial: &SurfaceMesh, threshold: f64) -> Result<Self> {
        Ok(Self {
            initial_area: crate::assembly::area_elements(initial)?,
            threshold,
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Area elements are signed against the normals of `previous` when
    /// given, so an element that flips within one step counts as inverted.
    pub fn check(&self, mesh: &SurfaceMesh, previous: Option<&SurfaceMesh>) -> PinchStatus {
        let tab = Tabulation::for_degree(mesh.degree()).expect("mesh degree is valid");
        let nq = tab.rule.len();
        let mut quality = f64::INFINITY;
        for e in 0..mesh.num_elements() {
            let nodes = mesh.element_nodes(e);
            let prev_nodes = previous.map(|p| p.element_nodes(e));
            for q in 0..nq {
                let g = ElementGeometry::new(&nodes, &tab.values[q], &tab.grads[q]);
                let cross = vec3::cross(g.tangents[0], g.tangents[1]);
                let mut area = g.area_element;
                if let Some(pn) = &prev_nodes {
                    let gp = ElementGeometry::new(pn, &tab.values[q], &tab.grads[q]);
                    area = vec3::dot(cross, gp.normal);
                }
                let ratio = area / self.initial_area[e * nq + q];
                if !(ratio >= quality) {
                    quality = if ratio.is_nan() { f64::NEG_INFINITY } else { ratio };
                }
            }
        }
        PinchStatus {
            pinched: !(quality > 0.0) || quality < self.threshold,
            quality,
        }
    }
}

/// `(pinched, quality)` of `mesh` relative to `initial`.
pub fn detect_pinch(mesh: &SurfaceMesh, initial: &SurfaceMesh, threshold: f64) -> Result<(bool, f64)> {
    let s = PinchDetector::new(initial, threshold)?.check(mesh, None);
    Ok((s.pinched, s.quality))
}

/// Piecewise-constant step sizes: `(t_switch, tau)` pairs, the first
/// starting at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TauSchedule {
    phases: Vec<(f64, f64)>,
}

impl TauSchedule {
    pub fn constant(tau: f64) -> Result<Self> {
        Self::new(vec![(0.0, tau)])
    }

    pub fn new(phases: Vec<(f64, f64)>) -> Result<Self> {
        let mut problems = Vec::new();
        if phases.is_empty() {
            problems.push("time-step schedule is empty".to_string());
        }
        if let Some(&(t0, _)) = phases.first() {
            if t0 != 0.0 {
                problems.push(format!("time-step schedule must start at t = 0, starts at {t0}"));
            }
        }
        for &(t, tau) in &phases {
            if !(tau > 0.0) || !tau.is_finite() {
                problems.push(format!("time step at t = {t} must be positive, got {tau}"));
            }
        }
        if phases.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            problems.push("time-step schedule switch times must be strictly increasing".to_string());
        }
        if problems.is_empty() {
            Ok(Self { phases })
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn phases(&self) -> &[(f64, f64)] {
        &self.phases
    }

    pub fn tau_at(&self, t: f64) -> f64 {
        let eps = 1e-12 * t.abs().max(1.0);
        self.phases
            .iter()
            .rev()
            .find(|(ts, _)| *ts <= t + eps)
            .map(|p| p.1)
            .unwrap_or(self.phases[0].1)
    }

    /// Largest step size of the schedule.
    pub fn max_tau(&self) -> f64 {
        self.phases.iter().map(|p| p.1).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct FlowConfig {
    pub scheme: Scheme,
    pub schedule: TauSchedule,
    pub final_time: f64,
    pub pinch_threshold: f64,
    /// Report every `cadence` steps (the final state is always reported).
    pub cadence: usize,
    /// Exact solution for error tracking, when known.
    pub sphere: Option<SphereSolution>,
}

impl FlowConfig {
    pub fn new(scheme: Scheme, schedule: TauSchedule, final_time: f64) -> Self {
        Self {
            scheme,
            schedule,
            final_time,
            pinch_threshold: DEFAULT_PINCH_THRESHOLD,
            cadence: 1,
            sphere: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.final_time >= 0.0) || !self.final_time.is_finite() {
            problems.push(format!("final time must be nonnegative, got {}", self.final_time));
        }
        if self.cadence == 0 {
            problems.push("output cadence must be at least 1".to_string());
        }
        if !(self.pinch_threshold >= 0.0) {
            problems.push(format!("pinch threshold must be nonnegative, got {}", self.pinch_threshold));
        }
        if problems.is_empty() { Ok(()) } else { Err(Error::Config(problems)) }
    }
}

/// Snapshot of the evolution.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowReport {
    pub step: usize,
    pub t: f64,
    pub tau: f64,
    /// `tau / h^k`.
    pub tau_over_hk: f64,
    pub h: f64,
    pub area: f64,
    pub mean_radius: f64,
    pub min_angle: f64,
    pub area_ratio: f64,
    pub quality: f64,
    pub kappa_min: Option<f64>,
    pub kappa_max: Option<f64>,
    /// Area-weighted; nodal values of the multiplier oscillate between
    /// vertex and edge nodes, so their plain average is not meaningful.
    pub kappa_mean: Option<f64>,
    pub e_l2: Option<f64>,
    pub e_h1: Option<f64>,
    pub e_linf: Option<f64>,
    pub pinched: bool,
}

#[derive(Debug, Clone)]
pub struct FlowOutcome {
    pub reports: Vec<FlowReport>,
    pub final_mesh: SurfaceMesh,
    /// Time at which the pinch criterion fired.
    pub pinch_time: Option<f64>,
    pub steps: usize,
    /// Distance errors at every time level, when an exact sphere is given.
    pub errors: Vec<ErrorRecord>,
}

impl FlowOutcome {
    /// `(L-inf(L2), L2(H1))` time-aggregated errors.
    pub fn aggregate_errors(&self) -> Option<(f64, f64)> {
        (!self.errors.is_empty()).then(|| analysis::time_aggregate(&self.errors))
    }
}

fn report(
    step: usize,
    t: f64,
    tau: f64,
    mesh: &SurfaceMesh,
    quality: f64,
    kappa: Option<&NodalField>,
    err: Option<&ErrorRecord>,
    pinched: bool,
) -> FlowReport {
    let q = analysis::mesh_quality(mesh);
    let h = mesh.mesh_size();
    let kv = kappa.map(|k| k.values());
    FlowReport {
        step,
        t,
        tau,
        tau_over_hk: tau / h.powi(mesh.degree() as i32),
        h,
        area: mesh.area(),
        mean_radius: analysis::mean_radius(mesh),
        min_angle: q.min_angle,
        area_ratio: q.area_ratio,
        quality,
        kappa_min: kv.map(|v| v.iter().copied().fold(f64::INFINITY, f64::min)),
        kappa_max: kv.map(|v| v.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        kappa_mean: kappa.and_then(|k| analysis::surface_mean(mesh, k).ok()),
        e_l2: err.map(|e| e.e_l2),
        e_h1: err.map(|e| e.e_h1),
        e_linf: err.map(|e| e.e_linf),
        pinched,
    }
}

/// Called with each report, the mesh it describes and the multiplier of
/// the step that produced it.
pub type FlowObserver<'a> = dyn FnMut(&FlowReport, &SurfaceMesh, Option<&NodalField>) -> Result<()> + 'a;

/// Runs the flow until `t = T` or until the pinch criterion fires.
pub fn run_flow(initial: &SurfaceMesh, config: &FlowConfig) -> Result<FlowOutcome> {
    run_flow_observed(initial, config, &mut |_, _, _| Ok(()))
}

pub fn run_flow_observed(initial: &SurfaceMesh, config: &FlowConfig, observe: &mut FlowObserver) -> Result<FlowOutcome> {
    config.validate()?;
    let detector = PinchDetector::new(initial, config.pinch_threshold)?;
    let mut stepper = Stepper::new(config.scheme);
    let tag = |mut r: ErrorRecord, tau: f64| {
        r.tau = tau;
        r.scheme = config.scheme.to_string();
        r
    };

    let first_tau = config.schedule.tau_at(0.0);
    let mut errors = Vec::new();
    if let Some(sol) = &config.sphere {
        errors.push(tag(sphere_errors(initial, 0.0, sol)?, first_tau));
    }
    let mut reports = vec![report(0, 0.0, first_tau, initial, 1.0, None, errors.last(), false)];
    observe(&reports[0], initial, None)?;

    let mut mesh = initial.clone();
    let mut t = 0.0;
    let mut step = 0;
    let mut pinch_time = None;
    loop {
        let nominal = config.schedule.tau_at(t);
        let remaining = config.final_time - t;
        // a remainder this small is rounding in the accumulated time
        if remaining <= 1e-9 * nominal {
            break;
        }
        let tau = if remaining <= nominal * (1.0 + 1e-9) { remaining } else { nominal };
        let sol = stepper.solve(&mesh, tau)?;
        let candidate = mesh.with_nodes_unchecked(&sol.positions)?;
        let status = detector.check(&candidate, Some(&mesh));
        step += 1;
        t += tau;
        let valid = crate::assembly::check_nondegenerate(&candidate).is_ok();
        if status.pinched || !valid {
            pinch_time = Some(t);
            if valid {
                mesh = candidate;
            }
            let r = report(step, t, tau, &mesh, status.quality, sol.kappa.as_ref(), None, true);
            observe(&r, &mesh, sol.kappa.as_ref())?;
            reports.push(r);
            break;
        }
        mesh = candidate;
        if let Some(s) = &config.sphere {
            errors.push(tag(sphere_errors(&mesh, t, s)?, tau));
        }
        let last = config.final_time - t <= 1e-9 * nominal;
        if step % config.cadence == 0 || last {
            let err = config.sphere.as_ref().and(errors.last());
            let r = report(step, t, tau, &mesh, status.quality, sol.kappa.as_ref(), err, false);
            observe(&r, &mesh, sol.kappa.as_ref())?;
            reports.push(r);
        }
    }
    Ok(FlowOutcome {
        reports,
        final_mesh: mesh,
        pinch_time,
        steps: step,
        errors,
    })
}
