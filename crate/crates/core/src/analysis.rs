//! Finite element norms, distance errors against the exact sphere,
//! empirical orders of convergence and mesh-quality metrics.

use crate::assembly::{assemble_mass, assemble_stiffness, element_quadrature};
use crate::error::{Error, Result};
use crate::geometry::{project_to_sphere, SphereSolution};
use crate::mesh::{NodalField, SurfaceMesh};
use crate::refelem::Tabulation;
use crate::sparse::SparseMatrix;
use crate::vec3::{self, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L2,
    H1Semi,
    LinfNodes,
}

fn quadratic_form(m: &SparseMatrix, field: &NodalField) -> f64 {
    (0..field.components())
        .map(|c| {
            let u = field.component(c);
            let mu = m.mul_vec(&u);
            u.iter().zip(&mu).map(|(a, b)| a * b).sum::<f64>()
        })
        .sum()
}

pub fn fe_norm(mesh: &SurfaceMesh, field: &NodalField, which: Norm) -> Result<f64> {
    field.check_on(mesh)?;
    Ok(match which {
        Norm::L2 => quadratic_form(&assemble_mass(mesh)?, field).max(0.0).sqrt(),
        Norm::H1Semi => quadratic_form(&assemble_stiffness(mesh)?, field).max(0.0).sqrt(),
        Norm::LinfNodes => linf_nodes(field),
    })
}

fn linf_nodes(field: &NodalField) -> f64 {
    field
        .values()
        .chunks(field.components())
        .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// `(||u_h||_L2, |u_h|_H1)` by direct quadrature, without assembling
/// matrices.
pub fn norms_by_quadrature(mesh: &SurfaceMesh, field: &NodalField) -> Result<(f64, f64)> {
    field.check_on(mesh)?;
    let tab = Tabulation::for_degree(mesh.degree())?;
    let nc = field.components();
    let (mut l2, mut h1) = (0.0, 0.0);
    for e in 0..mesh.num_elements() {
        let el = mesh.element(e);
        for (q, qp) in element_quadrature(mesh, &tab, e)?.iter().enumerate() {
            let mut u = [0.0; 3];
            let mut g = [[0.0; 3]; 3];
            for (a, &node) in el.iter().enumerate() {
                for c in 0..nc {
                    let v = field.values()[nc * node + c];
                    u[c] += tab.values[q][a] * v;
                    vec3::axpy(&mut g[c], v, qp.grads[a]);
                }
            }
            l2 += qp.dx * vec3::dot(u, u);
            h1 += qp.dx * g.iter().map(|gc| vec3::dot(*gc, *gc)).sum::<f64>();
        }
    }
    Ok((l2.sqrt(), h1.sqrt()))
}

pub fn l2_norm_by_quadrature(mesh: &SurfaceMesh, field: &NodalField) -> Result<f64> {
    Ok(norms_by_quadrature(mesh, field)?.0)
}

/// Distance errors of one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRecord {
    pub t: f64,
    pub h: f64,
    pub tau: f64,
    pub k: usize,
    pub scheme: String,
    pub e_l2: f64,
    pub e_h1: f64,
    pub e_linf: f64,
}

/// Errors of `mesh` against the exact sphere at time `t`. The error field
/// `a(x_j) - x_j` lives on the nodally projected surface, where its
/// norms are taken. `tau` and `scheme` are left for the caller to fill.
pub fn sphere_errors(mesh: &SurfaceMesh, t: f64, sol: &SphereSolution) -> Result<ErrorRecord> {
    let projected = project_to_sphere(mesh, t, sol)?;
    let err: Vec<Vec3> = projected
        .nodes()
        .iter()
        .zip(mesh.nodes())
        .map(|(&a, &x)| vec3::sub(a, x))
        .collect();
    let field = NodalField::from_vectors(&err);
    let (e_l2, e_h1) = norms_by_quadrature(&projected, &field)?;
    Ok(ErrorRecord {
        t,
        h: mesh.mesh_size(),
        tau: 0.0,
        k: mesh.degree(),
        scheme: String::new(),
        e_l2,
        e_h1,
        e_linf: linf_nodes(&field),
    })
}

/// `max_m e_L2(t_m)` and `sqrt(sum_m tau_m e_H1(t_m)^2)` over a trajectory.
pub fn time_aggregate(records: &[ErrorRecord]) -> (f64, f64) {
    let linf_l2 = records.iter().map(|r| r.e_l2).fold(0.0, f64::max);
    let l2_h1 = records.iter().map(|r| r.tau * r.e_h1 * r.e_h1).sum::<f64>().sqrt();
    (linf_l2, l2_h1)
}

/// Rates `log(e_i / e_{i+1}) / log(x_i / x_{i+1})` for `(x, error)` pairs
/// with strictly decreasing `x`.
pub fn eoc(pairs: &[(f64, f64)]) -> Result<Vec<f64>> {
    if pairs.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "convergence rates need at least two samples, got {}",
            pairs.len()
        )));
    }
    if let Some(p) = pairs.iter().find(|(x, e)| !(*x > 0.0) || !(*e > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "convergence samples must be positive, got {p:?}"
        )));
    }
    if pairs.windows(2).any(|w| !(w[1].0 < w[0].0)) {
        return Err(Error::InvalidArgument(
            "refinement parameter must be strictly decreasing".into(),
        ));
    }
    Ok(pairs
        .windows(2)
        .map(|w| (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshQuality {
    /// Smallest interior angle of the corner triangles, radians.
    pub min_angle: f64,
    /// Largest over smallest corner-triangle area.
    pub area_ratio: f64,
}

pub fn mesh_quality(mesh: &SurfaceMesh) -> MeshQuality {
    let x = mesh.nodes();
    let mut min_angle = f64::INFINITY;
    let (mut amin, mut amax) = (f64::INFINITY, 0.0f64);
    for e in 0..mesh.num_elements() {
        let c = mesh.corners(e);
        for i in 0..3 {
            let p = x[c[i]];
            let u = vec3::sub(x[c[(i + 1) % 3]], p);
            let v = vec3::sub(x[c[(i + 2) % 3]], p);
            let angle = vec3::norm(vec3::cross(u, v)).atan2(vec3::dot(u, v));
            min_angle = min_angle.min(angle);
        }
        let area = 0.5 * vec3::norm(vec3::cross(vec3::sub(x[c[1]], x[c[0]]), vec3::sub(x[c[2]], x[c[0]])));
        amin = amin.min(area);
        amax = amax.max(area);
    }
    MeshQuality {
        min_angle,
        area_ratio: amax / amin,
    }
}

/// Mean and maximum nodal displacement between two meshes with the same
/// connectivity.
pub fn displacement_stats(from: &SurfaceMesh, to: &SurfaceMesh) -> (f64, f64) {
    let d: Vec<f64> = from
        .nodes()
        .iter()
        .zip(to.nodes())
        .map(|(&a, &b)| vec3::dist(a, b))
        .collect();
    let n = d.len().max(1) as f64;
    (d.iter().sum::<f64>() / n, d.iter().copied().fold(0.0, f64::max))
}

/// Area-weighted mean `int u_h / |Gamma_h|` of a scalar field.
pub fn surface_mean(mesh: &SurfaceMesh, field: &NodalField) -> Result<f64> {
    field.check_on(mesh)?;
    if field.components() != 1 {
        return Err(Error::FieldMismatch(format!(
            "surface mean needs a scalar field, got {} components",
            field.components()
        )));
    }
    let m = assemble_mass(mesh)?;
    let ones = vec![1.0; mesh.num_nodes()];
    let mu = m.mul_vec(&ones);
    let total: f64 = mu.iter().zip(field.values()).map(|(a, b)| a * b).sum();
    Ok(total / mu.iter().sum::<f64>())
}

/// Mean distance of the nodes from the origin.
pub fn mean_radius(mesh: &SurfaceMesh) -> f64 {
    mesh.nodes().iter().map(|&p| vec3::norm(p)).sum::<f64>() / mesh.num_nodes() as f64
}
