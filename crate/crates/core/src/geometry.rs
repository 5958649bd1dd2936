//! Normals, discrete mean curvature and the exact shrinking sphere.
//!
//! Sign convention: normals point outward and `H > 0` on convex surfaces,
//! so mean curvature flow moves with velocity `-H n`.

use crate::assembly::{self, l2_project};
use crate::error::{Error, Result};
use crate::mesh::{NodalField, SurfaceMesh};
use crate::refelem::Bary;
use crate::vec3::{self, Vec3};

/// Sphere centred at the origin shrinking under mean curvature flow:
/// `R(t) = sqrt(R0^2 - 4t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereSolution {
    pub initial_radius: f64,
}

impl SphereSolution {
    pub fn new(initial_radius: f64) -> Result<Self> {
        if !(initial_radius > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sphere radius must be positive, got {initial_radius}"
            )));
        }
        Ok(Self { initial_radius })
    }

    pub fn extinction_time(&self) -> f64 {
        self.initial_radius * self.initial_radius / 4.0
    }

    /// Radius at time `t`; zero from the extinction time on.
    pub fn radius(&self, t: f64) -> f64 {
        (self.initial_radius * self.initial_radius - 4.0 * t).max(0.0).sqrt()
    }

    fn live_radius(&self, t: f64) -> Result<f64> {
        if t >= self.extinction_time() {
            return Err(Error::Extinct {
                t,
                extinction: self.extinction_time(),
            });
        }
        Ok(self.radius(t))
    }

    /// Closest point on the sphere at time `t`: `R(t) x / |x|`.
    pub fn closest_point(&self, x: Vec3, t: f64) -> Result<Vec3> {
        let r = self.live_radius(t)?;
        let nx = vec3::norm(x);
        if nx == 0.0 {
            return Err(Error::InvalidArgument("closest point undefined at the sphere centre".into()));
        }
        Ok(vec3::scale(x, r / nx))
    }
}

/// Unit normal of element `e` at reference point `xi`.
pub fn piecewise_normal(mesh: &SurfaceMesh, e: usize, xi: Bary) -> Result<Vec3> {
    Ok(assembly::element_geometry(mesh, e, xi)?.normal)
}

/// L2 projection of the piecewise normal onto the continuous finite
/// element space. The result is not normalized.
pub fn averaged_normal(mesh: &SurfaceMesh) -> Result<NodalField> {
    l2_project(mesh, 3, |_, qp| qp.geom.normal.to_vec())
}

/// `H` with `int H phi = int (div_Gamma nbar) phi` for every basis function.
pub fn discrete_mean_curvature(mesh: &SurfaceMesh) -> Result<NodalField> {
    let nbar = averaged_normal(mesh)?;
    discrete_mean_curvature_with(mesh, &nbar)
}

pub fn discrete_mean_curvature_with(mesh: &SurfaceMesh, nbar: &NodalField) -> Result<NodalField> {
    nbar.check_on(mesh)?;
    l2_project(mesh, 1, |e, qp| vec![surface_divergence(mesh.element(e), nbar, &qp.grads)])
}

/// Surface divergence of a nodal vector field at a quadrature point.
pub(crate) fn surface_divergence(el: &[usize], field: &NodalField, grads: &[Vec3]) -> f64 {
    el.iter()
        .zip(grads)
        .map(|(&node, g)| vec3::dot(field.vector(node), *g))
        .sum()
}

/// Nodewise radial projection onto the exact sphere at time `t`.
pub fn project_to_sphere(mesh: &SurfaceMesh, t: f64, sol: &SphereSolution) -> Result<SurfaceMesh> {
    let projected = mesh
        .nodes()
        .iter()
        .map(|&x| sol.closest_point(x, t))
        .collect::<Result<Vec<_>>>()?;
    mesh.with_nodes_unchecked(&NodalField::from_vectors(&projected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_icosphere;

    fn flat_patch() -> SurfaceMesh {
        let mut nodes = Vec::new();
        for j in 0..4 {
            for i in 0..4 {
                nodes.push([i as f64 / 3.0, j as f64 / 3.0 + 0.1 * i as f64, 0.0]);
            }
        }
        let mut el = Vec::new();
        for j in 0..3 {
            for i in 0..3 {
                let p = |a: usize, b: usize| (j + b) * 4 + i + a;
                el.push(vec![p(0, 0), p(1, 0), p(1, 1)]);
                el.push(vec![p(0, 0), p(1, 1), p(0, 1)]);
            }
        }
        SurfaceMesh::new(1, nodes, el).unwrap()
    }

    #[test]
    fn sphere_law() {
        let s = SphereSolution::new(2.0).unwrap();
        assert_eq!(s.radius(0.0), 2.0);
        assert_eq!(s.radius(1.0), 0.0);
        assert!(s.radius(0.5) < s.radius(0.4));
        assert!((s.radius(0.125) - 3.5f64.sqrt()).abs() < 1e-15);
        assert!(matches!(s.closest_point([1.0, 0.0, 0.0], 1.0), Err(Error::Extinct { .. })));
    }

    #[test]
    fn radial_projection_of_point() {
        let s = SphereSolution::new(2.0).unwrap();
        assert_eq!(s.closest_point([3.0, 0.0, 0.0], 0.0).unwrap(), [2.0, 0.0, 0.0]);
        assert!(s.closest_point([0.0; 3], 0.0).is_err());
    }

    #[test]
    fn flat_normals() {
        let m = SurfaceMesh::new(1, vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], vec![vec![0, 1, 2]]).unwrap();
        assert_eq!(piecewise_normal(&m, 0, [1.0 / 3.0; 3]).unwrap(), [0.0, 0.0, 1.0]);
        let flipped = SurfaceMesh::new(1, m.nodes().to_vec(), vec![vec![0, 2, 1]]).unwrap();
        assert_eq!(piecewise_normal(&flipped, 0, [0.2, 0.3, 0.5]).unwrap(), [0.0, 0.0, -1.0]);
    }

    #[test]
    fn normal_invariant_under_scaling() {
        let m = generate_icosphere(1.0, 1, 2).unwrap();
        let big = m
            .deform(&NodalField::from_vectors(&m.nodes().iter().map(|&p| vec3::scale(p, 2.0)).collect::<Vec<_>>()))
            .unwrap();
        for e in [0, 7, 33] {
            let a = piecewise_normal(&m, e, [0.2, 0.5, 0.3]).unwrap();
            let b = piecewise_normal(&big, e, [0.2, 0.5, 0.3]).unwrap();
            assert!(vec3::dist(a, b) < 1e-14);
        }
    }

    #[test]
    fn sphere_normals_point_outward() {
        let m = generate_icosphere(1.0, 2, 1).unwrap();
        for e in 0..m.num_elements() {
            let g = assembly::element_geometry(&m, e, [1.0 / 3.0; 3]).unwrap();
            assert!(vec3::dot(g.normal, g.position) > 0.9 * vec3::norm(g.position));
        }
    }

    #[test]
    fn averaged_normal_on_flat_patch_is_constant() {
        let nbar = averaged_normal(&flat_patch()).unwrap();
        for v in nbar.vectors() {
            assert!(v[0].abs() < 1e-13 && v[1].abs() < 1e-13 && (v[2] - 1.0).abs() < 1e-13);
        }
        let h = discrete_mean_curvature(&flat_patch()).unwrap();
        assert!(h.values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn mean_curvature_of_sphere() {
        let m = generate_icosphere(2.0, 3, 2).unwrap();
        let h = discrete_mean_curvature(&m).unwrap();
        assert!(h.values().iter().all(|&v| (v - 1.0).abs() < 0.1));
        let m4 = generate_icosphere(4.0, 3, 2).unwrap();
        let h4 = discrete_mean_curvature(&m4).unwrap();
        for (a, b) in h.values().iter().zip(h4.values()) {
            assert!((b / a - 0.5).abs() < 0.05);
        }
    }

    #[test]
    fn projection_is_radial() {
        let m = generate_icosphere(2.0, 1, 2).unwrap();
        let scaled: Vec<Vec3> = m.nodes().iter().map(|&p| vec3::scale(p, 1.1)).collect();
        let m2 = m.deform(&NodalField::from_vectors(&scaled)).unwrap();
        let s = SphereSolution::new(2.0).unwrap();
        let p = project_to_sphere(&m2, 0.1, &s).unwrap();
        let r = s.radius(0.1);
        for (x, a) in m2.nodes().iter().zip(p.nodes()) {
            assert!((vec3::norm(*a) - r).abs() <= 1e-12 * r);
            assert!((vec3::dist(*a, *x) - (vec3::norm(*x) - r).abs()).abs() < 1e-13);
            assert!(vec3::norm(vec3::cross(vec3::sub(*a, *x), *x)) <= 1e-12 * vec3::norm(*x).powi(2));
        }
        let on = project_to_sphere(&generate_icosphere(2.0, 1, 2).unwrap(), 0.0, &s).unwrap();
        for (a, b) in on.nodes().iter().zip(m.nodes()) {
            assert!(vec3::dist(*a, *b) <= 1e-15 * 2.0);
        }
    }
}
