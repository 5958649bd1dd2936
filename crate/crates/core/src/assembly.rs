//! Geometry of curved elements and assembly of the surface finite element
//! matrices.
//!
//! Vector-valued unknowns are laid out node-major: component `c` of node
//! `j` sits at column (or row) `3 * j + c`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{NodalField, SurfaceMesh};
use crate::refelem::{Bary, ReferenceBasis, Tabulation};
use crate::sparse::{LuSolver, SparseMatrix, Triplet};
use crate::vec3::{self, Vec3};

/// Relative size below which an area element counts as vanished.
const DEGENERACY_TOL: f64 = 1e-14;

/// Geometry of a curved element at one reference point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    pub position: Vec3,
    /// `dF/du`, `dF/dv`.
    pub tangents: [Vec3; 2],
    /// First fundamental form.
    pub metric: [[f64; 2]; 2],
    inv_metric: [[f64; 2]; 2],
    pub area_element: f64,
    /// `(dF/du x dF/dv) / |dF/du x dF/dv|`.
    pub normal: Vec3,
}

impl ElementGeometry {
    pub fn new(nodes: &[Vec3], values: &[f64], ref_grads: &[[f64; 2]]) -> Self {
        let mut position = [0.0; 3];
        let mut tu = [0.0; 3];
        let mut tv = [0.0; 3];
        for ((x, &v), g) in nodes.iter().zip(values).zip(ref_grads) {
            vec3::axpy(&mut position, v, *x);
            vec3::axpy(&mut tu, g[0], *x);
            vec3::axpy(&mut tv, g[1], *x);
        }
        let (guu, guv, gvv) = (vec3::dot(tu, tu), vec3::dot(tu, tv), vec3::dot(tv, tv));
        let cross = vec3::cross(tu, tv);
        let area_element = vec3::norm(cross);
        let det = area_element * area_element;
        Self {
            position,
            tangents: [tu, tv],
            metric: [[guu, guv], [guv, gvv]],
            inv_metric: [[gvv / det, -guv / det], [-guv / det, guu / det]],
            area_element,
            normal: vec3::scale(cross, 1.0 / area_element),
        }
    }

    pub fn is_degenerate(&self) -> bool {
        let scale = vec3::norm(self.tangents[0]) * vec3::norm(self.tangents[1]);
        !(self.area_element > DEGENERACY_TOL * scale) || !self.area_element.is_finite()
    }

    /// Maps a reference gradient to the tangential surface gradient.
    pub fn surface_gradient(&self, g: [f64; 2]) -> Vec3 {
        let a = self.inv_metric[0][0] * g[0] + self.inv_metric[0][1] * g[1];
        let b = self.inv_metric[1][0] * g[0] + self.inv_metric[1][1] * g[1];
        vec3::add(vec3::scale(self.tangents[0], a), vec3::scale(self.tangents[1], b))
    }
}

/// Geometry of element `e` at an arbitrary reference point.
pub fn element_geometry(mesh: &SurfaceMesh, e: usize, xi: Bary) -> Result<ElementGeometry> {
    let basis = ReferenceBasis::new(mesh.degree())?;
    let (v, g) = basis.eval(xi);
    let geom = ElementGeometry::new(&mesh.element_nodes(e), &v, &g);
    if geom.is_degenerate() {
        return Err(Error::DegenerateElement {
            element: e,
            point: 0,
            area_element: geom.area_element,
        });
    }
    Ok(geom)
}

/// Data of one quadrature point of an element.
#[derive(Debug, Clone)]
pub struct QuadPoint {
    pub geom: ElementGeometry,
    /// Quadrature weight times area element.
    pub dx: f64,
    /// Surface gradients of the element basis functions.
    pub grads: Vec<Vec3>,
}

/// Quadrature data of element `e`; fails on a vanishing area element.
pub fn element_quadrature(mesh: &SurfaceMesh, tab: &Tabulation, e: usize) -> Result<Vec<QuadPoint>> {
    let nodes = mesh.element_nodes(e);
    tab.rule
        .weights
        .iter()
        .enumerate()
        .map(|(q, &w)| {
            let geom = ElementGeometry::new(&nodes, &tab.values[q], &tab.grads[q]);
            if geom.is_degenerate() {
                return Err(Error::DegenerateElement {
                    element: e,
                    point: q,
                    area_element: geom.area_element,
                });
            }
            let grads = tab.grads[q].iter().map(|&g| geom.surface_gradient(g)).collect();
            Ok(QuadPoint {
                geom,
                dx: w * geom.area_element,
                grads,
            })
        })
        .collect()
}

pub fn check_nondegenerate(mesh: &SurfaceMesh) -> Result<()> {
    let tab = Tabulation::for_degree(mesh.degree())?;
    (0..mesh.num_elements())
        .into_par_iter()
        .try_for_each(|e| element_quadrature(mesh, &tab, e).map(|_| ()))
}

/// Area elements at every quadrature point, element-major.
pub fn area_elements(mesh: &SurfaceMesh) -> Result<Vec<f64>> {
    let tab = Tabulation::for_degree(mesh.degree())?;
    let nodes_of = |e| mesh.element_nodes(e);
    Ok((0..mesh.num_elements())
        .flat_map(|e| {
            let nodes = nodes_of(e);
            (0..tab.rule.len())
                .map(|q| ElementGeometry::new(&nodes, &tab.values[q], &tab.grads[q]).area_element)
                .collect::<Vec<_>>()
        })
        .collect())
}

pub(crate) fn mesh_area(mesh: &SurfaceMesh) -> f64 {
    let tab = Tabulation::for_degree(mesh.degree()).expect("mesh degree is valid");
    (0..mesh.num_elements())
        .map(|e| {
            let nodes = mesh.element_nodes(e);
            (0..tab.rule.len())
                .map(|q| tab.rule.weights[q] * ElementGeometry::new(&nodes, &tab.values[q], &tab.grads[q]).area_element)
                .sum::<f64>()
        })
        .sum()
}

/// Element loop: `kernel(e, element_nodes, quadrature, tabulation, out)`
/// pushes the element's triplets. Elements run in parallel; triplets are
/// merged in element order.
pub fn assemble_with<F>(mesh: &SurfaceMesh, nrows: usize, ncols: usize, kernel: F) -> Result<SparseMatrix>
where
    F: Fn(usize, &[usize], &[QuadPoint], &Tabulation, &mut Vec<Triplet>) + Sync,
{
    let tab = Tabulation::for_degree(mesh.degree())?;
    let parts: Vec<Vec<Triplet>> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let qps = element_quadrature(mesh, &tab, e)?;
            let mut local = Vec::new();
            kernel(e, mesh.element(e), &qps, &tab, &mut local);
            Ok(local)
        })
        .collect::<Result<_>>()?;
    SparseMatrix::from_triplets(nrows, ncols, parts.concat())
}

/// Fixed sparsity pattern with the value slot of every element-local
/// entry. Assembling through a plan skips the triplet sort, which
/// dominates the cost when the same connectivity is assembled every step.
#[derive(Debug, Clone)]
pub struct AssemblyPlan {
    pattern: SparseMatrix,
    slots: Vec<usize>,
    per_element: usize,
    elements: Vec<usize>,
}

impl AssemblyPlan {
    /// `entries(el, out)` lists the `(row, col)` of each local entry of an
    /// element with node indices `el`, always `per_element` of them and in
    /// the order the assembly kernel writes its values.
    pub fn new<F>(mesh: &SurfaceMesh, nrows: usize, ncols: usize, per_element: usize, entries: F) -> Result<Self>
    where
        F: Fn(&[usize], &mut Vec<(usize, usize)>),
    {
        let mut rc = Vec::with_capacity(per_element * mesh.num_elements());
        let mut local = Vec::with_capacity(per_element);
        for e in 0..mesh.num_elements() {
            local.clear();
            entries(mesh.element(e), &mut local);
            if local.len() != per_element {
                return Err(Error::DimensionMismatch(format!(
                    "element {e} lists {} entries, plan expects {per_element}",
                    local.len()
                )));
            }
            rc.extend_from_slice(&local);
        }
        let pattern = SparseMatrix::from_triplets(
            nrows,
            ncols,
            rc.iter().map(|&(i, j)| Triplet::new(i, j, 0.0)).collect(),
        )?;
        let slots = rc
            .iter()
            .map(|&(i, j)| pattern.slot(i, j).expect("entry is in its own pattern"))
            .collect();
        Ok(Self {
            pattern,
            slots,
            per_element,
            elements: mesh.connectivity().to_vec(),
        })
    }

    /// Whether `mesh` has the connectivity the plan was built for.
    pub fn fits(&self, mesh: &SurfaceMesh) -> bool {
        mesh.connectivity() == self.elements.as_slice()
    }

    /// Sums the local values `kernel(e, el, qps, tab, out)` of every element
    /// into the pattern. Kernels run in parallel; sums are in element order.
    pub fn assemble<F>(&self, mesh: &SurfaceMesh, kernel: F) -> Result<SparseMatrix>
    where
        F: Fn(usize, &[usize], &[QuadPoint], &Tabulation, &mut [f64]) + Sync,
    {
        if !self.fits(mesh) {
            return Err(Error::DimensionMismatch("mesh connectivity differs from the assembly plan".into()));
        }
        let tab = Tabulation::for_degree(mesh.degree())?;
        let locals: Vec<Vec<f64>> = (0..mesh.num_elements())
            .into_par_iter()
            .map(|e| {
                let qps = element_quadrature(mesh, &tab, e)?;
                let mut local = vec![0.0; self.per_element];
                kernel(e, mesh.element(e), &qps, &tab, &mut local);
                Ok(local)
            })
            .collect::<Result<_>>()?;
        let mut m = self.pattern.clone();
        let values = m.values_mut();
        for (slots, local) in self.slots.chunks(self.per_element).zip(&locals) {
            for (&s, &v) in slots.iter().zip(local) {
                values[s] += v;
            }
        }
        Ok(m)
    }

    /// Plan for the scalar node-node pattern, local entries ordered `(a, b)`
    /// row-major.
    pub fn scalar(mesh: &SurfaceMesh) -> Result<Self> {
        let n = mesh.num_nodes();
        let nb = mesh.nodes_per_element();
        Self::new(mesh, n, n, nb * nb, |el, out| {
            for &i in el {
                for &j in el {
                    out.push((i, j));
                }
            }
        })
    }
}

/// `int phi_i phi_j` kernel for [`AssemblyPlan::scalar`].
pub fn mass_kernel(_: usize, el: &[usize], qps: &[QuadPoint], tab: &Tabulation, out: &mut [f64]) {
    let nb = el.len();
    for (q, qp) in qps.iter().enumerate() {
        let phi = &tab.values[q];
        for i in 0..nb {
            for j in 0..nb {
                out[i * nb + j] += qp.dx * (phi[i] * phi[j]);
            }
        }
    }
}

/// `int grad phi_i . grad phi_j` kernel for [`AssemblyPlan::scalar`].
pub fn stiffness_kernel(_: usize, el: &[usize], qps: &[QuadPoint], _: &Tabulation, out: &mut [f64]) {
    let nb = el.len();
    for qp in qps {
        for i in 0..nb {
            for j in 0..nb {
                out[i * nb + j] += qp.dx * vec3::dot(qp.grads[i], qp.grads[j]);
            }
        }
    }
}

pub fn assemble_mass(mesh: &SurfaceMesh) -> Result<SparseMatrix> {
    let n = mesh.num_nodes();
    assemble_with(mesh, n, n, |_, el, qps, tab, out| {
        for (i, &gi) in el.iter().enumerate() {
            for (j, &gj) in el.iter().enumerate() {
                let v: f64 = qps
                    .iter()
                    .enumerate()
                    .map(|(q, qp)| qp.dx * (tab.values[q][i] * tab.values[q][j]))
                    .sum();
                out.push(Triplet::new(gi, gj, v));
            }
        }
    })
}

pub fn assemble_stiffness(mesh: &SurfaceMesh) -> Result<SparseMatrix> {
    let n = mesh.num_nodes();
    assemble_with(mesh, n, n, |_, el, qps, _, out| {
        for (i, &gi) in el.iter().enumerate() {
            for (j, &gj) in el.iter().enumerate() {
                let v: f64 = qps.iter().map(|qp| qp.dx * vec3::dot(qp.grads[i], qp.grads[j])).sum();
                out.push(Triplet::new(gi, gj, v));
            }
        }
    })
}

fn check_vector_field(mesh: &SurfaceMesh, f: &NodalField) -> Result<()> {
    f.check_on(mesh)?;
    if f.components() != 3 {
        return Err(Error::FieldMismatch(format!(
            "expected a 3-component field, got {}",
            f.components()
        )));
    }
    Ok(())
}

/// Interpolated value of a vector field at quadrature point `q`.
fn field_at(field: &NodalField, el: &[usize], phi: &[f64]) -> Vec3 {
    let mut v = [0.0; 3];
    for (a, &node) in el.iter().enumerate() {
        vec3::axpy(&mut v, phi[a], field.vector(node));
    }
    v
}

/// `B[i, 3j+c] = int phi_i nbar_c phi_j` (N x 3N).
pub fn assemble_normal_coupling(mesh: &SurfaceMesh, nbar: &NodalField) -> Result<SparseMatrix> {
    check_vector_field(mesh, nbar)?;
    let n = mesh.num_nodes();
    assemble_with(mesh, n, 3 * n, |_, el, qps, tab, out| {
        let nq: Vec<Vec3> = (0..qps.len()).map(|q| field_at(nbar, el, &tab.values[q])).collect();
        for (i, &gi) in el.iter().enumerate() {
            for (j, &gj) in el.iter().enumerate() {
                let mut v = [0.0; 3];
                for (q, qp) in qps.iter().enumerate() {
                    vec3::axpy(&mut v, qp.dx * tab.values[q][i] * tab.values[q][j], nq[q]);
                }
                for (c, vc) in v.into_iter().enumerate() {
                    out.push(Triplet::new(gi, 3 * gj + c, vc));
                }
            }
        }
    })
}

/// `C[i, 3j+c] = int grad phi_j . grad(nbar_c phi_i)` (N x 3N), with
/// `grad(nbar_c phi_i) = nbar_c grad phi_i + phi_i grad nbar_c`.
pub fn assemble_grad_coupling(mesh: &SurfaceMesh, nbar: &NodalField) -> Result<SparseMatrix> {
    check_vector_field(mesh, nbar)?;
    let n = mesh.num_nodes();
    assemble_with(mesh, n, 3 * n, |_, el, qps, tab, out| {
        let nb = el.len();
        let mut vals = vec![[0.0; 3]; nb * nb];
        for (q, qp) in qps.iter().enumerate() {
            let phi = &tab.values[q];
            let nq = field_at(nbar, el, phi);
            // grad nbar_c
            let mut gn = [[0.0; 3]; 3];
            for (a, &node) in el.iter().enumerate() {
                let na = nbar.vector(node);
                for c in 0..3 {
                    vec3::axpy(&mut gn[c], na[c], qp.grads[a]);
                }
            }
            for i in 0..nb {
                for j in 0..nb {
                    let gij = vec3::dot(qp.grads[j], qp.grads[i]);
                    for c in 0..3 {
                        let integrand = nq[c] * gij + phi[i] * vec3::dot(qp.grads[j], gn[c]);
                        vals[i * nb + j][c] += qp.dx * integrand;
                    }
                }
            }
        }
        for (i, &gi) in el.iter().enumerate() {
            for (j, &gj) in el.iter().enumerate() {
                for c in 0..3 {
                    out.push(Triplet::new(gi, 3 * gj + c, vals[i * nb + j][c]));
                }
            }
        }
    })
}

/// Mass-lumped normal-normal matrix of the BGN scheme (3N x 3N):
/// each flat triangle adds `(area / 3) n n^T` to the diagonal block of
/// each of its vertices.
pub fn assemble_lumped_bgn(mesh: &SurfaceMesh) -> Result<SparseMatrix> {
    if mesh.degree() != 1 {
        return Err(Error::InvalidArgument(format!(
            "lumped normal matrix needs degree-1 elements, got degree {}",
            mesh.degree()
        )));
    }
    let n = mesh.num_nodes();
    let x = mesh.nodes();
    let mut t = Vec::with_capacity(27 * mesh.num_elements());
    for e in 0..mesh.num_elements() {
        let [a, b, c] = mesh.corners(e);
        let cr = vec3::cross(vec3::sub(x[b], x[a]), vec3::sub(x[c], x[a]));
        let twice_area = vec3::norm(cr);
        if !(twice_area > 0.0) {
            return Err(Error::DegenerateElement {
                element: e,
                point: 0,
                area_element: twice_area,
            });
        }
        let nk = vec3::scale(cr, 1.0 / twice_area);
        let w = twice_area / 6.0;
        for v in [a, b, c] {
            for p in 0..3 {
                for q in 0..3 {
                    t.push(Triplet::new(3 * v + p, 3 * v + q, w * nk[p] * nk[q]));
                }
            }
        }
    }
    SparseMatrix::from_triplets(3 * n, 3 * n, t)
}

/// Block-diagonal expansion `m (x) I_3` in node-major layout.
pub fn blockwise(m: &SparseMatrix) -> SparseMatrix {
    let t = m
        .iter()
        .flat_map(|t| (0..3).map(move |c| Triplet::new(3 * t.row + c, 3 * t.col + c, t.value)))
        .collect();
    SparseMatrix::from_triplets(3 * m.nrows(), 3 * m.ncols(), t).expect("indices in range")
}

/// Load vectors `r_c[i] = int f_c phi_i` of an element-sampled field.
pub fn load_vectors<F>(mesh: &SurfaceMesh, components: usize, f: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(usize, &QuadPoint) -> Vec<f64> + Sync,
{
    let tab = Tabulation::for_degree(mesh.degree())?;
    let parts: Vec<Vec<(usize, Vec<f64>)>> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let qps = element_quadrature(mesh, &tab, e)?;
            let el = mesh.element(e);
            let mut local = vec![vec![0.0; components]; el.len()];
            for (q, qp) in qps.iter().enumerate() {
                let fv = f(e, qp);
                for (i, li) in local.iter_mut().enumerate() {
                    for c in 0..components {
                        li[c] += qp.dx * fv[c] * tab.values[q][i];
                    }
                }
            }
            Ok(el.iter().copied().zip(local).collect())
        })
        .collect::<Result<_>>()?;
    let mut r = vec![vec![0.0; mesh.num_nodes()]; components];
    for (node, v) in parts.into_iter().flatten() {
        for c in 0..components {
            r[c][node] += v[c];
        }
    }
    Ok(r)
}

/// L2-orthogonal projection onto the finite element space: solves
/// `M u_c = r_c` for each component.
pub fn l2_project<F>(mesh: &SurfaceMesh, components: usize, f: F) -> Result<NodalField>
where
    F: Fn(usize, &QuadPoint) -> Vec<f64> + Sync,
{
    if components != 1 && components != 3 {
        return Err(Error::InvalidArgument(format!(
            "projection supports 1 or 3 components, got {components}"
        )));
    }
    let rhs = load_vectors(mesh, components, f)?;
    let mass = assemble_mass(mesh)?;
    let (cols, _) = LuSolver::new().solve_many(&mass, &rhs)?;
    Ok(NodalField::from_components(&cols))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_icosphere;
    use std::f64::consts::PI;

    fn flat_triangle(p: [Vec3; 3]) -> SurfaceMesh {
        SurfaceMesh::new(1, p.to_vec(), vec![vec![0, 1, 2]]).unwrap()
    }

    fn small_flat_patch() -> SurfaceMesh {
        // 2x2 grid of squares in z = 0, split into triangles
        let mut nodes = Vec::new();
        for j in 0..3 {
            for i in 0..3 {
                nodes.push([i as f64 * 0.5, j as f64 * 0.5, 0.0]);
            }
        }
        let mut el = Vec::new();
        for j in 0..2 {
            for i in 0..2 {
                let p = |a: usize, b: usize| (j + b) * 3 + i + a;
                el.push(vec![p(0, 0), p(1, 0), p(1, 1)]);
                el.push(vec![p(0, 0), p(1, 1), p(0, 1)]);
            }
        }
        SurfaceMesh::new(1, nodes, el).unwrap()
    }

    #[test]
    fn p1_mass_matrix() {
        let m = flat_triangle([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        let mass = assemble_mass(&m).unwrap();
        let area = 1.0;
        for i in 0..3 {
            for j in 0..3 {
                let expect = area / 12.0 * if i == j { 2.0 } else { 1.0 };
                assert!((mass.get(i, j) - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn p1_stiffness_matrix() {
        let m = flat_triangle([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        let a = assemble_stiffness(&m).unwrap();
        let expect = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((a.get(i, j) - expect[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mass_sums_to_area_and_is_symmetric() {
        let m = generate_icosphere(1.0, 3, 2).unwrap();
        let mass = assemble_mass(&m).unwrap();
        let total: f64 = mass.values().iter().sum();
        assert!((total - m.area()).abs() < 1e-12 * total);
        assert!((total - 4.0 * PI).abs() / (4.0 * PI) < 0.04);
        let asym = mass.linear_combination(1.0, &mass.transpose(), -1.0).unwrap();
        assert_eq!(asym.max_abs(), 0.0);
    }

    #[test]
    fn stiffness_kernel_and_identity_energy() {
        let m = generate_icosphere(2.0, 2, 2).unwrap();
        let a = assemble_stiffness(&m).unwrap();
        let r = a.mul_vec(&vec![1.0; m.num_nodes()]);
        assert!(r.iter().all(|v| v.abs() <= 1e-10 * a.max_abs()));
        // int |grad id|^2 = 2 * area
        let energy: f64 = (0..3)
            .map(|c| {
                let x = m.coordinates().component(c);
                let ax = a.mul_vec(&x);
                x.iter().zip(&ax).map(|(p, q)| p * q).sum::<f64>()
            })
            .sum();
        assert!((energy - 2.0 * m.area()).abs() < 1e-10 * energy);
    }

    #[test]
    fn normal_coupling_on_flat_patch() {
        let m = small_flat_patch();
        let n = m.num_nodes();
        let zero = NodalField::constant(n, &[0.0; 3]);
        assert_eq!(assemble_normal_coupling(&m, &zero).unwrap().max_abs(), 0.0);
        let ez = NodalField::constant(n, &[0.0, 0.0, 1.0]);
        let b = assemble_normal_coupling(&m, &ez).unwrap();
        let mass = assemble_mass(&m).unwrap();
        for i in 0..n {
            for j in 0..n {
                assert!((b.get(i, 3 * j + 2) - mass.get(i, j)).abs() < 1e-15);
                assert_eq!(b.get(i, 3 * j), 0.0);
                assert_eq!(b.get(i, 3 * j + 1), 0.0);
            }
        }
        let c = assemble_grad_coupling(&m, &ez).unwrap();
        let a = assemble_stiffness(&m).unwrap();
        for i in 0..n {
            for j in 0..n {
                assert!((c.get(i, 3 * j + 2) - a.get(i, j)).abs() < 1e-14);
                assert_eq!(c.get(i, 3 * j), 0.0);
            }
        }
    }

    #[test]
    fn lumped_bgn_flat_and_sphere() {
        let m = small_flat_patch();
        let l = assemble_lumped_bgn(&m).unwrap();
        for t in l.iter() {
            if t.value != 0.0 {
                assert!(t.row % 3 == 2 && t.col % 3 == 2);
            }
        }
        let tangent: Vec<f64> = (0..m.num_nodes()).flat_map(|i| [1.0 + i as f64, -2.0, 0.0]).collect();
        assert!(l.mul_vec(&tangent).iter().all(|v| v.abs() < 1e-15));
        let s = generate_icosphere(1.0, 2, 1).unwrap();
        let ls = assemble_lumped_bgn(&s).unwrap();
        let trace: f64 = (0..3 * s.num_nodes()).map(|i| ls.get(i, i)).sum();
        assert!((trace - s.area()).abs() < 1e-12);
        let s2 = generate_icosphere(1.0, 1, 2).unwrap();
        assert!(assemble_lumped_bgn(&s2).is_err());
    }

    #[test]
    fn projection_of_constants() {
        let m = generate_icosphere(1.0, 2, 2).unwrap();
        let u = l2_project(&m, 3, |_, _| vec![1.5, -0.25, 2.0]).unwrap();
        for v in u.vectors() {
            assert!((v[0] - 1.5).abs() < 1e-12 && (v[1] + 0.25).abs() < 1e-12 && (v[2] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn surface_gradients_are_tangential() {
        let m = generate_icosphere(1.5, 1, 3).unwrap();
        let tab = Tabulation::for_degree(3).unwrap();
        for e in 0..m.num_elements() {
            for qp in element_quadrature(&m, &tab, e).unwrap() {
                for g in &qp.grads {
                    assert!(vec3::dot(*g, qp.geom.normal).abs() <= 1e-12 * vec3::norm(*g).max(1.0));
                }
            }
        }
    }
}
