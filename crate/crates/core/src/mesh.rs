//! Curved triangulated closed surfaces and the initial-surface generators.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::f64::consts::PI;

use crate::assembly;
use crate::error::{Error, Result};
use crate::refelem::{self, Bary, ReferenceBasis};
use crate::vec3::{self, Vec3};

/// Curved triangular surface mesh of Lagrange degree `k`.
///
/// Element `e` stores `(k+1)(k+2)/2` node indices in reference-node order
/// (see [`crate::refelem`]); the element map is the degree-`k` Lagrange
/// interpolant of those nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh {
    degree: usize,
    nodes: Vec<Vec3>,
    elements: Vec<usize>,
    closed: bool,
}

impl SurfaceMesh {
    /// Builds a mesh, checking node counts, index ranges and non-degeneracy.
    /// Open surfaces are accepted; [`SurfaceMesh::is_closed`] reports which.
    pub fn new(degree: usize, nodes: Vec<Vec3>, elements: Vec<Vec<usize>>) -> Result<Self> {
        let nb = refelem::nodes_per_element(degree);
        if !(1..=refelem::MAX_DEGREE).contains(&degree) {
            return Err(Error::UnsupportedDegree(degree));
        }
        let mut flat = Vec::with_capacity(elements.len() * nb);
        for (e, el) in elements.iter().enumerate() {
            if el.len() != nb {
                return Err(Error::InvalidArgument(format!(
                    "element {e} has {} nodes, degree {degree} needs {nb}",
                    el.len()
                )));
            }
            if let Some(&i) = el.iter().find(|&&i| i >= nodes.len()) {
                return Err(Error::InvalidArgument(format!(
                    "element {e} references node {i} of {}",
                    nodes.len()
                )));
            }
            flat.extend_from_slice(el);
        }
        let mut mesh = Self {
            degree,
            nodes,
            elements: flat,
            closed: false,
        };
        mesh.closed = mesh.check_closed_oriented().is_ok();
        assembly::check_nondegenerate(&mesh)?;
        Ok(mesh)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn nodes_per_element(&self) -> usize {
        refelem::nodes_per_element(self.degree)
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len() / self.nodes_per_element()
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn element(&self, e: usize) -> &[usize] {
        let nb = self.nodes_per_element();
        &self.elements[e * nb..(e + 1) * nb]
    }

    pub fn elements(&self) -> impl Iterator<Item = &[usize]> {
        self.elements.chunks(self.nodes_per_element())
    }

    /// All element node indices, element-major.
    pub fn connectivity(&self) -> &[usize] {
        &self.elements
    }

    pub fn corners(&self, e: usize) -> [usize; 3] {
        let el = self.element(e);
        [el[0], el[1], el[2]]
    }

    /// Coordinates of the nodes of element `e`.
    pub fn element_nodes(&self, e: usize) -> Vec<Vec3> {
        self.element(e).iter().map(|&i| self.nodes[i]).collect()
    }

    /// Every corner edge shared by exactly two elements traversed in
    /// opposite directions.
    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn check_closed_oriented(&self) -> Result<()> {
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for e in 0..self.num_elements() {
            let c = self.corners(e);
            for (a, b) in [(c[0], c[1]), (c[1], c[2]), (c[2], c[0])] {
                *directed.entry((a, b)).or_default() += 1;
            }
        }
        for (&(a, b), &count) in &directed {
            if count != 1 {
                return Err(Error::InvalidArgument(format!(
                    "edge {a}->{b} traversed {count} times in the same direction"
                )));
            }
            if directed.get(&(b, a)) != Some(&1) {
                return Err(Error::InvalidArgument(format!(
                    "edge {a}-{b} is not shared by two oppositely oriented elements"
                )));
            }
        }
        Ok(())
    }

    /// Unique corner edges `(min, max)`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut set = BTreeSet::new();
        for e in 0..self.num_elements() {
            let c = self.corners(e);
            for (a, b) in [(c[0], c[1]), (c[1], c[2]), (c[2], c[0])] {
                set.insert((a.min(b), a.max(b)));
            }
        }
        set.into_iter().collect()
    }

    pub fn num_vertices(&self) -> usize {
        (0..self.num_elements())
            .flat_map(|e| self.corners(e))
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// `V - E + F` of the corner triangulation.
    pub fn euler_characteristic(&self) -> i64 {
        self.num_vertices() as i64 - self.edges().len() as i64 + self.num_elements() as i64
    }

    /// Maximum corner-to-corner edge length.
    pub fn mesh_size(&self) -> f64 {
        self.edges()
            .iter()
            .map(|&(a, b)| vec3::dist(self.nodes[a], self.nodes[b]))
            .fold(0.0, f64::max)
    }

    /// Surface area by the default quadrature rule.
    pub fn area(&self) -> f64 {
        assembly::mesh_area(self)
    }

    /// Replaces the node coordinates, keeping connectivity.
    pub fn deform(&self, new_nodes: &NodalField) -> Result<SurfaceMesh> {
        let moved = self.with_nodes_unchecked(new_nodes)?;
        assembly::check_nondegenerate(&moved)?;
        Ok(moved)
    }

    /// As [`SurfaceMesh::deform`] without the degeneracy check.
    pub fn with_nodes_unchecked(&self, new_nodes: &NodalField) -> Result<SurfaceMesh> {
        if new_nodes.components() != 3 || new_nodes.len() != self.num_nodes() {
            return Err(Error::FieldMismatch(format!(
                "deformation needs a 3-component field on {} nodes, got {} components on {}",
                self.num_nodes(),
                new_nodes.components(),
                new_nodes.len()
            )));
        }
        Ok(SurfaceMesh {
            degree: self.degree,
            nodes: new_nodes.vectors().collect(),
            elements: self.elements.clone(),
            closed: self.closed,
        })
    }

    /// Nodal coordinates as a 3-component field.
    pub fn coordinates(&self) -> NodalField {
        NodalField::from_vectors(&self.nodes)
    }
}

/// Finite element function given by nodal values, 1 or 3 components per node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    components: usize,
    values: Vec<f64>,
}

impl NodalField {
    pub fn new(components: usize, values: Vec<f64>) -> Result<Self> {
        if components != 1 && components != 3 {
            return Err(Error::InvalidArgument(format!(
                "nodal fields have 1 or 3 components, got {components}"
            )));
        }
        if values.len() % components != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} values do not split into {components}-component nodes",
                values.len()
            )));
        }
        Ok(Self { components, values })
    }

    pub fn scalar(values: Vec<f64>) -> Self {
        Self { components: 1, values }
    }

    pub fn from_vectors(v: &[Vec3]) -> Self {
        Self {
            components: 3,
            values: v.iter().flat_map(|p| p.iter().copied()).collect(),
        }
    }

    pub fn constant(n: usize, value: &[f64]) -> Self {
        let components = value.len();
        assert!(components == 1 || components == 3);
        Self {
            components,
            values: (0..n).flat_map(|_| value.iter().copied()).collect(),
        }
    }

    pub fn components(&self) -> usize {
        self.components
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.values.len() / self.components
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Flat values, node-major (`3 * node + component` for vector fields).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn vector(&self, i: usize) -> Vec3 {
        debug_assert_eq!(self.components, 3);
        [self.values[3 * i], self.values[3 * i + 1], self.values[3 * i + 2]]
    }

    pub fn vectors(&self) -> impl Iterator<Item = Vec3> + '_ {
        self.values.chunks(3).map(|c| [c[0], c[1], c[2]])
    }

    /// Values of component `c` at every node.
    pub fn component(&self, c: usize) -> Vec<f64> {
        self.values.iter().skip(c).step_by(self.components).copied().collect()
    }

    pub fn from_components(cols: &[Vec<f64>]) -> Self {
        let n = cols[0].len();
        let components = cols.len();
        let mut values = Vec::with_capacity(n * components);
        for i in 0..n {
            for col in cols {
                values.push(col[i]);
            }
        }
        Self { components, values }
    }

    pub fn check_on(&self, mesh: &SurfaceMesh) -> Result<()> {
        if self.len() != mesh.num_nodes() {
            return Err(Error::FieldMismatch(format!(
                "field has {} nodes, mesh has {}",
                self.len(),
                mesh.num_nodes()
            )));
        }
        Ok(())
    }
}

/// Lifts a corner triangulation to degree `k`, creating each edge node once.
/// `place(e, xi)` gives the position of the point with barycentric
/// coordinates `xi` in element `e`.
fn lift_to_degree(
    degree: usize,
    corners: Vec<Vec3>,
    triangles: &[[usize; 3]],
    place: impl Fn(usize, Bary) -> Vec3,
) -> Result<SurfaceMesh> {
    let basis = ReferenceBasis::new(degree)?;
    let k = degree;
    let mut nodes = corners;
    let mut edge_nodes: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    let mut elements = Vec::with_capacity(triangles.len());
    for (e, tri) in triangles.iter().enumerate() {
        let mut el: Vec<usize> = tri.to_vec();
        for (la, lb) in [(0, 1), (1, 2), (2, 0)] {
            let (a, b) = (tri[la], tri[lb]);
            let key = (a.min(b), a.max(b));
            let ids = edge_nodes.entry(key).or_insert_with(|| {
                // nodes ordered from key.0 to key.1
                let (lo, hi) = if a < b { (la, lb) } else { (lb, la) };
                (1..k)
                    .map(|i| {
                        let t = i as f64 / k as f64;
                        let mut xi = [0.0; 3];
                        xi[lo] = 1.0 - t;
                        xi[hi] = t;
                        nodes.push(place(e, xi));
                        nodes.len() - 1
                    })
                    .collect()
            });
            if a < b {
                el.extend(ids.iter());
            } else {
                el.extend(ids.iter().rev());
            }
        }
        for m in &basis.multi_indices()[3 + 3 * (k - 1)..] {
            let xi = [m[0] as f64 / k as f64, m[1] as f64 / k as f64, m[2] as f64 / k as f64];
            nodes.push(place(e, xi));
            el.push(nodes.len() - 1);
        }
        elements.push(el);
    }
    SurfaceMesh::new(degree, nodes, elements)
}

fn icosahedron() -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let v: Vec<Vec3> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|&p| vec3::normalize(p))
    .collect();
    let f = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (v, f)
}

/// Icosahedral sphere mesh. Every node, including higher-order Lagrange
/// nodes, sits exactly on the sphere of the given radius.
pub fn generate_icosphere(radius: f64, refinement_level: usize, degree: usize) -> Result<SurfaceMesh> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidArgument(format!("sphere radius must be positive, got {radius}")));
    }
    let (mut verts, mut faces) = icosahedron();
    for _ in 0..refinement_level {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vec3>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let (p, q) = (verts[a.min(b)], verts[a.max(b)]);
                verts.push(vec3::normalize(vec3::lerp(p, q, 0.5)));
                verts.len() - 1
            })
        };
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let unit = verts.clone();
    let corners: Vec<Vec3> = verts.iter().map(|&p| vec3::scale(p, radius)).collect();
    lift_to_degree(degree, corners, &faces, |e, xi| {
        let [a, b, c] = faces[e];
        let p = vec3::combine3(xi, unit[a], unit[b], unit[c]);
        vec3::scale(vec3::normalize(p), radius)
    })
}

/// Dumbbell parametrization over `theta in [0, 2pi)`, `phi in [0, pi]`.
pub fn dumbbell_map(theta: f64, phi: f64) -> Vec3 {
    let r = (0.6 * phi.cos().powi(2) + 0.4) * phi.sin();
    [phi.cos(), r * theta.cos(), r * theta.sin()]
}

/// Dumbbell surface on a `n_theta x n_phi` parameter grid. The poles are
/// single nodes with triangle fans; each grid quad is split along the
/// `(i, j)`-`(i+1, j+1)` diagonal.
pub fn generate_dumbbell(n_theta: usize, n_phi: usize, degree: usize) -> Result<SurfaceMesh> {
    if n_theta < 3 || n_phi < 2 {
        return Err(Error::InvalidArgument(format!(
            "dumbbell grid needs n_theta >= 3 and n_phi >= 2, got {n_theta}x{n_phi}"
        )));
    }
    let theta = |i: usize| 2.0 * PI * i as f64 / n_theta as f64;
    let phi = |j: usize| PI * j as f64 / n_phi as f64;

    // node 0: phi = 0 pole; rings j = 1..n_phi; last: phi = pi pole
    let mut params: Vec<Option<[f64; 2]>> = vec![None];
    for j in 1..n_phi {
        for i in 0..n_theta {
            params.push(Some([theta(i), phi(j)]));
        }
    }
    params.push(None);
    let south = params.len() - 1;
    let id = |i: usize, j: usize| -> usize {
        if j == 0 {
            0
        } else if j == n_phi {
            south
        } else {
            1 + (j - 1) * n_theta + (i % n_theta)
        }
    };
    let corners: Vec<Vec3> = params
        .iter()
        .enumerate()
        .map(|(n, p)| match p {
            Some([t, f]) => dumbbell_map(*t, *f),
            None if n == 0 => dumbbell_map(0.0, 0.0),
            None => dumbbell_map(0.0, PI),
        })
        .collect();

    let mut triangles = Vec::new();
    // per-element (theta, phi) of the corners; theta of a pole is unused
    let mut corner_params: Vec<[[f64; 2]; 3]> = Vec::new();
    let mut pole_mask: Vec<[bool; 3]> = Vec::new();
    for j in 0..n_phi {
        for i in 0..n_theta {
            let p = |ii: usize, jj: usize| [theta(ii), phi(jj)];
            let quad_tris = [
                [(i, j), (i, j + 1), (i + 1, j + 1)],
                [(i, j), (i + 1, j + 1), (i + 1, j)],
            ];
            for tri in quad_tris {
                let ids = tri.map(|(ii, jj)| id(ii, jj));
                if ids[0] == ids[1] || ids[1] == ids[2] || ids[0] == ids[2] {
                    continue;
                }
                triangles.push(ids);
                corner_params.push(tri.map(|(ii, jj)| p(ii, jj)));
                pole_mask.push(tri.map(|(_, jj)| jj == 0 || jj == n_phi));
            }
        }
    }

    let mesh = lift_to_degree(degree, corners, &triangles, |e, xi| {
        let cp = corner_params[e];
        let mask = pole_mask[e];
        let ph: f64 = (0..3).map(|c| xi[c] * cp[c][1]).sum();
        // theta from the non-pole corners only, so edges into a pole follow a meridian
        let (mut wsum, mut th) = (0.0, 0.0);
        for c in 0..3 {
            if !mask[c] {
                wsum += xi[c];
                th += xi[c] * cp[c][0];
            }
        }
        let th = if wsum > 0.0 { th / wsum } else { 0.0 };
        dumbbell_map(th, ph)
    })
    .map_err(|err| match err {
        Error::DegenerateElement { .. } => Error::InvalidArgument(format!(
            "dumbbell grid {n_theta}x{n_phi} produces degenerate elements: {err}"
        )),
        other => other,
    })?;
    Ok(mesh)
}

/// Piecewise-flat mesh of the boundary of an axis-aligned box centred at
/// the origin. Faces are `n_per_unit`-per-unit-length square grids split
/// along a fixed diagonal.
pub fn generate_box(dims: [f64; 3], n_per_unit: usize, degree: usize) -> Result<SurfaceMesh> {
    if degree != 1 {
        return Err(Error::InvalidArgument(format!(
            "box meshes are piecewise flat and only support degree 1, got degree {degree}"
        )));
    }
    if n_per_unit == 0 {
        return Err(Error::InvalidArgument("box needs n_per_unit >= 1".into()));
    }
    let mut counts = [0usize; 3];
    for (d, &len) in dims.iter().enumerate() {
        let c = len * n_per_unit as f64;
        if !(len > 0.0) || (c - c.round()).abs() > 1e-9 || c.round() < 1.0 {
            return Err(Error::InvalidArgument(format!(
                "box side {len} is not a positive multiple of 1/{n_per_unit}"
            )));
        }
        counts[d] = c.round() as usize;
    }
    let h = 1.0 / n_per_unit as f64;
    let mut index: HashMap<[usize; 3], usize> = HashMap::new();
    let mut nodes: Vec<Vec3> = Vec::new();
    let mut node = |g: [usize; 3], nodes: &mut Vec<Vec3>| -> usize {
        *index.entry(g).or_insert_with(|| {
            nodes.push([
                g[0] as f64 * h - dims[0] / 2.0,
                g[1] as f64 * h - dims[1] / 2.0,
                g[2] as f64 * h - dims[2] / 2.0,
            ]);
            nodes.len() - 1
        })
    };
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    for a in 0..3 {
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        for side in [0, counts[a]] {
            for i in 0..counts[b] {
                for j in 0..counts[c] {
                    let g = |di: usize, dj: usize| {
                        let mut p = [0usize; 3];
                        p[a] = side;
                        p[b] = i + di;
                        p[c] = j + dj;
                        p
                    };
                    let p00 = node(g(0, 0), &mut nodes);
                    let p10 = node(g(1, 0), &mut nodes);
                    let p11 = node(g(1, 1), &mut nodes);
                    let p01 = node(g(0, 1), &mut nodes);
                    // e_b x e_c = e_a is outward on the far side
                    if side == 0 {
                        triangles.push([p00, p11, p10]);
                        triangles.push([p00, p01, p11]);
                    } else {
                        triangles.push([p00, p10, p11]);
                        triangles.push([p00, p11, p01]);
                    }
                }
            }
        }
    }
    let elements = triangles.iter().map(|t| t.to_vec()).collect();
    SurfaceMesh::new(1, nodes, elements)
}
