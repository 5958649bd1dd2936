//! Structural property checks shared by the property tests and the
//! acceptance runner. Each returns the worst observed deviation.

#![allow(dead_code)]

use std::fs;
use std::path::Path;

use mcflow::assembly::{
    assemble_mass, assemble_normal_coupling, assemble_stiffness, element_quadrature,
    l2_project,
};
use mcflow::cli::{execute, parse_config};
use mcflow::geometry::averaged_normal;
use mcflow::mesh::{generate_dumbbell, generate_icosphere};
use mcflow::refelem::{lagrange_basis, quadrature_rule, Tabulation, MAX_EXACTNESS};
use mcflow::schemes::MdrSystem;
use mcflow::vec3;
use mcflow::{NodalField, SurfaceMesh};

pub fn meshes() -> Vec<SurfaceMesh> {
    let mut out = Vec::new();
    for k in 1..=3 {
        out.push(generate_icosphere(1.5, 1, k).unwrap());
        out.push(generate_dumbbell(8, 6, k).unwrap());
    }
    out
}

/// Smallest pivot of a dense Cholesky factorization of the mass matrix
/// relative to its largest diagonal entry, and the worst asymmetry.
pub fn mass_spd(mesh: &SurfaceMesh) -> (f64, f64) {
    let m = assemble_mass(mesh).unwrap().to_dense();
    let n = m.len();
    let mut asym: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            asym = asym.max((m[i][j] - m[j][i]).abs());
        }
    }
    let scale = (0..n).map(|i| m[i][i]).fold(0.0, f64::max);
    let mut l = m.clone();
    let mut min_pivot = f64::INFINITY;
    for j in 0..n {
        let d = l[j][j] - (0..j).map(|p| l[j][p] * l[j][p]).sum::<f64>();
        min_pivot = min_pivot.min(d / scale);
        if d <= 0.0 {
            return (min_pivot, asym);
        }
        let d = d.sqrt();
        l[j][j] = d;
        for i in j + 1..n {
            l[i][j] = (l[i][j] - (0..j).map(|p| l[i][p] * l[j][p]).sum::<f64>()) / d;
        }
    }
    (min_pivot, asym)
}

/// `max |A 1|` relative to `max |A|`.
pub fn stiffness_kills_constants(mesh: &SurfaceMesh) -> f64 {
    let a = assemble_stiffness(mesh).unwrap();
    let r = a.mul_vec(&vec![1.0; mesh.num_nodes()]);
    r.iter().fold(0.0f64, |m, v| m.max(v.abs())) / a.max_abs()
}

/// `max |grad_Gamma phi . n| / |grad_Gamma phi|` over all quadrature points.
pub fn gradient_tangency(mesh: &SurfaceMesh) -> f64 {
    let tab = Tabulation::for_degree(mesh.degree()).unwrap();
    let mut worst: f64 = 0.0;
    for e in 0..mesh.num_elements() {
        for qp in element_quadrature(mesh, &tab, e).unwrap() {
            for g in &qp.grads {
                let len = vec3::norm(*g);
                if len > 0.0 {
                    worst = worst.max(vec3::dot(*g, qp.geom.normal).abs() / len);
                }
            }
        }
    }
    worst
}

fn interpolate(field: &NodalField, el: &[usize], values: &[f64]) -> Vec<f64> {
    let nc = field.components();
    let mut out = vec![0.0; nc];
    for (a, &node) in el.iter().enumerate() {
        for c in 0..nc {
            out[c] += values[a] * field.values()[nc * node + c];
        }
    }
    out
}

/// Projecting an already projected field again changes it by at most this
/// much, relative to its size.
pub fn projection_idempotence(mesh: &SurfaceMesh) -> f64 {
    let once = l2_project(mesh, 1, |_, qp| {
        let p = qp.geom.position;
        vec![(3.0 * p[0]).sin() * p[2] + p[1] * p[1]]
    })
    .unwrap();
    let tab = Tabulation::for_degree(mesh.degree()).unwrap();
    let mut tabs = Vec::new();
    for e in 0..mesh.num_elements() {
        tabs.push(element_quadrature(mesh, &tab, e).unwrap());
    }
    // l2_project hands out quadrature points in order; recover their index
    // from the position to evaluate the projected field there.
    let twice = l2_project(mesh, 1, |e, qp| {
        let q = tabs[e]
            .iter()
            .position(|p| p.geom.position == qp.geom.position)
            .expect("same quadrature points");
        interpolate(&once, mesh.element(e), &tab.values[q])
    })
    .unwrap();
    let size = once.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    once.values()
        .iter()
        .zip(twice.values())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        / size
}

/// `max |D - B^T|` where `D` is the multiplier block of the assembled
/// system and `B` the normal coupling; exact equality is expected.
pub fn multiplier_block_is_transpose(mesh: &SurfaceMesh) -> f64 {
    let nbar = averaged_normal(mesh).unwrap();
    let sys = MdrSystem::assemble(mesh, &nbar, 1e-2).unwrap();
    let n = mesh.num_nodes();
    let b = assemble_normal_coupling(mesh, &nbar).unwrap();
    assert_eq!(b.values(), sys.normal_coupling.values());
    let mut worst: f64 = 0.0;
    for t in b.iter() {
        worst = worst.max((sys.matrix.get(n + t.col, 3 * n + t.row) + t.value).abs());
    }
    for t in sys.matrix.iter().filter(|t| t.col >= 3 * n) {
        assert!(t.row >= n, "multiplier column outside the constraint rows");
        worst = worst.max((t.value + b.get(t.col - 3 * n, t.row - n)).abs());
    }
    worst
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Worst relative error of `int u^a v^b` over the reference triangle for
/// every rule and every monomial up to its exactness.
pub fn quadrature_exactness() -> f64 {
    let mut worst: f64 = 0.0;
    for p in 1..=MAX_EXACTNESS {
        let rule = quadrature_rule(p).unwrap();
        for a in 0..=rule.exactness {
            for b in 0..=rule.exactness - a {
                let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                let q: f64 = rule.iter().map(|(xi, w)| w * xi[1].powi(a as i32) * xi[2].powi(b as i32)).sum();
                worst = worst.max((q - exact).abs() / exact);
            }
        }
    }
    worst
}

/// Worst gap between analytic basis gradients and central differences.
pub fn basis_gradients_vs_differences() -> f64 {
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for k in 1..=3 {
        for xi in [[0.2, 0.3, 0.5], [0.6, 0.15, 0.25], [1.0 / 3.0; 3], [0.05, 0.9, 0.05]] {
            let (_, g) = lagrange_basis(k, xi).unwrap();
            let at = |du: f64, dv: f64| lagrange_basis(k, [xi[0] - du - dv, xi[1] + du, xi[2] + dv]).unwrap().0;
            let (up, um, vp, vm) = (at(h, 0.0), at(-h, 0.0), at(0.0, h), at(0.0, -h));
            for i in 0..g.len() {
                worst = worst.max((g[i][0] - (up[i] - um[i]) / (2.0 * h)).abs());
                worst = worst.max((g[i][1] - (vp[i] - vm[i]) / (2.0 * h)).abs());
            }
        }
    }
    worst
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

/// Runs the same short experiment twice and compares every output file.
/// Returns the number of files compared, or the name of one that differs.
pub fn reruns_identical(config: &str) -> Result<usize, String> {
    let root = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let dir = root.path().join(run);
        let cfg = parse_config(&format!("{config}\nout = {}\n", dir.display())).unwrap();
        execute(&cfg).unwrap();
        outputs.push(read_dir_sorted(&dir));
    }
    if outputs[0].len() != outputs[1].len() {
        return Err("different file sets".into());
    }
    for (a, b) in outputs[0].iter().zip(&outputs[1]) {
        if a != b {
            return Err(a.0.clone());
        }
    }
    Ok(outputs[0].len())
}

pub const RERUN_CONFIG: &str = "surface = dumbbell:8x6\ndegree = 2\ntau = 1e-3\nfinal-time = 0.01\ncadence = 3\n";
