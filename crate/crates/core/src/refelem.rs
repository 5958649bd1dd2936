//! Lagrange bases and quadrature on the reference triangle.
//!
//! The reference triangle has corners `(0,0)`, `(1,0)`, `(0,1)` in the local
//! coordinates `(u, v)`. Points are passed as barycentric triples
//! `[l0, l1, l2]` with `u = l1`, `v = l2`.
//!
//! Reference-node ordering for degree `k`:
//! 1. the three corners `0, 1, 2`;
//! 2. the `k-1` nodes of each edge `0->1`, `1->2`, `2->0`, listed from the
//!    first corner of the edge towards the second;
//! 3. interior nodes, sorted lexicographically by their barycentric
//!    multi-index `(a, b, c)` (ascending `a`, then ascending `b`).

use crate::error::{Error, Result};

pub type Bary = [f64; 3];

pub const MAX_DEGREE: usize = 3;

/// Number of Lagrange nodes of a degree-`k` triangle.
pub const fn nodes_per_element(k: usize) -> usize {
    (k + 1) * (k + 2) / 2
}

fn check_degree(k: usize) -> Result<()> {
    if (1..=MAX_DEGREE).contains(&k) {
        Ok(())
    } else {
        Err(Error::UnsupportedDegree(k))
    }
}

/// Barycentric multi-indices `(a, b, c)`, `a + b + c = k`, in reference-node order.
pub fn node_multi_indices(k: usize) -> Vec<[usize; 3]> {
    let mut out = vec![[k, 0, 0], [0, k, 0], [0, 0, k]];
    for i in 1..k {
        out.push([k - i, i, 0]);
    }
    for i in 1..k {
        out.push([0, k - i, i]);
    }
    for i in 1..k {
        out.push([i, 0, k - i]);
    }
    for a in 1..k {
        for b in 1..k {
            if a + b < k {
                out.push([a, b, k - a - b]);
            }
        }
    }
    out
}

/// Degree-`k` Lagrange basis on the reference triangle.
#[derive(Debug, Clone)]
pub struct ReferenceBasis {
    degree: usize,
    multi: Vec<[usize; 3]>,
    nodes: Vec<Bary>,
}

impl ReferenceBasis {
    pub fn new(degree: usize) -> Result<Self> {
        check_degree(degree)?;
        let multi = node_multi_indices(degree);
        let kf = degree as f64;
        let nodes = multi
            .iter()
            .map(|m| [m[0] as f64 / kf, m[1] as f64 / kf, m[2] as f64 / kf])
            .collect();
        Ok(Self {
            degree,
            multi,
            nodes,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.multi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.multi.is_empty()
    }

    /// Barycentric coordinates of the Lagrange nodes.
    pub fn nodes(&self) -> &[Bary] {
        &self.nodes
    }

    pub fn multi_indices(&self) -> &[[usize; 3]] {
        &self.multi
    }

    /// Basis values and gradients with respect to `(u, v)` at `xi`.
    pub fn eval(&self, xi: Bary) -> (Vec<f64>, Vec<[f64; 2]>) {
        let k = self.degree;
        // per barycentric coordinate: P_m(l) and P_m'(l) for m = 0..=k
        let mut p = [[0.0; MAX_DEGREE + 1]; 3];
        let mut dp = [[0.0; MAX_DEGREE + 1]; 3];
        for d in 0..3 {
            for m in 0..=k {
                let (v, dv) = silvester(k, m, xi[d]);
                p[d][m] = v;
                dp[d][m] = dv;
            }
        }
        // d(l0, l1, l2)/du = (-1, 1, 0), d/dv = (-1, 0, 1)
        let mut values = Vec::with_capacity(self.len());
        let mut grads = Vec::with_capacity(self.len());
        for &[a, b, c] in &self.multi {
            let (pa, pb, pc) = (p[0][a], p[1][b], p[2][c]);
            let d0 = dp[0][a] * pb * pc;
            let d1 = pa * dp[1][b] * pc;
            let d2 = pa * pb * dp[2][c];
            values.push(pa * pb * pc);
            grads.push([d1 - d0, d2 - d0]);
        }
        (values, grads)
    }
}

/// `P_m(s) = prod_{i<m} (k s - i) / (i + 1)` and its derivative.
fn silvester(k: usize, m: usize, s: f64) -> (f64, f64) {
    let kf = k as f64;
    let mut value = 1.0;
    let mut deriv = 0.0;
    for i in 0..m {
        let f = (kf * s - i as f64) / (i as f64 + 1.0);
        let df = kf / (i as f64 + 1.0);
        deriv = deriv * f + value * df;
        value *= f;
    }
    (value, deriv)
}

/// Values and reference gradients of all degree-`k` basis functions at `xi`.
pub fn lagrange_basis(k: usize, xi: Bary) -> Result<(Vec<f64>, Vec<[f64; 2]>)> {
    Ok(ReferenceBasis::new(k)?.eval(xi))
}

/// Symmetric Gauss rule on the reference triangle. Weights sum to 1/2.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<Bary>,
    pub weights: Vec<f64>,
    pub exactness: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Bary, f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }
}

enum Orbit {
    Centroid(f64),
    /// `(a, b, b)` and permutations; fields are `a, b, weight`.
    S21(f64, f64, f64),
    /// all permutations of `(a, b, c)`; fields are `a, b, c, weight`.
    S111(f64, f64, f64, f64),
}

const THIRD: f64 = 1.0 / 3.0;

const RULE_1: &[Orbit] = &[Orbit::Centroid(0.5)];

const RULE_2: &[Orbit] = &[Orbit::S21(
    0.66666666666666667,
    0.16666666666666667,
    0.16666666666666667,
)];

const RULE_4: &[Orbit] = &[
    Orbit::S21(
        0.10810301816807023,
        0.44594849091596489,
        0.11169079483900573,
    ),
    Orbit::S21(
        0.81684757298045851,
        0.091576213509770743,
        0.054975871827660934,
    ),
];

const RULE_5: &[Orbit] = &[
    Orbit::Centroid(0.1125),
    Orbit::S21(
        0.05971587178976982,
        0.47014206410511509,
        0.06619707639425309,
    ),
    Orbit::S21(
        0.79742698535308732,
        0.10128650732345634,
        0.062969590272413576,
    ),
];

const RULE_6: &[Orbit] = &[
    Orbit::S21(
        0.50142650965817916,
        0.24928674517091042,
        0.058393137863189683,
    ),
    Orbit::S21(
        0.87382197101699554,
        0.063089014491502228,
        0.025422453185103408,
    ),
    Orbit::S111(
        0.053145049844816947,
        0.31035245103378441,
        0.63650249912139865,
        0.041425537809186788,
    ),
];

const RULE_8: &[Orbit] = &[
    Orbit::Centroid(0.072157803838893584),
    Orbit::S21(
        0.081414823414553688,
        0.45929258829272316,
        0.047545817133642312,
    ),
    Orbit::S21(
        0.65886138449647959,
        0.17056930775176021,
        0.051608685267359125,
    ),
    Orbit::S21(
        0.89890554336593805,
        0.050547228317030975,
        0.01622924881159904,
    ),
    Orbit::S111(
        0.0083947774099576053,
        0.26311282963463811,
        0.72849239295540428,
        0.013615157087217497,
    ),
];

/// Tabulated exactness degrees, ascending.
const TABLE: &[(usize, &[Orbit])] = &[
    (1, RULE_1),
    (2, RULE_2),
    (4, RULE_4),
    (5, RULE_5),
    (6, RULE_6),
    (8, RULE_8),
];

pub const MAX_EXACTNESS: usize = 8;

/// Cheapest tabulated rule integrating polynomials of degree `exactness` exactly.
pub fn quadrature_rule(exactness: usize) -> Result<QuadratureRule> {
    let (degree, orbits) = TABLE
        .iter()
        .find(|(d, _)| *d >= exactness)
        .ok_or(Error::QuadratureNotTabulated {
            requested: exactness,
            max: MAX_EXACTNESS,
        })?;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for orbit in orbits.iter() {
        match *orbit {
            Orbit::Centroid(w) => {
                points.push([THIRD; 3]);
                weights.push(w);
            }
            Orbit::S21(a, b, w) => {
                for p in [[a, b, b], [b, a, b], [b, b, a]] {
                    points.push(p);
                    weights.push(w);
                }
            }
            Orbit::S111(a, b, c, w) => {
                for p in [
                    [a, b, c],
                    [a, c, b],
                    [b, a, c],
                    [b, c, a],
                    [c, a, b],
                    [c, b, a],
                ] {
                    points.push(p);
                    weights.push(w);
                }
            }
        }
    }
    Ok(QuadratureRule {
        points,
        weights,
        exactness: *degree,
    })
}

/// Default assembly rule for degree-`k` elements (exactness `2k + 2`).
pub fn default_rule(k: usize) -> Result<QuadratureRule> {
    quadrature_rule(2 * k + 2)
}

/// Basis values and gradients tabulated at the points of a quadrature rule.
#[derive(Debug, Clone)]
pub struct Tabulation {
    pub basis: ReferenceBasis,
    pub rule: QuadratureRule,
    pub values: Vec<Vec<f64>>,
    pub grads: Vec<Vec<[f64; 2]>>,
}

impl Tabulation {
    pub fn new(basis: ReferenceBasis, rule: QuadratureRule) -> Self {
        let (values, grads) = rule.points.iter().map(|&xi| basis.eval(xi)).unzip();
        Self {
            basis,
            rule,
            values,
            grads,
        }
    }

    pub fn for_degree(k: usize) -> Result<Self> {
        Ok(Self::new(ReferenceBasis::new(k)?, default_rule(k)?))
    }
}
