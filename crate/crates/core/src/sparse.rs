//! Compressed-row sparse matrices and a direct sparse solver.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::sparse::linalg::lu::{factorize_symbolic_lu, LuRef, NumericLu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut, Par};

use crate::error::{Error, Result};

/// Relative residual required of every solve.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Relaxed contract for systems larger than [`LARGE_SYSTEM`] unknowns.
pub const RESIDUAL_TOL_LARGE: f64 = 1e-8;
pub const LARGE_SYSTEM: usize = 100_000;

const MAX_REFINEMENT_STEPS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triplet {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

impl Triplet {
    pub fn new(row: usize, col: usize, value: f64) -> Self {
        Self { row, col, value }
    }
}

/// CSR matrix with sorted, duplicate-free column indices in each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| Triplet::new(i, i, 1.0)).collect())
            .expect("identity indices are in range")
    }

    /// Builds the matrix by summing duplicate entries. Entries are summed in
    /// the order they appear for each `(row, col)`.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<Triplet>) -> Result<Self> {
        if let Some(t) = triplets.iter().find(|t| t.row >= nrows || t.col >= ncols) {
            return Err(Error::DimensionMismatch(format!(
                "triplet ({}, {}) outside {nrows}x{ncols}",
                t.row, t.col
            )));
        }
        triplets.sort_by_key(|t| (t.row, t.col));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for t in triplets {
            if last == Some((t.row, t.col)) {
                *values.last_mut().unwrap() += t.value;
            } else {
                col_idx.push(t.col);
                values.push(t.value);
                row_ptr[t.row + 1] += 1;
                last = Some((t.row, t.col));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Index of entry `(i, j)` in the value array, if it is stored.
    pub(crate) fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].binary_search(&j).ok().map(|k| r.start + k)
    }

    /// `(col, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn iter(&self) -> impl Iterator<Item = Triplet> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| Triplet::new(i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(p) => self.values[r.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "mul_vec dimension");
        (0..self.nrows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let triplets = self.iter().map(|t| Triplet::new(t.col, t.row, t.value)).collect();
        Self::from_triplets(self.ncols, self.nrows, triplets).expect("transpose stays in range")
    }

    pub fn scale(mut self, s: f64) -> Self {
        self.values.iter_mut().for_each(|v| *v *= s);
        self
    }

    /// `a * self + b * other`.
    pub fn linear_combination(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if (self.nrows, self.ncols) != (other.nrows, other.ncols) {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.nrows, self.ncols, other.nrows, other.ncols
            )));
        }
        let mut t = Vec::with_capacity(self.nnz() + other.nnz());
        push_block(&mut t, self, 0, 0, a);
        push_block(&mut t, other, 0, 0, b);
        Self::from_triplets(self.nrows, self.ncols, t)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for t in self.iter() {
            d[t.row][t.col] = t.value;
        }
        d
    }

    fn same_pattern(&self, other: &Self) -> bool {
        self.nrows == other.nrows
            && self.ncols == other.ncols
            && self.row_ptr == other.row_ptr
            && self.col_idx == other.col_idx
    }

    // CSR of A is the CSC of A^T.
    fn transposed_csc(&self) -> SparseColMatRef<'_, usize, f64> {
        let sym = SymbolicSparseColMatRef::new_checked(
            self.ncols,
            self.nrows,
            &self.row_ptr,
            None,
            &self.col_idx,
        );
        SparseColMatRef::new(sym, &self.values)
    }
}

/// Appends `scale * m` shifted by `(row_offset, col_offset)`.
pub fn push_block(
    out: &mut Vec<Triplet>,
    m: &SparseMatrix,
    row_offset: usize,
    col_offset: usize,
    scale: f64,
) {
    out.extend(
        m.iter()
            .map(|t| Triplet::new(t.row + row_offset, t.col + col_offset, scale * t.value)),
    );
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn relative_residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    let r: Vec<f64> = ax.iter().zip(b).map(|(p, q)| p - q).collect();
    let nb = norm2(b);
    if nb == 0.0 { norm2(&r) } else { norm2(&r) / nb }
}

/// Outcome of a solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub size: usize,
    pub residual: f64,
    pub refinement_steps: usize,
}

/// Sparse LU solver that reuses the symbolic factorization while the
/// sparsity pattern stays the same. Runs sequentially, so repeated solves
/// of identical input are bit-identical.
///
/// With [`LuSolver::reusing_factors`] the numeric factors of an earlier
/// matrix are tried first as a preconditioner for iterative refinement,
/// and the matrix is refactored only when that fails to converge quickly.
/// This pays off for time stepping, where the matrix changes by `O(tau)`.
#[derive(Default)]
pub struct LuSolver {
    symbolic: Option<(SparseMatrix, SymbolicLu<usize>)>,
    numeric: Option<NumericLu<usize, f64>>,
    reuse_factors: bool,
}

/// Refinement sweeps allowed with stale factors before refactoring.
const STALE_REFINEMENT_STEPS: usize = 6;

impl LuSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reusing_factors() -> Self {
        Self {
            reuse_factors: true,
            ..Self::default()
        }
    }

    /// Solves `A x_r = b_r` for every right-hand side.
    pub fn solve_many(&mut self, a: &SparseMatrix, rhs: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, SolveStats)> {
        let n = a.nrows();
        let fail = |reason: String| Error::SolverFailure { size: n, reason };
        if a.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "solve needs a square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if let Some(b) = rhs.iter().find(|b| b.len() != n) {
            return Err(Error::DimensionMismatch(format!(
                "right-hand side length {} for {n} unknowns",
                b.len()
            )));
        }
        if a.values.iter().any(|v| !v.is_finite()) {
            return Err(fail("matrix has non-finite entries".into()));
        }
        if n == 0 {
            let stats = SolveStats { size: 0, residual: 0.0, refinement_steps: 0 };
            return Ok((rhs.to_vec(), stats));
        }

        let at = a.transposed_csc();
        let same = matches!(&self.symbolic, Some((p, _)) if p.same_pattern(a));
        if !same {
            let symbolic = factorize_symbolic_lu(at.symbolic(), Default::default())
                .map_err(|e| fail(format!("symbolic factorization: {e:?}")))?;
            let mut pattern = a.clone();
            pattern.values.clear();
            self.symbolic = Some((pattern, symbolic));
            self.numeric = None;
        }
        let tol = if n > LARGE_SYSTEM { RESIDUAL_TOL_LARGE } else { RESIDUAL_TOL };

        if self.reuse_factors && self.numeric.is_some() {
            if let Some(done) = self.refine_all(a, rhs, tol, tol, STALE_REFINEMENT_STEPS)? {
                return Ok(done);
            }
        }

        let symbolic = &self.symbolic.as_ref().unwrap().1;
        let mut numeric = self.numeric.take().unwrap_or_default();
        let mut buf = MemBuffer::try_new(symbolic.factorize_numeric_lu_scratch::<f64>(Par::Seq, Default::default()))
            .map_err(|e| fail(format!("workspace allocation: {e:?}")))?;
        symbolic
            .factorize_numeric_lu(&mut numeric, at, Par::Seq, MemStack::new(&mut buf), Default::default())
            .map_err(|e| match e {
                faer::sparse::linalg::LuError::SymbolicSingular { index } => {
                    fail(format!("structurally singular at pivot {index}"))
                }
                other => fail(format!("numeric factorization: {other:?}")),
            })?;
        self.numeric = Some(numeric);

        match self.refine_all(a, rhs, tol * 1e-2, tol, MAX_REFINEMENT_STEPS)? {
            Some(done) => Ok(done),
            None => {
                let worst = rhs
                    .iter()
                    .map(|b| {
                        let mut x = b.clone();
                        self.apply(&mut x);
                        relative_residual(a, &x, b)
                    })
                    .fold(0.0, f64::max);
                Err(fail(format!(
                    "relative residual {worst:e} exceeds {tol:e} (matrix singular to working precision)"
                )))
            }
        }
    }

    fn apply(&self, x: &mut [f64]) {
        let symbolic = &self.symbolic.as_ref().unwrap().1;
        let numeric = self.numeric.as_ref().unwrap();
        let lu = LuRef::new_unchecked(symbolic, numeric);
        let mut buf = MemBuffer::new(symbolic.solve_transpose_in_place_scratch::<f64>(1, Par::Seq));
        let len = x.len();
        let m = MatMut::from_column_major_slice_mut(x, len, 1);
        lu.solve_transpose_in_place_with_conj(Conj::No, m, Par::Seq, MemStack::new(&mut buf));
    }

    /// Iterative refinement with the current factors, aiming at `target`;
    /// `None` when some right-hand side misses `accept` within `max_steps`
    /// sweeps.
    fn refine_all(
        &self,
        a: &SparseMatrix,
        rhs: &[Vec<f64>],
        target: f64,
        accept: f64,
        max_steps: usize,
    ) -> Result<Option<(Vec<Vec<f64>>, SolveStats)>> {
        let mut out = Vec::with_capacity(rhs.len());
        let mut worst = SolveStats { size: a.nrows(), residual: 0.0, refinement_steps: 0 };
        for b in rhs {
            let mut x = b.clone();
            self.apply(&mut x);
            let mut residual = relative_residual(a, &x, b);
            let mut steps = 0;
            while !(residual <= target) && steps < max_steps && residual.is_finite() {
                let ax = a.mul_vec(&x);
                let mut d: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
                self.apply(&mut d);
                let candidate: Vec<f64> = x.iter().zip(&d).map(|(p, q)| p + q).collect();
                let new_residual = relative_residual(a, &candidate, b);
                steps += 1;
                if !(new_residual < residual) {
                    break;
                }
                x = candidate;
                residual = new_residual;
            }
            if !(residual <= accept) {
                return Ok(None);
            }
            worst.residual = worst.residual.max(residual);
            worst.refinement_steps = worst.refinement_steps.max(steps);
            out.push(x);
        }
        Ok(Some((out, worst)))
    }

    pub fn solve(&mut self, a: &SparseMatrix, b: &[f64]) -> Result<(Vec<f64>, SolveStats)> {
        let (mut x, stats) = self.solve_many(a, &[b.to_vec()])?;
        Ok((x.pop().unwrap(), stats))
    }
}

/// One-shot solve of `A x = b`.
pub fn solve_sparse(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    LuSolver::new().solve(a, b).map(|(x, _)| x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_solve() {
        let b = vec![1.5, -2.0, 3.25, 0.0];
        assert_eq!(solve_sparse(&SparseMatrix::identity(4), &b).unwrap(), b);
    }

    #[test]
    fn two_by_two() {
        let a = SparseMatrix::from_triplets(
            2,
            2,
            vec![
                Triplet::new(0, 0, 2.0),
                Triplet::new(0, 1, 1.0),
                Triplet::new(1, 0, 1.0),
                Triplet::new(1, 1, 2.0),
            ],
        )
        .unwrap();
        let x = solve_sparse(&a, &[3.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn nonsymmetric_solve() {
        let a = SparseMatrix::from_triplets(
            3,
            3,
            vec![
                Triplet::new(0, 1, 4.0),
                Triplet::new(1, 0, 1.0),
                Triplet::new(1, 2, -2.0),
                Triplet::new(2, 2, 3.0),
                Triplet::new(2, 0, 1.0),
            ],
        )
        .unwrap();
        let b = [1.0, 2.0, 3.0];
        let x = solve_sparse(&a, &b).unwrap();
        assert!(relative_residual(&a, &x, &b) < 1e-14);
    }

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64) / ((1u64 << 53) as f64)
    }

    #[test]
    fn random_spd_residual() {
        let n = 50;
        let mut seed = 7u64;
        let mut t = Vec::new();
        // B^T B + n I with sparse B
        let mut bm = vec![vec![0.0; n]; n];
        for row in bm.iter_mut() {
            for _ in 0..5 {
                let j = (lcg(&mut seed) * n as f64) as usize;
                row[j] = lcg(&mut seed) - 0.5;
            }
        }
        for i in 0..n {
            for j in 0..n {
                let v: f64 = (0..n).map(|k| bm[k][i] * bm[k][j]).sum::<f64>() + if i == j { 1.0 } else { 0.0 };
                if v != 0.0 {
                    t.push(Triplet::new(i, j, v));
                }
            }
        }
        let a = SparseMatrix::from_triplets(n, n, t).unwrap();
        let b: Vec<f64> = (0..n).map(|_| lcg(&mut seed)).collect();
        let x = solve_sparse(&a, &b).unwrap();
        assert!(relative_residual(&a, &x, &b) <= 1e-10);
    }

    #[test]
    fn singular_reported() {
        let a = SparseMatrix::from_triplets(
            2,
            2,
            vec![
                Triplet::new(0, 0, 1.0),
                Triplet::new(0, 1, 1.0),
                Triplet::new(1, 0, 1.0),
                Triplet::new(1, 1, 1.0),
            ],
        )
        .unwrap();
        let err = solve_sparse(&a, &[1.0, 2.0]).unwrap_err();
        assert!(matches!(err, Error::SolverFailure { size: 2, .. }), "{err}");
    }

    #[test]
    fn out_of_range_triplet() {
        assert!(SparseMatrix::from_triplets(2, 2, vec![Triplet::new(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn symbolic_reuse_gives_same_answer() {
        let mk = |d: f64| {
            SparseMatrix::from_triplets(
                2,
                2,
                vec![
                    Triplet::new(0, 0, d),
                    Triplet::new(0, 1, 1.0),
                    Triplet::new(1, 0, 1.0),
                    Triplet::new(1, 1, d),
                ],
            )
            .unwrap()
        };
        let mut solver = LuSolver::new();
        let (x1, _) = solver.solve(&mk(3.0), &[4.0, 4.0]).unwrap();
        let (x2, _) = solver.solve(&mk(5.0), &[6.0, 6.0]).unwrap();
        assert!((x1[0] - 1.0).abs() < 1e-14 && (x2[1] - 1.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn triplet_order_does_not_matter(entries in prop::collection::vec((0usize..6, 0usize..6, -4i32..5), 1..40)) {
            let t: Vec<Triplet> = entries.iter().map(|&(i, j, v)| Triplet::new(i, j, v as f64)).collect();
            let mut rev = t.clone();
            rev.reverse();
            let a = SparseMatrix::from_triplets(6, 6, t).unwrap();
            let b = SparseMatrix::from_triplets(6, 6, rev).unwrap();
            prop_assert_eq!(a.to_dense(), b.to_dense());
        }
    }

    #[test]
    fn stale_factors_still_meet_tolerance() {
        let n = 40;
        let build = |shift: f64, skew: f64| {
            let mut t = Vec::new();
            for i in 0..n {
                t.push(Triplet::new(i, i, 4.0 + shift));
                if i + 1 < n {
                    t.push(Triplet::new(i, i + 1, -1.0 + skew));
                    t.push(Triplet::new(i + 1, i, -1.0 - skew));
                }
            }
            SparseMatrix::from_triplets(n, n, t).unwrap()
        };
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut solver = LuSolver::reusing_factors();
        for (shift, skew) in [(0.0, 0.0), (1e-4, 1e-5), (3.0, 0.9), (-1.0, -0.5)] {
            let a = build(shift, skew);
            let (x, stats) = solver.solve(&a, &b).unwrap();
            assert!(stats.residual <= RESIDUAL_TOL);
            let fresh = solve_sparse(&a, &b).unwrap();
            for (p, q) in x.iter().zip(&fresh) {
                assert!((p - q).abs() <= 1e-11 * (1.0 + q.abs()));
            }
        }
    }
}
