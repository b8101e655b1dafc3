//! Direct solution of the saddle-point system.
//!
//! `A` is factored by sparse Cholesky (sparse LU if it is not positive
//! definite), the dual unknowns come from the dense Schur complement
//! `S = B_constraintᵀ A⁻¹ B_test`, and a few steps of iterative refinement
//! on the full block system follow. If `A` itself is singular the full
//! block matrix is factored by sparse LU instead.

use faer::linalg::solvers::{Solve, SolveCore};
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use faer::{Conj, Mat, MatMut, Side};

use crate::assembly::SaddleSystem;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Primal and dual coefficients with the relative residual
/// `‖K z − b‖₂ / ‖b‖₂` of the block system.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub primal: Vec<f64>,
    pub dual: Vec<f64>,
    pub residual: f64,
}

const SCHUR_BLOCK: usize = 64;
const REFINEMENT_STEPS: usize = 3;
const PIVOT_TOLERANCE: f64 = 1e-14;

/// Factorization of the primal block `A`.
pub enum PrimalFactor {
    Cholesky(Llt<usize, f64>),
    Lu(Lu<usize, f64>),
}

impl std::fmt::Debug for PrimalFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PrimalFactor::Cholesky(_) => "PrimalFactor::Cholesky",
            PrimalFactor::Lu(_) => "PrimalFactor::Lu",
        })
    }
}

/// CSR arrays read as CSC describe the transpose.
fn csc_of_transpose(m: &CsrMatrix, keep: impl Fn(usize, usize) -> bool) -> Result<SparseColMat<usize, f64>> {
    let mut col_ptr = Vec::with_capacity(m.nrows() + 1);
    let mut row_idx = Vec::new();
    let mut values = Vec::new();
    col_ptr.push(0);
    for i in 0..m.nrows() {
        let (cols, vals) = m.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            if keep(i, j) {
                row_idx.push(j);
                values.push(v);
            }
        }
        col_ptr.push(row_idx.len());
    }
    let symbolic = SymbolicSparseColMat::new_checked(m.ncols(), m.nrows(), col_ptr, None, row_idx);
    Ok(SparseColMat::new(symbolic, values))
}

impl PrimalFactor {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Argument("primal block must be square".into()));
        }
        let lower = csc_of_transpose(a, |i, j| j >= i)?;
        if let Ok(llt) = lower.sp_cholesky(Side::Lower) {
            let f = PrimalFactor::Cholesky(llt);
            if f.is_accurate(a) {
                return Ok(f);
            }
        }
        let full = csc_of_transpose(&a.transpose(), |_, _| true)?;
        if let Ok(lu) = full.sp_lu() {
            let f = PrimalFactor::Lu(lu);
            if f.is_accurate(a) {
                return Ok(f);
            }
        }
        Err(Error::SingularSystem { context: "primal block".into() })
    }

    /// Probe solve catching zero or tiny pivots that the factorization accepted.
    fn is_accurate(&self, a: &CsrMatrix) -> bool {
        let b: Vec<f64> = (0..a.nrows()).map(|i| 1.0 + (i % 7) as f64 / 7.0).collect();
        let x = self.solve_vec(&b);
        if !x.iter().all(|v| v.is_finite()) {
            return false;
        }
        let r: Vec<f64> = a.mul_vec(&x).iter().zip(&b).map(|(ax, b)| ax - b).collect();
        norm(&r) <= 1e-8 * norm(&b)
    }

    pub fn solve_in_place(&self, rhs: MatMut<'_, f64>) {
        match self {
            PrimalFactor::Cholesky(f) => f.solve_in_place_with_conj(Conj::No, rhs),
            PrimalFactor::Lu(f) => f.solve_in_place_with_conj(Conj::No, rhs),
        }
    }

    fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut m = Mat::from_fn(b.len(), 1, |i, _| b[i]);
        self.solve_in_place(m.as_mut());
        (0..b.len()).map(|i| m[(i, 0)]).collect()
    }
}

/// Dense LU of the Schur complement.
struct SchurFactor {
    lu: faer::linalg::solvers::PartialPivLu<f64>,
}

fn schur_factor(system: &SaddleSystem, primal: &PrimalFactor) -> Result<Option<SchurFactor>> {
    let n = system.num_primal();
    let m = system.num_dual();
    if m == 0 {
        return Ok(None);
    }
    let bt_cols = system.b_test.transpose();
    let bc_cols = system.b_constraint.transpose();
    let mut s = Mat::<f64>::zeros(m, m);
    let mut start = 0;
    while start < m {
        let k = SCHUR_BLOCK.min(m - start);
        let mut x = Mat::<f64>::zeros(n, k);
        for c in 0..k {
            let (rows, vals) = bt_cols.row(start + c);
            for (&r, &v) in rows.iter().zip(vals) {
                x[(r, c)] = v;
            }
        }
        primal.solve_in_place(x.as_mut());
        for i in 0..m {
            let (rows, vals) = bc_cols.row(i);
            for c in 0..k {
                s[(i, start + c)] = rows.iter().zip(vals).map(|(&r, v)| v * x[(r, c)]).sum();
            }
        }
        start += k;
    }
    let scale = (0..m).flat_map(|j| (0..m).map(move |i| (i, j))).fold(0.0f64, |a, (i, j)| a.max(s[(i, j)].abs()));
    let lu = s.partial_piv_lu();
    let u = lu.U();
    let min_pivot = (0..m).fold(f64::INFINITY, |a, i| a.min(u[(i, i)].abs()));
    if !(scale > 0.0) || !(min_pivot > PIVOT_TOLERANCE * scale) {
        return Err(Error::SingularSystem {
            context: format!("{}: Schur complement pivot {min_pivot:.3e} vs scale {scale:.3e}", system.label),
        });
    }
    Ok(Some(SchurFactor { lu }))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Block residual `b − K z`.
fn block_residual(system: &SaddleSystem, u: &[f64], lambda: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (top, bottom) = system.apply(u, lambda);
    (
        system.rhs.iter().zip(&top).map(|(b, k)| b - k).collect(),
        system.dual_rhs.iter().zip(&bottom).map(|(b, k)| b - k).collect(),
    )
}

fn relative_residual(system: &SaddleSystem, u: &[f64], lambda: &[f64]) -> f64 {
    let (r1, r2) = block_residual(system, u, lambda);
    let r = (norm(&r1).powi(2) + norm(&r2).powi(2)).sqrt();
    let b = (norm(&system.rhs).powi(2) + norm(&system.dual_rhs).powi(2)).sqrt();
    if b > 0.0 {
        r / b
    } else {
        r
    }
}

/// One application of the block inverse via the Schur complement.
fn schur_apply(
    system: &SaddleSystem,
    primal: &PrimalFactor,
    schur: Option<&SchurFactor>,
    f: &[f64],
    g: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let y = primal.solve_vec(f);
    let lambda = match schur {
        None => Vec::new(),
        Some(sf) => {
            let t = system.b_constraint.mul_transpose_vec(&y);
            let rhs = Mat::from_fn(g.len(), 1, |i, _| t[i] - g[i]);
            let sol = sf.lu.solve(&rhs);
            (0..g.len()).map(|i| sol[(i, 0)]).collect()
        }
    };
    let u = if lambda.is_empty() {
        y
    } else {
        let bl = system.b_test.mul_vec(&lambda);
        let corr: Vec<f64> = f.iter().zip(&bl).map(|(a, b)| a - b).collect();
        primal.solve_vec(&corr)
    };
    (u, lambda)
}

fn check_shapes(system: &SaddleSystem) -> Result<()> {
    let (n, m) = (system.a.nrows(), system.b_test.ncols());
    let ok = system.a.ncols() == n
        && system.b_test.nrows() == n
        && system.b_constraint.nrows() == n
        && system.b_constraint.ncols() == m
        && system.rhs.len() == n
        && system.dual_rhs.len() == m;
    if ok {
        Ok(())
    } else {
        Err(Error::Argument(format!("{}: inconsistent block dimensions", system.label)))
    }
}

/// Solves the block system.
pub fn solve(system: &SaddleSystem) -> Result<Solution> {
    check_shapes(system)?;
    match PrimalFactor::new(&system.a) {
        Ok(primal) => solve_with(system, &primal),
        Err(Error::SingularSystem { .. }) => solve_monolithic(system),
        Err(e) => Err(e),
    }
}

/// Solves the block system reusing a factorization of `system.a`.
pub fn solve_with(system: &SaddleSystem, primal: &PrimalFactor) -> Result<Solution> {
    check_shapes(system)?;
    let schur = schur_factor(system, primal)?;
    let (mut u, mut lambda) = schur_apply(system, primal, schur.as_ref(), &system.rhs, &system.dual_rhs);
    let mut residual = relative_residual(system, &u, &lambda);
    for _ in 0..REFINEMENT_STEPS {
        if !residual.is_finite() || residual <= 1e-15 {
            break;
        }
        let (r1, r2) = block_residual(system, &u, &lambda);
        let (du, dl) = schur_apply(system, primal, schur.as_ref(), &r1, &r2);
        let nu: Vec<f64> = u.iter().zip(&du).map(|(a, b)| a + b).collect();
        let nl: Vec<f64> = lambda.iter().zip(&dl).map(|(a, b)| a + b).collect();
        let nr = relative_residual(system, &nu, &nl);
        if !(nr < residual) {
            break;
        }
        (u, lambda, residual) = (nu, nl, nr);
    }
    if !residual.is_finite() {
        return Err(Error::SingularSystem { context: format!("{}: non-finite solution", system.label) });
    }
    Ok(Solution { primal: u, dual: lambda, residual })
}

/// Sparse LU of the assembled block matrix.
fn solve_monolithic(system: &SaddleSystem) -> Result<Solution> {
    let (n, m) = (system.num_primal(), system.num_dual());
    let mut trip = Vec::with_capacity(system.a.nnz() + 2 * system.b_test.nnz());
    for i in 0..n {
        let (cols, vals) = system.a.row(i);
        trip.extend(cols.iter().zip(vals).map(|(&j, &v)| (i, j, v)));
        let (cols, vals) = system.b_test.row(i);
        trip.extend(cols.iter().zip(vals).map(|(&j, &v)| (i, n + j, v)));
        let (cols, vals) = system.b_constraint.row(i);
        trip.extend(cols.iter().zip(vals).map(|(&j, &v)| (n + j, i, v)));
    }
    let k = CsrMatrix::from_triplets(n + m, n + m, trip);
    let csc = csc_of_transpose(&k.transpose(), |_, _| true)?;
    let singular = || Error::SingularSystem { context: format!("{}: block matrix", system.label) };
    let lu = csc.sp_lu().map_err(|_| singular())?;
    let b: Vec<f64> = system.rhs.iter().chain(&system.dual_rhs).copied().collect();
    let mut z = Mat::from_fn(n + m, 1, |i, _| b[i]);
    lu.solve_in_place(z.as_mut());
    let u: Vec<f64> = (0..n).map(|i| z[(i, 0)]).collect();
    let lambda: Vec<f64> = (0..m).map(|i| z[(n + i, 0)]).collect();
    let residual = relative_residual(system, &u, &lambda);
    if !residual.is_finite() || residual > 1e-6 {
        return Err(singular());
    }
    Ok(Solution { primal: u, dual: lambda, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_constrained, DofMap, ProblemData, Strategy};
    use crate::multipatch::{build_two_patch, Case, DualVariant};

    fn tiny(a: f64, b: f64, c: f64) -> SaddleSystem {
        SaddleSystem {
            a: CsrMatrix::from_triplets(1, 1, vec![(0, 0, a)]),
            b_test: CsrMatrix::from_triplets(1, 1, vec![(0, 0, b)]),
            b_constraint: CsrMatrix::from_triplets(1, 1, vec![(0, 0, c)]),
            rhs: vec![1.0],
            dual_rhs: vec![2.0],
            symmetric: b == c,
            dofmap: DofMap {
                patch_offsets: vec![0],
                interface_offsets: vec![0],
                num_primal: 1,
                num_dual: 1,
                constrained: vec![],
            },
            label: "tiny".into(),
        }
    }

    #[test]
    fn one_by_one_blocks() {
        // [[2, 1], [1, 0]] (u, λ) = (1, 2)  ->  u = 2, λ = -3
        let s = solve(&tiny(2.0, 1.0, 1.0)).unwrap();
        assert!((s.primal[0] - 2.0).abs() < 1e-14 && (s.dual[0] + 3.0).abs() < 1e-14);
        assert!(s.residual < 1e-15);
        assert!(matches!(solve(&tiny(2.0, 0.0, 1.0)), Err(Error::SingularSystem { .. })));
        // singular A, regular block matrix
        let s = solve(&tiny(0.0, 1.0, 1.0)).unwrap();
        assert!((s.primal[0] - 2.0).abs() < 1e-14 && (s.dual[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn small_mortar_system() {
        let dec = build_two_patch(Case::M1, 1, 1, false).unwrap();
        let sys = assemble_constrained(&dec, &ProblemData::constant(1.0, 0.0, 1.0), DualVariant::M0, Strategy::Exact, 3)
            .unwrap();
        let a = solve(&sys).unwrap();
        assert!(a.residual <= 1e-12);
        let b = solve(&sys).unwrap();
        assert_eq!(a, b);
    }
}
