//! Assembly of the mortar saddle-point system and its inexact-quadrature
//! variants.
//!
//! Volume integrals use `p + 2` Gauss points per direction and element.
//! Interface integrals use one of three strategies: the merged mesh (exact
//! for piecewise polynomial integrands), the slave mesh only, or the
//! non-symmetric combination where the master trace in the test equation is
//! integrated on the master mesh.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use faer::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{collocation_matrix, Face, LocalEval, Patch, Point};
use crate::multipatch::{multiplier_space, BoundaryKind, Decomposition, DualVariant, Interface, MultiplierSpace};
use crate::quadrature::{gauss_legendre, master_rule, merged_rule, slave_rule, InterfaceRule};
use crate::sparse::CsrMatrix;

pub type ScalarField = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>;

/// Coefficients, load and (optionally) a manufactured exact solution of
/// `-div(α ∇u) + β u = f`.
///
/// Dirichlet data is taken from the exact solution (zero without one);
/// Neumann data is `α ∇u·n` from the exact gradient (zero without one).
#[derive(Clone)]
pub struct ProblemData {
    pub alpha: ScalarField,
    pub beta: ScalarField,
    pub source: ScalarField,
    pub exact: Option<ScalarField>,
    pub exact_gradient: Option<VectorField>,
}

impl fmt::Debug for ProblemData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemData")
            .field("exact", &self.exact.is_some())
            .field("exact_gradient", &self.exact_gradient.is_some())
            .finish()
    }
}

impl ProblemData {
    pub fn constant(alpha: f64, beta: f64, source: f64) -> Self {
        Self {
            alpha: Arc::new(move |_| alpha),
            beta: Arc::new(move |_| beta),
            source: Arc::new(move |_| source),
            exact: None,
            exact_gradient: None,
        }
    }

    pub fn dirichlet_value(&self, x: Point) -> f64 {
        self.exact.as_ref().map_or(0.0, |u| u(x))
    }

    /// `α ∇u · n` at `x`, zero without an exact gradient.
    pub fn flux(&self, x: Point, normal: Point) -> f64 {
        self.exact_gradient.as_ref().map_or(0.0, |g| {
            let d = g(x);
            (self.alpha)(x) * (d[0] * normal[0] + d[1] * normal[1])
        })
    }
}

/// Interface-quadrature strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Merged-mesh rule with `p + 2` points per segment.
    Exact,
    /// Every interface integral on the slave mesh.
    SlaveOnly,
    /// Master mesh for the master trace of the test equation, slave mesh elsewhere.
    NonSymmetric,
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(Strategy::Exact),
            "slave" | "slave-only" | "slaveonly" => Ok(Strategy::SlaveOnly),
            "nonsymmetric" | "non-symmetric" => Ok(Strategy::NonSymmetric),
            _ => Err(Error::Config(format!("unknown strategy '{s}'"))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Exact => "exact",
            Strategy::SlaveOnly => "slave",
            Strategy::NonSymmetric => "nonsymmetric",
        })
    }
}

/// Global numbering of primal and dual unknowns.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub patch_offsets: Vec<usize>,
    pub interface_offsets: Vec<usize>,
    pub num_primal: usize,
    pub num_dual: usize,
    /// Sorted global primal indices on Dirichlet faces.
    pub constrained: Vec<usize>,
}

impl DofMap {
    pub fn new(dec: &Decomposition, spaces: &[MultiplierSpace]) -> Self {
        let patch_offsets = dec.patch_offsets();
        let mut interface_offsets = Vec::with_capacity(spaces.len());
        let mut num_dual = 0;
        for m in spaces {
            interface_offsets.push(num_dual);
            num_dual += m.dim();
        }
        let mut constrained = Vec::new();
        for (k, patch) in dec.patches.iter().enumerate() {
            for face in Face::ALL {
                if dec.boundary[k][face.index()] == BoundaryKind::Dirichlet {
                    constrained.extend(patch.face_dofs(face).into_iter().map(|d| d + patch_offsets[k]));
                }
            }
        }
        constrained.sort_unstable();
        constrained.dedup();
        Self { patch_offsets, interface_offsets, num_primal: dec.num_primal(), num_dual, constrained }
    }
}

/// Block system `[[A, B_test], [B_constraintᵀ, 0]] (u, λ) = (rhs, dual_rhs)`.
#[derive(Debug, Clone)]
pub struct SaddleSystem {
    pub a: CsrMatrix,
    pub b_test: CsrMatrix,
    pub b_constraint: CsrMatrix,
    pub rhs: Vec<f64>,
    pub dual_rhs: Vec<f64>,
    pub symmetric: bool,
    pub dofmap: DofMap,
    /// Strategy/pairing description used in diagnostics.
    pub label: String,
}

impl SaddleSystem {
    pub fn num_primal(&self) -> usize {
        self.a.nrows()
    }

    pub fn num_dual(&self) -> usize {
        self.b_test.ncols()
    }

    /// `K z` for `z = (u, λ)`.
    pub fn apply(&self, u: &[f64], lambda: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut top = self.a.mul_vec(u);
        for (t, b) in top.iter_mut().zip(self.b_test.mul_vec(lambda)) {
            *t += b;
        }
        (top, self.b_constraint.mul_transpose_vec(u))
    }
}

/// Univariate values and first derivatives at the Gauss points of one span.
pub(crate) struct SpanTable {
    pub(crate) values: Vec<Vec<f64>>,
    pub(crate) derivs: Vec<Vec<f64>>,
}

pub(crate) fn span_table(kv: &crate::spline::KnotVector, span: usize, a: f64, b: f64, rule: &[(f64, f64)]) -> SpanTable {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut values = Vec::with_capacity(rule.len());
    let mut derivs = Vec::with_capacity(rule.len());
    for &(x, _) in rule {
        let d = kv.basis_derivs_in_span(span, mid + half * x, 1.min(kv.degree()));
        values.push(d[0].clone());
        derivs.push(d.get(1).cloned().unwrap_or_else(|| vec![0.0; kv.degree() + 1]));
    }
    SpanTable { values, derivs }
}

/// Contiguous ranges of functions whose supports overlap function `i`.
fn overlap_ranges(kv: &crate::spline::KnotVector) -> Vec<(usize, usize)> {
    let p = kv.degree();
    let u = kv.knots();
    let n = kv.dim();
    (0..n)
        .map(|i| {
            let overlaps = |j: usize| u[i].max(u[j]) < u[i + p + 1].min(u[j + p + 1]);
            let lo = (0..=i).find(|&j| overlaps(j)).unwrap_or(i);
            let hi = (i..n).rev().find(|&j| overlaps(j)).unwrap_or(i);
            (lo, hi)
        })
        .collect()
}

/// Stiffness/mass matrix and load vector of one patch.
fn assemble_patch(patch: &Patch, problem: &ProblemData) -> Result<(CsrMatrix, Vec<f64>)> {
    let space = patch.field_space();
    let kv1 = space.knot_vector(0);
    let kv2 = space.knot_vector(1);
    let [n1, n2] = space.dims();
    let p = space.degree();
    let w = p + 1;
    let r1 = overlap_ranges(kv1);
    let r2 = overlap_ranges(kv2);

    let mut row_ptr = Vec::with_capacity(n1 * n2 + 1);
    row_ptr.push(0usize);
    for i2 in 0..n2 {
        for i1 in 0..n1 {
            let len = (r1[i1].1 - r1[i1].0 + 1) * (r2[i2].1 - r2[i2].0 + 1);
            row_ptr.push(row_ptr.last().unwrap() + len);
        }
    }
    let mut col_idx = Vec::with_capacity(*row_ptr.last().unwrap());
    for i2 in 0..n2 {
        for i1 in 0..n1 {
            for j2 in r2[i2].0..=r2[i2].1 {
                for j1 in r1[i1].0..=r1[i1].1 {
                    col_idx.push(j1 + n1 * j2);
                }
            }
        }
    }
    let mut mat = CsrMatrix::from_pattern(n1 * n2, n1 * n2, row_ptr, col_idx);
    let mut rhs = vec![0.0; n1 * n2];

    let gauss = gauss_legendre(p + 2)?;
    let rule: Vec<(f64, f64)> = gauss.points().iter().copied().zip(gauss.weights().iter().copied()).collect();
    let spans1 = kv1.element_spans();
    let spans2 = kv2.element_spans();
    let tab1: Vec<SpanTable> = spans1
        .iter()
        .map(|&s| span_table(kv1, s, kv1.knots()[s], kv1.knots()[s + 1], &rule))
        .collect();
    let tab2: Vec<SpanTable> = spans2
        .iter()
        .map(|&s| span_table(kv2, s, kv2.knots()[s], kv2.knots()[s + 1], &rule))
        .collect();

    let nloc = w * w;
    let mut kloc = vec![0.0; nloc * nloc];
    let mut floc = vec![0.0; nloc];
    let mut ev = LocalEval::default();
    let mut grads = vec![[0.0; 2]; nloc];
    let field = patch.field();
    for (e2, &s2) in spans2.iter().enumerate() {
        let h2 = 0.5 * (kv2.knots()[s2 + 1] - kv2.knots()[s2]);
        for (e1, &s1) in spans1.iter().enumerate() {
            let h1 = 0.5 * (kv1.knots()[s1 + 1] - kv1.knots()[s1]);
            kloc.iter_mut().for_each(|v| *v = 0.0);
            floc.iter_mut().for_each(|v| *v = 0.0);
            for (q2, &(_, w2)) in rule.iter().enumerate() {
                for (q1, &(_, w1)) in rule.iter().enumerate() {
                    field.combine(
                        [s1, s2],
                        [&tab1[e1].values[q1], &tab1[e1].derivs[q1]],
                        [&tab2[e2].values[q2], &tab2[e2].derivs[q2]],
                        &mut ev,
                    )?;
                    let det = ev.det();
                    if det.abs() < 1e-14 {
                        return Err(Error::SingularGeometry { det, u: f64::NAN, v: f64::NAN });
                    }
                    let jac = ev.jac;
                    for (g, pg) in grads.iter_mut().zip(&ev.param_grads) {
                        *g = [
                            (jac[1][1] * pg[0] - jac[1][0] * pg[1]) / det,
                            (-jac[0][1] * pg[0] + jac[0][0] * pg[1]) / det,
                        ];
                    }
                    let dx = w1 * w2 * h1 * h2 * det.abs();
                    let alpha = (problem.alpha)(ev.x) * dx;
                    let beta = (problem.beta)(ev.x) * dx;
                    let f = (problem.source)(ev.x) * dx;
                    for a in 0..nloc {
                        let (ga, na) = (grads[a], ev.values[a]);
                        floc[a] += f * na;
                        let row = &mut kloc[a * nloc..(a + 1) * nloc];
                        for b in a..nloc {
                            let gb = grads[b];
                            row[b] += alpha * (ga[0] * gb[0] + ga[1] * gb[1]) + beta * na * ev.values[b];
                        }
                    }
                }
            }
            // scatter (symmetric completion)
            let first = [s1 - p, s2 - p];
            for a2 in 0..w {
                for a1 in 0..w {
                    let a = a1 + w * a2;
                    let (i1, i2) = (first[0] + a1, first[1] + a2);
                    let row = i1 + n1 * i2;
                    rhs[row] += floc[a];
                    let start = mat.row_ptr[row];
                    let len1 = r1[i1].1 - r1[i1].0 + 1;
                    for b2 in 0..w {
                        for b1 in 0..w {
                            let b = b1 + w * b2;
                            let v = if b >= a { kloc[a * nloc + b] } else { kloc[b * nloc + a] };
                            let (j1, j2) = (first[0] + b1, first[1] + b2);
                            let pos = start + (j2 - r2[i2].0) * len1 + (j1 - r1[i1].0);
                            mat.values[pos] += v;
                        }
                    }
                }
            }
        }
    }
    Ok((mat, rhs))
}

/// `∫ g φ_i` over the Neumann faces of one patch with `g = α ∇u·n`.
fn neumann_patch(patch: &Patch, tags: &[BoundaryKind; 4], problem: &ProblemData, rhs: &mut [f64]) -> Result<()> {
    if problem.exact_gradient.is_none() {
        return Ok(());
    }
    let gauss = gauss_legendre(patch.degree() + 2)?;
    for face in Face::ALL {
        if tags[face.index()] != BoundaryKind::Neumann {
            continue;
        }
        let kv = patch.field_space().knot_vector(face.tangent_dir());
        let dofs = patch.face_dofs(face);
        let bps = kv.breakpoints();
        for seg in bps.windows(2) {
            for (t, wq) in gauss.mapped(seg[0], seg[1]) {
                let (x, tan) = patch.face_point(face, t)?;
                let n = patch.outward_normal(face, t)?;
                let g = problem.flux(x, n) * wq * (tan[0] * tan[0] + tan[1] * tan[1]).sqrt();
                for (k, v) in face_trace_values(patch, face, t)? {
                    rhs[dofs[k]] += g * v;
                }
            }
        }
    }
    Ok(())
}

/// Nonzero trace functions at face parameter `t` as `(position along face, value)`.
fn face_trace_values(patch: &Patch, face: Face, t: f64) -> Result<Vec<(usize, f64)>> {
    let ev = patch.field().eval(face.point(t))?;
    let nd = face.normal_dir();
    let td = face.tangent_dir();
    let boundary_index = if face.fixed_value() == 0.0 { 0 } else { patch.field_space().dims()[nd] - 1 };
    let mut out = Vec::with_capacity(ev.width);
    for a2 in 0..ev.width {
        for a1 in 0..ev.width {
            let idx = [ev.first[0] + a1, ev.first[1] + a2];
            if idx[nd] == boundary_index {
                let v = ev.values[a1 + ev.width * a2];
                if v != 0.0 {
                    out.push((idx[td], v));
                }
            }
        }
    }
    Ok(out)
}

/// `A` and the load vector, Neumann contributions included.
pub fn assemble_bilinear(dec: &Decomposition, problem: &ProblemData) -> Result<(CsrMatrix, Vec<f64>)> {
    let mut blocks = Vec::with_capacity(dec.patches.len());
    let mut rhs = Vec::with_capacity(dec.num_primal());
    for (k, patch) in dec.patches.iter().enumerate() {
        let (a, mut f) = assemble_patch(patch, problem)?;
        neumann_patch(patch, &dec.boundary[k], problem, &mut f)?;
        blocks.push(a);
        rhs.extend(f);
    }
    Ok((CsrMatrix::block_diagonal(&blocks), rhs))
}

/// Which trace of the jump `v⁺ − v⁻` a coupling term carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceSide {
    Master,
    Slave,
}

/// Triplets of `± Σ_q w μ_j v^±_i · arc` for one side of the jump.
pub fn coupling_triplets(
    iface: &Interface,
    mspace: &MultiplierSpace,
    rule: &InterfaceRule,
    side: TraceSide,
    primal_offset: usize,
    dual_offset: usize,
) -> Result<Vec<(usize, usize, f64)>> {
    let (patch, face, sign) = match side {
        TraceSide::Master => (iface.master_patch(), iface.master_face, 1.0),
        TraceSide::Slave => (iface.slave_patch(), iface.slave_face, -1.0),
    };
    let dofs = patch.face_dofs(face);
    let mut trip = Vec::new();
    for q in &rule.points {
        let param = match side {
            TraceSide::Master => q.master_s,
            TraceSide::Slave => q.slave_t,
        };
        let traces = face_trace_values(patch, face, param)?;
        let (first, mu) = mspace.knot_vector.eval_basis(q.slave_t)?;
        let wq = sign * q.weight * q.arc;
        for (k, v) in &traces {
            for (j, m) in mu.iter().enumerate() {
                if *m != 0.0 {
                    trip.push((primal_offset + dofs[*k], dual_offset + first + j, wq * v * m));
                }
            }
        }
    }
    Ok(trip)
}

/// Coupling block `∫ μ_j (φ_i⁺ − φ_i⁻)` with both traces integrated by `rule`.
pub fn assemble_coupling(
    dec: &Decomposition,
    iface: &Interface,
    mspace: &MultiplierSpace,
    rule: &InterfaceRule,
) -> Result<CsrMatrix> {
    let off = dec.patch_offsets();
    let mut trip = coupling_triplets(iface, mspace, rule, TraceSide::Master, off[iface.master], 0)?;
    trip.extend(coupling_triplets(iface, mspace, rule, TraceSide::Slave, off[iface.slave], 0)?);
    Ok(CsrMatrix::from_triplets(dec.num_primal(), mspace.dim(), trip))
}

/// Coupling blocks `(B_test, B_constraint, symmetric)` for a strategy;
/// `gauss_points` is the number of points per element for the slave and
/// master rules.
pub fn assemble_coupling_blocks(
    dec: &Decomposition,
    spaces: &[MultiplierSpace],
    dofmap: &DofMap,
    strategy: Strategy,
    gauss_points: usize,
) -> Result<(CsrMatrix, CsrMatrix, bool)> {
    let off = &dofmap.patch_offsets;
    let mut test = Vec::new();
    let mut constraint = Vec::new();
    for ((iface, mspace), &doff) in dec.interfaces.iter().zip(spaces).zip(&dofmap.interface_offsets) {
        let (mo, so) = (off[iface.master], off[iface.slave]);
        match strategy {
            Strategy::Exact => {
                let p = iface.master_patch().degree().max(iface.slave_patch().degree());
                let rule = merged_rule(iface, p + 2)?;
                test.extend(coupling_triplets(iface, mspace, &rule, TraceSide::Master, mo, doff)?);
                test.extend(coupling_triplets(iface, mspace, &rule, TraceSide::Slave, so, doff)?);
            }
            Strategy::SlaveOnly => {
                let rule = slave_rule(iface, gauss_points)?;
                test.extend(coupling_triplets(iface, mspace, &rule, TraceSide::Master, mo, doff)?);
                test.extend(coupling_triplets(iface, mspace, &rule, TraceSide::Slave, so, doff)?);
            }
            Strategy::NonSymmetric => {
                let minus = slave_rule(iface, gauss_points)?;
                let plus = master_rule(iface, gauss_points)?;
                let slave_part = coupling_triplets(iface, mspace, &minus, TraceSide::Slave, so, doff)?;
                constraint.extend(coupling_triplets(iface, mspace, &minus, TraceSide::Master, mo, doff)?);
                constraint.extend(slave_part.iter().copied());
                test.extend(coupling_triplets(iface, mspace, &plus, TraceSide::Master, mo, doff)?);
                test.extend(slave_part);
            }
        }
    }
    let (nv, nm) = (dofmap.num_primal, dofmap.num_dual);
    let b_test = CsrMatrix::from_triplets(nv, nm, test);
    if strategy == Strategy::NonSymmetric {
        let bc = CsrMatrix::from_triplets(nv, nm, constraint);
        let sym = b_test.max_abs_diff(&bc) <= 1e-14;
        Ok((b_test, bc, sym))
    } else {
        Ok((b_test.clone(), b_test, true))
    }
}

fn system_label(dec: &Decomposition, spaces: &[MultiplierSpace], strategy: Strategy, gauss_points: usize) -> String {
    let p = dec.patches.iter().map(|p| p.degree()).max().unwrap_or(0);
    let dual_deg = spaces.first().map(|m| m.degree()).unwrap_or(0);
    format!("strategy={strategy} pairing=P{p}-P{dual_deg} gauss_points={gauss_points}")
}

/// Full saddle-point system for a strategy.
pub fn assemble_system(
    dec: &Decomposition,
    problem: &ProblemData,
    variant: DualVariant,
    strategy: Strategy,
    gauss_points: usize,
) -> Result<SaddleSystem> {
    let spaces: Vec<MultiplierSpace> =
        dec.interfaces.iter().map(|i| multiplier_space(i, variant)).collect::<Result<_>>()?;
    let dofmap = DofMap::new(dec, &spaces);
    let (a, rhs) = assemble_bilinear(dec, problem)?;
    let (b_test, b_constraint, symmetric) = assemble_coupling_blocks(dec, &spaces, &dofmap, strategy, gauss_points)?;
    let label = system_label(dec, &spaces, strategy, gauss_points);
    let nm = dofmap.num_dual;
    Ok(SaddleSystem { a, b_test, b_constraint, rhs, dual_rhs: vec![0.0; nm], symmetric, dofmap, label })
}

/// Replaces the coupling blocks of a Dirichlet-constrained system by those
/// of another strategy or rule; `A` and the primal right-hand side are kept.
pub fn recouple(
    mut system: SaddleSystem,
    dec: &Decomposition,
    variant: DualVariant,
    strategy: Strategy,
    gauss_points: usize,
    dirichlet: &[f64],
) -> Result<SaddleSystem> {
    let spaces: Vec<MultiplierSpace> =
        dec.interfaces.iter().map(|i| multiplier_space(i, variant)).collect::<Result<_>>()?;
    if DofMap::new(dec, &spaces) != system.dofmap {
        return Err(Error::Argument("system does not belong to this decomposition and multiplier space".into()));
    }
    let (bt, bc, sym) = assemble_coupling_blocks(dec, &spaces, &system.dofmap, strategy, gauss_points)?;
    system.b_test = bt;
    system.b_constraint = bc;
    system.symmetric = sym;
    system.dual_rhs = vec![0.0; system.dofmap.num_dual];
    system.label = system_label(dec, &spaces, strategy, gauss_points);
    let dofmap = system.dofmap.clone();
    apply_dirichlet(system, &dofmap, dirichlet)
}

/// Values at the constrained dofs by Greville interpolation of the data on
/// each Dirichlet face.
pub fn dirichlet_values(dec: &Decomposition, dofmap: &DofMap, problem: &ProblemData) -> Result<Vec<f64>> {
    let mut values: BTreeMap<usize, f64> = BTreeMap::new();
    for (k, patch) in dec.patches.iter().enumerate() {
        for face in Face::ALL {
            if dec.boundary[k][face.index()] != BoundaryKind::Dirichlet {
                continue;
            }
            let kv = patch.field_space().knot_vector(face.tangent_dir());
            let dofs = patch.face_dofs(face);
            let weights: Vec<f64> = dofs.iter().map(|&d| patch.field().net().weights[d]).collect();
            let g = kv.greville();
            let coll = collocation_matrix(kv, &g)?;
            // Σ (c ω) B = W g on the face
            let mut rhs = faer::Mat::<f64>::zeros(g.len(), 1);
            for (l, &t) in g.iter().enumerate() {
                let (first, vals) = kv.eval_basis(t)?;
                let wface: f64 = vals.iter().enumerate().map(|(a, v)| v * weights[first + a]).sum();
                let (x, _) = patch.face_point(face, t)?;
                rhs[(l, 0)] = wface * problem.dirichlet_value(x);
            }
            let sol = coll.partial_piv_lu().solve(&rhs);
            for (pos, &d) in dofs.iter().enumerate() {
                values.insert(dofmap.patch_offsets[k] + d, sol[(pos, 0)] / weights[pos]);
            }
        }
    }
    dofmap
        .constrained
        .iter()
        .map(|d| values.get(d).copied().ok_or_else(|| Error::Internal(format!("no Dirichlet value for dof {d}"))))
        .collect()
}

/// Strong elimination of the constrained dofs: their rows and columns
/// become identity and known values move to the right-hand sides.
/// Repeating it with the same values leaves `A` and `rhs` unchanged.
pub fn apply_dirichlet(mut system: SaddleSystem, dofmap: &DofMap, values: &[f64]) -> Result<SaddleSystem> {
    if values.len() != dofmap.constrained.len() {
        return Err(Error::Argument("one value per constrained dof required".into()));
    }
    let nv = system.num_primal();
    let mut known = vec![None; nv];
    for (&d, &v) in dofmap.constrained.iter().zip(values) {
        if d >= nv {
            return Err(Error::Internal(format!("dof {d} is not a primal dof")));
        }
        known[d] = Some(v);
    }

    let a = &mut system.a;
    for i in 0..nv {
        let range = a.row_ptr[i]..a.row_ptr[i + 1];
        if let Some(gi) = known[i] {
            for k in range {
                a.values[k] = if a.col_idx[k] == i { 1.0 } else { 0.0 };
            }
            system.rhs[i] = gi;
        } else {
            for k in range {
                if let Some(gc) = known[a.col_idx[k]] {
                    system.rhs[i] -= a.values[k] * gc;
                    a.values[k] = 0.0;
                }
            }
        }
    }

    for i in 0..nv {
        if let Some(gi) = known[i] {
            let bc = &mut system.b_constraint;
            for k in bc.row_ptr[i]..bc.row_ptr[i + 1] {
                system.dual_rhs[bc.col_idx[k]] -= bc.values[k] * gi;
                bc.values[k] = 0.0;
            }
            let bt = &mut system.b_test;
            for k in bt.row_ptr[i]..bt.row_ptr[i + 1] {
                bt.values[k] = 0.0;
            }
        }
    }
    Ok(system)
}

/// Assembly followed by Dirichlet elimination.
pub fn assemble_constrained(
    dec: &Decomposition,
    problem: &ProblemData,
    variant: DualVariant,
    strategy: Strategy,
    gauss_points: usize,
) -> Result<SaddleSystem> {
    let system = assemble_system(dec, problem, variant, strategy, gauss_points)?;
    let dofmap = system.dofmap.clone();
    let values = dirichlet_values(dec, &dofmap, problem)?;
    apply_dirichlet(system, &dofmap, &values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::NurbsSurface;
    use crate::multipatch::{build_two_patch, Case};
    use crate::spline::KnotVector;

    fn single_patch(p: usize, elems: usize) -> Decomposition {
        let kv = KnotVector::uniform(p, elems).unwrap();
        let s = NurbsSurface::rectangle([0.0, 1.0], [0.0, 1.0], kv.clone(), kv).unwrap();
        let patch = Arc::new(Patch::refined(s, 0).unwrap());
        Decomposition::new(vec![patch], vec![], vec![[BoundaryKind::Neumann; 4]]).unwrap()
    }

    #[test]
    fn bilinear_unit_square() {
        let dec = single_patch(1, 1);
        let (a, f) = assemble_bilinear(&dec, &ProblemData::constant(1.0, 0.0, 1.0)).unwrap();
        let d = a.to_dense();
        // Q1 stiffness on the unit square
        let expect = [
            [4.0, -1.0, -1.0, -2.0],
            [-1.0, 4.0, -2.0, -1.0],
            [-1.0, -2.0, 4.0, -1.0],
            [-2.0, -1.0, -1.0, 4.0],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert!((d[i][j] - expect[i][j] / 6.0).abs() < 1e-14, "({i},{j})");
            }
            assert!(d[i].iter().sum::<f64>().abs() < 1e-14);
        }
        assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-13);

        let (_, f) = assemble_bilinear(&single_patch(3, 3), &ProblemData::constant(1.0, 1.0, 1.0)).unwrap();
        assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn matrix_is_symmetric() {
        let dec = build_two_patch(Case::M3, 3, 1, false).unwrap();
        let (a, _) = assemble_bilinear(&dec, &ProblemData::constant(1.0, 0.5, 0.0)).unwrap();
        assert!(a.max_abs_diff(&a.transpose()) <= 1e-12 * a.max_abs());
    }

    #[test]
    fn structural_zeros_away_from_interface() {
        let dec = build_two_patch(Case::M1, 2, 1, false).unwrap();
        let sys = assemble_system(&dec, &ProblemData::constant(1.0, 0.0, 0.0), DualVariant::M0, Strategy::Exact, 3)
            .unwrap();
        let off = dec.patch_offsets();
        let iface = &dec.interfaces[0];
        let mut on_face: Vec<usize> = iface.master_patch().face_dofs(iface.master_face).iter().map(|d| d + off[iface.master]).collect();
        on_face.extend(iface.slave_patch().face_dofs(iface.slave_face).iter().map(|d| d + off[iface.slave]));
        for i in 0..sys.num_primal() {
            let (cols, _) = sys.b_test.row(i);
            if !on_face.contains(&i) {
                assert!(cols.is_empty(), "row {i}");
            }
        }
    }

    #[test]
    fn dirichlet_rows_become_identity() {
        let dec = build_two_patch(Case::M1, 1, 0, false).unwrap();
        let problem = ProblemData::constant(1.0, 0.0, 1.0);
        let sys = assemble_constrained(&dec, &problem, DualVariant::M0, Strategy::Exact, 2).unwrap();
        for &c in &sys.dofmap.constrained {
            assert_eq!(sys.a.get(c, c), 1.0);
            assert_eq!(sys.rhs[c], 0.0);
            assert!(sys.b_test.row(c).1.iter().all(|&v| v == 0.0));
        }
        let mut bad = sys.dofmap.clone();
        bad.constrained.push(sys.num_primal() + 1);
        let vals = vec![0.0; bad.constrained.len()];
        assert!(matches!(apply_dirichlet(sys, &bad, &vals), Err(Error::Internal(_))));
    }
}
