//! Discretization errors and experimental orders of convergence.

use crate::assembly::{span_table, DofMap, ProblemData, SpanTable};
use crate::error::{Error, Result};
use crate::geometry::{LocalEval, Patch, Point};
use crate::multipatch::{multiplier_space, Decomposition, DualVariant};
use crate::quadrature::gauss_legendre;

/// Visits the Gauss points of every element with the evaluated field basis
/// and the measure `w |det DF|`.
fn visit_patch(patch: &Patch, n: usize, mut f: impl FnMut(&LocalEval, f64)) -> Result<()> {
    let space = patch.field_space();
    let gauss = gauss_legendre(n)?;
    let rule: Vec<(f64, f64)> = gauss.points().iter().copied().zip(gauss.weights().iter().copied()).collect();
    let tables = |dir: usize| -> Vec<(usize, f64, SpanTable)> {
        let kv = space.knot_vector(dir);
        let u = kv.knots();
        kv.element_spans()
            .into_iter()
            .map(|s| (s, 0.5 * (u[s + 1] - u[s]), span_table(kv, s, u[s], u[s + 1], &rule)))
            .collect()
    };
    let (t1, t2) = (tables(0), tables(1));
    let mut ev = LocalEval::default();
    for (s2, h2, tab2) in &t2 {
        for (s1, h1, tab1) in &t1 {
            for (q2, &(_, w2)) in rule.iter().enumerate() {
                for (q1, &(_, w1)) in rule.iter().enumerate() {
                    patch.field().combine(
                        [*s1, *s2],
                        [&tab1.values[q1], &tab1.derivs[q1]],
                        [&tab2.values[q2], &tab2.derivs[q2]],
                        &mut ev,
                    )?;
                    f(&ev, w1 * w2 * h1 * h2 * ev.det().abs());
                }
            }
        }
    }
    Ok(())
}

fn local_value(ev: &LocalEval, n1: usize, coeffs: &[f64]) -> f64 {
    let w = ev.width;
    let mut v = 0.0;
    for a2 in 0..w {
        let row = (ev.first[1] + a2) * n1 + ev.first[0];
        for a1 in 0..w {
            v += coeffs[row + a1] * ev.values[a1 + w * a2];
        }
    }
    v
}

/// `‖u_h − u‖_{L²(Ω)}` with `points` Gauss points per direction and element.
pub fn error_primal_with(
    dec: &Decomposition,
    coeffs: &[f64],
    exact: &dyn Fn(Point) -> f64,
    points: usize,
) -> Result<f64> {
    if coeffs.len() != dec.num_primal() {
        return Err(Error::Argument(format!("expected {} primal coefficients, got {}", dec.num_primal(), coeffs.len())));
    }
    let offsets = dec.patch_offsets();
    let mut sum = 0.0;
    for (k, patch) in dec.patches.iter().enumerate() {
        let n1 = patch.field_space().dims()[0];
        let local = &coeffs[offsets[k]..offsets[k] + patch.field_dim()];
        visit_patch(patch, points, |ev, dx| {
            let e = local_value(ev, n1, local) - exact(ev.x);
            sum += e * e * dx;
        })?;
    }
    Ok(sum.sqrt())
}

/// `‖u_h − u‖_{L²(Ω)}` with `p + 3` points per direction.
pub fn error_primal(dec: &Decomposition, coeffs: &[f64], exact: &dyn Fn(Point) -> f64) -> Result<f64> {
    let p = dec.patches.iter().map(|p| p.degree()).max().unwrap_or(0);
    error_primal_with(dec, coeffs, exact, p + 3)
}

/// `‖λ_h − λ‖_{L²(Γ)}` summed over the interfaces, with `λ = −α ∇u·n`
/// for the normal `n` pointing out of the master patch. Integrated on the
/// slave mesh with `p + 3` points per element.
pub fn error_dual(
    dec: &Decomposition,
    dofmap: &DofMap,
    variant: DualVariant,
    dual: &[f64],
    problem: &ProblemData,
) -> Result<f64> {
    if dual.len() != dofmap.num_dual {
        return Err(Error::Argument(format!("expected {} dual coefficients, got {}", dofmap.num_dual, dual.len())));
    }
    let mut sum = 0.0;
    for (iface, &off) in dec.interfaces.iter().zip(&dofmap.interface_offsets) {
        let mspace = multiplier_space(iface, variant)?;
        let gauss = gauss_legendre(iface.slave_patch().degree() + 3)?;
        let coeffs = &dual[off..off + mspace.dim()];
        for seg in iface.slave_breakpoints().windows(2) {
            for (t, w) in gauss.mapped(seg[0], seg[1]) {
                let (first, mu) = mspace.knot_vector.eval_basis(t)?;
                let lh: f64 = mu.iter().enumerate().map(|(j, m)| m * coeffs[first + j]).sum();
                let x = iface.point(t)?;
                let lambda = -problem.flux(x, iface.normal(t)?);
                sum += w * iface.slave_arc_factor(t) * (lh - lambda).powi(2);
            }
        }
    }
    Ok(sum.sqrt())
}

/// `log(e_prev / e_cur) / log(h_prev / h_cur)`; `None` when an error or
/// mesh size is not positive or the sizes coincide.
pub fn eoc(e_prev: f64, e_cur: f64, h_prev: f64, h_cur: f64) -> Option<f64> {
    if !(e_prev > 0.0 && e_cur > 0.0 && h_prev > 0.0 && h_cur > 0.0) || h_prev == h_cur {
        return None;
    }
    let r = (e_prev / e_cur).ln() / (h_prev / h_cur).ln();
    r.is_finite().then_some(r)
}
