//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use iga_mortar::analysis::{error_dual, error_primal};
use iga_mortar::assembly::Strategy;
use iga_mortar::experiments::{
    benchmark_problem, linear_problem, run_level, run_study, table1_cells, Quadrature, StudyConfig, StudyReport,
};
use iga_mortar::multipatch::{Case, DualVariant};
use iga_mortar::quadrature::gauss_legendre;
use iga_mortar::spline::{knot_insertion_matrix, KnotVector};

type Outcome = Result<String, String>;

/// Residuals of every solve run by the suite.
#[derive(Default)]
struct Residuals {
    max: f64,
    count: usize,
}

impl Residuals {
    fn report(&mut self, r: &StudyReport) -> Result<(), String> {
        for row in &r.rows {
            match &row.outcome {
                Ok(e) => self.push(e.residual),
                Err(msg) => return Err(format!("level {} failed: {msg}", row.level)),
            }
        }
        Ok(())
    }

    fn push(&mut self, r: f64) {
        self.max = if r.is_nan() { f64::NAN } else { self.max.max(r) };
        self.count += 1;
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_knot_vector(rng: &mut ChaCha8Rng) -> KnotVector {
    let p = rng.gen_range(1..=5);
    let interior = rng.gen_range(0..6);
    let mut bps: Vec<f64> = (0..interior).map(|_| rng.gen_range(0.02..0.98)).collect();
    bps.sort_by(f64::total_cmp);
    bps.dedup_by(|a, b| (*a - *b).abs() < 0.02);
    let mut knots = vec![0.0; p + 1];
    for &b in &bps {
        let m = rng.gen_range(1..=p);
        knots.extend(std::iter::repeat(b).take(m));
    }
    knots.extend(std::iter::repeat(1.0).take(p + 1));
    KnotVector::new(p, knots).expect("valid random knot vector")
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20240501);
    let (mut pou, mut deriv, mut nest) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..20 {
        let kv = random_knot_vector(&mut rng);
        let fine = kv.h_refine(1);
        let m = knot_insertion_matrix(&kv, &fine).map_err(|e| e.to_string())?;
        let knots = kv.knots().to_vec();
        let h = 1e-6;
        for _ in 0..1000 {
            let z: f64 = rng.gen_range(0.0..=1.0);
            let (_, vals) = kv.eval_basis(z).map_err(|e| e.to_string())?;
            pou = pou.max((vals.iter().sum::<f64>() - 1.0).abs());

            let coarse = dense_basis(&kv, z)?;
            let finev = dense_basis(&fine, z)?;
            for (j, c) in coarse.iter().enumerate() {
                let s: f64 = (0..fine.dim()).map(|i| m[(i, j)] * finev[i]).sum();
                nest = nest.max((s - c).abs());
            }

            if knots.iter().all(|k| (k - z).abs() > 10.0 * h) {
                let (first, d) = kv.eval_basis_derivs(z, 1).map_err(|e| e.to_string())?;
                let up = dense_basis(&kv, z + h)?;
                let dn = dense_basis(&kv, z - h)?;
                let scale = d[1].iter().fold(1.0f64, |a, v| a.max(v.abs()));
                for (a, dv) in d[1].iter().enumerate() {
                    let fd = (up[first + a] - dn[first + a]) / (2.0 * h);
                    deriv = deriv.max((fd - dv).abs() / scale);
                }
            }
        }
    }
    let mut gauss_ok = true;
    for n in 1..=10usize {
        let r = gauss_legendre(n).map_err(|e| e.to_string())?;
        for k in 0..=(2 * n) {
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            let q = r.integrate(-1.0, 1.0, |x| x.powi(k as i32));
            let err = (q - exact).abs();
            gauss_ok &= if k < 2 * n { err < 1e-13 } else { err > 1e-6 };
        }
    }
    check(pou <= 1e-12, || format!("partition of unity deviation {pou:e}"))?;
    check(deriv <= 1e-6, || format!("derivative relative error {deriv:e}"))?;
    check(gauss_ok, || "Gauss exactness/sharpness violated".into())?;
    check(nest <= 1e-12, || format!("refinement nesting deviation {nest:e}"))?;
    Ok(format!("pou={pou:.1e} deriv={deriv:.1e} nesting={nest:.1e}"))
}

fn dense_basis(kv: &KnotVector, z: f64) -> Result<Vec<f64>, String> {
    let (first, vals) = kv.eval_basis(z).map_err(|e| e.to_string())?;
    let mut out = vec![0.0; kv.dim()];
    out[first..first + vals.len()].copy_from_slice(&vals);
    Ok(out)
}

fn criterion_2(res: &mut Residuals) -> Outcome {
    let problem = linear_problem();
    let exact = problem.exact.clone().unwrap();
    let (mut ep, mut ed) = (0.0f64, 0.0f64);
    for p in 1..=5 {
        for level in 0..=3 {
            let config = StudyConfig::new(Case::M1, p);
            let run = run_level(&config, &problem, level).map_err(|e| format!("P{p} level {level}: {e}"))?;
            res.push(run.solution.residual);
            let e1 = error_primal(&run.decomposition, &run.solution.primal, exact.as_ref()).map_err(|e| e.to_string())?;
            let e2 = error_dual(&run.decomposition, &run.system.dofmap, DualVariant::M0, &run.solution.dual, &problem)
                .map_err(|e| e.to_string())?;
            check(e1 <= 1e-10 && e2 <= 1e-10, || format!("P{p} level {level}: primal {e1:e}, dual {e2:e}"))?;
            ep = ep.max(e1);
            ed = ed.max(e2);
        }
    }
    Ok(format!("max primal {ep:.1e}, max dual {ed:.1e}"))
}

fn study(case: Case, p: usize, strategy: Strategy, q: usize, levels: usize) -> StudyConfig {
    StudyConfig { strategy, quadrature: Quadrature::Order(q), levels, ..StudyConfig::new(case, p) }
}

fn run(config: &StudyConfig, res: &mut Residuals) -> Result<StudyReport, String> {
    let r = run_study(config).map_err(|e| e.to_string())?;
    res.report(&r)?;
    Ok(r)
}

fn criterion_3(res: &mut Residuals) -> Outcome {
    let mut details = Vec::new();
    for p in [2, 3] {
        let r = run(&study(Case::M3, p, Strategy::Exact, 0, 6), res)?;
        let (ep, ed) = r.last_eoc();
        let (ep, ed) = (ep.unwrap_or(f64::NAN), ed.unwrap_or(f64::NAN));
        let target = (p + 1) as f64;
        check((ep - target).abs() <= 0.25, || format!("P{p}: primal EOC {ep:.3} vs {target}"))?;
        check(ed >= p as f64 - 0.5, || format!("P{p}: dual EOC {ed:.3} < {}", p as f64 - 0.5))?;
        details.push(format!("P{p}: eoc primal {ep:.3} dual {ed:.3}"));
    }
    Ok(details.join("; "))
}

fn criterion_4(res: &mut Residuals) -> Outcome {
    let cells = table1_cells(8).map_err(|e| e.to_string())?;
    check(cells.len() == 12, || format!("{} cells", cells.len()))?;
    let mut summary = Vec::new();
    for c in &cells {
        res.push(c.max_residual);
        let ep = c.last_eoc_primal.unwrap_or(f64::NAN);
        let ed = c.last_eoc_dual.unwrap_or(f64::NAN);
        let (lo, hi) = if c.case == Case::M1 { (1.45, 1.80) } else { (1.30, 1.95) };
        check((0.35..=0.65).contains(&ed), || format!("{} q={}: dual EOC {ed:.3}", c.case, c.quad_order))?;
        check((lo..=hi).contains(&ep), || format!("{} q={}: primal EOC {ep:.3}", c.case, c.quad_order))?;
        summary.push(format!("{}q{}:{ep:.2}/{ed:.2}", c.case, c.quad_order));
    }
    Ok(summary.join(" "))
}

fn errors(r: &StudyReport) -> Vec<(f64, f64)> {
    r.errors().iter().map(|e| e.map_or((f64::NAN, f64::NAN), |e| (e.err_primal, e.err_dual))).collect()
}

fn criterion_5(res: &mut Residuals) -> Outcome {
    let levels = 7;
    let exact = errors(&run(&study(Case::M3, 3, Strategy::Exact, 0, levels), res)?);
    let slave = errors(&run(&study(Case::M3, 3, Strategy::SlaveOnly, 2, levels), res)?);
    let agrees = |l: usize| {
        let (a, b) = (slave[l], exact[l]);
        (a.0 / b.0 - 1.0).abs() <= 0.05 && (a.1 / b.1 - 1.0).abs() <= 0.05
    };
    let threshold = (0..levels).find(|&l| !agrees(l)).unwrap_or(levels);
    let final_ratio = slave[levels - 1].1 / exact[levels - 1].1;
    check(threshold >= 1, || "errors differ by more than 5% already on level 0".into())?;
    check(final_ratio >= 10.0, || format!("final dual error ratio {final_ratio:.2}"))?;
    Ok(format!("threshold level {threshold}, final dual ratio {final_ratio:.1}"))
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

fn criterion_6(res: &mut Residuals) -> Outcome {
    let problem = benchmark_problem();
    let mut worst = 0.0f64;
    for p in 1..=5 {
        for level in 0..=2 {
            let exact = run_level(&study(Case::Matching, p, Strategy::Exact, 0, 3), &problem, level)
                .map_err(|e| e.to_string())?;
            res.push(exact.solution.residual);
            for q in [0, 2] {
                let slave = run_level(&study(Case::Matching, p, Strategy::SlaveOnly, q, 3), &problem, level)
                    .map_err(|e| e.to_string())?;
                res.push(slave.solution.residual);
                let (se, ss) = (&exact.system, &slave.system);
                let block = |a: &iga_mortar::sparse::CsrMatrix, b: &iga_mortar::sparse::CsrMatrix| {
                    a.max_abs_diff(b) / a.max_abs().max(b.max_abs())
                };
                let d = [
                    block(&se.b_test, &ss.b_test),
                    block(&se.b_constraint, &ss.b_constraint),
                    block(&se.a, &ss.a),
                    rel_diff(&se.rhs, &ss.rhs),
                    rel_diff(&exact.solution.primal, &slave.solution.primal),
                    rel_diff(&exact.solution.dual, &slave.solution.dual),
                ];
                let m = d.iter().fold(0.0f64, |a, &v| a.max(v));
                check(m <= 1e-12, || format!("P{p} level {level} q={q}: relative difference {m:e}"))?;
                worst = worst.max(m);
            }
        }
    }
    Ok(format!("max relative difference {worst:.1e}"))
}

fn criterion_7(res: &mut Residuals) -> Outcome {
    let mut details = Vec::new();
    for p in [3, 5] {
        let exact = errors(&run(&study(Case::M3, p, Strategy::Exact, 0, 6), res)?);
        let nonsym = errors(&run(&study(Case::M3, p, Strategy::NonSymmetric, 0, 6), res)?);
        let mut worst = 1.0f64;
        for (l, (n, e)) in nonsym.iter().zip(&exact).enumerate() {
            for (a, b) in [(n.0, e.0), (n.1, e.1)] {
                let r = (a / b).max(b / a);
                check(r <= 2.0, || format!("P{p} level {l}: error ratio {r:.3}"))?;
                worst = worst.max(r);
            }
        }
        details.push(format!("P{p} worst ratio {worst:.3}"));
    }
    let r = run(&study(Case::M3, 1, Strategy::NonSymmetric, 0, 7), res)?;
    let ep = r.last_eoc().0.unwrap_or(f64::NAN);
    check(ep < 1.8, || format!("P1 final primal EOC {ep:.3}"))?;
    details.push(format!("P1 final primal EOC {ep:.3}"));
    Ok(details.join("; "))
}

fn criterion_8(res: &mut Residuals) -> Outcome {
    let problem = benchmark_problem();
    let level = 3;
    let level_errors = |config: &StudyConfig, res: &mut Residuals| -> Result<(f64, f64), String> {
        let run = run_level(config, &problem, level).map_err(|e| e.to_string())?;
        res.push(run.solution.residual);
        let exact = problem.exact.clone().unwrap();
        let ep = error_primal(&run.decomposition, &run.solution.primal, exact.as_ref()).map_err(|e| e.to_string())?;
        let ed = error_dual(&run.decomposition, &run.system.dofmap, config.dual, &run.solution.dual, &problem)
            .map_err(|e| e.to_string())?;
        Ok((ep, ed))
    };
    let reference = level_errors(&study(Case::M3, 3, Strategy::Exact, 0, level + 1), res)?;
    for q in 0..=12 {
        let e = level_errors(&study(Case::M3, 3, Strategy::SlaveOnly, q, level + 1), res)?;
        if (e.0 / reference.0 - 1.0).abs() <= 0.01 && (e.1 / reference.1 - 1.0).abs() <= 0.01 {
            return Ok(format!("recovered at q={q}"));
        }
    }
    Err("no quadrature order up to 12 within 1% of exact integration".into())
}

fn criterion_9(res: &Residuals) -> Outcome {
    check(res.max <= 1e-10, || format!("max residual {:e} over {} solves", res.max, res.count))?;
    let mut scratch = Residuals::default();
    for config in [study(Case::M3, 2, Strategy::Exact, 0, 5), study(Case::M3, 3, Strategy::NonSymmetric, 0, 5)] {
        let a = run(&config, &mut scratch)?;
        let b = run(&config, &mut scratch)?;
        check(a.to_csv() == b.to_csv(), || format!("{:?} rerun differs", config.strategy))?;
    }
    let config = study(Case::M1, 3, Strategy::SlaveOnly, 1, 4);
    let problem = benchmark_problem();
    let a = run_level(&config, &problem, 3).map_err(|e| e.to_string())?;
    let b = run_level(&config, &problem, 3).map_err(|e| e.to_string())?;
    let same = a.solution.primal.iter().zip(&b.solution.primal).all(|(x, y)| x.to_bits() == y.to_bits())
        && a.solution.dual.iter().zip(&b.solution.dual).all(|(x, y)| x.to_bits() == y.to_bits());
    check(same, || "solutions of identical runs differ".into())?;
    Ok(format!("max residual {:.1e} over {} solves; reruns bit-identical", res.max, res.count))
}

fn main() -> ExitCode {
    let mut res = Residuals::default();
    let mut failed = 0;
    let mut report = |n: usize, name: &str, f: &mut dyn FnMut(&mut Residuals) -> Outcome, res: &mut Residuals| {
        let t = Instant::now();
        let outcome = f(res);
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS criterion {n} ({name}): {msg} [{secs:.1}s]"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {n} ({name}): {msg} [{secs:.1}s]");
            }
        }
    };
    report(1, "spline kernel properties", &mut |_| criterion_1(), &mut res);
    report(2, "linear patch test", &mut criterion_2, &mut res);
    report(3, "optimal rates with exact integration", &mut criterion_3, &mut res);
    report(4, "quadrature-order table", &mut criterion_4, &mut res);
    report(5, "degradation threshold", &mut criterion_5, &mut res);
    report(6, "matching-mesh equivalence", &mut criterion_6, &mut res);
    report(7, "non-symmetric strategy", &mut criterion_7, &mut res);
    report(8, "coarse-mesh recovery by quadrature order", &mut criterion_8, &mut res);
    report(9, "solver contract", &mut |r| criterion_9(r), &mut res);
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
