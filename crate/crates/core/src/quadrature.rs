//! Gauss-Legendre rules and the three interface-quadrature strategies:
//! slave-mesh rules, master-mesh rules and rules on the merged mesh.

use crate::error::{Error, Result};
use crate::multipatch::Interface;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    points: Vec<f64>,
    weights: Vec<f64>,
}

pub const MAX_GAUSS_POINTS: usize = 64;

/// Gauss-Legendre rule with `n` points, nodes by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> Result<GaussRule> {
    if n == 0 || n > MAX_GAUSS_POINTS {
        return Err(Error::Argument(format!(
            "number of Gauss points must be in 1..={MAX_GAUSS_POINTS}, got {n}"
        )));
    }
    let mut points = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        points[i] = -x;
        points[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        points[n / 2] = 0.0;
    }
    Ok(GaussRule { points, weights })
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, dp)
}

impl GaussRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes and weights mapped affinely onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.points.iter().zip(&self.weights).map(move |(&x, &w)| (mid + half * x, half * w))
    }

    /// `∫_a^b f` by this rule.
    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

/// Which mesh a rule was built on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    SlaveOnly,
    Merged,
    MasterOnly,
}

/// One quadrature point on the interface.
///
/// `weight` is the parametric weight in the parameter of the defining mesh
/// and `arc` the matching length factor, so `weight * arc` is the physical
/// measure carried by the point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfacePoint {
    pub slave_t: f64,
    pub master_s: f64,
    pub weight: f64,
    pub arc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceRule {
    pub kind: RuleKind,
    pub points: Vec<InterfacePoint>,
}

impl InterfaceRule {
    /// Physical measure covered by the rule, `Σ w · arc`.
    pub fn length(&self) -> f64 {
        self.points.iter().map(|q| q.weight * q.arc).sum()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Gauss points on each element of the slave trace mesh.
pub fn slave_rule(interface: &Interface, points_per_element: usize) -> Result<InterfaceRule> {
    let breaks = interface.slave_breakpoints();
    let points = rule_on_slave_segments(interface, &breaks, points_per_element)?;
    Ok(InterfaceRule { kind: RuleKind::SlaveOnly, points })
}

/// Gauss points on each element of the master trace mesh, reported in slave
/// parameters through the inverse correspondence.
pub fn master_rule(interface: &Interface, points_per_element: usize) -> Result<InterfaceRule> {
    let gauss = gauss_legendre(points_per_element)?;
    let breaks = interface.master_breakpoints();
    let mut points = Vec::with_capacity(gauss.len() * (breaks.len() - 1));
    for w in breaks.windows(2) {
        for (s, weight) in gauss.mapped(w[0], w[1]) {
            let t = interface.inverse_correspondence(s)?;
            let arc = interface.master_arc_factor(s);
            points.push(InterfacePoint { slave_t: t, master_s: s, weight, arc });
        }
    }
    Ok(InterfaceRule { kind: RuleKind::MasterOnly, points })
}

/// Tolerance for treating pulled-back master breakpoints as slave breakpoints.
pub const MERGE_TOLERANCE: f64 = 1e-13;

/// Merged-mesh breakpoints in the slave parameter.
pub fn merged_breakpoints(interface: &Interface) -> Result<Vec<f64>> {
    let mut all = interface.slave_breakpoints();
    for s in interface.master_breakpoints() {
        all.push(interface.inverse_correspondence(s)?);
    }
    all.sort_by(|a, b| a.total_cmp(b));
    let mut merged: Vec<f64> = Vec::with_capacity(all.len());
    for t in all {
        match merged.last() {
            Some(&last) if (t - last).abs() <= MERGE_TOLERANCE => {}
            _ => merged.push(t),
        }
    }
    // keep exact endpoints
    if let Some(first) = merged.first_mut() {
        *first = 0.0;
    }
    if let Some(last) = merged.last_mut() {
        *last = 1.0;
    }
    Ok(merged)
}

/// Gauss points on every segment of the merged mesh.
pub fn merged_rule(interface: &Interface, points_per_segment: usize) -> Result<InterfaceRule> {
    let breaks = merged_breakpoints(interface)?;
    let points = rule_on_slave_segments(interface, &breaks, points_per_segment)?;
    Ok(InterfaceRule { kind: RuleKind::Merged, points })
}

fn rule_on_slave_segments(interface: &Interface, breaks: &[f64], n: usize) -> Result<Vec<InterfacePoint>> {
    let gauss = gauss_legendre(n)?;
    let mut points = Vec::with_capacity(gauss.len() * breaks.len().saturating_sub(1));
    for w in breaks.windows(2) {
        for (t, weight) in gauss.mapped(w[0], w[1]) {
            let s = interface.correspondence(t)?;
            let arc = interface.slave_arc_factor(t);
            points.push(InterfacePoint { slave_t: t, master_s: s, weight, arc });
        }
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monomial_integral(k: u32) -> f64 {
        if k % 2 == 1 {
            0.0
        } else {
            2.0 / (k as f64 + 1.0)
        }
    }

    #[test]
    fn small_rules() {
        let r = gauss_legendre(1).unwrap();
        assert_eq!(r.points(), &[0.0]);
        assert_eq!(r.weights(), &[2.0]);
        let r = gauss_legendre(2).unwrap();
        let x = 1.0 / 3f64.sqrt();
        assert!((r.points()[0] + x).abs() < 1e-15 && (r.points()[1] - x).abs() < 1e-15);
        assert!((r.weights()[0] - 1.0).abs() < 1e-15 && (r.weights()[1] - 1.0).abs() < 1e-15);
        let r = gauss_legendre(5).unwrap();
        assert!(r.integrate(-1.0, 1.0, |x| x.powi(9)).abs() < 1e-13);
        assert!((r.integrate(-1.0, 1.0, |x| x.powi(8)) - 2.0 / 9.0).abs() < 1e-13);
        assert!(gauss_legendre(0).is_err());
        assert!(gauss_legendre(65).is_err());
    }

    #[test]
    fn exactness_and_sharpness() {
        for n in 1..=10usize {
            let r = gauss_legendre(n).unwrap();
            for k in 0..=(2 * n as u32 - 1) {
                let q = r.integrate(-1.0, 1.0, |x| x.powi(k as i32));
                assert!((q - monomial_integral(k)).abs() < 1e-13, "n={n} k={k}");
            }
            let k = 2 * n as u32;
            let q = r.integrate(-1.0, 1.0, |x| x.powi(k as i32));
            assert!((q - monomial_integral(k)).abs() > 1e-6, "n={n} not sharp");
        }
    }

    #[test]
    fn large_rules_are_consistent() {
        for n in [20, 40, 64] {
            let r = gauss_legendre(n).unwrap();
            assert!((r.weights().iter().sum::<f64>() - 2.0).abs() < 1e-13);
            assert!(r.weights().iter().all(|&w| w > 0.0));
            for i in 0..n {
                assert!((r.points()[i] + r.points()[n - 1 - i]).abs() < 1e-15);
            }
            assert!(r.points().windows(2).all(|w| w[0] < w[1]));
            let q = r.integrate(0.0, 1.0, |x| (std::f64::consts::PI * x).sin());
            assert!((q - 2.0 / std::f64::consts::PI).abs() < 1e-14);
        }
    }
}
