//! Domain decomposition bookkeeping: patches, master/slave interfaces,
//! boundary tags, trace spaces and Lagrange-multiplier spaces.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{Face, NurbsSurface, Patch, Point};
use crate::spline::KnotVector;

/// Boundary condition attached to a patch face.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
    Interface,
}

/// Restriction of a patch's field space to one face.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSpace {
    pub knot_vector: KnotVector,
    /// Patch-local field dofs, ordered along the face.
    pub dofs: Vec<usize>,
}

pub fn trace_space(patch: &Patch, face: Face) -> TraceSpace {
    TraceSpace {
        knot_vector: patch.field_space().knot_vector(face.tangent_dir()).clone(),
        dofs: patch.face_dofs(face),
    }
}

/// Master/slave pairing of two patch faces.
///
/// Both faces are parametrized by the increasing tangent parameter of their
/// patch; `t` denotes the slave parameter and `s` the master parameter.
#[derive(Debug, Clone)]
pub struct Interface {
    pub master: usize,
    pub master_face: Face,
    pub slave: usize,
    pub slave_face: Face,
    master_patch: Arc<Patch>,
    slave_patch: Arc<Patch>,
    coord: usize,
}

/// Root-finding tolerance on the face parameter.
const CORRESPONDENCE_TOL: f64 = 1e-13;

impl Interface {
    pub fn new(
        patches: &[Arc<Patch>],
        master: usize,
        master_face: Face,
        slave: usize,
        slave_face: Face,
    ) -> Result<Self> {
        if master == slave || master >= patches.len() || slave >= patches.len() {
            return Err(Error::Construction(format!("invalid patch pair ({master}, {slave})")));
        }
        let master_patch = patches[master].clone();
        let slave_patch = patches[slave].clone();
        let (m0, _) = master_patch.face_point(master_face, 0.0)?;
        let (m1, _) = master_patch.face_point(master_face, 1.0)?;
        let (s0, _) = slave_patch.face_point(slave_face, 0.0)?;
        let (s1, _) = slave_patch.face_point(slave_face, 1.0)?;
        let coord = if (m1[0] - m0[0]).abs() >= (m1[1] - m0[1]).abs() { 0 } else { 1 };
        let iface = Self { master, master_face, slave, slave_face, master_patch, slave_patch, coord };
        if dist(m0, s0) > 1e-12 || dist(m1, s1) > 1e-12 {
            return Err(Error::Construction(
                "master and slave faces do not share endpoints with matching orientation".into(),
            ));
        }
        for k in 0..=100 {
            let t = k as f64 / 100.0;
            let s = iface.correspondence(t)?;
            let (xs, _) = iface.slave_patch.face_point(slave_face, t)?;
            let (xm, _) = iface.master_patch.face_point(master_face, s)?;
            if dist(xs, xm) > 1e-12 {
                return Err(Error::Construction(format!(
                    "faces do not match at t = {t}: gap {:e}",
                    dist(xs, xm)
                )));
            }
        }
        Ok(iface)
    }

    pub fn master_patch(&self) -> &Patch {
        &self.master_patch
    }

    pub fn slave_patch(&self) -> &Patch {
        &self.slave_patch
    }

    pub fn slave_trace(&self) -> TraceSpace {
        trace_space(&self.slave_patch, self.slave_face)
    }

    pub fn master_trace(&self) -> TraceSpace {
        trace_space(&self.master_patch, self.master_face)
    }

    pub fn slave_breakpoints(&self) -> Vec<f64> {
        self.slave_trace().knot_vector.breakpoints()
    }

    pub fn master_breakpoints(&self) -> Vec<f64> {
        self.master_trace().knot_vector.breakpoints()
    }

    /// Master parameter `s` with `F_m(s) = F_s(t)`.
    pub fn correspondence(&self, t: f64) -> Result<f64> {
        let (x, _) = self.slave_patch.face_point(self.slave_face, t)?;
        invert_face(&self.master_patch, self.master_face, self.coord, x, t)
    }

    /// Slave parameter `t` with `F_s(t) = F_m(s)`.
    pub fn inverse_correspondence(&self, s: f64) -> Result<f64> {
        let (x, _) = self.master_patch.face_point(self.master_face, s)?;
        invert_face(&self.slave_patch, self.slave_face, self.coord, x, s)
    }

    /// `|dF_s/dt|` on the slave face.
    pub fn slave_arc_factor(&self, t: f64) -> f64 {
        self.slave_patch.face_point(self.slave_face, t).map(|(_, d)| norm(d)).unwrap_or(f64::NAN)
    }

    /// `|dF_m/ds|` on the master face.
    pub fn master_arc_factor(&self, s: f64) -> f64 {
        self.master_patch.face_point(self.master_face, s).map(|(_, d)| norm(d)).unwrap_or(f64::NAN)
    }

    /// Physical point at slave parameter `t`.
    pub fn point(&self, t: f64) -> Result<Point> {
        Ok(self.slave_patch.face_point(self.slave_face, t)?.0)
    }

    /// Unit normal pointing out of the master patch.
    pub fn normal(&self, t: f64) -> Result<Point> {
        let s = self.correspondence(t)?;
        self.master_patch.outward_normal(self.master_face, s)
    }

    /// Physical length of the interface by a slave-mesh Gauss rule.
    pub fn length(&self) -> f64 {
        crate::quadrature::slave_rule(self, self.slave_patch.degree() + 2)
            .map(|r| r.length())
            .unwrap_or(f64::NAN)
    }
}

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn norm(a: Point) -> f64 {
    (a[0] * a[0] + a[1] * a[1]).sqrt()
}

/// Find the face parameter of `patch` whose image has coordinate
/// `target[coord]`, by Newton iteration safeguarded with bisection.
fn invert_face(patch: &Patch, face: Face, coord: usize, target: Point, guess: f64) -> Result<f64> {
    let value = |s: f64| -> Result<(f64, f64)> {
        let (x, d) = patch.face_point(face, s)?;
        Ok((x[coord] - target[coord], d[coord]))
    };
    let (g0, _) = value(0.0)?;
    let (g1, _) = value(1.0)?;
    let scale = (g1 - g0).abs();
    if !(g1 > g0) {
        return Err(Error::Geometry("face is not monotone in the shared coordinate".into()));
    }
    if g0.abs() <= 1e-15 * scale {
        return Ok(0.0);
    }
    if g1.abs() <= 1e-15 * scale {
        return Ok(1.0);
    }
    if g0 > 0.0 || g1 < 0.0 {
        return Err(Error::Geometry(format!("point {target:?} is not on the face")));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut s = guess.clamp(0.0, 1.0);
    for _ in 0..200 {
        let (g, dg) = value(s)?;
        if g == 0.0 {
            break;
        }
        if g < 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        let newton = s - g / dg;
        let next = if dg > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        let step = (next - s).abs();
        s = next;
        if step < 0.1 * CORRESPONDENCE_TOL || hi - lo < 0.1 * CORRESPONDENCE_TOL {
            break;
        }
    }
    let (x, _) = patch.face_point(face, s)?;
    if dist(x, target) > 1e-10 {
        return Err(Error::Geometry(format!("faces do not match near {target:?}")));
    }
    Ok(s)
}

/// Choice of Lagrange-multiplier space on the slave trace mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualVariant {
    /// Degree `p_s`, same knots as the slave trace.
    M0,
    /// Degree `p_s - 2` on the slave breakpoints.
    M2,
    /// Explicit degree on the slave breakpoints.
    Degree(usize),
}

impl DualVariant {
    pub fn degree(self, primal: usize) -> Result<usize> {
        match self {
            DualVariant::M0 => Ok(primal),
            DualVariant::M2 => primal.checked_sub(2).filter(|_| primal >= 2).ok_or_else(|| {
                Error::UnsupportedPairing(format!("M2 needs slave degree >= 2, got {primal}"))
            }),
            DualVariant::Degree(d) if d <= primal => Ok(d),
            DualVariant::Degree(d) => Err(Error::UnsupportedPairing(format!(
                "dual degree {d} exceeds primal degree {primal}"
            ))),
        }
    }
}

/// Lagrange-multiplier space on one interface.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierSpace {
    pub variant: DualVariant,
    pub knot_vector: KnotVector,
    pub primal_degree: usize,
    /// Rate offset: 0 for equal order, 1/2 for two degrees lower.
    pub theta: Option<f64>,
}

impl MultiplierSpace {
    pub fn degree(&self) -> usize {
        self.knot_vector.degree()
    }

    pub fn dim(&self) -> usize {
        self.knot_vector.dim()
    }
}

pub fn multiplier_space(interface: &Interface, variant: DualVariant) -> Result<MultiplierSpace> {
    let trace = interface.slave_trace().knot_vector;
    let p = trace.degree();
    let d = variant.degree(p)?;
    if d < p {
        // a degree-d space on these breakpoints needs the trace to be C^{p-d-1}
        let m = trace.multiplicities();
        let interior = &m[1..m.len() - 1];
        if let Some(bad) = interior.iter().find(|&&mult| mult > d + 1) {
            return Err(Error::UnsupportedPairing(format!(
                "slave trace has an interior knot of multiplicity {bad}, too rough for dual degree {d}"
            )));
        }
    }
    let knot_vector = if d == p { trace } else { trace.with_degree(d)? };
    let theta = match p - d {
        0 => Some(0.0),
        2 => Some(0.5),
        _ => None,
    };
    Ok(MultiplierSpace { variant, knot_vector, primal_degree: p, theta })
}

/// Patches, interfaces and boundary tags of one multipatch domain.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub patches: Vec<Arc<Patch>>,
    pub interfaces: Vec<Interface>,
    /// Boundary tag per patch, indexed by [`Face::index`].
    pub boundary: Vec<[BoundaryKind; 4]>,
}

impl Decomposition {
    pub fn new(
        patches: Vec<Arc<Patch>>,
        interfaces: Vec<Interface>,
        boundary: Vec<[BoundaryKind; 4]>,
    ) -> Result<Self> {
        if boundary.len() != patches.len() {
            return Err(Error::Construction("one boundary tag set per patch required".into()));
        }
        let mut used = vec![[false; 4]; patches.len()];
        for (l, iface) in interfaces.iter().enumerate() {
            for (k, face) in [(iface.master, iface.master_face), (iface.slave, iface.slave_face)] {
                if boundary[k][face.index()] != BoundaryKind::Interface {
                    return Err(Error::Construction(format!(
                        "interface {l} uses face {face:?} of patch {k} which is not tagged as interface"
                    )));
                }
                if used[k][face.index()] {
                    return Err(Error::Construction(format!("face {face:?} of patch {k} used twice")));
                }
                used[k][face.index()] = true;
                for adj in face.adjacent() {
                    if boundary[k][adj.index()] != BoundaryKind::Neumann {
                        return Err(Error::Construction(format!(
                            "interface {l} has a cross point at patch {k} face {adj:?}"
                        )));
                    }
                }
            }
        }
        for (k, tags) in boundary.iter().enumerate() {
            for face in Face::ALL {
                if tags[face.index()] == BoundaryKind::Interface && !used[k][face.index()] {
                    return Err(Error::Construction(format!(
                        "face {face:?} of patch {k} is tagged interface but unused"
                    )));
                }
            }
        }
        let dec = Self { patches, interfaces, boundary };
        dec.check_disjoint()?;
        Ok(dec)
    }

    /// Sampled check that no patch's interior points fall inside another patch.
    fn check_disjoint(&self) -> Result<()> {
        let outlines: Vec<Vec<Point>> = self.patches.iter().map(|p| outline(p)).collect::<Result<_>>()?;
        for (i, a) in self.patches.iter().enumerate() {
            for (j, poly) in outlines.iter().enumerate() {
                if i == j {
                    continue;
                }
                for u in 1..5 {
                    for v in 1..5 {
                        let x = a.eval_map([u as f64 / 5.0, v as f64 / 5.0])?;
                        if point_in_polygon(x, poly) {
                            return Err(Error::Construction(format!("patches {i} and {j} overlap")));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn num_primal(&self) -> usize {
        self.patches.iter().map(|p| p.field_dim()).sum()
    }

    /// Global index of the first dof of each patch.
    pub fn patch_offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.patches.len());
        let mut acc = 0;
        for p in &self.patches {
            off.push(acc);
            acc += p.field_dim();
        }
        off
    }
}

fn outline(patch: &Patch) -> Result<Vec<Point>> {
    let m = 64;
    let mut pts = Vec::with_capacity(4 * m);
    for k in 0..m {
        pts.push(patch.eval_map([k as f64 / m as f64, 0.0])?);
    }
    for k in 0..m {
        pts.push(patch.eval_map([1.0, k as f64 / m as f64])?);
    }
    for k in 0..m {
        pts.push(patch.eval_map([1.0 - k as f64 / m as f64, 1.0])?);
    }
    for k in 0..m {
        pts.push(patch.eval_map([0.0, 1.0 - k as f64 / m as f64])?);
    }
    Ok(pts)
}

fn point_in_polygon(x: Point, poly: &[Point]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > x[1]) != (b[1] > x[1]) && x[0] < (b[0] - a[0]) * (x[1] - a[1]) / (b[1] - a[1]) + a[0] {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Mesh cases of the two-patch benchmark on `(0,1) × (-1,1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    /// Slave one element, master one uniform refinement of it.
    M1,
    /// Slave one element, master two uniform refinements of it.
    M2,
    /// Slave interior knots `{π/10, 1-π/7}`, master 2×2 uniform.
    M3,
    /// Both patches 2×2 uniform.
    Matching,
}

impl Case {
    /// Level-0 breakpoints of (slave, master) in each parametric direction.
    pub fn initial_breakpoints(self) -> (Vec<f64>, Vec<f64>) {
        let pi = std::f64::consts::PI;
        let uniform = |e: usize| (0..=e).map(|i| i as f64 / e as f64).collect::<Vec<_>>();
        match self {
            Case::M1 => (uniform(1), uniform(2)),
            Case::M2 => (uniform(1), uniform(4)),
            Case::M3 => (vec![0.0, pi / 10.0, 1.0 - pi / 7.0, 1.0], uniform(2)),
            Case::Matching => (uniform(2), uniform(2)),
        }
    }
}

impl std::str::FromStr for Case {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "M1" => Ok(Case::M1),
            "M2" => Ok(Case::M2),
            "M3" => Ok(Case::M3),
            "MATCHING" => Ok(Case::Matching),
            _ => Err(Error::Config(format!("unknown case '{s}'"))),
        }
    }
}

impl std::fmt::Display for Case {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Case::M1 => "M1",
            Case::M2 => "M2",
            Case::M3 => "M3",
            Case::Matching => "MATCHING",
        };
        f.write_str(s)
    }
}

/// Two-patch decomposition of `(0,1) × (-1,1)` split at `y = 0`.
///
/// Patch 0 is the lower half, patch 1 the upper half. The upper patch is the
/// slave unless `swap_roles` is set, in which case the lower patch (carrying
/// the master mesh of the case) becomes the slave. Both field spaces are the
/// case's level-0 meshes refined `level` times. Top and bottom are Dirichlet,
/// left and right Neumann.
pub fn build_two_patch(case: Case, degree: usize, level: usize, swap_roles: bool) -> Result<Decomposition> {
    if degree == 0 {
        return Err(Error::Argument("primal degree must be at least 1".into()));
    }
    let (slave_bp, master_bp) = case.initial_breakpoints();
    let kv_s = KnotVector::from_breakpoints(degree, &slave_bp, 1)?;
    let kv_m = KnotVector::from_breakpoints(degree, &master_bp, 1)?;
    let upper = NurbsSurface::rectangle([0.0, 1.0], [0.0, 1.0], kv_s.clone(), kv_s)?;
    let lower = NurbsSurface::rectangle([0.0, 1.0], [-1.0, 0.0], kv_m.clone(), kv_m)?;
    let patches = vec![Arc::new(Patch::refined(lower, level)?), Arc::new(Patch::refined(upper, level)?)];
    let iface = if swap_roles {
        Interface::new(&patches, 1, Face::Bottom, 0, Face::Top)?
    } else {
        Interface::new(&patches, 0, Face::Top, 1, Face::Bottom)?
    };
    let (n, d, i) = (BoundaryKind::Neumann, BoundaryKind::Dirichlet, BoundaryKind::Interface);
    let lower_tags = [n, n, d, i];
    let upper_tags = [n, n, i, d];
    Decomposition::new(patches, vec![iface], vec![lower_tags, upper_tags])
}
