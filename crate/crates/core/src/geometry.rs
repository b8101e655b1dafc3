//! Tensor-product NURBS spaces, control nets and patch geometry maps.

use faer::prelude::*;
use faer::Mat;

use crate::error::{Error, Result};
use crate::spline::{knot_insertion_matrix, KnotVector};

pub type Point = [f64; 2];

/// Parametric faces of the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Face {
    /// `ζ₁ = 0`
    Left,
    /// `ζ₁ = 1`
    Right,
    /// `ζ₂ = 0`
    Bottom,
    /// `ζ₂ = 1`
    Top,
}

impl Face {
    pub const ALL: [Face; 4] = [Face::Left, Face::Right, Face::Bottom, Face::Top];

    /// Parametric direction that is constant on the face.
    pub fn normal_dir(self) -> usize {
        match self {
            Face::Left | Face::Right => 0,
            Face::Bottom | Face::Top => 1,
        }
    }

    /// Parametric direction running along the face.
    pub fn tangent_dir(self) -> usize {
        1 - self.normal_dir()
    }

    pub fn fixed_value(self) -> f64 {
        match self {
            Face::Left | Face::Bottom => 0.0,
            Face::Right | Face::Top => 1.0,
        }
    }

    /// Parametric point at face parameter `t`.
    pub fn point(self, t: f64) -> Point {
        match self {
            Face::Left => [0.0, t],
            Face::Right => [1.0, t],
            Face::Bottom => [t, 0.0],
            Face::Top => [t, 1.0],
        }
    }

    /// Faces touching the endpoints of this face.
    pub fn adjacent(self) -> [Face; 2] {
        match self {
            Face::Left | Face::Right => [Face::Bottom, Face::Top],
            Face::Bottom | Face::Top => [Face::Left, Face::Right],
        }
    }

    pub fn index(self) -> usize {
        match self {
            Face::Left => 0,
            Face::Right => 1,
            Face::Bottom => 2,
            Face::Top => 3,
        }
    }
}

/// Tensor product of two univariate spaces of equal degree.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSpace {
    kvs: [KnotVector; 2],
}

impl TensorSpace {
    pub fn new(u: KnotVector, v: KnotVector) -> Result<Self> {
        if u.degree() != v.degree() {
            return Err(Error::Argument(format!(
                "directions have different degrees {} and {}",
                u.degree(),
                v.degree()
            )));
        }
        Ok(Self { kvs: [u, v] })
    }

    pub fn knot_vector(&self, dir: usize) -> &KnotVector {
        &self.kvs[dir]
    }

    pub fn degree(&self) -> usize {
        self.kvs[0].degree()
    }

    pub fn dims(&self) -> [usize; 2] {
        [self.kvs[0].dim(), self.kvs[1].dim()]
    }

    pub fn dim(&self) -> usize {
        self.kvs[0].dim() * self.kvs[1].dim()
    }

    /// Flat index of multi-index `(i₁, i₂)`; `i₁` runs fastest.
    pub fn index(&self, i1: usize, i2: usize) -> usize {
        i1 + self.kvs[0].dim() * i2
    }

    pub fn h_refine(&self, steps: usize) -> TensorSpace {
        TensorSpace { kvs: [self.kvs[0].h_refine(steps), self.kvs[1].h_refine(steps)] }
    }

    pub fn num_elements(&self) -> usize {
        self.kvs[0].num_elements() * self.kvs[1].num_elements()
    }
}

/// Control points with positive weights, indexed like the tensor space.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedControlNet {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
}

/// Rational basis functions, derivatives and the map at one parametric point.
#[derive(Debug, Clone, Default)]
pub struct LocalEval {
    /// Multi-index of the first nonzero function.
    pub first: [usize; 2],
    /// Number of local functions per direction (`p + 1`).
    pub width: usize,
    /// Rational basis values, local index `a₁ + width·a₂`.
    pub values: Vec<f64>,
    /// Parametric gradients of the rational basis.
    pub param_grads: Vec<[f64; 2]>,
    pub x: Point,
    /// `jac[a][b] = ∂F_a/∂ζ_b`
    pub jac: [[f64; 2]; 2],
}

impl LocalEval {
    pub fn det(&self) -> f64 {
        self.jac[0][0] * self.jac[1][1] - self.jac[0][1] * self.jac[1][0]
    }

    /// Physical gradients `DF^{-T} ∇_ζ N`.
    pub fn physical_grads(&self) -> Result<Vec<[f64; 2]>> {
        let det = self.det();
        if det.abs() < 1e-14 {
            return Err(Error::SingularGeometry { det, u: f64::NAN, v: f64::NAN });
        }
        let j = &self.jac;
        Ok(self
            .param_grads
            .iter()
            .map(|g| {
                [
                    (j[1][1] * g[0] - j[1][0] * g[1]) / det,
                    (-j[0][1] * g[0] + j[0][0] * g[1]) / det,
                ]
            })
            .collect())
    }
}

/// NURBS surface: a tensor space plus a weighted control net.
#[derive(Debug, Clone, PartialEq)]
pub struct NurbsSurface {
    space: TensorSpace,
    net: WeightedControlNet,
}

impl NurbsSurface {
    pub fn new(space: TensorSpace, net: WeightedControlNet) -> Result<Self> {
        let n = space.dim();
        if net.points.len() != n || net.weights.len() != n {
            return Err(Error::Geometry(format!(
                "control net has {} points and {} weights, space dimension is {n}",
                net.points.len(),
                net.weights.len()
            )));
        }
        if net.weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::Geometry("weights must be strictly positive".into()));
        }
        Ok(Self { space, net })
    }

    /// Axis-aligned rectangle with unit weights, control points at the
    /// Greville abscissae of the given knot vectors.
    pub fn rectangle(x: [f64; 2], y: [f64; 2], u: KnotVector, v: KnotVector) -> Result<Self> {
        let gu = u.greville();
        let gv = v.greville();
        let space = TensorSpace::new(u, v)?;
        let mut points = Vec::with_capacity(space.dim());
        for &b in &gv {
            for &a in &gu {
                points.push([x[0] + (x[1] - x[0]) * a, y[0] + (y[1] - y[0]) * b]);
            }
        }
        let weights = vec![1.0; points.len()];
        Self::new(space, WeightedControlNet { points, weights })
    }

    pub fn space(&self) -> &TensorSpace {
        &self.space
    }

    pub fn net(&self) -> &WeightedControlNet {
        &self.net
    }

    /// Weight function `Ŵ(ζ) = Σ ω_i B_i(ζ)`.
    pub fn eval_weight(&self, zeta: Point) -> Result<f64> {
        let spans = self.spans(zeta)?;
        let p = self.space.degree();
        let mut b1 = vec![0.0; p + 1];
        let mut b2 = vec![0.0; p + 1];
        self.space.kvs[0].basis_in_span(spans[0], zeta[0], &mut b1);
        self.space.kvs[1].basis_in_span(spans[1], zeta[1], &mut b2);
        let mut w = 0.0;
        for (a2, v2) in b2.iter().enumerate() {
            for (a1, v1) in b1.iter().enumerate() {
                let idx = self.space.index(spans[0] - p + a1, spans[1] - p + a2);
                w += self.net.weights[idx] * v1 * v2;
            }
        }
        if !(w > 0.0) {
            return Err(Error::Geometry(format!("weight function {w} is not positive")));
        }
        Ok(w)
    }

    pub fn eval_map(&self, zeta: Point) -> Result<Point> {
        Ok(self.eval(zeta)?.x)
    }

    /// Jacobian `DF(ζ)`; fails if `|det DF| < 1e-14`.
    pub fn eval_jacobian(&self, zeta: Point) -> Result<[[f64; 2]; 2]> {
        let e = self.eval(zeta)?;
        let det = e.det();
        if det.abs() < 1e-14 {
            return Err(Error::SingularGeometry { det, u: zeta[0], v: zeta[1] });
        }
        Ok(e.jac)
    }

    fn spans(&self, zeta: Point) -> Result<[usize; 2]> {
        Ok([self.space.kvs[0].find_span(zeta[0])?, self.space.kvs[1].find_span(zeta[1])?])
    }

    /// Rational basis and map at `zeta`, spans located automatically.
    pub fn eval(&self, zeta: Point) -> Result<LocalEval> {
        let spans = self.spans(zeta)?;
        let mut out = LocalEval::default();
        self.eval_in_spans(spans, zeta, &mut out)?;
        Ok(out)
    }

    /// Rational basis and map at `zeta` on the given knot spans.
    pub fn eval_in_spans(&self, spans: [usize; 2], zeta: Point, out: &mut LocalEval) -> Result<()> {
        let d1 = self.space.kvs[0].basis_derivs_in_span(spans[0], zeta[0], 1.min(self.space.degree()));
        let d2 = self.space.kvs[1].basis_derivs_in_span(spans[1], zeta[1], 1.min(self.space.degree()));
        let zero = vec![0.0; self.space.degree() + 1];
        let (g1, g2) = (d1.get(1).unwrap_or(&zero), d2.get(1).unwrap_or(&zero));
        self.combine(spans, [&d1[0], g1], [&d2[0], g2], out)
    }

    /// Tensor/rational combination from precomputed univariate values and
    /// first derivatives.
    pub(crate) fn combine(
        &self,
        spans: [usize; 2],
        u: [&[f64]; 2],
        v: [&[f64]; 2],
        out: &mut LocalEval,
    ) -> Result<()> {
        let p = self.space.degree();
        let w = p + 1;
        let first = [spans[0] - p, spans[1] - p];
        out.first = first;
        out.width = w;
        out.values.resize(w * w, 0.0);
        out.param_grads.resize(w * w, [0.0; 2]);
        let n1 = self.space.kvs[0].dim();

        let (mut wsum, mut dw) = (0.0, [0.0; 2]);
        for a2 in 0..w {
            let row = (first[1] + a2) * n1 + first[0];
            for a1 in 0..w {
                let om = self.net.weights[row + a1];
                let l = a1 + w * a2;
                let b = om * u[0][a1] * v[0][a2];
                let db = [om * u[1][a1] * v[0][a2], om * u[0][a1] * v[1][a2]];
                out.values[l] = b;
                out.param_grads[l] = db;
                wsum += b;
                dw[0] += db[0];
                dw[1] += db[1];
            }
        }
        if !(wsum > 0.0) {
            return Err(Error::Geometry(format!("weight function {wsum} is not positive")));
        }
        let inv = 1.0 / wsum;
        let mut x = [0.0; 2];
        let mut jac = [[0.0; 2]; 2];
        for a2 in 0..w {
            let row = (first[1] + a2) * n1 + first[0];
            for a1 in 0..w {
                let l = a1 + w * a2;
                let b = out.values[l];
                let db = out.param_grads[l];
                let nval = b * inv;
                let dn = [(db[0] - nval * dw[0]) * inv, (db[1] - nval * dw[1]) * inv];
                out.values[l] = nval;
                out.param_grads[l] = dn;
                let c = self.net.points[row + a1];
                for a in 0..2 {
                    x[a] += c[a] * nval;
                    jac[a][0] += c[a] * dn[0];
                    jac[a][1] += c[a] * dn[1];
                }
            }
        }
        out.x = x;
        out.jac = jac;
        Ok(())
    }

    /// The same surface expressed on a refined space (exact transport of
    /// the homogeneous control points through knot insertion).
    pub fn refine_to(&self, fine: &TensorSpace) -> Result<NurbsSurface> {
        let m1 = knot_insertion_matrix(self.space.knot_vector(0), fine.knot_vector(0))?;
        let m2 = knot_insertion_matrix(self.space.knot_vector(1), fine.knot_vector(1))?;
        let [c1, c2] = self.space.dims();
        let [f1, f2] = fine.dims();
        // homogeneous coordinates (ω x, ω y, ω)
        let mut homog = vec![[0.0; 3]; c1 * c2];
        for (h, (pt, &w)) in homog.iter_mut().zip(self.net.points.iter().zip(&self.net.weights)) {
            *h = [w * pt[0], w * pt[1], w];
        }
        // direction 1
        let mut tmp = vec![[0.0; 3]; f1 * c2];
        for j in 0..c2 {
            for i in 0..f1 {
                let mut acc = [0.0; 3];
                for k in 0..c1 {
                    let m = m1[(i, k)];
                    if m != 0.0 {
                        let h = homog[k + c1 * j];
                        for a in 0..3 {
                            acc[a] += m * h[a];
                        }
                    }
                }
                tmp[i + f1 * j] = acc;
            }
        }
        let mut points = vec![[0.0; 2]; f1 * f2];
        let mut weights = vec![0.0; f1 * f2];
        for j in 0..f2 {
            for i in 0..f1 {
                let mut acc = [0.0; 3];
                for k in 0..c2 {
                    let m = m2[(j, k)];
                    if m != 0.0 {
                        let h = tmp[i + f1 * k];
                        for a in 0..3 {
                            acc[a] += m * h[a];
                        }
                    }
                }
                let idx = i + f1 * j;
                weights[idx] = acc[2];
                points[idx] = [acc[0] / acc[2], acc[1] / acc[2]];
            }
        }
        NurbsSurface::new(fine.clone(), WeightedControlNet { points, weights })
    }
}

/// One parametric element of a patch's field mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub index: [usize; 2],
    pub spans: [usize; 2],
    /// `[[a₁, b₁], [a₂, b₂]]`
    pub bounds: [[f64; 2]; 2],
    /// Physical images of the four parametric corners.
    pub corners: [Point; 4],
}

impl Element {
    /// Largest distance between corner images.
    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..4 {
            for j in i + 1..4 {
                let (a, b) = (self.corners[i], self.corners[j]);
                d = d.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
            }
        }
        d
    }
}

/// Value and physical gradient of a discrete field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldValue {
    pub value: f64,
    pub gradient: [f64; 2],
}

/// One subdomain: its geometry and the approximation space on it.
///
/// The field surface is the geometry transported onto the (refined) field
/// space, so basis functions and map share one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    geometry: NurbsSurface,
    field: NurbsSurface,
}

impl Patch {
    pub fn new(geometry: NurbsSurface, field_space: TensorSpace) -> Result<Self> {
        if field_space.degree() != geometry.space().degree() {
            return Err(Error::Geometry("field and geometry degrees differ".into()));
        }
        let field = geometry.refine_to(&field_space)?;
        let patch = Self { geometry, field };
        patch.check_orientation()?;
        Ok(patch)
    }

    /// Patch whose field space is the geometry space refined `steps` times.
    pub fn refined(geometry: NurbsSurface, steps: usize) -> Result<Self> {
        let fs = geometry.space().h_refine(steps);
        Self::new(geometry, fs)
    }

    /// Jacobian determinant sign check on a sampling grid.
    fn check_orientation(&self) -> Result<()> {
        let mut sign = 0.0;
        let m = 7;
        for i in 0..m {
            for j in 0..m {
                let z = [(i as f64 + 0.5) / m as f64, (j as f64 + 0.5) / m as f64];
                let det = self.geometry.eval(z)?.det();
                if det.abs() < 1e-14 {
                    return Err(Error::SingularGeometry { det, u: z[0], v: z[1] });
                }
                if sign == 0.0 {
                    sign = det.signum();
                } else if det.signum() != sign {
                    return Err(Error::Geometry("Jacobian determinant changes sign".into()));
                }
            }
        }
        Ok(())
    }

    pub fn geometry(&self) -> &NurbsSurface {
        &self.geometry
    }

    /// Geometry on the field space; its basis is the field basis.
    pub fn field(&self) -> &NurbsSurface {
        &self.field
    }

    pub fn field_space(&self) -> &TensorSpace {
        self.field.space()
    }

    pub fn degree(&self) -> usize {
        self.field.space().degree()
    }

    pub fn field_dim(&self) -> usize {
        self.field.space().dim()
    }

    pub fn eval_weight(&self, zeta: Point) -> Result<f64> {
        self.geometry.eval_weight(zeta)
    }

    pub fn eval_map(&self, zeta: Point) -> Result<Point> {
        self.geometry.eval_map(zeta)
    }

    pub fn eval_jacobian(&self, zeta: Point) -> Result<[[f64; 2]; 2]> {
        self.geometry.eval_jacobian(zeta)
    }

    /// Sign of `det DF` (the orientation of the parametrization).
    pub fn orientation(&self) -> f64 {
        self.geometry.eval([0.5, 0.5]).map(|e| e.det().signum()).unwrap_or(1.0)
    }

    /// Elements of the field mesh, `ζ₁` fastest.
    pub fn elements(&self) -> Vec<Element> {
        let kv1 = self.field.space().knot_vector(0);
        let kv2 = self.field.space().knot_vector(1);
        let (s1, s2) = (kv1.element_spans(), kv2.element_spans());
        let mut out = Vec::with_capacity(s1.len() * s2.len());
        for (e2, &sp2) in s2.iter().enumerate() {
            for (e1, &sp1) in s1.iter().enumerate() {
                let bounds = [
                    [kv1.knots()[sp1], kv1.knots()[sp1 + 1]],
                    [kv2.knots()[sp2], kv2.knots()[sp2 + 1]],
                ];
                let corner = |a: f64, b: f64| self.geometry.eval_map([a, b]).unwrap_or([f64::NAN; 2]);
                let corners = [
                    corner(bounds[0][0], bounds[1][0]),
                    corner(bounds[0][1], bounds[1][0]),
                    corner(bounds[0][1], bounds[1][1]),
                    corner(bounds[0][0], bounds[1][1]),
                ];
                out.push(Element { index: [e1, e2], spans: [sp1, sp2], bounds, corners });
            }
        }
        out
    }

    /// Maximal physical element diameter.
    pub fn mesh_size(&self) -> f64 {
        self.elements().iter().map(Element::diameter).fold(0.0, f64::max)
    }

    /// Value and physical gradient of `Σ c_i N_i` at `F(ζ)`.
    pub fn eval_field(&self, coeffs: &[f64], zeta: Point) -> Result<FieldValue> {
        if coeffs.len() != self.field_dim() {
            return Err(Error::Argument(format!(
                "expected {} coefficients, got {}",
                self.field_dim(),
                coeffs.len()
            )));
        }
        let e = self.field.eval(zeta)?;
        let grads = e.physical_grads().map_err(|_| Error::SingularGeometry {
            det: e.det(),
            u: zeta[0],
            v: zeta[1],
        })?;
        let n1 = self.field.space().dims()[0];
        let mut value = 0.0;
        let mut gradient = [0.0; 2];
        for a2 in 0..e.width {
            for a1 in 0..e.width {
                let l = a1 + e.width * a2;
                let c = coeffs[(e.first[0] + a1) + n1 * (e.first[1] + a2)];
                value += c * e.values[l];
                gradient[0] += c * grads[l][0];
                gradient[1] += c * grads[l][1];
            }
        }
        Ok(FieldValue { value, gradient })
    }

    /// Field-space dofs whose functions do not vanish on `face`, ordered
    /// along the face.
    pub fn face_dofs(&self, face: Face) -> Vec<usize> {
        let [n1, n2] = self.field.space().dims();
        let space = self.field.space();
        match face {
            Face::Left => (0..n2).map(|j| space.index(0, j)).collect(),
            Face::Right => (0..n2).map(|j| space.index(n1 - 1, j)).collect(),
            Face::Bottom => (0..n1).map(|i| space.index(i, 0)).collect(),
            Face::Top => (0..n1).map(|i| space.index(i, n2 - 1)).collect(),
        }
    }

    /// Physical point and tangent `dF/dt` at face parameter `t`.
    pub fn face_point(&self, face: Face, t: f64) -> Result<(Point, Point)> {
        let e = self.geometry.eval(face.point(t))?;
        let d = face.tangent_dir();
        Ok((e.x, [e.jac[0][d], e.jac[1][d]]))
    }

    /// Unit outward normal on `face` at parameter `t`.
    pub fn outward_normal(&self, face: Face, t: f64) -> Result<Point> {
        let (_, tan) = self.face_point(face, t)?;
        let len = (tan[0] * tan[0] + tan[1] * tan[1]).sqrt();
        // rotation of the tangent for a positively oriented map
        let s = match face {
            Face::Right | Face::Bottom => 1.0,
            Face::Left | Face::Top => -1.0,
        } * self.orientation();
        Ok([s * tan[1] / len, -s * tan[0] / len])
    }

    /// Coefficients interpolating `f ∘ F` at the Greville points of the
    /// field space.
    pub fn interpolate(&self, f: impl Fn(Point) -> f64) -> Result<Vec<f64>> {
        let space = self.field.space();
        let [n1, n2] = space.dims();
        let g1 = space.knot_vector(0).greville();
        let g2 = space.knot_vector(1).greville();
        // collocation of Σ (c ω) B = Ŵ f
        let mut rhs = Mat::<f64>::zeros(n1, n2);
        for (j, &b) in g2.iter().enumerate() {
            for (i, &a) in g1.iter().enumerate() {
                let e = self.field.eval([a, b])?;
                let w = self.field.eval_weight([a, b])?;
                rhs[(i, j)] = w * f(e.x);
            }
        }
        let c1 = collocation_matrix(space.knot_vector(0), &g1)?;
        let c2 = collocation_matrix(space.knot_vector(1), &g2)?;
        let x = c1.partial_piv_lu().solve(&rhs);
        let xt = x.transpose().to_owned();
        let y = c2.partial_piv_lu().solve(&xt);
        let mut coeffs = vec![0.0; n1 * n2];
        for j in 0..n2 {
            for i in 0..n1 {
                let idx = space.index(i, j);
                coeffs[idx] = y[(j, i)] / self.field.net().weights[idx];
            }
        }
        Ok(coeffs)
    }
}

/// `C[l][i] = B_i(τ_l)`.
pub(crate) fn collocation_matrix(kv: &KnotVector, taus: &[f64]) -> Result<Mat<f64>> {
    let n = kv.dim();
    let mut m = Mat::<f64>::zeros(taus.len(), n);
    for (l, &t) in taus.iter().enumerate() {
        let (first, vals) = kv.eval_basis(t)?;
        for (a, v) in vals.iter().enumerate() {
            m[(l, first + a)] = *v;
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square(p: usize, elems: usize) -> NurbsSurface {
        let kv = KnotVector::uniform(p, elems).unwrap();
        NurbsSurface::rectangle([0.0, 1.0], [0.0, 1.0], kv.clone(), kv).unwrap()
    }

    fn bilinear_weighted() -> NurbsSurface {
        let kv = KnotVector::uniform(1, 1).unwrap();
        let space = TensorSpace::new(kv.clone(), kv).unwrap();
        NurbsSurface::new(
            space,
            WeightedControlNet {
                points: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
                weights: vec![1.0, 2.0, 1.0, 2.0],
            },
        )
        .unwrap()
    }

    #[test]
    fn weight_function_examples() {
        let s = unit_square(3, 2);
        assert!((s.eval_weight([0.3, 0.8]).unwrap() - 1.0).abs() < 1e-15);
        let w = bilinear_weighted();
        assert_eq!(w.eval_weight([0.0, 0.0]).unwrap(), 1.0);
        assert!((w.eval_weight([0.5, 0.5]).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_nonpositive_weights() {
        let kv = KnotVector::uniform(1, 1).unwrap();
        let space = TensorSpace::new(kv.clone(), kv).unwrap();
        let net = WeightedControlNet {
            points: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
            weights: vec![1.0, 0.0, 1.0, 1.0],
        };
        assert!(matches!(NurbsSurface::new(space, net), Err(Error::Geometry(_))));
    }

    #[test]
    fn map_examples() {
        let s = unit_square(1, 1);
        let x = s.eval_map([0.3, 0.7]).unwrap();
        assert!((x[0] - 0.3).abs() < 1e-15 && (x[1] - 0.7).abs() < 1e-15);
        let j = s.eval_jacobian([0.3, 0.7]).unwrap();
        assert!((j[0][0] - 1.0).abs() < 1e-14 && j[0][1].abs() < 1e-14);
        assert!(j[1][0].abs() < 1e-14 && (j[1][1] - 1.0).abs() < 1e-14);

        let kv = KnotVector::uniform(3, 2).unwrap();
        let lower = NurbsSurface::rectangle([0.0, 1.0], [-1.0, 0.0], kv.clone(), kv).unwrap();
        let x = lower.eval_map([0.5, 0.5]).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-14 && (x[1] + 0.5).abs() < 1e-14);
        assert_eq!(lower.eval_map([1.0, 1.0]).unwrap(), [1.0, 0.0]);
        let j = lower.eval_jacobian([0.2, 0.9]).unwrap();
        assert!((j[0][0] - 1.0).abs() < 1e-13 && (j[1][1] - 1.0).abs() < 1e-13);
        assert!(j[0][1].abs() < 1e-13 && j[1][0].abs() < 1e-13);
    }

    #[test]
    fn rational_jacobian_matches_finite_differences() {
        let w = bilinear_weighted();
        let z = [0.37, 0.61];
        let j = w.eval_jacobian(z).unwrap();
        let h = 1e-6;
        for b in 0..2 {
            let mut zp = z;
            let mut zm = z;
            zp[b] += h;
            zm[b] -= h;
            let (xp, xm) = (w.eval_map(zp).unwrap(), w.eval_map(zm).unwrap());
            for a in 0..2 {
                let fd = (xp[a] - xm[a]) / (2.0 * h);
                assert!((fd - j[a][b]).abs() <= 1e-6 * j[a][b].abs().max(1.0));
            }
        }
    }

    #[test]
    fn element_counts() {
        let kv = KnotVector::uniform(2, 2).unwrap();
        let s = NurbsSurface::rectangle([0.0, 1.0], [0.0, 1.0], kv.clone(), kv).unwrap();
        let patch = Patch::refined(s, 0).unwrap();
        assert_eq!(patch.elements().len(), 4);

        let pi = std::f64::consts::PI;
        let kv = KnotVector::from_breakpoints(2, &[0.0, pi / 10.0, 1.0 - pi / 7.0, 1.0], 1).unwrap();
        let s = NurbsSurface::rectangle([0.0, 1.0], [0.0, 1.0], kv.clone(), kv).unwrap();
        assert_eq!(Patch::refined(s.clone(), 0).unwrap().elements().len(), 9);
        let refined = Patch::refined(s, 1).unwrap();
        let elems = refined.elements();
        assert_eq!(elems.len(), 36);
        let area: f64 = elems
            .iter()
            .map(|e| (e.bounds[0][1] - e.bounds[0][0]) * (e.bounds[1][1] - e.bounds[1][0]))
            .sum();
        assert!((area - 1.0).abs() < 1e-14);
    }

    #[test]
    fn field_examples() {
        let kv = KnotVector::uniform(3, 2).unwrap();
        let geo = NurbsSurface::rectangle([0.0, 1.0], [-1.0, 0.0], kv.clone(), kv).unwrap();
        let patch = Patch::refined(geo, 1).unwrap();
        let n = patch.field_dim();
        let one = patch.eval_field(&vec![1.0; n], [0.3, 0.4]).unwrap();
        assert!((one.value - 1.0).abs() < 1e-14);
        assert!(one.gradient[0].abs() < 1e-12 && one.gradient[1].abs() < 1e-12);
        let zero = patch.eval_field(&vec![0.0; n], [0.3, 0.4]).unwrap();
        assert_eq!(zero.value, 0.0);

        let c = patch.interpolate(|x| x[0]).unwrap();
        for z in [[0.1, 0.2], [0.77, 0.5], [1.0, 0.0]] {
            let f = patch.eval_field(&c, z).unwrap();
            let x = patch.eval_map(z).unwrap();
            assert!((f.value - x[0]).abs() < 1e-12);
            assert!((f.gradient[0] - 1.0).abs() < 1e-12 && f.gradient[1].abs() < 1e-12);
        }
        assert!(patch.eval_field(&c[1..], [0.5, 0.5]).is_err());
    }

    #[test]
    fn transported_geometry_is_unchanged() {
        let kv = KnotVector::from_breakpoints(2, &[0.0, 0.4, 1.0], 1).unwrap();
        let space = TensorSpace::new(kv.clone(), kv).unwrap();
        let n = space.dim();
        let points = (0..n)
            .map(|i| {
                let (a, b) = ((i % 4) as f64, (i / 4) as f64);
                [a + 0.1 * b * b, b + 0.05 * a * b]
            })
            .collect();
        let weights = (0..n).map(|i| 1.0 + 0.3 * ((i * 7) % 5) as f64).collect();
        let surf = NurbsSurface::new(space.clone(), WeightedControlNet { points, weights }).unwrap();
        let fine = surf.refine_to(&space.h_refine(2)).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                let z = [i as f64 / 9.0, (j as f64 + 0.3) / 9.5];
                let (a, b) = (surf.eval_map(z).unwrap(), fine.eval_map(z).unwrap());
                assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn outward_normals_of_unit_square() {
        let patch = Patch::refined(unit_square(2, 1), 0).unwrap();
        let expect = [
            (Face::Left, [-1.0, 0.0]),
            (Face::Right, [1.0, 0.0]),
            (Face::Bottom, [0.0, -1.0]),
            (Face::Top, [0.0, 1.0]),
        ];
        for (face, n) in expect {
            let got = patch.outward_normal(face, 0.3).unwrap();
            assert!((got[0] - n[0]).abs() < 1e-14 && (got[1] - n[1]).abs() < 1e-14, "{face:?}");
        }
    }
}
