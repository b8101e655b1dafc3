//! Univariate B-spline machinery on open knot vectors over [0, 1].
//!
//! Basis evaluation follows the triangular Cox-de Boor scheme: only the
//! `p + 1` functions that are nonzero on a knot span are computed, together
//! with the index of the first of them. Spans are half-open `[ξ_i, ξ_{i+1})`
//! except that `ζ = 1` is assigned to the last nonempty span.

use faer::Mat;

use crate::error::{Error, Result};

/// Open univariate knot vector with its polynomial degree.
///
/// Knots are stored with 0-based indices, so the first `p + 1` entries are 0
/// and the last `p + 1` entries are 1.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    degree: usize,
    knots: Vec<f64>,
}

impl KnotVector {
    pub fn new(degree: usize, knots: Vec<f64>) -> Result<Self> {
        let p = degree;
        if knots.len() < 2 * (p + 1) {
            return Err(Error::KnotVector(format!(
                "{} knots cannot hold an open knot vector of degree {p}",
                knots.len()
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::KnotVector("non-finite knot".into()));
        }
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::KnotVector("knots must be nondecreasing".into()));
        }
        let m = knots.len();
        if knots[..=p].iter().any(|&k| k != 0.0) || knots[m - p - 1..].iter().any(|&k| k != 1.0) {
            return Err(Error::KnotVector(format!(
                "first and last knots must be 0 and 1 repeated {} times",
                p + 1
            )));
        }
        if knots[p + 1] == 0.0 || knots[m - p - 2] == 1.0 {
            return Err(Error::KnotVector("boundary knots repeated more than p + 1 times".into()));
        }
        let kv = Self { degree, knots };
        if kv.multiplicities().iter().any(|&mult| mult > p + 1) {
            return Err(Error::KnotVector("interior multiplicity exceeds p + 1".into()));
        }
        Ok(kv)
    }

    /// Open knot vector whose interior breakpoints all have the given multiplicity.
    pub fn from_breakpoints(degree: usize, breakpoints: &[f64], interior_multiplicity: usize) -> Result<Self> {
        if breakpoints.len() < 2 || breakpoints[0] != 0.0 || *breakpoints.last().unwrap() != 1.0 {
            return Err(Error::KnotVector("breakpoints must start at 0 and end at 1".into()));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::KnotVector("breakpoints must be strictly increasing".into()));
        }
        if interior_multiplicity == 0 {
            return Err(Error::KnotVector("interior multiplicity must be at least 1".into()));
        }
        let mut knots = vec![0.0; degree + 1];
        for &z in &breakpoints[1..breakpoints.len() - 1] {
            knots.extend(std::iter::repeat(z).take(interior_multiplicity));
        }
        knots.extend(std::iter::repeat(1.0).take(degree + 1));
        Self::new(degree, knots)
    }

    /// Maximal-smoothness knot vector with `elements` equal spans.
    pub fn uniform(degree: usize, elements: usize) -> Result<Self> {
        if elements == 0 {
            return Err(Error::KnotVector("need at least one element".into()));
        }
        let bps: Vec<f64> = (0..=elements).map(|i| i as f64 / elements as f64).collect();
        Self::from_breakpoints(degree, &bps, 1)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of basis functions `n`.
    pub fn dim(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// Distinct knot values in increasing order.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut z: Vec<f64> = Vec::new();
        for &k in &self.knots {
            if z.last() != Some(&k) {
                z.push(k);
            }
        }
        z
    }

    /// Multiplicity of each breakpoint, aligned with [`breakpoints`](Self::breakpoints).
    pub fn multiplicities(&self) -> Vec<usize> {
        let mut m: Vec<usize> = Vec::new();
        let mut last = f64::NAN;
        for &k in &self.knots {
            if k == last {
                *m.last_mut().unwrap() += 1;
            } else {
                m.push(1);
                last = k;
            }
        }
        m
    }

    pub fn num_elements(&self) -> usize {
        self.breakpoints().len() - 1
    }

    /// Knot-span indices `i` with `ξ_i < ξ_{i+1}`, one per element, in order.
    pub fn element_spans(&self) -> Vec<usize> {
        (self.degree..self.dim()).filter(|&i| self.knots[i] < self.knots[i + 1]).collect()
    }

    /// Index `i` of the knot span containing `zeta`.
    pub fn find_span(&self, zeta: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&zeta) {
            return Err(Error::Domain { value: zeta });
        }
        let n = self.dim();
        if zeta == 1.0 {
            // last nonempty span: knots[n - 1] < 1 holds for open vectors
            return Ok(n - 1);
        }
        // largest i in [p, n-1] with knots[i] <= zeta
        let slice = &self.knots[self.degree..n];
        let pos = slice.partition_point(|&k| k <= zeta);
        Ok(self.degree + pos - 1)
    }

    /// Nonzero basis values at `zeta`: returns the first basis index and the
    /// `p + 1` values `B_first(ζ) … B_{first+p}(ζ)`.
    pub fn eval_basis(&self, zeta: f64) -> Result<(usize, Vec<f64>)> {
        let span = self.find_span(zeta)?;
        let mut out = vec![0.0; self.degree + 1];
        self.basis_in_span(span, zeta, &mut out);
        Ok((span - self.degree, out))
    }

    /// Basis values on a known span; `out` must hold `p + 1` entries.
    pub(crate) fn basis_in_span(&self, span: usize, zeta: f64, out: &mut [f64]) {
        let p = self.degree;
        let u = &self.knots;
        let mut left = [0.0; 32];
        let mut right = [0.0; 32];
        out[0] = 1.0;
        for j in 1..=p {
            left[j] = zeta - u[span + 1 - j];
            right[j] = u[span + j] - zeta;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = out[r] / (right[r + 1] + left[j - r]);
                out[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            out[j] = saved;
        }
    }

    /// Values and derivatives up to order `k` of the nonzero basis functions.
    ///
    /// Row `r` of the returned table holds the `r`-th derivatives.
    pub fn eval_basis_derivs(&self, zeta: f64, k: usize) -> Result<(usize, Vec<Vec<f64>>)> {
        if k > self.degree {
            return Err(Error::Argument(format!(
                "derivative order {k} exceeds degree {}",
                self.degree
            )));
        }
        let span = self.find_span(zeta)?;
        Ok((span - self.degree, self.basis_derivs_in_span(span, zeta, k)))
    }

    pub(crate) fn basis_derivs_in_span(&self, span: usize, zeta: f64, k: usize) -> Vec<Vec<f64>> {
        let p = self.degree;
        let u = &self.knots;
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = zeta - u[span + 1 - j];
            right[j] = u[span + j] - zeta;
            let mut saved = 0.0;
            for r in 0..j {
                // lower triangle holds knot differences
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }

        let mut ders = vec![vec![0.0; p + 1]; k + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let mut a = vec![vec![0.0; p + 1]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for kk in 1..=k {
                let mut d = 0.0;
                let rk = r as isize - kk as isize;
                let pk = p - kk;
                if r >= kk {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if (r as isize - 1) <= pk as isize { kk - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][kk] = -a[s1][kk - 1] / ndu[pk + 1][r];
                    d += a[s2][kk] * ndu[r][pk];
                }
                ders[kk][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for kk in 1..=k {
            for v in ders[kk].iter_mut() {
                *v *= factor;
            }
            factor *= (p - kk) as f64;
        }
        ders
    }

    /// Knot averages `g_i = (ξ_{i+1} + … + ξ_{i+p}) / p`. Degree 0 uses span midpoints.
    pub fn greville(&self) -> Vec<f64> {
        let p = self.degree;
        (0..self.dim())
            .map(|i| {
                if p == 0 {
                    0.5 * (self.knots[i] + self.knots[i + 1])
                } else {
                    self.knots[i + 1..=i + p].iter().sum::<f64>() / p as f64
                }
            })
            .collect()
    }

    /// Dyadic refinement: each step inserts the midpoint of every element once.
    pub fn h_refine(&self, steps: usize) -> KnotVector {
        let mut kv = self.clone();
        for _ in 0..steps {
            let z = kv.breakpoints();
            let mut knots = Vec::with_capacity(kv.knots.len() + z.len());
            let mut zi = 0;
            for &k in &kv.knots {
                // before the first copy of breakpoint z[zi+1], insert the midpoint
                if zi + 1 < z.len() && k == z[zi + 1] {
                    knots.push(0.5 * (z[zi] + z[zi + 1]));
                    zi += 1;
                }
                knots.push(k);
            }
            kv = KnotVector { degree: kv.degree, knots };
        }
        kv
    }

    /// Degree-`degree` open knot vector on the same breakpoints with each
    /// interior multiplicity capped at `degree + 1`.
    pub fn with_degree(&self, degree: usize) -> Result<KnotVector> {
        let z = self.breakpoints();
        let m = self.multiplicities();
        let mut knots = vec![0.0; degree + 1];
        for j in 1..z.len() - 1 {
            knots.extend(std::iter::repeat(z[j]).take(m[j].min(degree + 1)));
        }
        knots.extend(std::iter::repeat(1.0).take(degree + 1));
        KnotVector::new(degree, knots)
    }
}

/// Spline space `S^p(Ξ)` spanned by the B-splines of a knot vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineSpace {
    kv: KnotVector,
}

impl SplineSpace {
    pub fn new(kv: KnotVector) -> Self {
        Self { kv }
    }

    pub fn knot_vector(&self) -> &KnotVector {
        &self.kv
    }

    pub fn degree(&self) -> usize {
        self.kv.degree()
    }

    pub fn dim(&self) -> usize {
        self.kv.dim()
    }

    /// All `n` basis values at `zeta`, zeros outside the local span.
    pub fn eval_all(&self, zeta: f64) -> Result<Vec<f64>> {
        let (first, vals) = self.kv.eval_basis(zeta)?;
        let mut out = vec![0.0; self.dim()];
        out[first..first + vals.len()].copy_from_slice(&vals);
        Ok(out)
    }

    /// Value of `Σ c_i B_i(ζ)`.
    pub fn eval(&self, coeffs: &[f64], zeta: f64) -> Result<f64> {
        if coeffs.len() != self.dim() {
            return Err(Error::Argument(format!(
                "expected {} coefficients, got {}",
                self.dim(),
                coeffs.len()
            )));
        }
        let (first, vals) = self.kv.eval_basis(zeta)?;
        Ok(vals.iter().enumerate().map(|(a, v)| v * coeffs[first + a]).sum())
    }
}

/// Matrix `M` (`n_fine × n_coarse`) mapping coarse spline coefficients to the
/// fine coefficients of the same function.
///
/// Built by inserting the missing knots one at a time (Boehm's algorithm)
/// into the identity.
pub fn knot_insertion_matrix(coarse: &KnotVector, fine: &KnotVector) -> Result<Mat<f64>> {
    if coarse.degree != fine.degree {
        return Err(Error::Argument("knot vectors have different degrees".into()));
    }
    let p = coarse.degree;
    // multiset difference fine \ coarse
    let mut new_knots = Vec::new();
    let (mut i, mut j) = (0, 0);
    let (c, f) = (&coarse.knots, &fine.knots);
    while j < f.len() {
        if i < c.len() && c[i] == f[j] {
            i += 1;
            j += 1;
        } else if i < c.len() && c[i] < f[j] {
            return Err(Error::Argument(format!("coarse knot {} missing from fine knot vector", c[i])));
        } else {
            new_knots.push(f[j]);
            j += 1;
        }
    }
    if i < c.len() {
        return Err(Error::Argument("fine knot vector does not contain the coarse one".into()));
    }

    let nc = coarse.dim();
    // rows: current basis functions, columns: coarse coefficients
    let mut rows: Vec<Vec<f64>> = (0..nc)
        .map(|r| {
            let mut e = vec![0.0; nc];
            e[r] = 1.0;
            e
        })
        .collect();
    let mut knots = c.clone();
    for &u in &new_knots {
        let kv = KnotVector { degree: p, knots: knots.clone() };
        let k = if u == 1.0 { kv.dim() - 1 } else { kv.find_span(u)? };
        let n = rows.len();
        let mut next = Vec::with_capacity(n + 1);
        for idx in 0..=n {
            if idx + p <= k {
                next.push(rows[idx].clone());
            } else if idx > k {
                next.push(rows[idx - 1].clone());
            } else {
                let alpha = (u - knots[idx]) / (knots[idx + p] - knots[idx]);
                let row = rows[idx]
                    .iter()
                    .zip(&rows[idx - 1])
                    .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
                    .collect();
                next.push(row);
            }
        }
        rows = next;
        knots.insert(k + 1, u);
    }
    debug_assert_eq!(rows.len(), fine.dim());
    Ok(Mat::from_fn(rows.len(), nc, |r, col| rows[r][col]))
}
