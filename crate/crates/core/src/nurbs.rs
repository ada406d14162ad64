//! NURBS curves: exact boundary geometry for the curved wall elements.
//!
//! Only clamped knot vectors on `[0, 1]` are supported. Closed boundaries
//! (a cylinder wall, an airfoil) are stored as clamped curves whose first and
//! last control points coincide; the coincident end is the curve's seam.
//!
//! The orientation convention used throughout the crate is that the fluid lies
//! to the left of the direction of increasing parameter, so the unit normal
//! returned by [`NurbsCurve::outward_normal`] (the unit tangent rotated by
//! -90 degrees) points out of the fluid.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, SVD};
use thiserror::Error;

use crate::vec2::{self, Vec2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("parameter {0} outside [0, 1]")]
    Domain(f64),
    #[error("invalid knot vector: {0}")]
    KnotVector(String),
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error("degenerate weight sum at xi = {0}")]
    DegenerateWeights(f64),
    #[error("derivative order {0} is not supported (maximum 2)")]
    UnsupportedOrder(usize),
    #[error("zero tangent at xi = {0}")]
    ZeroTangent(f64),
    #[error("closest-point projection did not converge (best xi = {best_xi}, distance = {distance:e})")]
    Projection { best_xi: f64, distance: f64 },
    #[error("profile fit failed: {0}")]
    Fit(String),
    #[error("unknown curve id {0}")]
    UnknownCurve(u32),
    #[error("curve file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("i/o error on {path}: {msg}")]
    Io { path: String, msg: String },
}

/// Clamped knot vector on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    knots: Vec<f64>,
    degree: usize,
}

impl KnotVector {
    pub fn new(knots: Vec<f64>, degree: usize) -> Result<Self, GeometryError> {
        let p = degree;
        if knots.len() < 2 * (p + 1) {
            return Err(GeometryError::KnotVector(format!(
                "{} knots is too few for degree {p}",
                knots.len()
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(GeometryError::KnotVector("non-finite knot".into()));
        }
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(GeometryError::KnotVector("knots must be nondecreasing".into()));
        }
        let m = knots.len();
        if knots[..=p].iter().any(|&k| k != 0.0) || knots[m - p - 1..].iter().any(|&k| k != 1.0) {
            return Err(GeometryError::KnotVector(
                "first and last knots must be 0 and 1 repeated degree+1 times".into(),
            ));
        }
        if knots[p + 1] == 0.0 || knots[m - p - 2] == 1.0 {
            return Err(GeometryError::KnotVector(
                "end knots repeated more than degree+1 times".into(),
            ));
        }
        Ok(Self { knots, degree })
    }

    /// Clamped knot vector with uniformly spaced interior knots.
    pub fn clamped_uniform(n_ctrl: usize, degree: usize) -> Result<Self, GeometryError> {
        if n_ctrl < degree + 1 {
            return Err(GeometryError::KnotVector(format!(
                "{n_ctrl} control points cannot carry degree {degree}"
            )));
        }
        let n_spans = n_ctrl - degree;
        let mut knots = vec![0.0; degree + 1];
        knots.extend((1..n_spans).map(|i| i as f64 / n_spans as f64));
        knots.extend(std::iter::repeat(1.0).take(degree + 1));
        Self::new(knots, degree)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of control points this knot vector supports.
    pub fn n_ctrl(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// Index `i` with `knots[i] <= xi < knots[i + 1]`; `xi = 1` maps to the
    /// last nonempty span.
    pub fn find_span(&self, xi: f64) -> Result<usize, GeometryError> {
        if !(0.0..=1.0).contains(&xi) {
            return Err(GeometryError::Domain(xi));
        }
        let n = self.n_ctrl() - 1;
        if xi >= self.knots[n + 1] {
            return Ok(n);
        }
        let (mut low, mut high) = (self.degree, n + 1);
        let mut mid = (low + high) / 2;
        while xi < self.knots[mid] || xi >= self.knots[mid + 1] {
            if xi < self.knots[mid] {
                high = mid;
            } else {
                low = mid;
            }
            mid = (low + high) / 2;
        }
        Ok(mid)
    }

    /// Nonzero B-spline basis functions on `span` and their derivatives up to
    /// `n_der`; `out[k][j]` is the k-th derivative of `N_{span-p+j}`.
    fn basis_derivatives(&self, span: usize, xi: f64, n_der: usize) -> Vec<Vec<f64>> {
        let p = self.degree;
        let u = &self.knots;
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = xi - u[span + 1 - j];
            right[j] = u[span + j] - xi;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = vec![vec![0.0; p + 1]; n_der + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let mut a = vec![vec![0.0; p + 1]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=n_der.min(p) {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for k in 1..=n_der.min(p) {
            for v in ders[k].iter_mut() {
                *v *= factor;
            }
            factor *= (p - k) as f64;
        }
        ders
    }
}

/// Nonzero rational basis values at a parameter, owned by control points
/// `first..first + values.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisValues {
    pub first: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NurbsCurve {
    control_points: Vec<Vec2>,
    weights: Vec<f64>,
    knots: KnotVector,
}

impl NurbsCurve {
    pub fn new(
        control_points: Vec<Vec2>,
        weights: Vec<f64>,
        knots: KnotVector,
    ) -> Result<Self, GeometryError> {
        let n = control_points.len();
        if weights.len() != n {
            return Err(GeometryError::InvalidCurve(format!(
                "{} weights for {n} control points",
                weights.len()
            )));
        }
        if knots.n_ctrl() != n {
            return Err(GeometryError::InvalidCurve(format!(
                "knot vector supports {} control points, got {n}",
                knots.n_ctrl()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(GeometryError::InvalidCurve(format!("weight {w} is not positive")));
        }
        if control_points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(GeometryError::InvalidCurve("non-finite control point".into()));
        }
        Ok(Self { control_points, weights, knots })
    }

    /// Degree-1 segment from `a` to `b`.
    pub fn line(a: Vec2, b: Vec2) -> Self {
        let knots = KnotVector::new(vec![0.0, 0.0, 1.0, 1.0], 1).expect("valid line knots");
        Self::new(vec![a, b], vec![1.0, 1.0], knots).expect("valid line")
    }

    /// Exact full circle from four rational quadratic quarter arcs.
    ///
    /// Starts (and ends) at polar angle `start_angle`; `clockwise` selects the
    /// traversal direction. A clockwise circle has the fluid outside under the
    /// crate's orientation convention.
    pub fn circle(center: Vec2, radius: f64, start_angle: f64, clockwise: bool) -> Self {
        let sign = if clockwise { -1.0 } else { 1.0 };
        let corner = radius * std::f64::consts::SQRT_2;
        let half = std::f64::consts::FRAC_1_SQRT_2;
        let mut pts = Vec::with_capacity(9);
        let mut weights = Vec::with_capacity(9);
        for k in 0..9 {
            let angle = start_angle + sign * k as f64 * std::f64::consts::FRAC_PI_4;
            let (s, c) = angle.sin_cos();
            if k % 2 == 0 {
                pts.push([center[0] + radius * c, center[1] + radius * s]);
                weights.push(1.0);
            } else {
                pts.push([center[0] + corner * c, center[1] + corner * s]);
                weights.push(half);
            }
        }
        pts[8] = pts[0];
        let knots = KnotVector::new(
            vec![0.0, 0.0, 0.0, 0.25, 0.25, 0.5, 0.5, 0.75, 0.75, 1.0, 1.0, 1.0],
            2,
        )
        .expect("valid circle knots");
        Self::new(pts, weights, knots).expect("valid circle")
    }

    pub fn degree(&self) -> usize {
        self.knots.degree
    }

    pub fn control_points(&self) -> &[Vec2] {
        &self.control_points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn knot_vector(&self) -> &KnotVector {
        &self.knots
    }

    /// True when the first and last control points coincide.
    pub fn is_closed(&self) -> bool {
        let first = self.control_points[0];
        let last = self.control_points[self.control_points.len() - 1];
        vec2::dist(first, last) <= 1e-14 * (1.0 + vec2::norm(first))
    }

    pub fn rational_basis(&self, xi: f64) -> Result<BasisValues, GeometryError> {
        let span = self.knots.find_span(xi)?;
        let p = self.degree();
        let n = &self.knots.basis_derivatives(span, xi, 0)[0];
        let first = span - p;
        let mut values: Vec<f64> =
            n.iter().enumerate().map(|(j, nj)| nj * self.weights[first + j]).collect();
        let total: f64 = values.iter().sum();
        if !(total > 0.0) {
            return Err(GeometryError::DegenerateWeights(xi));
        }
        for v in values.iter_mut() {
            *v /= total;
        }
        Ok(BasisValues { first, values })
    }

    pub fn evaluate(&self, xi: f64) -> Result<Vec2, GeometryError> {
        let basis = self.rational_basis(xi)?;
        let mut point = [0.0; 2];
        for (j, r) in basis.values.iter().enumerate() {
            let b = self.control_points[basis.first + j];
            point[0] += r * b[0];
            point[1] += r * b[1];
        }
        Ok(point)
    }

    /// Point and parametric derivatives `[C, C', C'']` up to `order`.
    pub fn derivatives(&self, xi: f64, order: usize) -> Result<Vec<Vec2>, GeometryError> {
        if order > 2 {
            return Err(GeometryError::UnsupportedOrder(order));
        }
        let span = self.knots.find_span(xi)?;
        let p = self.degree();
        let first = span - p;
        let ders = self.knots.basis_derivatives(span, xi, order);
        // Weighted (homogeneous) sums A^(k) and W^(k).
        let mut a = vec![[0.0; 2]; order + 1];
        let mut w = vec![0.0; order + 1];
        for k in 0..=order {
            for j in 0..=p {
                let wj = self.weights[first + j];
                let b = self.control_points[first + j];
                let nw = ders[k][j] * wj;
                a[k][0] += nw * b[0];
                a[k][1] += nw * b[1];
                w[k] += nw;
            }
        }
        if !(w[0] > 0.0) {
            return Err(GeometryError::DegenerateWeights(xi));
        }
        let mut out = vec![[0.0; 2]; order + 1];
        out[0] = vec2::scale(a[0], 1.0 / w[0]);
        if order >= 1 {
            out[1] = vec2::scale(vec2::sub(a[1], vec2::scale(out[0], w[1])), 1.0 / w[0]);
        }
        if order >= 2 {
            let t = vec2::sub(
                vec2::sub(a[2], vec2::scale(out[1], 2.0 * w[1])),
                vec2::scale(out[0], w[2]),
            );
            out[2] = vec2::scale(t, 1.0 / w[0]);
        }
        Ok(out)
    }

    /// Parametric derivative of order 1 or 2.
    ///
    /// At a knot the derivative is taken from the span to the right of it
    /// (the left span at `xi = 1`).
    pub fn derivative(&self, xi: f64, order: usize) -> Result<Vec2, GeometryError> {
        if order == 0 || order > 2 {
            return Err(GeometryError::UnsupportedOrder(order));
        }
        Ok(self.derivatives(xi, order)?[order])
    }

    /// Unit normal pointing out of the fluid (tangent rotated by -90 degrees).
    pub fn outward_normal(&self, xi: f64) -> Result<Vec2, GeometryError> {
        let t = self.derivative(xi, 1)?;
        let len = vec2::norm(t);
        if !(len > 1e-300) {
            return Err(GeometryError::ZeroTangent(xi));
        }
        Ok(vec2::scale(vec2::rotate_cw(t), 1.0 / len))
    }

    /// Parameter of the point on the curve closest to `q`.
    ///
    /// Damped Newton iteration on the squared distance. Without an initial
    /// guess the iteration starts from every local minimum of 256 uniformly
    /// spaced samples and keeps the closest result (first on ties), so
    /// nearby branches such as the two sides of a thin trailing edge are
    /// told apart deterministically.
    pub fn closest_point(&self, q: Vec2, xi0: Option<f64>) -> Result<f64, GeometryError> {
        const SCAN: usize = 256;
        let seeds = match xi0 {
            Some(x) if (0.0..=1.0).contains(&x) => vec![x],
            Some(x) => return Err(GeometryError::Domain(x)),
            None => {
                let xs: Vec<f64> = (0..SCAN).map(|k| k as f64 / (SCAN - 1) as f64).collect();
                let d: Vec<f64> = xs
                    .iter()
                    .map(|&x| self.evaluate(x).map(|c| vec2::dist(c, q)))
                    .collect::<Result<_, _>>()?;
                (0..SCAN)
                    .filter(|&k| (k == 0 || d[k] <= d[k - 1]) && (k + 1 == SCAN || d[k] <= d[k + 1]))
                    .map(|k| xs[k])
                    .collect()
            }
        };
        let mut best: Option<(f64, f64)> = None;
        for seed in seeds {
            let (xi, d) = self.descend(q, seed)?;
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((xi, d));
            }
            // on a closed curve the ends coincide: a minimum found at one
            // end may continue past the seam from the other
            if self.is_closed() && (xi == 0.0 || xi == 1.0) {
                let (other, d_other) = self.descend(q, 1.0 - xi)?;
                if d_other < best.map_or(f64::INFINITY, |b| b.1) {
                    best = Some((other, d_other));
                }
            }
        }
        Ok(best.expect("at least one seed").0)
    }

    /// Local damped Newton descent from `xi`; returns the parameter and its
    /// squared distance.
    fn descend(&self, q: Vec2, mut xi: f64) -> Result<(f64, f64), GeometryError> {
        const MAX_ITER: usize = 50;
        let dist2 = |xi: f64| -> Result<f64, GeometryError> {
            let c = self.evaluate(xi)?;
            let d = vec2::sub(c, q);
            Ok(vec2::dot(d, d))
        };
        let mut d_cur = dist2(xi)?;
        for _ in 0..MAX_ITER {
            let ders = self.derivatives(xi, 2)?;
            let diff = vec2::sub(ders[0], q);
            let f = vec2::dot(diff, ders[1]);
            let tangent2 = vec2::dot(ders[1], ders[1]);
            if f.abs() <= 1e-12 * tangent2.sqrt().max(1.0) {
                return Ok((xi, d_cur));
            }
            let fp = tangent2 + vec2::dot(diff, ders[2]);
            let mut step = if fp > 0.0 { -f / fp } else { -f / tangent2.max(1e-300) };
            // Endpoint minimum: the descent direction leaves the domain.
            if (xi == 0.0 && step < 0.0) || (xi == 1.0 && step > 0.0) {
                return Ok((xi, d_cur));
            }
            let mut accepted = false;
            for _ in 0..40 {
                let trial = (xi + step).clamp(0.0, 1.0);
                let d_trial = dist2(trial)?;
                if d_trial <= d_cur {
                    let moved = (trial - xi).abs();
                    xi = trial;
                    d_cur = d_trial;
                    accepted = true;
                    if moved <= 1e-16 {
                        return Ok((xi, d_cur));
                    }
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                // No decrease at round-off level: xi is a minimizer to
                // machine precision.
                return Ok((xi, d_cur));
            }
        }
        let ders = self.derivatives(xi, 1)?;
        let f = vec2::dot(vec2::sub(ders[0], q), ders[1]);
        if f.abs() <= 1e-10 * vec2::norm(ders[1]).max(1.0) {
            return Ok((xi, d_cur));
        }
        Err(GeometryError::Projection { best_xi: xi, distance: d_cur.sqrt() })
    }

    /// Resolves the seam ambiguity of a closed curve: a parameter sitting on
    /// the seam is moved to the end (0 or 1) nearest `neighbour`.
    pub fn seam_consistent(&self, xi: f64, neighbour: f64) -> f64 {
        if self.is_closed() {
            if xi <= 1e-12 && neighbour > 0.5 {
                return 1.0;
            }
            if xi >= 1.0 - 1e-12 && neighbour < 0.5 {
                return 0.0;
            }
        }
        xi
    }
}

/// Result of [`fit_profile`].
#[derive(Debug, Clone)]
pub struct ProfileFit {
    pub curve: NurbsCurve,
    /// Largest distance between a sample and its foot point on the curve.
    pub max_deviation: f64,
    /// Final sample parameters.
    pub params: Vec<f64>,
}

/// Least-squares B-spline fit (unit weights) through ordered samples.
///
/// Chord-length parameters and a clamped uniform knot vector; both end samples
/// are interpolated exactly. After the first solve the sample parameters are
/// refined by projecting each sample onto the current curve and refitting,
/// which drives the fit toward the geometric (not parametric) least-squares
/// solution.
pub fn fit_profile(samples: &[Vec2], degree: usize, n_ctrl: usize) -> Result<ProfileFit, GeometryError> {
    fit_profile_with(samples, degree, n_ctrl, 200)
}

pub fn fit_profile_with(
    samples: &[Vec2],
    degree: usize,
    n_ctrl: usize,
    max_corrections: usize,
) -> Result<ProfileFit, GeometryError> {
    if degree == 0 {
        return Err(GeometryError::Fit("degree must be at least 1".into()));
    }
    if n_ctrl < degree + 1 {
        return Err(GeometryError::Fit(format!("n_ctrl {n_ctrl} < degree + 1")));
    }
    if samples.len() < n_ctrl {
        return Err(GeometryError::Fit(format!(
            "{} samples cannot determine {n_ctrl} control points",
            samples.len()
        )));
    }
    let m = samples.len();
    let mut params = Vec::with_capacity(m);
    let mut acc = 0.0;
    params.push(0.0);
    for w in samples.windows(2) {
        acc += vec2::dist(w[0], w[1]);
        params.push(acc);
    }
    if !(acc > 0.0) {
        return Err(GeometryError::Fit("samples have zero total length".into()));
    }
    for t in params.iter_mut() {
        *t /= acc;
    }
    params[m - 1] = 1.0;
    let knots = KnotVector::clamped_uniform(n_ctrl, degree)?;

    let mut curve = solve_fit(samples, &params, &knots)?;
    let mut deviation = max_deviation(&curve, samples, &params)?;
    for _ in 0..max_corrections {
        let mut new_params = params.clone();
        for k in 1..m - 1 {
            new_params[k] = curve.closest_point(samples[k], Some(params[k])).unwrap_or(params[k]);
        }
        // Keep parameters ordered; a projection that crosses a neighbour
        // would fold the parametrization.
        if new_params.windows(2).any(|w| w[1] < w[0]) {
            break;
        }
        let candidate = solve_fit(samples, &new_params, &knots)?;
        let dev = max_deviation(&candidate, samples, &new_params)?;
        let improved = dev < deviation;
        let small_gain = deviation - dev <= 1e-3 * deviation;
        if improved {
            curve = candidate;
            params = new_params;
            deviation = dev;
        }
        if !improved || small_gain && deviation < 1e-13 {
            break;
        }
    }
    Ok(ProfileFit { curve, max_deviation: deviation, params })
}

/// Least-squares fit at caller-supplied sample parameters (no parameter
/// correction). `params` must be nondecreasing with `params[0] = 0` and
/// `params[last] = 1`.
pub fn fit_profile_at(
    samples: &[Vec2],
    params: &[f64],
    degree: usize,
    n_ctrl: usize,
) -> Result<ProfileFit, GeometryError> {
    if params.len() != samples.len() || samples.len() < n_ctrl || n_ctrl < degree + 1 || degree == 0 {
        return Err(GeometryError::Fit("inconsistent fit sizes".into()));
    }
    if params[0] != 0.0 || params[params.len() - 1] != 1.0 || params.windows(2).any(|w| w[1] < w[0]) {
        return Err(GeometryError::Fit("parameters must increase from 0 to 1".into()));
    }
    let knots = KnotVector::clamped_uniform(n_ctrl, degree)?;
    let curve = solve_fit(samples, params, &knots)?;
    let max_deviation = max_deviation(&curve, samples, params)?;
    Ok(ProfileFit { curve, max_deviation, params: params.to_vec() })
}

fn max_deviation(curve: &NurbsCurve, samples: &[Vec2], params: &[f64]) -> Result<f64, GeometryError> {
    let mut worst: f64 = 0.0;
    for (q, &t) in samples.iter().zip(params) {
        worst = worst.max(vec2::dist(curve.evaluate(t)?, *q));
    }
    Ok(worst)
}

fn solve_fit(samples: &[Vec2], params: &[f64], knots: &KnotVector) -> Result<NurbsCurve, GeometryError> {
    let m = samples.len();
    let n = knots.n_ctrl();
    let p = knots.degree();
    let first = samples[0];
    let last = samples[m - 1];
    let mut ctrl = vec![[0.0; 2]; n];
    ctrl[0] = first;
    ctrl[n - 1] = last;
    if n > 2 {
        let rows = m - 2;
        let cols = n - 2;
        if rows < cols {
            return Err(GeometryError::Fit("too few interior samples".into()));
        }
        let mut a = DMatrix::<f64>::zeros(rows, cols);
        let mut rhs = DMatrix::<f64>::zeros(rows, 2);
        for k in 1..m - 1 {
            let t = params[k];
            let span = knots.find_span(t)?;
            let basis = &knots.basis_derivatives(span, t, 0)[0];
            let mut r = samples[k];
            for (j, nj) in basis.iter().enumerate() {
                let i = span - p + j;
                if i == 0 {
                    r = vec2::sub(r, vec2::scale(first, *nj));
                } else if i == n - 1 {
                    r = vec2::sub(r, vec2::scale(last, *nj));
                } else {
                    a[(k - 1, i - 1)] = *nj;
                }
            }
            rhs[(k - 1, 0)] = r[0];
            rhs[(k - 1, 1)] = r[1];
        }
        let svd = SVD::new(a, true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > 1e-12 * smax) {
            return Err(GeometryError::Fit(format!(
                "rank-deficient fit system (singular value ratio {:e})",
                smin / smax
            )));
        }
        let sol = svd
            .solve(&rhs, 0.0)
            .map_err(|e| GeometryError::Fit(e.to_string()))?;
        for i in 0..cols {
            ctrl[i + 1] = [sol[(i, 0)], sol[(i, 1)]];
        }
    }
    NurbsCurve::new(ctrl, vec![1.0; n], knots.clone())
}

/// Collection of boundary curves keyed by id, with the plain-text file format
///
/// ```text
/// curve <id> degree <p> nctrl <n>
/// <knot_0> <knot_1> ... <knot_{n+p}>
/// <x> <y> <w>        (n lines)
/// ```
///
/// Blank lines and lines starting with `#` are ignored on input.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CurveSet {
    curves: BTreeMap<u32, NurbsCurve>,
}

impl CurveSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: u32, curve: NurbsCurve) {
        self.curves.insert(id, curve);
    }

    pub fn get(&self, id: u32) -> Result<&NurbsCurve, GeometryError> {
        self.curves.get(&id).ok_or(GeometryError::UnknownCurve(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &NurbsCurve)> {
        self.curves.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GeometryError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| GeometryError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GeometryError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| GeometryError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })
    }

    pub fn parse(text: &str) -> Result<Self, GeometryError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let mut set = CurveSet::new();
        while let Some((line_no, header)) = lines.next() {
            let err = |line: usize, msg: String| GeometryError::Parse { line, msg };
            let tok: Vec<&str> = header.split_whitespace().collect();
            if tok.len() != 6 || tok[0] != "curve" || tok[2] != "degree" || tok[4] != "nctrl" {
                return Err(err(line_no, format!("expected `curve <id> degree <p> nctrl <n>`, got `{header}`")));
            }
            let id: u32 = tok[1].parse().map_err(|_| err(line_no, format!("bad curve id `{}`", tok[1])))?;
            let degree: usize = tok[3].parse().map_err(|_| err(line_no, format!("bad degree `{}`", tok[3])))?;
            let n: usize = tok[5].parse().map_err(|_| err(line_no, format!("bad nctrl `{}`", tok[5])))?;
            let (kline, ktext) = lines
                .next()
                .ok_or_else(|| err(line_no, "missing knot vector line".into()))?;
            let knots = ktext
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| err(kline, format!("bad knot `{t}`"))))
                .collect::<Result<Vec<_>, _>>()?;
            if knots.len() != n + degree + 1 {
                return Err(err(kline, format!("expected {} knots, got {}", n + degree + 1, knots.len())));
            }
            let kv = KnotVector::new(knots, degree).map_err(|e| err(kline, e.to_string()))?;
            let mut pts = Vec::with_capacity(n);
            let mut weights = Vec::with_capacity(n);
            for _ in 0..n {
                let (pl, ptext) = lines
                    .next()
                    .ok_or_else(|| err(kline, format!("curve {id}: expected {n} control point lines")))?;
                let v = ptext
                    .split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|_| err(pl, format!("bad number `{t}`"))))
                    .collect::<Result<Vec<_>, _>>()?;
                if v.len() != 3 {
                    return Err(err(pl, "expected `x y w`".into()));
                }
                pts.push([v[0], v[1]]);
                weights.push(v[2]);
            }
            let curve = NurbsCurve::new(pts, weights, kv).map_err(|e| err(line_no, e.to_string()))?;
            if set.curves.insert(id, curve).is_some() {
                return Err(err(line_no, format!("duplicate curve id {id}")));
            }
        }
        Ok(set)
    }

    /// Text form; numbers use the shortest representation that parses back
    /// to the identical `f64`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (id, c) in &self.curves {
            let _ = writeln!(out, "curve {id} degree {} nctrl {}", c.degree(), c.control_points.len());
            let knots: Vec<String> = c.knots.knots.iter().map(|k| format!("{k}")).collect();
            let _ = writeln!(out, "{}", knots.join(" "));
            for (b, w) in c.control_points.iter().zip(&c.weights) {
                let _ = writeln!(out, "{} {} {}", b[0], b[1], w);
            }
        }
        out
    }
}
