use std::sync::Arc;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{BfyOrientation, RigidDiskSystem};
use crate::poly::Poly;

pub type P2 = [f64; 2];

pub const MAX_DEGREE: usize = 64;
/// Analytic disk maps treat anything beyond this radius as escaped.
pub const ESCAPE_RADIUS: f64 = 1e3;
const SELF_MAP_TOL: f64 = 1e-12;
const FD_STEP: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("point {0:?} outside the map domain")]
    Domain(Vec<f64>),
    #[error("orbit escaped the domain at step {step}")]
    Escape { step: usize },
    #[error("degree {0} exceeds the cap of 64")]
    DegreeCap(usize),
    #[error("map sends {x} to {value}, outside the domain")]
    NotSelfMap { x: f64, value: f64 },
    #[error("derivative vanishes on a subinterval near {0}")]
    Degenerate(f64),
    #[error("operation unsupported for the {0} variant")]
    Unsupported(&'static str),
    #[error("affine map is not invertible (det = {0})")]
    Singular(f64),
    #[error("invalid map definition: {0}")]
    Invalid(String),
}

pub fn sub(a: P2, b: P2) -> P2 {
    [a[0] - b[0], a[1] - b[1]]
}

pub fn norm(a: P2) -> f64 {
    a[0].hypot(a[1])
}

pub fn dist(a: P2, b: P2) -> f64 {
    norm(sub(a, b))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalRepr {
    Polynomial(Poly<f64>),
    /// g(x) = r(x²); holds r.
    EvenComposed(Poly<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotonicity {
    Increasing,
    Decreasing,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lap {
    pub index: usize,
    pub lo: f64,
    pub hi: f64,
    pub monotonicity: Monotonicity,
}

impl Lap {
    /// Half-open membership [lo, hi), closed at the right end of the domain.
    pub fn contains(&self, x: f64, last: bool) -> bool {
        x >= self.lo && (x < self.hi || (last && x <= self.hi))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalMap {
    pub repr: IntervalRepr,
    pub lo: f64,
    pub hi: f64,
}

impl IntervalMap {
    pub fn polynomial(coeffs: Vec<f64>) -> Result<Self, MapError> {
        Self::build(IntervalRepr::Polynomial(Poly::new(coeffs)), -1.0, 1.0)
    }

    pub fn even(r: Vec<f64>) -> Result<Self, MapError> {
        Self::build(IntervalRepr::EvenComposed(Poly::new(r)), -1.0, 1.0)
    }

    pub fn build(repr: IntervalRepr, lo: f64, hi: f64) -> Result<Self, MapError> {
        let g = IntervalMap { repr, lo, hi };
        if g.degree() > MAX_DEGREE {
            return Err(MapError::DegreeCap(g.degree()));
        }
        for i in 0..=1024 {
            let x = lo + (hi - lo) * i as f64 / 1024.0;
            let v = g.apply(x);
            if !(v >= lo - SELF_MAP_TOL && v <= hi + SELF_MAP_TOL) {
                return Err(MapError::NotSelfMap { x, value: v });
            }
        }
        Ok(g)
    }

    pub fn degree(&self) -> usize {
        match &self.repr {
            IntervalRepr::Polynomial(p) => p.degree(),
            IntervalRepr::EvenComposed(r) => 2 * r.degree(),
        }
    }

    /// Monomial coefficients in x regardless of representation.
    pub fn coeffs_x(&self) -> Poly<f64> {
        match &self.repr {
            IntervalRepr::Polynomial(p) => p.clone(),
            IntervalRepr::EvenComposed(r) => r.even_expand(),
        }
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match &self.repr {
            IntervalRepr::Polynomial(p) => p.eval(x),
            IntervalRepr::EvenComposed(r) => r.eval(x * x),
        }
    }

    #[inline]
    pub fn apply_d(&self, x: f64) -> (f64, f64) {
        match &self.repr {
            IntervalRepr::Polynomial(p) => p.eval_d(x),
            IntervalRepr::EvenComposed(r) => {
                let (v, d) = r.eval_d(x * x);
                (v, 2.0 * x * d)
            }
        }
    }

    pub fn in_domain(&self, x: f64) -> bool {
        x >= self.lo - SELF_MAP_TOL && x <= self.hi + SELF_MAP_TOL
    }

    pub fn eval(&self, x: f64) -> Result<f64, MapError> {
        if !self.in_domain(x) {
            return Err(MapError::Domain(vec![x]));
        }
        Ok(self.apply(x))
    }

    pub fn iterate(&self, x: f64, n: usize) -> Result<f64, MapError> {
        if !self.in_domain(x) {
            return Err(MapError::Domain(vec![x]));
        }
        let mut y = x;
        for step in 1..=n {
            y = self.apply(y);
            if !self.in_domain(y) {
                return Err(MapError::Escape { step });
            }
        }
        Ok(y)
    }

    /// g^n(x) and (g^n)'(x) by the chain rule, unchecked.
    pub fn iterate_d(&self, x: f64, n: usize) -> (f64, f64) {
        let mut y = x;
        let mut d = 1.0;
        for _ in 0..n {
            let (v, dv) = self.apply_d(y);
            d *= dv;
            y = v;
        }
        (y, d)
    }

    pub fn critical_points(&self) -> Result<Vec<f64>, MapError> {
        let cells = 1usize << 12;
        let xs: Vec<f64> = (0..=cells)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / cells as f64)
            .collect();
        let ds: Vec<f64> = xs.iter().map(|&x| self.apply_d(x).1).collect();
        let scale = ds.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
        let flat = 1e-14 * scale.max(1e-300);
        if scale == 0.0 {
            return Err(MapError::Degenerate(self.lo));
        }
        for i in 0..ds.len().saturating_sub(2) {
            if ds[i].abs() <= flat && ds[i + 1].abs() <= flat && ds[i + 2].abs() <= flat {
                return Err(MapError::Degenerate(xs[i + 1]));
            }
        }
        let mut crit = Vec::new();
        let mut last: Option<usize> = None;
        for i in 0..ds.len() {
            if ds[i] == 0.0 {
                continue;
            }
            if let Some(j) = last {
                if ds[j].signum() != ds[i].signum() {
                    if i - j > 1 {
                        // exact zeros at grid nodes strictly between
                        crit.push(xs[(i + j) / 2]);
                    } else {
                        crit.push(self.bisect_derivative(xs[j], xs[i]));
                    }
                }
            }
            last = Some(i);
        }
        Ok(crit)
    }

    fn bisect_derivative(&self, mut a: f64, mut b: f64) -> f64 {
        let sa = self.apply_d(a).1.signum();
        while b - a > 1e-12 {
            let m = 0.5 * (a + b);
            let dm = self.apply_d(m).1;
            if dm == 0.0 {
                return m;
            }
            if dm.signum() == sa {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }

    pub fn laps(&self) -> Result<Vec<Lap>, MapError> {
        let crit = self.critical_points()?;
        let mut bounds = vec![self.lo];
        bounds.extend(crit.iter().copied());
        bounds.push(self.hi);
        let mut laps = Vec::with_capacity(bounds.len() - 1);
        for k in 0..bounds.len() - 1 {
            let mid = 0.5 * (bounds[k] + bounds[k + 1]);
            let d = self.apply_d(mid).1;
            laps.push(Lap {
                index: k + 1,
                lo: bounds[k],
                hi: bounds[k + 1],
                monotonicity: if d > 0.0 {
                    Monotonicity::Increasing
                } else {
                    Monotonicity::Decreasing
                },
            });
        }
        Ok(laps)
    }

    /// Image of [a, b]: hull of endpoint values and values at interior critical points.
    pub fn image(&self, a: f64, b: f64, crit: &[f64]) -> (f64, f64) {
        let mut lo = self.apply(a).min(self.apply(b));
        let mut hi = self.apply(a).max(self.apply(b));
        for &c in crit {
            if c > a && c < b {
                let v = self.apply(c);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Preserving,
    Reversing,
}

impl Orientation {
    pub fn sign(self) -> i64 {
        match self {
            Orientation::Preserving => 1,
            Orientation::Reversing => -1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Affine2 {
    pub matrix: [[f64; 2]; 2],
    pub translation: [f64; 2],
}

impl Affine2 {
    pub fn new(matrix: [[f64; 2]; 2], translation: [f64; 2]) -> Self {
        Affine2 { matrix, translation }
    }

    pub fn identity() -> Self {
        Affine2::new([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0])
    }

    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Affine2::new([[c, -s], [s, c]], [0.0, 0.0])
    }

    pub fn reflection_x() -> Self {
        Affine2::new([[1.0, 0.0], [0.0, -1.0]], [0.0, 0.0])
    }

    /// Λ(x, y) = (λx, λ²y).
    pub fn feigenbaum_scaling(lambda: f64) -> Self {
        Affine2::new([[lambda, 0.0], [0.0, lambda * lambda]], [0.0, 0.0])
    }

    /// z ↦ center + radius·z.
    pub fn disk(center: P2, radius: f64) -> Self {
        Affine2::new([[radius, 0.0], [0.0, radius]], center)
    }

    pub fn apply(&self, p: P2) -> P2 {
        let m = &self.matrix;
        [
            m[0][0] * p[0] + m[0][1] * p[1] + self.translation[0],
            m[1][0] * p[0] + m[1][1] * p[1] + self.translation[1],
        ]
    }

    pub fn apply_linear(&self, v: P2) -> P2 {
        let m = &self.matrix;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    pub fn det(&self) -> f64 {
        let m = &self.matrix;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn orientation(&self) -> Orientation {
        if self.det() > 0.0 {
            Orientation::Preserving
        } else {
            Orientation::Reversing
        }
    }

    pub fn inverse(&self) -> Result<Affine2, MapError> {
        let d = self.det();
        if d.abs() < 1e-14 || !d.is_finite() {
            return Err(MapError::Singular(d));
        }
        let m = &self.matrix;
        let inv = [[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]];
        let t = self.translation;
        let ti = [
            -(inv[0][0] * t[0] + inv[0][1] * t[1]),
            -(inv[1][0] * t[0] + inv[1][1] * t[1]),
        ];
        Ok(Affine2::new(inv, ti))
    }

    /// self ∘ other
    pub fn compose(&self, other: &Affine2) -> Affine2 {
        let a = &self.matrix;
        let b = &other.matrix;
        let m = [
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ];
        Affine2::new(m, self.apply(other.translation))
    }
}

/// f_{μ,ε}(x, y) = (r(w) + μ v(w), ε x) with w = x² − α y.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GstMap {
    pub alpha: f64,
    pub mu: f64,
    pub eps: f64,
    pub r: Poly<f64>,
    pub v: Poly<f64>,
}

impl GstMap {
    fn eval_w(&self, w: f64) -> (f64, f64) {
        let (r, dr) = self.r.eval_d(w);
        let (v, dv) = self.v.eval_d(w);
        (r + self.mu * v, dr + self.mu * dv)
    }
}

#[derive(Clone, Debug)]
pub enum Part {
    Map(DiskMap),
    InverseAffine(Affine2),
}

#[derive(Clone, Debug)]
pub enum DiskMap {
    Henon { a: f64, b: f64 },
    Gst(GstMap),
    Affine(Affine2),
    Rigid(Arc<RigidDiskSystem>),
    /// Parts applied in order, first to last.
    Composite(Vec<Part>),
}

impl DiskMap {
    pub fn henon(a: f64, b: f64) -> Self {
        DiskMap::Henon { a, b }
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            DiskMap::Henon { .. } => "henon",
            DiskMap::Gst(_) => "gst",
            DiskMap::Affine(_) => "affine",
            DiskMap::Rigid(_) => "rigid",
            DiskMap::Composite(_) => "composite",
        }
    }

    pub fn in_domain(&self, p: P2) -> bool {
        if !(p[0].is_finite() && p[1].is_finite()) {
            return false;
        }
        match self {
            DiskMap::Henon { .. } | DiskMap::Gst(_) => norm(p) <= ESCAPE_RADIUS,
            DiskMap::Rigid(_) => norm(p) <= 1.0 + 1e-12,
            DiskMap::Affine(_) | DiskMap::Composite(_) => true,
        }
    }

    /// Evaluation without the domain guard; parts of a composite are still checked.
    pub fn apply(&self, p: P2) -> Result<P2, MapError> {
        Ok(match self {
            DiskMap::Henon { a, b } => [1.0 - a * p[0] * p[0] + p[1], b * p[0]],
            DiskMap::Gst(g) => {
                let w = p[0] * p[0] - g.alpha * p[1];
                [g.eval_w(w).0, g.eps * p[0]]
            }
            DiskMap::Affine(h) => h.apply(p),
            DiskMap::Rigid(sys) => sys.time_map(1.0, p),
            DiskMap::Composite(parts) => {
                let mut q = p;
                for part in parts {
                    q = match part {
                        Part::Map(m) => m.eval(q)?,
                        Part::InverseAffine(h) => h.inverse()?.apply(q),
                    };
                }
                q
            }
        })
    }

    pub fn eval(&self, p: P2) -> Result<P2, MapError> {
        if !self.in_domain(p) {
            return Err(MapError::Domain(p.to_vec()));
        }
        self.apply(p)
    }

    pub fn iterate(&self, p: P2, n: usize) -> Result<P2, MapError> {
        if !self.in_domain(p) {
            return Err(MapError::Domain(p.to_vec()));
        }
        let mut q = p;
        for step in 1..=n {
            q = self.apply(q).map_err(|_| MapError::Escape { step })?;
            if !self.in_domain(q) {
                return Err(MapError::Escape { step });
            }
        }
        Ok(q)
    }

    /// Central finite-difference derivative.
    pub fn fd_jacobian(&self, p: P2) -> Result<Matrix2<f64>, MapError> {
        let h = FD_STEP;
        let fxp = self.apply([p[0] + h, p[1]])?;
        let fxm = self.apply([p[0] - h, p[1]])?;
        let fyp = self.apply([p[0], p[1] + h])?;
        let fym = self.apply([p[0], p[1] - h])?;
        Ok(Matrix2::new(
            (fxp[0] - fxm[0]) / (2.0 * h),
            (fyp[0] - fym[0]) / (2.0 * h),
            (fxp[1] - fxm[1]) / (2.0 * h),
            (fyp[1] - fym[1]) / (2.0 * h),
        ))
    }

    pub fn jacobian_det(&self, p: P2) -> Result<f64, MapError> {
        match self {
            DiskMap::Henon { b, .. } => Ok(-b),
            DiskMap::Gst(g) => {
                let w = p[0] * p[0] - g.alpha * p[1];
                Ok(g.alpha * g.eps * g.eval_w(w).1)
            }
            DiskMap::Affine(h) => Ok(h.det()),
            DiskMap::Rigid(_) => Err(MapError::Unsupported("rigid disk system")),
            DiskMap::Composite(parts) => {
                if parts.iter().any(|p| matches!(p, Part::Map(DiskMap::Rigid(_)))) {
                    return Err(MapError::Unsupported("rigid disk system"));
                }
                Ok(self.fd_jacobian(p)?.determinant())
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Conjugated {
    pub map: DiskMap,
    pub h: Affine2,
    pub orientation: Orientation,
}

/// h⁻¹ ∘ f ∘ h
pub fn conjugate(f: &DiskMap, h: &Affine2) -> Result<Conjugated, MapError> {
    h.inverse()?;
    Ok(Conjugated {
        map: DiskMap::Composite(vec![
            Part::Map(DiskMap::Affine(*h)),
            Part::Map(f.clone()),
            Part::InverseAffine(*h),
        ]),
        h: *h,
        orientation: h.orientation(),
    })
}

/// JSON map definition, e.g. {"variant": "henon", "a": 1.4, "b": 0.3}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSpec {
    Logistic { a: f64 },
    Polynomial { coeffs: Vec<f64> },
    EvenComposed { r: Vec<f64> },
    Henon { a: f64, b: f64 },
    Gst { alpha: f64, mu: f64, eps: f64, r: Vec<f64>, v: Vec<f64> },
    Affine { matrix: [[f64; 2]; 2], translation: [f64; 2] },
    AffineInverse { matrix: [[f64; 2]; 2], translation: [f64; 2] },
    Bfy { depth: usize, rho: f64, orientation: BfyOrientation },
    Composite { parts: Vec<MapSpec> },
}

#[derive(Clone, Debug)]
pub enum AnyMap {
    Interval(IntervalMap),
    Disk(DiskMap),
}

impl MapSpec {
    pub fn from_json(s: &str) -> Result<Self, MapError> {
        serde_json::from_str(s).map_err(|e| MapError::Invalid(e.to_string()))
    }

    pub fn build(&self) -> Result<AnyMap, MapError> {
        Ok(match self {
            MapSpec::Logistic { a } => AnyMap::Interval(IntervalMap::even(vec![1.0, -a])?),
            MapSpec::Polynomial { coeffs } => AnyMap::Interval(IntervalMap::polynomial(coeffs.clone())?),
            MapSpec::EvenComposed { r } => AnyMap::Interval(IntervalMap::even(r.clone())?),
            MapSpec::Henon { a, b } => AnyMap::Disk(DiskMap::henon(*a, *b)),
            MapSpec::Gst { alpha, mu, eps, r, v } => AnyMap::Disk(DiskMap::Gst(GstMap {
                alpha: *alpha,
                mu: *mu,
                eps: *eps,
                r: Poly::new(r.clone()),
                v: Poly::new(v.clone()),
            })),
            MapSpec::Affine { matrix, translation } => {
                AnyMap::Disk(DiskMap::Affine(Affine2::new(*matrix, *translation)))
            }
            MapSpec::AffineInverse { .. } => {
                return Err(MapError::Invalid("affine_inverse is only valid inside a composite".into()))
            }
            MapSpec::Bfy { depth, rho, orientation } => {
                let sys = RigidDiskSystem::new(*depth, *rho, *orientation)
                    .map_err(|e| MapError::Invalid(e.to_string()))?;
                AnyMap::Disk(DiskMap::Rigid(Arc::new(sys)))
            }
            MapSpec::Composite { parts } => {
                let mut out = Vec::new();
                for p in parts {
                    match p {
                        MapSpec::AffineInverse { matrix, translation } => {
                            let h = Affine2::new(*matrix, *translation);
                            h.inverse()?;
                            out.push(Part::InverseAffine(h));
                        }
                        other => match other.build()? {
                            AnyMap::Disk(d) => out.push(Part::Map(d)),
                            AnyMap::Interval(_) => {
                                return Err(MapError::Invalid("interval map inside a disk composite".into()))
                            }
                        },
                    }
                }
                AnyMap::Disk(DiskMap::Composite(out))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logistic2() -> IntervalMap {
        IntervalMap::even(vec![1.0, -2.0]).unwrap()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(logistic2().eval(0.0).unwrap(), 1.0);
        let h = DiskMap::henon(1.4, 0.3);
        assert_eq!(h.eval([0.0, 0.0]).unwrap(), [1.0, 0.0]);
        let lam = Affine2::feigenbaum_scaling(-0.3995);
        let p = lam.apply([1.0, 1.0]);
        assert!((p[0] + 0.3995).abs() < 1e-15 && (p[1] - 0.15960025).abs() < 1e-15);
    }

    #[test]
    fn iterate_examples() {
        let g = logistic2();
        assert_eq!(g.iterate(0.3, 0).unwrap(), 0.3);
        assert_eq!(g.iterate(1.0, 2).unwrap(), -1.0);
        let h = DiskMap::henon(1.4, 0.3);
        let p = h.iterate([0.0, 0.0], 2).unwrap();
        assert!((p[0] + 0.4).abs() < 1e-15 && (p[1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(logistic2().eval(1.5), Err(MapError::Domain(_))));
        let h = DiskMap::henon(1.4, 0.3);
        assert!(matches!(h.iterate([3.0, 0.0], 10), Err(MapError::Escape { .. })));
    }

    #[test]
    fn logistic_laps() {
        let laps = logistic2().laps().unwrap();
        assert_eq!(laps.len(), 2);
        assert_eq!(laps[0].hi, 0.0);
        assert_eq!(laps[0].monotonicity, Monotonicity::Increasing);
        assert_eq!(laps[1].monotonicity, Monotonicity::Decreasing);
    }

    #[test]
    fn cubic_laps() {
        let g = IntervalMap::polynomial(vec![0.0, -0.75, 0.0, 1.0]).unwrap();
        let c = g.critical_points().unwrap();
        assert_eq!(c.len(), 2);
        assert!((c[0] + 0.5).abs() < 1e-11 && (c[1] - 0.5).abs() < 1e-11);
        assert_eq!(g.laps().unwrap().len(), 3);
    }

    #[test]
    fn constant_map_is_degenerate() {
        let g = IntervalMap::polynomial(vec![0.5]).unwrap();
        assert!(matches!(g.laps(), Err(MapError::Degenerate(_))));
    }

    #[test]
    fn degree_cap_and_self_map() {
        let mut c = vec![0.0; 66];
        c[65] = 1e-30;
        assert!(matches!(IntervalMap::polynomial(c), Err(MapError::DegreeCap(65))));
        assert!(matches!(IntervalMap::even(vec![1.0, -3.0]), Err(MapError::NotSelfMap { .. })));
    }

    #[test]
    fn jacobian_dets() {
        let h = DiskMap::henon(1.2, 0.3);
        assert_eq!(h.jacobian_det([0.4, -0.1]).unwrap(), -0.3);
        let g = DiskMap::Gst(GstMap {
            alpha: 0.01,
            mu: 0.0,
            eps: 0.0,
            r: Poly::new(vec![1.0, -1.5]),
            v: Poly::new(vec![0.0, 1.0]),
        });
        assert_eq!(g.jacobian_det([0.3, 0.2]).unwrap(), 0.0);
        assert_eq!(g.eval([0.3, 0.2]).unwrap()[1], 0.0);
        let sys = RigidDiskSystem::new(2, 0.3, BfyOrientation::Preserving).unwrap();
        assert!(matches!(
            DiskMap::Rigid(Arc::new(sys)).jacobian_det([0.0, 0.0]),
            Err(MapError::Unsupported(_))
        ));
    }

    #[test]
    fn gst_det_matches_finite_differences() {
        let g = GstMap {
            alpha: 0.01,
            mu: 0.02,
            eps: 1e-3,
            r: Poly::new(vec![1.0, -1.527, 0.105]),
            v: Poly::new(vec![0.0, 1.0, -0.3]),
        };
        let m = DiskMap::Gst(g);
        let p = [0.2, 0.1];
        let analytic = m.jacobian_det(p).unwrap();
        let fd = m.fd_jacobian(p).unwrap().determinant();
        assert!((analytic - fd).abs() < 1e-10 * analytic.abs().max(1e-3));
        assert!(analytic.abs() <= 10.0 * 1e-3);
    }

    #[test]
    fn conjugate_orientation_flags() {
        let f = DiskMap::henon(1.0, 0.3);
        assert_eq!(conjugate(&f, &Affine2::rotation(std::f64::consts::PI / 3.0)).unwrap().orientation, Orientation::Preserving);
        assert_eq!(conjugate(&f, &Affine2::reflection_x()).unwrap().orientation, Orientation::Reversing);
        let singular = Affine2::new([[1.0, 2.0], [2.0, 4.0]], [0.0, 0.0]);
        assert!(matches!(conjugate(&f, &singular), Err(MapError::Singular(_))));
    }

    #[test]
    fn map_json_round_trip() {
        let s = MapSpec::from_json(r#"{"variant":"henon","a":1.4,"b":0.3}"#).unwrap();
        assert_eq!(s, MapSpec::Henon { a: 1.4, b: 0.3 });
        assert!(MapSpec::from_json(r#"{"variant":"henon","a":1.4,"b":0.3,"c":1}"#).is_err());
        let c = MapSpec::from_json(
            r#"{"variant":"composite","parts":[{"variant":"affine","matrix":[[2,0],[0,2]],"translation":[0,0]},
               {"variant":"henon","a":1.4,"b":0.3},
               {"variant":"affine_inverse","matrix":[[2,0],[0,2]],"translation":[0,0]}]}"#,
        )
        .unwrap();
        let AnyMap::Disk(m) = c.build().unwrap() else { panic!() };
        let p = m.eval([0.1, 0.05]).unwrap();
        let q = DiskMap::henon(1.4, 0.3).eval([0.2, 0.1]).unwrap();
        assert!((p[0] - q[0] / 2.0).abs() < 1e-15 && (p[1] - q[1] / 2.0).abs() < 1e-15);
    }
}
