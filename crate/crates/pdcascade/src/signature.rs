use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::maps::{norm, sub, Affine2, DiskMap, MapError, Orientation, Part, P2};
use crate::models::RigidDiskSystem;
use crate::orbits::{CascadeOrbits, PeriodicOrbit};

pub const CLOSURE_TOL: f64 = 1e-3;
pub const COLLISION_NORM: f64 = 1e-9;
const INITIAL_STEP: f64 = 1.0 / 64.0;
const MIN_STEP: f64 = 1.0 / 1048576.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WindingError {
    #[error("difference vector collapsed (norm {norm:e}) at t = {t}")]
    Collision { t: f64, norm: f64 },
    #[error("accumulated angle {total} is not a multiple of 2π")]
    NonClosure { total: f64 },
    #[error("angle step could not be resolved at t = {t}")]
    Resolution { t: f64 },
    #[error("points coincide")]
    SamePoint,
    #[error(transparent)]
    Map(#[from] MapError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignatureError {
    #[error("winding at n = {n}: {source}")]
    Winding { n: usize, source: WindingError },
    #[error("l_{n} depends on the choice of father and son ({l} vs {alt})")]
    ChoiceDependence { n: usize, l: i64, alt: i64 },
    #[error("bad arguments: {0}")]
    BadArgs(String),
}

/// An arc s ↦ f_s from the identity to a disk map, s ∈ [0, 1].
#[derive(Clone, Debug)]
pub enum Isotopy {
    /// f_s = (1 − s)·id + s·f
    StraightLine(DiskMap),
    RigidArc(Arc<RigidDiskSystem>),
    /// g_s = h⁻¹∘f_s∘h
    Conjugated { h: Affine2, inner: Box<Isotopy> },
    /// The inner extended arc followed by a rotation by 2πk{t} about the origin.
    Spun { k: i64, inner: Box<Isotopy> },
}

impl Isotopy {
    pub fn conjugated(h: Affine2, inner: Isotopy) -> Self {
        Isotopy::Conjugated { h, inner: Box::new(inner) }
    }

    pub fn spun(k: i64, inner: Isotopy) -> Self {
        Isotopy::Spun { k, inner: Box::new(inner) }
    }

    pub fn target(&self) -> DiskMap {
        match self {
            Isotopy::StraightLine(f) => f.clone(),
            Isotopy::RigidArc(sys) => DiskMap::Rigid(sys.clone()),
            Isotopy::Conjugated { h, inner } => DiskMap::Composite(vec![
                Part::Map(DiskMap::Affine(*h)),
                Part::Map(inner.target()),
                Part::InverseAffine(*h),
            ]),
            Isotopy::Spun { inner, .. } => inner.target(),
        }
    }

    /// Value at time m + s given p and p_m = target^m(p).
    fn eval_unit(&self, order: ArcOrder, m: usize, s: f64, p: P2, pm: P2) -> Result<P2, MapError> {
        match self {
            Isotopy::StraightLine(f) => {
                let line = |y: P2| -> Result<P2, MapError> {
                    let fy = f.eval(y)?;
                    Ok([(1.0 - s) * y[0] + s * fy[0], (1.0 - s) * y[1] + s * fy[1]])
                };
                match order {
                    ArcOrder::Standard => f.iterate(line(p)?, m),
                    ArcOrder::Equivariant => line(pm),
                }
            }
            Isotopy::RigidArc(sys) => {
                let f = DiskMap::Rigid(sys.clone());
                match order {
                    ArcOrder::Standard => f.iterate(sys.time_map(s, p), m),
                    ArcOrder::Equivariant => {
                        if !f.in_domain(pm) {
                            return Err(MapError::Domain(pm.to_vec()));
                        }
                        Ok(sys.time_map(s, pm))
                    }
                }
            }
            Isotopy::Conjugated { h, inner } => {
                let y = inner.eval_unit(order, m, s, h.apply(p), h.apply(pm))?;
                Ok(h.inverse()?.apply(y))
            }
            Isotopy::Spun { k, inner } => {
                let y = inner.eval_unit(order, m, s, p, pm)?;
                let (sin, cos) = (TAU * *k as f64 * s).sin_cos();
                Ok([cos * y[0] - sin * y[1], sin * y[0] + cos * y[1]])
            }
        }
    }

    /// f_s(p) for s in [0, 1].
    pub fn eval(&self, s: f64, p: P2) -> Result<P2, MapError> {
        self.eval_unit(ArcOrder::Standard, 0, s, p, p)
    }

    /// Largest deviation of f_0 from id and of f_1 from the target at the given points.
    pub fn endpoint_error(&self, pts: &[P2]) -> Result<f64, MapError> {
        let f = self.target();
        let mut worst = 0.0_f64;
        for &p in pts {
            worst = worst.max(norm(sub(self.eval(0.0, p)?, p)));
            worst = worst.max(norm(sub(self.eval(1.0, p)?, f.eval(p)?)));
        }
        Ok(worst)
    }
}

/// Where the partial isotopy sits relative to the whole iterates on [m, m + 1].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArcOrder {
    /// f^m∘f_s
    Standard,
    /// f_s∘f^m. Same endpoints at integer times, and the same braid on a periodic orbit whenever
    /// f_s is an isotopy, but it never pushes the tracked vector through D f^m.
    Equivariant,
}

/// The arc t ↦ f^{⌊t⌋}∘f_{t−⌊t⌋} joining the identity to every iterate of the target.
#[derive(Clone, Debug)]
pub struct ExtendedArc {
    pub base: Isotopy,
    pub target: DiskMap,
    pub order: ArcOrder,
}

impl ExtendedArc {
    pub fn new(base: Isotopy) -> Self {
        Self::with_order(base, ArcOrder::Standard)
    }

    pub fn equivariant(base: Isotopy) -> Self {
        Self::with_order(base, ArcOrder::Equivariant)
    }

    pub fn with_order(base: Isotopy, order: ArcOrder) -> Self {
        let target = base.target();
        ExtendedArc { base, target, order }
    }

    fn unit(&self, m: usize, s: f64, p: P2, pm: P2) -> Result<P2, MapError> {
        self.base.eval_unit(self.order, m, s, p, pm)
    }
}

pub fn extended_eval(arc: &ExtendedArc, t: f64, p: P2) -> Result<P2, MapError> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(MapError::Invalid(format!("time {t} must be finite and non-negative")));
    }
    let m = t.floor() as usize;
    let s = t - m as f64;
    let pm = arc.target.iterate(p, m)?;
    if s == 0.0 {
        return Ok(pm);
    }
    arc.unit(m, s, p, pm)
}

fn wrap(a: f64) -> f64 {
    let mut a = a % TAU;
    if a > PI {
        a -= TAU;
    } else if a <= -PI {
        a += TAU;
    }
    a
}

pub fn winding_count(arc: &ExtendedArc, xa: P2, xb: P2, t_end: usize, tol: f64) -> Result<i64, WindingError> {
    winding_count_with(arc, xa, xb, t_end, tol, PI / 2.0)
}

/// Winding with a configurable bound on the per-sample angle increment.
pub fn winding_count_with(
    arc: &ExtendedArc,
    xa: P2,
    xb: P2,
    t_end: usize,
    tol: f64,
    max_dtheta: f64,
) -> Result<i64, WindingError> {
    if xa == xb {
        return Err(WindingError::SamePoint);
    }
    let diff = |m: usize, s: f64, pa: P2, pb: P2| -> Result<P2, WindingError> {
        let a = arc.unit(m, s, xa, pa)?;
        let b = arc.unit(m, s, xb, pb)?;
        let v = sub(b, a);
        let n = norm(v);
        if !(n >= COLLISION_NORM) {
            return Err(WindingError::Collision { t: m as f64 + s, norm: n });
        }
        Ok(v)
    };
    let (mut pa, mut pb) = (xa, xb);
    let mut prev = diff(0, 0.0, pa, pb)?;
    let mut total = 0.0;
    for m in 0..t_end {
        let mut s = 0.0;
        let mut step = INITIAL_STEP;
        while s < 1.0 {
            let mut h = step.min(1.0 - s);
            let (v, d) = loop {
                let v = diff(m, s + h, pa, pb)?;
                let d = wrap(v[1].atan2(v[0]) - prev[1].atan2(prev[0]));
                if d.abs() < max_dtheta {
                    break (v, d);
                }
                h *= 0.5;
                if h < MIN_STEP {
                    return Err(WindingError::Resolution { t: m as f64 + s });
                }
            };
            total += d;
            prev = v;
            s += h;
            step = (2.0 * h).min(INITIAL_STEP);
        }
        pa = arc.target.eval(pa)?;
        pb = arc.target.eval(pb)?;
    }
    let l = (total / TAU).round();
    if (total - TAU * l).abs() >= tol {
        return Err(WindingError::NonClosure { total });
    }
    Ok(l as i64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Signature {
    pub l: Vec<i64>,
    pub lambda: Vec<Ratio<i64>>,
    pub q: Vec<i64>,
    /// k with λ_1 + k = 1/2, when l_1 is odd.
    pub normalization_shift: Option<i64>,
}

impl Signature {
    pub fn from_l(l: Vec<i64>) -> Self {
        let q: Vec<i64> = (1..=l.len()).map(|n| 1i64 << n).collect();
        let lambda = l.iter().zip(&q).map(|(&l, &q)| Ratio::new(l, q)).collect();
        let normalization_shift = l.first().filter(|&&l1| l1.rem_euclid(2) == 1).map(|&l1| (1 - l1) / 2);
        Signature { l, lambda, q, normalization_shift }
    }

    /// λ_n ↦ λ_n + k for every n.
    pub fn shifted(&self, k: i64) -> Self {
        Signature::from_l(self.l.iter().zip(&self.q).map(|(&l, &q)| l + k * q).collect())
    }

    pub fn len(&self) -> usize {
        self.l.len()
    }

    pub fn is_empty(&self) -> bool {
        self.l.is_empty()
    }
}

fn tagged(n: usize) -> impl Fn(WindingError) -> SignatureError {
    move |source| SignatureError::Winding { n, source }
}

/// l_n for the father O_{n−1}[j] and its son O_n[j + i·q_{n−1}].
pub fn pair_winding(cascade: &CascadeOrbits, arc: &ExtendedArc, n: usize, j: usize, i: usize) -> Result<i64, SignatureError> {
    let father = cascade.orbits[n - 1].points[j];
    let qf = cascade.orbits[n - 1].points.len();
    let son = cascade.orbits[n].points[j + i * qf];
    winding_count(arc, father, son, cascade.orbits[n].period, CLOSURE_TOL).map_err(tagged(n))
}

fn l_n(cascade: &CascadeOrbits, arc: &ExtendedArc, n: usize) -> Result<i64, SignatureError> {
    let l = pair_winding(cascade, arc, n, 0, 0)?;
    let qf = cascade.orbits[n - 1].points.len();
    let alt = pair_winding(cascade, arc, n, qf - 1, 1)?;
    if l != alt {
        return Err(SignatureError::ChoiceDependence { n, l, alt });
    }
    Ok(l)
}

/// Windings for n = 1..N on up to `jobs` threads, assembled by n.
pub fn compute_signature(cascade: &CascadeOrbits, arc: &ExtendedArc, n_max: usize, jobs: usize) -> Result<Signature, SignatureError> {
    if n_max == 0 || cascade.depth() < n_max {
        return Err(SignatureError::BadArgs(format!("cascade depth {} < N = {n_max}", cascade.depth())));
    }
    let jobs = jobs.clamp(1, n_max);
    let mut results: Vec<Option<Result<i64, SignatureError>>> = vec![None; n_max];
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs)
            .map(|w| {
                scope.spawn(move || {
                    // larger n first keeps the per-worker load balanced
                    (1..=n_max).rev().skip(w).step_by(jobs).map(|n| (n, l_n(cascade, arc, n))).collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (n, r) in h.join().expect("winding worker panicked") {
                results[n - 1] = Some(r);
            }
        }
    });
    let l = results
        .into_iter()
        .map(|r| r.expect("every n is assigned to a worker"))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Signature::from_l(l))
}

/// Cascade carried by p ↦ h⁻¹(p).
pub fn conjugate_cascade(cascade: &CascadeOrbits, h: &Affine2) -> Result<CascadeOrbits, MapError> {
    let inv = h.inverse()?;
    let orbits = cascade
        .orbits
        .iter()
        .map(|o| PeriodicOrbit {
            points: o.points.iter().map(|&p| inv.apply(p)).collect(),
            period: o.period,
            residual: o.residual,
            multipliers: o.multipliers.clone(),
        })
        .collect();
    Ok(CascadeOrbits { dim: cascade.dim, orbits, fathers: cascade.fathers.clone(), atoms: Vec::new() })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SignReport {
    pub l_f: Vec<i64>,
    pub l_g: Vec<i64>,
    pub det_sign: i64,
    pub holds: bool,
}

pub fn conjugacy_sign_check(
    base: &Isotopy,
    order: ArcOrder,
    h: &Affine2,
    cascade: &CascadeOrbits,
    n_max: usize,
    jobs: usize,
) -> Result<SignReport, SignatureError> {
    h.inverse().map_err(|e| SignatureError::BadArgs(e.to_string()))?;
    let sf = compute_signature(cascade, &ExtendedArc::with_order(base.clone(), order), n_max, jobs)?;
    let gc = conjugate_cascade(cascade, h).map_err(|e| SignatureError::BadArgs(e.to_string()))?;
    let garc = ExtendedArc::with_order(Isotopy::conjugated(*h, base.clone()), order);
    let sg = compute_signature(&gc, &garc, n_max, jobs)?;
    let det_sign = match h.orientation() {
        Orientation::Preserving => 1,
        Orientation::Reversing => -1,
    };
    let holds = sf.l.iter().zip(&sg.l).all(|(&a, &b)| b == det_sign * a);
    Ok(SignReport { l_f: sf.l, l_g: sg.l, det_sign, holds })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlternationReport {
    #[serde(rename = "N0")]
    pub n0_bound: usize,
    /// Smallest n ≥ N0 with λ_n < λ_{n+1}.
    pub n_0: Option<usize>,
    /// Smallest n ≥ N0 with λ_n > λ_{n+1}.
    pub n_1: Option<usize>,
    pub verdict: String,
    /// (N0', n_0, n_1) for every N0' = 1..N0.
    pub witnesses: Vec<(usize, Option<usize>, Option<usize>)>,
}

fn first_step(lam: &[Ratio<i64>], from: usize, up: bool) -> Option<usize> {
    (from..lam.len()).find(|&n| {
        let (a, b) = (lam[n - 1], lam[n]);
        if up {
            a < b
        } else {
            a > b
        }
    })
}

/// Alternation search over λ_1..λ_N (indices 1-based); needs N ≥ N0 + 2.
pub fn alternation_report(sig: &Signature, n0: usize) -> Result<AlternationReport, SignatureError> {
    if n0 == 0 || sig.len() < n0 + 2 {
        return Err(SignatureError::BadArgs(format!("signature of length {} too short for N0 = {n0}", sig.len())));
    }
    let lam = &sig.lambda;
    let witnesses: Vec<_> = (1..=n0).map(|k| (k, first_step(lam, k, true), first_step(lam, k, false))).collect();
    let ever_up = first_step(lam, 1, true).is_some();
    let ever_down = first_step(lam, 1, false).is_some();
    let verdict = if witnesses.iter().all(|w| w.1.is_some() && w.2.is_some()) {
        "alternates"
    } else {
        match (ever_up, ever_down) {
            (false, true) => "monotone-decreasing",
            (true, false) => "monotone-increasing",
            (false, false) => "flat",
            (true, true) => "mixed",
        }
    };
    let last = witnesses[n0 - 1];
    Ok(AlternationReport { n0_bound: n0, n_0: last.1, n_1: last.2, verdict: verdict.to_string(), witnesses })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationEstimate {
    pub omega_estimate: Ratio<i64>,
    pub cauchy_tail: Ratio<i64>,
}

/// λ_N together with max |λ_m − λ_n| over m, n ≥ N − 3.
pub fn asymptotic_rotation_estimate(sig: &Signature) -> Result<RotationEstimate, SignatureError> {
    let n = sig.len();
    if n < 3 {
        return Err(SignatureError::BadArgs("need at least three terms".into()));
    }
    let tail = &sig.lambda[n.saturating_sub(4)..];
    let hi = *tail.iter().max().expect("non-empty tail");
    let lo = *tail.iter().min().expect("non-empty tail");
    Ok(RotationEstimate { omega_estimate: sig.lambda[n - 1], cauchy_tail: hi - lo })
}
