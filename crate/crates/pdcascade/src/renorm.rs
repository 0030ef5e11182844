use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::maps::{dist, Affine2, DiskMap, IntervalMap, IntervalRepr, MapError, P2};
use crate::poly::{chebyshev_nodes, fit_even, interpolate, lagrange, linspace, Poly};

const FIT_TOL: f64 = 1e-8;
const CLASS_TOL: f64 = 1e-10;
const FD_JAC: f64 = 1e-7;
const NEWTON_MAX: usize = 100;
/// Seed for r(u) = 1 + r_1 u + r_2 u² + …
pub const SEED_R: [f64; 3] = [1.0, -1.5276, 0.1048];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenormError {
    #[error("not renormalizable: condition `{0}` fails")]
    NotRenormalizable(&'static str),
    #[error("Newton stagnated after {steps} steps, residual {residual:e}")]
    NoConvergence { steps: usize, residual: f64 },
    #[error("re-fit residual {0:e} exceeds 1e-8")]
    FitResidual(f64),
    #[error("bad arguments: {0}")]
    BadArgs(String),
    #[error("inconsistent atoms: {0}")]
    InconsistentAtoms(String),
    #[error("composite escapes the domain at n = {0}")]
    Escape(usize),
    #[error(transparent)]
    Map(#[from] MapError),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassU {
    pub a: f64,
    pub b: f64,
}

/// Checks g ∈ U, returning a = −g(1) and b = g(a).
pub fn class_u(g: &IntervalMap) -> Result<ClassU, RenormError> {
    let crit = g.critical_points()?;
    if crit.len() != 1 || crit[0].abs() > CLASS_TOL {
        return Err(RenormError::NotRenormalizable("unimodal with critical point 0"));
    }
    if (g.apply(0.0) - 1.0).abs() > CLASS_TOL {
        return Err(RenormError::NotRenormalizable("g(0) = 1"));
    }
    let g2 = match &g.repr {
        IntervalRepr::EvenComposed(r) => 2.0 * r.coeffs.get(1).copied().unwrap_or(0.0),
        IntervalRepr::Polynomial(p) => 2.0 * p.coeffs.get(2).copied().unwrap_or(0.0),
    };
    if g2.abs() <= CLASS_TOL {
        return Err(RenormError::NotRenormalizable("g''(0) != 0"));
    }
    let a = -g.apply(1.0);
    let b = g.apply(a);
    if !(a > CLASS_TOL && b - a > CLASS_TOL && 1.0 - b > CLASS_TOL) {
        return Err(RenormError::NotRenormalizable("0 < a < b < 1"));
    }
    if !(a - g.apply(b) > CLASS_TOL) {
        return Err(RenormError::NotRenormalizable("g(b) < a"));
    }
    Ok(ClassU { a, b })
}

/// R(g)(x) = g(g(λx))/λ with λ = g(1), for any evaluable g.
#[inline]
fn apply_r(g: &impl Fn(f64) -> f64, lambda: f64, x: f64) -> f64 {
    g(g(lambda * x)) / lambda
}

#[derive(Clone, Debug)]
pub struct Renormalized {
    pub map: IntervalMap,
    pub lambda: f64,
    pub fit_residual: f64,
}

pub fn renormalize_unimodal(g: &IntervalMap) -> Result<Renormalized, RenormError> {
    class_u(g)?;
    let lambda = g.apply(1.0);
    let deg = g.degree().max(2);
    // g∘g has degree deg², capped by the representation budget
    let target = deg.max((deg * deg).min(40));
    let target = target + target % 2;
    let xs = chebyshev_nodes(2 * target + 1, -1.0, 1.0);
    let f = |x: f64| g.apply(x);
    let ys: Vec<f64> = xs.iter().map(|&x| apply_r(&f, lambda, x)).collect();
    let (mut r, _) = fit_even(&xs, &ys, target / 2);
    // pin the critical value so repeated renormalization cannot drift off the interval
    r.coeffs[0] += apply_r(&f, lambda, 0.0) - r.eval(0.0);
    let fit_residual = linspace(-1.0, 1.0, 512)
        .into_iter()
        .map(|x| (r.eval(x * x) - apply_r(&f, lambda, x)).abs())
        .fold(0.0, f64::max);
    if fit_residual > FIT_TOL {
        return Err(RenormError::FitResidual(fit_residual));
    }
    let map = IntervalMap::build(IntervalRepr::EvenComposed(r), -1.0, 1.0)?;
    Ok(Renormalized { map, lambda, fit_residual })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FixedPoint {
    pub degree: usize,
    pub tol: f64,
    pub lambda: f64,
    pub delta: f64,
    pub residual: f64,
    pub r_coeffs: Vec<f64>,
    pub v_coeffs: Vec<f64>,
    /// Modulus of the leading eigenvalue after deflating δ.
    #[serde(skip)]
    pub second_modulus: f64,
    #[serde(skip)]
    pub newton_steps: usize,
}

impl FixedPoint {
    pub fn r(&self) -> Poly<f64> {
        Poly::new(self.r_coeffs.clone())
    }

    pub fn v(&self) -> Poly<f64> {
        Poly::new(self.v_coeffs.clone())
    }

    pub fn as_map(&self) -> IntervalMap {
        IntervalMap::even(self.r_coeffs.clone()).expect("fixed point maps [-1,1] into itself")
    }
}

/// sup over a 512-point grid of |R(φ) − φ| for φ(x) = r(x²).
pub fn fixed_point_residual(r: &Poly<f64>) -> f64 {
    let phi = |x: f64| r.eval(x * x);
    let lambda = phi(1.0);
    linspace(-1.0, 1.0, 512)
        .into_iter()
        .map(|x| (apply_r(&phi, lambda, x) - phi(x)).abs())
        .fold(0.0, f64::max)
}

fn collocation_defect(r: &Poly<f64>, xs: &[f64]) -> DVector<f64> {
    let phi = |x: f64| r.eval(x * x);
    let lambda = phi(1.0);
    DVector::from_iterator(xs.len(), xs.iter().map(|&x| apply_r(&phi, lambda, x) - phi(x)))
}

fn newton(seed: Vec<f64>, m: usize, tol: f64) -> Result<(Poly<f64>, f64, usize), RenormError> {
    let us = chebyshev_nodes(m, 0.0, 1.0);
    let xs: Vec<f64> = us.iter().map(|u| u.sqrt()).collect();
    let mut c = seed;
    c.resize(m + 1, 0.0);
    c[0] = 1.0;
    let mut r = Poly { coeffs: c.clone() };
    let mut res = fixed_point_residual(&r);
    for step in 0..NEWTON_MAX {
        if res < tol {
            return Ok((Poly::new(c), res, step));
        }
        let f0 = collocation_defect(&r, &xs);
        let mut jac = DMatrix::zeros(m, m);
        for j in 0..m {
            let mut cp = c.clone();
            cp[j + 1] += FD_JAC;
            let fj = collocation_defect(&Poly { coeffs: cp }, &xs);
            jac.set_column(j, &((fj - &f0) / FD_JAC));
        }
        let Some(delta) = jac.lu().solve(&(-&f0)) else {
            return Err(RenormError::NoConvergence { steps: step, residual: res });
        };
        // damped step: halve while the residual grows
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let mut cn = c.clone();
            for j in 0..m {
                cn[j + 1] += t * delta[j];
            }
            let rn = Poly { coeffs: cn.clone() };
            let resn = fixed_point_residual(&rn);
            if resn.is_finite() && resn < res {
                c = cn;
                r = rn;
                res = resn;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(RenormError::NoConvergence { steps: step + 1, residual: res });
        }
    }
    if res < tol {
        return Ok((Poly::new(c), res, NEWTON_MAX));
    }
    Err(RenormError::NoConvergence { steps: NEWTON_MAX, residual: res })
}

/// Derivative of R at φ in the nodal basis e_j(x) = x² ℓ_j(x²) on Chebyshev nodes of [0, 1].
pub fn nodal_jacobian(r: &Poly<f64>, m: usize) -> (DMatrix<f64>, Vec<f64>) {
    let us = chebyshev_nodes(m, 0.0, 1.0);
    let xs: Vec<f64> = us.iter().map(|u| u.sqrt()).collect();
    let phi = |x: f64| r.eval(x * x);
    let lam = phi(1.0);
    let base: Vec<f64> = xs.iter().map(|&x| apply_r(&phi, lam, x)).collect();
    let mut jac = DMatrix::zeros(m, m);
    for j in 0..m {
        let g = |x: f64| {
            let u = x * x;
            r.eval(u) + FD_JAC * u * lagrange(&us, j, u)
        };
        let lg = g(1.0);
        for k in 0..m {
            jac[(k, j)] = (apply_r(&g, lg, xs[k]) - base[k]) / (FD_JAC * us[k]);
        }
    }
    (jac, us)
}

fn power_iteration(a: &DMatrix<f64>, max_iter: usize) -> (f64, DVector<f64>) {
    let n = a.nrows();
    let mut x = DVector::from_fn(n, |i, _| 1.0 + 0.01 * i as f64);
    x /= x.norm();
    let mut est = 0.0;
    for _ in 0..max_iter {
        let y = a * &x;
        let new = x.dot(&y);
        let yn = y.norm();
        if yn == 0.0 {
            return (0.0, x);
        }
        x = y / yn;
        if (new - est).abs() <= 1e-10 * new.abs() {
            return (new, x);
        }
        est = new;
    }
    (est, x)
}

/// Growth-rate estimate of the dominant modulus, robust to complex pairs.
fn dominant_modulus(a: &DMatrix<f64>, iters: usize) -> f64 {
    let n = a.nrows();
    let mut x = DVector::from_fn(n, |i, _| ((i * 7 + 3) % 11) as f64 - 5.0);
    x /= x.norm();
    let mut logs = 0.0;
    let burn = iters / 2;
    for k in 0..iters {
        let y = a * &x;
        let yn = y.norm();
        if yn == 0.0 {
            return 0.0;
        }
        if k >= burn {
            logs += yn.ln();
        }
        x = y / yn;
    }
    (logs / (iters - burn) as f64).exp()
}

#[derive(Clone, Debug)]
pub struct Spectrum {
    pub delta: f64,
    pub eigvec_nodal: Vec<f64>,
    pub nodes: Vec<f64>,
    pub second_modulus: f64,
}

pub fn leading_spectrum(r: &Poly<f64>, m: usize) -> Spectrum {
    let (jac, us) = nodal_jacobian(r, m);
    let (delta, v) = power_iteration(&jac, 20_000);
    let (_, w) = power_iteration(&jac.transpose(), 20_000);
    let deflated = &jac - (&v * w.transpose()) * (delta / w.dot(&v));
    let second_modulus = dominant_modulus(&deflated, 600);
    Spectrum { delta, eigvec_nodal: v.iter().copied().collect(), nodes: us, second_modulus }
}

pub fn solve_fixed_point(degree: usize, tol: f64) -> Result<FixedPoint, RenormError> {
    if degree % 2 != 0 || !(10..=64).contains(&degree) {
        return Err(RenormError::BadArgs(format!("degree {degree} must be even and within [10, 64]")));
    }
    if !(tol >= 1e-12) || !tol.is_finite() {
        return Err(RenormError::BadArgs(format!("tol {tol} must be at least 1e-12")));
    }
    let m = degree / 2;
    let seed = if degree > 20 {
        let (r20, _, _) = newton(SEED_R.to_vec(), 10, 1e-12)?;
        r20.coeffs
    } else {
        SEED_R.to_vec()
    };
    let (r, residual, newton_steps) = newton(seed, m, tol)?;
    let lambda = r.eval(1.0);
    let spec = leading_spectrum(&r, m);
    // v(u) = u·s(u), s interpolating the nodal eigenvector
    let peak = spec
        .eigvec_nodal
        .iter()
        .copied()
        .fold(0.0_f64, |a, b| if b.abs() > a.abs() { b } else { a });
    let s: Vec<f64> = spec.eigvec_nodal.iter().map(|x| x / peak).collect();
    let sp = interpolate(&spec.nodes, &s);
    let mut v = vec![0.0];
    v.extend(sp.coeffs.iter().copied());
    Ok(FixedPoint {
        degree,
        tol,
        lambda,
        delta: spec.delta,
        residual,
        r_coeffs: r.coeffs,
        v_coeffs: v,
        second_modulus: spec.second_modulus,
        newton_steps,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AtomBody {
    Interval { lo: f64, hi: f64 },
    Disk { center: P2, radius: f64, boundary: Vec<P2> },
}

/// Generation-n atoms are the 2^n images f^i(D_n); each holds one point of O_n and two of O_{n+1}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub generation: usize,
    pub index: usize,
    pub body: AtomBody,
}

impl Atom {
    pub fn diameter(&self) -> f64 {
        match &self.body {
            AtomBody::Interval { lo, hi } => hi - lo,
            AtomBody::Disk { radius, .. } => 2.0 * radius,
        }
    }

    pub fn contains(&self, p: P2) -> bool {
        match &self.body {
            AtomBody::Interval { lo, hi } => p[0] >= *lo - 1e-12 && p[0] <= *hi + 1e-12,
            AtomBody::Disk { center, radius, .. } => dist(*center, p) <= *radius * (1.0 + 1e-9),
        }
    }

    pub fn anchor(&self) -> P2 {
        match &self.body {
            AtomBody::Interval { lo, hi } => [0.5 * (lo + hi), 0.0],
            AtomBody::Disk { center, .. } => *center,
        }
    }

    pub fn contains_atom(&self, other: &Atom) -> bool {
        match (&self.body, &other.body) {
            (AtomBody::Interval { lo, hi }, AtomBody::Interval { lo: l2, hi: h2 }) => {
                *l2 >= *lo - 1e-12 && *h2 <= *hi + 1e-12
            }
            _ => self.contains(other.anchor()),
        }
    }

    pub fn distance(&self, other: &Atom) -> f64 {
        match (&self.body, &other.body) {
            (AtomBody::Interval { lo, hi }, AtomBody::Interval { lo: l2, hi: h2 }) => {
                (l2 - hi).max(lo - h2).max(0.0)
            }
            _ => {
                let r1 = self.diameter() / 2.0;
                let r2 = other.diameter() / 2.0;
                (dist(self.anchor(), other.anchor()) - r1 - r2).max(0.0)
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AtomTree {
    /// generations[k] holds generation k+1.
    pub generations: Vec<Vec<Atom>>,
    pub lambdas: Vec<f64>,
    /// Depth and reason when renormalization stopped early.
    pub failure: Option<(usize, String)>,
}

/// Interval atoms f^i(J_n), J_n = [−|λ_0⋯λ_{n−1}|, |λ_0⋯λ_{n−1}|].
pub fn atoms_1d(g: &IntervalMap, n: usize) -> Result<AtomTree, RenormError> {
    let crit = g.critical_points()?;
    let mut lambdas = Vec::new();
    let mut failure = None;
    let mut gk = g.clone();
    for k in 0..n {
        match renormalize_unimodal(&gk) {
            Ok(rn) => {
                lambdas.push(rn.lambda);
                gk = rn.map;
            }
            Err(e) => {
                failure = Some((k, e.to_string()));
                break;
            }
        }
    }
    let mut generations = Vec::new();
    let mut w = 1.0;
    for (k, lam) in lambdas.iter().enumerate() {
        w *= lam.abs();
        let gen = k + 1;
        let (mut lo, mut hi) = (-w, w);
        let mut atoms = Vec::with_capacity(1 << gen);
        for i in 0..(1usize << gen) {
            atoms.push(Atom { generation: gen, index: i, body: AtomBody::Interval { lo, hi } });
            let (l2, h2) = g.image(lo, hi, &crit);
            lo = l2;
            hi = h2;
        }
        generations.push(atoms);
    }
    Ok(AtomTree { generations, lambdas, failure })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeometryReport {
    pub a_hat: Option<f64>,
    pub b_hat: Option<f64>,
    pub diameter_max: Vec<f64>,
    pub size_ratios: Vec<f64>,
    pub gap_ratios: Vec<f64>,
}

impl GeometryReport {
    pub fn bounded(&self) -> bool {
        matches!((self.a_hat, self.b_hat), (Some(a), Some(b)) if a > 0.0 && a <= b && b < 1.0)
    }
}

pub fn geometry_report(generations: &[Vec<Atom>]) -> Result<GeometryReport, RenormError> {
    let diameter_max = generations
        .iter()
        .map(|g| g.iter().map(Atom::diameter).fold(0.0, f64::max))
        .collect();
    let mut size_ratios = Vec::new();
    let mut gap_ratios = Vec::new();
    for w in generations.windows(2) {
        let (parents, children) = (&w[0], &w[1]);
        let mut kids: Vec<Vec<&Atom>> = vec![Vec::new(); parents.len()];
        for c in children {
            let owners: Vec<usize> = (0..parents.len()).filter(|&i| parents[i].contains_atom(c)).collect();
            if owners.len() != 1 {
                return Err(RenormError::InconsistentAtoms(format!(
                    "atom {} of generation {} lies in {} parents",
                    c.index,
                    c.generation,
                    owners.len()
                )));
            }
            kids[owners[0]].push(c);
        }
        for (p, ks) in parents.iter().zip(&kids) {
            let d = p.diameter();
            for (i, j) in ks.iter().enumerate() {
                size_ratios.push(j.diameter() / d);
                for k in &ks[i + 1..] {
                    gap_ratios.push(j.distance(k) / d);
                }
            }
        }
    }
    let all = size_ratios.iter().chain(&gap_ratios);
    let a_hat = all.clone().copied().reduce(f64::min);
    let b_hat = all.copied().reduce(f64::max);
    Ok(GeometryReport { a_hat, b_hat, diameter_max, size_ratios, gap_ratios })
}

/// max over a 32×32 grid of the unit disk of |det D R_n|, R_n = Ξ_n⁻¹ ∘ f^{2^n} ∘ Ξ_n, Ξ_n = ξ_0∘…∘ξ_{n−1},
/// with finite-difference Jacobians of f.
pub fn det_decay_check(f: &DiskMap, scalings: &[Affine2], n_max: usize) -> Result<Vec<f64>, RenormError> {
    if scalings.len() < n_max {
        return Err(RenormError::BadArgs(format!("{} scalings supplied for n_max = {n_max}", scalings.len())));
    }
    let grid: Vec<P2> = (0..32)
        .flat_map(|i| (0..32).map(move |j| [-1.0 + (2 * i + 1) as f64 / 32.0, -1.0 + (2 * j + 1) as f64 / 32.0]))
        .filter(|p| p[0].hypot(p[1]) <= 1.0)
        .collect();
    let mut out = Vec::with_capacity(n_max);
    let mut xi = Affine2::identity();
    for n in 1..=n_max {
        xi = xi.compose(&scalings[n - 1]);
        let q = 1usize << n;
        // det D R_n(p) = Π det Df(x_k) along x_k = f^k(Ξ_n p); the affine factors cancel, and taking
        // determinants per step avoids the cancellation of a differenced composite
        let mut worst = 0.0_f64;
        for &p in &grid {
            let mut x = xi.apply(p);
            let mut det = 1.0;
            for _ in 0..q {
                det *= f.fd_jacobian(x).map_err(|_| RenormError::Escape(n))?.determinant();
                x = f.eval(x).map_err(|_| RenormError::Escape(n))?;
            }
            worst = worst.max(det.abs());
        }
        out.push(worst);
    }
    Ok(out)
}
