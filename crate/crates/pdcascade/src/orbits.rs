use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::maps::{dist, norm, sub, DiskMap, IntervalMap, Lap, MapError, P2};
use crate::renorm::{atoms_1d, Atom, AtomBody, RenormError};

const RESIDUAL_ACCEPT: f64 = 1e-9;
const PRIMITIVE_GAP: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrbitError {
    #[error("Newton did not converge, best residual {best:e}")]
    NoConvergence { best: f64 },
    #[error("orbit has period {divisor}, not the requested {period}")]
    Primitivity { period: usize, divisor: usize },
    #[error("multiplier crossing not bracketed at n = {0}")]
    Bracket(usize),
    #[error("cascade structure violated: {0}")]
    Structure(String),
    #[error("point {0} cannot be assigned to a lap")]
    LapAssignment(f64),
    #[error("continuation failed at parameter {0}")]
    Continuation(f64),
    #[error("bad arguments: {0}")]
    BadArgs(String),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Renorm(#[from] RenormError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    /// Points in orbit order, p_{i+1} = f(p_i). 1D orbits keep y = 0.
    pub points: Vec<P2>,
    pub period: usize,
    pub residual: f64,
    /// Eigenvalues of D f^q at points[0] as (re, im); a single entry in 1D.
    pub multipliers: Vec<[f64; 2]>,
}

impl PeriodicOrbit {
    pub fn xs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p[0]).collect()
    }

    pub fn rotate(&mut self, k: usize) {
        let n = self.points.len().max(1);
        self.points.rotate_left(k % n);
    }
}

fn proper_divisors(q: usize) -> Vec<usize> {
    (1..q).filter(|d| q % d == 0).collect()
}

fn orbit_1d(g: &IntervalMap, x0: f64, q: usize) -> PeriodicOrbit {
    let mut pts = Vec::with_capacity(q);
    let mut x = x0;
    for _ in 0..q {
        pts.push([x, 0.0]);
        x = g.apply(x);
    }
    let residual = pts.iter().map(|p| (g.iterate_d(p[0], q).0 - p[0]).abs()).fold(0.0, f64::max);
    let (_, m) = g.iterate_d(x0, q);
    PeriodicOrbit { points: pts, period: q, residual, multipliers: vec![[m, 0.0]] }
}

fn is_primitive_1d(g: &IntervalMap, orbit: &PeriodicOrbit) -> bool {
    proper_divisors(orbit.period).into_iter().all(|d| {
        orbit
            .points
            .iter()
            .map(|p| (g.iterate_d(p[0], d).0 - p[0]).abs())
            .fold(f64::INFINITY, f64::min)
            > PRIMITIVE_GAP
    })
}

/// All primitive period-q orbits, found by a sign-change scan of g^q(x) − x.
pub fn find_orbits_1d(g: &IntervalMap, q: usize) -> Vec<PeriodicOrbit> {
    find_orbits_1d_grid(g, q, (1usize << 14).max(8 * q))
}

pub fn find_orbits_1d_grid(g: &IntervalMap, q: usize, cells: usize) -> Vec<PeriodicOrbit> {
    let h = |x: f64| g.iterate_d(x, q).0 - x;
    let xs: Vec<f64> = (0..=cells).map(|i| g.lo + (g.hi - g.lo) * i as f64 / cells as f64).collect();
    let vs: Vec<f64> = xs.iter().map(|&x| h(x)).collect();
    let mut roots = Vec::new();
    for i in 0..cells {
        if vs[i] == 0.0 {
            roots.push(xs[i]);
        } else if vs[i] * vs[i + 1] < 0.0 {
            let (mut a, mut b) = (xs[i], xs[i + 1]);
            let sa = vs[i].signum();
            while b - a > 1e-12 {
                let m = 0.5 * (a + b);
                let hm = h(m);
                if hm == 0.0 {
                    a = m;
                    b = m;
                    break;
                }
                if hm.signum() == sa {
                    a = m;
                } else {
                    b = m;
                }
            }
            roots.push(0.5 * (a + b));
        }
    }
    if vs[cells] == 0.0 {
        roots.push(xs[cells]);
    }
    let mut orbits: Vec<PeriodicOrbit> = Vec::new();
    for r in roots {
        if orbits.iter().any(|o| o.points.iter().any(|p| (p[0] - r).abs() < 1e-9)) {
            continue;
        }
        let o = orbit_1d(g, r, q);
        if o.residual < RESIDUAL_ACCEPT && is_primitive_1d(g, &o) {
            orbits.push(o);
        }
    }
    for o in &mut orbits {
        let k = (0..q).min_by(|&i, &j| o.points[i][0].total_cmp(&o.points[j][0])).unwrap_or(0);
        o.rotate(k);
    }
    orbits.sort_by(|a, b| a.points[0][0].total_cmp(&b.points[0][0]));
    orbits
}

/// Newton refinement of a 1D period-q point from a seed.
pub fn refine_orbit_1d(g: &IntervalMap, seed: f64, q: usize) -> Result<PeriodicOrbit, OrbitError> {
    let mut x = seed;
    for _ in 0..60 {
        let (y, d) = g.iterate_d(x, q);
        let f = y - x;
        if f.abs() < 1e-14 {
            break;
        }
        x -= f / (d - 1.0);
        if !g.in_domain(x) {
            return Err(OrbitError::NoConvergence { best: f.abs() });
        }
    }
    let o = orbit_1d(g, x, q);
    if o.residual >= RESIDUAL_ACCEPT {
        return Err(OrbitError::NoConvergence { best: o.residual });
    }
    if !is_primitive_1d(g, &o) {
        return Err(OrbitError::Primitivity { period: q, divisor: q / 2 });
    }
    Ok(o)
}

/// D f^q at p as a product of one-step finite-difference Jacobians, together with f^q(p).
pub fn jacobian_power(f: &DiskMap, p: P2, q: usize) -> Result<(P2, Matrix2<f64>), MapError> {
    let mut m = Matrix2::identity();
    let mut x = p;
    for _ in 0..q {
        m = f.fd_jacobian(x)? * m;
        x = f.apply(x)?;
        if !f.in_domain(x) {
            return Err(MapError::Escape { step: q });
        }
    }
    Ok((x, m))
}

fn eigen2(m: &Matrix2<f64>) -> [[f64; 2]; 2] {
    let tr = m.trace();
    let det = m.determinant();
    let disc = tr * tr / 4.0 - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        [[tr / 2.0 - s, 0.0], [tr / 2.0 + s, 0.0]]
    } else {
        let s = (-disc).sqrt();
        [[tr / 2.0, -s], [tr / 2.0, s]]
    }
}

/// Eigenvector of the most negative real eigenvalue, if any.
pub fn negative_direction(m: &Matrix2<f64>) -> Option<(f64, P2)> {
    let ev = eigen2(m);
    if ev[0][1] != 0.0 {
        return None;
    }
    let l = ev[0][0];
    // (M − l I) v = 0
    let (a, b, c, d) = (m[(0, 0)] - l, m[(0, 1)], m[(1, 0)], m[(1, 1)] - l);
    let v = if a.abs() + b.abs() >= c.abs() + d.abs() { [-b, a] } else { [-d, c] };
    let n = norm(v);
    if n == 0.0 {
        return Some((l, [1.0, 0.0]));
    }
    Some((l, [v[0] / n, v[1] / n]))
}

fn orbit_2d(f: &DiskMap, p: P2, q: usize) -> Result<PeriodicOrbit, MapError> {
    let mut pts = Vec::with_capacity(q);
    let mut x = p;
    for _ in 0..q {
        pts.push(x);
        x = f.apply(x)?;
    }
    let mut residual = 0.0_f64;
    for &pt in &pts {
        residual = residual.max(dist(f.iterate(pt, q)?, pt));
    }
    let (_, m) = jacobian_power(f, p, q)?;
    Ok(PeriodicOrbit { points: pts, period: q, residual, multipliers: eigen2(&m).to_vec() })
}

fn newton_2d(f: &DiskMap, seed: P2, q: usize, steps: usize) -> Result<(P2, f64), OrbitError> {
    let resid = |p: P2| -> f64 { f.iterate(p, q).map(|y| dist(y, p)).unwrap_or(f64::INFINITY) };
    let mut p = seed;
    let mut r = resid(p);
    let mut best = r;
    for _ in 0..steps {
        // keep polishing past acceptance: errors at p grow along the orbit
        if r < 1e-14 {
            return Ok((p, r));
        }
        let Ok((y, m)) = jacobian_power(f, p, q) else {
            return Err(OrbitError::NoConvergence { best });
        };
        let jm = m - Matrix2::identity();
        let Some(inv) = jm.try_inverse() else {
            return Err(OrbitError::NoConvergence { best });
        };
        let fv = nalgebra::Vector2::new(y[0] - p[0], y[1] - p[1]);
        let step = inv * fv;
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..20 {
            let pn = [p[0] - t * step[0], p[1] - t * step[1]];
            let rn = resid(pn);
            if rn < r {
                p = pn;
                r = rn;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        best = best.min(r);
        if !moved {
            break;
        }
    }
    if r < 1e-10 {
        Ok((p, r))
    } else {
        Err(OrbitError::NoConvergence { best })
    }
}

pub fn find_orbit_2d(f: &DiskMap, q: usize, seed: P2) -> Result<PeriodicOrbit, OrbitError> {
    if q == 0 || !q.is_power_of_two() || q > 512 {
        return Err(OrbitError::BadArgs(format!("period {q} must be 2^n with n <= 9")));
    }
    if !f.in_domain(seed) {
        return Err(OrbitError::Map(MapError::Domain(seed.to_vec())));
    }
    let (p, _) = newton_2d(f, seed, q, 60)?;
    let o = orbit_2d(f, p, q)?;
    for d in proper_divisors(q) {
        let gap = o
            .points
            .iter()
            .map(|&x| f.iterate(x, d).map(|y| dist(y, x)).unwrap_or(f64::INFINITY))
            .fold(f64::INFINITY, f64::min);
        if gap <= PRIMITIVE_GAP {
            return Err(OrbitError::Primitivity { period: q, divisor: d });
        }
    }
    Ok(o)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Logistic,
    Henon { b: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Accumulation {
    pub family: Family,
    /// a_1..a_N: parameter where O_{n−1} flips.
    pub flips: Vec<f64>,
    pub a_inf: f64,
    /// (a_n − a_{n−1}) / (a_{n+1} − a_n) for n = 2..N−1.
    pub ratios: Vec<f64>,
}

fn logistic(a: f64) -> IntervalMap {
    IntervalMap::even(vec![1.0, -a]).expect("logistic maps [-1,1] into itself for a <= 2")
}

fn bisect(mut lo: f64, mut hi: f64, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    let flo = f(lo);
    while hi - lo > tol {
        let m = 0.5 * (lo + hi);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = m;
        } else {
            hi = m;
        }
    }
    0.5 * (lo + hi)
}

/// Parameters s_1..s_N where the critical point is periodic of period 2^n.
pub fn superstable_parameters(n_max: usize) -> Result<Vec<f64>, OrbitError> {
    let mut s = vec![0.0, 1.0];
    for n in 2..=n_max {
        let q = 1usize << n;
        let gap = s[n - 1] - s[n - 2];
        let factor = if n == 2 { 0.35 } else { 0.26 };
        let lo = s[n - 1] + 0.05 * gap;
        let hi = s[n - 1] + factor * gap;
        let h = |a: f64| logistic(a).iterate_d(0.0, q).0;
        let samples = 400;
        let mut found = None;
        let mut prev = (lo, h(lo));
        for i in 1..=samples {
            let a = lo + (hi - lo) * i as f64 / samples as f64;
            let v = h(a);
            if v * prev.1 <= 0.0 {
                found = Some((prev.0, a));
                break;
            }
            prev = (a, v);
        }
        let (a0, a1) = found.ok_or(OrbitError::Bracket(n))?;
        s.push(bisect(a0, a1, 1e-14, h));
    }
    Ok(s[1..].to_vec())
}

/// Point of O_{n−1} for the logistic map: the root of g^q(x) − x between 0 and g^q(0).
fn logistic_central_point(a: f64, q: usize) -> f64 {
    let g = logistic(a);
    let h = |x: f64| g.iterate_d(x, q).0 - x;
    let end = g.iterate_d(0.0, q).0;
    let (lo, hi) = if end > 0.0 { (0.0, end) } else { (end, 0.0) };
    if hi - lo < 1e-300 {
        return 0.0;
    }
    bisect(lo, hi, 1e-15, h)
}

fn logistic_flips(n_max: usize) -> Result<Vec<f64>, OrbitError> {
    let s = superstable_parameters(n_max)?;
    let mut flips = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let q = 1usize << (n - 1);
        let (lo, hi) = if n == 1 { (0.1, s[0]) } else { (s[n - 2], s[n - 1]) };
        let mult = |a: f64| {
            let p = logistic_central_point(a, q);
            logistic(a).iterate_d(p, q).1 + 1.0
        };
        if mult(lo) * mult(hi) > 0.0 {
            return Err(OrbitError::Bracket(n));
        }
        flips.push(bisect(lo, hi, 1e-11, mult));
    }
    Ok(flips)
}

fn finish_accumulation(family: Family, flips: Vec<f64>, delta: f64) -> Accumulation {
    let n = flips.len();
    let a_inf = if n >= 2 { flips[n - 1] + (flips[n - 1] - flips[n - 2]) / (delta - 1.0) } else { flips[n - 1] };
    let ratios = (1..n.saturating_sub(1))
        .map(|i| (flips[i] - flips[i - 1]) / (flips[i + 1] - flips[i]))
        .collect();
    Accumulation { family, flips, a_inf, ratios }
}

pub fn accumulation_parameter(family: Family, n: usize, delta: f64) -> Result<Accumulation, OrbitError> {
    if n < 2 {
        return Err(OrbitError::BadArgs("need at least two flips".into()));
    }
    match family {
        Family::Logistic => Ok(finish_accumulation(family, logistic_flips(n)?, delta)),
        Family::Henon { b } => {
            let cont = HenonCascade::locate(b, n)?;
            Ok(finish_accumulation(family, cont.flips, delta))
        }
    }
}

/// Hénon fixed point (closed form).
pub fn henon_fixed_point(a: f64, b: f64) -> P2 {
    let x = (-(1.0 - b) + ((1.0 - b) * (1.0 - b) + 4.0 * a).sqrt()) / (2.0 * a);
    [x, b * x]
}

/// Period-doubling data of the Hénon family at fixed b found by parameter continuation.
#[derive(Clone, Debug)]
pub struct HenonCascade {
    pub b: f64,
    /// flips[k] = a_{k+1}, where O_k flips and O_{k+1} is born.
    pub flips: Vec<f64>,
    /// births[k]: (parameter, point) where O_k was first seeded.
    pub births: Vec<(f64, P2)>,
}

fn flip_indicator(f: &DiskMap, p: P2, q: usize) -> Result<f64, OrbitError> {
    let (_, m) = jacobian_power(f, p, q)?;
    Ok(1.0 + m.trace() + m.determinant())
}

fn separation(f: &DiskMap, p: P2, q: usize) -> f64 {
    if q == 1 {
        return f64::INFINITY;
    }
    f.iterate(p, q / 2).map(|y| dist(y, p)).unwrap_or(0.0)
}

/// Follows a period-q orbit point from (a0, p0) to a1 with adaptive steps.
pub fn continue_henon(b: f64, q: usize, a0: f64, p0: P2, a1: f64) -> Result<P2, OrbitError> {
    if q == 1 {
        return Ok(henon_fixed_point(a1, b));
    }
    let mut a = a0;
    let mut p = p0;
    let mut h = (a1 - a0) / 8.0;
    while (a1 - a).abs() > 0.0 {
        if h.abs() < 1e-15 {
            return Err(OrbitError::Continuation(a));
        }
        let an = if (a1 - a).abs() <= h.abs() { a1 } else { a + h };
        let f = DiskMap::henon(an, b);
        match newton_2d(&f, p, q, 30) {
            Ok((pn, _)) => {
                let sep = separation(&f, pn, q);
                if sep > 1e-7 && dist(pn, p) < 0.5 * sep {
                    a = an;
                    p = pn;
                    h *= 1.5;
                    continue;
                }
                h *= 0.5;
            }
            Err(_) => h *= 0.5,
        }
    }
    Ok(p)
}

impl HenonCascade {
    fn birth_seed(b: f64, a: f64, father: P2, q_father: usize) -> Result<P2, OrbitError> {
        let f = DiskMap::henon(a, b);
        let (_, m) = jacobian_power(&f, father, q_father)?;
        let (_, e) = negative_direction(&m).ok_or(OrbitError::Continuation(a))?;
        let q = 2 * q_father;
        let mut off = 1e-4;
        while off < 0.5 {
            for s in [1.0, -1.0] {
                let seed = [father[0] + s * off * e[0], father[1] + s * off * e[1]];
                if let Ok((p, _)) = newton_2d(&f, seed, q, 40) {
                    if separation(&f, p, q) > 1e-7 {
                        return Ok(p);
                    }
                }
            }
            off *= 1.6;
        }
        Err(OrbitError::Continuation(a))
    }

    /// Locates flips a_1..a_N.
    pub fn locate(b: f64, n_max: usize) -> Result<Self, OrbitError> {
        let a_birth0 = -(1.0 - b) * (1.0 - b) / 4.0;
        let mut flips: Vec<f64> = Vec::new();
        let mut births = vec![(a_birth0, henon_fixed_point(a_birth0 + 1e-3, b))];
        for n in 0..n_max {
            let q = 1usize << n;
            let (a_start, p_start) = births[n];
            // the first two gaps are (1 − b)² and (1 + b²)/2 in closed form
            let gap = match n {
                0 => (1.0 - b) * (1.0 - b),
                1 => 0.5 * (1.0 + b * b),
                _ => flips[n - 1] - flips[n - 2],
            };
            let base = if n == 0 { a_birth0 } else { flips[n - 1] };
            let lo = base + 0.002 * gap;
            let hi = base + if n <= 1 { 1.5 } else { 0.35 } * gap;
            let mut a_prev = a_start.max(if n == 0 { a_birth0 + 1e-3 } else { a_start });
            let mut p_prev = continue_henon(b, q, a_start, p_start, a_prev)?;
            let mut ind_prev = flip_indicator(&DiskMap::henon(a_prev, b), p_prev, q)?;
            let mut bracket = None;
            let samples = 30;
            for i in 0..=samples {
                let a = lo + (hi - lo) * i as f64 / samples as f64;
                if a <= a_prev {
                    continue;
                }
                let p = continue_henon(b, q, a_prev, p_prev, a)?;
                let ind = flip_indicator(&DiskMap::henon(a, b), p, q)?;
                if ind * ind_prev <= 0.0 {
                    bracket = Some((a_prev, p_prev, a));
                    break;
                }
                a_prev = a;
                p_prev = p;
                ind_prev = ind;
            }
            let (mut l, mut pl, mut r) = bracket.ok_or(OrbitError::Bracket(n + 1))?;
            let sl = ind_prev.signum();
            while r - l > 1e-12 {
                let m = 0.5 * (l + r);
                let pm = continue_henon(b, q, l, pl, m)?;
                let im = flip_indicator(&DiskMap::henon(m, b), pm, q)?;
                if im.signum() == sl {
                    l = m;
                    pl = pm;
                } else {
                    r = m;
                }
            }
            let a_flip = 0.5 * (l + r);
            flips.push(a_flip);
            let next_gap = if n == 0 { 2.0 } else { flips[n] - flips[n - 1] };
            let a_seed = a_flip + 0.002 * next_gap;
            let father = continue_henon(b, q, l, pl, a_seed)?;
            let son = Self::birth_seed(b, a_seed, father, q)?;
            births.push((a_seed, son));
        }
        Ok(HenonCascade { b, flips, births })
    }

    /// Orbits O_0..O_depth at parameter a (depth must not exceed the located flips).
    pub fn orbits_at(&self, a: f64, depth: usize) -> Result<Vec<PeriodicOrbit>, OrbitError> {
        if depth >= self.births.len() {
            return Err(OrbitError::BadArgs(format!("depth {depth} beyond located births")));
        }
        let f = DiskMap::henon(a, self.b);
        let mut out = Vec::new();
        for n in 0..=depth {
            let q = 1usize << n;
            let (a0, p0) = self.births[n];
            let p = continue_henon(self.b, q, a0, p0, a)?;
            let o = find_orbit_2d(&f, q, p)?;
            out.push(o);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CascadeOrbits {
    pub dim: usize,
    pub orbits: Vec<PeriodicOrbit>,
    /// fathers[n][k]: index in O_{n−1} of the father of O_n[k]; fathers[0] is empty.
    pub fathers: Vec<Vec<usize>>,
    /// atoms[g−1]: generation-g atoms, index i holding O_g[i].
    pub atoms: Vec<Vec<Atom>>,
}

impl CascadeOrbits {
    pub fn depth(&self) -> usize {
        self.orbits.len() - 1
    }

    pub fn sons(&self, n: usize, father: usize) -> Vec<usize> {
        (0..self.orbits[n + 1].points.len()).filter(|&k| self.fathers[n + 1][k] == father).collect()
    }

    /// Checks one father and two sons per atom, and in 1D that the father sits between its sons.
    pub fn check_structure(&self) -> Result<(), OrbitError> {
        for (n, o) in self.orbits.iter().enumerate() {
            if o.period != 1 << n {
                return Err(OrbitError::Structure(format!("O_{n} has period {}", o.period)));
            }
        }
        for n in 0..self.depth() {
            for j in 0..self.orbits[n].points.len() {
                let s = self.sons(n, j);
                if s.len() != 2 {
                    return Err(OrbitError::Structure(format!("father {j} of O_{n} has {} sons", s.len())));
                }
                if self.dim == 1 {
                    let f = self.orbits[n].points[j][0];
                    let a = self.orbits[n + 1].points[s[0]][0];
                    let b = self.orbits[n + 1].points[s[1]][0];
                    if !((a < f && f < b) || (b < f && f < a)) {
                        return Err(OrbitError::Structure(format!("father {j} of O_{n} not between its sons")));
                    }
                }
            }
        }
        for (gi, gen) in self.atoms.iter().enumerate() {
            let g = gi + 1;
            if g > self.depth() {
                break;
            }
            for atom in gen {
                let own = self.orbits[g].points.iter().filter(|&&p| atom.contains(p)).count();
                if own != 1 {
                    return Err(OrbitError::Structure(format!(
                        "atom {} of generation {g} holds {own} points of O_{g}",
                        atom.index
                    )));
                }
                if g < self.depth() {
                    let kids = self.orbits[g + 1].points.iter().filter(|&&p| atom.contains(p)).count();
                    if kids != 2 {
                        return Err(OrbitError::Structure(format!(
                            "atom {} of generation {g} holds {kids} points of O_{}",
                            atom.index,
                            g + 1
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Orders O_{n+1} so that O_{n+1}[k] has father O_n[k mod 2^n], using the son nearest O_n[0].
fn align_sons(orbits: &mut [PeriodicOrbit]) -> Vec<Vec<usize>> {
    let mut fathers = vec![Vec::new()];
    for n in 1..orbits.len() {
        let f0 = orbits[n - 1].points[0];
        let k = (0..orbits[n].points.len())
            .min_by(|&i, &j| dist(orbits[n].points[i], f0).total_cmp(&dist(orbits[n].points[j], f0)))
            .unwrap_or(0);
        orbits[n].rotate(k);
        let qf = orbits[n - 1].points.len();
        fathers.push((0..orbits[n].points.len()).map(|k| k % qf).collect());
    }
    fathers
}

/// 1D cascade for a class-U map: atoms from successive renormalizations, orbits from the scan.
pub fn build_cascade_1d(g: &IntervalMap, n: usize) -> Result<CascadeOrbits, OrbitError> {
    if n > 12 {
        return Err(OrbitError::BadArgs(format!("depth {n} exceeds 12")));
    }
    let tree = atoms_1d(g, n)?;
    if tree.generations.len() < n {
        let (k, why) = tree.failure.clone().unwrap_or((tree.generations.len(), "unknown".into()));
        return Err(OrbitError::Structure(format!("renormalization failed at depth {k}: {why}")));
    }
    let mut orbits: Vec<PeriodicOrbit> = Vec::new();
    for m in 1..=n {
        let atoms = &tree.generations[m - 1];
        let cands = find_orbits_1d(g, 1 << m);
        let pick = cands.into_iter().find(|o| {
            atoms.iter().all(|at| o.points.iter().filter(|&&p| at.contains(p)).count() == 1)
        });
        let mut o = pick.ok_or_else(|| OrbitError::Structure(format!("no period-{} orbit fits the atoms", 1 << m)))?;
        let k = o.points.iter().position(|&p| atoms[0].contains(p)).unwrap_or(0);
        o.rotate(k);
        orbits.push(o);
    }
    let o1 = orbits[0].xs();
    let fixed = find_orbits_1d(g, 1)
        .into_iter()
        .find(|o| {
            let x = o.points[0][0];
            (o1[0] - x) * (o1[1] - x) < 0.0
        })
        .ok_or_else(|| OrbitError::Structure("no fixed point between the period-2 points".into()))?;
    orbits.insert(0, fixed);
    let qf = |n: usize| 1usize << n;
    let fathers: Vec<Vec<usize>> = (0..=n)
        .map(|m| if m == 0 { Vec::new() } else { (0..qf(m)).map(|k| k % qf(m - 1)).collect() })
        .collect();
    let c = CascadeOrbits { dim: 1, orbits, fathers, atoms: tree.generations };
    c.check_structure()?;
    Ok(c)
}

/// 1D cascade refined from seeds (one seed point per generation); fathers from nearest neighbours.
pub fn cascade_from_seeds_1d(g: &IntervalMap, seeds: &[f64]) -> Result<CascadeOrbits, OrbitError> {
    let mut orbits = Vec::new();
    for (n, &s) in seeds.iter().enumerate() {
        orbits.push(refine_orbit_1d(g, s, 1 << n)?);
    }
    let mut fathers = vec![Vec::new()];
    for n in 1..orbits.len() {
        let fx = orbits[n - 1].xs();
        let sx = orbits[n].xs();
        let mut link = vec![usize::MAX; sx.len()];
        for (j, &f) in fx.iter().enumerate() {
            let left = (0..sx.len()).filter(|&k| sx[k] < f).max_by(|&a, &b| sx[a].total_cmp(&sx[b]));
            let right = (0..sx.len()).filter(|&k| sx[k] > f).min_by(|&a, &b| sx[a].total_cmp(&sx[b]));
            for k in [left, right] {
                let k = k.ok_or_else(|| OrbitError::Structure(format!("father {j} of O_{} lacks a son", n - 1)))?;
                if link[k] != usize::MAX {
                    return Err(OrbitError::Structure(format!("son {k} of O_{n} claimed twice")));
                }
                link[k] = j;
            }
        }
        fathers.push(link);
    }
    let c = CascadeOrbits { dim: 1, orbits, fathers, atoms: Vec::new() };
    c.check_structure()?;
    Ok(c)
}

/// Bounding disks of orbit clusters: generation-g atom i collects the points of O_m with index ≡ i mod 2^g.
fn cluster_atoms(f: &DiskMap, orbits: &[PeriodicOrbit], generations: usize) -> Result<Vec<Vec<Atom>>, OrbitError> {
    let deep = orbits.len() - 1;
    let mut out = Vec::new();
    for g in 1..=generations.min(deep.saturating_sub(1)) {
        let q = 1usize << g;
        let mut atoms = Vec::with_capacity(q);
        for i in 0..q {
            let mut pts: Vec<P2> = Vec::new();
            for o in &orbits[g..] {
                pts.extend(o.points.iter().enumerate().filter(|(k, _)| k % q == i).map(|(_, p)| *p));
            }
            let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for p in &pts {
                for d in 0..2 {
                    lo[d] = lo[d].min(p[d]);
                    hi[d] = hi[d].max(p[d]);
                }
            }
            let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
            let radius = pts.iter().map(|&p| dist(p, center)).fold(0.0, f64::max) * 1.05;
            atoms.push(Atom { generation: g, index: i, body: AtomBody::Disk { center, radius, boundary: Vec::new() } });
        }
        // polygonal image of the index-0 circle under f^i
        if let AtomBody::Disk { center, radius, .. } = atoms[0].body.clone() {
            let circle: Vec<P2> = (0..32)
                .map(|k| {
                    let t = k as f64 * std::f64::consts::TAU / 32.0;
                    [center[0] + radius * t.cos(), center[1] + radius * t.sin()]
                })
                .collect();
            let mut cur = circle;
            for atom in atoms.iter_mut() {
                if let AtomBody::Disk { boundary, .. } = &mut atom.body {
                    *boundary = cur.clone();
                }
                cur = cur.iter().map(|&p| f.apply(p).unwrap_or(p)).collect();
            }
        }
        out.push(atoms);
    }
    Ok(out)
}

/// 2D cascade from a list of orbits O_0..O_m; atoms to generation m − 1.
pub fn assemble_cascade_2d(f: &DiskMap, mut orbits: Vec<PeriodicOrbit>) -> Result<CascadeOrbits, OrbitError> {
    let fathers = align_sons(&mut orbits);
    let gens = orbits.len().saturating_sub(2);
    let atoms = cluster_atoms(f, &orbits, gens)?;
    let c = CascadeOrbits { dim: 2, orbits, fathers, atoms };
    c.check_structure()?;
    Ok(c)
}

/// Hénon cascade at parameter a: orbits O_0..O_{n+1} by continuation, atoms to generation n.
pub fn build_cascade_henon(cont: &HenonCascade, a: f64, n: usize) -> Result<CascadeOrbits, OrbitError> {
    let orbits = cont.orbits_at(a, n + 1)?;
    assemble_cascade_2d(&DiskMap::henon(a, cont.b), orbits)
}

/// O_0..O_n with sons seeded from the father ± an offset along the eigendirection of the negative multiplier.
pub fn seeded_orbits(f: &DiskMap, fixed_seed: P2, n: usize) -> Result<Vec<PeriodicOrbit>, OrbitError> {
    let mut orbits = vec![find_orbit_2d(f, 1, fixed_seed)?];
    let mut scale = 0.5;
    for m in 1..=n {
        let q = 1usize << m;
        let father = orbits[m - 1].points[0];
        let (_, jac) = jacobian_power(f, father, q / 2)?;
        let (_, e) = negative_direction(&jac)
            .ok_or_else(|| OrbitError::Structure(format!("O_{} has no flip direction", m - 1)))?;
        let mut found = None;
        'outer: for frac in [0.25, 0.5, 0.125, 0.75, 0.0625, 1.0, 0.03125] {
            for s in [1.0, -1.0] {
                let off = scale * frac;
                let seed = [father[0] + s * off * e[0], father[1] + s * off * e[1]];
                if let Ok(o) = find_orbit_2d(f, q, seed) {
                    let near = o.points.iter().map(|&p| dist(p, father)).fold(f64::INFINITY, f64::min);
                    if near < 2.0 * scale {
                        found = Some(o);
                        break 'outer;
                    }
                }
            }
        }
        let o = found.ok_or_else(|| OrbitError::Structure(format!("period-{q} sons not found")))?;
        scale = 2.0 * o.points.iter().map(|&p| dist(p, father)).fold(f64::INFINITY, f64::min);
        orbits.push(o);
    }
    Ok(orbits)
}

pub fn build_cascade_seeded(f: &DiskMap, fixed_seed: P2, n: usize) -> Result<CascadeOrbits, OrbitError> {
    assemble_cascade_2d(f, seeded_orbits(f, fixed_seed, n)?)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LapCountTable {
    /// phi[k−1][n] = Φ(k, n)
    pub phi: Vec<Vec<i64>>,
    /// residue[k−1][n] = Φ(k, n+1) − 2Φ(k, n)
    pub residue: Vec<Vec<i64>>,
}

pub fn lap_counts(cascade: &CascadeOrbits, laps: &[Lap]) -> Result<LapCountTable, OrbitError> {
    if cascade.dim != 1 {
        return Err(OrbitError::BadArgs("lap counts need a 1D cascade".into()));
    }
    let mut phi = vec![vec![0i64; cascade.orbits.len()]; laps.len()];
    for (n, o) in cascade.orbits.iter().enumerate() {
        for p in &o.points {
            let x = p[0];
            if laps.iter().skip(1).any(|l| (x - l.lo).abs() < 1e-9) {
                return Err(OrbitError::LapAssignment(x));
            }
            let k = laps
                .iter()
                .position(|l| l.contains(x, l.index == laps.len()))
                .ok_or(OrbitError::LapAssignment(x))?;
            phi[k][n] += 1;
        }
    }
    let residue = phi.iter().map(|row| row.windows(2).map(|w| w[1] - 2 * w[0]).collect()).collect();
    Ok(LapCountTable { phi, residue })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CourcelleReport {
    /// Per lap, (min, max) over all consecutive partial sums of residues.
    pub extremes: Vec<(i64, i64)>,
    pub holds: bool,
}

pub fn courcelle_check(table: &LapCountTable) -> CourcelleReport {
    let extremes: Vec<(i64, i64)> = table
        .residue
        .iter()
        .map(|r| {
            let mut lo = 0;
            let mut hi = 0;
            for p1 in 0..r.len() {
                let mut s = 0;
                for &v in &r[p1..] {
                    s += v;
                    lo = lo.min(s);
                    hi = hi.max(s);
                }
            }
            (lo, hi)
        })
        .collect();
    let holds = extremes.iter().all(|&(lo, hi)| lo >= -2 && hi <= 2);
    CourcelleReport { extremes, holds }
}

/// The vector p2 − p1 as used by signature code.
pub fn diff(p2: P2, p1: P2) -> P2 {
    sub(p2, p1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_fixed_point() {
        let g = logistic(1.0);
        let o = find_orbits_1d(&g, 1);
        let inside: Vec<_> = o.iter().filter(|o| o.points[0][0] > 0.0).collect();
        assert_eq!(inside.len(), 1);
        assert!((inside[0].points[0][0] - 0.6180339887).abs() < 1e-9);
    }

    #[test]
    fn one_period_two_orbit_at_1_3() {
        let g = logistic(1.3);
        assert_eq!(find_orbits_1d(&g, 2).len(), 1);
    }

    #[test]
    fn henon_fixed_point_closed_form() {
        let (a, b) = (1.0, 0.3);
        let f = DiskMap::henon(a, b);
        let o = find_orbit_2d(&f, 1, [0.5, 0.1]).unwrap();
        let p = henon_fixed_point(a, b);
        assert!(dist(o.points[0], p) < 1e-10);
    }

    #[test]
    fn far_seed_fails() {
        let f = DiskMap::henon(1.0, 0.3);
        assert!(matches!(find_orbit_2d(&f, 2, [50.0, 50.0]), Err(OrbitError::NoConvergence { .. })));
    }

    #[test]
    fn converging_to_fixed_point_is_not_primitive() {
        let f = DiskMap::henon(1.0, 0.3);
        let p = henon_fixed_point(1.0, 0.3);
        assert!(matches!(find_orbit_2d(&f, 2, p), Err(OrbitError::Primitivity { .. })));
    }

    #[test]
    fn courcelle_partial_sums() {
        let t = LapCountTable { phi: vec![vec![0, 1, 2, 3]], residue: vec![vec![1, 0, -1]] };
        let r = courcelle_check(&t);
        assert_eq!(r.extremes, vec![(-1, 1)]);
        assert!(r.holds);
        let bad = LapCountTable { phi: vec![], residue: vec![vec![2, 1]] };
        assert!(!courcelle_check(&bad).holds);
    }

    #[test]
    fn flip_bracket_for_logistic_fixed_point() {
        let f = logistic_flips(2).unwrap();
        assert!((f[0] - 0.75).abs() < 1e-10);
        assert!((f[1] - 1.25).abs() < 1e-10);
    }
}
