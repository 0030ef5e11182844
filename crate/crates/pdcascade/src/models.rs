use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::maps::{dist, Affine2, DiskMap, GstMap, IntervalMap, MapError, P2};
use crate::orbits::{
    build_cascade_seeded, cascade_from_seeds_1d, seeded_orbits, find_orbits_1d, jacobian_power, CascadeOrbits, OrbitError,
    PeriodicOrbit,
};
use crate::renorm::{Atom, AtomBody, FixedPoint, RenormError};
use crate::signature::{ExtendedArc, Isotopy};

/// Offset of each child center from its parent center, in parent units.
pub const CHILD_OFFSET: f64 = 0.55;
pub const MAX_RHO: f64 = 0.45;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("radius ratio {0} leaves no gap between siblings (need 0 < rho < 0.45)")]
    Packing(f64),
    #[error("bad arguments: {0}")]
    BadArgs(String),
    #[error("tuning failed: {0}")]
    Tuning(String),
    #[error(transparent)]
    Orbit(#[from] OrbitError),
    #[error(transparent)]
    Renorm(#[from] RenormError),
    #[error(transparent)]
    Map(#[from] MapError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BfyOrientation {
    Preserving,
    Reversing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiskNode {
    pub center: P2,
    pub radius: f64,
    pub parent: Option<usize>,
}

/// Self-similar hierarchy of disks: every disk holds two children at ∓d (local units) of radius ρ.
///
/// f_s acts on the gap of a disk by rotation e^{iπs} about its center, translates the left child
/// rigidly along that rotation and carries the right child back with the inner motion, conjugated
/// by complex conjugation in the reversing case. f_1 cyclically permutes the 2^n level-n disks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidDiskSystem {
    pub depth: usize,
    pub rho: f64,
    pub orientation: BfyOrientation,
    pub offset: f64,
    /// disks[n][j], children of j are 2j (left) and 2j+1 (right).
    pub disks: Vec<Vec<DiskNode>>,
}

impl RigidDiskSystem {
    pub fn new(depth: usize, rho: f64, orientation: BfyOrientation) -> Result<Self, ModelError> {
        if !(rho > 0.0 && rho < MAX_RHO) {
            return Err(ModelError::Packing(rho));
        }
        if !(1..=16).contains(&depth) {
            return Err(ModelError::BadArgs(format!("depth {depth} outside 1..=16")));
        }
        let mut disks = vec![vec![DiskNode { center: [0.0, 0.0], radius: 1.0, parent: None }]];
        for n in 1..=depth {
            let mut level = Vec::with_capacity(1 << n);
            for (j, p) in disks[n - 1].iter().enumerate() {
                for s in [-1.0, 1.0] {
                    level.push(DiskNode {
                        center: [p.center[0] + s * CHILD_OFFSET * p.radius, p.center[1]],
                        radius: p.radius * rho,
                        parent: Some(j),
                    });
                }
            }
            disks.push(level);
        }
        Ok(RigidDiskSystem { depth, rho, orientation, offset: CHILD_OFFSET, disks })
    }

    fn sigma(&self, w: Complex<f64>) -> Complex<f64> {
        match self.orientation {
            BfyOrientation::Preserving => w,
            BfyOrientation::Reversing => w.conj(),
        }
    }

    fn step(&self, s: f64, z: Complex<f64>, k: usize) -> Complex<f64> {
        let rot = Complex::from_polar(1.0, PI * s);
        if k == 0 {
            return rot * z;
        }
        let (d, rho) = (self.offset, self.rho);
        let w0 = (z + d) / rho;
        if w0.norm() < 1.0 {
            return -rot * d + w0 * rho;
        }
        let w1 = (z - d) / rho;
        if w1.norm() < 1.0 {
            let inner = self.step(s, self.sigma(w1), k - 1);
            return rot * d + self.sigma(inner) * rho;
        }
        rot * z
    }

    /// f_s(p) for s in [0, 1]; f_0 = id, f_1 = the system map.
    pub fn time_map(&self, s: f64, p: P2) -> P2 {
        let z = self.step(s, Complex::new(p[0], p[1]), self.depth);
        [z.re, z.im]
    }

    /// Period-2^n orbit of level-n disk centers, starting at the leftmost one.
    pub fn center_orbit(&self, n: usize) -> Result<PeriodicOrbit, ModelError> {
        if n > self.depth {
            return Err(ModelError::BadArgs(format!("level {n} beyond depth {}", self.depth)));
        }
        let q = 1usize << n;
        let mut pts = Vec::with_capacity(q);
        let mut p = self.disks[n][0].center;
        for _ in 0..q {
            pts.push(p);
            p = self.time_map(1.0, p);
        }
        let residual = dist(p, pts[0]);
        if residual > 1e-9 {
            return Err(ModelError::Orbit(OrbitError::NoConvergence { best: residual }));
        }
        Ok(PeriodicOrbit { points: pts, period: q, residual, multipliers: Vec::new() })
    }

    fn disk_of(&self, n: usize, p: P2) -> Option<usize> {
        self.disks[n].iter().position(|d| dist(d.center, p) < d.radius)
    }

    /// Cascade with O_n the level-n centers and atoms the level-n disks.
    pub fn cascade(&self) -> Result<CascadeOrbits, ModelError> {
        let mut orbits = Vec::new();
        let mut fathers = vec![Vec::new()];
        let mut atoms = Vec::new();
        for n in 0..=self.depth {
            let o = self.center_orbit(n)?;
            if n > 0 {
                fathers.push((0..o.points.len()).map(|k| k % (1 << (n - 1))).collect());
                let mut gen = Vec::with_capacity(o.points.len());
                for (i, &p) in o.points.iter().enumerate() {
                    let j = self
                        .disk_of(n, p)
                        .ok_or_else(|| OrbitError::Structure(format!("center {i} of level {n} outside every disk")))?;
                    let d = &self.disks[n][j];
                    gen.push(Atom {
                        generation: n,
                        index: i,
                        body: AtomBody::Disk { center: d.center, radius: d.radius, boundary: Vec::new() },
                    });
                }
                atoms.push(gen);
            }
            orbits.push(o);
        }
        let c = CascadeOrbits { dim: 2, orbits, fathers, atoms };
        c.check_structure()?;
        Ok(c)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "depth": self.depth,
            "rho": self.rho,
            "orientation": self.orientation,
            "disks": self.disks,
            "schedule": {
                "child_offset": self.offset,
                "gap_rotation": "exp(i*pi*s) about the parent center",
                "left_child": "rigid translation to -d*exp(i*pi*s)",
                "right_child": "d*exp(i*pi*s) + rho*sigma(f_s(sigma(w)))",
                "sigma": match self.orientation {
                    BfyOrientation::Preserving => "identity",
                    BfyOrientation::Reversing => "complex conjugation",
                },
            },
        })
    }
}

pub struct Bfy {
    pub system: Arc<RigidDiskSystem>,
    pub arc: Isotopy,
    pub cascade: CascadeOrbits,
}

impl Bfy {
    pub fn map(&self) -> DiskMap {
        DiskMap::Rigid(self.system.clone())
    }

    /// f_s∘f^m: the rigid map is discontinuous across disk boundaries, so f^m∘f_s tears moving points apart.
    pub fn extended_arc(&self) -> ExtendedArc {
        ExtendedArc::equivariant(self.arc.clone())
    }
}

pub fn bfy_build(n: usize, rho: f64, orientation: BfyOrientation) -> Result<Bfy, ModelError> {
    if !(2..=8).contains(&n) {
        return Err(ModelError::BadArgs(format!("BFY depth {n} outside 2..=8")));
    }
    let system = Arc::new(RigidDiskSystem::new(n, rho, orientation)?);
    let cascade = system.cascade()?;
    Ok(Bfy { arc: Isotopy::RigidArc(system.clone()), system, cascade })
}

pub fn logistic(a: f64) -> Result<IntervalMap, ModelError> {
    if !(a.is_finite() && a > 0.0 && a <= 2.0) {
        return Err(ModelError::BadArgs(format!("logistic parameter {a} outside (0, 2]")));
    }
    Ok(IntervalMap::even(vec![1.0, -a])?)
}

pub fn henon(a: f64, b: f64) -> Result<DiskMap, ModelError> {
    if !(a.is_finite() && b.is_finite() && b.abs() < 1.0) {
        return Err(ModelError::BadArgs(format!("henon parameters a = {a}, b = {b} need |b| < 1")));
    }
    Ok(DiskMap::henon(a, b))
}

pub fn gst_map(fp: &FixedPoint, alpha: f64, mu: f64, eps: f64) -> DiskMap {
    DiskMap::Gst(GstMap { alpha, mu, eps, r: fp.r(), v: fp.v() })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GstTuning {
    pub mu_star: f64,
    /// Endpoint of the final bracket on the side where the cascade exists.
    pub mu_cascade: f64,
    pub bracket: (f64, f64),
}

fn gst_fixed_seed(fp: &FixedPoint, eps: f64) -> P2 {
    let x = find_orbits_1d(&fp.as_map(), 1)
        .first()
        .map(|o| o.points[0][0])
        .unwrap_or(0.5);
    [x, eps * x]
}

/// Cascade O_0..O_{levels} of the GST map, seeded along flip directions.
pub fn gst_cascade(fp: &FixedPoint, alpha: f64, mu: f64, eps: f64, levels: usize) -> Result<CascadeOrbits, ModelError> {
    let f = gst_map(fp, alpha, mu, eps);
    Ok(build_cascade_seeded(&f, gst_fixed_seed(fp, eps), levels)?)
}

fn gst_has_cascade(fp: &FixedPoint, alpha: f64, mu: f64, eps: f64, levels: usize) -> bool {
    let f = gst_map(fp, alpha, mu, eps);
    let Ok(orbits) = seeded_orbits(&f, gst_fixed_seed(fp, eps), levels) else {
        return false;
    };
    let last = &orbits[levels];
    let flipped = jacobian_power(&f, last.points[0], last.period)
        .map(|(_, m)| 1.0 + m.trace() + m.determinant() < 0.0)
        .unwrap_or(false);
    // father-to-nearest-son distances
    let gaps: Vec<f64> = orbits
        .windows(2)
        .map(|w| w[1].points.iter().map(|&p| dist(p, w[0].points[0])).fold(f64::INFINITY, f64::min))
        .collect();
    flipped && gaps.windows(2).all(|w| w[1] < w[0])
}

/// Bisects μ on "O_0..O_{depth+1} exist, O_{depth+1} has flipped and father–son gaps contract".
///
/// The boundary is the birth of O_{depth+2}, so the cascade to depth + 1 is well developed at μ*.
pub fn gst_tune(fp: &FixedPoint, alpha: f64, eps: f64, depth: usize, mu_max: f64) -> Result<GstTuning, ModelError> {
    if depth < 1 || depth > 8 || !(mu_max > 0.0) {
        return Err(ModelError::BadArgs(format!("depth {depth}, mu_max {mu_max}")));
    }
    let levels = depth + 1;
    let p = |mu: f64| gst_has_cascade(fp, alpha, mu, eps, levels);
    // far from μ = 0 both ends may fail, one by missing sons and one by landing on unrelated orbits,
    // so the bracket shrinks until its ends disagree
    let mut half = mu_max;
    let (lo, hi, plo) = loop {
        let (plo, phi) = (p(-half), p(half));
        if plo != phi {
            break (-half, half, plo);
        }
        half /= 3.0;
        if half < mu_max * 1e-6 {
            return Err(ModelError::Tuning(format!("cascade behavior {plo} at both ends down to ±{half:e}")));
        }
    };
    let (mut off, mut on) = if plo { (hi, lo) } else { (lo, hi) };
    while (on - off).abs() > 1e-10 {
        let m = 0.5 * (on + off);
        if p(m) {
            on = m;
        } else {
            off = m;
        }
    }
    Ok(GstTuning { mu_star: 0.5 * (on + off), mu_cascade: on, bracket: (off.min(on), off.max(on)) })
}

/// ξ_0..ξ_{depth−1}: ξ_0 = A_1 and ξ_k = A_k⁻¹∘A_{k+1}, A_n carrying the unit disk onto the central generation-n atom.
pub fn renormalization_disks(cascade: &CascadeOrbits, depth: usize) -> Result<Vec<Affine2>, ModelError> {
    if cascade.atoms.len() < depth {
        return Err(ModelError::Orbit(OrbitError::Structure(format!(
            "cascade has {} atom generations, {depth} requested",
            cascade.atoms.len()
        ))));
    }
    let mut abs = Vec::with_capacity(depth);
    for g in &cascade.atoms[..depth] {
        let a = match &g[0].body {
            AtomBody::Disk { center, radius, .. } => Affine2::disk(*center, *radius),
            AtomBody::Interval { lo, hi } => Affine2::disk([0.5 * (lo + hi), 0.0], 0.5 * (hi - lo)),
        };
        abs.push(a);
    }
    let mut out = vec![abs[0]];
    for k in 1..depth {
        out.push(abs[k - 1].inverse()?.compose(&abs[k]));
    }
    Ok(out)
}

#[derive(Deserialize)]
struct FourLapFixture {
    coeffs: Vec<f64>,
    seeds: Vec<f64>,
}

/// Bundled quartic with four laps and a period-doubling cascade to period 8.
pub fn four_lap_example() -> Result<(IntervalMap, CascadeOrbits), ModelError> {
    let fx: FourLapFixture = serde_json::from_str(include_str!("../data/fourlap.json"))
        .map_err(|e| ModelError::BadArgs(e.to_string()))?;
    let g = IntervalMap::polynomial(fx.coeffs)?;
    let c = cascade_from_seeds_1d(&g, &fx.seeds)?;
    Ok((g, c))
}
