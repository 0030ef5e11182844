//! Acceptance criteria 1–11. Each criterion prints one PASS/FAIL line; the binary exits non-zero if any fails.

use num_rational::Ratio;
use pdcascade::models::{self, Bfy};
use pdcascade::orbits::{self, Family};
use pdcascade::renorm;
use pdcascade::signature::{self, ArcOrder, ExtendedArc, Isotopy};
use pdcascade::{Affine2, BfyOrientation, DiskMap};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::f64::consts::{PI, TAU};
use std::time::{Duration, Instant};

const DELTA_REF: f64 = 4.6692;
const JOBS: usize = 4;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let t = Instant::now();
    let mut o = f();
    let el = t.elapsed();
    o.detail = format!("{} [{:.2?}, limit {:?}]", o.detail, el, limit);
    o.pass &= el < limit;
    o
}

fn c1_feigenbaum() -> Outcome {
    timed(Duration::from_secs(60), || match renorm::solve_fixed_point(20, 1e-10) {
        Ok(fp) => {
            let err = (fp.delta - DELTA_REF).abs();
            outcome(err < 1e-3, format!("delta = {:.10}, |delta - 4.6692| = {err:.2e} (< 1e-3)", fp.delta))
        }
        Err(e) => outcome(false, format!("solve_fixed_point: {e}")),
    })
}

fn c2_cross_route() -> Outcome {
    timed(Duration::from_secs(120), || {
        let fp = match renorm::solve_fixed_point(20, 1e-10) {
            Ok(fp) => fp,
            Err(e) => return outcome(false, format!("solve_fixed_point: {e}")),
        };
        match orbits::accumulation_parameter(Family::Logistic, 8, fp.delta) {
            Ok(acc) => {
                let ratio = *acc.ratios.last().expect("N = 8 gives ratios");
                let err = (ratio - fp.delta).abs();
                outcome(err < 5e-2, format!("ratio_8 = {ratio:.6}, operator delta = {:.6}, gap {err:.2e} (< 5e-2)", fp.delta))
            }
            Err(e) => outcome(false, format!("accumulation_parameter: {e}")),
        }
    })
}

fn bfy_signature(orientation: BfyOrientation) -> Result<(Bfy, signature::Signature), String> {
    let bfy = models::bfy_build(6, 0.3, orientation).map_err(|e| e.to_string())?;
    let sig = signature::compute_signature(&bfy.cascade, &bfy.extended_arc(), 6, JOBS).map_err(|e| e.to_string())?;
    Ok((bfy, sig))
}

fn c3_bfy() -> Outcome {
    match bfy_signature(BfyOrientation::Preserving) {
        Ok((_, sig)) => {
            let want: Vec<Ratio<i64>> = (1..=6).map(|n| Ratio::new(1, 1 << n)).collect();
            let verdict = signature::alternation_report(&sig, 4).map(|r| r.verdict).unwrap_or_else(|e| e.to_string());
            let pass = sig.lambda == want && verdict == "monotone-decreasing";
            outcome(pass, format!("lambda = {:?}, verdict(N0=4) = {verdict}", fmt_lambda(&sig.lambda)))
        }
        Err(e) => outcome(false, e),
    }
}

fn c4_pd_model() -> Outcome {
    match bfy_signature(BfyOrientation::Reversing) {
        Ok((_, sig)) => {
            let want: Vec<Ratio<i64>> =
                (1..=6).map(|n| Ratio::new(if n % 2 == 1 { 1 } else { -1 }, 1 << n)).collect();
            let verdicts: Vec<String> = (1..=4)
                .map(|n0| signature::alternation_report(&sig, n0).map(|r| r.verdict).unwrap_or_else(|e| e.to_string()))
                .collect();
            let pass = sig.lambda == want && verdicts.iter().all(|v| v == "alternates");
            outcome(pass, format!("lambda = {:?}, verdicts(N0=1..4) = {verdicts:?}", fmt_lambda(&sig.lambda)))
        }
        Err(e) => outcome(false, e),
    }
}

fn henon_setup(b: f64, depth: usize) -> Result<(orbits::HenonCascade, f64), String> {
    let cont = orbits::HenonCascade::locate(b, 8.max(depth + 1)).map_err(|e| e.to_string())?;
    let fp = renorm::solve_fixed_point(20, 1e-10).map_err(|e| e.to_string())?;
    let n = cont.flips.len();
    let a_inf = cont.flips[n - 1] + (cont.flips[n - 1] - cont.flips[n - 2]) / (fp.delta - 1.0);
    Ok((cont, a_inf))
}

fn c5_henon() -> Outcome {
    timed(Duration::from_secs(600), || {
        let (cont, a) = match henon_setup(0.3, 6) {
            Ok(v) => v,
            Err(e) => return outcome(false, e),
        };
        let cascade = match orbits::build_cascade_henon(&cont, a, 6) {
            Ok(c) => c,
            Err(e) => return outcome(false, format!("build_cascade_henon: {e}")),
        };
        let iso = Isotopy::StraightLine(DiskMap::henon(a, 0.3));
        let standard = match signature::compute_signature(&cascade, &ExtendedArc::new(iso.clone()), 6, JOBS) {
            Ok(s) => format!("l = {:?}", s.l),
            Err(e) => format!("error: {e}"),
        };
        match signature::compute_signature(&cascade, &ExtendedArc::equivariant(iso), 6, JOBS) {
            Ok(sig) => {
                let verdicts: Vec<String> = (1..=4)
                    .map(|n0| signature::alternation_report(&sig, n0).map(|r| r.verdict).unwrap_or_else(|e| e.to_string()))
                    .collect();
                let pass = verdicts.iter().all(|v| v == "alternates");
                outcome(
                    pass,
                    format!(
                        "a_inf = {a:.10}, l = {:?}, verdicts(N0=1..4) = {verdicts:?}; f^m∘f_s diagnostic: {standard}",
                        sig.l
                    ),
                )
            }
            Err(e) => outcome(false, format!("compute_signature: {e}; f^m∘f_s diagnostic: {standard}")),
        }
    })
}

fn c6_courcelle() -> Outcome {
    let logistic = (|| -> Result<(bool, Vec<(i64, i64)>), String> {
        let acc = orbits::accumulation_parameter(Family::Logistic, 8, 4.669_201_609).map_err(|e| e.to_string())?;
        let g = models::logistic(acc.a_inf).map_err(|e| e.to_string())?;
        let c = orbits::build_cascade_1d(&g, 8).map_err(|e| e.to_string())?;
        let laps = g.laps().map_err(|e| e.to_string())?;
        let t = orbits::lap_counts(&c, &laps).map_err(|e| e.to_string())?;
        let rep = orbits::courcelle_check(&t);
        Ok((rep.holds && laps.len() == 2, rep.extremes))
    })();
    let figure = (|| -> Result<Vec<i64>, String> {
        let (g, c) = models::four_lap_example().map_err(|e| e.to_string())?;
        let laps = g.laps().map_err(|e| e.to_string())?;
        let t = orbits::lap_counts(&c, &laps).map_err(|e| e.to_string())?;
        Ok(t.phi.iter().map(|row| row[3]).collect())
    })();
    match (logistic, figure) {
        (Ok((holds, ext)), Ok(phi3)) => {
            let pass = holds && phi3 == [1, 2, 2, 3];
            outcome(
                pass,
                format!("logistic partial-sum extremes {ext:?} (within [-2, 2]: {holds}); four-lap Phi(k,3) = {phi3:?}, required [1, 2, 2, 3]"),
            )
        }
        (a, b) => outcome(false, format!("logistic: {:?}; four-lap: {:?}", a.err(), b.err())),
    }
}

fn random_affine(rng: &mut StdRng, reversing: bool) -> Affine2 {
    let theta = rng.gen::<f64>() * TAU;
    let s = rng.gen_range(0.5..2.0);
    let (sn, cs) = theta.sin_cos();
    let m = if reversing { [[s * cs, s * sn], [s * sn, -s * cs]] } else { [[s * cs, -s * sn], [s * sn, s * cs]] };
    Affine2::new(m, [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)])
}

fn c7_sign_rules() -> Outcome {
    let bfy = match models::bfy_build(5, 0.3, BfyOrientation::Preserving) {
        Ok(b) => b,
        Err(e) => return outcome(false, e.to_string()),
    };
    let mut rng = StdRng::seed_from_u64(7);
    let mut failures = Vec::new();
    let mut seen = Vec::new();
    for reversing in [false, true] {
        for _ in 0..5 {
            let h = random_affine(&mut rng, reversing);
            match signature::conjugacy_sign_check(&bfy.arc, ArcOrder::Equivariant, &h, &bfy.cascade, 5, JOBS) {
                Ok(r) if r.holds => seen.push(format!("{}{:?}", if r.det_sign > 0 { "+" } else { "-" }, r.l_g)),
                Ok(r) => failures.push(format!("l_f {:?} l_g {:?} sign {}", r.l_f, r.l_g, r.det_sign)),
                Err(e) => failures.push(e.to_string()),
            }
        }
    }
    outcome(failures.is_empty(), format!("10 conjugacies, l_g: {seen:?}; failures: {failures:?}"))
}

fn c8_congruence() -> Outcome {
    let bfy = match models::bfy_build(5, 0.3, BfyOrientation::Preserving) {
        Ok(b) => b,
        Err(e) => return outcome(false, e.to_string()),
    };
    let mut ks = Vec::new();
    let mut ok = true;
    let base = signature::compute_signature(&bfy.cascade, &bfy.extended_arc(), 5, JOBS);
    for k in [1i64, -2] {
        let arc = ExtendedArc::equivariant(Isotopy::spun(k, bfy.arc.clone()));
        match (&base, signature::compute_signature(&bfy.cascade, &arc, 5, JOBS)) {
            (Ok(b), Ok(s)) => {
                let d: Vec<Ratio<i64>> = s.l.iter().zip(&b.l).zip(&b.q).map(|((x, y), q)| Ratio::new(x - y, *q)).collect();
                ok &= d.iter().all(|&r| r == d[0]) && d[0].is_integer() && d[0] == Ratio::from_integer(k);
                ks.push(format!("spin {k}: l' = {:?}, (l' - l)/q = {:?}", s.l, fmt_lambda(&d)));
            }
            (b, s) => {
                ok = false;
                ks.push(format!("{:?} {:?}", b.as_ref().err(), s.err()));
            }
        }
    }
    outcome(ok, format!("l = {:?}; {}", base.map(|b| b.l).unwrap_or_default(), ks.join("; ")))
}

fn c9_geometry() -> Outcome {
    let r = (|| -> Result<renorm::GeometryReport, String> {
        let fp = renorm::solve_fixed_point(20, 1e-10).map_err(|e| e.to_string())?;
        let tree = renorm::atoms_1d(&fp.as_map(), 6).map_err(|e| e.to_string())?;
        if tree.generations.len() < 6 {
            return Err(format!("only {} generations", tree.generations.len()));
        }
        renorm::geometry_report(&tree.generations).map_err(|e| e.to_string())
    })();
    match r {
        Ok(rep) => {
            let d = &rep.diameter_max;
            let rates: Vec<f64> = d.windows(2).map(|w| w[1] / w[0]).collect();
            let b = rep.b_hat.unwrap_or(1.0);
            let decay = rates.iter().all(|&r| r <= b) && b < 1.0;
            outcome(
                rep.bounded() && decay,
                format!("a_hat = {:?}, b_hat = {:?}, diameter ratios {:?}", rep.a_hat, rep.b_hat, round(&rates)),
            )
        }
        Err(e) => outcome(false, e),
    }
}

fn c10_det_decay() -> Outcome {
    let r = (|| -> Result<Vec<f64>, String> {
        let (cont, a) = henon_setup(0.3, 5)?;
        let c = orbits::build_cascade_henon(&cont, a, 4).map_err(|e| e.to_string())?;
        let xi = models::renormalization_disks(&c, 4).map_err(|e| e.to_string())?;
        renorm::det_decay_check(&DiskMap::henon(a, 0.3), &xi, 4).map_err(|e| e.to_string())
    })();
    match r {
        Ok(d) => {
            let pass = d.windows(2).all(|w| w[1] < w[0]) && d.iter().all(|&x| x > 0.0) && d[3] < 1e-3;
            outcome(pass, format!("max |det D R_n|, n = 1..4: {:?}", d.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>()))
        }
        Err(e) => outcome(false, e),
    }
}

fn c11_properties() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let mut check = |name: &str, pass: bool| {
        ok &= pass;
        notes.push(format!("{name}: {}", if pass { "ok" } else { "FAILED" }));
    };

    // winding closure and refinement stability on every BFY father/son pair
    let bfy = models::bfy_build(5, 0.3, BfyOrientation::Reversing).expect("BFY build");
    let arc = bfy.extended_arc();
    let mut closure = true;
    let mut stable = true;
    for n in 1..=5 {
        for j in 0..bfy.cascade.orbits[n - 1].points.len() {
            let (xa, xb) = (bfy.cascade.orbits[n - 1].points[j], bfy.cascade.orbits[n].points[j]);
            let coarse = signature::winding_count(&arc, xa, xb, 1 << n, signature::CLOSURE_TOL);
            let fine = signature::winding_count_with(&arc, xa, xb, 1 << n, signature::CLOSURE_TOL, PI / 4.0);
            closure &= coarse.is_ok();
            stable &= coarse.is_ok() && coarse == fine;
        }
    }
    check("winding closure", closure);
    check("refinement stability", stable);

    // orbit residual and primitivity on the logistic cascade
    let acc = orbits::accumulation_parameter(Family::Logistic, 8, 4.669_201_609).expect("accumulation");
    let g = models::logistic(acc.a_inf).expect("logistic");
    let c = orbits::build_cascade_1d(&g, 8).expect("logistic cascade");
    let mut resid = true;
    let mut prim = true;
    for o in &c.orbits {
        for p in &o.points {
            resid &= (g.iterate(p[0], o.period).expect("in domain") - p[0]).abs() < 1e-9;
            for d in (1..o.period).filter(|d| o.period % d == 0) {
                prim &= (g.iterate(p[0], d).expect("in domain") - p[0]).abs() > 1e-6;
            }
        }
        resid &= o.residual < 1e-9;
    }
    check("orbit residual", resid);
    check("primitivity", prim);

    // cascade structure: 1D logistic, BFY disks and the Hénon cascade
    let henon = henon_setup(0.3, 6).and_then(|(cont, a)| orbits::build_cascade_henon(&cont, a, 6).map_err(|e| e.to_string()));
    check(
        "cascade structure",
        c.check_structure().is_ok()
            && bfy.cascade.check_structure().is_ok()
            && henon.map(|h| h.check_structure().is_ok()).unwrap_or(false),
    );

    // CLI determinism across runs and worker counts
    check("cli determinism", cli_deterministic());
    outcome(ok, notes.join(", "))
}

fn cli_deterministic() -> bool {
    let dirs: Vec<tempfile::TempDir> = (0..3).map(|_| tempfile::tempdir().expect("tempdir")).collect();
    let exe = env!("CARGO_BIN_EXE_pdcascade");
    let mut outputs = Vec::new();
    for (d, jobs) in dirs.iter().zip(["1", "4", "4"]) {
        let st = std::process::Command::new(exe)
            .args(["signature", "--model", "pd", "--depth", "6", "--jobs", jobs, "--out"])
            .arg(d.path())
            .status();
        if !matches!(st, Ok(s) if s.success()) {
            return false;
        }
        let read = |f: &str| std::fs::read(d.path().join(f)).unwrap_or_default();
        outputs.push((read("signature.csv"), read("alternation.json")));
    }
    !outputs[0].0.is_empty() && outputs.windows(2).all(|w| w[0] == w[1])
}

fn fmt_lambda(l: &[Ratio<i64>]) -> Vec<String> {
    l.iter().map(|r| r.to_string()).collect()
}

fn round(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1e4).round() / 1e4).collect()
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("1 feigenbaum constant", c1_feigenbaum),
        ("2 cross-route delta", c2_cross_route),
        ("3 BFY signature", c3_bfy),
        ("4 period-doubling model signature", c4_pd_model),
        ("5 Henon alternation", c5_henon),
        ("6 Courcelle bound and four-lap figure", c6_courcelle),
        ("7 conjugacy sign rules", c7_sign_rules),
        ("8 isotopy-change congruence", c8_congruence),
        ("9 bounded geometry", c9_geometry),
        ("10 determinant decay", c10_det_decay),
        ("11 property suite", c11_properties),
    ];
    let mut failed = Vec::new();
    for (name, f) in criteria {
        let o = f();
        println!("criterion {name}: {} | {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(name);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
