use pdcascade::models::{self, ModelError, RigidDiskSystem, MAX_RHO};
use pdcascade::orbits::HenonCascade;
use pdcascade::renorm::{det_decay_check, renormalize_unimodal, solve_fixed_point};
use pdcascade::signature::{alternation_report, compute_signature, ExtendedArc, Isotopy};
use pdcascade::{BfyOrientation, DiskMap};

const DELTA: f64 = 4.669_201_609;

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[test]
fn small_bfy_tree_has_the_requested_shape() {
    let s = RigidDiskSystem::new(3, 0.3, BfyOrientation::Preserving).unwrap();
    assert_eq!(s.disks.len(), 4);
    assert_eq!(s.disks[3].len(), 8);
    for n in 1..=3 {
        for (j, d) in s.disks[n].iter().enumerate() {
            let p = &s.disks[n - 1][d.parent.unwrap()];
            assert_eq!(d.parent, Some(j / 2));
            assert!((d.radius / p.radius - 0.3).abs() < 1e-12);
            assert!(dist(d.center, p.center) + d.radius < p.radius);
        }
        for j in (0..s.disks[n].len()).step_by(2) {
            let (a, b) = (&s.disks[n][j], &s.disks[n][j + 1]);
            assert!(dist(a.center, b.center) > a.radius + b.radius);
        }
    }
}

#[test]
fn moving_disks_stay_disjoint_and_nested() {
    for o in [BfyOrientation::Preserving, BfyOrientation::Reversing] {
        let s = RigidDiskSystem::new(5, 0.3, o).unwrap();
        for k in 0..=256 {
            let t = k as f64 / 256.0;
            let img: Vec<Vec<[f64; 2]>> =
                s.disks.iter().map(|g| g.iter().map(|d| s.time_map(t, d.center)).collect()).collect();
            for n in 1..s.disks.len() {
                for (j, d) in s.disks[n].iter().enumerate() {
                    let p = d.parent.unwrap();
                    assert!(dist(img[n][j], img[n - 1][p]) + d.radius < s.disks[n - 1][p].radius, "t={t} n={n} j={j}");
                    if j % 2 == 0 {
                        assert!(dist(img[n][j], img[n][j + 1]) > 2.0 * d.radius, "t={t} n={n} j={j}");
                    }
                }
            }
        }
    }
}

#[test]
fn bfy_rejects_bad_parameters() {
    assert!(matches!(models::bfy_build(4, MAX_RHO, BfyOrientation::Preserving), Err(ModelError::Packing(_))));
    assert!(matches!(models::bfy_build(4, 0.0, BfyOrientation::Preserving), Err(ModelError::Packing(_))));
    assert!(models::bfy_build(1, 0.3, BfyOrientation::Preserving).is_err());
    assert!(models::bfy_build(9, 0.3, BfyOrientation::Preserving).is_err());
}

#[test]
fn bfy_windings_follow_the_scaling_orientation() {
    for rho in [0.2, 0.3, 0.44] {
        let p = models::bfy_build(8, rho, BfyOrientation::Preserving).unwrap();
        let l = compute_signature(&p.cascade, &p.extended_arc(), 8, 4).unwrap().l;
        assert!(l.iter().all(|&x| x == l[0]) && l[0] == 1, "{l:?}");
        let r = models::bfy_build(8, rho, BfyOrientation::Reversing).unwrap();
        let l = compute_signature(&r.cascade, &r.extended_arc(), 8, 4).unwrap().l;
        assert!(l.iter().enumerate().all(|(n, &x)| x == if n % 2 == 0 { l[0] } else { -l[0] }), "{l:?}");
    }
}

#[test]
fn bfy_cascade_atoms_are_the_disks() {
    let b = models::bfy_build(4, 0.3, BfyOrientation::Reversing).unwrap();
    b.cascade.check_structure().unwrap();
    for (g, atoms) in b.cascade.atoms.iter().enumerate() {
        assert_eq!(atoms.len(), 1 << (g + 1));
        for a in atoms {
            assert!((a.diameter() - 2.0 * 0.3f64.powi(g as i32 + 1)).abs() < 1e-12);
        }
    }
    let json = b.system.to_json();
    assert!(json.get("disks").is_some() && json.get("rho").is_some());
}

#[test]
fn family_constructors_validate() {
    assert!(models::logistic(1.4).is_ok());
    assert!(models::logistic(2.5).is_err());
    assert!(models::logistic(0.0).is_err());
    assert!(models::henon(1.0, 0.3).is_ok());
    assert!(models::henon(1.0, 1.0).is_err());
}

#[test]
fn logistic_at_accumulation_renormalizes_six_times() {
    let acc = pdcascade::orbits::accumulation_parameter(pdcascade::orbits::Family::Logistic, 8, DELTA).unwrap();
    let mut g = models::logistic(acc.a_inf).unwrap();
    for _ in 0..6 {
        g = renormalize_unimodal(&g).unwrap().map;
    }
}

#[test]
fn gst_map_degenerates_to_the_fixed_point() {
    let fp = solve_fixed_point(20, 1e-10).unwrap();
    let f = models::gst_map(&fp, 0.01, 0.0, 0.0);
    let p = f.eval([0.3, 0.2]).unwrap();
    assert_eq!(p[1], 0.0);
    let phi = fp.as_map();
    for k in 0..=20 {
        let x = -1.0 + 0.1 * k as f64;
        let q = f.eval([x, 0.0]).unwrap();
        assert!((q[0] - phi.apply(x)).abs() <= fp.residual.max(1e-14));
    }
}

#[test]
fn gst_map_without_eps_is_singular() {
    let fp = solve_fixed_point(20, 1e-10).unwrap();
    let f = models::gst_map(&fp, 0.01, 1e-4, 0.0);
    for i in 0..=10 {
        for j in 0..=10 {
            let p = [-0.9 + 0.18 * i as f64, -0.5 + 0.1 * j as f64];
            assert!(f.jacobian_det(p).unwrap().abs() < 1e-12);
        }
    }
    let g = models::gst_map(&fp, 0.01, 1e-4, 1e-3);
    assert!(g.jacobian_det([0.3, 0.1]).unwrap().abs() > 1e-6);
}

#[test]
fn gst_tuning_finds_a_cascade_that_alternates() {
    let fp = solve_fixed_point(20, 1e-10).unwrap();
    let t = models::gst_tune(&fp, 0.01, 1e-3, 6, 0.02).unwrap();
    assert!((t.bracket.1 - t.bracket.0) <= 1e-10);
    // regression constant from the first run
    assert!((t.mu_star - 4.2459e-5).abs() < 1e-8, "{}", t.mu_star);
    let c = models::gst_cascade(&fp, 0.01, t.mu_cascade, 1e-3, 7).unwrap();
    c.check_structure().unwrap();
    assert!(c.orbits.iter().all(|o| o.residual < 1e-9));
    let arc = ExtendedArc::equivariant(Isotopy::StraightLine(models::gst_map(&fp, 0.01, t.mu_cascade, 1e-3)));
    let s = compute_signature(&c, &arc, 6, 4).unwrap();
    assert_eq!(alternation_report(&s, 4).unwrap().verdict, "alternates", "{:?}", s.l);
}

#[test]
fn gst_tuning_needs_a_bracket() {
    let fp = solve_fixed_point(20, 1e-10).unwrap();
    assert!(matches!(models::gst_tune(&fp, 0.01, 1e-3, 6, 1e-12), Err(ModelError::Tuning(_))));
    assert!(models::gst_tune(&fp, 0.01, 1e-3, 0, 0.02).is_err());
}

#[test]
fn henon_renormalization_disks_give_decaying_determinants() {
    let cont = HenonCascade::locate(0.3, 8).unwrap();
    let n = cont.flips.len();
    let a = cont.flips[n - 1] + (cont.flips[n - 1] - cont.flips[n - 2]) / (DELTA - 1.0);
    let c = pdcascade::orbits::build_cascade_henon(&cont, a, 4).unwrap();
    let xi = models::renormalization_disks(&c, 4).unwrap();
    assert_eq!(xi.len(), 4);
    let d = det_decay_check(&DiskMap::henon(a, 0.3), &xi, 4).unwrap();
    assert!(d.windows(2).all(|w| w[1] < w[0]), "{d:?}");
    // |det D f^{2^n}| = b^{2^n} since ξ_n cancels in the determinant
    for (k, v) in d.iter().enumerate() {
        let exact = 0.3f64.powi(1 << (k + 1));
        assert!((v - exact).abs() < 1e-3 * exact.max(1e-6) + 1e-9, "n={} {v} vs {exact}", k + 1);
    }
    assert!(models::renormalization_disks(&c, 9).is_err());
}
