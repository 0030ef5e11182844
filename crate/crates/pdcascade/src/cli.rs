use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::maps::{DiskMap, P2};
use crate::models::{self, BfyOrientation};
use crate::orbits::{
    accumulation_parameter, build_cascade_1d, build_cascade_henon, courcelle_check, lap_counts, Family, HenonCascade,
};
use crate::renorm::{atoms_1d, det_decay_check, geometry_report, solve_fixed_point, FixedPoint};
use crate::signature::{alternation_report, ArcOrder, asymptotic_rotation_estimate, compute_signature, ExtendedArc, Isotopy, Signature};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "pdcascade", about = "Period-doubling cascades, renormalization and orbit signatures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,
    /// JSON experiment config; unknown keys are rejected
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Solve the renormalization fixed point and its leading eigenvalue
    Feigenbaum(Params),
    /// Period-doubling cascade of the logistic or Hénon family
    Cascade(Params),
    /// Winding signature and alternation verdict of a model cascade
    Signature(Params),
    /// Build the rigid-disk system and dump its tree
    Bfy(Params),
    /// Tune the GST map onto its cascade
    Gst(Params),
    /// Lap counts and the residue partial-sum bound
    Courcelle(Params),
    /// Bounded-geometry report for fixed-point atoms
    Geometry(Params),
    /// Determinant decay of renormalized Hénon iterates
    Detdecay(Params),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CommandName {
    Feigenbaum,
    Cascade,
    Signature,
    Bfy,
    Gst,
    Courcelle,
    Geometry,
    Detdecay,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Logistic,
    Henon,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    Bfy,
    Pd,
    Henon,
    Gst,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ExampleName {
    Logistic,
    FourLap,
}

/// Flags shared by all commands; the same keys make up the JSON config.
#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[arg(skip)]
    #[serde(default)]
    pub command: Option<CommandName>,
    #[arg(skip)]
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[arg(skip)]
    #[serde(default)]
    pub jobs: Option<usize>,
    #[arg(long)]
    #[serde(default)]
    pub degree: Option<usize>,
    #[arg(long)]
    #[serde(default)]
    pub tol: Option<f64>,
    #[arg(long, value_enum)]
    #[serde(default)]
    pub family: Option<FamilyName>,
    #[arg(long, value_enum)]
    #[serde(default)]
    pub model: Option<ModelName>,
    #[arg(long, value_enum)]
    #[serde(default)]
    pub example: Option<ExampleName>,
    #[arg(long, allow_hyphen_values = true)]
    #[serde(default)]
    pub a: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    #[serde(default)]
    pub b: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    pub depth: Option<usize>,
    #[arg(long)]
    #[serde(default)]
    pub flips: Option<usize>,
    #[arg(long)]
    #[serde(default)]
    pub rho: Option<f64>,
    #[arg(long, value_enum)]
    #[serde(default)]
    pub orientation: Option<BfyOrientation>,
    #[arg(long)]
    #[serde(default)]
    pub n0: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    #[serde(default)]
    pub alpha: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    #[serde(default)]
    pub eps: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    pub mu_max: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    #[serde(default)]
    pub arc_order: Option<ArcOrder>,
}

impl ValueEnum for ArcOrder {
    fn value_variants<'a>() -> &'a [Self] {
        &[ArcOrder::Standard, ArcOrder::Equivariant]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(match self {
            ArcOrder::Standard => "standard",
            ArcOrder::Equivariant => "equivariant",
        }))
    }
}

impl ValueEnum for BfyOrientation {
    fn value_variants<'a>() -> &'a [Self] {
        &[BfyOrientation::Preserving, BfyOrientation::Reversing]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(match self {
            BfyOrientation::Preserving => "preserving",
            BfyOrientation::Reversing => "reversing",
        }))
    }
}

#[derive(Debug)]
enum Failure {
    Validation(String),
    Numerical { stage: &'static str, message: String },
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Validation(msg.into())
}

fn numerical<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> Failure {
    move |e| Failure::Numerical { stage, message: e.to_string() }
}

/// Validated run description.
#[derive(Debug, Clone)]
struct Plan {
    command: CommandName,
    p: Params,
    out: PathBuf,
    jobs: usize,
}

fn command_of(c: &Command) -> (CommandName, Params) {
    match c {
        Command::Feigenbaum(p) => (CommandName::Feigenbaum, p.clone()),
        Command::Cascade(p) => (CommandName::Cascade, p.clone()),
        Command::Signature(p) => (CommandName::Signature, p.clone()),
        Command::Bfy(p) => (CommandName::Bfy, p.clone()),
        Command::Gst(p) => (CommandName::Gst, p.clone()),
        Command::Courcelle(p) => (CommandName::Courcelle, p.clone()),
        Command::Geometry(p) => (CommandName::Geometry, p.clone()),
        Command::Detdecay(p) => (CommandName::Detdecay, p.clone()),
    }
}

fn merge(base: Params, over: Params) -> Params {
    macro_rules! pick {
        ($($f:ident),*) => { Params { $($f: over.$f.or(base.$f)),* } };
    }
    pick!(command, out, jobs, degree, tol, family, model, example, a, b, depth, flips, rho, orientation, n0, alpha, eps, mu_max, seed, arc_order)
}

fn in_range<T: PartialOrd + std::fmt::Display + Copy>(name: &str, v: T, lo: T, hi: T) -> Result<T, Failure> {
    if v < lo || v > hi {
        return Err(invalid(format!("{name} = {v} outside [{lo}, {hi}]")));
    }
    Ok(v)
}

fn plan(cli: &Cli) -> Result<Plan, Failure> {
    let from_file = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<Params>(&text).map_err(|e| invalid(format!("config: {e}")))?
        }
        None => Params::default(),
    };
    let (command, flags) = match &cli.command {
        Some(c) => {
            let (name, p) = command_of(c);
            if from_file.command.is_some_and(|f| f != name) {
                return Err(invalid("config command differs from the subcommand"));
            }
            (name, p)
        }
        None => (from_file.command.ok_or_else(|| invalid("no command given"))?, Params::default()),
    };
    let mut p = merge(from_file, flags);
    p.command = Some(command);
    let out = cli.out.clone().or(p.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let jobs = cli.jobs.or(p.jobs).unwrap_or(1);
    in_range("jobs", jobs, 1, 256)?;
    for (name, v) in [("tol", p.tol), ("rho", p.rho), ("mu_max", p.mu_max)] {
        if let Some(v) = v {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
    }
    for (name, v) in [("a", p.a), ("b", p.b), ("alpha", p.alpha), ("eps", p.eps)] {
        if v.is_some_and(|v| !v.is_finite()) {
            return Err(invalid(format!("{name} must be finite")));
        }
    }
    if let Some(b) = p.b {
        in_range("b", b, -0.999, 0.999)?;
    }
    if let Some(d) = p.degree {
        in_range("degree", d, 10, 64)?;
        if d % 2 == 1 {
            return Err(invalid("degree must be even"));
        }
    }
    if let Some(t) = p.tol {
        in_range("tol", t, 1e-12, 1.0)?;
    }
    let depth_cap = match command {
        CommandName::Cascade if p.family == Some(FamilyName::Logistic) || p.family.is_none() => 12,
        CommandName::Courcelle => 12,
        CommandName::Feigenbaum => usize::MAX,
        _ => 8,
    };
    if let Some(d) = p.depth {
        in_range("depth", d, 1, depth_cap)?;
    }
    if let Some(f) = p.flips {
        in_range("flips", f, 2, 10)?;
    }
    if let Some(r) = p.rho {
        in_range("rho", r, f64::MIN_POSITIVE, 0.449_999)?;
    }
    Ok(Plan { command, p, out, jobs })
}

struct Outputs {
    files: Vec<(String, Vec<u8>)>,
    summary: Value,
}

impl Outputs {
    fn new() -> Self {
        Outputs { files: Vec::new(), summary: json!({}) }
    }

    fn json(&mut self, name: &str, v: &impl Serialize) {
        let mut s = serde_json::to_vec_pretty(v).expect("serializable output");
        s.push(b'\n');
        self.files.push((name.to_string(), s));
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(header).expect("in-memory csv");
        for r in rows {
            w.write_record(&r).expect("in-memory csv");
        }
        self.files.push((name.to_string(), w.into_inner().expect("in-memory csv")));
    }
}

fn fixed_point(p: &Params) -> Result<FixedPoint, Failure> {
    solve_fixed_point(p.degree.unwrap_or(20), p.tol.unwrap_or(1e-10)).map_err(numerical("solve_fixed_point"))
}

fn henon_setup(p: &Params, depth: usize) -> Result<(HenonCascade, f64, f64), Failure> {
    let b = p.b.unwrap_or(0.3);
    let flips = p.flips.unwrap_or(8).max(depth + 1);
    let cont = HenonCascade::locate(b, flips).map_err(numerical("accumulation_parameter"))?;
    let n = cont.flips.len();
    let delta = 4.669_201_609;
    let a_inf = cont.flips[n - 1] + (cont.flips[n - 1] - cont.flips[n - 2]) / (delta - 1.0);
    Ok((cont, b, p.a.unwrap_or(a_inf)))
}

fn signature_rows(sig: &Signature) -> Vec<Vec<String>> {
    let k = sig.normalization_shift.map(|k| k.to_string()).unwrap_or_default();
    (0..sig.len())
        .map(|i| {
            vec![
                (i + 1).to_string(),
                sig.q[i].to_string(),
                sig.l[i].to_string(),
                sig.lambda[i].numer().to_string(),
                sig.lambda[i].denom().to_string(),
                k.clone(),
            ]
        })
        .collect()
}

fn sample_disk(seed: u64, count: usize, radius: f64) -> Vec<P2> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let r = radius * rng.gen::<f64>().sqrt();
            let t = rng.gen::<f64>() * std::f64::consts::TAU;
            [r * t.cos(), r * t.sin()]
        })
        .collect()
}

fn run_signature(plan: &Plan, o: &mut Outputs) -> Result<(), Failure> {
    let p = &plan.p;
    let depth = p.depth.unwrap_or(6);
    let rho = p.rho.unwrap_or(0.3);
    let model = p.model.unwrap_or(ModelName::Bfy);
    let (cascade, iso, extra) = match model {
        ModelName::Bfy | ModelName::Pd => {
            let orient = match (model, p.orientation) {
                (_, Some(o)) => o,
                (ModelName::Pd, None) => BfyOrientation::Reversing,
                _ => BfyOrientation::Preserving,
            };
            let bfy = models::bfy_build(depth.max(2), rho, orient).map_err(numerical("bfy_build"))?;
            (bfy.cascade, bfy.arc, json!({ "rho": rho, "orientation": orient }))
        }
        ModelName::Henon => {
            let (cont, b, a) = henon_setup(p, depth)?;
            let c = build_cascade_henon(&cont, a, depth).map_err(numerical("build_cascade"))?;
            (c, Isotopy::StraightLine(DiskMap::henon(a, b)), json!({ "a": a, "b": b }))
        }
        ModelName::Gst => {
            let fp = fixed_point(p)?;
            let (alpha, eps) = (p.alpha.unwrap_or(0.01), p.eps.unwrap_or(1e-3));
            let t = models::gst_tune(&fp, alpha, eps, depth, p.mu_max.unwrap_or(0.02)).map_err(numerical("gst_tune"))?;
            let c = models::gst_cascade(&fp, alpha, t.mu_cascade, eps, depth + 1).map_err(numerical("build_cascade"))?;
            let f = models::gst_map(&fp, alpha, t.mu_cascade, eps);
            (c, Isotopy::StraightLine(f), json!({ "alpha": alpha, "eps": eps, "mu": t.mu_cascade }))
        }
    };
    let radius = if matches!(model, ModelName::Bfy | ModelName::Pd) { 0.99 } else { 0.5 };
    let endpoint = iso
        .endpoint_error(&sample_disk(p.seed.unwrap_or(0), 10, radius))
        .map_err(numerical("isotopy_endpoints"))?;
    if endpoint > 1e-10 {
        return Err(Failure::Numerical { stage: "isotopy_endpoints", message: format!("endpoint error {endpoint:e}") });
    }
    let order = p.arc_order.unwrap_or(ArcOrder::Equivariant);
    let arc = ExtendedArc::with_order(iso, order);
    let sig = compute_signature(&cascade, &arc, depth, plan.jobs).map_err(numerical("compute_signature"))?;
    o.csv("signature.csv", &["n", "q_n", "l_n", "lambda_num", "lambda_den", "shift_k"], signature_rows(&sig));
    let n0 = p.n0.unwrap_or(depth.saturating_sub(2).max(1));
    let mut verdicts = json!({ "model": model, "params": extra, "arc_order": order, "l": sig.l });
    match alternation_report(&sig, n0) {
        Ok(rep) => {
            o.json("alternation.json", &json!({ "N0": rep.n0_bound, "n_0": rep.n_0, "n_1": rep.n_1, "verdict": rep.verdict }));
            verdicts["alternation"] = json!(rep.verdict);
        }
        Err(e) => verdicts["alternation"] = json!(e.to_string()),
    }
    if let Ok(est) = asymptotic_rotation_estimate(&sig) {
        verdicts["omega_estimate"] = json!(est.omega_estimate.to_string());
        verdicts["cauchy_tail"] = json!(est.cauchy_tail.to_string());
    }
    o.summary = verdicts;
    Ok(())
}

fn run_plan(plan: &Plan, o: &mut Outputs) -> Result<(), Failure> {
    let p = &plan.p;
    match plan.command {
        CommandName::Feigenbaum => {
            let fp = fixed_point(p)?;
            o.json("fixedpoint.json", &fp);
            o.summary = json!({ "delta": fp.delta, "lambda": fp.lambda, "residual": fp.residual });
        }
        CommandName::Cascade => {
            let depth = p.depth.unwrap_or(6);
            match p.family.unwrap_or(FamilyName::Logistic) {
                FamilyName::Logistic => {
                    let flips = p.flips.unwrap_or(8);
                    let acc = accumulation_parameter(Family::Logistic, flips, 4.669_201_609)
                        .map_err(numerical("accumulation_parameter"))?;
                    let a = p.a.unwrap_or(acc.a_inf);
                    let g = models::logistic(a).map_err(|e| invalid(e.to_string()))?;
                    let c = build_cascade_1d(&g, depth).map_err(numerical("build_cascade"))?;
                    o.json("cascade.json", &json!({ "family": "logistic", "a": a, "accumulation": acc, "cascade": c }));
                    o.summary = json!({ "a": a, "a_inf": acc.a_inf, "ratios": acc.ratios });
                }
                FamilyName::Henon => {
                    let (cont, b, a) = henon_setup(p, depth)?;
                    let c = build_cascade_henon(&cont, a, depth).map_err(numerical("build_cascade"))?;
                    o.json("cascade.json", &json!({ "family": "henon", "a": a, "b": b, "flips": cont.flips, "cascade": c }));
                    o.summary = json!({ "a": a, "b": b, "flips": cont.flips });
                }
            }
        }
        CommandName::Signature => run_signature(plan, o)?,
        CommandName::Bfy => {
            let depth = p.depth.unwrap_or(6);
            let bfy = models::bfy_build(depth, p.rho.unwrap_or(0.3), p.orientation.unwrap_or(BfyOrientation::Preserving))
                .map_err(|e| match e {
                    models::ModelError::Packing(_) | models::ModelError::BadArgs(_) => invalid(e.to_string()),
                    e => numerical("bfy_build")(e),
                })?;
            o.json("bfy.json", &bfy.system.to_json());
            o.summary = json!({ "depth": depth, "leaves": bfy.system.disks[depth].len() });
        }
        CommandName::Gst => {
            let fp = fixed_point(p)?;
            let depth = p.depth.unwrap_or(6);
            let (alpha, eps) = (p.alpha.unwrap_or(0.01), p.eps.unwrap_or(1e-3));
            let t = models::gst_tune(&fp, alpha, eps, depth, p.mu_max.unwrap_or(0.02)).map_err(numerical("gst_tune"))?;
            o.json("gst.json", &json!({ "alpha": alpha, "eps": eps, "depth": depth, "tuning": t }));
            o.summary = json!({ "mu_star": t.mu_star });
        }
        CommandName::Courcelle => {
            let (g, c) = match p.example.unwrap_or(ExampleName::Logistic) {
                ExampleName::Logistic => {
                    let acc = accumulation_parameter(Family::Logistic, p.flips.unwrap_or(8), 4.669_201_609)
                        .map_err(numerical("accumulation_parameter"))?;
                    let g = models::logistic(p.a.unwrap_or(acc.a_inf)).map_err(|e| invalid(e.to_string()))?;
                    let c = build_cascade_1d(&g, p.depth.unwrap_or(8)).map_err(numerical("build_cascade"))?;
                    (g, c)
                }
                ExampleName::FourLap => models::four_lap_example().map_err(numerical("four_lap_example"))?,
            };
            let laps = g.laps().map_err(numerical("laps"))?;
            let t = lap_counts(&c, &laps).map_err(numerical("lap_counts"))?;
            let rep = courcelle_check(&t);
            let mut rows = Vec::new();
            for (k, row) in t.phi.iter().enumerate() {
                for (n, v) in row.iter().enumerate() {
                    let r = t.residue[k].get(n).map(|r| r.to_string()).unwrap_or_default();
                    rows.push(vec![(k + 1).to_string(), n.to_string(), v.to_string(), r]);
                }
            }
            o.csv("lapcounts.csv", &["k", "n", "phi", "residue"], rows);
            o.summary = json!({ "courcelle_holds": rep.holds, "extremes": rep.extremes });
        }
        CommandName::Geometry => {
            let fp = fixed_point(p)?;
            let depth = p.depth.unwrap_or(6);
            let tree = atoms_1d(&fp.as_map(), depth).map_err(numerical("atoms"))?;
            let rep = geometry_report(&tree.generations).map_err(numerical("geometry_report"))?;
            o.json("geometry.json", &rep);
            o.summary = json!({ "bounded": rep.bounded(), "a_hat": rep.a_hat, "b_hat": rep.b_hat });
        }
        CommandName::Detdecay => {
            let n = p.depth.unwrap_or(4);
            let (cont, b, a) = henon_setup(p, n + 1)?;
            let c = build_cascade_henon(&cont, a, n).map_err(numerical("build_cascade"))?;
            let xi = models::renormalization_disks(&c, n).map_err(numerical("renormalization_disks"))?;
            let dets = det_decay_check(&DiskMap::henon(a, b), &xi, n).map_err(numerical("det_decay_check"))?;
            let decreasing = dets.windows(2).all(|w| w[1] < w[0]);
            o.json("detdecay.json", &json!({ "a": a, "b": b, "det_max": dets, "strictly_decreasing": decreasing }));
            o.summary = json!({ "strictly_decreasing": decreasing });
        }
    }
    Ok(())
}

fn write_all(dir: &Path, files: &[(String, Vec<u8>)]) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    for (name, bytes) in files {
        fs::write(dir.join(name), bytes)?;
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let plan = match plan(&cli) {
        Ok(p) => p,
        Err(Failure::Validation(m)) | Err(Failure::Numerical { message: m, .. }) => {
            eprintln!("error: {m}");
            return EXIT_VALIDATION;
        }
    };
    let mut out = Outputs::new();
    let result = run_plan(&plan, &mut out);
    let (code, status) = match &result {
        Ok(()) => (EXIT_OK, json!({ "status": "ok" })),
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            return EXIT_VALIDATION;
        }
        Err(Failure::Numerical { stage, message }) => {
            eprintln!("numerical failure in {stage}: {message}");
            (EXIT_NUMERICAL, json!({ "status": "failed", "stage": stage, "error": message }))
        }
    };
    let mut summary = status;
    summary["command"] = json!(plan.command);
    summary["results"] = out.summary.clone();
    out.json("summary.json", &summary);
    if let Err(e) = write_all(&plan.out, &out.files) {
        eprintln!("error: cannot write outputs to {}: {e}", plan.out.display());
        return EXIT_NUMERICAL;
    }
    code
}

pub fn run() -> i32 {
    run_from(std::env::args_os())
}
