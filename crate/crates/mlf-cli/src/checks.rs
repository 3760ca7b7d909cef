use std::cell::{OnceCell, RefCell};
use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::time::Instant;

use mlf_core::complexification::*;
use mlf_core::fibration::*;
use mlf_core::geometry::*;
use mlf_core::local_model::*;
use mlf_core::ode::OdeConfig;
use mlf_core::rearrangement::*;
use mlf_core::sampling::{normal, rng, unit_vector, Halton};
use mlf_core::topology::*;
use num_complex::Complex;
use rand::Rng;

use crate::config::{Command, Lemma, RunConfig, Scenario};
use crate::svg::{line_plot, polar_plot};
use crate::{Artifact, CheckRecord, RunReport, Status};

type Outcome = Result<Vec<CheckRecord>, String>;

struct Assembled {
    delta: f64,
    search: SearchReport,
    spot: SpotCheck,
    fm: FibrationMap,
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    ms: Option<MorseSystem>,
    assembled: OnceCell<Result<Assembled, String>>,
    artifacts: RefCell<Vec<Artifact>>,
}

impl Ctx<'_> {
    fn ms(&self) -> Result<&MorseSystem, String> {
        self.ms.as_ref().ok_or_else(|| format!("{} carries no Morse function", self.cfg.scenario))
    }

    fn ode(&self) -> OdeConfig {
        OdeConfig::default().with_tol(self.cfg.ode_tol)
    }

    fn tol(&self, name: &str) -> f64 {
        self.cfg.tol(name)
    }

    fn artifact(&self, file: &str, contents: String) {
        self.artifacts.borrow_mut().push(Artifact { file: file.into(), contents });
    }

    /// `δ` scan, constant search and assembly of `h`, shared by the checks
    /// that need the global map.
    fn assembled(&self) -> Result<&Assembled, String> {
        self.assembled
            .get_or_init(|| {
                let ms = self.ms()?.clone();
                let cm = ComplexificationMap::new(ms);
                let sf = SlopeFunction::for_scenario(&cm.ms).map_err(|e| format!("rearrangement: {e}"))?;
                let delta = scan_delta(&cm, self.cfg.samples, self.cfg.seed).map_err(|e| format!("complexification: {e}"))?.delta;
                let search = search_constants(&cm, &sf, delta, self.cfg.samples, self.cfg.seed).map_err(|e| format!("rearrangement: {e}"))?;
                let al = blend(&cm, &sf, &search.cutoff).map_err(|e| format!("rearrangement: {e}"))?;
                let (fm, spot) = assemble_h(&cm, &al, 5000, self.cfg.seed).map_err(|e| format!("rearrangement: {e}"))?;
                Ok(Assembled { delta, search, spot, fm })
            })
            .as_ref()
            .map_err(Clone::clone)
    }
}

/// Check groups run by a command, in report order.
fn groups(cmd: Command) -> Vec<&'static str> {
    match cmd {
        Command::VerifyLemma(l) => vec![l.name()],
        Command::Transport => vec!["transport"],
        Command::Monodromy => vec!["monodromy"],
        Command::Thimble => vec!["thimble"],
        Command::MorseSmale => vec!["morse-smale"],
        Command::ProbeIncompleteness => vec!["probe"],
        Command::HeegaardExport => vec!["heegaard"],
        Command::DoubleCheck => vec!["double"],
        Command::ScanDelta => vec!["scan-delta"],
        Command::ReportAll => {
            let mut v: Vec<&str> = Lemma::ALL.iter().map(|l| l.name()).collect();
            v.extend(["transport", "monodromy", "thimble", "morse-smale", "probe", "double", "scan-delta", "heegaard"]);
            v
        }
    }
}

fn run_group(ctx: &Ctx, group: &str) -> Outcome {
    match group {
        "hnu" => hnu(ctx),
        "cnu" => cnu(ctx),
        "h0" => h0(ctx),
        "slope" => slope(ctx),
        "pf" => pf(ctx),
        "surgery" => surgery(ctx),
        "sharp" => sharp(ctx),
        "pw" => pw(ctx),
        "transport" => transport(ctx),
        "monodromy" => monodromy(ctx),
        "thimble" => thimble(ctx),
        "morse-smale" => morse_smale(ctx),
        "probe" => probe(ctx),
        "double" => double(ctx),
        "scan-delta" => delta_scan(ctx),
        "heegaard" => heegaard(ctx),
        _ => unreachable!("unknown group {group}"),
    }
}

/// Local-model checks that do not depend on the scenario.
fn scenario_free(group: &str) -> bool {
    matches!(group, "surgery" | "sharp")
}

/// Runs every check group of the configured command. Checks are executed in
/// a fixed order with seeds taken from the config.
pub fn run_command(cfg: &RunConfig) -> RunReport {
    let ms = match &cfg.scenario {
        Scenario::Morse(name) => Some(scenario(name).expect("scenario validated at parse time")),
        Scenario::Heegaard(_) => None,
    };
    let ctx = Ctx { cfg, ms, assembled: OnceCell::new(), artifacts: RefCell::new(Vec::new()) };
    let mut checks = Vec::new();
    for group in groups(cfg.command) {
        let start = Instant::now();
        let heegaard = matches!(cfg.scenario, Scenario::Heegaard(_));
        let out = if heegaard != (group == "heegaard") && !scenario_free(group) {
            let reason = if heegaard { "needs a Morse scenario" } else { "needs a heegaard-genus-g scenario" };
            Ok(vec![CheckRecord::skipped(group, reason)])
        } else {
            run_group(&ctx, group)
        };
        let mut records = out.unwrap_or_else(|e| vec![CheckRecord::error(group, e)]);
        let runtime = start.elapsed();
        for r in &mut records {
            r.runtime = runtime;
        }
        checks.extend(records);
    }
    RunReport { command: cfg.command, scenario: cfg.scenario.clone(), seed: cfg.seed, samples: cfg.samples, checks, artifacts: ctx.artifacts.into_inner() }
}

fn fd_grad(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let h = 1e-6;
    (0..x.len())
        .map(|i| {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[i] += h;
            b[i] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect()
}

fn hnu(ctx: &Ctx) -> Outcome {
    let ms = ctx.ms()?;
    let n = ms.dim();
    let mut worst: f64 = 0.0;
    let mut zero: f64 = 0.0;
    for cp in &ms.critical_points {
        let a = &cp.location;
        let dnu: Vec<Vec<f64>> = (0..n).map(|i| fd_grad(|q| ms.nu(cp.chart, q)[i], a)).collect();
        let lift = |p: &[f64]| hamiltonian_lift(&PhasePoint::in_chart(a.clone(), p.to_vec(), cp.chart), ms);
        zero = zero.max(lift(&vec![0.0; n]).map_err(|e| format!("geometry: {e}"))?.norm());
        for k in 0..n {
            let lin = fd_grad(|p| lift(p).map(|v| v.dp[k]).unwrap_or(f64::NAN), &vec![0.0; n]);
            for j in 0..n {
                worst = worst.max((lin[j] + dnu[j][k]).abs());
            }
        }
    }
    let tol = ctx.tol("hnu-linearization");
    Ok(vec![
        CheckRecord::below("hnu-linearization", worst, tol).with_detail("fiber linearization of the lift against the negative transpose of Dnu"),
        CheckRecord::below("hnu-zero-section", zero, tol).with_detail("lift at the critical points of the zero section"),
    ])
}

fn cnu(ctx: &Ctx) -> Outcome {
    let ms = ctx.ms()?;
    let seed = ctx.cfg.seed;
    let (mut ups, mut zeros, mut count) = (0.0f64, 0.0f64, 0usize);
    for a in 0..ms.critical_points.len() {
        for sign in [1i8, -1] {
            for x in sample_c_sphere(ms, a, sign, 0.1, 20, seed) {
                let u = upsilon(&x, ms).map_err(|e| format!("geometry: {e}"))?;
                ups = ups.max((u - 2.0 * sign as f64).abs());
                zeros = zeros.max(nu_bar_dot_upsilon(&x, ms).map_err(|e| format!("complexification: {e}"))?.abs());
                count += 1;
            }
        }
    }
    let mut g = rng(seed, 17);
    let mut worst = f64::INFINITY;
    let n = ms.dim();
    let samples = ctx.cfg.samples.min(10_000);
    for i in 0..samples {
        let a = i % ms.critical_points.len();
        let rad = 0.9 * ms.critical_points[a].chart_radius.min(ms.sample_radius);
        let qm: Vec<f64> = unit_vector(&mut g, n).iter().map(|v| v * rad * g.gen::<f64>()).collect();
        let pm: Vec<f64> = unit_vector(&mut g, n).iter().map(|v| v * g.gen_range(0.01..3.0)).collect();
        let x = ms.from_morse(a, &qm, &pm);
        worst = worst.min(nu_bar_dot_upsilon(&x, ms).map_err(|e| format!("complexification: {e}"))?);
    }
    let detail = format!("{count} critical-sphere samples");
    Ok(vec![
        CheckRecord::below("cnu-upsilon", ups, ctx.tol("cnu-upsilon")).with_detail(detail.clone()),
        CheckRecord::above("cnu-nonnegative", worst, -ctx.tol("cnu-nonnegative")).with_detail(format!("{samples} chart samples")),
        CheckRecord::below("cnu-zeros", zeros, ctx.tol("cnu-zeros")).with_detail(detail),
    ])
}

/// Largest gap between `f_r⁰` on the critical spheres and `φ(a) + factor·sign·r²`.
fn sphere_value_gap(cm: &ComplexificationMap, factor: f64, seed: u64) -> (f64, usize) {
    let ms = &cm.ms;
    let (mut gap, mut count) = (0.0f64, 0);
    for r in [0.05, 0.1, 0.2] {
        for a in 0..ms.critical_points.len() {
            for sign in [1i8, -1] {
                let model = ms.critical_points[a].value + factor * sign as f64 * r * r;
                for x in sample_c_sphere(ms, a, sign, r, 10, seed) {
                    gap = gap.max((eval_h0(&x, cm).re - model).abs());
                    count += 1;
                }
            }
        }
    }
    (gap, count)
}

fn h0(ctx: &Ctx) -> Outcome {
    let cm = ComplexificationMap::new(ctx.ms()?.clone());
    let seed = ctx.cfg.seed;
    let scan = scan_delta(&cm, ctx.cfg.samples, seed).map_err(|e| format!("complexification: {e}"))?;
    let radius = 0.5 * cm.ms.critical_points.iter().map(|c| c.chart_radius).fold(cm.ms.sample_radius, f64::min);
    let crit = verify_h0_critical(&cm, radius, 200, seed);
    let ident = lyapunov_chart_identity(&cm, 1000, seed);
    let tol = ctx.tol("h0-sphere-values");
    let mut out = vec![
        CheckRecord::flag("h0-critical-points", crit.pass, format!("roots at critical points {:?}, {} extra", crit.found, crit.extra.len())),
        CheckRecord::above("h0-delta", scan.delta, 0.0).with_detail(format!("{} interior samples", scan.samples_interior)),
        CheckRecord::above("h0-interior-margin", scan.min_margin_interior, 0.0),
        CheckRecord::below("h0-chart-identity", ident, ctx.tol("h0-chart-identity")).with_detail("nu-derivative of f0 against 4 sum |z|^2"),
    ];
    let (gap1, count) = sphere_value_gap(&cm, 1.0, seed);
    if count == 0 {
        out.push(CheckRecord::skipped("h0-sphere-values-r2", "all critical spheres are empty"));
        out.push(CheckRecord::skipped("h0-sphere-values-2r2", "all critical spheres are empty"));
    } else {
        let (gap2, _) = sphere_value_gap(&cm, 2.0, seed);
        out.push(CheckRecord::below("h0-sphere-values-r2", gap1, tol).with_detail("f_r0 on C± against phi(a) ± r^2"));
        out.push(CheckRecord::below("h0-sphere-values-2r2", gap2, tol).with_detail("f_r0 on C± against phi(a) ± 2r^2"));
    }
    Ok(out)
}

fn slope(ctx: &Ctx) -> Outcome {
    let ms = ctx.ms()?;
    let sf = match SlopeFunction::for_scenario(ms) {
        Ok(sf) => sf,
        Err(e) => return Ok(vec![CheckRecord::skipped("slope", e.to_string())]),
    };
    let rep = validate_slope(&sf, ms, ctx.cfg.samples.min(20_000), ctx.cfg.seed);
    Ok(vec![
        CheckRecord::above("slope-lyapunov", rep.lyapunov_min, 0.0),
        CheckRecord::flag("slope-a-sets", rep.a_plus_min > 0.0 && rep.a_minus_max < 0.0, format!("min on A+ {}, max on A- {}", rep.a_plus_min, rep.a_minus_max)),
    ])
}

fn pf(ctx: &Ctx) -> Outcome {
    let ms = ctx.ms()?;
    if let Err(e) = SlopeFunction::for_scenario(ms) {
        return Ok(vec![CheckRecord::skipped("pf", e.to_string())]);
    }
    let asm = ctx.assembled()?;
    let LyapunovKind::Assembled(al) = &asm.fm.kind else { unreachable!() };
    let cp = asm.search.cutoff;
    let seed = ctx.cfg.seed;
    let halton = Halton::new(phase_sample_dim(ms), seed + 100);
    let (mut parity, mut homog) = (0.0f64, 0.0f64);
    for i in 0..ctx.cfg.samples.min(10_000) as u64 {
        let x = sample_phase(ms, &halton.point(i), 0.0, 4.0 * cp.delta);
        let m = PhasePoint::in_chart(x.q.clone(), x.p.iter().map(|v| -v).collect(), x.chart);
        let (h, hm) = (asm.fm.eval(&x), asm.fm.eval(&m));
        parity = parity.max((h.re - hm.re).abs()).max((h.im + hm.im).abs());
        let y = sample_phase(ms, &halton.point(i), cp.delta, 3.0 * cp.delta);
        let t = 1.0 + 3.0 * halton.point(i)[0];
        let f = |z: &PhasePoint<f64>| al.eval(ms, z.chart, &z.q, &z.p);
        homog = homog.max((f(&y.scaled(t)) - t * f(&y)).abs());
    }
    let margin = asm.search.margins.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hist = String::from("step,epsilon,c,inner,middle,outer\n");
    for (i, s) in asm.search.history.iter().enumerate() {
        let _ = writeln!(hist, "{i},{},{},{},{},{}", s.epsilon, s.c, s.margins[0], s.margins[1], s.margins[2]);
    }
    let mut prof = String::from("r,tau0,tau1\n");
    for row in cp.table(101) {
        let _ = writeln!(prof, "{},{},{}", row[0], row[1], row[2]);
    }
    ctx.artifact("pf_search.csv", hist);
    ctx.artifact("pf_cutoff.csv", prof);
    Ok(vec![
        CheckRecord::above("pf-search", margin, 0.0).with_detail(format!(
            "delta {}, epsilon {}, C {}, {} samples per region",
            asm.delta, cp.epsilon, cp.c, asm.search.samples_per_region
        )),
        CheckRecord::above("pf-assembly", asm.spot.min_lyapunov.min(asm.spot.min_independence), 0.0)
            .with_detail(format!("{} spot samples", asm.spot.samples)),
        CheckRecord::below("pf-parity", parity, ctx.tol("pf-parity")),
        CheckRecord::below("pf-homogeneity", homog, ctx.tol("pf-homogeneity")),
    ])
}

fn surgery(ctx: &Ctx) -> Outcome {
    let mut g = rng(ctx.cfg.seed, 23);
    let grid: Vec<f64> = (0..25).map(|i| 0.2 + 0.2 * i as f64).collect();
    let mut worst: f64 = 0.0;
    let mut csv = String::from("plane,u,r,theta_measured,theta_template\n");
    for plane in 0..10 {
        let a = unit_vector(&mut g, 2);
        let b = unit_vector(&mut g, 2);
        let frame = PlaneFrame::new(&[a[0], a[1], 0.0, 0.0], &[0.0, 0.0, b[0], b[1]]).map_err(|e| format!("local model: {e}"))?;
        let u = g.gen_range(0.5..2.0);
        let rep = surgery_compare(2, u, &frame, TransportMethod::Ode(ctx.ode()), &grid).map_err(|e| format!("local model: {e}"))?;
        worst = worst.max(rep.max_deviation);
        for row in &rep.rows {
            let _ = writeln!(csv, "{plane},{u},{},{},{}", row.r, row.theta_measured, row.theta_template);
        }
    }
    ctx.artifact("surgery.csv", csv);
    Ok(vec![CheckRecord::below("surgery-template", worst, ctx.tol("surgery")).with_detail("10 random planes, ODE transport")])
}

fn sharp(ctx: &Ctx) -> Outcome {
    let cfg = SharpConfig { delta: 0.2, c: 1.0 };
    let mut g = rng(ctx.cfg.seed, 29);
    let (mut ident, mut resid) = (0.0f64, 0.0f64);
    let mut nonsol = f64::INFINITY;
    let target = 2.0 * 2f64.sqrt() / 3.0;
    for i in 0..100 {
        let k = 1 + i % 2;
        let xp: Vec<f64> = (0..k).map(|_| normal(&mut g)).collect();
        let ypp: Vec<f64> = (0..k).map(|_| normal(&mut g)).collect();
        let r = g.gen_range(cfg.delta..2.0 * cfg.delta);
        let z = sharp_solution(&cfg, k, &xp, &ypp, r, 1.0);
        let rep = sharp_system_check(&cfg, k, &z);
        ident = ident.max((rep.im_h - target * rep.norm2).abs());
        resid = resid.max(rep.max_residual);
        let n = z.len();
        let dir: Vec<f64> = unit_vector(&mut g, 2 * n);
        let w: Vec<Complex<f64>> = (0..n).map(|j| Complex::new(dir[2 * j], dir[2 * j + 1]) * r).collect();
        nonsol = nonsol.min(sharp_system_check(&cfg, k, &w).max_residual);
    }
    let tol = ctx.tol("sharp-identity");
    Ok(vec![
        CheckRecord::below("sharp-identity", ident.max(resid), tol).with_detail("c = 1, 100 constructed solutions"),
        CheckRecord::above("sharp-nonsolution", nonsol, ctx.tol("sharp-nonsolution")).with_detail("100 random points of the shell"),
    ])
}

/// A regular value between the two lowest critical values.
fn regular_value(ms: &MorseSystem) -> f64 {
    let v = &ms.delta_phi;
    match v.iter().find(|&&x| x > v[0] + 1e-9) {
        Some(&hi) => v[0] + 0.65 * (hi - v[0]),
        None => v[0] + 0.3,
    }
}

fn pw(ctx: &Ctx) -> Outcome {
    let ms = ctx.ms()?;
    if let Err(e) = SlopeFunction::for_scenario(ms) {
        return Ok(vec![CheckRecord::skipped("pw", e.to_string())]);
    }
    let u = regular_value(ms);
    let asm = ctx.assembled()?;
    let rep = weinstein_fiber_report(&asm.fm, u, &[0.05, 0.2, 1.0], 100, ctx.cfg.seed).map_err(|e| format!("fibration: {e}"))?;
    let below = ms.critical_points.iter().filter(|c| c.value < u).count();
    let above = ms.critical_points.len() - below;
    let root = rep.roots.iter().map(|r| r.root_residual).fold(0.0, f64::max);
    let grad = rep.roots.iter().map(|r| r.gradient_residual).fold(0.0, f64::max);
    let empty = rep.roots.iter().all(|r| r.radius.is_none());
    let note = if empty { "all critical spheres at this level are empty" } else { "" };
    // the quadric of index 1 has a non-empty sphere at every level
    let q = FibrationMap::coarse(scenario("quadric-n2-k1").expect("registry scenario"));
    let qrep = weinstein_fiber_report(&q, 0.3, &[0.5, 1.0, 2.0], 100, ctx.cfg.seed).map_err(|e| format!("fibration: {e}"))?;
    let qr = &qrep.roots[0];
    let qerr = qr.radius.map(|r| (r - 0.3f64.sqrt()).abs()).unwrap_or(f64::INFINITY).max(qr.root_residual);
    ctx.artifact("weinstein.json", serde_json::to_string_pretty(&rep).expect("report serializes") + "\n");
    Ok(vec![
        CheckRecord::flag("pw-counts", rep.plus == below && rep.minus == above, format!("u = {u:.4}: {} plus, {} minus", rep.plus, rep.minus)),
        CheckRecord::below("pw-root", root, ctx.tol("pw-root")).with_detail(note),
        CheckRecord::below("pw-gradient", grad, ctx.tol("pw-gradient")).with_detail(note),
        CheckRecord::above("pw-slice", rep.slice_min, 0.0).with_detail(format!("{} slice samples", rep.slice_samples)),
        CheckRecord::above("pw-minimum", rep.tube_min_rho, 0.0).with_detail(format!("{} tube samples", rep.tube_samples)),
        CheckRecord::below("pw-quadric-root", qerr, ctx.tol("pw-root")).with_detail("quadric-n2-k1 at u = 0.3, root against sqrt(u)"),
        CheckRecord::below("pw-quadric-gradient", qr.gradient_residual, ctx.tol("pw-gradient")),
    ])
}

fn transport(ctx: &Ctx) -> Outcome {
    let cfg = ctx.ode();
    let mut g = rng(ctx.cfg.seed, 31);
    let mut oracle: f64 = 0.0;
    for _ in 0..100 {
        let z1 = Complex::new(normal(&mut g), normal(&mut g));
        let z2 = Complex::new(normal(&mut g), normal(&mut g));
        let alpha = g.gen_range(-TAU..TAU);
        let (a, b) = transport_plane_closed(z1, z2, alpha).map_err(|e| format!("local model: {e}"))?;
        let f = transport_plane_flow(z1, z2, alpha, &cfg).map_err(|e| format!("local model: {e}"))?;
        oracle = oracle.max((a - f.z1).norm()).max((b - f.z2).norm());
    }
    let ms = ctx.ms()?;
    let fm = FibrationMap::coarse(ms.clone());
    let halton = Halton::new(phase_sample_dim(ms), ctx.cfg.seed + 200);
    let (mut fiber, mut done, mut refused) = (0.0f64, 0, 0);
    for i in 0..20 {
        let x = sample_phase(ms, &halton.point(i), 0.05, 0.5);
        let w0 = fm.eval(&x);
        let path = PathSpec::Segment { from: w0, to: w0 + Complex::new(0.05, 0.05) };
        match parallel_transport(&fm, &x, path, &cfg) {
            Ok(tr) => {
                fiber = fiber.max(tr.fiber_error);
                done += 1;
            }
            Err(FibrationError::NearCritical(_) | FibrationError::PathNearCritical(_)) => refused += 1,
            Err(e) => return Err(format!("fibration: {e}")),
        }
    }
    Ok(vec![
        CheckRecord::below("transport-oracle", oracle, ctx.tol("transport-oracle")).with_detail("closed form against flow integration at 100 points"),
        CheckRecord::below("transport-fiber", fiber, ctx.tol("transport-fiber")).with_detail(format!("{done} transports, {refused} refused near critical values")),
    ])
}

fn positive_quadric(ms: &MorseSystem) -> bool {
    matches!(ms.manifold.kind, ManifoldKind::EuclideanChart) && ms.critical_points.len() == 1 && ms.critical_points[0].signature.iter().all(|&e| e > 0)
}

fn monodromy(ctx: &Ctx) -> Outcome {
    let ms = ctx.ms()?;
    if !positive_quadric(ms) {
        return Ok(vec![CheckRecord::skipped("monodromy", "needs a quadric of index 0")]);
    }
    let n = ms.dim();
    if n < 2 {
        return Ok(vec![CheckRecord::skipped("monodromy", "needs dimension at least 2")]);
    }
    let fm = FibrationMap::coarse(ms.clone());
    let mut e1 = vec![0.0; n];
    let mut e2 = vec![0.0; n];
    e1[0] = 1.0;
    e2[1] = 1.0;
    let frame = PlaneFrame::new(&e1, &e2).map_err(|e| format!("local model: {e}"))?;
    let radii: Vec<f64> = (0..21).map(|i| 0.2 + 3.8 * i as f64 / 20.0).collect();
    let theta0 = 0.3;
    let rep = monodromy_circle(&fm, 1.0, &frame, theta0, &radii, &ctx.ode()).map_err(|e| format!("fibration: {e}"))?;
    let mut csv = String::from("r,measured,model,radial_error,fiber_error\n");
    for row in &rep.rows {
        let _ = writeln!(csv, "{},{},{},{},{}", row.r, row.twist_measured, row.twist_model, row.radial_error, row.fiber_error);
    }
    let measured: Vec<(f64, f64)> = rep.rows.iter().map(|r| (r.r, r.twist_measured)).collect();
    let model: Vec<(f64, f64)> = rep.rows.iter().map(|r| (r.r, r.twist_model)).collect();
    ctx.artifact("monodromy.csv", csv);
    ctx.artifact("monodromy.svg", line_plot("monodromy twist against r", &[("measured", "red", measured.clone()), ("2pi/(1+r^4)", "blue", model.clone())]));
    let ray = |d: &[(f64, f64)]| d.iter().map(|&(r, t)| (r, theta0 + t)).collect::<Vec<_>>();
    let base: Vec<(f64, f64)> = radii.iter().map(|&r| (r, theta0)).collect();
    ctx.artifact(
        "annulus.svg",
        polar_plot("image of a radial ray", &[("ray", "grey", base), ("measured", "red", ray(&measured)), ("model", "blue", ray(&model))]),
    );
    Ok(vec![CheckRecord::below("monodromy-twist", rep.max_deviation, ctx.tol("monodromy")).with_detail("21 radii in [0.2, 4], u = 1")])
}

fn thimble(ctx: &Ctx) -> Outcome {
    let ms = ctx.ms()?;
    let fm = FibrationMap::coarse(ms.clone());
    let cfg = ctx.ode();
    let t_far = (0.25 * fm.critical_gap()).min(1.0);
    let (mut pairing, mut fiber, mut imag) = (0.0f64, 0.0f64, 0.0f64);
    let mut monotone = true;
    let mut csv = String::from("point,direction,t_far,pairing_residual,max_fiber_error,max_imaginary,max_terminal_distance\n");
    for (a, cp) in ms.critical_points.iter().enumerate() {
        let dir = if cp.index() == 0 { 1 } else { -1 };
        let th = trace_thimble(&fm, a, dir, t_far, 1e-3, 8, &cfg).map_err(|e| format!("fibration: {e}"))?;
        pairing = pairing.max(th.pairing_residual);
        fiber = fiber.max(th.max_fiber_error);
        imag = imag.max(th.max_imaginary);
        monotone &= th.monotone;
        let dist = th.terminal_distances.iter().copied().fold(0.0, f64::max);
        let _ = writeln!(csv, "{a},{dir},{t_far},{},{},{},{dist}", th.pairing_residual, th.max_fiber_error, th.max_imaginary);
    }
    ctx.artifact("thimble.csv", csv);
    let mut out = vec![
        CheckRecord::below("thimble-pairing", pairing, ctx.tol("thimble-pairing")),
        CheckRecord::below("thimble-fiber", fiber, ctx.tol("transport-fiber")),
        CheckRecord::flag("thimble-monotone", monotone, "real part of h along the traces"),
    ];
    if positive_quadric(ms) {
        out.push(CheckRecord::below("thimble-imaginary", imag, ctx.tol("thimble-imaginary")));
    }
    Ok(out)
}

fn morse_smale(ctx: &Ctx) -> Outcome {
    let ms = ctx.ms()?;
    let rep = morse_smale_check(ms, &ctx.ode()).map_err(|e| format!("fibration: {e}"))?;
    let mut csv = String::from("from,to,seeds,approach,angle,conormal_margin,saddle_to_saddle\n");
    for c in &rep.connections {
        let _ = writeln!(csv, "{},{},{},{},{},{},{}", c.from, c.to, c.seeds, c.approach, c.angle, c.conormal_margin, c.saddle_to_saddle);
    }
    ctx.artifact("morse_smale.csv", csv);
    let tol = ctx.tol("morse-smale-angle");
    let saddles = rep.connections.iter().filter(|c| c.saddle_to_saddle).count();
    let detail = format!("{} connections, {saddles} between saddles", rep.connections.len());
    if rep.connections.is_empty() {
        return Ok(vec![CheckRecord::flag("morse-smale-angle", true, "no connections")]);
    }
    Ok(vec![CheckRecord::above("morse-smale-angle", rep.min_angle, tol).with_detail(detail)])
}

fn probe(ctx: &Ctx) -> Outcome {
    let ms = ctx.ms()?;
    if !matches!(ms.manifold.kind, ManifoldKind::FlatTorus { .. }) {
        return Ok(vec![CheckRecord::skipped("probe", "the probe follows the saddle connection of the torus")]);
    }
    let fm = FibrationMap::coarse(ms.clone());
    let (seed, target) = if ms.name == "torus-upright" {
        torus_connection_seed()
    } else {
        let x = PhasePoint::new(vec![1.0, 2.0], vec![0.0, 0.05]);
        let w = fm.eval(&x).re + 0.5;
        (x, w)
    };
    let rep = incompleteness_probe(&fm, &seed, target, &ctx.ode()).map_err(|e| format!("fibration: {e}"))?;
    let detail = format!("target {target}, reached {}, terminal {:?}", rep.w_reached, rep.terminal);
    Ok(vec![CheckRecord::below("probe-blow-up", rep.blow_up_factor, ctx.tol("probe-control")).with_detail(detail)])
}

fn double(ctx: &Ctx) -> Outcome {
    let ms = ctx.ms()?;
    if matches!(ms.manifold.kind, ManifoldKind::EuclideanChart) {
        return Ok(vec![CheckRecord::skipped("double", "needs a closed base manifold")]);
    }
    if let Err(e) = SlopeFunction::for_scenario(ms) {
        return Ok(vec![CheckRecord::skipped("double", e.to_string())]);
    }
    let u = 2.0 * ms.critical_points.iter().map(|c| c.value).fold(f64::NEG_INFINITY, f64::max);
    let asm = ctx.assembled()?;
    let rep = double_check(&asm.fm, u, 500, ctx.cfg.seed).map_err(|e| format!("topology: {e}"))?;
    ctx.artifact("double.json", serde_json::to_string_pretty(&rep).expect("report serializes") + "\n");
    let LyapunovKind::Assembled(al) = &asm.fm.kind else { unreachable!() };
    Ok(vec![
        CheckRecord::below("double-g-ratio", rep.max_g_ratio, ctx.tol("double-g-ratio")).with_detail(format!("u = {u}, {} fiber samples", rep.samples)),
        CheckRecord::flag("double-single-signed", rep.single_signed, format!("f_inf in [{}, {}]", rep.f_inf_min, rep.f_inf_max)),
        CheckRecord::flag("double-unique-root", rep.max_roots_per_ray == 1, format!("{} roots on the worst ray", rep.max_roots_per_ray)),
        CheckRecord::flag(
            "double-homogeneous",
            rep.homogeneous,
            format!("smallest |p| on the fiber {} against delta {} with C = {}", rep.min_radius, al.cutoff.delta, al.cutoff.c),
        ),
    ])
}

fn delta_scan(ctx: &Ctx) -> Outcome {
    let cm = ComplexificationMap::new(ctx.ms()?.clone());
    let rep = scan_delta(&cm, ctx.cfg.samples, ctx.cfg.seed).map_err(|e| format!("complexification: {e}"))?;
    let mut csv = String::from("delta,min_margin_interior,min_margin_sphere,accepted\n");
    for l in &rep.levels {
        let _ = writeln!(csv, "{},{},{},{}", l.delta, l.min_margin_interior, l.min_margin_sphere, l.accepted);
    }
    ctx.artifact("scan_delta.csv", csv);
    Ok(vec![
        CheckRecord::above("scan-delta", rep.delta, 0.0).with_detail(format!("{} interior and {} sphere samples", rep.samples_interior, rep.samples_sphere)),
        CheckRecord::above("scan-delta-interior", rep.min_margin_interior, 0.0),
        CheckRecord::above("scan-delta-sphere", rep.min_margin_sphere, 0.0),
    ])
}

fn heegaard(ctx: &Ctx) -> Outcome {
    let Scenario::Heegaard(g) = ctx.cfg.scenario else { unreachable!() };
    let sys = SurfaceCurveSystem::standard(g);
    let d = build_handle_diagram(&sys).map_err(|e| format!("topology: {e}"))?;
    let euler = euler_check(&d).map_err(|e| format!("topology: {e}"))?;
    ctx.artifact("heegaard.txt", diagram_text(&d));
    ctx.artifact("heegaard.svg", diagram_svg(&sys));
    let json = serde_json::json!({ "diagram": d, "euler": euler });
    ctx.artifact("heegaard.json", serde_json::to_string_pretty(&json).expect("diagram serializes") + "\n");
    let mut out = vec![
        CheckRecord::flag("heegaard-curves", d.handles.len() == 4 * g, format!("{} framed attaching curves", d.handles.len())),
        CheckRecord::flag("heegaard-euler", euler.pass, format!("chi(F) = {}, {} critical points", euler.chi_f, euler.crit_count)),
    ];
    if g > 0 {
        out.push(CheckRecord::above("heegaard-separation", attaching_curve_separation(&d, 64), 0.0));
    }
    Ok(out)
}

impl Status {
    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Skipped => "skipped",
            Status::Error => "error",
        }
    }
}
