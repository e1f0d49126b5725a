//! Acceptance criteria over the default manifest. Each test prints one
//! `[PASS]`/`[FAIL]` line to stderr (outside the test capture).

use std::f64::consts::PI;
use std::io::Write;
use std::path::PathBuf;
use std::sync::OnceLock;

use proptest::prelude::*;
use proptest::test_runner::{TestCaseError, TestRunner};

use hslab::cli::{write_reports, CliOverrides, ExperimentConfig, Plan, RunOutcome};
use hslab::convex::{ConvexSpec, Quadratic};
use hslab::model::harmonic::{HarmonicFunction, HarmonicSpec};
use hslab::model::kernels::{
    brownian_exit_masses_1d, brownian_poisson_ball, green_function, stable_poisson_1d_regular,
};
use hslab::model::operator::JumpKernel;
use hslab::model::{DomainGeometry, OperatorModel, Point};
use hslab::quadrature::engine::{integrate_best, integrate_to_infinity, Tolerance};
use hslab::verify::{martingale_isometry, verify_hardy_stein, IdentityId, IdentityReport, Pathway, VerifyOptions};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

struct Suite {
    plan: Plan,
    outcome: RunOutcome,
}

/// The default manifest, run once through the gated runner.
fn suite() -> &'static Suite {
    static SUITE: OnceLock<Suite> = OnceLock::new();
    SUITE.get_or_init(|| {
        let cfg = ExperimentConfig::load(&root().join("configs/default.toml")).expect("default config loads");
        let plan = Plan::build(&cfg, &CliOverrides::default()).expect("default manifest validates");
        let outcome = hslab::cli::execute(&plan);
        Suite { plan, outcome }
    })
}

impl Suite {
    fn report(&self, entry: &str, id: IdentityId) -> &IdentityReport {
        self.outcome
            .report(entry, id)
            .unwrap_or_else(|| panic!("no {} report for {entry}", id.as_str()))
    }

    fn seconds(&self, entry: &str, id: IdentityId) -> f64 {
        self.outcome
            .entries
            .iter()
            .find(|e| e.entry_id == entry)
            .and_then(|e| e.seconds(id))
            .unwrap_or(f64::INFINITY)
    }

    fn n_paths(&self, entry: &str) -> u64 {
        self.plan.entries.iter().find(|p| p.entry.id == entry).map_or(0, |p| p.opts.mc.n_paths)
    }
}

fn verdict(criterion: &str, failures: &[String], summary: String) {
    let pass = failures.is_empty();
    let mark = if pass { "PASS" } else { "FAIL" };
    let detail = if pass { summary } else { failures.join("; ") };
    let _ = writeln!(std::io::stderr().lock(), "[{mark}] {criterion}: {detail}");
    assert!(pass, "{criterion}: {detail}");
}

fn require(failures: &mut Vec<String>, ok: bool, what: impl FnOnce() -> String) {
    if !ok {
        failures.push(what());
    }
}

fn value(r: &IdentityReport, term: &str, pathway: Pathway) -> f64 {
    r.term(term, pathway).map_or(f64::NAN, |t| t.value)
}

fn check_passes(r: &IdentityReport, label: &str) -> bool {
    r.check(label).is_some_and(|c| c.pass)
}

#[test]
fn c1_brownian_base_identity() {
    let s = suite();
    let r = s.report("brownian-base", IdentityId::HsBase);
    let (lhs, rhs) = (r.lhs_total.unwrap(), r.rhs_total.unwrap());
    let secs = s.seconds("brownian-base", IdentityId::HsBase);
    let mut f = Vec::new();
    require(&mut f, lhs.pathway == Pathway::Quad && (lhs.value - 1.0).abs() < 1e-10, || format!("quad lhs {}", lhs.value));
    require(&mut f, rhs.pathway == Pathway::Quad && (rhs.value - 1.0).abs() < 1e-10, || format!("quad rhs {}", rhs.value));
    require(&mut f, (lhs.value - rhs.value).abs() < 1e-10, || format!("|Δ| = {:e}", lhs.value - rhs.value));
    let mc = r.check("mc: lhs = rhs");
    require(&mut f, mc.is_some_and(|c| c.pass && r.verdict.k == 3.0), || format!("mc closure {mc:?}"));
    require(&mut f, s.n_paths("brownian-base") == 200_000, || "n_paths != 2e5".into());
    require(&mut f, secs < 10.0, || format!("runtime {secs:.1}s"));
    let c = mc.unwrap();
    verdict(
        "C1 brownian base identity",
        &f,
        format!("quad {:.12} = {:.12}; mc Δ {:.2e} within {:.2e}; {secs:.1}s", lhs.value, rhs.value, c.delta, c.allowed),
    );
}

#[test]
fn c2_general_convex_identity() {
    let s = suite();
    let mut f = Vec::new();
    let mut parts = Vec::new();
    for (entry, x) in [("brownian-abs-x0", 0.0f64), ("brownian-abs-x0.5", 0.5)] {
        let r = s.report(entry, IdentityId::HsGeneral);
        let lhs = r.lhs_total.unwrap().value;
        let lt = value(r, "local_time@0", Pathway::Mc);
        let want = 1.0 - x.abs();
        let secs = s.seconds(entry, IdentityId::HsGeneral);
        require(&mut f, (lhs - 1.0).abs() < 1e-10, || format!("{entry}: lhs {lhs}"));
        require(&mut f, ((lt - want) / want).abs() < 0.02, || format!("{entry}: local time {lt} vs {want}"));
        require(&mut f, check_passes(r, "mc: lhs = rhs"), || format!("{entry}: mc closure"));
        require(&mut f, check_passes(r, "quad: lhs = rhs"), || format!("{entry}: quad closure"));
        require(&mut f, secs < 30.0, || format!("{entry}: runtime {secs:.1}s"));
        parts.push(format!("x={x}: L {lt:.4} vs {want}, {secs:.1}s"));
    }
    verdict("C2 general convex identity", &f, parts.join("; "));
}

#[test]
fn c3_stable_identity() {
    let s = suite();
    let mut f = Vec::new();
    require(&mut f, s.outcome.gate_passed, || "isometry gate did not pass".into());
    let mut worst: (f64, String) = (0.0, String::new());
    for a in ["0.5", "1.0", "1.5"] {
        for p in ["1.5", "2.0", "3.0"] {
            let entry = format!("stable-a{a}-p{p}");
            let Some(r) = s.outcome.report(&entry, IdentityId::HsBase) else {
                f.push(format!("{entry}: not run"));
                continue;
            };
            let mc = value(r, "exit", Pathway::Mc);
            let rhs = r.rhs_total.unwrap();
            let rel = ((mc - rhs.value) / rhs.value).abs();
            let limit = if p == "2.0" { 0.01 } else { 0.02 };
            let secs = s.seconds(&entry, IdentityId::HsBase);
            require(&mut f, rhs.pathway == Pathway::Quad, || format!("{entry}: rhs not by quadrature"));
            require(&mut f, rel < limit, || format!("{entry}: relative {rel:.4} >= {limit}"));
            require(&mut f, s.n_paths(&entry) == 1_000_000, || format!("{entry}: n_paths"));
            require(&mut f, secs < 180.0, || format!("{entry}: runtime {secs:.1}s"));
            if rel >= worst.0 {
                worst = (rel, entry);
            }
        }
    }
    verdict("C3 stable identity", &f, format!("9 (α, p) pairs; worst relative {:.2e} at {}", worst.0, worst.1));
}

#[test]
fn c4_martingale_isometry_gate() {
    let s = suite();
    let mut f = Vec::new();
    for e in &s.plan.entries {
        let id = &e.entry.id;
        match s.outcome.report(id, IdentityId::MartingaleIso) {
            Some(r) => require(&mut f, r.passed(), || format!("{id}: closure failed")),
            None => f.push(format!("{id}: no isometry report")),
        }
    }
    require(&mut f, s.outcome.gate_passed, || "gate flag not set".into());
    verdict("C4 martingale isometry", &f, format!("{} entries closed", s.plan.entries.len()));
}

#[test]
fn c5_conditional_identity() {
    let s = suite();
    let mut f = Vec::new();
    require(&mut f, s.outcome.gate_passed, || "isometry gate did not pass".into());
    let entry = "conditional-brownian";
    let r = s.report(entry, IdentityId::HsConditional);
    let (lhs, rhs) = (r.lhs_total.unwrap(), r.rhs_total.unwrap());
    let delta = lhs.value - rhs.value;
    let secs = s.seconds(entry, IdentityId::HsConditional);
    require(&mut f, lhs.pathway == Pathway::Quad && rhs.pathway == Pathway::Quad, || "totals not by quadrature".into());
    require(&mut f, delta.abs() < 1e-8, || format!("|Δ| = {delta:e}"));
    require(&mut f, check_passes(r, "mc: lhs = rhs"), || format!("mc closure {:?}", r.check("mc: lhs = rhs")));
    require(&mut f, s.n_paths(entry) == 200_000, || "n_paths != 2e5".into());
    require(&mut f, secs < 20.0, || format!("runtime {secs:.1}s"));
    verdict("C5 conditional identity", &f, format!("quad {:.10} vs {:.10}; {secs:.1}s", lhs.value, rhs.value));
}

#[test]
fn c6_local_time_characterization() {
    let s = suite();
    let mut f = Vec::new();
    let mut parts = Vec::new();
    for entry in ["brownian-abs-x0", "brownian-abs-x0.5"] {
        let r = s.report(entry, IdentityId::LocaltimeChar);
        let quad = value(r, "characterization", Pathway::Quad);
        let mc = value(r, "local_time", Pathway::Mc);
        let rel = ((mc - quad) / quad).abs();
        require(&mut f, rel < 0.02, || format!("{entry}: {mc} vs {quad}"));
        parts.push(format!("{quad:.4} vs {mc:.4}"));
    }
    verdict("C6 local-time characterization", &f, parts.join("; "));
}

fn exits_nondecreasing(r: &IdentityReport, levels: usize) -> Vec<String> {
    let mut f = Vec::new();
    for n in 1..levels {
        for kind in ["quad exit", "mc exit"] {
            let label = format!("{kind} nondecreasing {}->{}", n, n + 1);
            if let Some(c) = r.check(&label) {
                if !c.pass {
                    f.push(label);
                }
            } else if kind == "quad exit" {
                f.push(format!("missing {label}"));
            }
        }
    }
    f
}

#[test]
fn c7_hardy_norms() {
    let s = suite();
    let mut f = Vec::new();
    let mut parts = Vec::new();
    for (entry, id, rel) in [
        ("brownian-base", IdentityId::HardyNorm, 0.02),
        ("cond-norm-brownian", IdentityId::CondHardyNorm, 0.02),
        ("stable-p1", IdentityId::P1Example, 0.03),
    ] {
        let r = s.report(entry, id);
        f.extend(exits_nondecreasing(r, 5).into_iter().map(|m| format!("{entry}: {m}")));
        let last = value(r, "exit[5]", Pathway::Quad);
        let last = if last.is_nan() { value(r, "exit[5]", Pathway::Mc) } else { last };
        let norm = value(r, "norm", Pathway::Quad);
        let dev = ((last - norm) / norm).abs();
        require(&mut f, value(r, "exit[6]", Pathway::Quad).is_nan() && !last.is_nan(), || format!("{entry}: not 5 levels"));
        require(&mut f, dev < rel, || format!("{entry}: level 5 {last} vs {norm}"));
        require(&mut f, r.passed(), || format!("{entry}: report failed"));
        parts.push(format!("{entry} {last:.4}/{norm:.4}"));
    }
    verdict("C7 hardy norms", &f, parts.join("; "));
}

#[test]
fn c8_littlewood_paley_ratios() {
    let s = suite();
    let mut f = Vec::new();
    let mut count = 0;
    let mut worst = 0.0f64;
    for e in &s.outcome.entries {
        for r in e.reports.iter().filter(|r| r.identity_id == IdentityId::LpSquare) {
            for p in [2.0, 3.0] {
                let t = r.terms.iter().find(|t| t.term == format!("ratio_p{p}"));
                let Some(t) = t else {
                    f.push(format!("{}: no ratio for p={p}", e.entry_id));
                    continue;
                };
                count += 1;
                worst = worst.max(t.value / p);
                require(
                    &mut f,
                    t.value.is_finite() && check_passes(r, &format!("ratio_p{p} <= c_p")),
                    || format!("{} p={p}: ratio {}", e.entry_id, t.value),
                );
            }
        }
    }
    let affine = value(s.report("brownian-base", IdentityId::LpSquare), "ratio_p2", Pathway::Quad);
    require(&mut f, (affine - 1.0).abs() <= 0.005, || format!("affine brownian ratio {affine}"));
    require(&mut f, count >= 10, || format!("only {count} ratios"));
    verdict(
        "C8 littlewood-paley",
        &f,
        format!("{count} ratios, largest ratio/c_p {worst:.3}; affine p=2 ratio {affine:.6}"),
    );
}

fn property<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Option<String> {
    let mut runner = TestRunner::new(ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() });
    runner.run(&strategy, test).err().map(|e| e.to_string())
}

fn bregman_violations() -> Option<String> {
    let triples = (-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0, 0.0f64..1.0, 0usize..4);
    let all = specs();
    property(10_000, triples, |(a, b, c, t, which)| {
        let spec = &all[which];
        let (fb, fc) = (spec.bregman(a, b), spec.bregman(a, c));
        let mid = spec.bregman(a, t * b + (1.0 - t) * c);
        let scale = 1e-12 * (1.0 + fb.abs() + fc.abs() + spec.eval(a).abs());
        prop_assert!(fb >= -scale && fc >= -scale, "negative divergence {fb} {fc}");
        prop_assert!(mid <= t * fb + (1.0 - t) * fc + scale, "not convex in the second argument");
        Ok(())
    })
}

fn green_asymmetry() -> Option<String> {
    let points = (-0.99f64..0.99, -0.99f64..0.99, -0.6f64..0.6, 0usize..4);
    property(2_000, points, |(x, y, z, which)| {
        let (m, d, p, q) = match which {
            0 => (
                OperatorModel::brownian(1, 0.7).with_killing(0.3),
                DomainGeometry::interval(-1.0, 1.0).unwrap(),
                Point::on_line(x),
                Point::on_line(y),
            ),
            1 => (
                OperatorModel::stable(1, 0.5 + (z + 0.6) / 1.2),
                DomainGeometry::interval(-1.0, 1.0).unwrap(),
                Point::on_line(x),
                Point::on_line(y),
            ),
            2 => (
                OperatorModel::brownian(2, 1.3),
                DomainGeometry::ball(&[0.0, 0.0], 1.0).unwrap(),
                Point([x * 0.7, z, 0.0]),
                Point([y * 0.7, -z, 0.0]),
            ),
            _ => (
                OperatorModel::brownian(3, 1.0),
                DomainGeometry::ball(&[0.0, 0.0, 0.0], 1.0).unwrap(),
                Point([x * 0.5, z, 0.1]),
                Point([0.2, y * 0.5, z]),
            ),
        };
        prop_assume!(p.dist(&q) > 1e-6);
        let (g1, g2) = (green_function(&m, &d, &p, &q).unwrap(), green_function(&m, &d, &q, &p).unwrap());
        prop_assert!((g1 - g2).abs() <= 1e-12 * g1.abs().max(1.0), "{g1} vs {g2}");
        Ok(())
    })
}

fn specs() -> Vec<ConvexSpec> {
    vec![
        ConvexSpec::power(1.3).unwrap(),
        ConvexSpec::power(3.0).unwrap(),
        ConvexSpec::Abs,
        ConvexSpec::piecewise(
            vec![-1.0, 2.0],
            vec![
                Quadratic { c0: 0.0, c1: -1.0, c2: 0.0 },
                Quadratic { c0: 0.5, c1: 0.0, c2: 0.5 },
                Quadratic { c0: -1.5, c1: 2.0, c2: 0.0 },
            ],
        )
        .unwrap(),
    ]
}

fn poisson_mass_errors() -> (f64, f64) {
    let mut brownian = 0.0f64;
    for x in [-0.9, -0.3, 0.0, 0.4, 0.8] {
        let (a, b) = brownian_exit_masses_1d(1.0, 0.0, -1.0, 1.0, x);
        brownian = brownian.max((a + b - 1.0).abs());
    }
    let tol = Tolerance::new(1e-13, 1e-12);
    let c2 = Point([0.0; 3]);
    for r in [0.0, 0.3, 0.6] {
        let x = Point([r, 0.2 * r, 0.0]);
        let n = 2048;
        let mass2: f64 = (0..n)
            .map(|i| {
                let th = 2.0 * PI * i as f64 / n as f64;
                brownian_poisson_ball(2, &c2, 1.0, &x, &Point([th.cos(), th.sin(), 0.0])) * 2.0 * PI / n as f64
            })
            .sum();
        brownian = brownian.max((mass2 - 1.0).abs());
        let x3 = Point([0.0, 0.0, r]);
        let (m3, _) = integrate_best(
            |th: f64| {
                let z = Point([th.sin(), 0.0, th.cos()]);
                brownian_poisson_ball(3, &c2, 1.0, &x3, &z) * 2.0 * PI * th.sin()
            },
            0.0,
            PI,
            &[],
            tol,
        );
        brownian = brownian.max((m3.value - 1.0).abs());
    }
    let mut stable = 0.0f64;
    for alpha in [0.5, 1.0, 1.5] {
        // t = s^k with k = 1/(1 - α/2) absorbs the boundary singularity
        let k = 1.0 / (1.0 - 0.5 * alpha);
        for xi in [-0.7, 0.0, 0.5] {
            let side = |xi: f64| {
                integrate_to_infinity(|s: f64| k * stable_poisson_1d_regular(alpha, 1.0, xi, s.powf(k)), 0.0, tol).0.value
            };
            stable = stable.max((side(xi) + side(-xi) - 1.0).abs());
        }
    }
    (brownian, stable)
}

fn determinism() -> Vec<String> {
    let text = std::fs::read_to_string(root().join("manifests/default.toml")).unwrap();
    let mut cfg: ExperimentConfig = ExperimentConfig::parse("").unwrap();
    cfg.entry = hslab::cli::Manifest::parse(&text)
        .unwrap()
        .entry
        .into_iter()
        .filter(|e| ["brownian-base", "stable-a1.5-p3.0", "mixed-tempered"].contains(&e.id.as_str()))
        .collect();
    let cli = CliOverrides { seed: Some(11), n_paths: Some(2_000), ..Default::default() };
    let mut bytes = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let mut plan = Plan::build(&cfg, &cli).unwrap();
        plan.out = dir.path().to_path_buf();
        let files = write_reports(&plan, &hslab::cli::execute(&plan)).unwrap();
        bytes.push(files.iter().map(|p| std::fs::read(p).unwrap()).collect::<Vec<_>>());
    }
    let mut f = Vec::new();
    require(&mut f, bytes[0].len() == 4, || format!("{} report files", bytes[0].len()));
    require(&mut f, bytes[0] == bytes[1], || "reports differ between identical runs".into());
    f
}

fn mc_opts(n: u64, step: f64, delta_j: Option<f64>) -> VerifyOptions {
    let mut o = VerifyOptions { pathway: Pathway::Mc, ..Default::default() };
    o.mc = o.mc.with_paths(n).with_seed(2024);
    o.scheme.step = step;
    o.scheme.delta_j = delta_j;
    o
}

/// Total Monte Carlo right-hand side and its standard error.
fn mc_rhs(r: &IdentityReport) -> (f64, f64) {
    let t = r.rhs_total.expect("mc rhs assembled");
    (t.value, t.uncertainty)
}

fn refinement() -> Vec<String> {
    let mut f = Vec::new();
    let (d, u_dom, x) = (
        DomainGeometry::interval(-2.0, 2.0).unwrap(),
        DomainGeometry::interval(-1.0, 1.0).unwrap(),
        Point::on_line(0.2),
    );
    let affine = HarmonicSpec::Affine { gradient: vec![1.0], offset: 0.3 };
    let bm = OperatorModel::brownian(1, 1.0);
    let u = HarmonicFunction::build(&affine, &bm, &d).unwrap();
    let spec = ConvexSpec::power(3.0).unwrap();
    let coarse = verify_hardy_stein(&bm, &d, &u_dom, &x, &u, &spec, &mc_opts(40_000, 2e-3, None)).unwrap();
    let fine = verify_hardy_stein(&bm, &d, &u_dom, &x, &u, &spec, &mc_opts(40_000, 1e-3, None)).unwrap();
    let ((a, sa), (b, sb)) = (mc_rhs(&coarse), mc_rhs(&fine));
    require(&mut f, (a - b).abs() <= 3.0 * (sa + sb), || format!("step halving moved rhs {a} -> {b}"));

    let mixed = OperatorModel::brownian(1, 1.0).with_jump(JumpKernel::Tempered { alpha: 1.2, intensity: 1.0, lambda: 1.0 });
    let v = HarmonicFunction::build(&affine, &mixed, &d).unwrap();
    let dj = 0.05;
    let coarse = martingale_isometry(&mixed, &d, &u_dom, &x, &v, &mc_opts(10_000, 1e-3, Some(dj))).unwrap();
    let fine = martingale_isometry(&mixed, &d, &u_dom, &x, &v, &mc_opts(10_000, 1e-3, Some(0.5 * dj))).unwrap();
    let ((a, sa), (b, sb)) = (mc_rhs(&coarse), mc_rhs(&fine));
    require(&mut f, (a - b).abs() <= 3.0 * (sa + sb), || format!("delta_J halving moved rhs {a} -> {b}"));
    f
}

#[test]
fn c9_property_suites() {
    let mut f = Vec::new();
    f.extend(bregman_violations().map(|e| format!("bregman: {e}")));
    f.extend(green_asymmetry().map(|e| format!("green symmetry: {e}")));
    let (pb, ps) = poisson_mass_errors();
    require(&mut f, pb < 1e-8, || format!("brownian poisson mass error {pb:e}"));
    require(&mut f, ps < 1e-4, || format!("stable poisson mass error {ps:e}"));
    f.extend(determinism());
    f.extend(refinement());
    verdict(
        "C9 property suites",
        &f,
        format!(
            "1e4 bregman triples clean; green symmetric to 1e-12; poisson mass errors {pb:.1e} / {ps:.1e}; \
             reruns bit-identical; step and delta_J halving stable"
        ),
    );
}
