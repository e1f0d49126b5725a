use hslab::convex::ConvexSpec;
use hslab::model::harmonic::{BoundaryData, HarmonicFunction, HarmonicSpec, Window};
use hslab::model::{DomainGeometry, OperatorModel, Point};
use hslab::path::{McConfig, SchemeOptions};
use hslab::verify::*;
use hslab::Error;

fn opts(n: u64) -> VerifyOptions {
    VerifyOptions {
        mc: McConfig::default().with_paths(n),
        scheme: SchemeOptions { step: 1e-4, ..Default::default() },
        ..Default::default()
    }
}

fn interval(lo: f64, hi: f64) -> DomainGeometry {
    DomainGeometry::interval(lo, hi).unwrap()
}

fn affine(g: f64, c: f64) -> HarmonicSpec {
    HarmonicSpec::Affine { gradient: vec![g], offset: c }
}

fn odd_windows() -> HarmonicSpec {
    HarmonicSpec::PoissonExtension {
        data: BoundaryData::Windows {
            windows: vec![Window { lo: -4.0, hi: -2.5, value: -1.0 }, Window { lo: 2.5, hi: 4.0, value: 1.0 }],
        },
    }
}

fn quad_total(r: &IdentityReport) -> (f64, f64) {
    (r.lhs_total.unwrap().value, r.rhs_total.unwrap().value)
}

#[test]
fn brownian_base_identity_both_pathways() {
    let m = OperatorModel::brownian(1, 1.0);
    let (d, u_dom) = (interval(-2.0, 2.0), interval(-1.0, 1.0));
    let u = HarmonicFunction::build(&affine(1.0, 0.0), &m, &d).unwrap();
    let r = verify_hardy_stein(&m, &d, &u_dom, &Point::on_line(0.0), &u, &ConvexSpec::power(2.0).unwrap(), &opts(20_000)).unwrap();
    assert!(r.passed(), "{r:#?}");
    let (l, rhs) = quad_total(&r);
    assert!((l - 1.0).abs() < 1e-10 && (rhs - 1.0).abs() < 1e-10);
    assert!(r.check("mc: lhs = rhs").unwrap().pass);
    assert!(r.check("mc lhs = quad rhs").unwrap().pass);
}

#[test]
fn constant_u_is_trivial() {
    let m = OperatorModel::stable(1, 1.5);
    let (d, u_dom) = (interval(-2.0, 2.0), interval(-1.0, 1.0));
    let u = HarmonicFunction::build(&HarmonicSpec::Constant { value: 0.7 }, &m, &d).unwrap();
    let spec = ConvexSpec::power(3.0).unwrap();
    let r = verify_hardy_stein(&m, &d, &u_dom, &Point::on_line(0.2), &u, &spec, &VerifyOptions { pathway: Pathway::Quad, ..opts(0) }).unwrap();
    let want = 0.7f64.powi(3);
    assert!(r.passed());
    assert!((r.lhs_total.unwrap().value - want).abs() < 1e-10);
    assert_eq!(r.term("jump", Pathway::Quad).unwrap().value, 0.0);
}

#[test]
fn preconditions_are_enforced() {
    let m = OperatorModel::brownian(1, 1.0);
    let d = interval(-2.0, 2.0);
    let u = HarmonicFunction::build(&affine(1.0, 0.0), &m, &d).unwrap();
    let x = Point::on_line(0.0);
    let o = opts(100);
    assert!(matches!(
        verify_hardy_stein(&m, &d, &interval(-1.0, 1.0), &x, &u, &ConvexSpec::Abs, &o),
        Err(Error::IncompatibleSpec)
    ));
    assert!(matches!(
        verify_hardy_stein(&m, &d, &interval(-2.0, 1.0), &x, &u, &ConvexSpec::power(2.0).unwrap(), &o),
        Err(Error::InvalidDomain(_))
    ));
    let s = OperatorModel::stable(1, 1.5);
    assert!(matches!(
        verify_general_convex(&s, &d, &interval(-1.0, 1.0), &x, &u, &ConvexSpec::Abs, &o),
        Err(Error::UnsupportedModel(_))
    ));
}

#[test]
fn general_convex_identity_with_local_time() {
    let m = OperatorModel::brownian(1, 1.0);
    let (d, u_dom) = (interval(-2.0, 2.0), interval(-1.0, 1.0));
    let u = HarmonicFunction::build(&affine(1.0, 0.0), &m, &d).unwrap();
    for x in [0.0, 0.5] {
        let r = verify_general_convex(&m, &d, &u_dom, &Point::on_line(x), &u, &ConvexSpec::Abs, &opts(20_000)).unwrap();
        assert!(r.passed(), "{r:#?}");
        let lt = r.term("local_time@0", Pathway::Quad).unwrap().value;
        assert!((lt - (1.0 - x)).abs() < 1e-10, "{lt}");
        let (l, rhs) = quad_total(&r);
        assert!((l - 1.0).abs() < 1e-10 && (rhs - 1.0).abs() < 1e-10);
    }
    // Density-type functions routed here agree with the base identity.
    let p2 = ConvexSpec::power(2.0).unwrap();
    let q = VerifyOptions { pathway: Pathway::Quad, ..opts(0) };
    let a = verify_general_convex(&m, &d, &u_dom, &Point::on_line(0.3), &u, &p2, &q).unwrap();
    let b = verify_hardy_stein(&m, &d, &u_dom, &Point::on_line(0.3), &u, &p2, &q).unwrap();
    assert!((a.rhs_total.unwrap().value - b.rhs_total.unwrap().value).abs() < 1e-12);
}

#[test]
fn conditional_identity_worked_example() {
    let m = OperatorModel::brownian(1, 1.0);
    let (d, u_dom) = (interval(0.0, 1.0), interval(0.25, 0.75));
    let h = HarmonicFunction::build(&affine(1.0, 0.0), &m, &d).unwrap();
    let u = HarmonicFunction::build(&affine(-1.0, 1.0), &m, &d).unwrap();
    let spec = ConvexSpec::power(2.0).unwrap();
    let x = Point::on_line(0.5);
    let r = verify_conditional(&m, &d, &u_dom, &x, &u, &h, &spec, &opts(20_000)).unwrap();
    assert!(r.passed(), "{r:#?}");
    let (l, rhs) = quad_total(&r);
    assert!((l - 7.0 / 6.0).abs() < 1e-10 && (rhs - 7.0 / 6.0).abs() < 1e-8);
    let same = verify_conditional(&m, &d, &u_dom, &x, &h, &h, &ConvexSpec::power(3.0).unwrap(), &opts(2_000)).unwrap();
    assert!((same.lhs_total.unwrap().value - 0.5).abs() < 1e-10);
}

#[test]
fn brownian_hardy_norms_over_exhaustion() {
    let m = OperatorModel::brownian(1, 1.0);
    let d = interval(-2.0, 2.0);
    let levels = exhaustion(&d, 5).unwrap();
    let u = HarmonicFunction::build(&affine(1.0, 0.0), &m, &d).unwrap();
    let r = hardy_norm(&m, &d, &Point::on_line(0.0), &u, &ConvexSpec::power(2.0).unwrap(), &levels, &opts(10_000)).unwrap();
    assert!(r.passed(), "{r:#?}");
    assert!((r.term("norm", Pathway::Quad).unwrap().value - 4.0).abs() < 1e-9);
    // u(x)² + ∫ G_D(x, z) dz for an affine u off center.
    let v = HarmonicFunction::build(&affine(1.0, 1.0), &m, &d).unwrap();
    let q = VerifyOptions { pathway: Pathway::Quad, ..opts(0) };
    let r = hardy_norm(&m, &d, &Point::on_line(0.5), &v, &ConvexSpec::power(2.0).unwrap(), &levels, &q).unwrap();
    assert!((r.term("norm", Pathway::Quad).unwrap().value - 6.0).abs() < 1e-9);

    let h = HarmonicFunction::build(&affine(1.0, 1.0), &m, &interval(0.0, 1.0)).unwrap();
    let w = HarmonicFunction::build(&affine(-1.0, 1.0), &m, &interval(0.0, 1.0)).unwrap();
    let d1 = interval(0.0, 1.0);
    let lv = exhaustion(&d1, 5).unwrap();
    let r = conditional_hardy_norm(&m, &d1, &Point::on_line(0.5), &w, &h, &ConvexSpec::power(2.0).unwrap(), &lv, &opts(10_000)).unwrap();
    assert!(r.passed(), "{r:#?}");
    assert!((r.term("norm", Pathway::Quad).unwrap().value - 0.5).abs() < 1e-8);
}

#[test]
fn square_function_and_lp_ratio() {
    let m = OperatorModel::brownian(1, 1.0);
    let d = interval(-1.0, 1.0);
    let u = HarmonicFunction::build(&affine(1.0, 0.0), &m, &d).unwrap();
    let q = VerifyOptions { pathway: Pathway::Quad, ..opts(0) };
    let s = square_function(&m, &d, &Point::on_line(0.0), &u, None, &q).unwrap();
    assert!((s.value - 1.0).abs() < 1e-10);
    let r = lp_square_report(&m, &d, &Point::on_line(0.0), &u, None, &[2.0, 3.0], &q).unwrap();
    assert!(r.passed());
    assert!((r.term("ratio_p2", Pathway::Quad).unwrap().value - 1.0).abs() < 1e-9);
    let c = HarmonicFunction::build(&HarmonicSpec::Constant { value: 2.0 }, &m, &d).unwrap();
    assert_eq!(square_function(&m, &d, &Point::on_line(0.3), &c, None, &q).unwrap().value, 0.0);
}

#[test]
fn stable_square_function_is_p2_jump_term() {
    let m = OperatorModel::stable(1, 1.5);
    let d = interval(-2.0, 2.0);
    let u = HarmonicFunction::build(&odd_windows(), &m, &d).unwrap();
    let q = VerifyOptions { pathway: Pathway::Quad, ..opts(0) };
    let x = Point::on_line(0.3);
    let s = square_function(&m, &d, &x, &u, None, &q).unwrap();
    let j = hslab::quadrature::terms::jump_term(&m, &d, &x, &u, &ConvexSpec::power(2.0).unwrap(), q.tol).unwrap();
    assert_eq!(s.squared, j.value);
    let r = lp_square_report(&m, &d, &x, &u, None, &[2.0, 3.0], &q).unwrap();
    assert!(r.passed(), "{r:#?}");
    assert!(r.term("ratio_p2", Pathway::Quad).unwrap().value <= 1.0 + 1e-9);
}

#[test]
fn p1_formula_for_stable_odd_data() {
    let m = OperatorModel::stable(1, 1.5);
    let d = interval(-2.0, 2.0);
    let u = HarmonicFunction::build(&odd_windows(), &m, &d).unwrap();
    let levels = exhaustion(&d, 5).unwrap();
    let q = VerifyOptions { pathway: Pathway::Quad, limit_rel: 0.03, tol: hslab::quadrature::engine::Tolerance::new(1e-9, 1e-8), ..opts(0) };
    let r = p1_example(&m, &d, &Point::on_line(0.0), &u, &levels, &q).unwrap();
    assert!(r.passed(), "{r:#?}");
    assert!(matches!(p1_example(&m, &d, &Point::on_line(0.3), &u, &levels, &q), Err(Error::InvalidSpec(_))));
}

#[test]
fn local_time_characterization_reports() {
    let m = OperatorModel::brownian(1, 1.0);
    let (d, u_dom) = (interval(-2.0, 2.0), interval(-1.0, 1.0));
    let u = HarmonicFunction::build(&affine(1.0, 0.0), &m, &d).unwrap();
    let r = verify_local_time_characterization(&m, &d, &u_dom, &Point::on_line(0.5), &u, 0.0, &opts(20_000)).unwrap();
    assert!(r.passed(), "{r:#?}");
    assert!((r.term("characterization", Pathway::Quad).unwrap().value - 0.5).abs() < 1e-10);
    let off = verify_local_time_characterization(&m, &d, &u_dom, &Point::on_line(0.5), &u, 1.5, &opts(2_000)).unwrap();
    assert!(off.term("characterization", Pathway::Quad).unwrap().value.abs() < 1e-10);
    assert!(off.term("local_time", Pathway::Mc).unwrap().value.abs() < 1e-12);
}
