use hslab::convex::ConvexSpec;
use hslab::model::harmonic::{BoundaryData, HarmonicFunction, HarmonicSpec, Window};
use hslab::model::kernels::stable_mean_exit_time_1d;
use hslab::model::{DomainGeometry, OperatorModel, Point};
use hslab::quadrature::engine::Tolerance;
use hslab::quadrature::terms::*;

fn tol() -> Tolerance {
    Tolerance::new(1e-11, 1e-10)
}

fn windows(ws: &[(f64, f64, f64)]) -> HarmonicSpec {
    HarmonicSpec::PoissonExtension {
        data: BoundaryData::Windows {
            windows: ws.iter().map(|&(lo, hi, value)| Window { lo, hi, value }).collect(),
        },
    }
}

#[test]
fn green_potential_is_mean_exit_time() {
    let m = OperatorModel::brownian(1, 1.0);
    let u = DomainGeometry::interval(-1.0, 1.0).unwrap();
    for x in [0.0, 0.5] {
        let r = green_integral(&m, &u, &Point::on_line(x), |_| 1.0, tol()).unwrap();
        assert!((r.value - (1.0 - x * x)).abs() < 1e-12);
    }
    let zero = green_integral(&m, &u, &Point::on_line(0.0), |_| 0.0, tol()).unwrap();
    assert_eq!(zero.value, 0.0);
    for dim in [2usize, 3] {
        let sigma2 = 1.5;
        let m = OperatorModel::brownian(dim, sigma2);
        let center = vec![0.2; dim];
        let ball = DomainGeometry::ball(&center, 1.0).unwrap();
        let mut x = Point::from_slice(&center);
        x.0[0] += 0.3;
        let r = green_integral(&m, &ball, &x, |_| 1.0, Tolerance::new(1e-10, 1e-9)).unwrap();
        let want = (1.0 - 0.09) / (dim as f64 * sigma2);
        assert!((r.value - want).abs() < 1e-8, "d={dim}: {} vs {want}", r.value);
    }
}

#[test]
fn stable_green_potential_matches_closed_form_exit_time() {
    for alpha in [0.5, 1.0, 1.5] {
        let m = OperatorModel::stable(1, alpha);
        let u = DomainGeometry::interval(-1.0, 1.0).unwrap();
        for x in [0.0, -0.45] {
            let r = green_integral(&m, &u, &Point::on_line(x), |_| 1.0, tol()).unwrap();
            let want = stable_mean_exit_time_1d(alpha, 1.0, x);
            assert!((r.value - want).abs() < 1e-9 * want, "α={alpha}: {} {want}", r.value);
        }
    }
}

#[test]
fn brownian_base_identity_closes_exactly() {
    let m = OperatorModel::brownian(1, 1.0);
    let d = DomainGeometry::interval(-2.0, 2.0).unwrap();
    let u_dom = DomainGeometry::interval(-1.0, 1.0).unwrap();
    let u = HarmonicFunction::build(&HarmonicSpec::Affine { gradient: vec![1.0], offset: 0.0 }, &m, &d).unwrap();
    let x = Point::on_line(0.0);
    for p in [1.5, 2.0, 3.0] {
        let spec = ConvexSpec::power(p).unwrap();
        let lhs = exit_integral(&m, &u_dom, &x, |z| spec.eval(u.eval(z)), &[], tol()).unwrap();
        let rhs = spec.eval(0.0) + local_term(&m, &u_dom, &x, &u, &spec, tol()).unwrap().value;
        assert!((lhs.value - rhs).abs() < 1e-10, "p={p}: {} {rhs}", lhs.value);
    }
}

#[test]
fn killing_term_matches_ode_solution() {
    // u = A e^{kx} + B e^{-kx}; v = ∫ G κ u² solves v''/2 - κ v = -κ u².
    let kappa: f64 = 0.9;
    let k = (2.0 * kappa).sqrt();
    let m = OperatorModel::brownian(1, 1.0).with_killing(kappa);
    let dom = DomainGeometry::interval(-1.0, 1.0).unwrap();
    let spec = HarmonicSpec::PoissonExtension { data: BoundaryData::TwoPoint { left: 0.5, right: 2.0 } };
    let u = HarmonicFunction::build(&spec, &m, &dom).unwrap();
    // solve for A, B from the endpoint values
    let (e, ei) = (k.exp(), (-k).exp());
    let det = ei * ei - e * e;
    let a = (0.5 * ei - 2.0 * e) / det;
    let b = (2.0 * ei - 0.5 * e) / det;
    let vp = |x: f64| -(a * a * (2.0 * k * x).exp() + b * b * (-2.0 * k * x).exp()) / 3.0 + 2.0 * a * b;
    // homogeneous correction C e^{kx} + D e^{-kx} with v(±1) = 0
    let (l, r) = (-vp(-1.0), -vp(1.0));
    let d2 = ei * ei - e * e;
    let c = (l * ei - r * e) / d2;
    let dd = (r * ei - l * e) / d2;
    let v = |x: f64| vp(x) + c * (k * x).exp() + dd * (-k * x).exp();
    let sq = ConvexSpec::power(2.0).unwrap();
    for x in [-0.4, 0.0, 0.7] {
        let pt = Point::on_line(x);
        let got = killing_term(&m, &dom, &pt, &u, &sq, tol()).unwrap();
        assert!((got.value - v(x)).abs() < 1e-10, "{} vs {}", got.value, v(x));
        // identity with killing for several exponents
        for p in [1.5, 2.0, 3.0] {
            let spec = ConvexSpec::power(p).unwrap();
            let lhs = exit_integral(&m, &dom, &pt, |z| spec.eval(u.eval(z)), &[], tol()).unwrap().value;
            let rhs = spec.eval(u.eval(&pt))
                + local_term(&m, &dom, &pt, &u, &spec, tol()).unwrap().value
                + killing_term(&m, &dom, &pt, &u, &spec, tol()).unwrap().value;
            assert!((lhs - rhs).abs() < 1e-9, "p={p} x={x}: {lhs} {rhs}");
        }
    }
    let none = killing_term(&OperatorModel::brownian(1, 1.0), &dom, &Point::on_line(0.0), &u, &sq, tol()).unwrap();
    assert_eq!(none.value, 0.0);
}

#[test]
fn stable_poisson_mass_and_constant_exit() {
    for alpha in [0.5, 1.0, 1.5] {
        let m = OperatorModel::stable(1, alpha);
        let dom = DomainGeometry::interval(-1.0, 1.0).unwrap();
        for x in [0.0, 0.8] {
            let r = exit_integral(&m, &dom, &Point::on_line(x), |_| 1.0, &[], tol()).unwrap();
            assert!((r.value - 1.0).abs() < 1e-8, "α={alpha} x={x}: {}", r.value);
        }
    }
}

#[test]
fn stable_p2_closure_and_split_independence() {
    let d = DomainGeometry::interval(-2.0, 2.0).unwrap();
    let dom = DomainGeometry::interval(-1.0, 1.0).unwrap();
    let x = Point::on_line(0.0);
    let sq = ConvexSpec::power(2.0).unwrap();
    for alpha in [0.5, 1.0, 1.5] {
        let m = OperatorModel::stable(1, alpha);
        let u = HarmonicFunction::build(&windows(&[(2.5, 4.0, 1.0)]), &m, &d).unwrap();
        let bps = exterior_breakpoints(&u);
        let lhs = exit_integral(&m, &dom, &x, |z| sq.eval(u.eval(z)), &bps, tol()).unwrap();
        let jump = jump_term(&m, &dom, &x, &u, &sq, Tolerance::new(1e-10, 1e-9)).unwrap();
        let u0 = u.eval(&x);
        let gap = lhs.value - u0 * u0 - jump.value;
        assert!(gap.abs() < 1e-7 * lhs.value, "α={alpha}: lhs={} u0²={} jump={}", lhs.value, u0 * u0, jump.value);
        let a = jump_term_split(&m, &dom, &x, &u, &sq, Tolerance::new(1e-10, 1e-9), 0.2).unwrap();
        let b = jump_term_split(&m, &dom, &x, &u, &sq, Tolerance::new(1e-10, 1e-9), 0.1).unwrap();
        assert!((a.value - b.value).abs() <= a.error_estimate + b.error_estimate + 1e-9 * a.value);
    }
}

#[test]
fn tail_divergence_is_reported() {
    let m = OperatorModel::stable(1, 1.5);
    let d = DomainGeometry::interval(-2.0, 2.0).unwrap();
    let dom = DomainGeometry::interval(-1.0, 1.0).unwrap();
    let u = HarmonicFunction::build(&HarmonicSpec::Affine { gradient: vec![1.0], offset: 0.0 }, &m, &d).unwrap();
    let r = jump_term(&m, &dom, &Point::on_line(0.0), &u, &ConvexSpec::power(2.0).unwrap(), tol());
    assert!(matches!(r, Err(hslab::Error::TailDivergence(_))));
    // |u|^p with p·1 < α is admissible
    let ok = jump_term(&m, &dom, &Point::on_line(0.0), &u, &ConvexSpec::power(1.2).unwrap(), Tolerance::new(1e-8, 1e-7));
    assert!(ok.is_ok());
}

#[test]
fn local_time_characterization_brownian() {
    let m = OperatorModel::brownian(1, 1.0);
    let d = DomainGeometry::interval(-2.0, 2.0).unwrap();
    let dom = DomainGeometry::interval(-1.0, 1.0).unwrap();
    let u = HarmonicFunction::build(&HarmonicSpec::Affine { gradient: vec![1.0], offset: 0.0 }, &m, &d).unwrap();
    for (x, want) in [(0.0, 1.0), (0.5, 0.5)] {
        let r = local_time_characterization_rhs(&m, &dom, &Point::on_line(x), &u, 0.0, tol()).unwrap();
        assert!((r.value - want).abs() < 1e-12);
    }
    let r = local_time_characterization_rhs(&m, &dom, &Point::on_line(0.0), &u, 3.0, tol()).unwrap();
    assert!(r.value.abs() < 1e-12);
}

#[test]
fn local_time_characterization_stable_is_nonnegative() {
    let m = OperatorModel::stable(1, 1.5);
    let d = DomainGeometry::interval(-2.0, 2.0).unwrap();
    let dom = DomainGeometry::interval(-1.0, 1.0).unwrap();
    let u = HarmonicFunction::build(&windows(&[(2.5, 4.0, 1.0), (-4.0, -2.5, -1.0)]), &m, &d).unwrap();
    let r = local_time_characterization_rhs(&m, &dom, &Point::on_line(0.1), &u, 0.0, Tolerance::new(1e-9, 1e-8)).unwrap();
    assert!(r.value > -r.error_estimate, "{}", r.value);
}

#[test]
fn conditional_brownian_worked_example() {
    let m = OperatorModel::brownian(1, 1.0);
    let d = DomainGeometry::interval(0.0, 1.0).unwrap();
    let dom = DomainGeometry::interval(0.25, 0.75).unwrap();
    let restricted = |g: f64, o: f64| HarmonicSpec::Restricted { inner: Box::new(HarmonicSpec::Affine { gradient: vec![g], offset: o }) };
    let h = HarmonicFunction::build(&restricted(1.0, 0.0), &m, &d).unwrap();
    let u = HarmonicFunction::build(&restricted(-1.0, 1.0), &m, &d).unwrap();
    let x = Point::on_line(0.5);
    let sq = ConvexSpec::power(2.0).unwrap();
    let lhs = exit_integral(&m, &dom, &x, |z| { let hv = h.eval(z); sq.eval(u.eval(z) / hv) * hv }, &[], tol()).unwrap();
    let local = conditional_local_term(&m, &dom, &x, &u, &h, &sq, tol()).unwrap();
    let rhs = 0.5 * sq.eval(1.0) + local.value;
    assert!((lhs.value - 7.0 / 6.0).abs() < 1e-12);
    assert!((rhs - 7.0 / 6.0).abs() < 1e-9, "{rhs}");
}

#[test]
fn martin_functions_are_harmonic_and_close_conditional_identity() {
    let alpha = 1.5;
    let m = OperatorModel::stable(1, alpha);
    let d = DomainGeometry::interval(-2.0, 2.0).unwrap();
    let dom = DomainGeometry::interval(-1.0, 1.0).unwrap();
    let h = HarmonicFunction::build(&HarmonicSpec::Martin { lower: 1.0, upper: 1.0 }, &m, &d).unwrap();
    let u = HarmonicFunction::build(&HarmonicSpec::Martin { lower: 0.0, upper: 1.0 }, &m, &d).unwrap();
    let bps = [-2.0, 2.0];
    for x in [0.0, 0.4] {
        let pt = Point::on_line(x);
        let mean = exit_integral(&m, &dom, &pt, |z| h.eval(z), &bps, tol()).unwrap();
        assert!((mean.value - h.eval(&pt)).abs() < 1e-7 * h.eval(&pt), "{} {}", mean.value, h.eval(&pt));
    }
    let x = Point::on_line(0.2);
    let sq = ConvexSpec::power(2.0).unwrap();
    let lhs = exit_integral(
        &m,
        &dom,
        &x,
        |z| {
            let hv = h.eval(z);
            if hv == 0.0 { 0.0 } else { sq.eval(u.eval(z) / hv) * hv }
        },
        &bps,
        tol(),
    )
    .unwrap();
    let r0 = u.eval(&x) / h.eval(&x);
    let jump = conditional_jump_term(&m, &dom, &x, &u, &h, &sq, Tolerance::new(1e-10, 1e-9)).unwrap();
    let rhs = h.eval(&x) * r0 * r0 + jump.value;
    assert!((lhs.value - rhs).abs() < 1e-6 * lhs.value, "{} vs {}", lhs.value, rhs);
}
