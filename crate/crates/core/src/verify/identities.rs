use crate::convex::ConvexSpec;
use crate::error::{Error, Result};
use crate::model::geometry::{DomainGeometry, Point};
use crate::model::harmonic::HarmonicFunction;
use crate::model::operator::OperatorModel;
use crate::path::estimators::{
    check_integrable, estimate_local_time, h_transform_moments, jump_bregman_sum, qv_integral, simulate,
    tanaka_local_time, EstimatorResult,
};
use crate::path::sampler::{PathSample, Scheme, SchemeOptions};
use crate::quadrature::engine::QuadratureResult;
use crate::quadrature::terms::{
    conditional_jump_term, conditional_local_term, exit_integral, exterior_breakpoints, jump_term, killing_term,
    local_term, local_time_characterization_rhs, Profile1d, RatioProfile,
};
use crate::verify::report::{optional, Builder, Check, IdentityId, IdentityReport, Pathway, Total, VerifyOptions};

pub(crate) fn check_nested(d: &DomainGeometry, u_dom: &DomainGeometry, x: &Point) -> Result<()> {
    if !u_dom.strictly_inside(d) {
        return Err(Error::InvalidDomain(format!(
            "{} is not compactly contained in {}",
            u_dom.label(),
            d.label()
        )));
    }
    if !u_dom.contains(x) {
        return Err(Error::InvalidDomain(format!("x = {:?} is not in {}", x.0, u_dom.label())));
    }
    Ok(())
}

pub(crate) fn schemes(model: &OperatorModel, u_dom: &DomainGeometry, opts: &SchemeOptions) -> Result<(Scheme, Scheme)> {
    let path = Scheme::for_model(model, u_dom, &SchemeOptions { exact_exit: false, ..*opts })?;
    // Bridge-tested Euler paths already carry the exact exit law on an
    // interval, so one ensemble serves both sides.
    if let Scheme::BrownianInterval { .. } = path {
        return Ok((path.clone(), path));
    }
    let exact = Scheme::for_model(model, u_dom, &SchemeOptions { exact_exit: true, ..*opts })?;
    Ok((exact, path))
}

fn sum(parts: &[&QuadratureResult]) -> QuadratureResult {
    parts.iter().fold(QuadratureResult::zero(), |acc, p| acc.plus(p))
}

fn seed_offset(opts: &VerifyOptions, salt: u64) -> crate::path::McConfig {
    opts.mc.with_seed(opts.mc.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Base Hardy–Stein identity for density-type `φ`.
pub fn verify_hardy_stein(
    model: &OperatorModel,
    d: &DomainGeometry,
    u_dom: &DomainGeometry,
    x: &Point,
    u: &HarmonicFunction,
    spec: &ConvexSpec,
    opts: &VerifyOptions,
) -> Result<IdentityReport> {
    hardy_stein_report(IdentityId::HsBase, model, d, u_dom, x, u, spec, opts)
}

/// Second-moment closure `E u(X_τ)² - u(x)² = ∫ G μ⟨u⟩`.
pub fn martingale_isometry(
    model: &OperatorModel,
    d: &DomainGeometry,
    u_dom: &DomainGeometry,
    x: &Point,
    u: &HarmonicFunction,
    opts: &VerifyOptions,
) -> Result<IdentityReport> {
    hardy_stein_report(IdentityId::MartingaleIso, model, d, u_dom, x, u, &ConvexSpec::Power { p: 2.0 }, opts)
}

#[allow(clippy::too_many_arguments)]
fn hardy_stein_report(
    id: IdentityId,
    model: &OperatorModel,
    d: &DomainGeometry,
    u_dom: &DomainGeometry,
    x: &Point,
    u: &HarmonicFunction,
    spec: &ConvexSpec,
    opts: &VerifyOptions,
) -> Result<IdentityReport> {
    check_nested(d, u_dom, x)?;
    spec.validate()?;
    if !spec.is_density_type() {
        return Err(Error::IncompatibleSpec);
    }
    let k = opts.k;
    let both = opts.pathway == Pathway::Both;
    let mut b = Builder::new(id, x);
    let start = spec.eval(u.eval(x));
    b.exact("start", start);

    let quad = optional(opts.pathway.quad(), both, &mut b, "quadrature", || {
        let lhs = exit_integral(model, u_dom, x, |z| spec.eval(u.eval(z)), &exterior_breakpoints(u), opts.tol)?;
        let local = local_term(model, u_dom, x, u, spec, opts.tol)?;
        let jump = jump_term(model, u_dom, x, u, spec, opts.tol)?;
        let kill = killing_term(model, u_dom, x, u, spec, opts.tol)?;
        Ok((lhs, local, jump, kill))
    })?;
    let mut quad_rhs = None;
    if let Some((lhs, local, jump, kill)) = &quad {
        b.quad("exit", lhs);
        b.quad("local", local);
        b.quad("jump", jump);
        b.quad("killing", kill);
        let rhs = sum(&[&QuadratureResult::exact(start), local, jump, kill]);
        b.checks.push(Check::equal(
            "quad: lhs = rhs",
            lhs.value,
            rhs.value,
            k * (lhs.error_estimate + rhs.error_estimate),
        ));
        b.set_totals(Total::quad(lhs), Total::quad(&rhs));
        quad_rhs = Some(rhs);
    }

    let mc = optional(opts.pathway.mc(), both, &mut b, "monte carlo", || schemes(model, u_dom, &opts.scheme))?;
    if let Some((exact, path)) = mc {
        let a = path.effective_diffusion();
        let jumps = path.records_jumps();
        let rhs_fn = |p: &PathSample, o: &mut [f64]| {
            o[0] = 0.5 * qv_integral(p, u, a, |v| spec.density(v));
            o[1] = if jumps { jump_bregman_sum(p, u, spec) } else { 0.0 };
        };
        let rhs_available = !path.has_jumps() || jumps;
        let (lhs_e, rhs_parts, paired) = if exact == path {
            let m = simulate(&exact, x, &opts.mc, &opts.scheme, 3, |p, o| {
                o[0] = spec.eval(u.eval(&p.exit_point));
                rhs_fn(p, &mut o[1..]);
            })?;
            check_integrable(&m, 0)?;
            let note = exact.bias_note();
            let lhs = EstimatorResult::from_moments(&m, 0, &note);
            let parts = [EstimatorResult::from_moments(&m, 1, &note), EstimatorResult::from_moments(&m, 2, &note)];
            let (diff, se) = m.combination(&[1.0, -1.0, -1.0]);
            (lhs, Some(parts), Some((diff - start, se)))
        } else {
            let m = simulate(&exact, x, &opts.mc, &opts.scheme, 1, |p, o| o[0] = spec.eval(u.eval(&p.exit_point)))?;
            check_integrable(&m, 0)?;
            let lhs = EstimatorResult::from_moments(&m, 0, &exact.bias_note());
            let parts = if opts.mc_rhs && rhs_available {
                let r = simulate(&path, x, &seed_offset(opts, 1), &opts.scheme, 2, rhs_fn)?;
                let note = path.bias_note();
                Some([EstimatorResult::from_moments(&r, 0, &note), EstimatorResult::from_moments(&r, 1, &note)])
            } else {
                None
            };
            (lhs, parts, None)
        };
        b.mc("exit", &lhs_e);
        if let Some([local_e, jump_e]) = &rhs_parts {
            b.mc("local", local_e);
            b.mc("jump", jump_e);
            let rhs = start + local_e.mean + jump_e.mean;
            let (delta, se) = paired.unwrap_or((lhs_e.mean - rhs, lhs_e.stderr + local_e.stderr + jump_e.stderr));
            b.checks.push(Check::equal("mc: lhs = rhs", lhs_e.mean, lhs_e.mean - delta, k * se));
            if let Some((_, local, jump, _)) = &quad {
                if model.killing == 0.0 && !matches!(path, Scheme::Mixed { .. }) {
                    b.checks.push(Check::equal(
                        "local: mc = quad",
                        local_e.mean,
                        local.value,
                        k * local_e.stderr + 2.0 * local.error_estimate,
                    ));
                    b.checks.push(Check::equal(
                        "jump: mc = quad",
                        jump_e.mean,
                        jump.value,
                        k * jump_e.stderr + 2.0 * jump.error_estimate,
                    ));
                }
            }
            b.set_totals(Total::mc(lhs_e.mean, lhs_e.stderr), Total::mc(rhs, local_e.stderr + jump_e.stderr));
        } else {
            b.notes.push("monte carlo right-hand side not assembled for this scheme".into());
        }
        if let Some(rhs) = &quad_rhs {
            b.checks.push(Check::equal(
                "mc lhs = quad rhs",
                lhs_e.mean,
                rhs.value,
                k * (lhs_e.stderr + rhs.error_estimate),
            ));
            if b.lhs.map(|t| t.pathway) != Some(Pathway::Quad) {
                b.set_totals(Total::mc(lhs_e.mean, lhs_e.stderr), Total::quad(rhs));
            }
        } else if b.lhs.is_none() {
            b.lhs = Some(Total::mc(lhs_e.mean, lhs_e.stderr));
        }
    }
    Ok(b.finish(opts))
}

/// General convex identity for one-dimensional Brownian motion: atoms of the
/// curvature measure enter through local times.
pub fn verify_general_convex(
    model: &OperatorModel,
    d: &DomainGeometry,
    u_dom: &DomainGeometry,
    x: &Point,
    u: &HarmonicFunction,
    spec: &ConvexSpec,
    opts: &VerifyOptions,
) -> Result<IdentityReport> {
    if !(model.dim == 1 && model.is_local() && model.killing == 0.0) {
        return Err(Error::UnsupportedModel(
            "general convex identity is verified for one-dimensional Brownian motion".into(),
        ));
    }
    check_nested(d, u_dom, x)?;
    spec.validate()?;
    let k = opts.k;
    let both = opts.pathway == Pathway::Both;
    let atoms = spec.curvature_measure().atoms;
    let mut b = Builder::new(IdentityId::HsGeneral, x);
    let start = spec.eval(u.eval(x));
    b.exact("start", start);
    let lt_name = |a: f64| format!("local_time@{a}");

    let quad = optional(opts.pathway.quad(), both, &mut b, "quadrature", || {
        let lhs = exit_integral(model, u_dom, x, |z| spec.eval(u.eval(z)), &exterior_breakpoints(u), opts.tol)?;
        let density = local_term(model, u_dom, x, u, spec, opts.tol)?;
        let lts = atoms
            .iter()
            .map(|&(a, _)| local_time_characterization_rhs(model, u_dom, x, u, a, opts.tol))
            .collect::<Result<Vec<_>>>()?;
        Ok((lhs, density, lts))
    })?;
    let mut quad_rhs = None;
    if let Some((lhs, density, lts)) = &quad {
        b.quad("exit", lhs);
        b.quad("local", density);
        let mut rhs = sum(&[&QuadratureResult::exact(start), density]);
        for (&(a, mass), lt) in atoms.iter().zip(lts) {
            b.quad(&lt_name(a), lt);
            rhs = rhs.plus(&lt.clone().scaled(0.5 * mass));
        }
        b.checks.push(Check::equal("quad: lhs = rhs", lhs.value, rhs.value, k * (lhs.error_estimate + rhs.error_estimate)));
        b.set_totals(Total::quad(lhs), Total::quad(&rhs));
        quad_rhs = Some(rhs);
    }

    let mc = optional(opts.pathway.mc(), both, &mut b, "monte carlo", || {
        Scheme::for_model(model, u_dom, &opts.scheme)
    })?;
    if let Some(scheme) = mc {
        let a = scheme.effective_diffusion();
        let na = atoms.len();
        let m = simulate(&scheme, x, &opts.mc, &opts.scheme, 2 + na, |p, o| {
            o[0] = spec.eval(u.eval(&p.exit_point));
            o[1] = 0.5 * qv_integral(p, u, a, |v| spec.density(v));
            for (i, &(lvl, _)) in atoms.iter().enumerate() {
                o[2 + i] = tanaka_local_time(p, u, lvl);
            }
        })?;
        let note = format!("{}; tanaka residual", scheme.bias_note());
        let lhs_e = EstimatorResult::from_moments(&m, 0, &note);
        let dens_e = EstimatorResult::from_moments(&m, 1, &note);
        b.mc("exit", &lhs_e);
        b.mc("local", &dens_e);
        let mut coeffs = vec![1.0, -1.0];
        let mut rhs = start + dens_e.mean;
        let mut rhs_se = dens_e.stderr;
        for (i, &(lvl, mass)) in atoms.iter().enumerate() {
            let e = EstimatorResult::from_moments(&m, 2 + i, &note);
            b.mc(&lt_name(lvl), &e);
            coeffs.push(-0.5 * mass);
            rhs += 0.5 * mass * e.mean;
            rhs_se += 0.5 * mass * e.stderr;
            if let Some((_, _, lts)) = &quad {
                let q = &lts[i];
                b.checks.push(Check::equal(
                    format!("{}: mc = quad", lt_name(lvl)),
                    e.mean,
                    q.value,
                    k * e.stderr + 2.0 * q.error_estimate,
                ));
            }
        }
        let (diff, se) = m.combination(&coeffs);
        b.checks.push(Check::equal("mc: lhs = rhs", lhs_e.mean, lhs_e.mean - (diff - start), k * se));
        if let Some(q) = &quad_rhs {
            b.checks.push(Check::equal("mc lhs = quad rhs", lhs_e.mean, q.value, k * (lhs_e.stderr + q.error_estimate)));
        }
        b.set_totals(Total::mc(lhs_e.mean, lhs_e.stderr), Total::mc(rhs, rhs_se));
    }
    Ok(b.finish(opts))
}

fn check_positive_on(h: &HarmonicFunction, u_dom: &DomainGeometry) -> Result<()> {
    let (lo, hi) = u_dom
        .as_interval()
        .ok_or_else(|| Error::InvalidDomain("conditional identities are one-dimensional".into()))?;
    for i in 0..=64 {
        let z = lo + (hi - lo) * i as f64 / 64.0;
        let v = h.eval_1d(z);
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidSpec(format!("h is not positive on the closure of U (h({z}) = {v})")));
        }
    }
    Ok(())
}

/// Conditional identity, verified without dividing by `h(x)`.
#[allow(clippy::too_many_arguments)]
pub fn verify_conditional(
    model: &OperatorModel,
    d: &DomainGeometry,
    u_dom: &DomainGeometry,
    x: &Point,
    u: &HarmonicFunction,
    h: &HarmonicFunction,
    spec: &ConvexSpec,
    opts: &VerifyOptions,
) -> Result<IdentityReport> {
    check_nested(d, u_dom, x)?;
    spec.validate()?;
    if !spec.is_density_type() {
        return Err(Error::IncompatibleSpec);
    }
    if model.killing > 0.0 {
        return Err(Error::UnsupportedModel("conditional identity with killing".into()));
    }
    check_positive_on(h, u_dom)?;
    let k = opts.k;
    let both = opts.pathway == Pathway::Both;
    let ratio = RatioProfile::new(u, h)?;
    let hx = h.eval(x);
    let mut b = Builder::new(IdentityId::HsConditional, x);
    let start = hx * spec.eval(u.eval(x) / hx);
    b.exact("start", start);

    let weighted = |z: &Point| {
        let hz = h.eval(z);
        if hz > 0.0 {
            spec.eval(u.eval(z) / hz) * hz
        } else {
            0.0
        }
    };
    let quad = optional(opts.pathway.quad(), both, &mut b, "quadrature", || {
        let mut bps = exterior_breakpoints(u);
        bps.extend(exterior_breakpoints(h));
        if let Some((lo, hi)) = d.as_interval() {
            bps.extend([lo, hi]);
        }
        let lhs = exit_integral(model, u_dom, x, weighted, &bps, opts.tol)?;
        let local = conditional_local_term(model, u_dom, x, u, h, spec, opts.tol)?;
        let jump = conditional_jump_term(model, u_dom, x, u, h, spec, opts.tol)?;
        Ok((lhs, local, jump))
    })?;
    let mut quad_rhs = None;
    if let Some((lhs, local, jump)) = &quad {
        b.quad("exit", lhs);
        b.quad("local", local);
        b.quad("jump", jump);
        let rhs = sum(&[&QuadratureResult::exact(start), local, jump]);
        b.checks.push(Check::equal("quad: lhs = rhs", lhs.value, rhs.value, k * (lhs.error_estimate + rhs.error_estimate)));
        b.set_totals(Total::quad(lhs), Total::quad(&rhs));
        quad_rhs = Some(rhs);
    }

    let mc = optional(opts.pathway.mc(), both, &mut b, "monte carlo", || schemes(model, u_dom, &opts.scheme))?;
    if let Some((exact, path)) = mc {
        let local_model = !path.has_jumps();
        let scheme = if local_model { &path } else { &exact };
        let a = scheme.effective_diffusion();
        // Additive functionals carry the terminal weight only.
        let (m, ess) = h_transform_moments(scheme, x, &opts.mc, &opts.scheme, h, 2, |p, o| {
            let hz = h.eval(&p.exit_point);
            o[0] = if hz > 0.0 { spec.eval(u.eval(&p.exit_point) / hz) } else { 0.0 };
            o[1] = if local_model { 0.5 * qv_unweighted(p, &ratio, spec, a) } else { 0.0 };
        })?;
        let note = format!("{}; h-weights, ess fraction {ess:.3}", scheme.bias_note());
        let lhs_e = EstimatorResult::from_moments(&m, 0, &note).scaled(hx);
        b.mc("exit", &lhs_e);
        if local_model {
            let local_e = EstimatorResult::from_moments(&m, 1, &note).scaled(hx);
            b.mc("local", &local_e);
            let (diff, se) = m.combination(&[hx, -hx, 0.0]);
            b.checks.push(Check::equal("mc: lhs = rhs", lhs_e.mean, lhs_e.mean - (diff - start), k * se));
            if let Some((_, local, _)) = &quad {
                b.checks.push(Check::equal(
                    "local: mc = quad",
                    local_e.mean,
                    local.value,
                    k * local_e.stderr + 2.0 * local.error_estimate,
                ));
            }
            b.set_totals(Total::mc(lhs_e.mean, lhs_e.stderr), Total::mc(start + local_e.mean, local_e.stderr));
        }
        if let Some(q) = &quad_rhs {
            b.checks.push(Check::equal("mc lhs = quad rhs", lhs_e.mean, q.value, k * (lhs_e.stderr + q.error_estimate)));
        } else if b.lhs.is_none() {
            b.lhs = Some(Total::mc(lhs_e.mean, lhs_e.stderr));
        }
    }
    Ok(b.finish(opts))
}

/// `∫_0^τ g(r(X_s)) a r'(X_s)² ds` for `r = u/h`.
fn qv_unweighted(p: &PathSample, ratio: &RatioProfile<'_>, spec: &ConvexSpec, a: f64) -> f64 {
    let mut total = 0.0;
    for w in p.skeleton.windows(2) {
        let (t0, x0) = w[0];
        let y = x0.x();
        let dr = ratio.derivative(y);
        total += spec.density(ratio.value(y)) * a * dr * dr * (w[1].0 - t0);
    }
    total
}

/// Local-time characterization: the quadrature right-hand side against the
/// Tanaka estimate (one-dimensional Brownian motion) or as a nonnegative
/// potential otherwise.
pub fn verify_local_time_characterization(
    model: &OperatorModel,
    d: &DomainGeometry,
    u_dom: &DomainGeometry,
    x: &Point,
    u: &HarmonicFunction,
    level: f64,
    opts: &VerifyOptions,
) -> Result<IdentityReport> {
    check_nested(d, u_dom, x)?;
    let k = opts.k;
    let both = opts.pathway == Pathway::Both;
    let mut b = Builder::new(IdentityId::LocaltimeChar, x);
    let quad = optional(opts.pathway.quad(), both, &mut b, "quadrature", || {
        local_time_characterization_rhs(model, u_dom, x, u, level, opts.tol)
    })?;
    if let Some(q) = &quad {
        b.quad("characterization", q);
        b.checks.push(Check::at_most("characterization >= 0", -q.value, 0.0, k * q.error_estimate));
        b.rhs = Some(Total::quad(q));
    }
    let brownian_1d = model.dim == 1 && model.is_local() && model.killing == 0.0;
    if opts.pathway.mc() && brownian_1d {
        let scheme = Scheme::for_model(model, u_dom, &opts.scheme)?;
        let e = estimate_local_time(model, &scheme, x, &opts.mc, &opts.scheme, u, level)?;
        b.mc("local_time", &e);
        b.lhs = Some(Total::mc(e.mean, e.stderr));
        if let Some(q) = &quad {
            b.checks.push(Check::equal("mc = quad", e.mean, q.value, k * e.stderr + 2.0 * q.error_estimate));
        }
    } else if opts.pathway.mc() && !both {
        return Err(Error::UnsupportedModel(
            "local-time estimation is limited to one-dimensional Brownian motion".into(),
        ));
    }
    Ok(b.finish(opts))
}
