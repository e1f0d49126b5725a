use serde::Serialize;

use crate::convex::ConvexSpec;
use crate::error::{Error, Result};
use crate::model::geometry::{DomainGeometry, Point};
use crate::model::harmonic::HarmonicFunction;
use crate::model::operator::OperatorModel;
use crate::path::estimators::{check_integrable, h_transform_moments, simulate, EstimatorResult};
use crate::path::sampler::{Scheme, SchemeOptions};
use crate::quadrature::engine::QuadratureResult;
use crate::quadrature::terms::{
    conditional_jump_term, conditional_local_term, exit_integral, exterior_breakpoints, jump_term, killing_term,
    local_term,
};
use crate::verify::identities::check_nested;
use crate::verify::report::{optional, Builder, Check, IdentityId, IdentityReport, Pathway, Total, VerifyOptions};

/// Concentric subdomains with radii `R (1 - 4^{-n})`, `n = 1..=levels`.
pub fn exhaustion(d: &DomainGeometry, levels: usize) -> Result<Vec<DomainGeometry>> {
    let (c, r) = d.center_radius();
    (1..=levels)
        .map(|n| {
            let rn = r * (1.0 - 4f64.powi(-(n as i32)));
            match d {
                DomainGeometry::Interval { .. } => DomainGeometry::interval(c.x() - rn, c.x() + rn),
                DomainGeometry::Ball { center, .. } => DomainGeometry::ball(center, rn),
            }
        })
        .collect()
}

fn check_exhaustion(d: &DomainGeometry, levels: &[DomainGeometry], x: &Point) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::InvalidDomain("exhaustion needs at least one level".into()));
    }
    for w in levels.windows(2) {
        if !w[0].strictly_inside(&w[1]) {
            return Err(Error::InvalidDomain(format!(
                "exhaustion is not increasing: {} vs {}",
                w[0].label(),
                w[1].label()
            )));
        }
    }
    for l in levels {
        check_nested(d, l, x)?;
    }
    Ok(())
}

/// Whether the conditional weight `h` is present.
#[derive(Clone, Copy)]
enum Weight<'a> {
    Plain,
    Doob(&'a HarmonicFunction),
}

struct NormProblem<'a> {
    model: &'a OperatorModel,
    d: &'a DomainGeometry,
    x: Point,
    u: &'a HarmonicFunction,
    spec: &'a ConvexSpec,
    weight: Weight<'a>,
}

impl NormProblem<'_> {
    fn integrand(&self, z: &Point) -> f64 {
        match self.weight {
            Weight::Plain => self.spec.eval(self.u.eval(z)),
            Weight::Doob(h) => {
                let hz = h.eval(z);
                if hz > 0.0 {
                    self.spec.eval(self.u.eval(z) / hz) * hz
                } else {
                    0.0
                }
            }
        }
    }

    fn start(&self) -> f64 {
        match self.weight {
            Weight::Plain => self.spec.eval(self.u.eval(&self.x)),
            Weight::Doob(h) => {
                let hx = h.eval(&self.x);
                hx * self.spec.eval(self.u.eval(&self.x) / hx)
            }
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut bps = exterior_breakpoints(self.u);
        if let Weight::Doob(h) = self.weight {
            bps.extend(exterior_breakpoints(h));
        }
        if let Some((lo, hi)) = self.d.as_interval() {
            bps.extend([lo, hi]);
        }
        bps
    }

    fn exit(&self, dom: &DomainGeometry, opts: &VerifyOptions) -> Result<QuadratureResult> {
        exit_integral(self.model, dom, &self.x, |z| self.integrand(z), &self.breakpoints(), opts.tol)
    }

    /// Right-hand side of the identity over `dom` (`dom = D` gives the norm).
    fn rhs(&self, dom: &DomainGeometry, opts: &VerifyOptions) -> Result<QuadratureResult> {
        let (m, x, u, spec, tol) = (self.model, &self.x, self.u, self.spec, opts.tol);
        let parts = match self.weight {
            Weight::Plain => {
                vec![local_term(m, dom, x, u, spec, tol)?, jump_term(m, dom, x, u, spec, tol)?, killing_term(m, dom, x, u, spec, tol)?]
            }
            Weight::Doob(h) => vec![
                conditional_local_term(m, dom, x, u, h, spec, tol)?,
                conditional_jump_term(m, dom, x, u, h, spec, tol)?,
            ],
        };
        Ok(parts.iter().fold(QuadratureResult::exact(self.start()), |acc, p| acc.plus(p)))
    }

    fn exit_mc(&self, dom: &DomainGeometry, opts: &VerifyOptions, salt: u64) -> Result<EstimatorResult> {
        let scheme = Scheme::for_model(self.model, dom, &SchemeOptions { exact_exit: true, ..opts.scheme })?;
        let cfg = opts.mc.with_seed(opts.mc.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let note = scheme.bias_note();
        match self.weight {
            Weight::Plain => {
                let m = simulate(&scheme, &self.x, &cfg, &opts.scheme, 1, |p, o| o[0] = self.integrand(&p.exit_point))?;
                check_integrable(&m, 0)?;
                Ok(EstimatorResult::from_moments(&m, 0, &note))
            }
            Weight::Doob(h) => {
                let hx = h.eval(&self.x);
                let (m, _) = h_transform_moments(&scheme, &self.x, &cfg, &opts.scheme, h, 1, |p, o| {
                    o[0] = self.integrand(&p.exit_point) / h.eval(&p.exit_point)
                })?;
                Ok(EstimatorResult::from_moments(&m, 0, &note).scaled(hx))
            }
        }
    }
}

fn norm_report(id: IdentityId, prob: &NormProblem<'_>, levels: &[DomainGeometry], opts: &VerifyOptions) -> Result<IdentityReport> {
    check_exhaustion(prob.d, levels, &prob.x)?;
    if !prob.spec.is_density_type() && prob.model.has_diffusion() {
        return Err(Error::IncompatibleSpec);
    }
    let k = opts.k;
    let both = opts.pathway == Pathway::Both;
    let mut b = Builder::new(id, &prob.x);
    b.exact("start", prob.start());

    let quad = optional(opts.pathway.quad(), both, &mut b, "quadrature", || {
        let per_level = levels
            .iter()
            .map(|l| Ok((prob.exit(l, opts)?, prob.rhs(l, opts)?)))
            .collect::<Result<Vec<_>>>()?;
        let norm = prob.rhs(prob.d, opts)?;
        Ok((per_level, norm))
    })?;
    if let Some((per_level, norm)) = &quad {
        for (n, (lhs, rhs)) in per_level.iter().enumerate() {
            b.quad(&format!("exit[{}]", n + 1), lhs);
            b.quad(&format!("rhs[{}]", n + 1), rhs);
            b.checks.push(Check::equal(
                format!("quad level {}: lhs = rhs", n + 1),
                lhs.value,
                rhs.value,
                k * (lhs.error_estimate + rhs.error_estimate),
            ));
        }
        for (n, w) in per_level.windows(2).enumerate() {
            let (a, c) = (&w[0].0, &w[1].0);
            b.checks.push(Check::at_most(
                format!("quad exit nondecreasing {}->{}", n + 1, n + 2),
                a.value,
                c.value,
                a.error_estimate + c.error_estimate,
            ));
            let (a, c) = (&w[0].1, &w[1].1);
            b.checks.push(Check::at_most(
                format!("quad rhs nondecreasing {}->{}", n + 1, n + 2),
                a.value,
                c.value,
                a.error_estimate + c.error_estimate,
            ));
        }
        b.quad("norm", norm);
        let last = &per_level[per_level.len() - 1].0;
        b.checks.push(Check::relative("quad limit = norm", last.value, norm.value, opts.limit_rel));
        b.set_totals(Total::quad(last), Total::quad(norm));
        if let (Weight::Plain, true, Some(_)) = (prob.weight, prob.model.is_local(), prob.d.as_interval()) {
            let exit_d = prob.exit(prob.d, opts)?;
            b.quad("exit_d", &exit_d);
            b.checks.push(Check::equal(
                "quad exit from D = norm",
                exit_d.value,
                norm.value,
                k * (exit_d.error_estimate + norm.error_estimate),
            ));
        }
    }

    if opts.pathway.mc() {
        let mc = optional(true, both, &mut b, "monte carlo", || {
            levels.iter().enumerate().map(|(n, l)| prob.exit_mc(l, opts, n as u64 + 1)).collect::<Result<Vec<_>>>()
        })?;
        if let Some(es) = mc {
            for (n, e) in es.iter().enumerate() {
                b.mc(&format!("exit[{}]", n + 1), e);
                if let Some((per_level, _)) = &quad {
                    let q = &per_level[n].0;
                    b.checks.push(Check::equal(
                        format!("level {}: mc exit = quad rhs", n + 1),
                        e.mean,
                        per_level[n].1.value,
                        k * (e.stderr + q.error_estimate + per_level[n].1.error_estimate),
                    ));
                }
            }
            for (n, w) in es.windows(2).enumerate() {
                b.checks.push(Check::at_most(
                    format!("mc exit nondecreasing {}->{}", n + 1, n + 2),
                    w[0].mean,
                    w[1].mean,
                    w[0].stderr + w[1].stderr,
                ));
            }
            if quad.is_none() {
                if let Weight::Plain = prob.weight {
                    let e = prob.exit_mc(prob.d, opts, 0)?;
                    b.mc("exit_d", &e);
                    let last = &es[es.len() - 1];
                    b.checks.push(Check::relative("mc limit = exit from D", last.mean, e.mean, opts.limit_rel));
                    b.set_totals(Total::mc(last.mean, last.stderr), Total::mc(e.mean, e.stderr));
                }
            }
        }
    }
    Ok(b.finish(opts))
}

/// Hardy norm over an exhaustion, against the `D`-kernel right-hand side.
pub fn hardy_norm(
    model: &OperatorModel,
    d: &DomainGeometry,
    x: &Point,
    u: &HarmonicFunction,
    spec: &ConvexSpec,
    levels: &[DomainGeometry],
    opts: &VerifyOptions,
) -> Result<IdentityReport> {
    spec.validate()?;
    let prob = NormProblem { model, d, x: *x, u, spec, weight: Weight::Plain };
    norm_report(IdentityId::HardyNorm, &prob, levels, opts)
}

/// Conditional Hardy norm `h(x)|u|_{x;h}` over an exhaustion.
#[allow(clippy::too_many_arguments)]
pub fn conditional_hardy_norm(
    model: &OperatorModel,
    d: &DomainGeometry,
    x: &Point,
    u: &HarmonicFunction,
    h: &HarmonicFunction,
    spec: &ConvexSpec,
    levels: &[DomainGeometry],
    opts: &VerifyOptions,
) -> Result<IdentityReport> {
    spec.validate()?;
    if !(h.eval(x) > 0.0) {
        return Err(Error::InvalidSpec("h must be positive at x".into()));
    }
    let prob = NormProblem { model, d, x: *x, u, spec, weight: Weight::Doob(h) };
    norm_report(IdentityId::CondHardyNorm, &prob, levels, opts)
}

/// `φ = |x|` Hardy norm of a harmonic function vanishing at `x` for a pure-jump
/// radial model: the norm is the Green potential of the Bregman jump integral.
pub fn p1_example(
    model: &OperatorModel,
    d: &DomainGeometry,
    x: &Point,
    u: &HarmonicFunction,
    levels: &[DomainGeometry],
    opts: &VerifyOptions,
) -> Result<IdentityReport> {
    if model.has_diffusion() || model.killing > 0.0 || !model.jump.is_radial() {
        return Err(Error::UnsupportedModel("the p = 1 formula needs a pure-jump radial model".into()));
    }
    let ux = u.eval(x);
    if ux.abs() > 1e-12 {
        return Err(Error::InvalidSpec(format!("u(x) must vanish, got {ux:e}")));
    }
    let prob = NormProblem { model, d, x: *x, u, spec: &ConvexSpec::Abs, weight: Weight::Plain };
    norm_report(IdentityId::P1Example, &prob, levels, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SquareFunction {
    /// `𝔮_u(x)` (or `𝔮^h_u(x)`).
    pub value: f64,
    pub squared: f64,
    pub uncertainty: f64,
    pub pathway: Pathway,
}

/// Littlewood–Paley square function `(∫ G_D(x, y) μ⟨u⟩(dy))^{1/2}`, or its
/// conditional version with weight `h(y)/h(x)`.
pub fn square_function(
    model: &OperatorModel,
    d: &DomainGeometry,
    x: &Point,
    u: &HarmonicFunction,
    h: Option<&HarmonicFunction>,
    opts: &VerifyOptions,
) -> Result<SquareFunction> {
    let sq = ConvexSpec::Power { p: 2.0 };
    let tol = opts.tol;
    let quad = || -> Result<QuadratureResult> {
        match h {
            None => Ok(local_term(model, d, x, u, &sq, tol)?
                .plus(&jump_term(model, d, x, u, &sq, tol)?)
                .plus(&killing_term(model, d, x, u, &sq, tol)?)),
            Some(h) => {
                let hx = h.eval(x);
                Ok(conditional_local_term(model, d, x, u, h, &sq, tol)?
                    .plus(&conditional_jump_term(model, d, x, u, h, &sq, tol)?)
                    .scaled(1.0 / hx))
            }
        }
    };
    let fallback = opts.pathway.mc() && h.is_none();
    let r = if opts.pathway.quad() { Some(quad()) } else { None };
    match r {
        Some(Ok(q)) => Ok(SquareFunction {
            value: q.value.max(0.0).sqrt(),
            squared: q.value,
            uncertainty: q.error_estimate,
            pathway: Pathway::Quad,
        }),
        Some(Err(e)) if !(fallback && matches!(e, Error::UnsupportedModelDomain { .. })) => Err(e),
        _ if fallback => {
            let prob = NormProblem { model, d, x: *x, u, spec: &sq, weight: Weight::Plain };
            let e = prob.exit_mc(d, opts, 0x5F)?;
            let squared = e.mean - prob.start();
            Ok(SquareFunction { value: squared.max(0.0).sqrt(), squared, uncertainty: e.stderr, pathway: Pathway::Mc })
        }
        _ => Err(Error::UnsupportedModel("square function needs quadrature for conditional weights".into())),
    }
}

/// Frozen constant of the square-function bound. Burkholder's inequality for
/// `p >= 2` gives `p - 1`; the check uses `p` for margin.
pub fn bdg_constant(p: f64) -> f64 {
    p
}

/// `‖u‖_{H^p_x(D)}` (or its conditional version) from the `D`-kernel
/// right-hand side, or by Monte Carlo exit from `D` when no kernel exists.
pub fn lp_hardy_norm(
    model: &OperatorModel,
    d: &DomainGeometry,
    x: &Point,
    u: &HarmonicFunction,
    h: Option<&HarmonicFunction>,
    p: f64,
    opts: &VerifyOptions,
) -> Result<(f64, f64, Pathway)> {
    let spec = ConvexSpec::power(p)?;
    let weight = h.map_or(Weight::Plain, Weight::Doob);
    let scale = h.map_or(1.0, |h| h.eval(x));
    let prob = NormProblem { model, d, x: *x, u, spec: &spec, weight };
    let fallback = opts.pathway.mc() && h.is_none();
    let q = if opts.pathway.quad() { Some(prob.rhs(d, opts)) } else { None };
    let (value, unc, pathway) = match q {
        Some(Ok(r)) => (r.value / scale, r.error_estimate / scale, Pathway::Quad),
        Some(Err(e)) if !(fallback && matches!(e, Error::UnsupportedModelDomain { .. })) => return Err(e),
        _ if fallback => {
            let e = prob.exit_mc(d, opts, 0x6F)?;
            (e.mean, e.stderr, Pathway::Mc)
        }
        _ => return Err(Error::UnsupportedModel("hardy norm needs a pathway".into())),
    };
    Ok((value.max(0.0).powf(1.0 / p), unc, pathway))
}

/// Square-function bound `𝔮_u(x) <= c_p ‖u‖_{H^p_x(D)}` for each `p`.
pub fn lp_square_report(
    model: &OperatorModel,
    d: &DomainGeometry,
    x: &Point,
    u: &HarmonicFunction,
    h: Option<&HarmonicFunction>,
    ps: &[f64],
    opts: &VerifyOptions,
) -> Result<IdentityReport> {
    if !d.contains(x) {
        return Err(Error::InvalidDomain(format!("x = {:?} is not in {}", x.0, d.label())));
    }
    if ps.iter().any(|&p| !(p >= 2.0)) {
        return Err(Error::InvalidSpec("square-function bounds need p >= 2".into()));
    }
    let mut b = Builder::new(IdentityId::LpSquare, x);
    let q = square_function(model, d, x, u, h, opts)?;
    let q_unc = if q.value > 0.0 { q.uncertainty / (2.0 * q.value) } else { q.uncertainty.sqrt() };
    b.terms.push(crate::verify::report::TermValue {
        term: "square_function".into(),
        pathway: q.pathway,
        value: q.value,
        uncertainty: q_unc,
        note: String::new(),
    });
    for &p in ps {
        let (norm, unc, pathway) = lp_hardy_norm(model, d, x, u, h, p, opts)?;
        b.terms.push(crate::verify::report::TermValue {
            term: format!("norm_p{p}"),
            pathway,
            value: norm,
            uncertainty: unc,
            note: String::new(),
        });
        let ratio = if norm > 0.0 { q.value / norm } else if q.value == 0.0 { 0.0 } else { f64::INFINITY };
        let ratio_unc = if q.value > 0.0 && norm > 0.0 { ratio * (q_unc / q.value).hypot(unc / norm) } else { 0.0 };
        b.terms.push(crate::verify::report::TermValue {
            term: format!("ratio_p{p}"),
            pathway,
            value: ratio,
            uncertainty: ratio_unc,
            note: String::new(),
        });
        b.checks.push(Check::at_most(format!("ratio_p{p} <= c_p"), ratio, bdg_constant(p), opts.k * ratio_unc));
    }
    Ok(b.finish(opts))
}
