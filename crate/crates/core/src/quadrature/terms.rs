//! Deterministic evaluation of the integral terms of the Hardy–Stein
//! identities: Green potentials, the Bregman jump integral, killing terms,
//! exit integrals and the local-time characterization.

use std::f64::consts::PI;

use crate::convex::{ConvexSpec, Quadratic};
use crate::error::{Error, Result};
use crate::model::geometry::{DomainGeometry, Point};
use crate::model::harmonic::{Growth, HarmonicFunction, Segment, SegmentValue};
use crate::model::kernels::{brownian_poisson_ball, stable_poisson_1d_regular, KernelFamily};
use crate::model::operator::{JumpKernel, OperatorModel};
use crate::quadrature::engine::{integrate_best, integrate_to_infinity, QuadratureResult, Tolerance};

/// One-dimensional function data entering the jump integral: values,
/// cancellation-free increments, an exterior weight and a segment partition.
pub trait Profile1d {
    fn value(&self, x: f64) -> f64;
    fn increment(&self, x: f64, t: f64) -> f64;
    fn weight(&self, _y: f64) -> f64 {
        1.0
    }
    fn segments(&self) -> Vec<Segment>;
    fn growth(&self) -> Growth;
    fn derivative(&self, x: f64) -> f64;
}

impl Profile1d for HarmonicFunction {
    fn value(&self, x: f64) -> f64 {
        self.eval_1d(x)
    }
    fn increment(&self, x: f64, t: f64) -> f64 {
        self.increment_1d(x, t)
    }
    fn segments(&self) -> Vec<Segment> {
        self.segments_1d()
    }
    fn growth(&self) -> Growth {
        HarmonicFunction::growth(self)
    }
    fn derivative(&self, x: f64) -> f64 {
        self.gradient(&Point::on_line(x)).x()
    }
}

/// `u/h` on `D` with jump weight `h(y)`; both vanish outside `D`.
pub struct RatioProfile<'a> {
    pub u: &'a HarmonicFunction,
    pub h: &'a HarmonicFunction,
    pub lo: f64,
    pub hi: f64,
}

impl<'a> RatioProfile<'a> {
    pub fn new(u: &'a HarmonicFunction, h: &'a HarmonicFunction) -> Result<Self> {
        let (lo, hi) = h
            .domain()
            .as_interval()
            .ok_or_else(|| Error::InvalidDomain("conditional terms are one-dimensional".into()))?;
        Ok(RatioProfile { u, h, lo, hi })
    }

    fn inside(&self, y: f64) -> bool {
        self.lo < y && y < self.hi
    }
}

impl Profile1d for RatioProfile<'_> {
    fn value(&self, x: f64) -> f64 {
        if !self.inside(x) {
            return 0.0;
        }
        self.u.eval_1d(x) / self.h.eval_1d(x)
    }
    fn increment(&self, x: f64, t: f64) -> f64 {
        let (u0, h0) = (self.u.eval_1d(x), self.h.eval_1d(x));
        let (du, dh) = (self.u.increment_1d(x, t), self.h.increment_1d(x, t));
        (du * h0 - u0 * dh) / (h0 * (h0 + dh))
    }
    fn weight(&self, y: f64) -> f64 {
        if self.inside(y) {
            self.h.eval_1d(y)
        } else {
            0.0
        }
    }
    fn segments(&self) -> Vec<Segment> {
        vec![Segment {
            lo: self.lo,
            hi: self.hi,
            value: SegmentValue::Varying,
        }]
    }
    fn growth(&self) -> Growth {
        Growth::Bounded
    }
    fn derivative(&self, x: f64) -> f64 {
        let p = Point::on_line(x);
        let (u, h) = (self.u.eval(&p), self.h.eval(&p));
        (self.u.gradient(&p).x() * h - u * self.h.gradient(&p).x()) / (h * h)
    }
}

fn flagged_sum(parts: &[QuadratureResult]) -> QuadratureResult {
    parts.iter().fold(QuadratureResult::zero(), |acc, p| acc.plus(p))
}

/// Substitution exponent `m` for `t = s^m` that regularizes a diagonal
/// behaviour `t^e`.
fn diagonal_power(exponent: Option<f64>) -> f64 {
    match exponent {
        None => 2.0,
        Some(e) if e < 0.0 => 1.0 / (1.0 + e),
        Some(_) => 1.0,
    }
}

/// `∫_{lo}^{hi} G(x, z) ρ(z) dz` on an interval with exact separations.
fn outer_1d<F: FnMut(f64) -> f64>(
    fam: &KernelFamily,
    x: f64,
    mut rho: F,
    breakpoints: &[f64],
    tol: Tolerance,
) -> (QuadratureResult, bool) {
    let (lo, hi) = fam.domain_interval().expect("interval family");
    let m = diagonal_power(fam.diagonal_exponent());
    let mut parts = Vec::new();
    let mut ok = true;
    for (sign, len) in [(1.0, hi - x), (-1.0, x - lo)] {
        if len <= 0.0 {
            continue;
        }
        let bps: Vec<f64> = breakpoints
            .iter()
            .map(|&b| sign * (b - x))
            .filter(|&t| t > 0.0 && t < len)
            .map(|t| t.powf(1.0 / m))
            .collect();
        let (r, good) = integrate_best(
            |s: f64| {
                let t = s.powf(m);
                let z = x + sign * t;
                let g = fam.green_local_1d(x, t, sign);
                // G vanishes on the boundary; nodes rounding onto it carry no mass.
                if g == 0.0 || !(lo < z && z < hi) {
                    return 0.0;
                }
                g * rho(z) * m * s.powf(m - 1.0)
            },
            0.0,
            len.powf(1.0 / m),
            &bps,
            tol,
        );
        ok &= good;
        parts.push(r);
    }
    let mut out = flagged_sum(&parts);
    if m != 1.0 {
        out = out.flagged(format!("diagonal z = {x} (t = s^{m:.3})"));
    } else {
        out = out.flagged(format!("kink z = {x}"));
    }
    (out, ok)
}

/// `∫_B G(x, z) ρ(z) dz` on a ball in `d = 2, 3` using polar coordinates
/// centered at `x`, which absorbs the diagonal singularity.
fn outer_ball<F: Fn(&Point) -> f64>(fam: &KernelFamily, x: &Point, rho: F, tol: Tolerance) -> (QuadratureResult, bool) {
    let KernelFamily::BrownianBall { dim, center, radius, .. } = *fam else {
        unreachable!()
    };
    let xs = x.sub(&center);
    let reach = |w: &Point| {
        let b = xs.dot(w);
        -b + (b * b + radius * radius - xs.dot(&xs)).sqrt()
    };
    let inner_tol = tol.tighter(10.0);
    let mut ok = true;
    let radial = |w: &Point, ok: &mut bool| {
        let (r, good) = integrate_best(
            |r: f64| {
                let z = x.add_scaled(w, r);
                fam.green(x, &z) * rho(&z) * r.powi(dim as i32 - 1)
            },
            0.0,
            reach(w),
            &[],
            inner_tol,
        );
        *ok &= good;
        r.value
    };
    let mut flag_ok = true;
    let (r, good) = if dim == 2 {
        integrate_best(
            |th: f64| radial(&Point([th.cos(), th.sin(), 0.0]), &mut flag_ok),
            0.0,
            2.0 * PI,
            &[],
            tol,
        )
    } else {
        integrate_best(
            |th: f64| {
                let (st, ct) = th.sin_cos();
                let (r, _) = integrate_best(
                    |ph: f64| radial(&Point([st * ph.cos(), st * ph.sin(), ct]), &mut flag_ok) * st,
                    0.0,
                    2.0 * PI,
                    &[],
                    inner_tol,
                );
                r.value
            },
            0.0,
            PI,
            &[],
            tol,
        )
    };
    ok &= good && flag_ok;
    (r.flagged(format!("polar coordinates centered at x (d = {dim})")), ok)
}

fn check_point(domain: &DomainGeometry, x: &Point) -> Result<()> {
    if !domain.contains(x) {
        return Err(Error::InvalidSpec(format!("x = {:?} is not in {}", x.0, domain.label())));
    }
    Ok(())
}

fn finish(r: QuadratureResult, ok: bool, tol: Tolerance) -> Result<QuadratureResult> {
    if !ok {
        return Err(Error::MaxSubdivisions {
            subdivisions: r.subdivisions,
            error: r.error_estimate,
            tolerance: tol.abs.max(tol.rel * r.value.abs()),
        });
    }
    Ok(r)
}

/// `∫_U G_U(x, z) ρ(z) dz`.
pub fn green_integral<F: Fn(&Point) -> f64>(
    model: &OperatorModel,
    domain: &DomainGeometry,
    x: &Point,
    rho: F,
    tol: Tolerance,
) -> Result<QuadratureResult> {
    green_integral_with_breaks(model, domain, x, rho, &[], tol)
}

pub fn green_integral_with_breaks<F: Fn(&Point) -> f64>(
    model: &OperatorModel,
    domain: &DomainGeometry,
    x: &Point,
    rho: F,
    breakpoints: &[f64],
    tol: Tolerance,
) -> Result<QuadratureResult> {
    let fam = KernelFamily::resolve(model, domain)?;
    check_point(domain, x)?;
    let (r, ok) = match fam {
        KernelFamily::BrownianBall { .. } => outer_ball(&fam, x, rho, tol),
        _ => outer_1d(&fam, x.x(), |z| rho(&Point::on_line(z)), breakpoints, tol),
    };
    finish(r, ok, tol)
}

/// `(a∇u, ∇u)` at `z`.
pub fn energy_density(model: &OperatorModel, u: &HarmonicFunction, z: &Point) -> f64 {
    if model.diffusion.is_zero() {
        return 0.0;
    }
    let g = u.gradient(z);
    model.diffusion.quadratic_form(model.dim, &g)
}

/// `½ ∫_U G_U(x, z) g(u(z)) (a∇u, ∇u)(z) dz`.
pub fn local_term(
    model: &OperatorModel,
    domain: &DomainGeometry,
    x: &Point,
    u: &HarmonicFunction,
    spec: &ConvexSpec,
    tol: Tolerance,
) -> Result<QuadratureResult> {
    if model.diffusion.is_zero() {
        return Ok(QuadratureResult::zero());
    }
    let breaks = spec_level_breaks_1d(spec, u, domain);
    let r = green_integral_with_breaks(
        model,
        domain,
        x,
        |z| spec.density(u.eval(z)) * energy_density(model, u, z),
        &breaks,
        tol,
    )?;
    Ok(r.scaled(0.5))
}

/// `½ ∫_U G_U(x, z) h(z) g((u/h)(z)) (a∇(u/h), ∇(u/h))(z) dz`.
pub fn conditional_local_term(
    model: &OperatorModel,
    domain: &DomainGeometry,
    x: &Point,
    u: &HarmonicFunction,
    h: &HarmonicFunction,
    spec: &ConvexSpec,
    tol: Tolerance,
) -> Result<QuadratureResult> {
    if model.diffusion.is_zero() {
        return Ok(QuadratureResult::zero());
    }
    let ratio = RatioProfile::new(u, h)?;
    let a = model.diffusion.entry(0, 0);
    let r = green_integral(
        model,
        domain,
        x,
        |z| {
            let y = z.x();
            let d = ratio.derivative(y);
            h.eval_1d(y) * spec.density(ratio.value(y)) * a * d * d
        },
        tol,
    )?;
    Ok(r.scaled(0.5))
}

/// Points of `U` where `u` crosses a kink of `φ`.
fn spec_level_breaks_1d(spec: &ConvexSpec, u: &HarmonicFunction, domain: &DomainGeometry) -> Vec<f64> {
    let levels: Vec<f64> = match spec {
        ConvexSpec::Piecewise { breakpoints, .. } => breakpoints.clone(),
        ConvexSpec::Abs => vec![0.0],
        ConvexSpec::Power { p } if *p < 2.0 => vec![0.0],
        _ => vec![],
    };
    let Some((lo, hi)) = domain.as_interval() else { return vec![] };
    let mut out = Vec::new();
    let n = 64;
    for i in 0..n {
        let (a, b) = (lo + (hi - lo) * i as f64 / n as f64, lo + (hi - lo) * (i + 1) as f64 / n as f64);
        for &lev in &levels {
            let (fa, fb) = (u.eval_1d(a) - lev, u.eval_1d(b) - lev);
            if fa * fb < 0.0 {
                let (mut l, mut r) = (a, b);
                for _ in 0..80 {
                    let m = 0.5 * (l + r);
                    if (u.eval_1d(m) - lev) * fa > 0.0 {
                        l = m;
                    } else {
                        r = m;
                    }
                }
                out.push(0.5 * (l + r));
            }
        }
    }
    out
}

/// `2 J(z, y)` in one dimension.
fn two_j(model: &OperatorModel, z: f64, y: f64) -> f64 {
    two_j_sep(model, z, y, (y - z).abs())
}

/// `2 J(z, y)` with the separation `|y - z| = t` supplied exactly.
fn two_j_sep(model: &OperatorModel, z: f64, y: f64, t: f64) -> f64 {
    match model.jump {
        JumpKernel::VariableStable { alpha, base, amplitude } => {
            2.0 * (base + amplitude * (z + y).cos()) * t.powf(-1.0 - alpha)
        }
        _ => model.levy_density(t),
    }
}

/// `∫_{lo}^{hi} 2J(z, y) dy` for `z` outside `[lo, hi]`.
fn kernel_mass(model: &OperatorModel, z: f64, lo: f64, hi: f64, tol: Tolerance) -> f64 {
    let (near, far) = if z <= lo { (lo - z, hi - z) } else { (z - hi, z - lo) };
    if near <= 0.0 {
        return f64::INFINITY;
    }
    match model.jump {
        JumpKernel::VariableStable { .. } => {
            let f = |y: f64| two_j(model, z, y);
            if hi.is_infinite() {
                integrate_to_infinity(f, lo, tol).0.value
            } else if lo.is_infinite() {
                integrate_to_infinity(|s: f64| two_j(model, z, -s), -hi, tol).0.value
            } else {
                integrate_best(f, lo, hi, &[], tol).0.value
            }
        }
        _ => {
            let tail = |t: f64| if t.is_infinite() { 0.0 } else { model.tail_mass_1d(t) };
            tail(near) - tail(far)
        }
    }
}

fn bregman_growth(spec: &ConvexSpec) -> f64 {
    match spec {
        ConvexSpec::Power { p } => *p,
        ConvexSpec::Abs => 1.0,
        ConvexSpec::Piecewise { pieces, .. } => {
            let ends = [pieces.first().unwrap(), pieces.last().unwrap()];
            if ends.iter().any(|q: &&Quadratic| q.c2 != 0.0) {
                2.0
            } else {
                1.0
            }
        }
    }
}

/// Rejects `(φ, u)` whose Bregman integrand outgrows the kernel tail.
pub fn check_tail(model: &OperatorModel, spec: &ConvexSpec, growth: Growth) -> Result<()> {
    if matches!(model.jump, JumpKernel::Tempered { .. }) || growth == Growth::Bounded {
        return Ok(());
    }
    let alpha = model.jump.alpha().unwrap_or(2.0);
    let rate = growth.exponent() * bregman_growth(spec);
    if rate >= alpha {
        return Err(Error::TailDivergence(format!(
            "F_φ(u(z), u(y)) grows like |y|^{rate} against a |y|^(-1-{alpha}) kernel tail"
        )));
    }
    Ok(())
}

/// Default near-field radius of the inner jump integral.
pub const DEFAULT_SPLIT: f64 = 0.25;

/// Inner Bregman integral `∫ F_φ(r(z), r(y)) w(y) 2J(z, y) dy`.
fn jump_inner<P: Profile1d + ?Sized>(
    model: &OperatorModel,
    profile: &P,
    segments: &[Segment],
    spec: &ConvexSpec,
    z: f64,
    split: f64,
    tol: Tolerance,
) -> (f64, f64, bool) {
    let alpha = model.jump.alpha().unwrap_or(1.0);
    let a = profile.value(z);
    let m = 1.0 / (2.0 - alpha);
    let mut total = 0.0;
    let mut err = 0.0;
    let mut ok = true;
    let integrand = |y: f64| {
        let w = profile.weight(y);
        if w == 0.0 {
            return 0.0;
        }
        spec.bregman_increment(a, profile.increment(z, y - z)) * w * two_j(model, z, y)
    };
    let mut numeric: Vec<(QuadratureResult, bool)> = Vec::new();
    for seg in segments {
        match seg.value {
            SegmentValue::Constant(v) => {
                if seg.lo < z && z < seg.hi {
                    continue;
                }
                // constant segments only come from unweighted profiles
                let f = spec.bregman(a, v);
                if f != 0.0 {
                    total += f * kernel_mass(model, z, seg.lo, seg.hi, tol);
                }
            }
            SegmentValue::Varying => {
                let far = |lo: f64, hi: f64| -> (QuadratureResult, bool) {
                    if lo.is_infinite() {
                        integrate_to_infinity(|s: f64| integrand(-s), -hi, tol)
                    } else if hi.is_infinite() {
                        integrate_to_infinity(integrand, lo, tol)
                    } else {
                        integrate_best(integrand, lo, hi, &[], tol)
                    }
                };
                if seg.lo < z && z < seg.hi {
                    let delta = (0.5 * (z - seg.lo)).min(0.5 * (seg.hi - z)).min(split);
                    for sign in [1.0, -1.0] {
                        numeric.push(integrate_best(
                            |s: f64| {
                                let t = s.powf(m);
                                let y = z + sign * t;
                                let w = profile.weight(y);
                                if t == 0.0 || w == 0.0 {
                                    return 0.0;
                                }
                                let f = spec.bregman_increment(a, profile.increment(z, sign * t));
                                f * w * two_j_sep(model, z, y, t) * m * s.powf(m - 1.0)
                            },
                            0.0,
                            delta.powf(1.0 / m),
                            &[],
                            tol,
                        ));
                    }
                    numeric.push(far(seg.lo, z - delta));
                    numeric.push(far(z + delta, seg.hi));
                } else {
                    numeric.push(far(seg.lo, seg.hi));
                }
            }
        }
    }
    for (r, good) in numeric {
        total += r.value;
        err += r.error_estimate;
        ok &= good;
    }
    (total, err, ok)
}

fn jump_outer<P: Profile1d + ?Sized>(
    model: &OperatorModel,
    domain: &DomainGeometry,
    x: &Point,
    profile: &P,
    spec: &ConvexSpec,
    split: f64,
    tol: Tolerance,
) -> Result<QuadratureResult> {
    if !model.has_jumps() {
        return Ok(QuadratureResult::zero());
    }
    if model.dim != 1 {
        return Err(Error::UnsupportedModelDomain {
            model: model.label(),
            domain: domain.label(),
        });
    }
    check_tail(model, spec, profile.growth())?;
    let fam = KernelFamily::resolve(model, domain)?;
    check_point(domain, x)?;
    let segments = profile.segments();
    let inner_tol = tol;
    let mut inner_ok = true;
    let mut inner_rel: f64 = 0.0;
    let (r, ok) = outer_1d(
        &fam,
        x.x(),
        |z| {
            let (v, e, good) = jump_inner(model, profile, &segments, spec, z, split, inner_tol);
            inner_ok &= good;
            if v.abs() > 0.0 {
                inner_rel = inner_rel.max(e / v.abs());
            }
            v
        },
        &[],
        tol,
    );
    let mut r = r.flagged("near diagonal y = z (t = s^(1/(2-α)))");
    r.error_estimate += inner_rel.min(1.0) * r.value.abs();
    finish(r, ok && inner_ok, tol)
}

/// `2 ∫_U G_U(x, z) ∫ F_φ(u(z), u(y)) J(z, y) dy dz`.
pub fn jump_term(
    model: &OperatorModel,
    domain: &DomainGeometry,
    x: &Point,
    u: &HarmonicFunction,
    spec: &ConvexSpec,
    tol: Tolerance,
) -> Result<QuadratureResult> {
    jump_outer(model, domain, x, u, spec, DEFAULT_SPLIT, tol)
}

/// `jump_term` with an explicit near-field radius `split`.
pub fn jump_term_split(
    model: &OperatorModel,
    domain: &DomainGeometry,
    x: &Point,
    u: &HarmonicFunction,
    spec: &ConvexSpec,
    tol: Tolerance,
    split: f64,
) -> Result<QuadratureResult> {
    jump_outer(model, domain, x, u, spec, split, tol)
}

/// `2 ∫_U G_U(x, z) ∫ F_φ((u/h)(z), (u/h)(y)) h(y) J(z, y) dy dz`.
pub fn conditional_jump_term(
    model: &OperatorModel,
    domain: &DomainGeometry,
    x: &Point,
    u: &HarmonicFunction,
    h: &HarmonicFunction,
    spec: &ConvexSpec,
    tol: Tolerance,
) -> Result<QuadratureResult> {
    let ratio = RatioProfile::new(u, h)?;
    jump_outer(model, domain, x, &ratio, spec, DEFAULT_SPLIT, tol)
}

/// `∫_U G_U(x, z) F_φ(u(z), 0) κ dz`.
pub fn killing_term(
    model: &OperatorModel,
    domain: &DomainGeometry,
    x: &Point,
    u: &HarmonicFunction,
    spec: &ConvexSpec,
    tol: Tolerance,
) -> Result<QuadratureResult> {
    if model.killing == 0.0 {
        return Ok(QuadratureResult::zero());
    }
    let kappa = model.killing;
    green_integral(model, domain, x, |z| spec.bregman(u.eval(z), 0.0) * kappa, tol)
}

/// `∫_{U^c} f(z) P_U(x, dz)`; `breakpoints` mark discontinuities or kinks of
/// `f` in the exterior (one dimension).
pub fn exit_integral<F: Fn(&Point) -> f64>(
    model: &OperatorModel,
    domain: &DomainGeometry,
    x: &Point,
    f: F,
    breakpoints: &[f64],
    tol: Tolerance,
) -> Result<QuadratureResult> {
    let fam = KernelFamily::resolve(model, domain)?;
    check_point(domain, x)?;
    match fam {
        KernelFamily::BrownianInterval { sigma2, kappa, lo, hi } => {
            let (pl, ph) = crate::model::kernels::brownian_exit_masses_1d(sigma2, kappa, lo, hi, x.x());
            let v = pl * f(&Point::on_line(lo)) + ph * f(&Point::on_line(hi));
            Ok(QuadratureResult::exact(v).flagged("two-point exit law"))
        }
        KernelFamily::BrownianBall { dim, center, radius, .. } => {
            let on_sphere = |w: Point| center.add_scaled(&w, radius);
            let (r, ok) = if dim == 2 {
                integrate_best(
                    |th: f64| {
                        let z = on_sphere(Point([th.cos(), th.sin(), 0.0]));
                        f(&z) * brownian_poisson_ball(2, &center, radius, x, &z) * radius
                    },
                    0.0,
                    2.0 * PI,
                    &[],
                    tol,
                )
            } else {
                let mut inner_ok = true;
                let (r, ok) = integrate_best(
                    |th: f64| {
                        let (st, ct) = th.sin_cos();
                        let (r, good) = integrate_best(
                            |ph: f64| {
                                let z = on_sphere(Point([st * ph.cos(), st * ph.sin(), ct]));
                                f(&z) * brownian_poisson_ball(3, &center, radius, x, &z) * radius * radius * st
                            },
                            0.0,
                            2.0 * PI,
                            &[],
                            tol.tighter(10.0),
                        );
                        inner_ok &= good;
                        r.value
                    },
                    0.0,
                    PI,
                    &[],
                    tol,
                );
                (r, ok && inner_ok)
            };
            finish(r, ok, tol)
        }
        KernelFamily::StableInterval { alpha, center, rho, .. } => {
            let xi = x.x() - center;
            let q = 1.0 / (1.0 - 0.5 * alpha);
            let mut parts = Vec::new();
            let mut ok = true;
            for sign in [1.0, -1.0] {
                let bps: Vec<f64> = breakpoints
                    .iter()
                    .map(|&b| sign * (b - center) - rho)
                    .filter(|&t| t > 0.0 && t.is_finite())
                    .map(|t| t.powf(1.0 / q))
                    .collect();
                let integrand = |s: f64| {
                    let t = s.powf(q);
                    let z = center + sign * (rho + t);
                    let v = f(&Point::on_line(z));
                    if v == 0.0 {
                        return 0.0;
                    }
                    q * v * stable_poisson_1d_regular(alpha, rho, sign * xi, t)
                };
                let last = bps.iter().cloned().fold(0.0f64, f64::max).max(1.0);
                let (near, g1) = integrate_best(integrand, 0.0, last, &bps, tol);
                let (tail, g2) = integrate_to_infinity(integrand, last, tol);
                ok &= g1 && g2;
                parts.push(near);
                parts.push(tail);
            }
            let r = flagged_sum(&parts).flagged("boundary singularity |z| = ρ (t = s^(1/(1-α/2)))");
            finish(r, ok, tol)
        }
    }
}

/// Exterior breakpoints of `u` relevant for exit integrals.
pub fn exterior_breakpoints(u: &HarmonicFunction) -> Vec<f64> {
    let mut out = Vec::new();
    for s in u.segments_1d() {
        for e in [s.lo, s.hi] {
            if e.is_finite() {
                out.push(e);
            }
        }
    }
    out
}

/// Right-hand side of the local-time characterization:
/// `∫|u(z) - a| P_U(x, dz) - |u(x) - a| - R^U j_a(x)`.
pub fn local_time_characterization_rhs(
    model: &OperatorModel,
    domain: &DomainGeometry,
    x: &Point,
    u: &HarmonicFunction,
    level: f64,
    tol: Tolerance,
) -> Result<QuadratureResult> {
    let phi = ConvexSpec::Piecewise {
        breakpoints: vec![level],
        pieces: vec![
            Quadratic { c0: level, c1: -1.0, c2: 0.0 },
            Quadratic { c0: -level, c1: 1.0, c2: 0.0 },
        ],
    };
    let exit = exit_integral(model, domain, x, |z| (u.eval(z) - level).abs(), &exterior_breakpoints(u), tol)?;
    let jump = jump_term(model, domain, x, u, &phi, tol)?;
    let kill = killing_term(model, domain, x, u, &phi, tol)?;
    let start = (u.eval(x) - level).abs();
    Ok(exit.plus(&jump.scaled(-1.0)).plus(&kill.scaled(-1.0)).plus(&QuadratureResult::exact(-start)))
}

/// Checks an integral by rerunning it at half the tolerance.
pub fn stable_under_refinement<F: Fn(Tolerance) -> Result<QuadratureResult>>(f: F, tol: Tolerance) -> Result<bool> {
    let a = f(tol)?;
    let b = f(tol.tighter(2.0))?;
    Ok((a.value - b.value).abs() <= 2.0 * a.error_estimate.max(b.error_estimate) + 4.0 * f64::EPSILON * a.value.abs())
}

