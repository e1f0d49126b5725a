//! Exit-path samplers for the model catalog.

use rand::Rng;
use rand_distr::{Beta, Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::model::geometry::{DomainGeometry, Point};
use crate::model::operator::{stable_constant, JumpKernel, OperatorModel};

/// One simulated path up to the first exit from `U`.
#[derive(Debug, Clone, Default)]
pub struct PathSample {
    pub exit_point: Point,
    pub exit_time: f64,
    /// Time-ordered `(t, X_t)`; the last entry is `(exit_time, exit_point)`.
    pub skeleton: Vec<(f64, Point)>,
    /// `(s, X_{s-}, X_s)` for every simulated jump, including the exit jump.
    pub jumps: Vec<(f64, Point, Point)>,
    /// Whether the path left `U` continuously (landing on `∂U`).
    pub boundary_exit: bool,
    /// Cemetery marker; never set while simulation excludes killing.
    pub killed: bool,
}

impl PathSample {
    pub fn clear(&mut self) {
        self.skeleton.clear();
        self.jumps.clear();
        self.exit_time = 0.0;
        self.boundary_exit = false;
        self.killed = false;
    }

    fn push(&mut self, t: f64, x: Point) {
        self.skeleton.push((t, x));
    }

    fn finish(&mut self, t: f64, x: Point, boundary: bool) {
        self.exit_time = t;
        self.exit_point = x;
        self.boundary_exit = boundary;
        self.skeleton.push((t, x));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemeOptions {
    /// Time step of Euler-type schemes.
    pub step: f64,
    /// Small-jump threshold; `None` picks the variance rule.
    pub delta_j: Option<f64>,
    /// Walk-on-spheres stopping shell relative to the radius.
    pub eps_wos: f64,
    /// Prefer an exact exit-law sampler when one exists.
    pub exact_exit: bool,
    /// Step budget per path.
    pub max_steps: u64,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        SchemeOptions {
            step: 1e-3,
            delta_j: None,
            eps_wos: 1e-6,
            exact_exit: false,
            max_steps: 50_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum JumpLaw {
    Stable { alpha: f64, scale: f64 },
    Tempered { alpha: f64, scale: f64, lambda: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Scheme {
    /// Euler skeleton with a Brownian-bridge crossing test.
    BrownianInterval { sigma2: f64, lo: f64, hi: f64, step: f64 },
    /// Euler skeleton in a ball with the locally planar bridge test.
    BrownianBallEuler { sigma2: f64, center: Point, radius: f64, dim: usize, step: f64 },
    /// Walk on spheres in one dimension: exact exit law, mean-time clock.
    BrownianIntervalWos { sigma2: f64, lo: f64, hi: f64 },
    /// Walk on spheres.
    BrownianBallWos { sigma2: f64, center: Point, radius: f64, dim: usize, eps: f64 },
    /// Exact stable increments on a time grid.
    StableSkeleton { alpha: f64, intensity: f64, lo: f64, hi: f64, step: f64 },
    /// Exact-in-law stable exit via nested intervals.
    StableWos { alpha: f64, intensity: f64, lo: f64, hi: f64 },
    /// Diffusion plus jumps: Gaussian small jumps below `delta`, compound
    /// Poisson big jumps.
    Mixed { sigma2: f64, small_var: f64, delta: f64, law: JumpLaw, lo: f64, hi: f64, step: f64 },
}

impl Scheme {
    pub fn for_model(model: &OperatorModel, domain: &DomainGeometry, opts: &SchemeOptions) -> Result<Self> {
        model.validate()?;
        domain.validate()?;
        if model.killing > 0.0 {
            return Err(Error::UnsupportedModel("simulation with killing".into()));
        }
        if model.dim != domain.dim() {
            return Err(Error::IncompatibleSpec);
        }
        let interval = domain.as_interval();
        match (&model.jump, model.diffusion.is_zero()) {
            (JumpKernel::None, _) => {
                let sigma2 = model
                    .brownian_scale()
                    .ok_or_else(|| Error::UnsupportedModel("anisotropic diffusion".into()))?;
                if let Some((lo, hi)) = interval {
                    return Ok(if opts.exact_exit {
                        Scheme::BrownianIntervalWos { sigma2, lo, hi }
                    } else {
                        Scheme::BrownianInterval { sigma2, lo, hi, step: opts.step }
                    });
                }
                let (center, radius) = domain.center_radius();
                let dim = domain.dim();
                if opts.exact_exit {
                    Ok(Scheme::BrownianBallWos { sigma2, center, radius, dim, eps: opts.eps_wos * radius })
                } else {
                    Ok(Scheme::BrownianBallEuler { sigma2, center, radius, dim, step: opts.step })
                }
            }
            (JumpKernel::VariableStable { .. }, _) => Err(Error::UnsupportedModel(
                "variable-coefficient kernels are quadrature-only".into(),
            )),
            (jump, no_diffusion) => {
                let (lo, hi) = interval.ok_or_else(|| Error::UnsupportedModelDomain {
                    model: model.label(),
                    domain: domain.label(),
                })?;
                if let (JumpKernel::Stable { alpha, intensity }, true) = (jump, no_diffusion) {
                    return Ok(if opts.exact_exit {
                        Scheme::StableWos { alpha: *alpha, intensity: *intensity, lo, hi }
                    } else {
                        Scheme::StableSkeleton { alpha: *alpha, intensity: *intensity, lo, hi, step: opts.step }
                    });
                }
                let sigma2 = if no_diffusion {
                    0.0
                } else {
                    model
                        .diffusion
                        .isotropic_scale(1)
                        .ok_or_else(|| Error::UnsupportedModel("diffusion".into()))?
                };
                let law = match *jump {
                    JumpKernel::Stable { alpha, intensity } => JumpLaw::Stable { alpha, scale: intensity },
                    JumpKernel::Tempered { alpha, intensity, lambda } => JumpLaw::Tempered { alpha, scale: intensity, lambda },
                    _ => unreachable!(),
                };
                let delta = match opts.delta_j {
                    Some(d) => d,
                    None => default_delta_j(model, sigma2),
                };
                Ok(Scheme::Mixed {
                    sigma2,
                    small_var: model.small_jump_variance_1d(delta),
                    delta,
                    law,
                    lo,
                    hi,
                    step: opts.step,
                })
            }
        }
    }

    /// Notes on scheme bias controls, reported with estimates.
    pub fn bias_note(&self) -> String {
        match self {
            Scheme::BrownianInterval { step, .. } => format!("euler h={step:e}, bridge crossing test; exit at boundary"),
            Scheme::BrownianBallEuler { step, .. } => format!("euler h={step:e}, planar bridge crossing test"),
            Scheme::BrownianIntervalWos { .. } => "walk-on-spheres exit law; exit time = sum of mean interval times".to_string(),
            Scheme::BrownianBallWos { eps, .. } => format!("walk-on-spheres eps={eps:e}; exit time = sum of mean sphere times"),
            Scheme::StableSkeleton { step, .. } => format!("exact stable increments h={step:e}; skeleton exit"),
            Scheme::StableWos { .. } => "exact exit law by nested intervals".to_string(),
            Scheme::Mixed { step, delta, small_var, .. } => {
                format!("euler h={step:e}, delta_J={delta:e} (gaussian small-jump variance {small_var:.3e})")
            }
        }
    }

    /// Diffusion coefficient seen by continuous parts of the scheme
    /// (includes the Gaussian replacement of small jumps).
    pub fn effective_diffusion(&self) -> f64 {
        match self {
            Scheme::BrownianInterval { sigma2, .. }
            | Scheme::BrownianIntervalWos { sigma2, .. }
            | Scheme::BrownianBallEuler { sigma2, .. }
            | Scheme::BrownianBallWos { sigma2, .. } => *sigma2,
            Scheme::Mixed { sigma2, small_var, .. } => sigma2 + small_var,
            _ => 0.0,
        }
    }

    pub fn has_jumps(&self) -> bool {
        matches!(self, Scheme::StableSkeleton { .. } | Scheme::StableWos { .. } | Scheme::Mixed { .. })
    }

    /// Whether jump records carry the true `(X_{s-}, X_s)` pairs.
    pub fn records_jumps(&self) -> bool {
        matches!(self, Scheme::StableSkeleton { .. } | Scheme::Mixed { .. })
    }

    pub fn sample<R: Rng + ?Sized>(&self, x: &Point, rng: &mut R, out: &mut PathSample, max_steps: u64) -> Result<()> {
        out.clear();
        match self {
            Scheme::BrownianInterval { sigma2, lo, hi, step } => brownian_interval(*sigma2, *lo, *hi, *step, x.x(), rng, out, max_steps),
            Scheme::BrownianBallEuler { sigma2, center, radius, dim, step } => {
                brownian_ball_euler(*sigma2, center, *radius, *dim, *step, x, rng, out, max_steps)
            }
            Scheme::BrownianIntervalWos { sigma2, lo, hi } => interval_wos(*sigma2, *lo, *hi, x.x(), rng, out, max_steps),
            Scheme::BrownianBallWos { sigma2, center, radius, dim, eps } => {
                brownian_wos(*sigma2, center, *radius, *dim, *eps, x, rng, out, max_steps)
            }
            Scheme::StableSkeleton { alpha, intensity, lo, hi, step } => {
                stable_skeleton(*alpha, *intensity, *lo, *hi, *step, x.x(), rng, out, max_steps)
            }
            Scheme::StableWos { alpha, intensity, lo, hi } => stable_wos(*alpha, *intensity, *lo, *hi, x.x(), rng, out, max_steps),
            Scheme::Mixed { sigma2, small_var, delta, law, lo, hi, step } => {
                mixed(*sigma2 + *small_var, *delta, *law, *lo, *hi, *step, x.x(), rng, out, max_steps)
            }
        }
    }
}

/// Threshold so that the Gaussian-replaced small-jump variance is at most 1%
/// of the reference variance rate (diffusion plus finite jump variance, or the
/// variance of jumps below 1 for stable tails).
pub fn default_delta_j(model: &OperatorModel, sigma2: f64) -> f64 {
    let total = model.total_jump_variance_1d();
    let reference = sigma2 + if total.is_finite() { total } else { model.small_jump_variance_1d(1.0) };
    let target = 0.01 * reference;
    let (mut lo, mut hi) = (1e-12f64, 1.0f64);
    if model.small_jump_variance_1d(hi) <= target {
        return hi;
    }
    for _ in 0..100 {
        let mid = (lo * hi).sqrt();
        if model.small_jump_variance_1d(mid) > target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

fn too_long(max_steps: u64) -> Error {
    Error::InvalidSpec(format!("path exceeded {max_steps} steps; increase the step or the budget"))
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Bridge exponents above this give crossing probabilities below `e^-50`.
const BRIDGE_CUTOFF: f64 = 50.0;

/// Probability that a Brownian bridge from `a` to `b` over time `h` hits
/// the level at distances `da`, `db > 0` from the endpoints.
#[inline]
fn bridge_hit(da: f64, db: f64, sigma2: f64, h: f64) -> f64 {
    (-2.0 * da * db / (sigma2 * h)).exp()
}

#[allow(clippy::too_many_arguments)]
fn brownian_interval<R: Rng + ?Sized>(
    sigma2: f64,
    lo: f64,
    hi: f64,
    h: f64,
    x0: f64,
    rng: &mut R,
    out: &mut PathSample,
    max_steps: u64,
) -> Result<()> {
    let sd = (sigma2 * h).sqrt();
    let bridge_rate = 2.0 / (sigma2 * h);
    let mut x = x0;
    let mut t = 0.0;
    out.push(t, Point::on_line(x));
    for _ in 0..max_steps {
        let y = x + sd * normal(rng);
        if y <= lo || y >= hi {
            let b = if y <= lo { lo } else { hi };
            out.finish(t + 0.5 * h, Point::on_line(b), true);
            return Ok(());
        }
        // bridge crossings of either endpoint; negligible far from both
        let e_lo = (x - lo) * (y - lo) * bridge_rate;
        let e_hi = (hi - x) * (hi - y) * bridge_rate;
        if e_lo.min(e_hi) < BRIDGE_CUTOFF {
            let (p_lo, p_hi) = ((-e_lo).exp(), (-e_hi).exp());
            let v: f64 = rng.random();
            if v < p_lo + p_hi {
                let b = if v < p_lo { lo } else { hi };
                out.finish(t + 0.5 * h, Point::on_line(b), true);
                return Ok(());
            }
        }
        x = y;
        t += h;
        out.push(t, Point::on_line(x));
    }
    Err(too_long(max_steps))
}

/// From `x`, move to `x ± r` with `r` the distance to `∂U`; one of the two
/// targets is the nearer endpoint, so the walk stops after two moves on
/// average. Each move costs the mean exit time `r²/σ²` of `(x - r, x + r)`.
fn interval_wos<R: Rng + ?Sized>(
    sigma2: f64,
    lo: f64,
    hi: f64,
    x0: f64,
    rng: &mut R,
    out: &mut PathSample,
    max_steps: u64,
) -> Result<()> {
    let mut x = x0;
    let mut t = 0.0;
    out.push(t, Point::on_line(x));
    for _ in 0..max_steps {
        let near_lo = x - lo <= hi - x;
        let r = if near_lo { x - lo } else { hi - x };
        t += r * r / sigma2;
        let toward_near = rng.random::<bool>();
        if toward_near {
            out.finish(t, Point::on_line(if near_lo { lo } else { hi }), true);
            return Ok(());
        }
        x = if near_lo { x + r } else { x - r };
        if x >= hi || x <= lo {
            out.finish(t, Point::on_line(x.clamp(lo, hi)), true);
            return Ok(());
        }
        out.push(t, Point::on_line(x));
    }
    Err(too_long(max_steps))
}

#[allow(clippy::too_many_arguments)]
fn brownian_ball_euler<R: Rng + ?Sized>(
    sigma2: f64,
    center: &Point,
    radius: f64,
    dim: usize,
    h: f64,
    x0: &Point,
    rng: &mut R,
    out: &mut PathSample,
    max_steps: u64,
) -> Result<()> {
    let sd = (sigma2 * h).sqrt();
    let mut x = *x0;
    let mut t = 0.0;
    out.push(t, x);
    let project = |p: &Point| {
        let d = p.sub(center);
        center.add_scaled(&d, radius / d.norm())
    };
    for _ in 0..max_steps {
        let mut y = x;
        for i in 0..dim {
            y.0[i] += sd * normal(rng);
        }
        let (da, db) = (radius - x.dist(center), radius - y.dist(center));
        if db <= 0.0 {
            out.finish(t + 0.5 * h, project(&y), true);
            return Ok(());
        }
        if rng.random::<f64>() < bridge_hit(da, db, sigma2, h) {
            let mid = x.add_scaled(&y.sub(&x), 0.5);
            out.finish(t + 0.5 * h, project(&mid), true);
            return Ok(());
        }
        x = y;
        t += h;
        out.push(t, x);
    }
    Err(too_long(max_steps))
}

fn random_direction<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Point {
    loop {
        let mut v = Point::default();
        for i in 0..dim {
            v.0[i] = normal(rng);
        }
        let n = v.norm();
        if n > 1e-12 {
            return Point([v.0[0] / n, v.0[1] / n, v.0[2] / n]);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn brownian_wos<R: Rng + ?Sized>(
    sigma2: f64,
    center: &Point,
    radius: f64,
    dim: usize,
    eps: f64,
    x0: &Point,
    rng: &mut R,
    out: &mut PathSample,
    max_steps: u64,
) -> Result<()> {
    let mut x = *x0;
    let mut t = 0.0;
    out.push(t, x);
    for _ in 0..max_steps {
        let r = radius - x.dist(center);
        if r <= eps {
            let d = x.sub(center);
            let z = center.add_scaled(&d, radius / d.norm());
            out.finish(t, z, true);
            return Ok(());
        }
        x = x.add_scaled(&random_direction(dim, rng), r);
        t += r * r / (dim as f64 * sigma2);
        out.push(t, x);
    }
    Err(too_long(max_steps))
}

/// Standard symmetric α-stable variate with `E e^{iθS} = e^{-|θ|^α}`.
pub fn symmetric_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let v = std::f64::consts::PI * (rng.random::<f64>() - 0.5);
    let w: f64 = rng.sample(Exp1);
    if alpha == 1.0 {
        return v.tan();
    }
    (alpha * v).sin() / v.cos().powf(1.0 / alpha) * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
}

#[allow(clippy::too_many_arguments)]
fn stable_skeleton<R: Rng + ?Sized>(
    alpha: f64,
    intensity: f64,
    lo: f64,
    hi: f64,
    h: f64,
    x0: f64,
    rng: &mut R,
    out: &mut PathSample,
    max_steps: u64,
) -> Result<()> {
    let scale = (h * intensity).powf(1.0 / alpha);
    let mut x = x0;
    let mut t = 0.0;
    out.push(t, Point::on_line(x));
    for _ in 0..max_steps {
        let y = x + scale * symmetric_stable(alpha, rng);
        t += h;
        out.jumps.push((t, Point::on_line(x), Point::on_line(y)));
        if y <= lo || y >= hi {
            out.finish(t, Point::on_line(y), false);
            return Ok(());
        }
        x = y;
        out.push(t, Point::on_line(x));
    }
    Err(too_long(max_steps))
}

/// `E_0 τ` of the standard stable process from `(-1, 1)`.
pub fn stable_unit_exit_time(alpha: f64) -> f64 {
    gamma(0.5) / (2f64.powf(alpha) * gamma(1.0 + 0.5 * alpha) * gamma(0.5 * (1.0 + alpha)))
}

#[allow(clippy::too_many_arguments)]
fn stable_wos<R: Rng + ?Sized>(
    alpha: f64,
    intensity: f64,
    lo: f64,
    hi: f64,
    x0: f64,
    rng: &mut R,
    out: &mut PathSample,
    max_steps: u64,
) -> Result<()> {
    let beta = Beta::new(0.5 * alpha, 1.0 - 0.5 * alpha).expect("valid beta parameters");
    let unit_time = stable_unit_exit_time(alpha) / intensity;
    let mut x = x0;
    let mut t = 0.0;
    out.push(t, Point::on_line(x));
    for _ in 0..max_steps {
        let r = (x - lo).min(hi - x);
        let b: f64 = beta.sample(rng);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let y = x + sign * r / b.sqrt();
        t += unit_time * r.powf(alpha);
        if y <= lo || y >= hi {
            out.finish(t, Point::on_line(y), false);
            return Ok(());
        }
        x = y;
        out.push(t, Point::on_line(x));
    }
    Err(too_long(max_steps))
}

/// Big-jump candidates at the untempered stable rate, thinned for tempering.
fn big_jump<R: Rng + ?Sized>(law: JumpLaw, delta: f64, rng: &mut R) -> Option<f64> {
    let (alpha, lambda) = match law {
        JumpLaw::Stable { alpha, .. } => (alpha, 0.0),
        JumpLaw::Tempered { alpha, lambda, .. } => (alpha, lambda),
    };
    let u: f64 = 1.0 - rng.random::<f64>();
    let size = delta * u.powf(-1.0 / alpha);
    if lambda > 0.0 && rng.random::<f64>() >= (-lambda * size).exp() {
        return None;
    }
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    Some(sign * size)
}

fn candidate_rate(law: JumpLaw, delta: f64) -> f64 {
    let (alpha, scale) = match law {
        JumpLaw::Stable { alpha, scale } | JumpLaw::Tempered { alpha, scale, .. } => (alpha, scale),
    };
    2.0 * scale * stable_constant(1, alpha) / (alpha * delta.powf(alpha))
}

#[allow(clippy::too_many_arguments)]
fn mixed<R: Rng + ?Sized>(
    sigma2: f64,
    delta: f64,
    law: JumpLaw,
    lo: f64,
    hi: f64,
    h: f64,
    x0: f64,
    rng: &mut R,
    out: &mut PathSample,
    max_steps: u64,
) -> Result<()> {
    let rate = candidate_rate(law, delta);
    let mut x = x0;
    let mut t = 0.0;
    let mut next_jump: f64 = rng.sample::<f64, _>(Exp1) / rate;
    out.push(t, Point::on_line(x));
    for _ in 0..max_steps {
        let jump_now = next_jump <= t + h;
        let dt = if jump_now { next_jump - t } else { h };
        if dt > 0.0 && sigma2 > 0.0 {
            let y = x + (sigma2 * dt).sqrt() * normal(rng);
            if y <= lo || y >= hi {
                let b = if y <= lo { lo } else { hi };
                out.finish(t + 0.5 * dt, Point::on_line(b), true);
                return Ok(());
            }
            let p_lo = bridge_hit(x - lo, y - lo, sigma2, dt);
            let p_hi = bridge_hit(hi - x, hi - y, sigma2, dt);
            let v: f64 = rng.random();
            if v < p_lo + p_hi {
                let b = if v < p_lo { lo } else { hi };
                out.finish(t + 0.5 * dt, Point::on_line(b), true);
                return Ok(());
            }
            x = y;
        }
        t += dt;
        if jump_now {
            next_jump = t + rng.sample::<f64, _>(Exp1) / rate;
            if let Some(j) = big_jump(law, delta, rng) {
                let y = x + j;
                out.jumps.push((t, Point::on_line(x), Point::on_line(y)));
                if y <= lo || y >= hi {
                    out.finish(t, Point::on_line(y), false);
                    return Ok(());
                }
                x = y;
            }
        }
        out.push(t, Point::on_line(x));
    }
    Err(too_long(max_steps))
}
