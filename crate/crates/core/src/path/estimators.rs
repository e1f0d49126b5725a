//! Path functionals and Monte Carlo estimators.

use serde::Serialize;

use crate::convex::{sgn, ConvexSpec};
use crate::error::{Error, Result};
use crate::model::geometry::{DomainGeometry, Point};
use crate::model::harmonic::HarmonicFunction;
use crate::model::operator::OperatorModel;
use crate::path::ensemble::{run_batches, McConfig, Moments};
use crate::path::sampler::{PathSample, Scheme, SchemeOptions};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorResult {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: u64,
    pub bias_note: String,
}

impl EstimatorResult {
    pub fn from_moments(m: &Moments, i: usize, note: &str) -> Self {
        EstimatorResult {
            mean: m.mean[i],
            stderr: (m.covariance(i, i).max(0.0) / m.n.max(1) as f64).sqrt(),
            n_paths: m.n,
            bias_note: note.to_string(),
        }
    }

    pub fn scaled(mut self, c: f64) -> Self {
        self.mean *= c;
        self.stderr *= c.abs();
        self
    }

    pub fn combination(m: &Moments, coeffs: &[f64], note: &str) -> Self {
        let (mean, stderr) = m.combination(coeffs);
        EstimatorResult { mean, stderr, n_paths: m.n, bias_note: note.to_string() }
    }
}

/// Simulates exit paths from `x` and records `k` outputs per path.
pub fn simulate<F>(scheme: &Scheme, x: &Point, cfg: &McConfig, opts: &SchemeOptions, k: usize, f: F) -> Result<Moments>
where
    F: Fn(&PathSample, &mut [f64]) + Sync,
{
    run_batches(cfg, k, |rng, n, m| {
        let mut path = PathSample::default();
        let mut out = vec![0.0; k];
        for _ in 0..n {
            scheme.sample(x, rng, &mut path, opts.max_steps)?;
            f(&path, &mut out);
            m.push(&out);
        }
        Ok(())
    })
}

/// Raises `NonIntegrableDetected` when the Hill tail index of output `i`
/// falls below one.
pub fn check_integrable(m: &Moments, i: usize) -> Result<()> {
    let idx = m.tail_index(i);
    if idx < 1.0 {
        return Err(Error::NonIntegrableDetected { tail_index: idx });
    }
    Ok(())
}

/// `∫_0^τ w(u(X_s)) (a∇u, ∇u)(X_s) ds` by left-point Riemann sums.
pub fn qv_integral<W: Fn(f64) -> f64>(path: &PathSample, u: &HarmonicFunction, diffusion: f64, weight: W) -> f64 {
    if diffusion == 0.0 {
        return 0.0;
    }
    let mut total = 0.0;
    for w in path.skeleton.windows(2) {
        let (t0, x0) = w[0];
        let dt = w[1].0 - t0;
        if dt <= 0.0 {
            continue;
        }
        let g = u.gradient(&x0);
        total += weight(u.eval(&x0)) * diffusion * g.dot(&g) * dt;
    }
    total
}

/// `Σ (u(X_{t_{k+1}}) - u(X_{t_k}))²` along the skeleton.
pub fn squared_increments(path: &PathSample, u: &HarmonicFunction) -> f64 {
    path.skeleton
        .windows(2)
        .map(|w| {
            let d = u.eval(&w[1].1) - u.eval(&w[0].1);
            d * d
        })
        .sum()
}

/// `Σ F_φ(u(X_{s-}), u(X_s))` over recorded jumps, exit jump included.
pub fn jump_bregman_sum(path: &PathSample, u: &HarmonicFunction, spec: &ConvexSpec) -> f64 {
    path.jumps.iter().map(|(_, a, b)| spec.bregman(u.eval(a), u.eval(b))).sum()
}

/// Tanaka residual `|Y_τ - a| - |Y_0 - a| - Σ sgn(Y_k - a) ΔY_k` for
/// `Y = u(X)` along the skeleton.
pub fn tanaka_local_time(path: &PathSample, u: &HarmonicFunction, level: f64) -> f64 {
    let ys: Vec<f64> = path.skeleton.iter().map(|(_, p)| u.eval(p)).collect();
    let mut mart = 0.0;
    for w in ys.windows(2) {
        mart += sgn(w[0] - level) * (w[1] - w[0]);
    }
    (ys[ys.len() - 1] - level).abs() - (ys[0] - level).abs() - mart
}

/// Position at time `t ∧ τ` from the skeleton.
pub fn position_at(path: &PathSample, t: f64) -> Point {
    let i = path.skeleton.partition_point(|(s, _)| *s <= t);
    path.skeleton[i.max(1) - 1].1
}

/// `E_x f(X_τ)`.
pub fn estimate_exit_functional<F: Fn(&Point) -> f64 + Sync>(
    scheme: &Scheme,
    x: &Point,
    cfg: &McConfig,
    opts: &SchemeOptions,
    f: F,
) -> Result<EstimatorResult> {
    let m = simulate(scheme, x, cfg, opts, 1, |p, out| out[0] = f(&p.exit_point))?;
    check_integrable(&m, 0)?;
    Ok(EstimatorResult::from_moments(&m, 0, &scheme.bias_note()))
}

/// `E_x ∫_0^τ g(u(X_s)) d[u(X)]^c_s`.
pub fn estimate_qv_integral(
    scheme: &Scheme,
    x: &Point,
    cfg: &McConfig,
    opts: &SchemeOptions,
    u: &HarmonicFunction,
    spec: &ConvexSpec,
) -> Result<EstimatorResult> {
    let a = scheme.effective_diffusion();
    let m = simulate(scheme, x, cfg, opts, 1, |p, out| out[0] = qv_integral(p, u, a, |v| spec.density(v)))?;
    Ok(EstimatorResult::from_moments(&m, 0, &scheme.bias_note()))
}

/// `E_x Σ_{s ≤ τ} F_φ(u(X_{s-}), u(X_s))`.
pub fn estimate_jump_bregman_sum(
    scheme: &Scheme,
    x: &Point,
    cfg: &McConfig,
    opts: &SchemeOptions,
    u: &HarmonicFunction,
    spec: &ConvexSpec,
) -> Result<EstimatorResult> {
    if !scheme.records_jumps() {
        return Err(Error::UnsupportedModel(
            "jump sums need a scheme that records jumps".into(),
        ));
    }
    let m = simulate(scheme, x, cfg, opts, 1, |p, out| out[0] = jump_bregman_sum(p, u, spec))?;
    Ok(EstimatorResult::from_moments(&m, 0, &scheme.bias_note()))
}

/// `E_x L^a_τ` for `Y = u(X)`; one-dimensional Brownian motion only.
pub fn estimate_local_time(
    model: &OperatorModel,
    scheme: &Scheme,
    x: &Point,
    cfg: &McConfig,
    opts: &SchemeOptions,
    u: &HarmonicFunction,
    level: f64,
) -> Result<EstimatorResult> {
    if !(model.is_local() && model.dim == 1) || !matches!(scheme, Scheme::BrownianInterval { .. }) {
        return Err(Error::UnsupportedModel(
            "local-time estimation is limited to one-dimensional Brownian motion".into(),
        ));
    }
    let m = simulate(scheme, x, cfg, opts, 1, |p, out| out[0] = tanaka_local_time(p, u, level))?;
    Ok(EstimatorResult::from_moments(&m, 0, &format!("{}; tanaka residual", scheme.bias_note())))
}

/// Reweighted ensemble for the Doob h-transform: output `i < k` holds
/// `w · f_i` with `w = h(X_τ)/h(x)`, output `k` holds `w`. Paths leaving the
/// support of `h` get weight zero.
pub fn h_transform_moments<F>(
    scheme: &Scheme,
    x: &Point,
    cfg: &McConfig,
    opts: &SchemeOptions,
    h: &HarmonicFunction,
    k: usize,
    f: F,
) -> Result<(Moments, f64)>
where
    F: Fn(&PathSample, &mut [f64]) + Sync,
{
    let hx = h.eval(x);
    if !(hx > 0.0) {
        return Err(Error::InvalidSpec("h must be positive at the starting point".into()));
    }
    let m = simulate(scheme, x, cfg, opts, k + 1, |p, out| {
        let w = h.eval(&p.exit_point) / hx;
        if w == 0.0 {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        f(p, &mut out[..k]);
        out[..k].iter_mut().for_each(|o| *o *= w);
        out[k] = w;
    })?;
    let mean_w = m.mean[k];
    let second = m.covariance(k, k) * (m.n.saturating_sub(1)) as f64 / m.n.max(1) as f64 + mean_w * mean_w;
    let ess = if second > 0.0 { mean_w * mean_w / second } else { 0.0 };
    if ess < cfg.ess_floor {
        return Err(Error::DegenerateWeights { ess, floor: cfg.ess_floor });
    }
    Ok((m, ess))
}

/// Doob h-transform expectation `E_x[F · h(X_τ)] / h(x)`.
pub fn h_transform_reweight<F: Fn(&PathSample) -> f64 + Sync>(
    scheme: &Scheme,
    x: &Point,
    cfg: &McConfig,
    opts: &SchemeOptions,
    h: &HarmonicFunction,
    f: F,
) -> Result<EstimatorResult> {
    let (m, ess) = h_transform_moments(scheme, x, cfg, opts, h, 1, |p, o| o[0] = f(p))?;
    Ok(EstimatorResult::from_moments(&m, 0, &format!("{}; h-weights, ess fraction {ess:.3}", scheme.bias_note())))
}

#[derive(Debug, Clone, Serialize)]
pub struct HarmonicityTrial {
    pub domain: DomainGeometry,
    pub x: Point,
    pub target: f64,
    pub exit_mean: f64,
    pub exit_stderr: f64,
    pub time: f64,
    pub stopped_mean: f64,
    pub stopped_stderr: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct HarmonicityReport {
    pub trials: Vec<HarmonicityTrial>,
    pub pass: bool,
}

/// Mean-value test `E_x u(X_{τ_U}) = u(x)` and the stopped martingale test
/// `E_x u(X_{t ∧ τ_U}) = u(x)` for each `(U, x)`.
pub fn check_harmonicity(
    model: &OperatorModel,
    u: &HarmonicFunction,
    trials: &[(DomainGeometry, Point)],
    time: f64,
    cfg: &McConfig,
    opts: &SchemeOptions,
) -> Result<HarmonicityReport> {
    let mut out = Vec::new();
    for (i, (dom, x)) in trials.iter().enumerate() {
        let trial_cfg = cfg.with_seed(cfg.seed.wrapping_add(1_000_003 * i as u64));
        let exact = Scheme::for_model(model, dom, &SchemeOptions { exact_exit: true, ..*opts })?;
        let path = Scheme::for_model(model, dom, &SchemeOptions { exact_exit: false, ..*opts })?;
        let exit = estimate_exit_functional(&exact, x, &trial_cfg, opts, |z| u.eval(z))?;
        let m = simulate(&path, x, &trial_cfg.with_seed(trial_cfg.seed ^ 0xABCD), opts, 1, |p, o| {
            o[0] = u.eval(&position_at(p, time))
        })?;
        let stopped = EstimatorResult::from_moments(&m, 0, "");
        let target = u.eval(x);
        let ok = |e: &EstimatorResult| (e.mean - target).abs() <= 3.0 * e.stderr + 1e-12;
        out.push(HarmonicityTrial {
            domain: dom.clone(),
            x: *x,
            target,
            exit_mean: exit.mean,
            exit_stderr: exit.stderr,
            time,
            stopped_mean: stopped.mean,
            stopped_stderr: stopped.stderr,
            pass: ok(&exit) && ok(&stopped),
        });
    }
    let pass = out.iter().all(|t| t.pass);
    Ok(HarmonicityReport { trials: out, pass })
}
