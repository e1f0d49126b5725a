//! Closed-form Green functions and Poisson kernels for the model catalog:
//! Brownian motion (optionally with constant killing) on intervals and balls,
//! and the symmetric α-stable process on one-dimensional balls.

use std::f64::consts::PI;
use std::sync::OnceLock;

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::model::geometry::{DomainGeometry, Point};
use crate::model::operator::{JumpKernel, OperatorModel};
use crate::quadrature::engine::{integrate_best, Tolerance};

const SPECIAL_TOL: Tolerance = Tolerance {
    abs: 1e-15,
    rel: 1e-14,
    max_subdivisions: 400,
};

fn unsupported(model: &OperatorModel, domain: &DomainGeometry) -> Error {
    Error::UnsupportedModelDomain {
        model: model.label(),
        domain: domain.label(),
    }
}

/// Green function of `σ²Δ/2 - κ` on `(lo, hi)`.
pub fn brownian_green_1d(sigma2: f64, kappa: f64, lo: f64, hi: f64, x: f64, y: f64) -> f64 {
    if x <= lo || x >= hi || y <= lo || y >= hi {
        return 0.0;
    }
    let (a, b) = if x <= y { (x, y) } else { (y, x) };
    if kappa == 0.0 {
        2.0 * (a - lo) * (hi - b) / (sigma2 * (hi - lo))
    } else {
        let k = (2.0 * kappa / sigma2).sqrt();
        2.0 * (k * (a - lo)).sinh() * (k * (hi - b)).sinh() / (sigma2 * k * (k * (hi - lo)).sinh())
    }
}

/// Exit masses `(P_x(X_τ = lo), P_x(X_τ = hi))` for `σ²Δ/2 - κ` on `(lo, hi)`.
pub fn brownian_exit_masses_1d(sigma2: f64, kappa: f64, lo: f64, hi: f64, x: f64) -> (f64, f64) {
    if kappa == 0.0 {
        ((hi - x) / (hi - lo), (x - lo) / (hi - lo))
    } else {
        let k = (2.0 * kappa / sigma2).sqrt();
        let den = (k * (hi - lo)).sinh();
        ((k * (hi - x)).sinh() / den, (k * (x - lo)).sinh() / den)
    }
}

/// Green function of `σ²Δ/2` on the ball `B(center, radius)` in `d = 2, 3`.
pub fn brownian_green_ball(sigma2: f64, dim: usize, center: &Point, radius: f64, x: &Point, y: &Point) -> f64 {
    let xs = x.sub(center);
    let ys = y.sub(center);
    if xs.norm() >= radius || ys.norm() >= radius {
        return 0.0;
    }
    let r2 = radius * radius;
    let n = xs.dot(&xs) * ys.dot(&ys) / r2 - 2.0 * xs.dot(&ys) + r2;
    let dist = xs.dist(&ys);
    let laplace = match dim {
        2 => (n.sqrt() / dist).ln() / (2.0 * PI),
        3 => (1.0 / dist - 1.0 / n.sqrt()) / (4.0 * PI),
        _ => unreachable!("ball Green function only for d = 2, 3"),
    };
    2.0 * laplace / sigma2
}

fn unit_sphere_area(dim: usize) -> f64 {
    match dim {
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => unreachable!(),
    }
}

/// Harmonic measure density on `∂B(center, radius)` with respect to surface
/// measure.
pub fn brownian_poisson_ball(dim: usize, center: &Point, radius: f64, x: &Point, z: &Point) -> f64 {
    let xs = x.sub(center);
    let dist = x.dist(z);
    (radius * radius - xs.dot(&xs)) / (radius * unit_sphere_area(dim) * dist.powi(dim as i32))
}

/// `∫_0^w s^{α/2-1} (1+s)^{-1/2} ds`.
fn stable_green_profile(alpha: f64, w: f64) -> f64 {
    if w <= 1.0 {
        let m = 2.0 / alpha;
        let (r, _) = integrate_best(
            |v: f64| m * (1.0 + v.powf(m)).powf(-0.5),
            0.0,
            w.powf(0.5 * alpha),
            &[],
            SPECIAL_TOL,
        );
        return r.value;
    }
    stable_green_profile_at_one(alpha) + stable_green_profile_above_one(alpha, w)
}

fn stable_green_profile_at_one(alpha: f64) -> f64 {
    // Values are cached per α bit pattern; the catalog only uses a handful.
    static CACHE: OnceLock<std::sync::Mutex<Vec<(u64, f64)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| std::sync::Mutex::new(Vec::new()));
    let key = alpha.to_bits();
    if let Some(&(_, v)) = cache.lock().unwrap().iter().find(|(k, _)| *k == key) {
        return v;
    }
    let v = stable_green_profile(alpha, 1.0);
    cache.lock().unwrap().push((key, v));
    v
}

/// `∫_1^w s^{α/2-1}(1+s)^{-1/2} ds = ∫_{1/w}^1 t^{-β}(1+t)^{-1/2} dt`, `β = (1+α)/2`.
fn stable_green_profile_above_one(alpha: f64, w: f64) -> f64 {
    let beta = 0.5 * (1.0 + alpha);
    let power_part = if (beta - 1.0).abs() < 1e-15 {
        w.ln()
    } else {
        (1.0 - w.powf(beta - 1.0)) / (1.0 - beta)
    };
    // t = s²: 2 s^{-α} ((1+s²)^{-1/2} - 1) is bounded near zero.
    let (r, _) = integrate_best(
        |s: f64| {
            let dev = (-0.5 * (s * s).ln_1p()).exp_m1();
            2.0 * s.powf(-alpha) * dev
        },
        w.powf(-0.5),
        1.0,
        &[],
        SPECIAL_TOL,
    );
    power_part + r.value
}

fn stable_green_constant(alpha: f64) -> f64 {
    1.0 / (2f64.powf(alpha) * gamma(0.5 * alpha).powi(2))
}

/// Green function of the standard α-stable process on `(-rho, rho)` (centered
/// coordinates) at points `xi` and `xi ± t`, given the exact separation
/// `t = |x - y| > 0`.
pub fn stable_green_1d_local(alpha: f64, rho: f64, xi: f64, eta: f64, t: f64) -> f64 {
    let r2 = rho * rho;
    let (ax, ay) = (r2 - xi * xi, r2 - eta * eta);
    if ax <= 0.0 || ay <= 0.0 {
        return 0.0;
    }
    if t == 0.0 {
        return stable_green_1d_diagonal(alpha, rho, xi);
    }
    let w = ax * ay / (r2 * t * t);
    stable_green_constant(alpha) * t.powf(alpha - 1.0) * stable_green_profile(alpha, w)
}

/// `G(x, x)`: finite only for `α > 1`.
pub fn stable_green_1d_diagonal(alpha: f64, rho: f64, xi: f64) -> f64 {
    if alpha <= 1.0 {
        return f64::INFINITY;
    }
    let beta = 0.5 * (1.0 + alpha);
    let ax = rho * rho - xi * xi;
    if ax <= 0.0 {
        return 0.0;
    }
    // t^{α-1} ∫_0^w ... with w = ax²/(ρ² t²) tends to ax^{α-1}/ρ^{α-1} / (β - 1)
    // because the integrand behaves like s^{β - 2} at infinity.
    stable_green_constant(alpha) * (ax / rho).powf(alpha - 1.0) / (beta - 1.0)
}

pub fn stable_green_1d(alpha: f64, rho: f64, xi: f64, eta: f64) -> f64 {
    stable_green_1d_local(alpha, rho, xi, eta, (xi - eta).abs())
}

fn stable_poisson_constant(alpha: f64) -> f64 {
    (0.5 * PI * alpha).sin() / PI
}

/// Poisson kernel of `(-rho, rho)` at exterior point `zeta = rho + t` with the
/// factor `t^{-α/2}` removed: returns `P(xi, zeta) t^{α/2}`.
pub fn stable_poisson_1d_regular(alpha: f64, rho: f64, xi: f64, t: f64) -> f64 {
    let beta = 0.5 * alpha;
    let ax = rho * rho - xi * xi;
    if ax <= 0.0 {
        return 0.0;
    }
    let zeta = rho + t;
    stable_poisson_constant(alpha) * ax.powf(beta) * (zeta + rho).powf(-beta) / (zeta - xi)
}

/// Poisson kernel density of `(-rho, rho)` for `|zeta| > rho`.
pub fn stable_poisson_1d(alpha: f64, rho: f64, xi: f64, zeta: f64) -> f64 {
    if zeta.abs() <= rho {
        return 0.0;
    }
    let (xi, zeta) = if zeta > 0.0 { (xi, zeta) } else { (-xi, -zeta) };
    let t = zeta - rho;
    stable_poisson_1d_regular(alpha, rho, xi, t) * t.powf(-0.5 * alpha)
}

/// `E_x τ` for the standard α-stable process on `(-rho, rho)`.
pub fn stable_mean_exit_time_1d(alpha: f64, rho: f64, xi: f64) -> f64 {
    let ax = (rho * rho - xi * xi).max(0.0);
    gamma(0.5) * ax.powf(0.5 * alpha) / (2f64.powf(alpha) * gamma(1.0 + 0.5 * alpha) * gamma(0.5 * (1.0 + alpha)))
}

/// Kernel family available for a (model, domain) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelFamily {
    /// `σ²Δ/2 - κ` on an interval.
    BrownianInterval { sigma2: f64, kappa: f64, lo: f64, hi: f64 },
    /// `σ²Δ/2` on a ball in `d = 2, 3`.
    BrownianBall { sigma2: f64, dim: usize, center: Point, radius: f64 },
    /// Stable with generator `s·(-(-Δ)^{α/2})` on `(c - rho, c + rho)`.
    StableInterval { alpha: f64, intensity: f64, center: f64, rho: f64 },
}

impl KernelFamily {
    pub fn resolve(model: &OperatorModel, domain: &DomainGeometry) -> Result<Self> {
        if model.dim != domain.dim() {
            return Err(unsupported(model, domain));
        }
        if let Some(sigma2) = model.brownian_scale() {
            if let Some((lo, hi)) = domain.as_interval() {
                return Ok(KernelFamily::BrownianInterval {
                    sigma2,
                    kappa: model.killing,
                    lo,
                    hi,
                });
            }
            if model.killing == 0.0 {
                let (center, radius) = domain.center_radius();
                return Ok(KernelFamily::BrownianBall {
                    sigma2,
                    dim: domain.dim(),
                    center,
                    radius,
                });
            }
        }
        if let (JumpKernel::Stable { alpha, intensity }, true, 0.0) =
            (&model.jump, model.diffusion.is_zero(), model.killing)
        {
            if let Some((lo, hi)) = domain.as_interval() {
                return Ok(KernelFamily::StableInterval {
                    alpha: *alpha,
                    intensity: *intensity,
                    center: 0.5 * (lo + hi),
                    rho: 0.5 * (hi - lo),
                });
            }
        }
        Err(unsupported(model, domain))
    }

    pub fn green(&self, x: &Point, y: &Point) -> f64 {
        match *self {
            KernelFamily::BrownianInterval { sigma2, kappa, lo, hi } => brownian_green_1d(sigma2, kappa, lo, hi, x.x(), y.x()),
            KernelFamily::BrownianBall { sigma2, dim, center, radius } => brownian_green_ball(sigma2, dim, &center, radius, x, y),
            KernelFamily::StableInterval { alpha, intensity, center, rho } => {
                stable_green_1d(alpha, rho, x.x() - center, y.x() - center) / intensity
            }
        }
    }

    /// Green function at `x` and `x + sign·t` using the exact separation `t`.
    pub fn green_local_1d(&self, x: f64, t: f64, sign: f64) -> f64 {
        match *self {
            KernelFamily::BrownianInterval { sigma2, kappa, lo, hi } => brownian_green_1d(sigma2, kappa, lo, hi, x, x + sign * t),
            KernelFamily::StableInterval { alpha, intensity, center, rho } => {
                let xi = x - center;
                stable_green_1d_local(alpha, rho, xi, xi + sign * t, t) / intensity
            }
            KernelFamily::BrownianBall { .. } => unreachable!("local coordinates are one-dimensional"),
        }
    }

    /// Exponent `e` such that `G(x, x+t) ~ t^e` near the diagonal
    /// (`0` for bounded kernels, a negative value for integrable blow-up,
    /// `None` for logarithmic).
    pub fn diagonal_exponent(&self) -> Option<f64> {
        match *self {
            KernelFamily::BrownianInterval { .. } => Some(0.0),
            KernelFamily::BrownianBall { dim, .. } => {
                if dim == 2 {
                    None
                } else {
                    Some(2.0 - dim as f64)
                }
            }
            KernelFamily::StableInterval { alpha, .. } => {
                if alpha < 1.0 {
                    Some(alpha - 1.0)
                } else if alpha == 1.0 {
                    None
                } else {
                    Some(0.0)
                }
            }
        }
    }

    pub fn domain_interval(&self) -> Option<(f64, f64)> {
        match *self {
            KernelFamily::BrownianInterval { lo, hi, .. } => Some((lo, hi)),
            KernelFamily::StableInterval { center, rho, .. } => Some((center - rho, center + rho)),
            KernelFamily::BrownianBall { .. } => None,
        }
    }
}

/// `G_U(x, y)`.
pub fn green_function(model: &OperatorModel, domain: &DomainGeometry, x: &Point, y: &Point) -> Result<f64> {
    Ok(KernelFamily::resolve(model, domain)?.green(x, y))
}

/// Poisson kernel `P_U(x, z)`: point mass at an endpoint (Brownian on an
/// interval), surface density (Brownian on a ball) or exterior volume density
/// (stable).
pub fn poisson_kernel(model: &OperatorModel, domain: &DomainGeometry, x: &Point, z: &Point) -> Result<f64> {
    match KernelFamily::resolve(model, domain)? {
        KernelFamily::BrownianInterval { sigma2, kappa, lo, hi } => {
            let (pl, ph) = brownian_exit_masses_1d(sigma2, kappa, lo, hi, x.x());
            Ok(if z.x() == lo {
                pl
            } else if z.x() == hi {
                ph
            } else {
                0.0
            })
        }
        KernelFamily::BrownianBall { dim, center, radius, .. } => Ok(brownian_poisson_ball(dim, &center, radius, x, z)),
        KernelFamily::StableInterval { alpha, center, rho, .. } => {
            Ok(stable_poisson_1d(alpha, rho, x.x() - center, z.x() - center))
        }
    }
}
