//! Harmonic functions with an explicit certificate of harmonicity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::geometry::{DomainGeometry, Point};
use crate::model::operator::{JumpKernel, OperatorModel};
use crate::model::kernels::stable_poisson_1d_regular;
use crate::quadrature::chebyshev::Chebyshev;
use crate::quadrature::engine::{integrate_best, integrate_to_infinity, Tolerance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
    pub value: f64,
}

/// Exterior (or boundary) data `f` defining `u = E_x f(X_τ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryData {
    Constant { value: f64 },
    /// Endpoint values of an interval (local models).
    TwoPoint { left: f64, right: f64 },
    /// Sum of indicator windows `value · 1_[lo, hi)`.
    Windows { windows: Vec<Window> },
    /// `coeff · |z - c|^exponent` with `c` the domain center.
    Power { coeff: f64, exponent: f64 },
}

impl BoundaryData {
    pub fn value_1d(&self, z: f64, center: f64) -> f64 {
        match self {
            BoundaryData::Constant { value } => *value,
            BoundaryData::TwoPoint { left, right } => {
                if z < center {
                    *left
                } else {
                    *right
                }
            }
            BoundaryData::Windows { windows } => windows
                .iter()
                .filter(|w| w.lo <= z && z < w.hi)
                .map(|w| w.value)
                .sum(),
            BoundaryData::Power { coeff, exponent } => coeff * (z - center).abs().powf(*exponent),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            BoundaryData::Windows { windows } => {
                if windows.is_empty() {
                    return Err(Error::InvalidSpec("window data needs at least one window".into()));
                }
                for w in windows {
                    if !(w.lo < w.hi) || w.lo.is_nan() || !w.value.is_finite() {
                        return Err(Error::InvalidSpec(format!("bad window [{}, {})", w.lo, w.hi)));
                    }
                }
                Ok(())
            }
            BoundaryData::Power { coeff, exponent } if !coeff.is_finite() || !(*exponent > 0.0) => {
                Err(Error::InvalidSpec("power data needs a finite coefficient and positive exponent".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Configuration-level description of a harmonic function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HarmonicSpec {
    Constant { value: f64 },
    Affine {
        gradient: Vec<f64>,
        #[serde(default)]
        offset: f64,
    },
    PoissonExtension { data: BoundaryData },
    /// `upper · M(·, c + ρ) + lower · M(·, c - ρ)` for the stable Martin kernel
    /// of an interval; zero outside.
    Martin {
        #[serde(default)]
        lower: f64,
        #[serde(default)]
        upper: f64,
    },
    /// `1_D · inner` (local models only).
    Restricted { inner: Box<HarmonicSpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Certificate {
    Constant,
    Affine,
    PoissonExtension(BoundaryData),
    SingularHarmonic,
    ExplicitVerified { note: String },
}

/// Growth at infinity, used for tail admissibility of jump integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Growth {
    Bounded,
    Linear,
    Power(f64),
}

impl Growth {
    pub fn exponent(&self) -> f64 {
        match self {
            Growth::Bounded => 0.0,
            Growth::Linear => 1.0,
            Growth::Power(q) => *q,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentValue {
    Constant(f64),
    Varying,
}

/// Piece of the real line on which `u` is either constant or smooth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
    pub value: SegmentValue,
}

#[derive(Debug, Clone)]
struct StableExtension {
    alpha: f64,
    center: f64,
    rho: f64,
    data: BoundaryData,
    /// Constant exterior pieces in centered coordinates.
    pieces: Vec<(f64, f64, f64)>,
    /// `u / (ρ² - ξ²)^{α/2}` on `[-ρ, ρ]` when that ratio is smooth.
    profile: Option<Chebyshev>,
}

const EXT_TOL: Tolerance = Tolerance {
    abs: 1e-15,
    rel: 1e-13,
    max_subdivisions: 500,
};

impl StableExtension {
    fn q(&self) -> f64 {
        1.0 / (1.0 - 0.5 * self.alpha)
    }

    /// `∫_a^b P(ξ, ζ) dζ` for `ρ <= a < b <= ∞` (centered coordinates).
    fn right_mass(&self, xi: f64, a: f64, b: f64) -> (f64, bool) {
        let q = self.q();
        let (alpha, rho) = (self.alpha, self.rho);
        let f = |s: f64| q * stable_poisson_1d_regular(alpha, rho, xi, s.powf(q));
        let sa = (a - rho).max(0.0).powf(1.0 / q);
        let (r, ok) = if b.is_infinite() {
            integrate_to_infinity(f, sa, EXT_TOL)
        } else {
            integrate_best(f, sa, (b - rho).powf(1.0 / q), &[], EXT_TOL)
        };
        (r.value, ok)
    }

    fn right_power(&self, xi: f64, coeff: f64, exponent: f64) -> (f64, bool) {
        let q = self.q();
        let (alpha, rho) = (self.alpha, self.rho);
        let f = |s: f64| {
            let t = s.powf(q);
            q * coeff * (rho + t).powf(exponent) * stable_poisson_1d_regular(alpha, rho, xi, t)
        };
        let (r, ok) = integrate_to_infinity(f, 0.0, EXT_TOL);
        (r.value, ok)
    }

    /// Poisson integral at centered `xi ∈ (-ρ, ρ)`.
    fn direct(&self, xi: f64) -> (f64, bool) {
        if let BoundaryData::Power { coeff, exponent } = self.data {
            let (r, ok1) = self.right_power(xi, coeff, exponent);
            let (l, ok2) = self.right_power(-xi, coeff, exponent);
            return (r + l, ok1 && ok2);
        }
        let mut total = 0.0;
        let mut ok = true;
        for &(a, b, v) in &self.pieces {
            if v == 0.0 {
                continue;
            }
            let (m, good) = if a >= self.rho {
                self.right_mass(xi, a, b)
            } else {
                self.right_mass(-xi, -b, -a)
            };
            total += v * m;
            ok &= good;
        }
        (total, ok)
    }

    fn weight(&self, xi: f64) -> f64 {
        (self.rho * self.rho - xi * xi).max(0.0).powf(0.5 * self.alpha)
    }

    fn eval(&self, x: f64) -> f64 {
        let xi = x - self.center;
        if xi.abs() >= self.rho {
            return self.data.value_1d(x, self.center);
        }
        match &self.profile {
            Some(c) => self.weight(xi) * c.eval(xi),
            None => self.direct(xi).0,
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        let xi = x - self.center;
        if xi.abs() >= self.rho {
            return 0.0;
        }
        match &self.profile {
            Some(c) => {
                let a = self.weight(xi);
                let da = -self.alpha * xi * a / (self.rho * self.rho - xi * xi);
                da * c.eval(xi) + a * c.derivative(xi)
            }
            None => {
                let h = 1e-5 * self.rho;
                (self.direct(xi + h).0 - self.direct(xi - h).0) / (2.0 * h)
            }
        }
    }

    fn increment(&self, x: f64, t: f64) -> f64 {
        let xi = x - self.center;
        let eta = xi + t;
        match &self.profile {
            Some(c) if xi.abs() < self.rho && eta.abs() < self.rho => {
                let (ax, ay) = (self.weight(xi), self.weight(eta));
                let base = self.rho * self.rho - xi * xi;
                let da = ax * (0.5 * self.alpha * (-t * (xi + eta) / base).ln_1p()).exp_m1();
                ay * c.difference(xi, t) + c.eval(xi) * da
            }
            _ => self.eval(x + t) - self.eval(x),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct MartinSum {
    alpha: f64,
    center: f64,
    rho: f64,
    lower: f64,
    upper: f64,
}

impl MartinSum {
    fn terms(&self, xi: f64) -> (f64, f64) {
        let b = 0.5 * self.alpha;
        let (p, m) = (self.rho + xi, self.rho - xi);
        (
            self.upper * p.powf(b) * m.powf(b - 1.0),
            self.lower * m.powf(b) * p.powf(b - 1.0),
        )
    }

    fn inside(&self, x: f64) -> bool {
        (x - self.center).abs() < self.rho
    }

    fn eval(&self, x: f64) -> f64 {
        if !self.inside(x) {
            return 0.0;
        }
        let (u, l) = self.terms(x - self.center);
        u + l
    }

    fn derivative(&self, x: f64) -> f64 {
        if !self.inside(x) {
            return 0.0;
        }
        let xi = x - self.center;
        let b = 0.5 * self.alpha;
        let (p, m) = (self.rho + xi, self.rho - xi);
        let (u, l) = self.terms(xi);
        u * (b / p - (b - 1.0) / m) + l * (-b / m + (b - 1.0) / p)
    }

    fn increment(&self, x: f64, t: f64) -> f64 {
        if !(self.inside(x) && self.inside(x + t)) {
            return self.eval(x + t) - self.eval(x);
        }
        let xi = x - self.center;
        let b = 0.5 * self.alpha;
        let (p, m) = (self.rho + xi, self.rho - xi);
        let (u, l) = self.terms(xi);
        let lp = (t / p).ln_1p();
        let lm = (-t / m).ln_1p();
        u * (b * lp + (b - 1.0) * lm).exp_m1() + l * (b * lm + (b - 1.0) * lp).exp_m1()
    }
}

#[derive(Debug, Clone)]
enum Repr {
    Constant(f64),
    Affine { gradient: Point, offset: f64 },
    /// Killed Brownian motion on `(lo, hi)` with endpoint values.
    Hyperbolic { k: f64, lo: f64, hi: f64, left: f64, right: f64 },
    Stable(Box<StableExtension>),
    Martin(MartinSum),
    Restricted { inner: Box<Repr>, domain: DomainGeometry },
}

impl Repr {
    fn eval(&self, x: &Point) -> f64 {
        match self {
            Repr::Constant(c) => *c,
            Repr::Affine { gradient, offset } => gradient.dot(x) + offset,
            Repr::Hyperbolic { k, lo, hi, left, right } => {
                let y = x.x().clamp(*lo, *hi);
                if *k == 0.0 {
                    return left + (right - left) * (y - lo) / (hi - lo);
                }
                (left * (k * (hi - y)).sinh() + right * (k * (y - lo)).sinh()) / (k * (hi - lo)).sinh()
            }
            Repr::Stable(s) => s.eval(x.x()),
            Repr::Martin(m) => m.eval(x.x()),
            Repr::Restricted { inner, domain } => {
                // closed domain: local models exit on the boundary
                if domain.boundary_distance(x) >= 0.0 {
                    inner.eval(x)
                } else {
                    0.0
                }
            }
        }
    }

    fn gradient(&self, x: &Point) -> Point {
        match self {
            Repr::Constant(_) => Point::default(),
            Repr::Affine { gradient, .. } => *gradient,
            Repr::Hyperbolic { k, lo, hi, left, right } => {
                let y = x.x();
                if y <= *lo || y >= *hi {
                    return Point::default();
                }
                let d = k * (-left * (k * (hi - y)).cosh() + right * (k * (y - lo)).cosh()) / (k * (hi - lo)).sinh();
                Point::on_line(d)
            }
            Repr::Stable(s) => Point::on_line(s.derivative(x.x())),
            Repr::Martin(m) => Point::on_line(m.derivative(x.x())),
            Repr::Restricted { inner, domain } => {
                if domain.contains(x) {
                    inner.gradient(x)
                } else {
                    Point::default()
                }
            }
        }
    }

    fn increment(&self, x: f64, t: f64) -> f64 {
        match self {
            Repr::Constant(_) => 0.0,
            Repr::Affine { gradient, .. } => gradient.0[0] * t,
            Repr::Stable(s) => s.increment(x, t),
            Repr::Martin(m) => m.increment(x, t),
            _ => self.eval(&Point::on_line(x + t)) - self.eval(&Point::on_line(x)),
        }
    }
}

/// A harmonic function on a domain `D` for a given model, with the evidence
/// that it is harmonic.
#[derive(Debug, Clone)]
pub struct HarmonicFunction {
    repr: Repr,
    certificate: Certificate,
    domain: DomainGeometry,
    growth: Growth,
}

fn stable_interval(model: &OperatorModel, domain: &DomainGeometry) -> Option<(f64, f64, f64)> {
    match model.jump {
        JumpKernel::Stable { alpha, .. } if model.diffusion.is_zero() && model.killing == 0.0 => {
            let (lo, hi) = domain.as_interval()?;
            Some((alpha, 0.5 * (lo + hi), 0.5 * (hi - lo)))
        }
        _ => None,
    }
}

impl HarmonicFunction {
    pub fn build(spec: &HarmonicSpec, model: &OperatorModel, domain: &DomainGeometry) -> Result<Self> {
        model.validate()?;
        domain.validate()?;
        if model.dim != domain.dim() {
            return Err(Error::IncompatibleSpec);
        }
        let unsupported = || Error::UnsupportedModelDomain {
            model: model.label(),
            domain: domain.label(),
        };
        let make = |repr, certificate, growth| HarmonicFunction {
            repr,
            certificate,
            domain: domain.clone(),
            growth,
        };
        match spec {
            HarmonicSpec::Constant { value } => {
                if model.killing > 0.0 && *value != 0.0 {
                    return Err(Error::InvalidSpec("nonzero constants are not harmonic under killing".into()));
                }
                Ok(make(Repr::Constant(*value), Certificate::Constant, Growth::Bounded))
            }
            HarmonicSpec::Affine { gradient, offset } => {
                if gradient.len() != model.dim {
                    return Err(Error::IncompatibleSpec);
                }
                if model.killing > 0.0 {
                    return Err(Error::InvalidSpec("affine functions are not harmonic under killing".into()));
                }
                match model.jump {
                    JumpKernel::Stable { alpha, .. } if alpha <= 1.0 => {
                        return Err(Error::InvalidSpec(format!(
                            "affine functions need a finite first moment; α = {alpha}"
                        )))
                    }
                    JumpKernel::VariableStable { .. } => {
                        return Err(Error::InvalidSpec(
                            "affine functions are not harmonic for a variable-coefficient kernel".into(),
                        ))
                    }
                    _ => {}
                }
                let repr = Repr::Affine {
                    gradient: Point::from_slice(gradient),
                    offset: *offset,
                };
                Ok(make(repr, Certificate::Affine, Growth::Linear))
            }
            HarmonicSpec::PoissonExtension { data } => {
                data.validate()?;
                if model.is_local() {
                    let sigma2 = model.brownian_scale().ok_or_else(unsupported)?;
                    let cert = Certificate::PoissonExtension(data.clone());
                    if let Some((lo, hi)) = domain.as_interval() {
                        let (left, right) = match data {
                            BoundaryData::Constant { value } => (*value, *value),
                            BoundaryData::TwoPoint { left, right } => (*left, *right),
                            BoundaryData::Windows { .. } | BoundaryData::Power { .. } => {
                                let c = 0.5 * (lo + hi);
                                (data.value_1d(lo, c), data.value_1d(hi - 1e-300, c))
                            }
                        };
                        let k = (2.0 * model.killing / sigma2).sqrt();
                        let repr = if k == 0.0 {
                            Repr::Affine {
                                gradient: Point::on_line((right - left) / (hi - lo)),
                                offset: left - lo * (right - left) / (hi - lo),
                            }
                        } else {
                            Repr::Hyperbolic { k, lo, hi, left, right }
                        };
                        let repr = Repr::Restricted {
                            inner: Box::new(repr),
                            domain: domain.clone(),
                        };
                        return Ok(make(repr, cert, Growth::Bounded));
                    }
                    return match data {
                        BoundaryData::Constant { value } if model.killing == 0.0 => {
                            Ok(make(Repr::Constant(*value), cert, Growth::Bounded))
                        }
                        _ => Err(unsupported()),
                    };
                }
                let (alpha, center, rho) = stable_interval(model, domain).ok_or_else(unsupported)?;
                let cert = Certificate::PoissonExtension(data.clone());
                match data {
                    BoundaryData::Constant { value } => Ok(make(Repr::Constant(*value), cert, Growth::Bounded)),
                    BoundaryData::TwoPoint { .. } => Err(Error::InvalidSpec(
                        "two-point data only applies to local models".into(),
                    )),
                    BoundaryData::Power { exponent, .. } => {
                        if *exponent >= alpha {
                            return Err(Error::DivergentBoundaryIntegral(format!(
                                "|z|^{exponent} is not integrable against the α = {alpha} Poisson kernel"
                            )));
                        }
                        let ext = StableExtension {
                            alpha,
                            center,
                            rho,
                            data: data.clone(),
                            pieces: Vec::new(),
                            profile: None,
                        };
                        for xi in [0.0, 0.5 * rho, -0.9 * rho] {
                            let (v, ok) = ext.direct(xi);
                            if !ok || !v.is_finite() {
                                return Err(Error::DivergentBoundaryIntegral(format!(
                                    "Poisson integral failed to converge at x = {}",
                                    center + xi
                                )));
                            }
                        }
                        Ok(make(Repr::Stable(Box::new(ext)), cert, Growth::Power(*exponent)))
                    }
                    BoundaryData::Windows { .. } => {
                        let ext = build_stable_windows(alpha, center, rho, data)?;
                        Ok(make(Repr::Stable(Box::new(ext)), cert, Growth::Bounded))
                    }
                }
            }
            HarmonicSpec::Martin { lower, upper } => {
                let (alpha, center, rho) = stable_interval(model, domain).ok_or_else(unsupported)?;
                if *lower == 0.0 && *upper == 0.0 {
                    return Err(Error::InvalidSpec("Martin combination needs a nonzero weight".into()));
                }
                let m = MartinSum {
                    alpha,
                    center,
                    rho,
                    lower: *lower,
                    upper: *upper,
                };
                Ok(make(Repr::Martin(m), Certificate::SingularHarmonic, Growth::Bounded))
            }
            HarmonicSpec::Restricted { inner } => {
                if !model.is_local() {
                    return Err(Error::InvalidSpec(
                        "restriction to D is harmonic only for local models; use a Martin combination".into(),
                    ));
                }
                let inner = HarmonicFunction::build(inner, model, domain)?;
                let repr = Repr::Restricted {
                    inner: Box::new(inner.repr),
                    domain: domain.clone(),
                };
                Ok(make(repr, Certificate::SingularHarmonic, Growth::Bounded))
            }
        }
    }

    pub fn eval(&self, x: &Point) -> f64 {
        self.repr.eval(x)
    }

    pub fn eval_1d(&self, x: f64) -> f64 {
        self.repr.eval(&Point::on_line(x))
    }

    pub fn gradient(&self, x: &Point) -> Point {
        self.repr.gradient(x)
    }

    /// `u(x + t) - u(x)` in one dimension, accurate for small `|t|`.
    pub fn increment_1d(&self, x: f64, t: f64) -> f64 {
        self.repr.increment(x, t)
    }

    pub fn certificate(&self) -> &Certificate {
        &self.certificate
    }

    pub fn domain(&self) -> &DomainGeometry {
        &self.domain
    }

    pub fn growth(&self) -> Growth {
        self.growth
    }

    /// Whether `u` vanishes outside `D`.
    pub fn is_singular(&self) -> bool {
        matches!(self.certificate, Certificate::SingularHarmonic)
            || matches!(self.repr, Repr::Restricted { .. } | Repr::Martin(_))
    }

    /// Exponent `e` such that `u ~ dist(x, ∂D)^e` blows up near the boundary
    /// (Martin kernels), used to place breakpoints.
    pub fn boundary_blowup(&self) -> Option<f64> {
        match &self.repr {
            Repr::Martin(m) => Some(0.5 * m.alpha - 1.0),
            _ => None,
        }
    }

    /// Partition of the line into constant and varying pieces (1-D only).
    pub fn segments_1d(&self) -> Vec<Segment> {
        let whole = |value| {
            vec![Segment {
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
                value,
            }]
        };
        fn three(lo: f64, hi: f64, left: f64, right: f64) -> Vec<Segment> {
            vec![
                Segment { lo: f64::NEG_INFINITY, hi: lo, value: SegmentValue::Constant(left) },
                Segment { lo, hi, value: SegmentValue::Varying },
                Segment { lo: hi, hi: f64::INFINITY, value: SegmentValue::Constant(right) },
            ]
        }
        match &self.repr {
            Repr::Constant(c) => whole(SegmentValue::Constant(*c)),
            Repr::Affine { .. } => whole(SegmentValue::Varying),
            Repr::Hyperbolic { lo, hi, left, right, .. } => three(*lo, *hi, *left, *right),
            Repr::Martin(m) => three(m.center - m.rho, m.center + m.rho, 0.0, 0.0),
            Repr::Restricted { domain, .. } => {
                let (lo, hi) = domain.as_interval().expect("one-dimensional domain");
                three(lo, hi, 0.0, 0.0)
            }
            Repr::Stable(s) => {
                let (lo, hi) = (s.center - s.rho, s.center + s.rho);
                if let BoundaryData::Power { .. } = s.data {
                    return vec![
                        Segment { lo: f64::NEG_INFINITY, hi: lo, value: SegmentValue::Varying },
                        Segment { lo, hi, value: SegmentValue::Varying },
                        Segment { lo: hi, hi: f64::INFINITY, value: SegmentValue::Varying },
                    ];
                }
                let mut out: Vec<Segment> = s
                    .pieces
                    .iter()
                    .filter(|p| p.1 <= -s.rho)
                    .map(|&(a, b, v)| Segment { lo: a + s.center, hi: b + s.center, value: SegmentValue::Constant(v) })
                    .collect();
                out.push(Segment { lo, hi, value: SegmentValue::Varying });
                out.extend(
                    s.pieces
                        .iter()
                        .filter(|p| p.0 >= s.rho)
                        .map(|&(a, b, v)| Segment { lo: a + s.center, hi: b + s.center, value: SegmentValue::Constant(v) }),
                );
                out
            }
        }
    }
}

fn build_stable_windows(alpha: f64, center: f64, rho: f64, data: &BoundaryData) -> Result<StableExtension> {
    let BoundaryData::Windows { windows } = data else {
        unreachable!()
    };
    // Cut points of the exterior in centered coordinates.
    let mut right = vec![rho, f64::INFINITY];
    let mut left = vec![f64::NEG_INFINITY, -rho];
    for w in windows {
        for e in [w.lo - center, w.hi - center] {
            if e > rho && e.is_finite() {
                right.push(e);
            } else if e < -rho && e.is_finite() {
                left.push(e);
            }
        }
    }
    let sort = |v: &mut Vec<f64>| {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup();
    };
    sort(&mut right);
    sort(&mut left);
    let mut pieces = Vec::new();
    for cuts in [&left, &right] {
        for pair in cuts.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let probe = if a.is_infinite() {
                b - 1.0
            } else if b.is_infinite() {
                a + 1.0
            } else {
                0.5 * (a + b)
            };
            pieces.push((a, b, data.value_1d(probe + center, center)));
        }
    }
    let mut ext = StableExtension {
        alpha,
        center,
        rho,
        data: data.clone(),
        pieces,
        profile: None,
    };
    let gap = ext
        .pieces
        .iter()
        .filter(|p| p.2 != 0.0)
        .map(|&(a, b, _)| if a >= rho { a - rho } else { -rho - b })
        .fold(f64::INFINITY, f64::min);
    if gap >= 0.05 * rho {
        let profile = Chebyshev::adaptive(
            |xi| {
                let w = ext.weight(xi);
                ext.direct(xi).0 / w
            },
            -rho,
            rho,
            1e-13,
            1024,
        );
        ext.profile = profile;
    }
    Ok(ext)
}
