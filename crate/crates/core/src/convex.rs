//! Convex functions `phi: R -> R+`, their left derivatives, curvature
//! measures and the Bregman divergence they induce.
//!
//! The sign convention for `|x|` follows the left derivative: `sgn(0) = -1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when validating continuity and convexity of
/// piecewise specifications.
const SHAPE_TOL: f64 = 1e-9;

/// One quadratic piece `c0 + c1 x + c2 x^2` with `c2 >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadratic {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Quadratic {
    pub fn eval(&self, x: f64) -> f64 {
        self.c0 + x * (self.c1 + x * self.c2)
    }

    pub fn slope(&self, x: f64) -> f64 {
        self.c1 + 2.0 * self.c2 * x
    }
}

/// Left-continuous sign: `1` on `(0, inf)`, `-1` on `(-inf, 0]`.
#[inline]
pub fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConvexSpec {
    /// `|x|^p`, `p > 1`.
    Power { p: f64 },
    /// `|x|`, curvature `2 delta_0`.
    Abs,
    /// Continuous convex function that is quadratic between consecutive
    /// breakpoints. `pieces.len() == breakpoints.len() + 1`; piece `i` lives on
    /// `(b_{i-1}, b_i]`.
    Piecewise {
        breakpoints: Vec<f64>,
        pieces: Vec<Quadratic>,
    },
}

/// Distributional second derivative of `phi`: a density plus atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureMeasure {
    spec: ConvexSpec,
    pub atoms: Vec<(f64, f64)>,
}

impl CurvatureMeasure {
    /// Density part `g`, evaluated off the atom locations.
    pub fn density(&self, x: f64) -> f64 {
        self.spec.density(x)
    }

    pub fn has_atoms(&self) -> bool {
        !self.atoms.is_empty()
    }

    /// Total atom mass.
    pub fn atom_mass(&self) -> f64 {
        self.atoms.iter().map(|&(_, m)| m).sum()
    }
}

impl ConvexSpec {
    pub fn power(p: f64) -> Result<Self> {
        let spec = ConvexSpec::Power { p };
        spec.validate()?;
        Ok(spec)
    }

    pub fn piecewise(breakpoints: Vec<f64>, pieces: Vec<Quadratic>) -> Result<Self> {
        let spec = ConvexSpec::Piecewise {
            breakpoints,
            pieces,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks the structural invariants: `p > 1`, sorted breakpoints,
    /// continuity, nonnegative curvature and nonnegativity of `phi`.
    pub fn validate(&self) -> Result<()> {
        match self {
            ConvexSpec::Power { p } => {
                if !(p.is_finite() && *p > 1.0) {
                    return Err(Error::InvalidSpec(format!("power exponent must exceed 1, got {p}")));
                }
            }
            ConvexSpec::Abs => {}
            ConvexSpec::Piecewise {
                breakpoints,
                pieces,
            } => {
                if pieces.len() != breakpoints.len() + 1 {
                    return Err(Error::InvalidSpec(format!(
                        "{} breakpoints need {} pieces, got {}",
                        breakpoints.len(),
                        breakpoints.len() + 1,
                        pieces.len()
                    )));
                }
                if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidSpec("breakpoints must be strictly increasing".into()));
                }
                if pieces.iter().any(|q| q.c2 < 0.0) {
                    return Err(Error::InvalidSpec("quadratic coefficients must be nonnegative".into()));
                }
                for (i, &b) in breakpoints.iter().enumerate() {
                    let (left, right) = (pieces[i], pieces[i + 1]);
                    let scale = 1.0 + left.eval(b).abs();
                    if (left.eval(b) - right.eval(b)).abs() > SHAPE_TOL * scale {
                        return Err(Error::InvalidSpec(format!("discontinuous at breakpoint {b}")));
                    }
                    if right.slope(b) < left.slope(b) - SHAPE_TOL * (1.0 + left.slope(b).abs()) {
                        return Err(Error::InvalidSpec(format!("slope decreases at breakpoint {b}")));
                    }
                }
                // The minimum of a convex piecewise quadratic sits at a
                // breakpoint or at a vertex of one of the pieces.
                let first = pieces[0];
                let last = pieces[pieces.len() - 1];
                if (first.c2 == 0.0 && first.c1 > 0.0) || (last.c2 == 0.0 && last.c1 < 0.0) {
                    return Err(Error::InvalidSpec("function is unbounded below".into()));
                }
                let mut candidates = breakpoints.clone();
                candidates.extend(
                    pieces
                        .iter()
                        .filter(|q| q.c2 > 0.0)
                        .map(|q| -q.c1 / (2.0 * q.c2)),
                );
                if candidates.iter().any(|&x| self.eval(x) < -SHAPE_TOL) {
                    return Err(Error::InvalidSpec("function takes negative values".into()));
                }
            }
        }
        Ok(())
    }

    fn piece_index(breakpoints: &[f64], x: f64) -> usize {
        breakpoints.partition_point(|&b| b < x)
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ConvexSpec::Power { p } => x.abs().powf(*p),
            ConvexSpec::Abs => x.abs(),
            ConvexSpec::Piecewise {
                breakpoints,
                pieces,
            } => pieces[Self::piece_index(breakpoints, x)].eval(x),
        }
    }

    /// Left derivative `phi'_-(x)`.
    pub fn left_derivative(&self, x: f64) -> f64 {
        match self {
            ConvexSpec::Power { p } => {
                if x == 0.0 {
                    0.0
                } else {
                    p * x.signum() * x.abs().powf(p - 1.0)
                }
            }
            ConvexSpec::Abs => sgn(x),
            ConvexSpec::Piecewise {
                breakpoints,
                pieces,
            } => pieces[Self::piece_index(breakpoints, x)].slope(x),
        }
    }

    /// Density part of the curvature measure. For `|x|^p` the value at the
    /// origin is set to zero.
    pub fn density(&self, x: f64) -> f64 {
        match self {
            ConvexSpec::Power { p } => {
                if x == 0.0 {
                    0.0
                } else if *p == 2.0 {
                    2.0
                } else {
                    p * (p - 1.0) * x.abs().powf(p - 2.0)
                }
            }
            ConvexSpec::Abs => 0.0,
            ConvexSpec::Piecewise {
                breakpoints,
                pieces,
            } => 2.0 * pieces[Self::piece_index(breakpoints, x)].c2,
        }
    }

    pub fn curvature_measure(&self) -> CurvatureMeasure {
        let atoms = match self {
            ConvexSpec::Power { .. } => Vec::new(),
            ConvexSpec::Abs => vec![(0.0, 2.0)],
            ConvexSpec::Piecewise {
                breakpoints,
                pieces,
            } => breakpoints
                .iter()
                .enumerate()
                .filter_map(|(i, &b)| {
                    let jump = pieces[i + 1].slope(b) - pieces[i].slope(b);
                    (jump > 0.0).then_some((b, jump))
                })
                .collect(),
        };
        CurvatureMeasure {
            spec: self.clone(),
            atoms,
        }
    }

    /// True when the curvature measure is absolutely continuous.
    pub fn is_density_type(&self) -> bool {
        !self.curvature_measure().has_atoms()
    }

    /// Bregman divergence `F(a, b) = phi(b) - phi(a) - phi'_-(a) (b - a)`.
    pub fn bregman(&self, a: f64, b: f64) -> f64 {
        match self {
            ConvexSpec::Power { p } if *p == 2.0 => (b - a) * (b - a),
            ConvexSpec::Abs => {
                // Nonzero only when b lies on the other side of the kink.
                if (a > 0.0 && b <= 0.0) || (a <= 0.0 && b > 0.0) {
                    2.0 * b.abs()
                } else {
                    0.0
                }
            }
            _ => (self.eval(b) - self.eval(a) - self.left_derivative(a) * (b - a)).max(0.0),
        }
    }

    /// `F_φ(a, a + delta)` evaluated without cancellation for small `delta`.
    pub fn bregman_increment(&self, a: f64, delta: f64) -> f64 {
        match self {
            ConvexSpec::Power { p } if *p == 2.0 => delta * delta,
            ConvexSpec::Power { p } if a != 0.0 && (delta / a).abs() < 0.25 => {
                // |a|^p Σ_{k≥2} C(p, k) r^k with r = delta / a
                let r = delta / a;
                let mut coef = p * (p - 1.0) * 0.5;
                let mut rk = r * r;
                let mut sum = coef * rk;
                for k in 3..80 {
                    coef *= (p - (k as f64 - 1.0)) / k as f64;
                    rk *= r;
                    let term = coef * rk;
                    sum += term;
                    if term.abs() <= 1e-17 * sum.abs() {
                        break;
                    }
                }
                a.abs().powf(*p) * sum.max(0.0)
            }
            ConvexSpec::Piecewise { breakpoints, pieces } => {
                let b = a + delta;
                let i = breakpoints.partition_point(|&x| x < a);
                let j = breakpoints.partition_point(|&x| x < b);
                if i == j {
                    pieces[i].c2 * delta * delta
                } else {
                    self.bregman(a, b)
                }
            }
            _ => self.bregman(a, a + delta),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ConvexSpec::Power { p } => format!("|x|^{p}"),
            ConvexSpec::Abs => "|x|".to_string(),
            ConvexSpec::Piecewise { breakpoints, .. } => {
                format!("piecewise-quadratic({} breakpoints)", breakpoints.len())
            }
        }
    }
}
