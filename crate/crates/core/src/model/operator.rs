//! Beurling-Deny data for the model operators.
//!
//! Conventions: the local part is `1/2 ∫ (a∇u, ∇v)`, so `a = I` generates
//! `Δ/2`. A radial Lévy density `ν` enters the form as the symmetric
//! kernel `J(x, y) = ν(|y - x|) / 2`, which makes `2 ∫ F J(z, dy)` the
//! expected Bregman cost per unit time of the jumps from `z`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::model::geometry::Point;
use crate::quadrature::engine::{integrate_best, integrate_to_infinity, Tolerance};

/// Normalizing constant `c_{d,α}` for which `c |y|^{-d-α}` is the Lévy density
/// of the process generated by `-(-Δ)^{α/2}`.
pub fn stable_constant(dim: usize, alpha: f64) -> f64 {
    let d = dim as f64;
    alpha * 2f64.powf(alpha - 1.0) * gamma(0.5 * (d + alpha)) / (PI.powf(0.5 * d) * gamma(1.0 - 0.5 * alpha))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Diffusion {
    /// `a = σ² I`.
    Isotropic(f64),
    Matrix(Vec<Vec<f64>>),
}

impl Default for Diffusion {
    fn default() -> Self {
        Diffusion::Isotropic(0.0)
    }
}

impl Diffusion {
    pub fn is_zero(&self) -> bool {
        match self {
            Diffusion::Isotropic(s) => *s == 0.0,
            Diffusion::Matrix(m) => m.iter().flatten().all(|v| *v == 0.0),
        }
    }

    /// `σ²` when `a = σ² I`.
    pub fn isotropic_scale(&self, dim: usize) -> Option<f64> {
        match self {
            Diffusion::Isotropic(s) => Some(*s),
            Diffusion::Matrix(m) => {
                let s = m.first()?.first().copied()?;
                let iso = (0..dim).all(|i| (0..dim).all(|j| m[i][j] == if i == j { s } else { 0.0 }));
                iso.then_some(s)
            }
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match self {
            Diffusion::Isotropic(s) => {
                if i == j {
                    *s
                } else {
                    0.0
                }
            }
            Diffusion::Matrix(m) => m[i][j],
        }
    }

    /// `(a ξ, ξ)`.
    pub fn quadratic_form(&self, dim: usize, xi: &Point) -> f64 {
        let mut acc = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                acc += self.entry(i, j) * xi.0[i] * xi.0[j];
            }
        }
        acc
    }

    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Diffusion::Isotropic(s) => {
                if !(s.is_finite() && *s >= 0.0) {
                    return Err(Error::InvalidModel(format!("diffusion scale must be >= 0, got {s}")));
                }
            }
            Diffusion::Matrix(m) => {
                if m.len() != dim || m.iter().any(|row| row.len() != dim) {
                    return Err(Error::InvalidModel(format!("diffusion matrix must be {dim}x{dim}")));
                }
                for i in 0..dim {
                    for j in 0..dim {
                        if m[i][j] != m[j][i] {
                            return Err(Error::InvalidModel("diffusion matrix must be symmetric".into()));
                        }
                    }
                }
                // Positive semidefinite via the principal-minor test up to 3x3.
                let a = |i: usize, j: usize| m[i][j];
                let minors_ok = match dim {
                    1 => a(0, 0) >= 0.0,
                    2 => a(0, 0) >= 0.0 && a(1, 1) >= 0.0 && a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0) >= 0.0,
                    _ => {
                        let det = a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1))
                            - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0))
                            + a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
                        (0..3).all(|i| a(i, i) >= 0.0)
                            && (0..3).all(|i| {
                                let (p, q) = ((i + 1) % 3, (i + 2) % 3);
                                a(p, p) * a(q, q) - a(p, q) * a(q, p) >= 0.0
                            })
                            && det >= 0.0
                    }
                };
                if !minors_ok {
                    return Err(Error::InvalidModel("diffusion matrix must be positive semidefinite".into()));
                }
            }
        }
        Ok(())
    }
}

fn default_intensity() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JumpKernel {
    #[default]
    None,
    /// Rotationally symmetric α-stable: `ν(y) = s c_{d,α} |y|^{-d-α}`.
    Stable {
        alpha: f64,
        #[serde(default = "default_intensity")]
        intensity: f64,
    },
    /// Tempered stable radial density `s c_{d,α} e^{-λ|y|} |y|^{-d-α}`:
    /// nonincreasing, infinite total mass, all moments finite.
    Tempered {
        alpha: f64,
        #[serde(default = "default_intensity")]
        intensity: f64,
        lambda: f64,
    },
    /// `J(x, y) = c(x, y) |x - y|^{-d-α}` with
    /// `c(x, y) = base + amplitude cos(x_1 + y_1)`; quadrature only.
    VariableStable { alpha: f64, base: f64, amplitude: f64 },
}

impl JumpKernel {
    pub fn is_none(&self) -> bool {
        matches!(self, JumpKernel::None)
    }

    pub fn alpha(&self) -> Option<f64> {
        match self {
            JumpKernel::None => None,
            JumpKernel::Stable { alpha, .. }
            | JumpKernel::Tempered { alpha, .. }
            | JumpKernel::VariableStable { alpha, .. } => Some(*alpha),
        }
    }

    fn validate(&self) -> Result<()> {
        if let Some(alpha) = self.alpha() {
            if !(alpha > 0.0 && alpha < 2.0) {
                return Err(Error::InvalidModel(format!("alpha must lie in (0, 2), got {alpha}")));
            }
        }
        match self {
            JumpKernel::Stable { intensity, .. } if *intensity <= 0.0 => {
                Err(Error::InvalidModel("stable intensity must be positive".into()))
            }
            JumpKernel::Tempered { intensity, lambda, .. } if *intensity <= 0.0 || *lambda <= 0.0 => {
                Err(Error::InvalidModel("tempered intensity and lambda must be positive".into()))
            }
            JumpKernel::VariableStable { base, amplitude, .. } if *base - amplitude.abs() <= 0.0 => Err(
                Error::InvalidModel("variable coefficient must stay bounded away from zero".into()),
            ),
            _ => Ok(()),
        }
    }

    /// Bounds `(C^{-1}, C)` of the variable coefficient.
    pub fn coefficient_bounds(&self) -> Option<(f64, f64)> {
        match self {
            JumpKernel::VariableStable { base, amplitude, .. } => {
                Some((base - amplitude.abs(), base + amplitude.abs()))
            }
            _ => None,
        }
    }

    pub fn is_radial(&self) -> bool {
        matches!(self, JumpKernel::Stable { .. } | JumpKernel::Tempered { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorModel {
    pub dim: usize,
    #[serde(default)]
    pub diffusion: Diffusion,
    #[serde(default)]
    pub jump: JumpKernel,
    /// Constant killing density `κ >= 0`; quadrature pathway only.
    #[serde(default)]
    pub killing: f64,
}

impl OperatorModel {
    pub fn brownian(dim: usize, sigma2: f64) -> Self {
        OperatorModel {
            dim,
            diffusion: Diffusion::Isotropic(sigma2),
            jump: JumpKernel::None,
            killing: 0.0,
        }
    }

    pub fn stable(dim: usize, alpha: f64) -> Self {
        OperatorModel {
            dim,
            diffusion: Diffusion::Isotropic(0.0),
            jump: JumpKernel::Stable { alpha, intensity: 1.0 },
            killing: 0.0,
        }
    }

    pub fn with_jump(mut self, jump: JumpKernel) -> Self {
        self.jump = jump;
        self
    }

    pub fn with_killing(mut self, kappa: f64) -> Self {
        self.killing = kappa;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(Error::InvalidModel(format!("dimension must be 1..=3, got {}", self.dim)));
        }
        self.diffusion.validate(self.dim)?;
        self.jump.validate()?;
        if !(self.killing.is_finite() && self.killing >= 0.0) {
            return Err(Error::InvalidModel("killing density must be nonnegative".into()));
        }
        if self.diffusion.is_zero() && self.jump.is_none() {
            return Err(Error::InvalidModel("model needs a diffusion or a jump part".into()));
        }
        Ok(())
    }

    pub fn has_diffusion(&self) -> bool {
        !self.diffusion.is_zero()
    }

    pub fn has_jumps(&self) -> bool {
        !self.jump.is_none()
    }

    pub fn is_local(&self) -> bool {
        self.jump.is_none()
    }

    /// Pure isotropic Brownian motion (optionally killed): `Some(σ²)`.
    pub fn brownian_scale(&self) -> Option<f64> {
        if self.jump.is_none() {
            self.diffusion.isotropic_scale(self.dim).filter(|s| *s > 0.0)
        } else {
            None
        }
    }

    /// Pure α-stable with unit intensity and no killing: `Some(α)`.
    pub fn standard_stable_alpha(&self) -> Option<f64> {
        match self.jump {
            JumpKernel::Stable { alpha, intensity } if intensity == 1.0 && self.diffusion.is_zero() => Some(alpha),
            _ => None,
        }
    }

    /// Radial Lévy density `ν(r)`.
    pub fn levy_density(&self, r: f64) -> f64 {
        let d = self.dim as f64;
        match self.jump {
            JumpKernel::None => 0.0,
            JumpKernel::Stable { alpha, intensity } => intensity * stable_constant(self.dim, alpha) * r.powf(-d - alpha),
            JumpKernel::Tempered { alpha, intensity, lambda } => {
                intensity * stable_constant(self.dim, alpha) * (-lambda * r).exp() * r.powf(-d - alpha)
            }
            JumpKernel::VariableStable { alpha, base, .. } => 2.0 * base * r.powf(-d - alpha),
        }
    }

    /// Symmetric form kernel `J(x, y)`.
    pub fn jump_kernel(&self, x: &Point, y: &Point) -> f64 {
        let r = x.dist(y);
        match self.jump {
            JumpKernel::VariableStable { alpha, base, amplitude } => {
                let c = base + amplitude * (x.0[0] + y.0[0]).cos();
                c * r.powf(-(self.dim as f64) - alpha)
            }
            _ => 0.5 * self.levy_density(r),
        }
    }

    /// One-sided jump intensity past distance `t > 0` in one dimension:
    /// `∫_t^∞ ν(s) ds` (radial) or its upper bound (variable coefficient).
    pub fn tail_mass_1d(&self, t: f64) -> f64 {
        match self.jump {
            JumpKernel::None => 0.0,
            JumpKernel::Stable { alpha, intensity } => {
                intensity * stable_constant(1, alpha) / (alpha * t.powf(alpha))
            }
            JumpKernel::VariableStable { alpha, base, amplitude } => {
                2.0 * (base + amplitude.abs()) / (alpha * t.powf(alpha))
            }
            JumpKernel::Tempered { .. } => {
                let (r, _) = integrate_to_infinity(|s| self.levy_density(s), t, Tolerance::new(1e-14, 1e-12));
                r.value
            }
        }
    }

    /// Variance rate of the jumps smaller than `delta` (one dimension):
    /// `2 ∫_0^δ s² ν(s) ds`.
    pub fn small_jump_variance_1d(&self, delta: f64) -> f64 {
        match self.jump {
            JumpKernel::None => 0.0,
            JumpKernel::Stable { alpha, intensity } => {
                2.0 * intensity * stable_constant(1, alpha) * delta.powf(2.0 - alpha) / (2.0 - alpha)
            }
            _ => {
                let alpha = self.jump.alpha().unwrap_or(1.0);
                // s^2 ν(s) ~ s^{1-α}; substitute s = v^{1/(2-α)}.
                let m = 1.0 / (2.0 - alpha);
                let (r, _) = integrate_best(
                    |v: f64| {
                        let s = v.powf(m);
                        s * s * self.levy_density(s) * m * v.powf(m - 1.0)
                    },
                    0.0,
                    delta.powf(2.0 - alpha),
                    &[],
                    Tolerance::new(1e-14, 1e-12),
                );
                2.0 * r.value
            }
        }
    }

    /// Total jump variance rate `2 ∫_0^∞ s² ν(s) ds` (infinite for stable).
    pub fn total_jump_variance_1d(&self) -> f64 {
        match self.jump {
            JumpKernel::None => 0.0,
            JumpKernel::Tempered { alpha, intensity, lambda } => {
                2.0 * intensity * stable_constant(1, alpha) * gamma(2.0 - alpha) * lambda.powf(alpha - 2.0)
            }
            _ => f64::INFINITY,
        }
    }

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if let Some(s) = self.diffusion.isotropic_scale(self.dim) {
            if s > 0.0 {
                parts.push(format!("{s}·Δ/2"));
            }
        } else {
            parts.push("div(a∇)/2".to_string());
        }
        match &self.jump {
            JumpKernel::None => {}
            JumpKernel::Stable { alpha, intensity } => parts.push(format!("{intensity}·stable(α={alpha})")),
            JumpKernel::Tempered { alpha, lambda, .. } => parts.push(format!("tempered(α={alpha}, λ={lambda})")),
            JumpKernel::VariableStable { alpha, .. } => parts.push(format!("stable-like(α={alpha})")),
        }
        if self.killing > 0.0 {
            parts.push(format!("κ={}", self.killing));
        }
        format!("{}d {}", self.dim, parts.join(" + "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cauchy_constant() {
        assert!((stable_constant(1, 1.0) - 1.0 / PI).abs() < 1e-14);
        // d = 3, α = 1: Γ(2) / (π² Γ(1/2)) · 1 = 1 / π^{5/2}.
        assert!((stable_constant(3, 1.0) - 1.0 / (PI * PI)).abs() < 1e-14);
    }

    #[test]
    fn jump_kernel_symmetry() {
        let models = [
            OperatorModel::stable(1, 0.7),
            OperatorModel::stable(1, 1.0).with_jump(JumpKernel::Tempered { alpha: 1.2, intensity: 1.0, lambda: 2.0 }),
            OperatorModel::stable(1, 1.0).with_jump(JumpKernel::VariableStable { alpha: 1.5, base: 1.0, amplitude: 0.4 }),
        ];
        let mut s = 0.123f64;
        for m in &models {
            for _ in 0..200 {
                s = (s * 9301.0 + 49297.0) % 233280.0;
                let x = Point::on_line(s / 23328.0 - 5.0);
                let y = Point::on_line(((s * 7.0) % 233280.0) / 23328.0 - 5.0);
                if x == y {
                    continue;
                }
                assert_eq!(m.jump_kernel(&x, &y), m.jump_kernel(&y, &x));
            }
        }
    }

    #[test]
    fn variable_coefficient_bounds() {
        let j = JumpKernel::VariableStable { alpha: 1.0, base: 1.0, amplitude: 0.5 };
        assert_eq!(j.coefficient_bounds(), Some((0.5, 1.5)));
        let m = OperatorModel::stable(1, 1.0).with_jump(JumpKernel::VariableStable { alpha: 1.0, base: 1.0, amplitude: 1.0 });
        assert!(m.validate().is_err());
    }

    #[test]
    fn trivial_model_rejected() {
        let m = OperatorModel::brownian(1, 0.0);
        assert!(m.validate().is_err());
        assert!(OperatorModel::brownian(1, 1.0).validate().is_ok());
    }

    #[test]
    fn tempered_moments() {
        let m = OperatorModel::stable(1, 1.0).with_jump(JumpKernel::Tempered { alpha: 1.2, intensity: 1.0, lambda: 1.0 });
        let total = m.total_jump_variance_1d();
        let small = m.small_jump_variance_1d(1e3);
        assert!((small - total).abs() < 1e-8 * total, "{small} {total}");
        let stable = OperatorModel::stable(1, 1.5);
        let tail = stable.tail_mass_1d(2.0);
        let (num, _) = integrate_to_infinity(|s| stable.levy_density(s), 2.0, Tolerance::new(1e-14, 1e-12));
        assert!((tail - num.value).abs() < 1e-10);
    }

    #[test]
    fn psd_check() {
        let mut m = OperatorModel::brownian(2, 1.0);
        m.diffusion = Diffusion::Matrix(vec![vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(m.validate().is_err());
        m.diffusion = Diffusion::Matrix(vec![vec![2.0, 1.0], vec![1.0, 2.0]]);
        assert!(m.validate().is_ok());
        assert_eq!(m.brownian_scale(), None);
    }
}
