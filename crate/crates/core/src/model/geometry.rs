use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Point of `R^d` for `d <= 3`; unused trailing coordinates are zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point(pub [f64; 3]);

impl Point {
    pub fn on_line(x: f64) -> Self {
        Point([x, 0.0, 0.0])
    }

    pub fn x(&self) -> f64 {
        self.0[0]
    }

    pub fn from_slice(coords: &[f64]) -> Self {
        let mut p = [0.0; 3];
        for (dst, src) in p.iter_mut().zip(coords) {
            *dst = *src;
        }
        Point(p)
    }

    pub fn sub(&self, other: &Point) -> Point {
        Point([
            self.0[0] - other.0[0],
            self.0[1] - other.0[1],
            self.0[2] - other.0[2],
        ])
    }

    pub fn add_scaled(&self, dir: &Point, s: f64) -> Point {
        Point([
            self.0[0] + s * dir.0[0],
            self.0[1] + s * dir.0[1],
            self.0[2] + s * dir.0[2],
        ])
    }

    pub fn dot(&self, other: &Point) -> f64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dist(&self, other: &Point) -> f64 {
        self.sub(other).norm()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum DomainGeometry {
    Interval { lo: f64, hi: f64 },
    Ball { center: Vec<f64>, radius: f64 },
}

impl DomainGeometry {
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        let d = DomainGeometry::Interval { lo, hi };
        d.validate()?;
        Ok(d)
    }

    pub fn ball(center: &[f64], radius: f64) -> Result<Self> {
        let d = DomainGeometry::Ball {
            center: center.to_vec(),
            radius,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DomainGeometry::Interval { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::InvalidDomain(format!("interval needs lo < hi, got ({lo}, {hi})")));
                }
            }
            DomainGeometry::Ball { center, radius } => {
                if center.is_empty() || center.len() > 3 {
                    return Err(Error::InvalidDomain(format!(
                        "ball dimension must be 1..=3, got {}",
                        center.len()
                    )));
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::InvalidDomain(format!("radius must be positive, got {radius}")));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            DomainGeometry::Interval { .. } => 1,
            DomainGeometry::Ball { center, .. } => center.len(),
        }
    }

    /// One-dimensional domains as `(lo, hi)`.
    pub fn as_interval(&self) -> Option<(f64, f64)> {
        match self {
            DomainGeometry::Interval { lo, hi } => Some((*lo, *hi)),
            DomainGeometry::Ball { center, radius } if center.len() == 1 => {
                Some((center[0] - radius, center[0] + radius))
            }
            _ => None,
        }
    }

    /// `(center, radius)` for balls and intervals alike.
    pub fn center_radius(&self) -> (Point, f64) {
        match self {
            DomainGeometry::Interval { lo, hi } => (Point::on_line(0.5 * (lo + hi)), 0.5 * (hi - lo)),
            DomainGeometry::Ball { center, radius } => (Point::from_slice(center), *radius),
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.boundary_distance(p) > 0.0
    }

    /// Signed distance to the boundary, positive inside.
    pub fn boundary_distance(&self, p: &Point) -> f64 {
        match self.as_interval() {
            Some((lo, hi)) => (p.x() - lo).min(hi - p.x()),
            None => {
                let (c, r) = self.center_radius();
                r - p.dist(&c)
            }
        }
    }

    /// Smallest gap between `self` and the complement of `outer`; positive iff
    /// the closure of `self` sits inside `outer`.
    pub fn margin_inside(&self, outer: &DomainGeometry) -> f64 {
        if self.dim() != outer.dim() {
            return f64::NEG_INFINITY;
        }
        match (self.as_interval(), outer.as_interval()) {
            (Some((a, b)), Some((lo, hi))) => (a - lo).min(hi - b),
            _ => {
                let (c, r) = self.center_radius();
                let (oc, or) = outer.center_radius();
                or - (c.dist(&oc) + r)
            }
        }
    }

    /// `U ⊂⊂ D`: closure of `self` inside `outer` with positive margin.
    pub fn strictly_inside(&self, outer: &DomainGeometry) -> bool {
        self.margin_inside(outer) > 0.0
    }

    pub fn label(&self) -> String {
        match self {
            DomainGeometry::Interval { lo, hi } => format!("({lo}, {hi})"),
            DomainGeometry::Ball { center, radius } => format!("B({center:?}, {radius})"),
        }
    }
}
