use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::geometry::Point;
use crate::path::ensemble::McConfig;
use crate::path::estimators::EstimatorResult;
use crate::path::sampler::SchemeOptions;
use crate::quadrature::engine::{QuadratureResult, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityId {
    HsBase,
    HsGeneral,
    HsConditional,
    HardyNorm,
    CondHardyNorm,
    LpSquare,
    MartingaleIso,
    LocaltimeChar,
    P1Example,
}

impl IdentityId {
    pub const ALL: [IdentityId; 9] = [
        IdentityId::HsBase,
        IdentityId::HsGeneral,
        IdentityId::HsConditional,
        IdentityId::HardyNorm,
        IdentityId::CondHardyNorm,
        IdentityId::LpSquare,
        IdentityId::MartingaleIso,
        IdentityId::LocaltimeChar,
        IdentityId::P1Example,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            IdentityId::HsBase => "hs_base",
            IdentityId::HsGeneral => "hs_general",
            IdentityId::HsConditional => "hs_conditional",
            IdentityId::HardyNorm => "hardy_norm",
            IdentityId::CondHardyNorm => "cond_hardy_norm",
            IdentityId::LpSquare => "lp_square",
            IdentityId::MartingaleIso => "martingale_iso",
            IdentityId::LocaltimeChar => "localtime_char",
            IdentityId::P1Example => "p1_example",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        IdentityId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown identity_id `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pathway {
    Mc,
    Quad,
    #[default]
    Both,
}

impl Pathway {
    pub fn mc(&self) -> bool {
        matches!(self, Pathway::Mc | Pathway::Both)
    }

    pub fn quad(&self) -> bool {
        matches!(self, Pathway::Quad | Pathway::Both)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Pathway::Mc => "mc",
            Pathway::Quad => "quad",
            Pathway::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mc" => Ok(Pathway::Mc),
            "quad" => Ok(Pathway::Quad),
            "both" => Ok(Pathway::Both),
            _ => Err(Error::Config(format!("unknown pathway `{s}`"))),
        }
    }
}

/// One term of an identity by one pathway.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermValue {
    pub term: String,
    pub pathway: Pathway,
    pub value: f64,
    pub uncertainty: f64,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub note: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Total {
    pub pathway: Pathway,
    pub value: f64,
    pub uncertainty: f64,
}

impl Total {
    pub fn quad(r: &QuadratureResult) -> Self {
        Total { pathway: Pathway::Quad, value: r.value, uncertainty: r.error_estimate }
    }

    pub fn mc(value: f64, stderr: f64) -> Self {
        Total { pathway: Pathway::Mc, value, uncertainty: stderr }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// `|delta| <= allowed`.
    Equal,
    /// `delta <= allowed`.
    AtMost,
}

/// A single comparison of `lhs` against `rhs` with `delta = lhs - rhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub label: String,
    pub kind: CheckKind,
    pub lhs: f64,
    pub rhs: f64,
    pub delta: f64,
    pub allowed: f64,
    pub pass: bool,
}

/// Rounding floor added to every allowance.
pub fn rounding_floor(scale: f64) -> f64 {
    64.0 * f64::EPSILON * scale.abs().max(1.0)
}

impl Check {
    pub fn equal(label: impl Into<String>, lhs: f64, rhs: f64, allowed: f64) -> Self {
        let allowed = allowed + rounding_floor(lhs.abs().max(rhs.abs()));
        let delta = lhs - rhs;
        Check { label: label.into(), kind: CheckKind::Equal, lhs, rhs, delta, allowed, pass: delta.abs() <= allowed }
    }

    /// `lhs <= rhs + allowed`.
    pub fn at_most(label: impl Into<String>, lhs: f64, rhs: f64, allowed: f64) -> Self {
        let allowed = allowed + rounding_floor(lhs.abs().max(rhs.abs()));
        let delta = lhs - rhs;
        let pass = lhs.is_finite() && delta <= allowed;
        Check { label: label.into(), kind: CheckKind::AtMost, lhs, rhs, delta, allowed, pass }
    }

    /// `|lhs - rhs| <= rel · |rhs|`.
    pub fn relative(label: impl Into<String>, lhs: f64, rhs: f64, rel: f64) -> Self {
        Check::equal(label, lhs, rhs, rel * rhs.abs())
    }

    pub fn margin(&self) -> f64 {
        if self.allowed.is_finite() {
            match self.kind {
                CheckKind::Equal => self.allowed - self.delta.abs(),
                CheckKind::AtMost => self.allowed - self.delta,
            }
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub pass: bool,
    /// Smallest `allowed - |delta|` over all checks.
    pub margin: f64,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub identity_id: IdentityId,
    pub entry_id: String,
    pub x: Vec<f64>,
    pub terms: Vec<TermValue>,
    pub lhs_total: Option<Total>,
    pub rhs_total: Option<Total>,
    pub checks: Vec<Check>,
    pub verdict: Verdict,
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl IdentityReport {
    pub fn term(&self, name: &str, pathway: Pathway) -> Option<&TermValue> {
        self.terms.iter().find(|t| t.term == name && t.pathway == pathway)
    }

    pub fn check(&self, label: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.label == label)
    }

    pub fn passed(&self) -> bool {
        self.verdict.pass
    }
}

/// Options shared by all verifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub pathway: Pathway,
    pub mc: McConfig,
    pub scheme: SchemeOptions,
    pub tol: Tolerance,
    /// Verdict multiplier on combined uncertainty.
    pub k: f64,
    /// Also assemble the Monte Carlo right-hand side from path functionals.
    pub mc_rhs: bool,
    /// Relative tolerance of exhaustion limits.
    pub limit_rel: f64,
    pub entry_id: String,
    pub config_hash: String,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            pathway: Pathway::Both,
            mc: McConfig::default(),
            scheme: SchemeOptions::default(),
            tol: Tolerance::new(1e-10, 1e-9),
            k: 3.0,
            mc_rhs: true,
            limit_rel: 0.02,
            entry_id: String::new(),
            config_hash: String::new(),
        }
    }
}

/// Accumulates terms and checks for one report.
pub(crate) struct Builder {
    id: IdentityId,
    x: Point,
    pub terms: Vec<TermValue>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub lhs: Option<Total>,
    pub rhs: Option<Total>,
}

impl Builder {
    pub fn new(id: IdentityId, x: &Point) -> Self {
        Builder { id, x: *x, terms: Vec::new(), checks: Vec::new(), notes: Vec::new(), lhs: None, rhs: None }
    }

    pub fn quad(&mut self, name: &str, r: &QuadratureResult) {
        self.terms.push(TermValue {
            term: name.to_string(),
            pathway: Pathway::Quad,
            value: r.value,
            uncertainty: r.error_estimate,
            note: r.singularity_flags.join("; "),
        });
    }

    pub fn mc(&mut self, name: &str, e: &EstimatorResult) {
        self.terms.push(TermValue {
            term: name.to_string(),
            pathway: Pathway::Mc,
            value: e.mean,
            uncertainty: e.stderr,
            note: e.bias_note.clone(),
        });
    }

    pub fn exact(&mut self, name: &str, value: f64) {
        self.quad(name, &QuadratureResult::exact(value));
    }

    pub fn set_totals(&mut self, lhs: Total, rhs: Total) {
        if self.lhs.is_none() || lhs.pathway == Pathway::Quad {
            self.lhs = Some(lhs);
        }
        if self.rhs.is_none() || rhs.pathway == Pathway::Quad {
            self.rhs = Some(rhs);
        }
    }

    pub fn finish(self, opts: &VerifyOptions) -> IdentityReport {
        let pass = !self.checks.is_empty() && self.checks.iter().all(|c| c.pass);
        let margin = self.checks.iter().map(Check::margin).fold(f64::INFINITY, f64::min);
        let mut notes = self.notes;
        if self.checks.is_empty() {
            notes.push("no pathway produced a comparison".into());
        }
        IdentityReport {
            identity_id: self.id,
            entry_id: opts.entry_id.clone(),
            x: self.x.0.to_vec(),
            terms: self.terms,
            lhs_total: self.lhs,
            rhs_total: self.rhs,
            checks: self.checks,
            verdict: Verdict { pass, margin, k: opts.k },
            provenance: Provenance { config_hash: opts.config_hash.clone(), seed: opts.mc.seed },
            notes,
        }
    }
}

/// Runs a pathway, turning "no such pathway for this model" into a note when
/// the other pathway is also requested.
pub(crate) fn optional<T>(
    enabled: bool,
    both: bool,
    b: &mut Builder,
    what: &str,
    f: impl FnOnce() -> Result<T>,
) -> Result<Option<T>> {
    if !enabled {
        return Ok(None);
    }
    match f() {
        Ok(v) => Ok(Some(v)),
        Err(e @ (Error::UnsupportedModelDomain { .. } | Error::UnsupportedModel(_))) if both => {
            b.notes.push(format!("{what} skipped: {e}"));
            Ok(None)
        }
        Err(e) => Err(e),
    }
}
