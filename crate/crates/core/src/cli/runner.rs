//! Manifest validation, gated execution and report output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::cli::config::{entry_seed, hash_hex, resolve_seed, CliOverrides, Entry, ExperimentConfig, Format, DEFAULT_PATHS};
use crate::convex::ConvexSpec;
use crate::error::{Error, Result};
use crate::model::harmonic::HarmonicFunction;
use crate::model::kernels::KernelFamily;
use crate::model::{DomainGeometry, Point};
use crate::path::{McConfig, Scheme, SchemeOptions};
use crate::quadrature::engine::Tolerance;
use crate::quadrature::terms::check_tail;
use crate::verify::{self, IdentityId, IdentityReport, Pathway, VerifyOptions};

pub const CSV_SCHEMA: &str = "# schema=hslab-report/1";
pub const CSV_COLUMNS: [&str; 9] =
    ["entry_id", "identity_id", "term", "pathway", "value", "uncertainty", "verdict", "seed", "config_hash"];

/// Identities attempted only after every isometry check has passed.
const GATED: [IdentityId; 2] = [IdentityId::HsBase, IdentityId::HsConditional];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Pass = 0,
    VerdictFailure = 1,
    ConfigError = 2,
    ComputationError = 3,
}

impl ExitStatus {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn for_error(e: &Error) -> Self {
        match e {
            Error::Config(_) | Error::Validation { .. } => ExitStatus::ConfigError,
            _ => ExitStatus::ComputationError,
        }
    }
}

/// Values actually used for one entry; hashed into the report provenance.
#[derive(Debug, Clone, Serialize)]
struct Resolved<'a> {
    entry: &'a Entry,
    seed: u64,
    n_paths: u64,
    pathway: Pathway,
    tol: (f64, f64),
    scheme: SchemeOptions,
    workers: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct PlannedEntry {
    pub entry: Entry,
    pub identities: Vec<IdentityId>,
    pub seed: u64,
    pub opts: VerifyOptions,
}

#[derive(Debug, Clone)]
pub struct Plan {
    pub master_seed: u64,
    pub config_hash: String,
    pub out: PathBuf,
    pub formats: Vec<Format>,
    pub entries: Vec<PlannedEntry>,
}

impl Plan {
    /// Loads, resolves and validates every entry without computing.
    pub fn build(cfg: &ExperimentConfig, cli: &CliOverrides) -> Result<Self> {
        let ov = &cfg.overrides;
        let master_seed = resolve_seed(cli.seed, ov.seed)?;
        let mut entries = Vec::new();
        for e in cfg.entries()? {
            let pathway = cli.pathway.or(ov.pathway).or(e.pathway).unwrap_or_default();
            let seed = entry_seed(master_seed, &e.id);
            let n_paths = cli.n_paths.or(ov.n_paths).or(e.n_paths).unwrap_or(DEFAULT_PATHS);
            let base = VerifyOptions::default();
            let scheme = SchemeOptions {
                step: ov.step.or(e.step).unwrap_or(base.scheme.step),
                delta_j: ov.delta_j.or(base.scheme.delta_j),
                eps_wos: ov.eps_wos.unwrap_or(base.scheme.eps_wos),
                ..base.scheme
            };
            let tol = (ov.tol_abs.unwrap_or(base.tol.abs), ov.tol_rel.unwrap_or(base.tol.rel));
            let resolved = Resolved { entry: &e, seed, n_paths, pathway, tol, scheme, workers: ov.workers };
            let opts = VerifyOptions {
                pathway,
                mc: McConfig { n_paths, seed, workers: ov.workers, ..McConfig::default() },
                scheme,
                tol: Tolerance::new(tol.0, tol.1),
                mc_rhs: e.mc_rhs.unwrap_or(base.mc_rhs),
                limit_rel: e.limit_rel.unwrap_or(base.limit_rel),
                entry_id: e.id.clone(),
                config_hash: hash_hex(&resolved),
                ..base
            };
            let identities = e.identity_ids()?;
            validate(&e, &identities, &opts)?;
            entries.push(PlannedEntry { entry: e, identities, seed, opts });
        }
        let hashes: Vec<&str> = entries.iter().map(|p| p.opts.config_hash.as_str()).collect();
        Ok(Plan {
            master_seed,
            config_hash: hash_hex(&(master_seed, &hashes)),
            out: cli.out.clone().unwrap_or_else(|| cfg.out.clone()),
            formats: cfg.formats.clone(),
            entries,
        })
    }

    /// Human-readable table of the resolved plan.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "master seed {}  config hash {}  out {}", self.master_seed, self.config_hash, self.out.display());
        let _ = writeln!(
            s,
            "{:<24} {:<40} {:<6} {:>20} {:>10} {:>12}  model / domain / subdomain",
            "entry", "identities", "path", "seed", "n_paths", "est. paths"
        );
        for p in &self.entries {
            let e = &p.entry;
            let sub = e.subdomain.as_ref().map_or("-".to_string(), |d| d.label());
            let _ = writeln!(
                s,
                "{:<24} {:<40} {:<6} {:>20} {:>10} {:>12}  {} / {} / {}",
                e.id,
                e.identities.join(","),
                p.opts.pathway.as_str(),
                p.seed,
                p.opts.mc.n_paths,
                estimated_paths(p),
                e.model.label(),
                e.domain.label(),
                sub
            );
        }
        let _ = writeln!(s, "{} entries", self.entries.len());
        s
    }
}

/// Rough count of simulated paths: one ensemble per Monte Carlo estimate.
fn estimated_paths(p: &PlannedEntry) -> u64 {
    if !p.opts.pathway.mc() {
        return 0;
    }
    let e = &p.entry;
    let ensembles: usize = p
        .identities
        .iter()
        .map(|id| match id {
            IdentityId::HsBase | IdentityId::MartingaleIso => 2,
            IdentityId::HsGeneral | IdentityId::HsConditional | IdentityId::LocaltimeChar => 1,
            IdentityId::HardyNorm | IdentityId::CondHardyNorm | IdentityId::P1Example => e.exhaustion,
            IdentityId::LpSquare => e.lp_p.len(),
        })
        .sum();
    p.opts.mc.n_paths * ensembles as u64
}

fn invalid(entry: &Entry, reason: impl std::fmt::Display) -> Error {
    Error::Validation { entry: entry.id.clone(), reason: reason.to_string() }
}

fn needs_subdomain(id: IdentityId) -> bool {
    matches!(
        id,
        IdentityId::HsBase
            | IdentityId::HsGeneral
            | IdentityId::HsConditional
            | IdentityId::MartingaleIso
            | IdentityId::LocaltimeChar
    )
}

fn needs_h(id: IdentityId) -> bool {
    matches!(id, IdentityId::HsConditional | IdentityId::CondHardyNorm)
}

/// Sample points of `D`: interior nodes of an interval, or of each axis
/// diameter of a ball.
fn sample_grid(d: &DomainGeometry, n: usize) -> Vec<Point> {
    let (c, r) = d.center_radius();
    let node = |i: usize| -1.0 + 2.0 * (i as f64 + 0.5) / n as f64;
    (0..d.dim())
        .flat_map(|axis| {
            (0..n).map(move |i| {
                let mut p = c;
                p.0[axis] += r * node(i);
                p
            })
        })
        .collect()
}

fn validate(e: &Entry, ids: &[IdentityId], opts: &VerifyOptions) -> Result<()> {
    if ids.is_empty() {
        return Err(invalid(e, "no identities listed"));
    }
    e.model.validate().map_err(|err| invalid(e, err))?;
    e.domain.validate().map_err(|err| invalid(e, err))?;
    if e.model.dim != e.domain.dim() {
        return Err(invalid(e, "model and domain dimensions differ"));
    }
    let x = e.point();
    if e.x.len() != e.domain.dim() || !e.domain.contains(&x) {
        return Err(invalid(e, format!("x = {:?} is not a point of D = {}", e.x, e.domain.label())));
    }
    let u = HarmonicFunction::build(&e.u, &e.model, &e.domain).map_err(|err| invalid(e, err))?;
    if ids.iter().any(|&id| needs_subdomain(id)) {
        let sub = e.subdomain.as_ref().ok_or_else(|| invalid(e, "a subdomain U is required"))?;
        sub.validate().map_err(|err| invalid(e, err))?;
        if !sub.strictly_inside(&e.domain) {
            return Err(invalid(e, format!("U = {} is not compactly inside D = {}", sub.label(), e.domain.label())));
        }
        if !sub.contains(&x) {
            return Err(invalid(e, format!("x = {:?} is not in U = {}", e.x, sub.label())));
        }
    }
    if ids.iter().any(|&id| needs_h(id)) {
        let spec = e.h.as_ref().ok_or_else(|| invalid(e, "a positive harmonic h is required"))?;
        let h = HarmonicFunction::build(spec, &e.model, &e.domain).map_err(|err| invalid(e, err))?;
        if let Some(p) = sample_grid(&e.domain, 65).iter().find(|p| !(h.eval(p) > 0.0)) {
            return Err(invalid(e, format!("h is not positive at {:?}", &p.0[..e.domain.dim()])));
        }
    }
    if e.model.has_jumps() {
        let mut specs: Vec<ConvexSpec> = Vec::new();
        for id in ids {
            match id {
                IdentityId::MartingaleIso => specs.push(ConvexSpec::Power { p: 2.0 }),
                IdentityId::LpSquare => specs.extend(e.lp_p.iter().map(|&p| ConvexSpec::Power { p })),
                IdentityId::P1Example | IdentityId::LocaltimeChar => {}
                _ => specs.push(e.phi.clone()),
            }
        }
        for s in &specs {
            s.validate().map_err(|err| invalid(e, err))?;
            check_tail(&e.model, s, u.growth()).map_err(|err| invalid(e, err))?;
        }
    }
    let exit_dom = e.subdomain.as_ref().unwrap_or(&e.domain);
    match opts.pathway {
        Pathway::Mc => {
            Scheme::for_model(&e.model, exit_dom, &opts.scheme)
                .map_err(|err| invalid(e, format!("pathway mc unavailable: {err}")))?;
        }
        Pathway::Quad => {
            KernelFamily::resolve(&e.model, &e.domain)
                .map_err(|err| invalid(e, format!("pathway quad unavailable: {err}")))?;
        }
        Pathway::Both => {
            let mc = Scheme::for_model(&e.model, exit_dom, &opts.scheme).is_ok();
            let quad = KernelFamily::resolve(&e.model, &e.domain).is_ok();
            if !mc && !quad {
                return Err(invalid(e, "neither pathway is available for this model and domain"));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntryError {
    pub identity_id: IdentityId,
    pub error: String,
}

/// Everything computed for one entry; serialized as its JSON report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntryOutcome {
    pub entry_id: String,
    pub seed: u64,
    pub config_hash: String,
    pub reports: Vec<IdentityReport>,
    pub errors: Vec<EntryError>,
    pub skipped: Vec<IdentityId>,
    /// Wall-clock seconds per identity; outside the determinism contract.
    #[serde(skip)]
    pub elapsed: Vec<(IdentityId, f64)>,
}

impl EntryOutcome {
    pub fn seconds(&self, id: IdentityId) -> Option<f64> {
        self.elapsed.iter().find(|(i, _)| *i == id).map(|&(_, t)| t)
    }

    pub fn passed(&self) -> bool {
        self.errors.is_empty() && self.skipped.is_empty() && self.reports.iter().all(|r| r.passed())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub entries: Vec<EntryOutcome>,
    pub gate_passed: bool,
}

impl RunOutcome {
    pub fn status(&self) -> ExitStatus {
        if self.entries.iter().any(|e| !e.errors.is_empty()) {
            ExitStatus::ComputationError
        } else if self.entries.iter().all(|e| e.passed()) {
            ExitStatus::Pass
        } else {
            ExitStatus::VerdictFailure
        }
    }

    pub fn report(&self, entry_id: &str, id: IdentityId) -> Option<&IdentityReport> {
        self.entries
            .iter()
            .find(|e| e.entry_id == entry_id)
            .and_then(|e| e.reports.iter().find(|r| r.identity_id == id))
    }
}

fn verify_identity(p: &PlannedEntry, id: IdentityId) -> Result<IdentityReport> {
    let e = &p.entry;
    let (m, d, x, o) = (&e.model, &e.domain, &e.point(), &p.opts);
    let u = HarmonicFunction::build(&e.u, m, d)?;
    let h = e.h.as_ref().map(|s| HarmonicFunction::build(s, m, d)).transpose()?;
    let sub = || e.subdomain.as_ref().ok_or_else(|| Error::InvalidDomain("missing subdomain".into()));
    let need_h = || h.as_ref().ok_or_else(|| Error::InvalidSpec("missing h".into()));
    let levels = || verify::exhaustion(d, e.exhaustion);
    match id {
        IdentityId::HsBase => verify::verify_hardy_stein(m, d, sub()?, x, &u, &e.phi, o),
        IdentityId::HsGeneral => verify::verify_general_convex(m, d, sub()?, x, &u, &e.phi, o),
        IdentityId::HsConditional => verify::verify_conditional(m, d, sub()?, x, &u, need_h()?, &e.phi, o),
        IdentityId::MartingaleIso => verify::martingale_isometry(m, d, sub()?, x, &u, o),
        IdentityId::LocaltimeChar => verify::verify_local_time_characterization(m, d, sub()?, x, &u, e.level, o),
        IdentityId::HardyNorm => verify::hardy_norm(m, d, x, &u, &e.phi, &levels()?, o),
        IdentityId::CondHardyNorm => verify::conditional_hardy_norm(m, d, x, &u, need_h()?, &e.phi, &levels()?, o),
        IdentityId::LpSquare => verify::lp_square_report(m, d, x, &u, h.as_ref(), &e.lp_p, o),
        IdentityId::P1Example => verify::p1_example(m, d, x, &u, &levels()?, o),
    }
}

/// Runs the isometry gate over all entries, then everything else; errors
/// are recorded per identity and never stop the run.
pub fn execute(plan: &Plan) -> RunOutcome {
    let timed = |p: &PlannedEntry, id: IdentityId| {
        let start = Instant::now();
        let r = verify_identity(p, id);
        (r, start.elapsed().as_secs_f64())
    };
    let mut done: Vec<BTreeMap<IdentityId, (Result<IdentityReport>, f64)>> = vec![BTreeMap::new(); plan.entries.len()];
    for (slot, p) in done.iter_mut().zip(&plan.entries) {
        if p.identities.contains(&IdentityId::MartingaleIso) {
            slot.insert(IdentityId::MartingaleIso, timed(p, IdentityId::MartingaleIso));
        }
    }
    let gate_passed = done
        .iter()
        .flat_map(|m| m.values())
        .all(|(r, _)| matches!(r, Ok(rep) if rep.passed()));
    let mut entries = Vec::new();
    for (mut slot, p) in done.into_iter().zip(&plan.entries) {
        let mut out = EntryOutcome {
            entry_id: p.entry.id.clone(),
            seed: p.seed,
            config_hash: p.opts.config_hash.clone(),
            reports: Vec::new(),
            errors: Vec::new(),
            skipped: Vec::new(),
            elapsed: Vec::new(),
        };
        for &id in &p.identities {
            if !gate_passed && GATED.contains(&id) {
                out.skipped.push(id);
                continue;
            }
            let (r, secs) = slot.remove(&id).unwrap_or_else(|| timed(p, id));
            out.elapsed.push((id, secs));
            match r {
                Ok(rep) => out.reports.push(rep),
                Err(err) => out.errors.push(EntryError { identity_id: id, error: err.to_string() }),
            }
        }
        entries.push(out);
    }
    RunOutcome { entries, gate_passed }
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("cannot write {}: {e}", path.display()))
}

/// Writes the CSV table and one JSON document per entry.
pub fn write_reports(plan: &Plan, outcome: &RunOutcome) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(&plan.out).map_err(|e| io_err(&plan.out, e))?;
    let mut written = Vec::new();
    if plan.formats.contains(&Format::Csv) {
        let path = plan.out.join("report.csv");
        std::fs::write(&path, csv_table(outcome)?).map_err(|e| io_err(&path, e))?;
        written.push(path);
    }
    if plan.formats.contains(&Format::Json) {
        for e in &outcome.entries {
            let path = plan.out.join(format!("{}.json", file_stem(&e.entry_id)));
            let text = serde_json::to_string_pretty(e).map_err(|err| io_err(&path, err))?;
            std::fs::write(&path, text + "\n").map_err(|err| io_err(&path, err))?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Report rows under the pinned schema line.
pub fn csv_table(outcome: &RunOutcome) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Config(format!("csv: {e}"));
    w.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for e in &outcome.entries {
        let seed = e.seed.to_string();
        for r in &e.reports {
            let verdict = if r.passed() { "pass" } else { "fail" };
            for t in &r.terms {
                w.write_record([
                    e.entry_id.as_str(),
                    r.identity_id.as_str(),
                    &t.term,
                    t.pathway.as_str(),
                    &format!("{:e}", t.value),
                    &format!("{:e}", t.uncertainty),
                    verdict,
                    &seed,
                    &e.config_hash,
                ])
                .map_err(csv_err)?;
            }
        }
        let status = e
            .errors
            .iter()
            .map(|err| (err.identity_id, "error"))
            .chain(e.skipped.iter().map(|&id| (id, "skipped")));
        for (id, verdict) in status {
            w.write_record([e.entry_id.as_str(), id.as_str(), "", "", "", "", verdict, &seed, &e.config_hash])
                .map_err(csv_err)?;
        }
    }
    let body = w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))?;
    Ok(format!("{CSV_SCHEMA}\n{}", String::from_utf8(body).expect("csv output is utf-8")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(text: &str) -> Result<Plan> {
        Plan::build(&ExperimentConfig::parse(text)?, &CliOverrides { seed: Some(1), ..Default::default() })
    }

    const BASE: &str = r#"
[[entry]]
id = "b"
identities = ["hs_base"]
model = { dim = 1, diffusion = 1.0 }
domain = { shape = "interval", lo = -2.0, hi = 2.0 }
subdomain = { shape = "interval", lo = -1.0, hi = 1.0 }
x = [0.0]
u = { kind = "affine", gradient = [1.0] }
pathway = "quad"
"#;

    #[test]
    fn empty_manifest_is_an_empty_pass() {
        let p = plan("").unwrap();
        let out = execute(&p);
        assert_eq!(out.status(), ExitStatus::Pass);
        assert_eq!(csv_table(&out).unwrap(), format!("{CSV_SCHEMA}\n{}\n", CSV_COLUMNS.join(",")));
    }

    #[test]
    fn validation_names_the_entry() {
        for (from, to) in [
            ("lo = -1.0, hi = 1.0", "lo = -2.0, hi = 1.0"),
            ("x = [0.0]", "x = [1.5]"),
            ("identities = [\"hs_base\"]", "identities = [\"hs_conditional\"]"),
        ] {
            let err = plan(&BASE.replace(from, to)).unwrap_err();
            assert!(matches!(&err, Error::Validation { entry, .. } if entry == "b"), "{err}");
            assert_eq!(ExitStatus::for_error(&err), ExitStatus::ConfigError);
        }
        let killed = BASE.replace("diffusion = 1.0", "diffusion = 1.0, killing = 0.5").replace("\"quad\"", "\"mc\"");
        assert!(matches!(plan(&killed), Err(Error::Validation { .. })));
    }

    #[test]
    fn rejects_nonpositive_h_and_divergent_tails() {
        let cond = BASE
            .replace("hs_base", "hs_conditional")
            .replace("lo = -1.0, hi = 1.0", "lo = -1.0, hi = 0.5")
            .replace("[1.0] }\n", "[1.0] }\nh = { kind = \"affine\", gradient = [1.0] }\n");
        let err = plan(&cond).unwrap_err();
        assert!(err.to_string().contains("h is not positive"), "{err}");
        let stable = BASE
            .replace("diffusion = 1.0", "jump = { kind = \"stable\", alpha = 1.5 }")
            .replace("\"quad\"", "\"both\"")
            .replace("[1.0] }\n", "[1.0] }\nphi = { kind = \"power\", p = 2.0 }\n");
        assert!(plan(&stable).unwrap_err().to_string().contains("grows like"));
    }

    #[test]
    fn quadrature_entry_runs_and_reports() {
        let p = plan(BASE).unwrap();
        let out = execute(&p);
        assert_eq!(out.status(), ExitStatus::Pass);
        let csv = csv_table(&out).unwrap();
        assert!(csv.lines().skip(2).all(|l| l.starts_with("b,hs_base,") && l.contains(",pass,")));
        assert!(p.describe().contains("hs_base"));
    }
}
