//! Manifests, JSON reports and CSV tables behind the command-line tool.
//!
//! Every report starts with a header carrying the tool version, the tolerances and the seed.
//! Reports contain no timestamps or absolute paths, so identical inputs give identical bytes.
//! Files are written to a temporary sibling and renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::certify::{Certificate, ProbeSummary, Verdict};
use crate::classification::Classification;
use crate::deep::{DeepCertifiedPoint, DeepInstance, DeepSpec};
use crate::error::{Error, Result};
use crate::factor::BlockPattern;
use crate::matrix::{MatrixJson, MatrixSource};
use crate::relu::{ActivationCone, ConeFinding, FreeParams, ReducedProblem, ReluCertifiedPoint, ReluInstance};
use crate::shallow::{CertifiedPoint, CriticalPointSpec, ShallowInstance};
use crate::spectral::GroupedSvd;
use crate::witness::{Witness, WitnessKind, DEFAULT_DELTA, DEFAULT_EPS, DEFAULT_EPS1};
use crate::{Matrix, Tolerances, VERSION};

pub const THREADS_ENV: &str = "LANDSCAPE_LAB_THREADS";
pub const PROBE_RADIUS: f64 = 1e-3;
pub const PROBE_SAMPLES: usize = 2000;
/// Probe decreases smaller than this, relative to `1 + loss`, count as roundoff.
pub const PROBE_FLOOR: f64 = 1e-12;
pub const GOLDEN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Shallow,
    Deep,
    Relu,
    Example1,
    Certify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WitnessRequest {
    NonOptimal,
    Optimal,
    Ascent,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub command: Command,
    pub input: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub group_tol: Option<f64>,
    pub crit_tol: Option<f64>,
    pub margin: Option<f64>,
    pub witness: Vec<WitnessRequest>,
    pub search: bool,
    /// Shifts every golden expectation; exercises the mismatch path.
    pub perturb_golden: f64,
}

impl RunOptions {
    pub fn new(command: Command, out: impl Into<PathBuf>) -> Self {
        RunOptions {
            command,
            input: None,
            out: out.into(),
            seed: 0,
            group_tol: None,
            crit_tol: None,
            margin: None,
            witness: vec![],
            search: false,
            perturb_golden: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    Ok,
    CertificationFailure,
    InputError,
    GoldenMismatch,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::InputError => 2,
            Status::CertificationFailure => 3,
            Status::GoldenMismatch => 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: Status,
    pub report: PathBuf,
    pub table: Option<PathBuf>,
}

/// Input problems map to 2, everything numerical to 3.
pub fn status_for(err: &Error) -> Status {
    match err {
        Error::InvalidInput(_)
        | Error::Dimension(_)
        | Error::InvalidSpec(_)
        | Error::Parse { .. }
        | Error::Io(_)
        | Error::NonRectangular
        | Error::SearchBudgetExceeded { .. } => Status::InputError,
        _ => Status::CertificationFailure,
    }
}

/// Reads the thread cap from the environment and sizes the global pool once.
pub fn configure_threads() -> Result<Option<usize>> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidInput(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    // A second call in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(Some(n))
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// `report.json` becomes `report.<suffix>.csv`.
pub fn table_path(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    out.with_file_name(format!("{stem}.{suffix}.csv"))
}

#[derive(Debug, Clone, Serialize)]
pub struct Header {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: Command,
    pub seed: u64,
    pub tolerances: Tolerances,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
}

#[derive(Debug, Serialize)]
struct Report<B: Serialize> {
    header: Header,
    status: &'static str,
    #[serde(flatten)]
    body: B,
}

fn status_name(s: Status) -> &'static str {
    match s {
        Status::Ok => "ok",
        Status::InputError => "input-error",
        Status::CertificationFailure => "certification-failure",
        Status::GoldenMismatch => "golden-mismatch",
    }
}

// ---------------------------------------------------------------- manifests

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShallowManifest {
    pub x: MatrixSource,
    pub y: MatrixSource,
    pub d1: usize,
    #[serde(default)]
    pub tolerances: Option<Tolerances>,
    #[serde(default)]
    pub points: Vec<ShallowPointSpec>,
    #[serde(default)]
    pub weights: Vec<WeightsSpec>,
    #[serde(default)]
    pub witness: Vec<WitnessRequest>,
    #[serde(default)]
    pub eps: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShallowPointSpec {
    pub name: String,
    pub pattern: BlockPattern,
    #[serde(default)]
    pub c: Option<MatrixSource>,
    #[serde(default)]
    pub l1: Option<MatrixSource>,
}

/// A point given directly by its layers, first layer first.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSpec {
    pub name: String,
    pub layers: Vec<MatrixSource>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeepManifest {
    pub x: MatrixSource,
    pub y: MatrixSource,
    pub dims: Vec<usize>,
    #[serde(default)]
    pub tolerances: Option<Tolerances>,
    #[serde(default)]
    pub points: Vec<DeepPointSpec>,
    #[serde(default)]
    pub weights: Vec<WeightsSpec>,
    #[serde(default)]
    pub witness: Vec<WitnessRequest>,
    #[serde(default)]
    pub eps: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeepPointSpec {
    pub name: String,
    pub pattern: BlockPattern,
    #[serde(default)]
    pub levels: Vec<DeepLevelSpec>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeepLevelSpec {
    #[serde(default)]
    pub c: Option<MatrixSource>,
    #[serde(default)]
    pub l: Option<MatrixSource>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReluManifest {
    pub x: MatrixSource,
    pub y: MatrixSource,
    pub d1: usize,
    #[serde(default)]
    pub tolerances: Option<Tolerances>,
    #[serde(default)]
    pub cones: Vec<ReluConeSpec>,
    #[serde(default)]
    pub weights: Vec<WeightsSpec>,
    #[serde(default)]
    pub search: bool,
    #[serde(default)]
    pub probe: Option<ProbeSpec>,
}

/// A cone with 1-based `i`, `j` and a spec for its reduced problem.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReluConeSpec {
    pub name: String,
    pub i: Vec<usize>,
    pub j: Vec<usize>,
    #[serde(default)]
    pub margin: Option<f64>,
    pub pattern: BlockPattern,
    #[serde(default)]
    pub c: Option<MatrixSource>,
    #[serde(default)]
    pub l1: Option<MatrixSource>,
    #[serde(default)]
    pub a1_rows: Option<MatrixSource>,
    #[serde(default)]
    pub a2_cols: Option<MatrixSource>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_radius() -> f64 {
    PROBE_RADIUS
}
fn default_samples() -> usize {
    PROBE_SAMPLES
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Shallow,
    Deep,
    Relu,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyManifest {
    pub model: Model,
    pub x: MatrixSource,
    pub y: MatrixSource,
    #[serde(default)]
    pub tolerances: Option<Tolerances>,
    pub weights: Vec<WeightsSpec>,
    #[serde(default)]
    pub probe: Option<ProbeSpec>,
}

fn read_manifest<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse { path: path.display().to_string(), msg: e.to_string() })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.display().to_string(), msg: e.to_string() })
}

fn load_opt(src: &Option<MatrixSource>, base: Option<&Path>) -> Result<Option<Matrix>> {
    src.as_ref().map(|s| s.load(base)).transpose()
}

fn load_layers(w: &WeightsSpec, base: Option<&Path>) -> Result<Vec<Matrix>> {
    w.layers.iter().map(|s| s.load(base)).collect()
}

fn one_based(idx: &[usize], what: &str) -> Result<Vec<usize>> {
    idx.iter()
        .map(|&k| k.checked_sub(1).ok_or_else(|| Error::InvalidSpec(format!("{what} indices are 1-based, got 0"))))
        .collect()
}

fn to_one_based(idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|k| k + 1).collect()
}

// ---------------------------------------------------------------- report pieces

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub groups: Vec<(f64, usize)>,
    pub zero_count: usize,
}

impl From<&GroupedSvd> for SpectrumReport {
    fn from(g: &GroupedSvd) -> Self {
        SpectrumReport { groups: g.groups.iter().map(|e| (e.sigma, e.multiplicity)).collect(), zero_count: g.zero_count }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WitnessReport {
    pub requested: WitnessRequest,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measured_change: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<MatrixJson>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointReport {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<Classification>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_formula: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pattern: Option<BlockPattern>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub side_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consistency: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub projector: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level_patterns: Option<Vec<BlockPattern>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Certificate>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub weights: Vec<MatrixJson>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub witnesses: Vec<WitnessReport>,
}

impl PointReport {
    fn failed(name: &str, err: &Error) -> Self {
        PointReport { error: Some(err.to_string()), ..Self::empty(name) }
    }

    fn empty(name: &str) -> Self {
        PointReport {
            name: name.to_string(),
            error: None,
            classification: None,
            loss: None,
            loss_formula: None,
            pattern: None,
            side_residual: None,
            block_residual: None,
            consistency: None,
            projector: None,
            level_patterns: None,
            certificate: None,
            weights: vec![],
            witnesses: vec![],
        }
    }

    fn from_point(name: &str, p: &CertifiedPoint) -> Self {
        PointReport {
            classification: Some(p.classification),
            loss: Some(p.loss),
            pattern: p.pattern.clone(),
            side_residual: p.side_residual,
            block_residual: p.block_residual,
            certificate: Some(p.certificate.clone()),
            weights: p.weights.iter().map(MatrixJson::from).collect(),
            ..Self::empty(name)
        }
    }

    fn from_deep(name: &str, p: &DeepCertifiedPoint) -> Self {
        PointReport {
            consistency: (!p.consistency.is_empty()).then(|| p.consistency.clone()),
            projector: Some(p.projector.clone()),
            level_patterns: Some(p.level_patterns.clone()),
            ..Self::from_point(name, &p.point)
        }
    }
}

/// One row of the witness table.
#[derive(Debug, Clone, Serialize)]
pub struct WitnessRow {
    pub point: String,
    pub kind: &'static str,
    pub level: Option<usize>,
    pub i: Option<usize>,
    pub j: Option<usize>,
    pub sigma_i: Option<f64>,
    pub sigma_j: Option<f64>,
    pub eps: f64,
    pub loss_before: f64,
    pub loss_after: f64,
    pub measured_change: f64,
    pub predicted_change: f64,
    pub rank_before: usize,
    pub rank_after: usize,
}

impl WitnessRow {
    fn new(point: &str, w: &Witness) -> Self {
        let (kind, level, i, j, si, sj) = match w.kind {
            WitnessKind::NonOptimalOrder { level, i, j, sigma_i, sigma_j } => {
                ("non-optimal", Some(level), Some(i), Some(j), Some(sigma_i), Some(sigma_j))
            }
            WitnessKind::OptimalOrder { sigma, .. } => ("optimal", None, None, None, Some(sigma), None),
            WitnessKind::Ascent { .. } => ("ascent", None, None, None, None, None),
        };
        WitnessRow {
            point: point.to_string(),
            kind,
            level,
            i,
            j,
            sigma_i: si,
            sigma_j: sj,
            eps: w.eps,
            loss_before: w.loss_before,
            loss_after: w.loss_after,
            measured_change: w.measured_change(),
            predicted_change: w.predicted_change,
            rank_before: w.rank_before,
            rank_after: w.rank_after,
        }
    }
}

/// One row of the search table; `j` is 1-based and space separated.
#[derive(Debug, Clone, Serialize)]
pub struct SearchRow {
    pub cone: String,
    pub j: String,
    pub group: Option<usize>,
    pub sigma: f64,
    pub c: f64,
    pub loss: f64,
    pub predicted_loss: f64,
    pub slack: f64,
    pub constant: bool,
}

impl From<&ConeFinding> for SearchRow {
    fn from(f: &ConeFinding) -> Self {
        let j = to_one_based(&f.j).iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" ");
        SearchRow {
            cone: ActivationCone::new(if f.constant { vec![] } else { vec![0] }, f.j.clone()).label(),
            j,
            group: f.group,
            sigma: f.sigma,
            c: f.c,
            loss: f.loss,
            predicted_loss: f.predicted_loss,
            slack: f.slack,
            constant: f.constant,
        }
    }
}

pub fn csv_table<R: Serialize>(rows: &[R], header: &[&str]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(!rows.is_empty()).from_writer(vec![]);
    if rows.is_empty() {
        w.write_record(header).map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))
}

const WITNESS_HEADER: &[&str] = &[
    "point",
    "kind",
    "level",
    "i",
    "j",
    "sigma_i",
    "sigma_j",
    "eps",
    "loss_before",
    "loss_after",
    "measured_change",
    "predicted_change",
    "rank_before",
    "rank_after",
];
const SEARCH_HEADER: &[&str] = &["cone", "j", "group", "sigma", "c", "loss", "predicted_loss", "slack", "constant"];

// ---------------------------------------------------------------- running

struct Collected<B> {
    body: B,
    status: Status,
    table: Option<(&'static str, Vec<u8>)>,
}

fn tolerances(opts: &RunOptions, from_manifest: Option<Tolerances>) -> Tolerances {
    let mut t = from_manifest.unwrap_or_default();
    if let Some(g) = opts.group_tol {
        t.group_tol = g;
    }
    if let Some(c) = opts.crit_tol {
        t.crit_tol = c;
    }
    t
}

fn header(opts: &RunOptions, tol: Tolerances) -> Header {
    Header {
        tool: "landscape-lab",
        version: VERSION,
        command: opts.command,
        seed: opts.seed,
        tolerances: tol,
        margin: opts.margin,
        input: opts.input.as_ref().and_then(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()),
    }
}

fn validate_tolerances(t: &Tolerances) -> Result<()> {
    let all = [t.group_tol, t.crit_tol, t.side_tol, t.block_tol, t.fd_step, t.fd_rel_tol];
    if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidInput(format!("tolerances must be positive and finite: {t:?}")));
    }
    Ok(())
}

/// Runs one command and writes its report (and table, when there is one).
pub fn run(opts: &RunOptions) -> Result<Outcome> {
    if opts.margin.is_some_and(|m| !(m.is_finite() && m >= 0.0)) {
        return Err(Error::InvalidInput("--margin must be a nonnegative real".into()));
    }
    match opts.command {
        Command::Shallow => {
            let (m, base) = manifest::<ShallowManifest>(opts)?;
            let tol = tolerances(opts, m.tolerances);
            validate_tolerances(&tol)?;
            let c = run_shallow(&m, base.as_deref(), tol, opts)?;
            finish(opts, tol, c)
        }
        Command::Deep => {
            let (m, base) = manifest::<DeepManifest>(opts)?;
            let tol = tolerances(opts, m.tolerances);
            validate_tolerances(&tol)?;
            let c = run_deep(&m, base.as_deref(), tol, opts)?;
            finish(opts, tol, c)
        }
        Command::Relu => {
            let (m, base) = manifest::<ReluManifest>(opts)?;
            let tol = tolerances(opts, m.tolerances);
            validate_tolerances(&tol)?;
            let c = run_relu(&m, base.as_deref(), tol, opts)?;
            finish(opts, tol, c)
        }
        Command::Certify => {
            let (m, base) = manifest::<CertifyManifest>(opts)?;
            let tol = tolerances(opts, m.tolerances);
            validate_tolerances(&tol)?;
            let c = run_certify(&m, base.as_deref(), tol, opts)?;
            finish(opts, tol, c)
        }
        Command::Example1 => {
            let tol = tolerances(opts, None);
            validate_tolerances(&tol)?;
            let c = run_example1(tol, opts)?;
            finish(opts, tol, c)
        }
    }
}

fn manifest<T: for<'de> Deserialize<'de>>(opts: &RunOptions) -> Result<(T, Option<PathBuf>)> {
    let path = opts
        .input
        .as_ref()
        .ok_or_else(|| Error::InvalidInput(format!("{:?} needs --input", opts.command).to_lowercase()))?;
    let m = read_manifest(path)?;
    Ok((m, path.parent().map(Path::to_path_buf)))
}

fn finish<B: Serialize>(opts: &RunOptions, tol: Tolerances, c: Collected<B>) -> Result<Outcome> {
    let report = Report { header: header(opts, tol), status: status_name(c.status), body: c.body };
    let mut bytes = serde_json::to_vec_pretty(&report).map_err(|e| Error::InvalidInput(e.to_string()))?;
    bytes.push(b'\n');
    let table = match c.table {
        Some((suffix, data)) => {
            let p = table_path(&opts.out, suffix);
            write_atomic(&p, &data)?;
            Some(p)
        }
        None => None,
    };
    write_atomic(&opts.out, &bytes)?;
    Ok(Outcome { status: c.status, report: opts.out.clone(), table })
}

fn worse(a: Status, b: Status) -> Status {
    a.max(b)
}

fn point_status(p: &PointReport, err: Option<&Error>) -> Status {
    match (err, p.classification) {
        (Some(e), _) => status_for(e),
        (None, Some(Classification::NotCritical)) => Status::CertificationFailure,
        _ => Status::Ok,
    }
}

fn witness_requests(opts: &RunOptions, manifest: &[WitnessRequest]) -> Vec<WitnessRequest> {
    let mut all: Vec<WitnessRequest> = manifest.iter().chain(&opts.witness).copied().collect();
    let mut seen = Vec::new();
    all.retain(|w| {
        let fresh = !seen.contains(w);
        seen.push(*w);
        fresh
    });
    all
}

/// Applies each request; wrong-class requests are recorded as skipped.
fn attach_witnesses(
    rep: &mut PointReport,
    rows: &mut Vec<WitnessRow>,
    requests: &[WitnessRequest],
    eps: Option<f64>,
    mut make: impl FnMut(WitnessRequest, f64) -> Result<Witness>,
) -> Status {
    let mut status = Status::Ok;
    for &req in requests {
        let e = eps.unwrap_or(match req {
            WitnessRequest::NonOptimal => DEFAULT_EPS,
            WitnessRequest::Optimal => DEFAULT_EPS1,
            WitnessRequest::Ascent => DEFAULT_DELTA,
        });
        let entry = match make(req, e) {
            Ok(w) => {
                rows.push(WitnessRow::new(&rep.name, &w));
                WitnessReport {
                    requested: req,
                    skipped: None,
                    measured_change: Some(w.measured_change()),
                    weights: Some(w.weights.iter().map(MatrixJson::from).collect()),
                    witness: Some(w),
                }
            }
            Err(err) => {
                if !matches!(err, Error::WrongClass { .. } | Error::NotInX) {
                    status = worse(status, status_for(&err));
                }
                WitnessReport { requested: req, skipped: Some(err.to_string()), witness: None, measured_change: None, weights: None }
            }
        };
        rep.witnesses.push(entry);
    }
    status
}

#[derive(Debug, Serialize)]
struct LinearBody {
    dims: Vec<usize>,
    spectrum: SpectrumReport,
    global_min_value: f64,
    points: Vec<PointReport>,
}

fn witness_table(rows: &[WitnessRow], requested: bool) -> Result<Option<(&'static str, Vec<u8>)>> {
    Ok(if requested { Some(("witnesses", csv_table(rows, WITNESS_HEADER)?)) } else { None })
}

fn run_shallow(m: &ShallowManifest, base: Option<&Path>, tol: Tolerances, opts: &RunOptions) -> Result<Collected<LinearBody>> {
    let inst = ShallowInstance::with_tolerances(m.x.load(base)?, m.y.load(base)?, m.d1, tol)?;
    let requests = witness_requests(opts, &m.witness);
    let mut status = Status::Ok;
    let mut rows = Vec::new();
    let mut points = Vec::new();
    let eval_spec = |p: &ShallowPointSpec| -> Result<CertifiedPoint> {
        let mut spec = CriticalPointSpec::canonical(&inst, &p.pattern)?;
        if let Some(c) = load_opt(&p.c, base)? {
            spec = spec.with_c(c);
        }
        if let Some(l1) = load_opt(&p.l1, base)? {
            spec = spec.with_l1(l1);
        }
        inst.construct_critical(&spec)
    };
    let constructed = m.points.iter().map(|p| (p.name.as_str(), eval_spec(p), true));
    let given = m.weights.iter().map(|w| {
        let pt = load_layers(w, base).and_then(|ls| match ls.as_slice() {
            [a1, a2] => inst.certify_point(a1, a2),
            _ => Err(Error::InvalidInput(format!("{}: a shallow point has 2 layers, got {}", w.name, ls.len()))),
        });
        (w.name.as_str(), pt, false)
    });
    for (name, res, from_spec) in constructed.chain(given).collect::<Vec<_>>() {
        let mut rep = match &res {
            Ok(p) => PointReport::from_point(name, p),
            Err(e) => PointReport::failed(name, e),
        };
        status = worse(status, point_status(&rep, res.as_ref().err()));
        if let Ok(p) = &res {
            if from_spec {
                rep.loss_formula = p.pattern.as_ref().and_then(|pat| inst.loss_formula(pat).ok());
            }
            let (a1, a2) = (&p.weights[0], &p.weights[1]);
            let s = attach_witnesses(&mut rep, &mut rows, &requests, m.eps, |req, e| match req {
                WitnessRequest::NonOptimal => inst.descent_witness_non_optimal(a1, a2, e),
                WitnessRequest::Optimal => inst.descent_witness_optimal(a1, a2, e),
                WitnessRequest::Ascent => inst.ascent_witness(a1, a2, e),
            });
            status = worse(status, s);
        }
        points.push(rep);
    }
    Ok(Collected {
        body: LinearBody {
            dims: vec![inst.d0(), inst.d1(), inst.d2()],
            spectrum: inst.sigma().into(),
            global_min_value: inst.global_min_value(),
            points,
        },
        status,
        table: witness_table(&rows, !requests.is_empty())?,
    })
}

fn run_deep(m: &DeepManifest, base: Option<&Path>, tol: Tolerances, opts: &RunOptions) -> Result<Collected<LinearBody>> {
    let inst = DeepInstance::with_tolerances(m.x.load(base)?, m.y.load(base)?, m.dims.clone(), tol)?;
    let requests = witness_requests(opts, &m.witness);
    let mut status = Status::Ok;
    let mut rows = Vec::new();
    let mut points = Vec::new();
    let eval_spec = |p: &DeepPointSpec| -> Result<DeepCertifiedPoint> {
        let mut spec = DeepSpec::canonical(&inst, &p.pattern)?;
        if p.levels.len() > spec.levels.len() {
            return Err(Error::InvalidSpec(format!("{} level entries for depth {}", p.levels.len(), inst.depth())));
        }
        for (k, lv) in p.levels.iter().enumerate() {
            spec.levels[k].c = load_opt(&lv.c, base)?;
            spec.levels[k].l = load_opt(&lv.l, base)?;
        }
        inst.construct(&spec)
    };
    let constructed = m.points.iter().map(|p| (p.name.as_str(), eval_spec(p), true));
    let given = m
        .weights
        .iter()
        .map(|w| (w.name.as_str(), load_layers(w, base).and_then(|ls| inst.certify_point(&ls)), false));
    for (name, res, from_spec) in constructed.chain(given).collect::<Vec<_>>() {
        let mut rep = match &res {
            Ok(p) => PointReport::from_deep(name, p),
            Err(e) => PointReport::failed(name, e),
        };
        status = worse(status, point_status(&rep, res.as_ref().err()));
        if let Ok(p) = &res {
            if from_spec {
                rep.loss_formula = p.point.pattern.as_ref().and_then(|pat| inst.loss_formula(pat).ok());
            }
            let ws = &p.point.weights;
            let s = attach_witnesses(&mut rep, &mut rows, &requests, m.eps, |req, e| match req {
                WitnessRequest::NonOptimal => inst.descent_witness_non_optimal(ws, e),
                WitnessRequest::Optimal => inst.descent_witness_optimal(ws, e),
                WitnessRequest::Ascent => inst.ascent_witness(ws, e),
            });
            status = worse(status, s);
        }
        points.push(rep);
    }
    Ok(Collected {
        body: LinearBody {
            dims: inst.dims().to_vec(),
            spectrum: inst.sigma0().into(),
            global_min_value: inst.global_min_value(),
            points,
        },
        status,
        table: witness_table(&rows, !requests.is_empty())?,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConeReport {
    pub name: String,
    pub cone: String,
    pub i: Vec<usize>,
    pub j: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
    /// `1/2 Tr YY^T - 1/2 sum_i p_i sigma_i(J)` for the reduced pattern.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_law: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub membership: Option<crate::relu::ConeMembership>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Certificate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reduced_classification: Option<Classification>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub weights: Vec<MatrixJson>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    #[serde(flatten)]
    pub summary: ProbeSummary,
    pub decrease_found: bool,
}

impl ProbeReport {
    fn new(summary: ProbeSummary, loss: f64) -> Self {
        ProbeReport { summary, decrease_found: summary.min_delta < -PROBE_FLOOR * (1.0 + loss.abs()) }
    }
}

impl ConeReport {
    fn new(name: &str, cone: &ActivationCone) -> Self {
        ConeReport {
            name: name.to_string(),
            cone: cone.label(),
            i: to_one_based(&cone.i),
            j: to_one_based(&cone.j),
            error: None,
            loss: None,
            offset: None,
            loss_law: None,
            membership: None,
            certificate: None,
            reduced_classification: None,
            probe: None,
            weights: vec![],
        }
    }

    fn fill(&mut self, inst: &ReluInstance, p: &ReluCertifiedPoint) {
        self.loss = Some(p.loss);
        self.offset = Some(p.offset);
        self.membership = Some(p.membership);
        self.certificate = Some(p.certificate.clone());
        self.weights = vec![MatrixJson::from(&p.a1), MatrixJson::from(&p.a2)];
        if let Some(r) = &p.reduced {
            self.reduced_classification = Some(r.classification);
            if let (Some(pat), Ok(ReducedProblem::Linear { inst: red, .. })) = (&r.pattern, inst.reduced_instance(&p.cone)) {
                self.loss_law = Some(0.5 * (inst.y().norm_squared() - pat.captured(red.sigma())));
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FindingReport {
    pub cone: String,
    pub j: Vec<usize>,
    #[serde(flatten)]
    pub finding: ConeFinding,
    pub a1: MatrixJson,
    pub a2: MatrixJson,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeReport>,
}

fn finding_report(inst: &ReluInstance, f: &ConeFinding, probe: Option<ProbeSpec>, seed: u64) -> Result<FindingReport> {
    let cone = if f.constant { ActivationCone::new(vec![], vec![]) } else { ActivationCone::new(vec![0], f.j.clone()) };
    let probe = match probe {
        Some(ps) if !f.constant => Some(ProbeReport::new(
            inst.local_min_probe_in_cone(&f.a1, &f.a2, &cone, ps.radius, ps.samples, seed)?,
            f.loss,
        )),
        _ => None,
    };
    Ok(FindingReport {
        cone: cone.label(),
        j: to_one_based(&f.j),
        finding: f.clone(),
        a1: (&f.a1).into(),
        a2: (&f.a2).into(),
        probe,
    })
}

#[derive(Debug, Serialize)]
struct ReluBody {
    dims: Vec<usize>,
    constant_value: f64,
    cones: Vec<ConeReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    points: Vec<ConeReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    search: Option<Vec<FindingReport>>,
}

fn cone_from_spec(c: &ReluConeSpec, opts: &RunOptions) -> Result<ActivationCone> {
    let mut cone = ActivationCone::new(one_based(&c.i, "I")?, one_based(&c.j, "J")?);
    if let Some(mg) = opts.margin.or(c.margin) {
        cone = cone.with_margin(mg);
    }
    Ok(cone)
}

fn run_relu(m: &ReluManifest, base: Option<&Path>, tol: Tolerances, opts: &RunOptions) -> Result<Collected<ReluBody>> {
    let inst = ReluInstance::with_tolerances(m.x.load(base)?, m.y.load(base)?, m.d1, tol)?;
    let mut status = Status::Ok;
    let mut cones = Vec::new();
    for c in &m.cones {
        let cone = cone_from_spec(c, opts)?;
        let mut rep = ConeReport::new(&c.name, &cone);
        let res = (|| -> Result<ReluCertifiedPoint> {
            let ReducedProblem::Linear { inst: red, .. } = inst.reduced_instance(&cone)? else {
                return Err(Error::InvalidSpec(format!("{}: the constant cone has no reduced spec", c.name)));
            };
            let mut spec = CriticalPointSpec::canonical(&red, &c.pattern)?;
            if let Some(cm) = load_opt(&c.c, base)? {
                spec = spec.with_c(cm);
            }
            if let Some(l1) = load_opt(&c.l1, base)? {
                spec = spec.with_l1(l1);
            }
            let free = FreeParams { a1_rows: load_opt(&c.a1_rows, base)?, a2_cols: load_opt(&c.a2_cols, base)? };
            inst.construct_relu_critical(&cone, &spec, &free)
        })();
        match res {
            Ok(p) => {
                rep.fill(&inst, &p);
                if p.certificate.verdict != Verdict::Critical {
                    status = worse(status, Status::CertificationFailure);
                }
                if let Some(ps) = m.probe {
                    let s = inst.local_min_probe_in_cone(&p.a1, &p.a2, &cone, ps.radius, ps.samples, opts.seed)?;
                    rep.probe = Some(ProbeReport::new(s, p.loss));
                }
            }
            Err(e) => {
                status = worse(status, status_for(&e));
                rep.error = Some(e.to_string());
            }
        }
        cones.push(rep);
    }
    let mut points = Vec::new();
    for w in &m.weights {
        let res = load_layers(w, base).and_then(|ls| match ls.as_slice() {
            [a1, a2] => inst.certify_point(a1, a2),
            _ => Err(Error::InvalidInput(format!("{}: a ReLU point has 2 layers, got {}", w.name, ls.len()))),
        });
        let (rep, s) = relu_point_report(&inst, &w.name, res, m.probe, opts.seed);
        status = worse(status, s);
        points.push(rep);
    }
    let (search, table) = if m.search || opts.search {
        let found = inst.exist_search_d1_1(opts.seed)?;
        let rows: Vec<SearchRow> = found.iter().map(SearchRow::from).collect();
        let reps = found.iter().map(|f| finding_report(&inst, f, m.probe, opts.seed)).collect::<Result<Vec<_>>>()?;
        (Some(reps), Some(("search", csv_table(&rows, SEARCH_HEADER)?)))
    } else {
        (None, None)
    };
    Ok(Collected {
        body: ReluBody {
            dims: vec![inst.x().nrows(), inst.d1(), inst.y().nrows()],
            constant_value: 0.5 * inst.y().norm_squared(),
            cones,
            points,
            search,
        },
        status,
        table,
    })
}

fn relu_point_report(
    inst: &ReluInstance,
    name: &str,
    res: Result<ReluCertifiedPoint>,
    probe: Option<ProbeSpec>,
    seed: u64,
) -> (ConeReport, Status) {
    match res {
        Ok(p) => {
            let mut rep = ConeReport::new(name, &p.cone);
            rep.fill(inst, &p);
            let mut status =
                if p.certificate.verdict == Verdict::Critical { Status::Ok } else { Status::CertificationFailure };
            if let Some(ps) = probe {
                match inst.local_min_probe_in_cone(&p.a1, &p.a2, &p.cone, ps.radius, ps.samples, seed) {
                    Ok(s) => rep.probe = Some(ProbeReport::new(s, p.loss)),
                    Err(e) => {
                        status = worse(status, status_for(&e));
                        rep.error = Some(e.to_string());
                    }
                }
            }
            (rep, status)
        }
        Err(e) => {
            let mut rep = ConeReport::new(name, &ActivationCone::new(vec![], vec![]));
            rep.cone = String::new();
            rep.error = Some(e.to_string());
            (rep, status_for(&e))
        }
    }
}

#[derive(Debug, Serialize)]
struct CertifyBody {
    model: &'static str,
    points: Vec<serde_json::Value>,
}

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| Error::InvalidInput(e.to_string()))
}

fn run_certify(m: &CertifyManifest, base: Option<&Path>, tol: Tolerances, opts: &RunOptions) -> Result<Collected<CertifyBody>> {
    let x = m.x.load(base)?;
    let y = m.y.load(base)?;
    let mut status = Status::Ok;
    let mut points = Vec::new();
    for w in &m.weights {
        let layers = load_layers(w, base)?;
        if layers.len() < 2 {
            return Err(Error::InvalidInput(format!("{}: need at least two layers", w.name)));
        }
        let width = layers[0].nrows();
        let (value, s) = match m.model {
            Model::Shallow => {
                if layers.len() != 2 {
                    return Err(Error::InvalidInput(format!("{}: a shallow point has 2 layers", w.name)));
                }
                let inst = ShallowInstance::with_tolerances(x.clone(), y.clone(), width, tol)?;
                let res = inst.certify_point(&layers[0], &layers[1]);
                let rep = match &res {
                    Ok(p) => PointReport::from_point(&w.name, p),
                    Err(e) => PointReport::failed(&w.name, e),
                };
                let s = point_status(&rep, res.as_ref().err());
                (to_value(&rep)?, s)
            }
            Model::Deep => {
                let mut dims = vec![x.nrows()];
                dims.extend(layers.iter().map(|a| a.nrows()));
                let inst = DeepInstance::with_tolerances(x.clone(), y.clone(), dims, tol)?;
                let res = inst.certify_point(&layers);
                let rep = match &res {
                    Ok(p) => PointReport::from_deep(&w.name, p),
                    Err(e) => PointReport::failed(&w.name, e),
                };
                let s = point_status(&rep, res.as_ref().err());
                (to_value(&rep)?, s)
            }
            Model::Relu => {
                if layers.len() != 2 {
                    return Err(Error::InvalidInput(format!("{}: a ReLU point has 2 layers", w.name)));
                }
                let inst = ReluInstance::with_tolerances(x.clone(), y.clone(), width, tol)?;
                let res = inst.certify_point(&layers[0], &layers[1]);
                let (rep, s) = relu_point_report(&inst, &w.name, res, m.probe, opts.seed);
                (to_value(&rep)?, s)
            }
        };
        status = worse(status, s);
        points.push(value);
    }
    let model = match m.model {
        Model::Shallow => "shallow",
        Model::Deep => "deep",
        Model::Relu => "relu",
    };
    Ok(Collected { body: CertifyBody { model, points }, status, table: None })
}

// ---------------------------------------------------------------- example 1

#[derive(Debug, Clone, Serialize)]
pub struct GoldenCheck {
    pub name: String,
    pub expected: f64,
    pub got: f64,
    pub ok: bool,
}

#[derive(Debug, Serialize)]
struct Example1Body {
    x: MatrixJson,
    y: MatrixJson,
    constant_value: f64,
    constructed: Vec<ConeReport>,
    search: Vec<FindingReport>,
    golden: Vec<GoldenCheck>,
    spurious_minimum: bool,
}

/// `X = I_2`, `Y = diag(2, 1)`, one hidden unit.
pub fn example1_instance(tol: Tolerances) -> Result<ReluInstance> {
    ReluInstance::with_tolerances(Matrix::identity(2, 2), Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]), 1, tol)
}

fn run_example1(tol: Tolerances, opts: &RunOptions) -> Result<Collected<Example1Body>> {
    let inst = example1_instance(tol)?;
    let probe = ProbeSpec { radius: PROBE_RADIUS, samples: PROBE_SAMPLES };
    let mut status = Status::Ok;

    let mut constructed = Vec::new();
    for (name, j, l1) in [("cone-1-1", 0usize, [1.0, -1.0]), ("cone-1-2", 1, [-1.0, 0.0])] {
        let mut cone = ActivationCone::new(vec![0], vec![j]);
        if let Some(mg) = opts.margin {
            cone = cone.with_margin(mg);
        }
        let ReducedProblem::Linear { inst: red, .. } = inst.reduced_instance(&cone)? else {
            unreachable!("nonempty cone")
        };
        let spec = CriticalPointSpec::canonical(&red, &BlockPattern::new(vec![1], 0))?
            .with_l1(Matrix::from_row_slice(1, 2, &l1));
        let mut rep = ConeReport::new(name, &cone);
        match inst.construct_relu_critical(&cone, &spec, &FreeParams::default()) {
            Ok(p) => {
                rep.fill(&inst, &p);
                let s = inst.local_min_probe_in_cone(&p.a1, &p.a2, &cone, probe.radius, probe.samples, opts.seed)?;
                rep.probe = Some(ProbeReport::new(s, p.loss));
            }
            Err(e) => {
                status = worse(status, status_for(&e));
                rep.error = Some(e.to_string());
            }
        }
        constructed.push(rep);
    }

    let found = inst.exist_search_d1_1(opts.seed)?;
    let search = found.iter().map(|f| finding_report(&inst, f, Some(probe), opts.seed)).collect::<Result<Vec<_>>>()?;

    let shift = opts.perturb_golden;
    let mut golden = Vec::new();
    let mut check = |name: &str, expected: f64, got: Option<f64>| {
        let got = got.unwrap_or(f64::NAN);
        let expected = expected + shift;
        golden.push(GoldenCheck { name: name.into(), expected, got, ok: (got - expected).abs() <= GOLDEN_TOL });
    };
    let loss_of = |j: &[usize], constant: bool| {
        found.iter().find(|f| f.constant == constant && f.j == j).map(|f| f.loss)
    };
    check("search cone ({1},{1}) loss", 0.5, loss_of(&[0], false));
    check("search cone ({1},{2}) loss", 2.0, loss_of(&[1], false));
    check("constant cone loss", 2.5, loss_of(&[], true));
    check("constructed cone ({1},{1}) loss", 0.5, constructed[0].loss);
    check("constructed cone ({1},{2}) loss", 2.0, constructed[1].loss);
    check("findings", 3.0, Some(found.len() as f64));
    let no_decrease = |r: &ConeReport| r.probe.as_ref().map(|p| if p.decrease_found { 0.0 } else { 1.0 });
    check("probe at ({1},{1}) finds no decrease", 1.0, no_decrease(&constructed[0]));
    check("probe at ({1},{2}) finds no decrease", 1.0, no_decrease(&constructed[1]));

    let minima: Vec<f64> = found.iter().filter(|f| !f.constant).map(|f| f.loss).collect();
    let constant_value = 0.5 * inst.y().norm_squared();
    let spurious_minimum = minima.len() >= 2
        && minima.iter().any(|&l| l > minima.iter().copied().fold(f64::INFINITY, f64::min) + GOLDEN_TOL && l < constant_value);
    if golden.iter().any(|g| !g.ok) {
        status = worse(status, Status::GoldenMismatch);
    }
    let rows: Vec<SearchRow> = found.iter().map(SearchRow::from).collect();
    Ok(Collected {
        body: Example1Body {
            x: inst.x().into(),
            y: inst.y().into(),
            constant_value,
            constructed,
            search,
            golden,
            spurious_minimum,
        },
        status,
        table: Some(("search", csv_table(&rows, SEARCH_HEADER)?)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_names() {
        assert_eq!(table_path(Path::new("out/r.json"), "search"), PathBuf::from("out/r.search.csv"));
        assert_eq!(table_path(Path::new("r"), "witnesses"), PathBuf::from("r.witnesses.csv"));
    }

    #[test]
    fn empty_table_keeps_header() {
        let t = csv_table::<SearchRow>(&[], SEARCH_HEADER).unwrap();
        assert_eq!(String::from_utf8(t).unwrap().trim(), SEARCH_HEADER.join(","));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.json");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn example1_golden_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let mut opts = RunOptions::new(Command::Example1, dir.path().join("e.json"));
        assert_eq!(run(&opts).unwrap().status, Status::Ok);
        opts.perturb_golden = 1e-3;
        assert_eq!(run(&opts).unwrap().status, Status::GoldenMismatch);
    }

    #[test]
    fn error_statuses() {
        assert_eq!(status_for(&Error::Parse { path: "p".into(), msg: "m".into() }).exit_code(), 2);
        assert_eq!(status_for(&Error::ConeViolation { slack: -1.0 }).exit_code(), 3);
    }
}
