//! Problem and result files, and the `validate`, `solve` and `oracle-compare`
//! commands behind the `regopt` binary.
//!
//! Problem files are JSON. Matrices are lists of rows; maps and kernels are
//! keyed `"upper->lower"`; order relations are `[lower, upper]` pairs; region
//! keys are sorted comma-joined variable ids.
//!
//! Exit codes: 0 success, 1 validation failure, 2 unreadable or unparsable
//! input, 3 non-convergence (the partial result is still written), 4 any
//! other runtime failure including oracle size caps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::blocks::SectionVector;
use crate::channels::{self, KernelNetwork};
use crate::error::{Error, Result};
use crate::functor::Cofunctor;
use crate::gbp::{self, region_key, RegionGraphProblem};
use crate::loss::{LocalLossFamily, LossKind};
use crate::oracle;
use crate::poset::Poset;
use crate::solver::{self, Method, SolveReport, SolverConfig, TraceRow};

pub const FORMAT_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub format_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poset: Option<PosetSpec>,
    pub functor: FunctorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossSpec>,
    #[serde(default)]
    pub solver: SolverSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosetSpec {
    pub elements: Vec<String>,
    /// `[lower, upper]` pairs.
    #[serde(default)]
    pub relations: Vec<[String; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FunctorSpec {
    Explicit {
        dims: BTreeMap<String, usize>,
        #[serde(default)]
        maps: BTreeMap<String, Vec<Vec<f64>>>,
    },
    Marginalization {
        variables: BTreeMap<String, usize>,
        regions: Vec<Vec<String>>,
        #[serde(default)]
        hamiltonians: BTreeMap<String, Vec<f64>>,
    },
    Kernels {
        state_spaces: BTreeMap<String, usize>,
        kernels: BTreeMap<String, Vec<Vec<f64>>>,
        #[serde(default)]
        hamiltonians: BTreeMap<String, Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    FreeEnergy,
    Quadratic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<BTreeMap<String, Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<BTreeMap<String, Vec<f64>>>,
    /// Free energies on an explicit cofunctor take their hamiltonians here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hamiltonians: Option<BTreeMap<String, Vec<f64>>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_message: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damping: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// A validated problem.
#[derive(Debug, Clone)]
pub enum Problem {
    Explicit {
        functor: Cofunctor,
        loss: LocalLossFamily,
    },
    Regions(RegionGraphProblem),
    Kernels {
        network: KernelNetwork,
        hamiltonians: Vec<DVector<f64>>,
    },
}

impl Problem {
    pub fn cofunctor(&self) -> &Cofunctor {
        match self {
            Problem::Explicit { functor, .. } => functor,
            Problem::Regions(p) => p.marginalization_cofunctor(),
            Problem::Kernels { network, .. } => network.pushforward_cofunctor(),
        }
    }

    pub fn loss(&self) -> LocalLossFamily {
        match self {
            Problem::Explicit { loss, .. } => loss.clone(),
            Problem::Regions(p) => p.free_energy_loss(),
            Problem::Kernels { network, hamiltonians } => {
                LocalLossFamily::free_energy(hamiltonians.clone(), 1.0)
                    .expect("beta = 1")
                    .with_names(network.poset())
            }
        }
    }

    /// Whether solutions are probability vectors per element.
    pub fn probabilistic(&self) -> bool {
        !matches!(self, Problem::Explicit { .. })
    }

    pub fn default_method(&self) -> Method {
        match self {
            Problem::Explicit { .. } => Method::Generic,
            Problem::Regions(_) => Method::Gbp,
            Problem::Kernels { .. } => Method::Channel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualTriple {
    pub message_delta: f64,
    pub constraint_norm: f64,
    pub stationarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub msg_delta: f64,
    pub constraint_norm: f64,
    pub stationarity: f64,
    #[serde(rename = "f_R")]
    pub f_r: f64,
}

impl From<&TraceRow> for TraceRecord {
    fn from(r: &TraceRow) -> Self {
        TraceRecord {
            iter: r.iter,
            msg_delta: r.msg_delta,
            constraint_norm: r.constraint_norm,
            stationarity: r.stationarity,
            f_r: r.value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub format_version: u32,
    /// SHA-256 of the problem file bytes.
    pub problem_sha256: String,
    pub method: Method,
    pub seed: u64,
    pub converged: bool,
    pub iterations: usize,
    pub residuals: ResidualTriple,
    /// Per-element solution; normalized beliefs for probabilistic problems.
    pub solution: BTreeMap<String, Vec<f64>>,
    #[serde(rename = "f_R")]
    pub f_r: f64,
    pub trace: Vec<TraceRecord>,
}

/// Exit code and text produced by one command.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Outcome { code: EXIT_OK, stdout, stderr: String::new() }
    }

    fn fail(code: i32, stderr: String) -> Self {
        Outcome { code, stdout: String::new(), stderr }
    }

    fn from_error(e: &Error) -> Self {
        let code = exit_code(e);
        let mut s = String::new();
        match e {
            Error::Validation(items) => {
                for i in items {
                    let _ = writeln!(s, "error: {i}");
                }
            }
            other => {
                let _ = writeln!(s, "error: {other}");
            }
        }
        Outcome::fail(code, s)
    }
}

/// Exit code for an error raised while reading, validating or running a problem.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse(_) => EXIT_PARSE,
        Error::Cycle(_)
        | Error::UnknownElement(_)
        | Error::DuplicateElement(_)
        | Error::NotComparable { .. }
        | Error::Shape(_)
        | Error::InvalidLoss(_)
        | Error::MissingInverse(_)
        | Error::Functoriality(_)
        | Error::Config(_)
        | Error::Validation(_) => EXIT_INVALID,
        Error::Domain { .. }
        | Error::NumericalOverflow(_)
        | Error::SingularSystem(_)
        | Error::Size { .. }
        | Error::Io(_) => EXIT_RUNTIME,
    }
}

pub fn parse_problem(text: &str) -> Result<ProblemFile> {
    let file: ProblemFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::Parse(format!(
            "unsupported format_version {}, expected {FORMAT_VERSION}",
            file.format_version
        )));
    }
    Ok(file)
}

pub fn serialize_problem(file: &ProblemFile) -> String {
    let mut s = serde_json::to_string_pretty(file).expect("problem files serialize");
    s.push('\n');
    s
}

fn read_input(path: &Path) -> Result<(Vec<u8>, ProblemFile)> {
    let bytes = fs::read(path).map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let file = parse_problem(text)?;
    Ok((bytes, file))
}

fn split_pair(key: &str) -> Result<(&str, &str)> {
    key.split_once("->")
        .map(|(a, b)| (a.trim(), b.trim()))
        .ok_or_else(|| Error::Parse(format!("pair key `{key}` is not of the form `upper->lower`")))
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Shape(format!("{what} is not a nonempty rectangular matrix")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn build_poset(spec: &PosetSpec) -> Result<Poset> {
    let elements: Vec<&str> = spec.elements.iter().map(String::as_str).collect();
    let pairs: Vec<(&str, &str)> = spec
        .relations
        .iter()
        .map(|[lo, up]| (lo.as_str(), up.as_str()))
        .collect();
    Poset::new(&elements, &pairs)
}

fn per_element(poset: &Poset, map: &BTreeMap<String, usize>, what: &str) -> Result<Vec<usize>> {
    let mut problems = Vec::new();
    for k in map.keys() {
        if poset.index_of(k).is_err() {
            problems.push(format!("{what} given for undeclared element `{k}`"));
        }
    }
    let mut out = Vec::with_capacity(poset.len());
    for e in poset.elements() {
        match map.get(e) {
            Some(&d) if d > 0 => out.push(d),
            Some(_) => problems.push(format!("{what} of `{e}` must be positive")),
            None => problems.push(format!("{what} missing for element `{e}`")),
        }
    }
    if problems.is_empty() {
        Ok(out)
    } else {
        Err(Error::Validation(problems))
    }
}

fn pair_matrices(
    poset: &Poset,
    maps: &BTreeMap<String, Vec<Vec<f64>>>,
    what: &str,
) -> Result<BTreeMap<(usize, usize), DMatrix<f64>>> {
    let mut out = BTreeMap::new();
    for (key, rows) in maps {
        let (a, b) = split_pair(key)?;
        let ia = poset.index_of(a)?;
        let ib = poset.index_of(b)?;
        if !poset.lt(ib, ia) {
            return Err(Error::NotComparable { upper: a.to_string(), lower: b.to_string() });
        }
        out.insert((ia, ib), matrix(rows, &format!("{what} {key}"))?);
    }
    Ok(out)
}

fn hamiltonian_list(
    names: &[String],
    sizes: &[usize],
    given: &BTreeMap<String, Vec<f64>>,
) -> Result<Vec<DVector<f64>>> {
    let mut problems = Vec::new();
    for k in given.keys() {
        if !names.contains(k) {
            problems.push(format!("hamiltonian given for undeclared element `{k}`"));
        }
    }
    let mut out = Vec::with_capacity(names.len());
    for (name, &n) in names.iter().zip(sizes) {
        match given.get(name) {
            Some(h) if h.len() == n => out.push(DVector::from_column_slice(h)),
            Some(h) => problems.push(format!(
                "hamiltonian of `{name}` has length {}, expected {n}",
                h.len()
            )),
            None => out.push(DVector::zeros(n)),
        }
        if let Some(h) = given.get(name) {
            if h.iter().any(|v| !v.is_finite()) {
                problems.push(format!("hamiltonian of `{name}` has a non-finite entry"));
            }
        }
    }
    if problems.is_empty() {
        Ok(out)
    } else {
        Err(Error::Validation(problems))
    }
}

fn build_loss(poset: &Poset, dims: &[usize], spec: Option<&LossSpec>) -> Result<LocalLossFamily> {
    let spec = spec.ok_or_else(|| Error::Validation(vec!["an explicit cofunctor needs a `loss` section".into()]))?;
    let names = poset.elements();
    let loss = match spec.family {
        Family::Quadratic => {
            let a_map = spec.a.as_ref().ok_or_else(|| Error::InvalidLoss("quadratic family needs `A`".into()))?;
            let b_map = spec.b.as_ref().ok_or_else(|| Error::InvalidLoss("quadratic family needs `b`".into()))?;
            let mut a = Vec::with_capacity(names.len());
            let mut b = Vec::with_capacity(names.len());
            for k in a_map.keys().chain(b_map.keys()) {
                poset.index_of(k)?;
            }
            for n in names {
                let am = a_map.get(n).ok_or_else(|| Error::InvalidLoss(format!("`A` missing for `{n}`")))?;
                let bv = b_map.get(n).ok_or_else(|| Error::InvalidLoss(format!("`b` missing for `{n}`")))?;
                a.push(matrix(am, &format!("A[{n}]"))?);
                b.push(DVector::from_column_slice(bv));
            }
            LocalLossFamily::quadratic(a, b)?
        }
        Family::FreeEnergy => {
            let given = spec.hamiltonians.clone().unwrap_or_default();
            let h = hamiltonian_list(names, dims, &given)?;
            LocalLossFamily::free_energy(h, spec.beta.unwrap_or(1.0))?
        }
    };
    let loss = loss.with_names(poset);
    loss.check_dims(dims)?;
    Ok(loss)
}

/// Builds and validates the in-memory problem.
pub fn build_problem(file: &ProblemFile) -> Result<Problem> {
    match &file.functor {
        FunctorSpec::Explicit { dims, maps } => {
            let pspec = file
                .poset
                .as_ref()
                .ok_or_else(|| Error::Validation(vec!["an explicit cofunctor needs a `poset` section".into()]))?;
            let poset = build_poset(pspec)?;
            let d = per_element(&poset, dims, "dimension")?;
            let m = pair_matrices(&poset, maps, "map")?;
            let functor = Cofunctor::new(poset.clone(), d.clone(), m)?;
            let violations = functor.validate();
            if !violations.is_empty() {
                return Err(Error::Validation(
                    violations.iter().map(|v| format!("functoriality: {v}")).collect(),
                ));
            }
            let loss = build_loss(&poset, &d, file.loss.as_ref())?;
            Ok(Problem::Explicit { functor, loss })
        }
        FunctorSpec::Marginalization { variables, regions, hamiltonians } => {
            if file.loss.as_ref().is_some_and(|l| l.family != Family::FreeEnergy) {
                return Err(Error::InvalidLoss("marginalization problems use the free energy".into()));
            }
            let vars: Vec<(&str, usize)> = variables.iter().map(|(k, &v)| (k.as_str(), v)).collect();
            let keys: Vec<String> = regions.iter().map(|r| region_key(r)).collect();
            let mut problems = Vec::new();
            for (r, k) in regions.iter().zip(&keys) {
                for v in r {
                    if !variables.contains_key(v) {
                        problems.push(format!("region `{k}` uses undeclared variable `{v}`"));
                    }
                }
            }
            if !problems.is_empty() {
                return Err(Error::Validation(problems));
            }
            let sizes: Vec<usize> = regions
                .iter()
                .map(|r| {
                    let mut vs: Vec<&String> = r.iter().collect();
                    vs.sort();
                    vs.dedup();
                    vs.iter().map(|v| variables[*v]).product()
                })
                .collect();
            let mut seen = std::collections::BTreeSet::new();
            for k in &keys {
                if !seen.insert(k) {
                    return Err(Error::DuplicateElement(k.clone()));
                }
            }
            let h = hamiltonian_list(&keys, &sizes, hamiltonians)?;
            let region_refs: Vec<Vec<&str>> = regions
                .iter()
                .map(|r| r.iter().map(String::as_str).collect())
                .collect();
            let p = RegionGraphProblem::new(
                &vars,
                &region_refs,
                h.into_iter().map(|v| v.as_slice().to_vec()).collect(),
            )?;
            if let Some(pspec) = &file.poset {
                check_inclusion_order(&p, pspec)?;
            }
            Ok(Problem::Regions(p))
        }
        FunctorSpec::Kernels { state_spaces, kernels, hamiltonians } => {
            if file.loss.as_ref().is_some_and(|l| l.family != Family::FreeEnergy) {
                return Err(Error::InvalidLoss("kernel networks use the free energy".into()));
            }
            let pspec = file
                .poset
                .as_ref()
                .ok_or_else(|| Error::Validation(vec!["a kernel network needs a `poset` section".into()]))?;
            let poset = build_poset(pspec)?;
            let d = per_element(&poset, state_spaces, "state space size")?;
            let k = pair_matrices(&poset, kernels, "kernel")?;
            let h = hamiltonian_list(poset.elements(), &d, hamiltonians)?;
            let network = KernelNetwork::new(poset, d, k)?;
            Ok(Problem::Kernels { network, hamiltonians: h })
        }
    }
}

fn check_inclusion_order(p: &RegionGraphProblem, spec: &PosetSpec) -> Result<()> {
    let given = build_poset(spec)?;
    let mut problems = Vec::new();
    let mut a: Vec<&String> = given.elements().iter().collect();
    let mut b: Vec<&String> = p.poset().elements().iter().collect();
    a.sort();
    b.sort();
    if a != b {
        problems.push("poset elements must be exactly the region keys".to_string());
    } else {
        for x in p.poset().elements() {
            for y in p.poset().elements() {
                let incl = p.poset().leq(p.poset().index_of(y)?, p.poset().index_of(x)?);
                let decl = given.leq(given.index_of(y)?, given.index_of(x)?);
                if incl != decl {
                    problems.push(format!(
                        "relation `{y}` <= `{x}` is {} in the poset but {} by inclusion",
                        if decl { "declared" } else { "absent" },
                        if incl { "holds" } else { "fails" }
                    ));
                }
            }
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(problems))
    }
}

/// Reads, parses and validates a problem file.
pub fn load(path: &Path) -> Result<(Vec<u8>, ProblemFile, Problem)> {
    let (bytes, file) = read_input(path)?;
    let problem = build_problem(&file)?;
    Ok((bytes, file, problem))
}

pub fn cmd_validate(path: &Path) -> Outcome {
    match load(path) {
        Ok((_, _, p)) => {
            let f = p.cofunctor();
            let mut s = format!(
                "valid: {} elements, {} strict pairs, total dimension {}\n",
                f.poset().len(),
                f.pairs().len(),
                f.total_dim()
            );
            if let Problem::Kernels { network, .. } = &p {
                if !network.strictly_positive() {
                    s.push_str("note: some kernel entries are zero\n");
                }
            }
            Outcome::ok(s)
        }
        Err(e) => Outcome::from_error(&e),
    }
}

/// Command-line overrides of the problem's solver section.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveOptions {
    pub out: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub method: Option<Method>,
    pub max_iters: Option<usize>,
    pub tol_message: Option<f64>,
    pub tol_residual: Option<f64>,
    pub damping: Option<f64>,
    pub seed: Option<u64>,
}

fn config(problem: &Problem, spec: &SolverSpec, o: &SolveOptions) -> Result<SolverConfig> {
    let d = SolverConfig::default();
    let cfg = SolverConfig {
        method: o.method.or(spec.method).unwrap_or_else(|| problem.default_method()),
        max_iters: o.max_iters.or(spec.max_iters).unwrap_or(d.max_iters),
        tol_message: o.tol_message.or(spec.tol_message).unwrap_or(d.tol_message),
        tol_residual: o.tol_residual.or(spec.tol_residual).unwrap_or(d.tol_residual),
        damping: o.damping.or(spec.damping).unwrap_or(d.damping),
        seed: o.seed.or(spec.seed).unwrap_or(d.seed),
        ..d
    };
    cfg.check()?;
    Ok(cfg)
}

/// Solver output in the shape reported to users.
#[derive(Debug, Clone)]
pub struct Solved {
    pub report: SolveReport,
    /// Normalized for probabilistic problems.
    pub solution: SectionVector,
    pub value: f64,
}

fn normalized(x: &SectionVector) -> SectionVector {
    SectionVector::from_blocks(x.iter().map(|b| b / b.sum()).collect())
}

/// Dispatches to the solver selected by `cfg.method`.
pub fn run(problem: &Problem, cfg: &SolverConfig) -> Result<Solved> {
    let report = match (problem, cfg.method) {
        (_, Method::Generic | Method::Newton) => {
            let f = problem.cofunctor();
            let l0 = cfg.initial_messages(&f.pair_dims());
            solver::solve(f, &problem.loss(), &l0, cfg)?
        }
        (Problem::Regions(p), Method::Gbp) => gbp::gbp_solve(p, cfg)?,
        (Problem::Regions(p), Method::Channel) => {
            let (net, h) = channels::from_region_problem(p)?;
            channels::channel_solve(&net, &h, cfg)?
        }
        (Problem::Kernels { network, hamiltonians }, Method::Channel) => {
            channels::channel_solve(network, hamiltonians, cfg)?
        }
        (_, m) => {
            return Err(Error::Config(format!(
                "method {} does not apply to this problem",
                method_name(m)
            )))
        }
    };
    let solution = if problem.probabilistic() {
        normalized(&report.x_star)
    } else {
        report.x_star.clone()
    };
    let value = problem
        .loss()
        .regionalized_value(problem.cofunctor().poset(), &solution)
        .unwrap_or(f64::NAN);
    Ok(Solved { report, solution, value })
}

pub fn method_name(m: Method) -> &'static str {
    match m {
        Method::Generic => "generic",
        Method::Newton => "newton",
        Method::Gbp => "gbp",
        Method::Channel => "channel",
    }
}

fn named(poset: &Poset, x: &SectionVector) -> BTreeMap<String, Vec<f64>> {
    poset
        .elements()
        .iter()
        .cloned()
        .zip(x.iter().map(|b| b.as_slice().to_vec()))
        .collect()
}

pub fn trace_csv(rows: &[TraceRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(["iter", "msg_delta", "constraint_norm", "stationarity", "f_R"])
            .map_err(|e| Error::Io(e.to_string()))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes through a temporary file in the same directory and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.persist(path).map_err(|e| Error::Io(e.to_string()))?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Builds the result file for a solved problem.
pub fn result_file(bytes: &[u8], problem: &Problem, cfg: &SolverConfig, s: &Solved) -> ResultFile {
    let r = &s.report.final_residuals;
    ResultFile {
        format_version: FORMAT_VERSION,
        problem_sha256: sha256_hex(bytes),
        method: cfg.method,
        seed: cfg.seed,
        converged: s.report.converged,
        iterations: s.report.iterations,
        residuals: ResidualTriple {
            message_delta: r.message_delta,
            constraint_norm: r.constraint_norm,
            stationarity: r.stationarity,
        },
        solution: named(problem.cofunctor().poset(), &s.solution),
        f_r: s.value,
        trace: s.report.trace.iter().map(TraceRecord::from).collect(),
    }
}

pub fn cmd_solve(path: &Path, opts: &SolveOptions) -> Outcome {
    let (bytes, file, problem) = match load(path) {
        Ok(v) => v,
        Err(e) => return Outcome::from_error(&e),
    };
    let cfg = match config(&problem, &file.solver, opts) {
        Ok(c) => c,
        Err(e) => return Outcome::from_error(&e),
    };
    let solved = match run(&problem, &cfg) {
        Ok(s) => s,
        Err(e) => return Outcome::from_error(&e),
    };
    let result = result_file(&bytes, &problem, &cfg, &solved);
    let mut json = serde_json::to_string_pretty(&result).expect("results serialize");
    json.push('\n');
    let mut out = Outcome::ok(String::new());
    if let Some(t) = &opts.trace {
        if let Err(e) = trace_csv(&result.trace).and_then(|csv| write_atomic(t, &csv)) {
            return Outcome::from_error(&e);
        }
    }
    match &opts.out {
        Some(p) => {
            if let Err(e) = write_atomic(p, &json) {
                return Outcome::from_error(&e);
            }
        }
        None => out.stdout = json,
    }
    if !result.converged {
        out.code = EXIT_NOT_CONVERGED;
        out.stderr = format!(
            "not converged after {} iterations: message change {:e}, constraint {:e}, stationarity {:e}\n",
            result.iterations,
            result.residuals.message_delta,
            result.residuals.constraint_norm,
            result.residuals.stationarity
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    Kkt,
    Enumeration,
    ProjectedGradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub oracle: OracleKind,
    pub method: Method,
    pub seed: u64,
    pub converged: bool,
    /// Sup-norm gap per element between solver and oracle solutions.
    pub gaps: BTreeMap<String, f64>,
    pub max_gap: f64,
    pub solver_value: f64,
    pub oracle_value: f64,
    pub value_gap: f64,
}

/// Ground truth for `problem` by the matching oracle.
pub fn oracle_solution(problem: &Problem, seed: u64) -> Result<(OracleKind, SectionVector)> {
    let f = problem.cofunctor();
    match problem {
        Problem::Explicit { loss, .. } => match loss.kind() {
            LossKind::Quadratic { .. } => Ok((OracleKind::Kkt, oracle::kkt_solve_quadratic(f, loss)?.0)),
            _ => Ok((
                OracleKind::ProjectedGradient,
                oracle::brute_force_min(f, loss, false, seed)?.0,
            )),
        },
        Problem::Regions(p) => {
            let covers_all = p
                .poset()
                .maximum()
                .is_some_and(|m| p.region(m).len() == p.variables().len());
            if covers_all {
                let d = oracle::exact_gibbs(&oracle::joint_hamiltonian(p)?, 1.0)?;
                Ok((OracleKind::Enumeration, oracle::exact_marginals(&d, p)?))
            } else {
                Ok((
                    OracleKind::ProjectedGradient,
                    oracle::brute_force_min(f, &problem.loss(), true, seed)?.0,
                ))
            }
        }
        Problem::Kernels { network, hamiltonians } => match network.poset().maximum() {
            Some(top) => {
                let d = oracle::exact_gibbs(&hamiltonians[top], 1.0)?;
                let blocks = (0..f.poset().len())
                    .map(|a| if a == top { d.probs.clone() } else { network.kernel(top, a) * &d.probs })
                    .collect();
                Ok((OracleKind::Enumeration, SectionVector::from_blocks(blocks)))
            }
            None => Ok((
                OracleKind::ProjectedGradient,
                oracle::brute_force_min(f, &problem.loss(), true, seed)?.0,
            )),
        },
    }
}

pub fn compare(problem: &Problem, cfg: &SolverConfig) -> Result<Comparison> {
    let (kind, truth) = oracle_solution(problem, cfg.seed)?;
    let solved = run(problem, cfg)?;
    let poset = problem.cofunctor().poset();
    let mut gaps = BTreeMap::new();
    let mut max_gap: f64 = 0.0;
    for a in 0..poset.len() {
        let g = (&solved.solution[a] - &truth[a]).amax();
        max_gap = max_gap.max(g);
        gaps.insert(poset.name(a).to_string(), g);
    }
    let oracle_value = problem.loss().regionalized_value(poset, &truth)?;
    Ok(Comparison {
        oracle: kind,
        method: cfg.method,
        seed: cfg.seed,
        converged: solved.report.converged,
        gaps,
        max_gap,
        solver_value: solved.value,
        oracle_value,
        value_gap: (solved.value - oracle_value).abs(),
    })
}

pub fn cmd_oracle_compare(path: &Path, opts: &SolveOptions) -> Outcome {
    let (_, file, problem) = match load(path) {
        Ok(v) => v,
        Err(e) => return Outcome::from_error(&e),
    };
    let cfg = match config(&problem, &file.solver, opts) {
        Ok(c) => c,
        Err(e) => return Outcome::from_error(&e),
    };
    match compare(&problem, &cfg) {
        Ok(c) => {
            let mut json = serde_json::to_string_pretty(&c).expect("reports serialize");
            json.push('\n');
            let mut out = Outcome::ok(json);
            if !c.converged {
                out.code = EXIT_NOT_CONVERGED;
                out.stderr = "solver did not converge; gaps refer to its last iterate\n".into();
            }
            out
        }
        Err(e) => Outcome::from_error(&e),
    }
}
