//! Scenario files: a JSON description of graph, protocol, initial state,
//! integrator settings and requested analyses, plus the bundled catalog.

use crate::analysis::{self, ConvergenceSet, LyapunovKind};
use crate::dynamics::{is_equilibrium_exact, Convention, ProtocolSpec};
use crate::graph::{GraphFile, WeightedDigraph};
use crate::integrator::{simulate_monitored, IntegratorConfig, IntegratorError, Mode, Trajectory};
use crate::nonlinear::FnDescriptor;
use num::{BigInt, BigRational, ToPrimitive};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{origin}:{line}:{column}: {message}")]
    Parse {
        origin: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("override `{key}`: {message}")]
    Override { key: String, message: String },
    #[error("integration failed: {0}")]
    Integration(IntegratorError),
    #[error("{0}")]
    Io(String),
}

impl ScenarioError {
    /// Process exit code for the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Parse { .. } | ScenarioError::Invalid { .. } | ScenarioError::Override { .. } => 2,
            ScenarioError::Integration(IntegratorError::InvalidConfig(_) | IntegratorError::Dynamics(_)) => 2,
            ScenarioError::Integration(_) => 3,
            ScenarioError::Io(_) => 1,
        }
    }
}

fn invalid(path: impl Into<String>, message: impl ToString) -> ScenarioError {
    ScenarioError::Invalid {
        path: path.into(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub graph: GraphSection,
    pub protocol: ProtocolSection,
    /// Explicit list of numbers or `"p/q"` strings, or `{"uniform": {...}}`.
    pub x0: Value,
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

/// Either `file` (relative to the scenario) or inline `n` and `edges`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<(usize, usize, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Measurement,
    Communication,
}

/// `function` applies to every node or edge; `functions` lists one per node
/// (measurement) or per edge in file order (communication).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub family: FamilyName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convention: Option<Convention>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<FnDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functions: Option<Vec<FnDescriptor>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub dt_max: f64,
    pub t_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sliding_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chatter_window: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    /// Set name, or `"predicted"`; stops the run after the required dwell.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_on: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default)]
    pub sets: Vec<String>,
    /// `MaxV`, `MinW`, `V1` (left-null-vector weights) or `HalfSquaredNorm`.
    #[serde(default)]
    pub lyapunov: Vec<String>,
    /// Decide equilibrium at `x0` in rational arithmetic.
    #[serde(default)]
    pub exact_equilibrium: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UniformBox {
    lo: f64,
    hi: f64,
    seed: u64,
}

/// A validated, ready-to-run scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub protocol: ProtocolSpec,
    pub x0: Vec<f64>,
    /// Rational initial state when every entry was given exactly.
    pub x0_exact: Option<Vec<BigRational>>,
    pub config: IntegratorConfig,
    pub stop_on: Option<ConvergenceSet>,
    pub sets: Vec<ConvergenceSet>,
    pub lyapunov: Vec<(String, LyapunovKind)>,
    pub exact_equilibrium: bool,
    pub output: Option<PathBuf>,
}

/// Keys accepted by `--set`, as dotted paths into the scenario file.
pub const OVERRIDE_KEYS: &[&str] = &[
    "name",
    "output",
    "protocol.convention",
    "protocol.function.delta",
    "protocol.function.slope",
    "protocol.function.intercept",
    "x0.uniform.lo",
    "x0.uniform.hi",
    "x0.uniform.seed",
    "integrator.dt_max",
    "integrator.t_end",
    "integrator.mode",
    "integrator.event_tol",
    "integrator.sliding_tol",
    "integrator.chatter_window",
    "integrator.max_steps",
    "integrator.stop_on",
    "analysis.sets",
    "analysis.lyapunov",
    "analysis.exact_equilibrium",
];

/// Applies `key=value` overrides to raw scenario JSON. Values are read as
/// JSON, falling back to a plain string.
pub fn apply_overrides(doc: &mut Value, overrides: &[String]) -> Result<(), ScenarioError> {
    for item in overrides {
        let (key, raw) = item.split_once('=').ok_or_else(|| ScenarioError::Override {
            key: item.clone(),
            message: "expected key=value".into(),
        })?;
        let key = key.trim();
        let err = |message: String| ScenarioError::Override {
            key: key.to_string(),
            message,
        };
        if !OVERRIDE_KEYS.contains(&key) {
            return Err(err(format!("unknown key; accepted keys: {}", OVERRIDE_KEYS.join(", "))));
        }
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let parts: Vec<&str> = key.split('.').collect();
        let mut node = &mut *doc;
        for part in &parts[..parts.len() - 1] {
            node = node
                .get_mut(*part)
                .filter(|v| v.is_object())
                .ok_or_else(|| err(format!("scenario has no object at `{part}`")))?;
        }
        node.as_object_mut()
            .expect("checked above")
            .insert(parts[parts.len() - 1].to_string(), value);
    }
    Ok(())
}

/// Sets the uniform generator seed; fails for explicit initial states.
pub fn apply_seed(doc: &mut Value, seed: u64) -> Result<(), ScenarioError> {
    match doc.pointer_mut("/x0/uniform") {
        Some(Value::Object(m)) => {
            m.insert("seed".into(), json!(seed));
            Ok(())
        }
        _ => Err(ScenarioError::Override {
            key: "--seed".into(),
            message: "scenario has an explicit x0; a seed only applies to x0.uniform".into(),
        }),
    }
}

fn parse_json(text: &str, origin: &str) -> Result<Value, ScenarioError> {
    serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        origin: origin.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

impl Scenario {
    /// Parses scenario text; `base` resolves graph file references.
    pub fn from_str_with(
        text: &str,
        origin: &str,
        base: Option<&Path>,
        seed: Option<u64>,
        overrides: &[String],
    ) -> Result<Self, ScenarioError> {
        let mut doc = parse_json(text, origin)?;
        if let Some(s) = seed {
            apply_seed(&mut doc, s)?;
        }
        apply_overrides(&mut doc, overrides)?;
        // Re-serialize so type errors carry a line in the effective document.
        let effective = serde_json::to_string_pretty(&doc).expect("value serializes");
        let file: ScenarioFile = serde_json::from_str(&effective).map_err(|e| {
            let origin = if overrides.is_empty() && seed.is_none() {
                origin.to_string()
            } else {
                format!("{origin} (after overrides)")
            };
            match serde_json::from_str::<ScenarioFile>(text) {
                // Report against the original text when it shows the same problem.
                Err(orig) if overrides.is_empty() && seed.is_none() => ScenarioError::Parse {
                    origin,
                    line: orig.line(),
                    column: orig.column(),
                    message: orig.to_string(),
                },
                _ => ScenarioError::Parse {
                    origin,
                    line: e.line(),
                    column: e.column(),
                    message: e.to_string(),
                },
            }
        })?;
        Self::from_file(file, base)
    }

    pub fn load(path: &Path, seed: Option<u64>, overrides: &[String]) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
        let mut s = Self::from_str_with(&text, &path.display().to_string(), path.parent(), seed, overrides)?;
        if s.name.is_empty() {
            s.name = path.file_stem().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
        }
        Ok(s)
    }

    pub fn from_file(file: ScenarioFile, base: Option<&Path>) -> Result<Self, ScenarioError> {
        let graph = build_graph(&file.graph, base)?;
        let protocol = build_protocol(&file.protocol, graph)?;
        let (x0, x0_exact) = build_x0(&file.x0, protocol.n())?;

        let sec = &file.integrator;
        let mut config = IntegratorConfig::new(sec.dt_max, sec.t_end);
        if let Some(m) = &sec.mode {
            config.mode = m.clone();
        }
        if let Some(v) = sec.event_tol {
            config.event_tol = v;
        }
        if let Some(v) = sec.sliding_tol {
            config.sliding_tol = v;
        }
        if let Some(v) = sec.chatter_window {
            config.chatter_window = v;
        }
        if let Some(v) = sec.max_steps {
            config.max_steps = v;
        }
        config.validate().map_err(|e| invalid("integrator", e))?;
        if let Mode::PrescribedSelection(schedule) = &config.mode {
            for (k, (_, policy)) in schedule.iter().enumerate() {
                policy
                    .validate(protocol.channels().len())
                    .map_err(|e| invalid(format!("integrator.mode.prescribed_selection[{k}]"), e))?;
            }
        }

        let stop_on = match sec.stop_on.as_deref() {
            None => None,
            Some("predicted") => Some(
                analysis::predict(&protocol)
                    .set
                    .ok_or_else(|| invalid("integrator.stop_on", "no convergence set is predicted for this protocol"))?,
            ),
            Some(s) => Some(parse_set(s, &protocol, "integrator.stop_on")?),
        };
        let sets = file
            .analysis
            .sets
            .iter()
            .enumerate()
            .map(|(k, s)| parse_set(s, &protocol, &format!("analysis.sets[{k}]")))
            .collect::<Result<Vec<_>, _>>()?;
        let lyapunov = file
            .analysis
            .lyapunov
            .iter()
            .enumerate()
            .map(|(k, s)| parse_lyapunov(s, &protocol, &format!("analysis.lyapunov[{k}]")).map(|l| (s.clone(), l)))
            .collect::<Result<Vec<_>, _>>()?;
        if file.analysis.exact_equilibrium && x0_exact.is_none() {
            return Err(invalid("analysis.exact_equilibrium", "needs an explicit x0"));
        }

        Ok(Scenario {
            name: file.name.unwrap_or_default(),
            description: file.description.unwrap_or_default(),
            protocol,
            x0,
            x0_exact,
            config,
            stop_on,
            sets,
            lyapunov,
            exact_equilibrium: file.analysis.exact_equilibrium,
            output: file.output.map(PathBuf::from),
        })
    }
}

fn build_graph(sec: &GraphSection, base: Option<&Path>) -> Result<WeightedDigraph, ScenarioError> {
    match (&sec.file, &sec.n, &sec.edges) {
        (Some(f), None, None) => {
            if sec.labels.is_some() {
                return Err(invalid("graph.labels", "labels belong in the referenced graph file"));
            }
            let path = base.map_or_else(|| PathBuf::from(f), |b| b.join(f));
            WeightedDigraph::load(&path).map_err(|e| invalid("graph.file", e))
        }
        (None, Some(n), Some(edges)) => WeightedDigraph::from_file_repr(&GraphFile {
            n: *n,
            edges: edges.clone(),
            labels: sec.labels.clone(),
        })
        .map_err(|e| invalid("graph", e)),
        _ => Err(invalid("graph", "give either `file` or both `n` and `edges`")),
    }
}

fn build_protocol(sec: &ProtocolSection, graph: WeightedDigraph) -> Result<ProtocolSpec, ScenarioError> {
    let count = match sec.family {
        FamilyName::Measurement => graph.node_count(),
        FamilyName::Communication => graph.edge_count(),
    };
    let funcs = match (&sec.function, &sec.functions) {
        (Some(d), None) => {
            let f = d.build().map_err(|e| invalid("protocol.function", e))?;
            vec![f; count]
        }
        (None, Some(ds)) => {
            if ds.len() != count {
                return Err(invalid(
                    "protocol.functions",
                    format!("expected {count} functions, found {}", ds.len()),
                ));
            }
            ds.iter()
                .enumerate()
                .map(|(k, d)| d.build().map_err(|e| invalid(format!("protocol.functions[{k}]"), e)))
                .collect::<Result<Vec<_>, _>>()?
        }
        _ => return Err(invalid("protocol", "give exactly one of `function` or `functions`")),
    };
    match sec.family {
        FamilyName::Measurement => {
            if sec.convention.is_some() {
                return Err(invalid("protocol.convention", "only communication protocols take a convention"));
            }
            ProtocolSpec::measurement(graph, funcs).map_err(|e| invalid("protocol", e))
        }
        FamilyName::Communication => {
            let convention = sec
                .convention
                .ok_or_else(|| invalid("protocol.convention", "communication protocols need `difference` or `relative`"))?;
            ProtocolSpec::communication(graph, funcs, convention).map_err(|e| invalid("protocol", e))
        }
    }
}

/// Parses `"p/q"`, `"p"` or a decimal string into a rational.
pub fn parse_rational(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.trim().parse().ok()?;
        let q: BigInt = q.trim().parse().ok()?;
        return (q != BigInt::from(0)).then(|| BigRational::new(p, q));
    }
    if let Ok(p) = s.parse::<BigInt>() {
        return Some(BigRational::from_integer(p));
    }
    let (neg, body) = s.strip_prefix('-').map_or((false, s), |r| (true, r));
    let (int, frac) = body.split_once('.')?;
    if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let digits: BigInt = format!("{int}{frac}").parse().ok()?;
    let scale = num::pow(BigInt::from(10), frac.len());
    let r = BigRational::new(digits, scale);
    Some(if neg { -r } else { r })
}

fn build_x0(v: &Value, n: usize) -> Result<(Vec<f64>, Option<Vec<BigRational>>), ScenarioError> {
    match v {
        Value::Array(items) => {
            if items.len() != n {
                return Err(invalid("x0", format!("expected {n} entries, found {}", items.len())));
            }
            let mut xs = Vec::with_capacity(n);
            let mut exact = Some(Vec::with_capacity(n));
            for (i, item) in items.iter().enumerate() {
                let at = || format!("x0[{i}]");
                match item {
                    Value::Number(num) => {
                        let f = num.as_f64().ok_or_else(|| invalid(at(), "not representable"))?;
                        match (&mut exact, crate::nonlinear::rational(f)) {
                            (Some(e), Some(r)) => e.push(r),
                            _ => exact = None,
                        }
                        xs.push(f);
                    }
                    Value::String(s) => {
                        let r = parse_rational(s).ok_or_else(|| invalid(at(), format!("`{s}` is not a rational")))?;
                        xs.push(r.to_f64().ok_or_else(|| invalid(at(), "out of range"))?);
                        if let Some(e) = &mut exact {
                            e.push(r);
                        }
                    }
                    _ => return Err(invalid(at(), "expected a number or a \"p/q\" string")),
                }
            }
            if xs.iter().any(|x| !x.is_finite()) {
                return Err(invalid("x0", "entries must be finite"));
            }
            Ok((xs, exact))
        }
        Value::Object(m) => {
            let uniform = match (m.get("uniform"), m.len()) {
                (Some(u), 1) => u,
                _ => return Err(invalid("x0", "expected an array or {\"uniform\": {lo, hi, seed}}")),
            };
            let b: UniformBox =
                serde_json::from_value(uniform.clone()).map_err(|e| invalid("x0.uniform", e))?;
            if !(b.lo.is_finite() && b.hi.is_finite() && b.lo < b.hi) {
                return Err(invalid("x0.uniform", "need finite lo < hi"));
            }
            Ok((uniform_state(n, b.lo, b.hi, b.seed), None))
        }
        _ => Err(invalid("x0", "expected an array or {\"uniform\": {lo, hi, seed}}")),
    }
}

/// Reproducible draw from the box `[lo, hi)^n`.
pub fn uniform_state(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new(lo, hi);
    (0..n).map(|_| dist.sample(&mut rng)).collect()
}

fn parse_set(s: &str, p: &ProtocolSpec, path: &str) -> Result<ConvergenceSet, ScenarioError> {
    let set: ConvergenceSet = s.parse().map_err(|e: String| invalid(path, e))?;
    analysis::member(p, set, &vec![0.0; p.n()]).map_err(|e| invalid(path, e))?;
    Ok(set)
}

fn parse_lyapunov(s: &str, p: &ProtocolSpec, path: &str) -> Result<LyapunovKind, ScenarioError> {
    match s {
        "MaxV" => Ok(LyapunovKind::MaxV),
        "MinW" => Ok(LyapunovKind::MinW),
        "HalfSquaredNorm" => Ok(LyapunovKind::HalfSquaredNorm),
        "V1" => {
            if !p.is_measurement() {
                return Err(invalid(path, "V1 needs a measurement protocol"));
            }
            let w = p.graph().left_null_vector().map_err(|e| invalid(path, e))?;
            Ok(LyapunovKind::WeightedV1(w.iter().copied().collect()))
        }
        other => Err(invalid(path, format!("unknown Lyapunov function `{other}`"))),
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trajectory: Trajectory,
    pub report: Value,
}

pub fn run(s: &Scenario) -> Result<RunOutcome, ScenarioError> {
    let monitor = s
        .stop_on
        .map(|set| analysis::monitor(&s.protocol, set, s.config.t_end));
    let trajectory =
        simulate_monitored(&s.protocol, &s.x0, &s.config, monitor).map_err(ScenarioError::Integration)?;
    let conformance = analysis::conformance_report(&s.protocol, &trajectory);
    let mut report = serde_json::to_value(&conformance).expect("report serializes");
    let obj = report.as_object_mut().expect("report is an object");
    obj.insert("scenario".into(), json!(s.name));
    obj.insert("warnings".into(), json!(s.protocol.warnings()));

    let x = trajectory.final_state();
    let mut sets = serde_json::Map::new();
    for set in &s.sets {
        let m = analysis::member_tol(&s.protocol, *set, x, analysis::MEMBERSHIP_TOL).map_err(|e| invalid("analysis.sets", e))?;
        sets.insert(set.to_string(), serde_json::to_value(m).expect("serializes"));
    }
    let mut traces = serde_json::Map::new();
    for (name, kind) in &s.lyapunov {
        let tr = analysis::lyapunov_trace(&s.protocol, &trajectory, kind).map_err(|e| invalid("analysis.lyapunov", e))?;
        traces.insert(
            name.clone(),
            json!({
                "initial": tr.values.first(),
                "final": tr.values.last(),
                "max_increase": tr.max_increase,
                "positive_variation": tr.positive_variation,
            }),
        );
    }
    obj.insert("requested".into(), json!({ "sets": sets, "lyapunov": traces }));
    if s.exact_equilibrium {
        let x0 = s.x0_exact.as_ref().expect("validated");
        let cert = is_equilibrium_exact(&s.protocol, x0);
        obj.insert(
            "exact_equilibrium_x0".into(),
            match cert {
                Some(c) => json!({
                    "equilibrium": c.equilibrium,
                    "witness": c.witness.map(|w| w.iter().map(|r| r.to_string()).collect::<Vec<_>>()),
                }),
                None => json!({ "equilibrium": null, "reason": "some function has no exact form" }),
            },
        );
    }
    Ok(RunOutcome { trajectory, report })
}

/// Writes `trajectory.csv`, `events.json` and `report.json` into `dir`.
pub fn write_artifacts(out: &RunOutcome, dir: &Path) -> Result<(), ScenarioError> {
    let io = |e: std::io::Error| ScenarioError::Io(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    let csv = std::fs::File::create(dir.join("trajectory.csv")).map_err(io)?;
    out.trajectory
        .write_csv(std::io::BufWriter::new(csv))
        .map_err(|e| ScenarioError::Io(e.to_string()))?;
    let pretty = |v: &Value| serde_json::to_string_pretty(v).expect("serializes") + "\n";
    std::fs::write(dir.join("events.json"), pretty(&out.trajectory.events_json())).map_err(io)?;
    std::fs::write(dir.join("report.json"), pretty(&out.report)).map_err(io)?;
    Ok(())
}

pub struct CatalogEntry {
    pub name: &'static str,
    pub summary: &'static str,
    pub text: &'static str,
}

macro_rules! entry {
    ($name:literal, $summary:literal) => {
        CatalogEntry {
            name: $name,
            summary: $summary,
            text: include_str!(concat!("../scenarios/", $name, ".scenario")),
        }
    };
}

pub const CATALOG: &[CatalogEntry] = &[
    entry!("fig1a_stepphi", "two agents, undirected, unit step edge function: sliding consensus drifting at rate 1/2"),
    entry!("fig1b_asym", "directed 2-ring with the asymmetric quantizer: sliding consensus drifting at rate 1/2"),
    entry!("fig2_q_sym", "seven-node digraph with symmetric quantizers: a non-consensus equilibrium outside H1"),
    entry!("spanning_tree_qs", "quantized measurement on a rooted digraph: practical consensus in one quantizer band"),
    entry!("strongly_connected_mixed", "measurement with mixed quantizers and step functions on a strongly connected digraph"),
    entry!("undirected_qs", "quantized communication on an undirected graph: edge differences within half a step"),
    entry!("ring_qs", "quantized communication on a directed 5-ring"),
    entry!("directed_tree_qs", "quantized communication on a directed tree"),
    entry!("log_quantizer", "measurement with logarithmic quantizers from a positive state"),
];

pub fn catalog_entry(name: &str) -> Option<&'static CatalogEntry> {
    CATALOG.iter().find(|e| e.name == name)
}

impl CatalogEntry {
    pub fn scenario(&self, seed: Option<u64>, overrides: &[String]) -> Result<Scenario, ScenarioError> {
        let mut s = Scenario::from_str_with(self.text, self.name, None, seed, overrides)?;
        if s.name.is_empty() {
            s.name = self.name.to_string();
        }
        Ok(s)
    }
}
