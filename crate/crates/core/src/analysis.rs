//! Convergence-set membership, Lyapunov traces and conformance reports.

use crate::dynamics::{ChannelSource, ProtocolSpec};
use crate::integrator::{EventKind, Monitor, Termination, Trajectory};
use crate::nonlinear::{FilippovInterval, MonotoneFn};
use serde::Serialize;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("set {set} cannot be bound to this protocol: {reason}")]
    BindingMismatch { set: String, reason: String },
    #[error("state has dimension {got}, protocol expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("antiderivative unavailable: {0}")]
    AntiderivativeUnavailable(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConvergenceSet {
    /// Node intervals share a common value.
    D1,
    /// As `D1` with one common node function.
    D2,
    /// Every edge interval contains zero.
    H1,
    /// Every ring-edge interval contains zero.
    H2,
    /// A common value of the shared edge function's interval at zero lies in
    /// every weighted edge interval.
    H3,
    /// All states inside one band `[(k - 1/2)Δ, (k + 1/2)Δ]`.
    PracticalBand(f64),
}

impl fmt::Display for ConvergenceSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConvergenceSet::D1 => write!(f, "D1"),
            ConvergenceSet::D2 => write!(f, "D2"),
            ConvergenceSet::H1 => write!(f, "H1"),
            ConvergenceSet::H2 => write!(f, "H2"),
            ConvergenceSet::H3 => write!(f, "H3"),
            ConvergenceSet::PracticalBand(d) => write!(f, "PracticalBand({d})"),
        }
    }
}

impl std::str::FromStr for ConvergenceSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "D1" => Ok(Self::D1),
            "D2" => Ok(Self::D2),
            "H1" => Ok(Self::H1),
            "H2" => Ok(Self::H2),
            "H3" => Ok(Self::H3),
            other => other
                .strip_prefix("PracticalBand(")
                .and_then(|r| r.strip_suffix(')'))
                .and_then(|d| d.trim().parse::<f64>().ok())
                .filter(|d| *d > 0.0)
                .map(Self::PracticalBand)
                .ok_or_else(|| format!("unknown convergence set `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Membership {
    pub member: bool,
    /// Common value for D1/D2/H3, band index for PracticalBand.
    pub witness: Option<f64>,
    /// First offending node or channel when not a member.
    pub violation: Option<usize>,
}

impl Membership {
    fn yes(witness: Option<f64>) -> Self {
        Self {
            member: true,
            witness,
            violation: None,
        }
    }

    fn no(violation: Option<usize>) -> Self {
        Self {
            member: false,
            witness: None,
            violation,
        }
    }
}

pub fn member(p: &ProtocolSpec, set: ConvergenceSet, x: &[f64]) -> Result<Membership, AnalysisError> {
    member_tol(p, set, x, 0.0)
}

/// Membership with arguments within `tol` of a jump read at the jump and
/// interval values and band edges widened by `tol`.
pub fn member_tol(p: &ProtocolSpec, set: ConvergenceSet, x: &[f64], tol: f64) -> Result<Membership, AnalysisError> {
    if x.len() != p.n() {
        return Err(AnalysisError::DimensionMismatch {
            expected: p.n(),
            got: x.len(),
        });
    }
    let mismatch = |reason: &str| AnalysisError::BindingMismatch {
        set: set.to_string(),
        reason: reason.to_string(),
    };
    let interval = |f: &MonotoneFn, a: f64| {
        if tol > 0.0 {
            f.filippov_interval_near(a, tol)
        } else {
            f.filippov_interval(a)
        }
    };
    match set {
        ConvergenceSet::D1 | ConvergenceSet::D2 => {
            if !p.is_measurement() {
                return Err(mismatch("needs a measurement protocol"));
            }
            if set == ConvergenceSet::D2 && p.common_function().is_none() {
                return Err(mismatch("needs one function shared by all nodes"));
            }
            let ivs: Vec<FilippovInterval> = p
                .functions()
                .iter()
                .zip(x)
                .map(|(f, &xi)| interval(f, xi))
                .collect();
            Ok(common_point(&ivs, tol))
        }
        ConvergenceSet::H1 | ConvergenceSet::H2 => {
            if p.is_measurement() {
                return Err(mismatch("needs a communication protocol"));
            }
            Ok(p
                .channels()
                .iter()
                .position(|c| !interval(&c.func, c.argument(x)).contains_tol(0.0, tol))
                .map_or(Membership::yes(None), |k| Membership::no(Some(k))))
        }
        ConvergenceSet::H3 => {
            if p.is_measurement() {
                return Err(mismatch("needs a communication protocol"));
            }
            let g = p
                .common_function()
                .ok_or_else(|| mismatch("needs one function shared by all edges"))?;
            let mut ivs = vec![interval(g, 0.0)];
            for c in p.channels() {
                let a = channel_weight(p, c.source);
                ivs.push(interval(&c.func, c.argument(x)).scale(a));
            }
            Ok(common_point(&ivs, tol))
        }
        ConvergenceSet::PracticalBand(delta) => {
            let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let k0 = (hi / delta - 0.5).ceil();
            for k in [k0 - 1.0, k0, k0 + 1.0] {
                if (k - 0.5) * delta - tol <= lo && hi <= (k + 0.5) * delta + tol {
                    return Ok(Membership::yes(Some(k)));
                }
            }
            Ok(Membership::no(None))
        }
    }
}

fn channel_weight(p: &ProtocolSpec, source: ChannelSource) -> f64 {
    match source {
        ChannelSource::Node(_) => 1.0,
        ChannelSource::Edge(k) | ChannelSource::Pair(k, _) => p.graph().edges()[k].weight,
    }
}

/// Midpoint of the intersection of all intervals, each widened by `tol`.
fn common_point(ivs: &[FilippovInterval], tol: f64) -> Membership {
    let lo = ivs.iter().map(|i| i.lo).fold(f64::NEG_INFINITY, f64::max);
    let hi = ivs.iter().map(|i| i.hi).fold(f64::INFINITY, f64::min);
    if lo <= hi + 2.0 * tol {
        Membership::yes(Some(if lo == hi { lo } else { 0.5 * (lo + hi) }))
    } else {
        let culprit = ivs.iter().position(|i| i.hi + 2.0 * tol < lo || i.lo - 2.0 * tol > hi);
        Membership::no(culprit)
    }
}

/// Tolerance used when polling membership along a trajectory.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Final-stretch dwell needed to call a run converged.
pub fn required_dwell(t_end: f64) -> f64 {
    (0.1 * t_end).max(10.0)
}

/// Monitor that stops a run once `set` has held for the required dwell.
pub fn monitor<'a>(p: &'a ProtocolSpec, set: ConvergenceSet, t_end: f64) -> Monitor<'a> {
    Monitor {
        id: set.to_string(),
        member: Box::new(move |x: &[f64]| member_tol(p, set, x, MEMBERSHIP_TOL).is_ok_and(|m| m.member)),
        dwell: required_dwell(t_end),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LyapunovKind {
    /// `max_i x_i`
    MaxV,
    /// `-min_i x_i`
    MinW,
    /// `Σ w_i F_i(x_i)` with `F_i` the antiderivative of the node function.
    WeightedV1(Vec<f64>),
    /// `x·x / 2`
    HalfSquaredNorm,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovTrace {
    pub values: Vec<f64>,
    /// Largest single-step increase, zero when nonincreasing.
    pub max_increase: f64,
    /// Sum of the positive parts of all increments.
    pub positive_variation: f64,
    /// Index attaining the max (MaxV) or min (MinW) at each sample.
    pub extremal_index: Option<Vec<usize>>,
}

pub fn lyapunov_trace(p: &ProtocolSpec, traj: &Trajectory, kind: &LyapunovKind) -> Result<LyapunovTrace, AnalysisError> {
    let argext = |x: &[f64], better: fn(f64, f64) -> bool| {
        (0..x.len()).fold(0, |b, i| if better(x[i], x[b]) { i } else { b })
    };
    let (values, extremal_index): (Vec<f64>, Option<Vec<usize>>) = match kind {
        LyapunovKind::MaxV => {
            let idx: Vec<usize> = traj.states.iter().map(|x| argext(x, |a, b| a > b)).collect();
            (traj.states.iter().zip(&idx).map(|(x, &i)| x[i]).collect(), Some(idx))
        }
        LyapunovKind::MinW => {
            let idx: Vec<usize> = traj.states.iter().map(|x| argext(x, |a, b| a < b)).collect();
            (traj.states.iter().zip(&idx).map(|(x, &i)| -x[i]).collect(), Some(idx))
        }
        LyapunovKind::WeightedV1(w) => {
            if !p.is_measurement() {
                return Err(AnalysisError::AntiderivativeUnavailable(
                    "weighted antiderivative sum needs node functions".into(),
                ));
            }
            if w.len() != p.n() {
                return Err(AnalysisError::DimensionMismatch {
                    expected: p.n(),
                    got: w.len(),
                });
            }
            let fs = p.functions();
            (
                traj.states
                    .iter()
                    .map(|x| (0..x.len()).map(|i| w[i] * fs[i].antiderivative(x[i])).sum())
                    .collect(),
                None,
            )
        }
        LyapunovKind::HalfSquaredNorm => (
            traj.states.iter().map(|x| 0.5 * x.iter().map(|v| v * v).sum::<f64>()).collect(),
            None,
        ),
    };
    let increments = values.windows(2).map(|w| w[1] - w[0]);
    let max_increase = increments.clone().fold(0.0, f64::max);
    let positive_variation = increments.map(|d| d.max(0.0)).sum();
    Ok(LyapunovTrace {
        values,
        max_increase,
        positive_variation,
        extremal_index,
    })
}

/// Length of the final stretch of samples during which `set` holds.
pub fn dwell(p: &ProtocolSpec, traj: &Trajectory, set: ConvergenceSet) -> f64 {
    let end = traj.final_time();
    let mut since = None;
    for (t, x) in traj.times.iter().zip(&traj.states).rev() {
        if member_tol(p, set, x, MEMBERSHIP_TOL).is_ok_and(|m| m.member) {
            since = Some(*t);
        } else {
            break;
        }
    }
    since.map_or(0.0, |s| end - s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovSummary {
    #[serde(rename = "maxV_increase")]
    pub max_v_increase: f64,
    #[serde(rename = "minW_increase")]
    pub min_w_increase: f64,
    #[serde(rename = "V1_increase")]
    pub v1_increase: Option<f64>,
    pub half_squared_norm_increase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConformanceReport {
    pub theorem: String,
    pub hypotheses: BTreeMap<String, Value>,
    pub predicted_set: String,
    /// Set whose final membership is reported: the predicted one, or the
    /// family's reference set when nothing is predicted.
    pub reference_set: String,
    pub member_final: bool,
    pub dwell: f64,
    pub dwell_required: f64,
    pub dwell_met: bool,
    pub lyapunov: LyapunovSummary,
    pub termination: Termination,
    pub sets: BTreeMap<String, bool>,
    pub sliding_consensus: bool,
    pub unbounded_drift: bool,
    pub notes: Vec<String>,
}

/// Which convergence result applies to `p` and what it predicts.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub theorem: &'static str,
    pub set: Option<ConvergenceSet>,
    pub hypotheses: BTreeMap<String, Value>,
    pub notes: Vec<String>,
}

pub fn predict(p: &ProtocolSpec) -> Prediction {
    let topo = p.topology();
    let mut h: BTreeMap<String, Value> = BTreeMap::new();
    let mut notes = Vec::new();
    h.insert("topology".into(), json!(topo.flags()));
    let common = p.common_function();
    h.insert("common_function".into(), json!(common.is_some()));
    let fs = p.functions();

    if p.is_measurement() {
        let proper = fs.iter().all(MonotoneFn::is_proper);
        h.insert("proper".into(), json!(proper));
        if !proper {
            notes.push("some node function is bounded; results assume unbounded growth".into());
        }
        if topo.strongly_connected {
            return Prediction {
                theorem: "measurement-strongly-connected",
                set: Some(ConvergenceSet::D1),
                hypotheses: h,
                notes,
            };
        }
        if topo.has_spanning_tree() {
            if let Some(f) = common {
                let quantized = matches!(f, MonotoneFn::SymQuantizer { .. });
                h.insert("symmetric_quantizer".into(), json!(quantized));
                return Prediction {
                    theorem: if quantized {
                        "quantized-measurement-spanning-tree"
                    } else {
                        "measurement-common-spanning-tree"
                    },
                    set: Some(ConvergenceSet::D2),
                    hypotheses: h,
                    notes,
                };
            }
            notes.push("heterogeneous node functions on a spanning-tree digraph: open problem, no claim".into());
            return Prediction {
                theorem: "open",
                set: None,
                hypotheses: h,
                notes,
            };
        }
        notes.push("no directed spanning tree: no claim".into());
        return Prediction {
            theorem: "none",
            set: None,
            hypotheses: h,
            notes,
        };
    }

    let odd = fs.iter().all(|g| g.check_odd(2000, 50.0));
    let zero_at_zero = fs.iter().all(|g| g.eval(0.0) == 0.0);
    let degenerate_somewhere = fs.iter().any(|g| g.filippov_interval(0.0).is_degenerate());
    h.insert("odd".into(), json!(odd));
    h.insert("zero_at_zero".into(), json!(zero_at_zero));
    h.insert("degenerate_interval_at_zero".into(), json!(degenerate_somewhere));

    if topo.undirected && topo.strongly_connected && odd {
        return Prediction {
            theorem: "communication-undirected-odd",
            set: Some(ConvergenceSet::H1),
            hypotheses: h,
            notes,
        };
    }
    if topo.directed_ring {
        let n = p.n();
        let case1 = n == 2 && odd;
        let case2 = n >= 3 && zero_at_zero && degenerate_somewhere;
        h.insert("ring_case".into(), json!(if case1 { 1 } else if case2 { 2 } else { 0 }));
        if case1 || case2 {
            return Prediction {
                theorem: "communication-ring",
                set: Some(ConvergenceSet::H2),
                hypotheses: h,
                notes,
            };
        }
    }
    if topo.directed_tree {
        if let Some(g) = common {
            if g.eval(0.0) == 0.0 {
                return Prediction {
                    theorem: "communication-directed-tree",
                    set: Some(ConvergenceSet::H3),
                    hypotheses: h,
                    notes,
                };
            }
        }
    }
    if topo.undirected && !odd {
        notes.push("undirected graph with a non-odd edge function: sliding consensus is possible, no claim".into());
    } else {
        notes.push("unsupported topology: no claim".into());
    }
    Prediction {
        theorem: "none",
        set: None,
        hypotheses: h,
        notes,
    }
}

pub fn conformance_report(p: &ProtocolSpec, traj: &Trajectory) -> ConformanceReport {
    let pred = predict(p);
    let x = traj.final_state();
    let reference = pred.set.unwrap_or(if p.is_measurement() {
        ConvergenceSet::D1
    } else {
        ConvergenceSet::H1
    });
    let member_final = member_tol(p, reference, x, MEMBERSHIP_TOL).is_ok_and(|m| m.member);
    let t_end = traj.final_time();
    let dwell_required = required_dwell(t_end);
    let dwell_val = dwell(p, traj, reference);

    let mut candidates = vec![ConvergenceSet::D1, ConvergenceSet::D2, ConvergenceSet::H1, ConvergenceSet::H3];
    if let Some(d) = p.common_function().and_then(MonotoneFn::quantizer_step) {
        candidates.push(ConvergenceSet::PracticalBand(d));
    }
    if p.topology().directed_ring {
        candidates.push(ConvergenceSet::H2);
    }
    let sets = candidates
        .into_iter()
        .filter_map(|s| member_tol(p, s, x, MEMBERSHIP_TOL).ok().map(|m| (s.to_string(), m.member)))
        .collect();

    let trace = |k: LyapunovKind| lyapunov_trace(p, traj, &k).map(|t| t.max_increase);
    let v1 = (pred.theorem == "measurement-strongly-connected")
        .then(|| p.graph().left_null_vector().ok())
        .flatten()
        .and_then(|w| trace(LyapunovKind::WeightedV1(w.iter().copied().collect())).ok());

    let consensus_drift = |v: &[f64]| {
        let first = v.first().copied().unwrap_or(0.0);
        first.abs() > 1e-12 && v.iter().all(|vi| (vi - first).abs() <= 1e-9)
    };
    let sliding_consensus = traj.events.iter().any(|e| {
        e.kind == EventKind::SlideEnter
            && e.detail["velocity"]
                .as_array()
                .map(|v| v.iter().filter_map(Value::as_f64).collect::<Vec<_>>())
                .is_some_and(|v| consensus_drift(&v))
    });
    let spread = x.iter().copied().fold(f64::NEG_INFINITY, f64::max) - x.iter().copied().fold(f64::INFINITY, f64::min);
    let final_v = traj.selections.last().cloned().unwrap_or_default();
    let unbounded_drift = spread <= 1e-9 && consensus_drift(&final_v);

    let mut notes = pred.notes;
    if pred.set.is_none() {
        notes.push(format!("member_final reports {reference}, the reference set of this family"));
    }
    if unbounded_drift {
        notes.push(format!(
            "trajectory slides along the consensus line at rate {}: unbounded growth",
            final_v[0]
        ));
    }
    if traj.termination == Termination::Equilibrium {
        notes.push("equilibrium of the produced solution; other Filippov solutions may move".into());
    }

    ConformanceReport {
        theorem: pred.theorem.to_string(),
        hypotheses: pred.hypotheses,
        predicted_set: pred.set.map_or("none".into(), |s| s.to_string()),
        reference_set: reference.to_string(),
        member_final,
        dwell: dwell_val,
        dwell_required,
        dwell_met: dwell_val + 1e-9 >= dwell_required,
        lyapunov: LyapunovSummary {
            max_v_increase: trace(LyapunovKind::MaxV).unwrap_or(f64::NAN),
            min_w_increase: trace(LyapunovKind::MinW).unwrap_or(f64::NAN),
            v1_increase: v1,
            half_squared_norm_increase: trace(LyapunovKind::HalfSquaredNorm).unwrap_or(f64::NAN),
        },
        termination: traj.termination.clone(),
        sets,
        sliding_consensus,
        unbounded_drift,
        notes,
    }
}
