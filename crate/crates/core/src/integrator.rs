//! Event-driven Euler integration of Filippov solutions.
//!
//! For piecewise-constant nonlinearities the field is constant inside every
//! cell, so an Euler step that stops exactly at the next jump is exact. At a
//! switching surface the velocity is resolved from the exact local Filippov
//! set: a cell whose own velocity points into it is followed (crossing);
//! otherwise the least-ℓ1 selection on the smallest face that admits motion is
//! used (sliding). Zero in the local set ends the run as an equilibrium of the
//! produced solution.

use crate::dynamics::{
    dot, select_tol, DynamicsError, FaceSolution, LocalField, ProtocolSpec, SelectionPolicy,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IntegratorError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("step underflow at t = {t}: no admissible motion could be resolved")]
    StepUnderflow { t: f64, x: Vec<f64> },
    #[error("chattering could not be resolved at t = {t} (last {} states kept)", window.len())]
    ChatterUnresolved { t: f64, window: Vec<(f64, Vec<f64>)> },
    #[error("step limit {0} reached before the horizon")]
    StepLimit(usize),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    CaratheodoryOnly,
    SlidingAware,
    /// Structural selection by policy; each entry applies from its start time.
    PrescribedSelection(Vec<(f64, SelectionPolicy)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt_max: f64,
    pub t_end: f64,
    pub event_tol: f64,
    pub sliding_tol: f64,
    pub chatter_window: usize,
    pub mode: Mode,
    pub max_steps: usize,
}

impl IntegratorConfig {
    pub fn new(dt_max: f64, t_end: f64) -> Self {
        Self {
            dt_max,
            t_end,
            event_tol: 1e-10,
            sliding_tol: 1e-9,
            chatter_window: 8,
            mode: Mode::SlidingAware,
            max_steps: 2_000_000,
        }
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<(), IntegratorError> {
        let bad = |m: &str| Err(IntegratorError::InvalidConfig(m.to_string()));
        if !(self.dt_max > 0.0 && self.dt_max.is_finite()) {
            return bad("dt_max must be positive");
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad("t_end must be finite and nonnegative");
        }
        if !(self.event_tol > 0.0) || !(self.sliding_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.chatter_window == 0 {
            return bad("chatter_window must be at least 1");
        }
        if let Mode::PrescribedSelection(schedule) = &self.mode {
            if schedule.is_empty() {
                return bad("prescribed selection needs at least one policy");
            }
            if schedule.windows(2).any(|w| w[0].0 > w[1].0) {
                return bad("policy schedule must be sorted by start time");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    BoundaryCross,
    SlideEnter,
    SlideExit,
    EquilibriumReached,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    pub detail: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Horizon,
    Equilibrium,
    Converged(String),
    Diverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Velocity used on `[times[k], times[k+1]]`; the last entry is the
    /// velocity at the final state.
    pub selections: Vec<Vec<f64>>,
    pub events: Vec<Event>,
    pub termination: Termination,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one time")
    }

    /// `max_k ‖x_{k+1} - x_k - (t_{k+1} - t_k) v_k‖∞`.
    pub fn reconstruction_error(&self) -> f64 {
        (0..self.states.len().saturating_sub(1))
            .map(|k| {
                let dt = self.times[k + 1] - self.times[k];
                self.states[k + 1]
                    .iter()
                    .zip(&self.states[k])
                    .zip(&self.selections[k])
                    .map(|((a, b), v)| (a - b - dt * v).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// CSV with header `t,x0..x{n-1},v0..v{n-1}`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), IntegratorError> {
        let n = self.states.first().map_or(0, Vec::len);
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|i| format!("x{i}")));
        header.extend((0..n).map(|i| format!("v{i}")));
        out.write_record(&header)?;
        for ((t, x), v) in self.times.iter().zip(&self.states).zip(&self.selections) {
            let row: Vec<String> = std::iter::once(*t)
                .chain(x.iter().copied())
                .chain(v.iter().copied())
                .map(|f| format!("{f:?}"))
                .collect();
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn events_json(&self) -> Value {
        serde_json::to_value(&self.events).expect("events serialize")
    }
}

/// How the velocity at a state was obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum Resolution {
    /// Zero lies in the local set; the constant solution is followed.
    Equilibrium,
    /// No surface within tolerance.
    Regular(Vec<f64>),
    /// A cell whose velocity points into it across every active surface.
    Cross { cell: u64, velocity: Vec<f64> },
    /// Motion on a face of the active surfaces.
    Slide(FaceSolution),
    /// Structural selection by policy.
    Prescribed(Vec<f64>),
}

impl Resolution {
    pub fn velocity(&self, n: usize) -> Vec<f64> {
        match self {
            Resolution::Equilibrium => vec![0.0; n],
            Resolution::Regular(v) | Resolution::Prescribed(v) => v.clone(),
            Resolution::Cross { velocity, .. } => velocity.clone(),
            Resolution::Slide(f) => f.velocity.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub x: Vec<f64>,
    pub dt: f64,
    pub velocity: Vec<f64>,
    pub resolution: Resolution,
    /// Channels whose argument reaches a jump at the end of the step.
    pub hits: Vec<usize>,
}

/// Velocity normal speed below which a cell is not considered to be entered.
const CROSS_EPS: f64 = 1e-12;
const UNDERFLOW_DT: f64 = 1e-14;
const DIVERGENCE_BOUND: f64 = 1e12;

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Resolves the velocity at `x` from the exact local Filippov set.
/// `prev` is the previous velocity, used to continue through crossings.
pub fn resolve(
    p: &ProtocolSpec,
    x: &[f64],
    cfg: &IntegratorConfig,
    t: f64,
    prev: Option<&[f64]>,
) -> Result<(Resolution, LocalField), IntegratorError> {
    let local = LocalField::new(p, x, cfg.sliding_tol)?;
    if let Mode::PrescribedSelection(schedule) = &cfg.mode {
        let policy = schedule
            .iter()
            .rev()
            .find(|(start, _)| *start <= t)
            .map_or(&schedule[0].1, |(_, pol)| pol);
        let v = select_tol(p, x, policy, cfg.sliding_tol)?;
        let r = if norm_inf(&v) <= crate::lp::F64_TOL {
            Resolution::Equilibrium
        } else {
            Resolution::Prescribed(v)
        };
        return Ok((r, local));
    }
    if local.groups.is_empty() {
        let r = if norm_inf(&local.base) <= crate::lp::F64_TOL {
            Resolution::Equilibrium
        } else {
            Resolution::Regular(local.base.clone())
        };
        return Ok((r, local));
    }
    let sliding = cfg.mode == Mode::SlidingAware;
    if sliding && local.contains_zero().is_some() {
        return Ok((Resolution::Equilibrium, local));
    }
    let cells = local.consistent_cells(CROSS_EPS);
    if !cells.is_empty() {
        let continuation = prev.map(|v| {
            local.groups.iter().enumerate().fold(0u64, |m, (h, g)| {
                if g.rate(v) > 0.0 {
                    m | 1 << h
                } else {
                    m
                }
            })
        });
        let pick = cells
            .iter()
            .find(|(m, _)| Some(*m) == continuation)
            .or_else(|| {
                cells
                    .iter()
                    .min_by(|a, b| l1(&a.1).total_cmp(&l1(&b.1)))
            })
            .expect("nonempty");
        return Ok((
            Resolution::Cross {
                cell: pick.0,
                velocity: pick.1.clone(),
            },
            local,
        ));
    }
    if !sliding {
        return Err(IntegratorError::StepUnderflow { t, x: x.to_vec() });
    }
    let full = local.full_mask();
    let h = local.groups.len() as u32;
    for k in 1..=h {
        let mut best: Option<FaceSolution> = None;
        for stay in (1..=full).filter(|m: &u64| m.count_ones() == k) {
            let free = full & !stay;
            let mut sides = free;
            loop {
                if let Some(sol) = local.face(stay, sides, false) {
                    if best.as_ref().is_none_or(|b| l1(&sol.velocity) < l1(&b.velocity)) {
                        best = Some(sol);
                    }
                }
                if sides == 0 {
                    break;
                }
                sides = (sides - 1) & free;
            }
        }
        if let Some(b) = best {
            let with_drift = local.face(b.stay, b.sides, true).unwrap_or(b);
            return Ok((Resolution::Slide(with_drift), local));
        }
    }
    Err(IntegratorError::StepUnderflow { t, x: x.to_vec() })
}

/// Selection that keeps every active surface at `x`; `None` when no
/// admissible selection stays on all of them.
pub fn sliding_selection(p: &ProtocolSpec, x: &[f64], cfg: &IntegratorConfig) -> Result<Option<FaceSolution>, IntegratorError> {
    let local = LocalField::new(p, x, cfg.sliding_tol)?;
    if local.groups.is_empty() {
        return Ok(Some(FaceSolution {
            velocity: local.base.clone(),
            stay: 0,
            sides: 0,
            drift_range: None,
        }));
    }
    Ok(local.face(local.full_mask(), 0, true))
}

/// Largest step along `v` that reaches no new jump, with the channels
/// reaching one at that step.
pub fn event_horizon(p: &ProtocolSpec, x: &[f64], v: &[f64], cfg: &IntegratorConfig, dt_cap: f64) -> (f64, Vec<usize>) {
    let scale = 1.0 + norm_inf(v);
    let mut best = dt_cap;
    let mut times = Vec::new();
    for (k, ch) in p.channels().iter().enumerate() {
        let r = dot(&ch.arg, v);
        if r.abs() <= 1e-13 * scale {
            continue;
        }
        let a = ch.argument(x);
        let from = ch.func.breakpoint_near(a, cfg.sliding_tol).unwrap_or(a);
        let next = if r > 0.0 {
            ch.func.next_breakpoint_above(from)
        } else {
            ch.func.next_breakpoint_below(from)
        };
        if let Some(b) = next {
            let tau = ((b - a) / r).max(0.0);
            times.push((k, tau));
            best = best.min(tau);
        }
    }
    let hits = times
        .into_iter()
        .filter(|&(_, tau)| tau <= best + cfg.event_tol)
        .map(|(k, _)| k)
        .filter(|_| best < dt_cap)
        .collect();
    (best, hits)
}

/// Moves `x` onto every surface within `tol` by a least-norm correction.
pub fn snap(p: &ProtocolSpec, x: &mut [f64], tol: f64) {
    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    for ch in p.channels() {
        let a = ch.argument(x);
        if let Some(b) = ch.func.breakpoint_near(a, tol) {
            if a != b && !rows.iter().any(|(r, o)| *r == ch.arg && *o == b) {
                rows.push((ch.arg.clone(), b));
            }
        }
    }
    if rows.is_empty() {
        return;
    }
    // surfaces already satisfied still constrain the correction
    for ch in p.channels() {
        let a = ch.argument(x);
        if let Some(b) = ch.func.breakpoint_near(a, tol) {
            if a == b && !rows.iter().any(|(r, o)| *r == ch.arg && *o == b) {
                rows.push((ch.arg.clone(), b));
            }
        }
    }
    let n = x.len();
    let m = rows.len();
    let mut nm = DMatrix::zeros(m, n);
    let mut resid = DVector::zeros(m);
    for (r, (arg, b)) in rows.iter().enumerate() {
        for &(j, c) in arg {
            nm[(r, j)] = c;
        }
        resid[r] = b - dot(arg, x);
    }
    let gram = &nm * nm.transpose();
    let Ok(y) = gram.svd(true, true).solve(&resid, 1e-12) else {
        return;
    };
    let delta = nm.transpose() * y;
    for (xi, d) in x.iter_mut().zip(delta.iter()) {
        *xi += d;
    }
}

/// One integration step from `(t, x)`.
pub fn step(p: &ProtocolSpec, x: &[f64], t: f64, cfg: &IntegratorConfig) -> Result<StepOutcome, IntegratorError> {
    step_from(p, x, t, cfg, None).map(|(o, _)| o)
}

fn step_from(
    p: &ProtocolSpec,
    x: &[f64],
    t: f64,
    cfg: &IntegratorConfig,
    prev: Option<&[f64]>,
) -> Result<(StepOutcome, LocalField), IntegratorError> {
    p.check_dim(x)?;
    let (resolution, local) = resolve(p, x, cfg, t, prev)?;
    let velocity = resolution.velocity(p.n());
    if resolution == Resolution::Equilibrium {
        return Ok((
            StepOutcome {
                x: x.to_vec(),
                dt: 0.0,
                velocity,
                resolution,
                hits: Vec::new(),
            },
            local,
        ));
    }
    let cap = cfg.dt_max.min(cfg.t_end - t).max(0.0);
    let (dt, hits) = event_horizon(p, x, &velocity, cfg, cap);
    let mut next: Vec<f64> = x.iter().zip(&velocity).map(|(xi, vi)| xi + dt * vi).collect();
    if !hits.is_empty() {
        snap(p, &mut next, cfg.sliding_tol);
    }
    Ok((
        StepOutcome {
            x: next,
            dt,
            velocity,
            resolution,
            hits,
        },
        local,
    ))
}

/// Convergence-set callback: `member` is polled after every step and the run
/// stops once membership has held for `dwell` time units.
pub struct Monitor<'a> {
    pub id: String,
    pub member: Box<dyn Fn(&[f64]) -> bool + 'a>,
    pub dwell: f64,
}

pub fn simulate(p: &ProtocolSpec, x0: &[f64], cfg: &IntegratorConfig) -> Result<Trajectory, IntegratorError> {
    simulate_monitored(p, x0, cfg, None)
}

type SurfaceKey = (Vec<(usize, f64)>, u64);

fn surface_keys(local: &LocalField, mask: u64) -> Vec<SurfaceKey> {
    local
        .groups
        .iter()
        .enumerate()
        .filter(|(h, _)| mask >> h & 1 == 1)
        .map(|(_, g)| (g.normal.clone(), g.offset.to_bits()))
        .collect()
}

fn surfaces_json(keys: &[SurfaceKey]) -> Value {
    Value::Array(
        keys.iter()
            .map(|(normal, off)| {
                json!({
                    "normal": normal.iter().map(|&(j, c)| json!([j, c])).collect::<Vec<_>>(),
                    "offset": f64::from_bits(*off),
                })
            })
            .collect(),
    )
}

pub fn simulate_monitored(
    p: &ProtocolSpec,
    x0: &[f64],
    cfg: &IntegratorConfig,
    monitor: Option<Monitor<'_>>,
) -> Result<Trajectory, IntegratorError> {
    cfg.validate()?;
    p.check_dim(x0)?;
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x0.to_vec()],
        selections: Vec::new(),
        events: Vec::new(),
        termination: Termination::Horizon,
    };
    let mut x = x0.to_vec();
    let mut t = 0.0;
    let mut prev_v: Option<Vec<f64>> = None;
    let mut sliding_on: Vec<SurfaceKey> = Vec::new();
    let mut tiny_steps = 0usize;
    let mut inside_since = monitor.as_ref().and_then(|m| (m.member)(&x).then_some(0.0));
    let window = |traj: &Trajectory| -> Vec<(f64, Vec<f64>)> {
        let k = traj.times.len().saturating_sub(cfg.chatter_window);
        traj.times[k..].iter().copied().zip(traj.states[k..].iter().cloned()).collect()
    };

    for _ in 0..cfg.max_steps {
        if t >= cfg.t_end {
            traj.selections.push(prev_v.clone().unwrap_or_else(|| vec![0.0; p.n()]));
            return Ok(traj);
        }
        let (out, local) = match step_from(p, &x, t, cfg, prev_v.as_deref()) {
            Ok(r) => r,
            Err(IntegratorError::StepUnderflow { t, .. }) => {
                return Err(IntegratorError::ChatterUnresolved {
                    t,
                    window: window(&traj),
                })
            }
            Err(e) => return Err(e),
        };

        let now_sliding = match &out.resolution {
            Resolution::Slide(face) => surface_keys(&local, face.stay),
            _ => Vec::new(),
        };
        let left: Vec<SurfaceKey> = sliding_on.iter().filter(|k| !now_sliding.contains(k)).cloned().collect();
        if !left.is_empty() {
            traj.events.push(Event {
                t,
                kind: EventKind::SlideExit,
                detail: json!({ "surfaces": surfaces_json(&left) }),
            });
        }
        match &out.resolution {
            Resolution::Equilibrium => {
                traj.events.push(Event {
                    t,
                    kind: EventKind::EquilibriumReached,
                    detail: json!({ "state": x }),
                });
                traj.selections.push(vec![0.0; p.n()]);
                if t < cfg.t_end {
                    traj.times.push(cfg.t_end);
                    traj.states.push(x.clone());
                    traj.selections.push(vec![0.0; p.n()]);
                }
                traj.termination = Termination::Equilibrium;
                if let Some(m) = &monitor {
                    let since = if (m.member)(&x) { inside_since.or(Some(t)) } else { None };
                    if since.is_some_and(|s| traj.final_time() - s >= m.dwell) {
                        traj.termination = Termination::Converged(m.id.clone());
                    }
                }
                return Ok(traj);
            }
            Resolution::Slide(face) if now_sliding != sliding_on => {
                let entered: Vec<SurfaceKey> = now_sliding.iter().filter(|k| !sliding_on.contains(k)).cloned().collect();
                if !entered.is_empty() {
                    traj.events.push(Event {
                        t,
                        kind: EventKind::SlideEnter,
                        detail: json!({
                            "surfaces": surfaces_json(&now_sliding),
                            "velocity": face.velocity,
                            "drift_range": face.drift_range.map(|(a, b)| vec![a, b]),
                            "selection": "least_l1",
                        }),
                    });
                }
            }
            Resolution::Cross { cell, .. } => {
                traj.events.push(Event {
                    t,
                    kind: EventKind::BoundaryCross,
                    detail: json!({
                        "surfaces": surfaces_json(&surface_keys(&local, local.full_mask())),
                        "sides": surface_keys(&local, local.full_mask())
                            .iter()
                            .enumerate()
                            .map(|(h, _)| if cell >> h & 1 == 1 { 1 } else { -1 })
                            .collect::<Vec<i32>>(),
                    }),
                });
            }
            _ => {}
        }
        sliding_on = now_sliding;

        if out.dt < UNDERFLOW_DT {
            tiny_steps += 1;
            if tiny_steps >= cfg.chatter_window {
                return Err(IntegratorError::ChatterUnresolved {
                    t,
                    window: window(&traj),
                });
            }
        } else {
            tiny_steps = 0;
        }

        traj.selections.push(out.velocity.clone());
        t += out.dt;
        if cfg.t_end - t < 1e-12 * cfg.t_end.max(1.0) {
            t = cfg.t_end;
        }
        x = out.x;
        traj.times.push(t);
        traj.states.push(x.clone());
        prev_v = Some(out.velocity);

        if x.iter().any(|v| !v.is_finite()) || norm_inf(&x) > DIVERGENCE_BOUND {
            traj.selections.push(prev_v.unwrap_or_default());
            traj.termination = Termination::Diverged;
            return Ok(traj);
        }
        if let Some(m) = &monitor {
            if (m.member)(&x) {
                let since = *inside_since.get_or_insert(t);
                if t - since >= m.dwell {
                    traj.selections.push(prev_v.unwrap_or_default());
                    traj.termination = Termination::Converged(m.id.clone());
                    return Ok(traj);
                }
            } else {
                inside_since = None;
            }
        }
    }
    Err(IntegratorError::StepLimit(cfg.max_steps))
}
