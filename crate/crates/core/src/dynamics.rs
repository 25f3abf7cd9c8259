//! Measurement and communication protocols as set-valued right-hand sides.
//!
//! Both families reduce to a list of scalar *channels*: channel `k` reads a
//! signed combination of states, passes it through a monotone function and
//! feeds the result into the velocity with fixed output coefficients:
//!
//! ```text
//! ẋ = Σ_k out_k · g_k(arg_k · x)
//! ```
//!
//! Measurement: one channel per node, `arg = x_i`, `out = -L[:, i]`.
//! Communication: one channel per directed edge, or one per undirected pair
//! when the two directions carry the same odd function (the tied form).
//!
//! Two set-valued views are offered. The *structural* set treats every channel
//! value independently inside its Filippov interval (the product form used by
//! the convergence analysis). The *exact* local set groups channels by the
//! hyperplane they switch on and takes the convex hull of the limiting
//! velocities of the surrounding cells; it is what sliding motion must use.

use crate::graph::{TopologyClass, WeightedDigraph};
use crate::lp::{Cmp, LinearProgram, LpOutcome, Scalar};
use crate::nonlinear::{rational, FilippovInterval, MonotoneFn};
use num::BigRational;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("state has dimension {got}, protocol expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("expected {expected} functions, got {got}")]
    FunctionCount { expected: usize, got: usize },
    #[error("selection coefficient {value} at position {index} is outside [0, 1]")]
    PolicyCoefficientOutOfRange { index: usize, value: f64 },
    #[error("explicit policy needs 1 or {expected} coefficients, got {got}")]
    PolicyLength { expected: usize, got: usize },
    #[error("state is not finite")]
    NonFiniteState,
    #[error("{0} linearly dependent switching surfaces meet here; at most {1} are supported")]
    TooManyActive(usize, usize),
}

/// Sign convention of the communication protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// `ẋ_i = -Σ_j a_ij g_ij(x_i - x_j)`
    #[default]
    Difference,
    /// `ẋ_i = Σ_j a_ij g_ij(x_j - x_i)`
    Relative,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// One function per node.
    Measurement { f: Vec<MonotoneFn> },
    /// One function per graph edge, in `graph.edges()` order.
    Communication {
        g: Vec<MonotoneFn>,
        convention: Convention,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelSource {
    Node(usize),
    /// Index into `graph.edges()`.
    Edge(usize),
    /// Both directions of an undirected pair, as edge indices `(p -> q, q -> p)`.
    Pair(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub arg: Vec<(usize, f64)>,
    pub func: MonotoneFn,
    pub out: Vec<(usize, f64)>,
    pub source: ChannelSource,
}

impl Channel {
    pub fn argument(&self, x: &[f64]) -> f64 {
        self.arg.iter().map(|&(j, c)| c * x[j]).sum()
    }

    pub fn exact_argument(&self, x: &[BigRational]) -> Option<BigRational> {
        let mut acc = BigRational::from_integer(0.into());
        for &(j, c) in &self.arg {
            acc += rational(c)? * &x[j];
        }
        Some(acc)
    }
}

#[derive(Debug, Clone)]
pub struct ProtocolSpec {
    graph: WeightedDigraph,
    family: Family,
    topology: TopologyClass,
    tied: bool,
    channels: Vec<Channel>,
    warnings: Vec<String>,
}

/// Grid used when checking oddness of communication functions.
const ODD_CHECK_SAMPLES: usize = 2000;
const ODD_CHECK_RANGE: f64 = 50.0;

impl ProtocolSpec {
    pub fn measurement(graph: WeightedDigraph, f: Vec<MonotoneFn>) -> Result<Self, DynamicsError> {
        let n = graph.node_count();
        if f.len() != n {
            return Err(DynamicsError::FunctionCount {
                expected: n,
                got: f.len(),
            });
        }
        let mut warnings = Vec::new();
        for (i, fi) in f.iter().enumerate() {
            if !fi.is_proper() {
                warnings.push(format!(
                    "node {i}: `{}` is bounded; convergence results for measurement protocols assume |f(x)| grows without bound",
                    fi.kind()
                ));
            }
        }
        let mut outs: Vec<Vec<(usize, f64)>> = (0..n).map(|i| vec![(i, 0.0)]).collect();
        for e in graph.edges() {
            outs[e.to][0].1 -= e.weight;
            outs[e.from].push((e.to, e.weight));
        }
        let channels = f
            .iter()
            .zip(outs)
            .enumerate()
            .map(|(i, (fi, out))| Channel {
                arg: vec![(i, 1.0)],
                func: fi.clone(),
                out,
                source: ChannelSource::Node(i),
            })
            .collect();
        let topology = graph.classify();
        Ok(Self {
            graph,
            family: Family::Measurement { f },
            topology,
            tied: false,
            channels,
            warnings,
        })
    }

    /// Builds the communication protocol. On undirected graphs where both
    /// directions of every pair carry the same odd function the tied form is
    /// used; otherwise every directed edge is its own channel.
    pub fn communication(
        graph: WeightedDigraph,
        g: Vec<MonotoneFn>,
        convention: Convention,
    ) -> Result<Self, DynamicsError> {
        let m = graph.edge_count();
        if g.len() != m {
            return Err(DynamicsError::FunctionCount {
                expected: m,
                got: g.len(),
            });
        }
        let topology = graph.classify();
        let odd: Vec<bool> = g
            .iter()
            .map(|gi| gi.check_odd(ODD_CHECK_SAMPLES, ODD_CHECK_RANGE))
            .collect();
        let mut warnings = Vec::new();
        if topology.undirected {
            for (k, e) in graph.edges().iter().enumerate() {
                if !odd[k] {
                    warnings.push(format!(
                        "edge {}->{}: `{}` is not odd; undirected convergence results need odd functions",
                        e.from,
                        e.to,
                        g[k].kind()
                    ));
                }
            }
        }
        let tied = topology.undirected && reverse_pairs(&graph).is_some_and(|pairs| {
            pairs.iter().all(|&(k, r)| odd[k] && g[k] == g[r])
        });
        let mut spec = Self {
            graph,
            family: Family::Communication { g, convention },
            topology,
            tied,
            channels: Vec::new(),
            warnings,
        };
        spec.channels = spec.build_communication_channels();
        Ok(spec)
    }

    /// Forces one channel per directed edge.
    pub fn untied(mut self) -> Self {
        if self.tied {
            self.tied = false;
            self.channels = self.build_communication_channels();
        }
        self
    }

    fn build_communication_channels(&self) -> Vec<Channel> {
        let Family::Communication { g, convention } = &self.family else {
            unreachable!("communication channels on a measurement protocol")
        };
        let edges = self.graph.edges();
        if self.tied {
            let pairs = reverse_pairs(&self.graph).expect("tied form requires symmetric edges");
            pairs
                .into_iter()
                .filter(|&(k, _)| edges[k].from < edges[k].to)
                .map(|(k, r)| {
                    let (p, q, a) = (edges[k].from, edges[k].to, edges[k].weight);
                    Channel {
                        arg: vec![(p, 1.0), (q, -1.0)],
                        func: g[k].clone(),
                        out: vec![(p, -a), (q, a)],
                        source: ChannelSource::Pair(k, r),
                    }
                })
                .collect()
        } else {
            edges
                .iter()
                .enumerate()
                .map(|(k, e)| {
                    let (i, j, a) = (e.to, e.from, e.weight);
                    let (arg, out) = match convention {
                        Convention::Difference => (vec![(i, 1.0), (j, -1.0)], vec![(i, -a)]),
                        Convention::Relative => (vec![(j, 1.0), (i, -1.0)], vec![(i, a)]),
                    };
                    Channel {
                        arg,
                        func: g[k].clone(),
                        out,
                        source: ChannelSource::Edge(k),
                    }
                })
                .collect()
        }
    }

    pub fn n(&self) -> usize {
        self.graph.node_count()
    }

    pub fn graph(&self) -> &WeightedDigraph {
        &self.graph
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn topology(&self) -> &TopologyClass {
        &self.topology
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn is_tied(&self) -> bool {
        self.tied
    }

    pub fn is_measurement(&self) -> bool {
        matches!(self.family, Family::Measurement { .. })
    }

    /// Communication on an undirected graph, where oddness is required.
    pub fn odd_required(&self) -> bool {
        !self.is_measurement() && self.topology.undirected
    }

    pub fn functions(&self) -> &[MonotoneFn] {
        match &self.family {
            Family::Measurement { f } => f,
            Family::Communication { g, .. } => g,
        }
    }

    /// The shared function when every node (or edge) uses the same one.
    pub fn common_function(&self) -> Option<&MonotoneFn> {
        let fs = self.functions();
        let first = fs.first()?;
        fs.iter().all(|f| f == first).then_some(first)
    }

    pub fn check_dim(&self, x: &[f64]) -> Result<(), DynamicsError> {
        if x.len() != self.n() {
            return Err(DynamicsError::DimensionMismatch {
                expected: self.n(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::NonFiniteState);
        }
        Ok(())
    }

    /// `Σ_k ν_k out_k`.
    pub fn velocity_from(&self, nu: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.n()];
        for (ch, &val) in self.channels.iter().zip(nu) {
            if val != 0.0 {
                for &(i, c) in &ch.out {
                    v[i] += c * val;
                }
            }
        }
        v
    }

    pub fn channel_arguments(&self, x: &[f64]) -> Vec<f64> {
        self.channels.iter().map(|c| c.argument(x)).collect()
    }

    /// Single-valued field `Σ out_k g_k(arg_k x)` using each function's own
    /// value at jump points.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let nu: Vec<f64> = self
            .channels
            .iter()
            .map(|c| c.func.eval(c.argument(x)))
            .collect();
        self.velocity_from(&nu)
    }
}

/// For every edge, the index of its reverse edge; `None` if some edge has none.
fn reverse_pairs(graph: &WeightedDigraph) -> Option<Vec<(usize, usize)>> {
    let edges = graph.edges();
    edges
        .iter()
        .enumerate()
        .map(|(k, e)| {
            edges
                .iter()
                .position(|r| r.from == e.to && r.to == e.from && r.weight == e.weight)
                .map(|r| (k, r))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelInterval {
    pub channel: usize,
    pub argument: f64,
    pub interval: FilippovInterval,
}

/// Componentwise over-approximation of the admissible velocities together
/// with the per-channel intervals it was built from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InclusionBox {
    pub components: Vec<FilippovInterval>,
    pub channels: Vec<ChannelInterval>,
}

impl InclusionBox {
    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        self.components
            .iter()
            .zip(v)
            .all(|(c, &vi)| c.contains_tol(vi, tol))
    }
}

pub fn rhs_decomposition(p: &ProtocolSpec, x: &[f64]) -> Result<InclusionBox, DynamicsError> {
    rhs_decomposition_tol(p, x, 0.0)
}

/// As [`rhs_decomposition`], but channels within `tol` of a jump use the
/// interval at that jump.
pub fn rhs_decomposition_tol(p: &ProtocolSpec, x: &[f64], tol: f64) -> Result<InclusionBox, DynamicsError> {
    p.check_dim(x)?;
    let channels: Vec<ChannelInterval> = p
        .channels()
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let argument = c.argument(x);
            let interval = if tol > 0.0 {
                c.func.filippov_interval_near(argument, tol)
            } else {
                c.func.filippov_interval(argument)
            };
            ChannelInterval {
                channel: k,
                argument,
                interval,
            }
        })
        .collect();
    let mut components = vec![FilippovInterval::point(0.0); p.n()];
    for (ch, ci) in p.channels().iter().zip(&channels) {
        for &(i, c) in &ch.out {
            components[i] = components[i].add(&ci.interval.scale(c));
        }
    }
    Ok(InclusionBox {
        components,
        channels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    RightContinuous,
    LeftContinuous,
    Midpoint,
    /// `lo + λ (hi - lo)` per channel; a single value applies to every channel.
    Explicit(Vec<f64>),
}

impl SelectionPolicy {
    pub fn validate(&self, channels: usize) -> Result<(), DynamicsError> {
        if let SelectionPolicy::Explicit(l) = self {
            if l.len() != 1 && l.len() != channels {
                return Err(DynamicsError::PolicyLength {
                    expected: channels,
                    got: l.len(),
                });
            }
            if let Some((index, &value)) = l.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
                return Err(DynamicsError::PolicyCoefficientOutOfRange { index, value });
            }
        }
        Ok(())
    }

    fn lambda(&self, k: usize) -> f64 {
        match self {
            SelectionPolicy::RightContinuous => 1.0,
            SelectionPolicy::LeftContinuous => 0.0,
            SelectionPolicy::Midpoint => 0.5,
            SelectionPolicy::Explicit(l) => {
                if l.len() == 1 {
                    l[0]
                } else {
                    l[k]
                }
            }
        }
    }
}

/// One element of the structural set: every channel value is picked from its
/// interval independently according to `policy`.
pub fn select(p: &ProtocolSpec, x: &[f64], policy: &SelectionPolicy) -> Result<Vec<f64>, DynamicsError> {
    select_tol(p, x, policy, 0.0)
}

pub fn select_tol(
    p: &ProtocolSpec,
    x: &[f64],
    policy: &SelectionPolicy,
    tol: f64,
) -> Result<Vec<f64>, DynamicsError> {
    policy.validate(p.channels().len())?;
    let dec = rhs_decomposition_tol(p, x, tol)?;
    let nu: Vec<f64> = dec
        .channels
        .iter()
        .map(|ci| ci.interval.at(policy.lambda(ci.channel)))
        .collect();
    Ok(p.velocity_from(&nu))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumCertificate {
    pub equilibrium: bool,
    /// Channel values realizing a zero velocity.
    pub witness: Option<Vec<f64>>,
    /// `max_i |Σ_k out_k[i] ν_k|` for the witness.
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactCertificate {
    pub equilibrium: bool,
    pub witness: Option<Vec<BigRational>>,
}

/// Whether zero lies in the structural set at `x`, decided by a small LP over
/// the channel intervals.
pub fn is_equilibrium(p: &ProtocolSpec, x: &[f64]) -> Result<EquilibriumCertificate, DynamicsError> {
    let dec = rhs_decomposition(p, x)?;
    let bounds: Vec<(f64, f64)> = dec
        .channels
        .iter()
        .map(|c| (c.interval.lo, c.interval.hi))
        .collect();
    let outs: Vec<Vec<(usize, f64)>> = p.channels().iter().map(|c| c.out.clone()).collect();
    Ok(match structural_zero(p.n(), &outs, &bounds) {
        Some(mut nu) => {
            for (v, (lo, hi)) in nu.iter_mut().zip(&bounds) {
                *v = v.clamp(*lo, *hi);
            }
            let residual = p.velocity_from(&nu).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            EquilibriumCertificate {
                equilibrium: residual <= crate::lp::F64_TOL,
                witness: Some(nu),
                residual: Some(residual),
            }
        }
        None => EquilibriumCertificate {
            equilibrium: false,
            witness: None,
            residual: None,
        },
    })
}

/// Exact variant over rational states. `None` when some function has no
/// rational form (the logarithmic quantizer away from zero).
pub fn is_equilibrium_exact(p: &ProtocolSpec, x: &[BigRational]) -> Option<ExactCertificate> {
    if x.len() != p.n() {
        return None;
    }
    let mut bounds = Vec::with_capacity(p.channels().len());
    let mut outs = Vec::with_capacity(p.channels().len());
    for c in p.channels() {
        bounds.push(c.func.exact_interval(&c.exact_argument(x)?)?);
        outs.push(
            c.out
                .iter()
                .map(|&(i, w)| rational(w).map(|w| (i, w)))
                .collect::<Option<Vec<_>>>()?,
        );
    }
    let witness = structural_zero(p.n(), &outs, &bounds);
    Some(ExactCertificate {
        equilibrium: witness.is_some(),
        witness,
    })
}

/// Finds `ν` with `lo ≤ ν ≤ hi` and `Σ_k out_k ν_k = 0`.
fn structural_zero<T: Scalar>(n: usize, outs: &[Vec<(usize, T)>], bounds: &[(T, T)]) -> Option<Vec<T>> {
    let mut lp = LinearProgram::<T>::new(bounds.len());
    let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
    for (k, out) in outs.iter().enumerate() {
        for (i, c) in out {
            rows[*i].push((k, c.clone()));
        }
    }
    for (k, (lo, hi)) in bounds.iter().enumerate() {
        lp.set_free(k);
        if lo == hi {
            lp.constrain(vec![(k, T::one())], Cmp::Eq, lo.clone());
        } else {
            lp.bound(k, lo.clone(), hi.clone());
        }
    }
    for row in rows.into_iter().filter(|r| !r.is_empty()) {
        lp.constrain(row, Cmp::Eq, T::zero());
    }
    lp.solve().solution()
}

/// A switching hyperplane `normal · x = offset` with the channels that jump
/// on it and the velocity they contribute on each side.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveGroup {
    /// Sparse normal; first nonzero coefficient positive.
    pub normal: Vec<(usize, f64)>,
    pub offset: f64,
    /// `(channel, breakpoint, orientation)` where orientation is `±1`:
    /// the channel argument equals `orientation · normal · x`.
    pub channels: Vec<(usize, f64, f64)>,
    /// Contribution when `normal · x > offset`.
    pub plus: Vec<f64>,
    /// Contribution when `normal · x < offset`.
    pub minus: Vec<f64>,
}

impl ActiveGroup {
    pub fn rate(&self, v: &[f64]) -> f64 {
        dot(&self.normal, v)
    }
}

pub fn dot(sparse: &[(usize, f64)], v: &[f64]) -> f64 {
    sparse.iter().map(|&(j, c)| c * v[j]).sum()
}

/// Largest number of dependent switching surfaces for which cells are
/// enumerated explicitly.
pub const MAX_DEPENDENT_GROUPS: usize = 10;

/// The exact Filippov set near `x`: inactive channels are frozen at their
/// values, active channels are grouped by switching hyperplane.
#[derive(Debug, Clone)]
pub struct LocalField {
    pub n: usize,
    pub base: Vec<f64>,
    pub groups: Vec<ActiveGroup>,
    /// Group normals are linearly independent, so every sign pattern is a cell.
    pub independent: bool,
    /// Realizable sign patterns (bit `h` set means the `+` side of group `h`).
    pub cells: Vec<u64>,
}

/// Minimum normal speed for a selection to count as leaving a surface.
pub const LEAVE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct FaceSolution {
    pub velocity: Vec<f64>,
    /// Groups kept on their hyperplane.
    pub stay: u64,
    /// Sides taken by the remaining groups.
    pub sides: u64,
    /// Range of the mean velocity `1ᵀv / n` over all admissible selections on
    /// this face.
    pub drift_range: Option<(f64, f64)>,
}

impl LocalField {
    pub fn new(p: &ProtocolSpec, x: &[f64], tol: f64) -> Result<Self, DynamicsError> {
        p.check_dim(x)?;
        let n = p.n();
        let mut base = vec![0.0; n];
        let mut groups: Vec<ActiveGroup> = Vec::new();
        for (k, ch) in p.channels().iter().enumerate() {
            let a = ch.argument(x);
            let Some(b) = ch.func.breakpoint_near(a, tol) else {
                let val = ch.func.eval(a);
                for &(i, c) in &ch.out {
                    base[i] += c * val;
                }
                continue;
            };
            let mut normal = ch.arg.clone();
            normal.sort_by_key(|&(j, _)| j);
            let orient = if normal[0].1 < 0.0 { -1.0 } else { 1.0 };
            for t in normal.iter_mut() {
                t.1 *= orient;
            }
            let offset = orient * b;
            let (up, down) = if orient > 0.0 {
                (ch.func.right_limit(b), ch.func.left_limit(b))
            } else {
                (ch.func.left_limit(b), ch.func.right_limit(b))
            };
            let merge_tol = 2.0 * tol * b.abs().max(1.0);
            let idx = match groups
                .iter()
                .position(|g| g.normal == normal && (g.offset - offset).abs() <= merge_tol)
            {
                Some(i) => i,
                None => {
                    groups.push(ActiveGroup {
                        normal,
                        offset,
                        channels: Vec::new(),
                        plus: vec![0.0; n],
                        minus: vec![0.0; n],
                    });
                    groups.len() - 1
                }
            };
            let g = &mut groups[idx];
            g.channels.push((k, b, orient));
            for &(i, c) in &ch.out {
                g.plus[i] += c * up;
                g.minus[i] += c * down;
            }
        }
        let h = groups.len();
        let independent = rank(&groups, n) == h;
        let cells = if independent {
            Vec::new()
        } else {
            if h > MAX_DEPENDENT_GROUPS {
                return Err(DynamicsError::TooManyActive(h, MAX_DEPENDENT_GROUPS));
            }
            (0..1u64 << h).filter(|&m| realizable(&groups, n, m)).collect()
        };
        Ok(Self {
            n,
            base,
            groups,
            independent,
            cells,
        })
    }

    pub fn full_mask(&self) -> u64 {
        (1u64 << self.groups.len()) - 1
    }

    pub fn cell_velocity(&self, mask: u64) -> Vec<f64> {
        let mut v = self.base.clone();
        for (h, g) in self.groups.iter().enumerate() {
            let side = if mask >> h & 1 == 1 { &g.plus } else { &g.minus };
            for (vi, s) in v.iter_mut().zip(side) {
                *vi += s;
            }
        }
        v
    }

    pub fn realizable_cells(&self) -> Vec<u64> {
        if self.independent {
            (0..=self.full_mask()).collect()
        } else {
            self.cells.clone()
        }
    }

    /// Cells whose own velocity points into them across every active surface,
    /// with that velocity.
    pub fn consistent_cells(&self, eps: f64) -> Vec<(u64, Vec<f64>)> {
        self.realizable_cells()
            .into_iter()
            .filter_map(|m| {
                let v = self.cell_velocity(m);
                let ok = self.groups.iter().enumerate().all(|(h, g)| {
                    let r = g.rate(&v);
                    if m >> h & 1 == 1 {
                        r > eps
                    } else {
                        r < -eps
                    }
                });
                ok.then_some((m, v))
            })
            .collect()
    }

    fn param(&self, stay: u64, sides: u64) -> ConvexParam {
        if self.independent {
            let mut v0 = self.base.clone();
            let mut cols = Vec::new();
            for (h, g) in self.groups.iter().enumerate() {
                if stay >> h & 1 == 1 {
                    for (vi, s) in v0.iter_mut().zip(&g.minus) {
                        *vi += s;
                    }
                    cols.push(g.plus.iter().zip(&g.minus).map(|(p, m)| p - m).collect());
                } else {
                    let side = if sides >> h & 1 == 1 { &g.plus } else { &g.minus };
                    for (vi, s) in v0.iter_mut().zip(side) {
                        *vi += s;
                    }
                }
            }
            ConvexParam {
                v0,
                cols,
                simplex: false,
            }
        } else {
            let fixed = !stay & self.full_mask();
            let cols = self
                .cells
                .iter()
                .filter(|&&c| c & fixed == sides & fixed)
                .map(|&c| self.cell_velocity(c))
                .collect();
            ConvexParam {
                v0: vec![0.0; self.n],
                cols,
                simplex: true,
            }
        }
    }

    /// Zero in the exact set; returns the convex weights.
    pub fn contains_zero(&self) -> Option<Vec<f64>> {
        let param = self.param(self.full_mask(), 0);
        if param.cols.is_empty() && !param.simplex {
            return param.v0.iter().all(|v| v.abs() <= crate::lp::F64_TOL).then(Vec::new);
        }
        let mut lp = param.lp(0);
        for i in 0..self.n {
            let (c, coeffs) = param.component(i);
            lp.constrain(coeffs, Cmp::Eq, -c);
        }
        lp.solve().solution()
    }

    /// Least-ℓ1 velocity on the face that keeps the groups in `stay` on their
    /// hyperplanes and leaves every other group strictly towards `sides`.
    pub fn face(&self, stay: u64, sides: u64, with_drift: bool) -> Option<FaceSolution> {
        let param = self.param(stay, sides);
        if param.simplex && param.cols.is_empty() {
            return None;
        }
        // cheap necessary conditions before any LP
        for (h, g) in self.groups.iter().enumerate() {
            let (lo, hi) = param.range(&g.normal);
            if stay >> h & 1 == 1 {
                if lo > crate::lp::F64_TOL || hi < -crate::lp::F64_TOL {
                    return None;
                }
            } else if sides >> h & 1 == 1 {
                if hi < LEAVE_EPS {
                    return None;
                }
            } else if lo > -LEAVE_EPS {
                return None;
            }
        }
        let constrained = |lp: &mut LinearProgram<f64>| {
            for (h, g) in self.groups.iter().enumerate() {
                let (c, coeffs) = param.directional(&g.normal);
                if stay >> h & 1 == 1 {
                    lp.constrain(coeffs, Cmp::Eq, -c);
                } else if sides >> h & 1 == 1 {
                    lp.constrain(coeffs, Cmp::Ge, LEAVE_EPS - c);
                } else {
                    lp.constrain(coeffs, Cmp::Le, -LEAVE_EPS - c);
                }
            }
        };
        let k = param.cols.len();
        let mut lp = param.lp(self.n);
        constrained(&mut lp);
        for i in 0..self.n {
            let (c, coeffs) = param.component(i);
            // t_i >= ±v_i
            let mut up: Vec<(usize, f64)> = coeffs.iter().map(|&(j, a)| (j, -a)).collect();
            up.push((k + i, 1.0));
            lp.constrain(up, Cmp::Ge, c);
            let mut dn = coeffs.clone();
            dn.push((k + i, 1.0));
            lp.constrain(dn, Cmp::Ge, -c);
        }
        lp.minimize((0..self.n).map(|i| (k + i, 1.0)).collect());
        let w = lp.solve().solution()?;
        let velocity = param.eval(&w[..k]);

        let drift_range = (with_drift && stay != 0)
            .then(|| {
                let mut mean = vec![0.0; k];
                let mut c0 = 0.0;
                for i in 0..self.n {
                    let (c, coeffs) = param.component(i);
                    c0 += c / self.n as f64;
                    for (j, a) in coeffs {
                        mean[j] += a / self.n as f64;
                    }
                }
                let obj: Vec<(usize, f64)> = mean.iter().copied().enumerate().collect();
                let solve = |sign: f64| {
                    let mut lp = param.lp(0);
                    constrained(&mut lp);
                    lp.minimize(obj.iter().map(|&(j, a)| (j, sign * a)).collect());
                    match lp.solve() {
                        LpOutcome::Optimal { value, .. } => Some(c0 + sign * value),
                        _ => None,
                    }
                };
                Some((solve(1.0)?, solve(-1.0)?))
            })
            .flatten();
        Some(FaceSolution {
            velocity,
            stay,
            sides,
            drift_range,
        })
    }
}

/// `v = v0 + Σ_j w_j col_j` with `w` in the unit box or the probability simplex.
#[derive(Debug, Clone)]
struct ConvexParam {
    v0: Vec<f64>,
    cols: Vec<Vec<f64>>,
    simplex: bool,
}

impl ConvexParam {
    fn eval(&self, w: &[f64]) -> Vec<f64> {
        let mut v = self.v0.clone();
        for (col, &wj) in self.cols.iter().zip(w) {
            for (vi, c) in v.iter_mut().zip(col) {
                *vi += wj * c;
            }
        }
        v
    }

    fn component(&self, i: usize) -> (f64, Vec<(usize, f64)>) {
        let coeffs = self
            .cols
            .iter()
            .enumerate()
            .filter(|(_, c)| c[i] != 0.0)
            .map(|(j, c)| (j, c[i]))
            .collect();
        (self.v0[i], coeffs)
    }

    fn directional(&self, dir: &[(usize, f64)]) -> (f64, Vec<(usize, f64)>) {
        let coeffs = self
            .cols
            .iter()
            .enumerate()
            .map(|(j, c)| (j, dot(dir, c)))
            .filter(|&(_, a)| a != 0.0)
            .collect();
        (dot(dir, &self.v0), coeffs)
    }

    /// Exact range of `dir · v` over the parameter set.
    fn range(&self, dir: &[(usize, f64)]) -> (f64, f64) {
        let c = dot(dir, &self.v0);
        let proj = self.cols.iter().map(|col| dot(dir, col));
        if self.simplex {
            proj.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), a| (lo.min(c + a), hi.max(c + a)))
        } else {
            proj.fold((c, c), |(lo, hi), a| (lo + a.min(0.0), hi + a.max(0.0)))
        }
    }

    /// Weights first, then `extra` auxiliary nonnegative variables.
    fn lp(&self, extra: usize) -> LinearProgram<f64> {
        let k = self.cols.len();
        let mut lp = LinearProgram::new(k + extra);
        if self.simplex {
            lp.constrain((0..k).map(|j| (j, 1.0)).collect(), Cmp::Eq, 1.0);
        } else {
            for j in 0..k {
                lp.constrain(vec![(j, 1.0)], Cmp::Le, 1.0);
            }
        }
        lp
    }
}

fn rank(groups: &[ActiveGroup], n: usize) -> usize {
    let mut rows: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            let mut r = vec![0.0; n];
            for &(j, c) in &g.normal {
                r[j] = c;
            }
            r
        })
        .collect();
    let mut rank = 0;
    for col in 0..n {
        let Some(p) = (rank..rows.len()).max_by(|&a, &b| rows[a][col].abs().total_cmp(&rows[b][col].abs())) else {
            break;
        };
        if rows[p][col].abs() < 1e-9 {
            continue;
        }
        rows.swap(rank, p);
        for r in 0..rows.len() {
            if r != rank {
                let f = rows[r][col] / rows[rank][col];
                if f != 0.0 {
                    for c in col..n {
                        rows[r][c] -= f * rows[rank][c];
                    }
                }
            }
        }
        rank += 1;
    }
    rank
}

/// `∃d: s_h n_h·d ≥ 1` for the sign pattern `mask`.
fn realizable(groups: &[ActiveGroup], n: usize, mask: u64) -> bool {
    let mut lp = LinearProgram::<f64>::new(n);
    for j in 0..n {
        lp.set_free(j);
    }
    for (h, g) in groups.iter().enumerate() {
        let s = if mask >> h & 1 == 1 { 1.0 } else { -1.0 };
        lp.constrain(g.normal.iter().map(|&(j, c)| (j, s * c)).collect(), Cmp::Ge, 1.0);
    }
    lp.solve().is_feasible()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qs(d: f64) -> MonotoneFn {
        MonotoneFn::sym_quantizer(d).unwrap()
    }

    fn pair() -> WeightedDigraph {
        WeightedDigraph::undirected(2, &[(0, 1, 1.0)]).unwrap()
    }

    fn stepphi_pair() -> ProtocolSpec {
        ProtocolSpec::communication(pair(), vec![MonotoneFn::StepPhi; 2], Convention::Relative).unwrap()
    }

    use crate::graph::tests::fig2;

    #[test]
    fn measurement_box_examples() {
        let p = ProtocolSpec::measurement(pair(), vec![qs(1.0); 2]).unwrap();
        let b = rhs_decomposition(&p, &[0.2, 0.2]).unwrap();
        assert!(b.components.iter().all(|c| *c == FilippovInterval::point(0.0)));
        let b = rhs_decomposition(&p, &[0.5, 0.0]).unwrap();
        assert_eq!(b.components[0], FilippovInterval::new(-1.0, 0.0));
        assert_eq!(b.components[1], FilippovInterval::new(0.0, 1.0));
        assert_eq!(b.channels[0].interval, FilippovInterval::new(0.0, 1.0));
        // oracle: push the interval endpoints through -L
        let l = p.graph().laplacian();
        for u0 in [0.0, 1.0] {
            let v = -(&l * nalgebra::DVector::from_vec(vec![u0, 0.0]));
            assert!(b.contains(v.as_slice(), 0.0));
        }
    }

    #[test]
    fn stepphi_pair_structure() {
        let p = stepphi_pair();
        assert!(!p.is_tied());
        assert!(!p.warnings().is_empty());
        let b = rhs_decomposition(&p, &[3.0, 3.0]).unwrap();
        assert!(b.channels.iter().all(|c| c.interval == FilippovInterval::new(0.0, 1.0)));
        let half = select(&p, &[3.0, 3.0], &SelectionPolicy::Explicit(vec![0.5])).unwrap();
        assert_eq!(half, vec![0.5, 0.5]);
        let right = select(&p, &[3.0, 3.0], &SelectionPolicy::RightContinuous).unwrap();
        assert_eq!(right, vec![1.0, 1.0]);

        let local = LocalField::new(&p, &[3.0, 3.0], 1e-9).unwrap();
        assert_eq!(local.groups.len(), 1);
        let mut verts: Vec<Vec<f64>> = local.realizable_cells().iter().map(|&m| local.cell_velocity(m)).collect();
        verts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(verts, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert!(local.contains_zero().is_none());
        let face = local.face(1, 0, true).unwrap();
        assert_eq!(face.velocity, vec![0.5, 0.5]);
        assert_eq!(face.drift_range, Some((0.5, 0.5)));
    }

    #[test]
    fn selection_policy_validation() {
        let p = stepphi_pair();
        assert!(matches!(
            select(&p, &[0.0, 0.0], &SelectionPolicy::Explicit(vec![1.5])),
            Err(DynamicsError::PolicyCoefficientOutOfRange { .. })
        ));
        assert!(matches!(
            select(&p, &[0.0, 0.0], &SelectionPolicy::Explicit(vec![0.1, 0.2, 0.3])),
            Err(DynamicsError::PolicyLength { .. })
        ));
        assert!(matches!(
            select(&p, &[0.0], &SelectionPolicy::Midpoint),
            Err(DynamicsError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn continuity_point_selection_is_policy_independent() {
        let p = ProtocolSpec::measurement(fig2(), vec![qs(1.0); 7]).unwrap();
        let x = [0.1, 1.2, -0.7, 2.2, 0.3, -1.9, 0.0];
        let base = p.eval(&x);
        for pol in [
            SelectionPolicy::RightContinuous,
            SelectionPolicy::LeftContinuous,
            SelectionPolicy::Midpoint,
            SelectionPolicy::Explicit(vec![0.3]),
        ] {
            assert_eq!(select(&p, &x, &pol).unwrap(), base);
        }
    }

    #[test]
    fn measurement_equilibrium_examples() {
        let p = ProtocolSpec::measurement(pair(), vec![qs(1.0); 2]).unwrap();
        assert!(!is_equilibrium(&p, &[0.2, 0.8]).unwrap().equilibrium);
        let c = is_equilibrium(&p, &[0.2, 0.3]).unwrap();
        assert!(c.equilibrium && c.residual.unwrap() <= 1e-10);
        // x_1 on its jump: u_1 ∈ [0, 1] can match u_2 = 1
        assert!(is_equilibrium(&p, &[0.5, 0.8]).unwrap().equilibrium);
    }

    #[test]
    fn fig2_communication_equilibrium() {
        let g = fig2();
        let m = g.edge_count();
        let p = ProtocolSpec::communication(g.clone(), vec![qs(1.0); m], Convention::Difference).unwrap();
        let third = |k: i64| BigRational::new(k.into(), 3.into());
        let x: Vec<BigRational> = [0, -1, -2, 1, 2, 0, 0].iter().map(|&k| third(k)).collect();
        let cert = is_equilibrium_exact(&p, &x).unwrap();
        assert!(cert.equilibrium);
        let w = cert.witness.unwrap();
        for (k, e) in g.edges().iter().enumerate() {
            let expect = match (e.from, e.to) {
                (2, 5) => 1,
                (4, 5) => -1,
                _ => 0,
            };
            assert_eq!(w[k], BigRational::from_integer(expect.into()), "edge {}->{}", e.from, e.to);
        }
        let xf: Vec<f64> = [0.0, -1.0 / 3.0, -2.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0, 0.0, 0.0].to_vec();
        assert!(is_equilibrium(&p, &xf).unwrap().equilibrium);
        let local = LocalField::new(&p, &xf, 1e-9).unwrap();
        assert!(local.groups.is_empty());
        assert!(local.base.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tied_form_conserves_sum() {
        let g = WeightedDigraph::undirected(3, &[(0, 1, 1.0), (1, 2, 2.0)]).unwrap();
        let p = ProtocolSpec::communication(g, vec![qs(1.0); 4], Convention::Difference).unwrap();
        assert!(p.is_tied());
        assert_eq!(p.channels().len(), 2);
        for pol in [SelectionPolicy::RightContinuous, SelectionPolicy::LeftContinuous, SelectionPolicy::Midpoint] {
            let v = select(&p, &[0.5, 0.0, 1.5], &pol).unwrap();
            assert!(v.iter().sum::<f64>().abs() < 1e-15);
        }
        let untied = p.clone().untied();
        assert_eq!(untied.channels().len(), 4);
        let x = [0.3, -1.1, 2.0];
        assert_eq!(untied.eval(&x), p.eval(&x));
    }

    #[test]
    fn dependent_surfaces_enumerate_realizable_cells() {
        // triangle with sign: all three differences vanish at consensus,
        // normals x0-x1, x0-x2, x1-x2 are dependent → 6 of 8 patterns realizable
        let g = WeightedDigraph::complete(3).unwrap();
        let p = ProtocolSpec::communication(g, vec![MonotoneFn::Sign; 6], Convention::Difference).unwrap();
        let local = LocalField::new(&p, &[1.0, 1.0, 1.0], 1e-9).unwrap();
        assert_eq!(local.groups.len(), 3);
        assert!(!local.independent);
        assert_eq!(local.cells.len(), 6);
        assert!(local.contains_zero().is_some());
    }

    #[test]
    fn exact_equilibrium_matches_float_on_dyadic_states() {
        let p = ProtocolSpec::measurement(pair(), vec![qs(1.0); 2]).unwrap();
        for (a, b) in [(0.5, 0.75), (0.25, 0.75), (0.5, -0.5), (1.5, 0.5)] {
            let exact = is_equilibrium_exact(&p, &[rational(a).unwrap(), rational(b).unwrap()]).unwrap();
            assert_eq!(exact.equilibrium, is_equilibrium(&p, &[a, b]).unwrap().equilibrium, "{a} {b}");
        }
    }
}
