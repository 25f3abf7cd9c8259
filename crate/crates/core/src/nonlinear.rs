//! Scalar nondecreasing functions with exact one-sided limits.
//!
//! Every family exposes its jump points, so callers can locate discontinuities
//! exactly instead of discovering them by sampling. The Filippov set of a
//! nondecreasing scalar map at `x` is the closed interval between its left and
//! right limits there.

use num::{BigRational, FromPrimitive, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FnError {
    #[error("`{kind}` needs field `{field}`")]
    MissingField { kind: String, field: &'static str },
    #[error("`{kind}` does not take field `{field}`")]
    UnexpectedField { kind: String, field: &'static str },
    #[error("{0}")]
    Invalid(String),
    #[error("unknown function kind `{0}`")]
    UnknownKind(String),
}

/// Closed interval `[lo, hi]`, `lo <= hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilippovInterval {
    pub lo: f64,
    pub hi: f64,
}

impl FilippovInterval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "inverted interval [{lo}, {hi}]");
        Self { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn contains_tol(&self, v: f64, tol: f64) -> bool {
        self.lo - tol <= v && v <= self.hi + tol
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Point `lo + λ (hi - lo)`.
    pub fn at(&self, lambda: f64) -> f64 {
        if self.is_degenerate() {
            self.lo
        } else {
            self.lo + lambda * (self.hi - self.lo)
        }
    }

    /// `c · [lo, hi]` for any sign of `c`.
    pub fn scale(&self, c: f64) -> Self {
        if c >= 0.0 {
            Self::new(c * self.lo, c * self.hi)
        } else {
            Self::new(c * self.hi, c * self.lo)
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::new(self.lo + other.lo, self.hi + other.hi)
    }

    pub fn intersect(&self, other: &Self) -> Option<Self> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then(|| Self::new(lo, hi))
    }
}

/// Which piece a piecewise-constant function takes exactly at a breakpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakSide {
    Left,
    #[default]
    Right,
}

/// Magnitudes below this read as zero for the logarithmic quantizer; its
/// cells accumulate at the origin and would otherwise underflow.
pub const LOG_QUANTIZER_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub enum MonotoneFn {
    /// `⌊z/Δ + 1/2⌋ Δ` for `z >= 0`, extended as an odd function; the two
    /// differ only at negative jump points.
    SymQuantizer { delta: f64 },
    /// `⌊z/Δ⌋ Δ`
    AsymQuantizer { delta: f64 },
    /// `sign(z) exp(q_sym(ln|z|))`, zero at zero.
    LogQuantizer { delta: f64 },
    Sign,
    /// 1 for `x > 0`, 0 for `x <= 0`.
    StepPhi,
    Linear { slope: f64, intercept: f64 },
    /// `values[k]` on `(breakpoints[k-1], breakpoints[k])`.
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
        at_breakpoint: BreakSide,
    },
    Scaled { factor: f64, inner: Box<MonotoneFn> },
}

/// Uniform cell lattice shared by the symmetric and asymmetric quantizers:
/// cell `k` is `[(k - off)Δ, (k + 1 - off)Δ)` with value `kΔ`.
#[derive(Debug, Clone, Copy)]
struct Lattice {
    delta: f64,
    off: f64,
}

impl Lattice {
    fn lower(&self, k: i64) -> f64 {
        (k as f64 - self.off) * self.delta
    }

    fn cell(&self, x: f64) -> i64 {
        let mut k = (x / self.delta + self.off).floor() as i64;
        while x < self.lower(k) {
            k -= 1;
        }
        while x >= self.lower(k + 1) {
            k += 1;
        }
        k
    }

    fn value(&self, k: i64) -> f64 {
        k as f64 * self.delta
    }

    fn eval(&self, x: f64) -> f64 {
        self.value(self.cell(x))
    }

    fn left_limit(&self, x: f64) -> f64 {
        let k = self.cell(x);
        if x == self.lower(k) {
            self.value(k - 1)
        } else {
            self.value(k)
        }
    }

    fn next_above(&self, x: f64) -> f64 {
        self.lower(self.cell(x) + 1)
    }

    fn next_below(&self, x: f64) -> f64 {
        let k = self.cell(x);
        if x > self.lower(k) {
            self.lower(k)
        } else {
            self.lower(k - 1)
        }
    }

    fn nearest(&self, x: f64) -> f64 {
        let k = self.cell(x);
        let (a, b) = (self.lower(k), self.lower(k + 1));
        if x - a <= b - x {
            a
        } else {
            b
        }
    }

    /// `∫₀ˣ` of the lattice staircase. With `m` the cell of `x` and
    /// `s = x/Δ + off`, the staircase integral is `Δ²(m s - m(m+1)/2)` minus
    /// the same expression at zero.
    fn antiderivative(&self, x: f64) -> f64 {
        let g = |y: f64| {
            let m = self.cell(y) as f64;
            let s = y / self.delta + self.off;
            self.delta * self.delta * (m * s - 0.5 * m * (m + 1.0))
        };
        g(x) - g(0.0)
    }
}

/// Positive half of the logarithmic quantizer: cell `k` is
/// `[e^{(k-1/2)Δ}, e^{(k+1/2)Δ})` with value `e^{kΔ}`, for `k >= kmin`.
#[derive(Debug, Clone, Copy)]
struct LogLattice {
    delta: f64,
    kmin: i64,
}

impl LogLattice {
    fn new(delta: f64) -> Self {
        let mut kmin = (LOG_QUANTIZER_FLOOR.ln() / delta + 0.5).ceil() as i64;
        let probe = Self { delta, kmin };
        while probe.with_kmin(kmin).lower(kmin) < LOG_QUANTIZER_FLOOR {
            kmin += 1;
        }
        Self { delta, kmin }
    }

    fn with_kmin(&self, kmin: i64) -> Self {
        Self { kmin, ..*self }
    }

    fn lower(&self, k: i64) -> f64 {
        ((k as f64 - 0.5) * self.delta).exp()
    }

    fn value(&self, k: i64) -> f64 {
        (k as f64 * self.delta).exp()
    }

    /// Cell of `z > 0`; `None` for the zero cell below the floor.
    fn cell(&self, z: f64) -> Option<i64> {
        if z < self.lower(self.kmin) {
            return None;
        }
        let mut k = ((z.ln() / self.delta) + 0.5).floor() as i64;
        k = k.max(self.kmin);
        while k > self.kmin && z < self.lower(k) {
            k -= 1;
        }
        while z >= self.lower(k + 1) {
            k += 1;
        }
        Some(k)
    }

    fn eval_pos(&self, z: f64) -> f64 {
        self.cell(z).map_or(0.0, |k| self.value(k))
    }

    fn left_limit_pos(&self, z: f64) -> f64 {
        match self.cell(z) {
            None => 0.0,
            Some(k) if z == self.lower(k) => {
                if k == self.kmin {
                    0.0
                } else {
                    self.value(k - 1)
                }
            }
            Some(k) => self.value(k),
        }
    }

    /// Smallest breakpoint magnitude strictly above `z >= 0`.
    fn next_above_pos(&self, z: f64) -> f64 {
        match self.cell(z) {
            None => self.lower(self.kmin),
            Some(k) => self.lower(k + 1),
        }
    }

    /// Largest breakpoint magnitude strictly below `z > 0`, if any.
    fn next_below_pos(&self, z: f64) -> Option<f64> {
        match self.cell(z) {
            None => None,
            Some(k) if z > self.lower(k) => Some(self.lower(k)),
            Some(k) if k > self.kmin => Some(self.lower(k - 1)),
            Some(_) => None,
        }
    }

    fn nearest_pos(&self, z: f64) -> f64 {
        match self.cell(z) {
            None => self.lower(self.kmin),
            Some(k) => {
                let (a, b) = (self.lower(k), self.lower(k + 1));
                if z - a <= b - z {
                    a
                } else {
                    b
                }
            }
        }
    }

    fn antiderivative_pos(&self, z: f64) -> f64 {
        let Some(top) = self.cell(z) else {
            return 0.0;
        };
        let mut acc = self.value(top) * (z - self.lower(top));
        // full cells, largest first; terms shrink geometrically
        let mut k = top - 1;
        while k >= self.kmin {
            let term = self.value(k) * (self.lower(k + 1) - self.lower(k));
            acc += term;
            if term < acc * 1e-18 {
                break;
            }
            k -= 1;
        }
        acc
    }
}

impl MonotoneFn {
    pub fn sym_quantizer(delta: f64) -> Result<Self, FnError> {
        check_delta(delta)?;
        Ok(Self::SymQuantizer { delta })
    }

    pub fn asym_quantizer(delta: f64) -> Result<Self, FnError> {
        check_delta(delta)?;
        Ok(Self::AsymQuantizer { delta })
    }

    pub fn log_quantizer(delta: f64) -> Result<Self, FnError> {
        check_delta(delta)?;
        Ok(Self::LogQuantizer { delta })
    }

    pub fn linear(slope: f64, intercept: f64) -> Result<Self, FnError> {
        if !(slope >= 0.0) || !slope.is_finite() || !intercept.is_finite() {
            return Err(FnError::Invalid(format!(
                "linear needs finite slope >= 0 and finite intercept, got {slope}, {intercept}"
            )));
        }
        Ok(Self::Linear { slope, intercept })
    }

    pub fn piecewise_constant(
        breakpoints: Vec<f64>,
        values: Vec<f64>,
        at_breakpoint: BreakSide,
    ) -> Result<Self, FnError> {
        if values.len() != breakpoints.len() + 1 {
            return Err(FnError::Invalid(format!(
                "piecewise_constant needs {} values for {} breakpoints, got {}",
                breakpoints.len() + 1,
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(FnError::Invalid("piecewise_constant entries must be finite".into()));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FnError::Invalid(
                "piecewise_constant breakpoints must be strictly increasing".into(),
            ));
        }
        if values.windows(2).any(|w| w[0] > w[1]) {
            return Err(FnError::Invalid(
                "piecewise_constant values must be nondecreasing".into(),
            ));
        }
        Ok(Self::PiecewiseConstant {
            breakpoints,
            values,
            at_breakpoint,
        })
    }

    pub fn scaled(factor: f64, inner: MonotoneFn) -> Result<Self, FnError> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(FnError::Invalid(format!(
                "scaling factor must be positive, got {factor}"
            )));
        }
        Ok(Self::Scaled {
            factor,
            inner: Box::new(inner),
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::SymQuantizer { .. } => "sym_quantizer",
            Self::AsymQuantizer { .. } => "asym_quantizer",
            Self::LogQuantizer { .. } => "log_quantizer",
            Self::Sign => "sign",
            Self::StepPhi => "step_phi",
            Self::Linear { .. } => "linear",
            Self::PiecewiseConstant { .. } => "piecewise_constant",
            Self::Scaled { .. } => "scaled",
        }
    }

    /// `|f(x)| → ∞` as `|x| → ∞`.
    pub fn is_proper(&self) -> bool {
        match self {
            Self::SymQuantizer { .. } | Self::AsymQuantizer { .. } | Self::LogQuantizer { .. } => {
                true
            }
            Self::Linear { slope, .. } => *slope > 0.0,
            Self::Sign | Self::StepPhi | Self::PiecewiseConstant { .. } => false,
            Self::Scaled { inner, .. } => inner.is_proper(),
        }
    }

    /// Quantization step, when the function is a (possibly scaled) quantizer.
    pub fn quantizer_step(&self) -> Option<f64> {
        match self {
            Self::SymQuantizer { delta }
            | Self::AsymQuantizer { delta }
            | Self::LogQuantizer { delta } => Some(*delta),
            _ => None,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::SymQuantizer { delta } if x < 0.0 => -sym_lattice(*delta).eval(-x),
            Self::SymQuantizer { delta } => sym_lattice(*delta).eval(x),
            Self::AsymQuantizer { delta } => asym_lattice(*delta).eval(x),
            Self::LogQuantizer { delta } => {
                let lat = LogLattice::new(*delta);
                if x > 0.0 {
                    lat.eval_pos(x)
                } else if x < 0.0 {
                    -lat.eval_pos(-x)
                } else {
                    0.0
                }
            }
            Self::Sign => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Self::StepPhi => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Linear { slope, intercept } => slope * x + intercept,
            Self::PiecewiseConstant {
                breakpoints,
                values,
                at_breakpoint,
            } => {
                let k = breakpoints.partition_point(|&b| b < x);
                if k < breakpoints.len() && breakpoints[k] == x {
                    match at_breakpoint {
                        BreakSide::Left => values[k],
                        BreakSide::Right => values[k + 1],
                    }
                } else {
                    values[k]
                }
            }
            Self::Scaled { factor, inner } => factor * inner.eval(x),
        }
    }

    pub fn left_limit(&self, x: f64) -> f64 {
        match self {
            Self::SymQuantizer { delta } => sym_lattice(*delta).left_limit(x),
            Self::AsymQuantizer { delta } => asym_lattice(*delta).left_limit(x),
            Self::LogQuantizer { delta } => {
                let lat = LogLattice::new(*delta);
                if x > 0.0 {
                    lat.left_limit_pos(x)
                } else if x < 0.0 {
                    -lat.eval_pos(-x)
                } else {
                    0.0
                }
            }
            Self::Sign => {
                if x > 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            Self::StepPhi => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Linear { .. } => self.eval(x),
            Self::PiecewiseConstant {
                breakpoints,
                values,
                ..
            } => values[breakpoints.partition_point(|&b| b < x)],
            Self::Scaled { factor, inner } => factor * inner.left_limit(x),
        }
    }

    pub fn right_limit(&self, x: f64) -> f64 {
        match self {
            Self::SymQuantizer { delta } => sym_lattice(*delta).eval(x),
            Self::AsymQuantizer { delta } => asym_lattice(*delta).eval(x),
            Self::LogQuantizer { delta } => {
                let lat = LogLattice::new(*delta);
                if x > 0.0 {
                    lat.eval_pos(x)
                } else if x < 0.0 {
                    -lat.left_limit_pos(-x)
                } else {
                    0.0
                }
            }
            Self::Sign => {
                if x >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            Self::StepPhi => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Linear { .. } => self.eval(x),
            Self::PiecewiseConstant {
                breakpoints,
                values,
                ..
            } => values[breakpoints.partition_point(|&b| b <= x)],
            Self::Scaled { factor, inner } => factor * inner.right_limit(x),
        }
    }

    pub fn filippov_interval(&self, x: f64) -> FilippovInterval {
        FilippovInterval::new(self.left_limit(x), self.right_limit(x))
    }

    /// Interval at the breakpoint nearest to `x` if one lies within `tol`,
    /// otherwise the interval at `x` itself.
    pub fn filippov_interval_near(&self, x: f64, tol: f64) -> FilippovInterval {
        match self.breakpoint_near(x, tol) {
            Some(b) => self.filippov_interval(b),
            None => self.filippov_interval(x),
        }
    }

    /// Nearest jump point within `tol` of `x`. For the logarithmic quantizer
    /// the tolerance is relative below unit magnitude, where its cells shrink.
    pub fn breakpoint_near(&self, x: f64, tol: f64) -> Option<f64> {
        let b = match self {
            Self::SymQuantizer { delta } => sym_lattice(*delta).nearest(x),
            Self::AsymQuantizer { delta } => asym_lattice(*delta).nearest(x),
            Self::LogQuantizer { delta } => {
                let lat = LogLattice::new(*delta);
                let b = lat.nearest_pos(x.abs());
                let b = if x < 0.0 { -b } else { b };
                return ((x - b).abs() <= tol * b.abs().min(1.0)).then_some(b);
            }
            Self::Sign | Self::StepPhi => 0.0,
            Self::Linear { .. } => return None,
            Self::PiecewiseConstant { breakpoints, .. } => {
                if breakpoints.is_empty() {
                    return None;
                }
                let k = breakpoints.partition_point(|&b| b < x);
                let mut best = None::<f64>;
                for &c in breakpoints[k.saturating_sub(1)..(k + 1).min(breakpoints.len())].iter() {
                    if best.map_or(true, |b| (c - x).abs() < (b - x).abs()) {
                        best = Some(c);
                    }
                }
                best?
            }
            Self::Scaled { inner, .. } => return inner.breakpoint_near(x, tol),
        };
        ((x - b).abs() <= tol).then_some(b)
    }

    /// Smallest jump point strictly greater than `x`.
    pub fn next_breakpoint_above(&self, x: f64) -> Option<f64> {
        match self {
            Self::SymQuantizer { delta } => Some(sym_lattice(*delta).next_above(x)),
            Self::AsymQuantizer { delta } => Some(asym_lattice(*delta).next_above(x)),
            Self::LogQuantizer { delta } => {
                let lat = LogLattice::new(*delta);
                if x >= 0.0 {
                    Some(lat.next_above_pos(x))
                } else {
                    match lat.next_below_pos(-x) {
                        Some(b) => Some(-b),
                        None => Some(lat.lower(lat.kmin)),
                    }
                }
            }
            Self::Sign | Self::StepPhi => (x < 0.0).then_some(0.0),
            Self::Linear { .. } => None,
            Self::PiecewiseConstant { breakpoints, .. } => {
                breakpoints.get(breakpoints.partition_point(|&b| b <= x)).copied()
            }
            Self::Scaled { inner, .. } => inner.next_breakpoint_above(x),
        }
    }

    /// Largest jump point strictly less than `x`.
    pub fn next_breakpoint_below(&self, x: f64) -> Option<f64> {
        match self {
            Self::SymQuantizer { delta } => Some(sym_lattice(*delta).next_below(x)),
            Self::AsymQuantizer { delta } => Some(asym_lattice(*delta).next_below(x)),
            Self::LogQuantizer { .. } => self.next_breakpoint_above(-x).map(|b| -b),
            Self::Sign | Self::StepPhi => (x > 0.0).then_some(0.0),
            Self::Linear { .. } => None,
            Self::PiecewiseConstant { breakpoints, .. } => {
                let k = breakpoints.partition_point(|&b| b < x);
                k.checked_sub(1).map(|k| breakpoints[k])
            }
            Self::Scaled { inner, .. } => inner.next_breakpoint_below(x),
        }
    }

    /// All jump points in `[lo, hi]`, ascending.
    pub fn breakpoints_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut out = Vec::new();
        if lo > hi {
            return out;
        }
        let mut cur = match self.next_breakpoint_below(lo) {
            Some(_) | None => self.next_breakpoint_above(lo - f64::EPSILON * lo.abs().max(1.0)),
        };
        while let Some(b) = cur {
            if b > hi {
                break;
            }
            if b >= lo {
                out.push(b);
            }
            cur = self.next_breakpoint_above(b);
        }
        out
    }

    /// `F(x) = ∫₀ˣ f(τ) dτ`, closed form for every family.
    pub fn antiderivative(&self, x: f64) -> f64 {
        match self {
            Self::SymQuantizer { delta } => sym_lattice(*delta).antiderivative(x),
            Self::AsymQuantizer { delta } => asym_lattice(*delta).antiderivative(x),
            // odd integrand, even antiderivative
            Self::LogQuantizer { delta } => LogLattice::new(*delta).antiderivative_pos(x.abs()),
            Self::Sign => x.abs(),
            Self::StepPhi => x.max(0.0),
            Self::Linear { slope, intercept } => 0.5 * slope * x * x + intercept * x,
            Self::PiecewiseConstant {
                breakpoints,
                values,
                ..
            } => {
                if x >= 0.0 {
                    piecewise_integral(breakpoints, values, 0.0, x)
                } else {
                    -piecewise_integral(breakpoints, values, x, 0.0)
                }
            }
            Self::Scaled { factor, inner } => factor * inner.antiderivative(x),
        }
    }

    /// Oddness check on a deterministic grid of `samples + 1` points over
    /// `[0, range]` plus every jump point in `[-range, range]`. Values are
    /// compared only away from jumps (the floor formula picks the upper cell
    /// at a jump, which is not symmetric); one-sided limits are compared
    /// everywhere.
    pub fn check_odd(&self, samples: usize, range: f64) -> bool {
        let samples = samples.max(1);
        let mut points: Vec<f64> = (0..=samples)
            .map(|i| range * i as f64 / samples as f64)
            .collect();
        points.extend(self.breakpoints_in(-range, range).into_iter().map(f64::abs));
        points.iter().all(|&x| {
            let at_jump = self.left_limit(x) != self.right_limit(x)
                || self.left_limit(-x) != self.right_limit(-x);
            let values_ok = at_jump || self.eval(x) == -self.eval(-x);
            values_ok
                && self.right_limit(x) == -self.left_limit(-x)
                && self.left_limit(x) == -self.right_limit(-x)
        })
    }

    /// Filippov interval at a rational point. `None` for families whose values
    /// are not rational (the logarithmic quantizer).
    pub fn exact_interval(&self, x: &BigRational) -> Option<(BigRational, BigRational)> {
        let half = || BigRational::new(1.into(), 2.into());
        let lattice = |delta: f64, off: BigRational| {
            let d = rational(delta)?;
            let t = x / &d + off;
            let k = t.floor();
            let hi = &k * &d;
            let lo = if t.is_integer() { (&k - BigRational::from_integer(1.into())) * &d } else { hi.clone() };
            Some((lo, hi))
        };
        match self {
            Self::SymQuantizer { delta } => lattice(*delta, half()),
            Self::AsymQuantizer { delta } => lattice(*delta, BigRational::zero()),
            Self::LogQuantizer { .. } => {
                if x.is_zero() {
                    Some((BigRational::zero(), BigRational::zero()))
                } else {
                    None
                }
            }
            Self::Sign => {
                let one = BigRational::from_integer(1.into());
                Some(if x.is_zero() {
                    (-one.clone(), one)
                } else if x.is_positive() {
                    (one.clone(), one)
                } else {
                    (-one.clone(), -one)
                })
            }
            Self::StepPhi => {
                let (zero, one) = (BigRational::zero(), BigRational::from_integer(1.into()));
                Some(if x.is_zero() {
                    (zero, one)
                } else if x.is_positive() {
                    (one.clone(), one)
                } else {
                    (zero.clone(), zero)
                })
            }
            Self::Linear { slope, intercept } => {
                let v = rational(*slope)? * x + rational(*intercept)?;
                Some((v.clone(), v))
            }
            Self::PiecewiseConstant {
                breakpoints,
                values,
                ..
            } => {
                let bps: Vec<BigRational> = breakpoints.iter().map(|&b| rational(b)).collect::<Option<_>>()?;
                let k_lt = bps.partition_point(|b| b < x);
                let k_le = bps.partition_point(|b| b <= x);
                Some((rational(values[k_lt])?, rational(values[k_le])?))
            }
            Self::Scaled { factor, inner } => {
                let c = rational(*factor)?;
                let (lo, hi) = inner.exact_interval(x)?;
                Some((&c * lo, c * hi))
            }
        }
    }

    /// Value at a rational point under the same conventions as [`Self::eval`].
    pub fn exact_eval(&self, x: &BigRational) -> Option<BigRational> {
        match self {
            Self::SymQuantizer { delta } => {
                let d = rational(*delta)?;
                let k = (x.abs() / &d + BigRational::new(1.into(), 2.into())).floor();
                Some(if x.is_negative() { -k * d } else { k * d })
            }
            Self::AsymQuantizer { delta } => {
                let d = rational(*delta)?;
                Some((x / &d).floor() * d)
            }
            Self::LogQuantizer { .. } => x.is_zero().then(BigRational::zero),
            Self::Sign => Some(BigRational::from_integer(x.signum().to_integer())),
            Self::StepPhi => Some(if x.is_positive() {
                BigRational::from_integer(1.into())
            } else {
                BigRational::zero()
            }),
            Self::Linear { .. } => self.exact_interval(x).map(|(v, _)| v),
            Self::PiecewiseConstant {
                breakpoints,
                values,
                at_breakpoint,
            } => {
                let (lo, hi) = self.exact_interval(x)?;
                let on_break = breakpoints
                    .iter()
                    .any(|&b| rational(b).as_ref() == Some(x));
                let _ = values;
                Some(if on_break && *at_breakpoint == BreakSide::Left { lo } else { hi })
            }
            Self::Scaled { factor, inner } => Some(rational(*factor)? * inner.exact_eval(x)?),
        }
    }
}

fn sym_lattice(delta: f64) -> Lattice {
    Lattice { delta, off: 0.5 }
}

fn asym_lattice(delta: f64) -> Lattice {
    Lattice { delta, off: 0.0 }
}

fn check_delta(delta: f64) -> Result<(), FnError> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(FnError::Invalid(format!(
            "quantization step must be positive and finite, got {delta}"
        )))
    }
}

/// Exact rational value of a finite float.
pub fn rational(v: f64) -> Option<BigRational> {
    BigRational::from_f64(v)
}

fn piecewise_integral(breakpoints: &[f64], values: &[f64], a: f64, b: f64) -> f64 {
    let mut acc = 0.0;
    let mut left = a;
    let mut k = breakpoints.partition_point(|&bp| bp <= a);
    while left < b {
        let right = breakpoints.get(k).copied().unwrap_or(f64::INFINITY).min(b);
        acc += values[k] * (right - left);
        left = right;
        k += 1;
    }
    acc
}

/// Flat scenario-file descriptor:
/// `{"kind": "sym_quantizer", "delta": 1.0}` and so on.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FnDescriptor {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intercept: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakpoints: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at_breakpoint: Option<BreakSide>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner: Option<Box<FnDescriptor>>,
}

impl FnDescriptor {
    pub fn build(&self) -> Result<MonotoneFn, FnError> {
        let kind = self.kind.as_str();
        let need = |field: &'static str, v: Option<f64>| {
            v.ok_or_else(|| FnError::MissingField {
                kind: kind.to_string(),
                field,
            })
        };
        let allowed: &[&str] = match kind {
            "sym_quantizer" | "asym_quantizer" | "log_quantizer" => &["delta"],
            "sign" | "step_phi" => &[],
            "linear" => &["slope", "intercept"],
            "piecewise_constant" => &["breakpoints", "values", "at_breakpoint"],
            "scaled" => &["factor", "inner"],
            other => return Err(FnError::UnknownKind(other.to_string())),
        };
        for (field, present) in [
            ("delta", self.delta.is_some()),
            ("slope", self.slope.is_some()),
            ("intercept", self.intercept.is_some()),
            ("breakpoints", self.breakpoints.is_some()),
            ("values", self.values.is_some()),
            ("at_breakpoint", self.at_breakpoint.is_some()),
            ("factor", self.factor.is_some()),
            ("inner", self.inner.is_some()),
        ] {
            if present && !allowed.contains(&field) {
                return Err(FnError::UnexpectedField {
                    kind: kind.to_string(),
                    field,
                });
            }
        }
        match kind {
            "sym_quantizer" => MonotoneFn::sym_quantizer(need("delta", self.delta)?),
            "asym_quantizer" => MonotoneFn::asym_quantizer(need("delta", self.delta)?),
            "log_quantizer" => MonotoneFn::log_quantizer(need("delta", self.delta)?),
            "sign" => Ok(MonotoneFn::Sign),
            "step_phi" => Ok(MonotoneFn::StepPhi),
            "linear" => MonotoneFn::linear(need("slope", self.slope)?, self.intercept.unwrap_or(0.0)),
            "piecewise_constant" => MonotoneFn::piecewise_constant(
                self.breakpoints.clone().ok_or_else(|| FnError::MissingField {
                    kind: kind.into(),
                    field: "breakpoints",
                })?,
                self.values.clone().ok_or_else(|| FnError::MissingField {
                    kind: kind.into(),
                    field: "values",
                })?,
                self.at_breakpoint.unwrap_or_default(),
            ),
            "scaled" => {
                let inner = self.inner.as_ref().ok_or_else(|| FnError::MissingField {
                    kind: kind.into(),
                    field: "inner",
                })?;
                MonotoneFn::scaled(need("factor", self.factor)?, inner.build()?)
            }
            _ => unreachable!("kind validated above"),
        }
    }
}

impl From<&MonotoneFn> for FnDescriptor {
    fn from(f: &MonotoneFn) -> Self {
        let kind = f.kind().to_string();
        match f {
            MonotoneFn::SymQuantizer { delta }
            | MonotoneFn::AsymQuantizer { delta }
            | MonotoneFn::LogQuantizer { delta } => Self {
                kind,
                delta: Some(*delta),
                ..Default::default()
            },
            MonotoneFn::Sign | MonotoneFn::StepPhi => Self {
                kind,
                ..Default::default()
            },
            MonotoneFn::Linear { slope, intercept } => Self {
                kind,
                slope: Some(*slope),
                intercept: Some(*intercept),
                ..Default::default()
            },
            MonotoneFn::PiecewiseConstant {
                breakpoints,
                values,
                at_breakpoint,
            } => Self {
                kind,
                breakpoints: Some(breakpoints.clone()),
                values: Some(values.clone()),
                at_breakpoint: Some(*at_breakpoint),
                ..Default::default()
            },
            MonotoneFn::Scaled { factor, inner } => Self {
                kind,
                factor: Some(*factor),
                inner: Some(Box::new(FnDescriptor::from(inner.as_ref()))),
                ..Default::default()
            },
        }
    }
}
