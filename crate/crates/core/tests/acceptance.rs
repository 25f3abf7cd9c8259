//! Acceptance criteria 1-10. Runs sequentially with its own `main` so the
//! runtime limits are measured without other tests competing for cores.

mod common;

use common::{qs, rng, staircase, uniform_box};
use filippov_consensus::analysis::{
    self, dwell, lyapunov_trace, member, member_tol, required_dwell, ConvergenceSet, LyapunovKind,
    MEMBERSHIP_TOL,
};
use filippov_consensus::dynamics::{is_equilibrium, is_equilibrium_exact, ChannelSource, Convention, ProtocolSpec};
use filippov_consensus::graph::WeightedDigraph;
use filippov_consensus::integrator::{simulate, simulate_monitored, IntegratorConfig, Termination, Trajectory};
use filippov_consensus::nonlinear::{BreakSide, MonotoneFn};
use filippov_consensus::scenario::catalog_entry;
use num::{BigRational, One, Signed, Zero};
use rand::seq::SliceRandom;
use rand::Rng;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

type Check = Result<String, String>;

fn criterion(id: u32, title: &str, limit: Duration, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        Err(e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let elapsed = start.elapsed();
    let result = match result {
        Ok(d) if elapsed > limit => Err(format!("{d}; runtime {elapsed:.2?} exceeds {limit:?}")),
        r => r,
    };
    let (tag, detail) = match &result {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("{tag} {id:>2} {title} [{:.3} s / {} s] {detail}", elapsed.as_secs_f64(), limit.as_secs_f64());
    result.is_ok()
}

fn qa(d: f64) -> MonotoneFn {
    MonotoneFn::asym_quantizer(d).unwrap()
}

fn ql(d: f64) -> MonotoneFn {
    MonotoneFn::log_quantizer(d).unwrap()
}

fn one_ulp(v: f64) -> f64 {
    v.abs() * f64::EPSILON
}

fn quantizer_laws() -> Check {
    let mut checked = 0usize;
    for d in [0.5, 1.0, 2.0] {
        let (s, a, l) = (qs(d), qa(d), ql(d));
        for i in 0..10_000 {
            let z = -10.0 * d + 20.0 * d * i as f64 / 9999.0;
            let q = s.eval(z);
            ensure!((q - z).abs() <= d / 2.0, "q^s({z}) = {q}, delta {d}");
            let e = z - a.eval(z);
            ensure!((0.0..=d).contains(&e), "z - q^a(z) = {e} at {z}, delta {d}");
            if z != 0.0 {
                let bound = ((d / 2.0).exp() - 1.0) * z.abs();
                let err = (l.eval(z) - z).abs();
                ensure!(err < bound + one_ulp(bound), "|q^l({z}) - z| = {err} >= {bound}");
            }
            ensure!(s.eval(-z) == -q, "q^s not odd at {z}");
            ensure!(l.eval(-z) == -l.eval(z), "q^l not odd at {z}");
            checked += 1;
        }
        let jumps_s = s.breakpoints_in(-10.0 * d, 10.0 * d);
        ensure!(jumps_s.len() == 20, "expected 20 q^s jumps, found {}", jumps_s.len());
        for &b in &jumps_s {
            ensure!(s.eval(-b) == -s.eval(b), "q^s not odd at jump {b}");
            ensure!((s.eval(b) - b).abs() <= d / 2.0, "q^s bound fails at jump {b}");
            checked += 1;
        }
        for &b in &a.breakpoints_in(-10.0 * d, 10.0 * d) {
            let e = b - a.eval(b);
            ensure!((0.0..=d).contains(&e), "q^a bound fails at jump {b}");
        }
        for &b in &l.breakpoints_in(-10.0 * d, 10.0 * d) {
            ensure!(l.eval(-b) == -l.eval(b), "q^l not odd at jump {b}");
            checked += 1;
        }
    }
    Ok(format!("{checked} grid and jump points"))
}

/// One-sided limit from an ε sweep, extrapolated linearly to ε = 0 from the
/// two smallest steps.
fn sampled_limit(f: &MonotoneFn, x: f64, side: f64) -> f64 {
    let sweep: Vec<f64> = (3..=9).map(|k| 10f64.powi(-k)).collect();
    let vals: Vec<f64> = sweep.iter().map(|e| f.eval(x + side * e)).collect();
    let (e1, e2) = (sweep[6], sweep[5]);
    let (f1, f2) = (vals[6], vals[5]);
    f1 - e1 * (f2 - f1) / (e2 - e1)
}

fn filippov_vs_sampling() -> Check {
    let mut r = rng(2);
    let families = vec![
        qs(1.0),
        qs(0.5),
        qa(0.5),
        ql(1.0),
        MonotoneFn::Sign,
        MonotoneFn::StepPhi,
        MonotoneFn::linear(0.75, -0.5).unwrap(),
        MonotoneFn::piecewise_constant(vec![-2.0, 0.5, 1.0, 3.25], vec![-3.0, -1.0, 0.0, 2.5, 4.0], BreakSide::Left).unwrap(),
        MonotoneFn::scaled(2.5, qs(1.5)).unwrap(),
    ];
    let mut compared = 0;
    for f in &families {
        let mut points: Vec<f64> = f
            .breakpoints_in(-5.0, 5.0)
            .into_iter()
            .filter(|b| b.abs() >= 0.05)
            .collect();
        points.push(0.0);
        while points.len() < 100 {
            points.push(r.gen_range(-5.0..5.0));
        }
        for &x in &points {
            let iv = f.filippov_interval(x);
            let (lo, hi) = (sampled_limit(f, x, -1.0), sampled_limit(f, x, 1.0));
            ensure!(
                (iv.lo - lo).abs() <= 1e-9 && (iv.hi - hi).abs() <= 1e-9,
                "{}: interval at {x} is [{}, {}], sampling gives [{lo}, {hi}]",
                f.kind(),
                iv.lo,
                iv.hi
            );
            compared += 1;
        }
    }
    Ok(format!("{compared} points over {} functions", families.len()))
}

fn rat(p: i64, q: i64) -> BigRational {
    BigRational::new(p.into(), q.into())
}

/// Filippov interval of the unit symmetric quantizer, computed directly.
fn qs1_interval(a: &BigRational) -> (BigRational, BigRational) {
    let t = a + rat(1, 2);
    if t.is_integer() {
        (t.clone() - BigRational::one(), t)
    } else {
        (t.floor(), t.floor())
    }
}

fn counterexample_exact() -> Check {
    let s = catalog_entry("fig2_q_sym").unwrap().scenario(None, &[]).map_err(|e| e.to_string())?;
    let p = &s.protocol;
    let x0 = s.x0_exact.clone().ok_or("x0 not exact")?;
    ensure!(
        x0 == vec![rat(0, 1), rat(-1, 3), rat(-2, 3), rat(1, 3), rat(2, 3), rat(0, 1), rat(0, 1)],
        "unexpected x0"
    );
    let cert = is_equilibrium_exact(p, &x0).ok_or("no exact certificate")?;
    ensure!(cert.equilibrium, "not an equilibrium");
    let w = cert.witness.ok_or("no witness")?;
    // Independent check: every witness value lies in its interval and the
    // weighted in-edge sums vanish at every node.
    let g = p.graph();
    let mut node_sum = vec![BigRational::zero(); p.n()];
    for (c, nu) in p.channels().iter().zip(&w) {
        let ChannelSource::Edge(k) = c.source else {
            return Err("expected one channel per edge".into());
        };
        let e = g.edges()[k];
        let arg = &x0[e.to] - &x0[e.from];
        let (lo, hi) = qs1_interval(&arg);
        ensure!(&lo <= nu && nu <= &hi, "witness {nu} outside [{lo}, {hi}] on edge {k}");
        node_sum[e.to] -= nu * BigRational::from_float(e.weight).unwrap();
    }
    ensure!(node_sum.iter().all(Zero::is_zero), "witness does not cancel: {node_sum:?}");
    let nonzero = w.iter().filter(|v| !v.is_zero()).count();

    let traj = simulate(p, &s.x0, &s.config).map_err(|e| e.to_string())?;
    ensure!(traj.termination == Termination::Equilibrium, "termination {:?}", traj.termination);
    ensure!(traj.states.iter().all(|x| *x == s.x0), "trajectory is not constant");
    let m = member(p, ConvergenceSet::H1, &s.x0).map_err(|e| e.to_string())?;
    ensure!(!m.member, "x0 unexpectedly in H1");
    let e = g.edges()[m.violation.unwrap()];
    Ok(format!(
        "equilibrium with {nonzero} nonzero witness entries, constant trajectory, H1 violated on edge {}->{}",
        e.from, e.to
    ))
}

fn sliding_consensus() -> Check {
    let pair = WeightedDigraph::new(2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
    let cases = [
        ("step_phi undirected pair", ProtocolSpec::communication(pair.clone(), vec![MonotoneFn::StepPhi; 2], Convention::Relative)),
        ("q^a directed 2-ring", ProtocolSpec::communication(pair, vec![qa(1.0); 2], Convention::Difference)),
    ];
    let mut worst: f64 = 0.0;
    for (name, p) in cases {
        let p = p.map_err(|e| e.to_string())?;
        for c in [0.0, 1.0, -2.5, 0.25, 3.7] {
            let traj = simulate(&p, &[c, c], &IntegratorConfig::new(0.5, 100.0)).map_err(|e| e.to_string())?;
            ensure!(traj.final_time() == 100.0, "{name}: stopped at {}", traj.final_time());
            for (t, x) in traj.times.iter().zip(&traj.states) {
                for xi in x {
                    let dev = (xi - (c + t / 2.0)).abs();
                    worst = worst.max(dev);
                    ensure!(dev <= 1e-9, "{name}, c = {c}: deviation {dev} at t = {t}");
                }
            }
        }
    }
    Ok(format!("max deviation {worst:e}"))
}

fn run_to(p: &ProtocolSpec, x0: &[f64], set: ConvergenceSet, t_end: f64) -> Result<Trajectory, String> {
    let cfg = IntegratorConfig::new(0.25, t_end);
    simulate_monitored(p, x0, &cfg, Some(analysis::monitor(p, set, t_end))).map_err(|e| format!("{e} from x0 = {x0:?}"))
}

fn check_converged(p: &ProtocolSpec, traj: &Trajectory, set: ConvergenceSet, t_end: f64, label: &str) -> Result<(), String> {
    let x = traj.final_state();
    let m = member_tol(p, set, x, MEMBERSHIP_TOL).map_err(|e| e.to_string())?;
    ensure!(m.member, "{label}: final state {x:?} not in {set} ({:?})", traj.termination);
    let d = dwell(p, traj, set);
    ensure!(d + 1e-9 >= required_dwell(t_end), "{label}: dwell {d} in {set}");
    Ok(())
}

fn max_increase(p: &ProtocolSpec, traj: &Trajectory, kind: LyapunovKind) -> Result<f64, String> {
    Ok(lyapunov_trace(p, traj, &kind).map_err(|e| e.to_string())?.max_increase)
}

fn strongly_connected_measurement() -> Check {
    let mut r = rng(5);
    let (mut steps, mut worst_v1, mut stairs) = (0, 0f64, 0);
    for run in 0..50 {
        let n = r.gen_range(2..=8);
        let g = common::strongly_connected(&mut r, n);
        let fs: Vec<MonotoneFn> = (0..n)
            .map(|_| {
                if r.gen_bool(0.5) {
                    stairs += 1;
                    staircase(&mut r)
                } else {
                    qs(1.0)
                }
            })
            .collect();
        let w: Vec<f64> = g.left_null_vector().map_err(|e| e.to_string())?.iter().copied().collect();
        let p = ProtocolSpec::measurement(g, fs).map_err(|e| e.to_string())?;
        let x0 = uniform_box(&mut r, n, -5.0, 5.0);
        let traj = run_to(&p, &x0, ConvergenceSet::D1, 200.0)?;
        check_converged(&p, &traj, ConvergenceSet::D1, 200.0, &format!("run {run}"))?;
        let inc = max_increase(&p, &traj, LyapunovKind::WeightedV1(w))?;
        ensure!(inc <= 1e-9, "run {run}: V1 increased by {inc}");
        worst_v1 = worst_v1.max(inc);
        steps += traj.times.len() - 1;
    }
    Ok(format!("50 runs, {stairs} staircase nodes, {steps} steps, max V1 step increase {worst_v1:e}"))
}

fn spanning_tree_measurement() -> Check {
    let mut r = rng(6);
    let (mut steps, mut worst) = (0, 0f64);
    for run in 0..50 {
        let n = r.gen_range(3..=8);
        let g = common::spanning_tree_not_sc(&mut r, n);
        ensure!(!g.classify().strongly_connected && g.classify().has_spanning_tree(), "bad generator");
        let d = *[0.5, 1.0, 2.0].choose(&mut r).unwrap();
        let p = ProtocolSpec::measurement(g, vec![qs(d); n]).map_err(|e| e.to_string())?;
        let x0 = uniform_box(&mut r, n, -5.0, 5.0);
        let traj = run_to(&p, &x0, ConvergenceSet::D2, 200.0)?;
        check_converged(&p, &traj, ConvergenceSet::D2, 200.0, &format!("run {run}"))?;
        let x = traj.final_state();
        let d2 = member_tol(&p, ConvergenceSet::D2, x, MEMBERSHIP_TOL).unwrap();
        let band = member_tol(&p, ConvergenceSet::PracticalBand(d), x, MEMBERSHIP_TOL).unwrap();
        ensure!(band.member, "run {run}: D2 member but not in a band");
        ensure!(
            (d2.witness.unwrap() - band.witness.unwrap() * d).abs() <= 1e-9,
            "run {run}: D2 value {:?} vs band index {:?}",
            d2.witness,
            band.witness
        );
        for kind in [LyapunovKind::MaxV, LyapunovKind::MinW] {
            let inc = max_increase(&p, &traj, kind)?;
            ensure!(inc <= 1e-9, "run {run}: Lyapunov increase {inc}");
            worst = worst.max(inc);
        }
        steps += traj.times.len() - 1;
    }
    Ok(format!("50 runs, {steps} steps, max V/W step increase {worst:e}"))
}

fn undirected_communication() -> Check {
    let mut r = rng(7);
    let (mut steps, mut drift, mut worst) = (0, 0f64, 0f64);
    for run in 0..50 {
        let n = r.gen_range(2..=8);
        let pairs = common::undirected_connected_pairs(&mut r, n);
        let mut edges = Vec::new();
        let mut fs = Vec::new();
        let mut deltas = Vec::new();
        for &(a, b) in &pairs {
            let w = *[0.5, 1.0, 2.0].choose(&mut r).unwrap();
            let d = *[0.5, 1.0, 2.0].choose(&mut r).unwrap();
            edges.extend([(a, b, w), (b, a, w)]);
            fs.extend([qs(d), qs(d)]);
            deltas.push(d);
        }
        let g = WeightedDigraph::new(n, &edges).map_err(|e| e.to_string())?;
        let p = ProtocolSpec::communication(g, fs, Convention::Difference).map_err(|e| e.to_string())?;
        let x0 = uniform_box(&mut r, n, -5.0, 5.0);
        let traj = run_to(&p, &x0, ConvergenceSet::H1, 200.0)?;
        check_converged(&p, &traj, ConvergenceSet::H1, 200.0, &format!("run {run}"))?;
        let x = traj.final_state();
        for (&(a, b), d) in pairs.iter().zip(&deltas) {
            ensure!((x[a] - x[b]).abs() <= d / 2.0 + 1e-9, "run {run}: edge {a}-{b} difference {}", x[a] - x[b]);
        }
        let s0: f64 = x0.iter().sum();
        for s in &traj.states {
            drift = drift.max((s.iter().sum::<f64>() - s0).abs());
        }
        ensure!(drift <= 1e-9, "run {run}: sum drifted by {drift}");
        let inc = max_increase(&p, &traj, LyapunovKind::HalfSquaredNorm)?;
        ensure!(inc <= 1e-9, "run {run}: half squared norm increased by {inc}");
        worst = worst.max(inc);
        steps += traj.times.len() - 1;
    }
    Ok(format!("50 runs, {steps} steps, max sum drift {drift:e}, max norm step increase {worst:e}"))
}

fn rings_and_trees() -> Check {
    let mut r = rng(8);
    let mut rings = 0;
    for n in 2..=6 {
        for seed in 0..5 {
            let order: Vec<usize> = {
                let mut o: Vec<usize> = (0..n).collect();
                o.shuffle(&mut r);
                o
            };
            let edges: Vec<_> = (0..n).map(|k| (order[k], order[(k + 1) % n], *[0.5, 1.0, 2.0].choose(&mut r).unwrap())).collect();
            let g = WeightedDigraph::new(n, &edges).unwrap();
            let fs: Vec<MonotoneFn> = if n == 2 {
                let d = *[0.5, 1.0, 2.0].choose(&mut r).unwrap();
                vec![qs(d); 2]
            } else {
                // g(0) = 0 on every edge and at least one edge with a point interval at 0
                let keep = r.gen_range(0..n);
                (0..n)
                    .map(|k| if k == keep || r.gen_bool(0.5) { qs(*[0.5, 1.0].choose(&mut r).unwrap()) } else { MonotoneFn::Sign })
                    .collect()
            };
            let p = ProtocolSpec::communication(g, fs, Convention::Difference).map_err(|e| e.to_string())?;
            // an equal-weight 2-ring is also undirected, where H1 and H2 coincide
            let predicted = analysis::predict(&p).set;
            ensure!(
                predicted == Some(ConvergenceSet::H2) || (n == 2 && predicted == Some(ConvergenceSet::H1)),
                "ring n = {n}: predicted {predicted:?}"
            );
            let x0 = uniform_box(&mut r, n, -5.0, 5.0);
            let traj = run_to(&p, &x0, ConvergenceSet::H2, 100.0)?;
            check_converged(&p, &traj, ConvergenceSet::H2, 100.0, &format!("ring n = {n}, seed {seed}"))?;
            rings += 1;
        }
    }
    let mut trees = 0;
    for run in 0..20 {
        let n = r.gen_range(2..=8);
        let g = common::directed_tree(&mut r, n);
        let p = ProtocolSpec::communication(g.clone(), vec![qs(1.0); g.edge_count()], Convention::Difference).map_err(|e| e.to_string())?;
        ensure!(analysis::predict(&p).set == Some(ConvergenceSet::H3), "tree run {run}: H3 not predicted");
        let x0 = uniform_box(&mut r, n, -5.0, 5.0);
        let traj = run_to(&p, &x0, ConvergenceSet::H3, 100.0)?;
        check_converged(&p, &traj, ConvergenceSet::H3, 100.0, &format!("tree run {run}"))?;
        trees += 1;
    }
    Ok(format!("{rings} rings in H2, {trees} trees in H3"))
}

fn positivity() -> Check {
    let mut r = rng(9);
    let mut lowest = f64::INFINITY;
    for run in 0..20 {
        let n = r.gen_range(2..=8);
        let g = if run % 2 == 0 {
            common::strongly_connected(&mut r, n)
        } else {
            common::spanning_tree_not_sc(&mut r, n)
        };
        let f = match run % 4 {
            0 => qs(1.0),
            1 => ql(0.5),
            2 => staircase(&mut r),
            _ => MonotoneFn::linear(1.0, 0.0).unwrap(),
        };
        let p = ProtocolSpec::measurement(g, vec![f; n]).map_err(|e| e.to_string())?;
        let x0 = uniform_box(&mut r, n, 0.1, 5.0);
        let traj = simulate(&p, &x0, &IntegratorConfig::new(0.25, 30.0)).map_err(|e| e.to_string())?;
        let mins: Vec<f64> = traj.states.iter().map(|x| x.iter().copied().fold(f64::INFINITY, f64::min)).collect();
        for w in mins.windows(2) {
            ensure!(w[1] >= w[0] - 1e-9, "run {run}: min decreased from {} to {}", w[0], w[1]);
        }
        lowest = lowest.min(*mins.last().unwrap());
        ensure!(lowest > 0.0, "run {run}: state left the positive orthant");
    }
    Ok(format!("20 runs, smallest final minimum {lowest:.4}"))
}

/// Solves `A λ = b` exactly; `None` unless the solution exists and is unique.
fn solve_unique(mut a: Vec<Vec<BigRational>>, mut b: Vec<BigRational>, cols: usize) -> Option<Vec<BigRational>> {
    let rows = a.len();
    let mut piv_row = 0;
    let mut pivots = Vec::new();
    for c in 0..cols {
        let Some(pr) = (piv_row..rows).find(|&i| !a[i][c].is_zero()) else {
            return None;
        };
        a.swap(piv_row, pr);
        b.swap(piv_row, pr);
        for i in 0..rows {
            if i != piv_row && !a[i][c].is_zero() {
                let factor = &a[i][c] / &a[piv_row][c];
                for j in 0..cols {
                    let t = &factor * &a[piv_row][j];
                    a[i][j] -= t;
                }
                let t = &factor * &b[piv_row];
                b[i] -= t;
            }
        }
        pivots.push(c);
        piv_row += 1;
    }
    if b[piv_row..].iter().any(|v| !v.is_zero()) {
        return None;
    }
    Some((0..cols).map(|c| &b[c] / &a[c][c]).collect())
}

/// Whether 0 is a convex combination of at most `dim + 1` of `points`.
fn zero_in_hull(points: &[Vec<BigRational>], dim: usize) -> bool {
    fn subsets(m: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            cur.push(i);
            subsets(m, k, i + 1, cur, out);
            cur.pop();
        }
    }
    for k in 1..=(dim + 1).min(points.len()) {
        let mut all = Vec::new();
        subsets(points.len(), k, 0, &mut Vec::new(), &mut all);
        for s in all {
            let mut a: Vec<Vec<BigRational>> = (0..dim).map(|i| s.iter().map(|&j| points[j][i].clone()).collect()).collect();
            a.push(vec![BigRational::one(); k]);
            let mut b = vec![BigRational::zero(); dim];
            b.push(BigRational::one());
            if let Some(l) = solve_unique(a, b, k) {
                if l.iter().all(|v| !v.is_negative()) {
                    return true;
                }
            }
        }
    }
    false
}

struct Staircase {
    bps: Vec<i64>,
    vals: Vec<i64>,
}

impl Staircase {
    /// Interval at `2a` half-units, computed from the table directly.
    fn interval(&self, half_units: i64) -> (i64, i64) {
        let mut k = 0;
        while k < self.bps.len() && self.bps[k] < half_units {
            k += 1;
        }
        if k < self.bps.len() && self.bps[k] == half_units {
            (self.vals[k], self.vals[k + 1])
        } else {
            (self.vals[k], self.vals[k])
        }
    }
}

fn equilibrium_vs_enumeration() -> Check {
    let mut r = rng(10);
    let (mut agree, mut positives) = (0, 0);
    for trial in 0..200 {
        let n = r.gen_range(2..=3);
        let measurement = r.gen_bool(0.4);
        let mut edges = Vec::new();
        if !measurement {
            let m = r.gen_range(1..=4);
            while edges.len() < m {
                let (a, b) = (r.gen_range(0..n), r.gen_range(0..n));
                if a != b && !edges.iter().any(|&(p, q, _)| (p, q) == (a, b)) {
                    edges.push((a, b, *[1.0, 2.0].choose(&mut r).unwrap()));
                }
                if n == 2 && edges.len() == 2 {
                    break;
                }
            }
        }
        let g = WeightedDigraph::new(n, &edges).unwrap();
        let count = if measurement { n } else { edges.len() };
        let tables: Vec<Staircase> = (0..count)
            .map(|_| {
                let steps = r.gen_range(1..=3);
                let mut bps: Vec<i64> = Vec::new();
                while bps.len() < steps {
                    let b = r.gen_range(-4..=4);
                    if !bps.contains(&b) {
                        bps.push(b);
                    }
                }
                bps.sort();
                let mut vals = vec![r.gen_range(-2..=1)];
                for _ in 0..steps {
                    let last = *vals.last().unwrap();
                    vals.push(last + r.gen_range(1..=2));
                }
                Staircase { bps, vals }
            })
            .collect();
        let fs: Vec<MonotoneFn> = tables
            .iter()
            .map(|t| {
                MonotoneFn::piecewise_constant(
                    t.bps.iter().map(|&b| b as f64 / 2.0).collect(),
                    t.vals.iter().map(|&v| v as f64).collect(),
                    BreakSide::Right,
                )
                .unwrap()
            })
            .collect();
        let p = if measurement {
            ProtocolSpec::measurement(g, fs)
        } else {
            let conv = if r.gen_bool(0.5) { Convention::Difference } else { Convention::Relative };
            ProtocolSpec::communication(g, fs, conv)
        }
        .map_err(|e| e.to_string())?;
        let half: Vec<i64> = (0..n).map(|_| r.gen_range(-4..=4)).collect();
        let x: Vec<f64> = half.iter().map(|&h| h as f64 / 2.0).collect();

        // Vertex images of the interval product.
        let mut images: Vec<Vec<BigRational>> = vec![vec![BigRational::zero(); n]];
        for c in p.channels() {
            let fi = match c.source {
                ChannelSource::Node(i) => i,
                ChannelSource::Edge(k) | ChannelSource::Pair(k, _) => k,
            };
            let arg: i64 = c.arg.iter().map(|&(j, coef)| coef as i64 * half[j]).sum();
            let (lo, hi) = tables[fi].interval(arg);
            let mut next = Vec::new();
            for v in if lo == hi { vec![lo] } else { vec![lo, hi] } {
                for img in &images {
                    let mut y = img.clone();
                    for &(i, o) in &c.out {
                        y[i] += BigRational::from_float(o).unwrap() * BigRational::from_integer(v.into());
                    }
                    next.push(y);
                }
            }
            next.sort();
            next.dedup();
            images = next;
        }
        let oracle = zero_in_hull(&images, n);
        let lp = is_equilibrium(&p, &x).map_err(|e| e.to_string())?.equilibrium;
        let exact_x: Vec<BigRational> = half.iter().map(|&h| rat(h, 2)).collect();
        let exact = is_equilibrium_exact(&p, &exact_x).ok_or("no exact form")?.equilibrium;
        ensure!(
            lp == oracle && exact == oracle,
            "trial {trial}: oracle {oracle}, f64 {lp}, exact {exact} at x = {x:?}, {} vertices",
            images.len()
        );
        agree += 1;
        positives += oracle as usize;
    }
    Ok(format!("{agree} states agree, {positives} equilibria"))
}

fn main() {
    let results = [
        criterion(1, "quantizer laws", Duration::from_secs(1), quantizer_laws),
        criterion(2, "Filippov intervals vs one-sided sampling", Duration::from_secs(1), filippov_vs_sampling),
        criterion(3, "seven-node counterexample, exact", Duration::from_secs(1), counterexample_exact),
        criterion(4, "sliding consensus at rate 1/2", Duration::from_secs(1), sliding_consensus),
        criterion(5, "strongly connected measurement reaches D1", Duration::from_secs(30), strongly_connected_measurement),
        criterion(6, "spanning-tree quantized measurement reaches D2", Duration::from_secs(30), spanning_tree_measurement),
        criterion(7, "undirected quantized communication reaches H1", Duration::from_secs(30), undirected_communication),
        criterion(8, "rings reach H2, directed trees reach H3", Duration::from_secs(10), rings_and_trees),
        criterion(9, "positivity of measurement protocols", Duration::from_secs(5), positivity),
        criterion(10, "equilibrium LP vs vertex enumeration", Duration::from_secs(5), equilibrium_vs_enumeration),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
