//! Small dense linear programs: two-phase simplex with Bland's rule.
//!
//! Generic over the scalar so the same code runs in floating point (with an
//! absolute tolerance) and in exact rational arithmetic.

use num::{BigRational, Signed, Zero};
use std::fmt::Debug;

pub trait Scalar: Clone + Debug + PartialOrd {
    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(v: f64) -> Option<Self>;
    fn to_f64(&self) -> f64;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    /// Clearly positive, beyond the arithmetic's noise floor.
    fn is_pos(&self) -> bool;
    fn is_neg(&self) -> bool;
    fn is_negligible(&self) -> bool {
        !self.is_pos() && !self.is_neg()
    }
}

/// Absolute tolerance used by the floating-point instantiation.
pub const F64_TOL: f64 = 1e-9;

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(v: f64) -> Option<Self> {
        v.is_finite().then_some(v)
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn is_pos(&self) -> bool {
        *self > F64_TOL
    }
    fn is_neg(&self) -> bool {
        *self < -F64_TOL
    }
}

impl Scalar for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        num::One::one()
    }
    fn from_f64(v: f64) -> Option<Self> {
        <BigRational as num::FromPrimitive>::from_f64(v)
    }
    fn to_f64(&self) -> f64 {
        num::ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn is_pos(&self) -> bool {
        self.is_positive()
    }
    fn is_neg(&self) -> bool {
        self.is_negative()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome<T> {
    Optimal { x: Vec<T>, value: T },
    Infeasible,
    Unbounded,
}

impl<T> LpOutcome<T> {
    pub fn solution(self) -> Option<Vec<T>> {
        match self {
            LpOutcome::Optimal { x, .. } => Some(x),
            _ => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        !matches!(self, LpOutcome::Infeasible)
    }
}

/// `minimize cᵀx` subject to sparse rows, variables nonnegative unless marked
/// free.
#[derive(Debug, Clone)]
pub struct LinearProgram<T> {
    nvars: usize,
    free: Vec<bool>,
    rows: Vec<(Vec<(usize, T)>, Cmp, T)>,
    objective: Vec<(usize, T)>,
}

impl<T: Scalar> LinearProgram<T> {
    pub fn new(nvars: usize) -> Self {
        Self {
            nvars,
            free: vec![false; nvars],
            rows: Vec::new(),
            objective: Vec::new(),
        }
    }

    pub fn set_free(&mut self, j: usize) -> &mut Self {
        self.free[j] = true;
        self
    }

    pub fn constrain(&mut self, coeffs: Vec<(usize, T)>, cmp: Cmp, rhs: T) -> &mut Self {
        debug_assert!(coeffs.iter().all(|(j, _)| *j < self.nvars));
        self.rows.push((coeffs, cmp, rhs));
        self
    }

    /// Box `lo <= x_j <= hi`.
    pub fn bound(&mut self, j: usize, lo: T, hi: T) -> &mut Self {
        self.constrain(vec![(j, T::one())], Cmp::Ge, lo);
        self.constrain(vec![(j, T::one())], Cmp::Le, hi)
    }

    pub fn minimize(&mut self, coeffs: Vec<(usize, T)>) -> &mut Self {
        self.objective = coeffs;
        self
    }

    pub fn solve(&self) -> LpOutcome<T> {
        // column layout: split free vars, then one slack per inequality
        let mut col_of = Vec::with_capacity(self.nvars);
        let mut ncols = 0;
        for &f in &self.free {
            col_of.push(ncols);
            ncols += if f { 2 } else { 1 };
        }
        let structural = ncols;
        let nslack = self.rows.iter().filter(|r| r.1 != Cmp::Eq).count();
        let total = structural + nslack;
        let m = self.rows.len();

        let mut a = vec![vec![T::zero(); total + m + 1]; m];
        let mut slack = structural;
        for (i, (coeffs, cmp, rhs)) in self.rows.iter().enumerate() {
            for (j, c) in coeffs {
                let col = col_of[*j];
                a[i][col] = a[i][col].add(c);
                if self.free[*j] {
                    a[i][col + 1] = a[i][col + 1].sub(c);
                }
            }
            match cmp {
                Cmp::Le => {
                    a[i][slack] = T::one();
                    slack += 1;
                }
                Cmp::Ge => {
                    a[i][slack] = T::one().neg();
                    slack += 1;
                }
                Cmp::Eq => {}
            }
            a[i][total + m] = rhs.clone();
            if rhs.is_neg() || (rhs < &T::zero()) {
                for v in a[i].iter_mut() {
                    *v = v.neg();
                }
            }
            a[i][total + i] = T::one();
        }

        let mut cost = vec![T::zero(); total];
        for (j, c) in &self.objective {
            let col = col_of[*j];
            cost[col] = cost[col].add(c);
            if self.free[*j] {
                cost[col + 1] = cost[col + 1].sub(c);
            }
        }

        let mut tab = Tableau {
            a,
            basis: (total..total + m).collect(),
            width: total + m,
        };

        // phase one: minimize the sum of artificials
        let mut obj = vec![T::zero(); total + m + 1];
        for row in &tab.a {
            for j in 0..total {
                obj[j] = obj[j].sub(&row[j]);
            }
            obj[total + m] = obj[total + m].sub(&row[total + m]);
        }
        if tab.optimize(&mut obj, total + m).is_err() {
            return LpOutcome::Infeasible;
        }
        if obj[total + m].neg().is_pos() {
            return LpOutcome::Infeasible;
        }

        // drive artificials out of the basis, dropping redundant rows
        let mut i = 0;
        while i < tab.a.len() {
            if tab.basis[i] >= total {
                match (0..total).find(|&j| !tab.a[i][j].is_negligible()) {
                    Some(j) => {
                        tab.pivot(i, j, &mut obj);
                        i += 1;
                    }
                    None => {
                        tab.a.remove(i);
                        tab.basis.remove(i);
                    }
                }
            } else {
                i += 1;
            }
        }

        // phase two on the structural + slack columns only
        let mut obj = vec![T::zero(); total + m + 1];
        obj[..total].clone_from_slice(&cost);
        for (r, &b) in tab.basis.iter().enumerate() {
            let cb = if b < total { cost[b].clone() } else { T::zero() };
            if cb.is_negligible() && cb == T::zero() {
                continue;
            }
            for j in 0..=total + m {
                obj[j] = obj[j].sub(&cb.mul(&tab.a[r][j]));
            }
        }
        if tab.optimize(&mut obj, total).is_err() {
            return LpOutcome::Unbounded;
        }

        let mut cols = vec![T::zero(); total];
        for (r, &b) in tab.basis.iter().enumerate() {
            if b < total {
                cols[b] = tab.a[r][tab.width].clone();
            }
        }
        let x: Vec<T> = (0..self.nvars)
            .map(|j| {
                let c = col_of[j];
                if self.free[j] {
                    cols[c].sub(&cols[c + 1])
                } else {
                    cols[c].clone()
                }
            })
            .collect();
        let value = self
            .objective
            .iter()
            .fold(T::zero(), |acc, (j, c)| acc.add(&c.mul(&x[*j])));
        LpOutcome::Optimal { x, value }
    }
}

struct Tableau<T> {
    a: Vec<Vec<T>>,
    basis: Vec<usize>,
    width: usize,
}

struct Unbounded;

impl<T: Scalar> Tableau<T> {
    fn pivot(&mut self, r: usize, c: usize, obj: &mut [T]) {
        let p = self.a[r][c].clone();
        for v in self.a[r].iter_mut() {
            *v = v.div(&p);
        }
        let prow = self.a[r].clone();
        for (i, row) in self.a.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c].clone();
            if f == T::zero() {
                continue;
            }
            for (v, pv) in row.iter_mut().zip(&prow) {
                *v = v.sub(&f.mul(pv));
            }
        }
        let f = obj[c].clone();
        if f != T::zero() {
            for (v, pv) in obj.iter_mut().zip(&prow) {
                *v = v.sub(&f.mul(pv));
            }
        }
        self.basis[r] = c;
    }

    /// Bland's rule over columns `< allowed`.
    fn optimize(&mut self, obj: &mut [T], allowed: usize) -> Result<(), Unbounded> {
        let rhs = self.width;
        loop {
            let Some(c) = (0..allowed).find(|&j| obj[j].is_neg()) else {
                return Ok(());
            };
            let mut best: Option<(usize, T)> = None;
            for (i, row) in self.a.iter().enumerate() {
                if !row[c].is_pos() {
                    continue;
                }
                let ratio = row[rhs].div(&row[c]);
                let better = match &best {
                    None => true,
                    Some((bi, br)) => {
                        ratio < *br || (ratio == *br && self.basis[i] < self.basis[*bi])
                    }
                };
                if better {
                    best = Some((i, ratio));
                }
            }
            match best {
                Some((r, _)) => self.pivot(r, c, obj),
                None => return Err(Unbounded),
            }
        }
    }
}
