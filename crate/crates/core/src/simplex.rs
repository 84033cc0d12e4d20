//! Dense phase-I simplex for `A x = b, x >= 0` with 0/1 constraint matrices.
//!
//! One artificial variable per row starts in the basis. Pivoting follows
//! Bland's rule, so the method terminates on degenerate problems. Once an
//! artificial leaves the basis it is never considered again, which lets the
//! tableau skip artificial columns entirely.

use num_rational::BigRational;
use num_traits::{Signed, Zero};

/// Arithmetic needed by the tableau.
pub trait Scalar: Clone + PartialOrd + std::fmt::Debug {
    fn zero() -> Self;
    fn one() -> Self;
    /// Strictly positive beyond the pivot tolerance.
    fn is_positive(&self) -> bool;
    /// Strictly negative beyond the reduced-cost tolerance.
    fn is_negative(&self) -> bool;
    fn is_zero_value(&self) -> bool;
    /// `self -= a * b`
    fn sub_mul(&mut self, a: &Self, b: &Self);
    fn div_by(&self, d: &Self) -> Self;
    fn add_assign_ref(&mut self, other: &Self);
    fn to_f64(&self) -> f64;
}

const PIVOT_EPS: f64 = 1e-11;
const COST_EPS: f64 = 1e-11;

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn is_positive(&self) -> bool {
        *self > PIVOT_EPS
    }
    fn is_negative(&self) -> bool {
        *self < -COST_EPS
    }
    fn is_zero_value(&self) -> bool {
        *self == 0.0
    }
    fn sub_mul(&mut self, a: &Self, b: &Self) {
        *self -= a * b;
    }
    fn div_by(&self, d: &Self) -> Self {
        self / d
    }
    fn add_assign_ref(&mut self, other: &Self) {
        *self += other;
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        num_traits::One::one()
    }
    fn is_positive(&self) -> bool {
        Signed::is_positive(self)
    }
    fn is_negative(&self) -> bool {
        Signed::is_negative(self)
    }
    fn is_zero_value(&self) -> bool {
        Zero::is_zero(self)
    }
    fn sub_mul(&mut self, a: &Self, b: &Self) {
        *self -= a * b;
    }
    fn div_by(&self, d: &Self) -> Self {
        self / d
    }
    fn add_assign_ref(&mut self, other: &Self) {
        *self += other;
    }
    fn to_f64(&self) -> f64 {
        crate::exact::rational_to_f64(self)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseOneResult<T> {
    /// Sum of artificial variables at termination.
    pub objective: T,
    /// Value of every structural variable.
    pub solution: Vec<T>,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IterationLimit {
    pub iterations: usize,
}

/// Minimizes the sum of artificials for `rows` (column indices carrying a
/// coefficient of 1) against right-hand sides `rhs`, which must be `>= 0`.
pub fn phase_one<T: Scalar>(
    num_vars: usize,
    rows: &[Vec<usize>],
    rhs: &[T],
    max_iterations: usize,
) -> Result<PhaseOneResult<T>, IterationLimit> {
    let m = rows.len();
    let n = num_vars;
    let width = n + 1;
    let mut tab: Vec<T> = vec![T::zero(); m * width];
    for (i, row) in rows.iter().enumerate() {
        for &j in row {
            tab[i * width + j] = T::one();
        }
        tab[i * width + n] = rhs[i].clone();
    }
    // reduced costs of the phase-I objective; last slot is minus the objective
    let mut cost: Vec<T> = vec![T::zero(); width];
    for i in 0..m {
        for j in 0..width {
            let v = tab[i * width + j].clone();
            if !v.is_zero_value() {
                cost[j].sub_mul(&v, &T::one());
            }
        }
    }
    // basic variable per row; artificials are numbered n..n+m
    let mut basis: Vec<usize> = (n..n + m).collect();
    let mut iterations = 0;

    while let Some(enter) = (0..n).find(|&j| cost[j].is_negative()) {
        if iterations >= max_iterations {
            return Err(IterationLimit { iterations });
        }
        iterations += 1;

        let mut leave: Option<(usize, T)> = None;
        for i in 0..m {
            let a = &tab[i * width + enter];
            if !a.is_positive() {
                continue;
            }
            let ratio = tab[i * width + n].div_by(a);
            leave = match leave {
                None => Some((i, ratio)),
                Some((r, best)) => {
                    if ratio < best || (ratio == best && basis[i] < basis[r]) {
                        Some((i, ratio))
                    } else {
                        Some((r, best))
                    }
                }
            };
        }
        // the phase-I objective is bounded below, so a negative reduced cost
        // always has a positive entry in its column; guard against noise anyway
        let Some((r, _)) = leave else {
            cost[enter] = T::zero();
            continue;
        };
        pivot(&mut tab, &mut cost, width, r, enter);
        basis[r] = enter;
    }

    let mut solution = vec![T::zero(); n];
    let mut objective = T::zero();
    for (i, &b) in basis.iter().enumerate() {
        let value = tab[i * width + n].clone();
        if b < n {
            solution[b] = value;
        } else {
            objective.add_assign_ref(&value);
        }
    }
    Ok(PhaseOneResult {
        objective,
        solution,
        iterations,
    })
}

fn pivot<T: Scalar>(tab: &mut [T], cost: &mut [T], width: usize, r: usize, enter: usize) {
    let piv = tab[r * width + enter].clone();
    for j in 0..width {
        let cell = &mut tab[r * width + j];
        if !cell.is_zero_value() {
            *cell = cell.div_by(&piv);
        }
    }
    let pivot_row: Vec<(usize, T)> = (0..width)
        .filter_map(|j| {
            let v = &tab[r * width + j];
            (!v.is_zero_value()).then(|| (j, v.clone()))
        })
        .collect();
    let rows = tab.len() / width;
    for i in 0..rows {
        if i == r {
            continue;
        }
        let factor = tab[i * width + enter].clone();
        if factor.is_zero_value() {
            continue;
        }
        for (j, v) in &pivot_row {
            tab[i * width + j].sub_mul(&factor, v);
        }
        tab[i * width + enter] = T::zero();
    }
    let factor = cost[enter].clone();
    if !factor.is_zero_value() {
        for (j, v) in &pivot_row {
            cost[*j].sub_mul(&factor, v);
        }
        cost[enter] = T::zero();
    }
}
