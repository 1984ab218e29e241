//! Small dense linear programs and a two-phase tableau simplex with Bland's
//! rule.
//!
//! Variables carry optional box bounds. Before solving, every variable is
//! rewritten as a nonnegative one (`x = lo + y`, `x = hi - y`, or
//! `x = y+ - y-` when free) and finite upper bounds become rows.

use std::fmt;

use serde::Serialize;

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable<T> {
    pub name: String,
    pub lo: Option<T>,
    pub hi: Option<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint<T> {
    pub name: String,
    /// Dense, one coefficient per variable.
    pub coefficients: Vec<T>,
    pub relation: Relation,
    pub rhs: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram<T> {
    pub sense: Sense,
    pub variables: Vec<Variable<T>>,
    pub objective: Vec<T>,
    pub constraints: Vec<Constraint<T>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Pivot budget exhausted; only reachable through floating-point trouble.
    IterationLimit,
}

impl fmt::Display for LpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LpStatus::Optimal => "optimal",
            LpStatus::Infeasible => "infeasible",
            LpStatus::Unbounded => "unbounded",
            LpStatus::IterationLimit => "iteration_limit",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution<T> {
    pub status: LpStatus,
    /// One value per variable; empty unless optimal.
    pub values: Vec<T>,
    pub objective: Option<T>,
}

impl<T: Scalar> LinearProgram<T> {
    pub fn new(sense: Sense) -> Self {
        LinearProgram {
            sense,
            variables: Vec::new(),
            objective: Vec::new(),
            constraints: Vec::new(),
        }
    }

    /// Adds a variable with objective coefficient 0 and returns its index.
    pub fn add_variable(&mut self, name: impl Into<String>, lo: Option<T>, hi: Option<T>) -> usize {
        if let (Some(l), Some(h)) = (&lo, &hi) {
            assert!(l <= h, "variable bounds out of order");
        }
        self.variables.push(Variable {
            name: name.into(),
            lo,
            hi,
        });
        self.objective.push(T::zero());
        for c in &mut self.constraints {
            c.coefficients.push(T::zero());
        }
        self.variables.len() - 1
    }

    pub fn set_objective(&mut self, var: usize, coefficient: T) {
        self.objective[var] = coefficient;
    }

    /// Adds `sum terms relation rhs`; repeated indices accumulate.
    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: impl IntoIterator<Item = (usize, T)>,
        relation: Relation,
        rhs: T,
    ) {
        let mut coefficients = vec![T::zero(); self.variables.len()];
        for (i, c) in terms {
            coefficients[i] = coefficients[i].clone() + c;
        }
        self.constraints.push(Constraint {
            name: name.into(),
            coefficients,
            relation,
            rhs,
        });
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn objective_at(&self, x: &[T]) -> T {
        dot(&self.objective, x)
    }

    /// Largest bound or constraint violation of `x`.
    pub fn max_violation(&self, x: &[T]) -> T {
        let mut worst = T::zero();
        for (v, xi) in self.variables.iter().zip(x) {
            if let Some(lo) = &v.lo {
                worst = worst.max_of(lo.clone() - xi.clone());
            }
            if let Some(hi) = &v.hi {
                worst = worst.max_of(xi.clone() - hi.clone());
            }
        }
        for c in &self.constraints {
            let lhs = dot(&c.coefficients, x);
            let gap = match c.relation {
                Relation::Le => lhs - c.rhs.clone(),
                Relation::Ge => c.rhs.clone() - lhs,
                Relation::Eq => (lhs - c.rhs.clone()).abs(),
            };
            worst = worst.max_of(gap);
        }
        worst
    }

    pub fn solve(&self) -> LpSolution<T> {
        solve(self)
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (x, y)| acc + x.clone() * y.clone())
}

fn write_term<T: Scalar>(f: &mut fmt::Formatter<'_>, first: &mut bool, c: &T, name: &str) -> fmt::Result {
    if c.is_zero() {
        return Ok(());
    }
    let negative = *c < T::zero();
    let sign = match (*first, negative) {
        (true, true) => "-",
        (true, false) => "",
        (false, true) => " - ",
        (false, false) => " + ",
    };
    *first = false;
    write!(f, "{sign}{} {name}", c.clone().abs())
}

/// One line per objective, constraint and bound. For reading, not parsing.
impl<T: Scalar> fmt::Display for LinearProgram<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sense = match self.sense {
            Sense::Maximize => "maximize",
            Sense::Minimize => "minimize",
        };
        write!(f, "{sense} ")?;
        let mut first = true;
        for (c, v) in self.objective.iter().zip(&self.variables) {
            write_term(f, &mut first, c, &v.name)?;
        }
        if first {
            write!(f, "0")?;
        }
        writeln!(f)?;
        writeln!(f, "subject to")?;
        for c in &self.constraints {
            write!(f, "  {}: ", c.name)?;
            let mut first = true;
            for (a, v) in c.coefficients.iter().zip(&self.variables) {
                write_term(f, &mut first, a, &v.name)?;
            }
            if first {
                write!(f, "0")?;
            }
            writeln!(f, " {} {}", c.relation, c.rhs)?;
        }
        writeln!(f, "bounds")?;
        for v in &self.variables {
            let lo = v.lo.as_ref().map(|x| x.to_string()).unwrap_or_else(|| "-inf".into());
            let hi = v.hi.as_ref().map(|x| x.to_string()).unwrap_or_else(|| "+inf".into());
            writeln!(f, "  {lo} <= {} <= {hi}", v.name)?;
        }
        Ok(())
    }
}

/// How an original variable maps onto nonnegative columns.
enum Shift<T> {
    /// `x = offset + y`.
    Up(usize, T),
    /// `x = offset - y`.
    Down(usize, T),
    /// `x = y+ - y-`.
    Split(usize, usize),
}

const MAX_PIVOTS: usize = 100_000;

struct Tableau<T> {
    /// Each row holds the column coefficients followed by the right-hand side.
    rows: Vec<Vec<T>>,
    basis: Vec<usize>,
    columns: usize,
    eps: T,
}

enum Outcome {
    Optimal,
    Unbounded,
    Limit,
}

impl<T: Scalar> Tableau<T> {
    fn rhs(&self, r: usize) -> &T {
        &self.rows[r][self.columns]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.rows[row][col].clone();
        for x in self.rows[row].iter_mut() {
            *x = x.clone() / p.clone();
        }
        let pivot_row = self.rows[row].clone();
        for (r, other) in self.rows.iter_mut().enumerate() {
            if r == row {
                continue;
            }
            let factor = other[col].clone();
            if factor.is_zero() {
                continue;
            }
            for (x, y) in other.iter_mut().zip(&pivot_row) {
                *x = x.clone() - factor.clone() * y.clone();
            }
            other[col] = T::zero();
        }
        self.basis[row] = col;
    }

    /// Maximizes `cost . x` over the current basis. Columns with
    /// `allowed[j] == false` never enter.
    fn optimize(&mut self, cost: &[T], allowed: &[bool]) -> Outcome {
        for _ in 0..MAX_PIVOTS {
            // Bland: lowest-index column with positive reduced cost.
            let mut entering = None;
            for j in 0..self.columns {
                if !allowed[j] || self.basis.contains(&j) {
                    continue;
                }
                let mut reduced = cost[j].clone();
                for (r, &b) in self.basis.iter().enumerate() {
                    reduced = reduced - cost[b].clone() * self.rows[r][j].clone();
                }
                if reduced > self.eps {
                    entering = Some(j);
                    break;
                }
            }
            let Some(col) = entering else { return Outcome::Optimal };
            // Ratio test, ties to the lowest basic column index.
            let mut leaving: Option<(usize, T)> = None;
            for r in 0..self.rows.len() {
                let a = &self.rows[r][col];
                if *a <= self.eps {
                    continue;
                }
                let ratio = self.rhs(r).clone() / a.clone();
                let better = match &leaving {
                    None => true,
                    Some((lr, best)) => ratio < *best || (ratio == *best && self.basis[r] < self.basis[*lr]),
                };
                if better {
                    leaving = Some((r, ratio));
                }
            }
            let Some((row, _)) = leaving else { return Outcome::Unbounded };
            self.pivot(row, col);
        }
        Outcome::Limit
    }
}

pub fn solve<T: Scalar>(lp: &LinearProgram<T>) -> LpSolution<T> {
    let n = lp.variables.len();
    let mut shifts = Vec::with_capacity(n);
    let mut cols = 0usize;
    // Rows as (coefficients over y-columns, relation, rhs).
    let mut rows: Vec<(Vec<(usize, T)>, Relation, T)> = Vec::new();
    for v in &lp.variables {
        match (&v.lo, &v.hi) {
            (Some(lo), hi) => {
                shifts.push(Shift::Up(cols, lo.clone()));
                if let Some(hi) = hi {
                    rows.push((vec![(cols, T::one())], Relation::Le, hi.clone() - lo.clone()));
                }
                cols += 1;
            }
            (None, Some(hi)) => {
                shifts.push(Shift::Down(cols, hi.clone()));
                cols += 1;
            }
            (None, None) => {
                shifts.push(Shift::Split(cols, cols + 1));
                cols += 2;
            }
        }
    }
    // Substitute into the objective and the constraints.
    let expand = |coeffs: &[T]| -> (Vec<T>, T) {
        let mut out = vec![T::zero(); cols];
        let mut constant = T::zero();
        for (c, s) in coeffs.iter().zip(&shifts) {
            match s {
                Shift::Up(j, off) => {
                    out[*j] = out[*j].clone() + c.clone();
                    constant = constant + c.clone() * off.clone();
                }
                Shift::Down(j, off) => {
                    out[*j] = out[*j].clone() - c.clone();
                    constant = constant + c.clone() * off.clone();
                }
                Shift::Split(p, m) => {
                    out[*p] = out[*p].clone() + c.clone();
                    out[*m] = out[*m].clone() - c.clone();
                }
            }
        }
        (out, constant)
    };
    for c in &lp.constraints {
        let (coeffs, constant) = expand(&c.coefficients);
        let terms = coeffs.into_iter().enumerate().filter(|(_, a)| !a.is_zero()).collect();
        rows.push((terms, c.relation, c.rhs.clone() - constant));
    }
    let (mut cost, _) = expand(&lp.objective);
    if lp.sense == Sense::Minimize {
        for c in cost.iter_mut() {
            *c = -c.clone();
        }
    }

    // Normalize to nonnegative right-hand sides, then add slack, surplus and
    // artificial columns.
    let m = rows.len();
    let mut slack_count = 0;
    let mut art_count = 0;
    for (terms, rel, rhs) in rows.iter_mut() {
        if *rhs < T::zero() {
            *rhs = -rhs.clone();
            for (_, a) in terms.iter_mut() {
                *a = -a.clone();
            }
            *rel = match *rel {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
        match rel {
            Relation::Le => slack_count += 1,
            Relation::Ge => {
                slack_count += 1;
                art_count += 1;
            }
            Relation::Eq => art_count += 1,
        }
    }
    let first_slack = cols;
    let first_art = cols + slack_count;
    let total = first_art + art_count;
    let mut tab = Tableau {
        rows: Vec::with_capacity(m),
        basis: Vec::with_capacity(m),
        columns: total,
        eps: T::tolerance(),
    };
    let (mut s, mut a) = (first_slack, first_art);
    for (terms, rel, rhs) in rows {
        let mut row = vec![T::zero(); total + 1];
        for (j, c) in terms {
            row[j] = c;
        }
        row[total] = rhs;
        match rel {
            Relation::Le => {
                row[s] = T::one();
                tab.basis.push(s);
                s += 1;
            }
            Relation::Ge => {
                row[s] = -T::one();
                s += 1;
                row[a] = T::one();
                tab.basis.push(a);
                a += 1;
            }
            Relation::Eq => {
                row[a] = T::one();
                tab.basis.push(a);
                a += 1;
            }
        }
        tab.rows.push(row);
    }

    let infeasible = || LpSolution {
        status: LpStatus::Infeasible,
        values: Vec::new(),
        objective: None,
    };
    let status_only = |status| LpSolution {
        status,
        values: Vec::new(),
        objective: None,
    };

    if art_count > 0 {
        let mut phase1 = vec![T::zero(); total];
        for c in phase1.iter_mut().skip(first_art) {
            *c = -T::one();
        }
        let allowed = vec![true; total];
        if let Outcome::Limit = tab.optimize(&phase1, &allowed) {
            return status_only(LpStatus::IterationLimit);
        }
        let residual = crate::scalar::sum(
            tab.basis
                .iter()
                .enumerate()
                .filter(|(_, &b)| b >= first_art)
                .map(|(r, _)| tab.rhs(r).clone()),
        );
        let feas_tol = if T::is_exact() { T::zero() } else { T::from_f64_lossy(1e-9) };
        if residual > feas_tol {
            return infeasible();
        }
        // Drive remaining artificials out of the basis, dropping redundant rows.
        let mut r = 0;
        while r < tab.rows.len() {
            if tab.basis[r] < first_art {
                r += 1;
                continue;
            }
            let col = (0..first_art).find(|&j| tab.rows[r][j].clone().abs() > tab.eps);
            match col {
                Some(j) => {
                    tab.pivot(r, j);
                    r += 1;
                }
                None => {
                    tab.rows.remove(r);
                    tab.basis.remove(r);
                }
            }
        }
    }

    let mut phase2 = cost.clone();
    phase2.resize(total, T::zero());
    let allowed: Vec<bool> = (0..total).map(|j| j < first_art).collect();
    match tab.optimize(&phase2, &allowed) {
        Outcome::Unbounded => return status_only(LpStatus::Unbounded),
        Outcome::Limit => return status_only(LpStatus::IterationLimit),
        Outcome::Optimal => {}
    }

    let mut y = vec![T::zero(); total];
    for (r, &b) in tab.basis.iter().enumerate() {
        y[b] = tab.rhs(r).clone();
    }
    let values: Vec<T> = shifts
        .iter()
        .map(|s| match s {
            Shift::Up(j, off) => off.clone() + y[*j].clone(),
            Shift::Down(j, off) => off.clone() - y[*j].clone(),
            Shift::Split(p, q) => y[*p].clone() - y[*q].clone(),
        })
        .collect();
    let objective = lp.objective_at(&values);
    LpSolution {
        status: LpStatus::Optimal,
        values,
        objective: Some(objective),
    }
}
