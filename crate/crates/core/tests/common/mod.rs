//! Brute-force reference computations used by the integration tests. Nothing
//! here calls into the library's numerics; inputs are plain slices.

#![allow(dead_code)]

use std::collections::BTreeMap;

use infofair::lp::{LinearProgram, Relation, Sense};
use infofair::{Population, Predictor, Scalar, Scope};

/// `(mass, p_star, score)` rows of the cells inside `scope`, masses
/// renormalized to sum to one.
pub fn rows<T: Scalar>(pop: &Population<T>, z: &Predictor<T>, scope: Scope) -> Vec<(f64, f64, f64)> {
    let picked: Vec<(f64, f64, f64)> = pop
        .cells()
        .iter()
        .zip(z.scores())
        .filter(|(c, _)| scope.contains(c.group))
        .map(|(c, s)| (c.mass.to_f64_lossy(), c.p_star.to_f64_lossy(), s.to_f64_lossy()))
        .collect();
    let total: f64 = picked.iter().map(|r| r.0).sum();
    picked.into_iter().map(|(m, p, s)| (m / total, p, s)).collect()
}

pub fn scores_in<T: Scalar>(pop: &Population<T>, z: &Predictor<T>, scope: Scope) -> Vec<f64> {
    pop.cells()
        .iter()
        .zip(z.scores())
        .filter(|(c, _)| scope.contains(c.group))
        .map(|(_, s)| s.to_f64_lossy())
        .collect()
}

/// `1 - 4 sum m z (1 - z)`, cell by cell.
pub fn content(rows: &[(f64, f64, f64)]) -> f64 {
    1.0 - 4.0 * rows.iter().map(|(m, _, z)| m * z * (1.0 - z)).sum::<f64>()
}

/// `4 sum m (r - z)^2` for `reference` scores `r` aligned with `rows`.
pub fn loss(rows: &[(f64, f64, f64)], reference: &[f64]) -> f64 {
    4.0 * rows
        .iter()
        .zip(reference)
        .map(|((m, _, z), r)| m * (r - z) * (r - z))
        .sum::<f64>()
}

pub fn entropy_bits(p: f64) -> f64 {
    let h = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.log2() };
    h(p) + h(1.0 - p)
}

pub fn kl_bits(p: f64, q: f64) -> f64 {
    let t = |a: f64, b: f64| if a <= 0.0 { 0.0 } else { a * (a / b).log2() };
    t(p, q) + t(1.0 - p, 1.0 - q)
}

pub fn entropic_content(rows: &[(f64, f64, f64)]) -> f64 {
    1.0 - rows.iter().map(|(m, _, z)| m * entropy_bits(*z)).sum::<f64>()
}

pub fn entropic_loss(rows: &[(f64, f64, f64)], reference: &[f64]) -> f64 {
    rows.iter().zip(reference).map(|((m, _, z), r)| m * kl_bits(*r, *z)).sum()
}

/// Groups `(mass, value)` by the key score, keyed on the score's bits.
fn by_level(keys: &[f64], masses: &[f64], values: &[f64]) -> BTreeMap<u64, (f64, f64, f64)> {
    let mut out: BTreeMap<u64, (f64, f64, f64)> = BTreeMap::new();
    for ((k, m), v) in keys.iter().zip(masses).zip(values) {
        let slot = out.entry(k.to_bits()).or_insert((*k, 0.0, 0.0));
        slot.1 += m;
        slot.2 += m * v;
    }
    out
}

/// `max_v |E[values | key = v] - v|`.
pub fn level_deviation(masses: &[f64], keys: &[f64], values: &[f64]) -> f64 {
    by_level(keys, masses, values)
        .values()
        .map(|(k, m, s)| (s / m - k).abs())
        .fold(0.0, f64::max)
}

/// `sum_v Pr[key = v] |E[values | key = v] - v|`.
pub fn distance(masses: &[f64], keys: &[f64], values: &[f64]) -> f64 {
    by_level(keys, masses, values)
        .values()
        .map(|(k, m, s)| m * (s / m - k).abs())
        .sum()
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn gauss(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                if f != 0.0 {
                    for k in col..n {
                        a[row][k] -= f * a[col][k];
                    }
                    b[row] -= f * b[col];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Best objective over all basic solutions of a bounded program, or `None`
/// when no basic solution is feasible.
pub fn vertex_enumeration(lp: &LinearProgram<f64>) -> Option<f64> {
    let n = lp.variables.len();
    // Every face as `(row, rhs, is_equality)`; inequalities are `row . x <= rhs`.
    let mut faces: Vec<(Vec<f64>, f64, bool)> = Vec::new();
    for c in &lp.constraints {
        match c.relation {
            Relation::Le => faces.push((c.coefficients.clone(), c.rhs, false)),
            Relation::Ge => faces.push((c.coefficients.iter().map(|x| -x).collect(), -c.rhs, false)),
            Relation::Eq => faces.push((c.coefficients.clone(), c.rhs, true)),
        }
    }
    for (j, v) in lp.variables.iter().enumerate() {
        let unit = |s: f64| (0..n).map(|k| if k == j { s } else { 0.0 }).collect::<Vec<f64>>();
        let lo = v.lo.expect("bounded variables only");
        let hi = v.hi.expect("bounded variables only");
        faces.push((unit(-1.0), -lo, false));
        faces.push((unit(1.0), hi, false));
    }
    let equalities: Vec<usize> = (0..faces.len()).filter(|&i| faces[i].2).collect();
    let free: Vec<usize> = (0..faces.len()).filter(|&i| !faces[i].2).collect();
    if equalities.len() > n {
        return None;
    }
    let feasible = |x: &[f64]| {
        faces.iter().all(|(row, rhs, eq)| {
            let lhs: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
            if *eq {
                (lhs - rhs).abs() <= 1e-9
            } else {
                lhs <= rhs + 1e-9
            }
        })
    };
    let sign = match lp.sense {
        Sense::Maximize => 1.0,
        Sense::Minimize => -1.0,
    };
    let mut best: Option<f64> = None;
    let k = n - equalities.len();
    for subset in combinations(free.len(), k) {
        let tight: Vec<usize> = equalities.iter().copied().chain(subset.iter().map(|&i| free[i])).collect();
        let a: Vec<Vec<f64>> = tight.iter().map(|&i| faces[i].0.clone()).collect();
        let b: Vec<f64> = tight.iter().map(|&i| faces[i].1).collect();
        let Some(x) = gauss(a, b) else { continue };
        if !feasible(&x) {
            continue;
        }
        let value: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        if best.is_none_or(|b| sign * value > sign * b) {
            best = Some(value);
        }
    }
    best
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        for i in start..n {
            if n - i < k - current.len() {
                break;
            }
            current.push(i);
            rec(i + 1, n, k, current, out);
            current.pop();
        }
    }
    rec(0, n, k, &mut current, &mut out);
    out
}
