//! Refinement checks, refinement distance, and merging two calibrated
//! predictors into a common refinement.
//!
//! Merging crosses the level-set partitions of the two inputs within each
//! scope and gives every nonempty crossed cell its mean true risk. In exact
//! mode the means come from `p_star`; in sample mode they are estimated from
//! `(cell, outcome)` records and snapped onto an alpha grid.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::information::{require_calibrated, variance_content, CellSampler, DEFAULT_CALIBRATION_TOLERANCE};
use crate::population::{check_alpha, level_sets, snap_to_grid, Cell, Population, Predictor, Scope, Scopes};
use crate::scalar::{four, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelRefinement<T> {
    pub v: T,
    pub mass: T,
    pub mean_refined: T,
    pub deviation: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefinementCheck<T> {
    pub base: String,
    pub refined: String,
    pub scope: Scope,
    pub per_level: Vec<LevelRefinement<T>>,
    pub max_deviation: T,
    pub tolerance: f64,
    pub is_refinement: bool,
}

fn level_means<T: Scalar>(
    pop: &Population<T>,
    z: &Predictor<T>,
    other: &Predictor<T>,
    scope: Scope,
) -> Result<Vec<LevelRefinement<T>>> {
    z.check_shape(pop)?;
    other.check_shape(pop)?;
    let total = pop.nonempty_scope_mass(scope)?;
    Ok(level_sets(pop, z, scope)
        .into_iter()
        .map(|level| {
            let mean = pop.mean_over(&level.cells, other.scores()).expect("nonempty level");
            LevelRefinement {
                deviation: (mean.clone() - level.value.clone()).abs(),
                v: level.value,
                mass: level.mass / total.clone(),
                mean_refined: mean,
            }
        })
        .collect())
}

/// Largest `|E[z' | z = v] - v|` over the level sets of `z`, with no
/// calibration precondition.
pub(crate) fn refinement_deviation<T: Scalar>(
    pop: &Population<T>,
    z: &Predictor<T>,
    z_prime: &Predictor<T>,
    scope: Scope,
) -> Result<T> {
    Ok(level_means(pop, z, z_prime, scope)?
        .into_iter()
        .fold(T::zero(), |acc, l| acc.max_of(l.deviation)))
}

/// Checks that `z_prime` keeps the mean of every level set of `z` on `scope`.
pub fn is_refinement<T: Scalar>(
    pop: &Population<T>,
    z: &Predictor<T>,
    z_prime: &Predictor<T>,
    scope: Scope,
    tolerance: f64,
) -> Result<RefinementCheck<T>> {
    let cal_tol = tolerance.max(DEFAULT_CALIBRATION_TOLERANCE);
    require_calibrated(pop, z, scope, cal_tol)?;
    require_calibrated(pop, z_prime, scope, cal_tol)?;
    let per_level = level_means(pop, z, z_prime, scope)?;
    let max_deviation = per_level
        .iter()
        .fold(T::zero(), |acc, l| acc.max_of(l.deviation.clone()));
    Ok(RefinementCheck {
        base: z.name().to_string(),
        refined: z_prime.name().to_string(),
        scope,
        is_refinement: max_deviation.to_f64_lossy() <= tolerance,
        per_level,
        max_deviation,
        tolerance,
    })
}

/// Errors unless `z_prime` refines `z` on every scope in `scopes`.
pub fn require_refinement<T: Scalar>(
    pop: &Population<T>,
    z: &Predictor<T>,
    z_prime: &Predictor<T>,
    scopes: &[Scope],
    tolerance: f64,
) -> Result<()> {
    for &scope in scopes {
        let check = is_refinement(pop, z, z_prime, scope, tolerance)?;
        if !check.is_refinement {
            return Err(Error::NotRefinement {
                base: z.name().to_string(),
                refined: z_prime.name().to_string(),
                scope,
                max_deviation: check.max_deviation.to_f64_lossy(),
            });
        }
    }
    Ok(())
}

/// `D_R(z; q) = sum_v S^z(v) |E[q | z = v] - v|`.
pub fn refinement_distance<T: Scalar>(
    pop: &Population<T>,
    z: &Predictor<T>,
    q: &Predictor<T>,
    scope: Scope,
) -> Result<T> {
    require_calibrated(pop, z, scope, DEFAULT_CALIBRATION_TOLERANCE)?;
    require_calibrated(pop, q, scope, DEFAULT_CALIBRATION_TOLERANCE)?;
    unchecked_distance(pop, z, q, scope)
}

fn unchecked_distance<T: Scalar>(pop: &Population<T>, z: &Predictor<T>, q: &Predictor<T>, scope: Scope) -> Result<T> {
    Ok(crate::scalar::sum(
        level_means(pop, z, q, scope)?
            .into_iter()
            .map(|l| l.mass * l.deviation),
    ))
}

/// One nonempty cell `X_vu ∩ scope` of the crossed partition.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrossedCell<T> {
    pub scope: Scope,
    pub z: T,
    pub q: T,
    pub mass: T,
    pub p_star_mean: T,
    /// Sample mode only: number of routed samples.
    pub samples: Option<usize>,
    /// Sample mode only: empirical mean outcome before snapping.
    pub estimate: Option<f64>,
    #[serde(skip)]
    pub cells: Vec<usize>,
}

fn crossed_partition<T: Scalar>(
    pop: &Population<T>,
    z: &Predictor<T>,
    q: &Predictor<T>,
    scopes: Scopes,
) -> Vec<CrossedCell<T>> {
    let p_star = pop.p_star_values();
    let mut out = Vec::new();
    for scope in scopes.resolve(pop) {
        for level in level_sets(pop, z, scope) {
            // Split the level set by q, keeping ascending cell order inside
            // every crossed cell.
            let mut by_q: Vec<(T, Vec<usize>)> = Vec::new();
            for &i in &level.cells {
                let u = q.score(i);
                match by_q.iter_mut().find(|(v, _)| v == u) {
                    Some((_, cells)) => cells.push(i),
                    None => by_q.push((u.clone(), vec![i])),
                }
            }
            by_q.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("comparable"));
            for (u, cells) in by_q {
                let mass = crate::scalar::sum(cells.iter().map(|&i| pop.cells()[i].mass.clone()));
                let p_star_mean = pop.mean_over(&cells, &p_star).expect("nonempty crossed cell");
                out.push(CrossedCell {
                    scope,
                    z: level.value.clone(),
                    q: u,
                    mass,
                    p_star_mean,
                    samples: None,
                    estimate: None,
                    cells,
                });
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InfoPair<T> {
    pub z: T,
    pub q: T,
}

/// Refinement distances in both directions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Distances<T> {
    /// `D_R(q; z)`: level sets of `q` checked against the values of `z`.
    pub from_q_to_z: T,
    /// `D_R(z; q)`: level sets of `z` checked against the values of `q`.
    pub from_z_to_q: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MergeReport<T> {
    pub z: String,
    pub q: String,
    pub scopes: Scopes,
    #[serde(skip)]
    pub result: Predictor<T>,
    /// Merged scores keyed by cell id.
    pub result_scores: BTreeMap<String, T>,
    pub info_before: InfoPair<T>,
    pub info_after: T,
    pub distances: Distances<T>,
    /// Lower bound on `info_after`: `max{I(z) + 4 D_R(q;z)^2, I(q) + 4 D_R(z;q)^2}`.
    pub guaranteed_gain: T,
    /// `min{D_R(z;q), D_R(q;z)}`.
    pub eta: T,
    pub crossed_cells: Vec<CrossedCell<T>>,
    pub budget: Option<SampleBudget>,
}

fn build_report<T: Scalar>(
    pop: &Population<T>,
    z: &Predictor<T>,
    q: &Predictor<T>,
    scopes: Scopes,
    result: Predictor<T>,
    crossed_cells: Vec<CrossedCell<T>>,
    budget: Option<SampleBudget>,
) -> Result<MergeReport<T>> {
    let info_z = variance_content(pop, z, Scope::All)?;
    let info_q = variance_content(pop, q, Scope::All)?;
    let info_after = variance_content(pop, &result, Scope::All)?;
    let from_q_to_z = unchecked_distance(pop, q, z, Scope::All)?;
    let from_z_to_q = unchecked_distance(pop, z, q, Scope::All)?;
    let bound_z = info_z.clone() + four::<T>() * from_q_to_z.clone() * from_q_to_z.clone();
    let bound_q = info_q.clone() + four::<T>() * from_z_to_q.clone() * from_z_to_q.clone();
    let result_scores = pop
        .cells()
        .iter()
        .zip(result.scores())
        .map(|(c, s)| (c.id.clone(), s.clone()))
        .collect();
    Ok(MergeReport {
        z: z.name().to_string(),
        q: q.name().to_string(),
        scopes,
        result,
        result_scores,
        info_before: InfoPair { z: info_z, q: info_q },
        info_after,
        guaranteed_gain: bound_z.max_of(bound_q),
        eta: from_q_to_z.clone().min_of(from_z_to_q.clone()),
        distances: Distances {
            from_q_to_z,
            from_z_to_q,
        },
        crossed_cells,
        budget,
    })
}

fn merged_name(z: &Predictor<impl Scalar>, q: &Predictor<impl Scalar>) -> String {
    format!("merge({},{})", z.name(), q.name())
}

/// Exact merge: every crossed cell gets its mean true risk.
pub fn merge_oracle<T: Scalar>(
    pop: &Population<T>,
    z: &Predictor<T>,
    q: &Predictor<T>,
    scopes: Scopes,
) -> Result<MergeReport<T>> {
    z.check_shape(pop)?;
    q.check_shape(pop)?;
    for scope in scopes.resolve(pop) {
        require_calibrated(pop, z, scope, DEFAULT_CALIBRATION_TOLERANCE)?;
        require_calibrated(pop, q, scope, DEFAULT_CALIBRATION_TOLERANCE)?;
    }
    let crossed = crossed_partition(pop, z, q, scopes);
    let mut scores = vec![T::zero(); pop.len()];
    for cell in &crossed {
        for &i in &cell.cells {
            scores[i] = cell.p_star_mean.clone();
        }
    }
    let result = Predictor::new(pop, merged_name(z, q), scores)?;
    build_report(pop, z, q, scopes, result, crossed, None)
}

/// Sample sizes for estimating every crossed-cell mean to within `alpha / 2`.
///
/// `per_cell = ceil(ln(2 / (delta alpha^2)) / alpha^2)` samples per crossed
/// cell and `total = ceil(per_cell ln(2 per_cell / delta) / gamma)` draws
/// overall. The constants are the explicit ones from the union-bound argument;
/// they are not claimed to be tight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SampleBudget {
    pub alpha: f64,
    pub gamma: f64,
    pub delta: f64,
    pub per_cell: u64,
    pub total: u64,
}

impl SampleBudget {
    pub fn new(alpha: f64, gamma: f64, delta: f64) -> Result<Self> {
        check_alpha(alpha)?;
        for (name, v) in [("gamma", gamma), ("delta", delta)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidParameter(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        let per_cell = ((2.0 / (delta * alpha * alpha)).ln() / (alpha * alpha)).ceil().max(1.0);
        let total = (per_cell * (2.0 * per_cell / delta).ln() / gamma).ceil().max(1.0);
        Ok(SampleBudget {
            alpha,
            gamma,
            delta,
            per_cell: per_cell as u64,
            total: total as u64,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sample {
    pub cell: String,
    pub y: bool,
}

/// Parses newline-delimited `cell_id,y` records; blank lines are skipped.
pub fn parse_samples(text: &str) -> Result<Vec<Sample>> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(n, line)| {
            let err = |message: &str| Error::Parse {
                context: format!("samples line {}", n + 1),
                message: message.to_string(),
            };
            let (cell, y) = line.trim().rsplit_once(',').ok_or_else(|| err("expected `cell_id,y`"))?;
            let y = match y.trim() {
                "0" => false,
                "1" => true,
                _ => return Err(err("outcome must be 0 or 1")),
            };
            Ok(Sample {
                cell: cell.trim().to_string(),
                y,
            })
        })
        .collect()
}

pub fn format_samples(samples: &[Sample]) -> String {
    let mut out = String::with_capacity(samples.len() * 8);
    for s in samples {
        let _ = writeln!(out, "{},{}", s.cell, u8::from(s.y));
    }
    out
}

/// Draws `count` records `(x, y)` with `x` by mass and `y ~ Bernoulli(p*(x))`.
pub fn draw_samples<T: Scalar>(pop: &Population<T>, count: usize, seed: u64) -> Result<Vec<Sample>> {
    let sampler = CellSampler::new(pop, Scope::All)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let i = sampler.draw(&mut rng);
            let y = rng.random::<f64>() < pop.cells()[i].p_star.to_f64_lossy();
            Sample {
                cell: pop.cells()[i].id.clone(),
                y,
            }
        })
        .collect())
}

/// Sample-mode merge: crossed-cell means are estimated from `samples` and
/// snapped onto the `budget.alpha` grid. True risks are never consulted
/// except to fill `p_star_mean` for auditing.
pub fn merge_from_samples<T: Scalar>(
    pop: &Population<T>,
    z: &Predictor<T>,
    q: &Predictor<T>,
    samples: &[Sample],
    budget: SampleBudget,
    scopes: Scopes,
) -> Result<MergeReport<T>> {
    z.check_shape(pop)?;
    q.check_shape(pop)?;
    let mut crossed = crossed_partition(pop, z, q, scopes);
    let mut owner = vec![0usize; pop.len()];
    for (k, cell) in crossed.iter().enumerate() {
        for &i in &cell.cells {
            owner[i] = k;
        }
    }
    let mut counts = vec![(0usize, 0usize); crossed.len()];
    for s in samples {
        let i = pop.cell_index(&s.cell).ok_or_else(|| Error::Parse {
            context: "samples".into(),
            message: format!("unknown cell id {:?}", s.cell),
        })?;
        let slot = &mut counts[owner[i]];
        slot.0 += 1;
        slot.1 += usize::from(s.y);
    }
    let mut scores = vec![T::zero(); pop.len()];
    for (cell, &(n, positives)) in crossed.iter_mut().zip(&counts) {
        if n == 0 {
            return Err(Error::Undersampled {
                z: cell.z.to_f64_lossy(),
                q: cell.q.to_f64_lossy(),
            });
        }
        let estimate = positives as f64 / n as f64;
        let snapped: T = snap_to_grid(estimate, budget.alpha, f64::INFINITY).expect("infinite tolerance snaps");
        for &i in &cell.cells {
            scores[i] = snapped.clone();
        }
        cell.samples = Some(n);
        cell.estimate = Some(estimate);
    }
    let result = Predictor::new(pop, format!("{}~samples", merged_name(z, q)), scores)?.with_grid(pop, budget.alpha)?;
    build_report(pop, z, q, scopes, result, crossed, Some(budget))
}

/// A two-level predictor built from a boolean feature, with the gap in mean
/// risk between the feature's two sides on each scope.
#[derive(Clone, Debug, PartialEq)]
pub struct FeaturePredictor<T> {
    pub predictor: Predictor<T>,
    pub informativeness: Vec<(Scope, T)>,
}

/// `q_phi(x) = E[p*(x') | phi(x') = phi(x)]` within each scope. A feature
/// that is constant on a scope yields that scope's base rate.
pub fn feature_predictor<T: Scalar>(
    pop: &Population<T>,
    name: impl Into<String>,
    phi: impl Fn(&Cell<T>) -> bool,
    scopes: Scopes,
) -> Result<FeaturePredictor<T>> {
    let p_star = pop.p_star_values();
    let mut scores = vec![T::zero(); pop.len()];
    let mut informativeness = Vec::new();
    for scope in scopes.resolve(pop) {
        let (on, off): (Vec<usize>, Vec<usize>) = pop
            .scope_indices(scope)
            .into_iter()
            .partition(|&i| phi(&pop.cells()[i]));
        let mean_on = pop.mean_over(&on, &p_star);
        let mean_off = pop.mean_over(&off, &p_star);
        for (cells, mean) in [(&on, &mean_on), (&off, &mean_off)] {
            if let Some(m) = mean {
                for &i in cells {
                    scores[i] = m.clone();
                }
            }
        }
        let gap = match (mean_on, mean_off) {
            (Some(a), Some(b)) => (a - b).abs(),
            _ => T::zero(),
        };
        informativeness.push((scope, gap));
    }
    Ok(FeaturePredictor {
        predictor: Predictor::new(pop, name, scores)?,
        informativeness,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EtaMergeSummary {
    pub eta: f64,
    /// Merges whose `eta` is at least the threshold.
    pub eta_merges: usize,
    /// `ceil(1 / (4 eta^2)) + 1`; `None` for a zero threshold.
    pub bound: Option<u64>,
    /// Indices of eta-merges whose gain fell below `4 eta^2`.
    pub gain_violations: Vec<usize>,
    pub within_bound: bool,
}

/// Audits a chain of merges of one evolving predictor: each eta-merge must
/// raise information content by at least `4 eta^2`, so at most
/// `1 / (4 eta^2)` of them fit in `[0, 1]`.
pub fn eta_merge_counter<T: Scalar>(history: &[MergeReport<T>], eta: f64) -> EtaMergeSummary {
    if eta <= 0.0 {
        return EtaMergeSummary {
            eta,
            eta_merges: 0,
            bound: None,
            gain_violations: Vec::new(),
            within_bound: true,
        };
    }
    let required = 4.0 * eta * eta - 1e-10;
    let mut eta_merges = 0;
    let mut gain_violations = Vec::new();
    for (k, report) in history.iter().enumerate() {
        if report.eta.to_f64_lossy() >= eta {
            eta_merges += 1;
            let gain = (report.info_after.clone() - report.info_before.z.clone()).to_f64_lossy();
            if gain < required {
                gain_violations.push(k);
            }
        }
    }
    let bound = (1.0 / (4.0 * eta * eta)).ceil() as u64 + 1;
    EtaMergeSummary {
        eta,
        eta_merges,
        bound: Some(bound),
        within_bound: eta_merges as u64 <= bound,
        gain_violations,
    }
}
