//! Fairness-constrained policy selection as linear programs in `f(v, S)`.
//!
//! Four programs are supported: utility maximization under a disparity bound
//! and an impact floor for group B, disparity minimization under utility and
//! impact floors, impact maximization under a utility floor and a disparity
//! bound, and a weighted combination. Disparity is `|h_A - h_B|` for `h` one
//! of selection rate, TPR or FPR.
//!
//! Besides the simplex route there is [`solve_by_sweep`], which searches over
//! pairs of per-group selection rates of threshold policies and serves as an
//! independent check on the LP.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::information::DEFAULT_CALIBRATION_TOLERANCE;
use crate::lp::{LinearProgram, LpStatus, Relation, Sense};
use crate::policy::{assemble, GroupProfile, GroupStats, ImpactParams, PolicyStats, RuleEntry, SelectionRule, Threshold, ThresholdPolicy};
use crate::population::{Group, Population, Predictor, Scope};
use crate::refinement::require_refinement;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    UtilityMax,
    DisparityMin,
    ImpactMax,
    WeightedCombo {
        lambda_u: f64,
        lambda_i: f64,
        #[serde(alias = "lambda_beta")]
        lambda_b: f64,
    },
}

impl Objective {
    pub fn minimizes(&self) -> bool {
        matches!(self, Objective::DisparityMin)
    }

    fn label(&self) -> &'static str {
        match self {
            Objective::UtilityMax => "utility_max",
            Objective::DisparityMin => "disparity_min",
            Objective::ImpactMax => "impact_max",
            Objective::WeightedCombo { .. } => "weighted_combo",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FairnessMetric {
    #[serde(rename = "beta", alias = "selection_rate")]
    SelectionRate,
    #[serde(rename = "tpr")]
    Tpr,
    #[serde(rename = "fpr")]
    Fpr,
}

impl FairnessMetric {
    pub const ALL: [FairnessMetric; 3] = [FairnessMetric::SelectionRate, FairnessMetric::Tpr, FairnessMetric::Fpr];

    fn label(&self) -> &'static str {
        match self {
            FairnessMetric::SelectionRate => "beta",
            FairnessMetric::Tpr => "tpr",
            FairnessMetric::Fpr => "fpr",
        }
    }
}

impl std::str::FromStr for FairnessMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beta" | "selection_rate" => Ok(FairnessMetric::SelectionRate),
            "tpr" => Ok(FairnessMetric::Tpr),
            "fpr" => Ok(FairnessMetric::Fpr),
            other => Err(Error::InvalidParameter(format!("unknown fairness metric {other:?}"))),
        }
    }
}

fn vacuous_eps() -> f64 {
    1.0
}

fn vacuous_floor() -> f64 {
    -1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizationSpec {
    pub objective: Objective,
    pub fairness_metric: FairnessMetric,
    /// Disparity bound; used by utility and impact maximization.
    #[serde(default = "vacuous_eps")]
    pub eps: f64,
    /// Floor on `Imp_B`; used by utility maximization and disparity minimization.
    #[serde(default = "vacuous_floor")]
    pub t_i: f64,
    /// Floor on `U`; used by disparity minimization and impact maximization.
    #[serde(default = "vacuous_floor")]
    pub t_u: f64,
    pub impact_params: ImpactParams,
}

impl OptimizationSpec {
    pub fn new(objective: Objective, fairness_metric: FairnessMetric, impact_params: ImpactParams) -> Self {
        OptimizationSpec {
            objective,
            fairness_metric,
            eps: vacuous_eps(),
            t_i: vacuous_floor(),
            t_u: vacuous_floor(),
            impact_params,
        }
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn with_impact_floor(mut self, t_i: f64) -> Self {
        self.t_i = t_i;
        self
    }

    pub fn with_utility_floor(mut self, t_u: f64) -> Self {
        self.t_u = t_u;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.impact_params.validate()?;
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("eps must be finite and nonnegative, got {}", self.eps)));
        }
        for (name, x) in [("t_i", self.t_i), ("t_u", self.t_u)] {
            if !x.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite, got {x}")));
            }
        }
        if let Objective::WeightedCombo {
            lambda_u,
            lambda_i,
            lambda_b,
        } = self.objective
        {
            for (name, x) in [("lambda_u", lambda_u), ("lambda_i", lambda_i), ("lambda_b", lambda_b)] {
                if !(x >= 0.0 && x.is_finite()) {
                    return Err(Error::InvalidParameter(format!("{name} must be finite and nonnegative, got {x}")));
                }
            }
        }
        Ok(())
    }

    /// Short human-readable identifier.
    pub fn label(&self) -> String {
        let mut out = format!("{}/{}", self.objective.label(), self.fairness_metric.label());
        match self.objective {
            Objective::UtilityMax => out.push_str(&format!(" eps={} t_i={}", self.eps, self.t_i)),
            Objective::DisparityMin => out.push_str(&format!(" t_i={} t_u={}", self.t_i, self.t_u)),
            Objective::ImpactMax => out.push_str(&format!(" eps={} t_u={}", self.eps, self.t_u)),
            Objective::WeightedCombo {
                lambda_u,
                lambda_i,
                lambda_b,
            } => out.push_str(&format!(" lambda=({lambda_u},{lambda_i},{lambda_b})")),
        }
        out.push_str(&format!(
            " tau_u={} tau_l={}",
            self.impact_params.tau_u, self.impact_params.tau_l
        ));
        out
    }
}

/// Per-group profiles `[A, B]` after checking the preconditions shared by
/// every program.
fn prepare<T: Scalar>(pop: &Population<T>, z: &Predictor<T>, spec: &OptimizationSpec) -> Result<Vec<GroupProfile<T>>> {
    spec.validate()?;
    pop.require_two_groups()?;
    let profiles = vec![GroupProfile::new(pop, z, Group::A)?, GroupProfile::new(pop, z, Group::B)?];
    for p in &profiles {
        let r = p.base_rate.to_f64_lossy();
        match spec.fairness_metric {
            FairnessMetric::Tpr if p.base_rate.is_zero() => {
                return Err(Error::DegenerateRate {
                    metric: "TPR",
                    group: p.group,
                    base_rate: r,
                })
            }
            FairnessMetric::Fpr if p.base_rate == T::one() => {
                return Err(Error::DegenerateRate {
                    metric: "FPR",
                    group: p.group,
                    base_rate: r,
                })
            }
            _ => {}
        }
    }
    Ok(profiles)
}

/// Coefficient vectors over the selection variables.
struct Forms<T> {
    utility: Vec<T>,
    impact_b: Vec<T>,
    /// `h_A - h_B`.
    disparity: Vec<T>,
}

/// `(group, score)` per selection variable: A's atoms then B's, each
/// descending by score.
fn variable_keys<T: Scalar>(profiles: &[GroupProfile<T>]) -> Vec<(Group, T)> {
    profiles
        .iter()
        .flat_map(|p| p.atoms.iter().map(move |(v, _)| (p.group, v.clone())))
        .collect()
}

fn h_coefficient<T: Scalar>(metric: FairnessMetric, p: &GroupProfile<T>, v: &T, m: &T) -> T {
    match metric {
        FairnessMetric::SelectionRate => m.clone(),
        FairnessMetric::Tpr => m.clone() * v.clone() / p.base_rate.clone(),
        FairnessMetric::Fpr => m.clone() * (T::one() - v.clone()) / (T::one() - p.base_rate.clone()),
    }
}

fn forms<T: Scalar>(profiles: &[GroupProfile<T>], spec: &OptimizationSpec) -> Forms<T> {
    let (tau_u, tau_l) = spec.impact_params.taus::<T>();
    let mut out = Forms {
        utility: Vec::new(),
        impact_b: Vec::new(),
        disparity: Vec::new(),
    };
    for p in profiles {
        for (v, m) in &p.atoms {
            out.utility
                .push(p.weight.clone() * m.clone() * (v.clone() - tau_u.clone()));
            out.impact_b.push(match p.group {
                Group::B => m.clone() * (v.clone() - tau_l.clone()),
                Group::A => T::zero(),
            });
            let h = h_coefficient(spec.fairness_metric, p, v, m);
            out.disparity.push(match p.group {
                Group::A => h,
                Group::B => -h,
            });
        }
    }
    out
}

fn terms<T: Scalar>(form: &[T]) -> Vec<(usize, T)> {
    form.iter()
        .cloned()
        .enumerate()
        .filter(|(_, c)| !c.is_zero())
        .collect()
}

fn skeleton<T: Scalar>(keys: &[(Group, T)], sense: Sense) -> LinearProgram<T> {
    let mut lp = LinearProgram::new(sense);
    for (g, v) in keys {
        lp.add_variable(format!("f({v},{g})"), Some(T::zero()), Some(T::one()));
    }
    lp
}

fn add_disparity_bound<T: Scalar>(lp: &mut LinearProgram<T>, disparity: &[T], eps: &T) {
    lp.add_constraint("disparity_upper", terms(disparity), Relation::Le, eps.clone());
    lp.add_constraint("disparity_lower", terms(disparity), Relation::Ge, -eps.clone());
}

/// Adds `t >= |h_A - h_B|` and returns the index of `t`.
fn add_disparity_epigraph<T: Scalar>(lp: &mut LinearProgram<T>, disparity: &[T]) -> usize {
    let t = lp.add_variable("t", Some(T::zero()), None);
    let mut upper = terms(disparity);
    upper.push((t, -T::one()));
    lp.add_constraint("t_above_disparity", upper, Relation::Le, T::zero());
    let mut lower = terms(disparity);
    lower.push((t, T::one()));
    lp.add_constraint("t_above_negated_disparity", lower, Relation::Ge, T::zero());
    t
}

/// A built program together with the variable layout.
#[derive(Clone, Debug)]
pub struct Formulation<T> {
    pub lp: LinearProgram<T>,
    /// `(group, score)` of the selection variable at each index.
    pub selection_vars: Vec<(Group, T)>,
    /// Auxiliary disparity variable, for disparity minimization and the
    /// weighted combination.
    pub aux: Option<usize>,
    pub profiles: Vec<GroupProfile<T>>,
}

/// Builds the linear program for `spec` over the support of `z`.
pub fn build_lp<T: Scalar>(pop: &Population<T>, z: &Predictor<T>, spec: &OptimizationSpec) -> Result<Formulation<T>> {
    let profiles = prepare(pop, z, spec)?;
    Ok(formulate(profiles, spec))
}

fn formulate<T: Scalar>(profiles: Vec<GroupProfile<T>>, spec: &OptimizationSpec) -> Formulation<T> {
    let keys = variable_keys(&profiles);
    let f = forms(&profiles, spec);
    let eps = T::from_f64_lossy(spec.eps);
    let t_i = T::from_f64_lossy(spec.t_i);
    let t_u = T::from_f64_lossy(spec.t_u);
    let sense = if spec.objective.minimizes() { Sense::Minimize } else { Sense::Maximize };
    let mut lp = skeleton(&keys, sense);
    let mut aux = None;
    match spec.objective {
        Objective::UtilityMax => {
            for (i, c) in f.utility.iter().enumerate() {
                lp.set_objective(i, c.clone());
            }
            lp.add_constraint("impact_floor", terms(&f.impact_b), Relation::Ge, t_i);
            add_disparity_bound(&mut lp, &f.disparity, &eps);
        }
        Objective::DisparityMin => {
            lp.add_constraint("impact_floor", terms(&f.impact_b), Relation::Ge, t_i);
            lp.add_constraint("utility_floor", terms(&f.utility), Relation::Ge, t_u);
            let t = add_disparity_epigraph(&mut lp, &f.disparity);
            lp.set_objective(t, T::one());
            aux = Some(t);
        }
        Objective::ImpactMax => {
            for (i, c) in f.impact_b.iter().enumerate() {
                lp.set_objective(i, c.clone());
            }
            lp.add_constraint("utility_floor", terms(&f.utility), Relation::Ge, t_u);
            add_disparity_bound(&mut lp, &f.disparity, &eps);
        }
        Objective::WeightedCombo {
            lambda_u,
            lambda_i,
            lambda_b,
        } => {
            let (lu, li, lb) = (
                T::from_f64_lossy(lambda_u),
                T::from_f64_lossy(lambda_i),
                T::from_f64_lossy(lambda_b),
            );
            for i in 0..keys.len() {
                lp.set_objective(i, lu.clone() * f.utility[i].clone() + li.clone() * f.impact_b[i].clone());
            }
            let t = add_disparity_epigraph(&mut lp, &f.disparity);
            lp.set_objective(t, -lb);
            aux = Some(t);
        }
    }
    Formulation {
        lp,
        selection_vars: keys,
        aux,
        profiles,
    }
}

/// `h_S` read off a group's statistics.
pub fn metric_value<T: Scalar>(metric: FairnessMetric, g: &GroupStats<T>) -> T {
    let undefined = |name| -> T { panic!("{name} undefined in group {}", g.group) };
    match metric {
        FairnessMetric::SelectionRate => g.beta.clone(),
        FairnessMetric::Tpr => g.tpr.clone().unwrap_or_else(|| undefined("TPR")),
        FairnessMetric::Fpr => g.fpr.clone().unwrap_or_else(|| undefined("FPR")),
    }
}

/// `|h_A - h_B|`.
pub fn disparity<T: Scalar>(metric: FairnessMetric, stats: &PolicyStats<T>) -> T {
    let a = stats.group(Group::A).expect("group A");
    let b = stats.group(Group::B).expect("group B");
    (metric_value(metric, a) - metric_value(metric, b)).abs()
}

/// The objective of `spec` at a policy with the given statistics.
pub fn objective_value<T: Scalar>(spec: &OptimizationSpec, stats: &PolicyStats<T>) -> T {
    let impact_b = stats.group(Group::B).expect("group B").impact.clone();
    match spec.objective {
        Objective::UtilityMax => stats.utility.clone(),
        Objective::DisparityMin => disparity(spec.fairness_metric, stats),
        Objective::ImpactMax => impact_b,
        Objective::WeightedCombo {
            lambda_u,
            lambda_i,
            lambda_b,
        } => {
            T::from_f64_lossy(lambda_u) * stats.utility.clone() + T::from_f64_lossy(lambda_i) * impact_b
                - T::from_f64_lossy(lambda_b) * disparity(spec.fairness_metric, stats)
        }
    }
}

/// Largest violation of the constraints of `spec` at the given statistics.
pub fn constraint_violation<T: Scalar>(spec: &OptimizationSpec, stats: &PolicyStats<T>) -> T {
    let impact_b = stats.group(Group::B).expect("group B").impact.clone();
    let eps = T::from_f64_lossy(spec.eps);
    let t_i = T::from_f64_lossy(spec.t_i);
    let t_u = T::from_f64_lossy(spec.t_u);
    let d = || disparity(spec.fairness_metric, stats);
    let parts = match spec.objective {
        Objective::UtilityMax => vec![t_i - impact_b, d() - eps],
        Objective::DisparityMin => vec![t_i - impact_b, t_u - stats.utility.clone()],
        Objective::ImpactMax => vec![t_u - stats.utility.clone(), d() - eps],
        Objective::WeightedCombo { .. } => vec![],
    };
    parts.into_iter().fold(T::zero(), |acc, x| acc.max_of(x))
}

/// Slack used when comparing floating-point values; zero for exact types.
fn slack<T: Scalar>(float: f64) -> T {
    if T::is_exact() {
        T::zero()
    } else {
        T::from_f64_lossy(float)
    }
}

fn better<T: Scalar>(spec: &OptimizationSpec, a: &T, b: &T, tol: &T) -> bool {
    if spec.objective.minimizes() {
        a.clone() < b.clone() - tol.clone()
    } else {
        a.clone() > b.clone() + tol.clone()
    }
}

fn stats_from_rates<T: Scalar>(profiles: &[GroupProfile<T>], rates: &[(T, T)], params: &ImpactParams) -> PolicyStats<T> {
    assemble(
        profiles
            .iter()
            .zip(rates)
            .map(|(p, (beta, pos))| p.stats(beta.clone(), pos.clone(), params))
            .collect(),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FloorCheck {
    pub constraint: String,
    pub floor: f64,
    /// Best value reachable on its own (under the disparity bound where the
    /// program has one).
    pub max_achievable: f64,
    pub reachable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Infeasibility {
    pub reason: String,
    pub checks: Vec<FloorCheck>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimizationResult<T> {
    pub spec: OptimizationSpec,
    pub predictor: String,
    pub status: LpStatus,
    /// `OPT(z)`.
    pub value: Option<T>,
    pub rule: Option<SelectionRule<T>>,
    pub stats: Option<PolicyStats<T>>,
    pub disparity: Option<T>,
    pub as_threshold: Option<ThresholdPolicy<T>>,
    pub threshold_stats: Option<PolicyStats<T>>,
    pub threshold_value: Option<T>,
    pub infeasibility: Option<Infeasibility>,
}

impl<T: Scalar> OptimizationResult<T> {
    fn unsolved(spec: &OptimizationSpec, z: &Predictor<T>, status: LpStatus, infeasibility: Option<Infeasibility>) -> Self {
        OptimizationResult {
            spec: *spec,
            predictor: z.name().to_string(),
            status,
            value: None,
            rule: None,
            stats: None,
            disparity: None,
            as_threshold: None,
            threshold_stats: None,
            threshold_value: None,
            infeasibility,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// The threshold policy that keeps `h_S` of a selection with statistics
/// `(beta, pos)` in each group, choosing the rate that is best for utility
/// and impact.
fn matched_threshold<T: Scalar>(metric: FairnessMetric, profile: &GroupProfile<T>, beta: &T, pos: &T) -> Threshold<T> {
    let rate = match metric {
        FairnessMetric::SelectionRate => beta.clone(),
        FairnessMetric::Tpr => profile.rate_for_positive(pos),
        FairnessMetric::Fpr => profile.rate_for_negative(&(beta.clone() - pos.clone())),
    };
    profile.threshold_for_rate(&rate)
}

fn rates_of<T: Scalar>(profile: &GroupProfile<T>, t: &Threshold<T>) -> (T, T) {
    profile.selected(|v| t.select(v))
}

/// Solves the program for `spec` under `z` with the simplex method and
/// converts the optimum into threshold form.
pub fn solve_optimization<T: Scalar>(
    pop: &Population<T>,
    z: &Predictor<T>,
    spec: &OptimizationSpec,
) -> Result<OptimizationResult<T>> {
    let form = build_lp(pop, z, spec)?;
    let sol = form.lp.solve();
    if sol.status != LpStatus::Optimal {
        let diagnosis = (sol.status == LpStatus::Infeasible).then(|| diagnose(&form.profiles, spec));
        return Ok(OptimizationResult::unsolved(spec, z, sol.status, diagnosis));
    }
    let params = &spec.impact_params;
    let mut entries = Vec::with_capacity(form.selection_vars.len());
    for ((group, v), x) in form.selection_vars.iter().zip(&sol.values) {
        entries.push(RuleEntry {
            group: *group,
            score: v.clone(),
            f: x.clone().clamp_unit(),
        });
    }
    let mut rates = Vec::new();
    let mut offset = 0;
    for p in &form.profiles {
        let fs = &entries[offset..offset + p.atoms.len()];
        offset += p.atoms.len();
        let mut beta = T::zero();
        let mut pos = T::zero();
        for ((v, m), e) in p.atoms.iter().zip(fs) {
            let w = m.clone() * e.f.clone();
            pos = pos + w.clone() * v.clone();
            beta = beta + w;
        }
        rates.push((beta, pos));
    }
    let stats = stats_from_rates(&form.profiles, &rates, params);
    let value = objective_value(spec, &stats);
    let lp_value = sol.objective.clone().expect("optimal");
    if (value.clone() - lp_value.clone()).abs() > slack::<T>(1e-9) {
        log::warn!("LP objective {lp_value} differs from recomputed value {value} for {}", spec.label());
    }

    // Threshold form: keep h in each group, move along the threshold curve.
    let thresholds: Vec<Threshold<T>> = form
        .profiles
        .iter()
        .zip(&rates)
        .map(|(p, (beta, pos))| matched_threshold(spec.fairness_metric, p, beta, pos))
        .collect();
    let t_rates: Vec<(T, T)> = form.profiles.iter().zip(&thresholds).map(|(p, t)| rates_of(p, t)).collect();
    let t_stats = stats_from_rates(&form.profiles, &t_rates, params);
    let t_value = objective_value(spec, &t_stats);
    let tol = slack::<T>(1e-9);
    let t_ok = constraint_violation(spec, &t_stats) <= tol && !better(spec, &value, &t_value, &tol);
    let (as_threshold, threshold_stats, threshold_value) = if t_ok {
        let mut it = thresholds.into_iter();
        let policy = ThresholdPolicy::new(it.next().expect("A"), it.next().expect("B"));
        (Some(policy), Some(t_stats), Some(t_value))
    } else {
        log::warn!("threshold extraction lost value for {}", spec.label());
        (None, None, None)
    };
    Ok(OptimizationResult {
        spec: *spec,
        predictor: z.name().to_string(),
        status: LpStatus::Optimal,
        disparity: Some(disparity(spec.fairness_metric, &stats)),
        value: Some(value),
        rule: Some(SelectionRule { entries }),
        stats: Some(stats),
        as_threshold,
        threshold_stats,
        threshold_value,
        infeasibility: None,
    })
}

/// Which floors of an infeasible program are unreachable.
fn diagnose<T: Scalar>(profiles: &[GroupProfile<T>], spec: &OptimizationSpec) -> Infeasibility {
    let keys = variable_keys(profiles);
    let f = forms(profiles, spec);
    let eps = T::from_f64_lossy(spec.eps);
    let best = |objective: &[T], parity: bool| -> f64 {
        let mut lp = skeleton(&keys, Sense::Maximize);
        for (i, c) in objective.iter().enumerate() {
            lp.set_objective(i, c.clone());
        }
        if parity {
            add_disparity_bound(&mut lp, &f.disparity, &eps);
        }
        lp.solve().objective.map(|v| v.to_f64_lossy()).unwrap_or(f64::NEG_INFINITY)
    };
    let check = |name: &str, floor: f64, max: f64| FloorCheck {
        constraint: name.to_string(),
        floor,
        max_achievable: max,
        reachable: max >= floor - 1e-9,
    };
    let checks = match spec.objective {
        Objective::UtilityMax => vec![check("impact_floor", spec.t_i, best(&f.impact_b, true))],
        Objective::ImpactMax => vec![check("utility_floor", spec.t_u, best(&f.utility, true))],
        Objective::DisparityMin => vec![
            check("impact_floor", spec.t_i, best(&f.impact_b, false)),
            check("utility_floor", spec.t_u, best(&f.utility, false)),
        ],
        Objective::WeightedCombo { .. } => vec![],
    };
    let unreachable: Vec<&str> = checks
        .iter()
        .filter(|c| !c.reachable)
        .map(|c| c.constraint.as_str())
        .collect();
    let reason = if unreachable.is_empty() {
        "floors are reachable separately but not jointly".to_string()
    } else {
        format!("unreachable: {}", unreachable.join(", "))
    };
    Infeasibility { reason, checks }
}

/// Affine function `a beta_A + b beta_B + c` on one rectangle of rate pairs.
#[derive(Clone, Debug)]
struct Affine<T> {
    a: T,
    b: T,
    c: T,
}

impl<T: Scalar> Affine<T> {
    fn sub(&self, other: &Affine<T>) -> Affine<T> {
        Affine {
            a: self.a.clone() - other.a.clone(),
            b: self.b.clone() - other.b.clone(),
            c: self.c.clone() - other.c.clone(),
        }
    }
}

/// One linear piece of `pos(beta)`: `[lo, hi]`, slope and intercept.
struct Segment<T> {
    lo: T,
    hi: T,
    slope: T,
    intercept: T,
}

fn segments<T: Scalar>(p: &GroupProfile<T>) -> Vec<Segment<T>> {
    let marks = p.breakpoints();
    let mut pos = T::zero();
    let mut out = Vec::with_capacity(p.atoms.len());
    for (k, (v, m)) in p.atoms.iter().enumerate() {
        let lo = marks[k].clone();
        out.push(Segment {
            intercept: pos.clone() - v.clone() * lo.clone(),
            lo,
            hi: marks[k + 1].clone(),
            slope: v.clone(),
        });
        pos = pos + m.clone() * v.clone();
    }
    out
}

/// Intersection of `l1 . x = r1` and `l2 . x = r2` in the rate plane.
fn intersect<T: Scalar>(l1: &(T, T, T), l2: &(T, T, T)) -> Option<(T, T)> {
    let det = l1.0.clone() * l2.1.clone() - l2.0.clone() * l1.1.clone();
    let tiny = slack::<T>(1e-14);
    if det.clone().abs() <= tiny {
        return None;
    }
    let x = (l1.2.clone() * l2.1.clone() - l2.2.clone() * l1.1.clone()) / det.clone();
    let y = (l1.0.clone() * l2.2.clone() - l2.0.clone() * l1.2.clone()) / det;
    Some((x, y))
}

/// Candidate rate pairs at vertices of the feasible polygon inside every
/// rectangle `segment_A x segment_B`.
fn vertex_candidates<T: Scalar>(profiles: &[GroupProfile<T>], spec: &OptimizationSpec) -> Vec<(T, T)> {
    let (tau_u, tau_l) = spec.impact_params.taus::<T>();
    let eps = T::from_f64_lossy(spec.eps);
    let t_i = T::from_f64_lossy(spec.t_i);
    let t_u = T::from_f64_lossy(spec.t_u);
    let (pa, pb) = (&profiles[0], &profiles[1]);
    let h_form = |p: &GroupProfile<T>, s: &Segment<T>| -> (T, T) {
        match spec.fairness_metric {
            FairnessMetric::SelectionRate => (T::one(), T::zero()),
            FairnessMetric::Tpr => (s.slope.clone() / p.base_rate.clone(), s.intercept.clone() / p.base_rate.clone()),
            FairnessMetric::Fpr => {
                let q = T::one() - p.base_rate.clone();
                ((T::one() - s.slope.clone()) / q.clone(), -s.intercept.clone() / q)
            }
        }
    };
    let mut out = Vec::new();
    let seg_a = segments(pa);
    let seg_b = segments(pb);
    for sa in &seg_a {
        for sb in &seg_b {
            let utility = Affine {
                a: pa.weight.clone() * (sa.slope.clone() - tau_u.clone()),
                b: pb.weight.clone() * (sb.slope.clone() - tau_u.clone()),
                c: pa.weight.clone() * sa.intercept.clone() + pb.weight.clone() * sb.intercept.clone(),
            };
            let impact = Affine {
                a: T::zero(),
                b: sb.slope.clone() - tau_l.clone(),
                c: sb.intercept.clone(),
            };
            let (ha, ca) = h_form(pa, sa);
            let (hb, cb) = h_form(pb, sb);
            let h_a = Affine { a: ha, b: T::zero(), c: ca };
            let h_b = Affine { a: T::zero(), b: hb, c: cb };
            let d = h_a.sub(&h_b);
            let line = |f: &Affine<T>, level: T| (f.a.clone(), f.b.clone(), level - f.c.clone());
            let lines = vec![
                (T::one(), T::zero(), sa.lo.clone()),
                (T::one(), T::zero(), sa.hi.clone()),
                (T::zero(), T::one(), sb.lo.clone()),
                (T::zero(), T::one(), sb.hi.clone()),
                line(&impact, t_i.clone()),
                line(&utility, t_u.clone()),
                line(&d, eps.clone()),
                line(&d, -eps.clone()),
                line(&d, T::zero()),
            ];
            let inside_tol = slack::<T>(1e-12);
            for i in 0..lines.len() {
                for j in i + 1..lines.len() {
                    let Some((x, y)) = intersect(&lines[i], &lines[j]) else { continue };
                    let inside = x >= sa.lo.clone() - inside_tol.clone()
                        && x <= sa.hi.clone() + inside_tol.clone()
                        && y >= sb.lo.clone() - inside_tol.clone()
                        && y <= sb.hi.clone() + inside_tol.clone();
                    if inside {
                        out.push((x.clamp_unit(), y.clamp_unit()));
                    }
                }
            }
        }
    }
    out
}

pub const SWEEP_GRID_POINTS: usize = 201;

/// Exhaustive search over per-group selection-rate pairs of threshold
/// policies with the default grid.
pub fn solve_by_sweep<T: Scalar>(
    pop: &Population<T>,
    z: &Predictor<T>,
    spec: &OptimizationSpec,
) -> Result<OptimizationResult<T>> {
    solve_by_sweep_with(pop, z, spec, SWEEP_GRID_POINTS)
}

/// As [`solve_by_sweep`] with `points` uniform rates per axis in addition to
/// every curve breakpoint and every vertex of the feasible region within
/// each linear piece.
pub fn solve_by_sweep_with<T: Scalar>(
    pop: &Population<T>,
    z: &Predictor<T>,
    spec: &OptimizationSpec,
    points: usize,
) -> Result<OptimizationResult<T>> {
    let profiles = prepare(pop, z, spec)?;
    let params = &spec.impact_params;
    let axis = |p: &GroupProfile<T>| -> Result<Vec<(T, T)>> {
        let grid = crate::policy::grid_with_breakpoints(points, &p.breakpoints())?;
        Ok(grid
            .into_iter()
            .map(|b| {
                let pos = p.positive_at(&b);
                (b, pos)
            })
            .collect())
    };
    let axis_a = axis(&profiles[0])?;
    let axis_b = axis(&profiles[1])?;
    let tol = slack::<T>(1e-9);
    let tie = slack::<T>(1e-12);

    let mut best: Option<(T, (T, T), (T, T))> = None;
    let mut consider = |ra: &(T, T), rb: &(T, T)| {
        let stats = stats_from_rates(&profiles, &[ra.clone(), rb.clone()], params);
        if constraint_violation(spec, &stats) > tol {
            return;
        }
        let value = objective_value(spec, &stats);
        let replace = match &best {
            None => true,
            Some((bv, a, b)) => {
                better(spec, &value, bv, &tie)
                    || (!better(spec, bv, &value, &tie) && (rb.0.clone(), ra.0.clone()) < (b.0.clone(), a.0.clone()))
            }
        };
        if replace {
            best = Some((value, ra.clone(), rb.clone()));
        }
    };
    for ra in &axis_a {
        for rb in &axis_b {
            consider(ra, rb);
        }
    }
    for (x, y) in vertex_candidates(&profiles, spec) {
        let ra = (x.clone(), profiles[0].positive_at(&x));
        let rb = (y.clone(), profiles[1].positive_at(&y));
        consider(&ra, &rb);
    }

    let Some((value, ra, rb)) = best else {
        let infeasibility = Infeasibility {
            reason: "no threshold-policy rate pair satisfies the constraints".to_string(),
            checks: Vec::new(),
        };
        return Ok(OptimizationResult::unsolved(spec, z, LpStatus::Infeasible, Some(infeasibility)));
    };
    let policy = ThresholdPolicy::new(
        profiles[0].threshold_for_rate(&ra.0),
        profiles[1].threshold_for_rate(&rb.0),
    );
    let stats = stats_from_rates(&profiles, &[ra, rb], params);
    let rule = SelectionRule::tabulate(pop, z, &policy)?;
    Ok(OptimizationResult {
        spec: *spec,
        predictor: z.name().to_string(),
        status: LpStatus::Optimal,
        disparity: Some(disparity(spec.fairness_metric, &stats)),
        value: Some(value.clone()),
        rule: Some(rule),
        stats: Some(stats.clone()),
        as_threshold: Some(policy),
        threshold_stats: Some(stats),
        threshold_value: Some(value),
        infeasibility: None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostOfFairness<T> {
    /// Best unconstrained utility under the true risks; absent without them.
    pub u_star: Option<T>,
    pub opt: Option<T>,
    pub cost: Option<T>,
    pub status: LpStatus,
    pub p_star_available: bool,
}

/// `U* - OPT(z)` for a utility-maximization spec.
pub fn cost_of_fairness<T: Scalar>(
    pop: &Population<T>,
    z: &Predictor<T>,
    spec: &OptimizationSpec,
    p_star_available: bool,
) -> Result<CostOfFairness<T>> {
    if spec.objective != Objective::UtilityMax {
        return Err(Error::InvalidParameter(
            "cost of fairness is defined for utility maximization".into(),
        ));
    }
    let result = solve_optimization(pop, z, spec)?;
    let u_star = p_star_available.then(|| {
        let tau_u = T::from_f64_lossy(spec.impact_params.tau_u);
        crate::scalar::sum(
            pop.cells()
                .iter()
                .map(|c| c.mass.clone() * (c.p_star.clone() - tau_u.clone()).max_of(T::zero())),
        )
    });
    let cost = match (&u_star, &result.value) {
        (Some(u), Some(v)) => Some(u.clone() - v.clone()),
        _ => None,
    };
    Ok(CostOfFairness {
        u_star,
        opt: result.value,
        cost,
        status: result.status,
        p_star_available,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessCase {
    MatchedRate,
    MatchedTpr,
    MatchedFpr,
}

/// A threshold policy under the refined predictor that keeps `h` in both
/// groups while not losing utility or group-B impact.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness<T> {
    pub case: WitnessCase,
    pub base_policy: ThresholdPolicy<T>,
    pub policy: ThresholdPolicy<T>,
    pub base_h: [T; 2],
    pub h: [T; 2],
    pub base_utility: T,
    pub utility: T,
    pub base_impact_b: T,
    pub impact_b: T,
    pub h_preserved: bool,
    pub utility_improved: bool,
    pub impact_improved: bool,
}

impl<T> Witness<T> {
    pub fn holds(&self) -> bool {
        self.h_preserved && self.utility_improved && self.impact_improved
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImprovementEntry<T> {
    pub spec: OptimizationSpec,
    pub label: String,
    pub base_status: LpStatus,
    pub refined_status: LpStatus,
    pub base_value: Option<T>,
    pub refined_value: Option<T>,
    /// `OPT(z') - OPT(z)` for maximization, `OPT(z) - OPT(z')` for
    /// disparity minimization.
    pub margin: Option<T>,
    pub witness: Option<Witness<T>>,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImprovementReport<T> {
    pub base: String,
    pub refined: String,
    pub entries: Vec<ImprovementEntry<T>>,
    pub tolerance: f64,
    pub holds: bool,
}

pub const IMPROVEMENT_TOLERANCE: f64 = 1e-8;
const WITNESS_TOLERANCE: f64 = 1e-10;

fn witness<T: Scalar>(
    base: &[GroupProfile<T>],
    refined: &[GroupProfile<T>],
    spec: &OptimizationSpec,
    base_policy: &ThresholdPolicy<T>,
) -> Witness<T> {
    let params = &spec.impact_params;
    let metric = spec.fairness_metric;
    let base_rates: Vec<(T, T)> = base.iter().map(|p| rates_of(p, base_policy.get(p.group))).collect();
    let thresholds: Vec<Threshold<T>> = refined
        .iter()
        .zip(&base_rates)
        .map(|(p, (beta, pos))| matched_threshold(metric, p, beta, pos))
        .collect();
    let rates: Vec<(T, T)> = refined.iter().zip(&thresholds).map(|(p, t)| rates_of(p, t)).collect();
    let s0 = stats_from_rates(base, &base_rates, params);
    let s1 = stats_from_rates(refined, &rates, params);
    let h = |s: &PolicyStats<T>| {
        [
            metric_value(metric, s.group(Group::A).expect("A")),
            metric_value(metric, s.group(Group::B).expect("B")),
        ]
    };
    let (base_h, new_h) = (h(&s0), h(&s1));
    let tol = slack::<T>(WITNESS_TOLERANCE);
    let h_preserved = base_h
        .iter()
        .zip(&new_h)
        .all(|(x, y)| (x.clone() - y.clone()).abs() <= tol);
    let imp = |s: &PolicyStats<T>| s.group(Group::B).expect("B").impact.clone();
    let mut it = thresholds.into_iter();
    Witness {
        case: match metric {
            FairnessMetric::SelectionRate => WitnessCase::MatchedRate,
            FairnessMetric::Tpr => WitnessCase::MatchedTpr,
            FairnessMetric::Fpr => WitnessCase::MatchedFpr,
        },
        base_policy: base_policy.clone(),
        policy: ThresholdPolicy::new(it.next().expect("A"), it.next().expect("B")),
        utility_improved: s1.utility >= s0.utility.clone() - tol.clone(),
        impact_improved: imp(&s1) >= imp(&s0) - tol,
        base_h,
        h: new_h,
        base_utility: s0.utility.clone(),
        utility: s1.utility.clone(),
        base_impact_b: imp(&s0),
        impact_b: imp(&s1),
        h_preserved,
    }
}

/// Solves every spec under `z` and its refinement `z_prime` and checks that
/// the optimum does not get worse, together with the matched-rate witness.
///
/// Fails with [`Error::ImprovementViolated`] on the first violation.
pub fn verify_improvement<T: Scalar>(
    pop: &Population<T>,
    z: &Predictor<T>,
    z_prime: &Predictor<T>,
    specs: &[OptimizationSpec],
) -> Result<ImprovementReport<T>> {
    pop.require_two_groups()?;
    require_refinement(
        pop,
        z,
        z_prime,
        &Scope::groups(),
        DEFAULT_CALIBRATION_TOLERANCE,
    )?;
    let tol = slack::<T>(IMPROVEMENT_TOLERANCE);
    let mut entries = Vec::with_capacity(specs.len());
    for spec in specs {
        let base = solve_optimization(pop, z, spec)?;
        let refined = solve_optimization(pop, z_prime, spec)?;
        let margin = match (&base.value, &refined.value) {
            (Some(b), Some(r)) if spec.objective.minimizes() => Some(b.clone() - r.clone()),
            (Some(b), Some(r)) => Some(r.clone() - b.clone()),
            _ => None,
        };
        let witness = match &base.as_threshold {
            Some(policy) => {
                let bp = prepare(pop, z, spec)?;
                let rp = prepare(pop, z_prime, spec)?;
                Some(witness(&bp, &rp, spec, policy))
            }
            None => None,
        };
        let value_ok = match (&base.value, &margin) {
            (None, _) => true,
            (Some(_), Some(m)) => *m >= -tol.clone(),
            (Some(_), None) => false,
        };
        let witness_ok = base.value.is_none() || witness.as_ref().is_some_and(|w| w.holds());
        let holds = value_ok && witness_ok;
        if !holds {
            return Err(Error::ImprovementViolated {
                spec: spec.label(),
                detail: format!(
                    "OPT(z) = {:?}, OPT(z') = {:?}, margin = {:?}, witness = {}",
                    base.value.as_ref().map(|v| v.to_f64_lossy()),
                    refined.value.as_ref().map(|v| v.to_f64_lossy()),
                    margin.as_ref().map(|v| v.to_f64_lossy()),
                    match &witness {
                        None => "missing".to_string(),
                        Some(w) => format!(
                            "h_preserved={} utility_improved={} impact_improved={}",
                            w.h_preserved, w.utility_improved, w.impact_improved
                        ),
                    }
                ),
            });
        }
        entries.push(ImprovementEntry {
            spec: *spec,
            label: spec.label(),
            base_status: base.status,
            refined_status: refined.status,
            base_value: base.value,
            refined_value: refined.value,
            margin,
            witness,
            holds,
        });
    }
    Ok(ImprovementReport {
        base: z.name().to_string(),
        refined: z_prime.name().to_string(),
        holds: entries.iter().all(|e| e.holds),
        entries,
        tolerance: IMPROVEMENT_TOLERANCE,
    })
}

/// Every objective kind crossed with every fairness metric, sharing the
/// given parameters. The weighted combination uses `lambdas`.
pub fn spec_matrix(
    params: ImpactParams,
    eps: f64,
    t_i: f64,
    t_u: f64,
    lambdas: (f64, f64, f64),
) -> Vec<OptimizationSpec> {
    let objectives = [
        Objective::UtilityMax,
        Objective::DisparityMin,
        Objective::ImpactMax,
        Objective::WeightedCombo {
            lambda_u: lambdas.0,
            lambda_i: lambdas.1,
            lambda_b: lambdas.2,
        },
    ];
    let mut out = Vec::new();
    for objective in objectives {
        for metric in FairnessMetric::ALL {
            out.push(OptimizationSpec {
                objective,
                fairness_metric: metric,
                eps,
                t_i,
                t_u,
                impact_params: params,
            });
        }
    }
    out
}
