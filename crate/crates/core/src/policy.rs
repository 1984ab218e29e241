//! Selection policies over `(score, group)` and the per-group statistics
//! they induce: selection rate, TPR, FPR, PPV, utility and impact.
//!
//! For a calibrated predictor every statistic of a policy in group `S` is a
//! function of two numbers: the selected mass `beta = sum m(v) f(v)` and the
//! selected positive mass `pos = sum m(v) f(v) v`, where `m` is the score
//! distribution inside `S`. Threshold policies trace the concave curve
//! `pos(beta)`, which is piecewise linear with one segment per score.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::information::{require_calibrated, DEFAULT_CALIBRATION_TOLERANCE};
use crate::population::{score_distribution, Group, Population, Predictor, Scope};
use crate::refinement::require_refinement;
use crate::scalar::{format_sig, Scalar};

/// Lender threshold `tau_u` and impact threshold `tau_l`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpactParams {
    pub tau_u: f64,
    pub tau_l: f64,
    /// Require `tau_u > tau_l`.
    #[serde(default)]
    pub risk_averse: bool,
}

impl ImpactParams {
    pub fn new(tau_u: f64, tau_l: f64) -> Self {
        ImpactParams {
            tau_u,
            tau_l,
            risk_averse: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, tau) in [("tau_u", self.tau_u), ("tau_l", self.tau_l)] {
            if !(0.0..=1.0).contains(&tau) {
                return Err(Error::InvalidParameter(format!("{name} must lie in [0, 1], got {tau}")));
            }
        }
        if self.risk_averse && self.tau_u <= self.tau_l {
            return Err(Error::InvalidParameter(format!(
                "risk-averse parameters need tau_u > tau_l, got {} <= {}",
                self.tau_u, self.tau_l
            )));
        }
        Ok(())
    }

    pub(crate) fn taus<T: Scalar>(&self) -> (T, T) {
        (T::from_f64_lossy(self.tau_u), T::from_f64_lossy(self.tau_l))
    }
}

/// Threshold with randomized tie-break: select `v > tau` always and
/// `v = tau` with probability `p`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Threshold<T> {
    pub tau: T,
    pub p: T,
}

impl<T: Scalar> Threshold<T> {
    pub fn new(tau: T, p: T) -> Result<Self> {
        for (name, x) in [("tau", &tau), ("p", &p)] {
            if *x < T::zero() || *x > T::one() {
                return Err(Error::InvalidParameter(format!("threshold {name} must lie in [0, 1], got {x}")));
            }
        }
        Ok(Threshold { tau, p })
    }

    pub fn nothing() -> Self {
        Threshold {
            tau: T::one(),
            p: T::zero(),
        }
    }

    pub fn everything() -> Self {
        Threshold {
            tau: T::zero(),
            p: T::one(),
        }
    }

    pub fn select(&self, v: &T) -> T {
        if *v > self.tau {
            T::one()
        } else if *v == self.tau {
            self.p.clone()
        } else {
            T::zero()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThresholdPolicy<T> {
    #[serde(rename = "A")]
    pub a: Threshold<T>,
    #[serde(rename = "B")]
    pub b: Threshold<T>,
}

impl<T: Scalar> ThresholdPolicy<T> {
    pub fn new(a: Threshold<T>, b: Threshold<T>) -> Self {
        ThresholdPolicy { a, b }
    }

    /// The same threshold in both groups.
    pub fn uniform(tau: T, p: T) -> Result<Self> {
        let t = Threshold::new(tau, p)?;
        Ok(ThresholdPolicy { a: t.clone(), b: t })
    }

    pub fn get(&self, group: Group) -> &Threshold<T> {
        match group {
            Group::A => &self.a,
            Group::B => &self.b,
        }
    }

    pub fn get_mut(&mut self, group: Group) -> &mut Threshold<T> {
        match group {
            Group::A => &mut self.a,
            Group::B => &mut self.b,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RuleEntry<T> {
    pub group: Group,
    pub score: T,
    pub f: T,
}

/// Explicit table `f(v, S)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelectionRule<T> {
    pub entries: Vec<RuleEntry<T>>,
}

impl<T: Scalar> SelectionRule<T> {
    pub fn new(entries: Vec<RuleEntry<T>>) -> Result<Self> {
        for e in &entries {
            if e.f < T::zero() || e.f > T::one() {
                return Err(Error::InvalidParameter(format!(
                    "selection probability for score {} in group {} must lie in [0, 1], got {}",
                    e.score, e.group, e.f
                )));
            }
        }
        Ok(SelectionRule { entries })
    }

    /// Tabulates `selection` on the support of `z` in every nonempty group.
    pub fn tabulate(pop: &Population<T>, z: &Predictor<T>, selection: &impl Selection<T>) -> Result<Self> {
        let mut entries = Vec::new();
        for group in Group::ALL {
            if !pop.has_group(group) {
                continue;
            }
            for v in z.support(pop, Scope::Group(group)) {
                let f = selection.probability(group, &v)?;
                entries.push(RuleEntry { group, score: v, f });
            }
        }
        SelectionRule::new(entries)
    }
}

/// Anything that maps `(group, score)` to a selection probability.
pub trait Selection<T> {
    fn probability(&self, group: Group, score: &T) -> Result<T>;
}

impl<T: Scalar> Selection<T> for ThresholdPolicy<T> {
    fn probability(&self, group: Group, score: &T) -> Result<T> {
        Ok(self.get(group).select(score))
    }
}

impl<T: Scalar> Selection<T> for SelectionRule<T> {
    fn probability(&self, group: Group, score: &T) -> Result<T> {
        self.entries
            .iter()
            .find(|e| e.group == group && e.score == *score)
            .map(|e| e.f.clone())
            .ok_or_else(|| Error::MissingRuleEntry {
                score: score.to_f64_lossy(),
                group,
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupStats<T> {
    pub group: Group,
    /// `Pr[x in S]`.
    pub weight: T,
    pub base_rate: T,
    pub beta: T,
    /// Undefined when the base rate is 0.
    pub tpr: Option<T>,
    /// Undefined when the base rate is 1.
    pub fpr: Option<T>,
    /// Undefined when nothing is selected.
    pub ppv: Option<T>,
    /// `sum m(v) f(v) (v - tau_u)`, before weighting by `Pr[x in S]`.
    pub utility: T,
    pub impact: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolicyStats<T> {
    /// Nonempty groups only.
    pub groups: Vec<GroupStats<T>>,
    pub utility: T,
}

impl<T: Scalar> PolicyStats<T> {
    pub fn group(&self, group: Group) -> Option<&GroupStats<T>> {
        self.groups.iter().find(|g| g.group == group)
    }
}

/// Score distribution of a calibrated predictor inside one group, with the
/// selection-rate curve machinery.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupProfile<T> {
    pub group: Group,
    pub weight: T,
    pub base_rate: T,
    /// `(score, conditional mass)`, descending by score.
    pub atoms: Vec<(T, T)>,
}

impl<T: Scalar> GroupProfile<T> {
    /// Requires `z` calibrated on `group`.
    pub fn new(pop: &Population<T>, z: &Predictor<T>, group: Group) -> Result<Self> {
        let scope = Scope::Group(group);
        require_calibrated(pop, z, scope, DEFAULT_CALIBRATION_TOLERANCE)?;
        Self::unchecked(pop, z, group)
    }

    pub(crate) fn unchecked(pop: &Population<T>, z: &Predictor<T>, group: Group) -> Result<Self> {
        let scope = Scope::Group(group);
        let dist = score_distribution(pop, z, scope)?;
        let base_rate = dist.expect(|v| v.clone());
        let mut atoms = dist.entries;
        atoms.reverse();
        Ok(GroupProfile {
            group,
            weight: pop.scope_mass(scope),
            base_rate,
            atoms,
        })
    }

    /// Cumulative selected mass at the end of each atom, starting at 0 and
    /// ending at exactly 1.
    pub fn breakpoints(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.atoms.len() + 1);
        let mut cum = T::zero();
        out.push(cum.clone());
        for (_, m) in &self.atoms {
            cum = cum + m.clone();
            out.push(cum.clone());
        }
        *out.last_mut().expect("nonempty") = T::one();
        out
    }

    /// The threshold policy with selection rate exactly `beta`.
    pub fn threshold_for_rate(&self, beta: &T) -> Threshold<T> {
        if *beta <= T::zero() {
            return Threshold::nothing();
        }
        if *beta >= T::one() {
            return Threshold::everything();
        }
        let mut cum = T::zero();
        for (v, m) in &self.atoms {
            let next = cum.clone() + m.clone();
            if next >= *beta {
                let p = ((beta.clone() - cum) / m.clone()).clamp_unit();
                return Threshold { tau: v.clone(), p };
            }
            cum = next;
        }
        let (v, _) = self.atoms.last().expect("nonempty group");
        Threshold {
            tau: v.clone(),
            p: T::one(),
        }
    }

    /// `(beta, pos)` of an arbitrary selection.
    pub fn selected(&self, f: impl Fn(&T) -> T) -> (T, T) {
        let mut beta = T::zero();
        let mut pos = T::zero();
        for (v, m) in &self.atoms {
            let w = m.clone() * f(v);
            pos = pos + w.clone() * v.clone();
            beta = beta + w;
        }
        (beta, pos)
    }

    /// Selected positive mass of the threshold policy with rate `beta`.
    pub fn positive_at(&self, beta: &T) -> T {
        let t = self.threshold_for_rate(beta);
        self.selected(|v| t.select(v)).1
    }

    /// Smallest rate whose threshold policy reaches positive mass `target`.
    pub fn rate_for_positive(&self, target: &T) -> T {
        if *target <= T::zero() {
            return T::zero();
        }
        let mut cum_beta = T::zero();
        let mut cum_pos = T::zero();
        let mut last_useful = T::zero();
        for (v, m) in &self.atoms {
            if v.is_zero() {
                break;
            }
            let gain = m.clone() * v.clone();
            if cum_pos.clone() + gain.clone() >= *target {
                let beta = cum_beta + (target.clone() - cum_pos) / v.clone();
                return beta.clamp_unit();
            }
            cum_beta = cum_beta + m.clone();
            cum_pos = cum_pos + gain;
            last_useful = cum_beta.clone();
        }
        last_useful.clamp_unit()
    }

    /// Largest rate whose threshold policy keeps selected negative mass at
    /// `target`.
    pub fn rate_for_negative(&self, target: &T) -> T {
        let mut cum_beta = T::zero();
        let mut cum_neg = T::zero();
        for (v, m) in &self.atoms {
            let slope = T::one() - v.clone();
            let gain = m.clone() * slope.clone();
            if cum_neg.clone() + gain.clone() > *target {
                let extra = (target.clone() - cum_neg).max_of(T::zero());
                return (cum_beta + extra / slope).clamp_unit();
            }
            cum_beta = cum_beta + m.clone();
            cum_neg = cum_neg + gain;
        }
        T::one()
    }

    /// Statistics of a selection with rate `beta` and positive mass `pos`.
    pub fn stats(&self, beta: T, pos: T, params: &ImpactParams) -> GroupStats<T> {
        let (tau_u, tau_l) = params.taus::<T>();
        let r = self.base_rate.clone();
        let neg = beta.clone() - pos.clone();
        let tpr = if r.is_zero() { None } else { Some(pos.clone() / r.clone()) };
        let one_minus_r = T::one() - r.clone();
        let fpr = if one_minus_r.is_zero() { None } else { Some(neg / one_minus_r) };
        let ppv = if beta.is_zero() { None } else { Some(pos.clone() / beta.clone()) };
        GroupStats {
            group: self.group,
            weight: self.weight.clone(),
            base_rate: r,
            utility: pos.clone() - tau_u * beta.clone(),
            impact: pos - tau_l * beta.clone(),
            beta,
            tpr,
            fpr,
            ppv,
        }
    }

    /// Curve row of the threshold policy with rate `beta`.
    pub fn curve_row(&self, beta: &T) -> CurveRow<T> {
        let t = self.threshold_for_rate(beta);
        let (b, pos) = self.selected(|v| t.select(v));
        let stats = self.stats(b, pos, &ImpactParams::new(0.0, 0.0));
        CurveRow {
            beta: beta.clone(),
            tpr: stats.tpr,
            fpr: stats.fpr,
            ppv: stats.ppv,
        }
    }
}

/// Profiles for every nonempty group, checking calibration on each.
pub fn group_profiles<T: Scalar>(pop: &Population<T>, z: &Predictor<T>) -> Result<Vec<GroupProfile<T>>> {
    Group::ALL
        .into_iter()
        .filter(|g| pop.has_group(*g))
        .map(|g| GroupProfile::new(pop, z, g))
        .collect()
}

pub(crate) fn assemble<T: Scalar>(groups: Vec<GroupStats<T>>) -> PolicyStats<T> {
    let utility = crate::scalar::sum(groups.iter().map(|g| g.weight.clone() * g.utility.clone()));
    PolicyStats { groups, utility }
}

/// Statistics of `selection` applied to `z`, which must be calibrated on
/// every nonempty group.
pub fn evaluate<T: Scalar>(
    pop: &Population<T>,
    z: &Predictor<T>,
    selection: &impl Selection<T>,
    params: &ImpactParams,
) -> Result<PolicyStats<T>> {
    params.validate()?;
    let mut groups = Vec::new();
    for profile in group_profiles(pop, z)? {
        let mut fs = Vec::with_capacity(profile.atoms.len());
        for (v, _) in &profile.atoms {
            fs.push(selection.probability(profile.group, v)?);
        }
        let mut beta = T::zero();
        let mut pos = T::zero();
        for ((v, m), f) in profile.atoms.iter().zip(fs) {
            let w = m.clone() * f;
            pos = pos + w.clone() * v.clone();
            beta = beta + w;
        }
        groups.push(profile.stats(beta, pos, params));
    }
    Ok(assemble(groups))
}

/// `(tau, p)` selecting exactly a `beta` fraction of `group`.
pub fn threshold_for_rate<T: Scalar>(
    pop: &Population<T>,
    z: &Predictor<T>,
    group: Group,
    beta: &T,
) -> Result<Threshold<T>> {
    if !pop.has_group(group) {
        return Err(Error::EmptyScope(Scope::Group(group)));
    }
    Ok(GroupProfile::unchecked(pop, z, group)?.threshold_for_rate(beta))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveRow<T> {
    pub beta: T,
    pub tpr: Option<T>,
    pub fpr: Option<T>,
    pub ppv: Option<T>,
}

/// `k / (points - 1)` for `k = 0..points`.
pub fn uniform_grid<T: Scalar>(points: usize) -> Result<Vec<T>> {
    if points < 2 {
        return Err(Error::InvalidParameter(format!("grid needs at least 2 points, got {points}")));
    }
    let n = (points - 1) as i64;
    Ok((0..=n).map(|k| T::from_ratio(k, n)).collect())
}

/// Uniform grid merged with the given breakpoints, ascending and deduplicated.
pub fn grid_with_breakpoints<T: Scalar>(points: usize, breakpoints: &[T]) -> Result<Vec<T>> {
    let mut out = uniform_grid(points)?;
    out.extend(breakpoints.iter().cloned());
    out.sort_by(|a, b| a.partial_cmp(b).expect("comparable"));
    out.dedup();
    Ok(out)
}

/// Threshold-policy curves of `z` in `group` at each rate in `grid`.
pub fn sweep_curves<T: Scalar>(
    pop: &Population<T>,
    z: &Predictor<T>,
    group: Group,
    grid: &[T],
) -> Result<Vec<CurveRow<T>>> {
    if !pop.has_group(group) {
        return Err(Error::EmptyScope(Scope::Group(group)));
    }
    let profile = GroupProfile::new(pop, z, group)?;
    Ok(grid.iter().map(|b| profile.curve_row(b)).collect())
}

/// `beta,tpr,fpr,ppv` with 12 significant digits; undefined cells are empty.
pub fn curves_csv<T: Scalar>(rows: &[CurveRow<T>]) -> String {
    let cell = |x: &Option<T>| x.as_ref().map(|v| format_sig(v.to_f64_lossy(), 12)).unwrap_or_default();
    let mut out = String::from("beta,tpr,fpr,ppv\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            format_sig(row.beta.to_f64_lossy(), 12),
            cell(&row.tpr),
            cell(&row.fpr),
            cell(&row.ppv)
        ));
    }
    out
}

/// Worst (smallest) margin of one inequality and the rate where it occurs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Margin<T> {
    pub beta: T,
    pub margin: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupDominance<T> {
    pub group: Group,
    pub points: usize,
    /// `TPR'(beta) - TPR(beta)`.
    pub tpr: Option<Margin<T>>,
    /// `FPR(beta) - FPR'(beta)`.
    pub fpr: Option<Margin<T>>,
    /// `PPV'(beta) - PPV(beta)`, over `beta > 0`.
    pub ppv: Option<Margin<T>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DominanceReport<T> {
    pub base: String,
    pub refined: String,
    pub groups: Vec<GroupDominance<T>>,
    pub tolerance: f64,
    pub holds: bool,
}

pub const DOMINANCE_TOLERANCE: f64 = 1e-10;

fn keep_worst<T: Scalar>(slot: &mut Option<Margin<T>>, beta: &T, margin: Option<T>) {
    let Some(margin) = margin else { return };
    if slot.as_ref().is_none_or(|m| margin < m.margin) {
        *slot = Some(Margin {
            beta: beta.clone(),
            margin,
        });
    }
}

/// Checks that the threshold curves of `z_prime` dominate those of `z` in
/// each group, at every grid rate and every breakpoint of either curve.
pub fn dominance_check<T: Scalar>(
    pop: &Population<T>,
    z: &Predictor<T>,
    z_prime: &Predictor<T>,
    groups: &[Group],
    points: usize,
) -> Result<DominanceReport<T>> {
    let scopes: Vec<Scope> = groups.iter().map(|g| Scope::Group(*g)).collect();
    require_refinement(pop, z, z_prime, &scopes, DEFAULT_CALIBRATION_TOLERANCE)?;
    let mut out = Vec::new();
    for &group in groups {
        let base = GroupProfile::unchecked(pop, z, group)?;
        let refined = GroupProfile::unchecked(pop, z_prime, group)?;
        let mut marks = base.breakpoints();
        marks.extend(refined.breakpoints());
        let grid = grid_with_breakpoints(points, &marks)?;
        let mut report = GroupDominance {
            group,
            points: grid.len(),
            tpr: None,
            fpr: None,
            ppv: None,
        };
        for beta in &grid {
            let a = base.curve_row(beta);
            let b = refined.curve_row(beta);
            let diff = |x: Option<T>, y: Option<T>| x.zip(y).map(|(x, y)| x - y);
            keep_worst(&mut report.tpr, beta, diff(b.tpr, a.tpr));
            keep_worst(&mut report.fpr, beta, diff(a.fpr, b.fpr));
            keep_worst(&mut report.ppv, beta, diff(b.ppv, a.ppv));
        }
        out.push(report);
    }
    let holds = out.iter().all(|g| {
        [&g.tpr, &g.fpr, &g.ppv]
            .into_iter()
            .flatten()
            .all(|m| m.margin.to_f64_lossy() >= -DOMINANCE_TOLERANCE)
    });
    Ok(DominanceReport {
        base: z.name().to_string(),
        refined: z_prime.name().to_string(),
        groups: out,
        tolerance: DOMINANCE_TOLERANCE,
        holds,
    })
}
