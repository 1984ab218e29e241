//! Request-independent operations whose outputs the HTTP endpoints and the
//! command line both emit.

use std::borrow::Cow;

use serde::Serialize;

use infofair::information::{check_calibration, information_report, CalibrationReport, InformationReport, DEFAULT_CALIBRATION_TOLERANCE};
use infofair::optimize::{solve_optimization, verify_improvement, ImprovementReport, OptimizationResult, OptimizationSpec};
use infofair::policy::{grid_with_breakpoints, sweep_curves, CurveRow};
use infofair::refinement::{merge_oracle, MergeReport};
use infofair::{Group, GroupProfile, Instance64, Predictor64, Result, Scope, Scopes};

/// Looks up a declared predictor; `p_star` falls back to the true risks.
pub fn predictor<'a>(instance: &'a Instance64, name: &str) -> Result<Cow<'a, Predictor64>> {
    match instance.predictor(name) {
        Ok(p) => Ok(Cow::Borrowed(p)),
        Err(_) if name == "p_star" => Ok(Cow::Owned(instance.population.p_star_predictor().renamed("p_star"))),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScopeAudit {
    pub scope: Scope,
    pub calibration: CalibrationReport<f64>,
    /// Absent when the predictor is not calibrated on this scope.
    pub information: Option<InformationReport<f64>>,
    pub information_error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PredictorAudit {
    pub predictor: String,
    pub scopes: Vec<ScopeAudit>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AuditReport {
    pub predictors: Vec<PredictorAudit>,
}

/// Calibration and information reports for one predictor, or for every
/// declared predictor when `name` is `None`, on `scope` or on every
/// nonempty scope.
pub fn audit(
    instance: &Instance64,
    name: Option<&str>,
    scope: Option<Scope>,
    reference: Option<&str>,
) -> Result<AuditReport> {
    let pop = &instance.population;
    let names: Vec<String> = match name {
        Some(n) => vec![n.to_string()],
        None => instance.predictors.keys().cloned().collect(),
    };
    let reference = reference.map(|r| predictor(instance, r)).transpose()?;
    let scopes = match scope {
        Some(s) => vec![s],
        None => {
            let mut all = vec![Scope::All];
            all.extend(Scopes::PerGroup.resolve(pop));
            all
        }
    };
    let mut predictors = Vec::with_capacity(names.len());
    for n in names {
        let z = predictor(instance, &n)?;
        let mut out = Vec::with_capacity(scopes.len());
        for &s in &scopes {
            let calibration = check_calibration(pop, &z, s, DEFAULT_CALIBRATION_TOLERANCE)?;
            let (information, information_error) = match information_report(pop, &z, s, reference.as_deref()) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            out.push(ScopeAudit {
                scope: s,
                calibration,
                information,
                information_error,
            });
        }
        predictors.push(PredictorAudit {
            predictor: n,
            scopes: out,
        });
    }
    Ok(AuditReport { predictors })
}

pub const DEFAULT_CURVE_POINTS: usize = 1001;
pub const MAX_CURVE_POINTS: usize = 100_001;

#[derive(Clone, Debug, Serialize)]
pub struct Curves {
    pub predictor: String,
    pub group: Group,
    pub rows: Vec<CurveRow<f64>>,
}

/// Threshold curves of one group on a uniform grid plus the curve's
/// breakpoints.
pub fn curves(instance: &Instance64, name: &str, group: Group, points: usize) -> Result<Curves> {
    if points > MAX_CURVE_POINTS {
        return Err(infofair::Error::InvalidParameter(format!(
            "at most {MAX_CURVE_POINTS} points, got {points}"
        )));
    }
    let z = predictor(instance, name)?;
    if !instance.population.has_group(group) {
        return Err(infofair::Error::EmptyScope(Scope::Group(group)));
    }
    let profile = GroupProfile::new(&instance.population, &z, group)?;
    let grid = grid_with_breakpoints(points, &profile.breakpoints())?;
    let rows = sweep_curves(&instance.population, &z, group, &grid)?;
    Ok(Curves {
        predictor: name.to_string(),
        group,
        rows,
    })
}

pub fn optimize(instance: &Instance64, name: &str, spec: &OptimizationSpec) -> Result<OptimizationResult<f64>> {
    let z = predictor(instance, name)?;
    solve_optimization(&instance.population, &z, spec)
}

#[derive(Clone, Debug, Serialize)]
pub struct Merged {
    /// Name the merged predictor was stored under.
    pub predictor: String,
    pub report: MergeReport<f64>,
}

/// Exact merge of two declared predictors; returns the instance extended by
/// the result under a name not yet taken.
pub fn merge(instance: &Instance64, z: &str, q: &str, per_group: bool) -> Result<(Instance64, Merged)> {
    let zp = predictor(instance, z)?;
    let qp = predictor(instance, q)?;
    let scopes = if per_group { Scopes::PerGroup } else { Scopes::All };
    let report = merge_oracle(&instance.population, &zp, &qp, scopes)?;
    let base = report.result.name().to_string();
    let mut name = base.clone();
    let mut k = 2;
    while instance.predictors.contains_key(&name) {
        name = format!("{base}#{k}");
        k += 1;
    }
    let extended = instance.clone().with_predictor(report.result.clone().renamed(name.clone()));
    Ok((extended, Merged { predictor: name, report }))
}

pub fn compare(
    instance: &Instance64,
    base: &str,
    refined: &str,
    spec: &OptimizationSpec,
) -> Result<ImprovementReport<f64>> {
    let z = predictor(instance, base)?;
    let zp = predictor(instance, refined)?;
    verify_improvement(&instance.population, &z, &zp, std::slice::from_ref(spec))
}
