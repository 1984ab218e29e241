//! Seeded property suites behind `infofair verify`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use infofair::information::{
    check_calibration, entropic_information_content, entropic_information_loss, information_content, information_loss,
};
use infofair::optimize::{spec_matrix, verify_improvement};
use infofair::policy::dominance_check;
use infofair::refinement::{
    draw_samples, feature_predictor, is_refinement, merge_from_samples, merge_oracle, SampleBudget,
};
use infofair::synth::{random_calibrated_predictor, random_population, random_refinement_pair, GeneratorParams};
use infofair::{Cell, Group, ImpactParams, Population, Result, Scope, Scopes};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    /// Optimal values do not get worse under refinement.
    Improve,
    /// Threshold curves of a refinement dominate.
    Improv,
    /// Information loss equals the gap in content for refinements.
    Identities,
    /// Merged predictors refine both inputs and meet the gain bound.
    Merge,
    /// Sample-mode merging recovers every crossed-cell mean.
    Samples,
}

#[derive(Clone, Debug, Serialize)]
pub struct Failure {
    pub seed: u64,
    pub message: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seeds: u64,
    pub checks: u64,
    pub failures: Vec<Failure>,
    pub passed: bool,
    /// Free-form summary line.
    pub summary: String,
}

fn params(seed: u64) -> GeneratorParams {
    let mut p = GeneratorParams::new(seed);
    p.cells_per_group = 3 + (seed % 5) as usize;
    p
}

type SeedOutcome = std::result::Result<u64, String>;

fn improve(seed: u64) -> Result<SeedOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau_u = rng.random_range(20..=90) as f64 / 100.0;
    let tau_l = rng.random_range(0..=(tau_u * 100.0) as i64) as f64 / 100.0;
    let eps = [0.0, 0.05, 0.2, 1.0][rng.random_range(0..4)];
    let specs = spec_matrix(ImpactParams::new(tau_u, tau_l), eps, 0.0, -1.0, (1.0, 0.5, 0.5));
    let (pop, z, zp) = random_refinement_pair::<f64>(&params(seed))?;
    Ok(match verify_improvement(&pop, &z, &zp, &specs) {
        Ok(r) => Ok(r.entries.len() as u64),
        Err(e) => Err(e.to_string()),
    })
}

fn improv(seed: u64) -> Result<SeedOutcome> {
    let (pop, z, zp) = random_refinement_pair::<f64>(&params(seed))?;
    let report = dominance_check(&pop, &z, &zp, &[Group::A, Group::B], 101)?;
    Ok(if report.holds {
        Ok(report.groups.iter().map(|g| g.points as u64).sum())
    } else {
        Err(format!("dominance fails: {:?}", report.groups))
    })
}

fn identities(seed: u64) -> Result<SeedOutcome> {
    let (pop, z, zp) = random_refinement_pair::<f64>(&params(seed))?;
    let p_star = pop.p_star_predictor();
    let mut checks = 0;
    for scope in [Scope::All, Scope::Group(Group::A), Scope::Group(Group::B)] {
        for reference in [&zp, &p_star] {
            let loss = information_loss(&pop, reference, &z, scope)?.value;
            let gap = information_content(&pop, reference, scope)? - information_content(&pop, &z, scope)?;
            let ent = entropic_information_loss(&pop, reference, &z, scope)?.value;
            let ent_gap = entropic_information_content(&pop, reference, scope)?
                - entropic_information_content(&pop, &z, scope)?;
            for (name, a, b) in [("variance", loss, gap), ("entropic", ent, ent_gap)] {
                checks += 1;
                if (a - b).abs() > 1e-10 {
                    return Ok(Err(format!("{name} identity on {scope} vs {}: {a} != {b}", reference.name())));
                }
            }
        }
    }
    Ok(Ok(checks))
}

fn merge(seed: u64) -> Result<SeedOutcome> {
    let pop = random_population::<f64>(&params(seed))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = random_calibrated_predictor(&pop, rng.random_range(1..=5), rng.random(), Scopes::All)?;
    let q = random_calibrated_predictor(&pop, rng.random_range(1..=5), rng.random(), Scopes::All)?;
    let report = merge_oracle(&pop, &z, &q, Scopes::All)?;
    let rho = &report.result;
    for (name, base) in [("z", &z), ("q", &q)] {
        if !is_refinement(&pop, base, rho, Scope::All, 1e-10)?.is_refinement {
            return Ok(Err(format!("merge does not refine {name}")));
        }
    }
    if !check_calibration(&pop, rho, Scope::All, 1e-10)?.is_calibrated {
        return Ok(Err("merge is not calibrated".into()));
    }
    if report.info_after < report.guaranteed_gain - 1e-10 {
        return Ok(Err(format!(
            "I(merge) = {} below bound {}",
            report.info_after, report.guaranteed_gain
        )));
    }
    Ok(Ok(4))
}

fn samples(seed: u64) -> Result<SeedOutcome> {
    let budget = SampleBudget::new(0.1, 0.1, 0.05)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells: Vec<Cell<f64>> = (0..8)
        .map(|i| Cell {
            id: format!("c{i}"),
            mass: 0.125,
            group: if i < 4 { Group::A } else { Group::B },
            p_star: rng.random_range(0..=1000) as f64 / 1000.0,
        })
        .collect();
    let pop = Population::new(cells)?;
    let bit = |k: u32| move |c: &Cell<f64>| (c.id[1..].parse::<u32>().unwrap_or(0) >> k) & 1 == 1;
    let z = feature_predictor(&pop, "z", bit(0), Scopes::PerGroup)?.predictor;
    let q = feature_predictor(&pop, "q", bit(1), Scopes::PerGroup)?.predictor;
    let draws = draw_samples(&pop, budget.total as usize, rng.random())?;
    let report = merge_from_samples(&pop, &z, &q, &draws, budget, Scopes::PerGroup)?;
    let worst = report
        .crossed_cells
        .iter()
        .filter(|c| c.mass >= budget.gamma)
        .map(|c| (c.estimate.unwrap_or(f64::INFINITY) - c.p_star_mean).abs())
        .fold(0.0, f64::max);
    Ok(if worst <= budget.alpha / 2.0 {
        Ok(report.crossed_cells.len() as u64)
    } else {
        Err(format!("worst crossed-cell error {worst} above {}", budget.alpha / 2.0))
    })
}

/// Minimum fraction of successful trials for the sample suite.
pub const SAMPLE_ACCEPT_RATE: f64 = 0.93;

pub fn run(suite: Suite, seeds: u64) -> Result<SuiteReport> {
    let check = match suite {
        Suite::Improve => improve,
        Suite::Improv => improv,
        Suite::Identities => identities,
        Suite::Merge => merge,
        Suite::Samples => samples,
    };
    let mut checks = 0;
    let mut failures = Vec::new();
    for seed in 0..seeds {
        match check(seed)? {
            Ok(n) => checks += n,
            Err(message) => failures.push(Failure { seed, message }),
        }
    }
    let name = format!("{suite:?}").to_lowercase();
    let (passed, summary) = if suite == Suite::Samples {
        let rate = if seeds == 0 { 1.0 } else { (seeds - failures.len() as u64) as f64 / seeds as f64 };
        (
            rate >= SAMPLE_ACCEPT_RATE,
            format!("{:.3} of trials recovered every cell (accept >= {SAMPLE_ACCEPT_RATE})", rate),
        )
    } else {
        (
            failures.is_empty(),
            format!("{checks} checks over {seeds} seeds, {} failing seeds", failures.len()),
        )
    };
    Ok(SuiteReport {
        suite: name,
        seeds,
        checks,
        failures,
        passed,
        summary,
    })
}
