//! Calibration audits and the variance- and entropy-based information
//! measures of calibrated predictors.
//!
//! Every measure here is only meaningful for a calibrated predictor, so the
//! functions refuse miscalibrated inputs with [`Error::NotCalibrated`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::population::{level_sets, Population, Predictor, Scope, Scopes};
use crate::refinement;
use crate::scalar::{four, Scalar};

/// Default calibration tolerance for exact-mode populations.
pub const DEFAULT_CALIBRATION_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelCalibration<T> {
    pub v: T,
    pub mass: T,
    pub mean_p_star: T,
    pub deviation: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalibrationReport<T> {
    pub predictor: String,
    pub scope: Scope,
    pub per_level: Vec<LevelCalibration<T>>,
    pub max_deviation: T,
    pub tolerance: f64,
    pub is_calibrated: bool,
}

/// Compares each level set's score against the mean true risk inside it.
pub fn check_calibration<T: Scalar>(
    pop: &Population<T>,
    z: &Predictor<T>,
    scope: Scope,
    tolerance: f64,
) -> Result<CalibrationReport<T>> {
    if !(tolerance >= 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be nonnegative, got {tolerance}")));
    }
    z.check_shape(pop)?;
    let total = pop.nonempty_scope_mass(scope)?;
    let p_star = pop.p_star_values();
    let mut max_deviation = T::zero();
    let per_level = level_sets(pop, z, scope)
        .into_iter()
        .map(|level| {
            let mean = pop.mean_over(&level.cells, &p_star).expect("level sets are nonempty");
            let deviation = (mean.clone() - level.value.clone()).abs();
            max_deviation = max_deviation.clone().max_of(deviation.clone());
            LevelCalibration {
                v: level.value,
                mass: level.mass / total.clone(),
                mean_p_star: mean,
                deviation,
            }
        })
        .collect();
    let is_calibrated = max_deviation.to_f64_lossy() <= tolerance;
    Ok(CalibrationReport {
        predictor: z.name().to_string(),
        scope,
        per_level,
        max_deviation,
        tolerance,
        is_calibrated,
    })
}

pub(crate) fn require_calibrated<T: Scalar>(
    pop: &Population<T>,
    z: &Predictor<T>,
    scope: Scope,
    tolerance: f64,
) -> Result<()> {
    let report = check_calibration(pop, z, scope, tolerance)?;
    if report.is_calibrated {
        Ok(())
    } else {
        Err(Error::NotCalibrated {
            predictor: z.name().to_string(),
            scope,
            max_deviation: report.max_deviation.to_f64_lossy(),
        })
    }
}

/// Replaces every level-set score within each scope by the level set's mean
/// true risk.
pub fn calibrate<T: Scalar>(pop: &Population<T>, raw: &Predictor<T>, scopes: Scopes) -> Result<Predictor<T>> {
    raw.check_shape(pop)?;
    let p_star = pop.p_star_values();
    let mut scores = raw.scores().to_vec();
    for scope in scopes.resolve(pop) {
        for level in level_sets(pop, raw, scope) {
            let mean = pop.mean_over(&level.cells, &p_star).expect("level sets are nonempty");
            for &i in &level.cells {
                scores[i] = mean.clone();
            }
        }
    }
    Predictor::new(pop, raw.name(), scores)
}

/// `I_S(z) = 1 - 4 E_{x~S}[z(x)(1 - z(x))]` at the default tolerance.
pub fn information_content<T: Scalar>(pop: &Population<T>, z: &Predictor<T>, scope: Scope) -> Result<T> {
    information_content_with(pop, z, scope, DEFAULT_CALIBRATION_TOLERANCE)
}

pub fn information_content_with<T: Scalar>(
    pop: &Population<T>,
    z: &Predictor<T>,
    scope: Scope,
    tolerance: f64,
) -> Result<T> {
    require_calibrated(pop, z, scope, tolerance)?;
    variance_content(pop, z, scope)
}

/// The content formula without the calibration precondition.
pub(crate) fn variance_content<T: Scalar>(pop: &Population<T>, z: &Predictor<T>, scope: Scope) -> Result<T> {
    let dist = crate::population::score_distribution(pop, z, scope)?;
    let spread = dist.expect(|v| v.clone() * (T::one() - v.clone()));
    Ok(T::one() - four::<T>() * spread)
}

/// An information loss value with a flag telling whether the reference is a
/// refinement of the predictor, i.e. whether the loss equals the gap in
/// information content.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Loss<T> {
    pub value: T,
    pub identity_applicable: bool,
}

/// `4 E_{x~S}[(reference(x) - z(x))^2]`.
pub fn information_loss<T: Scalar>(
    pop: &Population<T>,
    reference: &Predictor<T>,
    z: &Predictor<T>,
    scope: Scope,
) -> Result<Loss<T>> {
    reference.check_shape(pop)?;
    require_calibrated(pop, z, scope, DEFAULT_CALIBRATION_TOLERANCE)?;
    let cells = pop.scope_indices(scope);
    let sq: Vec<T> = (0..pop.len())
        .map(|i| {
            let d = reference.score(i).clone() - z.score(i).clone();
            d.clone() * d
        })
        .collect();
    let mean_sq = pop.mean_over(&cells, &sq).ok_or(Error::EmptyScope(scope))?;
    Ok(Loss {
        value: four::<T>() * mean_sq,
        identity_applicable: reference_refines(pop, z, reference, scope),
    })
}

fn reference_refines<T: Scalar>(pop: &Population<T>, z: &Predictor<T>, reference: &Predictor<T>, scope: Scope) -> bool {
    check_calibration(pop, reference, scope, DEFAULT_CALIBRATION_TOLERANCE)
        .map(|r| r.is_calibrated)
        .unwrap_or(false)
        && refinement::refinement_deviation(pop, z, reference, scope)
            .map(|d| d.to_f64_lossy() <= DEFAULT_CALIBRATION_TOLERANCE)
            .unwrap_or(false)
}

/// Binary entropy in bits, `0 log 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.log2() };
    term(p) + term(1.0 - p)
}

/// KL divergence between Bernoulli(p) and Bernoulli(q) in bits; infinite
/// when q puts zero mass on an outcome p can produce.
pub fn binary_kl(p: f64, q: f64) -> f64 {
    let term = |a: f64, b: f64| {
        if a <= 0.0 {
            0.0
        } else if b <= 0.0 {
            f64::INFINITY
        } else {
            a * (a / b).log2()
        }
    };
    term(p, q) + term(1.0 - p, 1.0 - q)
}

/// `1 - E_{x~S}[H_2(z(x))]`.
pub fn entropic_information_content<T: Scalar>(pop: &Population<T>, z: &Predictor<T>, scope: Scope) -> Result<f64> {
    require_calibrated(pop, z, scope, DEFAULT_CALIBRATION_TOLERANCE)?;
    let dist = crate::population::score_distribution(pop, z, scope)?;
    let expected: f64 = dist
        .entries
        .iter()
        .map(|(v, m)| m.to_f64_lossy() * binary_entropy(v.to_f64_lossy()))
        .sum();
    Ok(1.0 - expected)
}

/// `E_{x~S}[D_KL(reference(x); z(x))]` in bits.
pub fn entropic_information_loss<T: Scalar>(
    pop: &Population<T>,
    reference: &Predictor<T>,
    z: &Predictor<T>,
    scope: Scope,
) -> Result<Loss<f64>> {
    reference.check_shape(pop)?;
    require_calibrated(pop, z, scope, DEFAULT_CALIBRATION_TOLERANCE)?;
    let total = pop.nonempty_scope_mass(scope)?.to_f64_lossy();
    let mut acc = 0.0;
    for i in pop.scope_indices(scope) {
        let r = reference.score(i).to_f64_lossy();
        let q = z.score(i).to_f64_lossy();
        let d = binary_kl(r, q);
        if !d.is_finite() {
            return Err(Error::InfiniteDivergence {
                cell: pop.cells()[i].id.clone(),
                reference: r,
                score: q,
            });
        }
        acc += pop.cells()[i].mass.to_f64_lossy() * d;
    }
    Ok(Loss {
        value: acc / total,
        identity_applicable: reference_refines(pop, z, reference, scope),
    })
}

/// Expected normalized log-likelihood (bits) of a calibrated predictor on
/// fresh Bernoulli(p*) outcomes, which equals `I^ent_S(z) - 1`.
pub fn expected_log_likelihood<T: Scalar>(pop: &Population<T>, z: &Predictor<T>, scope: Scope) -> Result<f64> {
    Ok(entropic_information_content(pop, z, scope)? - 1.0)
}

/// Direct evaluation of `E_{x~S}[p* log z + (1 - p*) log(1 - z)]`, without
/// going through the entropy identity.
pub fn expected_log_likelihood_direct<T: Scalar>(pop: &Population<T>, z: &Predictor<T>, scope: Scope) -> Result<f64> {
    let total = pop.nonempty_scope_mass(scope)?.to_f64_lossy();
    let mut acc = 0.0;
    for i in pop.scope_indices(scope) {
        let p = pop.cells()[i].p_star.to_f64_lossy();
        let q = z.score(i).to_f64_lossy();
        acc += pop.cells()[i].mass.to_f64_lossy() * -(binary_kl(p, q) + binary_entropy(p));
    }
    Ok(acc / total)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub draws: usize,
}

/// Normalized log-likelihood over `draws` simulated `(x, y)` pairs with
/// `x ~ scope` and `y ~ Bernoulli(p*(x))`.
pub fn empirical_log_likelihood<T: Scalar>(
    pop: &Population<T>,
    z: &Predictor<T>,
    scope: Scope,
    draws: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    if draws < 2 {
        return Err(Error::InvalidParameter("need at least two draws".into()));
    }
    z.check_shape(pop)?;
    let sampler = CellSampler::new(pop, scope)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..draws {
        let i = sampler.draw(&mut rng);
        let y = rng.random::<f64>() < pop.cells()[i].p_star.to_f64_lossy();
        let q = z.score(i).to_f64_lossy();
        let ll = if y { q.log2() } else { (1.0 - q).log2() };
        sum += ll;
        sum_sq += ll * ll;
    }
    let n = draws as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok(MonteCarloEstimate {
        mean,
        std_error: (var / n).sqrt(),
        draws,
    })
}

/// Draws cell indices of one scope proportionally to mass.
pub(crate) struct CellSampler {
    cells: Vec<usize>,
    cumulative: Vec<f64>,
}

impl CellSampler {
    pub(crate) fn new<T: Scalar>(pop: &Population<T>, scope: Scope) -> Result<Self> {
        let cells = pop.scope_indices(scope);
        if cells.is_empty() {
            return Err(Error::EmptyScope(scope));
        }
        let mut acc = 0.0;
        let cumulative = cells
            .iter()
            .map(|&i| {
                acc += pop.cells()[i].mass.to_f64_lossy();
                acc
            })
            .collect();
        Ok(CellSampler { cells, cumulative })
    }

    pub(crate) fn draw(&self, rng: &mut impl Rng) -> usize {
        let total = *self.cumulative.last().expect("nonempty");
        let u = rng.random::<f64>() * total;
        let pos = self.cumulative.partition_point(|&c| c <= u).min(self.cells.len() - 1);
        self.cells[pos]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReferenceLoss<T> {
    pub reference: String,
    pub loss: Loss<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InformationReport<T> {
    pub predictor: String,
    pub scope: Scope,
    pub content: T,
    pub loss_vs: Option<ReferenceLoss<T>>,
    pub entropic_content: f64,
    pub entropic_loss_vs: Option<ReferenceLoss<f64>>,
}

/// All information measures of `z` on `scope`, with losses against
/// `reference` when given. An infinite entropic loss leaves that field empty.
pub fn information_report<T: Scalar>(
    pop: &Population<T>,
    z: &Predictor<T>,
    scope: Scope,
    reference: Option<&Predictor<T>>,
) -> Result<InformationReport<T>> {
    let content = information_content(pop, z, scope)?;
    let entropic_content = entropic_information_content(pop, z, scope)?;
    let (loss_vs, entropic_loss_vs) = match reference {
        Some(r) => (
            Some(ReferenceLoss {
                reference: r.name().to_string(),
                loss: information_loss(pop, r, z, scope)?,
            }),
            entropic_information_loss(pop, r, z, scope).ok().map(|loss| ReferenceLoss {
                reference: r.name().to_string(),
                loss,
            }),
        ),
        None => (None, None),
    };
    Ok(InformationReport {
        predictor: z.name().to_string(),
        scope,
        content,
        loss_vs,
        entropic_content,
        entropic_loss_vs,
    })
}
