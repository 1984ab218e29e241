//! Fixed worked instances and seeded random generators.
//!
//! Every generator is a pure function of its seed. Masses and risks are built
//! from integer ratios, so the rational instantiation is exact and the `f64`
//! one is the rounding of it.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::file::Instance;
use crate::population::{Cell, Group, Population, Predictor, Scope, Scopes};
use crate::scalar::Scalar;

fn cell<T: Scalar>(id: &str, mass: (i64, i64), group: Group, p_star: (i64, i64)) -> Cell<T> {
    Cell {
        id: id.to_string(),
        mass: T::from_ratio(mass.0, mass.1),
        group,
        p_star: T::from_ratio(p_star.0, p_star.1),
    }
}

fn scores<T: Scalar>(values: &[(i64, i64)]) -> Vec<T> {
    values.iter().map(|&(n, d)| T::from_ratio(n, d)).collect()
}

/// Six cells in one group with `E[p*] = 1/2`. `z` takes 1/3 on 3/5 of the
/// mass and 3/4 on the rest; `z_prime` takes 0 on 1/4 and 2/3 on 3/4.
pub fn figure1_instance<T: Scalar>() -> (Population<T>, Predictor<T>, Predictor<T>) {
    let pop = Population::new(vec![
        cell("x1", (1, 5), Group::A, (0, 1)),
        cell("x2", (1, 20), Group::A, (0, 1)),
        cell("x3", (3, 20), Group::A, (0, 1)),
        cell("x4", (1, 5), Group::A, (1, 1)),
        cell("x5", (1, 10), Group::A, (0, 1)),
        cell("x6", (3, 10), Group::A, (1, 1)),
    ])
    .expect("valid population");
    let z = Predictor::new(&pop, "z", scores(&[(1, 3), (1, 3), (1, 3), (1, 3), (3, 4), (3, 4)])).expect("shape");
    let z_prime =
        Predictor::new(&pop, "z_prime", scores(&[(0, 1), (0, 1), (2, 3), (2, 3), (2, 3), (2, 3)])).expect("shape");
    (pop, z, z_prime)
}

/// Threshold used with [`caution_calibration_instance`].
pub const CAUTION_THRESHOLD: f64 = 0.7;

/// Group A is predicted perfectly, group B gets 1/2 everywhere although half
/// of B is qualified.
pub fn caution_calibration_instance<T: Scalar>() -> (Population<T>, Predictor<T>, f64) {
    let pop = Population::new(vec![
        cell("a0", (1, 4), Group::A, (0, 1)),
        cell("a1", (1, 4), Group::A, (1, 1)),
        cell("b0", (1, 4), Group::B, (0, 1)),
        cell("b1", (1, 4), Group::B, (1, 1)),
    ])
    .expect("valid population");
    let z = Predictor::new(&pop, "z", scores(&[(0, 1), (1, 1), (1, 2), (1, 2)])).expect("shape");
    (pop, z, CAUTION_THRESHOLD)
}

/// `z_prime` refines `z` on the whole population but carries no information
/// about group A.
///
/// Reconstructed by hand: A's two cells are pooled at 1/2, and B's level sets
/// are split so that every level set of `z` keeps its mean under `z_prime`.
pub fn groupwise_loss_instance<T: Scalar>() -> (Population<T>, Predictor<T>, Predictor<T>) {
    let pop = Population::new(vec![
        cell("a1", (1, 8), Group::A, (1, 5)),
        cell("a2", (1, 8), Group::A, (4, 5)),
        cell("b1", (3, 10), Group::B, (0, 1)),
        cell("b2", (3, 40), Group::B, (1, 1)),
        cell("b3", (3, 40), Group::B, (0, 1)),
        cell("b4", (3, 10), Group::B, (1, 1)),
    ])
    .expect("valid population");
    let z = Predictor::new(&pop, "z", scores(&[(1, 5), (4, 5), (1, 5), (1, 5), (4, 5), (4, 5)])).expect("shape");
    let z_prime =
        Predictor::new(&pop, "z_prime", scores(&[(1, 2), (1, 2), (0, 1), (1, 2), (1, 2), (1, 1)])).expect("shape");
    (pop, z, z_prime)
}

pub const DEMO_NAMES: [&str; 3] = ["figure1", "caution", "groupwise"];

/// The named worked instance in population-file form.
pub fn demo_instance<T: Scalar>(name: &str) -> Result<Instance<T>> {
    match name {
        "figure1" => {
            let (pop, z, zp) = figure1_instance();
            Ok(Instance::new(pop, [z, zp]))
        }
        "caution" => {
            let (pop, z, _) = caution_calibration_instance();
            let p = pop.p_star_predictor().renamed("p_star");
            Ok(Instance::new(pop, [z, p]))
        }
        "groupwise" => {
            let (pop, z, zp) = groupwise_loss_instance();
            Ok(Instance::new(pop, [z, zp]))
        }
        other => Err(Error::InvalidParameter(format!(
            "unknown demo {other:?}, expected one of {}",
            DEMO_NAMES.join(", ")
        ))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub seed: u64,
    pub cells_per_group: usize,
    /// Non-degenerate risks are multiples of 1/1000 inside `[alpha, 1 - alpha]`.
    pub alpha: f64,
    /// Width of the band around 1/2 that non-degenerate risks are drawn from.
    pub spread: f64,
    /// Chance that a cell's risk is 0 or 1.
    pub atom_probability: f64,
    /// `Pr[x in A]`.
    pub mass_a: f64,
}

impl GeneratorParams {
    pub fn new(seed: u64) -> Self {
        GeneratorParams {
            seed,
            cells_per_group: 6,
            alpha: 0.001,
            spread: 1.0,
            atom_probability: 0.5,
            mass_a: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.cells_per_group == 0 {
            return bad("cells_per_group must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return bad(format!("alpha must lie in (0, 1/2), got {}", self.alpha));
        }
        if !(self.spread > 0.0 && self.spread <= 1.0) {
            return bad(format!("spread must lie in (0, 1], got {}", self.spread));
        }
        if !(0.0..=1.0).contains(&self.atom_probability) {
            return bad(format!("atom_probability must lie in [0, 1], got {}", self.atom_probability));
        }
        if !(self.mass_a > 0.0 && self.mass_a < 1.0) {
            return bad(format!("mass_a must lie in (0, 1), got {}", self.mass_a));
        }
        Ok(())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Risk in thousandths.
fn draw_risk(rng: &mut ChaCha8Rng, params: &GeneratorParams) -> i64 {
    if rng.random::<f64>() < params.atom_probability {
        return if rng.random::<bool>() { 1000 } else { 0 };
    }
    let lo = (params.alpha * 1000.0).ceil().max(500.0 - params.spread * 500.0).ceil() as i64;
    let hi = ((1.0 - params.alpha) * 1000.0).floor().min(500.0 + params.spread * 500.0).floor() as i64;
    if lo > hi {
        500
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Two groups of `cells_per_group` cells each with integer weights 1..=10.
///
/// Each group is forced to contain both outcomes in expectation: a group
/// whose risks came out all 0 or all 1 has its first risk reset to 1/2.
pub fn random_population<T: Scalar>(params: &GeneratorParams) -> Result<Population<T>> {
    params.validate()?;
    let mut rng = rng(params.seed);
    let share_a = T::from_f64_lossy(params.mass_a);
    let mut cells = Vec::with_capacity(2 * params.cells_per_group);
    for group in Group::ALL {
        let share = match group {
            Group::A => share_a.clone(),
            Group::B => T::one() - share_a.clone(),
        };
        let weights: Vec<i64> = (0..params.cells_per_group).map(|_| rng.random_range(1..=10)).collect();
        let mut risks: Vec<i64> = (0..params.cells_per_group).map(|_| draw_risk(&mut rng, params)).collect();
        if risks.iter().all(|&r| r == 0) || risks.iter().all(|&r| r == 1000) {
            risks[0] = 500;
        }
        let total: i64 = weights.iter().sum();
        let prefix = group.to_string().to_lowercase();
        for (i, (w, r)) in weights.into_iter().zip(risks).enumerate() {
            cells.push(Cell {
                id: format!("{prefix}{i}"),
                mass: share.clone() * T::from_ratio(w, total),
                group,
                p_star: T::from_ratio(r, 1000),
            });
        }
    }
    Population::new(cells)
}

/// Splits `items` into `parts` nonempty consecutive runs after shuffling.
fn random_blocks(rng: &mut ChaCha8Rng, mut items: Vec<usize>, parts: usize) -> Vec<Vec<usize>> {
    items.shuffle(rng);
    let n = items.len();
    let mut cuts = rand::seq::index::sample(rng, n - 1, parts - 1).into_vec();
    cuts.iter_mut().for_each(|c| *c += 1);
    cuts.sort_unstable();
    cuts.push(n);
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for c in cuts {
        out.push(items[start..c].to_vec());
        start = c;
    }
    out
}

fn assign_means<T: Scalar>(pop: &Population<T>, blocks: &[Vec<usize>], scores: &mut [T]) {
    let p_star = pop.p_star_values();
    for block in blocks {
        let mean = pop.mean_over(block, &p_star).expect("nonempty block");
        for &i in block {
            scores[i] = mean.clone();
        }
    }
}

/// Partitions each scope into `coarseness` random blocks and scores every
/// block with its mean risk, so the result is calibrated on each scope.
///
/// A coarseness of 0 or above a scope's cell count is clamped.
pub fn random_calibrated_predictor<T: Scalar>(
    pop: &Population<T>,
    coarseness: usize,
    seed: u64,
    scopes: Scopes,
) -> Result<Predictor<T>> {
    let mut rng = rng(seed);
    let mut scores = vec![T::zero(); pop.len()];
    for scope in scopes.resolve(pop) {
        let cells = pop.scope_indices(scope);
        let parts = coarseness.clamp(1, cells.len());
        if parts != coarseness {
            log::warn!("coarseness {coarseness} clamped to {parts} on {scope}");
        }
        let blocks = random_blocks(&mut rng, cells, parts);
        assign_means(pop, &blocks, &mut scores);
    }
    Predictor::new(pop, "z", scores)
}

/// Splits every level set of `z` inside each scope into up to three random
/// blocks scored with their mean risks. The result refines `z` on each scope
/// where `z` is calibrated.
pub fn random_refinement<T: Scalar>(
    pop: &Population<T>,
    z: &Predictor<T>,
    seed: u64,
    scopes: Scopes,
) -> Result<Predictor<T>> {
    let mut rng = rng(seed);
    let mut scores = vec![T::zero(); pop.len()];
    for scope in scopes.resolve(pop) {
        let mut level_sets: Vec<(T, Vec<usize>)> = Vec::new();
        for i in pop.scope_indices(scope) {
            match level_sets.iter_mut().find(|(v, _)| v == z.score(i)) {
                Some((_, cells)) => cells.push(i),
                None => level_sets.push((z.score(i).clone(), vec![i])),
            }
        }
        level_sets.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("ordered scores"));
        for (_, cells) in level_sets {
            let parts = rng.random_range(1..=cells.len().min(3));
            let blocks = random_blocks(&mut rng, cells, parts);
            assign_means(pop, &blocks, &mut scores);
        }
    }
    Predictor::new(pop, "z_prime", scores)
}

/// A random two-group instance with a calibrated `z` and a per-group
/// refinement `z_prime`, both derived from `seed`.
pub fn random_refinement_pair<T: Scalar>(
    params: &GeneratorParams,
) -> Result<(Population<T>, Predictor<T>, Predictor<T>)> {
    let pop = random_population(params)?;
    let mut rng = rng(params.seed ^ 0x9e37_79b9_7f4a_7c15);
    let coarseness = rng.random_range(1..=params.cells_per_group.min(4));
    let z = random_calibrated_predictor(&pop, coarseness, rng.random(), Scopes::PerGroup)?;
    let z_prime = random_refinement(&pop, &z, rng.random(), Scopes::PerGroup)?;
    Ok((pop, z, z_prime))
}

/// Scopes of `pop` a generated per-group predictor is calibrated on.
pub fn generated_scopes<T: Scalar>(pop: &Population<T>) -> Vec<Scope> {
    let mut out = vec![Scope::All];
    out.extend(Scopes::PerGroup.resolve(pop));
    out
}
