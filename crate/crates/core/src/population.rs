//! Finite weighted populations, two-group partition, predictors and the
//! score distributions they induce.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Mass sums and distribution totals must hit 1 within this bound.
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    A,
    B,
}

impl Group {
    pub const ALL: [Group; 2] = [Group::A, Group::B];

    pub fn other(self) -> Group {
        match self {
            Group::A => Group::B,
            Group::B => Group::A,
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Group::A => f.write_str("A"),
            Group::B => f.write_str("B"),
        }
    }
}

impl std::str::FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Group::A),
            "B" | "b" => Ok(Group::B),
            other => Err(Error::InvalidParameter(format!("unknown group {other:?}"))),
        }
    }
}

/// Either one group or the whole population.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    All,
    #[serde(untagged)]
    Group(Group),
}

impl Scope {
    pub fn contains(self, group: Group) -> bool {
        match self {
            Scope::All => true,
            Scope::Group(g) => g == group,
        }
    }

    pub fn groups() -> [Scope; 2] {
        [Scope::Group(Group::A), Scope::Group(Group::B)]
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::All => f.write_str("all"),
            Scope::Group(g) => write!(f, "{g}"),
        }
    }
}

impl std::str::FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" | "ALL" | "X" => Ok(Scope::All),
            other => other.parse().map(Scope::Group),
        }
    }
}

/// How an operation partitions the population: as one scope or per group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scopes {
    All,
    PerGroup,
}

impl Scopes {
    /// The scopes that carry mass in `pop`.
    pub fn resolve<T: Scalar>(self, pop: &Population<T>) -> Vec<Scope> {
        match self {
            Scopes::All => vec![Scope::All],
            Scopes::PerGroup => Group::ALL
                .into_iter()
                .filter(|g| pop.has_group(*g))
                .map(Scope::Group)
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell<T> {
    pub id: String,
    pub mass: T,
    pub group: Group,
    pub p_star: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Population<T> {
    cells: Vec<Cell<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> Population<T> {
    /// Validates masses, risks and id uniqueness.
    ///
    /// A population may leave one group empty; operations that compare the
    /// two groups reject such populations themselves.
    pub fn new(cells: Vec<Cell<T>>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::NoCells);
        }
        let mut index = HashMap::with_capacity(cells.len());
        for (i, cell) in cells.iter().enumerate() {
            if cell.mass <= T::zero() || cell.mass > T::one() {
                return Err(Error::InvalidCell {
                    id: cell.id.clone(),
                    field: "mass",
                    message: format!("must lie in (0, 1], got {}", cell.mass),
                });
            }
            if cell.p_star < T::zero() || cell.p_star > T::one() {
                return Err(Error::InvalidCell {
                    id: cell.id.clone(),
                    field: "p_star",
                    message: format!("must lie in [0, 1], got {}", cell.p_star),
                });
            }
            if index.insert(cell.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(cell.id.clone()));
            }
        }
        let total = crate::scalar::sum(cells.iter().map(|c| c.mass.clone()));
        if !total.approx_eq(&T::one(), MASS_TOLERANCE) {
            return Err(Error::MassSum {
                total: total.to_f64_lossy(),
            });
        }
        Ok(Population { cells, index })
    }

    pub fn cells(&self) -> &[Cell<T>] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Indices of the cells inside `scope`, in population order.
    pub fn scope_indices(&self, scope: Scope) -> Vec<usize> {
        (0..self.cells.len())
            .filter(|&i| scope.contains(self.cells[i].group))
            .collect()
    }

    pub fn scope_mass(&self, scope: Scope) -> T {
        crate::scalar::sum(
            self.cells
                .iter()
                .filter(|c| scope.contains(c.group))
                .map(|c| c.mass.clone()),
        )
    }

    /// Pr[x in S], erroring when the scope holds no mass.
    pub fn nonempty_scope_mass(&self, scope: Scope) -> Result<T> {
        let mass = self.scope_mass(scope);
        if mass.is_zero() {
            Err(Error::EmptyScope(scope))
        } else {
            Ok(mass)
        }
    }

    pub fn has_group(&self, group: Group) -> bool {
        self.cells.iter().any(|c| c.group == group)
    }

    pub fn require_two_groups(&self) -> Result<()> {
        for g in Group::ALL {
            if !self.has_group(g) {
                return Err(Error::NeedsTwoGroups(g));
            }
        }
        Ok(())
    }

    /// Mass-weighted mean of p* over the scope.
    pub fn base_rate(&self, scope: Scope) -> Result<T> {
        crate::scalar::weighted_mean(
            self.cells
                .iter()
                .filter(|c| scope.contains(c.group))
                .map(|c| (c.mass.clone(), c.p_star.clone())),
        )
        .ok_or(Error::EmptyScope(scope))
    }

    /// The Bayes optimal predictor, named `p_star`.
    pub fn p_star_predictor(&self) -> Predictor<T> {
        Predictor {
            name: "p_star".to_string(),
            scores: self.cells.iter().map(|c| c.p_star.clone()).collect(),
            grid: None,
        }
    }

    /// Predictor that outputs the base rate of each cell's scope.
    pub fn base_rate_predictor(&self, per_group: bool) -> Result<Predictor<T>> {
        let overall = self.base_rate(Scope::All)?;
        let mut by_group = HashMap::new();
        for g in Group::ALL {
            if self.has_group(g) {
                by_group.insert(g, self.base_rate(Scope::Group(g))?);
            }
        }
        let scores = self
            .cells
            .iter()
            .map(|c| {
                if per_group {
                    by_group[&c.group].clone()
                } else {
                    overall.clone()
                }
            })
            .collect();
        Ok(Predictor {
            name: if per_group { "base_rate_per_group" } else { "base_rate" }.to_string(),
            scores,
            grid: None,
        })
    }

    /// Mass-weighted mean of an arbitrary per-cell quantity over `cells`.
    pub fn mean_over(&self, cells: &[usize], values: &[T]) -> Option<T> {
        crate::scalar::weighted_mean(
            cells
                .iter()
                .map(|&i| (self.cells[i].mass.clone(), values[i].clone())),
        )
    }

    pub fn p_star_values(&self) -> Vec<T> {
        self.cells.iter().map(|c| c.p_star.clone()).collect()
    }

    /// Maps masses and risks into another scalar type.
    pub fn convert<U: Scalar>(&self, f: impl Fn(&T) -> U) -> Population<U> {
        Population {
            cells: self
                .cells
                .iter()
                .map(|c| Cell {
                    id: c.id.clone(),
                    mass: f(&c.mass),
                    group: c.group,
                    p_star: f(&c.p_star),
                })
                .collect(),
            index: self.index.clone(),
        }
    }
}

/// Score assignment over the cells of one population, stored in cell order.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictor<T> {
    name: String,
    scores: Vec<T>,
    grid: Option<f64>,
}

impl<T: Scalar> Predictor<T> {
    pub fn new(pop: &Population<T>, name: impl Into<String>, scores: Vec<T>) -> Result<Self> {
        let name = name.into();
        if scores.len() != pop.len() {
            return Err(Error::PredictorShape {
                predictor: name,
                expected: pop.len(),
                actual: scores.len(),
            });
        }
        for (cell, score) in pop.cells().iter().zip(&scores) {
            if *score < T::zero() || *score > T::one() {
                return Err(Error::InvalidScore {
                    predictor: name,
                    cell: cell.id.clone(),
                    score: score.to_f64_lossy(),
                    message: "outside [0, 1]".to_string(),
                });
            }
        }
        Ok(Predictor {
            name,
            scores,
            grid: None,
        })
    }

    /// Builds from an id-keyed map that must cover every cell exactly once.
    pub fn from_map<'a>(
        pop: &Population<T>,
        name: impl Into<String>,
        map: impl IntoIterator<Item = (&'a str, T)>,
    ) -> Result<Self> {
        let name = name.into();
        let mut scores: Vec<Option<T>> = vec![None; pop.len()];
        for (id, score) in map {
            let idx = pop.cell_index(id).ok_or_else(|| Error::UnknownCell {
                predictor: name.clone(),
                cell: id.to_string(),
            })?;
            scores[idx] = Some(score);
        }
        let scores = scores
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                s.ok_or_else(|| Error::MissingScore {
                    predictor: name.clone(),
                    cell: pop.cells()[i].id.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(pop, name, scores)
    }

    /// Snaps every score onto `{alpha/2, 3alpha/2, ...} ∪ {0, 1}`; scores further
    /// than `1e-9` from that grid are rejected.
    pub fn with_grid(mut self, pop: &Population<T>, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        for (i, score) in self.scores.iter_mut().enumerate() {
            match snap_to_grid::<T>(score.to_f64_lossy(), alpha, 1e-9) {
                Some(snapped) => *score = snapped,
                None => {
                    return Err(Error::InvalidScore {
                        predictor: self.name.clone(),
                        cell: pop.cells()[i].id.clone(),
                        score: score.to_f64_lossy(),
                        message: format!("off the alpha={alpha} grid"),
                    })
                }
            }
        }
        self.grid = Some(alpha);
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn scores(&self) -> &[T] {
        &self.scores
    }

    pub fn score(&self, cell: usize) -> &T {
        &self.scores[cell]
    }

    pub fn grid(&self) -> Option<f64> {
        self.grid
    }

    pub(crate) fn check_shape(&self, pop: &Population<T>) -> Result<()> {
        if self.scores.len() == pop.len() {
            Ok(())
        } else {
            Err(Error::PredictorShape {
                predictor: self.name.clone(),
                expected: pop.len(),
                actual: self.scores.len(),
            })
        }
    }

    /// Distinct scores attained inside `scope`, ascending.
    pub fn support(&self, pop: &Population<T>, scope: Scope) -> Vec<T> {
        level_sets(pop, self, scope)
            .into_iter()
            .map(|l| l.value)
            .collect()
    }

    pub fn convert<U: Scalar>(&self, f: impl Fn(&T) -> U) -> Predictor<U> {
        Predictor {
            name: self.name.clone(),
            scores: self.scores.iter().map(f).collect(),
            grid: self.grid,
        }
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Snaps `value` onto the alpha grid. Endpoints 0 and 1 are kept when
/// `value` is within `tol` of them; otherwise the nearest `(k + 1/2) * alpha`
/// is returned if it is within `tol`. An infinite `tol` always snaps and keeps
/// only exact 0 and 1.
pub(crate) fn snap_to_grid<T: Scalar>(value: f64, alpha: f64, tol: f64) -> Option<T> {
    let endpoint_tol = if tol.is_finite() { tol } else { 0.0 };
    if value.abs() <= endpoint_tol {
        return Some(T::zero());
    }
    if (1.0 - value).abs() <= endpoint_tol {
        return Some(T::one());
    }
    let steps = (1.0 / alpha).floor().max(1.0);
    let k = ((value / alpha) - 0.5).round().clamp(0.0, steps - 1.0);
    let grid_value = (k + 0.5) * alpha;
    if (grid_value - value).abs() <= tol {
        Some(grid_point::<T>(k as i64, alpha))
    } else {
        None
    }
}

/// `(k + 1/2) * alpha`, exact for the rational scalar when alpha is a short decimal.
fn grid_point<T: Scalar>(k: i64, alpha: f64) -> T {
    let alpha_t = T::from_f64_lossy(alpha);
    (T::from_ratio(2 * k + 1, 2)) * alpha_t
}

/// One level set `{x in scope : z(x) = value}`.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelSet<T> {
    pub value: T,
    pub cells: Vec<usize>,
    pub mass: T,
}

/// Level sets of `z` inside `scope`, ascending by score. Grouping uses exact
/// equality of scores.
pub fn level_sets<T: Scalar>(pop: &Population<T>, z: &Predictor<T>, scope: Scope) -> Vec<LevelSet<T>> {
    let mut idx = pop.scope_indices(scope);
    idx.sort_by(|&a, &b| {
        z.scores[a]
            .partial_cmp(&z.scores[b])
            .expect("scores are comparable")
            .then(a.cmp(&b))
    });
    let mut out: Vec<LevelSet<T>> = Vec::new();
    for i in idx {
        let score = &z.scores[i];
        let mass = pop.cells()[i].mass.clone();
        match out.last_mut() {
            Some(last) if last.value == *score => {
                last.cells.push(i);
                last.mass = last.mass.clone() + mass;
            }
            _ => out.push(LevelSet {
                value: score.clone(),
                cells: vec![i],
                mass,
            }),
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScoreDistribution<T> {
    pub predictor: String,
    pub scope: Scope,
    /// `(score, mass)` pairs, ascending by score.
    pub entries: Vec<(T, T)>,
}

impl<T: Scalar> ScoreDistribution<T> {
    pub fn mass_of(&self, value: &T) -> T {
        self.entries
            .iter()
            .find(|(v, _)| v == value)
            .map(|(_, m)| m.clone())
            .unwrap_or_else(T::zero)
    }

    pub fn total(&self) -> T {
        crate::scalar::sum(self.entries.iter().map(|(_, m)| m.clone()))
    }

    /// `E[g(v)]` under the distribution.
    pub fn expect(&self, g: impl Fn(&T) -> T) -> T {
        crate::scalar::sum(self.entries.iter().map(|(v, m)| m.clone() * g(v)))
    }
}

/// `S^z_scope(v) = Pr[z(x) = v | x in scope]`.
pub fn score_distribution<T: Scalar>(
    pop: &Population<T>,
    z: &Predictor<T>,
    scope: Scope,
) -> Result<ScoreDistribution<T>> {
    z.check_shape(pop)?;
    let total = pop.nonempty_scope_mass(scope)?;
    let entries = level_sets(pop, z, scope)
        .into_iter()
        .map(|l| (l.value, l.mass / total.clone()))
        .collect();
    Ok(ScoreDistribution {
        predictor: z.name.clone(),
        scope,
        entries,
    })
}
